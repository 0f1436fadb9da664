use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hntc_cli::config::{ExperimentConfig, Profile};
use hntc_cli::experiments::{
    run_beam_alignment_eval, run_gps_noise_study, run_rse_sweep, run_warm_start_study,
};
use hntc_cli::output::{write_experiment, ResultRow};
use hntc_cli::pipeline::{
    build_bundle, complete, measurement_params, scene_spec_for, EtaMode,
};
use hntc_core::db::MeasurementDb;
use hntc_core::reco::{bss, gbss, RecoRequest};
use hntc_core::{CoreError, Result, Tensor};

#[derive(Parser)]
#[command(
    name = "hntc",
    about = "Position-aided MIMO beam training via noisy tensor completion",
    version
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Experiment configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (or the HNTC_OUT_DIR environment variable).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Comma-separated trial seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Array/codebook preset: desk | full.
    #[arg(long, global = true)]
    profile: Option<Profile>,
    /// Receive-SNR (dB) of collected measurements; omit for noise-free.
    #[arg(long, global = true)]
    snr_r_db: Option<f64>,
    /// Power-loss events per seed.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Comma-separated observed-position ratios.
    #[arg(long, global = true, value_delimiter = ',')]
    k_op_list: Option<Vec<f64>>,
    /// Comma-separated trained-beam ratios.
    #[arg(long, global = true, value_delimiter = ',')]
    k_tr_list: Option<Vec<f64>>,
    /// Scene file used by the experiment pipelines instead of per-seed
    /// generated scenes.
    #[arg(long, global = true)]
    scene_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scene description file.
    GenScene {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the ground-truth average power tensor and cache it.
    GenTruth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a measurement database from a scene.
    SampleDb {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        k_op: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the completion solver on a database file.
    Complete {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional per-iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Absolute error budget; omitted means exact fit on observations.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Recommend beams for one query position from a completed tensor.
    Recommend {
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long, default_value_t = 5)]
        n_tr: usize,
        /// Positional error radius (m); grouping kicks in when positive.
        #[arg(long, default_value_t = 0.0)]
        d: f64,
        #[arg(long, default_value_t = false)]
        gbss: bool,
    },
    /// Reconstruction error versus observed-position ratio.
    SweepRse,
    /// Power-loss and spectral-efficiency curves.
    EvalBeams,
    /// Warm-start versus cold-start iteration study.
    WarmStart,
    /// Noisy-coordinate study (BSS versus G-BSS).
    GpsNoise,
}

fn effective_config(over: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match &over.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &over.out_dir {
        cfg.out_dir = dir.clone();
    } else if let Ok(dir) = std::env::var("HNTC_OUT_DIR") {
        cfg.out_dir = PathBuf::from(dir);
    }
    if let Some(seeds) = &over.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(profile) = over.profile {
        cfg.profile = profile;
    }
    if over.snr_r_db.is_some() {
        cfg.snr_r_db = over.snr_r_db;
    }
    if let Some(trials) = over.trials {
        cfg.trials = trials;
    }
    if let Some(list) = &over.k_op_list {
        cfg.k_op_list = list.clone();
    }
    if let Some(list) = &over.k_tr_list {
        cfg.k_tr_list = list.clone();
    }
    if let Some(path) = &over.scene_file {
        cfg.scene_file = Some(path.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_experiment(
    name: &str,
    cfg: &ExperimentConfig,
    rows: Vec<ResultRow>,
) -> Result<()> {
    let config_text = cfg.to_toml()?;
    write_experiment(&cfg.out_dir, name, &rows, &config_text, &cfg.seeds)?;
    println!(
        "{name}: {} rows -> {}",
        rows.len(),
        cfg.out_dir.join(format!("{name}.csv")).display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScene { seed, out } => {
            let mut cfg = effective_config(&cli.overrides)?;
            cfg.scene_file = None;
            let spec = scene_spec_for(&cfg, seed)?;
            let text = toml::to_string_pretty(&spec)
                .map_err(|e| CoreError::Parse(e.to_string()))?;
            std::fs::write(&out, text)?;
            println!("scene -> {}", out.display());
        }
        Command::GenTruth { scene, out } => {
            let mut cfg = effective_config(&cli.overrides)?;
            cfg.scene_file = Some(scene);
            let bundle = build_bundle(&cfg, 0)?;
            let mut w = BufWriter::new(File::create(&out)?);
            bundle.truth.write_to(&mut w)?;
            w.flush()?;
            println!(
                "truth tensor {:?} -> {}",
                bundle.truth.shape(),
                out.display()
            );
        }
        Command::SampleDb {
            scene,
            k_op,
            seed,
            out,
        } => {
            let mut cfg = effective_config(&cli.overrides)?;
            cfg.scene_file = Some(scene);
            let bundle = build_bundle(&cfg, seed)?;
            let params = measurement_params(&cfg, &bundle.maps, bundle.scene.spec().p_t);
            let sampling = hntc_core::db::SamplingParams {
                k_op,
                top_fraction: cfg.top_fraction,
                alpha: cfg.alpha,
                ranking: cfg.ranking,
            };
            let db = hntc_core::db::sample_observations(
                &bundle.scene,
                &bundle.maps,
                &cfg.grid,
                &params,
                &sampling,
                seed,
            )?;
            let mut w = BufWriter::new(File::create(&out)?);
            db.write_to(&mut w)?;
            w.flush()?;
            println!(
                "db: {} rows over {} positions -> {}",
                db.len(),
                db.observed_positions().len(),
                out.display()
            );
        }
        Command::Complete {
            db,
            out,
            trace,
            eta,
        } => {
            let cfg = effective_config(&cli.overrides)?;
            let mut reader = BufReader::new(File::open(&db)?);
            let db = MeasurementDb::read_from(&mut reader)?;
            let (t, v, w) = db.build_tensors()?;
            let hntc = cfg.hntc.clone();
            // an absolute budget flag bypasses the variance estimator,
            // which needs scene knowledge the db file does not carry
            let run = if let Some(eta_abs) = eta {
                let scale =
                    hntc_cli::pipeline::normalization_scale(&t, &w, cfg.norm_target_mean);
                let mut scaled_cfg = hntc;
                scaled_cfg.eta = eta_abs * scale * scale;
                let mut ts = t.clone();
                ts.scale(scale);
                let problem = hntc_core::solver::HntcProblem::new(ts, w.clone(), scaled_cfg)?;
                let outcome = hntc_core::solver::solve(&problem)?;
                let mut t_c = outcome.t_c.clone();
                t_c.scale(1.0 / scale);
                hntc_cli::pipeline::CompletionRun {
                    t_c,
                    outcome,
                    scale,
                }
            } else {
                complete(
                    &t,
                    &v,
                    &w,
                    &hntc,
                    &EtaMode::ExactFit,
                    cfg.norm_target_mean,
                    None,
                    None,
                )?
            };
            let mut writer = BufWriter::new(File::create(&out)?);
            run.t_c.write_to(&mut writer)?;
            writer.flush()?;
            if let Some(trace_path) = trace {
                let mut tw = BufWriter::new(File::create(&trace_path)?);
                writeln!(tw, "iter,primal_gap,constraint_value,mu")?;
                for row in &run.outcome.trace {
                    writeln!(
                        tw,
                        "{},{},{},{}",
                        row.iter, row.primal_gap, row.constraint_value, row.mu
                    )?;
                }
                tw.flush()?;
            }
            println!(
                "completed in {} iterations (converged: {}) -> {}",
                run.outcome.iterations,
                run.outcome.converged,
                out.display()
            );
            if !run.outcome.converged {
                return Err(CoreError::InvalidConfig(
                    "solver hit the iteration cap without meeting the stop criteria".into(),
                ));
            }
        }
        Command::Recommend {
            tensor,
            x,
            y,
            n_tr,
            d,
            gbss: use_gbss,
        } => {
            let cfg = effective_config(&cli.overrides)?;
            let mut reader = BufReader::new(File::open(&tensor)?);
            let t_c = Tensor::read_from(&mut reader)?;
            let request = RecoRequest { g: [x, y], n_tr, d };
            let result = if use_gbss {
                gbss(&t_c, &cfg.grid, &request, cfg.zeta)?
            } else {
                bss(&t_c, &cfg.grid, &request)?
            };
            println!("u,v,score");
            for (beam, score) in result.beams.iter().zip(result.scores.iter()) {
                println!("{},{},{score}", beam.u, beam.v);
            }
        }
        Command::SweepRse => {
            let cfg = effective_config(&cli.overrides)?;
            let rows = run_rse_sweep(&cfg)?;
            run_experiment("sweep-rse", &cfg, rows)?;
        }
        Command::EvalBeams => {
            let cfg = effective_config(&cli.overrides)?;
            let rows = run_beam_alignment_eval(&cfg)?;
            run_experiment("eval-beams", &cfg, rows)?;
        }
        Command::WarmStart => {
            let cfg = effective_config(&cli.overrides)?;
            let rows = run_warm_start_study(&cfg)?;
            run_experiment("warm-start", &cfg, rows)?;
        }
        Command::GpsNoise => {
            let cfg = effective_config(&cli.overrides)?;
            let rows = run_gps_noise_study(&cfg)?;
            run_experiment("gps-noise", &cfg, rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
