//! The evaluation pipelines: reconstruction-error sweep, beam-alignment
//! curves, warm-start iteration study, and the noisy-coordinate study.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hntc_core::channel::BeamId;
use hntc_core::db::{
    observe_positions, sample_observations, MeasurementDb, PosLabel, SamplingParams,
};
use hntc_core::reco::{
    bss, gbss, power_loss_probability, spectral_efficiency, type_b_baseline, RecoRequest,
};
use hntc_core::solver::HntcState;
use hntc_core::{Result, Tensor};

use crate::config::{subseed, ExperimentConfig};
use crate::output::ResultRow;
use crate::pipeline::{
    build_bundle, complete, measurement_params, nearest_copy_tensor, rse, sigma_sq_per_label,
    CompletionRun, EtaMode, SceneBundle,
};

fn push_groups(
    rows: &mut Vec<ResultRow>,
    experiment: &str,
    groups: BTreeMap<(String, String), Vec<f64>>,
) {
    for ((params, metric), values) in groups {
        rows.push(ResultRow::aggregate(experiment, params, &metric, &values));
    }
}

fn sampling_for(cfg: &ExperimentConfig, k_op: f64) -> SamplingParams {
    SamplingParams {
        k_op,
        top_fraction: cfg.top_fraction,
        alpha: cfg.alpha,
        ranking: cfg.ranking,
    }
}

fn eta_mode_for(cfg: &ExperimentConfig, bundle: &SceneBundle) -> Result<EtaMode> {
    Ok(match cfg.snr_r_db {
        Some(db) => EtaMode::NoiseBudget {
            sigma_sq_pos: sigma_sq_per_label(
                &bundle.maps,
                &cfg.grid,
                bundle.scene.spec().p_t,
                db,
            )?,
            c: cfg.eta_scale,
        },
        None => EtaMode::ExactFit,
    })
}

fn default_completion(
    cfg: &ExperimentConfig,
    bundle: &SceneBundle,
    db: &MeasurementDb,
) -> Result<(CompletionRun, Tensor, Tensor, Tensor)> {
    let (t, v, w) = db.build_tensors()?;
    let mode = eta_mode_for(cfg, bundle)?;
    let run = complete(
        &t,
        &v,
        &w,
        &cfg.hntc,
        &mode,
        cfg.norm_target_mean,
        None,
        None,
    )?;
    Ok((run, t, v, w))
}

/// Uniform weights over the observed support.
fn uniform_support_weights(w: &Tensor) -> Tensor {
    let count = w.data().iter().filter(|&&x| x > 0.0).count().max(1);
    let uni = 1.0 / count as f64;
    let mut out = w.clone();
    for v in out.data_mut() {
        if *v > 0.0 {
            *v = uni;
        }
    }
    out
}

/// Reconstruction error versus the observed-position ratio, against the
/// zero-fill and nearest-position-copy baselines. Noisy configurations also
/// run the uniform-weight ablation.
pub fn run_rse_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let experiment = "sweep-rse";
    let mut rows = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for &k_op in &cfg.k_op_list {
        for &seed in &cfg.seeds {
            let bundle = build_bundle(cfg, seed)?;
            let params = measurement_params(cfg, &bundle.maps, bundle.scene.spec().p_t);
            let db = sample_observations(
                &bundle.scene,
                &bundle.maps,
                &cfg.grid,
                &params,
                &sampling_for(cfg, k_op),
                subseed(seed, "db"),
            )?;
            let (run, t, _v, w) = default_completion(cfg, &bundle, &db)?;
            let snr = cfg
                .snr_r_db
                .map(|d| format!("{d}"))
                .unwrap_or_else(|| "none".into());
            let params_str = format!("k_op={k_op};snr_db={snr}");
            let mut emit = |metric: &str, value: f64| {
                rows.push(ResultRow::per_seed(
                    experiment,
                    params_str.clone(),
                    metric,
                    seed,
                    value,
                ));
                groups
                    .entry((params_str.clone(), metric.to_string()))
                    .or_default()
                    .push(value);
            };
            emit("rse_hntc", rse(&run.t_c, &bundle.truth)?);
            emit("rse_zero_fill", rse(&t, &bundle.truth)?);
            let nearest = nearest_copy_tensor(&db, &t)?;
            emit("rse_nearest_copy", rse(&nearest, &bundle.truth)?);
            emit("iterations", run.outcome.iterations as f64);
            emit("converged", if run.outcome.converged { 1.0 } else { 0.0 });

            if cfg.snr_r_db.is_some() {
                let (t2, v2, _) = db.build_tensors()?;
                let w_uni = uniform_support_weights(&w);
                let mode = eta_mode_for(cfg, &bundle)?;
                let run_uni = complete(
                    &t2,
                    &v2,
                    &w_uni,
                    &cfg.hntc,
                    &mode,
                    cfg.norm_target_mean,
                    None,
                    None,
                )?;
                emit("rse_hntc_uniform_w", rse(&run_uni.t_c, &bundle.truth)?);
            }
        }
    }
    push_groups(&mut rows, experiment, groups);
    Ok(rows)
}

/// Power-loss probability versus the trained-beam ratio at a fixed observed
/// ratio, plus the overhead-discounted spectral-efficiency curve.
pub fn run_beam_alignment_eval(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let experiment = "eval-beams";
    let mut rows = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let k_op = cfg.k_op_eval;
    for &seed in &cfg.seeds {
        let bundle = build_bundle(cfg, seed)?;
        let params = measurement_params(cfg, &bundle.maps, bundle.scene.spec().p_t);
        let db = sample_observations(
            &bundle.scene,
            &bundle.maps,
            &cfg.grid,
            &params,
            &sampling_for(cfg, k_op),
            subseed(seed, "db"),
        )?;
        let (run, _t, _v, _w) = default_completion(cfg, &bundle, &db)?;
        let t_c = run.t_c;
        let truth = &bundle.truth;
        let grid = &cfg.grid;
        let n_beams = bundle.bs_cb.len();

        for &k_tr in &cfg.k_tr_list {
            let n_tr = ExperimentConfig::n_tr_for(k_tr, n_beams);
            let algos: Vec<(&str, Box<dyn Fn([f64; 2]) -> Result<Vec<BeamId>>>)> = vec![
                (
                    "hntc_bss",
                    Box::new(|g| {
                        Ok(bss(&t_c, grid, &RecoRequest { g, n_tr, d: 0.0 })?.beams)
                    }),
                ),
                (
                    "genie",
                    Box::new(|g| {
                        Ok(bss(truth, grid, &RecoRequest { g, n_tr, d: 0.0 })?.beams)
                    }),
                ),
                (
                    "type_b",
                    Box::new(|g| {
                        Ok(type_b_baseline(&db, &RecoRequest { g, n_tr, d: 0.0 })?.beams)
                    }),
                ),
            ];
            for (name, reco) in algos {
                let p = power_loss_probability(
                    &bundle.maps,
                    reco,
                    cfg.trials,
                    0.0,
                    subseed(seed, &format!("pl:{name}:{k_tr}")),
                )?;
                let params_str = format!("k_op={k_op};k_tr={k_tr};algo={name}");
                rows.push(ResultRow::per_seed(
                    experiment,
                    params_str.clone(),
                    "power_loss",
                    seed,
                    p,
                ));
                groups
                    .entry((params_str, "power_loss".into()))
                    .or_default()
                    .push(p);
            }
        }

        // Spectral efficiency at the configured (k_op, k_tr_se) point.
        let n_tr_se = ExperimentConfig::n_tr_for(cfg.k_tr_se, n_beams);
        let f_size = bundle.ue_cb.len();
        let p_t = bundle.scene.spec().p_t;
        let selections: Vec<(&str, Box<dyn Fn([f64; 2]) -> Result<Vec<BeamId>>>)> = vec![
            (
                "hntc_bss",
                Box::new(|g| {
                    Ok(bss(&t_c, grid, &RecoRequest { g, n_tr: n_tr_se, d: 0.0 })?.beams)
                }),
            ),
            (
                "genie",
                Box::new(|g| {
                    Ok(bss(truth, grid, &RecoRequest { g, n_tr: n_tr_se, d: 0.0 })?.beams)
                }),
            ),
            (
                "type_b",
                Box::new(|g| {
                    Ok(type_b_baseline(&db, &RecoRequest { g, n_tr: n_tr_se, d: 0.0 })?.beams)
                }),
            ),
        ];
        for (name, reco) in selections {
            // per-coordinate beamforming gain of the best recommended pair
            let mut gains = Vec::with_capacity(bundle.maps.coords.len());
            for (ci, &g) in bundle.maps.coords.iter().enumerate() {
                let beams = reco(g)?;
                let truth_row = bundle.maps.powers_at(ci);
                let best = beams
                    .iter()
                    .map(|b| truth_row[b.flat(bundle.maps.c_theta)])
                    .fold(f64::NEG_INFINITY, f64::max);
                gains.push(best / (p_t * bundle.maps.h_norm_sq[ci]));
            }
            for &snr_db in &cfg.se_snr_db_list {
                let mean_se = gains
                    .iter()
                    .map(|&gr| spectral_efficiency(snr_db, gr, n_tr_se, f_size).se)
                    .sum::<f64>()
                    / gains.len() as f64;
                let params_str = format!(
                    "k_op={k_op};k_tr={};snr_db={snr_db};algo={name}",
                    cfg.k_tr_se
                );
                rows.push(ResultRow::per_seed(
                    experiment,
                    params_str.clone(),
                    "spectral_efficiency",
                    seed,
                    mean_se,
                ));
                groups
                    .entry((params_str, "spectral_efficiency".into()))
                    .or_default()
                    .push(mean_se);
            }
        }
        // exhaustive sweep bookkeeping: the full codebook product never fits
        // the frame
        let ex = spectral_efficiency(cfg.se_snr_db_list[0], 1.0, n_beams, f_size);
        let params_str = format!("k_op={k_op};algo=exhaustive");
        rows.push(ResultRow::per_seed(
            experiment,
            params_str.clone(),
            "infeasible",
            seed,
            if ex.infeasible { 1.0 } else { 0.0 },
        ));
        rows.push(ResultRow::per_seed(
            experiment,
            params_str,
            "spectral_efficiency",
            seed,
            ex.se,
        ));
    }
    push_groups(&mut rows, experiment, groups);
    Ok(rows)
}

/// Online updating study: iterations and reconstruction error per update
/// instant, warm starts against cold restarts.
pub fn run_warm_start_study(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let experiment = "warm-start";
    let mut rows = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for &seed in &cfg.seeds {
        let bundle = build_bundle(cfg, seed)?;
        let params = measurement_params(cfg, &bundle.maps, bundle.scene.spec().p_t);
        let sampling = sampling_for(cfg, cfg.k_ini);

        // one position permutation per seed; observation sets grow along it
        let mut labels: Vec<PosLabel> = cfg.grid.labels().collect();
        labels.sort();
        let mut perm_rng = ChaCha8Rng::seed_from_u64(subseed(seed, "warm-perm"));
        for i in 0..labels.len() {
            let j = rand::Rng::gen_range(&mut perm_rng, i..labels.len());
            labels.swap(i, j);
        }
        let n_ini = ((cfg.k_ini * labels.len() as f64).ceil() as usize).clamp(1, labels.len());

        let mut warm_state: Option<HntcState> = None;
        let mut fixed_scale: Option<f64> = None;
        for instant in 0..=cfg.n_instants {
            let count = (n_ini + instant * cfg.n_upd).min(labels.len());
            let observed: std::collections::BTreeSet<PosLabel> =
                labels[..count].iter().copied().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, "warm-meas"));
            let db = observe_positions(
                &bundle.scene,
                &bundle.maps,
                &cfg.grid,
                &params,
                &sampling,
                &observed,
                &mut rng,
            )?;
            let (t, v, w) = db.build_tensors()?;
            let mode = eta_mode_for(cfg, &bundle)?;
            if fixed_scale.is_none() {
                fixed_scale = Some(crate::pipeline::normalization_scale(
                    &t,
                    &w,
                    cfg.norm_target_mean,
                ));
            }
            let cold =
                complete(&t, &v, &w, &cfg.hntc, &mode, cfg.norm_target_mean, fixed_scale, None)?;
            // instant 0 has no prior; the warm variant coincides with cold
            let warm_run = match &warm_state {
                Some(state) => complete(
                    &t,
                    &v,
                    &w,
                    &cfg.hntc,
                    &mode,
                    cfg.norm_target_mean,
                    fixed_scale,
                    Some(state),
                )?,
                None => CompletionRun {
                    t_c: cold.t_c.clone(),
                    outcome: cold.outcome.clone(),
                    scale: cold.scale,
                },
            };
            for (variant, run) in [("cold", &cold), ("warm", &warm_run)] {
                let params_str = format!("instant={instant};variant={variant}");
                for (metric, value) in [
                    ("iterations", run.outcome.iterations as f64),
                    ("rse", rse(&run.t_c, &bundle.truth)?),
                    ("converged", if run.outcome.converged { 1.0 } else { 0.0 }),
                ] {
                    rows.push(ResultRow::per_seed(
                        experiment,
                        params_str.clone(),
                        metric,
                        seed,
                        value,
                    ));
                    groups
                        .entry((params_str.clone(), metric.to_string()))
                        .or_default()
                        .push(value);
                }
            }
            warm_state = Some(warm_run.outcome.state);
        }
    }
    push_groups(&mut rows, experiment, groups);
    Ok(rows)
}

/// Power loss under noisy positional reports, with and without grouping.
pub fn run_gps_noise_study(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let experiment = "gps-noise";
    let mut rows = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for &seed in &cfg.seeds {
        let bundle = build_bundle(cfg, seed)?;
        let params = measurement_params(cfg, &bundle.maps, bundle.scene.spec().p_t);
        let db = sample_observations(
            &bundle.scene,
            &bundle.maps,
            &cfg.grid,
            &params,
            &sampling_for(cfg, cfg.k_op_eval),
            subseed(seed, "db"),
        )?;
        let (run, _t, _v, _w) = default_completion(cfg, &bundle, &db)?;
        let t_c = run.t_c;
        let grid = &cfg.grid;
        let n_beams = bundle.bs_cb.len();

        for &d in &cfg.gps_d_list {
            for &k_tr in &cfg.gps_k_tr_list {
                let n_tr = ExperimentConfig::n_tr_for(k_tr, n_beams);
                // reported coordinates can fall outside the service area;
                // they are clamped back before labeling
                let bss_fn = |g_r: [f64; 2]| {
                    let g = grid.clamp(g_r);
                    Ok(bss(&t_c, grid, &RecoRequest { g, n_tr, d })?.beams)
                };
                let zeta = cfg.zeta;
                let gbss_fn = |g_r: [f64; 2]| {
                    let g = grid.clamp(g_r);
                    Ok(gbss(&t_c, grid, &RecoRequest { g, n_tr, d }, zeta)?.beams)
                };
                // identical perturbation stream for the two algorithms
                let pl_seed = subseed(seed, &format!("gps:{d}:{k_tr}"));
                let p_bss =
                    power_loss_probability(&bundle.maps, bss_fn, cfg.trials, d, pl_seed)?;
                let p_gbss =
                    power_loss_probability(&bundle.maps, gbss_fn, cfg.trials, d, pl_seed)?;
                for (name, p) in [("bss", p_bss), ("gbss", p_gbss)] {
                    let params_str = format!("d={d};k_tr={k_tr};algo={name}");
                    rows.push(ResultRow::per_seed(
                        experiment,
                        params_str.clone(),
                        "power_loss",
                        seed,
                        p,
                    ));
                    groups
                        .entry((params_str, "power_loss".into()))
                        .or_default()
                        .push(p);
                }
            }
        }
    }
    push_groups(&mut rows, experiment, groups);
    Ok(rows)
}

/// Count-weighted versus uniform-weight completion at one noisy operating
/// point; used by the noise-robustness check.
pub fn run_weighting_comparison(
    cfg: &ExperimentConfig,
    k_op: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut weighted = Vec::new();
    let mut uniform = Vec::new();
    for &seed in &cfg.seeds {
        let bundle = build_bundle(cfg, seed)?;
        let params = measurement_params(cfg, &bundle.maps, bundle.scene.spec().p_t);
        let db = sample_observations(
            &bundle.scene,
            &bundle.maps,
            &cfg.grid,
            &params,
            &sampling_for(cfg, k_op),
            subseed(seed, "db"),
        )?;
        let (t, v, w) = db.build_tensors()?;
        let mode = eta_mode_for(cfg, &bundle)?;
        let run_w = complete(&t, &v, &w, &cfg.hntc, &mode, cfg.norm_target_mean, None, None)?;
        weighted.push(rse(&run_w.t_c, &bundle.truth)?);
        let w_uni = uniform_support_weights(&w);
        let run_u = complete(&t, &v, &w_uni, &cfg.hntc, &mode, cfg.norm_target_mean, None, None)?;
        uniform.push(rse(&run_u.t_c, &bundle.truth)?);
    }
    Ok((weighted, uniform))
}
