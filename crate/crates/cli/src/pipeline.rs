//! Shared pipeline pieces: scene bundles, the normalized completion call,
//! reconstruction metrics, and reference baselines.

use hntc_core::channel::{
    compute_power_maps, reference_coords, MeasurementParams, PowerMaps, Scene, SceneSpec,
    UpaCodebook,
};
use hntc_core::db::{average_power_tensor, GridSpec, MeasurementDb, PosLabel};
use hntc_core::solver::{solve, solve_warm, HntcConfig, HntcProblem, HntcState, SolveOutcome};
use hntc_core::{CoreError, Result, Tensor};

use crate::config::{ExperimentConfig, Profile};

/// Everything derived from one scene realization: codebooks, ground-truth
/// power maps, and the average tensor.
pub struct SceneBundle {
    pub scene: Scene,
    pub bs_cb: UpaCodebook,
    pub ue_cb: UpaCodebook,
    pub maps: PowerMaps,
    pub truth: Tensor,
    pub grid: GridSpec,
}

pub fn scene_spec_for(cfg: &ExperimentConfig, seed: u64) -> Result<SceneSpec> {
    if let Some(path) = &cfg.scene_file {
        let text = std::fs::read_to_string(path)?;
        let spec: SceneSpec =
            toml::from_str(&text).map_err(|e| CoreError::Parse(format!("{path:?}: {e}")))?;
        return Ok(spec);
    }
    Ok(match cfg.profile {
        Profile::Desk => SceneSpec::desk(seed),
        Profile::Full => SceneSpec::full(seed),
    })
}

pub fn build_bundle(cfg: &ExperimentConfig, seed: u64) -> Result<SceneBundle> {
    let spec = scene_spec_for(cfg, seed)?;
    let scene = Scene::from_spec(spec)?;
    let bs_cb = scene.bs_codebook()?;
    let ue_cb = scene.ue_codebook()?;
    let coords = reference_coords(scene.spec(), cfg.ref_points[0], cfg.ref_points[1]);
    let maps = compute_power_maps(&scene, &coords, &bs_cb, &ue_cb)?;
    let truth = average_power_tensor(&maps, &cfg.grid)?;
    Ok(SceneBundle {
        scene,
        bs_cb,
        ue_cb,
        maps,
        truth,
        grid: cfg.grid,
    })
}

/// Measurement noise derived from the target receive SNR, or noise-free.
pub fn measurement_params(cfg: &ExperimentConfig, _maps: &PowerMaps, p_t: f64) -> MeasurementParams {
    match cfg.snr_r_db {
        Some(db) => MeasurementParams {
            p_t,
            noise: hntc_core::channel::NoiseSpec::SnrDb(db),
        },
        None => MeasurementParams::noiseless(p_t),
    }
}

/// Per-label noise variance for SNR-calibrated measurements: the mean of
/// `p_t ||H(g)||_2^2 / 10^(snr/10)` over the label's reference coordinates.
pub fn sigma_sq_per_label(
    maps: &PowerMaps,
    grid: &GridSpec,
    p_t: f64,
    snr_r_db: f64,
) -> Result<Vec<f64>> {
    let n_pos = grid.lx() * grid.ly();
    let mut sums = vec![0.0; n_pos];
    let mut counts = vec![0usize; n_pos];
    let factor = p_t / 10f64.powf(snr_r_db / 10.0);
    for (ci, &g) in maps.coords.iter().enumerate() {
        let p = hntc_core::db::pos_label(grid, g)?;
        let idx = (p.px - 1) + (p.py - 1) * grid.lx();
        sums[idx] += factor * maps.h_norm_sq[ci];
        counts[idx] += 1;
    }
    Ok(sums
        .iter()
        .zip(counts.iter())
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect())
}

/// How the error budget is chosen.
#[derive(Debug, Clone)]
pub enum EtaMode {
    /// Exact interpolation of the observed entries (noise-free data).
    ExactFit,
    /// Budget from the estimated variance of the stored averages:
    /// `eta = c * sum_psi W(psi) * (sigma^4 + 2 sigma^2 max(T - sigma^2, 0)) / V(psi)`
    /// with the per-label noise variance `sigma^2`.
    NoiseBudget { sigma_sq_pos: Vec<f64>, c: f64 },
}

pub fn eta_for(mode: &EtaMode, t: &Tensor, v: &Tensor, w: &Tensor) -> f64 {
    match mode {
        EtaMode::ExactFit => 0.0,
        EtaMode::NoiseBudget { sigma_sq_pos, c } => {
            let n_pos = sigma_sq_pos.len();
            let mut eta = 0.0;
            for i in 0..t.len() {
                let wv = w.data()[i];
                if wv <= 0.0 {
                    continue;
                }
                let s2 = sigma_sq_pos[i % n_pos];
                let signal = (t.data()[i] - s2).max(0.0);
                let var_one = s2 * s2 + 2.0 * s2 * signal;
                eta += wv * var_one / v.data()[i].max(1e-300);
            }
            c * eta
        }
    }
}

pub struct CompletionRun {
    pub t_c: Tensor,
    pub outcome: SolveOutcome,
    /// Multiplier that took raw powers into solver units.
    pub scale: f64,
}

/// Solve the completion problem in normalized units: observed entries are
/// rescaled to a fixed mean so the configured shrinkage thresholds land in
/// the regime they are calibrated for, then the result is scaled back.
pub fn complete(
    t: &Tensor,
    v: &Tensor,
    w: &Tensor,
    hntc: &HntcConfig,
    eta_mode: &EtaMode,
    norm_target_mean: f64,
    fixed_scale: Option<f64>,
    prior: Option<&HntcState>,
) -> Result<CompletionRun> {
    let scale = match fixed_scale {
        Some(s) => s,
        None => normalization_scale(t, w, norm_target_mean),
    };
    let mut ts = t.clone();
    ts.scale(scale);
    let eta_raw = eta_for(eta_mode, t, v, w);
    let mut config = hntc.clone();
    config.eta = eta_raw * scale * scale;
    let problem = HntcProblem::new(ts, w.clone(), config)?;
    let outcome = match prior {
        Some(state) => solve_warm(&problem, state)?,
        None => solve(&problem)?,
    };
    let mut t_c = outcome.t_c.clone();
    t_c.scale(1.0 / scale);
    Ok(CompletionRun {
        t_c,
        outcome,
        scale,
    })
}

/// Scale that maps the mean observed entry onto `target_mean`.
pub fn normalization_scale(t: &Tensor, w: &Tensor, target_mean: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &wv) in w.data().iter().enumerate() {
        if wv > 0.0 {
            sum += t.data()[i];
            count += 1;
        }
    }
    if count == 0 || sum <= 0.0 {
        return 1.0;
    }
    target_mean / (sum / count as f64)
}

/// Relative squared error `||t_c - t_avg||_F / ||t_avg||_F`.
pub fn rse(t_c: &Tensor, t_avg: &Tensor) -> Result<f64> {
    let denom = t_avg.frobenius();
    if denom == 0.0 {
        return Err(CoreError::InvalidConfig(
            "rse undefined for a zero ground-truth tensor".into(),
        ));
    }
    Ok(t_c.distance(t_avg)? / denom)
}

/// Baseline: keep the observed entries, leave everything else zero.
pub fn zero_fill_rse(t: &Tensor, truth: &Tensor) -> Result<f64> {
    rse(t, truth)
}

/// Baseline: every position copies the stored slice of its nearest observed
/// position (Euclidean in label space, lexicographic tie-break).
pub fn nearest_copy_tensor(db: &MeasurementDb, t: &Tensor) -> Result<Tensor> {
    let grid = *db.grid();
    let (lx, ly) = (grid.lx(), grid.ly());
    let n_beams = t.len() / (lx * ly);
    let observed = db.observed_positions();
    if observed.is_empty() {
        return Err(CoreError::EmptyDatabase);
    }
    let mut out = t.clone();
    for py in 1..=ly {
        for px in 1..=lx {
            let p = PosLabel::new(px, py);
            let nearest = observed
                .iter()
                .min_by(|a, b| {
                    a.dist_sq(p)
                        .partial_cmp(&b.dist_sq(p))
                        .unwrap()
                        .then_with(|| a.cmp(b))
                })
                .copied()
                .unwrap();
            if nearest == p {
                continue;
            }
            let src = (nearest.px - 1) + (nearest.py - 1) * lx;
            let dst = (px - 1) + (py - 1) * lx;
            for b in 0..n_beams {
                out.data_mut()[dst + b * lx * ly] = t.data()[src + b * lx * ly];
            }
        }
    }
    Ok(out)
}
