//! Cloud-side measurement database: position labeling over the discretized
//! service area, discounted running averages per (position, beam), and
//! construction of the data/count/weight tensors.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{measure_all_beams, BeamId, BeamspaceCache, MeasurementParams, PowerMaps, Scene};
use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Discretization of the rectangular region `[x0, x_end] x [y0, y_end]` with
/// resolution `delta_s`. Label counts cover every label reachable by
/// rounding, i.e. `1 + round(span / delta_s)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x0: f64,
    pub x_end: f64,
    pub y0: f64,
    pub y_end: f64,
    pub delta_s: f64,
}

impl GridSpec {
    pub fn new(x0: f64, x_end: f64, y0: f64, y_end: f64, delta_s: f64) -> Result<Self> {
        if delta_s <= 0.0 {
            return Err(CoreError::InvalidConfig("delta_s must be positive".into()));
        }
        if x_end < x0 || y_end < y0 {
            return Err(CoreError::InvalidConfig(
                "grid bounds must satisfy x_end >= x0, y_end >= y0".into(),
            ));
        }
        Ok(Self {
            x0,
            x_end,
            y0,
            y_end,
            delta_s,
        })
    }

    /// Default geometry: `[10, 60] x [-25, 25]` meters at 5 m resolution,
    /// an 11 x 11 label grid.
    pub fn default_area() -> Self {
        Self {
            x0: 10.0,
            x_end: 60.0,
            y0: -25.0,
            y_end: 25.0,
            delta_s: 5.0,
        }
    }

    pub fn lx(&self) -> usize {
        1 + ((self.x_end - self.x0) / self.delta_s).round() as usize
    }

    pub fn ly(&self) -> usize {
        1 + ((self.y_end - self.y0) / self.delta_s).round() as usize
    }

    pub fn n_labels(&self) -> usize {
        self.lx() * self.ly()
    }

    pub fn contains(&self, g: [f64; 2]) -> bool {
        g[0] >= self.x0 && g[0] <= self.x_end && g[1] >= self.y0 && g[1] <= self.y_end
    }

    /// Clamp a coordinate into the rectangle.
    pub fn clamp(&self, g: [f64; 2]) -> [f64; 2] {
        [
            g[0].clamp(self.x0, self.x_end),
            g[1].clamp(self.y0, self.y_end),
        ]
    }

    /// Nominal coordinate of a label.
    pub fn label_coord(&self, p: PosLabel) -> [f64; 2] {
        [
            self.x0 + (p.px - 1) as f64 * self.delta_s,
            self.y0 + (p.py - 1) as f64 * self.delta_s,
        ]
    }

    /// Euclidean distance from `g` to the set of in-area coordinates that
    /// map to label `p` (the label's rounding cell clipped to the area).
    pub fn cell_distance(&self, p: PosLabel, g: [f64; 2]) -> f64 {
        let c = self.label_coord(p);
        let half = self.delta_s / 2.0;
        let x_lo = (c[0] - half).max(self.x0);
        let x_hi = (c[0] + half).min(self.x_end);
        let y_lo = (c[1] - half).max(self.y0);
        let y_hi = (c[1] + half).min(self.y_end);
        let dx = (x_lo - g[0]).max(0.0).max(g[0] - x_hi);
        let dy = (y_lo - g[1]).max(0.0).max(g[1] - y_hi);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn labels(&self) -> impl Iterator<Item = PosLabel> + '_ {
        let (lx, ly) = (self.lx(), self.ly());
        (1..=lx).flat_map(move |px| (1..=ly).map(move |py| PosLabel { px, py }))
    }
}

/// 1-based position label, ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PosLabel {
    pub px: usize,
    pub py: usize,
}

impl PosLabel {
    pub fn new(px: usize, py: usize) -> Self {
        Self { px, py }
    }

    pub fn dist_sq(&self, other: PosLabel) -> f64 {
        let dx = self.px as f64 - other.px as f64;
        let dy = self.py as f64 - other.py as f64;
        dx * dx + dy * dy
    }
}

/// Nearest discretized label of an in-area coordinate:
/// `p = (1 + round((g_x - x0)/delta), 1 + round((g_y - y0)/delta))`.
/// Out-of-area coordinates are an error, not a clamp.
pub fn pos_label(grid: &GridSpec, g: [f64; 2]) -> Result<PosLabel> {
    if !grid.contains(g) {
        return Err(CoreError::OutOfArea { x: g[0], y: g[1] });
    }
    Ok(PosLabel {
        px: 1 + ((g[0] - grid.x0) / grid.delta_s).round() as usize,
        py: 1 + ((g[1] - grid.y0) / grid.delta_s).round() as usize,
    })
}

/// Stored aggregate for one (position, beam) key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbRecord {
    pub r_bar: f64,
    pub n_bar: f64,
}

/// Keyed store of discounted power averages, one row per (position, beam).
#[derive(Debug, Clone)]
pub struct MeasurementDb {
    grid: GridSpec,
    c_theta: usize,
    c_phi: usize,
    records: BTreeMap<(PosLabel, BeamId), DbRecord>,
}

impl MeasurementDb {
    pub fn new(grid: GridSpec, c_theta: usize, c_phi: usize) -> Self {
        Self {
            grid,
            c_theta,
            c_phi,
            records: BTreeMap::new(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn beam_dims(&self) -> (usize, usize) {
        (self.c_theta, self.c_phi)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, p: PosLabel, beam: BeamId) -> Option<DbRecord> {
        self.records.get(&(p, beam)).copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&(PosLabel, BeamId), &DbRecord)> {
        self.records.iter()
    }

    /// Distinct positions with at least one stored beam, in label order.
    pub fn observed_positions(&self) -> Vec<PosLabel> {
        let mut out: Vec<PosLabel> = Vec::new();
        for ((p, _), _) in self.records.iter() {
            if out.last() != Some(p) {
                out.push(*p);
            }
        }
        out
    }

    /// Stored beams at one position, sorted by decreasing average power with
    /// lexicographic beam order breaking ties.
    pub fn beams_at(&self, p: PosLabel) -> Vec<(BeamId, DbRecord)> {
        let mut rows: Vec<(BeamId, DbRecord)> = self
            .records
            .range((p, BeamId::new(0, 0))..=(p, BeamId::new(usize::MAX, usize::MAX)))
            .map(|((_, b), rec)| (*b, *rec))
            .collect();
        rows.sort_by(|a, b| {
            b.1.r_bar
                .partial_cmp(&a.1.r_bar)
                .unwrap()
                .then_with(|| a.0.cmp(&b.0))
        });
        rows
    }

    /// Discounted online update for one new measurement:
    /// `n_bar <- alpha * n_bar + 1`, then
    /// `r_bar <- r_bar + (r - r_bar) / n_bar`. With `alpha = 1` the stored
    /// average is the sample mean of every measurement so far.
    pub fn record(&mut self, p: PosLabel, beam: BeamId, r: f64, alpha: f64) -> Result<DbRecord> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(CoreError::InvalidConfig(format!(
                "discount alpha must be in (0, 1], got {alpha}"
            )));
        }
        if r < 0.0 {
            return Err(CoreError::InvalidConfig(
                "received power must be non-negative".into(),
            ));
        }
        let entry = self
            .records
            .entry((p, beam))
            .or_insert(DbRecord { r_bar: 0.0, n_bar: 0.0 });
        entry.n_bar = alpha * entry.n_bar + 1.0;
        entry.r_bar += (r - entry.r_bar) / entry.n_bar;
        Ok(*entry)
    }

    /// Data tensor `T` (zeros off the support), count tensor `V`, and
    /// normalized weight tensor `W = V / sum(V)`, all of shape
    /// `(L_x, L_y, C_theta, C_phi)`.
    pub fn build_tensors(&self) -> Result<(Tensor, Tensor, Tensor)> {
        if self.records.is_empty() {
            return Err(CoreError::EmptyDatabase);
        }
        let shape = vec![self.grid.lx(), self.grid.ly(), self.c_theta, self.c_phi];
        let mut t = Tensor::zeros(shape.clone());
        let mut v = Tensor::zeros(shape.clone());
        for ((p, beam), rec) in self.records.iter() {
            let off = self.tensor_offset(*p, *beam);
            t.data_mut()[off] = rec.r_bar;
            v.data_mut()[off] = rec.n_bar;
        }
        let total: f64 = v.data().iter().sum();
        let mut w = v.clone();
        w.scale(1.0 / total);
        Ok((t, v, w))
    }

    pub fn tensor_offset(&self, p: PosLabel, beam: BeamId) -> usize {
        let lx = self.grid.lx();
        let ly = self.grid.ly();
        (p.px - 1)
            + (p.py - 1) * lx
            + (beam.u - 1) * lx * ly
            + (beam.v - 1) * lx * ly * self.c_theta
    }

    // ── Text persistence ────────────────────────────────────────────────
    //
    // Comment header with the grid and beam dimensions, then CSV rows
    // (p_x, p_y, u, v, r_bar, n_bar) in key order.

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# hntc measurement db v1")?;
        writeln!(
            w,
            "# grid x0={} x_end={} y0={} y_end={} delta_s={}",
            self.grid.x0, self.grid.x_end, self.grid.y0, self.grid.y_end, self.grid.delta_s
        )?;
        writeln!(w, "# beams c_theta={} c_phi={}", self.c_theta, self.c_phi)?;
        writeln!(w, "p_x,p_y,u,v,r_bar,n_bar")?;
        for ((p, b), rec) in self.records.iter() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.px, p.py, b.u, b.v, rec.r_bar, rec.n_bar
            )?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<MeasurementDb> {
        let mut grid: Option<GridSpec> = None;
        let mut beams: Option<(usize, usize)> = None;
        let mut records = BTreeMap::new();
        let mut saw_header = false;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(spec) = rest.strip_prefix("grid ") {
                    let mut vals = [0.0f64; 5];
                    for (i, key) in ["x0", "x_end", "y0", "y_end", "delta_s"].iter().enumerate() {
                        vals[i] = parse_kv(spec, key)?;
                    }
                    grid = Some(GridSpec::new(vals[0], vals[1], vals[2], vals[3], vals[4])?);
                } else if let Some(spec) = rest.strip_prefix("beams ") {
                    let ct = parse_kv(spec, "c_theta")? as usize;
                    let cp = parse_kv(spec, "c_phi")? as usize;
                    beams = Some((ct, cp));
                }
                continue;
            }
            if !saw_header {
                if line != "p_x,p_y,u,v,r_bar,n_bar" {
                    return Err(CoreError::Parse(format!("unexpected db header: {line}")));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(CoreError::Parse(format!("bad db row: {line}")));
            }
            let parse_usize = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| CoreError::Parse(format!("{s}: {e}")))
            };
            let parse_f64 = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| CoreError::Parse(format!("{s}: {e}")))
            };
            let p = PosLabel::new(parse_usize(fields[0])?, parse_usize(fields[1])?);
            let b = BeamId::new(parse_usize(fields[2])?, parse_usize(fields[3])?);
            records.insert(
                (p, b),
                DbRecord {
                    r_bar: parse_f64(fields[4])?,
                    n_bar: parse_f64(fields[5])?,
                },
            );
        }
        let grid = grid.ok_or_else(|| CoreError::Parse("db file missing grid header".into()))?;
        let (c_theta, c_phi) =
            beams.ok_or_else(|| CoreError::Parse("db file missing beams header".into()))?;
        Ok(MeasurementDb {
            grid,
            c_theta,
            c_phi,
            records,
        })
    }
}

fn parse_kv(spec: &str, key: &str) -> Result<f64> {
    for token in spec.split_whitespace() {
        if let Some(v) = token.strip_prefix(&format!("{key}=")) {
            return v
                .parse::<f64>()
                .map_err(|e| CoreError::Parse(format!("{key}: {e}")));
        }
    }
    Err(CoreError::Parse(format!("missing {key} in db header")))
}

/// How the top beams per observed coordinate are ranked before storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopBeamRanking {
    /// Rank on the measured (possibly noisy) power; the realistic ingestion
    /// path and the default.
    Measured,
    /// Rank on the noiseless ground-truth power.
    Noiseless,
}

/// Observation-sampling knobs: fraction of observed positions, fraction of
/// stored beams per coordinate, and the discount.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplingParams {
    pub k_op: f64,
    pub top_fraction: f64,
    pub alpha: f64,
    pub ranking: TopBeamRanking,
}

impl SamplingParams {
    pub fn noiseless_defaults(k_op: f64) -> Self {
        Self {
            k_op,
            top_fraction: 0.1,
            alpha: 1.0,
            ranking: TopBeamRanking::Measured,
        }
    }
}

/// Draw `ceil(k_op * L_x * L_y)` position labels uniformly without
/// replacement.
pub fn draw_observed_positions(
    grid: &GridSpec,
    k_op: f64,
    rng: &mut ChaCha8Rng,
) -> Result<std::collections::BTreeSet<PosLabel>> {
    if !(k_op > 0.0 && k_op <= 1.0) {
        return Err(CoreError::InvalidConfig(format!(
            "k_op must be in (0, 1], got {k_op}"
        )));
    }
    let mut labels: Vec<PosLabel> = grid.labels().collect();
    labels.sort(); // deterministic base order before the shuffle
    let n_observe = (k_op * labels.len() as f64).ceil() as usize;
    let n_observe = n_observe.clamp(1, labels.len());
    // partial Fisher-Yates: the first n_observe slots are a uniform draw
    // without replacement
    for i in 0..n_observe {
        let j = rng.gen_range(i..labels.len());
        labels.swap(i, j);
    }
    Ok(labels[..n_observe].iter().copied().collect())
}

/// Ingest measurements for an explicit observed-position set: every
/// reference coordinate mapping to one contributes its top `top_fraction`
/// beams, ranked per `sampling.ranking`.
pub fn observe_positions(
    scene: &Scene,
    maps: &PowerMaps,
    grid: &GridSpec,
    params: &MeasurementParams,
    sampling: &SamplingParams,
    observed: &std::collections::BTreeSet<PosLabel>,
    rng: &mut ChaCha8Rng,
) -> Result<MeasurementDb> {
    if !(sampling.top_fraction > 0.0 && sampling.top_fraction <= 1.0) {
        return Err(CoreError::InvalidConfig(format!(
            "top_fraction must be in (0, 1], got {}",
            sampling.top_fraction
        )));
    }
    let bs_cb = scene.bs_codebook()?;
    let ue_cb = scene.ue_codebook()?;
    if (bs_cb.c_theta, bs_cb.c_phi) != (maps.c_theta, maps.c_phi) {
        return Err(CoreError::DimensionMismatch(
            "power maps do not match the scene codebook".into(),
        ));
    }
    let cache = BeamspaceCache::new(scene, &bs_cb, &ue_cb)?;
    let n_beams = maps.n_beams();
    let top_count = ((sampling.top_fraction * n_beams as f64).ceil() as usize).clamp(1, n_beams);

    let mut db = MeasurementDb::new(*grid, maps.c_theta, maps.c_phi);
    for (ci, &g) in maps.coords.iter().enumerate() {
        let label = pos_label(grid, g)?;
        if !observed.contains(&label) {
            continue;
        }
        let noiseless = maps.powers_at(ci);
        let measured: Vec<f64> = if params.is_noisy() {
            measure_all_beams(&cache, params, g, rng)?
        } else {
            noiseless.to_vec()
        };
        let rank_source: &[f64] = match sampling.ranking {
            TopBeamRanking::Measured => &measured,
            TopBeamRanking::Noiseless => noiseless,
        };
        let mut order: Vec<usize> = (0..n_beams).collect();
        order.sort_by(|&a, &b| {
            rank_source[b]
                .partial_cmp(&rank_source[a])
                .unwrap()
                .then_with(|| {
                    BeamId::from_flat(a, maps.c_theta).cmp(&BeamId::from_flat(b, maps.c_theta))
                })
        });
        for &flat in order.iter().take(top_count) {
            let beam = BeamId::from_flat(flat, maps.c_theta);
            db.record(label, beam, measured[flat], sampling.alpha)?;
        }
    }
    if db.is_empty() {
        return Err(CoreError::EmptyDatabase);
    }
    Ok(db)
}

/// Populate a database per the evaluation protocol: `ceil(k_op * L_x * L_y)`
/// positions drawn uniformly without replacement; every reference coordinate
/// mapping to an observed position contributes its top `top_fraction` beams.
pub fn sample_observations(
    scene: &Scene,
    maps: &PowerMaps,
    grid: &GridSpec,
    params: &MeasurementParams,
    sampling: &SamplingParams,
    seed: u64,
) -> Result<MeasurementDb> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed = draw_observed_positions(grid, sampling.k_op, &mut rng)?;
    observe_positions(scene, maps, grid, params, sampling, &observed, &mut rng)
}

/// Ground-truth average tensor: the mean noiseless best-UE power over the
/// reference coordinates of each position label, for every beam.
pub fn average_power_tensor(maps: &PowerMaps, grid: &GridSpec) -> Result<Tensor> {
    let (lx, ly) = (grid.lx(), grid.ly());
    let nb = maps.n_beams();
    let shape = vec![lx, ly, maps.c_theta, maps.c_phi];
    let mut sums = Tensor::zeros(shape.clone());
    let mut counts = vec![0usize; lx * ly];
    for (ci, &g) in maps.coords.iter().enumerate() {
        let p = pos_label(grid, g)?;
        let base = (p.px - 1) + (p.py - 1) * lx;
        counts[base] += 1;
        let row = maps.powers_at(ci);
        for (b, &val) in row.iter().enumerate() {
            sums.data_mut()[base + b * lx * ly] += val;
        }
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(CoreError::InvalidConfig(
            "reference coordinates do not cover every position label".into(),
        ));
    }
    for p in 0..lx * ly {
        let inv = 1.0 / counts[p] as f64;
        for b in 0..nb {
            sums.data_mut()[p + b * lx * ly] *= inv;
        }
    }
    Ok(sums)
}
