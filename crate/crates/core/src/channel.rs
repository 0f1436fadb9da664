//! Synthetic propagation scenes: geometric multipath clusters with spatially
//! correlated gain fields, uniform planar array codebooks, and noisy
//! beam-training power measurements.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cmat::ComplexMatrix;
use crate::error::{CoreError, Result};

/// Beam index `(u, v)` into a UPA codebook, 1-based as stored in the
/// measurement database. Ordering is lexicographic on `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BeamId {
    pub u: usize,
    pub v: usize,
}

impl BeamId {
    pub fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }

    /// Flat index with `u` varying fastest, matching the tensor layout of
    /// the beam dimensions.
    pub fn flat(&self, c_theta: usize) -> usize {
        (self.u - 1) + (self.v - 1) * c_theta
    }

    pub fn from_flat(idx: usize, c_theta: usize) -> Self {
        Self {
            u: idx % c_theta + 1,
            v: idx / c_theta + 1,
        }
    }
}

/// Elevation/azimuth grid `angle_i = -pi/2 + (i-1) * pi / count`, covering
/// `[-pi/2, pi/2)`.
pub fn quantized_angles(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| -PI / 2.0 + i as f64 * PI / count as f64)
        .collect()
}

/// Array response of a `c_y x c_z` UPA toward elevation `theta` and azimuth
/// `phi`, as the Kronecker product of the z-axis phasor (outer) and the
/// y-axis phasor (inner), normalized to unit 2-norm.
pub fn upa_response(theta: f64, phi: f64, c_y: usize, c_z: usize) -> Vec<Complex64> {
    let omega_z = PI * theta.sin() * phi.sin();
    let omega_y = PI * theta.sin() * phi.cos();
    response_from_phases(omega_y, omega_z, c_y, c_z)
}

/// Array response toward a unit direction with y/z components `(u_y, u_z)`
/// in the array frame; equivalent to `upa_response` at the matching angles.
fn response_from_dir(u_y: f64, u_z: f64, c_y: usize, c_z: usize) -> Vec<Complex64> {
    response_from_phases(PI * u_y, PI * u_z, c_y, c_z)
}

fn response_from_phases(omega_y: f64, omega_z: f64, c_y: usize, c_z: usize) -> Vec<Complex64> {
    let norm = 1.0 / ((c_y * c_z) as f64).sqrt();
    let mut out = Vec::with_capacity(c_y * c_z);
    for m in 0..c_z {
        for n in 0..c_y {
            let phase = m as f64 * omega_z + n as f64 * omega_y;
            out.push(Complex64::from_polar(norm, phase));
        }
    }
    out
}

/// Predesigned set of unit-norm UPA beams over the quantized angle grid,
/// indexed by `(u, v)` with `u` along elevation and `v` along azimuth.
#[derive(Debug, Clone)]
pub struct UpaCodebook {
    pub c_y: usize,
    pub c_z: usize,
    pub c_theta: usize,
    pub c_phi: usize,
    beams: Vec<Vec<Complex64>>,
}

impl UpaCodebook {
    pub fn new(c_y: usize, c_z: usize, c_theta: usize, c_phi: usize) -> Result<Self> {
        if c_y == 0 || c_z == 0 || c_theta == 0 || c_phi == 0 {
            return Err(CoreError::InvalidConfig(
                "codebook sizes must be positive".into(),
            ));
        }
        let thetas = quantized_angles(c_theta);
        let phis = quantized_angles(c_phi);
        let mut beams = Vec::with_capacity(c_theta * c_phi);
        // flat order: u fastest, matching BeamId::flat
        for &phi in &phis {
            for &theta in &thetas {
                beams.push(upa_response(theta, phi, c_y, c_z));
            }
        }
        Ok(Self {
            c_y,
            c_z,
            c_theta,
            c_phi,
            beams,
        })
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn antennas(&self) -> usize {
        self.c_y * self.c_z
    }

    pub fn beam(&self, id: BeamId) -> &[Complex64] {
        &self.beams[id.flat(self.c_theta)]
    }

    pub fn beam_flat(&self, idx: usize) -> &[Complex64] {
        &self.beams[idx]
    }

    pub fn ids(&self) -> impl Iterator<Item = BeamId> + '_ {
        (0..self.len()).map(|i| BeamId::from_flat(i, self.c_theta))
    }
}

/// One scattering cluster: a fixed 3D reflector with a deterministic
/// amplitude and a spatially correlated complex fluctuation field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub position: [f64; 3],
    pub amplitude: f64,
    /// Standard deviation of the correlated gain fluctuation; 0 makes the
    /// cluster gain a pure pathloss term.
    pub fluctuation: f64,
}

/// Scene description as persisted to the scene file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub bs_position: [f64; 3],
    pub x0: f64,
    pub x_end: f64,
    pub y0: f64,
    pub y_end: f64,
    pub ue_height: f64,
    pub clusters: Vec<ClusterSpec>,
    pub pathloss_exp: f64,
    /// Correlation length of the gain fields, meters.
    pub corr_len_m: f64,
    /// Number of random Fourier features per gain field.
    pub rff_features: usize,
    pub seed: u64,
    /// BS array (antennas along y, z).
    pub bs_array: [usize; 2],
    /// UE array (antennas along y, z).
    pub ue_array: [usize; 2],
    /// BS codebook quantization (c_theta, c_phi).
    pub bs_beams: [usize; 2],
    /// UE codebook quantization (c_theta, c_phi).
    pub ue_beams: [usize; 2],
    /// Transmit power (linear).
    pub p_t: f64,
}

impl SceneSpec {
    /// Reduced profile for fast runs: 8x8 BS array with a 64-beam codebook,
    /// 2x2 UE array with a 4-beam codebook.
    pub fn desk(seed: u64) -> Self {
        let mut spec = Self::common(seed);
        spec.bs_array = [8, 8];
        spec.bs_beams = [8, 8];
        spec.ue_array = [2, 2];
        spec.ue_beams = [2, 2];
        spec
    }

    /// Full-size profile: 16x16 BS array (256 beams), 4x4 UE (16 beams).
    pub fn full(seed: u64) -> Self {
        let mut spec = Self::common(seed);
        spec.bs_array = [16, 16];
        spec.bs_beams = [16, 16];
        spec.ue_array = [4, 4];
        spec.ue_beams = [4, 4];
        spec
    }

    fn common(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15) ^ 0x5EED);
        let n_clusters = 16;
        let clusters = (0..n_clusters)
            .map(|_| ClusterSpec {
                position: [
                    rng.gen_range(5.0..70.0),
                    rng.gen_range(-35.0..35.0),
                    rng.gen_range(3.0..25.0),
                ],
                amplitude: rng.gen_range(0.3..1.7),
                fluctuation: 0.5,
            })
            .collect();
        Self {
            bs_position: [0.0, 0.0, 10.0],
            x0: 10.0,
            x_end: 60.0,
            y0: -25.0,
            y_end: 25.0,
            ue_height: 1.5,
            clusters,
            pathloss_exp: 2.5,
            corr_len_m: 15.0,
            rff_features: 64,
            seed,
            bs_array: [16, 16],
            ue_array: [4, 4],
            bs_beams: [16, 16],
            ue_beams: [4, 4],
            p_t: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(CoreError::InvalidConfig("scene needs >= 1 cluster".into()));
        }
        if self.x_end <= self.x0 || self.y_end <= self.y0 {
            return Err(CoreError::InvalidConfig(
                "scene bounds must define a non-empty rectangle".into(),
            ));
        }
        if self.corr_len_m <= 0.0 || self.rff_features == 0 {
            return Err(CoreError::InvalidConfig(
                "correlation length and feature count must be positive".into(),
            ));
        }
        if self.p_t <= 0.0 {
            return Err(CoreError::InvalidConfig("p_t must be positive".into()));
        }
        if self.pathloss_exp < 0.0 {
            return Err(CoreError::InvalidConfig(
                "pathloss exponent must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn in_area(&self, g: [f64; 2]) -> bool {
        g[0] >= self.x0 && g[0] <= self.x_end && g[1] >= self.y0 && g[1] <= self.y_end
    }
}

/// Stationary Gaussian field sampled through random Fourier features:
/// frequency scale `1/corr_len` gives the squared-exponential kernel
/// `exp(-||d||^2 / (2 corr_len^2))` in the feature limit.
#[derive(Debug, Clone)]
struct RffField {
    freqs: Vec<[f64; 2]>,
    phases: Vec<f64>,
    coefs: Vec<f64>,
    norm: f64,
}

impl RffField {
    fn sample(rng: &mut ChaCha8Rng, features: usize, corr_len: f64) -> Self {
        let inv = 1.0 / corr_len;
        let mut freqs = Vec::with_capacity(features);
        let mut phases = Vec::with_capacity(features);
        let mut coefs = Vec::with_capacity(features);
        for _ in 0..features {
            let fx: f64 = rng.sample::<f64, _>(StandardNormal) * inv;
            let fy: f64 = rng.sample::<f64, _>(StandardNormal) * inv;
            freqs.push([fx, fy]);
            phases.push(rng.gen_range(0.0..(2.0 * PI)));
            coefs.push(rng.sample::<f64, _>(StandardNormal));
        }
        Self {
            freqs,
            phases,
            coefs,
            norm: (2.0 / features as f64).sqrt(),
        }
    }

    fn eval(&self, g: [f64; 2]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.freqs.len() {
            let arg = self.freqs[i][0] * g[0] + self.freqs[i][1] * g[1] + self.phases[i];
            acc += self.coefs[i] * arg.cos();
        }
        self.norm * acc
    }
}

#[derive(Debug, Clone)]
struct ClusterField {
    re: RffField,
    im: RffField,
}

impl ClusterField {
    fn eval(&self, g: [f64; 2]) -> Complex64 {
        Complex64::new(self.re.eval(g), self.im.eval(g)) / 2f64.sqrt()
    }
}

/// Realized scene: the description plus the sampled gain fields.
#[derive(Debug, Clone)]
pub struct Scene {
    spec: SceneSpec,
    fields: Vec<ClusterField>,
}

impl Scene {
    pub fn from_spec(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let mut fields = Vec::with_capacity(spec.clusters.len());
        for l in 0..spec.clusters.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(
                spec.seed ^ (l as u64).wrapping_mul(0xA24BAED4963EE407).wrapping_add(17),
            );
            fields.push(ClusterField {
                re: RffField::sample(&mut rng, spec.rff_features, spec.corr_len_m),
                im: RffField::sample(&mut rng, spec.rff_features, spec.corr_len_m),
            });
        }
        Ok(Self { spec, fields })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn bs_codebook(&self) -> Result<UpaCodebook> {
        UpaCodebook::new(
            self.spec.bs_array[0],
            self.spec.bs_array[1],
            self.spec.bs_beams[0],
            self.spec.bs_beams[1],
        )
    }

    pub fn ue_codebook(&self) -> Result<UpaCodebook> {
        UpaCodebook::new(
            self.spec.ue_array[0],
            self.spec.ue_array[1],
            self.spec.ue_beams[0],
            self.spec.ue_beams[1],
        )
    }

    /// BS-side unit direction (y, z components) toward cluster `l`;
    /// independent of the UE position.
    fn bs_dir(&self, l: usize) -> [f64; 2] {
        let bs = self.spec.bs_position;
        let c = self.spec.clusters[l].position;
        let d = dist3(bs, c).max(1e-6);
        [(c[1] - bs[1]) / d, (c[2] - bs[2]) / d]
    }

    /// Per-cluster complex gain and UE-side direction at `g`.
    fn cluster_terms(&self, g: [f64; 2], draw: u64) -> Result<Vec<(Complex64, [f64; 2])>> {
        if !self.spec.in_area(g) {
            return Err(CoreError::OutOfArea { x: g[0], y: g[1] });
        }
        let ue = [g[0], g[1], self.spec.ue_height];
        let bs = self.spec.bs_position;
        let mut out = Vec::with_capacity(self.spec.clusters.len());
        for (l, cluster) in self.spec.clusters.iter().enumerate() {
            let c = cluster.position;
            let d_bs = dist3(bs, c).max(1e-6);
            let d_ue = dist3(ue, c).max(1e-6);
            let pathloss = (d_bs * d_ue).powf(-self.spec.pathloss_exp / 2.0);
            let fluct = if cluster.fluctuation > 0.0 {
                Complex64::new(1.0, 0.0) + self.fields[l].eval(g) * cluster.fluctuation
            } else {
                Complex64::new(1.0, 0.0)
            };
            let mut gain = cluster.amplitude * pathloss * fluct;
            if draw > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    self.spec.seed ^ draw.wrapping_mul(0xD1B54A32D192ED03) ^ (l as u64) << 32,
                );
                gain *= Complex64::from_polar(1.0, rng.gen_range(0.0..(2.0 * PI)));
            }
            out.push((gain, [(c[1] - ue[1]) / d_ue, (c[2] - ue[2]) / d_ue]));
        }
        Ok(out)
    }

    /// Uplink channel at ground position `g`; deterministic in
    /// `(seed, g, draw)`. `draw = 0` is the primary realization; other draws
    /// rotate each cluster gain by a seed-derived unit phasor.
    pub fn channel_at(&self, g: [f64; 2], draw: u64) -> Result<ComplexMatrix> {
        let m_r = self.spec.bs_array[0] * self.spec.bs_array[1];
        let m_t = self.spec.ue_array[0] * self.spec.ue_array[1];
        let mut h = ComplexMatrix::zeros(m_r, m_t);
        let terms = self.cluster_terms(g, draw)?;
        for (l, (gain, ue_dir)) in terms.into_iter().enumerate() {
            let bs_dir = self.bs_dir(l);
            let a_r = response_from_dir(
                bs_dir[0],
                bs_dir[1],
                self.spec.bs_array[0],
                self.spec.bs_array[1],
            );
            let a_t = response_from_dir(
                ue_dir[0],
                ue_dir[1],
                self.spec.ue_array[0],
                self.spec.ue_array[1],
            );
            h.add_scaled_outer(gain, &a_r, &a_t);
        }
        Ok(h)
    }

    /// Beamformed amplitudes `sqrt(p_t) * w^H H f` for every codebook pair,
    /// as a `|W| x |F|` matrix in flat beam order.
    pub fn beam_amplitudes(
        &self,
        g: [f64; 2],
        draw: u64,
        bs_cb: &UpaCodebook,
        ue_cb: &UpaCodebook,
    ) -> Result<ComplexMatrix> {
        let h = self.channel_at(g, draw)?;
        let sqrt_pt = self.spec.p_t.sqrt();
        let mut amps = ComplexMatrix::zeros(bs_cb.len(), ue_cb.len());
        // B = H * F first, then project on every combiner.
        let m_r = h.rows();
        let mut hf = ComplexMatrix::zeros(m_r, ue_cb.len());
        for fi in 0..ue_cb.len() {
            let f = ue_cb.beam_flat(fi);
            for r in 0..m_r {
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, &fc) in f.iter().enumerate() {
                    acc += h.get(r, c) * fc;
                }
                hf.set(r, fi, acc);
            }
        }
        for wi in 0..bs_cb.len() {
            let w = bs_cb.beam_flat(wi);
            for fi in 0..ue_cb.len() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (r, &wr) in w.iter().enumerate() {
                    acc += wr.conj() * hf.get(r, fi);
                }
                amps.set(wi, fi, acc * sqrt_pt);
            }
        }
        Ok(amps)
    }
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Precomputed beam-space projections. The BS-side cluster responses do not
/// depend on the UE position, so their combiner products are shared across
/// coordinates; per-coordinate amplitude evaluation then runs in cluster
/// space instead of antenna space.
pub struct BeamspaceCache<'a> {
    scene: &'a Scene,
    bs_cb: &'a UpaCodebook,
    ue_cb: &'a UpaCodebook,
    /// `wr[l][w] = w^H a_r,l`
    wr: Vec<Vec<Complex64>>,
    /// `bs_gram[l][m] = a_r,l^H a_r,m`
    bs_gram: ComplexMatrix,
}

impl<'a> BeamspaceCache<'a> {
    pub fn new(scene: &'a Scene, bs_cb: &'a UpaCodebook, ue_cb: &'a UpaCodebook) -> Result<Self> {
        let spec = scene.spec();
        if bs_cb.antennas() != spec.bs_array[0] * spec.bs_array[1]
            || ue_cb.antennas() != spec.ue_array[0] * spec.ue_array[1]
        {
            return Err(CoreError::DimensionMismatch(
                "codebook antenna counts do not match the scene arrays".into(),
            ));
        }
        let n_clusters = spec.clusters.len();
        let mut responses = Vec::with_capacity(n_clusters);
        for l in 0..n_clusters {
            let dir = scene.bs_dir(l);
            responses.push(response_from_dir(
                dir[0],
                dir[1],
                spec.bs_array[0],
                spec.bs_array[1],
            ));
        }
        let mut wr = Vec::with_capacity(n_clusters);
        for a_r in &responses {
            let mut row = Vec::with_capacity(bs_cb.len());
            for wi in 0..bs_cb.len() {
                let w = bs_cb.beam_flat(wi);
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, &wv) in w.iter().enumerate() {
                    acc += wv.conj() * a_r[i];
                }
                row.push(acc);
            }
            wr.push(row);
        }
        let mut bs_gram = ComplexMatrix::zeros(n_clusters, n_clusters);
        for l in 0..n_clusters {
            for m in 0..n_clusters {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..responses[l].len() {
                    acc += responses[l][i].conj() * responses[m][i];
                }
                bs_gram.set(l, m, acc);
            }
        }
        Ok(Self {
            scene,
            bs_cb,
            ue_cb,
            wr,
            bs_gram,
        })
    }

    pub fn scene(&self) -> &Scene {
        self.scene
    }

    pub fn bs_cb(&self) -> &UpaCodebook {
        self.bs_cb
    }

    pub fn ue_cb(&self) -> &UpaCodebook {
        self.ue_cb
    }

    /// Same quantity as [`Scene::beam_amplitudes`], evaluated per cluster.
    pub fn amplitudes(&self, g: [f64; 2], draw: u64) -> Result<ComplexMatrix> {
        let spec = self.scene.spec();
        let terms = self.scene.cluster_terms(g, draw)?;
        let sqrt_pt = spec.p_t.sqrt();
        let n_w = self.bs_cb.len();
        let n_f = self.ue_cb.len();
        let mut amps = ComplexMatrix::zeros(n_w, n_f);
        let mut tf = vec![Complex64::new(0.0, 0.0); n_f];
        for (l, (gain, ue_dir)) in terms.into_iter().enumerate() {
            let a_t = response_from_dir(ue_dir[0], ue_dir[1], spec.ue_array[0], spec.ue_array[1]);
            for (fi, slot) in tf.iter_mut().enumerate() {
                let f = self.ue_cb.beam_flat(fi);
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, &av) in a_t.iter().enumerate() {
                    acc += av.conj() * f[i];
                }
                *slot = acc;
            }
            let g_scaled = gain * sqrt_pt;
            for wi in 0..n_w {
                let left = g_scaled * self.wr[l][wi];
                for (fi, &t) in tf.iter().enumerate() {
                    let cur = amps.get(wi, fi);
                    amps.set(wi, fi, cur + left * t);
                }
            }
        }
        Ok(amps)
    }

    /// Noiseless best-UE power per BS beam.
    pub fn noiseless_best_powers(&self, g: [f64; 2]) -> Result<Vec<f64>> {
        let amps = self.amplitudes(g, 0)?;
        Ok((0..self.bs_cb.len())
            .map(|wi| {
                (0..self.ue_cb.len())
                    .map(|fi| amps.get(wi, fi).norm_sqr())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect())
    }

    /// `||H(g)||_2^2` through the cluster-space Gram
    /// `H^H H = B (G^H R G) B^H` with `R` the cached BS response Gram.
    pub fn h_norm_sq(&self, g: [f64; 2], draw: u64) -> Result<f64> {
        let spec = self.scene.spec();
        let terms = self.scene.cluster_terms(g, draw)?;
        let n_l = terms.len();
        let m_t = spec.ue_array[0] * spec.ue_array[1];
        let mut b = Vec::with_capacity(n_l);
        let mut gains = Vec::with_capacity(n_l);
        for (gain, ue_dir) in terms {
            b.push(response_from_dir(
                ue_dir[0],
                ue_dir[1],
                spec.ue_array[0],
                spec.ue_array[1],
            ));
            gains.push(gain);
        }
        let mut mid = ComplexMatrix::zeros(n_l, n_l);
        for l in 0..n_l {
            for m in 0..n_l {
                mid.set(l, m, gains[l].conj() * self.bs_gram.get(l, m) * gains[m]);
            }
        }
        let mut gram = ComplexMatrix::zeros(m_t, m_t);
        for i in 0..m_t {
            for j in 0..m_t {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..n_l {
                    for m in 0..n_l {
                        acc += b[l][i] * mid.get(l, m) * b[m][j].conj();
                    }
                }
                gram.set(i, j, acc);
            }
        }
        // gram = H^H H is Hermitian PSD; its spectral norm is lambda_max^2
        Ok(gram.spectral_norm_sq().sqrt())
    }
}

/// Post-correlation noise model; the training-sequence correlation gain is
/// absorbed into the variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseSpec {
    Noiseless,
    /// Fixed noise variance.
    Sigma(f64),
    /// Variance derived per channel from the receive beamforming SNR:
    /// `sigma_n^2(g) = p_t ||H(g)||_2^2 / 10^(snr/10)`.
    SnrDb(f64),
}

/// Measurement parameters for the training sweeps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeasurementParams {
    pub p_t: f64,
    pub noise: NoiseSpec,
}

impl MeasurementParams {
    pub fn noiseless(p_t: f64) -> Self {
        Self {
            p_t,
            noise: NoiseSpec::Noiseless,
        }
    }

    pub fn is_noisy(&self) -> bool {
        match self.noise {
            NoiseSpec::Noiseless => false,
            NoiseSpec::Sigma(s) => s > 0.0,
            NoiseSpec::SnrDb(_) => true,
        }
    }

    /// Resolve the noise variance applying at coordinate `g`.
    pub fn sigma_n2_at(&self, cache: &BeamspaceCache, g: [f64; 2]) -> Result<f64> {
        Ok(match self.noise {
            NoiseSpec::Noiseless => 0.0,
            NoiseSpec::Sigma(s) => s,
            NoiseSpec::SnrDb(db) => {
                self.p_t * cache.h_norm_sq(g, 0)? / 10f64.powf(db / 10.0)
            }
        })
    }
}

/// Strongest received power for one BS beam at position `g`: the max over
/// the UE codebook of `|sqrt(p_t) w^H H f + n|^2` with one fresh noise draw
/// per UE beam.
pub fn measure_best_ue_power(
    cache: &BeamspaceCache,
    params: &MeasurementParams,
    beam: BeamId,
    g: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let amps = cache.amplitudes(g, 0)?;
    let sigma_n2 = params.sigma_n2_at(cache, g)?;
    Ok(best_power_row(
        &amps,
        beam.flat(cache.bs_cb().c_theta),
        sigma_n2,
        rng,
    ))
}

/// Noisy sweep over every BS beam at `g`; one noise draw per (w, f) slot.
pub fn measure_all_beams(
    cache: &BeamspaceCache,
    params: &MeasurementParams,
    g: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let amps = cache.amplitudes(g, 0)?;
    let sigma_n2 = params.sigma_n2_at(cache, g)?;
    Ok((0..cache.bs_cb().len())
        .map(|wi| best_power_row(&amps, wi, sigma_n2, rng))
        .collect())
}

fn best_power_row(amps: &ComplexMatrix, row: usize, sigma_n2: f64, rng: &mut ChaCha8Rng) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for fi in 0..amps.cols() {
        let mut z = amps.get(row, fi);
        if sigma_n2 > 0.0 {
            let s = (sigma_n2 / 2.0).sqrt();
            let nr: f64 = rng.sample(StandardNormal);
            let ni: f64 = rng.sample(StandardNormal);
            z += Complex64::new(s * nr, s * ni);
        }
        best = best.max(z.norm_sqr());
    }
    best
}

/// Ground-truth evaluation grid: noiseless best-UE powers and channel
/// spectral norms at every reference coordinate.
#[derive(Debug, Clone)]
pub struct PowerMaps {
    pub coords: Vec<[f64; 2]>,
    pub c_theta: usize,
    pub c_phi: usize,
    /// Coordinate-major, beam-flat-minor noiseless powers.
    pub power: Vec<f64>,
    /// `||H(g)||_2^2` per coordinate.
    pub h_norm_sq: Vec<f64>,
}

impl PowerMaps {
    pub fn n_beams(&self) -> usize {
        self.c_theta * self.c_phi
    }

    pub fn powers_at(&self, coord_idx: usize) -> &[f64] {
        let nb = self.n_beams();
        &self.power[coord_idx * nb..(coord_idx + 1) * nb]
    }

    /// Mean spectral-norm gain over the reference grid, used to calibrate
    /// the noise variance for a target receive beamforming SNR
    /// `10 log10(p_t ||H||_2^2 / sigma_n^2)`.
    pub fn sigma_n2_for_snr(&self, p_t: f64, snr_r_db: f64) -> f64 {
        let mean_h: f64 = self.h_norm_sq.iter().sum::<f64>() / self.h_norm_sq.len() as f64;
        p_t * mean_h / 10f64.powf(snr_r_db / 10.0)
    }
}

/// Uniform inclusive lattice of reference coordinates over the scene area.
pub fn reference_coords(spec: &SceneSpec, nx: usize, ny: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let x = if nx == 1 {
                spec.x0
            } else {
                spec.x0 + (spec.x_end - spec.x0) * ix as f64 / (nx - 1) as f64
            };
            let y = if ny == 1 {
                spec.y0
            } else {
                spec.y0 + (spec.y_end - spec.y0) * iy as f64 / (ny - 1) as f64
            };
            out.push([x, y]);
        }
    }
    out
}

/// Evaluate the noiseless ground truth on a coordinate set.
pub fn compute_power_maps(
    scene: &Scene,
    coords: &[[f64; 2]],
    bs_cb: &UpaCodebook,
    ue_cb: &UpaCodebook,
) -> Result<PowerMaps> {
    let cache = BeamspaceCache::new(scene, bs_cb, ue_cb)?;
    let mut power = Vec::with_capacity(coords.len() * bs_cb.len());
    let mut h_norm_sq = Vec::with_capacity(coords.len());
    for &g in coords {
        power.extend(cache.noiseless_best_powers(g)?);
        h_norm_sq.push(cache.h_norm_sq(g, 0)?);
    }
    Ok(PowerMaps {
        coords: coords.to_vec(),
        c_theta: bs_cb.c_theta,
        c_phi: bs_cb.c_phi,
        power,
        h_norm_sq,
    })
}
