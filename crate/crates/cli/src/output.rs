//! Result rows, CSV emission, and the JSON run manifest.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use hntc_core::Result;

/// One emitted measurement: either a per-seed value or an aggregate with
/// trial statistics.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    /// `key=value` pairs joined by `;`, fixed order per experiment.
    pub params: String,
    pub metric: String,
    pub seed: Option<u64>,
    pub value: Option<f64>,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub n: Option<usize>,
}

impl ResultRow {
    pub fn per_seed(experiment: &str, params: String, metric: &str, seed: u64, value: f64) -> Self {
        Self {
            experiment: experiment.into(),
            params,
            metric: metric.into(),
            seed: Some(seed),
            value: Some(value),
            mean: None,
            stderr: None,
            n: None,
        }
    }

    pub fn aggregate(experiment: &str, params: String, metric: &str, values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            experiment: experiment.into(),
            params,
            metric: metric.into(),
            seed: None,
            value: None,
            mean: Some(mean),
            stderr: Some(stderr),
            n: Some(n),
        }
    }
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_csv<W: Write>(w: &mut W, rows: &[ResultRow]) -> Result<()> {
    writeln!(w, "experiment,params,metric,seed,value,mean,stderr,n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.experiment,
            r.params,
            r.metric,
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            fmt_opt_f64(r.value),
            fmt_opt_f64(r.mean),
            fmt_opt_f64(r.stderr),
            r.n.map(|n| n.to_string()).unwrap_or_default(),
        )?;
    }
    Ok(())
}

/// FNV-1a over the canonical config text; recorded in the manifest so a
/// result set can be tied back to the exact configuration.
pub fn config_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub experiment: &'a str,
    pub version: &'a str,
    pub config_hash: String,
    pub seeds: &'a [u64],
    pub rows: usize,
    pub csv: String,
}

/// Write `<name>.csv` and `<name>.manifest.json` under `dir`.
pub fn write_experiment(
    dir: &Path,
    name: &str,
    rows: &[ResultRow],
    config_text: &str,
    seeds: &[u64],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{name}.csv"));
    let mut csv = Vec::new();
    write_csv(&mut csv, rows)?;
    std::fs::write(&csv_path, &csv)?;
    let manifest = Manifest {
        experiment: name,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: format!("{:016x}", config_hash(config_text)),
        seeds,
        rows: rows.len(),
        csv: csv_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| hntc_core::CoreError::Parse(e.to_string()))?;
    std::fs::write(dir.join(format!("{name}.manifest.json")), json)?;
    Ok(())
}
