//! Parameter sweeps behind the validation tests, with CSV and SVG output.
//!
//! Every sweep returns a [`SweepResult`]: one row per swept value, sorted by
//! that value, each tagged with the solver iteration count and residual.
//! Rows that fail keep their slot with `NaN` values and an error message so
//! a single bad solve never aborts a sweep.

mod experiments;
pub mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{StanceConfig, Vec3};

pub use experiments::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// `amplitude · sin(2π frequency t)` along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub axis: Axis,
    pub amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub com: Vec3,
    pub acc: Vec3,
}

/// Prescribed CoM motion sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub stance: StanceConfig,
    /// CoM position the sinusoids oscillate about.
    pub center: Vec3,
    pub motion: Vec<Sinusoid>,
    pub duration: f64,
    pub sample_rate: f64,
}

impl Scenario {
    pub fn new(
        name: &str,
        stance: StanceConfig,
        center: Vec3,
        motion: Vec<Sinusoid>,
        duration: f64,
        sample_rate: f64,
    ) -> Result<Self> {
        let s = Self {
            name: name.to_string(),
            stance,
            center,
            motion,
            duration,
            sample_rate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.duration > 0.0 && self.duration.is_finite(), "duration", || {
            format!("must be > 0, got {}", self.duration)
        })?;
        ensure(self.sample_rate > 0.0 && self.sample_rate.is_finite(), "sample_rate", || {
            format!("must be > 0, got {}", self.sample_rate)
        })?;
        ensure(self.center.iter().all(|v| v.is_finite()), "center", || "must be finite".into())?;
        for m in &self.motion {
            ensure(m.amplitude.is_finite() && m.frequency.is_finite() && m.frequency >= 0.0, "motion", || {
                format!("bad sinusoid {m:?}")
            })?;
        }
        ensure(self.frame_count() >= 1, "duration", || "shorter than one sample".into())
    }

    /// Lateral 0.08 m at 0.3 Hz plus fore-aft 0.05 m at 0.22 Hz about a CoM
    /// at `height` over the stance centroid, over one lateral period at 60 Hz.
    pub fn sway(stance: StanceConfig, height: f64) -> Result<Self> {
        let c = stance.centroid();
        Self::new(
            "sway",
            stance,
            Vec3::new(c.x, c.y, height),
            vec![
                Sinusoid {
                    axis: Axis::Y,
                    amplitude: 0.08,
                    frequency: 0.3,
                },
                Sinusoid {
                    axis: Axis::X,
                    amplitude: 0.05,
                    frequency: 0.22,
                },
            ],
            1.0 / 0.3,
            60.0,
        )
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn frames(&self) -> Vec<Frame> {
        (0..self.frame_count())
            .map(|k| {
                let t = k as f64 / self.sample_rate;
                let mut com = self.center;
                let mut acc = Vec3::zeros();
                for m in &self.motion {
                    let w = 2.0 * std::f64::consts::PI * m.frequency;
                    let s = m.amplitude * (w * t).sin();
                    com[m.axis.index()] += s;
                    acc[m.axis.index()] -= w * w * s;
                }
                Frame { t, com, acc }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    /// One entry per [`SweepResult::columns`].
    pub values: Vec<f64>,
    pub solver_iters: usize,
    pub residual: f64,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(param: f64, width: usize, err: &Error) -> Self {
        Self {
            param,
            values: vec![f64::NAN; width],
            solver_iters: 0,
            residual: f64::NAN,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub test: String,
    pub param_name: String,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub fitted: BTreeMap<String, f64>,
    /// Analytic reference values drawn next to the measured curve.
    pub overlays: BTreeMap<String, f64>,
}

impl SweepResult {
    pub fn new(test: &str, param_name: &str, columns: &[&str], mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(|a, b| a.param.total_cmp(&b.param));
        Self {
            test: test.to_string(),
            param_name: param_name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows,
            fitted: BTreeMap::new(),
            overlays: BTreeMap::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| (r.param, r.values[j])).collect())
    }

    /// Finite points of a column.
    pub fn finite_column(&self, name: &str) -> Vec<(f64, f64)> {
        self.column(name)
            .unwrap_or_default()
            .into_iter()
            .filter(|p| p.1.is_finite())
            .collect()
    }

    pub fn value_at(&self, name: &str, param: f64) -> Option<f64> {
        self.column(name)?
            .into_iter()
            .find(|p| (p.0 - param).abs() <= 1e-9 * param.abs().max(1.0))
            .map(|p| p.1)
    }

    pub fn errors(&self) -> Vec<(f64, &str)> {
        self.rows
            .iter()
            .filter_map(|r| r.error.as_deref().map(|e| (r.param, e)))
            .collect()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec![self.param_name.clone()];
        h.extend(self.columns.iter().cloned());
        h.push("solver_iters".into());
        h.push("residual".into());
        h
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header()).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.param.to_string()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            rec.push(r.solver_iters.to_string());
            rec.push(r.residual.to_string());
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads back a CSV written by [`SweepResult::write_csv`]. Fits and
    /// overlays are not stored in the CSV and come back empty.
    pub fn read_csv<R: std::io::Read>(test: &str, r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
        if header.len() < 3 || header[header.len() - 2] != "solver_iters" || header[header.len() - 1] != "residual" {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let width = header.len() - 3;
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let num = |j: usize| -> Result<f64> {
                rec[j]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: column {}: {e}", i + 1, header[j])))
            };
            let values = (1..=width).map(num).collect::<Result<Vec<_>>>()?;
            let iters = rec[width + 1]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("row {}: solver_iters: {e}", i + 1)))?;
            rows.push(SweepRow {
                param: num(0)?,
                values,
                solver_iters: iters,
                residual: num(width + 2)?,
                error: None,
            });
        }
        let cols: Vec<&str> = header[1..=width].iter().map(String::as_str).collect();
        Ok(Self::new(test, &header[0], &cols, rows))
    }

    /// `key=value` lines for the fitted constants and overlays.
    pub fn summary(&self) -> String {
        let mut s = format!("test={}\nrows={}\nfailed_rows={}\n", self.test, self.rows.len(), self.errors().len());
        for (k, v) in &self.fitted {
            s.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in &self.overlays {
            s.push_str(&format!("overlay_{k}={v}\n"));
        }
        s
    }

    /// Writes `<test>.csv`, `<test>_summary.txt`, `<test>_<stamp>.svg` and,
    /// when rows failed, `<test>_errors.csv`. Returns the paths written.
    pub fn write_artifacts(&self, dir: &Path, stamp: &str, plot: &svg::PlotSpec) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let csv_path = dir.join(format!("{}.csv", self.test));
        self.write_csv(fs::File::create(&csv_path)?)?;
        written.push(csv_path);
        let sum = dir.join(format!("{}_summary.txt", self.test));
        fs::write(&sum, self.summary())?;
        written.push(sum);
        let svg_path = dir.join(format!("{}_{stamp}.svg", self.test));
        fs::write(&svg_path, svg::render(self, plot))?;
        written.push(svg_path);
        let errs = self.errors();
        if !errs.is_empty() {
            let p = dir.join(format!("{}_errors.csv", self.test));
            let mut w = csv::Writer::from_path(&p).map_err(csv_err)?;
            w.write_record([self.param_name.as_str(), "error"]).map_err(csv_err)?;
            for (param, e) in errs {
                w.write_record([param.to_string().as_str(), e]).map_err(csv_err)?;
            }
            w.flush()?;
            written.push(p);
        }
        Ok(written)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Picks `k` distinct row indices with a seeded generator.
pub fn spot_check_indices(n_rows: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n_rows, k.min(n_rows)).into_vec();
    idx.sort_unstable();
    idx
}

/// Largest relative difference between stored rows and a recomputation.
pub fn spot_check<F>(result: &SweepResult, k: usize, seed: u64, mut recompute: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<SweepRow>,
{
    let mut worst = 0.0f64;
    for i in spot_check_indices(result.rows.len(), k, seed) {
        let stored = &result.rows[i];
        if stored.error.is_some() {
            continue;
        }
        let fresh = recompute(stored.param)?;
        for (a, b) in stored.values.iter().zip(&fresh.values) {
            if a.is_nan() && b.is_nan() {
                continue;
            }
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
        }
    }
    Ok(worst)
}

/// `α ≥ 4γ / σ_min²`: where the `γ/(α σ²)` expansion is within 25% per mode.
pub fn asymptotic_threshold(sigma_min: f64, gamma: f64) -> f64 {
    4.0 * gamma / (sigma_min * sigma_min)
}

/// Geometric mean of `α y / γ` over the points: the constant `K` in `y ≈ γK/α`.
pub fn fit_inverse_constant(points: &[(f64, f64)], gamma: f64) -> Result<f64> {
    ensure(!points.is_empty(), "points", || "empty".into())?;
    ensure(points.iter().all(|p| p.0 > 0.0 && p.1 > 0.0), "points", || "values must be positive".into())?;
    let mean_log = points.iter().map(|&(a, y)| (a * y / gamma).ln()).sum::<f64>() / points.len() as f64;
    Ok(mean_log.exp())
}

/// Seconds since the Unix epoch, used to stamp plot files.
pub fn timestamp() -> String {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_else(|_| "0".into())
}
