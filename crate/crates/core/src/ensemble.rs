//! Multi-run ensembles and the statistics of their resistivity series.
//!
//! Run `r` of an ensemble uses seed `base_seed ^ r`. Each run writes its own
//! directory; statistics are computed from the written scalar series, so a
//! finished ensemble can be re-analysed from disk with identical results.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_ur;

use crate::config::RunConfig;
use crate::driver::{execute_run, SCALARS_FILE};
use crate::error::{Error, Result};
use crate::io::{self, FileEntry};

/// Slope rule used by [`hermite_align`], recorded in manifests.
pub const INTERPOLATION_ID: &str = "pchip/fritsch-butland-v1";

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_WINDOW: usize = 10;
const MIN_CHI2_SAMPLES: usize = 20;
const MIN_CHI2_BINS: usize = 4;
const MIN_EXPECTED: f64 = 5.0;

/// Monotone Hermite slopes at the knots `(t, y)`.
///
/// Interior slopes are weighted harmonic means of the adjacent secants, or
/// zero at local extrema; end slopes use the one-sided three-point formula
/// limited to preserve monotonicity.
pub fn pchip_slopes(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = y.windows(2).zip(&h).map(|(w, h)| (w[1] - w[0]) / h).collect();
    if n == 2 {
        return vec![d[0]; 2];
    }
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        let (d0, d1) = (d[k - 1], d[k]);
        if d0 == 0.0 || d1 == 0.0 || d0.signum() != d1.signum() {
            continue;
        }
        let w1 = 2.0 * h[k] + h[k - 1];
        let w2 = h[k] + 2.0 * h[k - 1];
        m[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

/// Evaluates the monotone cubic Hermite interpolant of `(t, y)` at `grid`.
pub fn pchip_eval(t: &[f64], y: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    if t.len() != y.len() || t.is_empty() {
        return Err(Error::Shape(format!("{} knots but {} values", t.len(), y.len())));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Range("knot times must be strictly increasing".into()));
    }
    let (lo, hi) = (t[0], t[t.len() - 1]);
    let m = pchip_slopes(t, y);
    grid.iter()
        .map(|&x| {
            if !(x >= lo && x <= hi) {
                return Err(Error::Range(format!("time {x} lies outside the sampled span [{lo}, {hi}]")));
            }
            let k = match t.partition_point(|&s| s <= x) {
                0 => 0,
                p => (p - 1).min(t.len().saturating_sub(2)),
            };
            if t.len() == 1 {
                return Ok(y[0]);
            }
            let h = t[k + 1] - t[k];
            let s = (x - t[k]) / h;
            let (s2, s3) = (s * s, s * s * s);
            Ok((2.0 * s3 - 3.0 * s2 + 1.0) * y[k]
                + (s3 - 2.0 * s2 + s) * h * m[k]
                + (-2.0 * s3 + 3.0 * s2) * y[k + 1]
                + (s3 - s2) * h * m[k + 1])
        })
        .collect()
}

/// Interpolates every run's `(t, value)` samples onto `grid`.
///
/// Non-finite samples are dropped first. Returns a runs-by-times matrix.
pub fn hermite_align(series: &[(Vec<f64>, Vec<f64>)], grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Range("alignment grid must be strictly increasing".into()));
    }
    series
        .iter()
        .map(|(t, y)| {
            let (t, y): (Vec<f64>, Vec<f64>) = t
                .iter()
                .zip(y)
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .map(|(a, b)| (*a, *b))
                .unzip();
            pchip_eval(&t, &y, grid)
        })
        .collect()
}

/// Moments of one time sample across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub mean: f64,
    /// Sample standard deviation (divisor `R - 1`).
    pub std: f64,
    /// `m3 / m2^1.5` with divisor `R`; NaN when degenerate.
    pub skew: f64,
    /// Raw kurtosis `m4 / m2^2` (3 for a Gaussian); NaN when degenerate.
    pub kurt: f64,
    /// Set when all values coincide.
    pub degenerate: bool,
}

impl MomentStats {
    pub fn excess_kurt(&self) -> f64 {
        self.kurt - 3.0
    }
}

/// Mean, standard deviation, skewness and kurtosis of `values`.
pub fn moments(values: &[f64]) -> Result<MomentStats> {
    let r = values.len();
    if r < 2 {
        return Err(Error::Range(format!("statistics need at least 2 values, got {r}")));
    }
    let n = r as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let degenerate = values.iter().all(|&v| v == values[0]) || m2 == 0.0;
    let std = if degenerate { 0.0 } else { (m2 / (n - 1.0)).sqrt() };
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let (skew, kurt) = if degenerate {
        (f64::NAN, f64::NAN)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };
    Ok(MomentStats {
        mean,
        std,
        skew,
        kurt,
        degenerate,
    })
}

/// Per-time moments of a runs-by-times matrix.
pub fn ensemble_stats(aligned: &[Vec<f64>]) -> Result<Vec<MomentStats>> {
    let n_t = aligned.first().map_or(0, Vec::len);
    if aligned.iter().any(|row| row.len() != n_t) {
        return Err(Error::Shape("aligned runs have different lengths".into()));
    }
    (0..n_t)
        .map(|i| moments(&aligned.iter().map(|row| row[i]).collect::<Vec<_>>()))
        .collect()
}

/// `(value - mean) / std` per time sample; NaN where degenerate.
pub fn standardize(aligned: &[Vec<f64>], stats: &[MomentStats]) -> Vec<Vec<f64>> {
    aligned
        .iter()
        .map(|row| {
            row.iter()
                .zip(stats)
                .map(|(v, s)| if s.degenerate { f64::NAN } else { (v - s.mean) / s.std })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Bins actually used after any reduction.
    pub bins: usize,
    pub observed: Vec<usize>,
    pub expected: f64,
    /// Interior bin edges (standard normal quantiles).
    pub edges: Vec<f64>,
}

/// Upper-tail probability of a chi-square variable.
pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(0.5 * dof as f64, 0.5 * statistic)
}

/// Goodness of fit of `z` to the standard normal with equal-probability bins.
///
/// When a bin would expect fewer than 5 samples the bin count is reduced to
/// `floor(N / 5)`; fewer than 4 bins is an error.
pub fn chi_square_gaussian_test(z: &[f64], n_bins: usize, level: f64) -> Result<ChiSquareResult> {
    let n = z.len();
    if n < MIN_CHI2_SAMPLES {
        return Err(Error::Range(format!(
            "the chi-square test needs at least {MIN_CHI2_SAMPLES} samples, got {n}"
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("non-finite standardized value".into()));
    }
    let mut bins = n_bins;
    if (n as f64) / (bins as f64) < MIN_EXPECTED {
        bins = (n as f64 / MIN_EXPECTED).floor() as usize;
    }
    if bins < MIN_CHI2_BINS {
        return Err(Error::Range(format!("only {bins} chi-square bins available (need {MIN_CHI2_BINS})")));
    }
    let normal = Normal::standard();
    let edges: Vec<f64> = (1..bins).map(|i| normal.inverse_cdf(i as f64 / bins as f64)).collect();
    let mut observed = vec![0usize; bins];
    for &v in z {
        observed[edges.partition_point(|&e| e <= v)] += 1;
    }
    let expected = n as f64 / bins as f64;
    let statistic = observed
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum::<f64>();
    let p_value = chi_square_sf(statistic, bins - 1);
    Ok(ChiSquareResult {
        statistic,
        p_value,
        reject: p_value < level,
        bins,
        observed,
        expected,
        edges,
    })
}

/// Standardized values of a trailing window of `window` time samples ending
/// at `end`, pooled over runs.
pub fn pooled_window(z: &[Vec<f64>], end: usize, window: usize) -> Vec<f64> {
    let start = (end + 1).saturating_sub(window);
    z.iter().flat_map(|row| row[start..=end].iter().copied()).collect()
}

/// Aligned ensemble with per-time statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSeries {
    pub grid: Vec<f64>,
    /// Runs by times.
    pub aligned: Vec<Vec<f64>>,
    pub stats: Vec<MomentStats>,
    /// Standardized values, runs by times.
    pub z: Vec<Vec<f64>>,
}

impl EnsembleSeries {
    pub fn new(series: &[(Vec<f64>, Vec<f64>)], grid: Vec<f64>) -> Result<Self> {
        if series.len() < 2 {
            return Err(Error::Range(format!("an ensemble needs at least 2 runs, got {}", series.len())));
        }
        let aligned = hermite_align(series, &grid)?;
        let stats = ensemble_stats(&aligned)?;
        let z = standardize(&aligned, &stats);
        Ok(EnsembleSeries { grid, aligned, stats, z })
    }

    pub fn runs(&self) -> usize {
        self.aligned.len()
    }

    /// Chi-square result on the trailing pooled window ending at each time;
    /// `None` where the window is degenerate or too small.
    pub fn chi_square_series(&self, window: usize, n_bins: usize) -> Vec<Option<ChiSquareResult>> {
        (0..self.grid.len())
            .map(|i| chi_square_gaussian_test(&pooled_window(&self.z, i, window), n_bins, 0.05).ok())
            .collect()
    }

    /// Rows of the stats CSV.
    pub fn stats_rows(&self, window: usize, n_bins: usize) -> Vec<Vec<f64>> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        self.chi_square_series(window, n_bins)
            .into_iter()
            .zip(&self.stats)
            .zip(&self.grid)
            .map(|((chi, s), &t)| {
                let (chi2, p) = chi.as_ref().map_or((f64::NAN, f64::NAN), |c| (c.statistic, c.p_value));
                let rej = |level: f64| if p.is_nan() { f64::NAN } else { flag(p < level) };
                vec![
                    t,
                    s.mean,
                    s.std,
                    s.skew,
                    s.kurt,
                    s.excess_kurt(),
                    chi2,
                    p,
                    rej(0.05),
                    rej(0.01),
                    flag(s.degenerate),
                ]
            })
            .collect()
    }
}

pub const STATS_HEADER: [&str; 11] = [
    "t",
    "mean",
    "std",
    "skew",
    "kurt",
    "excess_kurt",
    "chi2",
    "p",
    "reject05",
    "reject01",
    "degenerate",
];

/// Common grid with spacing `dt` covering the span shared by all runs.
pub fn common_grid(series: &[(Vec<f64>, Vec<f64>)], dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("grid spacing must be positive, got {dt}")));
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (t, y) in series {
        let finite: Vec<f64> = t
            .iter()
            .zip(y)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, _)| *a)
            .collect();
        let (Some(first), Some(last)) = (finite.first(), finite.last()) else {
            return Err(Error::Range("a run has no finite samples".into()));
        };
        lo = lo.max(*first);
        hi = hi.min(*last);
    }
    if !(hi > lo) {
        return Err(Error::Range(format!("runs share no common time span ({lo} to {hi})")));
    }
    let n = ((hi - lo) / dt * (1.0 + 1e-12)).floor() as usize;
    Ok((0..=n).map(|i| (lo + i as f64 * dt).min(hi)).collect())
}

/// Options of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub runs: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses the default pool width.
    pub workers: usize,
    /// Alignment grid spacing; defaults to the first run's median step.
    pub grid_dt: Option<f64>,
    pub bins: usize,
    /// Time samples pooled per chi-square test.
    pub window: usize,
    /// Start times of windows written as pooled histograms.
    pub histogram_windows: Vec<f64>,
    /// Give every run the base seed (for degenerate-ensemble checks).
    pub same_seed: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            runs: 2,
            base_seed: 0,
            workers: 0,
            grid_dt: None,
            bins: DEFAULT_BINS,
            window: DEFAULT_WINDOW,
            histogram_windows: Vec::new(),
            same_seed: false,
        }
    }
}

impl EnsembleOptions {
    pub fn seed(&self, run: usize) -> u64 {
        if self.same_seed {
            self.base_seed
        } else {
            self.base_seed ^ run as u64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run: usize,
    pub seed: u64,
    pub dir: PathBuf,
    pub status: String,
}

/// Manifest of an ensemble directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub code_version: String,
    pub base_seed: u64,
    pub runs: Vec<RunEntry>,
    pub config_hash: String,
    pub options: EnsembleOptions,
    pub interpolation: String,
    pub seed_rule: String,
    pub status: String,
    pub files: Vec<FileEntry>,
}

pub const ENSEMBLE_MANIFEST: &str = "ensemble.json";
pub const STATS_FILE: &str = "stats.csv";

fn run_dir(run: usize) -> PathBuf {
    PathBuf::from(format!("run_{run:04}"))
}

/// Reads `(t, eta)` from a run's scalar CSV.
pub fn load_eta_series(dir: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let path = dir.join(SCALARS_FILE);
    let (header, rows) = io::read_csv(&path)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(&path, format!("missing column {name}")))
    };
    let (it, ie) = (col("t")?, col("eta")?);
    Ok(rows.iter().map(|r| (r[it], r[ie])).unzip())
}

/// Runs all members, then writes the statistics.
pub fn run_ensemble(config: &RunConfig, options: &EnsembleOptions, dir: &Path) -> Result<EnsembleSeries> {
    if options.runs < 2 {
        return Err(Error::Config(format!("an ensemble needs at least 2 runs, got {}", options.runs)));
    }
    io::create_dir(dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<()>> = pool.install(|| {
        (0..options.runs)
            .into_par_iter()
            .map(|r| {
                let mut cfg = config.clone();
                cfg.seed = options.seed(r);
                execute_run(&cfg, &dir.join(run_dir(r)))
                    .map(|_| ())
                    .map_err(|e| Error::EnsembleRun {
                        run: r,
                        source: Box::new(e),
                    })
            })
            .collect()
    });
    let mut manifest = EnsembleManifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        base_seed: options.base_seed,
        runs: results
            .iter()
            .enumerate()
            .map(|(r, res)| RunEntry {
                run: r,
                seed: options.seed(r),
                dir: run_dir(r),
                status: match res {
                    Ok(()) => "completed".into(),
                    Err(e) => format!("failed: {e}"),
                },
            })
            .collect(),
        config_hash: config.hash(),
        options: options.clone(),
        interpolation: INTERPOLATION_ID.into(),
        seed_rule: "seed_r = base_seed XOR r".into(),
        status: "runs-completed".into(),
        files: Vec::new(),
    };
    if let Some(err) = results.into_iter().find_map(Result::err) {
        manifest.status = "failed".into();
        io::write_json(&dir.join(ENSEMBLE_MANIFEST), &manifest)?;
        return Err(err);
    }
    io::write_json(&dir.join(ENSEMBLE_MANIFEST), &manifest)?;
    analyze_ensemble(dir)
}

/// Recomputes statistics of a finished ensemble directory and rewrites its
/// stats, histograms and manifest.
pub fn analyze_ensemble(dir: &Path) -> Result<EnsembleSeries> {
    let manifest_path = dir.join(ENSEMBLE_MANIFEST);
    let mut manifest: EnsembleManifest = io::read_json(&manifest_path)?;
    if manifest.runs.iter().any(|r| r.status != "completed") {
        return Err(Error::format(&manifest_path, "ensemble has failed runs"));
    }
    let series = manifest
        .runs
        .iter()
        .map(|r| load_eta_series(&dir.join(&r.dir)))
        .collect::<Result<Vec<_>>>()?;
    let opts = &manifest.options;
    let grid_dt = match opts.grid_dt {
        Some(dt) => dt,
        None => median_step(&series[0].0)?,
    };
    let ens = EnsembleSeries::new(&series, common_grid(&series, grid_dt)?)?;
    let mut files = vec![PathBuf::from(STATS_FILE)];
    io::write_csv(&dir.join(STATS_FILE), &STATS_HEADER, ens.stats_rows(opts.window, opts.bins))?;
    for &t0 in &opts.histogram_windows {
        let start = ens.grid.partition_point(|&t| t < t0 - 1e-12);
        let end = start + opts.window - 1;
        if end >= ens.grid.len() {
            return Err(Error::Range(format!("histogram window at t = {t0} runs past the end of the grid")));
        }
        let chi = chi_square_gaussian_test(&pooled_window(&ens.z, end, opts.window), opts.bins, 0.05)?;
        let mut lo = vec![f64::NEG_INFINITY];
        lo.extend(&chi.edges);
        let mut hi = chi.edges.clone();
        hi.push(f64::INFINITY);
        let name = PathBuf::from(format!("histogram_t{:.4}.csv", ens.grid[start]));
        io::write_csv(
            &dir.join(&name),
            &["bin_lo", "bin_hi", "observed", "expected"],
            (0..chi.bins).map(|b| vec![lo[b], hi[b], chi.observed[b] as f64, chi.expected]),
        )?;
        files.push(name);
    }
    manifest.files = files
        .iter()
        .map(|f| FileEntry::describe(dir, f))
        .collect::<Result<Vec<_>>>()?;
    manifest.status = "completed".into();
    io::write_json(&manifest_path, &manifest)?;
    Ok(ens)
}

fn median_step(t: &[f64]) -> Result<f64> {
    let mut steps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    if steps.is_empty() {
        return Err(Error::Range("a run has fewer than two samples".into()));
    }
    steps.sort_by(f64::total_cmp);
    Ok(steps[steps.len() / 2])
}
