//! Runtime and peak-memory scaling of the PMT layer against the dense
//! second-order convolution, plus the allocator that measures the memory.
//!
//! Peak numbers are only meaningful when [`CountingAlloc`] is installed as
//! the global allocator of the running binary.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::geometry::knn;
use crate::hdc::{conv2_bruteforce_capped, conv2_memory_bytes, KernelSpec, Lattice};
use crate::pmt::{build_attention, init_proxies, pmt_forward, AttentionScope, PmtLayerConfig, ProxyInit, Side};

static CURRENT: AtomicU64 = AtomicU64::new(0);
static PEAK: AtomicU64 = AtomicU64::new(0);
static TOTAL: AtomicU64 = AtomicU64::new(0);

/// System allocator wrapper that tracks live and peak heap bytes.
pub struct CountingAlloc;

impl CountingAlloc {
    fn grow(bytes: u64) {
        TOTAL.fetch_add(bytes, Ordering::Relaxed);
        let now = CURRENT.fetch_add(bytes, Ordering::Relaxed) + bytes;
        PEAK.fetch_max(now, Ordering::Relaxed);
    }

    fn shrink(bytes: u64) {
        CURRENT.fetch_sub(bytes, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            Self::grow(layout.size() as u64);
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            Self::grow(layout.size() as u64);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        Self::shrink(layout.size() as u64);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            Self::shrink(layout.size() as u64);
            Self::grow(new_size as u64);
        }
        p
    }
}

/// Live heap bytes.
pub fn current_bytes() -> u64 {
    CURRENT.load(Ordering::Relaxed)
}

/// Highest live heap bytes since the last [`reset_peak`].
pub fn peak_bytes() -> u64 {
    PEAK.load(Ordering::Relaxed)
}

/// Restarts peak tracking from the current live size.
pub fn reset_peak() {
    PEAK.store(CURRENT.load(Ordering::Relaxed), Ordering::Relaxed);
}

/// Whether [`CountingAlloc`] is the active global allocator.
pub fn counting_enabled() -> bool {
    let before = TOTAL.load(Ordering::Relaxed);
    std::hint::black_box(vec![0u8; 64]);
    TOTAL.load(Ordering::Relaxed) > before
}

/// Runs `f` and returns its result with the heap growth above the starting
/// live size at its peak.
pub fn measure_peak<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let base = current_bytes();
    reset_peak();
    let out = f();
    (out, peak_bytes().saturating_sub(base))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two (x, y) pairs".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("x values must differ".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Value of the fitted power law through `(xs, ys)` at `x`.
pub fn loglog_extrapolate(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    let slope = loglog_slope(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().map(|v| v.ln()).sum::<f64>() / n;
    let my = ys.iter().map(|v| v.ln()).sum::<f64>() / n;
    Ok((my + slope * (x.ln() - mx)).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub pmt_sizes: Vec<usize>,
    pub hdc_sizes: Vec<usize>,
    pub d_emb: usize,
    pub d_proxy: usize,
    pub heads: usize,
    pub neighbors: usize,
    /// Half-width of the line kernel used by the dense baseline.
    pub kernel_radius: usize,
    /// Dense-baseline runs needing more than this many bytes are refused.
    pub mem_cap: u64,
    /// Each timing is the fastest run within this budget.
    pub min_time_ms: f64,
    pub max_repeats: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            pmt_sizes: vec![1 << 10, 1 << 11, 1 << 12, 1 << 13, 1 << 14, 1 << 15],
            hdc_sizes: vec![128, 256, 512, 1024, 2048],
            d_emb: 32,
            d_proxy: 32,
            heads: 4,
            neighbors: 16,
            kernel_radius: 1,
            mem_cap: 8 << 30,
            min_time_ms: 100.0,
            max_repeats: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pmt,
    Hdc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pmt => "pmt",
            Method::Hdc => "hdc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Refused because the dense buffers would exceed the memory cap.
    MemCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub method: Method,
    pub n: usize,
    /// `None` when the run was refused.
    pub wall_ms: Option<f64>,
    /// Measured peak, or the required size for refused runs.
    pub peak_bytes: u64,
    pub status: RunStatus,
}

fn time_min(cfg: &ScalingConfig, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut spent = 0.0;
    for _ in 0..cfg.max_repeats.max(1) {
        let t = Instant::now();
        f()?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        best = best.min(ms);
        spent += ms;
        if spent >= cfg.min_time_ms {
            break;
        }
    }
    Ok(best)
}

fn random_features(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
}

/// Times one local PMT application on an `n`-point line lattice. Setup
/// (neighbors, attention, proxies) is excluded from time and memory.
pub fn run_pmt(n: usize, cfg: &ScalingConfig) -> Result<ScalingRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ n as u64);
    let cloud = Lattice::line(n)?.to_cloud();
    let table = knn(&cloud, &cloud, cfg.neighbors.min(n))?;
    let bandwidths: Vec<f64> = (1..=cfg.heads).map(|h| h as f64 * 2.0).collect();
    let attention = build_attention(&table, &bandwidths)?;
    let layer = PmtLayerConfig::new(cfg.heads, cfg.d_emb, cfg.d_proxy, AttentionScope::Local);
    let proxies = init_proxies(&layer, ProxyInit::Practical, rng.random())?;
    let features = FeatureMatrix::new(random_features(n, cfg.d_emb, &mut rng), 3)?;
    let (out, peak) = measure_peak(|| pmt_forward(&features, &attention, &proxies, Side::X));
    drop(out?);
    let wall = time_min(cfg, || pmt_forward(&features, &attention, &proxies, Side::X).map(drop))?;
    Ok(ScalingRow {
        method: Method::Pmt,
        n,
        wall_ms: Some(wall),
        peak_bytes: peak,
        status: RunStatus::Ok,
    })
}

/// Times the dense second-order convolution on two `n`-point line lattices,
/// or reports the requirement when it exceeds the memory cap.
pub fn run_hdc(n: usize, cfg: &ScalingConfig) -> Result<ScalingRow> {
    let required = conv2_memory_bytes(n, n);
    if required > cfg.mem_cap {
        return Ok(ScalingRow {
            method: Method::Hdc,
            n,
            wall_ms: None,
            peak_bytes: required,
            status: RunStatus::MemCap,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ n as u64);
    let lattice = Lattice::line(n)?;
    let width = 2 * cfg.kernel_radius + 1;
    let kernel = KernelSpec::random_line(width, width, &mut rng)?;
    let fx = random_features(n, cfg.d_emb, &mut rng);
    let fy = random_features(n, cfg.d_emb, &mut rng);
    let run = || conv2_bruteforce_capped(&fx, &fy, &lattice, &lattice, &kernel, cfg.mem_cap);
    let (out, peak) = measure_peak(run);
    drop(out?);
    let wall = time_min(cfg, || run().map(drop))?;
    Ok(ScalingRow {
        method: Method::Hdc,
        n,
        wall_ms: Some(wall),
        peak_bytes: peak,
        status: RunStatus::Ok,
    })
}

/// Runs both sweeps, PMT first, in size order.
pub fn run_scaling(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for &n in &cfg.pmt_sizes {
        rows.push(run_pmt(n, cfg)?);
    }
    for &n in &cfg.hdc_sizes {
        rows.push(run_hdc(n, cfg)?);
    }
    Ok(rows)
}

/// Log-log runtime slope over the completed rows of one method.
pub fn runtime_slope(rows: &[ScalingRow], method: Method) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.method == method)
        .filter_map(|r| r.wall_ms.map(|t| (r.n as f64, t)))
        .unzip();
    loglog_slope(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_laws() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        for p in [0.5, 1.0, 2.0, 3.0] {
            let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(p)).collect();
            assert!((loglog_slope(&xs, &ys).unwrap() - p).abs() < 1e-12);
            assert!((loglog_extrapolate(&xs, &ys, 64.0).unwrap() / (3.0 * 64f64.powf(p)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn slope_rejects_bad_input() {
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(loglog_slope(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn dense_baseline_refuses_above_the_cap() {
        let cfg = ScalingConfig {
            mem_cap: 1 << 20,
            ..ScalingConfig::default()
        };
        let row = run_hdc(1 << 15, &cfg).unwrap();
        assert_eq!(row.status, RunStatus::MemCap);
        assert_eq!(row.peak_bytes, conv2_memory_bytes(1 << 15, 1 << 15));
        assert!(row.wall_ms.is_none());
    }

    #[test]
    fn small_runs_complete() {
        let cfg = ScalingConfig {
            max_repeats: 1,
            ..ScalingConfig::default()
        };
        let p = run_pmt(256, &cfg).unwrap();
        let h = run_hdc(64, &cfg).unwrap();
        assert!(p.wall_ms.is_some() && h.wall_ms.is_some());
    }
}
