//! Seeded path sampling and the distributional diagnostics built on it.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, and results are
//! collected in path order, so output depends only on `(seed, paths, horizon, chain)`
//! and never on the number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::blocks::BlockPartition;
use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::moments;
use crate::stats;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "ASIP_THREADS";

const SURROGATE_STREAM: u64 = 1 << 62;
const BOOTSTRAP_STREAM: u64 = 1 << 61;

/// Runs `f` on a pool sized by [`THREADS_ENV`] (rayon's default when unset). Inside an
/// existing pool `f` runs directly, so an outer [`with_threads`] wins.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    if rayon::current_thread_index().is_some() {
        return Ok(f());
    }
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| Error::param("ASIP_THREADS", format!("not a thread count: {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param("ASIP_THREADS", e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param("threads", e.to_string()))?;
    Ok(pool.install(f))
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn cumulative(row: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    row.map(|p| {
        acc += p;
        acc
    })
    .collect()
}

fn draw(cum: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
    cum.partition_point(|c| *c <= u).min(cum.len() - 1)
}

/// Cumulative kernels and projected centered values over a time window.
struct Plan {
    start: usize,
    init: Vec<f64>,
    /// `kernels[t − start]` holds the cumulative rows of `P_t`.
    kernels: Vec<Vec<Vec<f64>>>,
    /// `centered[t − start][x][dir]`
    centered: Vec<Vec<Vec<f64>>>,
    /// `raw[t − start][x][dir]`, uncentered
    raw: Vec<Vec<Vec<f64>>>,
}

impl Plan {
    fn new(chain: &ChainSpec, start: usize, end: usize, directions: &[DVector<f64>]) -> Result<Self> {
        let init = cumulative(chain.marginal(start)?.iter().copied());
        let mut kernels = Vec::with_capacity(end - start);
        let mut centered = Vec::with_capacity(end - start + 1);
        let mut raw = Vec::with_capacity(end - start + 1);
        for t in start..=end {
            let f = chain.values(t)?;
            let c = chain.centered_values(t)?;
            let project = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
                (0..m.nrows())
                    .map(|x| directions.iter().map(|u| m.row(x).transpose().dot(u)).collect())
                    .collect()
            };
            raw.push(project(f.as_ref()));
            centered.push(project(&c));
            if t < end {
                let k = chain.kernel(t)?;
                kernels.push((0..k.nrows()).map(|x| cumulative(k.row(x).iter().copied())).collect());
            }
        }
        Ok(Plan {
            start,
            init,
            kernels,
            centered,
            raw,
        })
    }
}

/// What to record while sampling.
#[derive(Clone, Debug, Serialize)]
pub struct SampleRequest {
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
    /// Times `n` at which `S_n·u` and `X_n·u` are recorded (sorted, ≤ horizon).
    pub checkpoints: Vec<usize>,
    pub directions: Vec<DVector<f64>>,
    /// `(start, length)` windows for running maxima, in the first direction.
    pub gaps: Vec<(usize, usize)>,
    /// Record `max_n |S_n·u| / √(2V log log V)` per direction.
    pub lil: bool,
}

/// Per-path records, flattened in path order.
#[derive(Clone, Debug, Serialize)]
pub struct PathBatch {
    pub seed: u64,
    pub paths: usize,
    pub horizon: usize,
    pub checkpoints: Vec<usize>,
    pub direction_count: usize,
    /// `[path][checkpoint][direction]` centered `S_n·u`.
    sums: Vec<f64>,
    /// `[path][checkpoint][direction]` raw `X_n·u`.
    values: Vec<f64>,
    /// `[path][gap]` running maxima.
    gap_maxima: Vec<f64>,
    gap_count: usize,
    /// `[path][direction]`; NaN when no time qualifies.
    lil: Vec<f64>,
}

impl PathBatch {
    fn at(&self, data: &[f64], c: usize, dir: usize) -> Vec<f64> {
        let stride = self.checkpoints.len() * self.direction_count;
        (0..self.paths)
            .map(|i| data[i * stride + c * self.direction_count + dir])
            .collect()
    }

    /// Centered `S_n·u` across paths at checkpoint index `c`.
    pub fn sums(&self, c: usize, dir: usize) -> Vec<f64> {
        self.at(&self.sums, c, dir)
    }

    /// Raw `X_n·u` across paths at checkpoint index `c`.
    pub fn values(&self, c: usize, dir: usize) -> Vec<f64> {
        self.at(&self.values, c, dir)
    }

    pub fn gap_maxima(&self, q: usize) -> Vec<f64> {
        (0..self.paths).map(|i| self.gap_maxima[i * self.gap_count + q]).collect()
    }

    pub fn gap_count(&self) -> usize {
        self.gap_count
    }

    pub fn lil(&self, dir: usize) -> Vec<f64> {
        (0..self.paths).map(|i| self.lil[i * self.direction_count + dir]).collect()
    }

    /// The same batch keeping only the checkpoint indices in `keep`, in that order.
    pub fn select_checkpoints(&self, keep: &[usize]) -> PathBatch {
        let stride = self.checkpoints.len() * self.direction_count;
        let pick = |data: &[f64]| -> Vec<f64> {
            let mut out = Vec::with_capacity(self.paths * keep.len() * self.direction_count);
            for i in 0..self.paths {
                for &c in keep {
                    let at = i * stride + c * self.direction_count;
                    out.extend_from_slice(&data[at..at + self.direction_count]);
                }
            }
            out
        };
        PathBatch {
            seed: self.seed,
            paths: self.paths,
            horizon: self.horizon,
            checkpoints: keep.iter().map(|&c| self.checkpoints[c]).collect(),
            direction_count: self.direction_count,
            sums: pick(&self.sums),
            values: pick(&self.values),
            gap_maxima: self.gap_maxima.clone(),
            gap_count: self.gap_count,
            lil: self.lil.clone(),
        }
    }
}

struct PathRecord {
    sums: Vec<f64>,
    values: Vec<f64>,
    gaps: Vec<f64>,
    lil: Vec<f64>,
}

/// Samples independent trajectories on `1..=horizon`.
pub fn sample_paths(chain: &ChainSpec, req: &SampleRequest) -> Result<PathBatch> {
    if req.paths == 0 {
        return Err(Error::param("paths", "need at least one path"));
    }
    if req.horizon == 0 {
        return Err(Error::param("horizon", "need horizon ≥ 1"));
    }
    if req.directions.is_empty() {
        return Err(Error::param("directions", "need at least one direction"));
    }
    if req.checkpoints.windows(2).any(|w| w[0] >= w[1])
        || req.checkpoints.iter().any(|c| *c == 0 || *c > req.horizon)
    {
        return Err(Error::param("checkpoints", "must be increasing within 1..=horizon"));
    }
    if req.gaps.iter().any(|(s, l)| *s == 0 || s + l > req.horizon + 1) {
        return Err(Error::param("gaps", "window outside the horizon"));
    }
    for u in &req.directions {
        if u.len() != chain.dim() {
            return Err(Error::Dimension(format!("direction has {} components, d = {}", u.len(), chain.dim())));
        }
    }
    let plan = Plan::new(chain, 1, req.horizon, &req.directions)?;
    let dirs = req.directions.len();
    // √(2 V log log V) per time and direction, zero where V < e^e
    let lil_norm: Vec<Vec<f64>> = if req.lil {
        let threshold = std::f64::consts::E.exp();
        req.directions
            .iter()
            .map(|u| {
                Ok(moments::prefix_variances(chain, 1, req.horizon, u)?
                    .into_iter()
                    .map(|v| if v >= threshold { (2.0 * v * v.ln().ln()).sqrt() } else { 0.0 })
                    .collect())
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let run = |i: usize| -> PathRecord {
        let mut rng = path_rng(req.seed, i as u64);
        let mut rec = PathRecord {
            sums: Vec::with_capacity(req.checkpoints.len() * dirs),
            values: Vec::with_capacity(req.checkpoints.len() * dirs),
            gaps: vec![0.0; req.gaps.len()],
            lil: vec![f64::NAN; if req.lil { dirs } else { 0 }],
        };
        let mut s = vec![0.0; dirs];
        let mut next_ckpt = 0;
        let mut x = draw(&plan.init, &mut rng);
        // running sums for each gap window (first direction)
        let mut gap_sums = vec![0.0; req.gaps.len()];
        for t in 1..=req.horizon {
            if t > 1 {
                x = draw(&plan.kernels[t - 1 - plan.start][x], &mut rng);
            }
            let c = &plan.centered[t - plan.start][x];
            for d in 0..dirs {
                s[d] += c[d];
            }
            for (g, (start, len)) in req.gaps.iter().enumerate() {
                if t >= *start && t < start + len {
                    gap_sums[g] += c[0];
                    rec.gaps[g] = rec.gaps[g].max(gap_sums[g].abs());
                }
            }
            if req.lil {
                for d in 0..dirs {
                    let norm = lil_norm[d][t - 1];
                    if norm > 0.0 {
                        let ratio = s[d].abs() / norm;
                        rec.lil[d] = if rec.lil[d].is_nan() { ratio } else { rec.lil[d].max(ratio) };
                    }
                }
            }
            if next_ckpt < req.checkpoints.len() && req.checkpoints[next_ckpt] == t {
                rec.sums.extend_from_slice(&s);
                rec.values.extend_from_slice(&plan.raw[t - plan.start][x]);
                next_ckpt += 1;
            }
        }
        rec
    };
    let records: Vec<PathRecord> = with_pool(|| (0..req.paths).into_par_iter().map(run).collect())?;

    let mut batch = PathBatch {
        seed: req.seed,
        paths: req.paths,
        horizon: req.horizon,
        checkpoints: req.checkpoints.clone(),
        direction_count: dirs,
        sums: Vec::with_capacity(req.paths * req.checkpoints.len() * dirs),
        values: Vec::with_capacity(req.paths * req.checkpoints.len() * dirs),
        gap_maxima: Vec::with_capacity(req.paths * req.gaps.len()),
        gap_count: req.gaps.len(),
        lil: Vec::with_capacity(req.paths * dirs),
    };
    for r in records {
        batch.sums.extend(r.sums);
        batch.values.extend(r.values);
        batch.gap_maxima.extend(r.gaps);
        batch.lil.extend(r.lil);
    }
    Ok(batch)
}

/// Samples of `max_{1≤t≤len} |Σ_{i<t} (X_{start+i} − E X_{start+i})·u|`, each path
/// started from the marginal at `start`.
pub fn running_max_samples(
    chain: &ChainSpec,
    start: usize,
    len: usize,
    u: &DVector<f64>,
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if len == 0 {
        return Ok(vec![0.0; paths]);
    }
    let plan = Plan::new(chain, start, start + len - 1, std::slice::from_ref(u))?;
    let run = |i: usize| {
        let mut rng = path_rng(seed, i as u64);
        let mut x = draw(&plan.init, &mut rng);
        let mut s = 0.0f64;
        let mut m = 0.0f64;
        for t in 0..len {
            if t > 0 {
                x = draw(&plan.kernels[t - 1][x], &mut rng);
            }
            s += plan.centered[t][x][0];
            m = m.max(s.abs());
        }
        m
    };
    with_pool(|| (0..paths).into_par_iter().map(run).collect())
}

/// Samples of `Σ_{j≤k} Z_j·u` at every block `k`, with independent `Z_j ~ N(0, Cov(Θ_j))`.
#[derive(Clone, Debug, Serialize)]
pub struct SurrogateBatch {
    pub seed: u64,
    pub paths: usize,
    pub blocks: usize,
    pub direction_count: usize,
    /// `Var(Z_j·u)` per block and direction, from the factors actually used.
    pub block_variances: Vec<Vec<f64>>,
    sums: Vec<f64>,
}

impl SurrogateBatch {
    pub fn sums(&self, k: usize, dir: usize) -> Vec<f64> {
        let stride = self.blocks * self.direction_count;
        (0..self.paths)
            .map(|i| self.sums[i * stride + k * self.direction_count + dir])
            .collect()
    }
}

/// Tolerance for negative eigenvalues of block covariances, relative to their scale.
pub const PSD_TOL: f64 = 1e-10;

pub fn gaussian_surrogate(
    covariances: &[DMatrix<f64>],
    directions: &[DVector<f64>],
    paths: usize,
    seed: u64,
) -> Result<SurrogateBatch> {
    let factors: Vec<DMatrix<f64>> = covariances
        .iter()
        .map(|c| linalg::psd_factor(c, PSD_TOL))
        .collect::<Result<_>>()?;
    let dirs = directions.len();
    let blocks = factors.len();
    let block_variances = factors
        .iter()
        .map(|f| {
            let cov = f * f.transpose();
            directions.iter().map(|u| linalg::quad(&cov, u)).collect()
        })
        .collect();
    let run = |i: usize| -> Vec<f64> {
        let mut rng = path_rng(seed, SURROGATE_STREAM | i as u64);
        let mut acc = DVector::zeros(factors.first().map_or(0, |f| f.nrows()));
        let mut out = Vec::with_capacity(blocks * dirs);
        for f in &factors {
            let g = DVector::from_fn(f.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
            acc += f * g;
            out.extend(directions.iter().map(|u| acc.dot(u)));
        }
        out
    };
    let rows: Vec<Vec<f64>> = with_pool(|| (0..paths).into_par_iter().map(run).collect())?;
    Ok(SurrogateBatch {
        seed,
        paths,
        blocks,
        direction_count: dirs,
        block_variances,
        sums: rows.into_iter().flatten().collect(),
    })
}

/// KS distance of exactly standardized `S_n·u` from `N(0, 1)`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct KsPoint {
    pub n: usize,
    pub direction_id: usize,
    pub ks: f64,
    pub stderr: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CltDiagnostic {
    pub points: Vec<KsPoint>,
    /// Checkpoints with zero exact variance, which cannot be standardized.
    pub skipped: Vec<(usize, usize)>,
}

/// `variances[c][dir]` is the exact `Var(S_n·u)` at checkpoint `c`.
pub fn clt_diagnostic(batch: &PathBatch, variances: &[Vec<f64>]) -> CltDiagnostic {
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for (c, &n) in batch.checkpoints.iter().enumerate() {
        for dir in 0..batch.direction_count {
            let var = variances[c][dir];
            if !(var > 0.0) {
                log::warn!("checkpoint {n}, direction {dir}: zero variance, skipped");
                skipped.push((n, dir));
                continue;
            }
            let sd = var.sqrt();
            let mut z: Vec<f64> = batch.sums(c, dir).iter().map(|s| s / sd).collect();
            points.push(KsPoint {
                n,
                direction_id: dir,
                ks: stats::ks_normal(&mut z),
                stderr: stats::ks_null_stderr(batch.paths),
                variance: var,
            });
        }
    }
    CltDiagnostic { points, skipped }
}

/// One point of the exact variance-gap curve.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct GapPoint {
    pub k: usize,
    pub n: usize,
    /// `sup_u |Var(S_n·u) − Σ_{j≤k} Var(Θ_j·u)|`
    pub gap: f64,
    pub s_n: f64,
    pub ratio: f64,
    pub running_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceMatching {
    pub delta: f64,
    pub points: Vec<GapPoint>,
    /// `max_k gap / s^{1/2+δ}`
    pub c: f64,
}

const GAP_ROUNDING: f64 = 1e-12;

/// Exact curve at the block checkpoints `n = max I_k`, where `S_n = Σ_{j≤k} Θ_j`.
/// The supremum over unit `u` is the spectral radius of the difference matrix.
pub fn variance_matching(chain: &ChainSpec, partition: &BlockPartition, delta: f64) -> Result<VarianceMatching> {
    let checkpoints = partition.checkpoints();
    let mut points = Vec::with_capacity(checkpoints.len());
    if checkpoints.is_empty() {
        return Ok(VarianceMatching {
            delta,
            points,
            c: 0.0,
        });
    }
    let d = chain.dim();
    let mut pass = moments::CovPass::new(chain, 1, None)?;
    let mut block_sum = DMatrix::zeros(d, d);
    let mut running = 0.0f64;
    for (k, (blk, &n)) in partition.blocks.iter().zip(&checkpoints).enumerate() {
        block_sum += &blk.theta_cov;
        while pass.next_time() <= n {
            pass.push(1.0)?;
        }
        let v = pass.cov();
        let mut gap = linalg::spectral_radius(&(v - &block_sum));
        // both sides are accumulated in different orders; residue at rounding level is zero
        if gap <= GAP_ROUNDING * linalg::spectral_radius(v) {
            gap = 0.0;
        }
        let s_n = linalg::eigen_extremes(v).0;
        let ratio = if s_n > 0.0 { gap / s_n.powf(0.5 + delta) } else { f64::INFINITY };
        running = running.max(ratio);
        points.push(GapPoint {
            k: k + 1,
            n,
            gap,
            s_n,
            ratio,
            running_max: running,
        });
    }
    Ok(VarianceMatching {
        delta,
        c: running,
        points,
    })
}

/// `W₁` between the sampled `S_n·u` and the surrogate `Σ Z_j·u` at a block checkpoint.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct W1Point {
    pub k: usize,
    pub n: usize,
    pub direction_id: usize,
    pub w1: f64,
    pub stderr: f64,
    pub normalizer: f64,
    pub ratio: f64,
}

pub const BOOTSTRAP_ROUNDS: usize = 32;

/// `batch` must be sampled with the partition checkpoints, in the same order as the
/// surrogate blocks; `s_values[k]` is the exact `s_n` at checkpoint `k`.
pub fn rate_scaling(
    batch: &PathBatch,
    surrogate: &SurrogateBatch,
    s_values: &[f64],
    delta: f64,
    seed: u64,
) -> Result<Vec<W1Point>> {
    if batch.paths != surrogate.paths || batch.checkpoints.len() != surrogate.blocks {
        return Err(Error::Dimension("path batch and surrogate do not line up".into()));
    }
    let mut out = Vec::new();
    for k in 0..surrogate.blocks {
        for dir in 0..batch.direction_count {
            let a = batch.sums(k, dir);
            let b = surrogate.sums(k, dir);
            let w1 = stats::w1_samples(&mut a.clone(), &mut b.clone());
            let stream = BOOTSTRAP_STREAM | ((k * batch.direction_count + dir) as u64);
            let mut rng = path_rng(seed, stream);
            let n = a.len();
            let boot: Vec<f64> = (0..BOOTSTRAP_ROUNDS)
                .map(|_| {
                    let mut ra: Vec<f64> = (0..n).map(|_| a[rng.random_range(0..n)]).collect();
                    let mut rb: Vec<f64> = (0..n).map(|_| b[rng.random_range(0..n)]).collect();
                    stats::w1_samples(&mut ra, &mut rb)
                })
                .collect();
            let mean = boot.iter().sum::<f64>() / boot.len() as f64;
            let stderr = (boot.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (boot.len() - 1) as f64).sqrt();
            let normalizer = s_values[k].max(0.0).powf(0.25 + delta);
            out.push(W1Point {
                k: k + 1,
                n: batch.checkpoints[k],
                direction_id: dir,
                w1,
                stderr,
                normalizer,
                ratio: if normalizer > 0.0 { w1 / normalizer } else { f64::INFINITY },
            });
        }
    }
    Ok(out)
}

/// Cross-path summary of `max_n |S_n·u| / √(2V_n log log V_n)`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LilSummary {
    pub direction_id: usize,
    /// Paths with at least one qualifying time.
    pub count: usize,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
}

pub fn lil_diagnostic(batch: &PathBatch) -> Vec<LilSummary> {
    (0..batch.direction_count)
        .filter_map(|dir| {
            let mut v: Vec<f64> = batch.lil(dir).into_iter().filter(|x| !x.is_nan()).collect();
            if v.is_empty() {
                return None;
            }
            Some(LilSummary {
                direction_id: dir,
                count: v.len(),
                q10: stats::quantile(&mut v, 0.1),
                median: stats::quantile(&mut v, 0.5),
                q90: stats::quantile(&mut v, 0.9),
            })
        })
        .collect()
}

/// A Monte Carlo estimate set against its exact value.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct OracleCheck {
    pub quantity: &'static str,
    pub n: usize,
    pub direction_id: usize,
    pub estimate: f64,
    pub exact: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Compares `E[X_n·u]` and `Var(S_n·u)` estimates with the exact values at every
/// checkpoint; a check passes within `z` standard errors.
pub fn oracle_equivalence(
    chain: &ChainSpec,
    batch: &PathBatch,
    directions: &[DVector<f64>],
    z: f64,
) -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    let last = *batch.checkpoints.last().unwrap_or(&1);
    let variances: Vec<Vec<f64>> = directions
        .iter()
        .map(|u| moments::prefix_variances(chain, 1, last, u))
        .collect::<Result<_>>()?;
    let judge = |est: f64, exact: f64, se: f64| {
        if se > 0.0 {
            (est - exact).abs() <= z * se
        } else {
            (est - exact).abs() <= 1e-12 * (1.0 + exact.abs())
        }
    };
    for (c, &n) in batch.checkpoints.iter().enumerate() {
        for (dir, u) in directions.iter().enumerate() {
            let exact_mean = chain.mean(n)?.dot(u);
            let (est, se) = stats::mean_se(&batch.values(c, dir));
            out.push(OracleCheck {
                quantity: "mean",
                n,
                direction_id: dir,
                estimate: est,
                exact: exact_mean,
                stderr: se,
                pass: judge(est, exact_mean, se),
            });
            let squares: Vec<f64> = batch.sums(c, dir).iter().map(|s| s * s).collect();
            let (est, se) = stats::mean_se(&squares);
            let exact_var = variances[dir][n - 1];
            out.push(OracleCheck {
                quantity: "variance",
                n,
                direction_id: dir,
                estimate: est,
                exact: exact_var,
                stderr: se,
                pass: judge(est, exact_var, se),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn chain(kernel: DMatrix<f64>) -> ChainSpec {
        ChainSpec::homogeneous(kernel, DVector::from_row_slice(&[0.5, 0.5]), dmatrix![1.0; -1.0]).unwrap()
    }

    fn request(horizon: usize, paths: usize, seed: u64, checkpoints: Vec<usize>) -> SampleRequest {
        SampleRequest {
            horizon,
            paths,
            seed,
            checkpoints,
            directions: vec![DVector::from_element(1, 1.0)],
            gaps: vec![],
            lil: false,
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let c = chain(dmatrix![0.75, 0.25; 0.25, 0.75]);
        let r = request(50, 300, 42, vec![1, 10, 50]);
        let a = sample_paths(&c, &r).unwrap();
        let b = sample_paths(&c, &r).unwrap();
        assert_eq!(a.sums(2, 0), b.sums(2, 0));
        let other = sample_paths(&c, &request(50, 300, 43, vec![1, 10, 50])).unwrap();
        assert_ne!(a.sums(2, 0), other.sums(2, 0));
    }

    #[test]
    fn rademacher_mean_at_one() {
        let c = chain(dmatrix![0.5, 0.5; 0.5, 0.5]);
        let n = 100_000;
        let b = sample_paths(&c, &request(1, n, 7, vec![1])).unwrap();
        let (m, _) = stats::mean_se(&b.sums(0, 0));
        assert!(m.abs() <= 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn symmetric_variance_at_two() {
        let c = chain(dmatrix![0.75, 0.25; 0.25, 0.75]);
        let b = sample_paths(&c, &request(2, 20_000, 11, vec![2])).unwrap();
        let sq: Vec<f64> = b.sums(0, 0).iter().map(|s| s * s).collect();
        let (m, se) = stats::mean_se(&sq);
        assert!((m - 3.0).abs() <= 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn surrogate_matches_block_covariances() {
        let covs = vec![dmatrix![11.0], dmatrix![11.0], dmatrix![11.0]];
        let s = gaussian_surrogate(&covs, &[DVector::from_element(1, 1.0)], 4000, 3).unwrap();
        for v in &s.block_variances {
            assert!((v[0] - 11.0).abs() < 1e-10);
        }
        let sq: Vec<f64> = s.sums(2, 0).iter().map(|x| x * x).collect();
        let (m, se) = stats::mean_se(&sq);
        assert!((m - 33.0).abs() <= 4.0 * se);
        assert!(gaussian_surrogate(&[dmatrix![1.0, 0.0; 0.0, -0.5]], &[DVector::from_element(2, 0.5f64.sqrt())], 1, 1).is_err());
    }

    #[test]
    fn lil_ratios_are_moderate_and_empty_for_zero_observable() {
        let base = chain(dmatrix![0.5, 0.5; 0.5, 0.5]);
        let mut r = request(2000, 50, 5, vec![2000]);
        r.lil = true;
        let a = lil_diagnostic(&sample_paths(&base, &r).unwrap());
        assert_eq!(a[0].count, 50);
        assert!(a[0].q10 > 0.0 && a[0].q90 < 3.0, "{:?}", a[0]);
        let zero = ChainSpec::homogeneous(
            dmatrix![0.5, 0.5; 0.5, 0.5],
            DVector::from_row_slice(&[0.5, 0.5]),
            dmatrix![0.0; 0.0],
        )
        .unwrap();
        assert!(lil_diagnostic(&sample_paths(&zero, &r).unwrap()).is_empty());
    }
}
