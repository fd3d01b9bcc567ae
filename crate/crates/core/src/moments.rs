//! Exact moments of partial sums.
//!
//! Everything here is computed by forward or backward passes over the chain that carry
//! conditional moments per state, so a window of length `ℓ` costs `O(ℓ · |𝒳|² · d²)`
//! and nothing is sampled. `cov_partial_sum_pairwise` is the independent route through
//! pairwise joint laws and exists mainly to cross-check the passes.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mixing::Envelope;

/// Centered (and optionally projected) observable at time `t` given the marginal `p`.
fn centered(
    chain: &ChainSpec,
    t: usize,
    p: &DVector<f64>,
    projection: Option<&DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let f = chain.values(t)?;
    let mut c = match projection {
        Some(u) => {
            let v = f.as_ref() * u;
            DMatrix::from_column_slice(v.len(), 1, v.as_slice())
        }
        None => f.into_owned(),
    };
    center_in_place(&mut c, p);
    Ok(c)
}

fn center_in_place(c: &mut DMatrix<f64>, p: &DVector<f64>) {
    let mean = c.tr_mul(p);
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
}

/// Forward accumulator for `Cov(Σ_t w_t (X_t − E X_t))`.
///
/// Per state it keeps `E[S; ξ_t = x]` and `E[S Sᵀ; ξ_t = x]`; adding a time updates
/// both, and moving to the next time pushes them through the kernel.
#[derive(Debug)]
pub struct CovPass<'a> {
    chain: &'a ChainSpec,
    projection: Option<DVector<f64>>,
    next: usize,
    pending: bool,
    p: DVector<f64>,
    w: DMatrix<f64>,
    q: Vec<DMatrix<f64>>,
    cov: DMatrix<f64>,
}

impl<'a> CovPass<'a> {
    /// Starts just before time `start`. With a projection `u` the pass tracks the scalar
    /// `S · u`.
    pub fn new(chain: &'a ChainSpec, start: usize, projection: Option<&DVector<f64>>) -> Result<Self> {
        if let Some(u) = projection {
            if u.len() != chain.dim() {
                return Err(Error::Dimension(format!(
                    "direction has {} components, d = {}",
                    u.len(),
                    chain.dim()
                )));
            }
        }
        let p = chain.marginal(start)?;
        let dim = if projection.is_some() { 1 } else { chain.dim() };
        let n = p.len();
        Ok(CovPass {
            chain,
            projection: projection.cloned(),
            next: start,
            pending: false,
            w: DMatrix::zeros(n, dim),
            q: vec![DMatrix::zeros(dim, dim); n],
            cov: DMatrix::zeros(dim, dim),
            p,
        })
    }

    /// Time the next `push` will add.
    pub fn next_time(&self) -> usize {
        self.next
    }

    fn advance(&mut self) -> Result<()> {
        if !self.pending {
            return Ok(());
        }
        let k = self.chain.kernel(self.next - 1)?;
        let k = k.as_ref();
        self.p = k.tr_mul(&self.p);
        self.w = k.tr_mul(&self.w);
        let dim = self.cov.nrows();
        let mut q = vec![DMatrix::zeros(dim, dim); k.ncols()];
        for (x, qx) in self.q.iter().enumerate() {
            for (y, qy) in q.iter_mut().enumerate() {
                let pxy = k[(x, y)];
                if pxy != 0.0 {
                    *qy += qx * pxy;
                }
            }
        }
        self.q = q;
        self.pending = false;
        Ok(())
    }

    /// Adds `weight · (X_t − E X_t)` at the next time `t` and returns the covariance of
    /// the accumulated sum.
    pub fn push(&mut self, weight: f64) -> Result<&DMatrix<f64>> {
        self.advance()?;
        let t = self.next;
        if weight != 0.0 {
            let c = centered(self.chain, t, &self.p, self.projection.as_ref())? * weight;
            for x in 0..self.p.len() {
                let px = self.p[x];
                let cx = c.row(x);
                let wx = self.w.row(x);
                let cross = wx.transpose() * cx;
                let contribution = &cross + cross.transpose() + cx.transpose() * cx * px;
                self.cov += &contribution;
                self.q[x] += contribution;
                let mut wrow = self.w.row_mut(x);
                wrow += cx * px;
            }
        }
        self.next = t + 1;
        self.pending = true;
        Ok(&self.cov)
    }

    /// Scalar convenience for projected passes.
    pub fn push_scalar(&mut self, weight: f64) -> Result<f64> {
        Ok(self.push(weight)?[(0, 0)])
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// `Cov(S_{n,t})` for every `t` in `n..=m` (so `V_{n,t}`).
pub fn prefix_covariances(chain: &ChainSpec, n: usize, m: usize) -> Result<Vec<DMatrix<f64>>> {
    check_window(n, m)?;
    let mut pass = CovPass::new(chain, n, None)?;
    (n..=m).map(|_| pass.push(1.0).cloned()).collect()
}

/// `Var(S_{n,t} · u)` for every `t` in `n..=m`.
pub fn prefix_variances(chain: &ChainSpec, n: usize, m: usize, u: &DVector<f64>) -> Result<Vec<f64>> {
    check_window(n, m)?;
    let mut pass = CovPass::new(chain, n, Some(u))?;
    (n..=m).map(|_| pass.push_scalar(1.0)).collect()
}

/// Covariance of `Σ_i weights[i] · (X_{start+i} − E X_{start+i})` after each step.
pub fn weighted_covariances(
    chain: &ChainSpec,
    start: usize,
    weights: &[f64],
    projection: Option<&DVector<f64>>,
) -> Result<Vec<DMatrix<f64>>> {
    let mut pass = CovPass::new(chain, start, projection)?;
    weights.iter().map(|w| pass.push(*w).cloned()).collect()
}

/// Backward pass: `Cov(S_{t,e})` for every `t` in `a..=e`, indexed by `t − a`.
pub fn suffix_covariances(
    chain: &ChainSpec,
    a: usize,
    e: usize,
    projection: Option<&DVector<f64>>,
) -> Result<Vec<DMatrix<f64>>> {
    check_window(a, e)?;
    let dim = if projection.is_some() { 1 } else { chain.dim() };
    let mut out = vec![DMatrix::zeros(dim, dim); e - a + 1];
    let p = chain.marginal(e)?;
    let c = centered(chain, e, &p, projection)?;
    let mut h = c.clone();
    let mut g: Vec<DMatrix<f64>> = (0..p.len()).map(|x| c.row(x).transpose() * c.row(x)).collect();
    out[e - a] = weighted_sum(&g, &p, dim);
    for t in (a..e).rev() {
        let k = chain.kernel(t)?;
        let k = k.as_ref();
        let p = chain.marginal(t)?;
        let c = centered(chain, t, &p, projection)?;
        let hh = k * &h;
        let mut next_g = Vec::with_capacity(p.len());
        for x in 0..p.len() {
            let mut gx = DMatrix::zeros(dim, dim);
            for (y, gy) in g.iter().enumerate() {
                let pxy = k[(x, y)];
                if pxy != 0.0 {
                    gx += gy * pxy;
                }
            }
            let cx = c.row(x);
            let hx = hh.row(x);
            let cross = cx.transpose() * hx;
            gx += cx.transpose() * cx + &cross + cross.transpose();
            next_g.push(gx);
        }
        h = c + hh;
        g = next_g;
        out[t - a] = weighted_sum(&g, &p, dim);
    }
    Ok(out)
}

fn weighted_sum(g: &[DMatrix<f64>], p: &DVector<f64>, dim: usize) -> DMatrix<f64> {
    g.iter()
        .zip(p.iter())
        .fold(DMatrix::zeros(dim, dim), |acc, (gx, px)| acc + gx * *px)
}

fn check_window(n: usize, m: usize) -> Result<()> {
    if n == 0 || n > m {
        return Err(Error::InvalidTime(format!("window ({n}, {m}) needs 1 ≤ n ≤ m")));
    }
    Ok(())
}

/// `E[X_j]`.
pub fn mean_obs(chain: &ChainSpec, j: usize) -> Result<DVector<f64>> {
    chain.mean(j)
}

/// `Cov(X_i, X_j)` for `i ≤ j`, from the pairwise joint law.
pub fn cov_pair(chain: &ChainSpec, i: usize, j: usize) -> Result<DMatrix<f64>> {
    if i > j {
        return Err(Error::InvalidTime(format!("cov_pair needs i ≤ j, got ({i}, {j})")));
    }
    let ci = chain.centered_values(i)?;
    if i == j {
        let p = chain.marginal(i)?;
        let mut weighted = ci.clone();
        for (x, mut row) in weighted.row_iter_mut().enumerate() {
            row *= p[x];
        }
        return Ok(ci.tr_mul(&weighted));
    }
    let joint = chain.pair_joint(i, j)?;
    let cj = chain.centered_values(j)?;
    Ok(ci.tr_mul(&(&joint.probs * cj)))
}

/// Covariance matrix of a partial sum with an exactness flag.
#[derive(Clone, Debug, Serialize)]
pub struct PartialSumCov {
    pub n: usize,
    pub m: usize,
    pub matrix: DMatrix<f64>,
    /// `false` when covariance terms were skipped under an envelope bound.
    pub exact: bool,
}

/// `V_{n,m} = Cov(S_{n,m})` by the forward pass (always exact).
pub fn cov_partial_sum(chain: &ChainSpec, n: usize, m: usize) -> Result<PartialSumCov> {
    check_window(n, m)?;
    let mut pass = CovPass::new(chain, n, None)?;
    for _ in n..=m {
        pass.push(1.0)?;
    }
    Ok(PartialSumCov {
        n,
        m,
        matrix: pass.cov().clone(),
        exact: true,
    })
}

/// Tail magnitude below which pairwise covariance terms may be skipped.
pub const TRUNCATION_TOL: f64 = 1e-14;

/// `V_{n,m} = Σ_{i,j} Cov(X_i, X_j)` summed pair by pair.
///
/// With an α-envelope `α(k) ≤ Cδᵏ`, the inner sum over `j` stops once the bound
/// `4L²Cδᵏ/(1−δ)` on the remaining terms drops below [`TRUNCATION_TOL`]; the result is
/// then flagged inexact.
pub fn cov_partial_sum_pairwise(
    chain: &ChainSpec,
    n: usize,
    m: usize,
    envelope: Option<&Envelope>,
) -> Result<PartialSumCov> {
    check_window(n, m)?;
    let d = chain.dim();
    let l2 = chain.bound() * chain.bound();
    let cut = envelope.filter(|e| e.delta < 1.0).map(|e| (e.c, e.delta));
    let mut total = DMatrix::zeros(d, d);
    let mut exact = true;
    for i in n..=m {
        let ci = chain.centered_values(i)?;
        let p = chain.marginal(i)?;
        let mut weighted = ci.clone();
        for (x, mut row) in weighted.row_iter_mut().enumerate() {
            row *= p[x];
        }
        total += ci.tr_mul(&weighted);
        // weighted_k = diag(p_i) P_i ⋯ P_{j−1}, built incrementally
        let mut reach = DMatrix::from_diagonal(&p);
        for j in (i + 1)..=m {
            if let Some((c, delta)) = cut {
                let gap = (j - i) as i32;
                if 4.0 * l2 * c * delta.powi(gap) / (1.0 - delta) < TRUNCATION_TOL {
                    exact = false;
                    break;
                }
            }
            reach *= chain.kernel(j - 1)?.as_ref();
            let cj = chain.centered_values(j)?;
            let cross = ci.tr_mul(&(&reach * cj));
            total += &cross + cross.transpose();
        }
    }
    Ok(PartialSumCov {
        n,
        m,
        matrix: total,
        exact,
    })
}

/// `s_t = λ_min(V_t)` for `t = 1..=horizon`.
pub fn s_curve(chain: &ChainSpec, horizon: usize) -> Result<Vec<f64>> {
    Ok(prefix_covariances(chain, 1, horizon)?
        .iter()
        .map(|v| linalg::eigen_extremes(v).0)
        .collect())
}

/// Eigen-data for one window `(n, m)`.
#[derive(Clone, Debug, Serialize)]
pub struct WindowEigen {
    pub n: usize,
    pub m: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `λ_max / λ_min`; infinite for singular included windows.
    pub ratio: f64,
    /// `‖S_{n,m}‖_{L²} = trace(V_{n,m})^{1/2}`
    pub l2_norm: f64,
    /// Whether `‖S_{n,m}‖_{L²} ≥ C₁`.
    pub included: bool,
}

/// Largest-to-smallest eigenvalue ratios of `V_{n,m}` over a set of windows.
#[derive(Clone, Debug, Serialize)]
pub struct EigenRatioReport {
    pub c1: f64,
    /// Maximal ratio over included windows (1 if none are included).
    pub c2: f64,
    pub windows: Vec<WindowEigen>,
    pub singular: Vec<(usize, usize)>,
}

pub fn eigen_ratio_report(
    chain: &ChainSpec,
    windows: &[(usize, usize)],
    c1: f64,
) -> Result<EigenRatioReport> {
    let d = chain.dim();
    let mut by_start: BTreeMap<usize, usize> = BTreeMap::new();
    for &(n, m) in windows {
        check_window(n, m)?;
        let e = by_start.entry(n).or_insert(m);
        *e = (*e).max(m);
    }
    let mut tables: BTreeMap<usize, Vec<DMatrix<f64>>> = BTreeMap::new();
    for (&n, &m) in &by_start {
        tables.insert(n, prefix_covariances(chain, n, m)?);
    }
    let mut out = Vec::with_capacity(windows.len());
    let mut singular = Vec::new();
    let mut c2 = 1.0f64;
    for &(n, m) in windows {
        let v = &tables[&n][m - n];
        let (lo, hi) = linalg::eigen_extremes(v);
        let l2_norm = v.trace().max(0.0).sqrt();
        let included = l2_norm >= c1;
        let ratio = if d == 1 {
            1.0
        } else if lo <= 0.0 {
            f64::INFINITY
        } else {
            (hi / lo).max(1.0)
        };
        if included {
            if ratio.is_infinite() {
                singular.push((n, m));
            }
            c2 = c2.max(ratio);
        }
        out.push(WindowEigen {
            n,
            m,
            lambda_min: lo,
            lambda_max: hi,
            ratio,
            l2_norm,
            included,
        });
    }
    Ok(EigenRatioReport {
        c1,
        c2,
        windows: out,
        singular,
    })
}

/// Forward accumulator for the central moments `E[(S · u)^q]`, `q = 0..=order`.
#[derive(Debug)]
pub struct MomentPass<'a> {
    chain: &'a ChainSpec,
    u: DVector<f64>,
    next: usize,
    pending: bool,
    p: DVector<f64>,
    m: DMatrix<f64>,
    binom: Vec<Vec<f64>>,
}

impl<'a> MomentPass<'a> {
    pub fn new(chain: &'a ChainSpec, start: usize, u: &DVector<f64>, order: usize) -> Result<Self> {
        if u.len() != chain.dim() {
            return Err(Error::Dimension(format!(
                "direction has {} components, d = {}",
                u.len(),
                chain.dim()
            )));
        }
        let p = chain.marginal(start)?;
        let mut m = DMatrix::zeros(p.len(), order + 1);
        m.set_column(0, &p);
        let mut binom = vec![vec![1.0]];
        for q in 1..=order {
            let prev = &binom[q - 1];
            let mut row = vec![1.0; q + 1];
            for i in 1..q {
                row[i] = prev[i - 1] + prev[i];
            }
            binom.push(row);
        }
        Ok(MomentPass {
            chain,
            u: u.clone(),
            next: start,
            pending: false,
            p,
            m,
            binom,
        })
    }

    /// Adds `weight · (X_t − E X_t) · u` and returns `E[S^q]` for `q = 0..=order`.
    pub fn push(&mut self, weight: f64) -> Result<Vec<f64>> {
        if self.pending {
            let k = self.chain.kernel(self.next - 1)?;
            self.p = k.tr_mul(&self.p);
            self.m = k.tr_mul(&self.m);
            self.pending = false;
        }
        let t = self.next;
        let order = self.m.ncols() - 1;
        if weight != 0.0 {
            let c = centered(self.chain, t, &self.p, Some(&self.u))? * weight;
            for x in 0..self.p.len() {
                let v = c[(x, 0)];
                let old: Vec<f64> = self.m.row(x).iter().copied().collect();
                let mut powers = vec![1.0; order + 1];
                for q in 1..=order {
                    powers[q] = powers[q - 1] * v;
                }
                for q in 1..=order {
                    let mut acc = 0.0;
                    for i in 0..=q {
                        acc += self.binom[q][i] * powers[q - i] * old[i];
                    }
                    self.m[(x, q)] = acc;
                }
            }
        }
        self.next = t + 1;
        self.pending = true;
        Ok((0..=order).map(|q| self.m.column(q).sum()).collect())
    }
}

/// An `L^p` norm and whether it was computed exactly.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct LpNorm {
    pub value: f64,
    pub exact: bool,
}

fn check_even(p: u32) -> Result<()> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::param("p", format!("L^p norms need an even integer p ≥ 2, got {p}")));
    }
    Ok(())
}

/// `‖(S_{n,m} − E S_{n,m}) · u‖_{L^p}` for even `p`, by exact moment recursion.
pub fn lp_norm_partial_sum(
    chain: &ChainSpec,
    n: usize,
    m: usize,
    u: &DVector<f64>,
    p: u32,
) -> Result<LpNorm> {
    check_window(n, m)?;
    let weights = vec![1.0; m - n + 1];
    lp_norm_weighted(chain, n, &weights, u, p)
}

/// `L^p` norm of `Σ_i weights[i] (X_{start+i} − E X_{start+i}) · u` for even `p`.
pub fn lp_norm_weighted(
    chain: &ChainSpec,
    start: usize,
    weights: &[f64],
    u: &DVector<f64>,
    p: u32,
) -> Result<LpNorm> {
    check_even(p)?;
    let mut pass = MomentPass::new(chain, start, u, p as usize)?;
    let mut moments = vec![1.0];
    for w in weights {
        moments = pass.push(*w)?;
    }
    let raw = moments.get(p as usize).copied().unwrap_or(0.0);
    Ok(LpNorm {
        value: raw.max(0.0).powf(1.0 / p as f64),
        exact: true,
    })
}

/// Index-set form used by the covariance inequality: weights are indicators of `set`.
pub fn indicator_weights(set: &[usize]) -> Result<(usize, Vec<f64>)> {
    let (Some(&lo), Some(&hi)) = (set.iter().min(), set.iter().max()) else {
        return Err(Error::param("set", "empty index set"));
    };
    if lo == 0 {
        return Err(Error::InvalidTime("index 0 in set".into()));
    }
    let mut w = vec![0.0; hi - lo + 1];
    for &i in set {
        w[i - lo] = 1.0;
    }
    Ok((lo, w))
}

/// Options for exact sum-law dynamic programming.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SumLawOptions {
    /// Maximal number of (state, value) atoms carried at any time.
    pub cap: usize,
    /// Values are merged on this grid. Dyadic values are exact on the default grid.
    pub grid: f64,
}

impl Default for SumLawOptions {
    fn default() -> Self {
        SumLawOptions {
            cap: 100_000,
            grid: 1e-9,
        }
    }
}

/// Finite law as sorted `(value, probability)` atoms.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DiscreteLaw {
    pub atoms: Vec<(f64, f64)>,
}

impl DiscreteLaw {
    pub fn abs_moment(&self, p: f64) -> f64 {
        self.atoms.iter().map(|(v, w)| w * v.abs().powf(p)).sum()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.abs_moment(p).powf(1.0 / p)
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    fn from_keyed(keyed: BTreeMap<i64, (f64, f64)>) -> Self {
        DiscreteLaw {
            atoms: keyed.into_values().filter(|a| a.1 > 0.0).collect(),
        }
    }
}

fn grid_key(v: f64, grid: f64) -> i64 {
    (v / grid).round() as i64
}

/// Exact law of `(S_{n,m} − E S_{n,m}) · u` by dynamic programming over
/// `(state, accumulated sum)`.
pub fn sum_law(
    chain: &ChainSpec,
    n: usize,
    m: usize,
    u: &DVector<f64>,
    opts: SumLawOptions,
) -> Result<DiscreteLaw> {
    check_window(n, m)?;
    let p0 = chain.marginal(n)?;
    // (state, key) -> (value, prob)
    let mut cur: BTreeMap<(usize, i64), (f64, f64)> = BTreeMap::new();
    for (x, &px) in p0.iter().enumerate() {
        if px > 0.0 {
            cur.insert((x, 0), (0.0, px));
        }
    }
    let mut p = p0;
    for t in n..=m {
        let c = centered(chain, t, &p, Some(u))?;
        let mut added: BTreeMap<(usize, i64), (f64, f64)> = BTreeMap::new();
        for (&(x, _), &(v, w)) in &cur {
            let nv = v + c[(x, 0)];
            let e = added.entry((x, grid_key(nv, opts.grid))).or_insert((nv, 0.0));
            e.1 += w;
        }
        if t == m {
            let mut out: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
            for (&(_, key), &(v, w)) in &added {
                out.entry(key).or_insert((v, 0.0)).1 += w;
            }
            return Ok(DiscreteLaw::from_keyed(out));
        }
        let k = chain.kernel(t)?;
        let mut next: BTreeMap<(usize, i64), (f64, f64)> = BTreeMap::new();
        for (&(x, key), &(v, w)) in &added {
            for y in 0..k.ncols() {
                let pxy = k[(x, y)];
                if pxy > 0.0 {
                    next.entry((y, key)).or_insert((v, 0.0)).1 += w * pxy;
                }
            }
        }
        if next.len() > opts.cap {
            return Err(Error::SupportOverflow { cap: opts.cap });
        }
        p = k.tr_mul(&p);
        cur = next;
    }
    unreachable!("loop returns at t = m")
}

/// Exact law of `max_{1≤t≤len} |Σ_{i<t} (X_{start+i} − E X_{start+i}) · u|`.
pub fn running_max_law(
    chain: &ChainSpec,
    start: usize,
    len: usize,
    u: &DVector<f64>,
    opts: SumLawOptions,
) -> Result<DiscreteLaw> {
    if len == 0 {
        return Ok(DiscreteLaw {
            atoms: vec![(0.0, 1.0)],
        });
    }
    let p0 = chain.marginal(start)?;
    // (state, sum key, max key) -> (sum, max, prob)
    type Key = (usize, i64, i64);
    let mut cur: BTreeMap<Key, (f64, f64, f64)> = BTreeMap::new();
    for (x, &px) in p0.iter().enumerate() {
        if px > 0.0 {
            cur.insert((x, 0, 0), (0.0, 0.0, px));
        }
    }
    let mut p = p0;
    let end = start + len - 1;
    for t in start..=end {
        let c = centered(chain, t, &p, Some(u))?;
        let mut added: BTreeMap<Key, (f64, f64, f64)> = BTreeMap::new();
        for (&(x, _, _), &(s, mx, w)) in &cur {
            let ns = s + c[(x, 0)];
            let nm = mx.max(ns.abs());
            added
                .entry((x, grid_key(ns, opts.grid), grid_key(nm, opts.grid)))
                .or_insert((ns, nm, 0.0))
                .2 += w;
        }
        if t == end {
            let mut out: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
            for (&(_, _, mk), &(_, mx, w)) in &added {
                out.entry(mk).or_insert((mx, 0.0)).1 += w;
            }
            return Ok(DiscreteLaw::from_keyed(out));
        }
        let k = chain.kernel(t)?;
        let mut next: BTreeMap<Key, (f64, f64, f64)> = BTreeMap::new();
        for (&(x, sk, mk), &(s, mx, w)) in &added {
            for y in 0..k.ncols() {
                let pxy = k[(x, y)];
                if pxy > 0.0 {
                    next.entry((y, sk, mk)).or_insert((s, mx, 0.0)).2 += w * pxy;
                }
            }
        }
        if next.len() > opts.cap {
            return Err(Error::SupportOverflow { cap: opts.cap });
        }
        p = k.tr_mul(&p);
        cur = next;
    }
    unreachable!("loop returns at t = end")
}

/// `Cov(S(M₁)·u, S(M₂)·u)` for index sets with `max M₁ < min M₂`.
///
/// Carries `E[S(M₁); ξ_t = x]` forward and pairs it with the centered values on `M₂`,
/// so independent stretches give an exact zero rather than a difference of variances.
pub fn cross_covariance(chain: &ChainSpec, m1: &[usize], m2: &[usize], u: &DVector<f64>) -> Result<f64> {
    let (start, w1) = indicator_weights(m1)?;
    let (start2, w2) = indicator_weights(m2)?;
    let end1 = start + w1.len() - 1;
    if start2 <= end1 {
        return Err(Error::param("M₂", "must lie strictly to the right of M₁"));
    }
    let end = start2 + w2.len() - 1;
    let mut p = chain.marginal(start)?;
    let mut carried = DVector::zeros(p.len());
    let mut cross = 0.0;
    for t in start..=end {
        if t > start {
            let k = chain.kernel(t - 1)?;
            p = k.tr_mul(&p);
            carried = k.tr_mul(&carried);
        }
        let c = centered(chain, t, &p, Some(u))?;
        if t <= end1 && w1[t - start] != 0.0 {
            for x in 0..p.len() {
                carried[x] += p[x] * c[(x, 0)];
            }
        }
        if t >= start2 && w2[t - start2] != 0.0 {
            cross += (0..p.len()).map(|x| carried[x] * c[(x, 0)]).sum::<f64>();
        }
    }
    Ok(cross)
}

/// `Var(S_{n,m}·u) / Σ_j Var(X_j·u)` over a set of windows.
#[derive(Clone, Debug, Serialize)]
pub struct VarianceComparison {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `(n, m, Var(S_{n,m}·u), Σ Var(X_j·u))`
    pub windows: Vec<(usize, usize, f64, f64)>,
}

pub fn variance_comparison(
    chain: &ChainSpec,
    u: &DVector<f64>,
    windows: &[(usize, usize)],
) -> Result<VarianceComparison> {
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = 0.0f64;
    let mut rows = Vec::with_capacity(windows.len());
    for &(n, m) in windows {
        let var_sum = *prefix_variances(chain, n, m, u)?.last().expect("non-empty window");
        let mut individual = 0.0;
        for j in n..=m {
            individual += linalg::quad(&cov_pair(chain, j, j)?, u);
        }
        if individual > 0.0 {
            let r = var_sum / individual;
            min_ratio = min_ratio.min(r);
            max_ratio = max_ratio.max(r);
        }
        rows.push((n, m, var_sum, individual));
    }
    if rows.iter().all(|r| r.3 <= 0.0) {
        min_ratio = 1.0;
        max_ratio = 1.0;
    }
    Ok(VarianceComparison {
        min_ratio,
        max_ratio,
        windows: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{KernelSchedule, ObservableSchedule, StateSizes};
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn symmetric(initial: [f64; 2]) -> ChainSpec {
        ChainSpec::homogeneous(
            dmatrix![0.75, 0.25; 0.25, 0.75],
            DVector::from_row_slice(&initial),
            dmatrix![1.0; -1.0],
        )
        .unwrap()
    }

    fn rademacher() -> ChainSpec {
        ChainSpec::homogeneous(
            dmatrix![0.5, 0.5; 0.5, 0.5],
            DVector::from_row_slice(&[0.5, 0.5]),
            dmatrix![1.0; -1.0],
        )
        .unwrap()
    }

    fn e1() -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }

    #[test]
    fn means() {
        assert_abs_diff_eq!(mean_obs(&symmetric([0.5, 0.5]), 5).unwrap()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mean_obs(&symmetric([1.0, 0.0]), 2).unwrap()[0], 0.5, epsilon = 1e-15);
        let constant = ChainSpec::homogeneous(
            dmatrix![0.2, 0.8; 0.6, 0.4],
            DVector::from_row_slice(&[0.3, 0.7]),
            dmatrix![0.7; 0.7],
        )
        .unwrap();
        assert_abs_diff_eq!(mean_obs(&constant, 9).unwrap()[0], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn pair_covariances() {
        let c = symmetric([0.5, 0.5]);
        assert_abs_diff_eq!(cov_pair(&c, 3, 4).unwrap()[(0, 0)], 0.5, epsilon = 1e-15);
        for k in 0..8 {
            let v = cov_pair(&c, 2, 2 + k).unwrap()[(0, 0)];
            assert_abs_diff_eq!(v, 0.5f64.powi(k as i32), epsilon = 1e-14);
        }
        assert_abs_diff_eq!(cov_pair(&rademacher(), 1, 4).unwrap()[(0, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn partial_sum_examples() {
        for k in [1, 2, 7, 30] {
            let v = cov_partial_sum(&rademacher(), 1, k).unwrap();
            assert_abs_diff_eq!(v.matrix[(0, 0)], k as f64, epsilon = 1e-12);
            assert!(v.exact);
        }
        let v = cov_partial_sum(&symmetric([0.5, 0.5]), 1, 2).unwrap();
        assert_abs_diff_eq!(v.matrix[(0, 0)], 3.0, epsilon = 1e-14);

        // two independent fair coordinates: 4 states = sign pairs
        let iid4 = DMatrix::from_element(4, 4, 0.25);
        let values = dmatrix![1.0, 1.0; 1.0, -1.0; -1.0, 1.0; -1.0, -1.0];
        let c = ChainSpec::homogeneous(iid4, DVector::from_element(4, 0.25), values).unwrap();
        let v = cov_partial_sum(&c, 1, 6).unwrap().matrix;
        assert!((v - DMatrix::identity(2, 2) * 6.0).abs().max() < 1e-12);
    }

    #[test]
    fn forward_backward_and_pairwise_routes_agree() {
        let c = ChainSpec::new(
            StateSizes::Constant(3),
            KernelSchedule::Periodic(vec![
                dmatrix![0.5, 0.3, 0.2; 0.1, 0.6, 0.3; 0.3, 0.3, 0.4],
                dmatrix![0.2, 0.2, 0.6; 0.7, 0.2, 0.1; 0.4, 0.4, 0.2],
            ]),
            DVector::from_row_slice(&[1.0, 0.0, 0.0]),
            ObservableSchedule::Periodic(vec![
                dmatrix![1.0, 0.0; -0.5, 1.0; 0.25, -1.0],
                dmatrix![0.0, 1.0; 1.0, 1.0; -1.0, 0.5],
            ]),
            1.0,
        )
        .unwrap();
        let forward = cov_partial_sum(&c, 3, 14).unwrap().matrix;
        let pairwise = cov_partial_sum_pairwise(&c, 3, 14, None).unwrap();
        assert!(pairwise.exact);
        assert!((&forward - &pairwise.matrix).abs().max() < 1e-10);
        let backward = suffix_covariances(&c, 3, 14, None).unwrap();
        assert!((&forward - &backward[0]).abs().max() < 1e-10);
        let tail = cov_partial_sum(&c, 8, 14).unwrap().matrix;
        assert!((&tail - &backward[5]).abs().max() < 1e-10);
    }

    #[test]
    fn truncated_pairwise_is_flagged() {
        let c = symmetric([0.5, 0.5]);
        let env = Envelope {
            c: 0.25,
            delta: 0.5,
            n0: Some(1),
            degenerate: false,
            nonmonotone: false,
        };
        let v = cov_partial_sum_pairwise(&c, 1, 80, Some(&env)).unwrap();
        assert!(!v.exact);
        let exact = cov_partial_sum(&c, 1, 80).unwrap();
        assert!((v.matrix[(0, 0)] - exact.matrix[(0, 0)]).abs() < 1e-10);
    }

    #[test]
    fn eigen_ratios() {
        let r = eigen_ratio_report(&symmetric([0.5, 0.5]), &[(1, 5), (2, 9)], 1.0).unwrap();
        assert!(r.windows.iter().all(|w| w.ratio == 1.0));
        assert_eq!(r.c2, 1.0);

        // second coordinate is twice an independent copy of the first
        let iid4 = DMatrix::from_element(4, 4, 0.25);
        let values = dmatrix![1.0, 2.0; 1.0, -2.0; -1.0, 2.0; -1.0, -2.0];
        let c = ChainSpec::homogeneous(iid4, DVector::from_element(4, 0.25), values).unwrap();
        let r = eigen_ratio_report(&c, &[(1, 3), (1, 10), (4, 7)], 1.0).unwrap();
        for w in &r.windows {
            assert_abs_diff_eq!(w.ratio, 4.0, epsilon = 1e-10);
            assert_abs_diff_eq!(w.lambda_min, (w.m - w.n + 1) as f64, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(r.c2, 4.0, epsilon = 1e-10);

        // perfectly correlated coordinates: singular covariance
        let values = dmatrix![1.0, 1.0; -1.0, -1.0];
        let c = ChainSpec::homogeneous(
            dmatrix![0.5, 0.5; 0.5, 0.5],
            DVector::from_row_slice(&[0.5, 0.5]),
            values,
        )
        .unwrap();
        let r = eigen_ratio_report(&c, &[(1, 4)], 1.0).unwrap();
        assert!(r.c2.is_infinite());
        assert_eq!(r.singular, vec![(1, 4)]);
    }

    #[test]
    fn lp_examples() {
        let single = lp_norm_partial_sum(&rademacher(), 1, 1, &e1(), 4).unwrap();
        assert_abs_diff_eq!(single.value, 1.0, epsilon = 1e-15);
        let two = lp_norm_partial_sum(&rademacher(), 1, 2, &e1(), 4).unwrap();
        assert_abs_diff_eq!(two.value, 8f64.powf(0.25), epsilon = 1e-12);
        let zero = ChainSpec::homogeneous(
            dmatrix![0.5, 0.5; 0.5, 0.5],
            DVector::from_row_slice(&[0.5, 0.5]),
            dmatrix![0.0; 0.0],
        )
        .unwrap();
        assert_eq!(lp_norm_partial_sum(&zero, 1, 5, &e1(), 6).unwrap().value, 0.0);
        assert!(lp_norm_partial_sum(&rademacher(), 1, 2, &e1(), 3).is_err());
    }

    #[test]
    fn sum_law_matches_moment_recursion() {
        let c = symmetric([1.0, 0.0]);
        let law = sum_law(&c, 1, 12, &e1(), SumLawOptions::default()).unwrap();
        assert_abs_diff_eq!(law.mass(), 1.0, epsilon = 1e-12);
        for p in [2u32, 4, 6] {
            let lp = lp_norm_partial_sum(&c, 1, 12, &e1(), p).unwrap().value;
            assert_abs_diff_eq!(law.lp_norm(p as f64), lp, epsilon = 1e-10);
        }
    }

    #[test]
    fn sum_law_cap_overflows() {
        let c = ChainSpec::homogeneous(
            dmatrix![0.5, 0.5; 0.5, 0.5],
            DVector::from_row_slice(&[0.5, 0.5]),
            dmatrix![1.0; -std::f64::consts::FRAC_1_PI],
        )
        .unwrap();
        let opts = SumLawOptions { cap: 50, grid: 1e-9 };
        assert!(matches!(
            sum_law(&c, 1, 200, &e1(), opts),
            Err(Error::SupportOverflow { cap: 50 })
        ));
    }

    #[test]
    fn running_max_of_two_rademacher_steps() {
        let law = running_max_law(&rademacher(), 1, 2, &e1(), SumLawOptions::default()).unwrap();
        assert_eq!(law.atoms.len(), 2);
        assert_abs_diff_eq!(law.abs_moment(2.0), 2.5, epsilon = 1e-15);
    }

    #[test]
    fn variance_comparison_is_one_for_iid() {
        let r = variance_comparison(&rademacher(), &e1(), &[(1, 5), (3, 20)]).unwrap();
        assert_abs_diff_eq!(r.min_ratio, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.max_ratio, 1.0, epsilon = 1e-12);
    }
}
