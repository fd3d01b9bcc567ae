//! Mixing and contraction coefficients.
//!
//! α(k) and φ(k) are taken over the coordinate σ-algebras σ(ξ_j) and σ(ξ_{j+k}). For a
//! Markov chain this is the same as the past/future definition, because dependence
//! between `𝓕_j` and `𝓕_{j+k,∞}` factors through the pair `(ξ_j, ξ_{j+k})`.
//! [`alpha_phi_window`] enumerates cylinder events on short windows and is there to
//! check that equivalence numerically.
//!
//! For a fixed past event `A` the optimal future event is explicit, so
//! `sup_B |P(A∩B) − P(A)P(B)| = P(A) · TV(P(ξ_{j+k} ∈ · | A), P(ξ_{j+k} ∈ ·))`
//! and only the past events are enumerated.

use std::ops::RangeInclusive;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};

/// Coefficients below this are reported as exactly zero.
pub const NOISE_FLOOR: f64 = 1e-15;

/// Default cap on event pairs enumerated per time `j`.
pub const EVENT_PAIR_CAP: u128 = 1 << 16;

/// α(k), φ(k) with the times attaining them.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AlphaPhi {
    pub k: usize,
    pub alpha: f64,
    pub phi: f64,
    pub alpha_at: usize,
    pub phi_at: usize,
}

fn floor_noise(v: f64) -> f64 {
    if v < NOISE_FLOOR {
        0.0
    } else {
        v
    }
}

/// `(max_A P(A)·TV_A, max_A TV_A)` for a joint law with rows = past outcomes.
fn event_sup(joint: &DMatrix<f64>, future: &DVector<f64>) -> (f64, f64) {
    let rows: Vec<usize> = (0..joint.nrows())
        .filter(|&x| joint.row(x).sum() > 0.0)
        .collect();
    let n = rows.len();
    let cols = joint.ncols();
    let mut alpha = 0.0f64;
    let mut phi = 0.0f64;
    let mut mass_b = vec![0.0; cols];
    for mask in 1u64..(1u64 << n) {
        mass_b.iter_mut().for_each(|v| *v = 0.0);
        for (bit, &x) in rows.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                for (y, m) in mass_b.iter_mut().enumerate() {
                    *m += joint[(x, y)];
                }
            }
        }
        let pa: f64 = mass_b.iter().sum();
        if pa <= 0.0 {
            continue;
        }
        let tv = 0.5
            * mass_b
                .iter()
                .zip(future.iter())
                .map(|(m, q)| (m / pa - q).abs())
                .sum::<f64>();
        phi = phi.max(tv);
        alpha = alpha.max(pa.min(1.0) * tv);
    }
    (alpha, phi)
}

fn check_cap(left: usize, right: usize, cap: u128) -> Result<()> {
    let size = 1u128
        .checked_shl((left + right) as u32)
        .unwrap_or(u128::MAX);
    if size > cap || left >= 63 {
        return Err(Error::EnumerationCap {
            what: "α/φ event pairs per time",
            size,
            cap,
            hint: "; raise the cap or enable event sampling",
        });
    }
    Ok(())
}

/// α(k) and φ(k) as the maximum over `j ∈ j_range` of the coordinate-event suprema.
pub fn alpha_phi(chain: &ChainSpec, k: usize, j_range: RangeInclusive<usize>) -> Result<AlphaPhi> {
    alpha_phi_with_cap(chain, k, j_range, EVENT_PAIR_CAP)
}

pub fn alpha_phi_with_cap(
    chain: &ChainSpec,
    k: usize,
    j_range: RangeInclusive<usize>,
    cap: u128,
) -> Result<AlphaPhi> {
    if k == 0 {
        return Err(Error::param("k", "gap must be ≥ 1"));
    }
    let mut out = AlphaPhi {
        k,
        alpha: 0.0,
        phi: 0.0,
        alpha_at: *j_range.start(),
        phi_at: *j_range.start(),
    };
    for j in j_range {
        check_cap(chain.state_size(j)?, chain.state_size(j + k)?, cap)?;
        let joint = chain.pair_joint(j, j + k)?;
        let (a, p) = event_sup(&joint.probs, &joint.right);
        if a > out.alpha {
            out.alpha = a;
            out.alpha_at = j;
        }
        if p > out.phi {
            out.phi = p;
            out.phi_at = j;
        }
    }
    out.alpha = floor_noise(out.alpha);
    out.phi = floor_noise(out.phi);
    Ok(out)
}

/// α and φ at a single time `j` over cylinder events on windows of width `w`:
/// past events on `(ξ_{j−w+1}, …, ξ_j)` and future events on `(ξ_{j+k}, …, ξ_{j+k+w−1})`.
pub fn alpha_phi_window(chain: &ChainSpec, k: usize, j: usize, w: usize) -> Result<(f64, f64)> {
    if k == 0 || w == 0 {
        return Err(Error::param("k, w", "gap and window width must be ≥ 1"));
    }
    let first = j.saturating_sub(w - 1).max(1);
    let past = enumerate_paths(chain, first, j, None)?;
    let bridge = chain.kernel_product(j, j + k)?;
    let future_start = j + k;
    let future_end = future_start + w - 1;
    // future paths conditioned on their first state
    let n_start = chain.state_size(future_start)?;
    let mut futures: Vec<(Vec<usize>, f64)> = Vec::new();
    for y in 0..n_start {
        let mut init = DVector::zeros(n_start);
        init[y] = 1.0;
        for (path, prob) in enumerate_paths(chain, future_start, future_end, Some(init))? {
            futures.push((path, prob));
        }
    }
    // index future outcomes as whole tuples
    let mut future_index: Vec<Vec<usize>> = futures.iter().map(|f| f.0.clone()).collect();
    future_index.sort();
    future_index.dedup();
    let size = 1u128
        .checked_shl((past.len() + future_index.len()).min(127) as u32)
        .unwrap_or(u128::MAX);
    if past.len() >= 63 || size > EVENT_PAIR_CAP * 1024 {
        return Err(Error::EnumerationCap {
            what: "cylinder events",
            size,
            cap: EVENT_PAIR_CAP * 1024,
            hint: "; use a narrower window",
        });
    }
    let mut joint = DMatrix::zeros(past.len(), future_index.len());
    for (r, (ppath, pprob)) in past.iter().enumerate() {
        let last = *ppath.last().expect("non-empty path");
        for (fpath, fprob) in &futures {
            let c = future_index.binary_search(fpath).expect("indexed");
            joint[(r, c)] += pprob * bridge[(last, fpath[0])] * fprob;
        }
    }
    let future_law = DVector::from_iterator(
        future_index.len(),
        (0..future_index.len()).map(|c| joint.column(c).sum()),
    );
    let (a, p) = event_sup(&joint, &future_law);
    Ok((floor_noise(a), floor_noise(p)))
}

/// All paths `(ξ_a, …, ξ_b)` with positive probability. `init` replaces the marginal at `a`.
fn enumerate_paths(
    chain: &ChainSpec,
    a: usize,
    b: usize,
    init: Option<DVector<f64>>,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let p = match init {
        Some(p) => p,
        None => chain.marginal(a)?,
    };
    let mut paths: Vec<(Vec<usize>, f64)> = p
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, w)| (vec![x], *w))
        .collect();
    for t in a..b {
        let k = chain.kernel(t)?;
        let mut next = Vec::with_capacity(paths.len() * k.ncols());
        for (path, w) in &paths {
            let x = *path.last().expect("non-empty path");
            for y in 0..k.ncols() {
                let pxy = k[(x, y)];
                if pxy > 0.0 {
                    let mut np = path.clone();
                    np.push(y);
                    next.push((np, w * pxy));
                }
            }
        }
        paths = next;
    }
    Ok(paths)
}

/// Dobrushin coefficient `π(Q_j)`: largest total-variation distance between two rows of `P_j`.
pub fn dobrushin_coefficient(chain: &ChainSpec, j: usize) -> Result<f64> {
    Ok(dobrushin_of(chain.kernel(j)?.as_ref()))
}

pub fn dobrushin_of(k: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for a in 0..k.nrows() {
        for b in (a + 1)..k.nrows() {
            let tv = 0.5 * (k.row(a) - k.row(b)).abs().sum();
            best = best.max(tv);
        }
    }
    best
}

/// Maximal correlation `ρ_j` between `ξ_j` and `ξ_{j+1}`: the largest singular value of
/// `D_j^{−1/2} J D_{j+1}^{−1/2}` after removing its trivial top component, where `J` is
/// the joint law. States with zero probability are dropped.
pub fn rho_coefficient(chain: &ChainSpec, j: usize) -> Result<f64> {
    let joint = chain.pair_joint(j, j + 1)?;
    let rows: Vec<usize> = (0..joint.left.len()).filter(|&x| joint.left[x] > 0.0).collect();
    let cols: Vec<usize> = (0..joint.right.len()).filter(|&y| joint.right[y] > 0.0).collect();
    let dropped = joint.left.len() - rows.len() + joint.right.len() - cols.len();
    if dropped > 0 {
        log::debug!("rho_{j}: dropped {dropped} zero-probability states");
    }
    if rows.len() < 2 || cols.len() < 2 {
        return Ok(0.0);
    }
    let b = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let (x, y) = (rows[r], cols[c]);
        joint.probs[(x, y)] / (joint.left[x] * joint.right[y]).sqrt()
            - (joint.left[x] * joint.right[y]).sqrt()
    });
    let sv = b.singular_values();
    Ok(sv.iter().copied().fold(0.0, f64::max).min(1.0))
}

/// Exponential envelope `α(k) ≤ Cδᵏ` and the first `n₀` with `φ(n₀) < ½`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Envelope {
    pub c: f64,
    pub delta: f64,
    pub n0: Option<usize>,
    /// Fewer than three strictly positive α values were available.
    pub degenerate: bool,
    /// Some α(k+1) exceeded α(k) by more than 1e−12.
    pub nonmonotone: bool,
}

impl Envelope {
    pub fn bound(&self, k: usize) -> f64 {
        self.c * self.delta.powi(k as i32)
    }

    /// `Σ_{m≥1} (Cδᵐ)^e` in closed form.
    pub fn power_sum(&self, exponent: f64) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        let q = self.delta.powf(exponent);
        if q >= 1.0 {
            return f64::INFINITY;
        }
        self.c.powf(exponent) * q / (1.0 - q)
    }
}

/// Fits `log α(k)` against `k` by least squares, then raises `C` to the smallest value
/// for which `α(k) ≤ Cδᵏ` holds at every computed `k`. `alphas[i]`, `phis[i]` are the
/// values at `k = i + 1`.
pub fn fit_envelope(alphas: &[f64], phis: &[f64]) -> Envelope {
    let positive: Vec<(f64, f64)> = alphas
        .iter()
        .enumerate()
        .filter(|(_, a)| **a > 0.0)
        .map(|(i, a)| ((i + 1) as f64, a.ln()))
        .collect();
    let nonmonotone = alphas.windows(2).any(|w| w[1] > w[0] + 1e-12);
    let n0 = phis.iter().position(|p| *p < 0.5).map(|i| i + 1);
    if nonmonotone {
        log::warn!("α is not monotone in k; envelope still covers every computed value");
    }
    let degenerate = positive.len() < 3;
    let delta = if positive.len() >= 2 {
        let n = positive.len() as f64;
        let mx = positive.iter().map(|p| p.0).sum::<f64>() / n;
        let my = positive.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = positive.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = positive.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxy / sxx).exp()
    } else {
        0.5
    };
    let mut c = alphas
        .iter()
        .enumerate()
        .map(|(i, a)| a / delta.powi(i as i32 + 1))
        .fold(0.0f64, f64::max);
    while alphas
        .iter()
        .enumerate()
        .any(|(i, a)| *a > c * delta.powi(i as i32 + 1))
    {
        c *= 1.0 + 4.0 * f64::EPSILON;
    }
    Envelope {
        c,
        delta,
        n0,
        degenerate,
        nonmonotone,
    }
}

/// α, φ, π and ρ over a range of gaps and times, with the fitted envelope.
#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    pub times: (usize, usize),
    pub coefficients: Vec<AlphaPhi>,
    /// `π(Q_j)` for `j` in `times`.
    pub dobrushin: Vec<f64>,
    /// `ρ_j` for `j` in `times`.
    pub rho: Vec<f64>,
    pub delta_pi: f64,
    pub rho_sup: f64,
    pub envelope: Envelope,
}

impl MixingReport {
    pub fn alphas(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.alpha).collect()
    }

    pub fn phis(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.phi).collect()
    }
}

pub fn mixing_report(
    chain: &ChainSpec,
    k_max: usize,
    j_range: RangeInclusive<usize>,
) -> Result<MixingReport> {
    if k_max == 0 {
        return Err(Error::param("k_max", "must be ≥ 1"));
    }
    let coefficients: Vec<AlphaPhi> = (1..=k_max)
        .into_par_iter()
        .map(|k| alpha_phi(chain, k, j_range.clone()))
        .collect::<Result<_>>()?;
    let dobrushin: Vec<f64> = j_range
        .clone()
        .map(|j| dobrushin_coefficient(chain, j))
        .collect::<Result<_>>()?;
    let rho: Vec<f64> = j_range
        .clone()
        .map(|j| rho_coefficient(chain, j))
        .collect::<Result<_>>()?;
    let alphas: Vec<f64> = coefficients.iter().map(|c| c.alpha).collect();
    let phis: Vec<f64> = coefficients.iter().map(|c| c.phi).collect();
    Ok(MixingReport {
        times: (*j_range.start(), *j_range.end()),
        delta_pi: dobrushin.iter().copied().fold(0.0, f64::max),
        rho_sup: rho.iter().copied().fold(0.0, f64::max),
        envelope: fit_envelope(&alphas, &phis),
        coefficients,
        dobrushin,
        rho,
    })
}

/// Two groups of consecutive intervals given by breakpoints `a_1 < … < a_{n+m+1}`:
/// the first group is `[a_j, a_{j+1} − 1]` for `j ≤ n`, the second is the same
/// construction for `j > n`, shifted right by the gap `k`.
#[derive(Clone, Debug, Serialize)]
pub struct HBlockSpec {
    pub breakpoints: Vec<usize>,
    pub first_count: usize,
}

impl HBlockSpec {
    pub fn new(breakpoints: Vec<usize>, first_count: usize) -> Result<Self> {
        if breakpoints.len() < 3
            || first_count == 0
            || first_count >= breakpoints.len() - 1
            || breakpoints[0] == 0
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::param(
                "block_spec",
                "need increasing 1-based breakpoints with both groups non-empty",
            ));
        }
        Ok(HBlockSpec {
            breakpoints,
            first_count,
        })
    }

    pub fn interval_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Intervals (inclusive) for gap `k`.
    pub fn intervals(&self, k: usize) -> Vec<(usize, usize)> {
        (0..self.interval_count())
            .map(|j| {
                let shift = if j >= self.first_count { k } else { 0 };
                (
                    self.breakpoints[j] + shift,
                    self.breakpoints[j + 1] - 1 + shift,
                )
            })
            .collect()
    }

    pub fn max_interval_len(&self) -> usize {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(1)
    }

    /// Default `ε₀ = π / (2 L · max interval length)`.
    pub fn default_eps0(&self, bound: f64) -> f64 {
        std::f64::consts::PI / (2.0 * bound.max(f64::MIN_POSITIVE) * self.max_interval_len() as f64)
    }
}

/// `|E e^{i(first + second)} − E e^{i·first} · E e^{i·second}|` for gap `k`, where each
/// group contributes `Σ_j t_j · (sum of X over interval j)`.
pub fn condition_h_gap(
    chain: &ChainSpec,
    spec: &HBlockSpec,
    k: usize,
    t: &[DVector<f64>],
) -> Result<f64> {
    if t.len() != spec.interval_count() {
        return Err(Error::Dimension(format!(
            "{} frequency vectors for {} intervals",
            t.len(),
            spec.interval_count()
        )));
    }
    let intervals = spec.intervals(k);
    let tau = intervals[spec.first_count - 1].1;
    let s = intervals[spec.first_count].0;
    let end = intervals.last().expect("non-empty").1;
    let phase_at = |time: usize| -> Option<&DVector<f64>> {
        intervals
            .iter()
            .position(|&(a, b)| a <= time && time <= b)
            .map(|j| &t[j])
    };

    // ψ_x = E[e^{i·first}; ξ_τ = x]
    let start = intervals[0].0;
    let mut psi: Vec<Complex<f64>> = chain
        .marginal(start)?
        .iter()
        .map(|p| Complex::new(*p, 0.0))
        .collect();
    for time in start..=tau {
        if time > start {
            psi = propagate(&psi, chain.kernel(time - 1)?.as_ref());
        }
        apply_phase(chain, time, phase_at(time), &mut psi)?;
    }
    // g_x = E[e^{i·second} | ξ_s = x]
    let mut g: Vec<Complex<f64>> = vec![Complex::new(1.0, 0.0); chain.state_size(end)?];
    for time in (s..=end).rev() {
        if time < end {
            g = pull_back(&g, chain.kernel(time)?.as_ref());
        }
        apply_phase(chain, time, phase_at(time), &mut g)?;
    }
    let bridge = chain.kernel_product(tau, s)?;
    if rows_identical(&bridge) {
        return Ok(0.0);
    }
    let h = pull_back(&g, &bridge);
    let p_tau = chain.marginal(tau)?;
    let h_bar: Complex<f64> = h.iter().zip(p_tau.iter()).map(|(hx, p)| hx * *p).sum();
    let gap: Complex<f64> = psi.iter().zip(h.iter()).map(|(a, hx)| a * (hx - h_bar)).sum();
    Ok(gap.norm())
}

fn rows_identical(k: &DMatrix<f64>) -> bool {
    (1..k.nrows()).all(|r| k.row(r) == k.row(0))
}

fn apply_phase(
    chain: &ChainSpec,
    time: usize,
    t: Option<&DVector<f64>>,
    v: &mut [Complex<f64>],
) -> Result<()> {
    if let Some(t) = t {
        let f = chain.values(time)?;
        for (x, vx) in v.iter_mut().enumerate() {
            let theta = f.row(x).transpose().dot(t);
            *vx *= Complex::new(theta.cos(), theta.sin());
        }
    }
    Ok(())
}

fn propagate(v: &[Complex<f64>], k: &DMatrix<f64>) -> Vec<Complex<f64>> {
    (0..k.ncols())
        .map(|y| (0..k.nrows()).map(|x| v[x] * k[(x, y)]).sum())
        .collect()
}

fn pull_back(g: &[Complex<f64>], k: &DMatrix<f64>) -> Vec<Complex<f64>> {
    (0..k.nrows())
        .map(|x| (0..k.ncols()).map(|y| g[y] * k[(x, y)]).sum())
        .collect()
}

/// Gap values over a range of `k` with a fitted `gap ≤ C′e^{−c′k}`.
#[derive(Clone, Debug, Serialize)]
pub struct HDecay {
    pub eps0: f64,
    pub ks: Vec<usize>,
    pub gaps: Vec<f64>,
    /// Every gap is zero.
    pub exact_zero: bool,
    /// Fitted decay rate (None when fewer than two gaps exceed the noise floor).
    pub c_prime: Option<f64>,
    /// Smallest constant making the bound hold at every computed `k`.
    pub big_c: Option<f64>,
}

/// Scans `k` with `t_j = ε₀ · u` for every interval.
pub fn condition_h_decay(
    chain: &ChainSpec,
    spec: &HBlockSpec,
    ks: &[usize],
    u: &DVector<f64>,
    eps0: Option<f64>,
) -> Result<HDecay> {
    let eps0 = eps0.unwrap_or_else(|| spec.default_eps0(chain.bound()));
    let t: Vec<DVector<f64>> = vec![u * eps0; spec.interval_count()];
    let gaps: Vec<f64> = ks
        .iter()
        .map(|&k| condition_h_gap(chain, spec, k, &t))
        .collect::<Result<_>>()?;
    let exact_zero = gaps.iter().all(|g| *g == 0.0);
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(&gaps)
        .filter(|(_, g)| **g > NOISE_FLOOR)
        .map(|(k, g)| (*k as f64, g.ln()))
        .collect();
    let (c_prime, big_c) = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let rate = -sxy / sxx;
        let c = ks
            .iter()
            .zip(&gaps)
            .map(|(k, g)| g * (rate * *k as f64).exp())
            .fold(0.0f64, f64::max);
        (Some(rate), Some(c))
    } else {
        (None, None)
    };
    Ok(HDecay {
        eps0,
        ks: ks.to_vec(),
        gaps,
        exact_zero,
        c_prime,
        big_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn chain(kernel: DMatrix<f64>, initial: &[f64]) -> ChainSpec {
        let n = kernel.nrows();
        let values = DMatrix::from_fn(n, 1, |x, _| 1.0 - 2.0 * x as f64 / (n - 1).max(1) as f64);
        ChainSpec::homogeneous(kernel, DVector::from_row_slice(initial), values).unwrap()
    }

    fn symmetric() -> ChainSpec {
        chain(dmatrix![0.75, 0.25; 0.25, 0.75], &[0.5, 0.5])
    }

    /// Brute force over every pair of events, straight from the definitions.
    fn brute_alpha_phi(j: &DMatrix<f64>) -> (f64, f64) {
        let (r, c) = j.shape();
        let mut best = (0.0f64, 0.0f64);
        for a in 0u32..(1 << r) {
            for b in 0u32..(1 << c) {
                let mut pab = 0.0;
                let mut pa = 0.0;
                let mut pb = 0.0;
                for x in 0..r {
                    for y in 0..c {
                        let inside_a = a & (1 << x) != 0;
                        let inside_b = b & (1 << y) != 0;
                        if inside_a {
                            pa += j[(x, y)];
                        }
                        if inside_b {
                            pb += j[(x, y)];
                        }
                        if inside_a && inside_b {
                            pab += j[(x, y)];
                        }
                    }
                }
                best.0 = best.0.max((pab - pa * pb).abs());
                if pa > 0.0 {
                    best.1 = best.1.max((pab / pa - pb).abs());
                }
            }
        }
        best
    }

    #[test]
    fn symmetric_chain_coefficients() {
        let c = symmetric();
        let r = alpha_phi(&c, 1, 1..=5).unwrap();
        assert_abs_diff_eq!(r.alpha, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(r.phi, 0.25, epsilon = 1e-15);
        let r = alpha_phi(&c, 2, 1..=5).unwrap();
        assert_abs_diff_eq!(r.alpha, 0.0625, epsilon = 1e-15);
        assert_abs_diff_eq!(dobrushin_coefficient(&c, 3).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho_coefficient(&c, 3).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_future_event_matches_brute_force() {
        let c = chain(
            dmatrix![0.5, 0.3, 0.2; 0.1, 0.6, 0.3; 0.3, 0.3, 0.4],
            &[0.6, 0.1, 0.3],
        );
        for k in 1..4 {
            for j in 1..4 {
                let joint = c.pair_joint(j, j + k).unwrap();
                let (a, p) = brute_alpha_phi(&joint.probs);
                let r = alpha_phi(&c, k, j..=j).unwrap();
                assert_abs_diff_eq!(r.alpha, a, epsilon = 1e-14);
                assert_abs_diff_eq!(r.phi, p, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn iid_chain_has_zero_coefficients() {
        let c = chain(dmatrix![0.3, 0.7; 0.3, 0.7], &[0.3, 0.7]);
        for k in 1..5 {
            let r = alpha_phi(&c, k, 1..=6).unwrap();
            assert_eq!((r.alpha, r.phi), (0.0, 0.0));
        }
        assert_eq!(dobrushin_coefficient(&c, 1).unwrap(), 0.0);
        assert_abs_diff_eq!(rho_coefficient(&c, 1).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn permutation_kernel_has_unit_rho() {
        let c = chain(dmatrix![0.0, 1.0; 1.0, 0.0], &[0.3, 0.7]);
        assert_abs_diff_eq!(rho_coefficient(&c, 1).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(dobrushin_coefficient(&c, 1).unwrap(), 1.0);
    }

    #[test]
    fn dobrushin_rows_example_matches_event_brute_force() {
        let k = dmatrix![0.9, 0.1; 0.2, 0.8];
        assert_abs_diff_eq!(dobrushin_of(&k), 0.7, epsilon = 1e-15);
        let mut brute = 0.0f64;
        for e in 0..4u32 {
            let mass = |r: usize| (0..2).filter(|y| e & (1 << y) != 0).map(|y| k[(r, y)]).sum::<f64>();
            brute = brute.max((mass(0) - mass(1)).abs());
        }
        assert_abs_diff_eq!(brute, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn window_events_agree_with_coordinate_events() {
        let c = chain(dmatrix![0.8, 0.2; 0.35, 0.65], &[0.9, 0.1]);
        for k in 1..4 {
            let coord = alpha_phi(&c, k, 3..=3).unwrap();
            for w in 1..=3 {
                let (a, p) = alpha_phi_window(&c, k, 3, w).unwrap();
                assert_abs_diff_eq!(a, coord.alpha, epsilon = 1e-13);
                assert_abs_diff_eq!(p, coord.phi, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let c = chain(dmatrix![0.5, 0.5; 0.5, 0.5], &[0.5, 0.5]);
        assert!(matches!(
            alpha_phi_with_cap(&c, 1, 1..=1, 8),
            Err(Error::EnumerationCap { .. })
        ));
    }

    #[test]
    fn envelope_of_symmetric_chain() {
        let c = symmetric();
        let r = mixing_report(&c, 10, 1..=12).unwrap();
        let env = &r.envelope;
        assert_abs_diff_eq!(env.delta, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(env.c, 0.25, epsilon = 1e-10);
        assert_eq!(env.n0, Some(1));
        assert!(!env.degenerate);
        for (i, a) in r.alphas().iter().enumerate() {
            assert!(*a <= env.bound(i + 1));
        }
    }

    #[test]
    fn envelope_degenerate_for_iid() {
        let env = fit_envelope(&[0.0; 6], &[0.0; 6]);
        assert!(env.degenerate);
        assert_eq!(env.c, 0.0);
        assert_eq!(env.delta, 0.5);
        assert_eq!(env.n0, Some(1));
    }

    #[test]
    fn slow_chain_from_a_point_mass_has_late_n0() {
        let c = chain(dmatrix![0.95, 0.05; 0.05, 0.95], &[1.0, 0.0]);
        let r = mixing_report(&c, 12, 1..=30).unwrap();
        assert!(r.coefficients[0].phi >= 0.5);
        assert!(r.envelope.n0.is_none_or(|n| n > 1));
        assert_abs_diff_eq!(r.envelope.delta, 0.9, epsilon = 0.02);
    }

    #[test]
    fn condition_h_single_index_blocks() {
        let c = symmetric();
        let spec = HBlockSpec::new(vec![1, 2, 3], 1).unwrap();
        let t = vec![DVector::from_element(1, std::f64::consts::FRAC_PI_2); 2];
        for k in 1..8 {
            let g = condition_h_gap(&c, &spec, k, &t).unwrap();
            // blocks {1} and {2+k}: E[(iξ₁)(iξ_{2+k})] = −0.5^{k+1}, both means vanish
            assert_abs_diff_eq!(g, 0.5f64.powi(k as i32 + 1), epsilon = 1e-14);
        }
        let zero = vec![DVector::from_element(1, 0.0); 2];
        assert_eq!(condition_h_gap(&c, &spec, 1, &zero).unwrap(), 0.0);
    }

    #[test]
    fn condition_h_is_exactly_zero_for_iid() {
        let c = chain(dmatrix![0.3, 0.7; 0.3, 0.7], &[0.5, 0.5]);
        let spec = HBlockSpec::new(vec![1, 3, 5, 6, 8], 2).unwrap();
        let d = condition_h_decay(&c, &spec, &(1..=12).collect::<Vec<_>>(), &DVector::from_element(1, 1.0), None)
            .unwrap();
        assert!(d.exact_zero);
        assert!(d.c_prime.is_none());
    }

    #[test]
    fn condition_h_decays_for_mixing_chain() {
        let c = chain(dmatrix![0.7, 0.2, 0.1; 0.25, 0.5, 0.25; 0.1, 0.3, 0.6], &[1.0, 0.0, 0.0]);
        let spec = HBlockSpec::new(vec![1, 3, 5, 7, 9], 2).unwrap();
        let d = condition_h_decay(&c, &spec, &(1..=12).collect::<Vec<_>>(), &DVector::from_element(1, 1.0), None)
            .unwrap();
        assert!(d.c_prime.unwrap() > 0.0);
        for (k, g) in d.ks.iter().zip(&d.gaps) {
            assert!(*g <= d.big_c.unwrap() * (-d.c_prime.unwrap() * *k as f64).exp() * (1.0 + 1e-12));
        }
    }
}
