//! Block partitions of the index set: separation and amplitude selection, the greedy
//! construction, and exact verification of the block inequalities.
//!
//! Geometry: `M_j = [a_j, b_j]` are the variance-carrying blocks, consecutive blocks
//! satisfy `a_{j+1} = b_j + r + 1`, and `I_j = [a_j, b_j + r]` absorbs the gap that
//! follows `M_j`. The `I_j` are disjoint and cover `1..` up to the horizon.
//! `k_n = max{k : b_k ≤ n}` counts blocks whose `M` part has been completed.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mixing::{self, Envelope};
use crate::moments::{self, CovPass, SumLawOptions};

/// Which exponent enters `Σ_m α(m)^e` in `Q₀`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QExponent {
    /// `e = 2 − 2/p`
    #[default]
    TwoMinus,
    /// `e = 1 − 2/p`, matching the covariance inequality.
    OneMinus,
}

impl QExponent {
    pub fn value(self, p: f64) -> f64 {
        match self {
            QExponent::TwoMinus => 2.0 - 2.0 / p,
            QExponent::OneMinus => 1.0 - 2.0 / p,
        }
    }
}

/// Smallest separation `r` with `Σ_{m≥1} (Cδ^{rm})^{1−2/p} < 1/(32 c_p)`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Separation {
    pub r: usize,
    /// Envelope sum at the chosen `r`.
    pub sum: f64,
    pub threshold: f64,
}

const MAX_SEPARATION: usize = 1 << 24;

pub fn select_separation(envelope: &Envelope, p: f64, cp: f64) -> Result<Separation> {
    if !(p > 2.0) {
        return Err(Error::param("p", format!("need p > 2, got {p}")));
    }
    if !(cp > 0.0) {
        return Err(Error::param("cp", format!("need c_p > 0, got {cp}")));
    }
    let threshold = 1.0 / (32.0 * cp);
    let e = 1.0 - 2.0 / p;
    if envelope.c == 0.0 {
        return Ok(Separation {
            r: 1,
            sum: 0.0,
            threshold,
        });
    }
    if !(envelope.delta < 1.0) {
        return Err(Error::NoEnvelope {
            delta: envelope.delta,
        });
    }
    let log_c = envelope.c.ln() * e;
    let log_delta = envelope.delta.ln() * e;
    let sum_at = |r: usize| -> f64 {
        // C^e q / (1 − q) with q = δ^{r e}, evaluated in logs
        let log_q = log_delta * r as f64;
        (log_c + log_q - (-log_q.exp()).ln_1p()).exp()
    };
    // the sum is decreasing in r: double, then bisect
    let mut hi = 1usize;
    while !(sum_at(hi) < threshold) {
        hi *= 2;
        if hi > MAX_SEPARATION {
            return Err(Error::param("separation", "no r below 2^24 meets the threshold"));
        }
    }
    let mut lo = hi / 2;
    if hi == 1 {
        return Ok(Separation {
            r: 1,
            sum: sum_at(1),
            threshold,
        });
    }
    // invariant: sum_at(lo) ≥ threshold (or lo = 0), sum_at(hi) < threshold
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if sum_at(mid) < threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Separation {
        r: hi,
        sum: sum_at(hi),
        threshold,
    })
}

/// `Q₀ = 2c_p(1 + rL)(1 + L) Σ_{m≥1} α(m)^e`, with the sum taken over the envelope.
pub fn compute_q0(r: usize, p: f64, bound: f64, envelope: &Envelope, cp: f64, exponent: QExponent) -> Result<f64> {
    if !(p > 2.0) {
        return Err(Error::param("p", format!("need p > 2, got {p}")));
    }
    let sum = envelope.power_sum(exponent.value(p));
    if !sum.is_finite() {
        return Err(Error::NoEnvelope {
            delta: envelope.delta,
        });
    }
    Ok(2.0 * cp * (1.0 + r as f64 * bound) * (1.0 + bound) * sum)
}

/// `Q(A) = Q₀ + 2√(3AQ₀)`
pub fn q_of(a: f64, q0: f64) -> f64 {
    q0 + 2.0 * (3.0 * a * q0).sqrt()
}

/// `(Q₀, Q(A))`
pub fn compute_q(
    a: f64,
    r: usize,
    p: f64,
    bound: f64,
    envelope: &Envelope,
    cp: f64,
    exponent: QExponent,
) -> Result<(f64, f64)> {
    if !(a > 1.0) {
        return Err(Error::param("A", format!("need A > 1, got {a}")));
    }
    let q0 = compute_q0(r, p, bound, envelope, cp, exponent)?;
    Ok((q0, q_of(a, q0)))
}

/// Smallest `A` with `A ≥ 4Q(A) + 1` and its certificate `A − 4Q(A) − 1 ≥ 0`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Amplitude {
    pub a: f64,
    pub q0: f64,
    pub q_a: f64,
    pub certificate: f64,
    /// Root found by bisection, for comparison with the closed form.
    pub bisection: f64,
}

pub fn select_amplitude(q0: f64) -> Result<Amplitude> {
    if !(q0 >= 0.0 && q0.is_finite()) {
        return Err(Error::param("Q₀", format!("need a finite Q₀ ≥ 0, got {q0}")));
    }
    // x = √A solves x² − 8√(3Q₀)x − (4Q₀ + 1) = 0
    let root = (8.0 * (3.0 * q0).sqrt() + (208.0 * q0 + 4.0).sqrt()) / 2.0;
    let mut a = root * root;
    let g = |a: f64| a - 4.0 * q_of(a, q0) - 1.0;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    while g(a) < 0.0 {
        a = a * (1.0 + 4.0 * f64::EPSILON) + f64::MIN_POSITIVE;
    }
    Ok(Amplitude {
        a,
        q0,
        q_a: q_of(a, q0),
        certificate: g(a),
        bisection: hi,
    })
}

/// One block `M_j = [a, b]` with its covering interval `I_j = [a, i_end]`.
#[derive(Clone, Debug, Serialize)]
pub struct Block {
    pub a: usize,
    pub b: usize,
    pub i_end: usize,
    /// `I_j` was cut short by the horizon.
    pub truncated: bool,
    /// Exact `Var(S(M_j)·u₀)`.
    pub variance: f64,
    /// Exact `Cov(Θ_j)`, `Θ_j = Σ_{k∈I_j} (X_k − E X_k)`.
    pub theta_cov: DMatrix<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockPartition {
    pub u0: DVector<f64>,
    pub p: f64,
    pub r: usize,
    pub amplitude: f64,
    pub bound: f64,
    pub horizon: usize,
    pub blocks: Vec<Block>,
    /// Indices after the last covering interval, where a block was opened but did not
    /// reach the target variance.
    pub open_tail: Option<(usize, usize)>,
}

impl BlockPartition {
    /// `k_n = max{k : b_k ≤ n}` (0 before the first block closes).
    pub fn k_n(&self, n: usize) -> usize {
        self.blocks.partition_point(|blk| blk.b <= n)
    }

    /// `n − max I_{k_n}`; negative while `n` is still inside the gap of block `k_n`.
    pub fn residual(&self, n: usize) -> i64 {
        match self.k_n(n) {
            0 => n as i64,
            k => n as i64 - self.blocks[k - 1].i_end as i64,
        }
    }

    /// Ends of the covering intervals, where `S_n` equals the sum of the `Θ_j` so far.
    pub fn checkpoints(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.i_end).collect()
    }

    /// Gaps `(b_q + 1, length)` between `M_q` and `M_{q+1}`, clipped to the horizon.
    pub fn gaps(&self) -> Vec<(usize, usize)> {
        self.blocks
            .iter()
            .map(|b| (b.b + 1, b.i_end - b.b))
            .collect()
    }
}

/// Greedy construction: each block starts `r + 1` after the previous block ends and
/// closes at the first index where `Var(S(M)·u₀) ≥ A`.
pub fn build_blocks(
    chain: &ChainSpec,
    u0: &DVector<f64>,
    amplitude: f64,
    r: usize,
    horizon: usize,
    p: f64,
) -> Result<BlockPartition> {
    if !(amplitude >= 1.0) {
        return Err(Error::param("amplitude", format!("need A ≥ 1, got {amplitude}")));
    }
    if r == 0 {
        return Err(Error::param("separation", "need r ≥ 1"));
    }
    if (u0.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::param("u0", "direction must be a unit vector"));
    }
    let horizon = match chain.horizon() {
        Some(h) => horizon.min(h),
        None => horizon,
    };
    let mut blocks = Vec::new();
    let mut a = 1usize;
    let mut open_tail = None;
    while a <= horizon {
        let mut pass = CovPass::new(chain, a, Some(u0))?;
        let mut closed = None;
        for b in a..=horizon {
            let v = pass.push_scalar(1.0)?;
            if v >= amplitude {
                closed = Some((b, v));
                break;
            }
        }
        let Some((b, variance)) = closed else {
            if blocks.is_empty() {
                return Err(Error::VarianceStarved {
                    index: a,
                    target: amplitude,
                    horizon,
                });
            }
            open_tail = Some((a, horizon));
            break;
        };
        let i_end = (b + r).min(horizon);
        let theta_cov = moments::cov_partial_sum(chain, a, i_end)?.matrix;
        blocks.push(Block {
            a,
            b,
            i_end,
            truncated: i_end < b + r,
            variance,
            theta_cov,
        });
        a = b + r + 1;
    }
    Ok(BlockPartition {
        u0: u0.clone(),
        p,
        r,
        amplitude,
        bound: chain.bound(),
        horizon,
        blocks,
        open_tail,
    })
}

/// Horizon that fits about `count` blocks, estimated from the variance growth in
/// direction `u0` over the first few thousand steps; at most `cap`.
pub fn auto_horizon(
    chain: &ChainSpec,
    u0: &DVector<f64>,
    amplitude: f64,
    r: usize,
    count: usize,
    cap: usize,
) -> Result<usize> {
    let probe = cap.clamp(1, 4096);
    let v = *moments::prefix_variances(chain, 1, probe, u0)?.last().expect("non-empty probe");
    let growth = v / probe as f64;
    if !(growth > 0.0) {
        return Ok(cap);
    }
    let per_block = (amplitude / growth).ceil() + r as f64 + 1.0;
    Ok(((1.1 * count as f64 * per_block).ceil() as usize).clamp(1, cap))
}

/// Horizon and amplitude for about `count` blocks within `cap` steps.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct HorizonFit {
    pub horizon: usize,
    pub amplitude: f64,
    /// The requested amplitude when it had to be lowered to fit the cap.
    pub reduced_from: Option<f64>,
}

/// Like [`auto_horizon`], but lowers the amplitude (never below 1) when `count` blocks of
/// the requested amplitude cannot fit within `cap`.
pub fn fit_horizon(
    chain: &ChainSpec,
    u0: &DVector<f64>,
    amplitude: f64,
    r: usize,
    count: usize,
    cap: usize,
) -> Result<HorizonFit> {
    let horizon = auto_horizon(chain, u0, amplitude, r, count, cap)?;
    let keep = HorizonFit {
        horizon,
        amplitude,
        reduced_from: None,
    };
    if horizon < cap {
        return Ok(keep);
    }
    let total = *moments::prefix_variances(chain, 1, cap, u0)?.last().expect("cap ≥ 1");
    // per-block budget with room for the separation gaps and the open tail
    let steps = cap as f64 / (1.25 * count as f64) - r as f64 - 1.0;
    let fitted = (total / cap as f64 * steps).max(1.0);
    if fitted >= amplitude {
        return Ok(keep);
    }
    Ok(HorizonFit {
        horizon: cap,
        amplitude: fitted,
        reduced_from: Some(amplitude),
    })
}

/// Separation and amplitude chosen from an envelope, with optional overrides.
#[derive(Clone, Debug, Serialize)]
pub struct PartitionPlan {
    pub p: f64,
    pub cp: f64,
    pub exponent: QExponent,
    pub separation: Option<Separation>,
    pub r: usize,
    pub q0: f64,
    pub amplitude: Amplitude,
    pub a: f64,
    pub r_overridden: bool,
    pub a_overridden: bool,
}

pub fn plan_partition(
    envelope: &Envelope,
    bound: f64,
    p: f64,
    cp: f64,
    exponent: QExponent,
    r_override: Option<usize>,
    a_override: Option<f64>,
) -> Result<PartitionPlan> {
    let separation = match r_override {
        Some(_) => None,
        None => Some(select_separation(envelope, p, cp)?),
    };
    let r = r_override.unwrap_or_else(|| separation.as_ref().map_or(1, |s| s.r));
    let q0 = compute_q0(r, p, bound, envelope, cp, exponent)?;
    let amplitude = select_amplitude(q0)?;
    let a = a_override.unwrap_or(amplitude.a);
    Ok(PartitionPlan {
        p,
        cp,
        exponent,
        separation,
        r,
        q0,
        a,
        amplitude,
        r_overridden: r_override.is_some(),
        a_overridden: a_override.is_some(),
    })
}

/// Exact evaluation of the block inequalities on a built partition.
#[derive(Clone, Debug, Serialize)]
pub struct BlockVerification {
    /// `min_j min_u ‖Θ_j·u‖₂`
    pub a1: f64,
    /// `max_j max_{m∈I_j} max_u ‖Σ_{k=a_j}^m X_k·u‖₂`
    pub a2: f64,
    /// `max_j max_{a∈I_j} ‖Σ_{k=a}^{max I_j} X_k‖₂`
    pub c: f64,
    /// `min_n λ_min(V_n)/k_n` over `n` with `k_n ≥ 1`.
    pub r1: f64,
    /// `max_n λ_max(V_n)/k_n` over the same `n`.
    pub r2: f64,
    /// Blocks violating `√A ≤ ‖S(M_j)·u₀‖₂ ≤ √A + L`.
    pub amplitude_violations: Vec<usize>,
    pub separated: bool,
    pub covering: bool,
    pub k_n_consistent: bool,
    /// Per prefix `k`: `Var(S(M^{(k)})) / Σ_{i≤k} Var(S(M_i))`.
    pub sandwich_ratios: Vec<f64>,
    pub sandwich_holds: bool,
    /// Per prefix `k`: `|Var(S(M^{(k)}))/Var(S(I^{(k)})) − 1|`.
    pub ratio_deviations: Vec<f64>,
    /// `2Q(A)/A`
    pub ratio_bound: f64,
    pub ratio_holds: bool,
    /// Hypotheses of the gap-ratio bound (`A > 1`, `Var(S(M_j)) ∈ [A, 2A]`) hold.
    pub ratio_hypotheses: bool,
    /// `Σ_k Var(S(I_k ∖ M_k))`, the within-gap variance that the `Q(A)` bound leaves out.
    pub gap_variance: f64,
}

/// Relative slack used when comparing exact quantities that were accumulated in a
/// different order.
const EXACT_SLACK: f64 = 1e-12;

pub fn verify_partition(
    chain: &ChainSpec,
    partition: &BlockPartition,
    q_a: f64,
) -> Result<BlockVerification> {
    let u0 = &partition.u0;
    let blocks = &partition.blocks;
    let sqrt_a = partition.amplitude.sqrt();

    let mut amplitude_violations = Vec::new();
    for (j, blk) in blocks.iter().enumerate() {
        let norm = blk.variance.max(0.0).sqrt();
        let upper = sqrt_a + partition.bound;
        if blk.variance < partition.amplitude || norm > upper * (1.0 + EXACT_SLACK) {
            amplitude_violations.push(j + 1);
        }
    }
    let separated = blocks.windows(2).all(|w| w[1].a - w[0].b == partition.r + 1);
    let covering = blocks.first().is_none_or(|b| b.a == 1)
        && blocks.windows(2).all(|w| w[1].a == w[0].i_end + 1)
        && blocks.iter().all(|b| b.a <= b.b && b.b <= b.i_end);
    let mut k_n_consistent = blocks
        .iter()
        .enumerate()
        .all(|(j, b)| partition.k_n(b.b) == j + 1);
    let mut prev = 0;
    for n in 1..=partition.horizon {
        let k = partition.k_n(n);
        if k < prev {
            k_n_consistent = false;
        }
        prev = k;
        let covered: i64 = blocks[..k]
            .iter()
            .map(|b| (b.i_end - b.a + 1) as i64)
            .sum();
        if covered + partition.residual(n) != n as i64 {
            k_n_consistent = false;
        }
    }

    // (3.1) and (3.2): per-block prefix and suffix covariances
    let mut a1 = f64::INFINITY;
    let mut a2 = 0.0f64;
    let mut c = 0.0f64;
    for blk in blocks {
        let mut pass = CovPass::new(chain, blk.a, None)?;
        for _ in blk.a..=blk.i_end {
            let v = pass.push(1.0)?;
            a2 = a2.max(linalg::eigen_extremes(v).1.max(0.0).sqrt());
        }
        a1 = a1.min(linalg::eigen_extremes(pass.cov()).0.max(0.0).sqrt());
        for v in moments::suffix_covariances(chain, blk.a, blk.i_end, None)? {
            c = c.max(v.trace().max(0.0).sqrt());
        }
    }
    if blocks.is_empty() {
        a1 = 0.0;
    }

    // (3.4) over n with k_n ≥ 1
    let mut r1 = f64::INFINITY;
    let mut r2 = 0.0f64;
    if let Some(first) = blocks.first() {
        let mut pass = CovPass::new(chain, 1, None)?;
        for n in 1..=partition.horizon {
            let v = pass.push(1.0)?;
            if n < first.b {
                continue;
            }
            let k = partition.k_n(n) as f64;
            let (lo, hi) = linalg::eigen_extremes(v);
            r1 = r1.min(lo / k);
            r2 = r2.max(hi / k);
        }
    } else {
        r1 = 0.0;
    }

    // sandwich and gap ratio along prefixes, in direction u₀
    let mut union_pass = CovPass::new(chain, 1, Some(u0))?;
    let mut full_pass = CovPass::new(chain, 1, Some(u0))?;
    let mut sandwich_ratios = Vec::with_capacity(blocks.len());
    let mut ratio_deviations = Vec::with_capacity(blocks.len());
    let mut block_sum = 0.0;
    let mut gap_variance = 0.0;
    for blk in blocks {
        let mut var_m = 0.0;
        let mut var_i = 0.0;
        for t in blk.a..=blk.i_end {
            let w = if t <= blk.b { 1.0 } else { 0.0 };
            let vm = union_pass.push_scalar(w)?;
            let vi = full_pass.push_scalar(1.0)?;
            if t == blk.b {
                var_m = vm;
            }
            var_i = vi;
        }
        if blk.i_end > blk.b {
            gap_variance += *moments::prefix_variances(chain, blk.b + 1, blk.i_end, u0)?
                .last()
                .expect("non-empty gap");
        }
        block_sum += blk.variance;
        sandwich_ratios.push(if block_sum > 0.0 { var_m / block_sum } else { 1.0 });
        ratio_deviations.push(if var_i > 0.0 { (var_m / var_i - 1.0).abs() } else { 0.0 });
    }
    let sandwich_holds = sandwich_ratios
        .iter()
        .all(|r| *r >= 0.5 * (1.0 - EXACT_SLACK) && *r <= 1.5 * (1.0 + EXACT_SLACK));
    let a = partition.amplitude;
    let ratio_bound = 2.0 * q_a / a;
    let ratio_holds = ratio_deviations
        .iter()
        .all(|d| *d <= ratio_bound * (1.0 + EXACT_SLACK) + EXACT_SLACK);
    let ratio_hypotheses =
        a > 1.0 && blocks.iter().all(|b| b.variance >= a && b.variance <= 2.0 * a);

    Ok(BlockVerification {
        a1,
        a2,
        c,
        r1,
        r2,
        amplitude_violations,
        separated,
        covering,
        k_n_consistent,
        sandwich_ratios,
        sandwich_holds,
        ratio_deviations,
        ratio_bound,
        ratio_holds,
        ratio_hypotheses,
        gap_variance,
    })
}

/// `|Cov(S(M₁), S(M₂))|` against `8‖S(M₁)‖_p‖S(M₂)‖_p α(r)^{1−2/p}`.
#[derive(Clone, Debug, Serialize)]
pub struct CovarianceCheck {
    pub r: usize,
    pub cov: f64,
    pub lp1: f64,
    pub lp2: f64,
    pub alpha: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `α(r)` is the coefficient between `σ(ξ_t, t ≤ max M₁)` and `σ(ξ_t, t ≥ min M₂)`,
/// which for a Markov chain is the coordinate coefficient at `j = max M₁`.
pub fn covariance_inequality_check(
    chain: &ChainSpec,
    m1: &[usize],
    m2: &[usize],
    p: u32,
    u: &DVector<f64>,
) -> Result<CovarianceCheck> {
    let hi1 = *m1.iter().max().ok_or_else(|| Error::param("M₁", "empty"))?;
    let lo2 = *m2.iter().min().ok_or_else(|| Error::param("M₂", "empty"))?;
    if lo2 <= hi1 {
        return Err(Error::param("M₂", "need min M₂ − max M₁ ≥ 1"));
    }
    let r = lo2 - hi1;
    let cov = moments::cross_covariance(chain, m1, m2, u)?;
    let (s1, w1) = moments::indicator_weights(m1)?;
    let (s2, w2) = moments::indicator_weights(m2)?;
    let lp1 = moments::lp_norm_weighted(chain, s1, &w1, u, p)?.value;
    let lp2 = moments::lp_norm_weighted(chain, s2, &w2, u, p)?.value;
    let alpha = mixing::alpha_phi(chain, r, hi1..=hi1)?.alpha;
    let bound = 8.0 * lp1 * lp2 * alpha.powf(1.0 - 2.0 / p as f64);
    // an exact zero bound is compared against accumulated rounding in the covariance
    let slack = EXACT_SLACK * (1.0 + lp1 * lp2);
    Ok(CovarianceCheck {
        r,
        cov: cov.abs(),
        lp1,
        lp2,
        alpha,
        bound,
        pass: cov.abs() <= bound + slack,
    })
}

/// `‖𝒟_q‖_{L^p}` per gap, where `𝒟_q = max_{b_q ≤ n < a_{q+1}} |S_n − S_{b_q}|`.
#[derive(Clone, Debug, Serialize)]
pub struct TailStatistics {
    pub p: f64,
    /// `(q, ‖𝒟_q‖_p, exact)`
    pub norms: Vec<(usize, f64, bool)>,
    /// `max_q ‖𝒟_q‖_p`
    pub uniform_bound: f64,
    pub exact: bool,
}

/// Paths used per gap when the exact running-maximum law is too large.
pub const TAIL_FALLBACK_PATHS: usize = 20_000;

pub fn tail_statistics(
    chain: &ChainSpec,
    partition: &BlockPartition,
    p: f64,
    seed: u64,
) -> Result<TailStatistics> {
    if !(p >= 1.0) {
        return Err(Error::param("p", "need p ≥ 1"));
    }
    let mut norms = Vec::new();
    for (q, (start, len)) in partition.gaps().into_iter().enumerate() {
        let q = q + 1;
        if len == 0 {
            norms.push((q, 0.0, true));
            continue;
        }
        match moments::running_max_law(chain, start, len, &partition.u0, SumLawOptions::default()) {
            Ok(law) => norms.push((q, law.lp_norm(p), true)),
            Err(Error::SupportOverflow { .. }) => {
                log::info!("gap {q}: running-max law too large, sampling instead");
                let samples = crate::sim::running_max_samples(
                    chain,
                    start,
                    len,
                    &partition.u0,
                    TAIL_FALLBACK_PATHS,
                    seed.wrapping_add(q as u64),
                )?;
                let m = samples.iter().map(|v| v.abs().powf(p)).sum::<f64>() / samples.len() as f64;
                norms.push((q, m.powf(1.0 / p), false));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TailStatistics {
        p,
        uniform_bound: norms.iter().map(|n| n.1).fold(0.0, f64::max),
        exact: norms.iter().all(|n| n.2),
        norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn chain(kernel: DMatrix<f64>, initial: &[f64]) -> ChainSpec {
        ChainSpec::homogeneous(kernel, DVector::from_row_slice(initial), dmatrix![1.0; -1.0]).unwrap()
    }

    fn rademacher() -> ChainSpec {
        chain(dmatrix![0.5, 0.5; 0.5, 0.5], &[0.5, 0.5])
    }

    fn symmetric() -> ChainSpec {
        chain(dmatrix![0.75, 0.25; 0.25, 0.75], &[0.5, 0.5])
    }

    fn env(c: f64, delta: f64) -> Envelope {
        Envelope {
            c,
            delta,
            n0: Some(1),
            degenerate: false,
            nonmonotone: false,
        }
    }

    fn e1() -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }

    /// Linear scan straight from the definition, no logs.
    fn separation_oracle(c: f64, delta: f64, p: f64, cp: f64) -> usize {
        let e = 1.0 - 2.0 / p;
        (1..).find(|&r| {
            let q = delta.powf(r as f64 * e);
            c.powf(e) * q / (1.0 - q) < 1.0 / (32.0 * cp)
        })
        .unwrap()
    }

    #[test]
    fn separation_examples() {
        assert_eq!(select_separation(&env(1.0, 0.5), 4.0, 8.0).unwrap().r, 17);
        let iid = Envelope {
            c: 0.0,
            delta: 0.5,
            n0: Some(1),
            degenerate: true,
            nonmonotone: false,
        };
        assert_eq!(select_separation(&iid, 4.0, 8.0).unwrap().r, 1);
        let quarter = select_separation(&env(1.0, 0.25), 4.0, 8.0).unwrap().r;
        assert_eq!(quarter, separation_oracle(1.0, 0.25, 4.0, 8.0));
        assert!(quarter < 17);
        for (c, d) in [(0.25, 0.5), (3.0, 0.9), (0.01, 0.2), (1.0, 0.99)] {
            assert_eq!(select_separation(&env(c, d), 4.0, 8.0).unwrap().r, separation_oracle(c, d, 4.0, 8.0));
        }
        assert!(matches!(
            select_separation(&env(1.0, 1.0), 4.0, 8.0),
            Err(Error::NoEnvelope { .. })
        ));
        assert_eq!(select_separation(&env(1.0, 1e-300), 4.0, 8.0).unwrap().r, 1);
    }

    #[test]
    fn q_examples() {
        assert_abs_diff_eq!(q_of(9.0, 1.0), 1.0 + 2.0 * 27f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(q_of(9.0, 1.0), 11.3923, epsilon = 1e-4);
        assert_eq!(q_of(50.0, 0.0), 0.0);
        let (q0, _) = compute_q(9.0, 2, 4.0, 1.0, &env(1.0, 0.5), 8.0, QExponent::TwoMinus).unwrap();
        let s = 2f64.powf(-1.5) / (1.0 - 2f64.powf(-1.5));
        assert_abs_diff_eq!(s, 0.54692, epsilon = 1e-5);
        assert_abs_diff_eq!(q0, 96.0 * s, epsilon = 1e-12);
        assert_abs_diff_eq!(q0, 52.50, epsilon = 0.01);
        let (q1, _) = compute_q(9.0, 2, 4.0, 1.0, &env(1.0, 0.5), 8.0, QExponent::OneMinus).unwrap();
        assert_abs_diff_eq!(q1, 96.0 * 2f64.powf(-0.5) / (1.0 - 2f64.powf(-0.5)), epsilon = 1e-12);
        assert!(compute_q(1.0, 2, 4.0, 1.0, &env(1.0, 0.5), 8.0, QExponent::TwoMinus).is_err());
    }

    #[test]
    fn amplitude_examples() {
        let a0 = select_amplitude(0.0).unwrap();
        assert_eq!(a0.a, 1.0);
        assert!(a0.certificate >= 0.0);
        let a1 = select_amplitude(1.0).unwrap();
        let root = (8.0 * 3f64.sqrt() + 212f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(a1.a, root * root, epsilon = 1e-9);
        assert_abs_diff_eq!(a1.a, 201.88, epsilon = 0.01);
        assert_abs_diff_eq!(a1.bisection, a1.a, epsilon = 1e-8);
        assert!(a1.certificate >= 0.0);
        let a4 = select_amplitude(4.0).unwrap();
        assert!(a4.a > a1.a && a4.certificate >= 0.0);
        assert_abs_diff_eq!(a4.bisection, a4.a, epsilon = 1e-7);
    }

    #[test]
    fn rademacher_blocks() {
        let c = rademacher();
        let part = build_blocks(&c, &e1(), 9.0, 2, 200, 4.0).unwrap();
        assert_eq!((part.blocks[0].a, part.blocks[0].b, part.blocks[0].i_end), (1, 9, 11));
        assert_eq!((part.blocks[1].a, part.blocks[1].b), (12, 20));
        assert_eq!(part.k_n(20), 2);
        assert_eq!(part.k_n(19), 1);
        assert_eq!(part.k_n(8), 0);
        assert_abs_diff_eq!(part.blocks[0].theta_cov[(0, 0)], 11.0, epsilon = 1e-12);

        let v = verify_partition(&c, &part, 0.0).unwrap();
        assert!(v.amplitude_violations.is_empty() && v.separated && v.covering && v.k_n_consistent);
        for r in &v.sandwich_ratios {
            assert_abs_diff_eq!(*r, 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(v.r1, 9.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v.r2, 19.0, epsilon = 1e-9);
        assert!(v.r1 >= 9.0 - 1e-9 && v.r2 <= 22.0);
    }

    #[test]
    fn printed_gap_bound_ignores_within_gap_variance() {
        // α ≡ 0 makes Q(A) = 0, yet the gaps carry variance 2 per block
        let c = rademacher();
        let part = build_blocks(&c, &e1(), 9.0, 2, 200, 4.0).unwrap();
        let v = verify_partition(&c, &part, 0.0).unwrap();
        assert!(v.ratio_hypotheses);
        assert_eq!(v.ratio_bound, 0.0);
        assert_abs_diff_eq!(v.ratio_deviations[0], 2.0 / 11.0, epsilon = 1e-12);
        assert!(!v.ratio_holds);
        let gap_steps: usize = part.blocks.iter().map(|b| b.i_end - b.b).sum();
        assert_abs_diff_eq!(v.gap_variance, gap_steps as f64, epsilon = 1e-9);
    }

    #[test]
    fn symmetric_first_block_closes_at_three() {
        let c = symmetric();
        let part = build_blocks(&c, &e1(), 9.0, 2, 100, 4.0).unwrap();
        // Var(S_{1,2}) = 3, Var(S_{1,3}) = 3 + 2(0.5 + 0.25) + 2·0.5 + 1 = 6.5
        assert!(part.blocks[0].b > 3);
        let var = moments::prefix_variances(&c, 1, 10, &e1()).unwrap();
        let expected = var.iter().position(|v| *v >= 9.0).unwrap() + 1;
        assert_eq!(part.blocks[0].b, expected);
        assert_abs_diff_eq!(var[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_observable_is_variance_starved() {
        let c = ChainSpec::homogeneous(
            dmatrix![0.5, 0.5; 0.5, 0.5],
            DVector::from_row_slice(&[0.5, 0.5]),
            dmatrix![0.0; 0.0],
        )
        .unwrap();
        assert!(matches!(
            build_blocks(&c, &e1(), 9.0, 2, 50, 4.0),
            Err(Error::VarianceStarved { index: 1, .. })
        ));
    }

    #[test]
    fn auto_partition_on_symmetric_chain() {
        let c = symmetric();
        let report = mixing::mixing_report(&c, 12, 1..=12).unwrap();
        let plan = plan_partition(&report.envelope, 1.0, 4.0, 8.0, QExponent::TwoMinus, None, None).unwrap();
        assert!(plan.amplitude.certificate >= 0.0);
        let horizon = (4.0 * plan.a / 3.0) as usize + 4 * plan.r;
        let part = build_blocks(&c, &e1(), plan.a, plan.r, horizon, 4.0).unwrap();
        let v = verify_partition(&c, &part, plan.amplitude.q_a).unwrap();
        assert!(part.blocks.len() >= 3);
        assert!(v.sandwich_holds && v.ratio_holds && v.amplitude_violations.is_empty());
        for r in &v.sandwich_ratios {
            assert!(*r > 0.5 && *r < 1.5);
        }
    }

    #[test]
    fn covariance_inequality_examples() {
        let c = symmetric();
        let r = covariance_inequality_check(&c, &[1], &[2], 4, &e1()).unwrap();
        assert_abs_diff_eq!(r.cov, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(r.bound, 8.0 * 0.125f64.sqrt(), epsilon = 1e-12);
        assert!(r.pass);
        let r = covariance_inequality_check(&c, &[1], &[3], 4, &e1()).unwrap();
        assert_abs_diff_eq!(r.cov, 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(r.bound, 2.0, epsilon = 1e-12);
        let r = covariance_inequality_check(&rademacher(), &[1, 2, 3], &[6, 7], 4, &e1()).unwrap();
        assert!(r.cov.abs() < 1e-15 && r.pass);
    }

    #[test]
    fn tail_norms() {
        let c = rademacher();
        let part = build_blocks(&c, &e1(), 9.0, 1, 60, 4.0).unwrap();
        let t = tail_statistics(&c, &part, 4.0, 1).unwrap();
        for (_, n, exact) in &t.norms[..t.norms.len() - 1] {
            assert!(*exact);
            assert_abs_diff_eq!(*n, 1.0, epsilon = 1e-12);
        }
        let part = build_blocks(&c, &e1(), 9.0, 2, 60, 2.0).unwrap();
        let t = tail_statistics(&c, &part, 2.0, 1).unwrap();
        assert_abs_diff_eq!(t.norms[0].1, 2.5f64.sqrt(), epsilon = 1e-12);
    }
}
