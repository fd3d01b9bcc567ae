//! Distances between laws used by the Monte Carlo diagnostics.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::moments::DiscreteLaw;

fn std_normal() -> Normal {
    Normal::standard()
}

/// `Φ(x)`
pub fn phi_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// `φ(x)`
pub fn phi_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn phi_inv(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// `sup_x |F_N(x) − Φ(x)|` for a sample (sorted in place).
pub fn ks_normal(sample: &mut [f64]) -> f64 {
    if sample.is_empty() {
        return f64::NAN;
    }
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in sample.iter().enumerate() {
        let f = phi_cdf(*x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

/// Standard deviation of the KS statistic under the null, `≈ 0.26/√N`.
pub fn ks_null_stderr(n: usize) -> f64 {
    0.2603 / (n as f64).sqrt()
}

/// `sup_x |F(x) − Φ(x/σ)|` for a finite law.
pub fn ks_discrete_normal(law: &DiscreteLaw, sigma: f64) -> f64 {
    let mut cum = 0.0;
    let mut d = 0.0f64;
    for (v, w) in &law.atoms {
        let f = phi_cdf(v / sigma);
        d = d.max((f - cum).abs());
        cum += w;
        d = d.max((cum - f).abs());
    }
    d
}

/// `W₁` between two equal-size samples (both sorted in place).
pub fn w1_samples(a: &mut [f64], b: &mut [f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "equal sample sizes");
    if a.is_empty() {
        return 0.0;
    }
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// `∫_{lo}^{hi} Φ(x/σ) dx`, using `∫Φ(z)dz = zΦ(z) + φ(z)`.
fn int_phi(lo: f64, hi: f64, sigma: f64) -> f64 {
    let g = |x: f64| {
        let z = x / sigma;
        sigma * (z * phi_cdf(z) + phi_pdf(z))
    };
    g(hi) - g(lo)
}

/// `∫ |F(x) − c| dx` over `[lo, hi]` against `Φ(x/σ)`, splitting where `Φ(x/σ) = c`.
fn segment(lo: f64, hi: f64, c: f64, sigma: f64) -> f64 {
    let cross = if c <= 0.0 {
        f64::NEG_INFINITY
    } else if c >= 1.0 {
        f64::INFINITY
    } else {
        sigma * phi_inv(c)
    };
    let mut total = 0.0;
    // below the crossing Φ < c, above it Φ > c
    let mid_lo = cross.clamp(lo, hi);
    if mid_lo > lo {
        total += c * (mid_lo - lo) - int_phi(lo, mid_lo, sigma);
    }
    if hi > mid_lo {
        total += int_phi(mid_lo, hi, sigma) - c * (hi - mid_lo);
    }
    total
}

/// Exact `W₁(F, N(0, σ²)) = ∫ |F(x) − Φ(x/σ)| dx` for a finite law `F`.
pub fn w1_discrete_normal(law: &DiscreteLaw, sigma: f64) -> f64 {
    let atoms = &law.atoms;
    if atoms.is_empty() {
        return f64::NAN;
    }
    let first = atoms[0].0;
    let last = atoms[atoms.len() - 1].0;
    // left tail ∫_{−∞}^{x₁} Φ, right tail ∫_{x_n}^{∞} (1 − Φ) = ∫_{−∞}^{−x_n} Φ
    let tail = |x: f64| sigma * ((x / sigma) * phi_cdf(x / sigma) + phi_pdf(x / sigma));
    let mut total = tail(first) + tail(-last);
    let mut cum = 0.0;
    for w in atoms.windows(2) {
        cum += w[0].1;
        total += segment(w[0].0, w[1].0, cum, sigma);
    }
    total
}

/// Sample quantile by linear interpolation (sorts in place).
pub fn quantile(sample: &mut [f64], q: f64) -> f64 {
    if sample.is_empty() {
        return f64::NAN;
    }
    sample.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sample.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sample.len() {
        sample[i] * (1.0 - frac) + sample[i + 1] * frac
    } else {
        sample[i]
    }
}

/// Mean and standard error of the mean.
pub fn mean_se(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    if sample.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = sample.iter().sum::<f64>() / n;
    if sample.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Trapezoid integration of |F − Φ| on a fine grid.
    fn w1_numeric(law: &DiscreteLaw, sigma: f64) -> f64 {
        // integer endpoints and unit-fraction cells keep the integer atoms on cell edges
        let lo = (-12.0 * sigma - 20.0).floor();
        let per_unit = 2000;
        let steps = (2.0 * -lo) as usize * per_unit;
        let h = 1.0 / per_unit as f64;
        let cdf = |x: f64| law.atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).sum::<f64>();
        (0..steps)
            .map(|i| {
                let x = lo + (i as f64 + 0.5) * h;
                (cdf(x) - phi_cdf(x / sigma)).abs() * h
            })
            .sum()
    }

    fn binomial_sum(n: usize) -> DiscreteLaw {
        // law of a sum of n independent ±1 signs
        let mut atoms = Vec::new();
        let mut c = 1.0f64;
        for k in 0..=n {
            if k > 0 {
                c = c * (n - k + 1) as f64 / k as f64;
            }
            atoms.push((2.0 * k as f64 - n as f64, c / 2f64.powi(n as i32)));
        }
        DiscreteLaw { atoms }
    }

    #[test]
    fn ks_of_single_sign() {
        let law = binomial_sum(1);
        assert_abs_diff_eq!(ks_discrete_normal(&law, 1.0), 0.5 - phi_cdf(-1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(ks_discrete_normal(&law, 1.0), 0.3413, epsilon = 1e-4);
        let mut sample: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_abs_diff_eq!(ks_normal(&mut sample), 0.3413, epsilon = 1e-3);
    }

    #[test]
    fn exact_w1_matches_quadrature() {
        for n in [1usize, 2, 9] {
            let law = binomial_sum(n);
            let sigma = (n as f64).sqrt();
            assert_abs_diff_eq!(w1_discrete_normal(&law, sigma), w1_numeric(&law, sigma), epsilon = 1e-5);
        }
        let point = DiscreteLaw { atoms: vec![(0.0, 1.0)] };
        // E|N(0,1)| = √(2/π)
        assert_abs_diff_eq!(
            w1_discrete_normal(&point, 1.0),
            (2.0 / std::f64::consts::PI).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sample_w1_and_quantiles() {
        let mut a = vec![3.0, 1.0, 2.0];
        let mut b = vec![2.0, 4.0, 3.0];
        assert_abs_diff_eq!(w1_samples(&mut a, &mut b), 1.0, epsilon = 1e-15);
        let mut s = vec![4.0, 1.0, 3.0, 2.0];
        assert_abs_diff_eq!(quantile(&mut s, 0.5), 2.5, epsilon = 1e-15);
    }
}
