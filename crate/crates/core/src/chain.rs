//! Time-inhomogeneous finite-state Markov chains with bounded vector observables.
//!
//! Times are 1-based. Kernel `P_j` maps the law of `ξ_j` to the law of `ξ_{j+1}`,
//! and the observable at time `j` is a table with one row `f_j(x) ∈ ℝ^d` per state.
//! Schedules are generators, so a periodic chain is addressable at any time without
//! materializing one matrix per step.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::sync::{Arc, Mutex, RwLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-stochastic transition matrix `|𝒳_j| × |𝒳_{j+1}|`.
pub type Kernel = DMatrix<f64>;
/// Observable table `|𝒳_j| × d`; row `x` is `f_j(x)`.
pub type Table = DMatrix<f64>;

/// Absolute tolerance for row sums and total masses.
pub const STOCHASTIC_TOL: f64 = 1e-12;

const PRODUCT_CACHE_LIMIT: usize = 4096;

/// Time-varying weight in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSchedule {
    Constant { value: f64 },
    /// `center + amplitude · sin(2πj / period)`
    Sine {
        center: f64,
        amplitude: f64,
        period: f64,
    },
    /// `j^(−exponent)`
    Power { exponent: f64 },
}

impl WeightSchedule {
    pub fn weight(&self, j: usize) -> f64 {
        match *self {
            WeightSchedule::Constant { value } => value,
            WeightSchedule::Sine {
                center,
                amplitude,
                period,
            } => center + amplitude * (2.0 * std::f64::consts::PI * j as f64 / period).sin(),
            WeightSchedule::Power { exponent } => (j as f64).powf(-exponent),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightSchedule::Constant { value } => (0.0..=1.0).contains(&value),
            WeightSchedule::Sine {
                center,
                amplitude,
                period,
            } => {
                period > 0.0
                    && center - amplitude.abs() >= 0.0
                    && center + amplitude.abs() <= 1.0
            }
            WeightSchedule::Power { exponent } => exponent >= 0.0 && exponent.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("weights", format!("{self:?} leaves [0, 1]")))
        }
    }
}

/// How the kernel at each time is produced.
#[derive(Clone, Debug)]
pub enum KernelSchedule {
    /// `P_j = list[j − 1]`; the chain is addressable for `j ≤ len + 1`.
    Explicit(Vec<Kernel>),
    /// `P_j = list[(j − 1) mod len]`.
    Periodic(Vec<Kernel>),
    /// `P_j = w_j · first + (1 − w_j) · second`.
    Mixture {
        first: Kernel,
        second: Kernel,
        weights: WeightSchedule,
    },
    /// Chain on consecutive pairs `(ξ_j, ξ_{j+1})`, state index `x · states + y`.
    EdgeLift {
        base: Box<KernelSchedule>,
        states: usize,
    },
}

impl KernelSchedule {
    /// Kernel `P_j`.
    pub fn kernel(&self, j: usize) -> Result<Cow<'_, Kernel>> {
        if j == 0 {
            return Err(Error::InvalidTime("kernel index 0 (times are 1-based)".into()));
        }
        match self {
            KernelSchedule::Explicit(list) => list.get(j - 1).map(Cow::Borrowed).ok_or(
                Error::HorizonExceeded {
                    requested: j + 1,
                    horizon: list.len() + 1,
                },
            ),
            KernelSchedule::Periodic(list) => Ok(Cow::Borrowed(&list[(j - 1) % list.len()])),
            KernelSchedule::Mixture {
                first,
                second,
                weights,
            } => {
                let w = weights.weight(j);
                Ok(Cow::Owned(first * w + second * (1.0 - w)))
            }
            KernelSchedule::EdgeLift { base, states } => {
                let next = base.kernel(j + 1)?;
                let n = *states;
                let mut lifted = DMatrix::zeros(n * n, n * n);
                for x in 0..n {
                    for y in 0..n {
                        for z in 0..n {
                            lifted[(x * n + y, y * n + z)] = next[(y, z)];
                        }
                    }
                }
                Ok(Cow::Owned(lifted))
            }
        }
    }

    /// Last time index whose state is addressable, if finite.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            KernelSchedule::Explicit(list) => Some(list.len() + 1),
            KernelSchedule::Periodic(_) | KernelSchedule::Mixture { .. } => None,
            KernelSchedule::EdgeLift { base, .. } => base.horizon().map(|h| h.saturating_sub(1)),
        }
    }
}

/// How the observable table at each time is produced.
#[derive(Clone, Debug)]
pub enum ObservableSchedule {
    Explicit(Vec<Table>),
    Periodic(Vec<Table>),
    /// `f_j = w_j · base[(j − 1) mod len]`.
    Scaled {
        base: Vec<Table>,
        scale: WeightSchedule,
    },
}

impl ObservableSchedule {
    pub fn table(&self, j: usize) -> Result<Cow<'_, Table>> {
        if j == 0 {
            return Err(Error::InvalidTime("observable index 0 (times are 1-based)".into()));
        }
        match self {
            ObservableSchedule::Explicit(list) => list.get(j - 1).map(Cow::Borrowed).ok_or(
                Error::HorizonExceeded {
                    requested: j,
                    horizon: list.len(),
                },
            ),
            ObservableSchedule::Periodic(list) => Ok(Cow::Borrowed(&list[(j - 1) % list.len()])),
            ObservableSchedule::Scaled { base, scale } => {
                Ok(Cow::Owned(&base[(j - 1) % base.len()] * scale.weight(j)))
            }
        }
    }

    pub fn horizon(&self) -> Option<usize> {
        match self {
            ObservableSchedule::Explicit(list) => Some(list.len()),
            _ => None,
        }
    }

    fn tables(&self) -> &[Table] {
        match self {
            ObservableSchedule::Explicit(l) | ObservableSchedule::Periodic(l) => l,
            ObservableSchedule::Scaled { base, .. } => base,
        }
    }
}

/// State-space sizes `|𝒳_j|`.
#[derive(Clone, Debug, PartialEq)]
pub enum StateSizes {
    Constant(usize),
    PerTime(Vec<usize>),
}

impl StateSizes {
    pub fn at(&self, j: usize) -> Result<usize> {
        match self {
            StateSizes::Constant(n) => Ok(*n),
            StateSizes::PerTime(v) => v.get(j.wrapping_sub(1)).copied().ok_or(
                Error::HorizonExceeded {
                    requested: j,
                    horizon: v.len(),
                },
            ),
        }
    }
}

/// A validated chain: kernels, initial law and observable.
pub struct ChainSpec {
    sizes: StateSizes,
    kernels: KernelSchedule,
    initial: DVector<f64>,
    observable: ObservableSchedule,
    bound: f64,
    dim: usize,
    horizon: Option<usize>,
    marginals: RwLock<Vec<DVector<f64>>>,
    products: Mutex<HashMap<(usize, usize), Arc<Kernel>>>,
}

impl Clone for ChainSpec {
    fn clone(&self) -> Self {
        ChainSpec {
            sizes: self.sizes.clone(),
            kernels: self.kernels.clone(),
            initial: self.initial.clone(),
            observable: self.observable.clone(),
            bound: self.bound,
            dim: self.dim,
            horizon: self.horizon,
            marginals: RwLock::new(vec![self.initial.clone()]),
            products: Mutex::new(HashMap::new()),
        }
    }
}

impl fmt::Debug for ChainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainSpec")
            .field("sizes", &self.sizes)
            .field("kernels", &self.kernels)
            .field("initial", &self.initial.as_slice())
            .field("bound", &self.bound)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

fn check_kernel(time: usize, k: &Kernel) -> Result<()> {
    for row in 0..k.nrows() {
        let mut sum = 0.0;
        for col in 0..k.ncols() {
            let value = k[(row, col)];
            if !(value >= 0.0) {
                return Err(Error::NegativeEntry {
                    time,
                    row,
                    col,
                    value,
                });
            }
            sum += value;
        }
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NonStochasticRow {
                time,
                row,
                sum,
                deficit: 1.0 - sum,
            });
        }
    }
    Ok(())
}

fn check_table(time: usize, t: &Table, bound: f64) -> Result<()> {
    for (idx, v) in t.iter().enumerate() {
        if !(v.abs() <= bound) {
            return Err(Error::BoundViolation {
                time,
                state: idx % t.nrows(),
                value: v.abs(),
                bound,
            });
        }
    }
    Ok(())
}

impl ChainSpec {
    /// Validates every invariant eagerly: shapes, stochastic rows, initial mass and
    /// the declared bound `L`.
    pub fn new(
        sizes: StateSizes,
        kernels: KernelSchedule,
        initial: DVector<f64>,
        observable: ObservableSchedule,
        bound: f64,
    ) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::param("L", format!("bound must be finite and ≥ 0, got {bound}")));
        }
        let tables = observable.tables();
        if tables.is_empty() {
            return Err(Error::Dimension("observable has no tables".into()));
        }
        let dim = tables[0].ncols();
        if dim == 0 {
            return Err(Error::Dimension("observable dimension d = 0".into()));
        }

        match (&sizes, &kernels) {
            (StateSizes::PerTime(_), KernelSchedule::Explicit(_)) => {}
            (StateSizes::PerTime(_), _) => {
                return Err(Error::Dimension(
                    "per-time state sizes require an explicit kernel list".into(),
                ))
            }
            (StateSizes::Constant(0), _) => {
                return Err(Error::Dimension("state space must be non-empty".into()))
            }
            _ => {}
        }
        let n1 = sizes.at(1)?;
        if initial.len() != n1 {
            return Err(Error::Dimension(format!(
                "initial law has {} entries, |𝒳_1| = {n1}",
                initial.len()
            )));
        }
        let mass: f64 = initial.iter().sum();
        if (mass - 1.0).abs() > STOCHASTIC_TOL || initial.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InitialLaw { sum: mass });
        }

        let shape_check = |time: usize, k: &Kernel| -> Result<()> {
            let (r, c) = (sizes.at(time)?, sizes.at(time + 1)?);
            if k.nrows() != r || k.ncols() != c {
                return Err(Error::Dimension(format!(
                    "kernel {time} is {}×{}, expected {r}×{c}",
                    k.nrows(),
                    k.ncols()
                )));
            }
            Ok(())
        };
        match &kernels {
            KernelSchedule::Explicit(list) | KernelSchedule::Periodic(list) => {
                if list.is_empty() {
                    return Err(Error::Dimension("empty kernel list".into()));
                }
                for (i, k) in list.iter().enumerate() {
                    shape_check(i + 1, k)?;
                    check_kernel(i + 1, k)?;
                }
            }
            KernelSchedule::Mixture {
                first,
                second,
                weights,
            } => {
                shape_check(1, first)?;
                shape_check(1, second)?;
                check_kernel(1, first)?;
                check_kernel(2, second)?;
                weights.validate()?;
            }
            KernelSchedule::EdgeLift { .. } => {}
        }

        match &observable {
            ObservableSchedule::Scaled { scale, .. } => scale.validate()?,
            ObservableSchedule::Periodic(_) if matches!(sizes, StateSizes::PerTime(_)) => {
                return Err(Error::Dimension(
                    "per-time state sizes require an explicit observable list".into(),
                ))
            }
            _ => {}
        }
        for (i, t) in tables.iter().enumerate() {
            let n = sizes.at(i + 1)?;
            if t.nrows() != n || t.ncols() != dim {
                return Err(Error::Dimension(format!(
                    "observable table {} is {}×{}, expected {n}×{dim}",
                    i + 1,
                    t.nrows(),
                    t.ncols()
                )));
            }
            check_table(i + 1, t, bound)?;
        }

        let horizon = [
            kernels.horizon(),
            observable.horizon(),
            match &sizes {
                StateSizes::PerTime(v) => Some(v.len()),
                StateSizes::Constant(_) => None,
            },
        ]
        .into_iter()
        .flatten()
        .min();

        Ok(ChainSpec {
            marginals: RwLock::new(vec![initial.clone()]),
            products: Mutex::new(HashMap::new()),
            sizes,
            kernels,
            initial,
            observable,
            bound,
            dim,
            horizon,
        })
    }

    /// Time-homogeneous chain with a single observable table.
    pub fn homogeneous(kernel: Kernel, initial: DVector<f64>, values: Table) -> Result<Self> {
        let n = kernel.nrows();
        let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ChainSpec::new(
            StateSizes::Constant(n),
            KernelSchedule::Periodic(vec![kernel]),
            initial,
            ObservableSchedule::Periodic(vec![values]),
            bound,
        )
    }

    /// The chain of consecutive pairs `(ξ_j, ξ_{j+1})` carrying a pair observable.
    /// Time `j` of the lifted chain holds `(ξ_j, ξ_{j+1})`, so `X_j = f_j(ξ_j, ξ_{j+1})`
    /// becomes an ordinary state observable.
    pub fn edge_lift(&self, pair: &crate::balance::PairObservable) -> Result<ChainSpec> {
        let n = match self.sizes {
            StateSizes::Constant(n) => n,
            StateSizes::PerTime(_) => {
                return Err(Error::Dimension(
                    "edge lift requires a constant state-space size".into(),
                ))
            }
        };
        if pair.states() != n {
            return Err(Error::Dimension(format!(
                "pair observable over {} states, chain has {n}",
                pair.states()
            )));
        }
        let p1 = self.kernels.kernel(1)?;
        let mut init = DVector::zeros(n * n);
        for x in 0..n {
            for y in 0..n {
                init[x * n + y] = self.initial[x] * p1[(x, y)];
            }
        }
        // renormalize to absorb rounding from the product
        let s: f64 = init.iter().sum();
        init /= s;
        let lifted_tables: Vec<Table> = pair
            .tables()
            .iter()
            .map(|t| {
                let d = t.dim;
                let mut out = DMatrix::zeros(n * n, d);
                for x in 0..n {
                    for y in 0..n {
                        for c in 0..d {
                            out[(x * n + y, c)] = t.value(x, y)[c];
                        }
                    }
                }
                out
            })
            .collect();
        let bound = lifted_tables
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let observable = if pair.is_periodic() {
            ObservableSchedule::Periodic(lifted_tables)
        } else {
            ObservableSchedule::Explicit(lifted_tables)
        };
        ChainSpec::new(
            StateSizes::Constant(n * n),
            KernelSchedule::EdgeLift {
                base: Box::new(self.kernels.clone()),
                states: n,
            },
            init,
            observable,
            bound,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared uniform bound `L = sup_j max_x |f_j(x)|_∞`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    pub fn sizes(&self) -> &StateSizes {
        &self.sizes
    }

    pub fn kernel_schedule(&self) -> &KernelSchedule {
        &self.kernels
    }

    pub fn observable_schedule(&self) -> &ObservableSchedule {
        &self.observable
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.initial
    }

    pub fn check_time(&self, j: usize) -> Result<()> {
        if j == 0 {
            return Err(Error::InvalidTime("time 0 (times are 1-based)".into()));
        }
        match self.horizon {
            Some(h) if j > h => Err(Error::HorizonExceeded {
                requested: j,
                horizon: h,
            }),
            _ => Ok(()),
        }
    }

    pub fn state_size(&self, j: usize) -> Result<usize> {
        self.check_time(j)?;
        self.sizes.at(j)
    }

    pub fn kernel(&self, j: usize) -> Result<Cow<'_, Kernel>> {
        self.check_time(j + 1)?;
        self.kernels.kernel(j)
    }

    /// Observable table at time `j`.
    pub fn values(&self, j: usize) -> Result<Cow<'_, Table>> {
        self.check_time(j)?;
        self.observable.table(j)
    }

    /// Drops memoized marginals and kernel products beyond the initial law.
    pub fn clear_caches(&self) {
        self.marginals.write().expect("marginal cache poisoned").truncate(1);
        self.products.lock().expect("product cache poisoned").clear();
    }

    /// Law of `ξ_j`, by forward propagation from the initial law (memoized).
    pub fn marginal(&self, j: usize) -> Result<DVector<f64>> {
        self.check_time(j)?;
        {
            let cache = self.marginals.read().expect("marginal cache poisoned");
            if let Some(m) = cache.get(j - 1) {
                return Ok(m.clone());
            }
        }
        let mut cache = self.marginals.write().expect("marginal cache poisoned");
        while cache.len() < j {
            let t = cache.len();
            let next = self.kernels.kernel(t)?.tr_mul(&cache[t - 1]);
            cache.push(next);
        }
        Ok(cache[j - 1].clone())
    }

    /// `P_i ⋯ P_{j−1}` (identity when `i = j`), memoized.
    pub fn kernel_product(&self, i: usize, j: usize) -> Result<Arc<Kernel>> {
        if i > j {
            return Err(Error::InvalidTime(format!("kernel product with i = {i} > j = {j}")));
        }
        self.check_time(i)?;
        self.check_time(j)?;
        if let Some(k) = self.products.lock().expect("product cache poisoned").get(&(i, j)) {
            return Ok(Arc::clone(k));
        }
        let mut acc = DMatrix::identity(self.sizes.at(i)?, self.sizes.at(i)?);
        for t in i..j {
            acc *= self.kernels.kernel(t)?.as_ref();
        }
        let acc = Arc::new(acc);
        let mut cache = self.products.lock().expect("product cache poisoned");
        if cache.len() >= PRODUCT_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert((i, j), Arc::clone(&acc));
        Ok(acc)
    }

    /// Joint law of `(ξ_i, ξ_j)` for `i < j`.
    pub fn pair_joint(&self, i: usize, j: usize) -> Result<JointLaw> {
        if i >= j {
            return Err(Error::InvalidTime(format!("pair_joint needs i < j, got ({i}, {j})")));
        }
        let left = self.marginal(i)?;
        let product = self.kernel_product(i, j)?;
        let mut probs = product.as_ref().clone();
        for (x, mut row) in probs.row_iter_mut().enumerate() {
            let w = left[x];
            for v in row.iter_mut() {
                *v *= w;
            }
        }
        let right = self.marginal(j)?;
        Ok(JointLaw {
            times: (i, j),
            probs,
            left,
            right,
        })
    }

    /// Mean vector `E[X_j]`.
    pub fn mean(&self, j: usize) -> Result<DVector<f64>> {
        let p = self.marginal(j)?;
        Ok(self.values(j)?.tr_mul(&p))
    }

    /// Observable table at time `j` with the mean subtracted from every row.
    pub fn centered_values(&self, j: usize) -> Result<Table> {
        let mean = self.mean(j)?;
        let mut t = self.values(j)?.into_owned();
        for mut row in t.row_iter_mut() {
            row -= mean.transpose();
        }
        Ok(t)
    }
}

/// `P(ξ_i = x, ξ_j = y)` with cached marginals.
#[derive(Clone, Debug)]
pub struct JointLaw {
    pub times: (usize, usize),
    pub probs: DMatrix<f64>,
    pub left: DVector<f64>,
    pub right: DVector<f64>,
}

impl JointLaw {
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Outcome of the uniform ellipticity check with counting reference measures.
#[derive(Clone, Debug, Serialize)]
pub struct EllipticityReport {
    pub eps0: f64,
    pub times: (usize, usize),
    /// `sup_{i,x,y} p_i(x, y)`
    pub sup_density: f64,
    /// `inf_{i,x,z} Σ_y p_i(x, y) p_{i+1}(y, z)`
    pub two_step_inf: f64,
    /// `(i, x, z)` attaining the two-step infimum.
    pub two_step_witness: (usize, usize, usize),
    pub upper_ok: bool,
    pub lower_ok: bool,
}

impl EllipticityReport {
    pub fn passes(&self) -> bool {
        self.upper_ok && self.lower_ok
    }
}

/// Checks `sup p_i ≤ 1/ε₀` and the two-step lower bound `≥ ε₀` for `i` in `times`.
pub fn check_uniform_ellipticity(
    chain: &ChainSpec,
    eps0: f64,
    times: RangeInclusive<usize>,
) -> Result<EllipticityReport> {
    if !(eps0 > 0.0) {
        return Err(Error::param("eps0", "must be positive"));
    }
    let (start, end) = (*times.start(), *times.end());
    if start == 0 || end < start {
        return Err(Error::InvalidTime(format!("empty or 0-based range {start}..={end}")));
    }
    let mut sup_density = 0.0f64;
    let mut two_step_inf = f64::INFINITY;
    let mut witness = (start, 0, 0);
    for i in times {
        let k = chain.kernel(i)?;
        sup_density = k.iter().fold(sup_density, |m, v| m.max(*v));
        let two = k.as_ref() * chain.kernel(i + 1)?.as_ref();
        for x in 0..two.nrows() {
            for z in 0..two.ncols() {
                if two[(x, z)] < two_step_inf {
                    two_step_inf = two[(x, z)];
                    witness = (i, x, z);
                }
            }
        }
    }
    Ok(EllipticityReport {
        eps0,
        times: (start, end),
        sup_density,
        two_step_inf,
        two_step_witness: witness,
        upper_ok: sup_density <= 1.0 / eps0,
        lower_ok: two_step_inf >= eps0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn symmetric_chain_is_valid_with_unit_bound() {
        let c = symmetric([0.5, 0.5]);
        assert_eq!(c.bound(), 1.0);
        assert_eq!(c.dim(), 1);
        assert_eq!(c.horizon(), None);
    }

    #[test]
    fn row_sum_violation_reports_row_and_sum() {
        let err = ChainSpec::homogeneous(
            dmatrix![0.6, 0.5; 0.5, 0.5],
            DVector::from_row_slice(&[0.5, 0.5]),
            dmatrix![1.0; -1.0],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 0"), "{msg}");
        assert!(msg.contains("row sum 1.1 ≠ 1"), "{msg}");
    }

    #[test]
    fn bound_violation_is_rejected() {
        let err = ChainSpec::new(
            StateSizes::Constant(2),
            KernelSchedule::Periodic(vec![dmatrix![0.5, 0.5; 0.5, 0.5]]),
            DVector::from_row_slice(&[0.5, 0.5]),
            ObservableSchedule::Periodic(vec![dmatrix![1.0; -2.0]]),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::BoundViolation { state: 1, .. }));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = ChainSpec::homogeneous(
            dmatrix![0.5, 0.5; 0.5, 0.5],
            DVector::from_row_slice(&[1.0]),
            dmatrix![1.0; -1.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn periodic_schedule_is_addressable_far_out() {
        let c = ChainSpec::new(
            StateSizes::Constant(2),
            KernelSchedule::Periodic(vec![
                dmatrix![0.9, 0.1; 0.2, 0.8],
                dmatrix![0.3, 0.7; 0.6, 0.4],
            ]),
            DVector::from_row_slice(&[0.5, 0.5]),
            ObservableSchedule::Periodic(vec![dmatrix![1.0; -1.0]]),
            1.0,
        )
        .unwrap();
        assert_eq!(c.kernel(1_000_000).unwrap()[(0, 0)], 0.3);
        assert_eq!(c.kernel(999_999).unwrap()[(0, 0)], 0.9);
        assert_eq!(c.values(1_000_000).unwrap()[(1, 0)], -1.0);
    }

    #[test]
    fn marginals() {
        let c = symmetric([0.5, 0.5]);
        for j in [1, 2, 7, 40] {
            let m = c.marginal(j).unwrap();
            assert_abs_diff_eq!(m[0], 0.5, epsilon = 1e-15);
        }
        let c = symmetric([1.0, 0.0]);
        let m = c.marginal(2).unwrap();
        assert_abs_diff_eq!(m[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.25, epsilon = 1e-15);

        let iid = ChainSpec::homogeneous(
            dmatrix![0.3, 0.7; 0.3, 0.7],
            DVector::from_row_slice(&[1.0, 0.0]),
            dmatrix![1.0; -1.0],
        )
        .unwrap();
        for j in 2..6 {
            assert_abs_diff_eq!(iid.marginal(j).unwrap()[1], 0.7, epsilon = 1e-15);
        }
    }

    #[test]
    fn pair_joint_examples() {
        let c = symmetric([0.5, 0.5]);
        let j = c.pair_joint(1, 2).unwrap();
        assert_abs_diff_eq!(j.probs[(0, 0)], 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(j.probs[(0, 1)], 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(j.probs[(1, 0)], 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(j.probs[(1, 1)], 0.375, epsilon = 1e-15);
        let j = c.pair_joint(1, 3).unwrap();
        assert_abs_diff_eq!(j.probs[(0, 0)], 0.5 * (0.75f64.powi(2) + 0.25f64.powi(2)), epsilon = 1e-15);
        assert!(c.pair_joint(3, 3).is_err());

        let iid = ChainSpec::homogeneous(
            dmatrix![0.3, 0.7; 0.3, 0.7],
            DVector::from_row_slice(&[0.3, 0.7]),
            dmatrix![1.0; -1.0],
        )
        .unwrap();
        let j = iid.pair_joint(2, 5).unwrap();
        let product = &j.left * j.right.transpose();
        assert!((j.probs - product).abs().max() < 1e-15);
    }

    #[test]
    fn explicit_list_has_finite_horizon() {
        let c = ChainSpec::new(
            StateSizes::PerTime(vec![2, 3, 2]),
            KernelSchedule::Explicit(vec![
                dmatrix![0.2, 0.3, 0.5; 1.0, 0.0, 0.0],
                dmatrix![0.5, 0.5; 0.1, 0.9; 0.0, 1.0],
            ]),
            DVector::from_row_slice(&[0.5, 0.5]),
            ObservableSchedule::Explicit(vec![
                dmatrix![1.0; 0.0],
                dmatrix![1.0; 0.0; -1.0],
                dmatrix![0.5; -0.5],
            ]),
            1.0,
        )
        .unwrap();
        assert_eq!(c.horizon(), Some(3));
        assert_eq!(c.state_size(2).unwrap(), 3);
        let m3 = c.marginal(3).unwrap();
        assert_abs_diff_eq!(m3.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(matches!(c.marginal(4), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn ellipticity_examples() {
        let c = symmetric([0.5, 0.5]);
        let r = check_uniform_ellipticity(&c, 0.375, 1..=5).unwrap();
        assert_abs_diff_eq!(r.two_step_inf, 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(r.sup_density, 0.75, epsilon = 1e-15);
        assert!(r.passes());

        let iid = ChainSpec::homogeneous(
            dmatrix![0.5, 0.5; 0.5, 0.5],
            DVector::from_row_slice(&[0.5, 0.5]),
            dmatrix![1.0; -1.0],
        )
        .unwrap();
        let r = check_uniform_ellipticity(&iid, 0.5, 1..=3).unwrap();
        assert!(r.passes());
        assert_abs_diff_eq!(r.two_step_inf, 0.5, epsilon = 1e-15);

        let blocked = ChainSpec::homogeneous(
            dmatrix![1.0, 0.0, 0.0; 0.0, 0.5, 0.5; 0.0, 0.5, 0.5],
            DVector::from_row_slice(&[1.0, 0.0, 0.0]),
            dmatrix![1.0; 0.0; -1.0],
        )
        .unwrap();
        let r = check_uniform_ellipticity(&blocked, 0.01, 1..=2).unwrap();
        assert_eq!(r.two_step_inf, 0.0);
        assert!(!r.passes());
    }
}
