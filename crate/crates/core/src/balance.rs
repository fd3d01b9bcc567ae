//! Edge observables `X_j = f_j(ξ_j, ξ_{j+1})`, hexagon balances and the variance
//! sandwich in terms of balance variances.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSpec, STOCHASTIC_TOL};
use crate::error::{Error, Result};
use crate::moments;

/// `f_j : 𝒳 × 𝒳 → ℝ^d` stored densely, `values[(x · states + y) · dim + c]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    pub states: usize,
    pub dim: usize,
    values: Vec<f64>,
}

impl PairTable {
    pub fn new(states: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if states == 0 || dim == 0 || values.len() != states * states * dim {
            return Err(Error::Dimension(format!(
                "pair table needs {states}·{states}·{dim} values, got {}",
                values.len()
            )));
        }
        Ok(PairTable { states, dim, values })
    }

    pub fn from_fn(states: usize, dim: usize, f: impl Fn(usize, usize) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(states * states * dim);
        for x in 0..states {
            for y in 0..states {
                let v = f(x, y);
                if v.len() != dim {
                    return Err(Error::Dimension(format!(
                        "pair value at ({x}, {y}) has {} components, d = {dim}",
                        v.len()
                    )));
                }
                values.extend(v);
            }
        }
        PairTable::new(states, dim, values)
    }

    /// `f(x, y)`
    pub fn value(&self, x: usize, y: usize) -> &[f64] {
        let at = (x * self.states + y) * self.dim;
        &self.values[at..at + self.dim]
    }

    pub fn project(&self, x: usize, y: usize, u: &DVector<f64>) -> f64 {
        self.value(x, y).iter().zip(u.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Per-time pair observable, either an explicit list (`f_j = tables[j − 1]`) or periodic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairObservable {
    tables: Vec<PairTable>,
    periodic: bool,
}

impl PairObservable {
    pub fn new(tables: Vec<PairTable>, periodic: bool) -> Result<Self> {
        let Some(first) = tables.first() else {
            return Err(Error::Dimension("pair observable has no tables".into()));
        };
        if tables
            .iter()
            .any(|t| t.states != first.states || t.dim != first.dim)
        {
            return Err(Error::Dimension("pair tables disagree on shape".into()));
        }
        Ok(PairObservable { tables, periodic })
    }

    /// Time-homogeneous `f(x, y)`.
    pub fn constant(table: PairTable) -> Self {
        PairObservable {
            tables: vec![table],
            periodic: true,
        }
    }

    /// `f(x, y) = g(x)`, a state observable viewed as an edge observable.
    pub fn from_state_values(values: &[Vec<f64>]) -> Result<Self> {
        let n = values.len();
        let d = values.first().map_or(0, |v| v.len());
        Ok(PairObservable::constant(PairTable::from_fn(n, d, |x, _| {
            values[x].clone()
        })?))
    }

    pub fn states(&self) -> usize {
        self.tables[0].states
    }

    pub fn dim(&self) -> usize {
        self.tables[0].dim
    }

    pub fn tables(&self) -> &[PairTable] {
        &self.tables
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// `f_j`
    pub fn table(&self, j: usize) -> Result<&PairTable> {
        if j == 0 {
            return Err(Error::InvalidTime("pair observable index 0".into()));
        }
        if self.periodic {
            Ok(&self.tables[(j - 1) % self.tables.len()])
        } else {
            self.tables.get(j - 1).ok_or(Error::HorizonExceeded {
                requested: j,
                horizon: self.tables.len(),
            })
        }
    }
}

/// Probability law on hexagon configurations `(x_{i−2}, x_{i−1}, x_i, y_{i−1}, y_i, y_{i+1})`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HexagonLaw {
    /// `(x_{i−2}, x_{i−1}, x_i)` is a path of the chain and `(y_{i−1}, y_i, y_{i+1})` an
    /// independent path of the chain.
    IndependentCopies,
    /// Explicit atoms; masses must sum to 1.
    Table { atoms: Vec<([usize; 6], f64)> },
}

/// Default cap on enumerated hexagon configurations.
pub const HEXAGON_CAP: u128 = 1 << 22;

fn hexagon_atoms(chain: &ChainSpec, i: usize, law: &HexagonLaw, cap: u128) -> Result<Vec<([usize; 6], f64)>> {
    if i < 3 {
        return Err(Error::InvalidTime(format!("hexagon at position {i} needs i ≥ 3")));
    }
    match law {
        HexagonLaw::Table { atoms } => {
            let mass: f64 = atoms.iter().map(|a| a.1).sum();
            if (mass - 1.0).abs() > STOCHASTIC_TOL || atoms.iter().any(|a| !(a.1 >= 0.0)) {
                return Err(Error::param(
                    "hexagon_law",
                    format!("atoms must be nonnegative with total mass 1, got {mass}"),
                ));
            }
            if atoms.len() as u128 > cap {
                return Err(Error::EnumerationCap {
                    what: "hexagon configurations",
                    size: atoms.len() as u128,
                    cap,
                    hint: "",
                });
            }
            Ok(atoms.clone())
        }
        HexagonLaw::IndependentCopies => {
            let sizes = [
                chain.state_size(i - 2)?,
                chain.state_size(i - 1)?,
                chain.state_size(i)?,
                chain.state_size(i - 1)?,
                chain.state_size(i)?,
                chain.state_size(i + 1)?,
            ];
            let size: u128 = sizes.iter().map(|s| *s as u128).product();
            if size > cap {
                return Err(Error::EnumerationCap {
                    what: "hexagon configurations",
                    size,
                    cap,
                    hint: "; supply a sparse table instead",
                });
            }
            let x_paths = paths3(chain, i - 2)?;
            let y_paths = paths3(chain, i - 1)?;
            let mut atoms = Vec::with_capacity(x_paths.len() * y_paths.len());
            for (xp, xw) in &x_paths {
                for (yp, yw) in &y_paths {
                    atoms.push(([xp[0], xp[1], xp[2], yp[0], yp[1], yp[2]], xw * yw));
                }
            }
            Ok(atoms)
        }
    }
}

/// Positive-probability paths `(ξ_a, ξ_{a+1}, ξ_{a+2})`.
fn paths3(chain: &ChainSpec, a: usize) -> Result<Vec<([usize; 3], f64)>> {
    let p = chain.marginal(a)?;
    let k1 = chain.kernel(a)?;
    let k2 = chain.kernel(a + 1)?;
    let mut out = Vec::new();
    for x in 0..p.len() {
        for y in 0..k1.ncols() {
            for z in 0..k2.ncols() {
                let w = p[x] * k1[(x, y)] * k2[(y, z)];
                if w > 0.0 {
                    out.push(([x, y, z], w));
                }
            }
        }
    }
    Ok(out)
}

/// The balance `Γ_i` of a hexagon `h = (x_{i−2}, x_{i−1}, x_i, y_{i−1}, y_i, y_{i+1})`:
/// `f_{i−2}(x_{i−2},x_{i−1}) + f_{i−1}(x_{i−1},x_i) + f_i(x_i,y_{i+1})
///  − f_{i−2}(x_{i−2},y_{i−1}) − f_{i−1}(y_{i−1},y_i) − f_i(y_i,y_{i+1})`, projected on `u`.
pub fn balance(pair: &PairObservable, i: usize, h: [usize; 6], u: &DVector<f64>) -> Result<f64> {
    let [x2, x1, x0, y1, y0, yn] = h;
    let (f2, f1, f0) = (pair.table(i - 2)?, pair.table(i - 1)?, pair.table(i)?);
    Ok(f2.project(x2, x1, u) + f1.project(x1, x0, u) + f0.project(x0, yn, u)
        - f2.project(x2, y1, u)
        - f1.project(y1, y0, u)
        - f0.project(y0, yn, u))
}

/// `u_i²(f; u)`: variance of the balance `Γ_i` under the hexagon law.
pub fn balance_variance(
    chain: &ChainSpec,
    i: usize,
    u: &DVector<f64>,
    pair: &PairObservable,
    law: &HexagonLaw,
) -> Result<f64> {
    if u.len() != pair.dim() {
        return Err(Error::Dimension(format!(
            "direction has {} components, pair observable d = {}",
            u.len(),
            pair.dim()
        )));
    }
    let atoms = hexagon_atoms(chain, i, law, HEXAGON_CAP)?;
    let n = pair.states();
    if atoms.iter().any(|(h, _)| h.iter().any(|s| *s >= n)) {
        return Err(Error::Dimension(format!("hexagon state index outside 0..{n}")));
    }
    let mut mean = 0.0;
    let mut second = 0.0;
    for (h, w) in &atoms {
        let g = balance(pair, i, *h, u)?;
        mean += w * g;
        second += w * g * g;
    }
    Ok((second - mean * mean).max(0.0))
}

/// `u_j²(f; u)` for every `j` in `range`.
pub fn balance_series(
    chain: &ChainSpec,
    u: &DVector<f64>,
    pair: &PairObservable,
    law: &HexagonLaw,
    range: std::ops::RangeInclusive<usize>,
) -> Result<BTreeMap<usize, f64>> {
    range
        .map(|j| Ok((j, balance_variance(chain, j, u, pair, law)?)))
        .collect()
}

/// One window of the balance sandwich.
#[derive(Clone, Debug, Serialize)]
pub struct Var2Window {
    pub n: usize,
    pub m: usize,
    /// `Var(S_{n,m}·u)` for `X_j = f_j(ξ_j, ξ_{j+1})`.
    pub variance: f64,
    /// `Σ_{j=n+3}^{m} u_j²(f; u)`
    pub balance_sum: f64,
}

/// Constants with `A·U − B ≤ V ≤ C·U + D` on every window, where `U` is the balance sum.
#[derive(Clone, Debug, Serialize)]
pub struct Var2Report {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub windows: Vec<Var2Window>,
    /// Fewer than two windows, so the slope is not identified.
    pub low_confidence: bool,
    pub holds: bool,
}

/// Fits the sandwich constants: the common slope `A = C` is the least-squares slope of
/// `V` on `U`, and `B`, `D` are the smallest offsets that make both sides hold.
pub fn verify_var2_sandwich(
    chain: &ChainSpec,
    pair: &PairObservable,
    u: &DVector<f64>,
    windows: &[(usize, usize)],
    balance_values: &BTreeMap<usize, f64>,
) -> Result<Var2Report> {
    if windows.is_empty() {
        return Err(Error::param("windows", "need at least one window"));
    }
    let lifted = chain.edge_lift(pair)?;
    let mut rows = Vec::with_capacity(windows.len());
    for &(n, m) in windows {
        if n == 0 || m < n + 3 {
            return Err(Error::param("windows", format!("({n}, {m}) needs m − n ≥ 3")));
        }
        let variance = *moments::prefix_variances(&lifted, n, m, u)?
            .last()
            .expect("non-empty window");
        let mut balance_sum = 0.0;
        for j in (n + 3)..=m {
            balance_sum += balance_values.get(&j).copied().ok_or_else(|| {
                Error::param("balance_values", format!("missing u_{j}²"))
            })?;
        }
        rows.push(Var2Window {
            n,
            m,
            variance,
            balance_sum,
        });
    }
    let count = rows.len() as f64;
    let mu = rows.iter().map(|r| r.balance_sum).sum::<f64>() / count;
    let mv = rows.iter().map(|r| r.variance).sum::<f64>() / count;
    let suu: f64 = rows.iter().map(|r| (r.balance_sum - mu).powi(2)).sum();
    let suv: f64 = rows
        .iter()
        .map(|r| (r.balance_sum - mu) * (r.variance - mv))
        .sum();
    let slope = if suu > 0.0 && suv > 0.0 {
        suv / suu
    } else if mu > 0.0 && mv > 0.0 {
        mv / mu
    } else {
        1.0
    };
    let b = rows
        .iter()
        .map(|r| slope * r.balance_sum - r.variance)
        .fold(0.0f64, f64::max);
    let d = rows
        .iter()
        .map(|r| r.variance - slope * r.balance_sum)
        .fold(0.0f64, f64::max);
    let holds = rows.iter().all(|r| {
        let tol = 1e-9 * (1.0 + r.variance.abs());
        slope * r.balance_sum - b <= r.variance + tol && r.variance <= slope * r.balance_sum + d + tol
    });
    Ok(Var2Report {
        a: slope,
        b,
        c: slope,
        d,
        low_confidence: rows.len() < 2,
        windows: rows,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn uniform_iid() -> ChainSpec {
        ChainSpec::homogeneous(
            dmatrix![0.5, 0.5; 0.5, 0.5],
            DVector::from_row_slice(&[0.5, 0.5]),
            dmatrix![1.0; -1.0],
        )
        .unwrap()
    }

    fn first_state() -> PairObservable {
        PairObservable::from_state_values(&[vec![1.0], vec![-1.0]]).unwrap()
    }

    #[test]
    fn constant_observable_has_zero_balance() {
        let pair = PairObservable::constant(PairTable::from_fn(2, 1, |_, _| vec![0.7]).unwrap());
        let v = balance_variance(&uniform_iid(), 4, &DVector::from_element(1, 1.0), &pair, &HexagonLaw::IndependentCopies)
            .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn sign_observable_on_independent_hexagons() {
        let v = balance_variance(
            &uniform_iid(),
            5,
            &DVector::from_element(1, 1.0),
            &first_state(),
            &HexagonLaw::IndependentCopies,
        )
        .unwrap();
        assert_abs_diff_eq!(v, 4.0, epsilon = 1e-14);
    }

    #[test]
    fn orthogonal_direction_gives_zero() {
        let pair = PairObservable::from_state_values(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let v = balance_variance(
            &uniform_iid(),
            3,
            &DVector::from_row_slice(&[0.0, 1.0]),
            &pair,
            &HexagonLaw::IndependentCopies,
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn table_law_must_have_unit_mass() {
        let law = HexagonLaw::Table {
            atoms: vec![([0; 6], 0.5)],
        };
        let err = balance_variance(&uniform_iid(), 3, &DVector::from_element(1, 1.0), &first_state(), &law);
        assert!(matches!(err, Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn sandwich_for_iid_signs() {
        let chain = uniform_iid();
        let pair = first_state();
        let u = DVector::from_element(1, 1.0);
        let bal = balance_series(&chain, &u, &pair, &HexagonLaw::IndependentCopies, 3..=60).unwrap();
        let windows: Vec<(usize, usize)> = (3..=40).map(|len| (1, 1 + len)).collect();
        let r = verify_var2_sandwich(&chain, &pair, &u, &windows, &bal).unwrap();
        for w in &r.windows {
            assert_abs_diff_eq!(w.variance, (w.m - w.n + 1) as f64, epsilon = 1e-10);
            assert_abs_diff_eq!(w.balance_sum, 4.0 * (w.m - w.n - 2) as f64, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(r.a, 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(r.d, 3.0, epsilon = 1e-9);
        assert!(r.holds && !r.low_confidence);
    }

    #[test]
    fn single_window_is_low_confidence() {
        let chain = uniform_iid();
        let pair = first_state();
        let u = DVector::from_element(1, 1.0);
        let bal = balance_series(&chain, &u, &pair, &HexagonLaw::IndependentCopies, 3..=10).unwrap();
        let r = verify_var2_sandwich(&chain, &pair, &u, &[(2, 5)], &bal).unwrap();
        assert_eq!(r.windows.len(), 1);
        assert!(r.low_confidence);
    }

    #[test]
    fn zero_observable_sandwich_is_trivial() {
        let chain = uniform_iid();
        let pair = PairObservable::constant(PairTable::from_fn(2, 1, |_, _| vec![0.0]).unwrap());
        let u = DVector::from_element(1, 1.0);
        let bal = balance_series(&chain, &u, &pair, &HexagonLaw::IndependentCopies, 3..=20).unwrap();
        let r = verify_var2_sandwich(&chain, &pair, &u, &[(1, 8), (2, 15)], &bal).unwrap();
        assert_eq!((r.a, r.b, r.c, r.d), (1.0, 0.0, 1.0, 0.0));
    }
}
