//! JSON chain documents.
//!
//! ```json
//! {
//!   "name": "symmetric",
//!   "states": 2,
//!   "kernels": {"periodic": [[[0.75, 0.25], [0.25, 0.75]]]},
//!   "initial": [0.5, 0.5],
//!   "observable": {"periodic": [[[1.0], [-1.0]]]},
//!   "L": 1.0,
//!   "d": 1
//! }
//! ```
//!
//! `kernels` is a list (one kernel per time), `{"periodic": [...]}` or
//! `{"mixture": {"first", "second", "weights"}}`. `observable` is a list of per-time
//! tables, `{"periodic": [...]}` or `{"scaled": {"base": [...], "scale"}}`. Table rows
//! may be written as bare numbers when `d = 1`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainSpec, KernelSchedule, ObservableSchedule, StateSizes, WeightSchedule};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum States {
    Constant(usize),
    PerTime(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Row {
    Scalar(f64),
    Vector(Vec<f64>),
}

pub type Matrix = Vec<Vec<f64>>;
pub type TableRows = Vec<Row>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureDoc {
    pub first: Matrix,
    pub second: Matrix,
    pub weights: WeightSchedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelsDoc {
    List(Vec<Matrix>),
    Periodic { periodic: Vec<Matrix> },
    Mixture { mixture: MixtureDoc },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledDoc {
    pub base: Vec<TableRows>,
    pub scale: WeightSchedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableDoc {
    List(Vec<TableRows>),
    Periodic { periodic: Vec<TableRows> },
    Scaled { scaled: ScaledDoc },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub states: States,
    pub kernels: KernelsDoc,
    pub initial: Vec<f64>,
    pub observable: ObservableDoc,
    #[serde(rename = "L")]
    pub bound: f64,
    pub d: usize,
}

fn matrix(rows: &Matrix, what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what}: ragged or empty matrix")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn table(rows: &TableRows, d: usize, what: &str) -> Result<DMatrix<f64>> {
    let dense: Matrix = rows
        .iter()
        .map(|r| match r {
            Row::Scalar(v) => vec![*v],
            Row::Vector(v) => v.clone(),
        })
        .collect();
    let m = matrix(&dense, what)?;
    if m.ncols() != d {
        return Err(Error::Dimension(format!("{what}: rows have {} entries, d = {d}", m.ncols())));
    }
    Ok(m)
}

fn tables(list: &[TableRows], d: usize, what: &str) -> Result<Vec<DMatrix<f64>>> {
    if list.is_empty() {
        return Err(Error::Dimension(format!("{what}: empty list")));
    }
    list.iter()
        .enumerate()
        .map(|(i, t)| table(t, d, &format!("{what}[{i}]")))
        .collect()
}

fn matrices(list: &[Matrix], what: &str) -> Result<Vec<DMatrix<f64>>> {
    if list.is_empty() {
        return Err(Error::Dimension(format!("{what}: empty list")));
    }
    list.iter()
        .enumerate()
        .map(|(i, m)| matrix(m, &format!("{what}[{i}]")))
        .collect()
}

fn rows_of(m: &DMatrix<f64>) -> Matrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn table_rows(m: &DMatrix<f64>) -> TableRows {
    m.row_iter().map(|r| Row::Vector(r.iter().copied().collect())).collect()
}

impl ChainDocument {
    /// Homogeneous chain with one kernel and one observable table.
    pub fn homogeneous(name: &str, kernel: &DMatrix<f64>, initial: &[f64], values: &DMatrix<f64>, bound: f64) -> Self {
        ChainDocument {
            name: Some(name.to_string()),
            states: States::Constant(kernel.nrows()),
            kernels: KernelsDoc::Periodic {
                periodic: vec![rows_of(kernel)],
            },
            initial: initial.to_vec(),
            observable: ObservableDoc::Periodic {
                periodic: vec![table_rows(values)],
            },
            bound,
            d: values.ncols(),
        }
    }

    pub fn to_chain(&self) -> Result<ChainSpec> {
        let sizes = match &self.states {
            States::Constant(n) => StateSizes::Constant(*n),
            States::PerTime(v) => StateSizes::PerTime(v.clone()),
        };
        let kernels = match &self.kernels {
            KernelsDoc::List(l) => KernelSchedule::Explicit(matrices(l, "kernels")?),
            KernelsDoc::Periodic { periodic } => KernelSchedule::Periodic(matrices(periodic, "kernels.periodic")?),
            KernelsDoc::Mixture { mixture } => KernelSchedule::Mixture {
                first: matrix(&mixture.first, "kernels.mixture.first")?,
                second: matrix(&mixture.second, "kernels.mixture.second")?,
                weights: mixture.weights.clone(),
            },
        };
        let observable = match &self.observable {
            ObservableDoc::List(l) => ObservableSchedule::Explicit(tables(l, self.d, "observable")?),
            ObservableDoc::Periodic { periodic } => {
                ObservableSchedule::Periodic(tables(periodic, self.d, "observable.periodic")?)
            }
            ObservableDoc::Scaled { scaled } => ObservableSchedule::Scaled {
                base: tables(&scaled.base, self.d, "observable.scaled.base")?,
                scale: scaled.scale.clone(),
            },
        };
        ChainSpec::new(
            sizes,
            kernels,
            DVector::from_vec(self.initial.clone()),
            observable,
            self.bound,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Reads and validates a chain document.
pub fn load_chain(path: &Path) -> Result<(ChainDocument, ChainSpec)> {
    let doc = ChainDocument::load(path)?;
    let chain = doc.to_chain()?;
    Ok((doc, chain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments;

    const SYMMETRIC: &str = r#"{
        "name": "symmetric",
        "states": 2,
        "kernels": {"periodic": [[[0.75, 0.25], [0.25, 0.75]]]},
        "initial": [0.5, 0.5],
        "observable": {"periodic": [[1.0, -1.0]]},
        "L": 1.0,
        "d": 1
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let doc = ChainDocument::from_json(SYMMETRIC).unwrap();
        let chain = doc.to_chain().unwrap();
        let v = moments::prefix_variances(&chain, 1, 2, &DVector::from_element(1, 1.0)).unwrap();
        assert!((v[1] - 3.0).abs() < 1e-12);
        let again = ChainDocument::from_json(&doc.to_json()).unwrap();
        assert!(again.to_chain().is_ok());
    }

    #[test]
    fn mixture_and_scaled_forms() {
        let text = r#"{
            "states": 2,
            "kernels": {"mixture": {"first": [[0.9, 0.1], [0.1, 0.9]], "second": [[0.5, 0.5], [0.5, 0.5]],
                        "weights": {"kind": "sine", "center": 0.5, "amplitude": 0.3, "period": 7}}},
            "initial": [1.0, 0.0],
            "observable": {"scaled": {"base": [[[1.0, 0.0], [0.0, 1.0]]], "scale": {"kind": "power", "exponent": 0.1}}},
            "L": 1.0,
            "d": 2
        }"#;
        let chain = ChainDocument::from_json(text).unwrap().to_chain().unwrap();
        assert_eq!(chain.dim(), 2);
        let k = chain.kernel(7).unwrap();
        assert!((k[(0, 0)] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_documents() {
        let bad_row = SYMMETRIC.replace("0.75, 0.25], [0.25", "0.75, 0.3], [0.25");
        assert!(matches!(
            ChainDocument::from_json(&bad_row).unwrap().to_chain(),
            Err(Error::NonStochasticRow { .. })
        ));
        let bad_d = SYMMETRIC.replace("\"d\": 1", "\"d\": 2");
        assert!(matches!(ChainDocument::from_json(&bad_d).unwrap().to_chain(), Err(Error::Dimension(_))));
        assert!(matches!(ChainDocument::from_json("{"), Err(Error::Json(_))));
        assert!(matches!(
            ChainDocument::load(Path::new("/nonexistent/chain.json")),
            Err(Error::Io { .. })
        ));
    }
}
