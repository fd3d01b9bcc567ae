//! Built-in chain battery: small chains spanning Dobrushin coefficients in `[0, 0.9]`,
//! `d ∈ {1, 2}`, periodic and mixture kernels, scaled observables and non-stationary
//! starts. Every chain here has `π < 1`.

use nalgebra::{dmatrix, DMatrix};

use crate::chain::{ChainSpec, WeightSchedule};
use crate::document::{ChainDocument, KernelsDoc, MixtureDoc, ObservableDoc, Row, ScaledDoc};
use crate::error::Result;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn table(m: &DMatrix<f64>) -> Vec<Row> {
    m.row_iter().map(|r| Row::Vector(r.iter().copied().collect())).collect()
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn homogeneous(name: &str, kernel: DMatrix<f64>, values: DMatrix<f64>, bound: f64) -> ChainDocument {
    let n = kernel.nrows();
    ChainDocument::homogeneous(name, &kernel, &uniform(n), &values, bound)
}

fn with_initial(mut doc: ChainDocument, initial: &[f64]) -> ChainDocument {
    doc.initial = initial.to_vec();
    doc
}

fn sticky(p: f64) -> DMatrix<f64> {
    dmatrix![p, 1.0 - p; 1.0 - p, p]
}

fn signs() -> DMatrix<f64> {
    dmatrix![1.0; -1.0]
}

fn cycle3() -> DMatrix<f64> {
    dmatrix![0.1, 0.8, 0.1; 0.1, 0.1, 0.8; 0.8, 0.1, 0.1]
}

fn lazy3() -> DMatrix<f64> {
    dmatrix![0.6, 0.2, 0.2; 0.2, 0.6, 0.2; 0.2, 0.2, 0.6]
}

fn ring4() -> DMatrix<f64> {
    dmatrix![
        0.5, 0.25, 0.0, 0.25;
        0.25, 0.5, 0.25, 0.0;
        0.0, 0.25, 0.5, 0.25;
        0.25, 0.0, 0.25, 0.5
    ]
}

fn triangle() -> DMatrix<f64> {
    dmatrix![1.0, 0.0; 0.0, 1.0; -0.5, -0.5]
}

/// Symmetric two-state chain with flip probability ¼ and observable ±1.
pub fn symmetric() -> ChainDocument {
    homogeneous("symmetric", sticky(0.75), signs(), 1.0)
}

/// I.i.d. Rademacher signs.
pub fn rademacher() -> ChainDocument {
    homogeneous("iid-rademacher", sticky(0.5), signs(), 1.0)
}

/// Two-state chain that stays put with probability 0.999, started at a point mass, so
/// `φ(k) ≥ ½` for every moderate `k`.
pub fn slow() -> ChainDocument {
    with_initial(homogeneous("slow", sticky(0.999), signs(), 1.0), &[1.0, 0.0])
}

/// The battery documents, in a fixed order.
pub fn battery() -> Vec<ChainDocument> {
    let mut out = vec![
        rademacher(),
        homogeneous(
            "iid-3-skewed",
            dmatrix![0.2, 0.3, 0.5; 0.2, 0.3, 0.5; 0.2, 0.3, 0.5],
            dmatrix![-1.0; 0.0; 1.0],
            1.0,
        ),
        symmetric(),
        homogeneous("sticky-0.9", sticky(0.9), signs(), 1.0),
        homogeneous("sticky-0.95", sticky(0.95), signs(), 1.0),
        homogeneous("negative-correlation", sticky(0.2), signs(), 1.0),
        homogeneous("asymmetric-2", dmatrix![0.7, 0.3; 0.4, 0.6], dmatrix![1.0; -0.5], 1.0),
        homogeneous("cycle-3", cycle3(), dmatrix![1.0; 0.0; -1.0], 1.0),
        homogeneous("lazy-3", lazy3(), dmatrix![1.0; 0.0; -1.0], 1.0),
        homogeneous("ring-4", ring4(), dmatrix![1.0; 1.0 / 3.0; -1.0 / 3.0; -1.0], 1.0),
        homogeneous(
            "near-iid-4",
            dmatrix![
                0.3, 0.25, 0.25, 0.2;
                0.25, 0.3, 0.2, 0.25;
                0.25, 0.2, 0.3, 0.25;
                0.2, 0.25, 0.25, 0.3
            ],
            dmatrix![1.0; -1.0; 0.5; -0.5],
            1.0,
        ),
    ];

    let mut periodic = homogeneous("periodic-kernels", sticky(0.8), signs(), 1.0);
    periodic.kernels = KernelsDoc::Periodic {
        periodic: vec![rows(&dmatrix![0.8, 0.2; 0.3, 0.7]), rows(&dmatrix![0.4, 0.6; 0.6, 0.4])],
    };
    out.push(periodic);

    let mut sine = homogeneous("sine-mixture", sticky(0.9), signs(), 1.0);
    sine.kernels = KernelsDoc::Mixture {
        mixture: MixtureDoc {
            first: rows(&sticky(0.9)),
            second: rows(&sticky(0.5)),
            weights: WeightSchedule::Sine {
                center: 0.5,
                amplitude: 0.4,
                period: 10.0,
            },
        },
    };
    out.push(sine);

    let mut scaled = symmetric();
    scaled.name = Some("power-scaled".into());
    scaled.observable = ObservableDoc::Scaled {
        scaled: ScaledDoc {
            base: vec![table(&signs())],
            scale: WeightSchedule::Power { exponent: 0.1 },
        },
    };
    out.push(scaled);

    out.push(homogeneous("lazy-3-d2", lazy3(), triangle(), 1.0));
    out.push(homogeneous(
        "ring-4-d2",
        ring4(),
        dmatrix![1.0, 0.0; 0.0, 1.0; -1.0, 0.0; 0.0, -1.0],
        1.0,
    ));

    let mut alt = homogeneous("cycle-3-d2-periodic-observable", cycle3(), triangle(), 1.0);
    alt.observable = ObservableDoc::Periodic {
        periodic: vec![table(&triangle()), table(&dmatrix![0.0, 1.0; 0.5, -0.5; -0.5, 0.0])],
    };
    out.push(alt);

    out.push(with_initial(homogeneous("sticky-0.9-point-start", sticky(0.9), signs(), 1.0), &[1.0, 0.0]));
    out.push(with_initial(
        homogeneous("cycle-3-point-start", cycle3(), dmatrix![1.0; 0.0; -1.0], 1.0),
        &[1.0, 0.0, 0.0],
    ));

    let mut power_mix = homogeneous("power-mixture-3-d2", lazy3(), triangle(), 1.0);
    power_mix.kernels = KernelsDoc::Mixture {
        mixture: MixtureDoc {
            first: rows(&lazy3()),
            second: rows(&cycle3()),
            weights: WeightSchedule::Power { exponent: 0.3 },
        },
    };
    out.push(power_mix);

    let mut sine_obs = homogeneous("sine-scaled-d2", lazy3(), triangle(), 1.0);
    sine_obs.observable = ObservableDoc::Scaled {
        scaled: ScaledDoc {
            base: vec![table(&triangle())],
            scale: WeightSchedule::Sine {
                center: 0.75,
                amplitude: 0.25,
                period: 6.0,
            },
        },
    };
    out.push(sine_obs);

    out.push(homogeneous(
        "periodic-observable-3",
        dmatrix![0.5, 0.3, 0.2; 0.1, 0.6, 0.3; 0.3, 0.3, 0.4],
        dmatrix![1.0; -1.0; 0.25],
        1.0,
    ));
    if let Some(ObservableDoc::Periodic { periodic }) = out.last_mut().map(|d| &mut d.observable) {
        periodic.push(table(&dmatrix![-0.5; 1.0; 0.0]));
        periodic.push(table(&dmatrix![0.0; 0.5; -1.0]));
    }
    out
}

/// The battery as validated chains, paired with their names.
pub fn battery_chains() -> Result<Vec<(String, ChainSpec)>> {
    battery()
        .into_iter()
        .map(|d| Ok((d.name.clone().unwrap_or_default(), d.to_chain()?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing;

    #[test]
    fn battery_is_valid_and_spans_the_range() {
        let chains = battery_chains().unwrap();
        assert!(chains.len() >= 20);
        let mut names: Vec<_> = chains.iter().map(|c| c.0.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), chains.len());
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for (name, c) in &chains {
            assert!((2..=4).contains(&c.state_size(1).unwrap()), "{name}");
            assert!(c.dim() == 1 || c.dim() == 2, "{name}");
            for j in 1..=12 {
                let p = mixing::dobrushin_coefficient(c, j).unwrap();
                assert!(p < 1.0, "{name}");
                lo = lo.min(p);
                hi = hi.max(p);
            }
        }
        assert!(lo.abs() < 1e-12 && (hi - 0.9).abs() < 1e-12, "{lo} {hi}");
    }
}
