//! Seeded path sampling compared against the exact moments, plus the KS curve.

use asip::battery;
use asip::linalg;
use asip::moments;
use asip::sim::{self, SampleRequest};

fn main() -> asip::Result<()> {
    let doc = battery::battery().into_iter().find(|d| d.name.as_deref() == Some("lazy-3-d2")).unwrap();
    let chain = doc.to_chain()?;
    let dirs = linalg::direction_grid(2, 4);
    let checkpoints = vec![10, 100, 400];
    let req = SampleRequest {
        horizon: 400,
        paths: 20_000,
        seed: 2024,
        checkpoints: checkpoints.clone(),
        directions: dirs.clone(),
        gaps: vec![],
        lil: false,
    };
    let batch = sim::sample_paths(&chain, &req)?;

    for check in sim::oracle_equivalence(&chain, &batch, &dirs, 4.0)?.iter().filter(|c| c.n == 400) {
        println!(
            "{} at n = {}, direction {}: estimate {:.4}, exact {:.4} (se {:.4})",
            check.quantity, check.n, check.direction_id, check.estimate, check.exact, check.stderr
        );
    }

    let variances: Vec<Vec<f64>> = checkpoints
        .iter()
        .map(|&n| dirs.iter().map(|u| moments::prefix_variances(&chain, 1, n, u).map(|v| v[n - 1])).collect())
        .collect::<asip::Result<_>>()?;
    for p in sim::clt_diagnostic(&batch, &variances).points {
        println!("KS at n = {}, direction {}: {:.4} ± {:.4}", p.n, p.direction_id, p.ks, p.stderr);
    }
    Ok(())
}
