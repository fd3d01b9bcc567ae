//! α, φ, Dobrushin and maximal-correlation coefficients, the fitted exponential
//! envelope and the characteristic-function gap of condition H.

use asip::battery;
use asip::document::ChainDocument;
use asip::linalg;
use asip::mixing::{self, HBlockSpec};

fn show(doc: ChainDocument) -> asip::Result<()> {
    let chain = doc.to_chain()?;
    let report = mixing::mixing_report(&chain, 8, 1..=24)?;
    println!("{}:", doc.name.unwrap_or_default());
    for c in report.coefficients.iter().take(4) {
        println!("  k = {}: α = {:.6e}, φ = {:.6e}", c.k, c.alpha, c.phi);
    }
    println!("  π = {:.4}, ρ = {:.4}", report.delta_pi, report.rho_sup);
    let env = &report.envelope;
    println!("  α(k) ≤ {:.4}·{:.4}^k, n₀ = {:?}", env.c, env.delta, env.n0);

    let spec = HBlockSpec::new(vec![1, 2, 4, 5, 7], 2)?;
    let h = mixing::condition_h_decay(&chain, &spec, &[1, 2, 3, 4, 5, 6], &linalg::unit(chain.dim(), 0), None)?;
    println!("  condition-H gaps {:.3?}, decay rate {:?}", h.gaps, h.c_prime);
    Ok(())
}

fn main() -> asip::Result<()> {
    show(battery::symmetric())?;
    show(battery::rademacher())?;
    show(battery::slow())
}
