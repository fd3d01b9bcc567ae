//! Exact covariance, L^p norms and the law of a partial sum for the symmetric ±1 chain.

use asip::battery;
use asip::linalg;
use asip::moments::{self, SumLawOptions};

fn main() -> asip::Result<()> {
    let chain = battery::symmetric().to_chain()?;
    let u = linalg::unit(1, 0);

    let v = moments::prefix_variances(&chain, 1, 50, &u)?;
    println!("Var(S_2) = {}, Var(S_50) = {}", v[1], v[49]);

    for p in [2, 4, 6] {
        let l = moments::lp_norm_partial_sum(&chain, 1, 50, &u, p)?;
        println!("‖S_50‖_{p} = {:.6} (exact: {})", l.value, l.exact);
    }

    let law = moments::sum_law(&chain, 1, 10, &u, SumLawOptions::default())?;
    println!("S_10 has {} atoms, mass {}", law.atoms.len(), law.mass());
    for (value, prob) in law.atoms.iter().take(3) {
        println!("  P(S_10 - E S_10 = {value}) = {prob:.6e}");
    }
    Ok(())
}
