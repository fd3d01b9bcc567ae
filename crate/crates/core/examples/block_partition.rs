//! Plans a block partition from the mixing envelope, builds it and checks every
//! structural and variance property exactly.

use asip::battery;
use asip::blocks::{self, QExponent};
use asip::linalg;
use asip::mixing;

fn main() -> asip::Result<()> {
    let chain = battery::symmetric().to_chain()?;
    let report = mixing::mixing_report(&chain, 12, 1..=12)?;

    let auto = blocks::plan_partition(&report.envelope, chain.bound(), 4.0, 8.0, QExponent::TwoMinus, None, None)?;
    println!("automatic plan: r = {}, A = {:.1}, Q₀ = {:.3}", auto.r, auto.a, auto.q0);

    // a smaller amplitude gives many blocks over a short horizon
    let plan = blocks::plan_partition(&report.envelope, chain.bound(), 4.0, 8.0, QExponent::TwoMinus, Some(3), Some(50.0))?;
    let u = linalg::unit(1, 0);
    let part = blocks::build_blocks(&chain, &u, plan.a, plan.r, 3000, plan.p)?;
    println!("{} blocks; first three:", part.blocks.len());
    for b in part.blocks.iter().take(3) {
        println!("  M = [{}, {}], I ends at {}, Var S(M) = {:.3}", b.a, b.b, b.i_end, b.variance);
    }
    println!("k_3000 = {}", part.k_n(3000));

    let v = blocks::verify_partition(&chain, &part, blocks::q_of(plan.a, plan.q0))?;
    println!(
        "separated {}, covering {}, sandwich {}, gap ratio {}; block L² norms in [{:.3}, {:.3}]",
        v.separated, v.covering, v.sandwich_holds, v.ratio_holds, v.a1, v.a2
    );
    Ok(())
}
