//! Balance variances of an edge observable and the two-sided bound they give on
//! Var(S_n).

use asip::balance::{self, HexagonLaw, PairObservable, PairTable};
use asip::battery;
use asip::linalg;

fn main() -> asip::Result<()> {
    let chain = battery::symmetric().to_chain()?;
    // f(x, y) = 1 on a flip, -1 otherwise
    let table = PairTable::from_fn(2, 1, |x, y| vec![if x == y { -1.0 } else { 1.0 }])?;
    let pair = PairObservable::constant(table);
    let u = linalg::unit(1, 0);

    let series = balance::balance_series(&chain, &u, &pair, &HexagonLaw::IndependentCopies, 3..=40)?;
    println!("u_3² = {:.6}, u_40² = {:.6}", series[&3], series[&40]);

    let windows = [(1, 10), (1, 20), (1, 40)];
    let report = balance::verify_var2_sandwich(&chain, &pair, &u, &windows, &series)?;
    for w in &report.windows {
        println!("[{}, {}]: Var = {:.4}, balance sum = {:.4}", w.n, w.m, w.variance, w.balance_sum);
    }
    println!(
        "{:.4}·U − {:.4} ≤ V ≤ {:.4}·U + {:.4}: {}",
        report.a, report.b, report.c, report.d, report.holds
    );
    Ok(())
}
