//! Command-line orchestration: argument parsing, report assembly and output files.
//!
//! Exit codes: 0 pass, 1 internal error or hard-invariant violation, 2 input error,
//! 3 hypothesis-not-met warning, 4 construction failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::balance::{self, HexagonLaw, PairObservable};
use crate::battery;
use crate::blocks::{self, QExponent};
use crate::chain::ChainSpec;
use crate::document::{load_chain, ChainDocument};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mixing::{self, HBlockSpec};
use crate::moments;
use crate::sim::{self, SampleRequest};
use crate::stats;
use crate::verify::{self, VerifyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_WARNING: i32 = 3;
pub const EXIT_CONSTRUCTION: i32 = 4;

const LIMITATION: &str = "The pathwise approximation rate is an almost-sure statement about a coupling and \
cannot be certified from finite samples; the W1 scaling curve is the observable proxy reported here.";

#[derive(Parser, Debug)]
#[command(name = "asip", version, about = "Exact moments, mixing and block diagnostics for inhomogeneous Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub args: Args,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Exact covariance curve, eigenvalue ratios, L^p norms and balance variances.
    Moments,
    /// α, φ, π, ρ, the exponential envelope and the condition-H grid.
    Mixing,
    /// Block partition with its exact verification.
    Blocks,
    /// Monte Carlo diagnostics: KS curve, variance gap, W1 scaling, LIL statistic.
    Simulate,
    /// Every invariant across the built-in battery (plus `--chain` if given).
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentArg {
    TwoMinus,
    OneMinus,
}

impl From<ExponentArg> for QExponent {
    fn from(e: ExponentArg) -> Self {
        match e {
            ExponentArg::TwoMinus => QExponent::TwoMinus,
            ExponentArg::OneMinus => QExponent::OneMinus,
        }
    }
}

#[derive(clap::Args, Debug, Clone, Serialize)]
pub struct Args {
    /// Chain document (JSON).
    #[arg(long, global = true)]
    pub chain: Option<PathBuf>,
    /// Moment order p > 2 for the block construction and L^p norms.
    #[arg(long, global = true, default_value_t = 4.0)]
    pub p: f64,
    /// Rate exponent δ in the s^{1/2+δ} and s^{1/4+δ} normalizers.
    #[arg(long, global = true, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Covariance constant used to select the separation.
    #[arg(long, global = true, default_value_t = 8.0)]
    pub cp: f64,
    /// Block amplitude A (overrides the automatic choice).
    #[arg(long, global = true)]
    pub amplitude: Option<f64>,
    /// Block separation r (overrides the automatic choice).
    #[arg(long, global = true)]
    pub separation: Option<usize>,
    /// Size of the direction grid.
    #[arg(long, global = true, default_value_t = 8)]
    pub directions: usize,
    /// Largest gap k for mixing coefficients.
    #[arg(long, global = true, default_value_t = 12)]
    pub k_max: usize,
    #[arg(long, global = true, value_enum, default_value_t = ExponentArg::TwoMinus)]
    pub q_exponent: ExponentArg,
    /// `independent` or a JSON file `{"kind": "table", "atoms": [[[6 states], weight], ...]}`.
    #[arg(long, global = true, default_value = "independent")]
    pub hexagon: String,
    /// Output directory for JSON and CSV reports.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the JSON report on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Shorter horizons and fewer paths for `verify`.
    #[arg(long, global = true)]
    pub quick: bool,
}

/// Resolved configuration, embedded in every report.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub chain_path: Option<String>,
    pub p: f64,
    pub delta: f64,
    pub horizon: Option<usize>,
    pub paths: Option<usize>,
    pub seed: u64,
    pub cp: f64,
    pub amplitude: Option<f64>,
    pub separation: Option<usize>,
    pub directions: usize,
    pub k_max: usize,
    pub q_exponent: ExponentArg,
    pub hexagon: String,
    pub quick: bool,
}

impl ExperimentConfig {
    /// Checks every numeric precondition before any computation starts.
    pub fn resolve(command: Command, a: &Args) -> Result<Self> {
        if !(a.p > 2.0 && a.p.is_finite()) {
            return Err(Error::param("p", format!("need p > 2, got {}", a.p)));
        }
        if !(a.delta > 0.0 && a.delta.is_finite()) {
            return Err(Error::param("delta", format!("need δ > 0, got {}", a.delta)));
        }
        if !(a.cp > 0.0 && a.cp.is_finite()) {
            return Err(Error::param("cp", format!("need c_p > 0, got {}", a.cp)));
        }
        if a.horizon == Some(0) {
            return Err(Error::param("horizon", "need horizon ≥ 1"));
        }
        if let Some(n) = a.paths {
            if n < 2 {
                return Err(Error::param("paths", "need at least 2 paths"));
            }
        }
        if let Some(amp) = a.amplitude {
            if !(amp >= 1.0 && amp.is_finite()) {
                return Err(Error::param("amplitude", format!("need A ≥ 1, got {amp}")));
            }
        }
        if a.separation == Some(0) {
            return Err(Error::param("separation", "need r ≥ 1"));
        }
        if a.directions == 0 {
            return Err(Error::param("directions", "need at least one direction"));
        }
        if a.k_max == 0 {
            return Err(Error::param("k_max", "need k_max ≥ 1"));
        }
        if command != Command::Verify && a.chain.is_none() {
            return Err(Error::param("chain", "this command needs --chain <path>"));
        }
        Ok(ExperimentConfig {
            command,
            chain_path: a.chain.as_ref().map(|p| p.display().to_string()),
            p: a.p,
            delta: a.delta,
            horizon: a.horizon,
            paths: a.paths,
            seed: a.seed,
            cp: a.cp,
            amplitude: a.amplitude,
            separation: a.separation,
            directions: a.directions,
            k_max: a.k_max,
            q_exponent: a.q_exponent,
            hexagon: a.hexagon.clone(),
            quick: a.quick,
        })
    }
}

/// Header shared by every report.
#[derive(Clone, Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub chain: Option<ChainDocument>,
    /// Which quantities are exact rather than sampled.
    pub exact: BTreeMap<&'static str, bool>,
    pub notes: Vec<String>,
    pub result: T,
}

/// A command's outcome: the report to write, extra CSV tables and the exit code.
pub struct Outcome {
    pub json: String,
    pub tables: Vec<(String, String)>,
    pub summary: Vec<String>,
    pub code: i32,
}

fn report<T: Serialize>(
    config: &ExperimentConfig,
    chain: Option<&ChainDocument>,
    exact: &[(&'static str, bool)],
    notes: Vec<String>,
    result: T,
) -> Result<String> {
    let r = Report {
        tool: "asip",
        version: env!("CARGO_PKG_VERSION"),
        config: config.clone(),
        chain: chain.cloned(),
        exact: exact.iter().copied().collect(),
        notes,
        result,
    };
    Ok(serde_json::to_string_pretty(&r)? + "\n")
}

fn csv_table<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io {
            path: "<csv>".into(),
            source: std::io::Error::other(e),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e.to_string()),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn chain_from(config: &ExperimentConfig) -> Result<(ChainDocument, ChainSpec)> {
    let path = config.chain_path.as_ref().expect("checked in resolve");
    load_chain(Path::new(path))
}

fn horizon_for(chain: &ChainSpec, requested: usize) -> usize {
    chain.horizon().map_or(requested, |h| requested.min(h))
}

fn grid(chain: &ChainSpec, count: usize) -> Vec<DVector<f64>> {
    linalg::direction_grid(chain.dim(), count)
}

/// Roughly logarithmic checkpoints in `1..=horizon`, always including `horizon`.
pub fn log_checkpoints(horizon: usize, per_decade: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let steps = ((horizon as f64).log10() * per_decade as f64).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let n = (10f64.powf(i as f64 / per_decade as f64)).round() as usize;
        let n = n.clamp(1, horizon);
        if out.last() != Some(&n) {
            out.push(n);
        }
    }
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

#[derive(Serialize)]
struct MomentRow {
    n: usize,
    s_n: f64,
    lambda_max: f64,
    trace: f64,
    eigen_ratio: f64,
}

#[derive(Serialize)]
struct LpRow {
    n: usize,
    p: u32,
    norm: f64,
    exact: bool,
}

#[derive(Serialize)]
struct MomentsResult {
    horizon: usize,
    var_s2: Option<Vec<f64>>,
    curve: Vec<MomentRow>,
    eigen_ratio: moments::EigenRatioReport,
    lp_norms: Vec<LpRow>,
    balance: Option<BalanceSection>,
}

#[derive(Serialize)]
struct BalanceSection {
    hexagon: HexagonLaw,
    variances: BTreeMap<usize, f64>,
    sandwich: balance::Var2Report,
}

fn hexagon_law(spec: &str) -> Result<HexagonLaw> {
    if spec == "independent" {
        return Ok(HexagonLaw::IndependentCopies);
    }
    let text = std::fs::read_to_string(spec).map_err(|source| Error::Io {
        path: spec.to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// A time-homogeneous state observable seen as an edge observable, when the tables agree
/// over the first `check` times.
fn state_pair_observable(chain: &ChainSpec, check: usize) -> Result<Option<PairObservable>> {
    let first = chain.values(1)?.into_owned();
    for j in 2..=check {
        let t = chain.values(j)?;
        if t.shape() != first.shape() || (t.as_ref() - &first).abs().max() > 0.0 {
            return Ok(None);
        }
    }
    let rows: Vec<Vec<f64>> = first.row_iter().map(|r| r.iter().copied().collect()).collect();
    Ok(Some(PairObservable::from_state_values(&rows)?))
}

pub fn cmd_moments(config: &ExperimentConfig) -> Result<Outcome> {
    let (doc, chain) = chain_from(config)?;
    let horizon = horizon_for(&chain, config.horizon.unwrap_or(100));
    let mut notes = Vec::new();
    let mut pass = moments::CovPass::new(&chain, 1, None)?;
    let mut curve = Vec::with_capacity(horizon);
    let mut var_s2 = None;
    for n in 1..=horizon {
        let v = pass.push(1.0)?;
        let (lo, hi) = linalg::eigen_extremes(v);
        if n == 2 {
            var_s2 = Some(v.iter().copied().collect());
        }
        curve.push(MomentRow {
            n,
            s_n: lo,
            lambda_max: hi,
            trace: v.trace(),
            eigen_ratio: if chain.dim() == 1 { 1.0 } else { hi / lo },
        });
    }
    let mut windows: Vec<(usize, usize)> = (1..=horizon).map(|m| (1, m)).collect();
    let len = (horizon / 4).max(1);
    windows.extend((1..=horizon + 1 - len).step_by(len.max(1)).map(|n| (n, n + len - 1)));
    let eigen_ratio = moments::eigen_ratio_report(&chain, &windows, 1.0)?;

    let p_even = {
        let c = config.p.ceil() as u32;
        c + c % 2
    };
    if f64::from(p_even) != config.p {
        notes.push(format!("L^p norms use the even order {p_even} ≥ p"));
    }
    let mut lp_norms = Vec::new();
    for n in log_checkpoints(horizon, 4) {
        let u = linalg::unit(chain.dim(), 0);
        for p in [2, p_even] {
            let l = moments::lp_norm_partial_sum(&chain, 1, n, &u, p)?;
            lp_norms.push(LpRow {
                n,
                p,
                norm: l.value,
                exact: l.exact,
            });
        }
    }

    let law = hexagon_law(&config.hexagon)?;
    let limit = horizon.min(60);
    let balance = if limit < 6 {
        notes.push("balance variances need horizon ≥ 6".into());
        None
    } else {
        match state_pair_observable(&chain, limit)? {
            Some(pair) => {
                let u = linalg::unit(chain.dim(), 0);
                let variances = balance::balance_series(&chain, &u, &pair, &law, 3..=limit - 1)?;
                let wins: Vec<(usize, usize)> = (1..=limit / 10).map(|i| (1, (10 * i).min(limit - 1))).filter(|w| w.1 >= 4).collect();
                let wins = if wins.is_empty() { vec![(1, limit - 1)] } else { wins };
                let sandwich = balance::verify_var2_sandwich(&chain, &pair, &u, &wins, &variances)?;
                Some(BalanceSection {
                    hexagon: law,
                    variances,
                    sandwich,
                })
            }
            None => {
                notes.push("balance variances skipped: the observable is not time-homogeneous".into());
                None
            }
        }
    };

    let summary = vec![
        format!("horizon {horizon}, s_n at horizon = {:.6}", curve.last().map_or(0.0, |r| r.s_n)),
        match &var_s2 {
            Some(v) => format!("Cov(S_2) = {v:?}"),
            None => "Cov(S_2) needs horizon ≥ 2".into(),
        },
        format!("eigenvalue ratio bounds c1 = {:.6}, c2 = {:.6}", eigen_ratio.c1, eigen_ratio.c2),
    ];
    let tables = vec![
        ("moments.csv".to_string(), csv_table(&curve)?),
        ("lp_norms.csv".to_string(), csv_table(&lp_norms)?),
    ];
    let json = report(
        config,
        Some(&doc),
        &[("covariances", true), ("lp_norms", true), ("balance", true)],
        notes,
        MomentsResult {
            horizon,
            var_s2,
            curve,
            eigen_ratio,
            lp_norms,
            balance,
        },
    )?;
    Ok(Outcome {
        json,
        tables,
        summary,
        code: EXIT_OK,
    })
}

#[derive(Serialize)]
struct CoefficientRow {
    k: usize,
    alpha: f64,
    phi: f64,
    envelope: f64,
}

#[derive(Serialize)]
struct TimeRow {
    j: usize,
    dobrushin: f64,
    rho: f64,
}

#[derive(Serialize)]
struct GapRow {
    k: usize,
    gap: f64,
}

#[derive(Serialize)]
struct MixingResult {
    report: mixing::MixingReport,
    condition_h: mixing::HDecay,
}

/// Breakpoints for the condition-H grid: two unit-length and unit-gap intervals per group.
pub fn default_h_spec() -> HBlockSpec {
    HBlockSpec::new(vec![1, 2, 4, 5, 7], 2).expect("valid breakpoints")
}

pub fn cmd_mixing(config: &ExperimentConfig) -> Result<Outcome> {
    let (doc, chain) = chain_from(config)?;
    let last_j = horizon_for(&chain, config.horizon.unwrap_or(4 * config.k_max)).saturating_sub(config.k_max).max(1);
    let report_ = mixing::mixing_report(&chain, config.k_max, 1..=last_j)?;
    let ks: Vec<usize> = (1..=config.k_max).collect();
    let condition_h = mixing::condition_h_decay(&chain, &default_h_spec(), &ks, &linalg::unit(chain.dim(), 0), None)?;
    let env = &report_.envelope;
    let mut notes = Vec::new();
    let mut code = EXIT_OK;
    let mut summary = vec![
        format!(
            "α(1) = {}, φ(1) = {}, π = {}, ρ = {}",
            report_.coefficients[0].alpha, report_.coefficients[0].phi, report_.delta_pi, report_.rho_sup
        ),
        format!("envelope C = {}, δ = {}{}", env.c, env.delta, if env.degenerate { " (degenerate)" } else { "" }),
    ];
    match env.n0 {
        Some(n0) => summary.push(format!("n₀ = {n0}")),
        None => {
            let msg = format!("n₀ not found in range 1..={}", config.k_max);
            summary.push(msg.clone());
            notes.push(msg);
            code = EXIT_WARNING;
        }
    }
    let rows: Vec<CoefficientRow> = report_
        .coefficients
        .iter()
        .map(|c| CoefficientRow {
            k: c.k,
            alpha: c.alpha,
            phi: c.phi,
            envelope: env.bound(c.k),
        })
        .collect();
    let times: Vec<TimeRow> = (report_.times.0..=report_.times.1)
        .zip(report_.dobrushin.iter().zip(&report_.rho))
        .map(|(j, (d, r))| TimeRow {
            j,
            dobrushin: *d,
            rho: *r,
        })
        .collect();
    let gaps: Vec<GapRow> = condition_h
        .ks
        .iter()
        .zip(&condition_h.gaps)
        .map(|(k, g)| GapRow { k: *k, gap: *g })
        .collect();
    let tables = vec![
        ("mixing.csv".to_string(), csv_table(&rows)?),
        ("coefficients.csv".to_string(), csv_table(&times)?),
        ("condition_h.csv".to_string(), csv_table(&gaps)?),
    ];
    let json = report(
        config,
        Some(&doc),
        &[("alpha_phi", true), ("dobrushin", true), ("rho", true), ("condition_h", true)],
        notes,
        MixingResult {
            report: report_,
            condition_h,
        },
    )?;
    Ok(Outcome {
        json,
        tables,
        summary,
        code,
    })
}

#[derive(Serialize)]
struct BlockRow {
    j: usize,
    a: usize,
    b: usize,
    i_end: usize,
    variance: f64,
    truncated: bool,
}

#[derive(Serialize)]
struct BlocksResult {
    plan: blocks::PartitionPlan,
    envelope: mixing::Envelope,
    partition: blocks::BlockPartition,
    verification: blocks::BlockVerification,
    covariance_checks: Vec<blocks::CovarianceCheck>,
    tails: blocks::TailStatistics,
}

fn plan(chain: &ChainSpec, config: &ExperimentConfig) -> Result<(mixing::Envelope, blocks::PartitionPlan)> {
    let report = mixing::mixing_report(chain, config.k_max, 1..=config.k_max)?;
    let plan = blocks::plan_partition(
        &report.envelope,
        chain.bound(),
        config.p,
        config.cp,
        config.q_exponent.into(),
        config.separation,
        config.amplitude,
    )?;
    Ok((report.envelope, plan))
}

pub fn cmd_blocks(config: &ExperimentConfig) -> Result<Outcome> {
    let (doc, chain) = chain_from(config)?;
    let (envelope, plan) = plan(&chain, config)?;
    let u0 = linalg::unit(chain.dim(), 0);
    let horizon = match config.horizon {
        Some(h) => horizon_for(&chain, h),
        None => horizon_for(&chain, blocks::auto_horizon(&chain, &u0, plan.a, plan.r, 6, 1_000_000)?),
    };
    let partition = blocks::build_blocks(&chain, &u0, plan.a, plan.r, horizon, config.p)?;
    let q_a = blocks::q_of(plan.a, plan.q0);
    let verification = blocks::verify_partition(&chain, &partition, q_a)?;
    let p_even = {
        let c = config.p.ceil() as u32;
        c + c % 2
    };
    let covariance_checks = partition
        .blocks
        .windows(2)
        .take(3)
        .map(|w| {
            let m1: Vec<usize> = (w[0].a..=w[0].b).collect();
            let m2: Vec<usize> = (w[1].a..=w[1].b).collect();
            blocks::covariance_inequality_check(&chain, &m1, &m2, p_even, &u0)
        })
        .collect::<Result<Vec<_>>>()?;
    let tails = blocks::tail_statistics(&chain, &partition, config.p, config.seed)?;

    let v = &verification;
    let structural = v.amplitude_violations.is_empty() && v.separated && v.covering && v.k_n_consistent;
    let mut notes = Vec::new();
    let code = if !structural {
        EXIT_INTERNAL
    } else if !(v.sandwich_holds && v.ratio_holds && covariance_checks.iter().all(|c| c.pass)) {
        if !v.ratio_holds {
            notes.push(format!(
                "gap ratio deviation {:.6} exceeds 2Q(A)/A = {:.6}; within-gap variance {:.6} is not covered by that bound",
                v.ratio_deviations.iter().copied().fold(0.0, f64::max),
                v.ratio_bound,
                v.gap_variance
            ));
        }
        EXIT_WARNING
    } else {
        EXIT_OK
    };
    if plan.a_overridden || plan.r_overridden {
        notes.push("amplitude or separation overridden on the command line".into());
    }
    if let Some((a, b)) = partition.open_tail {
        notes.push(format!("indices {a}..={b} did not reach the target variance"));
    }
    let summary = vec![
        format!("p = {}, c_p = {}, r = {}, A = {:.4}, Q₀ = {:.4}", plan.p, plan.cp, plan.r, plan.a, plan.q0),
        format!("{} blocks over horizon {}", partition.blocks.len(), partition.horizon),
        format!(
            "amplitude {}, separated {}, covering {}, k_n {}, sandwich {}, gap ratio {}",
            ok(v.amplitude_violations.is_empty()),
            ok(v.separated),
            ok(v.covering),
            ok(v.k_n_consistent),
            ok(v.sandwich_holds),
            ok(v.ratio_holds)
        ),
    ];
    let rows: Vec<BlockRow> = partition
        .blocks
        .iter()
        .enumerate()
        .map(|(j, b)| BlockRow {
            j: j + 1,
            a: b.a,
            b: b.b,
            i_end: b.i_end,
            variance: b.variance,
            truncated: b.truncated,
        })
        .collect();
    let tables = vec![("blocks.csv".to_string(), csv_table(&rows)?)];
    let exact_tails = tails.exact;
    let json = report(
        config,
        Some(&doc),
        &[("verification", true), ("covariance_checks", true), ("tails", exact_tails)],
        notes,
        BlocksResult {
            plan,
            envelope,
            partition,
            verification,
            covariance_checks,
            tails,
        },
    )?;
    Ok(Outcome {
        json,
        tables,
        summary,
        code,
    })
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

#[derive(Serialize)]
struct TailSummary {
    epsilon: f64,
    /// Cross-path quantiles of `max_q 𝒟_q / q^ε`.
    median: f64,
    q90: f64,
    max: f64,
}

#[derive(Serialize)]
struct SimulateResult {
    horizon: usize,
    paths: usize,
    directions: Vec<Vec<f64>>,
    amplitude: f64,
    separation: usize,
    amplitude_reduced: bool,
    blocks: usize,
    clt: sim::CltDiagnostic,
    variance_matching: sim::VarianceMatching,
    rate_scaling: Vec<sim::W1Point>,
    lil: Vec<sim::LilSummary>,
    gap_maxima: Vec<TailSummary>,
    oracle: Vec<sim::OracleCheck>,
}

pub fn cmd_simulate(config: &ExperimentConfig) -> Result<Outcome> {
    let (doc, chain) = chain_from(config)?;
    let horizon = horizon_for(&chain, config.horizon.unwrap_or(2000));
    let paths = config.paths.unwrap_or(10_000);
    let dirs = grid(&chain, config.directions);
    let u0 = linalg::unit(chain.dim(), 0);
    let mut notes = vec![LIMITATION.to_string()];

    // the partition drives the surrogate; shrink A when the automatic choice leaves
    // fewer than four blocks inside the horizon
    let (_, plan) = plan(&chain, config)?;
    let mut amplitude = plan.a;
    let mut amplitude_reduced = false;
    if config.amplitude.is_none() {
        let fit = blocks::fit_horizon(&chain, &u0, plan.a, plan.r, 4, horizon)?;
        if let Some(auto) = fit.reduced_from {
            amplitude = fit.amplitude;
            amplitude_reduced = true;
            notes.push(format!(
                "amplitude reduced from {auto:.3} to {amplitude:.3} so that blocks close inside the horizon"
            ));
        }
    }
    let partition = blocks::build_blocks(&chain, &u0, amplitude, plan.r, horizon, config.p)?;

    // sums at the log-spaced KS checkpoints and at the block checkpoints
    let ks_points = log_checkpoints(horizon, 8);
    let block_points = partition.checkpoints();
    let mut checkpoints: Vec<usize> = ks_points.iter().chain(&block_points).copied().collect();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let req = SampleRequest {
        horizon,
        paths,
        seed: config.seed,
        checkpoints: checkpoints.clone(),
        directions: dirs.clone(),
        gaps: partition.gaps(),
        lil: true,
    };
    let batch = sim::sample_paths(&chain, &req)?;

    let variances: Vec<Vec<f64>> = {
        let per_dir: Vec<Vec<f64>> = dirs
            .iter()
            .map(|u| moments::prefix_variances(&chain, 1, horizon, u))
            .collect::<Result<_>>()?;
        checkpoints.iter().map(|n| per_dir.iter().map(|v| v[n - 1]).collect()).collect()
    };
    let mut clt = sim::clt_diagnostic(&batch, &variances);
    clt.points.retain(|p| ks_points.contains(&p.n));

    let variance_matching = sim::variance_matching(&chain, &partition, config.delta)?;
    let covs: Vec<_> = partition.blocks.iter().map(|b| b.theta_cov.clone()).collect();
    let surrogate = sim::gaussian_surrogate(&covs, &dirs, paths, config.seed)?;
    let block_batch = restrict(&batch, &checkpoints, &block_points);
    let s_values: Vec<f64> = variance_matching.points.iter().map(|p| p.s_n).collect();
    let rate_scaling = sim::rate_scaling(&block_batch, &surrogate, &s_values, config.delta, config.seed)?;
    let lil = sim::lil_diagnostic(&batch);
    if lil.is_empty() {
        notes.push("LIL statistic undefined: V_n never reaches e^e".into());
    }
    let gap_maxima = [0.1, 0.25]
        .into_iter()
        .map(|eps| {
            let mut per_path: Vec<f64> = (0..batch.paths)
                .map(|i| {
                    (0..batch.gap_count())
                        .map(|q| batch.gap_maxima(q)[i] / ((q + 1) as f64).powf(eps))
                        .fold(0.0, f64::max)
                })
                .collect();
            TailSummary {
                epsilon: eps,
                median: stats::quantile(&mut per_path, 0.5),
                q90: stats::quantile(&mut per_path, 0.9),
                max: per_path.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    let oracle = sim::oracle_equivalence(&chain, &batch, &dirs, 4.0)?;
    let oracle_failures = oracle.iter().filter(|c| !c.pass).count();

    let summary = vec![
        format!("{paths} paths to horizon {horizon}, {} directions, seed {}", dirs.len(), config.seed),
        format!(
            "KS at horizon: {}",
            clt.points
                .iter()
                .filter(|p| p.n == horizon)
                .map(|p| format!("{:.4}", p.ks))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        format!(
            "{} blocks (A = {:.3}, r = {}), variance-gap running max {:.4e}",
            partition.blocks.len(),
            amplitude,
            plan.r,
            variance_matching.c
        ),
        format!("oracle checks beyond 4 standard errors: {oracle_failures}/{}", oracle.len()),
    ];
    let tables = vec![
        ("ks.csv".to_string(), csv_table(clt.points.iter().map(KsRow::from))?),
        ("variance_gap.csv".to_string(), csv_table(&variance_matching.points)?),
        ("w1.csv".to_string(), csv_table(&rate_scaling)?),
        ("lil.csv".to_string(), csv_table(&lil)?),
        ("oracle.csv".to_string(), csv_table(&oracle)?),
    ];
    let json = report(
        config,
        Some(&doc),
        &[
            ("clt", false),
            ("variance_matching", true),
            ("rate_scaling", false),
            ("lil", false),
            ("oracle_exact_side", true),
        ],
        notes,
        SimulateResult {
            horizon,
            paths,
            directions: dirs.iter().map(|d| d.iter().copied().collect()).collect(),
            amplitude,
            separation: plan.r,
            amplitude_reduced,
            blocks: partition.blocks.len(),
            clt,
            variance_matching,
            rate_scaling,
            lil,
            gap_maxima,
            oracle,
        },
    )?;
    Ok(Outcome {
        json,
        tables,
        summary,
        code: EXIT_OK,
    })
}

#[derive(Serialize)]
struct KsRow {
    n: usize,
    direction_id: usize,
    ks: f64,
    stderr: f64,
}

impl From<&sim::KsPoint> for KsRow {
    fn from(p: &sim::KsPoint) -> Self {
        KsRow {
            n: p.n,
            direction_id: p.direction_id,
            ks: p.ks,
            stderr: p.stderr,
        }
    }
}

/// The batch restricted to a subset of its checkpoints.
fn restrict(batch: &sim::PathBatch, all: &[usize], keep: &[usize]) -> sim::PathBatch {
    let idx: Vec<usize> = keep
        .iter()
        .map(|n| all.binary_search(n).expect("block checkpoints were sampled"))
        .collect();
    batch.select_checkpoints(&idx)
}

pub fn cmd_verify(config: &ExperimentConfig) -> Result<Outcome> {
    let mut chains = battery::battery_chains()?;
    let mut extra = None;
    if let Some(path) = &config.chain_path {
        let (doc, chain) = load_chain(Path::new(path))?;
        chains.push((doc.name.clone().unwrap_or_else(|| path.clone()), chain));
        extra = Some(doc);
    }
    let mut cfg = if config.quick { VerifyConfig::quick() } else { VerifyConfig::default() };
    cfg.seed = config.seed;
    cfg.p = config.p;
    cfg.cp = config.cp;
    cfg.delta = config.delta;
    cfg.k_max = config.k_max;
    cfg.exponent = config.q_exponent.into();
    if let Some(n) = config.paths {
        cfg.oracle_paths = n;
    }
    if let Some(h) = config.horizon {
        cfg.horizon_cap = h;
    }
    let result = verify::run_all(&chains, &cfg)?;
    let mut summary: Vec<String> = result.checks.iter().map(|c| c.line()).collect();
    let code = match result.first_hard_failure() {
        Some(c) => {
            summary.push(format!("first failing invariant: {}", c.id));
            EXIT_INTERNAL
        }
        None => EXIT_OK,
    };
    #[derive(Serialize)]
    struct VerifyResult {
        settings: VerifyConfig,
        report: verify::VerifyReport,
    }
    let json = report(
        config,
        extra.as_ref(),
        &[("inequalities", true), ("structure", true), ("mixing", true), ("oracle", false)],
        vec![LIMITATION.to_string()],
        VerifyResult {
            settings: cfg,
            report: result,
        },
    )?;
    Ok(Outcome {
        json,
        tables: vec![],
        summary,
        code,
    })
}

pub fn execute(command: Command, args: &Args) -> Result<Outcome> {
    let config = ExperimentConfig::resolve(command, args)?;
    sim::with_pool(|| match command {
        Command::Moments => cmd_moments(&config),
        Command::Mixing => cmd_mixing(&config),
        Command::Blocks => cmd_blocks(&config),
        Command::Simulate => cmd_simulate(&config),
        Command::Verify => cmd_verify(&config),
    })?
}

fn write_outputs(dir: &Path, command: Command, outcome: &Outcome) -> Result<()> {
    let io = |path: &Path| {
        let p = path.display().to_string();
        move |source| Error::Io { path: p, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let name = serde_json::to_value(command)?.as_str().unwrap_or("report").to_string();
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, &outcome.json).map_err(io(&path))?;
    for (file, body) in &outcome.tables {
        let path = dir.join(file);
        std::fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(())
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let outcome = execute(cli.command, &cli.args).and_then(|o| {
        if let Some(dir) = &cli.args.out {
            write_outputs(dir, cli.command, &o)?;
        }
        Ok(o)
    });
    match outcome {
        Ok(o) => {
            if cli.args.json {
                print!("{}", o.json);
            } else {
                for line in &o.summary {
                    println!("{line}");
                }
            }
            o.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
