//! `asymq`: simulate, estimate, test and evaluate power-asymmetry auction models.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure, 4 bootstrap abort.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asymq::estimate::two_stage;
use asymq::io::{self, DatasetSchema};
use asymq::model::{AsymmetrySpec, ParentQuantileCurve, PowerCurve, QuantileModel, Variant};
use asymq::revenue::{self, MisspecOptions, RevenueContext, TABLE1_ROWS, TABLE2_ROWS};
use asymq::simulate::{run_mc_study, simulate_dataset, BidderCount, SimConfig, WinnerReport};
use asymq::spec_tests::{self, RwOptions};
use asymq::{AuctionRecord, Error, ErrorClass, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "asymq", version, about = "Power-asymmetry quantile models for ascending auctions", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. A `--config` file of `key = value`
/// lines supplies defaults; flags on the command line win.
#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Main output file.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    #[serde(skip)]
    threads: Option<usize>,
    /// Bootstrap replications.
    #[arg(long = "B", default_value_t = 10_000)]
    b: usize,
    /// Truncation index for revenue integrals.
    #[arg(long, default_value_t = revenue::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Minimum cell size (strict) for the per-cell statistics.
    #[arg(long, default_value_t = spec_tests::DEFAULT_MIN_CELL)]
    min_cell: usize,
    /// Quantile levels: `lo..hi/den` (e.g. `1..99/100`) or a comma list.
    #[arg(long, default_value = "1..99/100")]
    tau_grid: String,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DataArgs {
    /// Auction table.
    #[arg(long)]
    data: PathBuf,
    /// Bidder table; switches to the full-identity layout.
    #[arg(long)]
    bidders: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic dataset.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of auctions.
        #[arg(long = "L", default_value_t = 2000)]
        n_auctions: usize,
        /// Bidders per auction, `n` or `lo..hi`.
        #[arg(long, default_value = "5")]
        n_bidders: String,
        /// Exponent of type b (type a is the reference with 1).
        #[arg(long, default_value_t = 2f64.exp())]
        lambda: f64,
        /// Probability that a bidder is of type a.
        #[arg(long, default_value_t = 0.5)]
        share_a: f64,
        /// Also write a bidder table (full-identity layout) to this path.
        #[arg(long)]
        bidders_out: Option<PathBuf>,
    },
    /// Two-stage estimation of the asymmetry and the parent quantile curve.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "type_fixed")]
        variant: Variant,
        /// Curve as CSV (`tau, gamma_0, …`).
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Expected revenue, optimal reserve and type-composition table.
    Revenue {
        #[command(flatten)]
        common: Common,
        /// Fit produced by `estimate`; without it the parent is `τ^e` with `--power-exponent`.
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        power_exponent: f64,
        /// Auction characteristics (without intercept), comma separated.
        #[arg(long, default_value = "")]
        x: String,
        /// Bidders per type, comma separated.
        #[arg(long, default_value = "1,1")]
        counts: String,
        #[arg(long, default_value_t = 0.0)]
        v0: f64,
        #[arg(long, default_value_t = revenue::DEFAULT_RESERVE_GRID)]
        grid_size: usize,
        /// `(r, Π)` CSV of the revenue curve.
        #[arg(long)]
        curve_out: Option<PathBuf>,
        /// Type-composition table over `lo..hi` bidders.
        #[arg(long)]
        swap_range: Option<String>,
        #[arg(long)]
        swap_out: Option<PathBuf>,
    },
    /// Revenue cost of fitting a symmetric model to asymmetric bidders.
    Misspec {
        #[command(flatten)]
        common: Common,
        /// `table1`, `table2`, `all`, or a single `l1,l2,kappa`.
        #[arg(long, default_value = "all")]
        rows: String,
    },
    /// Max-|ξ| test of the power asymmetry.
    TestXi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Per-cell table (`p, q, |xi|, p_value, L_pq`).
        #[arg(long)]
        cells_out: Option<PathBuf>,
    },
    /// Joint specification test of the asymmetry and the parent curve.
    TestRw {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Fit produced by `estimate`; estimated here when absent.
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long, default_value = "type_fixed")]
        variant: Variant,
        /// Resample within type proportions.
        #[arg(long)]
        fixed_proportions: bool,
        /// Keep the original curve in the bootstrap replicates.
        #[arg(long)]
        keep_curve: bool,
        /// Per-proportion statistics to this CSV.
        #[arg(long)]
        cells_out: Option<PathBuf>,
    },
    /// Monte Carlo study of the two-stage estimator (two-type design).
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long = "L", default_value_t = 2000)]
        n_auctions: usize,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Characteristics at which the quantile functions are evaluated.
        #[arg(long, default_value = "2")]
        x: String,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Estimate { common, .. }
            | Command::Revenue { common, .. }
            | Command::Misspec { common, .. }
            | Command::TestXi { common, .. }
            | Command::TestRw { common, .. }
            | Command::Mc { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Estimate { .. } => "estimate",
            Command::Revenue { .. } => "revenue",
            Command::Misspec { .. } => "misspec",
            Command::TestXi { .. } => "test-xi",
            Command::TestRw { .. } => "test-rw",
            Command::Mc { .. } => "mc",
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::InvalidParameter(format!("not a number: `{t}`"))))
        .collect()
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidParameter(format!("expected `n` or `lo..hi`, got `{s}`"));
    match s.split_once("..") {
        Some((a, b)) => Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            Ok((n, n))
        }
    }
}

/// `lo..hi/den` → `lo/den, …, hi/den`; otherwise a comma list.
fn parse_tau_grid(s: &str) -> Result<Vec<f64>> {
    let taus = match s.split_once('/') {
        Some((range, den)) if range.contains("..") => {
            let (lo, hi) = parse_range(range)?;
            let den: f64 = den.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad denominator in `{s}`")))?;
            (lo..=hi).map(|i| i as f64 / den).collect()
        }
        _ => parse_list(s)?,
    };
    if taus.is_empty() || taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) || taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!("quantile grid must be increasing inside (0, 1): `{s}`")));
    }
    Ok(taus)
}

fn metadata(cmd: &Command, extra: Value) -> Value {
    json!({
        "tool": "asymq",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cmd.name(),
        "seed": cmd.common().seed,
        "config": serde_json::to_value(cmd.common()).unwrap_or(Value::Null),
        "arguments": extra,
    })
}

fn load(data: &DataArgs) -> Result<Vec<AuctionRecord>> {
    match schema(data) {
        DatasetSchema::TypeCount => io::load_type_count(&data.data),
        DatasetSchema::FullIdentity => io::load_full_identity(&data.data, data.bidders.as_deref().unwrap_or(Path::new(""))),
    }
}

fn schema(data: &DataArgs) -> DatasetSchema {
    if data.bidders.is_some() {
        DatasetSchema::FullIdentity
    } else {
        DatasetSchema::TypeCount
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitFile {
    spec: AsymmetrySpec<f64>,
    curve: ParentQuantileCurve<f64>,
    #[serde(default)]
    loglik: f64,
}

fn read_fit(path: &Path) -> Result<FitFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text)?;
    Ok(serde_json::from_value(doc.get("result").cloned().unwrap_or(doc))?)
}

fn require_out(common: &Common) -> Result<&Path> {
    common.out.as_deref().ok_or(Error::InvalidParameter("--out is required".into()))
}

fn run(cmd: &Command) -> Result<()> {
    let common = cmd.common();
    match cmd {
        Command::Simulate { n_auctions, n_bidders, lambda, share_a, bidders_out, .. } => {
            let (lo, hi) = parse_range(n_bidders)?;
            let mut cfg = SimConfig::two_type_design(*n_auctions, common.seed);
            cfg.n_bidders = if lo == hi { BidderCount::Fixed(lo) } else { BidderCount::Uniform { lo, hi } };
            cfg.spec = AsymmetrySpec::two_types(*lambda);
            cfg.types = asymq::simulate::TypeRule::Iid { probs: vec![*share_a, 1.0 - share_a] };
            if bidders_out.is_some() {
                cfg.winner_report = WinnerReport::Index;
            }
            let data = simulate_dataset(&cfg)?;
            let meta = metadata(cmd, serde_json::to_value(&cfg)?);
            let out = require_out(common)?;
            match bidders_out {
                Some(b) => io::save_full_identity(out, b, &data, &meta)?,
                None => io::save_type_count(out, &data, &meta)?,
            }
            let wins_a = data.iter().filter(|r| r.winner_label() == 0).count();
            println!("simulated {} auctions; type a won {wins_a}; written to {}", data.len(), out.display());
        }
        Command::Estimate { data, variant, curve_out, .. } => {
            let records = load(data)?;
            let taus = parse_tau_grid(&common.tau_grid)?;
            let fit = two_stage(&records, *variant, &taus)?;
            let meta = metadata(cmd, json!({ "data": data, "variant": variant }));
            let result = json!({
                "spec": fit.mle.spec,
                "loglik": fit.mle.loglik,
                "converged": fit.mle.converged,
                "n_auctions": records.len(),
                "n_informative": fit.mle.n_used,
                "curve": fit.curve,
                "objectives": fit.objectives,
                "uncertified_levels": fit.uncertified,
            });
            io::write_json(require_out(common)?, &meta, &result)?;
            if let Some(path) = curve_out {
                write_curve_csv(path, &meta, &fit.curve)?;
            }
            println!("variant {}: alpha = {:?}, beta = {:?}, loglik = {:.4}", variant.as_str(), fit.mle.spec.alpha, fit.mle.spec.beta, fit.mle.loglik);
            println!("curve on {} levels; {} uncertified fits", taus.len(), fit.uncertified.len());
        }
        Command::Revenue { fit, power_exponent, x, counts, v0, grid_size, curve_out, swap_range, swap_out, .. } => {
            let x: Vec<f64> = std::iter::once(1.0).chain(parse_list(x)?).collect();
            let counts: Vec<usize> = parse_list(counts)?.into_iter().map(|c| c as usize).collect();
            let (spec, curve): (AsymmetrySpec<f64>, Box<dyn QuantileModel<f64>>) = match fit {
                Some(path) => {
                    let f = read_fit(path)?;
                    (f.spec, Box::new(f.curve))
                }
                None => {
                    let mut scales = vec![0.0; x.len()];
                    scales[0] = 1.0;
                    (AsymmetrySpec::two_types(1.0), Box::new(PowerCurve::new(scales, *power_exponent)?))
                }
            };
            let roster = asymq::model::BidderRoster::from_type_counts(&counts)?;
            let ctx = RevenueContext::from_spec(&x, &spec, &roster, curve.as_ref(), *v0, common.epsilon)?;
            let best = ctx.optimal_reserve(*grid_size)?;
            let r_grid = ctx.reserve_grid(*grid_size);
            let rc = ctx.revenue_curve(&r_grid)?;
            let no_reserve = ctx.expected_revenue(common.epsilon)?;
            let meta = metadata(cmd, json!({ "x": x, "counts": counts, "v0": v0, "grid_size": grid_size }));
            let swap = match swap_range {
                Some(r) => Some(revenue::type_swap_table(&x, parse_range(r)?, &spec, curve.as_ref(), *v0, common.epsilon)?),
                None => None,
            };
            let result = json!({
                "lambdas": ctx.lambdas(),
                "optimal": best,
                "revenue_without_reserve": no_reserve,
                "selling_probability": revenue::selling_probability(best.r_star, ctx.lambda_total()),
                "foc_residual": ctx.foc_residual(best.r_star).ok(),
            });
            if let Some(out) = &common.out {
                io::write_json(out, &meta, &result)?;
            }
            if let Some(path) = curve_out {
                let rows: Vec<Vec<f64>> = rc.r_grid.iter().zip(&rc.pi).map(|(r, p)| vec![*r, *p]).collect();
                io::write_csv_table(path, &meta, &["r", "pi"], &rows)?;
            }
            if let (Some(rows), Some(path)) = (&swap, swap_out) {
                io::write_csv_rows(path, &meta, rows)?;
            }
            println!(
                "optimal reserve level {:.4}, price {:.4}, revenue {:.4} (no reserve {:.4})",
                best.r_star, best.reserve_price, best.pi_star, no_reserve
            );
        }
        Command::Misspec { rows, .. } => {
            let params: Vec<(f64, f64, f64)> = match rows.as_str() {
                "table1" => TABLE1_ROWS.to_vec(),
                "table2" => TABLE2_ROWS.to_vec(),
                "all" => TABLE1_ROWS.iter().chain(&TABLE2_ROWS[1..]).copied().collect(),
                other => match parse_list(other)?.as_slice() {
                    [a, b, k] => vec![(*a, *b, *k)],
                    _ => return Err(Error::InvalidParameter(format!("--rows expects table1, table2, all or l1,l2,kappa; got `{other}`"))),
                },
            };
            let opts = MisspecOptions::default();
            let out: Vec<revenue::MisspecRow> = params.iter().map(|&(a, b, k)| revenue::misspec_study(a, b, k, &opts)).collect::<Result<_>>()?;
            if let Some(path) = &common.out {
                io::write_csv_rows(path, &metadata(cmd, json!({ "rows": rows })), &out)?;
            }
            println!("{:>5} {:>5} {:>5} {:>8} {:>8} {:>8} {:>8} {:>7}", "l1", "l2", "kappa", "rp_asym", "rp_mis", "rev_asy", "rev_mis", "loss%");
            for r in &out {
                println!(
                    "{:>5} {:>5} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>7.3}",
                    r.lambda1, r.lambda2, r.kappa, r.rp_asym, r.rp_mis, r.rev_asym, r.rev_mis, 100.0 * r.pct_loss
                );
            }
        }
        Command::TestXi { data, cells_out, .. } => {
            let records = load(data)?;
            let report = spec_tests::max_xi_test(&records, common.b, common.seed, common.min_cell)?;
            let meta = metadata(cmd, json!({ "data": data }));
            if let Some(out) = &common.out {
                io::write_json(out, &meta, &report)?;
            }
            if let (Some(path), Some(cells)) = (cells_out, &report.per_cell) {
                let rows: Vec<Vec<f64>> = cells
                    .iter()
                    .map(|c| vec![c.p as f64, c.q as f64, c.xi.abs(), c.p_value.unwrap_or(f64::NAN), c.l_pq as f64])
                    .collect();
                io::write_csv_table(path, &meta, &["p", "q", "abs_xi", "p_value", "L_pq"], &rows)?;
            }
            println!("max|xi| = {:.3}, p-value = {:.4} (B = {}, {} failed)", report.statistic, report.p_value, report.b, report.failures);
        }
        Command::TestRw { data, fit, variant, fixed_proportions, keep_curve, cells_out, .. } => {
            let records = load(data)?;
            let (spec, curve) = match fit {
                Some(path) => {
                    let f = read_fit(path)?;
                    (f.spec, f.curve)
                }
                None => {
                    let taus = parse_tau_grid(&common.tau_grid)?;
                    let f = two_stage(&records, *variant, &taus)?;
                    (f.mle.spec, f.curve)
                }
            };
            let opts = RwOptions { fixed_proportions: *fixed_proportions, refit_curve: !keep_curve, ..RwOptions::default() };
            let report = spec_tests::rw_bootstrap_pvalue(&records, &curve, &spec, common.b, common.seed, &opts)?;
            let meta = metadata(cmd, json!({ "data": data, "options": opts }));
            if let Some(out) = &common.out {
                io::write_json(out, &meta, &report)?;
            }
            if let Some(path) = cells_out {
                let cells = spec_tests::rw_by_cell(&records, &curve, &spec, &opts, common.min_cell)?;
                io::write_csv_rows(path, &meta, &cells)?;
            }
            println!("RW = {:.4}, p-value = {:.4} (B = {}, {} failed)", report.statistic, report.p_value, report.b, report.failures);
        }
        Command::Mc { n_auctions, reps, x, .. } => {
            let taus = parse_tau_grid(&common.tau_grid)?;
            let x_eval: Vec<f64> = std::iter::once(1.0).chain(parse_list(x)?).collect();
            let cfg = SimConfig::two_type_design(*n_auctions, common.seed);
            let report = run_mc_study(&cfg, *reps, &taus, &x_eval)?;
            if let Some(out) = &common.out {
                io::write_json(out, &metadata(cmd, json!({ "design": cfg, "reps": reps })), &report)?;
            }
            for t in &report.types {
                println!("type {} (lambda {:.4})", t.label, t.lambda);
                for (k, tau) in report.taus.iter().enumerate() {
                    println!("  tau {:.2}: truth {:.4} bias {:+.4} se {:.4}", tau, t.truth[k], t.bias[k], t.se[k]);
                }
            }
            println!("{} replications, {} failed, {} of {} fits uncertified", report.n_replications, report.failures, report.uncertified, report.n_fits);
        }
    }
    Ok(())
}

fn write_curve_csv(path: &Path, meta: &Value, curve: &ParentQuantileCurve<f64>) -> Result<()> {
    let dim = curve.dim();
    let header: Vec<String> = std::iter::once("tau".to_string()).chain((0..dim).map(|k| format!("gamma_{k}"))).collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = curve.grid().iter().zip(curve.gamma()).map(|(t, g)| std::iter::once(*t).chain(g.iter().copied()).collect()).collect();
    io::write_csv_table(path, meta, &header_refs, &rows)
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Input => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::TestAbort => 4,
    }
}

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    if let Some(n) = cli.command.common().threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not configure threads: {e}");
        }
    }
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
