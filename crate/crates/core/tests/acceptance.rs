//! Acceptance run: one PASS/FAIL line per criterion followed by a summary.
//! The criterion lines are the record; the run itself always exits 0 so a
//! known-unattainable criterion does not mask regressions elsewhere.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use asymq::bootstrap::pairwise_bootstrap;
use asymq::estimate::two_stage;
use asymq::mle::{fit_two_type_cells, TypeCell};
use asymq::model::{uniform_grid, win_probabilities, AsymmetrySpec, LevelTransform, ParentQuantileCurve, PowerCurve, Variant};
use asymq::qr::fit;
use asymq::revenue::{misspec_study, symmetric_expected_revenue, MisspecOptions, MisspecRow, RevenueContext, RiemannRule, TABLE1_ROWS, TABLE2_ROWS};
use asymq::simulate::{run_mc_study, simulate_dataset, BidderCount, CurveSpec, SimConfig, TypeRule, WinnerReport};
use asymq::spec_tests::{max_xi_test, rw_bootstrap_pvalue, winning_bid_quantile_grid, winning_bid_quantile_grid_naive, RwOptions};
use asymq::AuctionRecord;
use rand::Rng;

/// Reference rows: reserve (asymmetric, misspecified), revenue (asymmetric,
/// misspecified), loss in percent.
const REFERENCE_T1: [[f64; 5]; 10] = [
    [0.6630, 0.5451, 0.5389, 0.5059, 6.12],
    [0.7550, 0.5995, 0.6800, 0.6054, 10.97],
    [0.8558, 0.6403, 0.8223, 0.6738, 18.06],
    [0.9092, 0.6671, 0.8927, 0.7230, 19.0],
    [0.9730, 0.7785, 0.9707, 0.7173, 26.10],
    [0.4830, 0.4420, 0.2550, 0.2535, 0.59],
    [0.5559, 0.4901, 0.3948, 0.3887, 1.55],
    [0.6768, 0.5773, 0.5987, 0.5767, 3.67],
    [0.7676, 0.6450, 0.7336, 0.6930, 5.53],
    [0.8710, 0.7785, 0.9283, 0.7148, 23.0],
];

const REFERENCE_T2: [[f64; 5]; 5] = [
    [0.4830, 0.4420, 0.2550, 0.2535, 0.59],
    [0.4680, 0.4433, 0.2593, 0.2590, 0.14],
    [0.4550, 0.4442, 0.2627, 0.2627, 0.003],
    [0.4470, 0.4440, 0.2648, 0.2648, 0.0003],
    [0.4440, 0.4449, 0.2655, 0.2655, 0.00],
];

/// Reference SEs at τ = 0.1, …, 0.9, per type.
const REFERENCE_SE: [[f64; 9]; 2] = [
    [0.0000, 0.0019, 0.0022, 0.0143, 0.0288, 0.0526, 0.0574, 0.0460, 0.0357],
    [0.0560, 0.0460, 0.0401, 0.0474, 0.0348, 0.0335, 0.0309, 0.0291, 0.0300],
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, o: &Outcome, failed: &mut Vec<usize>) {
    println!("criterion {id} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    if !o.pass {
        failed.push(id);
    }
}

fn table_rows(rows: &[(f64, f64, f64)], reference: &[[f64; 5]]) -> (Vec<MisspecRow>, Vec<String>) {
    let opts = MisspecOptions::default();
    let mut misses = Vec::new();
    let mut out = Vec::new();
    for (&(l1, l2, k), want) in rows.iter().zip(reference) {
        let row = match misspec_study(l1, l2, k, &opts) {
            Ok(r) => r,
            Err(e) => {
                misses.push(format!("({l1}, {l2}, {k}): {e}"));
                continue;
            }
        };
        let got = [row.rp_asym, row.rp_mis, row.rev_asym, row.rev_mis];
        for (j, (g, w)) in got.iter().zip(want).enumerate() {
            if (g - w).abs() > 0.005 {
                misses.push(format!("({l1}, {l2}, {k}) column {j}: {g:.4} vs {w:.4}"));
            }
        }
        if (100.0 * row.pct_loss - want[4]).abs() > 0.3 {
            misses.push(format!("({l1}, {l2}, {k}) loss: {:.2}% vs {:.2}%", 100.0 * row.pct_loss, want[4]));
        }
        out.push(row);
    }
    (out, misses)
}

fn criterion_table1() -> Outcome {
    let t0 = Instant::now();
    let (a, mut misses) = table_rows(&TABLE1_ROWS, &REFERENCE_T1);
    let (b, _) = table_rows(&TABLE1_ROWS, &REFERENCE_T1);
    let secs = t0.elapsed().as_secs_f64() / 2.0;
    if a != b {
        misses.push("two runs differ".into());
    }
    if secs >= 5.0 {
        misses.push(format!("runtime {secs:.2} s"));
    }
    Outcome { pass: misses.is_empty(), detail: format!("10 rows in {secs:.2} s; misses {misses:?}") }
}

fn criterion_table2() -> Outcome {
    let t0 = Instant::now();
    let (rows, mut misses) = table_rows(&TABLE2_ROWS, &REFERENCE_T2);
    let secs = t0.elapsed().as_secs_f64();
    if secs >= 2.0 {
        misses.push(format!("runtime {secs:.2} s"));
    }
    let losses: Vec<f64> = rows.iter().map(|r| r.pct_loss).collect();
    if !losses.windows(2).all(|w| w[1] <= w[0]) {
        misses.push(format!("loss not declining: {losses:?}"));
    }
    if losses.last().is_some_and(|l| 100.0 * l > 0.3) {
        misses.push("loss at (0.5, 0.5) is not within 0.3 points of zero".into());
    }
    let shown: Vec<String> = losses.iter().map(|l| format!("{:.4}%", 100.0 * l)).collect();
    Outcome { pass: misses.is_empty(), detail: format!("losses {shown:?} in {secs:.2} s; misses {misses:?}") }
}

/// Runs the scaled Monte Carlo; returns the outcome and the number of
/// uncertified quantile fits for the optimality check.
fn criterion_monte_carlo() -> (Outcome, usize, usize) {
    let t0 = Instant::now();
    let taus: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let cfg = SimConfig::two_type_design(2000, 20240501);
    let report = match run_mc_study(&cfg, 200, &taus, &[1.0, 2.0]) {
        Ok(r) => r,
        Err(e) => return (Outcome { pass: false, detail: format!("harness failed: {e}") }, 0, 0),
    };
    let mut misses = Vec::new();
    let mut lines = Vec::new();
    for (t, summary) in report.types.iter().enumerate() {
        for (i, &tau) in taus.iter().enumerate() {
            let (bias, se, want) = (summary.bias[i], summary.se[i], REFERENCE_SE[t][i]);
            lines.push(format!("t{}τ{tau:.1} {bias:+.4}/{se:.4}", t + 1));
            if !(0.25..0.85).contains(&tau) {
                continue;
            }
            if bias.abs() > 0.02 {
                misses.push(format!("type {} τ={tau:.1} bias {bias:+.4}", t + 1));
            }
            if !(want / 2.0..=want * 2.0).contains(&se) {
                misses.push(format!("type {} τ={tau:.1} SE {se:.4} vs {want:.4}", t + 1));
            }
        }
    }
    if report.failures > 0 {
        misses.push(format!("{} failed replications", report.failures));
    }
    let detail = format!(
        "{} reps in {:.0} s, bias/SE [{}]; misses {misses:?}",
        report.n_replications - report.failures,
        t0.elapsed().as_secs_f64(),
        lines.join(", ")
    );
    (Outcome { pass: misses.is_empty(), detail }, report.uncertified, report.n_fits)
}

fn lambda_from_cells(cells: &[TypeCell]) -> asymq::Result<Vec<f64>> {
    let mut agg: BTreeMap<(usize, usize), TypeCell> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.p > 0 && c.q > 0) {
        let e = agg.entry((c.p, c.q)).or_insert(TypeCell { p: c.p, q: c.q, ..TypeCell::default() });
        e.wins0 += c.wins0;
        e.wins1 += c.wins1;
    }
    let v: Vec<TypeCell> = agg.into_values().collect();
    Ok(vec![fit_two_type_cells(&v)?.0])
}

fn criterion_mle_recovery() -> Outcome {
    let t0 = Instant::now();
    let truth = 0.6988;
    let (mut inside, mut covered, mut failed) = (0, 0, 0);
    for s in 0..100u64 {
        let cfg = SimConfig { spec: AsymmetrySpec::two_types(truth), ..SimConfig::two_type_design(2000, 7000 + s) };
        let data = simulate_dataset(&cfg).expect("valid design");
        // One compact (p, q, winner) tuple per auction; symmetric auctions
        // are resampled but carry no information on λ.
        let tuples: Vec<TypeCell> = data
            .iter()
            .map(|r| {
                let (p, q) = r.type_pair().expect("two-type roster");
                let won0 = usize::from(r.winner_label() == 0);
                TypeCell { p, q, wins0: won0, wins1: 1 - won0 }
            })
            .collect();
        match pairwise_bootstrap(&tuples, 500, s, &[0.95], lambda_from_cells) {
            Ok(b) => {
                inside += usize::from((0.6..=0.8).contains(&b.point[0]));
                let ci = b.intervals[0][0];
                covered += usize::from(ci.low <= truth && truth <= ci.high);
            }
            Err(_) => failed += 1,
        }
    }
    Outcome {
        pass: inside >= 95 && covered >= 90,
        detail: format!(
            "estimate in [0.60, 0.80] in {inside}/100, 95% CI covers in {covered}/100, {failed} failed, {:.0} s",
            t0.elapsed().as_secs_f64()
        ),
    }
}

fn criterion_symmetric_reduction() -> Outcome {
    let curve = ParentQuantileCurve::tabulate(&PowerCurve::new(vec![0.5, 0.25], 1.5f64.exp()).unwrap(), uniform_grid(100)).unwrap();
    let x = [1.0, 2.0];
    let rule = RiemannRule::on_nodes(curve.grid());
    let eps = 0.1;
    let mut worst = 0.0f64;
    for n in 2..=12 {
        let ctx = RevenueContext::new(&x, vec![1.0; n], &curve, 0.05, eps).unwrap();
        for i in 0..50 {
            let r = eps + (1.0 - 2.0 * eps) * i as f64 / 49.0;
            let a = ctx.expected_revenue(r).unwrap();
            let b = symmetric_expected_revenue(r, &x, n, &curve, 0.05, eps, &rule).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    Outcome { pass: worst <= 1e-10, detail: format!("max |difference| {worst:.2e} over N = 2..12, 50 reserves") }
}

fn criterion_qr(uncertified: usize, n_fits: usize) -> Outcome {
    let mut worst = 0.0f64;
    let mut bad_cert = 0;
    for inst in 0..50 {
        let (x, w, levels, p, tau) = common::instance(inst);
        let f = fit(&x, &w, &levels, p, tau).expect("well-posed instance");
        let oracle = common::brute_force(&x, &w, &levels, p);
        worst = worst.max((f.objective - oracle).abs() / oracle.abs().max(1.0));
        bad_cert += usize::from(!f.certified);
    }
    Outcome {
        pass: worst <= 1e-8 && bad_cert == 0 && uncertified == 0 && n_fits > 0,
        detail: format!(
            "worst relative gap {worst:.2e} on 50 instances ({bad_cert} uncertified); Monte Carlo fits uncertified {uncertified}/{n_fits}"
        ),
    }
}

fn criterion_properties() -> Outcome {
    const CASES: usize = 1000;
    let mut r = asymq::rng::stream(77, 0);
    let mut misses = [0usize; 4];
    for _ in 0..CASES {
        let lw: f64 = r.gen_range(0.01..20.0);
        let t = LevelTransform::new(lw, lw + r.gen_range(0.01..60.0)).unwrap();
        let (a, b) = (r.gen::<f64>(), r.gen::<f64>());
        let (lo, hi) = (a.min(b), a.max(b));
        if t.psi(0.0) != 0.0 || t.psi(1.0) != 1.0 || t.psi(lo) > t.psi(hi) {
            misses[0] += 1;
        }

        let n = r.gen_range(2..15);
        let lambdas: Vec<f64> = (0..n).map(|_| r.gen_range(1e-3..1e3)).collect();
        if (win_probabilities(&lambdas).iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            misses[1] += 1;
        }

        let lw: f64 = r.gen_range(0.1..10.0);
        let t = LevelTransform::new(lw, lw + r.gen_range(0.1..20.0)).unwrap();
        let tau = r.gen_range(0.05..0.95);
        let h = 1e-6;
        let fd = (t.psi(tau + h) - t.psi(tau - h)) / (2.0 * h);
        let d = t.psi_derivative(tau);
        if (fd - d).abs() > 1e-6 * (1.0 + d.abs()) {
            misses[2] += 1;
        }

        let gamma: Vec<Vec<f64>> = (0..99).map(|_| vec![r.gen_range(-5.0..5.0), r.gen_range(-2.0..2.0)]).collect();
        let curve = ParentQuantileCurve::new(uniform_grid(100), gamma).unwrap();
        let lw: f64 = r.gen_range(0.05..10.0);
        let t = LevelTransform::new(lw, lw + r.gen_range(0.05..30.0)).unwrap();
        let x = [1.0, r.gen_range(0.1..4.0)];
        let taus = uniform_grid(100);
        let w = winning_bid_quantile_grid(&x, &t, &curve, &taus, 100).unwrap();
        let naive = winning_bid_quantile_grid_naive(&x, &t, &curve, &taus, 100).unwrap();
        if !w.windows(2).all(|p| p[0] <= p[1]) || w != naive {
            misses[3] += 1;
        }
    }
    Outcome {
        pass: misses.iter().all(|&m| m == 0),
        detail: format!(
            "{CASES} cases each; violations: Ψ monotone/endpoints {}, win-probability sum {}, Ψ' vs difference {}, rearranged quantile {}",
            misses[0], misses[1], misses[2], misses[3]
        ),
    }
}

fn p_quantiles(mut ps: Vec<f64>) -> Vec<f64> {
    ps.sort_by(f64::total_cmp);
    [0.1, 0.25, 0.5, 0.75, 0.9].iter().map(|&q| asymq::bootstrap::quantile_sorted(&ps, q)).collect()
}

fn criterion_size() -> Outcome {
    let (sims, b) = (200usize, 500usize);
    let t0 = Instant::now();
    let mut xi_p = Vec::with_capacity(sims);
    for s in 0..sims {
        let cfg = SimConfig {
            n_auctions: 500,
            n_bidders: BidderCount::Uniform { lo: 3, hi: 4 },
            types: TypeRule::Iid { probs: vec![0.5, 0.5] },
            spec: AsymmetrySpec::two_types(0.7),
            curve: CurveSpec::Power(PowerCurve::uniform()),
            covariates: vec![],
            bidder_z: vec![],
            winner_report: WinnerReport::Type,
            seed: 1000 + s as u64,
        };
        let data = simulate_dataset(&cfg).expect("valid design");
        xi_p.push(max_xi_test(&data, b, s as u64, 30).map_or(f64::NAN, |r| r.p_value));
    }
    let xi_secs = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let mut rw_p = Vec::with_capacity(sims);
    for s in 0..sims {
        let cfg = SimConfig {
            n_auctions: 200,
            n_bidders: BidderCount::Uniform { lo: 2, hi: 4 },
            types: TypeRule::Iid { probs: vec![0.5, 0.5] },
            spec: AsymmetrySpec::two_types(0.7),
            curve: CurveSpec::Power(PowerCurve::new(vec![1.0, 0.5], 1.0).unwrap()),
            covariates: vec![(1.0, 3.0)],
            bidder_z: vec![],
            winner_report: WinnerReport::Type,
            seed: 5000 + s as u64,
        };
        let data: Vec<AuctionRecord> = simulate_dataset(&cfg).expect("valid design");
        let p = two_stage(&data, Variant::TypeFixedEffects, &uniform_grid(100))
            .and_then(|f| rw_bootstrap_pvalue(&data, &f.curve, &f.mle.spec, b, s as u64, &RwOptions::default()))
            .map_or(f64::NAN, |r| r.p_value);
        rw_p.push(p);
    }
    let rw_secs = t0.elapsed().as_secs_f64();

    let rate = |ps: &[f64]| ps.iter().filter(|&&p| p <= 0.05).count() as f64 / ps.len() as f64;
    let (xi_rate, rw_rate) = (rate(&xi_p), rate(&rw_p));
    let errors = xi_p.iter().chain(&rw_p).filter(|p| p.is_nan()).count();
    let ok = |r: f64| (0.02..=0.10).contains(&r);
    Outcome {
        pass: ok(xi_rate) && ok(rw_rate) && errors == 0,
        detail: format!(
            "max|ξ| rejects {:.1}% (p quantiles {:.3?}, {xi_secs:.0} s), RW rejects {:.1}% (p quantiles {:.3?}, {rw_secs:.0} s), {errors} errors",
            100.0 * xi_rate,
            p_quantiles(xi_p.clone()),
            100.0 * rw_rate,
            p_quantiles(rw_p.clone()),
        ),
    }
}

fn criterion_ks() -> Outcome {
    let l = 2000;
    let crit = 1.358 / (l as f64).sqrt();
    let mut passes = 0;
    let mut worst = 0.0f64;
    for s in 0..100u64 {
        let cfg = SimConfig {
            n_auctions: l,
            n_bidders: BidderCount::Fixed(2),
            types: TypeRule::Positional,
            spec: AsymmetrySpec::two_types(1.0),
            curve: CurveSpec::Power(PowerCurve::uniform()),
            covariates: vec![],
            bidder_z: vec![],
            winner_report: WinnerReport::Type,
            seed: 9000 + s,
        };
        let mut w: Vec<f64> = simulate_dataset(&cfg).expect("valid design").iter().map(|r| r.winning_bid).collect();
        w.sort_by(f64::total_cmp);
        let n = w.len() as f64;
        let d = w
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = 2.0 * v - v * v;
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        worst = worst.max(d);
        passes += usize::from(d <= crit);
    }
    Outcome { pass: passes >= 90, detail: format!("{passes}/100 below {crit:.4}; largest D {worst:.4}") }
}

fn main() {
    let mut failed = Vec::new();
    report(1, "misspecification table, high/low asymmetry", &criterion_table1(), &mut failed);
    report(2, "misspecification table, approach to symmetry", &criterion_table2(), &mut failed);
    let (mc, uncertified, n_fits) = criterion_monte_carlo();
    report(3, "Monte Carlo bias and SE", &mc, &mut failed);
    report(4, "MLE recovery and bootstrap coverage", &criterion_mle_recovery(), &mut failed);
    report(5, "symmetric revenue reduction", &criterion_symmetric_reduction(), &mut failed);
    report(6, "quantile regression oracle and certificates", &criterion_qr(uncertified, n_fits), &mut failed);
    report(7, "model primitive properties", &criterion_properties(), &mut failed);
    report(8, "specification test size", &criterion_size(), &mut failed);
    report(9, "winning-bid distribution identity", &criterion_ks(), &mut failed);
    if failed.is_empty() {
        println!("all criteria pass");
    } else {
        println!("failing criteria: {failed:?}");
    }
}
