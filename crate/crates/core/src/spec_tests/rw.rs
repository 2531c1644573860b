//! Distance between the model and empirical joint cdfs of (W, X):
//! `RW = Σ_ℓ (Ĝ(W_ℓ, X_ℓ | γ̂, λ̂) − Ĝ(W_ℓ, X_ℓ))²` over auctions whose
//! winning bid lies in the band `[X'γ̂(τ_lo), X'γ̂(τ_hi)]`.
//!
//! The model winning-bid quantile at `τ` is obtained by rearrangement,
//! `Ŵ(τ) = v_lo + step · #{j : Ψ(F̂(v_j)) < τ}`, which is nondecreasing in
//! `τ` whatever the shape of the fitted curve.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{exceedance_share, TestReport};
use crate::bootstrap::MAX_FAILURE_SHARE;
use crate::data::AuctionRecord;
use crate::error::{Error, Result};
use crate::estimate::fit_curve_design;
use crate::mle::{fit_two_type_cells, mle_fit, TypeCell};
use crate::model::{AsymmetrySpec, LevelTransform, ParentQuantileCurve, Variant};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwOptions {
    /// Statistic levels `i/n_tau`, `i = 1, …, n_tau − 1`.
    pub n_tau: usize,
    pub value_grid: usize,
    /// Bootstrap draw levels `i/boot_n_tau`.
    pub boot_n_tau: usize,
    pub boot_value_grid: usize,
    /// Resample within each type proportion so that cell sizes are kept.
    pub fixed_proportions: bool,
    /// Re-estimate the parent curve on each bootstrap sample. Without it the
    /// replicates ignore the estimation of γ̂ and the test is conservative.
    pub refit_curve: bool,
}

impl Default for RwOptions {
    fn default() -> Self {
        Self { n_tau: 100, value_grid: 100, boot_n_tau: 1000, boot_value_grid: 1000, fixed_proportions: false, refit_curve: true }
    }
}

fn levels(n: usize) -> Vec<f64> {
    (1..n).map(|i| i as f64 / n as f64).collect()
}

/// Rearranged winning-bid quantile ingredients for one covariate vector;
/// independent of the asymmetry parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WinningBidGrid {
    lo: f64,
    hi: f64,
    step: f64,
    /// Number of curve nodes `G`; `F̂` takes the values `g/(G + 1)`.
    g_nodes: usize,
    /// `cum[m] = #{j : (G + 1) F̂(v_j) < m}`, `m = 0, …, G + 1`.
    cum: Vec<u32>,
}

impl WinningBidGrid {
    /// `values` are `X'γ̂(τ_k)` on the curve nodes.
    pub fn new(values: &[f64], value_grid: usize) -> Self {
        let g = values.len();
        let (a, b) = (values[0], values[g - 1]);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let step = (hi - lo) / value_grid as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut hist = vec![0u32; g + 2];
        for j in 1..=value_grid {
            let v = lo + j as f64 * step;
            hist[sorted.partition_point(|&s| s <= v) + 1] += 1;
        }
        for m in 1..hist.len() {
            hist[m] += hist[m - 1];
        }
        Self { lo, hi, step, g_nodes: g, cum: hist }
    }

    pub fn band(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn psi_levels(&self, t: &LevelTransform<f64>) -> Vec<f64> {
        let d = (self.g_nodes + 1) as f64;
        (0..=self.g_nodes).map(|g| t.psi(g as f64 / d)).collect()
    }

    /// `Ŵ(τ_i)` for each level.
    pub fn evaluate(&self, t: &LevelTransform<f64>, taus: &[f64]) -> Vec<f64> {
        let th = Thresholds::new(&self.psi_levels(t), taus);
        let mut out = vec![0.0; taus.len()];
        self.evaluate_into(&th, &mut out);
        out
    }

    fn evaluate_into(&self, th: &Thresholds, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let count = match th {
                Thresholds::Prefix(m) => self.cum[m[i]],
                Thresholds::Sets(sets) => sets[i].iter().map(|&g| self.cum[g + 1] - self.cum[g]).sum(),
            };
            *o = self.lo + self.step * count as f64;
        }
    }
}

/// For each `τ_i`, which `F̂` levels `g` satisfy `Ψ(g/(G+1)) < τ_i`.
enum Thresholds {
    /// Prefix `0..m_i` (the usual case: Ψ evaluated nondecreasingly).
    Prefix(Vec<usize>),
    Sets(Vec<Vec<usize>>),
}

impl Thresholds {
    fn new(psi: &[f64], taus: &[f64]) -> Self {
        if psi.windows(2).all(|w| w[0] <= w[1]) {
            Thresholds::Prefix(taus.iter().map(|&t| psi.partition_point(|&p| p < t)).collect())
        } else {
            Thresholds::Sets(taus.iter().map(|&t| (0..psi.len()).filter(|&g| psi[g] < t).collect()).collect())
        }
    }
}

/// `Ŵ(τ_i | X, roster, winner)` on `taus` with a `value_grid`-point value grid.
pub fn winning_bid_quantile_grid(
    x: &[f64],
    transform: &LevelTransform<f64>,
    curve: &ParentQuantileCurve<f64>,
    taus: &[f64],
    value_grid: usize,
) -> Result<Vec<f64>> {
    Ok(WinningBidGrid::new(&curve.values_at(x)?, value_grid).evaluate(transform, taus))
}

/// Direct evaluation of the indicator sum, without caching.
pub fn winning_bid_quantile_grid_naive(
    x: &[f64],
    transform: &LevelTransform<f64>,
    curve: &ParentQuantileCurve<f64>,
    taus: &[f64],
    value_grid: usize,
) -> Result<Vec<f64>> {
    let values = curve.values_at(x)?;
    let g = values.len();
    let (a, b) = (values[0], values[g - 1]);
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let step = (hi - lo) / value_grid as f64;
    let psi: Vec<f64> = (1..=value_grid)
        .map(|j| {
            let v = lo + j as f64 * step;
            let count = values.iter().filter(|&&s| s <= v).count();
            transform.psi(count as f64 / (g + 1) as f64)
        })
        .collect();
    Ok(taus.iter().map(|&t| lo + step * psi.iter().filter(|&&p| p < t).count() as f64).collect())
}

/// Inputs of one RW evaluation.
struct RwData<'a> {
    /// Non-intercept covariates, row-major `L × d`.
    x: &'a [f64],
    d: usize,
    w: &'a [f64],
    /// Sorted model quantiles, `L × n_levels`.
    what: &'a [f64],
    n_levels: usize,
    band: &'a [(f64, f64)],
}

fn dominated(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

impl RwData<'_> {
    fn len(&self) -> usize {
        self.w.len()
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.x[k * self.d..(k + 1) * self.d]
    }

    fn term(&self, model: u64, empirical: u64) -> f64 {
        let l = self.len() as f64;
        let g_model = model as f64 / (l * (self.n_levels + 1) as f64);
        let g_emp = empirical as f64 / l;
        (g_model - g_emp).powi(2)
    }

    fn in_band(&self, l: usize) -> bool {
        let (lo, hi) = self.band[l];
        self.w[l] >= lo && self.w[l] <= hi
    }

    fn naive(&self) -> f64 {
        let n = self.len();
        let mut total = 0.0;
        for l in 0..n {
            if !self.in_band(l) {
                continue;
            }
            let (mut model, mut emp) = (0u64, 0u64);
            for k in 0..n {
                if !dominated(self.row(k), self.row(l)) {
                    continue;
                }
                let wk = &self.what[k * self.n_levels..(k + 1) * self.n_levels];
                model += wk.partition_point(|&v| v <= self.w[l]) as u64;
                emp += u64::from(self.w[k] <= self.w[l]);
            }
            total += self.term(model, emp);
        }
        total
    }

    /// Offline dominance counting for at most one covariate.
    fn fenwick(&self) -> f64 {
        debug_assert!(self.d <= 1);
        let n = self.len();
        let key = |k: usize| if self.d == 0 { 0.0 } else { self.x[k] };
        let mut coords: Vec<f64> = self.what.iter().chain(self.w).copied().collect();
        coords.sort_unstable_by(f64::total_cmp);
        coords.dedup();
        let pos = |v: f64| coords.partition_point(|&c| c < v);
        let mut model = Fenwick::new(coords.len());
        let mut emp = Fenwick::new(coords.len());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        let mut counts = vec![(0u64, 0u64); n];
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && key(order[end]) == key(order[start]) {
                end += 1;
            }
            for &k in &order[start..end] {
                for &v in &self.what[k * self.n_levels..(k + 1) * self.n_levels] {
                    model.add(pos(v));
                }
                emp.add(pos(self.w[k]));
            }
            for &l in &order[start..end] {
                let upto = coords.partition_point(|&c| c <= self.w[l]);
                counts[l] = (model.prefix(upto), emp.prefix(upto));
            }
            start = end;
        }
        (0..n).filter(|&l| self.in_band(l)).map(|l| self.term(counts[l].0, counts[l].1)).sum()
    }

    fn statistic(&self) -> f64 {
        // Below this size the quadratic scan beats sorting the L·n_levels points.
        if self.d <= 1 && self.len() >= 1000 {
            self.fenwick()
        } else {
            self.naive()
        }
    }
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `0..upto`.
    fn prefix(&self, upto: usize) -> u64 {
        let (mut i, mut s) = (upto, 0);
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Per-record pieces shared by the statistic and its bootstrap.
struct Prepared {
    x: Vec<f64>,
    d: usize,
    grids: Vec<WinningBidGrid>,
    taus: Vec<f64>,
}

fn prepare(records: &[AuctionRecord], curve: &ParentQuantileCurve<f64>, n_tau: usize, value_grid: usize) -> Result<Prepared> {
    let first = records.first().ok_or(Error::InvalidParameter("empty dataset".into()))?;
    let d = first.x.characteristics().len();
    let mut x = Vec::with_capacity(records.len() * d);
    let mut grids = Vec::with_capacity(records.len());
    for r in records {
        if r.x.characteristics().len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: r.x.characteristics().len() });
        }
        x.extend_from_slice(r.x.characteristics());
        grids.push(WinningBidGrid::new(&curve.values_at(r.x.as_slice())?, value_grid));
    }
    Ok(Prepared { x, d, grids, taus: levels(n_tau) })
}

/// Model quantiles of the listed records under `spec`.
fn model_quantiles(records: &[AuctionRecord], idx: &[usize], grids: &[WinningBidGrid], taus: &[f64], spec: &AsymmetrySpec<f64>) -> Result<Vec<f64>> {
    let transforms: Vec<LevelTransform<f64>> = idx.iter().map(|&k| records[k].level_transform(spec)).collect::<Result<_>>()?;
    let slots: Vec<&WinningBidGrid> = idx.iter().map(|&k| &grids[k]).collect();
    Ok(quantiles_for(&slots, &transforms, taus))
}

/// Thresholds depend on the transform and the number of curve nodes only, so
/// they are cached across auctions.
fn quantiles_for(grids: &[&WinningBidGrid], transforms: &[LevelTransform<f64>], taus: &[f64]) -> Vec<f64> {
    let mut cache: HashMap<(u64, u64, usize), Thresholds> = HashMap::new();
    let mut out = vec![0.0; grids.len() * taus.len()];
    for (slot, (grid, t)) in grids.iter().zip(transforms).enumerate() {
        let key = (t.lambda_winner().to_bits(), t.lambda_total().to_bits(), grid.g_nodes);
        let th = cache.entry(key).or_insert_with(|| Thresholds::new(&grid.psi_levels(t), taus));
        grid.evaluate_into(th, &mut out[slot * taus.len()..(slot + 1) * taus.len()]);
    }
    out
}

fn gather_x(p: &Prepared, idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&k| p.x[k * p.d..(k + 1) * p.d].iter().copied()).collect()
}

fn rw_with(records: &[AuctionRecord], curve: &ParentQuantileCurve<f64>, spec: &AsymmetrySpec<f64>, opts: &RwOptions, naive: bool) -> Result<f64> {
    let prep = prepare(records, curve, opts.n_tau, opts.value_grid)?;
    let idx: Vec<usize> = (0..records.len()).collect();
    let what = model_quantiles(records, &idx, &prep.grids, &prep.taus, spec)?;
    let w: Vec<f64> = records.iter().map(|r| r.winning_bid).collect();
    let band: Vec<(f64, f64)> = prep.grids.iter().map(WinningBidGrid::band).collect();
    let data = RwData { x: &prep.x, d: prep.d, w: &w, what: &what, n_levels: prep.taus.len(), band: &band };
    Ok(if naive { data.naive() } else { data.statistic() })
}

/// RW statistic; a sum over auctions, so it grows with the sample size.
pub fn rw_statistic(records: &[AuctionRecord], curve: &ParentQuantileCurve<f64>, spec: &AsymmetrySpec<f64>, opts: &RwOptions) -> Result<f64> {
    rw_with(records, curve, spec, opts, false)
}

/// Quadratic-time reference evaluation of [`rw_statistic`].
pub fn rw_statistic_naive(records: &[AuctionRecord], curve: &ParentQuantileCurve<f64>, spec: &AsymmetrySpec<f64>, opts: &RwOptions) -> Result<f64> {
    rw_with(records, curve, spec, opts, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwCell {
    pub p: usize,
    pub q: usize,
    pub l_pq: usize,
    pub statistic: f64,
}

/// RW on each type proportion with more than `min_cell` auctions, both cdfs
/// computed within the cell.
pub fn rw_by_cell(
    records: &[AuctionRecord],
    curve: &ParentQuantileCurve<f64>,
    spec: &AsymmetrySpec<f64>,
    opts: &RwOptions,
    min_cell: usize,
) -> Result<Vec<RwCell>> {
    let mut groups: BTreeMap<(usize, usize), Vec<AuctionRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.type_pair()?).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .filter(|(_, g)| g.len() > min_cell)
        .map(|((p, q), g)| Ok(RwCell { p, q, l_pq: g.len(), statistic: rw_statistic(&g, curve, spec, opts)? }))
        .collect()
}

/// Refits the asymmetry on the resampled auctions.
fn refit(records: &[AuctionRecord], idx: &[usize], variant: Variant, two_type: Option<&[(usize, usize, bool)]>) -> Result<AsymmetrySpec<f64>> {
    if let Some(compact) = two_type {
        let mut cells: BTreeMap<(usize, usize), TypeCell> = BTreeMap::new();
        for &k in idx {
            let (p, q, won0) = compact[k];
            if p == 0 || q == 0 {
                continue;
            }
            let c = cells.entry((p, q)).or_insert(TypeCell { p, q, wins0: 0, wins1: 0 });
            if won0 {
                c.wins0 += 1;
            } else {
                c.wins1 += 1;
            }
        }
        let cells: Vec<TypeCell> = cells.into_values().collect();
        let (lambda, _) = fit_two_type_cells(&cells)?;
        return Ok(AsymmetrySpec::two_types(lambda));
    }
    let sample: Vec<AuctionRecord> = idx.iter().map(|&k| records[k].clone()).collect();
    Ok(mle_fit(&sample, variant)?.spec)
}

/// Two-step bootstrap p-value of RW. Each replicate resamples whole auctions
/// (covariates, type proportions, winner type), refits the asymmetry, draws
/// winning bids uniformly from the auction's fine-grid model quantiles under
/// the original fit, and recomputes RW with the refitted asymmetry and either
/// a refitted or the original curve (`opts.refit_curve`).
pub fn rw_bootstrap_pvalue(
    records: &[AuctionRecord],
    curve: &ParentQuantileCurve<f64>,
    spec: &AsymmetrySpec<f64>,
    b: usize,
    seed: u64,
    opts: &RwOptions,
) -> Result<TestReport> {
    if b == 0 {
        return Err(Error::InvalidParameter("bootstrap needs B ≥ 1".into()));
    }
    let n = records.len();
    let statistic = rw_statistic(records, curve, spec, opts)?;
    let prep = prepare(records, curve, opts.n_tau, opts.value_grid)?;
    let fine_prep = prepare(records, curve, opts.boot_n_tau, opts.boot_value_grid)?;
    let all: Vec<usize> = (0..n).collect();
    let fine = model_quantiles(records, &all, &fine_prep.grids, &fine_prep.taus, spec)?;
    let n_fine = fine_prep.taus.len();
    let band: Vec<(f64, f64)> = prep.grids.iter().map(WinningBidGrid::band).collect();
    let p_full = records[0].x.len();

    let two_type = spec.variant == Variant::TypeFixedEffects && records.iter().all(|r| r.roster.max_label() <= 1);
    let compact: Option<Vec<(usize, usize, bool)>> = if two_type {
        Some(
            records
                .iter()
                .map(|r| {
                    let (p, q) = r.type_pair()?;
                    Ok((p, q, r.winner_label() == 0))
                })
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let strata: Vec<Vec<usize>> = if opts.fixed_proportions {
        let mut by: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for (k, r) in records.iter().enumerate() {
            by.entry(r.roster.label_counts(r.roster.max_label() + 1)).or_default().push(k);
        }
        by.into_values().collect()
    } else {
        vec![all.clone()]
    };

    let replicate = |i: usize| -> Option<f64> {
        let mut r = rng::stream(seed, i as u64);
        let idx: Vec<usize> = strata.iter().flat_map(|s| (0..s.len()).map(|_| s[r.gen_range(0..s.len())]).collect::<Vec<_>>()).collect();
        let w: Vec<f64> = idx.iter().map(|&k| fine[k * n_fine + r.gen_range(0..n_fine)]).collect();
        let spec_b = refit(records, &idx, spec.variant, compact.as_deref()).ok()?;
        let (what, band_b): (Vec<f64>, Vec<(f64, f64)>) = if opts.refit_curve {
            let transforms: Vec<LevelTransform<f64>> = idx.iter().map(|&k| records[k].level_transform(&spec_b)).collect::<Result<_>>().ok()?;
            let full_x: Vec<f64> = idx.iter().flat_map(|&k| records[k].x.as_slice().iter().copied()).collect();
            let (curve_b, _, _) = fit_curve_design(&full_x, &w, p_full, &transforms, curve.grid()).ok()?;
            let grids: Vec<WinningBidGrid> = idx
                .iter()
                .map(|&k| Ok(WinningBidGrid::new(&curve_b.values_at(records[k].x.as_slice())?, opts.value_grid)))
                .collect::<Result<_>>()
                .ok()?;
            let slots: Vec<&WinningBidGrid> = grids.iter().collect();
            (quantiles_for(&slots, &transforms, &prep.taus), grids.iter().map(WinningBidGrid::band).collect())
        } else {
            let what = model_quantiles(records, &idx, &prep.grids, &prep.taus, &spec_b).ok()?;
            (what, idx.iter().map(|&k| band[k]).collect())
        };
        let x = gather_x(&prep, &idx);
        let data = RwData { x: &x, d: prep.d, w: &w, what: &what, n_levels: prep.taus.len(), band: &band_b };
        Some(data.statistic())
    };
    let outcomes: Vec<Option<f64>> = (0..b).into_par_iter().map(replicate).collect();
    let failures = outcomes.iter().filter(|o| o.is_none()).count();
    if failures as f64 > MAX_FAILURE_SHARE * b as f64 {
        return Err(Error::BootstrapAborted { failures, total: b });
    }
    let replicates: Vec<f64> = outcomes.into_iter().flatten().collect();
    Ok(TestReport {
        name: "rw".into(),
        statistic,
        p_value: exceedance_share(statistic, &replicates),
        b,
        seed,
        failures,
        replicates,
        per_cell: None,
    })
}
