//! Brute-force quantile regression: a minimizer of the check loss interpolates
//! `p` observations, so the best exact fit through a nonsingular `p`-subset
//! is the global optimum.

use asymq::qr::objective;

pub fn solve(a: &[f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut m: Vec<f64> = a.to_vec();
    let mut y = b.to_vec();
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| m[i * p + c].abs().total_cmp(&m[j * p + c].abs()))?;
        if m[piv * p + c].abs() < 1e-10 {
            return None;
        }
        for k in 0..p {
            m.swap(c * p + k, piv * p + k);
        }
        y.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = m[r * p + c] / m[c * p + c];
                for k in 0..p {
                    m[r * p + k] -= f * m[c * p + k];
                }
                y[r] -= f * y[c];
            }
        }
    }
    Some((0..p).map(|c| y[c] / m[c * p + c]).collect())
}

pub fn subsets(n: usize, p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![vec![]];
    }
    (0..n)
        .flat_map(|last| {
            subsets(last, p - 1).into_iter().map(move |mut s| {
                s.push(last);
                s
            })
        })
        .collect()
}

pub fn brute_force(x: &[f64], w: &[f64], levels: &[f64], p: usize) -> f64 {
    let mut best = f64::INFINITY;
    for s in subsets(w.len(), p) {
        let a: Vec<f64> = s.iter().flat_map(|&l| x[l * p..(l + 1) * p].iter().copied()).collect();
        let b: Vec<f64> = s.iter().map(|&l| w[l]).collect();
        if let Some(g) = solve(&a, &b, p) {
            best = best.min(objective(x, w, levels, &g));
        }
    }
    best
}

/// Random instance `inst`: `(x, w, levels, p, tau)` with at most ten rows and
/// an intercept plus up to two characteristics. Odd instances use
/// heterogeneous levels, as after the level transform.
pub fn instance(inst: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, usize, f64) {
    use rand::Rng;
    let mut r = asymq::rng::stream(2024, inst);
    let p = 1 + (inst as usize % 3);
    let n = r.gen_range(p + 1..=10);
    let mut x = Vec::with_capacity(n * p);
    for _ in 0..n {
        x.push(1.0);
        for _ in 1..p {
            x.push(r.gen_range(0.5..3.0));
        }
    }
    let w: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..4.0)).collect();
    let tau = r.gen_range(0.05..0.95);
    let levels = (0..n).map(|_| if inst.is_multiple_of(2) { tau } else { r.gen_range(0.02..0.98) }).collect();
    (x, w, levels, p, tau)
}
