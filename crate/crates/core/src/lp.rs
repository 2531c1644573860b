//! Bounded-variable revised simplex for
//! `min c'a  s.t.  A a = b,  0 ≤ a ≤ 1`
//! where `A` has few rows (`m`) and many columns (`n`). Column `j` of `A` is
//! row `j` of a row-major `n × m` matrix, which is exactly the layout of a
//! regression design. The dual multipliers `y` (`B'y = c_B`) are returned
//! alongside the primal solution.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Lower,
    Upper,
    Basic,
    /// Artificial variable that left the basis; never re-enters.
    Retired,
}

/// Solution of a bounded LP.
#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    /// Primal values of the structural variables.
    pub a: Vec<T>,
    /// Simplex multipliers `y` solving `B'y = c_B`.
    pub y: Vec<T>,
    /// Structural indices of the final basis.
    pub basis: Vec<usize>,
    pub objective: T,
    pub iterations: usize,
}

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_BEFORE_BLAND: usize = 32;

struct Simplex<'a, T> {
    cols: &'a [T],
    n: usize,
    m: usize,
    b: Vec<T>,
    art_sign: Vec<T>,
    status: Vec<Status>,
    basis: Vec<usize>,
    xb: Vec<T>,
    binv: Vec<T>,
    pivots_since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
    tol: T,
}

impl<'a, T: Scalar> Simplex<'a, T> {
    fn column(&self, j: usize, out: &mut [T]) {
        if j < self.n {
            out.copy_from_slice(&self.cols[j * self.m..(j + 1) * self.m]);
        } else {
            out.iter_mut().for_each(|v| *v = T::zero());
            out[j - self.n] = self.art_sign[j - self.n];
        }
    }

    fn col_dot(&self, j: usize, y: &[T]) -> T {
        if j < self.n {
            self.cols[j * self.m..(j + 1) * self.m].iter().zip(y).map(|(a, b)| *a * *b).sum()
        } else {
            self.art_sign[j - self.n] * y[j - self.n]
        }
    }

    fn upper(&self, j: usize) -> T {
        if j < self.n {
            T::one()
        } else {
            T::infinity()
        }
    }

    fn cost(&self, phase: u8, c: &[T], j: usize) -> T {
        match (phase, j < self.n) {
            (1, true) => T::zero(),
            (1, false) => T::one(),
            (_, true) => c[j],
            (_, false) => T::zero(),
        }
    }

    /// Rebuilds `B⁻¹` and the basic values from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = vec![T::zero(); m * m];
        let mut col = vec![T::zero(); m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                bmat[i * m + k] = col[i];
            }
        }
        self.binv = invert(&bmat, m).ok_or(Error::RankDeficient)?;
        let mut rhs = self.b.clone();
        for j in 0..self.n {
            if self.status[j] == Status::Upper {
                self.column(j, &mut col);
                for i in 0..m {
                    rhs[i] -= col[i];
                }
            }
        }
        for k in 0..m {
            self.xb[k] = (0..m).map(|i| self.binv[k * m + i] * rhs[i]).sum();
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn multipliers(&self, phase: u8, c: &[T]) -> Vec<T> {
        let m = self.m;
        let cb: Vec<T> = self.basis.iter().map(|&j| self.cost(phase, c, j)).collect();
        (0..m).map(|i| (0..m).map(|k| cb[k] * self.binv[k * m + i]).sum()).collect()
    }

    fn pivot_binv(&mut self, r: usize, alpha: &[T]) {
        let m = self.m;
        let piv = alpha[r];
        for i in 0..m {
            self.binv[r * m + i] /= piv;
        }
        for k in 0..m {
            if k != r && alpha[k] != T::zero() {
                let f = alpha[k];
                for i in 0..m {
                    let v = self.binv[r * m + i];
                    self.binv[k * m + i] -= f * v;
                }
            }
        }
        self.pivots_since_refactor += 1;
    }

    fn run_phase(&mut self, phase: u8, c: &[T]) -> Result<()> {
        let m = self.m;
        let total = self.n + m;
        let mut alpha = vec![T::zero(); m];
        let mut col = vec![T::zero(); m];
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::NonConvergence {
                    what: "simplex",
                    iterations: self.iterations,
                    best: Vec::new(),
                });
            }
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let y = self.multipliers(phase, c);
            let bland = degenerate_run >= DEGENERATE_BEFORE_BLAND;
            let mut entering: Option<(usize, T)> = None;
            let mut best = T::zero();
            for j in 0..total {
                let st = self.status[j];
                if st == Status::Basic || st == Status::Retired {
                    continue;
                }
                let d = self.cost(phase, c, j) - self.col_dot(j, &y);
                let score = match st {
                    Status::Lower if d < -self.tol => -d,
                    Status::Upper if d > self.tol => d,
                    _ => continue,
                };
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if score > best {
                    best = score;
                    entering = Some((j, d));
                }
            }
            let Some((j, _)) = entering else {
                return Ok(());
            };
            self.iterations += 1;
            self.column(j, &mut col);
            for k in 0..m {
                alpha[k] = (0..m).map(|i| self.binv[k * m + i] * col[i]).sum();
            }
            let sigma = if self.status[j] == Status::Lower { T::one() } else { -T::one() };
            // Basic k moves by −σ θ α_k.
            let mut theta = self.upper(j);
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_mag = T::zero();
            for k in 0..m {
                let delta = sigma * alpha[k];
                let (limit, to_upper) = if delta > self.tol {
                    (self.xb[k].max(T::zero()) / delta, false)
                } else if delta < -self.tol {
                    let ub = self.upper(self.basis[k]);
                    if ub.is_infinite() {
                        continue;
                    }
                    ((ub - self.xb[k]).max(T::zero()) / -delta, true)
                } else {
                    continue;
                };
                let mag = delta.abs();
                let tie = (limit - theta).abs() <= self.tol;
                if limit < theta - self.tol || (tie && leave.is_some() && mag > leave_mag) || (tie && leave.is_none() && limit < theta) {
                    theta = limit;
                    leave = Some((k, to_upper));
                    leave_mag = mag;
                }
            }
            if theta.is_infinite() {
                return Err(Error::Unbounded);
            }
            degenerate_run = if theta <= self.tol { degenerate_run + 1 } else { 0 };
            for k in 0..m {
                self.xb[k] -= sigma * theta * alpha[k];
            }
            match leave {
                None => {
                    self.status[j] = if self.status[j] == Status::Lower { Status::Upper } else { Status::Lower };
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    self.status[out] = if out >= self.n {
                        Status::Retired
                    } else if to_upper {
                        Status::Upper
                    } else {
                        Status::Lower
                    };
                    let entering_value = if self.status[j] == Status::Lower { theta } else { T::one() - theta };
                    self.status[j] = Status::Basic;
                    self.basis[r] = j;
                    self.xb[r] = entering_value;
                    self.pivot_binv(r, &alpha);
                }
            }
        }
    }

    /// Replaces basic artificials (at zero after phase 1) by structural columns.
    fn expel_artificials(&mut self) -> Result<()> {
        let m = self.m;
        let mut col = vec![T::zero(); m];
        let mut alpha = vec![T::zero(); m];
        for r in 0..m {
            if self.basis[r] < self.n {
                continue;
            }
            let mut best: Option<(usize, T)> = None;
            for j in 0..self.n {
                if self.status[j] == Status::Basic {
                    continue;
                }
                let v: T = self.cols[j * m..(j + 1) * m]
                    .iter()
                    .enumerate()
                    .map(|(i, a)| self.binv[r * m + i] * *a)
                    .sum();
                if v.abs() > best.map_or(self.tol.sqrt(), |b| b.1) {
                    best = Some((j, v.abs()));
                }
            }
            let Some((j, _)) = best else {
                return Err(Error::RankDeficient);
            };
            self.column(j, &mut col);
            for k in 0..m {
                alpha[k] = (0..m).map(|i| self.binv[k * m + i] * col[i]).sum();
            }
            let value = if self.status[j] == Status::Upper { T::one() } else { T::zero() };
            self.status[self.basis[r]] = Status::Retired;
            self.status[j] = Status::Basic;
            self.basis[r] = j;
            self.xb[r] = value;
            self.pivot_binv(r, &alpha);
        }
        self.refactor()
    }
}

/// Solves `min c'a s.t. A a = b, 0 ≤ a ≤ 1`, with `A`'s columns stored as the
/// rows of `cols` (`n × m`, row-major). `start[j] = true` places `a_j` at its
/// upper bound in the initial crash point.
pub fn solve_bounded<T: Scalar>(cols: &[T], m: usize, c: &[T], b: &[T], start: &[bool]) -> Result<LpSolution<T>> {
    let n = c.len();
    if cols.len() != n * m {
        return Err(Error::DimensionMismatch { expected: n * m, got: cols.len() });
    }
    if b.len() != m || start.len() != n {
        return Err(Error::DimensionMismatch { expected: m, got: b.len() });
    }
    if n < m {
        return Err(Error::RankDeficient);
    }
    let mut status: Vec<Status> = start.iter().map(|&s| if s { Status::Upper } else { Status::Lower }).collect();
    let mut resid = b.to_vec();
    for j in 0..n {
        if start[j] {
            for i in 0..m {
                resid[i] -= cols[j * m + i];
            }
        }
    }
    let art_sign: Vec<T> = resid.iter().map(|r| if *r < T::zero() { -T::one() } else { T::one() }).collect();
    status.extend(std::iter::repeat_n(Status::Basic, m));
    let scale = T::one() + b.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let mut s = Simplex {
        cols,
        n,
        m,
        b: b.to_vec(),
        binv: (0..m * m).map(|k| if k / m == k % m { art_sign[k / m] } else { T::zero() }).collect(),
        xb: resid.iter().map(|r| r.abs()).collect(),
        art_sign,
        status,
        basis: (n..n + m).collect(),
        pivots_since_refactor: 0,
        iterations: 0,
        max_iterations: 50 * (n + m) + 1000,
        tol: T::epsilon().sqrt() * T::lit(0.1),
    };
    s.run_phase(1, c)?;
    s.refactor()?;
    let infeasibility: T = s
        .basis
        .iter()
        .zip(&s.xb)
        .filter(|(j, _)| **j >= n)
        .map(|(_, v)| v.abs())
        .sum();
    if infeasibility > s.tol.sqrt() * scale {
        return Err(Error::Infeasible);
    }
    s.expel_artificials()?;
    s.run_phase(2, c)?;
    s.refactor()?;
    let y = s.multipliers(2, c);
    let mut a: Vec<T> = (0..n).map(|j| if s.status[j] == Status::Upper { T::one() } else { T::zero() }).collect();
    for (k, &j) in s.basis.iter().enumerate() {
        a[j] = s.xb[k].max(T::zero()).min(T::one());
    }
    let objective = c.iter().zip(&a).map(|(ci, ai)| *ci * *ai).sum();
    Ok(LpSolution { a, y, basis: s.basis.clone(), objective, iterations: s.iterations })
}

/// Gauss–Jordan inverse with partial pivoting; `None` if numerically singular.
pub fn invert<T: Scalar>(a: &[T], m: usize) -> Option<Vec<T>> {
    let mut w = a.to_vec();
    let mut inv: Vec<T> = (0..m * m).map(|k| if k / m == k % m { T::one() } else { T::zero() }).collect();
    let scale = a.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if scale == T::zero() {
        return None;
    }
    let tiny = scale * T::epsilon() * T::from_usize_lossy(m.max(1)) * T::lit(16.0);
    for col in 0..m {
        let p = (col..m).max_by(|&i, &j| w[i * m + col].abs().partial_cmp(&w[j * m + col].abs()).unwrap())?;
        if w[p * m + col].abs() <= tiny {
            return None;
        }
        if p != col {
            for k in 0..m {
                w.swap(p * m + k, col * m + k);
                inv.swap(p * m + k, col * m + k);
            }
        }
        let d = w[col * m + col];
        for k in 0..m {
            w[col * m + k] /= d;
            inv[col * m + k] /= d;
        }
        for i in 0..m {
            if i != col {
                let f = w[i * m + col];
                if f != T::zero() {
                    for k in 0..m {
                        let (wv, iv) = (w[col * m + k], inv[col * m + k]);
                        w[i * m + k] -= f * wv;
                        inv[i * m + k] -= f * iv;
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Solves the square system `A z = r` (`A` row-major `m × m`).
pub fn solve_square<T: Scalar>(a: &[T], r: &[T], m: usize) -> Option<Vec<T>> {
    let inv = invert(a, m)?;
    Some((0..m).map(|i| (0..m).map(|k| inv[i * m + k] * r[k]).sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let a = [4.0, 1.0, 2.0, 1.0, 3.0, 0.5, 2.0, 0.5, 5.0];
        let inv = invert(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(invert(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }

    #[test]
    fn small_knapsack_like_lp() {
        // min −(3a0 + 2a1 + a2) s.t. a0 + a1 + a2 = 1.5 → a0 = 1, a1 = 0.5.
        let cols = [1.0f64, 1.0, 1.0];
        let sol = solve_bounded(&cols, 1, &[-3.0, -2.0, -1.0], &[1.5], &[false; 3]).unwrap();
        assert!((sol.a[0] - 1.0).abs() < 1e-12);
        assert!((sol.a[1] - 0.5).abs() < 1e-12);
        assert!(sol.a[2].abs() < 1e-12);
        assert!((sol.objective + 4.0).abs() < 1e-12);
        assert!((sol.y[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_when_rhs_out_of_reach() {
        let cols = [1.0, 1.0];
        assert!(matches!(solve_bounded(&cols, 1, &[0.0, 0.0], &[3.0], &[false; 2]), Err(Error::Infeasible)));
    }

    #[test]
    fn rank_deficient_rows() {
        // Two identical constraint rows.
        let cols = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let r = solve_bounded(&cols, 2, &[1.0, 2.0, 3.0], &[1.0, 1.0], &[false; 3]);
        assert!(matches!(r, Err(Error::RankDeficient)));
    }
}
