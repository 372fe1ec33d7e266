//! Small dense revised simplex: `max cᵀx` subject to `≤ / ≥ / =` rows and
//! `x ≥ 0`, with Bland's rule and support for adding columns between solves.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural(usize),
    Slack,
    Artificial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// Values of the structural columns, in insertion order.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row prices `c_Bᵀ B⁻¹` in the orientation of the rows as given.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

const PRICE_TOL: f64 = 1e-10;
/// Pivot candidates must reach this fraction of the column's largest entry.
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 16;
/// Basic values below `-FEAS_TOL·(1 + max|b|)` after refactoring mean the
/// basis drifted out of the feasible set.
const FEAS_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone)]
pub struct Simplex {
    m: usize,
    flip: Vec<f64>,
    b: Vec<f64>,
    cols: Vec<Vec<f64>>,
    cost: Vec<f64>,
    kind: Vec<ColKind>,
    n_struct: usize,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
    phase_one_done: bool,
    since_refactor: usize,
    pivots: usize,
    drifted: bool,
}

impl Simplex {
    pub fn new(rows: &[(RowKind, f64)]) -> Self {
        let m = rows.len();
        let mut lp = Simplex {
            m,
            flip: Vec::with_capacity(m),
            b: Vec::with_capacity(m),
            cols: Vec::new(),
            cost: Vec::new(),
            kind: Vec::new(),
            n_struct: 0,
            basis: vec![0; m],
            is_basic: Vec::new(),
            binv: (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            xb: vec![0.0; m],
            phase_one_done: false,
            since_refactor: 0,
            drifted: false,
            pivots: 0,
        };
        for (i, &(kind, rhs)) in rows.iter().enumerate() {
            let f = if rhs < 0.0 { -1.0 } else { 1.0 };
            let kind = match (kind, f < 0.0) {
                (RowKind::Le, true) => RowKind::Ge,
                (RowKind::Ge, true) => RowKind::Le,
                (k, _) => k,
            };
            lp.flip.push(f);
            lp.b.push(rhs * f);
            let unit = |s: f64| {
                let mut c = vec![0.0; m];
                c[i] = s;
                c
            };
            match kind {
                RowKind::Le => {
                    lp.basis[i] = lp.push(unit(1.0), 0.0, ColKind::Slack);
                }
                RowKind::Ge => {
                    lp.push(unit(-1.0), 0.0, ColKind::Slack);
                    lp.basis[i] = lp.push(unit(1.0), 0.0, ColKind::Artificial);
                }
                RowKind::Eq => {
                    lp.basis[i] = lp.push(unit(1.0), 0.0, ColKind::Artificial);
                }
            }
            lp.xb[i] = rhs * f;
        }
        for &q in &lp.basis {
            lp.is_basic[q] = true;
        }
        lp
    }

    fn push(&mut self, col: Vec<f64>, cost: f64, kind: ColKind) -> usize {
        self.cols.push(col);
        self.cost.push(cost);
        self.kind.push(kind);
        self.is_basic.push(false);
        self.cols.len() - 1
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn num_columns(&self) -> usize {
        self.n_struct
    }

    /// Adds a structural column; returns its index among structural columns.
    pub fn add_column(&mut self, a: &[f64], cost: f64) -> usize {
        assert_eq!(a.len(), self.m);
        let col = a.iter().zip(&self.flip).map(|(v, f)| v * f).collect();
        let idx = self.n_struct;
        self.n_struct += 1;
        self.push(col, cost, ColKind::Structural(idx));
        idx
    }

    fn prices(&self, cp: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for (r, &q) in self.basis.iter().enumerate() {
            let c = cp[q];
            if c != 0.0 {
                for (yi, bi) in y.iter_mut().zip(&self.binv[r]) {
                    *yi += c * bi;
                }
            }
        }
        y
    }

    fn refactor(&mut self) {
        let m = self.m;
        let bm = DMatrix::from_fn(m, m, |i, r| self.cols[self.basis[r]][i]);
        if let Some(inv) = bm.try_inverse() {
            for r in 0..m {
                for i in 0..m {
                    self.binv[r][i] = inv[(r, i)];
                }
                self.xb[r] = (0..m).map(|i| inv[(r, i)] * self.b[i]).sum::<f64>();
            }
            let floor = -FEAS_TOL * (1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs())));
            self.drifted = self.xb.iter().any(|&v| v < floor);
            self.xb.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        self.since_refactor = 0;
    }

    fn pivot(&mut self, r: usize, q: usize, w: &[f64]) {
        let p = w[r];
        for v in self.binv[r].iter_mut() {
            *v /= p;
        }
        self.xb[r] /= p;
        let (pivot_row, xr) = (self.binv[r].clone(), self.xb[r]);
        for rr in 0..self.m {
            if rr != r && w[rr] != 0.0 {
                let f = w[rr];
                for (v, pv) in self.binv[rr].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.xb[rr] = (self.xb[rr] - f * xr).max(0.0);
            }
        }
        self.is_basic[self.basis[r]] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    fn column_in_basis(&self, q: usize) -> Vec<f64> {
        let a = &self.cols[q];
        self.binv.iter().map(|row| row.iter().zip(a).map(|(x, y)| x * y).sum()).collect()
    }

    fn iterate(&mut self, cp: &[f64], allow_artificial: bool) -> Result<()> {
        let start = self.pivots;
        loop {
            if self.pivots - start > MAX_PIVOTS {
                return Err(Error::Lp("pivot limit reached".into()));
            }
            let y = self.prices(cp);
            let entering = (0..self.cols.len()).find(|&j| {
                !self.is_basic[j]
                    && (allow_artificial || self.kind[j] != ColKind::Artificial)
                    && cp[j] - self.cols[j].iter().zip(&y).map(|(a, yi)| a * yi).sum::<f64>() > PRICE_TOL
            });
            let Some(q) = entering else { return Ok(()) };
            let w = self.column_in_basis(q);
            let wmax = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let rows: Vec<usize> = (0..self.m).filter(|&r| w[r] > PIVOT_TOL * wmax).collect();
            let min_ratio = rows.iter().map(|&r| self.xb[r] / w[r]).fold(f64::INFINITY, f64::min);
            // Among (near-)minimal ratios take the largest pivot; small pivots
            // are what lets the product-form inverse drift.
            let leave = rows
                .iter()
                .filter(|&&r| self.xb[r] / w[r] <= min_ratio + 1e-12 * (1.0 + min_ratio.abs()))
                .max_by(|&&a, &&b| w[a].total_cmp(&w[b]).then(self.basis[b].cmp(&self.basis[a])))
                .map(|&r| (r, min_ratio));
            let Some((r, _)) = leave else {
                return Err(Error::Lp("unbounded".into()));
            };
            self.pivot(r, q, &w);
        }
    }

    fn phase_one(&mut self) -> Result<()> {
        let cp: Vec<f64> = self.kind.iter().map(|k| if *k == ColKind::Artificial { -1.0 } else { 0.0 }).collect();
        self.iterate(&cp, true)?;
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let infeas: f64 = (0..self.m).filter(|&r| self.kind[self.basis[r]] == ColKind::Artificial).map(|r| self.xb[r]).sum();
        if infeas > 1e-9 * scale {
            return Err(Error::Lp(format!("infeasible (phase-one residual {infeas:.3e})")));
        }
        // Drive zero-valued artificials out of the basis where possible.
        for r in 0..self.m {
            if self.kind[self.basis[r]] != ColKind::Artificial {
                continue;
            }
            let cand = (0..self.cols.len())
                .filter(|&j| !self.is_basic[j] && self.kind[j] != ColKind::Artificial)
                .map(|j| (j, self.column_in_basis(j)))
                .find(|(_, w)| w[r].abs() > 1e-9);
            if let Some((j, w)) = cand {
                self.pivot(r, j, &w);
            }
        }
        self.phase_one_done = true;
        Ok(())
    }

    /// Solves (or re-optimizes after [`Simplex::add_column`]).
    pub fn solve(&mut self) -> Result<LpSolution> {
        if !self.phase_one_done {
            self.phase_one()?;
        }
        let cp: Vec<f64> = self.cost.clone();
        self.iterate(&cp, false)?;
        self.refactor();
        if self.drifted {
            return Err(Error::Lp("basis lost primal feasibility".into()));
        }
        let y = self.prices(&cp);
        let mut x = vec![0.0; self.n_struct];
        for (r, &q) in self.basis.iter().enumerate() {
            if let ColKind::Structural(i) = self.kind[q] {
                x[i] = self.xb[r];
            }
        }
        let objective = self
            .kind
            .iter()
            .zip(&self.cost)
            .filter_map(|(k, c)| match k {
                ColKind::Structural(i) => Some(c * x[*i]),
                _ => None,
            })
            .sum();
        Ok(LpSolution { x, objective, duals: y.iter().zip(&self.flip).map(|(v, f)| v * f).collect(), pivots: self.pivots })
    }
}

/// One-shot convenience: `max cᵀx` s.t. `A x (kind) b`, `x ≥ 0`.
pub fn solve_lp(c: &[f64], a: &[Vec<f64>], rows: &[(RowKind, f64)]) -> Result<LpSolution> {
    let mut lp = Simplex::new(rows);
    for (j, &cj) in c.iter().enumerate() {
        let col: Vec<f64> = a.iter().map(|row| row[j]).collect();
        lp.add_column(&col, cj);
    }
    lp.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn textbook_mixed_rows() {
        // max 3x + 2y, x + y ≤ 4, x + 3y ≥ 6, x - y = 0  ->  x = y = 2, obj 10.
        let sol = solve_lp(
            &[3.0, 2.0],
            &[vec![1.0, 1.0], vec![1.0, 3.0], vec![1.0, -1.0]],
            &[(RowKind::Le, 4.0), (RowKind::Ge, 6.0), (RowKind::Eq, 0.0)],
        )
        .unwrap();
        assert_relative_eq!(sol.objective, 10.0, epsilon = 1e-12);
        assert_relative_eq!(sol.x[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(sol.x[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn beale_cycling_example_terminates() {
        let sol = solve_lp(
            &[0.75, -20.0, 0.5, -6.0],
            &[vec![0.25, -8.0, -1.0, 9.0], vec![0.5, -12.0, -0.5, 3.0], vec![0.0, 0.0, 1.0, 0.0]],
            &[(RowKind::Le, 0.0), (RowKind::Le, 0.0), (RowKind::Le, 1.0)],
        )
        .unwrap();
        assert_relative_eq!(sol.objective, 1.25, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let inf = solve_lp(&[1.0], &[vec![1.0], vec![1.0]], &[(RowKind::Le, 1.0), (RowKind::Ge, 2.0)]);
        assert!(matches!(inf, Err(Error::Lp(_))));
        let unb = solve_lp(&[1.0, 0.0], &[vec![-1.0, 1.0]], &[(RowKind::Le, 1.0)]);
        assert!(matches!(unb, Err(Error::Lp(_))));
    }

    // Brute force over all bases of [A | I] for `A x ≤ b`, `b ≥ 0`.
    fn enumerate(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
        let (m, n) = (a.len(), c.len());
        let full = |i: usize, j: usize| if j < n { a[i][j] } else if j - n == i { 1.0 } else { 0.0 };
        let mut best = f64::NEG_INFINITY;
        let total = n + m;
        let mut idx: Vec<usize> = (0..m).collect();
        loop {
            let bm = DMatrix::from_fn(m, m, |i, r| full(i, idx[r]));
            if let Some(inv) = bm.clone().try_inverse() {
                let xb = inv * nalgebra::DVector::from_column_slice(b);
                if xb.iter().all(|v| *v >= -1e-9) {
                    let obj: f64 = idx.iter().zip(xb.iter()).filter(|(q, _)| **q < n).map(|(q, v)| c[*q] * v).sum();
                    best = best.max(obj);
                }
            }
            // next combination
            let mut i = m;
            while i > 0 && idx[i - 1] == total - m + i - 1 {
                i -= 1;
            }
            if i == 0 {
                return best;
            }
            idx[i - 1] += 1;
            for k in i..m {
                idx[k] = idx[k - 1] + 1;
            }
        }
    }

    #[test]
    fn matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let (m, n) = (rng.random_range(2..5), rng.random_range(2..6));
            let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(0.0..3.0)).collect()).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..5.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
            let rows: Vec<_> = b.iter().map(|&v| (RowKind::Le, v)).collect();
            let sol = solve_lp(&c, &a, &rows).unwrap();
            let want = enumerate(&c, &a, &b);
            assert!((sol.objective - want).abs() < 1e-9 * (1.0 + want.abs()), "{} vs {}", sol.objective, want);
            // Strong duality for the all-≤ form.
            let dual: f64 = sol.duals.iter().zip(&b).map(|(y, bi)| y * bi).sum();
            assert!((dual - sol.objective).abs() < 1e-9 * (1.0 + want.abs()));
            assert!(sol.duals.iter().all(|y| *y >= -1e-12));
        }
    }

    #[test]
    fn adding_columns_reoptimizes() {
        let mut lp = Simplex::new(&[(RowKind::Le, 1.0), (RowKind::Le, 1.0)]);
        lp.add_column(&[1.0, 0.0], 1.0);
        assert_relative_eq!(lp.solve().unwrap().objective, 1.0);
        lp.add_column(&[0.0, 1.0], 2.0);
        assert_relative_eq!(lp.solve().unwrap().objective, 3.0);
        lp.add_column(&[0.5, 0.5], 4.0);
        let s = lp.solve().unwrap();
        assert_relative_eq!(s.objective, 8.0, epsilon = 1e-12);
        assert_eq!(s.x.len(), 3);
    }

    #[test]
    fn deterministic() {
        let run = || {
            solve_lp(&[1.0, 1.0, 1.0], &[vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]], &[(RowKind::Le, 1.0), (RowKind::Le, 1.0)]).unwrap()
        };
        assert_eq!(run(), run());
    }
}
