//! Dense two-phase simplex for small problems in standard form
//! `minimize cᵀx subject to Ax = b, x ≥ 0`, with Bland's rule.

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    /// `y` holds the multipliers of the equality rows: `bᵀy = value` and
    /// `Aᵀy ≤ c`.
    Optimal { x: Vec<f64>, y: Vec<f64>, value: f64 },
    Infeasible { phase_one: f64 },
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 50_000;

struct Tableau {
    // rows 0..m are constraints, row m is the objective; last column is rhs
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on the objective row, only letting columns
    /// with `allowed[j]` enter. Returns false when unbounded.
    fn optimize(&mut self, allowed: &[bool]) -> bool {
        let m = self.basis.len();
        for _ in 0..MAX_PIVOTS {
            let obj = &self.t[m];
            let Some(c) = (0..self.cols).find(|&j| allowed[j] && obj[j] < -COST_TOL) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-15 || (ratio <= br + 1e-15 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else { return false };
            self.pivot(r, c);
        }
        // Bland's rule cannot cycle; reaching here means round-off churn
        true
    }
}

/// Solves the LP; `feas_tol` bounds the phase-one objective accepted as
/// feasible.
pub fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64], feas_tol: f64) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    assert_eq!(b.len(), m);
    assert!(a.iter().all(|row| row.len() == n));
    let cols = n + m;
    let mut t = vec![vec![0.0; cols + 1]; m + 1];
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = s * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][cols] = s * b[i];
    }
    // phase one: minimize the sum of artificials, expressed in non-basic terms
    for j in 0..=cols {
        let sum: f64 = (0..m).map(|i| t[i][j]).sum();
        t[m][j] = if j >= n && j < cols { 0.0 } else { -sum };
    }
    let mut tab = Tableau { t, basis: (n..n + m).collect(), cols };
    let all = vec![true; cols];
    tab.optimize(&all);
    let phase_one = -tab.t[m][cols];
    if phase_one > feas_tol {
        return LpOutcome::Infeasible { phase_one };
    }
    // drive remaining artificials out of the basis where possible
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.t[i][j].abs() > 1e-9) {
                tab.pivot(i, j);
            }
        }
    }
    // phase two objective
    for j in 0..=cols {
        tab.t[m][j] = if j < n { c[j] } else { 0.0 };
    }
    for i in 0..m {
        let bj = tab.basis[i];
        if bj < n && c[bj] != 0.0 {
            let f = c[bj];
            for j in 0..=cols {
                let v = tab.t[i][j];
                tab.t[m][j] -= f * v;
            }
        }
    }
    let allowed: Vec<bool> = (0..cols).map(|j| j < n).collect();
    if !tab.optimize(&allowed) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.rhs(i);
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    // the artificial columns started as the identity of the sign-flipped
    // rows, so their reduced costs are the negated flipped duals
    let y = (0..m).map(|i| -tab.t[m][n + i] * if b[i] < 0.0 { -1.0 } else { 1.0 }).collect();
    LpOutcome::Optimal { x, y, value }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(o: LpOutcome) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, value, .. } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    fn check_duality(a: &[Vec<f64>], b: &[f64], c: &[f64]) {
        let LpOutcome::Optimal { value, y, .. } = solve(a, b, c, 1e-12) else { panic!() };
        let by: f64 = b.iter().zip(&y).map(|(p, q)| p * q).sum();
        assert!((by - value).abs() < 1e-10, "{by} vs {value}");
        for j in 0..c.len() {
            let aty: f64 = (0..a.len()).map(|i| a[i][j] * y[i]).sum();
            assert!(aty <= c[j] + 1e-10, "column {j}: {aty} > {}", c[j]);
        }
    }

    #[test]
    fn dual_multipliers() {
        let a = vec![
            vec![1.0, 1.0, 1.0, 0.0, 0.0],
            vec![1.0, 3.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        check_duality(&a, &[4.0, 6.0, 3.0], &[-3.0, -2.0, 0.0, 0.0, 0.0]);
        let a = vec![vec![1.0, -1.0, 2.0], vec![-1.0, 3.0, -1.0]];
        check_duality(&a, &[1.0, 2.0], &[1.0, 1.0, 4.0]);
        check_duality(&a, &[-1.0, 4.0], &[1.0, 1.0, 4.0]);
    }

    #[test]
    fn small_textbook_problem() {
        // max 3x + 2y s.t. x + y ≤ 4, x + 3y ≤ 6, x ≤ 3  → (3, 1), value 11
        let a = vec![
            vec![1.0, 1.0, 1.0, 0.0, 0.0],
            vec![1.0, 3.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        let (x, v) = optimal(solve(&a, &[4.0, 6.0, 3.0], &[-3.0, -2.0, 0.0, 0.0, 0.0], 1e-12));
        assert!((v + 11.0).abs() < 1e-12);
        assert!((x[0] - 3.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_and_equalities() {
        // x − y = −2, x + y = 4 → x = 1, y = 3
        let a = vec![vec![1.0, -1.0], vec![1.0, 1.0]];
        let (x, _) = optimal(solve(&a, &[-2.0, 4.0], &[0.0, 0.0], 1e-12));
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let a = vec![vec![1.0, 1.0]];
        assert!(matches!(solve(&a, &[-1.0], &[0.0, 0.0], 1e-12), LpOutcome::Infeasible { .. }));
        let a = vec![vec![1.0, -1.0]];
        assert_eq!(solve(&a, &[1.0], &[-1.0, 0.0], 1e-12), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let (x, v) = optimal(solve(&a, &[1.0, 2.0], &[1.0, 2.0], 1e-12));
        assert!((v - 1.0).abs() < 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, which cycles under the largest-coefficient rule
        let a = vec![
            vec![0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
            vec![0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        let c = [-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0];
        let (_, v) = optimal(solve(&a, &[0.0, 0.0, 1.0], &c, 1e-12));
        assert!((v + 0.05).abs() < 1e-12);
    }
}
