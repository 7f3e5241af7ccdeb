//! Sequential minimal optimization for the linear SVM dual.
//!
//! Solves
//!
//! ```text
//! max_μ  Σ μ_r − ½ Σ_r Σ_q μ_r μ_q p_r p_q (x_r · x_q)
//! s.t.   Σ μ_r p_r = 0,   0 ≤ μ_r ≤ C
//! ```
//!
//! by repeatedly optimizing one pair of multipliers analytically. The
//! hard-margin problem is solved with a large box bound; a multiplier
//! pinned at that bound after convergence means the data admit no
//! separating hyperplane.

use super::FEATURE_DIM;

/// Box bound standing in for C = ∞ in hard-margin training.
pub(crate) const HARD_MARGIN_C: f64 = 1e6;

#[derive(Debug, Clone, Copy)]
pub(crate) struct SmoParams {
    pub c: f64,
    /// Maximum tolerated KKT violation at convergence.
    pub tol: f64,
    /// Cap on successful pair updates before giving up.
    pub max_steps: usize,
    /// Stop as soon as a multiplier reaches the box bound; under a
    /// hard-margin bound that already proves infeasibility.
    pub bail_at_bound: bool,
}

impl Default for SmoParams {
    fn default() -> Self {
        Self {
            c: HARD_MARGIN_C,
            tol: 1e-9,
            max_steps: 500_000,
            bail_at_bound: false,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Worst KKT violation remaining after the final pass.
    pub kkt_violation: f64,
    pub converged: bool,
}

pub(crate) struct SmoSolver<'a> {
    x: &'a [[f64; FEATURE_DIM]],
    y: &'a [f64],
    params: SmoParams,
    alpha: Vec<f64>,
    bias: f64,
    errors: Vec<f64>,
    steps: usize,
    steps_since_refresh: usize,
}

impl<'a> SmoSolver<'a> {
    pub fn new(x: &'a [[f64; FEATURE_DIM]], y: &'a [f64], params: SmoParams) -> Self {
        let n = x.len();
        Self {
            x,
            y,
            params,
            alpha: vec![0.0; n],
            bias: 0.0,
            // with all alphas zero, f(x) = 0 and E_i = -y_i
            errors: y.iter().map(|v| -v).collect(),
            steps: 0,
            steps_since_refresh: 0,
        }
    }

    fn kernel(&self, i: usize, j: usize) -> f64 {
        dot(&self.x[i], &self.x[j])
    }

    fn decision(&self, i: usize) -> f64 {
        let mut f = self.bias;
        for (j, &a) in self.alpha.iter().enumerate() {
            if a > 0.0 {
                f += a * self.y[j] * self.kernel(j, i);
            }
        }
        f
    }

    /// Rebuild the error cache from scratch to shed accumulated roundoff.
    fn refresh_errors(&mut self) {
        for i in 0..self.x.len() {
            self.errors[i] = self.decision(i) - self.y[i];
        }
        self.steps_since_refresh = 0;
    }

    /// KKT violation of sample `i` given r_i = y_i f(x_i) − 1.
    fn violation(&self, i: usize) -> f64 {
        let r = self.y[i] * (self.errors[i] + self.y[i]) - 1.0;
        let a = self.alpha[i];
        if a <= 0.0 {
            (-r).max(0.0)
        } else if a >= self.params.c {
            r.max(0.0)
        } else {
            r.abs()
        }
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let c = self.params.c;
        let (lo, hi) = if (y1 - y2).abs() > f64::EPSILON {
            ((a2_old - a1_old).max(0.0), (c + a2_old - a1_old).min(c))
        } else {
            ((a1_old + a2_old - c).max(0.0), (a1_old + a2_old).min(c))
        };
        if hi - lo < f64::EPSILON {
            return false;
        }
        let k11 = self.kernel(i1, i1);
        let k12 = self.kernel(i1, i2);
        let k22 = self.kernel(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2 = if eta > 1e-14 {
            (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // flat direction: evaluate the objective at both ends
            let f1 = y1 * (e1 + self.bias) - a1_old * k11 - s * a2_old * k12;
            let f2 = y2 * (e2 + self.bias) - s * a1_old * k12 - a2_old * k22;
            let l1 = a1_old + s * (a2_old - lo);
            let h1 = a1_old + s * (a2_old - hi);
            let obj_lo =
                l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12;
            let obj_hi =
                h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12;
            if obj_lo < obj_hi - 1e-12 {
                lo
            } else if obj_lo > obj_hi + 1e-12 {
                hi
            } else {
                return false;
            }
        };
        if a2 < 1e-12 * c {
            a2 = 0.0;
        } else if a2 > c * (1.0 - 1e-12) {
            a2 = c;
        }
        if (a2 - a2_old).abs() < 1e-14 * (a2 + a2_old + 1e-14) {
            return false;
        }
        let a1 = a1_old + s * (a2_old - a2);
        let a1 = a1.clamp(0.0, c);

        let d1 = y1 * (a1 - a1_old);
        let d2 = y2 * (a2 - a2_old);
        let b1 = self.bias - (e1 + d1 * k11 + d2 * k12);
        let b2 = self.bias - (e2 + d1 * k12 + d2 * k22);
        let bias_new = if a1 > 0.0 && a1 < c {
            b1
        } else if a2 > 0.0 && a2 < c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let bias_delta = bias_new - self.bias;
        for i in 0..self.x.len() {
            self.errors[i] += d1 * self.kernel(i1, i) + d2 * self.kernel(i2, i) + bias_delta;
        }
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        self.bias = bias_new;
        self.steps += 1;
        self.steps_since_refresh += 1;
        if self.steps_since_refresh >= 2000 {
            self.refresh_errors();
        }
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        if self.violation(i2) <= self.params.tol {
            return false;
        }
        let e2 = self.errors[i2];
        // second-choice heuristic: the non-bound point with the largest
        // |E1 - E2| makes the biggest analytic step
        let mut best: Option<(usize, f64)> = None;
        for (i, &a) in self.alpha.iter().enumerate() {
            if a > 0.0 && a < self.params.c {
                let gap = (self.errors[i] - e2).abs();
                if best.map_or(true, |(_, g)| gap > g) {
                    best = Some((i, gap));
                }
            }
        }
        if let Some((i1, _)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        // fall back to scanning from a deterministic offset
        let n = self.x.len();
        for off in 0..n {
            let i1 = (i2 + 1 + off) % n;
            if self.alpha[i1] > 0.0 && self.alpha[i1] < self.params.c && self.take_step(i1, i2) {
                return true;
            }
        }
        for off in 0..n {
            let i1 = (i2 + 1 + off) % n;
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }

    pub fn solve(mut self) -> SmoSolution {
        let n = self.x.len();
        let cap = self.params.c * (1.0 - 1e-9);
        let step_budget = self.params.max_steps.min(400 * n + 20_000);
        let mut examine_all = true;
        loop {
            let mut changed = 0usize;
            if examine_all {
                for i in 0..n {
                    if self.examine(i) {
                        changed += 1;
                    }
                }
            } else {
                for i in 0..n {
                    if self.alpha[i] > 0.0 && self.alpha[i] < self.params.c && self.examine(i) {
                        changed += 1;
                    }
                }
            }
            if self.steps >= step_budget {
                break;
            }
            if self.params.bail_at_bound && self.alpha.iter().any(|&a| a >= cap) {
                break;
            }
            if examine_all {
                if changed == 0 {
                    break;
                }
                examine_all = false;
            } else if changed == 0 {
                examine_all = true;
            }
        }
        self.refresh_errors();
        let kkt_violation = (0..n)
            .map(|i| self.violation(i))
            .fold(0.0f64, f64::max);
        let converged = kkt_violation <= self.params.tol * 10.0;
        SmoSolution {
            alpha: self.alpha,
            bias: self.bias,
            kkt_violation,
            converged,
        }
    }
}

pub(crate) fn dot(a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]) -> f64 {
    let mut s = 0.0;
    for k in 0..FEATURE_DIM {
        s += a[k] * b[k];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embed(v: &[f64]) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[..v.len()].copy_from_slice(v);
        out
    }

    #[test]
    fn two_point_problem_is_exact() {
        let x = vec![embed(&[0.0]), embed(&[2.0])];
        let y = vec![-1.0, 1.0];
        let sol = SmoSolver::new(&x, &y, SmoParams::default()).solve();
        assert!(sol.converged, "kkt violation {}", sol.kkt_violation);
        // w = Σ a y x = a * 2 must equal 1 (margin 2 => |w| = 1)
        let w: f64 = sol
            .alpha
            .iter()
            .zip(&y)
            .zip(&x)
            .map(|((a, yy), xx)| a * yy * xx[0])
            .sum();
        assert!((w - 1.0).abs() < 1e-8, "w = {w}");
        assert!((sol.bias + 1.0).abs() < 1e-8, "bias = {}", sol.bias);
        assert!((sol.alpha[0] - 0.5).abs() < 1e-8);
        assert!((sol.alpha[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn equality_constraint_is_preserved() {
        let x = vec![
            embed(&[0.0, 0.0]),
            embed(&[1.0, 0.5]),
            embed(&[3.0, 0.0]),
            embed(&[4.0, 1.0]),
            embed(&[3.5, -1.0]),
        ];
        let y = vec![-1.0, -1.0, 1.0, 1.0, 1.0];
        let sol = SmoSolver::new(&x, &y, SmoParams::default()).solve();
        assert!(sol.converged);
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, yy)| a * yy).sum();
        assert!(balance.abs() < 1e-9, "Σ μ p = {balance}");
    }

    #[test]
    fn overlapping_data_pins_alphas_at_soft_bound() {
        // same point with both labels: hard margin infeasible
        let x = vec![embed(&[1.0]), embed(&[1.0])];
        let y = vec![1.0, -1.0];
        let sol = SmoSolver::new(
            &x,
            &y,
            SmoParams {
                c: 1.0,
                tol: 1e-9,
                max_steps: 10_000,
                bail_at_bound: false,
            },
        )
        .solve();
        assert!(sol.alpha.iter().any(|&a| (a - 1.0).abs() < 1e-9));
    }
}
