//! Optimal trackline speeds for a fixed selection and time budget.
//!
//! Working in inverse speeds `μ_j = 1/v_j` turns the inner problem into
//!
//! ```text
//! minimize    Σ_i π_i exp(-(1/τ) Σ_j δ_j l_ij μ_j)
//! subject to  1/v_max ≤ μ_j ≤ 1/v_min      (selected j)
//!             Σ_j δ_j l_j μ_j = T
//! ```
//!
//! which is smooth and convex. It is solved with a log-barrier method:
//! equality-constrained Newton steps on `f(μ) - w Σ log(slack)` for a
//! decreasing barrier weight `w`, followed by a primal active-set Newton
//! refinement that moves the near-optimal barrier point onto the bounds it
//! is heading for. Traversal counts above one fold into effective lengths;
//! a single speed governs every traversal of a trackline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::{effort_exponents, EffortMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpeedError {
    #[error("no trackline selected")]
    EmptySelection,
    #[error("budget {budget} s outside the feasible interval [{lo}, {hi}] s")]
    InfeasibleBudget { budget: f64, lo: f64, hi: f64 },
    #[error("speed solver did not converge in {} Newton steps", best.iterations)]
    NoConvergence { best: Box<SpeedSolution> },
}

/// Barrier-path parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedOptions {
    /// Starting barrier weight, relative to the speed-dependent part of the
    /// objective at the uniform start.
    pub initial_barrier: f64,
    pub barrier_decrease: f64,
    /// Stop centering when half the squared Newton decrement drops below this
    /// (relative to the speed-dependent part of the objective).
    pub newton_tol: f64,
    /// Stop the barrier path when the duality gap bound `2k·w` drops below
    /// this, again relative.
    pub gap_tol: f64,
    pub max_newton_steps: usize,
    /// Relative KKT residual required for `converged`.
    pub kkt_tol: f64,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        Self {
            initial_barrier: 1.0,
            barrier_decrease: 0.2,
            newton_tol: 1e-10,
            gap_tol: 1e-9,
            max_newton_steps: 200,
            kkt_tol: 1e-8,
        }
    }
}

/// One inner problem: which tracklines are used how often, and the budget.
#[derive(Debug, Clone, Copy)]
pub struct SpeedProblem<'a> {
    pub effort: &'a EffortMatrix,
    pub priors: &'a [f64],
    pub tau: f64,
    pub counts: &'a [u32],
    /// Seconds.
    pub budget: f64,
    /// `(1/v_max, 1/v_min)` in s/m.
    pub mu_bounds: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSolution {
    /// Inverse speeds, one per trackline; unselected lines are parked at the
    /// lower bound (top speed).
    pub mu: Vec<f64>,
    pub p_nd_star: f64,
    /// `Σ δ_j l_j μ_j`, seconds.
    pub duration: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest KKT violation relative to the gradient scale.
    pub kkt_residual: f64,
}

impl SpeedSolution {
    pub fn speeds(&self) -> Vec<f64> {
        self.mu.iter().map(|m| 1.0 / m).collect()
    }
}

/// `[Σ δ_j l_j / v_max, Σ δ_j l_j / v_min]`.
pub fn feasible_budget_interval(
    counts: &[u32],
    lengths: &[f64],
    v_min: f64,
    v_max: f64,
) -> Result<(f64, f64), SpeedError> {
    let total: f64 = counts.iter().zip(lengths).map(|(&c, &l)| c as f64 * l).sum();
    if counts.iter().all(|&c| c == 0) {
        return Err(SpeedError::EmptySelection);
    }
    Ok((total / v_max, total / v_min))
}

/// Dense reduced problem over the selected tracklines only.
struct Reduced {
    active: Vec<usize>,
    /// Effective lengths `δ_j l_j`.
    lengths: Vec<f64>,
    /// Rows `δ_j l_ij / τ` for sources that touch the selection.
    rows: Vec<Vec<f64>>,
    weights: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl Reduced {
    fn new(p: &SpeedProblem<'_>) -> Self {
        let active: Vec<usize> = (0..p.counts.len()).filter(|&j| p.counts[j] > 0).collect();
        let lengths = active.iter().map(|&j| p.counts[j] as f64 * p.effort.lengths()[j]).collect();
        let mut rows = Vec::new();
        let mut weights = Vec::new();
        for (i, &prior) in p.priors.iter().enumerate() {
            let row: Vec<f64> =
                active.iter().map(|&j| p.counts[j] as f64 * p.effort.chord(i, j) / p.tau).collect();
            // sources no selected line touches only add a constant
            if row.iter().any(|&c| c > 0.0) {
                rows.push(row);
                weights.push(prior);
            }
        }
        Self { active, lengths, rows, weights, lo: p.mu_bounds.0, hi: p.mu_bounds.1 }
    }

    fn k(&self) -> usize {
        self.active.len()
    }

    /// The speed-dependent part of the objective. Comparisons use this so
    /// that a large untouched prior mass does not swamp them in rounding.
    fn variable(&self, mu: &[f64]) -> f64 {
        self.rows.iter().zip(&self.weights).map(|(row, &p)| p * (-dot(row, mu)).exp()).sum()
    }

    /// Speed-dependent value, gradient and Hessian.
    fn derivatives(&self, mu: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let k = self.k();
        let mut g = vec![0.0; k];
        let mut h = vec![0.0; k * k];
        let mut f = 0.0;
        for (row, &p) in self.rows.iter().zip(&self.weights) {
            let w = p * (-dot(row, mu)).exp();
            f += w;
            for a in 0..k {
                if row[a] == 0.0 {
                    continue;
                }
                g[a] -= w * row[a];
                let wa = w * row[a];
                for b in a..k {
                    h[a * k + b] += wa * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                h[a * k + b] = h[b * k + a];
            }
        }
        (f, g, h)
    }

    fn barrier_value(&self, mu: &[f64], w: f64) -> f64 {
        let mut log_sum = 0.0;
        for &m in mu {
            let (s1, s2) = (m - self.lo, self.hi - m);
            if s1 <= 0.0 || s2 <= 0.0 {
                return f64::INFINITY;
            }
            log_sum += s1.ln() + s2.ln();
        }
        self.variable(mu) - w * log_sum
    }

    fn expand(&self, reduced_mu: &[f64], m: usize) -> Vec<f64> {
        let mut mu = vec![self.lo; m];
        for (&j, &v) in self.active.iter().zip(reduced_mu) {
            mu[j] = v;
        }
        mu
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place Cholesky factorization of a symmetric positive definite matrix
/// (row-major, lower triangle). Returns false if a pivot is not positive.
fn cholesky(a: &mut [f64], k: usize) -> bool {
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !d.is_finite() || d <= 0.0 {
            return false;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            y[i] -= l[i * k + p] * y[p];
        }
        y[i] /= l[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            y[i] -= l[p * k + i] * y[p];
        }
        y[i] /= l[i * k + i];
    }
    y
}

/// Newton direction for `min ½dᵀHd + gᵀd  s.t. cᵀd = r` with `H` positive
/// definite, by block elimination of the single equality multiplier.
fn newton_step(h: &mut [f64], k: usize, g: &[f64], c: &[f64], r: f64) -> Option<Vec<f64>> {
    if !cholesky(h, k) {
        return None;
    }
    let hg = cholesky_solve(h, k, g);
    let hc = cholesky_solve(h, k, c);
    let nu = -(r + dot(c, &hg)) / dot(c, &hc);
    let d: Vec<f64> = (0..k).map(|a| -(hg[a] + nu * hc[a])).collect();
    d.iter().all(|v| v.is_finite()).then_some(d)
}

pub fn solve_speeds(problem: &SpeedProblem<'_>) -> Result<SpeedSolution, SpeedError> {
    solve_speeds_with(problem, &SpeedOptions::default())
}

pub fn solve_speeds_with(
    problem: &SpeedProblem<'_>,
    opts: &SpeedOptions,
) -> Result<SpeedSolution, SpeedError> {
    let (lo, hi) = problem.mu_bounds;
    if problem.counts.iter().all(|&c| c == 0) {
        return Err(SpeedError::EmptySelection);
    }
    let total: f64 = problem.counts.iter().zip(problem.effort.lengths()).map(|(&c, &l)| c as f64 * l).sum();
    let (t_lo, t_hi) = (total * lo, total * hi);
    let t = problem.budget;
    let edge = 1e-12 * t_hi.max(1.0);
    if !t.is_finite() || t < t_lo - edge || t > t_hi + edge {
        return Err(SpeedError::InfeasibleBudget { budget: t, lo: t_lo, hi: t_hi });
    }

    let red = Reduced::new(problem);
    let m = problem.counts.len();
    let k = red.k();

    // uniform μ is always feasible because every coordinate shares one box
    let uniform = (t / total).clamp(lo, hi);
    let degenerate = hi - lo <= 1e-15 * hi || k == 1 || t <= t_lo + edge || t >= t_hi - edge;
    if degenerate {
        return Ok(finish(problem, &red, vec![uniform; k], m, 0, opts));
    }

    let mut mu = vec![uniform; k];
    let mut w = opts.initial_barrier * red.variable(&mu).max(f64::MIN_POSITIVE);
    let mut steps = 0usize;
    let gap_target = opts.gap_tol;
    loop {
        // centering
        loop {
            if steps >= opts.max_newton_steps {
                let best = finish(problem, &red, mu, m, steps, opts);
                return Err(SpeedError::NoConvergence { best: Box::new(best) });
            }
            let (f, g, mut h) = red.derivatives(&mu);
            // tolerances are relative to the part of the objective the speeds control
            let scale = f.max(f64::MIN_POSITIVE);
            let mut grad = g;
            for a in 0..k {
                let (s1, s2) = (mu[a] - lo, hi - mu[a]);
                grad[a] -= w * (1.0 / s1 - 1.0 / s2);
                h[a * k + a] += w * (1.0 / (s1 * s1) + 1.0 / (s2 * s2));
            }
            let Some(dx) = newton_step(&mut h, k, &grad, &red.lengths, 0.0) else {
                break;
            };
            steps += 1;
            let slope = dot(&grad, &dx);
            let mut s = 1.0_f64;
            for a in 0..k {
                if dx[a] > 0.0 {
                    s = s.min(0.99 * (hi - mu[a]) / dx[a]);
                } else if dx[a] < 0.0 {
                    s = s.min(0.99 * (lo - mu[a]) / dx[a]);
                }
            }
            if -slope / 2.0 <= opts.newton_tol * scale {
                // inside the quadratic region the last full step is free accuracy
                if s >= 1.0 {
                    for (m, d) in mu.iter_mut().zip(&dx) {
                        *m += d;
                    }
                }
                break;
            }
            let phi0 = red.barrier_value(&mu, w);
            let mut accepted = false;
            while s > 1e-14 {
                let trial: Vec<f64> = mu.iter().zip(&dx).map(|(m, d)| m + s * d).collect();
                if red.barrier_value(&trial, w) <= phi0 + 0.25 * s * slope {
                    mu = trial;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let scale = red.variable(&mu).max(f64::MIN_POSITIVE);
        if 2.0 * k as f64 * w <= gap_target * scale {
            break;
        }
        w *= opts.barrier_decrease;
    }

    let mu = refine(&red, mu, t);
    Ok(finish(problem, &red, mu, m, steps, opts))
}

/// Primal active-set Newton started from the (strictly feasible) barrier
/// point. Coordinates that block a step are fixed at their bound; fixed
/// coordinates whose multiplier has the wrong sign are released. Returns the
/// start unchanged if the refined point is not feasible or not at least as
/// good.
fn refine(red: &Reduced, start: Vec<f64>, budget: f64) -> Vec<f64> {
    let (lo, hi) = (red.lo, red.hi);
    let span = hi - lo;
    let k = red.k();
    let mut x = start.clone();
    // 0 free, -1 fixed at lo, 1 fixed at hi
    let mut fixed = vec![0i8; k];
    let mut last_face = f64::INFINITY;
    for _ in 0..4 * k + 40 {
        let free: Vec<usize> = (0..k).filter(|&a| fixed[a] == 0).collect();
        let (f, g, h) = red.derivatives(&x);
        let scale = f.max(f64::MIN_POSITIVE);
        let mut dir = vec![0.0; k];
        let mut decrement = 0.0;
        if !free.is_empty() {
            let nf = free.len();
            let gf: Vec<f64> = free.iter().map(|&a| g[a]).collect();
            let lf: Vec<f64> = free.iter().map(|&a| red.lengths[a]).collect();
            let mut hf = vec![0.0; nf * nf];
            let mut trace = 0.0;
            for (p, &a) in free.iter().enumerate() {
                for (q, &b) in free.iter().enumerate() {
                    hf[p * nf + q] = h[a * k + b];
                }
                trace += h[a * k + a];
            }
            // the floor keeps the factorization well scaled when the free
            // block has no curvature (lines no source sees)
            let reg = 1e-12 * (trace / nf as f64).max(scale / (span * span));
            for p in 0..nf {
                hf[p * nf + p] += reg;
            }
            // also absorbs any drift off the equality
            let drift = budget - dot(&red.lengths, &x);
            let Some(d) = newton_step(&mut hf, nf, &gf, &lf, drift) else {
                break;
            };
            decrement = -dot(&gf, &d);
            for (p, &a) in free.iter().enumerate() {
                dir[a] = d[p];
            }
        }

        let gscale = g.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let face_residual = if free.is_empty() {
            0.0
        } else {
            let lambda = -free.iter().map(|&a| g[a] * red.lengths[a]).sum::<f64>()
                / free.iter().map(|&a| red.lengths[a] * red.lengths[a]).sum::<f64>();
            free.iter().map(|&a| (g[a] + lambda * red.lengths[a]).abs()).fold(0.0, f64::max) / gscale
        };
        // the decrement is lost to cancellation long before the residual is,
        // so stop on the residual, or once it stops shrinking
        let stalled = face_residual < 1e-9 && face_residual >= 0.5 * last_face;
        last_face = face_residual;
        if face_residual <= 1e-12 || stalled {
            // stationary on the free face: check the fixed multipliers
            let ratio = |a: usize| -g[a] / red.lengths[a];
            let lambda = if free.is_empty() {
                let lower = (0..k).filter(|&a| fixed[a] == -1).map(ratio).fold(f64::NEG_INFINITY, f64::max);
                let upper = (0..k).filter(|&a| fixed[a] == 1).map(ratio).fold(f64::INFINITY, f64::min);
                match (lower.is_finite(), upper.is_finite()) {
                    (true, true) => 0.5 * (lower + upper),
                    (true, false) => lower,
                    (false, true) => upper,
                    (false, false) => 0.0,
                }
            } else {
                -free.iter().map(|&a| g[a] * red.lengths[a]).sum::<f64>()
                    / free.iter().map(|&a| red.lengths[a] * red.lengths[a]).sum::<f64>()
            };
            let worst = (0..k)
                .filter(|&a| fixed[a] != 0)
                .map(|a| {
                    let r = g[a] + lambda * red.lengths[a];
                    let v = if fixed[a] == -1 { -r } else { r };
                    (a, v / gscale)
                })
                .max_by(|p, q| p.1.total_cmp(&q.1));
            match worst {
                Some((a, v)) if v > 1e-12 => {
                    fixed[a] = 0;
                    last_face = f64::INFINITY;
                }
                _ => break,
            }
            continue;
        }

        let mut alpha_max = f64::INFINITY;
        let mut blocking = None;
        for &a in &free {
            let room = if dir[a] > 0.0 {
                (hi - x[a]) / dir[a]
            } else if dir[a] < 0.0 {
                (lo - x[a]) / dir[a]
            } else {
                continue;
            };
            if room < alpha_max {
                alpha_max = room.max(0.0);
                blocking = Some(a);
            }
        }
        let mut alpha = alpha_max.min(1.0);
        let slope = dot(&g, &dir);
        // below this the decrease is lost in the rounding of f and the full
        // Newton step is trusted as is
        let quadratic = decrement / 2.0 <= 1e-10 * scale;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(v, d)| (v + alpha * d).clamp(lo, hi)).collect();
            if quadratic || red.variable(&trial) <= f + 1e-4 * alpha * slope.min(0.0) + 1e-15 * scale {
                x = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        if alpha >= alpha_max {
            if let Some(b) = blocking {
                fixed[b] = if dir[b] > 0.0 { 1 } else { -1 };
                last_face = f64::INFINITY;
            }
        }
        for a in 0..k {
            if fixed[a] != 0 {
                x[a] = if fixed[a] == 1 { hi } else { lo };
            }
        }
    }
    let feasible = x.iter().all(|&v| (lo..=hi).contains(&v))
        && (dot(&red.lengths, &x) - budget).abs() <= 1e-9 * budget.max(1.0);
    if feasible && red.variable(&x) <= red.variable(&start) * (1.0 + 1e-15) {
        x
    } else {
        start
    }
}

/// Largest violation of the first-order conditions, relative to the
/// gradient scale.
fn kkt_residual(red: &Reduced, mu: &[f64]) -> f64 {
    let (lo, hi) = (red.lo, red.hi);
    let (_, g, _) = red.derivatives(mu);
    let scale = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let pin = 1e-9 * (hi - lo);
    let k = red.k();
    // classify: -1 at lower bound, 1 at upper bound, 0 free
    let class: Vec<i8> = mu
        .iter()
        .map(|&m| {
            if m - lo <= pin {
                -1
            } else if hi - m <= pin {
                1
            } else {
                0
            }
        })
        .collect();
    // ratios r_a = -g_a / L_a; stationarity needs g_a + λ L_a = 0 on free
    // coordinates, >= 0 at lower bounds, <= 0 at upper bounds
    let ratio: Vec<f64> = (0..k).map(|a| -g[a] / red.lengths[a]).collect();
    let free: Vec<usize> = (0..k).filter(|&a| class[a] == 0).collect();
    let lambda = if free.is_empty() {
        let lower = (0..k).filter(|&a| class[a] == -1).map(|a| ratio[a]).fold(f64::NEG_INFINITY, f64::max);
        let upper = (0..k).filter(|&a| class[a] == 1).map(|a| ratio[a]).fold(f64::INFINITY, f64::min);
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => 0.5 * (lower + upper),
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => 0.0,
        }
    } else {
        let num: f64 = free.iter().map(|&a| g[a] * red.lengths[a]).sum();
        let den: f64 = free.iter().map(|&a| red.lengths[a] * red.lengths[a]).sum();
        -num / den
    };
    (0..k)
        .map(|a| {
            let r = g[a] + lambda * red.lengths[a];
            match class[a] {
                0 => r.abs(),
                -1 => (-r).max(0.0),
                _ => r.max(0.0),
            }
        })
        .fold(0.0, f64::max)
        / scale
}

fn finish(
    problem: &SpeedProblem<'_>,
    red: &Reduced,
    reduced_mu: Vec<f64>,
    m: usize,
    iterations: usize,
    opts: &SpeedOptions,
) -> SpeedSolution {
    let kkt = kkt_residual(red, &reduced_mu);
    let mu = red.expand(&reduced_mu, m);
    let exps = effort_exponents(problem.counts, &mu, problem.effort, problem.tau);
    let p_nd_star = problem.priors.iter().zip(&exps).map(|(p, e)| p * (-e).exp()).sum();
    let duration = red.lengths.iter().zip(&reduced_mu).map(|(l, m)| l * m).sum();
    SpeedSolution { mu, p_nd_star, duration, iterations, converged: kkt <= opts.kkt_tol, kkt_residual: kkt }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{evaluate, PathPlan};
    use proptest::prelude::*;

    fn objective_at(em: &EffortMatrix, priors: &[f64], tau: f64, counts: &[u32], mu: &[f64]) -> f64 {
        priors.iter().zip(effort_exponents(counts, mu, em, tau)).map(|(p, e)| p * (-e).exp()).sum()
    }

    /// Brute force over μ_1 on a 1e-3 grid; μ_2 follows from the budget.
    fn grid_oracle_two(
        em: &EffortMatrix,
        priors: &[f64],
        tau: f64,
        budget: f64,
        lo: f64,
        hi: f64,
    ) -> (f64, f64) {
        let (l1, l2) = (em.lengths()[0], em.lengths()[1]);
        let a = lo.max((budget - l2 * hi) / l1);
        let b = hi.min((budget - l2 * lo) / l1);
        let steps = ((b - a) / 1e-3).floor() as usize;
        let mut best = (f64::INFINITY, a);
        for s in 0..=steps + 1 {
            let m1 = if s > steps { b } else { a + s as f64 * 1e-3 };
            let m2 = ((budget - l1 * m1) / l2).clamp(lo, hi);
            let f = objective_at(em, priors, tau, &[1, 1], &[m1, m2]);
            if f < best.0 {
                best = (f, m1);
            }
        }
        best
    }

    #[test]
    fn single_line_is_forced() {
        let em = EffortMatrix::from_parts(vec![vec![300.0]], vec![1000.0]);
        let p = SpeedProblem {
            effort: &em,
            priors: &[0.5],
            tau: 100.0,
            counts: &[1],
            budget: 500.0,
            mu_bounds: (0.2, 0.5),
        };
        let sol = solve_speeds(&p).unwrap();
        assert!((sol.mu[0] - 0.5).abs() < 1e-15);
        assert!((sol.duration - 500.0).abs() < 1e-9);
        let p = SpeedProblem { budget: 350.0, ..p };
        assert!((solve_speeds(&p).unwrap().mu[0] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn infeasible_budget_reports_interval() {
        let em = EffortMatrix::from_parts(vec![vec![300.0]], vec![1000.0]);
        let p = SpeedProblem {
            effort: &em,
            priors: &[0.5],
            tau: 100.0,
            counts: &[1],
            budget: 900.0,
            mu_bounds: (0.2, 0.5),
        };
        match solve_speeds(&p) {
            Err(SpeedError::InfeasibleBudget { lo, hi, .. }) => {
                assert!((lo - 200.0).abs() < 1e-9 && (hi - 500.0).abs() < 1e-9)
            }
            other => panic!("{other:?}"),
        }
        let p = SpeedProblem { counts: &[0], ..p };
        assert_eq!(solve_speeds(&p), Err(SpeedError::EmptySelection));
    }

    #[test]
    fn budget_interval_examples() {
        assert_eq!(feasible_budget_interval(&[1], &[3600.0], 1.0, 2.0), Ok((1800.0, 3600.0)));
        assert_eq!(feasible_budget_interval(&[0, 0], &[1.0, 2.0], 1.0, 2.0), Err(SpeedError::EmptySelection));
        let (lo, hi) = feasible_budget_interval(
            &[1],
            &[10_000.0],
            crate::units::knots_to_mps(2.0),
            crate::units::knots_to_mps(5.0),
        )
        .unwrap();
        // quoted to one decimal; exact values are 3887.69 and 9719.22
        assert!((lo - 3887.8).abs() / 3887.8 < 1e-4, "{lo}");
        assert!((hi - 9719.4).abs() / 9719.4 < 1e-4, "{hi}");
    }

    #[test]
    fn identical_lines_get_equal_speeds() {
        let em = EffortMatrix::from_parts(vec![vec![400.0, 400.0], vec![100.0, 100.0]], vec![1000.0, 1000.0]);
        let p = SpeedProblem {
            effort: &em,
            priors: &[0.6, 0.3],
            tau: 200.0,
            counts: &[1, 1],
            budget: 1200.0,
            mu_bounds: (0.25, 1.0),
        };
        let sol = solve_speeds(&p).unwrap();
        // the objective is flat along μ1 - μ2; only the barrier centers it
        assert!((sol.mu[0] - sol.mu[1]).abs() < 1e-6, "{:?}", sol.mu);
        assert!(sol.converged);
    }

    #[test]
    fn heavier_prior_gets_slower_line() {
        let em = EffortMatrix::from_parts(vec![vec![500.0, 0.0], vec![0.0, 500.0]], vec![1000.0, 1000.0]);
        let (lo, hi) = (0.25, 1.0);
        let p = SpeedProblem {
            effort: &em,
            priors: &[0.4, 0.2],
            tau: 200.0,
            counts: &[1, 1],
            budget: 1200.0,
            mu_bounds: (lo, hi),
        };
        let sol = solve_speeds(&p).unwrap();
        assert!(sol.mu[0] > sol.mu[1]);
        let (grid_f, grid_m1) = grid_oracle_two(&em, &[0.4, 0.2], 200.0, 1200.0, lo, hi);
        assert!(sol.p_nd_star <= grid_f + 1e-12);
        assert!((sol.mu[0] - grid_m1).abs() <= 1e-3);
        // equal marginal value 0.4·2.5·e^{-2.5 μ1} = 0.2·2.5·e^{-2.5 μ2}
        // with μ1 + μ2 = 1.2 gives μ1 = 0.6 + ln 2 / 5, inside the box
        assert!((sol.mu[0] - (0.6 + 2f64.ln() / 5.0)).abs() < 1e-8, "{:?}", sol.mu);
        // a tight budget pushes the light line to its top speed
        let p = SpeedProblem { budget: 900.0, priors: &[0.8, 0.1], ..p };
        let sol = solve_speeds(&p).unwrap();
        assert!((sol.mu[1] - lo).abs() < 1e-12 && (sol.mu[0] - 0.65).abs() < 1e-9, "{:?}", sol.mu);
        assert!(sol.converged);
    }

    #[test]
    fn solution_reproduces_evaluate() {
        let em = EffortMatrix::from_parts(
            vec![vec![300.0, 0.0, 100.0], vec![50.0, 700.0, 0.0], vec![0.0, 0.0, 0.0]],
            vec![1000.0, 1000.0, 800.0],
        );
        let priors = [0.5, 0.2, 0.1];
        let counts = [2, 1, 1];
        let p = SpeedProblem {
            effort: &em,
            priors: &priors,
            tau: 150.0,
            counts: &counts,
            budget: 2600.0,
            mu_bounds: (0.25, 1.0),
        };
        let sol = solve_speeds(&p).unwrap();
        let plan = PathPlan::from_inverse_speeds(counts.to_vec(), &sol.mu);
        let ev = evaluate(&plan, &em, &priors, 150.0);
        assert!((ev.p_nd - sol.p_nd_star).abs() <= 1e-10);
        assert!((ev.duration - 2600.0).abs() <= 1e-6 * 2600.0);
        assert!(sol.converged, "kkt {}", sol.kkt_residual);
    }

    fn two_line_instance() -> impl Strategy<Value = (EffortMatrix, Vec<f64>, f64)> {
        (
            proptest::collection::vec(proptest::collection::vec(0.0..900.0f64, 2), 1..5),
            proptest::collection::vec(0.01..1.0f64, 4),
            0.0..1.0f64,
        )
            .prop_map(|(chords, priors, frac)| {
                let n = chords.len();
                let em = EffortMatrix::from_parts(chords, vec![1000.0, 900.0]);
                let (t_lo, t_hi) = (1900.0 * 0.25, 1900.0 * 1.0);
                (em, priors[..n].to_vec(), t_lo + frac * (t_hi - t_lo))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn beats_grid_and_honors_constraints((em, priors, budget) in two_line_instance()) {
            let p = SpeedProblem { effort: &em, priors: &priors, tau: 200.0, counts: &[1, 1], budget, mu_bounds: (0.25, 1.0) };
            let sol = solve_speeds(&p).unwrap();
            let (grid, _) = grid_oracle_two(&em, &priors, 200.0, budget, 0.25, 1.0);
            prop_assert!(sol.p_nd_star <= grid + 1e-9);
            prop_assert!(sol.mu.iter().all(|&m| (0.25..=1.0).contains(&m)));
            prop_assert!((sol.duration - budget).abs() <= 1e-6 * budget);
            prop_assert!(sol.converged, "kkt {}", sol.kkt_residual);
        }

        #[test]
        fn more_time_never_hurts((em, priors, _b) in two_line_instance(), f1 in 0.0..1.0f64, f2 in 0.0..1.0f64) {
            let (lo, hi) = (1900.0 * 0.25, 1900.0);
            let (a, b) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let solve = |t: f64| {
                let p = SpeedProblem { effort: &em, priors: &priors, tau: 200.0, counts: &[1, 1], budget: t, mu_bounds: (0.25, 1.0) };
                solve_speeds(&p).unwrap().p_nd_star
            };
            prop_assert!(solve(lo + b * (hi - lo)) <= solve(lo + a * (hi - lo)) + 1e-10);
        }

        #[test]
        fn objective_is_midpoint_convex(chords in proptest::collection::vec(proptest::collection::vec(0.0..900.0f64, 3), 1..5),
                                       a in proptest::collection::vec(0.25..1.0f64, 3),
                                       b in proptest::collection::vec(0.25..1.0f64, 3)) {
            let n = chords.len();
            let em = EffortMatrix::from_parts(chords, vec![1000.0; 3]);
            let priors = vec![0.3; n];
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let f = |m: &[f64]| objective_at(&em, &priors, 200.0, &[1, 1, 1], m);
            prop_assert!(f(&mid) <= 0.5 * (f(&a) + f(&b)) + 1e-12);
        }
    }
}
