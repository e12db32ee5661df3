//! Augmented-Lagrangian single-shooting optimizer.
//!
//! Controls are reparameterized as `u = u_max tanh(z)` so the bounds hold by
//! construction, the dynamics are enforced by rolling out, and the ellipse
//! separations enter through an augmented-Lagrangian penalty. The inner
//! minimization is BFGS with Armijo backtracking on forward finite
//! differences. A control at step `t` only moves its own agent's states from
//! `t + 1` on, so each derivative re-rolls and re-scores only that suffix.

use alloc::vec;
use alloc::vec::Vec;

use super::{constraint_violation, BestResponseProblem, Clock, SolveCandidate};
use crate::dynamics::{rollout_into, ControlInput, VehicleState};
use crate::math::{atanh, tanh};
use crate::trajectory::WarmStart;

const FD_STEP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-5;
const MU_INIT: f64 = 10.0;
const MU_GROWTH: f64 = 10.0;
const MU_MAX: f64 = 1e7;
const INNER_PER_OUTER: usize = 10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 30;
// Keeps atanh finite for warm starts sitting on a bound.
const TANH_EDGE: f64 = 0.999_999;

/// Runs the optimizer once per warm start under the problem's iteration
/// budget and, when `config.time_limit` is set, a wall-clock budget shared
/// by all warm starts. Warm starts reached after the budget is spent are
/// returned as evaluated, unconverged candidates, so the result has exactly
/// one candidate per warm start.
pub fn solve_time_limited(problem: &BestResponseProblem, warm_starts: &[WarmStart], clock: &dyn Clock) -> Vec<SolveCandidate> {
    let start = clock.now();
    let limit = problem.config.time_limit;
    let expired = || limit.is_some_and(|l| clock.now() - start >= l);
    let mut out = Vec::with_capacity(warm_starts.len());
    for ws in warm_starts {
        let t0 = clock.now();
        let mut cand = if expired() {
            evaluate_warm_start(problem, ws)
        } else {
            Optimizer::new(problem, ws).run(&expired)
        };
        cand.wall_time = clock.now() - t0;
        out.push(cand);
    }
    out
}

fn desired_index(problem: &BestResponseProblem, ws: &WarmStart) -> usize {
    ws.desired.min(problem.desired.len() - 1)
}

/// Scores a warm start exactly as given, including any dynamics residual.
fn evaluate_warm_start(problem: &BestResponseProblem, ws: &WarmStart) -> SolveCandidate {
    let t = problem.horizon();
    let mut controls = Vec::with_capacity(problem.n_solved);
    let mut states = Vec::with_capacity(problem.n_solved);
    for k in 0..problem.n_solved {
        let (c, s) = if k == 0 {
            (ws.controls.clone(), ws.states.clone())
        } else {
            (problem.agents[k].plan.controls.clone(), problem.agents[k].plan.states.clone())
        };
        controls.push(fit_len(c, t, ControlInput::ZERO));
        let last = s.last().copied().unwrap_or(problem.agents[k].initial);
        states.push(fit_len(s, t + 1, last));
    }
    finish(problem, controls, states, desired_index(problem, ws), false, 0)
}

fn fit_len<T: Copy>(mut v: Vec<T>, len: usize, pad: T) -> Vec<T> {
    v.truncate(len);
    while v.len() < len {
        v.push(pad);
    }
    v
}

fn finish(
    problem: &BestResponseProblem,
    controls: Vec<Vec<ControlInput>>,
    states: Vec<Vec<VehicleState>>,
    desired: usize,
    converged: bool,
    iterations: usize,
) -> SolveCandidate {
    let objective = problem.objective(&states, &controls, desired);
    let mut c = SolveCandidate {
        controls,
        states,
        objective,
        violation: 0.0,
        wall_time: 0.0,
        converged,
        iterations,
        desired,
    };
    c.violation = constraint_violation(&c, problem);
    c
}

struct Optimizer<'p> {
    p: &'p BestResponseProblem,
    desired: usize,
    horizon: usize,
    n: usize,
    z: Vec<f64>,
    lambda: Vec<f64>,
    mu: f64,
    controls: Vec<Vec<ControlInput>>,
    states: Vec<Vec<VehicleState>>,
    // Scratch for one agent's perturbed suffix.
    trial: Vec<VehicleState>,
    trial_controls: Vec<ControlInput>,
    // Per-step contributions at the current point, per solved agent.
    own: Vec<Vec<f64>>,
    inter: Vec<Vec<f64>>,
    arc: Vec<Vec<f64>>,
}

impl<'p> Optimizer<'p> {
    fn new(p: &'p BestResponseProblem, ws: &WarmStart) -> Self {
        let horizon = p.horizon();
        let lim = p.config.limits;
        let mut z = Vec::with_capacity(p.decision_variable_count());
        for k in 0..p.n_solved {
            let seq = if k == 0 { &ws.controls } else { &p.agents[k].plan.controls };
            for t in 0..horizon {
                let u = seq.get(t).copied().unwrap_or(ControlInput::ZERO);
                z.push(atanh((u.delta_u / lim.delta_u).clamp(-TANH_EDGE, TANH_EDGE)));
                z.push(atanh((u.v_u / lim.v_u).clamp(-TANH_EDGE, TANH_EDGE)));
            }
        }
        let n = p.agents.len();
        Self {
            p,
            desired: desired_index(p, ws),
            horizon,
            n,
            z,
            lambda: vec![0.0; p.n_solved * n * (horizon + 1)],
            mu: MU_INIT,
            controls: vec![vec![ControlInput::ZERO; horizon]; p.n_solved],
            states: vec![Vec::with_capacity(horizon + 1); p.n_solved],
            trial: Vec::with_capacity(horizon + 1),
            trial_controls: vec![ControlInput::ZERO; horizon],
            own: vec![vec![0.0; horizon + 1]; p.n_solved],
            inter: vec![vec![0.0; horizon + 1]; p.n_solved],
            arc: vec![vec![0.0; horizon + 1]; p.n_solved],
        }
    }

    #[inline]
    fn decode(&self, z: &[f64]) -> ControlInput {
        let lim = &self.p.config.limits;
        ControlInput::new(lim.delta_u * tanh(z[0]), lim.v_u * tanh(z[1]))
    }

    #[inline]
    fn cidx(&self, a: usize, b: usize, t: usize) -> usize {
        (a * self.n + b) * (self.horizon + 1) + t
    }

    #[inline]
    fn penalty(&self, g: f64, lambda: f64) -> f64 {
        if lambda - self.mu * g > 0.0 {
            -lambda * g + 0.5 * self.mu * g * g
        } else {
            -lambda * lambda / (2.0 * self.mu)
        }
    }

    /// Decodes `z` into controls and rollouts for every solved agent.
    fn load(&mut self, z: &[f64]) {
        let h = self.horizon;
        for a in 0..self.p.n_solved {
            for t in 0..h {
                let i = 2 * (a * h + t);
                self.controls[a][t] = self.decode(&z[i..i + 2]);
            }
            let ag = &self.p.agents[a];
            rollout_into(&ag.initial, &self.controls[a], self.p.config.dt, &ag.profile.geometry, &mut self.states[a]);
        }
    }

    /// Interaction contribution (TTC pairs and separation penalties) of
    /// solved agent `a` at step `t` when its state is `sa`. Terms shared with
    /// another solved agent are counted by both; only differences are used.
    fn interaction(&self, a: usize, t: usize, sa: &VehicleState) -> f64 {
        let p = self.p;
        let mut v = 0.0;
        for b in 0..self.n {
            if b == a {
                continue;
            }
            let sb = &p.states_of(b, &self.states)[t];
            v += p.pair_term(a, b, sa, sb) / p.scale;
            if t > 0 {
                v += self.penalty(p.separation(a, b, sa, sb), self.lambda[self.cidx(a, b, t)]);
                if b < p.n_solved {
                    v += self.penalty(p.separation(b, a, sb, sa), self.lambda[self.cidx(b, a, t)]);
                }
            }
        }
        v
    }

    /// Merit at the loaded point; also caches per-step terms for derivatives.
    fn merit_cached(&mut self) -> f64 {
        let p = self.p;
        let h = self.horizon;
        for a in 0..p.n_solved {
            let reference = p.reference_of(a, self.desired);
            let mut s = 0.0;
            for t in 0..=h {
                if t > 0 {
                    s += (self.states[a][t].position() - self.states[a][t - 1].position()).norm();
                }
                self.arc[a][t] = s;
                self.own[a][t] = -p.own_term(a, &self.states[a][t], self.controls[a].get(t), s, reference) / p.scale;
                self.inter[a][t] = self.interaction(a, t, &self.states[a][t]);
            }
        }
        self.merit_loaded()
    }

    /// Merit at the loaded point without touching the derivative caches.
    fn merit_loaded(&self) -> f64 {
        let p = self.p;
        let h = self.horizon;
        let mut total = 0.0;
        for a in 0..p.n_solved {
            let reference = p.reference_of(a, self.desired);
            let xs = &self.states[a];
            let mut s = 0.0;
            for t in 0..=h {
                if t > 0 {
                    s += (xs[t].position() - xs[t - 1].position()).norm();
                }
                total -= p.own_term(a, &xs[t], self.controls[a].get(t), s, reference) / p.scale;
                for b in 0..self.n {
                    if b == a {
                        continue;
                    }
                    let sb = &p.states_of(b, &self.states)[t];
                    if !(b < p.n_solved && b < a) {
                        total += p.pair_term(a, b, &xs[t], sb) / p.scale;
                    }
                    if t > 0 {
                        total += self.penalty(p.separation(a, b, &xs[t], sb), self.lambda[self.cidx(a, b, t)]);
                    }
                }
            }
        }
        total
    }

    fn merit_at(&mut self, z: &[f64]) -> f64 {
        self.load(z);
        self.merit_loaded()
    }

    /// Forward-difference gradient at `self.z`; returns the merit there.
    fn gradient(&mut self, grad: &mut [f64]) -> f64 {
        let z = core::mem::take(&mut self.z);
        self.load(&z);
        let f0 = self.merit_cached();
        let p = self.p;
        let h = self.horizon;
        let dt = p.config.dt;
        for a in 0..p.n_solved {
            let geom = p.agents[a].profile.geometry;
            let reference = p.reference_of(a, self.desired);
            // suffix[t] = sum of cached terms from step t on
            let mut suffix = vec![0.0; h + 2];
            for t in (0..=h).rev() {
                suffix[t] = suffix[t + 1] + self.own[a][t] + self.inter[a][t];
            }
            for t in 0..h {
                for c in 0..2 {
                    let i = 2 * (a * h + t) + c;
                    let mut zi = [z[2 * (a * h + t)], z[2 * (a * h + t) + 1]];
                    zi[c] += FD_STEP;
                    let u = self.decode(&zi);
                    self.trial_controls.copy_from_slice(&self.controls[a]);
                    self.trial_controls[t] = u;
                    let start = self.states[a][t];
                    rollout_into(&start, &self.trial_controls[t..], dt, &geom, &mut self.trial);
                    let mut delta = -p.own_term(a, &start, Some(&u), self.arc[a][t], reference) / p.scale - self.own[a][t];
                    let mut s = self.arc[a][t];
                    let mut tail = 0.0;
                    for k in 1..self.trial.len() {
                        let step = t + k;
                        let st = self.trial[k];
                        s += (st.position() - self.trial[k - 1].position()).norm();
                        tail += -p.own_term(a, &st, self.trial_controls.get(step), s, reference) / p.scale;
                        tail += self.interaction(a, step, &st);
                    }
                    delta += tail - suffix[t + 1];
                    grad[i] = delta / FD_STEP;
                }
            }
        }
        self.z = z;
        f0
    }

    /// Returns the worst separation violation and whether the merit changed.
    fn update_multipliers(&mut self) -> (f64, bool) {
        let z = core::mem::take(&mut self.z);
        self.load(&z);
        self.z = z;
        let p = self.p;
        let mut worst: f64 = 0.0;
        let mut changed = false;
        for a in 0..p.n_solved {
            for b in 0..self.n {
                if b == a {
                    continue;
                }
                let sb = p.states_of(b, &self.states);
                for t in 1..=self.horizon {
                    let g = p.separation(a, b, &self.states[a][t], &sb[t]);
                    let i = self.cidx(a, b, t);
                    let l = (self.lambda[i] - self.mu * g).max(0.0);
                    changed |= l != self.lambda[i] || g < 0.0;
                    self.lambda[i] = l;
                    worst = worst.max(-g);
                }
            }
        }
        if worst * worst > self.p.config.eps_f {
            self.mu = (self.mu * MU_GROWTH).min(MU_MAX);
            changed = true;
        }
        (worst, changed)
    }

    fn run(mut self, expired: &dyn Fn() -> bool) -> SolveCandidate {
        let dim = self.z.len();
        let budget = self.p.config.max_iterations;
        let mut iterations = 0;
        let mut converged = false;
        let mut interrupted = false;
        let mut grad = vec![0.0; dim];
        let mut grad_new = vec![0.0; dim];
        let mut dir = vec![0.0; dim];
        let mut trial = vec![0.0; dim];
        let mut hinv = vec![0.0; dim * dim];

        let mut fresh = true;
        'outer: while iterations < budget {
            if fresh {
                reset_identity(&mut hinv, dim);
            }
            let mut f = self.gradient(&mut grad);
            let mut inner_done = false;
            for inner in 0..INNER_PER_OUTER {
                if iterations >= budget {
                    break;
                }
                if expired() {
                    interrupted = true;
                    break 'outer;
                }
                if inf_norm(&grad) < GRAD_TOL {
                    inner_done = true;
                    break;
                }
                iterations += 1;
                mat_vec_neg(&hinv, &grad, &mut dir);
                let mut slope = dot(&grad, &dir);
                if slope >= 0.0 {
                    reset_identity(&mut hinv, dim);
                    for (d, g) in dir.iter_mut().zip(&grad) {
                        *d = -g;
                    }
                    slope = -dot(&grad, &grad);
                }
                let mut alpha = 1.0;
                let mut accepted = None;
                for _ in 0..MAX_BACKTRACK {
                    for k in 0..dim {
                        trial[k] = self.z[k] + alpha * dir[k];
                    }
                    let ft = self.merit_at(&trial);
                    if ft.is_finite() && ft <= f + ARMIJO * alpha * slope {
                        accepted = Some(ft);
                        break;
                    }
                    alpha *= 0.5;
                }
                let Some(f_new) = accepted else {
                    inner_done = true;
                    break;
                };
                let old = core::mem::replace(&mut self.z, trial.clone());
                self.gradient(&mut grad_new);
                let s: Vec<f64> = self.z.iter().zip(&old).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 {
                    if inner == 0 && fresh {
                        let scale = sy / dot(&y, &y);
                        for (k, v) in hinv.iter_mut().enumerate() {
                            *v = if k % (dim + 1) == 0 { scale } else { 0.0 };
                        }
                    }
                    bfgs_update(&mut hinv, &s, &y, sy);
                }
                let small_step = (f - f_new).abs() <= 1e-12 * f.abs().max(1.0);
                f = f_new;
                core::mem::swap(&mut grad, &mut grad_new);
                if small_step {
                    inner_done = true;
                    break;
                }
            }
            // The merit only changes when a multiplier or an active penalty
            // does; otherwise the curvature estimate stays valid.
            let (worst, changed) = self.update_multipliers();
            fresh = changed;
            let feasible = worst * worst <= self.p.config.eps_f;
            if inner_done && (feasible || !changed) {
                converged = feasible;
                break;
            }
        }

        let z = core::mem::take(&mut self.z);
        self.load(&z);
        log::trace!("warm start {} finished after {iterations} iterations", self.desired);
        finish(self.p, self.controls, self.states, self.desired, converged && !interrupted, iterations)
    }
}

fn reset_identity(m: &mut [f64], dim: usize) {
    for (k, v) in m.iter_mut().enumerate() {
        *v = if k % (dim + 1) == 0 { 1.0 } else { 0.0 };
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn mat_vec_neg(m: &[f64], v: &[f64], out: &mut [f64]) {
    let dim = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = -dot(&m[i * dim..(i + 1) * dim], v);
    }
}

/// Inverse-Hessian BFGS update.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let dim = s.len();
    let rho = 1.0 / sy;
    let mut hy = vec![0.0; dim];
    for i in 0..dim {
        hy[i] = dot(&h[i * dim..(i + 1) * dim], y);
    }
    let yhy = dot(y, &hy);
    let c = (1.0 + rho * yhy) * rho;
    for i in 0..dim {
        for j in 0..dim {
            h[i * dim + j] += c * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
