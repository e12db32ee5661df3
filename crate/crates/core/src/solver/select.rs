use core::cmp::Ordering;

use super::{BestResponseProblem, SolveCandidate};
use crate::dynamics::step_unchecked;

/// Squared norm of all constraint residuals of a candidate: dynamics
/// residuals, control-bound excess, negative speed and clamped ellipse
/// separations against every other vehicle at every step.
pub fn constraint_violation(candidate: &SolveCandidate, problem: &BestResponseProblem) -> f64 {
    let cfg = &problem.config;
    let t_max = cfg.horizon;
    let n = problem.agents.len();
    let mut total = 0.0;
    for a in 0..problem.n_solved {
        let geom = &problem.agents[a].profile.geometry;
        let xs = &candidate.states[a];
        let us = &candidate.controls[a];
        let d0 = problem.agents[a].initial.as_array();
        for (x, y) in xs[0].as_array().iter().zip(d0) {
            total += (x - y) * (x - y);
        }
        for t in 0..t_max {
            let next = step_unchecked(&xs[t], &us[t], cfg.dt, geom).as_array();
            for (k, (x, y)) in xs[t + 1].as_array().iter().zip(next).enumerate() {
                let mut r = x - y;
                if k == 2 {
                    r = crate::math::normalize_angle(r);
                }
                total += r * r;
            }
            total += cfg.limits.violation_sq(&us[t]);
        }
        for st in &xs[1..] {
            let neg = (-st.v).max(0.0);
            total += neg * neg;
        }
        for b in 0..n {
            if b == a {
                continue;
            }
            let other = problem.states_of(b, &candidate.states);
            for t in 0..=t_max {
                let g = problem.separation(a, b, &xs[t], &other[t]);
                let c = (-g).max(0.0);
                total += c * c;
            }
        }
    }
    total
}

/// Picks the best feasible candidate (violation ≤ `eps_f`) by objective, or
/// else the minimizer of cost + `k_slack`·violation. Ties go to the lower
/// violation, then the lower index. Returns `None` only for an empty slice.
pub fn select_solution(candidates: &[SolveCandidate], eps_f: f64, k_slack: f64) -> Option<usize> {
    let feasible = candidates.iter().any(|c| c.violation <= eps_f);
    let score = |c: &SolveCandidate| {
        if feasible {
            c.cost()
        } else {
            c.cost() + k_slack * c.violation
        }
    };
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if feasible && c.violation > eps_f {
            continue;
        }
        let better = match best {
            None => true,
            Some(j) => {
                let b = &candidates[j];
                match total_cmp(score(c), score(b)) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => total_cmp(c.violation, b.violation) == Ordering::Less,
                }
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

// NaN scores sort last so a broken candidate is never preferred.
fn total_cmp(a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => a.partial_cmp(&b).unwrap_or(Ordering::Equal),
    }
}
