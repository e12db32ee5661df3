// Brute-force evaluation of the modified time-to-collision cost, written
// directly from the equations with plain scalars. Shared by the core
// integration tests and the acceptance suite.

#![allow(dead_code)]

pub struct Car {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
}

pub struct Params {
    pub v_eps: f64,
    pub literal: bool,
    pub offsets: [f64; 2],
    pub radius: f64,
}

/// One circle pair; `None` when the circles overlap.
#[allow(clippy::too_many_arguments)]
pub fn pair_ttc(
    (xi, yi): (f64, f64),
    (xj, yj): (f64, f64),
    (vxi, vyi): (f64, f64),
    (vxj, vyj): (f64, f64),
    phi: f64,
    ri: f64,
    rj: f64,
    v_eps: f64,
    literal: bool,
) -> Option<f64> {
    let px = xi - xj;
    let py = yi - yj;
    let dist = (px * px + py * py).sqrt();
    if dist <= ri + rj {
        return None;
    }
    let inflate = if literal { dist / (dist - ri - rj) } else { (dist - ri - rj) / dist };
    let ptx = px * inflate;
    let pty = py * inflate;

    // Ego-to-ado vector projected on the ego heading.
    let (dx, dy) = (phi.cos(), phi.sin());
    let proj = -(px * dx + py * dy);
    let front = if proj > 0.0 { 1.0 } else { 0.0 };

    let speed_j = (vxj * vxj + vyj * vyj).sqrt();
    let (bx, by) = if speed_j == 0.0 {
        (vxj, vyj)
    } else {
        let k = (speed_j + v_eps * (1.0 - 2.0 * front)) / speed_j;
        (vxj * k, vyj * k)
    };
    let rvx = vxi - bx;
    let rvy = vyi - by;

    let d_cos = proj / dist;
    if d_cos.abs() < 1e-6 {
        return Some(f64::INFINITY);
    }
    let num = ptx * ptx + pty * pty;
    let den = ptx * rvx + pty * rvy;
    let raw = if den == 0.0 { f64::INFINITY } else { num / den };
    Some(raw / d_cos)
}

pub fn cost(t: f64, k: f64) -> f64 {
    if t < 0.0 {
        k / (t * t)
    } else {
        0.0
    }
}

/// Sum over all four circle pairs; `None` on any overlap.
pub fn aggregate(ego: &Car, ado: &Car, p: &Params, k: f64) -> Option<f64> {
    let mut total = 0.0;
    for oi in p.offsets {
        for oj in p.offsets {
            let ci = (ego.x + oi * ego.phi.cos(), ego.y + oi * ego.phi.sin());
            let cj = (ado.x + oj * ado.phi.cos(), ado.y + oj * ado.phi.sin());
            let vi = (ego.v * ego.phi.cos(), ego.v * ego.phi.sin());
            let vj = (ado.v * ado.phi.cos(), ado.v * ado.phi.sin());
            let t = pair_ttc(ci, cj, vi, vj, ego.phi, p.radius, p.radius, p.v_eps, p.literal)?;
            total += cost(t, k);
        }
    }
    Some(total)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / b.abs().max(1e-300)
}
