//! Circle footprints, ellipse separation constraints and the modified
//! time-to-collision cost.
//!
//! Sign conventions: `p_ij = p_i - p_j` and `v_ij = v_i - v_j`, so a closing
//! pair has a negative raw TTC. The cosine scaling measures the angle between
//! the ego heading and the ego-to-ado direction, which makes a same-lane
//! leader scale by `+1` and a same-lane follower by `-1`.

use crate::dynamics::{VehicleGeometry, VehicleState};
use crate::error::{Error, Result};
use crate::math::{cos, sin, Vec2};

/// Returned when a TTC is undefined or can never be penalized.
pub const TTC_SENTINEL: f64 = f64::INFINITY;

/// Below this magnitude the cosine scaling is treated as zero (side-by-side pair).
pub const MIN_COSINE: f64 = 1e-6;

/// TTC substituted for overlapping circles inside the solver objective.
pub const OVERLAP_TTC: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirclePair {
    pub centers: [Vec2; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TtcParams {
    /// Velocity buffer magnitude, m/s.
    pub v_eps: f64,
    pub k_ttc: f64,
    /// Scale `p_ij` by `|p|/(|p| - r_i - r_j)`. When false the physical
    /// shrink `(|p| - r_i - r_j)/|p|` is used instead.
    pub use_literal_inflation: bool,
}

impl Default for TtcParams {
    fn default() -> Self {
        Self { v_eps: 1.0, k_ttc: 1.0, use_literal_inflation: true }
    }
}

pub fn vehicle_circles(state: &VehicleState, geom: &VehicleGeometry) -> CirclePair {
    let dir = Vec2::new(cos(state.phi), sin(state.phi));
    let c = state.position();
    CirclePair {
        centers: [
            c + dir.scale(geom.circle_offsets[0]),
            c + dir.scale(geom.circle_offsets[1]),
        ],
        radius: geom.circle_radius,
    }
}

/// `|p|^2 / (p . v)`; the sentinel when there is no radial motion.
#[inline]
pub fn raw_ttc(p_ij: Vec2, v_ij: Vec2) -> f64 {
    let den = p_ij.dot(v_ij);
    if den == 0.0 {
        return TTC_SENTINEL;
    }
    p_ij.norm_sq() / den
}

/// Clearance between two circles; exposed for diagnostics only.
pub fn circle_clearance(ego_center: Vec2, ado_center: Vec2, radii: (f64, f64)) -> f64 {
    (ego_center - ado_center).norm() - radii.0 - radii.1
}

/// Inputs of one circle-pair TTC evaluation.
#[derive(Debug, Clone, Copy)]
pub struct CircleTtcInput {
    pub ego_center: Vec2,
    pub ado_center: Vec2,
    pub ego_velocity: Vec2,
    pub ado_velocity: Vec2,
    pub ego_heading: f64,
    pub radii: (f64, f64),
}

/// Radius-inflated, velocity-buffered, cosine-scaled TTC for one circle pair.
pub fn modified_ttc(input: &CircleTtcInput, params: &TtcParams) -> Result<f64> {
    let p_ij = input.ego_center - input.ado_center;
    let dist = p_ij.norm();
    let radii = input.radii.0 + input.radii.1;
    if dist <= radii {
        return Err(Error::Overlap { distance: dist, radii });
    }
    let d_phi = Vec2::from_heading(input.ego_heading);
    Ok(modified_ttc_unchecked(p_ij, dist, radii, d_phi, input.ego_velocity, input.ado_velocity, params))
}

#[inline]
fn modified_ttc_unchecked(
    p_ij: Vec2,
    dist: f64,
    radii: f64,
    d_phi: Vec2,
    ego_velocity: Vec2,
    v_j: Vec2,
    params: &TtcParams,
) -> f64 {
    let clearance = dist - radii;
    let factor = if params.use_literal_inflation { dist / clearance } else { clearance / dist };
    let p_tilde = p_ij.scale(factor);

    // Ado in front when the ego-to-ado vector has a positive heading component.
    let ahead = -p_ij.dot(d_phi);
    let in_front = if ahead > 0.0 { 1.0 } else { 0.0 };
    let speed_j = v_j.norm();
    let v_j_tilde = if speed_j > 0.0 {
        v_j.scale((speed_j + params.v_eps * (1.0 - 2.0 * in_front)) / speed_j)
    } else {
        v_j
    };
    let v_ij_tilde = ego_velocity - v_j_tilde;

    let cosine = ahead / dist;
    if cosine.abs() < MIN_COSINE {
        return TTC_SENTINEL;
    }
    raw_ttc(p_tilde, v_ij_tilde) / cosine
}

/// `k_ttc / t^2` for negative `t`, zero otherwise.
#[inline]
pub fn ttc_cost(t_tilde: f64, params: &TtcParams) -> f64 {
    if t_tilde < 0.0 {
        params.k_ttc / (t_tilde * t_tilde)
    } else {
        0.0
    }
}

/// Sum of the four circle-pair TTC costs between two vehicles.
pub fn aggregate_ttc_cost(
    ego: &VehicleState,
    ado: &VehicleState,
    ego_geom: &VehicleGeometry,
    ado_geom: &VehicleGeometry,
    params: &TtcParams,
) -> Result<f64> {
    let ce = vehicle_circles(ego, ego_geom);
    let ca = vehicle_circles(ado, ado_geom);
    let (ve, va) = (ego.velocity(), ado.velocity());
    let mut total = 0.0;
    for &pe in &ce.centers {
        for &pa in &ca.centers {
            let t = modified_ttc(
                &CircleTtcInput {
                    ego_center: pe,
                    ado_center: pa,
                    ego_velocity: ve,
                    ado_velocity: va,
                    ego_heading: ego.phi,
                    radii: (ce.radius, ca.radius),
                },
                params,
            )?;
            total += ttc_cost(t, params);
        }
    }
    Ok(total)
}

/// Like [`aggregate_ttc_cost`] but never fails: overlapping circle pairs
/// contribute the cost of a TTC of `-OVERLAP_TTC`. Optimizer iterates can
/// pass through overlapping configurations, so the objective must stay defined.
pub(crate) fn aggregate_ttc_cost_lenient(
    ego: &VehicleState,
    ado: &VehicleState,
    ego_geom: &VehicleGeometry,
    ado_geom: &VehicleGeometry,
    params: &TtcParams,
) -> f64 {
    // Same evaluation as the checked path with each heading's sine and
    // cosine computed once.
    let (de, da) = (Vec2::from_heading(ego.phi), Vec2::from_heading(ado.phi));
    let (ve, va) = (de.scale(ego.v), da.scale(ado.v));
    let (pe0, pa0) = (ego.position(), ado.position());
    let radii = ego_geom.circle_radius + ado_geom.circle_radius;
    let mut total = 0.0;
    for &oe in &ego_geom.circle_offsets {
        let pe = pe0 + de.scale(oe);
        for &oa in &ado_geom.circle_offsets {
            let p_ij = pe - (pa0 + da.scale(oa));
            let dist = p_ij.norm();
            let t = if dist <= radii {
                -OVERLAP_TTC
            } else {
                modified_ttc_unchecked(p_ij, dist, radii, de, ve, va, params)
            };
            total += ttc_cost(t, params);
        }
    }
    total
}

/// Semi-axes of the ego's margin-inflated ellipse against an ado with circle radius `ado_radius`.
pub fn ellipse_axes(ego_geom: &VehicleGeometry, ado_radius: f64, margin: f64) -> (f64, f64) {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    (
        ego_geom.length * s + ado_radius + margin,
        ego_geom.width * s + ado_radius + margin,
    )
}

/// Minimum over the ado's circle centers of `(dx/a)^2 + (dy/b)^2 - 1`
/// in the ego frame. Non-negative iff both centers are outside the ego's
/// circumscribing ellipse, inflated by the ado circle radius plus `margin`.
pub fn ellipse_separation(
    ego: &VehicleState,
    ado: &VehicleState,
    ego_geom: &VehicleGeometry,
    ado_geom: &VehicleGeometry,
    margin: f64,
) -> f64 {
    let (a, b) = ellipse_axes(ego_geom, ado_geom.circle_radius, margin);
    let ca = vehicle_circles(ado, ado_geom);
    let origin = ego.position();
    let mut g = f64::INFINITY;
    for &c in &ca.centers {
        let d = (c - origin).to_frame(ego.phi);
        let q = (d.x / a) * (d.x / a) + (d.y / b) * (d.y / b) - 1.0;
        g = g.min(q);
    }
    g
}

/// True iff any circle pair overlaps strictly.
pub fn collision_check(
    ego: &VehicleState,
    ado: &VehicleState,
    ego_geom: &VehicleGeometry,
    ado_geom: &VehicleGeometry,
) -> bool {
    let ce = vehicle_circles(ego, ego_geom);
    let ca = vehicle_circles(ado, ado_geom);
    let r = ce.radius + ca.radius;
    ce.centers
        .iter()
        .any(|&pe| ca.centers.iter().any(|&pa| (pe - pa).norm() < r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    use proptest::prelude::*;

    fn test_geom() -> VehicleGeometry {
        VehicleGeometry {
            length: 4.5,
            width: 1.8,
            wheelbase: 2.9,
            circle_radius: 1.2,
            circle_offsets: [-1.1, 1.1],
            delta_max: 0.5,
        }
    }

    fn round_geom() -> VehicleGeometry {
        VehicleGeometry { circle_radius: 1.25, circle_offsets: [-1.0, 1.0], ..test_geom() }
    }

    #[test]
    fn circles_follow_heading() {
        let g = test_geom();
        let c = vehicle_circles(&VehicleState::default(), &g);
        assert_eq!(c.centers, [Vec2::new(-1.1, 0.0), Vec2::new(1.1, 0.0)]);
        assert_eq!(c.radius, 1.2);

        let c = vehicle_circles(&VehicleState::new(0.0, 0.0, FRAC_PI_2, 0.0, 0.0), &g);
        assert_abs_diff_eq!(c.centers[0].x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.centers[0].y, -1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(c.centers[1].y, 1.1, epsilon = 1e-12);

        let c = vehicle_circles(&VehicleState::new(0.0, 0.0, FRAC_PI_4, 0.0, 0.0), &g);
        assert_abs_diff_eq!(c.centers[1].x, 0.777_817, epsilon = 1e-6);
        assert_abs_diff_eq!(c.centers[1].y, 0.777_817, epsilon = 1e-6);
        assert_abs_diff_eq!(c.centers[0].x, -0.777_817, epsilon = 1e-6);
    }

    #[test]
    fn raw_ttc_examples() {
        assert_eq!(raw_ttc(Vec2::new(-10.0, 0.0), Vec2::new(2.0, 0.0)), -5.0);
        assert_eq!(raw_ttc(Vec2::new(-10.0, 0.0), Vec2::new(-2.0, 0.0)), 5.0);
        assert_eq!(raw_ttc(Vec2::new(-10.0, 0.0), Vec2::new(0.0, 3.0)), TTC_SENTINEL);
        let p = Vec2::new(-3.0, 4.0);
        let v = Vec2::new(1.5, -0.5);
        assert_abs_diff_eq!(raw_ttc(p.scale(2.5), v), 2.5 * raw_ttc(p, v), epsilon = 1e-12);
    }

    fn same_lane_input(radii: f64) -> CircleTtcInput {
        CircleTtcInput {
            ego_center: Vec2::new(0.0, 0.0),
            ado_center: Vec2::new(10.0, 0.0),
            ego_velocity: Vec2::new(12.0, 0.0),
            ado_velocity: Vec2::new(10.0, 0.0),
            ego_heading: 0.0,
            radii: (radii, radii),
        }
    }

    #[test]
    fn modified_ttc_examples() {
        let no_buffer = TtcParams { v_eps: 0.0, k_ttc: 1.0, use_literal_inflation: true };
        let t = modified_ttc(&same_lane_input(2.0), &no_buffer).unwrap();
        assert_abs_diff_eq!(t, -25.0 / 3.0, epsilon = 1e-12);

        let buffered = TtcParams { v_eps: 1.0, ..no_buffer };
        let t = modified_ttc(&same_lane_input(2.0), &buffered).unwrap();
        assert_abs_diff_eq!(t, -50.0 / 9.0, epsilon = 1e-12);

        // Physical inflation shrinks the distance instead: p = -10 * 6/10.
        let physical = TtcParams { use_literal_inflation: false, ..no_buffer };
        let t = modified_ttc(&same_lane_input(2.0), &physical).unwrap();
        assert_abs_diff_eq!(t, 36.0 / -12.0, epsilon = 1e-12);
    }

    #[test]
    fn side_by_side_is_never_penalized() {
        let input = CircleTtcInput {
            ego_center: Vec2::new(0.0, 0.0),
            ado_center: Vec2::new(0.0, 3.7),
            ego_velocity: Vec2::new(12.0, 0.0),
            ado_velocity: Vec2::new(10.0, -1.0),
            ego_heading: 0.0,
            radii: (1.2, 1.2),
        };
        let params = TtcParams::default();
        let t = modified_ttc(&input, &params).unwrap();
        assert_eq!(t, TTC_SENTINEL);
        assert_eq!(ttc_cost(t, &params), 0.0);
    }

    #[test]
    fn overlap_is_an_error() {
        let mut input = same_lane_input(2.0);
        input.ado_center = Vec2::new(4.0, 0.0);
        assert!(matches!(modified_ttc(&input, &TtcParams::default()), Err(Error::Overlap { .. })));
    }

    #[test]
    fn stationary_ado_skips_buffer() {
        let mut input = same_lane_input(2.0);
        input.ado_velocity = Vec2::ZERO;
        let with = modified_ttc(&input, &TtcParams { v_eps: 1.0, ..TtcParams::default() }).unwrap();
        let without = modified_ttc(&input, &TtcParams { v_eps: 0.0, ..TtcParams::default() }).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn ttc_cost_examples() {
        let p = TtcParams::default();
        assert_abs_diff_eq!(ttc_cost(-5.0, &p), 0.04, epsilon = 1e-15);
        assert_eq!(ttc_cost(5.0, &p), 0.0);
        assert_eq!(ttc_cost(TTC_SENTINEL, &p), 0.0);
        assert_abs_diff_eq!(ttc_cost(-1.0, &p) / ttc_cost(-10.0, &p), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn aggregate_receding_and_far() {
        let g = VehicleGeometry::default();
        let p = TtcParams::default();
        let ego = VehicleState::new(0.0, 0.0, 0.0, 0.0, 10.0);
        let ado = VehicleState::new(20.0, 0.0, 0.0, 0.0, 14.0);
        assert_eq!(aggregate_ttc_cost(&ego, &ado, &g, &g, &p).unwrap(), 0.0);

        // Distant, slowly closing leader: cost bounded by 4 k (v_rel / d)^2.
        let unbuffered = TtcParams { v_eps: 0.0, ..p };
        let far = VehicleState::new(250.0, 0.0, 0.0, 0.0, 12.0);
        let follower = VehicleState::new(0.0, 0.0, 0.0, 0.0, 12.05);
        assert!(aggregate_ttc_cost(&follower, &far, &g, &g, &unbuffered).unwrap() < 1e-6 * p.k_ttc);
    }

    #[test]
    fn ellipse_examples() {
        let g = VehicleGeometry::default();
        let ego = VehicleState::default();
        assert!(ellipse_separation(&ego, &VehicleState::new(100.0, 0.0, 0.0, 0.0, 0.0), &g, &g, 0.3) > 0.0);
        assert!(ellipse_separation(&ego, &ego, &g, &g, 0.3) < 0.0);

        // Rear circle of the ado placed exactly on the ellipse's front vertex.
        let (a, _) = ellipse_axes(&g, g.circle_radius, 0.3);
        let ado = VehicleState::new(a - g.circle_offsets[0], 0.0, 0.0, 0.0, 0.0);
        assert_abs_diff_eq!(ellipse_separation(&ego, &ado, &g, &g, 0.3), 0.0, epsilon = 1e-12);

        // Same for a lateral neighbour at the minor-axis vertex, ego rotated.
        let (_, b) = ellipse_axes(&g, g.circle_radius, 0.3);
        let rotated = VehicleState::new(0.0, 0.0, FRAC_PI_2, 0.0, 0.0);
        let side = VehicleState::new(-b, -g.circle_offsets[0], FRAC_PI_2, 0.0, 0.0);
        assert_abs_diff_eq!(ellipse_separation(&rotated, &side, &g, &g, 0.3), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn collision_boundary_is_strict() {
        let g = round_geom();
        let ego = VehicleState::default();
        assert!(!collision_check(&ego, &VehicleState::new(100.0, 0.0, 0.0, 0.0, 0.0), &g, &g));
        assert!(collision_check(&ego, &ego, &g, &g));
        // Ego front circle at 1.0, ado rear circle at x - 1.0: distance exactly 2.5.
        let touching = VehicleState::new(4.5, 0.0, 0.0, 0.0, 0.0);
        assert!(!collision_check(&ego, &touching, &g, &g));
        let overlapping = VehicleState::new(4.49, 0.0, 0.0, 0.0, 0.0);
        assert!(collision_check(&ego, &overlapping, &g, &g));
    }

    fn rotate(s: &VehicleState, angle: f64, shift: Vec2) -> VehicleState {
        let (sa, ca) = (angle.sin(), angle.cos());
        VehicleState::new(
            ca * s.x - sa * s.y + shift.x,
            sa * s.x + ca * s.y + shift.y,
            crate::math::normalize_angle(s.phi + angle),
            s.delta,
            s.v,
        )
    }

    proptest! {
        #[test]
        fn raw_ttc_sign_and_velocity_scaling(
            px in -50.0..50.0f64, py in -50.0..50.0f64,
            vx in -10.0..10.0f64, vy in -10.0..10.0f64, k in 0.1..10.0f64,
        ) {
            let p = Vec2::new(px, py);
            let v = Vec2::new(vx, vy);
            prop_assume!(p.norm() > 1e-3 && p.dot(v).abs() > 1e-9);
            let t = raw_ttc(p, v);
            prop_assert_eq!(t < 0.0, p.dot(v) < 0.0);
            let scaled = raw_ttc(p, v.scale(k));
            prop_assert!((scaled - t / k).abs() <= 1e-9 * t.abs().max(1.0));
        }

        #[test]
        fn ttc_cost_monotone(a in -100.0..-0.01f64, b in -100.0..-0.01f64, pos in 0.0..100.0f64) {
            let p = TtcParams::default();
            if a.abs() <= b.abs() {
                prop_assert!(ttc_cost(a, &p) >= ttc_cost(b, &p));
            }
            prop_assert_eq!(ttc_cost(pos, &p), 0.0);
        }

        #[test]
        fn collinear_no_buffer_equals_inflated_raw(gap in 3.0..80.0f64, ve in 0.0..20.0f64, va in 0.0..20.0f64) {
            let params = TtcParams { v_eps: 0.0, k_ttc: 1.0, use_literal_inflation: true };
            let input = CircleTtcInput {
                ego_center: Vec2::ZERO,
                ado_center: Vec2::new(gap, 0.0),
                ego_velocity: Vec2::new(ve, 0.0),
                ado_velocity: Vec2::new(va, 0.0),
                ego_heading: 0.0,
                radii: (1.0, 1.0),
            };
            let p = Vec2::new(-gap, 0.0);
            let inflated = p.scale(gap / (gap - 2.0));
            let expected = raw_ttc(inflated, Vec2::new(ve - va, 0.0));
            prop_assert_eq!(modified_ttc(&input, &params).unwrap(), expected);
        }

        #[test]
        fn aggregate_rigid_motion_invariant(
            dx in 8.0..60.0f64, dy in -8.0..8.0f64, phi_a in -0.3..0.3f64,
            ve in 0.0..20.0f64, va in 0.0..20.0f64,
            angle in -3.1..3.1f64, sx in -100.0..100.0f64, sy in -100.0..100.0f64,
        ) {
            let g = VehicleGeometry::default();
            let p = TtcParams::default();
            let ego = VehicleState::new(0.0, 0.0, 0.1, 0.0, ve);
            let ado = VehicleState::new(dx, dy, phi_a, 0.0, va);
            let base = aggregate_ttc_cost(&ego, &ado, &g, &g, &p).unwrap();
            let shift = Vec2::new(sx, sy);
            let moved = aggregate_ttc_cost(&rotate(&ego, angle, shift), &rotate(&ado, angle, shift), &g, &g, &p).unwrap();
            prop_assert!((base - moved).abs() <= 1e-7 * base.max(1e-12) + 1e-15);
        }

        #[test]
        fn ellipse_boundary_consistent_under_swap(gap in 0.0..20.0f64) {
            let g = VehicleGeometry::default();
            let a = VehicleState::new(0.0, 0.0, 0.0, 0.0, 10.0);
            let b = VehicleState::new(gap, 0.0, 0.0, 0.0, 10.0);
            let g_ab = ellipse_separation(&a, &b, &g, &g, 0.3);
            let g_ba = ellipse_separation(&b, &a, &g, &g, 0.3);
            prop_assert_eq!(g_ab >= 0.0, g_ba >= 0.0);
            prop_assert!((g_ab - g_ba).abs() < 1e-12);
        }
    }
}
