//! Helbing–Molnár style social force: relaxation towards the desired
//! velocity plus exponential repulsion from other bodies and from walls.

use super::params::{Repulsion, SfmParams};
use crate::arena::Polygon;
use crate::geometry::{Segment, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub id: u64,
    pub position: Vec2,
    pub velocity: Vec2,
    pub desired_speed: f64,
    pub radius: f64,
}

/// Static inputs shared by every force evaluation of a run.
#[derive(Debug, Clone, Copy)]
pub struct ForceField<'a> {
    pub params: &'a SfmParams,
    pub repulsion: Repulsion,
    pub walls: &'a [Segment],
    pub obstacles: &'a [Polygon],
    pub force_cap: f64,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic unit direction pushing `me` away from a coincident `other`.
/// The two members of a pair always get opposite directions.
pub fn coincident_direction(seed: u64, me: u64, other: u64) -> Vec2 {
    let (lo, hi) = (me.min(other), me.max(other));
    let h = splitmix64(seed ^ splitmix64(lo ^ splitmix64(hi)));
    let angle = (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    let dir = Vec2::from_angle(angle);
    if me == lo {
        dir
    } else {
        -dir
    }
}

/// `(v0 ê − v) / τ` with `τ = v0 / acceleration`; `ê` is zero when there is no target.
pub fn driving_force(params: &SfmParams, body: &Body, heading: Option<Vec2>) -> Vec2 {
    let tau = body.desired_speed / params.acceleration;
    let desired = heading.map(|e| e * body.desired_speed).unwrap_or(Vec2::ZERO);
    (desired - body.velocity) / tau
}

/// `A_p exp((r_i + r_j − d) / B_p) n̂`, zero beyond the search radius.
pub fn pair_repulsion(field: &ForceField<'_>, me: &Body, other: &Body) -> Vec2 {
    let offset = me.position - other.position;
    let d = offset.norm();
    if d > field.params.search_radius || field.repulsion.ped_amplitude == 0.0 {
        return Vec2::ZERO;
    }
    let n = offset
        .normalized()
        .unwrap_or_else(|| coincident_direction(field.seed, me.id, other.id));
    let r = field.repulsion;
    n * (r.ped_amplitude * ((me.radius + other.radius - d) / r.ped_decay).exp())
}

/// `A_o exp((r − d) / B_o) n̂` from the closest point of an obstacle or wall.
fn obstacle_term(field: &ForceField<'_>, me: &Body, closest: Vec2, inside: bool) -> Vec2 {
    let offset = me.position - closest;
    let d = offset.norm();
    if d > field.params.search_radius || field.repulsion.obstacle_amplitude == 0.0 {
        return Vec2::ZERO;
    }
    let r = field.repulsion;
    let mag = r.obstacle_amplitude * ((me.radius - d) / r.obstacle_decay).exp();
    // inside a polygon the closest boundary point lies outward
    let n = match offset.normalized() {
        Some(n) if inside => -n,
        Some(n) => n,
        None => return Vec2::ZERO,
    };
    n * mag
}

pub fn obstacle_repulsion(field: &ForceField<'_>, me: &Body) -> Vec2 {
    let mut f = Vec2::ZERO;
    for wall in field.walls {
        f += obstacle_term(field, me, wall.closest_point(me.position), false);
    }
    for ob in field.obstacles {
        let inside = ob.contains(me.position);
        f += obstacle_term(field, me, ob.closest_boundary_point(me.position), inside);
    }
    f
}

/// Net acceleration on `me` (m/s²), magnitude capped at `field.force_cap`.
pub fn net_force(field: &ForceField<'_>, me: &Body, heading: Option<Vec2>, neighbours: &[Body]) -> Vec2 {
    let mut f = driving_force(field.params, me, heading);
    for other in neighbours {
        if other.id != me.id {
            f += pair_repulsion(field, me, other);
        }
    }
    f += obstacle_repulsion(field, me);
    let mag = f.norm();
    if mag > field.force_cap {
        f = f * (field.force_cap / mag);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(params: &SfmParams) -> ForceField<'_> {
        ForceField {
            params,
            repulsion: params.repulsion(),
            walls: &[],
            obstacles: &[],
            force_cap: 50.0,
            seed: 1,
        }
    }

    fn body(id: u64, x: f64, y: f64) -> Body {
        Body {
            id,
            position: Vec2::new(x, y),
            velocity: Vec2::ZERO,
            desired_speed: 1.4,
            radius: 0.2,
        }
    }

    #[test]
    fn equilibrium_at_desired_velocity() {
        let params = SfmParams::default();
        let mut me = body(0, 5.0, 5.0);
        me.velocity = Vec2::new(1.4, 0.0);
        let f = net_force(&field(&params), &me, Some(Vec2::new(1.0, 0.0)), &[]);
        assert_eq!(f, Vec2::ZERO);
    }

    #[test]
    fn pair_at_point_seven_metres() {
        let params = SfmParams::default();
        let a = body(0, 5.0, 5.0);
        let b = body(1, 5.7, 5.0);
        let ff = field(&params);
        let fa = net_force(&ff, &a, None, &[b]);
        let fb = net_force(&ff, &b, None, &[a]);
        let expected = 2.72 * (-1.0f64).exp();
        assert!((fa.norm() - expected).abs() < 1e-12);
        assert!((expected - 1.000_6).abs() < 1e-4);
        assert!(fa.x < 0.0 && fb.x > 0.0);
        assert!((fa + fb).norm() < 1e-12);
    }

    #[test]
    fn beyond_search_radius_is_ignored() {
        let params = SfmParams::default();
        let a = body(0, 5.0, 5.0);
        let b = body(1, 7.5, 5.0);
        assert_eq!(net_force(&field(&params), &a, None, &[b]), Vec2::ZERO);
    }

    #[test]
    fn coincident_bodies_separate_deterministically() {
        let params = SfmParams::default();
        let a = body(3, 5.0, 5.0);
        let b = body(9, 5.0, 5.0);
        let ff = field(&params);
        let fa = net_force(&ff, &a, None, &[b]);
        let fb = net_force(&ff, &b, None, &[a]);
        assert!((fa + fb).norm() < 1e-12);
        assert!((fa.norm() - 2.72 * (0.4f64 / 0.3).exp()).abs() < 1e-9);
        assert_eq!(fa, net_force(&ff, &a, None, &[b]));
    }

    #[test]
    fn force_is_capped() {
        let params = SfmParams::default();
        let walls = [Segment::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0))];
        let ff = ForceField {
            walls: &walls,
            force_cap: 10.0,
            ..field(&params)
        };
        let me = body(0, 5.0, 0.01);
        let f = net_force(&ff, &me, None, &[]);
        assert!((f.norm() - 10.0).abs() < 1e-9);
        assert!(f.y > 0.0);
    }

    #[test]
    fn wall_pushes_away() {
        let params = SfmParams::default();
        let walls = [Segment::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0))];
        let ff = ForceField {
            walls: &walls,
            ..field(&params)
        };
        let me = body(0, 5.0, 0.45);
        let f = obstacle_repulsion(&ff, &me);
        assert!((f.y - 20.1 * (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(f.x, 0.0);
    }

    #[test]
    fn inside_polygon_pushes_outward() {
        let params = SfmParams::default();
        let square = [Polygon::new(vec![
            Vec2::new(4.0, 4.0),
            Vec2::new(6.0, 4.0),
            Vec2::new(6.0, 6.0),
            Vec2::new(4.0, 6.0),
        ])];
        let ff = ForceField {
            obstacles: &square,
            ..field(&params)
        };
        let f = obstacle_repulsion(&ff, &body(0, 4.2, 5.0));
        assert!(f.x < 0.0);
        let f = obstacle_repulsion(&ff, &body(0, 3.8, 5.0));
        assert!(f.x < 0.0);
    }
}
