//! Centroidal dynamics: net wrench, pendular force, friction cones, ZMP and DCM.
//!
//! Everything here is a pure function on small value types. Frames are
//! world-fixed, gravity acts along `-z`, and contact normals default to `+z`.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

pub const DEFAULT_GRAVITY: f64 = 9.81;
/// Minimum admissible CoM height above the pivot.
pub const DEFAULT_H_MIN: f64 = 0.05;
/// Absolute tolerance on the normal component, relative on the tangential test.
pub const DEFAULT_CONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub position: Vec3,
    pub mu: f64,
    pub normal: Vec3,
}

impl Contact {
    /// Flat-ground contact with normal `+z`.
    pub fn new(position: Vec3, mu: f64) -> Result<Self> {
        Self::with_normal(position, mu, Vec3::z())
    }

    pub fn with_normal(position: Vec3, mu: f64, normal: Vec3) -> Result<Self> {
        ensure(mu > 0.0 && mu.is_finite(), "mu", || format!("must be > 0, got {mu}"))?;
        ensure(all_finite(&position), "position", || "non-finite component".into())?;
        ensure((normal.norm() - 1.0).abs() <= 1e-12, "normal", || {
            format!("must be unit length, got norm {}", normal.norm())
        })?;
        Ok(Self {
            position,
            mu,
            normal,
        })
    }

    /// Splits `f` into its normal magnitude and tangential vector.
    pub fn decompose(&self, f: &Vec3) -> (f64, Vec3) {
        let fn_ = f.dot(&self.normal);
        (fn_, f - self.normal * fn_)
    }
}

/// Contacts of one stance phase plus the rigid-body constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceConfig {
    pub contacts: Vec<Contact>,
    pub mass: f64,
    pub gravity: f64,
    pub h_min: f64,
    /// Counter-clockwise convex hull of the contact positions in the ground plane.
    pub support_region: Vec<Vec2>,
}

impl StanceConfig {
    pub fn new(contacts: Vec<Contact>, mass: f64) -> Result<Self> {
        Self::with_gravity(contacts, mass, DEFAULT_GRAVITY)
    }

    pub fn with_gravity(contacts: Vec<Contact>, mass: f64, gravity: f64) -> Result<Self> {
        ensure(!contacts.is_empty(), "contacts", || "need at least one contact".into())?;
        ensure(mass > 0.0 && mass.is_finite(), "mass", || format!("must be > 0, got {mass}"))?;
        ensure(gravity > 0.0 && gravity.is_finite(), "gravity", || {
            format!("must be > 0, got {gravity}")
        })?;
        let pts: Vec<Vec2> = contacts.iter().map(|c| c.position.xy()).collect();
        Ok(Self {
            support_region: convex_hull(&pts),
            contacts,
            mass,
            gravity,
            h_min: DEFAULT_H_MIN,
        })
    }

    /// Four feet at `(±lx, ±ly, 0)` in the order FR, FL, RR, RL.
    pub fn rectangle(lx: f64, ly: f64, mass: f64, mu: f64) -> Result<Self> {
        let feet = rectangle_feet(lx, ly);
        let contacts = feet
            .into_iter()
            .map(|p| Contact::new(p, mu))
            .collect::<Result<Vec<_>>>()?;
        Self::new(contacts, mass)
    }

    /// Diagonal trot pair FR + RL of the rectangle.
    pub fn diagonal_pair(lx: f64, ly: f64, mass: f64, mu: f64) -> Result<Self> {
        let feet = rectangle_feet(lx, ly);
        Self::new(vec![Contact::new(feet[0], mu)?, Contact::new(feet[3], mu)?], mass)
    }

    pub fn len(&self) -> usize {
        self.contacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn centroid(&self) -> Vec3 {
        self.contacts.iter().map(|c| c.position).sum::<Vec3>() / self.len() as f64
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.contacts.iter().map(|c| c.position).collect()
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let mut out = self.clone();
        for c in &mut out.contacts {
            *c = Contact::with_normal(c.position, mu, c.normal)?;
        }
        Ok(out)
    }

    /// Point-in-polygon test against the support region, with slack `tol` meters.
    pub fn support_contains(&self, p: &Vec2, tol: f64) -> bool {
        polygon_contains(&self.support_region, p, tol)
    }

    /// Closest point of the support region to `p`.
    pub fn clamp_to_support(&self, p: &Vec2) -> Vec2 {
        clamp_to_polygon(&self.support_region, p)
    }
}

pub fn rectangle_feet(lx: f64, ly: f64) -> [Vec3; 4] {
    [
        Vec3::new(lx, -ly, 0.0),
        Vec3::new(lx, ly, 0.0),
        Vec3::new(-lx, -ly, 0.0),
        Vec3::new(-lx, ly, 0.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidalState {
    pub com: Vec3,
    pub com_vel: Vec3,
    pub com_acc: Vec3,
    pub pivot: Vec3,
    pub height: f64,
}

impl CentroidalState {
    /// Height is measured along `+z` from the pivot.
    pub fn new(com: Vec3, com_vel: Vec3, com_acc: Vec3, pivot: Vec3) -> Self {
        Self::with_normal(com, com_vel, com_acc, pivot, &Vec3::z())
    }

    pub fn with_normal(com: Vec3, com_vel: Vec3, com_acc: Vec3, pivot: Vec3, normal: &Vec3) -> Self {
        Self {
            com,
            com_vel,
            com_acc,
            pivot,
            height: normal.dot(&(com - pivot)),
        }
    }

    pub fn at_rest(com: Vec3, pivot: Vec3) -> Self {
        Self::new(com, Vec3::zeros(), Vec3::zeros(), pivot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetWrench {
    pub force: Vec3,
    pub hdot: Vec3,
}

/// Net contact-plus-gravity force and the rate of angular momentum about `com`.
pub fn net_wrench(stance: &StanceConfig, com: &Vec3, forces: &[Vec3]) -> Result<NetWrench> {
    if forces.len() != stance.len() {
        return Err(Error::Dimension {
            expected: stance.len(),
            got: forces.len(),
        });
    }
    let mut force = Vec3::new(0.0, 0.0, -stance.weight());
    let mut hdot = Vec3::zeros();
    for (c, f) in stance.contacts.iter().zip(forces) {
        force += f;
        hdot += (c.position - com).cross(f);
    }
    Ok(NetWrench { force, hdot })
}

/// Moment about `com` of the contact forces alone.
pub fn contact_moment(positions: &[Vec3], com: &Vec3, forces: &[Vec3]) -> Vec3 {
    positions
        .iter()
        .zip(forces)
        .map(|(r, f)| (r - com).cross(f))
        .sum()
}

/// `(m g / h) (c - p)`: the only net force colinear with `c - p` that also
/// supports the weight.
pub fn pendular_force(state: &CentroidalState, mass: f64, gravity: f64, h_min: f64) -> Result<Vec3> {
    if !(state.height >= h_min) {
        return Err(Error::DegenerateStance(format!(
            "height {:.4} m below h_min {:.4} m",
            state.height, h_min
        )));
    }
    Ok((state.com - state.pivot) * (mass * gravity / state.height))
}

pub fn friction_contains(contact: &Contact, f: &Vec3, tol: f64) -> bool {
    let (fn_, ft) = contact.decompose(f);
    fn_ >= -tol && ft.norm() <= contact.mu * fn_ + tol * f.norm()
}

/// Cone half-angle `atan(mu)` in degrees.
pub fn cone_half_angle(mu: f64) -> f64 {
    mu.atan().to_degrees()
}

/// `c_xy - (h/g) c̈_xy`.
pub fn zmp(state: &CentroidalState, gravity: f64) -> Vec2 {
    state.com.xy() - state.com_acc.xy() * (state.height / gravity)
}

/// Centre of pressure of the contact forces on flat ground; `None` when the
/// total normal load vanishes.
pub fn center_of_pressure(positions: &[Vec3], forces: &[Vec3]) -> Option<Vec2> {
    let fz: f64 = forces.iter().map(|f| f.z).sum();
    if fz <= f64::EPSILON {
        return None;
    }
    let weighted: Vec2 = positions
        .iter()
        .zip(forces)
        .map(|(r, f)| r.xy() * f.z)
        .sum();
    Some(weighted / fz)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dcm {
    pub xi: Vec2,
    pub omega: f64,
}

pub fn dcm(state: &CentroidalState, gravity: f64) -> Result<Dcm> {
    ensure(state.height > 0.0, "height", || format!("must be > 0, got {}", state.height))?;
    let omega = (gravity / state.height).sqrt();
    Ok(Dcm {
        xi: state.com.xy() + state.com_vel.xy() / omega,
        omega,
    })
}

/// `ω (ξ - p)`.
pub fn dcm_rate(xi: &Vec2, pivot_xy: &Vec2, omega: f64) -> Vec2 {
    (xi - pivot_xy) * omega
}

pub fn equal_split(f_net: &Vec3, n: usize) -> Vec<Vec3> {
    vec![f_net / n as f64; n]
}

/// Net contact force `m (c̈ + g ẑ)` required by Newton's law.
pub fn required_net_force(stance: &StanceConfig, com_acc: &Vec3) -> Vec3 {
    (com_acc + Vec3::new(0.0, 0.0, stance.gravity)) * stance.mass
}

/// Rate of angular momentum under the equal split of the required net force.
///
/// This is the moment the redistribution has to fight: for a coplanar stance
/// with the CoM a height `z_c` above the contact centroid it reduces to
/// `m z_c (a_y, -a_x, 0)`.
pub fn excitation_baseline(stance: &StanceConfig, com: &Vec3, com_acc: &Vec3) -> Vec3 {
    let f_net = required_net_force(stance, com_acc);
    let forces = equal_split(&f_net, stance.len());
    contact_moment(&stance.positions(), com, &forces)
}

fn all_finite(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Andrew's monotone chain; returns the hull counter-clockwise without the
/// closing point. Degenerate inputs return the distinct extreme points.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vec2, a: &Vec2, b: &Vec2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Vec2> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn segment_closest(a: &Vec2, b: &Vec2, p: &Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

fn polygon_contains(poly: &[Vec2], p: &Vec2, tol: f64) -> bool {
    match poly.len() {
        0 => false,
        1 | 2 => (clamp_to_polygon(poly, p) - p).norm() <= tol,
        n => (0..n).all(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let edge = b - a;
            let len = edge.norm();
            // signed distance to the left of a→b
            (edge.x * (p.y - a.y) - edge.y * (p.x - a.x)) / len >= -tol
        }),
    }
}

fn clamp_to_polygon(poly: &[Vec2], p: &Vec2) -> Vec2 {
    if poly.len() >= 3 && polygon_contains(poly, p, 0.0) {
        return *p;
    }
    match poly.len() {
        0 => *p,
        1 => poly[0],
        n => (0..n)
            .map(|i| segment_closest(&poly[i], &poly[(i + 1) % n], p))
            .min_by(|a, b| (a - p).norm().total_cmp(&(b - p).norm()))
            .unwrap(),
    }
}
