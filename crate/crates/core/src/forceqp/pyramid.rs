//! Eight-facet inscribed friction pyramid, solved by Hildreth's dual
//! coordinate ascent. Used only to cross-check the cone solver.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::model::{Contact, Vec3};

pub const FACETS: usize = 8;

/// Orthonormal tangent pair for a contact normal.
pub fn tangent_basis(normal: &Vec3) -> (Vec3, Vec3) {
    let seed = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = (seed - normal * seed.dot(normal)).normalize();
    let t2 = normal.cross(&t1);
    (t1, t2)
}

/// Outward facet normals `a_j` such that the pyramid is `{ f : a_jᵀ f ≤ 0 }`.
/// The pyramid's vertices lie on the true cone, so it is an inner approximation.
pub fn facet_normals(contact: &Contact) -> [Vec3; FACETS] {
    let (t1, t2) = tangent_basis(&contact.normal);
    let inset = contact.mu * (PI / FACETS as f64).cos();
    std::array::from_fn(|j| {
        let th = 2.0 * PI * j as f64 / FACETS as f64;
        t1 * th.cos() + t2 * th.sin() - contact.normal * inset
    })
}

#[derive(Debug, Clone)]
pub struct DualOutcome {
    pub z: DVector<f64>,
    pub sweeps: usize,
    pub max_violation: f64,
    pub converged: bool,
}

/// `min ½ zᵀ P z + qᵀ z  s.t.  G z ≤ h`, with `P` positive definite.
pub fn hildreth(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    tol: f64,
    max_sweeps: usize,
) -> DualOutcome {
    let chol = p.clone().cholesky().expect("P must be positive definite");
    let pinv_q = chol.solve(q);
    let pinv_gt = chol.solve(&g.transpose());
    let hd = g * &pinv_gt;
    let k = h + g * &pinv_q;
    let m = h.len();
    let mut lam = DVector::<f64>::zeros(m);
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut change = 0.0f64;
        for i in 0..m {
            if hd[(i, i)] <= 0.0 {
                continue;
            }
            let grad = hd.row(i).dot(&lam.transpose()) + k[i];
            let new = (lam[i] - grad / hd[(i, i)]).max(0.0);
            change = change.max((new - lam[i]).abs() * hd[(i, i)].sqrt());
            lam[i] = new;
        }
        if change <= tol {
            converged = true;
            break;
        }
    }
    let z = -(pinv_q + pinv_gt * &lam);
    let max_violation = (g * &z - h).max().max(0.0);
    DualOutcome {
        z,
        sweeps,
        max_violation,
        converged,
    }
}
