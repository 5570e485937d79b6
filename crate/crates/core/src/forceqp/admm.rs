//! Operator splitting for small conic QPs
//!
//! ```text
//! minimize ½ zᵀ P z + qᵀ z   subject to   A_j z + b_j ∈ C_j
//! ```
//!
//! where every block `C_j` is a three-dimensional friction cone or a ball.
//! The iteration is the relaxed ADMM used by OSQP with an adaptive penalty;
//! projections onto both set types are closed form.

use nalgebra::{DMatrix, DVector};

use crate::model::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexSet {
    /// `{ f : ‖f_t‖ ≤ μ f·n }`
    Soc { normal: Vec3, mu: f64 },
    /// `{ v : ‖v‖ ≤ radius }`
    Ball { radius: f64 },
}

impl ConvexSet {
    pub fn project(&self, v: &Vec3) -> Vec3 {
        match *self {
            ConvexSet::Soc { normal, mu } => project_friction_cone(v, &normal, mu),
            ConvexSet::Ball { radius } => {
                let n = v.norm();
                if n <= radius {
                    *v
                } else {
                    v * (radius / n)
                }
            }
        }
    }
}

/// Euclidean projection onto the friction cone of coefficient `mu` around `normal`.
pub fn project_friction_cone(v: &Vec3, normal: &Vec3, mu: f64) -> Vec3 {
    let vn = v.dot(normal);
    let vt = v - normal * vn;
    let t = vt.norm();
    if t <= mu * vn {
        return *v;
    }
    if mu * t <= -vn {
        return Vec3::zeros();
    }
    let n_new = (mu * t + vn) / (1.0 + mu * mu);
    normal * n_new + vt * (mu * n_new / t)
}

#[derive(Debug, Clone)]
pub struct Block {
    /// 3 × n
    pub rows: DMatrix<f64>,
    pub offset: Vec3,
    pub set: ConvexSet,
}

#[derive(Debug, Clone)]
pub struct ConicQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub z: DVector<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

const RELAX: f64 = 1.6;
const SIGMA: f64 = 1e-9;
const ADAPT_EVERY: usize = 25;

impl ConicQp {
    fn stacked(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.q.len();
        let m = 3 * self.blocks.len();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        for (j, blk) in self.blocks.iter().enumerate() {
            a.view_mut((3 * j, 0), (3, n)).copy_from(&blk.rows);
            b.fixed_rows_mut::<3>(3 * j).copy_from(&blk.offset);
        }
        (a, b)
    }

    fn project(&self, v: &mut DVector<f64>) {
        for (j, blk) in self.blocks.iter().enumerate() {
            let seg = Vec3::from(v.fixed_rows::<3>(3 * j));
            v.fixed_rows_mut::<3>(3 * j).copy_from(&blk.set.project(&seg));
        }
    }

    pub fn solve(&self, z0: &DVector<f64>, tol: f64, max_iter: usize) -> AdmmOutcome {
        let n = self.q.len();
        let (a, b) = self.stacked();
        let at = a.transpose();
        let ata = &at * &a;

        let mut rho = 0.1 * (self.p.diagonal().amax().max(1e-6));
        let factor = |rho: f64| {
            let k = &self.p + DMatrix::identity(n, n) * SIGMA + &ata * rho;
            k.cholesky().expect("ADMM system is positive definite")
        };
        let mut chol = factor(rho);

        let mut z = z0.clone();
        let mut s = &a * &z + &b;
        self.project(&mut s);
        let mut y = DVector::zeros(b.len());
        let (mut rp, mut rd) = (f64::INFINITY, f64::INFINITY);

        for it in 1..=max_iter {
            let rhs = &z * SIGMA - &self.q + &at * ((&s - &b) * rho - &y);
            let z_tilde = chol.solve(&rhs);
            let x_tilde = &a * &z_tilde + &b;
            let x_hat = &x_tilde * RELAX + &s * (1.0 - RELAX);
            z = &z_tilde * RELAX + &z * (1.0 - RELAX);
            let mut s_new = &x_hat + &y / rho;
            self.project(&mut s_new);
            y += (&x_hat - &s_new) * rho;
            s = s_new;

            let ax = &a * &z + &b;
            let px = &self.p * &z;
            let aty = &at * &y;
            rp = (&ax - &s).amax();
            rd = (&px + &self.q + &aty).amax();
            let scale_p = 1.0 + ax.amax().max(s.amax());
            let scale_d = 1.0 + px.amax().max(self.q.amax()).max(aty.amax());
            if rp <= tol * scale_p && rd <= tol * scale_d {
                return AdmmOutcome {
                    z,
                    iterations: it,
                    primal_residual: rp,
                    dual_residual: rd,
                    converged: true,
                };
            }
            if it % ADAPT_EVERY == 0 {
                let ratio = ((rp / scale_p) / (rd / scale_d).max(1e-300)).sqrt();
                if !(0.2..=5.0).contains(&ratio) && ratio.is_finite() {
                    let new_rho = (rho * ratio.clamp(0.1, 10.0)).clamp(1e-8, 1e8);
                    // y is the unscaled multiplier, so only the factorization changes.
                    // Large jumps make rho cycle on nearly flat problems.
                    rho = new_rho;
                    chol = factor(rho);
                }
            }
        }
        AdmmOutcome {
            z,
            iterations: max_iter,
            primal_residual: rp,
            dual_residual: rd,
            converged: false,
        }
    }
}
