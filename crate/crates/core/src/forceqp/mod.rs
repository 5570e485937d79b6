//! Per-step contact-force QP.
//!
//! ```text
//! minimize   α‖Ḣ‖² + λ‖Ḣ − Ḣ_task‖² + γ Σ‖f_i‖²
//! subject to Σ f_i = F_net,  f_i ∈ K_i
//! ```
//!
//! The equality is eliminated by writing `f = F_net/N ⊗ 1 + B z` with `B`
//! an orthonormal basis of `{δf : Σ δf_i = 0}`. Because the equal split is
//! orthogonal to that subspace, `Σ‖f_i‖² = ‖F_net‖²/N + ‖z‖²` and the
//! reduced problem is a dense QP in `3(N−1)` variables with one friction
//! cone per contact.

pub mod admm;
pub mod pyramid;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{self, contact_moment, friction_contains, StanceConfig, Vec3};

use admm::{Block, ConicQp, ConvexSet};

/// Tolerance used when reporting cone feasibility of returned forces.
pub const CONE_FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpWeights {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub hdot_task: Vec3,
}

impl QpWeights {
    pub fn new(alpha: f64, gamma: f64, lambda: f64, hdot_task: Vec3) -> Result<Self> {
        ensure(alpha >= 0.0 && alpha.is_finite(), "alpha", || format!("must be ≥ 0, got {alpha}"))?;
        ensure(lambda >= 0.0 && lambda.is_finite(), "lambda", || {
            format!("must be ≥ 0, got {lambda}")
        })?;
        ensure(gamma > 0.0 && gamma.is_finite(), "gamma", || format!("must be > 0, got {gamma}"))?;
        ensure(hdot_task.iter().all(|v| v.is_finite()), "hdot_task", || "non-finite".into())?;
        Ok(Self {
            alpha,
            gamma,
            lambda,
            hdot_task,
        })
    }

    /// Balance-dominated weights (`λ = 0`).
    pub fn balance(alpha: f64, gamma: f64) -> Result<Self> {
        Self::new(alpha, gamma, 0.0, Vec3::zeros())
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.alpha * s, self.gamma * s, self.lambda * s, self.hdot_task)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConeModel {
    #[default]
    Soc,
    Pyramid8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Tolerance on the scaled KKT residual.
    pub tol: f64,
    pub max_iter: usize,
    pub cone_model: ConeModel,
    /// Return the closed-form unconstrained minimizer directly when it is
    /// already cone-feasible.
    pub shortcut: bool,
    /// Optional `‖Ḣ − Ḣ_task‖ ≤ ε` constraint.
    pub task_ball: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            cone_model: ConeModel::Soc,
            shortcut: true,
            task_ball: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSolution {
    pub forces: Vec<Vec3>,
    pub hdot: Vec3,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub cone_active: Vec<bool>,
}

/// Helmert-type orthonormal basis of `{δf ∈ ℝ^{3n} : Σ δf_i = 0}` (3n × 3(n−1)).
pub fn sum_null_basis(n: usize) -> DMatrix<f64> {
    let d = n.saturating_sub(1);
    let mut b = DMatrix::zeros(3 * n, 3 * d);
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..=k {
            let w = if i < k { 1.0 } else { -(k as f64) } / norm;
            for a in 0..3 {
                b[(3 * i + a, 3 * (k - 1) + a)] = w;
            }
        }
    }
    b
}

/// `[v]×` such that `[v]× w = v × w`.
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `3 × 3N` map from stacked contact forces to the moment about `com`.
pub fn moment_map(positions: &[Vec3], com: &Vec3) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, 3 * positions.len());
    for (i, r) in positions.iter().enumerate() {
        m.view_mut((0, 3 * i), (3, 3)).copy_from(&skew(&(r - com)));
    }
    m
}

/// The reduced problem shared by the cone solver, the unconstrained oracle
/// and the pyramid cross-check.
#[derive(Debug, Clone)]
pub struct Reduced {
    pub basis: DMatrix<f64>,
    /// Moment map restricted to the basis (3 × d).
    pub jac: DMatrix<f64>,
    pub f0: Vec<Vec3>,
    /// Moment of the equal split.
    pub h0: Vec3,
}

impl Reduced {
    pub fn new(stance: &StanceConfig, com: &Vec3, f_net: &Vec3) -> Self {
        Self::with_basis(stance, com, f_net, sum_null_basis(stance.len()))
    }

    /// `basis` must have orthonormal columns inside the sum-constraint null space.
    pub fn with_basis(stance: &StanceConfig, com: &Vec3, f_net: &Vec3, basis: DMatrix<f64>) -> Self {
        let positions = stance.positions();
        let f0 = model::equal_split(f_net, stance.len());
        let h0 = contact_moment(&positions, com, &f0);
        let jac = moment_map(&positions, com) * &basis;
        Self { basis, jac, f0, h0 }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn forces(&self, z: &DVector<f64>) -> Vec<Vec3> {
        let delta = &self.basis * z;
        self.f0
            .iter()
            .enumerate()
            .map(|(i, f)| f + Vec3::from(delta.fixed_rows::<3>(3 * i)))
            .collect()
    }

    pub fn hdot(&self, z: &DVector<f64>) -> Vec3 {
        self.h0 + Vec3::from_iterator((&self.jac * z).iter().copied())
    }

    /// Quadratic model `½ zᵀPz + qᵀz`, scaled by `scale`.
    fn quadratic(&self, w: &QpWeights, scale: f64) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.dim();
        let jt = self.jac.transpose();
        let ah = w.alpha + w.lambda;
        let p = (&jt * &self.jac * ah + DMatrix::identity(d, d) * w.gamma) * (2.0 * scale);
        let target = self.h0 * ah - w.hdot_task * w.lambda;
        let q = &jt * DVector::from_column_slice(target.as_slice()) * (2.0 * scale);
        (p, q)
    }

    fn contact_rows(&self, i: usize) -> DMatrix<f64> {
        self.basis.rows(3 * i, 3).into_owned()
    }
}

pub fn objective(w: &QpWeights, hdot: &Vec3, forces: &[Vec3]) -> f64 {
    w.alpha * hdot.norm_squared()
        + w.lambda * (hdot - w.hdot_task).norm_squared()
        + w.gamma * forces.iter().map(|f| f.norm_squared()).sum::<f64>()
}

fn package(stance: &StanceConfig, com: &Vec3, w: &QpWeights, forces: Vec<Vec3>, iterations: usize, primal: f64) -> ForceSolution {
    let hdot = contact_moment(&stance.positions(), com, &forces);
    let cone_active = stance
        .contacts
        .iter()
        .zip(&forces)
        .map(|(c, f)| {
            let (fn_, ft) = c.decompose(f);
            c.mu * fn_ - ft.norm() <= 1e-6 * (1.0 + f.norm())
        })
        .collect();
    ForceSolution {
        objective: objective(w, &hdot, &forces),
        forces,
        hdot,
        iterations,
        primal_residual: primal,
        cone_active,
    }
}

fn sum_residual(forces: &[Vec3], f_net: &Vec3) -> f64 {
    (forces.iter().sum::<Vec3>() - f_net).norm()
}

fn check_inputs(_stance: &StanceConfig, com: &Vec3, f_net: &Vec3) -> Result<()> {
    ensure(com.iter().chain(f_net.iter()).all(|v| v.is_finite()), "f_net", || {
        "non-finite input".into()
    })
}

/// Projection of `f_net` onto the Minkowski sum of the contact cones.
///
/// Returns the gap `‖F_net − Σ s_i‖` and the separating direction.
pub fn minkowski_gap(stance: &StanceConfig, f_net: &Vec3) -> (f64, Vec3) {
    let n = stance.len();
    let mut s = model::equal_split(f_net, n);
    for (si, c) in s.iter_mut().zip(&stance.contacts) {
        *si = admm::project_friction_cone(si, &c.normal, c.mu);
    }
    let mut prev = s.clone();
    let step = 1.0 / n as f64;
    let mut t = 1.0f64;
    for _ in 0..20_000 {
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        let extrap: Vec<Vec3> = s.iter().zip(&prev).map(|(a, b)| a + (a - b) * mom).collect();
        let resid = extrap.iter().sum::<Vec3>() - f_net;
        prev = s.clone();
        for ((si, e), c) in s.iter_mut().zip(&extrap).zip(&stance.contacts) {
            *si = admm::project_friction_cone(&(e - resid * step), &c.normal, c.mu);
        }
        t = t_next;
        let moved: f64 = s.iter().zip(&prev).map(|(a, b)| (a - b).norm()).sum();
        if moved <= 1e-13 * (1.0 + f_net.norm()) {
            break;
        }
    }
    let gap_vec = f_net - s.iter().sum::<Vec3>();
    let gap = gap_vec.norm();
    let dir = if gap > 0.0 { gap_vec / gap } else { Vec3::zeros() };
    (gap, dir)
}

fn feasibility_guard(stance: &StanceConfig, f_net: &Vec3) -> Result<()> {
    let split = f_net / stance.len() as f64;
    if stance
        .contacts
        .iter()
        .all(|c| friction_contains(c, &split, model::DEFAULT_CONE_TOL))
    {
        return Ok(());
    }
    let (gap, direction) = minkowski_gap(stance, f_net);
    if gap > 1e-6 * f_net.norm().max(1e-12) {
        return Err(Error::Infeasible { gap, direction });
    }
    Ok(())
}

/// Solve the contact-force QP.
pub fn solve(stance: &StanceConfig, com: &Vec3, f_net: &Vec3, w: &QpWeights, opts: &SolverOptions) -> Result<ForceSolution> {
    solve_reduced(stance, com, f_net, w, opts, Reduced::new(stance, com, f_net))
}

/// Same as [`solve`] but with the redistribution restricted to the span of
/// `basis` (orthonormal columns inside the sum-constraint null space).
pub fn solve_in_subspace(
    stance: &StanceConfig,
    com: &Vec3,
    f_net: &Vec3,
    w: &QpWeights,
    opts: &SolverOptions,
    basis: DMatrix<f64>,
) -> Result<ForceSolution> {
    ensure(basis.nrows() == 3 * stance.len(), "basis", || {
        format!("expected {} rows, got {}", 3 * stance.len(), basis.nrows())
    })?;
    solve_reduced(stance, com, f_net, w, opts, Reduced::with_basis(stance, com, f_net, basis))
}

fn solve_reduced(
    stance: &StanceConfig,
    com: &Vec3,
    f_net: &Vec3,
    w: &QpWeights,
    opts: &SolverOptions,
    red: Reduced,
) -> Result<ForceSolution> {
    check_inputs(stance, com, f_net)?;
    feasibility_guard(stance, f_net)?;

    if red.dim() == 0 {
        let forces = red.f0.clone();
        let res = sum_residual(&forces, f_net);
        return Ok(package(stance, com, w, forces, 0, res));
    }

    let scale = 1.0 / (1.0 + w.alpha + w.lambda);
    let (p, q) = red.quadratic(w, scale);

    if opts.shortcut && opts.task_ball.is_none() {
        let z = p
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Rank("reduced Hessian not positive definite".into()))?
            .solve(&(-&q));
        let forces = red.forces(&z);
        let tol = CONE_FEAS_TOL.min(opts.tol.sqrt());
        let inside = match opts.cone_model {
            ConeModel::Soc => stance.contacts.iter().zip(&forces).all(|(c, f)| friction_contains(c, f, tol)),
            ConeModel::Pyramid8 => stance.contacts.iter().zip(&forces).all(|(c, f)| {
                pyramid::facet_normals(c).iter().all(|a| a.dot(f) <= tol * f.norm())
            }),
        };
        if inside {
            let res = sum_residual(&forces, f_net);
            return Ok(package(stance, com, w, forces, 0, res));
        }
    }

    match opts.cone_model {
        ConeModel::Soc => solve_soc(stance, com, f_net, w, opts, &red, p, q),
        ConeModel::Pyramid8 => solve_pyramid(stance, com, f_net, w, opts, &red, p, q),
    }
}

#[allow(clippy::too_many_arguments)]
fn solve_soc(
    stance: &StanceConfig,
    com: &Vec3,
    f_net: &Vec3,
    w: &QpWeights,
    opts: &SolverOptions,
    red: &Reduced,
    p: DMatrix<f64>,
    q: DVector<f64>,
) -> Result<ForceSolution> {
    let mut blocks: Vec<Block> = stance
        .contacts
        .iter()
        .enumerate()
        .map(|(i, c)| Block {
            rows: red.contact_rows(i),
            offset: red.f0[i],
            set: ConvexSet::Soc {
                normal: c.normal,
                mu: c.mu,
            },
        })
        .collect();
    if let Some(eps) = opts.task_ball {
        ensure(eps >= 0.0, "task_ball", || format!("must be ≥ 0, got {eps}"))?;
        blocks.push(Block {
            rows: red.jac.clone(),
            offset: red.h0 - w.hdot_task,
            set: ConvexSet::Ball { radius: eps },
        });
    }
    let qp = ConicQp { p, q, blocks };
    let out = qp.solve(&DVector::zeros(red.dim()), opts.tol, opts.max_iter);
    if !out.converged {
        return Err(Error::NotConverged {
            iterations: out.iterations,
            primal_residual: out.primal_residual,
            dual_residual: out.dual_residual,
        });
    }
    let forces = red.forces(&out.z);
    let res = sum_residual(&forces, f_net).max(out.primal_residual);
    Ok(package(stance, com, w, forces, out.iterations, res))
}

#[allow(clippy::too_many_arguments)]
fn solve_pyramid(
    stance: &StanceConfig,
    com: &Vec3,
    f_net: &Vec3,
    w: &QpWeights,
    opts: &SolverOptions,
    red: &Reduced,
    p: DMatrix<f64>,
    q: DVector<f64>,
) -> Result<ForceSolution> {
    ensure(opts.task_ball.is_none(), "task_ball", || "not supported with pyramid cones".into())?;
    let d = red.dim();
    let m = pyramid::FACETS * stance.len();
    let mut g = DMatrix::zeros(m, d);
    let mut h = DVector::zeros(m);
    for (i, c) in stance.contacts.iter().enumerate() {
        let rows = red.contact_rows(i);
        for (j, a) in pyramid::facet_normals(c).iter().enumerate() {
            let r = pyramid::FACETS * i + j;
            g.row_mut(r).copy_from(&(a.transpose() * &rows));
            h[r] = -a.dot(&red.f0[i]);
        }
    }
    let out = pyramid::hildreth(&p, &q, &g, &h, opts.tol, opts.max_iter);
    if !out.converged {
        return Err(Error::NotConverged {
            iterations: out.sweeps,
            primal_residual: out.max_violation,
            dual_residual: f64::NAN,
        });
    }
    let forces = red.forces(&out.z);
    let res = sum_residual(&forces, f_net).max(out.max_violation);
    Ok(package(stance, com, w, forces, out.sweeps, res))
}

/// Closed-form minimizer without friction cones, written mode by mode in the
/// SVD of the moment Jacobian:
///
/// ```text
/// Ḣ* = Σ_k (γ h_k + λ σ_k² t_k) / (γ + (α+λ) σ_k²) u_k
/// ```
///
/// with `h = Uᵀ Ḣ₀` and `t = Uᵀ Ḣ_task`.
pub fn solve_unconstrained(stance: &StanceConfig, com: &Vec3, f_net: &Vec3, w: &QpWeights) -> Result<ForceSolution> {
    check_inputs(stance, com, f_net)?;
    if stance.len() < 2 {
        return Err(Error::Rank(format!(
            "need at least 2 contacts for a redistribution null space, got {}",
            stance.len()
        )));
    }
    let red = Reduced::new(stance, com, f_net);
    let svd = red.jac.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("Vᵀ requested");
    let ah = w.alpha + w.lambda;
    let mut z = DVector::zeros(red.dim());
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        let uk = Vec3::from_iterator(u.column(k).iter().copied());
        let hk = uk.dot(&red.h0);
        let tk = uk.dot(&w.hdot_task);
        let coef = -sigma * (ah * hk - w.lambda * tk) / (w.gamma + ah * sigma * sigma);
        z += v_t.row(k).transpose() * coef;
    }
    let forces = red.forces(&z);
    let res = sum_residual(&forces, f_net);
    Ok(package(stance, com, w, forces, 0, res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn go1() -> StanceConfig {
        StanceConfig::rectangle(0.188, 0.127, 12.0, 0.6).unwrap()
    }

    #[test]
    fn null_basis_orthonormal() {
        for n in 1..6 {
            let b = sum_null_basis(n);
            let btb = b.transpose() * &b;
            assert!((btb - DMatrix::identity(3 * (n - 1), 3 * (n - 1))).amax() < 1e-14);
            let mut sum = DMatrix::zeros(3, 3 * n);
            for i in 0..n {
                sum.view_mut((0, 3 * i), (3, 3)).fill_with_identity();
            }
            assert!((sum * &b).amax() < 1e-14);
        }
    }

    #[test]
    fn symmetric_stance_equal_vertical_forces() {
        let s = go1();
        let f = Vec3::new(0.0, 0.0, s.weight());
        for alpha in [0.0, 1.0, 1e3] {
            let sol = solve(&s, &Vec3::new(0.0, 0.0, 0.27), &f, &QpWeights::balance(alpha, 1.0).unwrap(), &SolverOptions::default()).unwrap();
            for fi in &sol.forces {
                assert_relative_eq!(*fi, f / 4.0, epsilon = 1e-10);
            }
            assert!(sol.hdot.norm() < 1e-10);
        }
    }

    #[test]
    fn regularizer_alone_gives_equal_split() {
        let s = go1();
        let f = Vec3::new(5.0, -3.0, 120.0);
        let sol = solve(&s, &Vec3::new(0.03, 0.01, 0.27), &f, &QpWeights::balance(0.0, 1.0).unwrap(), &SolverOptions::default()).unwrap();
        for fi in &sol.forces {
            assert_relative_eq!(*fi, f / 4.0, epsilon = 1e-10);
        }
        let un = solve_unconstrained(&s, &Vec3::new(0.03, 0.01, 0.27), &f, &QpWeights::balance(0.0, 1.0).unwrap()).unwrap();
        let base = model::excitation_baseline(&s, &Vec3::new(0.03, 0.01, 0.27), &(f / 12.0 - Vec3::new(0.0, 0.0, 9.81)));
        assert_relative_eq!(un.hdot, base, epsilon = 1e-10);
    }

    #[test]
    fn gamma_zero_rejected() {
        assert!(QpWeights::balance(1.0, 0.0).is_err());
        assert!(QpWeights::new(-1.0, 1.0, 0.0, Vec3::zeros()).is_err());
    }

    #[test]
    fn infeasible_net_force_reports_direction() {
        let s = go1();
        let f = Vec3::new(100.0, 0.0, 50.0); // tilt far outside μ = 0.6
        match solve(&s, &Vec3::new(0.0, 0.0, 0.27), &f, &QpWeights::balance(1.0, 1.0).unwrap(), &SolverOptions::default()) {
            Err(Error::Infeasible { gap, direction }) => {
                assert!(gap > 1.0);
                assert!(direction.x > 0.0);
                assert_relative_eq!(direction.norm(), 1.0, epsilon = 1e-12);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn minkowski_gap_zero_inside() {
        let s = StanceConfig::diagonal_pair(0.188, 0.127, 12.0, 0.6).unwrap();
        let (gap, _) = minkowski_gap(&s, &Vec3::new(50.0, 0.0, 100.0));
        assert!(gap < 1e-9);
        let (gap, _) = minkowski_gap(&s, &Vec3::new(0.0, 0.0, -10.0));
        assert_relative_eq!(gap, 10.0, epsilon = 1e-6);
    }

    #[test]
    fn unconstrained_requires_two_contacts() {
        let s = StanceConfig::new(vec![model::Contact::new(Vec3::zeros(), 0.6).unwrap()], 1.0).unwrap();
        assert!(matches!(
            solve_unconstrained(&s, &Vec3::z(), &Vec3::z(), &QpWeights::balance(1.0, 1.0).unwrap()),
            Err(Error::Rank(_))
        ));
        // solve() still handles a single contact
        let sol = solve(&s, &Vec3::z(), &Vec3::new(0.0, 0.0, 9.81), &QpWeights::balance(1.0, 1.0).unwrap(), &SolverOptions::default()).unwrap();
        assert_eq!(sol.forces, vec![Vec3::new(0.0, 0.0, 9.81)]);
    }

    #[test]
    fn large_alpha_mode_scaling() {
        let s = go1();
        let com = Vec3::new(0.04, -0.06, 0.27);
        let f = Vec3::new(1.0, 2.0, s.weight());
        let red = Reduced::new(&s, &com, &f);
        let svd = red.jac.clone().svd(true, false);
        let u = svd.u.unwrap();
        for alpha in [1e3, 1e4, 1e5] {
            let sol = solve_unconstrained(&s, &com, &f, &QpWeights::balance(alpha, 1.0).unwrap()).unwrap();
            for k in 0..3 {
                let uk = Vec3::from_iterator(u.column(k).iter().copied());
                let sk = svd.singular_values[k];
                let expected = uk.dot(&red.h0) / (1.0 + alpha * sk * sk);
                assert_relative_eq!(uk.dot(&sol.hdot), expected, max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn task_ball_bounds_hdot() {
        let s = go1();
        let com = Vec3::new(0.0, 0.0, 0.27);
        let f = Vec3::new(0.0, 0.0, s.weight());
        let task = Vec3::new(2.0, -1.0, 0.5);
        let w = QpWeights::new(10.0, 1.0, 0.0, task).unwrap();
        let eps = 0.5;
        let opts = SolverOptions {
            task_ball: Some(eps),
            ..SolverOptions::default()
        };
        let sol = solve(&s, &com, &f, &w, &opts).unwrap();
        assert!((sol.hdot - task).norm() <= eps + 1e-7);
        assert!(sol.hdot.norm() >= task.norm() - eps - 1e-8);
    }
}
