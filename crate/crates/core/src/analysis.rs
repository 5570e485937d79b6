//! Closed-form predictions for the contact-force QP.
//!
//! Covers the moment-Jacobian SVD and the scaling constant `K` it induces,
//! the two-foot geometric floor with its min-norm canceller, the
//! friction-cone kink along fore–aft acceleration, the task prefactor
//! `λ/(α+λ)` and a brute-force check that the pendular force minimizes
//! `‖Ḣ‖` pointwise.

use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::forceqp::{self, sum_null_basis, ForceSolution, QpWeights, SolverOptions};
use crate::model::{self, friction_contains, CentroidalState, StanceConfig, Vec2, Vec3};

/// Weight used to realize `inf_α` numerically.
pub const INF_ALPHA: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentJacobian {
    /// 3 × 3(N−1)
    pub matrix: DMatrix<f64>,
    pub basis: DMatrix<f64>,
    /// Descending.
    pub singular_values: [f64; 3],
    /// Columns are the left singular vectors.
    pub left_vectors: Matrix3<f64>,
}

impl MomentJacobian {
    /// Modal coordinates `Uᵀ h`.
    pub fn modal(&self, h: &Vec3) -> Vec3 {
        self.left_vectors.transpose() * h
    }
}

pub fn moment_jacobian(stance: &StanceConfig, com: &Vec3) -> Result<MomentJacobian> {
    moment_jacobian_with_basis(stance, com, sum_null_basis(stance.len()))
}

/// As [`moment_jacobian`] with a caller-supplied orthonormal null-space basis.
pub fn moment_jacobian_with_basis(stance: &StanceConfig, com: &Vec3, basis: DMatrix<f64>) -> Result<MomentJacobian> {
    if stance.len() < 2 {
        return Err(Error::Rank(format!(
            "moment Jacobian needs at least 2 contacts, got {}",
            stance.len()
        )));
    }
    if basis.nrows() != 3 * stance.len() {
        return Err(Error::Dimension {
            expected: 3 * stance.len(),
            got: basis.nrows(),
        });
    }
    let matrix = forceqp::moment_map(&stance.positions(), com) * &basis;
    let svd = matrix.clone().svd(true, false);
    let u = svd.u.expect("U requested");
    let mut singular_values = [0.0; 3];
    let mut left_vectors = Matrix3::zeros();
    for k in 0..svd.singular_values.len().min(3) {
        singular_values[k] = svd.singular_values[k];
        left_vectors.set_column(k, &u.column(k));
    }
    Ok(MomentJacobian {
        matrix,
        basis,
        singular_values,
        left_vectors,
    })
}

/// Singular values of the rectangular four-foot stance with half-spans `lx`, `ly`.
pub fn rect_stance_sigmas(lx: f64, ly: f64) -> Result<[f64; 3]> {
    ensure(lx > 0.0, "lx", || format!("must be > 0, got {lx}"))?;
    ensure(ly > 0.0, "ly", || format!("must be > 0, got {ly}"))?;
    let mut s = [2.0 * lx.hypot(ly), 2.0 * lx, 2.0 * ly];
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// `K = sqrt(Σ_k ⟨h_k²⟩ / σ_k⁴)` over the excitation samples (per unit mass).
pub fn scaling_constant(jac: &MomentJacobian, excitation_samples: &[Vec3]) -> Result<f64> {
    let s3 = jac.singular_values[2];
    if s3 <= 1e-12 * jac.singular_values[0].max(1.0) {
        return Err(Error::Rank(format!("σ3 = {s3:.3e}; use the floor analysis instead")));
    }
    if excitation_samples.is_empty() {
        return Ok(0.0);
    }
    let n = excitation_samples.len() as f64;
    let mut mean_sq = [0.0; 3];
    for h in excitation_samples {
        let hk = jac.modal(h);
        for k in 0..3 {
            mean_sq[k] += hk[k] * hk[k] / n;
        }
    }
    Ok((0..3)
        .map(|k| mean_sq[k] / jac.singular_values[k].powi(4))
        .sum::<f64>()
        .sqrt())
}

/// `α* = K / ε²`: the weight whose predicted residual `K/α` equals `eps_target`.
pub fn alpha_for_residual(k: f64, eps_target: f64) -> Result<f64> {
    ensure(eps_target > 0.0, "eps_target", || format!("must be > 0, got {eps_target}"))?;
    ensure(k >= 0.0, "k", || format!("must be ≥ 0, got {k}"))?;
    Ok(k / (eps_target * eps_target))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorReport {
    pub d_hat: Vec3,
    /// Per unit mass, m²/s².
    pub geometric_floor: f64,
    /// `None` when the excitation vanishes.
    pub floor_fraction: Option<f64>,
    pub canceller: Vec3,
    pub canceller_feasible: bool,
    /// `r × F_net` with `r` from the CoM to the foot midpoint.
    pub h0: Vec3,
}

fn two_feet(stance2: &StanceConfig) -> Result<(Vec3, Vec3)> {
    if stance2.len() != 2 {
        return Err(Error::StanceSize {
            expected: 2,
            got: stance2.len(),
        });
    }
    let (p1, p2) = (stance2.contacts[0].position, stance2.contacts[1].position);
    if (p1 - p2).norm() <= 1e-12 {
        return Err(Error::DegenerateStance("both contacts coincide".into()));
    }
    Ok((p1, p2))
}

/// Foot axis `D̂`, sign fixed so that its x-component is non-negative.
fn axis(p1: &Vec3, p2: &Vec3) -> Vec3 {
    let d = (p1 - p2).normalize();
    if d.x < 0.0 || (d.x == 0.0 && d.y < 0.0) {
        -d
    } else {
        d
    }
}

pub fn geometric_floor(stance2: &StanceConfig, com: &Vec3, f_net: &Vec3) -> Result<FloorReport> {
    let (p1, p2) = two_feet(stance2)?;
    let d = p1 - p2;
    let d_hat = axis(&p1, &p2);
    let r = (p1 + p2) / 2.0 - com;
    let h0 = r.cross(f_net);
    let along = h0.dot(&d_hat);
    let h0_perp = h0 - d_hat * along;
    let canceller = d.cross(&h0_perp) / d.norm_squared();
    let half = f_net / 2.0;
    let tol = model::DEFAULT_CONE_TOL;
    let canceller_feasible = friction_contains(&stance2.contacts[0], &(half + canceller), tol)
        && friction_contains(&stance2.contacts[1], &(half - canceller), tol);
    let h0_norm = h0.norm();
    Ok(FloorReport {
        d_hat,
        geometric_floor: along.abs() / stance2.mass,
        floor_fraction: (h0_norm > 1e-12 * f_net.norm().max(1.0)).then(|| along.abs() / h0_norm),
        canceller,
        canceller_feasible,
        h0,
    })
}

/// `n` headings uniformly spaced over `[0°, 180°)`.
pub fn uniform_headings(n: usize) -> Vec<Vec2> {
    (0..n)
        .map(|k| {
            let th = std::f64::consts::PI * k as f64 / n as f64;
            Vec2::new(th.cos(), th.sin())
        })
        .collect()
}

/// Uncancellable share `|Ḣ₀·D̂| / ‖Ḣ₀‖` for horizontal excitations
/// `F_net = m (a d_x, a d_y, g)`.
pub fn floor_fraction_sweep(stance2: &StanceConfig, com: &Vec3, directions: &[Vec2], accel_mag: f64) -> Result<Vec<Option<f64>>> {
    directions
        .iter()
        .map(|dir| {
            let acc = Vec3::new(dir.x, dir.y, 0.0) * accel_mag;
            let f = model::required_net_force(stance2, &acc);
            let h0 = model::excitation_baseline(stance2, com, &acc);
            let rep = geometric_floor(stance2, com, &f)?;
            let norm = h0.norm();
            Ok((norm > 1e-12 * f.norm()).then(|| h0.dot(&rep.d_hat).abs() / norm))
        })
        .collect()
}

/// `κ = |(D × (r × x̂))_z| / ‖D‖²`.
pub fn kink_kappa(stance2: &StanceConfig, com: &Vec3) -> Result<f64> {
    let (p1, p2) = two_feet(stance2)?;
    let d = p1 - p2;
    let r = (p1 + p2) / 2.0 - com;
    Ok(d.cross(&r.cross(&Vec3::x())).z.abs() / d.norm_squared())
}

/// `a_x* = μ g / (1 + 2 μ κ)`.
pub fn critical_acceleration(mu: f64, gravity: f64, kappa: f64) -> f64 {
    mu * gravity / (1.0 + 2.0 * mu * kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinkRow {
    pub a_x: f64,
    pub floor: f64,
    /// `‖Ḣ‖/m` from the full QP at [`INF_ALPHA`].
    pub qp_inf: f64,
    /// Same, with the redistribution restricted to `δ ⊥ D` (min-norm canceller family).
    pub canceller_inf: f64,
    /// Larger iteration count of the two solves.
    pub iterations: usize,
    /// Larger primal residual of the two solves.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinkReport {
    pub kappa: f64,
    pub a_star: f64,
    pub curve: Vec<KinkRow>,
    /// Slopes of the full-QP curve on either side of `a_star`.
    pub left_slope: f64,
    pub right_slope: f64,
    /// Slopes of the canceller-restricted curve on either side of `a_star`.
    pub canceller_left_slope: f64,
    pub canceller_right_slope: f64,
    /// First grid point where the full-QP curve leaves the floor by more than 1e-4.
    pub qp_departure: Option<f64>,
}

/// Basis for antisymmetric two-foot adjustments `(δ, −δ)/√2` with `δ ⊥ D`.
pub fn canceller_basis(stance2: &StanceConfig) -> Result<DMatrix<f64>> {
    let (p1, p2) = two_feet(stance2)?;
    let d = axis(&p1, &p2);
    let (w1, w2) = forceqp::pyramid::tangent_basis(&d);
    let mut b = DMatrix::zeros(6, 2);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for (col, w) in [w1, w2].iter().enumerate() {
        for a in 0..3 {
            b[(a, col)] = w[a] * s;
            b[(3 + a, col)] = -w[a] * s;
        }
    }
    Ok(b)
}

fn inf_hdot(stance: &StanceConfig, com: &Vec3, f_net: &Vec3, basis: Option<DMatrix<f64>>) -> Result<ForceSolution> {
    let w = QpWeights::balance(INF_ALPHA, 1.0)?;
    let opts = SolverOptions {
        tol: 1e-9,
        max_iter: 400_000,
        ..SolverOptions::default()
    };
    let sol = match basis {
        Some(b) => forceqp::solve_in_subspace(stance, com, f_net, &w, &opts, b)?,
        None => forceqp::solve(stance, com, f_net, &w, &opts)?,
    };
    Ok(sol)
}

fn one_sided_slopes(grid: &[f64], values: &[f64], at: f64) -> Result<(f64, f64)> {
    let below: Vec<usize> = (0..grid.len()).filter(|&i| grid[i] < at).collect();
    let above: Vec<usize> = (0..grid.len()).filter(|&i| grid[i] > at).collect();
    if below.len() < 2 || above.len() < 2 {
        return Err(Error::Grid { what: "a_star", value: at });
    }
    let (l0, l1) = (below[below.len() - 2], below[below.len() - 1]);
    let (r0, r1) = (above[0], above[1]);
    Ok((
        (values[l1] - values[l0]) / (grid[l1] - grid[l0]),
        (values[r1] - values[r0]) / (grid[r1] - grid[r0]),
    ))
}

/// Fore–aft sweep `F_net = m (a_x, 0, g)` around the critical acceleration.
///
/// `accel_grid` must be increasing and hold at least two points on each side
/// of `a_star`.
pub fn kink_analysis(stance2: &StanceConfig, com: &Vec3, mu: f64, accel_grid: &[f64]) -> Result<KinkReport> {
    let stance = stance2.with_mu(mu)?;
    let kappa = kink_kappa(&stance, com)?;
    let a_star = critical_acceleration(mu, stance.gravity, kappa);
    ensure(accel_grid.windows(2).all(|w| w[1] > w[0]), "accel_grid", || "must be increasing".into())?;
    if accel_grid.first().map_or(true, |&a| a >= a_star) || accel_grid.last().map_or(true, |&a| a <= a_star) {
        return Err(Error::Grid { what: "a_star", value: a_star });
    }
    let restricted = canceller_basis(&stance)?;
    let curve = accel_grid
        .par_iter()
        .map(|&a_x| {
            let f = model::required_net_force(&stance, &Vec3::new(a_x, 0.0, 0.0));
            let floor = geometric_floor(&stance, com, &f)?.geometric_floor;
            let full = inf_hdot(&stance, com, &f, None)?;
            let cancel = inf_hdot(&stance, com, &f, Some(restricted.clone()))?;
            Ok(KinkRow {
                a_x,
                floor,
                qp_inf: full.hdot.norm() / stance.mass,
                canceller_inf: cancel.hdot.norm() / stance.mass,
                iterations: full.iterations.max(cancel.iterations),
                residual: full.primal_residual.max(cancel.primal_residual),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let qp: Vec<f64> = curve.iter().map(|r| r.qp_inf).collect();
    let restricted_vals: Vec<f64> = curve.iter().map(|r| r.canceller_inf).collect();
    let (left_slope, right_slope) = one_sided_slopes(accel_grid, &qp, a_star)?;
    let (canceller_left_slope, canceller_right_slope) = one_sided_slopes(accel_grid, &restricted_vals, a_star)?;
    let qp_departure = curve.iter().find(|r| r.qp_inf - r.floor > 1e-4).map(|r| r.a_x);
    Ok(KinkReport {
        kappa,
        a_star,
        curve,
        left_slope,
        right_slope,
        canceller_left_slope,
        canceller_right_slope,
        qp_departure,
    })
}

/// `inf_α ‖Ḣ‖/m` versus μ at fixed fore–aft acceleration.
pub fn mu_sweep_no_kink(stance2: &StanceConfig, com: &Vec3, accel_fixed: f64, mu_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    two_feet(stance2)?;
    mu_grid
        .par_iter()
        .map(|&mu| {
            let stance = stance2.with_mu(mu)?;
            let f = model::required_net_force(&stance, &Vec3::new(accel_fixed, 0.0, 0.0));
            Ok((mu, inf_hdot(&stance, com, &f, None)?.hdot.norm() / stance.mass))
        })
        .collect()
}

/// Largest jump between consecutive finite-difference slopes of a curve.
pub fn max_slope_jump(curve: &[(f64, f64)]) -> f64 {
    let slopes: Vec<f64> = curve
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    slopes
        .windows(2)
        .map(|s| (s[1] - s[0]).abs())
        .fold(0.0, f64::max)
}

/// `λ / (α + λ)`.
pub fn task_prefactor(alpha: f64, lambda: f64) -> Result<f64> {
    ensure(alpha >= 0.0 && lambda >= 0.0, "alpha/lambda", || "must be ≥ 0".into())?;
    ensure(alpha + lambda > 0.0, "alpha + lambda", || "must be > 0".into())?;
    Ok(lambda / (alpha + lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub pivot: Vec3,
    pub pendular_force: Vec3,
    pub pendular_hdot: f64,
    pub samples: usize,
    pub min_sample_hdot: f64,
    /// Samples with `‖Ḣ‖` strictly below the pendular value.
    pub beaten: usize,
    /// Largest relative error of `‖Ḣ‖² = ‖c−p‖² ‖F⊥‖²` over the samples.
    pub max_identity_error: f64,
    /// Minimizer of `‖Ḣ‖` over the vertical-force family with `F_xy` fixed.
    pub fixed_xy_minimizer: Vec3,
}

/// Brute-force check that the pendular force minimizes `‖Ḣ‖` among net
/// forces applied at the pivot implied by `accel_xy`.
pub fn pointwise_certificate(stance: &StanceConfig, com: &Vec3, accel_xy: &Vec2, n_samples: usize) -> Result<CertificateReport> {
    ensure(n_samples > 0, "n_samples", || "must be > 0".into())?;
    let ground = stance.centroid().z;
    let h = com.z - ground;
    let pivot_xy = com.xy() - accel_xy * (h / stance.gravity);
    if !stance.support_contains(&pivot_xy, 1e-9) {
        return Err(Error::DegenerateStance(format!(
            "pivot ({:.4}, {:.4}) outside the support region",
            pivot_xy.x, pivot_xy.y
        )));
    }
    let pivot = Vec3::new(pivot_xy.x, pivot_xy.y, ground);
    let state = CentroidalState::new(*com, Vec3::zeros(), Vec3::new(accel_xy.x, accel_xy.y, 0.0), pivot);
    let f_pend = model::pendular_force(&state, stance.mass, stance.gravity, stance.h_min)?;
    let lever = com - pivot;
    let hdot_of = |f: &Vec3| (pivot - com).cross(f);
    let pend_h = hdot_of(&f_pend).norm();

    let side = (n_samples as f64).cbrt().ceil().max(2.0) as usize;
    let span = 0.5 * f_pend.norm();
    let mut min_h = f64::INFINITY;
    let mut beaten = 0;
    let mut max_err = 0.0f64;
    let mut count = 0;
    'grid: for i in 0..side {
        for j in 0..side {
            for k in 0..side {
                if count == n_samples {
                    break 'grid;
                }
                let t = |v: usize| span * (2.0 * v as f64 / (side - 1) as f64 - 1.0);
                let f = f_pend + Vec3::new(t(i), t(j), t(k));
                let hd = hdot_of(&f);
                let f_perp = f - lever * (f.dot(&lever) / lever.norm_squared());
                let lhs = hd.norm_squared();
                let rhs = lever.norm_squared() * f_perp.norm_squared();
                let err = (lhs - rhs).abs() / (lever.norm_squared() * f.norm_squared()).max(f64::MIN_POSITIVE);
                max_err = max_err.max(err);
                min_h = min_h.min(hd.norm());
                if hd.norm() < pend_h - 1e-12 * f.norm() * lever.norm() {
                    beaten += 1;
                }
                count += 1;
            }
        }
    }

    // F_xy fixed by the prescribed acceleration, F_z free.
    let fxy = Vec2::new(accel_xy.x, accel_xy.y) * stance.mass;
    let fixed_xy_minimizer = (0..=2000)
        .map(|k| {
            let fz = 2.0 * stance.weight() * k as f64 / 2000.0;
            Vec3::new(fxy.x, fxy.y, fz)
        })
        .min_by(|a, b| hdot_of(a).norm().total_cmp(&hdot_of(b).norm()))
        .unwrap();

    Ok(CertificateReport {
        pivot,
        pendular_force: f_pend,
        pendular_hdot: pend_h,
        samples: count,
        min_sample_hdot: min_h,
        beaten,
        max_identity_error: max_err,
        fixed_xy_minimizer,
    })
}

/// Flat summary of the closed-form quantities for one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub singular_values: [f64; 3],
    pub rect_singular_values: [f64; 3],
    pub scaling_constant: f64,
    pub geometric_floor: f64,
    pub canceller: Vec3,
    pub kappa: f64,
    pub a_star: f64,
    pub prefactor: f64,
}

impl AnalysisReport {
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for k in 0..3 {
            out.push((format!("sigma_{}", k + 1), format!("{:.10}", self.singular_values[k])));
        }
        for k in 0..3 {
            out.push((format!("rect_sigma_{}", k + 1), format!("{:.10}", self.rect_singular_values[k])));
        }
        out.push(("scaling_constant".into(), format!("{:.10}", self.scaling_constant)));
        out.push(("geometric_floor".into(), format!("{:.10}", self.geometric_floor)));
        for (axis, v) in ["x", "y", "z"].iter().zip(self.canceller.iter()) {
            out.push((format!("canceller_{axis}"), format!("{v:.10}")));
        }
        out.push(("kappa".into(), format!("{:.10}", self.kappa)));
        out.push(("a_star".into(), format!("{:.10}", self.a_star)));
        out.push(("prefactor".into(), format!("{:.10}", self.prefactor)));
        out
    }

    /// One `key=value` pair per line.
    pub fn to_kv(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Parses the `key=value` format written by [`AnalysisReport::to_kv`].
pub fn parse_kv(text: &str) -> Result<Vec<(String, f64)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: missing '='", i + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}
