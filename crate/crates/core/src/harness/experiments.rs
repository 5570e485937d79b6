use rayon::prelude::*;

use super::{asymptotic_threshold, fit_inverse_constant, spot_check, Scenario, SweepResult, SweepRow};
use crate::analysis::{self, floor_fraction_sweep, uniform_headings};
use crate::error::{ensure, Result};
use crate::forceqp::{self, QpWeights, SolverOptions};
use crate::model::{self, StanceConfig, Vec2, Vec3};
use crate::ocp::{self, collapse_rate_fit, BoundaryState, OcpOptions, OcpProblem, OcpWeights, PivotRule};

/// Rows re-solved after each sweep to confirm the stored values.
pub const SPOT_CHECKS: usize = 3;

pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi / lo).log10() * per_decade as f64).round() as usize;
    (0..=n)
        .map(|k| lo * 10f64.powf(k as f64 / per_decade as f64))
        .collect()
}

pub fn go1_stance() -> Result<StanceConfig> {
    StanceConfig::rectangle(0.188, 0.127, 12.0, 0.6)
}

pub fn go1_two_foot() -> Result<StanceConfig> {
    StanceConfig::diagonal_pair(0.188, 0.127, 12.0, 0.6)
}

pub fn pointmass_stance() -> Result<StanceConfig> {
    StanceConfig::rectangle(0.2, 0.15, 15.0, 0.7)
}

pub const GO1_HEIGHT: f64 = 0.27;
pub const POINTMASS_HEIGHT: f64 = 0.3;

fn failed_row(param: f64, width: usize, e: &crate::Error) -> SweepRow {
    SweepRow::failed(param, width, e)
}

fn collect_rows<F>(params: &[f64], width: usize, row: F) -> Vec<SweepRow>
where
    F: Fn(f64) -> Result<SweepRow> + Sync,
{
    params
        .par_iter()
        .map(|&p| row(p).unwrap_or_else(|e| failed_row(p, width, &e)))
        .collect()
}

fn finite_positive(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    points.iter().copied().filter(|p| p.1.is_finite() && p.1 > 0.0).collect()
}

fn put_slope(r: &mut SweepResult, key: &str, points: &[(f64, f64)]) {
    if let Ok((slope, _)) = collapse_rate_fit(&finite_positive(points)) {
        r.fitted.insert(key.into(), slope);
    }
}

// ---------------------------------------------------------------------------
// Fits shared by the sweeps and by reports rebuilt from stored CSVs

/// Slopes over the full grid and over `α ≥ threshold`, `K_e` on the latter,
/// and the first-to-last reduction of `column`.
pub fn fit_collapse(r: &mut SweepResult, column: &str, threshold: f64, gamma: f64) {
    let measured = r.finite_column(column);
    let tail: Vec<(f64, f64)> = measured.iter().copied().filter(|p| p.0 >= threshold).collect();
    r.fitted.insert("alpha_threshold".into(), threshold);
    r.fitted.insert("gamma".into(), gamma);
    put_slope(r, "slope_full", &measured);
    put_slope(r, "slope_asymptotic", &tail);
    if let Ok(k) = fit_inverse_constant(&finite_positive(&tail), gamma) {
        r.fitted.insert("K_e".into(), k);
    }
    if let (Some(first), Some(last)) = (measured.first(), measured.last()) {
        r.fitted.insert("reduction".into(), first.1 / last.1);
    }
    if let (Some(a1), Some(a1000)) = (r.value_at(column, 1.0), r.value_at(column, 1000.0)) {
        r.fitted.insert("reduction_1_to_1000".into(), a1 / a1000);
    }
}

/// Two-foot sweep against its `floor` column.
pub fn fit_floor(r: &mut SweepResult) {
    let floor = r.finite_column("floor");
    let measured = r.finite_column("hdot_over_m");
    if floor.is_empty() {
        return;
    }
    let floor = floor.iter().map(|p| p.1).sum::<f64>() / floor.len() as f64;
    r.fitted.insert("floor_mean".into(), floor);
    if let Some(&(a_max, v)) = measured.last() {
        r.fitted.insert("alpha_max".into(), a_max);
        r.fitted.insert("hdot_at_alpha_max".into(), v);
        r.fitted.insert("floor_rel_err".into(), (v - floor).abs() / floor);
    }
    if let (Some(first), Some(last)) = (measured.first(), measured.last()) {
        r.fitted.insert("reduction".into(), first.1 / last.1);
    }
    if let (Some(a1), Some(a1000)) = (r.value_at("hdot_over_m", 1.0), r.value_at("hdot_over_m", 1000.0)) {
        r.fitted.insert("reduction_1_to_1000".into(), a1 / a1000);
    }
}

/// Pivot, R² and tightness summaries of a trajectory sweep.
pub fn fit_trajectory(r: &mut SweepResult) {
    if let Some(r2) = r.value_at("lipm_r2", 100.0) {
        r.fitted.insert("lipm_r2_at_100".into(), r2);
    }
    let dev = r.finite_column("deviation_mm");
    put_slope(r, "deviation_slope_full", &dev);
    let low: Vec<(f64, f64)> = dev.iter().copied().filter(|p| p.0 <= 100.0).collect();
    put_slope(r, "deviation_slope_to_100", &low);
    let monotone = low.windows(2).all(|w| w[1].1 < w[0].1);
    r.fitted.insert("deviation_monotone_to_100".into(), if monotone { 1.0 } else { 0.0 });
    if let Some(&(a, d)) = dev.last() {
        r.fitted.insert("deviation_at_alpha_max".into(), d);
        r.overlays.insert("reference_alpha".into(), a);
    }
    let inside = r.finite_column("cop_inside_fraction");
    r.fitted.insert("cop_inside_min".into(), inside.iter().map(|p| p.1).fold(1.0, f64::min));
    let tight: Vec<f64> = r
        .finite_column("eps_pend_times_alpha")
        .into_iter()
        .filter(|p| p.0 >= 50.0)
        .map(|p| p.1)
        .collect();
    if !tight.is_empty() {
        let hi = tight.iter().copied().fold(0.0, f64::max);
        let lo = tight.iter().copied().fold(f64::INFINITY, f64::min);
        r.fitted.insert("tightness_ratio".into(), hi / lo);
    }
}

// ---------------------------------------------------------------------------
// Per-frame QP sweeps (Tests B and C)

#[derive(Debug, Clone, PartialEq)]
pub struct QpSweepConfig {
    pub scenario: Scenario,
    pub gamma: f64,
    pub alphas: Vec<f64>,
    pub solver: SolverOptions,
    /// Window over which the analytic scaling constant is averaged.
    pub long_window: f64,
    pub seed: u64,
}

impl QpSweepConfig {
    /// Four-foot Go1 sway.
    pub fn test_b() -> Result<Self> {
        Ok(Self {
            scenario: Scenario::sway(go1_stance()?, GO1_HEIGHT)?,
            gamma: 1.0,
            alphas: log_grid(1.0, 1000.0, 3),
            solver: SolverOptions::default(),
            long_window: 300.0,
            seed: 0,
        })
    }

    /// Diagonal-pair Go1 sway, pushed to large weights.
    pub fn test_c() -> Result<Self> {
        Ok(Self {
            scenario: Scenario::sway(go1_two_foot()?, GO1_HEIGHT)?,
            gamma: 1.0,
            alphas: log_grid(1.0, 1e5, 1),
            solver: SolverOptions::default(),
            long_window: 300.0,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        ensure(self.gamma > 0.0, "gamma", || format!("must be > 0, got {}", self.gamma))?;
        ensure(!self.alphas.is_empty() && self.alphas.iter().all(|&a| a > 0.0), "alphas", || {
            "need at least one positive weight".into()
        })?;
        ensure(self.long_window > 0.0, "long_window", || "must be > 0".into())
    }
}

/// Mean `‖Ḣ‖/m` of the QP over the scenario frames at one weight.
pub fn qp_row(cfg: &QpSweepConfig, alpha: f64) -> Result<SweepRow> {
    let sc = &cfg.scenario;
    let w = QpWeights::balance(alpha, cfg.gamma)?;
    let frames = sc.frames();
    let (mut sum, mut iters, mut resid) = (0.0, 0usize, 0.0f64);
    for fr in &frames {
        let f = model::required_net_force(&sc.stance, &fr.acc);
        let sol = forceqp::solve(&sc.stance, &fr.com, &f, &w, &cfg.solver)?;
        sum += sol.hdot.norm() / sc.stance.mass;
        iters = iters.max(sol.iterations);
        resid = resid.max(sol.primal_residual);
    }
    Ok(SweepRow {
        param: alpha,
        values: vec![sum / frames.len() as f64],
        solver_iters: iters,
        residual: resid,
        error: None,
    })
}

fn excitation_samples(sc: &Scenario, duration: f64) -> Result<Vec<Vec3>> {
    let long = Scenario {
        duration,
        ..sc.clone()
    };
    long.validate()?;
    Ok(long
        .frames()
        .iter()
        .map(|fr| model::excitation_baseline(&sc.stance, &fr.com, &fr.acc) / sc.stance.mass)
        .collect())
}

/// Four-foot collapse: measured `‖Ḣ‖/m` against the analytic `γ K_a / α`.
pub fn run_test_b(cfg: &QpSweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let sc = &cfg.scenario;
    let jac = analysis::moment_jacobian(&sc.stance, &sc.center)?;
    let k_long = analysis::scaling_constant(&jac, &excitation_samples(sc, cfg.long_window)?)?;
    let k_period = analysis::scaling_constant(&jac, &excitation_samples(sc, sc.duration)?)?;

    let rows = collect_rows(&cfg.alphas, 2, |a| {
        let mut r = qp_row(cfg, a)?;
        r.values.push(cfg.gamma * k_long / a);
        Ok(r)
    });
    let mut out = SweepResult::new("test_b", "alpha", &["hdot_over_m", "analytic_K_over_alpha"], rows);

    let sigma = jac.singular_values;
    for (k, s) in sigma.iter().enumerate() {
        out.fitted.insert(format!("sigma_{}", k + 1), *s);
    }
    out.fitted.insert("K_a".into(), k_long);
    out.fitted.insert("K_a_one_period".into(), k_period);
    fit_collapse(&mut out, "hdot_over_m", asymptotic_threshold(sigma[2], cfg.gamma), cfg.gamma);
    if let Some(k_e) = out.fitted.get("K_e").copied() {
        out.fitted.insert("K_e_over_K_a".into(), k_e / k_long);
    }
    out.overlays.insert("K_a".into(), k_long);
    let check = spot_check(&out, super::SPOT_CHECKS, cfg.seed, |a| qp_row(cfg, a))?;
    out.fitted.insert("spot_check_max_rel_diff".into(), check);
    Ok(out)
}

/// Two-foot plateau: measured `‖Ḣ‖/m` against the geometric floor.
pub fn run_test_c(cfg: &QpSweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let sc = &cfg.scenario;
    let frames = sc.frames();
    let mut floor_sum = 0.0;
    for fr in &frames {
        let f = model::required_net_force(&sc.stance, &fr.acc);
        floor_sum += analysis::geometric_floor(&sc.stance, &fr.com, &f)?.geometric_floor;
    }
    let floor = floor_sum / frames.len() as f64;

    let rows = collect_rows(&cfg.alphas, 2, |a| {
        let mut r = qp_row(cfg, a)?;
        r.values.push(floor);
        Ok(r)
    });
    let mut out = SweepResult::new("test_c", "alpha", &["hdot_over_m", "floor"], rows);
    fit_floor(&mut out);
    let fractions: Vec<f64> = floor_fraction_sweep(&sc.stance, &sc.center, &uniform_headings(7), 1.0)?
        .into_iter()
        .flatten()
        .collect();
    if !fractions.is_empty() {
        let n = fractions.len() as f64;
        out.fitted.insert("floor_fraction_mean".into(), fractions.iter().sum::<f64>() / n);
        out.fitted.insert("floor_fraction_min".into(), fractions.iter().copied().fold(f64::INFINITY, f64::min));
        out.fitted.insert("floor_fraction_max".into(), fractions.iter().copied().fold(0.0, f64::max));
    }
    out.overlays.insert("floor".into(), floor);
    let check = spot_check(&out, super::SPOT_CHECKS, cfg.seed, |a| qp_row(cfg, a))?;
    out.fitted.insert("spot_check_max_rel_diff".into(), check);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Trajectory sweeps (Tests A and E)

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSweepConfig {
    pub stance: StanceConfig,
    pub height: f64,
    /// Rest-to-rest CoM displacement in the ground plane.
    pub offset: Vec2,
    pub horizon: f64,
    pub knots: usize,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub alphas: Vec<f64>,
    pub options: OcpOptions,
    pub seed: u64,
}

impl OcpSweepConfig {
    /// Point mass, 5 cm lateral shift in 3 s.
    pub fn test_a() -> Result<Self> {
        Ok(Self {
            stance: pointmass_stance()?,
            height: POINTMASS_HEIGHT,
            offset: Vec2::new(0.0, 0.05),
            horizon: 3.0,
            knots: 60,
            beta: 1.0,
            gamma: 1.0,
            lambda: 0.0,
            alphas: vec![1.0, 5.0, 10.0, 50.0, 100.0, 250.0, 500.0, 1000.0],
            options: OcpOptions::default(),
            seed: 0,
        })
    }

    /// Same motion with a heavy vertical-acceleration penalty.
    pub fn test_e() -> Result<Self> {
        Ok(Self {
            beta: 1000.0,
            alphas: vec![5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0],
            ..Self::test_a()?
        })
    }

    pub fn problem(&self, alpha: f64) -> Result<OcpProblem> {
        let c = self.stance.centroid();
        let start = Vec3::new(c.x, c.y, self.height);
        OcpProblem::new(
            self.stance.clone(),
            self.horizon,
            self.knots,
            OcpWeights::new(alpha, self.beta, self.gamma, self.lambda)?,
            BoundaryState::at_rest(start),
            BoundaryState::at_rest(ocp::lateral_offset(&start, &self.offset)),
        )
    }

    pub fn validate(&self) -> Result<()> {
        ensure(!self.alphas.is_empty() && self.alphas.iter().all(|&a| a > 0.0), "alphas", || {
            "need at least one positive weight".into()
        })?;
        self.problem(self.alphas[0]).map(|_| ())
    }
}

pub const OCP_COLUMNS: [&str; 7] = [
    "eps_h",
    "eps_pend",
    "lipm_r2",
    "eps_pend_times_alpha",
    "deviation_mm",
    "cop_inside_fraction",
    "mean_az_sq",
];

/// Solves one weight and reduces the trajectory to the sweep columns.
pub fn ocp_row(cfg: &OcpSweepConfig, alpha: f64) -> Result<SweepRow> {
    let problem = cfg.problem(alpha)?;
    let sol = ocp::solve_ocp_with_status(&problem, &cfg.options)?;
    let stance = &cfg.stance;
    let dev = sol.pivots(stance, &problem.normal, PivotRule::DeviationMinimizer);
    let n = sol.com_traj.len() as f64;
    let deviation = sol
        .com_traj
        .iter()
        .zip(&dev)
        .map(|(s, p)| (s.pivot.xy() - p.xy()).norm())
        .sum::<f64>()
        / n;
    let inside = sol
        .com_traj
        .iter()
        .filter(|s| stance.support_contains(&s.pivot.xy(), 1e-9))
        .count() as f64
        / n;
    let az = sol.com_traj.iter().map(|s| s.com_acc.z.powi(2)).sum::<f64>() / n;
    let d = sol.diagnostics;
    Ok(SweepRow {
        param: alpha,
        values: vec![
            sol.eps_h,
            sol.eps_pend,
            sol.lipm_r2.unwrap_or(f64::NAN),
            sol.eps_pend * alpha,
            deviation * 1e3,
            inside,
            az,
        ],
        solver_iters: d.inner_iterations,
        residual: d.bc_error.max(d.cone_violation),
        error: (!d.converged).then(|| {
            format!(
                "not converged (bc {:.2e}, cone {:.2e}, stationarity {:.2e})",
                d.bc_error, d.cone_violation, d.stationarity
            )
        }),
    })
}

fn run_ocp_sweep(test: &str, cfg: &OcpSweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let rows = collect_rows(&cfg.alphas, OCP_COLUMNS.len(), |a| ocp_row(cfg, a));
    let mut out = SweepResult::new(test, "alpha", &OCP_COLUMNS, rows);

    let jac = analysis::moment_jacobian(&cfg.stance, &Vec3::new(0.0, 0.0, cfg.height))?;
    fit_collapse(&mut out, "eps_h", asymptotic_threshold(jac.singular_values[2], cfg.gamma), cfg.gamma);
    fit_trajectory(&mut out);
    // reference lines: γ K_e / α, and 1/α through the first deviation point
    let k_e = out.fitted.get("K_e").copied();
    let dev0 = out.finite_column("deviation_mm").first().copied();
    out.columns.extend(["eps_h_ref".to_string(), "deviation_ref".to_string()]);
    for row in &mut out.rows {
        row.values.push(k_e.map_or(f64::NAN, |k| cfg.gamma * k / row.param));
        row.values.push(dev0.map_or(f64::NAN, |(a0, d0)| d0 * a0 / row.param));
    }
    let check = spot_check(&out, super::SPOT_CHECKS, cfg.seed, |a| ocp_row(cfg, a))?;
    out.fitted.insert("spot_check_max_rel_diff".into(), check);
    Ok(out)
}

/// Trajectory-level collapse of `ε_H`.
pub fn run_test_a(cfg: &OcpSweepConfig) -> Result<SweepResult> {
    run_ocp_sweep("test_a", cfg)
}

/// Pivot agreement with a heavy vertical-acceleration penalty.
pub fn run_test_e(cfg: &OcpSweepConfig) -> Result<SweepResult> {
    run_ocp_sweep("test_e", cfg)
}

// ---------------------------------------------------------------------------
// Friction kink

#[derive(Debug, Clone, PartialEq)]
pub struct KinkConfig {
    pub stance: StanceConfig,
    pub height: f64,
    pub mu: f64,
    /// Increasing fore–aft accelerations, m/s².
    pub accel_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
    /// Fore–aft acceleration held fixed in the μ sweep.
    pub mu_sweep_accel: f64,
}

impl KinkConfig {
    pub fn go1() -> Result<Self> {
        Ok(Self {
            stance: go1_two_foot()?,
            height: GO1_HEIGHT,
            mu: 0.6,
            accel_grid: (0..=140).map(|k| 3.0 + 0.02 * k as f64).collect(),
            mu_grid: (0..=20).map(|k| 0.6 + 0.03 * k as f64).collect(),
            mu_sweep_accel: 3.0,
        })
    }

    fn com(&self) -> Vec3 {
        let c = self.stance.centroid();
        Vec3::new(c.x, c.y, self.height)
    }
}

pub fn run_kink(cfg: &KinkConfig) -> Result<SweepResult> {
    let com = cfg.com();
    let rep = analysis::kink_analysis(&cfg.stance, &com, cfg.mu, &cfg.accel_grid)?;
    let rows = rep
        .curve
        .iter()
        .map(|r| SweepRow {
            param: r.a_x,
            values: vec![r.floor, r.qp_inf, r.canceller_inf],
            solver_iters: r.iterations,
            residual: r.residual,
            error: None,
        })
        .collect();
    let mut out = SweepResult::new("kink", "a_x", &["floor", "qp_inf", "canceller_inf"], rows);
    out.fitted.insert("kappa".into(), rep.kappa);
    out.fitted.insert("a_star".into(), rep.a_star);
    out.fitted.insert("left_slope".into(), rep.left_slope);
    out.fitted.insert("right_slope".into(), rep.right_slope);
    out.fitted.insert("canceller_left_slope".into(), rep.canceller_left_slope);
    out.fitted.insert("canceller_right_slope".into(), rep.canceller_right_slope);
    if let Some(d) = rep.qp_departure {
        out.fitted.insert("qp_departure".into(), d);
    }
    let below = rep.curve.iter().filter(|r| r.a_x < rep.a_star);
    let max_gap = below.map(|r| (r.qp_inf - r.floor).abs()).fold(0.0, f64::max);
    out.fitted.insert("max_floor_gap_below_a_star".into(), max_gap);
    out.overlays.insert("a_star".into(), rep.a_star);
    Ok(out)
}

/// `inf_α ‖Ḣ‖/m` versus μ at fixed acceleration.
pub fn run_kink_mu(cfg: &KinkConfig) -> Result<SweepResult> {
    let com = cfg.com();
    let curve = analysis::mu_sweep_no_kink(&cfg.stance, &com, cfg.mu_sweep_accel, &cfg.mu_grid)?;
    let rows = curve
        .iter()
        .map(|&(mu, v)| {
            let f = model::required_net_force(&cfg.stance, &Vec3::new(cfg.mu_sweep_accel, 0.0, 0.0));
            let floor = analysis::geometric_floor(&cfg.stance, &com, &f).map(|r| r.geometric_floor);
            SweepRow {
                param: mu,
                values: vec![v, floor.unwrap_or(f64::NAN)],
                solver_iters: 0,
                residual: 0.0,
                error: None,
            }
        })
        .collect();
    let mut out = SweepResult::new("kink_mu", "mu", &["qp_inf", "floor"], rows);
    let pts = out.finite_column("qp_inf");
    out.fitted.insert("max_slope_jump".into(), analysis::max_slope_jump(&pts));
    out.fitted.insert("a_x".into(), cfg.mu_sweep_accel);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Task prefactor

#[derive(Debug, Clone, PartialEq)]
pub struct PrefactorConfig {
    pub stance: StanceConfig,
    pub height: f64,
    pub alpha: f64,
    /// Kept tiny so the task term is reproduced exactly.
    pub gamma: f64,
    pub lambda_over_alpha: Vec<f64>,
    /// Angular-momentum-rate target, N·m.
    pub task: Vec3,
    pub solver: SolverOptions,
}

impl PrefactorConfig {
    pub fn go1() -> Result<Self> {
        Ok(Self {
            stance: go1_stance()?,
            height: GO1_HEIGHT,
            alpha: 1.0,
            gamma: 1e-9,
            lambda_over_alpha: log_grid(0.01, 100.0, 2),
            task: Vec3::new(0.5, -0.3, 0.2),
            solver: SolverOptions::default(),
        })
    }
}

/// Static stance with the CoM over the centroid, so only the task drives `Ḣ`.
pub fn prefactor_row(cfg: &PrefactorConfig, ratio: f64) -> Result<SweepRow> {
    let c = cfg.stance.centroid();
    let com = Vec3::new(c.x, c.y, cfg.height);
    let lambda = ratio * cfg.alpha;
    let w = QpWeights::new(cfg.alpha, cfg.gamma, lambda, cfg.task)?;
    let f = model::required_net_force(&cfg.stance, &Vec3::zeros());
    let sol = forceqp::solve(&cfg.stance, &com, &f, &w, &cfg.solver)?;
    let t2 = cfg.task.norm_squared();
    ensure(t2 > 0.0, "task", || "must be non-zero".into())?;
    let measured = sol.hdot.dot(&cfg.task) / t2;
    let predicted = analysis::task_prefactor(cfg.alpha, lambda)?;
    let off_axis = (sol.hdot - cfg.task * measured).norm() / t2.sqrt();
    Ok(SweepRow {
        param: ratio,
        values: vec![measured, predicted, off_axis],
        solver_iters: sol.iterations,
        residual: sol.primal_residual,
        error: None,
    })
}

pub fn run_prefactor(cfg: &PrefactorConfig) -> Result<SweepResult> {
    ensure(!cfg.lambda_over_alpha.is_empty(), "lambda_over_alpha", || "empty grid".into())?;
    let rows = collect_rows(&cfg.lambda_over_alpha, 3, |r| prefactor_row(cfg, r));
    let mut out = SweepResult::new("prefactor", "lambda_over_alpha", &["measured", "analytic", "off_axis"], rows);
    let worst = out
        .rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| (r.values[0] - r.values[1]).abs())
        .fold(0.0, f64::max);
    out.fitted.insert("max_abs_err".into(), worst);
    if let Some(v) = out.value_at("measured", 1.0) {
        out.fitted.insert("measured_at_equal_weights".into(), v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1.0, 1000.0, 3);
        assert_eq!(g.len(), 10);
        assert!((g[9] - 1000.0).abs() < 1e-9);
        assert!((g[3] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn prefactor_half_at_equal_weights() {
        let cfg = PrefactorConfig {
            lambda_over_alpha: vec![1.0],
            ..PrefactorConfig::go1().unwrap()
        };
        let r = run_prefactor(&cfg).unwrap();
        assert!((r.rows[0].values[0] - 0.5).abs() < 1e-6);
        assert!(r.rows[0].values[2] < 1e-6);
    }

    #[test]
    fn failed_rows_keep_their_slot() {
        // a negative weight is rejected per row, the rest still run
        let mut cfg = QpSweepConfig::test_b().unwrap();
        cfg.alphas = vec![1.0, 10.0];
        cfg.scenario.duration = 0.1;
        let rows = collect_rows(&[-1.0, 1.0], 1, |a| qp_row(&cfg, a));
        assert!(rows[0].error.is_some() && rows[0].values[0].is_nan());
        assert!(rows[1].error.is_none());
    }
}
