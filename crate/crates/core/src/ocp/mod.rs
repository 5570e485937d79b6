//! Trajectory-level force optimization by direct transcription.
//!
//! Decision variables are the contact forces at `K` knots. The CoM follows
//! from semi-implicit Euler integration of Newton's law, the running cost is
//! integrated with the trapezoidal rule, and friction cones plus the terminal
//! state are handled by an augmented Lagrangian whose inner problems are
//! solved with L-BFGS on adjoint gradients.

pub mod lbfgs;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::forceqp::admm::project_friction_cone;
use crate::model::{self, CentroidalState, StanceConfig, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl BoundaryState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl OcpWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64, lambda: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("lambda", lambda)] {
            ensure(v >= 0.0 && v.is_finite(), name, || format!("must be finite and ≥ 0, got {v}"))?;
        }
        ensure(gamma > 0.0 && gamma.is_finite(), "gamma", || format!("must be > 0, got {gamma}"))?;
        Ok(Self {
            alpha,
            beta,
            gamma,
            lambda,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpProblem {
    pub stance: StanceConfig,
    /// Horizon `T` in seconds.
    pub horizon: f64,
    pub knots: usize,
    pub weights: OcpWeights,
    /// Empty, or one target per knot.
    pub hdot_task: Vec<Vec3>,
    pub normal: Vec3,
    pub initial: BoundaryState,
    pub terminal: BoundaryState,
}

impl OcpProblem {
    pub fn new(
        stance: StanceConfig,
        horizon: f64,
        knots: usize,
        weights: OcpWeights,
        initial: BoundaryState,
        terminal: BoundaryState,
    ) -> Result<Self> {
        let p = Self {
            stance,
            horizon,
            knots,
            weights,
            hdot_task: Vec::new(),
            normal: Vec3::z(),
            initial,
            terminal,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_task(mut self, hdot_task: Vec<Vec3>) -> Result<Self> {
        self.hdot_task = hdot_task;
        self.validate()?;
        Ok(self)
    }

    pub fn with_normal(mut self, normal: Vec3) -> Result<Self> {
        ensure(normal.norm() > 1e-12, "normal", || "must be non-zero".into())?;
        self.normal = normal.normalize();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.horizon > 0.0 && self.horizon.is_finite(), "horizon", || {
            format!("must be > 0, got {}", self.horizon)
        })?;
        ensure(self.knots >= 2, "knots", || format!("must be ≥ 2, got {}", self.knots))?;
        ensure(!self.stance.is_empty(), "stance", || "no contacts".into())?;
        OcpWeights::new(self.weights.alpha, self.weights.beta, self.weights.gamma, self.weights.lambda)?;
        ensure(self.hdot_task.is_empty() || self.hdot_task.len() == self.knots, "hdot_task", || {
            format!("expected 0 or {} samples, got {}", self.knots, self.hdot_task.len())
        })?;
        ensure((self.normal.norm() - 1.0).abs() < 1e-9, "normal", || "must be a unit vector".into())?;
        for (name, b) in [("initial", &self.initial), ("terminal", &self.terminal)] {
            ensure(
                b.position.iter().chain(b.velocity.iter()).all(|v| v.is_finite()),
                name,
                || "boundary state must be finite".into(),
            )?;
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.knots - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.knots).map(|k| k as f64 * self.dt()).collect()
    }

    fn task(&self, k: usize) -> Vec3 {
        self.hdot_task.get(k).copied().unwrap_or_else(Vec3::zeros)
    }

    fn n_vars(&self) -> usize {
        3 * self.stance.len() * self.knots
    }

    fn quad_weight(&self, k: usize) -> f64 {
        let end = k == 0 || k + 1 == self.knots;
        self.dt() * if end { 0.5 } else { 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpOptions {
    /// Stationarity tolerance on the scaled augmented Lagrangian.
    pub tol: f64,
    /// Terminal position (m) and velocity (m/s) tolerance.
    pub bc_tol: f64,
    /// Cone violation tolerance relative to the body weight.
    pub cone_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub memory: usize,
}

impl Default for OcpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            bc_tol: 1e-6,
            cone_tol: 1e-7,
            max_outer: 30,
            max_inner: 20_000,
            memory: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub com: Vec<Vec3>,
    pub vel: Vec<Vec3>,
    pub acc: Vec<Vec3>,
}

/// Trapezoidal integration of Newton's law between knots:
/// `v⁺ = v + dt (a + a⁺)/2`, `c⁺ = c + dt (v + v⁺)/2`.
pub fn integrate(stance: &StanceConfig, initial: &BoundaryState, dt: f64, forces: &[Vec<Vec3>]) -> Trajectory {
    let g = Vec3::new(0.0, 0.0, -stance.gravity);
    let acc: Vec<Vec3> = forces.iter().map(|fk| fk.iter().sum::<Vec3>() / stance.mass + g).collect();
    let (com, vel) = propagate(initial, dt, &acc);
    Trajectory { com, vel, acc }
}

fn propagate(initial: &BoundaryState, dt: f64, acc: &[Vec3]) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut com = Vec::with_capacity(acc.len());
    let mut vel = Vec::with_capacity(acc.len());
    let (mut c, mut v) = (initial.position, initial.velocity);
    for k in 0..acc.len() {
        com.push(c);
        vel.push(v);
        if k + 1 < acc.len() {
            let v_next = v + (acc[k] + acc[k + 1]) * (0.5 * dt);
            c += (v + v_next) * (0.5 * dt);
            v = v_next;
        }
    }
    (com, vel)
}

fn vec3_at(x: &[f64], j: usize) -> Vec3 {
    Vec3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2])
}

fn add_at(g: &mut [f64], j: usize, v: &Vec3) {
    g[3 * j] += v.x;
    g[3 * j + 1] += v.y;
    g[3 * j + 2] += v.z;
}

fn flatten(forces: &[Vec<Vec3>]) -> Vec<f64> {
    forces.iter().flatten().flat_map(|f| [f.x, f.y, f.z]).collect()
}

fn unflatten(x: &[f64], n: usize, scale: f64) -> Vec<Vec<Vec3>> {
    x.chunks(3 * n)
        .map(|row| (0..n).map(|i| vec3_at(row, i) * scale).collect())
        .collect()
}

/// Terminal penalty `y·e + ρ/2 ‖e‖²` on `e = (c_T − c*, v_T − v*)`.
struct TerminalPenalty {
    y: [f64; 6],
    rho: f64,
}

struct Evaluation {
    cost: f64,
    penalty: f64,
    terminal_error: [f64; 6],
}

impl OcpProblem {
    /// Running cost, plus the gradient of `cost / cost_scale + penalty` with
    /// respect to the physical forces (`f` flattened knot-major).
    fn evaluate(&self, f: &[f64], grad: Option<&mut [f64]>, terminal: Option<&TerminalPenalty>, cost_scale: f64) -> Evaluation {
        let n = self.stance.len();
        let kk = self.knots;
        let dt = self.dt();
        let m = self.stance.mass;
        let w = &self.weights;
        let nrm = self.normal;
        let positions = self.stance.positions();
        let g_vec = Vec3::new(0.0, 0.0, -self.stance.gravity);

        let net: Vec<Vec3> = (0..kk).map(|k| (0..n).map(|i| vec3_at(f, k * n + i)).sum()).collect();
        let acc: Vec<Vec3> = net.iter().map(|fk| fk / m + g_vec).collect();
        let (com, vel) = propagate(&self.initial, dt, &acc);

        let mut cost = 0.0;
        let mut grad_h = Vec::with_capacity(kk);
        let mut grad_an = Vec::with_capacity(kk);
        for k in 0..kk {
            let wq = self.quad_weight(k);
            let mut h = Vec3::zeros();
            let mut fsq = 0.0;
            for i in 0..n {
                let fi = vec3_at(f, k * n + i);
                h += (positions[i] - com[k]).cross(&fi);
                fsq += fi.norm_squared();
            }
            let an = nrm.dot(&acc[k]);
            let dev = h - self.task(k);
            cost += wq * (w.alpha * h.norm_squared() + w.lambda * dev.norm_squared() + w.beta * an * an + w.gamma * fsq);
            grad_h.push((h * w.alpha + dev * w.lambda) * (2.0 * wq / cost_scale));
            grad_an.push(2.0 * wq * w.beta * an / cost_scale);
        }

        let e_c = com[kk - 1] - self.terminal.position;
        let e_v = vel[kk - 1] - self.terminal.velocity;
        let terminal_error = [e_c.x, e_c.y, e_c.z, e_v.x, e_v.y, e_v.z];
        let mut penalty = 0.0;
        let (mut lam_c, mut lam_v) = (Vec3::zeros(), Vec3::zeros());
        if let Some(tp) = terminal {
            for j in 0..6 {
                penalty += tp.y[j] * terminal_error[j] + 0.5 * tp.rho * terminal_error[j].powi(2);
            }
            let d: Vec<f64> = (0..6).map(|j| tp.y[j] + tp.rho * terminal_error[j]).collect();
            lam_c = Vec3::new(d[0], d[1], d[2]);
            lam_v = Vec3::new(d[3], d[4], d[5]);
        }

        if let Some(grad) = grad {
            grad.iter_mut().for_each(|g| *g = 0.0);
            // adjoints of the knot states, then of the accelerations
            let mut adj_c = vec![Vec3::zeros(); kk];
            let mut adj_v = vec![Vec3::zeros(); kk];
            adj_c[kk - 1] = lam_c + grad_h[kk - 1].cross(&net[kk - 1]);
            adj_v[kk - 1] = lam_v;
            for k in (0..kk - 1).rev() {
                adj_c[k] = grad_h[k].cross(&net[k]) + adj_c[k + 1];
                adj_v[k] = adj_v[k + 1] + adj_c[k + 1] * dt;
            }
            let step = |s: usize| adj_v[s] * (0.5 * dt) + adj_c[s] * (0.25 * dt * dt);
            for k in 0..kk {
                let mut dyn_a = Vec3::zeros();
                if k >= 1 {
                    dyn_a += step(k);
                }
                if k + 1 < kk {
                    dyn_a += step(k + 1);
                }
                let common = (dyn_a + nrm * grad_an[k]) / m;
                for i in 0..n {
                    let j = k * n + i;
                    let fi = vec3_at(f, j);
                    let gi = grad_h[k].cross(&(positions[i] - com[k])) + fi * (2.0 * self.quad_weight(k) * w.gamma / cost_scale) + common;
                    add_at(grad, j, &gi);
                }
            }
        }

        Evaluation {
            cost,
            penalty,
            terminal_error,
        }
    }
}

/// Trapezoidal running cost of a force trajectory and its gradient.
pub fn cost_and_gradient(problem: &OcpProblem, forces: &[Vec<Vec3>]) -> Result<(f64, Vec<Vec<Vec3>>)> {
    problem.validate()?;
    check_shape(problem, forces)?;
    let f = flatten(forces);
    let mut g = vec![0.0; f.len()];
    let ev = problem.evaluate(&f, Some(&mut g), None, 1.0);
    Ok((ev.cost, unflatten(&g, problem.stance.len(), 1.0)))
}

fn check_shape(problem: &OcpProblem, forces: &[Vec<Vec3>]) -> Result<()> {
    if forces.len() != problem.knots {
        return Err(Error::Dimension {
            expected: problem.knots,
            got: forces.len(),
        });
    }
    if let Some(row) = forces.iter().find(|r| r.len() != problem.stance.len()) {
        return Err(Error::Dimension {
            expected: problem.stance.len(),
            got: row.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PivotRule {
    /// Centre of pressure of the contact forces.
    CenterOfPressure,
    /// Point of the support region minimizing `‖F/m − (g/h)(c − p)‖`.
    DeviationMinimizer,
}

/// Ground height along the problem normal, taken at the contact centroid.
fn ground_point(stance: &StanceConfig) -> Vec3 {
    stance.centroid()
}

pub fn pivot_point(stance: &StanceConfig, normal: &Vec3, com: &Vec3, forces: &[Vec3], rule: PivotRule) -> Vec3 {
    let ground = ground_point(stance);
    let h = normal.dot(&(com - ground));
    let xy = match rule {
        PivotRule::CenterOfPressure => model::center_of_pressure(&stance.positions(), forces)
            .unwrap_or_else(|| com.xy()),
        PivotRule::DeviationMinimizer => {
            let f: Vec3 = forces.iter().sum();
            let best = com.xy() - f.xy() * (h / stance.weight());
            stance.clamp_to_support(&best)
        }
    };
    Vec3::new(xy.x, xy.y, ground.z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcpMetrics {
    /// Time average of `‖F/m − (g/h)(c − p)‖`, m/s².
    pub eps_pend: f64,
    /// Time average of `‖Ḣ‖`, N·m.
    pub eps_h: f64,
    /// Coefficient of determination of `c̈_xy` against `(g/h)(c_xy − p_xy)`;
    /// `None` when `c̈_xy` has no variance.
    pub lipm_r2: Option<f64>,
}

fn trapezoid_mean(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return values.first().copied().unwrap_or(0.0);
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    (inner + 0.5 * (values[0] + values[n - 1])) / (n - 1) as f64
}

/// Metrics of a knot trajectory; pivots are taken from `traj`.
pub fn trajectory_metrics(stance: &StanceConfig, normal: &Vec3, traj: &[CentroidalState], forces: &[Vec<Vec3>]) -> Result<OcpMetrics> {
    if traj.len() != forces.len() || traj.is_empty() {
        return Err(Error::Dimension {
            expected: traj.len(),
            got: forces.len(),
        });
    }
    let g = stance.gravity;
    let positions = stance.positions();
    let mut pend = Vec::with_capacity(traj.len());
    let mut hd = Vec::with_capacity(traj.len());
    let mut obs: Vec<f64> = Vec::new();
    let mut pred: Vec<f64> = Vec::new();
    for (s, fk) in traj.iter().zip(forces) {
        let h = normal.dot(&(s.com - s.pivot));
        if !(h >= stance.h_min) {
            return Err(Error::DegenerateStance(format!("CoM height {h:.4} m below h_min")));
        }
        let f: Vec3 = fk.iter().sum();
        pend.push((f / stance.mass - (s.com - s.pivot) * (g / h)).norm());
        hd.push(model::contact_moment(&positions, &s.com, fk).norm());
        let lipm = (s.com.xy() - s.pivot.xy()) * (g / h);
        obs.extend([s.com_acc.x, s.com_acc.y]);
        pred.extend([lipm.x, lipm.y]);
    }
    Ok(OcpMetrics {
        eps_pend: trapezoid_mean(&pend),
        eps_h: trapezoid_mean(&hd),
        lipm_r2: r_squared(&obs, &pred),
    })
}

/// `1 − SS_res / SS_tot`, `None` for zero-variance observations.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Option<f64> {
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    let scale = observed.iter().fold(0.0f64, |m, o| m.max(o.abs())).max(1e-300);
    if ss_tot <= (1e-12 * scale).powi(2) * n {
        return None;
    }
    let ss_res: f64 = observed.iter().zip(predicted).map(|(o, p)| (o - p).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// `‖∇L‖∞` of the last inner solve (scaled units).
    pub stationarity: f64,
    /// `‖e‖∞` of the terminal error.
    pub bc_error: f64,
    /// Largest distance of a knot force from its cone, N.
    pub cone_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub times: Vec<f64>,
    /// `knots × contacts`.
    pub knot_forces: Vec<Vec<Vec3>>,
    /// Pivots follow [`PivotRule::CenterOfPressure`].
    pub com_traj: Vec<CentroidalState>,
    pub hdot: Vec<Vec3>,
    /// Trapezoidal running cost.
    pub objective: f64,
    pub eps_h: f64,
    pub eps_pend: f64,
    pub lipm_r2: Option<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl OcpSolution {
    /// Pivots under `rule`, one per knot.
    pub fn pivots(&self, stance: &StanceConfig, normal: &Vec3, rule: PivotRule) -> Vec<Vec3> {
        self.com_traj
            .iter()
            .zip(&self.knot_forces)
            .map(|(s, f)| pivot_point(stance, normal, &s.com, f, rule))
            .collect()
    }

    /// One row per knot.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.knot_forces.first().map_or(0, |r| r.len());
        let mut header = String::from("t,cx,cy,cz,vx,vy,vz,ax,ay,az,px,py,hx,hy,hz");
        for i in 0..n {
            header.push_str(&format!(",f{i}x,f{i}y,f{i}z"));
        }
        writeln!(w, "{header}")?;
        for k in 0..self.times.len() {
            let s = &self.com_traj[k];
            let mut row = format!("{:.6}", self.times[k]);
            for v in [s.com, s.com_vel, s.com_acc] {
                row.push_str(&format!(",{:.9e},{:.9e},{:.9e}", v.x, v.y, v.z));
            }
            row.push_str(&format!(",{:.9e},{:.9e}", s.pivot.x, s.pivot.y));
            let h = self.hdot[k];
            row.push_str(&format!(",{:.9e},{:.9e},{:.9e}", h.x, h.y, h.z));
            for f in &self.knot_forces[k] {
                row.push_str(&format!(",{:.9e},{:.9e},{:.9e}", f.x, f.y, f.z));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Metrics recomputed from a solution under a pivot rule.
pub fn metrics(sol: &OcpSolution, stance: &StanceConfig, normal: &Vec3, rule: PivotRule) -> Result<OcpMetrics> {
    let traj: Vec<CentroidalState> = sol
        .com_traj
        .iter()
        .zip(sol.pivots(stance, normal, rule))
        .map(|(s, p)| CentroidalState::with_normal(s.com, s.com_vel, s.com_acc, p, normal))
        .collect();
    trajectory_metrics(stance, normal, &traj, &sol.knot_forces)
}

/// Least-squares slope and intercept of `log eps` against `log alpha`.
pub fn collapse_rate_fit(sweep: &[(f64, f64)]) -> Result<(f64, f64)> {
    ensure(sweep.len() >= 4, "sweep", || format!("need at least 4 points, got {}", sweep.len()))?;
    ensure(sweep.iter().all(|&(a, e)| a > 0.0 && e > 0.0), "sweep", || "values must be positive".into())?;
    let pts: Vec<(f64, f64)> = sweep.iter().map(|&(a, e)| (a.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    ensure(sxx > 0.0, "sweep", || "alpha values must not all be equal".into())?;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Smooth initial guess: cubic Hermite CoM path, equal-split forces.
fn initial_guess(problem: &OcpProblem, scale: f64) -> Vec<f64> {
    let n = problem.stance.len();
    let t = problem.horizon;
    let (p0, p1) = (problem.initial.position, problem.terminal.position);
    let (v0, v1) = (problem.initial.velocity * t, problem.terminal.velocity * t);
    let mut x = Vec::with_capacity(problem.n_vars());
    for k in 0..problem.knots {
        let s = k as f64 / (problem.knots - 1) as f64;
        let acc = (p0 * (12.0 * s - 6.0) + v0 * (6.0 * s - 4.0) + p1 * (6.0 - 12.0 * s) + v1 * (6.0 * s - 2.0)) / (t * t);
        let f = model::required_net_force(&problem.stance, &acc) / (n as f64 * scale);
        for _ in 0..n {
            x.extend([f.x, f.y, f.z]);
        }
    }
    x
}

const RHO_MAX: f64 = 1e12;

/// Solves the transcribed problem, returning the last iterate together with
/// its diagnostics even when the tolerances are not met.
pub fn solve_ocp_with_status(problem: &OcpProblem, opts: &OcpOptions) -> Result<OcpSolution> {
    problem.validate()?;
    ensure(opts.tol > 0.0 && opts.bc_tol > 0.0 && opts.cone_tol > 0.0, "tolerances", || "must be > 0".into())?;
    let n = problem.stance.len();
    let kk = problem.knots;
    let fs = problem.stance.weight();
    let cost_scale = fs * fs * problem.horizon;
    let cones: Vec<_> = problem.stance.contacts.iter().map(|c| (c.normal, c.mu)).collect();

    let mut x = initial_guess(problem, fs);
    let mut y_cone = vec![0.0; x.len()];
    let mut rho_cone = 10.0;
    let mut tp = TerminalPenalty {
        y: [0.0; 6],
        rho: 10.0,
    };
    let mut inner_total = 0;
    let mut prev_bc = f64::INFINITY;
    let mut prev_cone = f64::INFINITY;
    let mut diag = SolveDiagnostics {
        converged: false,
        outer_iterations: 0,
        inner_iterations: 0,
        stationarity: f64::INFINITY,
        bc_error: f64::INFINITY,
        cone_violation: f64::INFINITY,
    };
    let mut fbuf = vec![0.0; x.len()];
    let mut gbuf = vec![0.0; x.len()];

    for outer in 0..opts.max_outer {
        let inner_tol = (1e-3 * 0.1f64.powi(outer as i32)).max(opts.tol);
        let lb = lbfgs::LbfgsOptions {
            memory: opts.memory,
            grad_tol: inner_tol,
            max_iter: opts.max_inner,
        };
        let out = lbfgs::minimize(
            |xs, g| {
                fbuf.iter_mut().zip(xs).for_each(|(f, v)| *f = v * fs);
                let ev = problem.evaluate(&fbuf, Some(&mut gbuf), Some(&tp), cost_scale);
                let mut val = ev.cost / cost_scale + ev.penalty;
                for (gi, gb) in g.iter_mut().zip(&gbuf) {
                    *gi = gb * fs;
                }
                for j in 0..n * kk {
                    let (nrm, mu) = cones[j % n];
                    let w = vec3_at(xs, j) + vec3_at(&y_cone, j) / rho_cone;
                    let polar = w - project_friction_cone(&w, &nrm, mu);
                    val += 0.5 * rho_cone * polar.norm_squared() - vec3_at(&y_cone, j).norm_squared() / (2.0 * rho_cone);
                    add_at(g, j, &(polar * rho_cone));
                }
                val
            },
            x,
            &lb,
        );
        x = out.x;
        inner_total += out.iterations;

        // multiplier updates
        let mut cone_viol = 0.0f64;
        for j in 0..n * kk {
            let (nrm, mu) = cones[j % n];
            let xj = vec3_at(&x, j);
            cone_viol = cone_viol.max((xj - project_friction_cone(&xj, &nrm, mu)).norm());
            let w = xj + vec3_at(&y_cone, j) / rho_cone;
            let polar = (w - project_friction_cone(&w, &nrm, mu)) * rho_cone;
            y_cone[3 * j..3 * j + 3].copy_from_slice(polar.as_slice());
        }
        fbuf.iter_mut().zip(&x).for_each(|(f, v)| *f = v * fs);
        let ev = problem.evaluate(&fbuf, None, None, 1.0);
        let bc = ev.terminal_error.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        for j in 0..6 {
            tp.y[j] += tp.rho * ev.terminal_error[j];
        }

        diag = SolveDiagnostics {
            converged: false,
            outer_iterations: outer + 1,
            inner_iterations: inner_total,
            stationarity: out.grad_norm,
            bc_error: bc,
            cone_violation: cone_viol * fs,
        };
        let done = bc <= opts.bc_tol && cone_viol <= opts.cone_tol && inner_tol <= opts.tol && out.converged;
        if done {
            diag.converged = true;
            break;
        }
        if bc > 0.25 * prev_bc && bc > opts.bc_tol {
            tp.rho = (tp.rho * 10.0).min(RHO_MAX);
        }
        if cone_viol > 0.25 * prev_cone && cone_viol > opts.cone_tol {
            rho_cone = (rho_cone * 10.0).min(RHO_MAX);
        }
        prev_bc = bc;
        prev_cone = cone_viol;
    }

    let forces = unflatten(&x, n, fs);
    Ok(build_solution(problem, forces, diag))
}

/// [`solve_ocp_with_status`], failing when the tolerances are not met.
pub fn solve_ocp(problem: &OcpProblem, opts: &OcpOptions) -> Result<OcpSolution> {
    let sol = solve_ocp_with_status(problem, opts)?;
    let d = sol.diagnostics;
    if d.converged {
        return Ok(sol);
    }
    if d.bc_error > 1e3 * opts.bc_tol {
        let e = sol.com_traj.last().map(|s| s.com - problem.terminal.position).unwrap_or_default();
        return Err(Error::Infeasible {
            gap: d.bc_error,
            direction: e.try_normalize(1e-300).unwrap_or_default(),
        });
    }
    Err(Error::NotConverged {
        iterations: d.inner_iterations,
        primal_residual: d.bc_error.max(d.cone_violation),
        dual_residual: d.stationarity,
    })
}

fn build_solution(problem: &OcpProblem, forces: Vec<Vec<Vec3>>, diagnostics: SolveDiagnostics) -> OcpSolution {
    let stance = &problem.stance;
    let traj = integrate(stance, &problem.initial, problem.dt(), &forces);
    let positions = stance.positions();
    let com_traj: Vec<CentroidalState> = (0..problem.knots)
        .map(|k| {
            let p = pivot_point(stance, &problem.normal, &traj.com[k], &forces[k], PivotRule::CenterOfPressure);
            CentroidalState::with_normal(traj.com[k], traj.vel[k], traj.acc[k], p, &problem.normal)
        })
        .collect();
    let hdot: Vec<Vec3> = (0..problem.knots)
        .map(|k| model::contact_moment(&positions, &traj.com[k], &forces[k]))
        .collect();
    let objective = problem.evaluate(&flatten(&forces), None, None, 1.0).cost;
    let m = trajectory_metrics(stance, &problem.normal, &com_traj, &forces).unwrap_or(OcpMetrics {
        eps_pend: f64::NAN,
        eps_h: trapezoid_mean(&hdot.iter().map(|h| h.norm()).collect::<Vec<_>>()),
        lipm_r2: None,
    });
    OcpSolution {
        times: problem.times(),
        knot_forces: forces,
        com_traj,
        hdot,
        objective,
        eps_h: m.eps_h,
        eps_pend: m.eps_pend,
        lipm_r2: m.lipm_r2,
        diagnostics,
    }
}

/// Planar helper for scenario construction.
pub fn lateral_offset(start: &Vec3, offset: &Vec2) -> Vec3 {
    start + Vec3::new(offset.x, offset.y, 0.0)
}
