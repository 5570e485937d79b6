//! Front end for the sweeps: config ingestion, dispatch and exit codes.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use pendular_core::analysis;
use pendular_core::forceqp::{self, QpWeights};
use pendular_core::harness::{self, svg::PlotSpec, SweepResult};
use pendular_core::model::{self, Vec3};
use pendular_core::ocp;
use serde_json::{json, Value};

pub use config::{ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

pub const THREADS_ENV: &str = "PENDULAR_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "pendular-lab", version, about = "Pendular net-wrench sweeps and solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated weights replacing the sweep grid.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    /// Print a machine-readable summary to stdout.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Point-mass trajectory sweep of the balance weight.
    TestA,
    /// Four-foot per-frame QP sweep against the analytic constant.
    TestB,
    /// Two-foot per-frame QP sweep against the geometric floor.
    TestC,
    /// Pivot agreement of the trajectory solutions.
    TestE,
    /// Fore–aft acceleration sweep around the friction kink.
    Kink,
    /// Task prefactor over a λ/α grid.
    Prefactor,
    /// Two-foot geometric floor for one horizontal acceleration.
    Floor {
        #[arg(long, allow_negative_numbers = true)]
        ax: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        ay: f64,
    },
    /// Solve one contact-force QP.
    QpSolve {
        #[arg(long, allow_negative_numbers = true)]
        ax: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        ay: Option<f64>,
    },
    /// Solve one trajectory problem and export it per knot.
    OcpSolve,
    /// Rebuild the summary table from stored CSVs.
    Report,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver { message: String, diagnostics: Option<PathBuf> },
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

pub struct Outcome {
    pub text: String,
    pub json: Value,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::InvalidSubcommand
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_CONFIG,
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_CONFIG;
    }
    match execute(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else {
                println!("{}", out.text);
            }
            EXIT_OK
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Solver { message, diagnostics }) => {
            eprintln!("solver failure: {message}");
            if let Some(p) = diagnostics {
                eprintln!("diagnostics written to {}", p.display());
            }
            EXIT_SOLVER
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("missing --config PATH".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.map(|c| c.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn grid_override(cli: &Cli, grid: &mut Vec<f64>) -> Result<(), Failure> {
    if let Some(g) = &cli.alpha_grid {
        if g.is_empty() || g.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Failure::Config("--alpha-grid: values must be positive".into()));
        }
        *grid = g.clone();
    }
    Ok(())
}

fn write_diagnostics(dir: &Path, name: &str, body: &str) -> Option<PathBuf> {
    fs::create_dir_all(dir).ok()?;
    let p = dir.join(format!("{name}_diagnostics.txt"));
    fs::write(&p, body).ok()?;
    Some(p)
}

fn solver_failure(dir: &Path, name: &str, cfg: &RunConfig, message: String) -> Failure {
    let body = format!("{message}\n\n# config\n{}", cfg.to_toml());
    Failure::Solver {
        diagnostics: write_diagnostics(dir, name, &body),
        message,
    }
}

fn execute(cli: &Cli) -> Result<Outcome, Failure> {
    if matches!(cli.command, Command::Report) {
        let cfg = match &cli.config {
            Some(_) => Some(load(cli)?),
            None => None,
        };
        return report(&out_dir(cli, cfg.as_ref()));
    }
    if cli.alpha_grid.is_some() && !matches!(cli.command, Command::TestA | Command::TestB | Command::TestC | Command::TestE) {
        return Err(Failure::Config("--alpha-grid only applies to test-a, test-b, test-c and test-e".into()));
    }
    let mut cfg = load(cli)?;
    let dir = out_dir(cli, Some(&cfg));
    match cli.command.clone() {
        Command::TestA => {
            grid_override(cli, &mut cfg.grids.test_a)?;
            let c = cfg.test_a()?;
            let spec = PlotSpec::new("eps_H vs alpha", "alpha", "eps_H", (true, true), &["eps_h", "eps_pend"], &["eps_h_ref"]);
            sweep(&cfg, &dir, "test_a", &spec, harness::run_test_a(&c), |r| {
                format!(
                    "slope {:.3} for alpha >= {:.0} (full grid {:.3}), reduction {:.1}x, lipm_r2 at 100 {}",
                    get(r, "slope_asymptotic"),
                    get(r, "alpha_threshold"),
                    get(r, "slope_full"),
                    get(r, "reduction"),
                    r.fitted.get("lipm_r2_at_100").map_or("n/a".into(), |v| format!("{v:.4}"))
                )
            })
        }
        Command::TestB => {
            grid_override(cli, &mut cfg.grids.test_b)?;
            let c = cfg.test_b()?;
            let spec = PlotSpec::new("|Hdot|/m vs alpha, four feet", "alpha", "|Hdot|/m", (true, true), &["hdot_over_m"], &["analytic_K_over_alpha"]);
            sweep(&cfg, &dir, "test_b", &spec, harness::run_test_b(&c), |r| {
                format!(
                    "K_e {:.3} vs K_a {:.3}, slope {:.3} for alpha >= {:.0} (full grid {:.3}), reduction {:.1}x",
                    get(r, "K_e"),
                    get(r, "K_a"),
                    get(r, "slope_asymptotic"),
                    get(r, "alpha_threshold"),
                    get(r, "slope_full"),
                    get(r, "reduction")
                )
            })
        }
        Command::TestC => {
            grid_override(cli, &mut cfg.grids.test_c)?;
            let c = cfg.test_c()?;
            let spec = PlotSpec::new("|Hdot|/m vs alpha, two feet", "alpha", "|Hdot|/m", (true, true), &["hdot_over_m"], &["floor"]);
            sweep(&cfg, &dir, "test_c", &spec, harness::run_test_c(&c), |r| {
                format!(
                    "qp {:.6} at alpha {:.0e} vs floor {:.6} (rel err {:.1e}), reduction {:.2}x, floor fraction mean {:.2} range [{:.2}, {:.2}]",
                    get(r, "hdot_at_alpha_max"),
                    get(r, "alpha_max"),
                    get(r, "floor_mean"),
                    get(r, "floor_rel_err"),
                    get(r, "reduction"),
                    get(r, "floor_fraction_mean"),
                    get(r, "floor_fraction_min"),
                    get(r, "floor_fraction_max")
                )
            })
        }
        Command::TestE => {
            grid_override(cli, &mut cfg.grids.test_e)?;
            let c = cfg.test_e()?;
            let spec = PlotSpec::new("COP to pivot deviation", "alpha", "deviation (mm)", (true, true), &["deviation_mm"], &["deviation_ref"]);
            sweep(&cfg, &dir, "test_e", &spec, harness::run_test_e(&c), |r| {
                let dev = r.finite_column("deviation_mm");
                let (first, last) = (dev.first().copied().unwrap_or_default(), dev.last().copied().unwrap_or_default());
                format!(
                    "deviation {:.2} mm at alpha {} to {:.3} mm at alpha {}, slope to 100 {:.3}, COP inside {:.0}%",
                    first.1,
                    first.0,
                    last.1,
                    last.0,
                    get(r, "deviation_slope_to_100"),
                    100.0 * get(r, "cop_inside_min")
                )
            })
        }
        Command::Kink => kink(&cfg, &dir),
        Command::Prefactor => {
            let c = cfg.prefactor()?;
            let spec = PlotSpec::new("task prefactor", "lambda/alpha", "Hdot / Hdot_task", (true, false), &["measured"], &["analytic"]);
            sweep(&cfg, &dir, "prefactor", &spec, harness::run_prefactor(&c), |r| {
                format!("max |measured - lambda/(alpha+lambda)| {:.1e}", get(r, "max_abs_err"))
            })
        }
        Command::Floor { ax, ay } => floor(&cfg, ax, ay),
        Command::QpSolve { ax, ay } => qp_solve(&cfg, &dir, ax, ay),
        Command::OcpSolve => ocp_solve(&cfg, &dir),
        Command::Report => unreachable!("handled above"),
    }
}

fn get(r: &SweepResult, key: &str) -> f64 {
    r.fitted.get(key).copied().unwrap_or(f64::NAN)
}

fn sweep<F>(
    cfg: &RunConfig,
    dir: &Path,
    name: &str,
    spec: &PlotSpec,
    result: pendular_core::Result<SweepResult>,
    line: F,
) -> Result<Outcome, Failure>
where
    F: Fn(&SweepResult) -> String,
{
    let r = result.map_err(|e| solver_failure(dir, name, cfg, e.to_string()))?;
    let files = r
        .write_artifacts(dir, &harness::timestamp(), spec)
        .map_err(|e| Failure::Solver {
            message: format!("writing artifacts: {e}"),
            diagnostics: None,
        })?;
    let errors = r.errors();
    if !errors.is_empty() {
        let body: String = errors.iter().map(|(p, e)| format!("{} = {p}: {e}\n", r.param_name)).collect();
        return Err(solver_failure(dir, name, cfg, format!("{} of {} rows failed\n{body}", errors.len(), r.rows.len())));
    }
    let text = format!("{name}: {}\nwrote {} files under {}", line(&r), files.len(), dir.display());
    Ok(Outcome {
        text,
        json: json!({
            "command": name,
            "fitted": r.fitted,
            "overlays": r.overlays,
            "files": files,
        }),
    })
}

fn kink(cfg: &RunConfig, dir: &Path) -> Result<Outcome, Failure> {
    let c = cfg.kink()?;
    let spec = PlotSpec::new("inf |Hdot|/m vs fore-aft acceleration", "a_x (m/s^2)", "|Hdot|/m", (false, false), &["qp_inf", "canceller_inf"], &["floor"]);
    let main = sweep(cfg, dir, "kink", &spec, harness::run_kink(&c), |r| {
        format!(
            "a* {:.4} (kappa {:.4}), slopes {:.5}/{:.5}, canceller-restricted {:.5}/{:.5}, full QP leaves the floor at {}",
            get(r, "a_star"),
            get(r, "kappa"),
            get(r, "left_slope"),
            get(r, "right_slope"),
            get(r, "canceller_left_slope"),
            get(r, "canceller_right_slope"),
            r.fitted.get("qp_departure").map_or("none".into(), |v| format!("{v:.2}"))
        )
    })?;
    let spec = PlotSpec::new("inf |Hdot|/m vs friction", "mu", "|Hdot|/m", (false, false), &["qp_inf"], &["floor"]);
    let mu = sweep(cfg, dir, "kink_mu", &spec, harness::run_kink_mu(&c), |r| {
        format!("largest slope jump over mu {:.1e}", get(r, "max_slope_jump"))
    })?;
    Ok(Outcome {
        text: format!("{}\n{}", main.text, mu.text),
        json: json!({ "command": "kink", "kink": main.json, "kink_mu": mu.json }),
    })
}

fn floor(cfg: &RunConfig, ax: f64, ay: f64) -> Result<Outcome, Failure> {
    if !(ax.is_finite() && ay.is_finite()) {
        return Err(Failure::Config("--ax/--ay must be finite".into()));
    }
    let stance = cfg.two_foot_stance()?;
    let com = cfg.com();
    let f = model::required_net_force(&stance, &Vec3::new(ax, ay, 0.0));
    let rep = analysis::geometric_floor(&stance, &com, &f).map_err(|e| Failure::Config(e.to_string()))?;
    let kappa = analysis::kink_kappa(&stance, &com).map_err(|e| Failure::Config(e.to_string()))?;
    let a_star = analysis::critical_acceleration(cfg.robot.mu, cfg.robot.gravity, kappa);
    let c = rep.canceller;
    let text = format!(
        "geometric floor {:.3} m^2/s^2 ({:.6}), floor fraction {}, canceller ({:.4}, {:.4}, {:.4}) N {}, a* {:.4} m/s^2",
        rep.geometric_floor,
        rep.geometric_floor,
        rep.floor_fraction.map_or("n/a".into(), |v| format!("{v:.3}")),
        c.x,
        c.y,
        c.z,
        if rep.canceller_feasible { "feasible" } else { "outside the cones" },
        a_star
    );
    Ok(Outcome {
        text,
        json: json!({
            "command": "floor",
            "geometric_floor": rep.geometric_floor,
            "floor_fraction": rep.floor_fraction,
            "canceller": [c.x, c.y, c.z],
            "canceller_feasible": rep.canceller_feasible,
            "a_star": a_star,
        }),
    })
}

fn qp_solve(cfg: &RunConfig, dir: &Path, ax: Option<f64>, ay: Option<f64>) -> Result<Outcome, Failure> {
    let stance = cfg.stance()?;
    let com = cfg.com();
    let acc = Vec3::new(ax.unwrap_or(cfg.scenario.accel[0]), ay.unwrap_or(cfg.scenario.accel[1]), 0.0);
    let w = &cfg.weights;
    let weights = QpWeights::new(w.alpha, w.gamma, w.lambda, Vec3::new(w.task[0], w.task[1], w.task[2]))
        .map_err(|e| Failure::Config(e.to_string()))?;
    let f = model::required_net_force(&stance, &acc);
    let sol = forceqp::solve(&stance, &com, &f, &weights, &cfg.qp_options())
        .map_err(|e| solver_failure(dir, "qp_solve", cfg, e.to_string()))?;
    fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    let path = dir.join("qp_solve.csv");
    let write = || -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["contact", "px", "py", "pz", "fx", "fy", "fz", "cone_active"])?;
        for (i, (c, f)) in stance.contacts.iter().zip(&sol.forces).enumerate() {
            let p = c.position;
            w.write_record([
                i.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.z.to_string(),
                f.x.to_string(),
                f.y.to_string(),
                f.z.to_string(),
                sol.cone_active[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| Failure::Solver {
        message: format!("writing {}: {e}", path.display()),
        diagnostics: None,
    })?;
    let h = sol.hdot;
    Ok(Outcome {
        text: format!(
            "qp_solve: |Hdot| {:.6e} N m (Hdot/m {:.6e}), {} iterations, residual {:.1e}\nwrote {}",
            h.norm(),
            h.norm() / stance.mass,
            sol.iterations,
            sol.primal_residual,
            path.display()
        ),
        json: json!({
            "command": "qp-solve",
            "hdot": [h.x, h.y, h.z],
            "forces": sol.forces.iter().map(|f| [f.x, f.y, f.z]).collect::<Vec<_>>(),
            "objective": sol.objective,
            "iterations": sol.iterations,
            "residual": sol.primal_residual,
            "files": [path],
        }),
    })
}

fn ocp_solve(cfg: &RunConfig, dir: &Path) -> Result<Outcome, Failure> {
    let sweep = cfg.test_a()?;
    let problem = sweep.problem(cfg.weights.alpha).map_err(|e| Failure::Config(e.to_string()))?;
    let sol = ocp::solve_ocp_with_status(&problem, &cfg.ocp_options())
        .map_err(|e| solver_failure(dir, "ocp_solve", cfg, e.to_string()))?;
    fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    let path = dir.join("ocp_solve.csv");
    let file = fs::File::create(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    sol.write_csv(std::io::BufWriter::new(file)).map_err(|e| Failure::Solver {
        message: e.to_string(),
        diagnostics: None,
    })?;
    let d = sol.diagnostics;
    if !d.converged {
        return Err(solver_failure(
            dir,
            "ocp_solve",
            cfg,
            format!(
                "not converged after {} outer / {} inner iterations: bc {:.2e}, cone {:.2e}, stationarity {:.2e}",
                d.outer_iterations, d.inner_iterations, d.bc_error, d.cone_violation, d.stationarity
            ),
        ));
    }
    Ok(Outcome {
        text: format!(
            "ocp_solve: eps_H {:.6}, eps_pend {:.6}, lipm_r2 {}, {} outer / {} inner iterations\nwrote {}",
            sol.eps_h,
            sol.eps_pend,
            sol.lipm_r2.map_or("n/a".into(), |v| format!("{v:.4}")),
            d.outer_iterations,
            d.inner_iterations,
            path.display()
        ),
        json: json!({
            "command": "ocp-solve",
            "eps_h": sol.eps_h,
            "eps_pend": sol.eps_pend,
            "lipm_r2": sol.lipm_r2,
            "diagnostics": d,
            "files": [path],
        }),
    })
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub test: &'static str,
    pub quantity: String,
    pub value: f64,
}

fn summary_value(dir: &Path, test: &str, key: &str) -> Option<f64> {
    let text = fs::read_to_string(dir.join(format!("{test}_summary.txt"))).ok()?;
    text.lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| v.trim().parse().ok())
}

/// Refits the stored sweeps under `dir`. Only the CSVs are needed; the
/// asymptotic threshold and `γ` are taken from the summaries when present.
pub fn table_rows(dir: &Path) -> Result<Vec<TableRow>, Failure> {
    let mut rows = Vec::new();
    let mut push = |test: &'static str, quantity: &str, value: Option<f64>| {
        if let Some(value) = value {
            rows.push(TableRow {
                test,
                quantity: quantity.to_string(),
                value,
            });
        }
    };
    let mut found = 0;
    for test in ["test_a", "test_b", "test_c", "test_e"] {
        let path = dir.join(format!("{test}.csv"));
        let Ok(file) = fs::File::open(&path) else {
            continue;
        };
        found += 1;
        let mut r = SweepResult::read_csv(test, file).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let threshold = summary_value(dir, test, "alpha_threshold").unwrap_or(0.0);
        let gamma = summary_value(dir, test, "gamma").unwrap_or(1.0);
        match test {
            "test_a" | "test_e" => {
                harness::fit_collapse(&mut r, "eps_h", threshold, gamma);
                harness::fit_trajectory(&mut r);
            }
            "test_b" => harness::fit_collapse(&mut r, "hdot_over_m", threshold, gamma),
            _ => harness::fit_floor(&mut r),
        }
        let f = |k: &str| r.fitted.get(k).copied();
        match test {
            "test_a" => {
                push("A", &format!("slope (alpha >= {threshold:.0})"), f("slope_asymptotic"));
                push("A", "slope (full grid)", f("slope_full"));
                push("A", "eps_H reduction", f("reduction"));
                push("A", "lipm_r2 at alpha 100", f("lipm_r2_at_100"));
            }
            "test_b" => {
                push("B", "K_e", f("K_e"));
                let k_a = r
                    .column("analytic_K_over_alpha")
                    .and_then(|c| c.first().map(|&(a, v)| v * a / gamma));
                push("B", "K_a", k_a);
                push("B", &format!("slope (alpha >= {threshold:.0})"), f("slope_asymptotic"));
                push("B", "reduction alpha 1 to 1000", f("reduction_1_to_1000"));
            }
            "test_c" => {
                push("C", "qp at alpha max", f("hdot_at_alpha_max"));
                push("C", "analytic floor", f("floor_mean"));
                push("C", "relative error", f("floor_rel_err"));
                push("C", "reduction alpha 1 to 1000", f("reduction_1_to_1000"));
            }
            _ => {
                let dev = r.finite_column("deviation_mm");
                push("E", "deviation at first alpha (mm)", dev.first().map(|p| p.1));
                push("E", "deviation at last alpha (mm)", dev.last().map(|p| p.1));
                push("E", "deviation slope to alpha 100", f("deviation_slope_to_100"));
                push("E", "COP inside fraction", f("cop_inside_min"));
            }
        }
    }
    if found == 0 {
        return Err(Failure::Config(format!("no test CSVs under {}", dir.display())));
    }
    Ok(rows)
}

fn report(dir: &Path) -> Result<Outcome, Failure> {
    let rows = table_rows(dir)?;
    let path = dir.join("table1.csv");
    let write = || -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["row", "quantity", "value"])?;
        for r in &rows {
            w.write_record([r.test, r.quantity.as_str(), r.value.to_string().as_str()])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| Failure::Config(format!("writing {}: {e}", path.display())))?;
    let mut text = String::new();
    for r in &rows {
        let v = if r.value != 0.0 && r.value.abs() < 1e-3 {
            format!("{:.3e}", r.value)
        } else {
            format!("{:.6}", r.value)
        };
        text.push_str(&format!("{:<2} {:<34} {v}\n", r.test, r.quantity));
    }
    text.push_str(&format!("wrote {}", path.display()));
    Ok(Outcome {
        text,
        json: json!({
            "command": "report",
            "rows": rows.iter().map(|r| json!({"row": r.test, "quantity": r.quantity, "value": r.value})).collect::<Vec<_>>(),
            "files": [path],
        }),
    })
}
