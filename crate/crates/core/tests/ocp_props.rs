use pendular_core::harness::{ocp_row, run_test_a, OcpSweepConfig};
use pendular_core::model::{StanceConfig, Vec3};
use pendular_core::ocp::{self, BoundaryState, OcpOptions, OcpProblem, OcpWeights};
use proptest::prelude::*;

fn small_problem(lx: f64, ly: f64, w: (f64, f64, f64, f64), tilt: (f64, f64), task: bool) -> OcpProblem {
    let s = StanceConfig::rectangle(lx, ly, 10.0, 0.7).unwrap();
    let c0 = Vec3::new(0.0, 0.0, 0.3);
    let p = OcpProblem::new(
        s,
        1.0,
        5,
        OcpWeights::new(w.0, w.1, w.2, w.3).unwrap(),
        BoundaryState::at_rest(c0),
        BoundaryState::at_rest(c0 + Vec3::new(0.02, -0.03, 0.0)),
    )
    .unwrap()
    .with_normal(Vec3::new(tilt.0, tilt.1, 1.0))
    .unwrap();
    if task {
        let t = (0..5).map(|k| Vec3::new(0.1 * k as f64, -0.2, 0.05)).collect();
        p.with_task(t).unwrap()
    } else {
        p
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_central_differences(
        lx in 0.1..0.3f64,
        ly in 0.08..0.2f64,
        alpha in 0.1..100.0f64,
        beta in 0.0..10.0f64,
        gamma in 0.1..10.0f64,
        lambda in 0.0..10.0f64,
        tilt in (-0.2..0.2f64, -0.2..0.2f64),
        task in any::<bool>(),
        noise in proptest::collection::vec(-5.0..5.0f64, 60),
    ) {
        let p = small_problem(lx, ly, (alpha, beta, gamma, lambda), tilt, task);
        let forces: Vec<Vec<Vec3>> = (0..5)
            .map(|k| {
                (0..4)
                    .map(|i| {
                        let j = 12 * k + 3 * i;
                        Vec3::new(noise[j], noise[j + 1], 24.5 + noise[j + 2])
                    })
                    .collect()
            })
            .collect();
        let (_, grad) = ocp::cost_and_gradient(&p, &forces).unwrap();
        let h = 1e-4;
        let mut diff_sq = 0.0;
        let mut norm_sq = 0.0;
        for k in 0..5 {
            for i in 0..4 {
                for a in 0..3 {
                    let mut plus = forces.clone();
                    let mut minus = forces.clone();
                    plus[k][i][a] += h;
                    minus[k][i][a] -= h;
                    let fd = (ocp::cost_and_gradient(&p, &plus).unwrap().0 - ocp::cost_and_gradient(&p, &minus).unwrap().0) / (2.0 * h);
                    diff_sq += (fd - grad[k][i][a]).powi(2);
                    norm_sq += grad[k][i][a].powi(2);
                }
            }
        }
        prop_assert!(diff_sq.sqrt() <= 1e-5 * norm_sq.sqrt(), "rel {:e}", diff_sq.sqrt() / norm_sq.sqrt());
    }
}

#[test]
fn reintegrating_knot_forces_reproduces_the_trajectory() {
    let cfg = OcpSweepConfig::test_a().unwrap();
    let p = cfg.problem(10.0).unwrap();
    let sol = ocp::solve_ocp(&p, &OcpOptions::default()).unwrap();
    let traj = ocp::integrate(&p.stance, &p.initial, p.dt(), &sol.knot_forces);
    for (k, s) in sol.com_traj.iter().enumerate() {
        assert!((s.com - traj.com[k]).norm() < 1e-12);
        assert!((s.com_vel - traj.vel[k]).norm() < 1e-12);
    }
    let end = sol.com_traj.last().unwrap();
    assert!((end.com - p.terminal.position).norm() < 1e-5);
    assert!(end.com_vel.norm() < 1e-5);
}

#[test]
fn collapse_is_monotone_in_alpha() {
    let r = run_test_a(&OcpSweepConfig::test_a().unwrap()).unwrap();
    assert!(r.errors().is_empty(), "{:?}", r.errors());
    let eps = r.finite_column("eps_h");
    assert_eq!(eps.len(), r.rows.len());
    for w in eps.windows(2) {
        assert!(w[1].1 <= 1.05 * w[0].1, "{w:?}");
    }
}

#[test]
fn pendular_deviation_times_alpha_stays_in_a_band() {
    // heavy vertical penalty: the residual is then the balance term alone
    let cfg = OcpSweepConfig {
        alphas: vec![50.0, 100.0, 250.0, 500.0, 1000.0],
        ..OcpSweepConfig::test_e().unwrap()
    };
    let band: Vec<f64> = cfg
        .alphas
        .iter()
        .map(|&a| ocp_row(&cfg, a).unwrap().values[3])
        .collect();
    let hi = band.iter().copied().fold(0.0, f64::max);
    let lo = band.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(hi / lo <= 10.0, "{band:?}");
}

#[test]
fn vertical_penalty_suppresses_vertical_acceleration() {
    let base = OcpSweepConfig::test_a().unwrap();
    let az = |beta: f64| {
        let cfg = OcpSweepConfig { beta, ..base.clone() };
        ocp_row(&cfg, 100.0).unwrap().values[6]
    };
    let (lo, hi) = (az(10.0), az(1000.0));
    assert!(lo / hi >= 10.0, "β=10: {lo:e}, β=1000: {hi:e}");
}
