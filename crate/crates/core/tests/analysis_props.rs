use pendular_core::analysis;
use pendular_core::forceqp::{self, QpWeights, SolverOptions};
use pendular_core::model::{self, StanceConfig, Vec2, Vec3};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rectangle_svd_matches_closed_form(lx in 0.05..0.5f64, ly in 0.05..0.5f64, h in 0.1..0.6f64) {
        let s = StanceConfig::rectangle(lx, ly, 10.0, 0.6).unwrap();
        let jac = analysis::moment_jacobian(&s, &Vec3::new(0.0, 0.0, h)).unwrap();
        let mut closed = analysis::rect_stance_sigmas(lx, ly).unwrap();
        closed.sort_by(|a, b| b.total_cmp(a));
        for k in 0..3 {
            prop_assert!((jac.singular_values[k] - closed[k]).abs() <= 1e-10);
        }
    }

    #[test]
    fn prefactor_reproduced_with_slack_cones(
        log_alpha in -2.0..3.0f64,
        log_lambda in -2.0..3.0f64,
        task in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
    ) {
        let task = Vec3::new(task.0, task.1, task.2);
        prop_assume!(task.norm() > 0.05);
        let s = StanceConfig::rectangle(0.188, 0.127, 12.0, 0.6).unwrap();
        let (alpha, lambda) = (10f64.powf(log_alpha), 10f64.powf(log_lambda));
        let w = QpWeights::new(alpha, 1e-9, lambda, task).unwrap();
        let f = model::required_net_force(&s, &Vec3::zeros());
        let sol = forceqp::solve(&s, &Vec3::new(0.0, 0.0, 0.27), &f, &w, &SolverOptions::default()).unwrap();
        prop_assert!(sol.cone_active.iter().all(|&a| !a));
        let expect = task * analysis::task_prefactor(alpha, lambda).unwrap();
        prop_assert!((sol.hdot - expect).norm() <= 1e-6 * task.norm());
    }

    #[test]
    fn floor_fraction_is_a_fraction(
        lx in 0.1..0.3f64,
        ly in 0.08..0.2f64,
        heading in 0.0..std::f64::consts::PI,
        a in 0.1..3.0f64,
    ) {
        let s = StanceConfig::diagonal_pair(lx, ly, 12.0, 0.6).unwrap();
        let dir = [Vec2::new(heading.cos(), heading.sin())];
        let frac = analysis::floor_fraction_sweep(&s, &Vec3::new(0.0, 0.0, 0.27), &dir, a).unwrap()[0].unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&frac));
    }

    #[test]
    fn pendular_force_is_never_beaten(ax in -1.5..1.5f64, ay in -1.5..1.5f64) {
        let s = StanceConfig::rectangle(0.188, 0.127, 12.0, 0.6).unwrap();
        let rep = analysis::pointwise_certificate(&s, &Vec3::new(0.0, 0.0, 0.27), &Vec2::new(ax, ay), 1000).unwrap();
        prop_assert_eq!(rep.beaten, 0);
        prop_assert!(rep.pendular_hdot <= 1e-9 * rep.pendular_force.norm());
        prop_assert!(rep.max_identity_error <= 1e-10);
    }
}

#[test]
fn certificate_over_ten_thousand_samples() {
    let s = StanceConfig::rectangle(0.188, 0.127, 12.0, 0.6).unwrap();
    let rep = analysis::pointwise_certificate(&s, &Vec3::new(0.02, -0.01, 0.27), &Vec2::new(0.8, -0.5), 10_000).unwrap();
    assert_eq!(rep.samples, 10_000);
    assert_eq!(rep.beaten, 0);
    // with F_xy fixed, the best vertical force is the pendular one
    assert!((rep.fixed_xy_minimizer.z - rep.pendular_force.z).abs() <= 2.0 * s.weight() / 2000.0);
}

#[test]
fn go1_floor_at_one_mps2() {
    // floor = |D̂ · (r × F)| / m with the CoM over the foot midpoint
    let s = StanceConfig::diagonal_pair(0.188, 0.127, 12.0, 0.6).unwrap();
    let com = Vec3::new(0.0, 0.0, 0.27);
    let f = model::required_net_force(&s, &Vec3::new(1.0, 0.0, 0.0));
    let rep = analysis::geometric_floor(&s, &com, &f).unwrap();
    let p = s.positions();
    let d = (p[0] - p[1]).normalize();
    let oracle = d.dot(&(-com).cross(&f)).abs() / 12.0;
    assert!((rep.geometric_floor - oracle).abs() < 1e-12);
    assert!((rep.geometric_floor - 0.151).abs() < 5e-4);
}
