use pendular_core::model::{self, CentroidalState, Contact, StanceConfig, Vec2, Vec3};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn stance() -> impl Strategy<Value = StanceConfig> {
    (0.1..0.3f64, 0.08..0.2f64, 5.0..30.0f64, 0.3..1.0f64)
        .prop_map(|(lx, ly, m, mu)| StanceConfig::rectangle(lx, ly, m, mu).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn net_wrench_is_affine_in_forces(
        s in stance(),
        com in vec3(0.3),
        f in proptest::collection::vec(vec3(50.0), 4),
        g in proptest::collection::vec(vec3(50.0), 4),
        a in -3.0..3.0f64,
    ) {
        let w = |fs: &[Vec3]| model::net_wrench(&s, &com, fs).unwrap();
        let combo: Vec<Vec3> = f.iter().zip(&g).map(|(x, y)| x + y * a).collect();
        let (wf, wg, wc) = (w(&f), w(&g), w(&combo));
        let zero = w(&[Vec3::zeros(); 4]);
        // gravity is the only affine part
        let lin_force = (wc.force - zero.force) - (wf.force - zero.force) - (wg.force - zero.force) * a;
        let lin_h = wc.hdot - wf.hdot - wg.hdot * a;
        prop_assert!(lin_force.norm() < 1e-9 * (1.0 + a.abs()) * 200.0);
        prop_assert!(lin_h.norm() < 1e-9 * (1.0 + a.abs()) * 200.0);
        prop_assert!((zero.force + Vec3::new(0.0, 0.0, s.weight())).norm() < 1e-12);
    }

    #[test]
    fn pendular_force_has_no_moment_about_com(
        s in stance(),
        pxy in (-0.1..0.1f64, -0.08..0.08f64),
        cxy in (-0.2..0.2f64, -0.2..0.2f64),
        h in 0.1..0.6f64,
    ) {
        let pivot = Vec3::new(pxy.0, pxy.1, 0.0);
        let com = Vec3::new(cxy.0, cxy.1, h);
        let st = CentroidalState::at_rest(com, pivot);
        let f = model::pendular_force(&st, s.mass, s.gravity, 0.05).unwrap();
        // a net force through the pivot has zero moment about the CoM
        prop_assert!((pivot - com).cross(&f).norm() < 1e-9 * f.norm());
        prop_assert!((f.z - s.weight()).abs() < 1e-9 * s.weight());
        // and its horizontal part reproduces the LIPM acceleration
        let acc = f.xy() / s.mass;
        let lipm = (com.xy() - pivot.xy()) * (s.gravity / h);
        prop_assert!((acc - lipm).norm() < 1e-9 * (1.0 + lipm.norm()));
    }

    #[test]
    fn cone_membership_is_scale_invariant(
        mu in 0.1..1.5f64,
        f in vec3(100.0),
        scale in 1e-3..1e3f64,
        tilt in vec3(0.3),
    ) {
        let normal = (Vec3::z() + tilt).normalize();
        let c = Contact::with_normal(Vec3::zeros(), mu, normal).unwrap();
        let (fn_, ft) = c.decompose(&f);
        // stay away from the boundary where the tolerance decides
        prop_assume!((ft.norm() - mu * fn_).abs() > 1e-6 * f.norm());
        prop_assert_eq!(
            model::friction_contains(&c, &f, 0.0),
            model::friction_contains(&c, &(f * scale), 0.0)
        );
    }

    #[test]
    fn zmp_equals_pivot_on_the_pendulum(
        cxy in (-0.2..0.2f64, -0.2..0.2f64),
        pxy in (-0.1..0.1f64, -0.1..0.1f64),
        h in 0.1..0.6f64,
    ) {
        let g = 9.81;
        let com = Vec3::new(cxy.0, cxy.1, h);
        let pivot = Vec3::new(pxy.0, pxy.1, 0.0);
        let acc = (com - pivot).xy() * (g / h);
        let st = CentroidalState::new(com, Vec3::zeros(), Vec3::new(acc.x, acc.y, 0.0), pivot);
        prop_assert!((model::zmp(&st, g) - pivot.xy()).norm() < 1e-12);
    }

    #[test]
    fn support_clamp_lands_inside(s in stance(), p in (-1.0..1.0f64, -1.0..1.0f64)) {
        let q = s.clamp_to_support(&Vec2::new(p.0, p.1));
        prop_assert!(s.support_contains(&q, 1e-9));
    }
}

#[test]
fn equal_split_cop_is_centroid() {
    let s = StanceConfig::rectangle(0.188, 0.127, 12.0, 0.6).unwrap();
    let f = model::equal_split(&Vec3::new(0.0, 0.0, s.weight()), 4);
    let cop = model::center_of_pressure(&s.positions(), &f).unwrap();
    assert!(cop.norm() < 1e-14);
}
