use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ymr_core::fields::{energy, plaquette_curvature};
use ymr_core::gauge::apply_gauge;
use ymr_core::*;

fn complex(dims: [usize; 4], periodic: bool, h: f64) -> Arc<LatticeComplex> {
    if periodic {
        LatticeComplex::torus(dims, h).unwrap()
    } else {
        LatticeComplex::open_box(dims, h).unwrap()
    }
}

fn arb_complex() -> impl Strategy<Value = Arc<LatticeComplex>> {
    (
        prop::array::uniform4(3usize..=4),
        any::<bool>(),
        prop_oneof![Just(1.0), Just(0.5), Just(0.25)],
    )
        .prop_map(|(d, p, h)| complex(d, p, h))
}

fn bc_strategy() -> impl Strategy<Value = BoundaryCondition> {
    prop_oneof![Just(BoundaryCondition::Normal), Just(BoundaryCondition::Tangential)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coboundary_squares_to_zero(c in arb_complex(), seed in any::<u64>(), k in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Cochain::<Su2Alg>::random(&c, k, &mut rng, 1.0);
        let dda = fields::d(&fields::d(&a).unwrap()).unwrap();
        prop_assert!(dda.max_norm() <= 1e-12 * c.spacing().powi(-2));
    }

    #[test]
    fn codifferential_is_the_adjoint(
        c in arb_complex(),
        seed in any::<u64>(),
        k in 0usize..4,
        bc in bc_strategy(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = FormSpace::whole(&c, bc);
        let a = space.project(k, Cochain::<Su2Alg>::random(&c, k, &mut rng, 1.0).values());
        let b = space.project(k + 1, Cochain::<Su2Alg>::random(&c, k + 1, &mut rng, 1.0).values());
        let lhs = space.inner(k + 1, &space.d(k, &a), &b);
        let rhs = space.inner(k, &a, &space.codiff(k + 1, &b));
        let scale = 1.0 + lhs.abs();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn energy_is_gauge_invariant(c in arb_complex(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = LinkField::<Su2>::random(&c, &mut rng, 0.3);
        let g = VertexGaugeField::<Su2>::random(&c, &mut rng, 3.0);
        let e0 = energy(&u, None).unwrap();
        let e1 = energy(&apply_gauge(&u, &g).unwrap(), None).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-12 * (1.0 + e0));
    }

    #[test]
    fn curvature_transforms_by_adjoint(c in arb_complex(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = LinkField::<Su2>::random(&c, &mut rng, 0.3);
        let g = VertexGaugeField::<Su2>::random(&c, &mut rng, 3.0);
        let f = plaquette_curvature(&u).unwrap();
        let fg = plaquette_curvature(&apply_gauge(&u, &g).unwrap()).unwrap();
        let h2 = c.spacing().powi(2);
        for p in 0..c.num_faces() {
            let cell = c.cell(2, p);
            let base = std::array::from_fn(|i| cell.base[i] as usize);
            let v = c.find_cell(base, 0).unwrap();
            let expected = g.value(v).conjugate(&f.values()[p]);
            prop_assert!((expected - fg.values()[p]).norm() * h2 <= 1e-12);
        }
    }

    #[test]
    fn gauge_actions_compose(c in arb_complex(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = LinkField::<Su2>::random(&c, &mut rng, 1.0);
        let g1 = VertexGaugeField::<Su2>::random(&c, &mut rng, 3.0);
        let g2 = VertexGaugeField::<Su2>::random(&c, &mut rng, 3.0);
        let twice = apply_gauge(&apply_gauge(&u, &g1).unwrap(), &g2).unwrap();
        let once = apply_gauge(&u, &g2.compose(&g1)).unwrap();
        prop_assert!(twice.max_distance(&once) <= 1e-12);
        let back = apply_gauge(&apply_gauge(&u, &g1).unwrap(), &g1.inverse()).unwrap();
        prop_assert!(back.max_distance(&u) <= 1e-12);
    }

    #[test]
    fn exp_log_round_trip(seed in any::<u64>(), scale in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Su2Alg::random(&mut rng, scale / 3f64.sqrt());
        let back = Su2::exp(&x).log().unwrap();
        prop_assert!((back - x).norm() <= 1e-12);
        let g = Su2::random(&mut rng, 10.0);
        let h = Su2::random(&mut rng, 10.0);
        let lhs = g.mul(&h).inverse();
        let rhs = h.inverse().mul(&g.inverse());
        prop_assert!(lhs.distance(&rhs) <= 1e-14);
    }
}

#[test]
fn connection_round_trip_on_small_fields() {
    let c = complex([3, 3, 4, 3], true, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u = LinkField::<Su2>::random(&c, &mut rng, 1.0);
    let a = fields::connection_form(&u).unwrap();
    let back: LinkField<Su2> = fields::link_field(&a).unwrap();
    assert!(back.max_distance(&u) <= 1e-12);
}
