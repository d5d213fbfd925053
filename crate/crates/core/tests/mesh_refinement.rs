use lseig_core::mesh::{build_initial_mesh, DomainKind, DomainSpec, InitialPattern, Mesh};
use proptest::prelude::*;

fn initial(l_shape: bool, two_triangle: bool) -> Mesh {
    let spec = if l_shape { DomainSpec::l_shape(1) } else { DomainSpec::unit_square(1) };
    let spec = if two_triangle { spec.with_pattern(InitialPattern::TwoTriangle) } else { spec };
    build_initial_mesh(spec).unwrap()
}


/// Picks triangles from raw selectors, reduced modulo the current count.
fn pick(m: &Mesh, raw: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = raw.iter().map(|r| r % m.num_triangles()).collect();
    v.sort_unstable();
    v.dedup();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_sequences_stay_conforming(
        l_shape in any::<bool>(),
        two_triangle in any::<bool>(),
        steps in prop::collection::vec((any::<bool>(), prop::collection::vec(any::<usize>(), 1..6)), 1..7),
    ) {
        let mut m = initial(l_shape, two_triangle);
        let area = if l_shape { 3.0 } else { 1.0 };
        for (uniform, raw) in steps {
            m = if uniform && m.num_triangles() < 800 {
                m.refine_uniform()
            } else {
                let marked = pick(&m, &raw);
                m.refine_marked(&marked).unwrap()
            };
            prop_assert!(m.check_conformity().is_ok());
            prop_assert!((m.total_area() - area).abs() < 1e-13);
        }
    }

    #[test]
    fn bisection_keeps_shape_regular(
        l_shape in any::<bool>(),
        seeds in prop::collection::vec(prop::collection::vec(any::<usize>(), 1..4), 8..16),
    ) {
        let mut m = initial(l_shape, false);
        let ratio0 = m.metrics().shape_ratio;
        for raw in seeds {
            m = m.refine_marked(&pick(&m, &raw)).unwrap();
            prop_assert!(m.metrics().shape_ratio <= 2.0 * ratio0 + 1e-12);
        }
    }
}

#[test]
fn uniform_levels_halve_the_mesh_size() {
    for kind in [DomainKind::UnitSquare, DomainKind::LShape] {
        let spec = DomainSpec { kind, n: 1, pattern: InitialPattern::CrissCross };
        let mut m = build_initial_mesh(spec).unwrap();
        for level in 0..5 {
            assert!((m.h_max() - 0.5f64.powi(level)).abs() < 1e-14);
            assert!((m.total_area() - spec.area()).abs() < 1e-13);
            m = m.refine_uniform();
        }
    }
}

#[test]
fn repeated_corner_marking_grades_towards_the_corner() {
    let mut m = initial(true, false);
    for _ in 0..12 {
        let marked: Vec<usize> = (0..m.num_triangles())
            .filter(|&t| m.triangle_points(t).iter().any(|p| p[0] == 0.0 && p[1] == 0.0))
            .collect();
        m = m.refine_marked(&marked).unwrap();
    }
    m.check_conformity().unwrap();
    assert!(m.h_max() / m.h_min() > 20.0);
}
