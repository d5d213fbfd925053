use std::sync::Arc;

use lseig_core::eigsolve::FormulationTag;
use lseig_core::estimator::{adapt_loop, mark_dorfler_values, AdaptiveParams};
use lseig_core::fespace::Family;
use lseig_core::formulations::FormulationSpec;
use lseig_core::mesh::{build_initial_mesh, DomainSpec};
use proptest::prelude::*;

proptest! {
    #[test]
    fn larger_bulk_never_marks_fewer(values in prop::collection::vec(0.0f64..10.0, 1..40), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = mark_dorfler_values(&values, lo).unwrap();
        let large = mark_dorfler_values(&values, hi).unwrap();
        prop_assert!(small.iter().all(|t| large.contains(t)));
    }

    #[test]
    fn marked_set_carries_the_bulk(values in prop::collection::vec(0.0f64..10.0, 1..40), theta in 0.01f64..1.0) {
        let marked = mark_dorfler_values(&values, theta).unwrap();
        let total: f64 = values.iter().sum();
        let got: f64 = marked.iter().map(|&t| values[t]).sum();
        prop_assert!(got >= theta * total * (1.0 - 1e-10));
        // Dropping the smallest marked indicator loses the bulk property.
        if let Some(&least) = marked.iter().min_by(|&&x, &&y| values[x].partial_cmp(&values[y]).unwrap()) {
            prop_assert!(got - values[least] < theta * total);
        }
    }
}

fn l_shape_run(theta: f64, budget: usize) -> Vec<lseig_core::estimator::AdaptiveStep> {
    let mesh = Arc::new(build_initial_mesh(DomainSpec::l_shape(1)).unwrap());
    let spec = FormulationSpec::new(FormulationTag::F1, Family::Rt0, mesh).unwrap();
    adapt_loop(&spec, &AdaptiveParams::new(theta, budget)).unwrap()
}

#[test]
fn estimator_decreases_along_l_shape_runs() {
    for theta in [0.3, 0.5] {
        let steps = l_shape_run(theta, 4000);
        assert!(steps.len() > 5);
        for w in steps[2..].windows(2) {
            assert!(w[1].eta < w[0].eta, "theta {theta}: {} then {}", w[0].eta, w[1].eta);
        }
        for s in &steps {
            s.mesh.check_conformity().unwrap();
            assert!(s.ndof <= 4000);
        }
    }
}

#[test]
fn adaptive_meshes_grade_towards_the_reentrant_corner() {
    let steps = l_shape_run(0.3, 3000);
    let last = steps.last().unwrap();
    let m = &last.mesh;
    let smallest = (0..m.num_triangles())
        .min_by(|&a, &b| m.diameter(a).partial_cmp(&m.diameter(b)).unwrap())
        .unwrap();
    let near_origin = m.triangle_points(smallest).iter().any(|p| p[0].abs() + p[1].abs() < 1e-12);
    assert!(near_origin);
}

#[test]
fn smooth_mode_keeps_square_meshes_quasi_uniform() {
    let mesh = Arc::new(build_initial_mesh(DomainSpec::unit_square(1)).unwrap());
    let spec = FormulationSpec::new(FormulationTag::F1, Family::Rt0, mesh).unwrap();
    for theta in [0.3, 0.6] {
        for s in adapt_loop(&spec, &AdaptiveParams::new(theta, 3000)).unwrap() {
            let metrics = s.mesh.metrics();
            let (lo, hi) = metrics.h_tri.iter().fold((f64::MAX, 0.0f64), |(a, b), &h| (a.min(h), b.max(h)));
            assert!(hi / lo <= 8.0);
        }
    }
}
