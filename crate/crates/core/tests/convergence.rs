use std::sync::Arc;

use lseig_core::eigsolve::{solve_finite_spectrum, FormulationTag};
use lseig_core::estimator::{estimate, EstimatorOptions};
use lseig_core::fespace::Family;
use lseig_core::formulations::{
    align_cluster, build_pencil, compute_error_norms, solve_galerkin, solve_mixed, ErrorRecord, FormulationSpec,
    SquareMode,
};
use lseig_core::eigsolve::SolveOptions;
use lseig_core::mesh::{build_initial_mesh, DomainSpec, Mesh};

fn square(levels: usize) -> Arc<Mesh> {
    let mut m = build_initial_mesh(DomainSpec::unit_square(1)).unwrap();
    for _ in 0..levels {
        m = m.refine_uniform();
    }
    Arc::new(m)
}

fn rate(a: f64, b: f64) -> f64 {
    (a / b).log2()
}

fn first_mode(family: Family, levels: usize) -> (ErrorRecord, f64) {
    let mode = SquareMode { m: 1, n: 1 };
    let d = build_pencil(&FormulationSpec::new(FormulationTag::F1, family, square(levels)).unwrap()).unwrap();
    let pairs = solve_finite_spectrum(&d.pencil, 1).unwrap();
    let (s, u) = align_cluster(&d, &pairs, &mode);
    let rec = compute_error_norms(&d, &s, &u, Some(pairs[0].lambda), &mode);
    let eta = estimate(&d, &pairs[0], EstimatorOptions::default()).unwrap().eta();
    (rec, eta)
}

#[test]
fn first_order_rates_on_the_square() {
    for family in [Family::Rt0, Family::Bdm1] {
        let recs: Vec<ErrorRecord> = (2..5).map(|l| first_mode(family, l).0).collect();
        for w in recs.windows(2) {
            assert!(rate(w[0].lambda.unwrap(), w[1].lambda.unwrap()) >= 1.8, "{family:?}");
            let h1 = |r: &ErrorRecord| (r.u_l2.unwrap().powi(2) + r.grad_u_l2.unwrap().powi(2)).sqrt();
            assert!(rate(h1(&w[0]), h1(&w[1])) >= 0.8, "{family:?}");
        }
    }
}

#[test]
fn effectivity_is_stable_under_uniform_refinement() {
    let eff: Vec<f64> = (1..5)
        .map(|l| {
            let (rec, eta) = first_mode(Family::Rt0, l);
            eta / rec.energy().unwrap()
        })
        .collect();
    let (lo, hi) = eff.iter().fold((f64::MAX, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    assert!(lo > 0.05 && hi < 20.0, "{eff:?}");
    assert!(hi / lo < 3.0, "{eff:?}");
}

#[test]
fn baselines_converge_at_second_order() {
    let exact = 2.0 * std::f64::consts::PI.powi(2);
    let opts = SolveOptions::default();
    let pep: Vec<f64> = (2..5).map(|l| solve_galerkin(square(l), 1, &opts).unwrap().1[0].lambda).collect();
    let mixed: Vec<f64> = (2..5).map(|l| solve_mixed(square(l), 1, &opts).unwrap().2[0].lambda).collect();
    for v in [&pep, &mixed] {
        for w in v.windows(2) {
            assert!(rate((w[0] - exact).abs(), (w[1] - exact).abs()) > 1.8);
        }
    }
    // Conforming Galerkin eigenvalues are upper bounds.
    assert!(pep.iter().all(|&l| l > exact));
}
