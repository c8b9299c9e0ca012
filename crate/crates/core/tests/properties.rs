mod common;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use common::{be_step, linear_problem, random_spd, random_state};
use proxode::bench::report::{read_json_report, write_json, Metadata, Report, Row};
use proxode::inner::{fixed_point_solve, newton_solve, run_inner, ProxWeights};
use proxode::problem::validate_gradient_consistency;
use proxode::stability::{in_stability_domain, StabilityMethod};
use proxode::{make_uniform_grid, InnerConfig, InnerMethod, InstrumentedRhs};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_ends_exactly_and_never_overshoots(t0 in -5.0f64..5.0, span in 1e-3f64..10.0, frac in 1e-4f64..1.0) {
        let step = span * frac;
        let grid = make_uniform_grid(t0, t0 + span, step).unwrap();
        prop_assert_eq!(grid.times[0], t0);
        prop_assert_eq!(*grid.times.last().unwrap(), t0 + span);
        for k in 0..grid.steps() {
            prop_assert!(grid.gap(k) > 0.0);
            prop_assert!(grid.gap(k) <= step * (1.0 + 1e-9));
        }
        for k in 0..grid.steps().saturating_sub(1) {
            prop_assert!(grid.is_full_step(k));
        }
    }

    #[test]
    fn inner_solvers_match_a_linear_solve(d in 2usize..24, seed in 0u64..1000, s in 1e-3f64..0.02) {
        let hi = 40.0;
        let a = random_spd(d, 0.0, hi, seed);
        let problem = linear_problem(a.clone());
        let h = random_state(d, seed + 1);
        let direct = be_step(&a, &h, s);
        let weights = ProxWeights::backward_euler(&h, s, s);
        let tol = 1e-11;

        let mut rhs = InstrumentedRhs::new(&problem);
        let fr = InnerConfig::new(InnerMethod::Fr, 0.9 / (1.0 + s * hi), tol).with_max_iter(50_000);
        let out = run_inner(&weights, &h, &fr, &mut rhs).unwrap();
        prop_assert!(out.converged);
        prop_assert!((&out.z_star - &direct).norm() <= 100.0 * tol);

        // s * hi < 1 keeps the fixed-point map contractive
        let mut rhs = InstrumentedRhs::new(&problem);
        let out = fixed_point_solve(&weights, &h, tol, 10_000, &mut rhs).unwrap();
        prop_assert!(out.converged);
        prop_assert!((&out.z_star - &direct).norm() <= 100.0 * tol);

        let mut rhs = InstrumentedRhs::new(&problem);
        let out = newton_solve(&weights, &h, tol, 10, &mut rhs).unwrap();
        prop_assert!(out.converged);
        prop_assert!((&out.z_star - &direct).norm() <= 1e-12 * (1.0 + direct.norm()));
    }

    #[test]
    fn left_half_plane_is_inside_the_implicit_domains(re in -100.0f64..-1e-3, im in -100.0f64..100.0) {
        let z = Complex64::new(re, im);
        prop_assert!(in_stability_domain(StabilityMethod::BackwardEuler, z).inside);
        prop_assert!(in_stability_domain(StabilityMethod::CrankNicolson, z).inside);
        let fe = in_stability_domain(StabilityMethod::ForwardEuler, z).inside;
        prop_assert_eq!(fe, (z + 1.0).norm() < 1.0);
    }

    #[test]
    fn right_half_plane_is_outside_every_domain(re in 1e-3f64..1.9, im in -3.0f64..3.0) {
        let z = Complex64::new(re, im);
        for m in [StabilityMethod::ForwardEuler, StabilityMethod::CrankNicolson, StabilityMethod::Dopri5] {
            prop_assert!(!in_stability_domain(m, z).inside, "{}", m.name());
        }
    }

    #[test]
    fn reports_round_trip_through_json(
        errs in proptest::collection::vec(proptest::option::of(1e-300f64..1e3), 1..6),
        nfe in 0u64..1_000_000,
    ) {
        let rows: Vec<Row> = errs.iter().enumerate().map(|(i, e)| Row {
            solver: format!("prox-be/fr{i}"),
            param: 0.1 / (i + 1) as f64,
            final_error: *e,
            nfe: nfe + i as u64,
            wall_time_ns: 17 * i as u64,
            inner_iter_total: 3 * nfe,
            accepted: i as u64,
            rejected: 0,
            status: if e.is_some() { "ok".into() } else { "divergence".into() },
        }).collect();
        let report = Report {
            metadata: Metadata {
                benchmark: "diffusion".into(),
                seed: 42,
                grid_size: 128,
                metric: "final-error".into(),
                config_hash: "ab".repeat(32),
                artifact_version: "0.1.0".into(),
            },
            rows,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_json(&report, std::fs::File::create(&path).unwrap()).unwrap();
        prop_assert_eq!(read_json_report(&path).unwrap(), report);
    }

    #[test]
    fn linear_potentials_are_gradient_consistent(d in 1usize..12, seed in 0u64..1000) {
        let problem = linear_problem(random_spd(d, 0.0, 10.0, seed));
        let rep = validate_gradient_consistency(&problem, 0.0, 8, 1e-5, seed).unwrap();
        prop_assert!(rep.passed());
    }
}

#[test]
fn inconsistent_potential_is_caught() {
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
    let problem = proxode::OdeProblem::new(2, move |_, h| -(&a * h)).with_potential(|_, h| h.norm_squared());
    let rep = validate_gradient_consistency(&problem, 0.0, 8, 1e-5, 1).unwrap();
    assert!(!rep.passed());
}
