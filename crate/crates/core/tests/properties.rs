use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use odeclass::covering::{self, kolmogorov_lower, kolmogorov_upper, ClassConstants, Target};
use odeclass::deriv::{builtins, expand_autonomous, expand_nonautonomous, taylor_integrate, OdeKind};
use odeclass::estimators::{qcqp_solve, Ellipsoid, QcqpOptions};
use odeclass::gronwall::{linear_pair, verify_pair};
use odeclass::numeric::{factorial, linspace};
use odeclass::rates::{critical_radius, kernel_radius, sample_threshold, RateParams};

fn psd(entries: &[f64], p: usize) -> DMatrix<f64> {
    let b = DMatrix::from_row_slice(p, p, &entries[..p * p]);
    b.transpose() * b / p as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn autonomous_multiplicity_is_factorial(k in 1usize..=10) {
        prop_assert_eq!(expand_autonomous(k).unwrap().total_multiplicity() as f64, factorial(k - 1));
    }

    #[test]
    fn nonautonomous_multiplicity_is_capped(k in 1usize..=9) {
        let e = expand_nonautonomous(k).unwrap();
        prop_assert!(e.total_multiplicity() as f64 <= 2f64.powi(k as i32 - 1) * factorial(k - 1));
        for t in &e.terms {
            prop_assert!((t.max_factor_order() as usize) < k);
        }
    }

    #[test]
    fn kolmogorov_sandwich(delta in 1e-6f64..0.999, gamma in 0usize..12) {
        let up = kolmogorov_upper(delta, gamma).unwrap();
        prop_assert!(kolmogorov_lower(delta, gamma).unwrap() <= up);
        prop_assert!(kolmogorov_upper(delta * 0.5, gamma).unwrap() >= up);
    }

    #[test]
    fn solution_bound_is_a_minimum(delta in 1e-4f64..4.9, beta in 0usize..8, nonauto in any::<bool>()) {
        let kind = if nonauto { OdeKind::Nonautonomous } else { OdeKind::Autonomous };
        let c = ClassConstants::default();
        let r = covering::solution_class_bound(delta, beta, &c, kind, Target::Solutions).unwrap();
        let wider = covering::solution_class_bound(delta, beta + 1, &c, kind, Target::Solutions).unwrap();
        prop_assert!(wider.value <= r.value);
        prop_assert!(r.minimizing_gamma.unwrap() <= beta);
        let first = if nonauto { covering::w_bounds(delta, 0, &c).unwrap().first } else { covering::z_bounds(delta, 0, &c).unwrap().first };
        prop_assert!(r.value <= first);
    }

    #[test]
    fn radii_shrink_with_more_smoothness_and_data(n in 1usize..100_000, sigma in 0.05f64..5.0, beta in 0usize..8) {
        let p = RateParams::new(n, sigma, beta).unwrap();
        let q = RateParams::new(n, sigma, beta + 1).unwrap();
        let more = RateParams::new(n * 4, sigma, beta).unwrap();
        for kind in [OdeKind::Autonomous, OdeKind::Nonautonomous] {
            prop_assert!(critical_radius(&q, kind).r_squared <= critical_radius(&p, kind).r_squared);
            prop_assert!(critical_radius(&more, kind).r_squared <= critical_radius(&p, kind).r_squared);
        }
        prop_assert!(kernel_radius(&q).r_squared <= kernel_radius(&p).r_squared);
    }

    #[test]
    fn threshold_scales_with_noise(beta in 2usize..9, sigma in 0.1f64..10.0) {
        let a = sample_threshold(beta, sigma);
        prop_assert!((a / sample_threshold(beta, 1.0) - sigma * sigma).abs() <= 1e-9 * sigma * sigma);
    }

    #[test]
    fn taylor_matches_linear_solution(theta in -1.0f64..1.0) {
        let ode = builtins::linear(theta);
        let grid = linspace(0.0, 0.5, 11);
        let traj = taylor_integrate(&ode, &grid, 2).unwrap();
        for p in &traj.points {
            let exact = (-theta * p.x).exp();
            prop_assert!((p.y() - exact).abs() <= 1e-10);
            prop_assert!((p.derivs[1] + theta * exact).abs() <= 1e-9);
        }
    }

    #[test]
    fn qcqp_is_feasible_and_stationary(
        p in 2usize..12,
        hv in prop::collection::vec(-1.0f64..1.0, 144),
        qv in prop::collection::vec(-1.0f64..1.0, 144),
        gv in prop::collection::vec(-3.0f64..3.0, 12),
        radius in 1e-3f64..2.0,
    ) {
        let h = psd(&hv, p) + DMatrix::identity(p, p) * 1e-2;
        let q = psd(&qv, p);
        let g = DVector::from_column_slice(&gv[..p]);
        let sol = qcqp_solve(&h, &g, &[Ellipsoid::new(q, radius)], &QcqpOptions::default()).unwrap();
        prop_assert!(sol.diagnostics.slacks[0] >= -1e-8);
        prop_assert!(sol.diagnostics.kkt_residual <= 1e-6);
        prop_assert!(sol.diagnostics.multipliers[0] >= 0.0);
    }

    #[test]
    fn gronwall_bound_holds_for_linear_pairs(
        f in -1.0f64..1.0, df in -0.3f64..0.3, y0 in -0.5f64..0.5, dz in -0.2f64..0.2,
    ) {
        let pair = linear_pair(vec![f], vec![f + df], vec![y0], vec![y0 + dz], 1.0, 4.0).unwrap();
        let r = verify_pair(&pair, &linspace(0.0, 1.0, 41), 1).unwrap();
        prop_assert!(r.max_ratio <= 1.0 + 1e-6, "{}", r.max_ratio);
    }
}
