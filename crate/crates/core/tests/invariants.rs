use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ra_core::beamforming::{
    connectivity_mask, hybrid_factorize, sum_rate, wmmse_precoder, Connectivity, SolverSettings,
};
use ra_core::channel::{complex_gaussian, PathLossParams};
use ra_core::em::{steering_vector, ArrayGeometry, ModeAssignment, ModeScope};
use ra_core::optimizer::{
    coordinate_ascent_modes, evaluate, exhaustive_mode_search, Objective, ObjectiveKind,
    SearchSpace,
};
use ra_core::scenario::{build_scenario, ScenarioConfig};

type CMat = DMatrix<Complex64>;

fn rand_mat(rows: usize, cols: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CMat::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng, 1.0))
}

fn small_scenario(n: usize, seed: u64) -> ra_core::scenario::Scenario {
    build_scenario(&ScenarioConfig {
        num_elements: n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

proptest! {
    #[test]
    fn steering_vector_has_unit_entries(n in 1usize..64, spacing in 0.1f64..2.0, theta in -1.6f64..1.6) {
        let g = ArrayGeometry::new(n, spacing).unwrap();
        let a = steering_vector(&g, theta);
        for x in a.iter() {
            prop_assert!((x.norm() - 1.0).abs() < 1e-12);
        }
        prop_assert!((a.norm_squared() - n as f64).abs() < 1e-9 * n as f64);
    }

    #[test]
    fn path_loss_doubles_distance_by_kappa(r in 1.0f64..500.0, kappa in 1.5f64..4.0) {
        let p = PathLossParams::new(30.0, 1.0, kappa).unwrap();
        let ratio = p.gain(2.0 * r).unwrap() / p.gain(r).unwrap();
        prop_assert!((ratio / 2f64.powf(-kappa) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sum_rate_is_scale_free_in_channel_and_noise(seed in 0u64..1000, s in 0.01f64..100.0) {
        let h = rand_mat(3, 5, seed);
        let f = rand_mat(5, 3, seed + 1);
        let a = sum_rate(&h, &f, 0.3).unwrap();
        let b = sum_rate(&(h * Complex64::new(s, 0.0)), &f, 0.3 * s * s).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wmmse_trace_monotone_and_power_tight(
        seed in 0u64..10_000,
        k in 1usize..4,
        extra in 0usize..4,
        log_noise in -11.0f64..0.0,
    ) {
        let h = rand_mat(k, k + extra, seed);
        let noise = 10f64.powf(log_noise);
        let sol = wmmse_precoder(&h, 1.0, noise, &SolverSettings::default(), None).unwrap();
        for w in sol.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
        prop_assert!((sol.precoder.norm_squared() - 1.0).abs() < 1e-9);
        prop_assert!((sum_rate(&h, &sol.precoder, noise).unwrap() - sol.rate).abs() < 1e-9 * sol.rate.max(1.0));
    }

    #[test]
    fn hybrid_stack_meets_power_and_mask(
        seed in 0u64..10_000,
        n_rf in 1usize..4,
        blocks in 1usize..4,
        kind in prop_oneof![Just(Connectivity::Fully), Just(Connectivity::Sub), Just(Connectivity::Dynamic)],
        power in 0.1f64..10.0,
    ) {
        let n = n_rf * blocks;
        let target = rand_mat(n, n_rf.min(2), seed);
        let mask = connectivity_mask(kind, n, n_rf).unwrap();
        let fac = hybrid_factorize(&target, &mask, power, &SolverSettings::default()).unwrap();
        let f = &fac.f_rf * &fac.f_bb;
        prop_assert!((f.norm_squared() - power).abs() < 1e-9);
        for i in 0..n {
            for j in 0..n_rf {
                let x = fac.f_rf[(i, j)];
                if fac.mask.get(i, j) {
                    prop_assert!((x.norm() - 1.0).abs() < 1e-12);
                } else {
                    prop_assert_eq!(x, Complex64::new(0.0, 0.0));
                }
            }
        }
        for w in fac.trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ascent_between_init_and_exhaustive(
        seed in 0u64..1000,
        n in 2usize..4,
        radar in any::<bool>(),
        init in proptest::collection::vec(0usize..3, 3),
    ) {
        let sc = small_scenario(n, seed);
        let kind = if radar { ObjectiveKind::RadarScnr } else { ObjectiveKind::CommSumRate };
        let obj = Objective::for_scenario(kind, &sc);
        let space = SearchSpace::new(vec![0, 2, 5], vec![0], ModeScope::PerElement);
        let init_modes = ModeAssignment::per_element(
            init[..n].iter().map(|&i| space.patterns[i]).collect(),
            vec![0; n],
        );
        let init_value = evaluate(&obj, &sc, &init_modes).unwrap();
        let ca = coordinate_ascent_modes(&obj, &sc, &space, &init_modes, 20).unwrap();
        let ex = exhaustive_mode_search(&obj, &sc, &space).unwrap();
        prop_assert!(ca.best_value >= init_value);
        // inner solvers are non-convex; warm starts may land a hair above the
        // cold optimum
        prop_assert!(ex.best_value >= ca.best_value * (1.0 - 1e-5));
        for w in ca.trace.windows(2) {
            prop_assert!(w[1].value >= w[0].value);
        }
        let again = coordinate_ascent_modes(&obj, &sc, &space, &init_modes, 20).unwrap();
        prop_assert!(ca.same_outcome(&again));
    }

    #[test]
    fn radar_mode_choice_ignores_joint_scaling(seed in 0u64..1000, log_s in -3.0f64..3.0) {
        let sc = small_scenario(4, seed);
        let space = SearchSpace::new((0..7).collect(), vec![0], ModeScope::ArrayUniform);
        let obj = Objective::for_scenario(ObjectiveKind::RadarScnr, &sc);
        let base = exhaustive_mode_search(&obj, &sc, &space).unwrap();

        let s = 10f64.powf(log_s);
        let mut scaled = sc.clone();
        scaled.noise *= s;
        scaled.target.reflectivity *= s;
        for c in &mut scaled.clutter {
            c.reflectivity *= s;
        }
        let obj_s = Objective::for_scenario(ObjectiveKind::RadarScnr, &scaled);
        let other = exhaustive_mode_search(&obj_s, &scaled, &space).unwrap();
        prop_assert_eq!(base.best_modes, other.best_modes);
        prop_assert!((other.best_value / base.best_value - 1.0).abs() < 1e-6);
    }
}
