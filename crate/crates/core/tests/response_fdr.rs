mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;
use qcollide::channel::{Direction, PotentialSpec, SMatrixTable};
use qcollide::map::{amplitude_operator, observable_changes, CollisionMap, EigenOpTable};
use qcollide::operator::{pauli, thermal_state, DensityMatrix, HermitianOperator, SystemSpec, C64};
use qcollide::particle::{narrow_thermal_ensemble, EnergyGrid};
use qcollide::response::continuous::{continuous_transforms, damped_half_line, richardson};
use qcollide::response::{
    chi_aggregate, chi_delta, correlation_time_domain, fdr_check, fdr_check_operator,
    response_time_domain, shifted_thermal_response, ResponseSpectrum,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const P: Direction = Direction::Plus;
const M: Direction = Direction::Minus;

fn barrier_table() -> EigenOpTable {
    let source = SMatrixTable::exact(&two_level(), &symmetric_barrier());
    EigenOpTable::build(&source, &[0.7, 1.3, 2.5, 6.0, 15.0]).unwrap()
}

#[test]
fn identity_observable_has_no_response() {
    let eig = barrier_table();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rho = DensityMatrix::random(2, &mut rng);
    let id = HermitianOperator::identity(2);
    for g in 0..eig.len() {
        for d in 0..eig.bohr().len() {
            for (ao, ai) in [(P, P), (P, M), (M, P), (M, M)] {
                assert_eq!(chi_delta(&eig, g, &rho, &id, d, ao, ai).norm(), 0.0);
            }
        }
    }
    let times = [0.0, 0.3, 2.0];
    let s = response_time_domain(
        &two_level(),
        eig.amplitude_operator(2),
        &rho,
        &id,
        P,
        P,
        &times,
    );
    assert!(s.spectral.iter().chain(&s.direct).all(|z| z.norm() == 0.0));
}

#[test]
fn thermal_ratio_and_zero_frequency() {
    let eig = barrier_table();
    let omega = thermal_state(&two_level(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = HermitianOperator::random(2, &mut rng);
    let bohr = eig.bohr();
    let zero = bohr.zero_index();
    let up = bohr.find(1.0).unwrap();
    let expected = C64::new(0.0, -2.0 * 0.5f64.tanh());
    for g in 0..eig.len() {
        for (ao, ai) in [(P, P), (P, M), (M, P), (M, M)] {
            assert!(chi_delta(&eig, g, &omega, &a, zero, ao, ai).norm() < 1e-13);
            let spec = ResponseSpectrum::at_node(&eig, g, &omega, &a);
            let c = spec.corr(up, ao, ai);
            if c.norm() > 1e-8 {
                assert!((spec.chi(up, ao, ai) / c - expected).norm() < 1e-10);
            }
        }
    }
    assert!((expected.im + 0.924234).abs() < 1e-6);
}

#[test]
fn fdr_holds_for_barrier_model() {
    let eig = barrier_table();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let a = HermitianOperator::random(2, &mut rng);
        let rep = fdr_check(&eig, 1.0, &a).unwrap();
        assert!(rep.worst() <= 1e-12, "{rep:?}");
        assert!(rep.push_through <= 1e-12);
        assert!(rep.max_chi > 1e-3);
    }
    let hot = fdr_check(&eig, 0.0, &pauli::sigma_x()).unwrap();
    assert!(hot.max_chi < 1e-14);
}

#[test]
fn time_domain_forms_agree() {
    let eig = barrier_table();
    let sys = two_level();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rho = DensityMatrix::random(2, &mut rng);
    let a = HermitianOperator::random(2, &mut rng);
    let times: Vec<f64> = (0..25).map(|i| -3.0 + 0.25 * i as f64).collect();
    for g in 0..eig.len() {
        for (ao, ai) in [(P, P), (M, P), (P, M)] {
            let r = response_time_domain(&sys, eig.amplitude_operator(g), &rho, &a, ao, ai, &times);
            assert!(r.max_mismatch() <= 1e-12);
            let c =
                correlation_time_domain(&sys, eig.amplitude_operator(g), &rho, &a, ao, ai, &times);
            assert!(c.max_mismatch() <= 1e-12);
            // t = 0 is the plain sum of components
            let spec = ResponseSpectrum::at_node(&eig, g, &rho, &a);
            let sum: C64 = (0..spec.deltas.len()).map(|d| spec.chi(d, ao, ai)).sum();
            assert!((r.spectral[12] - sum / (2.0 * PI)).norm() < 1e-14);
        }
    }
}

#[test]
fn thermal_response_is_time_homogeneous() {
    let eig = barrier_table();
    let sys = two_level();
    let omega = thermal_state(&sys, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = HermitianOperator::random(2, &mut rng);
    for g in 0..eig.len() {
        for t in [-1.1, 0.0, 0.6, 4.2] {
            let base =
                response_time_domain(&sys, eig.amplitude_operator(g), &omega, &a, P, P, &[t])
                    .direct[0];
            let shifted =
                shifted_thermal_response(&sys, eig.amplitude_operator(g), 1.0, &a, P, P, t, 0.37)
                    .unwrap();
            assert!((base - shifted).norm() <= 1e-12);
        }
    }
}

#[test]
fn thermal_correlation_in_heisenberg_form() {
    let eig = barrier_table();
    let sys = two_level();
    let omega = thermal_state(&sys, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let a = HermitianOperator::random(2, &mut rng);
    let times = [-0.8, 0.0, 1.9];
    for g in 0..eig.len() {
        let c = correlation_time_domain(&sys, eig.amplitude_operator(g), &omega, &a, M, P, &times);
        let t_op = qcollide::map::direction_block(eig.amplitude_operator(g), M, P);
        for (k, &t) in times.iter().enumerate() {
            let a_t = qcollide::operator::heisenberg(&sys, a.matrix(), t);
            let heis = qcollide::operator::trace(
                &(qcollide::operator::anticommutator(&a_t, &t_op) * omega.matrix()),
            ) / (4.0 * PI);
            assert!((c.spectral[k] - heis).norm() <= 1e-12);
        }
    }
}

#[test]
fn aggregate_response_reproduces_lamb_shift_change() {
    let sys = two_level();
    let pot = packet_potential(0.2);
    let table = packet_table(&pot);
    let state = packet_state(X0);
    let map = CollisionMap::build(&table, &state).unwrap();
    let eig = EigenOpTable::build(&table, state.grid().nodes()).unwrap();
    let rho = thermal_state(&sys, 1.0).unwrap();
    let chi = chi_aggregate(&eig, &rho, &pauli::sigma_x(), &state).unwrap();
    let ls = observable_changes(&map, &rho, &pauli::sigma_x()).lamb_shift;
    assert!((chi.re - ls).abs() <= 1e-10, "{} vs {ls}", chi.re);
    assert!(ls.abs() > 1e-4);

    let free = SMatrixTable::exact(&sys, &PotentialSpec::free(1.0, 2).unwrap());
    let eig0 = EigenOpTable::build(&free, state.grid().nodes()).unwrap();
    assert_eq!(
        chi_aggregate(&eig0, &rho, &pauli::sigma_x(), &state)
            .unwrap()
            .norm(),
        0.0
    );
}

#[test]
fn diagonal_particle_state_gives_real_response() {
    let source = SMatrixTable::exact(&two_level(), &symmetric_barrier());
    let state = narrow_state(1.0);
    let eig = EigenOpTable::build(&source, state.grid().nodes()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = HermitianOperator::random(2, &mut rng);
    let omega = thermal_state(&two_level(), 1.0).unwrap();
    let chi = chi_aggregate(&eig, &omega, &a, &state).unwrap();
    assert!(chi.im.abs() <= 1e-8, "{chi}");
    let map = CollisionMap::build(&source, &state).unwrap();
    let rho = DensityMatrix::random(2, &mut rng);
    let chi = chi_aggregate(&eig, &rho, &a, &state).unwrap();
    assert!((chi.re - observable_changes(&map, &rho, &a).lamb_shift).abs() <= 1e-10);
}

#[test]
fn retarded_plus_advanced_is_the_impulse_train() {
    let eig = barrier_table();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let a = HermitianOperator::random(2, &mut rng);
    let rho = DensityMatrix::random(2, &mut rng);
    let spec = ResponseSpectrum::at_node(&eig, 3, &rho, &a);
    let omegas: Vec<f64> = (0..30).map(|i| -3.0 + 0.2 * i as f64 + 0.01).collect();
    let ct = continuous_transforms(&spec, 1.0, P, P, &omegas, 1e-9);
    assert!(ct.retarded.iter().all(|s| !s.flagged));
    for (r, adv) in ct.retarded.iter().zip(&ct.advanced) {
        assert!((r.value + adv.value).norm() < 1e-15);
    }

    // smeared against a test function, the damped transforms converge to the impulses
    let test_fn = |w: f64| (-(w - 0.3) * (w - 0.3) / 2.0).exp();
    let exact: C64 = ct
        .response
        .iter()
        .map(|i| i.weight * test_fn(i.omega))
        .sum();
    let smeared = |eps: f64| {
        let (lo, hi, n) = (-40.0, 40.0, 400_000);
        let h = (hi - lo) / n as f64;
        (0..n)
            .map(|k| {
                let w = lo + (k as f64 + 0.5) * h;
                (damped_half_line(&spec, P, P, w, 1.0, eps)
                    + damped_half_line(&spec, P, P, w, -1.0, eps))
                    * test_fn(w)
                    * h
            })
            .sum::<C64>()
    };
    let limit = richardson(smeared, 0.2, 3);
    assert!((limit - exact).norm() <= 1e-4, "{limit} vs {exact}");
}

#[test]
fn continuous_fdr_and_infinite_temperature() {
    let eig = barrier_table();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let a = HermitianOperator::random(2, &mut rng);
    let omega = thermal_state(&two_level(), 1.0).unwrap();
    let spec = ResponseSpectrum::at_node(&eig, 1, &omega, &a);
    let ct = continuous_transforms(&spec, 1.0, P, M, &[0.5, 1.0], 1e-6);
    assert!(ct.fdr_deviation <= 1e-12);
    assert!(ct.retarded[1].flagged && !ct.retarded[0].flagged);

    let flat = thermal_state(&two_level(), 0.0).unwrap();
    let spec = ResponseSpectrum::at_node(&eig, 1, &flat, &a);
    let ct = continuous_transforms(&spec, 0.0, P, P, &[0.5], 1e-6);
    assert!(ct.response.iter().all(|i| i.weight.norm() < 1e-14));
}

fn random_system(seed: u64) -> (SystemSpec, PotentialSpec, HermitianOperator) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let energies = {
        use rand::Rng;
        let mut e: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        e.sort_by(f64::total_cmp);
        e
    };
    let sys = SystemSpec::new(energies, 1.0).unwrap();
    let op = HermitianOperator::random(3, &mut rng);
    let pot = PotentialSpec::barrier(1.0, &op, 1.0, 0.8).unwrap();
    let a = HermitianOperator::random(3, &mut rng);
    (sys, pot, a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fdr_is_exact_for_random_models(seed in any::<u64>(), beta in 0.0f64..3.0, kin in 2.0f64..30.0) {
        let (sys, pot, a) = random_system(seed);
        let op = amplitude_operator(&SMatrixTable::exact(&sys, &pot), kin).unwrap();
        let rep = fdr_check_operator(&sys, &op, beta, &a).unwrap();
        prop_assert!(rep.worst() <= 1e-12);
        prop_assert!(rep.push_through <= 1e-12);
    }

    #[test]
    fn aggregate_matches_lamb_shift_for_random_models(seed in any::<u64>(), beta in 0.2f64..2.0) {
        let (sys, pot, a) = random_system(seed);
        let source = SMatrixTable::exact(&sys, &pot);
        let grid = EnergyGrid::midpoint(3.0, 12.0, 60).unwrap();
        let state = narrow_thermal_ensemble(1.0, 1.0, beta, grid, [0.7, 0.3]).unwrap();
        let eig = EigenOpTable::build(&source, state.grid().nodes()).unwrap();
        let map = CollisionMap::build(&source, &state).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
        let rho = DensityMatrix::random(3, &mut rng);
        let chi = chi_aggregate(&eig, &rho, &a, &state).unwrap();
        prop_assert!((chi.re - observable_changes(&map, &rho, &a).lamb_shift).abs() <= 1e-10);
    }
}
