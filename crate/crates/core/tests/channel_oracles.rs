use num_complex::Complex64;
use proptest::prelude::*;
use qcollide::channel::{
    born_amplitude, solve_smatrix, verify_optical_theorem, verify_unitarity, Direction,
    PotentialSpec, Segment,
};
use qcollide::operator::{pauli, HermitianOperator, SystemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Reflection and transmission of a scalar barrier `v0` on `[-a/2, a/2]`, unit
/// mass and hbar, from the textbook closed form.
fn barrier_oracle(energy: f64, v0: f64, a: f64) -> (Complex64, Complex64) {
    let k = Complex64::new((2.0 * energy).sqrt(), 0.0);
    let q = (Complex64::new(2.0 * (energy - v0), 0.0)).sqrt();
    let d = 2.0 * k * q * (q * a).cos() - I * (k * k + q * q) * (q * a).sin();
    let t = (-I * k * a).exp() * 2.0 * k * q / d;
    let r = I * (q * q - k * k) * (q * a).sin() / d;
    (r * (-I * k * a).exp(), t)
}

#[test]
fn square_barrier_matches_closed_form() {
    let sys = SystemSpec::new(vec![0.0], 1.0).unwrap();
    for &(v0, a) in &[(1.0, 1.0), (-2.0, 0.7), (5.0, 1.3)] {
        let pot = PotentialSpec::barrier(1.0, &HermitianOperator::identity(1), v0, a).unwrap();
        for &e in &[0.3, 0.99, 1.7, 4.2, 12.0] {
            let b = solve_smatrix(&sys, &pot, e).unwrap();
            let (r, t) = barrier_oracle(e, v0, a);
            let (p, m) = (Direction::Plus, Direction::Minus);
            assert!((b.s(p, 0, p, 0) - t).norm() < 1e-12, "t at E={e}");
            assert!((b.s(m, 0, p, 0) - r).norm() < 1e-12, "r at E={e}");
            // symmetric barrier: left and right incidence agree
            assert!((b.s(m, 0, m, 0) - t).norm() < 1e-12);
            assert!((b.s(p, 0, m, 0) - r).norm() < 1e-12);
        }
    }
}

#[test]
fn degenerate_sigma_x_decouples_into_two_barriers() {
    let sys = SystemSpec::new(vec![0.0, 0.0], 1.0).unwrap();
    let (v0, a) = (0.8, 1.1);
    let pot = PotentialSpec::barrier(1.0, &pauli::sigma_x(), v0, a).unwrap();
    for &e in &[0.5, 2.0, 6.0] {
        let b = solve_smatrix(&sys, &pot, e).unwrap();
        let (rp, tp) = barrier_oracle(e, v0, a);
        let (rm, tm) = barrier_oracle(e, -v0, a);
        for (ao, ai, plus, minus) in [
            (Direction::Plus, Direction::Plus, tp, tm),
            (Direction::Minus, Direction::Plus, rp, rm),
        ] {
            let diag = 0.5 * (plus + minus);
            let off = 0.5 * (plus - minus);
            assert!((b.s(ao, 0, ai, 0) - diag).norm() < 1e-12);
            assert!((b.s(ao, 1, ai, 1) - diag).norm() < 1e-12);
            assert!((b.s(ao, 0, ai, 1) - off).norm() < 1e-12);
            assert!((b.s(ao, 1, ai, 0) - off).norm() < 1e-12);
        }
    }
}

#[test]
fn born_is_the_weak_coupling_limit() {
    let sys = SystemSpec::two_level(1.0, 1.0).unwrap();
    let op =
        HermitianOperator::new(pauli::sigma_x().matrix() + pauli::sigma_z().matrix().scale(0.4))
            .unwrap();
    let e_total = 3.1;
    let mut prev = f64::INFINITY;
    for &lambda in &[1e-2, 1e-3, 1e-4] {
        let pot = PotentialSpec::barrier(1.0, &op, lambda, 1.2).unwrap();
        let b = solve_smatrix(&sys, &pot, e_total).unwrap();
        let mut err = 0.0f64;
        for ji in 0..2 {
            for jo in 0..2 {
                for ai in Direction::ALL {
                    for ao in Direction::ALL {
                        let kin = e_total - sys.energy(ji);
                        let born = born_amplitude(&sys, &pot, ji, ai, jo, ao, kin).unwrap();
                        err = err.max((b.t(ao, jo, ai, ji) - born).norm() / lambda);
                    }
                }
            }
        }
        // relative error of first order is O(lambda)
        assert!(err < 10.0 * lambda, "lambda={lambda} err={err}");
        assert!(err < prev);
        prev = err;
    }
}

fn random_potential(seed: u64, n: usize, layers: usize) -> (SystemSpec, PotentialSpec) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    e.sort_by(f64::total_cmp);
    let sys = SystemSpec::new(e, 1.0).unwrap();
    let mut x = rng.random_range(-2.0..0.0);
    let mut segs = Vec::new();
    for _ in 0..layers {
        let w = rng.random_range(0.1..0.8);
        let op = HermitianOperator::random(n, &mut rng);
        segs.push(Segment {
            x_left: x,
            x_right: x + w,
            w: HermitianOperator::new(op.matrix().scale(rng.random_range(0.2..3.0))).unwrap(),
        });
        x += w + if rng.random_bool(0.3) {
            rng.random_range(0.1..0.5)
        } else {
            0.0
        };
    }
    let pot = PotentialSpec::from_segments(1.0, n, segs).unwrap();
    (sys, pot)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unitarity_and_optical_theorem(seed in any::<u64>(), n in 1usize..4, layers in 1usize..4, e in 0.0f64..6.0) {
        let (sys, pot) = random_potential(seed, n, layers);
        let energy = sys.energy(0) + 0.05 + e;
        let block = match solve_smatrix(&sys, &pot, energy) {
            Ok(b) => b,
            Err(qcollide::Error::Threshold { .. }) => return Ok(()),
            Err(err) => panic!("{err}"),
        };
        let u = verify_unitarity(&block);
        prop_assert!(u.max() < 1e-10, "{u:?}");
        let o = verify_optical_theorem(&block);
        prop_assert!(o.general_identity < 1e-10);
        prop_assert!(o.forward_identity < 1e-10);
        prop_assert!(o.max_forward_imag <= 1e-12);
        prop_assert!(o.min_cross_section_eigenvalue >= -1e-12);
    }
}
