mod common;

use common::*;
use qcollide::channel::SMatrixTable;
use qcollide::map::CollisionMap;
use qcollide::operator::{
    c64, commutator, max_abs, thermal_state, trace_distance, CMatrix, DensityMatrix,
};
use qcollide::qme::{integrate_qme, monte_carlo_trajectories, QmeConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn packet_map() -> &'static CollisionMap {
    static MAP: OnceLock<CollisionMap> = OnceLock::new();
    MAP.get_or_init(|| {
        let pot = packet_potential(0.2);
        CollisionMap::build(&packet_table(&pot), &packet_state(X0)).unwrap()
    })
}

fn narrow_map() -> &'static CollisionMap {
    static MAP: OnceLock<CollisionMap> = OnceLock::new();
    MAP.get_or_init(|| {
        let source = SMatrixTable::exact(&two_level(), &symmetric_barrier());
        CollisionMap::build(&source, &narrow_state(1.0)).unwrap()
    })
}

fn vec_of(m: &CMatrix) -> CMatrix {
    CMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

#[test]
fn monte_carlo_agrees_with_master_equation() {
    let mut cfg = QmeConfig::new(packet_map().clone(), 0.1, 30.0, 7).unwrap();
    cfg.seed = 20_240_611;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho0 = DensityMatrix::random(2, &mut rng);
    let det = integrate_qme(&cfg, &rho0).unwrap();
    for s in &det {
        assert!(s.trace_error < 1e-8 && s.min_eigenvalue > -1e-10);
    }
    let reference: Vec<CMatrix> = det.iter().map(|s| s.rho.clone()).collect();
    let mc = monte_carlo_trajectories(&cfg, &rho0).unwrap();
    let z = mc.max_z_score(&reference);
    assert!(z <= 3.0, "max z-score {z}");
    // the collisions do something measurable
    assert!(
        max_abs(
            &(&reference[6]
                - qcollide::operator::heisenberg(cfg.map.system(), rho0.matrix(), -30.0))
        ) > 1e-3
    );
}

#[test]
fn standard_error_follows_square_root_law() {
    let mut cfg = QmeConfig::new(packet_map().clone(), 0.1, 20.0, 3).unwrap();
    cfg.seed = 77;
    let rho0 = DensityMatrix::pure(&[c64(1.0, 0.0), c64(0.0, 0.0)]).unwrap();
    cfg.trajectories = 4000;
    let small = monte_carlo_trajectories(&cfg, &rho0).unwrap();
    cfg.trajectories = 8000;
    let large = monte_carlo_trajectories(&cfg, &rho0).unwrap();
    let e_small = small.std_error[2][(0, 0)].re;
    let e_large = large.std_error[2][(0, 0)].re;
    let ratio = e_large / e_small;
    assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn sampler_is_reproducible() {
    let mut cfg = QmeConfig::new(packet_map().clone(), 0.5, 5.0, 4).unwrap();
    cfg.trajectories = 500;
    cfg.seed = 9;
    let rho0 = thermal_state(&two_level(), 0.3).unwrap();
    let a = monte_carlo_trajectories(&cfg, &rho0).unwrap();
    let b = monte_carlo_trajectories(&cfg, &rho0).unwrap();
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.std_error, b.std_error);
    cfg.seed = 10;
    let c = monte_carlo_trajectories(&cfg, &rho0).unwrap();
    assert_ne!(a.mean, c.mean);
}

#[test]
fn master_equation_thermalises() {
    let cfg = QmeConfig::new(narrow_map().clone(), 1.0, 800.0, 9).unwrap();
    let omega = thermal_state(&two_level(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..3 {
        let rho0 = DensityMatrix::random(2, &mut rng);
        let traj = integrate_qme(&cfg, &rho0).unwrap();
        assert!(traj.iter().all(|s| s.trace_error < 1e-8));
        let last = &traj.last().unwrap().rho;
        assert!(trace_distance(last, omega.matrix()) < 1e-3);
    }
}

#[test]
fn short_time_change_is_linear_in_dt() {
    let map = packet_map().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let rho0 = DensityMatrix::random(2, &mut rng);
    let gen = QmeConfig::new(map.clone(), 0.4, 1.0, 2)
        .unwrap()
        .generator();
    let slope = &gen * vec_of(rho0.matrix());
    let residual = |dt: f64| {
        let cfg = QmeConfig::new(map.clone(), 0.4, dt, 2).unwrap();
        let out = integrate_qme(&cfg, &rho0).unwrap();
        let change = vec_of(&out[1].rho) - vec_of(rho0.matrix());
        max_abs(&(change - slope.map(|z| z * dt)))
    };
    let (r1, r2) = (residual(0.02), residual(0.01));
    assert!((r1 / r2 - 4.0).abs() < 0.4, "{r1} {r2}");
}

#[test]
fn generator_uses_effective_hamiltonian() {
    let cfg = QmeConfig::new(packet_map().clone(), 0.7, 1.0, 2).unwrap();
    let sys = cfg.map.system();
    let h_eff = sys.hamiltonian() + cfg.map.lamb_shift().matrix().scale(0.7 * sys.hbar());
    assert!(max_abs(&(cfg.effective_hamiltonian() - &h_eff)) < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let x = DensityMatrix::random(2, &mut rng).matrix().clone();
    let applied = CMatrix::from_column_slice(2, 2, (cfg.generator() * vec_of(&x)).as_slice());
    let expected = commutator(&h_eff, &x).map(|z| z * c64(0.0, -1.0 / sys.hbar()))
        + cfg.map.dissipator_linear(&x).scale(0.7);
    assert!(max_abs(&(applied - expected)) < 1e-13);
}
