//! Poisson-distributed collisions: deterministic master equation against
//! Monte Carlo trajectories, and relaxation to the thermal state.

use qcollide::channel::{PotentialSpec, SMatrixTable};
use qcollide::map::CollisionMap;
use qcollide::operator::{
    pauli, thermal_state, trace_distance, CMatrix, DensityMatrix, SystemSpec,
};
use qcollide::particle::{narrow_thermal_ensemble, EnergyGrid};
use qcollide::qme::{integrate_qme, monte_carlo_trajectories, QmeConfig};

fn main() -> qcollide::Result<()> {
    let sys = SystemSpec::two_level(1.0, 1.0)?;
    let pot = PotentialSpec::barrier(1.0, &pauli::sigma_x(), 1.5, 1.0)?;
    let grid = EnergyGrid::midpoint(0.0, 40.0, 2000)?;
    let particles = narrow_thermal_ensemble(1.0, 1.0, 1.0, grid, [1.0, 0.0])?;
    let map = CollisionMap::build(&SMatrixTable::exact(&sys, &pot), &particles)?;

    let rho0 = DensityMatrix::pure(&[
        qcollide::operator::c64(1.0, 0.0),
        qcollide::operator::c64(0.0, 0.0),
    ])?;
    let omega = thermal_state(&sys, 1.0)?;
    let mut cfg = QmeConfig::new(map, 0.5, 40.0, 9)?;
    cfg.trajectories = 4000;
    cfg.seed = 1;

    let det = integrate_qme(&cfg, &rho0)?;
    let mc = monte_carlo_trajectories(&cfg, &rho0)?;
    println!(
        "{:>6} {:>12} {:>12} {:>10} {:>12}",
        "t", "p_e (ME)", "p_e (MC)", "+-", "D(rho, w)"
    );
    for (s, (mean, se)) in det.iter().zip(mc.mean.iter().zip(&mc.std_error)) {
        println!(
            "{:>6.1} {:>12.6} {:>12.6} {:>10.2e} {:>12.3e}",
            s.t,
            s.rho[(1, 1)].re,
            mean[(1, 1)].re,
            se[(1, 1)].re,
            trace_distance(&s.rho, omega.matrix())
        );
    }
    let reference: Vec<CMatrix> = det.iter().map(|s| s.rho.clone()).collect();
    println!("max z-score {:.2}", mc.max_z_score(&reference));
    println!(
        "thermal excited population {:.6}",
        omega.matrix()[(1, 1)].re
    );
    Ok(())
}
