#![allow(dead_code)]

use qcollide::channel::{PotentialSpec, SMatrixTable, TableMode};
use qcollide::operator::{pauli, SystemSpec};
use qcollide::particle::{
    gaussian_wavepacket, narrow_thermal_ensemble, EnergyGrid, ParticleEnergyState,
};

pub const P0: f64 = 100.0;
pub const SIGMA_P: f64 = 0.2;
pub const X0: f64 = 2.0;

pub fn two_level() -> SystemSpec {
    SystemSpec::two_level(1.0, 1.0).unwrap()
}

/// Reference model: `V0 sigma_x` on `[-1/2, 1/2]` with `V0 = lambda hbar v0 / a`.
pub fn packet_potential(lambda: f64) -> PotentialSpec {
    PotentialSpec::barrier(1.0, &pauli::sigma_x(), lambda * P0, 1.0).unwrap()
}

pub fn packet_grid() -> EnergyGrid {
    EnergyGrid::for_gaussian(1.0, P0, SIGMA_P, 2001).unwrap()
}

pub fn packet_state(x0: f64) -> ParticleEnergyState {
    gaussian_wavepacket(1.0, 1.0, P0, x0, SIGMA_P, packet_grid()).unwrap()
}

pub fn packet_table(pot: &PotentialSpec) -> SMatrixTable {
    SMatrixTable::uniform(
        &two_level(),
        pot,
        4855.0,
        5125.0,
        2701,
        TableMode::Interpolated,
    )
    .unwrap()
}

/// Thermal plane-wave mixture, right-moving, on a midpoint grid aligned with the gap.
pub fn narrow_state(beta: f64) -> ParticleEnergyState {
    let grid = EnergyGrid::midpoint(0.0, 40.0, 2000).unwrap();
    narrow_thermal_ensemble(1.0, 1.0, beta, grid, [1.0, 0.0]).unwrap()
}

pub fn symmetric_barrier() -> PotentialSpec {
    PotentialSpec::barrier(1.0, &pauli::sigma_x(), 1.5, 1.0).unwrap()
}
