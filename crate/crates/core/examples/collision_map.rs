//! Exact collision map for a Gaussian packet crossing a sigma_x barrier,
//! checked against the full-space oracle.

use qcollide::channel::{PotentialSpec, SMatrixTable, TableMode};
use qcollide::map::{
    apply_map, full_space_oracle, observable_changes, CollisionMap, ORACLE_MAX_NODES,
};
use qcollide::operator::{max_abs, pauli, thermal_state, SystemSpec};
use qcollide::particle::{gaussian_wavepacket, EnergyGrid};

fn main() -> qcollide::Result<()> {
    let sys = SystemSpec::two_level(1.0, 1.0)?;
    let pot = PotentialSpec::barrier(1.0, &pauli::sigma_x(), 20.0, 1.0)?;
    let grid = EnergyGrid::for_gaussian(1.0, 100.0, 0.2, 2001)?;
    let state = gaussian_wavepacket(1.0, 1.0, 100.0, 2.0, 0.2, grid.clone())?;
    let table = SMatrixTable::uniform(&sys, &pot, 4855.0, 5125.0, 2701, TableMode::Interpolated)?;
    let map = CollisionMap::build(&table, &state)?;

    let rho = thermal_state(&sys, 1.0)?;
    let out = apply_map(&map, &rho)?;
    println!("rho' =\n{}", out.matrix());
    println!("H_LS =\n{}", map.lamb_shift().matrix());

    let ch = observable_changes(&map, &rho, &pauli::sigma_x());
    println!(
        "dA = {:.6e} (Lamb shift {:.6e}, dissipative {:.6e})",
        ch.total, ch.lamb_shift, ch.dissipative
    );
    println!(
        "dropped weight {:.2e}, Choi min eigenvalue {:.2e}",
        map.diagnostics.dropped_weight,
        map.choi_min_eigenvalue()
    );

    let oracle = full_space_oracle(&sys, &pot, &rho, &state, &grid, ORACLE_MAX_NODES)?;
    let rel = max_abs(&(out.matrix() - oracle.matrix())) / max_abs(oracle.matrix());
    println!("relative difference to the full-space oracle: {rel:.2e}");
    Ok(())
}
