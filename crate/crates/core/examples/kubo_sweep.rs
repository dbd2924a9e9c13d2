//! Exact change of sigma_x against Kubo's formula as the coupling grows.

use qcollide::channel::{PotentialSpec, SMatrixTable, TableMode};
use qcollide::kubo::{kubo_convolution, KuboConfig};
use qcollide::map::{observable_changes, CollisionMap};
use qcollide::operator::{pauli, thermal_state, SystemSpec};
use qcollide::particle::{gaussian_wavepacket, EnergyGrid};
use rayon::prelude::*;

fn main() -> qcollide::Result<()> {
    let sys = SystemSpec::two_level(1.0, 1.0)?;
    let (p0, x0, sigma_p) = (100.0, 2.0, 0.2);
    let grid = EnergyGrid::for_gaussian(1.0, p0, sigma_p, 2001)?;
    let state = gaussian_wavepacket(1.0, 1.0, p0, x0, sigma_p, grid)?;
    let rho = thermal_state(&sys, 1.0)?;

    let lambdas = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0];
    let rows: Vec<qcollide::Result<(f64, f64, f64)>> = lambdas
        .par_iter()
        .map(|&lambda| {
            // V0 = lambda hbar v0 / a
            let pot = PotentialSpec::barrier(1.0, &pauli::sigma_x(), lambda * p0, 1.0)?;
            let table =
                SMatrixTable::uniform(&sys, &pot, 4855.0, 5125.0, 2701, TableMode::Interpolated)?;
            let map = CollisionMap::build(&table, &state)?;
            let exact = observable_changes(&map, &rho, &pauli::sigma_x()).total;
            let cfg = KuboConfig::thermal(&sys, pauli::sigma_x(), 1.0, x0, p0)?;
            let kubo = kubo_convolution(&sys, &pot, &cfg)?.value;
            Ok((lambda, exact, kubo))
        })
        .collect();

    println!(
        "{:>6} {:>14} {:>14} {:>10}",
        "lambda", "dA exact", "dA Kubo", "rel diff"
    );
    for row in rows {
        let (l, e, k) = row?;
        println!(
            "{l:>6} {e:>14.6e} {k:>14.6e} {:>10.3e}",
            (e - k).abs() / k.abs()
        );
    }
    Ok(())
}
