//! Non-perturbative response spectra of one collision and the
//! fluctuation-dissipation relation they satisfy in a thermal state.

use qcollide::channel::{Direction, PotentialSpec, SMatrixTable};
use qcollide::map::amplitude_operator;
use qcollide::operator::{pauli, thermal_state, SystemSpec};
use qcollide::response::{fdr_check_operator, response_time_domain, ResponseSpectrum};

fn main() -> qcollide::Result<()> {
    let sys = SystemSpec::two_level(1.0, 1.0)?;
    let pot = PotentialSpec::barrier(1.0, &pauli::sigma_x(), 1.5, 1.0)?;
    let source = SMatrixTable::exact(&sys, &pot);
    let beta = 1.0;
    let rho = thermal_state(&sys, beta)?;
    let a = pauli::sigma_x();
    let op = amplitude_operator(&source, 3.0)?;

    let spec = ResponseSpectrum::from_operator(&sys, &op, rho.matrix(), &a);
    let (p, m) = (Direction::Plus, Direction::Minus);
    for (d, delta) in spec.deltas.iter().enumerate() {
        for (ao, ai) in [(p, p), (m, p)] {
            let (chi, c) = (spec.chi(d, ao, ai), spec.corr(d, ao, ai));
            if c.norm() < 1e-14 {
                continue;
            }
            println!(
                "Delta {delta:+.1} {}{}: chi = {chi:.6e}, C = {c:.6e}, chi/C = {:.6}",
                ao.symbol(),
                ai.symbol(),
                chi / c
            );
        }
    }
    println!(
        "expected chi/C for Delta = +1: -2i tanh(beta/2) = {:.6}i",
        -2.0 * (beta / 2.0f64).tanh()
    );

    let rep = fdr_check_operator(&sys, &op, beta, &a)?;
    println!(
        "FDR deviation {:.2e}, push-through {:.2e}",
        rep.max_deviation, rep.push_through
    );

    let times: Vec<f64> = (0..5).map(|k| k as f64 * 0.75).collect();
    let samples = response_time_domain(&sys, &op, &rho, &a, p, p, &times);
    for (t, chi) in times.iter().zip(&samples.spectral) {
        println!("chi(t = {t:.2}) = {chi:.6e}");
    }
    Ok(())
}
