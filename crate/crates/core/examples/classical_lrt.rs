//! Closed-system linear response: response function, susceptibility and
//! the thermal fluctuation-dissipation relation of a three-level system.

use qcollide::kubo::{classical_lrt_suite, lrt_response_function};
use qcollide::operator::{c64, thermal_state, CMatrix, HermitianOperator, SystemSpec};

fn main() -> qcollide::Result<()> {
    let sys = SystemSpec::new(vec![0.0, 0.7, 1.9], 1.0)?;
    let a = HermitianOperator::new(CMatrix::from_row_slice(
        3,
        3,
        &[
            c64(0.2, 0.0),
            c64(1.0, 0.3),
            c64(0.0, 0.5),
            c64(1.0, -0.3),
            c64(-0.4, 0.0),
            c64(0.6, 0.0),
            c64(0.0, -0.5),
            c64(0.6, 0.0),
            c64(0.1, 0.0),
        ],
    ))?;
    let v = HermitianOperator::new(CMatrix::from_fn(3, 3, |r, c| {
        if r.abs_diff(c) == 1 {
            c64(1.0, 0.0)
        } else {
            c64(0.0, 0.0)
        }
    }))?;
    let beta = 2.0;

    let rho = thermal_state(&sys, beta)?;
    for t in [0.0, 0.5, 1.0, 2.0] {
        println!(
            "phi(t = {t}) = {:.6e}",
            lrt_response_function(&sys, a.matrix(), v.matrix(), rho.matrix(), t)
        );
    }
    let omegas: Vec<f64> = (0..9).map(|k| -2.0 + 0.5 * k as f64).collect();
    let report = classical_lrt_suite(&sys, &a, &a, beta, &omegas)?;
    for imp in &report.impulses {
        println!(
            "omega {:+.2}: Im chi weight {:+.6e}, C weight {:+.6e}, FDR deviation {:.1e}",
            imp.omega, imp.chi_imag_weight, imp.correlation_weight, imp.deviation
        );
    }
    for (w, chi, near) in &report.susceptibility {
        println!(
            "chi({w:+.2}) = {chi:.6e}{}",
            if *near { " (near a pole)" } else { "" }
        );
    }
    Ok(())
}
