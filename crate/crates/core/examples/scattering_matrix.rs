//! Coupled-channel S-matrix of a two-level system behind a sigma_x barrier,
//! with its unitarity and optical-theorem residuals.

use qcollide::channel::{
    solve_smatrix, verify_optical_theorem, verify_unitarity, Direction, PotentialSpec,
};
use qcollide::operator::{pauli, SystemSpec};

fn main() -> qcollide::Result<()> {
    let sys = SystemSpec::two_level(1.0, 1.0)?;
    let pot = PotentialSpec::barrier(1.0, &pauli::sigma_x(), 2.0, 1.0)?;
    let (p, m) = (Direction::Plus, Direction::Minus);

    println!(
        "{:>8} {:>12} {:>12} {:>12} {:>10} {:>10}",
        "E", "|t_00|^2", "|r_00|^2", "|t_10|^2", "unitarity", "optical"
    );
    for e in [0.6, 1.0, 2.0, 5.0, 20.0] {
        let b = solve_smatrix(&sys, &pot, e)?;
        let o = verify_optical_theorem(&b);
        println!(
            "{e:>8.2} {:>12.6} {:>12.6} {:>12.6} {:>10.1e} {:>10.1e}",
            b.s(p, 0, p, 0).norm_sqr(),
            b.s(m, 0, p, 0).norm_sqr(),
            b.s(p, 1, p, 0).norm_sqr(),
            verify_unitarity(&b).max(),
            o.general_identity.max(o.forward_identity),
        );
    }
    // below the excited threshold only the ground channel is open
    let b = solve_smatrix(&sys, &pot, 0.2)?;
    println!(
        "open block indices at E = 0.2 (direction-major): {:?}",
        b.open_indices()
    );
    Ok(())
}
