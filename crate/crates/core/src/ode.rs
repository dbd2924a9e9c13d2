//! Matrix-valued ODE steppers: adaptive Dormand-Prince 5(4) and classical RK4.

use crate::error::{Error, Result};
use crate::operator::CMatrix;

#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `y' = f(t, y)` from `t0` to `t1` with embedded error control.
pub fn dopri45(
    f: impl Fn(f64, &CMatrix) -> CMatrix,
    t0: f64,
    t1: f64,
    y0: CMatrix,
    tol: Tolerances,
) -> Result<(CMatrix, OdeStats)> {
    let mut stats = OdeStats::default();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok((y0, stats));
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut h = span.abs() / 100.0;
    let mut k1 = f(t, &y);
    while (t1 - t) * dir > 0.0 {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return Err(Error::validation(format!(
                "ODE step budget exhausted at t = {t}"
            )));
        }
        h = h.min((t1 - t).abs());
        let hs = h * dir;
        let mut k: Vec<CMatrix> = Vec::with_capacity(7);
        k.push(k1.clone());
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    ys += kj * crate::operator::c64(A[s][j] * hs, 0.0);
                }
            }
            k.push(f(t + C[s] * hs, &ys));
        }
        let mut y_new = y.clone();
        let mut err = CMatrix::zeros(y.nrows(), y.ncols());
        for s in 0..7 {
            if B[s] != 0.0 {
                y_new += &k[s] * crate::operator::c64(B[s] * hs, 0.0);
            }
            let e = B[s] - B_LOW[s];
            if e != 0.0 {
                err += &k[s] * crate::operator::c64(e * hs, 0.0);
            }
        }
        let norm = err
            .iter()
            .zip(y.iter().zip(y_new.iter()))
            .map(|(e, (a, b))| e.norm() / (tol.atol + tol.rtol * a.norm().max(b.norm())))
            .fold(0.0, f64::max);
        if norm <= 1.0 {
            t += hs;
            if (t1 - t) * dir < 0.0 {
                t = t1;
            }
            y = y_new;
            k1 = k.pop().expect("seven stages");
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }
        let factor = if norm == 0.0 {
            5.0
        } else {
            (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if !h.is_finite() || h < 1e-15 * span.abs() {
            return Err(Error::validation(format!(
                "ODE step size underflow at t = {t}"
            )));
        }
    }
    Ok((y, stats))
}

/// One classical fourth-order Runge-Kutta step of an autonomous linear flow.
pub fn rk4_step(f: impl Fn(&CMatrix) -> CMatrix, y: &CMatrix, h: f64) -> CMatrix {
    let half = crate::operator::c64(0.5 * h, 0.0);
    let full = crate::operator::c64(h, 0.0);
    let k1 = f(y);
    let k2 = f(&(y + &k1 * half));
    let k3 = f(&(y + &k2 * half));
    let k4 = f(&(y + &k3 * full));
    y + (k1 + k2 * crate::operator::c64(2.0, 0.0) + k3 * crate::operator::c64(2.0, 0.0) + k4)
        * crate::operator::c64(h / 6.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::c64;

    #[test]
    fn exponential_growth() {
        let y0 = CMatrix::from_element(1, 1, c64(1.0, 0.0));
        let (y, stats) = dopri45(
            |_, y| y * c64(0.0, 2.0),
            0.0,
            3.0,
            y0,
            Tolerances::default(),
        )
        .unwrap();
        let exact = c64(0.0, 6.0).exp();
        assert!((y[(0, 0)] - exact).norm() < 1e-10);
        assert!(stats.accepted > 0);
    }

    #[test]
    fn backward_and_time_dependent() {
        // y' = t y, y(1) = 1 -> y(-1) = 1
        let y0 = CMatrix::from_element(1, 1, c64(1.0, 0.0));
        let (y, _) = dopri45(|t, y| y * c64(t, 0.0), 1.0, -1.0, y0, Tolerances::default()).unwrap();
        assert!((y[(0, 0)] - c64(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let y0 = CMatrix::from_element(1, 1, c64(1.0, 0.0));
        let run = |n: usize| {
            let h = 1.0 / n as f64;
            let mut y = y0.clone();
            for _ in 0..n {
                y = rk4_step(|y| y * c64(-1.0, 1.0), &y, h);
            }
            (y[(0, 0)] - c64(-1.0, 1.0).exp()).norm()
        };
        let ratio = run(10) / run(20);
        assert!((ratio - 16.0).abs() < 2.0, "{ratio}");
    }
}
