//! Non-perturbative response `chi_Delta = -i Tr[[A, T_Delta] rho]`, its
//! correlation partner `C_Delta = Tr[{A, T_Delta} rho] / 2`, their time-domain
//! forms and the fluctuation-dissipation relation for thermal states.

use std::f64::consts::PI;

use crate::channel::Direction;
use crate::error::{Error, Result};
use crate::map::{eigenop_block, EigenOpTable};
use crate::operator::{
    anticommutator, commutator, heisenberg, thermal_state, trace, BohrFrequencies, CMatrix,
    DensityMatrix, HermitianOperator, SystemSpec, C64,
};
use crate::particle::ParticleEnergyState;

/// `-i Tr[[A, T] rho]`.
pub fn response_component(a: &CMatrix, t: &CMatrix, rho: &CMatrix) -> C64 {
    -C64::i() * trace(&(commutator(a, t) * rho))
}

/// `Tr[{A, T} rho] / 2`.
pub fn correlation_component(a: &CMatrix, t: &CMatrix, rho: &CMatrix) -> C64 {
    trace(&(anticommutator(a, t) * rho)) * 0.5
}

/// `chi_Delta^{a_out a_in}(E_g)` at node `g` of an eigenoperator table.
pub fn chi_delta(
    eig: &EigenOpTable,
    g: usize,
    rho: &DensityMatrix,
    a: &HermitianOperator,
    delta: usize,
    a_out: Direction,
    a_in: Direction,
) -> C64 {
    response_component(
        a.matrix(),
        &eig.eigenop(g, delta, a_out, a_in),
        rho.matrix(),
    )
}

/// `chi_Delta` and `C_Delta` for all frequencies and direction pairs at one
/// incoming energy.
#[derive(Clone, Debug)]
pub struct ResponseSpectrum {
    pub hbar: f64,
    pub deltas: Vec<f64>,
    /// `chi[d][a_out][a_in]`.
    pub chi: Vec<[[C64; 2]; 2]>,
    /// `corr[d][a_out][a_in]`.
    pub corr: Vec<[[C64; 2]; 2]>,
}

impl ResponseSpectrum {
    /// Spectrum of an amplitude operator (`2N x 2N` layout).
    pub fn from_operator(
        system: &SystemSpec,
        op: &CMatrix,
        rho: &CMatrix,
        a: &HermitianOperator,
    ) -> Self {
        let bohr = system.bohr_frequencies();
        let mut chi = Vec::with_capacity(bohr.len());
        let mut corr = Vec::with_capacity(bohr.len());
        for d in 0..bohr.len() {
            let mut c = [[C64::default(); 2]; 2];
            let mut k = [[C64::default(); 2]; 2];
            for ao in Direction::ALL {
                for ai in Direction::ALL {
                    let t = eigenop_block(op, &bohr, d, ao, ai);
                    c[ao.index()][ai.index()] = response_component(a.matrix(), &t, rho);
                    k[ao.index()][ai.index()] = correlation_component(a.matrix(), &t, rho);
                }
            }
            chi.push(c);
            corr.push(k);
        }
        Self {
            hbar: system.hbar(),
            deltas: bohr.deltas().to_vec(),
            chi,
            corr,
        }
    }

    pub fn at_node(
        eig: &EigenOpTable,
        g: usize,
        rho: &DensityMatrix,
        a: &HermitianOperator,
    ) -> Self {
        Self::from_operator(eig.system(), eig.amplitude_operator(g), rho.matrix(), a)
    }

    pub fn chi(&self, d: usize, a_out: Direction, a_in: Direction) -> C64 {
        self.chi[d][a_out.index()][a_in.index()]
    }

    pub fn corr(&self, d: usize, a_out: Direction, a_in: Direction) -> C64 {
        self.corr[d][a_out.index()][a_in.index()]
    }

    /// `(1 / 2 pi hbar) sum_Delta exp(-i Delta t / hbar) chi_Delta`.
    pub fn time_response(&self, a_out: Direction, a_in: Direction, t: f64) -> C64 {
        let s: C64 = (0..self.deltas.len())
            .map(|d| {
                C64::from_polar(1.0, -self.deltas[d] * t / self.hbar) * self.chi(d, a_out, a_in)
            })
            .sum();
        s / (2.0 * PI * self.hbar)
    }

    /// `(1 / 2 pi) sum_Delta exp(-i Delta t / hbar) C_Delta`.
    pub fn time_correlation(&self, a_out: Direction, a_in: Direction, t: f64) -> C64 {
        let s: C64 = (0..self.deltas.len())
            .map(|d| {
                C64::from_polar(1.0, -self.deltas[d] * t / self.hbar) * self.corr(d, a_out, a_in)
            })
            .sum();
        s / (2.0 * PI)
    }
}

/// `chi_A = int dE sum_Delta sum_{a' a} chi_Delta^{a' a}(E) rho_P^{a a'}(E, E - Delta)`
/// on the state's grid; `eig` must be tabulated on the grid nodes.
pub fn chi_aggregate(
    eig: &EigenOpTable,
    rho: &DensityMatrix,
    a: &HermitianOperator,
    state: &ParticleEnergyState,
) -> Result<C64> {
    let grid = state.grid();
    if eig.energies() != grid.nodes() {
        return Err(Error::validation(
            "eigenoperator table must be built on the particle grid",
        ));
    }
    let mut total = C64::default();
    for (g, (&e, &w)) in grid.nodes().iter().zip(grid.weights()).enumerate() {
        let spec = ResponseSpectrum::at_node(eig, g, rho, a);
        for (d, &delta) in spec.deltas.iter().enumerate() {
            for ao in Direction::ALL {
                for ai in Direction::ALL {
                    let p = state.rho(ai, ao, e, e - delta);
                    if p != C64::default() {
                        total += spec.chi(d, ao, ai) * p * w;
                    }
                }
            }
        }
    }
    Ok(total)
}

/// Time samples computed from the spectral sum and from the commutator form.
#[derive(Clone, Debug, Default)]
pub struct TimeSamples {
    pub times: Vec<f64>,
    pub spectral: Vec<C64>,
    pub direct: Vec<C64>,
}

impl TimeSamples {
    pub fn max_mismatch(&self) -> f64 {
        self.spectral
            .iter()
            .zip(&self.direct)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// `chi_A^{a_out a_in}(E_p, t)` both as a spectral sum and as
/// `-(i / 2 pi hbar) Tr[[A, T(E_p, -t)] rho]`.
pub fn response_time_domain(
    system: &SystemSpec,
    op: &CMatrix,
    rho: &DensityMatrix,
    a: &HermitianOperator,
    a_out: Direction,
    a_in: Direction,
    times: &[f64],
) -> TimeSamples {
    let spec = ResponseSpectrum::from_operator(system, op, rho.matrix(), a);
    let t_op = crate::map::direction_block(op, a_out, a_in);
    let norm = 2.0 * PI * system.hbar();
    TimeSamples {
        times: times.to_vec(),
        spectral: times
            .iter()
            .map(|&t| spec.time_response(a_out, a_in, t))
            .collect(),
        direct: times
            .iter()
            .map(|&t| {
                response_component(a.matrix(), &heisenberg(system, &t_op, -t), rho.matrix()) / norm
            })
            .collect(),
    }
}

/// `C_A^{a_out a_in}(E_p, t)` both as a spectral sum and as
/// `(1 / 4 pi) Tr[{A, T(E_p, -t)} rho]`, which equals
/// `(1 / 4 pi) Tr[{A(t), T(E_p)} rho]` for stationary `rho`.
pub fn correlation_time_domain(
    system: &SystemSpec,
    op: &CMatrix,
    rho: &DensityMatrix,
    a: &HermitianOperator,
    a_out: Direction,
    a_in: Direction,
    times: &[f64],
) -> TimeSamples {
    let spec = ResponseSpectrum::from_operator(system, op, rho.matrix(), a);
    let t_op = crate::map::direction_block(op, a_out, a_in);
    TimeSamples {
        times: times.to_vec(),
        spectral: times
            .iter()
            .map(|&t| spec.time_correlation(a_out, a_in, t))
            .collect(),
        direct: times
            .iter()
            .map(|&t| {
                correlation_component(a.matrix(), &heisenberg(system, &t_op, -t), rho.matrix())
                    / (2.0 * PI)
            })
            .collect(),
    }
}

/// Thermal response at `t` evaluated with both operators shifted by `t0`:
/// `-(i / 2 pi hbar) Tr[[A(t0), T(E_p, t0 - t)] omega]`.
pub fn shifted_thermal_response(
    system: &SystemSpec,
    op: &CMatrix,
    beta: f64,
    a: &HermitianOperator,
    a_out: Direction,
    a_in: Direction,
    t: f64,
    t0: f64,
) -> Result<C64> {
    let omega = thermal_state(system, beta)?;
    let t_op = crate::map::direction_block(op, a_out, a_in);
    let a_t0 = heisenberg(system, a.matrix(), t0);
    let t_shift = heisenberg(system, &t_op, t0 - t);
    Ok(response_component(&a_t0, &t_shift, omega.matrix()) / (2.0 * PI * system.hbar()))
}

/// Largest deviations from the thermal fluctuation-dissipation relation.
#[derive(Clone, Debug, Default)]
pub struct FdrReport {
    /// `max |chi_Delta + 2i tanh(beta Delta / 2) C_Delta|`.
    pub max_deviation: f64,
    /// `max |Im chi + 2 tanh Re C|`.
    pub imag_form: f64,
    /// `max |Re chi - 2 tanh Im C|`.
    pub real_form: f64,
    /// `max |omega T_Delta - exp(-beta Delta) T_Delta omega|`.
    pub push_through: f64,
    /// Largest `|chi_Delta|` seen, for scale.
    pub max_chi: f64,
}

impl FdrReport {
    fn absorb(&mut self, other: &FdrReport) {
        self.max_deviation = self.max_deviation.max(other.max_deviation);
        self.imag_form = self.imag_form.max(other.imag_form);
        self.real_form = self.real_form.max(other.real_form);
        self.push_through = self.push_through.max(other.push_through);
        self.max_chi = self.max_chi.max(other.max_chi);
    }

    pub fn worst(&self) -> f64 {
        self.max_deviation.max(self.imag_form).max(self.real_form)
    }
}

/// Check the relation for one amplitude operator with `rho = omega_beta`.
pub fn fdr_check_operator(
    system: &SystemSpec,
    op: &CMatrix,
    beta: f64,
    a: &HermitianOperator,
) -> Result<FdrReport> {
    let omega = thermal_state(system, beta)?;
    let bohr: BohrFrequencies = system.bohr_frequencies();
    let spec = ResponseSpectrum::from_operator(system, op, omega.matrix(), a);
    let mut rep = FdrReport::default();
    for (d, &delta) in bohr.deltas().iter().enumerate() {
        let th = (beta * delta / 2.0).tanh();
        for ao in Direction::ALL {
            for ai in Direction::ALL {
                let chi = spec.chi(d, ao, ai);
                let c = spec.corr(d, ao, ai);
                rep.max_chi = rep.max_chi.max(chi.norm());
                rep.max_deviation = rep
                    .max_deviation
                    .max((chi + C64::i() * 2.0 * th * c).norm());
                rep.imag_form = rep.imag_form.max((chi.im + 2.0 * th * c.re).abs());
                rep.real_form = rep.real_form.max((chi.re - 2.0 * th * c.im).abs());
                let t = eigenop_block(op, &bohr, d, ao, ai);
                let lhs = omega.matrix() * &t;
                let rhs = (&t * omega.matrix()).scale((-beta * delta).exp());
                rep.push_through = rep.push_through.max(crate::operator::max_abs(&(lhs - rhs)));
            }
        }
    }
    Ok(rep)
}

/// Check the relation at every node of an eigenoperator table.
pub fn fdr_check(eig: &EigenOpTable, beta: f64, a: &HermitianOperator) -> Result<FdrReport> {
    let mut rep = FdrReport::default();
    for g in 0..eig.len() {
        rep.absorb(&fdr_check_operator(
            eig.system(),
            eig.amplitude_operator(g),
            beta,
            a,
        )?);
    }
    Ok(rep)
}

/// Continuous-frequency representations of a discrete spectrum.
pub mod continuous {
    use super::*;

    /// Weighted delta function at angular frequency `omega`.
    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct Impulse {
        pub omega: f64,
        pub weight: C64,
    }

    /// Principal-value sample; `flagged` marks frequencies inside a pole window.
    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct PvSample {
        pub omega: f64,
        pub value: C64,
        pub flagged: bool,
    }

    #[derive(Clone, Debug)]
    pub struct ContinuousTransforms {
        /// `chi(omega) = sum_Delta delta(hbar omega - Delta) chi_Delta`.
        pub response: Vec<Impulse>,
        /// `C(omega) = hbar sum_Delta delta(hbar omega - Delta) C_Delta`.
        pub correlation: Vec<Impulse>,
        /// Largest deviation of `chi(omega) = -(2i/hbar) tanh(beta hbar omega / 2) C(omega)` over impulses.
        pub fdr_deviation: f64,
        /// Principal-value part of the retarded component.
        pub retarded: Vec<PvSample>,
        /// Principal-value part of the advanced component.
        pub advanced: Vec<PvSample>,
    }

    pub fn impulses(
        spec: &ResponseSpectrum,
        a_out: Direction,
        a_in: Direction,
    ) -> (Vec<Impulse>, Vec<Impulse>) {
        let h = spec.hbar;
        let chi = (0..spec.deltas.len())
            .map(|d| Impulse {
                omega: spec.deltas[d] / h,
                weight: spec.chi(d, a_out, a_in) / h,
            })
            .collect();
        let corr = (0..spec.deltas.len())
            .map(|d| Impulse {
                omega: spec.deltas[d] / h,
                weight: spec.corr(d, a_out, a_in),
            })
            .collect();
        (chi, corr)
    }

    /// `+-(i / 2 pi) sum_Delta chi_Delta / (hbar omega - Delta)`; samples
    /// within `window` of a pole are flagged and carry the sum without that pole.
    pub fn pv_part(
        spec: &ResponseSpectrum,
        a_out: Direction,
        a_in: Direction,
        omega: f64,
        sign: f64,
        window: f64,
    ) -> PvSample {
        let mut value = C64::default();
        let mut flagged = false;
        for d in 0..spec.deltas.len() {
            let x = spec.hbar * omega - spec.deltas[d];
            if x.abs() <= window * spec.hbar {
                flagged = true;
                continue;
            }
            value += spec.chi(d, a_out, a_in) / x;
        }
        PvSample {
            omega,
            value: value * C64::i() * (sign / (2.0 * PI)),
            flagged,
        }
    }

    /// Damped half-line transform `int_0^inf exp(+-i omega t - eps t) chi(+-t) dt`
    /// in closed form.
    pub fn damped_half_line(
        spec: &ResponseSpectrum,
        a_out: Direction,
        a_in: Direction,
        omega: f64,
        sign: f64,
        eps: f64,
    ) -> C64 {
        let h = spec.hbar;
        let s: C64 = (0..spec.deltas.len())
            .map(|d| {
                let u = sign * (omega - spec.deltas[d] / h);
                spec.chi(d, a_out, a_in) / C64::new(eps, -u)
            })
            .sum();
        s / (2.0 * PI * h)
    }

    /// Richardson extrapolation to `h -> 0` of `f(h)` with error `O(h^k)`,
    /// `k = 1, 2, ...`, using `levels` halvings from `h0`.
    pub fn richardson<T>(f: impl Fn(f64) -> T, h0: f64, levels: usize) -> T
    where
        T: Clone
            + std::ops::Sub<Output = T>
            + std::ops::Mul<f64, Output = T>
            + std::ops::Add<Output = T>,
    {
        let mut table: Vec<T> = (0..=levels).map(|k| f(h0 / 2f64.powi(k as i32))).collect();
        for order in 1..=levels {
            let factor = 2f64.powi(order as i32);
            for k in (order..=levels).rev() {
                let refined = table[k].clone() * (factor / (factor - 1.0))
                    - table[k - 1].clone() * (1.0 / (factor - 1.0));
                table[k] = refined;
            }
        }
        table[levels].clone()
    }

    /// `P int_a^b g(w) / (w - w0) dw` by excluding `|w - w0| < eta` and
    /// extrapolating `eta -> 0`. Each side is integrated in `s = ln|w - w0|`
    /// with composite Simpson on `n` panels.
    pub fn pv_integral(
        g: impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        w0: f64,
        eta0: f64,
        n: usize,
    ) -> f64 {
        let side = |eta: f64, reach: f64, dir: f64| {
            if reach <= eta {
                return 0.0;
            }
            let (lo, hi) = (eta.ln(), reach.ln());
            let m = 2 * n.max(1);
            let h = (hi - lo) / m as f64;
            let f = |s: f64| g(w0 + dir * s.exp());
            let mut acc = f(lo) + f(hi);
            for i in 1..m {
                acc += f(lo + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            dir * acc * h / 3.0
        };
        richardson(
            |eta| side(eta, b - w0, 1.0) + side(eta, w0 - a, -1.0),
            eta0,
            4,
        )
    }

    pub fn continuous_transforms(
        spec: &ResponseSpectrum,
        beta: f64,
        a_out: Direction,
        a_in: Direction,
        omegas: &[f64],
        window: f64,
    ) -> ContinuousTransforms {
        let (response, correlation) = impulses(spec, a_out, a_in);
        let h = spec.hbar;
        let fdr_deviation = response
            .iter()
            .zip(&correlation)
            .map(|(x, c)| {
                let rhs = -C64::i() * (2.0 / h) * (beta * h * c.omega / 2.0).tanh() * c.weight;
                (x.weight - rhs).norm()
            })
            .fold(0.0, f64::max);
        ContinuousTransforms {
            response,
            correlation,
            fdr_deviation,
            retarded: omegas
                .iter()
                .map(|&w| pv_part(spec, a_out, a_in, w, 1.0, window))
                .collect(),
            advanced: omegas
                .iter()
                .map(|&w| pv_part(spec, a_out, a_in, w, -1.0, window))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::continuous::*;
    use super::*;

    fn single_pole() -> ResponseSpectrum {
        let mut chi = vec![[[C64::default(); 2]; 2]; 3];
        chi[2][0][0] = C64::new(0.3, -0.7);
        ResponseSpectrum {
            hbar: 1.0,
            deltas: vec![-1.0, 0.0, 1.0],
            chi,
            corr: vec![[[C64::default(); 2]; 2]; 3],
        }
    }

    #[test]
    fn pv_of_single_pole() {
        let s = single_pole();
        let p = Direction::Plus;
        for &w in &[-2.0, 0.3, 0.99, 1.2, 4.0] {
            let v = pv_part(&s, p, p, w, 1.0, 1e-9).value;
            let expected = C64::i() / (2.0 * PI) * C64::new(0.3, -0.7) / (w - 1.0);
            assert!((v - expected).norm() < 1e-6);
        }
        assert!(pv_part(&s, p, p, 1.0 + 1e-12, 1.0, 1e-9).flagged);
    }

    #[test]
    fn damped_transform_tends_to_pv() {
        let s = single_pole();
        let p = Direction::Plus;
        let w = 1.7;
        let lim = richardson(|eps| damped_half_line(&s, p, p, w, 1.0, eps), 0.1, 5);
        assert!((lim - pv_part(&s, p, p, w, 1.0, 1e-9).value).norm() < 1e-8);
    }

    #[test]
    fn pv_integral_matches_subtraction() {
        let g = |w: f64| (-(w - 0.4) * (w - 0.4)).exp();
        let (a, b, w0) = (-3.0, 4.0, 0.8);
        let got = pv_integral(g, a, b, w0, 0.2, 2000);
        // subtraction: int (g(w) - g(w0)) / (w - w0) + g(w0) ln((b - w0)/(w0 - a))
        let n = 200_000;
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let w = a + (i as f64 + 0.5) * h;
            s += (g(w) - g(w0)) / (w - w0) * h;
        }
        let expected = s + g(w0) * ((b - w0) / (w0 - a)).ln();
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }
}
