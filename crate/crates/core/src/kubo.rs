//! Born-approximation response and Kubo's formula for a particle that acts as
//! a classical time-dependent drive, plus closed-system linear response used
//! as an independent check.

use std::f64::consts::{PI, SQRT_2};

use crate::channel::PotentialSpec;
use crate::error::{Error, Result};
use crate::ode::{dopri45, OdeStats, Tolerances};
use crate::operator::{
    bohr_decompose, commutator, heisenberg, hermiticity_deviation, thermal_state, trace, CMatrix,
    DensityMatrix, HermitianOperator, SystemSpec, C64,
};
use crate::particle::{force_profile, ForceProfile, GaussianParams};
use crate::response::continuous::richardson;

/// `chi^l_Delta = -i Tr[[A, V^l_Delta] rho]` for every decomposition term `l`.
#[derive(Clone, Debug)]
pub struct BornSpectrum {
    pub hbar: f64,
    pub deltas: Vec<f64>,
    /// `terms[l][d]`.
    pub terms: Vec<Vec<C64>>,
}

pub fn born_response_spectrum(
    system: &SystemSpec,
    pot: &PotentialSpec,
    rho: &DensityMatrix,
    a: &HermitianOperator,
) -> Result<BornSpectrum> {
    if pot.dim() != system.dim() || rho.dim() != system.dim() || a.dim() != system.dim() {
        return Err(Error::validation(
            "dimension mismatch between system, potential, state and observable",
        ));
    }
    let bohr = system.bohr_frequencies();
    let terms = pot
        .terms()
        .iter()
        .map(|term| {
            bohr_decompose(system, term.operator.matrix())
                .terms
                .iter()
                .map(|(_, v)| -C64::i() * trace(&(commutator(a.matrix(), v) * rho.matrix())))
                .collect()
        })
        .collect();
    Ok(BornSpectrum {
        hbar: system.hbar(),
        deltas: bohr.deltas().to_vec(),
        terms,
    })
}

impl BornSpectrum {
    /// `chi^l(t) = (1/hbar) sum_Delta exp(-i Delta t / hbar) chi^l_Delta`.
    pub fn response(&self, l: usize, t: f64) -> C64 {
        let s: C64 = self
            .deltas
            .iter()
            .zip(&self.terms[l])
            .map(|(&d, &c)| C64::from_polar(1.0, -d * t / self.hbar) * c)
            .sum();
        s / self.hbar
    }

    /// `int_{s1}^{s2} chi^l(s) ds` in closed form.
    pub fn interval_integral(&self, l: usize, s1: f64, s2: f64) -> C64 {
        let len = s2 - s1;
        let mid = 0.5 * (s1 + s2);
        let s: C64 = self
            .deltas
            .iter()
            .zip(&self.terms[l])
            .map(|(&d, &c)| {
                let x = d * len / (2.0 * self.hbar);
                let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                C64::from_polar(len * sinc, -d * mid / self.hbar) * c
            })
            .sum();
        s / self.hbar
    }
}

/// Inputs of the Kubo convolution along the classical trajectory `x0 + v0 t`;
/// the response is evaluated at `t = 0`.
#[derive(Clone, Debug)]
pub struct KuboConfig {
    pub observable: HermitianOperator,
    pub rho: DensityMatrix,
    pub x0: f64,
    pub v0: f64,
    /// Earliest time the drive may act; `None` accepts any window.
    pub horizon: Option<f64>,
}

impl KuboConfig {
    pub fn thermal(
        system: &SystemSpec,
        observable: HermitianOperator,
        beta: f64,
        x0: f64,
        v0: f64,
    ) -> Result<Self> {
        Ok(Self {
            observable,
            rho: thermal_state(system, beta)?,
            x0,
            v0,
            horizon: None,
        })
    }

    fn checked_force(&self, pot: &PotentialSpec, causal: bool) -> Result<ForceProfile> {
        let force = force_profile(pot, self.x0, self.v0)?;
        if let Some((start, end)) = force.window() {
            if causal && end > 0.0 {
                return Err(Error::Horizon(format!(
                    "drive ends at t = {end} after the observation time; x0 = {} lies inside the potential",
                    self.x0
                )));
            }
            if let Some(h) = self.horizon {
                if start < -h {
                    return Err(Error::Horizon(format!(
                        "drive starts at t = {start} before the horizon -{h}"
                    )));
                }
            }
        }
        Ok(force)
    }
}

/// Real value plus the discarded imaginary part.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KuboValue {
    pub value: f64,
    pub imag_residue: f64,
}

impl From<C64> for KuboValue {
    fn from(z: C64) -> Self {
        Self {
            value: z.re,
            imag_residue: z.im.abs(),
        }
    }
}

fn convolve(spec: &BornSpectrum, force: &ForceProfile) -> C64 {
    force
        .boxcars
        .iter()
        .enumerate()
        .map(|(l, pieces)| {
            pieces
                .iter()
                .map(|&(ta, tb, v)| spec.interval_integral(l, -tb, -ta) * v)
                .sum::<C64>()
        })
        .sum()
}

/// `sum_l int_{-inf}^{0} chi^l(-tau) f^l(tau) dtau` with boxcar forces.
pub fn kubo_convolution(
    system: &SystemSpec,
    pot: &PotentialSpec,
    cfg: &KuboConfig,
) -> Result<KuboValue> {
    let force = cfg.checked_force(pot, true)?;
    let spec = born_response_spectrum(system, pot, &cfg.rho, &cfg.observable)?;
    Ok(convolve(&spec, &force).into())
}

/// Same integral over all times, without the causal restriction.
pub fn kubo_full_time(
    system: &SystemSpec,
    pot: &PotentialSpec,
    cfg: &KuboConfig,
) -> Result<KuboValue> {
    let force = cfg.checked_force(pot, false)?;
    let spec = born_response_spectrum(system, pot, &cfg.rho, &cfg.observable)?;
    Ok(convolve(&spec, &force).into())
}

/// Width of a free Gaussian packet at time `t`.
pub fn packet_width(mass: f64, hbar: f64, sigma_x: f64, t: f64) -> f64 {
    sigma_x * (1.0 + (hbar * t / (2.0 * mass * sigma_x * sigma_x)).powi(2)).sqrt()
}

/// `f^l(t) = <psi(t)| V^l(x) |psi(t)>` for a freely moving Gaussian packet.
pub fn quantum_force(pot: &PotentialSpec, l: usize, hbar: f64, g: &GaussianParams, t: f64) -> f64 {
    let mass = pot.mass();
    let mu = g.x0 + g.p0 / mass * t;
    let width = packet_width(mass, hbar, g.sigma_x(hbar), t) * SQRT_2;
    pot.terms()[l]
        .profile
        .pieces()
        .iter()
        .map(|&(xa, xb, v)| 0.5 * v * (libm::erf((xb - mu) / width) - libm::erf((xa - mu) / width)))
        .sum()
}

/// `sum_l int chi^l(-t) f^l(t) dt` over all times with the quantum force of a
/// Gaussian packet, by composite Simpson on `panels` intervals.
pub fn kubo_quantum_force(
    system: &SystemSpec,
    pot: &PotentialSpec,
    observable: &HermitianOperator,
    rho: &DensityMatrix,
    g: &GaussianParams,
    panels: usize,
) -> Result<KuboValue> {
    let spec = born_response_spectrum(system, pot, rho, observable)?;
    let Some((xa, xb)) = pot.support() else {
        return Ok(KuboValue::default());
    };
    let hbar = system.hbar();
    let v0 = g.p0 / pot.mass();
    // classical window widened by many packet widths
    let mut lo = (xa - g.x0) / v0;
    let mut hi = (xb - g.x0) / v0;
    for _ in 0..3 {
        let reach =
            14.0 * packet_width(pot.mass(), hbar, g.sigma_x(hbar), lo.abs().max(hi.abs())) / v0;
        lo = (xa - g.x0) / v0 - reach;
        hi = (xb - g.x0) / v0 + reach;
    }
    let m = 2 * panels.div_ceil(2).max(1);
    let h = (hi - lo) / m as f64;
    let integrand = |t: f64| -> C64 {
        (0..pot.terms().len())
            .map(|l| spec.response(l, -t) * quantum_force(pot, l, hbar, g, t))
            .sum()
    };
    let mut acc = integrand(lo) + integrand(hi);
    for i in 1..m {
        acc += integrand(lo + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok((acc * (h / 3.0)).into())
}

#[derive(Clone, Debug)]
pub struct DrivenResult {
    pub delta_a: f64,
    pub final_state: CMatrix,
    pub trace_error: f64,
    pub hermiticity: f64,
    pub stats: OdeStats,
}

/// Integrate `i hbar rho' = [H_S + sum_l f^l(t) V^l, rho]` from before the
/// drive to `t = 0`; the initial state is chosen so that free evolution would
/// return `rho` at `t = 0`.
pub fn driven_unitary_oracle(
    system: &SystemSpec,
    pot: &PotentialSpec,
    cfg: &KuboConfig,
    tol: Tolerances,
) -> Result<DrivenResult> {
    let force = force_profile(pot, cfg.x0, cfg.v0)?;
    let a0 = cfg.rho.expectation(&cfg.observable);
    let Some((start, _)) = force.window() else {
        return Ok(DrivenResult {
            delta_a: 0.0,
            final_state: cfg.rho.matrix().clone(),
            trace_error: 0.0,
            hermiticity: 0.0,
            stats: OdeStats::default(),
        });
    };
    let hbar = system.hbar();
    let t0 = start.min(0.0) - 1.0;
    let h_s = system.hamiltonian();
    let mut rho = heisenberg(system, cfg.rho.matrix(), -t0);
    let mut cuts: Vec<f64> = force
        .breakpoints()
        .into_iter()
        .filter(|&t| t > t0 && t < 0.0)
        .collect();
    cuts.insert(0, t0);
    cuts.push(0.0);
    let mut stats = OdeStats::default();
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let h = pot
            .terms()
            .iter()
            .enumerate()
            .fold(h_s.clone(), |acc, (l, term)| {
                acc + term.operator.matrix() * C64::from(force.value(l, mid))
            });
        let gen = |_: f64, r: &CMatrix| commutator(&h, r) * C64::new(0.0, -1.0 / hbar);
        let (next, s) = dopri45(gen, w[0], w[1], rho, tol)?;
        rho = next;
        stats.accepted += s.accepted;
        stats.rejected += s.rejected;
    }
    let value = trace(&(cfg.observable.matrix() * &rho)).re;
    Ok(DrivenResult {
        delta_a: value - a0,
        trace_error: (trace(&rho) - C64::from(1.0)).norm(),
        hermiticity: hermiticity_deviation(&rho),
        final_state: rho,
        stats,
    })
}

/// `phi_AV(t) = -(i/hbar) Tr[[A(t), V] rho]`.
pub fn lrt_response_function(
    system: &SystemSpec,
    a: &CMatrix,
    v: &CMatrix,
    rho: &CMatrix,
    t: f64,
) -> C64 {
    -C64::i() / system.hbar() * trace(&(commutator(&heisenberg(system, a, t), v) * rho))
}

/// `int_0^inf phi_AV(t) exp(i omega t - eps t) dt` in closed form.
pub fn damped_susceptibility(
    system: &SystemSpec,
    a: &CMatrix,
    v: &CMatrix,
    p: &[f64],
    omega: f64,
    eps: f64,
) -> C64 {
    let hbar = system.hbar();
    let n = system.dim();
    let mut s = C64::default();
    for m in 0..n {
        for k in 0..n {
            let w = (system.energy(m) - system.energy(k)) / hbar;
            s += a[(m, k)] * v[(k, m)] * (p[m] - p[k]) / C64::new(eps, -(omega + w));
        }
    }
    s * (-C64::i() / hbar)
}

#[derive(Clone, Debug)]
pub struct ImpulseCheck {
    pub omega: f64,
    /// Weight of the delta function in `Im chi_AA`.
    pub chi_imag_weight: f64,
    /// Weight of the delta function in `C_AA`.
    pub correlation_weight: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug)]
pub struct ClassicalLrtReport {
    pub impulses: Vec<ImpulseCheck>,
    pub max_deviation: f64,
    /// `(omega, chi_AV(omega), near_impulse)` on the requested grid.
    pub susceptibility: Vec<(f64, C64, bool)>,
    /// Largest `|phi_AV(t)|` over a sample of times.
    pub max_response: f64,
}

/// Closed-system linear response of `A` to a drive coupling through `V` in
/// the Gibbs state, with the auto-correlation fluctuation-dissipation check.
pub fn classical_lrt_suite(
    system: &SystemSpec,
    a: &HermitianOperator,
    v: &HermitianOperator,
    beta: f64,
    omegas: &[f64],
) -> Result<ClassicalLrtReport> {
    let omega_state = thermal_state(system, beta)?;
    let p: Vec<f64> = (0..system.dim())
        .map(|j| omega_state.matrix()[(j, j)].re)
        .collect();
    let hbar = system.hbar();
    let (am, vm) = (a.matrix(), v.matrix());

    let bohr = system.bohr_frequencies();
    let mut impulses = Vec::new();
    for &delta in bohr.deltas() {
        let w0 = delta / hbar;
        let resonant = richardson(
            |eps| damped_susceptibility(system, am, am, &p, w0, eps) * eps,
            1e-2,
            4,
        );
        let chi_imag_weight = PI * resonant.im;
        let mut corr = 0.0;
        for m in 0..system.dim() {
            for k in 0..system.dim() {
                if bohr.index_of(k, m) == bohr.find(delta).unwrap_or(usize::MAX) {
                    corr += (am[(m, k)] * am[(k, m)]).re * p[m];
                }
            }
        }
        let correlation_weight = (1.0 + (-beta * hbar * w0).exp()) * PI * corr;
        let predicted = -(beta * hbar * w0 / 2.0).tanh() / hbar * correlation_weight;
        impulses.push(ImpulseCheck {
            omega: w0,
            chi_imag_weight,
            correlation_weight,
            deviation: (chi_imag_weight - predicted).abs(),
        });
    }
    let max_deviation = impulses.iter().map(|i| i.deviation).fold(0.0, f64::max);

    let window = 1e-6 * (1.0 + system.spread() / hbar);
    let susceptibility = omegas
        .iter()
        .map(|&w| {
            let near = bohr
                .deltas()
                .iter()
                .any(|&d| d.abs() > window * hbar && (w - d / hbar).abs() < window);
            let value = if near {
                C64::new(f64::NAN, f64::NAN)
            } else {
                richardson(
                    |eps| damped_susceptibility(system, am, vm, &p, w, eps),
                    1e-2,
                    4,
                )
            };
            (w, value, near)
        })
        .collect();

    let period = 2.0 * PI * hbar / system.spread().max(hbar);
    let max_response = (0..64)
        .map(|i| {
            lrt_response_function(
                system,
                am,
                vm,
                omega_state.matrix(),
                period * i as f64 / 16.0,
            )
            .norm()
        })
        .fold(0.0, f64::max);

    Ok(ClassicalLrtReport {
        impulses,
        max_deviation,
        susceptibility,
        max_response,
    })
}
