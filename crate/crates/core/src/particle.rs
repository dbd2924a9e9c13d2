//! Particle states in the kinetic-energy / direction representation.
//!
//! A state is either a pure wavepacket with amplitude `phi(E, alpha)` or a
//! diagonal (narrow) ensemble with weights `w^alpha(E)`. Both are tied to an
//! [`EnergyGrid`] that also serves as the quadrature for the collision map.

use std::f64::consts::PI;

use crate::channel::{Direction, PotentialSpec};
use crate::error::{Error, Result};
use crate::interp;
use crate::operator::{c64, C64};

/// Quadrature nodes in kinetic energy.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl EnergyGrid {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::validation(
                "grid needs matching, non-empty nodes and weights",
            ));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("grid nodes must be strictly increasing"));
        }
        if !(nodes[0] > 0.0) || nodes.iter().any(|e| !e.is_finite()) {
            return Err(Error::validation(
                "grid energies must be positive and finite",
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::validation("grid weights must be non-negative"));
        }
        Ok(Self { nodes, weights })
    }

    /// Nodes uniform in momentum on `[p_lo, p_hi]`, trapezoid weights for `dE`.
    pub fn uniform_momentum(mass: f64, p_lo: f64, p_hi: f64, n: usize) -> Result<Self> {
        if !(p_lo > 0.0 && p_hi > p_lo) || n < 2 {
            return Err(Error::validation(
                "momentum grid needs 0 < p_lo < p_hi and n >= 2",
            ));
        }
        let h = (p_hi - p_lo) / (n - 1) as f64;
        let p: Vec<f64> = (0..n).map(|i| p_lo + h * i as f64).collect();
        let nodes = p.iter().map(|p| p * p / (2.0 * mass)).collect();
        let weights = p
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                end * h * p / mass
            })
            .collect();
        Self::new(nodes, weights)
    }

    /// Default grid for a Gaussian: `p0 +- 6 sigma_p`, uniform in momentum.
    pub fn for_gaussian(mass: f64, p0: f64, sigma_p: f64, n: usize) -> Result<Self> {
        Self::uniform_momentum(mass, p0 - 6.0 * sigma_p, p0 + 6.0 * sigma_p, n)
    }

    /// Midpoints `lo + (k + 1/2) h` of `n` equal cells, each with weight `h`.
    pub fn midpoint(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) || n == 0 {
            return Err(Error::validation("midpoint grid needs hi > lo and n > 0"));
        }
        let h = (hi - lo) / n as f64;
        Self::new(
            (0..n).map(|k| lo + (k as f64 + 0.5) * h).collect(),
            vec![h; n],
        )
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| w * f(*e))
            .sum()
    }
}

/// Whether the state carries energy coherences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    PureWavepacket,
    DiagonalEnsemble,
}

/// Parameters of a minimal-uncertainty Gaussian packet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianParams {
    pub p0: f64,
    pub x0: f64,
    pub sigma_p: f64,
}

impl GaussianParams {
    /// Position width `hbar / (2 sigma_p)`.
    pub fn sigma_x(&self, hbar: f64) -> f64 {
        hbar / (2.0 * self.sigma_p)
    }

    /// Energy width `p0 sigma_p / m`.
    pub fn sigma_e(&self, mass: f64) -> f64 {
        self.p0 * self.sigma_p / mass
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Gaussian(GaussianParams),
    SampledPure([Vec<C64>; 2]),
    Thermal { beta: f64, z: f64, dir: [f64; 2] },
    SampledDiagonal([Vec<f64>; 2]),
}

/// State of the incoming particle, `rho_P^{a a'}(E, E')`.
#[derive(Clone, Debug)]
pub struct ParticleEnergyState {
    mass: f64,
    hbar: f64,
    grid: EnergyGrid,
    repr: Repr,
}

const NORM_TOL: f64 = 1e-6;

fn same_energy(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl ParticleEnergyState {
    pub fn kind(&self) -> StateKind {
        match self.repr {
            Repr::Gaussian(_) | Repr::SampledPure(_) => StateKind::PureWavepacket,
            Repr::Thermal { .. } | Repr::SampledDiagonal(_) => StateKind::DiagonalEnsemble,
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    pub fn gaussian(&self) -> Option<GaussianParams> {
        match self.repr {
            Repr::Gaussian(g) => Some(g),
            _ => None,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self.repr {
            Repr::Thermal { beta, .. } => Some(beta),
            _ => None,
        }
    }

    /// Pure state from amplitudes sampled on `grid`; off-node values use cubic
    /// interpolation.
    pub fn from_amplitudes(
        mass: f64,
        hbar: f64,
        grid: EnergyGrid,
        plus: Vec<C64>,
        minus: Vec<C64>,
    ) -> Result<Self> {
        if plus.len() != grid.len() || minus.len() != grid.len() {
            return Err(Error::validation("amplitude samples must match the grid"));
        }
        let s = Self {
            mass,
            hbar,
            grid,
            repr: Repr::SampledPure([plus, minus]),
        };
        s.check_norm()?;
        Ok(s)
    }

    /// Diagonal ensemble from weights sampled on `grid`.
    pub fn from_weights(
        mass: f64,
        hbar: f64,
        grid: EnergyGrid,
        plus: Vec<f64>,
        minus: Vec<f64>,
    ) -> Result<Self> {
        if plus.len() != grid.len() || minus.len() != grid.len() {
            return Err(Error::validation("weight samples must match the grid"));
        }
        if plus.iter().chain(&minus).any(|w| !(*w >= 0.0)) {
            return Err(Error::validation("ensemble weights must be non-negative"));
        }
        let s = Self {
            mass,
            hbar,
            grid,
            repr: Repr::SampledDiagonal([plus, minus]),
        };
        s.check_norm()?;
        Ok(s)
    }

    fn check_norm(&self) -> Result<()> {
        let n = self.norm();
        if n < 1.0 - NORM_TOL {
            return Err(Error::GridTruncation { captured: n });
        }
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::validation(format!("state norm {n} differs from 1")));
        }
        Ok(())
    }

    /// `phi(E, alpha)`; zero for diagonal ensembles and non-positive energies.
    pub fn phi(&self, energy: f64, a: Direction) -> C64 {
        if !(energy > 0.0) {
            return C64::default();
        }
        match &self.repr {
            Repr::Gaussian(g) => {
                let p = (2.0 * self.mass * energy).sqrt();
                let signed = a.sign() * p;
                let amp = (2.0 * PI * g.sigma_p * g.sigma_p).powf(-0.25)
                    * (-(signed - g.p0).powi(2) / (4.0 * g.sigma_p * g.sigma_p)).exp()
                    * (self.mass / p).sqrt();
                C64::from_polar(amp, -signed * g.x0 / self.hbar)
            }
            Repr::SampledPure(amp) => {
                let v = &amp[a.index()];
                interp::stencil(self.grid.nodes(), energy)
                    .map(|st| st.apply(|i| v[i]))
                    .unwrap_or_default()
            }
            _ => C64::default(),
        }
    }

    /// Energy distribution `w^alpha(E) = rho_P^{aa}(E, E)`.
    pub fn weight(&self, energy: f64, a: Direction) -> f64 {
        match &self.repr {
            Repr::Thermal { beta, z, dir } => {
                let (lo, hi) = self.grid.range();
                if energy < lo - 1e-12 || energy > hi + 1e-12 {
                    0.0
                } else {
                    dir[a.index()] * (-beta * energy).exp() / z
                }
            }
            Repr::SampledDiagonal(w) => {
                let v = &w[a.index()];
                interp::stencil(self.grid.nodes(), energy)
                    .map(|st| st.apply(|i| v[i]).max(0.0))
                    .unwrap_or(0.0)
            }
            _ => self.phi(energy, a).norm_sqr(),
        }
    }

    /// `rho_P^{a a'}(E, E')`.
    pub fn rho(&self, a: Direction, a2: Direction, e1: f64, e2: f64) -> C64 {
        match self.kind() {
            StateKind::PureWavepacket => self.phi(e1, a) * self.phi(e2, a2).conj(),
            StateKind::DiagonalEnsemble => {
                if a == a2 && same_energy(e1, e2) {
                    c64(self.weight(e1, a), 0.0)
                } else {
                    C64::default()
                }
            }
        }
    }

    /// `sum_alpha int w^alpha(E) dE` on the grid.
    pub fn norm(&self) -> f64 {
        self.grid
            .integrate(|e| Direction::ALL.iter().map(|&a| self.weight(e, a)).sum())
    }

    pub fn mean_kinetic_energy(&self) -> f64 {
        self.grid.integrate(|e| {
            e * Direction::ALL
                .iter()
                .map(|&a| self.weight(e, a))
                .sum::<f64>()
        }) / self.norm()
    }

    /// Probability of each incidence direction.
    pub fn direction_weights(&self) -> [f64; 2] {
        Direction::ALL.map(|a| self.grid.integrate(|e| self.weight(e, a)))
    }
}

/// Minimal-uncertainty Gaussian packet centred at `p0` and, at `t = 0` under
/// free motion, at position `x0`.
pub fn gaussian_wavepacket(
    mass: f64,
    hbar: f64,
    p0: f64,
    x0: f64,
    sigma_p: f64,
    grid: EnergyGrid,
) -> Result<ParticleEnergyState> {
    check_positive("mass", mass)?;
    check_positive("hbar", hbar)?;
    check_positive("p0", p0)?;
    check_positive("sigma_p", sigma_p)?;
    if !x0.is_finite() {
        return Err(Error::validation("x0 must be finite"));
    }
    let (lo, hi) = grid.range();
    let (p_lo, p_hi) = ((2.0 * mass * lo).sqrt(), (2.0 * mass * hi).sqrt());
    let slack = 1e-9 * p0;
    if p_lo > p0 - 6.0 * sigma_p + slack || p_hi < p0 + 6.0 * sigma_p - slack {
        return Err(Error::validation(format!(
            "grid momenta [{p_lo}, {p_hi}] do not cover p0 +- 6 sigma_p"
        )));
    }
    let s = ParticleEnergyState {
        mass,
        hbar,
        grid,
        repr: Repr::Gaussian(GaussianParams { p0, x0, sigma_p }),
    };
    s.check_norm()?;
    Ok(s)
}

/// Narrow ensemble with `w^alpha(E) = d_alpha exp(-beta E) / Z`, normalised on
/// the grid.
pub fn narrow_thermal_ensemble(
    mass: f64,
    hbar: f64,
    beta: f64,
    grid: EnergyGrid,
    direction_weights: [f64; 2],
) -> Result<ParticleEnergyState> {
    check_positive("beta", beta)?;
    check_positive("mass", mass)?;
    let total: f64 = direction_weights.iter().sum();
    if direction_weights.iter().any(|d| !(*d >= 0.0)) || !(total > 0.0) {
        return Err(Error::validation(
            "direction weights must be non-negative with a positive sum",
        ));
    }
    let dir = direction_weights.map(|d| d / total);
    let z = grid.integrate(|e| (-beta * e).exp());
    Ok(ParticleEnergyState {
        mass,
        hbar,
        grid,
        repr: Repr::Thermal { beta, z, dir },
    })
}

/// Classical force functions `f^l(t) = V^l(x0 + v0 t)` as boxcars in time.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceProfile {
    pub x0: f64,
    pub v0: f64,
    /// Per decomposition term: `(t_start, t_end, value)`.
    pub boxcars: Vec<Vec<(f64, f64, f64)>>,
}

impl ForceProfile {
    pub fn value(&self, l: usize, t: f64) -> f64 {
        self.boxcars[l]
            .iter()
            .find(|(a, b, _)| t >= *a && t <= *b)
            .map(|p| p.2)
            .unwrap_or(0.0)
    }

    /// Earliest start and latest end over all terms.
    pub fn window(&self) -> Option<(f64, f64)> {
        let all = self.boxcars.iter().flatten();
        let start = all.clone().map(|b| b.0).reduce(f64::min)?;
        let end = all.map(|b| b.1).reduce(f64::max)?;
        Some((start, end))
    }

    /// Sorted, deduplicated switching times.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .boxcars
            .iter()
            .flatten()
            .flat_map(|b| [b.0, b.1])
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

pub fn force_profile(pot: &PotentialSpec, x0: f64, v0: f64) -> Result<ForceProfile> {
    check_positive("v0", v0)?;
    if !x0.is_finite() {
        return Err(Error::validation("x0 must be finite"));
    }
    let boxcars = pot
        .terms()
        .iter()
        .map(|t| {
            t.profile
                .pieces()
                .iter()
                .map(|&(xa, xb, v)| ((xa - x0) / v0, (xb - x0) / v0, v))
                .collect()
        })
        .collect();
    Ok(ForceProfile { x0, v0, boxcars })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::pauli;

    fn packet_state() -> ParticleEnergyState {
        let grid = EnergyGrid::for_gaussian(1.0, 100.0, 0.2, 2001).unwrap();
        gaussian_wavepacket(1.0, 1.0, 100.0, 2.0, 0.2, grid).unwrap()
    }

    #[test]
    fn gaussian_is_normalised_and_centred() {
        let s = packet_state();
        assert!((s.norm() - 1.0).abs() < 1e-6);
        // <E> = p0^2/2m + sigma_p^2/2m
        assert!((s.mean_kinetic_energy() - (5000.0 + 0.02)).abs() < 1e-6);
        assert_eq!(s.kind(), StateKind::PureWavepacket);
        assert!((s.gaussian().unwrap().sigma_e(1.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_coherence_ratio() {
        let s = packet_state();
        let (e0, d) = (5000.0, 1.0);
        let p = Direction::Plus;
        let ratio = s.rho(p, p, e0 + d / 2.0, e0 - d / 2.0).norm() / s.rho(p, p, e0, e0).norm();
        let expected = (-d * d / (8.0 * 20.0f64.powi(2))).exp();
        assert!((ratio - expected).abs() < 1e-6, "{ratio} vs {expected}");
    }

    #[test]
    fn truncated_grid_is_rejected() {
        let grid = EnergyGrid::uniform_momentum(1.0, 99.0, 101.0, 401).unwrap();
        assert!(gaussian_wavepacket(1.0, 1.0, 100.0, 0.0, 0.5, grid).is_err());
    }

    #[test]
    fn thermal_ensemble() {
        let grid = EnergyGrid::midpoint(0.0, 40.0, 2000).unwrap();
        let s = narrow_thermal_ensemble(1.0, 1.0, 1.0, grid, [1.0, 0.0]).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-8);
        assert!((s.mean_kinetic_energy() - 1.0).abs() < 1e-4);
        let (p, m) = (Direction::Plus, Direction::Minus);
        assert_eq!(s.rho(p, p, 1.0, 1.5), C64::default());
        assert_eq!(s.rho(p, m, 1.0, 1.0), C64::default());
        assert!(s.rho(p, p, 1.01, 1.01).re > 0.0);
        assert_eq!(s.direction_weights()[1], 0.0);
    }

    #[test]
    fn force_profile_boxcar() {
        let pot = PotentialSpec::barrier(1.0, &pauli::sigma_x(), 0.7, 1.0).unwrap();
        let f = force_profile(&pot, -2.0, 100.0).unwrap();
        let (a, b) = f.window().unwrap();
        assert!((a - 0.015).abs() < 1e-15 && (b - 0.025).abs() < 1e-15);
        assert_eq!(f.value(0, 0.02), 0.7);
        assert_eq!(f.value(0, 0.03), 0.0);
        let free = PotentialSpec::free(1.0, 2).unwrap();
        assert!(force_profile(&free, 0.0, 1.0).unwrap().window().is_none());
    }
}
