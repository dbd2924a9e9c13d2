//! Dense linear algebra for the N-level system.
//!
//! Every operator is stored in the eigenbasis of the system Hamiltonian, so
//! `H_S = diag(e_1, ..., e_N)` and the Heisenberg picture reduces to entrywise
//! phases.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub(crate) const HERMITIAN_TOL: f64 = 1e-12;
pub(crate) const TRACE_TOL: f64 = 1e-10;
pub(crate) const EIGEN_TOL: f64 = 1e-10;
/// Relative merge tolerance for Bohr frequencies (times the spectral spread).
pub const BOHR_MERGE_REL: f64 = 1e-9;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Spectrum of the system Hamiltonian plus the value of hbar.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    energies: Vec<f64>,
    hbar: f64,
    labels: Option<Vec<String>>,
}

impl SystemSpec {
    pub fn new(energies: Vec<f64>, hbar: f64) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::validation("system needs at least one level"));
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::validation("system energies must be finite"));
        }
        if energies.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::validation(
                "system energies must be sorted ascending",
            ));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::validation("hbar must be positive"));
        }
        Ok(Self {
            energies,
            hbar,
            labels: None,
        })
    }

    /// `H_S = gap * sigma_z / 2`, ground state first.
    pub fn two_level(gap: f64, hbar: f64) -> Result<Self> {
        Self::new(vec![-gap / 2.0, gap / 2.0], hbar)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.energies.len() {
            return Err(Error::validation("one label per level required"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, j: usize) -> f64 {
        self.energies[j]
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn hamiltonian(&self) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.energies.iter().map(|&e| c64(e, 0.0)),
        ))
    }

    /// Largest gap `max |e_j - e_k|`.
    pub fn spread(&self) -> f64 {
        self.energies[self.dim() - 1] - self.energies[0]
    }

    pub fn bohr_frequencies(&self) -> BohrFrequencies {
        BohrFrequencies::new(self)
    }
}

/// The distinct energy differences `e_j' - e_j` and the map from level pairs
/// to them.
#[derive(Clone, Debug)]
pub struct BohrFrequencies {
    deltas: Vec<f64>,
    index: Vec<usize>,
    dim: usize,
}

impl BohrFrequencies {
    fn new(spec: &SystemSpec) -> Self {
        let n = spec.dim();
        let tol = BOHR_MERGE_REL * spec.spread();
        let mut diffs: Vec<(f64, usize)> = (0..n * n)
            .map(|k| (spec.energy(k / n) - spec.energy(k % n), k))
            .collect();
        diffs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut deltas: Vec<f64> = Vec::new();
        let mut index = vec![0usize; n * n];
        let mut cluster_start = f64::NAN;
        for (d, k) in diffs {
            if deltas.is_empty() || d - cluster_start > tol {
                deltas.push(d);
                cluster_start = d;
            }
            index[k] = deltas.len() - 1;
        }
        // Exact zero for the diagonal cluster.
        let zero = index[0];
        deltas[zero] = 0.0;
        Self {
            deltas,
            index,
            dim: n,
        }
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// Index of the frequency `e_{j'} - e_j`.
    pub fn index_of(&self, j_out: usize, j_in: usize) -> usize {
        self.index[j_out * self.dim + j_in]
    }

    pub fn zero_index(&self) -> usize {
        self.index[0]
    }

    /// Index of the frequency equal to `value` (within the merge tolerance).
    pub fn find(&self, value: f64) -> Option<usize> {
        let scale = self
            .deltas
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()))
            .max(1.0);
        self.deltas
            .iter()
            .position(|d| (d - value).abs() <= 1e-9 * scale)
    }
}

/// Self-adjoint operator on the system space.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    m: CMatrix,
}

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::validation("operator must be square"));
        }
        let dev = hermiticity_deviation(&m);
        let scale = max_abs(&m).max(1.0);
        if dev > HERMITIAN_TOL * scale {
            return Err(Error::validation(format!(
                "operator is not Hermitian (deviation {dev:e})"
            )));
        }
        Ok(Self {
            m: hermitian_part(&m),
        })
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        Self {
            m: CMatrix::from_fn(d.len(), d.len(), |i, j| {
                if i == j {
                    c64(d[i], 0.0)
                } else {
                    C64::default()
                }
            }),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: CMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            m: CMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            m: self.m.map(|z| z * factor),
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .m
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Random Hermitian matrix with Gaussian-like entries of unit scale.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let g = CMatrix::from_fn(n, n, |_, _| {
            c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        Self {
            m: (&g + g.adjoint()).map(|z| z * 0.5),
        }
    }
}

/// Pauli matrices, in the basis ordered (ground, excited).
pub mod pauli {
    use super::{c64, HermitianOperator};

    pub fn sigma_x() -> HermitianOperator {
        HermitianOperator::new(
            nalgebra::dmatrix![c64(0.0, 0.0), c64(1.0, 0.0); c64(1.0, 0.0), c64(0.0, 0.0)],
        )
        .unwrap()
    }

    pub fn sigma_y() -> HermitianOperator {
        HermitianOperator::new(
            nalgebra::dmatrix![c64(0.0, 0.0), c64(0.0, -1.0); c64(0.0, 1.0), c64(0.0, 0.0)],
        )
        .unwrap()
    }

    /// `diag(-1, +1)`: with levels ordered ascending, `H_S = gap sigma_z / 2`.
    pub fn sigma_z() -> HermitianOperator {
        HermitianOperator::from_real_diagonal(&[-1.0, 1.0])
    }
}

/// Positive semidefinite, unit-trace Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: HermitianOperator,
}

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, TRACE_TOL, EIGEN_TOL)
    }

    /// Validate with explicit trace and eigenvalue tolerances.
    pub fn with_tolerance(m: CMatrix, trace_tol: f64, eigen_tol: f64) -> Result<Self> {
        let dev = hermiticity_deviation(&m);
        if dev > 1e-10 * max_abs(&m).max(1.0) {
            return Err(Error::validation(format!(
                "density matrix is not Hermitian (deviation {dev:e})"
            )));
        }
        let op = HermitianOperator {
            m: hermitian_part(&m),
        };
        let tr = trace(op.matrix());
        if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
            return Err(Error::validation(format!("trace {tr} differs from 1")));
        }
        let min = min_eigenvalue(op.matrix());
        if min < -eigen_tol {
            return Err(Error::Positivity {
                min_eigenvalue: min,
                tolerance: eigen_tol,
                context: String::new(),
            });
        }
        Ok(Self { op })
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            op: HermitianOperator::identity(n).scaled(1.0 / n as f64),
        }
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::validation("zero state vector"));
        }
        let n = psi.len();
        let m = CMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj() / (norm * norm));
        Ok(Self {
            op: HermitianOperator { m },
        })
    }

    /// Random full-rank state `G G^dagger / Tr` with a uniform complex matrix `G`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let g = CMatrix::from_fn(n, n, |_, _| {
            c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let m = &g * g.adjoint();
        let tr = trace(&m).re;
        Self {
            op: HermitianOperator {
                m: hermitian_part(&m.map(|z| z / tr)),
            },
        }
    }

    /// Random pure state.
    pub fn random_pure<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let psi: Vec<C64> = (0..n)
            .map(|_| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        Self::pure(&psi).expect("nonzero random vector")
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(self.matrix())
    }

    pub fn expectation(&self, a: &HermitianOperator) -> f64 {
        trace(&(a.matrix() * self.matrix())).re
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        trace_distance(self.matrix(), other.matrix())
    }
}

/// Eigenoperator decomposition `O = sum_Delta O_Delta` with
/// `[H_S, O_Delta] = Delta O_Delta`.
#[derive(Clone, Debug)]
pub struct BohrDecomposition {
    pub terms: Vec<(f64, CMatrix)>,
}

impl BohrDecomposition {
    pub fn reconstruct(&self) -> Option<CMatrix> {
        let mut it = self.terms.iter();
        let first = it.next()?.1.clone();
        Some(it.fold(first, |acc, (_, m)| acc + m))
    }

    pub fn term(&self, delta: f64) -> Option<&CMatrix> {
        self.terms
            .iter()
            .find(|(d, _)| (d - delta).abs() <= 1e-12 * delta.abs().max(1.0))
            .map(|(_, m)| m)
    }
}

/// Gibbs state `exp(-beta H_S) / Z`, evaluated with shifted exponents.
pub fn thermal_state(spec: &SystemSpec, beta: f64) -> Result<DensityMatrix> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::validation("beta must be finite and non-negative"));
    }
    let populations = thermal_populations(spec, beta);
    Ok(DensityMatrix {
        op: HermitianOperator::from_real_diagonal(&populations),
    })
}

pub(crate) fn thermal_populations(spec: &SystemSpec, beta: f64) -> Vec<f64> {
    let e_min = spec.energy(0);
    let w: Vec<f64> = spec
        .energies()
        .iter()
        .map(|&e| (-beta * (e - e_min)).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// `O(t) = exp(i H_S t / hbar) O exp(-i H_S t / hbar)`.
pub fn heisenberg(spec: &SystemSpec, op: &CMatrix, t: f64) -> CMatrix {
    let e = spec.energies();
    let hbar = spec.hbar();
    CMatrix::from_fn(op.nrows(), op.ncols(), |r, c| {
        op[(r, c)] * C64::from_polar(1.0, (e[r] - e[c]) * t / hbar)
    })
}

/// Split `O` into eigenoperators of `H_S`, one per distinct Bohr frequency.
pub fn bohr_decompose(spec: &SystemSpec, op: &CMatrix) -> BohrDecomposition {
    let freqs = spec.bohr_frequencies();
    let n = spec.dim();
    let mut terms: Vec<(f64, CMatrix)> = freqs
        .deltas()
        .iter()
        .map(|&d| (d, CMatrix::zeros(n, n)))
        .collect();
    for r in 0..n {
        for c in 0..n {
            terms[freqs.index_of(r, c)].1[(r, c)] = op[(r, c)];
        }
    }
    BohrDecomposition { terms }
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).map(|z| z * 0.5)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_part(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `(1/2) || a - b ||_1` for Hermitian arguments.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * hermitian_part(&(a - b))
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|x| x.abs())
        .sum::<f64>()
}
