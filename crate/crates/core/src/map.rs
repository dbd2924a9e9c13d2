//! The collision map `rho_S -> rho_S - i[H_LS, rho_S] + D(rho_S)`.
//!
//! Energy delta functions are integrated out analytically, so every term is
//! evaluated at a grid energy `E_p` and at shifted arguments `E_p - Delta` or
//! `E_p - Delta + Delta'`. The dissipator is stored as a superoperator acting
//! on column-major `vec(rho)`.

use rayon::prelude::*;

use crate::channel::{check_coverage, solve_smatrix, AmplitudeSource, Direction, PotentialSpec};
use crate::error::{Error, Result};
use crate::operator::{
    c64, commutator, hermitian_part, max_abs, min_eigenvalue, trace, BohrFrequencies, CMatrix,
    DensityMatrix, HermitianOperator, SystemSpec, C64,
};
use crate::particle::{EnergyGrid, ParticleEnergyState, StateKind};

/// Output of [`apply_map`] may dip this far below zero before it is rejected.
pub const POSITIVITY_TOL: f64 = 1e-6;
/// Trace tolerance of the map output.
pub const MAP_TRACE_TOL: f64 = 1e-6;
/// Largest shifted-argument weight that may fall outside the particle grid.
pub const DROPPED_WEIGHT_TOL: f64 = 1e-6;

/// Amplitude operator `T(E_p)` at incoming kinetic energy `kinetic`, as a
/// `2N x 2N` matrix with row `(alpha', j')` and column `(alpha, j)`.
///
/// Column `(alpha, j)` is read from the amplitudes at total energy `E_p + e_j`.
pub fn amplitude_operator(source: &dyn AmplitudeSource, kinetic: f64) -> Result<CMatrix> {
    let sys = source.system();
    let n = sys.dim();
    let mut op = CMatrix::zeros(2 * n, 2 * n);
    if !(kinetic > 0.0) {
        return Ok(op);
    }
    let mut done = vec![false; n];
    for j in 0..n {
        if done[j] {
            continue;
        }
        let t = source.amplitudes(kinetic + sys.energy(j))?;
        // Degenerate levels share the same total energy.
        for (jj, flag) in done.iter_mut().enumerate() {
            if sys.energy(jj) == sys.energy(j) {
                *flag = true;
                for a in Direction::ALL {
                    let col = a.index() * n + jj;
                    op.set_column(col, &t.column(col));
                }
            }
        }
    }
    Ok(op)
}

/// Block `T^{a_out a_in}_Delta` of an amplitude operator.
pub fn eigenop_block(
    op: &CMatrix,
    bohr: &BohrFrequencies,
    delta: usize,
    a_out: Direction,
    a_in: Direction,
) -> CMatrix {
    let n = op.nrows() / 2;
    CMatrix::from_fn(n, n, |jo, ji| {
        if bohr.index_of(jo, ji) == delta {
            op[(a_out.index() * n + jo, a_in.index() * n + ji)]
        } else {
            C64::default()
        }
    })
}

/// Block `T^{a_out a_in}` summed over all frequencies.
pub fn direction_block(op: &CMatrix, a_out: Direction, a_in: Direction) -> CMatrix {
    let n = op.nrows() / 2;
    op.view((a_out.index() * n, a_in.index() * n), (n, n))
        .into_owned()
}

/// Eigenoperators `T_Delta^{a' a}(E_p)` on a set of kinetic energies.
#[derive(Clone, Debug)]
pub struct EigenOpTable {
    system: SystemSpec,
    bohr: BohrFrequencies,
    energies: Vec<f64>,
    ops: Vec<CMatrix>,
}

impl EigenOpTable {
    pub fn build(source: &dyn AmplitudeSource, kinetic: &[f64]) -> Result<Self> {
        let sys = source.system().clone();
        if let (Some(lo), Some(hi)) = (kinetic.first(), kinetic.last()) {
            let (e_min, e_max) = (sys.energy(0), sys.energy(sys.dim() - 1));
            check_coverage(source, lo + e_min, hi + e_max)?;
        }
        let ops = kinetic
            .par_iter()
            .map(|&e| amplitude_operator(source, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bohr: sys.bohr_frequencies(),
            system: sys,
            energies: kinetic.to_vec(),
            ops,
        })
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    pub fn bohr(&self) -> &BohrFrequencies {
        &self.bohr
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Full amplitude operator at node `g`.
    pub fn amplitude_operator(&self, g: usize) -> &CMatrix {
        &self.ops[g]
    }

    pub fn eigenop(&self, g: usize, delta: usize, a_out: Direction, a_in: Direction) -> CMatrix {
        eigenop_block(&self.ops[g], &self.bohr, delta, a_out, a_in)
    }

    /// `sum_Delta T_Delta^{a_out a_in}(E_g)`.
    pub fn summed(&self, g: usize, a_out: Direction, a_in: Direction) -> CMatrix {
        direction_block(&self.ops[g], a_out, a_in)
    }

    /// Largest `|[H_S, T_Delta] - Delta T_Delta|` over the table.
    pub fn eigen_relation_residual(&self) -> f64 {
        let h = self.system.hamiltonian();
        let mut worst = 0.0f64;
        for g in 0..self.len() {
            for (d, &delta) in self.bohr.deltas().iter().enumerate() {
                for ao in Direction::ALL {
                    for ai in Direction::ALL {
                        let t = self.eigenop(g, d, ao, ai);
                        let r = commutator(&h, &t) - t.scale(delta);
                        worst = worst.max(max_abs(&r));
                    }
                }
            }
        }
        worst
    }

    /// Operator-level optical theorem at node `g` for incidence `a`:
    /// returns the residual of `i (T_0^{aa} - T_0^{aa dagger}) = sigma^a` and
    /// the smallest eigenvalue of `sigma^a`.
    pub fn optical_check(&self, g: usize, a: Direction) -> (f64, f64) {
        let n = self.system.dim();
        let mut sigma = CMatrix::zeros(n, n);
        for d in 0..self.bohr.len() {
            for ao in Direction::ALL {
                let t = self.eigenop(g, d, ao, a);
                sigma += t.adjoint() * &t;
            }
        }
        let t0 = self.eigenop(g, self.bohr.zero_index(), a, a);
        let lhs = (&t0 - t0.adjoint()).map(|z| z * C64::i());
        (max_abs(&(lhs - &sigma)), min_eigenvalue(&sigma))
    }
}

/// Quadrature diagnostics gathered while assembling a map.
#[derive(Clone, Debug, Default)]
pub struct MapDiagnostics {
    /// Particle weight at nodes whose shifted arguments left the grid.
    pub dropped_weight: f64,
    /// `max |K - K^dagger|` of the raw anticommutator kernel before symmetrisation.
    pub kernel_asymmetry: f64,
    /// `max |X - X^dagger|` of the raw Lamb-shift integral.
    pub lamb_shift_asymmetry: f64,
    pub nodes: usize,
}

/// Assembled collision map.
#[derive(Clone, Debug)]
pub struct CollisionMap {
    system: SystemSpec,
    h_ls: HermitianOperator,
    /// Superoperator of `rho -> sum c A rho B^dagger`, Hermiticity-symmetrised.
    jump: CMatrix,
    /// Hermitian kernel of the anticommutator term.
    kernel: CMatrix,
    pub diagnostics: MapDiagnostics,
}

fn vec_of(m: &CMatrix) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_column_slice(m.as_slice())
}

fn unvec(v: &nalgebra::DVector<C64>, n: usize) -> CMatrix {
    CMatrix::from_column_slice(n, n, v.as_slice())
}

struct Partial {
    x: CMatrix,
    jump: CMatrix,
    kernel: CMatrix,
    dropped: f64,
}

/// Distinct values of `Delta' - Delta`.
fn frequency_shifts(bohr: &BohrFrequencies) -> Vec<f64> {
    let mut s: Vec<f64> = Vec::new();
    let scale = bohr.deltas().iter().fold(1.0f64, |m, d| m.max(d.abs()));
    for &a in bohr.deltas() {
        for &b in bohr.deltas() {
            let d = b - a;
            if !s.iter().any(|x| (x - d).abs() <= 1e-9 * scale) {
                s.push(d);
            }
        }
    }
    s
}

impl CollisionMap {
    /// Assemble `H_LS` and the dissipator for particle state `state`.
    pub fn build(source: &dyn AmplitudeSource, state: &ParticleEnergyState) -> Result<Self> {
        let sys = source.system().clone();
        let n = sys.dim();
        let bohr = sys.bohr_frequencies();
        let deltas = bohr.deltas().to_vec();
        let grid = state.grid();
        let pure = state.kind() == StateKind::PureWavepacket;
        let shifts = if pure {
            frequency_shifts(&bohr)
        } else {
            vec![0.0]
        };
        let shift_index = |d: f64| {
            shifts
                .iter()
                .position(|s| (s - d).abs() <= 1e-9 * d.abs().max(1.0))
                .expect("shift table covers all frequency differences")
        };

        let (lo, hi) = grid.range();
        let s_min = shifts.iter().copied().fold(0.0, f64::min);
        let s_max = shifts.iter().copied().fold(0.0, f64::max);
        let e_lo = (lo + s_min).max(0.0) + sys.energy(0);
        check_coverage(source, e_lo, hi + s_max + sys.energy(n - 1))?;

        let nn = n * n;
        let partials = grid
            .nodes()
            .par_iter()
            .zip(grid.weights().par_iter())
            .map(|(&e, &w)| -> Result<Partial> {
                let ops = shifts
                    .iter()
                    .map(|s| amplitude_operator(source, e + s))
                    .collect::<Result<Vec<_>>>()?;
                let mut part = Partial {
                    x: CMatrix::zeros(n, n),
                    jump: CMatrix::zeros(nn, nn),
                    kernel: CMatrix::zeros(n, n),
                    dropped: 0.0,
                };
                if pure && shifts.iter().any(|s| e + s < lo || e + s > hi) {
                    part.dropped = w * Direction::ALL
                        .iter()
                        .map(|&a| state.weight(e, a))
                        .sum::<f64>();
                }
                let here = &ops[shift_index(0.0)];
                for (d, &delta) in deltas.iter().enumerate() {
                    for ao in Direction::ALL {
                        for ai in Direction::ALL {
                            let rho = state.rho(ai, ao, e, e - delta);
                            if rho == C64::default() {
                                continue;
                            }
                            part.x += eigenop_block(here, &bohr, d, ao, ai) * (rho * w);
                        }
                    }
                }
                for (d, &delta) in deltas.iter().enumerate() {
                    for (d2, &delta2) in deltas.iter().enumerate() {
                        let shifted = e - delta + delta2;
                        for ai in Direction::ALL {
                            for ai2 in Direction::ALL {
                                let c = state.rho(ai, ai2, e, shifted);
                                if c == C64::default() {
                                    continue;
                                }
                                let other = &ops[shift_index(delta2 - delta)];
                                let cw = c * w;
                                for ao in Direction::ALL {
                                    let a = eigenop_block(here, &bohr, d, ao, ai);
                                    let b = eigenop_block(other, &bohr, d2, ao, ai2);
                                    part.jump += b.conjugate().kronecker(&a) * (cw * 0.5);
                                    part.jump += a.conjugate().kronecker(&b) * (cw.conj() * 0.5);
                                    part.kernel += b.adjoint() * &a * cw;
                                }
                            }
                        }
                    }
                }
                Ok(part)
            })
            .collect::<Result<Vec<_>>>()?;

        // Ordered reduction keeps results independent of the thread count.
        let mut x = CMatrix::zeros(n, n);
        let mut jump = CMatrix::zeros(nn, nn);
        let mut kernel = CMatrix::zeros(n, n);
        let mut dropped = 0.0;
        for p in partials {
            x += p.x;
            jump += p.jump;
            kernel += p.kernel;
            dropped += p.dropped;
        }
        if dropped > DROPPED_WEIGHT_TOL {
            return Err(Error::Coverage(format!(
                "shifted particle arguments leave the grid; dropped weight {dropped:e}"
            )));
        }
        let diagnostics = MapDiagnostics {
            dropped_weight: dropped,
            kernel_asymmetry: max_abs(&(&kernel - kernel.adjoint())),
            lamb_shift_asymmetry: max_abs(&(&x - x.adjoint())),
            nodes: grid.len(),
        };
        let h_ls = HermitianOperator::new((&x + x.adjoint()).scale(0.5))?;
        Ok(Self {
            system: sys,
            h_ls,
            jump,
            kernel: hermitian_part(&kernel),
            diagnostics,
        })
    }

    /// The map of a potential-free collision.
    pub fn identity(system: &SystemSpec) -> Self {
        let n = system.dim();
        Self {
            system: system.clone(),
            h_ls: HermitianOperator::zeros(n),
            jump: CMatrix::zeros(n * n, n * n),
            kernel: CMatrix::zeros(n, n),
            diagnostics: MapDiagnostics::default(),
        }
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    pub fn lamb_shift(&self) -> &HermitianOperator {
        &self.h_ls
    }

    /// Same map with `H_LS` and the dissipator scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            system: self.system.clone(),
            h_ls: self.h_ls.scaled(factor),
            jump: self.jump.scale(factor),
            kernel: self.kernel.scale(factor),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// `D(X)` for an arbitrary matrix `X`.
    pub fn dissipator_linear(&self, x: &CMatrix) -> CMatrix {
        let n = self.system.dim();
        let sandwich = unvec(&(&self.jump * vec_of(x)), n);
        sandwich - (&self.kernel * x + x * &self.kernel).scale(0.5)
    }

    /// `Phi(X) = X - i [H_LS, X] + D(X)` for an arbitrary matrix `X`.
    pub fn apply_linear(&self, x: &CMatrix) -> CMatrix {
        let c = commutator(self.h_ls.matrix(), x);
        x - c.map(|z| z * C64::i()) + self.dissipator_linear(x)
    }

    /// Generator superoperator `L` with `vec(Phi(X) - X) = L vec(X)`.
    pub fn change_superoperator(&self) -> CMatrix {
        let n = self.system.dim();
        let id = CMatrix::identity(n, n);
        let h = self.h_ls.matrix();
        let k = &self.kernel;
        // vec(H X) = (I (x) H) vec X, vec(X H) = (H^T (x) I) vec X
        let ham = (id.kronecker(h) - h.transpose().kronecker(&id)).map(|z| z * -C64::i());
        let anti = (id.kronecker(k) + k.transpose().kronecker(&id)).scale(0.5);
        ham + &self.jump - anti
    }

    /// Smallest eigenvalue of the Choi matrix `sum_ij E_ij (x) Phi(E_ij)`.
    pub fn choi_min_eigenvalue(&self) -> f64 {
        let n = self.system.dim();
        let mut choi = CMatrix::zeros(n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                let mut e = CMatrix::zeros(n, n);
                e[(i, j)] = c64(1.0, 0.0);
                let out = self.apply_linear(&e);
                choi.view_mut((i * n, j * n), (n, n)).copy_from(&out);
            }
        }
        min_eigenvalue(&hermitian_part(&choi))
    }
}

pub fn apply_dissipator(map: &CollisionMap, rho: &DensityMatrix) -> CMatrix {
    map.dissipator_linear(rho.matrix())
}

/// One collision. Fails if the result is not a density matrix within
/// [`POSITIVITY_TOL`] and [`MAP_TRACE_TOL`].
pub fn apply_map(map: &CollisionMap, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let out = map.apply_linear(rho.matrix());
    DensityMatrix::with_tolerance(out, MAP_TRACE_TOL, POSITIVITY_TOL).map_err(|e| match e {
        Error::Positivity {
            min_eigenvalue,
            tolerance,
            ..
        } => Error::Positivity {
            min_eigenvalue,
            tolerance,
            context: " after applying the collision map".into(),
        },
        other => other,
    })
}

/// Change of an observable split into its Lamb-shift and dissipative parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObservableChange {
    pub lamb_shift: f64,
    pub dissipative: f64,
    pub total: f64,
    /// Largest imaginary part discarded from the traces.
    pub imag_residue: f64,
}

pub fn observable_changes(
    map: &CollisionMap,
    rho: &DensityMatrix,
    a: &HermitianOperator,
) -> ObservableChange {
    let ls = trace(&(commutator(a.matrix(), map.h_ls.matrix()) * rho.matrix())) * -C64::i();
    let d = trace(&(a.matrix() * map.dissipator_linear(rho.matrix())));
    ObservableChange {
        lamb_shift: ls.re,
        dissipative: d.re,
        total: ls.re + d.re,
        imag_residue: ls.im.abs().max(d.im.abs()),
    }
}

/// Lamb shift of a narrow ensemble, `1/2 int dE sum_a T_0^{aa}(E) w^a(E) + h.c.`,
/// with `eig` tabulated on the ensemble's grid nodes.
pub fn narrow_lamb_shift(
    eig: &EigenOpTable,
    state: &ParticleEnergyState,
) -> Result<HermitianOperator> {
    let n = eig.system().dim();
    let grid = state.grid();
    check_same_nodes(eig, grid)?;
    let zero = eig.bohr().zero_index();
    let mut x = CMatrix::zeros(n, n);
    for (g, (&e, &w)) in grid.nodes().iter().zip(grid.weights()).enumerate() {
        for a in Direction::ALL {
            let p = state.weight(e, a);
            if p != 0.0 {
                x += eig.eigenop(g, zero, a, a).scale(w * p);
            }
        }
    }
    HermitianOperator::new((&x + x.adjoint()).scale(0.5))
}

/// Lindblad-form dissipator of a narrow ensemble applied to `rho`.
pub fn narrow_dissipator(
    eig: &EigenOpTable,
    state: &ParticleEnergyState,
    rho: &CMatrix,
) -> Result<CMatrix> {
    let n = eig.system().dim();
    let grid = state.grid();
    check_same_nodes(eig, grid)?;
    let mut out = CMatrix::zeros(n, n);
    for (g, (&e, &w)) in grid.nodes().iter().zip(grid.weights()).enumerate() {
        for a in Direction::ALL {
            let p = state.weight(e, a) * w;
            if p == 0.0 {
                continue;
            }
            for d in 0..eig.bohr().len() {
                for ao in Direction::ALL {
                    let t = eig.eigenop(g, d, ao, a);
                    let tt = t.adjoint() * &t;
                    out += (&t * rho * t.adjoint() - (&tt * rho + rho * &tt).scale(0.5)).scale(p);
                }
            }
        }
    }
    Ok(out)
}

fn check_same_nodes(eig: &EigenOpTable, grid: &EnergyGrid) -> Result<()> {
    if eig.energies() != grid.nodes() {
        return Err(Error::validation(
            "eigenoperator table must be built on the ensemble grid",
        ));
    }
    Ok(())
}

/// Default cap on the number of outgoing-energy nodes of the oracle.
pub const ORACLE_MAX_NODES: usize = 20_001;

/// Reference result obtained without the map: apply the S-matrix to the joint
/// pure-particle state on an outgoing-energy grid and trace out the particle.
pub fn full_space_oracle(
    system: &SystemSpec,
    pot: &PotentialSpec,
    rho: &DensityMatrix,
    state: &ParticleEnergyState,
    out_grid: &EnergyGrid,
    max_nodes: usize,
) -> Result<DensityMatrix> {
    if state.kind() != StateKind::PureWavepacket {
        return Err(Error::validation(
            "the full-space oracle needs a pure particle state",
        ));
    }
    if out_grid.len() > max_nodes {
        return Err(Error::MemoryGuard {
            requested: out_grid.len(),
            limit: max_nodes,
        });
    }
    let n = system.dim();
    let eig = rho.matrix().clone().symmetric_eigen();
    let comps: Vec<(f64, Vec<C64>)> = (0..n)
        .filter(|&k| eig.eigenvalues[k] > 0.0)
        .map(|k| {
            (
                eig.eigenvalues[k],
                eig.eigenvectors.column(k).iter().copied().collect(),
            )
        })
        .collect();

    let partials = out_grid
        .nodes()
        .par_iter()
        .zip(out_grid.weights().par_iter())
        .map(|(&e_out, &w)| -> Result<CMatrix> {
            // psi_out[(a'', j')] for each mixture component
            let mut acc = CMatrix::zeros(n, n);
            let blocks = (0..n)
                .map(|jo| solve_smatrix(system, pot, e_out + system.energy(jo)))
                .collect::<Result<Vec<_>>>()?;
            for (p, psi) in &comps {
                for ao in Direction::ALL {
                    let out: Vec<C64> = (0..n)
                        .map(|jo| {
                            let total = e_out + system.energy(jo);
                            let mut v = C64::default();
                            for ai in Direction::ALL {
                                for ji in 0..n {
                                    let kin = total - system.energy(ji);
                                    if kin <= 0.0 {
                                        continue;
                                    }
                                    v +=
                                        blocks[jo].s(ao, jo, ai, ji) * state.phi(kin, ai) * psi[ji];
                                }
                            }
                            v
                        })
                        .collect();
                    for r in 0..n {
                        for c in 0..n {
                            acc[(r, c)] += out[r] * out[c].conj() * (p * w);
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = partials
        .into_iter()
        .fold(CMatrix::zeros(n, n), |a, b| a + b);
    DensityMatrix::with_tolerance(total, MAP_TRACE_TOL, POSITIVITY_TOL)
}
