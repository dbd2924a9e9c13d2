//! Multichannel S-matrices for piecewise-constant matrix potentials.
//!
//! Each constant layer is diagonalised, the interfaces are turned into
//! two-port scattering matrices and the layers are chained with the Redheffer
//! star product. Amplitudes inside a layer are referenced at the layer edges,
//! so closed channels only ever appear as decaying factors `exp(-kappa d)`.
//!
//! Conventions: `Direction::Plus` is a right-moving particle (`p > 0`,
//! incident from the left). Asymptotic plane waves are referenced at `x = 0`
//! and amplitudes are flux normalised, so `s` is unitary on open channels and
//! `s = 1 - i t`, i.e. `t = i (s - 1)`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp;
use crate::operator::{c64, max_abs, CMatrix, HermitianOperator, SystemSpec, C64};

/// Minimum distance between a total energy and any channel threshold.
pub const THRESHOLD_EPS: f64 = 1e-8;

/// Direction of travel, `alpha = sign(p)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Plus,
    Minus,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Plus, Direction::Minus];

    pub fn index(self) -> usize {
        match self {
            Direction::Plus => 0,
            Direction::Minus => 1,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Direction::Plus => 1.0,
            Direction::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Direction::Plus => Direction::Minus,
            Direction::Minus => Direction::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Direction::Plus => '+',
            Direction::Minus => '-',
        }
    }
}

/// Scalar piecewise-constant function of position.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pieces: Vec<(f64, f64, f64)>,
}

impl Profile {
    /// Pieces are `(x_left, x_right, value)`; they must not overlap.
    pub fn new(mut pieces: Vec<(f64, f64, f64)>) -> Result<Self> {
        for &(l, r, v) in &pieces {
            if !(l.is_finite() && r.is_finite() && v.is_finite()) || l >= r {
                return Err(Error::validation(format!(
                    "bad profile piece [{l}, {r}] = {v}"
                )));
            }
        }
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pieces.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::validation("profile pieces overlap"));
        }
        Ok(Self { pieces })
    }

    pub fn boxcar(x_left: f64, x_right: f64, value: f64) -> Result<Self> {
        Self::new(vec![(x_left, x_right, value)])
    }

    pub fn pieces(&self) -> &[(f64, f64, f64)] {
        &self.pieces
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.pieces
            .iter()
            .find(|(l, r, _)| x >= *l && x <= *r)
            .map(|p| p.2)
            .unwrap_or(0.0)
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        Some((self.pieces.first()?.0, self.pieces.last()?.1))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            pieces: self
                .pieces
                .iter()
                .map(|&(l, r, v)| (l, r, v * factor))
                .collect(),
        }
    }

    /// Same profile displaced by `d` along x.
    pub fn shifted(&self, d: f64) -> Self {
        Self {
            pieces: self
                .pieces
                .iter()
                .map(|&(l, r, v)| (l + d, r + d, v))
                .collect(),
        }
    }
}

/// One product term `V_S^l (x) V^l(x)` of the interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTerm {
    pub operator: HermitianOperator,
    pub profile: Profile,
}

/// Region `[x_left, x_right]` where the interaction equals the constant matrix `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub x_left: f64,
    pub x_right: f64,
    pub w: HermitianOperator,
}

/// Interaction `V(x) = sum_l V_S^l V^l(x)` of finite range, plus the particle mass.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSpec {
    mass: f64,
    dim: usize,
    segments: Vec<Segment>,
    terms: Vec<PotentialTerm>,
}

impl PotentialSpec {
    /// Build the potential from its product decomposition.
    pub fn from_terms(mass: f64, dim: usize, terms: Vec<PotentialTerm>) -> Result<Self> {
        check_mass(mass)?;
        if terms.iter().any(|t| t.operator.dim() != dim) {
            return Err(Error::validation("potential operator dimension mismatch"));
        }
        let mut cuts: Vec<f64> = terms
            .iter()
            .flat_map(|t| t.profile.pieces().iter().flat_map(|p| [p.0, p.1]))
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut segments = Vec::new();
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let covered = terms
                .iter()
                .any(|t| t.profile.pieces().iter().any(|p| mid > p.0 && mid < p.1));
            if !covered {
                continue;
            }
            let m = terms.iter().fold(CMatrix::zeros(dim, dim), |acc, t| {
                acc + t.operator.matrix().map(|z| z * t.profile.value_at(mid))
            });
            segments.push(Segment {
                x_left: w[0],
                x_right: w[1],
                w: HermitianOperator::new(m)?,
            });
        }
        Ok(Self {
            mass,
            dim,
            segments,
            terms,
        })
    }

    /// Build the potential from constant segments; the decomposition uses one
    /// indicator profile per segment.
    pub fn from_segments(mass: f64, dim: usize, segments: Vec<Segment>) -> Result<Self> {
        let terms = segments
            .iter()
            .map(|s| {
                Ok(PotentialTerm {
                    operator: s.w.clone(),
                    profile: Profile::boxcar(s.x_left, s.x_right, 1.0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_terms(mass, dim, terms)
    }

    /// No interaction at all.
    pub fn free(mass: f64, dim: usize) -> Result<Self> {
        Self::from_terms(mass, dim, Vec::new())
    }

    /// `V0 * op` on `[-width/2, width/2]`.
    pub fn barrier(mass: f64, op: &HermitianOperator, v0: f64, width: f64) -> Result<Self> {
        Self::from_terms(
            mass,
            op.dim(),
            vec![PotentialTerm {
                operator: op.clone(),
                profile: Profile::boxcar(-0.5 * width, 0.5 * width, v0)?,
            }],
        )
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn terms(&self) -> &[PotentialTerm] {
        &self.terms
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        Some((self.segments.first()?.x_left, self.segments.last()?.x_right))
    }

    /// Same potential with every profile multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_terms(
            self.mass,
            self.dim,
            self.terms
                .iter()
                .map(|t| PotentialTerm {
                    operator: t.operator.clone(),
                    profile: t.profile.scaled(factor),
                })
                .collect(),
        )
    }

    /// Interaction matrix at position `x`.
    pub fn matrix_at(&self, x: f64) -> CMatrix {
        self.terms
            .iter()
            .fold(CMatrix::zeros(self.dim, self.dim), |acc, t| {
                acc + t.operator.matrix().map(|z| z * t.profile.value_at(x))
            })
    }
}

fn check_mass(mass: f64) -> Result<()> {
    if mass > 0.0 && mass.is_finite() {
        Ok(())
    } else {
        Err(Error::validation("mass must be positive"))
    }
}

/// S-matrix at one total energy.
///
/// `s` is `2N x 2N` with row `(alpha', j')` and column `(alpha, j)` stored at
/// `alpha.index() * N + j`; rows and columns of closed channels are zero.
#[derive(Clone, Debug)]
pub struct SMatrixBlock {
    pub energy: f64,
    pub open: Vec<bool>,
    pub s: CMatrix,
}

impl SMatrixBlock {
    pub fn channels(&self) -> usize {
        self.open.len()
    }

    fn idx(&self, a: Direction, j: usize) -> usize {
        a.index() * self.channels() + j
    }

    pub fn s(&self, a_out: Direction, j_out: usize, a_in: Direction, j_in: usize) -> C64 {
        self.s[(self.idx(a_out, j_out), self.idx(a_in, j_in))]
    }

    /// Amplitude `t = i (s - delta)`; zero if either channel is closed.
    pub fn t(&self, a_out: Direction, j_out: usize, a_in: Direction, j_in: usize) -> C64 {
        if !(self.open[j_out] && self.open[j_in]) {
            return C64::default();
        }
        let delta = if a_out == a_in && j_out == j_in {
            1.0
        } else {
            0.0
        };
        C64::i() * (self.s(a_out, j_out, a_in, j_in) - c64(delta, 0.0))
    }

    /// Indices (into the `2N` layout) of open channels.
    pub fn open_indices(&self) -> Vec<usize> {
        let n = self.channels();
        Direction::ALL
            .iter()
            .flat_map(|a| {
                (0..n)
                    .filter(|&j| self.open[j])
                    .map(move |j| a.index() * n + j)
            })
            .collect()
    }

    /// `s` restricted to open channels.
    pub fn open_s(&self) -> CMatrix {
        let idx = self.open_indices();
        CMatrix::from_fn(idx.len(), idx.len(), |r, c| self.s[(idx[r], idx[c])])
    }

    /// `t` restricted to open channels.
    pub fn open_t(&self) -> CMatrix {
        let s = self.open_s();
        let id = CMatrix::identity(s.nrows(), s.ncols());
        (s - id).map(|z| z * C64::i())
    }

    fn identity(energy: f64, open: Vec<bool>) -> Self {
        let n = open.len();
        let s = CMatrix::from_fn(2 * n, 2 * n, |r, c| {
            if r == c && open[r % n] {
                c64(1.0, 0.0)
            } else {
                C64::default()
            }
        });
        Self { energy, open, s }
    }
}

struct Modes {
    u: CMatrix,
    k: Vec<C64>,
}

fn wavenumber(mass: f64, hbar: f64, kinetic: f64) -> C64 {
    if kinetic >= 0.0 {
        c64((2.0 * mass * kinetic).sqrt() / hbar, 0.0)
    } else {
        c64(0.0, (-2.0 * mass * kinetic).sqrt() / hbar)
    }
}

fn layer_modes(system: &SystemSpec, w: Option<&CMatrix>, energy: f64, mass: f64) -> Result<Modes> {
    let n = system.dim();
    let (u, levels): (CMatrix, Vec<f64>) = match w {
        None => (CMatrix::identity(n, n), system.energies().to_vec()),
        Some(w) => {
            let m = system.hamiltonian() + w;
            let eig = crate::operator::hermitian_part(&m).symmetric_eigen();
            (eig.eigenvectors, eig.eigenvalues.iter().copied().collect())
        }
    };
    for (channel, &mu) in levels.iter().enumerate() {
        if (energy - mu).abs() < THRESHOLD_EPS {
            return Err(Error::Threshold {
                energy,
                channel,
                eps: THRESHOLD_EPS,
            });
        }
    }
    let k = levels
        .iter()
        .map(|&mu| wavenumber(mass, system.hbar(), energy - mu))
        .collect();
    Ok(Modes { u, k })
}

/// Two-port scattering matrix: `b = r a + tp d`, `c = t a + rp d` where `a`, `d`
/// are incoming from the left and right and `b`, `c` outgoing.
#[derive(Clone, Debug)]
struct TwoPort {
    r: CMatrix,
    t: CMatrix,
    rp: CMatrix,
    tp: CMatrix,
}

fn interface(left: &Modes, right: &Modes, index: usize, energy: f64) -> Result<TwoPort> {
    let n = left.k.len();
    // Derivative rows are rescaled so both blocks are O(1).
    let scale = left
        .k
        .iter()
        .chain(right.k.iter())
        .fold(0.0f64, |m, k| m.max(k.norm()))
        .max(1e-300);
    let ul_k = CMatrix::from_fn(n, n, |r, c| left.u[(r, c)] * left.k[c] / scale);
    let ur_k = CMatrix::from_fn(n, n, |r, c| right.u[(r, c)] * right.k[c] / scale);

    let mut a = CMatrix::zeros(2 * n, 2 * n);
    let mut b = CMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&left.u);
    a.view_mut((0, n), (n, n)).copy_from(&(-&right.u));
    a.view_mut((n, 0), (n, n)).copy_from(&(-&ul_k));
    a.view_mut((n, n), (n, n)).copy_from(&(-&ur_k));
    b.view_mut((0, 0), (n, n)).copy_from(&(-&left.u));
    b.view_mut((0, n), (n, n)).copy_from(&right.u);
    b.view_mut((n, 0), (n, n)).copy_from(&(-&ul_k));
    b.view_mut((n, n), (n, n)).copy_from(&(-&ur_k));

    let x = a
        .lu()
        .solve(&b)
        .filter(|x| x.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .ok_or(Error::SingularInterface {
            interface: index,
            energy,
        })?;
    Ok(TwoPort {
        r: x.view((0, 0), (n, n)).into_owned(),
        tp: x.view((0, n), (n, n)).into_owned(),
        t: x.view((n, 0), (n, n)).into_owned(),
        rp: x.view((n, n), (n, n)).into_owned(),
    })
}

fn solve_square(m: CMatrix, rhs: &CMatrix, index: usize, energy: f64) -> Result<CMatrix> {
    m.lu().solve(rhs).ok_or(Error::SingularInterface {
        interface: index,
        energy,
    })
}

/// Redheffer star product: `a` on the left, `b` on the right.
fn star(a: &TwoPort, b: &TwoPort, index: usize, energy: f64) -> Result<TwoPort> {
    let n = a.r.nrows();
    let id = CMatrix::identity(n, n);
    // G = (I - rp_a r_b)^-1
    let g_ta = solve_square(&id - &a.rp * &b.r, &a.t, index, energy)?;
    let g_rpa = solve_square(&id - &a.rp * &b.r, &a.rp, index, energy)?;
    let t = &b.t * &g_ta;
    let r = &a.r + &a.tp * &b.r * &g_ta;
    let tp = &a.tp * (&id + &b.r * &g_rpa) * &b.tp;
    let rp = &b.rp + &b.t * &g_rpa * &b.tp;
    Ok(TwoPort { r, t, rp, tp })
}

/// Append free propagation across a layer of width `d` (amplitudes re-referenced
/// from its left edge to its right edge).
fn propagate(sys: TwoPort, modes: &Modes, d: f64) -> TwoPort {
    let phase: Vec<C64> = modes.k.iter().map(|k| (C64::i() * k * d).exp()).collect();
    let n = phase.len();
    let left = |m: &CMatrix| CMatrix::from_fn(n, n, |r, c| phase[r] * m[(r, c)]);
    let right = |m: &CMatrix| CMatrix::from_fn(n, n, |r, c| m[(r, c)] * phase[c]);
    TwoPort {
        r: sys.r,
        t: left(&sys.t),
        tp: right(&sys.tp),
        rp: right(&left(&sys.rp)),
    }
}

/// Exact S-matrix block at total energy `energy`.
pub fn solve_smatrix(
    system: &SystemSpec,
    pot: &PotentialSpec,
    energy: f64,
) -> Result<SMatrixBlock> {
    let n = system.dim();
    if pot.dim() != n {
        return Err(Error::validation("potential and system dimensions differ"));
    }
    if !energy.is_finite() {
        return Err(Error::validation("energy must be finite"));
    }
    for (channel, &e) in system.energies().iter().enumerate() {
        if (energy - e).abs() < THRESHOLD_EPS {
            return Err(Error::Threshold {
                energy,
                channel,
                eps: THRESHOLD_EPS,
            });
        }
    }
    let open: Vec<bool> = system.energies().iter().map(|&e| energy > e).collect();
    if !open.iter().any(|&o| o) {
        return Err(Error::NoOpenChannel(energy));
    }
    let segs = pot.segments();
    if segs.is_empty() {
        return Ok(SMatrixBlock::identity(energy, open));
    }

    // Layers between consecutive interfaces; gaps between segments are free.
    let mut interfaces = vec![segs[0].x_left];
    let mut layers: Vec<Option<&CMatrix>> = Vec::new();
    for (i, seg) in segs.iter().enumerate() {
        if i > 0 && seg.x_left > segs[i - 1].x_right {
            layers.push(None);
            interfaces.push(seg.x_left);
        }
        layers.push(Some(seg.w.matrix()));
        interfaces.push(seg.x_right);
    }

    let mass = pot.mass();
    let outer = layer_modes(system, None, energy, mass)?;
    let inner: Vec<Modes> = layers
        .iter()
        .map(|w| layer_modes(system, *w, energy, mass))
        .collect::<Result<_>>()?;

    let mut total = interface(&outer, &inner[0], 0, energy)?;
    for (i, modes) in inner.iter().enumerate() {
        let width = interfaces[i + 1] - interfaces[i];
        total = propagate(total, modes, width);
        let next = inner.get(i + 1).unwrap_or(&outer);
        let step = interface(modes, next, i + 1, energy)?;
        total = star(&total, &step, i + 1, energy)?;
    }

    // Re-reference the outer amplitudes to plane waves at x = 0 and flux-normalise.
    let x_first = interfaces[0];
    let x_last = *interfaces.last().unwrap();
    let k = &outer.k;
    let mut s = CMatrix::zeros(2 * n, 2 * n);
    let (p, m) = (Direction::Plus.index() * n, Direction::Minus.index() * n);
    for jo in (0..n).filter(|&j| open[j]) {
        for ji in (0..n).filter(|&j| open[j]) {
            let flux = (k[jo].re / k[ji].re).sqrt();
            let e = |kk: C64, x: f64| (C64::i() * kk * x).exp();
            s[(p + jo, p + ji)] = flux * e(-k[jo], x_last) * total.t[(jo, ji)] * e(k[ji], x_first);
            s[(m + jo, p + ji)] = flux * e(k[jo], x_first) * total.r[(jo, ji)] * e(k[ji], x_first);
            s[(p + jo, m + ji)] = flux * e(-k[jo], x_last) * total.rp[(jo, ji)] * e(-k[ji], x_last);
            s[(m + jo, m + ji)] = flux * e(k[jo], x_first) * total.tp[(jo, ji)] * e(-k[ji], x_last);
        }
    }
    Ok(SMatrixBlock { energy, open, s })
}

fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// First-order amplitude `2 pi <E'^{a_out}, j_out | V | E_p^{a_in}, j_in>` with
/// `E' = E_p + e_{j_in} - e_{j_out}`.
pub fn born_amplitude(
    system: &SystemSpec,
    pot: &PotentialSpec,
    j_in: usize,
    a_in: Direction,
    j_out: usize,
    a_out: Direction,
    kinetic: f64,
) -> Result<C64> {
    if !(kinetic > 0.0) {
        return Err(Error::validation(
            "incoming kinetic energy must be positive",
        ));
    }
    let out = kinetic + system.energy(j_in) - system.energy(j_out);
    if out <= 0.0 {
        return Err(Error::ChannelClosed {
            channel: j_out,
            kinetic: out,
        });
    }
    let hbar = system.hbar();
    let m = pot.mass();
    let p = (2.0 * m * kinetic).sqrt();
    let p_out = (2.0 * m * out).sqrt();
    let q = a_in.sign() * p - a_out.sign() * p_out;
    let integral: C64 = pot
        .segments()
        .iter()
        .map(|seg| {
            let len = seg.x_right - seg.x_left;
            let mid = 0.5 * (seg.x_left + seg.x_right);
            let overlap = C64::from_polar(len * sinc(q * len / (2.0 * hbar)), q * mid / hbar);
            seg.w.matrix()[(j_out, j_in)] * overlap
        })
        .sum();
    Ok(integral * (m / (hbar * (p * p_out).sqrt())))
}

/// Source of scattering amplitudes `t^{a_out a_in}_{j_out j_in}(E)` at total energy `E`.
pub trait AmplitudeSource: Sync {
    fn system(&self) -> &SystemSpec;
    /// Amplitude matrix at total energy `energy` in the `2N` layout; closed
    /// channels carry zeros.
    fn amplitudes(&self, energy: f64) -> Result<CMatrix>;

    /// Total-energy interval with tabulated data, if limited.
    fn coverage(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Coverage error if `[lo, hi]` is not inside the source's tabulated range.
pub fn check_coverage(source: &dyn AmplitudeSource, lo: f64, hi: f64) -> Result<()> {
    match source.coverage() {
        Some((a, b)) if lo < a - 1e-12 * a.abs().max(1.0) || hi > b + 1e-12 * b.abs().max(1.0) => {
            Err(Error::Coverage(format!(
                "total energies [{lo}, {hi}] needed, table covers [{a}, {b}]"
            )))
        }
        _ => Ok(()),
    }
}

/// Born amplitudes as an [`AmplitudeSource`].
#[derive(Clone, Debug)]
pub struct BornAmplitudes {
    pub system: SystemSpec,
    pub potential: PotentialSpec,
}

impl AmplitudeSource for BornAmplitudes {
    fn system(&self) -> &SystemSpec {
        &self.system
    }

    fn amplitudes(&self, energy: f64) -> Result<CMatrix> {
        let n = self.system.dim();
        let mut t = CMatrix::zeros(2 * n, 2 * n);
        for ji in 0..n {
            let kin = energy - self.system.energy(ji);
            if kin <= 0.0 {
                continue;
            }
            for jo in 0..n {
                if energy - self.system.energy(jo) <= 0.0 {
                    continue;
                }
                for ai in Direction::ALL {
                    for ao in Direction::ALL {
                        t[(ao.index() * n + jo, ai.index() * n + ji)] =
                            born_amplitude(&self.system, &self.potential, ji, ai, jo, ao, kin)?;
                    }
                }
            }
        }
        Ok(t)
    }
}

/// Deviations from unitarity of one block.
#[derive(Clone, Debug, Default)]
pub struct UnitarityReport {
    /// `max |s^dagger s - 1|`.
    pub column_orthonormality: f64,
    /// `max |s s^dagger - 1|`.
    pub row_orthonormality: f64,
    /// `max |sum_out P - 1|` over incoming channels.
    pub outgoing_probability: f64,
    /// `max |sum_in P - 1|` over outgoing channels.
    pub incoming_probability: f64,
}

impl UnitarityReport {
    pub fn max(&self) -> f64 {
        self.column_orthonormality
            .max(self.row_orthonormality)
            .max(self.outgoing_probability)
            .max(self.incoming_probability)
    }
}

pub fn verify_unitarity(block: &SMatrixBlock) -> UnitarityReport {
    let s = block.open_s();
    let id = CMatrix::identity(s.nrows(), s.ncols());
    let p = s.map(|z| z.norm_sqr());
    let col_sums = p.row_sum();
    let row_sums = p.column_sum();
    UnitarityReport {
        column_orthonormality: max_abs(&(s.adjoint() * &s - &id)),
        row_orthonormality: max_abs(&(&s * s.adjoint() - &id)),
        outgoing_probability: col_sums.iter().fold(0.0f64, |m, x| m.max((x - 1.0).abs())),
        incoming_probability: row_sums.iter().fold(0.0f64, |m, x| m.max((x - 1.0).abs())),
    }
}

/// Optical-theorem diagnostics of one block.
#[derive(Clone, Debug, Default)]
pub struct OpticalReport {
    /// `max |i (t - t^dagger) - t^dagger t|` over all open pairs.
    pub general_identity: f64,
    /// `max |Im t_diag + sigma / 2|` for elastic forward amplitudes.
    pub forward_identity: f64,
    /// Largest `Im t^{aa}_{jj}` (must not be positive).
    pub max_forward_imag: f64,
    /// Smallest eigenvalue of the cross-section operators `sigma^a`.
    pub min_cross_section_eigenvalue: f64,
}

pub fn verify_optical_theorem(block: &SMatrixBlock) -> OpticalReport {
    let t = block.open_t();
    let gram = t.adjoint() * &t;
    let lhs = (&t - t.adjoint()).map(|z| z * C64::i());
    let general_identity = max_abs(&(lhs - &gram));
    let mut forward_identity = 0.0f64;
    let mut max_forward_imag = f64::NEG_INFINITY;
    for d in 0..t.nrows() {
        let im = t[(d, d)].im;
        forward_identity = forward_identity.max((im + 0.5 * gram[(d, d)].re).abs());
        max_forward_imag = max_forward_imag.max(im);
    }
    // Cross-section operator per incoming direction: the Gram block of columns
    // sharing that direction.
    let open_per_dir = block.open.iter().filter(|&&o| o).count();
    let mut min_eig = f64::INFINITY;
    for a in 0..2 {
        let sub = gram
            .view(
                (a * open_per_dir, a * open_per_dir),
                (open_per_dir, open_per_dir),
            )
            .into_owned();
        min_eig = min_eig.min(crate::operator::min_eigenvalue(&sub));
    }
    OpticalReport {
        general_identity,
        forward_identity,
        max_forward_imag,
        min_cross_section_eigenvalue: min_eig,
    }
}

/// How the table answers off-node queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TableMode {
    /// Cubic interpolation of the stored blocks, falling back to a direct
    /// solve near thresholds.
    #[default]
    Interpolated,
    /// Always solve at the requested energy.
    Exact,
}

/// S-matrix blocks on an increasing grid of total energies.
#[derive(Clone, Debug)]
pub struct SMatrixTable {
    system: SystemSpec,
    potential: PotentialSpec,
    energies: Vec<f64>,
    blocks: Vec<SMatrixBlock>,
    mode: TableMode,
}

impl SMatrixTable {
    /// Solve at each energy in parallel. Energies closer than
    /// [`THRESHOLD_EPS`] to a threshold are skipped.
    pub fn build(
        system: &SystemSpec,
        potential: &PotentialSpec,
        energies: &[f64],
        mode: TableMode,
    ) -> Result<Self> {
        if energies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation(
                "table energies must be strictly increasing",
            ));
        }
        let solved: Vec<Result<SMatrixBlock>> = energies
            .par_iter()
            .map(|&e| solve_smatrix(system, potential, e))
            .collect();
        let mut kept_e = Vec::with_capacity(energies.len());
        let mut blocks = Vec::with_capacity(energies.len());
        for (e, b) in energies.iter().zip(solved) {
            match b {
                Ok(b) => {
                    kept_e.push(*e);
                    blocks.push(b);
                }
                Err(Error::Threshold { .. }) | Err(Error::NoOpenChannel(_)) => {}
                Err(err) => return Err(err),
            }
        }
        Ok(Self {
            system: system.clone(),
            potential: potential.clone(),
            energies: kept_e,
            blocks,
            mode,
        })
    }

    /// Uniform grid of `n` total energies on `[lo, hi]`.
    pub fn uniform(
        system: &SystemSpec,
        potential: &PotentialSpec,
        lo: f64,
        hi: f64,
        n: usize,
        mode: TableMode,
    ) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::validation("table needs n >= 2 and hi > lo"));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let e: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
        Self::build(system, potential, &e, mode)
    }

    /// Table that only solves on demand.
    pub fn exact(system: &SystemSpec, potential: &PotentialSpec) -> Self {
        Self {
            system: system.clone(),
            potential: potential.clone(),
            energies: Vec::new(),
            blocks: Vec::new(),
            mode: TableMode::Exact,
        }
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn blocks(&self) -> &[SMatrixBlock] {
        &self.blocks
    }

    pub fn mode(&self) -> TableMode {
        self.mode
    }

    pub fn lookup(&self, energy: f64) -> Result<SMatrixBlock> {
        if self.mode == TableMode::Interpolated {
            if let Some(b) = self.interpolate(energy) {
                return Ok(b);
            }
        }
        solve_smatrix(&self.system, &self.potential, energy)
    }

    fn interpolate(&self, energy: f64) -> Option<SMatrixBlock> {
        let st = interp::stencil(&self.energies, energy)?;
        if st.weights.len() == 1 {
            return Some(self.blocks[st.start].clone());
        }
        let open: Vec<bool> = self.system.energies().iter().map(|&e| energy > e).collect();
        let nodes = &self.energies[st.indices()];
        let span = nodes[nodes.len() - 1] - nodes[0];
        let min_gap = nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if min_gap < 1e-6 * span {
            return None;
        }
        if st.indices().any(|i| self.blocks[i].open != open) {
            return None;
        }
        let s = st.indices().zip(&st.weights).fold(
            CMatrix::zeros(2 * open.len(), 2 * open.len()),
            |acc, (i, &w)| acc + self.blocks[i].s.map(|z| z * w),
        );
        Some(SMatrixBlock { energy, open, s })
    }

    /// Amplitude `t^{a_out a_in}_{j_out j_in}(E)`.
    pub fn amplitude(
        &self,
        energy: f64,
        a_out: Direction,
        j_out: usize,
        a_in: Direction,
        j_in: usize,
    ) -> Result<C64> {
        Ok(self.lookup(energy)?.t(a_out, j_out, a_in, j_in))
    }
}

impl AmplitudeSource for SMatrixTable {
    fn system(&self) -> &SystemSpec {
        &self.system
    }

    fn coverage(&self) -> Option<(f64, f64)> {
        match (self.mode, self.energies.first(), self.energies.last()) {
            (TableMode::Interpolated, Some(a), Some(b)) => Some((*a, *b)),
            _ => None,
        }
    }

    fn amplitudes(&self, energy: f64) -> Result<CMatrix> {
        let block = self.lookup(energy)?;
        let n = block.channels();
        let mut t = DMatrix::zeros(2 * n, 2 * n);
        for ao in Direction::ALL {
            for jo in 0..n {
                for ai in Direction::ALL {
                    for ji in 0..n {
                        t[(ao.index() * n + jo, ai.index() * n + ji)] = block.t(ao, jo, ai, ji);
                    }
                }
            }
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::pauli;

    fn scalar_barrier(v0: f64, width: f64) -> (SystemSpec, PotentialSpec) {
        let sys = SystemSpec::new(vec![0.0], 1.0).unwrap();
        let pot = PotentialSpec::barrier(1.0, &HermitianOperator::identity(1), v0, width).unwrap();
        (sys, pot)
    }

    #[test]
    fn free_potential_is_identity() {
        let sys = SystemSpec::two_level(1.0, 1.0).unwrap();
        let pot = PotentialSpec::free(1.0, 2).unwrap();
        let b = solve_smatrix(&sys, &pot, 0.2).unwrap();
        assert_eq!(b.open, vec![true, false]);
        assert_eq!(b.open_s(), CMatrix::identity(2, 2));
        assert_eq!(max_abs(&b.open_t()), 0.0);
    }

    #[test]
    fn threshold_is_rejected() {
        let sys = SystemSpec::two_level(1.0, 1.0).unwrap();
        let pot = PotentialSpec::barrier(1.0, &pauli::sigma_x(), 1.0, 1.0).unwrap();
        assert!(matches!(
            solve_smatrix(&sys, &pot, 0.5 + 1e-10),
            Err(Error::Threshold { channel: 1, .. })
        ));
        assert!(matches!(
            solve_smatrix(&sys, &pot, -0.7),
            Err(Error::NoOpenChannel(_))
        ));
    }

    #[test]
    fn closed_channels_stay_unitary_on_open_block() {
        let sys = SystemSpec::new(vec![0.0, 1.0, 7.0], 1.0).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let op = HermitianOperator::random(3, &mut rng);
        // thick barrier: the closed channel decays by exp(-kappa * 40)
        let pot = PotentialSpec::barrier(1.0, &op, 2.0, 40.0).unwrap();
        let b = solve_smatrix(&sys, &pot, 2.5).unwrap();
        assert_eq!(b.open, vec![true, true, false]);
        assert!(verify_unitarity(&b).max() < 1e-10);
    }

    #[test]
    fn born_forward_boxcar() {
        let (sys, pot) = scalar_barrier(0.3, 1.0);
        let kin = 50.0;
        let t = born_amplitude(&sys, &pot, 0, Direction::Plus, 0, Direction::Plus, kin).unwrap();
        let p = (2.0 * kin).sqrt();
        assert!((t - c64(0.3 * 1.0 / p, 0.0)).norm() < 1e-14);
        // backward: |sin(p a)/(p a)| * V0 a m / p
        let tb = born_amplitude(&sys, &pot, 0, Direction::Plus, 0, Direction::Minus, kin).unwrap();
        let expected = ((p).sin() / p).abs() * 0.3 / p;
        assert!((tb.norm() - expected).abs() < 1e-14);
    }

    #[test]
    fn born_closed_channel_errors() {
        let sys = SystemSpec::two_level(1.0, 1.0).unwrap();
        let pot = PotentialSpec::barrier(1.0, &pauli::sigma_x(), 1.0, 1.0).unwrap();
        let r = born_amplitude(&sys, &pot, 0, Direction::Plus, 1, Direction::Plus, 0.5);
        assert!(matches!(r, Err(Error::ChannelClosed { channel: 1, .. })));
    }

    #[test]
    fn potential_decomposition_reconstructs_segments() {
        let t1 = PotentialTerm {
            operator: pauli::sigma_x(),
            profile: Profile::new(vec![(-1.0, 0.0, 2.0), (0.5, 1.0, -1.0)]).unwrap(),
        };
        let t2 = PotentialTerm {
            operator: pauli::sigma_z(),
            profile: Profile::boxcar(-0.5, 0.75, 0.3).unwrap(),
        };
        let pot = PotentialSpec::from_terms(1.0, 2, vec![t1, t2]).unwrap();
        assert_eq!(pot.support(), Some((-1.0, 1.0)));
        for seg in pot.segments() {
            let mid = 0.5 * (seg.x_left + seg.x_right);
            assert!(max_abs(&(seg.w.matrix() - pot.matrix_at(mid))) < 1e-15);
        }
        // [0, 0.5] only has the sigma_z term, [0.75, 1] only sigma_x
        assert_eq!(pot.segments().len(), 5);
    }

    #[test]
    fn interpolated_table_matches_direct_solve() {
        let (sys, pot) = scalar_barrier(3.0, 1.0);
        let table =
            SMatrixTable::uniform(&sys, &pot, 40.0, 60.0, 401, TableMode::Interpolated).unwrap();
        let e = 47.123;
        let a = table.lookup(e).unwrap();
        let b = solve_smatrix(&sys, &pot, e).unwrap();
        assert!(max_abs(&(a.s - b.s)) < 1e-8);
    }
}
