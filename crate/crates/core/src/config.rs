//! TOML experiment configuration.
//!
//! Matrices are written either as rows of `[re, im]` pairs or by name
//! (`"sigma_x"`, `"sigma_y"`, `"sigma_z"`, `"identity"`, `"hamiltonian"`).
//! Potential terms carry an operator and a list of `[x_left, x_right, value]`
//! pieces.

use std::path::Path;

use serde::Deserialize;

use crate::channel::{PotentialSpec, PotentialTerm, Profile, SMatrixTable, TableMode};
use crate::error::{Error, Result};
use crate::kubo::KuboConfig;
use crate::operator::{
    c64, pauli, thermal_state, CMatrix, DensityMatrix, HermitianOperator, SystemSpec,
};
use crate::particle::{
    gaussian_wavepacket, narrow_thermal_ensemble, EnergyGrid, ParticleEnergyState,
};

/// Sweep path that rescales the potential to a coupling `lambda = V0 a / (hbar v0)`.
pub const COUPLING_PATH: &str = "coupling";

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MatrixInput {
    Named(String),
    Entries(Vec<Vec<[f64; 2]>>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub energies: Vec<f64>,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermInput {
    pub operator: MatrixInput,
    pub profile: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    #[serde(default)]
    pub terms: Vec<TermInput>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ParticleKind {
    Gaussian,
    Thermal,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSection {
    pub kind: ParticleKind,
    #[serde(default = "one")]
    pub mass: f64,
    pub p0: Option<f64>,
    pub x0: Option<f64>,
    pub sigma_p: Option<f64>,
    pub beta: Option<f64>,
    pub energy_range: Option<[f64; 2]>,
    #[serde(default = "default_directions")]
    pub directions: [f64; 2],
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_directions() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_nodes() -> usize {
    2001
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    pub beta: Option<f64>,
    pub matrix: Option<MatrixInput>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum TableModeInput {
    #[default]
    Interpolated,
    Exact,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSection {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    #[serde(default)]
    pub mode: TableModeInput,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RangeInput {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl RangeInput {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => (0..n)
                .map(|k| self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Tabulated amplitudes; exact solves when absent.
    pub table: Option<TableSection>,
    /// Total energies for `smatrix`.
    pub smatrix: Option<RangeInput>,
    /// Kinetic energies for `response` and `fdr`.
    pub response_energies: Option<Vec<f64>>,
    pub times: Option<RangeInput>,
    pub omegas: Option<RangeInput>,
    pub pv_window: Option<f64>,
    pub oracle_nodes: Option<usize>,
    pub random_states: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmeSection {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    pub max_step: Option<f64>,
}

fn default_gamma() -> f64 {
    0.1
}
fn default_t_final() -> f64 {
    30.0
}
fn default_samples() -> usize {
    7
}
fn default_trajectories() -> usize {
    10_000
}

impl Default for QmeSection {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            t_final: default_t_final(),
            samples: default_samples(),
            trajectories: default_trajectories(),
            seed: 0,
            max_step: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    #[serde(default = "default_precision")]
    pub precision: usize,
}

fn default_precision() -> usize {
    17
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            precision: default_precision(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KuboSection {
    pub x0: Option<f64>,
    pub v0: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub potential: PotentialSection,
    pub particle: ParticleSection,
    pub observable: Option<MatrixInput>,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default)]
    pub grids: GridSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub qme: QmeSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub kubo: KuboSection,
    #[serde(skip)]
    raw: toml::Table,
}

fn cfg_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn with_path<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => cfg_err(path, other.to_string()),
    })
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: toml::Table =
            toml::from_str(text).map_err(|e| cfg_err("<root>", e.to_string()))?;
        Self::from_table(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            cfg_err(
                path.display().to_string(),
                format!("cannot read config: {e}"),
            )
        })?;
        Self::from_toml_str(&text)
    }

    fn from_table(raw: toml::Table) -> Result<Self> {
        let mut cfg: Self = toml::Value::Table(raw.clone())
            .try_into()
            .map_err(|e: toml::de::Error| cfg_err("<root>", e.to_string()))?;
        cfg.raw = raw;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML text of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(&self.raw).unwrap_or_default()
    }

    /// Same configuration with one numeric key replaced. Paths are dotted,
    /// array elements addressed by index (`potential.terms.0.profile.0.2`).
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self> {
        if path == COUPLING_PATH {
            return self.with_coupling(value);
        }
        let mut raw = self.raw.clone();
        let mut parts = path.split('.');
        let first = parts.next().unwrap_or_default();
        let mut node = raw
            .get_mut(first)
            .ok_or_else(|| cfg_err(path, "unknown key"))?;
        for part in parts {
            node = match node {
                toml::Value::Table(t) => t
                    .get_mut(part)
                    .ok_or_else(|| cfg_err(path, "unknown key"))?,
                toml::Value::Array(a) => {
                    let idx: usize = part
                        .parse()
                        .map_err(|_| cfg_err(path, "array index expected"))?;
                    a.get_mut(idx)
                        .ok_or_else(|| cfg_err(path, "index out of range"))?
                }
                _ => return Err(cfg_err(path, "path descends into a scalar")),
            };
        }
        *node = match node {
            toml::Value::Integer(_) if value.fract() == 0.0 => toml::Value::Integer(value as i64),
            toml::Value::Integer(_) | toml::Value::Float(_) => toml::Value::Float(value),
            _ => return Err(cfg_err(path, "target is not numeric")),
        };
        Self::from_table(raw)
    }

    /// Rescale every potential profile so the largest magnitude equals
    /// `V0 = lambda hbar v0 / a`, where `a` is the support width.
    pub fn with_coupling(&self, lambda: f64) -> Result<Self> {
        let pot = self.potential()?;
        let (lo, hi) = pot.support().ok_or_else(|| {
            cfg_err(
                "potential.terms",
                "coupling sweep needs a non-empty potential",
            )
        })?;
        let vmax = self
            .potential
            .terms
            .iter()
            .flat_map(|t| t.profile.iter().map(|p| p[2].abs()))
            .fold(0.0, f64::max);
        if vmax == 0.0 {
            return Err(cfg_err(
                "potential.terms",
                "coupling sweep needs a non-zero potential",
            ));
        }
        let v0 = self.classical_velocity()?;
        let target = lambda * self.system.hbar * v0 / (hi - lo);
        let factor = target / vmax;
        let mut raw = self.raw.clone();
        let terms = raw
            .get_mut("potential")
            .and_then(|p| p.get_mut("terms"))
            .and_then(|t| t.as_array_mut())
            .ok_or_else(|| cfg_err("potential.terms", "missing"))?;
        for term in terms.iter_mut() {
            let pieces = term
                .get_mut("profile")
                .and_then(|p| p.as_array_mut())
                .ok_or_else(|| cfg_err("potential.terms.profile", "missing"))?;
            for piece in pieces.iter_mut() {
                if let Some(v) = piece.as_array_mut().and_then(|a| a.get_mut(2)) {
                    let old = v
                        .as_float()
                        .or_else(|| v.as_integer().map(|i| i as f64))
                        .unwrap_or(0.0);
                    *v = toml::Value::Float(old * factor);
                }
            }
        }
        Self::from_table(raw)
    }

    /// Apply command-line overrides.
    pub fn with_overrides(&self, seed: Option<u64>, grid_nodes: Option<usize>) -> Result<Self> {
        let mut raw = self.raw.clone();
        if let Some(seed) = seed {
            let qme = raw
                .entry("qme")
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| cfg_err("qme", "must be a table"))?;
            qme.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        if let Some(n) = grid_nodes {
            let particle = raw
                .get_mut("particle")
                .and_then(|p| p.as_table_mut())
                .ok_or_else(|| cfg_err("particle", "missing"))?;
            particle.insert("nodes".into(), toml::Value::Integer(n as i64));
        }
        Self::from_table(raw)
    }

    pub fn validate(&self) -> Result<()> {
        let sys = with_path("system.energies", self.system_spec())?;
        for (i, term) in self.potential.terms.iter().enumerate() {
            with_path(
                &format!("potential.terms.{i}.operator"),
                self.matrix(&term.operator, &sys),
            )?;
            with_path(
                &format!("potential.terms.{i}.profile"),
                Profile::new(term.profile.iter().map(|p| (p[0], p[1], p[2])).collect()),
            )?;
        }
        if let Some(obs) = &self.observable {
            with_path("observable", self.matrix(obs, &sys))?;
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(cfg_err("beta", "must be finite and non-negative"));
        }
        with_path("state", self.system_state())?;
        let p = &self.particle;
        if !(p.mass > 0.0 && p.mass.is_finite()) {
            return Err(cfg_err("particle.mass", "must be positive"));
        }
        if p.nodes < 2 {
            return Err(cfg_err("particle.nodes", "need at least two nodes"));
        }
        match p.kind {
            ParticleKind::Gaussian => {
                for (key, v) in [("p0", p.p0), ("sigma_p", p.sigma_p)] {
                    match v {
                        Some(x) if x > 0.0 && x.is_finite() => {}
                        _ => {
                            return Err(cfg_err(
                                format!("particle.{key}"),
                                "required and positive for a gaussian packet",
                            ))
                        }
                    }
                }
                if !p.x0.is_some_and(f64::is_finite) {
                    return Err(cfg_err("particle.x0", "required for a gaussian packet"));
                }
            }
            ParticleKind::Thermal => {
                if !p.beta.is_some_and(|b| b > 0.0 && b.is_finite()) {
                    return Err(cfg_err(
                        "particle.beta",
                        "required and positive for a thermal ensemble",
                    ));
                }
                match p.energy_range {
                    Some([lo, hi]) if lo >= 0.0 && hi > lo => {}
                    _ => {
                        return Err(cfg_err(
                            "particle.energy_range",
                            "required as [lo, hi] with 0 <= lo < hi",
                        ))
                    }
                }
                if p.directions.iter().any(|&w| w < 0.0) || p.directions.iter().sum::<f64>() <= 0.0
                {
                    return Err(cfg_err(
                        "particle.directions",
                        "weights must be non-negative and not both zero",
                    ));
                }
            }
        }
        if let Some(t) = &self.grids.table {
            if !(t.hi > t.lo) || t.nodes < 4 {
                return Err(cfg_err(
                    "grids.table",
                    "need hi > lo and at least four nodes",
                ));
            }
        }
        for (key, r) in [
            ("grids.smatrix", &self.grids.smatrix),
            ("grids.times", &self.grids.times),
            ("grids.omegas", &self.grids.omegas),
        ] {
            if let Some(r) = r {
                if !(r.lo.is_finite() && r.hi.is_finite()) || r.count == 0 {
                    return Err(cfg_err(key, "need finite bounds and a positive count"));
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(cfg_err("sweep.values", "must not be empty"));
            }
            if sweep.path != COUPLING_PATH && !self.path_exists(&sweep.path) {
                return Err(cfg_err(
                    "sweep.path",
                    format!("`{}` does not name a key", sweep.path),
                ));
            }
        }
        let q = &self.qme;
        if !(q.gamma.is_finite() && q.gamma >= 0.0) {
            return Err(cfg_err("qme.gamma", "must be finite and non-negative"));
        }
        if !(q.t_final.is_finite() && q.t_final >= 0.0) {
            return Err(cfg_err("qme.t_final", "must be finite and non-negative"));
        }
        if !(1..=17).contains(&self.output.precision) {
            return Err(cfg_err(
                "output.precision",
                "must be between 1 and 17 significant digits",
            ));
        }
        Ok(())
    }

    fn path_exists(&self, path: &str) -> bool {
        let mut parts = path.split('.');
        let Some(mut node) = parts.next().and_then(|f| self.raw.get(f)) else {
            return false;
        };
        for part in parts {
            let next = match node {
                toml::Value::Table(t) => t.get(part),
                toml::Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get(i)),
                _ => None,
            };
            match next {
                Some(n) => node = n,
                None => return false,
            }
        }
        node.is_integer() || node.is_float()
    }

    /// Warnings for the localized-classical-particle regime.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (Ok(sys), Ok(pot)) = (self.system_spec(), self.potential()) else {
            return out;
        };
        let p = &self.particle;
        let (Some(p0), Some(sigma_p)) = (p.p0, p.sigma_p) else {
            return out;
        };
        let hbar = sys.hbar();
        let e0 = p0 * p0 / (2.0 * p.mass);
        let v_max = self
            .potential
            .terms
            .iter()
            .flat_map(|t| t.profile.iter().map(|q| q[2].abs()))
            .fold(0.0, f64::max);
        const MUCH: f64 = 10.0;
        if v_max > 0.0 && e0 < MUCH * v_max {
            out.push(format!("E_p0 = {e0} is not much larger than V0 = {v_max}"));
        }
        if let Some((lo, hi)) = pot.support() {
            if p0 * (hi - lo) < MUCH * hbar {
                out.push(format!(
                    "p0 a = {} is not much larger than hbar",
                    p0 * (hi - lo)
                ));
            }
        }
        if p0 < MUCH * sigma_p {
            out.push(format!(
                "p0 = {p0} is not much larger than sigma_p = {sigma_p}"
            ));
        }
        let v0 = p0 / p.mass;
        let gap = sys.spread();
        if gap > 0.0 && sigma_p < MUCH * gap / v0 {
            out.push(format!(
                "sigma_p = {sigma_p} is not much larger than Delta / v0 = {}",
                gap / v0
            ));
        }
        out
    }

    pub fn system_spec(&self) -> Result<SystemSpec> {
        let spec = SystemSpec::new(self.system.energies.clone(), self.system.hbar)?;
        match &self.system.labels {
            Some(l) => spec.with_labels(l.clone()),
            None => Ok(spec),
        }
    }

    fn matrix(&self, input: &MatrixInput, sys: &SystemSpec) -> Result<HermitianOperator> {
        let n = sys.dim();
        match input {
            MatrixInput::Named(name) => {
                let op = match name.as_str() {
                    "identity" => HermitianOperator::identity(n),
                    "hamiltonian" => HermitianOperator::new(sys.hamiltonian())?,
                    "sigma_x" | "sigma_y" | "sigma_z" if n == 2 => match name.as_str() {
                        "sigma_x" => pauli::sigma_x(),
                        "sigma_y" => pauli::sigma_y(),
                        _ => pauli::sigma_z(),
                    },
                    _ => {
                        return Err(Error::validation(format!(
                            "unknown operator `{name}` for dimension {n}"
                        )))
                    }
                };
                Ok(op)
            }
            MatrixInput::Entries(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::validation(format!("matrix must be {n} x {n}")));
                }
                let m = CMatrix::from_fn(n, n, |r, c| c64(rows[r][c][0], rows[r][c][1]));
                HermitianOperator::new(m)
            }
        }
    }

    pub fn potential(&self) -> Result<PotentialSpec> {
        let sys = self.system_spec()?;
        let terms = self
            .potential
            .terms
            .iter()
            .map(|t| {
                Ok(PotentialTerm {
                    operator: self.matrix(&t.operator, &sys)?,
                    profile: Profile::new(t.profile.iter().map(|p| (p[0], p[1], p[2])).collect())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PotentialSpec::from_terms(self.particle.mass, sys.dim(), terms)
    }

    pub fn observable(&self) -> Result<HermitianOperator> {
        let obs = self
            .observable
            .as_ref()
            .ok_or_else(|| cfg_err("observable", "this command needs an observable"))?;
        self.matrix(obs, &self.system_spec()?)
    }

    /// Inverse temperature used for thermal system states.
    pub fn state_beta(&self) -> f64 {
        self.state.beta.unwrap_or(self.beta)
    }

    pub fn system_state(&self) -> Result<DensityMatrix> {
        let sys = self.system_spec()?;
        match &self.state.matrix {
            Some(m) => DensityMatrix::new(self.matrix(m, &sys)?.into_matrix()),
            None => thermal_state(&sys, self.state_beta()),
        }
    }

    pub fn particle_state(&self) -> Result<ParticleEnergyState> {
        let p = &self.particle;
        let hbar = self.system.hbar;
        let r = match p.kind {
            ParticleKind::Gaussian => {
                let (p0, sigma_p, x0) = (
                    p.p0.unwrap_or(0.0),
                    p.sigma_p.unwrap_or(0.0),
                    p.x0.unwrap_or(0.0),
                );
                let grid = EnergyGrid::for_gaussian(p.mass, p0, sigma_p, p.nodes)?;
                gaussian_wavepacket(p.mass, hbar, p0, x0, sigma_p, grid)
            }
            ParticleKind::Thermal => {
                let [lo, hi] = p.energy_range.unwrap_or([0.0, 1.0]);
                let grid = EnergyGrid::midpoint(lo, hi, p.nodes)?;
                narrow_thermal_ensemble(p.mass, hbar, p.beta.unwrap_or(1.0), grid, p.directions)
            }
        };
        with_path("particle", r)
    }

    /// Amplitude table over the configured range, or exact solves.
    pub fn amplitude_table(&self) -> Result<SMatrixTable> {
        let sys = self.system_spec()?;
        let pot = self.potential()?;
        match &self.grids.table {
            Some(t) => {
                let mode = match t.mode {
                    TableModeInput::Interpolated => TableMode::Interpolated,
                    TableModeInput::Exact => TableMode::Exact,
                };
                SMatrixTable::uniform(&sys, &pot, t.lo, t.hi, t.nodes, mode)
            }
            None => Ok(SMatrixTable::exact(&sys, &pot)),
        }
    }

    /// Classical velocity of the particle: `kubo.v0`, else `p0 / m`.
    pub fn classical_velocity(&self) -> Result<f64> {
        self.kubo
            .v0
            .or(self.particle.p0.map(|p0| p0 / self.particle.mass))
            .ok_or_else(|| cfg_err("kubo.v0", "needed when the particle has no p0"))
    }

    pub fn kubo_config(&self) -> Result<KuboConfig> {
        let x0 = self
            .kubo
            .x0
            .or(self.particle.x0)
            .ok_or_else(|| cfg_err("kubo.x0", "needed when the particle has no x0"))?;
        Ok(KuboConfig {
            observable: self.observable()?,
            rho: self.system_state()?,
            x0,
            v0: self.classical_velocity()?,
            horizon: self.kubo.horizon,
        })
    }

    /// Kinetic energies for spectra: configured list, else the packet's
    /// central energy, else the mean kinetic energy of the ensemble.
    pub fn response_energies(&self) -> Result<Vec<f64>> {
        if let Some(e) = &self.grids.response_energies {
            return Ok(e.clone());
        }
        if let Some(p0) = self.particle.p0 {
            return Ok(vec![p0 * p0 / (2.0 * self.particle.mass)]);
        }
        Ok(vec![self.particle_state()?.mean_kinetic_energy()])
    }
}
