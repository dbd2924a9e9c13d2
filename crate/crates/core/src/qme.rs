//! Repeated collisions at Poisson-distributed times: the averaged master
//! equation and a trajectory sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::map::CollisionMap;
use crate::ode::rk4_step;
use crate::operator::{c64, heisenberg, min_eigenvalue, trace, CMatrix, DensityMatrix, C64};

/// Trace tolerance for integrated states.
pub const QME_TRACE_TOL: f64 = 1e-8;
/// Most negative eigenvalue tolerated before integration aborts.
pub const QME_POSITIVITY_TOL: f64 = 1e-5;
/// Absolute difference treated as round-off when scoring trajectory averages.
pub const Z_SCORE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct QmeConfig {
    pub map: CollisionMap,
    /// Collisions per unit time.
    pub gamma: f64,
    pub t_final: f64,
    /// Output times in `[0, t_final]`, ascending.
    pub samples: Vec<f64>,
    /// Upper bound on the RK4 step; the default bound always applies as well.
    pub max_step: Option<f64>,
    pub trajectories: usize,
    pub seed: u64,
}

impl QmeConfig {
    pub fn new(map: CollisionMap, gamma: f64, t_final: f64, n_samples: usize) -> Result<Self> {
        let samples = (0..n_samples.max(2))
            .map(|k| t_final * k as f64 / (n_samples.max(2) - 1) as f64)
            .collect();
        let cfg = Self {
            map,
            gamma,
            t_final,
            samples,
            max_step: None,
            trajectories: 10_000,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::validation(
                "collision rate must be finite and non-negative",
            ));
        }
        if !self.t_final.is_finite() || self.t_final < 0.0 {
            return Err(Error::validation("t_final must be finite and non-negative"));
        }
        if self
            .samples
            .iter()
            .any(|&t| !(0.0..=self.t_final).contains(&t))
        {
            return Err(Error::validation("sample times must lie in [0, t_final]"));
        }
        if self.samples.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::validation("sample times must be ascending"));
        }
        if matches!(self.max_step, Some(h) if !(h > 0.0)) {
            return Err(Error::validation("max_step must be positive"));
        }
        Ok(())
    }

    /// `H_S + hbar gamma H_LS`.
    pub fn effective_hamiltonian(&self) -> CMatrix {
        let sys = self.map.system();
        sys.hamiltonian()
            + self
                .map
                .lamb_shift()
                .matrix()
                .scale(sys.hbar() * self.gamma)
    }

    /// Superoperator of the averaged dynamics on column-major `vec(rho)`.
    pub fn generator(&self) -> CMatrix {
        let sys = self.map.system();
        let n = sys.dim();
        let id = CMatrix::identity(n, n);
        let h = sys.hamiltonian();
        let free = (id.kronecker(&h) - h.transpose().kronecker(&id))
            .map(|z| z * c64(0.0, -1.0 / sys.hbar()));
        free + self.map.change_superoperator().map(|z| z * self.gamma)
    }

    pub fn step_size(&self) -> f64 {
        let sys = self.map.system();
        let h_eff = self.effective_hamiltonian();
        let norm = min_eigenvalue(&h_eff)
            .abs()
            .max(min_eigenvalue(&(-h_eff)).abs());
        let mut h = f64::INFINITY;
        if self.gamma > 0.0 {
            h = h.min(0.01 / self.gamma);
        }
        if norm > 0.0 {
            h = h.min(0.01 * sys.hbar() / norm);
        }
        if let Some(m) = self.max_step {
            h = h.min(m);
        }
        if h.is_finite() {
            h
        } else {
            self.t_final.max(1.0)
        }
    }
}

#[derive(Clone, Debug)]
pub struct QmeSample {
    pub t: f64,
    pub rho: CMatrix,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

fn sample(t: f64, rho: CMatrix) -> QmeSample {
    QmeSample {
        t,
        trace_error: (trace(&rho) - c64(1.0, 0.0)).norm(),
        min_eigenvalue: min_eigenvalue(&crate::operator::hermitian_part(&rho)),
        rho,
    }
}

fn vec_of(m: &CMatrix) -> CMatrix {
    CMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

fn unvec(v: &CMatrix, n: usize) -> CMatrix {
    CMatrix::from_column_slice(n, n, v.as_slice())
}

/// Integrate the averaged master equation with fixed-step RK4, sampling at
/// the configured times. Without collisions the free propagator is used.
pub fn integrate_qme(cfg: &QmeConfig, rho0: &DensityMatrix) -> Result<Vec<QmeSample>> {
    cfg.validate()?;
    let sys = cfg.map.system();
    let n = sys.dim();
    if rho0.dim() != n {
        return Err(Error::validation("initial state dimension mismatch"));
    }
    if cfg.gamma == 0.0 {
        return Ok(cfg
            .samples
            .iter()
            .map(|&t| sample(t, heisenberg(sys, rho0.matrix(), -t)))
            .collect());
    }
    let gen = cfg.generator();
    let h_max = cfg.step_size();
    let mut out = Vec::with_capacity(cfg.samples.len());
    let mut t = 0.0;
    let mut v = vec_of(rho0.matrix());
    let mut steps = 0usize;
    for &ts in &cfg.samples {
        let span = ts - t;
        if span > 0.0 {
            let k = (span / h_max).ceil() as usize;
            let h = span / k as f64;
            for _ in 0..k {
                v = rk4_step(|x| &gen * x, &v, h);
                steps += 1;
            }
            t = ts;
        }
        let s = sample(ts, unvec(&v, n));
        if s.min_eigenvalue < -QME_POSITIVITY_TOL || s.trace_error > QME_TRACE_TOL {
            return Err(Error::Positivity {
                min_eigenvalue: s.min_eigenvalue,
                tolerance: QME_POSITIVITY_TOL,
                context: format!(
                    " in the master equation at t = {ts} after {steps} steps of size <= {h_max} (trace error {})",
                    s.trace_error
                ),
            });
        }
        out.push(s);
    }
    Ok(out)
}

/// Trajectory average with entrywise standard errors (real and imaginary
/// parts stored in the corresponding components).
#[derive(Clone, Debug)]
pub struct McResult {
    pub times: Vec<f64>,
    pub mean: Vec<CMatrix>,
    pub std_error: Vec<CMatrix>,
    pub trajectories: usize,
    pub seed: u64,
}

impl McResult {
    /// Largest `|mean - reference| / std_error` over entries and components;
    /// differences below [`Z_SCORE_FLOOR`] count as agreement.
    pub fn max_z_score(&self, reference: &[CMatrix]) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, r) in reference.iter().enumerate() {
            for ((m, e), x) in self.mean[k]
                .iter()
                .zip(self.std_error[k].iter())
                .zip(r.iter())
            {
                for (d, s) in [((m - x).re, e.re), ((m - x).im, e.im)] {
                    let z = if d.abs() <= Z_SCORE_FLOOR {
                        0.0
                    } else if s > 0.0 {
                        d.abs() / s
                    } else {
                        f64::INFINITY
                    };
                    worst = worst.max(z);
                }
            }
        }
        worst
    }
}

fn run_trajectory(cfg: &QmeConfig, rho0: &CMatrix, index: u64) -> Vec<CMatrix> {
    let sys = cfg.map.system();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut next = if cfg.gamma > 0.0 {
        -(1.0 - rng.random::<f64>()).ln() / cfg.gamma
    } else {
        f64::INFINITY
    };
    let mut out = Vec::with_capacity(cfg.samples.len());
    for &ts in &cfg.samples {
        while next <= ts {
            rho = heisenberg(sys, &rho, -(next - t));
            rho = cfg.map.apply_linear(&rho);
            t = next;
            next += -(1.0 - rng.random::<f64>()).ln() / cfg.gamma;
        }
        out.push(heisenberg(sys, &rho, -(ts - t)));
    }
    out
}

/// Average `cfg.trajectories` Poisson trajectories in parallel. Each
/// trajectory uses its own stream of a generator seeded by `cfg.seed`, and
/// the reduction runs in trajectory order.
pub fn monte_carlo_trajectories(cfg: &QmeConfig, rho0: &DensityMatrix) -> Result<McResult> {
    cfg.validate()?;
    let n_traj = cfg.trajectories.max(1);
    let n = rho0.dim();
    if cfg.gamma == 0.0 {
        let mean: Vec<CMatrix> = cfg
            .samples
            .iter()
            .map(|&t| heisenberg(cfg.map.system(), rho0.matrix(), -t))
            .collect();
        return Ok(McResult {
            times: cfg.samples.clone(),
            std_error: vec![CMatrix::zeros(n, n); mean.len()],
            mean,
            trajectories: n_traj,
            seed: cfg.seed,
        });
    }
    let runs: Vec<Vec<CMatrix>> = (0..n_traj as u64)
        .into_par_iter()
        .map(|k| run_trajectory(cfg, rho0.matrix(), k))
        .collect();
    let ns = cfg.samples.len();
    let mut sum = vec![CMatrix::zeros(n, n); ns];
    let mut sq = vec![CMatrix::zeros(n, n); ns];
    for run in &runs {
        for (k, m) in run.iter().enumerate() {
            sum[k] += m;
            sq[k] += m.map(|z| C64::new(z.re * z.re, z.im * z.im));
        }
    }
    let nf = n_traj as f64;
    let mean: Vec<CMatrix> = sum.iter().map(|s| s.map(|z| z / nf)).collect();
    let std_error = mean
        .iter()
        .zip(&sq)
        .map(|(m, q)| {
            m.zip_map(q, |mu, s| {
                let var = |a: f64, b: f64| {
                    if n_traj > 1 {
                        ((b / nf - a * a) * nf / (nf - 1.0)).max(0.0)
                    } else {
                        0.0
                    }
                };
                C64::new(
                    (var(mu.re, s.re) / nf).sqrt(),
                    (var(mu.im, s.im) / nf).sqrt(),
                )
            })
        })
        .collect();
    Ok(McResult {
        times: cfg.samples.clone(),
        mean,
        std_error,
        trajectories: n_traj,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{DensityMatrix, SystemSpec};

    fn free_cfg(gamma: f64) -> QmeConfig {
        let sys = SystemSpec::two_level(1.0, 1.0).unwrap();
        let mut cfg = QmeConfig::new(CollisionMap::identity(&sys), gamma, 2.0, 5).unwrap();
        cfg.trajectories = 16;
        cfg
    }

    #[test]
    fn no_collisions_is_free_evolution() {
        let cfg = free_cfg(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = DensityMatrix::random(2, &mut rng);
        let det = integrate_qme(&cfg, &rho).unwrap();
        let mc = monte_carlo_trajectories(&cfg, &rho).unwrap();
        for (k, s) in det.iter().enumerate() {
            assert_eq!(s.rho, mc.mean[k]);
            assert!((s.rho[(0, 0)] - rho.matrix()[(0, 0)]).norm() < 1e-15);
        }
    }

    #[test]
    fn identity_map_with_collisions_is_still_free() {
        let cfg = free_cfg(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = DensityMatrix::random(2, &mut rng);
        let det = integrate_qme(&cfg, &rho).unwrap();
        let exact = heisenberg(cfg.map.system(), rho.matrix(), -2.0);
        assert!(crate::operator::max_abs(&(&det[4].rho - exact)) < 1e-10);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = free_cfg(1.0);
        cfg.samples.push(5.0);
        assert!(cfg.validate().is_err());
        let sys = SystemSpec::two_level(1.0, 1.0).unwrap();
        assert!(QmeConfig::new(CollisionMap::identity(&sys), -1.0, 1.0, 3).is_err());
    }
}
