//! Experiment orchestration behind the command-line tool. Each command reads
//! an [`ExperimentConfig`], writes one or more CSV files and returns the
//! checks it evaluated.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::channel::{solve_smatrix, verify_optical_theorem, verify_unitarity, Direction};
use crate::config::{ExperimentConfig, COUPLING_PATH};
use crate::error::{Error, Result};
use crate::kubo::kubo_convolution;
use crate::map::{
    amplitude_operator, apply_map, full_space_oracle, observable_changes, CollisionMap,
    EigenOpTable, ORACLE_MAX_NODES,
};
use crate::operator::{
    hermiticity_deviation, max_abs, thermal_state, trace, DensityMatrix, HermitianOperator,
};
use crate::output::{CsvTable, Field};
use crate::qme::{integrate_qme, monte_carlo_trajectories, QmeConfig};
use crate::response::continuous::continuous_transforms;
use crate::response::{
    chi_aggregate, correlation_time_domain, fdr_check_operator, response_time_domain,
    ResponseSpectrum,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Smatrix,
    Collide,
    Response,
    Fdr,
    Sweep,
    Qme,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Smatrix => "smatrix",
            Command::Collide => "collide",
            Command::Response => "response",
            Command::Fdr => "fdr",
            Command::Sweep => "sweep",
            Command::Qme => "qme",
            Command::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub oracle: bool,
    pub grid_nodes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    /// Passes when `value >= -tolerance`.
    pub fn at_least_minus(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value >= -tolerance,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// 0 on success, 1 for invalid input, 2 for failed numerical checks or
/// numerical errors.
pub fn exit_code(result: &Result<RunReport>) -> i32 {
    match result {
        Ok(r) if r.passed() => 0,
        Ok(_) => 2,
        Err(Error::Validation(_) | Error::Config { .. } | Error::Io(_)) => 1,
        Err(_) => 2,
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    opts: &'a RunOptions,
    out: PathBuf,
    hash: String,
    seed: u64,
    report: RunReport,
}

impl Ctx<'_> {
    fn table(&self, command: &str, header: Vec<String>) -> CsvTable {
        let mut t = CsvTable::new(header);
        t.meta("command", command)
            .meta("config_sha256", &self.hash)
            .meta("seed", self.seed)
            .meta("precision", self.cfg.output.precision);
        for w in &self.report.warnings {
            t.meta("warning", w);
        }
        t
    }

    fn write(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        let path = self.out.join(name);
        table.write(&path, self.cfg.output.precision)?;
        self.report.files.push(path);
        Ok(())
    }

    fn check(&mut self, c: Check) {
        self.report.checks.push(c);
    }
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn complex_columns(prefix: &str, n: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(2 * n * n);
    for r in 0..n {
        for c in 0..n {
            h.push(format!("{prefix}_{r}{c}_re"));
            h.push(format!("{prefix}_{r}{c}_im"));
        }
    }
    h
}

fn complex_fields(m: &crate::operator::CMatrix) -> Vec<Field> {
    let mut f = Vec::with_capacity(2 * m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            f.push(m[(r, c)].re.into());
            f.push(m[(r, c)].im.into());
        }
    }
    f
}

fn strs(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Run `command` and write its outputs to the output directory.
pub fn run(command: Command, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    let cfg = cfg.with_overrides(opts.seed, opts.grid_nodes)?;
    let out = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    let mut ctx = Ctx {
        cfg: &cfg,
        opts,
        out,
        hash: sha256_hex(&cfg.canonical()),
        seed: cfg.qme.seed,
        report: RunReport {
            warnings: cfg.warnings(),
            ..RunReport::default()
        },
    };
    match command {
        Command::Smatrix => cmd_smatrix(&mut ctx)?,
        Command::Collide => cmd_collide(&mut ctx)?,
        Command::Response => cmd_response(&mut ctx)?,
        Command::Fdr => cmd_fdr(&mut ctx)?,
        Command::Sweep => cmd_sweep(&mut ctx)?,
        Command::Qme => cmd_qme(&mut ctx)?,
        Command::Verify => cmd_verify(&mut ctx)?,
    }
    Ok(ctx.report)
}

fn smatrix_energies(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    if let Some(r) = &cfg.grids.smatrix {
        return Ok(r.values());
    }
    let (lo, hi) = cfg.particle_state()?.grid().range();
    let e0 = cfg
        .system
        .energies
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok((0..200)
        .map(|k| e0 + lo + (hi - lo) * k as f64 / 199.0)
        .collect())
}

fn cmd_smatrix(ctx: &mut Ctx) -> Result<()> {
    let sys = ctx.cfg.system_spec()?;
    let pot = ctx.cfg.potential()?;
    let n = sys.dim();
    let mut header = strs(&[
        "energy",
        "status",
        "unitarity",
        "optical_general",
        "optical_forward",
        "forward_imag_max",
        "cross_section_min",
    ]);
    for ao in Direction::ALL {
        for jo in 0..n {
            for ai in Direction::ALL {
                for ji in 0..n {
                    let tag = format!("s_{}{jo}_{}{ji}", ao.symbol(), ai.symbol());
                    header.push(format!("{tag}_re"));
                    header.push(format!("{tag}_im"));
                }
            }
        }
    }
    let energies = smatrix_energies(ctx.cfg)?;
    let blocks: Vec<_> = energies
        .par_iter()
        .map(|&e| solve_smatrix(&sys, &pot, e))
        .collect();
    let mut table = ctx.table("smatrix", header);
    let (mut worst_u, mut worst_o, mut worst_im) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for (&e, b) in energies.iter().zip(blocks) {
        let mut row: Vec<Field> = vec![e.into()];
        match b {
            Ok(block) => {
                let u = verify_unitarity(&block);
                let o = verify_optical_theorem(&block);
                worst_u = worst_u.max(u.max());
                worst_o = worst_o.max(o.general_identity).max(o.forward_identity);
                worst_im = worst_im.max(o.max_forward_imag);
                row.extend([
                    "ok".into(),
                    u.max().into(),
                    o.general_identity.into(),
                    o.forward_identity.into(),
                    o.max_forward_imag.into(),
                    o.min_cross_section_eigenvalue.into(),
                ]);
                for ao in Direction::ALL {
                    for jo in 0..n {
                        for ai in Direction::ALL {
                            for ji in 0..n {
                                let s = block.s(ao, jo, ai, ji);
                                row.push(s.re.into());
                                row.push(s.im.into());
                            }
                        }
                    }
                }
            }
            Err(err @ (Error::Threshold { .. } | Error::NoOpenChannel(_))) => {
                let marker = if matches!(err, Error::Threshold { .. }) {
                    "skip:threshold"
                } else {
                    "skip:no_open_channel"
                };
                row.push(marker.into());
                row.extend(std::iter::repeat_n(Field::Num(f64::NAN), 5 + 8 * n * n));
            }
            Err(other) => return Err(other),
        }
        table.push(row)?;
    }
    ctx.write("smatrix.csv", &table)?;
    ctx.check(Check::at_most("unitarity", worst_u, 1e-10));
    ctx.check(Check::at_most("optical_theorem", worst_o, 1e-10));
    if worst_im.is_finite() {
        ctx.check(Check::at_most("forward_imag", worst_im, 1e-12));
    }
    Ok(())
}

fn cmd_collide(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let sys = cfg.system_spec()?;
    let n = sys.dim();
    let state = cfg.particle_state()?;
    let table_src = cfg.amplitude_table()?;
    let map = CollisionMap::build(&table_src, &state)?;
    let rho = cfg.system_state()?;
    let a = cfg.observable()?;
    let out = map.apply_linear(rho.matrix());
    let ch = observable_changes(&map, &rho, &a);
    let mut header = complex_columns("rho", n);
    header.extend(strs(&[
        "delta_a_lamb_shift",
        "delta_a_dissipative",
        "delta_a",
        "imag_residue",
        "trace_error",
        "min_eigenvalue",
        "dropped_weight",
        "kernel_asymmetry",
    ]));
    if ctx.opts.oracle {
        header.push("oracle_relative_difference".into());
    }
    let trace_error = (trace(&out).re - 1.0).abs();
    let min_eig = crate::operator::min_eigenvalue(&crate::operator::hermitian_part(&out));
    let mut row = complex_fields(&out);
    row.extend([
        ch.lamb_shift.into(),
        ch.dissipative.into(),
        ch.total.into(),
        ch.imag_residue.into(),
        trace_error.into(),
        min_eig.into(),
        map.diagnostics.dropped_weight.into(),
        map.diagnostics.kernel_asymmetry.into(),
    ]);
    if ctx.opts.oracle {
        let limit = cfg.grids.oracle_nodes.unwrap_or(ORACLE_MAX_NODES);
        let oracle = full_space_oracle(&sys, &cfg.potential()?, &rho, &state, state.grid(), limit)?;
        let rel = max_abs(&(&out - oracle.matrix())) / max_abs(oracle.matrix());
        row.push(rel.into());
        ctx.check(Check::at_most("oracle_relative_difference", rel, 1e-3));
    }
    let mut table = ctx.table("collide", header);
    table.push(row)?;
    ctx.write("collide.csv", &table)?;
    ctx.check(Check::at_most("trace_error", trace_error, 1e-6));
    ctx.check(Check::at_least_minus("min_eigenvalue", min_eig, 1e-6));
    Ok(())
}

const PAIRS: [(Direction, Direction); 4] = [
    (Direction::Plus, Direction::Plus),
    (Direction::Minus, Direction::Plus),
    (Direction::Plus, Direction::Minus),
    (Direction::Minus, Direction::Minus),
];

fn pair_label(ao: Direction, ai: Direction) -> String {
    format!("{}{}", ao.symbol(), ai.symbol())
}

fn cmd_response(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let sys = cfg.system_spec()?;
    let source = cfg.amplitude_table()?;
    let rho = cfg.system_state()?;
    let a = cfg.observable()?;
    let energies = cfg.response_energies()?;
    let times = cfg.grids.times.map(|r| r.values()).unwrap_or_else(|| {
        let span = 4.0 * std::f64::consts::PI * sys.hbar() / sys.spread().max(1e-12);
        (0..101)
            .map(|k| -span + 2.0 * span * k as f64 / 100.0)
            .collect()
    });
    let omegas = cfg.grids.omegas.map(|r| r.values()).unwrap_or_else(|| {
        let w = 2.0 * sys.spread().max(1e-12) / sys.hbar();
        (0..101)
            .map(|k| -w + 2.0 * w * (k as f64 + 0.5) / 101.0)
            .collect()
    });
    let window = cfg.grids.pv_window.unwrap_or(1e-6);

    let mut spectrum = ctx.table(
        "response",
        strs(&[
            "energy", "delta", "pair", "chi_re", "chi_im", "corr_re", "corr_im",
        ]),
    );
    let mut time = ctx.table(
        "response",
        strs(&[
            "energy",
            "pair",
            "t",
            "chi_re",
            "chi_im",
            "chi_direct_re",
            "chi_direct_im",
            "corr_re",
            "corr_im",
        ]),
    );
    let mut freq = ctx.table(
        "response",
        strs(&[
            "energy",
            "pair",
            "omega",
            "retarded_pv_re",
            "retarded_pv_im",
            "flagged",
        ]),
    );
    let mut mismatch = 0.0f64;
    for &e in &energies {
        let op = amplitude_operator(&source, e)?;
        let spec = ResponseSpectrum::from_operator(&sys, &op, rho.matrix(), &a);
        for (d, &delta) in spec.deltas.iter().enumerate() {
            for (ao, ai) in PAIRS {
                let (x, c) = (spec.chi(d, ao, ai), spec.corr(d, ao, ai));
                spectrum.push(vec![
                    e.into(),
                    delta.into(),
                    pair_label(ao, ai).into(),
                    x.re.into(),
                    x.im.into(),
                    c.re.into(),
                    c.im.into(),
                ])?;
            }
        }
        for (ao, ai) in PAIRS {
            let r = response_time_domain(&sys, &op, &rho, &a, ao, ai, &times);
            let c = correlation_time_domain(&sys, &op, &rho, &a, ao, ai, &times);
            mismatch = mismatch.max(r.max_mismatch()).max(c.max_mismatch());
            for k in 0..times.len() {
                time.push(vec![
                    e.into(),
                    pair_label(ao, ai).into(),
                    times[k].into(),
                    r.spectral[k].re.into(),
                    r.spectral[k].im.into(),
                    r.direct[k].re.into(),
                    r.direct[k].im.into(),
                    c.spectral[k].re.into(),
                    c.spectral[k].im.into(),
                ])?;
            }
            let ct = continuous_transforms(&spec, cfg.state_beta(), ao, ai, &omegas, window);
            for s in &ct.retarded {
                freq.push(vec![
                    e.into(),
                    pair_label(ao, ai).into(),
                    s.omega.into(),
                    s.value.re.into(),
                    s.value.im.into(),
                    (s.flagged as usize).into(),
                ])?;
            }
        }
    }
    ctx.write("response_spectrum.csv", &spectrum)?;
    ctx.write("response_time.csv", &time)?;
    ctx.write("response_omega.csv", &freq)?;
    ctx.check(Check::at_most("time_domain_round_trip", mismatch, 1e-12));

    let state = cfg.particle_state()?;
    let eig = EigenOpTable::build(&source, state.grid().nodes())?;
    let chi = chi_aggregate(&eig, &rho, &a, &state)?;
    let map = CollisionMap::build(&source, &state)?;
    let ls = observable_changes(&map, &rho, &a).lamb_shift;
    let mut agg = ctx.table(
        "response",
        strs(&["chi_re", "chi_im", "delta_a_lamb_shift"]),
    );
    agg.push(vec![chi.re.into(), chi.im.into(), ls.into()])?;
    ctx.write("response_aggregate.csv", &agg)?;
    ctx.check(Check::at_most(
        "aggregate_vs_lamb_shift",
        (chi.re - ls).abs(),
        1e-10,
    ));
    Ok(())
}

fn cmd_fdr(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let sys = cfg.system_spec()?;
    let source = cfg.amplitude_table()?;
    let a = cfg.observable()?;
    let beta = cfg.state_beta();
    let mut table = ctx.table(
        "fdr",
        strs(&[
            "energy",
            "max_deviation",
            "imag_form",
            "real_form",
            "push_through",
            "max_chi",
        ]),
    );
    let mut worst = 0.0f64;
    let mut push = 0.0f64;
    for e in cfg.response_energies()? {
        let op = amplitude_operator(&source, e)?;
        let rep = fdr_check_operator(&sys, &op, beta, &a)?;
        worst = worst.max(rep.worst());
        push = push.max(rep.push_through);
        table.push(vec![
            e.into(),
            rep.max_deviation.into(),
            rep.imag_form.into(),
            rep.real_form.into(),
            rep.push_through.into(),
            rep.max_chi.into(),
        ])?;
    }
    ctx.write("fdr.csv", &table)?;
    ctx.check(Check::at_most("fdr_max_deviation", worst, 1e-12));
    ctx.check(Check::at_most("push_through", push, 1e-12));
    Ok(())
}

/// Exact and Kubo changes of the observable for one configuration.
pub fn exact_and_kubo(cfg: &ExperimentConfig) -> Result<(f64, f64, f64, f64)> {
    let state = cfg.particle_state()?;
    let map = CollisionMap::build(&cfg.amplitude_table()?, &state)?;
    let ch = observable_changes(&map, &cfg.system_state()?, &cfg.observable()?);
    let kubo = kubo_convolution(&cfg.system_spec()?, &cfg.potential()?, &cfg.kubo_config()?)?;
    Ok((ch.total, kubo.value, ch.lamb_shift, ch.dissipative))
}

fn cmd_sweep(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Error::Config {
        path: "sweep".into(),
        message: "the sweep command needs a [sweep] section".into(),
    })?;
    let label = if sweep.path == COUPLING_PATH {
        "lambda".to_string()
    } else {
        sweep.path.clone()
    };
    let results: Vec<Result<(f64, f64, f64, f64)>> = sweep
        .values
        .par_iter()
        .map(|&v| exact_and_kubo(&cfg.with_value(&sweep.path, v)?))
        .collect();
    let mut table = ctx.table(
        "sweep",
        vec![
            label,
            "delta_a_exact".into(),
            "delta_a_kubo".into(),
            "abs_difference".into(),
            "rel_difference".into(),
            "delta_a_lamb_shift".into(),
            "delta_a_dissipative".into(),
        ],
    );
    for (&v, r) in sweep.values.iter().zip(results) {
        let (exact, kubo, ls, d) = r?;
        let diff = (exact - kubo).abs();
        table.push(vec![
            v.into(),
            exact.into(),
            kubo.into(),
            diff.into(),
            (diff / kubo.abs()).into(),
            ls.into(),
            d.into(),
        ])?;
    }
    ctx.write("sweep.csv", &table)
}

fn cmd_qme(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let sys = cfg.system_spec()?;
    let n = sys.dim();
    let map = CollisionMap::build(&cfg.amplitude_table()?, &cfg.particle_state()?)?;
    let mut qcfg = QmeConfig::new(map, cfg.qme.gamma, cfg.qme.t_final, cfg.qme.samples)?;
    qcfg.max_step = cfg.qme.max_step;
    qcfg.trajectories = cfg.qme.trajectories;
    qcfg.seed = cfg.qme.seed;
    let rho0 = cfg.system_state()?;
    let omega = thermal_state(&sys, cfg.beta)?;
    let det = integrate_qme(&qcfg, &rho0)?;

    let mut header = vec!["t".to_string()];
    header.extend(complex_columns("rho", n));
    header.extend(strs(&[
        "trace_error",
        "min_eigenvalue",
        "distance_to_thermal",
    ]));
    let mut table = ctx.table("qme", header);
    for s in &det {
        let mut row: Vec<Field> = vec![s.t.into()];
        row.extend(complex_fields(&s.rho));
        row.extend([
            s.trace_error.into(),
            s.min_eigenvalue.into(),
            crate::operator::trace_distance(&s.rho, omega.matrix()).into(),
        ]);
        table.push(row)?;
    }
    ctx.write("qme.csv", &table)?;
    ctx.check(Check::at_most(
        "qme_trace_error",
        det.iter().map(|s| s.trace_error).fold(0.0, f64::max),
        1e-8,
    ));

    if qcfg.trajectories > 0 {
        let mc = monte_carlo_trajectories(&qcfg, &rho0)?;
        let mut header = vec!["t".to_string()];
        header.extend(complex_columns("mean", n));
        header.extend(complex_columns("stderr", n));
        let mut table = ctx.table("qme", header);
        table.meta("trajectories", mc.trajectories);
        for k in 0..mc.times.len() {
            let mut row: Vec<Field> = vec![mc.times[k].into()];
            row.extend(complex_fields(&mc.mean[k]));
            row.extend(complex_fields(&mc.std_error[k]));
            table.push(row)?;
        }
        ctx.write("qme_mc.csv", &table)?;
        let reference: Vec<_> = det.iter().map(|s| s.rho.clone()).collect();
        ctx.check(Check::at_most(
            "mc_max_z_score",
            mc.max_z_score(&reference),
            3.0,
        ));
    }
    Ok(())
}

fn cmd_verify(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let sys = cfg.system_spec()?;
    let pot = cfg.potential()?;
    let n = sys.dim();

    let energies = smatrix_energies(cfg)?;
    let blocks: Vec<_> = energies
        .par_iter()
        .map(|&e| solve_smatrix(&sys, &pot, e))
        .collect::<Result<Vec<_>>>()?;
    let mut u = 0.0f64;
    let (mut og, mut of, mut oi, mut cs) = (0.0f64, 0.0f64, f64::NEG_INFINITY, f64::INFINITY);
    for b in &blocks {
        u = u.max(verify_unitarity(b).max());
        let o = verify_optical_theorem(b);
        og = og.max(o.general_identity);
        of = of.max(o.forward_identity);
        oi = oi.max(o.max_forward_imag);
        cs = cs.min(o.min_cross_section_eigenvalue);
    }
    ctx.check(Check::at_most("smatrix_unitarity", u, 1e-10));
    ctx.check(Check::at_most("optical_general", og, 1e-10));
    ctx.check(Check::at_most("optical_forward", of, 1e-10));
    ctx.check(Check::at_most("forward_imag", oi, 1e-12));
    ctx.check(Check::at_least_minus("cross_section_psd", cs, 1e-12));

    let state = cfg.particle_state()?;
    let source = cfg.amplitude_table()?;
    let map = CollisionMap::build(&source, &state)?;
    ctx.check(Check::at_most(
        "dropped_weight",
        map.diagnostics.dropped_weight,
        1e-6,
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.qme.seed);
    let (mut tr, mut herm, mut neg) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..cfg.grids.random_states.unwrap_or(100) {
        let rho = DensityMatrix::random(n, &mut rng);
        let out = map.apply_linear(rho.matrix());
        tr = tr.max((trace(&out).re - 1.0).abs());
        herm = herm.max(hermiticity_deviation(&out));
        neg = neg.min(crate::operator::min_eigenvalue(
            &crate::operator::hermitian_part(&out),
        ));
    }
    ctx.check(Check::at_most("map_trace_error", tr, 1e-6));
    ctx.check(Check::at_most("map_hermiticity", herm, 1e-10));
    ctx.check(Check::at_least_minus("map_min_eigenvalue", neg, 1e-6));
    if n <= 4 {
        ctx.check(Check::at_least_minus(
            "choi_min_eigenvalue",
            map.choi_min_eigenvalue(),
            1e-5,
        ));
    }

    let beta = cfg.state_beta();
    let mut fdr = 0.0f64;
    let mut push = 0.0f64;
    for e in cfg.response_energies()? {
        let op = amplitude_operator(&source, e)?;
        for _ in 0..20 {
            let a = HermitianOperator::random(n, &mut rng);
            let rep = fdr_check_operator(&sys, &op, beta, &a)?;
            fdr = fdr.max(rep.worst());
            push = push.max(rep.push_through);
        }
    }
    ctx.check(Check::at_most("fdr_max_deviation", fdr, 1e-12));
    ctx.check(Check::at_most("push_through", push, 1e-12));

    if let Ok(a) = cfg.observable() {
        let rho = cfg.system_state()?;
        let eig = EigenOpTable::build(&source, state.grid().nodes())?;
        let chi = chi_aggregate(&eig, &rho, &a, &state)?;
        let ls = observable_changes(&map, &rho, &a).lamb_shift;
        ctx.check(Check::at_most(
            "aggregate_vs_lamb_shift",
            (chi.re - ls).abs(),
            1e-10,
        ));
        let omega = thermal_state(&sys, beta)?;
        ctx.check(Check::at_most(
            "map_output_valid",
            apply_map(&map, &omega).map(|_| 0.0).unwrap_or(1.0),
            0.0,
        ));
    }

    let mut table = ctx.table("verify", strs(&["check", "value", "tolerance", "passed"]));
    for c in ctx.report.checks.clone() {
        table.push(vec![
            c.name.clone().into(),
            c.value.into(),
            c.tolerance.into(),
            (if c.passed { "PASS" } else { "FAIL" }).into(),
        ])?;
    }
    ctx.write("verify.csv", &table)
}

/// Directory helper for callers that want a fresh run directory.
pub fn output_path(dir: &Path, command: Command) -> PathBuf {
    dir.join(format!("{}.csv", command.name()))
}
