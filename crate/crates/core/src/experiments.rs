//! Experiment runners behind the command-line tool: convergence tables,
//! stability scans, porous-medium snapshots and high-field steady states.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{l1_error, l2_error, l2_norm, write_snapshot, DgFunction};
use crate::imex::{
    uniform_steps, A0Policy, EinConfig, EinSolver, EnergyTrace, Order, DEFAULT_A0_FLOOR,
    DEFAULT_A0_GUARD, DEFAULT_BLOWUP_FACTOR, DEFAULT_REFRESH_INTERVAL,
};
use crate::limiter::BelowFloor;
use crate::problems::highfield::{highfield_step_driver, HighFieldConfig, HighFieldParams};
use crate::problems::pme::{
    barenblatt, cells_for, BarenblattParams, PmeTest, PME_DT_OVER_H, PME_H,
};
use crate::problems::{by_name, ProblemSpec, SpecModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum A0Mode {
    Fixed(f64),
    Adaptive { safety: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtRule {
    /// `dt = c h`
    PerH(f64),
    Fixed(f64),
}

impl DtRule {
    pub fn dt(self, h: f64) -> f64 {
        match self {
            DtRule::PerH(c) => c * h,
            DtRule::Fixed(dt) => dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: String,
    pub cells: Vec<usize>,
    pub degree: usize,
    pub order: Order,
    pub a0: A0Mode,
    pub dt: DtRule,
    pub final_time: Option<f64>,
    pub out: PathBuf,
    pub snapshot_times: Vec<f64>,
    /// Values scanned by the stability runner.
    pub a0_values: Vec<f64>,
    pub v_bias: f64,
    pub a0_refresh: usize,
    /// Early refresh once `max a > a0_guard * a0`; infinite disables it.
    pub a0_guard: f64,
    /// Limiter response to a cell average below the floor.
    pub below_floor: BelowFloor,
    pub max_steps: usize,
    /// Non-fatal notes produced while building the configuration.
    pub warnings: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: "example1-half".into(),
            cells: vec![80, 160, 320, 640, 1280],
            degree: 0,
            order: Order::First,
            a0: A0Mode::Fixed(0.25),
            dt: DtRule::PerH(1.0),
            final_time: None,
            out: PathBuf::from("out"),
            snapshot_times: Vec::new(),
            a0_values: Vec::new(),
            v_bias: 1.5,
            a0_refresh: DEFAULT_REFRESH_INTERVAL,
            a0_guard: DEFAULT_A0_GUARD,
            below_floor: BelowFloor::Abort,
            max_steps: 200_000,
            warnings: Vec::new(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got '{v}'")))
}

fn parse_list<T>(key: &str, v: &str, f: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(key, s))
        .collect()
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(map)
}

impl RunConfig {
    /// Applies one setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = value.to_string(),
            "cells" => self.cells = parse_list(key, value, parse_usize)?,
            "degree" | "k" => self.degree = parse_usize(key, value)?,
            "order" => self.order = Order::from_number(parse_usize(key, value)? as u32)?,
            "a0" => {
                self.a0 = if value.eq_ignore_ascii_case("adaptive") {
                    A0Mode::Adaptive {
                        safety: self.order.default_safety(),
                    }
                } else {
                    A0Mode::Fixed(parse_f64(key, value)?)
                }
            }
            "a0_safety" => {
                self.a0 = A0Mode::Adaptive {
                    safety: parse_f64(key, value)?,
                }
            }
            "dt" => self.dt = DtRule::Fixed(parse_f64(key, value)?),
            "dt_over_h" => self.dt = DtRule::PerH(parse_f64(key, value)?),
            "final_time" | "t" => self.final_time = Some(parse_f64(key, value)?),
            "out" => self.out = PathBuf::from(value),
            "snapshots" => self.snapshot_times = parse_list(key, value, parse_f64)?,
            "a0_values" => self.a0_values = parse_list(key, value, parse_f64)?,
            "v_bias" => self.v_bias = parse_f64(key, value)?,
            "a0_refresh" => self.a0_refresh = parse_usize(key, value)?,
            "below_floor" => {
                self.below_floor = match value.to_ascii_lowercase().as_str() {
                    "abort" => BelowFloor::Abort,
                    "flatten" => BelowFloor::Flatten,
                    _ => {
                        return Err(Error::Config(format!(
                            "below_floor must be abort or flatten, got '{value}'"
                        )))
                    }
                }
            }
            "a0_guard" => {
                self.a0_guard = if value.eq_ignore_ascii_case("off") {
                    f64::INFINITY
                } else {
                    parse_f64(key, value)?
                }
            }
            "max_steps" => self.max_steps = parse_usize(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` text on top of the current settings. `order` is
    /// applied first so that `a0 = adaptive` picks up its default safety
    /// factor and the degree follows the order unless given.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let map = parse_key_values(text)?;
        if let Some(o) = map.get("order") {
            self.set("order", o)?;
            self.degree = self.order.matched_degree();
        }
        for (k, v) in &map {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&fs::read_to_string(path)?)
    }

    /// Checks ranges and records a warning when `(degree, order)` are not matched.
    pub fn validate(&mut self) -> Result<()> {
        if self.cells.is_empty() || self.cells.contains(&0) {
            return Err(Error::Config("cells must list positive mesh sizes".into()));
        }
        if self.degree > 5 {
            return Err(Error::Config(format!(
                "degree {} not supported",
                self.degree
            )));
        }
        if let A0Mode::Fixed(a0) = self.a0 {
            if !(a0 > 0.0) {
                return Err(Error::Config(format!("a0 must be positive, got {a0}")));
            }
        }
        let dt_ok = match self.dt {
            DtRule::PerH(c) | DtRule::Fixed(c) => c > 0.0 && c.is_finite(),
        };
        if !dt_ok {
            return Err(Error::Config("time step must be positive".into()));
        }
        if self.degree != self.order.matched_degree() {
            let w = format!(
                "degree {} paired with order {}; the matched degree is {}",
                self.degree,
                self.order.number(),
                self.order.matched_degree()
            );
            if !self.warnings.contains(&w) {
                self.warnings.push(w);
            }
        }
        Ok(())
    }

    fn policy(&self) -> A0Policy {
        match self.a0 {
            A0Mode::Fixed(a0) => A0Policy::Fixed(a0),
            A0Mode::Adaptive { safety } => A0Policy::Adaptive {
                safety,
                interval: self.a0_refresh,
                floor: DEFAULT_A0_FLOOR,
                guard: self.a0_guard,
            },
        }
    }
}

/// Three significant digits in scientific notation, `inf` for non-finite values.
pub fn format_sci(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2E}")
    } else {
        "inf".to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub h: f64,
    pub dt: f64,
    /// `inf` when the run blew up.
    pub l2_error: f64,
    pub order: Option<f64>,
}

/// Outcome of marching one problem to its final time.
#[derive(Debug, Clone)]
pub struct MarchResult {
    pub u: DgFunction,
    pub steps: usize,
    pub dt: f64,
    pub initial_norm: f64,
}

/// Runs `spec` on `cells` cells to its final time (or `t_end`).
pub fn march(
    spec: &ProblemSpec,
    cells: usize,
    degree: usize,
    cfg: EinConfig,
    t_end: Option<f64>,
) -> Result<MarchResult> {
    spec.self_check(200)?;
    let mesh = spec.mesh(cells)?;
    let u0 = spec.initial_data(&mesh, degree)?;
    let initial_norm = l2_norm(&u0);
    let mut solver = EinSolver::new(SpecModel::new(spec.clone()), u0, spec.initial_time, cfg)?;
    let t_end = t_end.unwrap_or(spec.final_time);
    solver.advance_to(t_end)?;
    Ok(MarchResult {
        u: solver.u().clone(),
        steps: solver.steps(),
        dt: (t_end - spec.initial_time) / solver.steps().max(1) as f64,
        initial_norm,
    })
}

fn with_orders(mut rows: Vec<ConvergenceRow>) -> Vec<ConvergenceRow> {
    for i in 1..rows.len() {
        let (prev, cur) = (rows[i - 1], rows[i]);
        let ratio = (cur.cells as f64 / prev.cells as f64).log2();
        rows[i].order = if prev.l2_error.is_finite() && cur.l2_error.is_finite() {
            Some((prev.l2_error / cur.l2_error).log2() / ratio)
        } else {
            None
        };
    }
    rows
}

pub fn run_convergence(cfg: &RunConfig) -> Result<Vec<ConvergenceRow>> {
    let spec = by_name(&cfg.experiment)?;
    let exact = spec
        .exact
        .clone()
        .ok_or_else(|| Error::Config(format!("{} has no exact solution", spec.name)))?;
    spec.self_check(1000)?;
    let t_end = cfg.final_time.unwrap_or(spec.final_time);
    let rows: Result<Vec<ConvergenceRow>> = cfg
        .cells
        .par_iter()
        .map(|&n| {
            let h = (spec.domain.1 - spec.domain.0) / n as f64;
            let ein = EinConfig {
                order: cfg.order,
                a0: cfg.policy(),
                dt: cfg.dt.dt(h),
                blowup_factor: DEFAULT_BLOWUP_FACTOR,
            };
            let l2 = match march(&spec, n, cfg.degree, ein, Some(t_end)) {
                Ok(r) => l2_error(&r.u, |x, t| (exact.u)(x, t), t_end),
                Err(Error::Blowup { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let span = t_end - spec.initial_time;
            Ok(ConvergenceRow {
                cells: n,
                h,
                dt: span / uniform_steps(span, ein.dt) as f64,
                l2_error: l2,
                order: None,
            })
        })
        .collect();
    Ok(with_orders(rows?))
}

pub fn write_table<W: Write>(rows: &[ConvergenceRow], mut w: W) -> Result<()> {
    writeln!(w, "N,h,dt,l2_error,order")?;
    for r in rows {
        let order = r.order.map_or(String::new(), |o| format!("{o:.2}"));
        writeln!(
            w,
            "{},{},{},{},{}",
            r.cells,
            format_sci(r.h),
            format_sci(r.dt),
            format_sci(r.l2_error),
            order
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StabilityResult {
    pub a0: f64,
    pub stable: bool,
    pub norm_ratio: f64,
    pub energy: EnergyTrace,
}

/// Marches with each `a0` on the first mesh size and classifies the run
/// as stable when `||u(T)|| <= 10 ||u^0||`.
pub fn run_stability_scan(cfg: &RunConfig, a0_values: &[f64]) -> Result<Vec<StabilityResult>> {
    let spec = by_name(&cfg.experiment)?;
    spec.self_check(1000)?;
    let n = cfg.cells[0];
    let h = (spec.domain.1 - spec.domain.0) / n as f64;
    let t_end = cfg.final_time.unwrap_or(spec.final_time);
    let span = t_end - spec.initial_time;
    let dt_nominal = cfg.dt.dt(h);
    let dt = span / uniform_steps(span, dt_nominal) as f64;
    a0_values
        .par_iter()
        .map(|&a0| {
            let mesh = spec.mesh(n)?;
            let u0 = spec.initial_data(&mesh, cfg.degree)?;
            let norm0 = l2_norm(&u0);
            let ein = EinConfig::fixed(cfg.order, a0, dt_nominal);
            let mut solver =
                EinSolver::new(SpecModel::new(spec.clone()), u0, spec.initial_time, ein)?;
            let mut energy = EnergyTrace::new();
            energy.record(0, solver.t(), solver.u(), &solver.q(), a0, dt, cfg.order);
            let res = solver.advance_to_with(t_end, |s| {
                energy.record(s.steps(), s.t(), s.u(), &s.q(), a0, dt, cfg.order);
                Ok(())
            });
            let norm_ratio = match res {
                Ok(()) => l2_norm(solver.u()) / norm0,
                Err(Error::Blowup { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(StabilityResult {
                a0,
                stable: norm_ratio <= 10.0,
                norm_ratio,
                energy,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotLog {
    pub t: f64,
    pub mass: f64,
    pub min_value: f64,
    /// Support edges `(left, right)`: outermost cells with average above `1e-8`.
    pub support: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PmeReport {
    pub name: String,
    pub snapshots: Vec<(SnapshotLog, DgFunction)>,
    /// Smallest value at any limiter check point after any limited stage.
    pub min_stage_value: f64,
    /// `(L1, L2)` error against the closed form for Barenblatt runs.
    pub errors: Option<(f64, f64)>,
    pub steps: usize,
}

/// Support edges from cell averages.
pub fn support_edges(u: &DgFunction, threshold: f64) -> Option<(f64, f64)> {
    let mesh = u.mesh();
    let inside: Vec<usize> = (0..u.n_cells())
        .filter(|&j| u.average(j) > threshold)
        .collect();
    let (&l, &r) = (inside.first()?, inside.last()?);
    Some((mesh.edges()[l], mesh.edges()[r + 1]))
}

fn pme_test(name: &str) -> Result<PmeTest> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "twobox-equal" => PmeTest::TwoBoxEqual,
        "twobox-unequal" => PmeTest::TwoBoxUnequal,
        "waiting-time" => PmeTest::WaitingTime,
        other => match other.strip_prefix("barenblatt") {
            Some(m) => PmeTest::Barenblatt(
                m.parse()
                    .map_err(|_| Error::Config(format!("bad exponent in '{name}'")))?,
            ),
            None => {
                return Err(Error::Config(format!(
                    "'{name}' is not a porous-medium test"
                )))
            }
        },
    })
}

/// Porous-medium run with snapshots; the mesh size defaults to `0.02`.
pub fn run_pme(cfg: &RunConfig) -> Result<PmeReport> {
    let test = pme_test(&cfg.experiment)?;
    let mut spec = crate::problems::pme::pme_spec(test)?;
    spec.limiter = spec.limiter.map(|l| l.with_below_floor(cfg.below_floor));
    let cells = if cfg.cells.len() == 1 {
        cfg.cells[0]
    } else {
        cells_for(&spec, PME_H)
    };
    let mesh = spec.mesh(cells)?;
    let h = mesh.max_width();
    let dt = match cfg.dt {
        DtRule::PerH(c) => c * h,
        DtRule::Fixed(dt) => dt,
    };
    let ein = EinConfig {
        order: cfg.order,
        a0: cfg.policy(),
        dt,
        blowup_factor: DEFAULT_BLOWUP_FACTOR,
    };
    let u0 = spec.initial_data(&mesh, cfg.degree)?;
    let mut solver = EinSolver::new(SpecModel::new(spec.clone()), u0, spec.initial_time, ein)?;
    let mut times = if cfg.snapshot_times.is_empty() {
        test.snapshot_times()
    } else {
        cfg.snapshot_times.clone()
    };
    let t_end = cfg.final_time.unwrap_or(spec.final_time);
    times.retain(|&t| t >= spec.initial_time && t <= t_end + 1e-12);
    if times.last().is_none_or(|&t| t < t_end - 1e-12) {
        times.push(t_end);
    }
    let mut snapshots = Vec::new();
    for &t in &times {
        solver.advance_to(t)?;
        let u = solver.u().clone();
        let log = SnapshotLog {
            t,
            mass: u.total_mass(),
            min_value: crate::limiter::min_check_value(
                &u,
                spec.limiter.as_ref().unwrap_or(&Default::default()),
            ),
            support: support_edges(&u, 1e-8),
        };
        snapshots.push((log, u));
    }
    let errors = match test {
        PmeTest::Barenblatt(m) => {
            let p = BarenblattParams::new(m)?;
            let exact = |x: f64, t: f64| barenblatt(p, x, t).unwrap_or(0.0);
            Some((
                l1_error(solver.u(), exact, solver.t()),
                l2_error(solver.u(), exact, solver.t()),
            ))
        }
        _ => None,
    };
    Ok(PmeReport {
        name: spec.name.clone(),
        snapshots,
        min_stage_value: solver.model().min_limited_value(),
        errors,
        steps: solver.steps(),
    })
}

/// Default porous-medium configuration: second order, `k = 2`, adaptive `a0`.
pub fn pme_defaults(experiment: &str) -> RunConfig {
    RunConfig {
        experiment: experiment.to_string(),
        cells: Vec::new(),
        degree: 2,
        order: Order::Second,
        a0: A0Mode::Adaptive { safety: 0.5 },
        dt: DtRule::PerH(PME_DT_OVER_H),
        below_floor: BelowFloor::Flatten,
        ..RunConfig::default()
    }
}

pub fn highfield_config(cfg: &RunConfig) -> (HighFieldParams, HighFieldConfig) {
    let params = HighFieldParams {
        v_bias: cfg.v_bias,
        ..HighFieldParams::default()
    };
    let mut hf = HighFieldConfig {
        cells: cfg.cells.first().copied().unwrap_or(200),
        dt: cfg.dt.dt(0.0),
        a0_refresh: cfg.a0_refresh,
        max_steps: cfg.max_steps,
        a0_guard: cfg.a0_guard,
        ..HighFieldConfig::default()
    };
    if let A0Mode::Adaptive { safety } = cfg.a0 {
        hf.a0_safety = safety;
    }
    (params, hf)
}

fn snapshot_name(t: f64) -> String {
    format!(
        "snapshot_t{}.csv",
        format!("{t:.4}")
            .trim_end_matches('0')
            .trim_end_matches('.')
    )
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

/// Writes `table.csv` and `report.txt`.
pub fn write_convergence(cfg: &RunConfig, rows: &[ConvergenceRow]) -> Result<String> {
    write_table(rows, create(&cfg.out, "table.csv")?)?;
    let mut report = format!(
        "experiment {} order {} degree {} a0 {:?}\n",
        cfg.experiment,
        cfg.order.number(),
        cfg.degree,
        cfg.a0
    );
    for w in &cfg.warnings {
        let _ = writeln!(report, "warning: {w}");
    }
    for r in rows {
        let _ = writeln!(
            report,
            "N={:<6} h={} dt={} L2={} order={}",
            r.cells,
            format_sci(r.h),
            format_sci(r.dt),
            format_sci(r.l2_error),
            r.order.map_or("-".into(), |o| format!("{o:.2}"))
        );
    }
    fs::write(cfg.out.join("report.txt"), &report)?;
    Ok(report)
}

/// Writes `energy.csv` and `report.txt`.
pub fn write_stability(cfg: &RunConfig, results: &[StabilityResult]) -> Result<String> {
    let mut w = create(&cfg.out, "energy.csv")?;
    writeln!(w, "a0,step,t,u_norm_sq,q_term,functional")?;
    for r in results {
        for e in r.energy.records() {
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e}",
                r.a0, e.step, e.t, e.u_norm_sq, e.q_term, e.functional
            )?;
        }
    }
    w.flush()?;
    let mut report = format!("experiment {} N={}\n", cfg.experiment, cfg.cells[0]);
    for r in results {
        let _ = writeln!(
            report,
            "a0={} {} norm_ratio={}",
            r.a0,
            if r.stable { "stable" } else { "unstable" },
            format_sci(r.norm_ratio)
        );
    }
    fs::write(cfg.out.join("report.txt"), &report)?;
    Ok(report)
}

/// Writes one snapshot file per recorded time and `report.txt`.
pub fn write_pme(cfg: &RunConfig, rep: &PmeReport) -> Result<String> {
    let mut report = format!("experiment {} steps {}\n", rep.name, rep.steps);
    for (log, u) in &rep.snapshots {
        let mut w = create(&cfg.out, &snapshot_name(log.t))?;
        write_snapshot(u, 4, &mut w)?;
        w.flush()?;
        let support = log
            .support
            .map_or("empty".into(), |(l, r)| format!("[{l:.4}, {r:.4}]"));
        let _ = writeln!(
            report,
            "t={:.4} mass={:.12e} min={} support={support}",
            log.t,
            log.mass,
            format_sci(log.min_value)
        );
    }
    let _ = writeln!(
        report,
        "min stage value {}",
        format_sci(rep.min_stage_value)
    );
    if let Some((l1, l2)) = rep.errors {
        let _ = writeln!(
            report,
            "L1 error {} L2 error {}",
            format_sci(l1),
            format_sci(l2)
        );
    }
    fs::write(cfg.out.join("report.txt"), &report)?;
    Ok(report)
}

/// Runs the high-field driver and writes `report.txt`, `snapshot_n.csv`, `snapshot_E.csv`.
pub fn run_highfield(cfg: &RunConfig) -> Result<String> {
    let (params, hf) = highfield_config(cfg);
    let s = highfield_step_driver(params, &hf)?;
    let mut w = create(&cfg.out, "snapshot_n.csv")?;
    write_snapshot(&s.density, 4, &mut w)?;
    w.flush()?;
    let mut w = create(&cfg.out, "snapshot_E.csv")?;
    write_snapshot(&s.field, 4, &mut w)?;
    w.flush()?;
    let report = format!(
        "cells,dt,nt,t,cpu_seconds,a0\n{},{},{},{:.4},{:.3},{}\n",
        hf.cells,
        format_sci(hf.dt),
        s.steps,
        s.time,
        s.wall.as_secs_f64(),
        format_sci(s.a0)
    );
    fs::write(cfg.out.join("report.txt"), &report)?;
    Ok(report)
}

/// Quick internal consistency checks; returns the names of failed checks.
pub fn selftest() -> Vec<String> {
    use crate::fem::{Boundary, Mesh1D};
    use crate::ldg::{assemble_discrete_laplacian, LdgOperators};
    let mut failed = Vec::new();
    for name in [
        "example1-half",
        "example1-quadratic",
        "example1-sinesq",
        "example2-b10",
        "example2-b1000",
    ] {
        if by_name(name).and_then(|s| s.self_check(1000)).is_err() {
            failed.push(format!("residual check {name}"));
        }
    }
    let mesh = Arc::new(Mesh1D::uniform(0.0, 1.0, 16, Boundary::Periodic).expect("valid mesh"));
    for k in 0..=2 {
        let ops = LdgOperators::new(Arc::clone(&mesh), k);
        let u = crate::fem::l2_project(|x| (6.0 * x).sin() + x * x, &mesh, k);
        let lap = assemble_discrete_laplacian(&mesh, k);
        let free = ops.op_l(&ops.op_k(&u));
        let Ok(mat) = lap.apply(u.coeffs()) else {
            failed.push(format!("laplacian apply k={k}"));
            continue;
        };
        let diff = free
            .coeffs()
            .iter()
            .zip(&mat)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !(diff < 1e-9) {
            failed.push(format!("laplacian agreement k={k}"));
        }
    }
    if !(crate::problems::pme::barenblatt(BarenblattParams { m: 2.0 }, 0.0, 1.0) == Ok(1.0)) {
        failed.push("barenblatt centre value".into());
    }
    failed
}
