//! High-field semiconductor model on `[0, 0.6]`:
//! `n_t + f(n, E)_x = (a(E) n_x)_x`, `phi_xx = (e/eps)(n - n_d)`, `E = -phi_x`.
//!
//! Units: length in micrometres, time in picoseconds, potential in volts,
//! charge in `1e-18 C`, mass in `1e-30 kg`, concentrations in `1e12 cm^-3`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::fem::{l1_diff, l2_project, Boundary, DgFunction, Mesh1D};
use crate::imex::{A0Policy, EinConfig, EinModel, EinSolver, Order};
use crate::ldg::LdgOperators;
use crate::poisson::PoissonSystem;

/// Shape of the doping between the plateaus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DopingTransition {
    /// Cubic smoothstep in `ln n_d`.
    LogSmoothstep,
    /// Cubic smoothstep in `n_d`.
    Smoothstep,
}

/// How the contact current `omega = mu n E` at `x = 0` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaMode {
    /// From the initial state only.
    Initial,
    /// Re-evaluated at the start of every step and frozen with `E`.
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighFieldParams {
    pub e: f64,
    pub eps: f64,
    /// Effective electron mass.
    pub mass: f64,
    pub k_b: f64,
    pub t0: f64,
    pub v_bias: f64,
    pub n_i: f64,
    pub nd_high: f64,
    pub nd_low: f64,
    pub length: f64,
    /// Doping transitions `[x0, x1]` from high to low and back.
    pub ramp_down: (f64, f64),
    pub ramp_up: (f64, f64),
    pub transition: DopingTransition,
    pub omega_mode: OmegaMode,
}

impl Default for HighFieldParams {
    fn default() -> Self {
        HighFieldParams {
            e: 0.1602,
            eps: 11.7 * 8.85418,
            mass: 0.26 * 0.9109,
            k_b: 0.138e-4,
            t0: 300.0,
            v_bias: 1.5,
            n_i: 1.4e10 * 1e-12,
            nd_high: 5e17 * 1e-12,
            nd_low: 2e15 * 1e-12,
            length: 0.6,
            ramp_down: (0.1, 0.15),
            ramp_up: (0.45, 0.5),
            transition: DopingTransition::LogSmoothstep,
            omega_mode: OmegaMode::PerStep,
        }
    }
}

/// Cubic smoothstep on `[0, 1]` and its derivative.
fn smoothstep(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0)
    } else {
        (s * s * (3.0 - 2.0 * s), 6.0 * s * (1.0 - s))
    }
}

/// Spatial coefficients frozen at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub x: f64,
    pub nd: f64,
    pub mu: f64,
    pub mu_x: f64,
    pub gamma: f64,
}

impl HighFieldParams {
    pub fn e_over_eps(&self) -> f64 {
        self.e / self.eps
    }

    pub fn theta(&self) -> f64 {
        self.k_b / self.mass * self.t0
    }

    pub fn thermal_voltage(&self) -> f64 {
        self.k_b * self.t0 / self.e
    }

    pub fn mobility(&self, nd: f64) -> f64 {
        0.0088 * (1.0 + 14.2273 / (1.0 + nd / 143200.0))
    }

    fn dmobility(&self, nd: f64) -> f64 {
        let d = 1.0 + nd / 143200.0;
        -0.0088 * 14.2273 / (d * d * 143200.0)
    }

    /// Doping `n_d(x)` and `n_d'(x)`.
    pub fn doping(&self, x: f64) -> (f64, f64) {
        let (a0, a1) = self.ramp_down;
        let (b0, b1) = self.ramp_up;
        let (s1, d1) = smoothstep((x - a0) / (a1 - a0));
        let (s2, d2) = smoothstep((x - b0) / (b1 - b0));
        let (s, ds) = (s1 - s2, d1 / (a1 - a0) - d2 / (b1 - b0));
        match self.transition {
            DopingTransition::Smoothstep => {
                let jump = self.nd_low - self.nd_high;
                (self.nd_high + jump * s, jump * ds)
            }
            DopingTransition::LogSmoothstep => {
                let r = (self.nd_low / self.nd_high).ln();
                let v = self.nd_high * (r * s).exp();
                (v, v * r * ds)
            }
        }
    }

    pub fn coefficients(&self, x: f64) -> Coefficients {
        let (nd, ndx) = self.doping(x);
        let mu = self.mobility(nd);
        Coefficients {
            x,
            nd,
            mu,
            mu_x: self.dmobility(nd) * ndx,
            gamma: self.mass * mu / self.e,
        }
    }

    pub fn phi_a(&self) -> f64 {
        self.thermal_voltage() * (self.doping(0.0).0 / self.n_i).ln()
    }

    pub fn phi_b(&self) -> f64 {
        self.phi_a() + self.v_bias
    }

    /// `f(n, E)`.
    pub fn flux(&self, c: &Coefficients, n: f64, e: f64, omega: f64) -> f64 {
        let k = self.e_over_eps();
        let (mu, g) = (c.mu, c.gamma);
        g * mu * mu * k * n * e * (2.0 * n - 3.0 * c.nd) - mu * n * e * (1.0 + 3.0 * g * e * c.mu_x)
            + g * mu * k * omega * n
    }

    /// `df/dn`.
    pub fn dflux(&self, c: &Coefficients, n: f64, e: f64, omega: f64) -> f64 {
        let k = self.e_over_eps();
        let (mu, g) = (c.mu, c.gamma);
        g * mu * mu * k * e * (4.0 * n - 3.0 * c.nd) - mu * e * (1.0 + 3.0 * g * e * c.mu_x)
            + g * mu * k * omega
    }

    /// `a(E) = gamma theta + gamma mu^2 E^2`.
    pub fn diffusion(&self, c: &Coefficients, e: f64) -> f64 {
        c.gamma * (self.theta() + c.mu * c.mu * e * e)
    }
}

/// Coefficients tabulated at the quadrature nodes and both ends of every cell.
#[derive(Debug, Clone)]
struct CoefficientTable {
    points: Vec<f64>,
    values: Vec<Coefficients>,
    mesh: Arc<Mesh1D>,
    params: HighFieldParams,
}

impl CoefficientTable {
    fn new(params: HighFieldParams, ops: &LdgOperators) -> Self {
        let mesh = Arc::clone(ops.mesh());
        let mut points = ops.ref_element().quad().nodes.clone();
        points.extend([-1.0, 1.0]);
        let values = (0..mesh.n_cells())
            .flat_map(|j| points.iter().map(move |&xi| (j, xi)))
            .map(|(j, xi)| params.coefficients(mesh.map(j, xi)))
            .collect();
        CoefficientTable {
            points,
            values,
            mesh,
            params,
        }
    }

    fn get(&self, j: usize, xi: f64) -> Coefficients {
        match self.points.iter().position(|&p| p == xi) {
            Some(q) => self.values[j * self.points.len() + q],
            None => self.params.coefficients(self.mesh.map(j, xi)),
        }
    }
}

/// Frozen-field model: `E` (and `omega` in [`OmegaMode::PerStep`]) are
/// recomputed from `n` before each step.
#[derive(Debug, Clone)]
pub struct HighFieldModel {
    pub params: HighFieldParams,
    poisson: PoissonSystem,
    table: CoefficientTable,
    ops: LdgOperators,
    doping_h: DgFunction,
    field: DgFunction,
    omega: f64,
    alpha: f64,
}

impl HighFieldModel {
    pub fn new(params: HighFieldParams, mesh: &Arc<Mesh1D>, degree: usize) -> Result<Self> {
        let poisson = PoissonSystem::new(
            Arc::new(mesh.with_boundary(Boundary::Dirichlet {
                left: params.phi_a(),
                right: params.phi_b(),
            })),
            degree,
        )?;
        let ops = LdgOperators::new(Arc::clone(mesh), degree);
        let doping_h = l2_project(|x| params.doping(x).0, mesh, degree);
        let mut m = HighFieldModel {
            params,
            poisson,
            table: CoefficientTable::new(params, &ops),
            ops,
            field: DgFunction::zeros(Arc::clone(mesh), degree),
            doping_h,
            omega: 0.0,
            alpha: 0.0,
        };
        let n0 = m.initial_density(mesh, degree);
        m.field = m.solve_field(&n0)?;
        m.omega = m.contact_current(&n0, &m.field);
        m.alpha = m.max_slope(&n0, &m.field, m.omega);
        Ok(m)
    }

    /// `n_0 = n_d`.
    pub fn initial_density(&self, mesh: &Arc<Mesh1D>, degree: usize) -> DgFunction {
        let p = self.params;
        l2_project(|x| p.doping(x).0, mesh, degree)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn field(&self) -> &DgFunction {
        &self.field
    }

    pub fn doping(&self) -> &DgFunction {
        &self.doping_h
    }

    /// `mu n E` at `x = 0`.
    pub fn contact_current(&self, n: &DgFunction, field: &DgFunction) -> f64 {
        self.table.get(0, -1.0).mu * n.left_value(0) * field.left_value(0)
    }

    pub fn solve_field(&self, n: &DgFunction) -> Result<DgFunction> {
        let k = self.params.e_over_eps();
        let src: Vec<f64> = n
            .coeffs()
            .iter()
            .zip(self.doping_h.coeffs())
            .map(|(a, b)| k * (a - b))
            .collect();
        let src = DgFunction::from_coeffs(Arc::clone(self.poisson.mesh()), n.degree(), src)?;
        Ok(self
            .poisson
            .solve(&src, self.params.phi_a(), self.params.phi_b())?
            .field)
    }

    /// `max a(E)` over the tabulated points.
    pub fn max_diffusion_for(&self, field: &DgFunction) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for j in 0..field.n_cells() {
            for &xi in &self.table.points {
                m = m.max(
                    self.params
                        .diffusion(&self.table.get(j, xi), field.eval_ref(j, xi)),
                );
            }
        }
        m
    }

    fn max_slope(&self, n: &DgFunction, field: &DgFunction, w: f64) -> f64 {
        let (p, tab) = (&self.params, &self.table);
        let df = |j: usize, xi: f64, v: f64| p.dflux(&tab.get(j, xi), v, field.eval_ref(j, xi), w);
        self.ops.max_flux_slope(n, |_, _, _| 0.0, Some(&df))
    }

    /// `(a(E) n_x)_x - f(n, E)_x` for a given field, `omega` and Lax–Friedrichs constant.
    fn spatial(
        &self,
        ops: &LdgOperators,
        n: &DgFunction,
        field: &DgFunction,
        omega: f64,
        alpha: f64,
    ) -> DgFunction {
        let (p, tab) = (&self.params, &self.table);
        let conv = ops.op_convection(
            n,
            |j, xi, v| p.flux(&tab.get(j, xi), v, field.eval_ref(j, xi), omega),
            alpha,
            Boundary::Periodic,
        );
        let mut r = ops.op_space_diffusion(
            n,
            |j, xi| p.diffusion(&tab.get(j, xi), field.eval_ref(j, xi)),
            Boundary::Periodic,
        );
        for (ri, ci) in r.coeffs_mut().iter_mut().zip(conv.coeffs()) {
            *ri -= ci;
        }
        r
    }

    /// Full right-hand side with `E` and `omega` recomputed from `n`. The
    /// Lax–Friedrichs constant is recomputed too unless given.
    /// Returns the right-hand side and the constant used.
    pub fn coupled_rhs(
        &self,
        ops: &LdgOperators,
        n: &DgFunction,
        alpha: Option<f64>,
    ) -> Result<(DgFunction, f64)> {
        let field = self.solve_field(n)?;
        let omega = match self.params.omega_mode {
            OmegaMode::Initial => self.omega,
            OmegaMode::PerStep => self.contact_current(n, &field),
        };
        let alpha = alpha.unwrap_or_else(|| self.max_slope(n, &field, omega));
        Ok((self.spatial(ops, n, &field, omega, alpha), alpha))
    }
}

impl EinModel for HighFieldModel {
    fn rhs(&self, ops: &LdgOperators, _t: f64, u: &DgFunction) -> Result<DgFunction> {
        Ok(self.spatial(ops, u, &self.field, self.omega, self.alpha))
    }

    fn max_diffusion(&self, _ops: &LdgOperators, _u: &DgFunction) -> f64 {
        self.max_diffusion_for(&self.field)
    }

    fn prepare_step(&mut self, _ops: &LdgOperators, _t: f64, u: &DgFunction) -> Result<()> {
        self.field = self.solve_field(u)?;
        if self.params.omega_mode == OmegaMode::PerStep {
            self.omega = self.contact_current(u, &self.field);
        }
        self.alpha = self.max_slope(u, &self.field, self.omega);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighFieldConfig {
    pub cells: usize,
    pub degree: usize,
    pub dt: f64,
    pub tol: f64,
    pub max_steps: usize,
    pub a0_refresh: usize,
    pub a0_safety: f64,
    /// Refresh `a0` early once `max a(E)` exceeds `a0_guard * a0`.
    pub a0_guard: f64,
}

impl Default for HighFieldConfig {
    fn default() -> Self {
        HighFieldConfig {
            cells: 200,
            degree: 2,
            dt: 3.6e-4,
            tol: 1e-6,
            max_steps: 200_000,
            a0_refresh: 100,
            a0_safety: 1.0,
            a0_guard: 1.5,
        }
    }
}

impl HighFieldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        if self.cells == 0 || self.a0_refresh == 0 || !(self.tol > 0.0) {
            return Err(Error::Config(
                "cells, a0 refresh interval and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub density: DgFunction,
    pub field: DgFunction,
    pub steps: usize,
    pub time: f64,
    pub wall: Duration,
    pub a0: f64,
    /// Early `a0` refreshes triggered by the guard.
    pub guard_refreshes: usize,
}

fn periodic_mesh(p: &HighFieldParams, cells: usize) -> Result<Arc<Mesh1D>> {
    Ok(Arc::new(Mesh1D::uniform(
        0.0,
        p.length,
        cells,
        Boundary::Periodic,
    )?))
}

/// Third-order EIN run until `||n^{k+1} - n^k||_{L1} < tol`.
pub fn highfield_step_driver(
    params: HighFieldParams,
    cfg: &HighFieldConfig,
) -> Result<SteadyState> {
    cfg.validate()?;
    let start = Instant::now();
    let mesh = periodic_mesh(&params, cfg.cells)?;
    let model = HighFieldModel::new(params, &mesh, cfg.degree)?;
    let n0 = model.initial_density(&mesh, cfg.degree);
    let ein = EinConfig {
        order: Order::Third,
        a0: A0Policy::Adaptive {
            safety: cfg.a0_safety,
            interval: cfg.a0_refresh,
            floor: 1e-10,
            guard: cfg.a0_guard,
        },
        dt: cfg.dt,
        blowup_factor: 1e6,
    };
    let mut solver = EinSolver::new(model, n0, 0.0, ein)?;
    loop {
        let prev = solver.u().clone();
        solver.step(cfg.dt)?;
        if l1_diff(solver.u(), &prev)? < cfg.tol {
            break;
        }
        if solver.steps() >= cfg.max_steps {
            return Err(Error::NoSteadyState(solver.steps()));
        }
    }
    let field = solver.model().solve_field(solver.u())?;
    Ok(SteadyState {
        density: solver.u().clone(),
        field,
        steps: solver.steps(),
        time: solver.t(),
        wall: start.elapsed(),
        a0: solver.a0(),
        guard_refreshes: solver.early_refreshes(),
    })
}

/// Explicit SSP-RK3 reference with `E` and `omega` recomputed at every stage
/// and the Lax–Friedrichs constant once per step.
pub fn explicit_reference(
    params: HighFieldParams,
    cells: usize,
    degree: usize,
    dt: f64,
    tol: f64,
    max_steps: usize,
) -> Result<SteadyState> {
    let start = Instant::now();
    let mesh = periodic_mesh(&params, cells)?;
    let model = HighFieldModel::new(params, &mesh, degree)?;
    let ops = LdgOperators::new(Arc::clone(&mesh), degree);
    let mut n = model.initial_density(&mesh, degree);
    let scale = n.l2_norm_sq().sqrt();
    let dim = n.coeffs().len();
    let combine = |terms: &[(f64, &DgFunction)]| {
        let mut c = vec![0.0; dim];
        for (w, f) in terms {
            for (ci, fi) in c.iter_mut().zip(f.coeffs()) {
                *ci += w * fi;
            }
        }
        c
    };
    for step in 1..=max_steps {
        let (l0, alpha) = model.coupled_rhs(&ops, &n, None)?;
        let u1 = n.with_coeffs(combine(&[(1.0, &n), (dt, &l0)]));
        let (l1, _) = model.coupled_rhs(&ops, &u1, Some(alpha))?;
        let u2 = n.with_coeffs(combine(&[(0.75, &n), (0.25, &u1), (0.25 * dt, &l1)]));
        let (l2, _) = model.coupled_rhs(&ops, &u2, Some(alpha))?;
        let next = n.with_coeffs(combine(&[
            (1.0 / 3.0, &n),
            (2.0 / 3.0, &u2),
            (2.0 / 3.0 * dt, &l2),
        ]));
        let diff = l1_diff(&next, &n)?;
        n = next;
        let t = step as f64 * dt;
        if !n.is_finite() || n.l2_norm_sq().sqrt() > 1e6 * scale {
            return Err(Error::Blowup { step, t });
        }
        if diff < tol {
            let field = model.solve_field(&n)?;
            return Ok(SteadyState {
                density: n,
                field,
                steps: step,
                time: t,
                wall: start.elapsed(),
                a0: 0.0,
                guard_refreshes: 0,
            });
        }
    }
    Err(Error::NoSteadyState(max_steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_values() {
        let p = HighFieldParams::default();
        assert!((p.theta() - 0.138e-4 * 300.0 / (0.26 * 0.9109)).abs() < 1e-15);
        assert!((p.thermal_voltage() - 0.025843).abs() < 1e-5);
        assert!((p.mobility(p.nd_high) - 0.03667).abs() < 1e-4);
        assert!((p.mobility(p.nd_low) - 0.13228).abs() < 1e-4);
        assert!(p.phi_a() > 0.4 && p.phi_a() < 0.5);
        assert_eq!(p.phi_b() - p.phi_a(), 1.5);
    }

    #[test]
    fn doping_profile() {
        for transition in [
            DopingTransition::LogSmoothstep,
            DopingTransition::Smoothstep,
        ] {
            let p = HighFieldParams {
                transition,
                ..Default::default()
            };
            assert_eq!(p.doping(0.05).0, p.nd_high);
            assert!((p.doping(0.3).0 - p.nd_low).abs() < 1e-9);
            assert_eq!(p.doping(0.55).0, p.nd_high);
            assert_eq!(p.doping(0.0).0, p.doping(0.6).0);
            for &x in &[0.11, 0.13, 0.46, 0.49] {
                let h = 1e-7;
                let fd = (p.doping(x + h).0 - p.doping(x - h).0) / (2.0 * h);
                let exact = p.doping(x).1;
                assert!((fd - exact).abs() < 1e-5 * exact.abs());
                let c = p.coefficients(x);
                let fdmu = (p.coefficients(x + h).mu - p.coefficients(x - h).mu) / (2.0 * h);
                assert!((fdmu - c.mu_x).abs() < 1e-5 * c.mu_x.abs());
            }
        }
        let p = HighFieldParams::default();
        let mid = p.doping(0.125).0;
        assert!((mid - (p.nd_high * p.nd_low).sqrt()).abs() < 1e-9 * mid);
    }

    #[test]
    fn flux_and_diffusion() {
        let p = HighFieldParams::default();
        let w = -4.0e4;
        let c = p.coefficients(0.3);
        let f0 = p.flux(&c, 7.0, 0.0, w);
        assert!((f0 - c.gamma * c.mu * p.e_over_eps() * w * 7.0).abs() < 1e-12);
        assert_eq!(p.diffusion(&c, 0.0), c.gamma * p.theta());
        for &e in &[-3.0, 0.0, 2.0] {
            assert!(p.diffusion(&c, e) >= c.gamma * p.theta());
            let (n, h) = (1500.0, 1e-3);
            let fd = (p.flux(&c, n + h, e, w) - p.flux(&c, n - h, e, w)) / (2.0 * h);
            assert!((fd - p.dflux(&c, n, e, w)).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn equilibrium_field_is_constant() {
        let p = HighFieldParams::default();
        let mesh = periodic_mesh(&p, 50).unwrap();
        let m = HighFieldModel::new(p, &mesh, 2).unwrap();
        let e = m.field();
        for j in 0..50 {
            assert!((e.cell(j)[0] + 1.5 / 0.6).abs() < 1e-9);
            assert!(e.cell(j)[1..].iter().all(|v| v.abs() < 1e-9));
        }
        let mu0 = p.coefficients(0.0).mu;
        assert!((m.omega() - mu0 * p.nd_high * (-2.5)).abs() < 1e-6 * m.omega().abs());
    }

    #[test]
    fn tabulated_coefficients_match_direct() {
        let p = HighFieldParams::default();
        let mesh = periodic_mesh(&p, 30).unwrap();
        let ops = LdgOperators::new(Arc::clone(&mesh), 2);
        let tab = CoefficientTable::new(p, &ops);
        for j in [0, 7, 29] {
            for &xi in &[-1.0, ops.ref_element().quad().nodes[3], 0.123, 1.0] {
                assert_eq!(tab.get(j, xi), p.coefficients(mesh.map(j, xi)));
            }
        }
    }

    #[test]
    fn rejects_zero_dt() {
        let cfg = HighFieldConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            highfield_step_driver(HighFieldParams::default(), &cfg),
            Err(Error::Config(_))
        ));
    }
}
