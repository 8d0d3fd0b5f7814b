//! Experiment definitions and the generic diffusion model driving them.

pub mod highfield;
pub mod manufactured;
pub mod pme;

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{gauss_radau_project, l2_project, Boundary, DgFunction, Mesh1D, Side};
use crate::imex::{max_over_solution, EinModel};
use crate::ldg::LdgOperators;
use crate::limiter::{apply_positivity, min_check_value, LimiterConfig};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Diffusion coefficient of `u_t = (a u_x)_x + f`.
#[derive(Clone)]
pub enum Diffusion {
    /// `a(u)` with `b = sqrt(a)` and `B = int_0^u b`; `da = a'`.
    Solution {
        a: ScalarFn,
        da: ScalarFn,
        b: ScalarFn,
        big_b: ScalarFn,
    },
    /// `a(x)` with derivative `da`.
    Space { a: ScalarFn, da: ScalarFn },
}

impl Diffusion {
    /// Constant coefficient expressed in solution form.
    pub fn constant(a: f64) -> Self {
        let r = a.sqrt();
        Diffusion::Solution {
            a: Arc::new(move |_| a),
            da: Arc::new(|_| 0.0),
            b: Arc::new(move |_| r),
            big_b: Arc::new(move |u| r * u),
        }
    }
}

/// Exact solution with the derivatives needed by the residual self-check.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: SpaceTimeFn,
    pub u_t: SpaceTimeFn,
    pub u_x: SpaceTimeFn,
    pub u_xx: SpaceTimeFn,
}

#[derive(Clone)]
pub enum BoundarySpec {
    Periodic,
    /// Time-dependent Dirichlet values at the left and right end.
    Dirichlet {
        left: ScalarFn,
        right: ScalarFn,
    },
}

impl BoundarySpec {
    pub fn zero_dirichlet() -> Self {
        BoundarySpec::Dirichlet {
            left: Arc::new(|_| 0.0),
            right: Arc::new(|_| 0.0),
        }
    }

    pub fn at(&self, t: f64) -> Boundary {
        match self {
            BoundarySpec::Periodic => Boundary::Periodic,
            BoundarySpec::Dirichlet { left, right } => Boundary::Dirichlet {
                left: left(t),
                right: right(t),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialProjection {
    GaussRadauMinus,
    L2,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: (f64, f64),
    pub diffusion: Diffusion,
    pub source: Option<SpaceTimeFn>,
    pub exact: Option<ExactSolution>,
    pub initial: ScalarFn,
    pub boundary: BoundarySpec,
    pub initial_time: f64,
    pub final_time: f64,
    pub projection: InitialProjection,
    pub limiter: Option<LimiterConfig>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("initial_time", &self.initial_time)
            .field("final_time", &self.final_time)
            .finish_non_exhaustive()
    }
}

/// Tolerance of the construction-time residual check.
pub const RESIDUAL_TOL: f64 = 1e-10;

impl ProblemSpec {
    pub fn mesh(&self, cells: usize) -> Result<Arc<Mesh1D>> {
        Ok(Arc::new(Mesh1D::uniform(
            self.domain.0,
            self.domain.1,
            cells,
            self.boundary.at(self.initial_time),
        )?))
    }

    /// Projected (and, if configured, limited) initial data.
    pub fn initial_data(&self, mesh: &Arc<Mesh1D>, k: usize) -> Result<DgFunction> {
        let f = &self.initial;
        let mut u = match self.projection {
            InitialProjection::GaussRadauMinus => {
                gauss_radau_project(|x| f(x), mesh, k, Side::Minus)
            }
            InitialProjection::L2 => l2_project(|x| f(x), mesh, k),
        };
        if let Some(cfg) = &self.limiter {
            apply_positivity(&mut u, cfg)?;
        }
        Ok(u)
    }

    /// `|u_t - (a u_x)_x - f|` at `(x, t)` using the generic chain rule.
    pub fn residual_at(&self, x: f64, t: f64) -> Option<f64> {
        let ex = self.exact.as_ref()?;
        let (u, ux, uxx) = ((ex.u)(x, t), (ex.u_x)(x, t), (ex.u_xx)(x, t));
        let flux_x = match &self.diffusion {
            Diffusion::Solution { a, da, .. } => da(u) * ux * ux + a(u) * uxx,
            Diffusion::Space { a, da } => da(x) * ux + a(x) * uxx,
        };
        let f = self.source.as_ref().map_or(0.0, |s| s(x, t));
        Some(((ex.u_t)(x, t) - flux_x - f).abs())
    }

    /// Checks the exact solution against the source at deterministic sample points.
    pub fn self_check(&self, samples: usize) -> Result<f64> {
        if self.exact.is_none() {
            return Ok(0.0);
        }
        let (l, r) = self.domain;
        let mut worst: f64 = 0.0;
        for i in 0..samples {
            // low-discrepancy points in [l, r] x [t0, T]
            let x = l + (r - l) * ((i as f64 * 0.618_033_988_749_895) % 1.0);
            let t = self.initial_time
                + (self.final_time - self.initial_time)
                    * ((i as f64 * 0.754_877_666_246_693) % 1.0);
            worst = worst.max(self.residual_at(x, t).unwrap_or(0.0));
        }
        if worst > RESIDUAL_TOL {
            return Err(Error::Config(format!(
                "{}: exact solution inconsistent with source (residual {worst:e})",
                self.name
            )));
        }
        Ok(worst)
    }

    pub fn max_diffusion(&self, ops: &LdgOperators, u: &DgFunction) -> f64 {
        match &self.diffusion {
            Diffusion::Solution { a, .. } => max_over_solution(ops, u, |v| a(v)),
            Diffusion::Space { a, .. } => {
                let mesh = ops.mesh();
                let nodes = &ops.ref_element().quad().nodes;
                let mut m = f64::NEG_INFINITY;
                for j in 0..mesh.n_cells() {
                    for &xi in nodes.iter().chain([-1.0, 1.0].iter()) {
                        m = m.max(a(mesh.map(j, xi)));
                    }
                }
                m
            }
        }
    }
}

/// [`EinModel`] for a [`ProblemSpec`]; tracks the smallest limited stage value.
#[derive(Debug)]
pub struct SpecModel {
    pub spec: ProblemSpec,
    min_limited: Cell<f64>,
    limited_stages: Cell<usize>,
}

impl SpecModel {
    pub fn new(spec: ProblemSpec) -> Self {
        SpecModel {
            spec,
            min_limited: Cell::new(f64::INFINITY),
            limited_stages: Cell::new(0),
        }
    }

    /// Smallest check-point value seen after limiting any stage.
    pub fn min_limited_value(&self) -> f64 {
        self.min_limited.get()
    }

    pub fn limited_stages(&self) -> usize {
        self.limited_stages.get()
    }
}

impl EinModel for SpecModel {
    fn rhs(&self, ops: &LdgOperators, t: f64, u: &DgFunction) -> Result<DgFunction> {
        let bc = self.spec.boundary.at(t);
        let mut r = match &self.spec.diffusion {
            Diffusion::Solution { b, big_b, .. } => {
                let p = ops.op_ktilde_with(u, |v| big_b(v), bc);
                ops.op_ltilde_with(u, &p, |v| b(v), |v| big_b(v), bc)
            }
            Diffusion::Space { a, .. } => {
                let mesh = Arc::clone(ops.mesh());
                ops.op_space_diffusion(u, |j, xi| a(mesh.map(j, xi)), bc)
            }
        };
        if let Some(f) = &self.spec.source {
            let fp = l2_project(|x| f(x, t), ops.mesh(), ops.degree());
            for (ri, fi) in r.coeffs_mut().iter_mut().zip(fp.coeffs()) {
                *ri += fi;
            }
        }
        Ok(r)
    }

    fn max_diffusion(&self, ops: &LdgOperators, u: &DgFunction) -> f64 {
        self.spec.max_diffusion(ops, u)
    }

    fn limit(&self, u: &mut DgFunction) -> Result<()> {
        if let Some(cfg) = &self.spec.limiter {
            apply_positivity(u, cfg)?;
            self.limited_stages.set(self.limited_stages.get() + 1);
            let m = min_check_value(u, cfg);
            if m < self.min_limited.get() {
                self.min_limited.set(m);
            }
        }
        Ok(())
    }
}

/// Looks up a named experiment problem.
pub fn by_name(name: &str) -> Result<ProblemSpec> {
    use manufactured::{example1, example2, Example1Case};
    use pme::{pme_spec, PmeTest};
    let lower = name.to_ascii_lowercase();
    let spec = match lower.as_str() {
        "example1-half" | "example1-i" => example1(Example1Case::ConstHalf),
        "example1-quadratic" | "example1-ii" => example1(Example1Case::Quadratic),
        "example1-sinesq" | "example1-iii" => example1(Example1Case::SineSq),
        "barenblatt2" | "barenblatt3" | "barenblatt5" | "barenblatt8" => {
            let m: f64 = lower["barenblatt".len()..].parse().expect("digit");
            pme_spec(PmeTest::Barenblatt(m))?
        }
        "twobox-equal" => pme_spec(PmeTest::TwoBoxEqual)?,
        "twobox-unequal" => pme_spec(PmeTest::TwoBoxUnequal)?,
        "waiting-time" => pme_spec(PmeTest::WaitingTime)?,
        other => {
            if let Some(b) = other.strip_prefix("example2-b") {
                let b: f64 = b
                    .parse()
                    .map_err(|_| Error::Config(format!("bad coefficient in {name}")))?;
                example2(b)
            } else {
                return Err(Error::Config(format!("unknown problem '{name}'")));
            }
        }
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_name() {
        assert!(by_name("example1-ii").is_ok());
        assert_eq!(by_name("example2-b10").unwrap().name, "example2-b10");
        assert!(by_name("barenblatt3").is_ok());
        assert!(by_name("nope").is_err());
        assert!(by_name("example2-bx").is_err());
    }

    #[test]
    fn boundary_spec_evaluates_in_time() {
        let bc = BoundarySpec::Dirichlet {
            left: Arc::new(|t| t),
            right: Arc::new(|t| 2.0 * t),
        };
        assert_eq!(
            bc.at(1.5),
            Boundary::Dirichlet {
                left: 1.5,
                right: 3.0
            }
        );
    }
}
