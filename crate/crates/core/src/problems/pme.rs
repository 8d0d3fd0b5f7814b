//! Porous medium equation `u_t = (u^m)_xx = (m u^(m-1) u_x)_x`.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{BoundarySpec, Diffusion, InitialProjection, ProblemSpec};
use crate::error::{Error, Result};
use crate::limiter::{BelowFloor, LimiterConfig};

/// Mesh size used for all porous-medium runs.
pub const PME_H: f64 = 0.02;
/// Default `dt / h`.
pub const PME_DT_OVER_H: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarenblattParams {
    pub m: f64,
}

impl BarenblattParams {
    pub fn new(m: f64) -> Result<Self> {
        if m > 1.0 {
            Ok(BarenblattParams { m })
        } else {
            Err(Error::Config(format!(
                "Barenblatt exponent must exceed 1, got {m}"
            )))
        }
    }

    pub fn s(&self) -> f64 {
        1.0 / (self.m + 1.0)
    }

    /// Half-width of the support at time `t`.
    pub fn support_radius(&self, t: f64) -> f64 {
        let (m, s) = (self.m, self.s());
        (2.0 * m / (s * (m - 1.0))).sqrt() * t.powf(s)
    }
}

/// `t^-s [(1 - s(m-1)/(2m) x^2 / t^(2s))_+]^(1/(m-1))`.
pub fn barenblatt(p: BarenblattParams, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let (m, s) = (p.m, p.s());
    let bracket = (1.0 - s * (m - 1.0) / (2.0 * m) * x * x / t.powf(2.0 * s)).max(0.0);
    Ok(t.powf(-s) * bracket.powf(1.0 / (m - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PmeTest {
    Barenblatt(f64),
    TwoBoxEqual,
    TwoBoxUnequal,
    WaitingTime,
}

impl PmeTest {
    pub fn exponent(self) -> f64 {
        match self {
            PmeTest::Barenblatt(m) => m,
            PmeTest::TwoBoxEqual => 5.0,
            PmeTest::TwoBoxUnequal | PmeTest::WaitingTime => 8.0,
        }
    }

    /// Times at which snapshots are written.
    pub fn snapshot_times(self) -> Vec<f64> {
        match self {
            PmeTest::Barenblatt(_) => vec![1.0, 2.0],
            PmeTest::TwoBoxEqual => vec![0.0, 0.3, 0.6, 0.9, 1.2, 1.5],
            PmeTest::TwoBoxUnequal => {
                vec![0.0, 0.05, 0.08, 0.11, 0.14, 0.17, 0.20, 0.23, 0.5, 1.0]
            }
            PmeTest::WaitingTime => (0..=9).map(|i| 0.2 * i as f64).collect(),
        }
    }
}

/// `a = m|u|^(m-1)`, `b = sqrt(m)|u|^((m-1)/2)`, `B = sign(u) sqrt(m) 2/(m+1) |u|^((m+1)/2)`.
pub fn pme_diffusion(m: f64) -> Diffusion {
    let r = m.sqrt();
    Diffusion::Solution {
        a: Arc::new(move |u: f64| m * u.abs().powf(m - 1.0)),
        da: Arc::new(move |u: f64| m * (m - 1.0) * u.signum() * u.abs().powf(m - 2.0)),
        b: Arc::new(move |u: f64| r * u.abs().powf(0.5 * (m - 1.0))),
        big_b: Arc::new(move |u: f64| {
            u.signum() * r * 2.0 / (m + 1.0) * u.abs().powf(0.5 * (m + 1.0))
        }),
    }
}

fn boxes(intervals: Vec<(f64, f64, f64)>) -> super::ScalarFn {
    Arc::new(move |x| {
        intervals
            .iter()
            .find(|(l, r, _)| x > *l && x < *r)
            .map_or(0.0, |b| b.2)
    })
}

pub fn pme_spec(test: PmeTest) -> Result<ProblemSpec> {
    let m = test.exponent();
    let (name, domain, initial, t0, t1) = match test {
        PmeTest::Barenblatt(m) => {
            let p = BarenblattParams::new(m)?;
            let init: super::ScalarFn = Arc::new(move |x| barenblatt(p, x, 1.0).unwrap_or(0.0));
            (format!("barenblatt{m}"), (-6.0, 6.0), init, 1.0, 2.0)
        }
        PmeTest::TwoBoxEqual => (
            "twobox-equal".to_string(),
            (-5.5, 5.5),
            boxes(vec![(-3.7, -0.7, 1.0), (0.7, 3.7, 1.0)]),
            0.0,
            1.5,
        ),
        PmeTest::TwoBoxUnequal => (
            "twobox-unequal".to_string(),
            (-6.0, 6.0),
            boxes(vec![(-4.0, -1.0, 1.0), (0.0, 3.0, 1.5)]),
            0.0,
            1.0,
        ),
        PmeTest::WaitingTime => {
            let init: super::ScalarFn =
                Arc::new(|x: f64| if x.abs() < PI / 2.0 { x.cos() } else { 0.0 });
            ("waiting-time".to_string(), (-PI, PI), init, 0.0, 1.8)
        }
    };
    Ok(ProblemSpec {
        name,
        domain,
        diffusion: pme_diffusion(m),
        source: None,
        exact: None,
        initial,
        boundary: BoundarySpec::zero_dirichlet(),
        initial_time: t0,
        final_time: t1,
        projection: InitialProjection::L2,
        limiter: Some(LimiterConfig::default().with_below_floor(BelowFloor::Flatten)),
    })
}

/// Number of cells giving the closest mesh size to `h` on the test's domain.
pub fn cells_for(spec: &ProblemSpec, h: f64) -> usize {
    ((spec.domain.1 - spec.domain.0) / h).round().max(1.0) as usize
}
