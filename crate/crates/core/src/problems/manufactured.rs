//! Manufactured problems with exact solution `u = sin(x - t)` on `[-pi, pi]`.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{BoundarySpec, Diffusion, ExactSolution, InitialProjection, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example1Case {
    /// `a = 1/2`
    ConstHalf,
    /// `a = u^2 + 1`
    Quadratic,
    /// `a = sin^2 u`
    SineSq,
}

pub const FINAL_TIME: f64 = 10.0;

fn travelling_sine() -> ExactSolution {
    ExactSolution {
        u: Arc::new(|x, t| (x - t).sin()),
        u_t: Arc::new(|x, t| -(x - t).cos()),
        u_x: Arc::new(|x, t| (x - t).cos()),
        u_xx: Arc::new(|x, t| -(x - t).sin()),
    }
}

/// `int_0^u |sin s| ds`, odd in `u`.
pub fn sine_sq_primitive(u: f64) -> f64 {
    let r = u.abs();
    let periods = (r / PI).floor();
    u.signum() * (2.0 * periods + 1.0 - (r - periods * PI).cos())
}

fn spec(name: &str, diffusion: Diffusion, source: super::SpaceTimeFn) -> ProblemSpec {
    ProblemSpec {
        name: name.to_string(),
        domain: (-PI, PI),
        diffusion,
        source: Some(source),
        exact: Some(travelling_sine()),
        initial: Arc::new(f64::sin),
        boundary: BoundarySpec::Periodic,
        initial_time: 0.0,
        final_time: FINAL_TIME,
        projection: InitialProjection::GaussRadauMinus,
        limiter: None,
    }
}

pub fn example1(case: Example1Case) -> ProblemSpec {
    match case {
        Example1Case::ConstHalf => spec(
            "example1-half",
            Diffusion::constant(0.5),
            Arc::new(|x, t| -(x - t).cos() + 0.5 * (x - t).sin()),
        ),
        Example1Case::Quadratic => spec(
            "example1-quadratic",
            Diffusion::Solution {
                a: Arc::new(|u| u * u + 1.0),
                da: Arc::new(|u| 2.0 * u),
                b: Arc::new(|u| (u * u + 1.0).sqrt()),
                big_b: Arc::new(|u| 0.5 * (u * (u * u + 1.0).sqrt() + u.asinh())),
            },
            Arc::new(|x, t| {
                let (s, c) = (x - t).sin_cos();
                -c - 2.0 * s * c * c + (s * s + 1.0) * s
            }),
        ),
        Example1Case::SineSq => spec(
            "example1-sinesq",
            Diffusion::Solution {
                a: Arc::new(|u| u.sin().powi(2)),
                da: Arc::new(|u| (2.0 * u).sin()),
                b: Arc::new(|u| u.sin().abs()),
                big_b: Arc::new(sine_sq_primitive),
            },
            Arc::new(|x, t| {
                let (s, c) = (x - t).sin_cos();
                -c - (2.0 * s).sin() * c * c + s.sin().powi(2) * s
            }),
        ),
    }
}

/// `a(x) = 1 + b sin^2 x`.
pub fn example2(b: f64) -> ProblemSpec {
    spec(
        &format!("example2-b{b}"),
        Diffusion::Space {
            a: Arc::new(move |x| 1.0 + b * x.sin().powi(2)),
            da: Arc::new(move |x| b * (2.0 * x).sin()),
        },
        Arc::new(move |x, t| {
            let (s, c) = (x - t).sin_cos();
            -c - b * (2.0 * x).sin() * c + (1.0 + b * x.sin().powi(2)) * s
        }),
    )
}
