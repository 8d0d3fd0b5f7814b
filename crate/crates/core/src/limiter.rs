//! Cell-average-preserving positivity limiter.
//!
//! In each cell the non-constant modes are scaled toward the average until the
//! polynomial is no smaller than `floor` at the check points (the nonlinear
//! quadrature nodes and both cell ends).

use crate::error::{Error, Result};
use crate::fem::{gauss_quadrature, legendre_with_derivatives, DgFunction, NONLINEAR_QUAD_POINTS};

/// What the limiter does with a cell whose average is below the floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BelowFloor {
    /// Report [`Error::NegativeAverage`].
    Abort,
    /// Drop the cell's higher modes and keep its average.
    Flatten,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimiterConfig {
    pub floor: f64,
    pub enabled: bool,
    pub below_floor: BelowFloor,
    check_points: Vec<f64>,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        Self::with_floor(0.0)
    }
}

impl LimiterConfig {
    pub fn with_floor(floor: f64) -> Self {
        let mut pts = vec![-1.0];
        pts.extend(
            gauss_quadrature(NONLINEAR_QUAD_POINTS)
                .expect("supported rule")
                .nodes,
        );
        pts.push(1.0);
        LimiterConfig {
            floor,
            enabled: true,
            below_floor: BelowFloor::Abort,
            check_points: pts,
        }
    }

    pub fn with_below_floor(mut self, mode: BelowFloor) -> Self {
        self.below_floor = mode;
        self
    }

    pub fn disabled() -> Self {
        LimiterConfig {
            enabled: false,
            ..Self::default()
        }
    }

    /// Reference-cell points where positivity is enforced; both ends included.
    pub fn check_points(&self) -> &[f64] {
        &self.check_points
    }
}

/// Outcome of one limiter pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimiterStats {
    pub cells_limited: usize,
    pub min_theta: f64,
    /// Cells flattened because their average was below the floor.
    pub below_floor: usize,
    /// Smallest cell average seen.
    pub min_average: f64,
}

/// Evaluates the basis at the check points once per degree.
struct CheckTable {
    nb: usize,
    values: Vec<f64>,
}

impl CheckTable {
    fn new(points: &[f64], nb: usize) -> Self {
        let mut values = vec![0.0; points.len() * nb];
        let mut ders = vec![0.0; nb];
        for (i, &xi) in points.iter().enumerate() {
            legendre_with_derivatives(xi, &mut values[i * nb..(i + 1) * nb], &mut ders);
        }
        CheckTable { nb, values }
    }

    fn min(&self, c: &[f64]) -> f64 {
        self.values
            .chunks(self.nb)
            .map(|row| row.iter().zip(c).map(|(p, v)| p * v).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Roundoff allowance below the floor, relative to the largest cell average
/// `scale`. Averages inside it are not reported, a cell whose minimum is inside it
/// is not limited (so a second pass leaves it alone).
fn roundoff_tol(scale: f64) -> f64 {
    16.0 * f64::EPSILON * scale.max(1.0)
}

/// Limits `u` in place. A cell average below the floor is an error in
/// [`BelowFloor::Abort`] mode and flattens the cell otherwise.
pub fn apply_positivity(u: &mut DgFunction, cfg: &LimiterConfig) -> Result<LimiterStats> {
    let mut stats = LimiterStats {
        cells_limited: 0,
        min_theta: 1.0,
        below_floor: 0,
        min_average: f64::INFINITY,
    };
    if !cfg.enabled {
        return Ok(stats);
    }
    let scale = (0..u.n_cells()).fold(0f64, |m, j| m.max(u.cell(j)[0].abs()));
    let tol = roundoff_tol(scale);
    for j in 0..u.n_cells() {
        let avg = u.cell(j)[0];
        stats.min_average = stats.min_average.min(avg);
        if avg.is_nan() || (avg < cfg.floor - tol && cfg.below_floor == BelowFloor::Abort) {
            return Err(Error::NegativeAverage {
                cell: j,
                value: avg,
            });
        }
        if avg < cfg.floor - tol {
            stats.below_floor += 1;
        }
    }
    if u.degree() == 0 {
        return Ok(stats);
    }
    let table = CheckTable::new(&cfg.check_points, u.n_basis());
    for j in 0..u.n_cells() {
        let c = u.cell_mut(j);
        let avg = c[0];
        let m = table.min(c);
        if m >= cfg.floor - tol {
            continue;
        }
        let theta = ((avg - cfg.floor) / (avg - m)).clamp(0.0, 1.0);
        for v in c[1..].iter_mut() {
            *v *= theta;
        }
        stats.cells_limited += 1;
        stats.min_theta = stats.min_theta.min(theta);
    }
    Ok(stats)
}

/// Smallest value of `u` over all check points.
pub fn min_check_value(u: &DgFunction, cfg: &LimiterConfig) -> f64 {
    let table = CheckTable::new(&cfg.check_points, u.n_basis());
    (0..u.n_cells())
        .map(|j| table.min(u.cell(j)))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{l2_project, Boundary, Mesh1D};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn mesh(n: usize) -> Arc<Mesh1D> {
        Arc::new(
            Mesh1D::uniform(
                -1.0,
                1.0,
                n,
                Boundary::Dirichlet {
                    left: 0.0,
                    right: 0.0,
                },
            )
            .unwrap(),
        )
    }

    #[test]
    fn positive_data_untouched() {
        let mut u = l2_project(|x| 2.0 + x.sin(), &mesh(10), 2);
        let before = u.clone();
        let s = apply_positivity(&mut u, &LimiterConfig::default()).unwrap();
        assert_eq!(s.cells_limited, 0);
        assert_eq!(s.min_theta, 1.0);
        assert_eq!(u.coeffs(), before.coeffs());
    }

    #[test]
    fn hand_example_k1() {
        let mut u = DgFunction::from_coeffs(mesh(1), 1, vec![1.0, 2.0]).unwrap();
        let s = apply_positivity(&mut u, &LimiterConfig::default()).unwrap();
        assert_eq!(u.coeffs(), &[1.0, 1.0]);
        assert_eq!(s.min_theta, 0.5);
        assert_eq!(u.left_value(0), 0.0);
    }

    #[test]
    fn average_on_floor_zeroes_modes() {
        let mut u = DgFunction::from_coeffs(mesh(1), 2, vec![0.0, 0.3, -0.2]).unwrap();
        apply_positivity(&mut u, &LimiterConfig::default()).unwrap();
        assert_eq!(u.coeffs(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn negative_average_is_an_error() {
        let mut u = DgFunction::from_coeffs(mesh(2), 1, vec![1.0, 0.0, -0.5, 0.1]).unwrap();
        assert_eq!(
            apply_positivity(&mut u, &LimiterConfig::default()).unwrap_err(),
            Error::NegativeAverage {
                cell: 1,
                value: -0.5
            }
        );
    }

    #[test]
    fn disabled_is_a_no_op() {
        let mut u = DgFunction::from_coeffs(mesh(1), 1, vec![-1.0, 2.0]).unwrap();
        apply_positivity(&mut u, &LimiterConfig::disabled()).unwrap();
        assert_eq!(u.coeffs(), &[-1.0, 2.0]);
    }

    #[test]
    fn check_points_include_ends() {
        let cfg = LimiterConfig::default();
        let p = cfg.check_points();
        assert_eq!((p[0], p[p.len() - 1]), (-1.0, 1.0));
        assert_eq!(p.len(), NONLINEAR_QUAD_POINTS + 2);
    }

    proptest! {
        #[test]
        fn limiter_properties(
            k in 1usize..=3,
            raw in prop::collection::vec(-1.0f64..1.0, 32),
            floor in prop_oneof![Just(0.0), 0.0f64..0.2],
        ) {
            let n = 8;
            let nb = k + 1;
            let coeffs: Vec<f64> = (0..n * nb)
                .map(|i| if i % nb == 0 { floor + raw[i % 32].abs() } else { 2.0 * raw[(i * 7) % 32] })
                .collect();
            let mut u = DgFunction::from_coeffs(mesh(n), k, coeffs).unwrap();
            let cfg = LimiterConfig::with_floor(floor);
            let before = u.clone();
            apply_positivity(&mut u, &cfg).unwrap();
            for j in 0..n {
                prop_assert_eq!(u.cell(j)[0].to_bits(), before.cell(j)[0].to_bits());
            }
            prop_assert!(min_check_value(&u, &cfg) >= floor - 1e-14);
            prop_assert!(u.l2_norm_sq() <= before.l2_norm_sq() + 1e-15);
            let once = u.clone();
            apply_positivity(&mut u, &cfg).unwrap();
            prop_assert_eq!(u.coeffs(), once.coeffs());
        }
    }
}
