//! LDG solver for `phi_xx = s` on an interval with Dirichlet data, written as
//! the first-order system `psi = phi_x`, `psi_x = s`.
//!
//! Fluxes: `phi^` is `phi_a` at the left end, `phi^-` inside and `phi_b` at
//! the right end; `psi^` is `psi^+` except at the right end, where it takes
//! `psi^- - (phi^- - phi_b) / h`. The coupled system is factored once.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{left_sign, stiffness_entry, DgFunction, Mesh1D};
use crate::implicit_solver::BandedLu;

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub phi: DgFunction,
    pub psi: DgFunction,
    /// `E = -psi`.
    pub field: DgFunction,
}

/// Factored LDG Poisson system. Unknowns are interleaved per cell as
/// `[phi_0..=k, psi_0..=k]`.
#[derive(Debug, Clone)]
pub struct PoissonSystem {
    mesh: Arc<Mesh1D>,
    degree: usize,
    penalty: f64,
    rows: Vec<Vec<(usize, f64)>>,
    lu: BandedLu,
}

impl PoissonSystem {
    pub fn new(mesh: Arc<Mesh1D>, degree: usize) -> Result<Self> {
        let n = mesh.n_cells();
        let nb = degree + 1;
        let bs = 2 * nb;
        let dim = n * bs;
        let penalty = 1.0 / mesh.width(n - 1);
        let phi = |j: usize, l: usize| j * bs + l;
        let psi = |j: usize, l: usize| j * bs + nb + l;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for j in 0..n {
            let h = mesh.width(j);
            for m in 0..nb {
                let sm = left_sign(m);
                // (psi, r) + (phi, r_x) - phi^_{j+1/2} + (-1)^m phi^_{j-1/2} = boundary data
                let r = &mut rows[phi(j, m)];
                r.push((psi(j, m), h / (2 * m + 1) as f64));
                for l in 0..nb {
                    r.push((phi(j, l), stiffness_entry(l, m)));
                    if j + 1 < n {
                        r.push((phi(j, l), -1.0));
                    }
                    if j > 0 {
                        r.push((phi(j - 1, l), sm));
                    }
                }
                // -(psi, v_x) + psi^_{j+1/2} - (-1)^m psi^_{j-1/2} = (s, v)
                let r = &mut rows[psi(j, m)];
                for l in 0..nb {
                    let sl = left_sign(l);
                    r.push((psi(j, l), -stiffness_entry(l, m)));
                    if j + 1 < n {
                        r.push((psi(j + 1, l), sl));
                    } else {
                        r.push((psi(j, l), 1.0));
                        r.push((phi(j, l), -penalty));
                    }
                    r.push((psi(j, l), -sm * sl));
                }
            }
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
            r.dedup_by(|a, b| {
                if a.0 == b.0 {
                    b.1 += a.1;
                    true
                } else {
                    false
                }
            });
        }
        let band = 2 * bs - 1;
        let lu = BandedLu::factor(dim, band, band, |i, c| {
            rows[i].iter().find(|e| e.0 == c).map_or(0.0, |e| e.1)
        })?;
        Ok(PoissonSystem {
            mesh,
            degree,
            penalty,
            rows,
            lu,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh1D> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn rhs(&self, source: &DgFunction, phi_a: f64, phi_b: f64) -> Vec<f64> {
        let n = self.mesh.n_cells();
        let nb = self.degree + 1;
        let bs = 2 * nb;
        let mut b = vec![0.0; n * bs];
        for j in 0..n {
            let h = self.mesh.width(j);
            let s = source.cell(j);
            for m in 0..nb {
                let sm = left_sign(m);
                let mut v = 0.0;
                if j == 0 {
                    v -= sm * phi_a;
                }
                if j + 1 == n {
                    v += phi_b;
                }
                b[j * bs + m] = v;
                let mut w = h / (2 * m + 1) as f64 * s[m];
                if j + 1 == n {
                    w -= self.penalty * phi_b;
                }
                b[j * bs + nb + m] = w;
            }
        }
        b
    }

    /// Solves with source `s` (given in `V_h`) and boundary values.
    pub fn solve(&self, source: &DgFunction, phi_a: f64, phi_b: f64) -> Result<PoissonSolution> {
        if source.degree() != self.degree || source.n_cells() != self.mesh.n_cells() {
            return Err(Error::Mismatch);
        }
        let mut x = self.rhs(source, phi_a, phi_b);
        self.lu.solve_in_place(&mut x);
        let n = self.mesh.n_cells();
        let nb = self.degree + 1;
        let mut phi = Vec::with_capacity(n * nb);
        let mut psi = Vec::with_capacity(n * nb);
        for c in x.chunks(2 * nb) {
            phi.extend_from_slice(&c[..nb]);
            psi.extend_from_slice(&c[nb..]);
        }
        let field: Vec<f64> = psi.iter().map(|v| -v).collect();
        let mk = |c| DgFunction::from_coeffs(Arc::clone(&self.mesh), self.degree, c);
        Ok(PoissonSolution {
            phi: mk(phi)?,
            psi: mk(psi)?,
            field: mk(field)?,
        })
    }

    /// Max-norm residual of both discrete equations for every basis test function.
    pub fn residual(
        &self,
        sol: &PoissonSolution,
        source: &DgFunction,
        phi_a: f64,
        phi_b: f64,
    ) -> f64 {
        let nb = self.degree + 1;
        let mut x = Vec::with_capacity(self.rows.len());
        for j in 0..self.mesh.n_cells() {
            x.extend_from_slice(sol.phi.cell(j));
            x.extend_from_slice(sol.psi.cell(j));
        }
        debug_assert_eq!(x.len(), self.mesh.n_cells() * 2 * nb);
        let b = self.rhs(source, phi_a, phi_b);
        self.rows
            .iter()
            .zip(&b)
            .map(|(r, bi)| (r.iter().map(|&(c, v)| v * x[c]).sum::<f64>() - bi).abs())
            .fold(0.0, f64::max)
    }
}

/// One-shot convenience wrapper.
pub fn solve_poisson(source: &DgFunction, phi_a: f64, phi_b: f64) -> Result<PoissonSolution> {
    PoissonSystem::new(Arc::clone(source.mesh()), source.degree())?.solve(source, phi_a, phi_b)
}
