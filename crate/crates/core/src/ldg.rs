//! LDG spatial operators with alternating fluxes.
//!
//! All operators return `M^{-1}` applied to the weak form, i.e. a
//! [`DgFunction`] whose coefficients approximate the derivative they
//! discretize. Interior fluxes are always `u^ = u^-`, `q^ = q^+`,
//! `B^ = B(u^-)`, `p^ = p^+`. On Dirichlet meshes the boundary value enters
//! `u^` (and `B^`) at both ends while `q^`/`p^` take the interior trace.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{left_sign, stiffness_entry, Boundary, DgFunction, Mesh1D, RefElement, Side};

/// Relative jump below which `b^` is evaluated as a Gauss average of `b`
/// over the jump instead of the difference quotient.
pub const JUMP_TOL: f64 = 1e-3;

/// Interface coefficient `b^(u) = [B(u)]/[u]`.
///
/// For small jumps the quotient loses about `eps / [u]` relative accuracy, so
/// the equivalent mean `int_0^1 b(u^- + s[u]) ds` is taken by three-point
/// Gauss quadrature instead.
pub fn jump_ratio_flux(
    u_minus: f64,
    u_plus: f64,
    b: impl Fn(f64) -> f64,
    big_b: impl Fn(f64) -> f64,
    tol: f64,
) -> f64 {
    let jump = u_plus - u_minus;
    let scale = 1f64.max(u_minus.abs()).max(u_plus.abs());
    if jump.abs() > tol * scale {
        (big_b(u_plus) - big_b(u_minus)) / jump
    } else {
        let mid = 0.5 * (u_minus + u_plus);
        let off = 0.5 * jump * (0.6f64).sqrt();
        (5.0 * b(mid - off) + 8.0 * b(mid) + 5.0 * b(mid + off)) / 18.0
    }
}

/// Operator workspace for one mesh and degree.
#[derive(Debug, Clone)]
pub struct LdgOperators {
    mesh: Arc<Mesh1D>,
    degree: usize,
    re: RefElement,
}

impl LdgOperators {
    pub fn new(mesh: Arc<Mesh1D>, degree: usize) -> Self {
        Self {
            re: RefElement::nonlinear(degree),
            mesh,
            degree,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh1D> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ref_element(&self) -> &RefElement {
        &self.re
    }

    fn check(&self, u: &DgFunction) {
        debug_assert_eq!(u.degree(), self.degree);
        debug_assert_eq!(u.n_cells(), self.mesh.n_cells());
    }

    /// `out_{j,m} = (2m+1)/h_j [ -vol_{j,m} + F_{j+1} - (-1)^m F_j ]`.
    fn assemble(&self, vol: &[f64], flux: &[f64]) -> DgFunction {
        let nb = self.degree + 1;
        let mut out = DgFunction::zeros(Arc::clone(&self.mesh), self.degree);
        let c = out.coeffs_mut();
        for j in 0..self.mesh.n_cells() {
            let inv_h = 1.0 / self.mesh.width(j);
            let (fl, fr) = (flux[j], flux[j + 1]);
            for m in 0..nb {
                c[j * nb + m] =
                    (2 * m + 1) as f64 * inv_h * (-vol[j * nb + m] + fr - left_sign(m) * fl);
            }
        }
        out
    }

    /// Volume term `int u P_m' dxi` for a function already in `V_h`.
    fn linear_volume(&self, u: &DgFunction) -> Vec<f64> {
        let nb = self.degree + 1;
        let mut vol = vec![0.0; u.coeffs().len()];
        for j in 0..u.n_cells() {
            let c = u.cell(j);
            for m in 1..nb {
                vol[j * nb + m] = (0..m).map(|l| stiffness_entry(l, m) * c[l]).sum();
            }
        }
        vol
    }

    /// Volume term `int g(cell, xi) P_m' dxi` by quadrature.
    fn quad_volume(&self, g: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let nb = self.degree + 1;
        let n = self.mesh.n_cells();
        let mut vol = vec![0.0; n * nb];
        let w = &self.re.quad().weights;
        for j in 0..n {
            let v = &mut vol[j * nb..(j + 1) * nb];
            for (q, &wq) in w.iter().enumerate() {
                let gv = wq * g(j, q);
                for (vm, d) in v.iter_mut().zip(self.re.dphi(q)) {
                    *vm += gv * d;
                }
            }
        }
        vol
    }

    /// `u^ = u^-` at every interface, with boundary values on Dirichlet meshes.
    fn minus_flux(&self, u: &DgFunction, bc: Boundary, map: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = u.n_cells();
        let mut f = vec![0.0; n + 1];
        for (i, fi) in f.iter_mut().enumerate().take(n + 1).skip(1) {
            *fi = map(u.right_value(i - 1));
        }
        match bc {
            Boundary::Periodic => f[0] = f[n],
            Boundary::Dirichlet { left, right } => {
                f[0] = map(left);
                f[n] = map(right);
            }
        }
        f
    }

    /// `q^ = q^+`; the right Dirichlet boundary takes `q^-`.
    fn plus_flux(&self, q: &DgFunction, bc: Boundary) -> Vec<f64> {
        let n = q.n_cells();
        let mut f = vec![0.0; n + 1];
        for (i, fi) in f.iter_mut().enumerate().take(n) {
            *fi = q.left_value(i);
        }
        f[n] = match bc {
            Boundary::Periodic => f[0],
            Boundary::Dirichlet { .. } => q.right_value(n - 1),
        };
        f
    }

    /// Auxiliary derivative `q` with `(q, r) = K(u, r)`.
    pub fn op_k(&self, u: &DgFunction) -> DgFunction {
        self.op_k_with(u, self.mesh.boundary())
    }

    pub fn op_k_with(&self, u: &DgFunction, bc: Boundary) -> DgFunction {
        self.check(u);
        let vol = self.linear_volume(u);
        let flux = self.minus_flux(u, bc, |v| v);
        self.assemble(&vol, &flux)
    }

    /// Divergence `v` with `(v, w) = L(q, w)`.
    pub fn op_l(&self, q: &DgFunction) -> DgFunction {
        self.op_l_with(q, self.mesh.boundary())
    }

    pub fn op_l_with(&self, q: &DgFunction, bc: Boundary) -> DgFunction {
        self.check(q);
        let vol = self.linear_volume(q);
        let flux = self.plus_flux(q, bc);
        self.assemble(&vol, &flux)
    }

    /// `p` with `(p, w) = K~(B(u), w)`, `B^ = B(u^-)`.
    pub fn op_ktilde(&self, u: &DgFunction, big_b: impl Fn(f64) -> f64) -> DgFunction {
        self.op_ktilde_with(u, big_b, self.mesh.boundary())
    }

    pub fn op_ktilde_with(
        &self,
        u: &DgFunction,
        big_b: impl Fn(f64) -> f64,
        bc: Boundary,
    ) -> DgFunction {
        self.check(u);
        let vol = self.quad_volume(|j, q| big_b(self.re.eval_at_node(u.cell(j), q)));
        let flux = self.minus_flux(u, bc, &big_b);
        self.assemble(&vol, &flux)
    }

    /// Nonlinear divergence with `(v, w) = L~(b(u) p, w)` and interface
    /// coefficient [`jump_ratio_flux`].
    pub fn op_ltilde(
        &self,
        u: &DgFunction,
        p: &DgFunction,
        b: impl Fn(f64) -> f64,
        big_b: impl Fn(f64) -> f64,
    ) -> DgFunction {
        self.op_ltilde_with(u, p, b, big_b, self.mesh.boundary())
    }

    pub fn op_ltilde_with(
        &self,
        u: &DgFunction,
        p: &DgFunction,
        b: impl Fn(f64) -> f64,
        big_b: impl Fn(f64) -> f64,
        bc: Boundary,
    ) -> DgFunction {
        self.check(u);
        self.check(p);
        let n = u.n_cells();
        let vol = self.quad_volume(|j, q| {
            b(self.re.eval_at_node(u.cell(j), q)) * self.re.eval_at_node(p.cell(j), q)
        });
        let p_hat = self.plus_flux(p, bc);
        let mut flux = vec![0.0; n + 1];
        for i in 1..n {
            let bh = jump_ratio_flux(u.right_value(i - 1), u.left_value(i), &b, &big_b, JUMP_TOL);
            flux[i] = bh * p_hat[i];
        }
        match bc {
            Boundary::Periodic => {
                let bh =
                    jump_ratio_flux(u.right_value(n - 1), u.left_value(0), &b, &big_b, JUMP_TOL);
                flux[0] = bh * p_hat[0];
                flux[n] = flux[0];
            }
            Boundary::Dirichlet { left, right } => {
                let bl = jump_ratio_flux(left, u.left_value(0), &b, &big_b, JUMP_TOL);
                let br = jump_ratio_flux(u.right_value(n - 1), right, &b, &big_b, JUMP_TOL);
                flux[0] = bl * p_hat[0];
                flux[n] = br * p_hat[n];
            }
        }
        self.assemble(&vol, &flux)
    }

    /// `(a(x) u_x)_x` for a coefficient sampled cell-locally as `a(cell, xi)`:
    /// `q = K(u)`, `sigma = P_h(a q)`, result `L(sigma)`.
    pub fn op_space_diffusion(
        &self,
        u: &DgFunction,
        a: impl Fn(usize, f64) -> f64,
        bc: Boundary,
    ) -> DgFunction {
        let q = self.op_k_with(u, bc);
        let sigma = self.project_product(&q, |j, q_idx| a(j, self.re.quad().nodes[q_idx]));
        self.op_l_with(&sigma, bc)
    }

    /// L2 projection of `g(cell, node) * w(x)`.
    fn project_product(&self, w: &DgFunction, g: impl Fn(usize, usize) -> f64) -> DgFunction {
        let nb = self.degree + 1;
        let mut out = DgFunction::zeros(Arc::clone(&self.mesh), self.degree);
        let weights = &self.re.quad().weights;
        for j in 0..self.mesh.n_cells() {
            let wc = w.cell(j);
            let c = out.cell_mut(j);
            for (q, &wq) in weights.iter().enumerate() {
                let v = wq * g(j, q) * self.re.eval_at_node(wc, q);
                for (cm, p) in c.iter_mut().zip(self.re.phi(q)) {
                    *cm += v * p;
                }
            }
            for (m, cm) in c.iter_mut().enumerate().take(nb) {
                *cm *= (2 * m + 1) as f64 / 2.0;
            }
        }
        out
    }

    /// Weak divergence of a convective flux `f(cell, xi, n)` with the global
    /// Lax–Friedrichs interface flux `(f(n^-) + f(n^+))/2 - alpha (n^+ - n^-)/2`.
    /// Approximates `f(n)_x`.
    pub fn op_convection(
        &self,
        n_h: &DgFunction,
        flux: impl Fn(usize, f64, f64) -> f64,
        alpha: f64,
        bc: Boundary,
    ) -> DgFunction {
        self.check(n_h);
        let n = n_h.n_cells();
        let nodes = &self.re.quad().nodes;
        let vol = self.quad_volume(|j, q| flux(j, nodes[q], self.re.eval_at_node(n_h.cell(j), q)));
        let lf = |jm: usize, um: f64, jp: usize, up: f64| {
            0.5 * (flux(jm, 1.0, um) + flux(jp, -1.0, up)) - 0.5 * alpha * (up - um)
        };
        let mut f = vec![0.0; n + 1];
        for (i, fi) in f.iter_mut().enumerate().take(n).skip(1) {
            *fi = lf(i - 1, n_h.right_value(i - 1), i, n_h.left_value(i));
        }
        match bc {
            Boundary::Periodic => {
                f[0] = lf(n - 1, n_h.right_value(n - 1), 0, n_h.left_value(0));
                f[n] = f[0];
            }
            Boundary::Dirichlet { left, right } => {
                let (ul, ur) = (n_h.left_value(0), n_h.right_value(n - 1));
                f[0] = 0.5 * (flux(0, -1.0, left) + flux(0, -1.0, ul)) - 0.5 * alpha * (ul - left);
                f[n] = 0.5 * (flux(n - 1, 1.0, ur) + flux(n - 1, 1.0, right))
                    - 0.5 * alpha * (right - ur);
            }
        }
        self.assemble(&vol, &f)
    }

    /// `max |df/dn|` over quadrature nodes and both cell-edge traces.
    /// Without `dflux`, a central difference of `flux` is used.
    pub fn max_flux_slope(
        &self,
        n_h: &DgFunction,
        flux: impl Fn(usize, f64, f64) -> f64,
        dflux: Option<&dyn Fn(usize, f64, f64) -> f64>,
    ) -> f64 {
        let slope = |j: usize, xi: f64, v: f64| match dflux {
            Some(d) => d(j, xi, v).abs(),
            None => {
                let eps = 1e-7 * v.abs().max(1.0);
                ((flux(j, xi, v + eps) - flux(j, xi, v - eps)) / (2.0 * eps)).abs()
            }
        };
        let nodes = &self.re.quad().nodes;
        let mut m: f64 = 0.0;
        for j in 0..n_h.n_cells() {
            let c = n_h.cell(j);
            for (q, &xi) in nodes.iter().enumerate() {
                m = m.max(slope(j, xi, self.re.eval_at_node(c, q)));
            }
            m = m.max(slope(j, -1.0, n_h.left_value(j)));
            m = m.max(slope(j, 1.0, n_h.right_value(j)));
        }
        m
    }

    /// `M` times a function: coefficient-wise mass weights.
    pub fn mass_times(&self, u: &DgFunction) -> Vec<f64> {
        let nb = self.degree + 1;
        let mut out = u.coeffs().to_vec();
        for j in 0..u.n_cells() {
            let h = self.mesh.width(j);
            for m in 0..nb {
                out[j * nb + m] *= h / (2 * m + 1) as f64;
            }
        }
        out
    }
}

/// Free-function forms using the mesh's own boundary data.
pub fn op_k(u: &DgFunction) -> DgFunction {
    LdgOperators::new(Arc::clone(u.mesh()), u.degree()).op_k(u)
}

pub fn op_l(q: &DgFunction) -> DgFunction {
    LdgOperators::new(Arc::clone(q.mesh()), q.degree()).op_l(q)
}

pub fn op_ktilde(u: &DgFunction, big_b: impl Fn(f64) -> f64) -> DgFunction {
    LdgOperators::new(Arc::clone(u.mesh()), u.degree()).op_ktilde(u, big_b)
}

pub fn op_ltilde(
    u: &DgFunction,
    p: &DgFunction,
    b: impl Fn(f64) -> f64,
    big_b: impl Fn(f64) -> f64,
) -> DgFunction {
    LdgOperators::new(Arc::clone(u.mesh()), u.degree()).op_ltilde(u, p, b, big_b)
}

pub fn op_convection(
    n_h: &DgFunction,
    flux: impl Fn(usize, f64, f64) -> f64,
    alpha: f64,
) -> DgFunction {
    let ops = LdgOperators::new(Arc::clone(n_h.mesh()), n_h.degree());
    ops.op_convection(n_h, flux, alpha, n_h.mesh().boundary())
}

/// Block-tridiagonal matrix of `u -> L(K(u))` with homogeneous boundary
/// data; cyclic (corner blocks) on periodic meshes.
#[derive(Debug, Clone)]
pub struct DiscreteLaplacian {
    n_cells: usize,
    block: usize,
    periodic: bool,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, accumulate: bool) {
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..n).map(|l| a[i * n + l] * b[l * n + j]).sum();
            if accumulate {
                out[i * n + j] += s;
            } else {
                out[i * n + j] = s;
            }
        }
    }
}

pub fn assemble_discrete_laplacian(mesh: &Mesh1D, k: usize) -> DiscreteLaplacian {
    let n = mesh.n_cells();
    let bs = k + 1;
    let bb = bs * bs;
    let periodic = mesh.is_periodic();
    // K = Kd_j u_j + Kl_j u_{j-1};  L = Ld_j q_j + Lu_j q_{j+1}
    let mut kd = vec![0.0; n * bb];
    let mut kl = vec![0.0; n * bb];
    let mut ld = vec![0.0; n * bb];
    let mut lu = vec![0.0; n * bb];
    for j in 0..n {
        let inv_h = 1.0 / mesh.width(j);
        let last = j == n - 1;
        for m in 0..bs {
            let s = (2 * m + 1) as f64 * inv_h;
            for l in 0..bs {
                let own_right = if periodic || !last { 1.0 } else { 0.0 };
                kd[j * bb + m * bs + l] = s * (-stiffness_entry(l, m) + own_right);
                if periodic || j > 0 {
                    kl[j * bb + m * bs + l] = -s * left_sign(m);
                }
                let q_minus_right = if !periodic && last { 1.0 } else { 0.0 };
                ld[j * bb + m * bs + l] =
                    s * (-stiffness_entry(l, m) - left_sign(m) * left_sign(l) + q_minus_right);
                if periodic || !last {
                    lu[j * bb + m * bs + l] = s * left_sign(l);
                }
            }
        }
    }
    let mut lower = vec![0.0; n * bb];
    let mut diag = vec![0.0; n * bb];
    let mut upper = vec![0.0; n * bb];
    for j in 0..n {
        let r = j * bb..(j + 1) * bb;
        let jn = (j + 1) % n;
        matmul_into(
            &ld[r.clone()],
            &kl[r.clone()],
            &mut lower[r.clone()],
            bs,
            false,
        );
        matmul_into(
            &ld[r.clone()],
            &kd[r.clone()],
            &mut diag[r.clone()],
            bs,
            false,
        );
        if periodic || j + 1 < n {
            let rn = jn * bb..(jn + 1) * bb;
            matmul_into(
                &lu[r.clone()],
                &kl[rn.clone()],
                &mut diag[r.clone()],
                bs,
                true,
            );
            matmul_into(&lu[r.clone()], &kd[rn], &mut upper[r.clone()], bs, false);
        }
    }
    DiscreteLaplacian {
        n_cells: n,
        block: bs,
        periodic,
        lower,
        diag,
        upper,
    }
}

impl DiscreteLaplacian {
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn dim(&self) -> usize {
        self.n_cells * self.block
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Block coupling row-block `j` to column-block `j-1`, `j`, `j+1` (`offset = -1, 0, 1`).
    pub fn block(&self, j: usize, offset: i32) -> &[f64] {
        let bb = self.block * self.block;
        let src = match offset {
            -1 => &self.lower,
            0 => &self.diag,
            1 => &self.upper,
            _ => panic!("block offset must be -1, 0 or 1"),
        };
        &src[j * bb..(j + 1) * bb]
    }

    /// `y = D x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y)?;
        Ok(y)
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let n = self.n_cells;
        let bs = self.block;
        if x.len() != self.dim() || y.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: x.len().min(y.len()),
            });
        }
        for j in 0..n {
            let jl = (j + n - 1) % n;
            let jr = (j + 1) % n;
            let has_l = self.periodic || j > 0;
            let has_r = self.periodic || j + 1 < n;
            for m in 0..bs {
                let mut s = 0.0;
                let row = m * bs;
                let bd = self.block(j, 0);
                for l in 0..bs {
                    s += bd[row + l] * x[j * bs + l];
                }
                if has_l {
                    let b = self.block(j, -1);
                    for l in 0..bs {
                        s += b[row + l] * x[jl * bs + l];
                    }
                }
                if has_r {
                    let b = self.block(j, 1);
                    for l in 0..bs {
                        s += b[row + l] * x[jr * bs + l];
                    }
                }
                y[j * bs + m] = s;
            }
        }
        Ok(())
    }

    /// Dense row-major copy (corner blocks included; coinciding blocks summed).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n_cells;
        let bs = self.block;
        let dim = self.dim();
        let mut a = vec![0.0; dim * dim];
        for j in 0..n {
            let cols = [
                ((j + n - 1) % n, -1, self.periodic || j > 0),
                (j, 0, true),
                ((j + 1) % n, 1, self.periodic || j + 1 < n),
            ];
            for &(c, off, present) in &cols {
                if !present {
                    continue;
                }
                let b = self.block(j, off);
                for m in 0..bs {
                    for l in 0..bs {
                        a[(j * bs + m) * dim + c * bs + l] += b[m * bs + l];
                    }
                }
            }
        }
        a
    }
}

/// Convenience: `L(K(u))` matrix-free with homogeneous boundary data.
pub fn laplacian_matrix_free(ops: &LdgOperators, u: &DgFunction) -> DgFunction {
    let bc = homogeneous(ops.mesh().boundary());
    ops.op_l_with(&ops.op_k_with(u, bc), bc)
}

/// The boundary tag with zero Dirichlet data.
pub fn homogeneous(bc: Boundary) -> Boundary {
    match bc {
        Boundary::Periodic => Boundary::Periodic,
        Boundary::Dirichlet { .. } => Boundary::Dirichlet {
            left: 0.0,
            right: 0.0,
        },
    }
}

/// Trace helper exposed for diagnostics.
pub fn trace_pair(u: &DgFunction, interface: usize) -> Result<(f64, f64)> {
    Ok((
        u.trace(interface, Side::Minus)?,
        u.trace(interface, Side::Plus)?,
    ))
}
