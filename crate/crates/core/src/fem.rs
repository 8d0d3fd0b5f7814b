//! Mesh, modal Legendre basis, quadrature, projections and norms.
//!
//! Every cell `I_j = (x_{j-1/2}, x_{j+1/2})` is mapped affinely onto the
//! reference element `[-1, 1]`. A [`DgFunction`] stores, per cell, the
//! coefficients of the unnormalized Legendre polynomials `P_0..P_k`, so the
//! mass matrix is diagonal with entries `h_j / (2m + 1)` and coefficient 0 is
//! the cell average.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Gauss points used for nonlinear integrands and error norms.
pub const NONLINEAR_QUAD_POINTS: usize = 10;

/// Evaluates the Legendre polynomial `P_m(xi)` by the three-term recurrence.
pub fn legendre_eval(m: usize, xi: f64) -> f64 {
    match m {
        0 => 1.0,
        1 => xi,
        _ => {
            let (mut p0, mut p1) = (1.0, xi);
            for n in 1..m {
                let nf = n as f64;
                let p2 = ((2.0 * nf + 1.0) * xi * p1 - nf * p0) / (nf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Fills `vals[m] = P_m(xi)` and `ders[m] = P_m'(xi)` for `m = 0..vals.len()`.
pub fn legendre_with_derivatives(xi: f64, vals: &mut [f64], ders: &mut [f64]) {
    let n = vals.len();
    debug_assert_eq!(n, ders.len());
    if n == 0 {
        return;
    }
    vals[0] = 1.0;
    ders[0] = 0.0;
    if n > 1 {
        vals[1] = xi;
        ders[1] = 1.0;
    }
    for m in 2..n {
        let mf = (m - 1) as f64;
        vals[m] = ((2.0 * mf + 1.0) * xi * vals[m - 1] - mf * vals[m - 2]) / (mf + 1.0);
        // P'_m = P'_{m-2} + (2m - 1) P_{m-1}
        ders[m] = ders[m - 2] + (2.0 * mf + 1.0) * vals[m - 1];
    }
}

/// Value of `P_m` at the reference endpoint `-1`.
#[inline]
pub fn left_sign(m: usize) -> f64 {
    if m.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over the reference element.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Gauss–Legendre rule with `n_points` nodes on `[-1, 1]`.
pub fn gauss_quadrature(n_points: usize) -> Result<QuadratureRule> {
    if !(1..=20).contains(&n_points) {
        return Err(Error::QuadratureRange(n_points));
    }
    let n = n_points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        dp = if d.is_finite() { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut vals = vec![0.0; n + 1];
    let mut ders = vec![0.0; n + 1];
    legendre_with_derivatives(x, &mut vals, &mut ders);
    (vals[n], ders[n])
}

/// Boundary treatment of a mesh. Dirichlet values are constant in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Periodic,
    Dirichlet { left: f64, right: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    edges: Vec<f64>,
    boundary: Boundary,
}

impl Mesh1D {
    pub fn new(edges: Vec<f64>, boundary: Boundary) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidMesh("need at least one cell".into()));
        }
        if edges.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMesh("non-finite cell edge".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidMesh(
                "cell edges must be strictly increasing".into(),
            ));
        }
        Ok(Self { edges, boundary })
    }

    pub fn uniform(left: f64, right: f64, cells: usize, boundary: Boundary) -> Result<Self> {
        if cells == 0 || !(right > left) {
            return Err(Error::InvalidMesh(format!(
                "cannot build {cells} cells on [{left}, {right}]"
            )));
        }
        let h = (right - left) / cells as f64;
        let mut edges: Vec<f64> = (0..=cells).map(|i| left + h * i as f64).collect();
        edges[cells] = right;
        Self::new(edges, boundary)
    }

    pub fn n_cells(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn left(&self) -> f64 {
        self.edges[0]
    }

    pub fn right(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.boundary, Boundary::Periodic)
    }

    /// Same cells, different boundary tag.
    pub fn with_boundary(&self, boundary: Boundary) -> Self {
        Self {
            edges: self.edges.clone(),
            boundary,
        }
    }

    pub fn width(&self, j: usize) -> f64 {
        self.edges[j + 1] - self.edges[j]
    }

    pub fn max_width(&self) -> f64 {
        (0..self.n_cells())
            .map(|j| self.width(j))
            .fold(0.0, f64::max)
    }

    pub fn center(&self, j: usize) -> f64 {
        0.5 * (self.edges[j] + self.edges[j + 1])
    }

    /// Physical coordinate of reference point `xi` in cell `j`.
    #[inline]
    pub fn map(&self, j: usize, xi: f64) -> f64 {
        self.center(j) + 0.5 * self.width(j) * xi
    }

    /// Cell containing `x` (right-continuous; the right endpoint belongs to the last cell).
    pub fn locate(&self, x: f64) -> Option<usize> {
        if x < self.left() || x > self.right() {
            return None;
        }
        let idx = self.edges.partition_point(|&e| e <= x);
        Some(idx.saturating_sub(1).min(self.n_cells() - 1))
    }
}

/// Basis values tabulated at the nodes of a quadrature rule.
#[derive(Debug, Clone)]
pub struct RefElement {
    degree: usize,
    quad: QuadratureRule,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

impl RefElement {
    pub fn new(degree: usize, n_points: usize) -> Result<Self> {
        let quad = gauss_quadrature(n_points)?;
        let nb = degree + 1;
        let mut phi = vec![0.0; quad.len() * nb];
        let mut dphi = vec![0.0; quad.len() * nb];
        for (q, &xi) in quad.nodes.iter().enumerate() {
            legendre_with_derivatives(
                xi,
                &mut phi[q * nb..(q + 1) * nb],
                &mut dphi[q * nb..(q + 1) * nb],
            );
        }
        Ok(Self {
            degree,
            quad,
            phi,
            dphi,
        })
    }

    /// Tabulation with [`NONLINEAR_QUAD_POINTS`] nodes (or more for very high degree).
    pub fn nonlinear(degree: usize) -> Self {
        Self::new(degree, NONLINEAR_QUAD_POINTS.max(degree + 2))
            .expect("degree too high for tabulated quadrature")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn quad(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn n_points(&self) -> usize {
        self.quad.len()
    }

    #[inline]
    pub fn phi(&self, q: usize) -> &[f64] {
        let nb = self.degree + 1;
        &self.phi[q * nb..(q + 1) * nb]
    }

    #[inline]
    pub fn dphi(&self, q: usize) -> &[f64] {
        let nb = self.degree + 1;
        &self.dphi[q * nb..(q + 1) * nb]
    }

    /// Value at node `q` of the polynomial with modal coefficients `c`.
    #[inline]
    pub fn eval_at_node(&self, c: &[f64], q: usize) -> f64 {
        self.phi(q).iter().zip(c).map(|(p, c)| p * c).sum()
    }
}

/// `int_{-1}^{1} P_l P_m' dxi` in closed form: 2 when `l < m` and `m - l` is odd.
#[inline]
pub fn stiffness_entry(l: usize, m: usize) -> f64 {
    if l < m && (m - l) % 2 == 1 {
        2.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

/// Piecewise polynomial of degree `k` on a [`Mesh1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct DgFunction {
    mesh: Arc<Mesh1D>,
    degree: usize,
    coeffs: Vec<f64>,
}

impl DgFunction {
    pub fn zeros(mesh: Arc<Mesh1D>, degree: usize) -> Self {
        let n = mesh.n_cells() * (degree + 1);
        Self {
            mesh,
            degree,
            coeffs: vec![0.0; n],
        }
    }

    pub fn from_coeffs(mesh: Arc<Mesh1D>, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        let expected = mesh.n_cells() * (degree + 1);
        if coeffs.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        Ok(Self {
            mesh,
            degree,
            coeffs,
        })
    }

    /// Same mesh and degree, new coefficients (length checked in debug builds).
    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(coeffs.len(), self.coeffs.len());
        Self {
            mesh: Arc::clone(&self.mesh),
            degree: self.degree,
            coeffs,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh1D> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_basis(&self) -> usize {
        self.degree + 1
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn cell(&self, j: usize) -> &[f64] {
        let nb = self.degree + 1;
        &self.coeffs[j * nb..(j + 1) * nb]
    }

    pub fn cell_mut(&mut self, j: usize) -> &mut [f64] {
        let nb = self.degree + 1;
        &mut self.coeffs[j * nb..(j + 1) * nb]
    }

    pub fn same_space(&self, other: &DgFunction) -> bool {
        self.degree == other.degree
            && (Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh)
    }

    /// Value at reference point `xi` of cell `j`.
    pub fn eval_ref(&self, j: usize, xi: f64) -> f64 {
        let c = self.cell(j);
        match self.degree {
            0 => c[0],
            1 => c[0] + c[1] * xi,
            2 => c[0] + c[1] * xi + c[2] * 0.5 * (3.0 * xi * xi - 1.0),
            _ => c
                .iter()
                .enumerate()
                .map(|(m, &cm)| cm * legendre_eval(m, xi))
                .sum(),
        }
    }

    /// Value at physical point `x` (right-continuous inside the domain).
    pub fn eval(&self, x: f64) -> Option<f64> {
        let j = self.mesh.locate(x)?;
        let xi = (2.0 * (x - self.mesh.center(j)) / self.mesh.width(j)).clamp(-1.0, 1.0);
        Some(self.eval_ref(j, xi))
    }

    pub fn average(&self, j: usize) -> f64 {
        self.coeffs[j * (self.degree + 1)]
    }

    /// Value at the right end of cell `j`.
    pub fn right_value(&self, j: usize) -> f64 {
        self.cell(j).iter().sum()
    }

    /// Value at the left end of cell `j`.
    pub fn left_value(&self, j: usize) -> f64 {
        self.cell(j)
            .iter()
            .enumerate()
            .map(|(m, &c)| left_sign(m) * c)
            .sum()
    }

    /// One-sided value at interface `i` (`x_{i}` in 0-based edge numbering).
    pub fn trace(&self, interface: usize, side: Side) -> Result<f64> {
        let n = self.n_cells();
        if interface > n {
            return Err(Error::InvalidMesh(format!(
                "interface {interface} out of range 0..={n}"
            )));
        }
        let periodic = self.mesh.is_periodic();
        match side {
            Side::Minus => {
                if interface == 0 {
                    if periodic {
                        Ok(self.right_value(n - 1))
                    } else {
                        Err(Error::BoundaryTrace {
                            interface,
                            side: "minus",
                        })
                    }
                } else {
                    Ok(self.right_value(interface - 1))
                }
            }
            Side::Plus => {
                if interface == n {
                    if periodic {
                        Ok(self.left_value(0))
                    } else {
                        Err(Error::BoundaryTrace {
                            interface,
                            side: "plus",
                        })
                    }
                } else {
                    Ok(self.left_value(interface))
                }
            }
        }
    }

    /// `u^+ - u^-` at interface `i`.
    pub fn jump(&self, interface: usize) -> Result<f64> {
        Ok(self.trace(interface, Side::Plus)? - self.trace(interface, Side::Minus)?)
    }

    /// `int u dx`.
    pub fn total_mass(&self) -> f64 {
        (0..self.n_cells())
            .map(|j| self.mesh.width(j) * self.average(j))
            .sum()
    }

    /// Squared L2 norm from the diagonal mass matrix.
    pub fn l2_norm_sq(&self) -> f64 {
        let nb = self.degree + 1;
        let mut s = 0.0;
        for j in 0..self.n_cells() {
            let h = self.mesh.width(j);
            for (m, c) in self.coeffs[j * nb..(j + 1) * nb].iter().enumerate() {
                s += h / (2 * m + 1) as f64 * c * c;
            }
        }
        s
    }

    /// L2 inner product `(u, v)`.
    pub fn inner(&self, other: &DgFunction) -> Result<f64> {
        if !self.same_space(other) {
            return Err(Error::Mismatch);
        }
        let nb = self.degree + 1;
        let mut s = 0.0;
        for j in 0..self.n_cells() {
            let h = self.mesh.width(j);
            for m in 0..nb {
                s += h / (2 * m + 1) as f64 * self.coeffs[j * nb + m] * other.coeffs[j * nb + m];
            }
        }
        Ok(s)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// Diagonal mass-matrix weight of mode `m` on a cell of width `h`.
#[inline]
pub fn mass_weight(h: f64, m: usize) -> f64 {
    h / (2 * m + 1) as f64
}

/// L2 projection onto piecewise polynomials of degree `k`.
pub fn l2_project(f: impl Fn(f64) -> f64, mesh: &Arc<Mesh1D>, k: usize) -> DgFunction {
    let re = RefElement::nonlinear(k);
    l2_project_with(&re, |j, xi| f(mesh.map(j, xi)), mesh)
}

/// L2 projection of a cell-local integrand `g(cell, xi)` with a prepared tabulation.
pub fn l2_project_with(
    re: &RefElement,
    g: impl Fn(usize, f64) -> f64,
    mesh: &Arc<Mesh1D>,
) -> DgFunction {
    let k = re.degree();
    let nb = k + 1;
    let mut out = DgFunction::zeros(Arc::clone(mesh), k);
    let quad = re.quad();
    for j in 0..mesh.n_cells() {
        let c = out.cell_mut(j);
        for (q, (&xi, &w)) in quad.nodes.iter().zip(&quad.weights).enumerate() {
            let gv = g(j, xi) * w;
            for (m, p) in re.phi(q).iter().enumerate() {
                c[m] += gv * p;
            }
        }
        for (m, cm) in c.iter_mut().enumerate().take(nb) {
            *cm *= (2 * m + 1) as f64 / 2.0;
        }
    }
    out
}

/// Gauss–Radau projection: moments up to degree `k-1` plus exact collocation
/// at the right (`Minus`) or left (`Plus`) end of every cell.
pub fn gauss_radau_project(
    f: impl Fn(f64) -> f64,
    mesh: &Arc<Mesh1D>,
    k: usize,
    side: Side,
) -> DgFunction {
    let re = RefElement::nonlinear(k);
    let quad = re.quad();
    let mut out = DgFunction::zeros(Arc::clone(mesh), k);
    for j in 0..mesh.n_cells() {
        let c = out.cell_mut(j);
        for (q, (&xi, &w)) in quad.nodes.iter().zip(&quad.weights).enumerate() {
            let fv = f(mesh.map(j, xi)) * w;
            for (cm, p) in c[..k].iter_mut().zip(re.phi(q)) {
                *cm += fv * p;
            }
        }
        for (m, cm) in c.iter_mut().enumerate().take(k) {
            *cm *= (2 * m + 1) as f64 / 2.0;
        }
        match side {
            Side::Minus => {
                let target = f(mesh.edges()[j + 1]);
                let partial: f64 = c[..k].iter().sum();
                c[k] = target - partial;
            }
            Side::Plus => {
                let target = f(mesh.edges()[j]);
                let partial: f64 = c[..k]
                    .iter()
                    .enumerate()
                    .map(|(m, &v)| left_sign(m) * v)
                    .sum();
                c[k] = left_sign(k) * (target - partial);
            }
        }
    }
    out
}

pub fn l2_norm(u: &DgFunction) -> f64 {
    u.l2_norm_sq().sqrt()
}

/// `|| u - exact(., t) ||_{L2}` by Gauss quadrature on every cell.
pub fn l2_error(u: &DgFunction, exact: impl Fn(f64, f64) -> f64, t: f64) -> f64 {
    let re = RefElement::nonlinear(u.degree());
    let mesh = u.mesh();
    let mut s = 0.0;
    for j in 0..u.n_cells() {
        let h = mesh.width(j);
        let c = u.cell(j);
        for (q, (&xi, &w)) in re.quad().nodes.iter().zip(&re.quad().weights).enumerate() {
            let e = re.eval_at_node(c, q) - exact(mesh.map(j, xi), t);
            s += 0.5 * h * w * e * e;
        }
    }
    s.sqrt()
}

/// `|| u - exact(., t) ||_{L1}` by Gauss quadrature on every cell.
pub fn l1_error(u: &DgFunction, exact: impl Fn(f64, f64) -> f64, t: f64) -> f64 {
    let re = RefElement::nonlinear(u.degree());
    let mesh = u.mesh();
    let mut s = 0.0;
    for j in 0..u.n_cells() {
        let h = mesh.width(j);
        let c = u.cell(j);
        for (q, (&xi, &w)) in re.quad().nodes.iter().zip(&re.quad().weights).enumerate() {
            s += 0.5 * h * w * (re.eval_at_node(c, q) - exact(mesh.map(j, xi), t)).abs();
        }
    }
    s
}

/// `|| u - v ||_{L1}` for two functions on the same space.
pub fn l1_diff(u: &DgFunction, v: &DgFunction) -> Result<f64> {
    if !u.same_space(v) {
        return Err(Error::Mismatch);
    }
    let re = RefElement::nonlinear(u.degree());
    let nb = u.n_basis();
    let mesh = u.mesh();
    let mut diff = vec![0.0; nb];
    let mut s = 0.0;
    for j in 0..u.n_cells() {
        for (d, (a, b)) in diff.iter_mut().zip(u.cell(j).iter().zip(v.cell(j))) {
            *d = a - b;
        }
        let h = mesh.width(j);
        for (q, &w) in re.quad().weights.iter().enumerate() {
            s += 0.5 * h * w * re.eval_at_node(&diff, q).abs();
        }
    }
    Ok(s)
}

/// Writes `x,u(x)` lines at `samples_per_cell` uniform points of every cell
/// (cell endpoints included when more than one sample is requested).
pub fn write_snapshot<W: Write>(u: &DgFunction, samples_per_cell: usize, mut w: W) -> Result<()> {
    let s = samples_per_cell.max(1);
    let mesh = u.mesh();
    writeln!(w, "x,u")?;
    for j in 0..u.n_cells() {
        for i in 0..s {
            let xi = if s == 1 {
                0.0
            } else {
                -1.0 + 2.0 * i as f64 / (s - 1) as f64
            };
            writeln!(w, "{:.12e},{:.12e}", mesh.map(j, xi), u.eval_ref(j, xi))?;
        }
    }
    Ok(())
}
