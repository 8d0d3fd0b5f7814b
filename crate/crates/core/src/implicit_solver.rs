//! Direct solvers for the implicit stage operator `I - s D`, where `D` is the
//! [`DiscreteLaplacian`] and `s = gamma * dt * a0`.
//!
//! Dirichlet meshes give a block-tridiagonal matrix solved by banded LU.
//! Periodic meshes add two corner blocks; the last cell block is treated as a
//! border and eliminated through a small Schur complement. A dense LU serves
//! as reference and as fallback for tiny meshes or excessive pivot growth.

use crate::error::{Error, Result};
use crate::ldg::DiscreteLaplacian;

/// Pivot growth beyond which the banded path is abandoned for dense LU.
pub const MAX_PIVOT_GROWTH: f64 = 1e8;

/// Dense LU with partial pivoting, row-major storage.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: a.len(),
            });
        }
        let mut piv = vec![0; n];
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap();
            if a[p * n + k] == 0.0 {
                return Err(Error::Singular(k));
            }
            piv[k] = p;
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
            }
            let d = a[k * n + k];
            for r in k + 1..n {
                let f = a[r * n + k] / d;
                a[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        a[r * n + c] -= f * a[k * n + c];
                    }
                }
            }
        }
        Ok(DenseLu { n, lu: a, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for r in 0..n {
            let s: f64 = (0..r).map(|c| self.lu[r * n + c] * b[c]).sum();
            b[r] -= s;
        }
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| self.lu[r * n + c] * b[c]).sum();
            b[r] = (b[r] - s) / self.lu[r * n + r];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, b.len())?;
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }
}

/// Banded LU with partial pivoting. Row `i` stores columns
/// `i - kl ..= i + kl + ku`; the extra `kl` columns hold pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    rows: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
    growth: f64,
}

impl BandedLu {
    fn width(kl: usize, ku: usize) -> usize {
        2 * kl + ku + 1
    }

    /// Builds and factors the band of a matrix given entry-wise; `entry(i, j)`
    /// is only queried for `|i - j|` inside the band.
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        entry: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let w = Self::width(kl, ku);
        let mut rows = vec![0.0; n * w];
        let mut max_a: f64 = 0.0;
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            for j in lo..=hi {
                let v = entry(i, j);
                max_a = max_a.max(v.abs());
                rows[i * w + j + kl - i] = v;
            }
        }
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            rows,
            mult: vec![0.0; n * kl.max(1)],
            piv: vec![0; n],
            growth: 1.0,
        };
        lu.eliminate(max_a)?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * Self::width(self.kl, self.ku) + j + self.kl - i
    }

    fn eliminate(&mut self, max_a: f64) -> Result<()> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut max_u: f64 = 0.0;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.rows[self.at(k, k)].abs();
            for r in k + 1..=last_row {
                let v = self.rows[self.at(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular(k));
            }
            self.piv[k] = p;
            if p != k {
                for c in k..=last_col {
                    let (a, b) = (self.at(k, c), self.at(p, c));
                    self.rows.swap(a, b);
                }
            }
            let d = self.rows[self.at(k, k)];
            for r in k + 1..=last_row {
                let ir = self.at(r, k);
                let f = self.rows[ir] / d;
                self.rows[ir] = 0.0;
                self.mult[k * kl + (r - k - 1)] = f;
                if f != 0.0 {
                    for c in k + 1..=last_col {
                        let v = self.rows[self.at(k, c)];
                        let t = self.at(r, c);
                        self.rows[t] -= f * v;
                    }
                }
            }
            for c in k..=last_col {
                max_u = max_u.max(self.rows[self.at(k, c)].abs());
            }
        }
        self.growth = if max_a > 0.0 { max_u / max_a } else { 1.0 };
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `max |U| / max |A|`.
    pub fn pivot_growth(&self) -> f64 {
        self.growth
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let w = Self::width(kl, ku);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != 0.0 {
                let hi = (k + kl).min(n - 1);
                let m = &self.mult[k * kl..k * kl + (hi - k)];
                for (br, f) in b[k + 1..=hi].iter_mut().zip(m) {
                    *br -= f * bk;
                }
            }
        }
        for r in (0..n).rev() {
            let hi = (r + kl + ku).min(n - 1);
            let row = &self.rows[r * w + kl..r * w + kl + (hi - r) + 1];
            let s: f64 = row[1..]
                .iter()
                .zip(&b[r + 1..=hi])
                .map(|(a, x)| a * x)
                .sum();
            b[r] = (b[r] - s) / row[0];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, b.len())?;
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

#[derive(Debug, Clone)]
enum Factors {
    Banded(BandedLu),
    Bordered {
        inner: BandedLu,
        /// `A11^{-1} A12`, column-major: `bs` columns of length `dim - bs`.
        w: Vec<f64>,
        /// `A21` rows, row-major `bs x (dim - bs)` but only two blocks nonzero.
        a21_first: Vec<f64>,
        a21_last: Vec<f64>,
        schur: DenseLu,
    },
    Dense(DenseLu),
}

/// Factorization of `I - s D` tagged with the `(a0, dt, gamma)` epoch it was
/// built for.
#[derive(Debug, Clone)]
pub struct ImplicitFactorization {
    shift: f64,
    epoch: (f64, f64, f64),
    n_cells: usize,
    block: usize,
    periodic: bool,
    factors: Factors,
}

/// Entry `(i, j)` of `I - s D` assembled from the block structure.
fn shifted_entry(d: &DiscreteLaplacian, s: f64, i: usize, j: usize) -> f64 {
    let bs = d.block_size();
    let n = d.n_cells();
    let (bi, bj) = (i / bs, j / bs);
    let (m, l) = (i % bs, j % bs);
    let mut v = if i == j { 1.0 } else { 0.0 };
    let mut add = |off: i32| {
        v -= s * d.block(bi, off)[m * bs + l];
    };
    if bi == bj {
        add(0);
    }
    let periodic = d.is_periodic();
    if (bi > 0 && bj == bi - 1) || (periodic && bi == 0 && bj == n - 1) {
        add(-1);
    }
    if (bj == bi + 1) || (periodic && bi == n - 1 && bj == 0) {
        add(1);
    }
    v
}

fn dense_shifted(d: &DiscreteLaplacian, s: f64) -> Vec<f64> {
    let mut a = d.to_dense();
    for v in a.iter_mut() {
        *v *= -s;
    }
    let dim = d.dim();
    for i in 0..dim {
        a[i * dim + i] += 1.0;
    }
    a
}

impl ImplicitFactorization {
    /// Factors `I - gamma*dt*a0*D` and records the epoch tags.
    pub fn new(d: &DiscreteLaplacian, a0: f64, dt: f64, gamma: f64) -> Result<Self> {
        let mut f = factorize(d, gamma * dt * a0)?;
        f.epoch = (a0, dt, gamma);
        Ok(f)
    }

    /// Dense-LU factorization of the same matrix (test reference).
    pub fn dense(d: &DiscreteLaplacian, shift: f64) -> Result<Self> {
        Ok(ImplicitFactorization {
            shift,
            epoch: (f64::NAN, f64::NAN, f64::NAN),
            n_cells: d.n_cells(),
            block: d.block_size(),
            periodic: d.is_periodic(),
            factors: Factors::Dense(DenseLu::factor(dense_shifted(d, shift), d.dim())?),
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn dim(&self) -> usize {
        self.n_cells * self.block
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.factors, Factors::Dense(_))
    }

    /// True when the factorization was built for exactly this triple.
    pub fn epoch_check(&self, a0: f64, dt: f64, gamma: f64) -> bool {
        self.epoch == (a0, dt, gamma)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        check_len(self.dim(), x.len())?;
        match &self.factors {
            Factors::Banded(lu) => lu.solve_in_place(x),
            Factors::Dense(lu) => lu.solve_in_place(x),
            Factors::Bordered {
                inner,
                w,
                a21_first,
                a21_last,
                schur,
            } => {
                let bs = self.block;
                let n1 = self.dim() - bs;
                let (x1, x2) = x.split_at_mut(n1);
                inner.solve_in_place(x1);
                for m in 0..bs {
                    let mut s = 0.0;
                    for l in 0..bs {
                        s += a21_first[m * bs + l] * x1[l];
                        s += a21_last[m * bs + l] * x1[n1 - bs + l];
                    }
                    x2[m] -= s;
                }
                schur.solve_in_place(x2);
                for (c, &xc) in x2.iter().enumerate() {
                    let col = &w[c * n1..(c + 1) * n1];
                    for (xi, wi) in x1.iter_mut().zip(col) {
                        *xi -= wi * xc;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Factors `I - shift * D`. Periodic meshes with more than three cells use
/// the bordered banded path; Dirichlet meshes plain banded LU.
pub fn factorize(d: &DiscreteLaplacian, shift: f64) -> Result<ImplicitFactorization> {
    if !(shift >= 0.0) {
        return Err(Error::Config(format!(
            "implicit shift must be >= 0, got {shift}"
        )));
    }
    let n = d.n_cells();
    let bs = d.block_size();
    let dim = d.dim();
    let band = 2 * bs - 1;
    let base = ImplicitFactorization {
        shift,
        epoch: (f64::NAN, f64::NAN, f64::NAN),
        n_cells: n,
        block: bs,
        periodic: d.is_periodic(),
        factors: Factors::Dense(DenseLu::factor(vec![1.0], 1)?),
    };
    let factors = if n <= 3 {
        Factors::Dense(DenseLu::factor(dense_shifted(d, shift), dim)?)
    } else if !d.is_periodic() {
        let lu = BandedLu::factor(dim, band, band, |i, j| shifted_entry(d, shift, i, j))?;
        if lu.pivot_growth() > MAX_PIVOT_GROWTH {
            Factors::Dense(DenseLu::factor(dense_shifted(d, shift), dim)?)
        } else {
            Factors::Banded(lu)
        }
    } else {
        match bordered(d, shift)? {
            Some(f) => f,
            None => Factors::Dense(DenseLu::factor(dense_shifted(d, shift), dim)?),
        }
    };
    Ok(ImplicitFactorization { factors, ..base })
}

fn bordered(d: &DiscreteLaplacian, s: f64) -> Result<Option<Factors>> {
    let n = d.n_cells();
    let bs = d.block_size();
    let n1 = (n - 1) * bs;
    let band = 2 * bs - 1;
    let inner = BandedLu::factor(n1, band, band, |i, j| shifted_entry(d, s, i, j))?;
    if inner.pivot_growth() > MAX_PIVOT_GROWTH {
        return Ok(None);
    }
    // A12: rows of block 0 (corner) and block n-2 couple to the border block.
    let mut w = vec![0.0; bs * n1];
    for c in 0..bs {
        let col = &mut w[c * n1..(c + 1) * n1];
        for m in 0..bs {
            col[m] = shifted_entry(d, s, m, n1 + c);
            col[n1 - bs + m] = shifted_entry(d, s, n1 - bs + m, n1 + c);
        }
        inner.solve_in_place(col);
    }
    let mut a21_first = vec![0.0; bs * bs];
    let mut a21_last = vec![0.0; bs * bs];
    let mut a22 = vec![0.0; bs * bs];
    for m in 0..bs {
        for l in 0..bs {
            a21_first[m * bs + l] = shifted_entry(d, s, n1 + m, l);
            a21_last[m * bs + l] = shifted_entry(d, s, n1 + m, n1 - bs + l);
            a22[m * bs + l] = shifted_entry(d, s, n1 + m, n1 + l);
        }
    }
    let mut schur = a22;
    for m in 0..bs {
        for c in 0..bs {
            let col = &w[c * n1..(c + 1) * n1];
            let mut acc = 0.0;
            for l in 0..bs {
                acc += a21_first[m * bs + l] * col[l];
                acc += a21_last[m * bs + l] * col[n1 - bs + l];
            }
            schur[m * bs + c] -= acc;
        }
    }
    let schur = DenseLu::factor(schur, bs)?;
    Ok(Some(Factors::Bordered {
        inner,
        w,
        a21_first,
        a21_last,
        schur,
    }))
}

/// Free-function form of [`ImplicitFactorization::epoch_check`].
pub fn epoch_check(fact: &ImplicitFactorization, a0: f64, dt: f64, gamma: f64) -> bool {
    fact.epoch_check(a0, dt, gamma)
}

/// `(I - shift D) x`.
pub fn apply_shifted(d: &DiscreteLaplacian, shift: f64, x: &[f64]) -> Result<Vec<f64>> {
    let mut y = d.apply(x)?;
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = xi - shift * *yi;
    }
    Ok(y)
}

/// `||(I - shift D) x - rhs||_inf`.
pub fn residual_inf(d: &DiscreteLaplacian, shift: f64, x: &[f64], rhs: &[f64]) -> Result<f64> {
    let y = apply_shifted(d, shift, x)?;
    Ok(y.iter()
        .zip(rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Keeps factorizations for recently used `(a0, dt, gamma)` triples. A change
/// of `a0` drops everything; each new step size adds one entry per diagonal value.
#[derive(Debug, Clone)]
pub struct FactorizationCache {
    laplacian: DiscreteLaplacian,
    entries: Vec<ImplicitFactorization>,
    builds: usize,
}

const CACHE_CAPACITY: usize = 4;

impl FactorizationCache {
    pub fn new(laplacian: DiscreteLaplacian) -> Self {
        FactorizationCache {
            laplacian,
            entries: Vec::new(),
            builds: 0,
        }
    }

    pub fn laplacian(&self) -> &DiscreteLaplacian {
        &self.laplacian
    }

    /// Number of factorizations built so far.
    pub fn builds(&self) -> usize {
        self.builds
    }

    pub fn get(&mut self, a0: f64, dt: f64, gamma: f64) -> Result<&ImplicitFactorization> {
        if let Some(i) = self
            .entries
            .iter()
            .position(|f| f.epoch_check(a0, dt, gamma))
        {
            return Ok(&self.entries[i]);
        }
        self.entries.retain(|f| f.epoch.0 == a0);
        if self.entries.len() >= CACHE_CAPACITY {
            self.entries.remove(0);
        }
        self.entries
            .push(ImplicitFactorization::new(&self.laplacian, a0, dt, gamma)?);
        self.builds += 1;
        Ok(self.entries.last().unwrap())
    }
}
