//! Matrix-free semi-discrete operator and directional tridiagonal solves.
//!
//! Lower faces (`j_i = 0`) are Dirichlet nodes holding the payoff; upper
//! faces (`j_i = M_i`) carry homogeneous Neumann conditions through the
//! mirrored ghost value `Y_{J+E_i} = Y_{J-E_i}`. At an Inner node:
//!
//! ```text
//! second difference   (Y+ - 2Y + Y-) / h^2,   or (2Y- - 2Y) / h^2 at j_i = M_i
//! first difference    (Y+ - Y-) / 2h,         or 0 at j_i = M_i
//! mixed difference    (Y++ + Y-- - Y+- - Y-+) / 4 h_i h_k, or 0 if j_i = M_i or j_k = M_k
//! ```
//!
//! Outer rows of every operator are zero, so Outer values never move.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{PdeError, Result};
use crate::grid::GridShape;

/// Coefficients and initial data of a linear, autonomous convection-diffusion
/// problem on a tensor grid. Coordinates are passed as the full node
/// position `x`.
pub trait PdeCoefficients: Sync {
    fn dims(&self) -> usize;

    /// Coefficient of `u_{x_i x_i}`. Must be non-negative.
    fn diffusion(&self, i: usize, x: &[f64]) -> f64;

    /// Coefficient of `u_{x_i x_k}` for `i < k`.
    fn mixed(&self, i: usize, k: usize, x: &[f64]) -> f64;

    /// Coefficient of `u_{x_i}`.
    fn advection(&self, i: usize, x: &[f64]) -> f64;

    /// Initial (terminal payoff) value; also the Dirichlet data on lower faces.
    fn initial(&self, x: &[f64]) -> f64;

    /// `false` lets the operator skip the mixed sweep entirely.
    fn has_mixed(&self) -> bool {
        true
    }

    /// `false` lets the operator skip the first-difference sweep entirely.
    fn has_advection(&self) -> bool {
        true
    }
}

/// Solution values `Y_J` over every node of a grid, Inner and Outer.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Work counters exposed for cost accounting and timing columns.
#[derive(Debug, Default)]
pub struct OperatorStats {
    derivative_evals: AtomicU64,
    directional_solves: AtomicU64,
    lines_solved: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StatsSnapshot {
    pub derivative_evals: u64,
    pub directional_solves: u64,
    pub lines_solved: u64,
}

impl StatsSnapshot {
    pub fn since(&self, earlier: &StatsSnapshot) -> StatsSnapshot {
        StatsSnapshot {
            derivative_evals: self.derivative_evals - earlier.derivative_evals,
            directional_solves: self.directional_solves - earlier.directional_solves,
            lines_solved: self.lines_solved - earlier.lines_solved,
        }
    }
}

impl OperatorStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            derivative_evals: self.derivative_evals.load(Ordering::Relaxed),
            directional_solves: self.directional_solves.load(Ordering::Relaxed),
            lines_solved: self.lines_solved.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Terms {
    All,
    Diffusion(usize),
    Remainder,
}

/// The semi-discrete right-hand side `F(Y) = F_0(Y) + sum_i F_i(Y)` of one
/// grid, applied matrix-free.
pub struct SpatialOperator<'a, C: PdeCoefficients> {
    shape: GridShape,
    model: &'a C,
    coords: Vec<Vec<f64>>,
    inv_h2: Vec<f64>,
    inv_2h: Vec<f64>,
    inv_4hh: Vec<f64>,
    /// `d_i / h_i^2` per direction and node, when caching is enabled.
    delta_cache: Option<Vec<Vec<f64>>>,
    parallel: bool,
    stats: OperatorStats,
}

impl<'a, C: PdeCoefficients> SpatialOperator<'a, C> {
    pub fn new(shape: GridShape, model: &'a C) -> Result<Self> {
        if shape.dims() != model.dims() {
            return Err(PdeError::DimensionMismatch { expected: model.dims(), found: shape.dims() });
        }
        let n = shape.dims();
        let coords = (0..n)
            .map(|d| (0..=shape.intervals()[d]).map(|j| shape.coordinate(d, j)).collect())
            .collect();
        let h = shape.spacing();
        let inv_h2 = h.iter().map(|&h| 1.0 / (h * h)).collect();
        let inv_2h = h.iter().map(|&h| 0.5 / h).collect();
        let mut inv_4hh = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                inv_4hh[i * n + k] = 0.25 / (h[i] * h[k]);
            }
        }
        Ok(Self {
            shape,
            model,
            coords,
            inv_h2,
            inv_2h,
            inv_4hh,
            delta_cache: None,
            parallel: true,
            stats: OperatorStats::default(),
        })
    }

    /// Precomputes `d_i / h_i^2` at every node. Results are bit-identical
    /// to on-the-fly evaluation at the cost of `N * M` extra doubles.
    pub fn with_coefficient_cache(mut self) -> Self {
        let n = self.shape.dims();
        let mut cache = vec![vec![0.0; self.shape.size()]; n];
        let mut j = vec![0; n];
        let mut x = vec![0.0; n];
        for flat in 0..self.shape.size() {
            self.shape.full_bijection().decode_into(flat, &mut j).expect("in range");
            if j.contains(&0) {
                continue;
            }
            for d in 0..n {
                x[d] = self.coords[d][j[d]];
            }
            for (i, c) in cache.iter_mut().enumerate() {
                c[flat] = self.model.diffusion(i, &x) * self.inv_h2[i];
            }
        }
        self.delta_cache = Some(cache);
        self
    }

    /// Runs every sweep on the calling thread only.
    pub fn sequential(mut self) -> Self {
        self.parallel = false;
        self
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn model(&self) -> &C {
        self.model
    }

    pub fn stats(&self) -> &OperatorStats {
        &self.stats
    }

    /// Node coordinates of direction `d`.
    pub fn coordinates(&self, d: usize) -> &[f64] {
        &self.coords[d]
    }

    /// `Y_J = g(x_J)` at every node.
    pub fn initial_state(&self) -> StateVector {
        let n = self.shape.dims();
        let mut j = vec![0; n];
        let mut x = vec![0.0; n];
        let values = (0..self.shape.size())
            .map(|flat| {
                self.shape.full_bijection().decode_into(flat, &mut j).expect("in range");
                for d in 0..n {
                    x[d] = self.coords[d][j[d]];
                }
                self.model.initial(&x)
            })
            .collect();
        StateVector(values)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.shape.size() {
            return Err(PdeError::DimensionMismatch { expected: self.shape.size(), found: len });
        }
        Ok(())
    }

    /// `F(Y)`.
    pub fn apply(&self, y: &StateVector) -> Result<StateVector> {
        let mut out = StateVector::zeros(y.len());
        self.apply_into(y.values(), out.values_mut())?;
        Ok(out)
    }

    /// `out = F(y)`. Counted as one derivative evaluation.
    pub fn apply_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(y.len())?;
        self.check_len(out.len())?;
        self.stats.derivative_evals.fetch_add(1, Ordering::Relaxed);
        self.apply_terms(y, out, Terms::All);
        Ok(())
    }

    /// `F_i(Y)`: the pure direction-`i` second-difference part.
    pub fn apply_direction(&self, i: usize, y: &StateVector) -> Result<StateVector> {
        self.check_len(y.len())?;
        if i >= self.shape.dims() {
            return Err(PdeError::IndexOutOfRange { index: i, lo: 0, hi: self.shape.dims() - 1 });
        }
        let mut out = StateVector::zeros(y.len());
        self.apply_terms(y.values(), out.values_mut(), Terms::Diffusion(i));
        Ok(out)
    }

    /// `F_0(Y)`: mixed-derivative and first-derivative terms.
    pub fn apply_remainder(&self, y: &StateVector) -> Result<StateVector> {
        self.check_len(y.len())?;
        let mut out = StateVector::zeros(y.len());
        self.apply_terms(y.values(), out.values_mut(), Terms::Remainder);
        Ok(out)
    }

    fn apply_terms(&self, y: &[f64], out: &mut [f64], terms: Terms) {
        let n = self.shape.dims();
        let slab = if n == 1 { out.len() } else { self.shape.offsets()[n - 1] };
        let kernel = |(s, chunk): (usize, &mut [f64])| self.apply_slab(y, chunk, s * slab, terms);
        if self.parallel && out.len() / slab > 1 {
            out.par_chunks_mut(slab).enumerate().for_each(kernel);
        } else {
            out.chunks_mut(slab).enumerate().for_each(kernel);
        }
    }

    /// Fills `out[..] = F(y)[start..start + out.len()]` for one slab of
    /// nodes sharing the last index (or the whole grid when `N = 1`).
    fn apply_slab(&self, y: &[f64], out: &mut [f64], start: usize, terms: Terms) {
        let n = self.shape.dims();
        let m = self.shape.intervals();
        let e = self.shape.offsets();
        let mut j = vec![0usize; n];
        self.shape.full_bijection().decode_into(start, &mut j).expect("slab start in range");
        let mut x: Vec<f64> = (0..n).map(|d| self.coords[d][j[d]]).collect();
        if n > 1 && j[n - 1] == 0 {
            out.fill(0.0);
            return;
        }
        let want_mixed = matches!(terms, Terms::All | Terms::Remainder) && self.model.has_mixed() && n > 1;
        let want_adv = matches!(terms, Terms::All | Terms::Remainder) && self.model.has_advection();

        for (offset, slot) in out.iter_mut().enumerate() {
            if offset > 0 {
                // odometer over the directions below the slab direction
                let mut d = 0;
                loop {
                    j[d] += 1;
                    if j[d] <= m[d] {
                        x[d] = self.coords[d][j[d]];
                        break;
                    }
                    j[d] = 0;
                    x[d] = 0.0;
                    d += 1;
                }
            }
            if j.contains(&0) {
                *slot = 0.0;
                continue;
            }
            let flat = start + offset;
            let yc = y[flat];
            let mut acc = 0.0;

            let diffusion_range = match terms {
                Terms::All => 0..n,
                Terms::Diffusion(i) => i..i + 1,
                Terms::Remainder => 0..0,
            };
            for i in diffusion_range {
                let ei = e[i];
                let delta = match &self.delta_cache {
                    Some(c) => c[i][flat],
                    None => self.model.diffusion(i, &x) * self.inv_h2[i],
                };
                if delta != 0.0 {
                    let lap = if j[i] != m[i] {
                        y[flat + ei] - 2.0 * yc + y[flat - ei]
                    } else {
                        2.0 * y[flat - ei] - 2.0 * yc
                    };
                    acc += delta * lap;
                }
            }
            if want_adv {
                for i in 0..n {
                    if j[i] == m[i] {
                        continue;
                    }
                    let a = self.model.advection(i, &x);
                    if a != 0.0 {
                        acc += a * (y[flat + e[i]] - y[flat - e[i]]) * self.inv_2h[i];
                    }
                }
            }
            if want_mixed {
                for i in 0..n - 1 {
                    if j[i] == m[i] {
                        continue;
                    }
                    let ei = e[i];
                    for k in i + 1..n {
                        if j[k] == m[k] {
                            continue;
                        }
                        let c = self.model.mixed(i, k, &x);
                        if c != 0.0 {
                            let ek = e[k];
                            let cross = y[flat + ei + ek] + y[flat - ei - ek] - y[flat + ei - ek] - y[flat - ei + ek];
                            acc += c * cross * self.inv_4hh[i * n + k];
                        }
                    }
                }
            }
            *slot = acc;
        }
    }

    /// Solves `(I - nu_dt A_i) K = G` for direction `i`. `G` must vanish on
    /// Outer nodes, and so does `K`.
    pub fn directional_solve(&self, i: usize, nu_dt: f64, g: &StateVector) -> Result<StateVector> {
        let mut k = g.clone();
        self.directional_solve_in_place(i, nu_dt, k.values_mut())?;
        Ok(k)
    }

    /// In-place variant of [`SpatialOperator::directional_solve`]: on entry
    /// `values` holds `G`, on exit `K`.
    ///
    /// The system splits into `prod_{k != i} M_k` independent tridiagonal
    /// systems of size `M_i`, one per line of Inner nodes along direction
    /// `i`. Rows are, with `a = nu_dt d_i / h_i^2` at the row's node,
    ///
    /// ```text
    /// first row   (1 + 2a) K_1 - a K_2
    /// interior    -a K_{j-1} + (1 + 2a) K_j - a K_{j+1}
    /// last row    -2a K_{M-1} + (1 + 2a) K_M
    /// ```
    ///
    /// Every row is strictly diagonally dominant for `nu_dt >= 0`, so the
    /// Thomas recursion runs without pivoting. Lines are swept together,
    /// row by row, over the contiguous block of lower-direction indices.
    pub fn directional_solve_in_place(&self, i: usize, nu_dt: f64, values: &mut [f64]) -> Result<()> {
        self.check_len(values.len())?;
        let n = self.shape.dims();
        if i >= n {
            return Err(PdeError::IndexOutOfRange { index: i, lo: 0, hi: n - 1 });
        }
        if !(nu_dt >= 0.0) || !nu_dt.is_finite() {
            return Err(PdeError::InvalidConfig(format!("nu * dt must be finite and >= 0, got {nu_dt}")));
        }
        self.stats.directional_solves.fetch_add(1, Ordering::Relaxed);
        let lines: usize = (0..n).filter(|&r| r != i).map(|r| self.shape.intervals()[r]).product();
        self.stats.lines_solved.fetch_add(lines as u64, Ordering::Relaxed);

        let rows = self.shape.intervals()[i] + 1;
        let inner = self.shape.offsets()[i];
        let slab = rows * inner;
        let kernel = |scratch: &mut Vec<f64>, (o, chunk): (usize, &mut [f64])| {
            self.solve_slab(i, nu_dt, o, chunk, scratch);
        };
        if self.parallel && values.len() / slab > 1 {
            values.par_chunks_mut(slab).enumerate().for_each_init(Vec::new, kernel);
        } else {
            let mut scratch = Vec::new();
            values.chunks_mut(slab).enumerate().for_each(|item| kernel(&mut scratch, item));
        }
        Ok(())
    }

    fn solve_slab(&self, i: usize, nu_dt: f64, outer: usize, chunk: &mut [f64], w: &mut Vec<f64>) {
        let n = self.shape.dims();
        let m = self.shape.intervals();
        let mi = m[i];
        let inner = self.shape.offsets()[i];

        let mut j = vec![0usize; n];
        // decode the directions above i from the slab index
        let mut rest = outer;
        for d in i + 1..n {
            j[d] = rest % (m[d] + 1);
            rest /= m[d] + 1;
        }
        if j[i + 1..].contains(&0) {
            debug_assert!(chunk.iter().all(|&v| v == 0.0), "right-hand side must vanish on Outer nodes");
            chunk.fill(0.0);
            return;
        }
        let mut x: Vec<f64> = (0..n).map(|d| self.coords[d][j[d]]).collect();

        // which lower-direction offsets are Inner
        let active: Vec<bool> = (0..inner)
            .map(|c| {
                let mut c = c;
                (0..i).all(|d| {
                    let q = c % (m[d] + 1);
                    c /= m[d] + 1;
                    q != 0
                })
            })
            .collect();

        debug_assert!(chunk[..inner].iter().all(|&v| v == 0.0), "right-hand side must vanish on Outer nodes");
        chunk[..inner].fill(0.0);
        w.clear();
        w.resize((mi + 1) * inner, 0.0);
        let slab_start = outer * (mi + 1) * inner;

        for row in 1..=mi {
            j[i] = row;
            x[i] = self.coords[i][row];
            for d in 0..i {
                j[d] = 0;
                x[d] = 0.0;
            }
            for c in 0..inner {
                if c > 0 {
                    let mut d = 0;
                    loop {
                        j[d] += 1;
                        if j[d] <= m[d] {
                            x[d] = self.coords[d][j[d]];
                            break;
                        }
                        j[d] = 0;
                        x[d] = 0.0;
                        d += 1;
                    }
                }
                let at = row * inner + c;
                if !active[c] {
                    debug_assert!(chunk[at] == 0.0, "right-hand side must vanish on Outer nodes");
                    chunk[at] = 0.0;
                    continue;
                }
                let delta = match &self.delta_cache {
                    Some(cache) => cache[i][slab_start + at],
                    None => self.model.diffusion(i, &x) * self.inv_h2[i],
                };
                let a = nu_dt * delta;
                debug_assert!(a >= 0.0, "negative diffusion breaks diagonal dominance");
                let diag = 1.0 + 2.0 * a;
                let (sub, sup) = if row == mi { (-2.0 * a, 0.0) } else { (-a, -a) };
                let (w_prev, g_prev) = if row == 1 { (0.0, 0.0) } else { (w[at - inner], chunk[at - inner]) };
                let den = diag - sub * w_prev;
                debug_assert!(den.abs() > 0.0, "zero pivot");
                w[at] = sup / den;
                chunk[at] = (chunk[at] - sub * g_prev) / den;
            }
        }
        for row in (1..mi).rev() {
            for c in 0..inner {
                if active[c] {
                    let at = row * inner + c;
                    chunk[at] -= w[at] * chunk[at + inner];
                }
            }
        }
    }

    /// Multilinear interpolation of `values` at `point`.
    pub fn interpolate(&self, values: &StateVector, point: &[f64]) -> Result<f64> {
        self.check_len(values.len())?;
        interpolate(&self.shape, values.values(), point)
    }
}

/// Tensor-product linear interpolation over the grid cell containing `point`.
pub fn interpolate(shape: &GridShape, values: &[f64], point: &[f64]) -> Result<f64> {
    let n = shape.dims();
    if point.len() != n {
        return Err(PdeError::DimensionMismatch { expected: n, found: point.len() });
    }
    if values.len() != shape.size() {
        return Err(PdeError::DimensionMismatch { expected: shape.size(), found: values.len() });
    }
    let mut base = 0usize;
    let mut frac = vec![0.0; n];
    for d in 0..n {
        let p = point[d];
        if !(p >= 0.0 && p <= shape.upper()[d]) {
            return Err(PdeError::PointOutsideDomain { point: point.to_vec() });
        }
        let s = p / shape.spacing()[d];
        let cell = (s.floor() as usize).min(shape.intervals()[d] - 1);
        frac[d] = s - cell as f64;
        base += cell * shape.offsets()[d];
    }
    let mut corners: Vec<f64> = (0..1usize << n)
        .map(|corner| {
            let flat: usize = (0..n).filter(|&d| corner >> d & 1 == 1).map(|d| shape.offsets()[d]).sum();
            values[base + flat]
        })
        .collect();
    // collapse one direction at a time; the lerp form keeps constants exact
    for d in 0..n {
        let half = corners.len() / 2;
        for c in 0..half {
            let lo = corners[2 * c];
            let hi = corners[2 * c + 1];
            corners[c] = if frac[d] == 0.0 { lo } else { lo + frac[d] * (hi - lo) };
        }
        corners.truncate(half);
    }
    Ok(corners[0])
}

/// Writes one line per node: flat index, multi-index, coordinates, value.
///
/// ```text
/// # J j_1 .. j_N x_1 .. x_N value
/// 0 0 0 0.000000000000000e0 0.000000000000000e0 0.000000000000000e0
/// ```
pub fn write_dump<W: Write>(shape: &GridShape, values: &[f64], mut out: W) -> std::io::Result<()> {
    let n = shape.dims();
    writeln!(out, "# J j_1 .. j_{n} x_1 .. x_{n} value")?;
    let mut j = vec![0; n];
    for (flat, v) in values.iter().enumerate() {
        shape.full_bijection().decode_into(flat, &mut j).map_err(std::io::Error::other)?;
        write!(out, "{flat}")?;
        for &ji in &j {
            write!(out, " {ji}")?;
        }
        for (d, &ji) in j.iter().enumerate() {
            write!(out, " {:.15e}", shape.coordinate(d, ji))?;
        }
        writeln!(out, " {v:.17e}")?;
    }
    Ok(())
}
