//! Explicit sparse assembly of the semi-discrete operator.
//!
//! Only small grids should be assembled; the time stepper never needs it.

use crate::error::{PdeError, Result};
use crate::grid::GridShape;
use crate::operator::PdeCoefficients;

/// Default node cap for explicit assembly.
pub const DEFAULT_ASSEMBLY_CAP: usize = 1 << 20;

/// Square matrix in compressed sparse row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.n || out.len() != self.n {
            return Err(PdeError::DimensionMismatch { expected: self.n, found: x.len().min(out.len()) });
        }
        for (r, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *o = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
        Ok(())
    }

    /// Solves `(I - s L) x = b` in place, where `L` is the lower triangle of
    /// `self` including the diagonal.
    pub fn solve_shifted_lower(&self, s: f64, b: &mut [f64]) -> Result<()> {
        if b.len() != self.n {
            return Err(PdeError::DimensionMismatch { expected: self.n, found: b.len() });
        }
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            let mut acc = b[r];
            let mut diag = 1.0;
            for (&c, &v) in cols.iter().zip(vals) {
                if c < r {
                    acc += s * v * b[c];
                } else if c == r {
                    diag -= s * v;
                } else {
                    break;
                }
            }
            b[r] = acc / diag;
        }
        Ok(())
    }

    /// Entry-wise sum with matching dimension.
    pub fn add(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if other.n != self.n {
            return Err(PdeError::DimensionMismatch { expected: self.n, found: other.n });
        }
        let mut rows = Vec::with_capacity(self.n);
        for r in 0..self.n {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            let mut row: Vec<(usize, f64)> = ca.iter().copied().zip(va.iter().copied()).collect();
            row.extend(cb.iter().copied().zip(vb.iter().copied()));
            rows.push(row);
        }
        Ok(Self::from_rows(self.n, rows))
    }

    fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().expect("nonempty") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblyPart {
    /// The full operator `A`.
    Full,
    /// The direction-`i` second-difference block `A_i`.
    Direction(usize),
    /// Mixed and first-derivative terms `A_0`.
    Remainder,
}

/// Assembles `A`, `A_i` or `A_0` on `shape`, refusing grids above `cap` nodes.
pub fn assemble<C: PdeCoefficients>(shape: &GridShape, model: &C, part: AssemblyPart, cap: usize) -> Result<CsrMatrix> {
    let size = shape.size();
    if size > cap {
        return Err(PdeError::GridTooLarge { nodes: size, cap });
    }
    if shape.dims() != model.dims() {
        return Err(PdeError::DimensionMismatch { expected: model.dims(), found: shape.dims() });
    }
    let n = shape.dims();
    if let AssemblyPart::Direction(i) = part {
        if i >= n {
            return Err(PdeError::IndexOutOfRange { index: i, lo: 0, hi: n - 1 });
        }
    }
    let m = shape.intervals();
    let e = shape.offsets();
    let h = shape.spacing();
    let mut rows = Vec::with_capacity(size);
    let mut j = vec![0; n];
    let mut x = vec![0.0; n];
    for flat in 0..size {
        shape.full_bijection().decode_into(flat, &mut j)?;
        let mut row = Vec::new();
        if j.iter().all(|&v| v > 0) {
            for d in 0..n {
                x[d] = shape.coordinate(d, j[d]);
            }
            let diffusion: Vec<usize> = match part {
                AssemblyPart::Full => (0..n).collect(),
                AssemblyPart::Direction(i) => vec![i],
                AssemblyPart::Remainder => vec![],
            };
            for i in diffusion {
                let delta = model.diffusion(i, &x) * (1.0 / (h[i] * h[i]));
                row.push((flat, -2.0 * delta));
                if j[i] == m[i] {
                    row.push((flat - e[i], 2.0 * delta));
                } else {
                    row.push((flat - e[i], delta));
                    row.push((flat + e[i], delta));
                }
            }
            if matches!(part, AssemblyPart::Full | AssemblyPart::Remainder) {
                for i in 0..n {
                    if j[i] == m[i] {
                        continue;
                    }
                    let a = model.advection(i, &x) * (0.5 / h[i]);
                    row.push((flat + e[i], a));
                    row.push((flat - e[i], -a));
                }
                for i in 0..n {
                    for k in i + 1..n {
                        if j[i] == m[i] || j[k] == m[k] {
                            continue;
                        }
                        let c = model.mixed(i, k, &x) * (0.25 / (h[i] * h[k]));
                        row.push((flat + e[i] + e[k], c));
                        row.push((flat - e[i] - e[k], c));
                        row.push((flat + e[i] - e[k], -c));
                        row.push((flat - e[i] + e[k], -c));
                    }
                }
            }
        }
        rows.push(row);
    }
    Ok(CsrMatrix::from_rows(size, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Const;
    impl PdeCoefficients for Const {
        fn dims(&self) -> usize {
            2
        }
        fn diffusion(&self, i: usize, _x: &[f64]) -> f64 {
            [1.0, 2.0][i]
        }
        fn mixed(&self, _i: usize, _k: usize, _x: &[f64]) -> f64 {
            0.5
        }
        fn advection(&self, _i: usize, _x: &[f64]) -> f64 {
            0.25
        }
        fn initial(&self, _x: &[f64]) -> f64 {
            0.0
        }
    }

    #[test]
    fn parts_sum_to_full_operator() {
        let shape = GridShape::new(vec![3, 4], vec![1.0, 1.0]).unwrap();
        let full = assemble(&shape, &Const, AssemblyPart::Full, 100).unwrap();
        let mut sum = assemble(&shape, &Const, AssemblyPart::Remainder, 100).unwrap();
        for i in 0..2 {
            sum = sum.add(&assemble(&shape, &Const, AssemblyPart::Direction(i), 100).unwrap()).unwrap();
        }
        for r in 0..shape.size() {
            for c in 0..shape.size() {
                assert!((full.get(r, c) - sum.get(r, c)).abs() < 1e-12);
            }
        }
        // Outer rows are empty
        assert_eq!(full.row(0).0.len(), 0);
        assert!(assemble(&shape, &Const, AssemblyPart::Full, 10).is_err());
    }

    #[test]
    fn shifted_lower_solve() {
        let shape = GridShape::new(vec![2, 2], vec![1.0, 1.0]).unwrap();
        let a = assemble(&shape, &Const, AssemblyPart::Full, 100).unwrap();
        let x: Vec<f64> = (0..9).map(|v| v as f64 * 0.1).collect();
        // b = (I - s L) x
        let s = 0.3;
        let mut b = x.clone();
        for (r, b) in b.iter_mut().enumerate() {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if c <= r {
                    *b -= s * v * x[c];
                }
            }
        }
        a.solve_shifted_lower(s, &mut b).unwrap();
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}
