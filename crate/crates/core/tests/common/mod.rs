#![allow(dead_code)]

use lmm_pde::{GridShape, PdeCoefficients};
use nalgebra::{DMatrix, DVector};

/// Smooth variable coefficients with every term active.
pub struct VarModel {
    pub n: usize,
}

impl PdeCoefficients for VarModel {
    fn dims(&self) -> usize {
        self.n
    }
    fn diffusion(&self, i: usize, x: &[f64]) -> f64 {
        (0.3 + 0.1 * i as f64) * (1.0 + x[0]) * (1.0 + x[self.n - 1] * x[self.n - 1])
    }
    fn mixed(&self, i: usize, k: usize, x: &[f64]) -> f64 {
        0.05 * (1.0 + x[i] * x[k]) * if (i + k).is_multiple_of(2) { 1.0 } else { -1.0 }
    }
    fn advection(&self, i: usize, x: &[f64]) -> f64 {
        0.2 * (x[i] - 0.4) + 0.05 * i as f64
    }
    fn initial(&self, x: &[f64]) -> f64 {
        (x[0] - 0.3).max(0.0) + x.iter().enumerate().map(|(i, v)| 0.1 * (i + 1) as f64 * v * v).sum::<f64>()
    }
}

/// Zero operator with constant data.
pub struct ConstModel {
    pub n: usize,
    pub value: f64,
}

impl PdeCoefficients for ConstModel {
    fn dims(&self) -> usize {
        self.n
    }
    fn diffusion(&self, _i: usize, _x: &[f64]) -> f64 {
        0.0
    }
    fn mixed(&self, _i: usize, _k: usize, _x: &[f64]) -> f64 {
        0.0
    }
    fn advection(&self, _i: usize, _x: &[f64]) -> f64 {
        0.0
    }
    fn initial(&self, _x: &[f64]) -> f64 {
        self.value
    }
}

/// Multi-index of `flat` with direction 0 fastest, computed independently
/// of the library.
pub fn multi_index(flat: usize, intervals: &[usize]) -> Vec<usize> {
    let mut rest = flat;
    intervals
        .iter()
        .map(|&m| {
            let j = rest % (m + 1);
            rest /= m + 1;
            j
        })
        .collect()
}

pub fn flat_index(j: &[usize], intervals: &[usize]) -> usize {
    let mut flat = 0;
    let mut stride = 1;
    for (&ji, &m) in j.iter().zip(intervals) {
        flat += ji * stride;
        stride *= m + 1;
    }
    flat
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Full,
    Direction(usize),
    Remainder,
}

/// Dense matrix of the semi-discrete operator, built stencil by stencil from
/// the textbook difference formulas with mirrored ghost values at upper faces.
pub fn dense_operator<C: PdeCoefficients>(shape: &GridShape, model: &C, part: Part) -> DMatrix<f64> {
    let m = shape.intervals().to_vec();
    let n = m.len();
    let size: usize = m.iter().map(|v| v + 1).product();
    let h: Vec<f64> = (0..n).map(|d| shape.upper()[d] / m[d] as f64).collect();
    let mut a = DMatrix::zeros(size, size);
    // ghost at j = M + 1 mirrors j = M - 1
    let reflect = |j: &mut Vec<usize>, d: usize| {
        if j[d] == m[d] + 1 {
            j[d] = m[d] - 1;
        }
    };
    for row in 0..size {
        let j = multi_index(row, &m);
        if j.contains(&0) {
            continue;
        }
        let x: Vec<f64> = (0..n).map(|d| j[d] as f64 * h[d]).collect();
        let mut add = |col_j: Vec<usize>, v: f64| {
            let c = flat_index(&col_j, &m);
            a[(row, c)] += v;
        };
        let dirs: Vec<usize> = match part {
            Part::Full => (0..n).collect(),
            Part::Direction(i) => vec![i],
            Part::Remainder => vec![],
        };
        for i in dirs {
            let c = model.diffusion(i, &x) / (h[i] * h[i]);
            let mut up = j.clone();
            up[i] += 1;
            reflect(&mut up, i);
            let mut dn = j.clone();
            dn[i] -= 1;
            add(up, c);
            add(dn, c);
            add(j.clone(), -2.0 * c);
        }
        if part != Part::Remainder && part != Part::Full {
            continue;
        }
        for i in 0..n {
            // central first difference, zero at the Neumann face (ghost cancels)
            if j[i] == m[i] {
                continue;
            }
            let c = model.advection(i, &x) / (2.0 * h[i]);
            let mut up = j.clone();
            up[i] += 1;
            let mut dn = j.clone();
            dn[i] -= 1;
            add(up, c);
            add(dn, -c);
        }
        for i in 0..n {
            for k in i + 1..n {
                if j[i] == m[i] || j[k] == m[k] {
                    continue;
                }
                let c = model.mixed(i, k, &x) / (4.0 * h[i] * h[k]);
                for (si, sk, sign) in [(1i64, 1i64, 1.0), (-1, -1, 1.0), (1, -1, -1.0), (-1, 1, -1.0)] {
                    let mut col = j.clone();
                    col[i] = (col[i] as i64 + si) as usize;
                    col[k] = (col[k] as i64 + sk) as usize;
                    add(col, sign * c);
                }
            }
        }
    }
    a
}

pub fn to_dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
