//! Multi-index <-> flat-index bijections for tensor grids.
//!
//! A box of multi-indices `m_i <= j_i <= M_i` is flattened first direction
//! fastest:
//!
//! ```text
//! J = j_1 + sum_{l >= 2} (j_l - m_l) prod_{r < l} (M_r - m_r + 1)
//! ```
//!
//! which maps onto `m_1 ..= M_T + m_1 - 1`. The full grid uses lower
//! bounds 0 (zero-based flat indices), the interior and line enumerations
//! use lower bounds 1 (one-based flat indices).

use crate::error::{PdeError, Result};

/// Bijection between a box of multi-indices and a contiguous integer range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bijection {
    lower: Vec<usize>,
    upper: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl Bijection {
    pub fn new(lower: Vec<usize>, upper: Vec<usize>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(PdeError::InvalidGrid("bounds must be non-empty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(m, mm)| m > mm) {
            return Err(PdeError::InvalidGrid(format!("lower bounds {lower:?} exceed upper bounds {upper:?}")));
        }
        let mut strides = Vec::with_capacity(lower.len());
        let mut total = 1usize;
        for (m, mm) in lower.iter().zip(&upper) {
            strides.push(total);
            total = total
                .checked_mul(mm - m + 1)
                .ok_or_else(|| PdeError::InvalidGrid("index space overflows usize".into()))?;
        }
        Ok(Self { lower, upper, strides, total })
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    /// Number of multi-indices, `M_T`.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Smallest flat index, `m_1`.
    pub fn first(&self) -> usize {
        self.lower[0]
    }

    /// Largest flat index, `M_T + m_1 - 1`.
    pub fn last(&self) -> usize {
        self.total + self.lower[0] - 1
    }

    pub fn lower(&self) -> &[usize] {
        &self.lower
    }

    pub fn upper(&self) -> &[usize] {
        &self.upper
    }

    pub fn encode(&self, j: &[usize]) -> Result<usize> {
        if j.len() != self.dims() {
            return Err(PdeError::DimensionMismatch { expected: self.dims(), found: j.len() });
        }
        for ((&ji, &m), &mm) in j.iter().zip(&self.lower).zip(&self.upper) {
            if ji < m || ji > mm {
                return Err(PdeError::IndexOutOfRange { index: ji, lo: m, hi: mm });
            }
        }
        Ok(self.encode_unchecked(j))
    }

    #[inline]
    pub fn encode_unchecked(&self, j: &[usize]) -> usize {
        let mut flat = j[0];
        for l in 1..j.len() {
            flat += (j[l] - self.lower[l]) * self.strides[l];
        }
        flat
    }

    pub fn decode(&self, flat: usize) -> Result<Vec<usize>> {
        let mut j = vec![0; self.dims()];
        self.decode_into(flat, &mut j)?;
        Ok(j)
    }

    /// Mod-and-divide inverse: `c_1 = J - m_1`, `q_i = c_i mod (M_i - m_i + 1)`,
    /// `c_{i+1} = (c_i - q_i) / (M_i - m_i + 1)`, `j_i = m_i + q_i`.
    pub fn decode_into(&self, flat: usize, j: &mut [usize]) -> Result<()> {
        if flat < self.first() || flat > self.last() {
            return Err(PdeError::IndexOutOfRange { index: flat, lo: self.first(), hi: self.last() });
        }
        if j.len() != self.dims() {
            return Err(PdeError::DimensionMismatch { expected: self.dims(), found: j.len() });
        }
        let mut c = flat - self.lower[0];
        for i in 0..self.dims() {
            let width = self.upper[i] - self.lower[i] + 1;
            let q = c % width;
            j[i] = self.lower[i] + q;
            c = (c - q) / width;
        }
        Ok(())
    }
}

/// Whether a node carries an active ODE (`Inner`) or a frozen payoff value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Inner,
    Outer,
}

/// Uniform tensor grid on `[0, upper_1] x ... x [0, upper_N]` with
/// `M_i + 1` points per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridShape {
    intervals: Vec<usize>,
    upper: Vec<f64>,
    spacing: Vec<f64>,
    offsets: Vec<usize>,
    full: Bijection,
}

impl GridShape {
    pub fn new(intervals: Vec<usize>, upper: Vec<f64>) -> Result<Self> {
        if intervals.len() != upper.len() {
            return Err(PdeError::DimensionMismatch { expected: intervals.len(), found: upper.len() });
        }
        if intervals.contains(&0) {
            return Err(PdeError::InvalidGrid("every direction needs at least one interval".into()));
        }
        if upper.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
            return Err(PdeError::InvalidGrid("upper bounds must be positive".into()));
        }
        let full = Bijection::new(vec![0; intervals.len()], intervals.clone())?;
        let spacing = intervals.iter().zip(&upper).map(|(&m, &u)| u / m as f64).collect();
        let offsets = full.strides.clone();
        Ok(Self { intervals, upper, spacing, offsets, full })
    }

    /// Grid with `2^l_i` intervals per direction.
    pub fn from_levels(levels: &[u32], upper: Vec<f64>) -> Result<Self> {
        let intervals = levels
            .iter()
            .map(|&l| 1usize.checked_shl(l).ok_or_else(|| PdeError::InvalidGrid(format!("level {l} too large"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(intervals, upper)
    }

    pub fn dims(&self) -> usize {
        self.intervals.len()
    }

    /// `M_i`.
    pub fn intervals(&self) -> &[usize] {
        &self.intervals
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `h_i = upper_i / M_i`.
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// `E_i`: flat-index step of direction `i`.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Total node count `M = prod (M_i + 1)`.
    pub fn size(&self) -> usize {
        self.full.len()
    }

    /// Interior node count `L = prod M_i`.
    pub fn interior_size(&self) -> usize {
        self.intervals.iter().product()
    }

    /// The zero-based bijection over all nodes.
    pub fn full_bijection(&self) -> &Bijection {
        &self.full
    }

    /// The one-based bijection over the interior multi-indices `1 <= k_i <= M_i`.
    pub fn interior_bijection(&self) -> Bijection {
        Bijection::new(vec![1; self.dims()], self.intervals.clone()).expect("valid interior bounds")
    }

    #[inline]
    pub fn coordinate(&self, direction: usize, j: usize) -> f64 {
        j as f64 * self.spacing[direction]
    }

    pub fn encode(&self, j: &[usize]) -> Result<usize> {
        self.full.encode(j)
    }

    pub fn decode(&self, flat: usize) -> Result<Vec<usize>> {
        self.full.decode(flat)
    }

    pub fn classify(&self, flat: usize) -> Result<NodeClass> {
        let j = self.decode(flat)?;
        Ok(if j.iter().all(|&x| x >= 1) { NodeClass::Inner } else { NodeClass::Outer })
    }

    /// `true` at every Inner node, indexed by flat index.
    pub fn inner_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.size()];
        let mut j = vec![0; self.dims()];
        for (flat, slot) in mask.iter_mut().enumerate() {
            self.full.decode_into(flat, &mut j).expect("in range");
            *slot = j.iter().all(|&x| x >= 1);
        }
        mask
    }

    /// The one-based bijection enumerating the tridiagonal lines of
    /// `direction`: one multi-index `1 <= k_r <= M_r` per remaining direction.
    pub fn line_bijection(&self, direction: usize) -> Result<Bijection> {
        if direction >= self.dims() {
            return Err(PdeError::IndexOutOfRange { index: direction, lo: 0, hi: self.dims() - 1 });
        }
        if self.dims() == 1 {
            return Bijection::new(vec![1], vec![1]);
        }
        let remaining: Vec<usize> =
            (0..self.dims()).filter(|&r| r != direction).map(|r| self.intervals[r]).collect();
        Bijection::new(vec![1; remaining.len()], remaining)
    }

    /// Flat index of node `j_direction = 1` on line `line` (one-based, as
    /// produced by [`GridShape::line_bijection`]).
    pub fn line_start(&self, direction: usize, lines: &Bijection, line: usize) -> Result<usize> {
        let mut j = vec![1; self.dims()];
        if self.dims() > 1 {
            let k = lines.decode(line)?;
            let mut it = k.into_iter();
            for (r, slot) in j.iter_mut().enumerate() {
                if r != direction {
                    *slot = it.next().expect("one entry per remaining direction");
                }
            }
        } else if line != 1 {
            return Err(PdeError::IndexOutOfRange { index: line, lo: 1, hi: 1 });
        }
        Ok(self.full.encode_unchecked(&j))
    }
}
