//! θ-method with a fixed number of Gauss-Seidel sweeps, written as a
//! W-method with `W = P` (lower triangle of `A` with diagonal):
//!
//! ```text
//! (I - theta dt P) K_r = dt A (W_n + theta sum_{j<r} K_j) - sum_{j<r} K_j
//! W_{n+1} = W_n + sum_r K_r
//! ```
//!
//! Kept as a comparison baseline. The operator is assembled explicitly, so
//! grids are capped in size.

use crate::assembly::{assemble, AssemblyPart, CsrMatrix, DEFAULT_ASSEMBLY_CAP};
use crate::error::{PdeError, Result};
use crate::grid::GridShape;
use crate::integrator::check_finite;
use crate::operator::{PdeCoefficients, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGsConfig {
    pub theta: f64,
    /// Gauss-Seidel sweeps per step.
    pub sweeps: usize,
    pub num_steps: usize,
    pub horizon: f64,
    pub node_cap: usize,
}

impl ThetaGsConfig {
    pub fn new(theta: f64, sweeps: usize, horizon: f64, num_steps: usize) -> Self {
        Self { theta, sweeps, num_steps, horizon, node_cap: DEFAULT_ASSEMBLY_CAP }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.num_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(PdeError::InvalidConfig(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if self.sweeps == 0 {
            return Err(PdeError::InvalidConfig("at least one Gauss-Seidel sweep is required".into()));
        }
        if self.num_steps == 0 {
            return Err(PdeError::InvalidConfig("num_steps must be at least 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(PdeError::InvalidConfig(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }
}

/// θ-GS stepper holding the assembled operator.
#[derive(Debug, Clone)]
pub struct ThetaGs {
    matrix: CsrMatrix,
    config: ThetaGsConfig,
}

impl ThetaGs {
    pub fn new<C: PdeCoefficients>(shape: &GridShape, model: &C, config: ThetaGsConfig) -> Result<Self> {
        config.validate()?;
        let matrix = assemble(shape, model, AssemblyPart::Full, config.node_cap)?;
        Ok(Self { matrix, config })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// One step from `w`.
    pub fn step(&self, w: &StateVector) -> Result<StateVector> {
        let n = self.matrix.dim();
        if w.len() != n {
            return Err(PdeError::DimensionMismatch { expected: n, found: w.len() });
        }
        let dt = self.config.dt();
        let theta = self.config.theta;
        let mut sum = vec![0.0; n];
        let mut arg = vec![0.0; n];
        let mut k = vec![0.0; n];
        for r in 0..self.config.sweeps {
            for ((a, &w), &s) in arg.iter_mut().zip(w.values()).zip(&sum) {
                *a = w + theta * s;
            }
            self.matrix.mul_vec(&arg, &mut k)?;
            for (k, &s) in k.iter_mut().zip(&sum) {
                *k = dt * *k - s;
            }
            self.matrix.solve_shifted_lower(theta * dt, &mut k)?;
            check_finite(&k, r + 1, "after the triangular solve")?;
            for (s, &k) in sum.iter_mut().zip(&k) {
                *s += k;
            }
        }
        Ok(StateVector::new(w.values().iter().zip(&sum).map(|(w, s)| w + s).collect()))
    }

    pub fn integrate(&self, w0: &StateVector) -> Result<StateVector> {
        let mut w = w0.clone();
        for _ in 0..self.config.num_steps {
            w = self.step(&w)?;
        }
        Ok(w)
    }
}

/// One θ-GS step; assembles the operator on every call.
pub fn theta_gs_step<C: PdeCoefficients>(shape: &GridShape, model: &C, w: &StateVector, config: &ThetaGsConfig) -> Result<StateVector> {
    ThetaGs::new(shape, model, config.clone())?.step(w)
}
