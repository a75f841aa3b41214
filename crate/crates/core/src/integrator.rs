//! Two-stage AMFR-W time stepping for `Y' = F(Y)`.
//!
//! Each stage solves
//!
//! ```text
//! K0   = dt F(Y_n + sum a_rj K_j) + sum q_rj K_j
//! KN   = prod_{i=N..1} (I - nu dt A_i)^{-1} K0
//! K^0  = 2 K0 - KN + theta dt F(KN)
//! K_r  = prod_{i=N..1} (I - nu dt A_i)^{-1} K^0
//! ```
//!
//! and the step closes with `Y_{n+1} = Y_n + b_1 K_1 + b_2 K_2`. Since the
//! problem is linear, `F'(Y_n) v = F(v)`.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{PdeError, Result};
use crate::operator::{PdeCoefficients, SpatialOperator, StateVector, StatsSnapshot};

/// `(3 + sqrt 3) / 6`.
pub const THETA_ORDER3: f64 = 0.788_675_134_594_812_8;

#[derive(Debug, Clone, PartialEq)]
pub struct AmfrW2Config {
    pub theta: f64,
    /// AMF parameter; `None` selects `N * theta`.
    pub nu: Option<f64>,
    pub a21: f64,
    pub q21: f64,
    pub b1: f64,
    pub b2: f64,
    pub num_steps: usize,
    pub horizon: f64,
}

impl AmfrW2Config {
    pub fn new(horizon: f64, num_steps: usize) -> Self {
        Self {
            theta: THETA_ORDER3,
            nu: None,
            a21: 2.0 / 3.0,
            q21: -4.0 / 3.0,
            b1: 1.25,
            b2: 0.75,
            num_steps,
            horizon,
        }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = Some(nu);
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.num_steps as f64
    }

    /// Effective `nu` for an `n`-direction splitting.
    pub fn nu_for(&self, n: usize) -> f64 {
        self.nu.unwrap_or(n as f64 * self.theta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(PdeError::InvalidConfig(format!("theta must be positive, got {}", self.theta)));
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0) || !nu.is_finite() {
                return Err(PdeError::InvalidConfig(format!("nu must be positive, got {nu}")));
            }
        }
        if self.num_steps == 0 {
            return Err(PdeError::InvalidConfig("num_steps must be at least 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(PdeError::InvalidConfig(format!("horizon must be positive, got {}", self.horizon)));
        }
        for (name, v) in [("a21", self.a21), ("q21", self.q21), ("b1", self.b1), ("b2", self.b2)] {
            if !v.is_finite() {
                return Err(PdeError::InvalidConfig(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Work and timing totals of one [`AmfrW2::integrate`] call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegrationReport {
    pub steps: usize,
    pub work: StatsSnapshot,
    pub wall_time: Duration,
    /// Per-step wall times, when recording was requested.
    pub step_times: Vec<Duration>,
}

/// AMFR-W2 integrator bound to one operator, owning its stage buffers.
pub struct AmfrW2<'op, 'm, C: PdeCoefficients> {
    op: &'op SpatialOperator<'m, C>,
    config: AmfrW2Config,
    dt: f64,
    nu_dt: f64,
    k1: Vec<f64>,
    k2: Vec<f64>,
    arg: Vec<f64>,
    k0: Vec<f64>,
    record_steps: bool,
}

impl<'op, 'm, C: PdeCoefficients> AmfrW2<'op, 'm, C> {
    pub fn new(op: &'op SpatialOperator<'m, C>, config: AmfrW2Config) -> Result<Self> {
        config.validate()?;
        let len = op.shape().size();
        let dt = config.dt();
        let nu_dt = config.nu_for(op.shape().dims()) * dt;
        Ok(Self {
            op,
            config,
            dt,
            nu_dt,
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            arg: vec![0.0; len],
            k0: vec![0.0; len],
            record_steps: false,
        })
    }

    pub fn record_step_times(mut self, on: bool) -> Self {
        self.record_steps = on;
        self
    }

    pub fn config(&self) -> &AmfrW2Config {
        &self.config
    }

    /// Computes stage `stage` (1-based) into `out` given the earlier stage
    /// in `prior` (ignored for the first stage).
    fn stage(&mut self, y: &[f64], stage: usize, prior: Option<&[f64]>, out: &mut [f64]) -> Result<()> {
        let op = self.op;
        let dt = self.dt;
        match prior {
            None => {
                op.apply_into(y, out)?;
                par_map(out, |v| dt * *v);
            }
            Some(k1) => {
                let a21 = self.config.a21;
                let q21 = self.config.q21;
                self.arg.par_iter_mut().zip(y.par_iter().zip(k1.par_iter())).for_each(|(a, (&y, &k))| *a = y + a21 * k);
                op.apply_into(&self.arg, out)?;
                out.par_iter_mut().zip(k1.par_iter()).for_each(|(o, &k)| *o = dt * *o + q21 * k);
            }
        }
        check_finite(out, stage, "after the first derivative evaluation")?;
        self.k0.copy_from_slice(out);
        self.sweep(out)?;
        check_finite(out, stage, "after the first directional sweep")?;

        op.apply_into(out, &mut self.arg)?;
        let theta_dt = self.config.theta * dt;
        out.par_iter_mut()
            .zip(self.k0.par_iter().zip(self.arg.par_iter()))
            .for_each(|(kn, (&k0, &f))| *kn = 2.0 * k0 - *kn + theta_dt * f);
        check_finite(out, stage, "after the refinement evaluation")?;
        self.sweep(out)?;
        check_finite(out, stage, "after the second directional sweep")
    }

    fn sweep(&self, values: &mut [f64]) -> Result<()> {
        for i in 0..self.op.shape().dims() {
            self.op.directional_solve_in_place(i, self.nu_dt, values)?;
        }
        Ok(())
    }

    /// Advances `y` by one step in place.
    pub fn step(&mut self, y: &mut StateVector) -> Result<()> {
        let mut k1 = std::mem::take(&mut self.k1);
        let mut k2 = std::mem::take(&mut self.k2);
        let result = self
            .stage(y.values(), 1, None, &mut k1)
            .and_then(|_| self.stage(y.values(), 2, Some(&k1), &mut k2));
        if result.is_ok() {
            let (b1, b2) = (self.config.b1, self.config.b2);
            y.values_mut()
                .par_iter_mut()
                .zip(k1.par_iter().zip(k2.par_iter()))
                .for_each(|(y, (&a, &b))| *y += b1 * a + b2 * b);
        }
        self.k1 = k1;
        self.k2 = k2;
        result
    }

    /// Applies `num_steps` uniform steps to `y`.
    pub fn integrate(&mut self, y: &mut StateVector) -> Result<IntegrationReport> {
        if y.len() != self.op.shape().size() {
            return Err(PdeError::DimensionMismatch { expected: self.op.shape().size(), found: y.len() });
        }
        let before = self.op.stats().snapshot();
        let start = Instant::now();
        let mut step_times = Vec::new();
        for _ in 0..self.config.num_steps {
            let t = Instant::now();
            self.step(y)?;
            if self.record_steps {
                step_times.push(t.elapsed());
            }
        }
        Ok(IntegrationReport {
            steps: self.config.num_steps,
            work: self.op.stats().snapshot().since(&before),
            wall_time: start.elapsed(),
            step_times,
        })
    }
}

/// One AMFR-W2 stage: `K_1` when `prior` is empty, `K_2` from `prior = [K_1]`.
pub fn amfrw_stage<C: PdeCoefficients>(
    op: &SpatialOperator<'_, C>,
    y: &StateVector,
    prior: &[&StateVector],
    config: &AmfrW2Config,
) -> Result<StateVector> {
    if prior.len() > 1 {
        return Err(PdeError::InvalidConfig(format!("a two-stage method has at most one prior stage, got {}", prior.len())));
    }
    let mut w = AmfrW2::new(op, config.clone())?;
    let mut out = vec![0.0; op.shape().size()];
    w.stage(y.values(), prior.len() + 1, prior.first().map(|k| k.values()), &mut out)?;
    Ok(StateVector::new(out))
}

/// One AMFR-W2 step from `y`.
pub fn amfrw_step<C: PdeCoefficients>(op: &SpatialOperator<'_, C>, y: &StateVector, config: &AmfrW2Config) -> Result<StateVector> {
    let mut next = y.clone();
    AmfrW2::new(op, config.clone())?.step(&mut next)?;
    Ok(next)
}

/// `Y(T)` from `Y(0)` with `config.num_steps` steps.
pub fn integrate<C: PdeCoefficients>(op: &SpatialOperator<'_, C>, y0: &StateVector, config: &AmfrW2Config) -> Result<(StateVector, IntegrationReport)> {
    let mut y = y0.clone();
    let report = AmfrW2::new(op, config.clone())?.integrate(&mut y)?;
    Ok((y, report))
}

fn par_map(values: &mut [f64], f: impl Fn(&f64) -> f64 + Sync) {
    values.par_iter_mut().for_each(|v| *v = f(v));
}

pub(crate) fn check_finite(values: &[f64], stage: usize, position: &str) -> Result<()> {
    match values.par_iter().position_any(|v| !v.is_finite()) {
        None => Ok(()),
        Some(at) => Err(PdeError::NonFinite { stage, position: format!("{position}, node {at}") }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;

    #[test]
    fn default_coefficients() {
        let c = AmfrW2Config::new(1.0, 4);
        let nu3 = c.nu_for(3);
        assert!((c.theta - (3.0 + 3f64.sqrt()) / 6.0).abs() < 1e-15);
        assert_eq!(nu3, 3.0 * c.theta);
        assert_eq!(c.clone().with_nu(0.5).nu_for(3), 0.5);
        assert_eq!(c.dt(), 0.25);
        assert!(AmfrW2Config::new(1.0, 0).validate().is_err());
        assert!(AmfrW2Config::new(1.0, 1).with_theta(0.0).validate().is_err());
        assert!(AmfrW2Config::new(1.0, 1).with_nu(-1.0).validate().is_err());
        assert!(AmfrW2Config::new(0.0, 1).validate().is_err());
    }

    struct Blowup;
    impl PdeCoefficients for Blowup {
        fn dims(&self) -> usize {
            1
        }
        fn diffusion(&self, _i: usize, _x: &[f64]) -> f64 {
            0.0
        }
        fn mixed(&self, _i: usize, _k: usize, _x: &[f64]) -> f64 {
            0.0
        }
        fn advection(&self, _i: usize, _x: &[f64]) -> f64 {
            f64::INFINITY
        }
        fn initial(&self, x: &[f64]) -> f64 {
            x[0]
        }
    }

    #[test]
    fn non_finite_is_reported_with_position() {
        let model = Blowup;
        let op = SpatialOperator::new(GridShape::new(vec![4], vec![1.0]).unwrap(), &model).unwrap();
        let err = amfrw_step(&op, &op.initial_state(), &AmfrW2Config::new(1.0, 1)).unwrap_err();
        match err {
            PdeError::NonFinite { stage, position } => {
                assert_eq!(stage, 1);
                assert!(position.contains("first derivative"), "{position}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
