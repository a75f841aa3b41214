//! Market data, products and the SABR-LMM PDE coefficients.
//!
//! The PDE is posed in time-to-maturity on the box
//! `[0, F_1^max] x ... x [0, F_{N-1}^max] x [0, V^max]`, where the first
//! `N - 1` coordinates are the forward rates the product depends on and the
//! last one is the common stochastic volatility `V`:
//!
//! ```text
//! u_t = sum_i d_i u_ii + sum_{i<k} m_ik u_ik + sum_{i=2}^{N-1} a_i u_i
//! ```
//!
//! Directions are zero-based throughout this crate: direction `i < N - 1`
//! is the `i`-th participating forward, direction `N - 1` is `V`.

use statrs::function::erf::erfc;

use crate::error::{PdeError, Result};
use crate::operator::PdeCoefficients;

/// One basis point.
pub const BPS: f64 = 1.0e4;

/// Tenor structure, initial forward curve and SABR-LMM parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    tenor_dates: Vec<f64>,
    initial_forwards: Vec<f64>,
    alphas: Vec<f64>,
    phis: Vec<f64>,
    strike: f64,
    sigma: f64,
    lambda: f64,
    beta: f64,
}

impl MarketData {
    /// Builds and validates a market.
    ///
    /// Forward `i` accrues over `[T_i, T_{i+1}]`, so `tenor_dates` needs at
    /// least one more entry than `initial_forwards`. `alphas` and `phis` are
    /// given per forward.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        tenor_dates: Vec<f64>,
        initial_forwards: Vec<f64>,
        alphas: Vec<f64>,
        phis: Vec<f64>,
        strike: f64,
        sigma: f64,
        lambda: f64,
        beta: f64,
    ) -> Result<Self> {
        let bad = |msg: String| Err(PdeError::InvalidMarket(msg));
        if initial_forwards.is_empty() {
            return bad("at least one forward rate is required".into());
        }
        if tenor_dates.len() < initial_forwards.len() + 1 {
            return bad(format!(
                "{} forwards need {} tenor dates, got {}",
                initial_forwards.len(),
                initial_forwards.len() + 1,
                tenor_dates.len()
            ));
        }
        if tenor_dates.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("tenor dates must be strictly increasing".into());
        }
        if alphas.len() != initial_forwards.len() || phis.len() != initial_forwards.len() {
            return bad("alphas and phis must have one entry per forward".into());
        }
        if alphas.iter().any(|&a| !(a >= 0.0)) {
            return bad("alphas must be non-negative".into());
        }
        if phis.iter().any(|&p| !(p.abs() <= 1.0)) {
            return bad("phis must lie in [-1, 1]".into());
        }
        if initial_forwards.iter().any(|f| !f.is_finite()) {
            return bad("initial forwards must be finite".into());
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return bad(format!("sigma must be non-negative, got {sigma}"));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return bad(format!("lambda must be non-negative, got {lambda}"));
        }
        if !(0.0..=1.0).contains(&beta) {
            return bad(format!("beta must lie in [0, 1], got {beta}"));
        }
        if !strike.is_finite() {
            return bad("strike must be finite".into());
        }
        Ok(Self {
            tenor_dates,
            initial_forwards,
            alphas,
            phis,
            strike,
            sigma,
            lambda,
            beta,
        })
    }

    /// Semi-annual curve `T_i = 0.5 i` with six forwards, strike 1.1%,
    /// `beta = 1`. `sigma`, `phi` (same for every forward) and `lambda` are
    /// supplied by the caller.
    pub fn semiannual_sample(sigma: f64, phi: f64, lambda: f64) -> Self {
        let tenor_dates = (0..=6).map(|i| 0.5 * i as f64).collect();
        let forwards = vec![0.0112, 0.0118, 0.0122, 0.0126, 0.0130, 0.0135];
        let alphas = vec![0.0, 0.2366, 0.2145, 0.2221, 0.2068, 0.1932];
        let phis = vec![phi; forwards.len()];
        Self::new(tenor_dates, forwards, alphas, phis, 0.011, sigma, lambda, 1.0)
            .expect("sample market is valid")
    }

    pub fn tenor_dates(&self) -> &[f64] {
        &self.tenor_dates
    }

    pub fn initial_forwards(&self) -> &[f64] {
        &self.initial_forwards
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_forwards(&self) -> usize {
        self.initial_forwards.len()
    }

    /// Accrual period `T_{i+1} - T_i` of forward `i`.
    pub fn tau(&self, i: usize) -> Result<f64> {
        self.check_forward(i)?;
        Ok(self.tenor_dates[i + 1] - self.tenor_dates[i])
    }

    /// Returns a copy with a different strike.
    pub fn with_strike(mut self, strike: f64) -> Self {
        self.strike = strike;
        self
    }

    /// Returns a copy with a different forward correlation decay.
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    fn check_forward(&self, i: usize) -> Result<()> {
        if i >= self.num_forwards() {
            return Err(PdeError::IndexOutOfRange { index: i, lo: 0, hi: self.num_forwards() - 1 });
        }
        Ok(())
    }

    /// Forward-forward correlation `exp(-lambda |T_i - T_j|)`.
    pub fn correlation(&self, i: usize, j: usize) -> Result<f64> {
        self.check_forward(i)?;
        self.check_forward(j)?;
        Ok((-self.lambda * (self.tenor_dates[i] - self.tenor_dates[j]).abs()).exp())
    }

    /// Zero-coupon bond `P(0, T_j)` implied by the initial forward curve.
    pub fn discount_factor(&self, j: usize) -> Result<f64> {
        if j > self.num_forwards() {
            return Err(PdeError::IndexOutOfRange { index: j, lo: 0, hi: self.num_forwards() });
        }
        Ok((0..j)
            .map(|k| 1.0 / (1.0 + (self.tenor_dates[k + 1] - self.tenor_dates[k]) * self.initial_forwards[k]))
            .product())
    }

    /// Black-76 price, in bps, of the caplet on forward `a` (reset `T_a`,
    /// paid at `T_{a+1}`) under the deterministic volatility `alpha_a`.
    pub fn black_caplet_price(&self, a: usize) -> Result<f64> {
        self.check_forward(a)?;
        let vol = self.alphas[a];
        let fwd = self.initial_forwards[a];
        let strike = self.strike;
        if !(vol > 0.0) {
            return Err(PdeError::InvalidMarket(format!("Black price needs alpha > 0, got {vol}")));
        }
        if !(fwd > 0.0) || !(strike > 0.0) {
            return Err(PdeError::InvalidMarket("Black price needs positive forward and strike".into()));
        }
        let expiry = self.tenor_dates[a];
        let tau = self.tau(a)?;
        let std_dev = vol * expiry.sqrt();
        let d1 = ((fwd / strike).ln() + 0.5 * std_dev * std_dev) / std_dev;
        let d2 = d1 - std_dev;
        let undiscounted = fwd * norm_cdf(d1) - strike * norm_cdf(d2);
        Ok(self.discount_factor(a + 1)? * tau * undiscounted * BPS)
    }
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductKind {
    Caplet,
    Swaption,
}

/// A caplet on forward `a`, or a `T_a x (T_b - T_a)` payer swaption.
///
/// The product depends on forwards `a..b`, so its PDE has `b - a + 1`
/// dimensions (one per forward plus the volatility).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductSpec {
    kind: ProductKind,
    a: usize,
    b: usize,
}

impl ProductSpec {
    pub fn caplet(a: usize) -> Result<Self> {
        Self::new(ProductKind::Caplet, a, a + 1)
    }

    pub fn swaption(a: usize, b: usize) -> Result<Self> {
        Self::new(ProductKind::Swaption, a, b)
    }

    pub fn new(kind: ProductKind, a: usize, b: usize) -> Result<Self> {
        if a == 0 || b <= a {
            return Err(PdeError::InvalidProduct(format!("need 0 < a < b, got a={a}, b={b}")));
        }
        if kind == ProductKind::Caplet && b != a + 1 {
            return Err(PdeError::InvalidProduct("a caplet depends on exactly one forward".into()));
        }
        Ok(Self { kind, a, b })
    }

    pub fn kind(&self) -> ProductKind {
        self.kind
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn b(&self) -> usize {
        self.b
    }

    /// Indices of the forwards the payoff depends on.
    pub fn forwards(&self) -> std::ops::Range<usize> {
        self.a..self.b
    }

    /// PDE dimension `N`.
    pub fn dims(&self) -> usize {
        self.b - self.a + 1
    }

    pub fn check_market(&self, market: &MarketData) -> Result<()> {
        if self.b > market.num_forwards() {
            return Err(PdeError::InvalidProduct(format!(
                "product needs forwards {}..{} but the market has {}",
                self.a,
                self.b,
                market.num_forwards()
            )));
        }
        Ok(())
    }

    /// Maturity `T_a`, the PDE time horizon.
    pub fn maturity(&self, market: &MarketData) -> Result<f64> {
        self.check_market(market)?;
        Ok(market.tenor_dates()[self.a])
    }

    /// Factor turning the PDE solution into a present value.
    ///
    /// Caplets are valued in units of `P(., T_{a+1})`, swaptions in units
    /// of `P(., T_a)`.
    pub fn discount(&self, market: &MarketData) -> Result<f64> {
        self.check_market(market)?;
        match self.kind {
            ProductKind::Caplet => market.discount_factor(self.a + 1),
            ProductKind::Swaption => market.discount_factor(self.a),
        }
    }
}

/// Computational box and the point at which the price is read off.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    f_max: Vec<f64>,
    v_max: f64,
    horizon: f64,
    eval_point: Vec<f64>,
}

impl DomainSpec {
    /// Box with a common forward bound, evaluated at today's forwards and
    /// volatility level `v0`.
    pub fn new(market: &MarketData, product: &ProductSpec, f_max: f64, v_max: f64, v0: f64) -> Result<Self> {
        let forwards = product.forwards().len();
        Self::with_bounds(market, product, vec![f_max; forwards], v_max, v0)
    }

    pub fn with_bounds(
        market: &MarketData,
        product: &ProductSpec,
        f_max: Vec<f64>,
        v_max: f64,
        v0: f64,
    ) -> Result<Self> {
        product.check_market(market)?;
        if f_max.len() != product.forwards().len() {
            return Err(PdeError::DimensionMismatch { expected: product.forwards().len(), found: f_max.len() });
        }
        let mut eval_point: Vec<f64> = product.forwards().map(|i| market.initial_forwards()[i]).collect();
        eval_point.push(v0);
        let domain = Self { f_max, v_max, horizon: product.maturity(market)?, eval_point };
        domain.validate()?;
        Ok(domain)
    }

    fn validate(&self) -> Result<()> {
        let uppers = self.upper_bounds();
        if uppers.iter().any(|&u| !(u > 0.0) || !u.is_finite()) {
            return Err(PdeError::InvalidDomain("all upper bounds must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(PdeError::InvalidDomain("horizon must be positive".into()));
        }
        for (x, u) in self.eval_point.iter().zip(&uppers) {
            if !(*x > 0.0 && *x < *u) {
                return Err(PdeError::InvalidDomain(format!(
                    "evaluation point {:?} is not strictly inside the domain",
                    self.eval_point
                )));
            }
        }
        Ok(())
    }

    /// Replaces the evaluation point `(F_1, ..., F_{N-1}, V)`.
    pub fn with_eval_point(mut self, point: Vec<f64>) -> Result<Self> {
        if point.len() != self.eval_point.len() {
            return Err(PdeError::DimensionMismatch { expected: self.eval_point.len(), found: point.len() });
        }
        self.eval_point = point;
        self.validate()?;
        Ok(self)
    }

    /// Replaces the time horizon (the product maturity by default).
    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    pub fn f_max(&self) -> &[f64] {
        &self.f_max
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn eval_point(&self) -> &[f64] {
        &self.eval_point
    }

    /// `(F_1^max, ..., F_{N-1}^max, V^max)`.
    pub fn upper_bounds(&self) -> Vec<f64> {
        let mut u = self.f_max.clone();
        u.push(self.v_max);
        u
    }
}

/// One inequality of the outflow-boundary sufficient condition that failed.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainViolation {
    /// `tau_i F_i^max <= beta / (2 - beta)` for an inner forward (zero-based).
    InnerForward { direction: usize, lhs: f64, rhs: f64 },
    /// `tau_{N-1} F_{N-1}^max <= beta / (1 - beta)` for the last forward.
    LastForward { lhs: f64, rhs: f64 },
}

impl std::fmt::Display for DomainViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DomainViolation::InnerForward { direction, lhs, rhs } => {
                write!(f, "forward direction {direction}: tau * F_max = {lhs} exceeds {rhs}")
            }
            DomainViolation::LastForward { lhs, rhs } => write!(f, "last forward: tau * F_max = {lhs} exceeds {rhs}"),
        }
    }
}

/// Checks the practical conditions under which every upper face is an
/// outflow boundary, justifying the Neumann conditions there. Advisory.
pub fn validate_domain(market: &MarketData, product: &ProductSpec, domain: &DomainSpec) -> Vec<DomainViolation> {
    let beta = market.beta();
    let mut out = Vec::new();
    if beta <= 0.0 {
        return out;
    }
    let forwards: Vec<usize> = product.forwards().collect();
    let nf = forwards.len();
    let tau_fmax = |local: usize| {
        let g = forwards[local];
        (market.tenor_dates()[g + 1] - market.tenor_dates()[g]) * domain.f_max()[local]
    };
    // one-based 2..=N-2, i.e. zero-based 1..=nf-2
    let inner_rhs = beta / (2.0 - beta);
    for local in 1..nf.saturating_sub(1) {
        let lhs = tau_fmax(local);
        if lhs > inner_rhs {
            out.push(DomainViolation::InnerForward { direction: local, lhs, rhs: inner_rhs });
        }
    }
    if beta < 1.0 {
        let rhs = beta / (1.0 - beta);
        let lhs = tau_fmax(nf - 1);
        if lhs > rhs {
            out.push(DomainViolation::LastForward { lhs, rhs });
        }
    }
    out
}

#[inline]
fn pow_beta(x: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        x
    } else if beta == 0.0 {
        1.0
    } else if beta == 0.5 {
        x.sqrt()
    } else {
        x.powf(beta)
    }
}

/// `Phi_beta(x, tau) = tau x^beta / (1 + tau x)`.
#[inline]
pub fn phi_beta(x: f64, tau: f64, beta: f64) -> f64 {
    tau * pow_beta(x, beta) / (1.0 + tau * x)
}

/// PDE coefficients and payoff of one product, in local (zero-based)
/// directions.
#[derive(Debug, Clone)]
pub struct SabrLmmModel {
    kind: ProductKind,
    alphas: Vec<f64>,
    taus: Vec<f64>,
    phis: Vec<f64>,
    /// Row-major `nf x nf` forward correlations.
    rho: Vec<f64>,
    sigma: f64,
    beta: f64,
    strike: f64,
}

impl SabrLmmModel {
    pub fn new(market: &MarketData, product: &ProductSpec) -> Result<Self> {
        product.check_market(market)?;
        let fw: Vec<usize> = product.forwards().collect();
        let nf = fw.len();
        let mut rho = vec![0.0; nf * nf];
        for (r, &gi) in fw.iter().enumerate() {
            for (c, &gj) in fw.iter().enumerate() {
                rho[r * nf + c] = market.correlation(gi, gj)?;
            }
        }
        Ok(Self {
            kind: product.kind(),
            alphas: fw.iter().map(|&g| market.alphas()[g]).collect(),
            taus: fw.iter().map(|&g| market.tau(g)).collect::<Result<_>>()?,
            phis: fw.iter().map(|&g| market.phis()[g]).collect(),
            rho,
            sigma: market.sigma(),
            beta: market.beta(),
            strike: market.strike(),
        })
    }

    fn nf(&self) -> usize {
        self.alphas.len()
    }

    /// Correlation between local forwards `i` and `j`.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.rho[i * self.nf() + j]
    }

    fn check_direction(&self, i: usize) -> Result<()> {
        if i > self.nf() {
            return Err(PdeError::IndexOutOfRange { index: i, lo: 0, hi: self.nf() });
        }
        Ok(())
    }

    /// `d_i(F_i, F_N)`; `f_i` is ignored for the volatility direction.
    pub fn diffusion_coeff(&self, i: usize, f_i: f64, v: f64) -> Result<f64> {
        self.check_direction(i)?;
        Ok(self.diffusion_raw(i, f_i, v))
    }

    #[inline]
    fn diffusion_raw(&self, i: usize, f_i: f64, v: f64) -> f64 {
        if i < self.nf() {
            let fb = pow_beta(f_i, self.beta);
            0.5 * self.alphas[i] * self.alphas[i] * self.rho[i * self.nf() + i] * fb * fb * v * v
        } else {
            0.5 * self.sigma * self.sigma * v * v
        }
    }

    /// `m_ik(F_i, F_k, F_N)` for `i < k`; `f_k` is ignored when `k` is the
    /// volatility direction.
    pub fn mixed_coeff(&self, i: usize, k: usize, f_i: f64, f_k: f64, v: f64) -> Result<f64> {
        self.check_direction(k)?;
        if i >= k {
            return Err(PdeError::InvalidGrid(format!("mixed coefficient needs i < k, got i={i}, k={k}")));
        }
        Ok(self.mixed_raw(i, k, f_i, f_k, v))
    }

    #[inline]
    fn mixed_raw(&self, i: usize, k: usize, f_i: f64, f_k: f64, v: f64) -> f64 {
        let nf = self.nf();
        let v2 = v * v;
        if k < nf {
            self.alphas[i] * self.alphas[k] * self.rho[i * nf + k] * pow_beta(f_i, self.beta) * pow_beta(f_k, self.beta) * v2
        } else {
            self.alphas[i] * self.sigma * self.phis[i] * pow_beta(f_i, self.beta) * v2
        }
    }

    /// Drift coefficient `a_i` for the inner forwards `1 <= i <= N - 2`;
    /// `forwards` holds at least `F_0..=F_i` (local).
    pub fn advection_coeff(&self, i: usize, forwards: &[f64], v: f64) -> Result<f64> {
        if self.nf() < 2 {
            return Err(PdeError::InvalidGrid("advection terms need N >= 3".into()));
        }
        if i == 0 || i >= self.nf() {
            return Err(PdeError::IndexOutOfRange { index: i, lo: 1, hi: self.nf() - 1 });
        }
        if forwards.len() <= i {
            return Err(PdeError::DimensionMismatch { expected: i + 1, found: forwards.len() });
        }
        Ok(self.advection_raw(i, forwards, v))
    }

    #[inline]
    fn advection_raw(&self, i: usize, x: &[f64], v: f64) -> f64 {
        let nf = self.nf();
        let mut sum = 0.0;
        for j in 1..=i {
            sum += self.alphas[j] * self.rho[i * nf + j] * phi_beta(x[j], self.taus[j], self.beta);
        }
        self.alphas[i] * sum * pow_beta(x[i], self.beta) * v * v
    }

    /// Terminal payoff in units of the product's numeraire bond.
    pub fn payoff(&self, forwards: &[f64]) -> f64 {
        match self.kind {
            ProductKind::Caplet => self.taus[0] * (forwards[0] - self.strike).max(0.0),
            ProductKind::Swaption => {
                let mut bond = 1.0;
                let mut swap = 0.0;
                for ((&f, &tau), _) in forwards.iter().zip(&self.taus).zip(0..self.nf()) {
                    bond /= 1.0 + tau * f;
                    swap += tau * (f - self.strike) * bond;
                }
                swap.max(0.0)
            }
        }
    }
}

impl PdeCoefficients for SabrLmmModel {
    fn dims(&self) -> usize {
        self.nf() + 1
    }

    #[inline]
    fn diffusion(&self, i: usize, x: &[f64]) -> f64 {
        let v = x[self.nf()];
        self.diffusion_raw(i, x[i], v)
    }

    #[inline]
    fn mixed(&self, i: usize, k: usize, x: &[f64]) -> f64 {
        let v = x[self.nf()];
        self.mixed_raw(i, k, x[i], x[k], v)
    }

    fn has_mixed(&self) -> bool {
        self.nf() >= 2 || (self.sigma != 0.0 && self.phis.iter().any(|&p| p != 0.0))
    }

    #[inline]
    fn advection(&self, i: usize, x: &[f64]) -> f64 {
        if i == 0 || i + 1 >= self.dims() {
            return 0.0;
        }
        self.advection_raw(i, x, x[self.nf()])
    }

    fn has_advection(&self) -> bool {
        self.nf() >= 2
    }

    fn initial(&self, x: &[f64]) -> f64 {
        self.payoff(&x[..self.nf()])
    }
}
