//! Sparse-grid combination technique over anisotropic full grids.
//!
//! The standard technique at level `n` in `d` dimensions combines
//!
//! ```text
//! u_n = sum_{q=0}^{d-1} (-1)^q C(d-1, q) sum_{|l|_1 = n-q} u_l
//! ```
//!
//! and the modified variant replaces every `l` by `l + psi * 1`. Each
//! component grid is solved independently, evaluated at one point by
//! multilinear interpolation, and the scalars are reduced in plan order.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{PdeError, Result};
use crate::grid::GridShape;
use crate::integrator::{AmfrW2, AmfrW2Config};
use crate::market::{DomainSpec, MarketData, ProductSpec, BPS};
use crate::operator::{PdeCoefficients, SpatialOperator, StatsSnapshot};

/// Default upper bound on `psi` for modified plans.
pub const DEFAULT_PSI_CAP: u32 = 2;

/// Default component-grid node cap (about 1.3 GB of solver state).
pub const DEFAULT_NODE_CAP: usize = 1 << 25;

/// Doubles held per node by one component solve.
pub const VECTORS_PER_NODE: usize = 5;

/// Approximate solver memory for a grid of `nodes` nodes.
pub fn estimated_bytes(nodes: usize) -> usize {
    nodes.saturating_mul(VECTORS_PER_NODE * std::mem::size_of::<f64>())
}

/// Per-direction refinement levels; direction `i` gets `2^{l_i}` intervals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelVector(Vec<u32>);

impl LevelVector {
    pub fn new(levels: Vec<u32>) -> Result<Self> {
        if levels.is_empty() {
            return Err(PdeError::InvalidGrid("level vector needs at least one direction".into()));
        }
        if let Some(&l) = levels.iter().find(|&&l| l >= usize::BITS - 1) {
            return Err(PdeError::InvalidGrid(format!("level {l} is too large")));
        }
        Ok(Self(levels))
    }

    pub fn isotropic(level: u32, d: usize) -> Result<Self> {
        Self::new(vec![level; d])
    }

    pub fn levels(&self) -> &[u32] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn l1(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `prod (2^{l_i} + 1)`, saturating.
    pub fn node_count(&self) -> u64 {
        self.0.iter().fold(1u64, |acc, &l| acc.saturating_mul((1u64 << l) + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Technique {
    Standard,
    Modified { psi: u32 },
}

impl Technique {
    pub fn shift(&self) -> u32 {
        match self {
            Technique::Standard => 0,
            Technique::Modified { psi } => *psi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    pub levels: LevelVector,
    pub weight: i64,
}

/// Weighted list of component grids.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationPlan {
    entries: Vec<PlanEntry>,
    technique: Technique,
    level: u32,
    dims: usize,
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// All `l >= 0` with `|l|_1 = sum` in `d` directions, first component descending.
fn compositions(sum: u32, d: usize, out: &mut Vec<Vec<u32>>) {
    fn rec(rest: u32, d: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if d == 1 {
            prefix.push(rest);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=rest).rev() {
            prefix.push(first);
            rec(rest - first, d - 1, prefix, out);
            prefix.pop();
        }
    }
    rec(sum, d, &mut Vec::with_capacity(d), out);
}

/// Standard combination plan of level `n` in `d` dimensions.
pub fn standard_plan(n: u32, d: usize) -> Result<CombinationPlan> {
    build_plan(n, d, Technique::Standard)
}

/// Modified plan with every level shifted by `psi`; `psi` above
/// [`DEFAULT_PSI_CAP`] is rejected.
pub fn modified_plan(n: u32, d: usize, psi: u32) -> Result<CombinationPlan> {
    modified_plan_with_cap(n, d, psi, DEFAULT_PSI_CAP)
}

/// [`modified_plan`] with an explicit cap on `psi`.
pub fn modified_plan_with_cap(n: u32, d: usize, psi: u32, cap: u32) -> Result<CombinationPlan> {
    if psi > cap {
        return Err(PdeError::InvalidPlan(format!("psi = {psi} exceeds the cap of {cap}")));
    }
    build_plan(n, d, Technique::Modified { psi })
}

fn build_plan(n: u32, d: usize, technique: Technique) -> Result<CombinationPlan> {
    if d == 0 {
        return Err(PdeError::InvalidPlan("dimension must be at least 1".into()));
    }
    if (n as usize) + 1 < d {
        return Err(PdeError::InvalidPlan(format!("level {n} is below d - 1 = {}", d - 1)));
    }
    let shift = technique.shift();
    let mut entries = Vec::new();
    for q in 0..d {
        let weight = binomial(d as u64 - 1, q as u64) as i64 * if q % 2 == 0 { 1 } else { -1 };
        let mut levels = Vec::new();
        compositions(n - q as u32, d, &mut levels);
        for l in levels {
            entries.push(PlanEntry { levels: LevelVector::new(l.into_iter().map(|v| v + shift).collect())?, weight });
        }
    }
    Ok(CombinationPlan { entries, technique, level: n, dims: d })
}

impl CombinationPlan {
    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn technique(&self) -> Technique {
        self.technique
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight_sum(&self) -> i64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// Expected entry count `sum_q C(n - q + d - 1, d - 1)`.
    pub fn expected_len(n: u32, d: usize) -> u64 {
        (0..d as u64).map(|q| binomial(n as u64 - q + d as u64 - 1, d as u64 - 1)).sum()
    }

    /// Largest component grid, in nodes.
    pub fn max_nodes(&self) -> u64 {
        self.entries.iter().map(|e| e.levels.node_count()).max().unwrap_or(0)
    }

    /// `weight,l_1,..,l_d` lines for auditing.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("weight");
        for i in 1..=self.dims {
            let _ = write!(s, ",l_{i}");
        }
        s.push('\n');
        for e in &self.entries {
            let _ = write!(s, "{}", e.weight);
            for l in e.levels.levels() {
                let _ = write!(s, ",{l}");
            }
            s.push('\n');
        }
        s
    }
}

/// Distinct grid points in the union of the plan's component grids.
///
/// A node of a dyadic grid has, per direction, a refinement depth `k`
/// (`k = 0` for the two endpoints, `2^{k-1}` odd multiples of `2^{-k}`
/// otherwise); it lies on grid `l` iff its depth is at most `l_i` in every
/// direction. The union is therefore counted by summing `prod c(k_i)` over
/// all depth vectors dominated by a finest-layer grid, i.e. with
/// `sum max(k_i - psi, 0) <= n`.
pub fn count_points(plan: &CombinationPlan) -> u64 {
    fn c(k: u32) -> u64 {
        if k == 0 {
            2
        } else {
            1u64 << (k - 1)
        }
    }
    fn rec(dir: usize, dims: usize, budget: u32, psi: u32, acc: u64) -> u64 {
        if dir == dims {
            return acc;
        }
        let mut total = 0u64;
        for k in 0..=budget + psi {
            let cost = k.saturating_sub(psi);
            if cost > budget {
                break;
            }
            total = total.saturating_add(rec(dir + 1, dims, budget - cost, psi, acc.saturating_mul(c(k))));
        }
        total
    }
    rec(0, plan.dims, plan.level, plan.technique.shift(), 1)
}

/// Sum of component-grid sizes, counting shared points once per grid.
pub fn count_points_with_multiplicity(plan: &CombinationPlan) -> u64 {
    plan.entries.iter().map(|e| e.levels.node_count()).fold(0u64, u64::saturating_add)
}

/// Everything a component solve needs besides its level vector.
#[derive(Clone)]
pub struct PricingProblem<'a, M: PdeCoefficients> {
    pub model: &'a M,
    pub upper: Vec<f64>,
    pub eval_point: Vec<f64>,
    /// Multiplier applied to the interpolated solution, e.g. discount
    /// factor times `10^4` for prices in basis points.
    pub scale: f64,
    pub integrator: AmfrW2Config,
    pub node_cap: usize,
    pub cache_coefficients: bool,
}

impl<'a, M: PdeCoefficients> PricingProblem<'a, M> {
    pub fn new(model: &'a M, upper: Vec<f64>, eval_point: Vec<f64>, scale: f64, integrator: AmfrW2Config) -> Result<Self> {
        if upper.len() != model.dims() {
            return Err(PdeError::DimensionMismatch { expected: model.dims(), found: upper.len() });
        }
        if eval_point.len() != model.dims() {
            return Err(PdeError::DimensionMismatch { expected: model.dims(), found: eval_point.len() });
        }
        if eval_point.iter().zip(&upper).any(|(&p, &u)| !(p >= 0.0 && p <= u)) {
            return Err(PdeError::PointOutsideDomain { point: eval_point });
        }
        integrator.validate()?;
        Ok(Self { model, upper, eval_point, scale, integrator, node_cap: DEFAULT_NODE_CAP, cache_coefficients: false })
    }

    /// Price in bps of `product` on `domain`, solved up to the domain horizon.
    pub fn for_product(
        model: &'a M,
        market: &MarketData,
        product: &ProductSpec,
        domain: &DomainSpec,
        num_steps: usize,
    ) -> Result<Self> {
        let scale = product.discount(market)? * BPS;
        Self::new(model, domain.upper_bounds(), domain.eval_point().to_vec(), scale, AmfrW2Config::new(domain.horizon(), num_steps))
    }

    pub fn with_integrator(mut self, integrator: AmfrW2Config) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_node_cap(mut self, cap: usize) -> Self {
        self.node_cap = cap;
        self
    }

    pub fn with_coefficient_cache(mut self, on: bool) -> Self {
        self.cache_coefficients = on;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentResult {
    pub levels: LevelVector,
    pub value: f64,
    pub nodes: usize,
    pub wall_time: Duration,
    pub work: StatsSnapshot,
}

/// Full-grid solve at `levels`, returning the scaled value at the evaluation point.
pub fn solve_component_grid<M: PdeCoefficients>(problem: &PricingProblem<'_, M>, levels: &LevelVector) -> Result<ComponentResult> {
    solve_component(problem, levels, true)
}

fn solve_component<M: PdeCoefficients>(problem: &PricingProblem<'_, M>, levels: &LevelVector, parallel: bool) -> Result<ComponentResult> {
    if levels.dims() != problem.model.dims() {
        return Err(PdeError::DimensionMismatch { expected: problem.model.dims(), found: levels.dims() });
    }
    let nodes = levels.node_count();
    if nodes > problem.node_cap as u64 {
        return Err(PdeError::GridTooLarge { nodes: nodes.min(usize::MAX as u64) as usize, cap: problem.node_cap });
    }
    let start = Instant::now();
    let shape = GridShape::from_levels(levels.levels(), problem.upper.clone())?;
    let mut op = SpatialOperator::new(shape, problem.model)?;
    if !parallel {
        op = op.sequential();
    }
    if problem.cache_coefficients {
        op = op.with_coefficient_cache();
    }
    let mut y = op.initial_state();
    let report = AmfrW2::new(&op, problem.integrator.clone())?.integrate(&mut y)?;
    let value = op.interpolate(&y, &problem.eval_point)? * problem.scale;
    Ok(ComponentResult { levels: levels.clone(), value, nodes: op.shape().size(), wall_time: start.elapsed(), work: report.work })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseResult {
    pub value: f64,
    pub components: Vec<ComponentResult>,
    pub grid_points: u64,
    pub wall_time: Duration,
}

/// Solves every component of `plan` on a pool of `threads` workers
/// (`None` for the rayon default) and reduces `sum w_k v_k` in plan order.
pub fn combine<M: PdeCoefficients>(plan: &CombinationPlan, problem: &PricingProblem<'_, M>, threads: Option<usize>) -> Result<SparseResult> {
    if plan.dims() != problem.model.dims() {
        return Err(PdeError::DimensionMismatch { expected: problem.model.dims(), found: plan.dims() });
    }
    if let Some(worst) = plan.entries.iter().find(|e| e.levels.node_count() > problem.node_cap as u64) {
        return Err(PdeError::ComponentFailed {
            levels: worst.levels.levels().to_vec(),
            source: Box::new(PdeError::GridTooLarge { nodes: worst.levels.node_count() as usize, cap: problem.node_cap }),
        });
    }
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| PdeError::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<Result<ComponentResult>> = pool.install(|| {
        plan.entries.par_iter().with_max_len(1).map(|e| solve_component(problem, &e.levels, false)).collect()
    });

    let mut components = Vec::with_capacity(results.len());
    let mut value = 0.0;
    for (entry, result) in plan.entries.iter().zip(results) {
        let component = result.map_err(|source| PdeError::ComponentFailed {
            levels: entry.levels.levels().to_vec(),
            source: Box::new(source),
        })?;
        value += entry.weight as f64 * component.value;
        components.push(component);
    }
    Ok(SparseResult { value, components, grid_points: count_points(plan), wall_time: start.elapsed() })
}
