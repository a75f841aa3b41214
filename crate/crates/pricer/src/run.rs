//! Executes a [`RunConfig`] and renders convergence tables.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use lmm_pde::combination::{modified_plan_with_cap, PricingProblem};
use lmm_pde::{
    combine, solve_component_grid, standard_plan, validate_domain, DomainSpec, DomainViolation, LevelVector, SabrLmmModel,
};

use crate::config::{Reference, RunConfig, TechniqueKind};
use crate::error::{CliError, Result};

/// CSV column names.
pub const CSV_HEADER: [&str; 6] = ["level", "steps", "solution_bps", "error_bps", "time_s", "grid_points"];

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub level: u32,
    pub steps: usize,
    pub solution: f64,
    /// `|solution - reference|`, present iff a reference is configured.
    pub error: Option<f64>,
    pub time: Duration,
    pub grid_points: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<TableRow>,
    pub reference: Option<f64>,
    /// Outflow-condition violations of the domain; advisory only.
    pub warnings: Vec<DomainViolation>,
}

fn read_reference(path: &Path) -> Result<f64> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    text.trim()
        .parse()
        .map_err(|_| CliError::ReferenceUnavailable(format!("{} does not hold a single number", path.display())))
}

/// Prices every `(steps, level)` pair of the configuration, steps outermost.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let market = config.market_data()?;
    let product = config.product_spec()?;
    let nf = product.forwards().len();
    let d = product.dims();

    let f_max = if config.domain.f_max.len() == 1 { vec![config.domain.f_max[0]; nf] } else { config.domain.f_max.clone() };
    let mut domain = DomainSpec::with_bounds(&market, &product, f_max, config.domain.v_max, config.domain.v0)?;
    if let Some(p) = &config.domain.eval_point {
        domain = domain.with_eval_point(p.clone())?;
    }
    if let Some(h) = config.domain.horizon {
        domain = domain.with_horizon(h)?;
    }
    let warnings = validate_domain(&market, &product, &domain);

    let reference = match &config.output.reference {
        Reference::Black => Some(market.black_caplet_price(product.a())?),
        Reference::File(p) => Some(read_reference(p)?),
        Reference::None => None,
    };

    let model = SabrLmmModel::new(&market, &product)?;
    let solver = &config.solver;
    let pool = thread_pool(solver.threads)?;
    let mut rows = Vec::new();
    for &steps in &solver.steps {
        let mut integrator = lmm_pde::AmfrW2Config::new(domain.horizon(), steps).with_theta(solver.theta);
        integrator.nu = solver.nu;
        let problem = PricingProblem::for_product(&model, &market, &product, &domain, steps)?
            .with_integrator(integrator)
            .with_node_cap(solver.node_cap);
        for &level in &solver.levels {
            let (solution, time, grid_points) = match solver.technique {
                TechniqueKind::Full => {
                    let levels = LevelVector::isotropic(level, d)?;
                    let solve = || solve_component_grid(&problem, &levels);
                    let r = match &pool {
                        Some(p) => p.install(solve)?,
                        None => solve()?,
                    };
                    (r.value, r.wall_time, r.nodes as u64)
                }
                TechniqueKind::Sparse | TechniqueKind::Modified => {
                    let plan = match solver.psi {
                        Some(psi) => modified_plan_with_cap(level, d, psi, solver.psi_cap)?,
                        None => standard_plan(level, d)?,
                    };
                    let r = combine(&plan, &problem, solver.threads)?;
                    (r.value, r.wall_time, r.grid_points)
                }
            };
            rows.push(TableRow { level, steps, solution, error: reference.map(|r| (solution - r).abs()), time, grid_points });
        }
    }
    Ok(RunOutput { rows, reference, warnings })
}

/// Dedicated pool for full-grid solves; sparse runs size their own pool.
fn thread_pool(threads: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    threads
        .map(|t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Pde(lmm_pde::PdeError::InvalidConfig(format!("thread pool: {e}"))))
        })
        .transpose()
}

fn csv_fields(row: &TableRow) -> [String; 6] {
    [
        row.level.to_string(),
        row.steps.to_string(),
        format!("{:.6}", row.solution),
        row.error.map(|e| format!("{e:.6e}")).unwrap_or_default(),
        format!("{:.3}", row.time.as_secs_f64()),
        row.grid_points.to_string(),
    ]
}

/// Renders rows as CSV with the standard header.
pub fn to_csv(rows: &[TableRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(csv_fields(row))?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

/// Writes the CSV next to `path` and renames it into place.
pub fn write_csv_atomic(path: &Path, rows: &[TableRow]) -> Result<()> {
    let bytes = to_csv(rows)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(&bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Aligned plain-text table.
pub fn format_table(rows: &[TableRow]) -> String {
    let header = ["Level", "Steps", "Solution", "Error", "Time", "Grid points"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.level.to_string(),
                r.steps.to_string(),
                format!("{:.6}", r.solution),
                r.error.map(|e| format!("{e:.6e}")).unwrap_or_else(|| "-".into()),
                format!("{:.2}", r.time.as_secs_f64()),
                r.grid_points.to_string(),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[String]| {
        let parts: Vec<String> = row.iter().zip(width).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, &header.map(String::from));
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (width.len() - 1)));
    out.push('\n');
    for row in &cells {
        line(&mut out, row);
    }
    out
}
