//! Run configuration: a sectioned `key = value` text format.
//!
//! ```text
//! # comment
//! [market]
//! tenor_dates = 0, 0.5, 1.0, 1.5
//! forwards    = 0.0112, 0.0118, 0.0122
//! alphas      = 0, 0.2366, 0.2145
//! phis        = 0, 0.4, 0.4        # optional, default 0
//! sigma       = 0.3
//! lambda      = 0.1
//! beta        = 1                  # optional, default 1
//!
//! [product]
//! kind   = caplet | swaption
//! a      = 1
//! b      = 2                       # required for swaptions
//! strike = 0.011
//!
//! [domain]
//! f_max      = 0.04                # one value, or one per forward
//! v_max      = 3.5
//! v0         = 1                   # optional, default 1
//! eval_point = 0.0118, 1           # optional, overrides forwards and v0
//! horizon    = 0.5                 # optional, default T_a
//!
//! [solver]
//! technique = full | sparse | modified
//! levels    = 6, 7, 8
//! steps     = 16, 256
//! psi       = 1                    # modified only
//! psi_cap   = 2                    # optional
//! theta     = 0.7886751345948129   # optional
//! nu        = 0.7886751345948129   # optional, default N * theta
//! threads   = auto | K             # optional
//! node_cap  = 33554432             # optional
//!
//! [output]
//! csv            = table.csv       # optional
//! reference      = black | file | none
//! reference_file = ref.txt         # with reference = file
//! ```
//!
//! Unknown sections and keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use lmm_pde::combination::{DEFAULT_NODE_CAP, DEFAULT_PSI_CAP};
use lmm_pde::{MarketData, ProductKind, ProductSpec, THETA_ORDER3};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MarketBlock {
    pub tenor_dates: Vec<f64>,
    pub forwards: Vec<f64>,
    pub alphas: Vec<f64>,
    pub phis: Vec<f64>,
    pub sigma: f64,
    pub lambda: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductBlock {
    pub kind: ProductKind,
    pub a: usize,
    pub b: usize,
    pub strike: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainBlock {
    pub f_max: Vec<f64>,
    pub v_max: f64,
    pub v0: f64,
    pub eval_point: Option<Vec<f64>>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TechniqueKind {
    Full,
    Sparse,
    Modified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverBlock {
    pub technique: TechniqueKind,
    pub levels: Vec<u32>,
    pub steps: Vec<usize>,
    pub psi: Option<u32>,
    pub psi_cap: u32,
    pub theta: f64,
    pub nu: Option<f64>,
    /// `None` for the default pool size.
    pub threads: Option<usize>,
    pub node_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Black,
    File(PathBuf),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub csv: Option<PathBuf>,
    pub reference: Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub market: MarketBlock,
    pub product: ProductBlock,
    pub domain: DomainBlock,
    pub solver: SolverBlock,
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn market_data(&self) -> Result<MarketData> {
        let m = &self.market;
        Ok(MarketData::new(
            m.tenor_dates.clone(),
            m.forwards.clone(),
            m.alphas.clone(),
            m.phis.clone(),
            self.product.strike,
            m.sigma,
            m.lambda,
            m.beta,
        )?)
    }

    pub fn product_spec(&self) -> Result<ProductSpec> {
        Ok(ProductSpec::new(self.product.kind, self.product.a, self.product.b)?)
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("market", &["tenor_dates", "forwards", "alphas", "phis", "sigma", "lambda", "beta"]),
    ("product", &["kind", "a", "b", "strike"]),
    ("domain", &["f_max", "v_max", "v0", "eval_point", "horizon"]),
    ("solver", &["technique", "levels", "steps", "psi", "psi_cap", "theta", "nu", "threads", "node_cap"]),
    ("output", &["csv", "reference", "reference_file"]),
];

/// `(line, value)` keyed by `(section, key)`.
type Entries = BTreeMap<(String, String), (usize, String)>;

struct Reader {
    entries: Entries,
}

impl Reader {
    fn raw(&self, section: &str, key: &str) -> Option<&(usize, String)> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn required(&self, section: &str, key: &str) -> Result<&(usize, String)> {
        self.raw(section, key).ok_or_else(|| CliError::MissingKey { section: section.into(), key: key.into() })
    }

    fn parse_one<T: std::str::FromStr>(line: usize, key: &str, text: &str, what: &str) -> Result<T> {
        text.trim().parse().map_err(|_| CliError::Parse { line, message: format!("`{key}` expects {what}, got `{text}`") })
    }

    fn list<T: std::str::FromStr>(line: usize, key: &str, text: &str, what: &str) -> Result<Vec<T>> {
        if text.trim().is_empty() {
            return Ok(Vec::new());
        }
        text.split(',').map(|t| Self::parse_one(line, key, t, what)).collect()
    }

    fn f64(&self, section: &str, key: &str) -> Result<f64> {
        let (line, v) = self.required(section, key)?;
        Self::parse_one(*line, key, v, "a number")
    }

    fn opt_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.raw(section, key).map(|(line, v)| Self::parse_one(*line, key, v, "a number")).transpose()
    }

    fn opt_usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.raw(section, key).map(|(line, v)| Self::parse_one(*line, key, v, "a non-negative integer")).transpose()
    }

    fn f64s(&self, section: &str, key: &str) -> Result<Vec<f64>> {
        let (line, v) = self.required(section, key)?;
        Self::list(*line, key, v, "a comma-separated list of numbers")
    }

    fn opt_f64s(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(section, key).map(|(line, v)| Self::list(*line, key, v, "a comma-separated list of numbers")).transpose()
    }

    fn line_of(&self, section: &str, key: &str) -> usize {
        self.raw(section, key).map(|(l, _)| *l).unwrap_or(0)
    }
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut entries = Entries::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| CliError::Parse { line, message: format!("malformed section header `{content}`") })?
                .trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(CliError::Parse { line, message: format!("unknown section `[{name}]`") });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| CliError::Parse { line, message: format!("expected `key = value`, got `{content}`") })?;
        let key = key.trim();
        let sec = section
            .as_deref()
            .ok_or_else(|| CliError::Parse { line, message: format!("key `{key}` appears before any section") })?;
        let known = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !known.contains(&key) {
            return Err(CliError::Parse { line, message: format!("unknown key `{key}` in section [{sec}]") });
        }
        if entries.insert((sec.to_string(), key.to_string()), (line, value.trim().to_string())).is_some() {
            return Err(CliError::Parse { line, message: format!("duplicate key `{key}` in section [{sec}]") });
        }
    }
    Ok(entries)
}

/// Parses and validates a run configuration, applying defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let r = Reader { entries: tokenize(text)? };

    let forwards = r.f64s("market", "forwards")?;
    let market = MarketBlock {
        tenor_dates: r.f64s("market", "tenor_dates")?,
        alphas: r.f64s("market", "alphas")?,
        phis: r.opt_f64s("market", "phis")?.unwrap_or_else(|| vec![0.0; forwards.len()]),
        sigma: r.f64("market", "sigma")?,
        lambda: r.f64("market", "lambda")?,
        beta: r.opt_f64("market", "beta")?.unwrap_or(1.0),
        forwards,
    };

    let (kind_line, kind_text) = r.required("product", "kind")?;
    let kind = match kind_text.as_str() {
        "caplet" => ProductKind::Caplet,
        "swaption" => ProductKind::Swaption,
        other => {
            return Err(CliError::Parse { line: *kind_line, message: format!("`kind` must be caplet or swaption, got `{other}`") })
        }
    };
    let a = r.opt_usize("product", "a")?.ok_or_else(|| CliError::MissingKey { section: "product".into(), key: "a".into() })?;
    let b = match (kind, r.opt_usize("product", "b")?) {
        (ProductKind::Caplet, None) => a + 1,
        (ProductKind::Caplet, Some(b)) if b == a + 1 => b,
        (ProductKind::Caplet, Some(b)) => {
            return Err(CliError::Parse {
                line: r.line_of("product", "b"),
                message: format!("a caplet on forward {a} has b = {}, got {b}", a + 1),
            })
        }
        (ProductKind::Swaption, Some(b)) => b,
        (ProductKind::Swaption, None) => return Err(CliError::MissingKey { section: "product".into(), key: "b".into() }),
    };
    let product = ProductBlock { kind, a, b, strike: r.f64("product", "strike")? };

    let domain = DomainBlock {
        f_max: r.f64s("domain", "f_max")?,
        v_max: r.f64("domain", "v_max")?,
        v0: r.opt_f64("domain", "v0")?.unwrap_or(1.0),
        eval_point: r.opt_f64s("domain", "eval_point")?,
        horizon: r.opt_f64("domain", "horizon")?,
    };

    let (tech_line, tech_text) = r.required("solver", "technique")?;
    let technique = match tech_text.as_str() {
        "full" => TechniqueKind::Full,
        "sparse" => TechniqueKind::Sparse,
        "modified" => TechniqueKind::Modified,
        other => {
            return Err(CliError::Parse {
                line: *tech_line,
                message: format!("`technique` must be full, sparse or modified, got `{other}`"),
            })
        }
    };
    let (levels_line, levels_text) = r.required("solver", "levels")?;
    let levels: Vec<u32> = Reader::list(*levels_line, "levels", levels_text, "a comma-separated list of levels")?;
    if levels.is_empty() {
        return Err(CliError::Parse { line: *levels_line, message: "`levels` must not be empty".into() });
    }
    let (steps_line, steps_text) = r.required("solver", "steps")?;
    let steps: Vec<usize> = Reader::list(*steps_line, "steps", steps_text, "a comma-separated list of step counts")?;
    if steps.is_empty() || steps.contains(&0) {
        return Err(CliError::Parse { line: *steps_line, message: "`steps` must be a nonempty list of positive counts".into() });
    }
    let psi = r.opt_usize("solver", "psi")?.map(|p| p as u32);
    match (technique, psi) {
        (TechniqueKind::Modified, None) => {
            return Err(CliError::MissingKey { section: "solver".into(), key: "psi".into() })
        }
        (TechniqueKind::Full | TechniqueKind::Sparse, Some(_)) => {
            return Err(CliError::Parse {
                line: r.line_of("solver", "psi"),
                message: "`psi` is only valid with technique = modified".into(),
            })
        }
        _ => {}
    }
    let threads = match r.raw("solver", "threads") {
        None => None,
        Some((_, v)) if v == "auto" => None,
        Some((line, v)) => {
            let t: usize = Reader::parse_one(*line, "threads", v, "`auto` or a positive integer")?;
            if t == 0 {
                return Err(CliError::Parse { line: *line, message: "`threads` must be positive".into() });
            }
            Some(t)
        }
    };
    let solver = SolverBlock {
        technique,
        levels,
        steps,
        psi,
        psi_cap: r.opt_usize("solver", "psi_cap")?.map(|p| p as u32).unwrap_or(DEFAULT_PSI_CAP),
        theta: r.opt_f64("solver", "theta")?.unwrap_or(THETA_ORDER3),
        nu: r.opt_f64("solver", "nu")?,
        threads,
        node_cap: r.opt_usize("solver", "node_cap")?.unwrap_or(DEFAULT_NODE_CAP),
    };

    let reference_file = r.raw("output", "reference_file").map(|(_, v)| PathBuf::from(v));
    let reference = match r.raw("output", "reference") {
        None => {
            if reference_file.is_some() {
                return Err(CliError::Parse {
                    line: r.line_of("output", "reference_file"),
                    message: "`reference_file` requires reference = file".into(),
                });
            }
            if kind == ProductKind::Caplet && market.sigma == 0.0 {
                Reference::Black
            } else {
                Reference::None
            }
        }
        Some((line, v)) => match (v.as_str(), reference_file) {
            ("black", None) => Reference::Black,
            ("none", None) => Reference::None,
            ("file", Some(p)) => Reference::File(p),
            ("file", None) => return Err(CliError::MissingKey { section: "output".into(), key: "reference_file".into() }),
            ("black" | "none", Some(_)) => {
                return Err(CliError::Parse { line: *line, message: "`reference_file` requires reference = file".into() })
            }
            (other, _) => {
                return Err(CliError::Parse {
                    line: *line,
                    message: format!("`reference` must be black, file or none, got `{other}`"),
                })
            }
        },
    };
    let output = OutputBlock { csv: r.raw("output", "csv").map(|(_, v)| PathBuf::from(v)), reference };

    let config = RunConfig { market, product, domain, solver, output };
    validate(&config, &r)?;
    Ok(config)
}

fn validate(config: &RunConfig, r: &Reader) -> Result<()> {
    let market = config.market_data()?;
    let product = config.product_spec()?;
    product.check_market(&market)?;
    let nf = product.forwards().len();
    let f_max = &config.domain.f_max;
    if f_max.len() != 1 && f_max.len() != nf {
        return Err(CliError::Parse {
            line: r.line_of("domain", "f_max"),
            message: format!("`f_max` needs 1 or {nf} values, got {}", f_max.len()),
        });
    }
    if let Some(p) = &config.domain.eval_point {
        if p.len() != nf + 1 {
            return Err(CliError::Parse {
                line: r.line_of("domain", "eval_point"),
                message: format!("`eval_point` needs {} values, got {}", nf + 1, p.len()),
            });
        }
    }
    if let Some(psi) = config.solver.psi {
        if psi > config.solver.psi_cap {
            return Err(CliError::Parse {
                line: r.line_of("solver", "psi"),
                message: format!("psi = {psi} exceeds psi_cap = {}", config.solver.psi_cap),
            });
        }
    }
    if config.solver.technique != TechniqueKind::Full {
        let d = nf + 1;
        if let Some(&l) = config.solver.levels.iter().find(|&&l| (l as usize) + 1 < d) {
            return Err(CliError::Parse {
                line: r.line_of("solver", "levels"),
                message: format!("sparse level {l} is below d - 1 = {}", d - 1),
            });
        }
    }
    if config.output.reference == Reference::Black && (product.kind() != ProductKind::Caplet || market.sigma() != 0.0) {
        return Err(CliError::ReferenceUnavailable(
            "the Black reference only applies to caplets with sigma = 0".into(),
        ));
    }
    Ok(())
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for RunConfig {
    /// Canonical text form; parsing it yields an identical configuration.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.market;
        writeln!(f, "[market]")?;
        writeln!(f, "tenor_dates = {}", join(&m.tenor_dates))?;
        writeln!(f, "forwards = {}", join(&m.forwards))?;
        writeln!(f, "alphas = {}", join(&m.alphas))?;
        writeln!(f, "phis = {}", join(&m.phis))?;
        writeln!(f, "sigma = {}", m.sigma)?;
        writeln!(f, "lambda = {}", m.lambda)?;
        writeln!(f, "beta = {}", m.beta)?;

        let p = &self.product;
        writeln!(f, "\n[product]")?;
        let kind = match p.kind {
            ProductKind::Caplet => "caplet",
            ProductKind::Swaption => "swaption",
        };
        writeln!(f, "kind = {kind}")?;
        writeln!(f, "a = {}", p.a)?;
        writeln!(f, "b = {}", p.b)?;
        writeln!(f, "strike = {}", p.strike)?;

        let d = &self.domain;
        writeln!(f, "\n[domain]")?;
        writeln!(f, "f_max = {}", join(&d.f_max))?;
        writeln!(f, "v_max = {}", d.v_max)?;
        writeln!(f, "v0 = {}", d.v0)?;
        if let Some(p) = &d.eval_point {
            writeln!(f, "eval_point = {}", join(p))?;
        }
        if let Some(h) = d.horizon {
            writeln!(f, "horizon = {h}")?;
        }

        let s = &self.solver;
        writeln!(f, "\n[solver]")?;
        let technique = match s.technique {
            TechniqueKind::Full => "full",
            TechniqueKind::Sparse => "sparse",
            TechniqueKind::Modified => "modified",
        };
        writeln!(f, "technique = {technique}")?;
        writeln!(f, "levels = {}", join(&s.levels))?;
        writeln!(f, "steps = {}", join(&s.steps))?;
        if let Some(psi) = s.psi {
            writeln!(f, "psi = {psi}")?;
        }
        writeln!(f, "psi_cap = {}", s.psi_cap)?;
        writeln!(f, "theta = {}", s.theta)?;
        if let Some(nu) = s.nu {
            writeln!(f, "nu = {nu}")?;
        }
        match s.threads {
            Some(t) => writeln!(f, "threads = {t}")?,
            None => writeln!(f, "threads = auto")?,
        }
        writeln!(f, "node_cap = {}", s.node_cap)?;

        let o = &self.output;
        writeln!(f, "\n[output]")?;
        if let Some(csv) = &o.csv {
            writeln!(f, "csv = {}", csv.display())?;
        }
        match &o.reference {
            Reference::Black => writeln!(f, "reference = black")?,
            Reference::None => writeln!(f, "reference = none")?,
            Reference::File(p) => {
                writeln!(f, "reference = file")?;
                writeln!(f, "reference_file = {}", p.display())?;
            }
        }
        Ok(())
    }
}
