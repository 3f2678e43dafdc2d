//! Command-line front end for `arcorr`.
//!
//! Every command returns its full output as text plus an exit code so the
//! binary and the tests share one code path. CSV output starts with `#`
//! metadata lines; JSON output carries the same metadata under `header`.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use arcorr::asymptotics::{self, chaos_summary, rate_rows, RateFit};
use arcorr::density::{self, DensityApprox};
use arcorr::simulation::{self, Family, ModelSpec};
use arcorr::tables::{self, RefCell, Which};
use arcorr::{mgf, QuadOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_DIFF: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "arcorr",
    version,
    about = "Moments and normal approximation of the empirical correlation of two AR(1) series"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact moment E[(sqrt(n) theta_n)^m] by quadrature.
    Moment(MomentArgs),
    /// Regenerate a reference table and diff it against the published values.
    Table(TableArgs),
    /// Legendre density approximation from moments.
    Density(DensityArgs),
    /// Monte-Carlo draws of theta_n.
    Simulate(SimulateArgs),
    /// Distances to N(0, 1) over a range of n and fitted rates.
    Rate(RateArgs),
    /// Size and power of the independence test.
    Power(PowerArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct MomentArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub r: f64,
    /// Relative tolerance (default depends on m).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_nodes: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TableName {
    Table1,
    Table2,
    Table3,
}

impl From<TableName> for Which {
    fn from(t: TableName) -> Which {
        match t {
            TableName::Table1 => Which::Table1,
            TableName::Table2 => Which::Table2,
            TableName::Table3 => Which::Table3,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TableArgs {
    #[arg(value_enum)]
    pub which: TableName,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct DensityArgs {
    /// File of raw moments m0, m1, ... (comma or whitespace separated, `#` comments).
    #[arg(long, conflicts_with = "from_table")]
    pub moments_file: Option<PathBuf>,
    /// Use the published moments of a table.
    #[arg(long, value_enum)]
    pub from_table: Option<TableName>,
    /// With --from-table, recompute the moments by quadrature instead.
    #[arg(long, requires = "from_table")]
    pub computed: bool,
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_hyphen_values = true)]
    pub support: Option<Vec<f64>>,
    #[arg(long, default_value_t = density::DEFAULT_GRID_POINTS)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyArg {
    #[value(name = "gaussian_independent")]
    GaussianIndependent,
    #[value(name = "gaussian_correlated")]
    GaussianCorrelated,
    #[value(name = "second_chaos")]
    SecondChaos,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::GaussianIndependent => Family::GaussianIndependent,
            FamilyArg::GaussianCorrelated => Family::GaussianCorrelated,
            FamilyArg::SecondChaos => Family::SecondChaos,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::GaussianIndependent)]
    pub family: FamilyArg,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    /// Chaos family only; defaults to alpha.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Correlated family only.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub r: f64,
    /// Chaos weights for X, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sigma: Vec<f64>,
    /// Chaos weights for Y, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub tau: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: usize,
    /// Dump the standardized draws as a single CSV column instead of a summary.
    #[arg(long)]
    pub raw: bool,
    /// With --raw, dump theta_n itself rather than the standardized statistic.
    #[arg(long)]
    pub unscaled: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// `a:b:xk` (geometric), `a:b:+k` (arithmetic) or a comma list.
    #[arg(long, default_value = "50:3200:x2")]
    pub ns: String,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct PowerArgs {
    /// One or more sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub r: f64,
    /// Critical value, or `auto` for the asymptotic 5% calibration.
    #[arg(long, default_value = "auto")]
    pub ca: String,
    /// Constant of the correlated-case rate used in the lower bound.
    #[arg(long, default_value_t = 0.0)]
    pub c13: f64,
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// Failure with its exit code.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<arcorr::Error> for CliError {
    fn from(e: arcorr::Error) -> Self {
        use arcorr::Error as E;
        let code = match e {
            E::NoConvergence { .. } | E::NonFinite { .. } | E::NonFiniteIntegrand { .. } => {
                EXIT_NO_CONVERGENCE
            }
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// Text to emit, the exit code, and warnings for stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub text: String,
    pub code: i32,
    pub warnings: Vec<String>,
}

impl Output {
    fn ok(text: String) -> Self {
        Output {
            text,
            code: EXIT_OK,
            warnings: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct Header<'a, P: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    params: &'a P,
    seed: Option<u64>,
}

fn header<'a, P: Serialize>(command: &'a str, params: &'a P, seed: Option<u64>) -> Header<'a, P> {
    Header {
        tool: "arcorr",
        version: env!("CARGO_PKG_VERSION"),
        command,
        params,
        seed,
    }
}

fn csv_header<P: Serialize>(h: &Header<'_, P>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} {}", h.tool, h.version);
    let _ = writeln!(s, "# command: {}", h.command);
    let _ = writeln!(
        s,
        "# params: {}",
        serde_json::to_string(h.params).unwrap_or_default()
    );
    match h.seed {
        Some(seed) => {
            let _ = writeln!(s, "# seed: {seed}");
        }
        None => s.push_str("# seed: none\n"),
    }
    s
}

#[derive(Serialize)]
struct WithHeader<'a, P: Serialize, T: Serialize> {
    header: Header<'a, P>,
    #[serde(flatten)]
    body: T,
}

fn json<P: Serialize, T: Serialize>(h: Header<'_, P>, body: T) -> String {
    let mut s =
        serde_json::to_string_pretty(&WithHeader { header: h, body }).expect("serializable");
    s.push('\n');
    s
}

/// Run one parsed command line.
pub fn execute(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Moment(a) => cmd_moment(a),
        Command::Table(a) => cmd_table(a),
        Command::Density(a) => cmd_density(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Rate(a) => cmd_rate(a),
        Command::Power(a) => cmd_power(a),
    }
}

#[derive(Serialize)]
struct MomentRow {
    m: usize,
    n: usize,
    alpha: f64,
    r: f64,
    value: f64,
    error_estimate: f64,
    nodes: usize,
    converged: bool,
}

impl From<&mgf::MomentResult> for MomentRow {
    fn from(m: &mgf::MomentResult) -> Self {
        MomentRow {
            m: m.m,
            n: m.n,
            alpha: m.alpha,
            r: m.r,
            value: m.value,
            error_estimate: m.quad.error_estimate,
            nodes: m.quad.nodes_used,
            converged: m.quad.converged,
        }
    }
}

fn moment_options(
    m: usize,
    tol: Option<f64>,
    max_nodes: Option<usize>,
) -> Result<QuadOptions, CliError> {
    let mut o = mgf::default_moment_options(m);
    if let Some(t) = tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::usage(format!(
                "--tol must lie in (0, 1), got {t}"
            )));
        }
        o.tol_rel = t;
    }
    if let Some(k) = max_nodes {
        o.max_nodes = k;
    }
    Ok(o)
}

pub fn cmd_moment(a: &MomentArgs) -> Result<Output, CliError> {
    let res = mgf::moment(
        a.m,
        a.n,
        a.alpha,
        a.r,
        Some(moment_options(a.m, a.tol, a.max_nodes)?),
    )?;
    let row = MomentRow::from(&res);
    let h = header("moment", a, None);
    let text = match a.format {
        Format::Json => json(h, &row),
        Format::Csv => {
            let mut s = csv_header(&h);
            s.push_str("m,n,alpha,r,value,error_estimate,nodes,converged\n");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                row.m,
                row.n,
                row.alpha,
                row.r,
                row.value,
                row.error_estimate,
                row.nodes,
                row.converged
            );
            s
        }
    };
    let mut out = Output::ok(text);
    if !res.quad.converged {
        out.code = EXIT_NO_CONVERGENCE;
        out.warnings.push(format!(
            "quadrature did not converge (error estimate {:e})",
            res.quad.error_estimate
        ));
    }
    Ok(out)
}

/// One regenerated table cell.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub k: usize,
    /// `None` for the large-n limit row.
    pub n: Option<usize>,
    pub alpha: f64,
    pub r: f64,
    pub value: f64,
    pub reference: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub metric: &'static str,
    pub converged: bool,
    pub pass: bool,
}

fn table_row(cell: &RefCell) -> Result<TableRow, CliError> {
    let (value, converged) = match cell.n {
        Some(n) => {
            let res = mgf::moment(cell.k, n, cell.alpha, cell.r, None)?;
            (res.value, res.quad.converged)
        }
        None => (mgf::limit_second_moment(cell.alpha)?, true),
    };
    Ok(TableRow {
        k: cell.k,
        n: cell.n,
        alpha: cell.alpha,
        r: cell.r,
        value,
        reference: cell.reference,
        deviation: cell.deviation(value),
        tolerance: cell.tol,
        metric: if cell.relative { "rel" } else { "abs" },
        converged,
        pass: cell.passes(value),
    })
}

/// Regenerate every cell of a reference table.
pub fn table_rows(which: Which) -> Result<Vec<TableRow>, CliError> {
    tables::cells(which).iter().map(table_row).collect()
}

pub fn cmd_table(a: &TableArgs) -> Result<Output, CliError> {
    let rows = table_rows(a.which.into())?;
    let failed: Vec<&TableRow> = rows.iter().filter(|r| !r.pass).collect();
    let h = header("table", a, None);
    let text = match a.format {
        Format::Json => json(
            h,
            serde_json::json!({ "rows": rows, "all_pass": failed.is_empty() }),
        ),
        Format::Csv => {
            let mut s = csv_header(&h);
            s.push_str("k,n,alpha,r,value,reference,deviation,tolerance,metric,converged,pass\n");
            for r in &rows {
                let n = r.n.map_or_else(|| "inf".to_string(), |n| n.to_string());
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{:e},{:e},{},{},{}",
                    r.k,
                    n,
                    r.alpha,
                    r.r,
                    r.value,
                    r.reference,
                    r.deviation,
                    r.tolerance,
                    r.metric,
                    r.converged,
                    r.pass
                );
            }
            s
        }
    };
    let mut out = Output::ok(text);
    if !failed.is_empty() {
        out.code = EXIT_DIFF;
        for r in failed {
            out.warnings.push(format!(
                "k={} n={}: {} vs reference {} ({} deviation {:e} > {:e})",
                r.k,
                r.n.map_or_else(|| "inf".to_string(), |n| n.to_string()),
                r.value,
                r.reference,
                r.metric,
                r.deviation,
                r.tolerance
            ));
        }
    }
    Ok(out)
}

/// Parse a moments file: numbers separated by commas or whitespace, `#` starts a comment.
pub fn parse_moments(text: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let v: f64 = tok.parse().map_err(|_| {
                CliError::usage(format!(
                    "line {}: cannot parse '{tok}' as a number",
                    lineno + 1
                ))
            })?;
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("moments file holds no values"));
    }
    Ok(out)
}

/// Raw moments `m0..=mK` of a table, published or recomputed.
pub fn table_moments(which: Which, computed: bool) -> Result<Vec<f64>, CliError> {
    let cells = tables::cells(which);
    let kmax = cells.iter().map(|c| c.k).max().unwrap_or(0);
    let mut m = vec![0.0; kmax + 1];
    m[0] = 1.0;
    for c in cells.iter().filter(|c| c.n.is_some()) {
        m[c.k] = if computed {
            mgf::moment(c.k, c.n.unwrap_or(0), c.alpha, c.r, None)?.value
        } else {
            c.reference
        };
    }
    Ok(m)
}

pub fn cmd_density(a: &DensityArgs) -> Result<Output, CliError> {
    let moments = match (&a.moments_file, a.from_table) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            parse_moments(&text)?
        }
        (None, Some(t)) => {
            if t == TableName::Table1 {
                return Err(CliError::usage(
                    "table1 holds second moments over n, not a moment sequence",
                ));
            }
            table_moments(t.into(), a.computed)?
        }
        _ => {
            return Err(CliError::usage(
                "give exactly one of --moments-file or --from-table",
            ))
        }
    };
    let support = match &a.support {
        Some(v) => (v[0], v[1]),
        None => density::DEFAULT_SUPPORT,
    };
    let d: DensityApprox = density::legendre_from_moments(&moments, support)?;
    let grid = d.grid(a.points);
    let lobes = d.negative_lobes(a.points.max(2));
    let mass = d.moments(0)[0];
    let h = header("density", a, None);
    let text = match a.format {
        Format::Json => json(
            h,
            serde_json::json!({
                "support": [support.0, support.1],
                "order": d.order,
                "coeffs": d.coeffs,
                "mass": mass,
                "negative_lobes": lobes,
                "x": grid.iter().map(|p| p.0).collect::<Vec<_>>(),
                "density": grid.iter().map(|p| p.1).collect::<Vec<_>>(),
            }),
        ),
        Format::Csv => {
            let mut s = csv_header(&h);
            let _ = writeln!(s, "# order: {}", d.order);
            let _ = writeln!(s, "# mass: {mass}");
            for (lo, hi) in &lobes {
                let _ = writeln!(s, "# negative lobe: [{lo}, {hi}]");
            }
            s.push_str("x,density\n");
            for (x, y) in grid {
                let _ = writeln!(s, "{x},{y}");
            }
            s
        }
    };
    let mut out = Output::ok(text);
    if !lobes.is_empty() {
        out.warnings.push(format!(
            "density is negative on {} interval(s)",
            lobes.len()
        ));
    }
    Ok(out)
}

fn model_spec(m: &ModelArgs, n: usize) -> Result<ModelSpec, CliError> {
    let spec = match m.family {
        FamilyArg::GaussianIndependent => ModelSpec::independent(n, m.alpha)?,
        FamilyArg::GaussianCorrelated => ModelSpec::correlated(n, m.alpha, m.r)?,
        FamilyArg::SecondChaos => ModelSpec::chaos(
            n,
            m.alpha,
            m.beta.unwrap_or(m.alpha),
            m.sigma.clone(),
            m.tau.clone(),
        )?,
    };
    if m.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    Ok(spec)
}

fn weight_warnings(spec: &ModelSpec) -> Vec<String> {
    let mut w = Vec::new();
    if spec.family != Family::SecondChaos {
        return w;
    }
    for (name, ws) in [("sigma", &spec.sigma), ("tau", &spec.tau)] {
        let norm = ws.iter().map(|v| v * v).sum::<f64>().sqrt();
        if let Some(last) = ws.last() {
            if last.abs() > 1e-3 * norm {
                w.push(format!(
                    "last {name} weight {last} exceeds 1e-3 of the weight norm; the truncated tail may matter"
                ));
            }
        }
    }
    w
}

#[derive(Serialize)]
struct SimulateSummary {
    family: Family,
    n: usize,
    reps: usize,
    redraws: u64,
    mean_theta: f64,
    mean_theta_se: f64,
    mean_scaled: f64,
    var_scaled: f64,
    second_moment_sqrt_n_theta: f64,
    second_moment_se: f64,
    kolmogorov: f64,
    wasserstein1: f64,
    scaled_const: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    chaos: Option<asymptotics::ChaosCheck>,
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<Output, CliError> {
    let spec = model_spec(&a.model, a.n)?;
    let warnings = weight_warnings(&spec);
    let seed = a.model.seed;
    let h = header("simulate", a, Some(seed));
    let (stats, redraws) = simulation::sample_stats(&spec, a.model.reps, seed)?;
    let theta: Vec<f64> = stats.iter().map(|s| s.theta).collect();
    let scaled: Vec<f64> = theta
        .iter()
        .map(|&t| simulation::scale_theta(&spec, t))
        .collect::<arcorr::Result<_>>()?;
    let text = if a.raw {
        let values = if a.unscaled { &theta } else { &scaled };
        let mut s = csv_header(&h);
        let _ = writeln!(s, "# redraws: {redraws}");
        s.push_str(if a.unscaled {
            "theta\n"
        } else {
            "scaled_theta\n"
        });
        for v in values {
            let _ = writeln!(s, "{v}");
        }
        s
    } else {
        let rn = (spec.n as f64).sqrt();
        let sq: Vec<f64> = theta.iter().map(|t| (rn * t).powi(2)).collect();
        let (mean_theta, mean_theta_se) = simulation::mean_se(&theta);
        let (second, second_se) = simulation::mean_se(&sq);
        let (mean_scaled, _) = simulation::mean_se(&scaled);
        let chaos = if spec.family == Family::SecondChaos {
            Some(chaos_summary(&spec, &stats)?)
        } else {
            None
        };
        let summary = SimulateSummary {
            family: spec.family,
            n: spec.n,
            reps: a.model.reps,
            redraws,
            mean_theta,
            mean_theta_se,
            mean_scaled,
            var_scaled: simulation::sample_variance(&scaled),
            second_moment_sqrt_n_theta: second,
            second_moment_se: second_se,
            kolmogorov: asymptotics::kolmogorov_distance(&scaled)?,
            wasserstein1: asymptotics::wasserstein1_distance(&scaled)?,
            scaled_const: asymptotics::scaling_constant(
                spec.family,
                spec.alpha,
                spec.beta,
                spec.r,
            )?,
            chaos,
        };
        match a.format {
            Format::Json => json(h, &summary),
            Format::Csv => {
                let mut s = csv_header(&h);
                let v = serde_json::to_value(&summary).expect("serializable");
                s.push_str("key,value\n");
                if let serde_json::Value::Object(map) = v {
                    for (k, val) in flatten_json("", &map) {
                        let _ = writeln!(s, "{k},{val}");
                    }
                }
                s
            }
        }
    };
    Ok(Output {
        text,
        code: EXIT_OK,
        warnings,
    })
}

fn flatten_json(
    prefix: &str,
    map: &serde_json::Map<String, serde_json::Value>,
) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (k, v) in map {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            serde_json::Value::Object(inner) => out.extend(flatten_json(&key, inner)),
            serde_json::Value::String(s) => out.push((key, s.clone())),
            other => out.push((key, other.to_string())),
        }
    }
    out
}

/// Parse `a:b:xk`, `a:b:+k` or `n1,n2,...` into a strictly increasing list.
pub fn parse_ns(spec: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::usage(format!("cannot parse --ns '{spec}'"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let ns: Vec<usize> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let (lo, hi) = (num(parts[0])?, num(parts[1])?);
        let step = parts[2].trim();
        let mut v = Vec::new();
        let mut n = lo;
        if let Some(f) = step.strip_prefix('x') {
            let f = num(f)?;
            if f < 2 || lo == 0 {
                return Err(bad());
            }
            while n <= hi {
                v.push(n);
                n *= f;
            }
        } else {
            let d = num(step.strip_prefix('+').unwrap_or(step))?;
            if d == 0 {
                return Err(bad());
            }
            while n <= hi {
                v.push(n);
                n += d;
            }
        }
        v
    } else {
        spec.split(',').map(num).collect::<Result<_, _>>()?
    };
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] < 2 {
        return Err(CliError::usage(format!(
            "--ns must be strictly increasing values >= 2, got '{spec}'"
        )));
    }
    Ok(ns)
}

#[derive(Serialize)]
struct RateReport {
    rows: Vec<asymptotics::RateRow>,
    fit_kolmogorov: RateFit,
    fit_wasserstein: RateFit,
}

pub fn cmd_rate(a: &RateArgs) -> Result<Output, CliError> {
    let ns = parse_ns(&a.ns)?;
    if ns.len() < 4 {
        return Err(CliError::usage(
            "rate fitting needs at least four sample sizes",
        ));
    }
    let template = model_spec(&a.model, ns[0])?;
    let warnings = weight_warnings(&template);
    let rows = rate_rows(&template, &ns, a.model.reps, a.model.seed)?;
    let kol: Vec<f64> = rows.iter().map(|r| r.distance_kol).collect();
    let w1: Vec<f64> = rows.iter().map(|r| r.distance_w1).collect();
    let report = RateReport {
        fit_kolmogorov: asymptotics::fit_rate(&ns, &kol)?,
        fit_wasserstein: asymptotics::fit_rate(&ns, &w1)?,
        rows,
    };
    let h = header("rate", a, Some(a.model.seed));
    let text = match a.format {
        Format::Json => json(h, &report),
        Format::Csv => {
            let mut s = csv_header(&h);
            for (name, f) in [
                ("kolmogorov", &report.fit_kolmogorov),
                ("wasserstein", &report.fit_wasserstein),
            ] {
                let _ = writeln!(
                    s,
                    "# fit {name}: slope {} intercept {} residual {} log_corrected_spread {}",
                    f.slope, f.intercept, f.residual, f.log_corrected_spread
                );
            }
            s.push_str("n,distance_kol,distance_w1,scaled_const\n");
            for r in &report.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    r.n, r.distance_kol, r.distance_w1, r.scaled_const
                );
            }
            s
        }
    };
    Ok(Output {
        text,
        code: EXIT_OK,
        warnings,
    })
}

#[derive(Serialize)]
struct PowerRow {
    n: usize,
    alpha: f64,
    r: f64,
    c_a: f64,
    reps: usize,
    mc_power: f64,
    lower_bound: f64,
}

/// Resolve `--ca`: a positive number or `auto`.
pub fn resolve_ca(ca: &str, alpha: f64) -> Result<f64, CliError> {
    if ca == "auto" {
        return Ok(asymptotics::ca_auto(alpha)?);
    }
    match ca.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(CliError::usage(format!(
            "--ca must be 'auto' or a positive number, got '{ca}'"
        ))),
    }
}

pub fn cmd_power(a: &PowerArgs) -> Result<Output, CliError> {
    let c_a = resolve_ca(&a.ca, a.alpha)?;
    if a.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let rows: Vec<PowerRow> =
        a.n.iter()
            .map(|&n| {
                Ok(PowerRow {
                    n,
                    alpha: a.alpha,
                    r: a.r,
                    c_a,
                    reps: a.reps,
                    mc_power: asymptotics::mc_power(n, a.alpha, a.r, c_a, a.reps, a.seed)?,
                    lower_bound: asymptotics::power_lower_bound(n, a.alpha, a.r, c_a, a.c13)?,
                })
            })
            .collect::<Result<_, CliError>>()?;
    let h = header("power", a, Some(a.seed));
    let text = match a.format {
        Format::Json => json(h, serde_json::json!({ "rows": rows })),
        Format::Csv => {
            let mut s = csv_header(&h);
            s.push_str("n,alpha,r,c_a,reps,mc_power,lower_bound\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    r.n, r.alpha, r.r, r.c_a, r.reps, r.mc_power, r.lower_bound
                );
            }
            s
        }
    };
    Ok(Output::ok(text))
}

/// Configure the global thread pool, then execute and write the output.
/// Returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    match execute(cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            let written = match &cli.output {
                Some(path) => std::fs::write(path, &out.text)
                    .map_err(|e| format!("cannot write {}: {e}", path.display())),
                None => {
                    use std::io::Write;
                    std::io::stdout()
                        .write_all(out.text.as_bytes())
                        .map_err(|e| e.to_string())
                }
            };
            match written {
                Ok(()) => out.code,
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
