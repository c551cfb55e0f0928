use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use alcove::combinat::MAX_PARTITION_K;
use alcove::debruijn::{lhs_alternating_integral, rhs, QuadratureControl, TestFunction, MAX_LHS_K};
use alcove::eigen::{
    eigenvalue, f_p, g_p, hot_spots_check, is_real, real_form_f, real_form_g, Weight,
};
use alcove::exitprob::{survival_with_path, SumPath, SurvivalQuery};
use alcove::expected::{expected_exit_a, expected_exit_by_quadrature, MAX_SERIES_K};
use alcove::imagesum::survival_for_datum;
use alcove::kernels1d::SeriesControl;
use alcove::montecarlo::{mc_expected_exit, mc_survival, SimConfig};
use alcove::rootsys::{Family, RootDatum};
use alcove::validation::{run_suite, SUITES};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

const SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(
    name = "alcove",
    version,
    about = "Survival probabilities and exit times for Brownian motion in Weyl alcoves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probability of not having left the alcove by time t.
    Survival(QueryArgs),
    /// Expected exit time.
    Expected(QueryArgs),
    /// Laplacian eigenfunctions attached to a weight.
    Eigen(QueryArgs),
    /// Both sides of the alternating-sum integral identity.
    Debruijn(QueryArgs),
    /// Run a named self-check suite.
    Validate(QueryArgs),
}

impl Command {
    fn parts(&self) -> (&'static str, &QueryArgs) {
        match self {
            Command::Survival(a) => ("survival", a),
            Command::Expected(a) => ("expected", a),
            Command::Eigen(a) => ("eigen", a),
            Command::Debruijn(a) => ("debruijn", a),
            Command::Validate(a) => ("validate", a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum MethodChoice {
    Formula,
    ImageSum,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TimeGrid {
    start: f64,
    stop: f64,
    count: usize,
    scale: Scale,
}

impl TimeGrid {
    fn points(&self) -> Result<Vec<f64>, CliError> {
        let TimeGrid {
            start,
            stop,
            count,
            scale,
        } = *self;
        if count == 0 || !(start >= 0.0) || !(stop >= start) || !stop.is_finite() {
            return Err(CliError::input(
                "t-grid needs 0 <= start <= stop and count >= 1",
            ));
        }
        if scale == Scale::Log && start <= 0.0 {
            return Err(CliError::input("a log t-grid needs start > 0"));
        }
        if count == 1 {
            return Ok(vec![start]);
        }
        let step = |i: usize| i as f64 / (count - 1) as f64;
        let mut ts: Vec<f64> = (0..count)
            .map(|i| match scale {
                Scale::Linear => start + (stop - start) * step(i),
                Scale::Log => (start.ln() + (stop.ln() - start.ln()) * step(i)).exp(),
            })
            .collect();
        ts[0] = start;
        ts[count - 1] = stop;
        Ok(ts)
    }
}

#[derive(Args, Debug, Clone)]
struct QueryArgs {
    /// Root system family: A, B, C, D or G2.
    #[arg(long = "type")]
    family: Option<String>,
    /// Rank parameter (number of coordinates for type A).
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated start point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    #[arg(long)]
    t: Option<f64>,
    /// Time sweep as START,STOP,COUNT.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    t_grid: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    t_scale: Option<Scale>,
    #[arg(long, value_enum)]
    method: Option<MethodChoice>,
    #[arg(long, value_enum)]
    output: Option<OutputFormat>,
    #[arg(long, env = "ALCOVE_SEED")]
    seed: Option<u64>,
    /// JSON file holding any of the query fields; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Series truncation tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Kill simulated paths whose bridge between steps crosses a wall.
    #[arg(long)]
    bridge: bool,
    /// Weight as comma-separated coordinates in the fundamental weights.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weight: Option<Vec<i64>>,
    /// Interior sample count for the hot-spots comparison.
    #[arg(long)]
    hot_spots: Option<usize>,
    /// JSON file with a list of test functions.
    #[arg(long)]
    functions: Option<PathBuf>,
    #[arg(long)]
    suite: Option<String>,
}

/// Everything that determines a run. Echoed in the JSON output, and
/// accepted back through `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Query {
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_grid: Option<TimeGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    method: Option<MethodChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<OutputFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ctl: Option<SeriesControl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cfg: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quad: Option<QuadratureControl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hot_spots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    functions: Option<Vec<TestFunction>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    suite: Option<String>,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            msg: msg.into(),
        }
    }

    fn unavailable(msg: impl Into<String>) -> Self {
        Self {
            code: 3,
            msg: msg.into(),
        }
    }
}

impl From<alcove::Error> for CliError {
    fn from(e: alcove::Error) -> Self {
        use alcove::Error::*;
        let code = match e {
            Unsupported(_) | MethodUnavailable(_) | GroupTooLarge(_) => 3,
            InvalidInput(_) | NotInAlcove | NotInChamber | NonFinite(_) => 2,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("cannot parse {}: {e}", path.display())))
}

/// Config file first, then every flag that was given on top.
fn resolve(a: &QueryArgs) -> Result<Query, CliError> {
    let mut q: Query = match &a.config {
        Some(p) => read_json(p)?,
        None => Query::default(),
    };
    macro_rules! flag {
        ($($f:ident),*) => { $( if a.$f.is_some() { q.$f = a.$f.clone(); } )* };
    }
    flag!(family, k, x, t, method, output, seed, weight, hot_spots, suite);
    if let Some(g) = &a.t_grid {
        if g.len() != 3 || g[2] < 1.0 || g[2].fract() != 0.0 {
            return Err(CliError::input(
                "--t-grid takes START,STOP,COUNT with an integer COUNT >= 1",
            ));
        }
        q.t_grid = Some(TimeGrid {
            start: g[0],
            stop: g[1],
            count: g[2] as usize,
            scale: Scale::Linear,
        });
    }
    if let Some(s) = a.t_scale {
        match q.t_grid.as_mut() {
            Some(g) => g.scale = s,
            None => return Err(CliError::input("--t-scale needs a t-grid")),
        }
    }
    if let Some(tol) = a.tol {
        q.ctl = Some(SeriesControl {
            tol,
            ..q.ctl.unwrap_or_default()
        });
    }
    if a.paths.is_some() || a.dt.is_some() || a.horizon.is_some() || a.workers.is_some() || a.bridge
    {
        let mut cfg = q.cfg.unwrap_or_default();
        cfg.paths = a.paths.unwrap_or(cfg.paths);
        cfg.dt = a.dt.unwrap_or(cfg.dt);
        cfg.horizon = a.horizon.unwrap_or(cfg.horizon);
        cfg.workers = a.workers.unwrap_or(cfg.workers);
        cfg.bridge_correction |= a.bridge;
        q.cfg = Some(cfg);
    }
    if let Some(p) = &a.functions {
        q.functions = Some(read_json(p)?);
    }
    Ok(q)
}

impl Query {
    fn datum(&self) -> Result<RootDatum, CliError> {
        let tag = self
            .family
            .as_deref()
            .ok_or_else(|| CliError::input("--type is required"))?;
        let family: Family = tag.parse()?;
        let k = match (self.k, family, &self.x) {
            (Some(k), _, _) => k,
            (None, Family::G2, _) => 2,
            (None, _, Some(x)) => x.len(),
            (None, _, None) => return Err(CliError::input("--k is required")),
        };
        Ok(RootDatum::new(family, k)?)
    }

    /// The start point in the datum's coordinates; type A and G2 points are
    /// projected onto the sum-zero plane.
    fn point(&self, d: &RootDatum) -> Result<Vec<f64>, CliError> {
        let x = self
            .x
            .as_ref()
            .ok_or_else(|| CliError::input("--x is required"))?;
        if x.len() != d.ambient_dim {
            return Err(CliError::input(format!(
                "x has {} coordinates, type {}{} needs {}",
                x.len(),
                d.family,
                d.k,
                d.ambient_dim
            )));
        }
        Ok(d.project(x))
    }

    fn times(&self) -> Result<Vec<f64>, CliError> {
        match (self.t, &self.t_grid) {
            (Some(_), Some(_)) => Err(CliError::input("give either t or a t-grid, not both")),
            (Some(t), None) if t >= 0.0 && t.is_finite() => Ok(vec![t]),
            (Some(t), None) => Err(CliError::input(format!(
                "t must be finite and nonnegative, got {t}"
            ))),
            (None, Some(g)) => g.points(),
            (None, None) => Err(CliError::input("--t or --t-grid is required")),
        }
    }

    fn ctl(&self) -> Result<SeriesControl, CliError> {
        let c = self.ctl.unwrap_or_default();
        c.validate()?;
        Ok(c)
    }

    fn cfg(&self) -> Result<SimConfig, CliError> {
        let mut c = self.cfg.unwrap_or_default();
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }

    fn method(&self) -> MethodChoice {
        self.method.unwrap_or(MethodChoice::Formula)
    }
}

/// One evaluated row: t (absent for time-free quantities), value, error
/// bound and the evaluator's name.
struct Row {
    t: Option<f64>,
    value: f64,
    error_bound: f64,
    method: String,
    extra: Map<String, Value>,
}

fn survival_row(q: &Query, d: &RootDatum, x: &[f64], t: f64) -> Result<Row, CliError> {
    let mut extra = Map::new();
    let (value, error_bound, method) = match q.method() {
        MethodChoice::Formula => {
            // Odd counts go through the explicit partition sum with singlets.
            let path = if x.len() % 2 == 1 && x.len() <= MAX_PARTITION_K {
                SumPath::PartitionSum
            } else {
                SumPath::Pfaffian
            };
            let query = SurvivalQuery::new(d.clone(), x.to_vec(), t)?.with_control(q.ctl()?)?;
            let r = survival_with_path(&query, path)?;
            extra.insert("tail_bound".into(), json!(r.tail_bound));
            (r.value, r.tail_bound, r.method.to_string())
        }
        MethodChoice::ImageSum => {
            d.require_alcove(x)?;
            let r = survival_for_datum(d, x, t, q.ctl()?.tol)?;
            let bound = r.neglected_mass + r.quadrature_error;
            extra.insert("tail_bound".into(), json!(bound));
            extra.insert("terms".into(), json!(r.images));
            (r.value, bound, "image-sum".into())
        }
        MethodChoice::Mc => {
            let cfg = q.cfg()?;
            let r = mc_survival(d, x, t, &cfg)?;
            extra.insert("stderr".into(), json!(r.stderr));
            extra.insert("paths".into(), json!(r.paths));
            (r.mean, r.stderr, "monte-carlo".into())
        }
    };
    Ok(Row {
        t: Some(t),
        value,
        error_bound,
        method,
        extra,
    })
}

fn expected_row(q: &Query, d: &RootDatum, x: &[f64]) -> Result<Row, CliError> {
    let mut extra = Map::new();
    let (value, error_bound, method) = match q.method() {
        MethodChoice::Formula => {
            let series = d.family == Family::A && x.len() <= MAX_SERIES_K;
            let r = if series {
                d.require_alcove(x)?;
                expected_exit_a(x, &q.ctl()?)?
            } else {
                expected_exit_by_quadrature(d, x, &q.ctl()?)?
            };
            extra.insert("tail_bound".into(), json!(r.tail_bound));
            extra.insert("terms".into(), json!(r.terms_used));
            (
                r.value,
                r.tail_bound,
                if series {
                    "series"
                } else {
                    "survival-quadrature"
                }
                .to_string(),
            )
        }
        MethodChoice::ImageSum => {
            return Err(CliError::unavailable(
                "expected exit times have no image-sum evaluator",
            ));
        }
        MethodChoice::Mc => {
            let r = mc_expected_exit(d, x, &q.cfg()?)?;
            extra.insert("stderr".into(), json!(r.stderr));
            extra.insert("paths".into(), json!(r.paths));
            extra.insert("censored_fraction".into(), json!(1.0 - r.exited_fraction));
            (r.mean, r.stderr, "monte-carlo".into())
        }
    };
    Ok(Row {
        t: None,
        value,
        error_bound,
        method,
        extra,
    })
}

fn eigen_report(q: &Query) -> Result<Map<String, Value>, CliError> {
    let d = q.datum()?;
    let labels = q
        .weight
        .as_ref()
        .ok_or_else(|| CliError::input("--weight is required"))?;
    let w = Weight::from_fundamental(&d, labels)?;
    let mut out = Map::new();
    out.insert("p".into(), json!(w.p));
    out.insert("eigenvalue".into(), json!(eigenvalue(&w)));
    out.insert("strictly_dominant".into(), json!(w.is_strictly_dominant()));
    let real = is_real(&w);
    out.insert("real".into(), json!(real.is_some()));
    if q.x.is_some() {
        let x = q.point(&d)?;
        if w.is_strictly_dominant() {
            out.insert("f".into(), json!(f_p(&w, &x)?));
        }
        out.insert("g".into(), json!(g_p(&w, &x)?));
        if real.is_some() {
            if w.is_strictly_dominant() {
                out.insert("f_real".into(), json!(real_form_f(&w, &x)?));
            }
            out.insert("g_real".into(), json!(real_form_g(&w, &x)?));
        }
    }
    if let Some(n) = q.hot_spots {
        out.insert(
            "hot_spots".into(),
            json!(hot_spots_check(&w, n, q.seed.unwrap_or(0))?),
        );
    }
    Ok(out)
}

fn debruijn_report(q: &Query) -> Result<Map<String, Value>, CliError> {
    let fs = q
        .functions
        .as_ref()
        .ok_or_else(|| CliError::input("--functions or a config with functions is required"))?;
    let ctl = q.quad.unwrap_or_default();
    let r = rhs(fs, &ctl)?;
    let mut out = Map::new();
    out.insert("rhs".into(), json!(r.value));
    out.insert("truncation_bound".into(), json!(r.truncation_bound));
    if fs.len() <= MAX_LHS_K {
        let l = lhs_alternating_integral(fs, &ctl)?;
        out.insert("lhs".into(), json!(l.value));
        out.insert("difference".into(), json!(l.value - r.value));
    }
    Ok(out)
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv(rows: &[Row]) -> String {
    let mut s = String::from("t,value,error_bound,method\n");
    for r in rows {
        let t = r.t.map(fmt_num).unwrap_or_default();
        let _ = writeln!(
            s,
            "{t},{},{},{}",
            fmt_num(r.value),
            fmt_num(r.error_bound),
            r.method
        );
    }
    s
}

fn row_json(r: &Row) -> Value {
    let mut m = Map::new();
    if let Some(t) = r.t {
        m.insert("t".into(), json!(t));
    }
    m.insert("value".into(), json!(r.value));
    m.extend(r.extra.clone());
    m.insert("method".into(), json!(r.method));
    Value::Object(m)
}

struct Outcome {
    stdout: String,
    code: u8,
}

fn run(command: &str, q: Query) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let format = q.output.unwrap_or(OutputFormat::Json);
    let mut body = Map::new();
    let mut code = 0;
    let mut rows = None;
    match command {
        "survival" => {
            let d = q.datum()?;
            let x = q.point(&d)?;
            let ts = q.times()?;
            let r: Vec<Row> = ts
                .iter()
                .map(|&t| survival_row(&q, &d, &x, t))
                .collect::<Result<_, _>>()?;
            if q.t_grid.is_some() {
                body.insert(
                    "rows".into(),
                    Value::Array(r.iter().map(row_json).collect()),
                );
            } else if let Value::Object(m) = row_json(&r[0]) {
                body.extend(m);
            }
            rows = Some(r);
        }
        "expected" => {
            let d = q.datum()?;
            let x = q.point(&d)?;
            let r = expected_row(&q, &d, &x)?;
            if let Value::Object(m) = row_json(&r) {
                body.extend(m);
            }
            rows = Some(vec![r]);
        }
        "eigen" => body.extend(eigen_report(&q)?),
        "debruijn" => body.extend(debruijn_report(&q)?),
        "validate" => {
            let name = q.suite.as_deref().unwrap_or("quick");
            if !SUITES.contains(&name) {
                return Err(CliError::input(format!(
                    "unknown suite '{name}', expected one of {}",
                    SUITES.join(", ")
                )));
            }
            let report = run_suite(name, q.seed.unwrap_or(0))?;
            if !report.passed {
                code = 1;
            }
            body.insert("report".into(), json!(report));
        }
        _ => unreachable!("clap only produces known subcommands"),
    }
    if format == OutputFormat::Csv {
        return match rows {
            Some(r) => Ok(Outcome {
                stdout: csv(&r),
                code,
            }),
            None => Err(CliError::input(format!(
                "csv output is only available for survival and expected, not {command}"
            ))),
        };
    }
    let mut out = Map::new();
    out.insert("schema".into(), json!(SCHEMA));
    out.insert("command".into(), json!(command));
    out.insert("query".into(), json!(q));
    out.extend(body);
    out.insert(
        "wall_time_ms".into(),
        json!(start.elapsed().as_secs_f64() * 1e3),
    );
    let text =
        serde_json::to_string_pretty(&Value::Object(out)).expect("json values always serialize");
    Ok(Outcome {
        stdout: text + "\n",
        code,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = cli.command.parts();
    match resolve(args).and_then(|q| run(command, q)) {
        Ok(o) => {
            print!("{}", o.stdout);
            ExitCode::from(o.code)
        }
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
