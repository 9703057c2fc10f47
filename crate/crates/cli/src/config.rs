//! Run configuration: per-command parameter schemas, a flat `key = value`
//! config file, and flag overrides.
//!
//! Every value is resolved with the precedence flag > file > default, and
//! the source of each one is kept for the report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use avoidance_core::coupling::schedule;
use avoidance_core::lattice::log2;
use avoidance_core::{BallSpec, LatticePoint};

#[derive(Debug, Error)]
pub enum UsageError {
    #[error("{0}")]
    Clap(#[from] clap::Error),

    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },

    #[error("unknown key `{key}` for command `{command}`")]
    UnknownKey { key: String, command: String },

    #[error("config file {path}: {message}")]
    File { path: PathBuf, message: String },
}

impl UsageError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Green,
    Annulus,
    ExitTime,
    BoundaryLayer,
    HittingMeasure,
    Escape,
    Invsq,
    Intersect,
    Moments,
    GoodTimes,
    Hittability,
    EventH,
    CoupleStep,
    Drive,
    VerifyAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    /// Four comma-separated integers.
    Point,
    FloatList,
    Text,
    Bool,
}

impl Kind {
    fn describe(self) -> &'static str {
        match self {
            Kind::Int => "a non-negative integer",
            Kind::Float => "a real number",
            Kind::Point => "four comma-separated integers",
            Kind::FloatList => "a comma-separated list of reals",
            Kind::Text => "text",
            Kind::Bool => "true or false",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    pub kind: Kind,
    /// `None` for optional keys without a default.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn p(key: &'static str, kind: Kind, default: Option<&'static str>, help: &'static str) -> ParamSpec {
    ParamSpec { key, kind, default, help }
}

use Kind::*;

const GREEN: &[ParamSpec] = &[
    p("x", Point, Some("1,0,0,0"), "target point"),
    p("truncation", Float, None, "truncation radius [default: 4|x| + 1]"),
];
const ANNULUS: &[ParamSpec] = &[
    p("n", Float, Some("100"), "radius of the starting sphere"),
    p("a", Float, Some("0.51"), "inner radius factor, 0 < a < 1"),
    p("A", Float, Some("2"), "outer radius factor, A > 1"),
];
const EXIT_TIME: &[ParamSpec] = &[p("n", Float, Some("20"), "ball radius")];
const BOUNDARY_LAYER: &[ParamSpec] = &[
    p("n", Float, Some("30"), "stopping radius"),
    p("k", Float, Some("10"), "layer width, k < n"),
    p("lambda", Float, Some("2"), "tail level in units of k^2"),
];
const HITTING_MEASURE: &[ParamSpec] = &[
    p("n", Float, Some("20"), "radius containing the start"),
    p("m", Float, Some("40"), "stopping radius, m >= 2n"),
    p("x", Point, Some("0,0,0,0"), "start"),
];
const ESCAPE: &[ParamSpec] = &[
    p("n", Float, Some("20"), "stopping radius"),
    p("x", Point, Some("18,0,0,0"), "start"),
    p("k", Float, Some("8"), "escape radius around the start"),
];
const INVSQ: &[ParamSpec] = &[
    p("n", Int, Some("10000"), "number of steps"),
    p("K", Float, Some("20"), "tail constant"),
];
const INTERSECT: &[ParamSpec] = &[
    p("kind", Text, Some("expectation"), "expectation or probability"),
    p("x", Point, Some("4,0,0,0"), "start of the finite walk (expectation)"),
    p("steps", Int, Some("256"), "length of the finite walk (expectation)"),
    p("truncation_factor", Float, Some("8"), "cutoff radius factor (expectation)"),
    p("s1", Point, Some("0,0,0,0"), "first start (probability)"),
    p("s2", Point, Some("1,0,0,0"), "second start (probability)"),
    p("m", Float, Some("64"), "stopping radius (probability)"),
];
const MOMENTS: &[ParamSpec] = &[
    p("n", Float, Some("16"), "radius of the starting sphere"),
    p("m", Float, Some("64"), "stopping radius"),
    p("k", Int, Some("4"), "number of walks met by the first"),
    p("r", Int, Some("2"), "moment order, at most 8"),
];
const GOOD_TIMES: &[ParamSpec] = &[
    p("n", Float, Some("1024"), "scale entering log2 n"),
    p("lambda", Float, Some("4"), "good-time level"),
    p("window", Int, Some("32"), "summation window"),
    p("length", Int, Some("1024"), "classified times per path"),
];
const HITTABILITY: &[ParamSpec] = &[
    p("n", Float, Some("64"), "radius of the starting sphere"),
    p("m", Float, Some("256"), "stopping radius"),
    p("epsilon", FloatList, Some("0.1,0.2,0.4"), "levels to sweep"),
    p("outer", Int, Some("400"), "outer samples"),
    p("inner", Int, Some("400"), "inner walks per outer sample"),
];
const EVENT_H: &[ParamSpec] = &[
    p("n", Float, Some("64"), "stopping radius"),
    p("k", Float, None, "exclusion radius around the hitting point [default: n / log2 n]"),
    p("c1", FloatList, Some("1"), "threshold constants"),
    p("outer", Int, Some("100"), "outer paths"),
    p("grid", Int, Some("64"), "grid points per path"),
    p("inner", Int, Some("64"), "walks per grid point"),
    p("truncation_factor", Float, Some("8"), "cutoff radius factor"),
];
const COUPLE_STEP: &[ParamSpec] = &[
    p("mode", Text, Some("sampled"), "exact or sampled"),
    p("s1", Point, Some("3,0,0,0"), "first start"),
    p("s2", Point, Some("-3,0,0,0"), "second start"),
    p("n", Float, Some("4"), "radius of the starting sphere"),
    p("m", Float, Some("8"), "stopping radius"),
    p("horizon", Int, Some("192"), "path length T"),
    p("paths", Int, Some("64"), "paths per side (sampled)"),
    p("separation", Float, None, "endpoint separation [default: m / log2 m]"),
    p("hittability", Text, Some("disabled"), "disabled, a threshold, or mu:<scale>"),
];
const DRIVE: &[ParamSpec] = &[
    p("radii", FloatList, Some("8,16,64"), "radius schedule"),
    p("second_start", Point, Some("1,0,0,0"), "start of the second walker"),
    p("paths", Int, Some("64"), "sampled paths per side in each step"),
    p("horizon_factor", Float, Some("3"), "step horizon is ceil(factor m^2)"),
    p("c1", Float, Some("1"), "constant of the far-hitting event"),
    p("first_step_attempts", Int, Some("10000"), "independent pairs tried for the first radius"),
    p("dump", Bool, Some("false"), "include the final walks"),
];
const VERIFY_ALL: &[ParamSpec] = &[
    p("scale", Text, Some("full"), "full or quick"),
    p("checks", Text, Some("all"), "all, or comma-separated check numbers"),
];

impl Command {
    pub const ALL: [Command; 15] = [
        Command::Green,
        Command::Annulus,
        Command::ExitTime,
        Command::BoundaryLayer,
        Command::HittingMeasure,
        Command::Escape,
        Command::Invsq,
        Command::Intersect,
        Command::Moments,
        Command::GoodTimes,
        Command::Hittability,
        Command::EventH,
        Command::CoupleStep,
        Command::Drive,
        Command::VerifyAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Green => "green",
            Command::Annulus => "annulus",
            Command::ExitTime => "exit-time",
            Command::BoundaryLayer => "boundary-layer",
            Command::HittingMeasure => "hitting-measure",
            Command::Escape => "escape",
            Command::Invsq => "invsq",
            Command::Intersect => "intersect",
            Command::Moments => "moments",
            Command::GoodTimes => "good-times",
            Command::Hittability => "hittability",
            Command::EventH => "event-h",
            Command::CoupleStep => "couple-step",
            Command::Drive => "drive",
            Command::VerifyAll => "verify-all",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::Green => "Probability that a walk from the origin ever visits x",
            Command::Annulus => "Probability of leaving B(An) before entering B(an) from the sphere of radius n",
            Command::ExitTime => "Exit time of B(n): mean and tails",
            Command::BoundaryLayer => "Tail of the trace size in the boundary layer of width k",
            Command::HittingMeasure => "Largest point mass of the first-visit distribution on the sphere of radius m",
            Command::Escape => "Probability of leaving B(x, k) before stopping on the sphere of radius n",
            Command::Invsq => "Tails of the inverse-square sum along a walk",
            Command::Intersect => "Trace intersections of two walks",
            Command::Moments => "Moments of summed trace intersections",
            Command::GoodTimes => "Fraction of bad times along walks",
            Command::Hittability => "Fraction of walks hit by an independent walk with probability above 1 - epsilon",
            Command::EventH => "Probability of the far-hitting event",
            Command::CoupleStep => "One coupling step between two walkers",
            Command::Drive => "Multi-scale drive of two walkers kept apart",
            Command::VerifyAll => "Run the verification suite",
        }
    }

    pub fn params(self) -> &'static [ParamSpec] {
        match self {
            Command::Green => GREEN,
            Command::Annulus => ANNULUS,
            Command::ExitTime => EXIT_TIME,
            Command::BoundaryLayer => BOUNDARY_LAYER,
            Command::HittingMeasure => HITTING_MEASURE,
            Command::Escape => ESCAPE,
            Command::Invsq => INVSQ,
            Command::Intersect => INTERSECT,
            Command::Moments => MOMENTS,
            Command::GoodTimes => GOOD_TIMES,
            Command::Hittability => HITTABILITY,
            Command::EventH => EVENT_H,
            Command::CoupleStep => COUPLE_STEP,
            Command::Drive => DRIVE,
            Command::VerifyAll => VERIFY_ALL,
        }
    }

    /// Default replica count; for nested and coupling commands it is the
    /// number of independent runs.
    pub fn default_replicas(self) -> u64 {
        match self {
            Command::Green => 1_000_000,
            Command::Annulus => 200_000,
            Command::ExitTime => 100_000,
            Command::BoundaryLayer => 10_000,
            Command::HittingMeasure => 100_000,
            Command::Escape => 10_000,
            Command::Invsq => 10_000,
            Command::Intersect => 10_000,
            Command::Moments => 2_000,
            Command::GoodTimes => 100,
            Command::Hittability | Command::EventH | Command::CoupleStep | Command::Drive | Command::VerifyAll => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(u64),
    Float(f64),
    Point(Vec<i32>),
    FloatList(Vec<f64>),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: BTreeMap<String, Value>,
    /// Source of every resolved key, globals included.
    pub provenance: BTreeMap<String, Source>,
    pub seed: u64,
    pub replicas: u64,
    /// `None` writes to stdout.
    pub output: Option<PathBuf>,
    pub format: Format,
}

const GLOBALS: [&str; 4] = ["seed", "replicas", "output", "format"];

impl RunConfig {
    /// A validated config from parameter strings, as if every entry had been
    /// given as a flag.
    pub fn from_pairs(command: Command, pairs: &[(&str, &str)]) -> Result<Self, UsageError> {
        let flags = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        resolve(command, flags, BTreeMap::new())
    }

    pub fn float(&self, key: &str) -> f64 {
        match self.params.get(key) {
            Some(Value::Float(v)) => *v,
            Some(Value::Int(v)) => *v as f64,
            other => panic!("parameter {key} is not a float: {other:?}"),
        }
    }

    pub fn opt_float(&self, key: &str) -> Option<f64> {
        self.params.get(key).map(|_| self.float(key))
    }

    pub fn int(&self, key: &str) -> u64 {
        match self.params.get(key) {
            Some(Value::Int(v)) => *v,
            other => panic!("parameter {key} is not an integer: {other:?}"),
        }
    }

    pub fn point(&self, key: &str) -> LatticePoint<4> {
        match self.params.get(key) {
            Some(Value::Point(v)) => LatticePoint::new([v[0], v[1], v[2], v[3]]),
            other => panic!("parameter {key} is not a point: {other:?}"),
        }
    }

    pub fn floats(&self, key: &str) -> Vec<f64> {
        match self.params.get(key) {
            Some(Value::FloatList(v)) => v.clone(),
            other => panic!("parameter {key} is not a list: {other:?}"),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        match self.params.get(key) {
            Some(Value::Text(v)) => v,
            other => panic!("parameter {key} is not text: {other:?}"),
        }
    }

    pub fn flag(&self, key: &str) -> bool {
        match self.params.get(key) {
            Some(Value::Bool(v)) => *v,
            other => panic!("parameter {key} is not a flag: {other:?}"),
        }
    }
}

fn cli() -> clap::Command {
    let global = |name: &'static str, help: &'static str| {
        Arg::new(name)
            .long(name)
            .value_name("VALUE")
            .help(help)
            .allow_hyphen_values(true)
            .action(ArgAction::Set)
    };
    let mut root = clap::Command::new("avoidance")
        .about("Random-walk laboratory on Z^4: estimators, intersections and non-intersecting couplings")
        .version(crate::report::VERSION)
        .subcommand_required(true)
        .arg_required_else_help(true);
    for command in Command::ALL {
        let mut sub = clap::Command::new(command.name())
            .about(command.about())
            .arg(global("config", "flat key = value file; flags override it").global(true))
            .arg(global("seed", "top-level seed [default: 1]"))
            .arg(global("output", "report path [default: stdout]"))
            .arg(global("format", "json or csv [default: json]"));
        sub = sub.arg(global("replicas", "").help(format!("replicas [default: {}]", command.default_replicas())));
        for spec in command.params() {
            let help = match spec.default {
                Some(d) => format!("{} [default: {d}]", spec.help),
                None => spec.help.to_string(),
            };
            sub = sub.arg(
                Arg::new(spec.key)
                    .long(spec.key)
                    .value_name("VALUE")
                    .help(help)
                    .allow_hyphen_values(true)
                    .action(ArgAction::Set),
            );
        }
        root = root.subcommand(sub);
    }
    root
}

/// Parses the command line (program name first) into a validated config.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = cli().try_get_matches_from(argv)?;
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let command = Command::from_name(name).expect("subcommands mirror Command::ALL");
    let mut flags = BTreeMap::new();
    for id in sub.ids() {
        let key = id.as_str();
        if key == "config" {
            continue;
        }
        if let Some(v) = sub.get_one::<String>(key) {
            flags.insert(key.to_string(), v.clone());
        }
    }
    let file = match sub.get_one::<String>("config") {
        Some(path) => read_config_file(Path::new(path))?,
        None => BTreeMap::new(),
    };
    resolve(command, flags, file)
}

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, UsageError> {
    let text = std::fs::read_to_string(path).map_err(|e| UsageError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config_text(&text).map_err(|message| UsageError::File {
        path: path.to_path_buf(),
        message,
    })
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
        let key = key.trim();
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key `{key}`", lineno + 1));
        }
    }
    Ok(out)
}

fn resolve(
    command: Command,
    flags: BTreeMap<String, String>,
    file: BTreeMap<String, String>,
) -> Result<RunConfig, UsageError> {
    let specs = command.params();
    for key in flags.keys().chain(file.keys()) {
        if !GLOBALS.contains(&key.as_str()) && !specs.iter().any(|s| s.key == key) {
            return Err(UsageError::UnknownKey {
                key: key.clone(),
                command: command.name().to_string(),
            });
        }
    }
    let lookup = |key: &str| -> Option<(String, Source)> {
        flags
            .get(key)
            .map(|v| (v.clone(), Source::Flag))
            .or_else(|| file.get(key).map(|v| (v.clone(), Source::File)))
    };

    let mut provenance = BTreeMap::new();
    let mut params = BTreeMap::new();
    for spec in specs {
        let (raw, source) = match (lookup(spec.key), spec.default) {
            (Some(found), _) => found,
            (None, Some(d)) => (d.to_string(), Source::Default),
            (None, None) => continue,
        };
        params.insert(spec.key.to_string(), parse_value(spec.key, spec.kind, &raw)?);
        provenance.insert(spec.key.to_string(), source);
    }

    let mut global = |key: &str, default: String| {
        let (raw, source) = lookup(key).unwrap_or((default, Source::Default));
        provenance.insert(key.to_string(), source);
        raw
    };
    let seed_raw = global("seed", "1".into());
    let replicas_raw = global("replicas", command.default_replicas().to_string());
    let format_raw = global("format", "json".into());
    let output_raw = lookup("output");
    if let Some((_, source)) = &output_raw {
        provenance.insert("output".into(), *source);
    }
    let seed = seed_raw
        .parse::<u64>()
        .map_err(|_| UsageError::invalid("seed", "expected a 64-bit unsigned integer"))?;
    let replicas = match parse_value("replicas", Kind::Int, &replicas_raw)? {
        Value::Int(0) => return Err(UsageError::invalid("replicas", "must be positive")),
        Value::Int(r) => r,
        _ => unreachable!(),
    };
    let format = match format_raw.as_str() {
        "json" => Format::Json,
        "csv" => Format::Csv,
        other => return Err(UsageError::invalid("format", format!("expected json or csv, got `{other}`"))),
    };
    let config = RunConfig {
        command,
        params,
        provenance,
        seed,
        replicas,
        output: output_raw.map(|(p, _)| PathBuf::from(p)),
        format,
    };
    validate(&config)?;
    Ok(config)
}

fn parse_value(key: &str, kind: Kind, raw: &str) -> Result<Value, UsageError> {
    let bad = || UsageError::invalid(key, format!("expected {}, got `{raw}`", kind.describe()));
    let float = |s: &str| -> Result<f64, UsageError> {
        match s.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(bad()),
        }
    };
    Ok(match kind {
        Kind::Int => Value::Int(raw.trim().parse::<u64>().map_err(|_| bad())?),
        Kind::Float => Value::Float(float(raw)?),
        Kind::Point => {
            let coords: Vec<i32> = raw
                .split(',')
                .map(|c| c.trim().parse::<i32>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad())?;
            if coords.len() != 4 {
                return Err(bad());
            }
            Value::Point(coords)
        }
        Kind::FloatList => {
            let v: Vec<f64> = raw.split(',').map(float).collect::<Result<_, _>>()?;
            if v.is_empty() {
                return Err(bad());
            }
            Value::FloatList(v)
        }
        Kind::Text => Value::Text(raw.trim().to_string()),
        Kind::Bool => Value::Bool(raw.trim().parse::<bool>().map_err(|_| bad())?),
    })
}

fn require(ok: bool, key: &str, message: impl FnOnce() -> String) -> Result<(), UsageError> {
    if ok {
        Ok(())
    } else {
        Err(UsageError::invalid(key, message()))
    }
}

fn inside(c: &RunConfig, point: &str, radius: f64, radius_key: &str) -> Result<(), UsageError> {
    let ball = BallSpec::<4>::centered(radius).map_err(|e| UsageError::invalid(radius_key, e.to_string()))?;
    let x = c.point(point);
    require(ball.contains(&x), point, || format!("{x:?} is not inside B({radius})"))
}

fn positive(c: &RunConfig, key: &str) -> Result<(), UsageError> {
    let v = c.float(key);
    require(v > 0.0, key, || format!("must be positive, got {v}"))
}

fn at_least_one(c: &RunConfig, key: &str) -> Result<(), UsageError> {
    let v = c.int(key);
    require(v >= 1, key, || "must be at least 1".into())
}

/// Checks every parameter against the preconditions of the operation it
/// feeds, before any simulation starts.
pub fn validate(c: &RunConfig) -> Result<(), UsageError> {
    match c.command {
        Command::Green => {
            let x = c.point("x");
            if let Some(t) = c.opt_float("truncation") {
                require(t > 4.0 * x.norm(), "truncation", || format!("must exceed 4|x| = {}", 4.0 * x.norm()))?;
            }
        }
        Command::Annulus => {
            let (n, a, big_a) = (c.float("n"), c.float("a"), c.float("A"));
            require(a > 0.0 && a < 1.0, "a", || format!("must satisfy 0 < a < 1, got {a}"))?;
            require(big_a > 1.0, "A", || format!("must exceed 1, got {big_a}"))?;
            require(a * n <= n - 1.0, "n", || format!("B({}) must lie strictly inside B({n})", a * n))?;
        }
        Command::ExitTime => positive(c, "n")?,
        Command::BoundaryLayer => {
            positive(c, "k")?;
            positive(c, "lambda")?;
            let (n, k) = (c.float("n"), c.float("k"));
            require(k < n, "k", || format!("must be below n = {n}, got {k}"))?;
        }
        Command::HittingMeasure => {
            positive(c, "n")?;
            inside(c, "x", c.float("n"), "n")?;
            let (n, m) = (c.float("n"), c.float("m"));
            require(m >= 2.0 * n, "m", || format!("must be at least 2n = {}, got {m}", 2.0 * n))?;
        }
        Command::Escape => {
            positive(c, "n")?;
            positive(c, "k")?;
            inside(c, "x", c.float("n"), "n")?;
        }
        Command::Invsq => {
            at_least_one(c, "n")?;
            positive(c, "K")?;
        }
        Command::Intersect => match c.text("kind") {
            "expectation" => {
                at_least_one(c, "steps")?;
                let f = c.float("truncation_factor");
                require(f > 1.0, "truncation_factor", || format!("must exceed 1, got {f}"))?;
            }
            "probability" => {
                positive(c, "m")?;
                inside(c, "s1", c.float("m"), "m")?;
                inside(c, "s2", c.float("m"), "m")?;
            }
            other => return Err(UsageError::invalid("kind", format!("expected expectation or probability, got `{other}`"))),
        },
        Command::Moments => {
            let (n, m) = (c.float("n"), c.float("m"));
            require(n > 1.0, "n", || format!("must exceed 1, got {n}"))?;
            require(m > n, "m", || format!("must exceed n = {n}, got {m}"))?;
            at_least_one(c, "k")?;
            require(c.int("r") <= 8, "r", || "must be at most 8".into())?;
        }
        Command::GoodTimes => {
            let n = c.float("n");
            require(n > 1.0, "n", || format!("must exceed 1, got {n}"))?;
            positive(c, "lambda")?;
            at_least_one(c, "window")?;
            at_least_one(c, "length")?;
        }
        Command::Hittability => {
            let (n, m) = (c.float("n"), c.float("m"));
            require(n > 1.0, "n", || format!("must exceed 1, got {n}"))?;
            require(m > n, "m", || format!("must exceed n = {n}, got {m}"))?;
            require(c.floats("epsilon").iter().all(|&e| e > 0.0), "epsilon", || "levels must be positive".into())?;
            at_least_one(c, "outer")?;
            at_least_one(c, "inner")?;
        }
        Command::EventH => {
            let n = c.float("n");
            require(n > 2.0, "n", || format!("must exceed 2, got {n}"))?;
            if let Some(k) = c.opt_float("k") {
                require(k > 0.0 && k < n, "k", || format!("must satisfy 0 < k < n, got {k}"))?;
            }
            require(c.floats("c1").iter().all(|&v| v > 0.0), "c1", || "constants must be positive".into())?;
            at_least_one(c, "outer")?;
            at_least_one(c, "grid")?;
            at_least_one(c, "inner")?;
            let f = c.float("truncation_factor");
            require(f > 1.0, "truncation_factor", || format!("must exceed 1, got {f}"))?;
        }
        Command::CoupleStep => {
            let (n, m) = (c.float("n"), c.float("m"));
            require(n > 1.0, "n", || format!("must exceed 1, got {n}"))?;
            require(m > n, "m", || format!("must exceed n = {n}, got {m}"))?;
            inside(c, "s1", m, "m")?;
            inside(c, "s2", m, "m")?;
            at_least_one(c, "horizon")?;
            match c.text("mode") {
                "exact" => {
                    let t = c.int("horizon");
                    require(t <= 8, "horizon", || format!("exact mode enumerates 8^T paths; T = {t} is too large"))?;
                }
                "sampled" => at_least_one(c, "paths")?,
                other => return Err(UsageError::invalid("mode", format!("expected exact or sampled, got `{other}`"))),
            }
            if let Some(s) = c.opt_float("separation") {
                require(s >= 0.0, "separation", || format!("must be non-negative, got {s}"))?;
            }
            parse_filter(c.text("hittability"))?;
        }
        Command::Drive => {
            let radii = c.floats("radii");
            schedule(&radii).map_err(|e| UsageError::invalid("radii", e.to_string()))?;
            inside(c, "second_start", radii[0], "radii")?;
            require(c.point("second_start") != LatticePoint::origin(), "second_start", || "must differ from the origin".into())?;
            at_least_one(c, "paths")?;
            positive(c, "horizon_factor")?;
            positive(c, "c1")?;
            at_least_one(c, "first_step_attempts")?;
        }
        Command::VerifyAll => {
            let scale = c.text("scale");
            require(matches!(scale, "full" | "quick"), "scale", || format!("expected full or quick, got `{scale}`"))?;
            check_ids(c.text("checks"))?;
        }
    }
    Ok(())
}

/// The hittability filter spec of `couple-step`.
pub fn parse_filter(raw: &str) -> Result<avoidance_core::coupling::HittabilityFilter, UsageError> {
    use avoidance_core::coupling::HittabilityFilter;
    let bad = || UsageError::invalid("hittability", format!("expected disabled, a threshold in (0, 1], or mu:<scale>; got `{raw}`"));
    if raw == "disabled" {
        return Ok(HittabilityFilter::Disabled);
    }
    if let Some(scale) = raw.strip_prefix("mu:") {
        let scale: f64 = scale.parse().map_err(|_| bad())?;
        return if scale > 0.0 { Ok(HittabilityFilter::FromMu { scale }) } else { Err(bad()) };
    }
    match raw.parse::<f64>() {
        Ok(t) if t > 0.0 && t <= 1.0 => Ok(HittabilityFilter::Threshold(t)),
        _ => Err(bad()),
    }
}

/// Check numbers selected by `verify-all --checks`.
pub fn check_ids(raw: &str) -> Result<Vec<u32>, UsageError> {
    if raw == "all" {
        return Ok((1..=10).collect());
    }
    let ids: Vec<u32> = raw
        .split(',')
        .map(|s| s.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| UsageError::invalid("checks", format!("expected all or numbers 1-10, got `{raw}`")))?;
    require(ids.iter().all(|i| (1..=10).contains(i)), "checks", || format!("numbers must lie in 1-10, got `{raw}`"))?;
    Ok(ids)
}

/// `n / log2 n`, the default exclusion radius of `event-h`.
pub fn default_exclusion(n: f64) -> f64 {
    n / log2(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_schema() {
        for command in Command::ALL {
            let c = RunConfig::from_pairs(command, &[]).unwrap();
            assert_eq!(c.seed, 1);
            assert_eq!(c.replicas, command.default_replicas());
            for spec in command.params() {
                assert_eq!(c.params.contains_key(spec.key), spec.default.is_some(), "{}", spec.key);
            }
        }
    }

    #[test]
    fn config_text_skips_comments() {
        let m = parse_config_text("# header\nn = 3 # trailing\n\nA=2\n").unwrap();
        assert_eq!(m.get("n").unwrap(), "3");
        assert_eq!(m.get("A").unwrap(), "2");
        assert!(parse_config_text("n 3").is_err());
        assert!(parse_config_text("n = 1\nn = 2").is_err());
    }

    #[test]
    fn filter_specs() {
        use avoidance_core::coupling::HittabilityFilter;
        assert_eq!(parse_filter("disabled").unwrap(), HittabilityFilter::Disabled);
        assert_eq!(parse_filter("0.5").unwrap(), HittabilityFilter::Threshold(0.5));
        assert_eq!(parse_filter("mu:3").unwrap(), HittabilityFilter::FromMu { scale: 3.0 });
        assert!(parse_filter("1.5").is_err());
        assert!(parse_filter("mu:-1").is_err());
    }
}
