//! Command-line entry point: one JSON config, scalar overrides, one
//! analysis, deterministic artifacts plus a `manifest.json`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid config.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Error;
use crate::maps::MapSpec;
use crate::output::ArtifactSink;

mod analyses;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

pub const ANALYSES: [&str; 8] = ["classify", "semiconjugacy", "conley", "cones", "cocycle", "rotation", "horseshoe", "basin"];

#[derive(Parser, Debug)]
#[command(name = "phdyn", version, about = "Numerical analysis of partially hyperbolic examples")]
pub struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override a scalar config field, e.g. `--set params.resolution=16`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a run, split by exit code.
#[derive(Debug)]
pub enum RunError {
    Invalid(String),
    Runtime(Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Invalid(m) => write!(f, "invalid config: {m}"),
            RunError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Runtime(e)
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;

fn invalid(pointer: &str, msg: impl std::fmt::Display) -> RunError {
    RunError::Invalid(format!("{pointer}: {msg}"))
}

/// Reader over one JSON object that records which keys were consumed, so
/// unknown keys can be reported.
pub struct Params<'a> {
    pointer: String,
    object: Option<&'a Map<String, Value>>,
    used: BTreeSet<String>,
}

impl<'a> Params<'a> {
    pub fn new(pointer: &str, value: Option<&'a Value>) -> RunResult<Self> {
        let object = match value {
            None | Some(Value::Null) => None,
            Some(Value::Object(o)) => Some(o),
            Some(_) => return Err(invalid(pointer, "expected an object")),
        };
        Ok(Self { pointer: pointer.to_string(), object, used: BTreeSet::new() })
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        self.used.insert(key.to_string());
        self.object.and_then(|o| o.get(key)).filter(|v| !v.is_null())
    }

    fn at(&self, key: &str) -> String {
        format!("{}/{key}", self.pointer)
    }

    pub fn has(&self, key: &str) -> bool {
        self.object.is_some_and(|o| o.get(key).is_some_and(|v| !v.is_null()))
    }

    pub fn f64_opt(&mut self, key: &str) -> RunResult<Option<f64>> {
        let at = self.at(key);
        self.raw(key).map(|v| value_f64(v).ok_or_else(|| invalid(&at, "expected a real number"))).transpose()
    }

    pub fn f64(&mut self, key: &str, default: f64) -> RunResult<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn positive(&mut self, key: &str, default: f64) -> RunResult<f64> {
        let v = self.f64(key, default)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(&self.at(key), format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn usize(&mut self, key: &str, default: usize) -> RunResult<usize> {
        let at = self.at(key);
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
                .map(|u| u as usize)
                .ok_or_else(|| invalid(&at, "expected a non-negative integer")),
        }
    }

    pub fn count(&mut self, key: &str, default: usize) -> RunResult<usize> {
        let v = self.usize(key, default)?;
        if v == 0 {
            return Err(invalid(&self.at(key), "must be at least 1"));
        }
        Ok(v)
    }

    pub fn bool(&mut self, key: &str, default: bool) -> RunResult<bool> {
        let at = self.at(key);
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Bool(b)) => Ok(*b),
            Some(_) => Err(invalid(&at, "expected true or false")),
        }
    }

    pub fn string(&mut self, key: &str, default: &str) -> RunResult<String> {
        let at = self.at(key);
        match self.raw(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(invalid(&at, "expected a string")),
        }
    }

    pub fn reals(&mut self, key: &str) -> RunResult<Option<Vec<f64>>> {
        let at = self.at(key);
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, v)| value_f64(v).ok_or_else(|| invalid(&format!("{at}/{i}"), "expected a real number")))
                .collect::<RunResult<Vec<f64>>>()
                .map(Some),
            Some(_) => Err(invalid(&at, "expected an array of reals")),
        }
    }

    pub fn integers(&mut self, key: &str) -> RunResult<Option<Vec<i64>>> {
        let at = self.at(key);
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, v)| v.as_i64().ok_or_else(|| invalid(&format!("{at}/{i}"), "expected an integer")))
                .collect::<RunResult<Vec<i64>>>()
                .map(Some),
            Some(_) => Err(invalid(&at, "expected an array of integers")),
        }
    }

    pub fn strings(&mut self, key: &str) -> RunResult<Option<Vec<String>>> {
        let at = self.at(key);
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, v)| v.as_str().map(str::to_string).ok_or_else(|| invalid(&format!("{at}/{i}"), "expected a string")))
                .collect::<RunResult<Vec<String>>>()
                .map(Some),
            Some(_) => Err(invalid(&at, "expected an array of strings")),
        }
    }

    /// Points as arrays of reals.
    pub fn points(&mut self, key: &str) -> RunResult<Option<Vec<Vec<f64>>>> {
        let at = self.at(key);
        let Some(v) = self.raw(key) else { return Ok(None) };
        let bad = || invalid(&at, "expected an array of points (arrays of reals)");
        v.as_array()
            .ok_or_else(bad)?
            .iter()
            .map(|p| p.as_array().and_then(|a| a.iter().map(value_f64).collect::<Option<Vec<f64>>>()).ok_or_else(bad))
            .collect::<RunResult<Vec<_>>>()
            .map(Some)
    }

    /// Matrices as arrays of rows of reals.
    pub fn matrices(&mut self, key: &str) -> RunResult<Option<Vec<Vec<Vec<f64>>>>> {
        let at = self.at(key);
        let Some(v) = self.raw(key) else { return Ok(None) };
        let bad = || invalid(&at, "expected an array of matrices (arrays of rows of reals)");
        let outer = v.as_array().ok_or_else(bad)?;
        let mut out = Vec::new();
        for m in outer {
            let rows = m.as_array().ok_or_else(bad)?;
            let mut mat = Vec::new();
            for r in rows {
                let row = r.as_array().ok_or_else(bad)?;
                mat.push(row.iter().map(value_f64).collect::<Option<Vec<f64>>>().ok_or_else(bad)?);
            }
            out.push(mat);
        }
        Ok(Some(out))
    }

    pub fn child(&mut self, key: &str) -> RunResult<Option<Params<'a>>> {
        let at = self.at(key);
        match self.raw(key) {
            None => Ok(None),
            Some(v) => Params::new(&at, Some(v)).map(Some),
        }
    }

    /// Rejects keys that were never read.
    pub fn finish(self) -> RunResult<()> {
        if let Some(o) = self.object {
            if let Some(k) = o.keys().find(|k| !self.used.contains(*k)) {
                return Err(invalid(&format!("{}/{k}", self.pointer), "unknown parameter"));
            }
        }
        Ok(())
    }
}

fn value_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok().filter(|x: &f64| x.is_finite()),
        _ => None,
    }
}

/// Applies `key=value` to a scalar field addressed by a dotted path.
pub fn apply_override(config: &mut Value, assignment: &str) -> RunResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| RunError::Invalid(format!("override '{assignment}' is not KEY=VALUE")))?;
    let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    if parsed.is_array() || parsed.is_object() {
        return Err(RunError::Invalid(format!("override '{key}' must be a scalar")));
    }
    let mut node = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let pointer = format!("/{}", parts[..=i].join("/"));
        node = match node {
            Value::Object(o) => {
                if last {
                    if o.get(*part).is_some_and(|v| v.is_array() || v.is_object()) {
                        return Err(invalid(&pointer, "only scalar fields can be overridden"));
                    }
                    o.insert(part.to_string(), parsed);
                    return Ok(());
                }
                o.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()))
            }
            Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| invalid(&pointer, "expected an array index"))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| invalid(&pointer, format!("index out of range (length {len})")))?;
                if last {
                    if slot.is_array() || slot.is_object() {
                        return Err(invalid(&pointer, "only scalar fields can be overridden"));
                    }
                    *slot = parsed;
                    return Ok(());
                }
                slot
            }
            _ => return Err(invalid(&pointer, "path goes through a scalar")),
        };
    }
    Ok(())
}

/// A validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub analysis: String,
    pub map: Option<MapSpec>,
    pub seed: Option<u64>,
    pub params: Value,
    pub output: Option<PathBuf>,
    /// The config after overrides, recorded in the manifest.
    pub resolved: Value,
}

impl RunConfig {
    pub fn from_value(v: Value) -> RunResult<Self> {
        let obj = v.as_object().ok_or_else(|| invalid("", "config must be a JSON object"))?;
        for k in obj.keys() {
            if !["analysis", "map", "seed", "params", "output"].contains(&k.as_str()) {
                return Err(invalid(&format!("/{k}"), "unknown field"));
            }
        }
        let analysis = obj
            .get("analysis")
            .and_then(Value::as_str)
            .ok_or_else(|| invalid("/analysis", "required string"))?
            .to_string();
        if !ANALYSES.contains(&analysis.as_str()) {
            return Err(invalid("/analysis", format!("must be one of {}", ANALYSES.join(", "))));
        }
        let map = match obj.get("map") {
            None | Some(Value::Null) => None,
            Some(m) => Some(serde_json::from_value::<MapSpec>(m.clone()).map_err(|e| invalid("/map", e))?),
        };
        if map.is_none() && analysis != "cocycle" {
            return Err(invalid("/map", "required for this analysis"));
        }
        let seed = match obj.get("seed") {
            None | Some(Value::Null) => None,
            Some(s) => Some(
                s.as_u64()
                    .or_else(|| s.as_str().and_then(|t| t.parse().ok()))
                    .ok_or_else(|| invalid("/seed", "expected a 64-bit unsigned integer"))?,
            ),
        };
        if seed.is_none() && ["semiconjugacy", "cones", "rotation", "basin"].contains(&analysis.as_str()) {
            return Err(invalid("/seed", "required for sampled analyses"));
        }
        let params = obj.get("params").cloned().unwrap_or(Value::Object(Map::new()));
        if !params.is_object() {
            return Err(invalid("/params", "expected an object"));
        }
        let output = match obj.get("output") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(invalid("/output", "expected a path string")),
        };
        Ok(Self { analysis, map, seed, params, output, resolved: v })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    analysis: &'a str,
    seed: Option<u64>,
    status: &'a str,
    error: Option<String>,
    config: &'a Value,
    artifacts: &'a [crate::output::ArtifactEntry],
    wall_time_seconds: f64,
}

/// Reads, validates and runs one config. Returns the process exit code.
pub fn run(args: &Args) -> i32 {
    let started = Instant::now();
    if let Some(n) = args.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return EXIT_INVALID;
        }
        // fails only if a pool already exists, which keeps its own size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config = match load_config(&args.config, &args.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let out = args.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("phdyn-out"));
    // parameters are validated before anything is written
    let plan = match analyses::plan(&config) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let mut sink = match ArtifactSink::new(&out) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", out.display());
            return EXIT_RUNTIME;
        }
    };
    let result = plan.execute(&config, &mut sink);
    let (status, error, code) = match &result {
        Ok(()) => ("ok", None, EXIT_OK),
        Err(e) => ("error", Some(e.to_string()), exit_code(e)),
    };
    let manifest = Manifest {
        tool: "phdyn",
        version: env!("CARGO_PKG_VERSION"),
        analysis: &config.analysis,
        seed: config.seed,
        status,
        error,
        config: &config.resolved,
        artifacts: sink.entries(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let text = match crate::output::to_json_string(&manifest) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    if let Err(e) = std::fs::write(sink.dir().join("manifest.json"), text) {
        eprintln!("error: cannot write manifest: {e}");
        return EXIT_RUNTIME;
    }
    if let Err(e) = result {
        eprintln!("error: {e}");
    }
    code
}

fn exit_code(e: &RunError) -> i32 {
    match e {
        RunError::Invalid(_) => EXIT_INVALID,
        RunError::Runtime(_) => EXIT_RUNTIME,
    }
}

pub fn load_config(path: &Path, overrides: &[String]) -> RunResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| RunError::Invalid(format!("malformed JSON in {}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    RunConfig::from_value(value)
}
