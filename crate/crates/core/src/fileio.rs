//! Document formats: JSON schemas for models, covariances, weights,
//! plans, and policies, plus content digests and the run manifest.
//!
//! This module is the single owner of every on-disk schema. Documents
//! are JSON objects whose matrix fields are arrays of row arrays of
//! numbers. All numeric output is written with 17 significant digits,
//! enough to round-trip `f64` losslessly. Symmetric matrices are
//! symmetrized on load; asymmetry beyond a relative 1e-9 is reported to
//! the caller as a warning value (loading still succeeds).

use crate::error::{Error, Result};
use crate::linalg::{Mat, SymMat};
use crate::lqr::LqrSolution;
use crate::model::{LinearSystem, TimeGrid};
use crate::scalar::Real;
use crate::stationary::StationaryPolicy;
use crate::steering::SteeringPlan;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

/// Relative asymmetry above which a loaded symmetric matrix earns a
/// warning (it is symmetrized either way).
pub const ASYMMETRY_WARN: f64 = 1e-9;

// ───────────────────── number formatting ─────────────────────

/// Serializes a JSON value with every float printed as 17 significant
/// digits (`d.dddddddddddddddde±x`), compactly.
pub fn to_json_17(value: &Value) -> String {
    let mut out = Vec::new();
    write_value(&mut out, value).expect("writing to a Vec cannot fail");
    String::from_utf8(out).expect("JSON output is UTF-8")
}

/// Pretty variant of [`to_json_17`] with two-space indentation.
pub fn to_json_17_pretty(value: &Value) -> String {
    let mut out = Vec::new();
    write_value_pretty(&mut out, value, 0).expect("writing to a Vec cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON output is UTF-8")
}

fn write_number(out: &mut Vec<u8>, n: &serde_json::Number) -> std::io::Result<()> {
    if let Some(f) = n.as_f64() {
        if n.is_f64() {
            return write!(out, "{:.16e}", f);
        }
    }
    write!(out, "{n}")
}

fn write_value(out: &mut Vec<u8>, value: &Value) -> std::io::Result<()> {
    match value {
        Value::Null => write!(out, "null"),
        Value::Bool(b) => write!(out, "{b}"),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => write!(out, "{}", Value::String(s.clone())),
        Value::Array(items) => {
            write!(out, "[")?;
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    write!(out, ",")?;
                }
                write_value(out, item)?;
            }
            write!(out, "]")
        }
        Value::Object(map) => {
            write!(out, "{{")?;
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    write!(out, ",")?;
                }
                write!(out, "{}:", Value::String(k.clone()))?;
                write_value(out, v)?;
            }
            write!(out, "}}")
        }
    }
}

fn write_value_pretty(out: &mut Vec<u8>, value: &Value, indent: usize) -> std::io::Result<()> {
    match value {
        Value::Array(items) => {
            // Arrays of plain numbers stay on one line (matrix rows).
            if items.iter().all(|v| v.is_number()) {
                return write_value(out, value);
            }
            write!(out, "[")?;
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    write!(out, ",")?;
                }
                write!(out, "\n{}", "  ".repeat(indent + 1))?;
                write_value_pretty(out, item, indent + 1)?;
            }
            write!(out, "\n{}]", "  ".repeat(indent))
        }
        Value::Object(map) => {
            write!(out, "{{")?;
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    write!(out, ",")?;
                }
                write!(out, "\n{}{}: ", "  ".repeat(indent + 1), Value::String(k.clone()))?;
                write_value_pretty(out, v, indent + 1)?;
            }
            write!(out, "\n{}}}", "  ".repeat(indent))
        }
        other => write_value(out, other),
    }
}

// ───────────────────── value ⇄ matrix ─────────────────────

/// A matrix as an array of row arrays.
pub fn mat_to_value<T: Real>(m: &Mat<T>) -> Value {
    let rows: Vec<Value> = (0..m.rows())
        .map(|i| {
            Value::Array((0..m.cols()).map(|j| json_num(m[(i, j)].to_f64())).collect())
        })
        .collect();
    Value::Array(rows)
}

pub fn sym_to_value<T: Real>(s: &SymMat<T>) -> Value {
    mat_to_value(&s.to_mat())
}

fn json_num(x: f64) -> Value {
    Value::Number(
        serde_json::Number::from_f64(x).expect("non-finite values never reach serialization"),
    )
}

fn schema_err(path: &str, message: impl Into<String>) -> Error {
    Error::SchemaError { path: path.to_string(), message: message.into() }
}

/// Parses an array of row arrays into a matrix; `path` names the field
/// for error messages.
pub fn mat_from_value<T: Real>(value: &Value, path: &str) -> Result<Mat<T>> {
    let rows = value
        .as_array()
        .ok_or_else(|| schema_err(path, "expected an array of row arrays"))?;
    if rows.is_empty() {
        return Err(schema_err(path, "matrix has no rows"));
    }
    let mut data: Vec<Vec<T>> = Vec::with_capacity(rows.len());
    let mut width = None;
    for (i, row) in rows.iter().enumerate() {
        let row_path = format!("{path}[{i}]");
        let entries = row
            .as_array()
            .ok_or_else(|| schema_err(&row_path, "expected a row array of numbers"))?;
        match width {
            None => width = Some(entries.len()),
            Some(w) if w != entries.len() => {
                return Err(schema_err(
                    &row_path,
                    format!("row has {} entries, expected {w}", entries.len()),
                ));
            }
            _ => {}
        }
        let mut parsed = Vec::with_capacity(entries.len());
        for (j, e) in entries.iter().enumerate() {
            let x = e.as_f64().ok_or_else(|| {
                schema_err(&format!("{row_path}[{j}]"), "expected a finite number")
            })?;
            if !x.is_finite() {
                return Err(schema_err(&format!("{row_path}[{j}]"), "number is not finite"));
            }
            parsed.push(T::from_f64(x));
        }
        data.push(parsed);
    }
    if width == Some(0) {
        return Err(schema_err(path, "matrix has empty rows"));
    }
    Ok(Mat::from_rows(&data))
}

/// Parses a flat numeric array.
pub fn vec_from_value<T: Real>(value: &Value, path: &str) -> Result<Vec<T>> {
    let entries = value
        .as_array()
        .ok_or_else(|| schema_err(path, "expected an array of numbers"))?;
    let mut out = Vec::with_capacity(entries.len());
    for (j, e) in entries.iter().enumerate() {
        let x = e
            .as_f64()
            .ok_or_else(|| schema_err(&format!("{path}[{j}]"), "expected a finite number"))?;
        if !x.is_finite() {
            return Err(schema_err(&format!("{path}[{j}]"), "number is not finite"));
        }
        out.push(T::from_f64(x));
    }
    Ok(out)
}

/// Parses a square matrix field and symmetrizes it, returning the packed
/// matrix together with the measured relative asymmetry.
pub fn sym_from_value<T: Real>(value: &Value, path: &str) -> Result<(SymMat<T>, f64)> {
    let m = mat_from_value::<T>(value, path)?;
    if !m.is_square() {
        return Err(schema_err(
            path,
            format!("symmetric matrix must be square, got {}x{}", m.rows(), m.cols()),
        ));
    }
    let scale = m.max_abs().to_f64().max(1.0);
    let rel_asym = m.asymmetry().to_f64() / scale;
    Ok((SymMat::symmetrized_from(&m), rel_asym))
}

// ───────────────────── documents ─────────────────────

fn parse_document(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| schema_err("(document)", format!("invalid JSON: {e}")))?;
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(schema_err("(document)", "top level must be an object")),
    }
}

fn field<'v>(map: &'v Map<String, Value>, key: &str) -> Result<&'v Value> {
    map.get(key).ok_or_else(|| schema_err(key, "required field is missing"))
}

fn write_document(path: &Path, value: &Value) -> Result<()> {
    let text = to_json_17_pretty(value);
    std::fs::write(path, text)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })
}

/// Model document: `{"A": [[…]], "B": [[…]], "B1": [[…]]}`.
pub fn read_model<T: Real>(path: &Path) -> Result<LinearSystem<T>> {
    let map = parse_document(path)?;
    let a = mat_from_value(field(&map, "A")?, "A")?;
    let b = mat_from_value(field(&map, "B")?, "B")?;
    let b1 = mat_from_value(field(&map, "B1")?, "B1")?;
    LinearSystem::new(a, b, b1)
}

pub fn model_to_value<T: Real>(sys: &LinearSystem<T>) -> Value {
    json!({
        "A": mat_to_value(sys.a()),
        "B": mat_to_value(sys.b()),
        "B1": mat_to_value(sys.b1()),
    })
}

pub fn write_model<T: Real>(sys: &LinearSystem<T>, path: &Path) -> Result<()> {
    write_document(path, &model_to_value(sys))
}

/// Canonical content digest of a parsed model: the SHA-256 of its
/// compact 17-digit serialization, prefixed `sha256:`. Whitespace and key
/// order in the source file do not affect it.
pub fn model_digest<T: Real>(sys: &LinearSystem<T>) -> String {
    let canonical = to_json_17(&model_to_value(sys));
    digest_bytes(canonical.as_bytes())
}

/// `sha256:<hex>` of raw bytes (used for manifest input digests).
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("sha256:{:x}", hasher.finalize())
}

/// Covariance document: `{"Sigma": [[…]], "mean": […] }` with `mean`
/// optional (defaults to zero).
pub struct CovarianceDoc<T> {
    pub cov: SymMat<T>,
    pub mean: Vec<T>,
    /// Relative asymmetry measured before symmetrization; above
    /// [`ASYMMETRY_WARN`] the caller should surface a warning.
    pub asymmetry: f64,
}

pub fn read_covariance<T: Real>(path: &Path) -> Result<CovarianceDoc<T>> {
    let map = parse_document(path)?;
    let (cov, asymmetry) = sym_from_value(field(&map, "Sigma")?, "Sigma")?;
    let mean = match map.get("mean") {
        Some(v) => {
            let m = vec_from_value(v, "mean")?;
            if m.len() != cov.order() {
                return Err(schema_err(
                    "mean",
                    format!("length {} does not match Sigma order {}", m.len(), cov.order()),
                ));
            }
            m
        }
        None => vec![T::zero(); cov.order()],
    };
    Ok(CovarianceDoc { cov, mean, asymmetry })
}

pub fn write_covariance<T: Real>(cov: &SymMat<T>, mean: Option<&[T]>, path: &Path) -> Result<()> {
    let mut map = Map::new();
    map.insert("Sigma".into(), sym_to_value(cov));
    if let Some(mean) = mean {
        map.insert(
            "mean".into(),
            Value::Array(mean.iter().map(|&x| json_num(x.to_f64())).collect()),
        );
    }
    write_document(path, &Value::Object(map))
}

/// Terminal-weight document: `{"M": [[…]]}`. The weight is symmetrized
/// but not required to be definite.
pub fn read_weight<T: Real>(path: &Path) -> Result<(SymMat<T>, f64)> {
    let map = parse_document(path)?;
    sym_from_value(field(&map, "M")?, "M")
}

pub fn write_weight<T: Real>(m: &SymMat<T>, path: &Path) -> Result<()> {
    write_document(path, &json!({ "M": sym_to_value(m) }))
}

// ───────────────────── plan / policy / lqr documents ─────────────────────

const PLAN_SCHEMA: &str = "covsteer-plan-v1";
const POLICY_SCHEMA: &str = "covsteer-policy-v1";
const LQR_SCHEMA: &str = "covsteer-lqr-v1";

fn expect_schema(map: &Map<String, Value>, want: &str) -> Result<()> {
    let got = field(map, "schema")?
        .as_str()
        .ok_or_else(|| schema_err("schema", "expected a string"))?;
    if got != want {
        return Err(schema_err("schema", format!("expected \"{want}\", got \"{got}\"")));
    }
    Ok(())
}

fn string_field(map: &Map<String, Value>, key: &str) -> Result<String> {
    Ok(field(map, key)?
        .as_str()
        .ok_or_else(|| schema_err(key, "expected a string"))?
        .to_string())
}

fn number_field<T: Real>(map: &Map<String, Value>, key: &str) -> Result<T> {
    let x = field(map, key)?
        .as_f64()
        .ok_or_else(|| schema_err(key, "expected a finite number"))?;
    if !x.is_finite() {
        return Err(schema_err(key, "number is not finite"));
    }
    Ok(T::from_f64(x))
}

fn bool_field(map: &Map<String, Value>, key: &str) -> Result<bool> {
    field(map, key)?.as_bool().ok_or_else(|| schema_err(key, "expected a boolean"))
}

fn count_field(map: &Map<String, Value>, key: &str) -> Result<usize> {
    field(map, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| schema_err(key, "expected a non-negative integer"))
}

fn grid_to_value<T: Real>(grid: &TimeGrid<T>) -> Value {
    json!({
        "t_start": json_num(grid.t_start().to_f64()),
        "t_end": json_num(grid.t_end().to_f64()),
        "steps": grid.steps(),
    })
}

fn grid_from_value<T: Real>(value: &Value, path: &str) -> Result<TimeGrid<T>> {
    let map = match value {
        Value::Object(map) => map,
        _ => return Err(schema_err(path, "expected an object")),
    };
    let t_start: T = number_field(map, "t_start")?;
    let t_end: T = number_field(map, "t_end")?;
    let steps = count_field(map, "steps")?;
    TimeGrid::new(t_start, t_end, steps)
}

fn mat_list_to_value<T: Real>(mats: &[Mat<T>]) -> Value {
    Value::Array(mats.iter().map(mat_to_value).collect())
}

fn sym_list_to_value<T: Real>(mats: &[SymMat<T>]) -> Value {
    Value::Array(mats.iter().map(sym_to_value).collect())
}

fn vec_list_to_value<T: Real>(vecs: &[Vec<T>]) -> Value {
    Value::Array(
        vecs.iter()
            .map(|v| Value::Array(v.iter().map(|&x| json_num(x.to_f64())).collect()))
            .collect(),
    )
}

fn mat_list_from_value<T: Real>(value: &Value, path: &str) -> Result<Vec<Mat<T>>> {
    let items =
        value.as_array().ok_or_else(|| schema_err(path, "expected an array of matrices"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, v)| mat_from_value(v, &format!("{path}[{i}]")))
        .collect()
}

fn sym_list_from_value<T: Real>(value: &Value, path: &str) -> Result<Vec<SymMat<T>>> {
    let items =
        value.as_array().ok_or_else(|| schema_err(path, "expected an array of matrices"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, v)| Ok(sym_from_value(v, &format!("{path}[{i}]"))?.0))
        .collect()
}

fn vec_list_from_value<T: Real>(value: &Value, path: &str) -> Result<Vec<Vec<T>>> {
    let items =
        value.as_array().ok_or_else(|| schema_err(path, "expected an array of vectors"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, v)| vec_from_value(v, &format!("{path}[{i}]")))
        .collect()
}

/// A steering plan loaded from disk, with the digest of the model it was
/// computed for.
#[derive(Clone, Debug)]
pub struct PlanDoc<T: Real> {
    pub plan: SteeringPlan<T>,
    pub model_digest: String,
}

/// Writes a steering plan with the digest of its model embedded, so
/// loads against a different model can be detected.
pub fn write_plan<T: Real>(plan: &SteeringPlan<T>, model_digest: &str, path: &Path) -> Result<()> {
    let value = json!({
        "schema": PLAN_SCHEMA,
        "model_sha256": model_digest,
        "grid": grid_to_value(plan.grid()),
        "cost": json_num(plan.cost().to_f64()),
        "gains": mat_list_to_value(plan.gains()),
        "feedforward": vec_list_to_value(plan.feedforward()),
        "cov_pred": sym_list_to_value(plan.cov_pred()),
        "mean_pred": vec_list_to_value(plan.mean_pred()),
    });
    write_document(path, &value)
}

pub fn read_plan<T: Real>(path: &Path) -> Result<PlanDoc<T>> {
    let map = parse_document(path)?;
    expect_schema(&map, PLAN_SCHEMA)?;
    let model_digest = string_field(&map, "model_sha256")?;
    let grid: TimeGrid<T> = grid_from_value(field(&map, "grid")?, "grid")?;
    let cost: T = number_field(&map, "cost")?;
    let gains = mat_list_from_value(field(&map, "gains")?, "gains")?;
    let feedforward = vec_list_from_value(field(&map, "feedforward")?, "feedforward")?;
    let cov_pred = sym_list_from_value(field(&map, "cov_pred")?, "cov_pred")?;
    let mean_pred = vec_list_from_value(field(&map, "mean_pred")?, "mean_pred")?;

    let nodes = grid.steps() + 1;
    if gains.len() != nodes {
        return Err(schema_err("gains", format!("expected {nodes} entries, got {}", gains.len())));
    }
    for (name, len) in [
        ("feedforward", feedforward.len()),
        ("cov_pred", cov_pred.len()),
        ("mean_pred", mean_pred.len()),
    ] {
        if len != nodes {
            return Err(schema_err(name, format!("expected {nodes} entries, got {len}")));
        }
    }
    let m = gains[0].rows();
    let n = gains[0].cols();
    if gains.iter().any(|k| k.rows() != m || k.cols() != n) {
        return Err(schema_err("gains", "entries do not share one shape"));
    }
    if feedforward.iter().any(|v| v.len() != m) {
        return Err(schema_err("feedforward", format!("entries must have length {m}")));
    }
    if cov_pred.iter().any(|s| s.order() != n) {
        return Err(schema_err("cov_pred", format!("entries must be {n}x{n}")));
    }
    if mean_pred.iter().any(|v| v.len() != n) {
        return Err(schema_err("mean_pred", format!("entries must have length {n}")));
    }
    let plan = SteeringPlan { grid, gains, feedforward, cov_pred, mean_pred, cost };
    Ok(PlanDoc { plan, model_digest })
}

/// A stationary policy loaded from disk, with its model digest.
#[derive(Clone, Debug)]
pub struct PolicyDoc<T: Real> {
    pub policy: StationaryPolicy<T>,
    pub model_digest: String,
}

pub fn write_policy<T: Real>(
    policy: &StationaryPolicy<T>,
    model_digest: &str,
    path: &Path,
) -> Result<()> {
    let value = json!({
        "schema": POLICY_SCHEMA,
        "model_sha256": model_digest,
        "K": mat_to_value(policy.k()),
        "X": mat_to_value(policy.x()),
        "Sigma": sym_to_value(policy.sigma()),
        "power": json_num(policy.power().to_f64()),
        "hurwitz": policy.hurwitz(),
        "epsilon": json_num(policy.epsilon().to_f64()),
    });
    write_document(path, &value)
}

pub fn read_policy<T: Real>(path: &Path) -> Result<PolicyDoc<T>> {
    let map = parse_document(path)?;
    expect_schema(&map, POLICY_SCHEMA)?;
    let model_digest = string_field(&map, "model_sha256")?;
    let k: Mat<T> = mat_from_value(field(&map, "K")?, "K")?;
    let x: Mat<T> = mat_from_value(field(&map, "X")?, "X")?;
    let (sigma, _) = sym_from_value::<T>(field(&map, "Sigma")?, "Sigma")?;
    let power: T = number_field(&map, "power")?;
    let hurwitz = bool_field(&map, "hurwitz")?;
    let epsilon: T = number_field(&map, "epsilon")?;
    let (m, n) = (k.rows(), k.cols());
    if x.rows() != n || x.cols() != m {
        return Err(schema_err(
            "X",
            format!("expected {n}x{m} to match K {m}x{n}, got {}x{}", x.rows(), x.cols()),
        ));
    }
    if sigma.order() != n {
        return Err(schema_err("Sigma", format!("expected order {n}, got {}", sigma.order())));
    }
    let policy = StationaryPolicy { k, x, sigma, power, hurwitz, epsilon };
    Ok(PolicyDoc { policy, model_digest })
}

/// A terminal-cost solution loaded from disk: the published trajectories
/// and cost (not the solver's internal half-grid samples).
#[derive(Clone, Debug)]
pub struct LqrDoc<T: Real> {
    pub grid: TimeGrid<T>,
    pub pi: Vec<SymMat<T>>,
    pub gains: Vec<Mat<T>>,
    pub cov: Vec<SymMat<T>>,
    pub cost: T,
    pub model_digest: String,
}

pub fn write_lqr<T: Real>(sol: &LqrSolution<T>, model_digest: &str, path: &Path) -> Result<()> {
    let value = json!({
        "schema": LQR_SCHEMA,
        "model_sha256": model_digest,
        "grid": grid_to_value(sol.grid()),
        "cost": json_num(sol.cost().to_f64()),
        "Pi": sym_list_to_value(sol.pi()),
        "gains": mat_list_to_value(sol.gains()),
        "cov": sym_list_to_value(sol.cov()),
    });
    write_document(path, &value)
}

pub fn read_lqr<T: Real>(path: &Path) -> Result<LqrDoc<T>> {
    let map = parse_document(path)?;
    expect_schema(&map, LQR_SCHEMA)?;
    let model_digest = string_field(&map, "model_sha256")?;
    let grid: TimeGrid<T> = grid_from_value(field(&map, "grid")?, "grid")?;
    let cost: T = number_field(&map, "cost")?;
    let pi = sym_list_from_value(field(&map, "Pi")?, "Pi")?;
    let gains = mat_list_from_value(field(&map, "gains")?, "gains")?;
    let cov = sym_list_from_value(field(&map, "cov")?, "cov")?;
    let nodes = grid.steps() + 1;
    for (name, len) in [("Pi", pi.len()), ("gains", gains.len()), ("cov", cov.len())] {
        if len != nodes {
            return Err(schema_err(name, format!("expected {nodes} entries, got {len}")));
        }
    }
    Ok(LqrDoc { grid, pi, gains, cov, cost, model_digest })
}

// ───────────────────── run manifest ─────────────────────

/// Input file reference inside a [`RunManifest`].
#[derive(Clone, Debug)]
pub struct ManifestInput {
    pub path: String,
    /// `sha256:<hex>` of the file bytes as read.
    pub digest: String,
}

/// Record of one tool invocation, written beside every output so results
/// can be traced back to exact inputs.
#[derive(Clone, Debug)]
pub struct RunManifest {
    /// Full command line as invoked.
    pub command: String,
    /// Tool version string.
    pub version: String,
    /// Input files with content digests.
    pub inputs: Vec<ManifestInput>,
    /// Paths of the outputs this run produced.
    pub outputs: Vec<String>,
    /// RNG seed, for commands that draw randomness.
    pub seed: Option<u64>,
    /// Wall-clock duration of the run in seconds.
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn to_value(&self) -> Value {
        json!({
            "command": self.command,
            "version": self.version,
            "inputs": self.inputs.iter().map(|i| json!({
                "path": i.path,
                "sha256": i.digest,
            })).collect::<Vec<_>>(),
            "outputs": self.outputs,
            "seed": self.seed,
            "wall_clock_seconds": json_num(self.wall_clock_seconds),
        })
    }

    /// Writes the manifest as `<output>.manifest.json` next to the named
    /// output file and returns the manifest path.
    pub fn write_beside(&self, output: &Path) -> Result<std::path::PathBuf> {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let manifest_path = output.with_file_name(name);
        write_document(&manifest_path, &self.to_value())?;
        Ok(manifest_path)
    }
}
