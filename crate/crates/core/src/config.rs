//! Flat `key = value` run configuration with bracketed sections.
//!
//! ```text
//! seed = 7                      # top level: seed only
//!
//! [potential]                   # optional; defaults to the three-wave
//! a = [1, 1, 1]                 # potential with unit amplitudes
//! phi = [0, 0, 0]
//! # or one line per harmonic:  term = [[1, -1], 0.5, 0.0]
//!
//! [simulate]                    # exactly one command section
//! eps = 0.1
//! y0 = [1.0, 0.5]
//! x0 = [0.0, 0.0]
//! steps = 1000
//! ```
//!
//! Command sections are `simulate`, `classify`, `pendulum`, `survey`,
//! `kamcheck` and `render`; `[classifier]` holds classifier thresholds.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::classifier::ClassifierConfig;
use crate::kamcheck::{KamConstants, DEFAULT_M};
use crate::pendulum::SEPARATRIX_BAND;
use crate::survey::{Region, SurveyConfig};
use crate::trig::{canonical, Harmonic, TrigSeries};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    Array(Vec<Value>),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "integer",
            Value::Float(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Str(_) => "string",
            Value::Array(_) => "array",
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Float(f) => Some(f),
            _ => None,
        }
    }

    fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int(i) => Some(i),
            _ => None,
        }
    }

    fn as_f64_vec(&self) -> Option<Vec<f64>> {
        match self {
            Value::Array(items) => items.iter().map(Value::as_f64).collect(),
            _ => None,
        }
    }

    fn as_i64_vec(&self) -> Option<Vec<i64>> {
        match self {
            Value::Array(items) => items.iter().map(Value::as_i64).collect(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: Value,
    pub line: usize,
}

struct ValueParser<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
}

impl<'a> ValueParser<'a> {
    fn new(text: &'a str) -> Self {
        Self { chars: text.char_indices().peekable(), text }
    }

    fn skip_ws(&mut self) {
        while self.chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn value(&mut self) -> Result<Value, String> {
        self.skip_ws();
        match self.chars.peek().copied() {
            None => Err("missing value".into()),
            Some((_, '[')) => {
                self.chars.next();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    if let Some((_, ']')) = self.chars.peek() {
                        self.chars.next();
                        return Ok(Value::Array(items));
                    }
                    items.push(self.value()?);
                    self.skip_ws();
                    match self.chars.next() {
                        Some((_, ',')) => continue,
                        Some((_, ']')) => return Ok(Value::Array(items)),
                        _ => return Err("expected ',' or ']' in array".into()),
                    }
                }
            }
            Some((start, '"')) => {
                self.chars.next();
                for (i, c) in self.chars.by_ref() {
                    if c == '"' {
                        return Ok(Value::Str(self.text[start + 1..i].to_string()));
                    }
                }
                Err("unterminated string".into())
            }
            Some((start, _)) => {
                let mut end = self.text.len();
                while let Some(&(i, c)) = self.chars.peek() {
                    if c == ',' || c == ']' || c.is_whitespace() {
                        end = i;
                        break;
                    }
                    self.chars.next();
                }
                scalar(&self.text[start..end])
            }
        }
    }

    fn finish(&mut self) -> Result<(), String> {
        self.skip_ws();
        match self.chars.peek() {
            None => Ok(()),
            Some(_) => Err("unexpected trailing characters".into()),
        }
    }
}

fn scalar(word: &str) -> Result<Value, String> {
    match word {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        "pi" => return Ok(Value::Float(std::f64::consts::PI)),
        "tau" | "2pi" => return Ok(Value::Float(TAU)),
        _ => {}
    }
    if let Ok(i) = word.parse::<i64>() {
        return Ok(Value::Int(i));
    }
    if let Ok(f) = word.parse::<f64>() {
        return Ok(Value::Float(f));
    }
    if word.chars().all(|c| c.is_ascii_alphanumeric() || "_-./".contains(c)) && !word.is_empty() {
        return Ok(Value::Str(word.to_string()));
    }
    Err(format!("cannot parse value '{word}'"))
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Splits a document into entries; syntax errors are collected, not fatal.
pub fn parse_document(text: &str) -> Result<Vec<Entry>, Vec<ConfigError>> {
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if !name.trim().is_empty() && !name.contains('[') => section = name.trim().to_string(),
                _ => errors.push(ConfigError { line, message: format!("malformed section header '{body}'") }),
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            errors.push(ConfigError { line, message: "expected 'key = value'".into() });
            continue;
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            errors.push(ConfigError { line, message: format!("invalid key '{key}'") });
            continue;
        }
        let mut p = ValueParser::new(value);
        match p.value().and_then(|v| p.finish().map(|_| v)) {
            Ok(v) => entries.push(Entry { section: section.clone(), key: key.to_string(), value: v, line }),
            Err(m) => errors.push(ConfigError { line, message: format!("{key}: {m}") }),
        }
    }
    if errors.is_empty() {
        Ok(entries)
    } else {
        Err(errors)
    }
}

/// Typed accessors over one section that record every error and flag
/// unread keys as unknown.
struct Section<'a> {
    name: String,
    entries: Vec<&'a Entry>,
    used: std::cell::RefCell<Vec<bool>>,
    header_line: usize,
}

impl<'a> Section<'a> {
    fn new(name: &str, all: &'a [Entry]) -> Self {
        let entries: Vec<&Entry> = all.iter().filter(|e| e.section == name).collect();
        let header_line = entries.first().map_or(0, |e| e.line);
        Self { name: name.to_string(), used: std::cell::RefCell::new(vec![false; entries.len()]), entries, header_line }
    }

    fn all(&self, key: &str) -> Vec<&'a Entry> {
        let mut used = self.used.borrow_mut();
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.key == key)
            .map(|(i, e)| {
                used[i] = true;
                *e
            })
            .collect()
    }

    fn one(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<&'a Entry> {
        let found = self.all(key);
        if let [first, rest @ ..] = found.as_slice() {
            for dup in rest {
                errors.push(ConfigError {
                    line: dup.line,
                    message: format!("key '{key}' repeats line {} in [{}]", first.line, self.name),
                });
            }
            Some(first)
        } else {
            None
        }
    }

    fn get<T>(
        &self,
        key: &str,
        expected: &str,
        convert: impl Fn(&Value) -> Option<T>,
        errors: &mut Vec<ConfigError>,
    ) -> Option<T> {
        let e = self.one(key, errors)?;
        let v = convert(&e.value);
        if v.is_none() {
            errors.push(ConfigError {
                line: e.line,
                message: format!("type mismatch for '{key}': expected {expected}, found {}", e.value.type_name()),
            });
        }
        v
    }

    fn require<T>(
        &self,
        key: &str,
        expected: &str,
        convert: impl Fn(&Value) -> Option<T>,
        errors: &mut Vec<ConfigError>,
    ) -> Option<T> {
        if self.all(key).is_empty() {
            errors.push(ConfigError {
                line: self.header_line,
                message: format!("missing required key '{key}' in [{}]", self.name),
            });
            return None;
        }
        self.get(key, expected, convert, errors)
    }

    fn f64(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<f64> {
        self.get(key, "number", Value::as_f64, errors)
    }

    fn u64(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<u64> {
        self.get(key, "non-negative integer", |v| v.as_i64().and_then(|i| u64::try_from(i).ok()), errors)
    }

    fn bool(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<bool> {
        self.get(key, "boolean", |v| if let Value::Bool(b) = v { Some(*b) } else { None }, errors)
    }

    fn string(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<String> {
        self.get(key, "string", |v| if let Value::Str(s) = v { Some(s.clone()) } else { None }, errors)
    }

    fn path(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<PathBuf> {
        self.string(key, errors).map(PathBuf::from)
    }

    fn f64s(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<Vec<f64>> {
        self.get(key, "array of numbers", Value::as_f64_vec, errors)
    }

    fn i64s(&self, key: &str, errors: &mut Vec<ConfigError>) -> Option<Vec<i64>> {
        self.get(key, "array of integers", Value::as_i64_vec, errors)
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.iter().find(|e| e.key == key).map_or(self.header_line, |e| e.line)
    }

    fn finish(&self, errors: &mut Vec<ConfigError>) {
        for (e, used) in self.entries.iter().zip(self.used.borrow().iter()) {
            if !used {
                errors.push(ConfigError { line: e.line, message: format!("unknown key '{}' in [{}]", e.key, self.name) });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSpec {
    pub eps: f64,
    pub y0: Vec<f64>,
    pub x0: Vec<f64>,
    pub steps: u64,
    pub stride: u64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumSpec {
    pub k: Vec<i64>,
    pub k0: i64,
    /// Base point on the resonance surface.
    pub y_on_sigma: Vec<f64>,
    pub eps: f64,
    pub energies: usize,
    pub band: f64,
    pub twist_constant: f64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurveyMode {
    Fractions,
    Conditional,
    DoubleResonance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveySpec {
    pub config: SurveyConfig,
    pub mode: SurveyMode,
    pub band: f64,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub journal: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KamSpec {
    pub constants: KamConstants,
    /// When unset, `c_s` follows `n` as `16n + 25`.
    pub c_s_explicit: bool,
    pub m_max: usize,
    pub search: bool,
    pub jacobian_samples: usize,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderKind {
    Action,
    Portrait,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub width: u32,
    pub height: u32,
    pub radius: f64,
    /// Zero-based action indices for the projection.
    pub indices: (usize, usize),
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
    pub overlay: bool,
    pub overlay_samples: usize,
    pub title: Option<String>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            width: 640,
            height: 640,
            radius: 1.0,
            indices: (0, 1),
            x_range: None,
            y_range: None,
            overlay: false,
            overlay_samples: 48,
            title: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub kind: RenderKind,
    pub eps: f64,
    pub orbits: Vec<(Vec<f64>, Vec<f64>)>,
    pub steps: u64,
    pub stride: u64,
    /// Resonance for portraits.
    pub k: Vec<i64>,
    pub k0: i64,
    pub levels: Vec<f64>,
    pub options: RenderOptions,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Simulate(SimulateSpec),
    Classify { orbit: SimulateSpec, classifier: ClassifierConfig },
    Pendulum(PendulumSpec),
    Survey(SurveySpec),
    Kamcheck(KamSpec),
    Render(RenderSpec),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Classify { .. } => "classify",
            Command::Pendulum(_) => "pendulum",
            Command::Survey(_) => "survey",
            Command::Kamcheck(_) => "kamcheck",
            Command::Render(_) => "render",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub potential: TrigSeries,
    pub command: Command,
}

pub const COMMANDS: [&str; 6] = ["simulate", "classify", "pendulum", "survey", "kamcheck", "render"];

fn potential(sec: &Section, errors: &mut Vec<ConfigError>) -> Option<TrigSeries> {
    let terms = sec.all("term");
    let has_wave = !sec.all("a").is_empty() || !sec.all("phi").is_empty();
    if terms.is_empty() {
        let a = sec.f64s("a", errors).unwrap_or_else(|| vec![1.0; 3]);
        let phi = sec.f64s("phi", errors).unwrap_or_else(|| vec![0.0; 3]);
        if a.len() != 3 || phi.len() != 3 {
            errors.push(ConfigError { line: sec.line_of("a"), message: "a and phi need three entries".into() });
            return None;
        }
        return Some(TrigSeries::three_wave([a[0], a[1], a[2]], [phi[0], phi[1], phi[2]]));
    }
    if has_wave {
        errors.push(ConfigError { line: sec.line_of("a"), message: "use either a/phi or term lines, not both".into() });
        return None;
    }
    let mut harmonics = Vec::new();
    let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut dim = None;
    let mut ok = true;
    for e in terms {
        let parsed = match &e.value {
            Value::Array(items) if items.len() == 3 => {
                match (items[0].as_i64_vec(), items[1].as_f64(), items[2].as_f64()) {
                    (Some(k), Some(amp), Some(ph)) => Some((k, amp, ph)),
                    _ => None,
                }
            }
            _ => None,
        };
        let Some((k, amp, ph)) = parsed else {
            errors.push(ConfigError { line: e.line, message: "term must be [[k1, …, kN], amplitude, phase]".into() });
            ok = false;
            continue;
        };
        if k.is_empty() || k.iter().all(|&c| c == 0) {
            errors.push(ConfigError { line: e.line, message: "term wave vector must be nonzero".into() });
            ok = false;
            continue;
        }
        if *dim.get_or_insert(k.len()) != k.len() {
            errors.push(ConfigError { line: e.line, message: "term wave vectors differ in dimension".into() });
            ok = false;
            continue;
        }
        if !amp.is_finite() || !ph.is_finite() {
            errors.push(ConfigError { line: e.line, message: "term amplitude and phase must be finite".into() });
            ok = false;
            continue;
        }
        let key = canonical(&k);
        if let Some(first) = seen.get(&key) {
            errors.push(ConfigError {
                line: e.line,
                message: format!("harmonic {key:?} on line {} duplicates line {first}", e.line),
            });
            ok = false;
            continue;
        }
        seen.insert(key, e.line);
        harmonics.push(Harmonic::new(k, amp, ph));
    }
    if !ok {
        return None;
    }
    TrigSeries::new(dim.unwrap_or(2), harmonics)
        .map_err(|e| errors.push(ConfigError { line: sec.header_line, message: e.to_string() }))
        .ok()
}

fn classifier(sec: &Section, errors: &mut Vec<ConfigError>) -> ClassifierConfig {
    let d = ClassifierConfig::default();
    let c = ClassifierConfig {
        drift_threshold: sec.f64("drift_threshold", errors).unwrap_or(d.drift_threshold),
        resonance_scale: sec.f64("resonance_scale", errors).unwrap_or(d.resonance_scale),
        n_max: sec.get("n_max", "integer", Value::as_i64, errors).unwrap_or(d.n_max),
        oscillation_margin: sec.f64("oscillation_margin", errors).unwrap_or(d.oscillation_margin),
        min_length: sec.u64("min_length", errors).map_or(d.min_length, |v| v as usize),
        spots_scale: sec.f64("spots_scale", errors).unwrap_or(d.spots_scale),
    };
    if !(c.drift_threshold > 0.0 && c.resonance_scale > 0.0 && c.spots_scale > 0.0) || c.n_max < 1 {
        errors.push(ConfigError { line: sec.header_line, message: "classifier thresholds must be positive".into() });
    }
    c
}

fn check_eps(sec: &Section, eps: f64, errors: &mut Vec<ConfigError>) {
    if !(eps >= 0.0) || !eps.is_finite() {
        errors.push(ConfigError { line: sec.line_of("eps"), message: "eps must be ≥ 0".into() });
    }
}

fn check_writable(sec: &Section, key: &str, path: &Option<PathBuf>, errors: &mut Vec<ConfigError>) {
    if let Some(p) = path {
        if !parent_is_dir(p) {
            errors.push(ConfigError { line: sec.line_of(key), message: format!("directory of {} does not exist", p.display()) });
        }
    }
}

pub fn parent_is_dir(p: &Path) -> bool {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.is_dir(),
        _ => true,
    }
}

fn state(sec: &Section, dim: usize, errors: &mut Vec<ConfigError>) -> (Vec<f64>, Vec<f64>) {
    let y0 = sec.require("y0", "array of numbers", Value::as_f64_vec, errors).unwrap_or_default();
    let x0 = sec.require("x0", "array of numbers", Value::as_f64_vec, errors).unwrap_or_default();
    for (key, v) in [("y0", &y0), ("x0", &x0)] {
        if !v.is_empty() && v.len() != dim {
            errors.push(ConfigError {
                line: sec.line_of(key),
                message: format!("{key} has {} entries, the potential has dimension {dim}", v.len()),
            });
        }
    }
    (y0, x0)
}

fn orbit_spec(sec: &Section, dim: usize, steps: u64, stride: u64, errors: &mut Vec<ConfigError>) -> SimulateSpec {
    let eps = sec.require("eps", "number", Value::as_f64, errors).unwrap_or(0.0);
    check_eps(sec, eps, errors);
    let (y0, x0) = state(sec, dim, errors);
    let spec = SimulateSpec {
        eps,
        y0,
        x0,
        steps: sec.u64("steps", errors).unwrap_or(steps),
        stride: sec.u64("stride", errors).unwrap_or(stride),
        out: sec.path("out", errors),
    };
    if spec.stride == 0 {
        errors.push(ConfigError { line: sec.line_of("stride"), message: "stride must be ≥ 1".into() });
    }
    check_writable(sec, "out", &spec.out, errors);
    spec
}

fn range(sec: &Section, key: &str, errors: &mut Vec<ConfigError>) -> Option<(f64, f64)> {
    let v = sec.f64s(key, errors)?;
    if v.len() != 2 || !(v[0] < v[1]) {
        errors.push(ConfigError { line: sec.line_of(key), message: format!("{key} must be [lo, hi] with lo < hi") });
        return None;
    }
    Some((v[0], v[1]))
}

fn survey(sec: &Section, pot: &TrigSeries, seed: u64, cls: ClassifierConfig, errors: &mut Vec<ConfigError>) -> SurveySpec {
    let dim = pot.dim();
    let eps = sec.require("eps", "array of numbers", Value::as_f64_vec, errors).unwrap_or_default();
    for (i, e) in eps.iter().enumerate() {
        if !(*e >= 0.0) {
            errors.push(ConfigError { line: sec.line_of("eps"), message: "eps must be ≥ 0".into() });
        } else if eps[..i].contains(e) {
            errors.push(ConfigError { line: sec.line_of("eps"), message: format!("eps value {e} is listed twice") });
        }
    }
    let samples = sec.require("samples", "positive integer", |v| v.as_i64().filter(|&i| i >= 1), errors).unwrap_or(1);
    let region_name = sec.string("region", errors).unwrap_or_else(|| "full_box".into());
    let region = match region_name.as_str() {
        "full_box" => {
            let lo = sec.f64s("box_lo", errors).unwrap_or_else(|| vec![0.0; dim]);
            let hi = sec.f64s("box_hi", errors).unwrap_or_else(|| vec![TAU; dim]);
            Region::FullBox { lo, hi }
        }
        "strip" => Region::ResonanceStrip {
            k: sec.require("k", "array of integers", Value::as_i64_vec, errors).unwrap_or_else(|| vec![1; dim]),
            k0: sec.get("k0", "integer", Value::as_i64, errors).unwrap_or(0),
            scale: sec.f64("scale", errors).unwrap_or(1.0),
            along: range(sec, "along", errors).unwrap_or((0.0, TAU)),
        },
        "double" => Region::DoubleResonanceBox {
            center: sec.require("center", "array of numbers", Value::as_f64_vec, errors).unwrap_or_else(|| vec![0.0; dim]),
            scale: sec.f64("scale", errors).unwrap_or(1.0),
        },
        other => {
            errors.push(ConfigError {
                line: sec.line_of("region"),
                message: format!("unknown region '{other}' (full_box, strip, double)"),
            });
            Region::full_box(dim)
        }
    };
    let default_mode = match region {
        Region::FullBox { .. } => SurveyMode::Fractions,
        Region::ResonanceStrip { .. } => SurveyMode::Conditional,
        Region::DoubleResonanceBox { .. } => SurveyMode::DoubleResonance,
    };
    let mode = match sec.string("mode", errors).as_deref() {
        None => default_mode,
        Some("fractions") => SurveyMode::Fractions,
        Some("conditional") => SurveyMode::Conditional,
        Some("double") => SurveyMode::DoubleResonance,
        Some(other) => {
            errors.push(ConfigError { line: sec.line_of("mode"), message: format!("unknown survey mode '{other}'") });
            default_mode
        }
    };
    let mut config = SurveyConfig::new(pot.clone(), eps, samples as usize, seed);
    config.classifier = cls;
    config.region = region;
    config.steps = sec.u64("steps", errors).unwrap_or(config.steps);
    config.stride = sec.u64("stride", errors).unwrap_or(config.stride);
    config.workers = sec.u64("workers", errors).map_or(1, |w| w.max(1) as usize);
    let spec = SurveySpec {
        mode,
        band: sec.f64("band", errors).unwrap_or(SEPARATRIX_BAND),
        csv: sec.path("csv", errors),
        json: sec.path("json", errors),
        journal: sec.path("journal", errors),
        config,
    };
    check_writable(sec, "csv", &spec.csv, errors);
    check_writable(sec, "json", &spec.json, errors);
    check_writable(sec, "journal", &spec.journal, errors);
    if !spec.config.eps.is_empty() {
        if let Err(e) = spec.config.validate() {
            errors.push(ConfigError { line: sec.header_line, message: e.to_string() });
        }
    }
    spec
}

pub fn default_c_s(n: usize) -> f64 {
    (16 * n + 25) as f64
}

fn kamcheck(sec: &Section, errors: &mut Vec<ConfigError>) -> KamSpec {
    let mut c = KamConstants::default();
    if let Some(n) = sec.u64("n", errors) {
        c.n = n as usize;
    }
    let fields: [(&str, &mut f64); 15] = [
        ("a0", &mut c.a0),
        ("b0", &mut c.b0),
        ("s0", &mut c.s0),
        ("s0_bar", &mut c.s0_bar),
        ("c_h", &mut c.c_h),
        ("c_h_prime", &mut c.c_h_prime),
        ("c_h_second", &mut c.c_h_second),
        ("c_big_lambda", &mut c.c_big_lambda),
        ("c_big_lambda_lower", &mut c.c_big_lambda_lower),
        ("c_big_lambda_upper", &mut c.c_big_lambda_upper),
        ("c_frak", &mut c.c_frak),
        ("c_psi", &mut c.c_psi),
        ("c_n", &mut c.c_n),
        ("c_lambda", &mut c.c_lambda),
        ("eps", &mut c.eps),
    ];
    for (key, slot) in fields {
        if let Some(v) = sec.f64(key, errors) {
            *slot = v;
        }
    }
    c.c_cutoff = sec.f64("c_cutoff", errors);
    let c_s = sec.f64("c_s", errors);
    c.c_s = c_s.unwrap_or(default_c_s(c.n));
    if let Err(e) = c.validate() {
        errors.push(ConfigError { line: sec.header_line, message: e.to_string() });
    }
    let spec = KamSpec {
        constants: c,
        c_s_explicit: c_s.is_some(),
        m_max: sec.u64("m", errors).map_or(DEFAULT_M, |m| m as usize),
        search: sec.bool("search", errors).unwrap_or(false),
        jacobian_samples: sec.u64("jacobian_samples", errors).map_or(0, |m| m as usize),
        out: sec.path("out", errors),
    };
    check_writable(sec, "out", &spec.out, errors);
    spec
}

fn render(sec: &Section, pot: &TrigSeries, errors: &mut Vec<ConfigError>) -> RenderSpec {
    let dim = pot.dim();
    let kind = match sec.string("kind", errors).as_deref() {
        None | Some("action") => RenderKind::Action,
        Some("portrait") => RenderKind::Portrait,
        Some(other) => {
            errors.push(ConfigError { line: sec.line_of("kind"), message: format!("unknown render kind '{other}'") });
            RenderKind::Action
        }
    };
    let eps = sec.require("eps", "number", Value::as_f64, errors).unwrap_or(0.0);
    check_eps(sec, eps, errors);
    let mut orbits = Vec::new();
    for e in sec.all("orbit") {
        let pair = match &e.value {
            Value::Array(items) if items.len() == 2 => items[0].as_f64_vec().zip(items[1].as_f64_vec()),
            _ => None,
        };
        match pair {
            Some((y, x)) if y.len() == dim && x.len() == dim => orbits.push((y, x)),
            _ => errors.push(ConfigError {
                line: e.line,
                message: format!("orbit must be [[y1, …], [x1, …]] with {dim} entries each"),
            }),
        }
    }
    if orbits.is_empty() {
        errors.push(ConfigError { line: sec.header_line, message: "missing required key 'orbit' in [render]".into() });
    }
    let d = RenderOptions::default();
    let indices = match sec.i64s("indices", errors) {
        None => d.indices,
        Some(v) if v.len() == 2 && v.iter().all(|&i| i >= 1 && i as usize <= dim) && v[0] != v[1] => {
            (v[0] as usize - 1, v[1] as usize - 1)
        }
        Some(_) => {
            errors.push(ConfigError { line: sec.line_of("indices"), message: "indices must be two distinct 1-based actions".into() });
            d.indices
        }
    };
    let options = RenderOptions {
        width: sec.u64("width", errors).map_or(d.width, |v| v as u32),
        height: sec.u64("height", errors).map_or(d.height, |v| v as u32),
        radius: sec.f64("radius", errors).unwrap_or(d.radius),
        indices,
        x_range: range(sec, "x_range", errors),
        y_range: range(sec, "y_range", errors),
        overlay: sec.bool("overlay", errors).unwrap_or(false),
        overlay_samples: sec.u64("overlay_samples", errors).map_or(d.overlay_samples, |v| v as usize),
        title: sec.string("title", errors),
    };
    if options.width < 16 || options.height < 16 || !(options.radius > 0.0) {
        errors.push(ConfigError { line: sec.header_line, message: "canvas must be ≥ 16 px and radius > 0".into() });
    }
    let k = match kind {
        RenderKind::Portrait => sec.require("k", "array of integers", Value::as_i64_vec, errors).unwrap_or_default(),
        RenderKind::Action => sec.i64s("k", errors).unwrap_or_default(),
    };
    if kind == RenderKind::Portrait && k.len() != dim {
        errors.push(ConfigError { line: sec.line_of("k"), message: format!("k must have {dim} entries") });
    }
    let spec = RenderSpec {
        kind,
        eps,
        orbits,
        steps: sec.u64("steps", errors).unwrap_or(20_000),
        stride: sec.u64("stride", errors).unwrap_or(1).max(1),
        k,
        k0: sec.get("k0", "integer", Value::as_i64, errors).unwrap_or(0),
        levels: sec.f64s("levels", errors).unwrap_or_default(),
        options,
        out: sec.path("out", errors),
    };
    check_writable(sec, "out", &spec.out, errors);
    spec
}

fn pendulum(sec: &Section, dim: usize, errors: &mut Vec<ConfigError>) -> PendulumSpec {
    let k = sec.require("k", "array of integers", Value::as_i64_vec, errors).unwrap_or_else(|| vec![1; dim]);
    let k0 = sec.get("k0", "integer", Value::as_i64, errors).unwrap_or(0);
    if k.len() != dim || k.iter().all(|&c| c == 0) {
        errors.push(ConfigError { line: sec.line_of("k"), message: format!("k must be a nonzero vector with {dim} entries") });
    }
    let kk: i64 = k.iter().map(|c| c * c).sum();
    let base: Vec<f64> =
        k.iter().map(|&c| if kk > 0 { TAU * k0 as f64 * c as f64 / kk as f64 } else { 0.0 }).collect();
    let eps = sec.f64("eps", errors).unwrap_or(0.0);
    check_eps(sec, eps, errors);
    let spec = PendulumSpec {
        y_on_sigma: sec.f64s("y0", errors).unwrap_or(base),
        k,
        k0,
        eps,
        energies: sec.u64("energies", errors).map_or(64, |v| v as usize),
        band: sec.f64("band", errors).unwrap_or(SEPARATRIX_BAND),
        twist_constant: sec.f64("twist_constant", errors).unwrap_or(100.0),
        out: sec.path("out", errors),
    };
    check_writable(sec, "out", &spec.out, errors);
    spec
}

/// Parses and validates a complete document, reporting every error found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    let entries = parse_document(text)?;
    let mut errors = Vec::new();
    let mut sections: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        sections.entry(e.section.as_str()).or_insert(e.line);
    }
    let known = |s: &str| s.is_empty() || s == "potential" || s == "classifier" || COMMANDS.contains(&s);
    for (name, line) in &sections {
        if !known(name) {
            errors.push(ConfigError { line: *line, message: format!("unknown section [{name}]") });
        }
    }
    let commands: Vec<&str> = COMMANDS.iter().copied().filter(|c| sections.contains_key(c)).collect();
    let top = Section::new("", &entries);
    let seed = top.u64("seed", &mut errors).unwrap_or(0);
    top.finish(&mut errors);
    let pot_sec = Section::new("potential", &entries);
    let pot = potential(&pot_sec, &mut errors);
    pot_sec.finish(&mut errors);
    let cls_sec = Section::new("classifier", &entries);
    let cls = classifier(&cls_sec, &mut errors);
    cls_sec.finish(&mut errors);

    let name = match commands.as_slice() {
        [one] => *one,
        [] => {
            errors.push(ConfigError { line: 0, message: format!("no command section; expected one of {COMMANDS:?}") });
            return Err(errors);
        }
        many => {
            errors.push(ConfigError { line: sections[many[1]], message: format!("more than one command section: {many:?}") });
            return Err(errors);
        }
    };
    let Some(pot) = pot else {
        return Err(errors);
    };
    let sec = Section::new(name, &entries);
    let dim = pot.dim();
    let command = match name {
        "simulate" => Command::Simulate(orbit_spec(&sec, dim, 1000, 1, &mut errors)),
        "classify" => Command::Classify { orbit: orbit_spec(&sec, dim, 200_000, 20, &mut errors), classifier: cls },
        "pendulum" => Command::Pendulum(pendulum(&sec, dim, &mut errors)),
        "survey" => Command::Survey(survey(&sec, &pot, seed, cls, &mut errors)),
        "kamcheck" => Command::Kamcheck(kamcheck(&sec, &mut errors)),
        _ => Command::Render(render(&sec, &pot, &mut errors)),
    };
    sec.finish(&mut errors);
    if errors.is_empty() {
        Ok(RunConfig { seed, potential: pot, command })
    } else {
        errors.sort_by_key(|e| e.line);
        Err(errors)
    }
}
