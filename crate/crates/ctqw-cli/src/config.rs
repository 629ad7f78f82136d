//! Effective run configuration: defaults, overridden by config-file values,
//! overridden by command-line flags. Everything is validated here, before
//! any computation starts, and every error names the offending field.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use ctqw::evolve::Source;
use ctqw::mixing::{instantaneous_bound, CrossingMode};
use ctqw::network::{NetworkSpec, Preset};

use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn label(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv|json)")),
        }
    }
}

/// Raw option values from one source (flags or file); `None` = not given.
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    pub nodes: Option<usize>,
    pub range: Option<usize>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub t_max: Option<f64>,
    pub stride: Option<f64>,
    pub method: Option<String>,
    pub preset: Option<String>,
    pub initial_node: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<String>,
    pub mode: Option<String>,
    pub nodes_list: Option<String>,
    pub range_list: Option<String>,
    pub gamma_list: Option<String>,
    pub epsilon_list: Option<String>,
}

impl RawConfig {
    /// `self` wins over `fallback` field by field.
    fn or(self, fallback: RawConfig) -> RawConfig {
        RawConfig {
            nodes: self.nodes.or(fallback.nodes),
            range: self.range.or(fallback.range),
            gamma: self.gamma.or(fallback.gamma),
            epsilon: self.epsilon.or(fallback.epsilon),
            t_max: self.t_max.or(fallback.t_max),
            stride: self.stride.or(fallback.stride),
            method: self.method.or(fallback.method),
            preset: self.preset.or(fallback.preset),
            initial_node: self.initial_node.or(fallback.initial_node),
            output: self.output.or(fallback.output),
            format: self.format.or(fallback.format),
            mode: self.mode.or(fallback.mode),
            nodes_list: self.nodes_list.or(fallback.nodes_list),
            range_list: self.range_list.or(fallback.range_list),
            gamma_list: self.gamma_list.or(fallback.gamma_list),
            epsilon_list: self.epsilon_list.or(fallback.epsilon_list),
        }
    }
}

/// Parameter lists for `sweep`: explicit values only, combined as a
/// cartesian product in the declared field order.
#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub nodes: Vec<usize>,
    pub range: Vec<usize>,
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.nodes.len() * self.range.len() * self.gamma.len() * self.epsilon.len()
    }

    /// Points in canonical order: nodes, then range, then gamma, then epsilon.
    pub fn points(&self) -> Vec<(usize, usize, f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &n in &self.nodes {
            for &l in &self.range {
                for &g in &self.gamma {
                    for &e in &self.epsilon {
                        out.push((n, l, g, e));
                    }
                }
            }
        }
        out
    }
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub nodes: usize,
    pub range: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub t_max: f64,
    pub stride: f64,
    pub method: Source,
    pub preset: Preset,
    pub initial_node: usize,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub mode: CrossingMode,
    /// Whether `t_max`/`stride` were given explicitly (sweep derives
    /// per-point horizons otherwise).
    pub explicit_t_max: bool,
    pub explicit_stride: bool,
    pub sweep: Option<SweepGrid>,
}

impl RunConfig {
    pub fn spec(&self) -> Result<NetworkSpec, AppError> {
        NetworkSpec::new(self.nodes, self.range, self.preset.hopping())
            .map_err(|e| AppError::Config(e.to_string()))
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, AppError> {
    Err(AppError::Config(msg.into()))
}

/// Parse the flat `key=value` config file (UTF-8, `#` comments, keys match
/// the long flag names with `-` or `_`).
pub fn parse_config_file(path: &PathBuf) -> Result<RawConfig, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return config_err(format!(
                "config {} line {}: expected key=value, got `{line}`",
                path.display(),
                lineno + 1
            ));
        };
        let key = key.trim().replace('-', "_");
        let value = value.trim().to_string();
        if seen.insert(key.clone(), value).is_some() {
            return config_err(format!(
                "config {} line {}: duplicate key `{key}`",
                path.display(),
                lineno + 1
            ));
        }
    }

    let mut raw = RawConfig::default();
    for (key, value) in seen {
        match key.as_str() {
            "nodes" => raw.nodes = Some(parse_field("nodes", &value)?),
            "range" => raw.range = Some(parse_field("range", &value)?),
            "gamma" => raw.gamma = Some(parse_field("gamma", &value)?),
            "epsilon" => raw.epsilon = Some(parse_field("epsilon", &value)?),
            "t_max" => raw.t_max = Some(parse_field("t_max", &value)?),
            "stride" => raw.stride = Some(parse_field("stride", &value)?),
            "method" => raw.method = Some(value),
            "preset" => raw.preset = Some(value),
            "initial_node" => raw.initial_node = Some(parse_field("initial_node", &value)?),
            "output" => raw.output = Some(PathBuf::from(value)),
            "format" => raw.format = Some(value),
            "mode" => raw.mode = Some(value),
            "nodes_list" => raw.nodes_list = Some(value),
            "range_list" => raw.range_list = Some(value),
            "gamma_list" => raw.gamma_list = Some(value),
            "epsilon_list" => raw.epsilon_list = Some(value),
            other => {
                return config_err(format!("config {}: unknown key `{other}`", path.display()))
            }
        }
    }
    Ok(raw)
}

fn parse_field<T: FromStr>(name: &str, value: &str) -> Result<T, AppError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| AppError::Config(format!("field {name}: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(name: &str, value: &str) -> Result<Vec<T>, AppError>
where
    T::Err: std::fmt::Display,
{
    let items: Result<Vec<T>, AppError> = value
        .split(',')
        .map(|v| parse_field(name, v.trim()))
        .collect();
    let items = items?;
    if items.is_empty() {
        return config_err(format!("field {name}: empty list"));
    }
    Ok(items)
}

/// Merge flags over file values over defaults, then validate everything.
pub fn resolve(flags: RawConfig, file: Option<RawConfig>, sweep: bool) -> Result<RunConfig, AppError> {
    let raw = match file {
        Some(file) => flags.or(file),
        None => flags,
    };

    let Some(nodes) = raw.nodes else {
        return config_err("nodes is required (pass --nodes or set nodes= in the config file)");
    };
    let range = raw.range.unwrap_or(2);
    let gamma = raw.gamma.unwrap_or(0.001);
    let epsilon = raw.epsilon.unwrap_or(0.1);
    let method: Source = match raw.method.as_deref() {
        None => Source::Exact,
        Some(m) => m.parse().map_err(|e: String| AppError::Config(format!("field method: {e}")))?,
    };
    let preset: Preset = match raw.preset.as_deref() {
        None => Preset::Gurvitz,
        Some(p) => p.parse().map_err(|e: String| AppError::Config(format!("field preset: {e}")))?,
    };
    let mode: CrossingMode = match raw.mode.as_deref() {
        None => CrossingMode::FirstCrossing,
        Some(m) => m.parse().map_err(|e: String| AppError::Config(format!("field mode: {e}")))?,
    };
    let format: Format = match raw.format.as_deref() {
        None => Format::Csv,
        Some(f) => f.parse().map_err(|e: String| AppError::Config(format!("field format: {e}")))?,
    };
    let initial_node = raw.initial_node.unwrap_or(0);

    // structural validation before any numerics
    NetworkSpec::new(nodes, range, preset.hopping())
        .map_err(|e| AppError::Config(e.to_string()))?;
    if initial_node >= nodes {
        return config_err(format!(
            "initial_node must satisfy 0 <= initial_node < N; got {initial_node} for N={nodes}"
        ));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return config_err(format!("gamma must be nonnegative and finite, got {gamma}"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return config_err(format!("epsilon must lie in (0, 1), got {epsilon}"));
    }
    if method == Source::Perturbative {
        if range < 2 {
            return config_err(format!(
                "method perturbative needs range l >= 2 (got l={range}); use method exact for the cycle"
            ));
        }
        if preset != Preset::Gurvitz {
            return config_err(
                "method perturbative is defined on the gurvitz (quarter-hopping) clock; \
                 use --preset gurvitz",
            );
        }
    }

    let explicit_t_max = raw.t_max.is_some();
    let t_max = match raw.t_max {
        Some(t) => {
            if !(t.is_finite() && t >= 0.0) {
                return config_err(format!("t_max must be nonnegative and finite, got {t}"));
            }
            t
        }
        None => default_horizon(nodes, gamma, epsilon),
    };
    let explicit_stride = raw.stride.is_some();
    let stride = match raw.stride {
        Some(s) => {
            if !(s.is_finite() && s > 0.0) {
                return config_err(format!("stride must be positive and finite, got {s}"));
            }
            s
        }
        None => default_stride(t_max),
    };

    let sweep_grid = if sweep {
        let grid = SweepGrid {
            nodes: match &raw.nodes_list {
                Some(v) => parse_list("nodes_list", v)?,
                None => vec![nodes],
            },
            range: match &raw.range_list {
                Some(v) => parse_list("range_list", v)?,
                None => vec![range],
            },
            gamma: match &raw.gamma_list {
                Some(v) => parse_list("gamma_list", v)?,
                None => vec![gamma],
            },
            epsilon: match &raw.epsilon_list {
                Some(v) => parse_list("epsilon_list", v)?,
                None => vec![epsilon],
            },
        };
        // every grid point must be a valid configuration up front
        for (n, l, g, e) in grid.points() {
            NetworkSpec::new(n, l, preset.hopping())
                .map_err(|err| AppError::Config(format!("sweep point N={n} l={l}: {err}")))?;
            if method == Source::Perturbative && l < 2 {
                return config_err(format!(
                    "sweep point N={n} l={l}: method perturbative needs range l >= 2"
                ));
            }
            if !(g.is_finite() && g >= 0.0) {
                return config_err(format!("sweep point gamma={g}: must be nonnegative"));
            }
            if !(e > 0.0 && e < 1.0) {
                return config_err(format!("sweep point epsilon={e}: must lie in (0, 1)"));
            }
            if initial_node >= n {
                return config_err(format!(
                    "sweep point N={n}: initial_node {initial_node} out of range"
                ));
            }
        }
        Some(grid)
    } else {
        None
    };

    Ok(RunConfig {
        nodes,
        range,
        gamma,
        epsilon,
        t_max,
        stride,
        method,
        preset,
        initial_node,
        output: raw.output,
        format,
        mode,
        explicit_t_max,
        explicit_stride,
        sweep: sweep_grid,
    })
}

/// Horizon when none is given: far enough past the analytic mixing ceiling
/// to observe the crossing, or a fixed window when Γ = 0 (no convergence).
pub fn default_horizon(nodes: usize, gamma: f64, epsilon: f64) -> f64 {
    match instantaneous_bound(nodes, gamma, epsilon) {
        Ok(bound) => 1.5 * bound,
        Err(_) => 100.0,
    }
}

pub fn default_stride(t_max: f64) -> f64 {
    (t_max / 1000.0).max(1e-6)
}
