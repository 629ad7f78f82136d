//! The five subcommands: trajectory propagation, spectral tables, the
//! degeneracy partition, mixing analysis, and grid sweeps.

use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use ctqw::evolve::{
    integrate_master, sample_model, sample_times, ClassicalModel, CoherentModel, DenseDistribution,
    DensityMatrix, IntegrateOptions, PerturbativeModel, Source, Trajectory,
    PERTURBATIVE_GAMMA_N_LIMIT,
};
use ctqw::mixing::{self, CrossingMode, MixingOutcome, MixingReport};
use ctqw::network::NetworkSpec;
use ctqw::spectral::{bloch_system, liouville_spectrum, momentum_eigenvalue, DegeneracyClass};

use crate::config::{default_horizon, default_stride, Format, RunConfig};
use crate::output::{render, Cell, Meta, Table};
use crate::AppError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Evolve,
    Spectrum,
    Degeneracy,
    Mixing,
    Sweep,
}

impl CommandKind {
    fn label(self) -> &'static str {
        match self {
            CommandKind::Evolve => "evolve",
            CommandKind::Spectrum => "spectrum",
            CommandKind::Degeneracy => "degeneracy",
            CommandKind::Mixing => "mixing",
            CommandKind::Sweep => "sweep",
        }
    }
}

fn compute_err(e: impl std::fmt::Display) -> AppError {
    AppError::Compute(e.to_string())
}

fn meta_block(command: CommandKind, cfg: &RunConfig, time_scale: f64) -> Meta {
    let mut meta = Meta::default();
    meta.push("tool", format!("ctqw {TOOL_VERSION}"));
    meta.push("command", command.label());
    meta.push("nodes", cfg.nodes);
    meta.push("range", cfg.range);
    meta.push("gamma", cfg.gamma);
    meta.push("epsilon", cfg.epsilon);
    meta.push("t_max", cfg.t_max);
    meta.push("stride", cfg.stride);
    meta.push("method", cfg.method.label());
    meta.push("preset", cfg.preset.label());
    meta.push("initial_node", cfg.initial_node);
    meta.push("format", cfg.format.label());
    meta.push("mode", cfg.mode.label());
    meta.push("time_scale", time_scale);
    meta.push("sigma", 1.0);
    meta
}

fn write_output(
    path: &Option<PathBuf>,
    content: &str,
    created: &mut Vec<PathBuf>,
) -> Result<(), AppError> {
    match path {
        Some(p) => {
            std::fs::write(p, content)
                .map_err(|e| AppError::Compute(format!("cannot write {}: {e}", p.display())))?;
            created.push(p.clone());
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Trajectory plus its dense evaluator for one parameter point.
fn make_trajectory(
    cfg: &RunConfig,
    nodes: usize,
    range: usize,
    gamma: f64,
    t_max: f64,
    stride: f64,
) -> Result<(Trajectory, Box<dyn DenseDistribution>), AppError> {
    let spec = NetworkSpec::new(nodes, range, cfg.preset.hopping())
        .map_err(|e| AppError::Config(e.to_string()))?;
    match cfg.method {
        Source::Exact => {
            let rho0 = DensityMatrix::pure_node(nodes, cfg.initial_node).map_err(compute_err)?;
            let opts = IntegrateOptions::with_stride(stride);
            let run = integrate_master(&spec, gamma, &rho0, t_max, &opts).map_err(compute_err)?;
            let dense = run.dense.ok_or_else(|| {
                AppError::Compute("zero-horizon run has no dense output".into())
            })?;
            Ok((run.trajectory, Box::new(dense)))
        }
        Source::Perturbative => {
            let model = PerturbativeModel::new(&spec, gamma, cfg.initial_node).map_err(compute_err)?;
            if !model.regime_ok() {
                eprintln!(
                    "warning: Γ·N = {} exceeds {PERTURBATIVE_GAMMA_N_LIMIT}; the first-order \
                     solution is outside its small-dephasing regime",
                    model.gamma_n()
                );
            }
            let times = sample_times(t_max, stride).map_err(compute_err)?;
            let traj = sample_model(&model, &times).map_err(compute_err)?;
            Ok((traj, Box::new(model)))
        }
        Source::Coherent => {
            let model = CoherentModel::new(&spec, cfg.initial_node).map_err(compute_err)?;
            let times = sample_times(t_max, stride).map_err(compute_err)?;
            let traj = sample_model(&model, &times).map_err(compute_err)?;
            Ok((traj, Box::new(model)))
        }
        Source::Classical => {
            let model = ClassicalModel::new(&spec, gamma, cfg.initial_node).map_err(compute_err)?;
            let times = sample_times(t_max, stride).map_err(compute_err)?;
            let traj = sample_model(&model, &times).map_err(compute_err)?;
            Ok((traj, Box::new(model)))
        }
    }
}

pub fn run_evolve(cfg: &RunConfig, created: &mut Vec<PathBuf>) -> Result<(), AppError> {
    let (traj, _dense) =
        make_trajectory(cfg, cfg.nodes, cfg.range, cfg.gamma, cfg.t_max, cfg.stride)?;
    let mut columns = vec!["t".to_string()];
    columns.extend((0..cfg.nodes).map(|j| format!("P_{j}")));
    columns.push("tv_to_uniform".to_string());
    let rows: Vec<Vec<Cell>> = traj
        .times()
        .iter()
        .zip(traj.distributions())
        .map(|(&t, dist)| {
            let mut row = Vec::with_capacity(cfg.nodes + 2);
            row.push(Cell::Float(t));
            row.extend(dist.iter().map(|&p| Cell::Float(p)));
            row.push(Cell::Float(mixing::tv_to_uniform(dist)));
            row
        })
        .collect();
    let meta = meta_block(CommandKind::Evolve, cfg, traj.time_scale());
    let content = render(&meta, &Table { columns, rows }, cfg.format);
    write_output(&cfg.output, &content, created)
}

pub fn run_spectrum(cfg: &RunConfig, created: &mut Vec<PathBuf>) -> Result<(), AppError> {
    let spec = cfg.spec()?;
    let sys = bloch_system(&spec);
    let columns = vec!["kind".into(), "m".into(), "n".into(), "value".into()];
    let mut rows = Vec::with_capacity(cfg.nodes + cfg.nodes * cfg.nodes);
    for (n, &e) in sys.energies().iter().enumerate() {
        rows.push(vec![
            Cell::Text("energy".into()),
            Cell::UInt(n as u64),
            Cell::Empty,
            Cell::Float(e),
        ]);
    }
    for m in 0..cfg.nodes {
        for n in 0..cfg.nodes {
            rows.push(vec![
                Cell::Text("lambda".into()),
                Cell::UInt(m as u64),
                Cell::UInt(n as u64),
                Cell::Float(momentum_eigenvalue(cfg.nodes, cfg.range, m, n)),
            ]);
        }
    }
    let meta = meta_block(CommandKind::Spectrum, cfg, cfg.preset.time_scale());
    let content = render(&meta, &Table { columns, rows }, cfg.format);
    write_output(&cfg.output, &content, created)
}

pub fn run_degeneracy(cfg: &RunConfig, created: &mut Vec<PathBuf>) -> Result<(), AppError> {
    let spec = cfg.spec()?;
    let spectrum = liouville_spectrum(&spec, cfg.gamma);
    let columns = vec![
        "m".into(),
        "n".into(),
        "residue".into(),
        "lambda".into(),
        "class".into(),
        "correction".into(),
        "excluded_from_initial_state".into(),
        "group_kind".into(),
        "group_members".into(),
    ];
    let mut rows = Vec::with_capacity(cfg.nodes * cfg.nodes);
    for m in 0..cfg.nodes {
        for n in 0..cfg.nodes {
            let class = spectrum.class(m, n);
            let group = spectrum.report().group_of(m, n);
            let (gkind, gmembers) = match group {
                Some(g) => {
                    let members: Vec<String> =
                        g.members.iter().map(|(a, b)| format!("({a} {b})")).collect();
                    (Cell::Text(g.kind.label().into()), Cell::Text(members.join(";")))
                }
                None => (Cell::Empty, Cell::Empty),
            };
            rows.push(vec![
                Cell::UInt(m as u64),
                Cell::UInt(n as u64),
                Cell::UInt(((m + n) % cfg.nodes) as u64),
                Cell::Float(spectrum.lambda(m, n)),
                Cell::Text(class.label().into()),
                Cell::Float(spectrum.correction(m, n)),
                Cell::Text(
                    if class == DegeneracyClass::ZeroMode { "true" } else { "false" }.into(),
                ),
                gkind,
                gmembers,
            ]);
        }
    }
    let meta = meta_block(CommandKind::Degeneracy, cfg, cfg.preset.time_scale());
    let content = render(&meta, &Table { columns, rows }, cfg.format);
    write_output(&cfg.output, &content, created)
}

fn mixing_columns() -> Vec<String> {
    [
        "nodes",
        "range",
        "gamma",
        "epsilon",
        "method",
        "mode",
        "horizon",
        "m_inst_empirical",
        "m_inst_resolution",
        "m_inst_final_tv",
        "m_inst_bound",
        "m_inst_cycle_bound",
        "m_ave_empirical",
        "m_ave_resolution",
        "m_ave_final_tv",
        "m_ave_scan_points",
        "m_ave_lower_bound",
        "tv_envelope_violations",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

fn outcome_cells(outcome: &MixingOutcome) -> [Cell; 3] {
    match *outcome {
        MixingOutcome::Reached { time, resolution } => {
            [Cell::Float(time), Cell::Float(resolution), Cell::Empty]
        }
        MixingOutcome::NotReached { final_tv } => [
            Cell::Text("not_reached".into()),
            Cell::Empty,
            Cell::Float(final_tv),
        ],
    }
}

fn mixing_row(cfg: &RunConfig, report: &MixingReport) -> Vec<Cell> {
    let opt_float = |v: Option<f64>| v.map_or(Cell::Empty, Cell::Float);
    let [inst_t, inst_res, inst_tv] = outcome_cells(&report.m_inst_empirical);
    let [ave_t, ave_res, ave_tv] = outcome_cells(&report.m_ave_empirical);
    vec![
        Cell::UInt(report.n as u64),
        Cell::UInt(report.l as u64),
        Cell::Float(report.gamma),
        Cell::Float(report.epsilon),
        Cell::Text(cfg.method.label().into()),
        Cell::Text(report.mode.label().into()),
        Cell::Float(report.horizon),
        inst_t,
        inst_res,
        inst_tv,
        opt_float(report.m_inst_bound),
        opt_float(report.m_inst_cycle_bound),
        ave_t,
        ave_res,
        ave_tv,
        Cell::UInt(report.m_ave_scan_points as u64),
        opt_float(report.m_ave_lower_bound),
        Cell::UInt(report.tv_envelope_violations as u64),
    ]
}

fn mixing_point(
    cfg: &RunConfig,
    nodes: usize,
    range: usize,
    gamma: f64,
    epsilon: f64,
) -> Result<MixingReport, AppError> {
    let t_max = if cfg.explicit_t_max {
        cfg.t_max
    } else {
        default_horizon(nodes, gamma, epsilon)
    };
    let stride = if cfg.explicit_stride { cfg.stride } else { default_stride(t_max) };
    if gamma * t_max < 10.0 {
        eprintln!(
            "warning: Γ·T = {} at N={nodes}; the average-mixing floor assumes ΓT >> 1",
            gamma * t_max
        );
    }
    let (traj, dense) = make_trajectory(cfg, nodes, range, gamma, t_max, stride)?;
    mixing::mixing_report(
        &traj,
        Some(dense.as_ref()),
        nodes,
        range,
        gamma,
        epsilon,
        cfg.mode,
    )
    .map_err(compute_err)
}

pub fn run_mixing(cfg: &RunConfig, created: &mut Vec<PathBuf>) -> Result<(), AppError> {
    let report = mixing_point(cfg, cfg.nodes, cfg.range, cfg.gamma, cfg.epsilon)?;
    let table = Table {
        columns: mixing_columns(),
        rows: vec![mixing_row(cfg, &report)],
    };
    let meta = meta_block(CommandKind::Mixing, cfg, cfg.preset.time_scale());
    let content = render(&meta, &table, cfg.format);
    write_output(&cfg.output, &content, created)
}

pub fn run_sweep(cfg: &RunConfig, created: &mut Vec<PathBuf>) -> Result<(), AppError> {
    let grid = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| AppError::Config("sweep grid missing".into()))?;
    let output = cfg
        .output
        .clone()
        .ok_or_else(|| AppError::Config("sweep requires --output".into()))?;

    let points = grid.points();
    // points are independent; compute them in parallel but emit rows in
    // canonical grid order
    let reports: Vec<Result<MixingReport, AppError>> = points
        .par_iter()
        .map(|&(n, l, g, e)| mixing_point(cfg, n, l, g, e))
        .collect();

    let mut columns = vec!["point".to_string()];
    columns.extend(mixing_columns());
    let mut rows = Vec::with_capacity(points.len());
    for (i, report) in reports.into_iter().enumerate() {
        let report = report?;
        let mut row = vec![Cell::UInt(i as u64)];
        row.extend(mixing_row(cfg, &report));
        rows.push(row);
    }

    let meta = meta_block(CommandKind::Sweep, cfg, cfg.preset.time_scale());
    let content = render(&meta, &Table { columns: columns.clone(), rows }, cfg.format);
    write_output(&cfg.output, &content, created)?;

    // manifest describing the grid and the file it produced
    let mut manifest = Map::new();
    manifest.insert("tool".into(), json!(format!("ctqw {TOOL_VERSION}")));
    manifest.insert("command".into(), json!("sweep"));
    manifest.insert(
        "grid".into(),
        json!({
            "nodes": grid.nodes,
            "range": grid.range,
            "gamma": grid.gamma,
            "epsilon": grid.epsilon,
        }),
    );
    manifest.insert("points".into(), json!(points.len()));
    manifest.insert("method".into(), json!(cfg.method.label()));
    manifest.insert("mode".into(), json!(cfg.mode.label()));
    manifest.insert("preset".into(), json!(cfg.preset.label()));
    manifest.insert("format".into(), json!(cfg.format.label()));
    manifest.insert(
        "output".into(),
        json!(output.file_name().map(|s| s.to_string_lossy().into_owned())),
    );
    manifest.insert("columns".into(), json!(columns));
    let mut text =
        serde_json::to_string_pretty(&Value::Object(manifest)).expect("serialization");
    text.push('\n');

    let manifest_path = {
        let mut os = output.into_os_string();
        os.push(".manifest.json");
        PathBuf::from(os)
    };
    write_output(&Some(manifest_path), &text, created)
}

pub fn dispatch(command: CommandKind, cfg: &RunConfig, created: &mut Vec<PathBuf>) -> Result<(), AppError> {
    match command {
        CommandKind::Evolve => run_evolve(cfg, created),
        CommandKind::Spectrum => run_spectrum(cfg, created),
        CommandKind::Degeneracy => run_degeneracy(cfg, created),
        CommandKind::Mixing => run_mixing(cfg, created),
        CommandKind::Sweep => run_sweep(cfg, created),
    }
}
