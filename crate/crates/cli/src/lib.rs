//! Command-line driver for the `softmanifold` pipeline.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use softmanifold::evaluation::{average_distortion, mean_average_precision, AggregateRow, ResultRow};
use softmanifold::soft_manifold::{
    calibrate_pairs, ratio_envelope, sample_interior_pairs, CalibrationRow, CalibrationStatus,
    ManifoldPoint, OracleSettings,
};
use softmanifold::{
    build_conductivity, embed, graph_distance_matrix, knn_neighborhoods, run_experiment,
    EmbeddingRecord, EmbeddingState, ExperimentBase, FluidGraph, FluidGraphRecord,
};

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] softmanifold::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "softman", version, about = "Graph embedding on a soft manifold")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the embedding and experiment seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the fluid graph and embed it; writes embedding.json,
    /// loss_trace.csv and graph.json.
    Embed {
        #[command(flatten)]
        common: Common,
    },
    /// Score an embedding against a graph; writes eval.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Comma-separated subset of `map,ad`.
        #[arg(long, value_delimiter = ',', default_value = "map,ad")]
        metrics: Vec<Metric>,
    },
    /// Run the missing-data experiment grid; writes results.csv and
    /// aggregates.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the semimetric with numerically minimized geodesic lengths;
    /// writes geodesic_check.csv.
    GeodesicCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        n_pairs: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 64)]
        segments: usize,
        /// Also emit a coincident pair and a near-boundary antipodal pair.
        #[arg(long)]
        with_reference_pairs: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Map,
    Ad,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            print!("{e}");
            std::process::exit(0);
        }
        _ => CliError::Config(e.to_string()),
    })?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Embed { common }
        | Command::Eval { common, .. }
        | Command::Simulate { common }
        | Command::GeodesicCheck { common, .. } => common,
    };
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        // A global pool may already exist when called repeatedly in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Embed { common } => cmd_embed(common),
        Command::Eval {
            common,
            embedding,
            graph,
            metrics,
        } => cmd_eval(common, embedding, graph, metrics),
        Command::Simulate { common } => cmd_simulate(common),
        Command::GeodesicCheck {
            common,
            n_pairs,
            dim,
            segments,
            with_reference_pairs,
        } => cmd_geodesic_check(common, *n_pairs, *dim, *segments, *with_reference_pairs),
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.embed.seed = seed;
        if let Some(grid) = &mut cfg.experiment {
            grid.base_seed = seed;
        }
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn output_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        context: format!("cannot create {}", dir.display()),
        source,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        context: format!("cannot write {}", path.display()),
        source,
    })
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| CliError::Io {
        context: format!("cannot write {}", path.display()),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        context: format!("cannot read {}", path.display()),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    l_d: f64,
    l_g: f64,
    total: f64,
}

fn cmd_embed(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let fm = cfg.load_features()?;
    let nbhd = knn_neighborhoods(&fm, cfg.graph.k)?;
    let k = build_conductivity(&fm, &nbhd, cfg.graph.base_conductivity)?;
    let fg = graph_distance_matrix(&fm, &k, &nbhd, &cfg.graph.fluid())?;
    let state = embed(&fm, &fg, &cfg.embed)?;
    log::info!(
        "embedded {} nodes, final loss {:?}",
        state.n_nodes(),
        state.final_loss()
    );

    output_dir(&cfg.output_dir)?;
    let mut json = serde_json::to_string_pretty(&state.to_record())?;
    json.push('\n');
    write_file(&cfg.output_dir.join("embedding.json"), json.as_bytes())?;
    let mut json = serde_json::to_string_pretty(&fg.to_record())?;
    json.push('\n');
    write_file(&cfg.output_dir.join("graph.json"), json.as_bytes())?;
    let rows: Vec<LossRow> = state
        .loss_trace
        .iter()
        .map(|r| LossRow {
            epoch: r.epoch,
            l_d: r.l_d,
            l_g: r.l_g,
            total: r.total,
        })
        .collect();
    write_csv(&cfg.output_dir.join("loss_trace.csv"), &rows)
}

fn cmd_eval(
    common: &Common,
    embedding: &Path,
    graph: &Path,
    metrics: &[Metric],
) -> Result<(), CliError> {
    let out = match (&common.out, &common.config) {
        (Some(out), _) => out.clone(),
        (None, Some(_)) => load_config(common)?.output_dir,
        (None, None) => PathBuf::from("."),
    };
    if metrics.is_empty() {
        return Err(CliError::Config("--metrics must name at least one metric".into()));
    }
    let state = EmbeddingState::from_record(&read_json::<EmbeddingRecord>(embedding)?)?;
    let fg = FluidGraph::from_record(&read_json::<FluidGraphRecord>(graph)?)?;
    if state.n_nodes() != fg.n_nodes {
        return Err(CliError::Data(format!(
            "embedding has {} nodes but graph has {}",
            state.n_nodes(),
            fg.n_nodes
        )));
    }
    let mut header = Vec::new();
    let mut values = Vec::new();
    for m in [Metric::Map, Metric::Ad] {
        if !metrics.contains(&m) {
            continue;
        }
        match m {
            Metric::Map => {
                header.push("map");
                values.push(mean_average_precision(&state.positions, &fg.nbhd));
            }
            Metric::Ad => {
                header.push("ad");
                values.push(average_distortion(&state.positions, &fg).value);
            }
        }
    }
    output_dir(&out)?;
    let path = out.join("eval.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&header)?;
    w.write_record(values.iter().map(|v| v.to_string()))?;
    w.flush().map_err(|source| CliError::Io {
        context: format!("cannot write {}", path.display()),
        source,
    })
}

fn cmd_simulate(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let grid = cfg
        .experiment
        .clone()
        .ok_or_else(|| CliError::Config("simulate needs an [experiment] section".into()))?;
    let fm = cfg.load_features()?;
    let base = ExperimentBase {
        k: cfg.graph.k,
        base_conductivity: cfg.graph.base_conductivity,
        fluid: cfg.graph.fluid(),
        embed: cfg.embed,
        k_vote: cfg.eval.k_vote,
    };
    let results = run_experiment(&fm, &grid, &base)?;
    let failed = results.rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed", results.rows.len());
    }
    output_dir(&cfg.output_dir)?;
    write_csv::<ResultRow>(&cfg.output_dir.join("results.csv"), &results.rows)?;
    write_csv::<AggregateRow>(&cfg.output_dir.join("aggregates.csv"), &results.aggregates)
}

#[derive(Serialize)]
struct CalibrationCsvRow {
    pair_id: usize,
    chord: f64,
    semimetric: f64,
    oracle_length: f64,
    ratio: Option<f64>,
    status: &'static str,
}

impl From<&CalibrationRow> for CalibrationCsvRow {
    fn from(r: &CalibrationRow) -> Self {
        CalibrationCsvRow {
            pair_id: r.pair_id,
            chord: r.chord,
            semimetric: r.semimetric,
            oracle_length: r.oracle_length,
            ratio: r.ratio.is_finite().then_some(r.ratio),
            status: match r.status {
                CalibrationStatus::Ok => "ok",
                CalibrationStatus::Degenerate => "degenerate",
                CalibrationStatus::NotConverged => "not_converged",
            },
        }
    }
}

fn cmd_geodesic_check(
    common: &Common,
    n_pairs: usize,
    dim: usize,
    segments: usize,
    with_reference_pairs: bool,
) -> Result<(), CliError> {
    if n_pairs < 1 {
        return Err(CliError::Config("--n-pairs must be >= 1".into()));
    }
    if dim < 2 {
        return Err(CliError::Config("--dim must be >= 2".into()));
    }
    if segments < 8 {
        return Err(CliError::Config("--segments must be >= 8".into()));
    }
    let (seed, out) = match &common.config {
        Some(_) => {
            let cfg = load_config(common)?;
            (cfg.embed.seed, cfg.output_dir)
        }
        None => (
            common.seed.unwrap_or(0),
            common.out.clone().unwrap_or_else(|| PathBuf::from(".")),
        ),
    };
    let mut pairs = sample_interior_pairs(n_pairs, dim, seed)?;
    if with_reference_pairs {
        let mut p = vec![0.0; dim];
        p[0] = 0.3;
        let same = ManifoldPoint::new(p)?;
        pairs.push((same.clone(), same));
        let a = 0.999;
        let mut l = vec![0.0; dim];
        let mut r = vec![0.0; dim];
        l[0] = -a;
        r[0] = a;
        pairs.push((ManifoldPoint::new(l)?, ManifoldPoint::new(r)?));
    }
    let settings = OracleSettings {
        n_segments: segments,
        ..OracleSettings::default()
    };
    let rows = calibrate_pairs(&pairs, &settings)?;
    output_dir(&out)?;
    let csv_rows: Vec<CalibrationCsvRow> = rows.iter().map(Into::into).collect();
    write_csv(&out.join("geodesic_check.csv"), &csv_rows)?;
    match ratio_envelope(&rows) {
        Some(e) => println!(
            "ratio oracle/semimetric over {} pairs: min {:.6} median {:.6} max {:.6}",
            e.count, e.min, e.median, e.max
        ),
        None => println!("no non-degenerate pairs"),
    }
    Ok(())
}
