//! `aqc`: file-based pipeline from graph to measured solution.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use aqc::device::{
    check_physical_consistency, energy_convert, nmax_estimate, DeviceParams, EnergyUnit,
    FrustrationOffset, GapConvention,
};
use aqc::evolution::{
    evolve_with, gap_trace, EvolveOptions, Schedule, ScheduleModel, DEFAULT_DEVICE_START,
    DEFAULT_START_FIELD,
};
use aqc::graph::{max_independent_sets_with, parse_graph, validate, Graph, MisOptions};
use aqc::ising::{ising_ground_states, mis_to_ising, verify_mis_encoding, GROUND_STATE_CAP};
use aqc::lattice::{embed_graph, embed_with_redundancy, EmbedOptions, Embedding, Site, TriangularLattice};
use aqc::measurement::{measure_and_decode, MeasurementModel, StateVector};
use aqc::{Error, ErrorClass};

use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "aqc", version, about = "Adiabatic maximum-independent-set pipeline")]
struct Cli {
    /// Root seed for every random stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Omit timestamps so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Log format on standard error.
    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Text)]
    log: LogFormat,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LogFormat {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact maximum independent sets of a graph file.
    Oracle(OracleArgs),
    /// Ising model of a graph and a check of its ground manifold.
    Map(MapArgs),
    /// Lay a graph out on the triangular lattice.
    Embed(EmbedArgs),
    /// Spectrum trace and adiabatic evolution of an embedding.
    Run(RunArgs),
    /// Sample, add readout noise and decode.
    Measure(MeasureArgs),
    /// Thermal size limit and physical-parameter checks.
    Limits(LimitsArgs),
}

#[derive(Args, Debug)]
struct OracleArgs {
    graph: PathBuf,
    #[arg(long)]
    require_planar: bool,
    #[arg(long)]
    require_degree3: bool,
    /// Use plain enumeration below 20 vertices.
    #[arg(long)]
    verify_exhaustive: bool,
    #[arg(long, default_value_t = aqc::graph::DEFAULT_MIS_CAP)]
    vertex_cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MapArgs {
    graph: PathBuf,
    #[arg(long, default_value_t = aqc::ising::DEFAULT_PENALTY)]
    penalty: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    graph: PathBuf,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Copies per logical vertex (odd); 0 disables redundancy clusters.
    #[arg(long, default_value_t = 0)]
    redundancy: usize,
    /// File of `r c` lines marking unusable sites.
    #[arg(long)]
    defects: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    retries: usize,
    /// Embedding JSON destination (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// ASCII rendering destination.
    #[arg(long)]
    render: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Ideal,
    Device,
}

#[derive(Args, Debug)]
struct RunArgs {
    embedding: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Ideal)]
    model: ModelArg,
    /// Total time in units of ħ/E_J.
    #[arg(long, conflicts_with = "gap_multiple")]
    total_time: Option<f64>,
    /// Total time as a multiple of 1/Δ_min² from the gap trace.
    #[arg(long)]
    gap_multiple: Option<f64>,
    #[arg(long, default_value_t = 101)]
    steps: usize,
    #[arg(long, default_value_t = DEFAULT_START_FIELD)]
    start_field: f64,
    #[arg(long, default_value_t = DEFAULT_DEVICE_START.d_top, allow_hyphen_values = true)]
    start_top: f64,
    #[arg(long, default_value_t = DEFAULT_DEVICE_START.d_bot, allow_hyphen_values = true)]
    start_bot: f64,
    /// Levels per point in the gap trace.
    #[arg(long)]
    levels: Option<usize>,
    /// Only compute the gap trace.
    #[arg(long)]
    trace_only: bool,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the final state for `measure`.
    #[arg(long)]
    state_out: Option<PathBuf>,
    /// Embed the final state in the result JSON even above 12 sites.
    #[arg(long)]
    include_state: bool,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    embedding: PathBuf,
    /// State JSON written by `run --state-out`.
    #[arg(long, required_unless_present = "ideal_ground")]
    state: Option<PathBuf>,
    /// Use the equal superposition of embedded maximum independent sets.
    #[arg(long, conflicts_with = "state")]
    ideal_ground: bool,
    #[arg(long, default_value_t = aqc::device::AXIS_C_DEG)]
    angle: f64,
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
    #[arg(long, default_value_t = 1000)]
    shots: usize,
    /// Spin marking set membership; defaults to -1 for evolved states and
    /// +1 for `--ideal-ground`.
    #[arg(long, allow_hyphen_values = true)]
    in_set_spin: Option<i8>,
    /// Raw shot CSV destination.
    #[arg(long)]
    raw_shots: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LimitsArgs {
    /// Device parameter JSON.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Temperature in kelvin.
    #[arg(long, default_value_t = 0.0175, allow_hyphen_values = true)]
    temperature: f64,
    #[arg(long, default_value_t = 18.0)]
    delta1_ghz: f64,
    /// Read Δ_1 as the full eigenvalue splitting.
    #[arg(long)]
    full_splitting: bool,
    #[arg(long)]
    check_physical: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(e) => match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Capacity => 3,
                ErrorClass::Numerical => 4,
            },
            None if error.downcast_ref::<std::io::Error>().is_some() => 1,
            None => 2,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn validation(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        error: anyhow::anyhow!(msg.into()),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(|e| Failure { code: 1, error: e })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(|e| Failure { code: 1, error: e })
}

fn emit(out: Option<&Path>, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    match out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_graph(path: &Path, m: &mut Manifest) -> CliResult<Graph> {
    let text = read_text(path)?;
    m.input(path, text.as_bytes());
    if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("json")) {
        return Ok(serde_json::from_str(&text).map_err(Error::from)?);
    }
    Ok(parse_graph(&text)?)
}

fn cmd_oracle(a: &OracleArgs, m: &mut Manifest) -> CliResult<Value> {
    let g = load_graph(&a.graph, m)?;
    m.params(json!({
        "require_planar": a.require_planar,
        "require_degree3": a.require_degree3,
        "verify_exhaustive": a.verify_exhaustive,
        "vertex_cap": a.vertex_cap,
    }));
    let report = validate(&g);
    if a.require_planar && report.planarity != aqc::graph::Planarity::Planar {
        return Err(validation(format!("graph is not planar ({})", report.planarity_method)));
    }
    if a.require_degree3 && !report.is_degree3_ok {
        return Err(validation(format!("maximum degree {} exceeds 3", report.max_degree)));
    }
    let r = max_independent_sets_with(
        &g,
        &MisOptions {
            vertex_cap: a.vertex_cap,
            verify_exhaustive: a.verify_exhaustive,
            ..Default::default()
        },
    )?;
    Ok(json!({
        "size": r.size,
        "count": r.sets.len(),
        "sets": r.sets,
        "truncated": r.truncated,
        "node_visits": r.node_visits,
        "validation": report,
    }))
}

fn cmd_map(a: &MapArgs, m: &mut Manifest) -> CliResult<Value> {
    let g = load_graph(&a.graph, m)?;
    m.params(json!({ "penalty": a.penalty }));
    let model = mis_to_ising(&g, a.penalty)?;
    let mut out = json!({
        "model": model,
        "qubo_offset": model.qubo_offset(),
    });
    if g.vertex_count() <= GROUND_STATE_CAP {
        let ground = ising_ground_states(&model)?;
        out["ground"] = serde_json::to_value(&ground).expect("serializable");
        out["encoding"] = serde_json::to_value(verify_mis_encoding(&g, &model)?).expect("serializable");
    }
    Ok(out)
}

fn parse_defects(text: &str) -> CliResult<Vec<Site>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("expected `r c`, got `{line}`"),
            })?;
        if nums.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected `r c`, got `{line}`"),
            }
            .into());
        }
        out.push(Site::new(nums[0], nums[1]));
    }
    Ok(out)
}

fn cmd_embed(a: &EmbedArgs, seed: u64, m: &mut Manifest) -> CliResult<Value> {
    let g = load_graph(&a.graph, m)?;
    let mut defects = Vec::new();
    if let Some(p) = &a.defects {
        let text = read_text(p)?;
        m.input(p, text.as_bytes());
        defects = parse_defects(&text)?;
    }
    m.params(json!({
        "rows": a.rows,
        "cols": a.cols,
        "redundancy": a.redundancy,
        "retries": a.retries,
    }));
    if a.redundancy != 0 && a.redundancy.is_multiple_of(2) {
        return Err(Error::Parameter(format!("redundancy must be odd, got {}", a.redundancy)).into());
    }
    let lattice = TriangularLattice::new(a.rows, a.cols).with_defects(defects);
    let opts = EmbedOptions {
        seed: aqc::seed::child(seed, "embed"),
        retries: a.retries,
        ..Default::default()
    };
    let e = if a.redundancy == 0 {
        embed_graph(&g, &lattice, &opts)?
    } else {
        embed_with_redundancy(&g, &lattice, &opts, a.redundancy)?
    };
    let report = aqc::lattice::validate_embedding(&e);
    if let Some(p) = &a.render {
        write_text(p, &e.render_ascii())?;
    }
    tracing::info!(
        sites = e.roles.len(),
        dummies = e.dummy_count(),
        pass = report.pass,
        "embedding complete"
    );
    Ok(json!({
        "embedding": e,
        "validation": report,
    }))
}

/// Embedding files may hold the bare embedding or the `embed` output.
fn embedding_from_value(v: Value) -> CliResult<Embedding> {
    let inner = match v {
        Value::Object(mut map) if map.contains_key("embedding") => map.remove("embedding").unwrap(),
        other => other,
    };
    Ok(serde_json::from_value(inner).map_err(Error::Json)?)
}

fn load_embedding_any(path: &Path, m: &mut Manifest) -> CliResult<Embedding> {
    let text = read_text(path)?;
    m.input(path, text.as_bytes());
    let v: Value = serde_json::from_str(&text).map_err(Error::Json)?;
    embedding_from_value(v)
}

fn cmd_run(a: &RunArgs, m: &mut Manifest) -> CliResult<Value> {
    let e = load_embedding_any(&a.embedding, m)?;
    let model = match a.model {
        ModelArg::Ideal => ScheduleModel::IdealInterpolation {
            start_field: a.start_field,
        },
        ModelArg::Device => ScheduleModel::DevicePath {
            start_offset: FrustrationOffset::new(a.start_top, a.start_bot),
        },
    };
    let n = e.roles.len();
    if n > aqc::evolution::EVOLUTION_MAX_SITES {
        return Err(Error::SizeLimit {
            what: "sites",
            actual: n,
            limit: aqc::evolution::EVOLUTION_MAX_SITES,
        }
        .into());
    }
    let probe = Schedule {
        model,
        total_time: a.total_time.unwrap_or(1.0),
        steps: a.steps,
    };
    probe.validate()?;
    let dim = 1usize << n;
    let (ground_d, _) = aqc::evolution::final_spectrum(&aqc::evolution::ScheduledPath::new(&e, &probe)?)?;
    let levels = a.levels.unwrap_or((ground_d + 3).min(dim));
    let trace = gap_trace(&e, &probe, levels)?;
    let total_time = match (a.total_time, a.gap_multiple) {
        (Some(t), _) => t,
        (None, Some(x)) => {
            if !(trace.min_gap > 0.0) {
                return Err(Error::Numerical {
                    message: "minimum gap is zero; cannot scale time by it".into(),
                    residual: trace.min_gap,
                }
                .into());
            }
            x / (trace.min_gap * trace.min_gap)
        }
        (None, None) if a.trace_only => probe.total_time,
        (None, None) => return Err(validation("one of --total-time or --gap-multiple is required")),
    };
    let sched = Schedule { total_time, ..probe };
    m.params(json!({ "schedule": sched, "levels": levels, "trace_only": a.trace_only }));
    if let Some(p) = &a.trace_out {
        write_text(p, &trace.to_csv())?;
    }
    let mut out = json!({
        "schedule": sched,
        "trace": {
            "min_gap": trace.min_gap,
            "min_gap_location": trace.min_gap_location,
            "ground_degeneracy_final": trace.ground_degeneracy_final,
            "levels": levels,
        },
    });
    if a.trace_only {
        return Ok(out);
    }
    let r = evolve_with(&e, &sched, &EvolveOptions::default())?;
    tracing::info!(
        success = r.success_probability,
        steps = r.accepted_steps,
        rejected = r.rejected_steps,
        "evolution complete"
    );
    if let Some(p) = &a.state_out {
        let state = StateVector::Dense(r.final_state.clone());
        let mut text = serde_json::to_string(&state).expect("serializable");
        text.push('\n');
        write_text(p, &text)?;
    }
    let mut result = serde_json::to_value(&r).expect("serializable");
    if !(a.include_state || n <= 12) {
        result.as_object_mut().unwrap().remove("final_state");
    }
    out["result"] = result;
    Ok(out)
}

fn load_state(path: &Path, m: &mut Manifest) -> CliResult<StateVector> {
    let text = read_text(path)?;
    m.input(path, text.as_bytes());
    let v: Value = serde_json::from_str(&text).map_err(Error::Json)?;
    // Accept a `run` result as well as a bare state.
    let inner = match v {
        Value::Object(mut map) if map.contains_key("final_state") => {
            Value::Array(match map.remove("final_state").unwrap() {
                Value::Array(a) => a,
                _ => return Err(validation("final_state must be an array")),
            })
        }
        Value::Object(mut map) if map.contains_key("result") => match map.remove("result") {
            Some(Value::Object(mut r)) if r.contains_key("final_state") => r.remove("final_state").unwrap(),
            _ => return Err(validation("result has no final_state; rerun with --include-state")),
        },
        other => other,
    };
    Ok(serde_json::from_value(inner).map_err(Error::Json)?)
}

fn cmd_measure(a: &MeasureArgs, seed: u64, m: &mut Manifest) -> CliResult<Value> {
    let e = load_embedding_any(&a.embedding, m)?;
    let state = if a.ideal_ground {
        let logical = mis_to_ising(&e.graph, aqc::ising::DEFAULT_PENALTY)?;
        let ground = ising_ground_states(&logical)?;
        StateVector::embedded_superposition(&e, &ground.configs)?
    } else {
        load_state(a.state.as_deref().expect("clap enforces one source"), m)?
    };
    let model = MeasurementModel {
        mismatch_angle: a.angle,
        extra_flip_prob: a.flip,
        shots: a.shots,
        seed: aqc::seed::child(seed, "measure"),
        in_set_spin: a.in_set_spin.unwrap_or(if a.ideal_ground { 1 } else { -1 }),
    };
    m.params(json!({ "model": model, "ideal_ground": a.ideal_ground }));
    let outcome = measure_and_decode(&e, &state, &model, &e.graph)?;
    if let Some(p) = &a.raw_shots {
        let mut csv = String::from("shot,valid_mis,spins\n");
        for (i, r) in outcome.records.iter().enumerate() {
            let spins: String = r.spins.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect();
            csv.push_str(&format!("{i},{},{spins}\n", r.valid_mis));
        }
        write_text(p, &csv)?;
    }
    Ok(serde_json::to_value(&outcome.stats).expect("serializable"))
}

fn cmd_limits(a: &LimitsArgs, m: &mut Manifest) -> CliResult<Value> {
    let params: DeviceParams = match &a.params {
        Some(p) => {
            let text = read_text(p)?;
            m.input(p, text.as_bytes());
            serde_json::from_str(&text).map_err(Error::Json)?
        }
        None => DeviceParams::default(),
    };
    params.validate()?;
    let convention = if a.full_splitting {
        GapConvention::FullSplitting
    } else {
        GapConvention::FieldStrength
    };
    m.params(json!({
        "params": params,
        "temperature": a.temperature,
        "delta1_ghz": a.delta1_ghz,
        "convention": convention,
    }));
    let report = nmax_estimate(a.delta1_ghz, EnergyUnit::GHz, a.temperature, convention, Some(&params))?;
    let mut out = json!({
        "nmax": report,
        "delta1_kelvin": energy_convert(a.delta1_ghz, EnergyUnit::GHz, EnergyUnit::Kelvin, Some(&params))?,
    });
    if a.check_physical {
        out["physical"] = serde_json::to_value(check_physical_consistency(&params)).expect("serializable");
    }
    Ok(out)
}

fn init_logging(format: LogFormat) {
    let filter = tracing_subscriber::EnvFilter::try_from_env("AQC_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let builder = tracing_subscriber::fmt().with_writer(std::io::stderr).with_env_filter(filter);
    match format {
        LogFormat::Json => builder.json().init(),
        LogFormat::Text => builder.init(),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let name = match &cli.command {
        Command::Oracle(_) => "oracle",
        Command::Map(_) => "map",
        Command::Embed(_) => "embed",
        Command::Run(_) => "run",
        Command::Measure(_) => "measure",
        Command::Limits(_) => "limits",
    };
    let mut m = Manifest::new(name, cli.seed, cli.deterministic);
    let (value, out) = match &cli.command {
        Command::Oracle(a) => (cmd_oracle(a, &mut m)?, a.out.as_deref()),
        Command::Map(a) => (cmd_map(a, &mut m)?, a.out.as_deref()),
        Command::Embed(a) => (cmd_embed(a, cli.seed, &mut m)?, a.out.as_deref()),
        Command::Run(a) => (cmd_run(a, &mut m)?, a.out.as_deref()),
        Command::Measure(a) => (cmd_measure(a, cli.seed, &mut m)?, a.out.as_deref()),
        Command::Limits(a) => (cmd_limits(a, &mut m)?, a.out.as_deref()),
    };
    let mut value = value;
    value["manifest"] = m.to_value();
    emit(out, &value)?;
    if let (Command::Embed(a), Some(_)) = (&cli.command, out) {
        if a.render.is_none() {
            if let Some(e) = value.get("embedding") {
                let e: Embedding = serde_json::from_value(e.clone()).map_err(Error::Json)?;
                print!("{}", e.render_ascii());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log);
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .expect("thread pool is configured once");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match cli.log {
                LogFormat::Json => tracing::error!(code = f.code, "{:#}", f.error),
                LogFormat::Text => eprintln!("error: {:#}", f.error),
            }
            ExitCode::from(f.code)
        }
    }
}
