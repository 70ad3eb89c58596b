use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use undertrack::eval::{
    self, DetectedStop, EvalReport, LabelledTrip, Matching, ParamGrid, TuneRow,
};
use undertrack::io;
use undertrack::simulate::{self, Scenario, TrainProfile, TripScript};
use undertrack::trip::{load_route, Phase, Route, TrackerConfig, TripEventKind, TripPlan};
use undertrack::{
    resample_params, AccelSample, DetectorParams, Engine, GroundTruth, ToleranceWindow,
};

use crate::error::{CliError, Result};
use crate::DetectorArgs;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn read_trace(path: &Path) -> Result<Vec<AccelSample>> {
    let bytes = read_bytes(path)?;
    io::read_trace(&bytes[..]).map_err(|e| CliError::format(path, e))
}

fn read_truth(path: &Path) -> Result<GroundTruth> {
    let bytes = read_bytes(path)?;
    io::read_truth(&bytes[..]).map_err(|e| CliError::format(path, e))
}

fn read_route(path: &Path) -> Result<Route> {
    let bytes = read_bytes(path)?;
    load_route(&bytes[..]).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("output types serialize");
    out.push(b'\n');
    out
}

/// Serializes into memory; format errors on in-memory buffers cannot occur.
fn render(f: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), io::FormatError>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

/// Writes all outputs once every input has been parsed and processed.
fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

pub fn load_params(args: &DetectorArgs) -> Result<DetectorParams> {
    let base = match DetectorParams::preset(&args.params) {
        Ok(p) => p,
        Err(unknown) => {
            let path = Path::new(&args.params);
            if !path.exists() {
                return Err(CliError::config(format!("{unknown}; not a file either")));
            }
            let p: DetectorParams = read_json(path)?;
            p.validate().map_err(CliError::config)?;
            p
        }
    };
    match args.rate_hz {
        Some(rate) => resample_params(&base, rate).map_err(CliError::config),
        None => Ok(base),
    }
}

fn tolerance(seconds: f64) -> Result<ToleranceWindow> {
    ToleranceWindow::new(seconds).map_err(CliError::config)
}

pub fn detect(trace: &Path, detector: &DetectorArgs, out: &Path) -> Result<()> {
    let params = load_params(detector)?;
    let samples = read_trace(trace)?;
    let processed = undertrack::process_trace(&samples, &params, &Default::default())
        .map_err(CliError::config)?;
    let transitions = render(|b| io::write_transitions(b, &processed.transitions));
    let magnitudes = render(|b| io::write_magnitudes(b, &processed));
    write_outputs(
        out,
        &[
            ("transitions.csv".into(), transitions),
            ("magnitudes.csv".into(), magnitudes),
        ],
    )?;
    println!(
        "{} samples, {} transitions",
        samples.len(),
        processed.transitions.len()
    );
    Ok(())
}

pub struct ReplayInput {
    pub trace: PathBuf,
    pub route: PathBuf,
    pub origin: String,
    pub destination: String,
    pub truth: Option<PathBuf>,
    pub tolerance_s: f64,
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct ReplaySummary {
    origin: String,
    destination: String,
    events: usize,
    stations_arrived: usize,
    in_between_stops: usize,
    extra_stops: usize,
    final_phase: Phase,
    stops_remaining: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<EvalReport>,
}

pub fn replay(input: &ReplayInput, detector: &DetectorArgs) -> Result<()> {
    let params = load_params(detector)?;
    let tol = tolerance(input.tolerance_s)?;
    let route = read_route(&input.route)?;
    let plan =
        TripPlan::new(&route, &input.origin, &input.destination).map_err(CliError::config)?;
    let truth = input.truth.as_deref().map(read_truth).transpose()?;
    let samples = read_trace(&input.trace)?;

    let config = TrackerConfig::default();
    let mut engine = Engine::new(params)
        .and_then(|e| e.with_trip(plan.clone(), config))
        .map_err(CliError::config)?;
    let mut events = Vec::new();
    let mut transitions = Vec::new();
    for s in &samples {
        let step = engine.push(s).map_err(CliError::config)?;
        transitions.extend(step.transition);
        events.extend(step.events);
    }
    let tracker = engine.tracker().expect("engine has a trip");
    let count = |f: fn(&TripEventKind) -> bool| events.iter().filter(|e| f(&e.kind)).count();
    let report = match &truth {
        Some(truth) => {
            let detected = eval::classify_transitions(&plan, &config, &transitions)
                .map_err(CliError::config)?;
            Some(EvalReport::from_matchings([&eval::match_stops(
                truth, &detected, tol,
            )]))
        }
        None => None,
    };
    let summary = ReplaySummary {
        origin: plan.origin().id.clone(),
        destination: plan.destination().id.clone(),
        events: events.len(),
        stations_arrived: count(|k| matches!(k, TripEventKind::StationArrival { .. })),
        in_between_stops: count(|k| matches!(k, TripEventKind::InBetweenStop { .. })),
        extra_stops: count(|k| matches!(k, TripEventKind::UnexpectedExtraStop)),
        final_phase: tracker.state().phase,
        stops_remaining: tracker.stops_remaining(),
        report,
    };
    let log = render(|b| io::write_events(b, &events));
    write_outputs(
        &input.out,
        &[
            ("events.jsonl".into(), log),
            ("summary.json".into(), json_bytes(&summary)),
        ],
    )?;
    println!(
        "{} -> {}: {} stations, {} in-between stops, {:?}",
        summary.origin,
        summary.destination,
        summary.stations_arrived,
        summary.in_between_stops,
        summary.final_phase
    );
    if let Some(r) = &summary.report {
        println!(
            "{}/{} stops correct, {} false positives",
            r.stops_correct, r.stops_total, r.false_positives
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Script for a single trip.
    #[arg(long, conflicts_with_all = ["route", "trips"], required_unless_present = "route")]
    script: Option<PathBuf>,
    /// Route to draw a random corpus from.
    #[arg(long, requires = "trips")]
    route: Option<PathBuf>,
    /// Number of trips in the corpus.
    #[arg(long)]
    trips: Option<usize>,
    /// Corpus recipe: london, cologne, delayed or noise-free.
    #[arg(long, default_value = "london")]
    scenario: String,
    /// Train profile: london, cologne, noise-free or a JSON file. Defaults
    /// to the scenario's profile.
    #[arg(long)]
    profile: Option<String>,
    /// Shortest trip in a corpus, in segments.
    #[arg(long, default_value_t = 3)]
    min_segments: usize,
    #[arg(long, default_value_t = 50.0)]
    rate_hz: f64,
    /// Overrides the script's seed, or sets the corpus base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn load_profile(name: &str) -> Result<TrainProfile> {
    if let Some(p) = TrainProfile::preset(name) {
        return Ok(p);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(CliError::config(format!(
            "unknown profile `{name}` (expected london, cologne, noise-free or a file)"
        )));
    }
    let p: TrainProfile = read_json(path)?;
    p.validate().map_err(CliError::config)?;
    Ok(p)
}

fn trip_files(
    stem: &str,
    script: &TripScript,
    profile: &TrainProfile,
    rate: f64,
) -> Result<Vec<(String, Vec<u8>)>> {
    let (trace, truth) = simulate::generate(script, profile, rate).map_err(CliError::config)?;
    Ok(vec![
        (
            format!("{stem}trace.csv"),
            render(|b| io::write_trace(b, &trace)),
        ),
        (
            format!("{stem}truth.jsonl"),
            render(|b| io::write_truth(b, &truth)),
        ),
    ])
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    if let Some(script_path) = &args.script {
        let profile = load_profile(args.profile.as_deref().unwrap_or("london"))?;
        let mut script: TripScript = read_json(script_path)?;
        if let Some(seed) = args.seed {
            script.rng_seed = seed;
        }
        let files = trip_files("", &script, &profile, args.rate_hz)?;
        write_outputs(&args.out, &files)?;
        println!("wrote trace.csv and truth.jsonl to {}", args.out.display());
        return Ok(());
    }

    let route_path = args
        .route
        .as_deref()
        .expect("clap requires --script or --route");
    let trips = args.trips.expect("clap requires --trips with --route");
    let mut scenario = Scenario::preset(&args.scenario).ok_or_else(|| {
        CliError::config(format!(
            "unknown scenario `{}` (expected london, cologne, delayed or noise-free)",
            args.scenario
        ))
    })?;
    if let Some(p) = &args.profile {
        scenario.profile = load_profile(p)?;
    }
    let route = read_route(route_path)?;
    let scripts = scenario.corpus(&route, trips, args.min_segments, args.seed.unwrap_or(0));
    let mut files = Vec::new();
    for (i, script) in scripts.iter().enumerate() {
        let stem = format!("trip_{i:03}.");
        files.extend(trip_files(&stem, script, &scenario.profile, args.rate_hz)?);
        files.push((format!("{stem}script.json"), json_bytes(script)));
    }
    write_outputs(&args.out, &files)?;
    println!("wrote {trips} trips to {}", args.out.display());
    Ok(())
}

struct CorpusTrip {
    name: String,
    trip: LabelledTrip,
    script: Option<TripScript>,
}

/// Loads every `<name>.trace.csv` in `dir` together with its
/// `<name>.truth.jsonl` and either `<name>.plan.json` or
/// `<name>.script.json`.
fn load_corpus(dir: &Path) -> Result<Vec<CorpusTrip>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let file = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = file.strip_suffix(".trace.csv") {
            names.push(stem.to_string());
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(CliError::config(format!(
            "{}: no *.trace.csv files",
            dir.display()
        )));
    }
    names
        .into_iter()
        .map(|name| {
            let plan_path = dir.join(format!("{name}.plan.json"));
            let script_path = dir.join(format!("{name}.script.json"));
            let script: Option<TripScript> = if script_path.exists() {
                Some(read_json(&script_path)?)
            } else {
                None
            };
            let plan: TripPlan = if plan_path.exists() {
                read_json(&plan_path)?
            } else if let Some(s) = &script {
                s.plan.clone()
            } else {
                return Err(CliError::config(format!(
                    "{name}: needs {name}.plan.json or {name}.script.json"
                )));
            };
            let trace = read_trace(&dir.join(format!("{name}.trace.csv")))?;
            let truth = read_truth(&dir.join(format!("{name}.truth.jsonl")))?;
            Ok(CorpusTrip {
                name,
                trip: LabelledTrip { plan, trace, truth },
                script,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct TripDetail {
    name: String,
    transitions: usize,
    perfect: bool,
    #[serde(flatten)]
    matching: Matching,
}

#[derive(Debug, Serialize)]
struct Baselines {
    relative_time: EvalReport,
    timetable: EvalReport,
}

#[derive(Debug, Serialize)]
struct CorpusReport {
    params: DetectorParams,
    tolerance_s: f64,
    #[serde(flatten)]
    report: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    baselines: Option<Baselines>,
    trips: Vec<TripDetail>,
}

fn baselines(corpus: &[CorpusTrip], tol: ToleranceWindow) -> Option<Baselines> {
    let mut relative = Vec::new();
    let mut timetable = Vec::new();
    for c in corpus {
        let script = c.script.as_ref()?;
        let truth = c.trip.truth.stations_only();
        let departure = truth.departure_ms()?;
        let score = |pred: Vec<DetectedStop>| eval::match_stops(&truth, &pred, tol);
        relative.push(score(eval::relative_time_baseline(&c.trip.plan, departure)));
        timetable.push(score(eval::timetable_baseline(
            &c.trip.plan,
            script.scheduled_departure_ms(),
        )));
    }
    Some(Baselines {
        relative_time: EvalReport::from_matchings(&relative),
        timetable: EvalReport::from_matchings(&timetable),
    })
}

pub fn evaluate(
    corpus_dir: &Path,
    detector: &DetectorArgs,
    tolerance_s: f64,
    out: &Path,
) -> Result<()> {
    let params = load_params(detector)?;
    let tol = tolerance(tolerance_s)?;
    let corpus = load_corpus(corpus_dir)?;
    let trips: Vec<LabelledTrip> = corpus.iter().map(|c| c.trip.clone()).collect();
    let (report, outcomes) = eval::evaluate_corpus(&trips, &params, &TrackerConfig::default(), tol)
        .map_err(CliError::config)?;
    let details = corpus
        .iter()
        .zip(outcomes)
        .map(|(c, o)| TripDetail {
            name: c.name.clone(),
            transitions: o.transitions,
            perfect: o.matching.is_perfect(),
            matching: o.matching,
        })
        .collect();
    let full = CorpusReport {
        params,
        tolerance_s,
        report,
        baselines: baselines(&corpus, tol),
        trips: details,
    };
    let bytes = json_bytes(&full);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(out, bytes).map_err(|e| CliError::io(out, e))?;
    println!(
        "{}/{} stops correct ({:.1}%), {} false positives, {}/{} trips perfect",
        report.stops_correct,
        report.stops_total,
        report.accuracy_excl_start * 100.0,
        report.false_positives,
        report.trips_fully_correct,
        report.trips_total
    );
    Ok(())
}

fn table_csv(rows: &[TuneRow]) -> Vec<u8> {
    let mut out = String::from("gamma,delta_below,delta_above,window_n,accuracy,stops_correct,stops_total,false_positives\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.params.gamma,
            r.params.delta_below,
            r.params.delta_above,
            r.params.window_n,
            r.accuracy,
            r.stops_correct,
            r.stops_total,
            r.false_positives
        ));
    }
    out.into_bytes()
}

pub fn tune(corpus_dir: &Path, grid_path: &Path, tolerance_s: f64, out: &Path) -> Result<()> {
    let tol = tolerance(tolerance_s)?;
    let grid: ParamGrid = read_json(grid_path)?;
    let corpus = load_corpus(corpus_dir)?;
    let trips: Vec<LabelledTrip> = corpus.into_iter().map(|c| c.trip).collect();
    let result =
        eval::tune(&trips, &grid, &TrackerConfig::default(), tol).map_err(CliError::config)?;
    write_outputs(
        out,
        &[
            ("best-params.json".into(), json_bytes(&result.best.params)),
            ("table.csv".into(), table_csv(&result.table)),
        ],
    )?;
    let b = &result.best;
    println!(
        "best: gamma {} delta_below {} delta_above {} window_n {} ({:.1}%)",
        b.params.gamma,
        b.params.delta_below,
        b.params.delta_above,
        b.params.window_n,
        b.accuracy * 100.0
    );
    Ok(())
}
