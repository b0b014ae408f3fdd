//! The five pipeline commands plus `dump-config`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use gridres_core::{
    load_profiles, spearman_rho, system_id_order, MetricsError, RngStream, VulnerabilityProfile,
};
use gridres_eval::{
    evaluate_benchmark, plan_der_unweighted, plan_der_weighted, rank_systems, write_report_csv,
    write_report_json, BenchmarkSet, PlanMode, PlanningInput, ResilienceReport,
};
use gridres_ingest::{run_pipeline, write_scores_csv, IngestReport};
use gridres_sim::{generate_topology, run_monte_carlo, write_traces_json, TOPOLOGY_STREAM};
use gridres_surrogate::{
    checkpoint, evaluate_mae, kfold_split, kfold_train_indices, load_real_dataset,
    load_sim_dataset, stratified_split, train as train_surrogate, Dataset, SurrogateConfig,
    TrainingRun, TrainingSample,
};

use crate::run_config::RunConfig;
use crate::{CliError, TrainMode};

/// Stream ids for CLI-level draws; the sim engine owns ids below 2^62
/// (episodes) and just above it (topology/placement/anchors).
const SPLIT_STREAM: u64 = 3 << 60;
const TRAIN_STREAM_BASE: u64 = (3 << 60) + 1;

pub fn ingest(
    config: &RunConfig,
    outages: &Path,
    population: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let report = run_pipeline(outages, population, &config.ingest)?;
    let scores_path = out.join("scores.csv");
    let events_path = out.join("events.csv");
    write_scores_csv(&report.scores, &scores_path)?;
    write_events_csv(&report, &events_path)?;
    println!(
        "systems: {} seen, {} kept",
        report.systems_seen, report.systems_kept
    );
    if !report.dropped_systems.is_empty() {
        println!(
            "dropped (fewer than {} events): {}",
            config.ingest.min_events,
            report.dropped_systems.join(", ")
        );
    }
    println!("events: {} -> {}", report.events.len(), events_path.display());
    println!("scores: {} -> {}", report.scores.len(), scores_path.display());
    Ok(())
}

/// Per-hour performance curves: `system_id,event_id,hour,f`.
fn write_events_csv(report: &IngestReport, path: &Path) -> Result<(), CliError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "system_id,event_id,hour,f")?;
    for (event, score) in report.events.iter().zip(&report.scores) {
        debug_assert_eq!(event.system_id, score.system_id);
        for (offset, &f) in event.curve.samples.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                event.system_id,
                score.event_id,
                event.start_hour + offset as i64,
                f
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn simulate(
    config: &RunConfig,
    episodes: u64,
    traces: bool,
    out: &Path,
) -> Result<(), CliError> {
    println!("effective seed: {}", config.seed);
    let topology = generate_topology(
        &config.topology,
        RngStream::new(config.seed, TOPOLOGY_STREAM),
    )?;
    println!(
        "topology: {} areas, {} poles, {} lines, {} buildings",
        topology.service_areas.len(),
        topology.poles.len(),
        topology.lines.len(),
        topology.buildings.len()
    );
    let step = (episodes / 10).max(1);
    let progress = move |done: u64| {
        if done % step == 0 || done == episodes {
            eprintln!("simulate: {done}/{episodes} episodes");
        }
    };
    let output = run_monte_carlo(
        &topology,
        &config.sim,
        episodes,
        config.seed,
        config.workers,
        progress,
    )?;

    let weather_path = out.join("weather.csv");
    let labels_path = out.join("labels.csv");
    let summary_path = out.join("summary.csv");
    let truth_path = out.join("ground_truth.csv");
    output.dataset.write_weather_csv(&weather_path)?;
    output.dataset.write_labels_csv(&labels_path)?;
    output.summary.write_csv(&summary_path)?;
    output
        .summary
        .write_mean_rs_csv(&truth_path, config.sim.window_mode)?;
    println!(
        "dataset: {} gust samples over {} episodes",
        output.dataset.samples.len(),
        episodes
    );
    println!(
        "wrote {}, {}, {}, {}",
        weather_path.display(),
        labels_path.display(),
        summary_path.display(),
        truth_path.display()
    );
    if traces {
        let traces_path = out.join("traces.json");
        write_traces_json(&output.traces, &traces_path)?;
        println!("wrote {}", traces_path.display());
    }
    Ok(())
}

enum WeatherFlavor {
    Sim,
    Real,
}

fn sniff_flavor(path: &Path) -> Result<WeatherFlavor, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    if first.starts_with("area_id,") {
        Ok(WeatherFlavor::Sim)
    } else if first.starts_with("system_id,") {
        Ok(WeatherFlavor::Real)
    } else {
        Err(CliError::new(
            "parse",
            format!(
                "{}: weather header must start with area_id or system_id",
                path.display()
            ),
        ))
    }
}

fn gather(samples: &[TrainingSample], indices: &[usize]) -> Vec<TrainingSample> {
    indices.iter().map(|&i| samples[i].clone()).collect()
}

fn write_loss_history(
    rows: &[(usize, f64, f64)],
    path: &Path,
) -> Result<(), CliError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,train_mae,val_mae")?;
    for (epoch, train_mae, val_mae) in rows {
        writeln!(out, "{epoch},{train_mae},{val_mae}")?;
    }
    out.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    config: &RunConfig,
    weather: &Path,
    labels: &Path,
    mode: TrainMode,
    embed_time: bool,
    grid_search: bool,
    out: &Path,
) -> Result<(), CliError> {
    let dataset = match sniff_flavor(weather)? {
        WeatherFlavor::Sim => {
            if embed_time {
                return Err(CliError::config(
                    "--embed-time needs historical weather; simulated episodes have no calendar placement",
                ));
            }
            load_sim_dataset(weather, labels)?
        }
        WeatherFlavor::Real => load_real_dataset(weather, labels, embed_time)?,
    };
    let mut surrogate_config = config.surrogate.clone();
    surrogate_config.input_dim = dataset.input_dim;
    surrogate_config.n_systems = dataset.systems.len();
    surrogate_config.validate()?;
    println!("effective seed: {}", config.seed);
    println!(
        "dataset: {} samples, {} systems, {} features/hour",
        dataset.len(),
        dataset.systems.len(),
        dataset.input_dim
    );
    match mode {
        TrainMode::Kfold => {
            if grid_search {
                return Err(CliError::config("--grid-search requires --mode stratified"));
            }
            train_kfold(config, &surrogate_config, &dataset, out)
        }
        TrainMode::Stratified => {
            train_stratified(config, &surrogate_config, &dataset, grid_search, out)
        }
    }
}

fn train_kfold(
    config: &RunConfig,
    surrogate_config: &SurrogateConfig,
    dataset: &Dataset,
    out: &Path,
) -> Result<(), CliError> {
    let folds = kfold_split(
        dataset.samples.len(),
        config.train.folds,
        RngStream::new(config.seed, SPLIT_STREAM),
    )?;
    let k = folds.len();
    let epochs = surrogate_config.epochs;
    let mut sum_train = vec![0.0; epochs];
    let mut sum_val = vec![0.0; epochs];
    let mut best_vals = Vec::with_capacity(k);
    for holdout in 0..k {
        let train_samples = gather(&dataset.samples, &kfold_train_indices(&folds, holdout));
        let val_samples = gather(&dataset.samples, &folds[holdout]);
        let run = train_surrogate(
            surrogate_config,
            &train_samples,
            &val_samples,
            &dataset.systems,
            RngStream::new(config.seed, TRAIN_STREAM_BASE + holdout as u64),
        )?;
        let path = out.join(format!("checkpoint_fold{holdout}.json"));
        checkpoint::save(&run.model, &path)?;
        println!(
            "fold {holdout}: best epoch {}, val MAE {:.6} -> {}",
            run.best_epoch,
            run.best_val_mae,
            path.display()
        );
        for record in &run.history {
            sum_train[record.epoch - 1] += record.train_mae;
            sum_val[record.epoch - 1] += record.val_mae;
        }
        best_vals.push(run.best_val_mae);
    }
    let averaged: Vec<(usize, f64, f64)> = (0..epochs)
        .map(|i| (i + 1, sum_train[i] / k as f64, sum_val[i] / k as f64))
        .collect();
    let history_path = out.join("loss_history.csv");
    write_loss_history(&averaged, &history_path)?;
    println!(
        "mean best validation MAE over {k} folds: {:.6}",
        best_vals.iter().sum::<f64>() / k as f64
    );
    println!("averaged loss curve -> {}", history_path.display());
    Ok(())
}

fn train_stratified(
    config: &RunConfig,
    surrogate_config: &SurrogateConfig,
    dataset: &Dataset,
    grid_search: bool,
    out: &Path,
) -> Result<(), CliError> {
    let split = stratified_split(
        &dataset.samples,
        config.train.val_fraction,
        config.train.test_fraction,
        RngStream::new(config.seed, SPLIT_STREAM),
    )?;
    let train_samples = gather(&dataset.samples, &split.train);
    let val_samples = gather(&dataset.samples, &split.val);
    let test_samples = gather(&dataset.samples, &split.test);
    println!(
        "split: {} train / {} val / {} test",
        train_samples.len(),
        val_samples.len(),
        test_samples.len()
    );

    let combos: Vec<(f64, f64)> = if grid_search {
        config
            .search
            .learning_rates
            .iter()
            .flat_map(|&lr| config.search.weight_decays.iter().map(move |&wd| (lr, wd)))
            .collect()
    } else {
        vec![(surrogate_config.learning_rate, surrogate_config.weight_decay)]
    };

    let mut best: Option<(TrainingRun, f64, f64)> = None;
    for (slot, &(lr, wd)) in combos.iter().enumerate() {
        let mut candidate = surrogate_config.clone();
        candidate.learning_rate = lr;
        candidate.weight_decay = wd;
        let run = train_surrogate(
            &candidate,
            &train_samples,
            &val_samples,
            &dataset.systems,
            RngStream::new(config.seed, TRAIN_STREAM_BASE + slot as u64),
        )?;
        if grid_search {
            println!(
                "grid: lr {lr}, weight decay {wd} -> best val MAE {:.6} (epoch {})",
                run.best_val_mae, run.best_epoch
            );
        }
        let better = best
            .as_ref()
            .map_or(true, |(b, _, _)| run.best_val_mae < b.best_val_mae);
        if better {
            best = Some((run, lr, wd));
        }
    }
    let (run, lr, wd) = best.expect("at least one combo trains");
    if grid_search {
        println!("grid best: lr {lr}, weight decay {wd}");
    }

    let checkpoint_path = out.join("checkpoint.json");
    checkpoint::save(&run.model, &checkpoint_path)?;
    let history_path = out.join("loss_history.csv");
    let rows: Vec<(usize, f64, f64)> = run
        .history
        .iter()
        .map(|r| (r.epoch, r.train_mae, r.val_mae))
        .collect();
    write_loss_history(&rows, &history_path)?;
    let test_mae = evaluate_mae(&run.model, &test_samples)?;
    println!(
        "best epoch {}, validation MAE {:.6}, test MAE {test_mae:.6}",
        run.best_epoch, run.best_val_mae
    );
    println!(
        "wrote {}, {}",
        checkpoint_path.display(),
        history_path.display()
    );
    Ok(())
}

/// `system_id,rs` rows of observed mean scores.
fn read_ground_truth(path: &Path) -> Result<Vec<(String, f64)>, CliError> {
    let parse_err = |line: usize, message: String| {
        CliError::new("parse", format!("{}: line {line}: {message}", path.display()))
    };
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(header)) if header.trim_end() == "system_id,rs" => {}
        Some(Ok(header)) => {
            return Err(parse_err(1, format!("header must be system_id,rs, got {header:?}")))
        }
        Some(Err(e)) => return Err(e.into()),
        None => return Err(parse_err(1, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rs) = line
            .split_once(',')
            .ok_or_else(|| parse_err(i + 2, "expected system_id,rs".into()))?;
        let rs: f64 = rs
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 2, format!("bad rs: {rs:?}")))?;
        rows.push((id.to_string(), rs));
    }
    Ok(rows)
}

pub fn evaluate(
    config: &RunConfig,
    checkpoint_path: &Path,
    benchmark_path: &Path,
    profiles_path: &Path,
    ground_truth: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let model = checkpoint::load(checkpoint_path)?;
    let benchmark = BenchmarkSet::from_csv(benchmark_path)?;
    if benchmark.input_dim != model.config.input_dim {
        return Err(CliError::new(
            "data",
            format!(
                "benchmark has {} features/hour but the checkpoint expects {}",
                benchmark.input_dim, model.config.input_dim
            ),
        ));
    }
    println!(
        "benchmark: {} events from {}",
        benchmark.events.len(),
        benchmark.source
    );
    let evaluation = evaluate_benchmark(&model, &model.systems, &benchmark)?;
    let profiles = load_profiles(profiles_path)?;
    let mut report = rank_systems(
        &evaluation,
        &profiles,
        &config.metrics.scheme,
        config.metrics.lambda,
    )?;
    match (report.rho_ru_rw, report.rho_p_value) {
        (Some(rho), Some(p)) => println!("rho(Ru, Rw) = {rho:.6} (p = {p:.6})"),
        _ => println!("rho(Ru, Rw): undefined (needs >= 3 systems with varying scores)"),
    }

    if let Some(truth_path) = ground_truth {
        let truth = read_ground_truth(truth_path)?;
        let mut observed = Vec::new();
        let mut predicted = Vec::new();
        for (id, rs) in &truth {
            if let Some(row) = report.rows.iter().find(|r| &r.system_id == id) {
                observed.push(*rs);
                predicted.push(row.ru);
            }
        }
        match spearman_rho(&observed, &predicted) {
            Ok((rho, p)) => {
                report.ground_truth_rho = Some(rho);
                report.ground_truth_p_value = Some(p);
                println!(
                    "rho(observed, predicted) = {rho:.6} (p = {p:.6}, n = {})",
                    observed.len()
                );
            }
            Err(MetricsError::TooFewPairs(_)) | Err(MetricsError::ZeroRankVariance { .. }) => {
                let note = format!(
                    "ground-truth rho undefined over {} overlapping systems",
                    observed.len()
                );
                println!("{note}");
                report.notes.push(note);
            }
            Err(e) => return Err(e.into()),
        }
    }

    let csv_path = out.join("report.csv");
    let json_path = out.join("report.json");
    write_report_csv(&report, &csv_path)?;
    write_report_json(&report, &json_path)?;
    println!("wrote {}, {}", csv_path.display(), json_path.display());
    Ok(())
}

/// Group an ingest scores CSV by system, preserving id order.
fn read_scores_by_system(path: &Path) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let parse_err = |line: usize, message: String| {
        CliError::new("parse", format!("{}: line {line}: {message}", path.display()))
    };
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?;
        let expected = ["system_id", "event_id", "start_hour", "end_hour", "rs"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(parse_err(1, format!("header must be {}", expected.join(","))));
        }
    }
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != 5 {
            return Err(parse_err(line, format!("expected 5 fields, got {}", record.len())));
        }
        let rs: f64 = record[4]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad rs: {:?}", &record[4])))?;
        grouped.entry(record[0].to_string()).or_default().push(rs);
    }
    if grouped.is_empty() {
        return Err(CliError::new("data", format!("{}: no score rows", path.display())));
    }
    let mut out: Vec<(String, Vec<f64>)> = grouped.into_iter().collect();
    out.sort_by(|a, b| system_id_order(&a.0, &b.0));
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn plan(
    config: &RunConfig,
    report_path: Option<&Path>,
    scores_path: Option<&Path>,
    target: Option<f64>,
    pu: Option<f64>,
    np: Option<u64>,
    mode: Option<PlanMode>,
    profiles_path: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let target = target.unwrap_or(config.planning.target);
    let pu = pu.unwrap_or(config.planning.pu);
    let np = np.unwrap_or(config.planning.np);
    let mode = mode.unwrap_or(config.planning.mode);

    let (per_system, mut report): (Vec<(String, Vec<f64>)>, Option<ResilienceReport>) =
        match (report_path, scores_path) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
                let report: ResilienceReport = serde_json::from_str(&text).map_err(|e| {
                    CliError::new("parse", format!("{}: {e}", path.display()))
                })?;
                let per_system = report
                    .rows
                    .iter()
                    .map(|row| (row.system_id.clone(), row.per_event.clone()))
                    .collect();
                (per_system, Some(report))
            }
            (None, Some(path)) => (read_scores_by_system(path)?, None),
            _ => {
                return Err(CliError::config(
                    "plan needs exactly one of --report or --scores",
                ))
            }
        };

    let profiles = match profiles_path {
        Some(path) => {
            if !(target < 1.0) {
                return Err(CliError::new(
                    "plan",
                    "weighted planning requires target < 1 (at 1.0 the weighting cancels)",
                ));
            }
            let map: BTreeMap<String, [f64; gridres_core::FACTOR_COUNT]> = load_profiles(path)?
                .into_iter()
                .map(|p| (p.system_id, p.factors))
                .collect();
            Some(map)
        }
        None => None,
    };

    println!(
        "plan: target {target}, pu {pu} W, np {np}, mode {}",
        match mode {
            PlanMode::Analytic => "analytic",
            PlanMode::Capped => "capped",
        }
    );

    let plan_err = |e: gridres_eval::EvalError| CliError::from(e);
    let mut notes: Vec<String> = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    for (system_id, scores) in &per_system {
        let mean_rs = scores.iter().sum::<f64>() / scores.len() as f64;
        let input =
            PlanningInput::new(scores.clone(), pu, np, target).map_err(plan_err)?;
        let unweighted = plan_der_unweighted(&input, mode).map_err(plan_err)?;
        let weighted = match &profiles {
            Some(map) => {
                let factors = map.get(system_id).ok_or_else(|| {
                    CliError::new("data", format!("no vulnerability profile for system {system_id:?}"))
                })?;
                let profile = VulnerabilityProfile::new(*factors, config.metrics.lambda)?;
                Some(
                    plan_der_weighted(&input, &profile, &config.metrics.scheme, mode)
                        .map_err(plan_err)?,
                )
            }
            None => None,
        };
        if mode == PlanMode::Analytic && unweighted.saturated_events > 0 {
            notes.push(format!(
                "system {system_id}: analytic lift pushes {} of {} events past a perfect score; capped mode would need more power",
                unweighted.saturated_events,
                scores.len()
            ));
        }
        if let Some(report) = &mut report {
            report.set_der_watts(system_id, unweighted.watts)?;
        }
        let weighted_watts = weighted
            .as_ref()
            .map(|w| format!("{}", w.result.watts))
            .unwrap_or_default();
        rows.push(format!(
            "{system_id},{mean_rs},{},{},{weighted_watts},{}",
            scores.len(),
            unweighted.watts,
            unweighted.saturated_events
        ));
        match &weighted {
            Some(w) => println!(
                "system {system_id}: {:.1} W unweighted, {:.1} W weighted (exponent {:.4})",
                unweighted.watts, w.result.watts, w.exponent
            ),
            None => println!("system {system_id}: {:.1} W unweighted", unweighted.watts),
        }
    }

    let plan_path = out.join("plan.csv");
    let mut file = BufWriter::new(std::fs::File::create(&plan_path)?);
    writeln!(
        file,
        "system_id,mean_rs,n_events,watts_unweighted,watts_weighted,saturated_events"
    )?;
    for row in &rows {
        writeln!(file, "{row}")?;
    }
    file.flush()?;
    println!("wrote {}", plan_path.display());

    for note in &notes {
        println!("note: {note}");
    }
    if let Some(mut report) = report {
        report.notes.extend(notes);
        let planned_path = out.join("report_planned.json");
        write_report_json(&report, &planned_path)?;
        println!("wrote {}", planned_path.display());
    }
    Ok(())
}

pub fn dump_config(config: &RunConfig) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(config)
        .map_err(|e| CliError::new("internal", e.to_string()))?;
    println!("{text}");
    Ok(())
}
