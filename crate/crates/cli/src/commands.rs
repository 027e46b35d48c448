use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use swing_pinn::checkpoint;
use swing_pinn::dataset::{self, DatasetSpec};
use swing_pinn::eval::{self, EvalReport};
use swing_pinn::par::{self, Execution};
use swing_pinn::pinn::{self, PinnModel};
use swing_pinn::swing::{SwingParams, Trajectory};
use swing_pinn::trainer::{self, TrainReport};

use crate::config::RunConfig;

pub const DATASET_FILE: &str = "dataset.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Records the command, the fully resolved config and any extra inputs.
fn write_manifest(dir: &Path, command: &str, config: &RunConfig, inputs: Value, outputs: &[&str]) -> Result<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
    });
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

fn load_grid(path: &Path) -> Result<Vec<Trajectory>> {
    dataset::load_csv(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_model(path: &Path) -> Result<PinnModel> {
    checkpoint::restore(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn generate(config: &RunConfig) -> Result<()> {
    let out = &config.out;
    prepare_out(out)?;
    let grid = dataset::generate_grid(&config.dataset, &config.physics)?;
    dataset::save_csv(&grid, out.join(DATASET_FILE))?;
    write_manifest(
        out,
        "generate",
        config,
        json!({ "samples": dataset::total_samples(&grid) }),
        &[DATASET_FILE],
    )?;
    println!(
        "wrote {} trajectories ({} samples) to {}",
        grid.len(),
        dataset::total_samples(&grid),
        out.join(DATASET_FILE).display()
    );
    Ok(())
}

/// Eval report, per-trajectory CSV and plot data for the best and worst
/// trajectories.
fn write_evaluation(dir: &Path, model: &PinnModel, grid: &[Trajectory]) -> Result<EvalReport> {
    let report = eval::evaluate_model(model, grid)?;
    write_json(&dir.join("eval.json"), &report)?;
    eval::write_trajectory_errors_csv(&report, create(&dir.join("trajectory_errors.csv"))?)?;
    for (name, p1) in [("plot_best.csv", report.best_p1), ("plot_worst.csv", report.worst_p1)] {
        let traj = grid.iter().find(|t| t.p1 == p1).expect("trajectory from report");
        eval::write_plot_csv(model, traj, create(&dir.join(name))?)?;
    }
    Ok(report)
}

const EVAL_OUTPUTS: [&str; 4] = ["eval.json", "trajectory_errors.csv", "plot_best.csv", "plot_worst.csv"];

fn write_training(dir: &Path, model: &PinnModel, report: &TrainReport, with_physics: bool) -> Result<()> {
    checkpoint::save(model, dir.join(CHECKPOINT_FILE))?;
    trainer::write_history_csv(report, with_physics, create(&dir.join("history.csv"))?)?;
    write_json(&dir.join("train_report.json"), report)
}

pub fn train(config: &RunConfig, data: Option<&Path>) -> Result<()> {
    let out = &config.out;
    let data = data.map(Path::to_path_buf).unwrap_or_else(|| out.join(DATASET_FILE));
    let grid = load_grid(&data)?;
    prepare_out(out)?;
    let spec = &config.dataset;
    let training = dataset::sample_training_points(&grid, config.n_u, spec.seed)?;
    let collocation = dataset::sample_collocation_points(config.n_f, &spec.domain(), spec.seed)?;

    let result = trainer::train_forward(
        &training,
        &collocation,
        &config.layers,
        &config.physics,
        &spec.domain(),
        &config.train,
    );
    let (model, report) = match result {
        Err(swing_pinn::Error::Diverged { iteration, loss, last_finite }) => {
            let path = out.join("diverged_checkpoint.json");
            checkpoint::save(&last_finite, &path)?;
            anyhow::bail!(
                "training diverged at iteration {iteration} (loss {loss:e}); last finite model saved to {}",
                path.display()
            );
        }
        other => other?,
    };
    write_training(out, &model, &report, false)?;
    let eval = write_evaluation(out, &model, &grid)?;

    let mut outputs = vec![CHECKPOINT_FILE, "history.csv", "train_report.json"];
    outputs.extend(EVAL_OUTPUTS);
    write_manifest(out, "train", config, json!({ "dataset": data }), &outputs)?;
    println!(
        "trained {} iterations (+{} refinement) in {:.1} s; loss {:.3e} -> {:.3e}",
        report.iterations,
        report.refine_iterations,
        report.wall_seconds,
        report.initial.total,
        report.final_loss.total
    );
    println!(
        "relative L2: delta {:.4e}, omega (differenced) {:.4e}, omega (model) {:.4e}",
        eval.l2_delta, eval.l2_omega, eval.l2_omega_model
    );
    Ok(())
}

pub fn evaluate(config: &RunConfig, checkpoint_path: &Path, data: Option<&Path>) -> Result<()> {
    let out = &config.out;
    let data = data.map(Path::to_path_buf).unwrap_or_else(|| out.join(DATASET_FILE));
    let model = load_model(checkpoint_path)?;
    let grid = load_grid(&data)?;
    prepare_out(out)?;
    let report = write_evaluation(out, &model, &grid)?;
    write_manifest(
        out,
        "evaluate",
        config,
        json!({ "checkpoint": checkpoint_path, "dataset": data }),
        &EVAL_OUTPUTS,
    )?;
    println!(
        "relative L2: delta {:.4e}, omega (differenced) {:.4e}; best p1 {}, worst p1 {}",
        report.l2_delta, report.l2_omega, report.best_p1, report.worst_p1
    );
    if report.extrapolation {
        eprintln!(
            "warning: {} grid samples lie outside the training domain",
            report.extrapolated_points
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PairRow {
    pair: String,
    m_true: f64,
    d_true: f64,
    m: f64,
    d: f64,
    m_rel_error: f64,
    d_rel_error: f64,
}

fn identify_pair(config: &RunConfig, dir: &Path, (m, d): (f64, f64)) -> Result<(f64, f64, f64)> {
    let id = &config.identify;
    let spec = &DatasetSpec {
        n_trajectories: id.n_trajectories,
        ..config.dataset.clone()
    };
    let truth = SwingParams { m, d, ..config.physics };
    let grid = dataset::generate_grid(spec, &truth)?;
    let training = dataset::sample_training_points(&grid, id.n_u, spec.seed)?;
    let collocation = dataset::sample_collocation_points(id.n_f, &spec.domain(), spec.seed)?;
    let (model, report) = trainer::train_identify(
        &training,
        &collocation,
        &id.layers,
        &config.physics,
        &spec.domain(),
        &config.train,
        Some((m, d)),
    )?;
    prepare_out(dir)?;
    write_training(dir, &model, &report, true)?;
    let found = report.identified.expect("identification report");
    Ok((found.m, found.d, report.wall_seconds))
}

pub fn identify(config: &RunConfig) -> Result<()> {
    let out = &config.out;
    prepare_out(out)?;
    let id = &config.identify;
    let pairs = if id.pairs.is_empty() {
        dataset::identification_pairs(id.n_pairs, id.m_range, id.d_range, config.seed)
    } else {
        id.pairs.clone()
    };
    let dirs: Vec<PathBuf> = (0..pairs.len()).map(|k| out.join(format!("pair_{k:02}"))).collect();
    let jobs: Vec<(usize, (f64, f64))> = pairs.iter().copied().enumerate().collect();
    let results = par::map(&jobs, Execution::default(), |&(k, pair)| identify_pair(config, &dirs[k], pair));

    let mut rows = Vec::with_capacity(pairs.len() + 1);
    let mut wall = Vec::with_capacity(pairs.len());
    for (k, (&(m_true, d_true), res)) in pairs.iter().zip(results).enumerate() {
        let (m, d, wall_seconds) = res.with_context(|| format!("pair {k} (m = {m_true}, d = {d_true})"))?;
        rows.push(PairRow {
            pair: k.to_string(),
            m_true,
            d_true,
            m,
            d,
            m_rel_error: (m - m_true).abs() / m_true,
            d_rel_error: (d - d_true).abs() / d_true,
        });
        wall.push(wall_seconds);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&PairRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let average = PairRow {
        pair: "average".into(),
        m_true: mean(|r| r.m_true),
        d_true: mean(|r| r.d_true),
        m: mean(|r| r.m),
        d: mean(|r| r.d),
        m_rel_error: mean(|r| r.m_rel_error),
        d_rel_error: mean(|r| r.d_rel_error),
    };
    for r in &rows {
        println!(
            "pair {}: m {:.5} (true {:.5}, {:.2}%), d {:.5} (true {:.5}, {:.2}%)",
            r.pair,
            r.m,
            r.m_true,
            100.0 * r.m_rel_error,
            r.d,
            r.d_true,
            100.0 * r.d_rel_error
        );
    }
    println!(
        "average relative error: m {:.2}%, d {:.2}%; mean training time {:.1} s",
        100.0 * average.m_rel_error,
        100.0 * average.d_rel_error,
        wall.iter().sum::<f64>() / n
    );
    rows.push(average);

    let mut w = csv::Writer::from_writer(create(&out.join("identify.csv"))?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    write_json(&out.join("identify.json"), &json!({ "rows": rows }))?;
    write_manifest(
        out,
        "identify",
        config,
        json!({ "pairs": pairs }),
        &["identify.csv", "identify.json", "pair_*/"],
    )?;
    Ok(())
}

pub fn benchmark(config: &RunConfig, checkpoint_path: &Path, single_instant: Option<f64>) -> Result<()> {
    let out = &config.out;
    let model = load_model(checkpoint_path)?;
    prepare_out(out)?;
    let mut spec = config.benchmark;
    if let Some(t) = single_instant {
        spec.single_instant = t;
    }
    let levels = DatasetSpec { n_trajectories: 100, ..config.dataset.clone() }.power_levels();
    let report = eval::benchmark(&model, &model.params, config.dataset.init, &levels, &spec)?;
    write_json(&out.join("benchmark.json"), &report)?;
    write_manifest(
        out,
        "benchmark",
        config,
        json!({ "checkpoint": checkpoint_path }),
        &["benchmark.json"],
    )?;
    println!(
        "full grid ({} trajectories): integrator {:.3e} s, surrogate {:.3e} s, speedup {:.1}x (reference {}x)",
        report.n_trajectories,
        report.integrator_seconds_per_grid,
        report.surrogate_seconds_per_grid,
        report.grid_speedup,
        report.reference_grid_speedup
    );
    println!(
        "single instant t = {}: integrator {:.3e} s, surrogate {:.3e} s, speedup {:.1}x (reference {}x)",
        report.single_instant,
        report.integrator_seconds_to_instant,
        report.surrogate_seconds_per_query,
        report.instant_speedup,
        report.reference_instant_speedup
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct Prediction {
    t: f64,
    p1: f64,
    delta: f64,
    omega: f64,
    extrapolation: bool,
}

pub fn predict(config: &RunConfig, checkpoint_path: &Path, t: f64, p1: f64) -> Result<()> {
    let out = &config.out;
    let model = load_model(checkpoint_path)?;
    prepare_out(out)?;
    let prediction = Prediction {
        t,
        p1,
        delta: pinn::predict_delta(&model, t, p1),
        omega: pinn::predict_omega(&model, t, p1),
        extrapolation: model.is_extrapolation(t, p1),
    };
    if prediction.extrapolation {
        eprintln!(
            "warning: (t = {t}, p1 = {p1}) lies outside the training domain t in [0, {}], p1 in [{}, {}]",
            model.norm.t_end, model.norm.p_min, model.norm.p_max
        );
    }
    println!("{}", serde_json::to_string(&prediction)?);
    write_json(&out.join("prediction.json"), &prediction)?;
    write_manifest(
        out,
        "predict",
        config,
        json!({ "checkpoint": checkpoint_path, "t": t, "p1": p1 }),
        &["prediction.json"],
    )
}
