//! The five subcommands. Each command appends a manifest block listing the
//! files it wrote; no command rewrites a file produced by a previous
//! invocation in the same run directory.
//!
//! Run directory layout:
//! `runs/<name>/{manifest.txt, config.toml, data/, checkpoints/, samples/, metrics/, plots/}`.

use crate::cli::config::Config;
use crate::cli::{manifest, plot};
use crate::denoiser::{Denoiser, DenoiserConfig};
use crate::diffusion::{
    sample, train, GuidanceMode, GuidanceSpec, LossNorm, NoiseSchedule, TrainConfig,
};
use crate::error::{CadError, Result};
use crate::metrics::{compute_report, report_csv_row, report_text, MetricsReport, REPORT_CSV_HEADER};
use crate::ndtensor::{checkpoint, LrSchedule, OptimizerHyper, OptimizerKind, Params, Tensor};
use crate::noisesim::{
    bin_coherence, corrupt_dataset, apply_strategy, filtered_bin_cutoff, NoiseSimConfig, Strategy,
};
use crate::toydata::{generate, AnnotatedSample, RingMixtureSpec, Standardizer};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| CadError::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CadError::io(path, e))
}

fn load_run_config(run: &Path) -> Result<Config> {
    let path = run.join("config.toml");
    if !path.exists() {
        return Err(CadError::contract(format!(
            "{run:?} is not a run directory (missing config.toml); run `simulate` first"
        )));
    }
    Config::load(&path)
}

fn parse_field<T: std::str::FromStr>(field: &str, file: &str, line_no: usize) -> Result<T> {
    field.parse().map_err(|_| {
        CadError::contract(format!("{file}: line {line_no}: bad field `{field}`"))
    })
}

/// Rows of a labeled point CSV (`x0,x1,label`).
fn read_points_csv(path: &Path) -> Result<(Vec<[f64; 2]>, Vec<usize>)> {
    let text = read_file(path)?;
    let name = path.display().to_string();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(CadError::contract(format!(
                "{name}: line {}: expected 3 fields, got {}",
                i + 1,
                parts.len()
            )));
        }
        points.push([
            parse_field(parts[0], &name, i + 1)?,
            parse_field(parts[1], &name, i + 1)?,
        ]);
        labels.push(parse_field(parts[2], &name, i + 1)?);
    }
    Ok((points, labels))
}

struct CorruptedRow {
    x: [f64; 2],
    noisy_label: usize,
    coherence: f64,
}

fn read_corrupted_csv(path: &Path) -> Result<Vec<CorruptedRow>> {
    let text = read_file(path)?;
    let name = path.display().to_string();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(CadError::contract(format!(
                "{name}: line {}: expected 7 fields, got {}",
                i + 1,
                parts.len()
            )));
        }
        rows.push(CorruptedRow {
            x: [
                parse_field(parts[0], &name, i + 1)?,
                parse_field(parts[1], &name, i + 1)?,
            ],
            noisy_label: parse_field(parts[3], &name, i + 1)?,
            coherence: parse_field(parts[6], &name, i + 1)?,
        });
    }
    Ok(rows)
}

pub fn cmd_simulate(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<PathBuf> {
    let cfg = Config::load(config_path)?;
    let seed = seed.unwrap_or(cfg.run.seed);
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.run.out));
    let run_dir = out.join(&cfg.run.name);
    if run_dir.join("data").join("clean.csv").exists() {
        return Err(CadError::contract(format!(
            "{run_dir:?} already holds a simulated dataset; runs are append-only"
        )));
    }
    for sub in ["data", "checkpoints", "samples", "metrics", "plots"] {
        let d = run_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| CadError::io(&d, e))?;
    }
    let config_bytes = std::fs::read(config_path).map_err(|e| CadError::io(config_path, e))?;
    std::fs::write(run_dir.join("config.toml"), &config_bytes)
        .map_err(|e| CadError::io(run_dir.join("config.toml"), e))?;

    let ds = &cfg.dataset;
    let spec = RingMixtureSpec::new(ds.n_classes, ds.radius, ds.sigma)?;
    let clean = generate(&spec, ds.n_train, seed);
    let holdout = generate(&spec, ds.n_holdout, seed.wrapping_add(1));
    let labels: Vec<usize> = clean.iter().map(|s| s.label).collect();
    let noise_cfg = NoiseSimConfig::new(ds.n_classes, cfg.noise.beta, cfg.noise.kappa, seed)?;
    let records = corrupt_dataset(&labels, &noise_cfg)?;

    let points_csv = |samples: &[AnnotatedSample]| {
        let mut s = String::from("x0,x1,label\n");
        for r in samples {
            writeln!(s, "{},{},{}", r.x[0], r.x[1], r.label).unwrap();
        }
        s
    };
    write_file(&run_dir.join("data/clean.csv"), &points_csv(&clean))?;
    write_file(&run_dir.join("data/holdout.csv"), &points_csv(&holdout))?;

    let mut corrupted = String::from("x0,x1,clean_label,noisy_label,u,alpha,coherence\n");
    for (s, r) in clean.iter().zip(&records) {
        writeln!(
            corrupted,
            "{},{},{},{},{},{},{}",
            s.x[0], s.x[1], r.clean_label, r.noisy_label, r.u, r.alpha, r.coherence
        )
        .unwrap();
    }
    write_file(&run_dir.join("data/corrupted.csv"), &corrupted)?;

    let flips = records
        .iter()
        .filter(|r| r.noisy_label != r.clean_label)
        .count();
    let flip_rate = if records.is_empty() {
        0.0
    } else {
        flips as f64 / records.len() as f64
    };
    let mut hist = [0usize; 16];
    for r in &records {
        let b = ((r.coherence * 16.0) as usize).min(15);
        hist[b] += 1;
    }
    let mut stats = String::new();
    writeln!(stats, "n {}", records.len()).unwrap();
    writeln!(stats, "flip_rate {flip_rate}").unwrap();
    writeln!(stats, "coherence_histogram_bins 16").unwrap();
    for (i, count) in hist.iter().enumerate() {
        writeln!(stats, "bin {:.4} {:.4} {count}", i as f64 / 16.0, (i + 1) as f64 / 16.0).unwrap();
    }
    write_file(&run_dir.join("data/stats.txt"), &stats)?;

    manifest::append_entry(
        &run_dir,
        "simulate",
        seed,
        &[("flip_rate", format!("{flip_rate}"))],
        &[
            "config.toml".into(),
            "data/clean.csv".into(),
            "data/holdout.csv".into(),
            "data/corrupted.csv".into(),
            "data/stats.txt".into(),
        ],
    )?;
    println!("simulated {} samples into {}", records.len(), run_dir.display());
    Ok(run_dir)
}

fn regime_code(s: Strategy) -> f64 {
    match s {
        Strategy::Baseline => 0.0,
        Strategy::Filtered => 1.0,
        Strategy::Weighted => 2.0,
        Strategy::Cad => 3.0,
    }
}

fn regime_from_code(c: f64) -> Result<Strategy> {
    match c as i64 {
        0 => Ok(Strategy::Baseline),
        1 => Ok(Strategy::Filtered),
        2 => Ok(Strategy::Weighted),
        3 => Ok(Strategy::Cad),
        other => Err(CadError::contract(format!("bad regime code {other} in checkpoint"))),
    }
}

fn save_model(
    path: &Path,
    model_cfg: &DenoiserConfig,
    regime: Strategy,
    cfg_dropout: f64,
    params: &Params,
    std: &Standardizer,
) -> Result<()> {
    let mut all = params.clone();
    all.push(
        "__meta",
        Tensor::new(
            vec![10],
            vec![
                model_cfg.n_classes as f64,
                model_cfg.data_dim as f64,
                model_cfg.embed_dim as f64,
                model_cfg.hidden as f64,
                model_cfg.depth as f64,
                model_cfg.coh_hidden as f64,
                model_cfg.merge_hidden as f64,
                if model_cfg.merged { 1.0 } else { 0.0 },
                regime_code(regime),
                cfg_dropout,
            ],
        ),
    );
    all.push(
        "__std",
        Tensor::new(vec![4], vec![std.mean[0], std.mean[1], std.std[0], std.std[1]]),
    );
    checkpoint::save(path, &all)
}

pub fn load_model(path: &Path) -> Result<(Denoiser, Standardizer)> {
    let all = checkpoint::load(path)?;
    let meta = all
        .get("__meta")
        .ok_or_else(|| CadError::checkpoint(path, "missing __meta array"))?
        .data()
        .to_vec();
    let sd = all
        .get("__std")
        .ok_or_else(|| CadError::checkpoint(path, "missing __std array"))?
        .data()
        .to_vec();
    if meta.len() != 10 || sd.len() != 4 {
        return Err(CadError::checkpoint(path, "malformed metadata arrays"));
    }
    let config = DenoiserConfig {
        n_classes: meta[0] as usize,
        data_dim: meta[1] as usize,
        embed_dim: meta[2] as usize,
        hidden: meta[3] as usize,
        depth: meta[4] as usize,
        coh_hidden: meta[5] as usize,
        merge_hidden: meta[6] as usize,
        merged: meta[7] != 0.0,
    };
    let regime = regime_from_code(meta[8])?;
    let mut params = Params::new();
    for (name, t) in all.iter() {
        if !name.starts_with("__") {
            params.push(name, t.clone());
        }
    }
    let model = Denoiser {
        config,
        regime,
        cfg_dropout: meta[9],
        params,
    };
    let std = Standardizer {
        mean: [sd[0], sd[1]],
        std: [sd[2], sd[3]],
    };
    Ok((model, std))
}

pub fn cmd_train(run: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = load_run_config(run)?;
    let seed = seed.unwrap_or(cfg.run.seed);
    let t = &cfg.train;
    let regime = Strategy::parse(&t.regime)?;

    let rows = read_corrupted_csv(&run.join("data/corrupted.csv"))?;
    let xs: Vec<[f64; 2]> = rows.iter().map(|r| r.x).collect();
    let std = Standardizer::fit(&xs);
    let raw_coherence: Vec<f64> = rows.iter().map(|r| r.coherence).collect();
    let bins = bin_coherence(&raw_coherence, cfg.noise.n_bins)?;
    let annotated: Vec<AnnotatedSample> = rows
        .iter()
        .map(|r| AnnotatedSample {
            x: std.apply(r.x),
            label: r.noisy_label,
            coherence: r.coherence,
            weight: None,
        })
        .collect();
    let view = apply_strategy(&annotated, &bins, regime)?;
    let train_size = view.samples.len();

    let model_cfg = DenoiserConfig {
        n_classes: cfg.dataset.n_classes,
        data_dim: 2,
        embed_dim: t.embed_dim,
        hidden: t.hidden,
        depth: t.depth,
        coh_hidden: t.coh_hidden,
        merge_hidden: t.merge_hidden,
        merged: true,
    };
    let model = Denoiser::init(model_cfg.clone(), regime, t.cfg_dropout, seed);
    let train_cfg = TrainConfig {
        steps: t.steps,
        batch: t.batch,
        schedule: NoiseSchedule::parse(&t.schedule).unwrap(),
        norm: LossNorm::parse(&t.norm).unwrap(),
        ema_decay: t.ema_decay,
        lr: LrSchedule::new(t.lr_peak, t.warmup, t.steps),
        optimizer: if t.optimizer == "adam" {
            OptimizerKind::Adam
        } else {
            OptimizerKind::Lamb
        },
        hyper: OptimizerHyper {
            weight_decay: t.weight_decay,
            ..OptimizerHyper::default()
        },
        cfg_dropout: t.cfg_dropout,
        log_every: t.log_every,
    };
    let result = train(model, &view, &train_cfg, seed)?;

    let mut loss_csv = String::from("step,lr,loss,ema_loss\n");
    for row in &result.history {
        writeln!(loss_csv, "{},{},{},{}", row.step, row.lr, row.loss, row.ema_loss).unwrap();
    }
    write_file(&run.join("metrics/loss.csv"), &loss_csv)?;
    save_model(
        &run.join("checkpoints/final.ckpt"),
        &model_cfg,
        regime,
        t.cfg_dropout,
        &result.model.params,
        &std,
    )?;
    save_model(
        &run.join("checkpoints/ema.ckpt"),
        &model_cfg,
        regime,
        t.cfg_dropout,
        &result.ema,
        &std,
    )?;

    let mut extra = vec![
        ("regime", regime.name().to_string()),
        ("train_size", train_size.to_string()),
    ];
    if regime == Strategy::Filtered {
        extra.push(("bins_removed", format!("0..{}", filtered_bin_cutoff(cfg.noise.n_bins))));
    }
    manifest::append_entry(
        run,
        "train",
        seed,
        &extra,
        &[
            "checkpoints/final.ckpt".into(),
            "checkpoints/ema.ckpt".into(),
            "metrics/loss.csv".into(),
        ],
    )?;
    let last = result.history.last();
    println!(
        "trained {} for {} steps on {} samples (final loss {})",
        regime.name(),
        t.steps,
        train_size,
        last.map(|r| r.loss).unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct SampleOpts {
    pub n: Option<usize>,
    pub steps: Option<usize>,
    pub eta: Option<f64>,
    pub guidance: Option<String>,
    pub omega: Option<f64>,
    pub coherence: Option<f64>,
    /// `ema` (default) or `final`.
    pub checkpoint: Option<String>,
    pub seed: Option<u64>,
}

fn fnum(v: f64) -> String {
    // Filename-safe float: `.` keeps shortest-round-trip formatting legible.
    format!("{v}").replace('-', "m")
}

pub fn cmd_sample(run: &Path, opts: &SampleOpts) -> Result<PathBuf> {
    let cfg = load_run_config(run)?;
    let seed = opts.seed.unwrap_or(cfg.run.seed);
    let s = &cfg.sample;
    let n = opts.n.unwrap_or(s.n);
    let steps = opts.steps.unwrap_or(s.steps);
    let eta = opts.eta.unwrap_or(s.eta);
    let guidance = opts.guidance.clone().unwrap_or_else(|| s.guidance.clone());
    let omega = opts.omega.unwrap_or(s.omega);
    let coherence = opts.coherence.unwrap_or(s.coherence);
    let which = opts.checkpoint.clone().unwrap_or_else(|| "ema".to_string());
    if steps == 0 {
        return Err(CadError::config("sample.steps", "must be positive"));
    }
    if !(0.0..=1.0).contains(&coherence) {
        return Err(CadError::config("sample.coherence", "must lie in [0, 1]"));
    }
    let mode = GuidanceMode::parse(&guidance)
        .ok_or_else(|| CadError::config("sample.guidance", "expected `none`, `cfg` or `ca-cfg`"))?;
    let ckpt_name = match which.as_str() {
        "ema" => "ema.ckpt",
        "final" => "final.ckpt",
        other => {
            return Err(CadError::config(
                "sample.checkpoint",
                format!("expected `ema` or `final`, got `{other}`"),
            ))
        }
    };
    let (model, std) = load_model(&run.join("checkpoints").join(ckpt_name))?;
    let spec = GuidanceSpec { mode, omega };
    spec.validate(&model)?;

    let labels: Vec<usize> = (0..n).map(|i| i % model.config.n_classes).collect();
    let x = sample(
        &model,
        steps,
        &labels,
        coherence,
        &spec,
        eta,
        NoiseSchedule::parse(&cfg.train.schedule).unwrap(),
        seed,
    )?;

    let mut csv = String::from("x0,x1,label\n");
    for (i, &label) in labels.iter().enumerate() {
        let p = std.invert([x.data()[2 * i], x.data()[2 * i + 1]]);
        writeln!(csv, "{},{},{label}", p[0], p[1]).unwrap();
    }
    let file = format!(
        "s_{}_w{}_c{}_n{n}_k{steps}_eta{}_{which}_seed{seed}.csv",
        mode.name(),
        fnum(omega),
        fnum(coherence),
        fnum(eta)
    );
    let rel = format!("samples/{file}");
    write_file(&run.join(&rel), &csv)?;
    manifest::append_entry(run, "sample", seed, &[], &[rel.clone()])?;
    println!("wrote {}", run.join(&rel).display());
    Ok(run.join(rel))
}

fn resolve_samples(run: &Path, name: Option<&str>) -> Result<PathBuf> {
    if let Some(name) = name {
        for cand in [run.join("samples").join(name), run.join(name), PathBuf::from(name)] {
            if cand.is_file() {
                return Ok(cand);
            }
        }
        return Err(CadError::contract(format!("samples file `{name}` not found")));
    }
    let dir = run.join("samples");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CadError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    match files.len() {
        0 => Err(CadError::contract("no samples found; run `sample` first")),
        1 => Ok(files.pop().unwrap()),
        _ => Err(CadError::contract(
            "multiple samples files present; pass --samples <name>",
        )),
    }
}

pub fn cmd_eval(
    run: &Path,
    samples: Option<&str>,
    reference: Option<&Path>,
    k: Option<usize>,
) -> Result<MetricsReport> {
    let cfg = load_run_config(run)?;
    let k = k.unwrap_or(cfg.eval.k);
    let reference = reference
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.join("data/holdout.csv"));
    if !reference.is_file() {
        return Err(CadError::contract(format!(
            "reference dataset {reference:?} not found"
        )));
    }
    let samples_path = resolve_samples(run, samples)?;
    let (real, _) = read_points_csv(&reference)?;
    let (fake, prompted) = read_points_csv(&samples_path)?;
    if fake.is_empty() {
        return Err(CadError::contract(format!(
            "samples file {samples_path:?} is empty"
        )));
    }
    let ds = &cfg.dataset;
    let spec = RingMixtureSpec::new(ds.n_classes, ds.radius, ds.sigma)?;
    let report = compute_report(&real, &fake, &prompted, &spec, k)?;

    let stem = samples_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("samples");
    let csv_rel = format!("metrics/{stem}.csv");
    let txt_rel = format!("metrics/{stem}.txt");
    write_file(
        &run.join(&csv_rel),
        &format!("{REPORT_CSV_HEADER}\n{}\n", report_csv_row(&report)),
    )?;
    let text = report_text(&report);
    write_file(&run.join(&txt_rel), &text)?;
    manifest::append_entry(run, "eval", cfg.run.seed, &[], &[csv_rel, txt_rel])?;
    print!("{text}");
    Ok(report)
}

pub fn cmd_sweep(run: &Path, axis: &str, grid: &[f64], seed: Option<u64>) -> Result<PathBuf> {
    let cfg = load_run_config(run)?;
    let seed = seed.unwrap_or(cfg.run.seed);
    let (axis, grid): (String, Vec<f64>) = if grid.is_empty() {
        match (&cfg.sweep, axis.is_empty()) {
            (Some(sw), true) => (sw.axis.clone(), sw.grid.clone()),
            _ if !axis.is_empty() => (axis.to_string(), Vec::new()),
            _ => (String::new(), Vec::new()),
        }
    } else {
        (axis.to_string(), grid.to_vec())
    };
    if grid.is_empty() {
        return Err(CadError::config("sweep.grid", "must be non-empty"));
    }
    if !matches!(axis.as_str(), "guidance" | "coherence") {
        return Err(CadError::config("sweep.axis", "expected `guidance` or `coherence`"));
    }
    let (model, std) = load_model(&run.join("checkpoints/ema.ckpt"))?;
    if model.regime != Strategy::Cad {
        return Err(CadError::contract(format!(
            "sweep needs a cad checkpoint, found regime `{}`",
            model.regime.name()
        )));
    }
    let reference = run.join("data/holdout.csv");
    let (real, _) = read_points_csv(&reference)?;
    let ds = &cfg.dataset;
    let spec = RingMixtureSpec::new(ds.n_classes, ds.radius, ds.sigma)?;
    let s = &cfg.sample;
    let schedule = NoiseSchedule::parse(&cfg.train.schedule).unwrap();
    let labels: Vec<usize> = (0..s.n).map(|i| i % ds.n_classes).collect();

    let mut csv = format!("{axis},fd,accuracy,precision,recall,density,coverage\n");
    let mut fd_curve = Vec::new();
    let mut acc_curve = Vec::new();
    for &value in &grid {
        let (gspec, coherence) = match axis.as_str() {
            "guidance" => (
                GuidanceSpec {
                    mode: GuidanceMode::CaCfg,
                    omega: value,
                },
                1.0,
            ),
            _ => (GuidanceSpec::none(), value),
        };
        gspec.validate(&model)?;
        let x = sample(&model, s.steps, &labels, coherence, &gspec, s.eta, schedule, seed)?;
        let fake: Vec<[f64; 2]> = (0..labels.len())
            .map(|i| std.invert([x.data()[2 * i], x.data()[2 * i + 1]]))
            .collect();
        let report = compute_report(&real, &fake, &labels, &spec, cfg.eval.k)?;
        writeln!(
            csv,
            "{value},{},{},{},{},{},{}",
            report.fd,
            report.accuracy,
            report.precision,
            report.recall,
            report.density,
            report.coverage
        )
        .unwrap();
        fd_curve.push((value, report.fd));
        acc_curve.push((value, report.accuracy));
        println!("{axis}={value}: fd={:.4} accuracy={:.4}", report.fd, report.accuracy);
    }

    let csv_rel = format!("metrics/sweep_{axis}.csv");
    let plot_rel = format!("plots/sweep_{axis}.svg");
    write_file(&run.join(&csv_rel), &csv)?;
    plot::write_line_plot(
        &run.join(&plot_rel),
        &format!("sweep over {axis}"),
        &axis,
        &[
            plot::Series {
                label: "frechet distance",
                points: &fd_curve,
            },
            plot::Series {
                label: "accuracy",
                points: &acc_curve,
            },
        ],
    )?;
    manifest::append_entry(run, "sweep", seed, &[("axis", axis.clone())], &[csv_rel.clone(), plot_rel])?;
    Ok(run.join(csv_rel))
}
