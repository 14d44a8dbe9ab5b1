use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::Args;
use serde_json::json;
use ssl_har::baselines::{LogReg, Promotion};
use ssl_har::data::{load_csv, save_csv, segment_all, synth_generate, synth_generate_with, WindowedDataset};
use ssl_har::evaluation::{
    confusion, crossval_report, mean_f1, pca_project, write_crossval_csv, write_metrics_csv, write_pca_csv,
    ConfusionMatrix, FoldScore, PcaRow,
};
use ssl_har::experiment::{ExperimentConfig, fit_fold, plan_folds, run_fold, training_fold, FoldRun, Method, Predictor};
use ssl_har::network::{FeatureShape, ModelKind};
use ssl_har::objectives::{effective_lambdas, emphasis_lambdas};
use ssl_har::training::{gradcheck_family, Checkpoint, EpochRecord, GradCheckSetup};
use ssl_har::Rng;

use crate::config::{config_err, RunConfig};
use crate::output::{write_atomic, write_json, write_lines};
use crate::RunArgs;

fn load_run(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let cfg = RunConfig::load(args.config.as_deref(), &args.overrides())?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    write_json(&cfg.out.join("resolved_config.json"), &cfg)?;
    Ok(cfg)
}

/// Segments the configured corpus and checks the network spec and weights against it.
fn load_dataset(cfg: &RunConfig) -> anyhow::Result<WindowedDataset> {
    let streams = match (&cfg.data, &cfg.synth) {
        (Some(path), None) => load_csv(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(s)) => {
            let mut rng = Rng::new(s.seed.unwrap_or(cfg.seed));
            synth_generate_with(s.subjects, s.classes, s.rate, s.seconds, &s.params, &mut rng)?
        }
        _ => return Err(config_err("data", "set `data` to a corpus CSV or give a `synth` block")),
    };
    let ds = segment_all(&streams, cfg.window_seconds, cfg.overlap)?;
    if ds.is_empty() {
        bail!("the corpus yields no labeled windows of {} s", cfg.window_seconds);
    }
    if cfg.model_kind != Method::Logreg {
        let t = cfg.train_config();
        let spec = t
            .parse_spec(FeatureShape { channels: ds.channels, len: ds.window_len }, ds.n_classes())
            .map_err(|e| config_err("spec", e.to_string()))?;
        effective_lambdas(t.model_kind, spec.depth(), &t.resolved_lambdas(spec.depth()))
            .map_err(|e| config_err("lambdas", e.to_string()))?;
    }
    Ok(ds)
}

fn metrics_file(path: &Path, classes: &[String], cm: &ConfusionMatrix) -> anyhow::Result<f64> {
    let m = mean_f1(cm)?;
    write_atomic(path, |b| Ok(write_metrics_csv(b, classes, &m)?))?;
    Ok(m.mean_f1)
}

fn history_lines(history: &[EpochRecord]) -> Vec<String> {
    let levels = history.first().map_or(0, |h| h.c_r.len());
    let mut header = vec!["epoch".to_string(), "loss".into(), "c_s".into()];
    header.extend((0..levels).map(|l| format!("c_r{l}")));
    header.push("val_f1".into());
    let mut lines = vec![header.join(",")];
    for h in history {
        let mut row = vec![h.epoch.to_string(), format!("{:.6}", h.loss), format!("{:.6}", h.c_s)];
        row.extend(h.c_r.iter().map(|v| format!("{v:.6}")));
        row.push(h.val_f1.map(|v| format!("{v:.4}")).unwrap_or_default());
        lines.push(row.join(","));
    }
    lines
}

fn promotion_lines<'a>(folds: impl IntoIterator<Item = (usize, &'a [Promotion])>) -> Vec<String> {
    let mut lines = vec!["fold,iteration,unlabeled_index,label,confidence".to_string()];
    for (fold, promotions) in folds {
        for p in promotions {
            lines.push(format!("{fold},{},{},{},{:.6}", p.iteration, p.index, p.label, p.confidence));
        }
    }
    lines
}

fn logreg_json(l: &LogReg, ds: &WindowedDataset) -> serde_json::Value {
    let c = l.bias.len();
    json!({
        "classes": ds.classes,
        "input": [ds.channels, ds.window_len],
        "feature_mean": l.mean,
        "feature_scale": l.scale,
        "weights": l.weights.data().chunks(c).collect::<Vec<_>>(),
        "bias": l.bias.data(),
    })
}

pub fn synth(subjects: usize, classes: usize, rate: f64, seconds: f64, seed: u64, out: &Path) -> anyhow::Result<()> {
    let streams = synth_generate(subjects, classes, rate, seconds, &mut Rng::new(seed))?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join("corpus.csv");
    save_csv(&path, &streams)?;
    write_json(
        &out.join("synth.json"),
        &json!({"subjects": subjects, "classes": classes, "rate": rate, "seconds": seconds, "seed": seed}),
    )?;
    let rows: usize = streams.iter().map(|s| s.len()).sum();
    println!("wrote {} ({} subjects, {classes} classes, {rows} rows)", path.display(), streams.len());
    Ok(())
}

pub fn train(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = load_run(args)?;
    let ds = load_dataset(&cfg)?;
    let exp = cfg.experiment();
    let fold = training_fold(&ds, &exp, cfg.holdout_subject.as_deref())?;
    let t0 = Instant::now();
    let fitted = fit_fold(&ds, &fold, &exp)?;
    let out = &cfg.out;
    match &fitted.predictor {
        Predictor::Network(m) => {
            let ck = Checkpoint {
                model: m.clone(),
                classes: ds.classes.clone(),
                norm: Some(fitted.norm.clone()),
                rng: Some(Rng::new(cfg.seed)),
            };
            let bytes = ck.to_bytes()?;
            write_atomic(&out.join("checkpoint.bin"), |b| {
                b.extend_from_slice(&bytes);
                Ok(())
            })?;
            write_lines(&out.join("history.csv"), &history_lines(&fitted.history))?;
        }
        Predictor::Logreg(l) => {
            write_json(&out.join("logreg.json"), &json!({"model": logreg_json(l, &ds), "norm": fitted.norm}))?
        }
    }
    let mut labeled = vec!["example_id,subject,label".to_string()];
    for &i in &fold.labeled_ids {
        let e = &ds.examples[i];
        labeled.push(format!("{i},{},{}", e.subject, ds.classes[e.label.expect("labeled")]));
    }
    write_lines(&out.join("labeled.csv"), &labeled)?;
    if cfg.model_kind == Method::Selftrain {
        write_lines(&out.join("promotions.csv"), &promotion_lines([(0, fitted.promotions.as_slice())]))?;
    }
    print!(
        "trained {} on {} labeled + {} unlabeled windows in {:.1}s",
        cfg.model_kind,
        fitted.n_labeled,
        fitted.n_unlabeled,
        t0.elapsed().as_secs_f64()
    );
    if let Some(h) = &cfg.holdout_subject {
        let nds = fitted.norm.apply(&ds)?;
        let preds = fitted.predictor.predict(&nds.batch(&fold.test_ids)?)?;
        let cm = confusion(&preds, &nds.labels(&fold.test_ids)?, ds.n_classes())?;
        let f = metrics_file(&out.join("metrics.csv"), &ds.classes, &cm)?;
        print!("; mean F1 on {h}: {f:.2}");
    }
    println!();
    Ok(())
}

pub fn eval(checkpoint: &Path, data: &Path, overlap: f64, out: &Path) -> anyhow::Result<()> {
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let streams = load_csv(data).with_context(|| format!("reading {}", data.display()))?;
    let input = ck.model.spec().input();
    let rate = streams.first().map(|s| s.sample_rate_hz).unwrap_or(1.0);
    let ds = segment_all(&streams, input.len as f64 / rate, overlap)?;
    if ds.window_len != input.len || ds.channels != input.channels {
        bail!(
            "corpus windows are {}×{}, the network expects {}×{}",
            ds.channels,
            ds.window_len,
            input.channels,
            input.len
        );
    }
    let nds = match &ck.norm {
        Some(n) => n.apply(&ds)?,
        None => ds.clone(),
    };
    let ids: Vec<usize> = (0..nds.len()).filter(|&i| nds.examples[i].label.is_some()).collect();
    if ids.is_empty() {
        bail!("{} has no labeled windows to score", data.display());
    }
    // map the corpus' class indices onto the checkpoint's
    let remap: Vec<usize> = ds
        .classes
        .iter()
        .map(|c| ck.classes.iter().position(|k| k == c).with_context(|| format!("class `{c}` is unknown to the checkpoint")))
        .collect::<anyhow::Result<_>>()?;
    let truths: Vec<usize> = nds.labels(&ids)?.into_iter().map(|y| remap[y]).collect();
    let preds = ck.model.predict(&nds.batch(&ids)?)?;
    let cm = confusion(&preds, &truths, ck.classes.len())?;
    std::fs::create_dir_all(out)?;
    write_json(
        &out.join("resolved_config.json"),
        &json!({"checkpoint": checkpoint, "data": data, "overlap": overlap, "out": out}),
    )?;
    let f = metrics_file(&out.join("metrics.csv"), &ck.classes, &cm)?;
    println!("mean F1 {f:.2} on {} windows", ids.len());
    Ok(())
}

/// Runs the first `max_folds` folds; returns the runs and writes per-fold files under `dir`.
fn cross_validate(cfg: &RunConfig, ds: &WindowedDataset, exp: &ExperimentConfig, dir: &Path) -> anyhow::Result<Vec<FoldRun>> {
    let plan = plan_folds(ds, exp)?;
    let n = cfg.max_folds.unwrap_or(plan.folds.len()).min(plan.folds.len());
    let mut runs = Vec::with_capacity(n);
    for (i, fold) in plan.folds.iter().take(n).enumerate() {
        let t0 = Instant::now();
        let run = run_fold(ds, fold, i, exp).with_context(|| format!("fold {i} ({})", fold.test_subject))?;
        let path = dir.join("folds").join(format!("{i}_{}.csv", fold.test_subject));
        metrics_file(&path, &ds.classes, &run.confusion)?;
        eprintln!("  fold {i} {}: mean F1 {:.2} [{:.1}s]", fold.test_subject, run.metrics.mean_f1, t0.elapsed().as_secs_f64());
        runs.push(run);
    }
    Ok(runs)
}

pub fn loso(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = load_run(args)?;
    let ds = load_dataset(&cfg)?;
    let exp = cfg.experiment();
    let runs = cross_validate(&cfg, &ds, &exp, &cfg.out)?;
    let report = crossval_report(
        runs.iter().map(|r| FoldScore { subject: r.test_subject.clone(), metrics: r.metrics.clone() }).collect(),
    )?;
    write_atomic(&cfg.out.join("crossval.csv"), |b| Ok(write_crossval_csv(b, &report)?))?;
    let mut pooled = ConfusionMatrix::zeros(ds.n_classes());
    for r in &runs {
        pooled.merge(&r.confusion)?;
    }
    metrics_file(&cfg.out.join("pooled_metrics.csv"), &ds.classes, &pooled)?;
    if cfg.model_kind == Method::Selftrain {
        write_lines(&cfg.out.join("promotions.csv"), &promotion_lines(runs.iter().map(|r| (r.index, r.fitted.promotions.as_slice()))))?;
    }
    println!("{}: mean F1 {:.2} ± {:.2} over {} folds", cfg.model_kind, report.mean_f1, report.std_f1, runs.len());
    Ok(())
}

pub fn sweep_lambda(args: &RunArgs) -> anyhow::Result<()> {
    let mut cfg = load_run(args)?;
    if cfg.model_kind != Method::Ladder {
        return Err(config_err("model_kind", "sweep-lambda trains ladder networks; set model_kind to `ladder`"));
    }
    let ds = load_dataset(&cfg)?;
    let depth = cfg
        .train_config()
        .parse_spec(FeatureShape { channels: ds.channels, len: ds.window_len }, ds.n_classes())?
        .depth();
    let levels = cfg.sweep_levels.clone().unwrap_or_else(|| (0..=depth).collect());
    if let Some(bad) = levels.iter().find(|&&l| l > depth) {
        return Err(config_err("sweep_levels", format!("level {bad} exceeds the network depth {depth}")));
    }
    let mut lines = vec!["emphasized,lambdas,mean_f1,std_f1".to_string()];
    for &l in &levels {
        cfg.lambdas = emphasis_lambdas(depth, l)?;
        eprintln!("emphasized level {l}: lambdas {:?}", cfg.lambdas);
        let exp = cfg.experiment();
        let runs = cross_validate(&cfg, &ds, &exp, &cfg.out.join(format!("level_{l}")))?;
        let report = crossval_report(
            runs.iter().map(|r| FoldScore { subject: r.test_subject.clone(), metrics: r.metrics.clone() }).collect(),
        )?;
        let lam: Vec<String> = cfg.lambdas.iter().map(|v| v.to_string()).collect();
        lines.push(format!("{l},{},{:.4},{:.4}", lam.join(" "), report.mean_f1, report.std_f1));
        println!("level {l}: mean F1 {:.2}", report.mean_f1);
    }
    write_lines(&cfg.out.join("sweep.csv"), &lines)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "convv:8:5:1:1-maxpool:2:2-fc")]
    spec: String,
    /// Maximum relative error.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Comma-separated model families.
    #[arg(long, default_value = "cnn,encdec,ladder")]
    kinds: String,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    /// Window length in samples.
    #[arg(long, default_value_t = 40)]
    len: usize,
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: std::path::PathBuf,
}

pub fn gradcheck(a: &GradcheckArgs) -> anyhow::Result<()> {
    let kinds: Vec<ModelKind> = a
        .kinds
        .split(',')
        .map(|k| k.trim().parse::<ModelKind>().map_err(|e| config_err("kinds", e.to_string())))
        .collect::<anyhow::Result<_>>()?;
    let mut lines = vec!["kind,param,checked,max_abs_error,max_rel_error,pass".to_string()];
    let mut failed = Vec::new();
    for kind in kinds {
        let setup = GradCheckSetup {
            spec: a.spec.clone(),
            kind,
            input: FeatureShape { channels: a.channels, len: a.len },
            n_classes: a.classes,
            batch: a.batch,
            sigma: a.sigma,
            seed: a.seed,
            epsilon: a.epsilon,
            tol: a.tol,
            ..GradCheckSetup::default()
        };
        let t0 = Instant::now();
        let r = gradcheck_family(&setup).map_err(|e| config_err("spec", e.to_string()))?;
        for p in &r.per_param {
            lines.push(format!(
                "{kind},{},{},{:.3e},{:.3e},{}",
                p.name,
                p.checked,
                p.max_abs_error,
                p.max_rel_error,
                u8::from(p.max_rel_error < a.tol)
            ));
        }
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {kind}: max relative error {:.3e} ({}) [{:.1}s]",
            r.max_rel_error,
            r.worst_param,
            t0.elapsed().as_secs_f64()
        );
        if !r.pass {
            failed.push(kind.to_string());
        }
    }
    std::fs::create_dir_all(&a.out)?;
    write_lines(&a.out.join("gradcheck.csv"), &lines)?;
    if !failed.is_empty() {
        bail!("gradient check failed for {}", failed.join(", "));
    }
    Ok(())
}

pub fn viz_pca(args: &RunArgs, checkpoint: &Path) -> anyhow::Result<()> {
    let cfg = load_run(args)?;
    let ds = load_dataset(&cfg)?;
    let ck = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    if ck.classes != ds.classes {
        bail!("checkpoint classes {:?} differ from the corpus classes {:?}", ck.classes, ds.classes);
    }
    let fold = training_fold(&ds, &cfg.experiment(), cfg.holdout_subject.as_deref())?;
    let nds = match &ck.norm {
        Some(n) => n.apply(&ds)?,
        None => ds.clone(),
    };
    let ids: Vec<usize> = (0..nds.len()).collect();
    let features = ck.model.features(&nds.batch(&ids)?)?;
    let pca = pca_project(&features, 2)?;
    let coords = pca.coords.data();
    let rows: Vec<PcaRow> = ids
        .iter()
        .map(|&i| {
            let e = &ds.examples[i];
            PcaRow {
                example_id: i,
                subject: e.subject.clone(),
                label: e.label.map(|l| ds.classes[l].clone()).unwrap_or_default(),
                is_labeled: fold.labeled_ids.binary_search(&i).is_ok(),
                pc1: coords[2 * i],
                pc2: coords[2 * i + 1],
            }
        })
        .collect();
    write_atomic(&cfg.out.join("pca.csv"), |b| Ok(write_pca_csv(b, &rows)?))?;
    write_json(
        &cfg.out.join("pca_summary.json"),
        &json!({"explained_variance": pca.explained, "total_variance": pca.total_variance, "features": features.shape()[1]}),
    )?;
    println!(
        "wrote {} points; top-2 components explain {:.1}% of the variance",
        rows.len(),
        100.0 * pca.explained.iter().sum::<f64>() / pca.total_variance
    );
    Ok(())
}
