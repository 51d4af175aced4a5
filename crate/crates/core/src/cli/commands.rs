use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use super::layout::{fresh_dir, write_file};
use super::report::write_report;
use super::svg::{heatmap, line_plot, reliability_plot};
use super::{AdaptMode, CliError, ExperimentConfig, Layout, DATA_BUNDLES};
use crate::model::{
    argmax, ensemble_train, finetune_gating, predict, EpochLog, ModelState, ParameterReport, Trainable, INFERENCE_CHUNK,
};
use crate::numerics::{derive_seed, softmax_slice, SeededRng};
use crate::safety::{auroc, ece, per_class_accuracy, risk_coverage, ClassAccuracy, ReliabilityBins, RiskCoverageCurve};
use crate::skeldata::{
    generate_domain, sha256_hex, write_dataset, CorruptionSpec, DatasetBundle, SplitTag, DROP_LEVELS, JITTER_LEVELS,
};
use crate::uq::{
    build_score_table, fit_mahalanobis_with, fit_temperature, mc_dropout_passes, mc_entropy_from_passes,
    pooled_features, MahalanobisParams, ScoreKind, ScoreSources, ScoreTable, TemperatureParam,
};

/// Reference MC-dropout entropy AUROC at 20 passes on the real benchmark;
/// reported next to the synthetic value, never asserted.
const MC_REFERENCE_AUROC_N20: f64 = 0.8108;

fn with_seed(base: &SeededRng, label: &str) -> SeededRng {
    base.substream(label)
}

/// Splits the style-shift bundle by index into adaptation, calibration and
/// test parts. Labels are assigned round-robin, so each part stays balanced.
pub fn style_splits(
    bundle: &DatasetBundle,
    config: &ExperimentConfig,
) -> Result<(DatasetBundle, DatasetBundle, DatasetBundle), CliError> {
    let d = &config.data;
    let (a, c) = (d.style_adapt, d.style_adapt + d.style_calibration);
    if bundle.len() != c + d.style_test {
        return Err(CliError::Artifact(format!(
            "style_target holds {} samples, config expects {}",
            bundle.len(),
            c + d.style_test
        )));
    }
    let s = &bundle.sequences;
    Ok((
        bundle.with_sequences(s[..a].to_vec(), SplitTag::Train),
        bundle.with_sequences(s[a..c].to_vec(), SplitTag::Val),
        bundle.with_sequences(s[c..].to_vec(), SplitTag::Test),
    ))
}

#[derive(Serialize)]
struct BundleSummary {
    name: String,
    samples: usize,
    domain: String,
    coords_sha256: String,
}

pub fn cmd_gen(config: &ExperimentConfig, layout: &Layout, force: bool) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let dir = layout.data_root();
    fresh_dir(&dir, force)?;
    let d = &config.data;
    let (source, style, semantic) = (config.source_spec(), config.style_spec(), config.semantic_spec());
    let root = SeededRng::new(config.seed).substream("data");
    let plan = [
        (&source, d.source_train, SplitTag::Train),
        (&source, d.source_val, SplitTag::Val),
        (&source, d.source_test, SplitTag::Test),
        (
            &style,
            d.style_adapt + d.style_calibration + d.style_test,
            SplitTag::Test,
        ),
        (&semantic, d.semantic_test, SplitTag::Test),
    ];
    let mut summaries = Vec::new();
    for (name, (spec, n, split)) in DATA_BUNDLES.iter().zip(plan) {
        let bundle = generate_domain(spec, n, &with_seed(&root, name), split)?;
        let path = layout.bundle(name);
        write_dataset(&bundle, &path)?;
        let coords = std::fs::read(path.join(crate::skeldata::COORDS_FILE)).map_err(|e| CliError::io(&path, e))?;
        summaries.push(BundleSummary {
            name: name.to_string(),
            samples: bundle.len(),
            domain: spec.kind.tag().to_string(),
            coords_sha256: sha256_hex(&coords),
        });
    }
    write_report(&dir, "gen", config, &summaries, started)?;
    Ok(dir)
}

fn epochs_csv(log: &[EpochLog]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out = String::from("epoch,train_loss,train_accuracy,val_accuracy,val_loss\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch,
            e.train_loss,
            e.train_accuracy,
            opt(e.val_accuracy),
            opt(e.val_loss)
        ));
    }
    out
}

#[derive(Serialize)]
struct MemberSummary {
    member: usize,
    best_epoch: usize,
    val_accuracy: Option<f64>,
    val_loss: Option<f64>,
    parameters: usize,
}

#[derive(Serialize)]
struct TrainResults {
    members: Vec<MemberSummary>,
    /// Largest minus smallest best-epoch validation accuracy.
    val_accuracy_spread: f64,
}

pub fn cmd_train(config: &ExperimentConfig, layout: &Layout, force: bool) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    layout.require(&["source_train", "source_val"], 0)?;
    let train_set = layout.load_bundle("source_train")?;
    let val = layout.load_bundle("source_val")?;
    let dir = layout.train_root();
    fresh_dir(&dir, force)?;
    let outcomes = ensemble_train(
        &config.model_config(),
        &train_set,
        &val,
        &config.train_hyper(),
        config.uq.ensemble_size,
    )?;
    let mut members = Vec::new();
    for (m, o) in outcomes.iter().enumerate() {
        let path = layout.member(m);
        o.state.save(&path)?;
        write_file(&path.join("epochs.csv"), epochs_csv(&o.log))?;
        let best = &o.log[o.best_epoch];
        members.push(MemberSummary {
            member: m,
            best_epoch: o.best_epoch,
            val_accuracy: best.val_accuracy,
            val_loss: best.val_loss,
            parameters: o.state.parameter_count(),
        });
    }
    let accs: Vec<f64> = members.iter().filter_map(|m| m.val_accuracy).collect();
    let spread =
        accs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - accs.iter().copied().fold(f64::INFINITY, f64::min);
    write_report(
        &dir,
        "train",
        config,
        &TrainResults {
            members,
            val_accuracy_spread: spread,
        },
        started,
    )?;
    Ok(dir)
}

/// Metrics of one score table.
#[derive(Serialize)]
struct DomainSummary {
    samples: usize,
    accuracy: f64,
    mean_msp: f64,
    /// Risk and wrong-spoke rate at coverage 0.5 and 1.0, ranked by MSP.
    risk_at_50: f64,
    wsr_at_50: f64,
    risk_at_100: f64,
    ece_msp: f64,
    ece_msp_temp: Option<f64>,
    per_class: Vec<ClassAccuracy>,
    risk_coverage: BTreeMap<String, RiskCoverageCurve>,
}

fn requested_scores(table: &ScoreTable) -> Vec<ScoreKind> {
    ScoreKind::ALL
        .into_iter()
        .filter(|&k| table.rows.first().is_some_and(|r| !r.value(k).is_nan()))
        .collect()
}

/// Summarizes `table` and writes its CSV, curves, reliability bins and plots
/// under `dir` with `key` as the file stem.
fn summarize(
    config: &ExperimentConfig,
    dir: &std::path::Path,
    key: &str,
    table: &ScoreTable,
    class_names: &[String],
) -> Result<DomainSummary, CliError> {
    table
        .write(&dir.join("scores").join(format!("{key}.csv")))
        .or_else(|_| write_file(&dir.join("scores").join(format!("{key}.csv")), table.to_csv()))?;
    let correct = table.correct();
    let mut curves = BTreeMap::new();
    for kind in requested_scores(table) {
        let confidence: Vec<f64> = table.ood_scores(kind).iter().map(|s| -s).collect();
        let curve = risk_coverage(&confidence, &correct, &config.metrics.coverage_grid)?;
        if curve.wsr_identity_error >= 1e-12 {
            return Err(CliError::Numerical(format!(
                "WSR identity broken for {key}/{}",
                kind.name()
            )));
        }
        write_file(
            &dir.join("curves").join(format!("{key}_{}.csv", kind.name())),
            curve.to_csv(),
        )?;
        curves.insert(kind.name().to_string(), curve);
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = curves
        .iter()
        .map(|(name, c)| (name.clone(), c.points.iter().map(|p| (p.kappa, p.risk)).collect()))
        .collect();
    write_file(
        &dir.join("plots").join(format!("risk_coverage_{key}.svg")),
        line_plot(&format!("Risk vs coverage: {key}"), "coverage", "risk", &series),
    )?;
    let msp = table.column(ScoreKind::Msp);
    let reliability: ReliabilityBins = ece(&msp, &correct, config.metrics.bins)?;
    write_file(
        &dir.join("reliability").join(format!("{key}.csv")),
        reliability.to_csv(),
    )?;
    let bars: Vec<(f64, f64, f64, usize)> = reliability
        .bins
        .iter()
        .map(|b| (b.lo, b.hi, b.accuracy, b.count))
        .collect();
    write_file(
        &dir.join("plots").join(format!("reliability_{key}.svg")),
        reliability_plot(&format!("Reliability: {key}"), &bars),
    )?;
    let ece_msp_temp = if curves.contains_key(ScoreKind::MspTemp.name()) {
        Some(ece(&table.column(ScoreKind::MspTemp), &correct, config.metrics.bins)?.ece)
    } else {
        None
    };
    let msp_curve = &curves[ScoreKind::Msp.name()];
    let at = |k: f64| {
        msp_curve
            .at(k)
            .ok_or_else(|| CliError::Config(format!("coverage grid lacks {k}")))
    };
    let preds: Vec<usize> = table.rows.iter().map(|r| r.pred).collect();
    let labels: Vec<usize> = table.rows.iter().map(|r| r.label).collect();
    Ok(DomainSummary {
        samples: table.len(),
        accuracy: table.accuracy(),
        mean_msp: msp.iter().sum::<f64>() / msp.len().max(1) as f64,
        risk_at_50: at(0.5)?.risk,
        wsr_at_50: at(0.5)?.wsr,
        risk_at_100: at(1.0)?.risk,
        ece_msp: reliability.ece,
        ece_msp_temp,
        per_class: per_class_accuracy(&preds, &labels, class_names)?,
        risk_coverage: curves,
    })
}

#[derive(Serialize)]
struct AurocEntry {
    value: f64,
    /// Below 0.5: the score ranks in-distribution samples as more
    /// out-of-distribution. Reported raw, never inverted.
    below_chance: bool,
}

fn auroc_table(id: &ScoreTable, ood: &ScoreTable) -> Result<BTreeMap<String, AurocEntry>, CliError> {
    let mut out = BTreeMap::new();
    for kind in requested_scores(id) {
        let value = auroc(&id.ood_scores(kind), &ood.ood_scores(kind))?;
        out.insert(
            kind.name().to_string(),
            AurocEntry {
                value,
                below_chance: value < 0.5,
            },
        );
    }
    Ok(out)
}

fn fit_source_temperature(model: &ModelState, val: &DatasetBundle) -> Result<TemperatureParam, CliError> {
    let logits = predict(model, &val.sequences, INFERENCE_CHUNK)?.logits;
    Ok(fit_temperature(logits.data(), &val.labels(), model.config.classes)?)
}

fn fit_source_mahalanobis(
    config: &ExperimentConfig,
    model: &ModelState,
    train_set: &DatasetBundle,
) -> Result<MahalanobisParams, CliError> {
    let feats = pooled_features(model, &train_set.sequences, config.uq.features)?;
    Ok(fit_mahalanobis_with(
        feats.data(),
        &train_set.labels(),
        model.config.classes,
        feats.shape()[1],
        config.uq.shrinkage,
    )?)
}

#[derive(Serialize)]
struct EvalResults {
    temperature: TemperatureParam,
    mahalanobis_shrinkage: f64,
    mc_passes: usize,
    ensemble_size: usize,
    domains: BTreeMap<String, DomainSummary>,
    /// Per target, per score: AUROC of source test (ID) against the target.
    auroc: BTreeMap<String, BTreeMap<String, AurocEntry>>,
}

/// Domain keys, MC stream labels and bundles scored by `eval`.
const EVAL_DOMAINS: [&str; 3] = ["source_test", "style_test", "semantic_test"];

fn mc_stream(config: &ExperimentConfig, key: &str) -> SeededRng {
    SeededRng::new(derive_seed(config.seed, "mc")).substream(key)
}

pub fn cmd_eval(config: &ExperimentConfig, layout: &Layout, force: bool) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let k = config.uq.ensemble_size;
    layout.require(&DATA_BUNDLES, k)?;
    let members = (0..k).map(|m| layout.load_member(m)).collect::<Result<Vec<_>, _>>()?;
    let model = &members[0];
    let train_set = layout.load_bundle("source_train")?;
    let val = layout.load_bundle("source_val")?;
    let (_, _, style_test) = style_splits(&layout.load_bundle("style_target")?, config)?;
    let bundles = [
        layout.load_bundle("source_test")?,
        style_test,
        layout.load_bundle("semantic_target")?,
    ];
    let dir = layout.eval_root();
    fresh_dir(&dir, force)?;

    let temperature = fit_source_temperature(model, &val)?;
    let mahalanobis = fit_source_mahalanobis(config, model, &train_set)?;
    write_file(
        &dir.join("temperature.json"),
        serde_json::to_string_pretty(&temperature).expect("serializes"),
    )?;
    write_file(
        &dir.join("mahalanobis.json"),
        serde_json::to_string(&mahalanobis).expect("serializes"),
    )?;
    let sources = ScoreSources {
        model,
        requested: &ScoreKind::ALL,
        ensemble: Some(&members),
        temperature: Some(&temperature),
        mahalanobis: Some(&mahalanobis),
        mc_passes: Some(config.uq.mc_passes),
        energy_temperature: config.uq.energy_temperature,
        features: config.uq.features,
    };
    let mut tables = Vec::new();
    let mut domains = BTreeMap::new();
    for (key, bundle) in EVAL_DOMAINS.iter().zip(&bundles) {
        let table = build_score_table(&sources, bundle, &mc_stream(config, key))?;
        domains.insert(
            key.to_string(),
            summarize(config, &dir, key, &table, &bundle.class_names)?,
        );
        tables.push(table);
    }
    let mut aurocs = BTreeMap::new();
    for (key, table) in EVAL_DOMAINS.iter().zip(&tables).skip(1) {
        aurocs.insert(key.to_string(), auroc_table(&tables[0], table)?);
    }
    write_report(
        &dir,
        "eval",
        config,
        &EvalResults {
            temperature,
            mahalanobis_shrinkage: mahalanobis.shrinkage,
            mc_passes: config.uq.mc_passes,
            ensemble_size: k,
            domains,
            auroc: aurocs,
        },
        started,
    )?;
    Ok(dir)
}

#[derive(Serialize)]
struct AdaptSnapshot {
    accuracy: f64,
    risk_at_50: f64,
    wsr_at_50: f64,
    ece_msp: f64,
}

impl From<&DomainSummary> for AdaptSnapshot {
    fn from(d: &DomainSummary) -> Self {
        Self {
            accuracy: d.accuracy,
            risk_at_50: d.risk_at_50,
            wsr_at_50: d.wsr_at_50,
            ece_msp: d.ece_msp,
        }
    }
}

#[derive(Serialize)]
struct AdaptResults {
    mode: AdaptMode,
    adapt_samples: usize,
    calibration_samples: usize,
    parameters: ParameterReport,
    epochs: Vec<EpochLog>,
    zero_shot: AdaptSnapshot,
    adapted: AdaptSnapshot,
    /// Adapted accuracy minus zero-shot accuracy, as a fraction.
    accuracy_change: f64,
    /// Zero-shot WSR@50% minus adapted WSR@50%.
    wsr_at_50_reduction: f64,
    /// Temperature refitted on the held-out calibration part of the target.
    refit_temperature: TemperatureParam,
    ece_after_temperature: f64,
    target_test: DomainSummary,
    source_test: DomainSummary,
    /// Source test (ID) against the target test, for the adapted model.
    auroc: BTreeMap<String, AurocEntry>,
}

const ADAPTED_SCORES: [ScoreKind; 4] = [
    ScoreKind::Msp,
    ScoreKind::MspTemp,
    ScoreKind::Energy,
    ScoreKind::Mahalanobis,
];

pub fn cmd_adapt(
    config: &ExperimentConfig,
    layout: &Layout,
    mode: AdaptMode,
    force: bool,
) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    layout.require(&["source_train", "source_test", "style_target"], 1)?;
    let source_model = layout.load_member(0)?;
    let (adapt_set, calibration, style_test) = style_splits(&layout.load_bundle("style_target")?, config)?;
    let train_set = layout.load_bundle("source_train")?;
    let source_test = layout.load_bundle("source_test")?;
    let dir = layout.adapt(mode);
    fresh_dir(&dir, force)?;

    let zero_shot_sources = ScoreSources {
        model: &source_model,
        requested: &[ScoreKind::Msp, ScoreKind::Energy],
        ensemble: None,
        temperature: None,
        mahalanobis: None,
        mc_passes: None,
        energy_temperature: config.uq.energy_temperature,
        features: config.uq.features,
    };
    let rng = SeededRng::new(derive_seed(config.seed, "adapt/eval"));
    let zero_table = build_score_table(&zero_shot_sources, &style_test, &rng)?;
    let zero = summarize(
        config,
        &dir,
        "style_test_zero_shot",
        &zero_table,
        &style_test.class_names,
    )?;

    let trainable = match mode {
        AdaptMode::Frozen => Trainable::GateOnly,
        AdaptMode::Finetuned => Trainable::GateAndBackbone,
    };
    let (outcome, parameters) = finetune_gating(&source_model, &adapt_set, &config.adapt_hyper(trainable))?;
    let adapted = outcome.state;
    adapted.save(&dir.join("model"))?;
    write_file(&dir.join("epochs.csv"), epochs_csv(&outcome.log))?;

    let refit = {
        let logits = predict(&adapted, &calibration.sequences, INFERENCE_CHUNK)?.logits;
        fit_temperature(logits.data(), &calibration.labels(), adapted.config.classes)?
    };
    let mahalanobis = fit_source_mahalanobis(config, &adapted, &train_set)?;
    let sources = ScoreSources {
        model: &adapted,
        requested: &ADAPTED_SCORES,
        temperature: Some(&refit),
        mahalanobis: Some(&mahalanobis),
        ..zero_shot_sources
    };
    let target_table = build_score_table(&sources, &style_test, &rng)?;
    let source_table = build_score_table(&sources, &source_test, &rng)?;
    let target = summarize(config, &dir, "style_test", &target_table, &style_test.class_names)?;
    let source = summarize(config, &dir, "source_test", &source_table, &source_test.class_names)?;
    let ece_after_temperature = target.ece_msp_temp.expect("temperature column requested");
    let results = AdaptResults {
        mode,
        adapt_samples: adapt_set.len(),
        calibration_samples: calibration.len(),
        parameters,
        epochs: outcome.log,
        accuracy_change: target.accuracy - zero.accuracy,
        wsr_at_50_reduction: zero.wsr_at_50 - target.wsr_at_50,
        zero_shot: (&zero).into(),
        adapted: (&target).into(),
        refit_temperature: refit,
        ece_after_temperature,
        auroc: auroc_table(&source_table, &target_table)?,
        target_test: target,
        source_test: source,
    };
    write_report(&dir, &format!("adapt-{}", mode.name()), config, &results, started)?;
    Ok(dir)
}

#[derive(Serialize)]
struct CorruptionCell {
    jitter_sigma: f64,
    drop_k: usize,
    accuracy: f64,
    mean_msp: f64,
}

#[derive(Serialize)]
struct CorruptResults {
    cells: Vec<CorruptionCell>,
    clean_accuracy: f64,
    clean_mean_msp: f64,
    /// Largest accuracy increase between consecutive jitter levels at k = 0.
    max_accuracy_increase_along_jitter: f64,
    worst_cell: (f64, usize),
    /// Clean mean MSP minus mean MSP at the lowest-accuracy cell.
    worst_cell_msp_drop: f64,
}

pub fn cmd_corrupt(config: &ExperimentConfig, layout: &Layout, force: bool) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    layout.require(&["source_test"], 1)?;
    let model = layout.load_member(0)?;
    let test = layout.load_bundle("source_test")?;
    let dir = layout.corrupt_root();
    fresh_dir(&dir, force)?;
    let seed = derive_seed(config.seed, "corrupt");
    let classes = model.config.classes;
    let mut cells = Vec::new();
    for &sigma in &JITTER_LEVELS {
        for &k in &DROP_LEVELS {
            let spec = CorruptionSpec::new(sigma, k, seed)?;
            let corrupted = test
                .sequences
                .iter()
                .enumerate()
                .map(|(i, s)| spec.apply(s, i))
                .collect::<Result<Vec<_>, _>>()?;
            let logits = predict(&model, &corrupted, INFERENCE_CHUNK)?.logits;
            let (mut hits, mut msp_sum) = (0usize, 0.0);
            for (row, s) in logits.data().chunks(classes).zip(&corrupted) {
                hits += usize::from(argmax(row) == s.label);
                msp_sum += softmax_slice(row).into_iter().fold(0.0, f64::max);
            }
            let n = corrupted.len() as f64;
            cells.push(CorruptionCell {
                jitter_sigma: sigma,
                drop_k: k,
                accuracy: hits as f64 / n,
                mean_msp: msp_sum / n,
            });
        }
    }
    let mut csv = String::from("jitter_sigma,drop_k,accuracy,mean_msp\n");
    for c in &cells {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            c.jitter_sigma, c.drop_k, c.accuracy, c.mean_msp
        ));
    }
    write_file(&dir.join("grid.csv"), csv)?;
    let rows: Vec<String> = JITTER_LEVELS.iter().map(|s| format!("sigma {s}")).collect();
    let cols: Vec<String> = DROP_LEVELS.iter().map(|k| format!("k={k}")).collect();
    let values: Vec<Vec<f64>> = cells
        .chunks(DROP_LEVELS.len())
        .map(|r| r.iter().map(|c| c.accuracy).collect())
        .collect();
    write_file(
        &dir.join("heatmap.svg"),
        heatmap(
            "Accuracy under corruption",
            &rows,
            &cols,
            &values,
            "dropped joints per frame",
            "jitter",
        ),
    )?;
    let clean = &cells[0];
    let along: Vec<f64> = cells.iter().filter(|c| c.drop_k == 0).map(|c| c.accuracy).collect();
    let max_increase = along.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let worst = cells
        .iter()
        .rev()
        .min_by(|a, b| a.accuracy.total_cmp(&b.accuracy))
        .expect("grid is non-empty");
    let results = CorruptResults {
        clean_accuracy: clean.accuracy,
        clean_mean_msp: clean.mean_msp,
        max_accuracy_increase_along_jitter: max_increase,
        worst_cell: (worst.jitter_sigma, worst.drop_k),
        worst_cell_msp_drop: clean.mean_msp - worst.mean_msp,
        cells,
    };
    write_report(&dir, "corrupt", config, &results, started)?;
    Ok(dir)
}

#[derive(Serialize)]
struct AblationEntry {
    passes: usize,
    /// Risk on the style-shift target at coverage 0.5, ranked by entropy.
    risk_at_50: f64,
    wsr_at_50: f64,
    entropy_auroc: f64,
    curve: RiskCoverageCurve,
}

#[derive(Serialize)]
struct AblationResults {
    entries: Vec<AblationEntry>,
    /// Largest minus smallest risk at 0.5 across pass counts.
    risk_at_50_spread: f64,
    reference_auroc_n20: f64,
}

pub fn cmd_ablate_mc(config: &ExperimentConfig, layout: &Layout, force: bool) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    layout.require(&["source_test", "style_target"], 1)?;
    let model = layout.load_member(0)?;
    let source_test = layout.load_bundle("source_test")?;
    let (_, _, style_test) = style_splits(&layout.load_bundle("style_target")?, config)?;
    let dir = layout.ablate_root();
    fresh_dir(&dir, force)?;
    let most = *config.uq.mc_ablation.iter().max().expect("validated non-empty");
    // Same streams as eval, so the column at eval's pass count reappears here.
    let src_passes = mc_dropout_passes(&model, &source_test.sequences, most, &mc_stream(config, "source_test"))?;
    let sty_passes = mc_dropout_passes(&model, &style_test.sequences, most, &mc_stream(config, "style_test"))?;
    let logits = predict(&model, &style_test.sequences, INFERENCE_CHUNK)?.logits;
    let correct: Vec<bool> = logits
        .data()
        .chunks(model.config.classes)
        .zip(&style_test.sequences)
        .map(|(row, s)| argmax(row) == s.label)
        .collect();
    let mut entries = Vec::new();
    for &n in &config.uq.mc_ablation {
        let (_, h_src) = mc_entropy_from_passes(&src_passes[..n])?;
        let (_, h_sty) = mc_entropy_from_passes(&sty_passes[..n])?;
        let confidence: Vec<f64> = h_sty.iter().map(|h| -h).collect();
        let curve = risk_coverage(&confidence, &correct, &config.metrics.coverage_grid)?;
        write_file(&dir.join("curves").join(format!("passes_{n}.csv")), curve.to_csv())?;
        let half = curve
            .at(0.5)
            .ok_or_else(|| CliError::Config("coverage grid lacks 0.5".into()))?;
        entries.push(AblationEntry {
            passes: n,
            risk_at_50: half.risk,
            wsr_at_50: half.wsr,
            entropy_auroc: auroc(&h_src, &h_sty)?,
            curve: curve.clone(),
        });
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = entries
        .iter()
        .map(|e| {
            (
                format!("N={}", e.passes),
                e.curve.points.iter().map(|p| (p.kappa, p.risk)).collect(),
            )
        })
        .collect();
    write_file(
        &dir.join("risk_coverage.svg"),
        line_plot("MC-dropout entropy: risk vs coverage", "coverage", "risk", &series),
    )?;
    let risks: Vec<f64> = entries.iter().map(|e| e.risk_at_50).collect();
    let spread =
        risks.iter().copied().fold(f64::NEG_INFINITY, f64::max) - risks.iter().copied().fold(f64::INFINITY, f64::min);
    write_report(
        &dir,
        "ablate-mc",
        config,
        &AblationResults {
            entries,
            risk_at_50_spread: spread,
            reference_auroc_n20: MC_REFERENCE_AUROC_N20,
        },
        started,
    )?;
    Ok(dir)
}
