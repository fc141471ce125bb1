//! Batch-run command implementations behind the `eegbench` binary:
//! synthesis, EDF ingestion, LOSO/within-subject runs, ablations, temporal
//! generalization, the statistics battery, and summary reporting.
//!
//! Every command stamps its outputs with the config hash and seed; two
//! invocations with identical config and seed produce byte-identical files
//! at any parallelism degree.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::data::EpochSet;
use crate::error::{Error, Result};
use crate::harness::{self, curve, tgm, AuditVerdicts};
use crate::ingest;
use crate::report::{write_csv, Cell, RunMeta};
use crate::stats::{self, Alternative};
use crate::synth;
use crate::{analyses, preprocess};

/// Load the dataset named by `[data]` (synth, archive, or BIDS tree).
pub fn load_epochs(config: &RunConfig) -> Result<EpochSet> {
    match config.data.source.as_str() {
        "synth" => Ok(synth::generate(&config.synth)?.0),
        "archive" => {
            let prefix = config.data.archive.as_ref().unwrap();
            let (epochs, _manifest) = ingest::read_archive(prefix)?;
            Ok(epochs)
        }
        "bids" => {
            let root = config
                .effective_bids_root()
                .ok_or_else(|| Error::Config("no data.bids_root configured".into()))?;
            ingest_tree(&root, config).map(|(epochs, _)| epochs)
        }
        other => Err(Error::Config(format!("unknown data.source {other:?}"))),
    }
}

/// Scan a BIDS-like tree, preprocess every recording, and merge subjects.
/// Returns the pooled epochs and per-subject kept/rejected counts.
pub fn ingest_tree(
    root: &Path,
    config: &RunConfig,
) -> Result<(EpochSet, Vec<(String, usize, usize)>)> {
    let params = config.preprocess.to_params();
    let found = ingest::scan_bids(root)?;
    if !config.data.expected_subjects.is_empty() {
        for expected in &config.data.expected_subjects {
            if !found.iter().any(|(name, _)| name == expected) {
                eprintln!("warning: expected subject {expected} not found under {}", root.display());
            }
        }
    }
    let mut sets = Vec::new();
    let mut counts = Vec::new();
    for (subject, files) in &found {
        if files.is_empty() {
            eprintln!("warning: subject {subject} has no EDF files");
            continue;
        }
        let mut subject_sets = Vec::new();
        let mut rejected_total = 0usize;
        for (rec_id, file) in files.iter().enumerate() {
            let bytes = std::fs::read(file)?;
            let rec = ingest::parse_edf(&bytes)?;
            let mut descriptor = preprocess::PipelineDescriptor::default();
            let (epochs, rejected) = preprocess::preprocess_recording(
                &rec,
                &params,
                &config.data.label_map,
                subject,
                rec_id as u32,
                &mut descriptor,
            )?;
            descriptor.verify_order()?;
            rejected_total += rejected.len();
            subject_sets.push(epochs);
        }
        let merged = ingest::merge_epoch_sets(&subject_sets)?;
        counts.push((subject.clone(), merged.n_trials(), rejected_total));
        sets.push(merged);
    }
    let pooled = ingest::merge_epoch_sets(&sets)?;
    Ok((pooled, counts))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

pub fn cmd_synth(config_path: &Path, out_prefix: &Path, edf_root: Option<&Path>) -> Result<()> {
    let (config, hash) = RunConfig::load(config_path)?;
    let (epochs, _truth) = synth::generate(&config.synth)?;
    ingest::write_archive(&epochs, &hash, out_prefix)?;
    println!(
        "wrote archive {} ({} trials × {} channels × {} samples)",
        out_prefix.display(),
        epochs.n_trials(),
        epochs.n_channels(),
        epochs.n_samples()
    );
    if let Some(root) = edf_root {
        synth::make_edf_fixture(&config.synth, root)?;
        println!("wrote EDF fixture under {}", root.display());
    }
    Ok(())
}

pub fn cmd_ingest(root: &Path, out_prefix: &Path, config_path: &Path) -> Result<()> {
    let (config, hash) = RunConfig::load(config_path)?;
    let (epochs, counts) = ingest_tree(root, &config)?;
    ingest::write_archive(&epochs, &hash, out_prefix)?;
    for (subject, kept, rejected) in &counts {
        println!("{subject}: {kept} epochs kept, {rejected} rejected");
    }
    println!(
        "wrote archive {} ({} trials total)",
        out_prefix.display(),
        epochs.n_trials()
    );
    Ok(())
}

#[derive(Serialize)]
struct AuditFile {
    config_hash: String,
    seed: u64,
    per_model: BTreeMap<String, AuditVerdicts>,
}

pub fn cmd_run(config_path: &Path, out_dir: &Path, parallel: Option<usize>) -> Result<()> {
    let (config, hash) = RunConfig::load(config_path)?;
    with_pool(parallel, || run_to_dir(&config, &hash, out_dir))
}

/// Evaluate a parsed config into a results directory (the `run` command
/// body, also the entry point for foreign-language bindings).
pub fn run_to_dir(config: &RunConfig, hash: &str, out_dir: &Path) -> Result<()> {
    run_all(config, hash, out_dir)
}

fn with_pool<T>(parallel: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    match parallel {
        None => f(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
            pool.install(f)
        }
    }
}

fn run_all(config: &RunConfig, hash: &str, out_dir: &Path) -> Result<()> {
    let epochs = load_epochs(config)?;
    let meta = RunMeta {
        config_hash: hash.to_string(),
        seed: config.eval_seed(),
    };
    std::fs::create_dir_all(out_dir)?;

    match config.eval.protocol.as_str() {
        "within_subject" => {
            let mut rows = Vec::new();
            for model in config.model_list() {
                let pipeline = config.pipeline_for(model);
                let report = harness::within_subject_cv(&epochs, config.eval.k_folds, &pipeline)?;
                for s in &report.per_subject {
                    rows.push(vec![
                        Cell::from(model.name()),
                        Cell::from(s.subject.clone()),
                        Cell::from(s.mean),
                        Cell::from(s.sd),
                    ]);
                }
                for (subject, reason) in &report.skipped {
                    eprintln!("warning: skipped {subject}: {reason}");
                }
            }
            write_csv(
                &out_dir.join("within_subject.csv"),
                &meta,
                &["model", "subject", "balanced_acc_mean", "balanced_acc_sd"],
                &rows,
            )?;
        }
        _ => {
            let mut result_rows = Vec::new();
            let mut prediction_rows = Vec::new();
            let mut audit = AuditFile {
                config_hash: hash.to_string(),
                seed: config.eval_seed(),
                per_model: BTreeMap::new(),
            };
            for model in config.model_list() {
                let pipeline = config.pipeline_for(model);
                let run = harness::loso(&epochs, &pipeline)?;
                for fold in &run.folds {
                    let subject = epochs.subject_names[fold.test_subject].clone();
                    result_rows.push(vec![
                        Cell::from(model.name()),
                        Cell::from(subject.clone()),
                        Cell::from(fold.balanced_accuracy),
                        Cell::from(fold.macro_f1),
                    ]);
                    for (i, (&t, &p)) in
                        fold.y_true.iter().zip(fold.y_pred.iter()).enumerate()
                    {
                        prediction_rows.push(vec![
                            Cell::from(model.name()),
                            Cell::from(subject.clone()),
                            Cell::from(i),
                            Cell::from(t),
                            Cell::from(p),
                        ]);
                    }
                }
                let confusion = run.total_confusion();
                write_confusion(&out_dir.join(format!("confusion_{}.csv", model.name())), &meta, &confusion)?;
                audit.per_model.insert(model.name().to_string(), run.verdicts.clone());
            }
            write_csv(
                &out_dir.join("results.csv"),
                &meta,
                &["model", "fold_subject", "balanced_acc", "macro_f1"],
                &result_rows,
            )?;
            write_csv(
                &out_dir.join("predictions.csv"),
                &meta,
                &["model", "fold_subject", "trial", "y_true", "y_pred"],
                &prediction_rows,
            )?;
            let json = serde_json::to_string_pretty(&audit)
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            std::fs::write(out_dir.join("audit.json"), json)?;
        }
    }
    println!("wrote results under {}", out_dir.display());
    Ok(())
}

fn write_confusion(path: &Path, meta: &RunMeta, confusion: &ndarray::Array2<f64>) -> Result<()> {
    let k = confusion.nrows();
    let norm = harness::normalize_rows(confusion);
    let mut columns: Vec<String> = vec!["true_class".into()];
    for c in 0..k {
        columns.push(format!("count_{c}"));
    }
    for c in 0..k {
        columns.push(format!("norm_{c}"));
    }
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut rows = Vec::with_capacity(k);
    for r in 0..k {
        let mut row: Vec<Cell> = vec![Cell::from(r)];
        for c in 0..k {
            row.push(Cell::from(confusion[[r, c]]));
        }
        for c in 0..k {
            row.push(Cell::from(norm[[r, c]]));
        }
        rows.push(row);
    }
    write_csv(path, meta, &column_refs, &rows)
}

pub fn cmd_ablate(config_path: &Path, axis: &str, out_dir: &Path, parallel: Option<usize>) -> Result<()> {
    let (config, hash) = RunConfig::load(config_path)?;
    with_pool(parallel, || {
        let epochs = load_epochs(&config)?;
        let meta = RunMeta {
            config_hash: hash.clone(),
            seed: config.eval_seed(),
        };
        let base = config.pipeline_for(config.model.kind);
        let grid = build_grid(axis, &config, &epochs)?;
        let rows = curve::ablation_run(&epochs, &grid, &base)?;
        let csv_rows: Vec<Vec<Cell>> = rows
            .iter()
            .map(|r| {
                vec![
                    Cell::from(r.name.clone()),
                    Cell::from(r.mean),
                    Cell::from(r.sd),
                    Cell::from(r.delta_vs_chance),
                ]
            })
            .collect();
        std::fs::create_dir_all(out_dir)?;
        write_csv(
            &out_dir.join(format!("ablation_{axis}.csv")),
            &meta,
            &["name", "acc_mean", "acc_sd", "delta_vs_chance"],
            &csv_rows,
        )?;
        println!("wrote ablation_{axis}.csv under {}", out_dir.display());
        Ok(())
    })
}

fn build_grid(
    axis: &str,
    config: &RunConfig,
    epochs: &EpochSet,
) -> Result<Vec<curve::AblationPoint>> {
    use crate::data::FeatureFamily::*;
    let all = vec![Bandpower, De, Hjorth, Temporal];
    Ok(match axis {
        "feature_family" => vec![
            curve::AblationPoint::FeatureFamily {
                name: "de".into(),
                families: vec![De],
            },
            curve::AblationPoint::FeatureFamily {
                name: "bandpower".into(),
                families: vec![Bandpower],
            },
            curve::AblationPoint::FeatureFamily {
                name: "hjorth".into(),
                families: vec![Hjorth],
            },
            curve::AblationPoint::FeatureFamily {
                name: "temporal".into(),
                families: vec![Temporal],
            },
            curve::AblationPoint::FeatureFamily {
                name: "all".into(),
                families: all,
            },
        ],
        "time_window" => config
            .analyses
            .time_windows
            .iter()
            .map(|&(a, b)| curve::AblationPoint::TimeWindow {
                name: format!("{a}s_{b}s"),
                window: (a, b),
            })
            .collect(),
        "channel_region" => {
            let mut grid: Vec<curve::AblationPoint> = config
                .analyses
                .regions
                .iter()
                .map(|(name, channels)| curve::AblationPoint::ChannelRegion {
                    name: name.clone(),
                    channels: channels.clone(),
                })
                .collect();
            grid.push(curve::AblationPoint::ChannelRegion {
                name: "full".into(),
                channels: epochs.channel_names.clone(),
            });
            grid
        }
        "pca" => {
            let mut grid = vec![
                curve::AblationPoint::FeatureFamily {
                    name: "de_none".into(),
                    families: vec![De],
                },
                curve::AblationPoint::FeatureFamily {
                    name: "full_none".into(),
                    families: all.clone(),
                },
            ];
            for &k in &config.analyses.pca_grid {
                grid.push(curve::AblationPoint::Pca {
                    name: format!("de_pca{k}"),
                    families: vec![De],
                    k,
                });
                grid.push(curve::AblationPoint::Pca {
                    name: format!("full_pca{k}"),
                    families: all.clone(),
                    k,
                });
            }
            grid
        }
        other => {
            return Err(Error::Config(format!(
                "unknown ablation axis {other:?} (feature_family|time_window|channel_region|pca)"
            )))
        }
    })
}

pub fn cmd_tgm(config_path: &Path, out_dir: &Path, parallel: Option<usize>) -> Result<()> {
    let (config, hash) = RunConfig::load(config_path)?;
    with_pool(parallel, || {
        let epochs = load_epochs(&config)?;
        let meta = RunMeta {
            config_hash: hash.clone(),
            seed: config.eval_seed(),
        };
        let result = tgm::tgm(&epochs, config.analyses.tgm_step, config.eval_seed())?;
        let t = result.times.len();
        let mut columns: Vec<String> = vec!["t_train_s".into()];
        for time in &result.times {
            columns.push(crate::report::fmt_g(*time));
        }
        let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
        let mut rows = Vec::with_capacity(t);
        for i in 0..t {
            let mut row: Vec<Cell> = vec![Cell::from(result.times[i])];
            for j in 0..t {
                row.push(Cell::from(result.matrix[[i, j]]));
            }
            rows.push(row);
        }
        std::fs::create_dir_all(out_dir)?;
        write_csv(&out_dir.join("tgm.csv"), &meta, &column_refs, &rows)?;
        let (peak, acc) = result.diagonal_peak();
        println!(
            "wrote tgm.csv ({t}×{t}); diagonal peak at {} s (balanced acc {})",
            crate::report::fmt_g(result.times[peak]),
            crate::report::fmt_g(acc)
        );
        Ok(())
    })
}

pub fn cmd_stats(results_dir: &Path, n_perm: usize, seed: u64, chance: Option<f64>) -> Result<()> {
    let (header, _cols, rows) = crate::report::read_csv(&results_dir.join("results.csv"))?;
    let meta = meta_from_header(&header, seed);

    // model → (subject → balanced accuracy)
    let mut by_model: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for row in &rows {
        if row.len() >= 3 {
            let acc: f64 = row[2].parse().map_err(|_| {
                Error::Invalid(format!("results.csv: bad accuracy {:?}", row[2]))
            })?;
            by_model
                .entry(row[0].clone())
                .or_default()
                .insert(row[1].clone(), acc);
        }
    }
    if by_model.is_empty() {
        return Err(Error::Empty("results.csv has no rows".into()));
    }

    let (_, _, pred_rows) = crate::report::read_csv(&results_dir.join("predictions.csv"))?;
    // model → fold_subject → (y_true, y_pred)
    let mut preds: BTreeMap<String, BTreeMap<String, stats::FoldPredictions>> = BTreeMap::new();
    let mut max_class = 0usize;
    for row in &pred_rows {
        if row.len() >= 5 {
            let t: usize = row[3].parse().unwrap_or(0);
            let p: usize = row[4].parse().unwrap_or(0);
            max_class = max_class.max(t).max(p);
            let fold = preds
                .entry(row[0].clone())
                .or_default()
                .entry(row[1].clone())
                .or_insert_with(|| stats::FoldPredictions {
                    y_true: Vec::new(),
                    y_pred: Vec::new(),
                });
            fold.y_true.push(t);
            fold.y_pred.push(p);
        }
    }
    let n_classes = max_class + 1;
    let chance = chance.unwrap_or(1.0 / n_classes as f64);

    let models: Vec<String> = by_model.keys().cloned().collect();
    let m = models.len();
    let mut out_rows: Vec<Vec<Cell>> = Vec::new();
    let push_report = |rows: &mut Vec<Vec<Cell>>, name: String, r: &stats::StatReport| {
        rows.push(vec![
            Cell::from(name),
            Cell::from(r.statistic_label.clone()),
            Cell::from(r.statistic),
            Cell::from(r.p_raw),
            Cell::from(r.p_corrected),
            Cell::from(format!("{}", r.correction)),
            Cell::from(r.m),
        ]);
    };

    // Per-model Wilcoxon against chance, Bonferroni over the model count.
    for model in &models {
        let accs: Vec<f64> = by_model[model].values().cloned().collect();
        let r = stats::wilcoxon_signed_rank(&accs, chance, Alternative::OneSidedGreater)?
            .with_bonferroni(m);
        push_report(&mut out_rows, format!("wilcoxon_vs_chance[{model}]"), &r);
    }

    // Friedman across models over the common subject set.
    if m >= 2 {
        let subjects: Vec<String> = by_model[&models[0]].keys().cloned().collect();
        if by_model.values().all(|s| s.len() == subjects.len()) {
            let mut matrix = ndarray::Array2::<f64>::zeros((subjects.len(), m));
            for (j, model) in models.iter().enumerate() {
                for (i, s) in subjects.iter().enumerate() {
                    matrix[[i, j]] = by_model[model][s];
                }
            }
            let r = stats::friedman(&matrix)?;
            push_report(&mut out_rows, "friedman".into(), &r);
        }
    }

    // All-pairs Wilcoxon with Benjamini-Hochberg.
    if m >= 2 {
        let mut pair_names = Vec::new();
        let mut pair_reports = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                let a: Vec<f64> = by_model[&models[i]].values().cloned().collect();
                let b: Vec<f64> = by_model[&models[j]].values().cloned().collect();
                let diffs: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
                let r = stats::wilcoxon_signed_rank(&diffs, 0.0, Alternative::TwoSided)?;
                pair_names.push(format!("pairwise[{}-{}]", models[i], models[j]));
                pair_reports.push(r);
            }
        }
        let raw: Vec<f64> = pair_reports.iter().map(|r| r.p_raw).collect();
        let adjusted = stats::bh_fdr(&raw);
        for ((name, mut r), adj) in pair_names
            .into_iter()
            .zip(pair_reports)
            .zip(adjusted)
        {
            r.p_corrected = adj;
            r.correction = stats::Correction::BhFdr;
            r.m = raw.len();
            push_report(&mut out_rows, name, &r);
        }
    }

    // Permutation test for the best model (by mean accuracy).
    if let Some(best) = models.iter().max_by(|a, b| {
        let ma: f64 =
            by_model[*a].values().sum::<f64>() / by_model[*a].len() as f64;
        let mb: f64 =
            by_model[*b].values().sum::<f64>() / by_model[*b].len() as f64;
        ma.partial_cmp(&mb).unwrap()
    }) {
        if let Some(fold_map) = preds.get(best) {
            let folds: Vec<stats::FoldPredictions> = fold_map.values().cloned().collect();
            if !folds.is_empty() {
                let r = stats::permutation_test(&folds, n_classes, n_perm, seed)?;
                push_report(&mut out_rows, format!("permutation[{best}]"), &r);
            }
        }
    }

    // Family-level comparison when both families are present.
    let family_of = |name: &str| -> &'static str {
        match name {
            "mdm" | "mdm_ea" | "ts_lda" | "ts_lda_ea" | "ts_svm" | "ts_svm_ea" => "riemannian",
            _ => "classical",
        }
    };
    let best_of = |family: &str| -> Option<&String> {
        models
            .iter()
            .filter(|model| family_of(model) == family)
            .max_by(|a, b| {
                let ma: f64 = by_model[*a].values().sum::<f64>() / by_model[*a].len() as f64;
                let mb: f64 = by_model[*b].values().sum::<f64>() / by_model[*b].len() as f64;
                ma.partial_cmp(&mb).unwrap()
            })
    };
    if let (Some(c), Some(r)) = (best_of("classical"), best_of("riemannian")) {
        let a: Vec<f64> = by_model[c].values().cloned().collect();
        let b: Vec<f64> = by_model[r].values().cloned().collect();
        let diffs: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
        let rep = stats::wilcoxon_signed_rank(&diffs, 0.0, Alternative::TwoSided)?;
        push_report(
            &mut out_rows,
            format!("group[classical:{c}-riemannian:{r}]"),
            &rep,
        );
    }

    write_csv(
        &results_dir.join("stats.csv"),
        &meta,
        &["test", "statistic", "value", "p_raw", "p_corrected", "correction", "m"],
        &out_rows,
    )?;
    println!("wrote stats.csv under {}", results_dir.display());
    Ok(())
}

pub fn cmd_report(results_dir: &Path) -> Result<()> {
    let (header, _cols, rows) = crate::report::read_csv(&results_dir.join("results.csv"))?;
    let meta = meta_from_header(&header, 0);

    let mut by_model: BTreeMap<String, Vec<(String, f64, f64)>> = BTreeMap::new();
    for row in &rows {
        if row.len() >= 4 {
            let acc: f64 = row[2].parse().unwrap_or(f64::NAN);
            let f1: f64 = row[3].parse().unwrap_or(f64::NAN);
            by_model
                .entry(row[0].clone())
                .or_default()
                .push((row[1].clone(), acc, f1));
        }
    }
    if by_model.is_empty() {
        return Err(Error::Empty("results.csv has no rows".into()));
    }

    // Chance from the fold-count-free assumption of five classes is wrong
    // in general; infer it from predictions.csv when present.
    let chance = match crate::report::read_csv(&results_dir.join("predictions.csv")) {
        Ok((_, _, pred_rows)) => {
            let k = pred_rows
                .iter()
                .filter_map(|r| r.get(3).and_then(|v| v.parse::<usize>().ok()))
                .max()
                .map(|m| m + 1)
                .unwrap_or(5);
            1.0 / k as f64
        }
        Err(_) => 0.2,
    };

    let m = by_model.len();
    let mut out_rows = Vec::new();
    let mut table = String::new();
    table.push_str(&format!(
        "{:<16} {:>10} {:>10} {:>10} {:>9} {:>9}\n",
        "model", "bal_acc", "sd", "macro_f1", "d", "p_bonf"
    ));
    // Sort by descending mean accuracy for the printed table.
    let mut ordered: Vec<(&String, f64)> = by_model
        .iter()
        .map(|(k, v)| {
            let mean = v.iter().map(|(_, a, _)| a).sum::<f64>() / v.len() as f64;
            (k, mean)
        })
        .collect();
    ordered.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));

    for (model, mean) in &ordered {
        let folds = &by_model[*model];
        let accs: Vec<f64> = folds.iter().map(|(_, a, _)| *a).collect();
        let f1s: Vec<f64> = folds.iter().map(|(_, _, f)| *f).collect();
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
            / (accs.len() as f64 - 1.0).max(1.0);
        let sd = var.sqrt();
        let f1_mean = f1s.iter().sum::<f64>() / f1s.len() as f64;
        let d = harness::cohens_d(&accs, chance)?;
        let w = stats::wilcoxon_signed_rank(&accs, chance, Alternative::OneSidedGreater)?
            .with_bonferroni(m);
        out_rows.push(vec![
            Cell::from(model.as_str()),
            Cell::from(*mean),
            Cell::from(sd),
            Cell::from(f1_mean),
            Cell::from(d),
            Cell::from(w.p_raw),
            Cell::from(w.p_corrected),
        ]);
        table.push_str(&format!(
            "{:<16} {:>10.3} {:>10.3} {:>10.3} {:>9.2} {:>9.3}\n",
            model, mean, sd, f1_mean, d, w.p_corrected
        ));
    }

    write_csv(
        &results_dir.join("report.csv"),
        &meta,
        &["model", "bal_acc_mean", "bal_acc_sd", "macro_f1_mean", "cohens_d", "p_raw", "p_bonf"],
        &out_rows,
    )?;
    print!("{table}");
    println!("wrote report.csv under {}", results_dir.display());
    Ok(())
}

fn meta_from_header(header: &str, fallback_seed: u64) -> RunMeta {
    let mut config_hash = "unknown".to_string();
    let mut seed = fallback_seed;
    for token in header.split_whitespace() {
        if let Some(h) = token.strip_prefix("config_hash=") {
            config_hash = h.to_string();
        }
        if let Some(s) = token.strip_prefix("seed=") {
            seed = s.parse().unwrap_or(fallback_seed);
        }
    }
    RunMeta { config_hash, seed }
}

/// Run the full analysis battery against a dataset: pairwise tasks, RSA
/// (when formants are configured), electrode importance + dropout, ERP,
/// and the learning curve. Used by the `analyze` subcommand.
pub fn cmd_analyze(config_path: &Path, out_dir: &Path, parallel: Option<usize>) -> Result<()> {
    let (config, hash) = RunConfig::load(config_path)?;
    with_pool(parallel, || {
        let epochs = load_epochs(&config)?;
        let meta = RunMeta {
            config_hash: hash.clone(),
            seed: config.eval_seed(),
        };
        std::fs::create_dir_all(out_dir)?;
        let pipeline = config.pipeline_for(config.model.kind);

        // Pairwise + triplet tasks.
        let tasks = analyses::pairwise_tasks(&epochs, &pipeline)?;
        let rows: Vec<Vec<Cell>> = tasks
            .iter()
            .map(|t| {
                vec![
                    Cell::from(t.task.clone()),
                    Cell::from(t.chance),
                    Cell::from(t.mean),
                    Cell::from(t.sd),
                    Cell::from(t.cohens_d),
                    Cell::from(t.p_raw),
                    Cell::from(t.p_bonferroni),
                ]
            })
            .collect();
        write_csv(
            &out_dir.join("pairwise.csv"),
            &meta,
            &["pair", "chance", "acc_mean", "acc_sd", "d", "p_raw", "p_bonf"],
            &rows,
        )?;

        // RSA against configured formants.
        if let Some(table) = &config.analyses.formants {
            let acoustic = analyses::acoustic_distances(table)?;
            match analyses::rsa(&acoustic, &tasks, 10_000, config.eval_seed()) {
                Ok(r) => {
                    write_csv(
                        &out_dir.join("rsa.csv"),
                        &meta,
                        &["test", "rho", "p_raw", "n_pairs"],
                        &[vec![
                            Cell::from("rsa_acoustic_neural"),
                            Cell::from(r.statistic),
                            Cell::from(r.p_raw),
                            Cell::from(10usize),
                        ]],
                    )?;
                }
                Err(e) => eprintln!("warning: rsa skipped: {e}"),
            }
        }

        // Electrode importance and dropout curves (classical heads only).
        if !pipeline.model.is_riemannian() && pipeline.pca_k.is_none() {
            let (shares, _) = analyses::loso_electrode_importance(&epochs, &pipeline)?;
            let rows: Vec<Vec<Cell>> = shares
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    vec![
                        Cell::from(epochs.channel_names[c].clone()),
                        Cell::from(*s),
                    ]
                })
                .collect();
            write_csv(&out_dir.join("importance.csv"), &meta, &["channel", "share"], &rows)?;

            let ranking = analyses::importance_ranking(&shares);
            let ks: Vec<usize> = config
                .analyses
                .dropout_ks
                .iter()
                .cloned()
                .filter(|&k| k < epochs.n_channels())
                .collect();
            let mut rows = Vec::new();
            for direction in [analyses::DropDirection::Top, analyses::DropDirection::Bottom] {
                let points =
                    analyses::channel_dropout(&epochs, &ranking, &ks, direction, &pipeline)?;
                for p in points {
                    rows.push(vec![
                        Cell::from(match direction {
                            analyses::DropDirection::Top => "top",
                            analyses::DropDirection::Bottom => "bottom",
                        }),
                        Cell::from(p.k),
                        Cell::from(p.mean_accuracy),
                    ]);
                }
            }
            write_csv(
                &out_dir.join("dropout.csv"),
                &meta,
                &["direction", "k", "acc_mean"],
                &rows,
            )?;
        }

        // ERP characterisation.
        let channels: Vec<&str> = config.analyses.erp_channels.iter().map(String::as_str).collect();
        match analyses::erp(
            &epochs,
            &channels,
            config.analyses.n1_window_ms,
            config.analyses.p2_window_ms,
        ) {
            Ok(report) => {
                let rows: Vec<Vec<Cell>> = report
                    .peaks
                    .iter()
                    .map(|p| {
                        vec![
                            Cell::from(p.vowel.clone()),
                            Cell::from(p.component.clone()),
                            Cell::from(p.peak_uv),
                            Cell::from(p.latency_ms),
                        ]
                    })
                    .collect();
                write_csv(
                    &out_dir.join("erp.csv"),
                    &meta,
                    &["vowel", "component", "peak_uv", "latency_ms"],
                    &rows,
                )?;
                write_csv(
                    &out_dir.join("erp_anova.csv"),
                    &meta,
                    &["component", "F", "p_raw", "eta_p2"],
                    &[
                        vec![
                            Cell::from("N1"),
                            Cell::from(report.n1_anova.statistic),
                            Cell::from(report.n1_anova.p_raw),
                            Cell::from(report.n1_anova.extra["eta_p2"]),
                        ],
                        vec![
                            Cell::from("P2"),
                            Cell::from(report.p2_anova.statistic),
                            Cell::from(report.p2_anova.p_raw),
                            Cell::from(report.p2_anova.extra["eta_p2"]),
                        ],
                    ],
                )?;
            }
            Err(e) => eprintln!("warning: erp skipped: {e}"),
        }

        // Learning curve over training-subject count.
        let n_subjects = epochs.present_subjects().len();
        let ns: Vec<usize> = config
            .analyses
            .learning_ns
            .iter()
            .cloned()
            .filter(|&n| n >= 1 && n < n_subjects)
            .collect();
        if !ns.is_empty() {
            let points =
                curve::learning_curve(&epochs, &ns, config.analyses.learning_reps, &pipeline)?;
            let rows: Vec<Vec<Cell>> = points
                .iter()
                .map(|p| {
                    vec![
                        Cell::from(p.n_train_subjects),
                        Cell::from(p.mean),
                        Cell::from(p.sd),
                    ]
                })
                .collect();
            write_csv(
                &out_dir.join("learning_curve.csv"),
                &meta,
                &["n_train_subjects", "acc_mean", "acc_sd"],
                &rows,
            )?;
        }

        println!("wrote analyses under {}", out_dir.display());
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("run.toml");
        std::fs::write(&path, body).unwrap();
        path
    }

    const SMALL_SYNTH: &str = r#"
seed = 42

[features]
families = ["de"]

[model]
kind = "lda_shrinkage"

[eval]
models = ["lda_shrinkage", "logistic"]

[synth]
subjects = 3
trials_per_class = 3
channels = 4
"#;

    #[test]
    fn run_emits_results_and_audit() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path(), SMALL_SYNTH);
        let out = dir.path().join("out");
        cmd_run(&config, &out, Some(2)).unwrap();

        let (header, cols, rows) = crate::report::read_csv(&out.join("results.csv")).unwrap();
        assert!(header.starts_with("# eegbench"));
        assert_eq!(cols, vec!["model", "fold_subject", "balanced_acc", "macro_f1"]);
        assert_eq!(rows.len(), 6); // 2 models × 3 folds

        let audit: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("audit.json")).unwrap())
                .unwrap();
        assert!(audit["per_model"]["lda_shrinkage"]["checkpoints"].is_array());
        assert!(out.join("confusion_lda_shrinkage.csv").exists());
        assert!(out.join("predictions.csv").exists());
    }

    #[test]
    fn run_is_byte_identical_across_parallelism() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path(), SMALL_SYNTH);
        let out1 = dir.path().join("p1");
        let out4 = dir.path().join("p4");
        cmd_run(&config, &out1, Some(1)).unwrap();
        cmd_run(&config, &out4, Some(4)).unwrap();
        for file in ["results.csv", "predictions.csv", "audit.json"] {
            let a = std::fs::read(out1.join(file)).unwrap();
            let b = std::fs::read(out4.join(file)).unwrap();
            assert_eq!(a, b, "{file} differs across parallelism");
        }
    }

    #[test]
    fn stats_and_report_consume_run_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path(), SMALL_SYNTH);
        let out = dir.path().join("out");
        cmd_run(&config, &out, None).unwrap();
        cmd_stats(&out, 200, 42, None).unwrap();
        cmd_report(&out).unwrap();

        let (_, cols, rows) = crate::report::read_csv(&out.join("stats.csv")).unwrap();
        assert_eq!(cols[0], "test");
        assert!(rows.iter().any(|r| r[0].starts_with("wilcoxon_vs_chance")));
        assert!(rows.iter().any(|r| r[0] == "friedman"));
        assert!(rows.iter().any(|r| r[0].starts_with("permutation")));
        assert!(rows.iter().any(|r| r[0].starts_with("pairwise[")));

        let (_, cols, rows) = crate::report::read_csv(&out.join("report.csv")).unwrap();
        assert_eq!(cols[0], "model");
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn malformed_config_is_config_error_without_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path(), "mystery_key = true");
        let out = dir.path().join("out");
        let err = cmd_run(&config, &out, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(!out.exists());
    }

    #[test]
    fn strict_audit_failure_is_audit_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{SMALL_SYNTH}\n[synth.plant]\nkind = \"none\"\n");
        let mut body = body.replace("[eval]\nmodels", "[eval]\nstrict_audit = true\ninject = \"normalizer_on_all\"\nmodels");
        body.push('\n');
        let config = write_config(dir.path(), &body);
        let out = dir.path().join("out");
        let err = cmd_run(&config, &out, None).unwrap_err();
        assert_eq!(err.exit_code(), 3, "unexpected error: {err}");
    }

    #[test]
    fn synth_then_archive_run() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = write_config(dir.path(), SMALL_SYNTH);
        let prefix = dir.path().join("epochs");
        cmd_synth(&config_path, &prefix, None).unwrap();

        let body = format!(
            "{SMALL_SYNTH}\n[data]\nsource = \"archive\"\narchive = \"{}\"\n",
            prefix.display()
        );
        let archive_config = dir.path().join("run2.toml");
        std::fs::write(&archive_config, body.replace("[data]\nsource = \"synth\"", "")).unwrap();
        let out = dir.path().join("out2");
        cmd_run(&archive_config, &out, None).unwrap();
        assert!(out.join("results.csv").exists());
    }

    #[test]
    fn ingest_pipeline_from_edf_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"
[data]
source = "bids"
bids_root = "PLACEHOLDER"

[data.label_map]
"vowel/a" = 0
"vowel/e" = 1
"vowel/i" = 2
"vowel/o" = 3
"vowel/u" = 4

[synth]
subjects = 2
trials_per_class = 2
channels = 4
"#;
        let fixture_root = dir.path().join("bids");
        let spec = crate::synth::SynthSpec {
            subjects: 2,
            trials_per_class: 2,
            channels: 4,
            ..Default::default()
        };
        crate::synth::make_edf_fixture(&spec, &fixture_root).unwrap();
        let body = body.replace("PLACEHOLDER", &fixture_root.display().to_string());
        let config_path = write_config(dir.path(), &body);
        let prefix = dir.path().join("ingested");
        cmd_ingest(&fixture_root, &prefix, &config_path).unwrap();

        let (epochs, manifest) = crate::ingest::read_archive(&prefix).unwrap();
        assert_eq!(epochs.subject_names, vec!["S01", "S02"]);
        assert_eq!(epochs.n_trials(), 20);
        assert_eq!(epochs.n_samples(), 307);
        assert!(!manifest.params_hash.is_empty());
    }
}
