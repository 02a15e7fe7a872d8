//! The experiment protocols, one per [`ExperimentKind`].

use std::collections::BTreeMap;
use std::path::PathBuf;

use argqual_core::analysis::{
    group_quality_by_emotion, predict_emotions, render_box_plot_svg, significance_report, write_grouped_csv,
    write_significance_csv,
};
use argqual_core::baselines::{evaluate_baseline, human_performance, majority_baseline, Baseline, Lexicon, TiePolicy};
use argqual_core::corpus::{load_corpus, load_raw_emotion_corpus, LabelMaps, ManifestCheck};
use argqual_core::metrics::{binary_macro_f1, pearson, spearman, AgreementTable, PairedSeries};
use argqual_core::splitting::{
    assign_split, compute_truncation_length, make_cross_topic_folds, split_sentences, SplitCorpora, SplitRatios,
};
use argqual_core::transfer::evaluate_transfer_matrix;
use argqual_core::{Corpus, DatasetManifest, EmotionLabel, LabeledSentence, Task, TaskHeadOutput, TaskPredictor};
use argqual_nn::{
    train_multi_dataset, train_multi_task, train_single_task, EarlyStoppingMetric, LossWeighting, ModelOptions,
    MultiTaskModel, TrainConfig, TrainingLog,
};

use crate::config::{EmotionSource, EncoderSpec, ExperimentConfig, ExperimentKind};
use crate::error::{Result, RunError};
use crate::results::{aggregate, seed_dir, write_matrix_csv, write_results_csv, Cell, ExperimentResult, SeedResult};

/// A configured dataset, loaded and checked against its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub general: bool,
    pub manifest: DatasetManifest,
    pub corpus: Corpus,
}

pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Vec<Dataset>> {
    let check = if cfg.strict_manifests { ManifestCheck::Strict } else { ManifestCheck::Lenient };
    let maps = LabelMaps::builtin();
    cfg.datasets
        .iter()
        .map(|d| {
            let manifest = d.manifest()?;
            let loaded = match &d.schema {
                Some(schema) => load_raw_emotion_corpus(&d.path, &manifest, schema, &maps, check)?,
                None => load_corpus(&d.path, &manifest, check)?,
            };
            for w in &loaded.warnings {
                log::warn!("{w}");
            }
            Ok(Dataset { name: d.name.clone(), general: d.general, manifest, corpus: loaded.corpus })
        })
        .collect()
}

/// Sum of manifest sizes of every corpus but one, per held-out corpus.
pub fn leave_one_out_sizes(manifests: &[DatasetManifest]) -> Vec<(String, usize)> {
    let total: usize = manifests.iter().map(|m| m.expected_sentence_count).sum();
    manifests.iter().map(|m| (m.name.clone(), total - m.expected_sentence_count)).collect()
}

/// Records of several corpora of one task, ids prefixed by their dataset.
pub fn concat(task: Task, corpora: &[&Corpus]) -> Result<Corpus> {
    let records: Vec<LabeledSentence> = corpora
        .iter()
        .flat_map(|c| c.records().iter())
        .map(|r| LabeledSentence { id: format!("{}/{}", r.dataset, r.id), ..r.clone() })
        .collect();
    Ok(Corpus::new(task, records)?)
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    train: TrainConfig,
    seed: u64,
    dir: PathBuf,
}

impl Run<'_> {
    fn model(&self, tasks: &[Task]) -> Result<MultiTaskModel> {
        let options = ModelOptions { pooling: self.cfg.pooling, max_length: 1, head_dropout: self.train.dropout, seed: self.seed };
        Ok(match &self.cfg.encoder {
            EncoderSpec::Tiny { config } => MultiTaskModel::tiny(config.clone(), tasks, options)?,
            EncoderSpec::Pretrained { path, lowercase } => MultiTaskModel::from_pretrained(path, *lowercase, tasks, options)?,
        })
    }

    /// Model whose truncation length is the configured percentile of `val` pair lengths.
    fn model_for(&self, tasks: &[Task], val: &[&Corpus]) -> Result<MultiTaskModel> {
        let mut model = self.model(tasks)?;
        let mut lengths = Vec::new();
        for c in val {
            for r in c.records() {
                lengths.push(model.rendered_length(&r.text, &r.topic)?);
            }
        }
        let rule = compute_truncation_length(&lengths, self.cfg.truncation_percentile())?;
        let cap = model.encoder().config().max_positions - 1;
        if rule.max_length > cap {
            log::warn!("truncation length {} exceeds the encoder's {cap} positions; capping", rule.max_length);
        }
        model.set_max_length(rule.max_length.min(cap))?;
        Ok(model)
    }

    fn config_for(&self, model: &MultiTaskModel, task: Task) -> Result<TrainConfig> {
        Ok(TrainConfig {
            seed: self.seed,
            early_stopping_metric: EarlyStoppingMetric::for_head(model.head(task)?.kind()),
            ..self.train.clone()
        })
    }

    fn save_log(&self, log: &TrainingLog, name: &str) -> Result<()> {
        log.save_csv(&self.dir.join(format!("{name}.log.csv")))?;
        Ok(())
    }

    fn save_model(&self, model: &MultiTaskModel, name: &str) -> Result<PathBuf> {
        let path = self.dir.join(format!("{name}.safetensors"));
        model.save(&path)?;
        Ok(path)
    }
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Score predictions against a test corpus: a correlation for score tasks, Macro-F1 otherwise.
fn score_on(
    model: &MultiTaskModel,
    task: Task,
    test: &Corpus,
    correlation: fn(&PairedSeries) -> argqual_core::Result<f64>,
) -> Result<f64> {
    let out = model.predict(test, task, 64)?;
    if task.is_regression() {
        let pred = out.iter().map(TaskHeadOutput::as_score).collect::<argqual_core::Result<Vec<_>>>()?;
        let gold = test.scores().ok_or_else(|| RunError::Config(format!("{task} test set lacks scores")))?;
        return Ok(correlation(&PairedSeries::new(pred, gold)?)?);
    }
    let pred: Vec<bool> = out
        .iter()
        .map(|o| match o {
            TaskHeadOutput::ClassProbs([p, n]) => Ok(p >= n),
            TaskHeadOutput::Score(_) => Err(RunError::Config(format!("{task} head emitted a score"))),
        })
        .collect::<Result<_>>()?;
    let gold: Vec<bool> = test.records().iter().map(|r| r.label.is_positive().unwrap_or(false)).collect();
    Ok(binary_macro_f1(&pred, &gold)?)
}

fn topic_splits(datasets: &[Dataset], folds: usize, ratios: SplitRatios, seed: u64) -> Result<Vec<Vec<SplitCorpora>>> {
    datasets
        .iter()
        .map(|d| {
            make_cross_topic_folds(&d.corpus, folds, ratios, seed)?
                .iter()
                .map(|plan| Ok(assign_split(&d.corpus, plan)?))
                .collect()
        })
        .collect()
}

fn cross_corpus(run: &Run, data: &[Dataset]) -> Result<Vec<Cell>> {
    let splits = topic_splits(data, run.cfg.folds, SplitRatios::CROSS_CORPUS, run.cfg.split_seed)?;
    let mut sums: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for fold in 0..run.cfg.folds {
        let vals: Vec<&Corpus> = splits.iter().map(|s| &s[fold].val).collect();
        for (i, d) in data.iter().enumerate() {
            let mut model = run.model_for(&[Task::ArgumentQuality], &vals)?;
            let cfg = run.config_for(&model, Task::ArgumentQuality)?;
            let log = train_single_task(&mut model, &splits[i][fold].train, &splits[i][fold].val, &cfg)?;
            run.save_log(&log, &format!("fold{fold}-{}", file_safe(&d.name)))?;
            for (j, _) in data.iter().enumerate() {
                *sums.entry((i, j)).or_default() += score_on(&model, Task::ArgumentQuality, &splits[j][fold].test, pearson)?;
            }
        }
    }
    let n = run.cfg.folds as f64;
    Ok(sums
        .into_iter()
        .map(|((i, j), s)| Cell::new(&data[i].name, &data[j].name, Task::ArgumentQuality, "pearson", s / n))
        .collect())
}

fn leave_one_out(run: &Run, data: &[Dataset]) -> Result<Vec<Cell>> {
    let splits = topic_splits(data, run.cfg.folds, SplitRatios::CROSS_CORPUS, run.cfg.split_seed)?;
    let sizes = leave_one_out_sizes(&data.iter().map(|d| d.manifest.clone()).collect::<Vec<_>>());
    let mut cells = Vec::new();
    for (h, held) in data.iter().enumerate() {
        let label = format!("all except {}", held.name);
        let mut sums = vec![0.0; data.len()];
        for fold in 0..run.cfg.folds {
            let vals: Vec<&Corpus> = splits.iter().map(|s| &s[fold].val).collect();
            let others: Vec<usize> = (0..data.len()).filter(|&o| o != h).collect();
            let trains: Vec<(&Corpus, f64)> = others.iter().map(|&o| (&splits[o][fold].train, 1.0)).collect();
            let val = concat(Task::ArgumentQuality, &others.iter().map(|&o| &splits[o][fold].val).collect::<Vec<_>>())?;
            let mut model = run.model_for(&[Task::ArgumentQuality], &vals)?;
            let cfg = run.config_for(&model, Task::ArgumentQuality)?;
            let log = train_multi_dataset(&mut model, &trains, &val, &cfg)?;
            run.save_log(&log, &format!("fold{fold}-except-{}", file_safe(&held.name)))?;
            for (j, sum) in sums.iter_mut().enumerate() {
                *sum += score_on(&model, Task::ArgumentQuality, &splits[j][fold].test, pearson)?;
            }
        }
        for (j, s) in sums.iter().enumerate() {
            cells.push(Cell::new(&label, &data[j].name, Task::ArgumentQuality, "pearson", s / run.cfg.folds as f64));
        }
        cells.push(Cell::new(&label, "union_size", Task::ArgumentQuality, "sentences", sizes[h].1 as f64));
    }
    Ok(cells)
}

fn by_task(data: &[Dataset]) -> BTreeMap<Task, &Dataset> {
    data.iter().map(|d| (d.corpus.task(), d)).collect()
}

fn zero_shot(run: &Run, data: &[Dataset]) -> Result<Vec<Cell>> {
    let tasks = by_task(data);
    let splits: BTreeMap<Task, SplitCorpora> = tasks
        .iter()
        .map(|(&t, d)| {
            let plan = make_cross_topic_folds(&d.corpus, 1, SplitRatios::ZERO_SHOT, run.cfg.split_seed)?.remove(0);
            Ok((t, assign_split(&d.corpus, &plan)?))
        })
        .collect::<Result<_>>()?;
    let vals: Vec<&Corpus> = splits.values().map(|s| &s.val).collect();
    let mut models = BTreeMap::new();
    for (&task, s) in &splits {
        let mut model = run.model_for(&[task], &vals)?;
        let cfg = run.config_for(&model, task)?;
        let log = train_single_task(&mut model, &s.train, &s.val, &cfg)?;
        run.save_log(&log, task.code())?;
        run.save_model(&model, task.code())?;
        models.insert(task, model);
    }
    let predictors = models
        .iter()
        .map(|(&t, m)| Ok((t, m.predictor(t)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let dyn_predictors: BTreeMap<Task, &dyn TaskPredictor> =
        predictors.iter().map(|(&t, p)| (t, p as &dyn TaskPredictor)).collect();
    let tests: BTreeMap<Task, Corpus> = splits.iter().map(|(&t, s)| (t, s.test.clone())).collect();
    let calibration = splits.get(&Task::ArgumentIdentification).map(|s| &s.val);
    let matrix = evaluate_transfer_matrix(&dyn_predictors, &tests, calibration)?;
    let mut cells = Vec::new();
    for c in &matrix.cells {
        cells.push(Cell::new(c.source.code(), c.target.code(), c.target, c.metric.as_str(), c.value));
        if let Some(t) = &c.threshold {
            cells.push(Cell::new(c.source.code(), c.target.code(), c.target, "threshold", t.alpha));
        }
    }
    Ok(cells)
}

fn multi_task(run: &Run, data: &[Dataset]) -> Result<Vec<Cell>> {
    let tasks = by_task(data);
    let splits: BTreeMap<Task, SplitCorpora> = tasks
        .iter()
        .map(|(&t, d)| {
            let plan = make_cross_topic_folds(&d.corpus, 1, SplitRatios::ZERO_SHOT, run.cfg.split_seed)?.remove(0);
            Ok((t, assign_split(&d.corpus, &plan)?))
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for combo in run.cfg.combinations()? {
        let name = combo.iter().map(|t| t.code()).collect::<Vec<_>>().join("/");
        let vals: Vec<&Corpus> = combo.iter().map(|t| &splits[t].val).collect();
        let mut model = run.model_for(&combo, &vals)?;
        let corpora: BTreeMap<Task, (Corpus, Corpus)> =
            combo.iter().map(|t| (*t, (splits[t].train.clone(), splits[t].val.clone()))).collect();
        let cfg = TrainConfig { seed: run.seed, ..run.train.clone() };
        let log = train_multi_task(&mut model, &corpora, &cfg, &LossWeighting::uniform())?;
        run.save_log(&log, &file_safe(&name))?;
        for &t in &combo {
            let metric = if t.is_regression() { "spearman" } else { "macro_f1" };
            cells.push(Cell::new(&name, t.code(), t, metric, score_on(&model, t, &splits[&t].test, spearman)?));
        }
    }
    Ok(cells)
}

fn emotion_detect(run: &Run, data: &[Dataset]) -> Result<Vec<Cell>> {
    let target = data.iter().find(|d| !d.general).expect("validated: one target corpus");
    let general: Vec<&Dataset> = data.iter().filter(|d| d.general).collect();
    let t = split_sentences(&target.corpus, SplitRatios::EMOTION, run.cfg.split_seed)?;
    let g: Vec<SplitCorpora> = general
        .iter()
        .map(|d| split_sentences(&d.corpus, SplitRatios::EMOTION, run.cfg.split_seed))
        .collect::<argqual_core::Result<_>>()?;
    let emo = Task::EmotionBinary;
    let mut cells = Vec::new();
    let mut both = |method: &str, full: Option<f64>, test: f64| {
        if let Some(v) = full {
            cells.push(Cell::new(method, "full", emo, "macro_f1", v));
        }
        cells.push(Cell::new(method, "test", emo, "macro_f1", test));
    };

    let train_labels: Vec<EmotionLabel> = t
        .train
        .records()
        .iter()
        .map(|r| if r.label.is_positive() == Some(true) { EmotionLabel::Emotional } else { EmotionLabel::NonEmotional })
        .collect();
    let mut baselines = vec![Baseline::Majority(majority_baseline(&train_labels)?), Baseline::Pronoun];
    if let Some(path) = &run.cfg.lexicon {
        baselines.push(Baseline::Lexicon(Lexicon::from_file(path)?));
    }
    for b in &baselines {
        both(b.name(), Some(evaluate_baseline(b, &target.corpus)?), evaluate_baseline(b, &t.test)?);
    }

    let mut vals: Vec<&Corpus> = g.iter().map(|s| &s.val).collect();
    vals.push(&t.val);
    if !g.is_empty() {
        let mut model = run.model_for(&[emo], &vals)?;
        let trains: Vec<(&Corpus, f64)> = g.iter().map(|s| (&s.train, 1.0)).collect();
        let val = concat(emo, &g.iter().map(|s| &s.val).collect::<Vec<_>>())?;
        let cfg = run.config_for(&model, emo)?;
        let log = train_multi_dataset(&mut model, &trains, &val, &cfg)?;
        run.save_log(&log, "general")?;
        let path = run.save_model(&model, "general")?;
        both("general", Some(score_on(&model, emo, &target.corpus, spearman)?), score_on(&model, emo, &t.test, spearman)?);

        let mut tuned = MultiTaskModel::load(&path)?;
        let cfg = run.config_for(&tuned, emo)?;
        let log = train_single_task(&mut tuned, &t.train, &t.val, &cfg)?;
        run.save_log(&log, "general+target")?;
        run.save_model(&tuned, "general+target")?;
        both("general+target", None, score_on(&tuned, emo, &t.test, spearman)?);
    }
    let mut model = run.model_for(&[emo], &vals)?;
    let cfg = run.config_for(&model, emo)?;
    let log = train_single_task(&mut model, &t.train, &t.val, &cfg)?;
    run.save_log(&log, "target")?;
    run.save_model(&model, "target")?;
    both("target", None, score_on(&model, emo, &t.test, spearman)?);

    let annotated = |c: &Corpus| -> Option<Vec<Vec<Option<EmotionLabel>>>> {
        c.records().iter().map(|r| r.annotations.clone()).collect()
    };
    if let (Some(full), Some(test)) = (annotated(&target.corpus), annotated(&t.test)) {
        let hp_full = human_performance(&AgreementTable::new(full)?, TiePolicy::default())?;
        let hp_test = human_performance(&AgreementTable::new(test)?, TiePolicy::default())?;
        both("human", Some(hp_full.mean), hp_test.mean);
    }
    Ok(cells)
}

fn emotion_analysis(run: &Run, data: &[Dataset]) -> Result<Vec<Cell>> {
    let source = run.cfg.emotion_source.as_ref().expect("validated: emotion source present");
    let loaded;
    let head;
    let baseline;
    let (predictor, model_name): (&dyn TaskPredictor, String) = match source {
        EmotionSource::Checkpoint { path } => {
            loaded = MultiTaskModel::load(path)?;
            head = loaded.predictor(Task::EmotionBinary)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            (&head, stem)
        }
        EmotionSource::Pronoun => {
            baseline = Baseline::Pronoun;
            (&baseline, "pronoun".to_string())
        }
        EmotionSource::Lexicon { path } => {
            baseline = Baseline::Lexicon(Lexicon::from_file(path)?);
            (&baseline, "nrc".to_string())
        }
    };
    let mut grouped = Vec::new();
    for d in data {
        let preds = predict_emotions(&d.corpus, predictor)?;
        grouped.push(group_quality_by_emotion(&d.corpus, &preds, &model_name)?);
    }
    let report = significance_report(&grouped, run.cfg.adjustment)?;
    write_grouped_csv(&grouped, std::fs::File::create(run.dir.join("grouped.csv"))?)?;
    write_significance_csv(&report, std::fs::File::create(run.dir.join("significance.csv"))?)?;
    std::fs::write(run.dir.join("box_plot.svg"), render_box_plot_svg(&grouped))?;

    let aq = Task::ArgumentQuality;
    let mut cells = Vec::new();
    for r in &report.rows {
        if let Some(delta) = r.delta {
            cells.push(Cell::new(&r.model, &r.dataset, aq, "delta", delta));
        }
        if let Some(p) = r.p {
            cells.push(Cell::new(&r.model, &r.dataset, aq, "p_value", p));
        }
    }
    for c in &report.combined {
        let label = serde_json::to_value(c.method)?.as_str().unwrap_or("combined").to_string();
        cells.push(Cell::new(&c.model, format!("combined:{label}"), aq, "p_value", c.p));
    }
    Ok(cells)
}

/// Run `cfg` for every seed, reusing per-seed results already on disk, and write the
/// aggregated tables. Returns the experiment directory and its rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(PathBuf, Vec<ExperimentResult>)> {
    cfg.validate()?;
    let hash = cfg.content_hash()?;
    let dir = cfg.experiment_dir()?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
    let data = load_datasets(cfg)?;
    let train = cfg.train_config()?;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let sdir = seed_dir(&dir, seed);
        if let Ok(done) = SeedResult::load(&sdir) {
            if done.config_hash == hash {
                log::info!("seed {seed}: reusing {}", sdir.display());
                per_seed.push(done);
                continue;
            }
        }
        std::fs::create_dir_all(&sdir)?;
        log::info!("seed {seed}: running {} into {}", cfg.kind.as_str(), sdir.display());
        let run = Run { cfg, train: train.clone(), seed, dir: sdir.clone() };
        let cells = match cfg.kind {
            ExperimentKind::CrossCorpus => cross_corpus(&run, &data)?,
            ExperimentKind::LeaveOneOut => leave_one_out(&run, &data)?,
            ExperimentKind::ZeroShot => zero_shot(&run, &data)?,
            ExperimentKind::MultiTask => multi_task(&run, &data)?,
            ExperimentKind::EmotionDetect => emotion_detect(&run, &data)?,
            ExperimentKind::EmotionAnalysis => emotion_analysis(&run, &data)?,
        };
        let result = SeedResult { kind: cfg.kind, config_hash: hash.clone(), seed, cells };
        result.save(&sdir)?;
        per_seed.push(result);
    }
    let rows = aggregate(&per_seed)?;
    write_results_csv(&rows, std::fs::File::create(dir.join("results.csv"))?)?;
    let mut matrix = Vec::new();
    if write_matrix_csv(&rows, &mut matrix)? {
        std::fs::write(dir.join("matrix.csv"), matrix)?;
    }
    Ok((dir, rows))
}
