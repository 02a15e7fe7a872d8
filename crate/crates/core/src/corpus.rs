//! Canonical corpus schema, dataset manifests, emotion label unification and
//! annotator majority filtering.
//!
//! Canonical corpora are line-delimited JSON, one record per line:
//!
//! ```text
//! {"id":"a1","text":"...","topic":"gun control","label":0.73}
//! {"id":"s9","text":"...","topic":"nuclear energy","label":"argumentative"}
//! {"id":"e4","text":"...","topic":"polygamy","label":"emotional","annotations":["emotional",null,"non-emotional"]}
//! ```
//!
//! An optional `"dataset"` field must match the manifest the file is loaded with.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// The argument-mining task a corpus is annotated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "AQ", alias = "ArgumentQuality")]
    ArgumentQuality,
    #[serde(rename = "AI", alias = "ArgumentIdentification")]
    ArgumentIdentification,
    #[serde(rename = "ED", alias = "EvidenceDetection")]
    EvidenceDetection,
    #[serde(rename = "EMO", alias = "EmotionBinary")]
    EmotionBinary,
}

impl Task {
    pub const ALL: [Task; 4] = [
        Task::ArgumentQuality,
        Task::ArgumentIdentification,
        Task::EvidenceDetection,
        Task::EmotionBinary,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Task::ArgumentQuality => "AQ",
            Task::ArgumentIdentification => "AI",
            Task::EvidenceDetection => "ED",
            Task::EmotionBinary => "EMO",
        }
    }

    pub fn label_kind(self) -> LabelKind {
        match self {
            Task::ArgumentQuality | Task::EvidenceDetection => LabelKind::Score,
            Task::ArgumentIdentification => LabelKind::Class,
            Task::EmotionBinary => LabelKind::Emotion,
        }
    }

    /// Regression tasks are trained with MSE, the others with cross-entropy.
    pub fn is_regression(self) -> bool {
        self.label_kind() == LabelKind::Score
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AQ" | "ARGUMENTQUALITY" => Ok(Task::ArgumentQuality),
            "AI" | "ARGUMENTIDENTIFICATION" => Ok(Task::ArgumentIdentification),
            "ED" | "EVIDENCEDETECTION" => Ok(Task::EvidenceDetection),
            "EMO" | "EMOTION" | "EMOTIONBINARY" => Ok(Task::EmotionBinary),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Score,
    Class,
    Emotion,
}

/// Argument identification classes. `Argumentative` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArgClass {
    #[serde(rename = "argumentative")]
    Argumentative,
    #[serde(rename = "non-argumentative")]
    NonArgumentative,
}

impl ArgClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ArgClass::Argumentative => "argumentative",
            ArgClass::NonArgumentative => "non-argumentative",
        }
    }

    pub fn is_positive(self) -> bool {
        self == ArgClass::Argumentative
    }
}

/// Binary emotionality. `Emotional` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmotionLabel {
    #[serde(rename = "emotional")]
    Emotional,
    #[serde(rename = "non-emotional")]
    NonEmotional,
}

impl EmotionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Emotional => "emotional",
            EmotionLabel::NonEmotional => "non-emotional",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "emotional" => Some(EmotionLabel::Emotional),
            "non-emotional" => Some(EmotionLabel::NonEmotional),
            _ => None,
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A task-typed gold label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Score(f64),
    Class(ArgClass),
    Emotion(EmotionLabel),
}

impl Label {
    pub fn kind(&self) -> LabelKind {
        match self {
            Label::Score(_) => LabelKind::Score,
            Label::Class(_) => LabelKind::Class,
            Label::Emotion(_) => LabelKind::Emotion,
        }
    }

    pub fn as_score(&self) -> Option<f64> {
        match self {
            Label::Score(s) => Some(*s),
            _ => None,
        }
    }

    /// Positive-class indicator for the two binary label kinds.
    pub fn is_positive(&self) -> Option<bool> {
        match self {
            Label::Class(c) => Some(c.is_positive()),
            Label::Emotion(e) => Some(*e == EmotionLabel::Emotional),
            Label::Score(_) => None,
        }
    }

    fn parse(value: &Value, kind: LabelKind) -> std::result::Result<Label, String> {
        match kind {
            LabelKind::Score => {
                let score = value
                    .as_f64()
                    .ok_or_else(|| format!("expected numeric score label, got {value}"))?;
                if !(0.0..=1.0).contains(&score) {
                    return Err(format!("score label {score} outside [0, 1]"));
                }
                Ok(Label::Score(score))
            }
            LabelKind::Class => match value.as_str() {
                Some("argumentative") => Ok(Label::Class(ArgClass::Argumentative)),
                Some("non-argumentative") => Ok(Label::Class(ArgClass::NonArgumentative)),
                _ => Err(format!(
                    "expected \"argumentative\" or \"non-argumentative\", got {value}"
                )),
            },
            LabelKind::Emotion => value
                .as_str()
                .and_then(EmotionLabel::parse)
                .map(Label::Emotion)
                .ok_or_else(|| format!("expected \"emotional\" or \"non-emotional\", got {value}")),
        }
    }

    fn to_json(self) -> Value {
        match self {
            Label::Score(s) => Value::from(s),
            Label::Class(c) => Value::from(c.as_str()),
            Label::Emotion(e) => Value::from(e.as_str()),
        }
    }
}

/// One text unit of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSentence {
    pub id: String,
    pub text: String,
    pub topic: String,
    pub label: Label,
    pub dataset: String,
    /// Per-annotator labels, `None` where an annotator skipped the item.
    pub annotations: Option<Vec<Option<EmotionLabel>>>,
}

/// A validated collection of [`LabeledSentence`]s sharing one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    task: Task,
    records: Vec<LabeledSentence>,
    topics: BTreeSet<String>,
}

impl Corpus {
    pub fn new(task: Task, records: Vec<LabeledSentence>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(records.len());
        let mut topics = BTreeSet::new();
        for r in &records {
            validate_record(task, r).map_err(Error::Validation)?;
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Validation(format!("duplicate record id '{}'", r.id)));
            }
            topics.insert(r.topic.clone());
        }
        Ok(Self { task, records, topics })
    }

    pub fn empty(task: Task) -> Self {
        Self { task, records: Vec::new(), topics: BTreeSet::new() }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn records(&self) -> &[LabeledSentence] {
        &self.records
    }

    pub fn into_records(self) -> Vec<LabeledSentence> {
        self.records
    }

    pub fn topics(&self) -> &BTreeSet<String> {
        &self.topics
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The single dataset tag shared by all records, if there is exactly one.
    pub fn dataset(&self) -> Option<&str> {
        let first = self.records.first()?.dataset.as_str();
        self.records.iter().all(|r| r.dataset == first).then_some(first)
    }

    /// Gold scores, for regression corpora.
    pub fn scores(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.label.as_score()).collect()
    }

    /// Sub-corpus with the records at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        let records: Vec<_> = indices.iter().map(|&i| self.records[i].clone()).collect();
        let topics = records.iter().map(|r| r.topic.clone()).collect();
        Corpus { task: self.task, records, topics }
    }

    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for r in &self.records {
            let line = RecordLine {
                id: r.id.clone(),
                text: r.text.clone(),
                topic: Some(r.topic.clone()),
                label: Some(r.label.to_json()),
                dataset: Some(r.dataset.clone()),
                annotations: r
                    .annotations
                    .as_ref()
                    .map(|a| a.iter().map(|l| l.map(|l| l.as_str().to_string())).collect()),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        self.write_jsonl(File::create(path)?)
    }
}

fn validate_record(task: Task, r: &LabeledSentence) -> std::result::Result<(), String> {
    if r.text.trim().is_empty() {
        return Err(format!("record '{}' has empty text", r.id));
    }
    if r.topic.trim().is_empty() {
        return Err(format!("record '{}' has no topic", r.id));
    }
    if r.label.kind() != task.label_kind() {
        return Err(format!(
            "record '{}' label {:?} does not match task {}",
            r.id, r.label, task
        ));
    }
    if let Label::Score(s) = r.label {
        if !(0.0..=1.0).contains(&s) {
            return Err(format!("record '{}' score {s} outside [0, 1]", r.id));
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotations: Option<Vec<Option<String>>>,
}

/// Expected inventory of a registered dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub task: Task,
    pub expected_sentence_count: usize,
    /// `None` for sources without a topic inventory (the emotion corpora).
    #[serde(default)]
    pub expected_topic_count: Option<usize>,
    #[serde(default)]
    pub label_kind: Option<LabelKind>,
    #[serde(default)]
    pub source_note: String,
}

impl DatasetManifest {
    pub fn new(
        name: &str,
        task: Task,
        expected_sentence_count: usize,
        expected_topic_count: Option<usize>,
        source_note: &str,
    ) -> Result<Self> {
        let m = Self {
            name: name.to_string(),
            task,
            expected_sentence_count,
            expected_topic_count,
            label_kind: Some(task.label_kind()),
            source_note: source_note.to_string(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Validation("manifest name is empty".into()));
        }
        if self.expected_sentence_count == 0 || self.expected_topic_count == Some(0) {
            return Err(Error::Validation(format!(
                "manifest '{}' counts must be strictly positive",
                self.name
            )));
        }
        if let Some(kind) = self.label_kind {
            if kind != self.task.label_kind() {
                return Err(Error::Validation(format!(
                    "manifest '{}' label_kind {:?} contradicts task {}",
                    self.name, kind, self.task
                )));
            }
        }
        Ok(())
    }

    pub fn label_kind(&self) -> LabelKind {
        self.task.label_kind()
    }

    /// Parse a key-value (TOML) manifest document.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let m: Self = toml::from_str(s).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Look up one of the built-in manifests by (case-insensitive) name.
    pub fn builtin(name: &str) -> Option<Self> {
        builtin_manifests()
            .into_iter()
            .find(|m| m.name.eq_ignore_ascii_case(name))
    }
}

/// Manifests for every corpus the experiment protocols know about.
pub fn builtin_manifests() -> Vec<DatasetManifest> {
    use Task::*;
    let rows: [(&str, Task, usize, Option<usize>, &str); 14] = [
        ("UKPConvArgRank", ArgumentQuality, 1_052, Some(32), "debate portal; convincingness (PageRank over pairwise labels)"),
        ("SwanRank", ArgumentQuality, 5_375, Some(4), "debate portal; interpretability"),
        ("IBM-ArgQ", ArgumentQuality, 5_300, Some(11), "crowd collection; recommendableness (debate club annotators)"),
        ("IBM-Rank-30k", ArgumentQuality, 30_497, Some(71), "crowd collection; recommendableness"),
        ("UKP-Sentential", ArgumentIdentification, 25_492, Some(8), "web documents; argumentative vs non-argumentative"),
        ("IBM-Evidence", EvidenceDetection, 29_429, Some(221), "wikipedia; evidence confidence"),
        ("Alm", EmotionBinary, 15_036, None, "children's stories"),
        ("ISEAR", EmotionBinary, 7_666, None, "reactions and emotion antecedents"),
        ("SemEval-2007", EmotionBinary, 1_250, None, "news headlines"),
        ("SemEval-2018", EmotionBinary, 9_625, None, "tweets"),
        ("SemEval-2019", EmotionBinary, 14_335, None, "dialogues"),
        ("Neviarouskaya-2010", EmotionBinary, 1_000, None, "stories"),
        ("Neviarouskaya-2011", EmotionBinary, 700, None, "diary-like blogs"),
        ("EmoArg523", EmotionBinary, 523, None, "argument sentences with six-annotator emotion labels, majority-filtered"),
    ];
    rows.iter()
        .map(|&(name, task, n, topics, note)| DatasetManifest {
            name: name.to_string(),
            task,
            expected_sentence_count: n,
            expected_topic_count: topics,
            label_kind: Some(task.label_kind()),
            source_note: note.to_string(),
        })
        .collect()
}

/// How manifest count mismatches are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ManifestCheck {
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
}

/// Load a canonical JSONL corpus and check it against `manifest`.
pub fn load_corpus(path: &Path, manifest: &DatasetManifest, check: ManifestCheck) -> Result<LoadedCorpus> {
    let file = File::open(path)
        .map_err(|e| Error::Input(format!("cannot open corpus {}: {e}", path.display())))?;
    read_corpus(BufReader::new(file), manifest, check)
}

pub fn read_corpus<R: BufRead>(reader: R, manifest: &DatasetManifest, check: ManifestCheck) -> Result<LoadedCorpus> {
    manifest.validate()?;
    let kind = manifest.label_kind();
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RecordLine = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let invalid = |msg: String| Error::Validation(format!("line {line_no}: {msg}"));
        let topic = match raw.topic {
            Some(t) if !t.trim().is_empty() => t,
            _ => return Err(invalid(format!("record '{}' is missing a topic", raw.id))),
        };
        let label_value = raw
            .label
            .ok_or_else(|| invalid(format!("record '{}' is missing a label", raw.id)))?;
        let label = Label::parse(&label_value, kind).map_err(invalid)?;
        if let Some(ds) = &raw.dataset {
            if ds != &manifest.name {
                return Err(invalid(format!(
                    "record dataset '{ds}' does not match manifest '{}'",
                    manifest.name
                )));
            }
        }
        let annotations = match raw.annotations {
            None => None,
            Some(list) => Some(
                list.into_iter()
                    .map(|a| match a {
                        None => Ok(None),
                        Some(s) => EmotionLabel::parse(&s)
                            .map(Some)
                            .ok_or_else(|| invalid(format!("unknown annotation '{s}'"))),
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        if !ids.insert(raw.id.clone()) {
            return Err(invalid(format!("duplicate record id '{}'", raw.id)));
        }
        let record = LabeledSentence {
            id: raw.id,
            text: raw.text,
            topic,
            label,
            dataset: manifest.name.clone(),
            annotations,
        };
        validate_record(manifest.task, &record).map_err(invalid)?;
        records.push(record);
    }
    let corpus = Corpus::new(manifest.task, records)?;
    let warnings = check_manifest(&corpus, manifest);
    if !warnings.is_empty() {
        if check == ManifestCheck::Strict {
            return Err(Error::Validation(warnings.join("; ")));
        }
        for w in &warnings {
            log::warn!("{w}");
        }
    }
    Ok(LoadedCorpus { corpus, warnings })
}

fn check_manifest(corpus: &Corpus, manifest: &DatasetManifest) -> Vec<String> {
    let mut warnings = Vec::new();
    if corpus.len() != manifest.expected_sentence_count {
        warnings.push(format!(
            "{}: expected {} sentences, found {}",
            manifest.name,
            manifest.expected_sentence_count,
            corpus.len()
        ));
    }
    if let Some(expected) = manifest.expected_topic_count {
        if corpus.topics().len() != expected {
            warnings.push(format!(
                "{}: expected {} topics, found {}",
                manifest.name,
                expected,
                corpus.topics().len()
            ));
        }
    }
    warnings
}

/// Declarative mapping from one source dataset's emotion classes to binary labels.
///
/// ```toml
/// schema = "SemEval-2019"
/// [classes]
/// happy = "emotional"
/// others = "non-emotional"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub schema: String,
    #[serde(default)]
    pub source_note: String,
    pub classes: BTreeMap<String, EmotionLabel>,
}

impl LabelMap {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let raw: LabelMap = toml::from_str(s).map_err(|e| Error::Config(format!("label map: {e}")))?;
        if raw.classes.is_empty() {
            return Err(Error::Config(format!("label map '{}' has no classes", raw.schema)));
        }
        let mut classes = BTreeMap::new();
        for (class, label) in raw.classes {
            let key = normalize_class(&class);
            if let Some(prev) = classes.insert(key.clone(), label) {
                if prev != label {
                    return Err(Error::Config(format!(
                        "label map '{}' maps class '{key}' inconsistently",
                        raw.schema
                    )));
                }
            }
        }
        Ok(Self { schema: raw.schema, source_note: raw.source_note, classes })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn map(&self, raw_label: &str) -> Result<EmotionLabel> {
        self.classes.get(&normalize_class(raw_label)).copied().ok_or_else(|| {
            Error::Mapping(format!(
                "class '{raw_label}' is not in the label map for schema '{}'",
                self.schema
            ))
        })
    }
}

fn normalize_class(s: &str) -> String {
    s.trim().to_lowercase()
}

const BUILTIN_LABEL_MAPS: [&str; 7] = [
    include_str!("../labelmaps/alm.toml"),
    include_str!("../labelmaps/isear.toml"),
    include_str!("../labelmaps/semeval2007.toml"),
    include_str!("../labelmaps/semeval2018.toml"),
    include_str!("../labelmaps/semeval2019.toml"),
    include_str!("../labelmaps/neviarouskaya2010.toml"),
    include_str!("../labelmaps/neviarouskaya2011.toml"),
];

/// Registry of label maps keyed by (case-insensitive) schema name.
#[derive(Debug, Clone, Default)]
pub struct LabelMaps {
    maps: BTreeMap<String, LabelMap>,
}

impl LabelMaps {
    /// The maps shipped with the crate for the seven emotion sources.
    pub fn builtin() -> Self {
        let mut maps = Self::default();
        for doc in BUILTIN_LABEL_MAPS {
            maps.register(LabelMap::from_toml_str(doc).expect("shipped label map is valid"));
        }
        maps
    }

    /// Load every `*.toml` file of a directory.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut maps = Self::default();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "toml"))
            .collect();
        paths.sort();
        for p in paths {
            maps.register(LabelMap::from_file(&p)?);
        }
        Ok(maps)
    }

    pub fn register(&mut self, map: LabelMap) {
        self.maps.insert(map.schema.to_lowercase(), map);
    }

    pub fn get(&self, schema: &str) -> Result<&LabelMap> {
        self.maps
            .get(&schema.to_lowercase())
            .ok_or_else(|| Error::Mapping(format!("no label map registered for schema '{schema}'")))
    }

    pub fn schemas(&self) -> impl Iterator<Item = &str> {
        self.maps.values().map(|m| m.schema.as_str())
    }
}

/// Map a source-schema emotion class onto the binary emotional / non-emotional label.
pub fn unify_emotion_labels(raw_label: &str, schema: &str, maps: &LabelMaps) -> Result<EmotionLabel> {
    maps.get(schema)?.map(raw_label)
}

/// Read a raw emotion source file (same line layout as canonical corpora, `label` holding a
/// source-schema class string) and convert every record to the binary label set.
///
/// Records without a topic are assigned the dataset name as topic. No record is ever dropped:
/// an unmapped class aborts the conversion.
pub fn load_raw_emotion_corpus(
    path: &Path,
    manifest: &DatasetManifest,
    schema: &str,
    maps: &LabelMaps,
    check: ManifestCheck,
) -> Result<LoadedCorpus> {
    if manifest.task != Task::EmotionBinary {
        return Err(Error::Config(format!("manifest '{}' is not an emotion corpus", manifest.name)));
    }
    let map = maps.get(schema)?;
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RecordLine = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        let class = match &raw.label {
            Some(Value::String(s)) => s.clone(),
            Some(other) => other.to_string(),
            None => {
                return Err(Error::Validation(format!("line {}: record '{}' has no label", idx + 1, raw.id)))
            }
        };
        let label = map
            .map(&class)
            .map_err(|e| Error::Mapping(format!("line {}: {e}", idx + 1)))?;
        records.push(LabeledSentence {
            id: raw.id,
            text: raw.text,
            topic: raw.topic.filter(|t| !t.trim().is_empty()).unwrap_or_else(|| manifest.name.clone()),
            label: Label::Emotion(label),
            dataset: manifest.name.clone(),
            annotations: None,
        });
    }
    let corpus = Corpus::new(Task::EmotionBinary, records)?;
    let warnings = check_manifest(&corpus, manifest);
    if !warnings.is_empty() && check == ManifestCheck::Strict {
        return Err(Error::Validation(warnings.join("; ")));
    }
    Ok(LoadedCorpus { corpus, warnings })
}

/// A sentence with raw per-annotator emotion labels and no adjudicated label yet.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedRecord {
    pub id: String,
    pub text: String,
    pub topic: String,
    pub annotations: Vec<Option<EmotionLabel>>,
}

/// Read annotated records (`id`, `text`, `topic`, `annotations`; any `label` is ignored).
pub fn load_annotated(path: &Path) -> Result<Vec<AnnotatedRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RecordLine = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        let annotations = raw
            .annotations
            .unwrap_or_default()
            .into_iter()
            .map(|a| match a {
                None => Ok(None),
                Some(s) => EmotionLabel::parse(&s).map(Some).ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    message: format!("unknown annotation '{s}'"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(AnnotatedRecord {
            id: raw.id,
            text: raw.text,
            topic: raw.topic.unwrap_or_default(),
            annotations,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MajorityOutcome {
    /// Records with a strict majority, in input order, with their majority label.
    pub kept: Vec<(AnnotatedRecord, EmotionLabel)>,
    pub dropped: Vec<String>,
}

impl MajorityOutcome {
    pub fn count(&self, label: EmotionLabel) -> usize {
        self.kept.iter().filter(|(_, l)| *l == label).count()
    }

    /// Canonical emotion corpus of the kept records, annotations retained.
    pub fn into_corpus(self, dataset: &str) -> Result<Corpus> {
        let records = self
            .kept
            .into_iter()
            .map(|(r, label)| LabeledSentence {
                id: r.id,
                text: r.text,
                topic: r.topic,
                label: Label::Emotion(label),
                dataset: dataset.to_string(),
                annotations: Some(r.annotations),
            })
            .collect();
        Corpus::new(Task::EmotionBinary, records)
    }
}

/// Keep records whose cast annotations have a strict majority label; drop ties.
///
/// Missing annotations (`None`) do not vote. A record with more than `n_annotators`
/// annotation slots, or with no cast vote at all, is a validation error.
pub fn majority_filter(records: &[AnnotatedRecord], n_annotators: usize) -> Result<MajorityOutcome> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for r in records {
        if r.annotations.len() > n_annotators {
            return Err(Error::Validation(format!(
                "record '{}' has {} annotations for {n_annotators} annotators",
                r.id,
                r.annotations.len()
            )));
        }
        let emotional = r.annotations.iter().filter(|a| **a == Some(EmotionLabel::Emotional)).count();
        let non = r.annotations.iter().filter(|a| **a == Some(EmotionLabel::NonEmotional)).count();
        let cast = emotional + non;
        if cast == 0 {
            return Err(Error::Validation(format!("record '{}' has no annotations", r.id)));
        }
        if 2 * emotional > cast {
            kept.push((r.clone(), EmotionLabel::Emotional));
        } else if 2 * non > cast {
            kept.push((r.clone(), EmotionLabel::NonEmotional));
        } else {
            dropped.push(r.id.clone());
        }
    }
    Ok(MajorityOutcome { kept, dropped })
}
