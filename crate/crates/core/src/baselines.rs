//! Non-learned emotion baselines and the leave-one-annotator-out human ceiling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmotionLabel, Task};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_seeds, binary_macro_f1, class_inventory, macro_f1, AgreementTable};
use crate::text::word_tokens;
use crate::transfer::{TaskHeadOutput, TaskPredictor};

/// Lower-cased single-token emotion terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    terms: BTreeSet<String>,
}

impl Lexicon {
    pub fn from_terms<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for t in terms {
            let t = t.as_ref().trim().to_lowercase();
            if t.is_empty() {
                continue;
            }
            if word_tokens(&t).count() != 1 {
                return Err(Error::Config(format!("lexicon entry '{t}' is not a single token")));
            }
            set.insert(t);
        }
        if set.is_empty() {
            return Err(Error::Config("emotion lexicon is empty".into()));
        }
        Ok(Self { terms: set })
    }

    /// Reads `term<TAB>emotion<TAB>0|1` lines. Every term flagged 1 for any category is kept;
    /// multi-word terms are skipped.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut terms = BTreeSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [term, _emotion, flag] = fields[..] else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            };
            match flag.trim() {
                "1" => {
                    let term = term.trim().to_lowercase();
                    if word_tokens(&term).count() == 1 && !term.chars().any(char::is_whitespace) {
                        terms.insert(term);
                    }
                }
                "0" => {}
                other => {
                    return Err(Error::Parse { line: i + 1, message: format!("flag must be 0 or 1, got '{other}'") })
                }
            }
        }
        Self::from_terms(terms)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open lexicon {}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.terms.contains(token)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

fn emotional_if(hit: bool) -> EmotionLabel {
    if hit {
        EmotionLabel::Emotional
    } else {
        EmotionLabel::NonEmotional
    }
}

const PRONOUNS: [&str; 3] = ["i", "you", "me"];

/// Emotional iff the text contains the word "I", "you" or "me", in any case.
pub fn pronoun_baseline(text: &str) -> EmotionLabel {
    emotional_if(word_tokens(text).any(|t| PRONOUNS.contains(&t.as_str())))
}

/// Emotional iff any token of the text is a lexicon term.
pub fn nrc_baseline(text: &str, lexicon: &Lexicon) -> EmotionLabel {
    emotional_if(word_tokens(text).any(|t| lexicon.contains(&t)))
}

/// Constant classifier emitting the most frequent training label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MajorityClassifier {
    pub label: EmotionLabel,
}

/// Fit the majority class; an exact tie goes to non-emotional.
pub fn majority_baseline(train_labels: &[EmotionLabel]) -> Result<MajorityClassifier> {
    if train_labels.is_empty() {
        return Err(Error::Input("majority baseline needs at least one training label".into()));
    }
    let emotional = train_labels.iter().filter(|&&l| l == EmotionLabel::Emotional).count();
    let label = emotional_if(emotional * 2 > train_labels.len());
    Ok(MajorityClassifier { label })
}

/// The three baselines behind one predictor interface.
#[derive(Debug, Clone)]
pub enum Baseline {
    Majority(MajorityClassifier),
    Pronoun,
    Lexicon(Lexicon),
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Majority(_) => "majority",
            Baseline::Pronoun => "pronoun",
            Baseline::Lexicon(_) => "nrc",
        }
    }

    pub fn classify(&self, text: &str) -> EmotionLabel {
        match self {
            Baseline::Majority(m) => m.label,
            Baseline::Pronoun => pronoun_baseline(text),
            Baseline::Lexicon(lex) => nrc_baseline(text, lex),
        }
    }
}

impl TaskPredictor for Baseline {
    fn task(&self) -> Task {
        Task::EmotionBinary
    }

    fn predict(&self, corpus: &Corpus) -> Result<Vec<TaskHeadOutput>> {
        Ok(corpus
            .records()
            .iter()
            .map(|r| match self.classify(&r.text) {
                EmotionLabel::Emotional => TaskHeadOutput::ClassProbs([1.0, 0.0]),
                EmotionLabel::NonEmotional => TaskHeadOutput::ClassProbs([0.0, 1.0]),
            })
            .collect())
    }
}

/// Macro-F1 of `baseline` on a gold emotion corpus.
pub fn evaluate_baseline(baseline: &Baseline, corpus: &Corpus) -> Result<f64> {
    if corpus.task() != Task::EmotionBinary {
        return Err(Error::Config(format!("baselines score emotion corpora, got {}", corpus.task())));
    }
    let gold: Vec<bool> = corpus.records().iter().filter_map(|r| r.label.is_positive()).collect();
    let pred: Vec<bool> = corpus
        .records()
        .iter()
        .map(|r| baseline.classify(&r.text) == EmotionLabel::Emotional)
        .collect();
    binary_macro_f1(&pred, &gold)
}

/// What to do with an item when the remaining annotators tie.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Drop the item for that annotator.
    #[default]
    Exclude,
    /// Use the majority of the full panel, the held-out annotator included; drop only if that
    /// ties as well.
    FullPanelFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanPerformance {
    pub mean: f64,
    pub std: f64,
    pub policy: TiePolicy,
    /// Macro-F1 per annotator; `None` when no item could be scored for them.
    pub per_annotator: Vec<Option<f64>>,
    pub items_scored: Vec<usize>,
    pub items_excluded: Vec<usize>,
}

fn strict_majority<'a, L: Ord>(votes: impl Iterator<Item = &'a L>) -> Option<&'a L>
where
    L: 'a,
{
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    let mut total = 0;
    for v in votes {
        *counts.entry(v).or_default() += 1;
        total += 1;
    }
    let (&label, &n) = counts.iter().max_by_key(|(_, &n)| n)?;
    let tied = counts.values().filter(|&&c| c == n).count() > 1;
    (!tied && total > 0).then_some(label)
}

/// Score each annotator against the majority label of the others and summarize.
pub fn human_performance<L: Ord + Clone>(table: &AgreementTable<L>, policy: TiePolicy) -> Result<HumanPerformance> {
    let n_ann = table.n_annotators();
    if n_ann < 3 {
        return Err(Error::Input(format!("human performance needs at least 3 annotators, got {n_ann}")));
    }
    let declared = class_inventory(&table.rows().iter().flatten().flatten().cloned().collect::<Vec<_>>());
    let mut per_annotator = Vec::with_capacity(n_ann);
    let mut items_scored = Vec::with_capacity(n_ann);
    let mut items_excluded = Vec::with_capacity(n_ann);
    for a in 0..n_ann {
        let (mut pred, mut gold) = (Vec::new(), Vec::new());
        let mut excluded = 0;
        for row in table.rows() {
            let Some(own) = &row[a] else { continue };
            let others = row.iter().enumerate().filter(|(j, _)| *j != a).filter_map(|(_, l)| l.as_ref());
            let mut reference = strict_majority(others);
            if reference.is_none() && policy == TiePolicy::FullPanelFallback {
                reference = strict_majority(row.iter().flatten());
            }
            match reference {
                Some(r) => {
                    pred.push(own.clone());
                    gold.push(r.clone());
                }
                None => excluded += 1,
            }
        }
        items_scored.push(pred.len());
        items_excluded.push(excluded);
        per_annotator.push(if pred.is_empty() { None } else { Some(macro_f1(&pred, &gold, &declared)?) });
    }
    let scored: Vec<f64> = per_annotator.iter().flatten().copied().collect();
    let skipped = n_ann - scored.len();
    if skipped > 0 {
        log::warn!("{skipped} annotator(s) had no items with a unique reference label and were skipped");
    }
    let agg = aggregate_seeds(&scored)
        .map_err(|_| Error::Undefined("no annotator has an item with a unique reference label".into()))?;
    Ok(HumanPerformance { mean: agg.mean, std: agg.std, policy, per_annotator, items_scored, items_excluded })
}
