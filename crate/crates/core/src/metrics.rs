//! Evaluation and agreement statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// Predictions paired with gold values.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    predictions: Vec<f64>,
    gold: Vec<f64>,
}

impl PairedSeries {
    pub fn new(predictions: Vec<f64>, gold: Vec<f64>) -> Result<Self> {
        if predictions.len() != gold.len() {
            return Err(Error::Input(format!(
                "series lengths differ: {} predictions vs {} gold",
                predictions.len(),
                gold.len()
            )));
        }
        if predictions.len() < 2 {
            return Err(Error::Input("correlation needs at least 2 pairs".into()));
        }
        if predictions.iter().chain(&gold).any(|v| v.is_nan()) {
            return Err(Error::Input("series contains NaN".into()));
        }
        Ok(Self { predictions, gold })
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn gold(&self) -> &[f64] {
        &self.gold
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson(series: &PairedSeries) -> Result<f64> {
    pearson_slices(&series.predictions, &series.gold)
}

fn pearson_slices(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(series: &PairedSeries) -> Result<f64> {
    pearson_slices(&average_ranks(&series.predictions), &average_ranks(&series.gold))
}

/// Per-class confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ClassCounts {
    /// F1 of one class; 0 when the class never occurs in predictions or gold.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

/// Unweighted mean of per-class F1 over the union of predicted, gold and `declared` classes.
pub fn macro_f1<L: Ord + Clone>(predictions: &[L], gold: &[L], declared: &[L]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::Input(format!(
            "macro F1 length mismatch: {} predictions vs {} gold",
            predictions.len(),
            gold.len()
        )));
    }
    let mut counts: BTreeMap<L, ClassCounts> = BTreeMap::new();
    for c in declared.iter().chain(predictions).chain(gold) {
        counts.entry(c.clone()).or_default();
    }
    if counts.is_empty() {
        return Err(Error::Undefined("macro F1 over an empty class inventory".into()));
    }
    for (p, g) in predictions.iter().zip(gold) {
        if p == g {
            counts.get_mut(p).expect("class registered").tp += 1;
        } else {
            counts.get_mut(p).expect("class registered").fp += 1;
            counts.get_mut(g).expect("class registered").fn_ += 1;
        }
    }
    Ok(mean_of(counts.values().map(ClassCounts::f1)))
}

fn mean_of(f1s: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = f1s.fold((0.0, 0usize), |(s, n), f| (s + f, n + 1));
    sum / n as f64
}

/// Macro F1 of a binary problem given as positive-class indicators; both classes are declared.
pub fn binary_macro_f1(predicted_positive: &[bool], gold_positive: &[bool]) -> Result<f64> {
    macro_f1(predicted_positive, gold_positive, &[false, true])
}

/// Items × annotators matrix of nominal labels; `None` marks a missing label.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementTable<L> {
    rows: Vec<Vec<Option<L>>>,
    n_annotators: usize,
}

impl<L: Ord + Clone> AgreementTable<L> {
    pub fn new(rows: Vec<Vec<Option<L>>>) -> Result<Self> {
        let n_annotators = rows.first().map_or(0, Vec::len);
        if n_annotators < 2 {
            return Err(Error::Validation("agreement table needs at least 2 annotators".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != n_annotators) {
            return Err(Error::Validation(format!(
                "agreement row {bad} has {} columns, expected {n_annotators}",
                rows[bad].len()
            )));
        }
        if !rows.iter().any(|r| r.iter().flatten().count() >= 2) {
            return Err(Error::Validation("no item carries at least 2 labels".into()));
        }
        Ok(Self { rows, n_annotators })
    }

    pub fn rows(&self) -> &[Vec<Option<L>>] {
        &self.rows
    }

    pub fn n_items(&self) -> usize {
        self.rows.len()
    }

    pub fn n_annotators(&self) -> usize {
        self.n_annotators
    }

    /// Labels given by one annotator, aligned with items.
    pub fn column(&self, annotator: usize) -> impl Iterator<Item = Option<&L>> {
        self.rows.iter().map(move |r| r[annotator].as_ref())
    }
}

/// Krippendorff's alpha for nominal data via the coincidence matrix.
///
/// Units with fewer than two labels are not pairable and are ignored. When every
/// pairable value falls into a single category there is no expected disagreement;
/// observed agreement is then perfect and 1.0 is returned.
pub fn krippendorff_alpha<L: Ord + Clone>(table: &AgreementTable<L>) -> Result<f64> {
    let mut coincidence: BTreeMap<(L, L), f64> = BTreeMap::new();
    let mut marginals: BTreeMap<L, f64> = BTreeMap::new();
    for row in &table.rows {
        let mut unit: BTreeMap<&L, usize> = BTreeMap::new();
        for v in row.iter().flatten() {
            *unit.entry(v).or_default() += 1;
        }
        let m: usize = unit.values().sum();
        if m < 2 {
            continue;
        }
        let weight = 1.0 / (m - 1) as f64;
        for (&c, &nc) in &unit {
            for (&k, &nk) in &unit {
                let pairs = if c == k { nc * (nc - 1) } else { nc * nk };
                if pairs > 0 {
                    *coincidence.entry((c.clone(), k.clone())).or_default() += pairs as f64 * weight;
                }
            }
            *marginals.entry(c.clone()).or_default() += nc as f64;
        }
    }
    let n: f64 = marginals.values().sum();
    if n < 2.0 {
        return Err(Error::Undefined("fewer than 2 pairable values".into()));
    }
    let observed: f64 = coincidence
        .iter()
        .filter(|((c, k), _)| c != k)
        .map(|(_, v)| v)
        .sum();
    let sum_sq: f64 = marginals.values().map(|v| v * v).sum();
    let expected = n * n - sum_sq;
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// Result of Welch's unequal-variance t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

/// Welch's two-sample t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(group_a: &[f64], group_b: &[f64]) -> Result<WelchTest> {
    for (name, g) in [("a", group_a), ("b", group_b)] {
        if g.len() < 2 {
            return Err(Error::Undefined(format!("group {name} has fewer than 2 values")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Undefined(format!("group {name} has non-finite values")));
        }
    }
    let (ma, va) = mean_var(group_a);
    let (mb, vb) = mean_var(group_b);
    let (na, nb) = (group_a.len() as f64, group_b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Err(Error::Undefined("both groups have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = special::student_t_two_sided(t, df).clamp(0.0, 1.0);
    Ok(WelchTest { t, df, p_two_sided: p })
}

/// Mean and sample (n − 1) variance.
fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (m, if v.len() > 1 { ss / (n - 1.0) } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherCombination {
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
}

/// Fisher's method: X = −2 Σ ln pᵢ, referred to chi-square with 2k degrees of freedom.
pub fn combine_pvalues_fisher(pvalues: &[f64]) -> Result<FisherCombination> {
    if pvalues.is_empty() {
        return Err(Error::Input("no p-values to combine".into()));
    }
    if let Some(bad) = pvalues.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::Input(format!("p-value {bad} outside (0, 1]")));
    }
    let statistic = -2.0 * pvalues.iter().map(|p| p.ln()).sum::<f64>();
    let df = 2 * pvalues.len();
    let p = special::chi_square_sf(statistic, df as f64).clamp(0.0, 1.0);
    Ok(FisherCombination { statistic, df, p })
}

/// Bonferroni-adjusted p-values, `min(1, m·p)`.
pub fn bonferroni(pvalues: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Input(format!("p-value {bad} outside [0, 1]")));
    }
    let m = pvalues.len() as f64;
    Ok(pvalues.iter().map(|p| (p * m).min(1.0)).collect())
}

/// How p-values from several tests are reconciled in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueAdjustment {
    #[default]
    Fisher,
    Bonferroni,
}

/// Mean ± sample standard deviation over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    /// Set when only one value was available and `std` is a placeholder 0.
    pub single_value: bool,
}

/// Arithmetic mean and sample (n − 1) standard deviation; a single value yields std 0, flagged.
pub fn aggregate_seeds(values: &[f64]) -> Result<SeedAggregate> {
    if values.is_empty() {
        return Err(Error::Input("no per-seed values to aggregate".into()));
    }
    let (mean, var) = mean_var(values);
    Ok(SeedAggregate { mean, std: var.sqrt(), n: values.len(), single_value: values.len() == 1 })
}

/// Sorted distinct labels, for building declared class lists.
pub fn class_inventory<L: Ord + Clone>(labels: &[L]) -> Vec<L> {
    labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}
