//! Quality scores split by predicted emotionality, with Welch tests and figure data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmotionLabel, Task};
use crate::error::{Error, Result};
use crate::metrics::{bonferroni, combine_pvalues_fisher, welch_t_test, PValueAdjustment};
use crate::transfer::{TaskHeadOutput, TaskPredictor};

/// Inclusive: a p-value equal to this is significant.
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionPrediction {
    pub id: String,
    pub label: EmotionLabel,
    /// Larger of the two class probabilities.
    pub confidence: f64,
}

/// Label every sentence with an emotion classifier; emotional iff P(emotional) ≥ 0.5.
pub fn predict_emotions(corpus: &Corpus, classifier: &dyn TaskPredictor) -> Result<Vec<EmotionPrediction>> {
    if classifier.task() != Task::EmotionBinary {
        return Err(Error::Config(format!("expected an emotion classifier, got a {} model", classifier.task())));
    }
    let outputs = classifier.predict(corpus)?;
    if outputs.len() != corpus.len() {
        return Err(Error::Backend(format!("{} predictions for {} sentences", outputs.len(), corpus.len())));
    }
    corpus
        .records()
        .iter()
        .zip(outputs)
        .map(|(r, out)| {
            let TaskHeadOutput::ClassProbs([pe, pn]) = out else {
                return Err(Error::Backend("emotion classifier emitted a score".into()));
            };
            let label = if pe >= 0.5 { EmotionLabel::Emotional } else { EmotionLabel::NonEmotional };
            Ok(EmotionPrediction { id: r.id.clone(), label, confidence: pe.max(pn) })
        })
        .collect()
}

/// Gold labels of an annotated emotion corpus in prediction form, confidence 1.
pub fn predictions_from_gold(corpus: &Corpus) -> Result<Vec<EmotionPrediction>> {
    if corpus.task() != Task::EmotionBinary {
        return Err(Error::Config(format!("expected an emotion corpus, got {}", corpus.task())));
    }
    Ok(corpus
        .records()
        .iter()
        .map(|r| {
            let emotional = r.label.is_positive() == Some(true);
            let label = if emotional { EmotionLabel::Emotional } else { EmotionLabel::NonEmotional };
            EmotionPrediction { id: r.id.clone(), label, confidence: 1.0 }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    /// `None` for an empty group.
    pub mean: Option<f64>,
    /// Sample standard deviation; `None` below two scores.
    pub std: Option<f64>,
    pub scores: Vec<f64>,
}

impl GroupStats {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let count = scores.len();
        let mean = (count > 0).then(|| scores.iter().sum::<f64>() / count as f64);
        let std = mean.filter(|_| count > 1).map(|m| {
            (scores.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (count - 1) as f64).sqrt()
        });
        Self { count, mean, std, scores }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedQuality {
    pub dataset: String,
    pub model: String,
    pub emotional: GroupStats,
    pub non_emotional: GroupStats,
}

impl GroupedQuality {
    /// Emotional mean minus non-emotional mean, when both exist.
    pub fn delta(&self) -> Option<f64> {
        Some(self.emotional.mean? - self.non_emotional.mean?)
    }

    pub fn group(&self, label: EmotionLabel) -> &GroupStats {
        match label {
            EmotionLabel::Emotional => &self.emotional,
            EmotionLabel::NonEmotional => &self.non_emotional,
        }
    }
}

/// Partition the corpus's quality scores by the predicted label of each sentence.
pub fn group_quality_by_emotion(
    aq_corpus: &Corpus,
    predictions: &[EmotionPrediction],
    model: &str,
) -> Result<GroupedQuality> {
    if aq_corpus.task() != Task::ArgumentQuality {
        return Err(Error::Config(format!("expected a quality corpus, got {}", aq_corpus.task())));
    }
    let by_id: BTreeMap<&str, EmotionLabel> = predictions.iter().map(|p| (p.id.as_str(), p.label)).collect();
    let (mut emo, mut non) = (Vec::new(), Vec::new());
    for r in aq_corpus.records() {
        let label = by_id
            .get(r.id.as_str())
            .ok_or_else(|| Error::Input(format!("no emotion prediction for sentence '{}'", r.id)))?;
        let score = r.label.as_score().expect("quality corpus holds scores");
        match label {
            EmotionLabel::Emotional => emo.push(score),
            EmotionLabel::NonEmotional => non.push(score),
        }
    }
    let grouped = GroupedQuality {
        dataset: aq_corpus.dataset().unwrap_or("unknown").to_string(),
        model: model.to_string(),
        emotional: GroupStats::from_scores(emo),
        non_emotional: GroupStats::from_scores(non),
    };
    for label in [EmotionLabel::Emotional, EmotionLabel::NonEmotional] {
        if grouped.group(label).count == 0 {
            log::warn!("{} / {}: no {label} sentences; group mean undefined", grouped.dataset, grouped.model);
        }
    }
    Ok(grouped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub dataset: String,
    pub model: String,
    pub n_emotional: usize,
    pub n_non_emotional: usize,
    pub delta: Option<f64>,
    pub t: Option<f64>,
    pub df: Option<f64>,
    /// `None` marks a degenerate cell (a group below two scores or with no variance).
    pub p: Option<f64>,
    /// Bonferroni-adjusted within the model's datasets.
    pub p_bonferroni: Option<f64>,
    pub significant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedRow {
    pub model: String,
    pub method: PValueAdjustment,
    pub n_tests: usize,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub rows: Vec<SignificanceRow>,
    pub combined: Vec<CombinedRow>,
}

pub fn is_significant(p: f64) -> bool {
    p <= SIGNIFICANCE_LEVEL
}

/// Welch test per (dataset, model) cell, then a per-model combination across datasets.
pub fn significance_report(grouped: &[GroupedQuality], method: PValueAdjustment) -> Result<SignificanceReport> {
    let mut rows: Vec<SignificanceRow> = grouped
        .iter()
        .map(|g| {
            let test = welch_t_test(&g.emotional.scores, &g.non_emotional.scores).ok();
            SignificanceRow {
                dataset: g.dataset.clone(),
                model: g.model.clone(),
                n_emotional: g.emotional.count,
                n_non_emotional: g.non_emotional.count,
                delta: g.delta(),
                t: test.map(|w| w.t),
                df: test.map(|w| w.df),
                p: test.map(|w| w.p_two_sided),
                p_bonferroni: None,
                significant: test.map(|w| is_significant(w.p_two_sided)),
            }
        })
        .collect();

    let mut by_model: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if r.p.is_some() {
            by_model.entry(r.model.clone()).or_default().push(i);
        }
    }
    let mut combined = Vec::new();
    for (model, idx) in by_model {
        let ps: Vec<f64> = idx.iter().map(|&i| rows[i].p.expect("filtered")).collect();
        let adjusted = bonferroni(&ps)?;
        for (&i, &a) in idx.iter().zip(&adjusted) {
            rows[i].p_bonferroni = Some(a);
        }
        let p = match method {
            // Underflowed tail probabilities would make the log-sum infinite.
            PValueAdjustment::Fisher => {
                let floored: Vec<f64> = ps.iter().map(|p| p.max(f64::MIN_POSITIVE)).collect();
                combine_pvalues_fisher(&floored)?.p
            }
            PValueAdjustment::Bonferroni => adjusted.iter().copied().fold(1.0, f64::min),
        };
        combined.push(CombinedRow { model, method, n_tests: ps.len(), p, significant: is_significant(p) });
    }
    Ok(SignificanceReport { rows, combined })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Tidy figure data: one `dataset,model,group,score` row per sentence.
pub fn write_grouped_csv<W: Write>(grouped: &[GroupedQuality], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["dataset", "model", "group", "score"])?;
    for g in grouped {
        for label in [EmotionLabel::Emotional, EmotionLabel::NonEmotional] {
            for s in &g.group(label).scores {
                w.write_record([g.dataset.as_str(), g.model.as_str(), label.as_str(), &s.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_significance_csv<W: Write>(report: &SignificanceReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "dataset",
        "model",
        "n_emotional",
        "n_non_emotional",
        "delta",
        "t",
        "df",
        "p",
        "p_bonferroni",
        "significant",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.dataset.clone(),
            r.model.clone(),
            r.n_emotional.to_string(),
            r.n_non_emotional.to_string(),
            opt(r.delta),
            opt(r.t),
            opt(r.df),
            opt(r.p),
            opt(r.p_bonferroni),
            r.significant.map_or_else(|| "NA".to_string(), |s| s.to_string()),
        ])?;
    }
    for c in &report.combined {
        let method = match c.method {
            PValueAdjustment::Fisher => "combined:fisher",
            PValueAdjustment::Bonferroni => "combined:bonferroni",
        };
        w.write_record([
            method.to_string(),
            c.model.clone(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            c.n_tests.to_string(),
            c.p.to_string(),
            String::new(),
            c.significant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Box-plot summary: whiskers at min/max, box at the quartiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn box_summary(scores: &[f64]) -> Option<BoxSummary> {
    if scores.is_empty() {
        return None;
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    Some(BoxSummary {
        min: s[0],
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
        max: s[s.len() - 1],
    })
}

/// Side-by-side emotional / non-emotional box plots, one panel per grouped entry, on a [0, 1] axis.
pub fn render_box_plot_svg(grouped: &[GroupedQuality]) -> String {
    const PANEL_W: f64 = 160.0;
    const HEIGHT: f64 = 320.0;
    const TOP: f64 = 40.0;
    const PLOT_H: f64 = 220.0;
    const LEFT: f64 = 40.0;
    let width = LEFT + PANEL_W * grouped.len().max(1) as f64 + 10.0;
    let y = |v: f64| TOP + PLOT_H * (1.0 - v.clamp(0.0, 1.0));
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" x2="{}" y1="{y0}" y2="{y0}" stroke="#ddd"/><text x="4" y="{}">{tick:.2}</text>"##,
            width - 10.0,
            y(tick) + 4.0,
            y0 = y(tick)
        );
    }
    for (k, g) in grouped.iter().enumerate() {
        let x0 = LEFT + PANEL_W * k as f64;
        for (j, (label, colour)) in
            [(EmotionLabel::Emotional, "#d95f02"), (EmotionLabel::NonEmotional, "#1b9e77")].iter().enumerate()
        {
            let cx = x0 + 45.0 + 70.0 * j as f64;
            if let Some(b) = box_summary(&g.group(*label).scores) {
                let _ = writeln!(
                    svg,
                    r##"<line x1="{cx}" x2="{cx}" y1="{}" y2="{}" stroke="#333"/><rect x="{}" y="{}" width="40" height="{}" fill="{colour}" fill-opacity="0.6" stroke="#333"/><line x1="{}" x2="{}" y1="{m}" y2="{m}" stroke="#000" stroke-width="2"/>"##,
                    y(b.max),
                    y(b.min),
                    cx - 20.0,
                    y(b.q3),
                    (y(b.q1) - y(b.q3)).max(0.5),
                    cx - 20.0,
                    cx + 20.0,
                    m = y(b.median)
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{cx}" y="{}" text-anchor="middle">{} (n={})</text>"#,
                TOP + PLOT_H + 16.0,
                if j == 0 { "emo" } else { "non-emo" },
                g.group(*label).count
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{} / {}</text>"#,
            x0 + 80.0,
            TOP - 14.0,
            xml_escape(&g.dataset),
            xml_escape(&g.model)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Label, LabeledSentence};

    fn aq(scores: &[f64]) -> Corpus {
        Corpus::new(
            Task::ArgumentQuality,
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| LabeledSentence {
                    id: format!("s{i}"),
                    text: format!("sentence {i}"),
                    topic: "t".into(),
                    label: Label::Score(s),
                    dataset: "toy".into(),
                    annotations: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn pred(id: &str, label: EmotionLabel) -> EmotionPrediction {
        EmotionPrediction { id: id.into(), label, confidence: 1.0 }
    }

    #[test]
    fn grouping_arithmetic() {
        use EmotionLabel::*;
        let c = aq(&[0.7, 0.7, 0.5, 0.5]);
        let preds = [pred("s0", Emotional), pred("s1", Emotional), pred("s2", NonEmotional), pred("s3", NonEmotional)];
        let g = group_quality_by_emotion(&c, &preds, "m").unwrap();
        assert_eq!(g.emotional.mean, Some(0.7));
        assert_eq!(g.non_emotional.mean, Some(0.5));
        assert!((g.delta().unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(g.emotional.count + g.non_emotional.count, 4);
    }

    #[test]
    fn grouping_single_group_and_missing() {
        use EmotionLabel::*;
        let c = aq(&[0.1, 0.2]);
        let g = group_quality_by_emotion(&c, &[pred("s0", Emotional), pred("s1", Emotional)], "m").unwrap();
        assert_eq!(g.non_emotional.count, 0);
        assert_eq!(g.non_emotional.mean, None);
        assert_eq!(g.delta(), None);
        assert!(matches!(group_quality_by_emotion(&c, &[pred("s0", Emotional)], "m"), Err(Error::Input(_))));
    }

    fn grouped(emo: Vec<f64>, non: Vec<f64>, dataset: &str) -> GroupedQuality {
        GroupedQuality {
            dataset: dataset.into(),
            model: "m".into(),
            emotional: GroupStats::from_scores(emo),
            non_emotional: GroupStats::from_scores(non),
        }
    }

    #[test]
    fn significance_identical_and_degenerate() {
        let same = grouped(vec![0.2, 0.4, 0.6], vec![0.2, 0.4, 0.6], "a");
        let degenerate = grouped(vec![0.5], vec![0.2, 0.4], "b");
        let report = significance_report(&[same, degenerate], PValueAdjustment::Fisher).unwrap();
        assert_eq!(report.rows[0].p, Some(1.0));
        assert_eq!(report.rows[0].significant, Some(false));
        assert_eq!(report.rows[1].p, None);
        assert_eq!(report.combined.len(), 1);
        assert_eq!(report.combined[0].n_tests, 1);
    }

    #[test]
    fn significance_threshold_inclusive() {
        assert!(is_significant(0.01));
        assert!(!is_significant(0.010_000_001));
    }

    #[test]
    fn significance_swap_invariant() {
        let g = grouped(vec![0.3, 0.5, 0.9, 0.4], vec![0.1, 0.2, 0.35], "a");
        let swapped = grouped(g.non_emotional.scores.clone(), g.emotional.scores.clone(), "a");
        let p1 = significance_report(&[g], PValueAdjustment::Fisher).unwrap().rows[0].p.unwrap();
        let p2 = significance_report(&[swapped], PValueAdjustment::Fisher).unwrap().rows[0].p.unwrap();
        assert!((p1 - p2).abs() < 1e-15);
    }

    #[test]
    fn csv_and_svg_outputs() {
        let g = grouped(vec![0.3, 0.5], vec![0.1, 0.2, 0.35], "a&b");
        let mut buf = Vec::new();
        write_grouped_csv(std::slice::from_ref(&g), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.contains("a&b,m,non-emotional,0.35"));
        let report = significance_report(std::slice::from_ref(&g), PValueAdjustment::Bonferroni).unwrap();
        let mut buf = Vec::new();
        write_significance_csv(&report, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("combined:bonferroni"));
        let svg = render_box_plot_svg(&[g]);
        assert!(svg.starts_with("<svg") && svg.contains("a&amp;b") && svg.contains("n=3"));
    }

    #[test]
    fn box_summary_quartiles() {
        let b = box_summary(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert!(box_summary(&[]).is_none());
    }
}
