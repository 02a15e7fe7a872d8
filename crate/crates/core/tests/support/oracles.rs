//! Definition-level reference implementations used to cross-check the library.
//!
//! Nothing here calls into `argqual_core`; each routine follows the textbook definition
//! as directly as possible, trading speed for obviousness.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;
use statrs::statistics::Statistics;

/// Sample correlation as covariance over the product of standard deviations.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let cov = x.iter().copied().covariance(y.iter().copied());
    cov / (x.iter().copied().std_dev() * y.iter().copied().std_dev())
}

/// Rank by counting: 1 + number strictly below + half the number of other ties.
pub fn counting_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let below = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&counting_ranks(x), &counting_ranks(y))
}

/// Mean per-class F1 over the union of observed and declared classes.
pub fn macro_f1<L: Ord + Clone>(pred: &[L], gold: &[L], declared: &[L]) -> f64 {
    let classes: BTreeSet<L> = pred.iter().chain(gold).chain(declared).cloned().collect();
    let mut sum = 0.0;
    for c in &classes {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for (p, g) in pred.iter().zip(gold) {
            match (p == c, g == c) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                _ => {}
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        sum += if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    }
    sum / classes.len() as f64
}

/// Nominal alpha from explicit enumeration of ordered value pairs.
///
/// Observed disagreement weighs each within-unit pair by 1/(m_u − 1); expected
/// disagreement counts mismatching pairs over all pairable values.
pub fn krippendorff_alpha<L: PartialEq>(rows: &[Vec<Option<L>>]) -> f64 {
    let units: Vec<Vec<&L>> = rows
        .iter()
        .map(|r| r.iter().flatten().collect::<Vec<_>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let n: usize = units.iter().map(Vec::len).sum();
    let mut d_o = 0.0;
    for u in &units {
        let mut mismatches = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    mismatches += 1.0;
                }
            }
        }
        d_o += mismatches / (u.len() - 1) as f64;
    }
    d_o /= n as f64;
    let all: Vec<&L> = units.iter().flatten().copied().collect();
    let mut d_e = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j && all[i] != all[j] {
                d_e += 1.0;
            }
        }
    }
    d_e /= (n * (n - 1)) as f64;
    if d_e == 0.0 {
        1.0
    } else {
        1.0 - d_o / d_e
    }
}

/// Welch statistic and Welch–Satterthwaite degrees of freedom from the definitions.
pub fn welch_t_df(a: &[f64], b: &[f64]) -> (f64, f64) {
    let va = a.iter().copied().variance() / a.len() as f64;
    let vb = b.iter().copied().variance() / b.len() as f64;
    let t = (a.iter().copied().mean() - b.iter().copied().mean()) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    (t, df)
}

/// Two-sided Student-t tail by numerical integration of the density.
///
/// With x = √ν·tan θ and d = π/2 − θ the tail becomes
/// 2c ∫₀^{atan(√ν/|t|)} sin^{ν−1}(d) dd, c = Γ((ν+1)/2) / (Γ(ν/2)√π),
/// which tanh-sinh quadrature handles despite the endpoint singularity for ν < 1.
pub fn t_two_sided_quadrature(t: f64, df: f64) -> f64 {
    let upper = (df.sqrt() / t.abs()).atan();
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / PI.sqrt();
    let h = 1.0 / 64.0;
    let mut sum = 0.0;
    for k in -256i32..=256 {
        let u = k as f64 * h;
        let s = PI / 2.0 * u.sinh();
        let ds = PI / 2.0 * u.cosh();
        let sig = logistic(2.0 * s);
        let sig_c = logistic(-2.0 * s);
        let d = upper * sig;
        if d <= 0.0 {
            continue;
        }
        let weight = 2.0 * upper * sig * sig_c * ds;
        sum += weight * d.sin().powf(df - 1.0);
    }
    (2.0 * c * sum * h).min(1.0)
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fisher's method via the closed-form chi-square survival for even degrees of freedom.
pub fn fisher_combined(pvalues: &[f64]) -> (f64, f64) {
    let x: f64 = -2.0 * pvalues.iter().map(|p| p.ln()).sum::<f64>();
    let h = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..pvalues.len() {
        term *= h / i as f64;
        sum += term;
    }
    (x, (-h).exp() * sum)
}

/// Best value of `f1` over thresholds on a uniform `points`-grid over [0, 1].
pub fn grid_best_threshold_f1(scores: &[f64], labels: &[bool], points: usize, f1: impl Fn(&[bool], &[bool]) -> f64) -> f64 {
    (0..points)
        .map(|i| {
            let alpha = i as f64 / (points - 1) as f64;
            let pred: Vec<bool> = scores.iter().map(|&s| s >= alpha).collect();
            f1(&pred, labels)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
