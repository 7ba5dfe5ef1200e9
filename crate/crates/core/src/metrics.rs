//! Classification and agreement metrics: confusion matrices, F-beta,
//! macro F1, balanced accuracy, multiclass MCC, quadratic-weighted kappa,
//! and binary grid scoring.
//!
//! All 0/0 ratios resolve to 0 so degenerate inputs produce scores, not
//! NaNs; genuinely unanswerable cases (too few kappa pairs, zero chance
//! disagreement) are errors instead.

use std::io::BufRead;

use crate::error::ParseError;
use crate::prep::GridActivity;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("truth has {truth} labels but predictions have {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("cannot score an empty label list")]
    Empty,
    #[error("class {class} does not appear in the confusion matrix")]
    UnknownClass { class: String },
    #[error("need at least 2 score pairs, got {got}")]
    TooFewPairs { got: usize },
    #[error("chance disagreement is zero: every pair sits in one agreeing category")]
    DegenerateMarginals,
    #[error("discovery scores must be between 1 and 5, got {0}")]
    ScoreOutOfRange(u8),
    #[error("grids differ in size: {truth} vs {pred}")]
    ShapeMismatch { truth: usize, pred: usize },
}

/// Confusion counts over the classes observed in a truth/prediction pair.
/// Rows index the true class, columns the predicted class. Classes are
/// ordered by first appearance in truth followed by predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix<L> {
    classes: Vec<L>,
    counts: Vec<Vec<usize>>,
}

impl<L: PartialEq + Clone + std::fmt::Debug> ConfusionMatrix<L> {
    pub fn from_labels(truth: &[L], predictions: &[L]) -> Result<Self, MetricsError> {
        if truth.len() != predictions.len() {
            return Err(MetricsError::LengthMismatch {
                truth: truth.len(),
                pred: predictions.len(),
            });
        }
        if truth.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut classes: Vec<L> = Vec::new();
        for label in truth.iter().chain(predictions) {
            if !classes.contains(label) {
                classes.push(label.clone());
            }
        }
        let k = classes.len();
        let mut counts = vec![vec![0usize; k]; k];
        let index_of = |label: &L| classes.iter().position(|c| c == label).unwrap();
        for (t, p) in truth.iter().zip(predictions) {
            counts[index_of(t)][index_of(p)] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> &[L] {
        &self.classes
    }

    /// Row-major counts; `counts()[i][j]` is true class i predicted as j.
    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    fn class_index(&self, class: &L) -> Result<usize, MetricsError> {
        self.classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| MetricsError::UnknownClass {
                class: format!("{class:?}"),
            })
    }

    /// Precision, recall, and F-beta for one class, one-vs-rest. Empty
    /// ratios (no predicted positives, no true positives, or P = R = 0)
    /// score 0 rather than NaN.
    pub fn fbeta(&self, class: &L, beta: f64) -> Result<(f64, f64, f64), MetricsError> {
        let c = self.class_index(class)?;
        let tp = self.counts[c][c] as f64;
        let fp: f64 = (0..self.classes.len())
            .filter(|&i| i != c)
            .map(|i| self.counts[i][c] as f64)
            .sum();
        let fn_: f64 = (0..self.classes.len())
            .filter(|&j| j != c)
            .map(|j| self.counts[c][j] as f64)
            .sum();
        let precision = ratio_or_zero(tp, tp + fp);
        let recall = ratio_or_zero(tp, tp + fn_);
        let b2 = beta * beta;
        let f = ratio_or_zero((1.0 + b2) * precision * recall, b2 * precision + recall);
        Ok((precision, recall, f))
    }

    /// Unweighted mean F1 over every class in the matrix.
    pub fn macro_f1(&self) -> f64 {
        let total: f64 = self
            .classes
            .iter()
            .map(|c| self.fbeta(c, 1.0).expect("class came from the matrix").2)
            .sum();
        total / self.classes.len() as f64
    }

    /// Mean recall over the classes that actually occur in the truth.
    pub fn balanced_accuracy(&self) -> f64 {
        let mut sum = 0.0;
        let mut with_truth = 0usize;
        for (c, class) in self.classes.iter().enumerate() {
            let true_count: usize = self.counts[c].iter().sum();
            if true_count > 0 {
                sum += self
                    .fbeta(class, 1.0)
                    .expect("class came from the matrix")
                    .1;
                with_truth += 1;
            }
        }
        sum / with_truth as f64
    }

    /// Multiclass Matthews correlation coefficient (the R_K statistic).
    /// Returns 0 when the denominator vanishes, e.g. when either side
    /// uses only one class.
    pub fn mcc(&self) -> f64 {
        let k = self.classes.len();
        let mut total = 0.0;
        let mut correct = 0.0;
        let mut true_marginal = vec![0.0; k];
        let mut pred_marginal = vec![0.0; k];
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &count) in row.iter().enumerate() {
                let n = count as f64;
                total += n;
                true_marginal[i] += n;
                pred_marginal[j] += n;
                if i == j {
                    correct += n;
                }
            }
        }
        let cross: f64 = (0..k).map(|c| true_marginal[c] * pred_marginal[c]).sum();
        let pred_sq: f64 = pred_marginal.iter().map(|p| p * p).sum();
        let true_sq: f64 = true_marginal.iter().map(|t| t * t).sum();
        let denominator = ((total * total - pred_sq) * (total * total - true_sq)).sqrt();
        if denominator == 0.0 {
            0.0
        } else {
            (correct * total - cross) / denominator
        }
    }
}

fn ratio_or_zero(numerator: f64, denominator: f64) -> f64 {
    if denominator == 0.0 {
        0.0
    } else {
        numerator / denominator
    }
}

/// One discovery rated by the expert and by the model, both on the
/// 1-to-5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScorePair {
    expert: u8,
    model: u8,
}

impl ScorePair {
    pub fn new(expert: u8, model: u8) -> Result<Self, MetricsError> {
        for score in [expert, model] {
            if !(1..=5).contains(&score) {
                return Err(MetricsError::ScoreOutOfRange(score));
            }
        }
        Ok(ScorePair { expert, model })
    }

    pub fn expert(&self) -> u8 {
        self.expert
    }

    pub fn model(&self) -> u8 {
        self.model
    }
}

/// Cohen's kappa with quadratic weights w_ij = (i-j)^2 / 16 over the
/// fixed 1..5 categories. Equals 1 exactly when every pair agrees;
/// errors when fewer than 2 pairs are given or when the expected
/// disagreement is zero (all mass in one agreeing cell).
pub fn quadratic_weighted_kappa(pairs: &[ScorePair]) -> Result<f64, MetricsError> {
    if pairs.len() < 2 {
        return Err(MetricsError::TooFewPairs { got: pairs.len() });
    }
    let mut observed = [[0.0f64; 5]; 5];
    for pair in pairs {
        observed[(pair.expert - 1) as usize][(pair.model - 1) as usize] += 1.0;
    }
    let n = pairs.len() as f64;
    let mut expert_marginal = [0.0f64; 5];
    let mut model_marginal = [0.0f64; 5];
    for i in 0..5 {
        for j in 0..5 {
            expert_marginal[i] += observed[i][j];
            model_marginal[j] += observed[i][j];
        }
    }
    let mut disagreement = 0.0;
    let mut expected = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let weight = (i as f64 - j as f64).powi(2) / 16.0;
            disagreement += weight * observed[i][j];
            expected += weight * expert_marginal[i] * model_marginal[j] / n;
        }
    }
    if expected == 0.0 {
        return Err(MetricsError::DegenerateMarginals);
    }
    Ok(1.0 - disagreement / expected)
}

/// Scores a predicted activity grid against the true one: F1 over the
/// active cells plus plain cell accuracy.
pub fn matrix_score(truth: &GridActivity, pred: &GridActivity) -> Result<(f64, f64), MetricsError> {
    if truth.n() != pred.n() {
        return Err(MetricsError::ShapeMismatch {
            truth: truth.n(),
            pred: pred.n(),
        });
    }
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    let mut matches = 0.0;
    for (&t, &p) in truth.cells().iter().zip(pred.cells()) {
        match (t, p) {
            (1, 1) => tp += 1.0,
            (0, 1) => fp += 1.0,
            (1, 0) => fn_ += 1.0,
            _ => {}
        }
        if t == p {
            matches += 1.0;
        }
    }
    let precision = ratio_or_zero(tp, tp + fp);
    let recall = ratio_or_zero(tp, tp + fn_);
    let f1 = ratio_or_zero(2.0 * precision * recall, precision + recall);
    let accuracy = matches / truth.cells().len() as f64;
    Ok((f1, accuracy))
}

/// Reads a score-pair CSV with header `expert,model`, one discovery per
/// row, scores 1..5.
pub fn read_score_pairs_csv(reader: impl BufRead) -> Result<Vec<ScorePair>, ParseError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        Some((_, Err(e))) => return Err(ParseError::new(1, e.to_string())),
        None => return Err(ParseError::new(1, "missing header")),
    };
    let normalized: Vec<String> = header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    if normalized != ["expert", "model"] {
        return Err(ParseError::new(
            1,
            format!("expected header `expert,model`, found `{header}`"),
        ));
    }
    let mut pairs = Vec::new();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let line = line.map_err(|e| ParseError::new(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(ParseError::new(
                lineno,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        let parse = |s: &str| -> Result<u8, ParseError> {
            s.parse()
                .map_err(|_| ParseError::new(lineno, format!("invalid score `{s}`")))
        };
        let pair = ScorePair::new(parse(fields[0])?, parse(fields[1])?)
            .map_err(|e| ParseError::new(lineno, e.to_string()))?;
        pairs.push(pair);
    }
    Ok(pairs)
}
