//! Data preparation: labeled behavior sequences to binary tensors, zero
//! sampling, train/test splitting, grid binarization, and class counts.
//!
//! Everything here is a pure, seeded function: preparing the same inputs
//! with the same seed yields byte-identical tensors.

use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::tensor::SparseTensor;

/// Per-second behavior class. Grooming is folded into `Exploring`: the
/// labeling scheme treats them as one safety class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorLabel {
    Freezing,
    Fleeing,
    Exploring,
}

impl BehaviorLabel {
    /// All classes, in the fixed reporting order.
    pub const ALL: [BehaviorLabel; 3] = [
        BehaviorLabel::Freezing,
        BehaviorLabel::Fleeing,
        BehaviorLabel::Exploring,
    ];

    /// Freezing and fleeing encode fear (1); exploring encodes safety (0).
    pub fn is_fear(self) -> bool {
        matches!(self, BehaviorLabel::Freezing | BehaviorLabel::Fleeing)
    }

    /// Case-insensitive parse; `grooming/exploring` maps to `Exploring`.
    pub fn parse(s: &str) -> Option<BehaviorLabel> {
        match s.trim().to_ascii_lowercase().as_str() {
            "freezing" => Some(BehaviorLabel::Freezing),
            "fleeing" => Some(BehaviorLabel::Fleeing),
            "exploring" | "grooming/exploring" => Some(BehaviorLabel::Exploring),
            _ => None,
        }
    }
}

impl std::fmt::Display for BehaviorLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BehaviorLabel::Freezing => "freezing",
            BehaviorLabel::Fleeing => "fleeing",
            BehaviorLabel::Exploring => "exploring",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for BehaviorLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BehaviorLabel::parse(s).ok_or_else(|| format!("unknown behavior label `{s}`"))
    }
}

/// One trial's per-second labels, t = 0..T-1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub trial_id: String,
    pub subject_id: String,
    pub labels: Vec<BehaviorLabel>,
}

/// Single n x n binary activity grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridActivity {
    n: usize,
    cells: Vec<u8>,
}

impl GridActivity {
    pub fn zeros(n: usize) -> Self {
        GridActivity {
            n,
            cells: vec![0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.n + col] == 1
    }

    pub fn set(&mut self, row: usize, col: usize) {
        self.cells[row * self.n + col] = 1;
    }

    /// Row-major cells, each 0 or 1.
    pub fn cells(&self) -> &[u8] {
        &self.cells
    }
}

/// How to divide entries between train and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of entries assigned to train, in (0, 1).
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// The 9:1 split used throughout.
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            train_fraction: 0.9,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PrepError {
    #[error("sequences have different lengths ({first} vs {other})")]
    RaggedSequences { first: usize, other: usize },
    #[error("duplicate trial id `{0}`")]
    DuplicateTrialId(String),
    #[error("sequence for trial `{0}` is empty")]
    EmptySequence(String),
    #[error("tensor `{name}` is not binary: entry {entry} has value {value}")]
    NonBinaryTensor {
        name: String,
        entry: usize,
        value: f64,
    },
    #[error("zero-sampling ratio must be nonnegative, got {0}")]
    NegativeRatio(f64),
    #[error("need at least {min} entries to split, got {got}")]
    TooFewEntries { min: usize, got: usize },
    #[error("train_fraction must be strictly between 0 and 1, got {0}")]
    InvalidSplitFraction(f64),
    #[error("grid side must be at least 1")]
    InvalidGridSide,
    #[error("event {index} has coordinates ({x}, {y}) outside [0,1]x[0,1]")]
    CoordinateOutOfRange { index: usize, x: f64, y: f64 },
    #[error("label corpus is empty")]
    EmptyCorpus,
}

/// Builds the binary trial x time matrix: 1 where the animal froze or
/// fled, 0 where it explored. Every cell is materialized as an observed
/// entry; zero sampling happens afterwards.
pub fn behavior_to_matrix(sequences: &[LabelSequence]) -> Result<SparseTensor, PrepError> {
    check_corpus(sequences)?;
    let time = sequences[0].labels.len();
    let mut entries = Vec::with_capacity(sequences.len() * time);
    for (trial, seq) in sequences.iter().enumerate() {
        for (t, label) in seq.labels.iter().enumerate() {
            entries.push((vec![trial, t], if label.is_fear() { 1.0 } else { 0.0 }));
        }
    }
    Ok(SparseTensor::new(
        "behavior",
        vec![sequences.len(), time],
        entries,
    ))
}

/// 3-mode one-hot variant: entry (trial, t, c) = 1 iff the label at
/// (trial, t) is class c, with classes ordered as [`BehaviorLabel::ALL`].
/// Available for experiments; the binary matrix above is the primary path.
pub fn behavior_to_one_hot(sequences: &[LabelSequence]) -> Result<SparseTensor, PrepError> {
    check_corpus(sequences)?;
    let time = sequences[0].labels.len();
    let mut entries = Vec::with_capacity(sequences.len() * time * 3);
    for (trial, seq) in sequences.iter().enumerate() {
        for (t, label) in seq.labels.iter().enumerate() {
            for (c, class) in BehaviorLabel::ALL.iter().enumerate() {
                entries.push((vec![trial, t, c], if label == class { 1.0 } else { 0.0 }));
            }
        }
    }
    Ok(SparseTensor::new(
        "behavior-onehot",
        vec![sequences.len(), time, 3],
        entries,
    ))
}

fn check_corpus(sequences: &[LabelSequence]) -> Result<(), PrepError> {
    if sequences.is_empty() {
        return Err(PrepError::EmptyCorpus);
    }
    let time = sequences[0].labels.len();
    let mut seen = Vec::with_capacity(sequences.len());
    for seq in sequences {
        if seq.labels.is_empty() {
            return Err(PrepError::EmptySequence(seq.trial_id.clone()));
        }
        if seq.labels.len() != time {
            return Err(PrepError::RaggedSequences {
                first: time,
                other: seq.labels.len(),
            });
        }
        if seen.contains(&&seq.trial_id) {
            return Err(PrepError::DuplicateTrialId(seq.trial_id.clone()));
        }
        seen.push(&seq.trial_id);
    }
    Ok(())
}

/// Rebalances a binary tensor: keeps every 1-valued entry and
/// `ceil(ratio * ones)` zero entries (capped at the zeros available),
/// chosen uniformly without replacement by the seeded generator.
pub fn sample_zeros(
    tensor: &SparseTensor,
    ratio: f64,
    seed: u64,
) -> Result<SparseTensor, PrepError> {
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(PrepError::NegativeRatio(ratio));
    }
    let mut ones = Vec::new();
    let mut zeros = Vec::new();
    for (pos, (index, value)) in tensor.entries().iter().enumerate() {
        if *value == 1.0 {
            ones.push((index.clone(), 1.0));
        } else if *value == 0.0 {
            zeros.push((index.clone(), 0.0));
        } else {
            return Err(PrepError::NonBinaryTensor {
                name: tensor.name().to_string(),
                entry: pos,
                value: *value,
            });
        }
    }
    let keep = ((ratio * ones.len() as f64).ceil() as usize).min(zeros.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, zeros.len(), keep);
    let mut entries = ones;
    for i in picked.iter() {
        entries.push(zeros[i].clone());
    }
    Ok(SparseTensor::new(
        tensor.name(),
        tensor.shape().to_vec(),
        entries,
    ))
}

/// Partitions the observed entries uniformly at random into train and
/// test. The train size is `round(train_fraction * N)` with ties rounded
/// to even, so counts are reproducible.
pub fn split(
    tensor: &SparseTensor,
    spec: &SplitSpec,
) -> Result<(SparseTensor, SparseTensor), PrepError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(PrepError::InvalidSplitFraction(spec.train_fraction));
    }
    let n = tensor.len();
    if n < 10 {
        return Err(PrepError::TooFewEntries { min: 10, got: n });
    }
    let train_count = (spec.train_fraction * n as f64).round_ties_even() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let take = |positions: &[usize]| -> Vec<(Vec<usize>, f64)> {
        positions
            .iter()
            .map(|&p| tensor.entries()[p].clone())
            .collect()
    };
    let train = SparseTensor::new(
        format!("{}.train", tensor.name()),
        tensor.shape().to_vec(),
        take(&order[..train_count]),
    );
    let test = SparseTensor::new(
        format!("{}.test", tensor.name()),
        tensor.shape().to_vec(),
        take(&order[train_count..]),
    );
    Ok((train, test))
}

/// Marks the grid cell containing each event. Coordinates are normalized
/// to [0,1]; an event at (x, y) activates the cell in row `floor(y*n)` and
/// column `floor(x*n)`, clamped to the last row/column at the 1.0 edge.
pub fn grid_binarize(events: &[(f64, f64)], n: usize) -> Result<GridActivity, PrepError> {
    if n == 0 {
        return Err(PrepError::InvalidGridSide);
    }
    let mut grid = GridActivity::zeros(n);
    for (index, &(x, y)) in events.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(PrepError::CoordinateOutOfRange { index, x, y });
        }
        let row = ((y * n as f64).floor() as usize).min(n - 1);
        let col = ((x * n as f64).floor() as usize).min(n - 1);
        grid.set(row, col);
    }
    Ok(grid)
}

/// Count and proportion of one behavior class in a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStat {
    pub label: BehaviorLabel,
    pub count: usize,
    pub proportion: f64,
}

/// Per-class counts and proportions over all labels in the corpus, in
/// [`BehaviorLabel::ALL`] order. Proportions sum to 1 up to rounding.
pub fn class_distribution(sequences: &[LabelSequence]) -> Result<Vec<ClassStat>, PrepError> {
    let total: usize = sequences.iter().map(|s| s.labels.len()).sum();
    if total == 0 {
        return Err(PrepError::EmptyCorpus);
    }
    Ok(BehaviorLabel::ALL
        .iter()
        .map(|&label| {
            let count = sequences
                .iter()
                .flat_map(|s| &s.labels)
                .filter(|&&l| l == label)
                .count();
            ClassStat {
                label,
                count,
                proportion: count as f64 / total as f64,
            }
        })
        .collect())
}

/// Reads a label CSV. The header is either `second,label` (one trial,
/// named `default_trial_id`) or `trial,second,label` (multi-trial). Within
/// each trial the seconds must cover 0..T-1; rows may appear in any order.
pub fn read_label_csv(
    reader: impl BufRead,
    default_trial_id: &str,
) -> Result<Vec<LabelSequence>, ParseError> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(line))) => line,
        Some((_, Err(e))) => return Err(ParseError::new(1, e.to_string())),
        None => return Err(ParseError::new(1, "missing header")),
    };
    let columns: Vec<String> = header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    let has_trial = match columns.as_slice() {
        [a, b] if a == "second" && b == "label" => false,
        [a, b, c] if a == "trial" && b == "second" && c == "label" => true,
        _ => {
            return Err(ParseError::new(
                1,
                format!("expected header `second,label` or `trial,second,label`, found `{header}`"),
            ))
        }
    };

    // Rows as (line, second, label), keyed by trial in first-appearance order.
    type Rows = Vec<(usize, usize, BehaviorLabel)>;
    let mut trials: Vec<(String, Rows)> = Vec::new();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let line = line.map_err(|e| ParseError::new(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = if has_trial { 3 } else { 2 };
        if fields.len() != expected {
            return Err(ParseError::new(
                lineno,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        let (trial, second_field, label_field) = if has_trial {
            (fields[0].to_string(), fields[1], fields[2])
        } else {
            (default_trial_id.to_string(), fields[0], fields[1])
        };
        let second: usize = second_field
            .parse()
            .map_err(|_| ParseError::new(lineno, format!("invalid second `{second_field}`")))?;
        let label = BehaviorLabel::parse(label_field)
            .ok_or_else(|| ParseError::new(lineno, format!("unknown label `{label_field}`")))?;
        match trials.iter_mut().find(|(id, _)| *id == trial) {
            Some((_, rows)) => rows.push((lineno, second, label)),
            None => trials.push((trial, vec![(lineno, second, label)])),
        }
    }
    if trials.is_empty() {
        return Err(ParseError::new(1, "label file contains no data rows"));
    }

    let mut sequences = Vec::with_capacity(trials.len());
    for (trial_id, mut rows) in trials {
        rows.sort_by_key(|&(_, second, _)| second);
        let mut labels = Vec::with_capacity(rows.len());
        for (expected, &(lineno, second, label)) in rows.iter().enumerate() {
            if second != expected {
                let what = if second < expected {
                    "duplicate"
                } else {
                    "missing"
                };
                return Err(ParseError::new(
                    lineno,
                    format!(
                        "trial `{trial_id}` seconds must cover 0..{} with no gaps ({what} second near {second})",
                        rows.len() - 1
                    ),
                ));
            }
            labels.push(label);
        }
        sequences.push(LabelSequence {
            trial_id,
            subject_id: String::new(),
            labels,
        });
    }
    Ok(sequences)
}

/// Reads an event CSV with header `second,x,y`; returns the normalized
/// coordinates in row order.
pub fn read_event_csv(reader: impl BufRead) -> Result<Vec<(f64, f64)>, ParseError> {
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
    if normalized != ["second", "x", "y"] {
        return Err(ParseError::new(
            1,
            format!("expected header `second,x,y`, found `{header}`"),
        ));
    }
    let mut events = Vec::new();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let line = line.map_err(|e| ParseError::new(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(ParseError::new(
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let _second: usize = fields[0]
            .parse()
            .map_err(|_| ParseError::new(lineno, format!("invalid second `{}`", fields[0])))?;
        let x: f64 = fields[1]
            .parse()
            .map_err(|_| ParseError::new(lineno, format!("invalid x `{}`", fields[1])))?;
        let y: f64 = fields[2]
            .parse()
            .map_err(|_| ParseError::new(lineno, format!("invalid y `{}`", fields[2])))?;
        events.push((x, y));
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(trial: &str, labels: &[BehaviorLabel]) -> LabelSequence {
        LabelSequence {
            trial_id: trial.to_string(),
            subject_id: String::new(),
            labels: labels.to_vec(),
        }
    }

    use BehaviorLabel::{Exploring, Fleeing, Freezing};

    #[test]
    fn fear_maps_to_one_safety_to_zero() {
        let t = behavior_to_matrix(&[seq("t0", &[Freezing, Exploring, Fleeing])]).unwrap();
        assert_eq!(t.shape(), &[1, 3]);
        let values: Vec<f64> = t.entries().iter().map(|(_, v)| *v).collect();
        assert_eq!(values, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn all_exploring_trial_is_a_zero_row() {
        let t = behavior_to_matrix(&[seq("t0", &[Exploring; 5])]).unwrap();
        assert!(t.entries().iter().all(|(_, v)| *v == 0.0));
        assert_eq!(t.len(), 5);
    }

    #[test]
    fn mixed_corpus_matches_elementwise_mapping() {
        let sequences = [
            seq("a", &[Freezing, Exploring]),
            seq("b", &[Exploring, Exploring]),
            seq("c", &[Fleeing, Freezing]),
        ];
        let t = behavior_to_matrix(&sequences).unwrap();
        for (trial, s) in sequences.iter().enumerate() {
            for (time, label) in s.labels.iter().enumerate() {
                let expected = if label.is_fear() { 1.0 } else { 0.0 };
                let got = t
                    .entries()
                    .iter()
                    .find(|(i, _)| i == &vec![trial, time])
                    .map(|(_, v)| *v)
                    .unwrap();
                assert_eq!(got, expected);
            }
        }
    }

    #[test]
    fn corpus_errors_are_detected() {
        assert!(matches!(
            behavior_to_matrix(&[]),
            Err(PrepError::EmptyCorpus)
        ));
        assert!(matches!(
            behavior_to_matrix(&[seq("a", &[Freezing]), seq("a", &[Exploring])]),
            Err(PrepError::DuplicateTrialId(_))
        ));
        assert!(matches!(
            behavior_to_matrix(&[seq("a", &[Freezing]), seq("b", &[Exploring, Exploring])]),
            Err(PrepError::RaggedSequences { .. })
        ));
    }

    #[test]
    fn one_hot_marks_exactly_one_class_per_cell() {
        let t = behavior_to_one_hot(&[seq("a", &[Freezing, Exploring])]).unwrap();
        assert_eq!(t.shape(), &[1, 2, 3]);
        // (0,0) is Freezing -> class 0; (0,1) is Exploring -> class 2.
        let value = |idx: &[usize]| {
            t.entries()
                .iter()
                .find(|(i, _)| i.as_slice() == idx)
                .map(|(_, v)| *v)
                .unwrap()
        };
        assert_eq!(value(&[0, 0, 0]), 1.0);
        assert_eq!(value(&[0, 0, 1]), 0.0);
        assert_eq!(value(&[0, 1, 2]), 1.0);
        assert_eq!(value(&[0, 1, 0]), 0.0);
    }

    #[test]
    fn sampling_keeps_counts_per_the_ratio() {
        // 10 ones and 100 zeros; ratio 2 keeps 20 zeros.
        let mut entries = Vec::new();
        for i in 0..110 {
            entries.push((vec![i, 0], if i < 10 { 1.0 } else { 0.0 }));
        }
        let t = SparseTensor::new("b", vec![110, 1], entries);
        let sampled = sample_zeros(&t, 2.0, 7).unwrap();
        let ones = sampled.entries().iter().filter(|(_, v)| *v == 1.0).count();
        let zeros = sampled.entries().iter().filter(|(_, v)| *v == 0.0).count();
        assert_eq!((ones, zeros), (10, 20));
    }

    #[test]
    fn sampling_boundaries() {
        let all_ones = SparseTensor::new(
            "ones",
            vec![3, 1],
            vec![(vec![0, 0], 1.0), (vec![1, 0], 1.0), (vec![2, 0], 1.0)],
        );
        assert_eq!(sample_zeros(&all_ones, 5.0, 1).unwrap(), all_ones);

        let mixed = SparseTensor::new(
            "m",
            vec![3, 1],
            vec![(vec![0, 0], 1.0), (vec![1, 0], 0.0), (vec![2, 0], 0.0)],
        );
        let only_ones = sample_zeros(&mixed, 0.0, 1).unwrap();
        assert_eq!(only_ones.len(), 1);
        assert_eq!(only_ones.entries()[0].1, 1.0);
    }

    #[test]
    fn sampling_rejects_non_binary_values() {
        let t = SparseTensor::new("t", vec![2, 1], vec![(vec![0, 0], 0.5), (vec![1, 0], 1.0)]);
        assert!(matches!(
            sample_zeros(&t, 1.0, 0),
            Err(PrepError::NonBinaryTensor { .. })
        ));
    }

    fn range_tensor(n: usize) -> SparseTensor {
        let entries = (0..n).map(|i| (vec![i, 0], (i % 2) as f64)).collect();
        SparseTensor::new("t", vec![n, 1], entries)
    }

    #[test]
    fn split_sizes_follow_round_half_to_even() {
        let (train, test) = split(&range_tensor(100), &SplitSpec::new(3)).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        // 0.9 * 95 = 85.5 rounds to 86.
        let (train, test) = split(&range_tensor(95), &SplitSpec::new(3)).unwrap();
        assert_eq!((train.len(), test.len()), (86, 9));
    }

    #[test]
    fn split_is_deterministic_and_validates() {
        let t = range_tensor(40);
        let a = split(&t, &SplitSpec::new(9)).unwrap();
        let b = split(&t, &SplitSpec::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            split(&range_tensor(9), &SplitSpec::new(0)),
            Err(PrepError::TooFewEntries { min: 10, got: 9 })
        ));
        let bad = SplitSpec {
            train_fraction: 1.0,
            seed: 0,
        };
        assert!(matches!(
            split(&t, &bad),
            Err(PrepError::InvalidSplitFraction(_))
        ));
    }

    #[test]
    fn grid_maps_coordinates_to_cells() {
        let grid = grid_binarize(&[(0.1, 0.1), (0.9, 0.2)], 3).unwrap();
        assert!(grid.get(0, 0));
        assert!(grid.get(0, 2));
        assert_eq!(grid.cells().iter().map(|&c| c as usize).sum::<usize>(), 2);
    }

    #[test]
    fn grid_edges_clamp_into_the_last_cell() {
        let grid = grid_binarize(&[(1.0, 1.0), (0.0, 0.0)], 4).unwrap();
        assert!(grid.get(3, 3));
        assert!(grid.get(0, 0));
    }

    #[test]
    fn grid_covers_all_cells_from_interior_events() {
        let n = 3;
        let mut events = Vec::new();
        for r in 0..n {
            for c in 0..n {
                events.push(((c as f64 + 0.5) / n as f64, (r as f64 + 0.5) / n as f64));
            }
        }
        let grid = grid_binarize(&events, n).unwrap();
        assert!(grid.cells().iter().all(|&c| c == 1));
        assert_eq!(
            grid_binarize(&[], n).unwrap().cells(),
            vec![0; 9].as_slice()
        );
    }

    #[test]
    fn grid_rejects_out_of_range_events() {
        assert!(matches!(
            grid_binarize(&[(1.2, 0.5)], 3),
            Err(PrepError::CoordinateOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            grid_binarize(&[], 0),
            Err(PrepError::InvalidGridSide)
        ));
    }

    #[test]
    fn distribution_counts_a_skewed_corpus() {
        // 410 freezing, 21 fleeing, 2809 exploring over two trials.
        let mut labels = vec![Freezing; 410];
        labels.extend(vec![Fleeing; 21]);
        labels.extend(vec![Exploring; 2809]);
        let (a, b) = labels.split_at(1620);
        let stats = class_distribution(&[seq("a", a), seq("b", b)]).unwrap();
        assert_eq!(stats[0].count, 410);
        assert_eq!(stats[1].count, 21);
        assert_eq!(stats[2].count, 2809);
        assert!((stats[0].proportion - 410.0 / 3240.0).abs() < 1e-15);
        let total: f64 = stats.iter().map(|s| s.proportion).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distribution_boundaries() {
        let stats = class_distribution(&[seq("a", &[Fleeing])]).unwrap();
        assert_eq!(stats[1].count, 1);
        assert_eq!(stats[1].proportion, 1.0);
        assert_eq!(stats[0].count, 0);

        let stats = class_distribution(&[seq("a", &[Freezing, Fleeing, Exploring])]).unwrap();
        for s in &stats {
            assert!((s.proportion - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(matches!(
            class_distribution(&[]),
            Err(PrepError::EmptyCorpus)
        ));
    }

    #[test]
    fn label_csv_single_trial() {
        let csv = "second,label\n0,Freezing\n1,exploring\n2,Grooming/Exploring\n";
        let seqs = read_label_csv(csv.as_bytes(), "trial-1").unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].trial_id, "trial-1");
        assert_eq!(seqs[0].labels, vec![Freezing, Exploring, Exploring]);
    }

    #[test]
    fn label_csv_multi_trial_groups_rows() {
        let csv = "trial,second,label\nA,0,freezing\nB,0,exploring\nA,1,fleeing\nB,1,freezing\n";
        let seqs = read_label_csv(csv.as_bytes(), "x").unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].trial_id, "A");
        assert_eq!(seqs[0].labels, vec![Freezing, Fleeing]);
        assert_eq!(seqs[1].labels, vec![Exploring, Freezing]);
    }

    #[test]
    fn label_csv_rejects_problems_with_line_numbers() {
        let bad_label = "second,label\n0,freezing\n1,sleeping\n";
        let err = read_label_csv(bad_label.as_bytes(), "t").unwrap_err();
        assert_eq!(err.line, 3);

        let gap = "second,label\n0,freezing\n2,fleeing\n";
        let err = read_label_csv(gap.as_bytes(), "t").unwrap_err();
        assert_eq!(err.line, 3);

        let bad_header = "time,label\n";
        assert_eq!(
            read_label_csv(bad_header.as_bytes(), "t").unwrap_err().line,
            1
        );
    }

    #[test]
    fn event_csv_parses_coordinates() {
        let csv = "second,x,y\n0,0.25,0.75\n1,1.0,0.0\n";
        let events = read_event_csv(csv.as_bytes()).unwrap();
        assert_eq!(events, vec![(0.25, 0.75), (1.0, 0.0)]);
        let err = read_event_csv("second,x,y\n0,oops,0.5\n".as_bytes()).unwrap_err();
        assert_eq!(err.line, 2);
    }

    proptest! {
        #[test]
        fn sampling_never_drops_a_one(
            pattern in proptest::collection::vec(any::<bool>(), 1..80),
            ratio in 0.0_f64..3.0,
            seed in any::<u64>(),
        ) {
            let entries: Vec<(Vec<usize>, f64)> = pattern
                .iter()
                .enumerate()
                .map(|(i, &one)| (vec![i, 0], if one { 1.0 } else { 0.0 }))
                .collect();
            let t = SparseTensor::new("t", vec![pattern.len(), 1], entries);
            let sampled = sample_zeros(&t, ratio, seed).unwrap();
            let ones_in = pattern.iter().filter(|&&b| b).count();
            let ones_out = sampled.entries().iter().filter(|(_, v)| *v == 1.0).count();
            prop_assert_eq!(ones_in, ones_out);
            let zeros_out = sampled.len() - ones_out;
            let available = pattern.len() - ones_in;
            let expected = ((ratio * ones_in as f64).ceil() as usize).min(available);
            prop_assert_eq!(zeros_out, expected);
        }

        #[test]
        fn split_partitions_for_all_seeds(
            n in 10usize..120,
            fraction in 0.05_f64..0.95,
            seed in any::<u64>(),
        ) {
            let t = range_tensor(n);
            let spec = SplitSpec { train_fraction: fraction, seed };
            let (train, test) = split(&t, &spec).unwrap();
            prop_assert_eq!(train.len() + test.len(), n);
            prop_assert_eq!(train.len(), (fraction * n as f64).round_ties_even() as usize);
            // Disjoint and union-complete: indices are unique in the input,
            // so a sorted merge must reproduce the input exactly.
            let mut merged: Vec<_> = train.entries().iter().chain(test.entries()).cloned().collect();
            merged.sort_by(|a, b| a.0.cmp(&b.0));
            prop_assert_eq!(merged.as_slice(), t.entries());
        }

        #[test]
        fn grid_binarize_is_monotone(
            events in proptest::collection::vec((0.0_f64..=1.0, 0.0_f64..=1.0), 0..40),
            extra in (0.0_f64..=1.0, 0.0_f64..=1.0),
            n in 1usize..8,
        ) {
            let base = grid_binarize(&events, n).unwrap();
            let mut more = events.clone();
            more.push(extra);
            let grown = grid_binarize(&more, n).unwrap();
            for (b, g) in base.cells().iter().zip(grown.cells()) {
                prop_assert!(g >= b);
            }
        }
    }
}
