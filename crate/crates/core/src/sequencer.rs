//! Autoregressive in-context labeling over per-second video chunks.
//!
//! A run walks one trial's chunks in time order and asks a [`Labeler`]
//! for one behavior label per chunk. The prompt context for chunk t is
//! assembled per [`Mode`]:
//!
//! * `NoIcl` - the target chunk alone (zero-shot).
//! * `Icl` - a fixed labeled example set plus the target.
//! * `TemporalIcl` - examples, the unlabeled previous and next chunks,
//!   and the target.
//! * `ArIcl` - examples, the previous chunk carrying the label the run
//!   itself predicted for it, the next (unlabeled) chunk, and the target.
//!
//! The first chunk has no previous context and the last has no next.
//! Every prediction is appended to a trace that downstream audits can
//! replay to confirm the causal structure really held.

use std::io::{BufRead, Write as IoWrite};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::metrics::{ConfusionMatrix, MetricsError};
use crate::prep::{BehaviorLabel, LabelSequence};

/// One second of video from one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub trial_id: String,
    /// Second offset within the trial; chunks are one second long.
    pub second: usize,
    /// Reference to the underlying media (path, URL, or opaque id).
    pub media: String,
}

/// A chunk with its known label, used for few-shot examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledChunk {
    pub chunk: Chunk,
    pub label: BehaviorLabel,
}

/// The fixed example set shown in every prompt of a run (possibly empty).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleSet {
    pub examples: Vec<LabeledChunk>,
}

/// The chunk immediately before the target. `label` is the run's own
/// prediction for it in autoregressive mode and `None` when the previous
/// chunk is shown unlabeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrevContext {
    pub chunk: Chunk,
    pub label: Option<BehaviorLabel>,
}

/// Context assembly strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NoIcl,
    Icl,
    TemporalIcl,
    ArIcl,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::NoIcl => "no-icl",
            Mode::Icl => "icl",
            Mode::TemporalIcl => "temporal-icl",
            Mode::ArIcl => "ar-icl",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "no-icl" => Ok(Mode::NoIcl),
            "icl" => Ok(Mode::Icl),
            "temporal-icl" => Ok(Mode::TemporalIcl),
            "ar-icl" => Ok(Mode::ArIcl),
            _ => Err(format!(
                "unknown mode `{s}` (expected no-icl, icl, temporal-icl, or ar-icl)"
            )),
        }
    }
}

/// Knobs that vary the context beyond the mode itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextOptions {
    /// Whether autoregressive contexts include the unlabeled next chunk.
    pub include_next: bool,
}

impl Default for ContextOptions {
    fn default() -> Self {
        ContextOptions { include_next: true }
    }
}

/// Everything a labeler sees when asked to label one chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub mode: Mode,
    pub examples: Vec<LabeledChunk>,
    pub prev: Option<PrevContext>,
    pub target: Chunk,
    pub next: Option<Chunk>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SequencerError {
    #[error("chunk list is empty")]
    EmptyChunks,
    #[error(
        "chunk {position} breaks the sequence: expected trial `{expected_trial}` second \
         {expected_second}, found trial `{found_trial}` second {found_second}"
    )]
    NonConsecutiveChunks {
        position: usize,
        expected_trial: String,
        expected_second: usize,
        found_trial: String,
        found_second: usize,
    },
    #[error("target index {t} is out of range for {len} chunks")]
    TargetOutOfRange { t: usize, len: usize },
    #[error("autoregressive context at t={t} requires a prediction for the previous chunk")]
    MissingPrediction { t: usize },
    #[error("labeler failed at t={t}: {message}")]
    LabelerFailure { t: usize, message: String },
}

/// Builds the prompt context for chunk `t` with default options.
pub fn assemble_context(
    mode: Mode,
    examples: &ExampleSet,
    chunks: &[Chunk],
    t: usize,
    predictions: &[BehaviorLabel],
) -> Result<PromptContext, SequencerError> {
    assemble_context_with(
        mode,
        examples,
        chunks,
        t,
        predictions,
        &ContextOptions::default(),
    )
}

/// Builds the prompt context for chunk `t`. `predictions` holds the
/// labels already emitted for chunks 0..t (longer is fine; shorter is an
/// error only in autoregressive mode, which needs the one for t-1).
pub fn assemble_context_with(
    mode: Mode,
    examples: &ExampleSet,
    chunks: &[Chunk],
    t: usize,
    predictions: &[BehaviorLabel],
    options: &ContextOptions,
) -> Result<PromptContext, SequencerError> {
    if t >= chunks.len() {
        return Err(SequencerError::TargetOutOfRange {
            t,
            len: chunks.len(),
        });
    }
    let target = chunks[t].clone();
    let shown_examples = match mode {
        Mode::NoIcl => Vec::new(),
        _ => examples.examples.clone(),
    };
    let prev = match mode {
        Mode::NoIcl | Mode::Icl => None,
        Mode::TemporalIcl if t > 0 => Some(PrevContext {
            chunk: chunks[t - 1].clone(),
            label: None,
        }),
        Mode::ArIcl if t > 0 => {
            let label = predictions
                .get(t - 1)
                .copied()
                .ok_or(SequencerError::MissingPrediction { t })?;
            Some(PrevContext {
                chunk: chunks[t - 1].clone(),
                label: Some(label),
            })
        }
        _ => None,
    };
    let wants_next = match mode {
        Mode::NoIcl | Mode::Icl => false,
        Mode::TemporalIcl => true,
        Mode::ArIcl => options.include_next,
    };
    let next = if wants_next && t + 1 < chunks.len() {
        Some(chunks[t + 1].clone())
    } else {
        None
    };
    Ok(PromptContext {
        mode,
        examples: shown_examples,
        prev,
        target,
        next,
    })
}

/// A reason a labeler could not produce a label.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct LabelerError(pub String);

/// A labeler's answer for one chunk. Confidence is recorded in the trace
/// when given but never influences sequencing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: BehaviorLabel,
    pub confidence: Option<f64>,
}

impl Decision {
    pub fn new(label: BehaviorLabel) -> Self {
        Decision {
            label,
            confidence: None,
        }
    }
}

/// Anything that can map a prompt context to a behavior label. Labelers
/// may keep state between calls (scripts advance, processes warm up), so
/// labeling takes `&mut self`.
pub trait Labeler {
    fn label(&mut self, context: &PromptContext) -> Result<Decision, LabelerError>;
}

/// Replays a fixed list of labels in call order. Useful for tests and
/// for re-running a recorded session.
#[derive(Debug, Clone)]
pub struct ScriptedLabeler {
    script: Vec<BehaviorLabel>,
    cursor: usize,
}

impl ScriptedLabeler {
    pub fn new(script: Vec<BehaviorLabel>) -> Self {
        ScriptedLabeler { script, cursor: 0 }
    }
}

impl Labeler for ScriptedLabeler {
    fn label(&mut self, _context: &PromptContext) -> Result<Decision, LabelerError> {
        let label = self.script.get(self.cursor).copied().ok_or_else(|| {
            LabelerError(format!(
                "script exhausted after {} labels",
                self.script.len()
            ))
        })?;
        self.cursor += 1;
        Ok(Decision::new(label))
    }
}

/// Deterministic stand-in labeler: hashes the target media reference and
/// the previous label shown in the context (FNV-1a), then picks a class.
/// Two runs over the same chunks in the same mode agree exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashRuleLabeler;

impl HashRuleLabeler {
    fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash
    }
}

impl Labeler for HashRuleLabeler {
    fn label(&mut self, context: &PromptContext) -> Result<Decision, LabelerError> {
        let mut hash = Self::fnv1a(context.target.media.as_bytes(), 0xcbf29ce484222325);
        if let Some(prev) = &context.prev {
            hash = Self::fnv1a(prev.chunk.media.as_bytes(), hash);
            if let Some(label) = prev.label {
                hash = Self::fnv1a(label.to_string().as_bytes(), hash);
            }
        }
        Ok(Decision::new(BehaviorLabel::ALL[(hash % 3) as usize]))
    }
}

/// Request sent to an external labeler: one JSON object on stdin. Only
/// media references and labels cross the process boundary.
#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    mode: Mode,
    examples: Vec<WireExample<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prev: Option<WirePrev<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    next: Option<WireChunk<'a>>,
    target: WireChunk<'a>,
}

#[derive(Debug, Serialize)]
struct WireChunk<'a> {
    media: &'a str,
}

#[derive(Debug, Serialize)]
struct WireExample<'a> {
    media: &'a str,
    label: BehaviorLabel,
}

#[derive(Debug, Serialize)]
struct WirePrev<'a> {
    media: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<BehaviorLabel>,
}

/// Expected answer: one JSON line on stdout.
#[derive(Debug, Deserialize)]
struct WireResponse {
    label: BehaviorLabel,
    #[serde(default)]
    confidence: Option<f64>,
}

/// Runs an external command once per chunk. The context is sent as one
/// JSON object on stdin (media references and labels only); the command
/// must print a single JSON line like `{"label":"freezing"}`, optionally
/// with a `"confidence"` field, and exit 0.
#[derive(Debug, Clone)]
pub struct CommandLabeler {
    program: String,
    args: Vec<String>,
}

impl CommandLabeler {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        CommandLabeler {
            program: program.into(),
            args,
        }
    }
}

impl Labeler for CommandLabeler {
    fn label(&mut self, context: &PromptContext) -> Result<Decision, LabelerError> {
        let wire = WireRequest {
            mode: context.mode,
            examples: context
                .examples
                .iter()
                .map(|ex| WireExample {
                    media: &ex.chunk.media,
                    label: ex.label,
                })
                .collect(),
            prev: context.prev.as_ref().map(|p| WirePrev {
                media: &p.chunk.media,
                label: p.label,
            }),
            next: context.next.as_ref().map(|n| WireChunk { media: &n.media }),
            target: WireChunk {
                media: &context.target.media,
            },
        };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| LabelerError(format!("failed to spawn `{}`: {e}", self.program)))?;
        let request = serde_json::to_string(&wire)
            .map_err(|e| LabelerError(format!("could not encode context: {e}")))?;
        {
            let stdin = child.stdin.as_mut().expect("stdin was piped");
            stdin
                .write_all(request.as_bytes())
                .and_then(|_| stdin.write_all(b"\n"))
                .map_err(|e| LabelerError(format!("could not write to `{}`: {e}", self.program)))?;
        }
        let output = child
            .wait_with_output()
            .map_err(|e| LabelerError(format!("could not read from `{}`: {e}", self.program)))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(LabelerError(format!(
                "`{}` exited with {}: {}",
                self.program,
                output.status,
                stderr.trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        let first_line = stdout.lines().next().unwrap_or("");
        let response: WireResponse = serde_json::from_str(first_line).map_err(|e| {
            LabelerError(format!(
                "`{}` answered `{first_line}`, not a label object: {e}",
                self.program
            ))
        })?;
        Ok(Decision {
            label: response.label,
            confidence: response.confidence,
        })
    }
}

/// One line of the run trace: the full context the labeler was shown for
/// chunk t, verbatim, plus what it answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub context: PromptContext,
    pub predicted: BehaviorLabel,
    pub confidence: Option<f64>,
}

/// The outcome of labeling one trial end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub labels: LabelSequence,
    pub trace: Vec<TraceRecord>,
}

/// Labels every chunk of one trial in time order with default options.
pub fn run_sequence(
    chunks: &[Chunk],
    examples: &ExampleSet,
    mode: Mode,
    labeler: &mut dyn Labeler,
) -> Result<RunOutput, SequencerError> {
    run_sequence_with(chunks, examples, mode, &ContextOptions::default(), labeler)
}

/// Labels every chunk of one trial in time order. The chunks must all
/// belong to one trial and cover consecutive seconds.
pub fn run_sequence_with(
    chunks: &[Chunk],
    examples: &ExampleSet,
    mode: Mode,
    options: &ContextOptions,
    labeler: &mut dyn Labeler,
) -> Result<RunOutput, SequencerError> {
    if chunks.is_empty() {
        return Err(SequencerError::EmptyChunks);
    }
    for (position, pair) in chunks.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if b.trial_id != a.trial_id || b.second != a.second + 1 {
            return Err(SequencerError::NonConsecutiveChunks {
                position: position + 1,
                expected_trial: a.trial_id.clone(),
                expected_second: a.second + 1,
                found_trial: b.trial_id.clone(),
                found_second: b.second,
            });
        }
    }
    let mut predictions: Vec<BehaviorLabel> = Vec::with_capacity(chunks.len());
    let mut trace = Vec::with_capacity(chunks.len());
    for t in 0..chunks.len() {
        let context = assemble_context_with(mode, examples, chunks, t, &predictions, options)?;
        let decision = labeler
            .label(&context)
            .map_err(|e| SequencerError::LabelerFailure { t, message: e.0 })?;
        trace.push(TraceRecord {
            t,
            context,
            predicted: decision.label,
            confidence: decision.confidence,
        });
        predictions.push(decision.label);
    }
    Ok(RunOutput {
        labels: LabelSequence {
            trial_id: chunks[0].trial_id.clone(),
            subject_id: String::new(),
            labels: predictions,
        },
        trace,
    })
}

/// Replays a trace and lists every violation of the causal contract:
/// neighbors must be adjacent seconds, modes must only show what they
/// are allowed to show, and autoregressive previous-labels must equal
/// the prediction actually emitted one step earlier. An empty result
/// means the trace is clean.
pub fn audit_trace(records: &[TraceRecord]) -> Vec<String> {
    let mut violations = Vec::new();
    for (i, record) in records.iter().enumerate() {
        if record.t != i {
            violations.push(format!("record {i} has t={}, expected {i}", record.t));
        }
        let ctx = &record.context;
        match ctx.mode {
            Mode::NoIcl => {
                if !ctx.examples.is_empty() {
                    violations.push(format!("t={}: no-icl context contains examples", record.t));
                }
                if ctx.prev.is_some() || ctx.next.is_some() {
                    violations.push(format!("t={}: no-icl context has neighbors", record.t));
                }
            }
            Mode::Icl => {
                if ctx.prev.is_some() || ctx.next.is_some() {
                    violations.push(format!("t={}: icl context has neighbors", record.t));
                }
            }
            Mode::TemporalIcl => {
                if ctx.prev.as_ref().is_some_and(|p| p.label.is_some()) {
                    violations.push(format!(
                        "t={}: temporal context shows a label for the previous chunk",
                        record.t
                    ));
                }
            }
            Mode::ArIcl => {}
        }
        if ctx.examples != records[0].context.examples {
            violations.push(format!(
                "t={}: example set differs from the start of the run",
                record.t
            ));
        }
        if let Some(prev) = &ctx.prev {
            if record.t == 0 {
                violations.push("t=0: context has a previous chunk".to_string());
            } else if prev.chunk.trial_id != ctx.target.trial_id
                || prev.chunk.second + 1 != ctx.target.second
            {
                violations.push(format!(
                    "t={}: previous chunk is second {} of trial `{}`, not adjacent",
                    record.t, prev.chunk.second, prev.chunk.trial_id
                ));
            }
            if let Some(label) = prev.label {
                if ctx.mode != Mode::ArIcl {
                    violations.push(format!(
                        "t={}: previous label shown outside autoregressive mode",
                        record.t
                    ));
                } else if i == 0 {
                    violations
                        .push("t=0: autoregressive label with no earlier prediction".to_string());
                } else if records[i - 1].predicted != label {
                    violations.push(format!(
                        "t={}: previous label {label} does not match the t={} prediction {}",
                        record.t,
                        record.t - 1,
                        records[i - 1].predicted
                    ));
                }
            }
        }
        if let Some(next) = &ctx.next {
            if next.trial_id != ctx.target.trial_id || next.second != ctx.target.second + 1 {
                violations.push(format!(
                    "t={}: next chunk is second {} of trial `{}`, not adjacent",
                    record.t, next.second, next.trial_id
                ));
            }
            if i + 1 == records.len() {
                violations.push(format!("t={}: last chunk has a next chunk", record.t));
            }
        }
    }
    violations
}

/// Per-class precision/recall/F-scores for one behavior class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: BehaviorLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f2: f64,
}

/// Aggregate quality of one labeling run against reference labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub macro_f1: f64,
    pub balanced_accuracy: f64,
    pub mcc: f64,
    pub per_class: Vec<ClassReport>,
}

/// Scores predictions against reference labels. Per-class rows cover all
/// three behavior classes; a class absent from both sides scores zero.
pub fn evaluate_run(
    truth: &[BehaviorLabel],
    predicted: &[BehaviorLabel],
) -> Result<EvalReport, MetricsError> {
    let cm = ConfusionMatrix::from_labels(truth, predicted)?;
    let per_class = BehaviorLabel::ALL
        .iter()
        .map(|&label| {
            let (precision, recall, f1) = cm.fbeta(&label, 1.0).unwrap_or((0.0, 0.0, 0.0));
            let (_, _, f2) = cm.fbeta(&label, 2.0).unwrap_or((0.0, 0.0, 0.0));
            ClassReport {
                label,
                precision,
                recall,
                f1,
                f2,
            }
        })
        .collect();
    Ok(EvalReport {
        macro_f1: cm.macro_f1(),
        balanced_accuracy: cm.balanced_accuracy(),
        mcc: cm.mcc(),
        per_class,
    })
}

/// Writes one JSON object per trace record.
pub fn write_trace_jsonl(
    writer: &mut impl IoWrite,
    records: &[TraceRecord],
) -> std::io::Result<()> {
    for record in records {
        let line = serde_json::to_string(record).expect("trace records serialize");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Reads a JSONL trace written by [`write_trace_jsonl`].
pub fn read_trace_jsonl(reader: impl BufRead) -> Result<Vec<TraceRecord>, ParseError> {
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| ParseError::new(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| ParseError::new(lineno, format!("invalid trace record: {e}")))?;
        records.push(record);
    }
    Ok(records)
}

/// Reads a chunk manifest with header `second,media` for one trial. The
/// manifest must contain at least one chunk.
pub fn read_chunk_manifest(reader: impl BufRead, trial_id: &str) -> Result<Vec<Chunk>, ParseError> {
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
    if normalized != ["second", "media"] {
        return Err(ParseError::new(
            1,
            format!("expected header `second,media`, found `{header}`"),
        ));
    }
    let mut chunks = Vec::new();
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        let line = line.map_err(|e| ParseError::new(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(2, ',').map(str::trim).collect();
        if fields.len() != 2 || fields[1].is_empty() {
            return Err(ParseError::new(
                lineno,
                "expected `second,media`".to_string(),
            ));
        }
        let second: usize = fields[0]
            .parse()
            .map_err(|_| ParseError::new(lineno, format!("invalid second `{}`", fields[0])))?;
        chunks.push(Chunk {
            trial_id: trial_id.to_string(),
            second,
            media: fields[1].to_string(),
        });
    }
    if chunks.is_empty() {
        return Err(ParseError::new(1, "manifest contains no chunks"));
    }
    Ok(chunks)
}

/// Reads an example manifest with header `media,label`. May be empty.
pub fn read_examples_manifest(reader: impl BufRead) -> Result<ExampleSet, ParseError> {
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
    if normalized != ["media", "label"] {
        return Err(ParseError::new(
            1,
            format!("expected header `media,label`, found `{header}`"),
        ));
    }
    let mut examples = Vec::new();
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
        let label = BehaviorLabel::parse(fields[1])
            .ok_or_else(|| ParseError::new(lineno, format!("unknown label `{}`", fields[1])))?;
        examples.push(LabeledChunk {
            chunk: Chunk {
                trial_id: "example".to_string(),
                second: examples.len(),
                media: fields[0].to_string(),
            },
            label,
        });
    }
    Ok(ExampleSet { examples })
}
