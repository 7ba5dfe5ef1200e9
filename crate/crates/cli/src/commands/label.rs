//! `label`: run a sequenced labeler over a chunk manifest.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use coact_core::{
    read_chunk_manifest, read_examples_manifest, run_sequence_with, write_trace_jsonl,
    BehaviorLabel, CommandLabeler, ContextOptions, ExampleSet, HashRuleLabeler, Labeler, Mode,
    ScriptedLabeler,
};

use crate::config::{prefixed, write_output, FileConfig, ResolvedConfig};
use crate::error::{required, CliError};

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Chunk manifest CSV with header `second,media`
    #[arg(long, value_name = "PATH")]
    pub chunks: Option<PathBuf>,
    /// Example manifest CSV with header `media,label` [default: no examples]
    #[arg(long, value_name = "PATH")]
    pub examples: Option<PathBuf>,
    /// Trial id for the labeled sequence [default: trial-0]
    #[arg(long, value_name = "ID")]
    pub trial: Option<String>,
    /// Context mode: no-icl, icl, temporal-icl, or ar-icl [default: ar-icl]
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,
    /// Labeler: hash-rule, scripted, or command [default: hash-rule]
    #[arg(long, value_name = "KIND")]
    pub labeler: Option<String>,
    /// Comma-separated labels replayed by the scripted labeler
    #[arg(long, value_name = "L,L,...")]
    pub script: Option<String>,
    /// Program run once per chunk by the command labeler
    #[arg(long, value_name = "PROGRAM")]
    pub command: Option<String>,
    /// Argument passed to the command labeler; repeatable
    #[arg(long, value_name = "ARG", allow_hyphen_values = true)]
    pub command_arg: Vec<String>,
    /// Drop the unlabeled next chunk from ar-icl contexts
    #[arg(long)]
    pub no_next: bool,
    /// Output prefix for .predictions.csv, .trace.jsonl, .config.resolved
    #[arg(long, value_name = "PREFIX")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LabelerKind {
    HashRule,
    Scripted,
    Command,
}

impl LabelerKind {
    fn name(self) -> &'static str {
        match self {
            LabelerKind::HashRule => "hash-rule",
            LabelerKind::Scripted => "scripted",
            LabelerKind::Command => "command",
        }
    }
}

impl FromStr for LabelerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hash-rule" => Ok(LabelerKind::HashRule),
            "scripted" => Ok(LabelerKind::Scripted),
            "command" => Ok(LabelerKind::Command),
            other => Err(format!(
                "unknown labeler `{other}` (expected hash-rule, scripted, or command)"
            )),
        }
    }
}

fn parse_script(s: &str) -> Result<Vec<BehaviorLabel>, CliError> {
    s.split(',')
        .map(|item| {
            BehaviorLabel::parse(item).ok_or_else(|| {
                CliError::Usage(format!("unknown label `{}` in script", item.trim()))
            })
        })
        .collect()
}

struct Resolved {
    chunks: PathBuf,
    examples: Option<PathBuf>,
    trial: String,
    mode: Mode,
    labeler: LabelerKind,
    script: Vec<BehaviorLabel>,
    command: Option<String>,
    command_args: Vec<String>,
    no_next: bool,
    out: PathBuf,
}

fn resolve(args: &LabelArgs, file: &FileConfig) -> Result<Resolved, CliError> {
    let mut section = file.section("label");
    let chunks = args.chunks.clone().or(section.take("chunks")?);
    let examples = args.examples.clone().or(section.take("examples")?);
    let trial = args.trial.clone().or(section.take_string("trial")?);
    let mode = args.mode.clone().or(section.take_string("mode")?);
    let labeler = args.labeler.clone().or(section.take_string("labeler")?);
    let script = args.script.clone().or(section.take_string("script")?);
    let command = args.command.clone().or(section.take_string("command")?);
    let command_args = if args.command_arg.is_empty() {
        section
            .take_string("command-args")?
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .unwrap_or_default()
    } else {
        section.take_string("command-args")?;
        args.command_arg.clone()
    };
    let no_next = if args.no_next {
        true
    } else {
        section.take::<bool>("no-next")?.unwrap_or(false)
    };
    let out = args.out.clone().or(section.take("out")?);
    section.finish()?;

    let mode: Mode = mode
        .as_deref()
        .unwrap_or("ar-icl")
        .parse()
        .map_err(CliError::Usage)?;
    let labeler: LabelerKind = labeler
        .as_deref()
        .unwrap_or("hash-rule")
        .parse()
        .map_err(CliError::Usage)?;
    if labeler != LabelerKind::Scripted && script.is_some() {
        return Err(CliError::Usage(
            "--script only applies to the scripted labeler".to_string(),
        ));
    }
    if labeler != LabelerKind::Command {
        if command.is_some() {
            return Err(CliError::Usage(
                "--command only applies to the command labeler".to_string(),
            ));
        }
        if !command_args.is_empty() {
            return Err(CliError::Usage(
                "--command-arg only applies to the command labeler".to_string(),
            ));
        }
    }
    let script = match labeler {
        LabelerKind::Scripted => parse_script(&required(script, "script")?)?,
        _ => Vec::new(),
    };
    let command = match labeler {
        LabelerKind::Command => Some(required(command, "command")?),
        _ => None,
    };

    Ok(Resolved {
        chunks: required(chunks, "chunks")?,
        examples,
        trial: trial.unwrap_or_else(|| "trial-0".to_string()),
        mode,
        labeler,
        script,
        command,
        command_args,
        no_next,
        out: required(out, "out")?,
    })
}

pub fn run(args: &LabelArgs, file: &FileConfig) -> Result<(), CliError> {
    let cfg = resolve(args, file)?;
    let mut echo = ResolvedConfig::new("label");
    echo.push("chunks", cfg.chunks.display());
    if let Some(examples) = &cfg.examples {
        echo.push("examples", examples.display());
    }
    echo.push("trial", &cfg.trial)
        .push("mode", cfg.mode)
        .push("labeler", cfg.labeler.name());
    if cfg.labeler == LabelerKind::Scripted {
        let labels: Vec<String> = cfg.script.iter().map(|l| l.to_string()).collect();
        echo.push("script", labels.join(","));
    }
    if let Some(command) = &cfg.command {
        echo.push("command", command);
        if !cfg.command_args.is_empty() {
            echo.push("command-args", cfg.command_args.join(" "));
        }
    }
    echo.push("no-next", cfg.no_next)
        .push("out", cfg.out.display());
    echo.write_for(&cfg.out)?;

    let chunks = read_chunk_manifest(super::open_input(&cfg.chunks)?, &cfg.trial)
        .map_err(|e| CliError::in_file(&cfg.chunks, e))?;
    let examples = match &cfg.examples {
        Some(path) => read_examples_manifest(super::open_input(path)?)
            .map_err(|e| CliError::in_file(path, e))?,
        None => ExampleSet::default(),
    };

    let mut hash_rule = HashRuleLabeler;
    let mut scripted;
    let mut command;
    let labeler: &mut dyn Labeler = match cfg.labeler {
        LabelerKind::HashRule => &mut hash_rule,
        LabelerKind::Scripted => {
            scripted = ScriptedLabeler::new(cfg.script.clone());
            &mut scripted
        }
        LabelerKind::Command => {
            command = CommandLabeler::new(
                cfg.command.clone().expect("resolved"),
                cfg.command_args.clone(),
            );
            &mut command
        }
    };
    let options = ContextOptions {
        include_next: !cfg.no_next,
    };
    let run = run_sequence_with(&chunks, &examples, cfg.mode, &options, labeler)?;

    let mut predictions = String::from("second,label\n");
    for (chunk, label) in chunks.iter().zip(&run.labels.labels) {
        writeln!(predictions, "{},{label}", chunk.second).expect("writing to a string");
    }
    write_output(&prefixed(&cfg.out, "predictions.csv"), &predictions)?;

    let trace_path = prefixed(&cfg.out, "trace.jsonl");
    let mut buffer = Vec::new();
    write_trace_jsonl(&mut buffer, &run.trace).map_err(|e| CliError::writing(&trace_path, e))?;
    write_output(
        &trace_path,
        &String::from_utf8(buffer).expect("trace json is utf-8"),
    )?;

    println!("labeled = {}", run.labels.labels.len());
    Ok(())
}
