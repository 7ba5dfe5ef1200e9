//! The run configuration file and the resolved-config echo.
//!
//! A config file is a plain INI-style document with one section per
//! subcommand; keys are the subcommand's long flag names:
//!
//! ```text
//! # comment (`;` also starts one)
//! [fit]
//! model = coupled-cpd
//! rank = 3
//! learning-rate = 0.02
//! ```
//!
//! Everything after the first `=` (trimmed) is the value, so values never
//! need quoting. Command-line flags override file values, and built-in
//! defaults fill whatever remains. Every run that writes artifacts echoes
//! the fully resolved settings to `<prefix>.config.resolved` in this same
//! format, so a run can be reproduced from its outputs alone.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

/// One `key = value` line of a section.
#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

/// A parsed config file. Missing `--config` behaves as an empty file.
#[derive(Debug, Default)]
pub struct FileConfig {
    sections: Vec<(String, Vec<Entry>)>,
}

impl FileConfig {
    pub fn empty() -> Self {
        FileConfig::default()
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!(
                "could not read config file {}: {e}",
                path.display()
            ))
        })?;
        Self::parse(&text)
            .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
    }

    fn parse(text: &str) -> Result<Self, String> {
        let mut sections: Vec<(String, Vec<Entry>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or(format!("line {lineno}: unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(format!("line {lineno}: empty section name"));
                }
                sections.push((name.to_string(), Vec::new()));
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(format!(
                "line {lineno}: expected `key = value` or `[section]`"
            ))?;
            let entry = Entry {
                line: lineno,
                key: key.trim().to_string(),
                value: value.trim().to_string(),
            };
            if entry.key.is_empty() {
                return Err(format!("line {lineno}: empty key"));
            }
            match sections.last_mut() {
                Some((_, entries)) => entries.push(entry),
                None => {
                    return Err(format!(
                        "line {lineno}: key `{}` appears before any [section]",
                        entry.key
                    ))
                }
            }
        }
        Ok(FileConfig { sections })
    }

    /// All entries of the named section, in file order. Repeated sections
    /// with the same name are concatenated.
    pub fn section(&self, name: &str) -> Section {
        let entries = self
            .sections
            .iter()
            .filter(|(n, _)| n == name)
            .flat_map(|(_, e)| e.iter().cloned())
            .collect();
        Section {
            name: name.to_string(),
            entries,
        }
    }
}

/// The file entries feeding one subcommand. Each known key is consumed
/// with [`take`](Section::take); [`finish`](Section::finish) then rejects
/// whatever is left, so typos in the file fail loudly.
#[derive(Debug)]
pub struct Section {
    name: String,
    entries: Vec<Entry>,
}

impl Section {
    /// Removes `key` and parses its value. A key given twice is an error.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        Ok(match self.take_raw(key)? {
            Some(entry) => Some(entry.value.parse().map_err(|e| {
                CliError::Usage(format!(
                    "config [{}] line {}: invalid `{key}` value `{}`: {e}",
                    self.name, entry.line, entry.value
                ))
            })?),
            None => None,
        })
    }

    /// Removes `key` and returns its raw string value.
    pub fn take_string(&mut self, key: &str) -> Result<Option<String>, CliError> {
        Ok(self.take_raw(key)?.map(|e| e.value))
    }

    fn take_raw(&mut self, key: &str) -> Result<Option<Entry>, CliError> {
        let hits: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.key == key)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [] => Ok(None),
            [i] => Ok(Some(self.entries.remove(*i))),
            more => Err(CliError::Usage(format!(
                "config [{}]: key `{key}` given {} times (lines {})",
                self.name,
                more.len(),
                more.iter()
                    .map(|&i| self.entries[i].line.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }

    /// Errors on any key that was never consumed.
    pub fn finish(self) -> Result<(), CliError> {
        if let Some(entry) = self.entries.first() {
            return Err(CliError::Usage(format!(
                "config [{}] line {}: unknown key `{}`",
                self.name, entry.line, entry.key
            )));
        }
        Ok(())
    }
}

/// The fully resolved settings of one run, echoed alongside its outputs.
#[derive(Debug)]
pub struct ResolvedConfig {
    section: String,
    entries: Vec<(String, String)>,
}

impl ResolvedConfig {
    pub fn new(section: &str) -> Self {
        ResolvedConfig {
            section: section.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    /// Renders the echo in the config file format, ready to be loaded back
    /// with `--config`.
    pub fn render(&self) -> String {
        let mut out = format!("[{}]\n", self.section);
        for (key, value) in &self.entries {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(value);
            out.push('\n');
        }
        out
    }

    /// Writes `<prefix>.config.resolved`.
    pub fn write_for(&self, prefix: &Path) -> Result<PathBuf, CliError> {
        let path = prefixed(prefix, "config.resolved");
        write_output(&path, &self.render())?;
        Ok(path)
    }
}

/// `<prefix>.<suffix>`, treating the prefix as a path stem.
pub fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}.{suffix}", prefix.display()))
}

/// Writes an output file, creating parent directories as needed.
pub fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::writing(path, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| CliError::writing(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}
