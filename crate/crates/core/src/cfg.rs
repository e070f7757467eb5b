//! Line-preserving editor for darknet `.cfg` files.
//!
//! The document keeps every line verbatim (including its terminator), so
//! serializing an unedited document reproduces the input byte-for-byte.
//! Edits replace single `key=value` lines and leave everything else alone.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CfgError {
    #[error("no [net] section")]
    MissingNetSection,
    #[error("[net] section has no channels= key")]
    MissingChannelsKey,
    #[error("[net] section is missing keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    /// Index of the `[name]` header line.
    pub header: usize,
    /// One past the last line belonging to the section.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfgDocument {
    lines: Vec<String>,
    sections: Vec<Section>,
}

/// A `key = value` line split into its parts.
struct KeyLine<'a> {
    indent: &'a str,
    key: &'a str,
    /// Everything between the key and the value, e.g. `=` or ` = `.
    sep: &'a str,
    value: &'a str,
    eol: &'a str,
}

fn split_eol(line: &str) -> (&str, &str) {
    if let Some(body) = line.strip_suffix("\r\n") {
        (body, "\r\n")
    } else if let Some(body) = line.strip_suffix('\n') {
        (body, "\n")
    } else {
        (line, "")
    }
}

fn key_line(line: &str) -> Option<KeyLine<'_>> {
    let (body, eol) = split_eol(line);
    let trimmed = body.trim_start();
    if trimmed.starts_with('#') || trimmed.starts_with(';') || trimmed.starts_with('[') {
        return None;
    }
    let indent = &body[..body.len() - trimmed.len()];
    let eq = trimmed.find('=')?;
    let key = trimmed[..eq].trim_end();
    if key.is_empty() {
        return None;
    }
    let after = &trimmed[eq + 1..];
    let value = after.trim_start();
    let sep = &trimmed[key.len()..trimmed.len() - value.len()];
    Some(KeyLine { indent, key, sep, value: value.trim_end(), eol })
}

fn section_name(line: &str) -> Option<&str> {
    let t = split_eol(line).0.trim();
    t.strip_prefix('[')?.strip_suffix(']').map(str::trim)
}

impl CfgDocument {
    pub fn parse(text: &str) -> Self {
        let lines: Vec<String> = text.split_inclusive('\n').map(String::from).collect();
        let mut sections: Vec<Section> = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            if let Some(name) = section_name(line) {
                if let Some(prev) = sections.last_mut() {
                    prev.end = i;
                }
                sections.push(Section { name: name.to_string(), header: i, end: lines.len() });
            }
        }
        Self { lines, sections }
    }

    pub fn serialize(&self) -> String {
        self.lines.concat()
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    fn net_sections(&self) -> Vec<usize> {
        self.sections
            .iter()
            .enumerate()
            .filter(|(_, s)| s.name == "net" || s.name == "network")
            .map(|(i, _)| i)
            .collect()
    }

    /// First value of `key` in section `idx`.
    pub fn get(&self, section: usize, key: &str) -> Option<&str> {
        self.find_key(section, key).and_then(|i| key_line(&self.lines[i]).map(|k| k.value))
    }

    /// Value of `key` in the first `[net]` section.
    pub fn net_value(&self, key: &str) -> Option<&str> {
        self.net_sections().first().and_then(|&s| self.get(s, key))
    }

    fn find_key(&self, section: usize, key: &str) -> Option<usize> {
        let s = &self.sections[section];
        (s.header + 1..s.end).find(|&i| key_line(&self.lines[i]).is_some_and(|k| k.key == key))
    }

    /// Rewrites one line in the file's existing style; returns whether the
    /// value text changed.
    fn rewrite(&mut self, line: usize, value: &str) -> bool {
        let k = key_line(&self.lines[line]).expect("key line");
        if k.value == value {
            return false;
        }
        let new = format!("{}{}{}{}{}", k.indent, k.key, k.sep, value, k.eol);
        self.lines[line] = new;
        true
    }

    fn net_section(&self, warnings: &mut Vec<String>) -> Result<usize, CfgError> {
        let nets = self.net_sections();
        match nets.as_slice() {
            [] => Err(CfgError::MissingNetSection),
            [first] => Ok(*first),
            [first, ..] => {
                warnings.push(format!("{} [net] sections; editing the first", nets.len()));
                Ok(*first)
            }
        }
    }

    /// Sets `channels=<n>` in the first `[net]` section.
    pub fn set_channels(&self, n: u32) -> Result<Edit, CfgError> {
        let mut doc = self.clone();
        let mut warnings = Vec::new();
        let net = doc.net_section(&mut warnings)?;
        let line = doc.find_key(net, "channels").ok_or(CfgError::MissingChannelsKey)?;
        let changed = if doc.rewrite(line, &n.to_string()) { vec![line] } else { vec![] };
        Ok(Edit { doc, changed_lines: changed, warnings })
    }

    /// Rewrites the training keys of the first `[net]` section. Every key
    /// must already be present; absent keys are reported together.
    pub fn set_training_params(&self, params: &TrainingParams) -> Result<Edit, CfgError> {
        let mut doc = self.clone();
        let mut warnings = Vec::new();
        let net = doc.net_section(&mut warnings)?;
        let entries = params.entries();
        let missing: Vec<String> =
            entries.iter().filter(|(k, _)| doc.find_key(net, k).is_none()).map(|(k, _)| k.to_string()).collect();
        if !missing.is_empty() {
            return Err(CfgError::MissingKeys(missing));
        }
        let mut changed = Vec::new();
        for (key, value) in &entries {
            let line = doc.find_key(net, key).expect("checked above");
            if doc.rewrite(line, value) {
                changed.push(line);
            }
        }
        changed.sort_unstable();
        Ok(Edit { doc, changed_lines: changed, warnings })
    }
}

impl fmt::Display for CfgDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            f.write_str(l)?;
        }
        Ok(())
    }
}

/// Result of an edit: the new document plus the indices of lines whose
/// content changed.
#[derive(Debug, Clone)]
pub struct Edit {
    pub doc: CfgDocument,
    pub changed_lines: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Edit {
    pub fn is_noop(&self) -> bool {
        self.changed_lines.is_empty()
    }
}

/// Training hyperparameters held in the `[net]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingParams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_batches: u32,
    pub steps: Vec<u32>,
    pub batch: u32,
    pub subdivisions: u32,
}

impl TrainingParams {
    /// Schedule for the single-channel detector: lr 0.001, momentum 0.9,
    /// 2500 iterations with decay steps at 80% and 90% (2000, 2250),
    /// batch 64 in 16 subdivisions.
    pub fn preset() -> Self {
        Self { learning_rate: 0.001, momentum: 0.9, max_batches: 2500, steps: vec![2000, 2250], batch: 64, subdivisions: 16 }
    }

    pub const KEYS: [&'static str; 6] = ["batch", "subdivisions", "momentum", "learning_rate", "max_batches", "steps"];

    fn entries(&self) -> Vec<(&'static str, String)> {
        let steps: Vec<String> = self.steps.iter().map(u32::to_string).collect();
        vec![
            ("batch", self.batch.to_string()),
            ("subdivisions", self.subdivisions.to_string()),
            ("momentum", self.momentum.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("max_batches", self.max_batches.to_string()),
            ("steps", steps.join(",")),
        ]
    }
}
