//! ART-style instance and label files.
//!
//! Instances are JSON lines; labels are a plain-text file holding `1` or `2`
//! per line, aligned with the instance file by line index.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::store::EmbeddingRole;

/// Separator placed between sentences when role texts are concatenated.
pub const DEFAULT_SEPARATOR: &str = " ";

/// One abductive NLI item: two observations and two candidate explanations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnliInstance {
    pub instance_id: String,
    pub o1: String,
    pub o2: String,
    pub h1: String,
    pub h2: String,
}

impl AnliInstance {
    /// The text an encoder sees for `role`.
    pub fn role_text(&self, role: EmbeddingRole, separator: &str) -> String {
        match role {
            EmbeddingRole::ObsPair => [&*self.o1, &self.o2].join(separator),
            EmbeddingRole::H1 => self.h1.clone(),
            EmbeddingRole::H2 => self.h2.clone(),
            EmbeddingRole::ObsH1 => [&*self.o1, &self.o2, &self.h1].join(separator),
            EmbeddingRole::ObsH2 => [&*self.o1, &self.o2, &self.h2].join(separator),
        }
    }
}

/// Which of the two hypotheses; used both for gold labels and predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H1,
    H2,
}

impl Hypothesis {
    pub fn flipped(self) -> Self {
        match self {
            Hypothesis::H1 => Hypothesis::H2,
            Hypothesis::H2 => Hypothesis::H1,
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::H1 => "1",
            Hypothesis::H2 => "2",
        })
    }
}

/// Names of the JSON keys holding each instance field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub instance_id: String,
    pub o1: String,
    pub o2: String,
    pub h1: String,
    pub h2: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            instance_id: "story_id".into(),
            o1: "obs1".into(),
            o2: "obs2".into(),
            h1: "hyp1".into(),
            h2: "hyp2".into(),
        }
    }
}

/// Loads instances in file order. Blank lines are skipped.
///
/// Repeated ids (the training split reuses story ids across hypothesis
/// pairs) get a `#k` suffix on their k-th occurrence so ids stay unique.
pub fn load_instances(path: impl AsRef<Path>, fields: &FieldMap) -> Result<Vec<AnliInstance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instances(&text, fields)
}

pub fn parse_instances(text: &str, fields: &FieldMap) -> Result<Vec<AnliInstance>> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::MalformedLine {
            line: line_no,
            message: "expected a JSON object".into(),
        })?;
        let get = |key: &str, allow_number: bool| -> Result<String> {
            let missing = || Error::MissingField {
                field: key.to_string(),
                line: line_no,
            };
            let s = match obj.get(key).ok_or_else(missing)? {
                Value::String(s) => s.clone(),
                Value::Number(n) if allow_number => n.to_string(),
                _ => {
                    return Err(Error::MalformedLine {
                        line: line_no,
                        message: format!("field {key} is not a string"),
                    })
                }
            };
            if s.trim().is_empty() {
                return Err(Error::MalformedLine {
                    line: line_no,
                    message: format!("field {key} is empty"),
                });
            }
            Ok(s)
        };
        let raw_id = get(&fields.instance_id, true)?;
        let instance = AnliInstance {
            o1: get(&fields.o1, false)?,
            o2: get(&fields.o2, false)?,
            h1: get(&fields.h1, false)?,
            h2: get(&fields.h2, false)?,
            instance_id: raw_id.clone(),
        };
        let occurrence = seen.entry(raw_id).or_insert(0);
        *occurrence += 1;
        let instance = if *occurrence > 1 {
            AnliInstance {
                instance_id: format!("{}#{}", instance.instance_id, occurrence),
                ..instance
            }
        } else {
            instance
        };
        out.push(instance);
    }
    Ok(out)
}

/// Loads gold labels, one `1` or `2` per line.
pub fn load_labels(path: impl AsRef<Path>, n_expected: usize) -> Result<Vec<Hypothesis>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, n_expected)
}

pub fn parse_labels(text: &str, n_expected: usize) -> Result<Vec<Hypothesis>> {
    let mut labels = Vec::with_capacity(n_expected);
    for (i, line) in text.lines().enumerate() {
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        labels.push(match token {
            "1" => Hypothesis::H1,
            "2" => Hypothesis::H2,
            _ => {
                return Err(Error::InvalidLabel {
                    token: token.to_string(),
                    line: i + 1,
                })
            }
        });
    }
    if labels.len() != n_expected {
        return Err(Error::LabelCount {
            expected: n_expected,
            found: labels.len(),
        });
    }
    Ok(labels)
}

/// Loads labels without a known count (the CLI checks alignment against the store).
pub fn load_labels_any(path: impl AsRef<Path>) -> Result<Vec<Hypothesis>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let n = text.lines().filter(|l| !l.trim().is_empty()).count();
    parse_labels(&text, n)
}
