//! Diagnosis text to class label, by ordered case-insensitive substring rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Four,
}

impl Task {
    pub fn n_classes(self) -> usize {
        LabelRule::for_task(self).class_names.len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Four => "four",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(Task::Binary),
            "four" | "four-class" | "fourclass" => Ok(Task::Four),
            _ => Err(Error::Config(format!("unknown task `{s}` (expected binary or four)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRule {
    pub task: Task,
    /// Lower-case pattern and class index; the first matching pattern wins.
    pub mapping: Vec<(String, usize)>,
    pub class_names: Vec<String>,
}

impl LabelRule {
    pub fn for_task(task: Task) -> Self {
        let m = |pairs: &[(&str, usize)]| pairs.iter().map(|(p, c)| (p.to_string(), *c)).collect();
        let names = |n: &[&str]| n.iter().map(|s| s.to_string()).collect();
        match task {
            Task::Binary => Self {
                task,
                mapping: m(&[
                    ("normal sinus", 0),
                    ("fibrillation", 1),
                    ("ventricular", 1),
                    ("block", 1),
                    ("arrhythm", 1),
                ]),
                class_names: names(&["Normal", "Non-normal"]),
            },
            Task::Four => Self {
                task,
                mapping: m(&[
                    ("atrial fibrillation", 1),
                    ("ventricular", 2),
                    ("block", 3),
                    ("atrioventricular", 3),
                    ("bundle branch", 3),
                    ("normal sinus", 0),
                ]),
                class_names: names(&["Normal", "AFib", "Ventricular", "Block"]),
            },
        }
    }

    pub fn classify(&self, diagnosis: &str) -> Option<usize> {
        let text = diagnosis.to_lowercase();
        self.mapping.iter().find(|(p, _)| text.contains(p.as_str())).map(|&(_, c)| c)
    }
}

/// Labels per diagnosis (`None` = excluded) and the number excluded.
pub fn generate_labels<S: AsRef<str>>(diagnoses: &[S], rule: &LabelRule) -> (Vec<Option<usize>>, usize) {
    let labels: Vec<Option<usize>> = diagnoses.iter().map(|d| rule.classify(d.as_ref())).collect();
    let excluded = labels.iter().filter(|l| l.is_none()).count();
    (labels, excluded)
}
