use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::manifest::{Split, StackManifest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Subjects in order: 80% train, 1/30 validation (at least one), 1/6 test.
    Mri,
    /// Consecutive groups of `fields_per_well` stacks form a well. All wells
    /// but the last train; the last well's first third validates and the
    /// rest tests.
    Microscopy { fields_per_well: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn split_of(&self, id: &str) -> Option<Split> {
        if self.train.iter().any(|s| s == id) {
            Some(Split::Train)
        } else if self.val.iter().any(|s| s == id) {
            Some(Split::Val)
        } else if self.test.iter().any(|s| s == id) {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for id in ids {
                if let Some(prev) = seen.insert(id, name) {
                    return Err(Error::SplitOverlap(format!("subject '{id}' is in both {prev} and {name}")));
                }
            }
        }
        Ok(())
    }

    /// Writes the assigned split into each manifest.
    pub fn apply(&self, manifests: &mut [StackManifest]) -> Result<()> {
        for m in manifests {
            m.split = self
                .split_of(&m.id)
                .ok_or_else(|| Error::InvalidConfig(format!("stack '{}' has no split", m.id)))?;
        }
        Ok(())
    }
}

/// Subject-level splits. Manifests sharing an id are one subject and always
/// land in the same split.
pub fn make_splits(manifests: &[StackManifest], rule: SplitRule) -> Result<SplitAssignment> {
    let mut seen = HashSet::new();
    let subjects: Vec<String> = manifests
        .iter()
        .filter(|m| seen.insert(m.id.clone()))
        .map(|m| m.id.clone())
        .collect();
    let n = subjects.len();
    let assignment = match rule {
        SplitRule::Mri => {
            if n < 3 {
                return Err(Error::InvalidConfig(format!("MRI split needs at least 3 subjects, got {n}")));
            }
            let test = ((n as f64) / 6.0).round().max(1.0) as usize;
            let val = ((n as f64) / 30.0).round().max(1.0) as usize;
            let train = n - test - val;
            SplitAssignment {
                train: subjects[..train].to_vec(),
                val: subjects[train..train + val].to_vec(),
                test: subjects[train + val..].to_vec(),
            }
        }
        SplitRule::Microscopy { fields_per_well } => {
            if fields_per_well < 2 || n % fields_per_well != 0 || n / fields_per_well < 2 {
                return Err(Error::InvalidConfig(format!(
                    "{n} stacks do not form at least two wells of {fields_per_well} fields"
                )));
            }
            let last_well = n - fields_per_well;
            let val = (fields_per_well as f64 / 3.0).round().max(1.0) as usize;
            SplitAssignment {
                train: subjects[..last_well].to_vec(),
                val: subjects[last_well..last_well + val].to_vec(),
                test: subjects[last_well + val..].to_vec(),
            }
        }
    };
    assignment.check_disjoint()?;
    Ok(assignment)
}
