//! Dataset manifest: the one input format feeding every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{GroundTruth, ImageGroundTruth};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub proposal_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class_labels: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ground_truth_boxes: Option<Vec<GroundTruthBox>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        // Relative paths resolve against the manifest's directory.
        if let Some(dir) = path.parent() {
            for entry in &mut manifest.entries {
                if entry.image_path.is_relative() {
                    entry.image_path = dir.join(&entry.image_path);
                }
                if let Some(p) = &entry.proposal_path {
                    if p.is_relative() {
                        entry.proposal_path = Some(dir.join(p));
                    }
                }
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ground truth for evaluation; errors list images lacking any labels
    /// or boxes.
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        let missing: Vec<String> = self
            .entries
            .iter()
            .filter(|e| {
                e.class_labels.as_ref().is_none_or(|l| l.is_empty())
                    && e.ground_truth_boxes.as_ref().is_none_or(|b| b.is_empty())
            })
            .map(|e| e.image_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingGroundTruth(missing));
        }
        Ok(self.ground_truth_lenient())
    }

    /// Ground truth where unlabeled images become empty entries (outliers).
    pub fn ground_truth_lenient(&self) -> GroundTruth {
        GroundTruth {
            images: self
                .entries
                .iter()
                .map(|e| {
                    let mut img = ImageGroundTruth::default();
                    if let Some(labels) = &e.class_labels {
                        img.labels.extend(labels.iter().cloned());
                    }
                    if let Some(boxes) = &e.ground_truth_boxes {
                        for b in boxes {
                            img.labels.insert(b.label.clone());
                            img.boxes.push((b.label.clone(), b.bbox));
                        }
                    }
                    img
                })
                .collect(),
        }
    }
}
