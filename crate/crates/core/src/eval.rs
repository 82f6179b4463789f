//! CorLoc and CorRet metrics, class-specific and any-class variants, and
//! the retrieval confusion matrix.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Class labels and labeled boxes of one image.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ImageGroundTruth {
    pub labels: BTreeSet<String>,
    pub boxes: Vec<(String, BoundingBox)>,
}

impl ImageGroundTruth {
    pub fn single(label: &str, bbox: BoundingBox) -> Self {
        ImageGroundTruth {
            labels: BTreeSet::from([label.to_string()]),
            boxes: vec![(label.to_string(), bbox)],
        }
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.labels.contains(label)
    }

    fn shares_label(&self, other: &ImageGroundTruth) -> bool {
        self.labels.iter().any(|l| other.labels.contains(l))
    }
}

/// Ground truth for a collection, indexed like the predictions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub images: Vec<ImageGroundTruth>,
}

impl GroundTruth {
    pub fn classes(&self) -> Vec<String> {
        let mut set = BTreeSet::new();
        for img in &self.images {
            set.extend(img.labels.iter().cloned());
        }
        set.into_iter().collect()
    }
}

/// PASCAL correctness: strictly greater than 0.5 IoU.
fn localized(prediction: &BoundingBox, gt_box: &BoundingBox) -> bool {
    prediction.iou(gt_box) > 0.5
}

/// Percentage of images whose prediction overlaps a ground-truth box of the
/// (optionally filtered) class set with IoU > 0.5. With a class filter only
/// images containing that class are evaluated.
pub fn corloc(
    predictions: &[BoundingBox],
    gt: &GroundTruth,
    class_filter: Option<&str>,
) -> Result<f64> {
    assert_eq!(predictions.len(), gt.images.len());
    let mut evaluated = 0usize;
    let mut correct = 0usize;
    for (pred, img) in predictions.iter().zip(&gt.images) {
        let boxes: Vec<&BoundingBox> = img
            .boxes
            .iter()
            .filter(|(label, _)| class_filter.is_none_or(|c| label == c))
            .map(|(_, b)| b)
            .collect();
        if boxes.is_empty() {
            continue;
        }
        evaluated += 1;
        if boxes.iter().any(|b| localized(pred, b)) {
            correct += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::EmptyEvalSet(format!(
            "no images match class filter {class_filter:?}"
        )));
    }
    Ok(100.0 * correct as f64 / evaluated as f64)
}

/// Any-class CorLoc: an image counts correct if its prediction localizes a
/// ground-truth box of any class.
pub fn corloc_any(predictions: &[BoundingBox], gt: &GroundTruth) -> Result<f64> {
    corloc(predictions, gt, None)
}

/// Mean percentage of each image's neighbors sharing at least one class
/// label with it; optionally restricted to images containing one class.
pub fn corret(
    neighbors: &[Vec<usize>],
    gt: &GroundTruth,
    class_filter: Option<&str>,
) -> Result<f64> {
    assert_eq!(neighbors.len(), gt.images.len());
    let mut total = 0.0;
    let mut evaluated = 0usize;
    for (i, nbrs) in neighbors.iter().enumerate() {
        let img = &gt.images[i];
        if img.labels.is_empty() {
            continue;
        }
        if let Some(class) = class_filter {
            if !img.has_label(class) {
                continue;
            }
        }
        if nbrs.is_empty() {
            return Err(Error::EmptyEvalSet(format!(
                "image {i} has no retrieved neighbors"
            )));
        }
        let matching = nbrs
            .iter()
            .filter(|&&j| gt.images[j].shares_label(img))
            .count();
        total += matching as f64 / nbrs.len() as f64;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::EmptyEvalSet(format!(
            "no labeled images match class filter {class_filter:?}"
        )));
    }
    Ok(100.0 * total / evaluated as f64)
}

/// Retrieval confusion matrix: entry (a, b) is the mean over images labeled
/// `a` of the percentage of their neighbors labeled `b`. Multi-label images
/// contribute one row per label.
pub fn confusion_matrix(
    neighbors: &[Vec<usize>],
    gt: &GroundTruth,
) -> (Vec<String>, Vec<Vec<f64>>) {
    let classes = gt.classes();
    let index = |label: &str| classes.iter().position(|c| c == label).unwrap();
    let mut sums = vec![vec![0.0; classes.len()]; classes.len()];
    let mut counts = vec![0usize; classes.len()];

    for (i, nbrs) in neighbors.iter().enumerate() {
        if nbrs.is_empty() {
            continue;
        }
        for label in &gt.images[i].labels {
            let row = index(label);
            counts[row] += 1;
            for &j in nbrs {
                for nbr_label in &gt.images[j].labels {
                    sums[row][index(nbr_label)] += 100.0 / nbrs.len() as f64;
                }
            }
        }
    }

    let matrix = sums
        .into_iter()
        .zip(&counts)
        .map(|(row, &c)| {
            if c == 0 {
                row
            } else {
                row.into_iter().map(|v| v / c as f64).collect()
            }
        })
        .collect();
    (classes, matrix)
}

/// Evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Per-class metrics over class-restricted sub-collections.
    Separate,
    /// Pooled collection: class-specific and any-class variants plus the
    /// retrieval confusion matrix.
    Mixed,
}

/// Aggregated metric report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub classes: Vec<String>,
    pub per_class_corloc: Vec<f64>,
    pub average_corloc: f64,
    pub per_class_corret: Vec<f64>,
    pub average_corret: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub any_class_corloc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub any_class_corret: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Vec<Vec<f64>>>,
}

/// Any-class CorRet: fraction of neighbors sharing any label, averaged over
/// all labeled images (the unfiltered CorRet).
pub fn corret_any(neighbors: &[Vec<usize>], gt: &GroundTruth) -> Result<f64> {
    corret(neighbors, gt, None)
}

pub fn build_report(
    predictions: &[BoundingBox],
    neighbors: &[Vec<usize>],
    gt: &GroundTruth,
    mode: EvalMode,
) -> Result<EvalReport> {
    let classes = gt.classes();
    if classes.is_empty() {
        return Err(Error::EmptyEvalSet("ground truth has no classes".into()));
    }
    let mut per_class_corloc = Vec::new();
    let mut per_class_corret = Vec::new();
    for class in &classes {
        per_class_corloc.push(corloc(predictions, gt, Some(class))?);
        per_class_corret.push(corret(neighbors, gt, Some(class))?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (any_class_corloc, any_class_corret, confusion) = match mode {
        EvalMode::Separate => (None, None, None),
        EvalMode::Mixed => (
            Some(corloc_any(predictions, gt)?),
            Some(corret_any(neighbors, gt)?),
            Some(confusion_matrix(neighbors, gt).1),
        ),
    };
    Ok(EvalReport {
        mode,
        average_corloc: mean(&per_class_corloc),
        average_corret: mean(&per_class_corret),
        per_class_corloc,
        per_class_corret,
        any_class_corloc,
        any_class_corret,
        confusion,
        classes,
    })
}

impl EvalReport {
    /// Aligned plain-text table in the usual benchmark layout.
    pub fn to_text_table(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.len())
            .chain(["Average".len()])
            .max()
            .unwrap_or(8)
            .max(8);
        let mut out = String::new();
        out.push_str(&format!("{:<w$}  {:>8}  {:>8}\n", "Class", "CorLoc", "CorRet", w = width));
        for (i, class) in self.classes.iter().enumerate() {
            out.push_str(&format!(
                "{:<w$}  {:>8.2}  {:>8.2}\n",
                class,
                self.per_class_corloc[i],
                self.per_class_corret[i],
                w = width
            ));
        }
        out.push_str(&format!(
            "{:<w$}  {:>8.2}  {:>8.2}\n",
            "Average",
            self.average_corloc,
            self.average_corret,
            w = width
        ));
        if let (Some(l), Some(r)) = (self.any_class_corloc, self.any_class_corret) {
            out.push_str(&format!("{:<w$}  {:>8.2}  {:>8.2}\n", "Any-class", l, r, w = width));
        }
        if let Some(confusion) = &self.confusion {
            out.push('\n');
            out.push_str("Retrieval confusion matrix (rows: image class, %):\n");
            for (class, row) in self.classes.iter().zip(confusion) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:>6.1}")).collect();
                out.push_str(&format!("{:<w$}  {}\n", class, cells.join(" "), w = width));
            }
        }
        out
    }

    /// Confusion matrix as CSV with a header row of class names.
    pub fn confusion_csv(&self) -> Option<String> {
        let confusion = self.confusion.as_ref()?;
        let mut out = String::from("class,");
        out.push_str(&self.classes.join(","));
        out.push('\n');
        for (class, row) in self.classes.iter().zip(confusion) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&format!("{class},{}\n", cells.join(",")));
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn single_label_gt(entries: &[(&str, BoundingBox)]) -> GroundTruth {
        GroundTruth {
            images: entries
                .iter()
                .map(|(label, b)| ImageGroundTruth::single(label, *b))
                .collect(),
        }
    }

    #[test]
    fn corloc_perfect_predictions() {
        let b = bb(10.0, 10.0, 50.0, 50.0);
        let gt = single_label_gt(&[("cat", b), ("cat", b)]);
        assert_eq!(corloc(&[b, b], &gt, None).unwrap(), 100.0);
    }

    #[test]
    fn corloc_boundary_iou_is_incorrect() {
        // Prediction covering exactly half of a box twice its height has
        // IoU exactly 0.5, which the strict criterion rejects.
        let gt_box = bb(0.0, 0.0, 10.0, 20.0);
        let pred = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(pred.iou(&gt_box), 0.5);
        let gt = single_label_gt(&[("cat", gt_box)]);
        assert_eq!(corloc(&[pred], &gt, None).unwrap(), 0.0);
    }

    #[test]
    fn corloc_half_correct() {
        let b = bb(10.0, 10.0, 50.0, 50.0);
        let off = bb(60.0, 60.0, 90.0, 90.0);
        let gt = single_label_gt(&[("cat", b), ("cat", b)]);
        assert_eq!(corloc(&[b, off], &gt, None).unwrap(), 50.0);
    }

    #[test]
    fn corloc_class_filter_restricts_images() {
        let b = bb(10.0, 10.0, 50.0, 50.0);
        let off = bb(60.0, 60.0, 90.0, 90.0);
        let gt = single_label_gt(&[("cat", b), ("dog", b)]);
        assert_eq!(corloc(&[b, off], &gt, Some("cat")).unwrap(), 100.0);
        assert_eq!(corloc(&[b, off], &gt, Some("dog")).unwrap(), 0.0);
    }

    #[test]
    fn corloc_empty_filter_is_error() {
        let b = bb(10.0, 10.0, 50.0, 50.0);
        let gt = single_label_gt(&[("cat", b)]);
        assert!(matches!(
            corloc(&[b], &gt, Some("zebra")),
            Err(Error::EmptyEvalSet(_))
        ));
    }

    #[test]
    fn corloc_any_multi_label_counts_any_match() {
        let cat_box = bb(0.0, 0.0, 30.0, 30.0);
        let dog_box = bb(50.0, 50.0, 90.0, 90.0);
        let mut img = ImageGroundTruth::single("cat", cat_box);
        img.labels.insert("dog".into());
        img.boxes.push(("dog".into(), dog_box));
        let gt = GroundTruth { images: vec![img] };
        assert_eq!(corloc_any(&[dog_box], &gt).unwrap(), 100.0);
    }

    #[test]
    fn corret_counts_shared_labels() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let gt = single_label_gt(&[("cat", b), ("cat", b), ("dog", b)]);
        // Image 0 retrieves one cat and one dog: 50%.
        let neighbors = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
        assert_eq!(corret(&neighbors, &gt, Some("cat")).unwrap(), 50.0);
        assert_eq!(corret(&neighbors, &gt, Some("dog")).unwrap(), 0.0);
    }

    #[test]
    fn corret_mean_of_per_image_fractions() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        // 12 images; image 0 at 70%, image 1 at 30%.
        let mut entries = vec![("a", b); 12];
        for e in entries.iter_mut().skip(2) {
            e.0 = "b";
        }
        let gt = single_label_gt(&entries);
        let n0: Vec<usize> = vec![1, 1, 1, 1, 1, 1, 1, 2, 3, 4]; // 7 of 10 share "a"
        let n1: Vec<usize> = vec![0, 0, 0, 2, 3, 4, 5, 6, 7, 8]; // 3 of 10 share "a"
        let mut neighbors = vec![n0, n1];
        for _ in 2..12 {
            neighbors.push(vec![0, 1]);
        }
        assert!((corret(&neighbors, &gt, Some("a")).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn corret_rejects_empty_neighbor_lists() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let gt = single_label_gt(&[("a", b), ("a", b)]);
        assert!(corret(&[vec![], vec![0]], &gt, None).is_err());
    }

    #[test]
    fn confusion_identity_for_perfect_clustering() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let gt = single_label_gt(&[("a", b), ("a", b), ("b", b), ("b", b)]);
        let neighbors = vec![vec![1], vec![0], vec![3], vec![2]];
        let (classes, m) = confusion_matrix(&neighbors, &gt);
        assert_eq!(classes, vec!["a", "b"]);
        assert_eq!(m, vec![vec![100.0, 0.0], vec![0.0, 100.0]]);
    }

    #[test]
    fn confusion_single_class_is_100() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let gt = single_label_gt(&[("a", b), ("a", b)]);
        let (classes, m) = confusion_matrix(&[vec![1], vec![0]], &gt);
        assert_eq!(classes.len(), 1);
        assert_eq!(m, vec![vec![100.0]]);
    }

    #[test]
    fn confusion_rows_sum_to_100_for_single_label() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let gt = single_label_gt(&[("a", b), ("b", b), ("c", b), ("a", b)]);
        let neighbors = vec![vec![1, 2, 3], vec![0, 2], vec![0, 1], vec![1, 2, 0]];
        let (_, m) = confusion_matrix(&neighbors, &gt);
        for row in m {
            assert!((row.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mixed_report_hand_fixture() {
        // 10 images across two classes with hand-marked hits.
        let hit = bb(0.0, 0.0, 20.0, 20.0);
        let miss = bb(60.0, 60.0, 80.0, 80.0);
        let labels = ["a", "a", "a", "a", "a", "a", "b", "b", "b", "b"];
        let gt = single_label_gt(&labels.map(|l| (l, hit)));
        // 4 of 6 "a" images correct, 3 of 4 "b" images correct.
        let preds = vec![hit, hit, hit, hit, miss, miss, hit, hit, hit, miss];
        let neighbors: Vec<Vec<usize>> = (0..10).map(|i| vec![(i + 1) % 10]).collect();
        let report = build_report(&preds, &neighbors, &gt, EvalMode::Mixed).unwrap();
        assert!((report.per_class_corloc[0] - 400.0 / 6.0).abs() < 1e-9);
        assert_eq!(report.per_class_corloc[1], 75.0);
        // Any-class equals plain per-image accuracy: 7/10.
        assert_eq!(report.any_class_corloc, Some(70.0));
        assert!(report.confusion.is_some());
        assert!(report.to_text_table().contains("Any-class"));
    }
}
