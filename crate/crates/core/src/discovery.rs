//! Iterative unsupervised discovery: neighbor retrieval, asymmetric
//! part-based matching with multi-source confidence aggregation, standout
//! scoring, and potential-object-region updates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptors::{appearance_similarity, PatchDescriptor};
use crate::error::{Error, Result};
use crate::geometry::{contained_in, BoundingBox, ContainmentRule};
use crate::phm::{phm_region_confidence, HoughConfig, RegionsView};
use crate::proposals::RegionSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    /// Neighbor images retrieved per image (k).
    pub neighbors: usize,
    /// Potential object regions maintained per image.
    pub potential_regions: usize,
    /// Iterations of the retrieve/match/localize loop.
    pub iterations: usize,
    /// Regions per image used by matching-based retrieval.
    pub retrieval_top_regions: usize,
    /// Overlap fraction for "contained in a potential object region".
    pub qualify_overlap: f64,
    pub containment: ContainmentRule,
    pub hough: HoughConfig,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            neighbors: 10,
            potential_regions: 5,
            iterations: 5,
            retrieval_top_regions: 20,
            qualify_overlap: 0.8,
            containment: ContainmentRule::default(),
            hough: HoughConfig::default(),
        }
    }
}

/// Per-image state carried across iterations.
#[derive(Debug, Clone)]
pub struct ImageState {
    /// Potential object region ids, ordered by descending standout.
    pub potential: Vec<u32>,
    /// Neighbor image indices used this iteration.
    pub neighbors: Vec<usize>,
    /// Aggregated confidence (psi) per region.
    pub psi: Vec<f64>,
    /// Standout score per region.
    pub standout: Vec<f64>,
}

/// One iteration's snapshot for an image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub neighbors: Vec<usize>,
    pub potential_regions: Vec<u32>,
    /// Box of the top-standout region at this iteration.
    pub top_box: BoundingBox,
    pub top_standout: f64,
}

/// Final per-image discovery output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub part_boxes: Vec<BoundingBox>,
    pub neighbors: Vec<usize>,
    pub standout_score: f64,
    pub history: Vec<IterationRecord>,
}

/// First-iteration retrieval: k most similar images by global descriptor.
/// Ties break toward the lower image index; images never retrieve themselves.
pub fn initial_retrieval(globals: &[PatchDescriptor], k: usize) -> Result<Vec<Vec<usize>>> {
    if globals.len() < 2 {
        return Err(Error::CollectionTooSmall {
            needed: 2,
            got: globals.len(),
        });
    }
    let n = globals.len();
    Ok((0..n)
        .map(|i| {
            let sims: Vec<f64> = (0..n)
                .map(|j| {
                    if i == j {
                        f64::NEG_INFINITY
                    } else {
                        appearance_similarity(&globals[i], &globals[j]).unwrap_or(0.0) as f64
                    }
                })
                .collect();
            top_k_by_score(&sims, k.min(n - 1))
        })
        .collect())
}

/// Indices of the `k` highest scores, descending, ties to the lower index.
fn top_k_by_score(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i] > f64::NEG_INFINITY)
        .collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Region ids contained in any of the potential object regions: at least
/// `overlap` of the region's area must fall inside one potential box.
pub fn qualifying_regions(set: &RegionSet, potential: &[u32], overlap: f64) -> Vec<u32> {
    set.regions
        .iter()
        .filter(|r| {
            potential.iter().any(|&o| {
                r.bbox.overlap_fraction(&set.regions[o as usize].bbox) >= overlap
            })
        })
        .map(|r| r.id)
        .collect()
}

/// The `top` qualifying regions ranked by confidence, descending, ties to
/// the lower region id.
pub fn top_confident_qualifying(
    set: &RegionSet,
    psi: &[f64],
    potential: &[u32],
    overlap: f64,
    top: usize,
) -> Vec<u32> {
    let mut ids = qualifying_regions(set, potential, overlap);
    ids.sort_by(|&a, &b| {
        psi[b as usize]
            .partial_cmp(&psi[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    ids.truncate(top);
    ids
}

/// Multi-source aggregated confidence: psi(r) = sum over sources of the
/// max-pooled match confidence from an independent PHM run per source.
/// The target view carries all its proposals; each source view is expected
/// to be restricted to its potential object regions (asymmetric matching).
pub fn aggregate_confidence(
    target: &RegionsView,
    sources: &[RegionsView],
    config: &HoughConfig,
) -> Vec<f64> {
    let mut psi = vec![0.0; target.len()];
    for source in sources {
        if source.is_empty() {
            continue;
        }
        let phi = phm_region_confidence(target, source, config);
        for (acc, v) in psi.iter_mut().zip(phi) {
            *acc += v;
        }
    }
    psi
}

/// For each region, ids of regions containing it under the containment rule.
pub fn containment_graph(set: &RegionSet, rule: &ContainmentRule) -> Vec<Vec<u32>> {
    set.regions
        .iter()
        .map(|r| {
            set.regions
                .iter()
                .filter(|rb| rb.id != r.id && contained_in(&r.bbox, &rb.bbox, rule))
                .map(|rb| rb.id)
                .collect()
        })
        .collect()
}

/// Standout: psi(r) minus the best psi among regions containing r; regions
/// with no container keep their full confidence.
pub fn standout_scores_with_graph(containers: &[Vec<u32>], psi: &[f64]) -> Vec<f64> {
    psi.iter()
        .enumerate()
        .map(|(i, &p)| {
            let background = containers[i]
                .iter()
                .map(|&b| psi[b as usize])
                .fold(f64::NEG_INFINITY, f64::max);
            if background == f64::NEG_INFINITY {
                p
            } else {
                p - background
            }
        })
        .collect()
}

/// Standout from scratch (containment graph computed on the fly).
pub fn standout_scores(set: &RegionSet, psi: &[f64], rule: &ContainmentRule) -> Vec<f64> {
    standout_scores_with_graph(&containment_graph(set, rule), psi)
}

/// Region ids with the top standout scores, descending, ties to lower id.
pub fn update_potential_regions(standout: &[f64], count: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..standout.len() as u32).collect();
    ids.sort_by(|&a, &b| {
        standout[b as usize]
            .partial_cmp(&standout[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    ids.truncate(count.max(1));
    ids
}

/// Matching-based retrieval used from the second iteration on: each ordered
/// pair is scored by an asymmetric PHM run over the top confident regions
/// contained in each image's potential object regions, summing the target
/// side's region confidences.
pub fn matching_retrieval(
    sets: &[RegionSet],
    states: &[ImageState],
    config: &DiscoveryConfig,
) -> Vec<Vec<usize>> {
    let n = sets.len();
    let retrieval_sets: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            top_confident_qualifying(
                &sets[i],
                &states[i].psi,
                &states[i].potential,
                config.qualify_overlap,
                config.retrieval_top_regions,
            )
        })
        .collect();

    (0..n)
        .into_par_iter()
        .map(|i| {
            let target = RegionsView::subset(&sets[i], &retrieval_sets[i]);
            let sims: Vec<f64> = (0..n)
                .map(|j| {
                    if i == j {
                        return f64::NEG_INFINITY;
                    }
                    let source = RegionsView::subset(&sets[j], &retrieval_sets[j]);
                    phm_region_confidence(&target, &source, &config.hough)
                        .iter()
                        .sum()
                })
                .collect();
            top_k_by_score(&sims, config.neighbors.min(n - 1))
        })
        .collect()
}

/// Input to `run_discovery`: region sets with descriptors filled, the global
/// descriptor and the full-frame region id per image.
pub struct DiscoveryInput {
    pub image_ids: Vec<String>,
    pub sets: Vec<RegionSet>,
    pub globals: Vec<PatchDescriptor>,
    pub full_frame_ids: Vec<u32>,
}

/// Run the full iterative discovery algorithm over a collection.
pub fn run_discovery(input: &DiscoveryInput, config: &DiscoveryConfig) -> Result<Vec<DiscoveryResult>> {
    let n = input.sets.len();
    if n < 2 {
        return Err(Error::CollectionTooSmall { needed: 2, got: n });
    }

    let graphs: Vec<Vec<Vec<u32>>> = input
        .sets
        .par_iter()
        .map(|set| containment_graph(set, &config.containment))
        .collect();

    let mut states: Vec<ImageState> = (0..n)
        .map(|i| ImageState {
            potential: vec![input.full_frame_ids[i]],
            neighbors: Vec::new(),
            psi: vec![0.0; input.sets[i].len()],
            standout: vec![0.0; input.sets[i].len()],
        })
        .collect();
    let mut histories: Vec<Vec<IterationRecord>> = vec![Vec::new(); n];

    for iteration in 0..config.iterations {
        let neighbors: Vec<Vec<usize>> = if iteration == 0 {
            initial_retrieval(&input.globals, config.neighbors)?
        } else {
            matching_retrieval(&input.sets, &states, config)
        };

        let new_states: Vec<ImageState> = (0..n)
            .into_par_iter()
            .map(|i| {
                let source_ids: Vec<Vec<u32>> = neighbors[i]
                    .iter()
                    .map(|&j| {
                        qualifying_regions(
                            &input.sets[j],
                            &states[j].potential,
                            config.qualify_overlap,
                        )
                    })
                    .collect();
                let sources: Vec<RegionsView> = neighbors[i]
                    .iter()
                    .zip(&source_ids)
                    .map(|(&j, ids)| RegionsView::subset(&input.sets[j], ids))
                    .collect();
                let target = RegionsView::full(&input.sets[i]);
                let psi = aggregate_confidence(&target, &sources, &config.hough);
                let standout = standout_scores_with_graph(&graphs[i], &psi);
                let potential = update_potential_regions(&standout, config.potential_regions);
                ImageState {
                    potential,
                    neighbors: neighbors[i].clone(),
                    psi,
                    standout,
                }
            })
            .collect();

        states = new_states;
        for (i, state) in states.iter().enumerate() {
            let top = state.potential[0] as usize;
            histories[i].push(IterationRecord {
                neighbors: state.neighbors.clone(),
                potential_regions: state.potential.clone(),
                top_box: input.sets[i].regions[top].bbox,
                top_standout: state.standout[top],
            });
        }
    }

    Ok((0..n)
        .map(|i| {
            let state = &states[i];
            let final_id = state.potential[0] as usize;
            let final_box = input.sets[i].regions[final_id].bbox;
            let part_boxes = select_part_boxes(
                &input.sets[i],
                &state.psi,
                final_id as u32,
                config.potential_regions,
                &config.containment,
            );
            DiscoveryResult {
                image_id: input.image_ids[i].clone(),
                bbox: final_box,
                part_boxes,
                neighbors: state.neighbors.clone(),
                standout_score: state.standout[final_id],
                history: histories[i].clone(),
            }
        })
        .collect())
}

/// The most confident part regions inside the final box: ranked by psi among
/// regions related to the final box by containment or full inclusion,
/// excluding the final box itself.
fn select_part_boxes(
    set: &RegionSet,
    psi: &[f64],
    final_id: u32,
    count: usize,
    rule: &ContainmentRule,
) -> Vec<BoundingBox> {
    let final_box = set.regions[final_id as usize].bbox;
    let mut ids: Vec<u32> = set
        .regions
        .iter()
        .filter(|r| {
            r.id != final_id
                && (contained_in(&r.bbox, &final_box, rule) || r.bbox.inside(&final_box))
        })
        .map(|r| r.id)
        .collect();
    ids.sort_by(|&a, &b| {
        psi[b as usize]
            .partial_cmp(&psi[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    ids.truncate(count);
    ids.iter().map(|&i| set.regions[i as usize].bbox).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::{PatchDescriptor, DESCRIPTOR_DIM};

    fn descriptor(hot: &[(usize, f32)]) -> PatchDescriptor {
        let mut v = vec![0f32; DESCRIPTOR_DIM];
        for &(i, val) in hot {
            v[i] = val;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        PatchDescriptor::from_values(v)
    }

    #[test]
    fn initial_retrieval_identical_images() {
        let d = descriptor(&[(0, 1.0)]);
        let globals = vec![d.clone(), d.clone(), d];
        let neighbors = initial_retrieval(&globals, 2).unwrap();
        assert_eq!(neighbors[0], vec![1, 2]);
        assert_eq!(neighbors[1], vec![0, 2]);
        assert_eq!(neighbors[2], vec![0, 1]);
    }

    #[test]
    fn initial_retrieval_respects_clusters() {
        let a = descriptor(&[(0, 1.0)]);
        let b = descriptor(&[(1, 1.0)]);
        let globals = vec![a.clone(), a.clone(), a, b.clone(), b.clone(), b];
        let neighbors = initial_retrieval(&globals, 2).unwrap();
        for i in 0..3 {
            for &j in &neighbors[i] {
                assert!(j < 3, "image {i} retrieved cross-cluster neighbor {j}");
            }
        }
        for i in 3..6 {
            for &j in &neighbors[i] {
                assert!(j >= 3, "image {i} retrieved cross-cluster neighbor {j}");
            }
        }
    }

    #[test]
    fn initial_retrieval_needs_two_images() {
        let d = descriptor(&[(0, 1.0)]);
        assert!(initial_retrieval(&[d], 1).is_err());
    }

    #[test]
    fn standout_nested_triple() {
        // part (small, inside object), object (inside scene), scene (frame).
        let boxes = vec![
            BoundingBox::new(40.0, 40.0, 56.0, 56.0).unwrap(),
            BoundingBox::new(30.0, 30.0, 70.0, 70.0).unwrap(),
            BoundingBox::new(0.0, 0.0, 100.0, 100.0).unwrap(),
        ];
        let set = RegionSet::from_boxes(0, 100, 100, boxes);
        let rule = ContainmentRule::default();
        let psi = vec![5.0, 8.0, 3.0];
        let s = standout_scores(&set, &psi, &rule);
        assert_eq!(s, vec![-3.0, 5.0, 3.0]);
    }

    #[test]
    fn standout_empty_background_keeps_psi() {
        let set = RegionSet::from_boxes(
            0,
            100,
            100,
            vec![BoundingBox::new(0.0, 0.0, 100.0, 100.0).unwrap()],
        );
        let s = standout_scores(&set, &[4.2], &ContainmentRule::default());
        assert_eq!(s, vec![4.2]);
    }

    #[test]
    fn standout_uniform_psi_nonpositive_for_contained() {
        let boxes = vec![
            BoundingBox::new(40.0, 40.0, 56.0, 56.0).unwrap(),
            BoundingBox::new(0.0, 0.0, 100.0, 100.0).unwrap(),
        ];
        let set = RegionSet::from_boxes(0, 100, 100, boxes);
        let s = standout_scores(&set, &[2.0, 2.0], &ContainmentRule::default());
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1], 2.0);
    }

    #[test]
    fn update_potential_short_input() {
        assert_eq!(update_potential_regions(&[1.0, 3.0, 2.0], 5), vec![1, 2, 0]);
    }

    #[test]
    fn update_potential_tie_break_low_id() {
        assert_eq!(update_potential_regions(&[2.0, 3.0, 2.0], 2), vec![1, 0]);
    }

    #[test]
    fn qualifying_uses_overlap_fraction() {
        let boxes = vec![
            BoundingBox::new(0.0, 0.0, 100.0, 100.0).unwrap(), // potential
            BoundingBox::new(10.0, 10.0, 30.0, 30.0).unwrap(), // inside
            BoundingBox::new(90.0, 90.0, 130.0, 130.0).unwrap(),
        ];
        let set = RegionSet::from_boxes(0, 200, 200, boxes);
        let q = qualifying_regions(&set, &[0], 0.8);
        assert_eq!(q, vec![0, 1]);
    }
}
