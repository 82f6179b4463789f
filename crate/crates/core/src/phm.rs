//! Probabilistic Hough Matching between two region sets.
//!
//! Bottom-up pass: every candidate pair votes its appearance similarity
//! into a 3-D offset accumulator (translation x/y + log scale), spread by a
//! truncated Gaussian over neighboring bins. Top-down pass: each pair's
//! confidence is its similarity times the Gaussian-weighted readout of the
//! accumulator around its own offset.

use serde::{Deserialize, Serialize};

use crate::descriptors::dot;
use crate::geometry::{offset_of, Offset};
use crate::proposals::{Region, RegionSet};

/// Bin geometry and kernel parameters of the Hough space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoughConfig {
    pub bins_x: usize,
    pub bins_y: usize,
    pub bins_scale: usize,
    /// Half-range of the dx/dy axes; the grid covers [-range, range].
    pub range_translation: f64,
    /// Half-range of the log2-scale axis.
    pub range_scale: f64,
    /// Gaussian sigma in units of one bin width, per axis.
    pub sigma_bins: f64,
    /// Kernel support half-width in sigmas; weight is 0 beyond it.
    pub truncation_sigmas: f64,
    /// Pairs with appearance similarity below this are skipped entirely.
    pub appearance_threshold: f32,
    /// Multiplier applied to every appearance similarity after the skip
    /// test; scales h by alpha and confidences by alpha^2 without moving
    /// any argmax.
    pub appearance_scale: f64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        HoughConfig {
            bins_x: 21,
            bins_y: 21,
            bins_scale: 9,
            range_translation: 1.0,
            range_scale: 2.0,
            sigma_bins: 1.0,
            truncation_sigmas: 2.0,
            appearance_threshold: 1e-4,
            appearance_scale: 1.0,
        }
    }
}

impl HoughConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if self.bins_x == 0 || self.bins_y == 0 || self.bins_scale == 0 {
            return Err(crate::error::Error::Config("hough bins must be positive".into()));
        }
        if self.range_translation <= 0.0 || self.range_scale <= 0.0 {
            return Err(crate::error::Error::Config("hough ranges must be positive".into()));
        }
        if self.sigma_bins <= 0.0 || self.truncation_sigmas <= 0.0 {
            return Err(crate::error::Error::Config(
                "sigma and truncation must be positive".into(),
            ));
        }
        if self.appearance_threshold < 0.0 || self.appearance_scale <= 0.0 {
            return Err(crate::error::Error::Config(
                "appearance threshold must be >= 0 and scale > 0".into(),
            ));
        }
        Ok(())
    }

    fn axes(&self) -> [Axis; 3] {
        [
            Axis::new(-self.range_translation, self.range_translation, self.bins_x),
            Axis::new(-self.range_translation, self.range_translation, self.bins_y),
            Axis::new(-self.range_scale, self.range_scale, self.bins_scale),
        ]
    }

    /// Kernel support half-width in bin units.
    fn support(&self) -> f64 {
        self.sigma_bins * self.truncation_sigmas
    }

    /// Continuous bin-space coordinates of an offset, clamped to the grid so
    /// out-of-range offsets vote into the nearest boundary bins.
    pub fn bin_coords(&self, offset: &Offset) -> [f64; 3] {
        let axes = self.axes();
        [
            axes[0].coord(offset.dx),
            axes[1].coord(offset.dy),
            axes[2].coord(offset.dscale),
        ]
    }

    /// Center of a bin in offset space.
    pub fn bin_center(&self, ix: usize, iy: usize, is: usize) -> (f64, f64, f64) {
        let axes = self.axes();
        (axes[0].center(ix), axes[1].center(iy), axes[2].center(is))
    }
}

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    bin_width: f64,
    n: usize,
}

impl Axis {
    fn new(lo: f64, hi: f64, n: usize) -> Self {
        Axis {
            lo,
            bin_width: (hi - lo) / n as f64,
            n,
        }
    }

    fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.bin_width
    }

    fn coord(&self, v: f64) -> f64 {
        ((v - self.lo) / self.bin_width - 0.5).clamp(0.0, (self.n - 1) as f64)
    }
}

/// Unnormalized isotropic Gaussian in bin units, truncated per axis.
/// `m_offset` is a candidate match's pose displacement, `bin_center` the
/// offset-space center of a Hough bin.
pub fn geometry_likelihood(
    config: &HoughConfig,
    m_offset: &Offset,
    bin_center: (f64, f64, f64),
) -> f64 {
    let axes = config.axes();
    let deltas = [
        (m_offset.dx - bin_center.0) / axes[0].bin_width,
        (m_offset.dy - bin_center.1) / axes[1].bin_width,
        (m_offset.dscale - bin_center.2) / axes[2].bin_width,
    ];
    let support = config.support();
    let mut sum_sq = 0.0;
    for d in deltas {
        let d = d / config.sigma_bins;
        if d.abs() > support / config.sigma_bins {
            return 0.0;
        }
        sum_sq += d * d;
    }
    (-0.5 * sum_sq).exp()
}

/// 3-D accumulator of pseudo-likelihood scores over pose offsets.
#[derive(Debug, Clone)]
pub struct HoughSpace {
    config: HoughConfig,
    bins: Vec<f64>,
}

impl HoughSpace {
    pub fn zeros(config: &HoughConfig) -> Self {
        HoughSpace {
            config: config.clone(),
            bins: vec![0.0; config.bins_x * config.bins_y * config.bins_scale],
        }
    }

    pub fn config(&self) -> &HoughConfig {
        &self.config
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    #[inline]
    fn index(&self, ix: usize, iy: usize, is: usize) -> usize {
        (is * self.config.bins_y + iy) * self.config.bins_x + ix
    }

    pub fn score(&self, ix: usize, iy: usize, is: usize) -> f64 {
        self.bins[self.index(ix, iy, is)]
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// Bin indices of the maximal score; ties resolve to the lowest index.
    pub fn argmax(&self) -> (usize, usize, usize) {
        let mut best = 0;
        for (i, &v) in self.bins.iter().enumerate() {
            if v > self.bins[best] {
                best = i;
            }
        }
        let ix = best % self.config.bins_x;
        let iy = (best / self.config.bins_x) % self.config.bins_y;
        let is = best / (self.config.bins_x * self.config.bins_y);
        (ix, iy, is)
    }
}

/// Dense n x n' match confidence matrix.
#[derive(Debug, Clone)]
pub struct MatchConfidences {
    n: usize,
    n_prime: usize,
    data: Vec<f64>,
}

impl MatchConfidences {
    pub fn zeros(n: usize, n_prime: usize) -> Self {
        MatchConfidences {
            n,
            n_prime,
            data: vec![0.0; n * n_prime],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let n_prime = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * n_prime);
        for row in rows {
            assert_eq!(row.len(), n_prime);
            data.extend(row);
        }
        MatchConfidences { n, n_prime, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_prime(&self) -> usize {
        self.n_prime
    }

    pub fn get(&self, r: usize, r_prime: usize) -> f64 {
        self.data[r * self.n_prime + r_prime]
    }

    fn set(&mut self, r: usize, r_prime: usize, v: f64) {
        self.data[r * self.n_prime + r_prime] = v;
    }
}

/// A borrowed, possibly restricted view of one image's regions.
#[derive(Debug, Clone)]
pub struct RegionsView<'a> {
    pub width: u32,
    pub height: u32,
    pub regions: Vec<&'a Region>,
}

impl<'a> RegionsView<'a> {
    pub fn full(set: &'a RegionSet) -> Self {
        RegionsView {
            width: set.width,
            height: set.height,
            regions: set.regions.iter().collect(),
        }
    }

    pub fn subset(set: &'a RegionSet, ids: &[u32]) -> Self {
        RegionsView {
            width: set.width,
            height: set.height,
            regions: ids.iter().map(|&i| &set.regions[i as usize]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Per-axis kernel window around a clamped bin coordinate: the bin range
/// and Gaussian weights within the truncation support.
fn axis_window(coord: f64, n: usize, config: &HoughConfig) -> (usize, Vec<f64>) {
    let support = config.support();
    let lo = ((coord - support).ceil().max(0.0)) as usize;
    let hi = ((coord + support).floor()).min((n - 1) as f64) as usize;
    let inv_sigma = 1.0 / config.sigma_bins;
    let weights = (lo..=hi)
        .map(|j| {
            let d = (j as f64 - coord) * inv_sigma;
            (-0.5 * d * d).exp()
        })
        .collect();
    (lo, weights)
}

/// Appearance similarities above the skip threshold, with the offset bin
/// coordinates of each surviving pair. Shared by the vote and readout passes
/// so both apply exactly the same skip rule.
struct Candidates {
    /// (target index, source index, scaled similarity, bin coords)
    pairs: Vec<(u32, u32, f64, [f64; 3])>,
}

fn collect_candidates(
    target: &RegionsView,
    source: &RegionsView,
    config: &HoughConfig,
) -> Candidates {
    let target_dims = (target.width, target.height);
    let mut pairs = Vec::new();
    for (i, r) in target.regions.iter().enumerate() {
        let f = r
            .descriptor
            .as_ref()
            .expect("descriptors must be filled before matching");
        for (j, r_prime) in source.regions.iter().enumerate() {
            let f_prime = r_prime
                .descriptor
                .as_ref()
                .expect("descriptors must be filled before matching");
            let p_a = dot(f.values(), f_prime.values());
            if p_a < config.appearance_threshold {
                continue;
            }
            let offset = offset_of(&r.location, &r_prime.location, target_dims);
            pairs.push((
                i as u32,
                j as u32,
                p_a as f64 * config.appearance_scale,
                config.bin_coords(&offset),
            ));
        }
    }
    Candidates { pairs }
}

fn vote_candidates(candidates: &Candidates, config: &HoughConfig) -> HoughSpace {
    let mut hough = HoughSpace::zeros(config);
    for &(_, _, p_a, coords) in &candidates.pairs {
        let (x0, wx) = axis_window(coords[0], config.bins_x, config);
        let (y0, wy) = axis_window(coords[1], config.bins_y, config);
        let (s0, ws) = axis_window(coords[2], config.bins_scale, config);
        for (ds, &gs) in ws.iter().enumerate() {
            for (dy, &gy) in wy.iter().enumerate() {
                let base = hough.index(x0, y0 + dy, s0 + ds);
                let row = &mut hough.bins[base..base + wx.len()];
                let w = p_a * gs * gy;
                for (slot, &gx) in row.iter_mut().zip(&wx) {
                    *slot += w * gx;
                }
            }
        }
    }
    hough
}

fn readout_candidate(hough: &HoughSpace, coords: &[f64; 3], config: &HoughConfig) -> f64 {
    let (x0, wx) = axis_window(coords[0], config.bins_x, config);
    let (y0, wy) = axis_window(coords[1], config.bins_y, config);
    let (s0, ws) = axis_window(coords[2], config.bins_scale, config);
    let mut sum = 0.0;
    for (ds, &gs) in ws.iter().enumerate() {
        for (dy, &gy) in wy.iter().enumerate() {
            let base = hough.index(x0, y0 + dy, s0 + ds);
            let row = &hough.bins[base..base + wx.len()];
            let mut acc = 0.0;
            for (&h, &gx) in row.iter().zip(&wx) {
                acc += h * gx;
            }
            sum += gs * gy * acc;
        }
    }
    sum
}

/// Bottom-up pass: accumulate appearance-weighted geometry votes.
pub fn vote(target: &RegionsView, source: &RegionsView, config: &HoughConfig) -> HoughSpace {
    vote_candidates(&collect_candidates(target, source, config), config)
}

/// Top-down pass: per-pair confidence from the Hough space.
pub fn match_confidence(
    target: &RegionsView,
    source: &RegionsView,
    hough: &HoughSpace,
    config: &HoughConfig,
) -> MatchConfidences {
    let candidates = collect_candidates(target, source, config);
    let mut conf = MatchConfidences::zeros(target.len(), source.len());
    for &(i, j, p_a, coords) in &candidates.pairs {
        conf.set(i as usize, j as usize, p_a * readout_candidate(hough, &coords, config));
    }
    conf
}

/// Both passes over one pair, sharing the candidate scan.
pub fn phm_pair(
    target: &RegionsView,
    source: &RegionsView,
    config: &HoughConfig,
) -> (HoughSpace, MatchConfidences) {
    let candidates = collect_candidates(target, source, config);
    let hough = vote_candidates(&candidates, config);
    let mut conf = MatchConfidences::zeros(target.len(), source.len());
    for &(i, j, p_a, coords) in &candidates.pairs {
        conf.set(i as usize, j as usize, p_a * readout_candidate(hough, &coords, config));
    }
    (hough, conf)
}

/// Max-pooled per-target-region confidence (phi) without materializing the
/// confidence matrix.
pub fn phm_region_confidence(
    target: &RegionsView,
    source: &RegionsView,
    config: &HoughConfig,
) -> Vec<f64> {
    let candidates = collect_candidates(target, source, config);
    let hough = vote_candidates(&candidates, config);
    let mut phi = vec![0.0; target.len()];
    for &(i, _, p_a, coords) in &candidates.pairs {
        let c = p_a * readout_candidate(&hough, &coords, config);
        if c > phi[i as usize] {
            phi[i as usize] = c;
        }
    }
    phi
}

/// Row-wise max of the confidence matrix (phi per target region).
pub fn region_confidence(conf: &MatchConfidences) -> Vec<f64> {
    (0..conf.n())
        .map(|r| {
            (0..conf.n_prime())
                .map(|rp| conf.get(r, rp))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Greedy one-to-one match extraction: repeatedly take the globally maximal
/// remaining entry and delete its row and column. Ties break toward the
/// lowest (r, r') pair. Entries that are exactly zero are never emitted.
pub fn greedy_one_to_one(conf: &MatchConfidences, k: usize) -> Vec<(usize, usize, f64)> {
    let mut used_rows = vec![false; conf.n()];
    let mut used_cols = vec![false; conf.n_prime()];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut best: Option<(usize, usize, f64)> = None;
        for r in 0..conf.n() {
            if used_rows[r] {
                continue;
            }
            for rp in 0..conf.n_prime() {
                if used_cols[rp] {
                    continue;
                }
                let v = conf.get(r, rp);
                if best.map_or(v > 0.0, |(_, _, b)| v > b) {
                    best = Some((r, rp, v));
                }
            }
        }
        match best {
            Some((r, rp, v)) => {
                used_rows[r] = true;
                used_cols[rp] = true;
                out.push((r, rp, v));
            }
            None => break,
        }
    }
    out
}
