//! Flat key-value pipeline configuration.
//!
//! Every tunable of the pipeline lives here with its documented default.
//! Unknown keys are errors; every field is range-checked at load.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorParams;
use crate::discovery::DiscoveryConfig;
use crate::error::{Error, Result};
use crate::geometry::ContainmentRule;
use crate::phm::HoughConfig;
use crate::proposals::GeneratorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Neighbor images per image (k).
    pub k: usize,
    /// Potential object regions maintained per image.
    pub potential_regions: usize,
    /// Discovery iterations.
    pub iterations: usize,
    /// Regions per image used by matching-based retrieval.
    pub retrieval_top_regions: usize,
    /// Containment: contained box area must be below this fraction of the
    /// container's area.
    pub containment_area_ratio: f64,
    /// Containment: this fraction of the contained box must overlap the
    /// container.
    pub containment_overlap: f64,
    pub hough_bins_x: usize,
    pub hough_bins_y: usize,
    pub hough_bins_scale: usize,
    pub hough_range_translation: f64,
    pub hough_range_scale: f64,
    pub hough_sigma_bins: f64,
    pub hough_truncation_sigmas: f64,
    pub appearance_threshold: f32,
    pub appearance_scale: f64,
    /// Maximum proposals per image.
    pub proposal_cap: usize,
    pub proposal_min_scale: f64,
    pub proposal_max_scale: f64,
    pub proposal_stride: f64,
    /// Patch resample side for descriptor extraction.
    pub patch_size: u32,
    /// Worker threads; 0 uses the runtime default.
    pub workers: usize,
    /// Seed for the synthetic generator (the discovery pipeline itself is
    /// randomness-free).
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 10,
            potential_regions: 5,
            iterations: 5,
            retrieval_top_regions: 20,
            containment_area_ratio: 0.5,
            containment_overlap: 0.8,
            hough_bins_x: 21,
            hough_bins_y: 21,
            hough_bins_scale: 9,
            hough_range_translation: 1.0,
            hough_range_scale: 2.0,
            hough_sigma_bins: 1.0,
            hough_truncation_sigmas: 2.0,
            appearance_threshold: 1e-4,
            appearance_scale: 1.0,
            proposal_cap: 4000,
            proposal_min_scale: 0.1,
            proposal_max_scale: 1.0,
            proposal_stride: 0.5,
            patch_size: 64,
            workers: 0,
            seed: 0,
        }
    }
}

macro_rules! config_keys {
    ($($key:ident),* $(,)?) => {
        fn set_key(config: &mut PipelineConfig, key: &str, value: &str) -> std::result::Result<(), String> {
            match key {
                $(stringify!($key) => {
                    config.$key = value
                        .parse()
                        .map_err(|_| format!("invalid value {value:?} for key {key}"))?;
                    Ok(())
                })*
                _ => Err(format!("unknown key {key:?}")),
            }
        }

        fn render(config: &PipelineConfig) -> String {
            let mut out = String::new();
            $(writeln!(out, "{} = {}", stringify!($key), config.$key).unwrap();)*
            out
        }
    };
}

config_keys!(
    k,
    potential_regions,
    iterations,
    retrieval_top_regions,
    containment_area_ratio,
    containment_overlap,
    hough_bins_x,
    hough_bins_y,
    hough_bins_scale,
    hough_range_translation,
    hough_range_scale,
    hough_sigma_bins,
    hough_truncation_sigmas,
    appearance_threshold,
    appearance_scale,
    proposal_cap,
    proposal_min_scale,
    proposal_max_scale,
    proposal_stride,
    patch_size,
    workers,
    seed,
);

impl PipelineConfig {
    /// Parse a flat `key = value` file; '#' starts a comment.
    pub fn from_str_checked(text: &str, origin: &Path) -> Result<Self> {
        let mut config = PipelineConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, idx + 1, format!("expected key = value, got {raw:?}")))?;
            set_key(&mut config, key.trim(), value.trim())
                .map_err(|msg| Error::parse(origin, idx + 1, msg))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_checked(&text, path)
    }

    /// Render the effective configuration; reloads to an identical value.
    pub fn to_config_string(&self) -> String {
        render(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_config_string()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.k >= 1, "k must be at least 1")?;
        check(
            (1..=64).contains(&self.potential_regions),
            "potential_regions must be in [1, 64]",
        )?;
        check(self.iterations >= 1, "iterations must be at least 1")?;
        check(
            self.retrieval_top_regions >= 1,
            "retrieval_top_regions must be at least 1",
        )?;
        check(
            self.containment_area_ratio > 0.0 && self.containment_area_ratio <= 1.0,
            "containment_area_ratio must be in (0, 1]",
        )?;
        check(
            self.containment_overlap > 0.0 && self.containment_overlap <= 1.0,
            "containment_overlap must be in (0, 1]",
        )?;
        check(self.proposal_cap >= 1, "proposal_cap must be at least 1")?;
        self.hough().validate()?;
        self.descriptor_params().validate()?;
        self.generator().validate()?;
        Ok(())
    }

    pub fn hough(&self) -> HoughConfig {
        HoughConfig {
            bins_x: self.hough_bins_x,
            bins_y: self.hough_bins_y,
            bins_scale: self.hough_bins_scale,
            range_translation: self.hough_range_translation,
            range_scale: self.hough_range_scale,
            sigma_bins: self.hough_sigma_bins,
            truncation_sigmas: self.hough_truncation_sigmas,
            appearance_threshold: self.appearance_threshold,
            appearance_scale: self.appearance_scale,
        }
    }

    pub fn containment(&self) -> ContainmentRule {
        ContainmentRule {
            area_ratio: self.containment_area_ratio,
            overlap: self.containment_overlap,
        }
    }

    pub fn discovery(&self) -> DiscoveryConfig {
        DiscoveryConfig {
            neighbors: self.k,
            potential_regions: self.potential_regions,
            iterations: self.iterations,
            retrieval_top_regions: self.retrieval_top_regions,
            qualify_overlap: self.containment_overlap,
            containment: self.containment(),
            hough: self.hough(),
        }
    }

    pub fn descriptor_params(&self) -> DescriptorParams {
        DescriptorParams {
            patch_size: self.patch_size,
            ..DescriptorParams::default()
        }
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            min_scale: self.proposal_min_scale,
            max_scale: self.proposal_max_scale,
            stride: self.proposal_stride,
            cap: self.proposal_cap,
            ..GeneratorConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let config = PipelineConfig::default();
        let text = config.to_config_string();
        let reloaded = PipelineConfig::from_str_checked(&text, Path::new("<test>")).unwrap();
        assert_eq!(config, reloaded);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = PipelineConfig::from_str_checked("frobnicate = 3\n", Path::new("<test>"));
        assert!(err.is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let text = "# tuned run\nk = 5  # fewer neighbors\niterations = 2\n";
        let config = PipelineConfig::from_str_checked(text, Path::new("<test>")).unwrap();
        assert_eq!(config.k, 5);
        assert_eq!(config.iterations, 2);
        assert_eq!(config.potential_regions, 5);
    }

    #[test]
    fn out_of_range_values_rejected() {
        assert!(PipelineConfig::from_str_checked("iterations = 0\n", Path::new("<t>")).is_err());
        assert!(PipelineConfig::from_str_checked("containment_overlap = 1.5\n", Path::new("<t>")).is_err());
        assert!(PipelineConfig::from_str_checked("patch_size = 60\n", Path::new("<t>")).is_err());
    }

    #[test]
    fn paper_defaults() {
        let config = PipelineConfig::default();
        assert_eq!(config.k, 10);
        assert_eq!(config.potential_regions, 5);
        assert_eq!(config.iterations, 5);
        assert_eq!(config.retrieval_top_regions, 20);
        assert_eq!(config.containment_area_ratio, 0.5);
        assert_eq!(config.containment_overlap, 0.8);
    }
}
