use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crowdtest::noise::NoiseParams;
use crowdtest::render::{RenderStyle, AABABB_SEED};
use crowdtest::sim::{ModelConfig, SfmParams};
use crowdtest::trajectory::{IngestConfig, DEFAULT_MAX_GAP};

use crate::CliError;

/// One file configuring every stage; command-line flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    /// `"forum"` or a path to an arena TOML file.
    pub arena: ArenaSpec,
    pub ingest: IngestSection,
    pub extract: ExtractSection,
    pub calibrate: CalibrateSection,
    pub simulate: SimulateSection,
    pub noise: NoiseParams,
    pub render: RenderStyle,
    pub trial: TrialSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArenaSpec(pub String);

impl Default for ArenaSpec {
    fn default() -> Self {
        ArenaSpec("forum".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub max_gap: usize,
    pub scale: IngestConfig,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            max_gap: DEFAULT_MAX_GAP,
            scale: IngestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub duration: f64,
    pub count: usize,
    pub min_population: usize,
    pub max_population: usize,
    pub seed: u64,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection {
            duration: 60.0,
            count: 6,
            min_population: 104,
            max_population: 194,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub reference_speed: f64,
    pub portal_threshold: f64,
    pub bin_width: f64,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            reference_speed: crowdtest::calibration::REFERENCE_WALKING_SPEED,
            portal_threshold: crowdtest::calibration::PORTAL_ASSIGNMENT_THRESHOLD,
            bin_width: crowdtest::calibration::SPEED_BIN_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub seed: u64,
    pub output_rate: f64,
    pub resample_entries: Option<u64>,
    pub params: SfmParams,
    pub model: ModelConfig,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            seed: 1,
            output_rate: 9.0,
            resample_entries: None,
            params: SfmParams::default(),
            model: ModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSection {
    pub seed: u64,
    pub composite: bool,
    /// Scale each real clip's playback by its mean walking speed.
    pub scale_playback: bool,
    /// `[real, simulated]` file pairs, in presentation order.
    pub pairs: Vec<[PathBuf; 2]>,
}

impl Default for TrialSection {
    fn default() -> Self {
        TrialSection {
            seed: AABABB_SEED,
            composite: false,
            scale_playback: true,
            pairs: Vec::new(),
        }
    }
}

/// A loaded config plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn load(path: Option<&Path>) -> Result<Loaded, CliError> {
        let Some(path) = path else {
            return Ok(Loaded {
                config: PipelineConfig::default(),
                base: PathBuf::from("."),
            });
        };
        let text = std::fs::read_to_string(path).map_err(|e| crowdtest::Error::io(path, e))?;
        let config: PipelineConfig = toml::from_str(&text).map_err(|e| crowdtest::Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let loaded = Loaded { config, base };
        loaded.check_paths()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn check_paths(&self) -> Result<(), CliError> {
        let mut referenced: Vec<PathBuf> = self.config.paths.dataset.iter().cloned().collect();
        referenced.extend(self.config.trial.pairs.iter().flatten().cloned());
        if self.config.arena.0 != "forum" {
            referenced.push(PathBuf::from(&self.config.arena.0));
        }
        for p in referenced {
            let full = self.resolve(&p);
            if !full.exists() {
                return Err(CliError::Data(crowdtest::Error::invalid(format!(
                    "config refers to missing file {}",
                    full.display()
                ))));
            }
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration, after flag overrides.
    pub fn hash(&self) -> String {
        let text = toml::to_string(&self.config).expect("config serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn arena(&self) -> Result<crowdtest::arena::ArenaGeometry, CliError> {
        Ok(crowdtest::sim::load_arena(&self.config.arena.0, &self.base)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.trial.seed, AABABB_SEED);
        assert_eq!(c.arena.0, "forum");
    }

    #[test]
    fn sections_override_and_round_trip() {
        let c: PipelineConfig = toml::from_str(
            "[simulate]\nseed = 9\n[noise]\nflick_probability = 0.2\n[render]\nwidth = 32\n[ingest.scale]\nscale_x = 0.02\n",
        )
        .unwrap();
        assert_eq!(c.simulate.seed, 9);
        assert_eq!(c.noise.flick_probability, 0.2);
        assert_eq!(c.render.width, 32);
        assert_eq!(c.ingest.scale.scale_x, 0.02);
        let back: PipelineConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("[simulate]\nsed = 1\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Loaded {
            config: PipelineConfig::default(),
            base: ".".into(),
        };
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.config.simulate.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
