//! Settings resolution: command-line flags, then the TOML config file, then
//! built-in defaults.

use std::path::Path;

use serde::Deserialize;

use nirvana::model::ModelConfig;
use nirvana::pipeline::EncodeConfig;

use crate::args::{Preset, TrainFlags};
use crate::fail::{CliResult, Failure};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub preset: Option<Preset>,
    pub patch_size: Option<usize>,
    pub group_size: Option<usize>,
    pub iters_first: Option<usize>,
    pub iters: Option<usize>,
    pub lambda_entropy: Option<f64>,
    pub lr: Option<f64>,
    pub chunks: Option<usize>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Failure::usage(format!("{}: {}", path.display(), e.message())))
    }
}

/// Fully resolved training settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub preset: Preset,
    /// `None` keeps the preset's patch size.
    pub patch_size: Option<usize>,
    pub group_size: Option<usize>,
    pub iters_first: usize,
    pub iters: usize,
    pub lambda_entropy: f64,
    pub lr: f64,
    pub chunks: usize,
    pub workers: usize,
    pub seed: u64,
}

impl Settings {
    /// Encoder defaults: the full-size model with its published schedule.
    pub fn full() -> Self {
        let d = EncodeConfig::default();
        Self {
            preset: Preset::Full,
            patch_size: None,
            group_size: None,
            iters_first: d.iters_first,
            iters: d.iters_rest,
            lambda_entropy: d.lambda,
            lr: d.lr.latent,
            chunks: d.chunks,
            workers: 1,
            seed: d.seed,
        }
    }

    /// Benchmark defaults: the tiny model with a short first-group schedule.
    pub fn bench() -> Self {
        Self {
            preset: Preset::Tiny,
            iters_first: 2000,
            ..Self::full()
        }
    }

    /// Applies `flags` over `file` over `self`.
    pub fn resolve(mut self, flags: &TrainFlags, file: &FileConfig) -> Self {
        macro_rules! pick {
            ($field:ident) => {
                if let Some(v) = flags.$field.or(file.$field) {
                    self.$field = v;
                }
            };
            (opt $field:ident) => {
                if let Some(v) = flags.$field.or(file.$field) {
                    self.$field = Some(v);
                }
            };
        }
        pick!(preset);
        pick!(opt patch_size);
        pick!(opt group_size);
        pick!(iters_first);
        pick!(iters);
        pick!(lambda_entropy);
        pick!(lr);
        pick!(chunks);
        pick!(workers);
        pick!(seed);
        self
    }

    /// Reads the config file named in `flags`, if any, and resolves.
    pub fn from_flags(base: Self, flags: &TrainFlags) -> CliResult<Self> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(base.resolve(flags, &file))
    }

    pub fn model(&self) -> CliResult<ModelConfig> {
        let mut m = match self.preset {
            Preset::Full => ModelConfig::default(),
            Preset::Tiny => ModelConfig::tiny(),
        };
        if let Some(p) = self.patch_size {
            if p != m.patch_h || p != m.patch_w {
                m = m.with_patch(p).map_err(Failure::from)?;
            }
        }
        if let Some(g) = self.group_size {
            m.group_size = g;
        }
        m.validate().map_err(Failure::from)?;
        Ok(m)
    }

    /// Encoder configuration, checked against everything known before the video is read.
    pub fn encode_config(&self) -> CliResult<EncodeConfig> {
        if self.workers == 0 {
            return Err(Failure::usage("--workers must be at least 1"));
        }
        let mut c = EncodeConfig {
            model: self.model()?,
            iters_first: self.iters_first,
            iters_rest: self.iters,
            lambda: self.lambda_entropy,
            chunks: self.chunks,
            seed: self.seed,
            ..EncodeConfig::default()
        };
        c.lr.latent = self.lr;
        c.lr.head = self.lr;
        // The group count is unknown here; chunk bounds are rechecked once it is.
        c.validate(usize::MAX).map_err(Failure::from)?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_defaults() {
        let s = Settings::full();
        let c = s.encode_config().unwrap();
        assert_eq!((c.model.patch_h, c.model.patch_w, c.model.group_size), (32, 32, 3));
        assert_eq!((c.iters_first, c.iters_rest), (16000, 2000));
        assert_eq!(c.lr.latent, 5e-4);
        assert_eq!(c.lambda, 1e-4);
        assert_eq!(c.model.num_siren_layers, 5);
        assert_eq!(c.model.width, 512);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig = toml::from_str("iters = 7\nseed = 3\nlambda-entropy = 0.5").unwrap();
        let flags = TrainFlags {
            seed: Some(9),
            ..Default::default()
        };
        let s = Settings::full().resolve(&flags, &file);
        assert_eq!(s.seed, 9);
        assert_eq!(s.iters, 7);
        assert_eq!(s.lambda_entropy, 0.5);
        assert_eq!(s.iters_first, 16000);
    }

    #[test]
    fn unknown_file_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("itres = 7").is_err());
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let mut s = Settings::full();
        s.iters = 0;
        assert_eq!(s.encode_config().unwrap_err().code, crate::fail::USAGE);
        let mut s = Settings::full();
        s.lambda_entropy = -1.0;
        assert_eq!(s.encode_config().unwrap_err().code, crate::fail::USAGE);
        let mut s = Settings::full();
        s.patch_size = Some(12);
        assert_eq!(s.encode_config().unwrap_err().code, crate::fail::USAGE);
    }

    #[test]
    fn patch_override_keeps_preset_family() {
        let s = Settings {
            patch_size: Some(8),
            ..Settings::bench()
        };
        let m = s.model().unwrap();
        assert_eq!((m.patch_h, m.width), (8, ModelConfig::tiny().width));
    }
}
