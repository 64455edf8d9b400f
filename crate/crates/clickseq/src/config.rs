//! Run configuration: one structured TOML file covering every stage of a
//! run (world synthesis, split, model, training, evaluation). Every field
//! has a default, so an empty file is a valid config; CLI flags override
//! file values. Each run serializes its effective config into the output
//! directory, and the config digest is embedded in checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::LrTrainConfig;
use crate::fan_out_seed;
use crate::model::ModelConfig;
use crate::nn::checkpoint;
use crate::synth::WorldConfig;
use crate::train::{SplitMode, SplitSpec, TrainConfig};
use crate::ClickseqError;

/// Evaluation-stage settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Hyper-parameters for the pairwise baselines (LR epochs/rate, shared
    /// positive-class weight for LR and NB).
    pub lr: LrTrainConfig,
    /// Also write one line per test event for external plotting.
    pub dump_events: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { lr: LrTrainConfig::default(), dump_events: false }
    }
}

/// The whole-run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed; all per-stage seeds fan out from it.
    pub seed: u64,
    pub world: WorldConfig,
    pub split: SplitSpec,
    pub model: ModelConfig,
    /// Training loop settings. Its embedded model section is ignored in
    /// favour of `[model]`; see [`RunConfig::train_config`].
    pub training: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut config = RunConfig {
            seed: 0,
            world: WorldConfig::default(),
            // baselines need per-user history at test time, so runs split by
            // time within each user rather than holding out whole users
            split: SplitSpec { mode: SplitMode::ByTime, ..SplitSpec::default() },
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            eval: EvalConfig::default(),
        };
        config.set_seed(0);
        config
    }
}

impl RunConfig {
    /// Parses a TOML string; missing fields take defaults.
    pub fn from_toml_str(s: &str) -> Result<RunConfig, ClickseqError> {
        toml::from_str(s).map_err(|e| ClickseqError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, ClickseqError> {
        RunConfig::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ClickseqError> {
        toml::to_string_pretty(self).map_err(|e| ClickseqError::Config(e.to_string()))
    }

    /// Writes the effective config into a run directory.
    pub fn save(&self, dir: &Path) -> Result<(), ClickseqError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), self.to_toml_string()?)?;
        Ok(())
    }

    /// Sets the master seed and fans out every per-stage seed from it.
    /// Stage seeds are masked to 63 bits so the config stays representable
    /// in TOML (whose integers are signed).
    pub fn set_seed(&mut self, seed: u64) {
        let fan = |label| fan_out_seed(seed, label, 0) & (i64::MAX as u64);
        self.seed = seed;
        self.world.seed = fan("world");
        self.split.seed = fan("split");
        self.training.seed = fan("train");
        self.eval.lr.seed = fan("baseline");
    }

    /// The training config with the `[model]` section spliced in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { model: self.model.clone(), ..self.training.clone() }
    }

    pub fn validate(&self) -> Result<(), ClickseqError> {
        self.world.validate()?;
        self.split.validate()?;
        self.model.validate()
    }

    /// Stable digest of the full config, embedded in checkpoints so a
    /// checkpoint can refuse to load under a mismatched config.
    pub fn digest(&self) -> Result<u64, ClickseqError> {
        Ok(checkpoint::config_digest(&serde_json::to_string(self)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_all_defaults() {
        let parsed = RunConfig::from_toml_str("").unwrap();
        let default = RunConfig::default();
        assert_eq!(parsed.digest().unwrap(), default.digest().unwrap());
        assert_eq!(parsed.model.d, 128);
        assert_eq!(parsed.training.batch_size, default.training.batch_size);
        assert!(matches!(parsed.split.mode, SplitMode::ByTime));
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let parsed = RunConfig::from_toml_str(
            "seed = 7\n[model]\nd = 32\nheads = 2\n[world]\nn_users = 4\n",
        )
        .unwrap();
        assert_eq!(parsed.seed, 7);
        assert_eq!(parsed.model.d, 32);
        assert_eq!(parsed.model.pointer_layers, 2); // untouched default
        assert_eq!(parsed.world.n_users, 4);
        assert_eq!(parsed.world.n_apps, WorldConfig::default().n_apps);
    }

    #[test]
    fn round_trip_preserves_digest() {
        let mut config = RunConfig::default();
        config.set_seed(99);
        config.model.d = 16;
        let text = config.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.digest().unwrap(), config.digest().unwrap());
    }

    #[test]
    fn seed_fans_out_to_distinct_stage_seeds() {
        let mut config = RunConfig::default();
        config.set_seed(5);
        let seeds = [config.world.seed, config.split.seed, config.training.seed, config.eval.lr.seed];
        for (i, a) in seeds.iter().enumerate() {
            for b in &seeds[i + 1..] {
                assert_ne!(a, b);
            }
        }
        let mut again = RunConfig::default();
        again.set_seed(5);
        assert_eq!(again.world.seed, config.world.seed);
    }

    #[test]
    fn digest_tracks_any_field_change() {
        let base = RunConfig::default();
        let mut changed = RunConfig::default();
        changed.training.batch_size += 1;
        assert_ne!(base.digest().unwrap(), changed.digest().unwrap());
    }

    #[test]
    fn bad_toml_is_a_config_error() {
        assert!(matches!(
            RunConfig::from_toml_str("model = 3"),
            Err(ClickseqError::Config(_))
        ));
    }

    #[test]
    fn train_config_uses_the_model_section() {
        let parsed = RunConfig::from_toml_str("[model]\nd = 64\n[training]\nbatch_size = 9\n").unwrap();
        let tc = parsed.train_config();
        assert_eq!(tc.model.d, 64);
        assert_eq!(tc.batch_size, 9);
    }
}
