use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::UndefinedPolicy;
use crate::raster::BandTag;
use crate::sampling::{validate_fractions, PatchIndex, Role};
use crate::synth::SceneSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Synthetic run shipped with the crate (512 x 512 habitat scene).
pub const BUNDLED_SYNTHETIC_CONFIG: &str = include_str!("../../assets/synthetic_run.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    PostClassification,
    DirectChange,
    Ablation,
    Synthetic,
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::PostClassification => "post_classification",
            Paradigm::DirectChange => "direct_change",
            Paradigm::Ablation => "ablation",
            Paradigm::Synthetic => "synthetic",
        })
    }
}

/// Raster inputs by semantic role. Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_t1: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_t2: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions_t1: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions_t2: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change_map: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_change_map: Option<PathBuf>,
}

impl Inputs {
    pub fn entries(&self) -> Vec<(&'static str, &Path)> {
        [
            ("reference_t1", &self.reference_t1),
            ("reference_t2", &self.reference_t2),
            ("predictions_t1", &self.predictions_t1),
            ("predictions_t2", &self.predictions_t2),
            ("change_map", &self.change_map),
            ("truth_change_map", &self.truth_change_map),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|p| (k, p)))
        .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeMapKind {
    Binary,
    #[default]
    Multiclass,
}

/// Scheme, category, rule and remap tables. Missing entries fall back to
/// the bundled habitat taxonomy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<PathBuf>,
    /// Applied to reference rasters before comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remap: Option<PathBuf>,
    /// `error`, `pass-through` or `fixed:N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remap_default: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluateRole {
    Train,
    Val,
    #[default]
    Test,
    All,
}

impl EvaluateRole {
    pub fn role(self) -> Option<Role> {
        match self {
            EvaluateRole::Train => Some(Role::Train),
            EvaluateRole::Val => Some(Role::Val),
            EvaluateRole::Test => Some(Role::Test),
            EvaluateRole::All => None,
        }
    }
}

fn default_block_size() -> usize {
    512
}
fn default_split_seed() -> u64 {
    42
}
fn default_fractions() -> [f64; 3] {
    [0.7, 0.15, 0.15]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default = "default_split_seed")]
    pub seed: u64,
    #[serde(default = "default_fractions")]
    pub fractions: [f64; 3],
    #[serde(default)]
    pub evaluate_role: EvaluateRole,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            block_size: default_block_size(),
            seed: default_split_seed(),
            fractions: default_fractions(),
            evaluate_role: EvaluateRole::default(),
        }
    }
}

fn default_patch() -> usize {
    256
}
fn default_overlap() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TilingConfig {
    #[serde(default = "default_patch")]
    pub patch_size: usize,
    #[serde(default = "default_overlap")]
    pub overlap: usize,
}

impl Default for TilingConfig {
    fn default() -> Self {
        Self {
            patch_size: default_patch(),
            overlap: default_overlap(),
        }
    }
}

/// One rung of the modality ablation: the stack a model was given and
/// the t2 prediction it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderLevel {
    pub name: String,
    #[serde(default)]
    pub modalities: Vec<BandTag>,
    pub predictions_t2: PathBuf,
}

fn default_noise() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub scene: SceneSpec,
    /// Label noise of the perturbed scenarios.
    #[serde(default = "default_noise")]
    pub noise_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub paradigm: Paradigm,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub change_map_kind: ChangeMapKind,
    #[serde(default)]
    pub taxonomy: TaxonomyConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub tiling: TilingConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modality_ladder: Vec<LadderLevel>,
    #[serde(default)]
    pub undefined_policy: UndefinedPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn bundled_synthetic() -> Self {
        Self::from_json(BUNDLED_SYNTHETIC_CONFIG, Path::new(".")).expect("bundled config is valid")
    }

    /// Replaces every seed in the config (split and synthetic scene).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split.seed = seed;
        if let Some(s) = &mut self.synthetic {
            s.scene.seed = seed;
        }
        self
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(self.output_dir.as_deref().unwrap_or(Path::new("out")))
    }

    /// Canonical JSON of the effective config, used for manifest hashing.
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        validate_fractions(self.split.fractions)?;
        if self.split.block_size == 0 {
            return bad("split.block_size must be positive".into());
        }
        // Dimensions large enough for any patch; only parameters are checked here.
        PatchIndex::new(
            self.tiling.patch_size,
            self.tiling.patch_size,
            self.tiling.patch_size,
            self.tiling.overlap,
        )?;
        let i = &self.inputs;
        let need = |v: &Option<PathBuf>, name: &str| match v {
            Some(_) => Ok(()),
            None => Err(Error::MissingInput(format!(
                "{} run needs inputs.{name}",
                self.paradigm
            ))),
        };
        match self.paradigm {
            Paradigm::PostClassification => {
                need(&i.reference_t1, "reference_t1")?;
                need(&i.reference_t2, "reference_t2")?;
                need(&i.predictions_t2, "predictions_t2")?;
            }
            Paradigm::DirectChange => {
                need(&i.change_map, "change_map")?;
                if i.truth_change_map.is_none() {
                    need(&i.reference_t1, "reference_t1 (or truth_change_map)")?;
                    need(&i.reference_t2, "reference_t2 (or truth_change_map)")?;
                }
            }
            Paradigm::Ablation => {
                if self.modality_ladder.is_empty() {
                    return bad("ablation requires ≥1 level".into());
                }
                need(&i.reference_t1, "reference_t1")?;
                need(&i.reference_t2, "reference_t2")?;
                let mut names: Vec<&str> = self.modality_ladder.iter().map(|l| l.name.as_str()).collect();
                names.sort_unstable();
                if names.windows(2).any(|w| w[0] == w[1]) {
                    return bad("modality_ladder level names must be unique".into());
                }
                if names.iter().any(|n| !valid_name(n)) {
                    return bad("level names may only use letters, digits, '-' and '_'".into());
                }
            }
            Paradigm::Synthetic => match &self.synthetic {
                None => return bad("synthetic run needs a `synthetic` section".into()),
                Some(s) => {
                    s.scene.validate()?;
                    if !(0.0..=1.0).contains(&s.noise_rate) {
                        return bad(format!("noise_rate {} outside [0, 1]", s.noise_rate));
                    }
                }
            },
        }
        Ok(())
    }

    /// Errors with `MissingInput` for the first referenced file that does
    /// not exist.
    pub fn check_inputs_exist(&self) -> Result<()> {
        let t = &self.taxonomy;
        let tables = [&t.scheme, &t.categories, &t.rules, &t.remap];
        let files = self
            .inputs
            .entries()
            .into_iter()
            .map(|(_, p)| p)
            .chain(tables.into_iter().filter_map(|p| p.as_deref()))
            .chain(self.modality_ladder.iter().map(|l| l.predictions_t2.as_path()));
        for p in files {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::MissingInput(full.display().to_string()));
            }
        }
        Ok(())
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_parses() {
        let cfg = ExperimentConfig::bundled_synthetic();
        assert_eq!(cfg.paradigm, Paradigm::Synthetic);
        assert_eq!(cfg.with_seed(9).synthetic.unwrap().scene.seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"schema_version":1,"paradigm":"direct_change","inputs":{"change_map":"a.tif","truth_change_map":"b.tif"},"extra":1}"#,
            Path::new("."),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn schema_version_and_roles() {
        let text = r#"{"schema_version":2,"paradigm":"direct_change"}"#;
        assert!(ExperimentConfig::from_json(text, Path::new(".")).is_err());
        let text = r#"{"schema_version":1,"paradigm":"direct_change","inputs":{"change_map":"a","truth_change_map":"b"},"split":{"evaluate_role":"everything"}}"#;
        assert!(ExperimentConfig::from_json(text, Path::new(".")).is_err());
    }

    #[test]
    fn empty_ladder_is_rejected() {
        let text = r#"{"schema_version":1,"paradigm":"ablation","inputs":{"reference_t1":"a","reference_t2":"b"}}"#;
        let err = ExperimentConfig::from_json(text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("ablation requires ≥1 level"));
    }

    #[test]
    fn missing_files_are_reported() {
        let text = r#"{"schema_version":1,"paradigm":"direct_change","inputs":{"change_map":"nope.tif","truth_change_map":"b.tif"}}"#;
        let cfg = ExperimentConfig::from_json(text, Path::new("/nonexistent")).unwrap();
        assert!(matches!(cfg.check_inputs_exist(), Err(Error::MissingInput(_))));
    }
}
