//! Run configuration: model sizes, training hyperparameters, dataset and
//! adapter wiring. A config file is one JSON document; command-line flags
//! override file values; presets fill in the per-corpus layer sizes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::SwrmError;
use crate::fusion::SequencePooling;
use crate::util::sha256_hex;

/// Layer widths of the refinement and fusion stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    /// Token embedding width. Must match the live adapter's width; a
    /// mismatch is rejected when the first utterance is prepared.
    pub text_embedding_dim: usize,
    /// Contextual text-state width in the refinement stage (even).
    pub text_state_dim: usize,
    pub visual_state_dim: usize,
    pub acoustic_state_dim: usize,
    pub bimodal_state_dim: usize,
    /// Fusion-stage summary widths.
    pub fusion_text_dim: usize,
    pub fusion_visual_dim: usize,
    pub fusion_acoustic_dim: usize,
    /// Width of the joint fused representation.
    pub fusion_dim: usize,
}

/// Per-corpus hyperparameter presets. The batch size rides along because
/// the corpora were tuned with different ones.
#[derive(Clone, Copy, Debug)]
pub struct Preset {
    pub dims: ModelDims,
    pub batch_size: usize,
}

pub fn preset(name: &str) -> Option<Preset> {
    let speechbrain = Preset {
        dims: ModelDims {
            text_embedding_dim: 768,
            text_state_dim: 768,
            visual_state_dim: 16,
            acoustic_state_dim: 32,
            bimodal_state_dim: 48,
            fusion_text_dim: 32,
            fusion_visual_dim: 32,
            fusion_acoustic_dim: 16,
            fusion_dim: 128,
        },
        batch_size: 64,
    };
    match name {
        "mosi-speechbrain" => Some(speechbrain),
        "mosi-ibm" => Some(Preset {
            dims: ModelDims {
                text_embedding_dim: 768,
                text_state_dim: 768,
                visual_state_dim: 32,
                acoustic_state_dim: 32,
                bimodal_state_dim: 64,
                fusion_text_dim: 64,
                fusion_visual_dim: 16,
                fusion_acoustic_dim: 32,
                fusion_dim: 64,
            },
            batch_size: 128,
        }),
        "mosi-iflytek" => Some(speechbrain),
        _ => None,
    }
}

pub const PRESET_NAMES: [&str; 3] = ["mosi-speechbrain", "mosi-ibm", "mosi-iflytek"];

/// Which parts of the refinement pipeline to switch off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationFlags {
    /// Skip position detection; blend the mask embedding into every token.
    #[serde(default)]
    pub no_position: bool,
    /// Skip candidate attention; blend the bare mask embedding.
    #[serde(default)]
    pub no_attention: bool,
    /// Feed zeros instead of acoustic/visual features to the
    /// refinement-stage encoders (fusion keeps the real features).
    #[serde(default)]
    pub no_multimodal: bool,
}

/// One pipeline stage named on the command line via `--ablate`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationKind {
    Position,
    Attention,
    Multimodal,
}

impl std::str::FromStr for AblationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "position" => Ok(AblationKind::Position),
            "attention" => Ok(AblationKind::Attention),
            "multimodal" => Ok(AblationKind::Multimodal),
            other => Err(format!(
                "unknown ablation {other:?}; expected position, attention, or multimodal"
            )),
        }
    }
}

pub fn ablation_flags(kinds: &[AblationKind]) -> AblationFlags {
    AblationFlags {
        no_position: kinds.contains(&AblationKind::Position),
        no_attention: kinds.contains(&AblationKind::Attention),
        no_multimodal: kinds.contains(&AblationKind::Multimodal),
    }
}

/// Which masked-LM adapter backs detection and embeddings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdapterKind {
    /// Deterministic synthetic adapter, optionally shaped by a config file.
    #[default]
    Mock,
    /// Precomputed-cache adapter over real masked-LM outputs.
    Real,
}

impl std::str::FromStr for AdapterKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(AdapterKind::Mock),
            "real" => Ok(AdapterKind::Real),
            other => Err(format!("unknown adapter {other:?}; expected real or mock")),
        }
    }
}

/// Training hyperparameters as they appear in the config file. Absent
/// fields take the documented defaults at resolution time.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub optimizer: Option<String>,
    pub learning_rate: Option<f64>,
    /// Defaults to the preset's batch size.
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub unimodal_weights: Option<[f64; 3]>,
}

/// The config file as written by the user.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train_data: Option<PathBuf>,
    pub valid_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    /// Lexicon files, later ones overriding earlier; empty means the
    /// built-in lexicon.
    #[serde(default)]
    pub lexicons: Vec<PathBuf>,
    #[serde(default)]
    pub adapter: AdapterKind,
    pub mock_config: Option<PathBuf>,
    /// Embedding width of the synthetic mock adapter when no mock config
    /// file is given.
    pub mock_dim: Option<usize>,
    /// Candidates requested per masked position.
    pub k: Option<usize>,
    pub preset: Option<String>,
    /// Explicit layer sizes; override the preset when present.
    pub dims: Option<ModelDims>,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub ablate: Vec<AblationKind>,
    #[serde(default)]
    pub pooling: SequencePooling,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, SwrmError> {
        let text = std::fs::read_to_string(path).map_err(|e| SwrmError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            SwrmError::Config(format!("cannot parse config {}: {e}", path.display()))
        })
    }

    /// Fill every default, giving a self-contained description of the run.
    pub fn resolve(&self) -> Result<ResolvedConfig, SwrmError> {
        let preset = match (&self.preset, &self.dims) {
            (Some(name), _) => Some(preset(name).ok_or_else(|| {
                SwrmError::Config(format!(
                    "unknown preset {name:?}; expected one of {PRESET_NAMES:?}"
                ))
            })?),
            (None, Some(_)) => None,
            (None, None) => Some(preset("mosi-speechbrain").expect("default preset exists")),
        };
        let dims = self
            .dims
            .or(preset.map(|p| p.dims))
            .expect("either explicit dims or a preset");
        let train = TrainResolved {
            optimizer: self
                .train
                .optimizer
                .clone()
                .unwrap_or_else(|| "adam".to_string()),
            learning_rate: self.train.learning_rate.unwrap_or(5e-5),
            batch_size: self
                .train
                .batch_size
                .or(preset.map(|p| p.batch_size))
                .unwrap_or(64),
            epochs: self.train.epochs.unwrap_or(50),
            patience: self.train.patience.unwrap_or(8),
            seeds: self
                .train
                .seeds
                .clone()
                .unwrap_or_else(|| vec![1111, 1112, 1113, 1114, 1115]),
            unimodal_weights: self.train.unimodal_weights.unwrap_or([1.0, 1.0, 1.0]),
        };
        let resolved = ResolvedConfig {
            train_data: self.train_data.clone(),
            valid_data: self.valid_data.clone(),
            test_data: self.test_data.clone(),
            lexicons: self.lexicons.clone(),
            adapter: self.adapter,
            mock_config: self.mock_config.clone(),
            mock_dim: self.mock_dim.unwrap_or(16),
            k: self.k.unwrap_or(50),
            dims,
            train,
            ablate: ablation_flags(&self.ablate),
            pooling: self.pooling,
            checkpoint: self.checkpoint.clone(),
            out: self.out.clone(),
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

/// Training hyperparameters with every default applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainResolved {
    pub optimizer: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub unimodal_weights: [f64; 3],
}

/// A fully resolved run description: what gets written next to artifacts
/// and re-loaded for reproduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub train_data: Option<PathBuf>,
    pub valid_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub lexicons: Vec<PathBuf>,
    pub adapter: AdapterKind,
    pub mock_config: Option<PathBuf>,
    pub mock_dim: usize,
    pub k: usize,
    pub dims: ModelDims,
    pub train: TrainResolved,
    pub ablate: AblationFlags,
    pub pooling: SequencePooling,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<(), SwrmError> {
        if self.train.optimizer != "adam" {
            return Err(SwrmError::Config(format!(
                "unsupported optimizer {:?}; only \"adam\" is implemented",
                self.train.optimizer
            )));
        }
        if self.train.learning_rate <= 0.0 || self.train.learning_rate.is_nan() {
            return Err(SwrmError::Config(format!(
                "learning_rate must be > 0, got {}",
                self.train.learning_rate
            )));
        }
        if self.train.batch_size == 0 {
            return Err(SwrmError::Config("batch_size must be ≥ 1".into()));
        }
        if self.train.epochs == 0 {
            return Err(SwrmError::Config("epochs must be ≥ 1".into()));
        }
        if self.train.seeds.is_empty() {
            return Err(SwrmError::Config("seeds must not be empty".into()));
        }
        if self.train.unimodal_weights.iter().any(|&w| w < 0.0) {
            return Err(SwrmError::Config(
                "unimodal_weights must be non-negative".into(),
            ));
        }
        if self.k == 0 {
            return Err(SwrmError::Config("k must be ≥ 1".into()));
        }
        if self.mock_dim == 0 {
            return Err(SwrmError::Config("mock_dim must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Hash of everything that shapes the model and its training — layer
    /// sizes, k, ablations, pooling, optimizer settings — but not paths,
    /// seeds, or output locations. Checkpoints record it so evaluation can
    /// refuse mismatched configs.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Fingerprint<'a> {
            k: usize,
            dims: &'a ModelDims,
            ablate: &'a AblationFlags,
            pooling: SequencePooling,
            optimizer: &'a str,
            learning_rate: f64,
            batch_size: usize,
            epochs: usize,
            patience: usize,
            unimodal_weights: [f64; 3],
        }
        let fp = Fingerprint {
            k: self.k,
            dims: &self.dims,
            ablate: &self.ablate,
            pooling: self.pooling,
            optimizer: &self.train.optimizer,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            patience: self.train.patience,
            unimodal_weights: self.train.unimodal_weights,
        };
        let json = serde_json::to_string(&fp).expect("fingerprint serializes");
        sha256_hex(&json)
    }

    pub fn write_next_to_artifacts(&self, dir: &Path) -> Result<PathBuf, SwrmError> {
        let path = dir.join("effective-config.json");
        let json = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(&path, json).map_err(|e| SwrmError::io(&path, e))?;
        Ok(path)
    }
}
