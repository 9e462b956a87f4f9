//! `kgrag.toml`, the settings file at the root of a data directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cache::CacheConfig;
use crate::corpus::CorpusConfig;
use crate::cost::BASELINE_PROVIDER;
use crate::embedding::EmbeddingSettings;
use crate::error::{Error, Result};
use crate::kg::DEFAULT_NODE_CONTEXT_CAP;
use crate::llm::LlmSettings;
use crate::retrieval::RetrievalParams;

pub const SETTINGS_FILE: &str = "kgrag.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionSettings {
    pub llm: LlmSettings,
    /// Custom prompt with a `{text}` slot.
    pub template: Option<String>,
}

impl Default for ExtractionSettings {
    fn default() -> Self {
        Self {
            llm: LlmSettings::Canned {
                dir: PathBuf::from("canned"),
            },
            template: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSettings {
    pub node_context_cap: usize,
    pub include_pending: bool,
}

impl Default for GraphSettings {
    fn default() -> Self {
        Self {
            node_context_cap: DEFAULT_NODE_CONTEXT_CAP,
            include_pending: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheSettings {
    #[serde(flatten)]
    pub config: CacheConfig,
    pub embedding: EmbeddingSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub corpus: CorpusConfig,
    pub embedding: EmbeddingSettings,
    pub llm: LlmSettings,
    /// Row of the cost table used for per-answer cost estimates.
    pub cost_label: Option<String>,
    pub extraction: ExtractionSettings,
    pub retrieval: RetrievalParams,
    pub graph: GraphSettings,
    pub cache: CacheSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            embedding: EmbeddingSettings::default(),
            llm: LlmSettings::default(),
            cost_label: Some(BASELINE_PROVIDER.to_string()),
            extraction: ExtractionSettings::default(),
            retrieval: RetrievalParams::default(),
            graph: GraphSettings::default(),
            cache: CacheSettings::default(),
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.retrieval.validate()?;
        self.cache.config.validate()?;
        if self.graph.node_context_cap == 0 {
            return Err(Error::Config("graph.node_context_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Reads `<data_dir>/kgrag.toml`, or defaults when the file is absent.
    pub fn load(data_dir: &Path) -> Result<Self> {
        let path = data_dir.join(SETTINGS_FILE);
        let settings: Settings = if path.exists() {
            toml::from_str(&fs::read_to_string(&path)?)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            Settings::default()
        };
        settings.validate()?;
        Ok(settings)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("settings serialize")
    }
}
