use std::path::Path;

use anyhow::{bail, Context, Result};
use miatt_forge::uttl::TrainConfig;
use miatt_forge::{GenParams, LafParams, SceneParams};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Conflicts injected into the generated targets, for negative fixtures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictInjection {
    pub n_flips: usize,
    pub seed: u64,
}

/// Everything needed to regenerate a run. Keys serialize in declaration
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub created_at: String,
    pub scene_params: SceneParams,
    pub gen_params: GenParams,
    pub laf_params: LafParams,
    pub train_config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict_injection: Option<ConflictInjection>,
}

impl RunManifest {
    pub fn new(scene_params: SceneParams, gen_params: GenParams) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            created_at: timestamp(),
            scene_params,
            gen_params,
            laf_params: LafParams::default(),
            train_config: TrainConfig::default(),
            conflict_injection: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            bail!("unsupported manifest format_version {} (expected {FORMAT_VERSION})", self.format_version);
        }
        self.scene_params.validate()?;
        self.gen_params.validate()?;
        self.laf_params.validate()?;
        self.train_config.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        manifest.validate().with_context(|| format!("validating {}", path.display()))?;
        Ok(manifest)
    }
}

/// UTC RFC 3339 time, taken from `SOURCE_DATE_EPOCH` when set so repeated
/// runs can produce identical manifests.
pub fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(chrono::Utc::now);
    now.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
