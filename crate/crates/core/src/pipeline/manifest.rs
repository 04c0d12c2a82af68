//! Scene manifest: which images show which facades, how the facades chain
//! around their blocks, and per-module configuration overrides.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inpaint::{DiffusionInpainter, PatchConfig, TilerConfig};
use crate::matting::MattingConfig;
use crate::rectify::RectifyConfig;
use crate::vanish::VpConfig;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("malformed manifest {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("facade {facade}: file {path} does not exist")]
    MissingFile { facade: String, path: PathBuf },
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Diffusion,
    Patch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacadeEntry {
    pub id: String,
    pub image: PathBuf,
    pub facade_mask: PathBuf,
    #[serde(default)]
    pub occlusion_masks: Vec<PathBuf>,
    /// Facade width along the street, meters.
    pub width_m: f64,
    pub block: String,
    pub neighbor: String,
    #[serde(default)]
    pub same_building: bool,
    /// Walking direction when the block walk starts at this facade.
    #[serde(default)]
    pub cardinal: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub id: String,
    #[serde(default)]
    pub offset: (f64, f64),
    /// Facade the walk starts from; the first listed facade of the block
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub matting: MattingConfig,
    pub vp: VpConfig,
    pub rectify: RectifyConfig,
    pub tiler: TilerConfig,
    pub diffusion: DiffusionInpainter,
    pub patch: PatchConfig,
    pub backend: Backend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub facades: Vec<FacadeEntry>,
    #[serde(default)]
    pub blocks: Vec<BlockEntry>,
    #[serde(default)]
    pub config: PipelineConfig,
}

impl SceneManifest {
    /// Read, resolve relative paths against the manifest's directory and
    /// validate.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ManifestError::Unreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut m: SceneManifest = serde_json::from_str(&text).map_err(|e| ManifestError::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for f in &mut m.facades {
            f.image = base.join(&f.image);
            f.facade_mask = base.join(&f.facade_mask);
            for o in &mut f.occlusion_masks {
                *o = base.join(&*o);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let invalid = |s: String| Err(ManifestError::Invalid(s));
        let mut ids = BTreeSet::new();
        for f in &self.facades {
            if f.id.is_empty() || !ids.insert(f.id.as_str()) {
                return invalid(format!("facade id {:?} is empty or repeated", f.id));
            }
            // Ids name output files.
            if !f.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return invalid(format!("facade id {:?} may only use ASCII letters, digits, '-' and '_'", f.id));
            }
            if !(f.width_m > 0.0 && f.width_m.is_finite()) {
                return invalid(format!("facade {}: width_m must be > 0, got {}", f.id, f.width_m));
            }
            if f.cardinal > 3 {
                return invalid(format!("facade {}: cardinal {} is not in 0..4", f.id, f.cardinal));
            }
            for p in std::iter::once(&f.image)
                .chain(std::iter::once(&f.facade_mask))
                .chain(&f.occlusion_masks)
            {
                if !p.is_file() {
                    return Err(ManifestError::MissingFile {
                        facade: f.id.clone(),
                        path: p.clone(),
                    });
                }
            }
        }
        let mut block_ids = BTreeSet::new();
        for b in &self.blocks {
            if !block_ids.insert(b.id.as_str()) {
                return invalid(format!("block id {:?} is repeated", b.id));
            }
        }
        for (block, members) in self.block_members() {
            if !block_ids.contains(block) {
                return invalid(format!("block {block} is used by facades but not declared"));
            }
            Self::check_cycle(block, &members)?;
        }
        for b in &self.blocks {
            if let Some(s) = &b.start {
                if !self.facades.iter().any(|f| &f.id == s && f.block == b.id) {
                    return invalid(format!("block {}: start facade {s} is not in the block", b.id));
                }
            }
        }
        Ok(())
    }

    /// Facades of each block, in manifest order.
    pub fn block_members(&self) -> BTreeMap<&str, Vec<&FacadeEntry>> {
        let mut out: BTreeMap<&str, Vec<&FacadeEntry>> = BTreeMap::new();
        for f in &self.facades {
            out.entry(f.block.as_str()).or_default().push(f);
        }
        out
    }

    /// The neighbour links of a block must form one cycle through all of
    /// its facades.
    fn check_cycle(block: &str, members: &[&FacadeEntry]) -> Result<(), ManifestError> {
        let by_id: BTreeMap<&str, &FacadeEntry> = members.iter().map(|f| (f.id.as_str(), *f)).collect();
        let start = members[0];
        let mut seen = BTreeSet::new();
        let mut cur = start;
        while seen.insert(cur.id.as_str()) {
            cur = by_id.get(cur.neighbor.as_str()).copied().ok_or_else(|| {
                ManifestError::Invalid(format!(
                    "facade {}: neighbor {} is not in block {block}",
                    cur.id, cur.neighbor
                ))
            })?;
        }
        if cur.id != start.id || seen.len() != members.len() {
            return Err(ManifestError::Invalid(format!(
                "block {block}: neighbor links do not form one cycle through all {} facades",
                members.len()
            )));
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text)
    }
}
