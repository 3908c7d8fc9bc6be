//! Checkpoints on disk carry their own dimensions, vocabularies and
//! config as JSON metadata, so a model can be rebuilt from the file alone.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bimsmt::context::{ContextConfig, ContextModel};
use bimsmt::corpus::Direction;
use bimsmt::nmt::{BaseNmt, NmtDims, RnnLms, TrainReport, Vocabs};
use bimsmt::rng::component_rng;
use bimsmt::tensor::{read_checkpoint, write_checkpoint, Checkpoint, ParamStore};
use bimsmt::train::{ContextualNmt, RunConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Base,
    Rnnlm,
    Contextual,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ModelKind,
    pub dims: NmtDims,
    pub vocabs: Vocabs,
    /// Directions whose parameters were trained (base checkpoints).
    pub directions: Vec<Direction>,
    pub context: Option<ContextConfig>,
    pub config: RunConfig,
    pub reports: Vec<(String, TrainReport)>,
}

pub struct Loaded {
    pub meta: ModelMeta,
    pub store: ParamStore,
}

pub fn save(path: &Path, meta: &ModelMeta, store: &ParamStore) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let ckpt = Checkpoint::new(serde_json::to_string(meta)?, store.clone());
    write_checkpoint(path, &ckpt).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path, want: &[ModelKind]) -> Result<Loaded> {
    if !path.is_file() {
        bail!("checkpoint not found: {}", path.display());
    }
    let ckpt = read_checkpoint(path).with_context(|| format!("cannot load {}", path.display()))?;
    let meta: ModelMeta =
        serde_json::from_str(&ckpt.metadata).map_err(|e| anyhow!("{} has no model metadata: {e}", path.display()))?;
    if !want.contains(&meta.kind) {
        bail!(
            "{} holds a {:?} model, expected one of {:?}",
            path.display(),
            meta.kind,
            want
        );
    }
    Ok(Loaded {
        meta,
        store: ckpt.params,
    })
}

/// Copies `from` into `fresh`, which must have exactly the same parameters.
fn fill(mut fresh: ParamStore, from: &ParamStore, what: &str) -> Result<ParamStore> {
    let copied = fresh.load_matching(from)?;
    if copied != fresh.len() || copied != from.len() {
        bail!(
            "{what} checkpoint has {} parameters, the model expects {}",
            from.len(),
            fresh.len()
        );
    }
    Ok(fresh)
}

impl Loaded {
    pub fn contextual(&self) -> Result<(ParamStore, ContextualNmt)> {
        let mut fresh = ParamStore::new();
        let mut rng = component_rng(0, "rebuild");
        let base = BaseNmt::new(&mut fresh, self.meta.dims, &mut rng)?;
        let context = match self.meta.context {
            Some(cfg) => Some(ContextModel::new(&mut fresh, cfg, self.meta.dims.hidden, &mut rng)?),
            None => None,
        };
        let store = fill(fresh, &self.store, "model")?;
        Ok((store, ContextualNmt { base, context }))
    }

    pub fn lms(&self) -> Result<(ParamStore, RnnLms)> {
        let mut fresh = ParamStore::new();
        let lms = RnnLms::new(&mut fresh, self.meta.dims, &mut component_rng(0, "rebuild"))?;
        Ok((fill(fresh, &self.store, "language model")?, lms))
    }
}

/// Unused language models for checkpoints that never read them.
pub fn placeholder_lms(dims: NmtDims) -> Result<(ParamStore, RnnLms)> {
    let mut store = ParamStore::new();
    let lms = RnnLms::new(&mut store, dims, &mut component_rng(0, "rebuild"))?;
    Ok((store, lms))
}

/// Refuses a run config whose sizes disagree with a checkpoint.
pub fn check_dims(cfg: &RunConfig, dims: &NmtDims, path: &Path) -> Result<()> {
    if (cfg.hidden, cfg.embed, cfg.align) != (dims.hidden, dims.embed, dims.align) {
        bail!(
            "config sizes hidden={} embed={} align={} do not match {} (hidden={} embed={} align={})",
            cfg.hidden,
            cfg.embed,
            cfg.align,
            path.display(),
            dims.hidden,
            dims.embed,
            dims.align
        );
    }
    Ok(())
}
