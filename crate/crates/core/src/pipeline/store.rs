//! Per-image descriptor extraction with an optional on-disk cache.
//!
//! Cache entries are keyed by a SHA-256 over the image path, the image
//! bytes, the saliency model (and its map file for external models) and the
//! extraction parameters, so any change of input or parameters misses.
//! Each entry carries a checksum of its payload; an unreadable or
//! inconsistent entry is recomputed and rewritten.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use log::warn;
use sha2::{Digest, Sha256};

use crate::binio::{expect_magic, invalid, read_array, read_u32, read_u64, write_u32, write_u64};
use crate::error::{Error, Result};
use crate::features::{attach_saliency, dense_sift, DescriptorSet, DESCRIPTOR_DIM};
use crate::image::{load_image, resize_to_height, to_luminance};
use crate::saliency::SaliencyModelId;

const ENTRY_MAGIC: &[u8; 4] = b"SCFE";
const ENTRY_VERSION: u32 = 1;

/// Parameters of the per-image stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureParams {
    pub model: SaliencyModelId,
    pub height: usize,
    pub step: usize,
    pub scales: Vec<usize>,
}

/// Loads, resizes, computes saliency and dense descriptors, and attaches
/// saliency weights. Errors name the stage and the image.
pub fn extract_features(path: &Path, params: &FeatureParams) -> Result<DescriptorSet> {
    let img = load_image(path).map_err(|e| e.at_stage("load", path))?;
    let img = resize_to_height(&img, params.height).map_err(|e| e.at_stage("resize", path))?;
    let saliency = params
        .model
        .compute(path, &img)
        .map_err(|e| e.at_stage("saliency", path))?;
    let gray = to_luminance(&img).map_err(|e| e.at_stage("luminance", path))?;
    let set = dense_sift(&gray, params.step, &params.scales).map_err(|e| e.at_stage("descriptors", path))?;
    attach_saliency(&set, &saliency).map_err(|e| e.at_stage("saliency weights", path))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content-addressed store of descriptor sets.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Cache key of `path` under `params`.
    pub fn key(path: &Path, params: &FeatureParams) -> Result<String> {
        let mut h = Sha256::new();
        h.update(b"salscene-features\0");
        h.update(ENTRY_VERSION.to_le_bytes());
        h.update(path.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(path).map_err(|e| Error::io(path, e))?);
        h.update(params.model.to_string().as_bytes());
        h.update([0]);
        if let SaliencyModelId::External(dir) = &params.model {
            let map = SaliencyModelId::external_map_path(dir, path).map_err(|e| e.at_stage("saliency", path))?;
            h.update(fs::read(&map).map_err(|e| Error::io(&map, e))?);
        }
        for v in [params.height, params.step, params.scales.len()] {
            h.update((v as u64).to_le_bytes());
        }
        for &s in &params.scales {
            h.update((s as u64).to_le_bytes());
        }
        Ok(hex(&h.finalize()))
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.feat"))
    }

    pub fn store(&self, key: &str, set: &DescriptorSet) -> Result<()> {
        let mut payload = Vec::new();
        set.write_dset(&mut payload).map_err(|e| Error::io(&self.dir, e))?;
        let mut bytes = Vec::with_capacity(payload.len() + 64);
        let (w, h) = set.image_dims();
        let write = |bytes: &mut Vec<u8>| -> std::io::Result<()> {
            bytes.write_all(ENTRY_MAGIC)?;
            write_u32(bytes, ENTRY_VERSION)?;
            write_u32(bytes, w as u32)?;
            write_u32(bytes, h as u32)?;
            write_u32(bytes, set.too_small() as u32)?;
            write_u64(bytes, payload.len() as u64)?;
            bytes.write_all(&payload)?;
            bytes.write_all(&Sha256::digest(&payload))
        };
        write(&mut bytes).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.entry_path(key);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn decode(bytes: &[u8]) -> std::io::Result<DescriptorSet> {
        let mut r = bytes;
        expect_magic(&mut r, ENTRY_MAGIC)?;
        if read_u32(&mut r)? != ENTRY_VERSION {
            return Err(invalid("cache entry version mismatch"));
        }
        let w = read_u32(&mut r)? as usize;
        let h = read_u32(&mut r)? as usize;
        let too_small = read_u32(&mut r)? != 0;
        let len = read_u64(&mut r)? as usize;
        if r.len() != len + 32 {
            return Err(invalid("cache entry has the wrong length"));
        }
        let (payload, mut digest) = r.split_at(len);
        let expected: [u8; 32] = read_array(&mut digest)?;
        if Sha256::digest(payload).as_slice() != expected {
            return Err(invalid("cache entry checksum mismatch"));
        }
        let set = DescriptorSet::read_dset(&mut &payload[..], w, h)?;
        if set.entries().iter().any(|d| d.vector.len() != DESCRIPTOR_DIM) {
            return Err(invalid("bad descriptor"));
        }
        Ok(DescriptorSet::from_parts(w, h, set.entries().to_vec(), too_small))
    }

    /// `Ok(None)` on a miss; a corrupt entry is reported as a miss with a
    /// warning.
    pub fn load(&self, key: &str) -> Option<DescriptorSet> {
        let path = self.entry_path(key);
        let bytes = fs::read(&path).ok()?;
        match Self::decode(&bytes) {
            Ok(set) => Some(set),
            Err(e) => {
                warn!("ignoring corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }
}

/// Descriptor sets for the items of a dataset, computed on demand.
/// Recently computed sets stay in memory up to a byte budget.
pub struct FeatureStore {
    paths: Vec<PathBuf>,
    params: FeatureParams,
    cache: Option<FeatureCache>,
    memory: Mutex<(HashMap<usize, Arc<DescriptorSet>>, usize)>,
    budget: usize,
}

fn approx_bytes(set: &DescriptorSet) -> usize {
    set.len() * std::mem::size_of::<crate::features::Descriptor>() + 64
}

impl FeatureStore {
    pub fn new(paths: Vec<PathBuf>, params: FeatureParams, cache: Option<FeatureCache>, budget_bytes: usize) -> Self {
        Self {
            paths,
            params,
            cache,
            memory: Mutex::new((HashMap::new(), 0)),
            budget: budget_bytes,
        }
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn path(&self, id: usize) -> &Path {
        &self.paths[id]
    }

    fn compute(&self, id: usize) -> Result<DescriptorSet> {
        let path = &self.paths[id];
        let Some(cache) = &self.cache else {
            return extract_features(path, &self.params);
        };
        let key = FeatureCache::key(path, &self.params)?;
        if let Some(set) = cache.load(&key) {
            return Ok(set);
        }
        let set = extract_features(path, &self.params)?;
        if let Err(e) = cache.store(&key, &set) {
            warn!("could not write cache entry for {}: {e}", path.display());
        }
        Ok(set)
    }

    /// Descriptors of item `id`.
    pub fn get(&self, id: usize) -> Result<Arc<DescriptorSet>> {
        if let Some(set) = self.memory.lock().expect("store lock").0.get(&id) {
            return Ok(Arc::clone(set));
        }
        let set = Arc::new(self.compute(id)?);
        let size = approx_bytes(&set);
        let mut guard = self.memory.lock().expect("store lock");
        if guard.1 + size <= self.budget {
            guard.1 += size;
            guard.0.insert(id, Arc::clone(&set));
        }
        Ok(set)
    }
}
