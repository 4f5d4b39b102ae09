use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::{BackendError, NliBackend, NliRequest};
use crate::nli::NliDistribution;

/// On-disk cache layout: premise → hypothesis → distribution.
pub type CacheSnapshot = BTreeMap<String, BTreeMap<String, NliDistribution>>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// Memoizing NLI wrapper keyed by the ordered (premise, hypothesis) pair.
///
/// Concurrent lookups of the same uncached pair are not coalesced: each
/// may reach the inner backend and counts as a miss. Errors are never
/// stored.
pub struct CachedNli<B> {
    inner: B,
    entries: Mutex<HashMap<(String, String), NliDistribution>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

pub fn cached<B: NliBackend>(backend: B) -> CachedNli<B> {
    CachedNli::new(backend)
}

impl<B: NliBackend> CachedNli<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            entries: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn preload(&self, snapshot: &CacheSnapshot) {
        let mut entries = self.entries.lock().unwrap();
        for (premise, row) in snapshot {
            for (hypothesis, d) in row {
                entries.insert((premise.clone(), hypothesis.clone()), *d);
            }
        }
    }

    pub fn snapshot(&self) -> CacheSnapshot {
        let entries = self.entries.lock().unwrap();
        let mut out = CacheSnapshot::new();
        for ((p, h), d) in entries.iter() {
            out.entry(p.clone()).or_default().insert(h.clone(), *d);
        }
        out
    }

    /// Merges a JSON cache file, if it exists.
    pub fn load_file(&self, path: &Path) -> Result<(), BackendError> {
        if !path.exists() {
            return Ok(());
        }
        let raw = fs::read_to_string(path).map_err(|e| {
            BackendError::InvalidRequest(format!("cannot read cache {}: {e}", path.display()))
        })?;
        let snapshot: CacheSnapshot = serde_json::from_str(&raw).map_err(|e| {
            BackendError::InvalidRequest(format!("bad cache file {}: {e}", path.display()))
        })?;
        self.preload(&snapshot);
        Ok(())
    }

    pub fn save_file(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(&self.snapshot())?;
        text.push('\n');
        fs::write(path, text)
    }
}

impl<B: NliBackend> NliBackend for CachedNli<B> {
    fn classify(&self, req: &NliRequest) -> Result<NliDistribution, BackendError> {
        let key = (req.premise.trim().to_string(), req.hypothesis.trim().to_string());
        if let Some(d) = self.entries.lock().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(*d);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let d = self.inner.classify(req)?;
        self.entries.lock().unwrap().insert(key, d);
        Ok(d)
    }
}
