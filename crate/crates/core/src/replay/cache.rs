use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{request_key, ReplayError, ReplayRequest, ReplayResponse, Replayer};

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    key: String,
    response: ReplayResponse,
}

/// Responses keyed by `request_key`, stored as JSON Lines sorted by key.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ReplayCache {
    entries: BTreeMap<String, ReplayResponse>,
}

impl ReplayCache {
    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        let mut entries = BTreeMap::new();
        if !path.exists() {
            return Ok(ReplayCache { entries });
        }
        for (i, line) in BufReader::new(std::fs::File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Entry =
                serde_json::from_str(&line).map_err(|err| ReplayError::Protocol(format!("{}:{}: {err}", path.display(), i + 1)))?;
            entries.insert(e.key, e.response);
        }
        Ok(ReplayCache { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), ReplayError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (key, response) in &self.entries {
            let line = serde_json::to_string(&Entry { key: key.clone(), response: response.clone() })
                .map_err(|e| ReplayError::Protocol(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&ReplayResponse> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: String, response: ReplayResponse) {
        self.entries.insert(key, response);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Serves from the cache first, falls back to a live sandbox if there is
/// one, and remembers what the sandbox said.
pub struct CachedReplayer {
    cache: Mutex<ReplayCache>,
    live: Option<Box<dyn Replayer>>,
    write_back: Option<PathBuf>,
}

impl CachedReplayer {
    pub fn new(cache: ReplayCache, live: Option<Box<dyn Replayer>>, write_back: Option<PathBuf>) -> Self {
        CachedReplayer { cache: Mutex::new(cache), live, write_back }
    }

    /// Writes the cache file if one was configured.
    pub fn flush(&self) -> Result<(), ReplayError> {
        match &self.write_back {
            Some(path) => self.cache.lock().expect("cache lock").save(path),
            None => Ok(()),
        }
    }
}

impl Replayer for CachedReplayer {
    fn run(&self, req: &ReplayRequest) -> Result<ReplayResponse, ReplayError> {
        let key = request_key(req);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let live = self.live.as_ref().ok_or_else(|| ReplayError::SandboxUnavailable("no cached response and execution disabled".into()))?;
        let response = live.run(req)?;
        self.cache.lock().expect("cache lock").insert(key, response.clone());
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::{ExecStatus, Op};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting(AtomicUsize);

    impl Replayer for Counting {
        fn run(&self, _req: &ReplayRequest) -> Result<ReplayResponse, ReplayError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(ReplayResponse::status_only(ExecStatus::Exception, "boom"))
        }
    }

    fn req(target: &str) -> ReplayRequest {
        ReplayRequest {
            op: Op::Execute,
            cells: vec![],
            target: target.into(),
            candidate: Some("x".into()),
            target_var: "df".into(),
            data_dir: PathBuf::from("/nonexistent"),
            timeout_s: 1,
            max_rows: None,
        }
    }

    #[test]
    fn miss_without_sandbox_is_unavailable() {
        let r = CachedReplayer::new(ReplayCache::default(), None, None);
        assert!(matches!(r.run(&req("a")), Err(ReplayError::SandboxUnavailable(_))));
    }

    #[test]
    fn write_through_then_hit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let live = Box::new(Counting(AtomicUsize::new(0)));
        let r = CachedReplayer::new(ReplayCache::default(), Some(live), Some(path.clone()));
        r.run(&req("a")).unwrap();
        r.run(&req("a")).unwrap();
        r.run(&req("b")).unwrap();
        r.flush().unwrap();
        let loaded = ReplayCache::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        let offline = CachedReplayer::new(loaded, None, None);
        assert_eq!(offline.run(&req("b")).unwrap().status, ExecStatus::Exception);
        let text = std::fs::read_to_string(&path).unwrap();
        let keys: Vec<String> = text.lines().map(|l| serde_json::from_str::<Entry>(l).unwrap().key).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
