//! Content-addressed response cache for backend calls.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::assembler::AudioSegment;
use crate::gateway::{ChatMessage, GatewayError, LlmBackend, LlmRequest, MusicBackend, MusicRequest};
use crate::hashing::{samples_from_le_bytes, samples_to_le_bytes, sha256_hex, stable_hash64};

/// 16 lowercase hex digits of a stable 64-bit hash of `request`'s JSON form.
///
/// Struct fields serialize in declaration order, so the JSON is canonical for
/// the request types used here.
pub fn cache_key<T: Serialize>(request: &T) -> String {
    let bytes = serde_json::to_vec(request).expect("cache request serializes");
    format!("{:016x}", stable_hash64(&bytes))
}

#[derive(Serialize)]
struct LlmKey<'a> {
    kind: &'static str,
    backend: &'a str,
    system: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct MusicKey<'a> {
    kind: &'static str,
    backend: &'a str,
    description: &'a str,
    tail_hash: u64,
    duration_s: f64,
    sample_rate_hz: u32,
}

pub fn llm_cache_key(backend_id: &str, req: &LlmRequest) -> String {
    cache_key(&LlmKey {
        kind: "llm",
        backend: backend_id,
        system: &req.system_prompt,
        messages: &req.messages,
        temperature: req.temperature,
        seed: req.seed,
    })
}

pub fn music_cache_key(backend_id: &str, req: &MusicRequest) -> String {
    cache_key(&MusicKey {
        kind: "music",
        backend: backend_id,
        description: &req.description,
        tail_hash: req.tail_hash(),
        duration_s: req.duration_s,
        sample_rate_hz: req.sample_rate_hz,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    key: String,
    sha256: String,
    payload: String,
}

/// Outcome of a cache read.
#[derive(Debug, Clone, PartialEq)]
pub enum Lookup {
    Hit(String),
    Miss,
    /// The entry failed its checksum and was deleted.
    Evicted,
}

/// One file per entry under a directory; each file stores its payload and
/// the payload's SHA-256.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Lookup {
        let path = self.entry_path(key);
        let Ok(bytes) = fs::read(&path) else {
            return Lookup::Miss;
        };
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(e) if e.key == key && e.sha256 == sha256_hex(e.payload.as_bytes()) => Lookup::Hit(e.payload),
            _ => {
                log::warn!("cache entry {key} is corrupt; evicting");
                let _ = fs::remove_file(&path);
                Lookup::Evicted
            }
        }
    }

    /// Writes through a temporary file so readers never see a partial entry.
    pub fn put(&self, key: &str, payload: &str) -> io::Result<()> {
        let entry = Entry { key: key.into(), sha256: sha256_hex(payload.as_bytes()), payload: payload.into() };
        let tmp = self.dir.join(format!("{key}.tmp"));
        fs::write(&tmp, serde_json::to_vec(&entry).expect("entry serializes"))?;
        fs::rename(tmp, self.entry_path(key))
    }
}

/// One backend call as seen by the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub key: String,
    pub cache_hit: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub evicted_corrupt_entry: bool,
    pub latency_ms: f64,
}

struct Recorder {
    cache: Option<ResponseCache>,
    backend_id: String,
    calls: Mutex<Vec<CallRecord>>,
}

impl Recorder {
    fn call<F>(&self, key: String, fetch: F) -> Result<String, GatewayError>
    where
        F: FnOnce() -> Result<String, GatewayError>,
    {
        let started = Instant::now();
        let lookup = self.cache.as_ref().map_or(Lookup::Miss, |c| c.get(&key));
        let evicted = lookup == Lookup::Evicted;
        let (payload, hit) = match lookup {
            Lookup::Hit(p) => (p, true),
            _ => {
                let p = fetch()?;
                if let Some(c) = &self.cache {
                    if let Err(e) = c.put(&key, &p) {
                        log::warn!("could not write cache entry {key}: {e}");
                    }
                }
                (p, false)
            }
        };
        self.calls.lock().unwrap().push(CallRecord {
            key,
            cache_hit: hit,
            evicted_corrupt_entry: evicted,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        Ok(payload)
    }

    fn drain(&self) -> Vec<CallRecord> {
        std::mem::take(&mut *self.calls.lock().unwrap())
    }
}

/// Language-model backend behind the response cache.
pub struct CachedLlm<B> {
    inner: B,
    rec: Recorder,
}

impl<B: LlmBackend> CachedLlm<B> {
    /// `backend_id` distinguishes backends (and mock scripts) sharing one cache.
    pub fn new(inner: B, cache: Option<ResponseCache>, backend_id: impl Into<String>) -> Self {
        Self { inner, rec: Recorder { cache, backend_id: backend_id.into(), calls: Mutex::default() } }
    }

    /// Calls made since the last drain, in order.
    pub fn drain_calls(&self) -> Vec<CallRecord> {
        self.rec.drain()
    }
}

impl<B: LlmBackend> LlmBackend for CachedLlm<B> {
    fn complete(&self, req: &LlmRequest) -> Result<String, GatewayError> {
        let key = llm_cache_key(&self.rec.backend_id, req);
        self.rec.call(key, || self.inner.complete(req))
    }
}

/// Music backend behind the response cache. Samples are stored as raw f32 so
/// a hit reproduces the cold result bit for bit.
pub struct CachedMusic<B> {
    inner: B,
    rec: Recorder,
}

impl<B: MusicBackend> CachedMusic<B> {
    pub fn new(inner: B, cache: Option<ResponseCache>, backend_id: impl Into<String>) -> Self {
        Self { inner, rec: Recorder { cache, backend_id: backend_id.into(), calls: Mutex::default() } }
    }

    pub fn drain_calls(&self) -> Vec<CallRecord> {
        self.rec.drain()
    }
}

impl<B: MusicBackend> MusicBackend for CachedMusic<B> {
    fn generate(&self, req: &MusicRequest) -> Result<AudioSegment, GatewayError> {
        let key = music_cache_key(&self.rec.backend_id, req);
        let payload = self.rec.call(key, || {
            let audio = self.inner.generate(req)?;
            Ok(format!("{}:{}", audio.sample_rate_hz, STANDARD.encode(samples_to_le_bytes(&audio.samples))))
        })?;
        let malformed = || GatewayError::MalformedResponse("cached audio entry is malformed".into());
        let (rate, b64) = payload.split_once(':').ok_or_else(malformed)?;
        let rate: u32 = rate.parse().map_err(|_| malformed())?;
        let bytes = STANDARD.decode(b64).map_err(|_| malformed())?;
        let samples = samples_from_le_bytes(&bytes).ok_or_else(malformed)?;
        Ok(AudioSegment { samples, sample_rate_hz: rate, index: 0 })
    }
}
