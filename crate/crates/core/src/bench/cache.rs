//! On-disk cache of reference endpoints keyed by a digest of everything that
//! determines them.
//!
//! Layout of `<dir>/<digest>.ref`:
//!
//! ```text
//! # ibc-strang reference v1
//! # digest: <64 hex chars>
//! # created_unix: <seconds>
//! # abs_tol: <x>
//! # rel_tol: <x>
//! # len: <n>
//! <one value per line, shortest round-trip exponent form>
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ExperimentSpec, FaceSpec, GridSpec, InitialSpec, ReferenceTolerances};
use crate::flows::ReactionSpec;
use crate::integrators::ReferenceConfig;

const MAGIC: &str = "# ibc-strang reference v1";

#[derive(Serialize)]
struct ReferenceKey<'a> {
    format: &'static str,
    dimension: u8,
    grid: &'a GridSpec,
    faces: &'a [FaceSpec],
    reaction: &'a ReactionSpec,
    initial: &'a InitialSpec,
    t_end: f64,
    tolerances: &'a ReferenceTolerances,
    solver: ReferenceConfig,
}

/// The solver settings a spec's reference is computed with.
pub fn reference_config(spec: &ExperimentSpec) -> ReferenceConfig {
    ReferenceConfig {
        abs_tol: spec.reference.abs_tol,
        rel_tol: spec.reference.rel_tol,
        ..ReferenceConfig::default()
    }
}

/// SHA-256 over the canonical JSON of the reference-determining fields.
pub fn reference_digest(spec: &ExperimentSpec) -> String {
    let key = ReferenceKey {
        format: MAGIC,
        dimension: spec.dimension,
        grid: &spec.grid,
        faces: &spec.faces,
        reaction: &spec.reaction,
        initial: &spec.initial,
        t_end: spec.t_end,
        tolerances: &spec.reference,
        solver: reference_config(spec),
    };
    let json = serde_json::to_vec(&key).expect("reference key serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Clone, Debug)]
pub struct ReferenceCache {
    dir: PathBuf,
    enabled: bool,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            enabled: true,
        }
    }

    /// A cache that never hits and never writes.
    pub fn disabled() -> Self {
        Self {
            dir: PathBuf::new(),
            enabled: false,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.ref"))
    }

    pub fn lookup(&self, digest: &str) -> Option<DVector<f64>> {
        if !self.enabled {
            return None;
        }
        let path = self.path_for(digest);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                return None;
            }
        };
        match parse_entry(&text, digest) {
            Ok(v) => Some(v),
            Err(msg) => {
                log::warn!("ignoring corrupt cache entry {}: {msg}", path.display());
                None
            }
        }
    }

    /// Writes to a temporary file in the cache directory, then renames it
    /// into place.
    pub fn store(&self, digest: &str, tolerances: &ReferenceTolerances, v: &DVector<f64>) -> std::io::Result<Option<PathBuf>> {
        if !self.enabled {
            return Ok(None);
        }
        fs::create_dir_all(&self.dir)?;
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut text = format!(
            "{MAGIC}\n# digest: {digest}\n# created_unix: {created}\n# abs_tol: {:e}\n# rel_tol: {:e}\n# len: {}\n",
            tolerances.abs_tol,
            tolerances.rel_tol,
            v.len()
        );
        for x in v.iter() {
            text.push_str(&format!("{x:e}\n"));
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(text.as_bytes())?;
        tmp.flush()?;
        let path = self.path_for(digest);
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(Some(path))
    }
}

fn parse_entry(text: &str, digest: &str) -> Result<DVector<f64>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err("missing header".into());
    }
    let mut len = None;
    let mut found_digest = None;
    let mut values = Vec::new();
    for line in lines {
        if let Some(meta) = line.strip_prefix("# ") {
            if let Some((key, value)) = meta.split_once(": ") {
                match key {
                    "digest" => found_digest = Some(value.to_string()),
                    "len" => len = Some(value.parse::<usize>().map_err(|e| format!("bad len: {e}"))?),
                    _ => {}
                }
            }
            continue;
        }
        let x: f64 = line.trim().parse().map_err(|e| format!("bad value '{line}': {e}"))?;
        if !x.is_finite() {
            return Err(format!("non-finite value '{line}'"));
        }
        values.push(x);
    }
    if found_digest.as_deref() != Some(digest) {
        return Err("digest mismatch".into());
    }
    match len {
        Some(n) if n == values.len() => Ok(DVector::from_vec(values)),
        Some(n) => Err(format!("expected {n} values, found {}", values.len())),
        None => Err("missing len".into()),
    }
}
