//! On-disk cache of RK4 reference trajectories.
//!
//! File layout: a text preamble (`format`, key fingerprint, `dim steps`),
//! one line with the hex SHA-256 of everything else, then the states as
//! little-endian `f64`. A digest mismatch is treated as a miss.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use stiffexp::integrators::{integrate, Family, SchemeSpec};
use stiffexp::ionic::{BeelerReuter, BeelerReuterParams, StimulusProfile};
use stiffexp::{TimeMesh, Trajectory};
use thiserror::Error;

const FORMAT: &str = "stiffexp-reference v1";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("reference integration diverged at node {0}")]
    Diverged(usize),
    #[error("reference integration failed: {0}")]
    Scheme(String),
}

/// Identifies one reference: model, its parameters, base mesh and `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceKey {
    pub model: String,
    pub params: BeelerReuterParams,
    pub stimulus: StimulusProfile,
    pub horizon: f64,
    /// Steps of the base mesh the reference refines.
    pub m: usize,
    pub r: u32,
}

impl ReferenceKey {
    /// Steps of the reference mesh, `m · 2^r`.
    pub fn fine_steps(&self) -> usize {
        self.m << self.r
    }

    pub fn fine_mesh(&self) -> TimeMesh {
        TimeMesh::new(self.horizon, self.fine_steps())
    }

    /// Canonical text of every field; `{:?}` prints floats round-trip exact.
    pub fn fingerprint(&self) -> String {
        let p = &self.params;
        let s = &self.stimulus;
        format!(
            "model={} g_na={:?} g_nac={:?} e_na={:?} g_s={:?} c_m={:?} stim=({:?},{:?},{:?},{}) T={:?} m={} r={} scheme=RK_4",
            self.model, p.g_na, p.g_nac, p.e_na, p.g_s, p.c_m, s.center, s.half_width, s.total_charge, s.smoothness, self.horizon, self.m, self.r
        )
    }

    fn file_name(&self) -> String {
        let digest = Sha256::digest(self.fingerprint().as_bytes());
        format!("ref-{}.bin", &hex::encode(digest)[..20])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    /// Computed because the file was missing or failed its digest check.
    Computed,
}

#[derive(Debug, Clone)]
pub struct ReferenceCache {
    dir: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.display().to_string(), source }
}

fn encode(key: &ReferenceKey, traj: &Trajectory) -> Vec<u8> {
    let preamble = format!("{FORMAT}\n{}\n{} {}\n", key.fingerprint(), traj.dim(), traj.mesh().steps());
    let mut body = preamble.into_bytes();
    body.reserve(traj.as_flat().len() * 8);
    for v in traj.as_flat() {
        body.extend_from_slice(&v.to_le_bytes());
    }
    body
}

fn split_lines(bytes: &[u8], count: usize) -> Option<(Vec<&str>, &[u8])> {
    let mut lines = Vec::with_capacity(count);
    let mut rest = bytes;
    for _ in 0..count {
        let end = rest.iter().position(|&b| b == b'\n')?;
        lines.push(std::str::from_utf8(&rest[..end]).ok()?);
        rest = &rest[end + 1..];
    }
    Some((lines, rest))
}

/// Parses a cache file; `None` on any inconsistency.
fn decode(key: &ReferenceKey, bytes: &[u8]) -> Option<Trajectory> {
    let (head, _) = split_lines(bytes, 4)?;
    let digest_line = head[3];
    let header_len: usize = head[..3].iter().map(|l| l.len() + 1).sum();
    let payload = &bytes[header_len + digest_line.len() + 1..];
    let mut hasher = Sha256::new();
    hasher.update(&bytes[..header_len]);
    hasher.update(payload);
    if hex::encode(hasher.finalize()) != digest_line {
        return None;
    }
    if head[0] != FORMAT || head[1] != key.fingerprint() {
        return None;
    }
    let mut dims = head[2].split_whitespace().map(str::parse::<usize>);
    let (dim, steps) = (dims.next()?.ok()?, dims.next()?.ok()?);
    if steps != key.fine_steps() || payload.len() != (steps + 1) * dim * 8 {
        return None;
    }
    let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Some(Trajectory::from_flat(key.fine_mesh(), dim, data))
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, key: &ReferenceKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    /// The cached trajectory, or `None` if absent or corrupt.
    pub fn load(&self, key: &ReferenceKey) -> Result<Option<Trajectory>, CacheError> {
        let path = self.path(key);
        match fs::read(&path) {
            Ok(bytes) => Ok(decode(key, &bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Writes through a temporary file so readers never see a partial file.
    pub fn store(&self, key: &ReferenceKey, traj: &Trajectory) -> Result<PathBuf, CacheError> {
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let path = self.path(key);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let body = encode(key, traj);
        let (head, _) = split_lines(&body, 3).expect("preamble has three lines");
        let header_len: usize = head.iter().map(|l| l.len() + 1).sum();
        let digest = hex::encode(Sha256::digest(&body));
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(&body[..header_len])
            .and_then(|_| writeln!(file, "{digest}"))
            .and_then(|_| file.write_all(&body[header_len..]))
            .and_then(|_| file.sync_all())
            .map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(path)
    }

    /// Loads the reference or integrates and stores it.
    pub fn get_or_compute(&self, key: &ReferenceKey, model: &BeelerReuter) -> Result<(Trajectory, CacheStatus), CacheError> {
        if let Some(traj) = self.load(key)? {
            return Ok((traj, CacheStatus::Hit));
        }
        let traj = compute_reference(model, key.fine_steps())?;
        self.store(key, &traj)?;
        Ok((traj, CacheStatus::Computed))
    }
}

/// RK4 on `fine_steps` steps.
pub fn compute_reference(model: &BeelerReuter, fine_steps: usize) -> Result<Trajectory, CacheError> {
    let rk4 = SchemeSpec::new(Family::Rk, 4).expect("RK_4 exists");
    let run = integrate(model, &rk4, fine_steps).map_err(|e| CacheError::Scheme(e.to_string()))?;
    match run.status.divergence {
        Some(d) => Err(CacheError::Diverged(d.index)),
        None => Ok(run.into_trajectory().expect("stable run has a trajectory")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(m: usize, r: u32) -> ReferenceKey {
        ReferenceKey {
            model: "beeler-reuter".into(),
            params: BeelerReuterParams::default(),
            stimulus: StimulusProfile::default(),
            horizon: 0.6,
            m,
            r,
        }
    }

    fn sample(key: &ReferenceKey) -> Trajectory {
        let n = key.fine_steps() + 1;
        let data = (0..n * 2).map(|i| (i as f64).sqrt() - 0.3).collect();
        Trajectory::from_flat(key.fine_mesh(), 2, data)
    }

    #[test]
    fn fingerprint_separates_keys() {
        let a = key(3, 1);
        let mut b = a.clone();
        b.stimulus.total_charge = 49.0;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.file_name(), key(3, 2).file_name());
        assert_eq!(a.fine_steps(), 6);
    }

    #[test]
    fn store_then_load_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ReferenceCache::new(dir.path());
        let k = key(3, 2);
        let traj = sample(&k);
        assert!(cache.load(&k).unwrap().is_none());
        cache.store(&k, &traj).unwrap();
        let back = cache.load(&k).unwrap().unwrap();
        assert_eq!(back.as_flat(), traj.as_flat());
        assert!(back.as_flat().iter().zip(traj.as_flat()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corruption_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ReferenceCache::new(dir.path());
        let k = key(3, 1);
        let path = cache.store(&k, &sample(&k)).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        assert!(cache.load(&k).unwrap().is_none());
        fs::write(&path, b"garbage").unwrap();
        assert!(cache.load(&k).unwrap().is_none());
    }
}
