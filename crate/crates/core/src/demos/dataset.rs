//! Sample assembly over recorded episodes, the dataset manifest and its
//! validator.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::episode::{
    frame_name, io_err, mask_name, read_episode, read_joints, read_meta, write_episode, Episode, EpisodeError,
    EPISODE_FORMAT, JOINTS_FILE, META_FILE,
};
use crate::net::ActionChunk;
use crate::sim::arm::within_limits;
use crate::sim::{Image, Joints, Mask};

pub const DATASET_FILE: &str = "dataset.json";
pub const DATASET_FORMAT: u32 = 1;
pub const DEFAULT_K: usize = 4;
pub const DEFAULT_M: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub id: String,
    /// Directory relative to the dataset root.
    pub dir: String,
    #[serde(rename = "T")]
    pub steps: usize,
    /// File name to lowercase hex SHA-256.
    pub checksums: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub k: usize,
    pub m: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    pub episodes: Vec<EpisodeEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleIndex {
    pub episode: usize,
    pub t: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub k: usize,
    pub m: usize,
    pub ids: Vec<String>,
    pub episodes: Vec<Episode>,
    pub samples: Vec<SampleIndex>,
}

/// Samples an episode of length `steps` contributes.
pub fn sample_count(steps: usize, k: usize, m: usize) -> usize {
    (steps + 1).saturating_sub(k + m)
}

/// One sample per `t` with `k-1 <= t <= T-m-1`; episodes shorter than
/// `k + m` contribute nothing.
pub fn build_dataset(episodes: Vec<(String, Episode)>, k: usize, m: usize) -> Result<Dataset, EpisodeError> {
    if k == 0 || m == 0 {
        return Err(EpisodeError::Format(format!("k={k} and m={m} must be at least 1")));
    }
    let mut samples = Vec::new();
    for (e, (_, ep)) in episodes.iter().enumerate() {
        if ep.len() < k + m {
            continue;
        }
        samples.extend((k - 1..ep.len() - m).map(|t| SampleIndex { episode: e, t }));
    }
    if samples.is_empty() {
        return Err(EpisodeError::Format("no episode is long enough to form a sample".into()));
    }
    let (ids, episodes) = episodes.into_iter().unzip();
    Ok(Dataset {
        k,
        m,
        ids,
        episodes,
        samples,
    })
}

impl Dataset {
    pub fn frame(&self, s: SampleIndex) -> &Image {
        &self.episodes[s.episode].frames[s.t]
    }

    pub fn mask(&self, s: SampleIndex) -> &Mask {
        &self.episodes[s.episode].masks[s.t]
    }

    /// Joints t-k+1 ..= t, oldest first.
    pub fn history(&self, s: SampleIndex) -> &[Joints] {
        &self.episodes[s.episode].joints[s.t + 1 - self.k..=s.t]
    }

    /// Expert joints t+1 ..= t+m.
    pub fn target(&self, s: SampleIndex) -> ActionChunk {
        ActionChunk {
            joints: self.episodes[s.episode].joints[s.t + 1..=s.t + self.m].to_vec(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn episode_files(steps: usize) -> Vec<String> {
    let mut files = vec![META_FILE.to_string(), JOINTS_FILE.to_string()];
    files.extend((0..steps).map(frame_name));
    files.extend((0..steps).map(mask_name));
    files
}

fn checksum_dir(dir: &Path, steps: usize) -> Result<BTreeMap<String, String>, EpisodeError> {
    let mut out = BTreeMap::new();
    for name in episode_files(steps) {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        out.insert(name, sha256_hex(&bytes));
    }
    Ok(out)
}

fn read_manifest(root: &Path) -> Result<DatasetManifest, EpisodeError> {
    let path = root.join(DATASET_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| EpisodeError::Format(format!("{}: {e}", path.display())))
}

fn write_manifest(root: &Path, manifest: &DatasetManifest) -> Result<(), EpisodeError> {
    let path = root.join(DATASET_FILE);
    let text = serde_json::to_string_pretty(manifest).map_err(|e| EpisodeError::Format(e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))
}

/// Write episodes under `root/<id>/` and the manifest next to them.
pub fn write_dataset(root: &Path, episodes: &[(String, Episode)], k: usize, m: usize) -> Result<DatasetManifest, EpisodeError> {
    let (height, width) = episodes
        .first()
        .map(|(_, e)| (e.meta.height, e.meta.width))
        .ok_or_else(|| EpisodeError::Format("no episodes to write".into()))?;
    fs::create_dir_all(root).map_err(io_err(root))?;
    let mut entries = Vec::with_capacity(episodes.len());
    for (id, ep) in episodes {
        let dir = root.join(id);
        write_episode(ep, &dir)?;
        entries.push(EpisodeEntry {
            id: id.clone(),
            dir: id.clone(),
            steps: ep.len(),
            checksums: checksum_dir(&dir, ep.len())?,
        });
    }
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT,
        k,
        m,
        height,
        width,
        episodes: entries,
    };
    write_manifest(root, &manifest)?;
    Ok(manifest)
}

/// Write one episode into `root/<id>/` and register it in the manifest,
/// creating the manifest with default k and m if needed.
pub fn append_episode(root: &Path, id: &str, ep: &Episode) -> Result<(), EpisodeError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let mut manifest = if root.join(DATASET_FILE).exists() {
        read_manifest(root)?
    } else {
        DatasetManifest {
            format_version: DATASET_FORMAT,
            k: DEFAULT_K,
            m: DEFAULT_M,
            height: ep.meta.height,
            width: ep.meta.width,
            episodes: Vec::new(),
        }
    };
    if manifest.episodes.iter().any(|e| e.id == id) {
        return Err(EpisodeError::Format(format!("episode id {id} already exists")));
    }
    let dir = root.join(id);
    write_episode(ep, &dir)?;
    manifest.episodes.push(EpisodeEntry {
        id: id.to_string(),
        dir: id.to_string(),
        steps: ep.len(),
        checksums: checksum_dir(&dir, ep.len())?,
    });
    write_manifest(root, &manifest)
}

/// Read every episode listed in the manifest, verifying checksums, and
/// assemble samples with the manifest's k and m.
pub fn load_dataset(root: &Path) -> Result<Dataset, EpisodeError> {
    let report = validate_dataset(root);
    if !report.passed() {
        return Err(EpisodeError::Format(format!(
            "dataset {} failed validation: {}",
            root.display(),
            report.violations.first().map(|v| v.to_string()).unwrap_or_default()
        )));
    }
    let manifest = read_manifest(root)?;
    let mut episodes = Vec::with_capacity(manifest.episodes.len());
    for entry in &manifest.episodes {
        episodes.push((entry.id.clone(), read_episode(&root.join(&entry.dir))?));
    }
    build_dataset(episodes, manifest.k, manifest.m)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub episode: Option<String>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.episode {
            Some(id) => write!(f, "episode {id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub episodes_checked: usize,
    pub samples: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every dataset invariant on disk. Never fails; problems are listed
/// in the report.
pub fn validate_dataset(root: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let manifest = match read_manifest(root) {
        Ok(m) => m,
        Err(e) => {
            report.violations.push(Violation {
                episode: None,
                message: e.to_string(),
            });
            return report;
        }
    };
    let global = |report: &mut ValidationReport, message: String| {
        report.violations.push(Violation { episode: None, message });
    };
    if manifest.format_version != DATASET_FORMAT {
        global(&mut report, format!("dataset format version {}", manifest.format_version));
    }
    if manifest.k == 0 || manifest.m == 0 {
        global(&mut report, format!("k={} and m={} must be at least 1", manifest.k, manifest.m));
    }
    let mut seen = std::collections::BTreeSet::new();
    for entry in &manifest.episodes {
        let mut fail = |message: String| {
            report.violations.push(Violation {
                episode: Some(entry.id.clone()),
                message,
            })
        };
        if !seen.insert(entry.id.clone()) {
            fail("duplicate episode id".into());
        }
        if entry.dir.contains("..") || Path::new(&entry.dir).is_absolute() {
            fail(format!("directory {:?} escapes the dataset root", entry.dir));
            continue;
        }
        let dir = root.join(&entry.dir);
        check_episode(&dir, entry, &manifest, &mut fail);
        report.episodes_checked += 1;
        if manifest.k > 0 && manifest.m > 0 {
            report.samples += sample_count(entry.steps, manifest.k, manifest.m);
        }
    }
    if report.samples == 0 {
        global(&mut report, "dataset yields no samples".into());
    }
    report
}

fn check_episode(dir: &Path, entry: &EpisodeEntry, manifest: &DatasetManifest, fail: &mut impl FnMut(String)) {
    let meta = match read_meta(dir) {
        Ok(m) => m,
        Err(e) => return fail(e.to_string()),
    };
    if meta.format_version != EPISODE_FORMAT {
        fail(format!("episode format version {}", meta.format_version));
    }
    if meta.steps != entry.steps {
        fail(format!("meta T = {} but manifest T = {}", meta.steps, entry.steps));
    }
    if (meta.height, meta.width) != (manifest.height, manifest.width) {
        fail(format!(
            "resolution {}x{} differs from dataset {}x{}",
            meta.height, meta.width, manifest.height, manifest.width
        ));
    }

    let expected = episode_files(meta.steps);
    for name in &expected {
        let path = dir.join(name);
        let Ok(bytes) = fs::read(&path) else {
            fail(format!("missing file {name}"));
            continue;
        };
        match entry.checksums.get(name) {
            None => fail(format!("no checksum listed for {name}")),
            Some(want) if *want != sha256_hex(&bytes) => fail(format!("checksum mismatch for {name}")),
            Some(_) => {}
        }
        if name.ends_with(".ppm") {
            match Image::from_ppm(&bytes) {
                Ok(img) if (img.height, img.width) != (meta.height, meta.width) => {
                    fail(format!("{name} is {}x{}", img.height, img.width))
                }
                Ok(_) => {}
                Err(e) => fail(format!("{name}: {e}")),
            }
        } else if name.ends_with(".pgm") {
            match Mask::from_pgm(&bytes) {
                Ok(mask) if (mask.height, mask.width) != (meta.height, meta.width) => {
                    fail(format!("{name} is {}x{}", mask.height, mask.width))
                }
                Ok(mask) if mask.count() == 0 => fail(format!("{name} is empty")),
                Ok(_) => {}
                Err(e) => fail(format!("{name}: {e}")),
            }
        }
    }
    for name in entry.checksums.keys() {
        if !expected.contains(name) {
            fail(format!("unexpected file {name} in checksum list"));
        }
    }

    match read_joints(dir) {
        Ok(joints) => {
            if joints.len() != meta.steps {
                fail(format!("{} joint records for T = {}", joints.len(), meta.steps));
            }
            for (t, q) in joints.iter().enumerate() {
                if !q.iter().all(|v| v.is_finite()) || !within_limits(q) {
                    fail(format!("joint record {t} outside limits: {q:?}"));
                }
            }
        }
        Err(e) => fail(e.to_string()),
    }
}
