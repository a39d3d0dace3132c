//! Suite files, manifests and seeded per-category sampling.
//!
//! A suite path holds one of:
//! - an embodied suite (`"kind": "embodied"`),
//! - a tool suite collection (`"kind": "toolcall"`, `instances: [...]`),
//! - a single tool instance (no `kind`, has `category`),
//! - a manifest (`"kind": "manifest"`) mapping categories to instance
//!   references, sampled down to `cap` per category.
//!
//! Instance references are file paths, optionally `file#id` to pick one
//! instance out of a collection. A bare collection path expands to all of
//! its instances.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{parse_embodied_suite, EmbodiedSuite, EnvError, EnvSession};
use crate::rng;
use crate::toolcall::suite::SuiteFile;
use crate::toolcall::{SuiteError, ToolSuite};

pub const DEFAULT_CAP: usize = 50;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid JSON in {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{path}: {source}")]
    Tool { path: String, source: SuiteError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCollection {
    pub kind: String,
    #[serde(default)]
    pub name: String,
    pub instances: Vec<SuiteFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub kind: String,
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_cap")]
    pub cap: usize,
    /// Category name to instance references, in reporting order.
    pub categories: IndexMap<String, Vec<String>>,
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceRef {
    pub category: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    pub instances: Vec<InstanceRef>,
    pub warnings: Vec<String>,
}

/// Per category: every reference when there are at most `cap`, otherwise a
/// seeded uniform subset of `cap`. Categories keep manifest order and
/// references keep their original relative order.
pub fn sample_suite(manifest: &SuiteManifest, cap: usize, seed: u64) -> Sample {
    let mut out = Sample::default();
    for (category, refs) in &manifest.categories {
        if refs.is_empty() {
            out.warnings.push(format!("category {category} has no instances"));
            continue;
        }
        let mut r = rng::seeded(rng::derive_seed(seed, category));
        for i in rng::sample_indices(&mut r, refs.len(), cap) {
            out.instances.push(InstanceRef {
                category: category.clone(),
                reference: refs[i].clone(),
            });
        }
    }
    out
}

/// What a run executes: named groups of tasks.
#[derive(Debug, Clone)]
pub enum SuiteSet {
    Embodied(EmbodiedSuite),
    Tool { name: String, instances: Vec<ToolSuite> },
}

impl SuiteSet {
    pub fn name(&self) -> &str {
        match self {
            SuiteSet::Embodied(s) => &s.name,
            SuiteSet::Tool { name, .. } => name,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SuiteSet::Embodied(s) => s.tasks.len(),
            SuiteSet::Tool { instances, .. } => instances.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("suite").to_string()
}

fn kind_of(value: &serde_json::Value) -> Option<&str> {
    value.get("kind").and_then(|k| k.as_str())
}

fn tool_instances(path: &Path, text: &str) -> Result<(String, Vec<ToolSuite>), LoadError> {
    let display = path.display().to_string();
    let value: serde_json::Value = serde_json::from_str(text).map_err(|source| LoadError::Json {
        path: display.clone(),
        source,
    })?;
    match kind_of(&value) {
        Some("toolcall") => {
            let coll: ToolCollection = serde_json::from_value(value).map_err(|source| LoadError::Json {
                path: display.clone(),
                source,
            })?;
            let name = if coll.name.is_empty() { stem(path) } else { coll.name };
            let mut out = Vec::with_capacity(coll.instances.len());
            for (i, file) in coll.instances.into_iter().enumerate() {
                let suite = file
                    .into_suite(&format!("{name}-{i}"))
                    .map_err(|source| LoadError::Tool {
                        path: display.clone(),
                        source,
                    })?;
                out.push(suite);
            }
            Ok((name, out))
        }
        None if value.get("category").is_some() => {
            let file: SuiteFile = serde_json::from_value(value).map_err(|source| LoadError::Json {
                path: display.clone(),
                source,
            })?;
            let suite = file.into_suite(&stem(path)).map_err(|source| LoadError::Tool {
                path: display.clone(),
                source,
            })?;
            Ok((stem(path), vec![suite]))
        }
        other => Err(LoadError::Invalid {
            path: display,
            message: format!("not a tool suite (kind {other:?})"),
        }),
    }
}

/// Reads a manifest and expands collection paths into `file#id` entries.
/// Relative references are resolved against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<SuiteManifest, LoadError> {
    let text = read(path)?;
    let mut manifest: SuiteManifest = serde_json::from_str(&text).map_err(|source| LoadError::Json {
        path: path.display().to_string(),
        source,
    })?;
    if manifest.kind != "manifest" {
        return Err(LoadError::Invalid {
            path: path.display().to_string(),
            message: "kind must be \"manifest\"".into(),
        });
    }
    if manifest.categories.is_empty() {
        return Err(LoadError::Invalid {
            path: path.display().to_string(),
            message: "manifest lists no categories".into(),
        });
    }
    let base = path.parent().unwrap_or(Path::new("."));
    for refs in manifest.categories.values_mut() {
        let mut expanded = Vec::with_capacity(refs.len());
        for r in refs.iter() {
            let (file, id) = split_ref(r);
            let full = resolve(base, file);
            match id {
                Some(id) => expanded.push(format!("{}#{id}", full.display())),
                None => {
                    let (_, instances) = tool_instances(&full, &read(&full)?)?;
                    if instances.len() == 1 {
                        expanded.push(full.display().to_string());
                    } else {
                        expanded.extend(instances.iter().map(|s| format!("{}#{}", full.display(), s.id)));
                    }
                }
            }
        }
        *refs = expanded;
    }
    if manifest.name.is_empty() {
        manifest.name = stem(path);
    }
    Ok(manifest)
}

fn split_ref(r: &str) -> (&str, Option<&str>) {
    match r.rsplit_once('#') {
        Some((f, id)) => (f, Some(id)),
        None => (r, None),
    }
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = PathBuf::from(file);
    if p.is_relative() {
        base.join(p)
    } else {
        p
    }
}

/// Loads the sampled instances, grouped into one suite per category.
pub fn load_sample(sample: &Sample) -> Result<Vec<SuiteSet>, LoadError> {
    let mut cache: BTreeMap<String, Vec<ToolSuite>> = BTreeMap::new();
    let mut groups: IndexMap<String, Vec<ToolSuite>> = IndexMap::new();
    for inst in &sample.instances {
        let (file, id) = split_ref(&inst.reference);
        if !cache.contains_key(file) {
            let path = Path::new(file);
            let (_, instances) = tool_instances(path, &read(path)?)?;
            cache.insert(file.to_string(), instances);
        }
        let instances = &cache[file];
        let suite = match id {
            Some(id) => instances.iter().find(|s| s.id == id).ok_or_else(|| LoadError::Invalid {
                path: file.to_string(),
                message: format!("no instance with id {id}"),
            })?,
            None => instances.first().ok_or_else(|| LoadError::Invalid {
                path: file.to_string(),
                message: "no instances".into(),
            })?,
        };
        groups.entry(inst.category.clone()).or_default().push(suite.clone());
    }
    Ok(groups
        .into_iter()
        .map(|(name, instances)| SuiteSet::Tool { name, instances })
        .collect())
}

/// Loads any supported suite file. Manifests are sampled with their own
/// cap and `seed`. Embodied tasks are reset once to catch bad worlds early.
pub fn load_suite_path(path: &Path, seed: u64) -> Result<Vec<SuiteSet>, LoadError> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| LoadError::Json {
        path: path.display().to_string(),
        source,
    })?;
    match kind_of(&value) {
        Some("embodied") => {
            let mut suite = parse_embodied_suite(&text, &path.display().to_string())?;
            if suite.name.is_empty() {
                suite.name = stem(path);
            }
            for task in &suite.tasks {
                EnvSession::reset(task, seed)?;
            }
            Ok(vec![SuiteSet::Embodied(suite)])
        }
        Some("manifest") => {
            let manifest = load_manifest(path)?;
            let sample = sample_suite(&manifest, manifest.cap, seed);
            for w in &sample.warnings {
                log::warn!("{}: {w}", path.display());
            }
            load_sample(&sample)
        }
        _ => {
            let (name, instances) = tool_instances(path, &text)?;
            Ok(vec![SuiteSet::Tool { name, instances }])
        }
    }
}
