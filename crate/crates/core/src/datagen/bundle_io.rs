//! A bundle on disk is a directory holding `manifest.json` and one instance
//! file per problem under `instances/`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, DatasetBundle, GenSpec, Result, Split, SplitRole};
use crate::model::io::{read_instance, to_json, Instance};

pub const BUNDLE_FORMAT: &str = "drgd-bundle";
pub const BUNDLE_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const INSTANCE_DIR: &str = "instances";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub file: String,
    pub split: Option<SplitRole>,
    pub labeled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub spec: GenSpec,
    pub has_split: bool,
    pub instances: Vec<ManifestEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

fn instance_file(i: usize) -> String {
    format!("{INSTANCE_DIR}/{i:05}.json")
}

pub fn write_bundle(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    fs::create_dir_all(dir.join(INSTANCE_DIR)).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(bundle.len());
    for (i, qp) in bundle.instances.iter().enumerate() {
        let file = instance_file(i);
        let inst = Instance { qp: qp.clone(), label: bundle.label(i).cloned() };
        let path = dir.join(&file);
        fs::write(&path, to_json(&inst)).map_err(io_err(&path))?;
        entries.push(ManifestEntry {
            id: i,
            file,
            split: bundle.split.as_ref().and_then(|s| s.role_of(i)),
            labeled: inst.label.is_some(),
        });
    }
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        spec: bundle.spec.clone(),
        has_split: bundle.split.is_some(),
        instances: entries,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest always serializes");
    fs::write(&path, text).map_err(io_err(&path))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
        DataError::Malformed(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })?;
    if manifest.format != BUNDLE_FORMAT || manifest.version != BUNDLE_VERSION {
        return Err(DataError::Malformed(format!(
            "{}: unsupported bundle {} v{} (expected {BUNDLE_FORMAT} v{BUNDLE_VERSION})",
            path.display(),
            manifest.format,
            manifest.version
        )));
    }
    Ok(manifest)
}

pub fn read_bundle(dir: &Path) -> Result<DatasetBundle> {
    let manifest = read_manifest(dir)?;
    let mut instances = Vec::with_capacity(manifest.instances.len());
    let mut labels = Vec::new();
    let mut split = Split::default();
    for (pos, entry) in manifest.instances.iter().enumerate() {
        if entry.id != pos {
            return Err(DataError::Malformed(format!("manifest entry {pos} has id {}", entry.id)));
        }
        let path = dir.join(&entry.file);
        let inst = read_instance(&path)
            .map_err(|source| DataError::Instance { path: path.display().to_string(), source })?;
        if inst.label.is_some() != entry.labeled {
            return Err(DataError::Malformed(format!("{}: label presence disagrees with manifest", path.display())));
        }
        if let Some(l) = inst.label {
            labels.push(l);
        }
        match entry.split {
            Some(SplitRole::Train) => split.train.push(pos),
            Some(SplitRole::Val) => split.val.push(pos),
            Some(SplitRole::Test) => split.test.push(pos),
            None => {}
        }
        instances.push(inst.qp);
    }
    let labels = match labels.len() {
        0 if !instances.is_empty() => None,
        k if k == instances.len() => Some(labels),
        k => return Err(DataError::Malformed(format!("{k} of {} instances labeled", instances.len()))),
    };
    Ok(DatasetBundle { spec: manifest.spec, instances, labels, split: manifest.has_split.then_some(split) })
}

#[cfg(test)]
mod tests {
    use super::super::{gen_portfolio, gen_qp_rhs, label_bundle, split_bundle, Family};
    use super::*;

    #[test]
    fn round_trip_every_field() {
        let spec = GenSpec { family: Family::QpRhs, size: 6, count: 5, seed: 1, ..GenSpec::default() };
        let b = split_bundle(gen_qp_rhs(&spec).unwrap(), (2, 1, 1), 4).unwrap();
        let (b, _) = label_bundle(b, 1e-8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &b).unwrap();
        assert_eq!(read_bundle(dir.path()).unwrap(), b);

        let m = read_manifest(dir.path()).unwrap();
        let s = b.split.as_ref().unwrap();
        for e in &m.instances {
            assert_eq!(e.split, s.role_of(e.id));
            assert!(e.labeled);
        }
        assert_eq!(m.instances.iter().filter(|e| e.split.is_none()).count(), 1);
    }

    #[test]
    fn infinite_bounds_survive() {
        let spec = GenSpec { family: Family::Portfolio, size: 1, count: 2, seed: 1, ..GenSpec::default() };
        let b = gen_portfolio(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &b).unwrap();
        let back = read_bundle(dir.path()).unwrap();
        assert_eq!(back, b);
        assert!(back.instances[0].upper.contains(&f64::INFINITY));
        assert!(back.instances[0].lower.contains(&f64::NEG_INFINITY));
    }

    #[test]
    fn malformed_manifest_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST), "{\n  \"format\": \"drgd-bundle\",\n  \"version\": ,\n}").unwrap();
        let msg = read_bundle(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn corrupt_instance_names_file() {
        let spec = GenSpec { size: 4, count: 2, ..GenSpec::default() };
        let b = gen_qp_rhs(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &b).unwrap();
        fs::write(dir.path().join(instance_file(1)), "{\"format\": \"drgd-instance\", \"version\": 1, \"n\": }").unwrap();
        let msg = read_bundle(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("00001.json") && msg.contains("line 1"), "{msg}");
    }
}
