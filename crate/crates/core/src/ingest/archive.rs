//! Canonical binary epoch archive: a JSON manifest next to a little-endian
//! `f32` blob in `[trial][channel][sample]` row-major order.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::data::{EpochProvenance, EpochSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub schema: u32,
    pub subjects: Vec<String>,
    pub subject_idx: Vec<usize>,
    pub labels: Vec<usize>,
    pub fs: f64,
    /// `[trials, channels, samples]`
    pub shape: [usize; 3],
    pub channel_names: Vec<String>,
    pub provenance: EpochProvenance,
    /// Hash of the preprocessing parameters that produced this archive,
    /// so stale caches are detected.
    pub params_hash: String,
    pub blob_file: String,
    pub blob_bytes: u64,
}

/// Write `<prefix>.json` and `<prefix>.f32`.
pub fn write_archive(epochs: &EpochSet, params_hash: &str, prefix: &Path) -> Result<()> {
    epochs.validate()?;
    let (t, c, s) = epochs.data.dim();
    let blob_name = format!(
        "{}.f32",
        prefix.file_name().map(|f| f.to_string_lossy()).unwrap_or_default()
    );
    let manifest = ArchiveManifest {
        schema: 1,
        subjects: epochs.subject_names.clone(),
        subject_idx: epochs.subjects.clone(),
        labels: epochs.labels.clone(),
        fs: epochs.fs,
        shape: [t, c, s],
        channel_names: epochs.channel_names.clone(),
        provenance: epochs.provenance.clone(),
        params_hash: params_hash.to_string(),
        blob_file: blob_name,
        blob_bytes: (t * c * s * 4) as u64,
    };

    if let Some(parent) = prefix.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut blob = std::io::BufWriter::new(std::fs::File::create(with_ext(prefix, "f32"))?);
    for &v in epochs.data.iter() {
        blob.write_all(&(v as f32).to_le_bytes())?;
    }
    blob.flush()?;

    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(with_ext(prefix, "json"), json)?;
    Ok(())
}

/// Read an archive written by [`write_archive`].
pub fn read_archive(prefix: &Path) -> Result<(EpochSet, ArchiveManifest)> {
    let json = std::fs::read_to_string(with_ext(prefix, "json"))?;
    let manifest: ArchiveManifest =
        serde_json::from_str(&json).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    let [t, c, s] = manifest.shape;

    let mut raw = Vec::new();
    std::fs::File::open(with_ext(prefix, "f32"))?.read_to_end(&mut raw)?;
    let expect = t * c * s * 4;
    if raw.len() != expect {
        return Err(Error::Shape(format!(
            "archive blob is {} bytes, manifest shape {t}×{c}×{s} needs {expect}",
            raw.len()
        )));
    }
    let mut data = Array3::<f64>::zeros((t, c, s));
    for (i, v) in data.iter_mut().enumerate() {
        let b = [raw[4 * i], raw[4 * i + 1], raw[4 * i + 2], raw[4 * i + 3]];
        *v = f32::from_le_bytes(b) as f64;
    }

    let epochs = EpochSet {
        data,
        labels: manifest.labels.clone(),
        subjects: manifest.subject_idx.clone(),
        subject_names: manifest.subjects.clone(),
        fs: manifest.fs,
        channel_names: manifest.channel_names.clone(),
        provenance: manifest.provenance.clone(),
    };
    epochs.validate()?;
    Ok((epochs, manifest))
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut p = prefix.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn sample_epochs() -> EpochSet {
        let mut data = Array3::<f64>::zeros((4, 3, 8));
        for (i, v) in data.iter_mut().enumerate() {
            *v = (i as f64) * 0.25 - 3.0;
        }
        EpochSet {
            data,
            labels: vec![0, 1, 2, 3],
            subjects: vec![0, 0, 1, 1],
            subject_names: vec!["S01".into(), "S02".into()],
            fs: 256.0,
            channel_names: vec!["Cz".into(), "Pz".into(), "Fz".into()],
            provenance: EpochProvenance::synthetic((-0.2, 1.0)),
        }
    }

    #[test]
    fn archive_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("epochs");
        let epochs = sample_epochs();
        write_archive(&epochs, "deadbeef", &prefix).unwrap();

        let (back, manifest) = read_archive(&prefix).unwrap();
        assert_eq!(manifest.params_hash, "deadbeef");
        assert_eq!(manifest.shape, [4, 3, 8]);
        assert_eq!(back.labels, epochs.labels);
        assert_eq!(back.subjects, epochs.subjects);
        // f32 quantisation only.
        for (a, b) in epochs.data.iter().zip(back.data.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn blob_byte_length_matches_shape() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("epochs");
        let epochs = sample_epochs();
        write_archive(&epochs, "h", &prefix).unwrap();
        let blob = std::fs::metadata(dir.path().join("epochs.f32")).unwrap().len();
        assert_eq!(blob, 4 * 3 * 8 * 4);
    }

    #[test]
    fn truncated_blob_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("epochs");
        write_archive(&sample_epochs(), "h", &prefix).unwrap();
        let blob_path = dir.path().join("epochs.f32");
        let bytes = std::fs::read(&blob_path).unwrap();
        std::fs::write(&blob_path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_archive(&prefix).is_err());
    }
}
