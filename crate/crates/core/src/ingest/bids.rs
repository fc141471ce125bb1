//! Directory scan over a BIDS-like subject tree.

use std::path::{Path, PathBuf};

use crate::error::Result;

/// Find subject directories (`S01`, `S02`, … or BIDS `sub-*`) under `root`
/// and the EDF files they contain.
///
/// Ordering is deterministic: subjects and file lists are sorted
/// lexicographically. Entries that do not look like subject directories are
/// ignored; subjects without EDF files are returned with an empty list so
/// the caller can report them.
pub fn scan_bids(root: &Path) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let mut subjects = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().to_string();
        if !is_subject_dir(&name) {
            continue;
        }
        let mut files = Vec::new();
        collect_edf(&entry.path(), &mut files)?;
        files.sort();
        subjects.push((name, files));
    }
    subjects.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(subjects)
}

fn is_subject_dir(name: &str) -> bool {
    if let Some(rest) = name.strip_prefix("sub-") {
        return !rest.is_empty();
    }
    let mut chars = name.chars();
    matches!(chars.next(), Some('S')) && chars.clone().count() > 0 && chars.all(|c| c.is_ascii_digit())
}

fn collect_edf(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            collect_edf(&path, out)?;
        } else if path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("edf"))
            .unwrap_or(false)
        {
            out.push(path);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_orders_subjects_and_ignores_noise() {
        let dir = tempfile::tempdir().unwrap();
        for s in ["S03", "S01", "S02", "notes", "sub-x"] {
            std::fs::create_dir(dir.path().join(s)).unwrap();
        }
        std::fs::write(dir.path().join("S01/a.edf"), b"").unwrap();
        std::fs::write(dir.path().join("S01/b.edf"), b"").unwrap();
        std::fs::write(dir.path().join("S02/run.EDF"), b"").unwrap();
        std::fs::write(dir.path().join("S03/readme.txt"), b"").unwrap();
        std::fs::write(dir.path().join("loose.edf"), b"").unwrap();

        let got = scan_bids(dir.path()).unwrap();
        let names: Vec<&str> = got.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["S01", "S02", "S03", "sub-x"]);
        assert_eq!(got[0].1.len(), 2);
        assert_eq!(got[1].1.len(), 1);
        assert_eq!(got[2].1.len(), 0);
    }

    #[test]
    fn empty_root_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        assert!(scan_bids(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn scan_is_stable_across_repeats() {
        let dir = tempfile::tempdir().unwrap();
        for s in ["S10", "S02", "S07"] {
            std::fs::create_dir(dir.path().join(s)).unwrap();
        }
        let a = scan_bids(dir.path()).unwrap();
        let b = scan_bids(dir.path()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unreadable_root_is_error() {
        assert!(scan_bids(Path::new("/nonexistent/eegbench-test")).is_err());
    }
}
