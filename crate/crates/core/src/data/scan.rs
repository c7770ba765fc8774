use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

/// Classes (sorted subdirectory names) and `(path, class)` records sorted
/// by path. Files that cannot be read as images go to `skipped`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanReport {
    pub classes: Vec<String>,
    pub records: Vec<(PathBuf, usize)>,
    pub skipped: Vec<Skipped>,
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    out.retain(|p| {
        !p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'))
    });
    out.sort();
    Ok(out)
}

pub fn scan_dataset(root: &Path) -> Result<ScanReport> {
    let mut classes = Vec::new();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let class = classes.len();
        classes.push(dir.file_name().expect("entry has a name").to_string_lossy().into_owned());
        for path in sorted_entries(&dir)? {
            if path.is_dir() {
                skipped.push(Skipped {
                    path,
                    reason: "nested directory".into(),
                });
            } else if !has_image_extension(&path) {
                skipped.push(Skipped {
                    path,
                    reason: "not a PNG or JPEG file".into(),
                });
            } else {
                match image::image_dimensions(&path) {
                    Ok(_) => records.push((path, class)),
                    Err(e) => skipped.push(Skipped {
                        path,
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    records.sort();
    Ok(ScanReport {
        classes,
        records,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{write_corpus, SyntheticSpec};

    #[test]
    fn classes_sorted_and_bad_files_skipped() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            classes: 4,
            per_class: 3,
            size: 8,
            ..SyntheticSpec::default()
        };
        let names = write_corpus(tmp.path(), &spec).unwrap();
        fs::write(tmp.path().join(&names[1]).join("broken.png"), b"not a png").unwrap();
        fs::write(tmp.path().join(&names[1]).join("notes.txt"), b"x").unwrap();
        let r = scan_dataset(tmp.path()).unwrap();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(r.classes, sorted);
        assert_eq!(r.records.len(), 12);
        assert!(r.records.windows(2).all(|w| w[0].0 < w[1].0));
        assert_eq!(r.skipped.len(), 2);
    }

    #[test]
    fn empty_root_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(scan_dataset(tmp.path()), Err(Error::EmptyDataset(_))));
        fs::create_dir(tmp.path().join("only_dir")).unwrap();
        assert!(matches!(scan_dataset(tmp.path()), Err(Error::EmptyDataset(_))));
    }
}
