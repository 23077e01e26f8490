use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::image::{read_netpbm, Raster};

const IMAGE_EXTENSIONS: [&str; 3] = ["ppm", "pgm", "pnm"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    /// Sorted lexicographically.
    pub paths: Vec<PathBuf>,
}

/// Directory-per-class dataset listing. Classes are sorted by name; a
/// class's position is its label id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub classes: Vec<ClassEntry>,
}

impl DatasetManifest {
    pub fn image_count(&self) -> usize {
        self.classes.iter().map(|c| c.paths.len()).sum()
    }

    /// `(label, path)` for every image, classes in order.
    pub fn images(&self) -> impl Iterator<Item = (u32, &Path)> {
        self.classes
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.paths.iter().map(move |p| (k as u32, p.as_path())))
    }

    /// Offset of each class's first image in [`DatasetManifest::images`] order.
    pub fn class_offsets(&self) -> Vec<usize> {
        self.classes
            .iter()
            .scan(0, |acc, c| {
                let start = *acc;
                *acc += c.paths.len();
                Some(start)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanOutcome {
    pub manifest: DatasetManifest,
    /// Files ignored because they are not PPM/PGM images.
    pub skipped: usize,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Lists `root/<class>/<image>` files.
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<ScanOutcome, HarnessError> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(HarnessError::MissingRoot(root.display().to_string()));
    }
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(root)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();

    let mut skipped = 0;
    let mut classes = Vec::with_capacity(class_dirs.len());
    for dir in class_dirs {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut paths = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if !path.is_file() {
                continue;
            }
            if is_image(&path) {
                paths.push(path);
            } else {
                skipped += 1;
            }
        }
        if paths.is_empty() {
            return Err(HarnessError::EmptyClass(name));
        }
        paths.sort();
        classes.push(ClassEntry { name, paths });
    }
    if classes.len() < 2 {
        return Err(HarnessError::TooFewClasses(classes.len()));
    }
    if skipped > 0 {
        warn!("skipped {skipped} non-image files under {}", root.display());
    }
    let name = root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| root.display().to_string());
    Ok(ScanOutcome { manifest: DatasetManifest { name, classes }, skipped })
}

/// Reads a PPM/PGM file as an RGB raster (gray images are replicated).
pub fn load_image(path: &Path) -> Result<Raster, HarnessError> {
    read_netpbm(path)
        .map(|r| r.to_rgb())
        .map_err(|source| HarnessError::Image { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::write_netpbm;

    fn make(root: &Path, layout: &[(&str, usize)]) {
        let px = Raster::from_fn(4, 4, 3, |_, _, _| 9.0);
        for (class, n) in layout {
            let d = root.join(class);
            fs::create_dir_all(&d).unwrap();
            for i in 0..*n {
                write_netpbm(&px, d.join(format!("img{i:02}.ppm"))).unwrap();
            }
        }
    }

    #[test]
    fn scans_classes_in_order() {
        let dir = tempfile::tempdir().unwrap();
        make(dir.path(), &[("b", 5), ("a", 5), ("c", 5)]);
        fs::write(dir.path().join("a/notes.txt"), "x").unwrap();
        let out = scan_dataset(dir.path()).unwrap();
        let names: Vec<_> = out.manifest.classes.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "c"]);
        assert!(out.manifest.classes.iter().all(|c| c.paths.len() == 5));
        assert_eq!(out.skipped, 1);
        assert_eq!(out.manifest.class_offsets(), vec![0, 5, 10]);
        assert_eq!(scan_dataset(dir.path()).unwrap(), out);
    }

    #[test]
    fn empty_class_is_named() {
        let dir = tempfile::tempdir().unwrap();
        make(dir.path(), &[("full", 2), ("hollow", 0)]);
        match scan_dataset(dir.path()) {
            Err(HarnessError::EmptyClass(name)) => assert_eq!(name, "hollow"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn root_errors() {
        assert!(matches!(scan_dataset("/definitely/not/here"), Err(HarnessError::MissingRoot(_))));
        let dir = tempfile::tempdir().unwrap();
        make(dir.path(), &[("only", 3)]);
        assert!(matches!(scan_dataset(dir.path()), Err(HarnessError::TooFewClasses(1))));
    }
}
