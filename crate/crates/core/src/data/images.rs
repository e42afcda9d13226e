use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;

use super::{DomainDataset, DomainTag, Example};
use crate::error::{OsdaError, Result};

/// Outcome of an image-folder load: how many files decoded, and one entry
/// per skipped file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: Vec<(PathBuf, String)>,
}

impl LoadReport {
    pub fn warning_count(&self) -> usize {
        self.skipped.len()
    }

    /// Line-oriented log, one `WARN skipped <path>: <reason>` line per file.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for (path, why) in &self.skipped {
            let _ = writeln!(out, "WARN skipped {}: {why}", path.display());
        }
        let _ = writeln!(out, "INFO loaded {} images, skipped {}", self.loaded, self.skipped.len());
        out
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| OsdaError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| OsdaError::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Load an Office-style folder `root/<class_name>/<image files>`.
///
/// Class names are the sorted subdirectory names. Every image is converted
/// to RGB, resized to `image_size`×`image_size` (triangle filter) and stored
/// as C×H×W with channel order R, G, B and values in [0,1]. Files that fail
/// to decode are skipped and reported.
pub fn load_image_folder(
    root: impl AsRef<Path>,
    image_size: usize,
    tag: DomainTag,
) -> Result<(DomainDataset, LoadReport)> {
    let root = root.as_ref();
    if image_size == 0 {
        return Err(OsdaError::invalid("image_size must be positive"));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(OsdaError::invalid(format!(
            "{}: no class subdirectories found",
            root.display()
        )));
    }
    let class_names: Vec<String> = class_dirs
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();

    let side = image_size as u32;
    let plane = image_size * image_size;
    let mut report = LoadReport::default();
    let mut examples = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        for file in sorted_entries(dir)?.into_iter().filter(|p| p.is_file()) {
            let img = match image::open(&file) {
                Ok(img) => img,
                Err(e) => {
                    log::warn!("skipping {}: {e}", file.display());
                    report.skipped.push((file, e.to_string()));
                    continue;
                }
            };
            let rgb = img.resize_exact(side, side, FilterType::Triangle).to_rgb8();
            let mut data = vec![0.0; 3 * plane];
            for (i, px) in rgb.pixels().enumerate() {
                for c in 0..3 {
                    data[c * plane + i] = f64::from(px[c]) / 255.0;
                }
            }
            examples.push(Example {
                data,
                label: Some(label),
                domain: tag,
            });
            report.loaded += 1;
        }
    }
    let name = root.file_name().unwrap_or_default().to_string_lossy().into_owned();
    let ds = DomainDataset::new(name, tag, vec![3, image_size, image_size], class_names, examples)?;
    Ok((ds, report))
}
