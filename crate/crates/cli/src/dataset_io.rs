//! Dataset persistence between stages: CSV (vector) or paired IDX files
//! (image), plus a small text meta file carrying kind, origin, class
//! names and the item count. Empty datasets (a starved mining threshold)
//! persist as meta-only.

use std::path::{Path, PathBuf};

use osrlab_core::datasets::{
    load_idx, load_vectors_csv, write_idx, write_vectors_csv, DatasetKind, LabeledDataset,
};

use crate::error::CliError;

pub fn write_dataset(dir: &Path, name: &str, ds: &LabeledDataset) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    if !ds.is_empty() {
        match ds.kind() {
            DatasetKind::Vector => {
                let csv = dir.join(format!("{name}.csv"));
                write_vectors_csv(ds, &csv)?;
                files.push(csv);
            }
            DatasetKind::Image => {
                let images = dir.join(format!("{name}-images.idx"));
                let labels = dir.join(format!("{name}-labels.idx"));
                write_idx(ds, &images, &labels)?;
                files.push(images);
                files.push(labels);
            }
        }
    }
    let members: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let meta = dir.join(format!("{name}.meta"));
    let text = format!(
        "kind {}\norigin {}\ncount {}\nfiles {}\nclasses {}\n",
        ds.kind().as_str(),
        ds.origin_summary(),
        ds.len(),
        members.join(","),
        ds.class_names().join(",")
    );
    std::fs::write(&meta, text)?;
    files.push(meta);
    Ok(files)
}

pub fn read_dataset(dir: &Path, name: &str) -> Result<LabeledDataset, CliError> {
    let meta_path = dir.join(format!("{name}.meta"));
    let meta = std::fs::read_to_string(&meta_path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", meta_path.display())))?;
    let mut kind = String::new();
    let mut origin = String::new();
    let mut count = usize::MAX;
    let mut classes: Vec<String> = Vec::new();
    for line in meta.lines() {
        if let Some(rest) = line.strip_prefix("kind ") {
            kind = rest.to_string();
        } else if let Some(rest) = line.strip_prefix("origin ") {
            origin = rest.to_string();
        } else if let Some(rest) = line.strip_prefix("count ") {
            count = rest
                .parse()
                .map_err(|_| CliError::runtime(format!("bad count in {}", meta_path.display())))?;
        } else if let Some(rest) = line.strip_prefix("classes ") {
            classes = rest.split(',').map(str::to_string).collect();
        }
    }
    let parsed_kind = match kind.as_str() {
        "vector" => DatasetKind::Vector,
        "image" => DatasetKind::Image,
        other => {
            return Err(CliError::runtime(format!(
                "meta {} has unknown kind {other:?}",
                meta_path.display()
            )))
        }
    };
    if count == 0 {
        return Ok(LabeledDataset::new(Vec::new(), classes, parsed_kind)?);
    }
    let ds = match parsed_kind {
        DatasetKind::Vector => load_vectors_csv(&dir.join(format!("{name}.csv")), &origin)?,
        DatasetKind::Image => load_idx(
            &dir.join(format!("{name}-images.idx")),
            &dir.join(format!("{name}-labels.idx")),
            &origin,
        )?,
    };
    if ds.len() != count {
        return Err(CliError::runtime(format!(
            "{name}: meta says {count} items, files contain {}",
            ds.len()
        )));
    }
    let ds = if classes.is_empty() {
        ds
    } else {
        ds.with_class_names(classes)?
    };
    Ok(ds.with_origin(&origin))
}
