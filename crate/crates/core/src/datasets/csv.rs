//! Vector dataset CSV: rows of `label,v1,...,vd` with constant `d`. An
//! optional header row is auto-detected by a non-numeric first field.

use std::path::Path;

use crate::datasets::{DatasetItem, DatasetKind, LabeledDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn load_vectors_csv(path: &Path, origin: &str) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_vectors_csv(&text, origin)
}

pub(crate) fn parse_vectors_csv(text: &str, origin: &str) -> Result<LabeledDataset> {
    let mut items = Vec::new();
    let mut dim: Option<usize> = None;
    let mut max_label = 0usize;

    for (line_no, line) in text.lines().enumerate() {
        let row = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if line_no == 0 && fields[0].parse::<i64>().is_err() {
            continue; // header row
        }
        let label: i64 = fields[0]
            .parse()
            .map_err(|_| Error::Csv {
                row,
                message: format!("label {:?} is not an integer", fields[0]),
            })?;
        if label < 0 {
            return Err(Error::Csv {
                row,
                message: format!("label {label} is negative"),
            });
        }
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Csv {
                    row,
                    message: format!("value {f:?} is not a number"),
                })
            })
            .collect::<Result<_>>()?;
        match dim {
            None => {
                if values.is_empty() {
                    return Err(Error::Csv {
                        row,
                        message: "row has a label but no values".into(),
                    });
                }
                dim = Some(values.len());
            }
            Some(d) if d != values.len() => {
                return Err(Error::Csv {
                    row,
                    message: format!("row has {} values, expected {d}", values.len()),
                });
            }
            _ => {}
        }
        max_label = max_label.max(label as usize);
        items.push(DatasetItem {
            sample: Tensor::new(vec![values.len()], values)?,
            class_id: label as usize,
            origin: origin.to_string(),
        });
    }
    if items.is_empty() {
        return Err(Error::invalid("csv contains no data rows"));
    }
    let class_names = (0..=max_label).map(|c| c.to_string()).collect();
    LabeledDataset::new(items, class_names, DatasetKind::Vector)
}

/// Writes `label,v1,...,vd` rows (no header), floats in shortest
/// round-trip form so write -> load is lossless.
pub fn write_vectors_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    if ds.kind() != DatasetKind::Vector {
        return Err(Error::invalid("write_vectors_csv needs a vector dataset"));
    }
    let mut out = String::new();
    for item in ds.items() {
        out.push_str(&item.class_id.to_string());
        for v in item.sample.data() {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
