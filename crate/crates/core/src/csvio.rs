//! CSV datasets and feature derivation.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

const IRIS_CSV: &str = include_str!("../data/iris.csv");

/// A dataset with optional class labels, mapped to `0..` in order of first
/// appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub data: Dataset,
    pub labels: Option<Vec<usize>>,
    pub class_names: Vec<String>,
}

pub fn load_csv(path: &Path, has_header: bool, label_column: Option<usize>) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, has_header, label_column)
}

/// The bundled 150-row Iris table (four measurements plus species).
pub fn iris() -> LabeledDataset {
    read_csv(IRIS_CSV.as_bytes(), true, Some(4)).expect("bundled iris table parses")
}

/// Parses rectangular numeric rows. Errors carry the 1-based line number.
pub fn read_csv<R: Read>(reader: R, has_header: bool, label_column: Option<usize>) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                row,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        if let Some(lc) = label_column {
            if lc >= w {
                return Err(Error::Parse {
                    row,
                    message: format!("label column {lc} out of range for {w} fields"),
                });
            }
        }
        for (col, cell) in record.iter().enumerate() {
            if Some(col) == label_column {
                let id = match class_names.iter().position(|c| c == cell) {
                    Some(id) => id,
                    None => {
                        class_names.push(cell.to_string());
                        class_names.len() - 1
                    }
                };
                labels.push(id);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {col}: {cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("column {col}: {cell:?} is not finite"),
                });
            }
            values.push(v);
        }
    }
    let w = width.ok_or(Error::Empty("csv file has no data rows"))?;
    let dim = w - usize::from(label_column.is_some());
    Ok(LabeledDataset {
        data: Dataset::new(dim, values)?,
        labels: label_column.map(|_| labels),
        class_names,
    })
}

/// Writes coordinates with 17 significant digits so that reading the file
/// back reproduces every value exactly. An optional label becomes the last
/// column.
pub fn write_csv(path: &Path, data: &Dataset, labels: Option<&[usize]>) -> Result<()> {
    let mut out = String::new();
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in data.rows().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        if let Some(l) = labels {
            cells.push(l[i].to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRecipe {
    #[default]
    Identity,
    /// `(sepal_length * sepal_width, petal_length * petal_width)` from the
    /// first four columns.
    IrisAreas,
}

pub fn derive_features(data: &Dataset, recipe: FeatureRecipe) -> Result<Dataset> {
    match recipe {
        FeatureRecipe::Identity => Ok(data.clone()),
        FeatureRecipe::IrisAreas => {
            if data.dim() < 4 {
                return Err(Error::DimensionMismatch {
                    expected: 4,
                    actual: data.dim(),
                });
            }
            let values = data
                .rows()
                .flat_map(|r| [r[0] * r[1], r[2] * r[3]])
                .collect();
            Dataset::new(2, values)
        }
    }
}
