//! Row-major tabular data.

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{input, Error, Result};

/// An `n × d` table of real-valued samples, one row per realization.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(Array2<f64>);

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return input("data contains non-finite values");
        }
        Ok(Self(values.as_standard_layout().into_owned()))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return input("rows have differing lengths");
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::Input(e.to_string()))?;
        Self::new(values)
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Rows at the given indices, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> DataMatrix {
        DataMatrix(self.0.select(Axis(0), indices))
    }

    /// Columns at the given indices, in that order.
    pub fn select_columns(&self, indices: &[usize]) -> DataMatrix {
        DataMatrix(self.0.select(Axis(1), indices))
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.ncols() != other.ncols() {
            return input(format!(
                "column mismatch: {} vs {}",
                self.ncols(),
                other.ncols()
            ));
        }
        let stacked = ndarray::concatenate(Axis(0), &[self.0.view(), other.0.view()])
            .map_err(|e| Error::Input(e.to_string()))?;
        Ok(DataMatrix(stacked))
    }
}

impl From<DataMatrix> for Array2<f64> {
    fn from(m: DataMatrix) -> Self {
        m.0
    }
}

/// A feature table together with binary labels (1 = outlier).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub features: DataMatrix,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
}

/// Reads a CSV with a header row. A column named `label` (values 0/1) is
/// split off as the label vector; every other column must be numeric.
pub fn read_csv(path: &Path) -> Result<LabeledData> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_col = headers.iter().position(|h| h.trim() == "label");
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_col)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (i, field) in record.iter().enumerate() {
            let field = field.trim();
            if Some(i) == label_col {
                labels.push(match field {
                    "0" | "0.0" => 0,
                    "1" | "1.0" => 1,
                    other => {
                        return input(format!("row {}: label must be 0 or 1, got {other:?}", line + 2))
                    }
                });
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Input(format!("row {}: non-numeric value {field:?}", line + 2))
                })?;
                flat.push(v);
            }
        }
        n += 1;
    }
    let values = Array2::from_shape_vec((n, feature_names.len()), flat)
        .map_err(|e| Error::Input(e.to_string()))?;
    Ok(LabeledData {
        features: DataMatrix::new(values)?,
        labels,
        feature_names,
    })
}

/// Writes features (and labels, when given) as a CSV readable by [`read_csv`].
pub fn write_csv(path: &Path, data: &DataMatrix, labels: Option<&[u8]>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.ncols()).map(|j| format!("x{}", j + 1)).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    writer.write_record(&header)?;
    for (i, row) in data.view().rows().into_iter().enumerate() {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(labels) = labels {
            record.push(labels[i].to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(DataMatrix::from_rows(&[vec![1.0, f64::NAN]]).is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn csv_roundtrip_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let data = DataMatrix::from_rows(&[vec![0.1, -2.5], vec![1e-17, 3.0]]).unwrap();
        write_csv(&path, &data, Some(&[0, 1])).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.features, data);
        assert_eq!(back.labels, vec![0, 1]);
        assert_eq!(back.feature_names, vec!["x1", "x2"]);
    }

    #[test]
    fn csv_rejects_bad_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,label\n1.0,2\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Input(_))));
    }
}
