//! Dataset CSV and model JSON formats.
//!
//! CSV: one row per point, header `x0..x{d-1}[,label]`, labels 0-based.
//! Model JSON: `{d, k, components: [{mean, covariance | sigma2, weight}]}`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Covariance, GaussianComponent, LabelledDataset, MixtureModel};

pub fn write_dataset_csv<W: Write>(ds: &LabelledDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = ds.dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut record: Vec<String> = (0..d).map(|j| ds.points[(i, j)].to_string()).collect();
        if let Some(labels) = &ds.labels {
            record.push(labels[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(reader: R) -> Result<LabelledDataset> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let has_label = header.iter().last() == Some("label");
    let d = if has_label {
        header.len().saturating_sub(1)
    } else {
        header.len()
    };
    if d == 0 {
        return Err(Error::ShapeMismatch("csv has no coordinate columns".into()));
    }
    for (j, name) in header.iter().take(d).enumerate() {
        if name != format!("x{j}") {
            return Err(Error::ShapeMismatch(format!(
                "unexpected column {name:?} at position {j}, expected x{j}"
            )));
        }
    }
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut n = 0usize;
    for record in r.records() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::ShapeMismatch(format!(
                "row {n} has {} fields, expected {}",
                record.len(),
                header.len()
            )));
        }
        for j in 0..d {
            let v: f64 = record[j]
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("row {n} col {j}: {e}")))?;
            rows.push(v);
        }
        if has_label {
            let l: usize = record[d]
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("row {n} label: {e}")))?;
            labels.push(l);
        }
        n += 1;
    }
    let points = DMatrix::from_row_slice(n, d, &rows);
    LabelledDataset::new(points, if has_label { Some(labels) } else { None })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentJson {
    pub mean: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    pub d: usize,
    pub k: usize,
    pub components: Vec<ComponentJson>,
}

pub fn model_to_json(model: &MixtureModel) -> ModelJson {
    ModelJson {
        d: model.dim(),
        k: model.k(),
        components: model
            .components()
            .iter()
            .map(|c| {
                let (covariance, sigma2) = match &c.covariance {
                    Covariance::Spherical { sigma2 } => (None, Some(*sigma2)),
                    Covariance::Full(m) => (
                        Some(
                            (0..m.nrows())
                                .map(|i| m.row(i).iter().copied().collect())
                                .collect(),
                        ),
                        None,
                    ),
                };
                ComponentJson {
                    mean: c.mean.iter().copied().collect(),
                    covariance,
                    sigma2,
                    weight: c.weight,
                }
            })
            .collect(),
    }
}

pub fn model_from_json(json: &ModelJson) -> Result<MixtureModel> {
    let mut components = Vec::with_capacity(json.components.len());
    for c in &json.components {
        if c.mean.len() != json.d {
            return Err(Error::ShapeMismatch("mean length != d".into()));
        }
        let covariance = match (&c.covariance, c.sigma2) {
            (Some(rows), None) => {
                if rows.len() != json.d || rows.iter().any(|r| r.len() != json.d) {
                    return Err(Error::ShapeMismatch("covariance shape != d×d".into()));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Covariance::Full(DMatrix::from_row_slice(json.d, json.d, &flat))
            }
            (None, Some(s2)) => Covariance::Spherical { sigma2: s2 },
            _ => {
                return Err(Error::InvalidArgument(
                    "component needs exactly one of covariance | sigma2".into(),
                ))
            }
        };
        components.push(GaussianComponent {
            mean: DVector::from_vec(c.mean.clone()),
            covariance,
            weight: c.weight,
        });
    }
    if components.len() != json.k {
        return Err(Error::ShapeMismatch("components length != k".into()));
    }
    MixtureModel::new(components)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_with_labels() {
        let points = DMatrix::from_row_slice(2, 3, &[0.25, -1.5, 3.0, 1e-9, 2.0, -0.125]);
        let ds = LabelledDataset::new(points, Some(vec![0, 1])).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,x2,label\n"));
        let back = read_dataset_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_rejects_malformed() {
        let bad = "x0,x1\n1.0,not_a_number\n";
        assert!(read_dataset_csv(bad.as_bytes()).is_err());
        let bad_header = "y0,y1\n1.0,2.0\n";
        assert!(read_dataset_csv(bad_header.as_bytes()).is_err());
    }

    #[test]
    fn model_json_roundtrip() {
        let model = MixtureModel::new(vec![
            GaussianComponent::spherical(DVector::from_vec(vec![1.0, 2.0]), 0.5, 0.25),
            GaussianComponent {
                mean: DVector::from_vec(vec![-1.0, 0.0]),
                covariance: Covariance::Full(DMatrix::from_row_slice(
                    2,
                    2,
                    &[2.0, 0.3, 0.3, 1.0],
                )),
                weight: 0.75,
            },
        ])
        .unwrap();
        let json = model_to_json(&model);
        let text = serde_json::to_string(&json).unwrap();
        let parsed: ModelJson = serde_json::from_str(&text).unwrap();
        let back = model_from_json(&parsed).unwrap();
        assert_eq!(back, model);
    }
}
