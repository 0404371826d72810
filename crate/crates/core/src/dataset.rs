//! Labelled feature sets and their CSV form (`sample_id,label,f_0,...`).

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub ids: Vec<String>,
    pub features: Vec<Vec<T>>,
    /// Empty when the file had no `label` column.
    pub labels: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Vec<Vec<T>>, labels: Vec<usize>) -> Result<Self> {
        let ids = (0..features.len()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, features, labels)
    }

    pub fn with_ids(ids: Vec<String>, features: Vec<Vec<T>>, labels: Vec<usize>) -> Result<Self> {
        if ids.len() != features.len() {
            return Err(Error::Shape {
                expected: features.len(),
                got: ids.len(),
            });
        }
        if !labels.is_empty() && labels.len() != features.len() {
            return Err(Error::Shape {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if let Some(first) = features.first() {
            if let Some(bad) = features.iter().find(|r| r.len() != first.len()) {
                return Err(Error::Shape {
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
        Ok(Self {
            ids,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, |r| r.len())
    }

    pub fn is_labelled(&self) -> bool {
        !self.labels.is_empty() || self.features.is_empty()
    }

    /// Largest label + 1.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample_id".to_string()];
        let labelled = !self.labels.is_empty();
        if labelled {
            header.push("label".into());
        }
        header.extend((0..self.dim()).map(|i| format!("f_{i}")));
        w.write_record(&header)?;
        for (i, row) in self.features.iter().enumerate() {
            let mut rec = vec![self.ids[i].clone()];
            if labelled {
                rec.push(self.labels[i].to_string());
            }
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.is_empty() || &headers[0] != "sample_id" {
            return Err(Error::format(1, "expected header sample_id[,label],f_0,..."));
        }
        let labelled = headers.get(1) == Some("label");
        let first_feature = if labelled { 2 } else { 1 };
        for (i, h) in headers.iter().skip(first_feature).enumerate() {
            if h != format!("f_{i}") {
                return Err(Error::format(1, format!("unexpected column `{h}`")));
            }
        }
        let mut ids = Vec::new();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::format(line, e.to_string()))?;
            ids.push(row[0].to_string());
            if labelled {
                labels.push(
                    row[1]
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| Error::format(line, format!("bad label `{}`", &row[1])))?,
                );
            }
            let feats = row
                .iter()
                .skip(first_feature)
                .map(|s| {
                    let v = s
                        .trim()
                        .parse::<T>()
                        .map_err(|_| Error::format(line, format!("bad feature `{s}`")))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::format(line, format!("non-finite feature `{s}`")))
                    }
                })
                .collect::<Result<Vec<T>>>()?;
            features.push(feats);
        }
        Self::with_ids(ids, features, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_and_without_labels() {
        let d = Dataset::new(vec![vec![0.5f64, -1.25], vec![3.0, 1e-3]], vec![1, 0]).unwrap();
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("sample_id,label,f_0,f_1\n"));
        assert_eq!(Dataset::read(&buf[..]).unwrap(), d);

        let u = Dataset::new(vec![vec![1.0f64]], vec![]).unwrap();
        let mut buf = Vec::new();
        u.write(&mut buf).unwrap();
        let back = Dataset::<f64>::read(&buf[..]).unwrap();
        assert!(back.labels.is_empty());
        assert_eq!(back.features, u.features);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Dataset::new(vec![vec![1.0f64], vec![1.0, 2.0]], vec![0, 0]).is_err());
        let text = "sample_id,label,f_0\na,0,1.0\nb,x,2.0\n";
        assert!(matches!(
            Dataset::<f64>::read(text.as_bytes()),
            Err(Error::Format { line: 3, .. })
        ));
    }
}
