use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{bail, Result};
use crate::numerics::Matrix;

impl Dataset {
    /// Writes `index,clean_label,noisy_label,x0,…` with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string(), "clean_label".into(), "noisy_label".into()];
        header.extend((0..self.dim()).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![i.to_string(), self.clean_labels[i].to_string(), self.noisy_labels[i].to_string()];
            rec.extend(self.features.row(i).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`write_csv`](Self::write_csv).
    /// The class count is `max label + 1` unless `num_classes` is given.
    pub fn read_csv<R: Read>(reader: R, num_classes: Option<usize>) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.len() < 4 || &header[0] != "index" || &header[1] != "clean_label" || &header[2] != "noisy_label" {
            bail!(Config, "dataset CSV must start with index,clean_label,noisy_label and at least one feature");
        }
        let dim = header.len() - 3;
        let mut clean = Vec::new();
        let mut noisy = Vec::new();
        let mut data = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse_label = |s: &str| -> Result<usize> {
                s.trim().parse().map_err(|_| crate::Error::Config(format!("row {}: bad label {s:?}", line + 1)))
            };
            clean.push(parse_label(&rec[1])?);
            noisy.push(parse_label(&rec[2])?);
            for field in rec.iter().skip(3) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| crate::Error::Config(format!("row {}: bad feature {field:?}", line + 1)))?;
                data.push(v);
            }
        }
        let k = num_classes.unwrap_or_else(|| clean.iter().chain(&noisy).max().map_or(2, |m| m + 1).max(2));
        Dataset::new(Matrix::from_vec(clean.len(), dim, data)?, clean, noisy, k)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Dataset> {
        Self::read_csv(std::fs::File::open(path)?, num_classes)
    }
}
