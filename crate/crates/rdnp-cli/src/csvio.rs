//! CSV ingestion and dataset export. Input files need a UTF-8 header row;
//! only the columns the run actually references are parsed, so unrelated
//! columns may hold anything.

use std::path::Path;

use rdnp::dataset::RDDataset;

use crate::error::CliError;

pub struct CsvTable {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            rows.push(record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?);
        }
        Ok(CsvTable { headers, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    fn column_index(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("missing column `{name}`")))
    }

    /// One cell as text; 1-based data line numbers count the header.
    fn cell(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("")
    }

    pub fn column_string(&self, name: &str) -> Result<Vec<String>, CliError> {
        let col = self.column_index(name)?;
        Ok((0..self.n_rows())
            .map(|row| self.cell(row, col).to_string())
            .collect())
    }

    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let col = self.column_index(name)?;
        let mut out = Vec::with_capacity(self.n_rows());
        for row in 0..self.n_rows() {
            let cell = self.cell(row, col);
            let value: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!(
                    "line {}, column `{name}`: cannot parse `{cell}` as a number",
                    row + 2
                ))
            })?;
            out.push(value);
        }
        Ok(out)
    }

    /// A strictly binary column: every cell must parse to 0 or 1.
    pub fn column_binary(&self, name: &str) -> Result<Vec<bool>, CliError> {
        let values = self.column_f64(name)?;
        let col = name;
        values
            .iter()
            .enumerate()
            .map(|(row, &v)| {
                if v == 0.0 {
                    Ok(false)
                } else if v == 1.0 {
                    Ok(true)
                } else {
                    Err(CliError::Data(format!(
                        "line {}, column `{col}`: treatment must be 0 or 1, got {v}",
                        row + 2
                    )))
                }
            })
            .collect()
    }
}

/// Writes a dataset using the same schema the loader reads:
/// id,r,x,y,t with t as 0/1.
pub fn write_dataset_csv(path: &Path, data: &RDDataset) -> Result<(), CliError> {
    let mut out = String::from("id,r,x,y,t\n");
    for s in data.subjects() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.id,
            s.r,
            s.x,
            s.y,
            u8::from(s.t)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
