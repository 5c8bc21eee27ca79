//! Named-column numeric datasets and CSV ingestion.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// A rectangular dataset of real observations stored column-major.
#[derive(Debug, Clone)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Usage(format!(
                "{} column names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if let Some(n) = columns.first().map(Vec::len) {
            if let Some(bad) = columns.iter().position(|c| c.len() != n) {
                return Err(Error::Usage(format!(
                    "column '{}' has {} rows, expected {}",
                    names[bad],
                    columns[bad].len(),
                    n
                )));
            }
        }
        let mut index = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Usage(format!("duplicate column name '{name}'")));
            }
        }
        Ok(Dataset {
            names,
            columns,
            index,
        })
    }

    /// Parse a headered CSV of real numbers.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        if names.is_empty() {
            return Err(Error::Usage("csv has no header row".into()));
        }
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() {
                return Err(Error::Usage(format!(
                    "csv row {} has {} fields, expected {}",
                    line + 2,
                    rec.len(),
                    names.len()
                )));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Usage(format!(
                        "csv row {} column '{}': cannot parse '{}' as a number",
                        line + 2,
                        names[j],
                        field
                    ))
                })?;
                columns[j].push(v);
            }
        }
        Dataset::new(names, columns)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.index
            .get(name)
            .map(|&i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Usage(format!("missing column '{name}'")))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Apply the natural logarithm to every value.
    pub fn log_transform(&mut self) -> Result<()> {
        for (j, col) in self.columns.iter_mut().enumerate() {
            for v in col.iter_mut() {
                if *v <= 0.0 {
                    return Err(Error::Usage(format!(
                        "column '{}' contains a non-positive value {}; cannot log-transform",
                        self.names[j], v
                    )));
                }
                *v = v.ln();
            }
        }
        Ok(())
    }

    /// Write as headered CSV with the given number of significant digits.
    pub fn write_csv<W: std::io::Write>(&self, w: W, sig_digits: usize) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.names)?;
        for i in 0..self.n() {
            let row: Vec<String> = self
                .columns
                .iter()
                .map(|c| format_sig(c[i], sig_digits))
                .collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Format with a fixed number of significant digits, trimming the exponent
/// form for ordinary magnitudes.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - mag).max(0) as usize;
    if mag.abs() > 8 {
        format!("{:.*e}", sig.saturating_sub(1), v)
    } else {
        format!("{v:.decimals$}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_csv_and_indexes_columns() {
        let csv = "a,b\n1.5,2\n-0.5,4\n";
        let ds = Dataset::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.column("a").unwrap(), &[1.5, -0.5]);
        assert_eq!(ds.column("b").unwrap(), &[2.0, 4.0]);
        assert!(ds.column("c").is_err());
    }

    #[test]
    fn rejects_bad_rows_and_fields() {
        assert!(Dataset::from_csv_reader("a,b\n1,2,3\n".as_bytes()).is_err());
        let err = Dataset::from_csv_reader("a,b\n1,x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("column 'b'"));
    }

    #[test]
    fn log_transform_requires_positive_values() {
        let mut ds = Dataset::from_csv_reader("a\n1\n2.718281828459045\n".as_bytes()).unwrap();
        ds.log_transform().unwrap();
        assert!((ds.column("a").unwrap()[1] - 1.0).abs() < 1e-12);
        let mut bad = Dataset::from_csv_reader("a\n0\n".as_bytes()).unwrap();
        assert!(bad.log_transform().is_err());
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(1234.5678, 6), "1234.57");
        assert_eq!(format_sig(-0.0012345678, 6), "-0.00123457");
        assert_eq!(format_sig(0.0, 6), "0");
    }
}
