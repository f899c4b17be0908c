//! Numeric CSV input and output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ddl_core::format::g15;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

/// A numeric table with a header row, stored column-major.
#[derive(Clone, Debug)]
pub struct Table {
    pub names: Vec<String>,
    pub data: DMatrix<f64>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(file).map_err(|e| match e {
            CliError::Input(msg) => CliError::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> CliResult<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::input(format!("bad header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if names.is_empty() || names.iter().any(String::is_empty) {
            return Err(CliError::input("header row has empty column names"));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(CliError::input(format!("duplicate column name {name:?}")));
            }
        }
        let mut values = Vec::new();
        let mut rows = 0;
        for (r, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| CliError::input(format!("row {}: {e}", r + 2)))?;
            for (c, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    CliError::input(format!("row {}, column {:?}: not a number: {field:?}", r + 2, names[c]))
                })?;
                if !v.is_finite() {
                    return Err(CliError::input(format!("row {}, column {:?}: non-finite value", r + 2, names[c])));
                }
                values.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(CliError::input("no data rows"));
        }
        Ok(Table {
            data: DMatrix::from_row_slice(rows, names.len(), &values),
            names,
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Splits off the named response column, if given.
    pub fn split_response(self, response: Option<&str>) -> CliResult<(Vec<String>, DMatrix<f64>, Option<DVector<f64>>)> {
        let Some(name) = response else {
            return Ok((self.names, self.data, None));
        };
        let k = self
            .column_index(name)
            .ok_or_else(|| CliError::input(format!("response column {name:?} not found")))?;
        let y = self.data.column(k).into_owned();
        let x = self.data.remove_column(k);
        let mut names = self.names;
        names.remove(k);
        Ok((names, x, Some(y)))
    }
}

/// CSV writer that emits numbers with 15 significant digits.
pub struct CsvOut {
    inner: csv::Writer<File>,
    path: String,
}

pub enum Cell<'a> {
    Num(f64),
    Int(usize),
    Text(&'a str),
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> CliResult<Self> {
        let file = File::create(path).map_err(|e| CliError::io(format!("cannot create {}", path.display()), e))?;
        let mut out = CsvOut {
            inner: csv::Writer::from_writer(file),
            path: path.display().to_string(),
        };
        out.write_strings(header.iter().copied())?;
        Ok(out)
    }

    fn write_strings<'a>(&mut self, fields: impl IntoIterator<Item = &'a str>) -> CliResult<()> {
        self.inner.write_record(fields).map_err(|e| self.err(e))
    }

    fn err(&self, e: csv::Error) -> CliError {
        CliError::io(format!("cannot write {}", self.path), std::io::Error::other(e))
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) -> CliResult<()> {
        let fields: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::Num(v) => g15(*v),
                Cell::Int(v) => v.to_string(),
                Cell::Text(s) => s.to_string(),
            })
            .collect();
        self.inner.write_record(&fields).map_err(|e| self.err(e))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.inner
            .flush()
            .map_err(|e| CliError::io(format!("cannot write {}", self.path), e))
    }
}

pub fn create_file(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| CliError::io(format!("cannot create {}", path.display()), e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}", dir.display()), e))
}

pub fn write_all(mut file: File, bytes: &[u8], path: &Path) -> CliResult<()> {
    file.write_all(bytes)
        .map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_numeric_csv() {
        let t = Table::from_reader("a,b\n1,2\n3, 4.5\n".as_bytes()).unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.data, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.5]));
        let (names, x, y) = t.split_response(Some("b")).unwrap();
        assert_eq!(names, vec!["a"]);
        assert_eq!(x.column(0).as_slice(), &[1.0, 3.0]);
        assert_eq!(y.unwrap().as_slice(), &[2.0, 4.5]);
    }

    #[test]
    fn rejects_malformed_tables() {
        for bad in ["a,b\n1,x\n", "a,b\n", "a,a\n1,2\n", "a,b\n1,2,3\n", "a,b\n1,NaN\n", "a,\n1,2\n"] {
            let err = Table::from_reader(bad.as_bytes()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad:?}");
        }
        let t = Table::from_reader("a,b\n1,2\n".as_bytes()).unwrap();
        assert_eq!(t.split_response(Some("y")).unwrap_err().exit_code(), 2);
    }
}
