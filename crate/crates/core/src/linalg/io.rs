use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::matrix::Matrix;

/// Reads a headerless CSV of decimal rows.
pub fn read_csv_from<R: Read>(reader: R) -> Result<Matrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("line {}: {e}", line + 1)))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: bad number {f:?}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Format("empty matrix".into()));
    }
    Matrix::from_rows(&rows)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Matrix<f64>> {
    let f = std::fs::File::open(path.as_ref())?;
    read_csv_from(f)
}

/// Writes rows with Rust's shortest round-trip float formatting.
pub fn write_csv_to<W: Write>(m: &Matrix<f64>, mut w: W) -> Result<()> {
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn write_csv(m: &Matrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(f);
    write_csv_to(m, &mut w)?;
    w.flush()?;
    Ok(())
}
