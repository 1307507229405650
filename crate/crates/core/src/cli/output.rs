//! CSV writers. Floats are printed with 17 significant digits so that every
//! value reads back bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::grid::Grid1D;
use crate::scheme::State;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header line followed by preformatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    f.flush()?;
    Ok(())
}

/// `x, c_1, ..., c_n` per cell.
pub fn write_final_state(path: &Path, s: &State, g: &Grid1D) -> Result<()> {
    let n = s.n();
    let mut header = vec!["x".to_string()];
    header.extend((1..=n).map(|i| format!("c_{i}")));
    let rows: Vec<String> = g
        .cell_centers()
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            std::iter::once(x)
                .chain(s.c.iter().map(|ci| ci[j]))
                .map(fmt_f64)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    write_csv(path, &header.join(","), &rows)
}
