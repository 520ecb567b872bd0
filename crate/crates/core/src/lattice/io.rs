//! Flat field layouts: row-major over cells, real and imaginary parts interleaved.

use super::{Field, Grid};
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use std::io::{Read, Write};

/// CSV with header `re,im` and one row per cell.
pub fn write_field_csv<W: Write>(field: &Field, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["re", "im"])?;
    for v in field.values() {
        w.write_record([format!("{:e}", v.re), format!("{:e}", v.im)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_csv<R: Read>(grid: Grid, reader: R) -> Result<Field> {
    let mut r = csv::Reader::from_reader(reader);
    let mut values = Vec::with_capacity(grid.cell_count());
    for rec in r.records() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::Precondition("short CSV row".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Precondition(format!("bad CSV number: {e}")))
        };
        values.push(C64::new(parse(0)?, parse(1)?));
    }
    Field::from_values(grid, values)
}

/// Little-endian `f64` pairs, no header.
pub fn write_field_binary<W: Write>(field: &Field, mut writer: W) -> Result<()> {
    for v in field.values() {
        writer.write_all(&v.re.to_le_bytes())?;
        writer.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_binary<R: Read>(grid: Grid, mut reader: R) -> Result<Field> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != 16 * grid.cell_count() {
        return Err(Error::Precondition(format!("expected {} bytes, found {}", 16 * grid.cell_count(), bytes.len())));
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    Field::from_values(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_are_exact() {
        let g = Grid::new(2, 4, 1.0).unwrap();
        let f = Field::from_fn(g, |x| C64::new(x[0].exp() / 3.0, -x[1] * 1e-300));
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        assert_eq!(read_field_csv(g, buf.as_slice()).unwrap(), f);
        let mut bin = Vec::new();
        write_field_binary(&f, &mut bin).unwrap();
        assert_eq!(bin.len(), 16 * 16);
        assert_eq!(read_field_binary(g, bin.as_slice()).unwrap(), f);
        assert!(read_field_binary(g, &bin[..100]).is_err());
    }
}
