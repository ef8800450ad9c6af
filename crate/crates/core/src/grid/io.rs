//! Field files.
//!
//! CSV: a `# hjlab-field d=<d> n=<n>` comment line, a column header, then one
//! row per cell: `index,value[,value]`.
//!
//! Binary: 16-byte header (`HJF1`, then `d`, `n_per_axis` and the payload
//! length in f64 values, each a little-endian u32), followed by the payload as
//! little-endian f64, components interleaved per cell.

use super::{ScalarField, TorusGrid, VectorField};
use crate::error::{Error, Result};
use std::io::{BufRead, Read, Write};

const MAGIC: &[u8; 4] = b"HJF1";

#[derive(Debug, Clone, PartialEq)]
pub struct FieldData {
    pub grid: TorusGrid,
    pub components: usize,
    pub values: Vec<f64>,
}

impl FieldData {
    pub fn from_scalar(f: &ScalarField) -> Self {
        FieldData {
            grid: *f.grid(),
            components: 1,
            values: f.values().to_vec(),
        }
    }

    pub fn from_vector(f: &VectorField) -> Self {
        let d = f.grid().d();
        FieldData {
            grid: *f.grid(),
            components: d,
            values: f.values().iter().flat_map(|v| v[..d].to_vec()).collect(),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        if self.components != 1 {
            return Err(Error::GridMismatch(format!(
                "expected a scalar field, found {} components",
                self.components
            )));
        }
        ScalarField::new(self.grid, self.values)
    }

    pub fn into_vector(self) -> Result<VectorField> {
        let d = self.grid.d();
        if self.components != d {
            return Err(Error::GridMismatch(format!(
                "expected {d} components, found {}",
                self.components
            )));
        }
        let v = self
            .values
            .chunks(d)
            .map(|c| if d == 1 { [c[0], 0.0] } else { [c[0], c[1]] })
            .collect();
        VectorField::new(self.grid, v)
    }
}

pub fn write_csv<W: Write>(mut w: W, data: &FieldData) -> Result<()> {
    writeln!(
        w,
        "# hjlab-field d={} n={}",
        data.grid.d(),
        data.grid.n_per_axis()
    )?;
    write!(w, "index")?;
    for c in 0..data.components {
        write!(w, ",value{c}")?;
    }
    writeln!(w)?;
    for (i, row) in data.values.chunks(data.components).enumerate() {
        write!(w, "{i}")?;
        for v in row {
            write!(w, ",{v:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: 1,
        message: message.into(),
    }
}

pub fn read_csv<R: BufRead>(r: R) -> Result<FieldData> {
    let mut lines = r.lines();
    let head = lines.next().ok_or_else(|| parse_err(1, "empty file"))??;
    let mut d = None;
    let mut n = None;
    for tok in head.trim_start_matches('#').split_whitespace() {
        if let Some(v) = tok.strip_prefix("d=") {
            d = v.parse::<usize>().ok();
        } else if let Some(v) = tok.strip_prefix("n=") {
            n = v.parse::<usize>().ok();
        }
    }
    let (d, n) = match (d, n) {
        (Some(d), Some(n)) => (d, n),
        _ => return Err(parse_err(1, "missing `d=` / `n=` header")),
    };
    let grid = TorusGrid::new(d, n)?;
    let cols = lines
        .next()
        .ok_or_else(|| parse_err(2, "missing column header"))??;
    let components = cols.split(',').count().saturating_sub(1);
    if components == 0 {
        return Err(parse_err(2, "no value columns"));
    }
    let mut values = Vec::with_capacity(grid.len() * components);
    for (k, line) in lines.enumerate() {
        let line = line?;
        let lineno = k + 3;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let idx: usize = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| parse_err(lineno, "bad index"))?;
        if idx != values.len() / components {
            return Err(parse_err(lineno, format!("index {idx} out of order")));
        }
        let row: Vec<f64> = parts
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        if row.len() != components {
            return Err(parse_err(lineno, "wrong number of columns"));
        }
        values.extend(row);
    }
    if values.len() != grid.len() * components {
        return Err(Error::GridMismatch(format!(
            "{} rows for a grid of {} cells",
            values.len() / components,
            grid.len()
        )));
    }
    Ok(FieldData {
        grid,
        components,
        values,
    })
}

pub fn write_binary<W: Write>(mut w: W, data: &FieldData) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(data.grid.d() as u32).to_le_bytes())?;
    w.write_all(&(data.grid.n_per_axis() as u32).to_le_bytes())?;
    w.write_all(&(data.values.len() as u32).to_le_bytes())?;
    for v in &data.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<FieldData> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(parse_err(0, "bad magic"));
    }
    let word = |k: usize| u32::from_le_bytes(head[4 * k..4 * k + 4].try_into().unwrap()) as usize;
    let grid = TorusGrid::new(word(1), word(2))?;
    let len = word(3);
    if len == 0 || len % grid.len() != 0 {
        return Err(Error::GridMismatch(format!(
            "payload of {len} values for a grid of {} cells",
            grid.len()
        )));
    }
    let mut buf = vec![0u8; len * 8];
    r.read_exact(&mut buf)?;
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FieldData {
        grid,
        components: len / grid.len(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScalarField {
        let g = TorusGrid::new(2, 8).unwrap();
        ScalarField::from_fn(g, |x| (x[0] * 3.0).sin() - x[1] / 7.0).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let f = sample();
        let mut buf = Vec::new();
        write_csv(&mut buf, &FieldData::from_scalar(&f)).unwrap();
        let back = read_csv(&buf[..]).unwrap().into_scalar().unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn binary_round_trip_vector() {
        let g = TorusGrid::new(2, 8).unwrap();
        let v = VectorField::from_fn(g, |x| [x[0], -x[1] * 1e-300]).unwrap();
        let mut buf = Vec::new();
        write_binary(&mut buf, &FieldData::from_vector(&v)).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 2 * 64);
        let back = read_binary(&buf[..]).unwrap().into_vector().unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn binary_bad_magic() {
        let buf = [0u8; 16];
        assert!(read_binary(&buf[..]).is_err());
    }
}
