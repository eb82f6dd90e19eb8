//! Field dumps: CSV text and a little-endian f64 raster with a fixed 64-byte
//! text header.
//!
//! Raster header: `QDR1 n c0 c1 [c2] o0 o1 [o2] h`, space separated, padded
//! with spaces to 63 bytes and terminated by `\n`. Values follow in node
//! order (x0 fastest).

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{QdomError, Result};
use crate::grid::{Grid, ScalarField};

pub const RASTER_MAGIC: &str = "QDR1";
pub const RASTER_HEADER_LEN: usize = 64;

pub fn write_csv<W: Write>(field: &ScalarField, out: W) -> Result<()> {
    let g = field.grid();
    let n = g.n();
    let mut w = BufWriter::new(out);
    let header = if n == 2 {
        "x0,x1,value"
    } else {
        "x0,x1,x2,value"
    };
    writeln!(w, "{header}")?;
    for (i, v) in field.values().iter().enumerate() {
        let p = g.point(i);
        for x in &p[..n] {
            write!(w, "{x},")?;
        }
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(field: &ScalarField, path: &Path) -> Result<()> {
    write_csv(field, std::fs::File::create(path)?)
}

fn header_line(g: &Grid, fmt: impl Fn(f64) -> String) -> String {
    let n = g.n();
    let mut parts = vec![RASTER_MAGIC.to_string(), n.to_string()];
    parts.extend(g.cells()[..n].iter().map(|c| c.to_string()));
    parts.extend(g.origin()[..n].iter().map(|&o| fmt(o)));
    parts.push(fmt(g.h()));
    parts.join(" ")
}

fn raster_header(g: &Grid) -> Result<Vec<u8>> {
    let mut line = header_line(g, |x| format!("{x}"));
    if line.len() > RASTER_HEADER_LEN - 1 {
        line = header_line(g, |x| format!("{x:.9e}"));
    }
    if line.len() > RASTER_HEADER_LEN - 1 {
        return Err(QdomError::Format(
            "raster header does not fit in 64 bytes".into(),
        ));
    }
    let mut bytes = line.into_bytes();
    bytes.resize(RASTER_HEADER_LEN - 1, b' ');
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_raster<W: Write>(field: &ScalarField, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(&raster_header(field.grid())?)?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_raster_file(field: &ScalarField, path: &Path) -> Result<()> {
    write_raster(field, std::fs::File::create(path)?)
}

pub fn read_raster<R: Read>(input: R) -> Result<ScalarField> {
    let mut r = BufReader::new(input);
    let mut head = vec![0u8; RASTER_HEADER_LEN];
    r.read_exact(&mut head)
        .map_err(|_| QdomError::Format("raster shorter than its header".into()))?;
    let text = std::str::from_utf8(&head)
        .map_err(|_| QdomError::Format("raster header is not text".into()))?;
    let mut it = text.split_whitespace();
    if it.next() != Some(RASTER_MAGIC) {
        return Err(QdomError::Format("missing raster magic".into()));
    }
    let bad = |what: &str| QdomError::Format(format!("raster header: bad {what}"));
    let n: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("dimension"))?;
    if n != 2 && n != 3 {
        return Err(bad("dimension"));
    }
    let cells: Vec<usize> = (0..n)
        .map(|_| {
            it.next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("cells"))
        })
        .collect::<Result<_>>()?;
    let origin: Vec<f64> = (0..n)
        .map(|_| {
            it.next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("origin"))
        })
        .collect::<Result<_>>()?;
    let h: f64 = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("spacing"))?;
    let extent: Vec<f64> = cells.iter().map(|&c| c as f64 * h).collect();
    let grid = Grid::new(n, &origin, &extent, &cells)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut buf = [0u8; 8];
    for _ in 0..grid.len() {
        r.read_exact(&mut buf)
            .map_err(|_| QdomError::Format("raster payload truncated".into()))?;
        values.push(f64::from_le_bytes(buf));
    }
    if r.fill_buf()?.first().is_some() {
        return Err(QdomError::Format(
            "trailing bytes after raster payload".into(),
        ));
    }
    ScalarField::new(grid, values)
}

pub fn read_raster_file(path: &Path) -> Result<ScalarField> {
    read_raster(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_round_trip_2d_and_3d() {
        let g = Grid::new(2, &[-1.5, -2.0], &[3.0, 4.0], &[24, 32]).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] * 3.0 - x[1].sin());
        let mut buf = Vec::new();
        write_raster(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 64 + 8 * g.len());
        assert_eq!(buf[63], b'\n');
        let back = read_raster(&buf[..]).unwrap();
        assert_eq!(back, f);

        let g = Grid::centered(3, 1.0, 16).unwrap();
        let f = ScalarField::from_fn(g, |x| x[2]);
        let mut buf = Vec::new();
        write_raster(&f, &mut buf).unwrap();
        assert_eq!(read_raster(&buf[..]).unwrap(), f);
    }

    #[test]
    fn raster_rejects_garbage() {
        assert!(read_raster(&b"nope"[..]).is_err());
        let mut buf = vec![b' '; 64];
        buf[..4].copy_from_slice(b"QDR1");
        assert!(read_raster(&buf[..]).is_err());
    }

    #[test]
    fn csv_has_header_and_one_row_per_node() {
        let g = Grid::centered(2, 1.0, 16).unwrap();
        let f = ScalarField::constant(g, 2.5);
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "x0,x1,value");
        assert_eq!(lines.len(), 1 + 256);
        assert_eq!(lines[1], "-0.9375,-0.9375,2.5");
    }
}
