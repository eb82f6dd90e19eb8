use std::path::{Path, PathBuf};

use qdom_core::io::{write_csv_file, write_raster_file};
use qdom_core::{Mask, Result, ScalarField};

use crate::config::{Format, OutputBlock};

/// Binary PGM (P5) of a 2D field, linear gray ramp over [min, max], x1
/// increasing upwards. A constant field maps to black.
pub fn pgm_bytes(field: &ScalarField) -> Vec<u8> {
    let g = field.grid();
    let [nx, ny, _] = g.cells();
    let (lo, hi) = (field.min(), field.max());
    let span = hi - lo;
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for row in (0..ny).rev() {
        for col in 0..nx {
            let v = field.values()[g.index([col, row, 0])];
            let level = if span > 0.0 {
                ((v - lo) / span * 255.0).round()
            } else {
                0.0
            };
            out.push(level.clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Central slices of a 3D field normal to each axis, as 2D fields.
pub fn axis_slices(field: &ScalarField) -> Result<Vec<ScalarField>> {
    let g = *field.grid();
    let c = g.cells();
    let o = g.origin();
    let h = g.h();
    let mut out = Vec::new();
    for axis in 0..3 {
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mid = c[axis] / 2;
        let sg = qdom_core::Grid::new(
            2,
            &[o[a], o[b]],
            &[c[a] as f64 * h, c[b] as f64 * h],
            &[c[a], c[b]],
        )?;
        let mut vals = Vec::with_capacity(c[a] * c[b]);
        for j in 0..c[b] {
            for i in 0..c[a] {
                let mut idx = [0usize; 3];
                idx[axis] = mid;
                idx[a] = i;
                idx[b] = j;
                vals.push(field.values()[g.index(idx)]);
            }
        }
        out.push(ScalarField::new(sg, vals)?);
    }
    Ok(out)
}

/// Writes a heatmap for `field`: one image in 2D, three central slices in 3D.
pub fn write_heatmap(field: &ScalarField, path: &Path) -> Result<Vec<PathBuf>> {
    if field.grid().n() == 2 {
        std::fs::write(path, pgm_bytes(field))?;
        return Ok(vec![path.to_path_buf()]);
    }
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("field")
        .to_string();
    let mut written = Vec::new();
    for (axis, slice) in axis_slices(field)?.iter().enumerate() {
        let p = path.with_file_name(format!("{stem}_x{axis}.pgm"));
        std::fs::write(&p, pgm_bytes(slice))?;
        written.push(p);
    }
    Ok(written)
}

/// Collects the files a run writes into its output directory.
pub struct Sink {
    pub dir: PathBuf,
    block: OutputBlock,
    pub files: Vec<String>,
}

impl Sink {
    pub fn new(dir: PathBuf, block: OutputBlock) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Sink {
            dir,
            block,
            files: Vec::new(),
        })
    }

    fn record(&mut self, p: &Path) {
        if let Some(name) = p.file_name().and_then(|s| s.to_str()) {
            self.files.push(name.to_string());
        }
    }

    pub fn field(&mut self, name: &str, field: &ScalarField) -> Result<()> {
        for f in self.block.formats.clone() {
            let p = match f {
                Format::Csv => self.dir.join(format!("{name}.csv")),
                Format::Raster => self.dir.join(format!("{name}.qdr")),
            };
            match f {
                Format::Csv => write_csv_file(field, &p)?,
                Format::Raster => write_raster_file(field, &p)?,
            }
            self.record(&p);
        }
        if self.block.heatmap {
            for p in write_heatmap(field, &self.dir.join(format!("{name}.pgm")))? {
                self.record(&p);
            }
        }
        Ok(())
    }

    pub fn mask(&mut self, name: &str, mask: &Mask) -> Result<()> {
        self.field(name, &mask.to_field())
    }

    /// +1 on `plus`, -1 on `minus`, 0 elsewhere: a three-level image.
    pub fn phases(&mut self, name: &str, plus: &Mask, minus: &Mask) -> Result<()> {
        let f = plus.to_field().sub(&minus.to_field())?;
        self.field(name, &f)
    }

    pub fn sorted_files(&self) -> Vec<String> {
        let mut f = self.files.clone();
        f.sort();
        f.dedup();
        f
    }
}
