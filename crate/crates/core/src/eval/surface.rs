//! Decision values over a lattice in the 2-D space of a rectangular metric.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metric::MetricShape;
use crate::svm::SvmModel;

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceGrid {
    pub resolution: usize,
    /// `(u, v, h)` in row-major lattice order (v outer, u inner).
    pub cells: Vec<[f64; 3]>,
    /// Transformed support vectors `(u, v, label)`.
    pub support: Vec<[f64; 3]>,
}

/// Lattice of `resolution²` decision values spanning the bounding box of the
/// transformed training points, padded by 10% of its extent on every side.
pub fn surface_grid(model: &SvmModel, resolution: usize) -> Result<SurfaceGrid> {
    if model.metric().shape() != MetricShape::Rectangular(2) {
        return Err(Error::InvalidArgument(format!(
            "surface export needs a rect:2 metric, got {}",
            model.metric().shape()
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument(
            "resolution must be at least 2".into(),
        ));
    }
    let z = model.metric().transform_rows(model.train().features())?;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for i in 0..z.rows() {
        for a in 0..2 {
            lo[a] = lo[a].min(z[(i, a)]);
            hi[a] = hi[a].max(z[(i, a)]);
        }
    }
    for a in 0..2 {
        let pad = 0.1 * (hi[a] - lo[a]).max(1e-12);
        lo[a] -= pad;
        hi[a] += pad;
    }
    let at = |a: usize, k: usize| lo[a] + (hi[a] - lo[a]) * k as f64 / (resolution - 1) as f64;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for kv in 0..resolution {
        let v = at(1, kv);
        for ku in 0..resolution {
            let u = at(0, ku);
            cells.push([u, v, model.decision_transformed(&[u, v])]);
        }
    }
    let labels = model.train().labels();
    let sv = model.support_transformed();
    let support = model
        .support_idx()
        .iter()
        .enumerate()
        .map(|(p, &j)| [sv[(p, 0)], sv[(p, 1)], labels[j]])
        .collect();
    Ok(SurfaceGrid {
        resolution,
        cells,
        support,
    })
}

impl SurfaceGrid {
    /// Write the lattice (`u,v,h`) and the support vectors (`sv_u,sv_v,label`).
    pub fn write_csv(&self, grid: &Path, support: &Path) -> Result<()> {
        let write = |path: &Path, header: &str, rows: &[[f64; 3]], label_col: bool| -> Result<()> {
            let mut f = std::io::BufWriter::new(
                std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
            );
            let io = |e| Error::io(path, e);
            writeln!(f, "{header}").map_err(io)?;
            for r in rows {
                if label_col {
                    writeln!(f, "{},{},{}", r[0], r[1], r[2] as i64).map_err(io)?;
                } else {
                    writeln!(f, "{},{},{}", r[0], r[1], r[2]).map_err(io)?;
                }
            }
            f.flush().map_err(io)
        };
        write(grid, "u,v,h", &self.cells, false)?;
        write(support, "sv_u,sv_v,label", &self.support, true)
    }
}
