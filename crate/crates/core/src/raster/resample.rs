use rayon::prelude::*;

use super::grid::{is_nodata, Band, BandData, Extent, GeoGrid, GridGeometry, DEFAULT_CONTINUOUS_NODATA};
use crate::error::{Error, Result};

/// Resamples every band of `grid` onto the lattice with `target_pixel_size`
/// covering `target_extent`. Categorical bands use nearest neighbour,
/// continuous bands bilinear interpolation between pixel centres (edge
/// pixels clamp to the outermost centres). A bilinear output is nodata as
/// soon as one neighbour with non-zero weight is nodata. Output pixels whose
/// centre falls outside the source are nodata.
pub fn resample_to(grid: &GeoGrid, target_pixel_size: f64, target_extent: Extent) -> Result<GeoGrid> {
    if !(target_pixel_size.is_finite() && target_pixel_size > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target pixel size must be positive, got {target_pixel_size}"
        )));
    }
    let span_x = target_extent.max_x - target_extent.min_x;
    let span_y = target_extent.max_y - target_extent.min_y;
    let cols = (span_x / target_pixel_size).round();
    let rows = (span_y / target_pixel_size).round();
    let tol = 1e-6 * target_pixel_size;
    if cols < 1.0
        || rows < 1.0
        || (cols * target_pixel_size - span_x).abs() > tol
        || (rows * target_pixel_size - span_y).abs() > tol
    {
        return Err(Error::InvalidParameter(format!(
            "target extent {span_x} x {span_y} is not a whole number of {target_pixel_size} pixels"
        )));
    }
    if !grid.geometry().extent().intersects(&target_extent) {
        return Err(Error::EmptyIntersection);
    }

    let target = GridGeometry::new(
        cols as usize,
        rows as usize,
        target_pixel_size,
        (target_extent.min_x, target_extent.max_y),
        grid.geometry().epsg,
    );
    let bands = grid
        .bands()
        .iter()
        .map(|band| resample_band(band, grid.geometry(), &target))
        .collect::<Result<Vec<_>>>()?;
    GeoGrid::new(target, bands)
}

/// Source pixel-centre coordinates of the target pixel (row, col).
#[inline]
fn source_coords(src: &GridGeometry, dst: &GridGeometry, row: usize, col: usize) -> (f64, f64) {
    let x = dst.origin.0 + (col as f64 + 0.5) * dst.pixel_size;
    let y = dst.origin.1 - (row as f64 + 0.5) * dst.pixel_size;
    ((x - src.origin.0) / src.pixel_size, (src.origin.1 - y) / src.pixel_size)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + t * (b - a)
    }
}

/// Lower neighbour index and fractional weight along one axis.
#[inline]
fn axis_cell(f: f64, n: usize) -> (usize, f64) {
    let f = f.clamp(0.0, (n - 1) as f64);
    if n == 1 {
        return (0, 0.0);
    }
    let i0 = (f.floor() as usize).min(n - 2);
    (i0, f - i0 as f64)
}

fn resample_band(band: &Band, src: &GridGeometry, dst: &GridGeometry) -> Result<Band> {
    let (sw, sh) = (src.width as f64, src.height as f64);
    let inside = |u: f64, v: f64| u >= 0.0 && u < sw && v >= 0.0 && v < sh;
    let data = match band.data() {
        BandData::Categorical { values, nodata } => {
            let nd = nodata.unwrap_or_else(|| band.dtype().default_label_nodata());
            let mut out = vec![nd; dst.len()];
            out.par_chunks_mut(dst.width).enumerate().for_each(|(r, row)| {
                for (c, slot) in row.iter_mut().enumerate() {
                    let (u, v) = source_coords(src, dst, r, c);
                    if inside(u, v) {
                        *slot = values[v.floor() as usize * src.width + u.floor() as usize];
                    }
                }
            });
            let nodata = if out.contains(&nd) || nodata.is_some() {
                Some(nd)
            } else {
                None
            };
            BandData::Categorical { values: out, nodata }
        }
        BandData::Continuous { values, nodata } => {
            let nd = nodata.unwrap_or(DEFAULT_CONTINUOUS_NODATA);
            let mut out = vec![nd; dst.len()];
            let flags: Vec<bool> = out
                .par_chunks_mut(dst.width)
                .enumerate()
                .map(|(r, row)| {
                    let mut row_nodata = false;
                    for (c, slot) in row.iter_mut().enumerate() {
                        let (u, v) = source_coords(src, dst, r, c);
                        if !inside(u, v) {
                            row_nodata = true;
                            continue;
                        }
                        let (i0, tx) = axis_cell(u - 0.5, src.width);
                        let (j0, ty) = axis_cell(v - 0.5, src.height);
                        let at = |j: usize, i: usize| values[j * src.width + i];
                        let a = at(j0, i0);
                        let b = if tx > 0.0 { at(j0, i0 + 1) } else { a };
                        let (cc, d) = if ty > 0.0 {
                            let cc = at(j0 + 1, i0);
                            (cc, if tx > 0.0 { at(j0 + 1, i0 + 1) } else { cc })
                        } else {
                            (a, b)
                        };
                        if [a, b, cc, d].iter().any(|&s| is_nodata(s, *nodata)) {
                            row_nodata = true;
                            continue;
                        }
                        *slot = lerp(lerp(a, b, tx), lerp(cc, d, tx), ty);
                    }
                    row_nodata
                })
                .collect();
            let any_nodata = flags.into_iter().any(|f| f);
            let nodata = if any_nodata || nodata.is_some() { Some(nd) } else { None };
            BandData::Continuous { values: out, nodata }
        }
    };
    Band::new(band.tag(), band.dtype(), data)
}
