//! Elevation-derived layers: nDSM, slope, aspect, roughness, curvature.
//!
//! All 3x3 derivatives use Horn's weighted differences. Aspect is the
//! compass bearing of steepest descent, clockwise from north in [0, 360),
//! with -1 for exactly flat cells. Curvature is the general (total)
//! curvature `-2(D + E)` of the fitted quadratic in 1/m: positive on
//! convex surfaces (peaks, ridges), negative on concave ones (pits,
//! valleys). Border pixels and windows touching nodata are nodata.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{is_nodata, Band, BandTag, GeoGrid, DEFAULT_CONTINUOUS_NODATA};

/// Aspect value for cells with zero gradient.
pub const FLAT_ASPECT: f64 = -1.0;

/// nDSM values below this point to misregistration and are zeroed; small
/// negatives above it are sensor noise and kept.
pub const NDSM_NOISE_FLOOR: f64 = -0.5;

fn elevation(grid: &GeoGrid) -> Result<(&[f64], Option<f64>)> {
    let (w, h) = (grid.width(), grid.height());
    if w < 3 || h < 3 {
        return Err(Error::GridTooSmall {
            width: w,
            height: h,
            required: 3,
        });
    }
    grid.values()
}

/// `DSM - DTM` in metres above ground. Values below [`NDSM_NOISE_FLOOR`]
/// are set to 0.
pub fn ndsm(dsm: &GeoGrid, dtm: &GeoGrid) -> Result<GeoGrid> {
    dsm.geometry().check_coregistered(dtm.geometry())?;
    let (s, snd) = dsm.values()?;
    let (t, tnd) = dtm.values()?;
    let nd = snd.or(tnd).unwrap_or(DEFAULT_CONTINUOUS_NODATA);
    let mut any_nd = false;
    let out: Vec<f64> = s
        .iter()
        .zip(t)
        .map(|(&a, &b)| {
            if is_nodata(a, snd) || is_nodata(b, tnd) {
                any_nd = true;
                nd
            } else {
                let d = a - b;
                if d < NDSM_NOISE_FLOOR {
                    0.0
                } else {
                    d
                }
            }
        })
        .collect();
    GeoGrid::from_values(
        *dsm.geometry(),
        BandTag::Ndsm,
        out,
        (any_nd || snd.is_some() || tnd.is_some()).then_some(nd),
    )
}

/// Runs `f` on every interior 3x3 window (values in row-major order a..i)
/// and writes nodata elsewhere.
fn map_windows<F>(grid: &GeoGrid, f: F) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64; 9]) -> f64 + Sync,
{
    let (z, nodata) = elevation(grid)?;
    let (w, h) = (grid.width(), grid.height());
    let nd = nodata.unwrap_or(DEFAULT_CONTINUOUS_NODATA);
    let mut out = vec![nd; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        if r == 0 || r + 1 == h {
            return;
        }
        'cells: for c in 1..w - 1 {
            let mut win = [0.0; 9];
            for dr in 0..3 {
                for dc in 0..3 {
                    let v = z[(r + dr - 1) * w + c + dc - 1];
                    if is_nodata(v, nodata) {
                        continue 'cells;
                    }
                    win[dr * 3 + dc] = v;
                }
            }
            row[c] = f(&win);
        }
    });
    Ok((out, nd))
}

/// Horn gradient as (dz/dx east, dz/dy north).
#[inline]
fn horn(win: &[f64; 9], px: f64) -> (f64, f64) {
    let [a, b, c, d, _, f, g, h, i] = *win;
    let dzdx = ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * px);
    // Rows run southwards, so the north derivative is top minus bottom.
    let dzdy = ((a + 2.0 * b + c) - (g + 2.0 * h + i)) / (8.0 * px);
    (dzdx, dzdy)
}

#[inline]
fn slope_deg(dzdx: f64, dzdy: f64) -> f64 {
    dzdx.hypot(dzdy).atan().to_degrees()
}

#[inline]
fn aspect_deg(dzdx: f64, dzdy: f64) -> f64 {
    if dzdx == 0.0 && dzdy == 0.0 {
        return FLAT_ASPECT;
    }
    // Downslope direction is -grad; bearing = atan2(east, north).
    let b = (-dzdx).atan2(-dzdy).to_degrees();
    // `+ 0.0` turns a due-north -0.0 into 0.0.
    let b = if b < 0.0 { b + 360.0 } else { b + 0.0 };
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}

fn continuous(grid: &GeoGrid, tag: BandTag, values: Vec<f64>, nd: f64) -> Result<GeoGrid> {
    GeoGrid::new(*grid.geometry(), vec![Band::continuous(tag, values, Some(nd))?])
}

/// Slope in degrees and aspect in degrees, as two single-band grids.
pub fn slope_aspect(dtm: &GeoGrid) -> Result<(GeoGrid, GeoGrid)> {
    let px = dtm.pixel_size();
    let (slope, nd) = map_windows(dtm, |w| {
        let (x, y) = horn(w, px);
        slope_deg(x, y)
    })?;
    let (aspect, _) = map_windows(dtm, |w| {
        let (x, y) = horn(w, px);
        aspect_deg(x, y)
    })?;
    Ok((
        continuous(dtm, BandTag::Slope, slope, nd)?,
        continuous(dtm, BandTag::Aspect, aspect, nd)?,
    ))
}

/// Population standard deviation of elevation in a `window x window`
/// neighbourhood (odd, at least 3). Pixels closer than `window / 2` to the
/// border, or whose window holds nodata, are nodata.
pub fn roughness(dtm: &GeoGrid, window: usize) -> Result<GeoGrid> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "roughness window must be odd and at least 3, got {window}"
        )));
    }
    let (z, nodata) = dtm.values()?;
    let (w, h) = (dtm.width(), dtm.height());
    if w < window || h < window {
        return Err(Error::GridTooSmall {
            width: w,
            height: h,
            required: window,
        });
    }
    let half = window / 2;
    let n = (window * window) as f64;
    let nd = nodata.unwrap_or(DEFAULT_CONTINUOUS_NODATA);
    let mut out = vec![nd; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        if r < half || r + half >= h {
            return;
        }
        let mut buf = Vec::with_capacity(window * window);
        'cells: for c in half..w - half {
            buf.clear();
            for rr in r - half..=r + half {
                for &v in &z[rr * w + c - half..=rr * w + c + half] {
                    if is_nodata(v, nodata) {
                        continue 'cells;
                    }
                    buf.push(v);
                }
            }
            let mean = buf.iter().sum::<f64>() / n;
            let var = buf.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            row[c] = var.sqrt();
        }
    });
    continuous(dtm, BandTag::Roughness, out, nd)
}

/// General curvature in 1/m, positive on convex surfaces.
pub fn curvature(dtm: &GeoGrid) -> Result<GeoGrid> {
    let l2 = dtm.pixel_size() * dtm.pixel_size();
    let (out, nd) = map_windows(dtm, |w| {
        let d = ((w[3] + w[5]) / 2.0 - w[4]) / l2;
        let e = ((w[1] + w[7]) / 2.0 - w[4]) / l2;
        -2.0 * (d + e)
    })?;
    continuous(dtm, BandTag::Curvature, out, nd)
}

/// All terrain layers of one epoch.
#[derive(Debug, Clone)]
pub struct TerrainStack {
    pub ndsm: GeoGrid,
    pub slope: GeoGrid,
    pub aspect: GeoGrid,
    pub roughness: GeoGrid,
    pub curvature: GeoGrid,
}

impl TerrainStack {
    /// Every layer as one multi-band grid (NDSM, SLOPE, ASPECT, ROUGHNESS, CURVATURE).
    pub fn to_grid(&self) -> Result<GeoGrid> {
        let bands = [&self.ndsm, &self.slope, &self.aspect, &self.roughness, &self.curvature]
            .iter()
            .map(|g| g.bands()[0].clone())
            .collect();
        GeoGrid::new(*self.ndsm.geometry(), bands)
    }
}

pub fn derive_terrain(dtm: &GeoGrid, dsm: &GeoGrid, roughness_window: usize) -> Result<TerrainStack> {
    let (slope, aspect) = slope_aspect(dtm)?;
    Ok(TerrainStack {
        ndsm: ndsm(dsm, dtm)?,
        slope,
        aspect,
        roughness: roughness(dtm, roughness_window)?,
        curvature: curvature(dtm)?,
    })
}
