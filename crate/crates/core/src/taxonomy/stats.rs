use serde::Serialize;

use super::scheme::ClassScheme;
use crate::error::{Error, Result};
use crate::raster::GeoGrid;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaRow {
    pub class_id: u32,
    pub class_name: String,
    pub pixels: u64,
    pub area_ha: f64,
    pub share_percent: f64,
}

/// Per-class pixel counts, hectares and share of all non-nodata pixels.
/// Shares are all zero for a grid without valid pixels.
pub fn area_stats(grid: &GeoGrid, scheme: &ClassScheme) -> Result<Vec<AreaRow>> {
    let (labels, nodata) = grid.labels()?;
    let mut counts = vec![0u64; scheme.len()];
    for &v in labels {
        if Some(v) == nodata {
            continue;
        }
        *counts.get_mut(v as usize).ok_or_else(|| {
            Error::SchemeMismatch(format!("label {v} is not in the {}-class scheme", scheme.len()))
        })? += 1;
    }
    let px_ha = grid.pixel_size() * grid.pixel_size() / 1e4;
    let total: u64 = counts.iter().sum();
    Ok(scheme
        .classes()
        .iter()
        .zip(&counts)
        .map(|(c, &n)| AreaRow {
            class_id: c.id,
            class_name: c.name.clone(),
            pixels: n,
            area_ha: n as f64 * px_ha,
            share_percent: if total == 0 {
                0.0
            } else {
                100.0 * n as f64 / total as f64
            },
        })
        .collect())
}

/// Share in percent of each area in `areas`.
pub fn shares_percent(areas: &[f64]) -> Vec<f64> {
    let total: f64 = areas.iter().sum();
    areas.iter().map(|a| 100.0 * a / total).collect()
}

pub fn area_stats_csv(rows: &[AreaRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(vec![]);
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
