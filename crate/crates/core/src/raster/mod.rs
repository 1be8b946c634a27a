//! Georeferenced rasters: in-memory grids, GeoTIFF and text I/O,
//! resampling and band stacking.

mod geotiff;
mod grid;
mod resample;
mod stack;
mod text;

use std::io::Read;
use std::path::Path;

pub use geotiff::{read_geotiff, write_geotiff};
pub use grid::{
    is_nodata, Band, BandData, BandKind, BandTag, DataType, Extent, GeoGrid, GridGeometry, DEFAULT_CONTINUOUS_NODATA,
};
pub use resample::resample_to;
pub use stack::stack;
pub use text::{parse_text, read_text_grid, to_text, write_text_grid};

use crate::error::{Error, Result};

fn is_text_path(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("txt" | "grid")
    )
}

/// Reads a raster, choosing the format from the extension (`.txt`/`.grid`
/// are text grids) or else from the TIFF magic bytes.
pub fn read_raster(path: &Path) -> Result<GeoGrid> {
    if is_text_path(path) {
        return read_text_grid(path);
    }
    let mut magic = [0u8; 4];
    let mut f = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    let n = f.read(&mut magic).map_err(|e| Error::io_at(path, e))?;
    match &magic[..n] {
        [b'I', b'I', 42, 0] | [b'M', b'M', 0, 42] | [b'I', b'I', 43, 0] | [b'M', b'M', 0, 43] => read_geotiff(path),
        _ => Err(Error::UnsupportedFormat(format!(
            "{} is neither a TIFF nor a text grid",
            path.display()
        ))),
    }
}

/// Writes a text grid for `.txt`/`.grid` paths, a GeoTIFF otherwise.
pub fn write_raster(grid: &GeoGrid, path: &Path) -> Result<()> {
    if is_text_path(path) {
        write_text_grid(grid, path)
    } else {
        write_geotiff(grid, path)
    }
}
