//! Plain-text single-band grid format for fixtures.
//!
//! ```text
//! width 3
//! height 2
//! pixel_size 0.2
//! origin 500000 5270000
//! epsg 32633
//! nodata -9999
//! kind continuous
//! tag DTM
//! 1.0 2.0 3.0
//! 4.0 5.0 -9999
//! ```
//!
//! `nodata` may be `none`. `kind` and `tag` are optional: without them a
//! grid whose every value is an unsigned integer is read as a categorical
//! LABEL band, anything else as a continuous band.

use std::fmt::Write as _;
use std::path::Path;

use super::grid::{Band, BandData, BandKind, BandTag, GeoGrid, GridGeometry};
use crate::error::{Error, Result};

pub fn write_text_grid(grid: &GeoGrid, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(grid)?).map_err(|e| Error::io_at(path, e))
}

pub fn read_text_grid(path: &Path) -> Result<GeoGrid> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    parse_text(&text)
}

pub fn to_text(grid: &GeoGrid) -> Result<String> {
    if grid.bands().len() != 1 {
        return Err(Error::UnsupportedFormat("text grids hold exactly one band".into()));
    }
    let g = grid.geometry();
    let band = &grid.bands()[0];
    let mut out = String::new();
    let nodata = band
        .nodata_f64()
        .map(|v| v.to_string())
        .unwrap_or_else(|| "none".into());
    let _ = writeln!(out, "width {}", g.width);
    let _ = writeln!(out, "height {}", g.height);
    let _ = writeln!(out, "pixel_size {}", g.pixel_size);
    let _ = writeln!(out, "origin {} {}", g.origin.0, g.origin.1);
    let _ = writeln!(out, "epsg {}", g.epsg);
    let _ = writeln!(out, "nodata {nodata}");
    let _ = writeln!(out, "kind {}", band.kind());
    let _ = writeln!(out, "tag {}", band.tag());
    for r in 0..g.height {
        let row = r * g.width..(r + 1) * g.width;
        let line = match band.data() {
            BandData::Categorical { values, .. } => {
                values[row].iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
            }
            BandData::Continuous { values, .. } => {
                values[row].iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn header_value<'a>(key: &str, line: Option<&'a str>) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::Parse(format!("missing header line {key:?}")))?;
    let mut parts = line.trim().splitn(2, char::is_whitespace);
    match (parts.next(), parts.next()) {
        (Some(k), Some(v)) if k.eq_ignore_ascii_case(key) => Ok(v.trim()),
        _ => Err(Error::Parse(format!("expected header {key:?}, found {line:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("invalid {key} value {s:?}")))
}

pub fn parse_text(text: &str) -> Result<GeoGrid> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .peekable();

    let width: usize = parse_num("width", header_value("width", lines.next())?)?;
    let height: usize = parse_num("height", header_value("height", lines.next())?)?;
    let pixel_size: f64 = parse_num("pixel_size", header_value("pixel_size", lines.next())?)?;
    let origin = header_value("origin", lines.next())?;
    let mut origin_parts = origin.split_whitespace();
    let ox: f64 = parse_num("origin", origin_parts.next().unwrap_or(""))?;
    let oy: f64 = parse_num("origin", origin_parts.next().unwrap_or(""))?;
    let epsg: u32 = parse_num("epsg", header_value("epsg", lines.next())?)?;
    let nodata_raw = header_value("nodata", lines.next())?;
    let nodata: Option<f64> = if nodata_raw.eq_ignore_ascii_case("none") {
        None
    } else {
        Some(parse_num("nodata", nodata_raw)?)
    };

    let mut kind = None;
    let mut tag = None;
    while let Some(line) = lines.peek() {
        let key = line.split_whitespace().next().unwrap_or("");
        if key.eq_ignore_ascii_case("kind") {
            kind = Some(match header_value("kind", lines.next())? {
                "categorical" => BandKind::Categorical,
                "continuous" => BandKind::Continuous,
                other => return Err(Error::Parse(format!("unknown kind {other:?}"))),
            });
        } else if key.eq_ignore_ascii_case("tag") {
            tag = Some(header_value("tag", lines.next())?.parse::<BandTag>()?);
        } else {
            break;
        }
    }

    let tokens: Vec<&str> = lines.flat_map(str::split_whitespace).collect();
    if tokens.len() != width * height {
        return Err(Error::Parse(format!(
            "expected {} values, found {}",
            width * height,
            tokens.len()
        )));
    }
    let all_labels = tokens.iter().all(|t| t.parse::<u32>().is_ok());
    let kind = kind.unwrap_or(if all_labels {
        BandKind::Categorical
    } else {
        BandKind::Continuous
    });

    let geometry = GridGeometry::new(width, height, pixel_size, (ox, oy), epsg);
    let band = match kind {
        BandKind::Categorical => {
            let values = tokens
                .iter()
                .map(|t| parse_num::<u32>("label", t))
                .collect::<Result<Vec<_>>>()?;
            let nodata = nodata
                .map(|v| {
                    (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64)
                        .then_some(v as u32)
                        .ok_or_else(|| Error::Parse(format!("categorical nodata {v} is not a label")))
                })
                .transpose()?;
            Band::categorical(tag.unwrap_or(BandTag::Label), values, nodata)?
        }
        BandKind::Continuous => {
            let values = tokens
                .iter()
                .map(|t| parse_num::<f64>("value", t))
                .collect::<Result<Vec<_>>>()?;
            Band::continuous(tag.unwrap_or(BandTag::Generic(0)), values, nodata)?
        }
    };
    GeoGrid::new(geometry, vec![band])
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str =
        "width 3\nheight 2\npixel_size 0.2\norigin 500000 5270000\nepsg 32633\nnodata 255\n0 1 2\n2 255 1\n";

    #[test]
    fn parses_labels_without_kind_line() {
        let g = parse_text(FIXTURE).unwrap();
        assert_eq!(g.width(), 3);
        assert_eq!(g.height(), 2);
        assert_eq!(g.bands()[0].tag(), BandTag::Label);
        assert_eq!(g.labels().unwrap(), (&[0, 1, 2, 2, 255, 1][..], Some(255)));
        assert_eq!(g.geometry().origin, (500_000.0, 5_270_000.0));
    }

    #[test]
    fn text_round_trip_is_identity() {
        let geometry = GridGeometry::new(2, 2, 1.0, (0.0, 2.0), 32633);
        let g = GeoGrid::from_values(geometry, BandTag::Dtm, vec![1.5, -2.25, 1e-7, -9999.0], Some(-9999.0)).unwrap();
        let back = parse_text(&to_text(&g).unwrap()).unwrap();
        assert_eq!(back.geometry(), g.geometry());
        assert_eq!(back.values().unwrap(), g.values().unwrap());
        assert_eq!(back.bands()[0].tag(), BandTag::Dtm);
    }

    #[test]
    fn reports_value_count_mismatch() {
        let bad = FIXTURE.replace("2 255 1\n", "2 255\n");
        assert!(matches!(parse_text(&bad), Err(Error::Parse(_))));
    }

    #[test]
    fn reports_missing_header() {
        assert!(matches!(parse_text("width 3\n"), Err(Error::Parse(_))));
    }
}
