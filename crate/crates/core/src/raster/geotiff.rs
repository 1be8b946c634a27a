//! GeoTIFF reading and writing.
//!
//! Files are written uncompressed, chunky (pixel-interleaved), in strips of
//! roughly 8 KiB, with every band promoted to one common sample type. The
//! georeference goes into ModelPixelScale/ModelTiepoint/GeoKeyDirectory,
//! nodata into GDAL_NODATA, and per-band tag/kind/type/nodata into a small
//! JSON document in ImageDescription. Files from other tools are read with
//! the kinds inferred from their sample layout.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::TiffEncoder;
use tiff::tags::Tag;
use tiff::ColorType;

use super::grid::{Band, BandData, BandKind, BandTag, DataType, GeoGrid, GridGeometry};
use crate::error::{Error, Result};

const GT_MODEL_TYPE: u16 = 1024;
const GT_RASTER_TYPE: u16 = 1025;
const GEOGRAPHIC_TYPE: u16 = 2048;
const PROJECTED_CS_TYPE: u16 = 3072;
const MODEL_TRANSFORMATION_TAG: u16 = 34264;

const STRIP_TARGET_BYTES: usize = 8192;
const METADATA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct BandMeta {
    tag: BandTag,
    kind: BandKind,
    dtype: DataType,
    #[serde(default)]
    nodata: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileMeta {
    habitat_cd: u32,
    bands: Vec<BandMeta>,
}

fn is_geographic(epsg: u32) -> bool {
    (4000..5000).contains(&epsg)
}

fn push_sample(buf: &mut Vec<u8>, dtype: DataType, band: &BandData, i: usize) {
    match band {
        BandData::Categorical { values, .. } => {
            let v = values[i];
            match dtype {
                DataType::U8 => buf.push(v as u8),
                DataType::U16 => buf.extend_from_slice(&(v as u16).to_ne_bytes()),
                DataType::I32 => buf.extend_from_slice(&(v as i32).to_ne_bytes()),
                DataType::F32 => buf.extend_from_slice(&(v as f32).to_ne_bytes()),
                DataType::F64 => buf.extend_from_slice(&(v as f64).to_ne_bytes()),
            }
        }
        BandData::Continuous { values, .. } => {
            let v = values[i];
            match dtype {
                DataType::U8 => buf.push(v.round().clamp(0.0, u8::MAX as f64) as u8),
                DataType::U16 => {
                    let s = v.round().clamp(0.0, u16::MAX as f64) as u16;
                    buf.extend_from_slice(&s.to_ne_bytes())
                }
                DataType::I32 => {
                    let s = v.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32;
                    buf.extend_from_slice(&s.to_ne_bytes())
                }
                DataType::F32 => buf.extend_from_slice(&(v as f32).to_ne_bytes()),
                DataType::F64 => buf.extend_from_slice(&v.to_ne_bytes()),
            }
        }
    }
}

fn sample_format_code(dtype: DataType) -> u16 {
    match dtype {
        DataType::U8 | DataType::U16 => 1,
        DataType::I32 => 2,
        DataType::F32 | DataType::F64 => 3,
    }
}

fn format_nodata(band: &Band) -> Option<String> {
    match band.data() {
        BandData::Categorical { nodata, .. } => nodata.map(|v| v.to_string()),
        BandData::Continuous { nodata, .. } => nodata.map(|v| v.to_string()),
    }
}

pub fn write_geotiff(grid: &GeoGrid, path: &Path) -> Result<()> {
    let geometry = grid.geometry();
    let (w, h) = (geometry.width, geometry.height);
    let bands = grid.bands();
    let n = bands.len();
    let dtype = bands
        .iter()
        .map(Band::dtype)
        .reduce(DataType::promote)
        .expect("grid has at least one band");
    let bytes_per_sample = dtype.bits() as usize / 8;
    let row_bytes = w * n * bytes_per_sample;
    let rows_per_strip = (STRIP_TARGET_BYTES / row_bytes).clamp(1, h);

    let meta = FileMeta {
        habitat_cd: METADATA_VERSION,
        bands: bands
            .iter()
            .map(|b| BandMeta {
                tag: b.tag(),
                kind: b.kind(),
                dtype: b.dtype(),
                nodata: format_nodata(b),
            })
            .collect(),
    };
    let description = serde_json::to_string(&meta)?;

    let file = File::create(path).map_err(|e| Error::io_at(path, e))?;
    let mut encoder = TiffEncoder::new(BufWriter::new(file))?;
    let mut dir = encoder.image_directory()?;

    let mut offsets = Vec::new();
    let mut counts = Vec::new();
    let mut buf = Vec::with_capacity(rows_per_strip * row_bytes);
    for strip_start in (0..h).step_by(rows_per_strip) {
        buf.clear();
        let rows = rows_per_strip.min(h - strip_start);
        for i in strip_start * w..(strip_start + rows) * w {
            for band in bands {
                push_sample(&mut buf, dtype, band.data(), i);
            }
        }
        let offset = dir.write_data(buf.as_slice())?;
        offsets.push(
            u32::try_from(offset).map_err(|_| Error::InvalidParameter("raster too large for a classic TIFF".into()))?,
        );
        counts.push(buf.len() as u32);
    }

    dir.write_tag(Tag::ImageWidth, w as u32)?;
    dir.write_tag(Tag::ImageLength, h as u32)?;
    dir.write_tag(Tag::BitsPerSample, vec![dtype.bits(); n].as_slice())?;
    dir.write_tag(Tag::Compression, 1u16)?;
    dir.write_tag(Tag::PhotometricInterpretation, 1u16)?;
    dir.write_tag(Tag::ImageDescription, description.as_str())?;
    dir.write_tag(Tag::StripOffsets, offsets.as_slice())?;
    dir.write_tag(Tag::SamplesPerPixel, n as u16)?;
    dir.write_tag(Tag::RowsPerStrip, rows_per_strip as u32)?;
    dir.write_tag(Tag::StripByteCounts, counts.as_slice())?;
    dir.write_tag(Tag::PlanarConfiguration, 1u16)?;
    if n > 1 {
        dir.write_tag(Tag::ExtraSamples, vec![0u16; n - 1].as_slice())?;
    }
    dir.write_tag(Tag::SampleFormat, vec![sample_format_code(dtype); n].as_slice())?;

    let px = geometry.pixel_size;
    dir.write_tag(Tag::ModelPixelScaleTag, &[px, px, 0.0][..])?;
    dir.write_tag(
        Tag::ModelTiepointTag,
        &[0.0, 0.0, 0.0, geometry.origin.0, geometry.origin.1, 0.0][..],
    )?;
    let epsg = u16::try_from(geometry.epsg)
        .map_err(|_| Error::InvalidParameter(format!("EPSG code {} out of range", geometry.epsg)))?;
    let (model_type, crs_key) = if is_geographic(geometry.epsg) {
        (2u16, GEOGRAPHIC_TYPE)
    } else {
        (1u16, PROJECTED_CS_TYPE)
    };
    let geokeys: [u16; 16] = [
        1,
        1,
        0,
        3, //
        GT_MODEL_TYPE,
        0,
        1,
        model_type, //
        GT_RASTER_TYPE,
        0,
        1,
        1, //
        crs_key,
        0,
        1,
        epsg,
    ];
    dir.write_tag(Tag::GeoKeyDirectoryTag, &geokeys[..])?;
    if let Some(nd) = bands.first().and_then(format_nodata) {
        dir.write_tag(Tag::GdalNodata, nd.as_str())?;
    }
    dir.finish()?;
    Ok(())
}

enum Samples {
    U8(Vec<u8>),
    U16(Vec<u16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Samples {
    fn get_f64(&self, i: usize) -> f64 {
        match self {
            Samples::U8(v) => v[i] as f64,
            Samples::U16(v) => v[i] as f64,
            Samples::I32(v) => v[i] as f64,
            Samples::F32(v) => v[i] as f64,
            Samples::F64(v) => v[i],
        }
    }

    fn get_label(&self, i: usize) -> Option<u32> {
        match self {
            Samples::U8(v) => Some(v[i] as u32),
            Samples::U16(v) => Some(v[i] as u32),
            Samples::I32(v) => u32::try_from(v[i]).ok(),
            Samples::F32(v) => exact_label(v[i] as f64),
            Samples::F64(v) => exact_label(v[i]),
        }
    }
}

fn exact_label(v: f64) -> Option<u32> {
    (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as u32)
}

fn parse_geokey_epsg(keys: &[u16]) -> u32 {
    if keys.len() < 4 {
        return 0;
    }
    let count = keys[3] as usize;
    let mut geographic = 0;
    for entry in keys[4..].chunks_exact(4).take(count) {
        let (id, location, value) = (entry[0], entry[1], entry[3]);
        if location != 0 {
            continue;
        }
        match id {
            PROJECTED_CS_TYPE => return value as u32,
            GEOGRAPHIC_TYPE => geographic = value as u32,
            _ => {}
        }
    }
    geographic
}

fn read_geometry<R: std::io::Read + std::io::Seek>(
    decoder: &mut Decoder<R>,
    width: usize,
    height: usize,
) -> Result<GridGeometry> {
    let scale = decoder
        .find_tag(Tag::ModelPixelScaleTag)?
        .map(|v| v.into_f64_vec())
        .transpose()?;
    let tiepoint = decoder
        .find_tag(Tag::ModelTiepointTag)?
        .map(|v| v.into_f64_vec())
        .transpose()?;

    let (sx, sy, ox, oy) = match (scale, tiepoint) {
        (Some(s), Some(t)) if s.len() >= 2 && t.len() >= 6 => (s[0], s[1], t[3] - t[0] * s[0], t[4] + t[1] * s[1]),
        _ => {
            let matrix = decoder
                .find_tag(Tag::Unknown(MODEL_TRANSFORMATION_TAG))?
                .map(|v| v.into_f64_vec())
                .transpose()?
                .ok_or(Error::MissingGeotransform)?;
            if matrix.len() < 8 {
                return Err(Error::MissingGeotransform);
            }
            if matrix[1] != 0.0 || matrix[4] != 0.0 {
                return Err(Error::UnsupportedFormat("rotated geotransform".into()));
            }
            (matrix[0], -matrix[5], matrix[3], matrix[7])
        }
    };
    if (sx - sy).abs() > 1e-9 * sx.abs().max(sy.abs()) {
        return Err(Error::AnisotropicPixels { x: sx, y: sy });
    }

    let epsg = decoder
        .find_tag(Tag::GeoKeyDirectoryTag)?
        .map(|v| v.into_u16_vec())
        .transpose()?
        .map(|keys| parse_geokey_epsg(&keys))
        .unwrap_or(0);

    let geometry = GridGeometry::new(width, height, sx, (ox, oy), epsg);
    geometry.validate()?;
    Ok(geometry)
}

/// Kinds and tags for files without our ImageDescription metadata.
fn infer_band_meta(n: usize, dtype: DataType) -> Vec<(BandTag, BandKind)> {
    use BandKind::*;
    match (n, dtype) {
        (3, DataType::U8) => vec![
            (BandTag::R, Continuous),
            (BandTag::G, Continuous),
            (BandTag::B, Continuous),
        ],
        (4, DataType::U8) => vec![
            (BandTag::R, Continuous),
            (BandTag::G, Continuous),
            (BandTag::B, Continuous),
            (BandTag::Nir, Continuous),
        ],
        (1, d) if !d.is_float() => vec![(BandTag::Label, Categorical)],
        _ => (0..n as u32).map(|i| (BandTag::Generic(i), Continuous)).collect(),
    }
}

pub fn read_geotiff(path: &Path) -> Result<GeoGrid> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut decoder = Decoder::new(BufReader::new(file))?.with_limits(Limits::unlimited());
    let (w, h) = decoder.dimensions()?;
    let (w, h) = (w as usize, h as usize);

    let (n, bits) = match decoder.colortype()? {
        ColorType::Gray(b) => (1usize, b),
        ColorType::RGB(b) => (3, b),
        ColorType::RGBA(b) => (4, b),
        ColorType::Multiband { bit_depth, num_samples } => (num_samples as usize, bit_depth),
        other => {
            return Err(Error::UnsupportedFormat(format!("color type {other:?}")));
        }
    };
    let format = decoder
        .find_tag(Tag::SampleFormat)?
        .map(|v| v.into_u16_vec())
        .transpose()?
        .and_then(|v| v.first().copied())
        .unwrap_or(1);
    let dtype = match (format, bits) {
        (1, 8) => DataType::U8,
        (1, 16) => DataType::U16,
        (2, 32) => DataType::I32,
        (3, 32) => DataType::F32,
        (3, 64) => DataType::F64,
        _ => {
            return Err(Error::UnsupportedFormat(format!(
                "sample format {format} with {bits} bits"
            )))
        }
    };

    let geometry = read_geometry(&mut decoder, w, h)?;

    let description = decoder
        .find_tag(Tag::ImageDescription)?
        .map(|v| v.into_string())
        .transpose()?;
    let file_meta = description
        .as_deref()
        .and_then(|d| serde_json::from_str::<FileMeta>(d.trim_end_matches('\0')).ok())
        .filter(|m| m.bands.len() == n);
    let gdal_nodata = decoder
        .find_tag(Tag::GdalNodata)?
        .map(|v| v.into_string())
        .transpose()?
        .map(|s| s.trim_end_matches('\0').trim().to_string());

    let samples = match decoder.read_image()? {
        DecodingResult::U8(v) => Samples::U8(v),
        DecodingResult::U16(v) => Samples::U16(v),
        DecodingResult::I32(v) => Samples::I32(v),
        DecodingResult::F32(v) => Samples::F32(v),
        DecodingResult::F64(v) => Samples::F64(v),
        _ => return Err(Error::UnsupportedFormat("sample buffer type".into())),
    };

    let plan: Vec<(BandTag, BandKind, DataType, Option<String>)> = match file_meta {
        Some(meta) => meta
            .bands
            .into_iter()
            .map(|b| (b.tag, b.kind, b.dtype, b.nodata))
            .collect(),
        None => infer_band_meta(n, dtype)
            .into_iter()
            .map(|(tag, kind)| (tag, kind, dtype, gdal_nodata.clone()))
            .collect(),
    };

    let npix = w * h;
    let mut bands = Vec::with_capacity(n);
    for (b, (tag, kind, band_dtype, nodata)) in plan.into_iter().enumerate() {
        let data = match kind {
            BandKind::Categorical => {
                let nodata = nodata
                    .map(|s| {
                        s.parse::<f64>().ok().and_then(exact_label).ok_or_else(|| {
                            Error::InvalidGrid(format!("categorical nodata {s:?} is not a non-negative integer"))
                        })
                    })
                    .transpose()?;
                let values = (0..npix)
                    .map(|i| {
                        samples.get_label(i * n + b).ok_or_else(|| {
                            Error::InvalidGrid(format!(
                                "band {tag}: sample {} is not a non-negative integer label",
                                samples.get_f64(i * n + b)
                            ))
                        })
                    })
                    .collect::<Result<Vec<u32>>>()?;
                BandData::Categorical { values, nodata }
            }
            BandKind::Continuous => {
                let nodata = nodata
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| Error::InvalidGrid(format!("invalid nodata value {s:?}")))
                    })
                    .transpose()?;
                let values = (0..npix).map(|i| samples.get_f64(i * n + b)).collect();
                BandData::Continuous { values, nodata }
            }
        };
        bands.push(Band::new(tag, band_dtype, data)?);
    }
    GeoGrid::new(geometry, bands)
}
