use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodata sentinel used for continuous products when the input carries none.
pub const DEFAULT_CONTINUOUS_NODATA: f64 = -9999.0;

/// Semantic role of a band inside a stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BandTag {
    R,
    G,
    B,
    Nir,
    Dtm,
    Dsm,
    Ndsm,
    Slope,
    Aspect,
    Roughness,
    Curvature,
    Label,
    /// Per-class score channel.
    Score(u32),
    /// Band without semantic annotation, identified by its position in the file.
    Generic(u32),
}

impl fmt::Display for BandTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandTag::R => f.write_str("R"),
            BandTag::G => f.write_str("G"),
            BandTag::B => f.write_str("B"),
            BandTag::Nir => f.write_str("NIR"),
            BandTag::Dtm => f.write_str("DTM"),
            BandTag::Dsm => f.write_str("DSM"),
            BandTag::Ndsm => f.write_str("NDSM"),
            BandTag::Slope => f.write_str("SLOPE"),
            BandTag::Aspect => f.write_str("ASPECT"),
            BandTag::Roughness => f.write_str("ROUGHNESS"),
            BandTag::Curvature => f.write_str("CURVATURE"),
            BandTag::Label => f.write_str("LABEL"),
            BandTag::Score(k) => write!(f, "SCORE:{k}"),
            BandTag::Generic(i) => write!(f, "BAND:{i}"),
        }
    }
}

impl FromStr for BandTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let tag = match upper.as_str() {
            "R" => BandTag::R,
            "G" => BandTag::G,
            "B" => BandTag::B,
            "NIR" => BandTag::Nir,
            "DTM" | "DEM" => BandTag::Dtm,
            "DSM" => BandTag::Dsm,
            "NDSM" => BandTag::Ndsm,
            "SLOPE" => BandTag::Slope,
            "ASPECT" => BandTag::Aspect,
            "ROUGHNESS" => BandTag::Roughness,
            "CURVATURE" => BandTag::Curvature,
            "LABEL" => BandTag::Label,
            other => {
                let parse = |rest: &str| {
                    rest.parse::<u32>()
                        .map_err(|_| Error::Parse(format!("invalid band tag {s:?}")))
                };
                if let Some(rest) = other.strip_prefix("SCORE:") {
                    BandTag::Score(parse(rest)?)
                } else if let Some(rest) = other.strip_prefix("BAND:") {
                    BandTag::Generic(parse(rest)?)
                } else {
                    return Err(Error::Parse(format!("invalid band tag {s:?}")));
                }
            }
        };
        Ok(tag)
    }
}

impl TryFrom<String> for BandTag {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<BandTag> for String {
    fn from(tag: BandTag) -> Self {
        tag.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    Categorical,
    Continuous,
}

impl fmt::Display for BandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandKind::Categorical => f.write_str("categorical"),
            BandKind::Continuous => f.write_str("continuous"),
        }
    }
}

/// On-disk sample type of a band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    U8,
    U16,
    I32,
    F32,
    F64,
}

impl DataType {
    pub fn bits(self) -> u16 {
        match self {
            DataType::U8 => 8,
            DataType::U16 => 16,
            DataType::I32 | DataType::F32 => 32,
            DataType::F64 => 64,
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, DataType::F32 | DataType::F64)
    }

    /// Largest integer label representable in this type.
    fn max_label(self) -> u64 {
        match self {
            DataType::U8 => u8::MAX as u64,
            DataType::U16 => u16::MAX as u64,
            DataType::I32 => i32::MAX as u64,
            DataType::F32 => 1 << 24,
            DataType::F64 => 1 << 53,
        }
    }

    /// Smallest type that stores both `a` and `b` without loss.
    pub fn promote(a: DataType, b: DataType) -> DataType {
        use DataType::*;
        match (a.min(b), a.max(b)) {
            (x, y) if x == y => x,
            (_, F64) => F64,
            (I32, F32) => F64,
            (_, F32) => F32,
            (_, I32) => I32,
            (_, U16) => U16,
            _ => U8,
        }
    }

    /// Nodata sentinel for categorical bands stored in this type.
    pub fn default_label_nodata(self) -> u32 {
        match self {
            DataType::U8 => u8::MAX as u32,
            DataType::U16 => u16::MAX as u32,
            _ => i32::MAX as u32,
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataType::U8 => "uint8",
            DataType::U16 => "uint16",
            DataType::I32 => "int32",
            DataType::F32 => "float32",
            DataType::F64 => "float64",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BandData {
    Categorical { values: Vec<u32>, nodata: Option<u32> },
    Continuous { values: Vec<f64>, nodata: Option<f64> },
}

impl BandData {
    pub fn len(&self) -> usize {
        match self {
            BandData::Categorical { values, .. } => values.len(),
            BandData::Continuous { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One raster band: row-major values, an explicit kind, a semantic tag and
/// the sample type used when it is written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    tag: BandTag,
    dtype: DataType,
    data: BandData,
}

impl Band {
    /// Categorical band with the narrowest unsigned/int32 storage type that
    /// holds every label and the nodata sentinel.
    pub fn categorical(tag: BandTag, values: Vec<u32>, nodata: Option<u32>) -> Result<Self> {
        let max = values.iter().copied().chain(nodata).max().unwrap_or(0);
        let dtype = if max <= u8::MAX as u32 {
            DataType::U8
        } else if max <= u16::MAX as u32 {
            DataType::U16
        } else {
            DataType::I32
        };
        Self::new(tag, dtype, BandData::Categorical { values, nodata })
    }

    /// Continuous band stored as float32.
    pub fn continuous(tag: BandTag, values: Vec<f64>, nodata: Option<f64>) -> Result<Self> {
        Self::new(tag, DataType::F32, BandData::Continuous { values, nodata })
    }

    pub fn new(tag: BandTag, dtype: DataType, data: BandData) -> Result<Self> {
        match &data {
            BandData::Categorical { values, nodata } => {
                if dtype.is_float() {
                    return Err(Error::InvalidGrid(format!(
                        "categorical band {tag} cannot be stored as {dtype}"
                    )));
                }
                let limit = dtype.max_label();
                if let Some(v) = values.iter().chain(nodata.iter()).find(|&&v| v as u64 > limit) {
                    return Err(Error::InvalidGrid(format!(
                        "label {v} does not fit band {tag} of type {dtype}"
                    )));
                }
            }
            BandData::Continuous { values, nodata } => {
                let is_nd = |v: f64| nodata.is_some_and(|nd| v == nd || (nd.is_nan() && v.is_nan()));
                if let Some(v) = values.iter().find(|v| !v.is_finite() && !is_nd(**v)) {
                    return Err(Error::InvalidGrid(format!(
                        "continuous band {tag} contains non-finite value {v} that is not nodata"
                    )));
                }
            }
        }
        Ok(Self { tag, dtype, data })
    }

    pub fn tag(&self) -> BandTag {
        self.tag
    }

    pub fn dtype(&self) -> DataType {
        self.dtype
    }

    pub fn kind(&self) -> BandKind {
        match self.data {
            BandData::Categorical { .. } => BandKind::Categorical,
            BandData::Continuous { .. } => BandKind::Continuous,
        }
    }

    pub fn data(&self) -> &BandData {
        &self.data
    }

    pub fn into_data(self) -> BandData {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn with_tag(mut self, tag: BandTag) -> Self {
        self.tag = tag;
        self
    }

    /// Label values and nodata sentinel, or an error for continuous bands.
    pub fn labels(&self) -> Result<(&[u32], Option<u32>)> {
        match &self.data {
            BandData::Categorical { values, nodata } => Ok((values, *nodata)),
            BandData::Continuous { .. } => Err(Error::BandKind {
                expected: "categorical",
            }),
        }
    }

    pub fn values(&self) -> Result<(&[f64], Option<f64>)> {
        match &self.data {
            BandData::Continuous { values, nodata } => Ok((values, *nodata)),
            BandData::Categorical { .. } => Err(Error::BandKind { expected: "continuous" }),
        }
    }

    /// Nodata sentinel as f64, whichever the kind.
    pub fn nodata_f64(&self) -> Option<f64> {
        match self.data {
            BandData::Categorical { nodata, .. } => nodata.map(f64::from),
            BandData::Continuous { nodata, .. } => nodata,
        }
    }

    /// Copy of this band where pixels with `keep[i] == false` become nodata.
    /// A band without a sentinel gets the default one for its type.
    pub(crate) fn masked(&self, keep: &[bool]) -> Band {
        let data = match &self.data {
            BandData::Categorical { values, nodata } => {
                let nd = nodata.unwrap_or_else(|| self.dtype.default_label_nodata());
                BandData::Categorical {
                    values: values.iter().zip(keep).map(|(&v, &k)| if k { v } else { nd }).collect(),
                    nodata: Some(nd),
                }
            }
            BandData::Continuous { values, nodata } => {
                let nd = nodata.unwrap_or(DEFAULT_CONTINUOUS_NODATA);
                BandData::Continuous {
                    values: values.iter().zip(keep).map(|(&v, &k)| if k { v } else { nd }).collect(),
                    nodata: Some(nd),
                }
            }
        };
        Band {
            tag: self.tag,
            dtype: self.dtype,
            data,
        }
    }
}

/// Tests a continuous value against an optional sentinel (NaN matches NaN).
#[inline]
pub fn is_nodata(v: f64, nodata: Option<f64>) -> bool {
    match nodata {
        Some(nd) => v == nd || (nd.is_nan() && v.is_nan()),
        None => false,
    }
}

/// Axis-aligned map rectangle in CRS units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Extent {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn intersects(&self, other: &Extent) -> bool {
        self.min_x < other.max_x && other.min_x < self.max_x && self.min_y < other.max_y && other.min_y < self.max_y
    }
}

/// Pixel lattice of a grid: dimensions, square pixel size, upper-left origin
/// and EPSG code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    /// (easting, northing) of the upper-left corner.
    pub origin: (f64, f64),
    pub epsg: u32,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, pixel_size: f64, origin: (f64, f64), epsg: u32) -> Self {
        Self {
            width,
            height,
            pixel_size,
            origin,
            epsg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.pixel_size.is_finite() && self.pixel_size > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "pixel size must be positive, got {}",
                self.pixel_size
            )));
        }
        if !(self.origin.0.is_finite() && self.origin.1.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self) -> Extent {
        Extent {
            min_x: self.origin.0,
            max_x: self.origin.0 + self.width as f64 * self.pixel_size,
            min_y: self.origin.1 - self.height as f64 * self.pixel_size,
            max_y: self.origin.1,
        }
    }

    /// Geometry of the `height x width` window whose upper-left pixel is (row, col).
    pub fn window(&self, row: usize, col: usize, height: usize, width: usize) -> GridGeometry {
        GridGeometry {
            width,
            height,
            pixel_size: self.pixel_size,
            origin: (
                self.origin.0 + col as f64 * self.pixel_size,
                self.origin.1 - row as f64 * self.pixel_size,
            ),
            epsg: self.epsg,
        }
    }

    /// Same lattice: equal dimensions and CRS, pixel size and origin equal to
    /// within a millionth of a pixel.
    pub fn check_coregistered(&self, other: &GridGeometry) -> Result<()> {
        let tol = 1e-6 * self.pixel_size;
        if self.width != other.width || self.height != other.height {
            return Err(Error::NotCoRegistered(format!(
                "dimensions {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        if self.epsg != other.epsg {
            return Err(Error::NotCoRegistered(format!(
                "EPSG:{} vs EPSG:{}",
                self.epsg, other.epsg
            )));
        }
        if (self.pixel_size - other.pixel_size).abs() > 1e-9 * self.pixel_size {
            return Err(Error::NotCoRegistered(format!(
                "pixel size {} vs {}",
                self.pixel_size, other.pixel_size
            )));
        }
        if (self.origin.0 - other.origin.0).abs() > tol || (self.origin.1 - other.origin.1).abs() > tol {
            return Err(Error::NotCoRegistered(format!(
                "origin ({}, {}) vs ({}, {})",
                self.origin.0, self.origin.1, other.origin.0, other.origin.1
            )));
        }
        Ok(())
    }
}

/// Georeferenced single- or multi-band raster. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoGrid {
    geometry: GridGeometry,
    bands: Vec<Band>,
}

impl GeoGrid {
    pub fn new(geometry: GridGeometry, bands: Vec<Band>) -> Result<Self> {
        geometry.validate()?;
        if bands.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one band".into()));
        }
        let n = geometry.len();
        if let Some(b) = bands.iter().find(|b| b.len() != n) {
            return Err(Error::InvalidGrid(format!(
                "band {} has {} values, expected {}",
                b.tag(),
                b.len(),
                n
            )));
        }
        Ok(Self { geometry, bands })
    }

    /// Single categorical band tagged LABEL.
    pub fn from_labels(geometry: GridGeometry, values: Vec<u32>, nodata: Option<u32>) -> Result<Self> {
        Self::new(geometry, vec![Band::categorical(BandTag::Label, values, nodata)?])
    }

    /// Single continuous band.
    pub fn from_values(geometry: GridGeometry, tag: BandTag, values: Vec<f64>, nodata: Option<f64>) -> Result<Self> {
        Self::new(geometry, vec![Band::continuous(tag, values, nodata)?])
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn pixel_size(&self) -> f64 {
        self.geometry.pixel_size
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn into_bands(self) -> Vec<Band> {
        self.bands
    }

    pub fn band(&self, index: usize) -> Option<&Band> {
        self.bands.get(index)
    }

    pub fn band_by_tag(&self, tag: BandTag) -> Option<&Band> {
        self.bands.iter().find(|b| b.tag() == tag)
    }

    /// Labels of the first band; errors unless it is categorical.
    pub fn labels(&self) -> Result<(&[u32], Option<u32>)> {
        self.bands[0].labels()
    }

    /// Values of the first band; errors unless it is continuous.
    pub fn values(&self) -> Result<(&[f64], Option<f64>)> {
        self.bands[0].values()
    }

    /// Row-major index of (row, col).
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.geometry.width + col
    }

    /// Sub-grid copy of the window at (row, col) with the given size.
    pub fn window(&self, row: usize, col: usize, height: usize, width: usize) -> Result<GeoGrid> {
        if row + height > self.height() || col + width > self.width() {
            return Err(Error::InvalidParameter(format!(
                "window {height}x{width} at ({row}, {col}) exceeds grid {}x{}",
                self.height(),
                self.width()
            )));
        }
        let geometry = self.geometry.window(row, col, height, width);
        let full_w = self.width();
        let pick = |r: usize| (row + r) * full_w + col;
        let bands = self
            .bands
            .iter()
            .map(|b| {
                let data = match b.data() {
                    BandData::Categorical { values, nodata } => BandData::Categorical {
                        values: (0..height)
                            .flat_map(|r| values[pick(r)..pick(r) + width].iter().copied())
                            .collect(),
                        nodata: *nodata,
                    },
                    BandData::Continuous { values, nodata } => BandData::Continuous {
                        values: (0..height)
                            .flat_map(|r| values[pick(r)..pick(r) + width].iter().copied())
                            .collect(),
                        nodata: *nodata,
                    },
                };
                Band {
                    tag: b.tag(),
                    dtype: b.dtype(),
                    data,
                }
            })
            .collect();
        GeoGrid::new(geometry, bands)
    }

    /// Copy with pixels where `keep` is false set to nodata in every band.
    pub(crate) fn masked(&self, keep: &[bool]) -> GeoGrid {
        GeoGrid {
            geometry: self.geometry,
            bands: self.bands.iter().map(|b| b.masked(keep)).collect(),
        }
    }
}
