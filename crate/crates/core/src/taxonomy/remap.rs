use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::{Band, GeoGrid};

/// What happens to a label with no table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemapDefault {
    Error,
    PassThrough,
    Fixed(u32),
}

impl FromStr for RemapDefault {
    type Err = Error;

    /// `error`, `pass-through` or `fixed:<id>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(RemapDefault::Error),
            "pass-through" | "pass_through" | "passthrough" => Ok(RemapDefault::PassThrough),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|v| v.parse().ok())
                .map(RemapDefault::Fixed)
                .ok_or_else(|| Error::Parse(format!("invalid remap default {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemapTable {
    entries: BTreeMap<u32, u32>,
    default: RemapDefault,
}

impl RemapTable {
    pub fn new(entries: BTreeMap<u32, u32>, default: RemapDefault) -> Self {
        Self { entries, default }
    }

    pub fn identity(n: u32) -> Self {
        Self::new((0..n).map(|i| (i, i)).collect(), RemapDefault::Error)
    }

    /// Reads `source_id,target_id` rows; duplicate sources are an error.
    pub fn from_csv_reader<R: Read>(reader: R, default: RemapDefault) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("source_id") || headers.get(1) != Some("target_id") {
            return Err(Error::Parse(format!(
                "remap table header must be source_id,target_id, found {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut entries = BTreeMap::new();
        for (line, rec) in rdr.deserialize::<(u32, u32)>().enumerate() {
            let (s, t) = rec?;
            if entries.insert(s, t).is_some() {
                return Err(Error::Parse(format!("row {}: duplicate source id {s}", line + 2)));
            }
        }
        Ok(Self::new(entries, default))
    }

    pub fn load(path: &Path, default: RemapDefault) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_csv_reader(f, default)
    }

    pub fn default_policy(&self) -> RemapDefault {
        self.default
    }

    pub fn entries(&self) -> &BTreeMap<u32, u32> {
        &self.entries
    }

    /// Target of `v`, or `None` when unmapped under the error policy.
    pub fn lookup(&self, v: u32) -> Option<u32> {
        match (self.entries.get(&v), self.default) {
            (Some(&t), _) => Some(t),
            (None, RemapDefault::Error) => None,
            (None, RemapDefault::PassThrough) => Some(v),
            (None, RemapDefault::Fixed(t)) => Some(t),
        }
    }
}

/// Applies `table` to every label of the first band; nodata stays nodata.
pub fn remap_labels(grid: &GeoGrid, table: &RemapTable) -> Result<GeoGrid> {
    let (labels, nodata) = grid.labels()?;
    let w = grid.width();
    let out = labels
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if Some(v) == nodata {
                return Ok(v);
            }
            table.lookup(v).ok_or(Error::UnmappedLabel {
                value: v,
                index: i,
                row: i / w,
                col: i % w,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(nd) = nodata {
        if let Some(i) = out.iter().zip(labels).position(|(&o, &l)| o == nd && l != nd) {
            return Err(Error::InvalidParameter(format!(
                "remap target {nd} at pixel {i} collides with the nodata sentinel"
            )));
        }
    }
    let band = Band::categorical(grid.bands()[0].tag(), out, nodata)?;
    let mut bands = vec![band];
    bands.extend(grid.bands()[1..].iter().cloned());
    GeoGrid::new(*grid.geometry(), bands)
}
