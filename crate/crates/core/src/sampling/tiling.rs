use std::io::Read;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{is_nodata, Band, BandData, BandTag, GeoGrid, GridGeometry};

/// Patch origins of a sliding window with a clamped last position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchIndex {
    pub patch_size: usize,
    pub overlap: usize,
    pub width: usize,
    pub height: usize,
    /// (row, col) of each patch's upper-left pixel, row-major.
    pub origins: Vec<(usize, usize)>,
}

/// Start positions along one axis: multiples of `stride`, plus a final
/// position `len - patch` if the last stride step stops short of the edge.
pub fn axis_positions(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut pos = Vec::new();
    let mut p = 0;
    while p + patch < len {
        pos.push(p);
        p += stride;
    }
    pos.push(len - patch);
    pos
}

impl PatchIndex {
    pub fn new(width: usize, height: usize, patch_size: usize, overlap: usize) -> Result<Self> {
        if patch_size == 0 || overlap >= patch_size {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= overlap < patch size, got patch {patch_size}, overlap {overlap}"
            )));
        }
        if width < patch_size || height < patch_size {
            return Err(Error::GridTooSmall {
                width,
                height,
                required: patch_size,
            });
        }
        let stride = patch_size - overlap;
        let rows = axis_positions(height, patch_size, stride);
        let cols = axis_positions(width, patch_size, stride);
        let origins = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();
        Ok(Self {
            patch_size,
            overlap,
            width,
            height,
            origins,
        })
    }

    pub fn stride(&self) -> usize {
        self.patch_size - self.overlap
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// CSV `row,col`.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(vec![]);
        w.write_record(["row", "col"])?;
        for o in &self.origins {
            w.serialize(o)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Origins from a `row,col` CSV.
    pub fn origins_from_csv<R: Read>(reader: R) -> Result<Vec<(usize, usize)>> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        Ok(rdr
            .deserialize::<(usize, usize)>()
            .collect::<std::result::Result<Vec<_>, _>>()?)
    }
}

/// A window of a larger grid, remembering where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub grid: GeoGrid,
}

pub fn extract_patches(grid: &GeoGrid, patch_size: usize, overlap: usize) -> Result<(PatchIndex, Vec<Patch>)> {
    let index = PatchIndex::new(grid.width(), grid.height(), patch_size, overlap)?;
    let patches = index
        .origins
        .par_iter()
        .map(|&(row, col)| {
            Ok(Patch {
                row,
                col,
                grid: grid.window(row, col, patch_size, patch_size)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((index, patches))
}

fn check_bounds(patches: &[Patch], out: &GridGeometry) -> Result<()> {
    for p in patches {
        if p.row + p.grid.height() > out.height || p.col + p.grid.width() > out.width {
            return Err(Error::InvalidParameter(format!(
                "patch at ({}, {}) extends beyond the {}x{} output",
                p.row, p.col, out.width, out.height
            )));
        }
    }
    Ok(())
}

/// Patches intersecting output row `r`, in canonical (row, col) order.
fn patches_on_row<'a>(sorted: &[&'a Patch], r: usize) -> Vec<&'a Patch> {
    sorted
        .iter()
        .copied()
        .filter(|p| p.row <= r && r < p.row + p.grid.height())
        .collect()
}

fn sorted_patches(patches: &[Patch]) -> Vec<&Patch> {
    let mut v: Vec<&Patch> = patches.iter().collect();
    v.sort_by_key(|p| (p.row, p.col));
    v
}

/// Per-pixel majority vote of the first band of categorical patches.
/// Ties go to the lowest label; nodata votes only win when nothing else
/// covers the pixel.
pub fn mosaic_labels(patches: &[Patch], out: &GridGeometry) -> Result<GeoGrid> {
    out.validate()?;
    check_bounds(patches, out)?;
    let mut nodata = None;
    for p in patches {
        let (_, nd) = p.grid.labels()?;
        nodata = nodata.or(nd);
    }
    let sorted = sorted_patches(patches);
    let w = out.width;
    let rows: Vec<Result<Vec<u32>>> = (0..out.height)
        .into_par_iter()
        .map(|r| {
            let here = patches_on_row(&sorted, r);
            let mut row = Vec::with_capacity(w);
            let mut votes: Vec<u32> = Vec::new();
            for c in 0..w {
                votes.clear();
                let mut covered = false;
                for p in &here {
                    if p.col <= c && c < p.col + p.grid.width() {
                        covered = true;
                        let (vals, nd) = p.grid.labels()?;
                        let v = vals[(r - p.row) * p.grid.width() + (c - p.col)];
                        if Some(v) != nd {
                            votes.push(v);
                        }
                    }
                }
                if !covered {
                    return Err(Error::CoverageGap { row: r, col: c });
                }
                row.push(majority(&mut votes).or(nodata).unwrap_or(0));
            }
            Ok(row)
        })
        .collect();
    let mut values = Vec::with_capacity(out.len());
    for r in rows {
        values.extend(r?);
    }
    let band = match patches.first() {
        Some(p) => Band::new(
            p.grid.bands()[0].tag(),
            p.grid.bands()[0].dtype(),
            BandData::Categorical { values, nodata },
        )?,
        None => return Err(Error::CoverageGap { row: 0, col: 0 }),
    };
    GeoGrid::new(*out, vec![band])
}

/// Most frequent value, lowest on ties; `None` for no votes.
fn majority(votes: &mut [u32]) -> Option<u32> {
    votes.sort_unstable();
    let mut best: Option<(u32, usize)> = None;
    let mut i = 0;
    while i < votes.len() {
        let v = votes[i];
        let run = votes[i..].iter().take_while(|&&x| x == v).count();
        if best.is_none_or(|(_, n)| run > n) {
            best = Some((v, run));
        }
        i += run;
    }
    best.map(|(v, _)| v)
}

/// Averages the K score bands of overlapping patches per pixel and takes
/// the argmax (lowest class on ties). Sums run over patches in (row, col)
/// order, so the result does not depend on the order of `patches`. A patch
/// with nodata in any score band at a pixel does not vote there; pixels
/// with no valid scores are nodata (255).
pub fn mosaic_scores(patches: &[Patch], out: &GridGeometry) -> Result<GeoGrid> {
    out.validate()?;
    check_bounds(patches, out)?;
    let k = patches
        .first()
        .map(|p| p.grid.bands().len())
        .ok_or(Error::CoverageGap { row: 0, col: 0 })?;
    for p in patches {
        if p.grid.bands().len() != k {
            return Err(Error::ChannelMismatch {
                expected: k,
                found: p.grid.bands().len(),
            });
        }
        for b in p.grid.bands() {
            b.values()?;
        }
    }
    let sorted = sorted_patches(patches);
    const NODATA: u32 = 255;
    let w = out.width;
    let rows: Vec<Result<Vec<u32>>> = (0..out.height)
        .into_par_iter()
        .map(|r| {
            let here = patches_on_row(&sorted, r);
            let mut row = Vec::with_capacity(w);
            let mut sums = vec![0.0f64; k];
            for c in 0..w {
                sums.iter_mut().for_each(|s| *s = 0.0);
                let (mut covered, mut n) = (false, 0u32);
                'patches: for p in &here {
                    if !(p.col <= c && c < p.col + p.grid.width()) {
                        continue;
                    }
                    covered = true;
                    let i = (r - p.row) * p.grid.width() + (c - p.col);
                    for b in p.grid.bands() {
                        let (vals, nd) = b.values()?;
                        if is_nodata(vals[i], nd) {
                            continue 'patches;
                        }
                    }
                    for (s, b) in sums.iter_mut().zip(p.grid.bands()) {
                        *s += b.values()?.0[i];
                    }
                    n += 1;
                }
                if !covered {
                    return Err(Error::CoverageGap { row: r, col: c });
                }
                if n == 0 {
                    row.push(NODATA);
                    continue;
                }
                let mut best = 0;
                for j in 1..k {
                    if sums[j] / f64::from(n) > sums[best] / f64::from(n) {
                        best = j;
                    }
                }
                row.push(best as u32);
            }
            Ok(row)
        })
        .collect();
    let mut values = Vec::with_capacity(out.len());
    for r in rows {
        values.extend(r?);
    }
    let nodata = values.contains(&NODATA).then_some(NODATA);
    GeoGrid::new(*out, vec![Band::categorical(BandTag::Label, values, nodata)?])
}

/// Hard labels from a stack of per-class score bands (argmax, lowest class
/// on ties, nodata where any score is nodata).
pub fn argmax_scores(scores: &GeoGrid) -> Result<GeoGrid> {
    let bands: Vec<(&[f64], Option<f64>)> = scores.bands().iter().map(|b| b.values()).collect::<Result<_>>()?;
    const NODATA: u32 = 255;
    let values: Vec<u32> = (0..scores.geometry().len())
        .into_par_iter()
        .map(|i| {
            if bands.iter().any(|(v, nd)| is_nodata(v[i], *nd)) {
                return NODATA;
            }
            let mut best = 0;
            for (j, (v, _)) in bands.iter().enumerate().skip(1) {
                if v[i] > bands[best].0[i] {
                    best = j;
                }
            }
            best as u32
        })
        .collect();
    let nodata = values.contains(&NODATA).then_some(NODATA);
    GeoGrid::new(
        *scores.geometry(),
        vec![Band::categorical(BandTag::Label, values, nodata)?],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(w: usize, h: usize) -> GridGeometry {
        GridGeometry::new(w, h, 0.2, (100.0, 200.0), 32633)
    }

    #[test]
    fn patch_origins() {
        assert_eq!(axis_positions(448, 256, 192), vec![0, 192]);
        assert_eq!(axis_positions(500, 256, 192), vec![0, 192, 244]);
        assert_eq!(axis_positions(256, 256, 192), vec![0]);
        let idx = PatchIndex::new(500, 500, 256, 64).unwrap();
        assert_eq!(idx.len(), 9);
        assert!(idx.origins.contains(&(244, 244)));
        assert!(PatchIndex::new(255, 500, 256, 64).is_err());
        assert!(PatchIndex::new(500, 500, 256, 256).is_err());
    }

    #[test]
    fn majority_tie_goes_to_lowest() {
        assert_eq!(majority(&mut [2, 5, 2]), Some(2));
        assert_eq!(majority(&mut [3, 1]), Some(1));
        assert_eq!(majority(&mut []), None);
    }

    fn score_patch(row: usize, col: usize, w: usize, s0: f64, s1: f64) -> Patch {
        let g = GridGeometry::new(w, 1, 0.2, (100.0 + col as f64 * 0.2, 200.0), 32633);
        let bands = vec![
            Band::continuous(BandTag::Score(0), vec![s0; w], None).unwrap(),
            Band::continuous(BandTag::Score(1), vec![s1; w], None).unwrap(),
        ];
        Patch {
            row,
            col,
            grid: GeoGrid::new(g, bands).unwrap(),
        }
    }

    #[test]
    fn score_blending_example() {
        let a = score_patch(0, 0, 2, 0.6, 0.4);
        let b = score_patch(0, 1, 2, 0.2, 0.8);
        let out = mosaic_scores(&[a.clone(), b.clone()], &geom(3, 1)).unwrap();
        // Pixel 1 sees mean (0.4, 0.6).
        assert_eq!(out.labels().unwrap().0, &[0, 1, 1]);
        let swapped = mosaic_scores(&[b, a], &geom(3, 1)).unwrap();
        assert_eq!(out, swapped);
    }

    #[test]
    fn score_channel_mismatch() {
        let a = score_patch(0, 0, 2, 0.6, 0.4);
        let mut b = score_patch(0, 1, 2, 0.2, 0.8);
        b.grid = GeoGrid::new(*b.grid.geometry(), vec![b.grid.bands()[0].clone()]).unwrap();
        assert!(matches!(
            mosaic_scores(&[a, b], &geom(3, 1)),
            Err(Error::ChannelMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn coverage_gap_is_reported() {
        let a = score_patch(0, 0, 2, 0.6, 0.4);
        assert!(matches!(
            mosaic_scores(&[a], &geom(3, 1)),
            Err(Error::CoverageGap { row: 0, col: 2 })
        ));
    }

    #[test]
    fn label_round_trip_small() {
        let g = GeoGrid::from_labels(geom(7, 5), (0..35).map(|i| i % 4).collect(), None).unwrap();
        let (_, patches) = extract_patches(&g, 3, 1).unwrap();
        assert_eq!(mosaic_labels(&patches, g.geometry()).unwrap(), g);
    }

    #[test]
    fn argmax_prefers_lowest_on_ties() {
        let g = geom(2, 1);
        let scores = GeoGrid::new(
            g,
            vec![
                Band::continuous(BandTag::Score(0), vec![0.5, 0.1], None).unwrap(),
                Band::continuous(BandTag::Score(1), vec![0.5, 0.9], None).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(argmax_scores(&scores).unwrap().labels().unwrap().0, &[0, 1]);
    }

    #[test]
    fn index_csv_round_trip() {
        let idx = PatchIndex::new(500, 448, 256, 64).unwrap();
        let text = idx.to_csv_string().unwrap();
        assert!(text.starts_with("row,col\n0,0\n0,192\n0,244\n"));
        assert_eq!(PatchIndex::origins_from_csv(text.as_bytes()).unwrap(), idx.origins);
    }
}
