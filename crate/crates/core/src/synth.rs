//! Synthetic bi-temporal label scenes with known transition truth.
//!
//! Landscapes are grids of square superpixels. Each superpixel draws its
//! t1 class from `class_frequencies` and, independently, one uniform number
//! that decides which transition event (if any) fires on it. Both draws
//! come from ChaCha8 streams addressed by superpixel index, so output is
//! independent of thread count.

use std::path::Path;

use rand_core::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Band, BandTag, GeoGrid, GridGeometry};
use crate::rng;
use crate::taxonomy::{map_transition_pair, ClassScheme, TransitionRuleSet, CHANGE_NODATA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEvent {
    pub from_id: u32,
    pub to_id: u32,
    /// Probability that an eligible superpixel undergoes this event.
    pub rate: f64,
}

fn default_superpixel() -> usize {
    25
}
fn default_pixel_size() -> f64 {
    0.2
}
fn default_origin() -> (f64, f64) {
    (500_000.0, 5_270_000.0)
}
fn default_epsg() -> u32 {
    32633
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_superpixel")]
    pub superpixel_size: usize,
    pub class_frequencies: Vec<f64>,
    #[serde(default)]
    pub transition_events: Vec<TransitionEvent>,
    pub seed: u64,
    #[serde(default = "default_pixel_size")]
    pub pixel_size: f64,
    #[serde(default = "default_origin")]
    pub origin: (f64, f64),
    #[serde(default = "default_epsg")]
    pub epsg: u32,
}

/// Reference change areas (ha) of the nine transition categories, in
/// category id order.
pub const REFERENCE_CHANGE_AREA_HA: [f64; 9] = [13_994.1, 294.3, 119.0, 95.3, 306.4, 40.9, 158.7, 242.7, 146.3];

/// One representative (from, to) pair per change category of the bundled
/// rule table, in category id order starting at 1.
pub const CALIBRATION_PAIRS: [(u32, u32); 8] = [(3, 2), (8, 5), (5, 15), (6, 3), (2, 3), (13, 11), (3, 13), (0, 7)];

impl SceneSpec {
    pub fn n_classes(&self) -> usize {
        self.class_frequencies.len()
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.width, self.height, self.pixel_size, self.origin, self.epsg)
    }

    /// Superpixel grid dimensions (rows, cols).
    pub fn superpixel_grid(&self) -> (usize, usize) {
        (
            self.height.div_ceil(self.superpixel_size),
            self.width.div_ceil(self.superpixel_size),
        )
    }

    /// Scene over the 23 habitat classes with class shares equal to the
    /// reference areas and one event per change category, with rates
    /// chosen so each category's expected share of the scene equals its
    /// reference share.
    pub fn habitat_calibrated(width: usize, height: usize, superpixel_size: usize, seed: u64) -> Self {
        let areas = ClassScheme::habitat().areas_ha().expect("bundled scheme has areas");
        let class_total: f64 = areas.iter().sum();
        let change_total: f64 = REFERENCE_CHANGE_AREA_HA.iter().sum();
        let transition_events = CALIBRATION_PAIRS
            .iter()
            .enumerate()
            .map(|(i, &(from_id, to_id))| TransitionEvent {
                from_id,
                to_id,
                rate: (REFERENCE_CHANGE_AREA_HA[i + 1] / change_total) / (areas[from_id as usize] / class_total),
            })
            .collect();
        Self {
            width,
            height,
            superpixel_size,
            class_frequencies: areas.iter().map(|a| a / class_total).collect(),
            transition_events,
            seed,
            pixel_size: default_pixel_size(),
            origin: default_origin(),
            epsg: default_epsg(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSceneSpec(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            ));
        }
        if self.superpixel_size == 0 {
            return bad("superpixel_size must be at least 1".into());
        }
        if self.class_frequencies.is_empty() {
            return bad("class_frequencies is empty".into());
        }
        if self.class_frequencies.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return bad("class frequencies must be finite and non-negative".into());
        }
        let sum: f64 = self.class_frequencies.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("class frequencies sum to {sum}, not 1"));
        }
        let k = self.n_classes();
        let mut per_class = vec![0.0; k];
        for e in &self.transition_events {
            if !(0.0..=1.0).contains(&e.rate) {
                return bad(format!(
                    "event {}->{} has rate {} outside [0, 1]",
                    e.from_id, e.to_id, e.rate
                ));
            }
            for id in [e.from_id, e.to_id] {
                if id as usize >= k {
                    return bad(format!("event {}->{} references absent class {id}", e.from_id, e.to_id));
                }
            }
            per_class[e.from_id as usize] += e.rate;
        }
        if let Some((c, r)) = per_class.iter().enumerate().find(|(_, r)| **r > 1.0 + 1e-12) {
            return bad(format!("event rates from class {c} sum to {r} > 1"));
        }
        if !(self.pixel_size.is_finite() && self.pixel_size > 0.0) {
            return bad(format!("pixel_size must be positive, got {}", self.pixel_size));
        }
        Ok(())
    }

    /// Expected fraction of changed superpixels, `sum(f_from * rate)` over
    /// events whose endpoints differ.
    pub fn expected_change_share(&self) -> f64 {
        self.transition_events
            .iter()
            .filter(|e| e.from_id != e.to_id)
            .map(|e| self.class_frequencies[e.from_id as usize] * e.rate)
            .sum()
    }
}

/// One uniform draw per superpixel from stream `domain`, row-major.
fn superpixel_uniforms(spec: &SceneSpec, domain: u64) -> Vec<f64> {
    let (rows, cols) = spec.superpixel_grid();
    let mut u = vec![0.0; rows * cols];
    u.par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
        // Superpixel k reads word k of the stream; a row is contiguous.
        let mut g = rng::stream(spec.seed, domain, (r * cols) as u64);
        for slot in row {
            *slot = rng::unit_f64(&mut g);
        }
    });
    u
}

/// Expands per-superpixel values to pixels.
fn expand<T: Copy + Send + Sync>(spec: &SceneSpec, per_sp: &[T]) -> Vec<T> {
    let (_, cols) = spec.superpixel_grid();
    let s = spec.superpixel_size;
    let mut out = Vec::with_capacity(spec.width * spec.height);
    for r in 0..spec.height {
        let base = (r / s) * cols;
        out.extend((0..spec.width).map(|c| per_sp[base + c / s]));
    }
    out
}

fn labels_grid(geometry: GridGeometry, values: Vec<u32>, nodata: Option<u32>) -> Result<GeoGrid> {
    GeoGrid::new(geometry, vec![Band::categorical(BandTag::Label, values, nodata)?])
}

/// t1 labels: each superpixel takes the first class whose cumulative
/// frequency exceeds its uniform draw.
pub fn generate_t1(spec: &SceneSpec) -> Result<GeoGrid> {
    spec.validate()?;
    let mut cum = Vec::with_capacity(spec.n_classes());
    let mut acc = 0.0;
    for f in &spec.class_frequencies {
        acc += f;
        cum.push(acc);
    }
    let last_positive = spec
        .class_frequencies
        .iter()
        .rposition(|f| *f > 0.0)
        .expect("frequencies sum to 1") as u32;
    let classes: Vec<u32> = superpixel_uniforms(spec, rng::domain::SYNTH_CLASS)
        .into_iter()
        .map(|u| cum.iter().position(|&c| u < c).map_or(last_positive, |i| i as u32))
        .collect();
    labels_grid(spec.geometry(), expand(spec, &classes), None)
}

/// Applies the spec's events to `t1`. A superpixel's draw `u` selects the
/// event of its class whose cumulative-rate interval contains `u`; the
/// truth grid records that event's category, computed once per event.
/// Returns (t2, truth).
pub fn apply_transitions(t1: &GeoGrid, spec: &SceneSpec, rules: &TransitionRuleSet) -> Result<(GeoGrid, GeoGrid)> {
    spec.validate()?;
    if t1.width() != spec.width || t1.height() != spec.height {
        return Err(Error::InvalidSceneSpec(format!(
            "t1 is {}x{} but the spec describes {}x{}",
            t1.width(),
            t1.height(),
            spec.width,
            spec.height
        )));
    }
    if spec.n_classes() > rules.n_classes() {
        return Err(Error::SchemeMismatch(format!(
            "scene has {} classes, rule set only {}",
            spec.n_classes(),
            rules.n_classes()
        )));
    }
    let (labels, nodata) = t1.labels()?;
    // events[c] = [(upper cumulative rate, to, category)]
    let mut events: Vec<Vec<(f64, u32, u32)>> = vec![Vec::new(); spec.n_classes()];
    for e in &spec.transition_events {
        let list = &mut events[e.from_id as usize];
        let lower = list.last().map_or(0.0, |x| x.0);
        list.push((lower + e.rate, e.to_id, map_transition_pair(e.from_id, e.to_id, rules)?));
    }
    let no_change = rules.no_change();
    let u = expand(spec, &superpixel_uniforms(spec, rng::domain::SYNTH_TRANSITION));
    let pairs: Vec<(u32, u32)> = labels
        .par_iter()
        .zip(u.par_iter())
        .map(|(&c, &u)| {
            if Some(c) == nodata {
                return Ok((c, CHANGE_NODATA));
            }
            let list = events.get(c as usize).ok_or_else(|| {
                Error::SchemeMismatch(format!("t1 label {c} outside the scene's {} classes", spec.n_classes()))
            })?;
            Ok(list
                .iter()
                .find(|(upper, _, _)| u < *upper)
                .map_or((c, no_change), |&(_, to, cat)| (to, cat)))
        })
        .collect::<Result<_>>()?;
    let (t2, truth): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
    Ok((
        labels_grid(*t1.geometry(), t2, nodata)?,
        labels_grid(*t1.geometry(), truth, Some(CHANGE_NODATA))?,
    ))
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub t1: GeoGrid,
    pub t2: GeoGrid,
    pub truth: GeoGrid,
}

pub fn generate_scene(spec: &SceneSpec, rules: &TransitionRuleSet) -> Result<Scene> {
    let t1 = generate_t1(spec)?;
    let (t2, truth) = apply_transitions(&t1, spec, rules)?;
    Ok(Scene { t1, t2, truth })
}

/// Replaces each valid pixel, with probability `noise_rate`, by a class
/// drawn uniformly from the other `n_classes - 1`. Every pixel consumes
/// two words of the stream (flip draw, replacement draw).
pub fn perturb_predictions(labels: &GeoGrid, n_classes: usize, noise_rate: f64, seed: u64) -> Result<GeoGrid> {
    if !(0.0..=1.0).contains(&noise_rate) {
        return Err(Error::InvalidParameter(format!(
            "noise rate {noise_rate} outside [0, 1]"
        )));
    }
    if n_classes < 2 && noise_rate > 0.0 {
        return Err(Error::InvalidParameter("perturbation needs at least 2 classes".into()));
    }
    let (vals, nodata) = labels.labels()?;
    let k = n_classes as u32;
    if let Some(v) = vals.iter().find(|&&v| v >= k && Some(v) != nodata) {
        return Err(Error::SchemeMismatch(format!(
            "label {v} outside the {n_classes}-class scheme"
        )));
    }
    let w = labels.width();
    let mut out = vals.to_vec();
    out.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        let mut g = rng::stream(seed, rng::domain::PERTURB, (r * w * 2) as u64);
        for v in row {
            let flip = rng::unit_f64(&mut g) < noise_rate;
            let j = if k > 1 {
                rng::below(&mut g, u64::from(k - 1)) as u32
            } else {
                g.next_u64() as u32
            };
            if flip && Some(*v) != nodata {
                *v = if j >= *v { j + 1 } else { j };
            }
        }
    });
    GeoGrid::new(
        *labels.geometry(),
        vec![Band::new(
            labels.bands()[0].tag(),
            labels.bands()[0].dtype(),
            crate::raster::BandData::Categorical { values: out, nodata },
        )?],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::build_transition_map;

    fn spec(freq: Vec<f64>, w: usize, sp: usize, seed: u64) -> SceneSpec {
        SceneSpec {
            width: w,
            height: w,
            superpixel_size: sp,
            class_frequencies: freq,
            transition_events: vec![],
            seed,
            pixel_size: 0.2,
            origin: default_origin(),
            epsg: 32633,
        }
    }

    fn shares(g: &GeoGrid, k: usize) -> Vec<f64> {
        let (v, _) = g.labels().unwrap();
        let mut c = vec![0usize; k];
        v.iter().for_each(|&x| c[x as usize] += 1);
        c.iter().map(|&n| n as f64 / v.len() as f64).collect()
    }

    #[test]
    fn single_class_scene() {
        let g = generate_t1(&spec(vec![1.0], 30, 4, 1)).unwrap();
        assert!(g.labels().unwrap().0.iter().all(|&v| v == 0));
    }

    #[test]
    fn two_class_shares() {
        let g = generate_t1(&spec(vec![0.9, 0.1], 1000, 10, 7)).unwrap();
        let s = shares(&g, 2);
        assert!((s[0] - 0.9).abs() < 0.01, "{s:?}");
    }

    #[test]
    fn superpixels_are_uniform_and_deterministic() {
        let sp = spec(vec![0.25; 4], 23, 5, 3);
        let g = generate_t1(&sp).unwrap();
        assert_eq!(g, generate_t1(&sp).unwrap());
        let (v, _) = g.labels().unwrap();
        for r in 0..23 {
            for c in 0..23 {
                assert_eq!(v[r * 23 + c], v[(r / 5 * 5) * 23 + c / 5 * 5]);
            }
        }
        let other = generate_t1(&SceneSpec { seed: 4, ..sp }).unwrap();
        assert_ne!(g, other);
    }

    #[test]
    fn zero_rates_change_nothing() {
        let rules = TransitionRuleSet::habitat();
        let mut sp = spec(vec![0.5, 0.5], 40, 4, 9);
        sp.transition_events = vec![TransitionEvent {
            from_id: 0,
            to_id: 1,
            rate: 0.0,
        }];
        let s = generate_scene(&sp, &rules).unwrap();
        assert_eq!(s.t1, s.t2);
        assert!(s.truth.labels().unwrap().0.iter().all(|&v| v == rules.no_change()));
    }

    #[test]
    fn full_rate_flips_everything() {
        let rules = TransitionRuleSet::habitat();
        let mut sp = spec(vec![0.0, 0.0, 0.0, 1.0], 20, 3, 9);
        sp.transition_events = vec![TransitionEvent {
            from_id: 3,
            to_id: 2,
            rate: 1.0,
        }];
        let s = generate_scene(&sp, &rules).unwrap();
        assert!(s.t2.labels().unwrap().0.iter().all(|&v| v == 2));
        assert!(s.truth.labels().unwrap().0.iter().all(|&v| v == 1));
        assert_eq!(build_transition_map(&s.t1, &s.t2, &rules).unwrap(), s.truth);
    }

    #[test]
    fn invalid_specs() {
        let mut sp = spec(vec![0.5, 0.4], 10, 2, 0);
        assert!(sp.validate().is_err());
        sp.class_frequencies = vec![0.5, 0.5];
        sp.transition_events = vec![TransitionEvent {
            from_id: 0,
            to_id: 5,
            rate: 0.1,
        }];
        assert!(matches!(sp.validate(), Err(Error::InvalidSceneSpec(_))));
        sp.transition_events = vec![
            TransitionEvent {
                from_id: 0,
                to_id: 1,
                rate: 0.6,
            },
            TransitionEvent {
                from_id: 0,
                to_id: 1,
                rate: 0.6,
            },
        ];
        assert!(sp.validate().is_err());
        assert!(SceneSpec::from_json(r#"{"width":1,"height":1,"class_frequencies":[1],"seed":0,"bogus":1}"#).is_err());
    }

    #[test]
    fn perturbation_edge_cases() {
        let g = generate_t1(&spec(vec![0.5, 0.5], 50, 1, 2)).unwrap();
        assert_eq!(perturb_predictions(&g, 2, 0.0, 1).unwrap(), g);
        let flipped = perturb_predictions(&g, 2, 1.0, 1).unwrap();
        let (a, _) = g.labels().unwrap();
        let (b, _) = flipped.labels().unwrap();
        assert!(a.iter().zip(b).all(|(x, y)| x != y));
        assert!(perturb_predictions(&g, 2, 1.5, 1).is_err());
    }

    #[test]
    fn calibrated_scene_matches_reference_change_share() {
        let sp = SceneSpec::habitat_calibrated(100, 100, 1, 0);
        sp.validate().unwrap();
        let expected = 1.0 - REFERENCE_CHANGE_AREA_HA[0] / REFERENCE_CHANGE_AREA_HA.iter().sum::<f64>();
        assert!((sp.expected_change_share() - expected).abs() < 1e-12);
    }
}
