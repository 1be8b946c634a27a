//! Acceptance criteria. Run with
//! `cargo test -p habitat-cd-core --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use habitat_cd::metrics::{
    accumulate, accumulate_sharded, macro_average, overall_accuracy, per_class_f1, per_class_iou, per_class_recall,
    report, ConfusionMatrix, UndefinedPolicy,
};
use habitat_cd::raster::{Band, BandTag, GeoGrid, GridGeometry};
use habitat_cd::runner::{direct_change, execute, ChangeMapKind, ExperimentConfig, Task, Taxonomy};
use habitat_cd::sampling::{assign_split, extract_patches, mosaic_labels, partition_blocks, Role};
use habitat_cd::synth::{
    apply_transitions, generate_scene, generate_t1, perturb_predictions, SceneSpec, TransitionEvent,
    REFERENCE_CHANGE_AREA_HA,
};
use habitat_cd::taxonomy::{area_stats, build_transition_map, shares_percent, ClassScheme, TransitionRuleSet};
use habitat_cd::terrain::{curvature, roughness, slope_aspect};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// Runs one criterion, prints its verdict and fails the test on violation
/// of either the checks or the runtime bound.
fn criterion(n: u32, name: &str, limit: Duration, body: impl FnOnce() -> Check) {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let outcome = outcome.and_then(|_| {
        if elapsed < limit {
            Ok(())
        } else {
            Err(format!("took {elapsed:?}, limit {limit:?}"))
        }
    });
    match &outcome {
        Ok(()) => println!("criterion {n:>2} PASS  {name} ({:.3} s)", elapsed.as_secs_f64()),
        Err(e) => println!("criterion {n:>2} FAIL  {name}: {e}"),
    }
    if let Err(e) = outcome {
        panic!("criterion {n} failed: {e}");
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn below(r: &mut ChaCha8Rng, n: u64) -> u64 {
    r.next_u64() % n
}

fn unit(r: &mut ChaCha8Rng) -> f64 {
    (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn geom(w: usize, h: usize) -> GridGeometry {
    GridGeometry::new(w, h, 0.2, (500_000.0, 5_270_000.0), 32633)
}

fn labels(w: usize, h: usize, v: Vec<u32>, nodata: Option<u32>) -> GeoGrid {
    GeoGrid::from_labels(geom(w, h), v, nodata).unwrap()
}

// Published per-class columns of the best post-classification model:
// (per-class OA, IoU, F1), in table row order.
const PUBLISHED: [(f64, f64, f64); 9] = [
    (0.57, 0.56, 0.72),
    (0.56, 0.1, 0.18),
    (0.36, 0.23, 0.38),
    (0.66, 0.4, 0.57),
    (0.41, 0.11, 0.2),
    (0.72, 0.02, 0.04),
    (0.25, 0.15, 0.25),
    (0.33, 0.01, 0.02),
    (0.74, 0.1, 0.18),
];
const PUBLISHED_MACRO: (f64, f64, f64) = (0.51, 0.19, 0.28);

/// Confusion matrix whose per-class recall and IoU equal the published
/// columns. Row sizes are chosen so that total FN equals total FP:
/// with FN_k = n_k (1 - r_k) and FP_k = n_k (r_k / i_k - 1) this needs
/// sum n_k (r_k / i_k + r_k - 2) = 0. Off-diagonal mass is then moved from
/// rows with FN to columns with FP greedily.
fn published_fixture() -> ConfusionMatrix {
    let k = PUBLISHED.len();
    let c: Vec<f64> = PUBLISHED.iter().map(|&(r, i, _)| r / i + r - 2.0).collect();
    let mut n = vec![0.0; k];
    let base = 1.0e5;
    let mut positive = 0.0;
    for j in 1..k {
        n[j] = base;
        positive += c[j] * base;
    }
    assert!(c[0] < 0.0);
    n[0] = positive / -c[0];
    let rows: Vec<u64> = n.iter().map(|x| x.round() as u64).collect();
    let tp: Vec<u64> = (0..k)
        .map(|j| (PUBLISHED[j].0 * rows[j] as f64).round() as u64)
        .collect();
    let mut fn_left: Vec<i64> = (0..k).map(|j| (rows[j] - tp[j]) as i64).collect();
    let mut fp_left: Vec<i64> = (0..k)
        .map(|j| (tp[j] as f64 / PUBLISHED[j].1 - rows[j] as f64).round() as i64)
        .collect();
    // Absorb rounding drift in the largest FP column.
    let drift = fn_left.iter().sum::<i64>() - fp_left.iter().sum::<i64>();
    let big = (0..k).max_by_key(|&j| fp_left[j]).unwrap();
    fp_left[big] += drift;
    let mut m = ConfusionMatrix::new(k);
    for (j, &t) in tp.iter().enumerate() {
        m.add(j, j, t);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&j| std::cmp::Reverse(fn_left[j]));
    for &r in &order {
        while fn_left[r] > 0 {
            let col = (0..k).filter(|&j| j != r && fp_left[j] > 0).max_by_key(|&j| fp_left[j]);
            let Some(col) = col else { break };
            let x = fn_left[r].min(fp_left[col]);
            m.add(r, col, x as u64);
            fn_left[r] -= x;
            fp_left[col] -= x;
        }
    }
    assert!(
        fn_left.iter().all(|&x| x == 0) && fp_left.iter().all(|&x| x == 0),
        "transport incomplete"
    );
    m
}

#[test]
fn criterion_01_macro_average_arithmetic() {
    criterion(
        1,
        "macro-average arithmetic of the published per-class columns",
        Duration::from_secs(1),
        || {
            let col =
                |f: fn(&(f64, f64, f64)) -> f64| -> Vec<Option<f64>> { PUBLISHED.iter().map(|x| Some(f(x))).collect() };
            let oa = macro_average(&col(|x| x.0), UndefinedPolicy::Exclude).map_err(|e| e.to_string())?;
            let iou = macro_average(&col(|x| x.1), UndefinedPolicy::Exclude).map_err(|e| e.to_string())?;
            let f1 = macro_average(&col(|x| x.2), UndefinedPolicy::Exclude).map_err(|e| e.to_string())?;
            let (eo, ei, ef) = PUBLISHED_MACRO;
            ensure!((oa - eo).abs() <= 0.005, "macro OA {oa}");
            ensure!((iou - ei).abs() <= 0.005, "macro IoU {iou}");
            ensure!((f1 - ef).abs() <= 0.005, "macro F1 {f1}");

            // The same columns realised as a confusion matrix and sent through
            // the report path.
            let m = published_fixture();
            let r = report(&m, &ClassScheme::transition_categories(), UndefinedPolicy::Exclude)
                .map_err(|e| e.to_string())?;
            for (j, c) in r.classes.iter().enumerate() {
                let (pr, pi, pf) = PUBLISHED[j];
                ensure!((c.recall.unwrap() - pr).abs() < 1e-4, "class {j} recall {:?}", c.recall);
                ensure!((c.iou.unwrap() - pi).abs() < 1e-4, "class {j} IoU {:?}", c.iou);
                // F1 follows from IoU; both published columns are rounded to two
                // decimals, so the published F1 must fall in the interval spanned
                // by the IoU rounding interval, widened by its own rounding.
                let f = |i: f64| 2.0 * i / (1.0 + i);
                ensure!(
                    (c.f1.unwrap() - f(c.iou.unwrap())).abs() <= 1e-12,
                    "class {j}: F1 and IoU inconsistent"
                );
                ensure!(
                    f(pi - 0.005) - 0.005 <= pf && pf <= f(pi + 0.005) + 0.005,
                    "class {j}: published F1 {pf} not implied by IoU {pi}"
                );
            }
            ensure!(
                (r.macro_recall - eo).abs() <= 0.005,
                "report macro recall {}",
                r.macro_recall
            );
            ensure!((r.macro_iou - ei).abs() <= 0.005, "report macro IoU {}", r.macro_iou);
            ensure!((r.macro_f1 - ef).abs() <= 0.005, "report macro F1 {}", r.macro_f1);
            Ok(())
        },
    );
}

/// One-row grid where class k occupies `counts[k]` pixels.
fn count_grid(counts: &[u64], pixel_size: f64) -> GeoGrid {
    let v: Vec<u32> = counts
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat_n(k as u32, n as usize))
        .collect();
    let g = GridGeometry::new(v.len(), 1, pixel_size, (0.0, pixel_size), 32633);
    GeoGrid::new(g, vec![Band::categorical(BandTag::Label, v, None).unwrap()]).unwrap()
}

#[test]
fn criterion_02_area_shares() {
    criterion(
        2,
        "area shares from the published hectare columns",
        Duration::from_secs(1),
        || {
            let habitat = ClassScheme::habitat();
            let areas = habitat.areas_ha().ok_or("habitat scheme lacks areas")?;
            let rock = habitat.id_of("Rock").ok_or("no Rock class")? as usize;
            let shares = shares_percent(&areas);
            ensure!((shares[rock] - 17.1).abs() <= 0.05, "Rock share {}", shares[rock]);
            let change = shares_percent(&REFERENCE_CHANGE_AREA_HA);
            ensure!((change[0] - 90.9).abs() <= 0.05, "No change share {}", change[0]);

            // Rasters with 0.1 ha pixels and 10 pixels per published 0.1 ha.
            let px = 1000f64.sqrt();
            let counts: Vec<u64> = areas.iter().map(|a| (a * 10.0).round() as u64).collect();
            let rows = area_stats(&count_grid(&counts, px), &habitat).map_err(|e| e.to_string())?;
            ensure!(
                (rows[rock].area_ha - 2632.8).abs() < 1e-6,
                "Rock area {}",
                rows[rock].area_ha
            );
            ensure!(
                (rows[rock].share_percent - 17.1).abs() <= 0.05,
                "Rock raster share {}",
                rows[rock].share_percent
            );
            let counts: Vec<u64> = REFERENCE_CHANGE_AREA_HA
                .iter()
                .map(|a| (a * 10.0).round() as u64)
                .collect();
            let rows = area_stats(&count_grid(&counts, px), &ClassScheme::transition_categories())
                .map_err(|e| e.to_string())?;
            ensure!(
                (rows[0].share_percent - 90.9).abs() <= 0.05,
                "No change raster share {}",
                rows[0].share_percent
            );
            Ok(())
        },
    );
}

/// Random prediction/reference pair with a sprinkling of nodata.
fn random_pair(r: &mut ChaCha8Rng, w: usize, h: usize, k: u32) -> (GeoGrid, GeoGrid) {
    let nd = 255;
    let draw = |r: &mut ChaCha8Rng| -> Vec<u32> {
        (0..w * h)
            .map(|_| {
                if below(r, 50) == 0 {
                    nd
                } else {
                    below(r, k as u64) as u32
                }
            })
            .collect()
    };
    let p = draw(r);
    let q = draw(r);
    (labels(w, h, p, Some(nd)), labels(w, h, q, Some(nd)))
}

#[test]
fn criterion_03_metric_oracle() {
    criterion(
        3,
        "confusion metrics equal a per-pixel oracle",
        Duration::from_secs(10),
        || {
            let mut r = rng(3);
            for case in 0..120 {
                let w = 1 + below(&mut r, 64) as usize;
                let h = 1 + below(&mut r, 64) as usize;
                let k = 1 + below(&mut r, 9) as u32;
                let (pred, reference) = random_pair(&mut r, w, h, k);
                let m = accumulate(&pred, &reference, None, k as usize).map_err(|e| e.to_string())?;
                let (p, _) = pred.labels().unwrap();
                let (q, _) = reference.labels().unwrap();
                let valid: Vec<(u32, u32)> = p
                    .iter()
                    .zip(q)
                    .filter(|(a, b)| **a != 255 && **b != 255)
                    .map(|(a, b)| (*a, *b))
                    .collect();
                if valid.is_empty() {
                    ensure!(overall_accuracy(&m).is_err(), "case {case}: empty matrix gave an OA");
                    continue;
                }
                let hits = valid.iter().filter(|(a, b)| a == b).count();
                let oa = overall_accuracy(&m).map_err(|e| e.to_string())?;
                ensure!(oa == hits as f64 / valid.len() as f64, "case {case}: OA {oa}");
                let (iou, f1, rec) = (per_class_iou(&m), per_class_f1(&m), per_class_recall(&m));
                for c in 0..k {
                    let tp = valid.iter().filter(|&&(a, b)| a == c && b == c).count() as u64;
                    let fp = valid.iter().filter(|&&(a, b)| a == c && b != c).count() as u64;
                    let fn_ = valid.iter().filter(|&&(a, b)| a != c && b == c).count() as u64;
                    let ci = c as usize;
                    let want_iou = (tp + fp + fn_ > 0).then(|| tp as f64 / (tp + fp + fn_) as f64);
                    let want_f1 = (tp + fp + fn_ > 0).then(|| 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
                    let want_rec = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
                    ensure!(
                        iou[ci] == want_iou,
                        "case {case} class {c}: IoU {:?} vs {want_iou:?}",
                        iou[ci]
                    );
                    ensure!(
                        f1[ci] == want_f1,
                        "case {case} class {c}: F1 {:?} vs {want_f1:?}",
                        f1[ci]
                    );
                    ensure!(
                        rec[ci] == want_rec,
                        "case {case} class {c}: recall {:?} vs {want_rec:?}",
                        rec[ci]
                    );
                    if let (Some(i), Some(f)) = (iou[ci], f1[ci]) {
                        ensure!(
                            (f - 2.0 * i / (1.0 + i)).abs() <= 1e-12,
                            "case {case} class {c}: F1/IoU identity"
                        );
                    }
                }
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_04_sharded_merge_determinism() {
    criterion(
        4,
        "sharded confusion merges are bit-identical",
        Duration::from_secs(10),
        || {
            let mut r = rng(4);
            for case in 0..10 {
                let w = 50 + below(&mut r, 300) as usize;
                let h = 50 + below(&mut r, 300) as usize;
                let k = 2 + below(&mut r, 8) as usize;
                let (pred, reference) = random_pair(&mut r, w, h, k as u32);
                let scheme = ClassScheme::numbered(k).unwrap();
                let whole = accumulate(&pred, &reference, None, k).map_err(|e| e.to_string())?;
                let whole_json = report(&whole, &scheme, UndefinedPolicy::Exclude)
                    .and_then(|x| x.to_json_string())
                    .map_err(|e| e.to_string())?;
                for shards in [1, 2, 8] {
                    let m = accumulate_sharded(&pred, &reference, None, k, shards).map_err(|e| e.to_string())?;
                    ensure!(m == whole, "case {case}: {shards} shards changed the counts");
                    let json = report(&m, &scheme, UndefinedPolicy::Exclude)
                        .and_then(|x| x.to_json_string())
                        .map_err(|e| e.to_string())?;
                    ensure!(json == whole_json, "case {case}: {shards} shards changed the report");
                }
                // Spatial tiles merged in reverse order give the same counts.
                let mut merged = ConfusionMatrix::new(k);
                let mut tiles = Vec::new();
                for r0 in (0..h).step_by(64) {
                    for c0 in (0..w).step_by(64) {
                        tiles.push((r0, c0, 64.min(h - r0), 64.min(w - c0)));
                    }
                }
                for &(r0, c0, th, tw) in tiles.iter().rev() {
                    let p = pred.window(r0, c0, th, tw).map_err(|e| e.to_string())?;
                    let q = reference.window(r0, c0, th, tw).map_err(|e| e.to_string())?;
                    merged
                        .merge_into(&accumulate(&p, &q, None, k).map_err(|e| e.to_string())?)
                        .map_err(|e| e.to_string())?;
                }
                ensure!(merged == whole, "case {case}: tile merge differs");
            }
            Ok(())
        },
    );
}

/// Label grid with rectangular patches of random classes.
fn random_labels(r: &mut ChaCha8Rng, w: usize, h: usize) -> GeoGrid {
    let k = 1 + below(r, 23) as u32;
    let cell = 1 + below(r, 40) as usize;
    let cols = w.div_ceil(cell);
    let cells: Vec<u32> = (0..h.div_ceil(cell) * cols)
        .map(|_| below(r, k as u64) as u32)
        .collect();
    let v = (0..w * h)
        .map(|i| cells[(i / w / cell) * cols + (i % w) / cell])
        .collect();
    labels(w, h, v, None)
}

#[test]
fn criterion_05_tiling_round_trip() {
    criterion(
        5,
        "extract_patches then mosaic_labels is the identity",
        Duration::from_secs(10),
        || {
            let mut r = rng(5);
            let mut sizes = vec![(500, 500), (256, 256), (257, 700), (448, 448), (511, 256)];
            while sizes.len() < 55 {
                sizes.push((256 + below(&mut r, 350) as usize, 256 + below(&mut r, 350) as usize));
            }
            for (case, &(w, h)) in sizes.iter().enumerate() {
                let g = random_labels(&mut r, w, h);
                let (index, patches) = extract_patches(&g, 256, 64).map_err(|e| e.to_string())?;
                ensure!(
                    patches.iter().all(|p| p.grid.width() == 256 && p.grid.height() == 256),
                    "case {case}: patch size"
                );
                ensure!(index.len() == patches.len(), "case {case}: index length");
                let back = mosaic_labels(&patches, g.geometry()).map_err(|e| e.to_string())?;
                ensure!(back == g, "case {case}: {w}x{h} round-trip differs");
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_06_split_correctness() {
    criterion(
        6,
        "spatial block split counts, determinism and partition",
        Duration::from_secs(1),
        || {
            let p = partition_blocks(1000, 1000, 100).map_err(|e| e.to_string())?;
            ensure!(p.len() == 100, "{} blocks", p.len());
            let fractions = [0.7, 0.15, 0.15];
            let a = assign_split(&p, 42, fractions).map_err(|e| e.to_string())?;
            ensure!(a.counts() == [70, 15, 15], "counts {:?}", a.counts());
            let b = assign_split(&p, 42, fractions).map_err(|e| e.to_string())?;
            ensure!(a == b, "same seed gave different assignments");
            let c = assign_split(&p, 43, fractions).map_err(|e| e.to_string())?;
            ensure!(c.counts() == [70, 15, 15], "counts with another seed {:?}", c.counts());
            let masks: Vec<Vec<bool>> = Role::ALL.iter().map(|&role| a.pixel_mask(role)).collect();
            for i in 0..1_000_000 {
                let n = masks.iter().filter(|m| m[i]).count();
                ensure!(n == 1, "pixel {i} is in {n} role masks");
            }
            Ok(())
        },
    );
}

fn dem(w: usize, h: usize, f: impl Fn(f64, f64) -> f64) -> GeoGrid {
    let px = 0.2;
    let v = (0..w * h)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            // Map coordinates: x east along columns, y north against rows.
            f(c * px, -r * px)
        })
        .collect();
    GeoGrid::from_values(geom(w, h), BandTag::Dtm, v, Some(-9999.0)).unwrap()
}

fn interior(g: &GeoGrid) -> Vec<f64> {
    let (v, _) = g.values().unwrap();
    let (w, h) = (g.width(), g.height());
    (1..h - 1).flat_map(|r| (1..w - 1).map(move |c| v[r * w + c])).collect()
}

/// Clockwise quarter turn: the west column becomes the north row.
fn rotate_cw(g: &GeoGrid) -> GeoGrid {
    let (v, nd) = g.values().unwrap();
    let (w, h) = (g.width(), g.height());
    let mut out = vec![0.0; w * h];
    for r in 0..w {
        for c in 0..h {
            out[r * h + c] = v[(h - 1 - c) * w + r];
        }
    }
    GeoGrid::from_values(geom(h, w), BandTag::Dtm, out, nd).unwrap()
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[test]
fn criterion_07_terrain_kernels() {
    criterion(7, "terrain planes and invariances", Duration::from_secs(5), || {
        let err = |e: habitat_cd::Error| e.to_string();
        let (slope, aspect) = slope_aspect(&dem(20, 20, |x, _| x)).map_err(err)?;
        ensure!(
            interior(&slope).iter().all(|s| (s - 45.0).abs() < 1e-6),
            "east plane slope"
        );
        ensure!(
            interior(&aspect).iter().all(|a| (a - 270.0).abs() < 1e-6),
            "east plane aspect"
        );
        let (slope, aspect) = slope_aspect(&dem(20, 20, |x, y| 0.5 * x + 0.5 * y)).map_err(err)?;
        let want = (0.5f64.hypot(0.5)).atan().to_degrees();
        ensure!((want - 35.264).abs() < 1e-3, "oracle slope {want}");
        ensure!(
            interior(&slope).iter().all(|s| (s - want).abs() < 1e-6),
            "diagonal plane slope"
        );
        ensure!(
            interior(&aspect).iter().all(|a| (a - 225.0).abs() < 1e-6),
            "diagonal plane aspect"
        );

        let mut r = rng(7);
        let (w, h) = (40, 30);
        let v: Vec<f64> = (0..w * h).map(|_| 100.0 + 5.0 * unit(&mut r)).collect();
        let base = GeoGrid::from_values(geom(w, h), BandTag::Dtm, v.clone(), Some(-9999.0)).unwrap();
        let shifted = GeoGrid::from_values(
            geom(w, h),
            BandTag::Dtm,
            v.iter().map(|z| z + 1234.5).collect(),
            Some(-9999.0),
        )
        .unwrap();
        let products = |g: &GeoGrid| -> Result<[GeoGrid; 4], String> {
            let (s, a) = slope_aspect(g).map_err(err)?;
            Ok([s, a, roughness(g, 3).map_err(err)?, curvature(g).map_err(err)?])
        };
        let p0 = products(&base)?;
        let p1 = products(&shifted)?;
        for (i, (a, b)) in p0.iter().zip(&p1).enumerate() {
            let (x, y) = (interior(a), interior(b));
            let worst = x
                .iter()
                .zip(&y)
                .map(|(u, v)| if i == 1 { angle_diff(*u, *v) } else { (u - v).abs() })
                .fold(0.0, f64::max);
            ensure!(worst <= 1e-9, "offset changed product {i} by {worst}");
        }
        let p2 = products(&rotate_cw(&base))?;
        for (i, (a, b)) in p0.iter().zip(&p2).enumerate() {
            let turned = interior(&rotate_cw(a));
            let y = interior(b);
            let worst = turned
                .iter()
                .zip(&y)
                .map(|(u, v)| {
                    if i == 1 {
                        angle_diff(u + 90.0, *v)
                    } else {
                        (u - v).abs()
                    }
                })
                .fold(0.0, f64::max);
            ensure!(worst <= 1e-9, "rotation changed product {i} by {worst}");
        }
        Ok(())
    });
}

fn random_spec(r: &mut ChaCha8Rng, seed: u64) -> SceneSpec {
    let k = 2 + below(r, 22) as usize;
    let raw: Vec<f64> = (0..k).map(|_| unit(r) + 0.01).collect();
    let total: f64 = raw.iter().sum();
    let mut freq: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let rest: f64 = freq[1..].iter().sum();
    freq[0] = 1.0 - rest;
    let mut events = Vec::new();
    let mut budget = vec![1.0; k];
    for _ in 0..below(r, 12) {
        let from = below(r, k as u64) as usize;
        let rate = unit(r) * budget[from] * 0.9;
        budget[from] -= rate;
        events.push(TransitionEvent {
            from_id: from as u32,
            to_id: below(r, k as u64) as u32,
            rate,
        });
    }
    SceneSpec {
        width: 20 + below(r, 200) as usize,
        height: 20 + below(r, 200) as usize,
        superpixel_size: 1 + below(r, 30) as usize,
        class_frequencies: freq,
        transition_events: events,
        seed,
        pixel_size: 0.2,
        origin: (500_000.0, 5_270_000.0),
        epsg: 32633,
    }
}

#[test]
fn criterion_08_cross_module_oracle() {
    criterion(
        8,
        "generator truth equals the taxonomy transition map",
        Duration::from_secs(30),
        || {
            let rules = TransitionRuleSet::habitat();
            let nc = rules.no_change();
            let mut r = rng(8);
            for case in 0..20 {
                let spec = random_spec(&mut r, case);
                spec.validate().map_err(|e| format!("case {case}: {e}"))?;
                let s = generate_scene(&spec, &rules).map_err(|e| e.to_string())?;
                let t = build_transition_map(&s.t1, &s.t2, &rules).map_err(|e| e.to_string())?;
                ensure!(t == s.truth, "case {case}: truth differs from build_transition_map");
                let same = build_transition_map(&s.t1, &s.t1, &rules).map_err(|e| e.to_string())?;
                ensure!(
                    same.labels().unwrap().0.iter().all(|&v| v == nc),
                    "case {case}: identity is not all No change"
                );
                let quiet = SceneSpec {
                    transition_events: vec![],
                    ..spec
                };
                let t1 = generate_t1(&quiet).map_err(|e| e.to_string())?;
                let (t2, truth) = apply_transitions(&t1, &quiet, &rules).map_err(|e| e.to_string())?;
                ensure!(t2 == t1, "case {case}: no events but t2 differs");
                ensure!(
                    truth.labels().unwrap().0.iter().all(|&v| v == nc),
                    "case {case}: no events but change"
                );
            }
            Ok(())
        },
    );
}

#[test]
fn criterion_09_noise_calibration() {
    criterion(
        9,
        "noise model and all-no-change calibration",
        Duration::from_secs(60),
        || {
            let rules = TransitionRuleSet::habitat();
            let spec = SceneSpec::habitat_calibrated(1000, 1000, 2, 9);
            let s = generate_scene(&spec, &rules).map_err(|e| e.to_string())?;
            for (i, p) in [0.1, 0.2, 0.5].into_iter().enumerate() {
                let noisy = perturb_predictions(&s.t2, 23, p, 90 + i as u64).map_err(|e| e.to_string())?;
                let m = accumulate(&noisy, &s.t2, None, 23).map_err(|e| e.to_string())?;
                let oa = overall_accuracy(&m).map_err(|e| e.to_string())?;
                ensure!((oa - (1.0 - p)).abs() <= 0.01, "noise {p}: OA {oa}");
            }

            let nc = rules.no_change();
            let truth_vals = s.truth.labels().unwrap().0;
            let share = truth_vals.iter().filter(|&&v| v == nc).count() as f64 / truth_vals.len() as f64;
            ensure!((share - 0.909).abs() <= 0.005, "scene no-change share {share}");
            let all_nc = labels(1000, 1000, vec![nc; 1_000_000], Some(255));
            let evals = direct_change(
                "all_no_change",
                &all_nc,
                ChangeMapKind::Multiclass,
                &s.truth,
                &Taxonomy::habitat(),
                None,
                UndefinedPolicy::Exclude,
            )
            .map_err(|e| e.to_string())?;
            let binary = &evals
                .iter()
                .find(|e| e.task == Task::Binary)
                .ok_or("no binary evaluation")?
                .report;
            ensure!(
                (binary.overall_accuracy - 0.909).abs() <= 0.005,
                "binary OA {}",
                binary.overall_accuracy
            );
            ensure!(
                binary.classes[1].iou == Some(0.0),
                "change-class IoU {:?}",
                binary.classes[1].iou
            );
            Ok(())
        },
    );
}

#[test]
fn criterion_10_end_to_end_reproducibility() {
    criterion(
        10,
        "bundled synthetic run is byte-identical across reruns",
        Duration::from_secs(60),
        || {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let cfg = ExperimentConfig::bundled_synthetic().with_seed(42);
            for sub in ["first", "second"] {
                execute(&cfg, &dir.path().join(sub)).map_err(|e| e.to_string())?;
            }
            for f in ["report.json", "report.csv", "confusion.csv"] {
                let a = std::fs::read(dir.path().join("first").join(f)).map_err(|e| e.to_string())?;
                let b = std::fs::read(dir.path().join("second").join(f)).map_err(|e| e.to_string())?;
                ensure!(!a.is_empty() && a == b, "{f} differs between runs");
            }
            Ok(())
        },
    );
}
