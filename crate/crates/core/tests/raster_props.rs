use std::collections::BTreeSet;

use habitat_cd::raster::{
    parse_text, read_raster, resample_to, stack, to_text, write_raster, Band, BandData, BandTag, DataType, Extent,
    GeoGrid, GridGeometry,
};
use proptest::prelude::*;

fn geom(w: usize, h: usize, px: f64) -> GridGeometry {
    GridGeometry::new(w, h, px, (400_000.0, 5_200_000.0), 32633)
}

fn categorical(dtype: DataType) -> impl Strategy<Value = GeoGrid> {
    let max = match dtype {
        DataType::U8 => 254u32,
        DataType::U16 => 65_534,
        _ => 1_000_000,
    };
    (1usize..24, 1usize..24, any::<bool>()).prop_flat_map(move |(w, h, with_nd)| {
        prop::collection::vec(0..=max, w * h).prop_map(move |mut v| {
            let nodata = with_nd.then_some(max + 1);
            if with_nd {
                v[0] = max + 1;
            }
            let band = Band::new(BandTag::Label, dtype, BandData::Categorical { values: v, nodata }).unwrap();
            GeoGrid::new(geom(w, h, 0.2), vec![band]).unwrap()
        })
    })
}

fn continuous(dtype: DataType) -> impl Strategy<Value = GeoGrid> {
    (1usize..24, 1usize..24, 1usize..4).prop_flat_map(move |(w, h, nb)| {
        prop::collection::vec(prop::collection::vec(-1.0e4f64..1.0e4, w * h), nb).prop_map(move |bands| {
            let bands = bands
                .into_iter()
                .enumerate()
                .map(|(i, mut v)| {
                    if dtype == DataType::F32 {
                        v.iter_mut().for_each(|x| *x = *x as f32 as f64);
                    }
                    v[0] = -9999.0;
                    let data = BandData::Continuous {
                        values: v,
                        nodata: Some(-9999.0),
                    };
                    Band::new(BandTag::Generic(i as u32), dtype, data).unwrap()
                })
                .collect();
            GeoGrid::new(geom(w, h, 0.5), bands).unwrap()
        })
    })
}

fn round_trip(g: &GeoGrid, name: &str) -> GeoGrid {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(name);
    write_raster(g, &path).unwrap();
    read_raster(&path).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn geotiff_round_trip_u8(g in categorical(DataType::U8)) {
        prop_assert_eq!(round_trip(&g, "a.tif"), g);
    }

    #[test]
    fn geotiff_round_trip_u16(g in categorical(DataType::U16)) {
        prop_assert_eq!(round_trip(&g, "a.tif"), g);
    }

    #[test]
    fn geotiff_round_trip_i32(g in categorical(DataType::I32)) {
        prop_assert_eq!(round_trip(&g, "a.tif"), g);
    }

    #[test]
    fn geotiff_round_trip_f32(g in continuous(DataType::F32)) {
        prop_assert_eq!(round_trip(&g, "a.tif"), g);
    }

    #[test]
    fn geotiff_round_trip_f64(g in continuous(DataType::F64)) {
        prop_assert_eq!(round_trip(&g, "a.tif"), g);
    }

    #[test]
    fn text_round_trip(g in categorical(DataType::U16)) {
        prop_assert_eq!(parse_text(&to_text(&g).unwrap()).unwrap(), g);
    }

    #[test]
    fn nearest_never_invents_labels(
        g in categorical(DataType::U8),
        px in prop::sample::select(vec![0.05, 0.1, 0.2, 0.4, 0.6]),
    ) {
        let e = g.geometry().extent();
        let cols = ((e.max_x - e.min_x) / px).floor().max(1.0);
        let rows = ((e.max_y - e.min_y) / px).floor().max(1.0);
        let target = Extent::new(e.min_x, e.max_y - rows * px, e.min_x + cols * px, e.max_y);
        let out = resample_to(&g, px, target).unwrap();
        let (src, src_nd) = g.labels().unwrap();
        let allowed: BTreeSet<u32> = src.iter().copied().collect();
        let (dst, dst_nd) = out.labels().unwrap();
        for v in dst {
            prop_assert!(allowed.contains(v) || Some(*v) == dst_nd || Some(*v) == src_nd, "label {v} invented");
        }
    }

    #[test]
    fn bilinear_reproduces_affine_fields(
        a in -5.0f64..5.0, b in -5.0f64..5.0, c in -100.0f64..100.0,
        w in 4usize..20, h in 4usize..20,
        factor in prop::sample::select(vec![2.0, 4.0]),
    ) {
        let px = 1.0;
        let gm = geom(w, h, px);
        let (x0, y0) = gm.origin;
        let v = (0..w * h)
            .map(|i| {
                let (r, col) = ((i / w) as f64, (i % w) as f64);
                a * (x0 + (col + 0.5) * px) + b * (y0 - (r + 0.5) * px) + c
            })
            .collect();
        let band = Band::new(BandTag::Dtm, DataType::F64, BandData::Continuous { values: v, nodata: None }).unwrap();
        let g = GeoGrid::new(gm, vec![band]).unwrap();
        let tpx = px / factor;
        let out = resample_to(&g, tpx, gm.extent()).unwrap();
        let (vals, _) = out.values().unwrap();
        let (ow, oh) = (out.width(), out.height());
        // Interior: target centres strictly between the outermost source centres.
        for r in 0..oh {
            for col in 0..ow {
                let x = x0 + (col as f64 + 0.5) * tpx;
                let y = y0 - (r as f64 + 0.5) * tpx;
                let inside = x > x0 + 0.5 * px && x < x0 + (w as f64 - 0.5) * px
                    && y < y0 - 0.5 * px && y > y0 - (h as f64 - 0.5) * px;
                if inside {
                    let want = a * x + b * y + c;
                    prop_assert!((vals[r * ow + col] - want).abs() <= 1e-6, "({r},{col}) {} vs {want}", vals[r * ow + col]);
                }
            }
        }
    }

    #[test]
    fn stack_preserves_order_and_inputs(perm in Just(vec![0usize, 1, 2]).prop_shuffle(), w in 1usize..10, h in 1usize..10) {
        let gm = geom(w, h, 0.2);
        let tags = [BandTag::R, BandTag::Nir, BandTag::Ndsm];
        let grids: Vec<GeoGrid> = tags
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let v = vec![i as f64; w * h];
                GeoGrid::new(gm, vec![Band::continuous(t, v, None).unwrap()]).unwrap()
            })
            .collect();
        let before = grids.clone();
        let refs: Vec<&GeoGrid> = grids.iter().collect();
        let order: Vec<BandTag> = perm.iter().map(|&i| tags[i]).collect();
        let s = stack(&refs, &order).unwrap();
        prop_assert_eq!(&grids, &before);
        for (band, &i) in s.bands().iter().zip(&perm) {
            prop_assert_eq!(band.tag(), tags[i]);
            prop_assert_eq!(band.values().unwrap().0[0], i as f64);
        }
    }
}
