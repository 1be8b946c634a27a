use super::grid::{Band, BandTag, GeoGrid};
use crate::error::{Error, Result};

/// Assembles one multi-band grid from co-registered inputs, taking the
/// first band carrying each requested tag, in the requested order.
pub fn stack(grids: &[&GeoGrid], tags: &[BandTag]) -> Result<GeoGrid> {
    let first = grids
        .first()
        .ok_or_else(|| Error::InvalidParameter("stack needs at least one grid".into()))?;
    for g in &grids[1..] {
        first.geometry().check_coregistered(g.geometry())?;
    }
    let bands: Vec<Band> = tags
        .iter()
        .map(|&tag| {
            grids
                .iter()
                .find_map(|g| g.band_by_tag(tag))
                .cloned()
                .ok_or(Error::MissingTag(tag))
        })
        .collect::<Result<_>>()?;
    GeoGrid::new(*first.geometry(), bands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridGeometry;

    fn geom() -> GridGeometry {
        GridGeometry::new(2, 2, 0.2, (500_000.0, 5_270_000.0), 32633)
    }

    #[test]
    fn stacks_in_requested_order() {
        let dtm = GeoGrid::from_values(geom(), BandTag::Dtm, vec![1.0; 4], None).unwrap();
        let labels = GeoGrid::from_labels(geom(), vec![0, 1, 2, 3], None).unwrap();
        let s = stack(&[&dtm, &labels], &[BandTag::Label, BandTag::Dtm]).unwrap();
        assert_eq!(s.bands()[0].tag(), BandTag::Label);
        assert_eq!(s.bands()[1].tag(), BandTag::Dtm);
    }

    #[test]
    fn missing_tag_is_an_error() {
        let dtm = GeoGrid::from_values(geom(), BandTag::Dtm, vec![1.0; 4], None).unwrap();
        assert!(matches!(
            stack(&[&dtm], &[BandTag::Nir]),
            Err(Error::MissingTag(BandTag::Nir))
        ));
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let a = GeoGrid::from_values(geom(), BandTag::Dtm, vec![1.0; 4], None).unwrap();
        let mut g = geom();
        g.origin.0 += 0.1;
        let b = GeoGrid::from_values(g, BandTag::Dsm, vec![1.0; 4], None).unwrap();
        let err = stack(&[&a, &b], &[BandTag::Dtm]).unwrap_err();
        assert!(err.to_string().contains("grids not co-registered"));
    }
}
