use super::{CellIndex, CostMap, Raster, C_MIN};
use crate::error::{Error, Result};

/// Overwrites `cm` with the valid cells of `patch`, whose top-left cell lands
/// on `anchor`. Nodata patch cells leave the underlying cost untouched.
pub fn apply_local_update(cm: &CostMap, patch: &Raster, anchor: CellIndex) -> Result<CostMap> {
    let (ph, pw) = (patch.spec.height, patch.spec.width);
    if anchor.row + ph > cm.spec.height || anchor.col + pw > cm.spec.width {
        return Err(Error::OutOfBounds(format!(
            "{ph}x{pw} patch at ({}, {}) overflows {}x{} costmap",
            anchor.row, anchor.col, cm.spec.height, cm.spec.width
        )));
    }
    let mut out = cm.clone();
    for r in 0..ph {
        for c in 0..pw {
            let v = patch.values[r * pw + c];
            if patch.is_nodata(v) {
                continue;
            }
            if !(C_MIN..=1.0).contains(&v) {
                return Err(Error::Range(format!("patch cost {v} at ({r}, {c}) outside [{C_MIN}, 1]")));
            }
            let i = out.spec.index(CellIndex::new(anchor.row + r, anchor.col + c));
            out.values[i] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geogrid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_costmap(rng: &mut impl Rng, w: usize, h: usize) -> CostMap {
        let spec = GridSpec::unit(w, h);
        let values = (0..w * h).map(|_| rng.random_range(C_MIN..=1.0)).collect();
        CostMap::new(spec, values).unwrap()
    }

    #[test]
    fn nodata_patch_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cm = random_costmap(&mut rng, 10, 10);
        let patch = Raster::filled(GridSpec::unit(4, 3), "patch", f32::NAN);
        assert_eq!(apply_local_update(&cm, &patch, CellIndex::new(2, 2)).unwrap(), cm);
    }

    #[test]
    fn single_cell_patch() {
        let cm = CostMap::uniform(GridSpec::unit(10, 10), 0.2).unwrap();
        let patch = Raster::filled(GridSpec::unit(1, 1), "patch", 1.0);
        let out = apply_local_update(&cm, &patch, CellIndex::new(5, 5)).unwrap();
        for (i, (&a, &b)) in cm.values.iter().zip(&out.values).enumerate() {
            if i == 55 {
                assert_eq!(b, 1.0);
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn overflow_rejected() {
        let cm = CostMap::uniform(GridSpec::unit(10, 10), 0.2).unwrap();
        let patch = Raster::filled(GridSpec::unit(3, 3), "patch", 0.5);
        assert!(matches!(
            apply_local_update(&cm, &patch, CellIndex::new(8, 0)),
            Err(Error::OutOfBounds(_))
        ));
    }

    #[test]
    fn random_patches_leave_outside_untouched_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let cm = random_costmap(&mut rng, 24, 18);
            let (pw, ph) = (rng.random_range(1..8), rng.random_range(1..8));
            let anchor = CellIndex::new(rng.random_range(0..=18 - ph), rng.random_range(0..=24 - pw));
            let vals = (0..pw * ph)
                .map(|_| if rng.random_bool(0.3) { f32::NAN } else { rng.random_range(C_MIN..=1.0) })
                .collect();
            let patch = Raster::new(GridSpec::unit(pw, ph), "patch", vals).unwrap();
            let out = apply_local_update(&cm, &patch, anchor).unwrap();
            for r in 0..18 {
                for c in 0..24 {
                    let inside = r >= anchor.row && r < anchor.row + ph && c >= anchor.col && c < anchor.col + pw;
                    let i = r * 24 + c;
                    if !inside {
                        assert_eq!(cm.values[i].to_bits(), out.values[i].to_bits());
                    } else {
                        let pv = patch.values[(r - anchor.row) * pw + (c - anchor.col)];
                        let want = if pv.is_nan() { cm.values[i] } else { pv };
                        assert_eq!(out.values[i].to_bits(), want.to_bits());
                    }
                }
            }
            assert_eq!(apply_local_update(&out, &patch, anchor).unwrap(), out);
        }
    }
}
