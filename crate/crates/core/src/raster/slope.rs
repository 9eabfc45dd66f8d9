use crate::geogrid::Raster;

/// Terrain slope in degrees from central differences (one-sided at the
/// borders). Any nodata sample in a cell's stencil makes the cell nodata.
pub fn slope_map(height: &Raster) -> Raster {
    let spec = &height.spec;
    let (w, h) = (spec.width, spec.height);
    let cs = spec.cell_size;
    let z = |r: usize, c: usize| -> Option<f64> {
        let v = height.values[r * w + c];
        (!height.is_nodata(v) && v.is_finite()).then_some(f64::from(v))
    };
    // Derivative along one axis given the index, its extent and an accessor.
    let deriv = |i: usize, n: usize, at: &dyn Fn(usize) -> Option<f64>| -> Option<f64> {
        if n == 1 {
            return Some(0.0);
        }
        let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
        Some((at(hi)? - at(lo)?) / ((hi - lo) as f64 * cs))
    };
    let mut values = vec![f32::NAN; w * h];
    for r in 0..h {
        for c in 0..w {
            if z(r, c).is_none() {
                continue;
            }
            let dzdx = deriv(c, w, &|k| z(r, k));
            let dzdy = deriv(r, h, &|k| z(k, c));
            if let (Some(gx), Some(gy)) = (dzdx, dzdy) {
                values[r * w + c] = gx.hypot(gy).atan().to_degrees() as f32;
            }
        }
    }
    Raster::new(spec.clone(), "slope", values).expect("same spec as input")
}
