use crate::geogrid::Raster;

/// Fills nodata cells with the mean of their valid 8-neighbors, one sweep at
/// a time (each sweep reads the previous sweep's values). Valid cells never
/// change; holes that remain after `max_iters` sweeps stay nodata.
pub fn fill_holes(r: &Raster, max_iters: usize) -> Raster {
    let (w, h) = (r.spec.width, r.spec.height);
    let mut cur = r.clone();
    for _ in 0..max_iters {
        let mut next = cur.values.clone();
        let mut changed = false;
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                if !cur.is_nodata(cur.values[i]) {
                    continue;
                }
                let mut sum = 0.0f64;
                let mut n = 0u32;
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (rr, cc) = (row as i64 + dr, col as i64 + dc);
                        if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                            continue;
                        }
                        let v = cur.values[rr as usize * w + cc as usize];
                        if !cur.is_nodata(v) {
                            sum += f64::from(v);
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    next[i] = (sum / f64::from(n)) as f32;
                    changed = true;
                }
            }
        }
        cur.values = next;
        if !changed {
            break;
        }
    }
    cur
}
