use rand::Rng;

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// One octave of value noise: random lattice values every `period` cells,
/// smoothstep-interpolated in between.
fn value_noise(rng: &mut impl Rng, w: usize, h: usize, period: f64) -> Vec<f64> {
    let lw = (w as f64 / period).ceil() as usize + 2;
    let lh = (h as f64 / period).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..lw * lh).map(|_| rng.random::<f64>()).collect();
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        let y = r as f64 / period;
        let (y0, ty) = (y.floor() as usize, smoothstep(y.fract()));
        for c in 0..w {
            let x = c as f64 / period;
            let (x0, tx) = (x.floor() as usize, smoothstep(x.fract()));
            let at = |yy: usize, xx: usize| lattice[yy * lw + xx];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bot = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Multi-octave value noise rescaled to `[0, 1]`. Each octave halves the
/// period and scales the amplitude by `persistence`.
pub(crate) fn fractal_noise(rng: &mut impl Rng, w: usize, h: usize, period: f64, octaves: usize, persistence: f64) -> Vec<f64> {
    let mut acc = vec![0.0; w * h];
    let (mut p, mut amp) = (period, 1.0);
    for _ in 0..octaves.max(1) {
        for (a, v) in acc.iter_mut().zip(value_noise(rng, w, h, p.max(1.0))) {
            *a += amp * v;
        }
        p /= 2.0;
        amp *= persistence;
    }
    let lo = acc.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        acc.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    } else {
        acc.iter_mut().for_each(|v| *v = 0.0);
    }
    acc
}
