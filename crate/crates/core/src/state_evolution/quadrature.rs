//! Adaptive Gauss–Kronrod (7/15) integration of vector-valued integrands.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights for the odd Kronrod nodes 1, 3, 5, 7.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    lo: f64,
    hi: f64,
    value: Vec<f64>,
    error: Vec<f64>,
}

fn rule(f: &dyn Fn(f64, &mut [f64]), k: usize, lo: f64, hi: f64, buf: &mut [f64]) -> Segment {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut kron = vec![0.0; k];
    let mut gauss = vec![0.0; k];
    for (j, (&x, &w)) in XGK.iter().zip(&WGK).enumerate() {
        let pts: &[f64] = if x == 0.0 { &[0.0] } else { &[-x, x] };
        for &p in pts {
            f(c + h * p, buf);
            for q in 0..k {
                kron[q] += w * buf[q];
                if j % 2 == 1 {
                    gauss[q] += WG[j / 2] * buf[q];
                }
            }
        }
    }
    let value: Vec<f64> = kron.iter().map(|v| v * h).collect();
    let error = kron
        .iter()
        .zip(&gauss)
        .map(|(a, b)| ((a - b) * h).abs())
        .collect();
    Segment { lo, hi, value, error }
}

/// Integrates the `k` outputs of `f` over `[lo, hi]`, split first at `breaks`.
pub(crate) fn integrate(
    f: &dyn Fn(f64, &mut [f64]),
    k: usize,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Vec<f64> {
    let mut cuts = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    inner.sort_by(f64::total_cmp);
    cuts.extend(inner);
    cuts.push(hi);

    let mut buf = vec![0.0; k];
    let mut segs: Vec<Segment> = cuts
        .windows(2)
        .map(|w| rule(f, k, w[0], w[1], &mut buf))
        .collect();
    for _ in 0..4000 {
        let total: Vec<f64> = (0..k).map(|q| segs.iter().map(|s| s.value[q]).sum()).collect();
        let err: Vec<f64> = (0..k).map(|q| segs.iter().map(|s| s.error[q]).sum()).collect();
        let done = (0..k).all(|q| err[q] <= abs_tol.max(rel_tol * total[q].abs()));
        if done {
            return total;
        }
        // Split the segment contributing most to the worst component.
        let worst = (0..k)
            .max_by(|&a, &b| {
                let ra = err[a] / abs_tol.max(rel_tol * total[a].abs());
                let rb = err[b] / abs_tol.max(rel_tol * total[b].abs());
                ra.total_cmp(&rb)
            })
            .unwrap();
        let idx = (0..segs.len())
            .max_by(|&a, &b| segs[a].error[worst].total_cmp(&segs[b].error[worst]))
            .unwrap();
        let s = segs.swap_remove(idx);
        let mid = 0.5 * (s.lo + s.hi);
        if !(mid > s.lo && mid < s.hi) {
            segs.push(s);
            break;
        }
        segs.push(rule(f, k, s.lo, mid, &mut buf));
        segs.push(rule(f, k, mid, s.hi, &mut buf));
    }
    (0..k).map(|q| segs.iter().map(|s| s.value[q]).sum()).collect()
}
