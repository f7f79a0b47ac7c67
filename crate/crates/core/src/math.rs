//! Scalar numerics shared by the threshold and bound evaluators.

/// `max(0, -ln x)`.
pub fn ln_minus(x: f64) -> f64 {
    (-x.ln()).max(0.0)
}

/// `max(0, ln x)`.
pub fn ln_plus(x: f64) -> f64 {
    x.ln().max(0.0)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
/// Gauss weights for the odd-indexed Kronrod nodes (plus the centre).
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G_WEIGHTS[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]` to relative
/// tolerance `rel_tol`. `None` when the subdivision budget runs out or the
/// integrand is not finite, which for positive integrands signals divergence.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    let mut pending = vec![(a, b, gk15(&f, a, b))];
    let mut total: f64 = 0.0;
    let mut evaluations = 0usize;
    // Intervals are refined until each carries its share of the tolerance.
    let whole = pending[0].2 .0.abs();
    while let Some((lo, hi, (val, err))) = pending.pop() {
        evaluations += 1;
        if !val.is_finite() || evaluations > 20_000 {
            return None;
        }
        let share = rel_tol * whole.max(total.abs()) * (hi - lo).abs() / (b - a).abs();
        if err <= share.max(1e-300) {
            total += val;
            continue;
        }
        if (hi - lo).abs() < 1e-14 * (b - a).abs() {
            return None;
        }
        let mid = 0.5 * (lo + hi);
        pending.push((lo, mid, gk15(&f, lo, mid)));
        pending.push((mid, hi, gk15(&f, mid, hi)));
    }
    total.is_finite().then_some(total)
}

/// Root of an increasing `g` on `[lo, hi]` by bisection to absolute width `tol`.
pub fn bisect_increasing(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..400 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maximiser of a unimodal `f` on `[a, b]` by golden-section search.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
