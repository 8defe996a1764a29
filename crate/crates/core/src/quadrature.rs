//! Quadrature and interpolation on sampled data.

use num_complex::Complex64 as C64;

/// Composite Simpson weights for `n` uniform samples with spacing `dx`.
///
/// For an even sample count the last four samples use the 3/8 rule. All
/// weights are strictly positive.
pub fn simpson_weights(n: usize, dx: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    match n {
        0 => {}
        1 => {}
        2 => {
            w[0] = 0.5 * dx;
            w[1] = 0.5 * dx;
        }
        3 => {
            w[0] = dx / 3.0;
            w[1] = 4.0 * dx / 3.0;
            w[2] = dx / 3.0;
        }
        _ => {
            // Simpson over the first `m` intervals (m even), 3/8 over the rest.
            let intervals = n - 1;
            let m = if intervals.is_multiple_of(2) { intervals } else { intervals - 3 };
            for i in (0..m).step_by(2) {
                w[i] += dx / 3.0;
                w[i + 1] += 4.0 * dx / 3.0;
                w[i + 2] += dx / 3.0;
            }
            if m < intervals {
                let c = 3.0 * dx / 8.0;
                w[m] += c;
                w[m + 1] += 3.0 * c;
                w[m + 2] += 3.0 * c;
                w[m + 3] += c;
            }
        }
    }
    w
}

pub fn simpson(values: &[f64], dx: f64) -> f64 {
    simpson_weights(values.len(), dx)
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum()
}

/// Cubic Hermite interpolation between (t0, y0, dy0) and (t1, y1, dy1).
#[inline]
pub fn hermite<T>(t0: f64, t1: f64, y0: T, y1: T, dy0: T, dy1: T, t: f64) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    y0 * h00 + dy0 * (h10 * h) + y1 * h01 + dy1 * (h11 * h)
}

/// Derivative estimates for uniformly sampled data: fourth-order central
/// differences in the interior, one-sided second-order at the ends.
pub fn sample_derivatives(values: &[C64], dx: f64) -> Vec<C64> {
    let n = values.len();
    let mut d = vec![C64::new(0.0, 0.0); n];
    if n < 2 {
        return d;
    }
    if n < 3 {
        let slope = (values[1] - values[0]) / dx;
        return vec![slope; 2];
    }
    for i in 0..n {
        d[i] = if i >= 2 && i + 2 < n {
            (values[i - 2] - values[i - 1] * 8.0 + values[i + 1] * 8.0 - values[i + 2]) / (12.0 * dx)
        } else if i >= 1 && i + 1 < n {
            (values[i + 1] - values[i - 1]) / (2.0 * dx)
        } else if i == 0 {
            (values[0] * -3.0 + values[1] * 4.0 - values[2]) / (2.0 * dx)
        } else {
            (values[n - 1] * 3.0 - values[n - 2] * 4.0 + values[n - 3]) / (2.0 * dx)
        };
    }
    d
}

/// Piecewise cubic Hermite interpolant over uniformly sampled complex data.
#[derive(Debug, Clone)]
pub struct UniformHermite<'a> {
    t0: f64,
    dx: f64,
    values: &'a [C64],
    slopes: Vec<C64>,
}

impl<'a> UniformHermite<'a> {
    pub fn new(t0: f64, dx: f64, values: &'a [C64]) -> Self {
        let slopes = sample_derivatives(values, dx);
        Self {
            t0,
            dx,
            values,
            slopes,
        }
    }

    /// Value at `t`, or `outside` when `t` lies beyond the sampled range.
    pub fn eval_or(&self, t: f64, outside: C64) -> C64 {
        let n = self.values.len();
        if n == 0 {
            return outside;
        }
        let x = (t - self.t0) / self.dx;
        let last = (n - 1) as f64;
        if x < -1e-9 || x > last + 1e-9 {
            return outside;
        }
        let x = x.clamp(0.0, last);
        let i = (x.floor() as usize).min(n.saturating_sub(2));
        if n == 1 {
            return self.values[0];
        }
        let ta = self.t0 + i as f64 * self.dx;
        hermite(
            ta,
            ta + self.dx,
            self.values[i],
            self.values[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            t,
        )
    }
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
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
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    (kron * h, ((kron - gauss) * h).norm())
}

/// Adaptive Gauss–Kronrod (7/15) integral of a complex integrand.
pub fn integrate_adaptive<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> C64 {
    fn recurse<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, whole: (C64, f64), rel: f64, abs: f64, depth: u32) -> C64 {
        let (val, err) = whole;
        if err <= abs.max(rel * val.norm()) || depth == 0 {
            return val;
        }
        let m = 0.5 * (a + b);
        let left = gk15(f, a, m);
        let right = gk15(f, m, b);
        recurse(f, a, m, left, rel, abs * 0.5, depth - 1) + recurse(f, m, b, right, rel, abs * 0.5, depth - 1)
    }
    if a == b {
        return C64::new(0.0, 0.0);
    }
    recurse(f, a, b, gk15(f, a, b), rel_tol, abs_tol, 30)
}
