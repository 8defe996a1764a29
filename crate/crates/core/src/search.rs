//! One-dimensional maximisation for expensive objectives: a uniform coarse
//! scan followed by golden-section refinement on the bracketing triple.

use rayon::prelude::*;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
    /// The coarse maximum sat on an end of the search interval.
    pub at_boundary: bool,
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`,
/// stopping once the bracket is narrower than `tol`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Maximum {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evaluations = 2;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evaluations += 1;
    }
    let (x, value) = if fc >= fd { (c, fc) } else { (d, fd) };
    Maximum {
        x,
        value,
        evaluations,
        at_boundary: false,
    }
}

/// Evaluates `f` on `lo, lo+step, …, hi` (concurrently), then refines around
/// the best grid point with golden-section search down to `tol`.
///
/// The refined point is only accepted if it beats the best grid value, so
/// the result is never worse than the scan. Ties on the grid go to the
/// lowest abscissa, which keeps the result deterministic.
pub fn scan_then_golden<F>(f: F, lo: f64, hi: f64, step: f64, tol: f64) -> Maximum
where
    F: Fn(f64) -> f64 + Sync,
{
    let n = (((hi - lo) / step).round() as usize).max(1);
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let values: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0usize, |best, (i, &v)| if v > values[best] { i } else { best });
    let at_boundary = best == 0 || best == n;
    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + 1).min(n)];
    let refined = golden_max(&f, a, b, tol);
    let evaluations = xs.len() + refined.evaluations;
    let (x, value) = if refined.value > values[best] {
        (refined.x, refined.value)
    } else {
        (xs[best], values[best])
    };
    Maximum {
        x,
        value,
        evaluations,
        at_boundary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let m = golden_max(|x| -(x - 0.3).powi(2), -1.0, 2.0, 1e-9);
        assert!((m.x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn scan_escapes_local_maximum() {
        // Two lobes; the taller one is at x = 2.
        let f = |x: f64| (-(x + 1.0).powi(2) * 4.0).exp() * 0.8 + (-(x - 2.0).powi(2) * 4.0).exp();
        let m = scan_then_golden(f, -3.0, 3.0, 0.1, 1e-8);
        assert!((m.x - 2.0).abs() < 1e-6);
        assert!(!m.at_boundary);
    }

    #[test]
    fn boundary_maximum_is_flagged() {
        let m = scan_then_golden(|x| x, -1.0, 1.0, 0.25, 1e-6);
        assert!(m.at_boundary);
        assert!((m.x - 1.0).abs() < 1e-6);
    }
}
