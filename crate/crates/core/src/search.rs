//! One-dimensional maximisation: coarse grid bracketing, then golden section.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximisation of `f` on `[lo, hi]` down to an interval of
/// width `tol`. On equal values the left sub-interval is kept, so ties
/// resolve toward smaller arguments.
pub fn golden_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
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
    }
    // best of the surviving probes and the interval ends
    let mut best = (a, f(a));
    for x in [c, d, b] {
        let fx = if x == c {
            fc
        } else if x == d {
            fd
        } else {
            f(x)
        };
        if fx > best.1 || (fx == best.1 && x < best.0) {
            best = (x, fx);
        }
    }
    best
}

/// Maximises `f` over `[lo, hi]`: scan a grid with spacing `coarse`, then
/// refine with golden section between the neighbours of the best node.
///
/// Returns `None` when the interval is empty or not finite.
pub fn bracketed_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, coarse: f64, tol: f64) -> Option<(f64, f64)> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() || !(coarse > 0.0) {
        return None;
    }
    let steps = ((hi - lo) / coarse).ceil().max(0.0) as usize;
    let node = |i: usize| if i >= steps { hi } else { lo + i as f64 * coarse };
    let mut best_i = 0;
    let mut best_v = f(node(0));
    for i in 1..=steps {
        let v = f(node(i));
        if v > best_v {
            best_i = i;
            best_v = v;
        }
    }
    let a = node(best_i.saturating_sub(1));
    let b = node((best_i + 1).min(steps));
    let (x, fx) = golden_max(f, a, b, tol);
    if fx > best_v || (fx == best_v && x < node(best_i)) {
        Some((x, fx))
    } else {
        Some((node(best_i), best_v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_peak() {
        let f = |x: f64| -(x - 1.234).powi(2);
        let (x, _) = golden_max(&f, -3.0, 5.0, 1e-6);
        assert!((x - 1.234).abs() < 1e-5);
    }

    #[test]
    fn bracketing_escapes_local_maximum() {
        // local bump at 1, global peak at 8
        let f = |x: f64| (-(x - 1.0).powi(2)).exp() * 0.5 + (-(x - 8.0).powi(2)).exp();
        let (x, _) = bracketed_max(&f, 0.0, 10.0, 0.5, 1e-4).unwrap();
        assert!((x - 8.0).abs() < 1e-3, "{x}");
    }

    #[test]
    fn boundary_maximum() {
        let f = |x: f64| x;
        let (x, _) = bracketed_max(&f, 0.0, 3.3, 0.5, 1e-4).unwrap();
        assert_eq!(x, 3.3);
        let (x, _) = bracketed_max(&|x: f64| -x, 0.0, 3.3, 0.5, 1e-4).unwrap();
        assert_eq!(x, 0.0);
    }

    #[test]
    fn plateau_prefers_smaller_argument() {
        let f = |_x: f64| 1.0;
        let (x, _) = bracketed_max(&f, 2.0, 9.0, 0.5, 1e-3).unwrap();
        assert_eq!(x, 2.0);
    }

    #[test]
    fn empty_interval() {
        assert!(bracketed_max(&|x| x, 2.0, 1.0, 0.5, 1e-3).is_none());
        assert_eq!(bracketed_max(&|x| x, 2.0, 2.0, 0.5, 1e-3), Some((2.0, 2.0)));
    }
}
