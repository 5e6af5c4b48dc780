//! Small numeric utilities shared across modules.

/// Log of a sum of exponentials, stabilized by max subtraction.
///
/// Entries equal to `-inf` contribute nothing; an empty or all-`-inf` input
/// yields `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Maximize a one-dimensional function on `[lo, hi]` by golden-section search.
///
/// Returns the abscissa of the maximum. `tol` is the absolute interval width
/// at which the search stops.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
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
    0.5 * (a + b)
}

/// Maximize `f` over a box by cyclic coordinate descent with golden-section
/// line searches, stopping when a full sweep improves the objective by less
/// than `tol`.
///
/// The line search shrinks around the current point, so the result stays
/// inside `bounds`. Returns the polished point and its objective value.
pub fn coordinate_descent_max<F>(
    f: F,
    start: &[f64],
    bounds: &[(f64, f64)],
    tol: f64,
    max_sweeps: usize,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(start.len(), bounds.len());
    let mut x = start.to_vec();
    let mut best = f(&x);
    for _ in 0..max_sweeps {
        let before = best;
        for i in 0..x.len() {
            let (lo, hi) = bounds[i];
            // Shrink the bracket towards the current coordinate in stages so
            // the golden-section tolerance stays meaningful on wide boxes.
            let mut half = (hi - lo) / 2.0;
            while half > tol {
                let a = (x[i] - half).max(lo);
                let b = (x[i] + half).min(hi);
                let xi = golden_section_max(
                    |v| {
                        let mut y = x.clone();
                        y[i] = v;
                        f(&y)
                    },
                    a,
                    b,
                    (tol * half / (hi - lo)).max(1e-14),
                );
                let mut y = x.clone();
                y[i] = xi;
                let fy = f(&y);
                if fy > best {
                    best = fy;
                    x = y;
                }
                half *= 0.25;
            }
        }
        if best - before < tol {
            break;
        }
    }
    (x, best)
}
