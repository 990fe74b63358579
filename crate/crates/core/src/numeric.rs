//! Small numerical helpers shared by the model and the samplers.

/// Standard normal CDF.
#[cfg_attr(not(test), allow(dead_code))]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, tol);
    }
    // Split up front so narrow features inside a long interval are not skipped.
    const PIECES: usize = 16;
    let h = (b - a) / PIECES as f64;
    (0..PIECES)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == PIECES { b } else { lo + h };
            let fa = f(lo);
            let fm = f(0.5 * (lo + hi));
            let fb = f(hi);
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(&f, lo, hi, fa, fm, fb, whole, tol / PIECES as f64, 48)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || (b - a) < 1e-14 * (1.0 + a.abs()) {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Solves `f(t) = target` for a nondecreasing `f` on `[lo, ∞)`.
///
/// The bracket is grown geometrically from `lo`, narrowed by bisection, and
/// finished with safeguarded secant steps.
pub fn invert_increasing<F: Fn(f64) -> f64>(f: F, target: f64, lo: f64, tol: f64) -> f64 {
    let mut a = lo;
    let mut fa = f(a) - target;
    if fa >= 0.0 {
        return a;
    }
    let mut step = 1.0_f64.max(lo.abs());
    let mut b = a + step;
    let mut fb = f(b) - target;
    while fb < 0.0 {
        a = b;
        fa = fb;
        step *= 2.0;
        b = a + step;
        fb = f(b) - target;
        if !b.is_finite() {
            return f64::INFINITY;
        }
    }
    // Coarse bisection first; secant is only trusted on a short bracket.
    while b - a > 1e-3 * (1.0 + a.abs()) {
        let m = 0.5 * (a + b);
        let fm = f(m) - target;
        if fm < 0.0 {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let mut x = if fb != fa { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = f(x) - target;
        if fx == 0.0 {
            return x;
        }
        // Keep the bracket shrinking even when the secant stalls on one side.
        let probe = if fx < 0.0 { (x + tol).min(b) } else { (x - tol).max(a) };
        let fp = f(probe) - target;
        if fx < 0.0 {
            a = x;
            fa = fx;
            if fp >= 0.0 {
                b = probe;
                fb = fp;
            }
        } else {
            b = x;
            fb = fx;
            if fp < 0.0 {
                a = probe;
                fa = fp;
            }
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_polynomials_and_exponentials() {
        assert!((integrate(|x| x * x, 0.0, 3.0, 1e-12) - 9.0).abs() < 1e-11);
        let e = integrate(f64::exp, 0.0, 1.0, 1e-13);
        assert!((e - (std::f64::consts::E - 1.0)).abs() < 1e-12);
        assert_eq!(integrate(|x| x, 2.0, 2.0, 1e-12), 0.0);
        assert!((integrate(|x| x, 1.0, 0.0, 1e-12) + 0.5).abs() < 1e-14);
    }

    #[test]
    fn inversion_round_trips() {
        let f = |t: f64| t + 0.5 * t * t;
        let t = invert_increasing(f, 1.5, 0.0, 1e-13);
        assert!((t - 1.0).abs() < 1e-12);
        let g = |t: f64| t.powi(3);
        assert!((invert_increasing(g, 1000.0, 0.0, 1e-12) - 10.0).abs() < 1e-11);
    }

    #[test]
    fn normal_tails_are_complementary() {
        for &x in &[-3.0, -0.5, 0.0, 1.2, 4.0] {
            assert!((normal_cdf(x) + normal_sf(x) - 1.0).abs() < 1e-15);
        }
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }
}
