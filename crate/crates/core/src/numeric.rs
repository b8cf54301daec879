//! Scalar search and quadrature primitives shared by the solvers.

use std::sync::OnceLock;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimisation of a unimodal `f` on `[a, b]`.
///
/// Stops when the bracket is narrower than `tol` or after `max_iter`
/// iterations. Returns the best point seen and its value.
pub fn golden_section_min<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
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
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bisection on a monotone predicate with `pred(lo) == false`, `pred(hi) == true`.
///
/// Returns the final `(lo, hi)` bracket.
pub fn bisect<P: FnMut(f64) -> bool>(mut pred: P, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Bisection in `ln x` for positive brackets spanning several decades.
pub fn bisect_log<P: FnMut(f64) -> bool>(mut pred: P, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let (a, b) = bisect(|y| pred(y.exp()), lo.ln(), hi.ln(), iters);
    (a.exp(), b.exp())
}

// ---------------------------------------------------------------------------
// Gauss–Legendre quadrature

pub const GL_ORDER: usize = 10;

struct GaussLegendre {
    nodes: [f64; GL_ORDER],
    weights: [f64; GL_ORDER],
}

fn gauss_legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    })
}

/// Fixed-order Gauss–Legendre estimate of `∫_a^b f`.
pub fn gl_fixed<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> f64 {
    let rule = gauss_legendre();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(rule.weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Adaptive composite Gauss–Legendre. Panels are split until the whole-panel
/// and two-half estimates agree; the error budget is `rel_tol` times the
/// first estimate of the integral (at least `abs_tol`), shared among panels.
pub fn adaptive_gl<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let whole = gl_fixed(&mut f, a, b);
    let budget = (rel_tol * whole.abs()).max(abs_tol);
    refine(&mut f, a, b, whole, budget, 0)
}

fn refine<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, whole: f64, budget: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl_fixed(f, a, m);
    let right = gl_fixed(f, m, b);
    let both = left + right;
    if (both - whole).abs() <= budget || depth >= 50 {
        return both;
    }
    refine(f, a, m, left, 0.5 * budget, depth + 1) + refine(f, m, b, right, 0.5 * budget, depth + 1)
}

/// [`adaptive_gl`] for an integrand known to be monotone on `[a, b]`.
///
/// A panel whose endpoint values already pin its integral to within its
/// share of the budget is closed with the trapezoid value, which bounds the
/// work spent near weak singularities at the ends.
pub fn adaptive_gl_monotone<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let whole = gl_fixed(&mut f, a, b);
    let budget = (rel_tol * whole.abs()).max(abs_tol);
    refine_monotone(&mut f, a, b, fa, fb, whole, budget, 0)
}

#[allow(clippy::too_many_arguments)]
fn refine_monotone<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    whole: f64,
    budget: f64,
    depth: u32,
) -> f64 {
    if fa.is_finite() && fb.is_finite() && (b - a) * (fb - fa).abs() <= budget {
        return 0.5 * (b - a) * (fa + fb);
    }
    let m = 0.5 * (a + b);
    let left = gl_fixed(f, a, m);
    let right = gl_fixed(f, m, b);
    let both = left + right;
    if (both - whole).abs() <= budget || depth >= 50 {
        return both;
    }
    let fm = f(m);
    refine_monotone(f, a, m, fa, fm, left, 0.5 * budget, depth + 1)
        + refine_monotone(f, m, b, fm, fb, right, 0.5 * budget, depth + 1)
}

// ---------------------------------------------------------------------------
// Greatest convex minorant

/// Vertices of the greatest convex minorant of the points `(x[i], y[i])`,
/// `x` strictly increasing. Returned as indices into the input.
pub fn convex_minorant_vertices(x: &[f64], y: &[f64]) -> Vec<usize> {
    assert_eq!(x.len(), y.len());
    // Pool adjacent violators on the slope sequence, keeping block endpoints.
    let mut hull: Vec<usize> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        while hull.len() >= 2 {
            let j = hull[hull.len() - 1];
            let k = hull[hull.len() - 2];
            let s_kj = (y[j] - y[k]) / (x[j] - x[k]);
            let s_ji = (y[i] - y[j]) / (x[i] - x[j]);
            if s_ji <= s_kj {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}
