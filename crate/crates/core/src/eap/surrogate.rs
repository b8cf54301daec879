//! Convex piecewise-linear stand-ins for the per-frame distortion as a
//! function of one node's energy.

use crate::numeric::{bisect, convex_minorant_vertices};

/// Convex, non-increasing, piecewise-linear function of energy on
/// `[e_lower, e_upper]`, constant above `e_upper` and infeasible below
/// `e_lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct FopSurrogate {
    pub e_lower: f64,
    pub e_upper: f64,
    /// Knots, strictly increasing, from `e_lower` to `e_upper`.
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Largest distance between a sample and the envelope.
    pub max_gap: f64,
}

impl FopSurrogate {
    /// A function that is flat from `e_lower` on.
    pub fn flat(e_lower: f64, value: f64) -> Self {
        FopSurrogate {
            e_lower,
            e_upper: e_lower,
            xs: vec![e_lower],
            ys: vec![value],
            max_gap: 0.0,
        }
    }

    /// Greatest convex minorant of samples `(xs[i], ys[i])`, `xs` increasing,
    /// whose last sample is the smallest value.
    pub fn from_samples(xs: &[f64], ys: &[f64]) -> Self {
        assert!(!xs.is_empty() && xs.len() == ys.len());
        let idx = convex_minorant_vertices(xs, ys);
        let mut kx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        let mut ky: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
        // Anything after the lowest knot is flat.
        let lowest = ky
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        kx.truncate(lowest + 1);
        ky.truncate(lowest + 1);
        let mut s = FopSurrogate {
            e_lower: xs[0],
            e_upper: *kx.last().unwrap(),
            xs: kx,
            ys: ky,
            max_gap: 0.0,
        };
        s.max_gap = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| y - s.value(x))
            .fold(0.0, f64::max);
        s
    }

    pub fn value(&self, e: f64) -> f64 {
        if e < self.e_lower {
            return f64::INFINITY;
        }
        if e >= self.e_upper {
            return *self.ys.last().unwrap();
        }
        let j = self.xs.partition_point(|&x| x <= e).max(1) - 1;
        let (x0, x1, y0, y1) = (self.xs[j], self.xs[j + 1], self.ys[j], self.ys[j + 1]);
        y0 + (y1 - y0) * (e - x0) / (x1 - x0)
    }

    pub fn floor(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    /// Slopes of the linear pieces, non-decreasing and non-positive.
    pub fn slopes(&self) -> Vec<f64> {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .collect()
    }

    /// Minimiser of `value(e) + lambda * e`: the knot after every piece
    /// steeper than `-lambda` (strictly when `strict`).
    pub fn demand(&self, lambda: f64, strict: bool) -> f64 {
        let mut k = 0;
        for (x, y) in self.xs.windows(2).zip(self.ys.windows(2)) {
            let s = (y[1] - y[0]) / (x[1] - x[0]);
            let take = if strict { s < -lambda } else { s <= -lambda };
            if !take {
                break;
            }
            k += 1;
        }
        self.xs[k]
    }

    /// `max(self, c)`: convex and flat from where `self` drops to `c`.
    pub fn raised(&self, c: f64) -> FopSurrogate {
        if c <= self.floor() {
            return self.clone();
        }
        if c >= self.ys[0] {
            return FopSurrogate::flat(self.e_lower, c);
        }
        let mut xs = vec![self.xs[0]];
        let mut ys = vec![self.ys[0]];
        for j in 1..self.xs.len() {
            if self.ys[j] > c {
                xs.push(self.xs[j]);
                ys.push(self.ys[j]);
            } else {
                let (x0, y0) = (self.xs[j - 1], self.ys[j - 1]);
                let x = x0 + (self.xs[j] - x0) * (y0 - c) / (y0 - self.ys[j]);
                if x > *xs.last().unwrap() {
                    xs.push(x);
                    ys.push(c);
                } else {
                    *ys.last_mut().unwrap() = c;
                }
                break;
            }
        }
        FopSurrogate {
            e_lower: self.e_lower,
            e_upper: *xs.last().unwrap(),
            xs,
            ys,
            max_gap: self.max_gap,
        }
    }
}

/// Number of bisection steps used to locate the feasibility and flatness
/// thresholds of a slice.
pub const THRESHOLD_STEPS: usize = 48;

/// Samples `f` (distortion as a function of energy, `None` when infeasible)
/// between its feasibility threshold and the point where it stops
/// decreasing, and returns the envelope. `e_cap` must be an energy above
/// which `f` is constant; `None` when `f(e_cap)` is infeasible.
pub fn build_surrogate<F>(mut f: F, e_cap: f64, samples: usize) -> Option<FopSurrogate>
where
    F: FnMut(f64) -> Option<f64>,
{
    let floor = f(e_cap)?;
    let e_lower = bisect(|e| f(e).is_some(), 0.0, e_cap, THRESHOLD_STEPS).1;
    let at_lower = f(e_lower)?;
    if at_lower <= floor {
        return Some(FopSurrogate::flat(e_lower, floor));
    }
    let e_upper = bisect(|e| f(e).is_some_and(|v| v <= floor), e_lower, e_cap, THRESHOLD_STEPS).1;
    let m = samples.max(2);
    let ratio = (e_upper / e_lower).ln() / (m - 1) as f64;
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for i in 0..m {
        let e = if i == 0 {
            e_lower
        } else if i == m - 1 {
            e_upper
        } else {
            e_lower * (ratio * i as f64).exp()
        };
        let y = if i == 0 {
            at_lower
        } else if i == m - 1 {
            floor
        } else {
            f(e).unwrap_or(at_lower)
        };
        xs.push(e);
        ys.push(y);
    }
    Some(FopSurrogate::from_samples(&xs, &ys))
}
