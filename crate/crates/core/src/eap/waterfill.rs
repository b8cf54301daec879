//! Single-node battery split across frames over convex piecewise-linear
//! surrogates.
//!
//! The dual level `lambda` is found exactly: the linear pieces of every
//! slice are sorted by slope and filled steepest first until the budget runs
//! out, which is the clamp-at-the-slope-inverse rule evaluated at the
//! breakpoint where the demand crosses the budget.

use super::surrogate::FopSurrogate;

#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    /// Energy per slice (per member of a group for the grouped variant).
    pub energies: Vec<f64>,
    /// Dual level; zero when the budget covers every flat point.
    pub lambda: f64,
}

/// Relative slope difference under which two pieces count as tied.
const TIE_REL: f64 = 1e-12;

/// Budget split over `slices`; `None` when their lower bounds exceed `budget`.
pub fn water_fill(slices: &[FopSurrogate], budget: f64) -> Option<WaterFill> {
    water_fill_grouped(slices, &vec![1; slices.len()], budget)
}

/// Like [`water_fill`] where slice `g` stands for `mult[g]` identical frames.
/// Returns the energy of one member of each group.
pub fn water_fill_grouped(slices: &[FopSurrogate], mult: &[usize], budget: f64) -> Option<WaterFill> {
    assert_eq!(slices.len(), mult.len());
    let base: f64 = slices.iter().zip(mult).map(|(s, &m)| m as f64 * s.e_lower).sum();
    if base > budget * (1.0 + 1e-12) + 1e-300 {
        return None;
    }
    let mut energies: Vec<f64> = slices.iter().map(|s| s.e_lower).collect();
    let mut pieces: Vec<(f64, usize, usize)> = Vec::new();
    for (g, s) in slices.iter().enumerate() {
        if mult[g] == 0 {
            continue;
        }
        for (j, slope) in s.slopes().into_iter().enumerate() {
            if slope < 0.0 {
                pieces.push((slope, g, j));
            }
        }
    }
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut remaining = (budget - base).max(0.0);
    let mut lambda = 0.0;
    let mut i = 0;
    while i < pieces.len() {
        let slope = pieces[i].0;
        let mut end = i;
        while end < pieces.len() && (pieces[end].0 - slope).abs() <= TIE_REL * slope.abs() {
            end += 1;
        }
        let tie = &pieces[i..end];
        let len = |&(_, g, j): &(f64, usize, usize)| slices[g].xs[j + 1] - slices[g].xs[j];
        let total: f64 = tie.iter().map(|p| mult[p.1] as f64 * len(p)).sum();
        if total <= remaining {
            for p in tie {
                energies[p.1] += len(p);
            }
            remaining -= total;
        } else {
            let frac = remaining / total;
            for p in tie {
                energies[p.1] += frac * len(p);
            }
            lambda = -slope;
            break;
        }
        i = end;
    }
    Some(WaterFill { energies, lambda })
}

/// Surrogate objective `sum_g mult[g] * slices[g](e[g])`.
pub fn grouped_value(slices: &[FopSurrogate], mult: &[usize], energies: &[f64]) -> f64 {
    slices
        .iter()
        .zip(mult)
        .zip(energies)
        .map(|((s, &m), &e)| m as f64 * s.value(e))
        .sum()
}
