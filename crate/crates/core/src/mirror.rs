//! Step-function bookkeeping shared by the BC, flexible-BC and knockoff
//! thresholds.
//!
//! Each hypothesis contributes a rejection point `r_i` (rejected once
//! `t >= r_i`) and a mirror point `s_i` (counted as a false-rejection
//! proxy once `t >= s_i`). Both counts only jump at these points, so the
//! supremum of any feasibility set is attained on the merged grid.

/// Upper end of the admissible threshold range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Upper {
    /// `t < bound`
    Below(f64),
    /// `t <= bound`
    AtMost(f64),
}

impl Upper {
    pub(crate) fn admits(self, t: f64) -> bool {
        match self {
            Upper::Below(b) => t < b,
            Upper::AtMost(b) => t <= b,
        }
    }
}

/// `m <= r * alpha`, the feasibility test used throughout.
///
/// Written as a product so that it agrees bit-for-bit with the e-BH
/// comparison `n / m >= n / (r * alpha)`.
#[inline]
pub(crate) fn within(m: usize, r: usize, alpha: f64) -> bool {
    (m as f64) <= (r as f64) * alpha
}

/// Admissible grid points with the rejection and mirror counts at each.
#[derive(Debug, Clone)]
pub(crate) struct Plateaus {
    pub t: Vec<f64>,
    pub rejected: Vec<usize>,
    pub mirrored: Vec<usize>,
}

impl Plateaus {
    pub(crate) fn build(rej: &[f64], mir: &[f64], upper: Upper) -> Self {
        let mut rs = rej.to_vec();
        rs.sort_by(f64::total_cmp);
        let mut ss = mir.to_vec();
        ss.sort_by(f64::total_cmp);
        let mut t: Vec<f64> = rs
            .iter()
            .chain(ss.iter())
            .copied()
            .filter(|&v| v >= 0.0 && upper.admits(v))
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        let (mut a, mut b) = (0usize, 0usize);
        let mut rejected = Vec::with_capacity(t.len());
        let mut mirrored = Vec::with_capacity(t.len());
        for &x in &t {
            while a < rs.len() && rs[a] <= x {
                a += 1;
            }
            while b < ss.len() && ss[b] <= x {
                b += 1;
            }
            rejected.push(a);
            mirrored.push(b);
        }
        Self { t, rejected, mirrored }
    }

    pub(crate) fn len(&self) -> usize {
        self.t.len()
    }

    /// Largest grid index whose counts satisfy `pred(R, S)`.
    pub(crate) fn last_where(&self, pred: impl Fn(usize, usize) -> bool) -> Option<usize> {
        (0..self.len())
            .rev()
            .find(|&k| pred(self.rejected[k], self.mirrored[k]))
    }
}

/// Largest admissible `t` with `(1 + S(t)) <= alpha * R(t)`.
///
/// Returns the grid point together with `R(t)` and `S(t)`.
pub(crate) fn mirror_threshold(
    rej: &[f64],
    mir: &[f64],
    alpha: f64,
    upper: Upper,
) -> Option<(f64, usize, usize)> {
    let pl = Plateaus::build(rej, mir, upper);
    pl.last_where(|r, s| within(1 + s, r, alpha))
        .map(|k| (pl.t[k], pl.rejected[k], pl.mirrored[k]))
}

/// For every hypothesis `j`, whether `s_j <= T_j`, where `T_j` is the
/// threshold recomputed after swapping `r_j` and `s_j`.
///
/// Only hypotheses flagged in `swappable` (those whose rejection point lies
/// outside the admissible range while the mirror point may lie inside) can
/// be counted. After the swap the counts change to `R + 1`, `S - 1` on
/// `[s_j, upper)`, so the indicator reduces to comparing `s_j` against the
/// largest grid point with `S <= alpha (R + 1)`.
pub(crate) fn swapped_indicators(
    pl: &Plateaus,
    mir: &[f64],
    swappable: &[bool],
    alpha: f64,
) -> Vec<bool> {
    let b = pl
        .last_where(|r, s| within(s, r + 1, alpha))
        .map(|k| pl.t[k]);
    mir.iter()
        .zip(swappable)
        .map(|(&s, &ok)| ok && b.is_some_and(|b| s <= b))
        .collect()
}
