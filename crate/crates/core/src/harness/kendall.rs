//! Kendall's tau-b in `O(n log n)` (Knight's merge-sort algorithm).

use std::cmp::Ordering;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TauError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("all values are tied on the {0} side")]
    DegenerateInput(Side),
    #[error("input contains NaN")]
    NotANumber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    X,
    Y,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::X => "x",
            Side::Y => "y",
        })
    }
}

/// Pair counts behind tau-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// Concordant minus discordant pairs.
    pub score: i64,
    /// Pairs not tied in `x`: `C + D` plus pairs tied in `y` only.
    pub untied_x: u64,
    /// Pairs not tied in `y`: `C + D` plus pairs tied in `x` only.
    pub untied_y: u64,
}

impl PairCounts {
    pub fn tau_b(&self) -> f64 {
        self.score as f64 / ((self.untied_x as f64) * (self.untied_y as f64)).sqrt()
    }
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("NaN rejected before sorting")
}

/// Tie-corrected rank correlation
/// `(C - D) / sqrt((C + D + T_x)(C + D + T_y))`, where pairs tied in both
/// inputs count towards neither `T_x` nor `T_y`.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, TauError> {
    pair_counts(x, y).map(|c| c.tau_b())
}

pub fn pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts, TauError> {
    if x.len() != y.len() {
        return Err(TauError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(TauError::TooShort(n));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(TauError::NotANumber);
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(x[a], x[b]).then(cmp(y[a], y[b])));

    let total = (n as u64) * (n as u64 - 1) / 2;
    // Pairs tied in x, and pairs tied in both x and y.
    let (mut tied_x, mut tied_xy) = (0u64, 0u64);
    let mut run_x = 1u64;
    let mut run_xy = 1u64;
    for w in 1..n {
        let (a, b) = (idx[w - 1], idx[w]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                tied_xy += run_xy * (run_xy - 1) / 2;
                run_xy = 1;
            }
        } else {
            tied_x += run_x * (run_x - 1) / 2;
            tied_xy += run_xy * (run_xy - 1) / 2;
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += run_x * (run_x - 1) / 2;
    tied_xy += run_xy * (run_xy - 1) / 2;

    // Sorting the x-ordered sequence by y counts discordant pairs as swaps.
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in 1..n {
        if ys[w - 1] == ys[w] {
            run_y += 1;
        } else {
            tied_y += run_y * (run_y - 1) / 2;
            run_y = 1;
        }
    }
    tied_y += run_y * (run_y - 1) / 2;

    if tied_x == total {
        return Err(TauError::DegenerateInput(Side::X));
    }
    if tied_y == total {
        return Err(TauError::DegenerateInput(Side::Y));
    }
    // C - D = (pairs untied in both) - 2 D.
    let untied_both = total + tied_xy - tied_x - tied_y;
    Ok(PairCounts {
        score: untied_both as i64 - 2 * swaps as i64,
        untied_x: total - tied_x,
        untied_y: total - tied_y,
    })
}

/// Stable merge sort of `v`, returning the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(kendall_tau_b(&x, &x).unwrap(), 1.0);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert_eq!(kendall_tau_b(&x, &rev).unwrap(), -1.0);
    }

    #[test]
    fn one_discordant_pair() {
        let c = pair_counts(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(c, PairCounts { score: 4, untied_x: 6, untied_y: 6 });
        assert!((c.tau_b() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ties_on_both_sides() {
        // Pairs: (0,1) tied x only, (2,3) tied in both, rest concordant or discordant.
        let x = [1.0, 1.0, 2.0, 2.0];
        let y = [1.0, 2.0, 3.0, 3.0];
        let c = pair_counts(&x, &y).unwrap();
        // C = 4 (0-2, 0-3, 1-2, 1-3), D = 0, T_x = 1, T_y = 0.
        assert_eq!(c, PairCounts { score: 4, untied_x: 4, untied_y: 5 });
    }

    #[test]
    fn ties_shared_by_both_inputs() {
        // Tied-x and tied-y pair counts each exceed half of all pairs.
        let x = [1.0, 1.0, 1.0, 1.0, 2.0];
        assert_eq!(pair_counts(&x, &x).unwrap(), PairCounts { score: 4, untied_x: 4, untied_y: 4 });
    }

    #[test]
    fn errors() {
        assert_eq!(kendall_tau_b(&[1.0], &[1.0]), Err(TauError::TooShort(1)));
        assert_eq!(kendall_tau_b(&[1.0, 2.0], &[1.0]), Err(TauError::LengthMismatch(2, 1)));
        assert_eq!(kendall_tau_b(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]), Err(TauError::DegenerateInput(Side::X)));
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]), Err(TauError::DegenerateInput(Side::Y)));
        assert_eq!(kendall_tau_b(&[1.0, f64::NAN], &[1.0, 2.0]), Err(TauError::NotANumber));
    }

    #[test]
    fn signed_zeros_tie() {
        assert_eq!(kendall_tau_b(&[0.0, -0.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), 2.0 / 6f64.sqrt());
    }
}
