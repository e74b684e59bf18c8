//! Finitely supported sequences, best N-term approximation and coarsening.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index label of a sequence entry.
pub type Index = usize;

/// Finitely supported real sequence.
///
/// Entries are kept sorted by index and no stored coefficient is zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(Index, f64)>,
}

impl SparseVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector from arbitrary pairs. Duplicate indices are summed and
    /// zero results dropped.
    pub fn from_pairs<I: IntoIterator<Item = (Index, f64)>>(pairs: I) -> Self {
        let mut map: BTreeMap<Index, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *map.entry(i).or_insert(0.0) += v;
        }
        Self::from_map(map)
    }

    pub fn from_map(map: BTreeMap<Index, f64>) -> Self {
        Self {
            entries: map.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        }
    }

    /// Pairs must be strictly increasing in index.
    fn from_sorted(entries: Vec<(Index, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        Self {
            entries: entries.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_sorted(values.iter().copied().enumerate().collect())
    }

    pub fn unit(i: Index) -> Self {
        Self {
            entries: vec![(i, 1.0)],
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(i, v) in &self.entries {
            if i < n {
                out[i] = v;
            }
        }
        out
    }

    pub fn entries(&self) -> &[(Index, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (Index, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<Index> {
        self.entries.last().map(|e| e.0)
    }

    pub fn get(&self, i: Index) -> f64 {
        match self.entries.binary_search_by_key(&i, |e| e.0) {
            Ok(p) => self.entries[p].1,
            Err(_) => 0.0,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        norm(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, &(_, v)| m.max(v.abs()))
    }

    /// Inner product together with the number of multiply-adds performed.
    pub fn dot_counted(&self, other: &SparseVector) -> (f64, u64) {
        let (a, b) = (&self.entries, &other.entries);
        let (mut p, mut q) = (0, 0);
        let mut sum = 0.0;
        let mut ops = 0;
        while p < a.len() && q < b.len() {
            match a[p].0.cmp(&b[q].0) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    sum += a[p].1 * b[q].1;
                    ops += 1;
                    p += 1;
                    q += 1;
                }
            }
        }
        (sum, ops)
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        self.dot_counted(other).0
    }

    pub fn scale(&self, a: f64) -> SparseVector {
        Self::from_sorted(self.entries.iter().map(|&(i, v)| (i, a * v)).collect())
    }

    /// `self + a * other`, merging supports.
    pub fn add_scaled(&self, a: f64, other: &SparseVector) -> SparseVector {
        let (x, y) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(x.len() + y.len());
        let (mut p, mut q) = (0, 0);
        while p < x.len() || q < y.len() {
            if q == y.len() || (p < x.len() && x[p].0 < y[q].0) {
                out.push(x[p]);
                p += 1;
            } else if p == x.len() || y[q].0 < x[p].0 {
                out.push((y[q].0, a * y[q].1));
                q += 1;
            } else {
                out.push((x[p].0, x[p].1 + a * y[q].1));
                p += 1;
                q += 1;
            }
        }
        Self::from_sorted(out)
    }

    pub fn sub(&self, other: &SparseVector) -> SparseVector {
        self.add_scaled(-1.0, other)
    }

    /// Entries of `self` whose index lies in the support of `mask`.
    pub fn restrict_to(&self, mask: &SparseVector) -> SparseVector {
        let mut out = Vec::with_capacity(mask.support_size().min(self.support_size()));
        let (a, b) = (&self.entries, &mask.entries);
        let (mut p, mut q) = (0, 0);
        while p < a.len() && q < b.len() {
            match a[p].0.cmp(&b[q].0) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    out.push(a[p]);
                    p += 1;
                    q += 1;
                }
            }
        }
        Self::from_sorted(out)
    }

    /// One `index,value` line per entry, sorted by index, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for &(i, v) in &self.entries {
            let _ = writeln!(s, "{i},{v:.16e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (i, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected index,value", lineno + 1)))?;
            let i: Index = i
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            pairs.push((i, v));
        }
        Ok(Self::from_pairs(pairs))
    }
}

/// Euclidean norm.
pub fn norm(x: &SparseVector) -> f64 {
    x.norm_sq().sqrt()
}

/// Returns `x / ||x||`.
///
/// A vector whose norm already equals one up to the rounding error of the
/// norm computation is returned unchanged, which makes the map idempotent.
pub fn normalize(x: &SparseVector) -> Result<SparseVector> {
    let nrm = norm(x);
    if nrm == 0.0 || !nrm.is_finite() {
        return Err(Error::ZeroVector);
    }
    let slack = (x.support_size() as f64 + 2.0) * f64::EPSILON;
    if (nrm - 1.0).abs() <= slack {
        return Ok(x.clone());
    }
    Ok(SparseVector::from_sorted(x.iter().map(|(i, v)| (i, v / nrm)).collect()))
}

/// Magnitude order with deterministic ties: larger magnitude first, then
/// smaller index first. Dropping proceeds from the back of this order.
fn keep_order(entries: &[(Index, f64)]) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..entries.len()).collect();
    pos.sort_by(|&a, &b| {
        entries[b]
            .1
            .abs()
            .total_cmp(&entries[a].1.abs())
            .then(entries[a].0.cmp(&entries[b].0))
    });
    pos
}

/// Best N-term approximation and its error sigma_N.
pub fn best_n_term(x: &SparseVector, n: usize) -> (SparseVector, f64) {
    let entries = x.entries();
    if n >= entries.len() {
        return (x.clone(), 0.0);
    }
    let order = keep_order(entries);
    let mut keep = vec![false; entries.len()];
    for &p in &order[..n] {
        keep[p] = true;
    }
    let mut kept = Vec::with_capacity(n);
    let mut err_sq = 0.0;
    for (p, &(i, v)) in entries.iter().enumerate() {
        if keep[p] {
            kept.push((i, v));
        } else {
            err_sq += v * v;
        }
    }
    (SparseVector::from_sorted(kept), err_sq.sqrt())
}

/// All best N-term errors sigma_0 .. sigma_{#supp}.
pub fn n_term_errors(x: &SparseVector) -> Vec<f64> {
    let entries = x.entries();
    let order = keep_order(entries);
    let mut tail = vec![0.0; entries.len() + 1];
    for k in (0..entries.len()).rev() {
        let v = entries[order[k]].1;
        tail[k] = tail[k + 1] + v * v;
    }
    tail.into_iter().map(f64::sqrt).collect()
}

/// Bin of a magnitude `a` relative to `m = ||x||_inf`: bin `b` holds
/// magnitudes in `(m 2^{-b-1}, m 2^{-b}]`.
fn magnitude_bin(a: f64, m: f64) -> usize {
    const MAX_BIN: i32 = 1100;
    let mut b = ((m / a).log2().floor() as i32).clamp(0, MAX_BIN);
    while b > 0 && a > m * 2f64.powi(-b) {
        b -= 1;
    }
    while b < MAX_BIN && a <= m * 2f64.powi(-b - 1) {
        b += 1;
    }
    b as usize
}

/// Drop order of a vector under binary-binning quasi-sorting.
///
/// Entries are visited from the bin of smallest magnitudes upward and, within a
/// bin, by descending index. Coarsening at tolerance `eta` drops the longest
/// prefix of this order whose squared sum stays within `eta^2`, so the kept
/// sets are nested in `eta`.
#[derive(Clone, Debug)]
pub struct DropOrder {
    entries: Vec<(Index, f64)>,
    /// `rank[p]` is the position of entry `p` in the drop order.
    rank: Vec<usize>,
    /// `cumulative[k]` is the squared sum of the first `k` dropped entries.
    cumulative: Vec<f64>,
}

impl DropOrder {
    pub fn new(x: &SparseVector) -> Self {
        let entries = x.entries().to_vec();
        let m = x.max_abs();
        let bins: Vec<usize> = entries.iter().map(|&(_, v)| magnitude_bin(v.abs(), m)).collect();
        let nbins = bins.iter().copied().max().map_or(0, |b| b + 1);
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nbins];
        for (p, &b) in bins.iter().enumerate() {
            buckets[b].push(p);
        }
        let mut rank = vec![0; entries.len()];
        let mut cumulative = Vec::with_capacity(entries.len() + 1);
        cumulative.push(0.0);
        let mut k = 0;
        let mut acc = 0.0;
        for bucket in buckets.iter().rev() {
            // positions are increasing in index; walk them backwards
            for &p in bucket.iter().rev() {
                rank[p] = k;
                k += 1;
                let v = entries[p].1;
                acc += v * v;
                cumulative.push(acc);
            }
        }
        Self {
            entries,
            rank,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries dropped at tolerance `eta`.
    pub fn dropped_count(&self, eta: f64) -> usize {
        let budget = eta * eta * (1.0 - 4.0 * f64::EPSILON);
        self.cumulative.partition_point(|&c| c <= budget) - 1
    }

    /// Entries whose drop rank lies in `[lo, hi)`.
    pub fn slice(&self, lo: usize, hi: usize) -> SparseVector {
        SparseVector::from_sorted(
            self.entries
                .iter()
                .zip(&self.rank)
                .filter(|(_, &r)| r >= lo && r < hi)
                .map(|(&e, _)| e)
                .collect(),
        )
    }

    pub fn keep(&self, eta: f64) -> SparseVector {
        self.slice(self.dropped_count(eta), self.len())
    }
}

/// Coarsening: zeroes the smallest entries while their squared sum stays
/// within `eta^2`.
///
/// The result satisfies `||x - z|| <= eta` and its support is no larger than
/// the smallest support achieving accuracy `eta / 2`.
pub fn approx(x: &SparseVector, eta: f64) -> Result<SparseVector> {
    if !(eta > 0.0) {
        return Err(Error::NonPositiveTolerance(eta));
    }
    Ok(DropOrder::new(x).keep(eta))
}

/// Lower-bound estimate of the A^s quasi-norm for one decay exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityEstimate {
    pub s: f64,
    pub quasi_norm: f64,
}

/// Evaluates `||x|| + max_N max(N,1)^s sigma_N(x)` for each `s` in the grid.
///
/// Finite data only bounds the quasi-norm from below, so this is a diagnostic.
pub fn estimate_sparsity(x: &SparseVector, s_grid: &[f64]) -> Result<Vec<SparsityEstimate>> {
    if x.is_empty() {
        return Err(Error::EmptyVector);
    }
    if s_grid.is_empty() || s_grid.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidParameter("s_grid must hold positive exponents".into()));
    }
    let sigma = n_term_errors(x);
    let nrm = x.norm();
    Ok(s_grid
        .iter()
        .map(|&s| {
            let sup = sigma
                .iter()
                .enumerate()
                .map(|(n, &e)| (n.max(1) as f64).powf(s) * e)
                .fold(0.0, f64::max);
            SparsityEstimate {
                s,
                quasi_norm: nrm + sup,
            }
        })
        .collect())
}

/// Least-squares decay exponent of sigma_N over `N` in `[n_lo, n_hi]`.
///
/// Returns `s` such that `sigma_N ~ N^{-s}` on that range.
pub fn fit_sparsity_exponent(x: &SparseVector, n_lo: usize, n_hi: usize) -> Result<f64> {
    let sigma = n_term_errors(x);
    let n_hi = n_hi.min(sigma.len().saturating_sub(1));
    let pts: Vec<(f64, f64)> = (n_lo.max(1)..=n_hi)
        .filter(|&n| sigma[n] > 0.0)
        .map(|n| ((n as f64).ln(), sigma[n].ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParameter("need at least two nonzero tail errors".into()));
    }
    Ok(-least_squares_slope(&pts))
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        assert_eq!(norm(&SparseVector::new()), 0.0);
        assert_eq!(norm(&SparseVector::from_pairs([(1, 3.0), (2, 4.0)])), 5.0);
        let x = SparseVector::from_pairs((0..=10).map(|i| (i, 0.5f64.powi(i as i32))));
        // sum of 4^{-i} for i = 0..10 in closed form
        let expected = ((1.0 - 0.25f64.powi(11)) / 0.75).sqrt();
        assert!((norm(&x) - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_are_not_stored() {
        let x = SparseVector::from_pairs([(1, 1.0), (2, 0.0), (1, -1.0), (3, 2.0)]);
        assert_eq!(x.entries(), &[(3, 2.0)]);
    }

    #[test]
    fn best_n_term_examples() {
        let x = SparseVector::from_pairs([(1, 2.0), (2, 1.0)]);
        let (z, e) = best_n_term(&x, 1);
        assert_eq!(z, SparseVector::from_pairs([(1, 2.0)]));
        assert_eq!(e, 1.0);
        let (z, e) = best_n_term(&x, 0);
        assert!(z.is_empty());
        assert_eq!(e, x.norm());
        assert_eq!(best_n_term(&x, 5).1, 0.0);
    }

    #[test]
    fn best_n_term_ties_keep_smaller_index() {
        let x = SparseVector::from_pairs([(4, 1.0), (2, -1.0), (9, 1.0)]);
        let (z, _) = best_n_term(&x, 2);
        assert_eq!(z, SparseVector::from_pairs([(2, -1.0), (4, 1.0)]));
    }

    #[test]
    fn approx_example_drops_two_entries() {
        let x = SparseVector::from_pairs([(1, 1.0), (2, 0.5), (3, 0.1), (4, 0.01)]);
        let z = approx(&x, 0.2).unwrap();
        assert_eq!(z, SparseVector::from_pairs([(1, 1.0), (2, 0.5)]));
        assert!(x.sub(&z).norm() <= 0.2);
        assert!(approx(&x, 2.0 * x.norm()).unwrap().is_empty());
        assert!(approx(&x, 0.0).is_err());
    }

    #[test]
    fn binning_boundaries() {
        assert_eq!(magnitude_bin(1.0, 1.0), 0);
        assert_eq!(magnitude_bin(0.5, 1.0), 1);
        assert_eq!(magnitude_bin(0.5000001, 1.0), 0);
        assert_eq!(magnitude_bin(0.25, 1.0), 2);
        assert_eq!(magnitude_bin(3.0, 8.0), 1);
    }

    #[test]
    fn sparsity_single_entry_and_flat() {
        let x = SparseVector::from_pairs([(7, -3.0)]);
        let est = estimate_sparsity(&x, &[0.5, 2.0]).unwrap();
        for e in est {
            assert_eq!(e.quasi_norm, 6.0);
        }
        let k = 16;
        let x = SparseVector::from_pairs((0..k).map(|i| (i, 0.5)));
        let s = 1.0;
        let closed = (0..=k)
            .map(|n| (n.max(1) as f64).powf(s) * 0.5 * ((k - n) as f64).sqrt())
            .fold(0.0, f64::max);
        let est = estimate_sparsity(&x, &[s]).unwrap()[0];
        assert!((est.quasi_norm - (closed + 2.0)).abs() < 1e-12);
        assert!(estimate_sparsity(&SparseVector::new(), &[1.0]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let y = normalize(&SparseVector::from_pairs([(1, 3.0), (2, 4.0)])).unwrap();
        assert!((y.get(1) - 0.6).abs() < 1e-16 && (y.get(2) - 0.8).abs() < 1e-16);
        let e = SparseVector::unit(3);
        assert_eq!(normalize(&e).unwrap(), e);
        assert!(matches!(normalize(&SparseVector::new()), Err(Error::ZeroVector)));
    }

    #[test]
    fn text_round_trip() {
        let x = SparseVector::from_pairs([(10, 0.1), (2, -1.0 / 3.0), (5, 1e-300)]);
        let text = x.to_text();
        assert!(text.starts_with("2,"));
        assert_eq!(SparseVector::from_text(&text).unwrap(), x);
    }

    #[test]
    fn merge_and_restrict() {
        let x = SparseVector::from_pairs([(1, 1.0), (3, 2.0)]);
        let y = SparseVector::from_pairs([(2, 1.0), (3, 1.0)]);
        assert_eq!(
            x.add_scaled(-2.0, &y),
            SparseVector::from_pairs([(1, 1.0), (2, -2.0)])
        );
        assert_eq!(x.restrict_to(&y), SparseVector::from_pairs([(3, 2.0)]));
        assert_eq!(x.dot_counted(&y), (2.0, 1));
    }
}
