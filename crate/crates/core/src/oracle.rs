//! Dense ground truth on finite sections.
//!
//! Used by tests, model certification and acceptance runs. The adaptive
//! routines never call into this module.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::seqspace::SparseVector;

/// Largest section handled by the dense routines.
pub const MAX_DENSE: usize = 2048;

/// Row-major dense finite section.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSection {
    pub n: usize,
    pub values: Vec<f64>,
    pub symmetric: bool,
}

impl DenseSection {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n > MAX_DENSE {
            return Err(Error::SectionTooLarge(n));
        }
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(i, j));
            }
        }
        let mut out = Self {
            n,
            values,
            symmetric: false,
        };
        out.symmetric = out.asymmetry() <= 1e-12 * out.max_abs().max(f64::MIN_POSITIVE);
        Ok(out)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.values)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let row = &self.values[i * self.n..(i + 1) * self.n];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Dense product with a sparse vector; indices outside the section are ignored.
    pub fn apply_sparse(&self, x: &SparseVector) -> Vec<f64> {
        self.matvec(&x.to_dense(self.n))
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(&self.matvec(x), x)
    }

    /// Row-major text: one line per row, entries separated by spaces.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.n * self.n * 24);
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{:.16e}", self.get(i, j))).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        Self::from_fn(n, |i, j| rows[i][j])
    }

    /// Spectral norm of a symmetric section.
    pub fn spectral_norm(&self) -> f64 {
        self.to_matrix()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Eigenvalues of a symmetric section in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.to_matrix().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_with_sign(mut v: Vec<f64>) -> Vec<f64> {
    let nrm = dot(&v, &v).sqrt();
    let pivot = v
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, &x)| if x.abs() > best.1.abs() { (i, x) } else { best });
    let s = if pivot.1 < 0.0 { -1.0 / nrm } else { 1.0 / nrm };
    v.iter_mut().for_each(|x| *x *= s);
    v
}

/// Full generalized spectrum of `A u = lambda C u`, ascending, with
/// eigenvectors normalized in the Euclidean norm.
pub fn dense_generalized_spectrum(a: &DenseSection, c: &DenseSection) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if a.n != c.n {
        return Err(Error::DimensionMismatch {
            expected: a.n,
            got: c.n,
        });
    }
    if !a.symmetric || !c.symmetric {
        return Err(Error::InvalidParameter("dense oracle needs symmetric input".into()));
    }
    let n = a.n;
    let chol = c
        .to_matrix()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("mass matrix C".into()))?;
    let l = chol.l();
    // S = L^{-1} A L^{-T}
    let linv_a = l
        .solve_lower_triangular(&a.to_matrix())
        .ok_or_else(|| Error::NotPositiveDefinite("mass matrix C".into()))?;
    let s_t = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("mass matrix C".into()))?;
    let s = (&s_t + s_t.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt = l.transpose();
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &k in &order {
        let y: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        let u = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::NotPositiveDefinite("mass matrix C".into()))?;
        values.push(eig.eigenvalues[k]);
        vectors.push(unit_with_sign(u.iter().copied().collect()));
    }
    Ok((values, vectors))
}

/// Smallest generalized eigenpair with a unit eigenvector.
pub fn dense_smallest_pair(a: &DenseSection, c: &DenseSection) -> Result<(f64, Vec<f64>)> {
    let (values, mut vectors) = dense_generalized_spectrum(a, c)?;
    let lambda = values[0];
    let u = vectors.swap_remove(0);
    let au = a.matvec(&u);
    let cu = c.matvec(&u);
    let res: f64 = au.iter().zip(&cu).map(|(p, q)| (p - lambda * q).powi(2)).sum::<f64>().sqrt();
    let scale = a.spectral_norm();
    if res > 1e-10 * scale {
        return Err(Error::NotPositiveDefinite(format!(
            "oracle residual {res:e} exceeds tolerance for ||A|| = {scale:e}"
        )));
    }
    Ok((lambda, u))
}

/// `||M_perp^{-1}||` for `M = A - lambda C` restricted to the Euclidean
/// complement of `u`.
#[allow(non_snake_case)]
pub fn dense_Mperp_inverse_norm(a: &DenseSection, c: &DenseSection, lambda: f64, u: &[f64]) -> Result<f64> {
    let n = a.n;
    let nu = dot(u, u).sqrt();
    let u: Vec<f64> = u.iter().map(|x| x / nu).collect();
    let m = DenseSection::from_fn(n, |i, j| a.get(i, j) - lambda * c.get(i, j))?;
    let m_norm = m.spectral_norm();
    let mu = m.matvec(&u);
    let umu = dot(&u, &mu);
    // (I - uu^T) M (I - uu^T) plus a large multiple of uu^T, so that the
    // u direction does not interfere with the smallest eigenvalue on u^perp
    let shift = 4.0 * m_norm + 1.0;
    let g = DenseSection::from_fn(n, |i, j| {
        m.get(i, j) - u[i] * mu[j] - mu[i] * u[j] + u[i] * u[j] * umu + shift * u[i] * u[j]
    })?;
    let mut ev = g.eigenvalues();
    let smallest = ev.remove(0);
    if smallest <= 1e-12 * m_norm.max(1.0) {
        return Err(Error::DegenerateGap {
            first: lambda,
            second: lambda + smallest,
        });
    }
    Ok(1.0 / smallest)
}

/// Minimal support of an approximation to `x` within `eta`, by full sort.
pub fn exact_sort_n_term(x: &SparseVector, eta: f64) -> usize {
    let mut sq: Vec<f64> = x.iter().map(|(_, v)| v * v).collect();
    sq.sort_by(f64::total_cmp);
    let budget = eta * eta;
    let mut acc = 0.0;
    let mut dropped = 0;
    for v in sq {
        if acc + v > budget {
            break;
        }
        acc += v;
        dropped += 1;
    }
    x.support_size() - dropped
}

/// Same quantity as [`exact_sort_n_term`], by binary search on tail sums.
pub fn tail_search_n_term(x: &SparseVector, eta: f64) -> usize {
    let mut mags: Vec<f64> = x.iter().map(|(_, v)| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let n = mags.len();
    // tail[k] = squared error when keeping the k largest entries
    let mut tail = vec![0.0; n + 1];
    for k in (0..n).rev() {
        tail[k] = tail[k + 1] + mags[k] * mags[k];
    }
    let budget = eta * eta;
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if tail[mid] <= budget {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Spectral data of a finite section used to certify the solver constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenseSpectrum {
    /// Extreme eigenvalues of `A`.
    pub gamma: f64,
    pub gamma_upper: f64,
    /// Two smallest generalized eigenvalues.
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub c_norm: f64,
    /// Smallest eigenvalue of `C`.
    pub c_min: f64,
}

pub fn dense_spectrum(a: &DenseSection, c: &DenseSection) -> Result<DenseSpectrum> {
    let a_ev = a.eigenvalues();
    let c_ev = c.eigenvalues();
    if a_ev[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!("A has eigenvalue {:e}", a_ev[0])));
    }
    if c_ev[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!("C has eigenvalue {:e}", c_ev[0])));
    }
    let (values, _) = dense_generalized_spectrum(a, c)?;
    if values.len() < 2 {
        return Err(Error::InvalidParameter("section needs at least two rows".into()));
    }
    Ok(DenseSpectrum {
        gamma: a_ev[0],
        gamma_upper: *a_ev.last().expect("nonempty"),
        lambda_1: values[0],
        lambda_2: values[1],
        c_norm: *c_ev.last().expect("nonempty"),
        c_min: c_ev[0],
    })
}

/// `sin` of the angle between `x` and `u`, i.e. `||(I - P) x|| / ||x||`.
pub fn orthogonal_error(x: &SparseVector, u: &[f64]) -> f64 {
    let xd = x.to_dense(u.len());
    let outside: f64 = x.iter().filter(|&(i, _)| i >= u.len()).map(|(_, v)| v * v).sum();
    let nx2 = dot(&xd, &xd) + outside;
    let c = dot(&xd, u) / dot(u, u);
    // explicit projection; the difference of squares cancels for small angles
    let inside: f64 = xd.iter().zip(u).map(|(x, u)| (x - c * u).powi(2)).sum();
    ((inside + outside) / nx2).sqrt()
}

/// Exact Rayleigh quotient on the section.
pub fn rayleigh_quotient(a: &DenseSection, c: &DenseSection, x: &SparseVector) -> f64 {
    let xd = x.to_dense(a.n);
    a.quadratic_form(&xd) / c.quadratic_form(&xd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DenseSection {
        DenseSection::from_fn(v.len(), |i, j| if i == j { v[i] } else { 0.0 }).unwrap()
    }

    #[test]
    fn diagonal_pair() {
        let a = diag(&[1.0, 2.0, 3.0]);
        let c = DenseSection::identity(3).unwrap();
        let (l, u) = dense_smallest_pair(&a, &c).unwrap();
        assert!((l - 1.0).abs() < 1e-14);
        assert!((u[0] - 1.0).abs() < 1e-14 && u[1].abs() < 1e-14);
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = DenseSection::from_fn(2, |i, j| if i == j { 2.0 } else { 1.0 }).unwrap();
        let c = DenseSection::identity(2).unwrap();
        let (l, u) = dense_smallest_pair(&a, &c).unwrap();
        assert!((l - 1.0).abs() < 1e-14);
        let h = 0.5f64.sqrt();
        assert!((u[0].abs() - h).abs() < 1e-14 && (u[0] + u[1]).abs() < 1e-14);
        // M = A - I = [[1,1],[1,1]]; on u^perp = span(1,1) it acts as 2
        let inv = dense_Mperp_inverse_norm(&a, &c, l, &u).unwrap();
        assert!((inv - 0.5).abs() < 1e-13);
    }

    #[test]
    fn diagonal_mperp() {
        let a = diag(&[1.0, 2.0, 3.0, 4.0]);
        let c = DenseSection::identity(4).unwrap();
        let (l, u) = dense_smallest_pair(&a, &c).unwrap();
        let inv = dense_Mperp_inverse_norm(&a, &c, l, &u).unwrap();
        assert!((inv - 1.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_indefinite_mass() {
        let a = diag(&[1.0, 2.0]);
        let c = diag(&[1.0, -1.0]);
        assert!(matches!(dense_smallest_pair(&a, &c), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn n_term_oracles() {
        let x = SparseVector::from_pairs([(1, 1.0), (2, 0.5)]);
        assert_eq!(exact_sort_n_term(&x, 0.5), 1);
        assert_eq!(tail_search_n_term(&x, 0.5), 1);
        assert_eq!(exact_sort_n_term(&x, 0.0), 2);
        assert_eq!(tail_search_n_term(&x, 0.0), 2);
    }

    #[test]
    fn text_round_trip() {
        let a = DenseSection::from_fn(3, |i, j| (i * 3 + j) as f64 / 7.0).unwrap();
        assert_eq!(DenseSection::from_text(&a.to_text()).unwrap(), a);
    }

    #[test]
    fn generalized_residual_with_nontrivial_mass() {
        let a = DenseSection::from_fn(3, |i, j| if i == j { 3.0 } else { 0.5 }).unwrap();
        let c = DenseSection::from_fn(3, |i, j| if i == j { 2.0 } else { 0.25 }).unwrap();
        let (l, u) = dense_smallest_pair(&a, &c).unwrap();
        let au = a.matvec(&u);
        let cu = c.matvec(&u);
        for k in 0..3 {
            assert!((au[k] - l * cu[k]).abs() < 1e-12);
        }
    }
}
