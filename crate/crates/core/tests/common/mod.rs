#![allow(dead_code)]

use adaptive_eigen::harness::experiment::{oracle_data, OracleData};
use adaptive_eigen::operators::{make_model, ModelConfig, ProblemInstance};
use adaptive_eigen::oracle::DenseSection;
use adaptive_eigen::solvers::{derive_parameters_with, ParameterChoices, StepParameters};
use adaptive_eigen::SparseVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A model instance together with its dense reference data.
pub struct Case {
    pub name: String,
    pub instance: ProblemInstance,
    pub oracle: OracleData,
    pub a: DenseSection,
    pub c: DenseSection,
    pub params: StepParameters,
}

impl Case {
    pub fn new(name: &str, cfg: ModelConfig) -> Case {
        let instance = make_model(&cfg).expect("model");
        Case::from_instance(name, instance)
    }

    pub fn from_instance(name: &str, instance: ProblemInstance) -> Case {
        let oracle = oracle_data(&instance).expect("oracle");
        let params = derive_parameters_with(&instance.bounds, &ParameterChoices::default()).expect("parameters");
        Case {
            name: name.to_string(),
            a: instance.dense_a().unwrap(),
            c: instance.dense_c().unwrap(),
            instance,
            oracle,
            params,
        }
    }

    pub fn n(&self) -> usize {
        self.instance.size()
    }

    /// `lambda(x) - lambda_1` evaluated on the orthogonal component only,
    /// which avoids the cancellation of a direct difference.
    pub fn rayleigh_excess(&self, x: &SparseVector) -> f64 {
        let n = self.n();
        let xd = x.to_dense(n);
        let u = &self.oracle.u;
        let p = dot(&xd, u) / dot(u, u);
        let perp: Vec<f64> = xd.iter().zip(u).map(|(x, u)| x - p * u).collect();
        let ap = self.a.matvec(&perp);
        let cp = self.c.matvec(&perp);
        let num: f64 = perp.iter().zip(ap.iter().zip(&cp)).map(|(d, (a, c))| d * (a - self.oracle.lambda * c)).sum();
        num / self.c.quadratic_form(&xd)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dense_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `||dense - sparse||` on a section of length `dense.len()`.
pub fn dense_distance(dense: &[f64], sparse: &SparseVector) -> f64 {
    let s = sparse.to_dense(dense.len());
    dense.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Unit vector at orthogonal distance `r` from the unit vector `u`, with a
/// uniformly random direction in the complement.
pub fn basin_start(u: &[f64], r: f64, rng: &mut ChaCha8Rng) -> SparseVector {
    let mut w: Vec<f64> = (0..u.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p = dot(&w, u) / dot(u, u);
    w.iter_mut().zip(u).for_each(|(w, u)| *w -= p * u);
    let nw = dense_norm(&w);
    let nu = dense_norm(u);
    let x: Vec<f64> = u.iter().zip(&w).map(|(u, w)| (1.0 - r * r).sqrt() * u / nu + r * w / nw).collect();
    SparseVector::from_dense(&x)
}

pub fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> SparseVector {
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nx = dense_norm(&x);
    SparseVector::from_dense(&x.iter().map(|v| v / nx).collect::<Vec<_>>())
}

/// Unit vector with entries `rho^i` and random signs.
pub fn geometric_unit(n: usize, rho: f64, rng: &mut ChaCha8Rng) -> SparseVector {
    let x: Vec<f64> = (0..n)
        .map(|i| if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rho.powi(i as i32))
        .collect();
    let nx = dense_norm(&x);
    SparseVector::from_dense(&x.iter().map(|v| v / nx).collect::<Vec<_>>())
}

/// Unit vector with entries `(1 + i)^{-p}` and random signs.
pub fn algebraic_unit(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SparseVector {
    let x: Vec<f64> = (0..n)
        .map(|i| if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * (1.0 + i as f64).powf(-p))
        .collect();
    let nx = dense_norm(&x);
    SparseVector::from_dense(&x.iter().map(|v| v / nx).collect::<Vec<_>>())
}

/// Random sparse vector with up to `max_support` entries spread over
/// `0..range`, magnitudes spanning several orders.
pub fn random_sparse(rng: &mut ChaCha8Rng, max_support: usize, range: usize) -> SparseVector {
    let k = rng.gen_range(1..=max_support);
    let decay = rng.gen_range(0.0..4.0);
    SparseVector::from_pairs((0..k).map(|_| {
        let i = rng.gen_range(0..range);
        let mag = rng.gen_range(0.0f64..1.0).powf(decay) * 10f64.powf(-rng.gen_range(0.0..3.0));
        (i, if rng.gen_bool(0.5) { mag } else { -mag })
    }))
}
