//! Step constants, the ideal and perturbed iterations, and the adaptive
//! eigensolver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::operators::{apply, apply_exact, MassOperator, ProblemInstance};
use crate::oracle::DenseSpectrum;
use crate::quotients::{rayl, res, ScalMethod};
use crate::seqspace::{approx, normalize, SparseVector};

/// Certified spectral constants of a problem instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    /// Lower and upper bounds for `<Ax, x>` on the unit sphere.
    pub gamma: f64,
    #[serde(rename = "Gamma")]
    pub gamma_max: f64,
    /// Lower bound for the smallest eigenvalue.
    pub lambda_low: f64,
    /// Lower bound for the Rayleigh quotient on the C-orthogonal complement of
    /// the eigenvector.
    #[serde(rename = "Lambda_low")]
    pub lambda_next: f64,
    /// Bound on `||C||`, equal to `Gamma / lambda_low`.
    #[serde(rename = "c_C")]
    pub c_cap: f64,
}

impl SpectralBounds {
    pub fn new(gamma: f64, gamma_max: f64, lambda_low: f64, lambda_next: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(gamma_max >= gamma) || !gamma_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need 0 < gamma <= Gamma, got gamma = {gamma}, Gamma = {gamma_max}"
            )));
        }
        if !(lambda_low > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda_low must be positive, got {lambda_low}")));
        }
        if !(lambda_next > lambda_low) {
            return Err(Error::NoSpectralGap {
                lower: lambda_low,
                upper: lambda_next,
            });
        }
        Ok(Self {
            gamma,
            gamma_max,
            lambda_low,
            lambda_next,
            c_cap: gamma_max / lambda_low,
        })
    }

    pub fn from_spectrum(s: &DenseSpectrum) -> Result<Self> {
        Self::new(s.gamma, s.gamma_upper, s.lambda_1, s.lambda_2)
    }

    /// Bound `K = 2 lambda_low` on Rayleigh quotients inside the basin.
    pub fn k_bound(&self) -> f64 {
        2.0 * self.lambda_low
    }

    /// Ellipticity constant of `A - lambda C` on the complement of `u`.
    pub fn theta(&self) -> f64 {
        (self.lambda_next - self.lambda_low) * self.gamma / self.lambda_next
    }

    /// Optimal step `2 / (Theta + theta)`.
    pub fn alpha(&self) -> f64 {
        2.0 / (self.gamma_max + self.theta())
    }
}

/// Constants of the perturbed iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepParameters {
    pub alpha: f64,
    pub theta: f64,
    #[serde(rename = "Theta")]
    pub big_theta: f64,
    pub beta: f64,
    pub xi: f64,
    pub a: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub c_tilde: f64,
    pub d: f64,
    pub delta_bar: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "M_prime")]
    pub m_prime: f64,
    pub c1: f64,
    pub eps0: f64,
    /// Step bound `ceil(log(c1 beta) / log xi)` of one iteration block.
    pub step_limit: usize,
}

/// Optional overrides for [`derive_parameters_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ParameterChoices {
    pub eps0: Option<f64>,
    /// Estimate of `2 ||M_perp^{-1}||`; defaults to `2 / theta`.
    pub m: Option<f64>,
    pub c1: Option<f64>,
}

/// Largest admissible `c1` for a given initial accuracy.
pub fn c1_limit(eps0: f64) -> f64 {
    (2.0 / (5.0 * eps0)).min(1.0 / ((3f64.sqrt() + 2.5) * 2f64.powf(1.5)))
}

pub fn derive_parameters(bounds: &SpectralBounds, eps0: Option<f64>) -> Result<StepParameters> {
    derive_parameters_with(
        bounds,
        &ParameterChoices {
            eps0,
            ..ParameterChoices::default()
        },
    )
}

pub fn derive_parameters_with(bounds: &SpectralBounds, choices: &ParameterChoices) -> Result<StepParameters> {
    let b = SpectralBounds::new(bounds.gamma, bounds.gamma_max, bounds.lambda_low, bounds.lambda_next)?;
    let theta = b.theta();
    let big_theta = b.gamma_max;
    let alpha = 2.0 / (big_theta + theta);
    let beta = (big_theta - theta) / (big_theta + theta);
    let xi = (1.0 + beta) / 2.0;
    let a = b.gamma / (4.0 * b.gamma_max);
    let k = b.k_bound();
    let c_tilde = 2.0 * alpha * b.gamma_max * b.c_cap / b.gamma;
    let d = a.sqrt().min((1.0 - beta) / (2.0 * c_tilde * k));
    let m = match choices.m {
        Some(m) if m > 0.0 && m.is_finite() => m,
        Some(m) => return Err(Error::InvalidParameter(format!("M must be positive, got {m}"))),
        None => 2.0 / theta,
    };
    let inv_norm = m / 2.0;
    let delta_bar = 0.5 * ((1.0 + b.gamma / (b.gamma_max * k * b.c_cap * inv_norm)).sqrt() - 1.0);
    let limit = d.min(delta_bar);
    let eps0 = match choices.eps0 {
        None => limit,
        Some(e) if !(e > 0.0) => return Err(Error::NonPositiveTolerance(e)),
        Some(e) if e > limit => return Err(Error::InitialAccuracyTooCoarse { eps0: e, limit }),
        Some(e) => e,
    };
    let c1_max = c1_limit(eps0);
    let c1 = match choices.c1 {
        None => c1_max,
        Some(c) if c > 0.0 && c <= c1_max => c,
        Some(c) => {
            return Err(Error::InvalidParameter(format!("c1 must lie in (0, {c1_max}], got {c}")));
        }
    };
    let m_prime = m * (b.gamma_max + 2.0 * k * b.gamma_max * b.c_cap / b.gamma * eps0);
    let step_limit = ((c1 * beta).ln() / xi.ln()).ceil().max(1.0) as usize;
    Ok(StepParameters {
        alpha,
        theta,
        big_theta,
        beta,
        xi,
        a,
        k,
        c_tilde,
        d,
        delta_bar,
        m,
        m_prime,
        c1,
        eps0,
        step_limit,
    })
}

/// One state of the exact iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct MinitStep {
    pub x: SparseVector,
    pub lambda: f64,
    /// `||A x - lambda C x||`.
    pub residual_norm: f64,
}

fn exact_residual(instance: &ProblemInstance, x: &SparseVector, ledger: &mut CostLedger) -> (f64, SparseVector, f64) {
    let ax = apply_exact(&instance.a, x, ledger);
    let cx = instance.c.apply_exact(x, ledger);
    let lambda = ax.dot(x) / cx.dot(x);
    let r = ax.add_scaled(-lambda, &cx);
    let nr = r.norm();
    (lambda, r, nr)
}

/// Ideal iteration `x <- normalize(x - alpha (A - lambda(x) C) x)` in exact
/// arithmetic on the section. Returns `n_steps + 1` states.
pub fn minit(instance: &ProblemInstance, x0: &SparseVector, n_steps: usize) -> Result<Vec<MinitStep>> {
    let alpha = instance.bounds.alpha();
    let mut ledger = CostLedger::new();
    let mut x = normalize(x0)?;
    let mut out = Vec::with_capacity(n_steps + 1);
    for n in 0..=n_steps {
        let (lambda, r, residual_norm) = exact_residual(instance, &x, &mut ledger);
        out.push(MinitStep {
            x: x.clone(),
            lambda,
            residual_norm,
        });
        if n == n_steps {
            break;
        }
        x = normalize(&x.add_scaled(-alpha, &r))?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Iterating,
    Coarsened,
    Done,
}

/// Solver state at a block boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub x: SparseVector,
    pub lambda: f64,
    pub eps_bar: f64,
    pub stage: Stage,
    pub trace: CostLedger,
}

/// One perturbed step inside an iteration block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockStep {
    pub step: usize,
    pub eta: f64,
    pub lambda_bar: f64,
    pub residual_norm: f64,
    /// Iterate at which the residual was evaluated.
    pub iterate: SparseVector,
    pub residual_support: usize,
    /// Flops spent by this step.
    pub flops: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockExit {
    /// The a-posteriori residual test certified the iterate.
    Residual,
    StepLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockOutcome {
    pub v: SparseVector,
    pub steps: Vec<BlockStep>,
    pub exit: BlockExit,
    pub ledger: CostLedger,
}

/// Tolerance of step `j` in a block at accuracy `eps_bar`. Floored at the
/// smallest normal double; long blocks otherwise underflow to zero.
pub fn step_tolerance(xi: f64, eps_bar: f64, j: usize) -> f64 {
    let eta = (1.0 - xi) * eps_bar * (-(j.min(1100) as f64)).exp2();
    eta.max(f64::MIN_POSITIVE)
}

/// Perturbed iterations started from `v0` until the residual certifies an
/// orthogonal error of at most `c1 eps_bar` or the step bound is reached.
pub fn perturbed_block(
    instance: &ProblemInstance,
    params: &StepParameters,
    v0: &SparseVector,
    eps_bar: f64,
) -> Result<BlockOutcome> {
    if !(eps_bar > 0.0) {
        return Err(Error::NonPositiveTolerance(eps_bar));
    }
    let mut ledger = CostLedger::new();
    let mut v = normalize(v0)?;
    let mut steps = Vec::new();
    // the residual bound controls the unscaled residual, hence the factor alpha
    let threshold = params.alpha * params.c1 * eps_bar / params.m;
    let mut j = 0;
    loop {
        let eta = step_tolerance(params.xi, eps_bar, j);
        let r = res(instance, &v, eta, params.alpha)?;
        let rn = r.r_eta.norm();
        steps.push(BlockStep {
            step: j,
            eta,
            lambda_bar: r.lambda_bar,
            residual_norm: rn,
            iterate: v.clone(),
            residual_support: r.r_eta.support_size(),
            flops: r.cost.flops,
        });
        ledger.merge(&r.cost);
        if eta + rn <= threshold {
            return Ok(BlockOutcome {
                v,
                steps,
                exit: BlockExit::Residual,
                ledger,
            });
        }
        let next = v.sub(&r.r_eta);
        ledger.add_flops("vector", (v.support_size() + r.r_eta.support_size()) as u64);
        v = normalize(&next)?;
        ledger.note_support(v.support_size());
        j += 1;
        if j >= params.step_limit {
            return Ok(BlockOutcome {
                v,
                steps,
                exit: BlockExit::StepLimit,
                ledger,
            });
        }
    }
}

/// Summary of one block plus its coarsening.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockRecord {
    pub block: usize,
    pub eps_bar: f64,
    pub steps: Vec<BlockStep>,
    pub exit: BlockExit,
    pub coarsening_tolerance: f64,
    pub support_before: usize,
    pub support_after: usize,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinieigOutput {
    pub lambda: f64,
    pub u: SparseVector,
    pub blocks: Vec<BlockRecord>,
    pub state: IterateState,
    pub ledger: CostLedger,
}

/// Coarsening tolerance `3 c1 eps_bar / sqrt(2)` applied after each block.
pub fn coarsening_tolerance(c1: f64, eps_bar: f64) -> f64 {
    3.0 * c1 * eps_bar / std::f64::consts::SQRT_2
}

/// Adaptive eigensolver: blocks of perturbed iterations at halving accuracy,
/// each followed by coarsening, until the accuracy reaches `eps`.
pub fn minieig(instance: &ProblemInstance, params: &StepParameters, x0: &SparseVector, eps: f64) -> Result<MinieigOutput> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveTolerance(eps));
    }
    let mut ledger = CostLedger::new();
    let mut eps_bar = params.eps0;
    let mut u_bar = normalize(x0)?;
    let mut blocks = Vec::new();
    loop {
        let outcome = perturbed_block(instance, params, &u_bar, eps_bar)?;
        let tol = coarsening_tolerance(params.c1, eps_bar);
        let w = approx(&outcome.v, tol)?;
        if w.is_empty() {
            return Err(Error::ZeroVector);
        }
        ledger.merge(&outcome.ledger);
        ledger.add_flops("vector", w.support_size() as u64);
        u_bar = normalize(&w)?;
        ledger.note_support(u_bar.support_size());
        blocks.push(BlockRecord {
            block: blocks.len(),
            eps_bar,
            exit: outcome.exit,
            coarsening_tolerance: tol,
            support_before: outcome.v.support_size(),
            support_after: u_bar.support_size(),
            flops: outcome.ledger.flops,
            steps: outcome.steps,
        });
        if eps_bar / 2.0 <= eps {
            break;
        }
        eps_bar /= 2.0;
    }
    let lambda = rayl(instance, &u_bar, eps, ScalMethod::Simple, &mut ledger)?;
    let state = IterateState {
        x: u_bar.clone(),
        lambda,
        eps_bar,
        stage: Stage::Done,
        trace: ledger.clone(),
    };
    Ok(MinieigOutput {
        lambda,
        u: u_bar,
        blocks,
        state,
        ledger,
    })
}

/// Eigenvalue estimate accurate to order `eps^2` from an `eps`-accurate
/// eigenvector, using the dyadic scalar product.
pub fn posteigen_rayleigh(instance: &ProblemInstance, u_eps: &SparseVector, eps: f64, ledger: &mut CostLedger) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveTolerance(eps));
    }
    rayl(instance, u_eps, eps * eps, ScalMethod::Fast, ledger)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrozenRun {
    /// Normalized final iterate.
    pub x: SparseVector,
    /// `||x_i||` for `i = 0..=steps`.
    pub norms: Vec<f64>,
    pub ledger: CostLedger,
}

/// Iterates `x <- x - alpha (A - lambda_bar C) x` with a frozen shift and
/// normalizes once at the end.
pub fn accelerate_frozen(
    instance: &ProblemInstance,
    params: &StepParameters,
    x0: &SparseVector,
    lambda_bar: f64,
    eps: f64,
    steps: usize,
) -> Result<FrozenRun> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveTolerance(eps));
    }
    if !(lambda_bar > 0.0) {
        return Err(Error::NonPositiveRayleigh(lambda_bar));
    }
    let mut ledger = CostLedger::new();
    let tol = eps * eps * (1.0 - params.beta) / (4.0 * params.alpha);
    let mut x = x0.clone();
    let mut norms = vec![x.norm()];
    for step in 1..=steps {
        let wa = apply(&instance.a, &x, tol, &mut ledger)?;
        let wc = match &instance.c {
            MassOperator::Identity => x.clone(),
            MassOperator::General(c) => apply(c, &x, tol / lambda_bar, &mut ledger)?,
        };
        let r = wa.add_scaled(-lambda_bar, &wc);
        x = x.add_scaled(-params.alpha, &r);
        ledger.add_flops("vector", (2 * wc.support_size() + r.support_size()) as u64);
        let nx = x.norm();
        norms.push(nx);
        if !(nx >= 0.5) {
            return Err(Error::NormCollapse { step, norm: nx });
        }
    }
    Ok(FrozenRun {
        x: normalize(&x)?,
        norms,
        ledger,
    })
}

/// Unit vector at orthogonal distance `eps0` from `u`: a coarsening of `u`
/// plus a random perturbation orthogonal to it, scaled by bisection.
pub fn perturbed_initial_guess(u: &SparseVector, eps0: f64, section: usize, seed: u64) -> Result<SparseVector> {
    if !(eps0 > 0.0) || eps0 >= 1.0 {
        return Err(Error::InvalidParameter(format!("eps0 must lie in (0, 1), got {eps0}")));
    }
    let u = normalize(u)?;
    let base = normalize(&approx(&u, eps0 / 4.0)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = base.iter().map(|(i, _)| i).collect();
    idx.extend((0..section).filter(|&i| base.get(i) == 0.0).take(2));
    let w = SparseVector::from_pairs(idx.into_iter().map(|i| (i, rng.gen_range(-1.0..1.0))));
    let w = w.add_scaled(-w.dot(&base), &base);
    let w = normalize(&w)?;
    let angle = |t: f64| -> Result<(SparseVector, f64)> {
        let x = normalize(&base.add_scaled(t, &w))?;
        let e = x.add_scaled(-x.dot(&u), &u).norm();
        Ok((x, e))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while angle(hi)?.1 < eps0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidParameter("cannot reach the requested initial error".into()));
        }
    }
    let (x_lo, e_lo) = angle(lo)?;
    if e_lo > eps0 {
        return Ok(x_lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if angle(mid)?.1 <= eps0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(angle(lo)?.0)
}
