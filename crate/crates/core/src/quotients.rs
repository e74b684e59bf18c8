//! Approximate scalar products, Rayleigh quotients and residuals.

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::operators::{self, apply, apply_plan, plan_row, CompressibleOperator, MassOperator, ProblemInstance};
use crate::seqspace::{approx, DropOrder, SparseVector};

/// Which scalar-product routine backs a Rayleigh quotient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScalMethod {
    #[default]
    Simple,
    Fast,
}

fn check_tolerance(eta: f64) -> Result<()> {
    if eta > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveTolerance(eta))
    }
}

fn check_norm_bound(norm_bound: f64) -> Result<()> {
    if norm_bound > 0.0 && norm_bound.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "scalar product needs a finite positive bound on ||B||, got {norm_bound}"
        )))
    }
}

/// `<z, w>` where `z` coarsens `x` and `w` approximates `B x`; the two
/// tolerances split `eta` evenly.
pub fn scal_simple(
    b: &dyn CompressibleOperator,
    x: &SparseVector,
    eta: f64,
    norm_bound: f64,
    ledger: &mut CostLedger,
) -> Result<f64> {
    check_tolerance(eta)?;
    check_norm_bound(norm_bound)?;
    let nx = x.norm();
    if nx == 0.0 {
        return Ok(0.0);
    }
    let z = approx(x, eta / (2.0 * norm_bound * nx))?;
    if z.is_empty() {
        return Ok(0.0);
    }
    let w = apply(b, x, eta / (2.0 * nx), ledger)?;
    Ok(counted_dot(&z, &w, ledger))
}

fn counted_dot(a: &SparseVector, b: &SparseVector, ledger: &mut CostLedger) -> f64 {
    let (s, ops) = a.dot_counted(b);
    ledger.add_flops("scal", ops);
    s
}

/// Dyadic scalar product: pairs each block `v_j(sqrt(delta))` with an
/// approximation of `B x` whose accuracy grows with the block size, evaluated
/// only on the block's support.
pub fn scal_fast(
    b: &dyn CompressibleOperator,
    x: &SparseVector,
    delta: f64,
    s_bar: f64,
    ledger: &mut CostLedger,
) -> Result<f64> {
    check_tolerance(delta)?;
    let s_star = b.profile().s_star;
    if !(s_bar > 0.0) || s_bar >= s_star {
        return Err(Error::CompressionExponent { s_bar, s_star });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let order = DropOrder::new(x);
    let nx = x.norm();
    let root = delta.sqrt();
    let alpha = b.profile().alpha;
    let growth = 1.0 + s_bar.exp2();
    let blocks = operators::dyadic_decompose_with(&order, nx, root, s_bar)?;
    let mut total = 0.0;
    for (t, v) in blocks.iter().enumerate() {
        if v.is_empty() {
            continue;
        }
        // block index j = t - 1 >= -1, weight alpha shifted by one
        let j = t as f64 - 1.0;
        let eps_j = alpha.term(t as u32) / growth * (-s_bar * j).exp2() * root;
        let plan = apply_plan(b, &order, nx, eps_j)?;
        let mut products = 0u64;
        for (i, vi) in v.iter() {
            total += vi * plan_row(b, &plan, i, ledger);
            products += 1;
        }
        ledger.add_flops("scal", products);
    }
    Ok(total)
}

fn scal_with(
    method: ScalMethod,
    b: &dyn CompressibleOperator,
    x: &SparseVector,
    eta: f64,
    norm_bound: f64,
    ledger: &mut CostLedger,
) -> Result<f64> {
    match method {
        ScalMethod::Simple => scal_simple(b, x, eta, norm_bound, ledger),
        ScalMethod::Fast => scal_fast(b, x, eta, b.profile().apply_s_bar(), ledger),
    }
}

/// Lower bound `gamma / K` on `<Cx, x>` for unit `x` near the eigenvector.
fn mass_lower(instance: &ProblemInstance) -> f64 {
    let b = &instance.bounds;
    b.gamma / b.k_bound()
}

/// Approximate Rayleigh quotient with `|lambda(x) - result| <= eta`.
pub fn rayl(instance: &ProblemInstance, x: &SparseVector, eta: f64, method: ScalMethod, ledger: &mut CostLedger) -> Result<f64> {
    check_tolerance(eta)?;
    let bounds = &instance.bounds;
    match &instance.c {
        MassOperator::Identity => {
            let cx = x.norm_sq();
            ledger.add_flops("vector", x.support_size() as u64);
            if cx == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok(scal_with(method, &instance.a, x, eta * cx, bounds.gamma_max, ledger)? / cx)
        }
        MassOperator::General(c) => {
            let lower = mass_lower(instance);
            let eta = eta.min(bounds.gamma / lower).min(3.0 * bounds.gamma_max / lower);
            let num = scal_with(method, &instance.a, x, eta * lower / 2.0, bounds.gamma_max, ledger)?;
            let den = scal_with(method, c, x, lower * lower * eta / (6.0 * bounds.gamma_max), bounds.c_cap, ledger)?;
            if !(den > 0.0) {
                return Err(Error::NonPositiveRayleigh(den));
            }
            Ok(num / den)
        }
    }
}

/// Approximate scaled residual.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualResult {
    pub r_eta: SparseVector,
    pub lambda_bar: f64,
    pub eta: f64,
    pub cost: CostLedger,
}

/// Returns `r` with `||r - alpha (A - lambda(x) C) x|| <= eta`.
pub fn res(instance: &ProblemInstance, x: &SparseVector, eta: f64, alpha: f64) -> Result<ResidualResult> {
    check_tolerance(eta)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {alpha}")));
    }
    let mut ledger = CostLedger::new();
    let bounds = &instance.bounds;
    let rayl_tol = eta / (4.0 * bounds.c_cap * alpha);
    let apply_tol = eta / (2.0 * alpha);
    let nx = x.norm();
    if nx == 0.0 {
        return Err(Error::ZeroVector);
    }
    let (lambda_bar, w_a, w_c) = match &instance.c {
        MassOperator::Identity => {
            let cx = x.norm_sq();
            ledger.add_flops("vector", x.support_size() as u64);
            let scal_tol = rayl_tol * cx;
            // one APPLY(A) serves both the quotient and the residual
            let w_a = apply(&instance.a, x, apply_tol.min(scal_tol / (2.0 * nx)), &mut ledger)?;
            let z = approx(x, scal_tol / (2.0 * bounds.gamma_max * nx))?;
            let lambda_bar = counted_dot(&z, &w_a, &mut ledger) / cx;
            (lambda_bar, w_a, x.clone())
        }
        MassOperator::General(c) => {
            let lower = mass_lower(instance);
            let rayl_tol = rayl_tol.min(bounds.gamma / lower).min(3.0 * bounds.gamma_max / lower);
            let tol_a = rayl_tol * lower / 2.0;
            let tol_c = lower * lower * rayl_tol / (6.0 * bounds.gamma_max);
            let w_a = apply(&instance.a, x, apply_tol.min(tol_a / (2.0 * nx)), &mut ledger)?;
            let z_a = approx(x, tol_a / (2.0 * bounds.gamma_max * nx))?;
            let num = counted_dot(&z_a, &w_a, &mut ledger);
            let wc_scal = apply(c, x, tol_c / (2.0 * nx), &mut ledger)?;
            let z_c = approx(x, tol_c / (2.0 * bounds.c_cap * nx))?;
            let den = counted_dot(&z_c, &wc_scal, &mut ledger);
            if !(den > 0.0) {
                return Err(Error::NonPositiveRayleigh(den));
            }
            let lambda_bar = num / den;
            if !(lambda_bar > 0.0) {
                return Err(Error::NonPositiveRayleigh(lambda_bar));
            }
            let need = eta / (4.0 * lambda_bar * alpha);
            let w_c = if tol_c / (2.0 * nx) <= need {
                wc_scal
            } else {
                apply(c, x, need, &mut ledger)?
            };
            (lambda_bar, w_a, w_c)
        }
    };
    if !(lambda_bar > 0.0) {
        return Err(Error::NonPositiveRayleigh(lambda_bar));
    }
    let r = w_a.add_scaled(-lambda_bar, &w_c).scale(alpha);
    ledger.add_flops("vector", (w_a.support_size() + 2 * w_c.support_size()) as u64);
    ledger.note_support(r.support_size());
    Ok(ResidualResult {
        r_eta: r,
        lambda_bar,
        eta,
        cost: ledger,
    })
}
