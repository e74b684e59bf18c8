//! Compressible operators, adaptive application and model problems.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::CostLedger;
use crate::oracle::{self, DenseSection, DenseSpectrum};
use crate::seqspace::{DropOrder, Index, SparseVector};
use crate::solvers::SpectralBounds;

/// Largest compression level considered. Columns at this level are complete
/// for every section that fits in memory.
pub const MAX_LEVEL: u32 = 62;

/// Summable weights `alpha_k = (k+1)^{-p} / Z` with `Z >= zeta(p)`, so the
/// full series sums to at most one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSequence {
    pub exponent: f64,
    pub normalizer: f64,
}

impl AlphaSequence {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha exponent must exceed 1, got {exponent}"
            )));
        }
        let normalizer = if exponent == 2.0 {
            std::f64::consts::PI.powi(2) / 6.0
        } else {
            // partial sum plus the integral bound on the tail
            let n = 100_000u32;
            let head: f64 = (1..=n).map(|k| (k as f64).powf(-exponent)).sum();
            head + (n as f64).powf(1.0 - exponent) / (exponent - 1.0)
        };
        Ok(Self {
            exponent,
            normalizer: normalizer * (1.0 + 1e-12),
        })
    }

    pub fn term(&self, k: u32) -> f64 {
        (k as f64 + 1.0).powf(-self.exponent) / self.normalizer
    }

    pub fn partial_sum(&self, n: u32) -> f64 {
        (0..n).map(|k| self.term(k)).sum()
    }
}

impl Default for AlphaSequence {
    fn default() -> Self {
        Self::new(2.0).expect("exponent 2 is valid")
    }
}

/// Certified compression data: `||B - B_k|| <= level_constant 2^{-k s*} alpha_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionProfile {
    pub s_star: f64,
    pub level_constant: f64,
    pub alpha: AlphaSequence,
    /// First level at which `B_k = B` on the section, if any.
    pub exact_level: Option<u32>,
}

impl CompressionProfile {
    pub fn new(s_star: f64, level_constant: f64, alpha: AlphaSequence, exact_level: Option<u32>) -> Result<Self> {
        if !(s_star > 0.0) || !(level_constant > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "profile needs s* > 0 and C > 0, got s* = {s_star}, C = {level_constant}"
            )));
        }
        Ok(Self {
            s_star,
            level_constant,
            alpha,
            exact_level,
        })
    }

    /// Certified bound on `||B - B_k||`.
    pub fn level_error_bound(&self, k: u32) -> f64 {
        match self.exact_level {
            Some(e) if k >= e => 0.0,
            _ => self.level_constant * (-(k as f64) * self.s_star).exp2() * self.alpha.term(k),
        }
    }

    /// Exponent used internally by [`apply`] for the dyadic blocks.
    pub fn apply_s_bar(&self) -> f64 {
        0.9 * self.s_star
    }
}

/// Symmetric matrix on sequence space with a hierarchy of sparse
/// approximations `B_k` holding at most `2^k` entries per column.
pub trait CompressibleOperator {
    /// Section size, or `None` for an unbounded index set.
    fn dimension(&self) -> Option<usize>;
    fn profile(&self) -> &CompressionProfile;
    fn entry(&self, i: Index, j: Index) -> f64;
    /// Column `j` of `B_k`.
    fn compressed_column(&self, j: Index, k: u32) -> SparseVector;
    /// Upper bound on the spectral norm.
    fn norm_bound(&self) -> f64;

    fn is_symmetric(&self) -> bool {
        true
    }

    fn column(&self, j: Index) -> SparseVector {
        self.compressed_column(j, MAX_LEVEL)
    }
}

fn half_band(k: u32) -> usize {
    if k >= MAX_LEVEL {
        usize::MAX / 4
    } else {
        ((1usize << k) - 1) / 2
    }
}

fn anchor_reach(k: u32) -> usize {
    if k >= MAX_LEVEL {
        usize::MAX / 4
    } else {
        (1usize << k) - 1
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Structure {
    Diagonal(Vec<f64>),
    Tridiagonal {
        diag: f64,
        off: f64,
    },
    Decay {
        diag: Vec<f64>,
        /// `kernel[m]` is the entry at distance `m`, zero beyond the table.
        kernel: Vec<f64>,
        /// `anchor[i]` couples index 0 with index `i`; empty when unused.
        anchor: Vec<f64>,
    },
}

/// Finite section of one of the model operators.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelMatrix {
    n: usize,
    structure: Structure,
    profile: CompressionProfile,
    norm_bound: f64,
}

impl ModelMatrix {
    fn bandwidth(&self) -> usize {
        match &self.structure {
            Structure::Diagonal(_) => 0,
            Structure::Tridiagonal { .. } => 1.min(self.n - 1),
            Structure::Decay { kernel, .. } => (kernel.len() - 1).min(self.n - 1),
        }
    }

    fn is_anchored(&self) -> bool {
        matches!(&self.structure, Structure::Decay { anchor, .. } if !anchor.is_empty())
    }

    /// First level whose pattern contains every nonzero of the section.
    pub fn full_level(&self) -> u32 {
        let bw = self.bandwidth();
        let anchored = self.is_anchored();
        (0..MAX_LEVEL)
            .find(|&k| half_band(k) >= bw && (!anchored || anchor_reach(k) >= self.n - 1))
            .unwrap_or(MAX_LEVEL)
    }

    pub fn is_diagonal(&self) -> bool {
        self.bandwidth() == 0 && !self.is_anchored()
    }

    pub fn to_dense(&self) -> Result<DenseSection> {
        DenseSection::from_fn(self.n, |i, j| self.entry(i, j))
    }

    /// Dense section of `B_k`.
    pub fn compressed_dense(&self, k: u32) -> Result<DenseSection> {
        let n = self.n;
        if n > oracle::MAX_DENSE {
            return Err(Error::SectionTooLarge(n));
        }
        let mut values = vec![0.0; n * n];
        for j in 0..n {
            for (i, v) in self.compressed_column(j, k).iter() {
                values[i * n + j] = v;
            }
        }
        DenseSection::from_fn(n, |i, j| values[i * n + j])
    }

    fn max_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|j| self.column(j).iter().map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Replaces the profile, e.g. with one certified on a different section.
    pub fn with_profile(mut self, profile: CompressionProfile) -> Self {
        self.profile = profile;
        self
    }

    fn build(n: usize, structure: Structure, s_star: Option<f64>) -> Result<Self> {
        let mut m = Self {
            n,
            structure,
            profile: CompressionProfile::new(1.0, 1.0, AlphaSequence::default(), None)?,
            norm_bound: 0.0,
        };
        m.norm_bound = m.max_row_sum();
        m.profile = certify_profile(&m, s_star)?;
        Ok(m)
    }
}

impl CompressibleOperator for ModelMatrix {
    fn dimension(&self) -> Option<usize> {
        Some(self.n)
    }

    fn profile(&self) -> &CompressionProfile {
        &self.profile
    }

    fn entry(&self, i: Index, j: Index) -> f64 {
        if i >= self.n || j >= self.n {
            return 0.0;
        }
        let dist = i.abs_diff(j);
        match &self.structure {
            Structure::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
            Structure::Tridiagonal { diag, off } => match dist {
                0 => *diag,
                1 => *off,
                _ => 0.0,
            },
            Structure::Decay { diag, kernel, anchor } => {
                let mut v = if i == j { diag[i] } else { kernel.get(dist).copied().unwrap_or(0.0) };
                if !anchor.is_empty() && i != j && i.min(j) == 0 {
                    v += anchor[i.max(j)];
                }
                v
            }
        }
    }

    fn compressed_column(&self, j: Index, k: u32) -> SparseVector {
        if j >= self.n {
            return SparseVector::new();
        }
        let h = half_band(k).min(self.bandwidth());
        let lo = j.saturating_sub(h);
        let hi = (j + h).min(self.n - 1);
        let mut pairs: Vec<(Index, f64)> = Vec::with_capacity(hi - lo + 2);
        if self.is_anchored() {
            let reach = anchor_reach(k).min(self.n - 1);
            if j == 0 {
                let top = reach.max(hi);
                pairs.extend((0..=top).map(|i| (i, self.entry(i, 0))));
                return SparseVector::from_pairs(pairs);
            }
            if lo > 0 && j <= reach {
                pairs.push((0, self.entry(0, j)));
            }
        }
        pairs.extend((lo..=hi).map(|i| (i, self.entry(i, j))));
        SparseVector::from_pairs(pairs)
    }

    fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
}

/// Fits `s*` and `C` so that `||B - B_k|| <= C 2^{-k s*} alpha_k` holds on the
/// section for every level below the exact one.
fn certify_profile(m: &ModelMatrix, s_star: Option<f64>) -> Result<CompressionProfile> {
    let alpha = AlphaSequence::default();
    let full = m.full_level();
    let errors: Vec<f64> = if full == 0 {
        Vec::new()
    } else if m.n <= oracle::MAX_DENSE {
        let b = m.to_dense()?;
        (0..full)
            .map(|k| {
                let bk = m.compressed_dense(k)?;
                let diff = DenseSection::from_fn(m.n, |i, j| b.get(i, j) - bk.get(i, j))?;
                Ok(diff.spectral_norm())
            })
            .collect::<Result<_>>()?
    } else {
        // symmetric difference: the spectral norm is below the max row sum
        (0..full)
            .map(|k| {
                (0..m.n)
                    .map(|j| {
                        let col = m.column(j);
                        let ck = m.compressed_column(j, k);
                        col.sub(&ck).iter().map(|(_, v)| v.abs()).sum::<f64>()
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    };
    let floor = errors.first().copied().unwrap_or(0.0) * 1e-14;
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|&(_, &e)| e > floor)
        .map(|(k, &e)| (k as f64, e.log2()))
        .collect();
    let s = match s_star {
        Some(s) => s,
        None if pts.len() >= 3 => (-crate::seqspace::least_squares_slope(&pts)).clamp(0.5, 8.0),
        None => 4.0,
    };
    let c = errors
        .iter()
        .enumerate()
        .map(|(k, &e)| e * (k as f64 * s).exp2() / alpha.term(k as u32))
        .fold(0.0, f64::max);
    let c = if c > 0.0 { c * (1.0 + 1e-10) } else { f64::MIN_POSITIVE };
    CompressionProfile::new(s, c, alpha, Some(full))
}

/// Splits `x` into `[v_{-1}, v_0, ..., v_J]` with `v_j = v_{2^{j s_bar} zeta} -
/// v_{2^{(j+1) s_bar} zeta}`, where `v_eta` is the coarsening of `x` at `eta`.
pub fn dyadic_decompose(x: &SparseVector, zeta: f64, s_bar: f64) -> Result<Vec<SparseVector>> {
    dyadic_decompose_with(&DropOrder::new(x), x.norm(), zeta, s_bar)
}

pub(crate) fn dyadic_decompose_with(order: &DropOrder, norm: f64, zeta: f64, s_bar: f64) -> Result<Vec<SparseVector>> {
    if !(zeta > 0.0) {
        return Err(Error::NonPositiveTolerance(zeta));
    }
    if !(s_bar > 0.0) {
        return Err(Error::InvalidParameter(format!("s_bar must be positive, got {s_bar}")));
    }
    // logs separately: norm / zeta overflows for subnormal zeta
    let top = if norm > zeta {
        ((norm.log2() - zeta.log2()) / s_bar).ceil().max(0.0) as usize
    } else {
        0
    };
    // cut[j] = number of entries dropped at tolerance 2^{j s_bar} zeta
    let cut: Vec<usize> = (0..=top)
        .map(|j| order.dropped_count((j as f64 * s_bar).exp2() * zeta))
        .collect();
    let mut out = Vec::with_capacity(top + 2);
    out.push(order.slice(0, cut[0]));
    for j in 0..=top {
        let hi = if j == top { order.len() } else { cut[j + 1] };
        out.push(order.slice(cut[j], hi));
    }
    Ok(out)
}

/// Adaptive application: returns `w` with `||B x - w|| <= delta`.
pub fn apply(b: &dyn CompressibleOperator, x: &SparseVector, delta: f64, ledger: &mut CostLedger) -> Result<SparseVector> {
    if !(delta > 0.0) {
        return Err(Error::NonPositiveTolerance(delta));
    }
    if x.is_empty() {
        return Ok(SparseVector::new());
    }
    let plan = apply_plan(b, &DropOrder::new(x), x.norm(), delta)?;
    Ok(apply_blocks(b, &plan, ledger))
}

/// Blocks of `x` paired with the compression level applied to each, such
/// that `sum_j B_{k_j} v_j` is within `delta` of `B x`.
pub(crate) fn apply_plan(
    b: &dyn CompressibleOperator,
    order: &DropOrder,
    norm: f64,
    delta: f64,
) -> Result<Vec<(u32, SparseVector)>> {
    let profile = b.profile();
    if profile.exact_level == Some(0) {
        return Ok(vec![(0, order.slice(0, order.len()))]);
    }
    let s_star = profile.s_star;
    let s_bar = profile.apply_s_bar();
    let c = profile.level_constant;
    let growth = 1.0 + s_bar.exp2();
    let weight = |j: u32| profile.alpha.term(j) * (-(j as f64) * (s_star - s_bar)).exp2();
    let head: f64 = (0..400).map(weight).sum();
    let tail = (1.0 - profile.alpha.partial_sum(400)).max(0.0);
    // dropped block costs ||B|| zeta, block j at most C (1 + 2^s_bar) weight(j) zeta
    let scale = b.norm_bound() + c * growth * (head + tail);
    let zeta = delta / scale;
    let blocks = dyadic_decompose_with(order, norm, zeta, s_bar)?;
    let mut plan = Vec::with_capacity(blocks.len());
    for (j, v) in blocks.into_iter().enumerate().skip(1) {
        if v.is_empty() {
            continue;
        }
        let j = (j - 1) as u32;
        let budget = c * growth * weight(j) * zeta;
        let nv = v.norm();
        let level = (0..=j)
            .find(|&k| profile.level_error_bound(k) * nv <= budget)
            .unwrap_or(j);
        plan.push((level, v));
    }
    Ok(plan)
}

/// Entry `i` of `sum_j B_{k_j} v_j`, using row `i` of each `B_k`.
pub(crate) fn plan_row(b: &dyn CompressibleOperator, plan: &[(u32, SparseVector)], i: Index, ledger: &mut CostLedger) -> f64 {
    let mut sum = 0.0;
    let mut products = 0u64;
    let mut touched = 0u64;
    for (level, v) in plan {
        // symmetric patterns: row i of B_k is column i
        let row = b.compressed_column(i, *level);
        touched += row.support_size() as u64;
        let (d, ops) = row.dot_counted(v);
        sum += d;
        products += ops;
    }
    ledger.add_flops("scal", products);
    ledger.add_entries("scal", touched);
    sum
}

/// Exact product on the section, charged per matrix entry used.
pub fn apply_exact(b: &dyn CompressibleOperator, x: &SparseVector, ledger: &mut CostLedger) -> SparseVector {
    apply_blocks(b, &[(MAX_LEVEL, x.clone())], ledger)
}

/// `sum_j B_{k_j} v_j`, accumulated column by column in a fixed order.
fn apply_blocks(b: &dyn CompressibleOperator, work: &[(u32, SparseVector)], ledger: &mut CostLedger) -> SparseVector {
    let mut acc: HashMap<Index, f64> = HashMap::new();
    let mut products = 0u64;
    for (level, v) in work {
        for (j, vj) in v.iter() {
            let col = b.compressed_column(j, *level);
            products += col.support_size() as u64;
            for (i, bij) in col.iter() {
                *acc.entry(i).or_insert(0.0) += bij * vj;
            }
        }
    }
    ledger.add_flops("apply", products);
    ledger.add_entries("apply", products);
    let w = SparseVector::from_pairs(acc);
    ledger.note_support(w.support_size());
    w
}

/// Mass operator `C` of the generalized problem.
#[derive(Clone, Debug, PartialEq)]
pub enum MassOperator {
    /// Applied exactly.
    Identity,
    General(ModelMatrix),
}

impl MassOperator {
    pub fn is_diagonal(&self) -> bool {
        matches!(self, MassOperator::Identity)
    }

    pub fn to_dense(&self, n: usize) -> Result<DenseSection> {
        match self {
            MassOperator::Identity => DenseSection::identity(n),
            MassOperator::General(m) => m.to_dense(),
        }
    }

    /// Exact product; cost is charged per matrix entry used.
    pub fn apply_exact(&self, x: &SparseVector, ledger: &mut CostLedger) -> SparseVector {
        match self {
            MassOperator::Identity => x.clone(),
            MassOperator::General(m) => apply_exact(m, x, ledger),
        }
    }
}

/// Generalized eigenproblem `A u = lambda C u` with certified constants.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub a: ModelMatrix,
    pub c: MassOperator,
    pub bounds: SpectralBounds,
}

impl ProblemInstance {
    pub fn new(a: ModelMatrix, c: MassOperator, bounds: SpectralBounds) -> Result<Self> {
        if let MassOperator::General(m) = &c {
            if m.dimension() != a.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: a.n,
                    got: m.n,
                });
            }
        }
        Ok(Self { a, c, bounds })
    }

    pub fn size(&self) -> usize {
        self.a.n
    }

    pub fn dense_a(&self) -> Result<DenseSection> {
        self.a.to_dense()
    }

    pub fn dense_c(&self) -> Result<DenseSection> {
        self.c.to_dense(self.a.n)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Diagonal,
    Tridiag,
    Decay,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassKind {
    #[default]
    Identity,
    Decay,
}

/// Model parameters. Fields not used by the selected kind are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub size: usize,
    /// Diagonal model: `A = diag(lambda_low, lambda_low + gap, ...)`.
    pub lambda_low: f64,
    pub gap: f64,
    /// Decay model: `a_ii = d0 + d1 (1 - 2^{-i})`, `a_ij = coupling 2^{-sigma |i-j|}`.
    pub d0: f64,
    pub d1: f64,
    pub coupling: f64,
    pub sigma: f64,
    /// Optional coupling `anchor (1+i)^{-anchor_decay}` between index 0 and `i`.
    pub anchor: f64,
    pub anchor_decay: f64,
    pub mass: MassKind,
    /// Mass matrix for `mass = "decay"`: unit diagonal plus `mass_coupling 2^{-mass_sigma |i-j|}`.
    pub mass_coupling: f64,
    pub mass_sigma: f64,
    /// Fixed compression exponent; fitted on the section when absent.
    pub s_star: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Diagonal,
            size: 64,
            lambda_low: 1.0,
            gap: 1.0,
            d0: 1.0,
            d1: 2.0,
            coupling: 0.2,
            sigma: 2.0,
            anchor: 0.0,
            anchor_decay: 3.0,
            mass: MassKind::Identity,
            mass_coupling: 0.1,
            mass_sigma: 2.0,
            s_star: None,
        }
    }
}

impl ModelConfig {
    pub fn diagonal(size: usize, lambda_low: f64, gap: f64) -> Self {
        Self {
            kind: ModelKind::Diagonal,
            size,
            lambda_low,
            gap,
            ..Self::default()
        }
    }

    pub fn tridiag(size: usize) -> Self {
        Self {
            kind: ModelKind::Tridiag,
            size,
            ..Self::default()
        }
    }

    pub fn decay(size: usize) -> Self {
        Self {
            kind: ModelKind::Decay,
            size,
            ..Self::default()
        }
    }
}

/// Kernel table `c 2^{-sigma m}` for `m = 0..=cutoff`, truncated below 1e-18 relative.
fn decay_kernel(c: f64, sigma: f64) -> Vec<f64> {
    let cutoff = (60.0 / sigma).ceil() as usize;
    (0..=cutoff).map(|m| c * (-(sigma * m as f64)).exp2()).collect()
}

/// Builds the operators of a model without any dense check.
pub fn build_operators(cfg: &ModelConfig) -> Result<(ModelMatrix, MassOperator)> {
    let n = cfg.size;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("model size must be at least 2, got {n}")));
    }
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
        }
    };
    let a = match cfg.kind {
        ModelKind::Diagonal => {
            positive("lambda_low", cfg.lambda_low)?;
            positive("gap", cfg.gap)?;
            let d = (0..n).map(|i| cfg.lambda_low + cfg.gap * i as f64).collect();
            ModelMatrix::build(n, Structure::Diagonal(d), cfg.s_star)?
        }
        ModelKind::Tridiag => ModelMatrix::build(
            n,
            Structure::Tridiagonal {
                diag: 1.0,
                off: -0.5,
            },
            cfg.s_star,
        )?,
        ModelKind::Decay => {
            positive("sigma", cfg.sigma)?;
            positive("d0", cfg.d0)?;
            let diag = (0..n).map(|i| cfg.d0 + cfg.d1 * (1.0 - (-(i as f64)).exp2())).collect();
            let anchor = if cfg.anchor != 0.0 {
                positive("anchor_decay", cfg.anchor_decay)?;
                (0..n).map(|i| cfg.anchor * (1.0 + i as f64).powf(-cfg.anchor_decay)).collect()
            } else {
                Vec::new()
            };
            ModelMatrix::build(
                n,
                Structure::Decay {
                    diag,
                    kernel: decay_kernel(cfg.coupling, cfg.sigma),
                    anchor,
                },
                cfg.s_star,
            )?
        }
    };
    let c = match cfg.mass {
        MassKind::Identity => MassOperator::Identity,
        MassKind::Decay => {
            positive("mass_sigma", cfg.mass_sigma)?;
            MassOperator::General(ModelMatrix::build(
                n,
                Structure::Decay {
                    diag: vec![1.0; n],
                    kernel: decay_kernel(cfg.mass_coupling, cfg.mass_sigma),
                    anchor: Vec::new(),
                },
                None,
            )?)
        }
    };
    Ok((a, c))
}

/// Builds a model and certifies its spectral constants with the dense oracle.
pub fn make_model(cfg: &ModelConfig) -> Result<ProblemInstance> {
    let (a, c) = build_operators(cfg)?;
    let spectrum = oracle::dense_spectrum(&a.to_dense()?, &c.to_dense(cfg.size)?)?;
    let bounds = SpectralBounds::from_spectrum(&spectrum)?;
    ProblemInstance::new(a, c, bounds)
}

/// Dense spectral data of an instance.
pub fn instance_spectrum(instance: &ProblemInstance) -> Result<DenseSpectrum> {
    oracle::dense_spectrum(&instance.dense_a()?, &instance.dense_c()?)
}
