//! The ψ-witness test and the martingale stopping-time extractor.
//!
//! A witness is a non-zero `ψ : C → ℝ` with `E_s[ψ] = 0` and `Var_s[ψ] > 0`
//! under every die. The walk `Y_i = Y_{i-1} + ψ(c_i)` is then a martingale
//! whatever the adversary does, and the sign of the side it exits `(-M, M)`
//! through is a nearly unbiased bit.

use num_rational::BigRational;
use num_traits::Signed;
use rand::RngCore;
use serde::Serialize;

use crate::linalg;
use crate::model::{Adversary, SourceSpec, DEFAULT_TOL};
use crate::scalar::Field;

/// Largest die count for which every subset is tried in the restricted test.
pub const DEFAULT_SUBSET_BUDGET: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("threshold M must be at least 1, got {0}")]
    Threshold(f64),
    #[error("block length must be at least 1")]
    BlockLength,
    #[error("the symbol stream ended after {consumed} symbols; {needed} were needed")]
    ShortStream { consumed: usize, needed: usize },
    #[error("ψ has {found} values but the alphabet has {expected} symbols")]
    PsiLength { expected: usize, found: usize },
    #[error("symbol {0} has no ψ value")]
    Symbol(usize),
    #[error("the minimum variance of ψ is {0}, not positive")]
    ZeroVariance(f64),
    #[error("no die subset was given")]
    EmptySubset,
    #[error("every die in the subset is identically zero")]
    EmptySupport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiWitness {
    values: Vec<f64>,
    #[serde(skip)]
    exact: Option<Vec<BigRational>>,
    max_abs: f64,
    min_variance: f64,
    max_abs_mean: f64,
}

impl PsiWitness {
    /// Statistics of an arbitrary `ψ` against `spec`, without validity checks.
    pub fn evaluate(spec: &SourceSpec, values: Vec<f64>) -> Result<Self, ExtractError> {
        if values.len() != spec.alphabet_size() {
            return Err(ExtractError::PsiLength {
                expected: spec.alphabet_size(),
                found: values.len(),
            });
        }
        let max_abs = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let max_abs_mean = spec
            .dice()
            .iter()
            .map(|d| d.expect(&values).abs())
            .fold(0.0, f64::max);
        let min_variance = spec
            .dice()
            .iter()
            .map(|d| d.variance(&values))
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            values,
            exact: None,
            max_abs,
            min_variance,
            max_abs_mean,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Exact values when the witness was found in rational mode.
    pub fn exact_values(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    /// `m = max_c |ψ(c)|`.
    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    /// `v = min_s Var_s[ψ]`.
    pub fn min_variance(&self) -> f64 {
        self.min_variance
    }

    pub fn max_abs_mean(&self) -> f64 {
        self.max_abs_mean
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.max_abs_mean <= tol && self.min_variance > tol
    }
}

fn normalize<T: Field>(mut v: Vec<T>) -> Vec<T> {
    let max = v.iter().map(Signed::abs).fold(T::zero(), T::max_of);
    if max.is_zero() {
        return v;
    }
    let flip = v.iter().find(|x| !x.is_zero()).is_some_and(|x| *x < T::zero());
    for x in v.iter_mut() {
        *x = x.clone() / max.clone();
        if flip {
            *x = -x.clone();
        }
    }
    v
}

fn moments<T: Field>(die: &[T], psi: &[T]) -> (T, T) {
    let mean = die
        .iter()
        .zip(psi)
        .fold(T::zero(), |acc, (p, x)| acc + p.clone() * x.clone());
    let var = die.iter().zip(psi).fold(T::zero(), |acc, (p, x)| {
        let d = x.clone() - mean.clone();
        acc + p.clone() * d.clone() * d
    });
    (mean, var)
}

/// Basis vectors first, then pairwise mixtures `b_i + t·b_j` for eight fixed slopes `t`.
fn search_nullspace<T: Field>(dice: &[Vec<T>], basis: &[Vec<T>], tol: &T) -> Option<Vec<T>> {
    let accept = |v: &Vec<T>| {
        dice.iter().all(|d| {
            let (mean, var) = moments(d, v);
            mean.abs() <= *tol && var > *tol
        })
    };
    let normalized = basis.iter().cloned().map(normalize);
    for v in normalized.clone() {
        if accept(&v) {
            return Some(v);
        }
    }
    let slopes = [(1, 1), (-1, 1), (2, 1), (-2, 1), (1, 2), (-1, 2), (3, 1), (-3, 1)];
    for i in 0..basis.len() {
        for j in i + 1..basis.len() {
            for &(p, q) in &slopes {
                let t = T::from_ratio(p, q);
                let mix: Vec<T> = basis[i]
                    .iter()
                    .zip(&basis[j])
                    .map(|(a, b)| a.clone() + t.clone() * b.clone())
                    .collect();
                let mix = normalize(mix);
                if accept(&mix) {
                    return Some(mix);
                }
            }
        }
    }
    None
}

pub fn find_psi(spec: &SourceSpec) -> Option<PsiWitness> {
    find_psi_with_tol(spec, DEFAULT_TOL)
}

pub fn find_psi_with_tol(spec: &SourceSpec, tol: f64) -> Option<PsiWitness> {
    let k = spec.alphabet_size();
    if let Some(exact) = spec.exact_dice() {
        let basis = linalg::nullspace(exact, k);
        // exact mode: the only tolerance is the declared variance floor
        let tol_q = crate::scalar::rational_from_f64_exact(tol)?;
        let found = search_nullspace(exact, &basis, &tol_q)?;
        let values = found.iter().map(Field::to_f64).collect();
        let mut w = PsiWitness::evaluate(spec, values).ok()?;
        w.exact = Some(found);
        return Some(w);
    }
    let dice: Vec<Vec<f64>> = spec.dice().iter().map(|d| d.probs().to_vec()).collect();
    let basis = linalg::nullspace(&dice, k);
    let found = search_nullspace(&dice, &basis, &tol)?;
    PsiWitness::evaluate(spec, found).ok()
}

/// Whether the dice in `subset` admit only `ψ = 0` among functions supported on their joint support.
///
/// `true` means the restricted necessary condition certifies impossibility.
pub fn check_restricted_necessary(spec: &SourceSpec, subset: &[usize]) -> Result<bool, ExtractError> {
    if subset.is_empty() {
        return Err(ExtractError::EmptySubset);
    }
    let support: Vec<usize> = (0..spec.alphabet_size())
        .filter(|&c| subset.iter().any(|&s| spec.die(s).probs()[c] > 0.0))
        .collect();
    if support.is_empty() {
        return Err(ExtractError::EmptySupport);
    }
    let trivial = match spec.exact_dice() {
        Some(exact) => {
            let rows: Vec<Vec<BigRational>> = subset
                .iter()
                .map(|&s| support.iter().map(|&c| exact[s][c].clone()).collect())
                .collect();
            linalg::nullspace(&rows, support.len()).is_empty()
        }
        None => {
            let rows: Vec<Vec<f64>> = subset
                .iter()
                .map(|&s| support.iter().map(|&c| spec.die(s).probs()[c]).collect())
                .collect();
            linalg::nullspace(&rows, support.len()).is_empty()
        }
    };
    Ok(trivial)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Extractable,
    Impossible,
    Gap,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Extractable => 0,
            Status::Impossible => 1,
            Status::Gap => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub witness: Option<PsiWitness>,
    /// Die subset whose restricted system certified impossibility, if that test fired.
    pub restricted_subset: Option<Vec<usize>>,
    pub note: String,
}

#[derive(Debug, Clone, Copy)]
pub struct VerdictOptions {
    pub tol: f64,
    pub subset_budget: usize,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            subset_budget: DEFAULT_SUBSET_BUDGET,
        }
    }
}

pub fn verdict(spec: &SourceSpec) -> Verdict {
    verdict_with(spec, VerdictOptions::default())
}

pub fn verdict_with(spec: &SourceSpec, opts: VerdictOptions) -> Verdict {
    if let Some(w) = find_psi_with_tol(spec, opts.tol) {
        return Verdict {
            status: Status::Extractable,
            witness: Some(w),
            restricted_subset: None,
            note: "a zero-mean, positive-variance ψ exists under every die".into(),
        };
    }
    if spec.is_non_degenerate() {
        return Verdict {
            status: Status::Impossible,
            witness: None,
            restricted_subset: None,
            note: "the dice admit no non-zero ψ with zero mean under every die".into(),
        };
    }
    let k = spec.num_dice();
    if k > opts.subset_budget {
        return Verdict {
            status: Status::Gap,
            witness: None,
            restricted_subset: None,
            note: format!(
                "degenerate source with {k} dice exceeds the subset budget of {}",
                opts.subset_budget
            ),
        };
    }
    for mask in 1u64..(1u64 << k) {
        let subset: Vec<usize> = (0..k).filter(|&s| mask >> s & 1 == 1).collect();
        if check_restricted_necessary(spec, &subset) == Ok(true) {
            return Verdict {
                status: Status::Impossible,
                witness: None,
                note: format!(
                    "dice {subset:?} admit no non-zero ψ on their joint support"
                ),
                restricted_subset: Some(subset),
            };
        }
    }
    Verdict {
        status: Status::Gap,
        witness: None,
        restricted_subset: None,
        note: "degenerate source: neither the sufficient nor the restricted necessary condition holds"
            .into(),
    }
}

// ---------------------------------------------------------------------------
// The martingale extractor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleConfig {
    threshold: f64,
    block_length: usize,
}

impl MartingaleConfig {
    pub fn new(threshold: f64, block_length: usize) -> Result<Self, ExtractError> {
        if !(threshold >= 1.0) || !threshold.is_finite() {
            return Err(ExtractError::Threshold(threshold));
        }
        if block_length == 0 {
            return Err(ExtractError::BlockLength);
        }
        Ok(Self {
            threshold,
            block_length,
        })
    }

    /// `M = ⌈n^{1/3}⌉`, which balances the overshoot and the tail terms of the bias.
    pub fn with_default_threshold(block_length: usize) -> Result<Self, ExtractError> {
        Self::new(default_threshold(block_length), block_length)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }
}

pub fn default_threshold(block_length: usize) -> f64 {
    let t = (block_length as f64).cbrt().ceil();
    // cbrt of a perfect cube can land one ulp above the integer
    let r = t - 1.0;
    if r >= 1.0 && r * r * r >= block_length as f64 {
        r
    } else {
        t.max(1.0)
    }
}

/// Outcome of one block: the bit, the stopping time and the walk's value there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BitTrace {
    pub bit: u8,
    pub tau: usize,
    pub y_tau: f64,
}

/// Sums of thirds and similar steps accumulate rounding; hits are judged with this relative slack.
fn crossed(y: f64, m: f64) -> bool {
    y >= m - 1e-9 * m.max(1.0)
}

/// Walks `Y` over at most `n` symbols, stopping when `|Y| ≥ M`.
pub fn extract_bit(
    psi: &PsiWitness,
    config: &MartingaleConfig,
    symbols: &mut dyn Iterator<Item = usize>,
) -> Result<BitTrace, ExtractError> {
    walk(psi.values(), config, symbols)
}

pub(crate) fn walk(
    psi: &[f64],
    config: &MartingaleConfig,
    symbols: &mut dyn Iterator<Item = usize>,
) -> Result<BitTrace, ExtractError> {
    let m = config.threshold;
    let n = config.block_length;
    let mut y = 0.0;
    for t in 1..=n {
        let c = symbols.next().ok_or(ExtractError::ShortStream {
            consumed: t - 1,
            needed: n,
        })?;
        y += *psi.get(c).ok_or(ExtractError::Symbol(c))?;
        if crossed(y, m) || crossed(-y, m) {
            return Ok(BitTrace {
                bit: u8::from(crossed(y, m)),
                tau: t,
                y_tau: y,
            });
        }
    }
    Ok(BitTrace {
        bit: 0,
        tau: n,
        y_tau: y,
    })
}

/// One bit per consecutive block of `n` symbols of `stream`.
pub fn extract_bits(
    psi: &PsiWitness,
    config: &MartingaleConfig,
    stream: &[usize],
    k: usize,
) -> Result<Vec<BitTrace>, ExtractError> {
    let n = config.block_length;
    let needed = k.saturating_mul(n);
    if stream.len() < needed {
        return Err(ExtractError::ShortStream {
            consumed: stream.len(),
            needed,
        });
    }
    stream
        .chunks(n)
        .take(k)
        .map(|block| extract_bit(psi, config, &mut block.iter().copied()))
        .collect()
}

/// As [`extract_bits`], pulling each full block from an iterator.
pub fn extract_bits_from(
    psi: &PsiWitness,
    config: &MartingaleConfig,
    stream: &mut dyn Iterator<Item = usize>,
    k: usize,
) -> Result<Vec<BitTrace>, ExtractError> {
    let n = config.block_length;
    let mut out = Vec::with_capacity(k);
    for block in 0..k {
        let trace = extract_bit(psi, config, stream).map_err(|e| match e {
            ExtractError::ShortStream { consumed, .. } => ExtractError::ShortStream {
                consumed: block * n + consumed,
                needed: k * n,
            },
            e => e,
        })?;
        // the rest of the block is discarded so blocks stay aligned
        for skipped in trace.tau..n {
            stream.next().ok_or(ExtractError::ShortStream {
                consumed: block * n + skipped,
                needed: k * n,
            })?;
        }
        out.push(trace);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasBracket {
    pub lo: f64,
    pub hi: f64,
    /// Markov bound on `Pr[τ = n]`.
    pub tail: f64,
}

impl BiasBracket {
    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }
}

/// Guaranteed range of `Pr[bit = 1]` against every adversary.
pub fn bias_bracket(config: &MartingaleConfig, psi: &PsiWitness) -> Result<BiasBracket, ExtractError> {
    bracket_from(config.threshold, psi.max_abs(), psi.min_variance(), config.block_length)
}

pub fn bracket_from(m_thr: f64, m: f64, v: f64, n: usize) -> Result<BiasBracket, ExtractError> {
    if !(v > 0.0) {
        return Err(ExtractError::ZeroVariance(v));
    }
    let tail = (m_thr + m) * (m_thr + m) / (v * n as f64);
    Ok(BiasBracket {
        lo: m_thr / (2.0 * m_thr + m) - tail,
        hi: (m_thr + m) / (2.0 * m_thr + m) + tail,
        tail,
    })
}

/// Adversary that steers the walk back toward zero.
///
/// With `Y ≥ 0` it plays the die most likely to make the next step negative,
/// otherwise the die most likely to make it positive; ties go to the lowest index.
/// `Y` restarts at every block boundary when a block length is set.
#[derive(Debug, Clone)]
pub struct AdaptiveSign {
    psi: Vec<f64>,
    toward_down: usize,
    toward_up: usize,
    block_length: Option<usize>,
    y: f64,
    seen: usize,
}

impl AdaptiveSign {
    pub fn new(spec: &SourceSpec, psi: &[f64], block_length: Option<usize>) -> Self {
        let mass = |s: usize, pred: &dyn Fn(f64) -> bool| -> f64 {
            spec.die(s)
                .probs()
                .iter()
                .zip(psi)
                .filter(|(_, &x)| pred(x))
                .map(|(p, _)| p)
                .sum()
        };
        let argmax = |pred: &dyn Fn(f64) -> bool| {
            (0..spec.num_dice()).fold(0, |best, s| if mass(s, pred) > mass(best, pred) { s } else { best })
        };
        Self {
            psi: psi.to_vec(),
            toward_down: argmax(&|x| x < 0.0),
            toward_up: argmax(&|x| x > 0.0),
            block_length,
            y: 0.0,
            seen: 0,
        }
    }
}

impl Adversary for AdaptiveSign {
    fn reset(&mut self) {
        self.y = 0.0;
        self.seen = 0;
    }

    fn choose_die(&mut self, history: &[usize], _rng: &mut dyn RngCore) -> usize {
        if history.len() < self.seen {
            self.reset();
        }
        for &c in &history[self.seen..] {
            self.y += self.psi[c];
            self.seen += 1;
            if self.block_length.is_some_and(|n| self.seen.is_multiple_of(n)) {
                self.y = 0.0;
            }
        }
        if self.y >= 0.0 {
            self.toward_down
        } else {
            self.toward_up
        }
    }
}
