//! Value types for sources, extractors and adversary strategies.
//!
//! Strings over an alphabet of size `k` are laid out lexicographically with
//! symbol 0 most significant: the string `c_1 … c_n` sits at index
//! `c_1·k^{n-1} + … + c_n`. Extractor labels, strategy levels and every
//! enumeration in the crate share this layout.

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default absolute tolerance for analytic zero tests.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Tolerance on the sum of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Default cap on the number of strings (or subsets) any enumeration may visit.
pub const DEFAULT_BUDGET: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid source: {0}")]
    Invalid(String),
    #[error("enumeration of {requested} items exceeds the budget of {budget}")]
    BudgetExceeded { requested: String, budget: u64 },
    #[error("strategy depth {depth} is shorter than the requested length {n}")]
    DepthMismatch { depth: usize, n: usize },
    #[error("symbol {symbol} is outside the alphabet of size {alphabet_size}")]
    SymbolOutOfRange { symbol: usize, alphabet_size: usize },
}

/// `k^n`, or `None` on overflow.
pub fn checked_pow(k: usize, n: usize) -> Option<u64> {
    (k as u64).checked_pow(u32::try_from(n).ok()?)
}

/// `k^n` if it fits in `budget`.
pub fn count_within_budget(k: usize, n: usize, budget: u64) -> Result<usize, ModelError> {
    match checked_pow(k, n) {
        Some(c) if c <= budget => Ok(c as usize),
        _ => Err(ModelError::BudgetExceeded {
            requested: format!("{k}^{n}"),
            budget,
        }),
    }
}

// ---------------------------------------------------------------------------
// Distributions and sources
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        let violations = distribution_violations(&probs, 0);
        if let Some(v) = violations.into_iter().next() {
            return Err(ModelError::Invalid(v.to_string()));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_degenerate(&self) -> bool {
        self.probs.iter().any(|&p| p <= 0.0)
    }

    pub fn expect(&self, f: &[f64]) -> f64 {
        self.probs.iter().zip(f).map(|(p, x)| p * x).sum()
    }

    pub fn variance(&self, f: &[f64]) -> f64 {
        let mean = self.expect(f);
        self.probs
            .iter()
            .zip(f)
            .map(|(p, x)| p * (x - mean) * (x - mean))
            .sum()
    }
}

impl AsRef<[f64]> for Distribution {
    fn as_ref(&self) -> &[f64] {
        &self.probs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    WrongLength {
        die: usize,
        expected: usize,
        found: usize,
    },
    Negative {
        die: usize,
        symbol: usize,
        value: f64,
    },
    NotFinite {
        die: usize,
        symbol: usize,
    },
    BadSum {
        die: usize,
        sum: f64,
    },
    NoDice,
    EmptyAlphabet,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::WrongLength {
                die,
                expected,
                found,
            } => write!(f, "die {die} has {found} entries, expected {expected}"),
            Violation::Negative { die, symbol, value } => {
                write!(f, "die {die} assigns negative probability {value} to symbol {symbol}")
            }
            Violation::NotFinite { die, symbol } => {
                write!(f, "die {die} has a non-finite entry at symbol {symbol}")
            }
            Violation::BadSum { die, sum } => write!(f, "die {die} sums to {sum}, not 1"),
            Violation::NoDice => write!(f, "the source has no dice"),
            Violation::EmptyAlphabet => write!(f, "the alphabet is empty"),
        }
    }
}

fn distribution_violations(probs: &[f64], die: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    for (symbol, &p) in probs.iter().enumerate() {
        if !p.is_finite() {
            out.push(Violation::NotFinite { die, symbol });
        } else if p < 0.0 {
            out.push(Violation::Negative {
                die,
                symbol,
                value: p,
            });
        }
    }
    let sum: f64 = probs.iter().sum();
    if out.is_empty() && (sum - 1.0).abs() > NORMALIZATION_TOL {
        out.push(Violation::BadSum { die, sum });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Some die gives probability zero to some symbol.
    pub degenerate: bool,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks raw dice against the source invariants without constructing a [`SourceSpec`].
pub fn validate_spec(alphabet_size: usize, dice: &[Vec<f64>]) -> ValidationReport {
    let mut violations = Vec::new();
    if alphabet_size == 0 {
        violations.push(Violation::EmptyAlphabet);
    }
    if dice.is_empty() {
        violations.push(Violation::NoDice);
    }
    for (die, probs) in dice.iter().enumerate() {
        if probs.len() != alphabet_size {
            violations.push(Violation::WrongLength {
                die,
                expected: alphabet_size,
                found: probs.len(),
            });
        }
        violations.extend(distribution_violations(probs, die));
    }
    let degenerate = dice.iter().flatten().any(|&p| p == 0.0);
    ValidationReport {
        violations,
        degenerate,
    }
}

/// A generalized SV source: an alphabet and the adversary's dice.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    alphabet_size: usize,
    dice: Vec<Distribution>,
    exact: Option<Vec<Vec<BigRational>>>,
    labels: Option<Vec<String>>,
}

impl SourceSpec {
    pub fn new(alphabet_size: usize, dice: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let report = validate_spec(alphabet_size, &dice);
        if let Some(v) = report.violations.first() {
            return Err(ModelError::Invalid(v.to_string()));
        }
        Ok(Self {
            alphabet_size,
            dice: dice.into_iter().map(|probs| Distribution { probs }).collect(),
            exact: None,
            labels: None,
        })
    }

    /// Builds a source whose probabilities are known exactly; each die must sum to exactly 1.
    pub fn from_exact(alphabet_size: usize, dice: Vec<Vec<BigRational>>) -> Result<Self, ModelError> {
        for (s, die) in dice.iter().enumerate() {
            if die.iter().any(|p| *p < BigRational::zero()) {
                return Err(ModelError::Invalid(format!("die {s} has a negative entry")));
            }
            let sum: BigRational = die.iter().cloned().sum();
            if !sum.is_one() {
                return Err(ModelError::Invalid(format!(
                    "die {s} sums to {} exactly, not 1",
                    crate::scalar::rational_to_string(&sum)
                )));
            }
        }
        let approx: Vec<Vec<f64>> = dice
            .iter()
            .map(|d| d.iter().map(crate::scalar::Field::to_f64).collect())
            .collect();
        let report = validate_spec(alphabet_size, &approx);
        // Exact sums are checked above; rounding can still trip the float check.
        if let Some(v) = report
            .violations
            .iter()
            .find(|v| !matches!(v, Violation::BadSum { .. }))
        {
            return Err(ModelError::Invalid(v.to_string()));
        }
        Ok(Self {
            alphabet_size,
            dice: approx.into_iter().map(|probs| Distribution { probs }).collect(),
            exact: Some(dice),
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, ModelError> {
        if labels.len() != self.alphabet_size {
            return Err(ModelError::Invalid(format!(
                "{} labels for an alphabet of size {}",
                labels.len(),
                self.alphabet_size
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn num_dice(&self) -> usize {
        self.dice.len()
    }

    pub fn dice(&self) -> &[Distribution] {
        &self.dice
    }

    pub fn die(&self, s: usize) -> &Distribution {
        &self.dice[s]
    }

    pub fn exact_dice(&self) -> Option<&[Vec<BigRational>]> {
        self.exact.as_deref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn validation(&self) -> ValidationReport {
        let raw: Vec<Vec<f64>> = self.dice.iter().map(|d| d.probs.clone()).collect();
        let mut report = validate_spec(self.alphabet_size, &raw);
        if self.exact.is_some() {
            report.violations.retain(|v| !matches!(v, Violation::BadSum { .. }));
        }
        report
    }

    /// Every die gives positive probability to every symbol.
    pub fn is_non_degenerate(&self) -> bool {
        match &self.exact {
            Some(ex) => ex.iter().flatten().all(|p| *p > BigRational::zero()),
            None => self.dice.iter().all(|d| !d.is_degenerate()),
        }
    }

    /// Restricts the source to the dice in `subset`, keeping the alphabet.
    pub fn sub_spec(&self, subset: &[usize]) -> Self {
        Self {
            alphabet_size: self.alphabet_size,
            dice: subset.iter().map(|&s| self.dice[s].clone()).collect(),
            exact: self
                .exact
                .as_ref()
                .map(|ex| subset.iter().map(|&s| ex[s].clone()).collect()),
            labels: self.labels.clone(),
        }
    }
}

/// A distributed source: dice over pairs `(a, b)`, row-major `a·|B| + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSourceSpec {
    a_size: usize,
    b_size: usize,
    dice: Vec<Vec<f64>>,
}

impl JointSourceSpec {
    /// `dice[s][a][b] = p_s(a, b)`.
    pub fn new(a_size: usize, b_size: usize, dice: Vec<Vec<Vec<f64>>>) -> Result<Self, ModelError> {
        if dice.is_empty() {
            return Err(ModelError::Invalid(Violation::NoDice.to_string()));
        }
        if a_size == 0 || b_size == 0 {
            return Err(ModelError::Invalid(Violation::EmptyAlphabet.to_string()));
        }
        let mut flat = Vec::with_capacity(dice.len());
        for (s, m) in dice.into_iter().enumerate() {
            if m.len() != a_size || m.iter().any(|row| row.len() != b_size) {
                return Err(ModelError::Invalid(format!(
                    "die {s} is not a {a_size}x{b_size} matrix"
                )));
            }
            let v: Vec<f64> = m.into_iter().flatten().collect();
            if let Some(err) = distribution_violations(&v, s).into_iter().next() {
                return Err(ModelError::Invalid(err.to_string()));
            }
            flat.push(v);
        }
        Ok(Self {
            a_size,
            b_size,
            dice: flat,
        })
    }

    pub fn single(joint: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let a = joint.len();
        let b = joint.first().map_or(0, Vec::len);
        Self::new(a, b, vec![joint])
    }

    pub fn a_size(&self) -> usize {
        self.a_size
    }

    pub fn b_size(&self) -> usize {
        self.b_size
    }

    pub fn num_dice(&self) -> usize {
        self.dice.len()
    }

    pub fn p(&self, s: usize, a: usize, b: usize) -> f64 {
        self.dice[s][a * self.b_size + b]
    }

    /// Row-major probabilities of die `s`.
    pub fn die_flat(&self, s: usize) -> &[f64] {
        &self.dice[s]
    }

    pub fn die_matrix(&self, s: usize) -> Vec<Vec<f64>> {
        self.dice[s]
            .chunks(self.b_size)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn marginal_a(&self, s: usize) -> Vec<f64> {
        self.dice[s]
            .chunks(self.b_size)
            .map(|row| row.iter().sum())
            .collect()
    }

    pub fn marginal_b(&self, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.b_size];
        for row in self.dice[s].chunks(self.b_size) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    /// The same source seen as a single-party source over the pair alphabet.
    pub fn as_source_spec(&self) -> SourceSpec {
        SourceSpec {
            alphabet_size: self.a_size * self.b_size,
            dice: self
                .dice
                .iter()
                .map(|d| Distribution { probs: d.clone() })
                .collect(),
            exact: None,
            labels: None,
        }
    }

    pub(crate) fn from_flat(a_size: usize, b_size: usize, dice: Vec<Vec<f64>>) -> Self {
        Self {
            a_size,
            b_size,
            dice,
        }
    }
}

// ---------------------------------------------------------------------------
// Strings, extractors and strategies
// ---------------------------------------------------------------------------

/// Observed prefix `c^{i-1}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct History(Vec<usize>);

impl History {
    pub fn new(symbols: Vec<usize>, alphabet_size: usize) -> Result<Self, ModelError> {
        if let Some(&symbol) = symbols.iter().find(|&&c| c >= alphabet_size) {
            return Err(ModelError::SymbolOutOfRange {
                symbol,
                alphabet_size,
            });
        }
        Ok(Self(symbols))
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn lex_index(&self, alphabet_size: usize) -> usize {
        lex_index(&self.0, alphabet_size)
    }
}

pub fn lex_index(symbols: &[usize], alphabet_size: usize) -> usize {
    symbols.iter().fold(0, |acc, &c| acc * alphabet_size + c)
}

pub fn string_at(mut index: usize, alphabet_size: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for slot in out.iter_mut().rev() {
        *slot = index % alphabet_size;
        index /= alphabet_size;
    }
    out
}

/// Lexicographic odometer over `C^n`.
#[derive(Debug, Clone)]
pub struct Strings {
    alphabet_size: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for Strings {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let mut next = out.clone();
        let mut i = next.len();
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            next[i] += 1;
            if next[i] < self.alphabet_size {
                self.current = Some(next);
                break;
            }
            next[i] = 0;
        }
        Some(out)
    }
}

pub fn enumerate_strings(alphabet_size: usize, n: usize, budget: u64) -> Result<Strings, ModelError> {
    if alphabet_size == 0 {
        return Err(ModelError::Invalid(Violation::EmptyAlphabet.to_string()));
    }
    count_within_budget(alphabet_size, n, budget)?;
    Ok(Strings {
        alphabet_size,
        current: Some(vec![0; n]),
    })
}

/// A deterministic one-bit extractor: label 0 marks membership in the set `I`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExtractorTable {
    alphabet_size: usize,
    depth: usize,
    labels: Vec<u8>,
}

impl ExtractorTable {
    pub fn new(alphabet_size: usize, depth: usize, labels: Vec<u8>) -> Result<Self, ModelError> {
        let expected = checked_pow(alphabet_size, depth)
            .ok_or_else(|| ModelError::Invalid("table size overflows".into()))?;
        if labels.len() as u64 != expected {
            return Err(ModelError::Invalid(format!(
                "table of depth {depth} over {alphabet_size} symbols needs {expected} labels, got {}",
                labels.len()
            )));
        }
        if labels.iter().any(|&b| b > 1) {
            return Err(ModelError::Invalid("labels must be bits".into()));
        }
        Ok(Self {
            alphabet_size,
            depth,
            labels,
        })
    }

    pub fn constant(alphabet_size: usize, depth: usize, bit: u8) -> Result<Self, ModelError> {
        let len = count_within_budget(alphabet_size, depth, u64::MAX)?;
        Self::new(alphabet_size, depth, vec![bit; len])
    }

    /// Table whose zero-set is exactly the given string indices.
    pub fn from_zero_set(
        alphabet_size: usize,
        depth: usize,
        zeros: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ModelError> {
        let mut t = Self::constant(alphabet_size, depth, 1)?;
        for i in zeros {
            let slot = t
                .labels
                .get_mut(i)
                .ok_or_else(|| ModelError::Invalid(format!("string index {i} out of range")))?;
            *slot = 0;
        }
        Ok(t)
    }

    /// Table indexed by the bits of `mask`: bit `i` set means string `i` is in `I` (label 0).
    pub fn from_subset_mask(alphabet_size: usize, depth: usize, mask: u64) -> Result<Self, ModelError> {
        let len = count_within_budget(alphabet_size, depth, 64)?;
        let labels = (0..len).map(|i| u8::from(mask >> i & 1 == 0)).collect();
        Self::new(alphabet_size, depth, labels)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, string: &[usize]) -> u8 {
        self.labels[lex_index(string, self.alphabet_size)]
    }

    pub fn zero_count(&self) -> usize {
        self.labels.iter().filter(|&&b| b == 0).count()
    }

    /// The table of `I_c = { c_2 … c_n : (c, c_2 … c_n) ∈ I }`.
    pub fn child(&self, c: usize) -> Self {
        assert!(self.depth > 0, "a depth-0 table has no children");
        let w = self.labels.len() / self.alphabet_size;
        Self {
            alphabet_size: self.alphabet_size,
            depth: self.depth - 1,
            labels: self.labels[c * w..(c + 1) * w].to_vec(),
        }
    }

    /// Inverse of [`child`](Self::child): concatenates one subtree per symbol.
    pub fn join(children: &[ExtractorTable]) -> Result<Self, ModelError> {
        let first = children
            .first()
            .ok_or_else(|| ModelError::Invalid("no children to join".into()))?;
        if children.len() != first.alphabet_size
            || children
                .iter()
                .any(|c| c.depth != first.depth || c.alphabet_size != first.alphabet_size)
        {
            return Err(ModelError::Invalid("children disagree in shape".into()));
        }
        Ok(Self {
            alphabet_size: first.alphabet_size,
            depth: first.depth + 1,
            labels: children.iter().flat_map(|c| c.labels.iter().copied()).collect(),
        })
    }

    pub fn complement(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|&b| 1 - b).collect(),
            ..self.clone()
        }
    }

    pub fn labels_string(&self) -> String {
        self.labels.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
    }
}

/// A deterministic adversary: one die index per history of length `< depth`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyTree {
    alphabet_size: usize,
    depth: usize,
    /// `levels[i][lex_index(history)]` for histories of length `i`.
    levels: Vec<Vec<usize>>,
}

impl StrategyTree {
    pub fn new(
        alphabet_size: usize,
        num_dice: usize,
        levels: Vec<Vec<usize>>,
    ) -> Result<Self, ModelError> {
        for (i, level) in levels.iter().enumerate() {
            let expected = checked_pow(alphabet_size, i).unwrap_or(u64::MAX);
            if level.len() as u64 != expected {
                return Err(ModelError::Invalid(format!(
                    "strategy level {i} has {} entries, expected {expected}",
                    level.len()
                )));
            }
            if let Some(&s) = level.iter().find(|&&s| s >= num_dice) {
                return Err(ModelError::Invalid(format!("die index {s} out of range")));
            }
        }
        Ok(Self {
            alphabet_size,
            depth: levels.len(),
            levels,
        })
    }

    pub fn constant(alphabet_size: usize, depth: usize, die: usize) -> Self {
        let levels = (0..depth)
            .map(|i| vec![die; alphabet_size.pow(i as u32)])
            .collect();
        Self {
            alphabet_size,
            depth,
            levels,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn choice(&self, history: &[usize]) -> usize {
        self.levels[history.len()][lex_index(history, self.alphabet_size)]
    }
}

// ---------------------------------------------------------------------------
// Adversaries and sampling
// ---------------------------------------------------------------------------

/// Chooses the die for the next symbol given everything observed so far.
pub trait Adversary {
    /// Called before a fresh sequence starts.
    fn reset(&mut self) {}

    /// Longest history this adversary has a decision for, if bounded.
    fn horizon(&self) -> Option<usize> {
        None
    }

    fn choose_die(&mut self, history: &[usize], rng: &mut dyn RngCore) -> usize;
}

impl Adversary for StrategyTree {
    fn horizon(&self) -> Option<usize> {
        Some(self.depth)
    }

    fn choose_die(&mut self, history: &[usize], _rng: &mut dyn RngCore) -> usize {
        self.choice(history)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantAdversary(pub usize);

impl Adversary for ConstantAdversary {
    fn choose_die(&mut self, _history: &[usize], _rng: &mut dyn RngCore) -> usize {
        self.0
    }
}

/// Picks a die uniformly at random at every step.
#[derive(Debug, Clone, Copy)]
pub struct UniformAdversary {
    pub num_dice: usize,
}

impl Adversary for UniformAdversary {
    fn choose_die(&mut self, _history: &[usize], rng: &mut dyn RngCore) -> usize {
        rng.gen_range(0..self.num_dice)
    }
}

/// History-dependent mixture over dice, stored per prefix like [`StrategyTree`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedStrategy {
    alphabet_size: usize,
    /// `weights[i][lex_index(history)][s]`.
    weights: Vec<Vec<Vec<f64>>>,
}

impl RandomizedStrategy {
    pub fn new(alphabet_size: usize, weights: Vec<Vec<Vec<f64>>>) -> Self {
        Self {
            alphabet_size,
            weights,
        }
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, history: &[usize]) -> &[f64] {
        &self.weights[history.len()][lex_index(history, self.alphabet_size)]
    }

    /// Symbol distribution the mixture induces after `history`.
    pub fn conditional(&self, spec: &SourceSpec, history: &[usize]) -> Vec<f64> {
        let w = self.weights(history);
        (0..spec.alphabet_size())
            .map(|c| w.iter().zip(spec.dice()).map(|(w, d)| w * d.probs()[c]).sum())
            .collect()
    }
}

impl Adversary for RandomizedStrategy {
    fn horizon(&self) -> Option<usize> {
        Some(self.depth())
    }

    fn choose_die(&mut self, history: &[usize], rng: &mut dyn RngCore) -> usize {
        draw(self.weights(history), rng)
    }
}

/// Inverse-CDF draw from a probability vector.
pub fn draw(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap at the top; take the last symbol with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Lazily generated source symbols under a given adversary.
pub struct SourceStream<'a, R: RngCore> {
    spec: &'a SourceSpec,
    adversary: &'a mut dyn Adversary,
    rng: R,
    history: Vec<usize>,
    limit: Option<usize>,
}

impl<'a, R: RngCore> SourceStream<'a, R> {
    pub fn new(spec: &'a SourceSpec, adversary: &'a mut dyn Adversary, rng: R) -> Self {
        adversary.reset();
        Self {
            spec,
            limit: adversary.horizon(),
            adversary,
            rng,
            history: Vec::new(),
        }
    }

    pub fn history(&self) -> &[usize] {
        &self.history
    }
}

impl<R: RngCore> Iterator for SourceStream<'_, R> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.limit.is_some_and(|l| self.history.len() >= l) {
            return None;
        }
        let s = self.adversary.choose_die(&self.history, &mut self.rng);
        let c = draw(self.spec.die(s).probs(), &mut self.rng);
        self.history.push(c);
        Some(c)
    }
}

/// Generator for trial `trial` under `seed`: independent streams of one ChaCha key.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Draws `c^n` with each die picked by `adversary` from the observed prefix.
pub fn sample_sequence(
    spec: &SourceSpec,
    adversary: &mut dyn Adversary,
    n: usize,
    seed: u64,
) -> Result<Vec<usize>, ModelError> {
    sample_sequence_with(spec, adversary, n, trial_rng(seed, 0))
}

pub fn sample_sequence_with<R: RngCore>(
    spec: &SourceSpec,
    adversary: &mut dyn Adversary,
    n: usize,
    rng: R,
) -> Result<Vec<usize>, ModelError> {
    if let Some(depth) = adversary.horizon() {
        if depth < n {
            return Err(ModelError::DepthMismatch { depth, n });
        }
    }
    Ok(SourceStream::new(spec, adversary, rng).take(n).collect())
}
