//! Exact minimax analysis of a fixed extractor against the adaptive adversary.
//!
//! For a table `I` (label 0 ⇔ membership), `α(I)` and `β(I)` are the least and
//! greatest probability of landing in `I` over all adversary strategies. They
//! satisfy `α(I) = min_s Σ_c p_s(c) α(I_c)` and the same with `max` for `β`,
//! with leaves worth 1 inside `I` and 0 outside.

use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg;
use crate::model::{
    count_within_budget, ExtractorTable, ModelError, RandomizedStrategy, SourceSpec,
    StrategyTree, DEFAULT_BUDGET,
};
use crate::scalar::Field;
use crate::spread::{self, DeltaEstimate, SpreadError, SpreadOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdversaryError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("the table is over {table} symbols but the source has {source_size}")]
    Alphabet { table: usize, source_size: usize },
    #[error("exact arithmetic requested but the source has no exact probabilities")]
    NotExact,
    #[error("q is not in the interior of the convex hull of the dice")]
    NotInterior,
    #[error("q has {found} entries, expected {expected}")]
    QLength { expected: usize, found: usize },
    #[error("eps = {eps} is too large: the tilted conditional after history {history:?} leaves the hull of the dice")]
    EpsTooLarge { eps: f64, history: Vec<usize> },
    #[error("eps must be positive, got {0}")]
    EpsRange(f64),
    #[error("no proper subset of the table has mass at least 1/2, so there is nothing to tilt")]
    NothingToTilt,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct AlphaBeta<T> {
    pub alpha: T,
    pub beta: T,
}

impl AlphaBeta<BigRational> {
    pub fn to_f64(&self) -> AlphaBeta<f64> {
        AlphaBeta {
            alpha: self.alpha.to_f64(),
            beta: self.beta.to_f64(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Min,
    Max,
}

fn check_shape(spec: &SourceSpec, table: &ExtractorTable) -> Result<(), AdversaryError> {
    if table.alphabet_size() != spec.alphabet_size() {
        return Err(AdversaryError::Alphabet {
            table: table.alphabet_size(),
            source_size: spec.alphabet_size(),
        });
    }
    Ok(())
}

fn leaf_values<T: Field>(labels: &[u8]) -> Vec<T> {
    labels
        .iter()
        .map(|&b| if b == 0 { T::one() } else { T::zero() })
        .collect()
}

/// Best die and its value at one node; ties resolve to the smallest index.
fn best_die<T: Field>(dice: &[Vec<T>], children: &[T], objective: Objective) -> (usize, T) {
    let mut best: Option<(usize, T)> = None;
    for (s, die) in dice.iter().enumerate() {
        let v = die
            .iter()
            .zip(children)
            .fold(T::zero(), |acc, (p, x)| acc + p.clone() * x.clone());
        let better = match &best {
            None => true,
            Some((_, b)) => match objective {
                Objective::Min => v < *b,
                Objective::Max => v > *b,
            },
        };
        if better {
            best = Some((s, v));
        }
    }
    best.expect("a source has at least one die")
}

/// Value of the game and the optimal choice at every node, level by level from the root.
pub fn solve<T: Field>(
    dice: &[Vec<T>],
    table: &ExtractorTable,
    objective: Objective,
) -> (T, Vec<Vec<usize>>) {
    let k = table.alphabet_size();
    let mut values: Vec<T> = leaf_values(table.labels());
    let mut choices = Vec::with_capacity(table.depth());
    for _ in 0..table.depth() {
        let level: Vec<(usize, T)> = if values.len() >= 1 << 12 {
            values
                .par_chunks(k)
                .map(|ch| best_die(dice, ch, objective))
                .collect()
        } else {
            values
                .chunks(k)
                .map(|ch| best_die(dice, ch, objective))
                .collect()
        };
        let (c, v): (Vec<usize>, Vec<T>) = level.into_iter().unzip();
        choices.push(c);
        values = v;
    }
    choices.reverse();
    (values.into_iter().next().expect("root value"), choices)
}

/// `(α(I), β(I))` with the dice as given.
pub fn alpha_beta_with<T: Field>(dice: &[Vec<T>], table: &ExtractorTable) -> AlphaBeta<T> {
    AlphaBeta {
        alpha: solve(dice, table, Objective::Min).0,
        beta: solve(dice, table, Objective::Max).0,
    }
}

fn float_dice(spec: &SourceSpec) -> Vec<Vec<f64>> {
    spec.dice().iter().map(|d| d.probs().to_vec()).collect()
}

pub fn alpha_beta(spec: &SourceSpec, table: &ExtractorTable) -> Result<AlphaBeta<f64>, AdversaryError> {
    check_shape(spec, table)?;
    count_within_budget(table.alphabet_size(), table.depth(), DEFAULT_BUDGET)?;
    Ok(match spec.exact_dice() {
        Some(ex) => alpha_beta_with(ex, table).to_f64(),
        None => alpha_beta_with(&float_dice(spec), table),
    })
}

/// Exact `(α, β)`; the source must carry rational probabilities.
pub fn alpha_beta_exact(
    spec: &SourceSpec,
    table: &ExtractorTable,
) -> Result<AlphaBeta<BigRational>, AdversaryError> {
    check_shape(spec, table)?;
    count_within_budget(table.alphabet_size(), table.depth(), DEFAULT_BUDGET)?;
    let ex = spec.exact_dice().ok_or(AdversaryError::NotExact)?;
    Ok(alpha_beta_with(ex, table))
}

/// A deterministic strategy attaining `α` (`Min`) or `β` (`Max`).
pub fn optimal_strategy(
    spec: &SourceSpec,
    table: &ExtractorTable,
    objective: Objective,
) -> Result<StrategyTree, AdversaryError> {
    check_shape(spec, table)?;
    count_within_budget(table.alphabet_size(), table.depth(), DEFAULT_BUDGET)?;
    let levels = match spec.exact_dice() {
        Some(ex) => solve(ex, table, objective).1,
        None => solve(&float_dice(spec), table, objective).1,
    };
    Ok(StrategyTree::new(spec.alphabet_size(), spec.num_dice(), levels)?)
}

/// The set of achievable `(α, β)` pairs at depth `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiSet<T> {
    pub n: usize,
    pub points: Vec<AlphaBeta<T>>,
}

fn dedup_points<T: Field>(mut points: Vec<AlphaBeta<T>>) -> Vec<AlphaBeta<T>> {
    points.sort_by(|a, b| {
        a.alpha
            .partial_cmp(&b.alpha)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.beta.partial_cmp(&b.beta).unwrap_or(std::cmp::Ordering::Equal))
    });
    let one = T::one();
    points.dedup_by(|a, b| {
        (a.alpha.clone() - b.alpha.clone()).is_negligible(&one)
            && (a.beta.clone() - b.beta.clone()).is_negligible(&one)
    });
    points
}

/// Runs the DP over every subset of `C^n`.
pub fn phi_set_with<T: Field>(
    dice: &[Vec<T>],
    alphabet_size: usize,
    n: usize,
    budget: u64,
) -> Result<PhiSet<T>, AdversaryError> {
    let leaves = count_within_budget(alphabet_size, n, 63)?;
    let subsets = 1u64 << leaves;
    if subsets > budget {
        return Err(ModelError::BudgetExceeded {
            requested: format!("2^({alphabet_size}^{n})"),
            budget,
        }
        .into());
    }
    let points: Vec<AlphaBeta<T>> = (0..subsets)
        .into_par_iter()
        .map(|mask| {
            let t = ExtractorTable::from_subset_mask(alphabet_size, n, mask)
                .expect("mask width checked above");
            alpha_beta_with(dice, &t)
        })
        .collect();
    Ok(PhiSet {
        n,
        points: dedup_points(points),
    })
}

pub fn phi_set(spec: &SourceSpec, n: usize) -> Result<PhiSet<f64>, AdversaryError> {
    match spec.exact_dice() {
        Some(ex) => {
            let exact = phi_set_with(ex, spec.alphabet_size(), n, DEFAULT_BUDGET)?;
            Ok(PhiSet {
                n,
                points: exact.points.iter().map(AlphaBeta::to_f64).collect(),
            })
        }
        None => phi_set_with(&float_dice(spec), spec.alphabet_size(), n, DEFAULT_BUDGET),
    }
}

pub fn phi_set_exact(spec: &SourceSpec, n: usize) -> Result<PhiSet<BigRational>, AdversaryError> {
    let ex = spec.exact_dice().ok_or(AdversaryError::NotExact)?;
    phi_set_with(ex, spec.alphabet_size(), n, DEFAULT_BUDGET)
}

// ---------------------------------------------------------------------------
// The g_ε certificate
// ---------------------------------------------------------------------------

/// `g(x) = x + ε x(1 − x)`; every achievable pair satisfies `β ≥ g(α)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GEpsilonCert {
    pub epsilon: f64,
    /// Bound on `|f'|` for `f(x) = x(1 − x)` on `[0, 1]`.
    pub m_f: f64,
    pub delta: DeltaEstimate,
    pub alphabet_size: usize,
}

impl GEpsilonCert {
    pub fn shape(x: f64) -> f64 {
        x * (1.0 - x)
    }

    pub fn g(&self, x: f64) -> f64 {
        x + self.epsilon * Self::shape(x)
    }

    /// Every pair with `β ≥ g(α)` has `max(|α − ½|, |β − ½|)` at least this large.
    ///
    /// Inside the box of half-width `η` around the center, `β − α < 2η` while
    /// `g(α) − α ≥ ε(¼ − η²)`; the bound is the root of `2η = ε(¼ − η²)`.
    pub fn separation_margin(&self) -> f64 {
        let e = self.epsilon;
        (-2.0 + (4.0 + e * e).sqrt()) / (2.0 * e)
    }

    pub fn dominates(&self, alpha: f64, beta: f64) -> bool {
        beta >= self.g(alpha) - 1e-12
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CertOptions {
    pub tol: f64,
    pub spread: SpreadOptions,
}

impl Default for CertOptions {
    fn default() -> Self {
        Self {
            tol: crate::model::DEFAULT_TOL,
            spread: SpreadOptions::default(),
        }
    }
}

pub fn build_g_certificate(spec: &SourceSpec) -> Option<GEpsilonCert> {
    build_g_certificate_with(spec, &CertOptions::default())
}

/// `None` when some non-constant function has a die-independent mean (then `Δ = 0`).
pub fn build_g_certificate_with(spec: &SourceSpec, opts: &CertOptions) -> Option<GEpsilonCert> {
    let k = spec.alphabet_size();
    let dice = float_dice(spec);
    let diffs: Vec<Vec<f64>> = dice
        .iter()
        .skip(1)
        .map(|d| d.iter().zip(&dice[0]).map(|(x, y)| x - y).collect())
        .collect();
    let rank = match spec.exact_dice() {
        Some(ex) => {
            let d: Vec<Vec<BigRational>> = ex
                .iter()
                .skip(1)
                .map(|d| d.iter().zip(&ex[0]).map(|(x, y)| x - y).collect())
                .collect();
            linalg::rank(&d)
        }
        None => linalg::rank(&diffs),
    };
    // die-independent means span the constants plus k - 1 - rank further directions
    if rank + 1 < k {
        return None;
    }
    let delta = match spread::spread_constant(&dice, &opts.spread) {
        Ok(d) => d,
        Err(SpreadError::Trivial | SpreadError::Shape) => return None,
    };
    if delta.value <= opts.tol {
        return None;
    }
    let m_f = 1.0;
    let epsilon = 0.5 * f64::min(1.0 / m_f, delta.value / (2.0 * m_f * k as f64));
    Some(GEpsilonCert {
        epsilon,
        m_f,
        delta,
        alphabet_size: k,
    })
}

pub fn check_g_dominates(cert: &GEpsilonCert, points: &[AlphaBeta<f64>]) -> bool {
    points.iter().all(|p| cert.dominates(p.alpha, p.beta))
}

/// `min` over the points of `max(|α − ½|, |β − ½|)`.
pub fn center_distance(points: &[AlphaBeta<f64>]) -> f64 {
    points
        .iter()
        .map(|p| (p.alpha - 0.5).abs().max((p.beta - 0.5).abs()))
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// The tilting adversary
// ---------------------------------------------------------------------------

/// Hull slack required of `q` itself.
pub const INTERIOR_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltOutcome {
    /// The bit whose probability was boosted (1 when the complement table was tilted).
    pub favored_bit: u8,
    /// Indices of `I_0`, lexicographic order.
    pub core: Vec<usize>,
    /// `q^n(I_0)`.
    pub core_mass: f64,
    /// `p̃` over all strings.
    pub tilted: Vec<f64>,
    /// `p̃(I)` for the tilted table, i.e. the probability of `favored_bit`.
    pub achieved: f64,
    #[serde(skip)]
    pub strategy: RandomizedStrategy,
}

pub fn tilt_adversary(
    spec: &SourceSpec,
    table: &ExtractorTable,
    q: &[f64],
    eps: f64,
) -> Result<TiltOutcome, AdversaryError> {
    check_shape(spec, table)?;
    let k = spec.alphabet_size();
    let n = table.depth();
    let len = count_within_budget(k, n, DEFAULT_BUDGET)?;
    if q.len() != k {
        return Err(AdversaryError::QLength {
            expected: k,
            found: q.len(),
        });
    }
    if !(eps > 0.0) {
        return Err(AdversaryError::EpsRange(eps));
    }
    let dice = float_dice(spec);
    if linalg::in_hull(&dice, q, INTERIOR_SLACK).is_none() {
        return Err(AdversaryError::NotInterior);
    }

    let qn: Vec<f64> = (0..len)
        .map(|i| {
            crate::model::string_at(i, k, n)
                .iter()
                .map(|&c| q[c])
                .product()
        })
        .collect();
    let mass_in = |t: &ExtractorTable| -> f64 {
        t.labels()
            .iter()
            .zip(&qn)
            .filter(|(&b, _)| b == 0)
            .map(|(_, m)| m)
            .sum()
    };
    let (target, favored_bit) = if mass_in(table) >= 0.5 {
        (table.clone(), 0)
    } else {
        (table.complement(), 1)
    };

    // greedy minimal core: drop the heaviest strings first while mass stays ≥ 1/2
    let mut members: Vec<usize> = (0..len).filter(|&i| target.labels()[i] == 0).collect();
    members.sort_by(|&a, &b| qn[b].partial_cmp(&qn[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut mass: f64 = members.iter().map(|&i| qn[i]).sum();
    let mut keep = vec![false; len];
    for &i in &members {
        keep[i] = true;
    }
    for &i in &members {
        if mass - qn[i] >= 0.5 {
            mass -= qn[i];
            keep[i] = false;
        }
    }
    if mass >= 1.0 {
        return Err(AdversaryError::NothingToTilt);
    }
    let core: Vec<usize> = (0..len).filter(|&i| keep[i]).collect();
    let outside = (1.0 - (1.0 + eps) * mass) / (1.0 - mass);
    let tilted: Vec<f64> = (0..len)
        .map(|i| if keep[i] { (1.0 + eps) * qn[i] } else { outside * qn[i] })
        .collect();
    if outside < 0.0 {
        return Err(AdversaryError::EpsTooLarge {
            eps,
            history: Vec::new(),
        });
    }

    // prefix masses level by level, leaves first
    let mut prefix = vec![tilted.clone()];
    for _ in 0..n {
        let last = prefix.last().expect("non-empty");
        prefix.push(last.chunks(k).map(|c| c.iter().sum()).collect());
    }
    prefix.reverse();
    let mut weights = Vec::with_capacity(n);
    for level in 0..n {
        let parents = &prefix[level];
        let children = &prefix[level + 1];
        let mut lw = Vec::with_capacity(parents.len());
        for (h, &pm) in parents.iter().enumerate() {
            let cond: Vec<f64> = if pm > 0.0 {
                children[h * k..(h + 1) * k].iter().map(|c| c / pm).collect()
            } else {
                q.to_vec()
            };
            let lambda = linalg::in_hull(&dice, &cond, 0.0).ok_or_else(|| AdversaryError::EpsTooLarge {
                eps,
                history: crate::model::string_at(h, k, level),
            })?;
            let total: f64 = lambda.iter().sum();
            lw.push(lambda.into_iter().map(|l| l / total).collect());
        }
        weights.push(lw);
    }
    let achieved = target
        .labels()
        .iter()
        .zip(&tilted)
        .filter(|(&b, _)| b == 0)
        .map(|(_, p)| p)
        .sum();
    Ok(TiltOutcome {
        favored_bit,
        core,
        core_mass: mass,
        tilted,
        achieved,
        strategy: RandomizedStrategy::new(k, weights),
    })
}

/// Probability of `table`'s zero-set when the adversary plays `strategy`.
pub fn randomized_zero_probability(
    spec: &SourceSpec,
    strategy: &RandomizedStrategy,
    table: &ExtractorTable,
) -> f64 {
    let k = spec.alphabet_size();
    let n = table.depth();
    (0..table.labels().len())
        .filter(|&i| table.labels()[i] == 0)
        .map(|i| {
            let s = crate::model::string_at(i, k, n);
            (0..n)
                .map(|t| strategy.conditional(spec, &s[..t])[s[t]])
                .product::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::from_ratio(p, d)
    }

    fn exact_binary(num: i64, den: i64) -> SourceSpec {
        SourceSpec::from_exact(
            2,
            vec![vec![q(num, den), q(den - num, den)], vec![q(den - num, den), q(num, den)]],
        )
        .unwrap()
    }

    #[test]
    fn one_step_examples() {
        let spec = exact_binary(1, 3);
        let t = ExtractorTable::new(2, 1, vec![0, 1]).unwrap();
        let ab = alpha_beta_exact(&spec, &t).unwrap();
        assert_eq!((ab.alpha, ab.beta), (q(1, 3), q(2, 3)));
        let s = optimal_strategy(&spec, &t, Objective::Max).unwrap();
        assert_eq!(s.choice(&[]), 1);
    }

    #[test]
    fn constant_tables() {
        let spec = exact_binary(1, 3);
        for n in 0..4 {
            let empty = ExtractorTable::constant(2, n, 1).unwrap();
            let full = ExtractorTable::constant(2, n, 0).unwrap();
            let e = alpha_beta_exact(&spec, &empty).unwrap();
            let f = alpha_beta_exact(&spec, &full).unwrap();
            assert_eq!((e.alpha, e.beta), (q(0, 1), q(0, 1)));
            assert_eq!((f.alpha, f.beta), (q(1, 1), q(1, 1)));
            let s = optimal_strategy(&spec, &empty, Objective::Max).unwrap();
            assert!(s.levels().iter().flatten().all(|&c| c == 0));
        }
    }

    #[test]
    fn phi_small_cases() {
        let spec = exact_binary(1, 3);
        let p0 = phi_set_exact(&spec, 0).unwrap();
        assert_eq!(
            p0.points,
            vec![
                AlphaBeta { alpha: q(0, 1), beta: q(0, 1) },
                AlphaBeta { alpha: q(1, 1), beta: q(1, 1) }
            ]
        );
        let p1 = phi_set_exact(&spec, 1).unwrap();
        assert_eq!(p1.points.len(), 3);
        assert_eq!(p1.points[1], AlphaBeta { alpha: q(1, 3), beta: q(2, 3) });
        assert!(phi_set_exact(&spec, 5).is_err());
    }

    #[test]
    fn binary_certificate() {
        let d = 1.0 / 3.0;
        let spec = SourceSpec::new(2, vec![vec![d, 1.0 - d], vec![1.0 - d, d]]).unwrap();
        let cert = build_g_certificate(&spec).unwrap();
        assert!((cert.delta.value - 2.0 / 3.0).abs() < 1e-12);
        assert!((cert.epsilon - 1.0 / 12.0).abs() < 1e-12);
        assert!((cert.g(0.5) - (0.5 + 1.0 / 48.0)).abs() < 1e-15);
        assert_eq!(cert.g(0.0), 0.0);
        assert_eq!(cert.g(1.0), 1.0);
        assert!(cert.dominates(0.0, 0.0));
        assert!(!cert.dominates(0.5, 0.5));
    }

    #[test]
    fn extractable_sources_have_no_certificate() {
        let spec = SourceSpec::new(3, vec![vec![0.5, 0.25, 0.25], vec![0.25, 0.5, 0.25]]).unwrap();
        assert!(build_g_certificate(&spec).is_none());
        let same = SourceSpec::new(2, vec![vec![0.4, 0.6], vec![0.4, 0.6]]).unwrap();
        assert!(build_g_certificate(&same).is_none());
    }

    #[test]
    fn tilt_examples() {
        let d = 1.0 / 3.0;
        let spec = SourceSpec::new(2, vec![vec![d, 1.0 - d], vec![1.0 - d, d]]).unwrap();
        let t = ExtractorTable::new(2, 1, vec![0, 1]).unwrap();
        let out = tilt_adversary(&spec, &t, &[0.5, 0.5], 0.1).unwrap();
        assert_eq!(out.core, vec![0]);
        assert!((out.tilted[0] - 0.55).abs() < 1e-12);
        assert!((out.achieved - 0.55).abs() < 1e-12);
        assert!((randomized_zero_probability(&spec, &out.strategy, &t) - 0.55).abs() < 1e-12);
        match tilt_adversary(&spec, &t, &[0.5, 0.5], 0.5) {
            Err(AdversaryError::EpsTooLarge { history, .. }) => assert!(history.is_empty()),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            tilt_adversary(&spec, &t, &[d, 1.0 - d], 0.1),
            Err(AdversaryError::NotInterior)
        );
    }

    #[test]
    fn tilt_uses_complement_when_light() {
        let d = 1.0 / 3.0;
        let spec = SourceSpec::new(2, vec![vec![d, 1.0 - d], vec![1.0 - d, d]]).unwrap();
        let t = ExtractorTable::new(2, 2, vec![0, 1, 1, 1]).unwrap();
        let out = tilt_adversary(&spec, &t, &[0.5, 0.5], 0.05).unwrap();
        assert_eq!(out.favored_bit, 1);
        assert!(out.achieved >= 0.525 - 1e-12);
    }
}
