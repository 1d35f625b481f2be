//! Two parties, Alice seeing `A` and Bob seeing `B`, drawn from dice `p_s(a, b)`.
//!
//! The common part `C` is the connected component of `(A, B)` in the bipartite
//! support graph; each party can compute it alone. A common bit can be
//! extracted exactly when a bit can be extracted from the induced source over
//! `C`; otherwise the certificates here witness impossibility.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_rational::BigRational;
use petgraph::unionfind::UnionFind;
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::extractor::{
    self, AdaptiveSign, BitTrace, ExtractError, MartingaleConfig, PsiWitness, Status, Verdict,
};
use crate::linalg;
use crate::model::{
    count_within_budget, Adversary, JointSourceSpec, ModelError, SourceSpec, SourceStream,
    DEFAULT_BUDGET, DEFAULT_TOL,
};
use crate::scalar::{rational_from_f64_exact, Field};
use crate::spread::{self, DeltaEstimate, SpreadError, SpreadOptions};

/// Entries at or below this are not edges of the support graph.
pub const EDGE_TOL: f64 = 1e-12;
/// Default mixing weight of the perturbation that equalizes supports.
pub const DEFAULT_TAU: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Spread(#[from] SpreadError),
    #[error("the joint distribution is {rows}x{cols}, which does not match the expected shape")]
    Shape { rows: usize, cols: usize },
    #[error("a marginal has no positive entry")]
    EmptyMarginal,
    #[error("maximal correlation is 1, so no certificate exists (the parties share common data)")]
    RhoOne,
    #[error("the {side} side has a non-zero die-independent function of the common part (die {die}), so Δ' = 0")]
    HypothesisViolated { side: char, die: usize },
    #[error("die {die} gives zero probability to {side}-symbol {symbol}; perturb the source first")]
    ZeroMarginal { side: char, die: usize, symbol: usize },
    #[error("the conditional maximal correlation is {0}, not below 1")]
    ConditionalRhoOne(f64),
    #[error("perturbation check failed: {0}")]
    Perturbation(String),
    #[error("tau must lie in [0, 1], got {0}")]
    Tau(f64),
    #[error("common extraction needs a COMMON-EXTRACTABLE source, got {0:?}")]
    NotExtractable(DistStatus),
    #[error("conditional bit probabilities have {found} entries, expected {expected}")]
    Conditionals { expected: usize, found: usize },
}

// ---------------------------------------------------------------------------
// Maximal correlation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxCorrResult {
    pub rho: f64,
    /// Zero-mean, unit-variance function of `A` attaining `rho`; absent when a marginal has one atom.
    pub witness_x: Option<Vec<f64>>,
    pub witness_y: Option<Vec<f64>>,
}

fn shape_of(joint: &[Vec<f64>]) -> Result<(usize, usize), DistError> {
    let rows = joint.len();
    let cols = joint.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || joint.iter().any(|r| r.len() != cols) {
        return Err(DistError::Shape { rows, cols });
    }
    Ok((rows, cols))
}

pub fn marginals(joint: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let pa = joint.iter().map(|r| r.iter().sum()).collect();
    let cols = joint.first().map_or(0, Vec::len);
    let pb = (0..cols).map(|b| joint.iter().map(|r| r[b]).sum()).collect();
    (pa, pb)
}

/// Zero-mean unit-variance unit vector in `√p`-coordinates: removes the `√p` direction.
///
/// A vector with no usable component (possible when `ρ = 0`) is replaced by the
/// projection of the basis vector least aligned with `√p`.
fn center_unit(mut u: Vec<f64>, sqrt_p: &[f64]) -> Vec<f64> {
    let project = |u: &mut Vec<f64>| {
        let c = linalg::dot(u, sqrt_p);
        for (x, s) in u.iter_mut().zip(sqrt_p) {
            *x -= c * s;
        }
        linalg::dot(u, u).sqrt()
    };
    let mut n = project(&mut u);
    if n < 1e-8 {
        let i = (0..sqrt_p.len())
            .min_by(|&a, &b| sqrt_p[a].total_cmp(&sqrt_p[b]))
            .expect("non-empty");
        u = vec![0.0; sqrt_p.len()];
        u[i] = 1.0;
        n = project(&mut u);
    }
    u.iter_mut().for_each(|x| *x /= n);
    u
}

/// `ρ(A, B)`: the largest singular value of `p(ab)/√(p(a)p(b)) − √p(a)√p(b)`.
pub fn maximal_correlation(joint: &[Vec<f64>]) -> Result<MaxCorrResult, DistError> {
    let (rows, cols) = shape_of(joint)?;
    let (pa, pb) = marginals(joint);
    let sa: Vec<usize> = (0..rows).filter(|&a| pa[a] > 0.0).collect();
    let sb: Vec<usize> = (0..cols).filter(|&b| pb[b] > 0.0).collect();
    if sa.is_empty() || sb.is_empty() {
        return Err(DistError::EmptyMarginal);
    }
    if sa.len() < 2 || sb.len() < 2 {
        return Ok(MaxCorrResult {
            rho: 0.0,
            witness_x: None,
            witness_y: None,
        });
    }
    let ra: Vec<f64> = sa.iter().map(|&a| pa[a].sqrt()).collect();
    let rb: Vec<f64> = sb.iter().map(|&b| pb[b].sqrt()).collect();
    let (r, c) = (sa.len(), sb.len());
    let m = DMatrix::from_fn(r, c, |i, j| joint[sa[i]][sb[j]] / (ra[i] * rb[j]) - ra[i] * rb[j]);
    // eigenvalues of [[0, M], [Mᵀ, 0]] are ±σ(M) with absolute accuracy, even for rank-deficient M
    let mut h = DMatrix::zeros(r + c, r + c);
    h.view_mut((0, r), (r, c)).copy_from(&m);
    h.view_mut((r, 0), (c, r)).copy_from(&m.transpose());
    let eig = SymmetricEigen::new(h);
    let (top, &sigma) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty matrix");
    let col = eig.eigenvectors.column(top);
    let u = center_unit(col.rows(0, r).iter().copied().collect(), &ra);
    let mut v = center_unit(col.rows(r, c).iter().copied().collect(), &rb);
    // singular vectors are defined up to a joint sign; keep E[XY] ≥ 0
    let uv: f64 = (0..r)
        .map(|i| (0..c).map(|j| u[i] * m[(i, j)] * v[j]).sum::<f64>())
        .sum();
    if uv < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let mut x = vec![0.0; rows];
    for (i, &a) in sa.iter().enumerate() {
        x[a] = u[i] / ra[i];
    }
    let mut y = vec![0.0; cols];
    for (j, &b) in sb.iter().enumerate() {
        y[b] = v[j] / rb[j];
    }
    Ok(MaxCorrResult {
        rho: sigma.clamp(0.0, 1.0),
        witness_x: Some(x),
        witness_y: Some(y),
    })
}

/// `E[XY]`, `E[X]`, `E[Y]`, `E[X²]`, `E[Y²]` under `joint`.
pub fn joint_moments(joint: &[Vec<f64>], x: &[f64], y: &[f64]) -> [f64; 5] {
    let mut m = [0.0; 5];
    for (a, row) in joint.iter().enumerate() {
        for (b, &p) in row.iter().enumerate() {
            m[0] += p * x[a] * y[b];
            m[1] += p * x[a];
            m[2] += p * y[b];
            m[3] += p * x[a] * x[a];
            m[4] += p * y[b] * y[b];
        }
    }
    m
}

/// Tensor product joint `p(a a', b b') = p(a, b) p(a', b')`.
pub fn tensor(p: &[Vec<f64>], q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let qc = q.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(p.len() * q.len());
    for prow in p {
        for qrow in q {
            let mut row = Vec::with_capacity(prow.len() * qc);
            for &x in prow {
                for &y in qrow {
                    row.push(x * y);
                }
            }
            out.push(row);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Common part
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommonPart {
    /// Component of each `A`-symbol. Ids `0..num_nonsingleton` are components with an edge,
    /// numbered by first appearance scanning `A` then `B`; isolated symbols follow.
    pub component_of_a: Vec<usize>,
    pub component_of_b: Vec<usize>,
    pub num_components: usize,
    pub num_nonsingleton: usize,
}

impl CommonPart {
    pub fn is_nontrivial(&self) -> bool {
        self.num_nonsingleton >= 2
    }

    pub fn members_a(&self, c: usize) -> Vec<usize> {
        (0..self.component_of_a.len())
            .filter(|&a| self.component_of_a[a] == c)
            .collect()
    }

    pub fn members_b(&self, c: usize) -> Vec<usize> {
        (0..self.component_of_b.len())
            .filter(|&b| self.component_of_b[b] == c)
            .collect()
    }
}

/// Components of the union of the support graphs of `joints`.
pub fn common_part(joints: &[&[Vec<f64>]]) -> Result<CommonPart, DistError> {
    let (rows, cols) = shape_of(joints.first().ok_or(DistError::Shape { rows: 0, cols: 0 })?)?;
    for j in joints {
        if shape_of(j)? != (rows, cols) {
            return Err(DistError::Shape { rows: j.len(), cols: j[0].len() });
        }
    }
    let mut uf = UnionFind::<usize>::new(rows + cols);
    let mut has_edge = vec![false; rows + cols];
    for j in joints {
        for (a, row) in j.iter().enumerate() {
            for (b, &p) in row.iter().enumerate() {
                if p > EDGE_TOL {
                    uf.union(a, rows + b);
                    has_edge[a] = true;
                    has_edge[rows + b] = true;
                }
            }
        }
    }
    let mut id_of_root = std::collections::HashMap::new();
    let mut ids = vec![usize::MAX; rows + cols];
    let mut next = 0;
    for v in (0..rows + cols).filter(|&v| has_edge[v]) {
        let root = uf.find(v);
        ids[v] = *id_of_root.entry(root).or_insert_with(|| {
            next += 1;
            next - 1
        });
    }
    let num_nonsingleton = next;
    for id in ids.iter_mut().filter(|id| **id == usize::MAX) {
        *id = next;
        next += 1;
    }
    Ok(CommonPart {
        component_of_a: ids[..rows].to_vec(),
        component_of_b: ids[rows..].to_vec(),
        num_components: next,
        num_nonsingleton,
    })
}

pub fn common_part_of_spec(jspec: &JointSourceSpec) -> CommonPart {
    let mats: Vec<Vec<Vec<f64>>> = (0..jspec.num_dice()).map(|s| jspec.die_matrix(s)).collect();
    let refs: Vec<&[Vec<f64>]> = mats.iter().map(Vec::as_slice).collect();
    common_part(&refs).expect("a validated spec has consistent shapes")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalRho {
    pub rho: f64,
    /// `(component, mass, ρ given that component)` for every component with positive mass.
    pub per_component: Vec<(usize, f64, f64)>,
}

/// `ρ(A, B | C) = max_c ρ(A, B | C = c)` over components of positive mass.
pub fn conditional_maximal_correlation(
    joint: &[Vec<f64>],
    part: &CommonPart,
) -> Result<ConditionalRho, DistError> {
    shape_of(joint)?;
    let mut per_component = Vec::new();
    for c in 0..part.num_nonsingleton {
        let ra = part.members_a(c);
        let rb = part.members_b(c);
        let block: Vec<Vec<f64>> = ra
            .iter()
            .map(|&a| rb.iter().map(|&b| joint[a][b]).collect())
            .collect();
        let mass: f64 = block.iter().flatten().sum();
        if mass <= EDGE_TOL {
            continue;
        }
        let normalized: Vec<Vec<f64>> = block
            .iter()
            .map(|r| r.iter().map(|p| p / mass).collect())
            .collect();
        per_component.push((c, mass, maximal_correlation(&normalized)?.rho));
    }
    let rho = per_component.iter().map(|t| t.2).fold(0.0, f64::max);
    Ok(ConditionalRho { rho, per_component })
}

/// The source over the common part: `p_s(c) = Σ_{(a,b) ∈ c} p_s(a, b)` for non-singleton `c`.
pub fn induced_common_spec(jspec: &JointSourceSpec) -> (SourceSpec, CommonPart) {
    let part = common_part_of_spec(jspec);
    let k = part.num_nonsingleton.max(1);
    let dice: Vec<Vec<f64>> = (0..jspec.num_dice())
        .map(|s| {
            let mut d = vec![0.0; k];
            for a in 0..jspec.a_size() {
                let c = part.component_of_a[a];
                if c < part.num_nonsingleton {
                    for b in 0..jspec.b_size() {
                        d[c] += jspec.p(s, a, b);
                    }
                }
            }
            // below-tolerance entries outside the graph are dropped, so renormalize
            let total: f64 = d.iter().sum();
            d.iter_mut().for_each(|x| *x /= total);
            d
        })
        .collect();
    let spec = SourceSpec::new(k, dice).expect("component masses form distributions");
    (spec, part)
}

// ---------------------------------------------------------------------------
// Perturbation and the constants Δ, Δ'
// ---------------------------------------------------------------------------

/// `p'_s = (1 − τ) p_s + τ · mean_s' p_s'`; every die then has the union support.
pub fn perturb_spec(jspec: &JointSourceSpec, tau: f64) -> Result<JointSourceSpec, DistError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(DistError::Tau(tau));
    }
    let k = jspec.num_dice();
    let len = jspec.a_size() * jspec.b_size();
    let mean: Vec<f64> = (0..len)
        .map(|i| (0..k).map(|s| jspec.die_flat(s)[i]).sum::<f64>() / k as f64)
        .collect();
    let dice: Vec<Vec<f64>> = (0..k)
        .map(|s| {
            jspec
                .die_flat(s)
                .iter()
                .zip(&mean)
                .map(|(p, m)| (1.0 - tau) * p + tau * m)
                .collect()
        })
        .collect();
    let out = JointSourceSpec::from_flat(jspec.a_size(), jspec.b_size(), dice);
    if tau > 0.0 {
        for i in 0..len {
            let on: Vec<bool> = (0..k).map(|s| out.die_flat(s)[i] > EDGE_TOL).collect();
            if on.iter().any(|&x| x != on[0]) {
                return Err(DistError::Perturbation(format!(
                    "support of cell {i} differs across dice"
                )));
            }
        }
    }
    if common_part_of_spec(&out) != common_part_of_spec(jspec) {
        return Err(DistError::Perturbation("the union common part changed".into()));
    }
    Ok(out)
}

/// Restriction of a joint source to symbols that some die can emit.
pub fn restrict_to_support(jspec: &JointSourceSpec) -> (JointSourceSpec, Vec<usize>, Vec<usize>) {
    let k = jspec.num_dice();
    let keep_a: Vec<usize> = (0..jspec.a_size())
        .filter(|&a| (0..k).any(|s| jspec.marginal_a(s)[a] > EDGE_TOL))
        .collect();
    let keep_b: Vec<usize> = (0..jspec.b_size())
        .filter(|&b| (0..k).any(|s| jspec.marginal_b(s)[b] > EDGE_TOL))
        .collect();
    let dice = (0..k)
        .map(|s| {
            keep_a
                .iter()
                .flat_map(|&a| keep_b.iter().map(move |&b| (a, b)))
                .map(|(a, b)| jspec.p(s, a, b))
                .collect()
        })
        .collect();
    (
        JointSourceSpec::from_flat(keep_a.len(), keep_b.len(), dice),
        keep_a,
        keep_b,
    )
}

fn marginal_dice(jspec: &JointSourceSpec, side: char) -> Vec<Vec<f64>> {
    (0..jspec.num_dice())
        .map(|s| match side {
            'A' => jspec.marginal_a(s),
            _ => jspec.marginal_b(s),
        })
        .collect()
}

/// `Δ` on one side: the spread constant of that side's marginal dice.
pub fn side_delta(jspec: &JointSourceSpec, side: char, opts: &SpreadOptions) -> Result<DeltaEstimate, SpreadError> {
    spread::spread_constant(&marginal_dice(jspec, side), opts)
}

/// `(P_s X)(a) = E_s[X | C = C(a)]`, as a matrix acting on functions of one side.
pub fn conditional_expectation_matrix(marginal: &[f64], component: &[usize]) -> DMatrix<f64> {
    let n = marginal.len();
    let mut mass = std::collections::HashMap::<usize, f64>::new();
    for (a, &c) in component.iter().enumerate() {
        *mass.entry(c).or_default() += marginal[a];
    }
    DMatrix::from_fn(n, n, |i, j| {
        if component[i] == component[j] {
            let m = mass[&component[i]];
            if m > 0.0 {
                marginal[j] / m
            } else {
                0.0
            }
        } else {
            0.0
        }
    })
}

/// `X = U + U'` with `U = E_s[X | C]` and `E_s[U' | C] = 0`.
pub fn decompose(marginal: &[f64], component: &[usize], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = conditional_expectation_matrix(marginal, component);
    let u = &p * DVector::from_column_slice(x);
    let u: Vec<f64> = u.iter().copied().collect();
    let u_perp = x.iter().zip(&u).map(|(a, b)| a - b).collect();
    (u, u_perp)
}

/// Basis of `L' = {X : E_s[X] independent of s} ∩ 1^⊥` as columns.
fn l_prime_basis(dice: &[Vec<f64>]) -> DMatrix<f64> {
    let k = dice[0].len();
    let mut rows: Vec<Vec<f64>> = dice
        .iter()
        .skip(1)
        .map(|d| d.iter().zip(&dice[0]).map(|(x, y)| x - y).collect())
        .collect();
    rows.push(vec![1.0; k]);
    let ns = linalg::nullspace(&rows, k);
    DMatrix::from_fn(k, ns.len(), |i, j| ns[j][i])
}

/// `M_s = max ‖U‖_s / ‖U'‖_s` over `L'` on one side, `None` when `L' = {0}`.
fn side_ratio(dice: &[Vec<f64>], component: &[usize], side: char) -> Result<Vec<Option<f64>>, DistError> {
    let e = l_prime_basis(dice);
    if e.ncols() == 0 {
        return Ok(vec![None; dice.len()]);
    }
    let mut out = Vec::with_capacity(dice.len());
    for (s, die) in dice.iter().enumerate() {
        if let Some(symbol) = die.iter().position(|&p| p <= 0.0) {
            return Err(DistError::ZeroMarginal { side, die: s, symbol });
        }
        let p = conditional_expectation_matrix(die, component);
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(die));
        let u = &p * &e;
        let u_perp = &e - &u;
        let rank_tol = 1e-9 * e.norm().max(1.0);
        if u_perp.clone().svd(false, false).rank(rank_tol) < e.ncols() {
            return Err(DistError::HypothesisViolated { side, die: s });
        }
        let g1 = u.transpose() * &d * &u;
        let g2 = u_perp.transpose() * &d * &u_perp;
        let chol = nalgebra::Cholesky::new(g2).ok_or(DistError::HypothesisViolated { side, die: s })?;
        let l = chol.l();
        let li = l
            .clone()
            .try_inverse()
            .ok_or(DistError::HypothesisViolated { side, die: s })?;
        let c = &li * g1 * li.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let lmax = SymmetricEigen::new(c).eigenvalues.iter().copied().fold(0.0, f64::max);
        out.push(Some(lmax.max(0.0).sqrt()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaPrime {
    /// `min_s 1/M_s`; infinite when every `U` vanishes.
    pub value: f64,
    /// `M_s` per die, the larger of the two sides.
    pub ratios: Vec<f64>,
}

/// `Δ'` by a generalized eigenproblem per die and side.
pub fn delta_prime(jspec: &JointSourceSpec, part: &CommonPart) -> Result<DeltaPrime, DistError> {
    let a = side_ratio(&marginal_dice(jspec, 'A'), &part.component_of_a, 'A')?;
    let b = side_ratio(&marginal_dice(jspec, 'B'), &part.component_of_b, 'B')?;
    let ratios: Vec<f64> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| x.unwrap_or(0.0).max(y.unwrap_or(0.0)))
        .collect();
    let value = ratios
        .iter()
        .map(|&m| if m > 0.0 { 1.0 / m } else { f64::INFINITY })
        .fold(f64::INFINITY, f64::min);
    Ok(DeltaPrime { value, ratios })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaConstants {
    pub delta: f64,
    pub delta_a: DeltaEstimate,
    pub delta_b: DeltaEstimate,
    pub delta_prime: DeltaPrime,
}

pub fn compute_delta_constants(
    jspec: &JointSourceSpec,
    part: &CommonPart,
    opts: &SpreadOptions,
) -> Result<DeltaConstants, DistError> {
    let delta_a = side_delta(jspec, 'A', opts)?;
    let delta_b = side_delta(jspec, 'B', opts)?;
    Ok(DeltaConstants {
        delta: delta_a.value.min(delta_b.value),
        delta_a,
        delta_b,
        delta_prime: delta_prime(jspec, part)?,
    })
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// `f(x,y,z) = (x+y)ρ − 2z + 2xy − (x²+y²)ρ`, non-negative on every achievable triple of an i.i.d. source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitsenhausenCert {
    pub rho: f64,
    pub center: f64,
}

impl WitsenhausenCert {
    pub fn f(&self, x: f64, y: f64, z: f64) -> f64 {
        let r = self.rho;
        (x + y) * r - 2.0 * z + 2.0 * x * y - (x * x + y * y) * r
    }
}

pub fn witsenhausen_certificate(joint: &[Vec<f64>]) -> Result<WitsenhausenCert, DistError> {
    let rho = maximal_correlation(joint)?.rho;
    if rho >= 1.0 - DEFAULT_TOL {
        return Err(DistError::RhoOne);
    }
    Ok(WitsenhausenCert {
        rho,
        center: -(1.0 - rho) / 2.0,
    })
}

/// `f(x,y,z) = M(x+y) − 2(M+ε)z + 2xy − (1−ε)(x²+y²)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FCertificate {
    pub rho_cond: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub epsilon: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub a_size: usize,
    pub b_size: usize,
}

impl FCertificate {
    pub fn f(&self, x: f64, y: f64, z: f64) -> f64 {
        let (m, e) = (self.m, self.epsilon);
        m * (x + y) - 2.0 * (m + e) * z + 2.0 * x * y - (1.0 - e) * (x * x + y * y)
    }

    /// `f` evaluated exactly at rational points, with `M` and `ε` taken as their exact binary values.
    pub fn f_exact(&self, x: &BigRational, y: &BigRational, z: &BigRational) -> BigRational {
        let m = rational_from_f64_exact(self.m).expect("finite M");
        let e = rational_from_f64_exact(self.epsilon).expect("finite ε");
        let one = BigRational::from_ratio(1, 1);
        let two = BigRational::from_ratio(2, 1);
        m.clone() * (x + y) - two.clone() * (m + e.clone()) * z + two * x * y
            - (one - e) * (x * x + y * y)
    }

    pub fn epsilon_exact(&self) -> BigRational {
        rational_from_f64_exact(self.epsilon).expect("finite ε")
    }

    /// `0 < ε ≤ Δ'(1−ρ)/(1+Δ')` and `M ≥ 24|A||B|/Δ + 2`.
    pub fn hypotheses_hold(&self) -> bool {
        let bound = if self.delta_prime.is_infinite() {
            1.0 - self.rho_cond
        } else {
            self.delta_prime * (1.0 - self.rho_cond) / (1.0 + self.delta_prime)
        };
        self.epsilon > 0.0
            && self.epsilon <= bound
            && self.m >= 24.0 * (self.a_size * self.b_size) as f64 / self.delta + 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateBundle {
    pub certificate: FCertificate,
    pub constants: DeltaConstants,
    pub tau: f64,
    /// Symbols kept after dropping those no die can emit.
    pub kept_a: Vec<usize>,
    pub kept_b: Vec<usize>,
}

/// Builds `f` for a source whose common part admits no die-independent function.
///
/// The source is perturbed with weight `tau` and restricted to its support first.
pub fn build_f_certificate(
    jspec: &JointSourceSpec,
    tau: f64,
    opts: &SpreadOptions,
) -> Result<CertificateBundle, DistError> {
    let perturbed = perturb_spec(jspec, tau)?;
    let (spec, kept_a, kept_b) = restrict_to_support(&perturbed);
    let part = common_part_of_spec(&spec);
    for s in 0..spec.num_dice() {
        for (side, marg) in [('A', spec.marginal_a(s)), ('B', spec.marginal_b(s))] {
            if let Some(symbol) = marg.iter().position(|&p| p <= 0.0) {
                return Err(DistError::ZeroMarginal { side, die: s, symbol });
            }
        }
    }
    let rho_cond = (0..spec.num_dice())
        .map(|s| conditional_maximal_correlation(&spec.die_matrix(s), &part).map(|r| r.rho))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    if rho_cond >= 1.0 - DEFAULT_TOL {
        return Err(DistError::ConditionalRhoOne(rho_cond));
    }
    let constants = compute_delta_constants(&spec, &part, opts)?;
    let dp = constants.delta_prime.value;
    let epsilon = if dp.is_infinite() {
        0.5 * (1.0 - rho_cond)
    } else {
        0.5 * dp * (1.0 - rho_cond) / (1.0 + dp)
    };
    let (a_size, b_size) = (spec.a_size(), spec.b_size());
    let m = 24.0 * (a_size * b_size) as f64 / constants.delta + 2.0;
    Ok(CertificateBundle {
        certificate: FCertificate {
            rho_cond,
            delta: constants.delta,
            delta_prime: dp,
            epsilon,
            m,
            a_size,
            b_size,
        },
        constants,
        tau,
        kept_a,
        kept_b,
    })
}

// ---------------------------------------------------------------------------
// Achievable triples
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Triple {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripleSet {
    pub n: usize,
    pub points: Vec<Triple>,
}

/// Values of one pair of protocols at every node pair, leaves first.
struct PairGame {
    /// `alpha[level][node]`, level 0 = leaves.
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    /// `gamma[level][a_node * width_b + b_node]`.
    gamma: Vec<Vec<f64>>,
}

fn marginal_step(dice: &[Vec<f64>], children: &[f64]) -> f64 {
    dice.iter()
        .map(|d| linalg::dot(d, children))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn play_pair(jspec: &JointSourceSpec, n: usize, mask_i: u64, mask_j: u64) -> PairGame {
    let (ka, kb) = (jspec.a_size(), jspec.b_size());
    let ma = marginal_dice(jspec, 'A');
    let mb = marginal_dice(jspec, 'B');
    let la = ka.pow(n as u32);
    let lb = kb.pow(n as u32);
    let leaf_a: Vec<f64> = (0..la).map(|i| (mask_i >> i & 1) as f64).collect();
    let leaf_b: Vec<f64> = (0..lb).map(|j| (mask_j >> j & 1) as f64).collect();
    let mut alpha = vec![leaf_a.clone()];
    let mut beta = vec![leaf_b.clone()];
    let mut gamma = vec![leaf_a
        .iter()
        .flat_map(|x| leaf_b.iter().map(move |y| x * y))
        .collect::<Vec<f64>>()];
    let (mut wa, mut wb) = (la, lb);
    for _ in 0..n {
        let prev_a = alpha.last().expect("non-empty");
        let prev_b = beta.last().expect("non-empty");
        let prev_g = gamma.last().expect("non-empty");
        let na: Vec<f64> = prev_a.chunks(ka).map(|ch| marginal_step(&ma, ch)).collect();
        let nb: Vec<f64> = prev_b.chunks(kb).map(|ch| marginal_step(&mb, ch)).collect();
        let (pa, pb) = (wa / ka, wb / kb);
        let mut ng = vec![0.0; pa * pb];
        for u in 0..pa {
            for v in 0..pb {
                ng[u * pb + v] = (0..jspec.num_dice())
                    .map(|s| {
                        let mut acc = 0.0;
                        for a in 0..ka {
                            for b in 0..kb {
                                acc += jspec.p(s, a, b) * prev_g[(u * ka + a) * wb + v * kb + b];
                            }
                        }
                        acc
                    })
                    .fold(f64::INFINITY, f64::min);
            }
        }
        alpha.push(na);
        beta.push(nb);
        gamma.push(ng);
        wa = pa;
        wb = pb;
    }
    PairGame { alpha, beta, gamma }
}

fn pair_count(jspec: &JointSourceSpec, n: usize, budget: u64) -> Result<(u64, u64), DistError> {
    let la = count_within_budget(jspec.a_size(), n, 62)?;
    let lb = count_within_budget(jspec.b_size(), n, 62)?;
    if la + lb > 62 || 1u64 << (la + lb) > budget {
        return Err(ModelError::BudgetExceeded {
            requested: format!("2^({}^{n}) · 2^({}^{n})", jspec.a_size(), jspec.b_size()),
            budget,
        }
        .into());
    }
    Ok((1 << la, 1 << lb))
}

/// Every `(α(I), β(J), γ(I, J))` at depth `n`: `α` and `β` maximize over dice, `γ` minimizes.
///
/// Bit `i` of a subset mask marks string `i` as a member.
pub fn distributed_triples(jspec: &JointSourceSpec, n: usize) -> Result<TripleSet, DistError> {
    let (ni, nj) = pair_count(jspec, n, DEFAULT_BUDGET)?;
    let mut points: Vec<Triple> = (0..ni * nj)
        .into_par_iter()
        .map(|idx| {
            let g = play_pair(jspec, n, idx / nj, idx % nj);
            Triple {
                alpha: g.alpha[n][0],
                beta: g.beta[n][0],
                gamma: g.gamma[n][0],
            }
        })
        .collect();
    points.sort_by(|p, q| {
        p.alpha
            .total_cmp(&q.alpha)
            .then(p.beta.total_cmp(&q.beta))
            .then(p.gamma.total_cmp(&q.gamma))
    });
    points.dedup_by(|p, q| {
        (p.alpha - q.alpha).abs() < 1e-12
            && (p.beta - q.beta).abs() < 1e-12
            && (p.gamma - q.gamma).abs() < 1e-12
    });
    Ok(TripleSet { n, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecursionReport {
    pub edges_checked: u64,
    /// Smallest `f(node) − min_s E_s[f(children)]` seen.
    pub worst_slack: f64,
    pub min_f: f64,
}

impl RecursionReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.worst_slack >= -tol
    }
}

/// Checks `f(x̄, ȳ, z̄) ≥ min_s E_s[f(X, Y, Z)]` at every internal node pair of every protocol pair.
pub fn recursion_check(
    jspec: &JointSourceSpec,
    n: usize,
    f: &(dyn Fn(f64, f64, f64) -> f64 + Sync),
) -> Result<RecursionReport, DistError> {
    let (ni, nj) = pair_count(jspec, n, DEFAULT_BUDGET)?;
    let (ka, kb) = (jspec.a_size(), jspec.b_size());
    let reports: Vec<RecursionReport> = (0..ni * nj)
        .into_par_iter()
        .map(|idx| {
            let g = play_pair(jspec, n, idx / nj, idx % nj);
            let mut rep = RecursionReport {
                edges_checked: 0,
                worst_slack: f64::INFINITY,
                min_f: f64::INFINITY,
            };
            for level in 0..=n {
                let wb = g.beta[level].len();
                for (u, &x) in g.alpha[level].iter().enumerate() {
                    for (v, &y) in g.beta[level].iter().enumerate() {
                        let here = f(x, y, g.gamma[level][u * wb + v]);
                        rep.min_f = rep.min_f.min(here);
                        if level == 0 {
                            continue;
                        }
                        let cw = g.beta[level - 1].len();
                        let expected = (0..jspec.num_dice())
                            .map(|s| {
                                let mut acc = 0.0;
                                for a in 0..ka {
                                    for b in 0..kb {
                                        let (ca, cb) = (u * ka + a, v * kb + b);
                                        acc += jspec.p(s, a, b)
                                            * f(
                                                g.alpha[level - 1][ca],
                                                g.beta[level - 1][cb],
                                                g.gamma[level - 1][ca * cw + cb],
                                            );
                                    }
                                }
                                acc
                            })
                            .fold(f64::INFINITY, f64::min);
                        rep.edges_checked += 1;
                        rep.worst_slack = rep.worst_slack.min(here - expected);
                    }
                }
            }
            rep
        })
        .collect();
    Ok(reports.into_iter().fold(
        RecursionReport {
            edges_checked: 0,
            worst_slack: f64::INFINITY,
            min_f: f64::INFINITY,
        },
        |acc, r| RecursionReport {
            edges_checked: acc.edges_checked + r.edges_checked,
            worst_slack: acc.worst_slack.min(r.worst_slack),
            min_f: acc.min_f.min(r.min_f),
        },
    ))
}

// ---------------------------------------------------------------------------
// Verdict
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum DistStatus {
    CommonExtractable,
    Impossible,
    Gap,
}

impl DistStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            DistStatus::CommonExtractable => 0,
            DistStatus::Impossible => 1,
            DistStatus::Gap => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reason {
    /// Some die alone has `ρ < 1`; playing it every time defeats any protocol.
    IidDie { die: usize, rho: f64 },
    /// The union graph has fewer than two non-singleton components.
    TrivialCommonPart,
    /// The common part is itself an extractable source.
    CommonPartExtractable,
    /// No die-independent function of the common part exists.
    CommonPartImpossible,
    /// The common-part test fired but the certificate could not be built.
    CertificateUnavailable { error: String },
    /// The common-part source is degenerate and undecided.
    CommonPartGap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributedReport {
    pub status: DistStatus,
    pub reason: Reason,
    pub rho_per_die: Vec<f64>,
    pub common_part: CommonPart,
    /// Dice of the source over non-singleton components.
    pub induced_dice: Vec<Vec<f64>>,
    pub induced_verdict: Option<Verdict>,
    pub witsenhausen: Option<WitsenhausenCert>,
    pub certificate: Option<CertificateBundle>,
}

#[derive(Debug, Clone, Copy)]
pub struct DistOptions {
    pub tau: f64,
    pub tol: f64,
    pub spread: SpreadOptions,
}

impl Default for DistOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            tol: DEFAULT_TOL,
            spread: SpreadOptions::default(),
        }
    }
}

pub fn distributed_verdict(jspec: &JointSourceSpec) -> Result<DistributedReport, DistError> {
    distributed_verdict_with(jspec, &DistOptions::default())
}

pub fn distributed_verdict_with(
    jspec: &JointSourceSpec,
    opts: &DistOptions,
) -> Result<DistributedReport, DistError> {
    let rho_per_die: Vec<f64> = (0..jspec.num_dice())
        .map(|s| maximal_correlation(&jspec.die_matrix(s)).map(|r| r.rho))
        .collect::<Result<_, _>>()?;
    let (induced, part) = induced_common_spec(jspec);
    let induced_dice: Vec<Vec<f64>> = induced.dice().iter().map(|d| d.probs().to_vec()).collect();
    let mut report = DistributedReport {
        status: DistStatus::Impossible,
        reason: Reason::TrivialCommonPart,
        rho_per_die: rho_per_die.clone(),
        common_part: part.clone(),
        induced_dice,
        induced_verdict: None,
        witsenhausen: None,
        certificate: None,
    };
    if let Some((die, &rho)) = rho_per_die
        .iter()
        .enumerate()
        .find(|(_, &r)| r < 1.0 - opts.tol)
    {
        report.reason = Reason::IidDie { die, rho };
        report.witsenhausen = witsenhausen_certificate(&jspec.die_matrix(die)).ok();
        return Ok(report);
    }
    if !part.is_nontrivial() {
        return Ok(report);
    }
    let v = extractor::verdict_with(
        &induced,
        extractor::VerdictOptions {
            tol: opts.tol,
            ..Default::default()
        },
    );
    let status = v.status;
    report.induced_verdict = Some(v);
    match status {
        Status::Extractable => {
            report.status = DistStatus::CommonExtractable;
            report.reason = Reason::CommonPartExtractable;
        }
        Status::Impossible => match build_f_certificate(jspec, opts.tau, &opts.spread) {
            Ok(bundle) => {
                report.reason = Reason::CommonPartImpossible;
                report.certificate = Some(bundle);
            }
            Err(e) => {
                report.status = DistStatus::Gap;
                report.reason = Reason::CertificateUnavailable { error: e.to_string() };
            }
        },
        Status::Gap => {
            report.status = DistStatus::Gap;
            report.reason = Reason::CommonPartGap;
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Derandomization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerandomizeOutcome {
    /// `K'_1(a) = argmax_k Pr[K_1 = k | a]`, ties to 0.
    pub alice: Vec<u8>,
    pub bob: Vec<u8>,
    /// `max(Pr[K_1 ≠ K_2], |Pr[K_1 = 0] − ½|, |Pr[K_2 = 0] − ½|)` of the inputs.
    pub premise_epsilon: f64,
    pub disagreement: f64,
    pub bias_alice: f64,
    pub bias_bob: f64,
    pub rounded_disagreement: f64,
    pub rounded_bias_alice: f64,
    pub rounded_bias_bob: f64,
}

impl DerandomizeOutcome {
    /// `Pr[K'_1 ≠ K'_2] ≤ 3ε` and `|Pr[K'_i = 0] − ½| ≤ 2ε`.
    pub fn bounds_hold(&self) -> bool {
        let e = self.premise_epsilon;
        let slack = 1e-12;
        self.rounded_disagreement <= 3.0 * e + slack
            && self.rounded_bias_alice <= 2.0 * e + slack
            && self.rounded_bias_bob <= 2.0 * e + slack
    }
}

/// Rounds randomized protocols to deterministic ones and measures the degradation.
///
/// `joint[a][b]` is the distribution of the parties' whole observations;
/// `alice_zero[a] = Pr[K_1 = 0 | a]`, `bob_zero[b] = Pr[K_2 = 0 | b]`, private coins independent.
pub fn derandomize(
    joint: &[Vec<f64>],
    alice_zero: &[f64],
    bob_zero: &[f64],
) -> Result<DerandomizeOutcome, DistError> {
    let (rows, cols) = shape_of(joint)?;
    if alice_zero.len() != rows {
        return Err(DistError::Conditionals {
            expected: rows,
            found: alice_zero.len(),
        });
    }
    if bob_zero.len() != cols {
        return Err(DistError::Conditionals {
            expected: cols,
            found: bob_zero.len(),
        });
    }
    let round = |p: &f64| u8::from(*p < 0.5);
    let alice: Vec<u8> = alice_zero.iter().map(round).collect();
    let bob: Vec<u8> = bob_zero.iter().map(round).collect();
    let stats = |f: &dyn Fn(usize) -> f64, g: &dyn Fn(usize) -> f64| {
        let (mut dis, mut z1, mut z2) = (0.0, 0.0, 0.0);
        for (a, row) in joint.iter().enumerate() {
            for (b, &p) in row.iter().enumerate() {
                let (x, y) = (f(a), g(b));
                dis += p * (x * (1.0 - y) + y * (1.0 - x));
                z1 += p * x;
                z2 += p * y;
            }
        }
        (dis, (z1 - 0.5_f64).abs(), (z2 - 0.5_f64).abs())
    };
    let (d0, b1, b2) = stats(&|a| alice_zero[a], &|b| bob_zero[b]);
    let (d1, r1, r2) = stats(
        &|a| f64::from(1 - alice[a]),
        &|b| f64::from(1 - bob[b]),
    );
    Ok(DerandomizeOutcome {
        alice,
        bob,
        premise_epsilon: d0.max(b1).max(b2),
        disagreement: d0,
        bias_alice: b1,
        bias_bob: b2,
        rounded_disagreement: d1,
        rounded_bias_alice: r1,
        rounded_bias_bob: r2,
    })
}

// ---------------------------------------------------------------------------
// Common extraction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommonExtraction {
    pub alice: Vec<BitTrace>,
    pub bob: Vec<BitTrace>,
    pub agreement: f64,
}

/// Both parties map their symbols to components and run the same martingale extractor.
pub fn common_extract_with<R: RngCore>(
    jspec: &JointSourceSpec,
    report: &DistributedReport,
    config: &MartingaleConfig,
    adversary: &mut dyn Adversary,
    k: usize,
    rng: R,
) -> Result<CommonExtraction, DistError> {
    let psi = common_psi(report)?;
    let flat = jspec.as_source_spec();
    let b = jspec.b_size();
    let part = &report.common_part;
    let pairs: Vec<usize> = SourceStream::new(&flat, adversary, rng)
        .take(k * config.block_length())
        .collect();
    let alice_stream: Vec<usize> = pairs.iter().map(|&p| part.component_of_a[p / b]).collect();
    let bob_stream: Vec<usize> = pairs.iter().map(|&p| part.component_of_b[p % b]).collect();
    let alice = extractor::extract_bits(psi, config, &alice_stream, k)?;
    let bob = extractor::extract_bits(psi, config, &bob_stream, k)?;
    let agree = alice.iter().zip(&bob).filter(|(x, y)| x.bit == y.bit).count();
    Ok(CommonExtraction {
        agreement: if k == 0 { 1.0 } else { agree as f64 / k as f64 },
        alice,
        bob,
    })
}

fn common_psi(report: &DistributedReport) -> Result<&PsiWitness, DistError> {
    if report.status != DistStatus::CommonExtractable {
        return Err(DistError::NotExtractable(report.status));
    }
    Ok(report
        .induced_verdict
        .as_ref()
        .and_then(|v| v.witness.as_ref())
        .expect("an extractable verdict carries a witness"))
}

/// Adaptive-sign adversary for the pair source, steering the common-part walk.
pub fn common_adaptive_adversary(
    jspec: &JointSourceSpec,
    report: &DistributedReport,
    block_length: usize,
) -> Result<AdaptiveSign, DistError> {
    let psi = common_psi(report)?;
    let b = jspec.b_size();
    let flat_psi: Vec<f64> = (0..jspec.a_size() * b)
        .map(|p| {
            let c = report.common_part.component_of_a[p / b];
            psi.values().get(c).copied().unwrap_or(0.0)
        })
        .collect();
    Ok(AdaptiveSign::new(&jspec.as_source_spec(), &flat_psi, Some(block_length)))
}

pub fn common_extract(
    jspec: &JointSourceSpec,
    config: &MartingaleConfig,
    adversary: &mut dyn Adversary,
    k: usize,
    seed: u64,
) -> Result<CommonExtraction, DistError> {
    let report = distributed_verdict(jspec)?;
    common_extract_with(jspec, &report, config, adversary, k, crate::model::trial_rng(seed, 0))
}
