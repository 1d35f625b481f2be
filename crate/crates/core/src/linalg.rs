//! Elimination, nullspaces, weighted orthonormal bases and a phase-1 simplex.
//!
//! Elimination and the simplex are generic over [`Field`]: with `BigRational`
//! every rank and feasibility decision is exact, with `f64` a pivot is accepted
//! only if it exceeds [`PIVOT_REL_TOL`](crate::scalar::PIVOT_REL_TOL) times the
//! largest entry of the input.

use crate::scalar::Field;

/// Reduced row echelon form in place; returns the pivot columns in order.
///
/// Float pivots use partial pivoting (largest magnitude in the column).
pub fn rref<T: Field>(m: &mut [Vec<T>]) -> Vec<usize> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let scale = m
        .iter()
        .flatten()
        .map(|x| x.abs())
        .fold(T::zero(), T::max_of);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let best = (r..rows)
            .filter(|&i| !m[i][c].is_negligible(&scale))
            .max_by(|&i, &j| {
                m[i][c]
                    .abs()
                    .partial_cmp(&m[j][c].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    // prefer the earliest row on ties so exact mode is stable
                    .then(j.cmp(&i))
            });
        let Some(p) = best else {
            for row in m.iter_mut().skip(r) {
                row[c] = T::zero();
            }
            continue;
        };
        m.swap(r, p);
        let inv = T::one() / m[r][c].clone();
        for x in m[r].iter_mut() {
            *x = x.clone() * inv.clone();
        }
        m[r][c] = T::one();
        for i in 0..rows {
            if i == r || m[i][c].is_zero() {
                continue;
            }
            let factor = m[i][c].clone();
            let pivot_row = m[r].clone();
            for (x, p) in m[i].iter_mut().zip(&pivot_row) {
                *x = x.clone() - factor.clone() * p.clone();
            }
            m[i][c] = T::zero();
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank<T: Field>(rows: &[Vec<T>]) -> usize {
    let mut m = rows.to_vec();
    rref(&mut m).len()
}

/// Basis of `{x : rows · x = 0}`, one vector per free column.
pub fn nullspace<T: Field>(rows: &[Vec<T>], ncols: usize) -> Vec<Vec<T>> {
    let mut m = rows.to_vec();
    let pivots = rref(&mut m);
    let mut is_pivot = vec![None; ncols];
    for (r, &c) in pivots.iter().enumerate() {
        is_pivot[c] = Some(r);
    }
    (0..ncols)
        .filter(|&free| is_pivot[free].is_none())
        .map(|free| {
            let mut v = vec![T::zero(); ncols];
            v[free] = T::one();
            for (r, &c) in pivots.iter().enumerate() {
                v[c] = -m[r][free].clone();
            }
            v
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_i w_i a_i b_i`.
pub fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| w * x * y).sum()
}

/// Modified Gram-Schmidt under the inner product `Σ w_i a_i b_i`.
///
/// Vectors whose residual norm falls below `tol` times their original norm are dropped.
pub fn orthonormal_basis(vectors: &[Vec<f64>], weights: &[f64], tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let norm0 = weighted_dot(v, v, weights).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut u = v.clone();
        // two passes keep the result orthogonal to working precision
        for _ in 0..2 {
            for b in &basis {
                let c = weighted_dot(&u, b, weights);
                for (x, y) in u.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let norm = weighted_dot(&u, &u, weights).sqrt();
        if norm > tol * norm0 {
            u.iter_mut().for_each(|x| *x /= norm);
            basis.push(u);
        }
    }
    basis
}

/// A point `x ≥ 0` with `A x = b`, or `None` if the system is infeasible.
///
/// Phase-1 simplex with Bland's rule, so it terminates without cycling.
pub fn feasible_point<T: Field>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let width = n + m + 1;
    let scale = a
        .iter()
        .flatten()
        .chain(b)
        .map(|x| x.abs())
        .fold(T::one(), T::max_of);
    let mut tab: Vec<Vec<T>> = Vec::with_capacity(m + 1);
    for i in 0..m {
        let flip = b[i] < T::zero();
        let sign = |x: &T| if flip { -x.clone() } else { x.clone() };
        let mut row: Vec<T> = a[i].iter().map(sign).collect();
        row.extend((0..m).map(|j| if j == i { T::one() } else { T::zero() }));
        row.push(sign(&b[i]));
        tab.push(row);
    }
    // objective row: minimize the sum of artificials, expressed in non-basic terms
    let mut obj = vec![T::zero(); width];
    for row in &tab {
        for (o, x) in obj.iter_mut().zip(row) {
            *o = o.clone() - x.clone();
        }
    }
    obj[n..n + m].iter_mut().for_each(|x| *x = T::zero());
    let mut basis: Vec<usize> = (n..n + m).collect();

    loop {
        let entering = (0..n + m).find(|&j| obj[j] < T::zero() && !obj[j].is_negligible(&scale));
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, T)> = None;
        for i in 0..m {
            let coef = &tab[i][e];
            if *coef <= T::zero() || coef.is_negligible(&scale) {
                continue;
            }
            let ratio = tab[i][width - 1].clone() / coef.clone();
            let better = match &leave {
                None => true,
                Some((l, best)) => ratio < *best || (ratio == *best && basis[i] < basis[*l]),
            };
            if better {
                leave = Some((i, ratio));
            }
        }
        // a phase-1 objective is bounded below, so some row must leave
        let (r, _) = leave?;
        pivot(&mut tab, &mut obj, r, e);
        basis[r] = e;
    }
    let residual = -obj[width - 1].clone();
    if !residual.is_negligible(&scale) {
        return None;
    }
    let mut x = vec![T::zero(); n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = T::max_of(tab[i][width - 1].clone(), T::zero());
        }
    }
    Some(x)
}

fn pivot<T: Field>(tab: &mut [Vec<T>], obj: &mut [T], r: usize, e: usize) {
    let inv = T::one() / tab[r][e].clone();
    for x in tab[r].iter_mut() {
        *x = x.clone() * inv.clone();
    }
    let prow = tab[r].clone();
    let eliminate = |row: &mut [T]| {
        let f = row[e].clone();
        if f.is_zero() {
            return;
        }
        for (x, p) in row.iter_mut().zip(&prow) {
            *x = x.clone() - f.clone() * p.clone();
        }
    };
    for (i, row) in tab.iter_mut().enumerate() {
        if i != r {
            eliminate(row);
        }
    }
    eliminate(obj);
}

/// Whether `q = Σ λ_s p_s` for some weights `λ_s ≥ slack` summing to 1.
pub fn in_hull<T: Field>(points: &[Vec<T>], q: &[T], slack: T) -> Option<Vec<T>> {
    let k = points.len();
    let d = q.len();
    // λ = slack + μ with μ ≥ 0
    let mut a: Vec<Vec<T>> = (0..d)
        .map(|c| points.iter().map(|p| p[c].clone()).collect())
        .collect();
    let mut b: Vec<T> = (0..d)
        .map(|c| {
            let shift = points
                .iter()
                .fold(T::zero(), |acc, p| acc + p[c].clone());
            q[c].clone() - slack.clone() * shift
        })
        .collect();
    a.push(vec![T::one(); k]);
    b.push(T::one() - slack.clone() * T::from_ratio(k as i64, 1));
    if b.last().is_some_and(|x| *x < T::zero()) {
        return None;
    }
    let mu = feasible_point(&a, &b)?;
    Some(mu.into_iter().map(|m| m + slack.clone()).collect())
}
