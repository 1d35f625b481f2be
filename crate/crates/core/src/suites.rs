//! Named batches of exhaustive and randomized checks behind `svx verify`.

use std::time::{Duration, Instant};

use num_rational::BigRational;
use rand::Rng;

use crate::adversary::{self, AlphaBeta};
use crate::binary_sv::{self, CurvePoint};
use crate::distributed::{self, WitsenhausenCert};
use crate::model::{trial_rng, JointSourceSpec, SourceSpec};
use crate::report::Check;
use crate::scalar::{rational_to_string, Field};
use crate::spread::SpreadOptions;

pub const SUITES: [&str; 4] = ["appendix-c", "witsenhausen", "appendix-d", "all"];

#[derive(Debug, Clone)]
pub struct TimedCheck {
    pub check: Check,
    pub elapsed: Duration,
}

fn timed(f: impl FnOnce() -> Check) -> TimedCheck {
    let start = Instant::now();
    let check = f();
    TimedCheck {
        check,
        elapsed: start.elapsed(),
    }
}

/// `None` for an unknown suite name.
pub fn run_suite(name: &str, seed: u64) -> Option<Vec<TimedCheck>> {
    match name {
        "appendix-c" => Some(binary_sv_checks()),
        "witsenhausen" => Some(witsenhausen(seed)),
        "appendix-d" => Some(certificate_checks()),
        "all" => Some(
            binary_sv_checks()
                .into_iter()
                .chain(witsenhausen(seed))
                .chain(certificate_checks())
                .collect(),
        ),
        _ => None,
    }
}

fn binary_deltas() -> Vec<BigRational> {
    vec![
        BigRational::from_ratio(1, 4),
        BigRational::from_ratio(1, 3),
        BigRational::from_ratio(9, 20),
    ]
}

fn binary_sv_checks() -> Vec<TimedCheck> {
    let mut out = Vec::new();
    for delta in binary_deltas() {
        for n in 1..=binary_sv::MAX_PREFIX_DEPTH {
            let d = delta.clone();
            out.push(timed(move || {
                let name = format!("prefix-optimality delta={} n={n}", rational_to_string(&d));
                match binary_sv::verify_prefix_optimality(&d, n) {
                    Ok(r) => Check::new(
                        name,
                        r.holds,
                        format!(
                            "{} subsets, {} below bound, {} prefix mismatches",
                            r.subsets_checked,
                            r.below_bound.len(),
                            r.prefix_mismatch.len()
                        ),
                    ),
                    Err(e) => Check::new(name, false, e.to_string()),
                }
            }));
        }
    }
    out.push(timed(|| {
        let name = "basedelta-addition n<=8 on 19 deltas";
        match binary_sv::verify_addition_inequality(binary_sv::MAX_ADDITION_DEPTH) {
            Ok(r) => {
                let first = r
                    .counterexamples
                    .first()
                    .map(|c| {
                        format!(
                            "; first: {:?} delta={} n={} x={} y={} z={} lhs={:.6} rhs={:.6}",
                            c.form, c.delta, c.n, c.x, c.y, c.z, c.lhs, c.rhs
                        )
                    })
                    .unwrap_or_default();
                Check::new(
                    name,
                    r.holds,
                    format!(
                        "{} triples, {} counterexamples{first}",
                        r.triples_checked, r.counterexample_count
                    ),
                )
            }
            Err(e) => Check::new(name, false, e.to_string()),
        }
    }));
    out.push(timed(|| {
        let name = "phi3-above-curve delta=1/3";
        let run = || -> Result<(bool, f64, usize), String> {
            let spec = SourceSpec::from_exact(2, binary_sv_dice(&BigRational::from_ratio(1, 3)))
                .map_err(|e| e.to_string())?;
            let phi = adversary::phi_set(&spec, 3).map_err(|e| e.to_string())?;
            let curve = binary_sv::f_delta_curve(1.0 / 3.0, 12).map_err(|e| e.to_string())?;
            let cloud: Vec<CurvePoint> = phi.points.iter().map(CurvePoint::from).collect();
            let ok = binary_sv::all_above_curve(&cloud, &curve, 1e-12);
            Ok((ok, adversary::center_distance(&phi.points), cloud.len()))
        };
        match run() {
            Ok((ok, gap, count)) => Check::new(
                name,
                ok && gap > 0.0,
                format!("{count} points, distance to center {gap:.6}"),
            ),
            Err(e) => Check::new(name, false, e),
        }
    }));
    out
}

fn binary_sv_dice(delta: &BigRational) -> Vec<Vec<BigRational>> {
    let q = BigRational::from_ratio(1, 1) - delta.clone();
    vec![vec![delta.clone(), q.clone()], vec![q, delta.clone()]]
}

/// Uniform entries normalized to a joint distribution.
pub fn random_joint(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen::<f64>() + 1e-3).collect())
        .collect();
    let total: f64 = raw.iter().flatten().sum();
    raw.into_iter()
        .map(|r| r.into_iter().map(|x| x / total).collect())
        .collect()
}

/// A row-stochastic matrix.
pub fn random_channel(rng: &mut impl Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let r: Vec<f64> = (0..cols).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

/// `p'(a', b) = Σ_a p(a, b) W(a, a')`.
pub fn apply_channel_a(joint: &[Vec<f64>], w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let out_rows = w[0].len();
    let cols = joint[0].len();
    (0..out_rows)
        .map(|a2| {
            (0..cols)
                .map(|b| joint.iter().zip(w).map(|(row, wr)| row[b] * wr[a2]).sum())
                .collect()
        })
        .collect()
}

pub fn dsbs(e: f64) -> Vec<Vec<f64>> {
    vec![vec![(1.0 - e) / 2.0, e / 2.0], vec![e / 2.0, (1.0 - e) / 2.0]]
}

fn witsenhausen(seed: u64) -> Vec<TimedCheck> {
    let mut out = Vec::new();
    out.push(timed(|| {
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let mut rng = trial_rng(seed, i);
            let j = random_joint(&mut rng, 3, 3);
            let r1 = distributed::maximal_correlation(&j).map(|r| r.rho).unwrap_or(f64::NAN);
            let r2 = distributed::maximal_correlation(&distributed::tensor(&j, &j))
                .map(|r| r.rho)
                .unwrap_or(f64::NAN);
            worst = worst.max((r1 - r2).abs());
        }
        Check::new("tensorization 100 random 3x3", worst <= 1e-9, format!("max |rho2 - rho| = {worst:.3e}"))
    }));
    out.push(timed(|| {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..100 {
            let mut rng = trial_rng(seed.wrapping_add(1), i);
            let j = random_joint(&mut rng, 3, 3);
            let w = random_channel(&mut rng, 3, 3);
            let before = distributed::maximal_correlation(&j).map(|r| r.rho).unwrap_or(f64::NAN);
            let after = distributed::maximal_correlation(&apply_channel_a(&j, &w))
                .map(|r| r.rho)
                .unwrap_or(f64::NAN);
            worst = worst.max(after - before);
        }
        Check::new("data-processing 100 random channels", worst <= 1e-9, format!("max increase {worst:.3e}"))
    }));
    out.push(timed(|| {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..100 {
            let mut rng = trial_rng(seed.wrapping_add(2), i);
            let j = random_joint(&mut rng, 3, 3);
            let rho = distributed::maximal_correlation(&j).map(|r| r.rho).unwrap_or(f64::NAN);
            let (pa, pb) = distributed::marginals(&j);
            let mut x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut y: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mx: f64 = x.iter().zip(&pa).map(|(v, p)| v * p).sum();
            let my: f64 = y.iter().zip(&pb).map(|(v, p)| v * p).sum();
            x.iter_mut().for_each(|v| *v -= mx);
            y.iter_mut().for_each(|v| *v -= my);
            let m = distributed::joint_moments(&j, &x, &y);
            worst = worst.max(2.0 * m[0] - rho * (m[3] + m[4]));
        }
        Check::new(
            "induction-inequality 100 random pairs",
            worst <= 1e-9,
            format!("max 2E[XY] - rho(E[X^2]+E[Y^2]) = {worst:.3e}"),
        )
    }));
    out.push(timed(|| {
        let name = "triple-cloud dsbs(0.1) n=2";
        let run = || -> Result<(f64, usize, distributed::RecursionReport), String> {
            let j = dsbs(0.1);
            let cert = distributed::witsenhausen_certificate(&j).map_err(|e| e.to_string())?;
            let js = JointSourceSpec::single(j).map_err(|e| e.to_string())?;
            let cloud = distributed::distributed_triples(&js, 2).map_err(|e| e.to_string())?;
            let min_f = cloud
                .points
                .iter()
                .map(|p| cert.f(p.alpha, p.beta, p.gamma))
                .fold(f64::INFINITY, f64::min);
            let f = move |x: f64, y: f64, z: f64| WitsenhausenCert::f(&cert, x, y, z);
            let rec = distributed::recursion_check(&js, 2, &f).map_err(|e| e.to_string())?;
            Ok((min_f, cloud.points.len(), rec))
        };
        match run() {
            Ok((min_f, count, rec)) => Check::new(
                name,
                min_f >= -1e-12 && rec.holds(1e-9),
                format!(
                    "{count} triples, min f = {min_f:.3e}, {} edges, worst step slack {:.3e}",
                    rec.edges_checked, rec.worst_slack
                ),
            ),
            Err(e) => Check::new(name, false, e),
        }
    }));
    out
}

/// Two dice over `3 × 3`: a block on `{0,1} × {0,1}` whose shape depends on the die,
/// and the cell `(2, 2)`; the block masses follow the binary source with `δ = 1/3`.
pub fn sv_block_spec() -> JointSourceSpec {
    let blocks = [[[0.5, 0.1], [0.1, 0.3]], [[0.3, 0.1], [0.1, 0.5]]];
    let dice = [1.0 / 3.0, 2.0 / 3.0]
        .iter()
        .zip(&blocks)
        .map(|(&m, blk)| {
            vec![
                vec![blk[0][0] * m, blk[0][1] * m, 0.0],
                vec![blk[1][0] * m, blk[1][1] * m, 0.0],
                vec![0.0, 0.0, 1.0 - m],
            ]
        })
        .collect();
    JointSourceSpec::new(3, 3, dice).expect("valid by construction")
}

fn certificate_checks() -> Vec<TimedCheck> {
    let mut out = Vec::new();
    let spec = sv_block_spec();
    let bundle = distributed::build_f_certificate(&spec, distributed::DEFAULT_TAU, &SpreadOptions::default());
    out.push(timed(|| match &bundle {
        Ok(b) => {
            let c = &b.certificate;
            let (one, half) = (BigRational::from_ratio(1, 1), BigRational::from_ratio(1, 2));
            let zero = BigRational::from_ratio(0, 1);
            let corners_ok = [
                c.f_exact(&one, &one, &one),
                c.f_exact(&one, &zero, &zero),
                c.f_exact(&zero, &one, &zero),
            ]
            .iter()
            .all(|v| *v >= zero)
                && c.f_exact(&zero, &zero, &zero) == zero;
            let center_ok = c.f_exact(&half, &half, &half) == -(c.epsilon_exact() * &half);
            Check::new(
                "f-certificate identities",
                corners_ok && center_ok && c.hypotheses_hold(),
                format!(
                    "rho_cond={:.6} delta={:.6} delta_prime={:.6} epsilon={:.3e} M={:.3}",
                    c.rho_cond, c.delta, c.delta_prime, c.epsilon, c.m
                ),
            )
        }
        Err(e) => Check::new("f-certificate identities", false, e.to_string()),
    }));
    for n in 1..=2 {
        let bundle = bundle.clone();
        let spec = spec.clone();
        out.push(timed(move || {
            let name = format!("f-recursion sv-block n={n}");
            let run = || -> Result<distributed::RecursionReport, String> {
                let cert = bundle.map_err(|e| e.to_string())?.certificate;
                let f = move |x: f64, y: f64, z: f64| cert.f(x, y, z);
                distributed::recursion_check(&spec, n, &f).map_err(|e| e.to_string())
            };
            match run() {
                Ok(r) => Check::new(
                    name,
                    r.holds(1e-9) && r.min_f >= -1e-9,
                    format!(
                        "{} edges, worst step slack {:.3e}, min f {:.3e}",
                        r.edges_checked, r.worst_slack, r.min_f
                    ),
                ),
                Err(e) => Check::new(name, false, e),
            }
        }));
    }
    out
}

/// Converts exact DP values for display.
pub fn alpha_beta_strings(ab: &AlphaBeta<BigRational>) -> (String, String) {
    (rational_to_string(&ab.alpha), rational_to_string(&ab.beta))
}
