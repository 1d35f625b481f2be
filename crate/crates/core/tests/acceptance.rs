//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Each criterion is checked against an oracle written here, independent of the
//! library path it exercises. A criterion listed in `KNOWN_RED` is expected to
//! fail on its own terms; the run fails if the red set differs from that list.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

use svx::adversary::{self, alpha_beta_exact};
use svx::binary_sv::{self, CurvePoint};
use svx::distributed::{self, DistStatus};
use svx::extractor::{self, AdaptiveSign, MartingaleConfig, Status};
use svx::model::{trial_rng, ExtractorTable, JointSourceSpec, SourceSpec, SourceStream};
use svx::montecarlo::{binomial_sigma, run_trials, summarize};
use svx::io;
use svx::spread::SpreadOptions;
use svx::suites::{dsbs, random_channel, random_joint, sv_block_spec};

mod common;
use common::*;

/// Red by analysis: the base-δ addition inequality is false for δ > 1/2.
const KNOWN_RED: &[&str] = &["basedelta-addition-sweep"];

const SEED: u64 = 20_26;

type Outcome = (bool, String);

fn rho(joint: &[Vec<f64>]) -> f64 {
    distributed::maximal_correlation(joint).unwrap().rho
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

fn binary_third_impossible() -> Outcome {
    let path = data("binary_third.json");
    let start = Instant::now();
    let (code, out) = run_cli(&["analyze", path.to_str().unwrap()]);
    let elapsed = start.elapsed();
    let report: Value = serde_json::from_str(&out).unwrap();
    let r = &report["result"];
    let delta = r["certificate"]["delta"]["value"].as_f64().unwrap_or(f64::NAN);
    let method = r["certificate"]["delta"]["method"].as_str().unwrap_or("");
    let ok = code == 1
        && r["status"] == "IMPOSSIBLE"
        && (delta - 2.0 / 3.0).abs() <= 1e-12
        && method == "closed-form"
        && elapsed < Duration::from_secs(1);
    (
        ok,
        format!("exit {code}, status {}, delta {delta} ({method}), {:.3}s", r["status"], secs(elapsed)),
    )
}

fn random_verdicts() -> Outcome {
    let start = Instant::now();
    let mut rng = trial_rng(SEED, 1);
    let mut bad_extractable = 0;
    let mut bad_impossible = 0;
    for _ in 0..200 {
        let c = rng.gen_range(2..=6);
        let s = rng.gen_range(1..c);
        let dice: Vec<Vec<f64>> = (0..s).map(|_| random_die(&mut rng, c)).collect();
        let spec = SourceSpec::new(c, dice.clone()).unwrap();
        let v = extractor::verdict(&spec);
        let valid = v.witness.as_ref().is_some_and(|w| {
            dice.iter().all(|d| {
                let (mean, var) = moments(d, w.values());
                mean.abs() <= 1e-9 && var >= 1e-9
            })
        });
        if v.status != Status::Extractable || !valid {
            bad_extractable += 1;
        }
    }
    let mut spanning = 0;
    while spanning < 200 {
        let c = rng.gen_range(2..=6);
        let s = rng.gen_range(c..=c + 2);
        let dice: Vec<Vec<f64>> = (0..s).map(|_| random_die(&mut rng, c)).collect();
        if difference_rank(&dice) != c - 1 {
            continue;
        }
        spanning += 1;
        let spec = SourceSpec::new(c, dice).unwrap();
        if extractor::verdict(&spec).status != Status::Impossible {
            bad_impossible += 1;
        }
    }
    let elapsed = start.elapsed();
    (
        bad_extractable == 0 && bad_impossible == 0 && elapsed < Duration::from_secs(30),
        format!(
            "{bad_extractable}/200 extractable specs wrong, {bad_impossible}/200 spanning specs wrong, {:.2}s",
            secs(elapsed)
        ),
    )
}

fn martingale_bias() -> Outcome {
    let spec = load_source("three_symbol.json");
    let psi = extractor::verdict(&spec).witness.expect("extractable");
    let (m_thr, n, trials) = (50.0, 1_000_000usize, 10_000u64);
    let config = MartingaleConfig::new(m_thr, n).unwrap();
    let m = psi.values().iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let v = spec
        .dice()
        .iter()
        .map(|d| moments(d.probs(), psi.values()).1)
        .fold(f64::INFINITY, f64::min);
    let tail = (m_thr + m) * (m_thr + m) / (v * n as f64);
    let (lo, hi) = (m_thr / (2.0 * m_thr + m) - tail, (m_thr + m) / (2.0 * m_thr + m) + tail);
    let start = Instant::now();
    let traces = run_trials(SEED, trials, |_, rng| {
        let mut adv = AdaptiveSign::new(&spec, psi.values(), Some(n));
        let mut stream = SourceStream::new(&spec, &mut adv, rng);
        extractor::extract_bit(&psi, &config, &mut stream).unwrap()
    });
    let elapsed = start.elapsed();
    let ones = traces.iter().filter(|t| t.bit == 1).count() as f64 / trials as f64;
    let unstopped = traces
        .iter()
        .filter(|t| t.tau == n && t.y_tau.abs() < m_thr - 1e-9)
        .count() as f64
        / trials as f64;
    let y = summarize(&traces.iter().map(|t| t.y_tau).collect::<Vec<_>>());
    let s_bit = binomial_sigma(ones, trials);
    let s_tail = binomial_sigma(unstopped, trials);
    let ok = ones >= lo - 3.0 * s_bit
        && ones <= hi + 3.0 * s_bit
        && unstopped <= tail + 3.0 * s_tail
        && y.mean.abs() <= 3.0 * y.sigma_mean()
        && elapsed < Duration::from_secs(300);
    (
        ok,
        format!(
            "Pr[bit=1]={ones:.4} in [{lo:.4}, {hi:.4}] ± {:.4}, Pr[tau=n]={unstopped} <= {tail:.4}, E[Y_tau]={:.3} (3σ {:.3}), {:.1}s",
            3.0 * s_bit,
            y.mean,
            3.0 * y.sigma_mean(),
            secs(elapsed)
        ),
    )
}

fn dp_exactness() -> Outcome {
    let deltas = [
        BigRational::new(1.into(), 4.into()),
        BigRational::new(1.into(), 3.into()),
        BigRational::new(9.into(), 20.into()),
    ];
    let mut tables = 0u64;
    let mut failures = Vec::new();
    for delta in &deltas {
        let q = BigRational::one() - delta;
        let spec = SourceSpec::from_exact(2, vec![vec![delta.clone(), q.clone()], vec![q, delta.clone()]]).unwrap();
        for n in 0..=3usize {
            let leaves = 1usize << n;
            let strategies = strategy_leaf_probs(delta, n);
            for mask in 0..1u64 << leaves {
                tables += 1;
                let t = ExtractorTable::from_subset_mask(2, n, mask).unwrap();
                let ab = alpha_beta_exact(&spec, &t).unwrap();
                let zero_mass = |probs: &Vec<BigRational>| -> BigRational {
                    (0..leaves)
                        .filter(|&i| t.labels()[i] == 0)
                        .fold(BigRational::zero(), |acc, i| acc + &probs[i])
                };
                let masses: Vec<BigRational> = strategies.iter().map(zero_mass).collect();
                let min = masses.iter().min().unwrap();
                let max = masses.iter().max().unwrap();
                let x = t.zero_count();
                let bound = if x == leaves {
                    BigRational::one()
                } else {
                    base_delta_oracle(&binary_sv::bits_of(x as u64, n), delta)
                };
                let is_prefix = t.labels().iter().take(x).all(|&b| b == 0);
                let comp = alpha_beta_exact(&spec, &t.complement()).unwrap();
                let ok = ab.alpha == *min
                    && ab.beta == *max
                    && ab.beta >= bound
                    && (!is_prefix || ab.beta == bound)
                    && &ab.alpha + &comp.beta == BigRational::one();
                if !ok && failures.len() < 3 {
                    failures.push(format!("delta={delta} n={n} labels={}", t.labels_string()));
                }
            }
        }
    }
    (
        failures.is_empty(),
        format!("{tables} tables against every deterministic strategy; failures: {failures:?}"),
    )
}

fn curve_and_cloud() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let (code, out) = run_cli(&[
        "--out",
        csv.to_str().unwrap(),
        "curve",
        "--delta",
        &(1.0f64 / 3.0).to_string(),
        "--n-max",
        "12",
    ]);
    let report: Value = serde_json::from_str(&out).unwrap();
    let gap = report["result"]["gap"].as_f64().unwrap_or(f64::NAN);
    let curve = io::read_curve_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    let has_single = curve
        .iter()
        .any(|p| (p.alpha - 1.0 / 3.0).abs() <= 1e-12 && (p.beta - 2.0 / 3.0).abs() <= 1e-12);
    let spec = load_source("binary_third.json");
    let phi = adversary::phi_set_exact(&spec, 3).unwrap();
    let cloud: Vec<CurvePoint> = phi.points.iter().map(|p| CurvePoint::from(&p.to_f64())).collect();
    let above = cloud
        .iter()
        .filter(|p| curve.iter().any(|c| c.alpha <= p.alpha + 1e-12 && c.beta <= p.beta + 1e-12))
        .count();
    let distance = adversary::center_distance(&phi.points.iter().map(|p| p.to_f64()).collect::<Vec<_>>());
    let ok = code == 0
        && has_single
        && above == cloud.len()
        && binary_sv::all_above_curve(&cloud, &curve, 1e-12)
        && gap > 0.0
        && distance >= gap - 1e-12;
    (
        ok,
        format!(
            "{} curve points, (1/3, 2/3) present: {has_single}, {above}/{} cloud pairs dominate a curve point, cloud distance {distance:.6} vs gap {gap:.6}",
            curve.len(),
            cloud.len()
        ),
    )
}

fn basedelta_addition_sweep() -> Outcome {
    let start = Instant::now();
    let rep = binary_sv::verify_addition_inequality(8).unwrap();
    let elapsed = start.elapsed();
    let first = rep
        .counterexamples
        .first()
        .map(|c| format!(", first at delta={} n={} x={} y={} z={}", c.delta, c.n, c.x, c.y, c.z))
        .unwrap_or_default();
    (
        rep.holds && elapsed < Duration::from_secs(120),
        format!(
            "{} triples, {} counterexamples{first}, {:.1}s",
            rep.triples_checked,
            rep.counterexample_count,
            secs(elapsed)
        ),
    )
}

fn maximal_correlation() -> Outcome {
    let mut rng = trial_rng(SEED, 7);
    let mut notes = Vec::new();
    let mut ok = true;

    let mut worst_product: f64 = 0.0;
    let mut worst_equal: f64 = 0.0;
    for _ in 0..20 {
        let (r, c) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
        let p = random_die(&mut rng, r);
        let q = random_die(&mut rng, c);
        let product: Vec<Vec<f64>> = p.iter().map(|a| q.iter().map(|b| a * b).collect()).collect();
        worst_product = worst_product.max(rho(&product).abs());
        let diag: Vec<Vec<f64>> = (0..r).map(|i| (0..r).map(|j| if i == j { p[i] } else { 0.0 }).collect()).collect();
        worst_equal = worst_equal.max((rho(&diag) - 1.0).abs());
    }
    ok &= worst_product <= 1e-9 && worst_equal <= 1e-9;
    notes.push(format!("product {worst_product:.1e}, A=B {worst_equal:.1e}"));

    let mut worst_dsbs: f64 = 0.0;
    for e in [0.05, 0.1, 0.25] {
        let j = dsbs(e);
        worst_dsbs = worst_dsbs.max((rho(&j) - rho_oracle(&j)).abs());
    }
    ok &= worst_dsbs <= 1e-6;
    notes.push(format!("dsbs vs oracle {worst_dsbs:.1e}"));

    let mut worst_tensor: f64 = 0.0;
    let mut worst_dp = f64::NEG_INFINITY;
    for i in 0..100 {
        let mut r = trial_rng(SEED.wrapping_add(100), i);
        let j = random_joint(&mut r, 3, 3);
        let k = random_joint(&mut r, 3, 3);
        let t = distributed::tensor(&j, &k);
        worst_tensor = worst_tensor.max((rho(&t) - rho(&j).max(rho(&k))).abs());
        let w = random_channel(&mut r, 3, 3);
        let pushed: Vec<Vec<f64>> = (0..3)
            .map(|a2| (0..3).map(|b| (0..3).map(|a| j[a][b] * w[a][a2]).sum()).collect())
            .collect();
        worst_dp = worst_dp.max(rho(&pushed) - rho(&j));
    }
    ok &= worst_tensor <= 1e-9 && worst_dp <= 1e-9;
    notes.push(format!("tensorization {worst_tensor:.1e}, data-processing increase {worst_dp:.1e}"));
    (ok, notes.join("; "))
}

fn common_parts() -> Outcome {
    let start = Instant::now();
    let two = distributed::common_part_of_spec(&load_joint("two_blocks.json"));
    let merged = load_joint("merged_blocks.json");
    let per_die: Vec<usize> = (0..merged.num_dice())
        .map(|s| {
            let m = merged.die_matrix(s);
            distributed::common_part(&[m.as_slice()]).unwrap().num_components
        })
        .collect();
    let union = distributed::common_part_of_spec(&merged);
    let elapsed = start.elapsed();
    let ok = two.num_nonsingleton == 2
        && per_die == [3, 3]
        && union.num_components == 2
        && elapsed < Duration::from_secs(1);
    (
        ok,
        format!(
            "two-block source: {} non-singleton; merged source: per die {per_die:?}, union {}",
            two.num_nonsingleton, union.num_components
        ),
    )
}

fn certificates() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let (zero, one, half) = (
        BigRational::zero(),
        BigRational::one(),
        BigRational::new(1.into(), 2.into()),
    );
    for (name, jspec) in [("sv-block", sv_block_spec()), ("erasure", load_joint("erasure.json"))] {
        match distributed::build_f_certificate(&jspec, distributed::DEFAULT_TAU, &SpreadOptions::default()) {
            Ok(b) => {
                let c = b.certificate;
                let eps = c.epsilon_exact();
                let m = svx::scalar::rational_from_f64_exact(c.m).unwrap();
                let good = c.f_exact(&zero, &zero, &zero) == zero
                    && c.f_exact(&one, &one, &one) == zero
                    && c.f_exact(&one, &zero, &zero) == &m - &one + &eps
                    && c.f_exact(&zero, &one, &zero) == &m - &one + &eps
                    && c.f_exact(&one, &zero, &zero) >= zero
                    && c.f_exact(&half, &half, &half) == -(&eps * &half);
                ok &= good;
                notes.push(format!("{name} identities {good} (epsilon {:.3e}, M {:.1})", c.epsilon, c.m));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{name}: {e}"));
            }
        }
    }

    let j = dsbs(0.1);
    let w = distributed::witsenhausen_certificate(&j).unwrap();
    let center_err = (w.f(0.5, 0.5, 0.5) + (1.0 - w.rho) / 2.0).abs();
    ok &= center_err <= 1e-15 && w.center == -(1.0 - w.rho) / 2.0;
    notes.push(format!("witsenhausen center error {center_err:.1e}"));

    let js = JointSourceSpec::single(j).unwrap();
    let cloud = distributed::distributed_triples(&js, 2).unwrap();
    let min_f = cloud
        .points
        .iter()
        .map(|p| w.f(p.alpha, p.beta, p.gamma))
        .fold(f64::INFINITY, f64::min);
    ok &= min_f >= -1e-12;
    notes.push(format!("dsbs(0.1) n=2: {} triples, min f {min_f:.2e}", cloud.points.len()));

    let wf = move |x: f64, y: f64, z: f64| w.f(x, y, z);
    let rec = distributed::recursion_check(&js, 2, &wf).unwrap();
    ok &= rec.holds(1e-9);
    notes.push(format!("witsenhausen recursion {} edges, slack {:.1e}", rec.edges_checked, rec.worst_slack));

    let block = sv_block_spec();
    let cert = distributed::build_f_certificate(&block, distributed::DEFAULT_TAU, &SpreadOptions::default())
        .unwrap()
        .certificate;
    let ff = move |x: f64, y: f64, z: f64| cert.f(x, y, z);
    for n in 1..=2 {
        let rec = distributed::recursion_check(&block, n, &ff).unwrap();
        ok &= rec.holds(1e-9);
        notes.push(format!(
            "f recursion n={n}: {} edges, slack {:.1e}",
            rec.edges_checked, rec.worst_slack
        ));
    }
    (ok, notes.join("; "))
}

fn erasure_and_composite() -> Outcome {
    let erasure = distributed::distributed_verdict(&load_joint("erasure.json")).unwrap();
    let composite = load_joint("composite_extractable.json");
    let report = distributed::distributed_verdict(&composite).unwrap();
    let mut ok = erasure.status == DistStatus::Impossible && report.status == DistStatus::CommonExtractable;
    let mut detail = format!("erasure {:?}, composite {:?}", erasure.status, report.status);
    if report.status == DistStatus::CommonExtractable {
        let (n, k) = (1000, 1000);
        let config = MartingaleConfig::with_default_threshold(n).unwrap();
        let mut adv = distributed::common_adaptive_adversary(&composite, &report, n).unwrap();
        let run = distributed::common_extract_with(&composite, &report, &config, &mut adv, k, trial_rng(SEED, 10))
            .unwrap();
        let psi = report.induced_verdict.as_ref().unwrap().witness.as_ref().unwrap();
        let bracket = extractor::bias_bracket(&config, psi).unwrap();
        let identical = run.alice.iter().zip(&run.bob).all(|(a, b)| a.bit == b.bit);
        let freq = run.alice.iter().filter(|t| t.bit == 1).count() as f64 / k as f64;
        ok &= run.agreement == 1.0 && identical && bracket.contains(freq);
        detail += &format!(
            ", agreement {}, frequency {freq:.3} in [{:.3}, {:.3}]",
            run.agreement, bracket.lo, bracket.hi
        );
    }
    (ok, detail)
}

fn derandomization() -> Outcome {
    let mut rng = trial_rng(SEED, 11);
    let mut failures = 0;
    let mut tight = 0;
    for _ in 0..100 {
        let size = 2 * rng.gen_range(1..=4);
        let eta: f64 = rng.gen_range(0.0..0.3);
        let noise: f64 = rng.gen_range(0.0..0.4);
        // balanced labels keep the premise ε small enough to make the bounds bite
        let mut labels: Vec<f64> = (0..size).map(|i| f64::from(u8::from(i % 2 == 0))).collect();
        labels.shuffle(&mut rng);
        let mut joint: Vec<Vec<f64>> = (0..size)
            .map(|a| {
                (0..size)
                    .map(|b| (if a == b { 1.0 - eta } else { 0.0 }) + eta * rng.gen_range(0.0..1.0))
                    .collect()
            })
            .collect();
        let total: f64 = joint.iter().flatten().sum();
        joint.iter_mut().flatten().for_each(|p| *p /= total);
        let mut party = |l: &[f64]| -> Vec<f64> {
            l.iter()
                .map(|&x| (x + noise * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0))
                .collect()
        };
        let alice = party(&labels);
        let bob = party(&labels);
        let d = distributed::derandomize(&joint, &alice, &bob).unwrap();
        // recomputed here: ties round to 0
        let round = |p: f64| f64::from(u8::from(p >= 0.5));
        let (mut dis, mut z1, mut z2) = (0.0, 0.0, 0.0);
        for a in 0..size {
            for b in 0..size {
                let (x, y) = (round(alice[a]), round(bob[b]));
                dis += joint[a][b] * (x * (1.0 - y) + y * (1.0 - x));
                z1 += joint[a][b] * x;
                z2 += joint[a][b] * y;
            }
        }
        let e = d.premise_epsilon;
        let consistent = (dis - d.rounded_disagreement).abs() <= 1e-12
            && ((z1 - 0.5).abs() - d.rounded_bias_alice).abs() <= 1e-12
            && ((z2 - 0.5).abs() - d.rounded_bias_bob).abs() <= 1e-12;
        let holds = dis <= 3.0 * e + 1e-12 && (z1 - 0.5).abs() <= 2.0 * e + 1e-12 && (z2 - 0.5).abs() <= 2.0 * e + 1e-12;
        if !(consistent && holds && d.bounds_hold()) {
            failures += 1;
        }
        if e < 1.0 / 6.0 {
            tight += 1;
        }
    }
    (
        failures == 0,
        format!("{failures}/100 strategies violate the bounds; {tight} had premise epsilon < 1/6"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("binary-third-impossible", binary_third_impossible),
        ("random-verdicts", random_verdicts),
        ("martingale-bias", martingale_bias),
        ("dp-exactness", dp_exactness),
        ("curve-and-cloud", curve_and_cloud),
        ("basedelta-addition-sweep", basedelta_addition_sweep),
        ("maximal-correlation", maximal_correlation),
        ("common-parts", common_parts),
        ("certificates", certificates),
        ("erasure-and-composite", erasure_and_composite),
        ("derandomization", derandomization),
    ];
    let mut red = Vec::new();
    for (name, check) in criteria {
        let (pass, detail) = check();
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            red.push(name);
        }
    }
    let unexpected: Vec<_> = red.iter().filter(|n| !KNOWN_RED.contains(n)).collect();
    let recovered: Vec<_> = KNOWN_RED.iter().filter(|n| !red.contains(n)).collect();
    println!(
        "acceptance: {} of {} pass; known red {:?}",
        criteria.len() - red.len(),
        criteria.len(),
        KNOWN_RED
    );
    if unexpected.is_empty() && recovered.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures {unexpected:?}, unexpectedly passing {recovered:?}");
        ExitCode::FAILURE
    }
}
