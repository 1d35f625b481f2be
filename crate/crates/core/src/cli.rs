//! The `svx` command line. Exit codes: 0 EXTRACTABLE (or success), 1 IMPOSSIBLE
//! (or a failed check), 2 GAP, 64 usage or malformed input, 65 invalid data,
//! 66 unreadable input, 73 unwritable output.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::RngCore;
use serde_json::{json, Value};

use crate::adversary::{self, AdversaryError, CertOptions, Objective};
use crate::binary_sv::{self, BinarySvError};
use crate::distributed::{self, DistError, DistOptions, DistStatus};
use crate::extractor::{
    self, AdaptiveSign, BitTrace, ExtractError, MartingaleConfig, PsiWitness, Status, VerdictOptions,
};
use crate::io::{self, IoError};
use crate::model::{
    count_within_budget, trial_rng, Adversary, ConstantAdversary, ModelError,
    SourceSpec, SourceStream, UniformAdversary, DEFAULT_BUDGET, DEFAULT_TOL,
};
use crate::montecarlo::summarize;
use crate::report::{Check, Report, RunConfig};
use crate::scalar::{parse_rational, rational_to_string, Field};
use crate::spread::SpreadOptions;
use crate::suites;

#[derive(Debug, Parser)]
#[command(name = "svx", version, about = "Randomness extraction from adversarial dice sources")]
struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo trials for simulated estimates.
    #[arg(long, global = true, default_value_t = 1000)]
    trials: u64,
    /// Block length: symbols consumed per extracted bit.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Martingale threshold; defaults to ⌈n^{1/3}⌉.
    #[arg(long = "M", global = true)]
    m: Option<f64>,
    /// Numerical tolerance for rank and zero-mean tests.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Largest string count an enumeration may visit.
    #[arg(long, global = true, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Treat every probability as an exact rational.
    #[arg(long, global = true)]
    exact: bool,
    /// Write the report (or the curve CSV) here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide extractability and print a witness or a certificate.
    Analyze {
        /// Source spec (JSON).
        spec: PathBuf,
    },
    /// Extract bits with the martingale extractor.
    Extract {
        /// Source spec (JSON).
        spec: PathBuf,
        /// Number of bits.
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Comma-separated ψ values; found automatically when absent.
        #[arg(long)]
        psi: Option<String>,
        /// constant:S | uniform | adaptive-sign | file:PATH (die indices, repeated cyclically).
        #[arg(long, default_value = "adaptive-sign")]
        adversary: String,
        /// Read symbols from this file instead of simulating.
        #[arg(long)]
        stream: Option<PathBuf>,
    },
    /// Exact adversary values α, β and the optimal strategies for one extractor.
    Adversary {
        /// Source spec (JSON).
        spec: PathBuf,
        /// Extractor table (JSON); required unless --left-prefix is given.
        table: Option<PathBuf>,
        /// Use the binary table whose zero-set is the first X strings of length --n.
        #[arg(long, value_name = "X")]
        left_prefix: Option<u64>,
    },
    /// Lower curve of achievable (α, β) for the binary source.
    Curve {
        /// Bias δ in (0, 1/2), as a decimal or a fraction such as 1/3.
        #[arg(long)]
        delta: String,
        /// Deepest prefix length on the curve.
        #[arg(long, default_value_t = 12)]
        n_max: usize,
    },
    /// Common-randomness verdict for a two-party source.
    Distributed {
        /// Joint source spec (JSON).
        joint: PathBuf,
        /// Bits in the extraction demo.
        #[arg(long, default_value_t = 100)]
        k: usize,
    },
    /// Run a named batch of exhaustive checks.
    Verify {
        /// appendix-c | witsenhausen | appendix-d | all
        suite: String,
    },
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::new(e.exit_code(), e.to_string())
    }
}

macro_rules! invalid_data {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::new(65, e.to_string())
            }
        }
    )*};
}
invalid_data!(ModelError, ExtractError, AdversaryError, BinarySvError, DistError);

struct Ctx<'a> {
    cli: &'a Cli,
    argv: Vec<String>,
    config: RunConfig,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn emit(&mut self, report: &Report) -> Result<(), Failure> {
        self.emit_text(&report.to_json())
    }

    fn emit_text(&mut self, text: &str) -> Result<(), Failure> {
        match &self.cli.out {
            Some(path) => write_file(path, text.as_bytes()),
            None => self
                .out
                .write_all(text.as_bytes())
                .map_err(|e| Failure::new(74, e.to_string())),
        }
    }

    fn report(&self, inputs: &[&[u8]], result: Value) -> Report {
        Report::new(self.argv.clone(), inputs, self.config, result)
    }

    fn martingale(&self) -> Result<MartingaleConfig, Failure> {
        let n = self.config.n;
        Ok(match self.config.m {
            Some(m) => MartingaleConfig::new(m, n)?,
            None => MartingaleConfig::with_default_threshold(n)?,
        })
    }

    fn spread(&self) -> SpreadOptions {
        SpreadOptions {
            seed: self.config.seed,
            ..SpreadOptions::default()
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::new(73, format!("cannot write {}: {e}", path.display())))
}

/// Parses `args` (including the program name) and runs one command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    64
                }
            };
        }
    };
    let config = RunConfig {
        seed: cli.seed,
        trials: cli.trials,
        n: cli.n.unwrap_or(1000),
        m: cli.m,
        tolerance: cli.tol,
        budget: cli.budget,
    };
    if config.trials < 1 || config.n < 1 || config.m.is_some_and(|m| !(m >= 1.0)) || !(config.tolerance > 0.0) {
        let _ = writeln!(err, "error: need --trials >= 1, --n >= 1, --M >= 1 and --tol > 0");
        return 64;
    }
    let argv = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let mut ctx = Ctx {
        cli: &cli,
        argv,
        config,
        out,
        err,
    };
    let start = Instant::now();
    let result = match &cli.command {
        Command::Analyze { spec } => analyze(&mut ctx, spec),
        Command::Extract {
            spec,
            k,
            psi,
            adversary,
            stream,
        } => extract(&mut ctx, spec, *k, psi.as_deref(), adversary, stream.as_deref()),
        Command::Adversary {
            spec,
            table,
            left_prefix,
        } => adversary_cmd(&mut ctx, spec, table.as_deref(), *left_prefix),
        Command::Curve { delta, n_max } => curve(&mut ctx, delta, *n_max),
        Command::Distributed { joint, k } => distributed_cmd(&mut ctx, joint, *k),
        Command::Verify { suite } => verify(&mut ctx, suite),
    };
    let _ = writeln!(ctx.err, "elapsed: {:.3}s", start.elapsed().as_secs_f64());
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(ctx.err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_spec(path: &Path, exact: bool) -> Result<(Vec<u8>, SourceSpec), Failure> {
    let bytes = io::read_bytes(path)?;
    let spec = io::parse_source_spec(&bytes, exact)?;
    Ok((bytes, spec))
}

fn psi_json(w: &PsiWitness) -> Value {
    let mut v = json!({
        "values": w.values(),
        "max_abs_mean": w.max_abs_mean(),
        "min_variance": w.min_variance(),
    });
    if let Some(ex) = w.exact_values() {
        v["exact"] = json!(ex.iter().map(rational_to_string).collect::<Vec<_>>());
    }
    v
}

fn analyze(ctx: &mut Ctx, path: &Path) -> Result<i32, Failure> {
    let (bytes, spec) = load_spec(path, ctx.cli.exact)?;
    let tol = ctx.config.tolerance;
    let v = extractor::verdict_with(
        &spec,
        VerdictOptions {
            tol,
            ..Default::default()
        },
    );
    let mut result = json!({
        "status": v.status,
        "alphabet_size": spec.alphabet_size(),
        "num_dice": spec.num_dice(),
        "exact": spec.is_exact(),
        "non_degenerate": spec.is_non_degenerate(),
        "restricted_subset": v.restricted_subset,
        "note": v.note,
    });
    let mut checks = Vec::new();
    if let Some(w) = &v.witness {
        result["psi"] = psi_json(w);
        checks.push(Check::new(
            "psi-valid",
            w.is_valid(tol),
            format!("max |E[psi]| = {:.3e}, min Var = {:.3e}", w.max_abs_mean(), w.min_variance()),
        ));
        let cfg = ctx.martingale()?;
        let bracket = extractor::bias_bracket(&cfg, w)?;
        result["extractor"] = json!({ "n": cfg.block_length(), "M": cfg.threshold(), "bias_bracket": bracket });
    }
    if v.status == Status::Impossible {
        let opts = CertOptions {
            tol,
            spread: ctx.spread(),
        };
        match adversary::build_g_certificate_with(&spec, &opts) {
            Some(cert) => {
                let margin = cert.separation_margin();
                result["delta"] = json!(cert.delta.value);
                result["epsilon"] = json!(cert.epsilon);
                result["certificate"] = json!({
                    "epsilon": cert.epsilon,
                    "m_f": cert.m_f,
                    "delta": cert.delta,
                    "separation_margin": margin,
                });
                checks.push(Check::new(
                    "g-separation",
                    margin > 0.0,
                    format!("every achievable (alpha, beta) stays {margin:.6} from (1/2, 1/2)"),
                ));
            }
            None => {
                result["certificate"] = Value::Null;
            }
        }
    }
    let mut report = ctx.report(&[&bytes], result);
    report.checks = checks;
    ctx.emit(&report)?;
    Ok(v.status.exit_code())
}

/// Plays die indices from a list, cycling.
struct ScheduleAdversary(Vec<usize>);

impl Adversary for ScheduleAdversary {
    fn choose_die(&mut self, history: &[usize], _rng: &mut dyn RngCore) -> usize {
        self.0[history.len() % self.0.len()]
    }
}

fn build_adversary(
    name: &str,
    spec: &SourceSpec,
    psi: &PsiWitness,
    n: usize,
) -> Result<Box<dyn Adversary>, Failure> {
    let dice = spec.num_dice();
    if let Some(s) = name.strip_prefix("constant:") {
        let s: usize = s
            .parse()
            .map_err(|_| Failure::new(64, format!("bad die index in {name:?}")))?;
        if s >= dice {
            return Err(Failure::new(65, format!("die {s} out of range (< {dice})")));
        }
        return Ok(Box::new(ConstantAdversary(s)));
    }
    if let Some(path) = name.strip_prefix("file:") {
        let bytes = io::read_bytes(Path::new(path))?;
        let schedule = io::parse_indices(&String::from_utf8_lossy(&bytes), dice, "die")?;
        if schedule.is_empty() {
            return Err(Failure::new(65, "die schedule is empty"));
        }
        return Ok(Box::new(ScheduleAdversary(schedule)));
    }
    match name {
        "uniform" => Ok(Box::new(UniformAdversary { num_dice: dice })),
        "adaptive-sign" => Ok(Box::new(AdaptiveSign::new(spec, psi.values(), Some(n)))),
        _ => Err(Failure::new(
            64,
            format!("unknown adversary {name:?}; use constant:S, uniform, adaptive-sign or file:PATH"),
        )),
    }
}

fn bit_stats(traces: &[BitTrace], cfg: &MartingaleConfig, psi: &PsiWitness) -> Result<Value, Failure> {
    let ones = traces.iter().filter(|t| t.bit == 1).count();
    let freq = if traces.is_empty() {
        Value::Null
    } else {
        json!(ones as f64 / traces.len() as f64)
    };
    let taus: Vec<f64> = traces.iter().map(|t| t.tau as f64).collect();
    let tau = summarize(&taus);
    let unstopped = traces
        .iter()
        .filter(|t| t.tau == cfg.block_length() && t.y_tau.abs() < cfg.threshold())
        .count();
    Ok(json!({
        "bits": traces.len(),
        "ones": ones,
        "frequency_of_one": freq,
        "bias_bracket": extractor::bias_bracket(cfg, psi)?,
        "tau": if traces.is_empty() { Value::Null } else { json!(tau) },
        "unstopped": unstopped,
    }))
}

fn extract(
    ctx: &mut Ctx,
    path: &Path,
    k: usize,
    psi_arg: Option<&str>,
    adversary_name: &str,
    stream: Option<&Path>,
) -> Result<i32, Failure> {
    let (bytes, spec) = load_spec(path, ctx.cli.exact)?;
    let psi = match psi_arg {
        Some(text) => {
            let values = text
                .split(',')
                .map(|t| parse_rational(t.trim()).map(|r| r.to_f64()))
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| Failure::new(64, format!("--psi: {}", e.0)))?;
            let w = PsiWitness::evaluate(&spec, values)?;
            if !w.is_valid(ctx.config.tolerance) {
                return Err(Failure::new(
                    65,
                    format!(
                        "--psi is not a witness: max |E[psi]| = {:.3e}, min Var = {:.3e}",
                        w.max_abs_mean(),
                        w.min_variance()
                    ),
                ));
            }
            w
        }
        None => {
            let v = extractor::verdict_with(
                &spec,
                VerdictOptions {
                    tol: ctx.config.tolerance,
                    ..Default::default()
                },
            );
            match v.witness {
                Some(w) => w,
                None => {
                    let _ = writeln!(ctx.err, "error: source is {:?}, nothing to extract", v.status);
                    return Ok(v.status.exit_code());
                }
            }
        }
    };
    let cfg = ctx.martingale()?;
    let mut inputs = vec![bytes];
    let traces = match stream {
        Some(p) => {
            let raw = io::read_bytes(p)?;
            let symbols = io::parse_indices(&String::from_utf8_lossy(&raw), spec.alphabet_size(), "symbol")?;
            inputs.push(raw);
            extractor::extract_bits(&psi, &cfg, &symbols, k)?
        }
        None => {
            let mut adv = build_adversary(adversary_name, &spec, &psi, cfg.block_length())?;
            let mut src = SourceStream::new(&spec, adv.as_mut(), trial_rng(ctx.config.seed, 0));
            extractor::extract_bits_from(&psi, &cfg, &mut src, k)?
        }
    };
    let bits: String = traces.iter().map(|t| char::from(b'0' + t.bit)).collect();
    let result = json!({
        "psi": psi_json(&psi),
        "n": cfg.block_length(),
        "M": cfg.threshold(),
        "adversary": if stream.is_some() { "stream" } else { adversary_name },
        "stats": bit_stats(&traces, &cfg, &psi)?,
    });
    let refs: Vec<&[u8]> = inputs.iter().map(Vec::as_slice).collect();
    let report = ctx.report(&refs, result);
    writeln!(ctx.out, "{bits}").map_err(|e| Failure::new(74, e.to_string()))?;
    ctx.emit(&report)?;
    Ok(0)
}

fn adversary_cmd(
    ctx: &mut Ctx,
    path: &Path,
    table_path: Option<&Path>,
    left_prefix: Option<u64>,
) -> Result<i32, Failure> {
    let (bytes, spec) = load_spec(path, ctx.cli.exact)?;
    let mut inputs = vec![bytes];
    let table = match (table_path, left_prefix) {
        (Some(p), None) => {
            let raw = io::read_bytes(p)?;
            let t = io::parse_table(&raw, spec.alphabet_size())?;
            inputs.push(raw);
            t
        }
        (None, Some(x)) => {
            if spec.alphabet_size() != 2 {
                return Err(Failure::new(65, "--left-prefix needs a binary source"));
            }
            let n = ctx.cli.n.ok_or_else(|| Failure::new(64, "--left-prefix needs --n"))?;
            count_within_budget(2, n, ctx.config.budget)?;
            binary_sv::left_prefix_table(n, x)?
        }
        _ => return Err(Failure::new(64, "give exactly one of TABLE or --left-prefix")),
    };
    count_within_budget(table.alphabet_size(), table.depth(), ctx.config.budget)?;
    let comp = table.complement();
    let (ab, comp_ab, identity) = if spec.is_exact() {
        let ab = adversary::alpha_beta_exact(&spec, &table)?;
        let cb = adversary::alpha_beta_exact(&spec, &comp)?;
        let one = num_rational::BigRational::from_ratio(1, 1);
        let ok = cb.alpha == one.clone() - ab.beta.clone() && cb.beta == one - ab.alpha.clone();
        let strings = |v: &adversary::AlphaBeta<num_rational::BigRational>| {
            json!({
                "alpha": rational_to_string(&v.alpha),
                "beta": rational_to_string(&v.beta),
                "alpha_f64": v.alpha.to_f64(),
                "beta_f64": v.beta.to_f64(),
            })
        };
        (strings(&ab), strings(&cb), ok)
    } else {
        let ab = adversary::alpha_beta(&spec, &table)?;
        let cb = adversary::alpha_beta(&spec, &comp)?;
        let tol = ctx.config.tolerance;
        let ok = (cb.alpha - (1.0 - ab.beta)).abs() <= tol && (cb.beta - (1.0 - ab.alpha)).abs() <= tol;
        (json!(ab), json!(cb), ok)
    };
    let min = adversary::optimal_strategy(&spec, &table, Objective::Min)?;
    let max = adversary::optimal_strategy(&spec, &table, Objective::Max)?;
    let mut result = ab.clone();
    result["n"] = json!(table.depth());
    result["zero_set_size"] = json!(table.zero_count());
    result["complement"] = comp_ab;
    result["strategy_alpha"] = json!(min.levels());
    result["strategy_beta"] = json!(max.levels());
    let mut report = ctx.report(&inputs.iter().map(Vec::as_slice).collect::<Vec<_>>(), result);
    report.checks.push(Check::new(
        "complement-identity",
        identity,
        "alpha(complement) = 1 - beta and beta(complement) = 1 - alpha",
    ));
    ctx.emit(&report)?;
    Ok(if report.all_pass() { 0 } else { 1 })
}

fn curve(ctx: &mut Ctx, delta_text: &str, n_max: usize) -> Result<i32, Failure> {
    let delta = parse_rational(delta_text)
        .map_err(|e| Failure::new(64, format!("--delta: {}", e.0)))?
        .to_f64();
    let points = binary_sv::f_delta_curve(delta, n_max)?;
    let gap = binary_sv::curve_gap(&points);
    let mut csv = Vec::new();
    io::write_curve_csv(&points, &mut csv)?;
    let single = points
        .iter()
        .any(|p| (p.alpha - delta).abs() < 1e-12 && (p.beta - (1.0 - delta)).abs() < 1e-12);
    match &ctx.cli.out {
        Some(path) => {
            write_file(path, &csv)?;
            let mut report = ctx.report(
                &[delta_text.as_bytes()],
                json!({ "delta": delta, "n_max": n_max, "points": points.len(), "gap": gap, "csv": path.display().to_string() }),
            );
            report.checks.push(Check::new("gap-positive", gap > 0.0, format!("{gap:.6}")));
            report.checks.push(Check::new(
                "single-bit-point",
                single,
                "the one-symbol extractor (delta, 1 - delta) is on the curve",
            ));
            ctx.out
                .write_all(report.to_json().as_bytes())
                .map_err(|e| Failure::new(74, e.to_string()))?;
        }
        None => {
            ctx.out.write_all(&csv).map_err(|e| Failure::new(74, e.to_string()))?;
            let _ = writeln!(ctx.err, "points: {}, gap: {gap}", points.len());
        }
    }
    Ok(if gap > 0.0 { 0 } else { 1 })
}

fn distributed_cmd(ctx: &mut Ctx, path: &Path, k: usize) -> Result<i32, Failure> {
    let bytes = io::read_bytes(path)?;
    let jspec = io::parse_joint_spec(&bytes)?;
    let opts = DistOptions {
        tol: ctx.config.tolerance,
        spread: ctx.spread(),
        ..DistOptions::default()
    };
    let report = distributed::distributed_verdict_with(&jspec, &opts)?;
    let mut result = serde_json::to_value(&report).expect("reports serialize");
    result["rho"] = json!(report.rho_per_die);
    if let Some(b) = &report.certificate {
        let c = &b.certificate;
        result["rho_cond"] = json!(c.rho_cond);
        result["delta"] = json!(c.delta);
        result["delta_prime"] = json!(c.delta_prime);
        result["epsilon"] = json!(c.epsilon);
        result["M"] = json!(c.m);
    }
    if let Some(w) = &report.witsenhausen {
        result["center"] = json!(w.center);
    }
    let mut checks = Vec::new();
    if report.status == DistStatus::CommonExtractable {
        let cfg = ctx.martingale()?;
        let mut adv = distributed::common_adaptive_adversary(&jspec, &report, cfg.block_length())?;
        let demo = distributed::common_extract_with(&jspec, &report, &cfg, &mut adv, k, trial_rng(ctx.config.seed, 0))?;
        let psi = report
            .induced_verdict
            .as_ref()
            .and_then(|v| v.witness.as_ref())
            .expect("extractable verdict has a witness");
        result["demo"] = json!({
            "agreement": demo.agreement,
            "alice_bits": demo.alice.iter().map(|t| char::from(b'0' + t.bit)).collect::<String>(),
            "stats": bit_stats(&demo.alice, &cfg, psi)?,
        });
        checks.push(Check::new("agreement", demo.agreement == 1.0, format!("{}", demo.agreement)));
    }
    let mut out = ctx.report(&[&bytes], result);
    out.checks = checks;
    ctx.emit(&out)?;
    Ok(report.status.exit_code())
}

fn verify(ctx: &mut Ctx, suite: &str) -> Result<i32, Failure> {
    let Some(results) = suites::run_suite(suite, ctx.config.seed) else {
        return Err(Failure::new(
            64,
            format!("unknown suite {suite:?}; available: {}", suites::SUITES.join(", ")),
        ));
    };
    let mut text = String::new();
    for r in &results {
        text.push_str(&r.check.line());
        text.push('\n');
        let _ = writeln!(ctx.err, "{}: {:.3}s", r.check.name, r.elapsed.as_secs_f64());
    }
    ctx.emit_text(&text)?;
    Ok(if results.iter().all(|r| r.check.pass) { 0 } else { 1 })
}
