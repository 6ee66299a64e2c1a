//! The `pgn` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime error or failed gate, 2 infeasible
//! fit or scale, 3 malformed spec or arguments.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::batch::{spec_hash, SampleBatch};
use crate::bounds::{dtv_bound_1d, mv_integral_diag, q_floor_sq};
use crate::error::PgnError;
use crate::levy::LevyMeasure1D;
use crate::matching::{fit_with_order, MatchOrder, MatchedParams};
use crate::radial::{
    calibration_residual, radial_match, sample_mv, sigma_tau, MvPart, RadialLevySpec,
};
use crate::rng::with_threads;
use crate::sampler::{sample_normal_baseline, sample_pgn, TailSampler};
use crate::validation::{
    empirical_cumulants, mv_cov_check, quadrature_match_check, rate_study, DEFAULT_BATCHES,
};

#[derive(Debug, Parser)]
#[command(name = "pgn", version, about = "Poisson-Gamma-Normal small-jump approximation")]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "PGN_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit (p, s, m, σ) for a univariate measure at truncation r.
    Match(MatchArgs),
    /// Draw from the fitted approximation Δ_r + T_r (or the normal baseline).
    Sample(SampleArgs),
    /// Radial fit of a multivariate spec at Gaussian scale τ.
    MvMatch(MvMatchArgs),
    /// Draw from a component of the multivariate approximation.
    MvSample(MvSampleArgs),
    /// Total-variation bound over a single r or a sweep.
    Bound(BoundArgs),
    /// Multivariate bound diagnostics over τ.
    MvBound(MvBoundArgs),
    /// KS rate study of the approximation against the normal baseline.
    Rate(RateArgs),
    /// Run the validation gates.
    Validate(ValidateArgs),
    /// Fast end-to-end sanity checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    #[value(name = "4")]
    Four,
    #[value(name = "5")]
    Five,
    #[value(name = "7")]
    Seven,
    #[value(name = "9")]
    Nine,
    Auto,
}

impl From<OrderArg> for MatchOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::Four => MatchOrder::Four,
            OrderArg::Five => MatchOrder::Five,
            OrderArg::Seven => MatchOrder::Seven,
            OrderArg::Nine => MatchOrder::Nine,
            OrderArg::Auto => MatchOrder::Auto,
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct FitArgs {
    /// Univariate Lévy measure JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Truncation radius.
    #[arg(long)]
    pub r: Option<f64>,
    /// Fit order.
    #[arg(long, value_enum, default_value = "auto")]
    pub order: OrderArg,
    /// Fixed Gamma exponent for orders 4 and 7.
    #[arg(long)]
    pub p: Option<f64>,
    /// Approximate the symmetrised law X1 - X2.
    #[arg(long)]
    pub symmetric: bool,
    /// Retry a failed order 5/9 fit as 4/7.
    #[arg(long)]
    pub fallback: bool,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Relative residual gate.
    #[arg(long, default_value_t = 1e-8)]
    pub gate: f64,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Fitted parameters from `match`; overrides the inline fit.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Sample the normal baseline Δ_r + √κ₂ Z instead.
    #[arg(long)]
    pub baseline: bool,
    /// Number of draws (accepts 1e6).
    #[arg(long, value_parser = parse_count)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output batch; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MvMatchArgs {
    /// Radial spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub tau: f64,
    /// Directions for the calibration check.
    #[arg(long, default_value_t = 256)]
    pub check_dirs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PartArg {
    Delta,
    Y,
    T,
    Full,
}

impl From<PartArg> for MvPart {
    fn from(p: PartArg) -> Self {
        match p {
            PartArg::Delta => MvPart::Delta,
            PartArg::Y => MvPart::Y,
            PartArg::T => MvPart::T,
            PartArg::Full => MvPart::Full,
        }
    }
}

#[derive(Debug, Args)]
pub struct MvSampleArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub tau: f64,
    #[arg(long, value_enum, default_value = "full")]
    pub part: PartArg,
    #[arg(long, value_parser = parse_count)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Log-spaced grid `r=start:end:logN`.
    #[arg(long, conflicts_with = "r")]
    pub sweep: Option<String>,
    /// CSV output (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MvBoundArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, conflicts_with = "sweep")]
    pub tau: Option<f64>,
    /// Log-spaced grid `tau=start:end:logN`.
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub q: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    /// Stability index of TruncStable{c, a, r0}.
    #[arg(long)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r0: f64,
    #[arg(long)]
    pub symmetric: bool,
    #[arg(long, value_parser = parse_count, default_value = "1e6")]
    pub n: usize,
    /// Comma-separated decreasing r values, or `start:end:logN`.
    #[arg(long, default_value = "0.4,0.2,0.1,0.05")]
    pub grid: String,
    #[arg(long, default_value_t = 100.0)]
    pub reference_factor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes `<prefix>.csv` and `<prefix>.json`.
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Suite {
    Quick,
    Full,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value = "quick")]
    pub suite: Suite,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Pgn(PgnError),
    Gate(String),
}

impl From<PgnError> for CliError {
    fn from(e: PgnError) -> Self {
        CliError::Pgn(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Gate(_) => 1,
            CliError::Pgn(PgnError::MatchInfeasible(_) | PgnError::TauTooLarge(_)) => 2,
            CliError::Pgn(PgnError::Schema(_)) => 3,
            CliError::Pgn(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Pgn(e) => write!(f, "{e}"),
            CliError::Gate(m) => write!(f, "gate failed: {m}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse a count written as an integer or in float notation (`1e7`).
pub fn parse_count(s: &str) -> std::result::Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a count"))?;
    if v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(format!("'{s}' is not a non-negative integer"))
    }
}

/// Parse `[name=]start:end:logN` into `N` log-spaced points, endpoints included.
pub fn parse_sweep(s: &str) -> std::result::Result<Vec<f64>, PgnError> {
    let body = s.split_once('=').map_or(s, |(_, b)| b);
    let parts: Vec<&str> = body.split(':').collect();
    let bad = || PgnError::Schema(format!("sweep '{s}' is not start:end:logN"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let end: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2]
        .strip_prefix("log")
        .ok_or_else(bad)?
        .parse()
        .map_err(|_| bad())?;
    if !(start > 0.0 && end > 0.0) || n == 0 {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![start]);
    }
    let (l0, l1) = (start.ln(), end.ln());
    Ok((0..n)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
        .collect())
}

fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, PgnError> {
    if s.contains(':') {
        return parse_sweep(s);
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| PgnError::Schema(format!("bad grid value '{t}'")))
        })
        .collect()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(PgnError::from)?;
    Ok(serde_json::from_str(&text).map_err(|e| PgnError::Schema(format!("{}: {e}", path.display())))?)
}

fn load_measure(path: &Path) -> CliResult<LevyMeasure1D> {
    let m: LevyMeasure1D = read_json(path)?;
    m.validate().map_err(|e| PgnError::Schema(e.to_string()))?;
    Ok(m)
}

fn load_radial(path: &Path) -> CliResult<RadialLevySpec> {
    let s: RadialLevySpec = read_json(path)?;
    s.validate().map_err(|e| PgnError::Schema(e.to_string()))?;
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(PgnError::from)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(PgnError::from)?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v).map_err(PgnError::from)? + "\n")
}

fn hex_hash<T: Serialize>(v: &T) -> CliResult<String> {
    Ok(hex::encode(spec_hash(v)?))
}

fn require_r(fit: &FitArgs) -> CliResult<f64> {
    fit.r
        .ok_or_else(|| CliError::Pgn(PgnError::Schema("--r is required".into())))
}

fn do_fit(measure: &LevyMeasure1D, fit: &FitArgs, r: f64) -> CliResult<MatchedParams> {
    let out = fit_with_order(measure, r, fit.symmetric, fit.order.into(), fit.p, fit.fallback)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    Ok(out.params)
}

fn cmd_match(args: &MatchArgs) -> CliResult<()> {
    let measure = load_measure(&args.fit.spec)?;
    let r = require_r(&args.fit)?;
    let params = do_fit(&measure, &args.fit, r)?;
    let quad = quadrature_match_check(&measure, &params)?;
    let report = json!({
        "spec_hash": hex_hash(&measure)?,
        "measure": measure,
        "params": params,
        "quadrature_residual": quad,
        "gate": args.gate,
    });
    emit(args.out.as_deref(), &to_json(&report)?)?;
    if quad > args.gate {
        return Err(CliError::Gate(format!("quadrature residual {quad:e} > {:e}", args.gate)));
    }
    Ok(())
}

fn write_batch(batch: &SampleBatch, format: Format, out: &Path) -> CliResult<()> {
    let file = fs::File::create(out).map_err(PgnError::from)?;
    let w = std::io::BufWriter::new(file);
    match format {
        Format::Csv => batch.write_csv(w)?,
        Format::Bin => batch.write_binary(w)?,
    }
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write_sidecar(out: &Path, batch: &SampleBatch, secs: f64, extra: Value) -> CliResult<()> {
    let mut meta = json!({
        "spec_hash": batch.spec_hash_hex(),
        "seed": batch.seed(),
        "n": batch.n(),
        "d": batch.d(),
        "streams": batch.stream_ids().end,
        "wall_time_s": secs,
        "throughput_per_s": batch.n() as f64 / secs.max(1e-12),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut meta, extra) {
        m.extend(e);
    }
    fs::write(sidecar_path(out), to_json(&meta)?).map_err(PgnError::from)?;
    Ok(())
}

fn cmd_sample(args: &SampleArgs) -> CliResult<()> {
    let measure = load_measure(&args.fit.spec)?;
    let start = Instant::now();
    let (batch, config) = if args.baseline {
        let r = require_r(&args.fit)?;
        let b = sample_normal_baseline(&measure, r, args.fit.symmetric, args.n, args.seed)?;
        (b, json!({"kind": "normal_baseline", "r": r, "symmetric": args.fit.symmetric}))
    } else {
        let params = match &args.params {
            Some(p) => {
                let v: Value = read_json(p)?;
                let inner = v.get("params").cloned().unwrap_or(v);
                serde_json::from_value::<MatchedParams>(inner).map_err(PgnError::from)?
            }
            None => do_fit(&measure, &args.fit, require_r(&args.fit)?)?,
        };
        let b = sample_pgn(&measure, &params, args.n, args.seed)?;
        (b, json!({"kind": "pgn", "params": params}))
    };
    let secs = start.elapsed().as_secs_f64();
    let r = config
        .get("r")
        .and_then(Value::as_f64)
        .or_else(|| config.pointer("/params/r").and_then(Value::as_f64))
        .unwrap_or(f64::NAN);
    let tail = TailSampler::new(&measure, r)?;
    write_batch(&batch, args.format, &args.out)?;
    write_sidecar(
        &args.out,
        &batch,
        secs,
        json!({
            "command": "sample",
            "measure": measure,
            "config": config,
            "format": args.format,
            "envelope_acceptance": tail.acceptance(),
            "tail_rate": tail.rate(),
        }),
    )
}

fn cmd_mv_match(args: &MvMatchArgs) -> CliResult<()> {
    let spec = load_radial(&args.spec)?;
    let field = radial_match(&spec, args.tau)?;
    let cal = calibration_residual(&field, args.check_dirs)?;
    let sigma = sigma_tau(&field)?.0;
    let report = json!({
        "spec_hash": hex_hash(&spec)?,
        "field": field,
        "sigma_tau": sigma.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
        "calibration_residual": cal,
    });
    emit(args.out.as_deref(), &to_json(&report)?)
}

fn cmd_mv_sample(args: &MvSampleArgs) -> CliResult<()> {
    let spec = load_radial(&args.spec)?;
    let field = radial_match(&spec, args.tau)?;
    let start = Instant::now();
    let batch = sample_mv(&field, args.part.into(), args.n, args.seed)?;
    let secs = start.elapsed().as_secs_f64();
    write_batch(&batch, args.format, &args.out)?;
    write_sidecar(
        &args.out,
        &batch,
        secs,
        json!({
            "command": "mv-sample",
            "spec": spec,
            "tau": args.tau,
            "part": args.part,
            "format": args.format,
            "essup_b": field.essup_b,
            "essup_n": field.essup_n,
            "clamped": field.clamp_count(),
        }),
    )
}

fn cmd_bound(args: &BoundArgs) -> CliResult<()> {
    let measure = load_measure(&args.fit.spec)?;
    let grid = match (&args.sweep, args.fit.r) {
        (Some(s), _) => parse_sweep(s)?,
        (None, Some(r)) => vec![r],
        (None, None) => return Err(PgnError::Schema("give --r or --sweep".into()).into()),
    };
    let mut csv = String::new();
    for (i, &r) in grid.iter().enumerate() {
        let params = do_fit(&measure, &args.fit, r)?;
        let rep = dtv_bound_1d(&measure, &params)?;
        let q = rep.q;
        if i == 0 {
            csv.push_str(&format!(
                "r,q,Q{},Q{},Q{},Q_floor_q,abs_cum_x,abs_cum_y,kappa2,dtv_bound,certified\n",
                q - 1,
                q,
                q + 1
            ));
        }
        csv.push_str(&format!(
            "{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
            r,
            q,
            rep.qs[&(q - 1)],
            rep.qs[&q],
            rep.qs[&(q + 1)],
            q_floor_sq(q).sqrt(),
            rep.abs_cum_x,
            rep.abs_cum_y,
            rep.kappa2,
            rep.dtv_bound,
            rep.certified
        ));
        if !rep.certified {
            eprintln!("warning: r = {r}: bound not certified for this family");
        }
    }
    emit(args.out.as_deref(), &csv)
}

fn cmd_mv_bound(args: &MvBoundArgs) -> CliResult<()> {
    let spec = load_radial(&args.spec)?;
    let grid = match (&args.sweep, args.tau) {
        (Some(s), _) => parse_sweep(s)?,
        (None, Some(t)) => vec![t],
        (None, None) => return Err(PgnError::Schema("give --tau or --sweep".into()).into()),
    };
    let mut csv = String::from(
        "tau,q,moment_factor,r_sat,integral_diag,tail_integral,radical,bound_modulo_constant,finite\n",
    );
    for &tau in &grid {
        let field = radial_match(&spec, tau)?;
        let (_, a) = sigma_tau(&field)?;
        let rep = mv_integral_diag(&field, &a, args.q)?;
        csv.push_str(&format!(
            "{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
            tau,
            rep.q,
            rep.moment_factor,
            rep.r_sat,
            rep.integral_diag,
            rep.tail_integral,
            rep.radical,
            rep.bound_modulo_constant,
            rep.finite
        ));
    }
    eprintln!("note: multivariate values are diagnostics, modulo the constant c(d, q)");
    emit(args.out.as_deref(), &csv)
}

fn cmd_rate(args: &RateArgs) -> CliResult<()> {
    let measure = LevyMeasure1D::trunc_stable(args.c, args.a, args.r0);
    measure.validate().map_err(|e| PgnError::Schema(e.to_string()))?;
    let grid = parse_grid(&args.grid)?;
    let res = rate_study(&measure, &grid, args.symmetric, args.n, args.reference_factor, args.seed)?;
    let gap = match (res.slope_pgn, res.slope_normal) {
        (Some(p), Some(n)) => Some(p.slope - n.slope),
        _ => None,
    };
    let summary = json!({
        "result": res,
        "config_hash": hex_hash(&json!({
            "measure": measure, "grid": grid, "symmetric": args.symmetric,
            "n": args.n, "reference_factor": args.reference_factor, "seed": args.seed,
        }))?,
        "ordering_holds": res.ordering_holds(),
        "slope_gap": gap,
    });
    match &args.out_prefix {
        Some(prefix) => {
            fs::write(prefix.with_extension("csv"), res.to_csv()).map_err(PgnError::from)?;
            fs::write(prefix.with_extension("json"), to_json(&summary)?).map_err(PgnError::from)?;
        }
        None => emit(None, &res.to_csv())?,
    }
    eprintln!(
        "ordering {} | slope pgn {:?} | slope normal {:?} | noise floor flag {}",
        res.ordering_holds(),
        res.slope_pgn.map(|s| s.slope),
        res.slope_normal.map(|s| s.slope),
        res.noise_floor_flag
    );
    if res.noise_floor_flag {
        return Err(CliError::Gate("distances indistinguishable from MC noise".into()));
    }
    if !res.ordering_holds() {
        return Err(CliError::Gate("dks_pgn >= dks_normal at some grid point".into()));
    }
    if gap.is_some_and(|g| g < 0.5) {
        return Err(CliError::Gate(format!("slope gap {:.3} < 0.5", gap.unwrap())));
    }
    Ok(())
}

struct GateLog {
    failed: usize,
}

impl GateLog {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn matching_gates(log: &mut GateLog) -> CliResult<()> {
    for a in [0.5, 1.0, 1.5] {
        for c in [0.5, 1.0, 2.0] {
            let m = LevyMeasure1D::trunc_stable(c, a, 1.0);
            for r in [0.5, 0.1, 0.01] {
                for sym in [false, true] {
                    let fit = fit_with_order(&m, r, sym, MatchOrder::Auto, None, false)?;
                    let res = quadrature_match_check(&m, &fit.params)?;
                    log.check(
                        &format!("match a={a} c={c} r={r} sym={sym}"),
                        res < 1e-9,
                        format!("residual {res:.2e}"),
                    );
                }
            }
        }
    }
    Ok(())
}

fn cumulant_gates(log: &mut GateLog, n: usize, seed: u64) -> CliResult<()> {
    let m = LevyMeasure1D::trunc_stable(1.0, 1.0, 1.0);
    for sym in [false, true] {
        let params = fit_with_order(&m, 1.0, sym, MatchOrder::Auto, None, false)?.params;
        let batch = sample_pgn(&m, &params, n, seed)?;
        let est = empirical_cumulants(batch.values(), 5, DEFAULT_BATCHES)?;
        let factor = if sym { 2.0 } else { 1.0 };
        for e in est.iter().skip(1) {
            let j = e.order;
            let target = if sym && j % 2 == 1 { 0.0 } else { factor * m.cumulant(j)? };
            let z = e.z(target);
            log.check(
                &format!("cumulant k{j} sym={sym}"),
                z.abs() < 5.0,
                format!("est {:.5} target {target:.5} z {z:.2}", e.estimate),
            );
        }
    }
    Ok(())
}

fn mv_gates(log: &mut GateLog, n: usize, seed: u64) -> CliResult<()> {
    let spec = example_radial_spec();
    let field = radial_match(&spec, 0.1)?;
    let cal = calibration_residual(&field, 256)?;
    log.check("mv calibration", cal < 1e-8, format!("residual {cal:.2e}"));
    let rep = mv_cov_check(&field, n, seed)?;
    log.check("mv mean T", rep.max_z_mean_t < 5.0, format!("max z {:.2}", rep.max_z_mean_t));
    log.check("mv cov T", rep.max_z_cov_t < 5.0, format!("max z {:.2}", rep.max_z_cov_t));
    log.check("mv cov Δ+T", rep.max_z_full < 5.0, format!("max z {:.2}", rep.max_z_full));
    log.check(
        "mv thinning",
        field.clamp_count() == 0,
        format!("{} clamped proposals", field.clamp_count()),
    );
    Ok(())
}

/// Symmetric radial spec on the circle: uniform ν, `a = c = r0 = 1`.
pub fn example_radial_spec() -> RadialLevySpec {
    use crate::sphere::{DirFn, SphereMeasure};
    RadialLevySpec {
        nu: SphereMeasure::UniformSpherical {
            d: 2,
            total_mass: 1.0,
        },
        a: DirFn::constant(1.0),
        c: DirFn::constant(1.0),
        r0: 1.0,
        symmetric: true,
        direction_independent: true,
    }
}

fn cmd_validate(args: &ValidateArgs) -> CliResult<()> {
    let mut log = GateLog { failed: 0 };
    matching_gates(&mut log)?;
    let n = match args.suite {
        Suite::Quick => 1_000_000,
        Suite::Full => 10_000_000,
    };
    cumulant_gates(&mut log, n, args.seed)?;
    if matches!(args.suite, Suite::Full) {
        mv_gates(&mut log, 1_000_000, args.seed)?;
    }
    if log.failed > 0 {
        return Err(CliError::Gate(format!("{} validation gates failed", log.failed)));
    }
    Ok(())
}

fn cmd_selftest() -> CliResult<()> {
    let mut log = GateLog { failed: 0 };
    let m = LevyMeasure1D::trunc_stable(1.0, 1.0, 1.0);
    let p = fit_with_order(&m, 1.0, false, MatchOrder::Five, None, false)?.params;
    log.check("match5 p", (p.p - 4.0).abs() < 1e-10, format!("p = {}", p.p));
    log.check(
        "match5 s",
        (p.s - 1.0 / 12.0).abs() < 1e-12,
        format!("s = {}", p.s),
    );
    let a = sample_pgn(&m, &p, 200_000, 9)?;
    let b = with_threads(1, || sample_pgn(&m, &p, 200_000, 9))?;
    log.check("determinism", a == b, "pool vs one thread".into());
    let est = empirical_cumulants(a.values(), 2, DEFAULT_BATCHES)?;
    let z = est[1].z(1.0);
    log.check("variance", z.abs() < 5.0, format!("z {z:.2}"));
    let bound = dtv_bound_1d(&m, &fit_with_order(&m, 0.1, false, MatchOrder::Five, None, false)?.params)?;
    log.check(
        "bound finite",
        bound.dtv_bound.is_finite() && bound.dtv_bound > 0.0,
        format!("{:e}", bound.dtv_bound),
    );
    let field = radial_match(&example_radial_spec(), 0.1)?;
    let cal = calibration_residual(&field, 64)?;
    log.check("mv calibration", cal < 1e-8, format!("{cal:.2e}"));
    if log.failed > 0 {
        return Err(CliError::Gate(format!("{} self-tests failed", log.failed)));
    }
    Ok(())
}

/// Dispatch a parsed command.
pub fn run(cli: &Cli) -> CliResult<()> {
    with_threads(cli.threads, || match &cli.command {
        Command::Match(a) => cmd_match(a),
        Command::Sample(a) => cmd_sample(a),
        Command::MvMatch(a) => cmd_mv_match(a),
        Command::MvSample(a) => cmd_mv_sample(a),
        Command::Bound(a) => cmd_bound(a),
        Command::MvBound(a) => cmd_mv_bound(a),
        Command::Rate(a) => cmd_rate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Selftest => cmd_selftest(),
    })
}

/// Parse `std::env::args`, run, and return the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_syntax() {
        let g = parse_sweep("r=0.5:0.001:log20").unwrap();
        assert_eq!(g.len(), 20);
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[19] - 0.001).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!(parse_sweep("0.5:0.1").is_err());
        assert!(parse_sweep("0.5:0.1:20").is_err());
    }

    #[test]
    fn counts() {
        assert_eq!(parse_count("1e7").unwrap(), 10_000_000);
        assert_eq!(parse_count("42").unwrap(), 42);
        assert!(parse_count("1.5").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
