mod args;
mod output;
mod verify;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use args::{parse_half_ints, parse_reals, positive, Format, OutputArgs, SigmaArgs};
use tbl_core::continuum::{kdv_residual_diagnostic, SigmaFamily};
use tbl_core::fredholm::{gap_sweep, DEFAULT_EPS};
use tbl_core::integrable::dpii_sweep;
use tbl_core::par::Execution;
use tbl_core::plancherel::compare_with_fredholm;
use tbl_core::{Error, HalfInt, SigmaProfile};
use verify::{CheckReport, CheckRow, Plan};

#[derive(Debug, Parser)]
#[command(
    name = "tbl",
    version,
    about = "Gap probabilities of the finite-temperature discrete Bessel process"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Q_σ(L,s) on an (L, s) grid.
    Compute(ComputeArgs),
    /// Residual reports for the integrable identities.
    Verify(VerifyArgs),
    /// Table of the dPII solution v(L,s) with its Fredholm cross-check.
    Dpii(DpiiArgs),
    /// Monte Carlo estimates next to the Fredholm values.
    Mc(McArgs),
    /// KdV scaling diagnostic at one (x, t).
    Kdv(KdvArgs),
}

#[derive(Debug, Args)]
struct ComputeArgs {
    #[command(flatten)]
    sigma: SigmaArgs,
    /// L values, comma separated.
    #[arg(long = "L", allow_hyphen_values = true)]
    l: String,
    /// s values: a..b or a comma list, in p/2 form.
    #[arg(long, allow_hyphen_values = true)]
    s: String,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Check {
    Anchors,
    Toeplitz,
    Toda,
    Variational,
    Ratio,
    Idpii,
    Dpii,
    Volterra,
    SmallL,
    Mc,
    Kdv,
    All,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    check: Check,
    #[command(flatten)]
    sigma: SigmaArgs,
    #[arg(long = "L", allow_hyphen_values = true)]
    l: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    s: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    s_max: Option<String>,
    /// Finite-difference step in L.
    #[arg(long)]
    h: Option<f64>,
    /// Overrides the per-check tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Smaller grids for `all`.
    #[arg(long)]
    quick: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct DpiiArgs {
    #[arg(long = "L", default_value = "1")]
    l: String,
    #[arg(long, allow_hyphen_values = true, default_value = "21/2")]
    s_max: String,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct McArgs {
    #[command(flatten)]
    sigma: SigmaArgs,
    #[arg(long = "L")]
    l: String,
    #[arg(long, allow_hyphen_values = true)]
    s: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct KdvArgs {
    /// Fixed profile for every ε; the default is the scaled Fermi family.
    #[command(flatten)]
    sigma: SigmaArgs,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Strictly decreasing ε values.
    #[arg(long, default_value = "0.4,0.3,0.2")]
    epsilon: String,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Core(Error),
    ChecksFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) | Error::ParameterOutOfRange(m) => Failure::Config(m),
            e => Failure::Core(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("output: {e}"))
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Compute(a) => compute(a),
        Command::Verify(a) => run_verify(a),
        Command::Dpii(a) => dpii_table(a),
        Command::Mc(a) => mc_table(a),
        Command::Kdv(a) => kdv_table(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::ChecksFailed) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::ResourceLimit(_)) { 3 } else { 1 })
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var("TBL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("TBL_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn check_eps(eps: f64) -> std::result::Result<f64, Failure> {
    Ok(positive("--eps", eps)?)
}

#[derive(Serialize)]
struct GapRow {
    sigma_id: String,
    #[serde(rename = "L")]
    l: f64,
    s: f64,
    q: f64,
    trunc_err: f64,
    window_lo: f64,
    window_hi: f64,
}

fn compute(a: ComputeArgs) -> Outcome {
    let sigma = a.sigma.resolve()?;
    let ls = parse_reals(&a.l)?;
    let ss = parse_half_ints(&a.s)?;
    let eps = check_eps(a.eps)?;
    let res = gap_sweep(Execution::default(), &ls, &ss, &sigma, eps)?;
    match a.out.format.unwrap_or(Format::Csv) {
        Format::Json => output::write_rows(&a.out.out, Format::Json, &res)?,
        Format::Csv => {
            let rows: Vec<GapRow> = res
                .iter()
                .map(|g| GapRow {
                    sigma_id: sigma.id(),
                    l: g.l,
                    s: g.s.value(),
                    q: g.q,
                    trunc_err: g.trunc_err,
                    window_lo: g.window.0.value(),
                    window_hi: g.window.1.value(),
                })
                .collect();
            output::write_rows(&a.out.out, Format::Csv, &rows)?
        }
    }
    Ok(())
}

fn half(text: &str) -> std::result::Result<HalfInt, Failure> {
    Ok(text.parse::<HalfInt>()?)
}

fn run_verify(a: VerifyArgs) -> Outcome {
    let sigma = a.sigma.resolve()?;
    let eps = check_eps(a.eps)?;
    if let Some(t) = a.tol {
        positive("--tol", t)?;
    }
    if let Some(h) = a.h {
        positive("--h", h)?;
    }
    if a.samples == Some(0) {
        return Err(Failure::Config("--samples must be positive".into()));
    }
    let ls = a.l.as_deref().map(parse_reals).transpose()?;
    let ss = a.s.as_deref().map(parse_half_ints).transpose()?;
    let s_max = a.s_max.as_deref().map(half).transpose()?;
    if a.quick && a.check != Check::All {
        return Err(Failure::Config("--quick only applies to `verify all`".into()));
    }

    let user = Plan {
        sigma,
        ls: ls.clone().unwrap_or_default(),
        ss: ss.clone().unwrap_or_default(),
        s_max: s_max.unwrap_or(HalfInt::above(10)),
        h: a.h.unwrap_or(0.0),
        tol: a.tol,
        eps,
        samples: a.samples.unwrap_or(100_000),
        seed: a.seed,
    };
    // per-check defaults for anything the user left out
    let with = |l: &[f64], s: &str, h: f64| Plan {
        ls: ls.clone().unwrap_or_else(|| l.to_vec()),
        ss: ss.clone().unwrap_or_else(|| parse_half_ints(s).expect("valid default")),
        h: a.h.unwrap_or(h),
        ..user.clone()
    };
    let reports = match a.check {
        Check::Anchors => verify::anchors(&with(&[0.5, 1.0, 2.0], "1/2", 0.0)),
        Check::Toeplitz => {
            if user.sigma != SigmaProfile::Indicator {
                return Err(Failure::Config(
                    "the Toeplitz identity holds for the indicator profile only".into(),
                ));
            }
            verify::toeplitz(&with(&[0.5, 1.0, 2.0, 3.0], "-1/2..21/2", 0.0))
        }
        Check::Toda => verify::toda(&with(&[0.5, 1.0, 2.0], "-1/2..11/2", 1e-2)),
        Check::Variational => verify::variational(&with(&[0.5, 1.0, 2.0], "-1/2..11/2", 1e-3)),
        Check::Ratio => verify::ratio(&with(&[0.5, 1.0, 2.0], "-1/2..11/2", 0.0)),
        Check::Idpii => verify::idpii(&with(&[1.0], "3/2..7/2", 0.0)),
        Check::Dpii => verify::dpii(&with(&[1.0], "1/2", 0.0)),
        Check::Volterra => verify::volterra(&with(&[1.0], "-1/2..5/2", 1e-3)),
        Check::SmallL => verify::small_l(&with(&[0.05, 0.025, 0.0125], "-1/2..3/2", 0.0)),
        Check::Mc => verify::monte_carlo(&with(&[1.0], "-1/2..3/2", 0.0)),
        Check::Kdv => {
            let family = if a.sigma.given() {
                SigmaFamily::Fixed(user.sigma.clone())
            } else {
                SigmaFamily::Fermi
            };
            verify::kdv(&user, &family, 0.0, 1.0, &[0.4, 0.3, 0.2])
        }
        Check::All => {
            if a.sigma.given() || ls.is_some() || ss.is_some() {
                return Err(Failure::Config(
                    "`verify all` runs fixed grids; drop --sigma/--L/--s".into(),
                ));
            }
            verify_all(&user, a.quick)
        }
    };
    emit_reports(&a.out, &reports)
}

fn verify_all(user: &Plan, quick: bool) -> Vec<CheckReport> {
    let fermi = SigmaProfile::fermi(0.5).expect("valid u");
    let (grid_l, grid_s): (&[f64], &str) = if quick {
        (&[1.0], "-1/2..5/2")
    } else {
        (&[0.5, 1.0, 2.0], "-1/2..11/2")
    };
    let plan = |sigma: &SigmaProfile, ls: &[f64], ss: &str, h: f64| Plan {
        sigma: sigma.clone(),
        ls: ls.to_vec(),
        ss: parse_half_ints(ss).expect("valid default"),
        h,
        ..user.clone()
    };
    let ind = SigmaProfile::Indicator;
    let mut out = verify::anchors(&plan(&ind, &[0.5, 1.0, 2.0], "1/2", 0.0));
    out.extend(verify::toeplitz(&plan(&ind, &[0.5, 1.0, 2.0, 3.0], "-1/2..21/2", 0.0)));
    for sigma in [&ind, &fermi] {
        out.extend(verify::toda(&plan(sigma, grid_l, grid_s, 1e-2)));
        out.extend(verify::variational(&plan(sigma, grid_l, grid_s, 1e-3)));
        out.extend(verify::ratio(&plan(sigma, grid_l, grid_s, 0.0)));
        out.extend(verify::idpii(&plan(sigma, &[1.0], "3/2..7/2", 0.0)));
        out.extend(verify::volterra(&plan(sigma, &[1.0], "-1/2..5/2", 1e-3)));
    }
    out.extend(verify::dpii(&plan(&ind, &[1.0], "1/2", 0.0)));
    out.extend(verify::small_l(&plan(&ind, &[0.05, 0.025, 0.0125], "-1/2", 0.0)));
    out.extend(verify::small_l(&plan(&fermi, &[0.05, 0.025, 0.0125], "1/2..3/2", 0.0)));
    let samples = if quick { 20_000 } else { 100_000 };
    let mc = |sigma: &SigmaProfile, l: f64, ss: &str, seed: u64| Plan {
        samples,
        seed,
        ..plan(sigma, &[l], ss, 0.0)
    };
    out.extend(verify::monte_carlo(&mc(&ind, 1.0, "-1/2,3/2", user.seed)));
    out.extend(verify::monte_carlo(&mc(
        &fermi,
        2.0,
        "1/2,5/2",
        user.seed.wrapping_add(1000),
    )));
    out.extend(verify::kdv(user, &SigmaFamily::Fermi, 0.0, 1.0, &[0.4, 0.3, 0.2]));
    out
}

fn emit_reports(out: &OutputArgs, reports: &[CheckReport]) -> Outcome {
    match out.format.unwrap_or(Format::Json) {
        Format::Json => output::write_rows(&out.out, Format::Json, reports)?,
        Format::Csv => {
            let rows: Vec<CheckRow> = reports.iter().map(CheckRow::from).collect();
            output::write_rows(&out.out, Format::Csv, &rows)?
        }
    }
    let failed: Vec<&CheckReport> = reports.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!(
            "FAIL {} {}: residual {:e} > {:e}{}",
            r.check,
            r.params,
            r.residual,
            r.tolerance,
            r.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default()
        );
    }
    if failed.iter().any(|r| r.resource_limited) {
        return Err(Failure::Core(Error::ResourceLimit(
            "a check hit a resource limit".into(),
        )));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::ChecksFailed)
    }
}

#[derive(Serialize)]
struct VRow {
    #[serde(rename = "L")]
    l: f64,
    s: f64,
    v: f64,
    cross_check: f64,
}

fn dpii_table(a: DpiiArgs) -> Outcome {
    let ls = parse_reals(&a.l)?;
    let s_max = half(&a.s_max)?;
    let eps = check_eps(a.eps)?;
    let seqs = dpii_sweep(Execution::default(), &ls, s_max, eps)?;
    let rows: Vec<VRow> = seqs
        .iter()
        .flat_map(|q| {
            q.s.iter().zip(&q.v).zip(&q.cross_check).map(|((s, &v), &c)| VRow {
                l: q.l,
                s: s.value(),
                v,
                cross_check: c,
            })
        })
        .collect();
    for q in &seqs {
        if let Some(b) = q.blow_up {
            eprintln!("L={}: cross-check failed at s={b}; table stops at the horizon", q.l);
        }
    }
    output::write_rows(&a.out.out, a.out.format.unwrap_or(Format::Csv), &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct McRow {
    sigma_id: String,
    #[serde(rename = "L")]
    l: f64,
    s: f64,
    mc_mean: f64,
    mc_stderr: f64,
    fredholm_q: f64,
    z_score: f64,
}

fn mc_table(a: McArgs) -> Outcome {
    let sigma = a.sigma.resolve()?;
    let ls = parse_reals(&a.l)?;
    let ss = parse_half_ints(&a.s)?;
    let eps = check_eps(a.eps)?;
    if a.samples == 0 {
        return Err(Failure::Config("--samples must be positive".into()));
    }
    let mut rows = Vec::new();
    for (k, &l) in ls.iter().enumerate() {
        for c in compare_with_fredholm(&sigma, l, &ss, a.samples, a.seed.wrapping_add(k as u64), eps)? {
            rows.push(McRow {
                sigma_id: c.sigma_id,
                l,
                s: c.s.value(),
                mc_mean: c.mc_mean,
                mc_stderr: c.mc_stderr,
                fredholm_q: c.fredholm_q,
                z_score: c.z_score,
            });
        }
    }
    output::write_rows(&a.out.out, a.out.format.unwrap_or(Format::Csv), &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct KdvRow {
    x: f64,
    t: f64,
    epsilon: f64,
    #[serde(rename = "L")]
    l: f64,
    s: f64,
    q: f64,
    kdv_residual: f64,
}

fn kdv_table(a: KdvArgs) -> Outcome {
    let family = if a.sigma.given() {
        SigmaFamily::Fixed(a.sigma.resolve()?)
    } else {
        SigmaFamily::Fermi
    };
    let epsilons = parse_reals(&a.epsilon)?;
    let eps = check_eps(a.eps)?;
    let reports = kdv_residual_diagnostic(Execution::default(), a.x, a.t, &epsilons, &family, eps)?;
    let rows: Vec<KdvRow> = reports
        .iter()
        .map(|r| KdvRow {
            x: r.point.x_lattice,
            t: r.point.t,
            epsilon: r.point.epsilon,
            l: r.point.l,
            s: r.point.s.value(),
            q: r.q,
            kdv_residual: r.residual,
        })
        .collect();
    for r in reports.iter().filter(|r| !r.resolved && r.residual != 0.0) {
        eprintln!(
            "ε={}: residual {:e} is not resolved above noise {:e}",
            r.point.epsilon, r.residual, r.noise
        );
    }
    output::write_rows(&a.out.out, a.out.format.unwrap_or(Format::Csv), &rows)?;
    Ok(())
}
