//! Command-line definitions and the subcommand implementations.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use resonance_core::greens::{
    g_eff_direct, g_eff_expanded, g_retarded_advanced_sum, lead_green_unchecked, transmission, SiteRef,
};
use resonance_core::model::lambda_from_energy;
use resonance_core::oracle::{det_z_roots, truncate, ExactPropagator};
use resonance_core::pencil::{max_abs, QuadraticPencil};
use resonance_core::spectral::{classify, solve_discrete_states, verify_resolution_of_unity};
use resonance_core::time::{self, AmplitudeSeries, BranchMode, GaussianPacket, PacketFrame, SiteField, TermGroups, Warning};
use resonance_core::{CMatrix, CVector, Error as CoreError, OpenLatticeModel, Sheet, SheetPoint, SpectralSolution, C64};
use serde::Serialize;
use serde_json::json;

use crate::error::{KitError, KitResult};
use crate::grid::{parse_complex_list, parse_grid};
use crate::manifest::RunManifest;
use crate::model_io::load_model;
use crate::output::{self, num};

const AFTER_HELP: &str = "\
Exit codes:
  0  success
  1  numerical failure: solver error, degenerate spectrum, failed verification
  2  input error: unreadable or invalid model, bad arguments, horizon exceeded

Environment:
  RESONANCE_KIT_JOBS  default for --jobs

Sites are 1-based. Grids: start:stop:step, comma lists, or both (0:10:1,20,40).";

/// Discrete-state spectra, Green's functions and time evolution for
/// tight-binding dots with semi-infinite leads.
#[derive(Parser, Debug, Clone, Serialize)]
#[command(name = "resonance-kit", version, after_help = AFTER_HELP)]
pub struct Cli {
    /// Tolerance (verify checks; quadrature convergence for time evolution).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads.
    #[arg(long, global = true, env = "RESONANCE_KIT_JOBS")]
    pub jobs: Option<usize>,
    /// Output file (stdout when absent); a `<out>.manifest.json` is written next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Continue past warnings such as a degenerate spectrum.
    #[arg(long, global = true)]
    pub allow_warnings: bool,
    /// Subcommand.
    #[command(subcommand)]
    pub command: Command,
}

/// Output format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// CSV.
    Csv,
    /// JSON.
    Json,
}

/// Subcommands.
#[derive(Subcommand, Debug, Clone, Serialize)]
pub enum Command {
    /// All discrete states (bound, anti-bound, resonant, anti-resonant).
    Spectrum(SpectrumArgs),
    /// Spectral identity checks on a model or on seeded random models.
    Verify(VerifyArgs),
    /// Green's function elements or transmission on an energy or lambda sweep.
    Greens(GreensArgs),
    /// Survival amplitude <d_j| e^{-iHt} |d_i>.
    Survival(SurvivalArgs),
    /// Escape amplitude into a lead site or a lead momentum state.
    Escape(EscapeArgs),
    /// Gaussian wave packet launched from a lead.
    Packet(PacketArgs),
}

/// Time-domain evaluation method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMethod {
    /// Bound residues plus band quadrature.
    Quadrature,
    /// Pole residues plus branch terms.
    Poles,
    /// Truncated-lattice propagation.
    Oracle,
}

/// Branch-term evaluation for the poles method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Leading t^{-3/2} saddle term.
    Saddle,
    /// Full steepest-descent integral.
    Descent,
}

impl From<Branch> for BranchMode {
    fn from(b: Branch) -> Self {
        match b {
            Branch::Saddle => BranchMode::Saddle,
            Branch::Descent => BranchMode::Descent,
        }
    }
}

/// `spectrum` arguments.
#[derive(Args, Debug, Clone, Serialize)]
pub struct SpectrumArgs {
    /// Model file.
    pub model: PathBuf,
}

/// `verify` arguments.
#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    /// Model file (omit with --random).
    pub model: Option<PathBuf>,
    /// Check this many seeded random models instead.
    #[arg(long)]
    pub random: Option<usize>,
    /// Largest number of dot sites for random models.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Seed for random models.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Green's function evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GreensMethod {
    /// Discrete-state expansion.
    Expansion,
    /// Direct inversion of E - H_eff.
    Direct,
    /// Truncated-lattice resolvent.
    Oracle,
}

/// Sheet selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SheetArg {
    /// |lambda| < 1 (retarded on the band).
    First,
    /// |lambda| > 1.
    Second,
}

/// `greens` arguments.
#[derive(Args, Debug, Clone, Serialize)]
pub struct GreensArgs {
    /// Model file.
    pub model: PathBuf,
    /// Real energies (grid syntax).
    #[arg(long = "E", alias = "energy", conflicts_with = "lambda", allow_hyphen_values = true)]
    pub energies: Option<String>,
    /// Complex lambda values, comma separated (e.g. 0.5+0.2i,-0.3i).
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
    /// Element `a,b`; dot sites by number, lead sites as LABEL:x. Repeatable.
    #[arg(long = "element")]
    pub elements: Vec<String>,
    /// Transmission between two leads, `IN,OUT` labels; writes `E,k,T`.
    #[arg(long)]
    pub transmission: Option<String>,
    /// Evaluation method.
    #[arg(long, value_enum, default_value_t = GreensMethod::Expansion)]
    pub method: GreensMethod,
    /// Add a column with |expansion - direct| per element.
    #[arg(long)]
    pub compare: bool,
    /// Sheet for real energies.
    #[arg(long, value_enum, default_value_t = SheetArg::First)]
    pub sheet: SheetArg,
    /// Lead length for the oracle.
    #[arg(long, default_value_t = 300)]
    pub lead_length: u32,
}

/// `survival` arguments.
#[derive(Args, Debug, Clone, Serialize)]
pub struct SurvivalArgs {
    /// Model file.
    pub model: PathBuf,
    /// Source dot site.
    #[arg(long, default_value_t = 1)]
    pub i: usize,
    /// Sink dot site (defaults to the source).
    #[arg(long)]
    pub j: Option<usize>,
    /// Times (grid syntax).
    #[arg(long, allow_hyphen_values = true)]
    pub t: String,
    /// Method.
    #[arg(long, value_enum, default_value_t = TimeMethod::Quadrature)]
    pub method: TimeMethod,
    /// Also write the pole term groups (poles method).
    #[arg(long)]
    pub groups: bool,
    /// Branch-term evaluation (poles method).
    #[arg(long, value_enum, default_value_t = Branch::Saddle)]
    pub branch: Branch,
    /// Lead length for the oracle.
    #[arg(long, default_value_t = 600)]
    pub lead_length: u32,
}

/// `escape` arguments.
#[derive(Args, Debug, Clone, Serialize)]
pub struct EscapeArgs {
    /// Model file.
    pub model: PathBuf,
    /// Lead label.
    #[arg(long)]
    pub lead: String,
    /// Lead site.
    #[arg(long, conflicts_with = "k", required_unless_present = "k")]
    pub x: Option<u32>,
    /// Momentum of the lead state sqrt(2) sin(kx), 0 < k < pi.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<f64>,
    /// Source dot site.
    #[arg(long, default_value_t = 1)]
    pub i: usize,
    /// Times (grid syntax).
    #[arg(long, allow_hyphen_values = true)]
    pub t: String,
    /// Method.
    #[arg(long, value_enum, default_value_t = TimeMethod::Quadrature)]
    pub method: TimeMethod,
    /// Also write the pole term groups (poles method).
    #[arg(long)]
    pub groups: bool,
    /// Branch-term evaluation (poles method).
    #[arg(long, value_enum, default_value_t = Branch::Saddle)]
    pub branch: Branch,
    /// Lead length for the oracle.
    #[arg(long, default_value_t = 600)]
    pub lead_length: u32,
}

/// Packet evaluation method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PacketMethod {
    /// Band quadrature (with optional per-state components).
    Quadrature,
    /// Truncated-lattice propagation.
    Oracle,
}

/// `packet` arguments.
#[derive(Args, Debug, Clone, Serialize)]
pub struct PacketArgs {
    /// Model file.
    pub model: PathBuf,
    /// Lead carrying the initial packet (default: first lead).
    #[arg(long)]
    pub lead: Option<String>,
    /// Packet center.
    #[arg(long, default_value_t = 40.0, allow_hyphen_values = true)]
    pub x0: f64,
    /// Packet width.
    #[arg(long, default_value_t = 10.0)]
    pub width: f64,
    /// Packet momentum.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub k0: f64,
    /// Last lead site written.
    #[arg(long, default_value_t = 200)]
    pub x_max: u32,
    /// Times (grid syntax).
    #[arg(long, allow_hyphen_values = true)]
    pub t: String,
    /// Write the free and per-class components as well.
    #[arg(long)]
    pub components: bool,
    /// Method.
    #[arg(long, value_enum, default_value_t = PacketMethod::Quadrature)]
    pub method: PacketMethod,
    /// Lead length for the oracle.
    #[arg(long, default_value_t = 800)]
    pub lead_length: u32,
}

/// Result of one run.
#[derive(Debug)]
pub struct RunOutput {
    /// Data file contents.
    pub data: Vec<u8>,
    /// Manifest.
    pub manifest: RunManifest,
    /// Messages for stderr.
    pub messages: Vec<String>,
    /// Set when the run produced output but a check failed.
    pub failure: Option<String>,
}

/// Default quadrature tolerance for time evolution.
pub const DEFAULT_TIME_TOL: f64 = 1e-11;
/// Default tolerance for verification checks.
pub const DEFAULT_VERIFY_TOL: f64 = 1e-9;

struct Ctx {
    format: Format,
    allow_warnings: bool,
    jobs: usize,
    messages: Vec<String>,
    failure: Option<String>,
    tolerances: BTreeMap<String, f64>,
}

/// Number of workers: `--jobs`, then `RESONANCE_KIT_JOBS`, then all cores.
pub fn resolve_jobs(cli: &Cli) -> usize {
    cli.jobs
        .filter(|&j| j > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> KitResult<RunOutput> {
    let start = Instant::now();
    let jobs = resolve_jobs(cli);
    let mut ctx = Ctx {
        format: cli.format,
        allow_warnings: cli.allow_warnings,
        jobs,
        messages: Vec::new(),
        failure: None,
        tolerances: BTreeMap::new(),
    };
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(KitError::Input(format!("--tol must be positive, got {t}")));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| KitError::Input(format!("cannot start {jobs} workers: {e}")))?;
    let (name, model_path, data) = pool.install(|| -> KitResult<_> {
        Ok(match &cli.command {
            Command::Spectrum(a) => ("spectrum", Some(&a.model), cmd_spectrum(&mut ctx, a)?),
            Command::Verify(a) => ("verify", a.model.as_ref(), cmd_verify(&mut ctx, cli, a)?),
            Command::Greens(a) => ("greens", Some(&a.model), cmd_greens(&mut ctx, a)?),
            Command::Survival(a) => ("survival", Some(&a.model), cmd_survival(&mut ctx, cli, a)?),
            Command::Escape(a) => ("escape", Some(&a.model), cmd_escape(&mut ctx, cli, a)?),
            Command::Packet(a) => ("packet", Some(&a.model), cmd_packet(&mut ctx, cli, a)?),
        })
    })?;
    let parameters = serde_json::to_value(cli).expect("arguments serialize");
    let manifest = RunManifest {
        command: name.to_string(),
        model_path: model_path.map(|p| p.display().to_string()),
        parameters,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        tolerances: ctx.tolerances,
        jobs,
    };
    Ok(RunOutput { data, manifest, messages: ctx.messages, failure: ctx.failure })
}

fn solve(model: &OpenLatticeModel) -> KitResult<SpectralSolution> {
    Ok(solve_discrete_states(model)?)
}

fn dot_index(model: &OpenLatticeModel, one_based: usize, flag: &str) -> KitResult<usize> {
    if one_based == 0 || one_based > model.n_sites() {
        return Err(KitError::Input(format!("--{flag} {one_based} is not a dot site (1..={})", model.n_sites())));
    }
    Ok(one_based - 1)
}

fn cmd_spectrum(ctx: &mut Ctx, a: &SpectrumArgs) -> KitResult<Vec<u8>> {
    let model = load_model(&a.model)?;
    match solve_discrete_states(&model) {
        Ok(sol) => match ctx.format {
            Format::Csv => output::spectrum_csv(&sol),
            Format::Json => Ok(output::spectrum_json(&sol)),
        },
        Err(CoreError::DegenerateSpectrum { gap }) if ctx.allow_warnings => {
            ctx.messages.push(format!(
                "warning: degenerate spectrum (relative gap {gap:e}); eigenvalues from det Z roots, no eigenvectors"
            ));
            let mut roots = det_z_roots(&model)?.roots;
            roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            let rows: Vec<_> = roots
                .iter()
                .enumerate()
                .map(|(n, &l)| output::spectrum_row(n, l, resonance_core::model::energy_of(l), classify(l), f64::NAN))
                .collect();
            match ctx.format {
                Format::Csv => {
                    let header: Vec<String> = output::SPECTRUM_HEADER.iter().map(|s| s.to_string()).collect();
                    output::csv_bytes(&header, rows)
                }
                Format::Json => Ok(output::json_bytes(&json!({
                    "states": roots.iter().enumerate().map(|(n, &l)| json!({
                        "n": n + 1,
                        "lambda": output::jc(l),
                        "energy": output::jc(resonance_core::model::energy_of(l)),
                        "class": classify(l).name(),
                        "norm_residual": null,
                    })).collect::<Vec<_>>(),
                    "degenerate": true,
                }))),
            }
        }
        Err(e) => Err(e.into()),
    }
}

/// Outcome of one verification check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    /// Check name.
    pub name: &'static str,
    /// `PASS`, `FAIL` or `SKIP`.
    pub status: &'static str,
    /// Measured value (NaN when skipped).
    pub value: f64,
    /// Explanation for skipped checks.
    pub note: String,
}

/// The five spectral identity checks on one model.
pub fn verify_model(model: &OpenLatticeModel, tol: f64, seed: u64) -> KitResult<Vec<Check>> {
    let sol = solve(model)?;
    let status = |v: f64| if v <= tol { "PASS" } else { "FAIL" };
    let mut out = Vec::new();
    let incomplete = sol.require_complete().err().map(|e| e.to_string());
    let skip = |name, note: &str| Check { name, status: "SKIP", value: f64::NAN, note: note.to_string() };

    match verify_resolution_of_unity(&sol) {
        Ok(r) => out.push(Check { name: "unity", status: status(r.max_abs), value: r.max_abs, note: String::new() }),
        Err(e) => out.push(skip("unity", &e.to_string())),
    }
    let b = sol.diagnostics.max_biorthonormality_error;
    out.push(Check { name: "biorthonormality", status: status(b), value: b, note: String::new() });

    let p = QuadraticPencil::new(model);
    let mut pencil = sol.diagnostics.max_pencil_residual;
    for l in [C64::new(0.3, 0.7), C64::new(-1.2, 0.4), C64::new(0.0, 2.0)] {
        pencil = pencil.max(p.identity_residual_y1(l)).max(p.identity_residual_y2(l));
    }
    out.push(Check { name: "pencil", status: status(pencil), value: pencil, note: String::new() });

    if let Some(why) = &incomplete {
        out.push(skip("retarded_advanced", why));
        out.push(skip("expansion_vs_inverse", why));
        return Ok(out);
    }
    let mut ra: f64 = 0.0;
    for j in 0..20 {
        let e = -1.95 + 3.9 * (j as f64 + 0.5) / 20.0;
        let k = (-e / 2.0).acos();
        let gr = g_eff_direct(model, &SheetPoint::from_k(C64::from(k))?)?;
        let ga = g_eff_direct(model, &SheetPoint::from_k(C64::from(-k))?)?;
        ra = ra.max(max_abs(&(g_retarded_advanced_sum(&sol, e)? - gr - ga)));
    }
    out.push(Check { name: "retarded_advanced", status: status(ra), value: ra, note: String::new() });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ex: f64 = 0.0;
    let mut count = 0;
    while count < 50 {
        let l = C64::from_polar(rng.gen_range(0.1..3.0), rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        if sol.states.iter().any(|s| (s.lambda - l).norm() < 1e-3) {
            continue;
        }
        let d = g_eff_direct(model, &SheetPoint::from_lambda(l)?)?;
        let e = g_eff_expanded(&sol, l)?;
        ex = ex.max(max_abs(&(d.clone() - e)) / max_abs(&d).max(1.0));
        count += 1;
    }
    out.push(Check { name: "expansion_vs_inverse", status: status(ex), value: ex, note: String::new() });
    Ok(out)
}

fn cmd_verify(ctx: &mut Ctx, cli: &Cli, a: &VerifyArgs) -> KitResult<Vec<u8>> {
    let tol = cli.tol.unwrap_or(DEFAULT_VERIFY_TOL);
    ctx.tolerances.insert("verify".into(), tol);
    let models: Vec<(String, OpenLatticeModel)> = match (&a.model, a.random) {
        (Some(_), Some(_)) => return Err(KitError::Input("give either a model file or --random, not both".into())),
        (None, None) => return Err(KitError::Input("verify needs a model file or --random N".into())),
        (Some(p), None) => vec![(p.display().to_string(), load_model(p)?)],
        (None, Some(count)) => {
            if a.n == 0 {
                return Err(KitError::Input("--n must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let mut v = Vec::with_capacity(count);
            let mut draws = 0usize;
            while v.len() < count {
                draws += 1;
                let n = rng.gen_range(1..=a.n);
                let m = OpenLatticeModel::random(n, || rng.gen::<f64>())?;
                // degenerate draws are skipped, as a random model almost never is one
                if let Err(CoreError::DegenerateSpectrum { .. }) = solve_discrete_states(&m) {
                    continue;
                }
                v.push((format!("random#{draws}"), m));
            }
            v
        }
    };
    let results: Vec<KitResult<Vec<Check>>> =
        models.par_iter().enumerate().map(|(k, (_, m))| verify_model(m, tol, a.seed.wrapping_add(k as u64))).collect();
    let mut rows = Vec::new();
    let mut passed = 0;
    for ((name, _), r) in models.iter().zip(results) {
        let checks = r?;
        if checks.iter().all(|c| c.status != "FAIL") {
            passed += 1;
        }
        for c in checks {
            rows.push((name.clone(), c));
        }
    }
    let total = models.len();
    let summary = format!("{passed}/{total} PASS");
    ctx.messages.push(summary.clone());
    if passed < total {
        ctx.failure = Some(format!("verification failed: {summary}"));
    }
    match ctx.format {
        Format::Csv => {
            let header: Vec<String> = ["model", "check", "status", "value", "tol", "note"].iter().map(|s| s.to_string()).collect();
            output::csv_bytes(
                &header,
                rows.into_iter().map(|(m, c)| vec![m, c.name.into(), c.status.into(), num(c.value), num(tol), c.note]),
            )
        }
        Format::Json => Ok(output::json_bytes(&json!({
            "tol": tol,
            "passed": passed,
            "total": total,
            "checks": rows.iter().map(|(m, c)| json!({
                "model": m, "check": c.name, "status": c.status, "value": output::jnum(c.value), "note": c.note,
            })).collect::<Vec<_>>(),
        }))),
    }
}

fn parse_site(model: &OpenLatticeModel, s: &str) -> KitResult<(SiteRef, String)> {
    let s = s.trim();
    if let Some((label, x)) = s.split_once(':') {
        let lead = model.lead_index(label).map_err(|_| KitError::Input(format!("unknown lead '{label}'")))?;
        let x: u32 = x.parse().map_err(|_| KitError::Input(format!("bad lead site '{s}'")))?;
        if x == 0 {
            return Err(KitError::Input(format!("lead sites start at 1: '{s}'")));
        }
        Ok((SiteRef::Lead { lead, x }, format!("{label}{x}")))
    } else {
        let i: usize = s.parse().map_err(|_| KitError::Input(format!("bad site '{s}'")))?;
        Ok((SiteRef::Dot(dot_index(model, i, "element")?), i.to_string()))
    }
}

fn cmd_greens(ctx: &mut Ctx, a: &GreensArgs) -> KitResult<Vec<u8>> {
    let model = load_model(&a.model)?;
    let sol = solve(&model)?;
    if let Some(pair) = &a.transmission {
        let (li, lo) = pair
            .split_once(',')
            .ok_or_else(|| KitError::Input("--transmission expects IN,OUT".into()))?;
        let lead_in = model.lead_index(li.trim()).map_err(|_| KitError::Input(format!("unknown lead '{li}'")))?;
        let lead_out = model.lead_index(lo.trim()).map_err(|_| KitError::Input(format!("unknown lead '{lo}'")))?;
        let es = parse_grid(a.energies.as_deref().ok_or_else(|| KitError::Input("--transmission needs --E".into()))?)?;
        let rows: Vec<KitResult<(f64, f64, f64)>> = es
            .par_iter()
            .map(|&e| {
                let t = transmission(&model, &sol, e, lead_in, lead_out)?;
                Ok((e, (-e / 2.0).acos(), t))
            })
            .collect();
        let rows = rows.into_iter().collect::<KitResult<Vec<_>>>()?;
        return match ctx.format {
            Format::Csv => output::csv_bytes(
                &["E".into(), "k".into(), "T".into()],
                rows.iter().map(|(e, k, t)| vec![num(*e), num(*k), num(*t)]),
            ),
            Format::Json => Ok(output::json_bytes(&json!({
                "transmission": rows.iter().map(|(e, k, t)| json!({"E": e, "k": k, "T": t})).collect::<Vec<_>>()
            }))),
        };
    }
    if a.elements.is_empty() {
        return Err(KitError::Input("greens needs --element a,b (repeatable) or --transmission IN,OUT".into()));
    }
    let mut elems = Vec::new();
    for e in &a.elements {
        let (x, y) = e.split_once(',').ok_or_else(|| KitError::Input(format!("--element expects a,b: '{e}'")))?;
        let (sa, na) = parse_site(&model, x)?;
        let (sb, nb) = parse_site(&model, y)?;
        elems.push((sa, sb, format!("{na}_{nb}")));
    }
    let points: Vec<SheetPoint> = match (&a.energies, &a.lambda) {
        (Some(es), None) => {
            let sheet = match a.sheet {
                SheetArg::First => Sheet::First,
                SheetArg::Second => Sheet::Second,
            };
            parse_grid(es)?
                .into_iter()
                .map(|e| lambda_from_energy(C64::from(e), sheet).map_err(KitError::from))
                .collect::<KitResult<_>>()?
        }
        (None, Some(ls)) => parse_complex_list(ls)?
            .into_iter()
            .map(|l| SheetPoint::from_lambda(l).map_err(KitError::from))
            .collect::<KitResult<_>>()?,
        _ => return Err(KitError::Input("greens needs exactly one of --E or --lambda".into())),
    };
    let oracle = match a.method {
        GreensMethod::Oracle => Some(truncate(&model, a.lead_length)?),
        _ => None,
    };
    let eval = |p: &SheetPoint| -> KitResult<Vec<(C64, Option<f64>)>> {
        let expanded = g_eff_expanded(&sol, p.lambda)?;
        let direct = g_eff_direct(&model, p)?;
        let mut row = Vec::new();
        for (sa, sb, _) in &elems {
            let v = match a.method {
                GreensMethod::Expansion => lattice_element(&model, &expanded, p.lambda, *sa, *sb)?,
                GreensMethod::Direct => lattice_element(&model, &direct, p.lambda, *sa, *sb)?,
                GreensMethod::Oracle => {
                    if p.energy.im == 0.0 && p.energy.re.abs() < 2.0 {
                        return Err(KitError::Input(format!(
                            "the truncated lattice has no continuum at real E = {} in the band; use --lambda inside the unit circle",
                            p.energy.re
                        )));
                    }
                    oracle.as_ref().expect("oracle built").resolvent_element(p.energy, *sa, *sb)?
                }
            };
            let diff = if a.compare {
                let e = lattice_element(&model, &expanded, p.lambda, *sa, *sb)?;
                let d = lattice_element(&model, &direct, p.lambda, *sa, *sb)?;
                Some((e - d).norm())
            } else {
                None
            };
            row.push((v, diff));
        }
        Ok(row)
    };
    let values: Vec<KitResult<_>> = points.par_iter().map(eval).collect();
    let values = values.into_iter().collect::<KitResult<Vec<_>>>()?;
    let by_energy = a.energies.is_some();
    match ctx.format {
        Format::Csv => {
            let mut header: Vec<String> =
                if by_energy { vec!["E".into()] } else { ["re_lambda", "im_lambda", "re_E", "im_E"].map(String::from).to_vec() };
            for (_, _, n) in &elems {
                header.push(format!("re_G_{n}"));
                header.push(format!("im_G_{n}"));
                if a.compare {
                    header.push(format!("diff_G_{n}"));
                }
            }
            let rows = points.iter().zip(&values).map(|(p, row)| {
                let mut r = if by_energy {
                    vec![num(p.energy.re)]
                } else {
                    vec![num(p.lambda.re), num(p.lambda.im), num(p.energy.re), num(p.energy.im)]
                };
                for (v, d) in row {
                    r.push(num(v.re));
                    r.push(num(v.im));
                    if let Some(d) = d {
                        r.push(num(*d));
                    }
                }
                r
            });
            output::csv_bytes(&header, rows)
        }
        Format::Json => Ok(output::json_bytes(&json!({
            "method": format!("{:?}", a.method).to_lowercase(),
            "points": points.iter().zip(&values).map(|(p, row)| {
                let mut o = serde_json::Map::new();
                o.insert("lambda".into(), output::jc(p.lambda));
                o.insert("E".into(), output::jc(p.energy));
                for ((_, _, n), (v, d)) in elems.iter().zip(row) {
                    o.insert(format!("G_{n}"), output::jc(*v));
                    if let Some(d) = d {
                        o.insert(format!("diff_G_{n}"), output::jnum(*d));
                    }
                }
                serde_json::Value::Object(o)
            }).collect::<Vec<_>>(),
        }))),
    }
}

/// Full-lattice element built from a dot block `g`.
///
/// Lead sites need `|lambda| <= 1`; on the unit circle this is the
/// boundary value of the retarded (first sheet) function.
fn lattice_element(model: &OpenLatticeModel, g: &CMatrix, lambda: C64, a: SiteRef, b: SiteRef) -> KitResult<C64> {
    let on_lead = matches!(a, SiteRef::Lead { .. }) || matches!(b, SiteRef::Lead { .. });
    if on_lead && lambda.norm() > 1.0 + 1e-12 {
        return Err(CoreError::UnitCircleLambda(lambda.norm()).into());
    }
    let factor = |s: SiteRef| -> KitResult<(usize, C64)> {
        Ok(match s {
            SiteRef::Dot(i) => (i, C64::from(1.0)),
            SiteRef::Lead { lead, x } => {
                let l = model.lead(lead)?;
                (l.site, lambda.powu(x) * l.coupling)
            }
        })
    };
    let (i, fa) = factor(a)?;
    let (j, fb) = factor(b)?;
    let mut v = fa * g[(i, j)] * fb;
    if let (SiteRef::Lead { lead: la, x }, SiteRef::Lead { lead: lb, x: y }) = (a, b) {
        if la == lb {
            v += lead_green_unchecked(lambda, x, y);
        }
    }
    Ok(v)
}

fn chunked<F>(ctx: &Ctx, times: &[f64], f: F) -> KitResult<AmplitudeSeries>
where
    F: Fn(&[f64]) -> Result<AmplitudeSeries, CoreError> + Sync,
{
    let size = times.len().div_ceil(ctx.jobs * 4).max(1);
    let parts: Vec<Result<AmplitudeSeries, CoreError>> = times.par_chunks(size).map(&f).collect();
    let mut out: Option<AmplitudeSeries> = None;
    for p in parts {
        let p = p?;
        match &mut out {
            None => out = Some(p),
            Some(o) => {
                o.times.extend(p.times);
                o.values.extend(p.values);
                o.warnings.extend(p.warnings);
                if let (Some(g), Some(h)) = (&mut o.groups, p.groups) {
                    extend_groups(g, h);
                }
            }
        }
    }
    out.ok_or_else(|| KitError::Input("empty time grid".into()))
}

fn extend_groups(g: &mut TermGroups, h: TermGroups) {
    g.resonant_or_ar.extend(h.resonant_or_ar);
    g.bound_ab.extend(h.bound_ab);
    g.branch_power.extend(h.branch_power);
    g.plane_wave.extend(h.plane_wave);
}

fn oracle_series(times: &[f64], values: Vec<C64>) -> AmplitudeSeries {
    AmplitudeSeries { times: times.to_vec(), values, method: time::Method::Oracle, groups: None, warnings: Vec::new() }
}

fn emit_series(ctx: &mut Ctx, s: &AmplitudeSeries, groups: bool, plane: bool) -> KitResult<Vec<u8>> {
    for w in &s.warnings {
        ctx.messages.push(match w {
            Warning::SaddleOverlap { state, t } => format!(
                "warning: t = {t}: state {} is close to a band edge, the saddle branch term is unreliable (try --branch descent)",
                state + 1
            ),
            Warning::Cancellation { t, peak } => {
                format!("warning: t = {t}: descent integrand reaches {peak:.3e}, result limited by round-off")
            }
        });
    }
    match ctx.format {
        Format::Csv => output::amplitude_csv(s, groups, plane),
        Format::Json => Ok(output::amplitude_json(s, groups, plane)),
    }
}

fn check_groups(method: TimeMethod, groups: bool) -> KitResult<()> {
    if groups && method != TimeMethod::Poles {
        return Err(KitError::Input("--groups needs --method poles".into()));
    }
    Ok(())
}

fn time_tol(ctx: &mut Ctx, cli: &Cli) -> f64 {
    let tol = cli.tol.unwrap_or(DEFAULT_TIME_TOL);
    ctx.tolerances.insert("quadrature".into(), tol);
    tol
}

fn cmd_survival(ctx: &mut Ctx, cli: &Cli, a: &SurvivalArgs) -> KitResult<Vec<u8>> {
    check_groups(a.method, a.groups)?;
    let model = load_model(&a.model)?;
    let i = dot_index(&model, a.i, "i")?;
    let j = dot_index(&model, a.j.unwrap_or(a.i), "j")?;
    let times = parse_grid(&a.t)?;
    let tol = time_tol(ctx, cli);
    let series = match a.method {
        TimeMethod::Quadrature => {
            let sol = solve(&model)?;
            chunked(ctx, &times, |c| time::survival_amplitude_quadrature(&model, &sol, i, j, c, tol))?
        }
        TimeMethod::Poles => {
            let sol = solve(&model)?;
            chunked(ctx, &times, |c| time::survival_amplitude_poles(&sol, i, j, c, a.branch.into()))?
        }
        TimeMethod::Oracle => {
            let ex = ExactPropagator::new(truncate(&model, a.lead_length)?);
            oracle_series(&times, ex.element(SiteRef::Dot(j), SiteRef::Dot(i), &times)?)
        }
    };
    emit_series(ctx, &series, a.groups, false)
}

fn cmd_escape(ctx: &mut Ctx, cli: &Cli, a: &EscapeArgs) -> KitResult<Vec<u8>> {
    check_groups(a.method, a.groups)?;
    let model = load_model(&a.model)?;
    let lead = model.lead_index(&a.lead).map_err(|_| KitError::Input(format!("unknown lead '{}'", a.lead)))?;
    let i = dot_index(&model, a.i, "i")?;
    let times = parse_grid(&a.t)?;
    let tol = time_tol(ctx, cli);
    let series = match (a.x, a.k, a.method) {
        (Some(x), _, TimeMethod::Quadrature) => {
            let sol = solve(&model)?;
            chunked(ctx, &times, |c| time::escaping_amplitude_x_quadrature(&model, &sol, lead, x, i, c, tol))?
        }
        (Some(x), _, TimeMethod::Poles) => {
            let sol = solve(&model)?;
            chunked(ctx, &times, |c| time::escaping_amplitude_x(&model, &sol, lead, x, i, c, a.branch.into()))?
        }
        (Some(x), _, TimeMethod::Oracle) => {
            let ex = ExactPropagator::new(truncate(&model, a.lead_length)?);
            oracle_series(&times, ex.element(SiteRef::Lead { lead, x }, SiteRef::Dot(i), &times)?)
        }
        (None, Some(k), TimeMethod::Poles) => {
            let sol = solve(&model)?;
            chunked(ctx, &times, |c| time::escaping_amplitude_k(&model, &sol, lead, k, i, c, a.branch.into()))?
        }
        (None, Some(k), TimeMethod::Oracle) => {
            if !(k > 0.0 && k < std::f64::consts::PI) {
                return Err(CoreError::BandEdgeK(k).into());
            }
            let ex = ExactPropagator::new(truncate(&model, a.lead_length)?);
            let mut init = CVector::zeros(ex.system.dim());
            init[i] = C64::from(1.0);
            let rows: Vec<usize> = (1..=a.lead_length)
                .map(|x| ex.system.index(SiteRef::Lead { lead, x }))
                .collect::<Result<_, _>>()?;
            let fields = ex.propagate(&init, &times, 0)?;
            let values = fields
                .iter()
                .map(|f| {
                    rows.iter()
                        .enumerate()
                        .map(|(xi, &r)| f[r] * (std::f64::consts::SQRT_2 * (k * (xi + 1) as f64).sin()))
                        .sum()
                })
                .collect();
            oracle_series(&times, values)
        }
        (None, Some(_), TimeMethod::Quadrature) => {
            return Err(KitError::Input("escape into a momentum state (--k) needs --method poles or oracle".into()))
        }
        (None, None, _) => return Err(KitError::Input("escape needs --x or --k".into())),
    };
    emit_series(ctx, &series, a.groups, a.k.is_some())
}

fn cmd_packet(ctx: &mut Ctx, cli: &Cli, a: &PacketArgs) -> KitResult<Vec<u8>> {
    let model = load_model(&a.model)?;
    let lead = match &a.lead {
        Some(l) => model.lead_index(l).map_err(|_| KitError::Input(format!("unknown lead '{l}'")))?,
        None => 0,
    };
    let packet = GaussianPacket { lead, x0: a.x0, width: a.width, k0: a.k0 };
    let times = parse_grid(&a.t)?;
    let tol = time_tol(ctx, cli);
    if a.components && a.method != PacketMethod::Quadrature {
        return Err(KitError::Input("--components needs --method quadrature".into()));
    }
    let (frames, sol) = match a.method {
        PacketMethod::Quadrature => {
            let sol = solve(&model)?;
            let size = times.len().div_ceil(ctx.jobs).max(1);
            let parts: Vec<Result<Vec<PacketFrame>, CoreError>> = times
                .par_chunks(size)
                .map(|c| {
                    if a.components {
                        time::packet_evolve_with_components(&model, &sol, &packet, c, a.x_max, tol)
                    } else {
                        time::packet_evolve(&model, &sol, &packet, c, a.x_max, tol)
                    }
                })
                .collect();
            let mut frames = Vec::with_capacity(times.len());
            for p in parts {
                frames.extend(p?);
            }
            (frames, Some(sol))
        }
        PacketMethod::Oracle => (oracle_packet(&model, &packet, &times, a.x_max, a.lead_length)?, None),
    };
    match ctx.format {
        Format::Csv => output::packet_csv(&model, &frames, sol.as_ref()),
        Format::Json => Ok(output::packet_json(&model, &frames, sol.as_ref())),
    }
}

/// Packet totals on the truncated lattice.
pub fn oracle_packet(
    model: &OpenLatticeModel,
    packet: &GaussianPacket,
    times: &[f64],
    x_max: u32,
    lead_length: u32,
) -> KitResult<Vec<PacketFrame>> {
    if x_max > lead_length {
        return Err(KitError::Input(format!("--x-max {x_max} exceeds the oracle lead length {lead_length}")));
    }
    let ex = ExactPropagator::new(truncate(model, lead_length)?);
    let mut init = CVector::zeros(ex.system.dim());
    for (x, w) in packet.amplitudes()?.iter().enumerate() {
        let x = x as u32 + 1;
        if x > lead_length {
            break;
        }
        init[ex.system.index(SiteRef::Lead { lead: packet.lead, x })?] = *w;
    }
    let fields = ex.propagate(&init, times, x_max)?;
    let n = model.n_sites();
    let nl = model.leads().len();
    fields
        .iter()
        .zip(times)
        .map(|(f, &t)| {
            let mut field = SiteField::zeros(n, nl, x_max);
            for i in 0..n {
                field.dot[i] = f[i];
            }
            for b in 0..nl {
                for x in 1..=x_max {
                    field.leads[b][x as usize - 1] = f[ex.system.index(SiteRef::Lead { lead: b, x })?];
                }
            }
            Ok(PacketFrame { time: t, total: field, components: None })
        })
        .collect()
}
