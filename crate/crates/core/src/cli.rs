//! Scenario runner: parses a config, runs one experiment, writes CSV tables,
//! field dumps and a manifest.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num::BigRational;

use crate::config::{LatticeInput, ScenarioConfig};
use crate::diagnostics::REPORT_HEADER;
use crate::error::{Error, Result};
use crate::hk::{self, BBLattice, MirrorData};
use crate::io::{self, fmt, RunRecorder};
use crate::ma_solver::{continuation, solve, MASolveResult, ModelData};
use crate::par;
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_ACCEPTANCE: i32 = 3;

pub const OUT_ENV: &str = "COLLAPSELAB_OUT";

#[derive(Debug, Parser)]
#[command(name = "collapselab", version, about = "Collapsing Ricci-flat metrics on torus fibrations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario config (JSON, schema collapselab/v1).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; the COLLAPSELAB_OUT environment variable takes precedence.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Single thread, bitwise reproducible.
    #[arg(long)]
    pub serial: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the config seeds.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// One Monge-Ampere solve at the first scheduled t, with field dumps.
    Solve(RunArgs),
    /// Continuation over the schedule and the collapse report.
    CollapseSweep(RunArgs),
    /// Distance, distortion and ball-volume experiments.
    Gh(RunArgs),
    /// Mirror-map sweeps and the large complex structure path table.
    Mirror(RunArgs),
    /// The acceptance suite.
    Verify(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::CollapseSweep(_) => "collapse-sweep",
            Command::Gh(_) => "gh",
            Command::Mirror(_) => "mirror",
            Command::Verify(_) => "verify",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Solve(a) | Command::CollapseSweep(a) | Command::Gh(a) | Command::Mirror(a) | Command::Verify(a) => a,
        }
    }
}

/// Precedence: environment, then `--out`, then the config, then `./out`.
pub fn resolve_out(env: Option<String>, flag: Option<&Path>, cfg: Option<&str>) -> PathBuf {
    if let Some(e) = env.filter(|e| !e.is_empty()) {
        return PathBuf::from(e);
    }
    if let Some(f) = flag {
        return f.to_path_buf();
    }
    PathBuf::from(cfg.unwrap_or("out"))
}

/// Parses and validates the config named by `args`, applying flag overrides.
pub fn load_config(args: &RunArgs) -> Result<(ScenarioConfig, String)> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = ScenarioConfig::parse(&text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
        cfg.diagnostics.seed = s;
    }
    if args.threads == Some(0) {
        return Err(Error::Config("--threads must be positive".into()));
    }
    Ok((cfg, text))
}

pub fn run_from_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(&cli.command),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cmd: &Command) -> i32 {
    let args = cmd.args();
    let (cfg, text) = match load_config(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("collapselab {}: {e}", cmd.name());
            return EXIT_VALIDATION;
        }
    };
    let threads = if args.serial { Some(1) } else { args.threads };
    if let Some(n) = threads {
        par::set_threads(n);
    }
    let out = resolve_out(std::env::var(OUT_ENV).ok(), args.out.as_deref(), cfg.out.as_deref());
    let mut rec = match RunRecorder::new(&out, cmd.name(), &text, threads.map_or("default".into(), |n| n.to_string())) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("collapselab {}: cannot prepare {}: {e}", cmd.name(), out.display());
            return EXIT_VALIDATION;
        }
    };
    let outcome = match cmd {
        Command::Solve(_) => run_solve(&cfg, &mut rec),
        Command::CollapseSweep(_) => run_sweep(&cfg, &mut rec),
        Command::Gh(_) => run_gh(&cfg, &mut rec),
        Command::Mirror(_) => run_mirror(&cfg, &mut rec),
        Command::Verify(_) => run_verify(&cfg, &mut rec),
    };
    match outcome {
        Ok(passed) => {
            let status = if passed { "ok" } else { "acceptance-failed" };
            if let Err(e) = rec.finish(status) {
                eprintln!("collapselab {}: {e}", cmd.name());
                return EXIT_NUMERICAL;
            }
            if passed {
                EXIT_OK
            } else {
                EXIT_ACCEPTANCE
            }
        }
        Err((stage, e)) => {
            eprintln!("collapselab {}: stage {stage} failed: {e}", cmd.name());
            if let Err(e2) = rec.fail(&stage, &e) {
                eprintln!("collapselab {}: {e2}", cmd.name());
            }
            match e {
                Error::Config(_) => EXIT_VALIDATION,
                _ => EXIT_NUMERICAL,
            }
        }
    }
}

type Staged<T> = std::result::Result<T, (String, Error)>;

const LOG_HEADER: [&str; 5] = ["t", "iter", "residual_Linf", "damping", "min_eig"];

fn log_rows(results: &[MASolveResult]) -> Vec<Vec<String>> {
    results.iter().flat_map(|r| r.log.iter().map(|l| vec![fmt(l.t), l.iter.to_string(), fmt(l.residual_linf), fmt(l.damping), fmt(l.min_eig)])).collect()
}

fn write_table(rec: &mut RunRecorder, name: &str, comment: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let p = rec.path(name);
    rec.register([p.clone()]);
    io::write_csv(&p, comment, header, rows)
}

fn run_solve(cfg: &ScenarioConfig, rec: &mut RunRecorder) -> Staged<bool> {
    let t = *cfg.t_schedule.first().ok_or_else(|| ("setup".to_string(), Error::Config("t_schedule is empty".into())))?;
    let data = rec.stage("setup", |_| ModelData::new(&cfg.model.build()))?;
    let res = rec.stage("solve", |_| {
        let p = data.problem(t)?;
        solve(&p, &crate::grid::GridField::zeros(&data.chart.grid), &cfg.solver)
    })?;
    rec.stage("write", |rec| {
        write_table(rec, "iterations.csv", "L_inf residual of log det ratio per accepted newton step; min_eig of the iterate metric", &LOG_HEADER, &log_rows(std::slice::from_ref(&res)))?;
        let dir = rec.dir.clone();
        let files = io::write_scalar_field(&dir, "phi", &res.phi)?;
        rec.register(files);
        let files = io::write_hermitian_field(&dir, "metric", &res.metric)?;
        rec.register(files);
        Ok(())
    })?;
    Ok(true)
}

fn run_sweep(cfg: &ScenarioConfig, rec: &mut RunRecorder) -> Staged<bool> {
    let model = cfg.model.build();
    let data = rec.stage("setup", |_| ModelData::new(&model))?;
    let results = rec.stage("continuation", |rec| {
        let (results, err) = continuation(&data, &cfg.t_schedule, &cfg.solver);
        write_table(rec, "iterations.csv", "L_inf residual of log det ratio per accepted newton step; min_eig of the iterate metric", &LOG_HEADER, &log_rows(&results))?;
        match err {
            Some(e) => Err(e),
            None => Ok(results),
        }
    })?;
    let report = rec.stage("diagnostics", |_| crate::diagnostics::collapse_report(&model, &data, &results, &cfg.diagnostics.options()))?;
    rec.stage("write", |rec| {
        let rows: Vec<Vec<String>> = report.rows.iter().map(|r| vec![fmt(r.t), fmt(r.c_c2), fmt(r.flat_defect), fmt(r.curv_sup), fmt(r.osc_over_t), fmt(r.grad_over_t2), fmt(r.ricci_wp_residual)]).collect();
        write_table(rec, "collapse_report.csv", REPORT_HEADER, &["t", "C_c2", "flat_defect", "curv_sup", "osc_over_t", "grad_over_t2", "ricci_wp_residual"], &rows)?;
        let extra: Vec<Vec<String>> = report.rows.iter().map(|r| vec![fmt(r.t), fmt(r.sandwich_eps), fmt(r.lower_eps), fmt(r.metric_gap)]).collect();
        write_table(rec, "sandwich.csv", "eps(t) from generalized eigenvalues on K against the pulled-back limit metric", &["t", "sandwich_eps", "lower_eps", "metric_gap"], &extra)?;
        let dir = rec.dir.clone();
        for (k, r) in results.iter().enumerate() {
            let files = io::write_scalar_field(&dir, &format!("phi_{k}"), &r.phi)?;
            rec.register(files);
        }
        let files = io::write_scalar_field(&dir, "limit_potential", &report.limit.potential)?;
        rec.register(files);
        Ok(())
    })?;
    Ok(true)
}

fn run_gh(cfg: &ScenarioConfig, rec: &mut RunRecorder) -> Staged<bool> {
    let sweep = rec.stage("continuation", |_| verify::run_sweep(&cfg.model, &cfg.t_schedule, &cfg.solver, &cfg.diagnostics.options()))?;
    let study = rec.stage("distances", |_| verify::gh_study(&sweep, &cfg.model, &cfg.t_schedule, &cfg.solver, &cfg.gh))?;
    rec.stage("write", |rec| {
        let rows: Vec<Vec<String>> = study.pairs.iter().map(|p| vec![fmt(p.t), p.pair_id.to_string(), fmt(p.d_total_space), fmt(p.d_base), fmt(p.distortion)]).collect();
        let comment = format!("graph geodesics with stencil order {}; base metric is the extrapolated limit; pairs enumerate i < j over {} base nodes", cfg.gh.stencil_order, study.sample_size);
        write_table(rec, "gh_pairs.csv", &comment, &["t", "pair_id", "d_total_space", "d_base", "distortion"], &rows)?;
        let rows: Vec<Vec<String>> = study.per_t.iter().map(|p| vec![fmt(p.0), fmt(p.1), fmt(p.2), fmt(p.3), fmt(study.calibration)]).collect();
        write_table(rec, "gh_summary.csv", "distortion = max over pairs of pairs; margin = min d_t - exp(-eps/2) d_base", &["t", "distortion", "lower_eps", "lower_margin", "flat_calibration"], &rows)?;
        let rows: Vec<Vec<String>> = study.volumes.iter().map(|v| vec![fmt(v.t), fmt(v.r), fmt(v.v_ratio), fmt(v.prediction), fmt(v.rel_error)]).collect();
        write_table(rec, "gh_volumes.csv", "ball volume ratios Vol B(p,r) / Vol B(p,rbar) against the omega_M-mass of base balls", &["t", "r", "V_ratio", "mass_prediction", "rel_error"], &rows)?;
        Ok(())
    })?;
    Ok(true)
}

fn ratio_string(q: &BigRational) -> String {
    q.to_string()
}

fn run_mirror(cfg: &ScenarioConfig, rec: &mut RunRecorder) -> Staged<bool> {
    let m = &cfg.mirror;
    let sweeps = rec.stage("sweep", |_| m.k_values.iter().map(|&k| hk::mirror_sweep(k, m.samples, cfg.seed ^ (k as u64 + 1))).collect::<Result<Vec<_>>>())?;
    let path = rec.stage("path", |_| {
        let lat = BBLattice::standard(2, 0)?;
        let one = hk::rational(1, 1);
        let zero = hk::rational(0, 1);
        let data = MirrorData::new(lat, vec![1, 0, 0, 0], vec![one.clone(), one, zero.clone(), zero], 0.0)?;
        let w: Vec<BigRational> = m.omega.iter().map(|&v| hk::rational(v, 1)).collect();
        let wc: Vec<BigRational> = m.omega_check.iter().map(|&v| hk::rational(v, 1)).collect();
        let s0 = hk::rational(m.s0[0], m.s0[1]);
        m.path.iter().map(|p| hk::lcs_path(&hk::rational_path_parameter(p[0], p[1])?, &s0, &data, &w, &wc)).collect::<Result<Vec<_>>>()
    })?;
    let maps = match &m.lattice {
        Some(l) => Some(rec.stage("map", |_| map_classes(l))?),
        None => None,
    };
    rec.stage("write", |rec| {
        let rows: Vec<Vec<String>> = sweeps
            .iter()
            .map(|s| vec![(s.rank - 6).to_string(), s.rank.to_string(), s.samples.to_string(), fmt(s.max_isotropy), fmt(s.max_norm_identity), fmt(s.max_round_trip), fmt(s.max_re_im_orthogonality)])
            .collect();
        write_table(rec, "mirror_sweep.csv", "lattice U^3 + <-2>^k, E = e1, sigma = e1 + f1; float backend worst residuals", &["k", "rank", "samples", "max_isotropy", "max_norm_identity", "max_round_trip", "max_re_im_orthogonality"], &rows)?;
        let rows: Vec<Vec<String>> = path.iter().map(|p| {
            let mut row = vec![ratio_string(&p.t), ratio_string(&p.s)];
            row.extend(p.class.iter().map(ratio_string));
            row.push((p.affine_defect.iter().all(num::Zero::is_zero)).to_string());
            row
        }).collect();
        if let Some(maps) = &maps {
            let mut rows = Vec::new();
            let mut checks = Vec::new();
            for (id, (m, c)) in maps.iter().enumerate() {
                for (k, v) in m.iter().enumerate() {
                    rows.push(vec![id.to_string(), k.to_string(), fmt(v.re), fmt(v.im)]);
                }
                checks.push(vec![id.to_string(), c.member.to_string(), fmt(c.q_abs), fmt(c.q_conj), fmt(c.expected_q_conj), fmt(c.round_trip)]);
            }
            write_table(rec, "mirror_map.csv", "m(alpha) coefficients in the input lattice basis", &["alpha_id", "component", "re", "im"], &rows)?;
            write_table(rec, "mirror_residuals.csv", "q_conj should equal 2 q(Im alpha); round_trip is sup |m(m^-1(m(alpha))) - m(alpha)|", &["alpha_id", "period_domain", "abs_q", "q_conj", "two_q_im_alpha", "round_trip"], &checks)?;
        }
        write_table(rec, "mirror_path.csv", "exact rationals on U + U in the basis e1, f1, e2, f2; s = s0 sqrt((t+1)/t)", &["t", "s", "e1", "f1", "e2", "f2", "affine"], &rows)?;
        Ok(())
    })?;
    Ok(true)
}

struct MapCheck {
    member: bool,
    q_abs: f64,
    q_conj: f64,
    expected_q_conj: f64,
    round_trip: f64,
}

/// Input errors (degenerate lattice, failed preconditions) are reported as config errors.
fn map_classes(l: &LatticeInput) -> Result<Vec<(hk::CVec<f64>, MapCheck)>> {
    map_classes_inner(l).map_err(|e| Error::Config(format!("mirror.lattice: {e}")))
}

fn map_classes_inner(l: &LatticeInput) -> Result<Vec<(hk::CVec<f64>, MapCheck)>> {
    let n = l.gram.len();
    let lat = BBLattice::new(l.gram.concat(), n)?;
    let sigma: Vec<f64> = l.sigma.iter().map(|&v| v as f64).collect();
    let data = MirrorData::new(lat.clone(), l.e.clone(), sigma, 1e-12)?;
    l.alpha
        .iter()
        .map(|a| {
            let alpha: hk::CVec<f64> = a.re.iter().zip(&a.im).map(|(&x, &y)| hk::Cx::new(x, y)).collect();
            let m = data.mirror_map(&alpha)?;
            let pc = hk::in_period_domain(&lat, &m)?;
            let expected_q_conj = 2.0 * lat.q_real(&a.im, &a.im)?;
            let again = data.mirror_map(&data.inverse_mirror(&m)?.representative)?;
            let round_trip = again.iter().zip(&m).map(|(x, y)| x.sub(y).abs_f64()).fold(0.0, f64::max);
            Ok((m, MapCheck { member: pc.member, q_abs: pc.q_abs, q_conj: pc.q_conj, expected_q_conj, round_trip }))
        })
        .collect()
}

fn run_verify(cfg: &ScenarioConfig, rec: &mut RunRecorder) -> Staged<bool> {
    let report = rec.stage("suite", |_| verify::run_suite(cfg))?;
    for c in &report.checks {
        eprintln!("{}", c.line());
    }
    rec.stage("write", |rec| {
        let rows: Vec<Vec<String>> = report.checks.iter().map(|c| vec![c.criterion.to_string(), c.id.clone(), if c.passed { "PASS" } else { "FAIL" }.to_string(), c.detail.clone()]).collect();
        write_table(rec, "verify_summary.csv", "one row per acceptance check; wall clock is recorded in the manifest", &["criterion", "check", "status", "detail"], &rows)?;
        for c in &report.checks {
            if let Some(s) = c.seconds {
                rec.manifest.stages.push(io::StageTiming { stage: format!("check:{}", c.id), seconds: s });
            }
        }
        Ok(())
    })?;
    Ok(report.passed())
}
