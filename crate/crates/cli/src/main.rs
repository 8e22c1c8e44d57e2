//! `zrplab`: simulate, solve and compare zero-range defect scenarios.
//!
//! Every run writes into `<out>/<command>-<hash>-s<seed>/`; `manifest.json`
//! is written last, so a directory without one is an interrupted run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use zrp_core::harness::{run_convergence, static_limit_check, ConvergenceReport};
use zrp_core::measure::build_local_equilibrium;
use zrp_core::pde::solve;
use zrp_core::scenario::Scenario;
use zrp_core::sim::{replica_rng, Initial, SimState};
use zrp_core::verify::{self, Suite, VerifyOptions};
use zrp_core::Error;

#[derive(Debug, Parser)]
#[command(name = "zrplab", version, about = "Zero-range processes with slow sites: simulator, solver, harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed; replica r uses stream (seed ^ r, N).
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Parent directory of run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the particle system and write occupancy snapshots.
    Simulate {
        scenario: PathBuf,
        /// Also write every jump to events.csv.
        #[arg(long)]
        event_log: bool,
    },
    /// Solve the macroscopic equation.
    Solve { scenario: PathBuf },
    /// Simulator against solver over the harness ladder.
    Compare { scenario: PathBuf },
    /// Sample the invariant measure at the defect sites.
    Static { scenario: PathBuf },
    /// Run a property suite: toolkit, simulator, solver, static, coupling or all.
    Verify {
        suite: String,
        /// Fewer events and samples.
        #[arg(long)]
        quick: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Solve { .. } => "solve",
            Command::Compare { .. } => "compare",
            Command::Static { .. } => "static",
            Command::Verify { .. } => "verify",
        }
    }
}

enum Failure {
    Config(String, String),
    Runtime(String, String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        if e.is_config() {
            Failure::Config(e.kind().into(), msg)
        } else {
            Failure::Runtime(e.kind().into(), msg)
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime("io".into(), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime("json".into(), e.to_string())
    }
}

type Outcome = std::result::Result<Option<bool>, Failure>;

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

struct RunDir {
    path: PathBuf,
    files: Vec<FileEntry>,
}

impl RunDir {
    fn create(out: &Path, command: &str, hash: &str, seed: u64) -> std::io::Result<Self> {
        let path = out.join(format!("{command}-{}-s{seed}", &hash[..12]));
        fs::create_dir_all(&path)?;
        let manifest = path.join("manifest.json");
        if manifest.exists() {
            fs::remove_file(manifest)?;
        }
        Ok(RunDir { path, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.path.join(name), bytes)?;
        self.record(name, bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.push(FileEntry { path: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::result::Result<(), Failure> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        Ok(self.write(name, &text)?)
    }
}

struct Context<'a> {
    cli: &'a Cli,
    started: f64,
}

impl Context<'_> {
    fn finish(&self, run: RunDir, source: (&str, &str), pass: Option<bool>) -> std::result::Result<PathBuf, Failure> {
        let manifest = json!({
            "tool": "zrplab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.cli.command.name(),
            "input": source.0,
            "input_sha256": source.1,
            "seed": self.cli.seed,
            "workers": self.cli.workers,
            "format": self.cli.format,
            "started": self.started,
            "finished": now(),
            "files": run.files,
            "pass": pass,
        });
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        fs::write(run.path.join("manifest.json"), text)?;
        Ok(run.path)
    }
}

fn load(path: &Path) -> std::result::Result<(Scenario, String), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Config("config".into(), format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8_lossy(&bytes);
    let scenario = Scenario::parse(&text, path.parent())?;
    Ok((scenario, sha256_hex(&bytes)))
}

fn simulate(ctx: &Context, path: &Path, event_log: bool) -> std::result::Result<(PathBuf, Option<bool>), Failure> {
    let (s, hash) = load(path)?;
    let sim = s.require_simulation()?;
    let gc = s.grand_canonical();
    let n = sim.n;
    let sites = s.defects.lattice_sites(n)?;
    let laws = build_local_equilibrium(&gc, &s.init.profile, &s.init.atoms, s.init.c0, n, &s.defects)?;
    let mut state = SimState::init(&gc, &s.defects, Initial::Laws(laws), replica_rng(ctx.cli.seed, 0, n as u64))?;
    let mut run = RunDir::create(&ctx.cli.out, "simulate", &hash, ctx.cli.seed)?;

    let mut log = if event_log {
        let mut w = BufWriter::new(fs::File::create(run.path.join("events.csv"))?);
        writeln!(w, "time,site,dir")?;
        Some(w)
    } else {
        None
    };
    let mut snapshots: Vec<(f64, Vec<u64>)> = Vec::new();
    for &t in &sim.times {
        let mut io_err = None;
        state.advance_to_with(t, |e| {
            if let Some(w) = log.as_mut() {
                if let Err(err) = writeln!(w, "{},{},{}", e.t, e.site, e.dir) {
                    io_err.get_or_insert(err);
                }
            }
        });
        if let Some(err) = io_err {
            return Err(err.into());
        }
        snapshots.push((t, state.occupancies().to_vec()));
    }
    if let Some(mut w) = log {
        w.flush()?;
        drop(w);
        let bytes = fs::read(run.path.join("events.csv"))?;
        run.record("events.csv", &bytes);
    }

    let defects: Vec<_> = s
        .defects
        .iter()
        .zip(&sites)
        .map(|((j, d, class), &k)| json!({"defect": j, "x": d.x, "beta": d.beta, "lambda": d.lambda, "class": class, "site": k}))
        .collect();
    match ctx.cli.format {
        Format::Csv => {
            let mut text = String::from("time,site,occupancy\n");
            for (t, occ) in &snapshots {
                for (k, o) in occ.iter().enumerate() {
                    writeln!(text, "{t},{k},{o}").unwrap();
                }
            }
            run.write("snapshots.csv", text.as_bytes())?;
            run.write_json("defects.json", &json!({"n": n, "defects": defects}))?;
        }
        Format::Json => {
            let snaps: Vec<_> = snapshots.iter().map(|(t, occ)| json!({"time": t, "occupancy": occ})).collect();
            run.write_json("snapshots.json", &json!({"n": n, "defects": defects, "snapshots": snaps}))?;
        }
    }
    let path = ctx.finish(run, (&path.display().to_string(), &hash), None)?;
    Ok((path, None))
}

fn solve_cmd(ctx: &Context, path: &Path) -> std::result::Result<(PathBuf, Option<bool>), Failure> {
    let (s, hash) = load(path)?;
    let cfg = s.require_solver()?;
    let gc = s.grand_canonical();
    let sol = solve(&gc, &s.defects, &s.init, cfg)?;
    let nodes = s.defects.grid_nodes(cfg.m)?;
    let mut run = RunDir::create(&ctx.cli.out, "solve", &hash, ctx.cli.seed)?;
    let m = cfg.m;
    let x: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
    match ctx.cli.format {
        Format::Csv => {
            let mut text = String::from("time,x,rho\n");
            for snap in &sol.snapshots {
                for (xi, r) in x.iter().zip(&snap.rho) {
                    writeln!(text, "{},{xi},{r}", snap.t).unwrap();
                }
            }
            run.write("density.csv", text.as_bytes())?;
        }
        Format::Json => {
            let snaps: Vec<_> = sol.snapshots.iter().map(|s| json!({"time": s.t, "rho": s.rho})).collect();
            run.write_json("density.json", &json!({"m": m, "x": x, "snapshots": snaps}))?;
        }
    }
    let times: Vec<f64> = sol.snapshots.iter().map(|s| s.t).collect();
    let mut atoms: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut reservoirs: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for snap in &sol.snapshots {
        for (&j, &v) in &snap.atoms {
            atoms.entry(j).or_default().push(v);
        }
        for (&j, &v) in &snap.reservoirs {
            reservoirs.entry(j).or_default().push(v);
        }
    }
    let defects: Vec<_> = s
        .defects
        .iter()
        .zip(&nodes)
        .map(|((j, d, class), &i)| json!({"defect": j, "x": d.x, "beta": d.beta, "lambda": d.lambda, "class": class, "node": i}))
        .collect();
    run.write_json(
        "atoms.json",
        &json!({
            "m": m,
            "dt": sol.dt,
            "defects": defects,
            "times": times,
            "atoms": atoms,
            "reservoirs": reservoirs,
            "regime_log": sol.regime_log,
            "mass_audit": sol.mass_audit,
        }),
    )?;
    let path = ctx.finish(run, (&path.display().to_string(), &hash), None)?;
    Ok((path, None))
}

fn report_tables(report: &ConvergenceReport) -> Vec<(&'static str, String)> {
    let mut l1 = String::from("n,t,l1,replica_l1_mean,replica_l1_se,replicas\n");
    for r in &report.l1 {
        writeln!(l1, "{},{},{},{},{},{}", r.n, r.t, r.l1, r.replica_l1_mean, r.replica_l1_se, r.replicas).unwrap();
    }
    let mut atoms = String::from("n,t,defect,site,empirical,empirical_se,solver,error\n");
    for r in &report.atoms {
        writeln!(atoms, "{},{},{},{},{},{},{},{}", r.n, r.t, r.defect, r.site, r.empirical, r.empirical_se, r.solver, r.error)
            .unwrap();
    }
    let mut sup = String::from(
        "n,t,defect,site,scaled,scaled_se,target,scaled_error,window_empirical,window_reference,window_error\n",
    );
    for r in &report.super_slow {
        writeln!(
            sup,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.t,
            r.defect,
            r.site,
            r.scaled,
            r.scaled_se,
            r.target,
            r.scaled_error,
            r.window_empirical,
            r.window_reference,
            r.window_error
        )
        .unwrap();
    }
    let mut profiles = String::from("n,t,x,empirical,reference\n");
    for r in &report.profiles {
        for ((x, e), f) in r.x.iter().zip(&r.empirical).zip(&r.reference) {
            writeln!(profiles, "{},{},{x},{e},{f}", r.n, r.t).unwrap();
        }
    }
    let mut checks = String::from("name,value,threshold,pass\n");
    for c in &report.checks {
        writeln!(checks, "{},{},{},{}", c.name, c.value, c.threshold, c.pass).unwrap();
    }
    vec![("l1.csv", l1), ("atoms.csv", atoms), ("super.csv", sup), ("profiles.csv", profiles), ("checks.csv", checks)]
}

fn compare(ctx: &Context, path: &Path) -> std::result::Result<(PathBuf, Option<bool>), Failure> {
    let (s, hash) = load(path)?;
    let setup = s.convergence_setup(ctx.cli.seed)?;
    let report = run_convergence(&setup)?;
    let mut run = RunDir::create(&ctx.cli.out, "compare", &hash, ctx.cli.seed)?;
    run.write_json("report.json", &report)?;
    if ctx.cli.format == Format::Csv {
        for (name, text) in report_tables(&report) {
            run.write(name, text.as_bytes())?;
        }
    }
    let pass = report.pass;
    let path = ctx.finish(run, (&path.display().to_string(), &hash), Some(pass))?;
    Ok((path, Some(pass)))
}

fn static_cmd(ctx: &Context, path: &Path) -> std::result::Result<(PathBuf, Option<bool>), Failure> {
    let (s, hash) = load(path)?;
    let st = s.require_static()?;
    let gc = s.grand_canonical();
    let report = static_limit_check(&gc, st.c, &s.defects, st.n, st.samples, ctx.cli.seed)?;
    let mut run = RunDir::create(&ctx.cli.out, "static", &hash, ctx.cli.seed)?;
    run.write_json("static.json", &report)?;
    match ctx.cli.format {
        Format::Csv => {
            let mut text = String::from("defect,sample,occupancy,scaled\n");
            for d in &report.defects {
                for (i, &o) in d.draws.iter().enumerate() {
                    writeln!(text, "{},{i},{o},{}", d.defect, o as f64 * d.scale).unwrap();
                }
            }
            run.write("samples.csv", text.as_bytes())?;
        }
        Format::Json => {
            let draws: BTreeMap<usize, &[u64]> = report.defects.iter().map(|d| (d.defect, d.draws.as_slice())).collect();
            run.write_json("samples.json", &draws)?;
        }
    }
    let path = ctx.finish(run, (&path.display().to_string(), &hash), None)?;
    Ok((path, None))
}

fn verify_cmd(ctx: &Context, suite: &str, quick: bool) -> std::result::Result<(PathBuf, Option<bool>), Failure> {
    let suite: Suite = suite.parse()?;
    let opts = if quick {
        VerifyOptions::quick(ctx.cli.seed)
    } else {
        VerifyOptions { seed: ctx.cli.seed, ..VerifyOptions::default() }
    };
    let reports = verify::run(suite, &opts)?;
    let key = format!("verify {suite} quick={quick}");
    let hash = sha256_hex(key.as_bytes());
    let mut run = RunDir::create(&ctx.cli.out, "verify", &hash, ctx.cli.seed)?;
    run.write_json("verify.json", &reports)?;
    if ctx.cli.format == Format::Csv {
        let mut text = String::from("suite,check,pass,value,threshold\n");
        for r in &reports {
            for c in &r.checks {
                writeln!(text, "{},{},{},{},{}", r.suite, c.name, c.pass, c.value, c.threshold).unwrap();
            }
        }
        run.write("verify.csv", text.as_bytes())?;
    }
    let pass = reports.iter().all(|r| r.pass);
    let path = ctx.finish(run, (&key, &hash), Some(pass))?;
    Ok((path, Some(pass)))
}

fn dispatch(cli: &Cli) -> std::result::Result<(PathBuf, Option<bool>), Failure> {
    let ctx = Context { cli, started: now() };
    match &cli.command {
        Command::Simulate { scenario, event_log } => simulate(&ctx, scenario, *event_log),
        Command::Solve { scenario } => solve_cmd(&ctx, scenario),
        Command::Compare { scenario } => compare(&ctx, scenario),
        Command::Static { scenario } => static_cmd(&ctx, scenario),
        Command::Verify { suite, quick } => verify_cmd(&ctx, suite, *quick),
    }
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    let line = json!({"status": "error", "exit": code, "kind": kind, "message": message.replace('\n', " ")});
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail(2, "usage", first);
        }
    };
    let result: Outcome = match cli.workers {
        Some(0) => return fail(2, "usage", "--workers must be positive"),
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)).map(|(p, pass)| report(&p, pass)),
            Err(e) => return fail(3, "runtime", &e.to_string()),
        },
        None => dispatch(&cli).map(|(p, pass)| report(&p, pass)),
    };
    match result {
        Ok(Some(false)) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(Failure::Config(kind, msg)) => fail(2, &kind, &msg),
        Err(Failure::Runtime(kind, msg)) => fail(3, &kind, &msg),
    }
}

fn report(path: &Path, pass: Option<bool>) -> Option<bool> {
    println!("{}", json!({"status": "ok", "run": path.display().to_string(), "pass": pass}));
    pass
}
