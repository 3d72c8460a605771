use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pastro_core::{check_trace, fuzz, run, Check, RunTrace, Scenario, SimOptions};

#[derive(Parser)]
#[command(name = "pastro", version, about = "Deterministic adversarial simulator for Pastro asset transfer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one seed, write its trace and print the verdicts.
    Run(RunArgs),
    /// Run a range of seeds and summarize.
    Fuzz(FuzzArgs),
    /// Re-check a recorded trace.
    Check(CheckArgs),
}

#[derive(Args)]
struct CheckSel {
    /// Comma separated checks (consistency, monotonicity, validity,
    /// agreement, theorems, availability). Default: all.
    #[arg(long, value_delimiter = ',', value_parser = parse_check)]
    checks: Vec<Check>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

impl CheckSel {
    fn selected(&self) -> Vec<Check> {
        if self.checks.is_empty() {
            Check::ALL.to_vec()
        } else {
            self.checks.clone()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the scenario horizon (ticks).
    #[arg(long)]
    horizon: Option<u64>,
    /// Trace output path. Defaults to `$PASTRO_TRACE_DIR/<name>-<seed>.jsonl`
    /// when that variable is set.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, env = "PASTRO_TRACE_DIR")]
    trace_dir: Option<PathBuf>,
    /// Leave sends and deliveries out of the trace.
    #[arg(long)]
    no_messages: bool,
    #[command(flatten)]
    sel: CheckSel,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct FuzzArgs {
    scenario: PathBuf,
    /// Half-open seed range `A..B`. Defaults to the scenario's `seeds`.
    #[arg(long, value_parser = parse_range)]
    seeds: Option<(u64, u64)>,
    #[command(flatten)]
    sel: CheckSel,
}

#[derive(Args)]
struct CheckArgs {
    trace: PathBuf,
    #[command(flatten)]
    sel: CheckSel,
}

fn parse_check(s: &str) -> Result<Check, String> {
    Check::parse(s).ok_or_else(|| format!("unknown check `{s}`"))
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or("expected A..B")?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a > b {
        return Err("range is reversed".into());
    }
    Ok((a, b))
}

/// Failures that map to exit status 2.
#[derive(Debug)]
struct UsageError(anyhow::Error);

fn load(path: &Path) -> Result<Scenario, UsageError> {
    Scenario::load(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(UsageError)
}

fn print_report(report: &pastro_core::Report, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(report)?);
        return Ok(());
    }
    for v in &report.verdicts {
        let status = if v.passed { "pass" } else { "FAIL" };
        match &v.witness {
            Some(w) => println!("{status:4}  {:13} {w}", v.check.name()),
            None => println!("{status:4}  {}", v.check.name()),
        }
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<bool, UsageError> {
    let sc = load(&a.scenario)?;
    let opts = SimOptions {
        record_messages: !a.no_messages,
        horizon: a.horizon,
    };
    let t0 = Instant::now();
    let out = run(&sc, a.seed, &opts);
    let elapsed = t0.elapsed();
    let report = check_trace(&out.trace, &a.sel.selected());
    let path = a.trace.or_else(|| {
        a.trace_dir
            .map(|d| d.join(format!("{}-{}.jsonl", sc.name, a.seed)))
    });
    let inner = || -> Result<()> {
        if let Some(p) = &path {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, out.trace.to_jsonl())
                .with_context(|| format!("writing {}", p.display()))?;
        }
        if a.verbose > 0 {
            let s = &out.stats;
            eprintln!(
                "{} seed {}: {} turns, {} transfers ({} completed), {} restarts, {} corruptions ({} refused), {} abandoned, {:.3}s",
                sc.name,
                a.seed,
                s.turns,
                s.transfers,
                s.completed,
                s.restarts,
                s.corruptions,
                s.rejections,
                s.abandoned,
                elapsed.as_secs_f64()
            );
            if a.verbose > 1 {
                eprintln!("trace digest {}", out.trace.digest());
            }
        }
        print_report(&report, a.sel.json)?;
        if !report.passed() {
            if let Some(p) = &path {
                eprintln!("counterexample trace: {}", p.display());
            }
        }
        Ok(())
    };
    inner().map_err(UsageError)?;
    Ok(report.passed())
}

fn cmd_fuzz(a: FuzzArgs) -> Result<bool, UsageError> {
    let sc = load(&a.scenario)?;
    let (lo, hi) = match (a.seeds, sc.seeds) {
        (Some(r), _) => r,
        (None, Some([lo, hi])) => (lo, hi),
        (None, None) => {
            return Err(UsageError(anyhow::anyhow!(
                "no seed range: pass --seeds or set `seeds` in the scenario"
            )))
        }
    };
    let t0 = Instant::now();
    let sum = fuzz(&sc, lo..hi, &a.sel.selected());
    let secs = t0.elapsed().as_secs_f64();
    if a.sel.json {
        println!("{}", serde_json::to_string_pretty(&sum).map_err(|e| UsageError(e.into()))?);
    } else {
        println!(
            "{}: {} runs, {} failing, {:.1}s",
            sc.name,
            sum.runs,
            sum.failures.len(),
            secs
        );
        for (check, n) in &sum.by_check {
            println!("  {check}: {n}");
        }
        if let Some(r) = &sum.first_failure {
            println!("first failing seed {}", r.seed);
            print_report(r, false).map_err(UsageError)?;
        }
    }
    Ok(sum.passed())
}

fn cmd_check(a: CheckArgs) -> Result<bool, UsageError> {
    let inner = || -> Result<RunTrace> {
        let text = std::fs::read_to_string(&a.trace)
            .with_context(|| format!("reading {}", a.trace.display()))?;
        let t = RunTrace::from_jsonl(&text)?;
        if t.meta.processes == 0 {
            bail!("trace declares no processes");
        }
        Ok(t)
    };
    let trace = inner().map_err(UsageError)?;
    let report = check_trace(&trace, &a.sel.selected());
    print_report(&report, a.sel.json).map_err(UsageError)?;
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Fuzz(a) => cmd_fuzz(a),
        Cmd::Check(a) => cmd_check(a),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(UsageError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
