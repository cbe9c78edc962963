//! `revint`: run, invert, reverse and check programs, or serve sessions.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use revint_core::frontend::{parse_annotated, parse_program};
use revint_core::harness::generate::generate_program;
use revint_core::harness::roundtrip::{roundtrip, table, Report};
use revint_core::harness::traditional::Traditional;
use revint_core::lang::Program;
use revint_core::pretty::{print, program_text};
use revint_core::redex::Direction;
use revint_core::scheduler::{script_from_stacks, Policy};
use revint_core::session::{Status, Until};
use revint_core::state::AuxStore;
use revint_core::trace::{dump_delta, dump_state, parse_initial, wire_state, WireValue};
use revint_core::{BigBundle, BigSession, BigTrace, Int};
use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "revint", version, about = "Reversible interpreter for a small concurrent imperative language")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a program forward to the end.
    Run(RunArgs),
    /// Turn a trace or bundle into a bundle that runs the other way.
    Invert {
        /// Trace file from `run --trace`, or a bundle.
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a reverse bundle back to the start and check what it restored.
    Reverse {
        bundle: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "OUT")]
        trace: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Forward, invert and reverse many times, checking each roundtrip.
    Check {
        /// Program to check; generated programs when absent.
        file: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        uniform: bool,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Serve the session protocol and static stepper assets.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Directory of static assets.
        #[arg(long)]
        root: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    #[arg(long, conflicts_with_all = ["script", "annotated"])]
    seed: Option<u64>,
    /// Replay the redex choices of a trace file.
    #[arg(long, value_name = "TRACE", conflicts_with = "annotated")]
    script: Option<PathBuf>,
    /// FILE carries identifier stacks; replay the run they record.
    #[arg(long)]
    annotated: bool,
    /// Take every enabled skip step before any identifier step.
    #[arg(long)]
    uniform: bool,
    /// Plain interpreter: no reversal information.
    #[arg(long, conflicts_with_all = ["trace", "dump_delta", "annotated"])]
    traditional: bool,
    /// Starting value of a global.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    #[arg(long, value_name = "OUT")]
    trace: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    dump_state: bool,
    #[arg(long)]
    dump_delta: bool,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn parse_at(path: &Path, src: &str) -> Result<Program> {
    parse_program(src).map_err(|e| anyhow!("{}:{e}", path.display()))
}

fn initial(set: &[String]) -> Result<BTreeMap<String, String>> {
    set.iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects NAME=VALUE, got `{kv}`"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn delta_summary(d: &AuxStore<Int>) -> Option<String> {
    let values: usize = d.values.values().map(Vec::len).sum();
    let total = values + d.b.len() + d.w.len() + d.wi.len() + d.pr.len();
    (total > 0).then(|| {
        format!("δ: {values} values, B {}, W {}, WI {}, Pr {}\n", d.b.len(), d.w.len(), d.wi.len(), d.pr.len())
    })
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let src = read(&a.file)?;
    let mut init = initial(&a.set)?;
    let (source, mut policy) = if a.annotated {
        let (p, stacks) = parse_annotated(&src).map_err(|e| anyhow!("{}:{e}", a.file.display()))?;
        let script = script_from_stacks(stacks.iter().map(|(s, st)| (*s, st)))?;
        (program_text(&p), Policy::from(script))
    } else if let Some(path) = &a.script {
        let t = BigTrace::from_json(&read(path)?)?;
        if parse_program(&t.program_source)? != parse_at(&a.file, &src)? {
            bail!("{} was recorded for a different program", path.display());
        }
        for (k, v) in &t.initial {
            init.entry(k.clone()).or_insert_with(|| v.clone());
        }
        (src, Policy::Scripted { steps: t.steps.iter().map(|l| l.redex.clone()).collect() })
    } else {
        (src, Policy::SeededRandom { seed: a.seed.unwrap_or(0) })
    };
    if a.uniform {
        policy = Policy::Uniform { inner: Box::new(policy) };
    }
    let init = parse_initial::<Int>(&init)?;
    let budget = a.max_steps.unwrap_or_else(revint_core::exec::default_budget);

    let both = !a.dump_state && !a.dump_delta;
    if a.traditional {
        let p = parse_at(&a.file, &source)?;
        let mut t = Traditional::new(&p, &init);
        t.run(&mut policy.scheduler(), budget)?;
        for (k, v) in t.globals() {
            println!("{k} = {v}");
        }
        return Ok(ExitCode::SUCCESS);
    }

    let mut s = BigSession::new(&source, init, policy).map_err(|e| anyhow!("{}:{e}", a.file.display()))?;
    s.budget = budget;
    let res = s.run_until(Until::Terminal);
    if let Some(out) = &a.trace {
        write(out, &s.trace_file().to_json())?;
    }
    res?;
    if s.status() == Status::Stuck {
        bail!("stuck after {} steps with identifier {} next", s.trace.len(), s.machine.seq.next);
    }
    let mut out = String::new();
    if a.dump_state || both {
        out += &dump_state(&s.machine);
    }
    if a.dump_delta {
        out += &dump_delta(&s.machine.delta);
    } else if both {
        out += &delta_summary(&s.machine.delta).unwrap_or_default();
    }
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_invert(input: &Path, output: Option<&Path>) -> Result<ExitCode> {
    let text = read(input)?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("{} is not JSON", input.display()))?;
    let mut s = if v.get("machine").is_some() {
        BigSession::from_bundle(BigBundle::from_json(&text)?, Policy::LeftFirst)?
    } else {
        BigSession::from_trace(&BigTrace::from_json(&text)?, Policy::LeftFirst)?
    };
    s.flip()?;
    if let Some(out) = output {
        write(out, &s.bundle().to_json())?;
    }
    print!("{}", print(&s.machine.prog, true).text);
    Ok(ExitCode::SUCCESS)
}

fn cmd_reverse(path: &Path, seed: u64, trace: Option<&Path>, max_steps: Option<u64>) -> Result<ExitCode> {
    let b = BigBundle::from_json(&read(path)?)?;
    if b.machine.direction != Direction::Reverse {
        bail!("{} runs forward; invert it first", path.display());
    }
    let expected = b.initial.clone();
    let mut s = BigSession::from_bundle(b, Policy::SeededRandom { seed })?;
    if let Some(n) = max_steps {
        s.budget = n;
    }
    let res = s.run_until(Until::Terminal);
    if let Some(out) = trace {
        write(out, &s.trace_file().to_json())?;
    }
    let at = |s: &BigSession| s.machine.seq.next.checked_sub(1).map_or("none".to_string(), |m| m.to_string());
    if let Err(e) = res {
        bail!("reverse failed at identifier {}: {e}", at(&s));
    }
    if s.status() != Status::Terminal {
        bail!("reverse stuck at identifier {} after {} steps", at(&s), s.trace.len());
    }
    if s.machine.seq.next != 0 {
        bail!("reverse finished with identifier {} not undone", at(&s));
    }
    if let Some(line) = delta_summary(&s.machine.delta) {
        bail!("reverse finished with reversal information left over, {}", line.trim_end());
    }
    for (k, v) in wire_state(&s.machine) {
        let want = expected.get(&k).map_or("0", String::as_str);
        if let WireValue::Scalar(got) = &v {
            if got != want {
                bail!("`{k}` restored to {got}, started at {want}");
            }
        }
    }
    print!("{}", dump_state(&s.machine));
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(file: Option<&Path>, runs: u64, seed: u64, uniform: bool, json: bool, max_steps: Option<u64>) -> Result<ExitCode> {
    if runs == 0 {
        return Ok(ExitCode::SUCCESS);
    }
    let budget = max_steps.unwrap_or_else(revint_core::exec::default_budget);
    let fixed = match file {
        Some(f) => Some(parse_at(f, &read(f)?)?),
        None => None,
    };
    let mut reports: Vec<Report> = Vec::new();
    for i in 0..runs {
        let s = seed.wrapping_add(i);
        let p = match &fixed {
            Some(p) => p.clone(),
            None => generate_program(s, 4 + (i % 20) as u32),
        };
        let mut policy = Policy::SeededRandom { seed: s };
        if uniform {
            policy = Policy::Uniform { inner: Box::new(policy) };
        }
        reports.push(roundtrip::<Int>(&p, &BTreeMap::new(), &policy, s, budget).report);
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        print!("{}", table(&reports));
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        eprintln!("revint: {failed} of {runs} roundtrips failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve(host: std::net::IpAddr, port: u16, root: Option<PathBuf>) -> Result<ExitCode> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(revint_service::serve(SocketAddr::new(host, port), root))
        .with_context(|| format!("cannot serve on {host}:{port}"))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Invert { input, output } => cmd_invert(&input, output.as_deref()),
        Cmd::Reverse { bundle, seed, trace, max_steps } => cmd_reverse(&bundle, seed, trace.as_deref(), max_steps),
        Cmd::Check { file, runs, seed, uniform, json, max_steps } => {
            cmd_check(file.as_deref(), runs, seed, uniform, json, max_steps)
        }
        Cmd::Serve { port, host, root } => cmd_serve(host, port, root),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("revint: {e:#}");
            ExitCode::FAILURE
        }
    }
}
