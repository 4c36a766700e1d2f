use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crashmpst::process::explore::explore_type_safety;
use crashmpst::process::{typecheck, ReliabilityMap};
use crashmpst::properties::Witness;
use crashmpst::report::{check_document, Report};
use crashmpst::syntax::{parse_context, parse_process, ContextDoc};
use crashmpst::{build_lts, Limits, Name, Property, TypingContext};

#[derive(Parser)]
#[command(name = "crashmpst", version, about = "Check multiparty session types with crash-stop failures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check properties of a typing context (.mpst)
    Check {
        file: PathBuf,
        /// Comma-separated subset of safe,df,live,term,nterm
        #[arg(long, value_delimiter = ',')]
        property: Vec<String>,
        /// Print the report as JSON
        #[arg(long)]
        json: bool,
        /// Include violation traces
        #[arg(long)]
        witness: bool,
        #[arg(long, default_value_t = 1_000_000)]
        max_states: usize,
        /// Override the document's reliable roles (comma-separated; empty for none)
        #[arg(long)]
        reliable: Option<String>,
    },
    /// Export the labelled transition system of a typing context
    Lts {
        file: PathBuf,
        #[arg(long, value_enum)]
        format: LtsFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        max_states: usize,
        #[arg(long)]
        reliable: Option<String>,
    },
    /// Type-check a process (.proc) against a typing context
    Typecheck {
        file: PathBuf,
        /// Context document typing the process's free endpoints
        #[arg(long)]
        context: Option<PathBuf>,
        /// Reduction depth for --explore
        #[arg(long, default_value_t = 6)]
        depth: usize,
        /// Explore reliable reductions and report any reachable error
        #[arg(long)]
        explore: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LtsFormat {
    Dot,
    Json,
}

/// Failure to produce a verdict: exit code 2.
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Fatal {
        Fatal(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Fatal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String, Fatal> {
    fs::read_to_string(path).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

fn load_context(path: &Path, reliable: Option<&str>) -> Result<ContextDoc, Fatal> {
    let mut doc = parse_context(&read(path)?).map_err(|e| Fatal(format!("{}:{e}", path.display())))?;
    if doc.session.is_none() {
        return Err(Fatal(format!("{}: no session bindings", path.display())));
    }
    if let Some(list) = reliable {
        let roles = doc.context.roles(doc.session.as_ref().unwrap());
        let mut set = BTreeSet::new();
        for r in list.split(',').map(str::trim).filter(|r| !r.is_empty()) {
            let r = Name::from(r);
            if !roles.contains(&r) {
                return Err(Fatal(format!("--reliable: role {r} has no entry in the session")));
            }
            set.insert(r);
        }
        doc.reliable = set;
    }
    Ok(doc)
}

fn run(cmd: Command) -> Result<bool, Fatal> {
    match cmd {
        Command::Check {
            file,
            property,
            json,
            witness,
            max_states,
            reliable,
        } => {
            let doc = load_context(&file, reliable.as_deref())?;
            let props = if property.is_empty() {
                Property::ALL.to_vec()
            } else {
                property
                    .iter()
                    .map(|p| {
                        Property::from_name(p.trim())
                            .ok_or_else(|| Fatal(format!("unknown property '{p}'")))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            let limits = Limits {
                max_states,
                max_depth: None,
            };
            let report = check_document(&file.display().to_string(), &doc, &props, &limits, witness)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print_table(&report, witness);
            }
            Ok(report.all_hold())
        }
        Command::Lts {
            file,
            format,
            output,
            max_states,
            reliable,
        } => {
            let doc = load_context(&file, reliable.as_deref())?;
            let limits = Limits {
                max_states,
                max_depth: None,
            };
            let lts = build_lts(&doc.context, doc.session.as_ref().unwrap(), &doc.reliable, &limits)?;
            let text = match format {
                LtsFormat::Dot => lts.to_dot(),
                LtsFormat::Json => serde_json::to_string_pretty(&lts.to_json())? + "\n",
            };
            match output {
                Some(path) => fs::write(&path, text).map_err(|e| Fatal(format!("{}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::Typecheck {
            file,
            context,
            depth,
            explore,
        } => {
            let doc = parse_process(&read(&file)?).map_err(|e| Fatal(format!("{}:{e}", file.display())))?;
            let (gamma, reliable) = match &context {
                Some(path) => {
                    let c = load_context(path, None)?;
                    let mut map = ReliabilityMap::new();
                    map.insert(c.session.clone().unwrap(), c.reliable.clone());
                    (c.context, map)
                }
                None => (TypingContext::new(), ReliabilityMap::new()),
            };
            if let Err(e) = typecheck(&doc.theta, &gamma, &doc.process) {
                println!("ill-typed: {e}");
                return Ok(false);
            }
            println!("well-typed");
            if explore {
                let outcome = explore_type_safety(&doc.process, &reliable, depth);
                match outcome.error_trace {
                    Some(trace) => {
                        println!("error reachable after {} reductions:", trace.len());
                        for t in trace {
                            println!("  [{}] {}", t.rule, t.process);
                        }
                        return Ok(false);
                    }
                    None => println!(
                        "no error within {} reductions ({} processes explored)",
                        depth, outcome.explored
                    ),
                }
            }
            Ok(true)
        }
    }
}

fn print_table(report: &Report, witness: bool) {
    let reliable: Vec<&str> = report.reliable.iter().map(|r| r.as_str()).collect();
    println!(
        "{}: session {}, reliable {{{}}}",
        report.input,
        report.session,
        reliable.join(", ")
    );
    println!(
        "LTS: {} states, {} edges; reduction-reachable: {} states, {} edges ({:.1} ms)",
        report.lts.states,
        report.lts.edges,
        report.lts.reduction_states,
        report.lts.reduction_edges,
        report.build_millis
    );
    println!("{:<8} {:<7} {:>10}", "property", "verdict", "time (ms)");
    for r in &report.results {
        let mark = if r.verdict.holds { "✓" } else { "✗" };
        println!("{:<8} {:<7} {:>10.2}", r.property.name(), mark, r.millis);
    }
    if witness {
        for r in report.results.iter().filter(|r| !r.verdict.holds) {
            if let Some(w) = &r.verdict.witness {
                println!();
                print_witness(r.property.name(), w);
            }
        }
    }
}

fn print_witness(name: &str, w: &Witness) {
    println!("{name}: {}", w.reason);
    for step in &w.trace {
        println!("  [{}] {}", step.state, step.context);
        if let Some(l) = &step.label {
            println!("    --{l}-->");
        }
    }
    if !w.cycle.is_empty() {
        println!("  then repeating:");
        for step in &w.cycle {
            println!("  [{}] {}", step.state, step.context);
            if let Some(l) = &step.label {
                println!("    --{l}-->");
            }
        }
    }
}
