use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hc_core::archetypes;
use hc_core::canonical::to_canonical_string;
use hc_core::engine::{read_log, replay, verify_log_text, write_log, EventRecord, LogVerdict};
use hc_core::metrics::score_requirements;
use hc_core::report::{metric_values, report_from_log};
use hc_core::runner::run;
use hc_core::scenario::load_scenario;

const EXIT_USAGE: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_INTEGRITY: u8 = 3;
const EXIT_EXPECTATION: u8 = 4;

#[derive(Parser)]
#[command(name = "hc", version, about = "Hybrid cooperative governance simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, writing its audit log and report.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Rebuild state from a log and print its digest.
    Replay { log: PathBuf },
    /// Check a log's hash chain.
    Verify { log: PathBuf },
    /// Print the requirement scorecard and metric values for a log.
    Metrics { log: PathBuf },
    /// Regenerate the report for a log.
    Report { log: PathBuf },
    /// List or export the bundled scenarios.
    Archetypes {
        #[command(subcommand)]
        command: ArchetypeCommand,
    },
}

#[derive(Subcommand)]
enum ArchetypeCommand {
    List,
    Export {
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

struct Failure(u8, String);

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Run { scenario, out } => cmd_run(&scenario, &out),
        Command::Replay { log } => {
            let records = load_log(&log)?;
            let engine = replay(&records).map_err(|e| Failure(EXIT_INTEGRITY, e.to_string()))?;
            println!("digest {}", engine.state().digest());
            println!("clock {}", engine.state().clock);
            println!("records {}", engine.log().len());
            Ok(())
        }
        Command::Verify { log } => {
            let text = read(&log)?;
            match verify_log_text(&text) {
                LogVerdict::Ok => {
                    println!("ok");
                    Ok(())
                }
                broken => Err(Failure(EXIT_INTEGRITY, broken.to_string())),
            }
        }
        Command::Metrics { log } => {
            let records = load_log(&log)?;
            let engine = replay(&records).map_err(|e| Failure(EXIT_INTEGRITY, e.to_string()))?;
            let card = score_requirements(engine.state(), engine.log()).map_err(|e| Failure(EXIT_PARSE, e.to_string()))?;
            let metrics = metric_values(engine.state(), engine.log());
            println!(
                "{}",
                to_canonical_string(&serde_json::json!({"metrics": metrics, "scorecard": card}))
            );
            Ok(())
        }
        Command::Report { log } => {
            let records = load_log(&log)?;
            let report = report_from_log(&records).map_err(|e| Failure(EXIT_INTEGRITY, e.to_string()))?;
            println!("{}", report.to_canonical());
            Ok(())
        }
        Command::Archetypes { command } => match command {
            ArchetypeCommand::List => {
                for name in archetypes::names() {
                    println!("{name}");
                }
                Ok(())
            }
            ArchetypeCommand::Export { name, out } => {
                let src = archetypes::source(&name).ok_or_else(|| Failure(EXIT_USAGE, format!("unknown archetype {name}")))?;
                let path = out.join(format!("{name}.json"));
                write(&path, src)?;
                println!("{}", path.display());
                Ok(())
            }
        },
    }
}

fn cmd_run(scenario: &Path, out: &Path) -> CliResult {
    let scenario = load_scenario(scenario).map_err(|e| Failure(EXIT_PARSE, e.to_string()))?;
    let output = run(&scenario).map_err(|e| Failure(EXIT_PARSE, e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", out.display())))?;
    let log_path = out.join(format!("{}.log", scenario.name));
    let report_path = out.join(format!("{}.report.json", scenario.name));
    write(&log_path, &write_log(output.engine.log()))?;
    write(&report_path, &format!("{}\n", output.report.to_canonical()))?;

    let r = &output.report;
    println!("scenario {}", r.scenario);
    println!("records {} clock {}", r.records, r.clock);
    println!("digest {}", r.final_digest);
    for (name, s) in [
        ("R1", &r.scorecard.r1),
        ("R2", &r.scorecard.r2),
        ("R3", &r.scorecard.r3),
        ("R4", &r.scorecard.r4),
        ("R5", &r.scorecard.r5),
    ] {
        println!("{name} {:?}", s.verdict);
    }
    let failed = r.expectations.iter().filter(|e| !e.passed).count();
    println!("expectations {}/{} passed", r.expectations.len() - failed, r.expectations.len());
    println!("log {}", log_path.display());
    println!("report {}", report_path.display());
    if failed > 0 {
        return Err(Failure(EXIT_EXPECTATION, format!("{failed} expectation(s) failed")));
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn load_log(path: &Path) -> Result<Vec<EventRecord>, Failure> {
    read_log(&read(path)?).map_err(|e| Failure(EXIT_INTEGRITY, e.to_string()))
}
