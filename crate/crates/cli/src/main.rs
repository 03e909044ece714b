use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sdklint_cli::{exit_code, render_json, render_text, scan, OutputFormat, ScanConfig};
use sdklint_core::resolve::ResolverMode;

/// Static checks for cloud-SDK usage in Python code.
#[derive(Parser)]
#[command(name = "sdklint", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan paths and report best-practice findings.
    Scan(ScanArgs),
    /// List the available rule identifiers.
    Rules,
}

#[derive(clap::Args)]
struct ScanArgs {
    /// Files or directories to scan.
    #[arg(required = true)]
    roots: Vec<PathBuf>,
    /// Resolution configuration: hc (high confidence) or mc (mixed).
    #[arg(long = "config", value_enum, default_value_t = ModeArg::Mc)]
    config: ModeArg,
    /// Comma-separated rule identifiers to run (default: all).
    #[arg(long, value_delimiter = ',')]
    rules: Vec<String>,
    /// Extra API specification bundle (JSON) merged over the defaults.
    #[arg(long)]
    specs: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Keep at most N findings, dropping low-confidence ones first.
    #[arg(long)]
    max_findings: Option<usize>,
    /// Extra handler parameter-name pairs, e.g. `evt,ctx`.
    #[arg(long)]
    handler_names: Vec<String>,
    /// Print the DOT rendering of a function's graph and exit.
    #[arg(long)]
    dump_mu: Option<String>,
    /// Print per-step frontier traces for one rule to stderr.
    #[arg(long)]
    trace_rule: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hc,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Rules => {
            for id in sdklint_core::rules::RULE_IDS {
                println!("{id}");
            }
            ExitCode::SUCCESS
        }
        Command::Scan(args) => {
            let config = ScanConfig {
                roots: args.roots,
                mode: match args.config {
                    ModeArg::Hc => ResolverMode::Hc,
                    ModeArg::Mc => ResolverMode::Mc,
                },
                rules: args.rules.into_iter().collect::<BTreeSet<_>>(),
                specs_path: args.specs,
                format: match args.format {
                    FormatArg::Text => OutputFormat::Text,
                    FormatArg::Json => OutputFormat::Json,
                },
                max_findings: args.max_findings,
                handler_names: args.handler_names,
                dump_mu: args.dump_mu,
                trace_rule: args.trace_rule,
            };
            match scan(&config) {
                Ok(outcome) => {
                    for line in &outcome.trace {
                        eprintln!("trace: {line}");
                    }
                    if let Some(dot) = outcome.dot {
                        print!("{dot}");
                        return ExitCode::SUCCESS;
                    }
                    match config.format {
                        OutputFormat::Text => {
                            print!("{}", render_text(&outcome.report, &outcome.warnings))
                        }
                        OutputFormat::Json => {
                            for w in &outcome.warnings {
                                eprintln!("warning: {w}");
                            }
                            println!("{}", render_json(&outcome.report));
                        }
                    }
                    ExitCode::from(exit_code(&outcome.report) as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    // Fatal configuration or I/O problem.
                    ExitCode::from(2)
                }
            }
        }
    }
}
