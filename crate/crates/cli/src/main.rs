//! `omrkit` command-line front end.
//!
//! Exit codes: 0 on success (per-item failures are recorded in the report),
//! 1 for usage errors, 2 for errors that stop the whole run.

mod corpus;
mod eval;
mod report;
mod tools;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "omrkit", version, about = "Evaluation and data tools for ABC-based optical music recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite ABC tunes into the canonical dialect.
    Canon(tools::CanonArgs),
    /// Convert ABC tunes to MusicXML.
    Convert(tools::ConvertArgs),
    /// Score predictions against ground truth.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Train and apply the BPE tokenizer.
    #[command(subcommand)]
    Bpe(tools::BpeCommand),
    /// Prepare score images.
    #[command(subcommand)]
    Imgprep(tools::ImgprepCommand),
    /// Work with existing reports.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Tree edit distance on MusicXML, normalized by the gold tree size.
    Tedn(eval::TednArgs),
    /// Character, symbol and line error rates on text.
    Er(eval::ErArgs),
    /// Measure-level normalized edit distance on MusicXML.
    Omrned(eval::OmrNedArgs),
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Aggregate a JSONL report.
    Summarize(report::SummarizeArgs),
}

/// Inputs shared by every pairwise evaluation.
#[derive(Args, Clone)]
pub struct PairArgs {
    /// Prediction file, or directory of predictions.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth file, or directory of ground-truth files.
    #[arg(long)]
    gold: PathBuf,
    /// JSONL report path (default: standard output).
    #[arg(short, long, visible_alias = "report")]
    output: Option<PathBuf>,
    /// Summary JSON path (default: `<output>.summary.json` when `-o` is given).
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = corpus::init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Canon(a) => tools::canon(&a),
        Command::Convert(a) => tools::convert(&a),
        Command::Eval(EvalCommand::Tedn(a)) => eval::tedn(&a),
        Command::Eval(EvalCommand::Er(a)) => eval::error_rates(&a),
        Command::Eval(EvalCommand::Omrned(a)) => eval::omrned(&a),
        Command::Bpe(c) => tools::bpe(&c),
        Command::Imgprep(c) => tools::imgprep(&c),
        Command::Report(ReportCommand::Summarize(a)) => report::summarize(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
