use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use critex::{cmd_analyze, cmd_subsidiary, render_report, render_subsidiary, to_json, BoxSpec, CliError, Options};

#[derive(Parser)]
#[command(name = "critex", version, about = "Find and classify constrained critical points of polynomials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find, classify and cross-check all critical points in the box.
    Analyze(Common),
    /// Image of a homogeneous objective over the unit sphere and the file's constraints.
    Subsidiary(Common),
}

#[derive(Args)]
struct Common {
    /// Problem file.
    file: PathBuf,
    /// Search box: `LO:HI` for every axis, or `LO:HI,LO:HI,…` per axis.
    #[arg(long = "box", value_name = "SPEC", allow_hyphen_values = true)]
    bounds: Option<BoxSpec>,
    #[arg(long)]
    seeds_per_axis: Option<usize>,
    /// Highest Taylor degree examined.
    #[arg(long = "kmax")]
    k_max: Option<u32>,
    /// Cap on zero-set descent steps.
    #[arg(long)]
    depth_max: Option<usize>,
    /// Residual and value tolerance override.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let (common, analyze) = match cli.command {
        Command::Analyze(c) => (c, true),
        Command::Subsidiary(c) => (c, false),
    };
    let text = std::fs::read_to_string(&common.file)
        .map_err(|e| CliError::Input(format!("{}: {e}", common.file.display())))?;
    let opts = Options {
        bounds: common.bounds,
        seeds_per_axis: common.seeds_per_axis,
        k_max: common.k_max,
        depth_max: common.depth_max,
        tol: common.tol,
    };
    Ok(match (analyze, common.format) {
        (true, Format::Text) => render_report(&cmd_analyze(&text, &opts)?),
        (true, Format::Json) => to_json(&cmd_analyze(&text, &opts)?),
        (false, Format::Text) => render_subsidiary(&cmd_subsidiary(&text, &opts)?),
        (false, Format::Json) => to_json(&cmd_subsidiary(&text, &opts)?),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{}", out.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("critex: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
