use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sr_curvature::connection::ConnectionKind;
use sr_curvature::report::{self, Format, RunConfig};
use sr_curvature::twist::DEFAULT_RANK_TOL;
use sr_curvature::Error;

#[derive(Parser)]
#[command(name = "srcurv", version, about = "Canonical curvature of sub-Riemannian structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Zoo model name (e.g. `heisenberg`, `contact3d:1`) or path to a JSON model.
    #[arg(long, global = true, default_value = "heisenberg")]
    model: String,

    #[arg(long, global = true, value_enum, default_value_t = ConnArg::Nice)]
    connection: ConnArg,

    /// Number of random covectors.
    #[arg(long, global = true, default_value_t = 16)]
    samples: usize,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Time horizon: probe window for `classify`, search horizon for `lq`.
    #[arg(long, global = true)]
    t_max: Option<f64>,

    /// Relative rank threshold.
    #[arg(long, global = true, default_value_t = DEFAULT_RANK_TOL)]
    tol: f64,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,

    /// Base point of a single covector, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true, requires = "h")]
    x: Option<Vec<f64>>,

    /// Momentum of a single covector in the frame coframe, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true, requires = "x")]
    h: Option<Vec<f64>>,

    /// Sweep the vertical momentum over this many evenly spaced values.
    #[arg(long, global = true)]
    sweep: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Young diagram census over the sample.
    Classify,
    /// Canonical Ricci curvatures and normalization residuals.
    Ricci,
    /// Diameter bound estimate from Ricci lower bounds.
    BonnetMyers,
    /// First conjugate time of a constant-curvature LQ problem.
    Lq {
        /// Column counts of the Young diagram, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        diagram: Vec<usize>,
        /// Diagonal of the potential, one entry per box, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1")]
        q: Vec<f64>,
    },
    /// Consistency checks on the model and the curvature pipeline.
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConnArg {
    Nice,
    Group,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

fn run(cli: Cli) -> Result<bool, Error> {
    let connection = match cli.connection {
        ConnArg::Nice => ConnectionKind::Nice,
        ConnArg::Group => ConnectionKind::Group,
    };
    let mut cfg = RunConfig {
        model: cli.model,
        connection,
        samples: cli.samples,
        seed: cli.seed,
        t_max: cli.t_max,
        tol: cli.tol,
        point: cli.x.zip(cli.h),
        sweep: cli.sweep,
        ..Default::default()
    };
    let rep = match cli.command {
        Command::Classify => report::cmd_classify(&cfg)?,
        Command::Ricci => report::cmd_ricci(&cfg)?,
        Command::BonnetMyers => report::cmd_bonnet_myers(&cfg)?,
        Command::Lq { diagram, q } => {
            cfg.diagram = diagram;
            cfg.q = q;
            report::cmd_lq(&cfg)?
        }
        Command::Validate => report::cmd_validate(&cfg)?,
    };
    let format = match cli.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    let text = rep.render(format);
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    // a failed validation is reported in the document and in the exit code
    Ok(rep.document["results"]["passed"].as_bool() != Some(false))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = Error::Argument(e.to_string().trim().to_string());
            print!("{}", report::error_document(&err));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            print!("{}", report::error_document(&e));
            ExitCode::FAILURE
        }
    }
}
