use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use transdev_cli::{
    cmd_converge, cmd_inspect, cmd_list, ConvergeArgs, InspectArgs, Source, Target, DEFAULT_ORDER_THRESHOLD,
};

#[derive(Parser)]
#[command(name = "transdev", version, about = "Residual and convergence studies of deviation equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Torsion,
    Curvature,
    STensor,
    Transport,
}

#[derive(Subcommand)]
enum Command {
    /// Run convergence studies and write samples.csv and report.json.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER_THRESHOLD)]
        order_threshold: f64,
        #[arg(long)]
        quiet: bool,
    },
    /// Print torsion, curvature, S-tensor or a transport matrix as JSON.
    Inspect {
        #[arg(long, required_unless_present = "scenario", conflicts_with = "scenario")]
        config: Option<PathBuf>,
        /// Scenario name with default parameters, instead of a config file.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, value_enum)]
        what: What,
        #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
        s: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        r: f64,
        /// Chart coordinates, comma separated; overrides --s/--r for torsion and curvature.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        point: Option<Vec<f64>>,
        #[arg(long, default_value_t = -0.25, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
        to: f64,
        /// Transport once around the latitude circle at this polar angle (sphere families).
        #[arg(long)]
        loop_latitude: Option<f64>,
    },
    /// Print the registered scenario families as JSON.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
    let code = match cli.command {
        Command::Converge {
            config,
            out: dir,
            order_threshold,
            quiet,
        } => cmd_converge(
            &ConvergeArgs {
                config,
                out: dir,
                order_threshold,
                quiet,
            },
            &mut out,
            &mut err,
        ),
        Command::Inspect {
            config,
            scenario,
            what,
            s,
            r,
            point,
            from,
            to,
            loop_latitude,
        } => {
            let source = match (config, scenario) {
                (Some(p), _) => Source::Config(p),
                (None, Some(n)) => Source::Name(n),
                (None, None) => unreachable!("clap enforces one source"),
            };
            let what = match what {
                What::Torsion => Target::Torsion,
                What::Curvature => Target::Curvature,
                What::STensor => Target::STensor,
                What::Transport => Target::Transport,
            };
            cmd_inspect(
                &InspectArgs {
                    source,
                    what,
                    s,
                    r,
                    point,
                    from,
                    to,
                    loop_latitude,
                },
                &mut out,
                &mut err,
            )
        }
        Command::List => cmd_list(&mut out),
    };
    ExitCode::from(code as u8)
}
