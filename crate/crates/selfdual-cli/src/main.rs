//! `selfdual`: command-line verification of self-dual polylinear structures.

mod parse;
mod report;
mod suites;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use selfdual::elliptic::MonodromyConvention;
use suites::{Direction, FmArgs, Settings, Tolerances};

#[derive(Parser, Debug)]
#[command(
    name = "selfdual",
    version,
    about = "Verify self-dual polylinear structures and their mirror symmetry"
)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Include wall-clock time in the report (makes output non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
    /// Threshold below which singular values count as zero.
    #[arg(long, global = true, default_value_t = 1e-10)]
    rank_tol: f64,
    /// Threshold for exact algebraic identities.
    #[arg(long, global = true, default_value_t = 1e-12)]
    identity_tol: f64,
    /// Threshold for closedness of forms on charts.
    #[arg(long, global = true, default_value_t = 1e-8)]
    field_tol: f64,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "SELFDUAL_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Convention {
    ProofTranslation,
    SwappedLabels,
}

impl From<Convention> for MonodromyConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::ProofTranslation => MonodromyConvention::ProofTranslation,
            Convention::SwappedLabels => MonodromyConvention::SwappedLabels,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Random pullbacks of the normal form: compatibility and the dualizing form.
    VerifyPointwise {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        s: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Weak self-duality of TY x_Y TY over a Hessian chart.
    AffineCheck {
        /// Chart configuration (TOML). Defaults to the bundled quartic1d chart.
        #[arg(long)]
        chart: Option<PathBuf>,
    },
    /// Build X_(tau,t), read off its torus data and recover the mirror pair.
    Mirror {
        #[arg(long, value_parser = parse::complex, allow_hyphen_values = true)]
        tau: num_complex::Complex64,
        #[arg(long, value_parser = parse::complex, allow_hyphen_values = true)]
        t: num_complex::Complex64,
        #[arg(long, value_enum, default_value_t = Convention::ProofTranslation)]
        convention: Convention,
    },
    /// Fourier-Mukai-type transform of a form on one elliptic curve.
    Fm {
        #[arg(long, value_parser = parse::complex, allow_hyphen_values = true)]
        tau: num_complex::Complex64,
        #[arg(long, value_parser = parse::complex, allow_hyphen_values = true)]
        t: num_complex::Complex64,
        /// Form such as `1`, `dr`, `2*cos(1,0)*dr^ds`.
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        /// Power of the dualizing form (0 or 1).
        #[arg(long, default_value_t = 1)]
        j: usize,
        #[arg(long, value_enum, default_value_t = Direction::Forward)]
        direction: Direction,
        /// Highest Fourier frequency kept in the output.
        #[arg(long, default_value_t = 2)]
        max_freq: u32,
    },
    /// Commutation relations of the L operators and the Lie algebra they span.
    RepCheck {
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
    /// Commutation of L with d, d* and the Laplacian on trigonometric forms.
    SkaidCheck {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long = "N", default_value_t = 4)]
        max_freq: u32,
    },
    /// Every suite with default arguments.
    All,
}

fn run(cli: &Cli) -> Result<report::Report> {
    let settings = Settings {
        seed: cli.seed,
        tolerances: Tolerances {
            rank: cli.rank_tol,
            identity: cli.identity_tol,
            field: cli.field_tol,
        },
    };
    match &cli.command {
        Command::VerifyPointwise { n, s, trials } => {
            suites::verify_pointwise(*n, *s, *trials, &settings)
        }
        Command::AffineCheck { chart } => {
            let (cfg, source) = suites::load_chart(chart.as_deref())?;
            suites::affine_check(&cfg, &source, &settings)
        }
        Command::Mirror { tau, t, convention } => {
            suites::mirror(*tau, *t, (*convention).into(), &settings)
        }
        Command::Fm {
            tau,
            t,
            alpha,
            j,
            direction,
            max_freq,
        } => {
            let terms = parse::form_spec(alpha)?;
            let args = FmArgs {
                tau: *tau,
                t: *t,
                alpha: &terms,
                alpha_text: alpha,
                j: *j,
                direction: *direction,
                max_freq: *max_freq,
            };
            suites::fm(&args, &settings)
        }
        Command::RepCheck { n } => suites::rep_check(*n, &settings),
        Command::SkaidCheck { n, max_freq } => suites::skaid_check(*n, *max_freq, &settings),
        Command::All => suites::all(&settings),
    }
}

fn emit(cli: &Cli, report: &report::Report) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    match &cli.out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => Ok(std::io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let start = Instant::now();
    let mut report = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if cli.timing {
        report.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    if let Err(e) = emit(&cli, &report) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        for c in report
            .checks
            .iter()
            .filter(|c| c.verdict == report::Verdict::Fail)
        {
            eprintln!(
                "FAIL {}: residual {:e} >= {:e}",
                c.id, c.residual, c.threshold
            );
        }
        ExitCode::from(1)
    }
}
