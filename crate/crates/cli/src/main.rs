use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lacelab::error::LabError;
use lacelab::experiment::{default_out_dir, merge, parse_p_grid, run, ExperimentConfig, Format, ResultArchive};
use lacelab::fourier::MomentumGrid;
use lacelab::lattice::Boundary;

const EXIT_USAGE: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(name = "lacelab", version, about = "Monte Carlo and exact checks for site percolation on Z^d")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 16)]
    side: u64,
    #[arg(long, default_value = "torus", value_parser = ["torus", "free"])]
    boundary: String,
    /// one or more densities, comma separated
    #[arg(long, value_delimiter = ',', conflicts_with = "p_grid")]
    p: Vec<f64>,
    /// evenly spaced densities a:b:n
    #[arg(long)]
    p_grid: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// independent stream index, for runs meant to be merged
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// output directory (default: $LACELAB_OUT/<command> or results/<command>)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    /// axis, full or N-random
    #[arg(long, default_value = "axis")]
    k_grid: String,
}

#[derive(Args, Clone, Default)]
struct PcOpt {
    /// critical density used for the 10% safety guard
    #[arg(long)]
    pc: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct ScanOpts {
    /// wrapping or growth
    #[arg(long)]
    method: Option<String>,
    /// box sides (wrapping) or chemical distances (growth), comma separated
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    points: Option<usize>,
    /// density window a:b
    #[arg(long)]
    range: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// two-point function and susceptibility
    TwoPoint {
        #[command(flatten)]
        common: Common,
    },
    /// triangle family, W(k), H and ladder diagrams
    Diagrams {
        #[command(flatten)]
        common: Common,
        /// axis momentum for W(k)
        #[arg(long)]
        k: Option<f64>,
        /// ladder shapes m:n, comma separated
        #[arg(long)]
        ladder: Option<String>,
        /// also maximise H over random pairs
        #[arg(long)]
        with_h: bool,
    },
    /// random-walk momentum integrals
    RwIntegrals {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        m_max: Option<u32>,
        /// exponents n, comma separated
        #[arg(long)]
        n_values: Option<String>,
    },
    /// lace expansion coefficients of order 0 and 1
    PiCoefficients {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pc: PcOpt,
    },
    /// Ornstein-Zernike residuals and remainders
    OzeCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pc: PcOpt,
    },
    /// diagrammatic bounds as lhs, rhs and margin
    BoundsCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pc: PcOpt,
        /// step for the finite-difference inequalities
        #[arg(long)]
        h: Option<f64>,
        /// axis momentum for the displacement bounds
        #[arg(long)]
        k_disp: Option<f64>,
    },
    /// bootstrap functions f1, f2, f3 over a density grid
    BootstrapScan {
        #[command(flatten)]
        common: Common,
        /// second momentum grid for f3 (defaults to --k-grid)
        #[arg(long)]
        l_grid: Option<String>,
    },
    /// infrared bound constant
    IrBound {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pc: PcOpt,
        /// reference constant to test against
        #[arg(long)]
        c_ref: Option<f64>,
    },
    /// critical density by finite-size crossings
    PcScan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scan: ScanOpts,
    },
    /// susceptibility exponent from a log-log fit
    GammaFit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pc: PcOpt,
        #[command(flatten)]
        scan: ScanOpts,
        /// densities as fractions of pc, a:b:n (overrides --p)
        #[arg(long)]
        fractions: Option<String>,
    },
    /// exact tables by enumerating every configuration of a small box
    OracleEnum {
        #[command(flatten)]
        common: Common,
    },
    /// pool archives that differ only in seed or stream
    Merge {
        /// archive directories
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type Options = Vec<(&'static str, Option<String>)>;

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(|x| x.to_string())
}

fn scan_options(o: &ScanOpts) -> Options {
    vec![("method", o.method.clone()), ("sizes", o.sizes.clone()), ("points", s(&o.points)), ("range", o.range.clone())]
}

fn build(name: &str, c: &Common, options: Options) -> Result<ExperimentConfig, LabError> {
    let mut cfg = ExperimentConfig::new(name);
    cfg.dim = c.dim;
    cfg.side = c.side;
    cfg.boundary = c.boundary.parse::<Boundary>()?;
    cfg.p_grid = match (&c.p_grid, c.p.is_empty()) {
        (Some(g), _) => parse_p_grid(g)?,
        (None, false) => c.p.clone(),
        (None, true) => vec![0.5],
    };
    cfg.n_samples = c.samples;
    cfg.seed = c.seed;
    cfg.stream = c.stream;
    cfg.threads = c.threads;
    cfg.k_grid = c.k_grid.parse::<MomentumGrid>()?;
    cfg.format = c.format.parse::<Format>()?;
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    for (k, v) in options {
        if let Some(v) = v {
            cfg.options.insert(k.to_string(), v);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_of(cmd: &Command) -> Result<ExperimentConfig, LabError> {
    use Command::*;
    match cmd {
        TwoPoint { common } => build("two-point", common, vec![]),
        Diagrams { common, k, ladder, with_h } => build(
            "diagrams",
            common,
            vec![("k", s(k)), ("ladder", ladder.clone()), ("with-h", with_h.then(|| "true".into()))],
        ),
        RwIntegrals { common, lambda, m_max, n_values } => build(
            "rw-integrals",
            common,
            vec![("lambda", s(lambda)), ("m-max", s(m_max)), ("n-values", n_values.clone())],
        ),
        PiCoefficients { common, pc } => build("pi-coefficients", common, vec![("pc", s(&pc.pc))]),
        OzeCheck { common, pc } => build("oze-check", common, vec![("pc", s(&pc.pc))]),
        BoundsCheck { common, pc, h, k_disp } => {
            build("bounds-check", common, vec![("pc", s(&pc.pc)), ("h", s(h)), ("k-disp", s(k_disp))])
        }
        BootstrapScan { common, l_grid } => build("bootstrap-scan", common, vec![("l-grid", l_grid.clone())]),
        IrBound { common, pc, c_ref } => build("ir-bound", common, vec![("pc", s(&pc.pc)), ("c-ref", s(c_ref))]),
        PcScan { common, scan } => build("pc-scan", common, scan_options(scan)),
        GammaFit { common, pc, scan, fractions } => {
            let mut o = scan_options(scan);
            o.push(("pc", s(&pc.pc)));
            o.push(("fractions", fractions.clone()));
            build("gamma-fit", common, o)
        }
        OracleEnum { common } => build("oracle-enum", common, vec![]),
        Merge { .. } => unreachable!("merge has no experiment config"),
    }
}

fn write(archive: &ResultArchive, dir: &std::path::Path) -> Result<(), LabError> {
    for path in archive.write(dir)? {
        println!("{}", path.display());
    }
    for f in &archive.manifest.flags {
        eprintln!("flag: {f}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Merge { inputs, out } = &cli.command {
        let archives: Result<Vec<_>, _> = inputs.iter().map(|d| ResultArchive::read(d)).collect();
        let merged = archives.and_then(|a| merge(&a));
        return match merged {
            Ok(m) => {
                let dir = out.clone().unwrap_or_else(|| default_out_dir("merge"));
                match write(&m, &dir) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(e) => fail(e),
                }
            }
            Err(e) => fail(e),
        };
    }
    let config = match config_of(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("usage error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(&config) {
        Ok(outcome) => {
            if let Err(e) = write(&outcome.archive, &config.out) {
                return fail(e);
            }
            if outcome.inconclusive {
                ExitCode::from(EXIT_INCONCLUSIVE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(e),
    }
}

fn fail(e: LabError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        LabError::InvalidArgument(_) => ExitCode::from(EXIT_USAGE),
        _ => ExitCode::FAILURE,
    }
}
