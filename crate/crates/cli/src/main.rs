use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use locfilter::report::{
    estimation_error, read_metrics, summary_table, write_run, write_snapshots,
};
use locfilter::{Error, FieldNorm, Mode, RunConfig, RunOutput};

#[derive(Parser)]
#[command(
    name = "locfilter",
    version,
    about = "Localized minimax filtering for 2D advection-diffusion"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// Run one of the built-in experiments.
    Experiment {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        id: u32,
        /// Reduced resolution for a quick look.
        #[arg(long)]
        desk: bool,
        /// Number of time steps (default: the experiment's own).
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        over: Overrides,
    },
    /// Per-step timing of localized vs global filtering for several subdomain grids.
    Bench {
        /// Subdomains per axis, comma separated (N = n² subdomains).
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        subdomains: Vec<usize>,
        /// Elements per subdomain and axis.
        #[arg(long, default_value_t = 15)]
        elements: usize,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Compare two run directories.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Treat Schwarz non-convergence as an error (exit code 3).
    #[arg(long)]
    strict: bool,
    /// Solve on a single subdomain covering the whole domain at the same resolution.
    #[arg(long)]
    mono: bool,
    /// Write the stitched field every N steps to `fields/`.
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Measure errors in the mass-weighted (L²) norm instead of the nodal 2-norm.
    #[arg(long)]
    mass_norm: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Localized,
    Global,
    Forward,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Localized => Mode::Localized,
            ModeArg::Global => Mode::Global,
            ModeArg::Forward => Mode::Forward,
        }
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = self.mode {
            cfg.run.mode = m.into();
        }
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.decomposition.workers = w;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = Some(o.clone());
        }
        cfg.run.strict |= self.strict;
        if let Some(n) = self.snapshot_every {
            cfg.output.snapshot_every = n;
        }
        if self.mass_norm {
            cfg.output.norm = FieldNorm::Mass;
        }
        if self.mono {
            *cfg = cfg.mono_domain();
        }
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Localized => "localized",
        Mode::Global => "global",
        Mode::Forward => "forward",
    }
}

fn execute(cfg: &RunConfig) -> Result<RunOutput, Error> {
    let out = locfilter::run(cfg)?;
    let dir = cfg
        .output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(mode_name(cfg.run.mode)));
    write_run(&dir, &out.metrics, &out.timings, &out.summary)?;
    write_snapshots(
        &dir,
        &out.decomposition.global,
        &out.snapshots,
        cfg.run.dt,
        &cfg.truth,
    )?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string())?;
    print!(
        "{}",
        summary_table(&[(mode_name(cfg.run.mode), &out.summary)])
    );
    println!("wrote {}", dir.display());
    Ok(out)
}

fn bench(subdomains: &[usize], elements: usize, steps: usize, workers: usize) -> Result<(), Error> {
    println!(
        "{:>4} {:>8} {:>14} {:>14} {:>9}",
        "N", "nodes", "localized_ms", "global_ms", "speedup"
    );
    for &n in subdomains {
        let mut cfg = locfilter::scenarios::experiment2();
        cfg.geometry.size = [n as f64, n as f64];
        cfg.geometry.elements_per_subdomain = [elements, elements];
        cfg.decomposition.subdomains = [n, n];
        cfg.decomposition.workers = workers;
        cfg.uncertainty.observed = vec![1];
        cfg.output.probe = [0.5, 0.5];
        cfg.run.steps = steps;
        let per_step = |mode: Mode| -> Result<f64, Error> {
            let mut c = cfg.clone();
            c.run.mode = mode;
            let out = locfilter::run(&c)?;
            Ok(out.summary.wall_ms / steps as f64)
        };
        let loc = per_step(Mode::Localized)?;
        let glob = per_step(Mode::Global)?;
        let nodes = (n * elements + 1).pow(2);
        println!(
            "{:>4} {:>8} {:>14.2} {:>14.2} {:>9.2}",
            n * n,
            nodes,
            loc,
            glob,
            glob / loc
        );
    }
    Ok(())
}

fn compare(a: &Path, b: &Path) -> Result<(), Error> {
    let ma = read_metrics(&a.join("metrics.csv"))?;
    let mb = read_metrics(&b.join("metrics.csv"))?;
    let (ea, eb) = (estimation_error(&ma), estimation_error(&mb));
    println!("{:<40} {:>10}", "run", "e_e [%]");
    println!("{:<40} {:>10.2}", a.display(), 100.0 * ea);
    println!("{:<40} {:>10.2}", b.display(), 100.0 * eb);
    println!("ratio a/b: {:.4}", ea / eb);
    let identical = std::fs::read(a.join("metrics.csv"))? == std::fs::read(b.join("metrics.csv"))?;
    println!("metrics.csv bit-identical: {identical}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    locfilter::init_linalg();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { config, over } => RunConfig::load(&config).and_then(|mut c| {
            over.apply(&mut c);
            c.validate()?;
            execute(&c).map(drop)
        }),
        Cmd::Experiment {
            id,
            desk,
            steps,
            over,
        } => locfilter::scenarios::experiment(id, desk).and_then(|mut c| {
            if let Some(s) = steps {
                c.run.steps = s;
            }
            over.apply(&mut c);
            if over.out.is_none() {
                c.output.dir = Some(PathBuf::from(format!(
                    "runs/exp{id}_{}",
                    mode_name(c.run.mode)
                )));
            }
            c.validate()?;
            execute(&c).map(drop)
        }),
        Cmd::Bench {
            subdomains,
            elements,
            steps,
            workers,
        } => bench(&subdomains, elements, steps, workers),
        Cmd::Compare { a, b } => compare(&a, &b),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
