use clap::{Parser, Subcommand as ClapSub};
use elliptic_lab::campaign::{self, CampaignConfig, Subcommand};
use elliptic_lab::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "elliptic-lab", version, about = "Verification campaigns for lattice elliptic operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Campaign configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the global pool.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(ClapSub)]
enum Command {
    /// Assembly audit: kernel, accretivity, adjoint, resolvent identities, sector.
    Assemble(Common),
    /// Semigroup oracle, conservation and Gaussian kernel fits.
    Heat(Common),
    /// Off-diagonal decay of the three families.
    Offdiag(Common),
    /// L^p to L^q bounds across resolutions.
    Lpq(Common),
    /// Square root, Riesz transform and Kato ratios.
    Kato(Common),
    /// Square functions.
    Sqfn(Common),
    /// Every section on one shared context.
    All(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (sub, common) = match cli.command {
        Command::Assemble(c) => (Subcommand::Assemble, c),
        Command::Heat(c) => (Subcommand::Heat, c),
        Command::Offdiag(c) => (Subcommand::Offdiag, c),
        Command::Lpq(c) => (Subcommand::Lpq, c),
        Command::Kato(c) => (Subcommand::Kato, c),
        Command::Sqfn(c) => (Subcommand::Sqfn, c),
        Command::All(c) => (Subcommand::All, c),
    };
    if let Some(j) = common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let mut config = match CampaignConfig::from_path(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    let report = match campaign::run(sub, &config) {
        Ok(r) => r,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let dir = common.out.or_else(|| config.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    match report.write(&dir) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: writing report: {e}");
            return ExitCode::from(1);
        }
    }
    let failures = report.gate_failures();
    for r in &report.records {
        println!("{:<8} {}", format!("{:?}", r.status).to_lowercase(), r.name);
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for r in failures {
            eprintln!("gate failed: {} ({})", r.name, r.criterion);
        }
        ExitCode::from(1)
    }
}
