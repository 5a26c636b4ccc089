use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mobility_panel::dag::{backdoor_sets, derive_controls, Bundled, CausalDag, ControlBlock};
use mobility_panel::estimators::fit;
use mobility_panel::pipeline::{self, RunConfig};
use mobility_panel::report::{compound_effect, Format, RegressionTable};
use mobility_panel::sim::{recovery_experiment, simulate, ScmParams};
use mobility_panel::{Error, Execution, Result};

#[derive(Parser)]
#[command(name = "mobility", version, about = "Mobility and COVID-19 growth panel toolkit")]
struct Cli {
    /// Run config (ingest, index, fit, table) or simulator parameters (simulate, recover).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the simulator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run every stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the weekly municipality panel and write it as long CSV.
    Ingest,
    /// Build the state-level soft indexes.
    Index,
    /// Print backdoor adjustment sets and the derived control blocks.
    Dag {
        /// Graph file; use --bundled for the stock graphs.
        file: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "file")]
        bundled: Option<BundledArg>,
        #[arg(long, default_value = "X")]
        exposure: String,
        #[arg(long, default_value = "Y")]
        outcome: String,
        /// Largest set size searched; defaults to every eligible node.
        #[arg(long)]
        max_size: Option<usize>,
    },
    /// Estimate one column.
    Fit {
        #[arg(long, default_value = "dln_cases")]
        dependent: String,
        #[arg(long, default_value_t = 1)]
        lag: usize,
    },
    /// Estimate the full table and write it with summary files.
    Table,
    /// Draw a synthetic panel from the structural model.
    Simulate,
    /// Monte Carlo coverage and bias of the mobility coefficient.
    Recover {
        #[arg(long, default_value_t = 200)]
        seeds: usize,
        /// Control blocks left out of the fitted spec.
        #[arg(long, value_delimiter = ',')]
        omit: Vec<String>,
    },
    /// Cumulative effect of per-horizon coefficients.
    Compound {
        #[arg(required = true, allow_negative_numbers = true)]
        coefficients: Vec<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BundledArg {
    Full,
    Sub2020,
    Direct,
    Confounder,
}

impl From<BundledArg> for Bundled {
    fn from(b: BundledArg) -> Bundled {
        match b {
            BundledArg::Full => Bundled::MobilityFull,
            BundledArg::Sub2020 => Bundled::Mobility2020,
            BundledArg::Direct => Bundled::DirectEffect,
            BundledArg::Confounder => Bundled::VaccinationConfounder,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

fn csv_text(panel: &mobility_panel::panel::WeeklyPanel) -> Result<String> {
    let mut buf = Vec::new();
    panel.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("panel csv is utf-8"))
}

impl Cli {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn run_config(&self) -> Result<RunConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::config("this command needs --config <path>"))?;
        RunConfig::load(path)
    }

    fn scm_params(&self) -> Result<ScmParams> {
        let mut p = match &self.config {
            Some(path) => ScmParams::from_toml(&read(path)?)?,
            None => ScmParams::default(),
        };
        if let Some(seed) = self.seed {
            p.seed = seed;
        }
        Ok(p)
    }
}

fn run(cli: &Cli) -> Result<()> {
    let exec = cli.exec();
    match &cli.command {
        Command::Ingest => {
            let built = pipeline::build_panel(&cli.run_config()?, exec)?;
            let out = cli.out_dir();
            let path = write(&out, "panel.csv", &csv_text(&built.panel)?)?;
            if let Some(d) = &built.durations {
                write(&out, "durations.csv", &mobility_panel::report::durations_csv(d)?)?;
            }
            for (reason, n) in &built.dropped {
                eprintln!("dropped {reason}: {n}");
            }
            println!("{}", path.display());
        }
        Command::Index => {
            let (panel, rejects) = pipeline::soft_index_panel(&cli.run_config()?, exec)?;
            let path = write(&cli.out_dir(), "soft_index.csv", &csv_text(&panel)?)?;
            eprintln!("rejected count records: {rejects}");
            println!("{}", path.display());
        }
        Command::Dag {
            file,
            bundled,
            exposure,
            outcome,
            max_size,
        } => {
            let dag = match (file, bundled) {
                (Some(f), _) => CausalDag::parse(&read(f)?)?,
                (None, Some(b)) => Bundled::from(*b).load(),
                (None, None) => return Err(Error::config("give a graph file or --bundled <name>")),
            };
            let limit = max_size.unwrap_or(dag.len());
            let sets = backdoor_sets(&dag, exposure, outcome, limit)?;
            if !sets.is_identified() {
                println!("no backdoor adjustment set of size <= {limit}");
            }
            for s in &sets.sets {
                let proxy = if s.uses_deterministic_proxy { "  (deterministic proxy)" } else { "" };
                println!("{{{}}}{proxy}", s.nodes.join(", "));
            }
            if let Ok(blocks) = derive_controls(&dag, exposure, outcome) {
                let names: Vec<&str> = blocks.iter().map(|b| b.as_str()).collect();
                println!("controls: {}", names.join(", "));
            }
        }
        Command::Fit { dependent, lag } => {
            let cfg = cli.run_config()?;
            let built = pipeline::build_panel(&cfg, exec)?;
            let spec = pipeline::spec_for(&cfg, dependent, *lag).map_err(|e| e.in_stage("specify"))?;
            let result = fit(&built.panel, &spec, &cfg.ab_options()).map_err(|e| e.in_stage("estimate"))?;
            let text = RegressionTable::new(vec![result]).render(Format::Text)?;
            if let Some(out) = &cli.out {
                write(out, "fit.txt", &text)?;
            }
            print!("{text}");
        }
        Command::Table => {
            let cfg = cli.run_config()?;
            for path in pipeline::run(&cfg, &cli.out_dir(), exec)? {
                println!("{}", path.display());
            }
        }
        Command::Simulate => {
            let params = cli.scm_params()?;
            let sim = simulate(&params)?;
            let out = cli.out_dir();
            write(&out, "panel.csv", &csv_text(&sim.panel)?)?;
            let mut meta = String::new();
            for (k, v) in sim.metadata() {
                meta.push_str(&format!("# {k} = {v}\n"));
            }
            meta.push_str(&sim.truth.to_toml());
            write(&out, "truth.toml", &meta)?;
            println!("{}", out.display());
        }
        Command::Recover { seeds, omit } => {
            let params = cli.scm_params()?;
            let omitted = omit.iter().map(|b| ControlBlock::parse(b)).collect::<Result<Vec<_>>>()?;
            let blocks: Vec<ControlBlock> = derive_controls(&params.dag(), "X", "Y")?
                .into_iter()
                .filter(|b| !omitted.contains(b))
                .collect();
            let spec = params.spec_with(&blocks);
            let r = recovery_experiment(&params, &spec, *seeds, exec)?;
            let report = format!(
                "target = {}\ntruth = {}\nseeds = {}\nfailures = {}\ncoverage = {:.4}\nmean_bias = {:.6}\nmean_se = {:.6}\n",
                r.target,
                r.truth,
                r.outcomes.len(),
                r.failures,
                r.coverage_rate,
                r.mean_bias,
                r.mean_se
            );
            if let Some(out) = &cli.out {
                let mut csv = String::from("seed,estimate,std_error\n");
                for o in &r.outcomes {
                    csv.push_str(&format!("{},{},{}\n", o.seed, o.estimate, o.std_error));
                }
                write(out, "recovery.csv", &csv)?;
                write(out, "recovery.toml", &report)?;
            }
            print!("{report}");
        }
        Command::Compound { coefficients } => {
            let c = compound_effect(coefficients)?;
            println!("{c:.6} ({:.4}%)", c * 100.0);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
