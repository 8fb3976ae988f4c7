use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sdwsn_ids::cpd::CriticalValueCache;
use sdwsn_ids::experiment::{
    load_batch, run_experiment, summarize, sweep, with_jobs, Prepared, ScenarioConfig,
};
use sdwsn_ids::Result;

#[derive(Parser)]
#[command(name = "sdwsn-ids", version, about = "Change-point intrusion detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Critical-value cache; defaults to <out>/cv-cache.csv.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(short, long, default_value_t = 0)]
    jobs: usize,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        match &self.config {
            Some(p) => ScenarioConfig::load(p),
            None => {
                let c = ScenarioConfig::default();
                c.validate()?;
                Ok(c)
            }
        }
    }

    fn cache(&self) -> Result<CriticalValueCache> {
        let path = self
            .cache
            .clone()
            .unwrap_or_else(|| self.out.join("cv-cache.csv"));
        CriticalValueCache::open(path)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute (or load) the critical values a scenario and its sweep need.
    Calibrate(Common),
    /// Simulate and evaluate a batch of seeds.
    Run {
        #[command(flatten)]
        common: Common,
        /// Seeds, e.g. `1,2,5` or `0..20`; the config's seeds when omitted.
        #[arg(short, long, value_parser = parse_seeds)]
        seeds: Option<SeedList>,
    },
    /// Grid search of (m, gamma) on the training seeds.
    Sweep(Common),
    /// Summarize the runs stored for a scenario.
    Report(Common),
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<SeedList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|e| format!("{part:?}: {e}"))?;
            let b: u64 = b.parse().map_err(|e| format!("{part:?}: {e}"))?;
            if b <= a {
                return Err(format!("empty range {part:?}"));
            }
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|e| format!("{part:?}: {e}"))?);
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(SeedList(out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Calibrate(c) => {
            let cfg = c.scenario()?;
            let mut cache = c.cache()?;
            let pairs = cfg.critical_pairs(true);
            with_jobs(c.jobs, || {
                sdwsn_ids::experiment::CriticalTable::prepare(&mut cache, &pairs, &cfg.calibration)
            })??;
            println!("gamma,confidence,value");
            for (g, conf) in pairs {
                let v = cache.get(g, conf, &cfg.calibration).expect("prepared");
                println!("{g},{conf},{:.4}", v.value);
            }
            Ok(())
        }
        Command::Run { common, seeds } => {
            let cfg = common.scenario()?;
            let mut cache = common.cache()?;
            let prepared = Prepared::new(cfg, &mut cache)?;
            let batch = run_experiment(&prepared, &seeds.map(|s| s.0).unwrap_or_default(), &common.out, common.jobs)?;
            println!(
                "{}: {} runs written to {}",
                batch.scenario,
                batch.records.len(),
                prepared.dir(&common.out).display()
            );
            for f in &batch.failures {
                eprintln!("seed {} failed: {}", f.seed, f.error);
            }
            if batch.records.is_empty() && !batch.failures.is_empty() {
                return Err(sdwsn_ids::Error::Config {
                    field: "seeds".into(),
                    reason: "every seed failed".into(),
                });
            }
            Ok(())
        }
        Command::Sweep(c) => {
            let cfg = c.scenario()?;
            let mut cache = c.cache()?;
            let out = sweep(&cfg, &mut cache, c.jobs)?;
            let dir = c.out.join(&out.digest).join("sweep");
            out.write(&dir)?;
            print!("{}", out.best_csv());
            println!("written to {}", dir.display());
            Ok(())
        }
        Command::Report(c) => {
            let cfg = c.scenario()?;
            report(&cfg, &c.out)
        }
    }
}

fn report(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let digest = cfg.digest();
    let mut batch = load_batch(out, &digest)?;
    if batch.scenario.is_empty() {
        batch.scenario = cfg.name.clone();
    }
    let rep = summarize(&batch, cfg.detection.horizon, &cfg.weights)?;
    let dir = out.join(&digest).join("report");
    rep.write(&dir)?;
    println!("{} ({} runs)", rep.scenario, rep.runs);
    if let Some(p) = rep.classification.classification_prob {
        println!("classification probability: {p:.3}");
    }
    for (name, r) in [("ctrl_overhead", &rep.overhead), ("delivery_rate", &rep.delivery)] {
        if let Some(r) = r {
            println!("{name}: DR {:.3}, 1-S {:.3}", r.dr, r.one_minus_s);
        }
    }
    let id = &rep.identification;
    if !id.v2_per_attacker.is_empty() {
        println!(
            "identification: {:?}, misidentifications {}",
            id.v2_per_attacker, id.v2_misidentifications
        );
    }
    println!("written to {}", dir.display());
    Ok(())
}
