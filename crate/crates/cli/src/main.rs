use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dropbox_core::report::{behavior_bars, fixture_bars, pareto_frontier, write_artifacts};
use dropbox_core::suite::{
    compare_to_reference, enumerate_configs, read_records_csv, records_to_csv, run_cells, run_suite, EnvRegistry,
    Learner, ReferenceFixture, RunCell, RunRecord, SweepConfig, Verdict,
};
use dropbox_core::{ApprovalMethod, Error};

#[derive(Parser)]
#[command(name = "mona-dropbox", version, about = "Camera Dropbox reward-hacking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ordinary RL vs oracle MONA on the public board, compared with the
    /// published numbers.
    Reproduce {
        #[arg(long, default_value = "out/reproduce")]
        output_root: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a sweep described by a JSON config.
    Suite {
        config: PathBuf,
        #[arg(long, default_value = "out/suite")]
        output_root: PathBuf,
        /// Replaces the config's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Plot data and reference comparison from existing record CSVs.
    Report {
        #[arg(long = "records", num_args = 1..)]
        records: Vec<PathBuf>,
        /// Emit bars for the published reference numbers as well.
        #[arg(long)]
        fixture: bool,
        #[arg(long, default_value = "out/report")]
        output_root: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

const EXIT_FAIL_VERDICT: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reproduce { output_root, seed } => reproduce(&output_root, seed),
        Command::Suite { config, output_root, seed, force, parallelism } => {
            suite(&config, &output_root, seed, force, parallelism)
        }
        Command::Report { records, fixture, output_root, force } => report(&records, fixture, &output_root, force),
    };
    match result {
        Ok(Some(Verdict::Fail)) => ExitCode::from(EXIT_FAIL_VERDICT),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn reproduce(root: &Path, seed: u64) -> anyhow::Result<Option<Verdict>> {
    let base = |method| RunCell {
        method,
        horizon: None,
        env: "public".into(),
        dataset_size: None,
        calibration: None,
        budget: None,
        seed,
        learner: Learner::ExactDP,
    };
    let cells = [base(ApprovalMethod::OrdinaryRl), RunCell { horizon: Some(1), ..base(ApprovalMethod::OracleMona) }];
    let records = run_cells(&cells, &EnvRegistry::new(), 1)?;
    for r in &records {
        if !r.is_ok() {
            anyhow::bail!("cell `{}` {}", r.cell.label(), r.status);
        }
    }
    let comparison = compare_to_reference(&records, &ReferenceFixture::PUBLISHED)?;
    let text = comparison.to_text();
    write_artifacts(
        root,
        &[
            ("records.csv", records_to_csv(&records)?.into_bytes()),
            ("comparison.txt", text.clone().into_bytes()),
            ("comparison.json", json(&comparison)),
            ("behavior_bars.json", json(&behavior_bars(&records))),
        ],
        true,
    )
    .with_context(|| format!("writing outputs under {}", root.display()))?;
    print!("{text}");
    Ok(Some(comparison.verdict))
}

fn suite(
    config: &Path,
    root: &Path,
    seed: Option<u64>,
    force: bool,
    parallelism: usize,
) -> anyhow::Result<Option<Verdict>> {
    let text =
        fs::read_to_string(config).map_err(Error::from).with_context(|| format!("reading {}", config.display()))?;
    let mut sc = SweepConfig::from_json(&text)?;
    if let Some(seed) = seed {
        sc.seeds = vec![seed];
    }
    let names = ["records.csv", "behavior_bars.json", "pareto_frontier.json"];
    if !force && names.iter().any(|n| root.join(n).exists()) {
        return Err(
            Error::Usage(format!("{} already holds suite outputs; pass --force to overwrite", root.display())).into()
        );
    }
    let expected = enumerate_configs(&sc).len();
    eprintln!("running {expected} cells");
    let records = run_suite(&sc, parallelism)?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    write_artifacts(
        root,
        &[
            (names[0], records_to_csv(&records)?.into_bytes()),
            (names[1], json(&behavior_bars(&records))),
            (names[2], json(&pareto_frontier(&records))),
        ],
        force,
    )?;
    println!("{} records ({failed} failed) written to {}", records.len(), root.display());
    Ok(None)
}

fn report(inputs: &[PathBuf], fixture: bool, root: &Path, force: bool) -> anyhow::Result<Option<Verdict>> {
    if inputs.is_empty() && !fixture {
        return Err(Error::Usage("nothing to report: pass --records and/or --fixture".into()).into());
    }
    let mut records: Vec<RunRecord> = Vec::new();
    for path in inputs {
        let file = fs::File::open(path).map_err(Error::from).with_context(|| format!("opening {}", path.display()))?;
        records.extend(read_records_csv(file).with_context(|| format!("parsing {}", path.display()))?);
    }
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    let mut verdict = None;
    if !records.is_empty() {
        files.push(("behavior_bars.json", json(&behavior_bars(&records))));
        files.push(("pareto_frontier.json", json(&pareto_frontier(&records))));
        match compare_to_reference(&records, &ReferenceFixture::PUBLISHED) {
            Ok(c) => {
                print!("{}", c.to_text());
                files.push(("comparison.txt", c.to_text().into_bytes()));
                files.push(("comparison.json", json(&c)));
                verdict = Some(c.verdict);
            }
            Err(e) => eprintln!("skipping reference comparison: {e}"),
        }
    }
    if fixture {
        files.push(("reference_bars.json", json(&fixture_bars(&ReferenceFixture::PUBLISHED))));
    }
    let written = write_artifacts(root, &files, force)?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(verdict)
}
