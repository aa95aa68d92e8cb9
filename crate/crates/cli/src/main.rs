//! `aemr`: almost exact randomization tests for trio Mendelian randomization.

mod format;
mod manifest;

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use aemr::adjustment::{check_validity, AdjustmentSpec, Side};
use aemr::config::{AnalysisConfig, RawConfig, RawData, RawInstrument, RawRoles, RawTest, RawWindow};
use aemr::data::{load_cohort, load_genetic_map, validate_mendelian, write_genetic_map, write_haplotypes, write_phenotypes, Cohort, Severity};
use aemr::error::Error;
use aemr::hmm::MeiosisModel;
use aemr::power::{run_power, PowerSettings};
use aemr::randtest::{Tail, TestDesign};
use aemr::rng::{derive_seed, purpose};
use aemr::simgen::{default_params, make_cohort, SimParams};
use aemr::stats::StatisticKind;
use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use format::{fisher_rows, g6, read_test_table, write_test_table, TestRow};
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "aemr", version, about = "Almost exact Mendelian randomization tests on parent-offspring trios")]
struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, env = "AEMR_THREADS")]
    threads: Option<usize>,
    /// Print results as JSON with full precision instead of TSV.
    #[arg(long, global = true)]
    json: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trio cohort and write data files with an analysis config.
    Simulate(SimulateArgs),
    /// Run the randomization test described by a config file.
    Test(TestArgs),
    /// Append Fisher combination rows to a `test` table.
    Combine(CombineArgs),
    /// Rejection frequencies over simulated replicates.
    Power(PowerArgs),
    /// Print the propensity score of every trio and instrument.
    Propensity(PropensityArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of trios [default: 15000].
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// True causal effect of the exposure on the outcome.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    beta: f64,
}

#[derive(Args)]
struct Output {
    /// Write results here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Manifest path [default: <output>.manifest.json, or standard error].
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl Output {
    fn manifest_path(&self) -> Option<PathBuf> {
        self.manifest.clone().or_else(|| {
            self.output.as_ref().map(|o| {
                let mut name = o.as_os_str().to_owned();
                name.push(".manifest.json");
                PathBuf::from(name)
            })
        })
    }
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the statistic of the config file.
    #[arg(long)]
    statistic: Option<StatisticKind>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CombineArgs {
    /// Table written by `test` [default: standard input].
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum TailArg {
    Upper,
    Lower,
}

impl From<TailArg> for Tail {
    fn from(t: TailArg) -> Self {
        match t {
            TailArg::Upper => Tail::Upper,
            TailArg::Lower => Tail::Lower,
        }
    }
}

#[derive(Args)]
struct PowerArgs {
    /// Trios per replicate.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// True causal effect in the simulated cohorts.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    beta: f64,
    /// Null values to test, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
    beta0: Vec<f64>,
    /// Statistics, comma separated [default: all].
    #[arg(long, value_delimiter = ',')]
    statistic: Vec<StatisticKind>,
    /// Monte Carlo draws per test.
    #[arg(long, default_value_t = 500)]
    draws: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "upper")]
    tail: TailArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct PropensityArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    output: Output,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, cli.json),
        Command::Test(a) => test(a, cli.json),
        Command::Combine(a) => combine(a, cli.json),
        Command::Power(a) => power(a, cli.json),
        Command::Propensity(a) => propensity(a, cli.json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for configuration problems, 3 for invalid input data, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_data_error() => 3,
        Some(
            Error::Config(_)
            | Error::InvalidWindow(_)
            | Error::InvalidEpsilon(_)
            | Error::InvalidProbability(_)
            | Error::ZeroDraws,
        ) => 2,
        _ => 1,
    }
}

fn emit(text: &str, output: &Output, manifest: &mut RunManifest) -> anyhow::Result<()> {
    match &output.output {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            manifest.outputs.push(path.clone());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn simulate(args: &SimulateArgs, json: bool) -> anyhow::Result<()> {
    let mut manifest = RunManifest::start("simulate");
    manifest.seed = Some(args.seed);
    let defaults = default_params();
    let params = SimParams {
        n: args.n.unwrap_or(defaults.n),
        beta: args.beta,
        ..defaults
    };
    if params.n == 0 {
        return Err(Error::Config("--n must be at least 1".into()).into());
    }
    let sim = make_cohort(&params, args.seed)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let file = |name: &str| args.out.join(name);
    write_genetic_map(&sim.cohort.map, file("map.tsv"))?;
    write_haplotypes(&sim.cohort, file("haplotypes.tsv"))?;
    write_phenotypes(&sim.cohort, file("phenotypes.tsv"))?;

    let config = RawConfig {
        data: RawData {
            map: "map.tsv".into(),
            haplotypes: "haplotypes.tsv".into(),
            phenotypes: "phenotypes.tsv".into(),
        },
        test: RawTest {
            instruments: params.instruments.iter().map(|&j| RawInstrument::Locus(j + 1)).collect(),
            side: Some(Side::Genotype),
            statistic: Some(StatisticKind::CleverF),
            beta0: None,
            draws: Some(1000),
            seed: Some(args.seed),
            epsilon: Some(params.epsilon),
            fisher: Some(true),
            ..Default::default()
        },
        window: Some(RawWindow::Loci {
            radius: params.hidden_radius,
        }),
        roles: Some(RawRoles::from(&sim.roles)),
    };
    std::fs::write(file("analysis.toml"), config.to_toml()?)?;
    manifest.outputs = ["map.tsv", "haplotypes.tsv", "phenotypes.tsv", "analysis.toml"]
        .into_iter()
        .map(file)
        .collect();
    if json {
        print!("{}", to_json(&manifest.outputs)?);
    }
    manifest.finish(Some(&file("manifest.json")))
}

/// Loads the cohort of a config, rejecting trios that break Mendelian
/// inheritance when the mutation rate is zero.
fn load(cfg: &AnalysisConfig) -> anyhow::Result<(Cohort, MeiosisModel)> {
    let map = load_genetic_map(&cfg.data.map)?;
    let model = MeiosisModel::new(&map, cfg.epsilon)?;
    let cohort = load_cohort(map, &cfg.data.haplotypes, &cfg.data.phenotypes)?;
    let mut mutations = 0;
    for trio in &cohort.trios {
        for v in validate_mendelian(trio, cfg.epsilon) {
            if v.severity == Severity::Error {
                log::error!("family {}: allele at locus {} not transmitted by its parent", trio.family_id, v.locus + 1);
                return Err(Error::ImpossibleHaplotype { locus: v.locus + 1 }.into());
            }
            mutations += 1;
        }
    }
    if mutations > 0 {
        log::warn!("{mutations} putative de novo mutations in the cohort");
    }
    for spec in &cfg.specs {
        spec.validate(&cohort.map)?;
    }
    if let Some(roles) = &cfg.roles {
        for spec in &cfg.specs {
            let report = check_validity(&spec.hidden_set(&cohort.map, &[]), roles);
            if !report.passes() {
                log::warn!(
                    "instrument {}: adjustment set fails the declared roles (relevance {}, exclusion {})",
                    spec.instrument + 1,
                    report.relevance,
                    report.exclusion
                );
            }
        }
    }
    Ok((cohort, model))
}

fn label(spec: &AdjustmentSpec) -> String {
    let suffix = match spec.side {
        Side::Genotype => "",
        Side::Maternal => "m",
        Side::Paternal => "f",
    };
    format!("{}{suffix}", spec.instrument + 1)
}

#[derive(Serialize)]
struct TestReport<'a> {
    statistic: StatisticKind,
    rows: &'a [TestRow],
}

fn test(args: &TestArgs, json: bool) -> anyhow::Result<()> {
    let mut manifest = RunManifest::start("test");
    let mut cfg = AnalysisConfig::load(&args.config)?;
    if let Some(s) = args.statistic {
        cfg.statistic = s;
    }
    manifest.config = Some(args.config.clone());
    manifest.seed = Some(cfg.seed);
    let (cohort, model) = load(&cfg)?;

    let mut per_instrument = Vec::with_capacity(cfg.specs.len());
    for (s, spec) in cfg.specs.iter().enumerate() {
        let seed = derive_seed(cfg.seed, &[purpose::INSTRUMENT, s as u64]);
        let design = TestDesign::prepare(&cohort, &model, std::slice::from_ref(spec))?;
        per_instrument.push((label(spec), seed, design.run(&cfg.beta0, &[cfg.statistic], cfg.draws, seed, cfg.tail)?));
    }
    let mut rows = Vec::new();
    for (o, _) in cfg.beta0.iter().enumerate() {
        for (name, seed, results) in &per_instrument {
            let r = &results[o];
            rows.push(TestRow {
                instrument: name.clone(),
                beta0: r.beta0,
                stat: r.observed_stat,
                p: r.p_value,
                p_corrected: r.p_value_corrected,
                draws: r.draws,
                seed: Some(*seed),
            });
        }
    }
    if cfg.joint && cfg.specs.len() > 1 {
        let design = TestDesign::prepare(&cohort, &model, &cfg.specs)?;
        for r in design.run(&cfg.beta0, &[cfg.statistic], cfg.draws, cfg.seed, cfg.tail)? {
            rows.push(TestRow {
                instrument: "joint".into(),
                beta0: r.beta0,
                stat: r.observed_stat,
                p: r.p_value,
                p_corrected: r.p_value_corrected,
                draws: r.draws,
                seed: Some(cfg.seed),
            });
        }
    }
    if cfg.fisher && cfg.specs.len() > 1 {
        let fisher = fisher_rows(&rows, Some(cfg.seed))?;
        rows.extend(fisher);
    }
    let text = if json {
        to_json(&TestReport {
            statistic: cfg.statistic,
            rows: &rows,
        })?
    } else {
        write_test_table(&rows)
    };
    emit(&text, &args.output, &mut manifest)?;
    manifest.finish(args.output.manifest_path().as_deref())
}

fn combine(args: &CombineArgs, json: bool) -> anyhow::Result<()> {
    let mut manifest = RunManifest::start("combine");
    let text = match &args.input {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(|e| Error::Io {
                path: "<stdin>".into(),
                source: e,
            })?;
            s
        }
    };
    let mut rows: Vec<TestRow> = read_test_table(&text)?
        .into_iter()
        .filter(|r| r.instrument != "fisher")
        .collect();
    let fisher = fisher_rows(&rows, None)?;
    rows.extend(fisher);
    let out = if json { to_json(&rows)? } else { write_test_table(&rows) };
    emit(&out, &args.output, &mut manifest)?;
    manifest.finish(args.output.manifest_path().as_deref())
}

fn power(args: &PowerArgs, json: bool) -> anyhow::Result<()> {
    let mut manifest = RunManifest::start("power");
    manifest.seed = Some(args.seed);
    if args.n == 0 {
        return Err(Error::Config("--n must be at least 1".into()).into());
    }
    let statistics = if args.statistic.is_empty() {
        StatisticKind::ALL.to_vec()
    } else {
        args.statistic.clone()
    };
    let settings = PowerSettings {
        params: SimParams {
            n: args.n,
            beta: args.beta,
            ..default_params()
        },
        replicates: args.reps,
        beta0: args.beta0.clone(),
        statistics,
        draws: args.draws,
        alpha: args.alpha,
        seed: args.seed,
        tail: args.tail.into(),
    };
    let run = run_power(&settings)?;
    let text = if json {
        to_json(&run.rows)?
    } else {
        let mut out = String::from("statistic\tbeta0\trejections\treps\tfrequency\n");
        for r in &run.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.statistic,
                g6(r.beta0),
                r.rejections,
                r.replicates,
                g6(r.frequency)
            ));
        }
        out
    };
    emit(&text, &args.output, &mut manifest)?;
    manifest.finish(args.output.manifest_path().as_deref())
}

#[derive(Serialize)]
struct PropensityRow {
    family: String,
    locus: usize,
    side: char,
    pi: f64,
    /// Propensity 0 or 1: the trio carries no information.
    degenerate: bool,
}

fn propensity(args: &PropensityArgs, json: bool) -> anyhow::Result<()> {
    let mut manifest = RunManifest::start("propensity");
    let cfg = AnalysisConfig::load(&args.config)?;
    manifest.config = Some(args.config.clone());
    let (cohort, model) = load(&cfg)?;
    let design = TestDesign::prepare(&cohort, &model, &cfg.specs)?;
    let mut rows = Vec::new();
    for (i, trio) in cohort.trios.iter().enumerate() {
        for (s, spec) in cfg.specs.iter().enumerate() {
            for &origin in spec.side.origins() {
                let pi = design.propensities(s)[i][origin.index()];
                rows.push(PropensityRow {
                    family: trio.family_id.clone(),
                    locus: spec.instrument + 1,
                    side: origin.code(),
                    pi,
                    degenerate: pi == 0.0 || pi == 1.0,
                });
            }
        }
    }
    let text = if json {
        to_json(&rows)?
    } else {
        let mut out = String::from("family\tlocus\tside\tpi\tflag\n");
        for r in &rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.family,
                r.locus,
                r.side,
                g6(r.pi),
                if r.degenerate { "degenerate" } else { "." }
            ));
        }
        out
    };
    emit(&text, &args.output, &mut manifest)?;
    manifest.finish(args.output.manifest_path().as_deref())
}

