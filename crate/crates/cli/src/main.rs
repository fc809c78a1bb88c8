use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use sparsedet::config::{self, Preset};
use sparsedet::detect::{DetectorKind, DetectorSpec};
use sparsedet::experiment::{self, ExperimentConfig};
use sparsedet::fisher::{fi_factor, optimize_threshold};
use sparsedet::{Error, Generator, PsoConfig, QuantizerBank, QuantizerKind, Result};

/// Below this many trials per hypothesis the ROC standard errors exceed ~0.03.
const FEW_TRIALS: usize = 1000;

#[derive(Parser)]
#[command(
    name = "sparsedet",
    version,
    about = "1-bit distributed detection of sparse signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the information-maximizing sensor threshold and write a bank file.
    OptimizeThresholds(OptimizeArgs),
    /// Monte Carlo ROC curves for a preset or config file.
    SimulateRoc(RocArgs),
    /// Moments and KS fit of the normalized statistics under both hypotheses.
    CheckAsymptotics(AsymptoticsArgs),
    /// cLMPT on qc sensors against Im-1-bit on the equivalent sensor count.
    Equivalence(EquivalenceArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    /// Quantizer: lr (magnitude) or direct (sign).
    #[arg(long)]
    kind: QuantizerKind,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma_w: f64,
    /// Sensors in the written bank.
    #[arg(long, default_value_t = 300)]
    sensors: usize,
    /// Swarm seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Named parameter set.
    #[arg(long, conflicts_with = "config")]
    preset: Option<Preset>,
    /// Config file (e.g. a sidecar written by an earlier run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trials per hypothesis (overrides the config).
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated nominal false-alarm levels.
    #[arg(long, value_delimiter = ',')]
    pfa_grid: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// exact or asymptotic.
    #[arg(long)]
    generator: Option<Generator>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Use 4000 trials per hypothesis instead of 10000.
    #[arg(long)]
    fast: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RocArgs {
    #[command(flatten)]
    run: RunArgs,
    /// cLMPT sensor count for the fig2 preset.
    #[arg(long, default_value_t = 100)]
    qc: usize,
}

#[derive(Args)]
struct AsymptoticsArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Network size (overrides the config).
    #[arg(long)]
    q: Option<usize>,
}

#[derive(Args)]
struct EquivalenceArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 100)]
    qc: usize,
    /// Force the Im-1-bit/cLMPT sensor ratio instead of computing it.
    #[arg(long)]
    ratio: Option<f64>,
}

impl RunArgs {
    /// Resolve the base config from `--config` or the preset.
    fn base(
        &self,
        preset: impl FnOnce(u64, bool) -> Result<ExperimentConfig>,
    ) -> Result<ExperimentConfig> {
        let seed = self.seed.unwrap_or(0);
        let mut config = match &self.config {
            Some(path) => {
                let mut c = config::load(path).map_err(|e| match e {
                    Error::Io { path, source } => {
                        Error::Config(format!("cannot read {}: {source}", path.display()))
                    }
                    other => other,
                })?;
                if self.fast {
                    c.trials_h0 = experiment::FAST_TRIALS;
                    c.trials_h1 = experiment::FAST_TRIALS;
                }
                c
            }
            None => preset(seed, self.fast)?,
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }

    fn apply_overrides(&self, config: &mut ExperimentConfig) -> Result<()> {
        if let Some(n) = self.trials {
            config.trials_h0 = n;
            config.trials_h1 = n;
        }
        if let Some(grid) = &self.pfa_grid {
            config.pfa_grid = grid.clone();
        }
        if let Some(g) = self.generator {
            config.generator = g;
        }
        if self.workers == Some(0) {
            return Err(Error::Config("--workers must be positive".into()));
        }
        config.validate()?;
        if config.trials_h0.min(config.trials_h1) < FEW_TRIALS {
            warn!(
                "only {} H0 / {} H1 trials: standard errors will be wide",
                config.trials_h0, config.trials_h1
            );
        }
        Ok(())
    }
}

/// Write `csv` and the resolved config beside it.
fn write_outputs(out: &Path, stem: &str, csv: &str, config: &ExperimentConfig) -> Result<()> {
    let csv_path = out.join(format!("{stem}.csv"));
    let cfg_path = out.join(format!("{stem}.config"));
    experiment::emit(&csv_path, csv)?;
    experiment::emit(&cfg_path, &config::to_text(config))?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", cfg_path.display());
    Ok(())
}

fn optimize(args: &OptimizeArgs) -> Result<()> {
    let pso = PsoConfig {
        seed: args.seed,
        ..PsoConfig::default()
    };
    let start = Instant::now();
    let r = optimize_threshold(args.kind, args.sigma_w, &pso)?;
    let bank = QuantizerBank::broadcast(args.kind, r.argmax, args.sensors)?;
    let detector = match args.kind {
        QuantizerKind::Lr => DetectorKind::Im1Bit,
        QuantizerKind::Direct => DetectorKind::OneBit,
    };
    let spec = DetectorSpec::new(detector, Some(bank.clone()), None)?;
    let factor = fi_factor(&spec, args.sigma_w)?;
    let clmpt = fi_factor(
        &DetectorSpec::new(DetectorKind::Clmpt, None, None)?,
        args.sigma_w,
    )?;
    println!("kind            {}", args.kind);
    println!("argmax          {:.6}", r.argmax);
    println!("argmax/sigma_w  {:.6}", r.argmax / args.sigma_w);
    println!("objective       {:.6}", r.max_value);
    println!("factor          {:.6}", factor);
    println!("ratio_vs_clmpt  {:.4}", clmpt / factor);
    println!("converged_runs  {}/{}", r.converged_runs, pso.restarts);
    println!("spread          {:.3e}", r.spread);
    info!("optimization took {:.2?}", start.elapsed());
    let path = args.out.join(format!("bank_{}.txt", args.kind));
    experiment::emit(&path, &config::bank_to_text(&bank))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn print_curves(curves: &[sparsedet::RocCurve]) {
    println!(
        "{:<14} {:>6} {:>8} {:>8} {:>8}",
        "detector", "pfa", "pfa_emp", "pd", "stderr"
    );
    for c in curves {
        for p in &c.points {
            println!(
                "{:<14} {:>6.3} {:>8.4} {:>8.4} {:>8.4}",
                c.detector, p.pfa_nominal, p.pfa_empirical, p.pd_empirical, p.stderr_pd
            );
        }
    }
}

fn simulate_roc(args: &RocArgs) -> Result<()> {
    let run = &args.run;
    if run.config.is_none() && run.preset.is_none() {
        return Err(Error::Config("give --preset or --config".into()));
    }
    let which = run.preset.unwrap_or(Preset::Fig1);
    let mut config = run.base(|seed, fast| config::preset(which, args.qc, seed, fast))?;
    run.apply_overrides(&mut config)?;
    let curves = experiment::run_roc(&config, run.workers)?;
    print_curves(&curves);
    write_outputs(&run.out, "roc", &experiment::roc_csv(&curves), &config)
}

/// All three detectors on the fig1 network, which is where the
/// theoretical means are easiest to compare.
fn asymptotics_preset(seed: u64, fast: bool) -> Result<ExperimentConfig> {
    let mut c = config::fig1(seed, fast)?;
    c.detectors
        .insert(1, DetectorSpec::new(DetectorKind::Clmpt, None, None)?);
    c.generator = Generator::Asymptotic;
    Ok(c)
}

/// Same detectors on a network of `q` sensors.
fn resized(config: &ExperimentConfig, q: usize) -> Result<ExperimentConfig> {
    let detectors = config
        .detectors
        .iter()
        .map(|d| {
            let sensors = d.sensors.filter(|&n| n < q);
            let fused = sensors.unwrap_or(q);
            let bank = match &d.bank {
                Some(b) => Some(QuantizerBank::broadcast(
                    b.kind(),
                    b.thresholds()[0],
                    fused,
                )?),
                None => None,
            };
            DetectorSpec::new(d.kind, bank, sensors)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentConfig {
        sensors: q,
        detectors,
        ..config.clone()
    })
}

fn check_asymptotics(args: &AsymptoticsArgs) -> Result<()> {
    let run = &args.run;
    let mut config = run.base(asymptotics_preset)?;
    if let Some(q) = args.q {
        if q == 0 {
            return Err(Error::Config("--q must be positive".into()));
        }
        config = resized(&config, q)?;
    }
    run.apply_overrides(&mut config)?;
    let records = experiment::run_normality(&config, run.workers)?;
    println!(
        "{:<14} {:>3} {:>9} {:>9} {:>8} {:>5} {:>9}",
        "detector", "hyp", "mean", "variance", "ks", "pass", "theory"
    );
    for r in &records {
        println!(
            "{:<14} {:>3} {:>9.4} {:>9.4} {:>8.4} {:>5} {:>9.4}",
            r.detector,
            r.hypothesis,
            r.mean,
            r.variance,
            r.ks_stat,
            r.ks_pass_1pct,
            r.theoretical_mean
        );
    }
    write_outputs(
        &run.out,
        "normality",
        &experiment::normality_csv(&records),
        &config,
    )
}

fn equivalence(args: &EquivalenceArgs) -> Result<()> {
    let run = &args.run;
    let base = match &run.config {
        // A config that already pairs two detectors (e.g. an equivalence
        // sidecar) is rerun as-is.
        Some(_) => {
            let c = run.base(config::fig1)?;
            if c.detectors.len() == 2 && c.detectors[0].kind == DetectorKind::Clmpt {
                let mut c = c;
                run.apply_overrides(&mut c)?;
                return finish_equivalence(run, experiment::run_comparison(&c, run.workers)?);
            }
            c
        }
        None => run.base(config::fig1)?,
    };
    let ratio = match args.ratio {
        Some(r) => r,
        None => experiment::equivalence_ratio(&base)?,
    };
    let mut config = experiment::equivalence_config(&base, args.qc, Some(ratio))?;
    run.apply_overrides(&mut config)?;
    let record = experiment::run_comparison(&config, run.workers)?;
    finish_equivalence(run, experiment::EquivalenceRecord { ratio, ..record })
}

fn finish_equivalence(run: &RunArgs, record: experiment::EquivalenceRecord) -> Result<()> {
    println!(
        "ratio {:.4}: clmpt on {} sensors vs im1bit on {}",
        record.ratio, record.reference_sensors, record.candidate_sensors
    );
    print_curves(&record.curves);
    println!("max |pd gap| {:.4}", record.max_abs_pd_gap);
    write_outputs(
        &run.out,
        "equivalence",
        &experiment::equivalence_csv(&record),
        &record.config,
    )
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::OptimizeThresholds(a) => optimize(a),
        Command::SimulateRoc(a) => simulate_roc(a),
        Command::CheckAsymptotics(a) => check_asymptotics(a),
        Command::Equivalence(a) => equivalence(a),
    }
}

/// 0 on success, 2 for bad input, 1 for anything that failed at run time.
fn exit_status(result: &Result<()>) -> u8 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_usage() => 2,
        Err(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = run(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_status(&result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("sparsedet").chain(args.iter().copied())).unwrap()
    }

    fn run_args(args: &[&str], out: &Path) -> Result<()> {
        let mut all = args.to_vec();
        let out = out.to_str().unwrap();
        all.extend(["--out", out]);
        run(&parse(&all))
    }

    #[test]
    fn optimize_writes_a_bank() {
        let dir = tempfile::tempdir().unwrap();
        run_args(
            &[
                "optimize-thresholds",
                "--kind",
                "lr",
                "--sigma-w",
                "2",
                "--sensors",
                "4",
            ],
            dir.path(),
        )
        .unwrap();
        let text = fs::read_to_string(dir.path().join("bank_lr.txt")).unwrap();
        let bank = config::bank_from_text(&text).unwrap();
        assert_eq!(bank.len(), 4);
        assert!((bank.thresholds()[0] - 2.964).abs() < 0.01);
    }

    #[test]
    fn usage_errors_map_to_two() {
        let dir = tempfile::tempdir().unwrap();
        for args in [
            &["optimize-thresholds", "--kind", "lr", "--sigma-w", "0"][..],
            &["simulate-roc", "--config", "/nonexistent/run.config"],
            &["simulate-roc", "--preset", "fig1", "--pfa-grid", "0.5,0.1"],
            &["simulate-roc", "--preset", "fig1", "--trials", "0"],
            &["simulate-roc"],
            &["check-asymptotics", "--q", "0"],
            &["equivalence", "--ratio", "0.5"],
        ] {
            assert_eq!(exit_status(&run_args(args, dir.path())), 2, "{args:?}");
        }
        for args in [
            &["optimize-thresholds", "--kind", "sign"][..],
            &["simulate-roc", "--preset", "fig3"],
            &["simulate-roc", "--preset", "fig1", "--generator", "fancy"],
        ] {
            let err = Cli::try_parse_from(std::iter::once("sparsedet").chain(args.iter().copied()))
                .err()
                .unwrap();
            assert_eq!(err.exit_code(), 2, "{args:?}");
        }
    }

    #[test]
    fn output_failures_map_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let r = run_args(
            &["optimize-thresholds", "--kind", "direct"],
            &blocker.join("sub"),
        );
        assert_eq!(exit_status(&r), 1);
    }

    #[test]
    fn sidecar_reproduces_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("first");
        let second = dir.path().join("second");
        run_args(
            &[
                "simulate-roc",
                "--preset",
                "fig1",
                "--seed",
                "7",
                "--trials",
                "400",
            ],
            &first,
        )
        .unwrap();
        let sidecar = first.join("roc.config");
        let sidecar_arg = sidecar.to_str().unwrap();
        run_args(
            &["simulate-roc", "--config", sidecar_arg, "--workers", "3"],
            &second,
        )
        .unwrap();
        let a = fs::read(first.join("roc.csv")).unwrap();
        assert_eq!(a, fs::read(second.join("roc.csv")).unwrap());
        assert_eq!(
            fs::read(&sidecar).unwrap(),
            fs::read(second.join("roc.config")).unwrap()
        );
        assert!(String::from_utf8(a)
            .unwrap()
            .starts_with(experiment::ROC_HEADER));
    }

    #[test]
    fn fig2_includes_the_equivalent_im1bit_network() {
        let dir = tempfile::tempdir().unwrap();
        run_args(
            &[
                "simulate-roc",
                "--preset",
                "fig2",
                "--qc",
                "100",
                "--trials",
                "200",
            ],
            dir.path(),
        )
        .unwrap();
        let csv = fs::read_to_string(dir.path().join("roc.csv")).unwrap();
        assert!(csv.lines().any(|l| l.starts_with("im1bit@153,")));
        assert!(csv.lines().any(|l| l.starts_with("clmpt@100,")));
    }

    #[test]
    fn tiny_runs_still_complete() {
        let dir = tempfile::tempdir().unwrap();
        run_args(
            &[
                "simulate-roc",
                "--preset",
                "fig1",
                "--trials",
                "100",
                "--pfa-grid",
                "0.5",
            ],
            dir.path(),
        )
        .unwrap();
        let csv = fs::read_to_string(dir.path().join("roc.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn small_network_asymptotics_are_diagnostic_only() {
        let dir = tempfile::tempdir().unwrap();
        run_args(
            &["check-asymptotics", "--q", "5", "--trials", "2000"],
            dir.path(),
        )
        .unwrap();
        let csv = fs::read_to_string(dir.path().join("normality.csv")).unwrap();
        assert!(csv.starts_with(experiment::NORMALITY_HEADER));
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().any(|l| l.starts_with("im1bit@5,H1,2000,")));
    }

    #[test]
    fn asymptotics_report_theoretical_means() {
        let dir = tempfile::tempdir().unwrap();
        run_args(&["check-asymptotics", "--trials", "500"], dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("normality.csv")).unwrap();
        let mean_of = |id: &str| -> f64 {
            let row = csv
                .lines()
                .find(|l| l.starts_with(&format!("{id}@300,H1")))
                .unwrap();
            row.rsplit(',').next().unwrap().parse().unwrap()
        };
        assert!((mean_of("im1bit") - 3.96).abs() < 0.01);
        assert!((mean_of("clmpt") - 4.90).abs() < 0.01);
        assert!((mean_of("onebit") - 2.70).abs() < 0.01);
    }

    #[test]
    fn equivalence_rerun_from_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a");
        let second = dir.path().join("b");
        run_args(&["equivalence", "--qc", "20", "--trials", "300"], &first).unwrap();
        let csv = fs::read_to_string(first.join("equivalence.csv")).unwrap();
        assert!(csv.lines().last().unwrap().starts_with("#max_abs_pd_gap,"));
        assert!(csv.lines().any(|l| l.starts_with("im1bit@31,")));
        let sidecar = first.join("equivalence.config");
        run_args(
            &["equivalence", "--config", sidecar.to_str().unwrap()],
            &second,
        )
        .unwrap();
        assert_eq!(
            csv,
            fs::read_to_string(second.join("equivalence.csv")).unwrap()
        );

        run_args(
            &[
                "equivalence",
                "--qc",
                "20",
                "--ratio",
                "1",
                "--trials",
                "300",
            ],
            &second,
        )
        .unwrap();
        assert!(fs::read_to_string(second.join("equivalence.csv"))
            .unwrap()
            .contains("im1bit@20,"));
    }

    #[test]
    fn resizing_keeps_thresholds() {
        let c = asymptotics_preset(0, true).unwrap();
        let r = resized(&c, 7).unwrap();
        assert_eq!(r.sensors, 7);
        for (a, b) in c.detectors.iter().zip(&r.detectors) {
            assert_eq!(a.kind, b.kind);
            if let (Some(x), Some(y)) = (&a.bank, &b.bank) {
                assert_eq!(y.len(), 7);
                assert_eq!(x.thresholds()[0], y.thresholds()[0]);
            }
        }
    }
}
