//! Monte Carlo engine: ROC estimation, null/alternative diagnostics and the
//! sensor-equivalence comparison.
//!
//! Every trial draws one observation vector for the whole network and every
//! configured detector scores that same vector, so detector comparisons are
//! paired. Trial `t` reads random substream `t`, and results are collected in
//! trial order, so output is identical for any number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::detect::{theoretical_mean, DetectorKind, DetectorSpec, FusionRule};
use crate::error::{Error, Result};
use crate::fisher::sensor_equivalence;
use crate::math::{upper_tail, upper_tail_inverse};
use crate::quantize::QuantizerBank;
use crate::signal::{observe_trial, Generator, Hypothesis, NetworkModel, SignalModel};
use crate::stats::{ks_passes, ks_statistic, mean, variance};

/// Default nominal false-alarm grid.
pub const DEFAULT_PFA_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5];

/// Trials per hypothesis in a full run.
pub const DEFAULT_TRIALS: usize = 10_000;

/// Trials per hypothesis in fast mode.
pub const FAST_TRIALS: usize = 4_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sensors: usize,
    pub dim: usize,
    pub noise_var: f64,
    pub sparsity: f64,
    pub nonzero_var: f64,
    pub generator: Generator,
    pub detectors: Vec<DetectorSpec>,
    pub trials_h0: usize,
    pub trials_h1: usize,
    pub pfa_grid: Vec<f64>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let network_ok = self.sensors >= 1 && self.dim >= 1;
        if !network_ok {
            return Err(Error::Config("sensors and dim must be positive".into()));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::Config(format!(
                "noise_var must be positive, got {}",
                self.noise_var
            )));
        }
        SignalModel::new(self.sparsity, self.nonzero_var, self.dim)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.trials_h0 == 0 || self.trials_h1 == 0 {
            return Err(Error::Config("trial counts must be positive".into()));
        }
        if self.pfa_grid.is_empty() {
            return Err(Error::Config("pfa grid is empty".into()));
        }
        if self.pfa_grid.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Config("pfa grid values must lie in (0, 1)".into()));
        }
        if self.pfa_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("pfa grid must be strictly increasing".into()));
        }
        if self.detectors.is_empty() {
            return Err(Error::Config("no detectors configured".into()));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if self.detectors[..i].iter().any(|o| o.kind == d.kind) {
                return Err(Error::Config(format!("detector {} listed twice", d.id())));
            }
            let fused = d.sensors.unwrap_or(self.sensors);
            if fused > self.sensors {
                return Err(Error::Config(format!(
                    "{} fuses {fused} sensors but the network has {}",
                    d.id(),
                    self.sensors
                )));
            }
            if let Some(bank) = &d.bank {
                if bank.len() != fused {
                    return Err(Error::Config(format!(
                        "{}: {} thresholds for {fused} sensors",
                        d.id(),
                        bank.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// The network implied by `(sensors, dim, noise_var, seed)`. The first `k`
    /// sensors do not depend on the total sensor count.
    pub fn network(&self) -> Result<NetworkModel> {
        NetworkModel::random(self.sensors, self.dim, self.noise_var, self.seed)
    }

    pub fn signal(&self) -> Result<SignalModel> {
        SignalModel::new(self.sparsity, self.nonzero_var, self.dim)
    }

    /// Label used in output files: detector id and fused sensor count.
    pub fn label(&self, spec: &DetectorSpec) -> String {
        format!("{}@{}", spec.id(), spec.sensors.unwrap_or(self.sensors))
    }
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::ThreadPool(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// Per-detector statistic samples under both hypotheses, in trial order.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticSamples {
    pub labels: Vec<String>,
    pub h0: Vec<Vec<f64>>,
    pub h1: Vec<Vec<f64>>,
}

fn simulate_hypothesis(
    rules: &[FusionRule],
    network: &NetworkModel,
    signal: &SignalModel,
    config: &ExperimentConfig,
    hypothesis: Hypothesis,
    trials: usize,
) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; network.sensors()],
            |buf, t| {
                observe_trial(
                    network,
                    signal,
                    hypothesis,
                    config.generator,
                    config.seed,
                    t as u64,
                    buf,
                );
                rules.iter().map(|r| r.statistic(buf)).collect()
            },
        )
        .collect();
    (0..rules.len())
        .map(|d| rows.iter().map(|row| row[d]).collect())
        .collect()
}

/// Normalized statistics of every detector over all trials.
pub fn simulate_statistics(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<StatisticSamples> {
    config.validate()?;
    let network = config.network()?;
    let signal = config.signal()?;
    let rules = config
        .detectors
        .iter()
        .map(|d| FusionRule::new(d, &network))
        .collect::<Result<Vec<_>>>()?;
    let labels = config.detectors.iter().map(|d| config.label(d)).collect();
    with_workers(workers, || {
        let h0 = simulate_hypothesis(
            &rules,
            &network,
            &signal,
            config,
            Hypothesis::H0,
            config.trials_h0,
        );
        let h1 = simulate_hypothesis(
            &rules,
            &network,
            &signal,
            config,
            Hypothesis::H1,
            config.trials_h1,
        );
        StatisticSamples { labels, h0, h1 }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub pfa_nominal: f64,
    pub pfa_empirical: f64,
    pub pd_empirical: f64,
    pub stderr_pd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub detector: String,
    pub points: Vec<RocPoint>,
    pub trials_h0: usize,
    pub trials_h1: usize,
}

impl RocCurve {
    pub fn point(&self, pfa_nominal: f64) -> Option<&RocPoint> {
        self.points.iter().find(|p| p.pfa_nominal == pfa_nominal)
    }
}

/// Fraction of `sorted` strictly above `threshold`.
fn exceedance(sorted: &[f64], threshold: f64) -> f64 {
    let at_or_below = sorted.partition_point(|&v| v <= threshold);
    (sorted.len() - at_or_below) as f64 / sorted.len() as f64
}

/// Empirical ROC of one detector at nominal false-alarm levels. Each
/// statistic is thresholded at `upper_tail_inverse(pfa)`, ties to H0.
pub fn roc_from_samples(
    detector: &str,
    h0: &[f64],
    h1: &[f64],
    pfa_grid: &[f64],
) -> Result<RocCurve> {
    if h0.is_empty() || h1.is_empty() {
        return Err(Error::Contract(
            "ROC needs samples under both hypotheses".into(),
        ));
    }
    let mut s0 = h0.to_vec();
    let mut s1 = h1.to_vec();
    s0.sort_by(f64::total_cmp);
    s1.sort_by(f64::total_cmp);
    let n1 = s1.len() as f64;
    let points = pfa_grid
        .iter()
        .map(|&pfa| {
            let eta = upper_tail_inverse(pfa)?;
            let pd = exceedance(&s1, eta);
            Ok(RocPoint {
                pfa_nominal: pfa,
                pfa_empirical: exceedance(&s0, eta),
                pd_empirical: pd,
                stderr_pd: (pd * (1.0 - pd) / n1).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve {
        detector: detector.to_string(),
        points,
        trials_h0: h0.len(),
        trials_h1: h1.len(),
    })
}

pub fn run_roc(config: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<RocCurve>> {
    let samples = simulate_statistics(config, workers)?;
    samples
        .labels
        .iter()
        .zip(samples.h0.iter().zip(&samples.h1))
        .map(|(label, (h0, h1))| roc_from_samples(label, h0, h1, &config.pfa_grid))
        .collect()
}

/// Moments and KS fit of one detector's statistic under one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityRecord {
    pub detector: String,
    pub hypothesis: Hypothesis,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// KS distance to `N(theoretical_mean, 1)`.
    pub ks_stat: f64,
    pub ks_pass_1pct: bool,
    pub theoretical_mean: f64,
}

impl NormalityRecord {
    fn from_samples(detector: &str, hypothesis: Hypothesis, xs: &[f64], expected: f64) -> Self {
        let ks = ks_statistic(xs, |x| upper_tail(expected - x));
        NormalityRecord {
            detector: detector.to_string(),
            hypothesis,
            n: xs.len(),
            mean: mean(xs),
            variance: variance(xs),
            ks_stat: ks,
            ks_pass_1pct: ks_passes(ks, xs.len(), 0.01),
            theoretical_mean: expected,
        }
    }

    pub fn mean_stderr(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }
}

/// H0 and H1 diagnostics for every configured detector, in detector order
/// (H0 row first).
pub fn run_normality(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<Vec<NormalityRecord>> {
    let samples = simulate_statistics(config, workers)?;
    let network = config.network()?;
    let signal = config.signal()?;
    let mut out = Vec::with_capacity(2 * config.detectors.len());
    for (i, spec) in config.detectors.iter().enumerate() {
        let label = &samples.labels[i];
        let mu = theoretical_mean(spec, &network, &signal)?;
        out.push(NormalityRecord::from_samples(
            label,
            Hypothesis::H0,
            &samples.h0[i],
            0.0,
        ));
        out.push(NormalityRecord::from_samples(
            label,
            Hypothesis::H1,
            &samples.h1[i],
            mu,
        ));
    }
    Ok(out)
}

/// Paired ROC comparison of cLMPT on `qc` sensors against Im-1-bit on
/// `round(ratio * qc)` sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceRecord {
    pub ratio: f64,
    pub reference_sensors: usize,
    pub candidate_sensors: usize,
    pub config: ExperimentConfig,
    /// cLMPT curve first, Im-1-bit second.
    pub curves: Vec<RocCurve>,
    pub max_abs_pd_gap: f64,
}

fn im1bit_threshold(base: &ExperimentConfig) -> Result<f64> {
    base.detectors
        .iter()
        .find(|d| d.kind == DetectorKind::Im1Bit)
        .and_then(|d| d.bank.as_ref())
        .map(|b| b.thresholds()[0])
        .ok_or_else(|| {
            Error::Config("equivalence needs an im1bit detector in the base config".into())
        })
}

/// Runtime sensor ratio of Im-1-bit against cLMPT at the base config's
/// Im-1-bit threshold.
pub fn equivalence_ratio(base: &ExperimentConfig) -> Result<f64> {
    let tau = im1bit_threshold(base)?;
    let probe = NetworkModel::new(vec![vec![1.0]], base.noise_var)?;
    let c = DetectorSpec::new(DetectorKind::Clmpt, None, None)?;
    let im = DetectorSpec::new(
        DetectorKind::Im1Bit,
        Some(QuantizerBank::broadcast(
            crate::quantize::QuantizerKind::Lr,
            tau,
            1,
        )?),
        None,
    )?;
    sensor_equivalence(&probe, &c, &im)
}

/// Config for the paired comparison: a network of `round(ratio * qc)`
/// sensors, cLMPT on its first `qc`, Im-1-bit on all of them. `ratio`
/// defaults to [`equivalence_ratio`].
pub fn equivalence_config(
    base: &ExperimentConfig,
    qc: usize,
    ratio: Option<f64>,
) -> Result<ExperimentConfig> {
    if qc == 0 {
        return Err(Error::Config("qc must be positive".into()));
    }
    let ratio = match ratio {
        Some(r) => r,
        None => equivalence_ratio(base)?,
    };
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(Error::Config(format!(
            "sensor ratio must be >= 1, got {ratio}"
        )));
    }
    let tau = im1bit_threshold(base)?;
    let q_im = (ratio * qc as f64).round() as usize;
    let bank = QuantizerBank::broadcast(crate::quantize::QuantizerKind::Lr, tau, q_im)?;
    Ok(ExperimentConfig {
        sensors: q_im,
        detectors: vec![
            DetectorSpec::new(DetectorKind::Clmpt, None, Some(qc))?,
            DetectorSpec::new(DetectorKind::Im1Bit, Some(bank), None)?,
        ],
        ..base.clone()
    })
}

/// Largest `|pd_a - pd_b|` over the shared nominal grid.
pub fn max_abs_pd_gap(a: &RocCurve, b: &RocCurve) -> f64 {
    a.points
        .iter()
        .zip(&b.points)
        .map(|(x, y)| (x.pd_empirical - y.pd_empirical).abs())
        .fold(0.0, f64::max)
}

/// Run a two-detector comparison config (as built by [`equivalence_config`]).
pub fn run_comparison(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<EquivalenceRecord> {
    if config.detectors.len() != 2 {
        return Err(Error::Config(
            "comparison needs exactly two detectors".into(),
        ));
    }
    let curves = run_roc(config, workers)?;
    let gap = max_abs_pd_gap(&curves[0], &curves[1]);
    let fused = |d: &DetectorSpec| d.sensors.unwrap_or(config.sensors);
    let reference = fused(&config.detectors[0]);
    let candidate = fused(&config.detectors[1]);
    Ok(EquivalenceRecord {
        ratio: candidate as f64 / reference as f64,
        reference_sensors: reference,
        candidate_sensors: candidate,
        config: config.clone(),
        curves,
        max_abs_pd_gap: gap,
    })
}

pub fn run_equivalence(
    base: &ExperimentConfig,
    qc: usize,
    workers: Option<usize>,
) -> Result<EquivalenceRecord> {
    let ratio = equivalence_ratio(base)?;
    let config = equivalence_config(base, qc, Some(ratio))?;
    Ok(EquivalenceRecord {
        ratio,
        ..run_comparison(&config, workers)?
    })
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

pub const ROC_HEADER: &str =
    "detector,pfa_nominal,pfa_empirical,pd_empirical,stderr_pd,trials_h0,trials_h1";
pub const NORMALITY_HEADER: &str =
    "detector,hypothesis,n,mean,variance,ks_stat,ks_pass_1pct,theoretical_mean";

/// 17 significant digits: enough to round-trip any f64.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn roc_csv(curves: &[RocCurve]) -> String {
    let mut s = String::new();
    s.push_str(ROC_HEADER);
    s.push('\n');
    for c in curves {
        for p in &c.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.detector,
                num(p.pfa_nominal),
                num(p.pfa_empirical),
                num(p.pd_empirical),
                num(p.stderr_pd),
                c.trials_h0,
                c.trials_h1
            );
        }
    }
    s
}

pub fn normality_csv(records: &[NormalityRecord]) -> String {
    let mut s = String::new();
    s.push_str(NORMALITY_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.detector,
            r.hypothesis,
            r.n,
            num(r.mean),
            num(r.variance),
            num(r.ks_stat),
            r.ks_pass_1pct,
            num(r.theoretical_mean)
        );
    }
    s
}

pub fn equivalence_csv(record: &EquivalenceRecord) -> String {
    let mut s = roc_csv(&record.curves);
    let _ = writeln!(s, "#max_abs_pd_gap,{}", num(record.max_abs_pd_gap));
    s
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize) -> Result<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| Error::Config(format!("ROC CSV line {line}: bad or missing field")))
}

/// Inverse of [`roc_csv`]; `#` summary rows are skipped.
pub fn parse_roc_csv(text: &str) -> Result<Vec<RocCurve>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == ROC_HEADER => {}
        _ => return Err(Error::Config("ROC CSV header missing".into())),
    }
    let mut curves: Vec<RocCurve> = Vec::new();
    for (i, line) in lines {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let detector = f.next().unwrap_or_default().to_string();
        let point = RocPoint {
            pfa_nominal: parse_field(f.next(), i + 1)?,
            pfa_empirical: parse_field(f.next(), i + 1)?,
            pd_empirical: parse_field(f.next(), i + 1)?,
            stderr_pd: parse_field(f.next(), i + 1)?,
        };
        let trials_h0 = parse_field(f.next(), i + 1)?;
        let trials_h1 = parse_field(f.next(), i + 1)?;
        match curves.last_mut() {
            Some(c) if c.detector == detector => c.points.push(point),
            _ => curves.push(RocCurve {
                detector,
                points: vec![point],
                trials_h0,
                trials_h1,
            }),
        }
    }
    Ok(curves)
}

/// Write `contents` to `path`, creating parent directories.
pub fn emit(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn emit_roc_csv(curves: &[RocCurve], path: &Path) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::Contract("no ROC curves to write".into()));
    }
    emit(path, &roc_csv(curves))
}

pub fn emit_normality_csv(records: &[NormalityRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Contract("no normality records to write".into()));
    }
    emit(path, &normality_csv(records))
}

pub fn emit_equivalence_csv(record: &EquivalenceRecord, path: &Path) -> Result<()> {
    emit(path, &equivalence_csv(record))
}
