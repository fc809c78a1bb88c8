//! Bernoulli-Gaussian sparse signals observed through a sensor network.
//!
//! Two generators produce the scalar sensor observations `y_q`:
//!
//! * [`Generator::Exact`] draws a joint support `u` (shared by every sensor
//!   in a trial), independent `N(0, sigma0^2)` amplitudes on that support for
//!   each sensor, and sets `y_q = h_q . s_q + w_q`.
//! * [`Generator::Asymptotic`] skips the signal and samples
//!   `y_q ~ N(0, p sigma0^2 ||h_q||^2 + sigma_w^2)` directly, the large-`N`
//!   limit of the exact model.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    H0,
    H1,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Exact,
    Asymptotic,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::Exact => "exact",
            Generator::Asymptotic => "asymptotic",
        })
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(Generator::Exact),
            "asymptotic" => Ok(Generator::Asymptotic),
            other => Err(Error::Config(format!("unknown generator '{other}'"))),
        }
    }
}

/// Fixed sensor-network geometry: one gain vector per sensor and the common
/// noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    gains: Vec<Vec<f64>>,
    norms_sq: Vec<f64>,
    noise_var: f64,
}

impl NetworkModel {
    pub fn new(gains: Vec<Vec<f64>>, noise_var: f64) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::Domain("network needs at least one sensor".into()));
        }
        let dim = gains[0].len();
        if dim == 0 {
            return Err(Error::Domain("gain vectors must be non-empty".into()));
        }
        if gains.iter().any(|h| h.len() != dim) {
            return Err(Error::Domain("gain vectors differ in length".into()));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::Domain(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        let norms_sq: Vec<f64> = gains
            .iter()
            .map(|h| h.iter().map(|v| v * v).sum())
            .collect();
        if norms_sq.iter().any(|v: &f64| !v.is_finite()) {
            return Err(Error::Domain("gain vector norm is not finite".into()));
        }
        Ok(NetworkModel {
            gains,
            norms_sq,
            noise_var,
        })
    }

    /// Random unit-norm gains (see [`make_gains`]) drawn from `seed`.
    pub fn random(sensors: usize, dim: usize, noise_var: f64, seed: u64) -> Result<Self> {
        let mut rng = substream(seed, Domain::Gains, 0);
        let gains = make_gains(sensors, dim, &mut rng)?;
        NetworkModel::new(gains, noise_var)
    }

    pub fn sensors(&self) -> usize {
        self.gains.len()
    }

    pub fn dim(&self) -> usize {
        self.gains[0].len()
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_var.sqrt()
    }

    pub fn gain(&self, sensor: usize) -> &[f64] {
        &self.gains[sensor]
    }

    /// Cached `||h_q||^2` for every sensor.
    pub fn norms_sq(&self) -> &[f64] {
        &self.norms_sq
    }

    /// Network restricted to its first `sensors` nodes.
    pub fn truncated(&self, sensors: usize) -> Result<Self> {
        if sensors == 0 || sensors > self.sensors() {
            return Err(Error::Contract(format!(
                "cannot take {sensors} of {} sensors",
                self.sensors()
            )));
        }
        Ok(NetworkModel {
            gains: self.gains[..sensors].to_vec(),
            norms_sq: self.norms_sq[..sensors].to_vec(),
            noise_var: self.noise_var,
        })
    }

    /// All `||h_q||^2` equal (to a relative 1e-9).
    pub fn is_homogeneous(&self) -> bool {
        let first = self.norms_sq[0];
        self.norms_sq
            .iter()
            .all(|&v| (v - first).abs() <= 1e-9 * first.abs().max(f64::MIN_POSITIVE))
    }
}

/// Parameters of the unknown sparse signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalModel {
    sparsity: f64,
    nonzero_var: f64,
    dim: usize,
}

impl SignalModel {
    pub fn new(sparsity: f64, nonzero_var: f64, dim: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&sparsity) {
            return Err(Error::Domain(format!(
                "sparsity must lie in [0, 1), got {sparsity}"
            )));
        }
        if !(nonzero_var > 0.0 && nonzero_var.is_finite()) {
            return Err(Error::Domain(format!(
                "nonzero variance must be positive, got {nonzero_var}"
            )));
        }
        if dim == 0 {
            return Err(Error::Domain("signal dimension must be positive".into()));
        }
        Ok(SignalModel {
            sparsity,
            nonzero_var,
            dim,
        })
    }

    pub fn sparsity(&self) -> f64 {
        self.sparsity
    }

    pub fn nonzero_var(&self) -> f64 {
        self.nonzero_var
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Large-`N` variance of `y_q` under H1.
    pub fn alt_variance(&self, norm_sq: f64, noise_var: f64) -> f64 {
        self.sparsity * self.nonzero_var * norm_sq + noise_var
    }
}

/// Observations of a batch of independent trials, stored row-major
/// (`trials x sensors`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    values: Vec<f64>,
    sensors: usize,
    pub hypothesis: Hypothesis,
    pub generator: Generator,
    pub seed: u64,
    /// H1 requested with `p = 0`, which is indistinguishable from H0.
    pub degenerate: bool,
}

impl ObservationBatch {
    pub fn trials(&self) -> usize {
        self.values.len() / self.sensors
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn row(&self, trial: usize) -> &[f64] {
        &self.values[trial * self.sensors..(trial + 1) * self.sensors]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.sensors)
    }

    /// Observations of one sensor across all trials.
    pub fn column(&self, sensor: usize) -> Vec<f64> {
        self.rows().map(|r| r[sensor]).collect()
    }

    /// Debug dump as `trial,sensor,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(out, "trial,sensor,value")?;
            for (t, row) in self.rows().enumerate() {
                for (q, y) in row.iter().enumerate() {
                    writeln!(out, "{t},{q},{y:.16e}")?;
                }
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }
}

/// Joint support pattern: i.i.d. Bernoulli(p) flags of length `N`.
pub fn draw_support<R: Rng + ?Sized>(signal: &SignalModel, rng: &mut R) -> Vec<bool> {
    (0..signal.dim)
        .map(|_| rng.random::<f64>() < signal.sparsity)
        .collect()
}

/// `q` gain vectors of length `n` with i.i.d. standard normal entries,
/// each rescaled to unit squared norm.
pub fn make_gains<R: Rng + ?Sized>(q: usize, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if q == 0 || n == 0 {
        return Err(Error::Domain(format!(
            "gain matrix needs q >= 1 and n >= 1, got {q} x {n}"
        )));
    }
    let mut gains = Vec::with_capacity(q);
    while gains.len() < q {
        let mut h: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        h.iter_mut().for_each(|v| *v /= norm);
        gains.push(h);
    }
    Ok(gains)
}

fn check_pair(network: &NetworkModel, signal: &SignalModel) -> Result<()> {
    if network.dim() != signal.dim() {
        return Err(Error::Contract(format!(
            "gain length {} differs from signal dimension {}",
            network.dim(),
            signal.dim()
        )));
    }
    Ok(())
}

/// Sensor observations of a single trial, written into `out` (length `Q`).
///
/// Randomness comes from substream `trial` of the hypothesis' domain, so a
/// trial's observations depend only on `(seed, hypothesis, trial)`.
pub fn observe_trial(
    network: &NetworkModel,
    signal: &SignalModel,
    hypothesis: Hypothesis,
    generator: Generator,
    seed: u64,
    trial: u64,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), network.sensors());
    let domain = match hypothesis {
        Hypothesis::H0 => Domain::NullObservations,
        Hypothesis::H1 => Domain::AltObservations,
    };
    let mut rng = substream(seed, domain, trial);
    let sigma_w = network.noise_std();
    match (hypothesis, generator) {
        (Hypothesis::H0, _) => {
            for y in out.iter_mut() {
                *y = sigma_w * rng.sample::<f64, _>(StandardNormal);
            }
        }
        (Hypothesis::H1, Generator::Asymptotic) => {
            for (y, &nsq) in out.iter_mut().zip(network.norms_sq()) {
                let sd = signal.alt_variance(nsq, network.noise_var()).sqrt();
                *y = sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        (Hypothesis::H1, Generator::Exact) => exact_alt(network, signal, &mut rng, out),
    }
}

fn exact_alt(network: &NetworkModel, signal: &SignalModel, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let support: Vec<usize> = draw_support(signal, rng)
        .into_iter()
        .enumerate()
        .filter_map(|(n, on)| on.then_some(n))
        .collect();
    let sigma0 = signal.nonzero_var().sqrt();
    let sigma_w = network.noise_std();
    for (q, y) in out.iter_mut().enumerate() {
        let h = network.gain(q);
        let mut acc = 0.0;
        for &n in &support {
            acc += h[n] * sigma0 * rng.sample::<f64, _>(StandardNormal);
        }
        *y = acc + sigma_w * rng.sample::<f64, _>(StandardNormal);
    }
}

fn generate(
    network: &NetworkModel,
    signal: &SignalModel,
    hypothesis: Hypothesis,
    generator: Generator,
    trials: usize,
    seed: u64,
) -> Result<ObservationBatch> {
    check_pair(network, signal)?;
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let q = network.sensors();
    let mut values = vec![0.0; trials * q];
    values.par_chunks_mut(q).enumerate().for_each(|(t, row)| {
        observe_trial(network, signal, hypothesis, generator, seed, t as u64, row)
    });
    Ok(ObservationBatch {
        values,
        sensors: q,
        hypothesis,
        generator,
        seed,
        degenerate: hypothesis == Hypothesis::H1 && signal.sparsity() == 0.0,
    })
}

/// Observations from the exact linear model `y_q = h_q . s_q + w_q`.
pub fn generate_exact(
    network: &NetworkModel,
    signal: &SignalModel,
    hypothesis: Hypothesis,
    trials: usize,
    seed: u64,
) -> Result<ObservationBatch> {
    generate(network, signal, hypothesis, Generator::Exact, trials, seed)
}

/// Observations drawn directly from the large-`N` Gaussian law.
pub fn generate_asymptotic(
    network: &NetworkModel,
    signal: &SignalModel,
    hypothesis: Hypothesis,
    trials: usize,
    seed: u64,
) -> Result<ObservationBatch> {
    generate(
        network,
        signal,
        hypothesis,
        Generator::Asymptotic,
        trials,
        seed,
    )
}
