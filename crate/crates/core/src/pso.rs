//! One-dimensional particle swarm maximization with restarts.

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

/// Swarm settings. The search interval is closed; positions are clipped to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive_weight: f64,
    pub social_weight: f64,
    pub restarts: usize,
    pub search_interval: (f64, f64),
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 50,
            iterations: 200,
            inertia: 0.7,
            cognitive_weight: 1.5,
            social_weight: 1.5,
            restarts: 10,
            search_interval: (1e-4, 10.0),
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.search_interval;
        if self.swarm_size < 2 {
            return Err(Error::Domain("swarm needs at least two particles".into()));
        }
        if self.iterations == 0 || self.restarts == 0 {
            return Err(Error::Domain(
                "iterations and restarts must be positive".into(),
            ));
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return Err(Error::Domain(format!(
                "inertia {} outside (0, 1)",
                self.inertia
            )));
        }
        if !(self.cognitive_weight >= 0.0 && self.social_weight >= 0.0) {
            return Err(Error::Domain(
                "acceleration weights must be non-negative".into(),
            ));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Domain(format!("bad search interval ({lo}, {hi})")));
        }
        Ok(())
    }

    /// Same settings on an interval scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let (lo, hi) = self.search_interval;
        PsoConfig {
            search_interval: (lo * factor, hi * factor),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptResult {
    pub argmax: f64,
    pub max_value: f64,
    /// Restarts whose best point lies within `1e-4 * (hi - lo)` of the overall best.
    pub converged_runs: usize,
    /// Largest distance between the best points of any two restarts.
    pub spread: f64,
}

struct Swarm<'a, F> {
    objective: &'a F,
    lo: f64,
    hi: f64,
    rng: ChaCha8Rng,
    resampled: usize,
}

impl<F: Fn(f64) -> f64> Swarm<'_, F> {
    /// Evaluate at `x`; a non-finite value moves the particle to a fresh
    /// random position.
    fn probe(&mut self, x: &mut f64) -> f64 {
        for _ in 0..64 {
            let v = (self.objective)(*x);
            if v.is_finite() {
                return v;
            }
            self.resampled += 1;
            *x = self.rng.random_range(self.lo..=self.hi);
        }
        f64::NEG_INFINITY
    }

    fn run(mut self, config: &PsoConfig) -> (f64, f64, usize) {
        let (lo, hi) = (self.lo, self.hi);
        let width = hi - lo;
        let vmax = 0.5 * width;
        let n = config.swarm_size;
        let mut pos: Vec<f64> = (0..n).map(|_| self.rng.random_range(lo..=hi)).collect();
        let mut vel: Vec<f64> = (0..n)
            .map(|_| self.rng.random_range(-0.1 * width..=0.1 * width))
            .collect();
        let mut best_pos = pos.clone();
        let mut best_val: Vec<f64> = (0..n).map(|i| self.probe(&mut pos[i])).collect();
        best_pos.copy_from_slice(&pos);
        let mut g = argmax(&best_val);
        let (mut gx, mut gv) = (best_pos[g], best_val[g]);

        for _ in 0..config.iterations {
            for i in 0..n {
                let r1: f64 = self.rng.random();
                let r2: f64 = self.rng.random();
                let v = config.inertia * vel[i]
                    + config.cognitive_weight * r1 * (best_pos[i] - pos[i])
                    + config.social_weight * r2 * (gx - pos[i]);
                vel[i] = v.clamp(-vmax, vmax);
                pos[i] = (pos[i] + vel[i]).clamp(lo, hi);
                let val = self.probe(&mut pos[i]);
                if val > best_val[i] {
                    best_val[i] = val;
                    best_pos[i] = pos[i];
                }
            }
            g = argmax(&best_val);
            if best_val[g] > gv {
                gx = best_pos[g];
                gv = best_val[g];
            }
        }
        (gx, gv, self.resampled)
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Maximize `objective` over `config.search_interval`.
///
/// Restarts run in parallel on independent substreams and are merged by
/// maximum value (lowest restart index on ties), so the result depends only
/// on the config.
pub fn pso_maximize<F>(objective: F, config: &PsoConfig) -> Result<OptResult>
where
    F: Fn(f64) -> f64 + Sync,
{
    config.validate()?;
    let (lo, hi) = config.search_interval;
    let runs: Vec<(f64, f64, usize)> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            Swarm {
                objective: &objective,
                lo,
                hi,
                rng: substream(config.seed, Domain::Swarm, r as u64),
                resampled: 0,
            }
            .run(config)
        })
        .collect();

    let resampled: usize = runs.iter().map(|r| r.2).sum();
    if resampled > 0 {
        warn!("pso: {resampled} probes returned non-finite values and were re-sampled");
    }
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.1 > runs[best].1 {
            best = i;
        }
    }
    let (argmax, max_value, _) = runs[best];
    if !max_value.is_finite() {
        return Err(Error::Domain(
            "objective is non-finite everywhere the swarm looked".into(),
        ));
    }
    let tol = 1e-4 * (hi - lo);
    let converged_runs = runs.iter().filter(|r| (r.0 - argmax).abs() <= tol).count();
    let xs = runs.iter().map(|r| r.0);
    let spread = xs.clone().fold(f64::NEG_INFINITY, f64::max) - xs.fold(f64::INFINITY, f64::min);
    Ok(OptResult {
        argmax,
        max_value,
        converged_runs,
        spread,
    })
}
