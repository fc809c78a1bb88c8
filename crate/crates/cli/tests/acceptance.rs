//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs at full scale (10^4 trials per hypothesis). Set `SPARSEDET_FAST=1`
//! to use 4000 trials; the fixed-width Pd gap tolerance then widens by
//! sqrt(10^4 / 4000) and the stderr-based tolerances scale by themselves.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparsedet::config;
use sparsedet::detect::{theoretical_mean, BitFusion};
use sparsedet::experiment::{roc_csv, run_comparison, run_normality, run_roc, ExperimentConfig};
use sparsedet::fisher::{fisher_im1bit, fisher_onebit, optimize_threshold, sensor_equivalence};
use sparsedet::math::{normal_pdf, upper_tail};
use sparsedet::quantize::{
    lambda_to_tau, lr_coefficients, quantize_by_ratio, quantize_lr, BitReport,
};
use sparsedet::{
    DetectorKind, DetectorSpec, Generator, Hypothesis, NetworkModel, PsoConfig, QuantizerBank,
    QuantizerKind, SignalModel,
};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fast() -> bool {
    std::env::var("SPARSEDET_FAST").is_ok_and(|v| v != "0" && !v.is_empty())
}

fn seconds(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn field(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(f64::NAN)
}

/// `optimize-thresholds --kind <kind>`: (argmax, factor, seconds).
fn optimize_via_cli(kind: &str) -> (f64, f64, f64) {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_sparsedet"))
        .args(["optimize-thresholds", "--kind", kind, "--sigma-w", "1"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .expect("binary runs");
    let elapsed = seconds(start.elapsed());
    let out = String::from_utf8_lossy(&o.stdout);
    if !o.status.success() {
        return (f64::NAN, f64::NAN, elapsed);
    }
    (field(&out, "argmax "), field(&out, "factor"), elapsed)
}

fn threshold_optimum() -> Outcome {
    let (argmax, factor, secs) = optimize_via_cli("lr");
    let pass = (argmax - 1.482).abs() <= 0.005 && (factor - 0.3261).abs() <= 0.001 && secs < 5.0;
    outcome(
        pass,
        format!("tau={argmax:.6} factor={factor:.6} in {secs:.2}s"),
    )
}

fn baseline_factor() -> Outcome {
    let (_, factor, secs) = optimize_via_cli("direct");
    let pass = (factor - 0.1521).abs() <= 0.001 && secs < 5.0;
    outcome(pass, format!("factor={factor:.6} in {secs:.2}s"))
}

fn equivalence_ratios() -> Outcome {
    let pso = PsoConfig::default();
    let net = NetworkModel::random(4, 16, 1.0, 0).unwrap();
    let spec = |kind: DetectorKind, q: QuantizerKind| {
        let t = optimize_threshold(q, 1.0, &pso).unwrap().argmax;
        DetectorSpec::new(kind, Some(QuantizerBank::broadcast(q, t, 4).unwrap()), None).unwrap()
    };
    let clmpt = DetectorSpec::new(DetectorKind::Clmpt, None, None).unwrap();
    let im =
        sensor_equivalence(&net, &clmpt, &spec(DetectorKind::Im1Bit, QuantizerKind::Lr)).unwrap();
    let one = sensor_equivalence(
        &net,
        &clmpt,
        &spec(DetectorKind::OneBit, QuantizerKind::Direct),
    )
    .unwrap();
    let pass = (im - 1.53).abs() <= 0.01 && (one - 3.3).abs() <= 0.05;
    outcome(pass, format!("im1bit={im:.4} onebit={one:.4}"))
}

fn joint_se(a: f64, b: f64, n: usize) -> f64 {
    ((a * (1.0 - a) + b * (1.0 - b)) / n as f64).sqrt()
}

fn fig1_dominance() -> Outcome {
    let c = config::fig1(0, fast()).unwrap();
    let start = Instant::now();
    let curves = run_roc(&c, None).unwrap();
    let secs = seconds(start.elapsed());
    let (im, one) = (&curves[0], &curves[1]);
    let mut worst = f64::INFINITY;
    for (a, b) in im.points.iter().zip(&one.points) {
        let z = (a.pd_empirical - b.pd_empirical)
            / joint_se(a.pd_empirical, b.pd_empirical, c.trials_h1);
        worst = worst.min(z);
    }
    outcome(
        worst > 2.0 && secs < 120.0,
        format!(
            "smallest gap {worst:.1} joint stderr, {} trials in {secs:.1}s",
            c.trials_h1
        ),
    )
}

fn fig2_equivalence() -> Outcome {
    let c = config::fig2(100, 0, fast()).unwrap();
    let start = Instant::now();
    let r = run_comparison(&c, None).unwrap();
    let secs = seconds(start.elapsed());
    let tol = if fast() {
        0.03 * (10_000f64 / 4000.0).sqrt()
    } else {
        0.03
    };
    outcome(
        r.max_abs_pd_gap < tol && secs < 120.0 && r.candidate_sensors == 153,
        format!(
            "clmpt@{} vs im1bit@{}: max |dPd|={:.4} (limit {tol:.3}) in {secs:.1}s",
            r.reference_sensors, r.candidate_sensors, r.max_abs_pd_gap
        ),
    )
}

/// The fig1 preset network with all three detectors.
fn fig1_all_detectors() -> ExperimentConfig {
    let mut c = config::fig1(0, fast()).unwrap();
    c.detectors.insert(
        1,
        DetectorSpec::new(DetectorKind::Clmpt, None, None).unwrap(),
    );
    c
}

fn null_calibration() -> Outcome {
    let c = fig1_all_detectors();
    let curves = run_roc(&c, None).unwrap();
    let mut worst = (0.0, String::new());
    for curve in &curves {
        for p in &curve.points {
            let se = (p.pfa_nominal * (1.0 - p.pfa_nominal) / c.trials_h0 as f64).sqrt();
            let z = (p.pfa_empirical - p.pfa_nominal).abs() / se;
            if z > worst.0 {
                worst = (
                    z,
                    format!(
                        "{} at pfa {}: {:.4}",
                        curve.detector, p.pfa_nominal, p.pfa_empirical
                    ),
                );
            }
        }
    }
    outcome(
        worst.0 <= 3.0,
        format!("worst {:.1} stderr ({})", worst.0, worst.1),
    )
}

fn asymptotic_normality() -> Outcome {
    let mut c = fig1_all_detectors();
    c.generator = Generator::Asymptotic;
    let records = run_normality(&c, None).unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for r in &records {
        match r.hypothesis {
            Hypothesis::H0 => {
                pass &= r.ks_pass_1pct;
                notes.push(format!(
                    "{} KS={:.4}{}",
                    r.detector,
                    r.ks_stat,
                    if r.ks_pass_1pct { "" } else { "!" }
                ));
            }
            Hypothesis::H1 => {
                let z = (r.mean - r.theoretical_mean).abs() / r.mean_stderr();
                pass &= z <= 3.0;
                notes.push(format!(
                    "{} mean={:.3} vs {:.3} ({z:.1} se)",
                    r.detector, r.mean, r.theoretical_mean
                ));
            }
        }
    }
    outcome(pass, notes.join("; "))
}

/// H0 mean and variance of a fused statistic, and the variance of the
/// score, summed over all reports. `slope` is dP(bit=1)/dp at p=0.
fn enumerate(
    p0: &[f64],
    slope: &[f64],
    fusion: &BitFusion,
    kind: QuantizerKind,
) -> (f64, f64, f64) {
    let q = p0.len();
    let (mut m1, mut m2, mut s2) = (0.0, 0.0, 0.0);
    for mask in 0u32..(1 << q) {
        let bits: Vec<u8> = (0..q).map(|i| ((mask >> i) & 1) as u8).collect();
        let mut prob = 1.0;
        let mut score = 0.0;
        for i in 0..q {
            let b = f64::from(bits[i]);
            prob *= if bits[i] == 1 { p0[i] } else { 1.0 - p0[i] };
            score += (b - p0[i]) * slope[i] / (p0[i] * (1.0 - p0[i]));
        }
        let t = fusion
            .normalized(&BitReport::new(bits, kind).unwrap())
            .unwrap();
        m1 += prob * t;
        m2 += prob * t * t;
        s2 += prob * score * score;
    }
    (m1, m2 - m1 * m1, s2)
}

fn enumeration_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for q in [1usize, 4, 7, 10] {
        let net = NetworkModel::random(q, 8, 1.0, q as u64).unwrap();
        let signal = SignalModel::new(0.05, 8.0, 8).unwrap();
        let a: Vec<f64> = net
            .norms_sq()
            .iter()
            .map(|n| n * signal.nonzero_var())
            .collect();

        let tau = 1.482072;
        let bank = QuantizerBank::broadcast(QuantizerKind::Lr, tau, q).unwrap();
        let p0 = vec![2.0 * upper_tail(tau); q];
        let slope: Vec<f64> = a.iter().map(|a| normal_pdf(tau) * tau * a).collect();
        let (m, v, s) = enumerate(
            &p0,
            &slope,
            &BitFusion::im1bit(&net, &bank).unwrap(),
            QuantizerKind::Lr,
        );
        let fi = fisher_im1bit(&net, &signal, bank.thresholds(), 0.0).unwrap();
        worst = worst.max(m.abs()).max((v - 1.0).abs()).max((fi - s).abs());

        let zeta = 1.575036;
        let bank = QuantizerBank::broadcast(QuantizerKind::Direct, zeta, q).unwrap();
        let p0 = vec![upper_tail(zeta); q];
        let slope: Vec<f64> = a
            .iter()
            .map(|a| normal_pdf(zeta) * zeta * a / 2.0)
            .collect();
        let (m, v, s) = enumerate(
            &p0,
            &slope,
            &BitFusion::onebit(&net, &bank).unwrap(),
            QuantizerKind::Direct,
        );
        let fi = fisher_onebit(&net, &signal, bank.thresholds()).unwrap();
        worst = worst.max(m.abs()).max((v - 1.0).abs()).max((fi - s).abs());
    }
    outcome(
        worst <= 1e-10,
        format!("largest deviation {worst:.2e} over Q in 1..=10"),
    )
}

fn quantizer_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = NetworkModel::random(8, 32, 1.7, 1).unwrap();
    let signal = SignalModel::new(0.05, 8.0, 32).unwrap();
    let mut mismatches = 0;
    let mut ones = 0;
    let pairs = 100_000;
    for _ in 0..pairs {
        let q = rng.random_range(0..net.sensors());
        let (c0, c1) = lr_coefficients(net.norms_sq()[q], net.noise_var(), &signal);
        // lambda spans thresholds from 0 to about 4 noise deviations
        let u: f64 = rng.random_range(0.0..4.0) * net.noise_std();
        let lambda = c0 * (c1 * u * u).exp().max(1.0 + 1e-12);
        let y: f64 = rng.random_range(-5.0..5.0) * net.noise_std();
        let by_ratio = quantize_by_ratio(y, lambda, &net, q, &signal);
        let tau = lambda_to_tau(lambda, &net, q, &signal).unwrap();
        let bank = QuantizerBank::broadcast(QuantizerKind::Lr, tau, 1).unwrap();
        let by_magnitude = quantize_lr(&[y], &bank).unwrap().bits[0];
        mismatches += usize::from(by_ratio != by_magnitude);
        ones += usize::from(by_ratio);
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches in {pairs} pairs ({ones} ones)"),
    )
}

fn determinism() -> Outcome {
    let c = config::fig1(7, fast()).unwrap();
    let reference = roc_csv(&run_roc(&c, Some(1)).unwrap());
    let mut same = [2, 4]
        .iter()
        .all(|&w| roc_csv(&run_roc(&c, Some(w)).unwrap()) == reference);

    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(workers);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparsedet"));
        cmd.args([
            "simulate-roc",
            "--preset",
            "fig1",
            "--seed",
            "7",
            "--workers",
            workers,
        ]);
        if fast() {
            cmd.arg("--fast");
        }
        let ok = cmd
            .arg("--out")
            .arg(&out)
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false);
        same &= ok;
        files.push(std::fs::read(out.join("roc.csv")).unwrap_or_default());
    }
    same &= files[0] == files[1] && files[0] == reference.as_bytes();
    outcome(
        same,
        format!(
            "library at 1/2/4 workers and CLI at 1/3 workers, {} trials",
            c.trials_h0
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("threshold optimum", threshold_optimum),
        ("baseline factor", baseline_factor),
        ("equivalence ratios", equivalence_ratios),
        ("fig1 dominance", fig1_dominance),
        ("fig2 equivalence", fig2_equivalence),
        ("null calibration", null_calibration),
        ("asymptotic normality", asymptotic_normality),
        ("enumeration oracle", enumeration_oracle),
        ("quantizer forms", quantizer_forms),
        ("determinism", determinism),
    ];
    // theoretical means at the fig1 settings, printed for reference
    let c = fig1_all_detectors();
    let (net, sig) = (c.network().unwrap(), c.signal().unwrap());
    let means: Vec<String> = c
        .detectors
        .iter()
        .map(|d| format!("{}={:.3}", d.id(), theoretical_mean(d, &net, &sig).unwrap()))
        .collect();
    println!(
        "acceptance ({} mode); theoretical means {}",
        if fast() { "fast" } else { "full" },
        means.join(" ")
    );

    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let r = run();
        if !r.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            i + 1,
            r.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
