//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Two criteria contain inequalities that do not hold for the quantities as
//! defined (see the README's "Known failures"): the pointwise dual
//! inequalities of criterion 3 and the `Gamma~ <= Gamma` part of criterion 8.
//! They are evaluated and reported as FAIL; the run only exits nonzero when a
//! criterion fails in any other way.

use std::process::{Command, ExitCode};
use std::time::Instant;

use rayon::prelude::*;

use explab::duals::{certify_theorem1, coupling_duals, psi, BoundReport, CertifyOptions};
use explab::exponents::{
    a_threshold, alpha_threshold, expurgated_exponent, gamma, gamma_tilde, sweep, DecodingMetric,
    ExponentKind,
};
use explab::prob::coupling_grid;
use explab::simulator::{
    error_profile, expurgate_worst_half, mmi_entropy_agreement, sample_codebook,
    DEFAULT_ENUMERATION_CAP,
};
use explab::{Channel, Decoder, Dist, GldConfig, Joint2, OptimizerOptions, RatePoint};

const ML: DecodingMetric = DecodingMetric::Ml;
const MMI: DecodingMetric = DecodingMetric::Mmi;
const RATES: [f64; 6] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30];
const CHANNELS: [f64; 2] = [0.1, 0.25];

struct Outcome {
    pass: bool,
    /// The failure is exactly the documented one.
    known: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome {
            pass,
            known: false,
            detail,
        }
    }
}

fn bsc(p: f64) -> Channel {
    Channel::bsc(p).unwrap()
}

fn u2() -> Dist {
    Dist::uniform(2).unwrap()
}

/// Bound-chain reports for every (channel, rate) of criteria 1 and 4.
fn reports() -> Vec<(f64, BoundReport)> {
    let opts = OptimizerOptions::default();
    let tols = CertifyOptions::default();
    let jobs: Vec<(f64, f64)> = CHANNELS
        .iter()
        .flat_map(|&p| RATES.iter().map(move |&r| (p, r)))
        .collect();
    jobs.par_iter()
        .map(|&(p, r)| {
            let rp = RatePoint::new(r, u2()).unwrap();
            (p, certify_theorem1(&rp, &bsc(p), &opts, &tols).unwrap())
        })
        .collect()
}

fn criterion1(reps: &[(f64, BoundReport)]) -> Outcome {
    let (worst, at) = reps
        .iter()
        .map(|(p, r)| ((r.trc_ml - r.trc_mmi).abs(), (*p, r.rate)))
        .fold((0.0, (0.0, 0.0)), |a, b| if b.0 > a.0 { b } else { a });
    Outcome::new(
        worst <= 0.02,
        format!(
            "TRC exponents, ML vs MMI: max |diff| = {worst:.6} at BSC({}) R={} (tol 0.02)",
            at.0, at.1
        ),
    )
}

/// Expurgated exponents for both metrics at every (channel, rate).
fn expurgated() -> Vec<(f64, f64, f64, f64)> {
    let opts = OptimizerOptions::default();
    let jobs: Vec<(f64, f64)> = CHANNELS
        .iter()
        .flat_map(|&p| RATES.iter().map(move |&r| (p, r)))
        .collect();
    jobs.par_iter()
        .map(|&(p, r)| {
            let rp = RatePoint::new(r, u2()).unwrap();
            let ml = expurgated_exponent(&rp, ML, &bsc(p), &opts).unwrap().value;
            let mmi = expurgated_exponent(&rp, MMI, &bsc(p), &opts).unwrap().value;
            (p, r, ml, mmi)
        })
        .collect()
}

fn criterion2(ex: &[(f64, f64, f64, f64)]) -> Outcome {
    let worst = ex.iter().map(|e| (e.2 - e.3).abs()).fold(0.0, f64::max);
    Outcome::new(
        worst <= 0.02,
        format!("expurgated exponents, ML vs MMI: max |diff| = {worst:.6} (tol 0.02)"),
    )
}

fn criterion3() -> Outcome {
    let ch = bsc(0.1);
    let opts = OptimizerOptions::default();
    let grid = coupling_grid(&u2(), 4).unwrap();
    let jobs: Vec<(Joint2, f64)> = grid
        .iter()
        .flat_map(|c| [0.0, 0.1, 0.2, 0.4].map(|r| (c.clone(), r)))
        .collect();
    let duals: Vec<_> = jobs
        .par_iter()
        .map(|(c, r)| coupling_duals(c, *r, &ch, &u2(), &opts).unwrap())
        .collect();
    let lp = duals
        .iter()
        .map(|d| d.lambda_minus_psi().value)
        .fold(f64::INFINITY, f64::min);
    let pt = duals
        .iter()
        .map(|d| d.phi_minus_theta().value)
        .fold(f64::INFINITY, f64::min);
    let bad = duals
        .iter()
        .filter(|d| d.lambda_minus_psi().value < -1e-4 || d.phi_minus_theta().value < -1e-4)
        .count();
    let pass = lp >= -1e-4 && pt >= -1e-4;
    let mut o = Outcome::new(
        pass,
        format!(
            "pointwise duals on {} (coupling, R) points: min(Lambda-Psi) = {lp:.6}, min(Phi-Theta) = {pt:.6}, {bad} violations (tol 1e-4)",
            duals.len()
        ),
    );
    // The violations come from couplings where X and X' are exchangeable
    // (I(X;Y) = I(X';Y) for every test channel, so Lambda = 0 < Psi).
    let anti = Joint2::new(2, 2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
    let anti_lambda = duals
        .iter()
        .find(|d| d.coupling == anti)
        .map(|d| d.lambda.value);
    o.known = !pass && anti_lambda.is_some_and(|l| l.abs() < 1e-6);
    o
}

fn criterion4(reps: &[(f64, BoundReport)]) -> Outcome {
    let mut worst = [f64::INFINITY; 3];
    for (_, r) in reps {
        worst[0] = worst[0].min(r.ml_upper + 0.02 - r.trc_ml);
        worst[1] = worst[1].min(r.trc_mmi + 0.02 - r.mmi_lower);
        worst[2] = worst[2].min(r.mmi_lower + 1e-4 - r.ml_upper);
    }
    Outcome::new(
        worst.iter().all(|&w| w >= 0.0),
        format!(
            "sandwich slack (>= 0 passes): trc_ml <= ml_upper+0.02: {:.6}, mmi_lower <= trc_mmi+0.02: {:.6}, ml_upper <= mmi_lower+1e-4: {:.6}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn criterion5() -> Outcome {
    let anti = Joint2::new(2, 2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for p in [0.05, 0.1, 0.25] {
        let v = psi(&anti, &bsc(p)).unwrap().value;
        let closed = -(2.0 * (p * (1.0 - p)).sqrt()).ln();
        worst = worst.max((v - closed).abs());
        parts.push(format!("p={p}: {v:.6}"));
    }
    Outcome::new(
        worst <= 1e-6,
        format!(
            "Bhattacharyya closed form: {} (max err {worst:.1e}, tol 1e-6)",
            parts.join(", ")
        ),
    )
}

struct SimStats {
    instances: usize,
    ml_gt_mmi: usize,
    mmi_gt_one: usize,
    gld_gt_2ml: usize,
    mismatched_outputs: u64,
    enumerated_outputs: u64,
    expurgation_violations: usize,
    reduced_violations: usize,
}

/// Runs every simulated instance of criteria 6 and 7.
fn simulate() -> SimStats {
    let ch = bsc(0.1);
    let gld = Decoder::Gld(GldConfig::new(ML, 1.0).unwrap());
    let jobs: Vec<(usize, usize, u64)> = [4usize, 6, 8]
        .iter()
        .flat_map(|&n| [2usize, 4, 8].map(move |m| (n, m)))
        .flat_map(|(n, m)| (0..200u64).map(move |s| (n, m, s)))
        .collect();
    let rows: Vec<[u64; 7]> = jobs
        .par_iter()
        .map(|&(n, m, seed)| {
            let cb = sample_codebook(n, m, &u2(), seed).unwrap();
            let ml = error_profile(&cb, &ch, Decoder::Ml, DEFAULT_ENUMERATION_CAP).unwrap();
            let mmi = error_profile(&cb, &ch, Decoder::Mmi, DEFAULT_ENUMERATION_CAP).unwrap();
            let g = error_profile(&cb, &ch, gld, DEFAULT_ENUMERATION_CAP).unwrap();
            let agree = mmi_entropy_agreement(&cb, ch.outputs(), DEFAULT_ENUMERATION_CAP).unwrap();
            // Expurgation, judged by the original per-message errors of the
            // kept messages and by their errors in the reduced codebook.
            let kept = expurgate_worst_half(&cb, &ml).unwrap();
            let mut sorted = ml.per_message.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let worst_kept = sorted[kept.len() - 1];
            let reduced = error_profile(&kept, &ch, Decoder::Ml, DEFAULT_ENUMERATION_CAP).unwrap();
            [
                (ml.average > mmi.average) as u64,
                (mmi.average > 1.0) as u64,
                (g.average > 2.0 * ml.average) as u64,
                agree.mismatches,
                agree.outputs,
                (worst_kept > 2.0 * ml.average) as u64,
                (reduced.max > 2.0 * ml.average) as u64,
            ]
        })
        .collect();
    let sum = |i: usize| rows.iter().map(|r| r[i]).sum::<u64>();
    SimStats {
        instances: rows.len(),
        ml_gt_mmi: sum(0) as usize,
        mmi_gt_one: sum(1) as usize,
        gld_gt_2ml: sum(2) as usize,
        mismatched_outputs: sum(3),
        enumerated_outputs: sum(4),
        expurgation_violations: sum(5) as usize,
        reduced_violations: sum(6) as usize,
    }
}

fn criterion6(s: &SimStats) -> Outcome {
    Outcome::new(
        s.ml_gt_mmi == 0 && s.mmi_gt_one == 0 && s.gld_gt_2ml == 0 && s.mismatched_outputs == 0,
        format!(
            "{} exact instances: ML > MMI {}x, MMI > 1 {}x, GLD > 2 ML {}x, MMI vs min-entropy mismatches {}/{} outputs",
            s.instances, s.ml_gt_mmi, s.mmi_gt_one, s.gld_gt_2ml, s.mismatched_outputs, s.enumerated_outputs
        ),
    )
}

fn criterion7(s: &SimStats) -> Outcome {
    Outcome::new(
        s.expurgation_violations == 0 && s.reduced_violations == 0,
        format!(
            "{} instances: kept-half max error > 2x average {}x (original errors), {}x (reduced codebook)",
            s.instances, s.expurgation_violations, s.reduced_violations
        ),
    )
}

fn nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + 1e-6)
}

fn criterion8(reps: &[(f64, BoundReport)], ex: &[(f64, f64, f64, f64)]) -> Outcome {
    let opts = OptimizerOptions::default();
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for p in CHANNELS {
        let mine = |f: &dyn Fn(&BoundReport) -> f64| -> Vec<f64> {
            reps.iter()
                .filter(|(q, _)| *q == p)
                .map(|(_, r)| f(r))
                .collect()
        };
        curves.push(mine(&|r| r.trc_ml));
        curves.push(mine(&|r| r.trc_mmi));
        curves.push(ex.iter().filter(|e| e.0 == p).map(|e| e.2).collect());
        curves.push(ex.iter().filter(|e| e.0 == p).map(|e| e.3).collect());
        let rc = sweep(&RATES, &u2(), ML, &bsc(p), &opts, ExponentKind::Random).unwrap();
        curves.push(rc.values());
    }
    let monotone = curves.iter().all(|c| nonincreasing(c));
    let nonneg = curves.iter().flatten().all(|&v| v >= 0.0);

    let mut thresholds_ok = true;
    let rates: Vec<f64> = (0..=12).map(|i| 0.05 * i as f64).collect();
    for p in CHANNELS {
        for qy in [0.1, 0.3, 0.5, 0.8] {
            let q_y = Dist::new(vec![qy, 1.0 - qy]).unwrap();
            for m in [ML, MMI] {
                let a: Vec<f64> = rates
                    .iter()
                    .map(|&r| a_threshold(r, &q_y, m, &bsc(p), &u2(), &opts).unwrap())
                    .collect();
                let al: Vec<f64> = rates
                    .iter()
                    .map(|&r| alpha_threshold(r, &q_y, m, &bsc(p), &u2(), &opts).unwrap())
                    .collect();
                let up = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0] - 1e-6);
                thresholds_ok &= up(&a) && up(&al);
            }
        }
    }

    let grid = coupling_grid(&u2(), 8).unwrap();
    let jobs: Vec<(f64, Joint2, f64, DecodingMetric)> = CHANNELS
        .iter()
        .flat_map(|&p| grid.iter().map(move |c| (p, c.clone())))
        .flat_map(|(p, c)| [0.0, 0.1, 0.2, 0.3].map(|r| (p, c.clone(), r)))
        .flat_map(|(p, c, r)| [ML, MMI].map(|m| (p, c.clone(), r, m)))
        .collect();
    let excess: Vec<(f64, DecodingMetric)> = jobs
        .par_iter()
        .map(|(p, c, r, m)| {
            let g = gamma(c, *r, *m, &bsc(*p), &u2(), &opts).unwrap();
            let gt = gamma_tilde(c, *r, *m, &bsc(*p), &u2(), &opts).unwrap();
            (gt - g, *m)
        })
        .collect();
    let violations = excess.iter().filter(|e| e.0 > 1e-6).count();
    let worst = excess.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let worst_mmi = excess
        .iter()
        .filter(|e| e.1 == MMI)
        .map(|e| e.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let inner_ok = violations == 0;
    let mut o = Outcome::new(
        monotone && nonneg && thresholds_ok && inner_ok,
        format!(
            "{} curves nonincreasing: {monotone}; nonnegative: {nonneg}; thresholds nondecreasing: {thresholds_ok}; \
             Gamma~ <= Gamma+1e-6: {violations}/{} violations (max excess {worst:.6}, MMI only {worst_mmi:.6})",
            curves.len(),
            excess.len()
        ),
    );
    o.known = monotone && nonneg && thresholds_ok && !inner_ok;
    o
}

fn criterion9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bsc01.ch"),
        "dmc 2 2 bsc01\n0.9 0.1\n0.1 0.9\n",
    )
    .unwrap();
    let runs: [&[&str]; 3] = [
        &[
            "simulate",
            "--channel",
            "bsc01.ch",
            "--n",
            "8",
            "--M",
            "2",
            "--samples",
            "100",
            "--seed",
            "7",
        ],
        &[
            "simulate",
            "--channel",
            "bsc01.ch",
            "--n",
            "6",
            "--M",
            "4",
            "--samples",
            "50",
            "--seed",
            "11",
            "--decoder",
            "gld",
            "--beta",
            "2",
        ],
        &[
            "exponent",
            "trc",
            "--channel",
            "bsc01.ch",
            "--rates",
            "0.1,0.2",
            "--metric",
            "mmi",
            "--grid-k",
            "4",
        ],
    ];
    let mut identical = 0;
    for args in runs {
        let once = || {
            let out = Command::new(env!("CARGO_BIN_EXE_explab"))
                .current_dir(dir.path())
                .env_remove("EXPLAB_THREADS")
                .args(args)
                .args(["--out", "run"])
                .output()
                .unwrap();
            assert!(
                out.status.success(),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
            std::fs::read(dir.path().join("run.json")).unwrap()
        };
        if once() == once() {
            identical += 1;
        }
    }
    Outcome::new(
        identical == runs.len(),
        format!(
            "{identical}/{} CLI runs byte-identical on repeat",
            runs.len()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let (reps, ex) = rayon::join(reports, expurgated);
    let sims = simulate();
    let outcomes = [
        ("1", criterion1(&reps)),
        ("2", criterion2(&ex)),
        ("3", criterion3()),
        ("4", criterion4(&reps)),
        ("5", criterion5()),
        ("6", criterion6(&sims)),
        ("7", criterion7(&sims)),
        ("8", criterion8(&reps, &ex)),
        ("9", criterion9()),
    ];
    let mut unexpected = 0;
    for (id, o) in &outcomes {
        let tag = match (o.pass, o.known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {id}: {tag} - {}", o.detail);
    }
    println!(
        "acceptance finished in {:.0} s",
        start.elapsed().as_secs_f64()
    );
    if unexpected > 0 {
        println!("{unexpected} criteria failed unexpectedly");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
