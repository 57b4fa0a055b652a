use std::collections::HashMap;

use explab::exponents::{trc_exponent, DecodingMetric, RatePoint};
use explab::simulator::*;
use explab::{Channel, Dist, Error, OptimizerOptions};
use proptest::prelude::*;

fn bsc(p: f64) -> Channel {
    Channel::bsc(p).unwrap()
}

fn uniform2() -> Dist {
    Dist::uniform(2).unwrap()
}

/// Every output sequence of length `n` over `ny` symbols, in odometer order.
fn all_outputs(n: usize, ny: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..ny).map(move |y| {
                    let mut w = v.clone();
                    w.push(y);
                    w
                })
            })
            .collect();
    }
    out
}

fn likelihood(cw: &[usize], y: &[usize], ch: &Channel) -> f64 {
    cw.iter().zip(y).map(|(&x, &y)| ch.w(x, y)).product()
}

/// Tie-aware ML: ties (relative 1e-12) split the decision mass evenly.
fn tie_aware_ml(cb: &Codebook, ch: &Channel) -> Vec<f64> {
    let m = cb.len();
    let mut pe = vec![0.0; m];
    for y in all_outputs(cb.n(), ch.outputs()) {
        let l: Vec<f64> = cb
            .codewords()
            .iter()
            .map(|c| likelihood(c, &y, ch))
            .collect();
        let best = l.iter().cloned().fold(0.0, f64::max);
        let winners: Vec<usize> = (0..m).filter(|&i| l[i] >= best * (1.0 - 1e-12)).collect();
        for i in 0..m {
            let correct = if winners.contains(&i) {
                1.0 / winners.len() as f64
            } else {
                0.0
            };
            pe[i] += l[i] * (1.0 - correct);
        }
    }
    pe
}

#[test]
fn sample_codebook_n2_covers_the_type_class() {
    let cb = sample_codebook(2, 2000, &uniform2(), 11).unwrap();
    let ones = cb
        .codewords()
        .iter()
        .filter(|c| c.as_slice() == [0, 1])
        .count();
    assert!(cb
        .codewords()
        .iter()
        .all(|c| c.as_slice() == [0, 1] || c.as_slice() == [1, 0]));
    // Binomial(2000, 1/2): sd ~ 22.4
    assert!((ones as f64 - 1000.0).abs() < 3.0 * 22.4, "{ones}");
}

#[test]
fn sample_codebook_n4_is_uniform_on_six_sequences() {
    let draws = 60_000;
    let cb = sample_codebook(4, draws, &uniform2(), 5).unwrap();
    let mut freq: HashMap<Vec<usize>, usize> = HashMap::new();
    for c in cb.codewords() {
        *freq.entry(c.clone()).or_default() += 1;
    }
    assert_eq!(freq.len(), 6);
    let p = 1.0 / 6.0;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for (_, &count) in &freq {
        assert!(
            (count as f64 - draws as f64 * p).abs() < 3.0 * sd,
            "{count}"
        );
    }
}

#[test]
fn sampling_is_deterministic_and_validates_composition() {
    let q = Dist::new(vec![0.25, 0.75]).unwrap();
    let a = sample_codebook(8, 10, &q, 99).unwrap();
    assert_eq!(a, sample_codebook(8, 10, &q, 99).unwrap());
    assert_ne!(a, sample_codebook(8, 10, &q, 100).unwrap());
    assert!(a
        .codewords()
        .iter()
        .all(|c| c.iter().filter(|&&x| x == 0).count() == 2));
    assert_eq!(a.composition(), q);
    assert!(matches!(
        sample_codebook(3, 2, &q, 1),
        Err(Error::UnrealizableComposition { n: 3 })
    ));
}

#[test]
fn codebook_rejects_mixed_compositions() {
    assert!(Codebook::new(2, vec![vec![0, 1], vec![1, 1]]).is_err());
    assert!(Codebook::new(2, vec![vec![0, 1], vec![1, 0, 0]]).is_err());
    assert!(Codebook::new(2, vec![vec![0, 2]]).is_err());
    assert!(Codebook::new(2, vec![]).is_err());
}

#[test]
fn single_message_has_zero_error() {
    let cb = Codebook::new(2, vec![vec![0, 1, 1, 0]]).unwrap();
    let ch = bsc(0.2);
    for metric in [DecodingMetric::Ml, DecodingMetric::Mmi] {
        let p = exact_error_profile(&cb, &ch, metric).unwrap();
        assert_eq!(p.per_message, vec![0.0]);
    }
    let g = exact_error_profile_gld(&cb, &ch, GldConfig::new(DecodingMetric::Ml, 1.0).unwrap())
        .unwrap();
    assert_eq!(g.per_message, vec![0.0]);
}

#[test]
fn identical_codewords_lose_every_tie() {
    let cb = Codebook::new(2, vec![vec![0, 1, 0, 1], vec![0, 1, 0, 1]]).unwrap();
    let p = exact_error_profile(&cb, &bsc(0.1), DecodingMetric::Ml).unwrap();
    assert_eq!(p.per_message[0], 0.0);
    assert!((p.per_message[1] - 1.0).abs() < 1e-12);
}

#[test]
fn two_codeword_bsc_matches_direct_sum() {
    let cb = Codebook::new(2, vec![vec![0, 0, 1, 1], vec![1, 1, 0, 0]]).unwrap();
    let ch = bsc(0.1);
    let p = exact_error_profile(&cb, &ch, DecodingMetric::Ml).unwrap();
    // Direct 16-term sum with the lowest-index tie rule.
    let mut oracle = [0.0; 2];
    for y in all_outputs(4, 2) {
        let l0 = likelihood(&cb.codewords()[0], &y, &ch);
        let l1 = likelihood(&cb.codewords()[1], &y, &ch);
        if l1 > l0 * (1.0 + 1e-12) {
            oracle[0] += l0;
        } else {
            oracle[1] += l1;
        }
    }
    assert!((p.per_message[0] - oracle[0]).abs() < 1e-14);
    assert!((p.per_message[1] - oracle[1]).abs() < 1e-14);
    // Closed form: Hamming distance 4, message 0 errs when >= 3 flips
    // (strictly closer to x_1), message 1 also on exactly 2.
    let (e, c) = (0.1f64, 0.9f64);
    let three_up = 4.0 * e.powi(3) * c + e.powi(4);
    assert!((p.per_message[0] - three_up).abs() < 1e-14);
    assert!((p.per_message[1] - (three_up + 6.0 * e * e * c * c)).abs() < 1e-14);
    assert!((p.average - (p.per_message[0] + p.per_message[1]) / 2.0).abs() < 1e-15);
}

#[test]
fn gld_limits() {
    let q = uniform2();
    let ch = bsc(0.15);
    let cb = sample_codebook(6, 4, &q, 3).unwrap();
    let uniform =
        exact_error_profile_gld(&cb, &ch, GldConfig::new(DecodingMetric::Ml, 0.0).unwrap())
            .unwrap();
    for p in &uniform.per_message {
        assert!((p - 0.75).abs() < 1e-12);
    }
    let sharp =
        exact_error_profile_gld(&cb, &ch, GldConfig::new(DecodingMetric::Ml, 64.0).unwrap())
            .unwrap();
    let oracle = tie_aware_ml(&cb, &ch);
    for (a, b) in sharp.per_message.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
    assert!(GldConfig::new(DecodingMetric::Ml, -1.0).is_err());
}

#[test]
fn gld_reports_competing_sum() {
    let cb = sample_codebook(4, 2, &uniform2(), 8).unwrap();
    let p = exact_error_profile_gld(
        &cb,
        &bsc(0.1),
        GldConfig::new(DecodingMetric::Ml, 1.0).unwrap(),
    )
    .unwrap();
    let z = p.log_z_mean.unwrap();
    assert_eq!(z.len(), 2);
    assert!(z.iter().all(|v| v.is_finite() && *v < 0.0));
}

#[test]
fn expurgation_examples() {
    let cb = Codebook::new(2, vec![vec![0, 1], vec![1, 0], vec![0, 1], vec![1, 0]]).unwrap();
    let profile = ErrorProfile::from_per_message(vec![0.9, 0.1, 0.1, 0.1]);
    let kept = expurgate_worst_half(&cb, &profile).unwrap();
    assert_eq!(kept.codewords(), &[vec![1, 0], vec![0, 1]]);
    let flat = ErrorProfile::from_per_message(vec![0.2; 4]);
    assert_eq!(expurgate_worst_half(&cb, &flat).unwrap().len(), 2);
    let one = Codebook::new(2, vec![vec![0, 1]]).unwrap();
    assert_eq!(
        expurgate_worst_half(&one, &ErrorProfile::from_per_message(vec![0.0])).unwrap(),
        one
    );
    assert!(expurgate_worst_half(&cb, &ErrorProfile::from_per_message(vec![0.1])).is_err());
}

#[test]
fn expurgated_random_instance_meets_markov_bound() {
    let ch = bsc(0.1);
    let cb = sample_codebook(6, 8, &uniform2(), 21).unwrap();
    for metric in [DecodingMetric::Ml, DecodingMetric::Mmi] {
        let p = exact_error_profile(&cb, &ch, metric).unwrap();
        let kept = expurgate_worst_half(&cb, &p).unwrap();
        assert_eq!(kept.len(), 4);
        let q = exact_error_profile(&kept, &ch, metric).unwrap();
        assert!(q.max <= 2.0 * p.average, "{} > 2 * {}", q.max, p.average);
    }
}

#[test]
fn empirical_trc_flags_zero_error_codebooks() {
    let ch = Channel::identity(2).unwrap();
    let s = empirical_trc(
        12,
        2,
        &uniform2(),
        &ch,
        Decoder::Ml,
        6,
        4,
        DEFAULT_ENUMERATION_CAP,
    )
    .unwrap();
    assert_eq!(s.zero_error_samples, 6);
    assert_eq!(s.mean_log_pe, f64::NEG_INFINITY);
    assert!(!s.flags.is_empty());
}

#[test]
fn empirical_trc_is_reproducible() {
    let ch = bsc(0.1);
    let run = || {
        empirical_trc(
            8,
            2,
            &uniform2(),
            &ch,
            Decoder::Ml,
            2000,
            17,
            DEFAULT_ENUMERATION_CAP,
        )
        .unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a.samples, 2000);
    assert!(a.empirical_exponent.is_finite() && a.empirical_exponent > 0.0);
    assert!((a.rate - 2f64.ln() / 8.0).abs() < 1e-15);
    // Per-codebook ML optimality on the same draws.
    let mmi = empirical_trc(
        8,
        2,
        &uniform2(),
        &ch,
        Decoder::Mmi,
        2000,
        17,
        DEFAULT_ENUMERATION_CAP,
    )
    .unwrap();
    for (ml, mm) in a.per_sample_pe.iter().zip(&mmi.per_sample_pe) {
        assert!(ml <= &(mm + 1e-12));
    }
}

#[test]
fn summary_serializes_infinities() {
    let ch = Channel::identity(2).unwrap();
    let s = empirical_trc(
        4,
        1,
        &uniform2(),
        &ch,
        Decoder::Mmi,
        2,
        0,
        DEFAULT_ENUMERATION_CAP,
    )
    .unwrap();
    let text = serde_json::to_string(&s).unwrap();
    assert!(text.contains("\"-inf\""));
    let back: TrialSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(back.mean_log_pe, f64::NEG_INFINITY);
}

/// Error profile of the MMI decoder straight from the definition: empirical
/// mutual information of each codeword with each output, lowest index wins
/// ties.
fn mmi_oracle(cb: &Codebook, ch: &Channel) -> Vec<f64> {
    let mut pe = vec![0.0; cb.len()];
    for y in all_outputs(cb.n(), ch.outputs()) {
        let mi: Vec<f64> = cb
            .codewords()
            .iter()
            .map(|c| {
                explab::prob::mutual_information(
                    &explab::prob::empirical_joint(
                        c,
                        &y,
                        explab::Alphabet::new(2).unwrap(),
                        explab::Alphabet::new(ch.outputs()).unwrap(),
                    )
                    .unwrap(),
                )
            })
            .collect();
        let best = mi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let d = mi.iter().position(|&v| v >= best - 1e-9).unwrap();
        for (i, c) in cb.codewords().iter().enumerate() {
            if i != d {
                pe[i] += likelihood(c, &y, ch);
            }
        }
    }
    pe
}

#[test]
fn mmi_profile_matches_definition() {
    let ch = Channel::from_rows(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]]).unwrap();
    for seed in 0..5 {
        let cb = sample_codebook(6, 4, &uniform2(), seed).unwrap();
        let p = exact_error_profile(&cb, &ch, DecodingMetric::Mmi).unwrap();
        for (a, b) in p.per_message.iter().zip(mmi_oracle(&cb, &ch)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

/// The finite-n estimates approach the asymptotic TRC exponent as `n` grows
/// at a fixed rate. At these blocklengths MMI is still clearly worse than ML
/// (it cannot tell a codeword from its complement on a binary uniform
/// composition), so only the ordering of the two estimates is asserted.
#[test]
fn empirical_exponent_trend() {
    let ch = bsc(0.1);
    let q = uniform2();
    let rate = 2f64.ln() / 4.0;
    let target = trc_exponent(
        &RatePoint::new(rate, q.clone()).unwrap(),
        DecodingMetric::Ml,
        &ch,
        &OptimizerOptions::default(),
    )
    .unwrap()
    .value;
    let mut gaps = Vec::new();
    let mut last = None;
    for (n, m) in [(4, 2), (8, 4), (12, 8)] {
        let s = empirical_trc(n, m, &q, &ch, Decoder::Ml, 300, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        gaps.push((s.empirical_exponent - target).abs());
        last = Some(s);
    }
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
    let ml = last.unwrap();
    let mmi = empirical_trc(
        12,
        8,
        &q,
        &ch,
        Decoder::Mmi,
        300,
        1,
        DEFAULT_ENUMERATION_CAP,
    )
    .unwrap();
    assert!(ml.empirical_exponent >= mmi.empirical_exponent);
}

fn relabel_outputs(cb: &Codebook, ch: &Channel) -> (Channel, Vec<usize>) {
    let perm: Vec<usize> = (0..ch.outputs()).rev().collect();
    let identity: Vec<usize> = (0..cb.inputs()).collect();
    (ch.relabel(&identity, &perm).unwrap(), perm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn decoder_invariants(seed in 0u64..10_000, ni in 0usize..3, mi in 0usize..3, p in 0.02f64..0.3) {
        let n = [4, 6, 8][ni];
        let m = [2, 4, 8][mi];
        let ch = bsc(p);
        let cb = sample_codebook(n, m, &uniform2(), seed).unwrap();
        let ml = exact_error_profile(&cb, &ch, DecodingMetric::Ml).unwrap();
        let mmi = exact_error_profile(&cb, &ch, DecodingMetric::Mmi).unwrap();
        let gld = exact_error_profile_gld(&cb, &ch, GldConfig::new(DecodingMetric::Ml, 1.0).unwrap()).unwrap();
        let gld_mmi = exact_error_profile_gld(&cb, &ch, GldConfig::new(DecodingMetric::Mmi, 1.0).unwrap()).unwrap();
        prop_assert!(ml.average <= mmi.average + 1e-12);
        prop_assert!(mmi.average <= 1.0);
        prop_assert!(ml.average <= gld.average + 1e-12);
        prop_assert!(ml.average <= gld_mmi.average + 1e-12);
        prop_assert!(gld.average <= 2.0 * ml.average + 1e-12);
        for prof in [&ml, &mmi, &gld] {
            prop_assert!(prof.per_message.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let agree = mmi_entropy_agreement(&cb, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        prop_assert_eq!(agree.mismatches, 0);
        prop_assert_eq!(agree.outputs, 1u64 << n);
    }

    #[test]
    fn output_relabeling_preserves_profiles(seed in 0u64..10_000) {
        // A non-symmetric 2x3 channel so the relabeling is not a symmetry.
        let ch = Channel::from_rows(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]]).unwrap();
        let cb = sample_codebook(6, 4, &uniform2(), seed).unwrap();
        let (ch2, _) = relabel_outputs(&cb, &ch);
        for metric in [DecodingMetric::Ml, DecodingMetric::Mmi] {
            let a = exact_error_profile(&cb, &ch, metric).unwrap();
            let b = exact_error_profile(&cb, &ch2, metric).unwrap();
            for (x, y) in a.per_message.iter().zip(&b.per_message) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expurgation_never_violates_markov(seed in 0u64..10_000, ni in 0usize..3, mi in 0usize..3) {
        let n = [4, 6, 8][ni];
        let m = [2, 4, 8][mi];
        let ch = bsc(0.1);
        let cb = sample_codebook(n, m, &uniform2(), seed).unwrap();
        let p = exact_error_profile(&cb, &ch, DecodingMetric::Ml).unwrap();
        let kept = expurgate_worst_half(&cb, &p).unwrap();
        prop_assert_eq!(kept.len(), m.div_ceil(2));
        let q = exact_error_profile(&kept, &ch, DecodingMetric::Ml).unwrap();
        prop_assert!(q.max <= 2.0 * p.average);
    }
}
