//! Exact small-blocklength simulation of fixed-composition random codes.
//!
//! Error probabilities are computed by enumerating every output sequence in
//! `Y^n` (a reflected Gray code, so consecutive outputs differ in one
//! position and the per-codeword joint type counts update in O(1)), never by
//! sampling outputs. Only the codebooks are random.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::DecodingMetric;
use crate::prob::{Channel, Dist};
use crate::serde_ext::{ext_f64, ext_vec};

/// Default cap on `|Y|^n` for the exhaustive output enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 1 << 20;

/// Two decoder scores closer than this are a tie; ties go to the lowest
/// message index.
pub const TIE_TOL: f64 = 1e-9;

/// An ordered list of codewords sharing one composition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    n: usize,
    inputs: usize,
    codewords: Vec<Vec<usize>>,
}

impl Codebook {
    /// Validates that all codewords have length `n`, use symbols below
    /// `inputs` and share the same composition.
    pub fn new(inputs: usize, codewords: Vec<Vec<usize>>) -> Result<Self> {
        let first = codewords
            .first()
            .ok_or_else(|| Error::InvalidArgument("codebook needs at least one codeword".into()))?;
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "blocklength must be positive".into(),
            ));
        }
        let counts = symbol_counts(first, inputs)?;
        for cw in &codewords[1..] {
            if cw.len() != n {
                return Err(Error::LengthMismatch {
                    left: n,
                    right: cw.len(),
                });
            }
            if symbol_counts(cw, inputs)? != counts {
                return Err(Error::InvalidArgument(
                    "codewords have different compositions".into(),
                ));
            }
        }
        Ok(Codebook {
            n,
            inputs,
            codewords,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn codewords(&self) -> &[Vec<usize>] {
        &self.codewords
    }

    pub fn composition(&self) -> Dist {
        let counts =
            symbol_counts(&self.codewords[0], self.inputs).expect("validated on construction");
        Dist::from_counts(&counts).expect("nonempty codeword")
    }

    /// `log(M) / n` in nats.
    pub fn rate(&self) -> f64 {
        (self.len() as f64).ln() / self.n as f64
    }
}

fn symbol_counts(seq: &[usize], size: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0; size];
    for &s in seq {
        if s >= size {
            return Err(Error::SymbolOutOfRange { symbol: s, size });
        }
        counts[s] += 1;
    }
    Ok(counts)
}

/// Symbol counts `n * q_x(x)`, provided they are all integers.
pub fn type_counts(n: usize, q_x: &Dist) -> Result<Vec<usize>> {
    q_x.probs()
        .iter()
        .map(|&p| {
            let c = p * n as f64;
            let r = c.round();
            if (c - r).abs() > 1e-9 {
                Err(Error::UnrealizableComposition { n })
            } else {
                Ok(r as usize)
            }
        })
        .collect()
}

fn sample_with(rng: &mut ChaCha8Rng, n: usize, m: usize, q_x: &Dist) -> Result<Codebook> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("n and M must be positive".into()));
    }
    let counts = type_counts(n, q_x)?;
    let base: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(x, &c)| std::iter::repeat(x).take(c))
        .collect();
    let codewords = (0..m)
        .map(|_| {
            let mut cw = base.clone();
            cw.shuffle(rng);
            cw
        })
        .collect();
    Ok(Codebook {
        n,
        inputs: q_x.len(),
        codewords,
    })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `m` codewords independently and uniformly from the type class of
/// `q_x` at blocklength `n`.
pub fn sample_codebook(n: usize, m: usize, q_x: &Dist, seed: u64) -> Result<Codebook> {
    sample_with(&mut stream_rng(seed, 0), n, m, q_x)
}

/// Exact per-message error probabilities of one codebook.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub per_message: Vec<f64>,
    pub average: f64,
    pub max: f64,
    /// For the likelihood decoder: `E[log Z_m(Y)] / n` per message, where
    /// `Z_m(y)` is the competing part of the posterior normalizer and `Y` is
    /// drawn from `W(.|x_m)`.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_vec")]
    pub log_z_mean: Option<Vec<f64>>,
}

mod opt_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrap(#[serde(with = "crate::serde_ext::ext_vec")] Vec<f64>);

    pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|v| Wrap(v.clone())).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

impl ErrorProfile {
    pub fn from_per_message(per_message: Vec<f64>) -> Self {
        let average = per_message.iter().sum::<f64>() / per_message.len().max(1) as f64;
        let max = per_message.iter().cloned().fold(0.0, f64::max);
        ErrorProfile {
            per_message,
            average,
            max,
            log_z_mean: None,
        }
    }
}

/// Generalized likelihood decoder: message `m` is drawn with probability
/// proportional to `exp(n * beta * g(P_{x_m y}))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GldConfig {
    pub metric: DecodingMetric,
    pub beta: f64,
}

impl GldConfig {
    pub fn new(metric: DecodingMetric, beta: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be finite and >= 0, got {beta}"
            )));
        }
        Ok(GldConfig { metric, beta })
    }
}

/// Any decoder the simulator can evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Decoder {
    Ml,
    Mmi,
    Gld(GldConfig),
}

impl Decoder {
    pub fn tag(&self) -> String {
        match self {
            Decoder::Ml => "ml".into(),
            Decoder::Mmi => "mmi".into(),
            Decoder::Gld(c) => format!("gld-{}(beta={})", c.metric, c.beta),
        }
    }
}

impl From<DecodingMetric> for Decoder {
    fn from(m: DecodingMetric) -> Self {
        match m {
            DecodingMetric::Ml => Decoder::Ml,
            DecodingMetric::Mmi => Decoder::Mmi,
        }
    }
}

/// Walks every `y in Y^n`, keeping joint type counts `N_m(x, y)` of every
/// codeword with the current output.
struct Enumerator<'a> {
    cb: &'a Codebook,
    ny: usize,
    y: Vec<usize>,
    dir: Vec<isize>,
    /// `counts[m][x * ny + y]`.
    counts: Vec<Vec<u32>>,
    /// Output symbol counts.
    y_counts: Vec<u32>,
    done: bool,
}

impl<'a> Enumerator<'a> {
    fn new(cb: &'a Codebook, ny: usize, cap: usize) -> Result<Self> {
        let total = (ny as u128).checked_pow(cb.n as u32).unwrap_or(u128::MAX);
        if total > cap as u128 {
            return Err(Error::EnumerationCap { count: total, cap });
        }
        let nx = cb.inputs;
        let counts = cb
            .codewords
            .iter()
            .map(|cw| {
                let mut c = vec![0u32; nx * ny];
                for &x in cw {
                    c[x * ny] += 1;
                }
                c
            })
            .collect();
        let mut y_counts = vec![0u32; ny];
        y_counts[0] = cb.n as u32;
        Ok(Enumerator {
            cb,
            ny,
            y: vec![0; cb.n],
            dir: vec![1; cb.n],
            counts,
            y_counts,
            done: false,
        })
    }

    /// Advances to the next output in reflected Gray order; `false` at the end.
    fn advance(&mut self) -> bool {
        let n = self.cb.n;
        let mut j = 0;
        while j < n {
            let next = self.y[j] as isize + self.dir[j];
            if next >= 0 && next < self.ny as isize {
                break;
            }
            self.dir[j] = -self.dir[j];
            j += 1;
        }
        if j == n {
            self.done = true;
            return false;
        }
        let old = self.y[j];
        let new = (old as isize + self.dir[j]) as usize;
        self.y[j] = new;
        self.y_counts[old] -= 1;
        self.y_counts[new] += 1;
        for (cw, c) in self.cb.codewords.iter().zip(self.counts.iter_mut()) {
            let x = cw[j];
            c[x * self.ny + old] -= 1;
            c[x * self.ny + new] += 1;
        }
        true
    }
}

/// `log W(y|x_m) = sum N(x,y) log W(y|x)`, evaluated from the counts.
fn log_likelihood(c: &[u32], ch: &Channel) -> f64 {
    let mut s = 0.0;
    for (&k, &l) in c.iter().zip(ch.log_w_flat()) {
        if k > 0 {
            s += k as f64 * l;
        }
    }
    s
}

/// `n * I(P_{x y})` from the joint counts, with `x_counts` the composition.
fn n_mutual_information(c: &[u32], x_counts: &[u32], y_counts: &[u32], n: usize) -> f64 {
    let ny = y_counts.len();
    let nf = n as f64;
    let mut s = 0.0;
    for (i, &k) in c.iter().enumerate() {
        if k > 0 {
            let (x, y) = (i / ny, i % ny);
            s += k as f64 * (k as f64 * nf / (x_counts[x] as f64 * y_counts[y] as f64)).ln();
        }
    }
    s
}

/// `n * H(X|Y)` of the empirical joint from the counts.
fn n_conditional_entropy(c: &[u32], y_counts: &[u32]) -> f64 {
    let ny = y_counts.len();
    let mut s = 0.0;
    for (i, &k) in c.iter().enumerate() {
        if k > 0 {
            s -= k as f64 * (k as f64 / y_counts[i % ny] as f64).ln();
        }
    }
    s
}

/// Lowest index whose score is within [`TIE_TOL`] of the maximum.
pub fn tie_break_argmax(scores: &[f64]) -> usize {
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .position(|&s| s >= best - TIE_TOL || s == best)
        .unwrap_or(0)
}

fn check_channel(cb: &Codebook, ch: &Channel) -> Result<()> {
    if cb.inputs != ch.inputs() {
        return Err(Error::DimensionMismatch {
            expected: ch.inputs(),
            got: cb.inputs,
        });
    }
    Ok(())
}

fn x_counts(cb: &Codebook) -> Vec<u32> {
    let mut c = vec![0u32; cb.inputs];
    for &x in &cb.codewords[0] {
        c[x] += 1;
    }
    c
}

/// Exact error profile of the deterministic ML or MMI decoder.
pub fn exact_error_profile(
    cb: &Codebook,
    ch: &Channel,
    decoder: DecodingMetric,
) -> Result<ErrorProfile> {
    exact_error_profile_capped(cb, ch, decoder, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_error_profile_capped(
    cb: &Codebook,
    ch: &Channel,
    decoder: DecodingMetric,
    cap: usize,
) -> Result<ErrorProfile> {
    check_channel(cb, ch)?;
    let m = cb.len();
    let mut pe = vec![0.0; m];
    let mut e = Enumerator::new(cb, ch.outputs(), cap)?;
    if m == 1 {
        return Ok(ErrorProfile::from_per_message(pe));
    }
    let xc = x_counts(cb);
    let mut ll = vec![0.0; m];
    let mut score = vec![0.0; m];
    loop {
        for i in 0..m {
            ll[i] = log_likelihood(&e.counts[i], ch);
        }
        let scores = match decoder {
            DecodingMetric::Ml => &ll,
            DecodingMetric::Mmi => {
                for i in 0..m {
                    score[i] = n_mutual_information(&e.counts[i], &xc, &e.y_counts, cb.n);
                }
                &score
            }
        };
        let d = tie_break_argmax(scores);
        for i in 0..m {
            if i != d && ll[i] > f64::NEG_INFINITY {
                pe[i] += ll[i].exp();
            }
        }
        if !e.advance() {
            break;
        }
    }
    Ok(ErrorProfile::from_per_message(
        pe.into_iter().map(|p: f64| p.min(1.0)).collect(),
    ))
}

/// Exact error profile of the generalized likelihood decoder.
pub fn exact_error_profile_gld(
    cb: &Codebook,
    ch: &Channel,
    cfg: GldConfig,
) -> Result<ErrorProfile> {
    exact_error_profile_gld_capped(cb, ch, cfg, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_error_profile_gld_capped(
    cb: &Codebook,
    ch: &Channel,
    cfg: GldConfig,
    cap: usize,
) -> Result<ErrorProfile> {
    check_channel(cb, ch)?;
    GldConfig::new(cfg.metric, cfg.beta)?;
    let m = cb.len();
    let n = cb.n as f64;
    let mut e = Enumerator::new(cb, ch.outputs(), cap)?;
    let xc = x_counts(cb);
    let mut pe = vec![0.0; m];
    let mut log_z = vec![0.0; m];
    let mut ll = vec![0.0; m];
    let mut w = vec![0.0; m];
    loop {
        for i in 0..m {
            ll[i] = log_likelihood(&e.counts[i], ch);
            let g = match cfg.metric {
                DecodingMetric::Ml => ll[i],
                DecodingMetric::Mmi => n_mutual_information(&e.counts[i], &xc, &e.y_counts, cb.n),
            };
            // beta = 0 is the uniform posterior, even where g = -inf.
            w[i] = if cfg.beta == 0.0 { 0.0 } else { cfg.beta * g };
        }
        let top = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if top > f64::NEG_INFINITY {
            let scaled: Vec<f64> = w.iter().map(|&v| (v - top).exp()).collect();
            let total: f64 = scaled.iter().sum();
            for i in 0..m {
                if ll[i] == f64::NEG_INFINITY {
                    continue;
                }
                let p = ll[i].exp();
                let rest = total - scaled[i];
                pe[i] += p * (rest / total);
                if m > 1 {
                    log_z[i] += p * if rest > 0.0 {
                        rest.ln() + top
                    } else {
                        f64::NEG_INFINITY
                    };
                }
            }
        }
        if !e.advance() {
            break;
        }
    }
    let mut profile =
        ErrorProfile::from_per_message(pe.into_iter().map(|p| p.clamp(0.0, 1.0)).collect());
    profile.log_z_mean = Some(
        log_z
            .into_iter()
            .map(|z| if m == 1 { f64::NEG_INFINITY } else { z / n })
            .collect(),
    );
    Ok(profile)
}

/// Error profile of any decoder.
pub fn error_profile(
    cb: &Codebook,
    ch: &Channel,
    decoder: Decoder,
    cap: usize,
) -> Result<ErrorProfile> {
    match decoder {
        Decoder::Ml => exact_error_profile_capped(cb, ch, DecodingMetric::Ml, cap),
        Decoder::Mmi => exact_error_profile_capped(cb, ch, DecodingMetric::Mmi, cap),
        Decoder::Gld(c) => exact_error_profile_gld_capped(cb, ch, c, cap),
    }
}

/// Result of comparing the MMI decisions with minimum conditional empirical
/// entropy decisions on every output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionAgreement {
    pub outputs: u64,
    pub mismatches: u64,
}

/// Enumerates all outputs and counts those where the maximum empirical
/// mutual information decision differs from the minimum empirical
/// conditional entropy `H(X|Y)` decision.
pub fn mmi_entropy_agreement(
    cb: &Codebook,
    outputs: usize,
    cap: usize,
) -> Result<DecisionAgreement> {
    let m = cb.len();
    let mut e = Enumerator::new(cb, outputs, cap)?;
    let xc = x_counts(cb);
    let mut mi = vec![0.0; m];
    let mut neg_h = vec![0.0; m];
    let mut out = DecisionAgreement {
        outputs: 0,
        mismatches: 0,
    };
    loop {
        for i in 0..m {
            mi[i] = n_mutual_information(&e.counts[i], &xc, &e.y_counts, cb.n);
            neg_h[i] = -n_conditional_entropy(&e.counts[i], &e.y_counts);
        }
        out.outputs += 1;
        if tie_break_argmax(&mi) != tie_break_argmax(&neg_h) {
            out.mismatches += 1;
        }
        if !e.advance() {
            break;
        }
    }
    Ok(out)
}

/// Keeps the `ceil(M/2)` messages with the smallest error probability, in
/// their original order.
pub fn expurgate_worst_half(cb: &Codebook, profile: &ErrorProfile) -> Result<Codebook> {
    let m = cb.len();
    if profile.per_message.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: profile.per_message.len(),
        });
    }
    if m == 1 {
        return Ok(cb.clone());
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        profile.per_message[a]
            .partial_cmp(&profile.per_message[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = order[..m.div_ceil(2)].to_vec();
    keep.sort_unstable();
    Ok(Codebook {
        n: cb.n,
        inputs: cb.inputs,
        codewords: keep.into_iter().map(|i| cb.codewords[i].clone()).collect(),
    })
}

/// Finite-`n` estimate of the TRC exponent: `-(1/n)` times the sample mean
/// of `log P_e` over independently drawn codebooks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub n: usize,
    pub m: usize,
    /// `log(M) / n`.
    pub rate: f64,
    pub decoder: String,
    pub seed: u64,
    pub samples: usize,
    /// Codebooks with `P_e = 0`, excluded from the log-mean.
    pub zero_error_samples: usize,
    #[serde(with = "ext_f64")]
    pub mean_log_pe: f64,
    /// Standard error of `mean_log_pe`.
    #[serde(with = "ext_f64")]
    pub std_err_log_pe: f64,
    #[serde(with = "ext_f64")]
    pub empirical_exponent: f64,
    /// Mean of `P_e` over all samples (zero-error ones included).
    pub mean_pe: f64,
    #[serde(with = "ext_vec")]
    pub per_sample_pe: Vec<f64>,
    pub flags: Vec<String>,
}

/// Samples `samples` codebooks (sample `i` uses RNG stream `i` of `seed`)
/// and summarizes `log P_e` under `decoder`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_trc(
    n: usize,
    m: usize,
    q_x: &Dist,
    ch: &Channel,
    decoder: Decoder,
    samples: usize,
    seed: u64,
    cap: usize,
) -> Result<TrialSummary> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    if q_x.len() != ch.inputs() {
        return Err(Error::DimensionMismatch {
            expected: ch.inputs(),
            got: q_x.len(),
        });
    }
    type_counts(n, q_x)?;
    let total = (ch.outputs() as u128)
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Err(Error::EnumerationCap { count: total, cap });
    }
    let pes: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let cb = sample_with(&mut stream_rng(seed, i as u64), n, m, q_x)?;
            Ok(error_profile(&cb, ch, decoder, cap)?.average)
        })
        .collect::<Result<_>>()?;
    let logs: Vec<f64> = pes.iter().filter(|&&p| p > 0.0).map(|p| p.ln()).collect();
    let zero = samples - logs.len();
    let mut flags = Vec::new();
    if zero > 0 {
        flags.push(format!(
            "{zero} of {samples} codebooks have zero error probability; excluded from the log-mean"
        ));
    }
    let (mean, se) = if logs.is_empty() {
        flags.push("every sampled codebook has zero error probability".into());
        (f64::NEG_INFINITY, f64::NAN)
    } else {
        let k = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / k;
        let var = if logs.len() > 1 {
            logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        (mean, (var / k).sqrt())
    };
    Ok(TrialSummary {
        n,
        m,
        rate: (m as f64).ln() / n as f64,
        decoder: decoder.tag(),
        seed,
        samples,
        zero_error_samples: zero,
        mean_log_pe: mean,
        std_err_log_pe: se,
        empirical_exponent: -mean / n as f64,
        mean_pe: pes.iter().sum::<f64>() / samples as f64,
        per_sample_pe: pes,
        flags,
    })
}
