//! Primal exponent computations: the decoder thresholds `a` and `alpha`, the
//! inner problems `Gamma` and `Gamma~`, and the typical-random-code,
//! expurgated and random-coding exponents.
//!
//! All searches run over exact domains (products of simplices for
//! conditional distributions, transportation polytopes for joints with pinned
//! marginals); the only slack is `constraint_slack` on the decoder constraint
//! inside `Gamma`.

use std::fmt;
use std::str::FromStr;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{mutual_information_raw, Channel, CondDist, Dist, Joint2, MAX_ALPHABET};
use crate::search::{
    golden_max, minimize, Found, OptimizerOptions, Simplices, Transport, PAIR_RATIOS,
};
use crate::serde_ext::{ext_f64, ext_vec};

/// Tolerance on the exact information constraints (`I <= R`, `I <= 2R`).
pub const INFO_TOL: f64 = 1e-12;

/// The decoding metric `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodingMetric {
    /// `g(Q) = E_Q log W(Y|X)`.
    Ml,
    /// `g(Q) = I_Q(X;Y)`; ignores the channel.
    Mmi,
}

impl DecodingMetric {
    /// Evaluates `g` on a joint over `X x Y`. Under ML the value is `-inf`
    /// if the joint puts mass where the channel has none.
    pub fn evaluate(&self, joint: &Joint2, ch: &Channel) -> f64 {
        self.eval_raw(joint.probs(), joint.cols(), ch)
    }

    pub(crate) fn eval_raw(self, j: &[f64], ny: usize, ch: &Channel) -> f64 {
        match self {
            DecodingMetric::Ml => {
                let mut s = 0.0;
                for (&p, &l) in j.iter().zip(ch.log_w_flat()) {
                    if p > 0.0 {
                        s += p * l;
                    }
                }
                s
            }
            DecodingMetric::Mmi => mutual_information_raw(j, j.len() / ny, ny),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DecodingMetric::Ml => "ml",
            DecodingMetric::Mmi => "mmi",
        }
    }
}

impl fmt::Display for DecodingMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecodingMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(DecodingMetric::Ml),
            "mmi" => Ok(DecodingMetric::Mmi),
            _ => Err(Error::InvalidArgument(format!(
                "unknown metric {s:?} (expected ml or mmi)"
            ))),
        }
    }
}

/// Which exponent a computation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExponentKind {
    #[serde(rename = "trc")]
    Trc,
    #[serde(rename = "ex")]
    Expurgated,
    #[serde(rename = "random")]
    Random,
}

impl ExponentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExponentKind::Trc => "trc",
            ExponentKind::Expurgated => "ex",
            ExponentKind::Random => "random",
        }
    }
}

impl fmt::Display for ExponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExponentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trc" => Ok(ExponentKind::Trc),
            "ex" | "expurgated" => Ok(ExponentKind::Expurgated),
            "random" | "rc" => Ok(ExponentKind::Random),
            _ => Err(Error::InvalidArgument(format!(
                "unknown exponent {s:?} (expected trc, ex or random)"
            ))),
        }
    }
}

/// A coding rate (nats per channel use) and a codeword composition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub rate: f64,
    pub composition: Dist,
}

impl RatePoint {
    pub fn new(rate: f64, composition: Dist) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rate must be finite and >= 0, got {rate}"
            )));
        }
        Ok(RatePoint { rate, composition })
    }
}

/// Outcome of an inner minimization over `Q_{Y|XX'}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerResult {
    #[serde(with = "ext_f64")]
    pub value: f64,
    /// Rows indexed by `x * |X| + x'`; rows of zero-mass pairs hold `W(.|x)`.
    pub argmin: CondDist,
    pub grid_points: usize,
    pub feasible_points: usize,
    pub grid_k: u32,
    /// `g(Q_{X'Y}) - max{g(Q_{XY}), threshold}` at the witness; negative
    /// values mean the decoder constraint is violated (by at most the slack
    /// for `Gamma`, penalized for `Gamma~`).
    #[serde(with = "ext_f64")]
    pub margin: f64,
    #[serde(with = "ext_vec")]
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub outer_grid_points: usize,
    pub outer_feasible_points: usize,
    pub outer_grid_k: u32,
    pub inner_grid_points: usize,
    pub inner_feasible_points: usize,
    pub inner_grid_k: u32,
    pub constraint_slack: f64,
    #[serde(with = "ext_f64")]
    pub constraint_margin: f64,
    /// Outer incumbent after each polishing level.
    #[serde(with = "ext_vec")]
    pub refinement_trace: Vec<f64>,
}

/// An exponent value with the minimizers that attain it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentResult {
    pub kind: ExponentKind,
    pub metric: Option<DecodingMetric>,
    pub rate: f64,
    /// Clamped to be nonnegative.
    #[serde(with = "ext_f64")]
    pub value: f64,
    /// Value before clamping.
    #[serde(with = "ext_f64")]
    pub raw_value: f64,
    /// `Q_{XX'}`; absent for the random-coding exponent.
    pub argmin_coupling: Option<Joint2>,
    /// `Q_{Y|XX'}` (or `Q_{Y|X}` for the random-coding exponent).
    pub argmin_channel: CondDist,
    pub diagnostics: Diagnostics,
    pub reason: Option<String>,
}

type Key = (u64, [u64; MAX_ALPHABET]);

fn key(r: f64, q_y: &[f64]) -> Key {
    let mut k = [0u64; MAX_ALPHABET];
    for (slot, v) in k.iter_mut().zip(q_y) {
        *slot = v.to_bits();
    }
    (r.to_bits(), k)
}

#[derive(Clone, Copy, PartialEq)]
enum Threshold {
    A,
    Alpha,
}

pub(crate) struct Terms {
    pub f: f64,
    pub g_xy: f64,
    pub g_x2y: f64,
    pub q_y: [f64; MAX_ALPHABET],
}

/// Channel, composition and metric shared by every evaluation of one
/// exponent, with memoized thresholds.
pub(crate) struct Model<'a> {
    pub ch: &'a Channel,
    pub q_x: &'a Dist,
    pub metric: DecodingMetric,
    pub opts: &'a OptimizerOptions,
    a_cache: DashMap<Key, f64>,
    alpha_cache: DashMap<Key, f64>,
}

/// Joint with marginals `q_x`, `q_y` maximizing `t sum J log W + H(J)`,
/// by log-domain Sinkhorn scaling of the kernel `W^t`. `None` if the
/// marginals are not matched to 1e-10 after the iteration budget.
fn sinkhorn(log_w: &[f64], t: f64, q_x: &[f64], q_y: &[f64]) -> Option<Vec<f64>> {
    let (nx, ny) = (q_x.len(), q_y.len());
    let log_k: Vec<f64> = log_w
        .iter()
        .map(|&l| if l == f64::NEG_INFINITY { l } else { t * l })
        .collect();
    let lse = |it: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = it.collect();
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            m
        } else {
            m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        }
    };
    let ln = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    let mut u = vec![0.0; nx];
    let mut v = vec![0.0; ny];
    let joint = |u: &[f64], v: &[f64]| -> Vec<f64> {
        (0..nx * ny)
            .map(|i| {
                let (x, y) = (i / ny, i % ny);
                if q_x[x] <= 0.0 || q_y[y] <= 0.0 {
                    0.0
                } else {
                    (u[x] + log_k[i] + v[y]).exp()
                }
            })
            .collect()
    };
    for it in 0..20_000 {
        for x in 0..nx {
            if q_x[x] > 0.0 {
                let s = lse(&mut (0..ny)
                    .filter(|&y| q_y[y] > 0.0)
                    .map(|y| log_k[x * ny + y] + v[y]));
                u[x] = ln(q_x[x]) - s;
            }
        }
        for y in 0..ny {
            if q_y[y] > 0.0 {
                let s = lse(&mut (0..nx)
                    .filter(|&x| q_x[x] > 0.0)
                    .map(|x| log_k[x * ny + y] + u[x]));
                v[y] = ln(q_y[y]) - s;
            }
        }
        if it % 10 == 9 {
            if !u.iter().chain(&v).all(|z| z.is_finite() || *z == 0.0) {
                return None;
            }
            let j = joint(&u, &v);
            let err: f64 = (0..nx)
                .map(|x| ((0..ny).map(|y| j[x * ny + y]).sum::<f64>() - q_x[x]).abs())
                .sum();
            if err < 1e-10 {
                return Some(j);
            }
        }
    }
    None
}

pub(crate) fn check_inputs(ch: &Channel, q_x: &Dist, opts: &OptimizerOptions) -> Result<()> {
    opts.validate()?;
    if q_x.len() != ch.inputs() {
        return Err(Error::DimensionMismatch {
            expected: ch.inputs(),
            got: q_x.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_coupling(q_xx: &Joint2, q_x: &Dist, opts: &OptimizerOptions) -> Result<()> {
    if q_xx.rows() != q_x.len() || q_xx.cols() != q_x.len() {
        return Err(Error::DimensionMismatch {
            expected: q_x.len(),
            got: q_xx.rows(),
        });
    }
    let dev = q_xx.marginal_deviation(q_x);
    if dev > opts.constraint_slack + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "coupling marginals deviate from the composition by {dev:e}"
        )));
    }
    Ok(())
}

impl<'a> Model<'a> {
    pub(crate) fn new(
        ch: &'a Channel,
        q_x: &'a Dist,
        metric: DecodingMetric,
        opts: &'a OptimizerOptions,
    ) -> Self {
        Model {
            ch,
            q_x,
            metric,
            opts,
            a_cache: DashMap::new(),
            alpha_cache: DashMap::new(),
        }
    }

    fn nx(&self) -> usize {
        self.ch.inputs()
    }

    fn ny(&self) -> usize {
        self.ch.outputs()
    }

    fn g(&self, j: &[f64]) -> f64 {
        self.metric.eval_raw(j, self.ny(), self.ch)
    }

    /// `a(R, Q_Y)`.
    pub(crate) fn a(&self, r: f64, q_y: &[f64]) -> f64 {
        self.cached(Threshold::A, r, q_y)
    }

    /// `alpha(R, Q_Y)`.
    pub(crate) fn alpha(&self, r: f64, q_y: &[f64]) -> f64 {
        self.cached(Threshold::Alpha, r, q_y)
    }

    fn cached(&self, which: Threshold, r: f64, q_y: &[f64]) -> f64 {
        let cache = match which {
            Threshold::A => &self.a_cache,
            Threshold::Alpha => &self.alpha_cache,
        };
        let k = key(r, q_y);
        if let Some(v) = cache.get(&k) {
            return *v;
        }
        let v = self.threshold(which, r, q_y);
        cache.insert(k, v);
        v
    }

    fn threshold(&self, which: Threshold, r: f64, q_y: &[f64]) -> f64 {
        if self.metric == DecodingMetric::Mmi {
            // The feasible set {I <= R} is connected and contains the
            // product joint, so sup I over it is min(R, max I).
            return match which {
                Threshold::A => r.min(self.max_information(q_y)),
                Threshold::Alpha => r,
            };
        }
        if self.nx() == 2 && q_y.len() == 2 {
            return self.threshold_binary(which, r, q_y);
        }
        let dom = Transport::new(self.q_x.probs().to_vec(), q_y.to_vec(), &PAIR_RATIOS);
        let obj = |j: &[f64]| {
            let i = mutual_information_raw(j, self.nx(), q_y.len());
            if i > r + INFO_TOL {
                return f64::INFINITY;
            }
            let g = self.g(j);
            -match which {
                Threshold::A => g,
                Threshold::Alpha => g - i + r,
            }
        };
        let found = minimize(
            &dom,
            &[dom.product_point()],
            &obj,
            self.opts,
            self.opts.starts,
        );
        // Both candidates are feasible points, so the larger one is kept.
        let path = self
            .threshold_path(which, r, q_y)
            .unwrap_or(f64::NEG_INFINITY);
        (-found.value).max(path)
    }

    /// ML thresholds through the entropic transport path: `J(t)` maximizes
    /// `t g(J) + H(J)` over joints with the pinned marginals, and `I(J(t))`
    /// grows with `t`. `alpha` is `g - I + R` at `t = 1` when that point is
    /// feasible; otherwise both thresholds sit where `I(J(t)) = R`. `None`
    /// when the scaling does not converge (e.g. zero channel entries that
    /// leave no feasible support).
    fn threshold_path(&self, which: Threshold, r: f64, q_y: &[f64]) -> Option<f64> {
        let (nx, ny) = (self.nx(), q_y.len());
        let lw = self.ch.log_w_flat();
        let at = |t: f64| -> Option<(f64, f64)> {
            let j = sinkhorn(lw, t, self.q_x.probs(), q_y)?;
            Some((self.g(&j), mutual_information_raw(&j, nx, ny)))
        };
        let point = |g: f64, i: f64| match which {
            Threshold::A => g,
            Threshold::Alpha => g - i + r,
        };
        let t_max = match which {
            Threshold::A => 64.0,
            Threshold::Alpha => 1.0,
        };
        let (g_hi, i_hi) = at(t_max)?;
        if i_hi <= r + INFO_TOL {
            return Some(point(g_hi, i_hi));
        }
        let (mut lo, mut hi) = (0.0, t_max);
        let mut best = at(0.0)?;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (g, i) = at(mid)?;
            if i <= r + INFO_TOL {
                lo = mid;
                best = (g, i);
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * (1.0 + hi) {
                break;
            }
        }
        Some(point(best.0, best.1))
    }

    /// Largest `I(X;Y)` over joints with marginals `Q_X` and `q_y`.
    fn max_information(&self, q_y: &[f64]) -> f64 {
        if self.nx() == 2 && q_y.len() == 2 {
            let seg = Segment::new(self.q_x.probs()[0], q_y[0]);
            return seg.info(seg.lo).max(seg.info(seg.hi));
        }
        let dom = Transport::new(self.q_x.probs().to_vec(), q_y.to_vec(), &PAIR_RATIOS);
        let obj = |j: &[f64]| -mutual_information_raw(j, self.nx(), q_y.len());
        -minimize(
            &dom,
            &[dom.product_point()],
            &obj,
            self.opts,
            self.opts.starts,
        )
        .value
    }

    /// Binary-binary case: the transportation polytope is a segment, `I` is
    /// convex along it and the ML metric is linear, so both thresholds are
    /// exact one-dimensional problems.
    fn threshold_binary(&self, which: Threshold, r: f64, q_y: &[f64]) -> f64 {
        let seg = Segment::new(self.q_x.probs()[0], q_y[0]);
        let (tl, tr) = seg.sublevel(r);
        let g = |t: f64| self.g(&seg.joint(t));
        match which {
            Threshold::A => g(tl).max(g(tr)),
            Threshold::Alpha => {
                let h = |t: f64| {
                    let v = g(t) - seg.info(t) + r;
                    if v.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        v
                    }
                };
                let ends = h(tl).max(h(tr));
                if tr - tl < 1e-15 {
                    return ends;
                }
                golden_max(&h, tl, tr, 1e-12).1.max(ends)
            }
        }
    }

    pub(crate) fn terms(&self, q: &[f64], cond: &[f64]) -> Terms {
        let (nx, ny) = (self.nx(), self.ny());
        let lw = self.ch.log_w_flat();
        let mut jxy = [0.0; MAX_ALPHABET * MAX_ALPHABET];
        let mut jx2y = [0.0; MAX_ALPHABET * MAX_ALPHABET];
        let mut q_y = [0.0; MAX_ALPHABET];
        let mut f = 0.0;
        for x in 0..nx {
            for x2 in 0..nx {
                let p = q[x * nx + x2];
                if p <= 0.0 {
                    continue;
                }
                let row = &cond[(x * nx + x2) * ny..(x * nx + x2 + 1) * ny];
                for (y, &c) in row.iter().enumerate() {
                    if c <= 0.0 {
                        continue;
                    }
                    let m = p * c;
                    jxy[x * ny + y] += m;
                    jx2y[x2 * ny + y] += m;
                    q_y[y] += m;
                    f += m * (c.ln() - lw[x * ny + y]);
                }
            }
        }
        Terms {
            f,
            g_xy: self.g(&jxy[..nx * ny]),
            g_x2y: self.g(&jx2y[..nx * ny]),
            q_y,
        }
    }

    /// Objective of `Gamma` (`+inf` when infeasible).
    fn gamma_objective(&self, q: &[f64], r: f64, cond: &[f64]) -> f64 {
        let t = self.terms(q, cond);
        if !(t.f < f64::INFINITY) {
            return f64::INFINITY;
        }
        let slack = self.opts.constraint_slack;
        if !(t.g_x2y >= t.g_xy - slack) {
            return f64::INFINITY;
        }
        if !(t.g_x2y >= self.a(r, &t.q_y[..self.ny()]) - slack) {
            return f64::INFINITY;
        }
        t.f
    }

    /// Objective of `Gamma~`.
    fn gamma_tilde_objective(&self, q: &[f64], r: f64, cond: &[f64]) -> f64 {
        let t = self.terms(q, cond);
        if !(t.f < f64::INFINITY) || t.g_x2y == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        let level = t.g_xy.max(self.alpha(r, &t.q_y[..self.ny()]));
        t.f + (level - t.g_x2y).max(0.0)
    }

    fn margin(&self, q: &[f64], r: f64, cond: &[f64], tilde: bool) -> f64 {
        let t = self.terms(q, cond);
        let th = if tilde {
            self.alpha(r, &t.q_y[..self.ny()])
        } else {
            self.a(r, &t.q_y[..self.ny()])
        };
        let v = t.g_x2y - t.g_xy.max(th);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// `W(.|x)` in row `(x, x')`, or `W(.|x')` when `swapped`.
    fn channel_rows(&self, swapped: bool) -> Vec<f64> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut out = Vec::with_capacity(nx * nx * ny);
        for x in 0..nx {
            for x2 in 0..nx {
                let src = if swapped { x2 } else { x };
                out.extend((0..ny).map(|y| self.ch.w(src, y)));
            }
        }
        out
    }

    /// Minimizes `Gamma` (or `Gamma~` when `tilde`) over `Q_{Y|XX'}`.
    pub(crate) fn inner(&self, q: &[f64], r: f64, tilde: bool) -> InnerResult {
        let active: Vec<usize> = (0..q.len()).filter(|&i| q[i] > 0.0).collect();
        let base = self.channel_rows(false);
        let dom = Simplices::new(self.ny(), active, base.clone(), &PAIR_RATIOS);
        let seeds = [base, self.channel_rows(true)];
        let found = if tilde {
            minimize(
                &dom,
                &seeds,
                &|c: &[f64]| self.gamma_tilde_objective(q, r, c),
                self.opts,
                self.opts.starts,
            )
        } else {
            minimize(
                &dom,
                &seeds,
                &|c: &[f64]| self.gamma_objective(q, r, c),
                self.opts,
                self.opts.starts,
            )
        };
        let margin = self.margin(q, r, &found.point, tilde);
        InnerResult {
            value: found.value,
            argmin: CondDist::from_flat(&found.point, self.ny()),
            grid_points: found.grid_points,
            feasible_points: found.feasible_points,
            grid_k: found.grid_k,
            margin,
            trace: found.trace,
        }
    }

    /// Outer minimization over couplings for the TRC (`tilde == false`,
    /// `I <= 2R`) or expurgated (`tilde == true`, `I <= R`) exponent.
    pub(crate) fn outer(&self, r: f64, tilde: bool, seeds: &[Vec<f64>]) -> Result<ExponentResult> {
        let nx = self.nx();
        let counts = self.q_x.grid_counts(self.opts.grid_k)?;
        let limit = if tilde { r } else { 2.0 * r };
        let dom = Transport::new(self.q_x.probs().to_vec(), self.q_x.probs().to_vec(), &[1.0])
            .with_exact_grid(counts.clone(), counts);
        let obj = |q: &[f64]| {
            let i = mutual_information_raw(q, nx, nx);
            if i > limit + INFO_TOL {
                return f64::INFINITY;
            }
            self.inner(q, r, tilde).value + i - r
        };
        let mut all_seeds = vec![dom.product_point()];
        all_seeds.extend(seeds.iter().cloned());
        let found: Found = minimize(&dom, &all_seeds, &obj, self.opts, self.opts.starts);
        let inner = self.inner(&found.point, r, tilde);
        let raw = found.value;
        Ok(ExponentResult {
            kind: if tilde {
                ExponentKind::Expurgated
            } else {
                ExponentKind::Trc
            },
            metric: Some(self.metric),
            rate: r,
            value: raw.max(0.0),
            raw_value: raw,
            argmin_coupling: Some(Joint2::from_raw(nx, nx, found.point)),
            argmin_channel: inner.argmin,
            diagnostics: Diagnostics {
                outer_grid_points: found.grid_points,
                outer_feasible_points: found.feasible_points,
                outer_grid_k: found.grid_k,
                inner_grid_points: inner.grid_points,
                inner_feasible_points: inner.feasible_points,
                inner_grid_k: inner.grid_k,
                constraint_slack: if tilde {
                    0.0
                } else {
                    self.opts.constraint_slack
                },
                constraint_margin: inner.margin,
                refinement_trace: found.trace,
            },
            reason: if raw == f64::INFINITY {
                Some("no feasible point found".into())
            } else {
                None
            },
        })
    }

    /// Re-evaluates the outer objective at explicit witnesses.
    pub(crate) fn outer_objective(&self, q: &[f64], cond: &[f64], r: f64, tilde: bool) -> f64 {
        let nx = self.nx();
        let i = mutual_information_raw(q, nx, nx);
        let limit = if tilde { r } else { 2.0 * r };
        if i > limit + INFO_TOL {
            return f64::INFINITY;
        }
        let inner = if tilde {
            self.gamma_tilde_objective(q, r, cond)
        } else {
            self.gamma_objective(q, r, cond)
        };
        inner + i - r
    }
}

/// The segment of 2x2 joints with marginals `(px, 1-px)` and `(py, 1-py)`,
/// parametrized by the `(0,0)` entry.
struct Segment {
    px: f64,
    py: f64,
    lo: f64,
    hi: f64,
}

impl Segment {
    fn new(px: f64, py: f64) -> Self {
        Segment {
            px,
            py,
            lo: (px + py - 1.0).max(0.0),
            hi: px.min(py),
        }
    }

    fn joint(&self, t: f64) -> [f64; 4] {
        let mut j = [t, self.px - t, self.py - t, 1.0 - self.px - self.py + t];
        for v in j.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        j
    }

    fn info(&self, t: f64) -> f64 {
        mutual_information_raw(&self.joint(t), 2, 2)
    }

    /// Endpoints of `{t : I(t) <= r}`, an interval around the product point.
    fn sublevel(&self, r: f64) -> (f64, f64) {
        let t0 = (self.px * self.py).clamp(self.lo, self.hi);
        let edge = |end: f64| {
            if self.info(end) <= r + INFO_TOL {
                return end;
            }
            let (mut inside, mut outside) = (t0, end);
            for _ in 0..200 {
                let mid = 0.5 * (inside + outside);
                if mid == inside || mid == outside {
                    break;
                }
                if self.info(mid) <= r + INFO_TOL {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            inside
        };
        (edge(self.lo), edge(self.hi))
    }
}

fn q_y_checked(q_y: &Dist, ch: &Channel) -> Result<()> {
    if q_y.len() != ch.outputs() {
        return Err(Error::DimensionMismatch {
            expected: ch.outputs(),
            got: q_y.len(),
        });
    }
    Ok(())
}

/// `a(R, Q_Y)`: the largest metric value among joints with marginals `Q_X`
/// and `Q_Y` and `I(X;Y) <= R`.
pub fn a_threshold(
    r: f64,
    q_y: &Dist,
    metric: DecodingMetric,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<f64> {
    check_inputs(ch, q_x, opts)?;
    q_y_checked(q_y, ch)?;
    RatePoint::new(r, q_x.clone())?;
    Ok(Model::new(ch, q_x, metric, opts).a(r, q_y.probs()))
}

/// `alpha(R, Q_Y)`: as [`a_threshold`] with objective `g - I + R`.
pub fn alpha_threshold(
    r: f64,
    q_y: &Dist,
    metric: DecodingMetric,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<f64> {
    check_inputs(ch, q_x, opts)?;
    q_y_checked(q_y, ch)?;
    RatePoint::new(r, q_x.clone())?;
    Ok(Model::new(ch, q_x, metric, opts).alpha(r, q_y.probs()))
}

/// `Gamma(Q_{XX'}, R)` with its minimizer and search diagnostics.
pub fn gamma_detail(
    q_xx: &Joint2,
    r: f64,
    metric: DecodingMetric,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<InnerResult> {
    check_inputs(ch, q_x, opts)?;
    check_coupling(q_xx, q_x, opts)?;
    RatePoint::new(r, q_x.clone())?;
    Ok(Model::new(ch, q_x, metric, opts).inner(q_xx.probs(), r, false))
}

/// `Gamma(Q_{XX'}, R)`: the smallest conditional divergence `D(Q_{Y|XX'} || W)`
/// under which the competing codeword scores at least as well as the sent
/// one and at least `a(R, Q_Y)`. `+inf` when no feasible point is found.
pub fn gamma(
    q_xx: &Joint2,
    r: f64,
    metric: DecodingMetric,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<f64> {
    Ok(gamma_detail(q_xx, r, metric, ch, q_x, opts)?.value)
}

/// `Gamma~(Q_{XX'}, R)` with its minimizer and search diagnostics.
pub fn gamma_tilde_detail(
    q_xx: &Joint2,
    r: f64,
    metric: DecodingMetric,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<InnerResult> {
    check_inputs(ch, q_x, opts)?;
    check_coupling(q_xx, q_x, opts)?;
    RatePoint::new(r, q_x.clone())?;
    Ok(Model::new(ch, q_x, metric, opts).inner(q_xx.probs(), r, true))
}

/// `Gamma~(Q_{XX'}, R)`: unconstrained, with the decoder condition replaced
/// by the penalty `[max{g(Q_{XY}), alpha(R, Q_Y)} - g(Q_{X'Y})]_+`.
pub fn gamma_tilde(
    q_xx: &Joint2,
    r: f64,
    metric: DecodingMetric,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<f64> {
    Ok(gamma_tilde_detail(q_xx, r, metric, ch, q_x, opts)?.value)
}

/// Error exponent of the typical random fixed-composition code.
pub fn trc_exponent(
    rp: &RatePoint,
    metric: DecodingMetric,
    ch: &Channel,
    opts: &OptimizerOptions,
) -> Result<ExponentResult> {
    check_inputs(ch, &rp.composition, opts)?;
    RatePoint::new(rp.rate, rp.composition.clone())?;
    Model::new(ch, &rp.composition, metric, opts).outer(rp.rate, false, &[])
}

/// Expurgated exponent of fixed-composition codes.
pub fn expurgated_exponent(
    rp: &RatePoint,
    metric: DecodingMetric,
    ch: &Channel,
    opts: &OptimizerOptions,
) -> Result<ExponentResult> {
    check_inputs(ch, &rp.composition, opts)?;
    RatePoint::new(rp.rate, rp.composition.clone())?;
    Model::new(ch, &rp.composition, metric, opts).outer(rp.rate, true, &[])
}

/// Outer objective of the TRC (`kind == Trc`) or expurgated exponent at
/// explicit witnesses; `+inf` when the witnesses are infeasible.
pub fn outer_objective(
    kind: ExponentKind,
    q_xx: &Joint2,
    cond: &CondDist,
    r: f64,
    metric: DecodingMetric,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<f64> {
    check_inputs(ch, q_x, opts)?;
    check_coupling(q_xx, q_x, opts)?;
    let n = q_x.len();
    if cond.num_rows() != n * n || cond.width() != ch.outputs() {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            got: cond.num_rows(),
        });
    }
    let tilde = match kind {
        ExponentKind::Trc => false,
        ExponentKind::Expurgated => true,
        ExponentKind::Random => {
            return Err(Error::InvalidArgument(
                "the random-coding exponent has no coupling".into(),
            ))
        }
    };
    let model = Model::new(ch, q_x, metric, opts);
    Ok(model.outer_objective(q_xx.probs(), &cond.to_flat(), r, tilde))
}

fn random_coding_objective(ch: &Channel, q_x: &Dist, r: f64, cond: &[f64]) -> f64 {
    let (nx, ny) = (ch.inputs(), ch.outputs());
    let lw = ch.log_w_flat();
    let mut joint = [0.0; MAX_ALPHABET * MAX_ALPHABET];
    let mut d = 0.0;
    for x in 0..nx {
        let p = q_x.get(x);
        if p <= 0.0 {
            continue;
        }
        for y in 0..ny {
            let c = cond[x * ny + y];
            if c > 0.0 {
                joint[x * ny + y] = p * c;
                d += p * c * (c.ln() - lw[x * ny + y]);
            }
        }
    }
    d + (mutual_information_raw(&joint[..nx * ny], nx, ny) - r).max(0.0)
}

/// The fixed-composition random-coding exponent with its minimizer.
pub fn random_coding_result(
    rp: &RatePoint,
    ch: &Channel,
    opts: &OptimizerOptions,
) -> Result<ExponentResult> {
    check_inputs(ch, &rp.composition, opts)?;
    RatePoint::new(rp.rate, rp.composition.clone())?;
    let q_x = &rp.composition;
    let active: Vec<usize> = (0..q_x.len()).filter(|&x| q_x.get(x) > 0.0).collect();
    let base = ch.matrix().to_flat();
    let dom = Simplices::new(ch.outputs(), active, base.clone(), &PAIR_RATIOS);
    let obj = |c: &[f64]| random_coding_objective(ch, q_x, rp.rate, c);
    let found = minimize(&dom, &[base], &obj, opts, opts.starts);
    Ok(ExponentResult {
        kind: ExponentKind::Random,
        metric: None,
        rate: rp.rate,
        value: found.value.max(0.0),
        raw_value: found.value,
        argmin_coupling: None,
        argmin_channel: CondDist::from_flat(&found.point, ch.outputs()),
        diagnostics: Diagnostics {
            outer_grid_points: 0,
            outer_feasible_points: 0,
            outer_grid_k: 0,
            inner_grid_points: found.grid_points,
            inner_feasible_points: found.feasible_points,
            inner_grid_k: found.grid_k,
            constraint_slack: 0.0,
            constraint_margin: 0.0,
            refinement_trace: found.trace,
        },
        reason: None,
    })
}

/// `E_r(R, Q_X) = min over Q_{Y|X} of D(Q_{Y|X} || W | Q_X) + [I(Q_X, Q_{Y|X}) - R]_+`.
pub fn random_coding_exponent(
    rp: &RatePoint,
    ch: &Channel,
    opts: &OptimizerOptions,
) -> Result<f64> {
    Ok(random_coding_result(rp, ch, opts)?.value)
}

/// One rate of a sweep; failures are recorded rather than propagated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub rate: f64,
    pub result: Option<ExponentResult>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentCurve {
    pub kind: ExponentKind,
    pub metric: Option<DecodingMetric>,
    pub composition: Dist,
    pub records: Vec<CurveRecord>,
}

impl ExponentCurve {
    /// Values of the successful records, in rate order.
    pub fn values(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.result.as_ref().map(|e| e.value))
            .collect()
    }
}

/// Evaluates one exponent over ascending `rates`. The minimizing coupling of
/// each rate seeds the next one (it stays feasible as the rate grows).
pub fn sweep(
    rates: &[f64],
    composition: &Dist,
    metric: DecodingMetric,
    ch: &Channel,
    opts: &OptimizerOptions,
    which: ExponentKind,
) -> Result<ExponentCurve> {
    if rates.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument(
            "rates must be sorted ascending".into(),
        ));
    }
    check_inputs(ch, composition, opts)?;
    let model = Model::new(ch, composition, metric, opts);
    let mut records = Vec::with_capacity(rates.len());
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    for &r in rates {
        let out = RatePoint::new(r, composition.clone()).and_then(|rp| match which {
            ExponentKind::Trc => model.outer(r, false, &seeds),
            ExponentKind::Expurgated => model.outer(r, true, &seeds),
            ExponentKind::Random => random_coding_result(&rp, ch, opts),
        });
        match out {
            Ok(res) => {
                if let Some(c) = &res.argmin_coupling {
                    seeds = vec![c.probs().to_vec()];
                }
                records.push(CurveRecord {
                    rate: r,
                    result: Some(res),
                    error: None,
                });
            }
            Err(e) => records.push(CurveRecord {
                rate: r,
                result: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(ExponentCurve {
        kind: which,
        metric: if which == ExponentKind::Random {
            None
        } else {
            Some(metric)
        },
        composition: composition.clone(),
        records,
    })
}
