//! Dual quantities bounding the TRC exponents from the two sides: the
//! Chernoff-type `Psi`, the nested saddle value `Theta`, and the Lagrangian
//! relaxations `Lambda` and `Phi`, plus the assembled sandwich bounds and a
//! certification report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{
    check_coupling, check_inputs, trc_exponent, DecodingMetric, Model, RatePoint, INFO_TOL,
};
use crate::prob::{
    compositions, coupling_grid, entropy, mutual_information_raw, Channel, CondDist, Dist, Joint2,
};
use crate::search::{
    minimize, polish_best, sup_on_ray, Domain, OptimizerOptions, RaySup, Simplices, Transport,
};
use crate::serde_ext::ext_f64;

/// Points of the log-spaced grid used by every scalar supremum.
const RAY_POINTS: usize = 25;

/// Polishing levels of the inner searches nested under a scalar supremum;
/// the inner objectives are smooth, so the last levels of a full polish
/// change the value by far less than the solver tolerance.
const INNER_LEVELS: usize = 12;

/// Log-spaced values used for the `sigma` and `tau` grids of `Theta`.
const SIGMA_TAU_GRID: [f64; 13] = [
    0.0, 0.001, 0.003, 0.01, 0.03, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0,
];

/// Tolerances used when certifying the bound chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Tolerance of the pointwise dual inequalities and the bound chain.
    pub certify_tol: f64,
    /// Tolerance of comparisons that mix primal and dual searches.
    pub combined_tol: f64,
    /// Resolution of the coupling grid on which the dual inequalities are
    /// checked one coupling at a time.
    pub pointwise_grid_k: u32,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            certify_tol: 1e-4,
            combined_tol: 0.02,
            pointwise_grid_k: 4,
        }
    }
}

/// Optimizing parameters of a dual quantity; only the ones that apply are set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DualParams {
    pub s: Option<f64>,
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub tau: Option<f64>,
    pub mu: Option<f64>,
    pub v: Option<Dist>,
    /// Minimizing `Q_{Y|XX'}` at the optimal multiplier.
    pub channel: Option<CondDist>,
}

/// A dual value with its optimizing parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualValue {
    #[serde(with = "ext_f64")]
    pub value: f64,
    /// The supremum kept growing at the end of the searched ray.
    pub unbounded: bool,
    pub params: DualParams,
    pub reason: Option<String>,
}

impl DualValue {
    fn from_ray(sup: RaySup, params: DualParams) -> Self {
        DualValue {
            value: sup.value,
            unbounded: sup.unbounded,
            params,
            reason: if sup.unbounded {
                Some("supremum grows without bound".into())
            } else {
                None
            },
        }
    }
}

/// `log G(y, sigma, tau, V)` with the `sigma -> 0` (largest term) and
/// `sigma -> inf` limits handled exactly. Terms with `W(y|x) = 0` vanish, as
/// do terms with `Q_X(x) = 0` when `tau > 0`.
pub(crate) fn log_g(ch: &Channel, q_x: &[f64], y: usize, sigma: f64, tau: f64, v: &[f64]) -> f64 {
    let mut terms = [0.0f64; crate::prob::MAX_ALPHABET];
    let mut n = 0;
    for x in 0..ch.inputs() {
        if !ch.supported(x, y) {
            continue;
        }
        let mut l = ch.log_w(x, y);
        if tau > 0.0 {
            if q_x[x] <= 0.0 {
                continue;
            }
            l += tau * (q_x[x].ln() - v[x].ln());
        }
        terms[n] = l;
        n += 1;
    }
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    let terms = &terms[..n];
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if sigma == 0.0 || m == f64::INFINITY {
        return m;
    }
    if sigma == f64::INFINITY {
        return if n == 1 { m } else { f64::INFINITY };
    }
    m + sigma
        * terms
            .iter()
            .map(|&l| ((l - m) / sigma).exp())
            .sum::<f64>()
            .ln()
}

/// `G(y, sigma, tau, V)`.
pub fn g_aux(y: usize, sigma: f64, tau: f64, v: &Dist, ch: &Channel, q_x: &Dist) -> Result<f64> {
    if !(sigma >= 0.0) || !(tau >= 0.0) {
        return Err(Error::InvalidArgument(
            "sigma and tau must be nonnegative".into(),
        ));
    }
    if y >= ch.outputs() {
        return Err(Error::SymbolOutOfRange {
            symbol: y,
            size: ch.outputs(),
        });
    }
    if v.len() != ch.inputs() || q_x.len() != ch.inputs() {
        return Err(Error::DimensionMismatch {
            expected: ch.inputs(),
            got: v.len(),
        });
    }
    if tau > 0.0 {
        for x in 0..ch.inputs() {
            if ch.supported(x, y) && q_x.get(x) > 0.0 && v.get(x) <= 0.0 {
                return Err(Error::SupportViolation(format!(
                    "V({x}) = 0 where Q_X(x) W(y|x) > 0"
                )));
            }
        }
    }
    Ok(log_g(ch, q_x.probs(), y, sigma, tau, v.probs()).exp())
}

fn psi_at(q: &[f64], ch: &Channel, s: f64) -> f64 {
    let (nx, ny) = (ch.inputs(), ch.outputs());
    if s == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for x in 0..nx {
        for x2 in 0..nx {
            let p = q[x * nx + x2];
            if p <= 0.0 {
                continue;
            }
            let mut sum = 0.0;
            for y in 0..ny {
                if ch.supported(x, y) && ch.supported(x2, y) {
                    sum += ((1.0 - s) * ch.log_w(x, y) + s * ch.log_w(x2, y)).exp();
                }
            }
            total -= p * sum.ln();
        }
    }
    total
}

/// `Psi(Q_{XX'}) = sup_{s >= 0} -sum Q(x,x') log sum_y W(y|x)^{1-s} W(y|x')^s`,
/// the inner sum running over the joint support of the two rows.
pub fn psi(q_xx: &Joint2, ch: &Channel) -> Result<DualValue> {
    if q_xx.rows() != ch.inputs() || q_xx.cols() != ch.inputs() {
        return Err(Error::DimensionMismatch {
            expected: ch.inputs(),
            got: q_xx.rows(),
        });
    }
    Ok(psi_raw(q_xx.probs(), ch, 1e-9))
}

fn psi_raw(q: &[f64], ch: &Channel, tol: f64) -> DualValue {
    let sup = sup_on_ray(&|s| psi_at(q, ch, s), RAY_POINTS, tol);
    DualValue::from_ray(
        sup,
        DualParams {
            s: Some(sup.arg),
            ..Default::default()
        },
    )
}

/// Shared evaluator for `Theta`, `Lambda` and `Phi` at one coupling.
struct DualCtx<'a> {
    model: Model<'a>,
    q: &'a [f64],
    r: f64,
    h_x: f64,
    inner_opts: OptimizerOptions,
}

impl<'a> DualCtx<'a> {
    fn new(
        ch: &'a Channel,
        q_x: &'a Dist,
        q: &'a [f64],
        r: f64,
        opts: &'a OptimizerOptions,
    ) -> Self {
        DualCtx {
            model: Model::new(ch, q_x, DecodingMetric::Mmi, opts),
            q,
            r,
            h_x: entropy(q_x),
            inner_opts: OptimizerOptions {
                refine_iters: opts.refine_iters.min(INNER_LEVELS),
                ..opts.clone()
            },
        }
    }

    fn ch(&self) -> &Channel {
        self.model.ch
    }

    fn opts(&self) -> &OptimizerOptions {
        self.model.opts
    }

    /// The objective of `Theta` at fixed `(rho, sigma, tau, V)`.
    fn theta_objective(&self, rho: f64, sigma: f64, tau: f64, v: &[f64]) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        let ch = self.ch();
        let (nx, ny) = (ch.inputs(), ch.outputs());
        let q_x = self.model.q_x.probs();
        let mut lg = [0.0f64; crate::prob::MAX_ALPHABET];
        for (y, slot) in lg.iter_mut().enumerate().take(ny) {
            *slot = log_g(ch, q_x, y, sigma, tau, v);
        }
        let mut total = if sigma == 0.0 {
            0.0
        } else {
            rho * sigma * (self.r - self.h_x)
        };
        for x in 0..nx {
            for x2 in 0..nx {
                let p = self.q[x * nx + x2];
                if p <= 0.0 {
                    continue;
                }
                let mut terms = [f64::NEG_INFINITY; crate::prob::MAX_ALPHABET];
                for y in 0..ny {
                    if ch.supported(x, y) && ch.supported(x2, y) && lg[y] < f64::INFINITY {
                        terms[y] = ch.log_w(x, y) + rho * (ch.log_w(x2, y) - lg[y]);
                    }
                }
                let m = terms[..ny]
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    return f64::INFINITY;
                }
                let lse = m + terms[..ny].iter().map(|&t| (t - m).exp()).sum::<f64>().ln();
                total -= p * lse;
            }
        }
        if total.is_nan() {
            f64::INFINITY
        } else {
            total
        }
    }

    fn v_grid(&self) -> Vec<Vec<f64>> {
        let nx = self.ch().inputs();
        let k = self.opts().grid_k.max(nx as u32);
        let mut out: Vec<Vec<f64>> = compositions(nx, k)
            .into_iter()
            .filter(|c| c.iter().all(|&v| v > 0))
            .map(|c| c.iter().map(|&v| v as f64 / k as f64).collect())
            .collect();
        out.push(self.model.q_x.probs().to_vec());
        out
    }

    /// `inf over sigma, tau >= 0 and V` of the `Theta` objective; returns the
    /// value and the minimizer `(sigma, tau, V)` packed as one vector.
    fn theta_inner(&self, rho: f64) -> (f64, Vec<f64>) {
        let nx = self.ch().inputs();
        let eval = |z: &[f64]| {
            let v = self.theta_objective(rho, z[0], z[1], &z[2..]);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut points = Vec::new();
        for v in self.v_grid() {
            for &s in &SIGMA_TAU_GRID {
                for &t in &SIGMA_TAU_GRID {
                    let mut z = vec![s, t];
                    z.extend(&v);
                    points.push(z);
                }
            }
        }
        let values: Vec<f64> = points.iter().map(|z| eval(z)).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
        let mut best = (values[order[0]], points[order[0]].clone());
        for &i in order.iter().take(self.opts().starts) {
            let (z, fz) = self.theta_polish(points[i].clone(), values[i], nx, &eval);
            if fz < best.0 {
                best = (fz, z);
            }
        }
        best
    }

    fn theta_polish<F: Fn(&[f64]) -> f64>(
        &self,
        mut z: Vec<f64>,
        mut fz: f64,
        nx: usize,
        eval: &F,
    ) -> (Vec<f64>, f64) {
        let mut h = 0.5;
        for _ in 0..self.inner_opts.refine_iters {
            for _ in 0..64 {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for cand in theta_moves(&z, h, nx) {
                    let fc = eval(&cand);
                    if fc < fz - 1e-15 * (1.0 + fz.abs())
                        && best.as_ref().map_or(true, |b| fc < b.0)
                    {
                        best = Some((fc, cand));
                    }
                }
                match best {
                    Some((fc, c)) => {
                        let (mut prev, mut cur, mut fcur) = (z, c, fc);
                        loop {
                            let ext: Vec<f64> =
                                cur.iter().zip(&prev).map(|(c, p)| 2.0 * c - p).collect();
                            if ext.iter().any(|&v| v < 0.0) {
                                break;
                            }
                            let fe = eval(&ext);
                            if fe < fcur - 1e-15 * (1.0 + fcur.abs()) {
                                prev = cur;
                                cur = ext;
                                fcur = fe;
                            } else {
                                break;
                            }
                        }
                        z = cur;
                        fz = fcur;
                    }
                    None => break,
                }
            }
            h *= self.opts().refine_shrink;
        }
        (z, fz)
    }

    fn theta(&self) -> DualValue {
        let sup = sup_on_ray(
            &|rho| self.theta_inner(rho).0,
            RAY_POINTS,
            self.opts().value_tol,
        );
        let (_, z) = self.theta_inner(sup.arg);
        DualValue::from_ray(
            sup,
            DualParams {
                rho: Some(sup.arg),
                sigma: Some(z[0]),
                tau: Some(z[1]),
                v: Some(Dist::from_raw(z[2..].to_vec())),
                ..Default::default()
            },
        )
    }

    /// Grid values of `(f, I(X;Y), I(X';Y))` for the inner problems of
    /// `Lambda` and `Phi`.
    fn inner_table(&self) -> InnerTable {
        let ch = self.ch();
        let (nx, ny) = (ch.inputs(), ch.outputs());
        let active: Vec<usize> = (0..nx * nx).filter(|&i| self.q[i] > 0.0).collect();
        let base = ch.matrix().to_flat();
        let base: Vec<f64> = (0..nx * nx)
            .flat_map(|i| base[(i / nx) * ny..(i / nx + 1) * ny].to_vec())
            .collect();
        let dom = Simplices::new(ny, active, base.clone(), &[1.0]);
        let (mut points, k) = dom.grid(self.opts().grid_k, self.opts().budget_cap);
        points.push(base);
        let rows: Vec<(f64, f64, f64)> = points
            .par_iter()
            .map(|c| {
                let t = self.model.terms(self.q, c);
                (t.f, t.g_xy, t.g_x2y)
            })
            .collect();
        InnerTable {
            dom,
            points,
            rows,
            k,
        }
    }

    /// `sup_mu min_Q f + mu * h`, with `h = I(X;Y) - I(X';Y)` (`Lambda`) or
    /// `h = R - I(X';Y)` (`Phi`).
    fn lagrangian(&self, table: &InnerTable, phi: bool) -> DualValue {
        let h_of = |ixy: f64, ix2y: f64| if phi { self.r - ix2y } else { ixy - ix2y };
        let inner = |mu: f64| -> (f64, Vec<f64>) {
            let values: Vec<f64> = table
                .rows
                .iter()
                .map(|&(f, ixy, ix2y)| {
                    if f < f64::INFINITY {
                        f + mu * h_of(ixy, ix2y)
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            let obj = |c: &[f64]| {
                let t = self.model.terms(self.q, c);
                if t.f < f64::INFINITY {
                    t.f + mu * h_of(t.g_xy, t.g_x2y)
                } else {
                    f64::INFINITY
                }
            };
            let found = polish_best(
                &table.dom,
                &table.points,
                &values,
                table.k,
                self.opts().starts,
                &obj,
                &self.inner_opts,
            );
            (found.value, found.point)
        };
        let sup = sup_on_ray(&|mu| inner(mu).0, RAY_POINTS, self.opts().value_tol);
        let channel = if sup.unbounded {
            None
        } else {
            Some(CondDist::from_flat(&inner(sup.arg).1, self.ch().outputs()))
        };
        DualValue::from_ray(
            sup,
            DualParams {
                mu: Some(sup.arg),
                channel,
                ..Default::default()
            },
        )
    }
}

struct InnerTable {
    dom: Simplices,
    points: Vec<Vec<f64>>,
    rows: Vec<(f64, f64, f64)>,
    k: u32,
}

/// Candidate moves of the `(sigma, tau, V)` polish at step `h`.
fn theta_moves(z: &[f64], h: f64, nx: usize) -> Vec<Vec<f64>> {
    let scalar = |i: usize, sign: f64| -> Option<(usize, f64)> {
        let d = sign * h * (0.5 + z[i]);
        if z[i] + d < 0.0 {
            if z[i] > 0.0 {
                Some((i, -z[i]))
            } else {
                None
            }
        } else {
            Some((i, d))
        }
    };
    let mut groups: Vec<Vec<Vec<(usize, f64)>>> = Vec::new();
    for i in 0..2 {
        groups.push(
            [1.0, -1.0]
                .iter()
                .filter_map(|&s| scalar(i, s))
                .map(|m| vec![m])
                .collect(),
        );
    }
    let mut vt = Vec::new();
    for a in 0..nx {
        for b in 0..nx {
            if a != b {
                let t = (0.5 * h).min(z[2 + b] * 0.999_999);
                if t > 1e-15 {
                    vt.push(vec![(2 + a, t), (2 + b, -t)]);
                }
            }
        }
    }
    groups.push(vt);
    let apply = |ms: &[&Vec<(usize, f64)>]| {
        let mut c = z.to_vec();
        for m in ms {
            for &(i, d) in m.iter() {
                c[i] = (c[i] + d).max(0.0);
            }
        }
        c
    };
    let mut out = Vec::new();
    for g in &groups {
        for m in g {
            out.push(apply(&[m]));
        }
    }
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            for ma in &groups[a] {
                for mb in &groups[b] {
                    out.push(apply(&[ma, mb]));
                }
            }
        }
    }
    out
}

fn check_all(
    q_xx: &Joint2,
    ch: &Channel,
    q_x: &Dist,
    r: f64,
    opts: &OptimizerOptions,
) -> Result<()> {
    check_inputs(ch, q_x, opts)?;
    check_coupling(q_xx, q_x, opts)?;
    RatePoint::new(r, q_x.clone())?;
    Ok(())
}

/// `Theta(Q_{XX'}, R)`.
pub fn theta(
    q_xx: &Joint2,
    r: f64,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<DualValue> {
    check_all(q_xx, ch, q_x, r, opts)?;
    Ok(DualCtx::new(ch, q_x, q_xx.probs(), r, opts).theta())
}

/// The `Theta` objective at explicit `(rho, sigma, tau, V)`.
pub fn theta_objective(
    q_xx: &Joint2,
    r: f64,
    rho: f64,
    sigma: f64,
    tau: f64,
    v: &Dist,
    ch: &Channel,
    q_x: &Dist,
) -> Result<f64> {
    let opts = OptimizerOptions::default();
    check_all(q_xx, ch, q_x, r, &opts)?;
    if !(rho >= 0.0 && sigma >= 0.0 && tau >= 0.0) {
        return Err(Error::InvalidArgument(
            "rho, sigma and tau must be nonnegative".into(),
        ));
    }
    Ok(DualCtx::new(ch, q_x, q_xx.probs(), r, &opts).theta_objective(rho, sigma, tau, v.probs()))
}

/// `inf over sigma, tau, V` of the `Theta` objective at fixed `rho`.
pub fn theta_inner(
    q_xx: &Joint2,
    r: f64,
    rho: f64,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<f64> {
    check_all(q_xx, ch, q_x, r, opts)?;
    Ok(DualCtx::new(ch, q_x, q_xx.probs(), r, opts)
        .theta_inner(rho)
        .0)
}

/// `Lambda(Q_{XX'})`.
pub fn lambda_bound(
    q_xx: &Joint2,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<DualValue> {
    check_all(q_xx, ch, q_x, 0.0, opts)?;
    let ctx = DualCtx::new(ch, q_x, q_xx.probs(), 0.0, opts);
    Ok(ctx.lagrangian(&ctx.inner_table(), false))
}

/// `Phi(Q_{XX'}, R)`.
pub fn phi_bound(
    q_xx: &Joint2,
    r: f64,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<DualValue> {
    check_all(q_xx, ch, q_x, r, opts)?;
    let ctx = DualCtx::new(ch, q_x, q_xx.probs(), r, opts);
    Ok(ctx.lagrangian(&ctx.inner_table(), true))
}

/// All four dual quantities at one coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingDuals {
    pub coupling: Joint2,
    pub rate: f64,
    #[serde(with = "ext_f64")]
    pub mutual_information: f64,
    pub psi: DualValue,
    pub theta: DualValue,
    pub lambda: DualValue,
    pub phi: DualValue,
}

impl CouplingDuals {
    pub fn ml_objective(&self) -> f64 {
        self.psi.value.max(self.theta.value) + self.mutual_information - self.rate
    }

    pub fn mmi_objective(&self) -> f64 {
        self.lambda.value.max(self.phi.value) + self.mutual_information - self.rate
    }

    pub fn lambda_minus_psi(&self) -> Margin {
        Margin::between(self.lambda.value, self.psi.value)
    }

    pub fn phi_minus_theta(&self) -> Margin {
        Margin::between(self.phi.value, self.theta.value)
    }
}

/// Evaluates `Psi`, `Theta`, `Lambda` and `Phi` at one coupling.
pub fn coupling_duals(
    q_xx: &Joint2,
    r: f64,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> Result<CouplingDuals> {
    check_all(q_xx, ch, q_x, r, opts)?;
    Ok(duals_raw(q_xx.probs(), r, ch, q_x, opts))
}

fn duals_raw(
    q: &[f64],
    r: f64,
    ch: &Channel,
    q_x: &Dist,
    opts: &OptimizerOptions,
) -> CouplingDuals {
    let nx = ch.inputs();
    let ctx = DualCtx::new(ch, q_x, q, r, opts);
    let table = ctx.inner_table();
    CouplingDuals {
        coupling: Joint2::from_raw(nx, nx, q.to_vec()),
        rate: r,
        mutual_information: mutual_information_raw(q, nx, nx),
        psi: psi_raw(q, ch, opts.value_tol),
        theta: ctx.theta(),
        lambda: ctx.lagrangian(&table, false),
        phi: ctx.lagrangian(&table, true),
    }
}

/// Difference `upper - lower` of two possibly infinite values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    #[serde(with = "ext_f64")]
    pub value: f64,
    pub note: Option<String>,
}

impl Margin {
    pub fn between(upper: f64, lower: f64) -> Margin {
        match (upper.is_infinite(), lower.is_infinite()) {
            (true, true) if upper == lower => Margin {
                value: 0.0,
                note: Some(
                    if upper > 0.0 {
                        "both unbounded"
                    } else {
                        "both -inf"
                    }
                    .into(),
                ),
            },
            _ => Margin {
                value: upper - lower,
                note: None,
            },
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.value >= -tol
    }
}

/// Outcome of an outer minimization over couplings of a dual bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterBound {
    #[serde(with = "ext_f64")]
    pub value: f64,
    pub coupling: Joint2,
    pub grid_points: usize,
    pub feasible_points: usize,
    pub reason: Option<String>,
}

fn outer_bound(
    rp: &RatePoint,
    ch: &Channel,
    opts: &OptimizerOptions,
    mmi: bool,
    seeds: &[Vec<f64>],
) -> Result<OuterBound> {
    let q_x = &rp.composition;
    check_inputs(ch, q_x, opts)?;
    RatePoint::new(rp.rate, q_x.clone())?;
    let nx = ch.inputs();
    let r = rp.rate;
    let counts = q_x.grid_counts(opts.grid_k)?;
    let dom = Transport::new(q_x.probs().to_vec(), q_x.probs().to_vec(), &[1.0])
        .with_exact_grid(counts.clone(), counts);
    let obj = |q: &[f64]| {
        let i = mutual_information_raw(q, nx, nx);
        if i > 2.0 * r + INFO_TOL {
            return f64::INFINITY;
        }
        let ctx = DualCtx::new(ch, q_x, q, r, opts);
        let v = if mmi {
            let table = ctx.inner_table();
            ctx.lagrangian(&table, false)
                .value
                .max(ctx.lagrangian(&table, true).value)
        } else {
            psi_raw(q, ch, opts.value_tol).value.max(ctx.theta().value)
        };
        v + i - r
    };
    let mut all_seeds = vec![dom.product_point()];
    all_seeds.extend(seeds.iter().cloned());
    let found = minimize(&dom, &all_seeds, &obj, opts, opts.starts);
    Ok(OuterBound {
        value: found.value,
        reason: if found.value == f64::INFINITY {
            Some("unbounded at every feasible coupling".into())
        } else {
            None
        },
        coupling: Joint2::from_raw(nx, nx, found.point),
        grid_points: found.grid_points,
        feasible_points: found.feasible_points,
    })
}

/// Upper bound on the ML TRC exponent:
/// `min over I(X;X') <= 2R of max{Psi, Theta} + I(X;X') - R`.
pub fn ml_upper_bound(rp: &RatePoint, ch: &Channel, opts: &OptimizerOptions) -> Result<OuterBound> {
    outer_bound(rp, ch, opts, false, &[])
}

/// Lower bound on the MMI TRC exponent:
/// `min over I(X;X') <= 2R of max{Lambda, Phi} + I(X;X') - R`.
pub fn mmi_lower_bound(
    rp: &RatePoint,
    ch: &Channel,
    opts: &OptimizerOptions,
) -> Result<OuterBound> {
    outer_bound(rp, ch, opts, true, &[])
}

/// One inequality of the certification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub margin: Margin,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, margin: Margin, tol: f64) -> Check {
        let pass = margin.passes(tol);
        Check {
            name: name.to_string(),
            margin,
            tol,
            pass,
        }
    }
}

/// Numerical certificate of the bound chain
/// `E_trc^ML <= ml_upper <= mmi_lower <= E_trc^MMI` at one rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rate: f64,
    pub composition: Dist,
    pub tolerances: CertifyOptions,
    /// Dual values at the coupling attaining `mmi_lower`.
    pub at_witness: CouplingDuals,
    #[serde(with = "ext_f64")]
    pub ml_upper: f64,
    #[serde(with = "ext_f64")]
    pub mmi_lower: f64,
    pub ml_upper_coupling: Joint2,
    pub mmi_lower_coupling: Joint2,
    #[serde(with = "ext_f64")]
    pub trc_ml: f64,
    #[serde(with = "ext_f64")]
    pub trc_mmi: f64,
    /// Per-coupling dual values on the certification grid.
    pub couplings: Vec<CouplingDuals>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl BoundReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Evaluates every link of the bound chain at `rp` and reports pass/fail per
/// inequality; never fails on a violated inequality.
///
/// Both outer bounds are minima over couplings, so each is also evaluated at
/// the other's minimizer and the smaller value kept; the comparison between
/// them is then made on a common set of candidates.
pub fn certify_theorem1(
    rp: &RatePoint,
    ch: &Channel,
    opts: &OptimizerOptions,
    tols: &CertifyOptions,
) -> Result<BoundReport> {
    let q_x = &rp.composition;
    let r = rp.rate;
    let trc_ml = trc_exponent(rp, DecodingMetric::Ml, ch, opts)?;
    let trc_mmi = trc_exponent(rp, DecodingMetric::Mmi, ch, opts)?;
    let mut ml = outer_bound(rp, ch, opts, false, &[])?;
    let mut mmi = outer_bound(rp, ch, opts, true, &[ml.coupling.probs().to_vec()])?;
    let at_mmi = duals_raw(mmi.coupling.probs(), r, ch, q_x, opts);
    let cross = at_mmi.ml_objective();
    if cross < ml.value {
        ml.value = cross;
        ml.coupling = mmi.coupling.clone();
    }
    let at_ml = duals_raw(ml.coupling.probs(), r, ch, q_x, opts);
    let cross = at_ml.mmi_objective();
    if cross < mmi.value {
        mmi.value = cross;
        mmi.coupling = ml.coupling.clone();
    }
    let k = if q_x.is_aligned(tols.pointwise_grid_k) {
        tols.pointwise_grid_k
    } else {
        opts.grid_k
    };
    let couplings: Vec<CouplingDuals> = coupling_grid(q_x, k)?
        .par_iter()
        .map(|c| duals_raw(c.probs(), r, ch, q_x, opts))
        .collect();

    let mut checks = Vec::new();
    let worst = |f: &dyn Fn(&CouplingDuals) -> Margin| {
        couplings
            .iter()
            .map(f)
            .min_by(|a, b| a.value.partial_cmp(&b.value).unwrap())
            .unwrap_or(Margin {
                value: 0.0,
                note: Some("no couplings".into()),
            })
    };
    checks.push(Check::new(
        "lambda_ge_psi",
        worst(&|c| c.lambda_minus_psi()),
        tols.certify_tol,
    ));
    checks.push(Check::new(
        "phi_ge_theta",
        worst(&|c| c.phi_minus_theta()),
        tols.certify_tol,
    ));
    checks.push(Check::new(
        "ml_upper_le_mmi_lower",
        Margin::between(mmi.value, ml.value),
        tols.certify_tol,
    ));
    checks.push(Check::new(
        "trc_ml_le_ml_upper",
        Margin::between(ml.value, trc_ml.value),
        tols.combined_tol,
    ));
    checks.push(Check::new(
        "mmi_lower_le_trc_mmi",
        Margin::between(trc_mmi.value, mmi.value),
        tols.combined_tol,
    ));
    let gap = (trc_ml.value - trc_mmi.value).abs();
    checks.push(Check::new(
        "trc_ml_eq_trc_mmi",
        Margin {
            value: -gap,
            note: None,
        },
        tols.combined_tol,
    ));
    let pass = checks.iter().all(|c| c.pass);
    let at_witness = if mmi.coupling == ml.coupling {
        at_ml
    } else {
        at_mmi
    };
    Ok(BoundReport {
        rate: r,
        composition: q_x.clone(),
        tolerances: tols.clone(),
        at_witness,
        ml_upper: ml.value,
        mmi_lower: mmi.value,
        ml_upper_coupling: ml.coupling,
        mmi_lower_coupling: mmi.coupling,
        trc_ml: trc_ml.value,
        trc_mmi: trc_mmi.value,
        couplings,
        checks,
        pass,
    })
}
