//! Grid-then-polish minimization over products of simplices and over joint
//! distributions with pinned marginals, plus one-dimensional searches over
//! the half line.
//!
//! Every search first evaluates an exhaustive grid (plus caller-supplied
//! seed points), then polishes the best few incumbents with a pattern search
//! whose moves shift probability mass between coordinates, so every probe
//! stays exactly on the domain. Infeasible points evaluate to `+inf`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{compositions, integer_couplings, simplex_grid_count};

/// Controls every grid search and refinement in the crate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    /// Grid resolution `k`; grid points are multiples of `1/k`.
    pub grid_k: u32,
    /// Number of step-shrink levels in the polishing phase.
    pub refine_iters: usize,
    /// Step multiplier between polishing levels, in `(0, 1)`.
    pub refine_shrink: f64,
    /// Additive slack on the nonlinear inner constraints.
    pub constraint_slack: f64,
    /// Tolerance for comparisons between optimized values.
    pub value_tol: f64,
    /// Maximum number of grid points a single search may evaluate.
    pub budget_cap: usize,
    /// Number of distinct grid incumbents that get polished.
    pub starts: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            grid_k: 8,
            refine_iters: 20,
            refine_shrink: 0.5,
            constraint_slack: 1e-3,
            value_tol: 1e-6,
            budget_cap: 200_000,
            starts: 2,
        }
    }
}

impl OptimizerOptions {
    /// Defaults for a channel with the given alphabet sizes: `k = 8` for
    /// binary alphabets and `k = 4` otherwise.
    pub fn for_alphabets(inputs: usize, outputs: usize) -> Self {
        let k = if inputs.max(outputs) <= 2 { 8 } else { 4 };
        OptimizerOptions::default().with_grid(k)
    }

    /// Sets the grid resolution and scales the constraint slack with the
    /// grid step (`1e-3` at `k = 8`).
    pub fn with_grid(mut self, k: u32) -> Self {
        self.grid_k = k;
        self.constraint_slack = 8e-3 / k as f64;
        self
    }

    pub fn grid_step(&self) -> f64 {
        1.0 / self.grid_k as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidOptions(m.to_string()));
        if self.grid_k == 0 {
            return bad("grid_k must be positive");
        }
        if self.refine_iters == 0 {
            return bad("refine_iters must be positive");
        }
        if !(self.refine_shrink > 0.0 && self.refine_shrink < 1.0) {
            return bad("refine_shrink must lie in (0, 1)");
        }
        if !(self.constraint_slack >= 0.0 && self.constraint_slack.is_finite()) {
            return bad("constraint_slack must be nonnegative");
        }
        if !(self.value_tol > 0.0) {
            return bad("value_tol must be positive");
        }
        if self.budget_cap == 0 || self.starts == 0 {
            return bad("budget_cap and starts must be positive");
        }
        Ok(())
    }
}

/// Relative step sizes tried when two elementary moves are combined. The
/// unequal ratios let the search slide along curved constraint boundaries.
pub(crate) const PAIR_RATIOS: [f64; 13] = [
    1.0,
    0.840896,
    1.189207,
    std::f64::consts::FRAC_1_SQRT_2,
    std::f64::consts::SQRT_2,
    0.594604,
    1.681793,
    0.5,
    2.0,
    0.353553,
    2.828427,
    0.25,
    4.0,
];

/// A sum-preserving direction: weighted mass added at `plus`, removed at
/// `minus` (equal total weight within each elementary part).
#[derive(Clone, Debug)]
pub(crate) struct Move {
    plus: Vec<(usize, f64)>,
    minus: Vec<(usize, f64)>,
}

impl Move {
    fn transfer(to: usize, from: usize) -> Move {
        Move {
            plus: vec![(to, 1.0)],
            minus: vec![(from, 1.0)],
        }
    }

    fn reversed(&self) -> Move {
        Move {
            plus: self.minus.clone(),
            minus: self.plus.clone(),
        }
    }

    fn combine(&self, other: &Move, ratio: f64) -> Move {
        let scaled =
            |v: &[(usize, f64)]| v.iter().map(|&(i, w)| (i, w * ratio)).collect::<Vec<_>>();
        Move {
            plus: self
                .plus
                .iter()
                .copied()
                .chain(scaled(&other.plus))
                .collect(),
            minus: self
                .minus
                .iter()
                .copied()
                .chain(scaled(&other.minus))
                .collect(),
        }
    }

    /// Takes a step of length at most `h`, shortened so no coordinate goes
    /// negative. `None` when the move is blocked. Coordinates touched by
    /// both parts (overlapping cycles) move by their net weight.
    fn apply(&self, x: &[f64], h: f64) -> Option<Vec<f64>> {
        let mut net: Vec<(usize, f64)> = Vec::with_capacity(self.plus.len() + self.minus.len());
        for (&(i, w), sign) in self
            .plus
            .iter()
            .map(|p| (p, 1.0))
            .chain(self.minus.iter().map(|m| (m, -1.0)))
        {
            match net.iter_mut().find(|(j, _)| *j == i) {
                Some(e) => e.1 += sign * w,
                None => net.push((i, sign * w)),
            }
        }
        let room = net
            .iter()
            .filter(|&&(_, d)| d < 0.0)
            .map(|&(i, d)| x[i] / -d)
            .fold(f64::INFINITY, f64::min);
        let t = h.min(room);
        if t <= 1e-15 || !net.iter().any(|&(_, d)| d != 0.0) {
            return None;
        }
        let mut y = x.to_vec();
        for &(i, d) in &net {
            let v = x[i] + d * t;
            // Exact zero when the step is clipped at the boundary.
            y[i] = if d < 0.0 && v < 1e-15 { 0.0 } else { v };
        }
        Some(y)
    }
}

/// Single moves followed by all pairwise combinations across different
/// groups, each at every ratio in `ratios`.
fn with_pairs(groups: &[Vec<Move>], ratios: &[f64]) -> Vec<Move> {
    let mut moves: Vec<Move> = groups.iter().flatten().cloned().collect();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            for &r in ratios {
                for ma in &groups[a] {
                    for mb in &groups[b] {
                        moves.push(ma.combine(mb, r));
                    }
                }
            }
        }
    }
    moves
}

/// A search domain with an enumerable grid and a set of polishing moves.
pub(crate) trait Domain: Sync {
    /// Grid points at resolution at most `k`, coarsened until the count fits
    /// under `cap`. Returns the points and the resolution used.
    fn grid(&self, k: u32, cap: usize) -> (Vec<Vec<f64>>, u32);

    fn moves(&self) -> &[Move];
}

/// Product of probability simplices stored as flat rows; only `active` rows
/// are searched, the others stay at their values in `base`.
pub(crate) struct Simplices {
    width: usize,
    active: Vec<usize>,
    base: Vec<f64>,
    moves: Vec<Move>,
}

impl Simplices {
    /// `ratios` are the relative step sizes for two-row moves; smooth
    /// objectives only need `[1.0]`, constrained ones benefit from
    /// [`PAIR_RATIOS`].
    pub(crate) fn new(width: usize, active: Vec<usize>, base: Vec<f64>, ratios: &[f64]) -> Self {
        let groups: Vec<Vec<Move>> = active
            .iter()
            .map(|&r| {
                let mut row = Vec::new();
                for i in 0..width {
                    for j in 0..width {
                        if i != j {
                            row.push(Move::transfer(r * width + i, r * width + j));
                        }
                    }
                }
                row
            })
            .collect();
        let moves = with_pairs(&groups, ratios);
        Simplices {
            width,
            active,
            base,
            moves,
        }
    }
}

impl Domain for Simplices {
    fn grid(&self, k: u32, cap: usize) -> (Vec<Vec<f64>>, u32) {
        let rows = self.active.len() as u32;
        let mut k = k.max(1);
        while k > 1 && simplex_grid_count(self.width, k).saturating_pow(rows) > cap as u128 {
            k -= 1;
        }
        let comps = compositions(self.width, k);
        let total = comps.len().pow(rows);
        let points = (0..total)
            .map(|mut idx| {
                let mut p = self.base.clone();
                // Last active row varies fastest, keeping lexicographic order.
                for &r in self.active.iter().rev() {
                    let c = &comps[idx % comps.len()];
                    idx /= comps.len();
                    for (i, &v) in c.iter().enumerate() {
                        p[r * self.width + i] = v as f64 / k as f64;
                    }
                }
                p
            })
            .collect();
        (points, k)
    }

    fn moves(&self) -> &[Move] {
        &self.moves
    }
}

/// Joint distributions (row-major) with fixed row and column marginals.
pub(crate) struct Transport {
    rows: Vec<f64>,
    cols: Vec<f64>,
    /// Integer-grid alternative when the marginals are themselves on the grid.
    exact: Option<(Vec<u32>, Vec<u32>)>,
    moves: Vec<Move>,
}

impl Transport {
    pub(crate) fn new(rows: Vec<f64>, cols: Vec<f64>, ratios: &[f64]) -> Self {
        let (r, c) = (rows.len(), cols.len());
        let mut groups = Vec::new();
        for i in 0..r {
            for i2 in i + 1..r {
                for j in 0..c {
                    for j2 in j + 1..c {
                        let a = Move {
                            plus: vec![(i * c + j, 1.0), (i2 * c + j2, 1.0)],
                            minus: vec![(i * c + j2, 1.0), (i2 * c + j, 1.0)],
                        };
                        let b = a.reversed();
                        groups.push(vec![a, b]);
                    }
                }
            }
        }
        let moves = with_pairs(&groups, ratios);
        Transport {
            rows,
            cols,
            exact: None,
            moves,
        }
    }

    /// Uses the exact integer coupling grid of `1/k` for both marginals.
    pub(crate) fn with_exact_grid(mut self, row_counts: Vec<u32>, col_counts: Vec<u32>) -> Self {
        self.exact = Some((row_counts, col_counts));
        self
    }

    pub(crate) fn product_point(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.rows.len() * self.cols.len());
        for &a in &self.rows {
            p.extend(self.cols.iter().map(|&b| a * b));
        }
        p
    }
}

impl Domain for Transport {
    fn grid(&self, k: u32, cap: usize) -> (Vec<Vec<f64>>, u32) {
        if let Some((rc, cc)) = &self.exact {
            let k_used: u32 = rc.iter().sum();
            if let Ok(pts) = integer_couplings(rc, cc) {
                if pts.len() <= cap {
                    return (
                        pts.into_iter()
                            .map(|m| m.iter().map(|&v| v as f64 / k_used as f64).collect())
                            .collect(),
                        k_used,
                    );
                }
            }
        }
        let (r, c) = (self.rows.len(), self.cols.len());
        let free = (r - 1) * (c - 1);
        let mut k = k.max(1);
        while k > 1 && ((k + 1) as u128).saturating_pow(free as u32) > cap as u128 {
            k -= 1;
        }
        let levels = (k + 1) as usize;
        let total = levels.pow(free as u32);
        let mut points = Vec::new();
        'outer: for mut idx in 0..total {
            let mut p = vec![0.0; r * c];
            for i in (0..r - 1).rev() {
                for j in (0..c - 1).rev() {
                    let l = idx % levels;
                    idx /= levels;
                    p[i * c + j] = l as f64 / k as f64 * self.rows[i].min(self.cols[j]);
                }
            }
            for i in 0..r - 1 {
                let used: f64 = p[i * c..i * c + c - 1].iter().sum();
                p[i * c + c - 1] = self.rows[i] - used;
            }
            for j in 0..c {
                let used: f64 = (0..r - 1).map(|i| p[i * c + j]).sum();
                p[(r - 1) * c + j] = self.cols[j] - used;
            }
            for v in p.iter_mut() {
                if *v < -1e-12 {
                    continue 'outer;
                }
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            points.push(p);
        }
        (points, k)
    }

    fn moves(&self) -> &[Move] {
        &self.moves
    }
}

/// Outcome of a minimization.
#[derive(Clone, Debug)]
pub(crate) struct Found {
    pub point: Vec<f64>,
    pub value: f64,
    pub grid_points: usize,
    pub feasible_points: usize,
    pub grid_k: u32,
    /// Incumbent value at the end of each polishing level.
    pub trace: Vec<f64>,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Indices of the `n` best finite values, best first, ties to lower index.
fn best_indices(values: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] < f64::INFINITY)
        .collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Pattern search from `start`; only strict improvements are accepted.
pub(crate) fn polish<D, F>(
    domain: &D,
    start: Vec<f64>,
    start_value: f64,
    initial_step: f64,
    f: &F,
    opts: &OptimizerOptions,
) -> (Vec<f64>, f64, Vec<f64>)
where
    D: Domain + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut x = start;
    let mut fx = start_value;
    let mut h = initial_step;
    let mut trace = Vec::with_capacity(opts.refine_iters);
    let max_moves = 64;
    for _ in 0..opts.refine_iters {
        for _ in 0..max_moves {
            let best = domain
                .moves()
                .iter()
                .enumerate()
                .filter_map(|(i, m)| m.apply(&x, h).map(|y| (i, finite_or_inf(f(&y)), y)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            match best {
                Some((_, fy, y)) if fy < fx - 1e-15 * (1.0 + fx.abs()) => {
                    // Pattern move: keep going while the same displacement helps.
                    let (mut prev, mut cur, mut fcur) = (x, y, fy);
                    loop {
                        let z: Vec<f64> = cur.iter().zip(&prev).map(|(c, p)| 2.0 * c - p).collect();
                        if z.iter().any(|&v| v < 0.0) {
                            break;
                        }
                        let fz = finite_or_inf(f(&z));
                        if fz < fcur - 1e-15 * (1.0 + fcur.abs()) {
                            prev = cur;
                            cur = z;
                            fcur = fz;
                        } else {
                            break;
                        }
                    }
                    x = cur;
                    fx = fcur;
                }
                _ => break,
            }
        }
        trace.push(fx);
        h *= opts.refine_shrink;
    }
    (x, fx, trace)
}

/// Polishes the best `starts` candidates among `points` (with precomputed
/// `values`) and returns the overall winner.
pub(crate) fn polish_best<D, F>(
    domain: &D,
    points: &[Vec<f64>],
    values: &[f64],
    grid_k: u32,
    starts: usize,
    f: &F,
    opts: &OptimizerOptions,
) -> Found
where
    D: Domain + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    let feasible_points = values.iter().filter(|v| **v < f64::INFINITY).count();
    let picks = best_indices(values, starts);
    let mut best: Option<(Vec<f64>, f64, Vec<f64>)> = None;
    for i in picks {
        let (x, fx, trace) = polish(
            domain,
            points[i].clone(),
            values[i],
            1.0 / grid_k as f64,
            f,
            opts,
        );
        if best.as_ref().map_or(true, |b| fx < b.1) {
            best = Some((x, fx, trace));
        }
    }
    match best {
        Some((point, value, trace)) => Found {
            point,
            value,
            grid_points: points.len(),
            feasible_points,
            grid_k,
            trace,
        },
        None => Found {
            point: points.first().cloned().unwrap_or_default(),
            value: f64::INFINITY,
            grid_points: points.len(),
            feasible_points: 0,
            grid_k,
            trace: Vec::new(),
        },
    }
}

/// Grid (plus seeds) followed by polishing of the best `starts` points.
pub(crate) fn minimize<D, F>(
    domain: &D,
    seeds: &[Vec<f64>],
    f: &F,
    opts: &OptimizerOptions,
    starts: usize,
) -> Found
where
    D: Domain + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (mut points, k) = domain.grid(opts.grid_k, opts.budget_cap);
    points.extend(seeds.iter().cloned());
    let values: Vec<f64> = points.par_iter().map(|p| finite_or_inf(f(p))).collect();
    polish_best(domain, &points, &values, k, starts, f, opts)
}

/// Result of a search over a half line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySup {
    pub arg: f64,
    pub value: f64,
    /// The maximum kept growing at the end of the extended domain.
    pub unbounded: bool,
}

/// Golden-section maximization of `f` on `[a, b]`.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol * (1.0 + a.abs() + b.abs()) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Supremum of `f` over `[0, inf)`: the endpoint `0` plus a log-spaced grid
/// on `[1e-3, 8]`, golden-section polish around the best grid point, and up
/// to three doublings of the domain while the maximum sits on its right end.
pub(crate) fn sup_on_ray<F: Fn(f64) -> f64 + Sync>(
    f: &F,
    grid_points: usize,
    growth_tol: f64,
) -> RaySup {
    let lo: f64 = 1e-3;
    let mut hi: f64 = 8.0;
    let n = grid_points.max(4);
    let mut args: Vec<f64> = std::iter::once(0.0)
        .chain((0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)))
        .collect();
    let mut vals: Vec<f64> = args.par_iter().map(|&a| nan_to_neg(f(a))).collect();
    let argmax = |vals: &[f64]| {
        let mut best = 0;
        for i in 1..vals.len() {
            if vals[i] > vals[best] {
                best = i;
            }
        }
        best
    };
    let mut best = argmax(&vals);
    let mut doublings = 0;
    while best == args.len() - 1 && doublings < 3 {
        let extra: Vec<f64> = (1..=4).map(|i| hi * 2f64.powf(i as f64 / 4.0)).collect();
        let extra_vals: Vec<f64> = extra.par_iter().map(|&a| nan_to_neg(f(a))).collect();
        args.extend(extra);
        vals.extend(extra_vals);
        hi *= 2.0;
        doublings += 1;
        best = argmax(&vals);
    }
    if best == args.len() - 1 && vals[best] == f64::INFINITY {
        return RaySup {
            arg: args[best],
            value: f64::INFINITY,
            unbounded: true,
        };
    }
    if best == args.len() - 1 {
        // Still climbing after the last doubling.
        let prev = vals[args.len() - 5];
        let growing = vals[best] - prev > growth_tol;
        return RaySup {
            arg: args[best],
            value: if growing { f64::INFINITY } else { vals[best] },
            unbounded: growing,
        };
    }
    if !vals[best].is_finite() {
        return RaySup {
            arg: args[best],
            value: vals[best],
            unbounded: vals[best] == f64::INFINITY,
        };
    }
    let a = if best == 0 { 0.0 } else { args[best - 1] };
    let b = args[best + 1];
    let (x, fx) = golden_max(f, a, b, 1e-7);
    if fx > vals[best] {
        RaySup {
            arg: x,
            value: fx,
            unbounded: false,
        }
    } else {
        RaySup {
            arg: args[best],
            value: vals[best],
            unbounded: false,
        }
    }
}

fn nan_to_neg(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}
