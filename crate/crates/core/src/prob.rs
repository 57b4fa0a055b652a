//! Distributions over small finite alphabets and the information measures
//! built on them.
//!
//! Everything is in nats. The conventions are `0 log 0 = 0` and
//! `x log(x/0) = +inf` for `x > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest alphabet the toolkit accepts. Searches are exhaustive, so larger
/// alphabets are out of reach anyway.
pub const MAX_ALPHABET: usize = 8;

/// Tolerance on the unit-sum and range checks of stored distributions.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Alphabet(usize);

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size > MAX_ALPHABET {
            return Err(Error::UnsupportedAlphabet(size));
        }
        Ok(Alphabet(size))
    }

    pub fn size(self) -> usize {
        self.0
    }
}

fn check_simplex(probs: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < -SIMPLEX_TOL || p > 1.0 + SIMPLEX_TOL {
            return Err(Error::InvalidDistribution(format!(
                "{what}: entry {i} = {p} is outside [0, 1]"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what}: entries sum to {sum}"
        )));
    }
    Ok(())
}

/// A probability vector over an alphabet `{0, .., n-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Dist {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Dist {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Dist::new(probs)
    }
}

impl From<Dist> for Vec<f64> {
    fn from(d: Dist) -> Vec<f64> {
        d.probs
    }
}

impl Dist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Alphabet::new(probs.len())?;
        check_simplex(&probs, "distribution")?;
        // Tiny negative round-off is clipped so downstream logs stay defined.
        let probs = probs.into_iter().map(|p| p.max(0.0)).collect();
        Ok(Dist { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        Alphabet::new(size)?;
        Ok(Dist {
            probs: vec![1.0 / size as f64; size],
        })
    }

    pub fn point_mass(size: usize, symbol: usize) -> Result<Self> {
        Alphabet::new(size)?;
        if symbol >= size {
            return Err(Error::SymbolOutOfRange { symbol, size });
        }
        let mut probs = vec![0.0; size];
        probs[symbol] = 1.0;
        Ok(Dist { probs })
    }

    /// Builds a distribution from counts over `total` trials.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidDistribution("all counts are zero".into()));
        }
        Dist::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Dist { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet(self.probs.len())
    }

    pub fn get(&self, symbol: usize) -> f64 {
        self.probs[symbol]
    }

    /// True when every entry is a multiple of `1/k`.
    pub fn is_aligned(&self, k: u32) -> bool {
        self.probs.iter().all(|&p| {
            let scaled = p * k as f64;
            (scaled - scaled.round()).abs() < 1e-9
        })
    }

    /// Entries as integer multiples of `1/k`, if aligned.
    pub fn grid_counts(&self, k: u32) -> Result<Vec<u32>> {
        if !self.is_aligned(k) {
            return Err(Error::NotGridAligned { k });
        }
        Ok(self
            .probs
            .iter()
            .map(|&p| (p * k as f64).round() as u32)
            .collect())
    }

    /// Nearest distribution whose entries are multiples of `1/k`
    /// (largest-remainder rounding, ties to the lower index).
    pub fn round_to_grid(&self, k: u32) -> Dist {
        let k_f = k as f64;
        let mut counts: Vec<u32> = self
            .probs
            .iter()
            .map(|&p| (p * k_f).floor() as u32)
            .collect();
        let assigned: u32 = counts.iter().sum();
        let mut order: Vec<usize> = (0..self.len()).collect();
        let rem = |i: usize| self.probs[i] * k_f - (self.probs[i] * k_f).floor();
        order.sort_by(|&a, &b| rem(b).partial_cmp(&rem(a)).unwrap().then(a.cmp(&b)));
        for &i in order.iter().take(k.saturating_sub(assigned) as usize) {
            counts[i] += 1;
        }
        Dist::from_raw(counts.iter().map(|&c| c as f64 / k_f).collect())
    }
}

/// One distribution per conditioning symbol (or flattened conditioning pair).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondDist {
    rows: Vec<Dist>,
}

impl CondDist {
    pub fn new(rows: Vec<Dist>) -> Result<Self> {
        let width = rows
            .first()
            .map(Dist::len)
            .ok_or_else(|| Error::InvalidDistribution("no rows".into()))?;
        for row in &rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    got: row.len(),
                });
            }
        }
        Ok(CondDist { rows })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        CondDist::new(rows.into_iter().map(Dist::new).collect::<Result<_>>()?)
    }

    /// Flat row-major buffer; rows are assumed valid.
    pub(crate) fn from_flat(flat: &[f64], width: usize) -> Self {
        CondDist {
            rows: flat
                .chunks(width)
                .map(|r| Dist::from_raw(r.to_vec()))
                .collect(),
        }
    }

    pub fn rows(&self) -> &[Dist] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &Dist {
        &self.rows[i]
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row].get(col)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.rows
            .iter()
            .flat_map(|r| r.probs().iter().copied())
            .collect()
    }
}

/// Joint distribution on a product of two alphabets, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint2 {
    rows: usize,
    cols: usize,
    probs: Vec<f64>,
}

impl Joint2 {
    pub fn new(rows: usize, cols: usize, probs: Vec<f64>) -> Result<Self> {
        Alphabet::new(rows)?;
        Alphabet::new(cols)?;
        if probs.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: probs.len(),
            });
        }
        check_simplex(&probs, "joint distribution")?;
        let probs = probs.into_iter().map(|p| p.max(0.0)).collect();
        Ok(Joint2 { rows, cols, probs })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, probs: Vec<f64>) -> Self {
        Joint2 { rows, cols, probs }
    }

    /// `marginal(i) * cond(j | i)`.
    pub fn from_marginal_and_channel(marginal: &Dist, cond: &CondDist) -> Result<Self> {
        if cond.num_rows() != marginal.len() {
            return Err(Error::DimensionMismatch {
                expected: marginal.len(),
                got: cond.num_rows(),
            });
        }
        let cols = cond.width();
        let mut probs = Vec::with_capacity(marginal.len() * cols);
        for (i, &p) in marginal.probs().iter().enumerate() {
            probs.extend(cond.row(i).probs().iter().map(|&c| p * c));
        }
        Joint2::new(marginal.len(), cols, probs)
    }

    pub fn product(a: &Dist, b: &Dist) -> Self {
        let mut probs = Vec::with_capacity(a.len() * b.len());
        for &pa in a.probs() {
            probs.extend(b.probs().iter().map(|&pb| pa * pb));
        }
        Joint2::from_raw(a.len(), b.len(), probs)
    }

    /// `Q(x, x) = q(x)`.
    pub fn diagonal(q: &Dist) -> Self {
        let n = q.len();
        let mut probs = vec![0.0; n * n];
        for (i, &p) in q.probs().iter().enumerate() {
            probs[i * n + i] = p;
        }
        Joint2::from_raw(n, n, probs)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.probs[row * self.cols + col]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row_marginal(&self) -> Dist {
        Dist::from_raw(row_marginal_raw(&self.probs, self.rows, self.cols))
    }

    pub fn col_marginal(&self) -> Dist {
        Dist::from_raw(col_marginal_raw(&self.probs, self.rows, self.cols))
    }

    pub fn transpose(&self) -> Self {
        let mut probs = vec![0.0; self.probs.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                probs[j * self.rows + i] = self.get(i, j);
            }
        }
        Joint2::from_raw(self.cols, self.rows, probs)
    }

    /// Largest absolute deviation of either marginal from `q`.
    pub fn marginal_deviation(&self, q: &Dist) -> f64 {
        let r = self.row_marginal();
        let c = self.col_marginal();
        r.probs()
            .iter()
            .chain(c.probs())
            .zip(q.probs().iter().chain(q.probs()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Joint distribution of `(X, X', Y)`, indexed `[(x * nx2 + x2) * ny + y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint3 {
    nx: usize,
    nx2: usize,
    ny: usize,
    probs: Vec<f64>,
}

impl Joint3 {
    pub fn new(nx: usize, nx2: usize, ny: usize, probs: Vec<f64>) -> Result<Self> {
        for s in [nx, nx2, ny] {
            Alphabet::new(s)?;
        }
        if probs.len() != nx * nx2 * ny {
            return Err(Error::DimensionMismatch {
                expected: nx * nx2 * ny,
                got: probs.len(),
            });
        }
        check_simplex(&probs, "joint distribution")?;
        Ok(Joint3 { nx, nx2, ny, probs })
    }

    /// `Q_{XX'} * Q_{Y|XX'}`, with the conditional rows indexed by `x * nx2 + x2`.
    pub fn from_pair_and_channel(pair: &Joint2, cond: &CondDist) -> Result<Self> {
        if cond.num_rows() != pair.probs().len() {
            return Err(Error::DimensionMismatch {
                expected: pair.probs().len(),
                got: cond.num_rows(),
            });
        }
        let ny = cond.width();
        let mut probs = Vec::with_capacity(pair.probs().len() * ny);
        for (r, &p) in pair.probs().iter().enumerate() {
            probs.extend(cond.row(r).probs().iter().map(|&c| p * c));
        }
        Joint3::new(pair.rows(), pair.cols(), ny, probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn xy(&self) -> Joint2 {
        let mut out = vec![0.0; self.nx * self.ny];
        for x in 0..self.nx {
            for x2 in 0..self.nx2 {
                for y in 0..self.ny {
                    out[x * self.ny + y] += self.probs[(x * self.nx2 + x2) * self.ny + y];
                }
            }
        }
        Joint2::from_raw(self.nx, self.ny, out)
    }

    pub fn x2y(&self) -> Joint2 {
        let mut out = vec![0.0; self.nx2 * self.ny];
        for x in 0..self.nx {
            for x2 in 0..self.nx2 {
                for y in 0..self.ny {
                    out[x2 * self.ny + y] += self.probs[(x * self.nx2 + x2) * self.ny + y];
                }
            }
        }
        Joint2::from_raw(self.nx2, self.ny, out)
    }

    pub fn y(&self) -> Dist {
        let mut out = vec![0.0; self.ny];
        for (i, &p) in self.probs.iter().enumerate() {
            out[i % self.ny] += p;
        }
        Dist::from_raw(out)
    }
}

/// A discrete memoryless channel `W(y|x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CondDist", into = "CondDist")]
pub struct Channel {
    matrix: CondDist,
    support: Vec<bool>,
    log_w: Vec<f64>,
}

impl TryFrom<CondDist> for Channel {
    type Error = Error;

    fn try_from(matrix: CondDist) -> Result<Self> {
        Channel::new(matrix)
    }
}

impl From<Channel> for CondDist {
    fn from(ch: Channel) -> CondDist {
        ch.matrix
    }
}

impl Channel {
    pub fn new(matrix: CondDist) -> Result<Self> {
        let support = matrix.to_flat().iter().map(|&w| w > 0.0).collect();
        let log_w = matrix.to_flat().iter().map(|&w| w.ln()).collect();
        Ok(Channel {
            matrix,
            support,
            log_w,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Channel::new(CondDist::from_rows(rows)?)
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        Channel::from_rows(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Noiseless channel on `n` symbols.
    pub fn identity(n: usize) -> Result<Self> {
        Channel::new(CondDist::new(
            (0..n)
                .map(|i| Dist::point_mass(n, i))
                .collect::<Result<_>>()?,
        )?)
    }

    pub fn inputs(&self) -> usize {
        self.matrix.num_rows()
    }

    pub fn outputs(&self) -> usize {
        self.matrix.width()
    }

    pub fn matrix(&self) -> &CondDist {
        &self.matrix
    }

    pub fn w(&self, x: usize, y: usize) -> f64 {
        self.matrix.get(x, y)
    }

    pub fn log_w(&self, x: usize, y: usize) -> f64 {
        self.log_w[x * self.outputs() + y]
    }

    pub fn log_w_flat(&self) -> &[f64] {
        &self.log_w
    }

    pub fn supported(&self, x: usize, y: usize) -> bool {
        self.support[x * self.outputs() + y]
    }

    /// Output distribution induced by input distribution `q`.
    pub fn output_dist(&self, q: &Dist) -> Dist {
        let mut out = vec![0.0; self.outputs()];
        for (x, &p) in q.probs().iter().enumerate() {
            for (y, o) in out.iter_mut().enumerate() {
                *o += p * self.w(x, y);
            }
        }
        Dist::from_raw(out)
    }

    /// Relabels inputs and outputs: row `perm_x[x]` of the result is row `x`
    /// of `self`, column `perm_y[y]` is column `y`.
    pub fn relabel(&self, perm_x: &[usize], perm_y: &[usize]) -> Result<Self> {
        let nx = self.inputs();
        let ny = self.outputs();
        let mut rows = vec![vec![0.0; ny]; nx];
        for x in 0..nx {
            for y in 0..ny {
                rows[perm_x[x]][perm_y[y]] = self.w(x, y);
            }
        }
        Channel::from_rows(rows)
    }
}

#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

pub(crate) fn entropy_raw(p: &[f64]) -> f64 {
    -p.iter().map(|&x| xlogx(x)).sum::<f64>()
}

pub(crate) fn row_marginal_raw(j: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows)
        .map(|i| j[i * cols..(i + 1) * cols].iter().sum())
        .collect()
}

pub(crate) fn col_marginal_raw(j: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for i in 0..rows {
        for (c, o) in out.iter_mut().enumerate() {
            *o += j[i * cols + c];
        }
    }
    out
}

/// `I(row; col)` by the direct double sum, clamped at zero.
pub(crate) fn mutual_information_raw(j: &[f64], rows: usize, cols: usize) -> f64 {
    let mut pr = [0.0; MAX_ALPHABET];
    let mut pc = [0.0; MAX_ALPHABET];
    for i in 0..rows {
        for c in 0..cols {
            let v = j[i * cols + c];
            pr[i] += v;
            pc[c] += v;
        }
    }
    let mut total = 0.0;
    for i in 0..rows {
        for c in 0..cols {
            let v = j[i * cols + c];
            if v > 0.0 {
                total += v * (v / (pr[i] * pc[c])).ln();
            }
        }
    }
    total.max(0.0)
}

/// Shannon entropy in nats.
pub fn entropy(d: &Dist) -> f64 {
    entropy_raw(d.probs()).max(0.0)
}

/// `H(row | col)` in nats.
pub fn conditional_entropy(j: &Joint2) -> f64 {
    let col = col_marginal_raw(j.probs(), j.rows(), j.cols());
    (entropy_raw(j.probs()) - entropy_raw(&col)).max(0.0)
}

/// `I(row; col)` in nats.
pub fn mutual_information(j: &Joint2) -> f64 {
    mutual_information_raw(j.probs(), j.rows(), j.cols())
}

/// `D(p || q)` in nats; `+inf` when `p` charges a symbol `q` does not.
pub fn kl_divergence(p: &Dist, q: &Dist) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(kl_raw(p.probs(), q.probs()))
}

pub(crate) fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            total += a * (a / b).ln();
        }
    }
    total.max(0.0)
}

/// Joint type of two equal-length sequences.
pub fn empirical_joint(
    x_seq: &[usize],
    y_seq: &[usize],
    x_alphabet: Alphabet,
    y_alphabet: Alphabet,
) -> Result<Joint2> {
    if x_seq.len() != y_seq.len() {
        return Err(Error::LengthMismatch {
            left: x_seq.len(),
            right: y_seq.len(),
        });
    }
    if x_seq.is_empty() {
        return Err(Error::InvalidArgument("empty sequences".into()));
    }
    let (nx, ny) = (x_alphabet.size(), y_alphabet.size());
    let mut counts = vec![0usize; nx * ny];
    for (&a, &b) in x_seq.iter().zip(y_seq) {
        if a >= nx {
            return Err(Error::SymbolOutOfRange {
                symbol: a,
                size: nx,
            });
        }
        if b >= ny {
            return Err(Error::SymbolOutOfRange {
                symbol: b,
                size: ny,
            });
        }
        counts[a * ny + b] += 1;
    }
    let n = x_seq.len() as f64;
    Ok(Joint2::from_raw(
        nx,
        ny,
        counts.iter().map(|&c| c as f64 / n).collect(),
    ))
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Number of points of the `1/k` grid on the `dim`-simplex.
pub fn simplex_grid_count(dim: usize, k: u32) -> u128 {
    binomial(k as u128 + dim as u128 - 1, dim as u128 - 1)
}

/// Integer compositions of `k` into `dim` parts, in lexicographic order.
pub(crate) fn compositions(dim: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if dim == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            rec(dim - 1, left - c, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, k, &mut Vec::with_capacity(dim), &mut out);
    out
}

/// All distributions on `dim` symbols whose entries are multiples of `1/k`,
/// in lexicographic order.
pub fn simplex_grid(dim: usize, k: u32, cap: usize) -> Result<Vec<Dist>> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "simplex dimension must be positive".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument(
            "grid resolution must be positive".into(),
        ));
    }
    let count = simplex_grid_count(dim, k);
    if count > cap as u128 {
        return Err(Error::GridTooLarge { count, cap });
    }
    Ok(compositions(dim, k)
        .into_iter()
        .map(|c| Dist::from_raw(c.iter().map(|&v| v as f64 / k as f64).collect()))
        .collect())
}

/// Upper bound on the number of couplings `coupling_grid` will enumerate.
pub const COUPLING_GRID_CAP: usize = 1_000_000;

/// Integer matrices with the given row and column sums, in lexicographic
/// order of the row-major flattening.
pub(crate) fn integer_couplings(row_sums: &[u32], col_sums: &[u32]) -> Result<Vec<Vec<u32>>> {
    let (r, c) = (row_sums.len(), col_sums.len());
    let mut out = Vec::new();
    let mut cells = vec![0u32; r * c];
    let mut col_left = col_sums.to_vec();

    #[allow(clippy::too_many_arguments)]
    fn rec(
        pos: usize,
        r: usize,
        c: usize,
        row_sums: &[u32],
        row_used: u32,
        cells: &mut Vec<u32>,
        col_left: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) -> Result<()> {
        if out.len() > COUPLING_GRID_CAP {
            return Err(Error::GridTooLarge {
                count: out.len() as u128,
                cap: COUPLING_GRID_CAP,
            });
        }
        if pos == r * c {
            out.push(cells.clone());
            return Ok(());
        }
        let (i, j) = (pos / c, pos % c);
        let row_left = row_sums[i] - row_used;
        if j == c - 1 {
            // Last cell in the row is forced.
            if row_left > col_left[j] {
                return Ok(());
            }
            if i == r - 1 && col_left[j] != row_left {
                return Ok(());
            }
            cells[pos] = row_left;
            col_left[j] -= row_left;
            let res = rec(pos + 1, r, c, row_sums, 0, cells, col_left, out);
            col_left[j] += row_left;
            return res;
        }
        if i == r - 1 {
            let v = col_left[j];
            if v > row_left {
                return Ok(());
            }
            cells[pos] = v;
            col_left[j] = 0;
            let res = rec(pos + 1, r, c, row_sums, row_used + v, cells, col_left, out);
            col_left[j] = v;
            return res;
        }
        for v in 0..=row_left.min(col_left[j]) {
            cells[pos] = v;
            col_left[j] -= v;
            rec(pos + 1, r, c, row_sums, row_used + v, cells, col_left, out)?;
            col_left[j] += v;
        }
        Ok(())
    }

    if row_sums.iter().sum::<u32>() != col_sums.iter().sum::<u32>() {
        return Ok(out);
    }
    rec(0, r, c, row_sums, 0, &mut cells, &mut col_left, &mut out)?;
    Ok(out)
}

/// All joints on the `1/k` grid whose two marginals both equal `q`.
pub fn coupling_grid(q: &Dist, k: u32) -> Result<Vec<Joint2>> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "grid resolution must be positive".into(),
        ));
    }
    let counts = q.grid_counts(k)?;
    let n = q.len();
    Ok(integer_couplings(&counts, &counts)?
        .into_iter()
        .map(|m| Joint2::from_raw(n, n, m.iter().map(|&v| v as f64 / k as f64).collect()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-6;

    fn j2(rows: usize, cols: usize, p: &[f64]) -> Joint2 {
        Joint2::new(rows, cols, p.to_vec()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&Dist::uniform(2).unwrap()) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&Dist::point_mass(3, 1).unwrap()), 0.0);
        let d = Dist::new(vec![0.9, 0.1]).unwrap();
        assert!((entropy(&d) - 0.325083).abs() < TOL);
    }

    #[test]
    fn conditional_entropy_examples() {
        assert!((conditional_entropy(&j2(2, 2, &[0.25; 4])) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(conditional_entropy(&j2(2, 2, &[0.5, 0.0, 0.0, 0.5])), 0.0);
        // Rows are Y given columns X: transpose of Q_X x BSC(0.1).
        let joint = j2(2, 2, &[0.45, 0.05, 0.05, 0.45]).transpose();
        assert!((conditional_entropy(&joint) - 0.325083).abs() < TOL);
    }

    #[test]
    fn mutual_information_examples() {
        let prod = Joint2::product(
            &Dist::new(vec![0.3, 0.7]).unwrap(),
            &Dist::new(vec![0.2, 0.5, 0.3]).unwrap(),
        );
        assert!(mutual_information(&prod) < 1e-15);
        assert!((mutual_information(&j2(2, 2, &[0.5, 0.0, 0.0, 0.5])) - 2f64.ln()).abs() < 1e-15);
        let bsc = j2(2, 2, &[0.45, 0.05, 0.05, 0.45]);
        let hb = -(0.1f64 * 0.1f64.ln() + 0.9 * 0.9f64.ln());
        assert!((mutual_information(&bsc) - (2f64.ln() - hb)).abs() < 1e-12);
        assert!((mutual_information(&bsc) - 0.368064).abs() < TOL);
    }

    #[test]
    fn kl_examples() {
        let p = Dist::new(vec![0.2, 0.8]).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let pm = Dist::point_mass(2, 0).unwrap();
        let u = Dist::uniform(2).unwrap();
        assert!((kl_divergence(&pm, &u).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(kl_divergence(&u, &pm).unwrap(), f64::INFINITY);
        assert!(kl_divergence(&u, &Dist::uniform(3).unwrap()).is_err());
    }

    #[test]
    fn empirical_joint_examples() {
        let a2 = Alphabet::new(2).unwrap();
        let j = empirical_joint(&[0, 0, 1, 1], &[0, 0, 1, 1], a2, a2).unwrap();
        assert_eq!(j.probs(), &[0.5, 0.0, 0.0, 0.5]);
        let j = empirical_joint(&[0, 1], &[1, 0], a2, a2).unwrap();
        assert_eq!(j.probs(), &[0.0, 0.5, 0.5, 0.0]);
        let j = empirical_joint(&[0, 0, 0, 1], &[0, 1, 0, 1], a2, a2).unwrap();
        assert_eq!(j.probs(), &[0.5, 0.25, 0.0, 0.25]);
        assert!(matches!(
            empirical_joint(&[0, 1], &[0], a2, a2),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(empirical_joint(&[0, 2], &[0, 1], a2, a2).is_err());
    }

    #[test]
    fn simplex_grid_examples() {
        let g = simplex_grid(2, 2, 100).unwrap();
        let pts: Vec<_> = g.iter().map(|d| d.probs().to_vec()).collect();
        assert_eq!(pts, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert_eq!(simplex_grid(1, 7, 100).unwrap().len(), 1);
        assert_eq!(simplex_grid(3, 4, 100).unwrap().len(), 15);
        assert!(matches!(
            simplex_grid(4, 10, 100),
            Err(Error::GridTooLarge { count: 286, .. })
        ));
    }

    #[test]
    fn simplex_grid_counts_match_binomial() {
        for dim in 1..=4 {
            for k in 1..=10 {
                let g = simplex_grid(dim, k, 10_000).unwrap();
                assert_eq!(g.len() as u128, simplex_grid_count(dim, k));
                assert!(g.windows(2).all(|w| w[0].probs() < w[1].probs()));
            }
        }
    }

    #[test]
    fn coupling_grid_examples() {
        let half = Dist::uniform(2).unwrap();
        // On the 1/2 grid only the two permutation couplings exist.
        let g = coupling_grid(&half, 2).unwrap();
        let pts: Vec<_> = g.iter().map(|j| j.probs().to_vec()).collect();
        assert_eq!(
            pts,
            vec![vec![0.0, 0.5, 0.5, 0.0], vec![0.5, 0.0, 0.0, 0.5]]
        );
        let g = coupling_grid(&half, 4).unwrap();
        let pts: Vec<_> = g.iter().map(|j| j.probs().to_vec()).collect();
        assert_eq!(
            pts,
            vec![
                vec![0.0, 0.5, 0.5, 0.0],
                vec![0.25, 0.25, 0.25, 0.25],
                vec![0.5, 0.0, 0.0, 0.5]
            ]
        );
        let pm = Dist::point_mass(2, 0).unwrap();
        for k in 1..6 {
            let g = coupling_grid(&pm, k).unwrap();
            assert_eq!(g.len(), 1);
            assert_eq!(g[0].probs(), &[1.0, 0.0, 0.0, 0.0]);
        }
        let q = Dist::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(coupling_grid(&q, 4), Err(Error::NotGridAligned { k: 4 }));
    }

    #[test]
    fn coupling_grid_equals_filtered_simplex_grid() {
        for (q, k) in [
            (vec![0.5, 0.5], 4),
            (vec![0.25, 0.75], 4),
            (vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 3),
            (vec![0.5, 0.25, 0.25], 4),
            (vec![0.0, 0.5, 0.5], 6),
        ] {
            let q = Dist::new(q).unwrap();
            let n = q.len();
            let couplings = coupling_grid(&q, k).unwrap();
            let filtered: Vec<_> = simplex_grid(n * n, k, 1_000_000)
                .unwrap()
                .into_iter()
                .map(|d| Joint2::from_raw(n, n, d.probs().to_vec()))
                .filter(|j| j.marginal_deviation(&q) < 1e-12)
                .collect();
            assert_eq!(couplings, filtered);
            for c in &couplings {
                assert!(c.marginal_deviation(&q) < 1e-15);
            }
        }
    }

    #[test]
    fn round_to_grid_is_aligned() {
        let q = Dist::new(vec![0.3, 0.7]).unwrap();
        let r = q.round_to_grid(8);
        assert_eq!(r.probs(), &[0.25, 0.75]);
        let q = Dist::uniform(3).unwrap().round_to_grid(8);
        assert_eq!(q.probs(), &[0.375, 0.375, 0.25]);
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(Dist::new(vec![0.5, 0.6]).is_err());
        assert!(Dist::new(vec![-0.1, 1.1]).is_err());
        assert!(Dist::new(vec![]).is_err());
        assert!(Dist::new(vec![f64::NAN, 1.0]).is_err());
        assert!(Joint2::new(2, 2, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn channel_accessors() {
        let ch = Channel::bsc(0.1).unwrap();
        assert_eq!((ch.inputs(), ch.outputs()), (2, 2));
        assert!((ch.log_w(0, 1) - 0.1f64.ln()).abs() < 1e-15);
        let id = Channel::identity(3).unwrap();
        assert!(!id.supported(0, 1));
        assert_eq!(id.log_w(0, 1), f64::NEG_INFINITY);
        let out = ch.output_dist(&Dist::new(vec![0.25, 0.75]).unwrap());
        assert!((out.get(0) - 0.3).abs() < 1e-15);
    }
}
