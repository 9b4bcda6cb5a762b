//! Partition sums, certified pressure brackets, asymptotic averages and the
//! dimension root searches built on them.
//!
//! Upper bounds come from subadditivity: `P(Φ) = inf_m (1/m) log S_m`, so
//! every `(1/m) log S_m` bounds the pressure from above. Lower bounds come
//! from the supermultiplicative companion `ψ ≤ Φ` (smallest singular values),
//! whose rates `(1/m) log Z_m` bound the pressure from below. The two do not
//! have to meet; a gap that does not close is reported, never hidden.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::potentials::{
    fold_words, log_svf_dual_from_log_sv, log_svf_from_log_sv, LogSum, MatrixTuple,
    PotentialSpec, WordAccumulator, WordNode,
};
use crate::{Error, Result};

/// A Bernoulli measure on the full shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliMeasure {
    p: Vec<f64>,
}

impl BernoulliMeasure {
    pub fn new(p: Vec<f64>) -> Result<BernoulliMeasure> {
        if p.is_empty() || p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(BernoulliMeasure { p })
    }

    pub fn uniform(alphabet: usize) -> BernoulliMeasure {
        BernoulliMeasure {
            p: vec![1.0 / alphabet as f64; alphabet],
        }
    }

    pub fn point_mass(alphabet: usize, symbol: usize) -> BernoulliMeasure {
        let mut p = vec![0.0; alphabet];
        p[symbol] = 1.0;
        BernoulliMeasure { p }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn alphabet(&self) -> usize {
        self.p.len()
    }

    fn log_p(&self) -> Vec<f64> {
        self.p.iter().map(|x| x.ln()).collect()
    }
}

/// Kolmogorov–Sinai entropy `−Σ p_i log p_i` with `0 log 0 = 0`.
pub fn entropy(mu: &BernoulliMeasure) -> f64 {
    -mu.p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>()
}

/// Certified enclosure of the pressure, per-symbol natural-log units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureBracket {
    pub depth: usize,
    pub lower: f64,
    pub upper: f64,
    /// `(1/m) log S_m` for `m = 1..=depth`.
    pub upper_rates: Vec<f64>,
    /// `(1/m) log Z_m` for `m = 1..=depth`.
    pub lower_rates: Vec<f64>,
}

impl PressureBracket {
    fn from_sums(log_s: &[f64], log_z: &[f64]) -> PressureBracket {
        let upper_rates: Vec<f64> = log_s
            .iter()
            .enumerate()
            .map(|(i, v)| v / (i + 1) as f64)
            .collect();
        let lower_rates: Vec<f64> = log_z
            .iter()
            .enumerate()
            .map(|(i, v)| v / (i + 1) as f64)
            .collect();
        PressureBracket {
            depth: log_s.len(),
            upper: upper_rates.iter().copied().fold(f64::INFINITY, f64::min),
            lower: lower_rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            upper_rates,
            lower_rates,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.upper + self.lower)
    }

    pub fn overlaps(&self, other: &PressureBracket) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }

    /// Running minimum of the upper rates (nonincreasing in depth).
    pub fn running_upper(&self) -> Vec<f64> {
        running(&self.upper_rates, f64::min)
    }

    /// Running maximum of the lower rates (nondecreasing in depth).
    pub fn running_lower(&self) -> Vec<f64> {
        running(&self.lower_rates, f64::max)
    }
}

fn running(xs: &[f64], f: fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        out.push(if i == 0 { x } else { f(out[i - 1], x) });
    }
    out
}

#[derive(Clone)]
struct LevelSums<'a> {
    spec: &'a PotentialSpec,
    phi: Vec<LogSum>,
    psi: Vec<LogSum>,
}

impl WordAccumulator for LevelSums<'_> {
    fn visit(&mut self, node: &WordNode<'_>) {
        let v = self.spec.node_value(node.products);
        let level = node.word.len() - 1;
        self.phi[level].add(v.log_phi);
        self.psi[level].add(v.log_psi);
    }

    fn merge(&mut self, later: Self) {
        for (a, b) in self.phi.iter_mut().zip(&later.phi) {
            a.merge(b);
        }
        for (a, b) in self.psi.iter_mut().zip(&later.psi) {
            a.merge(b);
        }
    }
}

/// `log S_m` and `log Z_m` for every `m = 1..=depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSums {
    pub log_s: Vec<f64>,
    pub log_z: Vec<f64>,
}

pub fn depth_sums(spec: &PotentialSpec, depth: usize, config: &Config) -> Result<DepthSums> {
    let init = LevelSums {
        spec,
        phi: vec![LogSum::default(); depth],
        psi: vec![LogSum::default(); depth],
    };
    let (acc, _) = fold_words(&spec.factor_tuples(), depth, config, init)?;
    Ok(DepthSums {
        log_s: acc.phi.iter().map(LogSum::value).collect(),
        log_z: acc.psi.iter().map(LogSum::value).collect(),
    })
}

/// `log Σ_{|i|=n} Φ(i)`.
pub fn partition_sum(spec: &PotentialSpec, n: usize, config: &Config) -> Result<f64> {
    Ok(depth_sums(spec, n, config)?.log_s[n - 1])
}

/// `log Σ_{|i|=n} ψ(i)` for the supermultiplicative companion.
pub fn dual_partition_sum(spec: &PotentialSpec, n: usize, config: &Config) -> Result<f64> {
    Ok(depth_sums(spec, n, config)?.log_z[n - 1])
}

pub fn pressure_bracket(
    spec: &PotentialSpec,
    n_max: usize,
    config: &Config,
) -> Result<PressureBracket> {
    let sums = depth_sums(spec, n_max, config)?;
    Ok(PressureBracket::from_sums(&sums.log_s, &sums.log_z))
}

/// Logarithms of the singular values of `A_i` for every word up to a depth,
/// stored level by level in lexicographic order. Evaluating `φ^s` sums at
/// many values of `s` then needs no further matrix work.
#[derive(Debug, Clone)]
pub struct WordSpectra {
    alphabet: usize,
    dim: usize,
    levels: Vec<Vec<f64>>,
}

#[derive(Clone)]
struct SpectraCollector {
    dim: usize,
    levels: Vec<Vec<f64>>,
}

impl WordAccumulator for SpectraCollector {
    fn visit(&mut self, node: &WordNode<'_>) {
        // within one first-symbol subtree words arrive in lexicographic order
        self.levels[node.word.len() - 1].extend_from_slice(node.products[0].log_singular_values());
    }

    fn merge(&mut self, later: Self) {
        for (a, b) in self.levels.iter_mut().zip(later.levels) {
            a.extend(b);
        }
    }
}

impl WordSpectra {
    pub fn build(tuple: &MatrixTuple, depth: usize, config: &Config) -> Result<WordSpectra> {
        let init = SpectraCollector {
            dim: tuple.dim(),
            levels: vec![Vec::new(); depth],
        };
        let (acc, _) = fold_words(&[tuple], depth, config, init)?;
        Ok(WordSpectra {
            alphabet: tuple.len(),
            dim: acc.dim,
            levels: acc.levels,
        })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Singular value logs of the word with lexicographic `index` at `len`.
    pub fn log_sv(&self, len: usize, index: usize) -> &[f64] {
        &self.levels[len - 1][index * self.dim..(index + 1) * self.dim]
    }

    fn level_sums(&self, s: f64, upto: usize) -> DepthSums {
        let mut log_s = Vec::with_capacity(upto);
        let mut log_z = Vec::with_capacity(upto);
        for level in &self.levels[..upto] {
            let mut a = LogSum::default();
            let mut b = LogSum::default();
            for sv in level.chunks_exact(self.dim) {
                a.add(log_svf_from_log_sv(sv, s));
                b.add(log_svf_dual_from_log_sv(sv, s));
            }
            log_s.push(a.value());
            log_z.push(b.value());
        }
        DepthSums { log_s, log_z }
    }

    /// Pressure bracket of `φ^s` using depths `1..=upto`.
    pub fn bracket(&self, s: f64, upto: usize) -> PressureBracket {
        let sums = self.level_sums(s, upto.min(self.depth()));
        PressureBracket::from_sums(&sums.log_s, &sums.log_z)
    }

    /// `(1/n) log S_n(s)` at the deepest level only.
    pub fn deepest_rate(&self, s: f64) -> f64 {
        let level = &self.levels[self.depth() - 1];
        let mut a = LogSum::default();
        for sv in level.chunks_exact(self.dim) {
            a.add(log_svf_from_log_sv(sv, s));
        }
        a.value() / self.depth() as f64
    }

    fn log_mu_levels(&self, mu: &BernoulliMeasure) -> Vec<Vec<f64>> {
        let lp = mu.log_p();
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.depth());
        out.push(lp.clone());
        for n in 1..self.depth() {
            let prev = &out[n - 1];
            let mut cur = Vec::with_capacity(prev.len() * self.alphabet);
            for &p in prev {
                for &q in &lp {
                    cur.push(p + q);
                }
            }
            out.push(cur);
        }
        out
    }

    /// `(1/m) Σ μ[i] log φ^s(A_i)` and the `ψ^s` analogue for every depth.
    pub fn weighted_rates(&self, s: f64, mu: &BernoulliMeasure) -> (Vec<f64>, Vec<f64>) {
        let log_mu = self.log_mu_levels(mu);
        let mut up = Vec::new();
        let mut low = Vec::new();
        for (m, (level, weights)) in self.levels.iter().zip(&log_mu).enumerate() {
            let mut a = 0.0;
            let mut b = 0.0;
            for (sv, &lw) in level.chunks_exact(self.dim).zip(weights) {
                if lw == f64::NEG_INFINITY {
                    continue;
                }
                let w = lw.exp();
                a += w * log_svf_from_log_sv(sv, s);
                b += w * log_svf_dual_from_log_sv(sv, s);
            }
            up.push(a / (m + 1) as f64);
            low.push(b / (m + 1) as f64);
        }
        (up, low)
    }
}

/// Certified enclosure of the asymptotic average `Λ(Φ, μ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageBracket {
    pub depth: usize,
    pub lower: f64,
    pub upper: f64,
    pub upper_rates: Vec<f64>,
    pub lower_rates: Vec<f64>,
}

impl AverageBracket {
    fn from_rates(upper_rates: Vec<f64>, lower_rates: Vec<f64>) -> AverageBracket {
        AverageBracket {
            depth: upper_rates.len(),
            upper: upper_rates.iter().copied().fold(f64::INFINITY, f64::min),
            lower: lower_rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            upper_rates,
            lower_rates,
        }
    }
}

#[derive(Clone)]
struct WeightedSums<'a> {
    spec: &'a PotentialSpec,
    log_p: &'a [f64],
    phi: Vec<f64>,
    psi: Vec<f64>,
}

impl WordAccumulator for WeightedSums<'_> {
    fn visit(&mut self, node: &WordNode<'_>) {
        let lw: f64 = node.word.iter().map(|&s| self.log_p[s]).sum();
        if lw == f64::NEG_INFINITY {
            return;
        }
        let v = self.spec.node_value(node.products);
        let w = lw.exp();
        let level = node.word.len() - 1;
        self.phi[level] += w * v.log_phi;
        self.psi[level] += w * v.log_psi;
    }

    fn merge(&mut self, later: Self) {
        for (a, b) in self.phi.iter_mut().zip(&later.phi) {
            *a += b;
        }
        for (a, b) in self.psi.iter_mut().zip(&later.psi) {
            *a += b;
        }
    }
}

/// Bracket of `Λ(Φ, μ) = lim (1/n) Σ μ[i] log Φ(i)` for a Bernoulli `μ`.
pub fn asymptotic_average(
    spec: &PotentialSpec,
    mu: &BernoulliMeasure,
    n_max: usize,
    config: &Config,
) -> Result<AverageBracket> {
    if mu.alphabet() != spec.alphabet() {
        return Err(Error::DimensionMismatch {
            expected: spec.alphabet(),
            found: mu.alphabet(),
        });
    }
    let log_p = mu.log_p();
    let init = WeightedSums {
        spec,
        log_p: &log_p,
        phi: vec![0.0; n_max],
        psi: vec![0.0; n_max],
    };
    let (acc, _) = fold_words(&spec.factor_tuples(), n_max, config, init)?;
    let up = acc
        .phi
        .iter()
        .enumerate()
        .map(|(i, v)| v / (i + 1) as f64)
        .collect();
    let low = acc
        .psi
        .iter()
        .enumerate()
        .map(|(i, v)| v / (i + 1) as f64)
        .collect();
    Ok(AverageBracket::from_rates(up, low))
}

/// Certified enclosure of a dimension-type root in `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionBracket {
    pub s_lo: f64,
    pub s_hi: f64,
    /// Root of the finite-depth upper approximation; not certified.
    pub point_estimate: f64,
    /// The enclosure `[s_lo, s_hi]` is valid (contractive input, no clamping).
    pub certified: bool,
    /// The enclosure is wider than the requested tolerance allows.
    pub stalled: bool,
    pub contractive: bool,
    /// The search hit its upper cap on `s`.
    pub clamped: bool,
    pub depth: usize,
}

impl DimensionBracket {
    pub fn width(&self) -> f64 {
        self.s_hi - self.s_lo
    }

    pub fn contains(&self, s: f64) -> bool {
        self.s_lo <= s && s <= self.s_hi
    }
}

const S_CAP: f64 = 1e6;

/// Bisection for the sign change of a nonincreasing function with
/// `f(lo) >= 0 > f(hi)`. Returns the final `(lo, hi)`.
fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Smallest doubling of `d` (capped) where `f` turns negative.
fn upper_limit(f: &dyn Fn(f64) -> f64, d: f64) -> (f64, bool) {
    let mut hi = d.max(1.0);
    while f(hi) >= 0.0 {
        if hi >= S_CAP {
            return (hi, true);
        }
        hi *= 2.0;
    }
    (hi, false)
}

fn dimension_search(
    upper: &dyn Fn(f64) -> f64,
    lower: &dyn Fn(f64) -> f64,
    point: &dyn Fn(f64) -> f64,
    d: f64,
    s_tol: f64,
    contractive: bool,
    depth: usize,
) -> DimensionBracket {
    let (cap, clamped) = upper_limit(upper, d);
    // s_hi: upper bound turns negative, so the true root lies at or below it
    let s_hi = if upper(0.0) < 0.0 {
        0.0
    } else {
        bisect(upper, 0.0, cap, s_tol).1
    };
    // s_lo: last point where the lower bound is still positive
    let s_lo = if lower(0.0) <= 0.0 {
        0.0
    } else {
        let (lo_cap, _) = upper_limit(lower, d);
        bisect(lower, 0.0, lo_cap.min(s_hi.max(s_tol)), s_tol).0
    };
    let point_estimate = if point(0.0) < 0.0 {
        0.0
    } else {
        let (pcap, _) = upper_limit(point, d);
        let (a, b) = bisect(point, 0.0, pcap, s_tol.min(1e-12));
        0.5 * (a + b)
    };
    let s_lo = s_lo.min(s_hi);
    DimensionBracket {
        s_lo,
        s_hi,
        point_estimate,
        certified: contractive && !clamped,
        stalled: s_hi - s_lo > 2.0 * s_tol,
        contractive,
        clamped,
        depth,
    }
}

/// Bracket the affinity dimension, the zero of `s ↦ P(φ^s)`.
///
/// `s_hi` is where the upper pressure bound turns negative and `s_lo` where
/// the lower bound stops being positive; both are certified when every map
/// is a contraction, since then each bound is decreasing in `s`.
pub fn affinity_dimension(
    tuple: &MatrixTuple,
    n_max: usize,
    s_tol: f64,
    config: &Config,
) -> Result<DimensionBracket> {
    let spectra = WordSpectra::build(tuple, n_max, config)?;
    Ok(affinity_dimension_from_spectra(
        &spectra,
        s_tol,
        tuple.is_contractive(),
    ))
}

pub fn affinity_dimension_from_spectra(
    spectra: &WordSpectra,
    s_tol: f64,
    contractive: bool,
) -> DimensionBracket {
    let depth = spectra.depth();
    let upper = |s: f64| spectra.bracket(s, depth).upper;
    let lower = |s: f64| spectra.bracket(s, depth).lower;
    let point = |s: f64| spectra.deepest_rate(s);
    dimension_search(
        &upper,
        &lower,
        &point,
        spectra.dim() as f64,
        s_tol,
        contractive,
        depth,
    )
}

/// Bracket the Lyapunov dimension of a Bernoulli measure, the zero of
/// `s ↦ h(μ) + Λ(φ^s, μ)`.
pub fn lyapunov_dimension(
    tuple: &MatrixTuple,
    mu: &BernoulliMeasure,
    n_max: usize,
    s_tol: f64,
    config: &Config,
) -> Result<DimensionBracket> {
    if mu.alphabet() != tuple.len() {
        return Err(Error::DimensionMismatch {
            expected: tuple.len(),
            found: mu.alphabet(),
        });
    }
    let spectra = WordSpectra::build(tuple, n_max, config)?;
    let h = entropy(mu);
    let upper = |s: f64| {
        let (up, _) = spectra.weighted_rates(s, mu);
        h + up.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let lower = |s: f64| {
        let (_, low) = spectra.weighted_rates(s, mu);
        h + low.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let point = |s: f64| {
        let (up, _) = spectra.weighted_rates(s, mu);
        h + up[up.len() - 1]
    };
    Ok(dimension_search(
        &upper,
        &lower,
        &point,
        tuple.dim() as f64,
        s_tol,
        tuple.is_contractive(),
        n_max,
    ))
}

/// One sample of the pressure curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub s: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn pressure_curve(
    tuple: &MatrixTuple,
    s_grid: &[f64],
    depth: usize,
    config: &Config,
) -> Result<Vec<CurvePoint>> {
    let spectra = WordSpectra::build(tuple, depth, config)?;
    Ok(s_grid
        .par_iter()
        .map(|&s| {
            let b = spectra.bracket(s, depth);
            CurvePoint {
                s,
                lower: b.lower,
                upper: b.upper,
            }
        })
        .collect())
}

/// Pressure brackets of the block combinations `Φ_r` and the set of
/// combinations that may realise the maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPressureReport {
    pub brackets: Vec<PressureBracket>,
    /// Best certified lower bound for `P(Φ) = max_r P(Φ_r)`.
    pub global_lower: f64,
    /// Certified upper bound for the same maximum.
    pub global_upper: f64,
    /// Combinations whose upper bound reaches the global lower bound.
    pub argmax: Vec<usize>,
}

pub fn block_pressure_report(
    combinations: &[PotentialSpec],
    n_max: usize,
    config: &Config,
) -> Result<BlockPressureReport> {
    if combinations.is_empty() {
        return Err(Error::InvalidParameter("no block combinations".into()));
    }
    let brackets = combinations
        .iter()
        .map(|c| pressure_bracket(c, n_max, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_brackets(brackets))
}

pub(crate) fn summarize_brackets(brackets: Vec<PressureBracket>) -> BlockPressureReport {
    let global_lower = brackets
        .iter()
        .map(|b| b.lower)
        .fold(f64::NEG_INFINITY, f64::max);
    let global_upper = brackets
        .iter()
        .map(|b| b.upper)
        .fold(f64::NEG_INFINITY, f64::max);
    let argmax = brackets
        .iter()
        .enumerate()
        .filter(|(_, b)| b.upper >= global_lower - 1e-12 * global_lower.abs().max(1.0))
        .map(|(i, _)| i)
        .collect();
    BlockPressureReport {
        brackets,
        global_lower,
        global_upper,
        argmax,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::potentials::{NormProduct, Word};
    use crate::random::{gaussian_matrix, random_orthogonal, rng_from_seed};
    use rand::Rng;

    fn similarity_tuple(ratios: &[f64], d: usize, seed: u64) -> MatrixTuple {
        let mut rng = rng_from_seed(seed);
        MatrixTuple::new(
            ratios
                .iter()
                .map(|r| random_orthogonal(&mut rng, d) * *r)
                .collect(),
        )
        .unwrap()
    }

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(v.to_vec()))
    }

    /// Independent diagonal oracle: for simultaneously diagonal tuples the
    /// pressure of `φ^s` is the largest over `(I, j)` with `|I| = ⌊s⌋`,
    /// `j ∉ I`, of `log Σ_i ∏_{l∈I} |a_l| · |a_j|^{s−⌊s⌋}`.
    fn diagonal_oracle(diags: &[Vec<f64>], s: f64) -> f64 {
        let d = diags[0].len();
        if s >= d as f64 {
            let total: f64 = diags
                .iter()
                .map(|a| a.iter().map(|x| x.abs()).product::<f64>().powf(s / d as f64))
                .sum();
            return total.ln();
        }
        let k = s.floor() as usize;
        let frac = s - k as f64;
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << d) {
            if mask.count_ones() as usize != k {
                continue;
            }
            for j in 0..d {
                if mask & (1 << j) != 0 {
                    continue;
                }
                let total: f64 = diags
                    .iter()
                    .map(|a| {
                        let mut p = 1.0;
                        for (l, x) in a.iter().enumerate() {
                            if mask & (1 << l) != 0 {
                                p *= x.abs();
                            }
                        }
                        p * a[j].abs().powf(frac)
                    })
                    .sum();
                best = best.max(total.ln());
            }
        }
        best
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&BernoulliMeasure::uniform(4)) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&BernoulliMeasure::point_mass(3, 1)), 0.0);
        let mu = BernoulliMeasure::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!((entropy(&mu) - 1.5 * 2f64.ln()).abs() < 1e-15);
        assert!(BernoulliMeasure::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn partition_sum_examples() {
        let cfg = Config::default();
        let r: f64 = 0.4;
        let t = similarity_tuple(&[r, r, r], 2, 1);
        let spec = PotentialSpec::svf(t, 1.3).unwrap();
        for n in 1..=5 {
            let v = partition_sum(&spec, n, &cfg).unwrap();
            assert!((v - n as f64 * (3.0 * r.powf(1.3)).ln()).abs() < 1e-11);
            // conformal maps: the companion sum is identical
            let z = dual_partition_sum(&spec, n, &cfg).unwrap();
            assert!((z - v).abs() < 1e-11);
        }

        let t = MatrixTuple::new(vec![diag(&[2.0]), diag(&[3.0])]).unwrap();
        let spec = PotentialSpec::svf(t, 1.0).unwrap();
        assert!((partition_sum(&spec, 2, &cfg).unwrap() - 25f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn partition_sum_matches_brute_force() {
        let cfg = Config::default();
        let mut rng = rng_from_seed(5);
        let t = MatrixTuple::new((0..3).map(|_| gaussian_matrix(&mut rng, 3, 3)).collect())
            .unwrap();
        let spec = PotentialSpec::NormProduct(NormProduct::single(t.clone()));
        for n in 1..=4 {
            let brute: f64 = Word::all(n, 3)
                .iter()
                .map(|w| t.product(w).unwrap().singular_values().max())
                .sum();
            let v = partition_sum(&spec, n, &cfg).unwrap();
            assert!((v - brute.ln()).abs() < 1e-11);
        }
    }

    #[test]
    fn dual_sums_are_supermultiplicative() {
        let cfg = Config::default();
        let mut rng = rng_from_seed(6);
        let t = MatrixTuple::new(
            (0..2)
                .map(|_| gaussian_matrix(&mut rng, 3, 3) * 0.4)
                .collect(),
        )
        .unwrap();
        let spec = PotentialSpec::svf(t, 1.6).unwrap();
        let sums = depth_sums(&spec, 8, &cfg).unwrap();
        for n in 1..=8 {
            for m in 1..=8 {
                if n + m <= 8 {
                    assert!(sums.log_z[n + m - 1] >= sums.log_z[n - 1] + sums.log_z[m - 1] - 1e-9);
                    assert!(sums.log_s[n + m - 1] <= sums.log_s[n - 1] + sums.log_s[m - 1] + 1e-9);
                }
            }
        }
        let b = PressureBracket::from_sums(&sums.log_s, &sums.log_z);
        let lows = b.running_lower();
        assert!(lows.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn ordered_diagonal_dual_closed_form() {
        // axis order agrees across maps, so ψ^s picks the same axes every time
        let cfg = Config::default();
        let diags = [vec![0.6, 0.3, 0.1], vec![0.5, 0.4, 0.2]];
        let t = MatrixTuple::new(diags.iter().map(|d| diag(d)).collect()).unwrap();
        let s = 1.4;
        let spec = PotentialSpec::svf(t, s).unwrap();
        let per_step: f64 = diags
            .iter()
            .map(|a| a[2] * a[1].powf(0.4))
            .sum::<f64>()
            .ln();
        for n in 1..=6 {
            let z = dual_partition_sum(&spec, n, &cfg).unwrap();
            assert!((z - n as f64 * per_step).abs() < 1e-11);
        }
    }

    #[test]
    fn similarity_bracket_collapses() {
        let cfg = Config::default();
        let r: f64 = 0.3;
        let t = similarity_tuple(&[r; 4], 3, 2);
        let spec = PotentialSpec::svf(t, 0.8).unwrap();
        let b = pressure_bracket(&spec, 1, &cfg).unwrap();
        assert!(b.width().abs() < 1e-12);
        assert!((b.upper - (4.0 * r.powf(0.8)).ln()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_integer_s_against_oracle() {
        let cfg = Config::default().with_budget_bits(20.0);
        let diags = vec![vec![0.7, 0.2, 0.5], vec![0.3, 0.6, 0.4]];
        let t = MatrixTuple::new(diags.iter().map(|d| diag(d)).collect()).unwrap();
        for s in [1.0, 2.0] {
            let b = pressure_bracket(&PotentialSpec::svf(t.clone(), s).unwrap(), 12, &cfg).unwrap();
            let oracle = diagonal_oracle(&diags, s);
            assert!(b.lower <= oracle + 1e-12 && oracle <= b.upper + 1e-12);
            assert!(b.upper - oracle < 0.1, "s={s} upper={} oracle={oracle}", b.upper);
        }
    }

    #[test]
    fn pressure_strictly_decreasing_in_s() {
        let cfg = Config::default();
        let mut rng = rng_from_seed(8);
        let t = MatrixTuple::new(
            (0..3)
                .map(|_| random_orthogonal(&mut rng, 2) * diag(&[0.7, 0.3]))
                .collect(),
        )
        .unwrap();
        let spectra = WordSpectra::build(&t, 8, &cfg).unwrap();
        let amax = t.max_norm();
        let mut s = 0.0;
        while s < 1.9 {
            let a = spectra.bracket(s, 8).upper;
            let b = spectra.bracket(s + 0.1, 8).upper;
            assert!(b < a - 0.05 * (1.0 / amax).ln());
            s += 0.1;
        }
    }

    #[test]
    fn hutchinson_dimension() {
        let cfg = Config::default();
        let t = similarity_tuple(&[0.5, 0.5, 0.5], 2, 3);
        let b = affinity_dimension(&t, 1, 1e-11, &cfg).unwrap();
        let exact = 3f64.ln() / 2f64.ln();
        assert!(b.width() <= 1e-9);
        assert!(b.contains(exact), "{b:?}");
        assert!(b.certified && !b.stalled);
        assert!((b.point_estimate - exact).abs() < 1e-9);
    }

    #[test]
    fn dimension_above_ambient_uses_determinant_branch() {
        // 5 maps of ratio 0.8 in the plane: log 5 / log 1.25 > 2
        let cfg = Config::default();
        let r: f64 = 0.8;
        let t = similarity_tuple(&[r; 5], 2, 4);
        let b = affinity_dimension(&t, 1, 1e-11, &cfg).unwrap();
        let exact = 5f64.ln() / (1.0 / r).ln();
        assert!(exact > 2.0);
        assert!(b.contains(exact) && b.width() < 1e-9);
    }

    #[test]
    fn diagonal_dimension_against_oracle() {
        let cfg = Config::default().with_budget_bits(20.0);
        let diags = vec![vec![0.6, 0.3], vec![0.4, 0.5], vec![0.5, 0.2]];
        let t = MatrixTuple::new(diags.iter().map(|d| diag(d)).collect()).unwrap();
        let b = affinity_dimension(&t, 12, 1e-6, &cfg).unwrap();
        let f = |s: f64| diagonal_oracle(&diags, s);
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert!(b.s_lo <= hi + 1e-3 && lo - 1e-3 <= b.s_hi, "{b:?} oracle {lo}");
        assert!((b.point_estimate - lo).abs() < 0.05);
    }

    #[test]
    fn lyapunov_examples() {
        let cfg = Config::default();
        let r: f64 = 0.3;
        let t = similarity_tuple(&[r; 3], 2, 9);
        let b = lyapunov_dimension(&t, &BernoulliMeasure::uniform(3), 3, 1e-11, &cfg).unwrap();
        let exact = 3f64.ln() / (1.0 / r).ln();
        assert!(b.contains(exact) && b.width() < 1e-9);

        let b = lyapunov_dimension(&t, &BernoulliMeasure::point_mass(3, 1), 3, 1e-9, &cfg).unwrap();
        assert!(b.s_hi < 1e-8);
    }

    #[test]
    fn point_mass_average_matches_eigenvalues() {
        let cfg = Config::default().with_budget_bits(24.0);
        let a = Matrix::from_row_slice(2, 2, &[0.5, 0.3, 0.0, 0.2]);
        let b = Matrix::from_row_slice(2, 2, &[0.1, 0.0, 0.4, 0.3]);
        let t = MatrixTuple::new(vec![a.clone(), b]).unwrap();
        let spec = PotentialSpec::NormProduct(NormProduct::single(t.clone()));
        let avg = asymptotic_average(&spec, &BernoulliMeasure::point_mass(2, 0), 16, &cfg).unwrap();
        let rho = crate::linalg::spectral_radius(&a).unwrap();
        assert!(avg.lower <= rho.ln() + 1e-12 && rho.ln() <= avg.upper + 1e-12);
        assert!(avg.upper - rho.ln() < 0.1);
        // s-profile: Λ(φ^s, δ_0) = s·log|λ_1| for s ≤ 1
        let spectra = WordSpectra::build(&t, 16, &cfg).unwrap();
        let (up, _) = spectra.weighted_rates(0.5, &BernoulliMeasure::point_mass(2, 0));
        assert!((up[15] - 0.5 * rho.ln()).abs() < 0.05);
    }

    #[test]
    fn similarity_average_is_exact() {
        let cfg = Config::default();
        let r: f64 = 0.45;
        let t = similarity_tuple(&[r; 3], 3, 10);
        let spec = PotentialSpec::svf(t, 2.2).unwrap();
        let mut rng = rng_from_seed(10);
        let mut p: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.1).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        let mu = BernoulliMeasure::new(p).unwrap();
        let avg = asymptotic_average(&spec, &mu, 4, &cfg).unwrap();
        assert!((avg.upper - 2.2 * r.ln()).abs() < 1e-10);
        assert!((avg.lower - 2.2 * r.ln()).abs() < 1e-10);
    }

    #[test]
    fn variational_inequality_holds() {
        let cfg = Config::default();
        let mut rng = rng_from_seed(11);
        let t = MatrixTuple::new(
            (0..3)
                .map(|_| gaussian_matrix(&mut rng, 2, 2) * 0.3)
                .collect(),
        )
        .unwrap();
        let spec = PotentialSpec::svf(t, 1.2).unwrap();
        let p = pressure_bracket(&spec, 8, &cfg).unwrap();
        for _ in 0..10 {
            let mut q: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let total: f64 = q.iter().sum();
            q.iter_mut().for_each(|x| *x /= total);
            let mu = BernoulliMeasure::new(q).unwrap();
            let avg = asymptotic_average(&spec, &mu, 8, &cfg).unwrap();
            assert!(entropy(&mu) + avg.lower <= p.upper + 1e-9);
        }
    }

    #[test]
    fn deleting_a_map_never_raises_pressure() {
        let cfg = Config::default();
        let mut rng = rng_from_seed(12);
        let t = MatrixTuple::new(
            (0..3)
                .map(|_| gaussian_matrix(&mut rng, 3, 3) * 0.3)
                .collect(),
        )
        .unwrap();
        for i in 0..3 {
            let sub = t.without(i).unwrap();
            for s in [0.5, 1.5, 2.5] {
                let full = pressure_bracket(&PotentialSpec::svf(t.clone(), s).unwrap(), 6, &cfg)
                    .unwrap();
                let part = pressure_bracket(&PotentialSpec::svf(sub.clone(), s).unwrap(), 6, &cfg)
                    .unwrap();
                assert!(part.upper <= full.upper);
            }
        }
    }

    #[test]
    fn budget_error_reports_max_depth() {
        let t = similarity_tuple(&[0.5; 4], 2, 1);
        let spec = PotentialSpec::svf(t, 1.0).unwrap();
        assert_eq!(
            pressure_bracket(&spec, 10, &Config::default()),
            Err(Error::BudgetExceeded {
                requested: 10,
                max_depth: 8
            })
        );
    }

    #[test]
    fn block_report_argmax() {
        let cfg = Config::default();
        let a = MatrixTuple::new(vec![diag(&[0.5]), diag(&[0.6])]).unwrap();
        let b = MatrixTuple::new(vec![diag(&[0.2]), diag(&[0.3])]).unwrap();
        let specs = vec![
            PotentialSpec::NormProduct(NormProduct::single(a)),
            PotentialSpec::NormProduct(NormProduct::single(b)),
        ];
        let r = block_pressure_report(&specs, 3, &cfg).unwrap();
        assert_eq!(r.argmax, vec![0]);
        assert!((r.global_lower - 1.1f64.ln()).abs() < 1e-12);
        assert!(block_pressure_report(&[], 3, &cfg).is_err());
    }
}
