//! Words, matrix products along words, and potentials on the word tree.
//!
//! Words follow the convention `A_i := A_{i_n} ⋯ A_{i_2} A_{i_1}`: extending a
//! word by one symbol on the right multiplies the running product on the
//! LEFT. Concatenation `ij` therefore maps to `A_j · A_i`.
//!
//! All potential values are natural logarithms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::linalg::{self, singular_values_rect, Matrix};
use crate::structure::OrbitSet;
use crate::{Error, Result};

/// Default smallest admissible `|det|` for tuple members.
pub const DEFAULT_DET_TOL: f64 = 1e-12;

/// An ordered tuple `(A_1, …, A_N)` of invertible `d × d` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTuple {
    dim: usize,
    matrices: Vec<Matrix>,
}

impl MatrixTuple {
    pub fn new(matrices: Vec<Matrix>) -> Result<Self> {
        Self::with_det_tol(matrices, DEFAULT_DET_TOL)
    }

    pub fn with_det_tol(matrices: Vec<Matrix>, det_tol: f64) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidParameter("tuple needs at least one matrix".into()))?;
        let dim = first.nrows();
        for (index, m) in matrices.iter().enumerate() {
            if !m.is_square() {
                return Err(Error::NotSquare {
                    rows: m.nrows(),
                    cols: m.ncols(),
                });
            }
            if m.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.nrows(),
                });
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite);
            }
            let det = m.determinant();
            if det.abs() <= det_tol {
                return Err(Error::Singular { index, det });
            }
        }
        Ok(MatrixTuple { dim, matrices })
    }

    pub fn from_rows(rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let ms = rows
            .iter()
            .map(|r| linalg::from_rows(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Alphabet size `N`.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn get(&self, symbol: usize) -> &Matrix {
        &self.matrices[symbol]
    }

    /// `A_{i_n} ⋯ A_{i_1}` for the word `i`.
    pub fn product(&self, word: &Word) -> Result<Matrix> {
        word.check(self.len())?;
        let mut acc = Matrix::identity(self.dim, self.dim);
        for &s in word.symbols() {
            acc = &self.matrices[s] * acc;
        }
        Ok(acc)
    }

    pub fn transpose(&self) -> MatrixTuple {
        MatrixTuple {
            dim: self.dim,
            matrices: self.matrices.iter().map(|m| m.transpose()).collect(),
        }
    }

    /// The tuple `(Q⁻¹ A_j Q)_j` for an orthogonal `Q`.
    pub fn conjugate_orthogonal(&self, q: &Matrix) -> MatrixTuple {
        MatrixTuple {
            dim: self.dim,
            matrices: self
                .matrices
                .iter()
                .map(|m| q.transpose() * m * q)
                .collect(),
        }
    }

    /// `(A_1^{∧k}, …, A_N^{∧k})`.
    pub fn exterior(&self, k: usize) -> Result<MatrixTuple> {
        let ms = self
            .matrices
            .iter()
            .map(|m| linalg::exterior_power(m, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(MatrixTuple {
            dim: ms[0].nrows(),
            matrices: ms,
        })
    }

    /// The tuple with the map at `index` deleted.
    pub fn without(&self, index: usize) -> Result<MatrixTuple> {
        if self.len() < 2 || index >= self.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot delete map {index} from a tuple of {}",
                self.len()
            )));
        }
        let mut matrices = self.matrices.clone();
        matrices.remove(index);
        Ok(MatrixTuple {
            dim: self.dim,
            matrices,
        })
    }

    /// Largest singular value over the generators.
    pub fn max_norm(&self) -> f64 {
        self.matrices
            .iter()
            .map(|m| singular_values_rect(m)[0])
            .fold(0.0, f64::max)
    }

    pub fn is_contractive(&self) -> bool {
        self.max_norm() < 1.0
    }

    pub(crate) fn from_parts_unchecked(dim: usize, matrices: Vec<Matrix>) -> MatrixTuple {
        MatrixTuple { dim, matrices }
    }
}

/// A finite word over `{0, …, N−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(symbols: Vec<usize>) -> Word {
        Word(symbols)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// The word `self` repeated `times` times.
    pub fn power(&self, times: usize) -> Word {
        Word(self.0.repeat(times))
    }

    /// Decode a lexicographic index at length `len` (first symbol most significant).
    pub fn from_index(mut index: usize, len: usize, alphabet: usize) -> Word {
        let mut v = vec![0; len];
        for slot in v.iter_mut().rev() {
            *slot = index % alphabet;
            index /= alphabet;
        }
        Word(v)
    }

    pub fn index(&self, alphabet: usize) -> usize {
        self.0.iter().fold(0, |acc, &s| acc * alphabet + s)
    }

    /// Every word of length exactly `len`, in lexicographic order.
    pub fn all(len: usize, alphabet: usize) -> Vec<Word> {
        let count = alphabet.pow(len as u32);
        (0..count).map(|i| Word::from_index(i, len, alphabet)).collect()
    }

    /// Every word of length `1..=max_len`, shortest first.
    pub fn all_up_to(max_len: usize, alphabet: usize) -> Vec<Word> {
        (1..=max_len).flat_map(|l| Word::all(l, alphabet)).collect()
    }

    pub(crate) fn check(&self, alphabet: usize) -> Result<()> {
        match self.0.iter().find(|&&s| s >= alphabet) {
            Some(&symbol) => Err(Error::SymbolOutOfRange { symbol, alphabet }),
            None => Ok(()),
        }
    }
}

impl std::fmt::Display for Word {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A matrix product kept as `matrix · exp(log_scale)` with `‖matrix‖ = 1`,
/// together with the logarithms of its singular values.
#[derive(Debug, Clone)]
pub struct ScaledProduct {
    matrix: Matrix,
    log_scale: f64,
    log_sv: Vec<f64>,
}

impl ScaledProduct {
    pub fn identity(dim: usize) -> ScaledProduct {
        ScaledProduct {
            matrix: Matrix::identity(dim, dim),
            log_scale: 0.0,
            log_sv: vec![0.0; dim],
        }
    }

    pub fn from_matrix(m: Matrix) -> ScaledProduct {
        let sv = singular_values_rect(&m);
        Self::normalized(m, 0.0, sv)
    }

    fn normalized(mut matrix: Matrix, log_scale: f64, sv: Vec<f64>) -> ScaledProduct {
        let top = sv.first().copied().unwrap_or(0.0);
        if top > 0.0 && top.is_finite() {
            matrix /= top;
            let log_top = top.ln();
            let log_sv = sv.iter().map(|v| v.ln() + log_scale).collect();
            ScaledProduct {
                matrix,
                log_scale: log_scale + log_top,
                log_sv,
            }
        } else {
            let log_sv = sv.iter().map(|v| v.ln() + log_scale).collect();
            ScaledProduct {
                matrix,
                log_scale,
                log_sv,
            }
        }
    }

    /// `a · self`.
    pub fn left_mul(&self, a: &Matrix) -> ScaledProduct {
        let m = a * &self.matrix;
        let sv = singular_values_rect(&m);
        Self::normalized(m, self.log_scale, sv)
    }

    /// The product of the word `self` followed by the word `next`,
    /// i.e. `next · self`.
    pub fn then(&self, next: &ScaledProduct) -> ScaledProduct {
        let m = &next.matrix * &self.matrix;
        let sv = singular_values_rect(&m);
        Self::normalized(m, self.log_scale + next.log_scale, sv)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Natural logs of the singular values of the represented product.
    pub fn log_singular_values(&self) -> &[f64] {
        &self.log_sv
    }

    pub fn log_norm(&self) -> f64 {
        self.log_sv[0]
    }

    pub fn log_min_singular_value(&self) -> f64 {
        *self.log_sv.last().expect("nonempty product")
    }

    /// Explicit product; overflows for long words.
    pub fn reconstruct(&self) -> Matrix {
        &self.matrix * self.log_scale.exp()
    }

    /// `log ‖P|_W‖` for the subspace with orthonormal basis `basis`.
    pub fn log_restricted_norm(&self, basis: &Matrix) -> f64 {
        let sv = singular_values_rect(&(&self.matrix * basis));
        sv[0].ln() + self.log_scale
    }

    /// Log of the smallest singular value of `P|_W`.
    pub fn log_restricted_min(&self, basis: &Matrix) -> f64 {
        let sv = singular_values_rect(&(&self.matrix * basis));
        sv.last().copied().unwrap_or(0.0).ln() + self.log_scale
    }
}

/// `log φ^s` from the logarithms of descending singular values.
pub fn log_svf_from_log_sv(log_sv: &[f64], s: f64) -> f64 {
    let d = log_sv.len();
    if s <= 0.0 {
        return 0.0;
    }
    if s >= d as f64 {
        return s / d as f64 * log_sv.iter().sum::<f64>();
    }
    let k = s.floor() as usize;
    let frac = s - k as f64;
    let mut acc: f64 = log_sv[..k].iter().sum();
    if frac > 0.0 {
        acc += frac * log_sv[k];
    }
    acc
}

/// `log ψ^s`: the same interpolation over the smallest singular values.
pub fn log_svf_dual_from_log_sv(log_sv: &[f64], s: f64) -> f64 {
    let d = log_sv.len();
    if s <= 0.0 {
        return 0.0;
    }
    if s >= d as f64 {
        return log_svf_from_log_sv(log_sv, s);
    }
    let k = s.floor() as usize;
    let frac = s - k as f64;
    let mut acc: f64 = log_sv[d - k..].iter().sum();
    if frac > 0.0 {
        acc += frac * log_sv[d - k - 1];
    }
    acc
}

fn checked_log_sv(m: &Matrix) -> Result<Vec<f64>> {
    let profile = linalg::singular_values(m)?;
    let det = m.determinant();
    if det.abs() <= DEFAULT_DET_TOL {
        return Err(Error::Singular { index: 0, det });
    }
    Ok(profile.logs())
}

/// `log φ^s(M)`.
pub fn svf(m: &Matrix, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!("s must be nonnegative, got {s}")));
    }
    Ok(log_svf_from_log_sv(&checked_log_sv(m)?, s))
}

/// `log φ^s(M)` through norms of exterior powers.
pub fn svf_exterior(m: &Matrix, s: f64) -> Result<f64> {
    let d = m.nrows();
    if !(s > 0.0 && s < d as f64) {
        return Err(Error::InvalidParameter(format!(
            "exterior form needs 0 < s < {d}, got {s}"
        )));
    }
    let k = s.floor() as usize;
    let frac = s - k as f64;
    let lower = linalg::operator_norm(&linalg::exterior_power(m, k)?)?.ln();
    if frac == 0.0 {
        return Ok(lower);
    }
    let upper = linalg::operator_norm(&linalg::exterior_power(m, k + 1)?)?.ln();
    Ok((1.0 - frac) * lower + frac * upper)
}

/// `log ψ^s(M)`, the supermultiplicative companion built from the smallest
/// singular values.
pub fn svf_dual(m: &Matrix, s: f64) -> Result<f64> {
    let d = m.nrows();
    if !(s > 0.0 && s < d as f64) {
        return Err(Error::InvalidParameter(format!(
            "dual form needs 0 < s < {d}, got {s}"
        )));
    }
    Ok(log_svf_dual_from_log_sv(&checked_log_sv(m)?, s))
}

/// One factor `‖A^{(i)}_i‖^{β_i}` of a norm-product potential.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub tuple: MatrixTuple,
    pub beta: f64,
}

/// `Φ(i) = ∏_i ‖A^{(i)}_i‖^{β_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormProduct {
    factors: Vec<Factor>,
}

impl NormProduct {
    pub fn new(factors: Vec<Factor>) -> Result<NormProduct> {
        let first = factors
            .first()
            .ok_or_else(|| Error::InvalidParameter("norm product needs a factor".into()))?;
        let alphabet = first.tuple.len();
        for f in &factors {
            if f.tuple.len() != alphabet {
                return Err(Error::DimensionMismatch {
                    expected: alphabet,
                    found: f.tuple.len(),
                });
            }
            if !(f.beta > 0.0) || !f.beta.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "exponents must be positive, got {}",
                    f.beta
                )));
            }
        }
        Ok(NormProduct { factors })
    }

    pub fn single(tuple: MatrixTuple) -> NormProduct {
        NormProduct {
            factors: vec![Factor { tuple, beta: 1.0 }],
        }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn alphabet(&self) -> usize {
        self.factors[0].tuple.len()
    }

    /// Product of the factor dimensions, the ergodic equilibrium state bound.
    pub fn dimension_product(&self) -> usize {
        self.factors.iter().map(|f| f.tuple.dim()).product()
    }
}

/// `Φ^j(i) = max over (W_i) in the orbit set of ∏ ‖A^{(i)}_i|_{W_i}‖^{β_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedPotential {
    base: NormProduct,
    orbit: OrbitSet,
}

impl RestrictedPotential {
    pub fn new(base: NormProduct, orbit: OrbitSet) -> Result<RestrictedPotential> {
        if orbit.members().is_empty() {
            return Err(Error::EmptyOrbit);
        }
        for member in orbit.members() {
            if member.len() != base.factors().len() {
                return Err(Error::DimensionMismatch {
                    expected: base.factors().len(),
                    found: member.len(),
                });
            }
            for (w, f) in member.iter().zip(base.factors()) {
                if w.ambient_dim() != f.tuple.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: f.tuple.dim(),
                        found: w.ambient_dim(),
                    });
                }
            }
        }
        Ok(RestrictedPotential { base, orbit })
    }

    pub fn base(&self) -> &NormProduct {
        &self.base
    }

    pub fn orbit(&self) -> &OrbitSet {
        &self.orbit
    }
}

/// A positive, submultiplicative word function.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    /// `φ^s(A_i)`.
    Svf { tuple: MatrixTuple, s: f64 },
    NormProduct(NormProduct),
    Restricted(RestrictedPotential),
}

/// Values at one node of the word tree: the potential and its
/// supermultiplicative lower companion, both as logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeValue {
    pub log_phi: f64,
    pub log_psi: f64,
}

impl PotentialSpec {
    pub fn svf(tuple: MatrixTuple, s: f64) -> Result<PotentialSpec> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("s must be positive, got {s}")));
        }
        Ok(PotentialSpec::Svf { tuple, s })
    }

    pub fn alphabet(&self) -> usize {
        match self {
            PotentialSpec::Svf { tuple, .. } => tuple.len(),
            PotentialSpec::NormProduct(np) => np.alphabet(),
            PotentialSpec::Restricted(r) => r.base.alphabet(),
        }
    }

    /// The tuples whose products are carried along the word tree.
    pub fn factor_tuples(&self) -> Vec<&MatrixTuple> {
        match self {
            PotentialSpec::Svf { tuple, .. } => vec![tuple],
            PotentialSpec::NormProduct(np) => np.factors.iter().map(|f| &f.tuple).collect(),
            PotentialSpec::Restricted(r) => r.base.factors.iter().map(|f| &f.tuple).collect(),
        }
    }

    /// Evaluate at a node given the products `A^{(i)}_i` of every factor tuple.
    pub fn node_value(&self, products: &[ScaledProduct]) -> NodeValue {
        match self {
            PotentialSpec::Svf { s, .. } => {
                let sv = products[0].log_singular_values();
                NodeValue {
                    log_phi: log_svf_from_log_sv(sv, *s),
                    log_psi: log_svf_dual_from_log_sv(sv, *s),
                }
            }
            PotentialSpec::NormProduct(np) => {
                let mut phi = 0.0;
                let mut psi = 0.0;
                for (f, p) in np.factors.iter().zip(products) {
                    phi += f.beta * p.log_norm();
                    psi += f.beta * p.log_min_singular_value();
                }
                NodeValue {
                    log_phi: phi,
                    log_psi: psi,
                }
            }
            PotentialSpec::Restricted(r) => {
                let mut phi = f64::NEG_INFINITY;
                let mut psi = f64::INFINITY;
                for member in r.orbit.members() {
                    let mut up = 0.0;
                    let mut low = 0.0;
                    for ((f, p), w) in r.base.factors.iter().zip(products).zip(member) {
                        up += f.beta * p.log_restricted_norm(w.basis());
                        low += f.beta * p.log_restricted_min(w.basis());
                    }
                    phi = phi.max(up);
                    psi = psi.min(low);
                }
                NodeValue {
                    log_phi: phi,
                    log_psi: psi,
                }
            }
        }
    }

    pub(crate) fn products_along(&self, word: &Word) -> Result<Vec<ScaledProduct>> {
        if word.is_empty() {
            return Err(Error::EmptyWord);
        }
        word.check(self.alphabet())?;
        Ok(self
            .factor_tuples()
            .into_iter()
            .map(|t| {
                word.symbols()
                    .iter()
                    .fold(ScaledProduct::identity(t.dim()), |acc, &s| acc.left_mul(t.get(s)))
            })
            .collect())
    }

    /// `log Φ(i)` for a nonempty word.
    pub fn eval(&self, word: &Word) -> Result<f64> {
        Ok(self.node_value(&self.products_along(word)?).log_phi)
    }

    /// Both the potential and its lower companion at a word.
    pub fn eval_node(&self, word: &Word) -> Result<NodeValue> {
        Ok(self.node_value(&self.products_along(word)?))
    }

    /// Rewrite as a norm product: `φ^s` becomes the exterior-power factors
    /// `‖A^{∧⌊s⌋}‖^{⌈s⌉−s} ‖A^{∧⌈s⌉}‖^{s−⌊s⌋}`, or `|det A|^{s/d}` for `s ≥ d`.
    pub fn to_norm_product(&self) -> Result<NormProduct> {
        match self {
            PotentialSpec::NormProduct(np) => Ok(np.clone()),
            PotentialSpec::Restricted(r) => Ok(r.base.clone()),
            PotentialSpec::Svf { tuple, s } => {
                let d = tuple.dim();
                if *s >= d as f64 {
                    let dets: Vec<Matrix> = tuple
                        .matrices()
                        .iter()
                        .map(|m| Matrix::from_element(1, 1, m.determinant()))
                        .collect();
                    let t = MatrixTuple::from_parts_unchecked(1, dets);
                    return NormProduct::new(vec![Factor {
                        tuple: t,
                        beta: s / d as f64,
                    }]);
                }
                let k = s.floor() as usize;
                let frac = s - k as f64;
                if frac == 0.0 {
                    return NormProduct::new(vec![Factor {
                        tuple: tuple.exterior(k)?,
                        beta: 1.0,
                    }]);
                }
                let mut factors = Vec::new();
                if k > 0 {
                    factors.push(Factor {
                        tuple: tuple.exterior(k)?,
                        beta: 1.0 - frac,
                    });
                }
                factors.push(Factor {
                    tuple: tuple.exterior(k + 1)?,
                    beta: frac,
                });
                NormProduct::new(factors)
            }
        }
    }
}

/// Streaming log-sum-exp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSum {
    max: f64,
    acc: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }
}

impl LogSum {
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.acc += (x - self.max).exp();
        } else {
            self.acc = self.acc * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(&mut self, other: &LogSum) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.acc += other.acc * (other.max - self.max).exp();
        } else {
            self.acc = self.acc * (self.max - other.max).exp() + other.acc;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

/// One visited node of the word tree.
pub struct WordNode<'a> {
    /// The word, symbols in order.
    pub word: &'a [usize],
    /// Lexicographic index of the word among words of the same length.
    pub index: usize,
    /// `A^{(i)}_word` for every factor tuple.
    pub products: &'a [ScaledProduct],
}

/// Accumulator driven by [`fold_words`]. `merge` receives partial results of
/// later subtrees (higher first symbols) in increasing order.
pub trait WordAccumulator: Send + Sync + Clone {
    fn visit(&mut self, node: &WordNode<'_>);
    fn merge(&mut self, later: Self);
}

/// Depth-first visit of every word of length `1..=depth`, reusing the parent
/// product so each node costs one left-multiplication per factor tuple.
///
/// The tree is split by first symbol into independent subtrees that run in
/// parallel; partial results are merged in symbol order, so the result does
/// not depend on scheduling. Returns the accumulator and the number of
/// matrix multiplications performed.
pub fn fold_words<A: WordAccumulator>(
    tuples: &[&MatrixTuple],
    depth: usize,
    config: &Config,
    init: A,
) -> Result<(A, u64)> {
    let alphabet = tuples
        .first()
        .map(|t| t.len())
        .ok_or_else(|| Error::InvalidParameter("no factor tuples".into()))?;
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    if tuples.iter().any(|t| t.len() != alphabet) {
        return Err(Error::InvalidParameter(
            "factor tuples must share the alphabet".into(),
        ));
    }
    config.check_depth(alphabet, depth)?;

    let parts: Vec<(A, u64)> = (0..alphabet)
        .into_par_iter()
        .map(|first| {
            let mut acc = init.clone();
            let mut count = 0u64;
            let mut word = Vec::with_capacity(depth);
            let roots: Vec<ScaledProduct> =
                tuples.iter().map(|t| ScaledProduct::identity(t.dim())).collect();
            visit_subtree(
                tuples, depth, alphabet, first, 0, &roots, &mut word, &mut acc, &mut count,
            );
            (acc, count)
        })
        .collect();

    let mut iter = parts.into_iter();
    let (mut acc, mut count) = iter.next().expect("alphabet is nonempty");
    for (part, c) in iter {
        acc.merge(part);
        count += c;
    }
    Ok((acc, count))
}

#[allow(clippy::too_many_arguments)]
fn visit_subtree<A: WordAccumulator>(
    tuples: &[&MatrixTuple],
    depth: usize,
    alphabet: usize,
    symbol: usize,
    parent_index: usize,
    parent: &[ScaledProduct],
    word: &mut Vec<usize>,
    acc: &mut A,
    count: &mut u64,
) {
    let products: Vec<ScaledProduct> = tuples
        .iter()
        .zip(parent)
        .map(|(t, p)| p.left_mul(t.get(symbol)))
        .collect();
    *count += tuples.len() as u64;
    word.push(symbol);
    let index = parent_index * alphabet + symbol;
    acc.visit(&WordNode {
        word,
        index,
        products: &products,
    });
    if word.len() < depth {
        for next in 0..alphabet {
            visit_subtree(
                tuples, depth, alphabet, next, index, &products, word, acc, count,
            );
        }
    }
    word.pop();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{gaussian_matrix, random_orthogonal, rng_from_seed};
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&nalgebra::DVector::from_vec(v.to_vec()))
    }

    #[test]
    fn svf_examples() {
        let m = diag(&[3.0, 2.0, 1.0]);
        let v = svf(&m, 1.5).unwrap();
        assert!((v - (3.0 * 2f64.sqrt()).ln()).abs() < 1e-14);

        let r: f64 = 0.4;
        let m = Matrix::identity(3, 3) * r;
        for s in [0.3, 1.0, 2.7, 3.0] {
            assert!((svf(&m, s).unwrap() - s * r.ln()).abs() < 1e-14);
        }
        assert_eq!(svf(&m, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn svf_branches_agree_at_dimension() {
        let mut rng = rng_from_seed(11);
        let m = gaussian_matrix(&mut rng, 3, 3);
        let logdet = m.determinant().abs().ln();
        assert!((svf(&m, 3.0).unwrap() - logdet).abs() < 1e-12);
        assert!((svf(&m, 4.0).unwrap() - 4.0 / 3.0 * logdet).abs() < 1e-12);
        // continuity from below at s = d and at an integer
        assert!((svf(&m, 3.0 - 1e-9).unwrap() - logdet).abs() < 1e-7);
        assert!((svf(&m, 2.0 - 1e-9).unwrap() - svf(&m, 2.0).unwrap()).abs() < 1e-7);
        assert!((svf(&m, 2.0 + 1e-9).unwrap() - svf(&m, 2.0).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn svf_rejects_singular() {
        let m = diag(&[1.0, 0.0]);
        assert!(matches!(svf(&m, 1.0), Err(Error::Singular { .. })));
    }

    #[test]
    fn exterior_form_examples() {
        let mut rng = rng_from_seed(12);
        let m = gaussian_matrix(&mut rng, 4, 4);
        let n2 = linalg::operator_norm(&linalg::exterior_power(&m, 2).unwrap()).unwrap();
        assert!((svf_exterior(&m, 2.0).unwrap() - n2.ln()).abs() < 1e-12);

        let m = gaussian_matrix(&mut rng, 3, 3);
        let a = svf_exterior(&m, 1.5).unwrap();
        let b = svf(&m, 1.5).unwrap();
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));

        let q = random_orthogonal(&mut rng, 3);
        for s in [0.5, 1.0, 2.3] {
            assert!(svf_exterior(&q, s).unwrap().abs() < 1e-12);
        }
        assert!(svf_exterior(&q, 3.0).is_err());
        assert!(svf_exterior(&q, 0.0).is_err());
    }

    #[test]
    fn dual_examples() {
        assert!(svf_dual(&diag(&[3.0, 2.0, 1.0]), 1.0).unwrap().abs() < 1e-15);
        let r: f64 = 0.3;
        let m = Matrix::identity(3, 3) * r;
        assert!((svf_dual(&m, 1.7).unwrap() - 1.7 * r.ln()).abs() < 1e-14);
        assert!(matches!(
            svf_dual(&diag(&[1.0, 0.0]), 1.0),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn dual_is_supermultiplicative_and_below_svf() {
        let mut rng = rng_from_seed(13);
        for _ in 0..200 {
            let a = gaussian_matrix(&mut rng, 3, 3);
            let b = gaussian_matrix(&mut rng, 3, 3);
            for s in [0.4, 1.0, 1.5, 2.9] {
                let ab = svf_dual(&(&a * &b), s).unwrap();
                assert!(ab >= svf_dual(&a, s).unwrap() + svf_dual(&b, s).unwrap() - 1e-9);
                assert!(svf_dual(&a, s).unwrap() <= svf(&a, s).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn monotone_in_s_for_contractions() {
        let m = diag(&[0.9, 0.5, 0.2]);
        let mut last = f64::INFINITY;
        for i in 0..=50 {
            let v = svf(&m, i as f64 * 0.1).unwrap();
            assert!(v <= last + 1e-15);
            last = v;
        }
    }

    #[test]
    fn word_product_convention() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let t = MatrixTuple::new(vec![a.clone(), b.clone()]).unwrap();
        // word (0, 1) is A_1 A_0
        let p = t.product(&Word::new(vec![0, 1])).unwrap();
        assert_eq!(p, &b * &a);
        let ij = Word::new(vec![0]).concat(&Word::new(vec![1, 1]));
        assert_eq!(t.product(&ij).unwrap(), &b * &b * &a);
    }

    #[test]
    fn tuple_validation() {
        let z = diag(&[1.0, 0.0]);
        assert!(matches!(
            MatrixTuple::new(vec![Matrix::identity(2, 2), z]),
            Err(Error::Singular { index: 1, .. })
        ));
        assert!(matches!(
            MatrixTuple::new(vec![Matrix::identity(2, 2), Matrix::identity(3, 3)]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn eval_matches_direct_products() {
        let mut rng = rng_from_seed(14);
        let t = MatrixTuple::new(vec![
            gaussian_matrix(&mut rng, 3, 3),
            gaussian_matrix(&mut rng, 3, 3),
        ])
        .unwrap();
        let spec = PotentialSpec::NormProduct(NormProduct::single(t.clone()));
        for n in 1..=6 {
            for w in Word::all(n, 2) {
                let direct = linalg::operator_norm(&t.product(&w).unwrap()).unwrap().ln();
                let v = spec.eval(&w).unwrap();
                assert!((v - direct).abs() < 1e-10 * direct.abs().max(1.0));
            }
        }
        let svf_spec = PotentialSpec::svf(t.clone(), 1.3).unwrap();
        let w = Word::new(vec![1]);
        assert!((svf_spec.eval(&w).unwrap() - svf(t.get(1), 1.3).unwrap()).abs() < 1e-13);
        assert_eq!(spec.eval(&Word::new(vec![])), Err(Error::EmptyWord));
    }

    #[test]
    fn scaled_product_reconstruction() {
        let mut rng = rng_from_seed(15);
        for d in 1..=4 {
            let ms: Vec<Matrix> = (0..3).map(|_| gaussian_matrix(&mut rng, d, d)).collect();
            let mut sp = ScaledProduct::identity(d);
            let mut direct = Matrix::identity(d, d);
            for n in 1..=12 {
                let m = &ms[n % 3];
                sp = sp.left_mul(m);
                direct = m * direct;
                let err = (sp.reconstruct() - &direct).norm() / direct.norm();
                assert!(err <= 1e-10 * n as f64, "d={d} n={n} err={err}");
                let norm = linalg::operator_norm(sp.matrix()).unwrap();
                assert!((0.5..=2.0).contains(&norm));
            }
        }
    }

    #[test]
    fn fold_visits_every_word_in_order() {
        #[derive(Clone, Default)]
        struct Collect(Vec<Vec<usize>>);
        impl WordAccumulator for Collect {
            fn visit(&mut self, node: &WordNode<'_>) {
                if node.word.len() == 3 {
                    self.0.push(node.word.to_vec());
                }
            }
            fn merge(&mut self, later: Self) {
                self.0.extend(later.0);
            }
        }
        let t = MatrixTuple::new(vec![Matrix::identity(2, 2), Matrix::identity(2, 2) * 2.0])
            .unwrap();
        let (c, mults) = fold_words(&[&t], 3, &Config::default(), Collect::default()).unwrap();
        let expected: Vec<Vec<usize>> = Word::all(3, 2).into_iter().map(|w| w.0).collect();
        assert_eq!(c.0, expected);
        // N^{n+1} − N over N − 1 nodes, one multiplication per factor
        assert_eq!(mults, (2u64.pow(4) - 2) / (2 - 1));

        let (_, mults) = fold_words(&[&t, &t], 3, &Config::default(), Collect::default()).unwrap();
        assert_eq!(mults, 2 * 14);
    }

    #[test]
    fn fold_budget_is_enforced() {
        #[derive(Clone, Default, Debug)]
        struct Nothing;
        impl WordAccumulator for Nothing {
            fn visit(&mut self, _: &WordNode<'_>) {}
            fn merge(&mut self, _: Self) {}
        }
        let t = MatrixTuple::new(vec![Matrix::identity(1, 1); 4]).unwrap();
        let err = fold_words(&[&t], 9, &Config::default(), Nothing).unwrap_err();
        assert_eq!(
            err,
            Error::BudgetExceeded {
                requested: 9,
                max_depth: 8
            }
        );
    }

    #[test]
    fn log_sum_merges() {
        let xs = [-1000.0, 3.0, 2.5, -2.0, 700.0, 699.0];
        let mut all = LogSum::default();
        for x in xs {
            all.add(x);
        }
        let mut a = LogSum::default();
        let mut b = LogSum::default();
        for x in &xs[..3] {
            a.add(*x);
        }
        for x in &xs[3..] {
            b.add(*x);
        }
        a.merge(&b);
        assert!((a.value() - all.value()).abs() < 1e-12);
        assert!((all.value() - (700.0 + (1.0 + (-1f64).exp()).ln())).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn norm_product_is_submultiplicative(
            seed in 0u64..10_000,
            i in proptest::collection::vec(0usize..3, 1..5),
            j in proptest::collection::vec(0usize..3, 1..5),
            beta in 0.2f64..2.0,
        ) {
            let mut rng = rng_from_seed(seed);
            let t1 = MatrixTuple::new((0..3).map(|_| gaussian_matrix(&mut rng, 3, 3)).collect()).unwrap();
            let t2 = MatrixTuple::new((0..3).map(|_| gaussian_matrix(&mut rng, 2, 2)).collect()).unwrap();
            let spec = PotentialSpec::NormProduct(NormProduct::new(vec![
                Factor { tuple: t1.clone(), beta },
                Factor { tuple: t2, beta: 1.0 },
            ]).unwrap());
            let (wi, wj) = (Word::new(i), Word::new(j));
            let lhs = spec.eval(&wi.concat(&wj)).unwrap();
            prop_assert!(lhs <= spec.eval(&wi).unwrap() + spec.eval(&wj).unwrap() + 1e-9);

            let s = beta * 1.4;
            let svf_spec = PotentialSpec::svf(t1, s).unwrap();
            let node = svf_spec.eval_node(&wi.concat(&wj)).unwrap();
            let a = svf_spec.eval_node(&wi).unwrap();
            let b = svf_spec.eval_node(&wj).unwrap();
            prop_assert!(node.log_phi <= a.log_phi + b.log_phi + 1e-9);
            prop_assert!(node.log_psi >= a.log_psi + b.log_psi - 1e-9);
            prop_assert!(node.log_psi <= node.log_phi + 1e-12);
        }
    }
}
