//! Invariant subspaces, block triangularization, finite subspace orbits and
//! the restricted potentials built on them.
//!
//! The invariant-subspace search is randomized in the MeatAxe style: a random
//! element of the algebra generated by the tuple has an eigenvector (or a real
//! invariant plane) inside every proper invariant subspace, so closing such a
//! seed under the generators finds a proper invariant subspace whenever one
//! exists and the random element separates it. Failure to find one is
//! reported as "probably irreducible", never as a proof.

use rand::Rng;
use rayon::prelude::*;

use crate::config::Config;
use crate::linalg::{
    self, columns_to_matrix, eigenvalues, least_squares_slope, null_space, orthogonal_complement,
    orthonormal_columns, orthonormalize, singular_values_rect, smallest_singular_vectors,
    subspace_distance, Matrix, Vector,
};
use crate::potentials::{
    fold_words, MatrixTuple, NormProduct, PotentialSpec, RestrictedPotential, ScaledProduct,
    Word, WordAccumulator, WordNode,
};
use crate::random::{gaussian, stream};
use crate::{Error, Result};

/// A linear subspace held as an orthonormal column basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: Matrix,
}

impl Subspace {
    /// Span of the columns of `m`; fails if the span is zero.
    pub fn from_columns(m: &Matrix, tol: f64) -> Result<Subspace> {
        let basis = orthonormal_columns(m, tol);
        if basis.ncols() == 0 {
            return Err(Error::InvalidParameter("subspace spans only zero".into()));
        }
        Ok(Subspace { basis })
    }

    pub fn from_vectors(vectors: &[Vector], tol: f64) -> Result<Subspace> {
        let d = vectors
            .first()
            .ok_or_else(|| Error::InvalidParameter("no spanning vectors".into()))?
            .len();
        Self::from_columns(&columns_to_matrix(d, vectors), tol)
    }

    fn from_orthonormal(basis: Matrix) -> Subspace {
        Subspace { basis }
    }

    pub fn full(d: usize) -> Subspace {
        Subspace {
            basis: Matrix::identity(d, d),
        }
    }

    /// Span of the standard basis vectors with the given indices.
    pub fn coordinate(d: usize, axes: &[usize]) -> Subspace {
        let mut basis = Matrix::zeros(d, axes.len());
        for (j, &a) in axes.iter().enumerate() {
            basis[(a, j)] = 1.0;
        }
        Subspace { basis }
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn projector(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }

    /// Sine of the largest principal angle; 1 for different dimensions.
    pub fn distance(&self, other: &Subspace) -> f64 {
        subspace_distance(&self.basis, &other.basis)
    }

    /// `A W`, or `None` if `A` collapses the subspace.
    pub fn image(&self, a: &Matrix) -> Option<Subspace> {
        let basis = orthonormal_columns(&(a * &self.basis), 1e-10);
        (basis.ncols() == self.dim()).then_some(Subspace { basis })
    }

    pub fn complement(&self) -> Option<Subspace> {
        let c = orthogonal_complement(&self.basis, 1e-10);
        (c.ncols() > 0).then_some(Subspace { basis: c })
    }

    /// `max_j ‖(I − P_W) A_j P_W‖ / ‖A_j‖`.
    pub fn invariance_defect(&self, tuple: &MatrixTuple) -> f64 {
        let p = self.projector();
        tuple
            .matrices()
            .iter()
            .map(|a| {
                let aw = a * &self.basis;
                let residual = &aw - &p * &aw;
                singular_values_rect(&residual)[0] / singular_values_rect(a)[0]
            })
            .fold(0.0, f64::max)
    }

    pub fn is_invariant(&self, tuple: &MatrixTuple, tol: f64) -> bool {
        self.invariance_defect(tuple) <= tol
    }
}

fn flatten(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Orthonormal basis (Frobenius inner product) of the unital algebra
/// generated by a tuple.
#[derive(Debug, Clone)]
pub struct AlgebraClosure {
    basis: Vec<Matrix>,
}

impl AlgebraClosure {
    pub fn basis(&self) -> &[Matrix] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// A Gaussian random element of the algebra.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let d = self.basis[0].nrows();
        let mut r = Matrix::zeros(d, d);
        for b in &self.basis {
            r += b * gaussian(rng);
        }
        r
    }
}

/// Span of the identity and every product of generators, grown by left
/// multiplication until it stops growing.
pub fn algebra_closure(tuple: &MatrixTuple, tol: f64) -> AlgebraClosure {
    let d = tuple.dim();
    let mut flat: Vec<Vector> = Vec::new();
    let mut basis: Vec<Matrix> = Vec::new();
    let push = |m: Matrix, flat: &mut Vec<Vector>, basis: &mut Vec<Matrix>| {
        let v = flatten(&m);
        let norm = v.norm();
        if norm == 0.0 {
            return;
        }
        let mut w = v;
        for _ in 0..2 {
            for q in flat.iter() {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let r = w.norm();
        if r > tol * norm {
            let w = w / r;
            basis.push(Matrix::from_column_slice(d, d, w.as_slice()));
            flat.push(w);
        }
    };
    push(Matrix::identity(d, d), &mut flat, &mut basis);
    let mut i = 0;
    while i < basis.len() && basis.len() < d * d {
        let b = basis[i].clone();
        for a in tuple.matrices() {
            push(a * &b, &mut flat, &mut basis);
        }
        i += 1;
    }
    AlgebraClosure { basis }
}

/// Outcome of the invariant-subspace search.
#[derive(Debug, Clone, PartialEq)]
pub enum InvariantSearch {
    Found(Subspace),
    /// No witness after this many trials; not a proof of irreducibility.
    NotFound { trials: usize },
}

/// Smallest subspace containing `v` and invariant under the tuple.
fn cyclic_closure(tuple: &MatrixTuple, v: &Vector, tol: f64) -> Matrix {
    let d = tuple.dim();
    let mut basis = orthonormalize(std::slice::from_ref(v), tol);
    let mut i = 0;
    while i < basis.len() && basis.len() < d {
        let q = basis[i].clone();
        for a in tuple.matrices() {
            let w = a * &q;
            let norm = w.norm();
            let mut r = w;
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&r);
                    r.axpy(-c, b, 1.0);
                }
            }
            let res = r.norm();
            if res > tol * norm {
                basis.push(r / res);
                if basis.len() == d {
                    break;
                }
            }
        }
        i += 1;
    }
    columns_to_matrix(d, &basis)
}

/// Seed vectors: one per real eigenvalue and one per complex-conjugate pair
/// of `r`, drawn from the matching (real) null space.
fn eigen_seeds(r: &Matrix) -> Vec<Vector> {
    let d = r.nrows();
    let eig = match eigenvalues(r) {
        Ok(e) => e,
        Err(_) => return Vec::new(),
    };
    let scale = eig.iter().map(|(a, b)| a.hypot(*b)).fold(1.0, f64::max);
    let mut seeds = Vec::new();
    let mut seen: Vec<(f64, f64)> = Vec::new();
    for &(re, im) in &eig {
        if im < -1e-9 * scale {
            continue;
        }
        if seen
            .iter()
            .any(|(a, b)| (a - re).hypot(b - im) <= 1e-9 * scale)
        {
            continue;
        }
        seen.push((re, im));
        let id = Matrix::identity(d, d);
        let m = if im.abs() <= 1e-9 * scale {
            r - &id * re
        } else {
            r * r - r * (2.0 * re) + &id * (re * re + im * im)
        };
        seeds.push(smallest_singular_vectors(&m, 1).column(0).into_owned());
    }
    seeds
}

/// Search one tuple (or its transpose) with a single random algebra element.
fn trial_candidates(
    tuple: &MatrixTuple,
    algebra: &AlgebraClosure,
    transposed: bool,
    closure_tol: f64,
    rng: &mut impl Rng,
) -> Vec<Subspace> {
    let d = tuple.dim();
    let r = algebra.random_element(rng);
    let mut out = Vec::new();
    for v in eigen_seeds(&r) {
        let w = cyclic_closure(tuple, &v, closure_tol);
        if w.ncols() == 0 || w.ncols() == d {
            continue;
        }
        let w = if transposed {
            orthogonal_complement(&w, 1e-10)
        } else {
            w
        };
        if w.ncols() > 0 && w.ncols() < d {
            out.push(Subspace::from_orthonormal(w));
        }
    }
    out
}

/// Randomized search for a proper nonzero invariant subspace.
///
/// Uses `config.invariance_tol`, `config.trials` and `config.seed`. A
/// returned subspace always satisfies `‖(I − P_W) A_j P_W‖ ≤ tol · ‖A_j‖`.
pub fn find_invariant_subspace(tuple: &MatrixTuple, config: &Config) -> InvariantSearch {
    let d = tuple.dim();
    let tol = config.invariance_tol;
    if d < 2 {
        return InvariantSearch::NotFound { trials: 0 };
    }
    let algebra = algebra_closure(tuple, config.rank_tol);
    if algebra.dim() == d * d {
        // the full matrix algebra leaves no proper subspace invariant
        return InvariantSearch::NotFound { trials: 0 };
    }
    let transposed = tuple.transpose();
    let algebra_t = AlgebraClosure {
        basis: algebra.basis.iter().map(|b| b.transpose()).collect(),
    };
    let closure_tol = tol / d as f64;
    for t in 0..config.trials {
        let mut rng = stream(config.seed, t as u64);
        let mut found: Vec<Subspace> = trial_candidates(tuple, &algebra, false, closure_tol, &mut rng);
        found.extend(trial_candidates(
            &transposed,
            &algebra_t,
            true,
            closure_tol,
            &mut rng,
        ));
        found.retain(|w| w.is_invariant(tuple, tol));
        if let Some(best) = found.into_iter().min_by_key(|w| w.dim()) {
            return InvariantSearch::Found(best);
        }
    }
    InvariantSearch::NotFound {
        trials: config.trials,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Irreducibility {
    /// A checkable proper invariant subspace.
    Reducible(Subspace),
    ProbablyIrreducible { trials: usize, algebra_dim: usize },
}

impl Irreducibility {
    pub fn is_reducible(&self) -> bool {
        matches!(self, Irreducibility::Reducible(_))
    }
}

pub fn is_irreducible(tuple: &MatrixTuple, config: &Config) -> Irreducibility {
    match find_invariant_subspace(tuple, config) {
        InvariantSearch::Found(w) => Irreducibility::Reducible(w),
        InvariantSearch::NotFound { trials } => Irreducibility::ProbablyIrreducible {
            trials,
            algebra_dim: algebra_closure(tuple, config.rank_tol).dim(),
        },
    }
}

/// An orthogonal change of basis `Q` with `Qᵀ A_j Q` block upper triangular
/// and (probably) irreducible diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecomposition {
    basis_change: Matrix,
    block_dims: Vec<usize>,
    blocks: Vec<MatrixTuple>,
}

fn extract_block(m: &Matrix, offset: usize, size: usize) -> Matrix {
    m.view((offset, offset), (size, size)).into_owned()
}

impl BlockDecomposition {
    /// Rebuild from a basis change and block sizes, checking orthogonality
    /// and the triangular shape against `tuple`.
    pub fn from_parts(
        tuple: &MatrixTuple,
        basis_change: Matrix,
        block_dims: Vec<usize>,
        tol: f64,
    ) -> Result<BlockDecomposition> {
        let d = tuple.dim();
        if basis_change.nrows() != d || basis_change.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: basis_change.nrows(),
            });
        }
        if block_dims.iter().sum::<usize>() != d || block_dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "block sizes {block_dims:?} do not partition {d}"
            )));
        }
        let gram = basis_change.transpose() * &basis_change - Matrix::identity(d, d);
        if gram.amax() > 1e-9 {
            return Err(Error::InvalidParameter("basis change is not orthogonal".into()));
        }
        let conj = tuple.conjugate_orthogonal(&basis_change);
        let mut blocks = Vec::new();
        let mut offset = 0;
        for &size in &block_dims {
            blocks.push(MatrixTuple::from_parts_unchecked(
                size,
                conj.matrices()
                    .iter()
                    .map(|m| extract_block(m, offset, size))
                    .collect(),
            ));
            offset += size;
        }
        let dec = BlockDecomposition {
            basis_change,
            block_dims,
            blocks,
        };
        let defect = dec.lower_defect(tuple);
        if defect > tol {
            return Err(Error::InvalidParameter(format!(
                "not block triangular: defect {defect:e}"
            )));
        }
        Ok(dec)
    }

    pub fn basis_change(&self) -> &Matrix {
        &self.basis_change
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    /// The diagonal-block tuples `(A_1^{(r)}, …, A_N^{(r)})`, one per block.
    pub fn blocks(&self) -> &[MatrixTuple] {
        &self.blocks
    }

    /// Diagonal block `r` of generator `j`.
    pub fn block(&self, j: usize, r: usize) -> &Matrix {
        self.blocks[r].get(j)
    }

    pub fn offsets(&self) -> Vec<usize> {
        self.block_dims
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect()
    }

    /// Invariant subspace spanned by the first `r + 1` blocks.
    pub fn flag(&self, r: usize) -> Subspace {
        let m: usize = self.block_dims[..=r].iter().sum();
        Subspace::from_orthonormal(self.basis_change.columns(0, m).into_owned())
    }

    /// Largest below-diagonal block norm of `Qᵀ A_j Q`, relative to `‖A_j‖`.
    pub fn lower_defect(&self, tuple: &MatrixTuple) -> f64 {
        let conj = tuple.conjugate_orthogonal(&self.basis_change);
        let offsets = self.offsets();
        let d = tuple.dim();
        let mut worst: f64 = 0.0;
        for (m, a) in conj.matrices().iter().zip(tuple.matrices()) {
            let scale = singular_values_rect(a)[0];
            for (&o, &s) in offsets.iter().zip(&self.block_dims) {
                let below = d - o - s;
                if below == 0 {
                    continue;
                }
                let lower = m.view((o + s, o), (below, s)).into_owned();
                worst = worst.max(singular_values_rect(&lower)[0] / scale);
            }
        }
        worst
    }
}

/// Recursively split off invariant subspaces: the subspace becomes the
/// leading block and the quotient is handled on its orthogonal complement.
pub fn block_triangularize(tuple: &MatrixTuple, config: &Config) -> BlockDecomposition {
    let (q, dims) = triangularize(tuple, config);
    let conj = tuple.conjugate_orthogonal(&q);
    let mut blocks = Vec::new();
    let mut offset = 0;
    for &size in &dims {
        blocks.push(MatrixTuple::from_parts_unchecked(
            size,
            conj.matrices()
                .iter()
                .map(|m| extract_block(m, offset, size))
                .collect(),
        ));
        offset += size;
    }
    BlockDecomposition {
        basis_change: q,
        block_dims: dims,
        blocks,
    }
}

fn triangularize(tuple: &MatrixTuple, config: &Config) -> (Matrix, Vec<usize>) {
    let d = tuple.dim();
    let w = match find_invariant_subspace(tuple, config) {
        InvariantSearch::Found(w) => w,
        InvariantSearch::NotFound { .. } => return (Matrix::identity(d, d), vec![d]),
    };
    let m = w.dim();
    let wc = orthogonal_complement(w.basis(), 1e-10);
    let mut q0 = Matrix::zeros(d, d);
    q0.columns_mut(0, m).copy_from(w.basis());
    q0.columns_mut(m, d - m).copy_from(&wc);
    let conj = tuple.conjugate_orthogonal(&q0);
    let top = MatrixTuple::from_parts_unchecked(
        m,
        conj.matrices().iter().map(|a| extract_block(a, 0, m)).collect(),
    );
    let bottom = MatrixTuple::from_parts_unchecked(
        d - m,
        conj.matrices()
            .iter()
            .map(|a| extract_block(a, m, d - m))
            .collect(),
    );
    let (q1, dims1) = triangularize(&top, config);
    let (q2, dims2) = triangularize(&bottom, config);
    let mut inner = Matrix::zeros(d, d);
    inner.view_mut((0, 0), (m, m)).copy_from(&q1);
    inner.view_mut((m, m), (d - m, d - m)).copy_from(&q2);
    let mut dims = dims1;
    dims.extend(dims2);
    (q0 * inner, dims)
}

/// A finite set of subspace tuples `(W_1, …, W_k)`, one subspace per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSet {
    members: Vec<Vec<Subspace>>,
    closed: bool,
    min_separation: f64,
}

fn member_distance(a: &[Subspace], b: &[Subspace]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.distance(y))
        .fold(0.0, f64::max)
}

fn min_separation(members: &[Vec<Subspace>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            best = best.min(member_distance(&members[i], &members[j]));
        }
    }
    best
}

impl OrbitSet {
    /// An orbit set from explicit members; `closed` starts false until
    /// checked with [`OrbitSet::check_closed`].
    pub fn new(members: Vec<Vec<Subspace>>) -> Result<OrbitSet> {
        let first = members.first().ok_or(Error::EmptyOrbit)?;
        for m in &members {
            if m.len() != first.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    found: m.len(),
                });
            }
            for (a, b) in m.iter().zip(first) {
                if a.ambient_dim() != b.ambient_dim() || a.dim() != b.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: b.dim(),
                        found: a.dim(),
                    });
                }
            }
        }
        let min_separation = min_separation(&members);
        Ok(OrbitSet {
            members,
            closed: false,
            min_separation,
        })
    }

    pub fn members(&self) -> &[Vec<Subspace>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    /// Smallest distance between two members (infinite for one member).
    pub fn min_separation(&self) -> f64 {
        self.min_separation
    }

    /// Two members are close enough that the dedup tolerance may have
    /// merged distinct subspaces.
    pub fn near_tolerance(&self, tol: f64) -> bool {
        self.min_separation <= 10.0 * tol
    }

    /// Subspace dimensions `ℓ_i` per factor.
    pub fn member_dims(&self) -> Vec<usize> {
        self.members[0].iter().map(Subspace::dim).collect()
    }

    pub fn position(&self, member: &[Subspace], tol: f64) -> Option<usize> {
        self.members
            .iter()
            .position(|m| member_distance(m, member) <= tol)
    }

    /// Whether every generator maps every member onto some member.
    pub fn is_closed_under(&self, tuples: &[&MatrixTuple], tol: f64) -> bool {
        let n = tuples[0].len();
        self.members.iter().all(|m| {
            (0..n).all(|j| match image_member(tuples, m, j) {
                Some(img) => self.position(&img, tol).is_some(),
                None => false,
            })
        })
    }

    /// Recheck closure and record the verdict.
    pub fn check_closed(mut self, tuples: &[&MatrixTuple], tol: f64) -> OrbitSet {
        self.closed = self.is_closed_under(tuples, tol);
        self
    }
}

fn image_member(tuples: &[&MatrixTuple], member: &[Subspace], j: usize) -> Option<Vec<Subspace>> {
    member
        .iter()
        .zip(tuples)
        .map(|(w, t)| w.image(t.get(j)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrbitResult {
    Closed(OrbitSet),
    /// More than `cap` distinct members were generated.
    Overflow { cap: usize },
}

/// Breadth-first closure of `{(A^{(1)}_i W_1, …, A^{(k)}_i W_k)}` over words,
/// identifying subspaces whose largest principal angle is within `tol`.
pub fn subspace_orbit(
    tuples: &[&MatrixTuple],
    seed: &[Subspace],
    cap: usize,
    tol: f64,
) -> Result<OrbitResult> {
    if tuples.is_empty() || tuples.len() != seed.len() {
        return Err(Error::DimensionMismatch {
            expected: tuples.len(),
            found: seed.len(),
        });
    }
    for (t, w) in tuples.iter().zip(seed) {
        if t.dim() != w.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: t.dim(),
                found: w.ambient_dim(),
            });
        }
    }
    let n = tuples[0].len();
    let mut members: Vec<Vec<Subspace>> = vec![seed.to_vec()];
    let mut i = 0;
    while i < members.len() {
        for j in 0..n {
            let img = image_member(tuples, &members[i], j)
                .ok_or_else(|| Error::InvalidParameter("generator collapses a subspace".into()))?;
            if members.iter().all(|m| member_distance(m, &img) > tol) {
                members.push(img);
                if members.len() > cap {
                    return Ok(OrbitResult::Overflow { cap });
                }
            }
        }
        i += 1;
    }
    let min_separation = min_separation(&members);
    Ok(OrbitResult::Closed(OrbitSet {
        members,
        closed: true,
        min_separation,
    }))
}

/// The restricted potentials `Φ^j`, one per seed tuple, each over the
/// closed orbit of its seed.
pub fn build_restricted_potentials(
    base: &NormProduct,
    seeds: &[Vec<Subspace>],
    cap: usize,
    tol: f64,
) -> Result<Vec<PotentialSpec>> {
    let tuples: Vec<&MatrixTuple> = base.factors().iter().map(|f| &f.tuple).collect();
    seeds
        .iter()
        .map(|seed| match subspace_orbit(&tuples, seed, cap, tol)? {
            OrbitResult::Closed(orbit) => Ok(PotentialSpec::Restricted(RestrictedPotential::new(
                base.clone(),
                orbit,
            )?)),
            OrbitResult::Overflow { cap } => Err(Error::OrbitOverflow { cap }),
        })
        .collect()
}

/// Finite orbits of lines or planes whose members form a direct sum of the
/// whole space (`|O| · ℓ = d`), seeded from the real eigenvector lines and
/// invariant planes of products of length one and two. Sorted by `ℓ`.
pub fn splitting_orbits(tuple: &MatrixTuple, tol: f64) -> Vec<Vec<Subspace>> {
    let d = tuple.dim();
    if d < 2 {
        return Vec::new();
    }
    let mut seeds: Vec<Subspace> = Vec::new();
    for w in Word::all_up_to(2, tuple.len()) {
        let m = tuple.product(&w).expect("word over the tuple alphabet");
        seeds.extend(eigen_subspaces(&m));
    }
    seeds.sort_by_key(Subspace::dim);
    let mut found: Vec<Vec<Subspace>> = Vec::new();
    for seed in seeds {
        let l = seed.dim();
        if d % l != 0 || l == d {
            continue;
        }
        if found
            .iter()
            .any(|o| o.iter().any(|w| w.distance(&seed) <= tol))
        {
            continue;
        }
        let orbit = match subspace_orbit(&[tuple], &[seed], d / l, tol) {
            Ok(OrbitResult::Closed(o)) => o,
            _ => continue,
        };
        if orbit.len() * l != d {
            continue;
        }
        let members: Vec<Subspace> = orbit.members.into_iter().map(|mut m| m.remove(0)).collect();
        let mut stacked = Matrix::zeros(d, d);
        for (k, w) in members.iter().enumerate() {
            stacked.columns_mut(k * l, l).copy_from(w.basis());
        }
        let sv = singular_values_rect(&stacked);
        if sv[d - 1] > 1e-6 {
            found.push(members);
        }
    }
    found
}

/// Real eigenvector lines (simple real eigenvalues) and real invariant planes
/// (simple complex pairs) of `m`.
fn eigen_subspaces(m: &Matrix) -> Vec<Subspace> {
    let d = m.nrows();
    let eig = match eigenvalues(m) {
        Ok(e) => e,
        Err(_) => return Vec::new(),
    };
    let scale = eig.iter().map(|(a, b)| a.hypot(*b)).fold(1e-300, f64::max);
    let id = Matrix::identity(d, d);
    let mut out = Vec::new();
    for (k, &(re, im)) in eig.iter().enumerate() {
        let repeated = eig
            .iter()
            .enumerate()
            .any(|(l, (a, b))| l != k && (a - re).hypot(b - im) <= 1e-8 * scale);
        if repeated || im < -1e-10 * scale {
            continue;
        }
        let (target, ns) = if im.abs() <= 1e-10 * scale {
            (1, null_space(&(m - &id * re), 1e-8))
        } else {
            (2, null_space(&(m * m - m * (2.0 * re) + &id * (re * re + im * im)), 1e-8))
        };
        if ns.ncols() == target {
            out.push(Subspace::from_orthonormal(ns));
        }
    }
    out
}

/// Orbits of the simultaneous action on tuples `(W_1, …, W_k)` with each
/// `W_i` drawn from the finite set `per_factor[i]`. The orbits partition
/// the product set since each generator permutes every finite orbit.
pub fn joint_orbits(
    tuples: &[&MatrixTuple],
    per_factor: &[Vec<Subspace>],
    tol: f64,
) -> Result<Vec<OrbitSet>> {
    let sizes: Vec<usize> = per_factor.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    if total == 0 {
        return Err(Error::EmptyOrbit);
    }
    let combo = |mut idx: usize| -> Vec<Subspace> {
        let mut out = Vec::with_capacity(sizes.len());
        for (i, &s) in sizes.iter().enumerate().rev() {
            out.push(per_factor[i][idx % s].clone());
            idx /= s;
        }
        out.reverse();
        out
    };
    let mut covered = vec![false; total];
    let mut orbits = Vec::new();
    for start in 0..total {
        if covered[start] {
            continue;
        }
        let orbit = match subspace_orbit(tuples, &combo(start), total, tol)? {
            OrbitResult::Closed(o) => o,
            OrbitResult::Overflow { cap } => return Err(Error::OrbitOverflow { cap }),
        };
        for (idx, flag) in covered.iter_mut().enumerate() {
            if !*flag && orbit.position(&combo(idx), tol).is_some() {
                *flag = true;
            }
        }
        orbits.push(orbit);
    }
    Ok(orbits)
}

/// Empirical check of `τ Φ(i) ≤ max_j Φ^j(i) ≤ Φ(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    /// `log min_{|i|=n} max_j Φ^j(i)/Φ(i)` for `n = 1..=n_max`.
    pub log_tau_by_depth: Vec<f64>,
    pub tau_hat: f64,
    /// Largest `log max_j Φ^j(i) − log Φ(i)`; must not exceed zero.
    pub max_excess: f64,
    /// Least-squares slope of `log τ̂(n)` in `n`.
    pub slope: f64,
    pub passed: bool,
}

/// Geometric decay of `τ̂` steeper than this per symbol fails the check.
pub const SANDWICH_DECAY: f64 = 0.02;

#[derive(Clone)]
struct SandwichAcc<'a> {
    base: PotentialSpec,
    restricted: &'a [PotentialSpec],
    log_tau: Vec<f64>,
    excess: f64,
}

impl WordAccumulator for SandwichAcc<'_> {
    fn visit(&mut self, node: &WordNode<'_>) {
        let full = self.base.node_value(node.products).log_phi;
        let best = self
            .restricted
            .iter()
            .map(|r| r.node_value(node.products).log_phi)
            .fold(f64::NEG_INFINITY, f64::max);
        let gap = best - full;
        let level = node.word.len() - 1;
        self.log_tau[level] = self.log_tau[level].min(gap);
        self.excess = self.excess.max(gap);
    }

    fn merge(&mut self, later: Self) {
        for (a, b) in self.log_tau.iter_mut().zip(&later.log_tau) {
            *a = a.min(*b);
        }
        self.excess = self.excess.max(later.excess);
    }
}

pub fn sandwich_check(
    base: &NormProduct,
    restricted: &[PotentialSpec],
    n_max: usize,
    config: &Config,
) -> Result<SandwichReport> {
    if restricted.is_empty() {
        return Err(Error::InvalidParameter("no restricted potentials".into()));
    }
    for r in restricted {
        match r {
            PotentialSpec::Restricted(rp) if rp.base().factors() == base.factors() => {}
            _ => {
                return Err(Error::InvalidParameter(
                    "restricted potentials must share the base factors".into(),
                ))
            }
        }
    }
    let tuples: Vec<&MatrixTuple> = base.factors().iter().map(|f| &f.tuple).collect();
    let init = SandwichAcc {
        base: PotentialSpec::NormProduct(base.clone()),
        restricted,
        log_tau: vec![f64::INFINITY; n_max],
        excess: f64::NEG_INFINITY,
    };
    let (acc, _) = fold_words(&tuples, n_max, config, init)?;
    let xs: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
    let slope = least_squares_slope(&xs, &acc.log_tau);
    let min_log_tau = acc.log_tau.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SandwichReport {
        tau_hat: min_log_tau.exp(),
        max_excess: acc.excess,
        slope,
        passed: acc.excess <= 1e-9 && slope >= -SANDWICH_DECAY,
        log_tau_by_depth: acc.log_tau,
    })
}

/// Bridge words `F` and a constant `δ` with
/// `max_{j∈F} Φ(ijk) ≥ δ Φ(i) Φ(k)` for every tested pair `(i, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiMultWitness {
    pub bridge_words: Vec<Word>,
    pub log_delta: f64,
    pub tested_up_to: usize,
}

impl QuasiMultWitness {
    pub fn delta(&self) -> f64 {
        self.log_delta.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuasiMultOutcome {
    Found(QuasiMultWitness),
    /// `log δ(m)` kept falling with the test length `m`.
    NotFound { log_delta_by_len: Vec<f64> },
}

/// A fall of `log δ(m)` steeper than this per symbol means no uniform witness.
pub const QUASIMULT_DECAY: f64 = 0.1;

/// Empirical search for quasimultiplicativity constants.
///
/// `δ(m)` is the best constant over bridges of length up to
/// `max_bridge_len` for all pairs of words of length up to `m`; a sustained
/// decrease over the second half of the tested lengths reports `NotFound`.
/// Otherwise the bridge set is pruned greedily, longest words first, while
/// `δ` stays within a factor two of its unpruned value.
pub fn quasimult_search(
    spec: &PotentialSpec,
    max_bridge_len: usize,
    max_test_len: usize,
    config: &Config,
) -> Result<QuasiMultOutcome> {
    let n = spec.alphabet();
    config.check_depth(n, max_test_len)?;
    config.check_depth(n, max_bridge_len)?;
    if max_bridge_len == 0 || max_test_len == 0 {
        return Err(Error::InvalidParameter("lengths must be positive".into()));
    }
    let tests = Word::all_up_to(max_test_len, n);
    let bridges = Word::all_up_to(max_bridge_len, n);
    let test_products: Vec<Vec<ScaledProduct>> = tests
        .par_iter()
        .map(|w| spec.products_along(w))
        .collect::<Result<_>>()?;
    let bridge_products: Vec<Vec<ScaledProduct>> = bridges
        .par_iter()
        .map(|w| spec.products_along(w))
        .collect::<Result<_>>()?;
    let log_phi: Vec<f64> = test_products
        .iter()
        .map(|p| spec.node_value(p).log_phi)
        .collect();

    // gains[i][k][f] = log Φ(i f k) − log Φ(i) − log Φ(k)
    let gains: Vec<Vec<Vec<f64>>> = test_products
        .par_iter()
        .enumerate()
        .map(|(a, pi)| {
            test_products
                .iter()
                .enumerate()
                .map(|(c, pk)| {
                    bridge_products
                        .iter()
                        .map(|pf| {
                            let joined: Vec<ScaledProduct> = pi
                                .iter()
                                .zip(pf)
                                .zip(pk)
                                .map(|((x, y), z)| x.then(y).then(z))
                                .collect();
                            spec.node_value(&joined).log_phi - log_phi[a] - log_phi[c]
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let all: Vec<bool> = vec![true; bridges.len()];
    let delta_over = |active: &[bool], upto: usize| -> f64 {
        let mut worst = f64::INFINITY;
        for (a, row) in gains.iter().enumerate() {
            if tests[a].len() > upto {
                continue;
            }
            for (c, g) in row.iter().enumerate() {
                if tests[c].len() > upto {
                    continue;
                }
                let best = g
                    .iter()
                    .zip(active)
                    .filter(|(_, &on)| on)
                    .map(|(v, _)| *v)
                    .fold(f64::NEG_INFINITY, f64::max);
                worst = worst.min(best);
            }
        }
        worst
    };

    let log_delta_by_len: Vec<f64> = (1..=max_test_len).map(|m| delta_over(&all, m)).collect();
    let half = max_test_len / 2;
    if max_test_len >= 3 {
        let xs: Vec<f64> = (half + 1..=max_test_len).map(|m| m as f64).collect();
        let slope = least_squares_slope(&xs, &log_delta_by_len[half..]);
        if slope < -QUASIMULT_DECAY {
            return Ok(QuasiMultOutcome::NotFound { log_delta_by_len });
        }
    }

    let full = log_delta_by_len[max_test_len - 1];
    let mut active = all;
    for f in (0..bridges.len()).rev() {
        active[f] = false;
        if active.iter().any(|&on| on) && delta_over(&active, max_test_len) >= full - 2f64.ln() {
            continue;
        }
        active[f] = true;
    }
    let log_delta = delta_over(&active, max_test_len);
    let bridge_words = bridges
        .into_iter()
        .zip(&active)
        .filter(|(_, &on)| on)
        .map(|(w, _)| w)
        .collect();
    Ok(QuasiMultOutcome::Found(QuasiMultWitness {
        bridge_words,
        log_delta,
        tested_up_to: max_test_len,
    }))
}

/// The subspace spanned by a planted flag, for tests and fixtures.
pub fn span_of_columns(q: &Matrix, first: usize) -> Subspace {
    Subspace::from_orthonormal(linalg::orthonormal_columns(&q.columns(0, first).into_owned(), 1e-12))
}
