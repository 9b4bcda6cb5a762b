//! Gibbs cylinder weights, equilibrium-state candidates and their separation.
//!
//! Candidates are the block combinations `Φ_r` of the triangularized factors,
//! refined by finite splitting orbits where they exist; a candidate survives
//! when its pressure bracket reaches the best certified lower bound. Distinct
//! candidates are told apart by growth rates along periodic probe words.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::linalg::{least_squares_slope, spectral_radius, Matrix};
use crate::potentials::{
    fold_words, Factor, LogSum, MatrixTuple, NormProduct, PotentialSpec, RestrictedPotential,
    Word, WordAccumulator, WordNode,
};
use crate::pressure::{pressure_bracket, PressureBracket};
use crate::structure::{
    block_triangularize, is_irreducible, joint_orbits, splitting_orbits, OrbitSet, Subspace,
};
use crate::{Error, Result};

#[derive(Clone)]
struct WordValues<'a> {
    spec: &'a PotentialSpec,
    levels: Vec<Vec<f64>>,
}

impl WordAccumulator for WordValues<'_> {
    fn visit(&mut self, node: &WordNode<'_>) {
        let v = self.spec.node_value(node.products).log_phi;
        self.levels[node.word.len() - 1].push(v);
    }

    fn merge(&mut self, later: Self) {
        for (a, b) in self.levels.iter_mut().zip(later.levels) {
            a.extend(b);
        }
    }
}

/// `log Φ(i)` for every word of length `1..=depth`, each level in
/// lexicographic order.
pub fn word_values(spec: &PotentialSpec, depth: usize, config: &Config) -> Result<Vec<Vec<f64>>> {
    let init = WordValues {
        spec,
        levels: vec![Vec::new(); depth],
    };
    let (acc, _) = fold_words(&spec.factor_tuples(), depth, config, init)?;
    Ok(acc.levels)
}

fn log_sum(xs: &[f64]) -> f64 {
    let mut s = LogSum::default();
    xs.iter().for_each(|&x| s.add(x));
    s.value()
}

/// Marginal of a level-`long` log-measure on the first `short` symbols.
fn marginal(values: &[f64], alphabet: usize, long: usize, short: usize) -> Vec<f64> {
    let block = alphabet.pow((long - short) as u32);
    values.chunks(block).map(log_sum).collect()
}

/// Cylinder log-weights `log Φ(i) − n·P` at one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsEstimate {
    pub depth: usize,
    pub alphabet: usize,
    pub pressure_used: f64,
    /// Lexicographic in the word.
    pub log_weights: Vec<f64>,
    /// `|log Σ weights|`.
    pub normalization_defect: f64,
}

impl GibbsEstimate {
    pub fn log_weight(&self, word: &Word) -> Result<f64> {
        if word.len() != self.depth {
            return Err(Error::InvalidParameter(format!(
                "word of length {} at depth {}",
                word.len(),
                self.depth
            )));
        }
        Ok(self.log_weights[word.index(self.alphabet)])
    }

    /// Weights rescaled to a probability vector, as logarithms.
    pub fn normalized(&self) -> Vec<f64> {
        let total = log_sum(&self.log_weights);
        self.log_weights.iter().map(|w| w - total).collect()
    }
}

pub fn gibbs_estimate(
    spec: &PotentialSpec,
    n: usize,
    pressure: f64,
    config: &Config,
) -> Result<GibbsEstimate> {
    let values = word_values(spec, n, config)?;
    let log_weights: Vec<f64> = values[n - 1]
        .iter()
        .map(|v| v - n as f64 * pressure)
        .collect();
    Ok(GibbsEstimate {
        depth: n,
        alphabet: spec.alphabet(),
        pressure_used: pressure,
        normalization_defect: log_sum(&log_weights).abs(),
        log_weights,
    })
}

/// Least-squares slopes of the defect trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectSlopes {
    pub normalization: f64,
    pub invariance: f64,
    pub submultiplicativity: f64,
    pub ratio_spread: f64,
}

impl DefectSlopes {
    pub fn max(&self) -> f64 {
        self.normalization
            .max(self.invariance)
            .max(self.submultiplicativity)
            .max(self.ratio_spread)
    }
}

/// Defect trajectories of the depth-`n` Gibbs weights for `n = 1..=n_max`.
///
/// The reference measure at depth `n` is the normalized weight vector at
/// depth `2n`. All defects are log ratios, so a bounded Gibbs constant shows
/// as a flat trajectory and a failing one as linear growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsDiagnostics {
    pub depths: Vec<usize>,
    /// `(log S_{2n_max} − log S_{n_max}) / n_max`.
    pub pressure_estimate: f64,
    /// `|log S_n − n P̂|`.
    pub normalization: Vec<f64>,
    /// `max_i |log μ̂_{2n}([i]) − log μ̂_n([i])|`.
    pub invariance: Vec<f64>,
    /// `max log μ̂([ij]) − log μ̂([i]) − log μ̂([j])` over splits of length `n`.
    pub submultiplicativity: Vec<f64>,
    /// Spread over words of `log μ̂_{2n}([i]) − log Φ(i) + n P̂`.
    pub ratio_spread: Vec<f64>,
    /// Slopes over `n = 2..=n_max`.
    pub slopes: DefectSlopes,
    /// Every slope is at most [`GIBBS_TREND`].
    pub bounded: bool,
}

/// Largest defect slope still read as "no trend".
pub const GIBBS_TREND: f64 = 0.05;

pub fn gibbs_diagnostics(
    spec: &PotentialSpec,
    n_max: usize,
    config: &Config,
) -> Result<GibbsDiagnostics> {
    if n_max < 2 {
        return Err(Error::InvalidParameter("gibbs diagnostics need n_max ≥ 2".into()));
    }
    let n_sym = spec.alphabet();
    let values = word_values(spec, 2 * n_max, config)?;
    let log_s: Vec<f64> = values.iter().map(|l| log_sum(l)).collect();
    let p_hat = (log_s[2 * n_max - 1] - log_s[n_max - 1]) / n_max as f64;

    let mut normalization = Vec::new();
    let mut invariance = Vec::new();
    let mut submult = Vec::new();
    let mut spread = Vec::new();
    for n in 1..=n_max {
        let reference: Vec<f64> = values[2 * n - 1]
            .iter()
            .map(|v| v - log_s[2 * n - 1])
            .collect();
        // marginals of the reference measure at lengths 1..=n
        let margins: Vec<Vec<f64>> = (1..=n)
            .map(|m| marginal(&reference, n_sym, 2 * n, m))
            .collect();
        let own = &values[n - 1];
        let marg = &margins[n - 1];

        normalization.push((log_s[n - 1] - n as f64 * p_hat).abs());
        invariance.push(
            own.iter()
                .zip(marg)
                .map(|(v, m)| (m - (v - log_s[n - 1])).abs())
                .fold(0.0, f64::max),
        );
        let ratios: Vec<f64> = own
            .iter()
            .zip(marg)
            .map(|(v, m)| m - (v - n as f64 * p_hat))
            .collect();
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        spread.push(hi - lo);

        let mut worst = f64::NEG_INFINITY;
        for a in 1..n {
            let tail = n_sym.pow((n - a) as u32);
            for (idx, m) in marg.iter().enumerate() {
                let i = idx / tail;
                let j = idx % tail;
                worst = worst.max(m - margins[a - 1][i] - margins[n - a - 1][j]);
            }
        }
        submult.push(if n == 1 { 0.0 } else { worst });
    }

    let xs: Vec<f64> = (2..=n_max).map(|n| n as f64).collect();
    let slope = |ys: &[f64]| least_squares_slope(&xs, &ys[1..]);
    let slopes = DefectSlopes {
        normalization: slope(&normalization),
        invariance: slope(&invariance),
        submultiplicativity: slope(&submult),
        ratio_spread: slope(&spread),
    };
    Ok(GibbsDiagnostics {
        depths: (1..=n_max).collect(),
        pressure_estimate: p_hat,
        normalization,
        invariance,
        submultiplicativity: submult,
        ratio_spread: spread,
        bounded: slopes.max() <= GIBBS_TREND,
        slopes,
    })
}

/// `(A_j ⊗ B_j)_j`.
pub fn tensor_tuple(a: &MatrixTuple, b: &MatrixTuple) -> Result<MatrixTuple> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    MatrixTuple::with_det_tol(
        a.matrices()
            .iter()
            .zip(b.matrices())
            .map(|(x, y)| x.kronecker(y))
            .collect(),
        0.0,
    )
}

/// `(A^{(1)}_j ⊗ ⋯ ⊗ A^{(k)}_j)_j`.
pub fn tensor_all(tuples: &[MatrixTuple]) -> Result<MatrixTuple> {
    let (first, rest) = tuples
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("nothing to tensor".into()))?;
    rest.iter().try_fold(first.clone(), |acc, t| tensor_tuple(&acc, t))
}

/// The `k`-factor family with `2^k` generators: factor `i` uses
/// `[[0,2],[1,0]]` where bit `i` of `j` (least significant first) is zero
/// and `[[0,1],[2,0]]` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SevenExample {
    pub k: usize,
    pub factors: Vec<MatrixTuple>,
    pub spec: NormProduct,
}

impl SevenExample {
    pub fn tensor(&self) -> MatrixTuple {
        tensor_all(&self.factors).expect("factors share an alphabet")
    }

    pub fn potential(&self) -> PotentialSpec {
        PotentialSpec::NormProduct(self.spec.clone())
    }

    /// The pair of basis indices spanning the `j`-th invariant plane of the
    /// tensor space: `⊗ e_{b_i(j)}` and `⊗ e_{b_i(2^k−1−j)}`.
    pub fn plane_indices(&self, j: usize) -> (usize, usize) {
        let top = (1usize << self.k) - 1;
        (self.tensor_index(j), self.tensor_index(top - j))
    }

    /// Position of `⊗_i e_{b_i(j)}` in Kronecker order (factor 1 most significant).
    fn tensor_index(&self, j: usize) -> usize {
        (0..self.k).fold(0, |acc, i| 2 * acc + ((j >> i) & 1))
    }

    pub fn plane(&self, j: usize) -> Subspace {
        let (a, b) = self.plane_indices(j);
        Subspace::coordinate(1 << self.k, &[a, b])
    }
}

pub const SEVEN_MAX_K: usize = 10;

pub fn seven_example(k: usize, config: &Config) -> Result<SevenExample> {
    if k == 0 || k > SEVEN_MAX_K {
        return Err(Error::InvalidParameter(format!(
            "k must lie in 1..={SEVEN_MAX_K}, got {k}"
        )));
    }
    let n = 1usize << k;
    config.check_depth(n, 1)?;
    let zero = Matrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 0.0]);
    let one = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
    let factors = (0..k)
        .map(|i| {
            MatrixTuple::new(
                (0..n)
                    .map(|j| if (j >> i) & 1 == 0 { zero.clone() } else { one.clone() })
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = NormProduct::new(
        factors
            .iter()
            .map(|t| Factor {
                tuple: t.clone(),
                beta: 1.0,
            })
            .collect(),
    )?;
    Ok(SevenExample { k, factors, spec })
}

/// Spectral radii of the probe product on each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationStatistic {
    pub probe: Word,
    /// `lim ‖(A_probe)^n‖^{1/n} = ρ(A_probe)` per block.
    pub rho: Vec<f64>,
    /// All values differ pairwise by more than the relative margin.
    pub separated: bool,
}

pub const SEPARATION_MARGIN: f64 = 1e-6;

fn distinct(a: f64, b: f64) -> bool {
    (a - b).abs() > SEPARATION_MARGIN * a.abs().max(b.abs())
}

pub fn separation_statistic(blocks: &[MatrixTuple], probe: &Word) -> Result<SeparationStatistic> {
    if probe.is_empty() {
        return Err(Error::EmptyWord);
    }
    let rho = blocks
        .iter()
        .map(|b| spectral_radius(&b.product(probe)?))
        .collect::<Result<Vec<_>>>()?;
    let separated = (0..rho.len()).all(|i| (i + 1..rho.len()).all(|j| distinct(rho[i], rho[j])));
    Ok(SeparationStatistic {
        probe: probe.clone(),
        rho,
        separated,
    })
}

/// A candidate potential together with where it came from.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub label: String,
    /// Block index chosen in each factor.
    pub blocks: Vec<usize>,
    pub block_dims: Vec<usize>,
    pub orbit: Option<OrbitSummary>,
    pub spec: PotentialSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSummary {
    pub index: usize,
    pub size: usize,
    pub member_dims: Vec<usize>,
    pub near_tolerance: bool,
}

/// A finite splitting orbit found for one diagonal block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub orbit_size: usize,
    pub member_dim: usize,
    /// `d_block / ℓ`, reported only for orbits actually constructed.
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorStructure {
    pub dim: usize,
    pub block_dims: Vec<usize>,
    pub splitting: Vec<Option<SplitSummary>>,
}

/// Every candidate potential: the block combinations, refined by joint
/// splitting orbits.
pub fn equilibrium_candidates(
    spec: &NormProduct,
    config: &Config,
) -> Result<(Vec<Candidate>, Vec<FactorStructure>)> {
    let tol = config.angle_tol;
    let mut per_factor_blocks: Vec<Vec<MatrixTuple>> = Vec::new();
    let mut per_factor_orbits: Vec<Vec<Vec<Subspace>>> = Vec::new();
    let mut structures = Vec::new();
    for f in spec.factors() {
        let dec = block_triangularize(&f.tuple, config);
        let mut orbits = Vec::new();
        let mut splitting = Vec::new();
        for b in dec.blocks() {
            match splitting_orbits(b, tol).into_iter().next() {
                Some(o) => {
                    splitting.push(Some(SplitSummary {
                        orbit_size: o.len(),
                        member_dim: o[0].dim(),
                        t: b.dim() / o[0].dim(),
                    }));
                    orbits.push(o);
                }
                None => {
                    splitting.push(None);
                    orbits.push(vec![Subspace::full(b.dim())]);
                }
            }
        }
        structures.push(FactorStructure {
            dim: f.tuple.dim(),
            block_dims: dec.block_dims().to_vec(),
            splitting,
        });
        per_factor_blocks.push(dec.blocks().to_vec());
        per_factor_orbits.push(orbits);
    }

    let counts: Vec<usize> = per_factor_blocks.iter().map(Vec::len).collect();
    let total: usize = counts.iter().product();
    let mut candidates = Vec::new();
    for idx in 0..total {
        let mut rest = idx;
        let mut choice = vec![0; counts.len()];
        for (slot, &c) in choice.iter_mut().zip(&counts).rev() {
            *slot = rest % c;
            rest /= c;
        }
        let factors: Vec<Factor> = spec
            .factors()
            .iter()
            .zip(&choice)
            .zip(&per_factor_blocks)
            .map(|((f, &r), blocks)| Factor {
                tuple: blocks[r].clone(),
                beta: f.beta,
            })
            .collect();
        let base = NormProduct::new(factors)?;
        let block_dims: Vec<usize> = base.factors().iter().map(|f| f.tuple.dim()).collect();
        let label = format!("r={}", Word::new(choice.clone()));
        let member_sets: Vec<Vec<Subspace>> = choice
            .iter()
            .zip(&per_factor_orbits)
            .map(|(&r, o)| o[r].clone())
            .collect();
        let trivial = member_sets.iter().all(|m| m.len() == 1);
        if trivial {
            candidates.push(Candidate {
                label,
                blocks: choice,
                block_dims,
                orbit: None,
                spec: PotentialSpec::NormProduct(base),
            });
            continue;
        }
        let tuples: Vec<&MatrixTuple> = base.factors().iter().map(|f| &f.tuple).collect();
        let orbits: Vec<OrbitSet> = joint_orbits(&tuples, &member_sets, tol)?;
        for (o_idx, orbit) in orbits.into_iter().enumerate() {
            let summary = OrbitSummary {
                index: o_idx,
                size: orbit.len(),
                member_dims: orbit.member_dims(),
                near_tolerance: orbit.near_tolerance(tol),
            };
            candidates.push(Candidate {
                label: format!("{label},orbit={o_idx}"),
                blocks: choice.clone(),
                block_dims: block_dims.clone(),
                orbit: Some(summary),
                spec: PotentialSpec::Restricted(RestrictedPotential::new(base.clone(), orbit)?),
            });
        }
    }
    Ok((candidates, structures))
}

/// Exponential growth rate of the candidate along the periodic word `w^∞`.
pub fn probe_growth(candidate: &PotentialSpec, probe: &Word) -> Result<f64> {
    match candidate {
        PotentialSpec::Restricted(r) => {
            let tuples: Vec<&MatrixTuple> = r.base().factors().iter().map(|f| &f.tuple).collect();
            let products = tuples
                .iter()
                .map(|t| t.product(probe))
                .collect::<Result<Vec<_>>>()?;
            let orbit = r.orbit();
            let mut best = f64::NEG_INFINITY;
            for start in orbit.members() {
                // follow the member around its cycle under the probe
                let mut current = start.clone();
                let mut power: Vec<Matrix> = products
                    .iter()
                    .map(|p| Matrix::identity(p.nrows(), p.nrows()))
                    .collect();
                let mut period = 0;
                loop {
                    current = current
                        .iter()
                        .zip(&products)
                        .map(|(w, p)| w.image(p).ok_or(Error::EmptyOrbit))
                        .collect::<Result<Vec<_>>>()?;
                    for (acc, p) in power.iter_mut().zip(&products) {
                        *acc = p * &*acc;
                    }
                    period += 1;
                    let back = current
                        .iter()
                        .zip(start)
                        .all(|(a, b)| a.distance(b) <= 1e-8);
                    if back || period > orbit.len() {
                        break;
                    }
                }
                let mut value = 0.0;
                for ((w, p), f) in start.iter().zip(&power).zip(r.base().factors()) {
                    let q = w.basis();
                    let restricted = q.transpose() * p * q;
                    value += f.beta * spectral_radius(&restricted)?.ln();
                }
                best = best.max(value / period as f64);
            }
            Ok(best)
        }
        other => {
            let np = other.to_norm_product()?;
            let mut value = 0.0;
            for f in np.factors() {
                value += f.beta * spectral_radius(&f.tuple.product(probe)?)?.ln();
            }
            Ok(value)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub label: String,
    pub blocks: Vec<usize>,
    pub block_dims: Vec<usize>,
    pub orbit: Option<OrbitSummary>,
    pub bracket: PressureBracket,
    /// Upper bracket reaches the global lower bound.
    pub candidate: bool,
    /// A candidate whose lower bracket does not reach the global lower bound,
    /// so maximality is not settled.
    pub inconclusive: bool,
    /// Positive on every single-letter cylinder.
    pub full_support: bool,
    /// `log` growth rate along each probe word.
    pub probe_log_growth: Vec<f64>,
    pub gibbs: Option<GibbsDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub depth: usize,
    /// `∏ d_i` over the norm-product factors.
    pub theoretical_bound: usize,
    /// Number of restricted or combination potentials constructed.
    pub constructed_potentials: usize,
    pub found_count: usize,
    pub within_bound: bool,
    pub global_lower: f64,
    pub global_upper: f64,
    pub factors: Vec<FactorStructure>,
    pub probes: Vec<Word>,
    pub entries: Vec<CandidateReport>,
    /// Every pair of candidates differs on some probe.
    pub separated: bool,
    pub full_support: bool,
}

impl EquilibriumReport {
    pub fn candidates(&self) -> impl Iterator<Item = &CandidateReport> {
        self.entries.iter().filter(|e| e.candidate)
    }
}

/// Decompose, bracket and separate. `gibbs_depth` attaches Gibbs
/// diagnostics to each candidate.
pub fn equilibrium_report(
    spec: &PotentialSpec,
    n_max: usize,
    gibbs_depth: Option<usize>,
    config: &Config,
) -> Result<EquilibriumReport> {
    let np = spec.to_norm_product()?;
    config.check_depth(np.alphabet(), n_max)?;
    if let Some(g) = gibbs_depth {
        config.check_depth(np.alphabet(), 2 * g)?;
    }
    let (candidates, factors) = equilibrium_candidates(&np, config)?;
    let probes = Word::all_up_to(2, np.alphabet());

    let brackets = candidates
        .iter()
        .map(|c| pressure_bracket(&c.spec, n_max, config))
        .collect::<Result<Vec<_>>>()?;
    let global_lower = brackets
        .iter()
        .map(|b| b.lower)
        .fold(f64::NEG_INFINITY, f64::max);
    let global_upper = brackets
        .iter()
        .map(|b| b.upper)
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-12 * global_lower.abs().max(1.0);

    let mut entries = Vec::new();
    for (c, bracket) in candidates.into_iter().zip(brackets) {
        let is_candidate = bracket.upper >= global_lower - slack;
        let full_support = (0..np.alphabet())
            .all(|j| c.spec.eval(&Word::new(vec![j])).map_or(false, f64::is_finite));
        let probe_log_growth = probes
            .iter()
            .map(|p| probe_growth(&c.spec, p))
            .collect::<Result<Vec<_>>>()?;
        let gibbs = match gibbs_depth {
            Some(g) if is_candidate => Some(gibbs_diagnostics(&c.spec, g, config)?),
            _ => None,
        };
        entries.push(CandidateReport {
            label: c.label,
            blocks: c.blocks,
            block_dims: c.block_dims,
            orbit: c.orbit,
            inconclusive: is_candidate && bracket.lower < global_lower - slack,
            candidate: is_candidate,
            bracket,
            full_support,
            probe_log_growth,
            gibbs,
        });
    }

    let chosen: Vec<&CandidateReport> = entries.iter().filter(|e| e.candidate).collect();
    let separated = (0..chosen.len()).all(|a| {
        (a + 1..chosen.len()).all(|b| {
            chosen[a]
                .probe_log_growth
                .iter()
                .zip(&chosen[b].probe_log_growth)
                .any(|(x, y)| (x - y).abs() > SEPARATION_MARGIN * x.abs().max(y.abs()).max(1.0))
        })
    });
    let found_count = chosen.len();
    let theoretical_bound = np.dimension_product();
    Ok(EquilibriumReport {
        depth: n_max,
        theoretical_bound,
        constructed_potentials: entries.len(),
        found_count,
        within_bound: found_count <= theoretical_bound,
        global_lower,
        global_upper,
        full_support: chosen.iter().all(|e| e.full_support),
        factors,
        probes,
        entries,
        separated,
    })
}

/// A diagonal block of the triangularized tensor tuple compared with the
/// restrictions to the coordinate planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneMatch {
    pub block: usize,
    /// Best-matching plane index `j`, if any block norm agrees to `1e-6`.
    pub plane: Option<usize>,
    /// Largest relative norm error against that plane over words of length ≤ 4.
    pub max_relative_error: f64,
}

/// End-to-end run of the tensor family at one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SevenReport {
    pub k: usize,
    pub alphabet: usize,
    pub tensor_dim: usize,
    pub depth: usize,
    pub block_dims: Vec<usize>,
    pub blocks_irreducible: Vec<bool>,
    pub lower_defect: f64,
    pub plane_match: Vec<PlaneMatch>,
    pub block_brackets: Vec<PressureBracket>,
    pub brackets_overlap: bool,
    /// `max upper − min lower` over the block brackets.
    pub combined_width: f64,
    /// Spectral radii of each block along the probes `(j, 2^k − 1 − j)`.
    pub separation: Vec<SeparationStatistic>,
    /// Every pair of blocks differs on at least one probe.
    pub blocks_separated: bool,
    pub expected_count: usize,
    pub equilibrium: EquilibriumReport,
}

fn relative_norm_error(a: &MatrixTuple, b: &MatrixTuple, max_len: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for w in Word::all_up_to(max_len, a.len()) {
        let x = crate::linalg::operator_norm(&a.product(&w)?)?;
        let y = crate::linalg::operator_norm(&b.product(&w)?)?;
        worst = worst.max((x - y).abs() / y.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

pub fn seven_report(k: usize, depth: usize, config: &Config) -> Result<SevenReport> {
    let ex = seven_example(k, config)?;
    let n = 1usize << k;
    config.check_depth(n, depth)?;
    let tensor = ex.tensor();
    let dec = block_triangularize(&tensor, config);
    let blocks = dec.blocks().to_vec();

    let planes: Vec<MatrixTuple> = (0..n / 2)
        .map(|j| {
            let q = ex.plane(j).basis().clone();
            MatrixTuple::from_parts_unchecked(
                2,
                tensor.matrices().iter().map(|m| q.transpose() * m * &q).collect(),
            )
        })
        .collect();
    let mut plane_match = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        let mut best = (None, f64::INFINITY);
        if b.dim() == 2 {
            for (j, p) in planes.iter().enumerate() {
                let err = relative_norm_error(b, p, 4)?;
                if err < best.1 {
                    best = (Some(j), err);
                }
            }
        }
        plane_match.push(PlaneMatch {
            block: i,
            plane: best.0.filter(|_| best.1 <= 1e-6),
            max_relative_error: best.1,
        });
    }

    let block_brackets = blocks
        .iter()
        .map(|b| pressure_bracket(&PotentialSpec::NormProduct(NormProduct::single(b.clone())), depth, config))
        .collect::<Result<Vec<_>>>()?;
    let max_lower = block_brackets.iter().map(|b| b.lower).fold(f64::NEG_INFINITY, f64::max);
    let min_upper = block_brackets.iter().map(|b| b.upper).fold(f64::INFINITY, f64::min);
    let max_upper = block_brackets.iter().map(|b| b.upper).fold(f64::NEG_INFINITY, f64::max);
    let min_lower = block_brackets.iter().map(|b| b.lower).fold(f64::INFINITY, f64::min);

    let separation = (0..n / 2)
        .map(|j| separation_statistic(&blocks, &Word::new(vec![j, n - 1 - j])))
        .collect::<Result<Vec<_>>>()?;
    let blocks_separated = (0..blocks.len()).all(|a| {
        (a + 1..blocks.len()).all(|b| separation.iter().any(|st| distinct(st.rho[a], st.rho[b])))
    });
    let blocks_irreducible = blocks
        .iter()
        .map(|b| !is_irreducible(b, config).is_reducible())
        .collect();
    let equilibrium = equilibrium_report(&ex.potential(), depth, None, config)?;

    Ok(SevenReport {
        k,
        alphabet: n,
        tensor_dim: tensor.dim(),
        depth,
        block_dims: dec.block_dims().to_vec(),
        blocks_irreducible,
        lower_defect: dec.lower_defect(&tensor),
        plane_match,
        block_brackets,
        brackets_overlap: max_lower <= min_upper,
        combined_width: max_upper - min_lower,
        separation,
        blocks_separated,
        expected_count: n / 2,
        equilibrium,
    })
}
