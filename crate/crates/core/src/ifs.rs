//! Affine iterated function systems: the coding map, chaos-game sampling,
//! box counting, and deletion experiments for the affinity dimension.
//!
//! The coding map composes maps OUTERMOST-FIRST, `π(x) = lim T_{x_1} ∘ ⋯ ∘
//! T_{x_n}(v)`, which is the opposite nesting to [`MatrixTuple::product`].

use std::collections::{HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::linalg::{least_squares_slope, Matrix, Vector};
use crate::potentials::{MatrixTuple, Word};
use crate::pressure::{affinity_dimension, BernoulliMeasure, DimensionBracket};
use crate::random::stream;
use crate::{Error, Result};

/// Maps `T_i x = A_i x + v_i` with invertible, strictly contractive `A_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineIFS {
    linear: MatrixTuple,
    translations: Vec<Vector>,
}

impl AffineIFS {
    pub fn new(linear: MatrixTuple, translations: Vec<Vector>) -> Result<AffineIFS> {
        if translations.len() != linear.len() {
            return Err(Error::InvalidParameter(format!(
                "{} translations for {} maps",
                translations.len(),
                linear.len()
            )));
        }
        for v in &translations {
            if v.len() != linear.dim() {
                return Err(Error::DimensionMismatch {
                    expected: linear.dim(),
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        for (index, a) in linear.matrices().iter().enumerate() {
            let norm = crate::linalg::singular_values_rect(a)[0];
            if norm >= 1.0 {
                return Err(Error::NonContractive { index, norm });
            }
        }
        Ok(AffineIFS {
            linear,
            translations,
        })
    }

    /// Similarities `r_i I + v_i`.
    pub fn similarities(ratios: &[f64], translations: Vec<Vector>) -> Result<AffineIFS> {
        let d = translations.first().map_or(1, |v| v.len());
        let linear = MatrixTuple::new(
            ratios
                .iter()
                .map(|&r| Matrix::identity(d, d) * r)
                .collect(),
        )?;
        AffineIFS::new(linear, translations)
    }

    /// The gasket with vertices `(0,0)`, `(1,0)`, `(0,1)`.
    pub fn sierpinski() -> AffineIFS {
        let vertices = [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]];
        AffineIFS::similarities(
            &[0.5; 3],
            vertices
                .iter()
                .map(|v| Vector::from_column_slice(v))
                .collect(),
        )
        .expect("valid gasket")
    }

    pub fn linear(&self) -> &MatrixTuple {
        &self.linear
    }

    pub fn translations(&self) -> &[Vector] {
        &self.translations
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    pub fn len(&self) -> usize {
        self.linear.len()
    }

    pub fn is_empty(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn apply(&self, symbol: usize, x: &Vector) -> Vector {
        self.linear.get(symbol) * x + &self.translations[symbol]
    }

    /// The system with the map at `index` deleted.
    pub fn without(&self, index: usize) -> Result<AffineIFS> {
        let linear = self.linear.without(index)?;
        let mut translations = self.translations.clone();
        translations.remove(index);
        Ok(AffineIFS {
            linear,
            translations,
        })
    }

    /// Fixed point `(I − A_i)⁻¹ v_i` of a single map.
    pub fn fixed_point(&self, symbol: usize) -> Vector {
        let d = self.dim();
        let m = Matrix::identity(d, d) - self.linear.get(symbol);
        m.lu()
            .solve(&self.translations[symbol])
            .expect("contraction has no eigenvalue 1")
    }

    pub fn contraction(&self) -> f64 {
        self.linear.max_norm()
    }

    /// Radius `max‖v_i‖ / (1 − max α_1(A_i))` of a ball about the origin
    /// that contains the attractor and every forward orbit of the origin.
    pub fn attractor_bound(&self) -> f64 {
        let v = self.translations.iter().map(|v| v.norm()).fold(0.0, f64::max);
        v / (1.0 - self.contraction())
    }

    /// `T_{x_1} ∘ T_{x_2} ∘ ⋯ ∘ T_{x_n}(v0)`.
    pub fn code_point(&self, word: &Word, v0: &Vector) -> Result<Vector> {
        if word.is_empty() {
            return Err(Error::EmptyWord);
        }
        for &s in word.symbols() {
            if s >= self.len() {
                return Err(Error::SymbolOutOfRange {
                    symbol: s,
                    alphabet: self.len(),
                });
            }
        }
        if v0.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v0.len(),
            });
        }
        let mut x = v0.clone();
        for &s in word.symbols().iter().rev() {
            x = self.apply(s, &x);
        }
        Ok(x)
    }

    /// Upper bound on the distance from `code_point(word, v0)` to the limit
    /// point of any infinite extension of `word`.
    pub fn code_point_error(&self, word: &Word, v0: &Vector) -> f64 {
        let r = self.attractor_bound();
        self.contraction().powi(word.len() as i32) * (v0.norm() + r)
    }
}

/// Sampling parameters recorded alongside a point cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub burn_in: usize,
    pub count: usize,
    pub shards: usize,
}

/// A nonempty set of points in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector>,
    provenance: Provenance,
}

impl PointCloud {
    pub fn new(points: Vec<Vector>, provenance: Provenance) -> Result<PointCloud> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidParameter("point cloud is empty".into()))?;
        let d = first.len();
        for p in &points {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.len(),
                });
            }
        }
        Ok(PointCloud { points, provenance })
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn within_bound(&self, radius: f64) -> bool {
        let slack = 1e-12 * radius.max(1.0);
        self.points.iter().all(|p| p.norm() <= radius + slack)
    }

    /// Coordinatewise minimum and maximum.
    pub fn bounding_box(&self) -> (Vector, Vector) {
        let mut lo = self.points[0].clone();
        let mut hi = self.points[0].clone();
        for p in &self.points[1..] {
            for i in 0..p.len() {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        (lo, hi)
    }

    /// Longest side of the bounding box, a lower bound for the diameter.
    pub fn extent(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).amax()
    }
}

const SHARDS: usize = 16;

/// Random iteration from the origin with symbols drawn i.i.d. from `mu`.
/// The first `burn_in` iterates of each shard are discarded.
pub fn chaos_game(
    ifs: &AffineIFS,
    mu: &BernoulliMeasure,
    count: usize,
    burn_in: usize,
    seed: u64,
) -> Result<PointCloud> {
    if mu.alphabet() != ifs.len() {
        return Err(Error::DimensionMismatch {
            expected: ifs.len(),
            found: mu.alphabet(),
        });
    }
    if count == 0 {
        return Err(Error::InvalidParameter("count must be positive".into()));
    }
    let weights = WeightedIndex::new(mu.probabilities())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let shards = SHARDS.min(count);
    let points: Vec<Vector> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let quota = count / shards + usize::from(shard < count % shards);
            let mut rng = stream(seed, shard as u64);
            let mut x = Vector::zeros(ifs.dim());
            for _ in 0..burn_in {
                x = ifs.apply(weights.sample(&mut rng), &x);
            }
            let mut out = Vec::with_capacity(quota);
            for _ in 0..quota {
                x = ifs.apply(weights.sample(&mut rng), &x);
                out.push(x.clone());
            }
            out
        })
        .collect::<Vec<_>>()
        .concat();
    PointCloud::new(
        points,
        Provenance {
            seed,
            burn_in,
            count,
            shards,
        },
    )
}

/// Least-squares fit of `log N(ε)` against `log(1/ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDimension {
    pub estimate: f64,
    pub band: (f64, f64),
    pub standard_error: f64,
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    /// Every point coincides; the estimate is 0.
    pub zero_variance: bool,
}

fn occupied_boxes(points: &[Vector], origin: &Vector, scale: f64) -> usize {
    let boxes: HashSet<Vec<i64>> = points
        .iter()
        .map(|p| {
            p.iter()
                .zip(origin.iter())
                .map(|(x, o)| ((x - o) / scale).floor() as i64)
                .collect()
        })
        .collect();
    boxes.len()
}

/// Box-counting estimate over the given box side lengths, which must number
/// at least three and span at least two dyadic octaves.
pub fn box_dimension(cloud: &PointCloud, scales: &[f64]) -> Result<BoxDimension> {
    if scales.len() < 3 || scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter(
            "box counting needs at least three positive scales".into(),
        ));
    }
    let min = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scales.iter().cloned().fold(0.0, f64::max);
    if max / min < 4.0 - 1e-12 {
        return Err(Error::InvalidParameter(
            "box counting scales must span two octaves".into(),
        ));
    }
    let (origin, _) = cloud.bounding_box();
    if cloud.extent() == 0.0 {
        return Ok(BoxDimension {
            estimate: 0.0,
            band: (0.0, 0.0),
            standard_error: 0.0,
            scales: scales.to_vec(),
            counts: vec![1; scales.len()],
            zero_variance: true,
        });
    }
    let counts: Vec<usize> = scales
        .par_iter()
        .map(|&s| occupied_boxes(cloud.points(), &origin, s))
        .collect();
    let xs: Vec<f64> = scales.iter().map(|s| -s.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let standard_error = (rss / (n - 2.0) / sxx).sqrt();
    Ok(BoxDimension {
        estimate: slope,
        band: (slope - 2.0 * standard_error, slope + 2.0 * standard_error),
        standard_error,
        scales: scales.to_vec(),
        counts,
        zero_variance: false,
    })
}

/// Dyadic scales `2^{-lo}, …, 2^{-hi}` relative to the cloud's extent.
pub fn dyadic_scales(cloud: &PointCloud, lo: u32, hi: u32) -> Vec<f64> {
    let base = if cloud.extent() > 0.0 { cloud.extent() } else { 1.0 };
    (lo..=hi).map(|k| base * 0.5f64.powi(k as i32)).collect()
}

/// Uniform grid over a point set for nearest-neighbour queries.
struct Grid<'a> {
    points: &'a [Vector],
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Vector]) -> Grid<'a> {
        let d = points[0].len();
        let mut lo = points[0].clone();
        let mut hi = points[0].clone();
        for p in points {
            for i in 0..d {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let extent = (hi - lo).amax();
        let per_side = (points.len() as f64).powf(1.0 / d as f64).max(1.0);
        let cell = if extent > 0.0 { extent / per_side } else { 1.0 };
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Grid {
            points,
            cell,
            cells,
        }
    }

    fn key(p: &Vector, cell: f64) -> Vec<i64> {
        p.iter().map(|x| (x / cell).floor() as i64).collect()
    }

    fn nearest(&self, q: &Vector) -> f64 {
        let centre = Self::key(q, self.cell);
        let d = centre.len();
        let mut best = f64::INFINITY;
        let mut radius: i64 = 0;
        loop {
            // Every point outside the visited cube is farther than this.
            let reach = radius as f64 * self.cell;
            let side = 2 * radius + 1;
            let total = (side as usize).pow(d as u32);
            for idx in 0..total {
                let mut rest = idx;
                let mut key = Vec::with_capacity(d);
                let mut on_shell = false;
                for c in &centre {
                    let off = (rest % side as usize) as i64 - radius;
                    rest /= side as usize;
                    on_shell |= off.abs() == radius;
                    key.push(c + off);
                }
                if !on_shell {
                    continue;
                }
                if let Some(members) = self.cells.get(&key) {
                    for &i in members {
                        best = best.min((&self.points[i] - q).norm());
                    }
                }
            }
            if best <= reach {
                return best;
            }
            radius += 1;
        }
    }
}

/// Largest distance from a point of `from` to the set `to`.
pub fn directed_hausdorff(from: &PointCloud, to: &PointCloud) -> f64 {
    let grid = Grid::new(to.points());
    from.points()
        .par_iter()
        .map(|p| grid.nearest(p))
        .reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff_distance(a: &PointCloud, b: &PointCloud) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

/// Affinity dimension with one map deleted, compared with the full system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletionEntry {
    pub index: usize,
    pub bracket: DimensionBracket,
    /// `full.s_lo − deleted.s_hi`; positive means strictly smaller, certified.
    pub certified_gap: f64,
    pub certified_strict: bool,
    /// Difference of point estimates; not certified.
    pub point_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub full: DimensionBracket,
    pub deletions: Vec<DeletionEntry>,
}

impl MonotonicityReport {
    pub fn all_certified(&self) -> bool {
        self.deletions.iter().all(|e| e.certified_strict)
    }

    pub fn any_stalled(&self) -> bool {
        self.full.stalled || self.deletions.iter().any(|e| e.bracket.stalled)
    }
}

/// Affinity-dimension brackets of the system and of every one-map deletion.
pub fn monotonicity_experiment(
    ifs: &AffineIFS,
    n_max: usize,
    s_tol: f64,
    config: &Config,
) -> Result<MonotonicityReport> {
    tuple_monotonicity(ifs.linear(), n_max, s_tol, config)
}

/// [`monotonicity_experiment`] on the linear parts alone.
pub fn tuple_monotonicity(
    tuple: &MatrixTuple,
    n_max: usize,
    s_tol: f64,
    config: &Config,
) -> Result<MonotonicityReport> {
    if tuple.len() < 2 {
        return Err(Error::InvalidParameter(
            "deletion needs at least two maps".into(),
        ));
    }
    let full = affinity_dimension(tuple, n_max, s_tol, config)?;
    let deletions = (0..tuple.len())
        .into_par_iter()
        .map(|index| {
            let bracket = affinity_dimension(&tuple.without(index)?, n_max, s_tol, config)?;
            let certified_gap = full.s_lo - bracket.s_hi;
            Ok(DeletionEntry {
                index,
                certified_strict: certified_gap > 0.0 && full.certified && bracket.certified,
                certified_gap,
                point_gap: full.point_estimate - bracket.point_estimate,
                bracket,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonotonicityReport { full, deletions })
}

/// A certified affinity bracket next to a box-counting estimate of the same
/// attractor. The two are different quantities and are never merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionComparison {
    pub affinity: DimensionBracket,
    pub box_counting: BoxDimension,
}

pub fn compare_dimensions(
    ifs: &AffineIFS,
    cloud: &PointCloud,
    scales: &[f64],
    n_max: usize,
    s_tol: f64,
    config: &Config,
) -> Result<DimensionComparison> {
    Ok(DimensionComparison {
        affinity: affinity_dimension(ifs.linear(), n_max, s_tol, config)?,
        box_counting: box_dimension(cloud, scales)?,
    })
}
