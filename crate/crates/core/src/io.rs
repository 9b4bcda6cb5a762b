//! JSON input files, serializable report forms of the structural types, and
//! fixed-precision JSON/CSV output.
//!
//! Input schema:
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "maps": [{"A": [[0.5, 0.0], [0.0, 0.5]], "v": [0.0, 0.0]}],
//!   "factors": [{"maps": [{"A": [[0.0, 2.0], [1.0, 0.0]]}], "beta": 1.0}],
//!   "s": 1.0
//! }
//! ```
//!
//! `maps` and `factors` are mutually exclusive. Translations must be given
//! for every map or for none.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{Map, Value};

use crate::equilibrium::GibbsDiagnostics;
use crate::ifs::{AffineIFS, PointCloud};
use crate::linalg::{from_rows, to_rows, Matrix, Vector};
use crate::potentials::{Factor, MatrixTuple, NormProduct, PotentialSpec};
use crate::pressure::CurvePoint;
use crate::structure::{BlockDecomposition, OrbitSet, Subspace};
use crate::{Error, Result};

/// What an input file describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Tuple,
    Ifs,
    SingularValuePotential,
    NormProduct,
}

/// A validated input file.
#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub dimension: usize,
    pub tuple: Option<MatrixTuple>,
    pub translations: Option<Vec<Vector>>,
    pub norm_product: Option<NormProduct>,
    pub s: Option<f64>,
}

impl Input {
    pub fn kind(&self) -> InputKind {
        if self.norm_product.is_some() {
            InputKind::NormProduct
        } else if self.s.is_some() {
            InputKind::SingularValuePotential
        } else if self.translations.is_some() {
            InputKind::Ifs
        } else {
            InputKind::Tuple
        }
    }

    /// The linear parts given under `maps`.
    pub fn tuple(&self) -> Result<&MatrixTuple> {
        self.tuple
            .as_ref()
            .ok_or_else(|| Error::Schema("this command needs \"maps\"".into()))
    }

    /// The affine system; every map must carry a translation and contract.
    pub fn ifs(&self) -> Result<AffineIFS> {
        let tuple = self.tuple()?;
        let translations = self
            .translations
            .clone()
            .ok_or_else(|| Error::Schema("every map needs a translation \"v\"".into()))?;
        AffineIFS::new(tuple.clone(), translations)
    }

    /// The potential described by the file, with `s` overriding the file's
    /// own exponent for singular value potentials.
    pub fn potential(&self, s: Option<f64>) -> Result<PotentialSpec> {
        if let Some(np) = &self.norm_product {
            return Ok(PotentialSpec::NormProduct(np.clone()));
        }
        let s = s.or(self.s).ok_or_else(|| {
            Error::Schema("a singular value potential needs \"s\"".into())
        })?;
        PotentialSpec::svf(self.tuple()?.clone(), s)
    }

    /// A norm product: the file's factors, or the single tuple with `β = 1`.
    pub fn norm_product(&self) -> Result<NormProduct> {
        match &self.norm_product {
            Some(np) => Ok(np.clone()),
            None => Ok(NormProduct::single(self.tuple()?.clone())),
        }
    }
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], at: &str) -> Result<()> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(schema(format!("{at}: unknown key \"{key}\"")));
        }
    }
    Ok(())
}

fn number(value: &Value, at: &str) -> Result<f64> {
    let x = value
        .as_f64()
        .ok_or_else(|| schema(format!("{at}: expected a number")))?;
    if !x.is_finite() {
        return Err(schema(format!("{at}: non-finite number")));
    }
    Ok(x)
}

fn vector(value: &Value, d: usize, at: &str) -> Result<Vector> {
    let items = value
        .as_array()
        .ok_or_else(|| schema(format!("{at}: expected an array")))?;
    if items.len() != d {
        return Err(schema(format!(
            "{at}: expected {d} entries, found {}",
            items.len()
        )));
    }
    let xs = items
        .iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{at}[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Vector::from_vec(xs))
}

fn matrix(value: &Value, d: usize, at: &str) -> Result<Matrix> {
    let rows = value
        .as_array()
        .ok_or_else(|| schema(format!("{at}: expected an array of rows")))?;
    if rows.len() != d {
        return Err(schema(format!(
            "{at}: expected {d} rows, found {}",
            rows.len()
        )));
    }
    let mut m = Matrix::zeros(d, d);
    for (r, row) in rows.iter().enumerate() {
        let row = vector(row, d, &format!("{at}[{r}]"))?;
        m.row_mut(r).copy_from(&row.transpose());
    }
    Ok(m)
}

fn maps(
    value: &Value,
    d: usize,
    allow_translation: bool,
    at: &str,
) -> Result<(MatrixTuple, Option<Vec<Vector>>)> {
    let items = value
        .as_array()
        .ok_or_else(|| schema(format!("{at}: expected an array")))?;
    if items.is_empty() {
        return Err(schema(format!("{at}: needs at least one map")));
    }
    let mut ms = Vec::with_capacity(items.len());
    let mut vs = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let here = format!("{at}[{i}]");
        let obj = item
            .as_object()
            .ok_or_else(|| schema(format!("{here}: expected an object")))?;
        let allowed: &[&str] = if allow_translation { &["A", "v"] } else { &["A"] };
        check_keys(obj, allowed, &here)?;
        let a = obj
            .get("A")
            .ok_or_else(|| schema(format!("{here}: missing \"A\"")))?;
        ms.push(matrix(a, d, &format!("{here}.A"))?);
        if let Some(v) = obj.get("v") {
            vs.push((i, vector(v, d, &format!("{here}.v"))?));
        }
    }
    if !vs.is_empty() && vs.len() != ms.len() {
        let missing = (0..ms.len())
            .find(|i| !vs.iter().any(|(j, _)| j == i))
            .unwrap_or(0);
        return Err(schema(format!(
            "{at}[{missing}]: missing \"v\" (translations are all or nothing)"
        )));
    }
    let tuple = MatrixTuple::new(ms).map_err(|e| match e {
        Error::Singular { index, det } => schema(format!(
            "{at}[{index}].A: singular matrix (|det| = {det:e})"
        )),
        other => schema(format!("{at}: {other}")),
    })?;
    let translations = (!vs.is_empty()).then(|| vs.into_iter().map(|(_, v)| v).collect());
    Ok((tuple, translations))
}

/// Parse and validate an input document.
pub fn parse_input_str(text: &str) -> Result<Input> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| schema(format!("malformed JSON: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| schema("top level must be an object"))?;
    check_keys(obj, &["dimension", "maps", "factors", "s"], "top level")?;
    let dimension = obj
        .get("dimension")
        .ok_or_else(|| schema("top level: missing \"dimension\""))?
        .as_u64()
        .filter(|&d| d > 0)
        .ok_or_else(|| schema("dimension: expected a positive integer"))? as usize;
    let s = obj.get("s").map(|v| number(v, "s")).transpose()?;
    if let Some(s) = s {
        if s <= 0.0 {
            return Err(schema("s: must be positive"));
        }
    }
    match (obj.get("maps"), obj.get("factors")) {
        (Some(_), Some(_)) => Err(schema("top level: \"maps\" and \"factors\" are exclusive")),
        (None, None) => Err(schema("top level: missing \"maps\" or \"factors\"")),
        (Some(m), None) => {
            let (tuple, translations) = maps(m, dimension, true, "maps")?;
            Ok(Input {
                dimension,
                tuple: Some(tuple),
                translations,
                norm_product: None,
                s,
            })
        }
        (None, Some(f)) => {
            if s.is_some() {
                return Err(schema("s: not used with \"factors\""));
            }
            let items = f
                .as_array()
                .filter(|a| !a.is_empty())
                .ok_or_else(|| schema("factors: expected a nonempty array"))?;
            let mut factors = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let here = format!("factors[{i}]");
                let fo = item
                    .as_object()
                    .ok_or_else(|| schema(format!("{here}: expected an object")))?;
                check_keys(fo, &["maps", "beta", "dimension"], &here)?;
                let d = match fo.get("dimension") {
                    Some(v) => v
                        .as_u64()
                        .filter(|&d| d > 0)
                        .ok_or_else(|| schema(format!("{here}.dimension: expected a positive integer")))?
                        as usize,
                    None => dimension,
                };
                let beta = match fo.get("beta") {
                    Some(v) => number(v, &format!("{here}.beta"))?,
                    None => 1.0,
                };
                let m = fo
                    .get("maps")
                    .ok_or_else(|| schema(format!("{here}: missing \"maps\"")))?;
                let (tuple, _) = maps(m, d, false, &format!("{here}.maps"))?;
                factors.push(Factor { tuple, beta });
            }
            let np = NormProduct::new(factors).map_err(|e| schema(format!("factors: {e}")))?;
            Ok(Input {
                dimension,
                tuple: None,
                translations: None,
                norm_product: Some(np),
                s: None,
            })
        }
    }
}

pub fn parse_input(path: &Path) -> Result<Input> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_input_str(&text)
}

fn map_json(a: &Matrix, v: Option<&Vector>) -> Value {
    let mut obj = Map::new();
    obj.insert("A".into(), serde_json::json!(to_rows(a)));
    if let Some(v) = v {
        obj.insert("v".into(), serde_json::json!(v.as_slice()));
    }
    Value::Object(obj)
}

/// The input document for a tuple, optionally with translations.
pub fn tuple_document(tuple: &MatrixTuple, translations: Option<&[Vector]>) -> Value {
    let maps: Vec<Value> = tuple
        .matrices()
        .iter()
        .enumerate()
        .map(|(i, a)| map_json(a, translations.map(|t| &t[i])))
        .collect();
    serde_json::json!({ "dimension": tuple.dim(), "maps": maps })
}

pub fn ifs_document(ifs: &AffineIFS) -> Value {
    tuple_document(ifs.linear(), Some(ifs.translations()))
}

pub fn norm_product_document(np: &NormProduct) -> Value {
    let factors: Vec<Value> = np
        .factors()
        .iter()
        .map(|f| {
            let maps: Vec<Value> = f.tuple.matrices().iter().map(|a| map_json(a, None)).collect();
            serde_json::json!({ "dimension": f.tuple.dim(), "maps": maps, "beta": f.beta })
        })
        .collect();
    serde_json::json!({ "dimension": np.factors()[0].tuple.dim(), "factors": factors })
}

/// Report form of a [`Subspace`]: its orthonormal basis as `d × k` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceRecord {
    pub ambient_dim: usize,
    pub dim: usize,
    pub basis: Vec<Vec<f64>>,
}

impl SubspaceRecord {
    pub fn new(w: &Subspace) -> SubspaceRecord {
        SubspaceRecord {
            ambient_dim: w.ambient_dim(),
            dim: w.dim(),
            basis: to_rows(w.basis()),
        }
    }

    /// Rebuild, checking the recorded sizes and orthonormality.
    pub fn validate(&self, tol: f64) -> Result<Subspace> {
        let m = rect_from_rows(&self.basis, self.ambient_dim, self.dim)?;
        let gram = m.transpose() * &m - Matrix::identity(self.dim, self.dim);
        if gram.amax() > tol {
            return Err(schema("subspace basis is not orthonormal"));
        }
        Subspace::from_columns(&m, tol)
    }
}

fn rect_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(schema(format!("expected a {nrows}x{ncols} array")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Report form of an [`OrbitSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub closed: bool,
    pub min_separation: Option<f64>,
    pub members: Vec<Vec<SubspaceRecord>>,
}

impl OrbitRecord {
    pub fn new(orbit: &OrbitSet) -> OrbitRecord {
        OrbitRecord {
            closed: orbit.closed(),
            min_separation: orbit.min_separation().is_finite().then(|| orbit.min_separation()),
            members: orbit
                .members()
                .iter()
                .map(|m| m.iter().map(SubspaceRecord::new).collect())
                .collect(),
        }
    }

    /// Rebuild and recheck closure under `tuples`; a record claiming
    /// closure that does not hold is rejected.
    pub fn validate(&self, tuples: &[&MatrixTuple], tol: f64) -> Result<OrbitSet> {
        let members = self
            .members
            .iter()
            .map(|m| m.iter().map(|w| w.validate(tol)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let orbit = OrbitSet::new(members)?.check_closed(tuples, tol);
        if self.closed && !orbit.closed() {
            return Err(schema("orbit is recorded as closed but is not"));
        }
        Ok(orbit)
    }
}

/// Report form of a [`BlockDecomposition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub dimension: usize,
    pub block_dims: Vec<usize>,
    pub basis_change: Vec<Vec<f64>>,
    /// `blocks[r][j]` is the `r`-th diagonal block of generator `j`.
    pub blocks: Vec<Vec<Vec<Vec<f64>>>>,
    pub lower_defect: f64,
}

impl DecompositionRecord {
    pub fn new(dec: &BlockDecomposition, tuple: &MatrixTuple) -> DecompositionRecord {
        DecompositionRecord {
            dimension: tuple.dim(),
            block_dims: dec.block_dims().to_vec(),
            basis_change: to_rows(dec.basis_change()),
            blocks: dec
                .blocks()
                .iter()
                .map(|b| b.matrices().iter().map(to_rows).collect())
                .collect(),
            lower_defect: dec.lower_defect(tuple),
        }
    }

    /// Rebuild against `tuple`, checking orthogonality, block shape and the
    /// recorded diagonal blocks.
    pub fn validate(&self, tuple: &MatrixTuple, tol: f64) -> Result<BlockDecomposition> {
        let q = from_rows(&self.basis_change)?;
        let dec = BlockDecomposition::from_parts(tuple, q, self.block_dims.clone(), tol)?;
        if self.blocks.len() != dec.blocks().len() {
            return Err(schema("recorded block count differs"));
        }
        for (rec, block) in self.blocks.iter().zip(dec.blocks()) {
            if rec.len() != block.len() {
                return Err(schema("recorded block has the wrong number of generators"));
            }
            for (rows, m) in rec.iter().zip(block.matrices()) {
                let r = rect_from_rows(rows, m.nrows(), m.ncols())?;
                if (r - m).amax() > tol * m.amax().max(1.0) {
                    return Err(schema("recorded block differs from the conjugated tuple"));
                }
            }
        }
        Ok(dec)
    }
}

/// Formats every float with 17 significant digits.
struct FixedFloats<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// A float in scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty JSON with fixed-precision floats; non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloats(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(e.to_string()))?;
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::Io(e.to_string()))
}

fn csv_string(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(&row).map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// One point per row, columns `x0, x1, …`.
pub fn point_cloud_csv(cloud: &PointCloud) -> Result<String> {
    let header: Vec<String> = (0..cloud.dim()).map(|i| format!("x{i}")).collect();
    csv_string(
        &header,
        cloud.points().iter().map(|p| p.iter().map(|&x| fmt_f64(x)).collect()),
    )
}

pub fn curve_csv(curve: &[CurvePoint]) -> Result<String> {
    let header = ["s", "lower", "upper"].map(String::from);
    csv_string(
        &header,
        curve
            .iter()
            .map(|p| vec![fmt_f64(p.s), fmt_f64(p.lower), fmt_f64(p.upper)]),
    )
}

/// Per-depth defects followed by the fitted slopes on a `slope` row.
pub fn gibbs_csv(diag: &GibbsDiagnostics) -> Result<String> {
    let header = [
        "depth",
        "normalization",
        "invariance",
        "submultiplicativity",
        "ratio_spread",
    ]
    .map(String::from);
    let rows = diag.depths.iter().enumerate().map(|(i, n)| {
        vec![
            n.to_string(),
            fmt_f64(diag.normalization[i]),
            fmt_f64(diag.invariance[i]),
            fmt_f64(diag.submultiplicativity[i]),
            fmt_f64(diag.ratio_spread[i]),
        ]
    });
    let slope = std::iter::once(vec![
        "slope".to_string(),
        fmt_f64(diag.slopes.normalization),
        fmt_f64(diag.slopes.invariance),
        fmt_f64(diag.slopes.submultiplicativity),
        fmt_f64(diag.slopes.ratio_spread),
    ]);
    csv_string(&header, rows.chain(slope))
}
