//! Instance files, result bundles and binary matrix dumps.
//!
//! Complex numbers are serialized as `[re, im]`. The binary dump of a
//! matrix is row-major, each entry two little-endian `f64` (re, im).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::idempotent::SpectralIdempotent;
use crate::linalg::CMat;
use crate::model::{
    build_operator, CoefficientFamily, Decay, FamilyTail, PerturbedOperator, Side, SpectrumSpec,
};
use crate::{c64, Error, Result};

pub type Pair = [f64; 2];

fn pair(z: c64) -> Pair {
    [z.re, z.im]
}

fn unpair(p: &Pair) -> c64 {
    c64::new(p[0], p[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySection {
    /// `geometric` or `power`, naming the law of the `α` columns.
    pub kind: String,
    pub params: FamilyTail,
}

/// On-disk instance. `alpha` and `beta` are lists of rows (`N` rows of `R` entries).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub lambdas: Vec<Pair>,
    pub alpha: Vec<Vec<Pair>>,
    pub beta: Vec<Vec<Pair>>,
    /// Declared `(a, b)`; absent means `(−1, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accumulation: Option<Pair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySection>,
}

fn rows(m: &CMat) -> Vec<Vec<Pair>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|k| pair(m[(i, k)])).collect())
        .collect()
}

fn matrix(name: &'static str, rows: &[Vec<Pair>], n: usize) -> Result<CMat> {
    if rows.len() != n {
        return Err(Error::DimensionMismatch {
            what: name,
            expected: n,
            found: rows.len(),
        });
    }
    let r = rows.first().map(|x| x.len()).unwrap_or(0);
    if let Some(bad) = rows.iter().find(|x| x.len() != r) {
        return Err(Error::DimensionMismatch {
            what: name,
            expected: r,
            found: bad.len(),
        });
    }
    Ok(CMat::from_fn(n, r, |i, k| unpair(&rows[i][k])))
}

fn law_kind(d: &Decay) -> &'static str {
    match d {
        Decay::Geometric { .. } => "geometric",
        Decay::Power { .. } => "power",
    }
}

impl InstanceFile {
    pub fn from_operator(op: &PerturbedOperator) -> Self {
        let s = &op.spectrum;
        Self {
            lambdas: s.lambdas.iter().copied().map(pair).collect(),
            alpha: rows(op.alpha()),
            beta: rows(op.beta()),
            accumulation: s.accumulation_declared.then_some([s.a, s.b]),
            family: op.coeffs.tail.clone().map(|t| FamilySection {
                kind: law_kind(&t.alpha).into(),
                params: t,
            }),
        }
    }

    pub fn to_operator(&self) -> Result<PerturbedOperator> {
        let lambdas: Vec<c64> = self.lambdas.iter().map(unpair).collect();
        let n = lambdas.len();
        let spectrum = match self.accumulation {
            Some([a, b]) => SpectrumSpec::with_accumulation(lambdas, a, b)?,
            None => SpectrumSpec::sampled(lambdas)?,
        };
        let alpha = matrix("alpha rows", &self.alpha, n)?;
        let beta = matrix("beta rows", &self.beta, n)?;
        if alpha.ncols() != beta.ncols() {
            return Err(Error::DimensionMismatch {
                what: "beta columns",
                expected: alpha.ncols(),
                found: beta.ncols(),
            });
        }
        let tail = match &self.family {
            Some(f) => {
                if f.kind != law_kind(&f.params.alpha) {
                    return Err(Error::InvalidParameter(format!(
                        "family kind {:?} does not match its alpha law",
                        f.kind
                    )));
                }
                Some(f.params.clone())
            }
            None => None,
        };
        build_operator(spectrum, CoefficientFamily::new(alpha, beta, tail)?)
    }
}

pub fn read_instance(path: &Path) -> Result<PerturbedOperator> {
    let text = std::fs::read_to_string(path)?;
    let file: InstanceFile = serde_json::from_str(&text)?;
    file.to_operator()
}

pub fn write_instance(path: &Path, op: &PerturbedOperator) -> Result<()> {
    let text = serde_json::to_string_pretty(&InstanceFile::from_operator(op))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// SHA-256 of the compact JSON form of the instance.
pub fn instance_hash(op: &PerturbedOperator) -> String {
    let bytes = serde_json::to_vec(&InstanceFile::from_operator(op)).expect("instance serializes");
    hex::encode(Sha256::digest(bytes))
}

pub fn write_matrix_bin(path: &Path, m: &CMat) -> Result<()> {
    let mut buf = Vec::with_capacity(m.nrows() * m.ncols() * 16);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].re.to_le_bytes());
            buf.extend_from_slice(&m[(i, j)].im.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix_bin(path: &Path, rows: usize, cols: usize) -> Result<CMat> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() != rows * cols * 16 {
        return Err(Error::DimensionMismatch {
            what: "matrix file bytes",
            expected: rows * cols * 16,
            found: buf.len(),
        });
    }
    let f = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().expect("8 bytes"));
    Ok(CMat::from_fn(rows, cols, |i, j| {
        let o = (i * cols + j) * 16;
        c64::new(f(o), f(o + 8))
    }))
}

/// Summary of one idempotent computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub instance_hash: String,
    pub n: usize,
    pub r: usize,
    pub xi: f64,
    pub side: Side,
    pub residuals: BTreeMap<String, f64>,
    pub c_xi: f64,
    pub m_hat: Option<f64>,
    pub c_hat: Option<f64>,
    pub norm_j: Option<f64>,
    pub nodes: usize,
    pub wall_time_s: f64,
    /// Binary dump of `J`, relative to the bundle's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_file: Option<String>,
}

impl ResultBundle {
    pub fn new(op: &PerturbedOperator, id: &SpectralIdempotent, j_file: Option<String>) -> Self {
        let d = &id.diagnostics;
        let mut residuals = BTreeMap::new();
        for (k, v) in [
            ("idempotency", d.idempotency),
            ("commutation", d.commutation),
            ("partition", d.partition),
            ("product", d.product),
            ("oracle_gap", d.oracle_gap),
        ] {
            if let Some(v) = v {
                residuals.insert(k.to_string(), v);
            }
        }
        residuals.insert("quadrature_error".into(), d.quad_error);
        Self {
            instance_hash: instance_hash(op),
            n: op.n(),
            r: op.r(),
            xi: id.xi,
            side: id.side,
            residuals,
            c_xi: d.c_xi,
            m_hat: d.m_hat,
            c_hat: d.c_hat,
            norm_j: d.norm_j,
            nodes: d.nodes,
            wall_time_s: d.wall_time_s,
            j_file,
        }
    }
}
