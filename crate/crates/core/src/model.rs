//! Operator data `T = D_Λ + Σ_k u_k ⊗ v_k`, coefficient tails and the
//! summability gates applied before any contour work.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMat};
use crate::{c64, Error, Result};

/// Which half of the unit disc a curve `γ_ξ^±` encloses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        })
    }
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" | "+" => Ok(Side::Plus),
            "minus" | "-" => Ok(Side::Minus),
            other => Err(Error::InvalidParameter(format!("unknown side {other:?}"))),
        }
    }
}

/// Truncated eigenvalue sequence of the diagonal part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub lambdas: Vec<c64>,
    /// min Re over the accumulation set (when declared).
    pub a: f64,
    /// max Re over the accumulation set (when declared).
    pub b: f64,
    pub accumulation_declared: bool,
    /// Set when every `|λ_n| < 1`.
    pub normalized: bool,
}

impl SpectrumSpec {
    /// Spectrum with no declared accumulation set; `ξ` ranges over `(-1, 1)`.
    pub fn sampled(lambdas: Vec<c64>) -> Result<Self> {
        if lambdas
            .iter()
            .any(|l| !l.re.is_finite() || !l.im.is_finite())
        {
            return Err(Error::NonFinite("lambdas"));
        }
        let normalized = lambdas.iter().all(|l| l.norm() < 1.0);
        Ok(Self {
            lambdas,
            a: -1.0,
            b: 1.0,
            accumulation_declared: false,
            normalized,
        })
    }

    /// Spectrum whose accumulation set has real parts spanning `[a, b]`.
    pub fn with_accumulation(lambdas: Vec<c64>, a: f64, b: f64) -> Result<Self> {
        let mut s = Self::sampled(lambdas)?;
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidParameter(format!(
                "accumulation range needs a < b, got ({a}, {b})"
            )));
        }
        s.a = a;
        s.b = b;
        s.accumulation_declared = true;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Open interval of admissible abscissae.
    pub fn admissible_range(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// `min_n |Re λ_n − ξ|` with the minimizing index.
    pub fn shadow_margin(&self, xi: f64) -> (f64, Option<usize>) {
        self.lambdas
            .iter()
            .enumerate()
            .map(|(i, l)| ((l.re - xi).abs(), Some(i)))
            .fold((f64::INFINITY, None), |best, cur| {
                if cur.0 < best.0 {
                    cur
                } else {
                    best
                }
            })
    }
}

/// Closed-form modulus law for the coefficients beyond the truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum Decay {
    /// `|c_n| ≤ scale · ratio^n`.
    Geometric { scale: f64, ratio: f64 },
    /// `|c_n| ≤ scale · n^{-exponent}`.
    Power { scale: f64, exponent: f64 },
}

impl Decay {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            Decay::Geometric { scale, ratio } => scale * ratio.powi(n as i32),
            Decay::Power { scale, exponent } => scale * (n as f64).powf(-exponent),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Decay::Geometric { scale, ratio } => scale > 0.0 && ratio > 0.0 && ratio < 1.0,
            Decay::Power { scale, exponent } => scale > 0.0 && exponent > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad decay law {self:?}")))
        }
    }
}

/// Where the real parts of the omitted eigenvalues live: a union of
/// intervals `[p − radius, p + radius]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRealParts {
    pub points: Vec<f64>,
    pub radius: f64,
}

impl TailRealParts {
    pub fn distance(&self, xi: f64) -> f64 {
        self.points
            .iter()
            .map(|p| ((p - xi).abs() - self.radius).max(0.0))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Generator-supplied description of the infinite coefficient family.
///
/// Every column `k < columns` obeys the laws for all `n > N` (1-based).
/// With `exact` set, the moduli equal the law, which lets a divergent bound
/// be reported as proved divergence rather than as missing certification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyTail {
    pub alpha: Decay,
    pub beta: Decay,
    pub exact: bool,
    pub tail_re: Option<TailRealParts>,
}

/// A certified bound on an omitted tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum TailStatus {
    Certified(f64),
    /// The tail is provably infinite.
    Divergent,
    Uncertified,
}

impl TailStatus {
    pub fn value(&self) -> Option<f64> {
        match self {
            TailStatus::Certified(v) => Some(*v),
            _ => None,
        }
    }

    fn scale(self, c: f64) -> Self {
        match self {
            TailStatus::Certified(v) => TailStatus::Certified(v * c),
            other => other,
        }
    }

    fn div(self, d: f64) -> Self {
        match self {
            TailStatus::Certified(v) if d > 0.0 => TailStatus::Certified(v / d),
            TailStatus::Certified(0.0) => TailStatus::Certified(0.0),
            TailStatus::Certified(_) => TailStatus::Uncertified,
            other => other,
        }
    }
}

/// Kind of tail being bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    /// `Σ |c|² log(1 + 1/|c|)`.
    LogPlus,
    /// `Σ |c|²`.
    L2,
    /// `Σ |c|² log(1/|c|)`.
    LogInv,
}

/// Sum over `n > n0` of `f(n)` where `f` is eventually decreasing; explicit
/// terms until `start`, integral bound `∫_{m}^∞` afterwards.
fn power_tail(n0: usize, scale: f64, p: f64, kind: GateKind) -> TailStatus {
    let m = 2.0 * p - 1.0;
    if m <= 0.0 {
        return TailStatus::Divergent;
    }
    let s2 = scale * scale;
    match kind {
        GateKind::L2 => {
            let sum = if n0 == 0 {
                1.0 + 1.0 / m
            } else {
                (n0 as f64).powf(-m) / m
            };
            TailStatus::Certified(s2 * sum)
        }
        GateKind::LogPlus | GateKind::LogInv => {
            // b_n = s n^{-p} must stay below the monotonicity limit of x² log(c/x).
            let limit = if kind == GateKind::LogPlus {
                1.0
            } else {
                (-0.5f64).exp()
            };
            let first_ok = ((scale / limit).powf(1.0 / p)).ceil() as usize;
            // n^{-2p} log n decreases for n ≥ e^{1/(2p)}
            let mono = (1.0 / (2.0 * p)).exp().ceil() as usize;
            let start = n0.max(first_ok).max(mono).max(1);
            let log_c = if kind == GateKind::LogPlus {
                (2.0 / scale).ln().max(0.0)
            } else {
                (1.0 / scale).ln().max(0.0)
            };
            let term = |n: usize| {
                let nf = n as f64;
                s2 * nf.powf(-2.0 * p) * (log_c + p * nf.ln())
            };
            let mut explicit = 0.0;
            for n in (n0 + 1)..=start {
                let b = scale * (n as f64).powf(-p);
                explicit += if b >= limit {
                    if kind == GateKind::LogPlus {
                        b * b * (1.0 + 1.0 / b).ln()
                    } else {
                        return TailStatus::Uncertified;
                    }
                } else {
                    term(n)
                };
            }
            let sf = start as f64;
            let int0 = sf.powf(-m) / m;
            let int1 = sf.powf(-m) * (sf.ln() / m + 1.0 / (m * m));
            TailStatus::Certified(explicit + s2 * (log_c * int0 + p * int1))
        }
    }
}

fn geometric_tail(n0: usize, scale: f64, r: f64, kind: GateKind) -> TailStatus {
    let q = r * r;
    let s2 = scale * scale;
    let n0f = n0 as f64;
    let qn = q.powi(n0 as i32 + 1);
    let geo = qn / (1.0 - q);
    let lin = qn * ((n0f + 1.0) - n0f * q) / ((1.0 - q) * (1.0 - q));
    match kind {
        GateKind::L2 => TailStatus::Certified(s2 * geo),
        GateKind::LogPlus | GateKind::LogInv => {
            let limit = if kind == GateKind::LogPlus {
                1.0
            } else {
                (-0.5f64).exp()
            };
            if scale * r.powi(n0 as i32 + 1) > limit {
                return TailStatus::Uncertified;
            }
            let log_c = if kind == GateKind::LogPlus {
                (2.0 / scale).ln().max(0.0)
            } else {
                (1.0 / scale).ln().max(0.0)
            };
            TailStatus::Certified(s2 * (log_c * geo + (1.0 / r).ln() * lin))
        }
    }
}

impl Decay {
    /// Bound on `Σ_{n > n0} φ(|c_n|)` for one column.
    pub fn tail(&self, n0: usize, kind: GateKind, exact: bool) -> TailStatus {
        let t = match *self {
            Decay::Geometric { scale, ratio } => geometric_tail(n0, scale, ratio, kind),
            Decay::Power { scale, exponent } => power_tail(n0, scale, exponent, kind),
        };
        match t {
            TailStatus::Divergent if !exact => TailStatus::Uncertified,
            TailStatus::Certified(v) if !v.is_finite() => TailStatus::Uncertified,
            other => other,
        }
    }

    /// Supremum of the law over `n > n0`.
    pub fn tail_sup(&self, n0: usize) -> f64 {
        self.at(n0 + 1)
    }
}

/// Coefficient arrays `α` (columns `u_k`) and `β` (columns `v_k`), both `N × R`.
#[derive(Clone, Debug)]
pub struct CoefficientFamily {
    pub alpha: CMat,
    pub beta: CMat,
    pub tail: Option<FamilyTail>,
}

impl CoefficientFamily {
    pub fn new(alpha: CMat, beta: CMat, tail: Option<FamilyTail>) -> Result<Self> {
        if alpha.nrows() != beta.nrows() {
            return Err(Error::DimensionMismatch {
                what: "beta rows",
                expected: alpha.nrows(),
                found: beta.nrows(),
            });
        }
        if alpha.ncols() != beta.ncols() {
            return Err(Error::DimensionMismatch {
                what: "beta columns",
                expected: alpha.ncols(),
                found: beta.ncols(),
            });
        }
        for (name, m) in [("alpha", &alpha), ("beta", &beta)] {
            for k in 0..m.ncols() {
                let mut zero = true;
                for n in 0..m.nrows() {
                    let v = m[(n, k)];
                    if !v.re.is_finite() || !v.im.is_finite() {
                        return Err(Error::NonFinite(name));
                    }
                    zero &= v == c64::new(0.0, 0.0);
                }
                if zero {
                    return Err(Error::ZeroColumn { which: name, k });
                }
            }
        }
        if let Some(t) = &tail {
            t.alpha.validate()?;
            t.beta.validate()?;
        }
        Ok(Self { alpha, beta, tail })
    }

    /// The unperturbed case `K = 0` (`R = 0`).
    pub fn empty(n: usize) -> Self {
        Self {
            alpha: Mat::zeros(n, 0),
            beta: Mat::zeros(n, 0),
            tail: None,
        }
    }

    pub fn rank(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn len(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.nrows() == 0
    }
}

/// `T = D_Λ + α βᴴ` at truncation `(N, R)`.
#[derive(Clone, Debug)]
pub struct PerturbedOperator {
    pub spectrum: SpectrumSpec,
    pub coeffs: CoefficientFamily,
}

/// Validates dimensions and assembles the operator.
pub fn build_operator(
    spectrum: SpectrumSpec,
    coeffs: CoefficientFamily,
) -> Result<PerturbedOperator> {
    if spectrum.len() != coeffs.len() {
        return Err(Error::DimensionMismatch {
            what: "coefficient rows",
            expected: spectrum.len(),
            found: coeffs.len(),
        });
    }
    Ok(PerturbedOperator { spectrum, coeffs })
}

impl PerturbedOperator {
    pub fn n(&self) -> usize {
        self.spectrum.len()
    }

    pub fn r(&self) -> usize {
        self.coeffs.rank()
    }

    pub fn lambdas(&self) -> &[c64] {
        &self.spectrum.lambdas
    }

    pub fn alpha(&self) -> &CMat {
        &self.coeffs.alpha
    }

    pub fn beta(&self) -> &CMat {
        &self.coeffs.beta
    }

    /// `T x = D x + Σ_k ⟨x, v_k⟩ u_k`.
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        low_rank_apply(self.lambdas(), self.alpha(), self.beta(), x, false)
    }

    /// `T* x = D̄ x + Σ_k ⟨x, u_k⟩ v_k`.
    pub fn apply_adjoint(&self, x: &[c64]) -> Vec<c64> {
        low_rank_apply(self.lambdas(), self.beta(), self.alpha(), x, true)
    }

    /// Dense `diag(Λ) + α βᴴ`.
    pub fn dense(&self) -> CMat {
        let (a, b, l) = (self.alpha(), self.beta(), self.lambdas());
        Mat::from_fn(self.n(), self.n(), |i, j| {
            let mut s = if i == j { l[i] } else { c64::new(0.0, 0.0) };
            for k in 0..self.r() {
                s += a[(i, k)] * b[(j, k)].conj();
            }
            s
        })
    }

    /// `T* = D̄ + β αᴴ`; real parts (and so every abscissa test) are unchanged.
    pub fn adjoint(&self) -> PerturbedOperator {
        let mut spectrum = self.spectrum.clone();
        spectrum.lambdas = spectrum.lambdas.iter().map(|l| l.conj()).collect();
        let tail = self.coeffs.tail.as_ref().map(|t| FamilyTail {
            alpha: t.beta,
            beta: t.alpha,
            ..t.clone()
        });
        PerturbedOperator {
            spectrum,
            coeffs: CoefficientFamily {
                alpha: self.coeffs.beta.clone(),
                beta: self.coeffs.alpha.clone(),
                tail,
            },
        }
    }

    /// `−iT`, whose eigenvalue real parts are the imaginary parts of those of `T`.
    pub fn rotated(&self) -> PerturbedOperator {
        let mi = c64::new(0.0, -1.0);
        let lambdas: Vec<c64> = self.lambdas().iter().map(|l| mi * l).collect();
        let normalized = self.spectrum.normalized;
        let spectrum = SpectrumSpec {
            lambdas,
            a: -1.0,
            b: 1.0,
            accumulation_declared: false,
            normalized,
        };
        let alpha = Mat::from_fn(self.n(), self.r(), |i, k| mi * self.alpha()[(i, k)]);
        let tail = self.coeffs.tail.as_ref().map(|t| FamilyTail {
            tail_re: None,
            ..t.clone()
        });
        PerturbedOperator {
            spectrum,
            coeffs: CoefficientFamily {
                alpha,
                beta: self.beta().clone(),
                tail,
            },
        }
    }
}

fn low_rank_apply(l: &[c64], u: &CMat, v: &CMat, x: &[c64], conj_diag: bool) -> Vec<c64> {
    assert_eq!(x.len(), l.len(), "vector length must equal N");
    let r = u.ncols();
    let proj: Vec<c64> = (0..r)
        .map(|k| (0..l.len()).fold(c64::new(0.0, 0.0), |acc, n| acc + x[n] * v[(n, k)].conj()))
        .collect();
    (0..l.len())
        .map(|n| {
            let d = if conj_diag { l[n].conj() } else { l[n] };
            let mut s = d * x[n];
            for k in 0..r {
                s += proj[k] * u[(n, k)];
            }
            s
        })
        .collect()
}

/// Affine map `z ↦ scale·z + shift` taking original spectral data to normalized data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: c64,
}

impl AffineMap {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            shift: c64::new(0.0, 0.0),
        }
    }

    pub fn forward(&self, z: c64) -> c64 {
        z * self.scale + self.shift
    }

    pub fn inverse(&self, w: c64) -> c64 {
        (w - self.shift) / self.scale
    }
}

/// Shift and scale `T` so that `|λ_n| ≤ 1 − margin` and `‖T′‖`-based
/// spectral radius bound `≤ 1 − margin/2`.
pub fn normalize_to_disc(
    op: &PerturbedOperator,
    margin: f64,
) -> Result<(PerturbedOperator, AffineMap)> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "margin must lie in (0,1), got {margin}"
        )));
    }
    let pert = linalg::norm_fro(op.alpha().as_ref()) * linalg::norm_fro(op.beta().as_ref());
    let rmax = op.lambdas().iter().map(|l| l.norm()).fold(0.0, f64::max);
    if rmax <= 1.0 - margin && rmax + pert <= 1.0 - margin / 2.0 {
        return Ok((op.clone(), AffineMap::identity()));
    }
    let (mut lo_re, mut hi_re, mut lo_im, mut hi_im) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for l in op.lambdas() {
        lo_re = lo_re.min(l.re);
        hi_re = hi_re.max(l.re);
        lo_im = lo_im.min(l.im);
        hi_im = hi_im.max(l.im);
    }
    let m = if op.n() == 0 {
        c64::new(0.0, 0.0)
    } else {
        c64::new(0.5 * (lo_re + hi_re), 0.5 * (lo_im + hi_im))
    };
    let radius = op
        .lambdas()
        .iter()
        .map(|l| (l - m).norm())
        .fold(0.0, f64::max);
    let mut c = f64::INFINITY;
    if radius > 0.0 {
        c = c.min((1.0 - margin) / radius);
    }
    if radius + pert > 0.0 {
        c = c.min((1.0 - margin / 2.0) / (radius + pert));
    }
    if !c.is_finite() {
        c = 1.0;
    }
    let map = AffineMap {
        scale: c,
        shift: -m * c,
    };
    let sc = c.sqrt();
    let lambdas: Vec<c64> = op.lambdas().iter().map(|l| map.forward(*l)).collect();
    let mut spectrum = op.spectrum.clone();
    spectrum.lambdas = lambdas;
    spectrum.normalized = spectrum.lambdas.iter().all(|l| l.norm() < 1.0);
    if spectrum.accumulation_declared {
        spectrum.a = c * spectrum.a + map.shift.re;
        spectrum.b = c * spectrum.b + map.shift.re;
    }
    let alpha = Mat::from_fn(op.n(), op.r(), |i, k| op.alpha()[(i, k)] * sc);
    let beta = Mat::from_fn(op.n(), op.r(), |i, k| op.beta()[(i, k)] * sc);
    // scaled tails no longer follow the declared closed form exactly
    let tail = op.coeffs.tail.as_ref().map(|t| FamilyTail {
        alpha: scale_decay(t.alpha, sc),
        beta: scale_decay(t.beta, sc),
        exact: t.exact,
        tail_re: t.tail_re.as_ref().map(|tr| TailRealParts {
            points: tr.points.iter().map(|p| c * p + map.shift.re).collect(),
            radius: c * tr.radius,
        }),
    });
    Ok((
        PerturbedOperator {
            spectrum,
            coeffs: CoefficientFamily { alpha, beta, tail },
        },
        map,
    ))
}

fn scale_decay(d: Decay, s: f64) -> Decay {
    match d {
        Decay::Geometric { scale, ratio } => Decay::Geometric {
            scale: scale * s,
            ratio,
        },
        Decay::Power { scale, exponent } => Decay::Power {
            scale: scale * s,
            exponent,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
    Uncertified,
}

/// Partial sums of the summability conditions plus certified tails.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateReport {
    pub threshold: f64,
    /// `Σ |α|² log(1 + 1/|α|)` over the truncation.
    pub log_sum_alpha: f64,
    pub log_sum_beta: f64,
    /// `Σ |α|²`.
    pub l2_sum_alpha: f64,
    pub l2_sum_beta: f64,
    /// `Σ |α|² log(1/|α|)` over coefficients outside the exceptional set.
    pub log_inv_sum_alpha: f64,
    pub log_inv_sum_beta: f64,
    pub tail_log_alpha: TailStatus,
    pub tail_log_beta: TailStatus,
    pub tail_l2_alpha: TailStatus,
    pub tail_l2_beta: TailStatus,
    pub tail_log_inv_alpha: TailStatus,
    pub tail_log_inv_beta: TailStatus,
    /// `(n, k)` pairs (0-based) with `|α_n^{(k)}| ≥ 1`.
    pub exceptional_alpha: Vec<(usize, usize)>,
    pub exceptional_beta: Vec<(usize, usize)>,
    /// Supremum of coefficient moduli outside the exceptional sets, tails included.
    pub sup_outside_exceptional: f64,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
}

impl GateReport {
    /// Total of the ℓ² condition, `None` when a tail is uncertified.
    pub fn l2_total(&self) -> Option<f64> {
        let ta = match self.tail_l2_alpha {
            TailStatus::Certified(v) => v,
            TailStatus::Divergent => f64::INFINITY,
            TailStatus::Uncertified => return None,
        };
        let tb = match self.tail_l2_beta {
            TailStatus::Certified(v) => v,
            TailStatus::Divergent => f64::INFINITY,
            TailStatus::Uncertified => return None,
        };
        Some(self.l2_sum_alpha + ta + self.l2_sum_beta + tb)
    }

    pub fn l2_accepts(&self, threshold: f64) -> bool {
        let partial = self.l2_sum_alpha + self.l2_sum_beta;
        self.l2_total().unwrap_or(partial) < threshold
    }
}

fn column_sums(m: &CMat) -> (f64, f64, f64, Vec<(usize, usize)>, f64) {
    let (mut log_plus, mut l2, mut log_inv, mut sup) = (0.0, 0.0, 0.0, 0.0f64);
    let mut exceptional = Vec::new();
    for k in 0..m.ncols() {
        for n in 0..m.nrows() {
            let a = m[(n, k)].norm();
            if a == 0.0 {
                continue;
            }
            let a2 = a * a;
            log_plus += a2 * (1.0 + 1.0 / a).ln();
            l2 += a2;
            if a >= 1.0 {
                exceptional.push((n, k));
            } else {
                log_inv += a2 * (1.0 / a).ln();
                sup = sup.max(a);
            }
        }
    }
    (log_plus, l2, log_inv, exceptional, sup)
}

/// Evaluates the summability condition over the truncation, adding certified
/// tails from the family generator when present.
pub fn summability_gate(
    coeffs: &CoefficientFamily,
    threshold: f64,
    require_certified: bool,
) -> Result<GateReport> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let (lpa, l2a, lia, exa, supa) = column_sums(&coeffs.alpha);
    let (lpb, l2b, lib, exb, supb) = column_sums(&coeffs.beta);
    let n0 = coeffs.len();
    let r = coeffs.rank() as f64;
    let mut sup = supa.max(supb);
    let tails = |d: Option<Decay>, exact: bool| -> [TailStatus; 3] {
        match d {
            Some(d) => [GateKind::LogPlus, GateKind::L2, GateKind::LogInv]
                .map(|k| d.tail(n0, k, exact).scale(r)),
            None => [TailStatus::Uncertified; 3],
        }
    };
    let (ta, tb) = match &coeffs.tail {
        Some(t) => {
            sup = sup.max(t.alpha.tail_sup(n0)).max(t.beta.tail_sup(n0));
            (tails(Some(t.alpha), t.exact), tails(Some(t.beta), t.exact))
        }
        None => (tails(None, false), tails(None, false)),
    };
    let mut reasons = Vec::new();
    let mut verdict = Verdict::Accept;
    let mut uncertified = false;
    for (name, partial, tail) in [("alpha", lpa, ta[0]), ("beta", lpb, tb[0])] {
        let total = match tail {
            TailStatus::Certified(v) => partial + v,
            TailStatus::Divergent => {
                reasons.push(format!(
                    "{name}: omitted tail of the log condition diverges"
                ));
                f64::INFINITY
            }
            TailStatus::Uncertified => {
                uncertified = true;
                partial
            }
        };
        if !(total < threshold) {
            if total.is_finite() {
                reasons.push(format!(
                    "{name}: log sum {total:.6e} reaches threshold {threshold:.3e}"
                ));
            }
            verdict = Verdict::Reject;
        }
    }
    if !(sup < 1.0) {
        reasons.push(format!(
            "coefficients outside the exceptional sets reach modulus {sup}"
        ));
        verdict = Verdict::Reject;
    }
    if verdict == Verdict::Accept && uncertified && require_certified {
        reasons.push("no certified tail bound".into());
        verdict = Verdict::Uncertified;
    }
    Ok(GateReport {
        threshold,
        log_sum_alpha: lpa,
        log_sum_beta: lpb,
        l2_sum_alpha: l2a,
        l2_sum_beta: l2b,
        log_inv_sum_alpha: lia,
        log_inv_sum_beta: lib,
        tail_log_alpha: ta[0],
        tail_log_beta: tb[0],
        tail_l2_alpha: ta[1],
        tail_l2_beta: tb[1],
        tail_log_inv_alpha: ta[2],
        tail_log_inv_beta: tb[2],
        exceptional_alpha: exa,
        exceptional_beta: exb,
        sup_outside_exceptional: sup,
        verdict,
        reasons,
    })
}

/// Weighted tail `Σ_{n>N} Σ_k |c_n^{(k)}|² / |Re λ_n − ξ|` for one array.
pub fn weighted_tail(coeffs: &CoefficientFamily, xi: f64, beta: bool) -> TailStatus {
    let Some(t) = &coeffs.tail else {
        return TailStatus::Uncertified;
    };
    let law = if beta { t.beta } else { t.alpha };
    let l2 = law
        .tail(coeffs.len(), GateKind::L2, t.exact)
        .scale(coeffs.rank() as f64);
    match (&t.tail_re, l2) {
        (_, TailStatus::Divergent) => TailStatus::Divergent,
        (Some(tr), l2) => l2.div(tr.distance(xi)),
        (None, _) => TailStatus::Uncertified,
    }
}

/// Closed planar sets used to pick eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Empty,
    All,
    /// `F_ξ^±`: closed unit disc intersected with `Re z ≥ ξ` (plus) or `Re z ≤ ξ` (minus).
    HalfDisc {
        xi: f64,
        side: Side,
    },
    HalfPlane {
        xi: f64,
        side: Side,
    },
    Rectangle {
        x1: f64,
        x2: f64,
        y1: f64,
        y2: f64,
    },
    Disc {
        center: c64,
        radius: f64,
    },
}

impl Region {
    pub fn contains(&self, z: c64) -> bool {
        match *self {
            Region::Empty => false,
            Region::All => true,
            Region::HalfDisc { xi, side } => {
                z.norm() <= 1.0 && Region::HalfPlane { xi, side }.contains(z)
            }
            Region::HalfPlane {
                xi,
                side: Side::Plus,
            } => z.re >= xi,
            Region::HalfPlane {
                xi,
                side: Side::Minus,
            } => z.re <= xi,
            Region::Rectangle { x1, x2, y1, y2 } => {
                z.re >= x1 && z.re <= x2 && z.im >= y1 && z.im <= y2
            }
            Region::Disc { center, radius } => (z - center).norm() <= radius,
        }
    }

    /// Euclidean distance from `z` to the boundary of the region.
    pub fn boundary_distance(&self, z: c64) -> f64 {
        match *self {
            Region::Empty | Region::All => f64::INFINITY,
            Region::HalfDisc { xi, side } => crate::contour::HalfPlaneContour::new(xi, side, true)
                .map(|c| c.distance_to(z))
                .unwrap_or(0.0),
            Region::HalfPlane { xi, .. } => (z.re - xi).abs(),
            Region::Rectangle { x1, x2, y1, y2 } => {
                let corners = [
                    c64::new(x1, y1),
                    c64::new(x2, y1),
                    c64::new(x2, y2),
                    c64::new(x1, y2),
                ];
                (0..4)
                    .map(|i| segment_distance(corners[i], corners[(i + 1) % 4], z))
                    .fold(f64::INFINITY, f64::min)
            }
            Region::Disc { center, radius } => ((z - center).norm() - radius).abs(),
        }
    }
}

pub(crate) fn segment_distance(a: c64, b: c64, z: c64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (a + d * t - z).norm()
}

/// `N_A = {n : λ_n ∈ A}` as 0-based indices in increasing order.
pub fn index_set(spectrum: &SpectrumSpec, region: &Region) -> Vec<usize> {
    spectrum
        .lambdas
        .iter()
        .enumerate()
        .filter(|(_, l)| region.contains(**l))
        .map(|(i, _)| i)
        .collect()
}
