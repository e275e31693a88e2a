//! Structure-blind ground truth: dense eigensystems, Riesz projectors and the
//! commutant of `T`.

use std::f64::consts::PI;

use faer::Mat;
use rayon::prelude::*;

use crate::contour::{integrate, HalfPlaneContour, Measure, QuadConfig, QuadratureRule};
use crate::linalg::{self, CMat};
use crate::model::Region;
use crate::{c64, Error, Result};

/// Largest dimension the dense routines accept.
pub const DENSE_CAP: usize = 4096;
/// Eigenvalue gap below which a system counts as near-defective.
pub const DEFECTIVE_GAP: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub values: Vec<c64>,
    /// Unit right eigenvectors as columns.
    pub right: CMat,
    /// Unit left eigenvectors as columns: `l_iᴴ T = μ_i l_iᴴ`.
    pub left: CMat,
    /// `l_iᴴ r_i`
    pub normalization: Vec<c64>,
    pub min_gap: f64,
    /// `max_i ‖T r_i − μ_i r_i‖ / ‖T‖`
    pub residual: f64,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn near_defective(&self) -> bool {
        self.min_gap < DEFECTIVE_GAP
    }

    /// `r_i l_iᴴ / (l_iᴴ r_i)`
    pub fn eigenprojector(&self, i: usize) -> CMat {
        let n = self.right.nrows();
        let s = self.normalization[i].inv();
        Mat::from_fn(n, n, |a, b| {
            self.right[(a, i)] * self.left[(b, i)].conj() * s
        })
    }

    /// Sum of eigenprojectors over the given indices.
    pub fn projector_onto(&self, indices: &[usize]) -> CMat {
        let n = self.right.nrows();
        let k = indices.len();
        let r = Mat::from_fn(n, k, |a, j| {
            self.right[(a, indices[j])] * self.normalization[indices[j]].inv()
        });
        let l = Mat::from_fn(k, n, |j, b| self.left[(b, indices[j])].conj());
        linalg::mul(r.as_ref(), l.as_ref())
    }

    /// `max_{i≠j} |l_iᴴ r_j| / |l_iᴴ r_i|`
    pub fn biorthogonality_defect(&self) -> f64 {
        let g = linalg::mul(
            linalg::adjoint(self.left.as_ref()).as_ref(),
            self.right.as_ref(),
        );
        let mut worst = 0.0f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i != j {
                    worst = worst.max(g[(i, j)].norm() / g[(i, i)].norm());
                }
            }
        }
        worst
    }
}

fn min_gap(values: &[c64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..values.len() {
        for j in 0..i {
            gap = gap.min((values[i] - values[j]).norm());
        }
    }
    gap
}

fn unit_columns(m: &CMat) -> CMat {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let nrm = (0..m.nrows())
            .map(|i| m[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if nrm > 0.0 {
            for i in 0..m.nrows() {
                out[(i, j)] = m[(i, j)] / nrm;
            }
        }
    }
    out
}

/// Dense eigendecomposition. Left eigenvectors come from an independent
/// decomposition of `Tᴴ`, matched to the right ones by nearest eigenvalue.
pub fn dense_eig(t: &CMat) -> Result<EigenSystem> {
    let n = t.nrows();
    if n > DENSE_CAP {
        return Err(Error::TooLarge { n, cap: DENSE_CAP });
    }
    if n == 0 {
        return Ok(EigenSystem {
            values: Vec::new(),
            right: Mat::zeros(0, 0),
            left: Mat::zeros(0, 0),
            normalization: Vec::new(),
            min_gap: f64::INFINITY,
            residual: 0.0,
        });
    }
    let ev = t
        .eigen()
        .map_err(|e| Error::Linalg(format!("eigensolver failed: {e:?}")))?;
    let values: Vec<c64> = (0..n).map(|i| ev.S().column_vector()[i]).collect();
    let right = unit_columns(&ev.U().to_owned());
    let th = linalg::adjoint(t.as_ref());
    let evh = th
        .eigen()
        .map_err(|e| Error::Linalg(format!("eigensolver failed: {e:?}")))?;
    let left_raw = unit_columns(&evh.U().to_owned());
    let mut used = vec![false; n];
    let mut left = Mat::zeros(n, n);
    for i in 0..n {
        let target = values[i].conj();
        let j = (0..n)
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                (evh.S().column_vector()[a] - target)
                    .norm()
                    .total_cmp(&(evh.S().column_vector()[b] - target).norm())
            })
            .expect("an unused left eigenvector remains");
        used[j] = true;
        for a in 0..n {
            left[(a, i)] = left_raw[(a, j)];
        }
    }
    let normalization: Vec<c64> = (0..n)
        .map(|i| {
            (0..n).fold(c64::new(0.0, 0.0), |acc, a| {
                acc + left[(a, i)].conj() * right[(a, i)]
            })
        })
        .collect();
    let tn = linalg::norm2_capped(t.as_ref(), 512).max(f64::MIN_POSITIVE);
    let tr = linalg::mul(t.as_ref(), right.as_ref());
    let mut residual = 0.0f64;
    for i in 0..n {
        let r = (0..n)
            .map(|a| (tr[(a, i)] - right[(a, i)] * values[i]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        residual = residual.max(r / tn);
    }
    Ok(EigenSystem {
        min_gap: min_gap(&values),
        values,
        right,
        left,
        normalization,
        residual,
    })
}

/// Riesz projector for a region as a sum of eigenprojectors.
pub fn riesz_oracle(sys: &EigenSystem, region: &Region, floor: f64) -> Result<CMat> {
    if sys.near_defective() {
        return Err(Error::NearDefective { gap: sys.min_gap });
    }
    let mut inside = Vec::new();
    for (i, &mu) in sys.values.iter().enumerate() {
        let distance = region.boundary_distance(mu);
        if distance < floor {
            return Err(Error::BoundaryCollision { mu, distance });
        }
        if region.contains(mu) {
            inside.push(i);
        }
    }
    Ok(sys.projector_onto(&inside))
}

/// Deterministic probe vectors used to drive adaptive refinement of matrix integrands.
pub(crate) fn probe_vectors(n: usize) -> [Vec<c64>; 2] {
    let g = 0.618_033_988_749_894_9;
    let a = (0..n)
        .map(|i| c64::from_polar(1.0, 2.0 * PI * ((i as f64 + 1.0) * g).fract()))
        .collect();
    let b = (0..n)
        .map(|i| c64::new(1.0 + 0.5 * ((i as f64 + 1.0) * g * g).fract(), -0.25))
        .collect();
    [a, b]
}

fn shifted(t: &CMat, z: c64) -> CMat {
    let mut m = t.clone();
    for i in 0..t.nrows() {
        m[(i, i)] -= z;
    }
    m
}

/// Quadrature rule refined on `(T − z)^{-1}` applied to the probe vectors,
/// one dense LU per node.
pub fn dense_contour_rule(
    t: &CMat,
    contour: &HalfPlaneContour,
    cfg: &QuadConfig,
) -> Result<QuadratureRule> {
    let n = t.nrows();
    let probes = probe_vectors(n);
    let rhs = Mat::from_fn(n, 2, |i, j| probes[j][i]);
    let r = integrate(contour, cfg, Measure::Complex, |z| {
        let sol = linalg::solve(shifted(t, z).as_ref(), rhs.as_ref());
        Ok((0..2)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| sol[(i, j)])
            .collect())
    })?;
    Ok(r.rule)
}

/// `−(1/2πi) Σ_i w_i (T − z_i)^{-1}` over the first `limit` nodes of `rule`
/// (all of them when `limit` is `None`).
pub fn dense_contour_projector_with_rule(
    t: &CMat,
    rule: &QuadratureRule,
    limit: Option<usize>,
) -> CMat {
    let n = t.nrows();
    let m = limit.unwrap_or(rule.len()).min(rule.len());
    let mut acc = Mat::zeros(n, n);
    let scale = c64::new(0.0, -2.0 * PI).inv();
    // bounded chunks keep memory at a few N² blocks
    for start in (0..m).step_by(8) {
        let end = (start + 8).min(m);
        let invs: Vec<CMat> = (start..end)
            .into_par_iter()
            .map(|i| linalg::inverse(shifted(t, rule.nodes[i]).as_ref()))
            .collect();
        for (k, inv) in invs.iter().enumerate() {
            let w = rule.weights[start + k] * scale;
            for j in 0..n {
                for i in 0..n {
                    acc[(i, j)] += inv[(i, j)] * w;
                }
            }
        }
    }
    acc
}

/// Dense-resolvent Riesz projector for `γ_ξ^±`.
pub fn dense_contour_projector(
    t: &CMat,
    contour: &HalfPlaneContour,
    cfg: &QuadConfig,
) -> Result<CMat> {
    let rule = dense_contour_rule(t, contour, cfg)?;
    Ok(dense_contour_projector_with_rule(t, &rule, None))
}

/// Eigenprojector sum cross-checked against the dense contour route.
#[derive(Clone, Debug)]
pub struct CheckedProjector {
    pub projector: CMat,
    /// `‖P − P′‖₂` between the two routes, when a contour route exists.
    pub route_gap: Option<f64>,
}

/// [`riesz_oracle`] plus the dense-contour cross-check for half-disc regions;
/// the two routes must agree to `1e-8`.
pub fn riesz_oracle_checked(
    t: &CMat,
    sys: &EigenSystem,
    region: &Region,
    floor: f64,
    cfg: &QuadConfig,
) -> Result<CheckedProjector> {
    let projector = riesz_oracle(sys, region, floor)?;
    let route_gap = match *region {
        Region::HalfDisc { xi, side } => {
            let contour = HalfPlaneContour::new(xi, side, true)?;
            let p2 = dense_contour_projector(t, &contour, cfg)?;
            let gap = linalg::norm2(linalg::sub(projector.as_ref(), p2.as_ref()).as_ref())?;
            if !(gap <= 1e-8) {
                return Err(Error::OracleMismatch { gap });
            }
            Some(gap)
        }
        _ => None,
    };
    Ok(CheckedProjector {
        projector,
        route_gap,
    })
}

/// Refuses scalar multiples of the identity.
pub fn ensure_not_scalar(t: &CMat) -> Result<()> {
    let n = t.nrows();
    if n == 0 {
        return Err(Error::ScalarOperator);
    }
    let tr = (0..n).fold(c64::new(0.0, 0.0), |a, i| a + t[(i, i)]) / n as f64;
    let off = Mat::from_fn(n, n, |i, j| if i == j { t[(i, j)] - tr } else { t[(i, j)] });
    if linalg::norm_fro(off.as_ref()) <= 1e-14 * linalg::norm_fro(t.as_ref()).max(f64::MIN_POSITIVE)
    {
        return Err(Error::ScalarOperator);
    }
    Ok(())
}

/// Basis of `{A : AT = TA}`. For a simple spectrum this is the set of
/// eigenprojectors, so the dimension is exactly `N`.
pub fn commutant_basis(t: &CMat, sys: &EigenSystem) -> Result<Vec<CMat>> {
    ensure_not_scalar(t)?;
    if sys.near_defective() {
        return Err(Error::NearDefective { gap: sys.min_gap });
    }
    Ok((0..sys.len()).map(|i| sys.eigenprojector(i)).collect())
}

/// Dimension of the null space of `A ↦ AT − TA`, from the singular values
/// of its `N² × N²` Kronecker form. Small `N` only.
pub fn sylvester_nullity(t: &CMat, rel_tol: f64) -> Result<usize> {
    let n = t.nrows();
    if n > 32 {
        return Err(Error::TooLarge { n, cap: 32 });
    }
    // column-major vec: vec(AT) = (Tᵀ ⊗ I) vec(A), vec(TA) = (I ⊗ T) vec(A)
    let k = Mat::from_fn(n * n, n * n, |row, col| {
        let (i, j) = (row % n, row / n);
        let (p, q) = (col % n, col / n);
        let mut v = c64::new(0.0, 0.0);
        if i == p {
            v += t[(q, j)];
        }
        if j == q {
            v -= t[(i, p)];
        }
        v
    });
    let s = linalg::singular_values(k.as_ref())?;
    let smax = s.first().copied().unwrap_or(0.0);
    Ok(s.iter().filter(|&&x| x <= rel_tol * smax).count())
}
