//! Borel series, the `X(z)`/`Y(z)` factors, the core matrix `I + Y(z)X(z)`
//! and the formal resolvent `R(z) = (D − z)^{-1} − B(z)`.
//!
//! Index convention: the core matrix entry in row `n`, column `k` is
//! `δ_{k,n} + f^{(k,n)}(z)`, which is `(I + Vᴴ(D − z)^{-1}U)[n, k]`.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{diag_power, principal_sqrt, Exponent, HalfPlaneContour};
use crate::linalg::{self, CMat};
use crate::model::PerturbedOperator;
use crate::{c64, Error, Result};

/// Default cap on the core condition number.
pub const CORE_CONDITION_CAP: f64 = 1e12;

/// `f^{(i,j)}(z) = Σ_n α_n^{(i)} conj(β_n^{(j)}) / (λ_n − z)`, summed in index order.
pub fn borel_series(op: &PerturbedOperator, i: usize, j: usize, z: c64) -> Result<c64> {
    let d = diag_power(op.lambdas(), z, Exponent::NegOne)?;
    check_rank_index(op, i)?;
    check_rank_index(op, j)?;
    let (a, b) = (op.alpha(), op.beta());
    Ok((0..op.n()).fold(c64::new(0.0, 0.0), |acc, n| {
        acc + a[(n, i)] * b[(n, j)].conj() * d[n]
    }))
}

fn check_rank_index(op: &PerturbedOperator, k: usize) -> Result<()> {
    if k >= op.r() {
        return Err(Error::DimensionMismatch {
            what: "rank index",
            expected: op.r(),
            found: k,
        });
    }
    Ok(())
}

/// `X(z)c = Σ_k c_k (D − z)^{-1/2} u_k`.
pub fn apply_x(op: &PerturbedOperator, z: c64, c: &[c64]) -> Result<Vec<c64>> {
    if c.len() != op.r() {
        return Err(Error::DimensionMismatch {
            what: "X input",
            expected: op.r(),
            found: c.len(),
        });
    }
    let s = diag_power(op.lambdas(), z, Exponent::NegHalf)?;
    let a = op.alpha();
    Ok((0..op.n())
        .map(|n| s[n] * (0..op.r()).fold(c64::new(0.0, 0.0), |acc, k| acc + c[k] * a[(n, k)]))
        .collect())
}

/// `(Y(z)x)_k = Σ_n x_n conj(β_n^{(k)}) / √(λ_n − z)`.
pub fn apply_y(op: &PerturbedOperator, z: c64, x: &[c64]) -> Result<Vec<c64>> {
    if x.len() != op.n() {
        return Err(Error::DimensionMismatch {
            what: "Y input",
            expected: op.n(),
            found: x.len(),
        });
    }
    let s = diag_power(op.lambdas(), z, Exponent::NegHalf)?;
    let b = op.beta();
    Ok((0..op.r())
        .map(|k| {
            (0..op.n()).fold(c64::new(0.0, 0.0), |acc, n| {
                acc + x[n] * b[(n, k)].conj() * s[n]
            })
        })
        .collect())
}

/// `I + Y(z)X(z)` at one point.
#[derive(Clone, Debug)]
pub struct CoreMatrix {
    pub z: c64,
    pub entries: CMat,
    pub singular_values: Vec<f64>,
    pub condition: f64,
}

fn core_from_diag(op: &PerturbedOperator, z: c64, d: &[c64]) -> Result<CoreMatrix> {
    let r = op.r();
    let (a, b) = (op.alpha(), op.beta());
    let entries = Mat::from_fn(r, r, |m, k| {
        let mut s = if m == k {
            c64::new(1.0, 0.0)
        } else {
            c64::new(0.0, 0.0)
        };
        for n in 0..op.n() {
            s += a[(n, k)] * b[(n, m)].conj() * d[n];
        }
        s
    });
    let singular_values = linalg::singular_values(entries.as_ref())?;
    let condition = match (singular_values.first(), singular_values.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    };
    Ok(CoreMatrix {
        z,
        entries,
        singular_values,
        condition,
    })
}

/// Assembles the core matrix from Borel sums.
pub fn assemble_core(op: &PerturbedOperator, z: c64) -> Result<CoreMatrix> {
    let d = diag_power(op.lambdas(), z, Exponent::NegOne)?;
    core_from_diag(op, z, &d)
}

/// Inverse core `A(z)` with `a_{i,j}(z) = A[i, j]`.
#[derive(Clone, Debug)]
pub struct InverseCore {
    pub a: CMat,
    /// `‖A(z)‖₂`
    pub norm: f64,
    pub condition: f64,
}

pub fn invert_core(core: &CoreMatrix, cap: f64) -> Result<InverseCore> {
    if !(core.condition <= cap) {
        return Err(Error::NearSingularCore {
            z: core.z,
            condition: core.condition,
        });
    }
    let a = linalg::inverse(core.entries.as_ref());
    let norm = core.singular_values.last().map(|s| 1.0 / s).unwrap_or(1.0);
    Ok(InverseCore {
        a,
        norm,
        condition: core.condition,
    })
}

/// Everything needed to apply `B(z)` and `R(z)` at one point.
#[derive(Clone, Debug)]
pub struct ResolventParts {
    pub z: c64,
    /// `(λ_n − z)^{-1}`
    pub diag_inverse: Vec<c64>,
    pub a: CMat,
    pub norm_a: f64,
    pub condition: f64,
}

pub fn resolvent_parts(op: &PerturbedOperator, z: c64, cap: f64) -> Result<ResolventParts> {
    let d = diag_power(op.lambdas(), z, Exponent::NegOne)?;
    let core = core_from_diag(op, z, &d)?;
    let inv = invert_core(&core, cap)?;
    Ok(ResolventParts {
        z,
        diag_inverse: d,
        a: inv.a,
        norm_a: inv.norm,
        condition: inv.condition,
    })
}

impl ResolventParts {
    /// `B(z)x = (D − z)^{-1} U A Vᴴ (D − z)^{-1} x`.
    pub fn b_apply(&self, op: &PerturbedOperator, x: &[c64]) -> Vec<c64> {
        let (n, r) = (op.n(), op.r());
        let d = &self.diag_inverse;
        let (u, v) = (op.alpha(), op.beta());
        let h: Vec<c64> = (0..r)
            .map(|k| {
                (0..n).fold(c64::new(0.0, 0.0), |acc, j| {
                    acc + v[(j, k)].conj() * d[j] * x[j]
                })
            })
            .collect();
        let ah = linalg::matvec(self.a.as_ref(), &h);
        (0..n)
            .map(|i| d[i] * (0..r).fold(c64::new(0.0, 0.0), |acc, k| acc + u[(i, k)] * ah[k]))
            .collect()
    }

    /// `R(z)x = (D − z)^{-1}x − B(z)x`.
    pub fn resolvent_apply(&self, op: &PerturbedOperator, x: &[c64]) -> Vec<c64> {
        let b = self.b_apply(op, x);
        x.iter()
            .zip(&self.diag_inverse)
            .zip(b)
            .map(|((xi, di), bi)| xi * di - bi)
            .collect()
    }

    /// Dense `B(z)`.
    pub fn b_dense(&self, op: &PerturbedOperator) -> CMat {
        let d = &self.diag_inverse;
        let du = Mat::from_fn(op.n(), op.r(), |i, k| d[i] * op.alpha()[(i, k)]);
        let dv = Mat::from_fn(op.r(), op.n(), |k, j| op.beta()[(j, k)].conj() * d[j]);
        let dua = linalg::mul(du.as_ref(), self.a.as_ref());
        linalg::mul(dua.as_ref(), dv.as_ref())
    }

    /// Dense `R(z)`.
    pub fn resolvent_dense(&self, op: &PerturbedOperator) -> CMat {
        let b = self.b_dense(op);
        Mat::from_fn(op.n(), op.n(), |i, j| {
            if i == j {
                self.diag_inverse[i] - b[(i, j)]
            } else {
                -b[(i, j)]
            }
        })
    }
}

/// `R(z)x` for a single vector.
pub fn formal_resolvent_apply(op: &PerturbedOperator, z: c64, x: &[c64]) -> Result<Vec<c64>> {
    if x.len() != op.n() {
        return Err(Error::DimensionMismatch {
            what: "resolvent input",
            expected: op.n(),
            found: x.len(),
        });
    }
    Ok(resolvent_parts(op, z, CORE_CONDITION_CAP)?.resolvent_apply(op, x))
}

/// `max_n |Σ_k Σ_j x_j a_{k,j}(z)(δ_{k,n} + f^{(k,n)}(z)) − x_n| / (1 + ‖x‖)` for
/// `x ∈ ℂ^R`, with every Borel series recomputed through [`borel_series`].
pub fn cofactor_identity_residual(op: &PerturbedOperator, z: c64, x: &[c64]) -> Result<f64> {
    let r = op.r();
    if x.len() != r {
        return Err(Error::DimensionMismatch {
            what: "cofactor vector",
            expected: r,
            found: x.len(),
        });
    }
    let inv = invert_core(&assemble_core(op, z)?, CORE_CONDITION_CAP)?;
    let ax = linalg::matvec(inv.a.as_ref(), x);
    let mut worst = 0.0f64;
    for (n, xn) in x.iter().enumerate() {
        let mut lhs = c64::new(0.0, 0.0);
        for (k, axk) in ax.iter().enumerate() {
            let delta = if k == n {
                c64::new(1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            };
            lhs += axk * (delta + borel_series(op, k, n, z)?);
        }
        worst = worst.max((lhs - xn).norm());
    }
    Ok(worst / (1.0 + linalg::vec_norm(x)))
}

/// Dense `X(z)` (`N × R`) and `Y(z)` (`R × N`).
pub fn xy_dense(op: &PerturbedOperator, z: c64) -> Result<(CMat, CMat)> {
    let s = diag_power(op.lambdas(), z, Exponent::NegHalf)?;
    let x = Mat::from_fn(op.n(), op.r(), |n, k| s[n] * op.alpha()[(n, k)]);
    let y = Mat::from_fn(op.r(), op.n(), |k, n| op.beta()[(n, k)].conj() * s[n]);
    Ok((x, y))
}

/// `‖(I + XY)(I − X(I + YX)^{-1}Y) − I‖₂`, with `(I + YX)` formed from the
/// dense factors rather than from Borel sums.
pub fn woodbury_residual(op: &PerturbedOperator, z: c64) -> Result<f64> {
    let (x, y) = xy_dense(op, z)?;
    let n = op.n();
    let yx = linalg::add(
        linalg::identity(op.r()).as_ref(),
        linalg::mul(y.as_ref(), x.as_ref()).as_ref(),
    );
    let inv = linalg::inverse(yx.as_ref());
    let xy = linalg::mul(x.as_ref(), y.as_ref());
    let left = linalg::add(linalg::identity(n).as_ref(), xy.as_ref());
    let xay = linalg::mul(linalg::mul(x.as_ref(), inv.as_ref()).as_ref(), y.as_ref());
    let right = linalg::sub(linalg::identity(n).as_ref(), xay.as_ref());
    let prod = linalg::mul(left.as_ref(), right.as_ref());
    linalg::norm2(linalg::sub(prod.as_ref(), linalg::identity(n).as_ref()).as_ref())
}

/// `‖(T − z)R(z) − I‖₂` with `R(z)` from the formal resolvent.
pub fn circle_identity_residual(op: &PerturbedOperator, z: c64) -> Result<f64> {
    let parts = resolvent_parts(op, z, CORE_CONDITION_CAP)?;
    let r = parts.resolvent_dense(op);
    let mut tz = op.dense();
    for i in 0..op.n() {
        tz[(i, i)] -= z;
    }
    let p = linalg::mul(tz.as_ref(), r.as_ref());
    linalg::norm2(linalg::sub(p.as_ref(), linalg::identity(op.n()).as_ref()).as_ref())
}

/// `T̃ = (D − ξ) + S^{-1} U Vᴴ S` with `S = (D − ξ)^{1/2}`, plus the relative
/// residuals of `(T − ξ)S = S T̃` and `U(T − ξ) = T̃ U`, `U = S^{-1}(T − ξ)`.
#[derive(Clone, Debug)]
pub struct Symmetrized {
    pub xi: c64,
    pub t_tilde: CMat,
    pub residual_scaling: f64,
    pub residual_intertwining: f64,
}

pub fn symmetrized_operator(op: &PerturbedOperator, xi: c64) -> Result<Symmetrized> {
    let n = op.n();
    let s = diag_power(op.lambdas(), xi, Exponent::Half)?;
    let s_inv: Vec<c64> = s.iter().map(|v| v.inv()).collect();
    let (a, b, l) = (op.alpha(), op.beta(), op.lambdas());
    let t_tilde = Mat::from_fn(n, n, |i, j| {
        let mut acc = c64::new(0.0, 0.0);
        for k in 0..op.r() {
            acc += a[(i, k)] * b[(j, k)].conj();
        }
        let diag = if i == j {
            l[i] - xi
        } else {
            c64::new(0.0, 0.0)
        };
        diag + s_inv[i] * acc * s[j]
    });
    let mut txi = op.dense();
    for i in 0..n {
        txi[(i, i)] -= xi;
    }
    let sm = linalg::diag(&s);
    let lhs1 = linalg::mul(txi.as_ref(), sm.as_ref());
    let rhs1 = linalg::mul(sm.as_ref(), t_tilde.as_ref());
    let nt = linalg::norm2(txi.as_ref())?;
    let ntt = linalg::norm2(t_tilde.as_ref())?;
    let ns = s.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let scale1 = (nt * ns).max(ns * ntt).max(f64::MIN_POSITIVE);
    let residual_scaling =
        linalg::norm2(linalg::sub(lhs1.as_ref(), rhs1.as_ref()).as_ref())? / scale1;

    let u = Mat::from_fn(n, n, |i, j| s_inv[i] * txi[(i, j)]);
    let lhs2 = linalg::mul(u.as_ref(), txi.as_ref());
    let rhs2 = linalg::mul(t_tilde.as_ref(), u.as_ref());
    let nu = linalg::norm2(u.as_ref())?;
    let scale2 = (nu * nt).max(ntt * nu).max(f64::MIN_POSITIVE);
    let residual_intertwining =
        linalg::norm2(linalg::sub(lhs2.as_ref(), rhs2.as_ref()).as_ref())? / scale2;
    Ok(Symmetrized {
        xi,
        t_tilde,
        residual_scaling,
        residual_intertwining,
    })
}

/// Samples of `‖A(z)‖` along a contour at increasing density.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// `(samples, sup ‖A‖)` per refinement level.
    pub ladder: Vec<(usize, f64)>,
    pub sup_norm_a: f64,
    /// `sup ‖A(z)‖²`
    pub c_xi: f64,
    pub argmax: c64,
    /// Largest relative change of the sup between consecutive levels.
    pub last_change: f64,
    /// Set when the final refinement still moves the sup by more than 1%.
    pub non_cauchy: bool,
    /// Largest jump of `‖A‖` between neighbouring samples at the finest level.
    pub modulus_of_continuity: f64,
}

/// Refinement ladder over `levels` doublings starting from `base` samples per panel.
pub fn continuity_scan(
    op: &PerturbedOperator,
    contour: &HalfPlaneContour,
    base: usize,
    levels: usize,
) -> Result<ContinuityReport> {
    let mut ladder = Vec::new();
    let mut best = (0.0f64, c64::new(0.0, 0.0));
    let mut finest = Vec::new();
    for lev in 0..levels.max(1) {
        let m = base.max(1) << lev;
        let pts: Vec<c64> = contour
            .panels
            .iter()
            .flat_map(|p| (0..m).map(move |i| p.point((i as f64 + 0.5) / m as f64)))
            .collect();
        let norms: Vec<f64> = pts
            .par_iter()
            .map(|&z| {
                let core = assemble_core(op, z)?;
                Ok(invert_core(&core, CORE_CONDITION_CAP)?.norm)
            })
            .collect::<Result<_>>()?;
        let (i, s) = norms
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        ladder.push((pts.len(), s));
        if s >= best.0 {
            best = (s, pts[i]);
        }
        finest = norms;
    }
    let last_change = match ladder.len() {
        0 | 1 => 0.0,
        k => (ladder[k - 1].1 - ladder[k - 2].1).abs() / ladder[k - 2].1,
    };
    let modulus_of_continuity = finest
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    Ok(ContinuityReport {
        sup_norm_a: best.0,
        c_xi: best.0 * best.0,
        argmax: best.1,
        last_change,
        non_cauchy: last_change > 0.01,
        modulus_of_continuity,
        ladder,
    })
}

/// Per-point record for the diagnostic dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoreDiagnostic {
    pub z: c64,
    pub condition: f64,
    pub norm_a: f64,
    pub woodbury_residual: f64,
    pub cofactor_residual: f64,
}

pub fn core_diagnostics(op: &PerturbedOperator, zs: &[c64]) -> Result<Vec<CoreDiagnostic>> {
    zs.iter()
        .map(|&z| {
            let parts = resolvent_parts(op, z, CORE_CONDITION_CAP)?;
            let x: Vec<c64> = (0..op.r())
                .map(|k| c64::new(1.0, (k as f64) * 0.5))
                .collect();
            Ok(CoreDiagnostic {
                z,
                condition: parts.condition,
                norm_a: parts.norm_a,
                woodbury_residual: woodbury_residual(op, z)?,
                cofactor_residual: cofactor_identity_residual(op, z, &x)?,
            })
        })
        .collect()
}

/// `√(λ_n − z)` products reproduce `λ_n − z`; exposed for branch audits.
pub fn half_power_product_defect(op: &PerturbedOperator, z: c64) -> Result<f64> {
    let mut worst = 0.0f64;
    for l in op.lambdas() {
        let s = principal_sqrt(l - z)?;
        worst = worst.max((s * s - (l - z)).norm() / (l - z).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_operator, CoefficientFamily, SpectrumSpec};

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    fn one_term() -> PerturbedOperator {
        let s = SpectrumSpec::sampled(vec![c(0.0, 0.0)]).unwrap();
        let h = Mat::from_fn(1, 1, |_, _| c(0.5, 0.0));
        build_operator(s, CoefficientFamily::new(h.clone(), h, None).unwrap()).unwrap()
    }

    fn small() -> PerturbedOperator {
        let s = SpectrumSpec::sampled(vec![c(0.5, 0.1), c(-0.4, 0.2), c(0.1, -0.6), c(-0.2, -0.3)])
            .unwrap();
        let a = Mat::from_fn(4, 2, |i, k| {
            c(0.1 * (i as f64 + 1.0), 0.05 * k as f64 - 0.02 * i as f64)
        });
        let b = Mat::from_fn(4, 2, |i, k| {
            c(0.07 * (k as f64 + 1.0) - 0.01 * i as f64, 0.03 * i as f64)
        });
        build_operator(s, CoefficientFamily::new(a, b, None).unwrap()).unwrap()
    }

    #[test]
    fn single_term_borel() {
        let t = one_term();
        assert!((borel_series(&t, 0, 0, c(2.0, 0.0)).unwrap() - c(-0.125, 0.0)).norm() < 1e-16);
        assert!(matches!(
            borel_series(&t, 0, 0, c(0.0, 0.0)),
            Err(Error::Collision { .. })
        ));
    }

    #[test]
    fn zero_rank_core_is_empty_identity() {
        let s = SpectrumSpec::sampled(vec![c(0.5, 0.0), c(-0.5, 0.0)]).unwrap();
        let t = build_operator(s, CoefficientFamily::empty(2)).unwrap();
        let core = assemble_core(&t, c(0.0, 0.9)).unwrap();
        assert_eq!(core.entries.nrows(), 0);
        let x = vec![c(1.0, 0.0), c(2.0, 0.0)];
        let r = formal_resolvent_apply(&t, c(0.0, 0.9), &x).unwrap();
        assert!((r[0] - x[0] / (c(0.5, 0.0) - c(0.0, 0.9))).norm() < 1e-15);
        assert_eq!(
            cofactor_identity_residual(&t, c(0.0, 0.9), &[]).unwrap(),
            0.0
        );
    }

    #[test]
    fn rank_one_core_and_inverse() {
        let t = one_term();
        let z = c(2.0, 0.0);
        let core = assemble_core(&t, z).unwrap();
        assert!((core.entries[(0, 0)] - c(0.875, 0.0)).norm() < 1e-15);
        let inv = invert_core(&core, CORE_CONDITION_CAP).unwrap();
        assert!((inv.a[(0, 0)] - c(1.0 / 0.875, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn core_matches_y_after_x() {
        let t = small();
        let z = c(0.3, 0.9);
        let core = assemble_core(&t, z).unwrap();
        for k in 0..2 {
            let mut e = vec![c(0.0, 0.0); 2];
            e[k] = c(1.0, 0.0);
            let col = apply_y(&t, z, &apply_x(&t, z, &e).unwrap()).unwrap();
            for m in 0..2 {
                let delta = if m == k { 1.0 } else { 0.0 };
                assert!((core.entries[(m, k)] - c(delta, 0.0) - col[m]).norm() < 1e-15);
            }
        }
        assert!(apply_x(&t, z, &[c(0.0, 0.0); 2])
            .unwrap()
            .iter()
            .all(|v| v.norm() == 0.0));
    }

    #[test]
    fn resolvent_inverts_shifted_operator() {
        let t = small();
        for z in [c(1.0, 0.0), c(0.0, 1.0), c(-0.6, -0.8)] {
            assert!(circle_identity_residual(&t, z).unwrap() < 1e-13);
            assert!(woodbury_residual(&t, z).unwrap() < 1e-13);
            let x = vec![c(1.0, 0.5), c(-0.2, 0.0), c(0.3, 0.3), c(0.0, -1.0)];
            let rx = formal_resolvent_apply(&t, z, &x).unwrap();
            let back: Vec<c64> = t
                .apply(&rx)
                .iter()
                .zip(&rx)
                .map(|(a, b)| a - b * z)
                .collect();
            let err: f64 = back
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-13);
        }
    }

    #[test]
    fn symmetrized_identities_hold() {
        let t = small();
        let s = symmetrized_operator(&t, c(0.0, 0.7)).unwrap();
        assert!(s.residual_scaling < 1e-14);
        assert!(s.residual_intertwining < 1e-14);
        let s0 = symmetrized_operator(
            &build_operator(t.spectrum.clone(), CoefficientFamily::empty(4)).unwrap(),
            c(0.0, 0.7),
        )
        .unwrap();
        assert!(s0.residual_scaling < 1e-15);
        assert_eq!(s0.t_tilde[(1, 1)], c(-0.4, 0.2) - c(0.0, 0.7));
    }

    #[test]
    fn continuity_of_unperturbed_core() {
        let s = SpectrumSpec::sampled(vec![c(0.5, 0.0), c(-0.5, 0.0)]).unwrap();
        let t = build_operator(s, CoefficientFamily::empty(2)).unwrap();
        let g = HalfPlaneContour::new(0.0, crate::model::Side::Plus, true).unwrap();
        let r = continuity_scan(&t, &g, 8, 3).unwrap();
        assert_eq!(r.c_xi, 1.0);
        assert!(!r.non_cauchy);
    }
}
