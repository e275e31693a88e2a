//! Spectral-subspace membership certificates.
//!
//! A vector `x` lies in `H_T(F)` when analytic functions `g_k` on `F^c`
//! reproduce `x` through the local resolvent
//!
//! `f_x(z) = Σ_{n∈N_F} (x_n − Σ_k g_k(z)α_n^{(k)})/(λ_n − z) e_n + Σ_{n∈N_{F^c}} Σ_k Γ(g_k)(z, λ_n) α_n^{(k)} e_n`.
//!
//! For `F = F_ξ^±` the candidate `g_k` come from a contour integral of
//! `h(ξ′) = A(ξ′) Vᴴ (D − ξ′)^{-1} y` (with `y = x`), and the certificate
//! reports how well each defining condition holds on a sampling grid.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{build_contour, integrate, HalfPlaneContour, Measure, QuadratureRule};
use crate::idempotent::{delta_structural, half_plane_idempotent, IdempotentConfig};
use crate::linalg;
use crate::model::{index_set, PerturbedOperator, Region, Side};
use crate::resolvent::resolvent_parts;
use crate::{c64, Error, Result};

/// `Γ(g)(z, w)`: divided difference, or a central-difference derivative at `z = w`
/// with step `1e-6 · scale`.
pub fn divided_difference(g: impl Fn(c64) -> c64, z: c64, w: c64, scale: f64) -> c64 {
    if z != w {
        (g(z) - g(w)) / (z - w)
    } else {
        let h = 1e-6 * scale.max(f64::MIN_POSITIVE);
        (g(w + h) - g(w - h)) / (2.0 * h)
    }
}

/// Sampling grid in `F^c`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub radii: Vec<f64>,
    pub per_circle: usize,
    /// Points inside `F^c ∩ D̄`.
    pub inner: usize,
    pub clearance: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            radii: vec![1.5, 3.0],
            per_circle: 32,
            inner: 32,
            clearance: 0.05,
        }
    }
}

/// Circles outside the disc plus a polar lattice thinned to `inner` points
/// of `F^c ∩ D̄` at the requested clearance from the curve.
pub fn build_grid(xi: f64, side: Side, spec: &GridSpec) -> Result<Vec<c64>> {
    let contour = HalfPlaneContour::new(xi, side, true)?;
    let mut pts = Vec::new();
    for &r in &spec.radii {
        for j in 0..spec.per_circle {
            pts.push(c64::from_polar(
                r,
                2.0 * PI * (j as f64 + 0.25) / spec.per_circle as f64,
            ));
        }
    }
    let mut cand = Vec::new();
    for i in 0..24 {
        for j in 0..48 {
            let z = c64::from_polar((i as f64 + 0.5) / 24.0, 2.0 * PI * (j as f64 + 0.5) / 48.0);
            if !(Region::HalfDisc { xi, side }).contains(z)
                && contour.distance_to(z) >= spec.clearance
            {
                cand.push(z);
            }
        }
    }
    if spec.inner > 0 && !cand.is_empty() {
        let step = (cand.len() as f64 / spec.inner as f64).max(1.0);
        let mut k = 0.0;
        while (k as usize) < cand.len()
            && pts.len() < spec.radii.len() * spec.per_circle + spec.inner
        {
            pts.push(cand[k as usize]);
            k += step;
        }
    }
    Ok(pts)
}

/// The `g_k` of a vector, represented by the quadrature data that defines them.
#[derive(Clone, Debug)]
pub struct GSamples {
    pub xi: f64,
    pub side: Side,
    pub grid: Vec<c64>,
    /// `g_k(z)` per grid point.
    pub g: Vec<Vec<c64>>,
    /// Indices of `N_{F^c}` (0-based).
    pub outside: Vec<usize>,
    /// `g_k(λ_n)` for `n` in `outside`.
    pub g_lambda: Vec<Vec<c64>>,
    pub rule: QuadratureRule,
    /// `h(ξ_i)` at the rule nodes.
    pub h: Vec<Vec<c64>>,
    pub quad_error: f64,
}

impl GSamples {
    fn weighted(&self) -> impl Iterator<Item = (c64, c64, &Vec<c64>)> {
        let s = c64::new(0.0, 2.0 * PI).inv();
        self.rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .zip(&self.h)
            .map(move |((z, w), h)| (*z, w * s, h))
    }

    /// `g_k(z) = (1/2πi) ∮ h_k(ξ′)/(z − ξ′) dξ′`.
    pub fn g_at(&self, z: c64) -> Vec<c64> {
        let r = self.h.first().map(|v| v.len()).unwrap_or(0);
        let mut out = vec![c64::new(0.0, 0.0); r];
        for (node, w, h) in self.weighted() {
            let f = w / (z - node);
            for (o, hk) in out.iter_mut().zip(h) {
                *o += hk * f;
            }
        }
        out
    }

    /// `Γ(g_k)(z, λ) = −(1/2πi) ∮ h_k(ξ′)/((z − ξ′)(λ − ξ′)) dξ′`, valid also at `z = λ`.
    pub fn gamma_at(&self, z: c64, lambda: c64) -> Vec<c64> {
        let r = self.h.first().map(|v| v.len()).unwrap_or(0);
        let mut out = vec![c64::new(0.0, 0.0); r];
        for (node, w, h) in self.weighted() {
            let f = -w / ((z - node) * (lambda - node));
            for (o, hk) in out.iter_mut().zip(h) {
                *o += hk * f;
            }
        }
        out
    }

    /// `φ_n(z) = Σ_k Γ(g_k)(z, λ_n) α_n^{(k)}` for `n` in `outside`.
    pub fn phi(&self, op: &PerturbedOperator, z: c64) -> Vec<c64> {
        self.outside
            .iter()
            .map(|&n| {
                let gam = self.gamma_at(z, op.lambdas()[n]);
                gam.iter()
                    .enumerate()
                    .fold(c64::new(0.0, 0.0), |acc, (k, v)| {
                        acc + v * op.alpha()[(n, k)]
                    })
            })
            .collect()
    }
}

/// Computes the `g_k` for `y` by one adaptive vector integral whose
/// components are `g_k` at every grid point and at every `λ_n`, `n ∈ N_{F^c}`.
pub fn certificate_g_functions(
    op: &PerturbedOperator,
    y: &[c64],
    xi: f64,
    side: Side,
    grid: &[c64],
    cfg: &IdempotentConfig,
) -> Result<GSamples> {
    if y.len() != op.n() {
        return Err(Error::DimensionMismatch {
            what: "certificate vector",
            expected: op.n(),
            found: y.len(),
        });
    }
    let delta = delta_structural(op, xi, &cfg.delta);
    if !delta.accepted {
        return Err(Error::NotInDecomposabilitySet {
            xi,
            reasons: delta.reasons,
        });
    }
    let contour = build_contour(&op.spectrum, xi, side, &cfg.contour)?;
    for &z in grid {
        let distance = contour.distance_to(z);
        if distance < 1e-6 {
            return Err(Error::TooCloseToContour { z, distance });
        }
    }
    let inside = index_set(&op.spectrum, &Region::HalfDisc { xi, side });
    let outside: Vec<usize> = (0..op.n())
        .filter(|n| inside.binary_search(n).is_err())
        .collect();
    let mut evals: Vec<c64> = grid.to_vec();
    evals.extend(outside.iter().map(|&n| op.lambdas()[n]));
    let h_at = |z: c64| -> Result<Vec<c64>> {
        let p = resolvent_parts(op, z, cfg.core_cap)?;
        let (v, d) = (op.beta(), &p.diag_inverse);
        let w: Vec<c64> = (0..op.r())
            .map(|m| {
                (0..op.n()).fold(c64::new(0.0, 0.0), |acc, j| {
                    acc + v[(j, m)].conj() * d[j] * y[j]
                })
            })
            .collect();
        Ok(linalg::matvec(p.a.as_ref(), &w))
    };
    let s = c64::new(0.0, 2.0 * PI).inv();
    let integral = integrate(&contour, &cfg.quad, Measure::Complex, |zp| {
        let h = h_at(zp)?;
        let mut out = Vec::with_capacity(evals.len() * h.len());
        for &e in &evals {
            let f = s / (e - zp);
            out.extend(h.iter().map(|hk| hk * f));
        }
        Ok(out)
    })?;
    let r = op.r();
    let split = |i: usize| integral.value[i * r..(i + 1) * r].to_vec();
    let g: Vec<Vec<c64>> = (0..grid.len()).map(split).collect();
    let g_lambda: Vec<Vec<c64>> = (grid.len()..evals.len()).map(split).collect();
    let h: Vec<Vec<c64>> = integral
        .rule
        .nodes
        .par_iter()
        .map(|&z| h_at(z))
        .collect::<Result<_>>()?;
    Ok(GSamples {
        xi,
        side,
        grid: grid.to_vec(),
        g,
        outside,
        g_lambda,
        quad_error: integral.error,
        rule: integral.rule,
        h,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertConfig {
    pub tolerance: f64,
    /// Cap on `Σ_n |Σ_k g_k(z) α_n^{(k)}|²`.
    pub series_cap: f64,
    /// Cauchy–Riemann stencil step as a fraction of the distance to the curve.
    pub stencil: f64,
}

impl Default for CertConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            series_cap: 1e6,
            stencil: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub xi: f64,
    pub side: Side,
    pub grid_len: usize,
    /// `max_{n∈N_{F^c}} |x_n − Σ_k g_k(λ_n)α_n^{(k)}| / ‖x‖`
    pub residual_i: f64,
    /// Cauchy–Riemann defect of the projected local resolvent, scaled by distance to the curve.
    pub residual_ii: f64,
    /// Largest mismatch of the two sides of the `g_k` identity over grid and
    /// `k`, divided by `‖x‖‖v_k‖`.
    pub residual_iii: f64,
    /// Excess of the series over its cap (0 when below).
    pub residual_iv: f64,
    pub series_iv_max: f64,
    /// `max_z ‖(T − z)f_x(z) − x‖ / ‖x‖`
    pub resolvent_residual: f64,
    /// Spread of `(T − z)f_x(z)` across the grid, relative to `‖x‖`.
    pub z_independence: f64,
    pub tolerance: f64,
    pub score: f64,
    pub passes: bool,
}

/// Local resolvent `f_x(z)`.
pub fn local_resolvent(
    op: &PerturbedOperator,
    x: &[c64],
    samples: &GSamples,
    z: c64,
    g: &[c64],
) -> Vec<c64> {
    let mut f = vec![c64::new(0.0, 0.0); op.n()];
    let phi = samples.phi(op, z);
    for (n, v) in samples.outside.iter().zip(phi) {
        f[*n] = v;
    }
    let mut is_out = vec![false; op.n()];
    for &n in &samples.outside {
        is_out[n] = true;
    }
    for n in 0..op.n() {
        if !is_out[n] {
            let s = g
                .iter()
                .enumerate()
                .fold(c64::new(0.0, 0.0), |acc, (k, gk)| {
                    acc + gk * op.alpha()[(n, k)]
                });
            f[n] = (x[n] - s) / (op.lambdas()[n] - z);
        }
    }
    f
}

/// Evaluates conditions (i)–(iv) and the local resolvent identity.
pub fn check_membership(
    op: &PerturbedOperator,
    x: &[c64],
    samples: &GSamples,
    cfg: &CertConfig,
) -> Result<Certificate> {
    if x.len() != op.n() {
        return Err(Error::DimensionMismatch {
            what: "certificate vector",
            expected: op.n(),
            found: x.len(),
        });
    }
    let contour = HalfPlaneContour::new(samples.xi, samples.side, true)?;
    let xn = linalg::vec_norm(x).max(f64::MIN_POSITIVE);
    let (n, r) = (op.n(), op.r());
    let (alpha, beta, lam) = (op.alpha(), op.beta(), op.lambdas());
    let mut is_out = vec![false; n];
    for &i in &samples.outside {
        is_out[i] = true;
    }

    // both sides of (iii) are linear in v_k
    let beta_norms: Vec<f64> = (0..r)
        .map(|k| {
            (0..n)
                .map(|i| beta[(i, k)].norm_sqr())
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE)
        })
        .collect();

    let mut residual_i = 0.0f64;
    for (idx, &i) in samples.outside.iter().enumerate() {
        let s = samples.g_lambda[idx]
            .iter()
            .enumerate()
            .fold(c64::new(0.0, 0.0), |acc, (k, g)| acc + g * alpha[(i, k)]);
        residual_i = residual_i.max((x[i] - s).norm() / xn);
    }

    struct Point {
        ii: f64,
        iii: f64,
        iv: f64,
        res: f64,
        image: Vec<c64>,
    }
    let points: Vec<Point> = samples
        .grid
        .par_iter()
        .zip(&samples.g)
        .map(|(&z, g)| {
            let dist = contour.distance_to(z);
            let h = cfg.stencil * dist;
            let dx = {
                let (a, b) = (samples.phi(op, z + h), samples.phi(op, z - h));
                a.iter()
                    .zip(&b)
                    .map(|(p, q)| (p - q) / (2.0 * h))
                    .collect::<Vec<_>>()
            };
            let dy = {
                let ih = c64::new(0.0, h);
                let (a, b) = (samples.phi(op, z + ih), samples.phi(op, z - ih));
                a.iter()
                    .zip(&b)
                    .map(|(p, q)| (p - q) / (2.0 * h))
                    .collect::<Vec<_>>()
            };
            // ∂̄φ = (∂_x φ + i ∂_y φ)/2
            let dbar = dx
                .iter()
                .zip(&dy)
                .map(|(a, b)| (a + c64::new(0.0, 1.0) * b) * 0.5)
                .collect::<Vec<_>>();
            let ii = linalg::vec_norm(&dbar) * dist / xn;

            let f = local_resolvent(op, x, samples, z, g);
            let phi_of = |i: usize| f[i];
            let mut iii = 0.0f64;
            for k in 0..r {
                let mut lhs = c64::new(0.0, 0.0);
                let mut own = c64::new(0.0, 0.0);
                let mut cross = c64::new(0.0, 0.0);
                let mut outer = c64::new(0.0, 0.0);
                for i in 0..n {
                    let bk = beta[(i, k)].conj();
                    if is_out[i] {
                        outer += phi_of(i) * bk;
                    } else {
                        let d = (lam[i] - z).inv();
                        lhs += x[i] * bk * d;
                        own += alpha[(i, k)] * bk * d;
                        for m in 0..r {
                            if m != k {
                                cross += g[m] * alpha[(i, m)] * bk * d;
                            }
                        }
                    }
                }
                let rhs = g[k] * (own + 1.0) - outer + cross;
                iii = iii.max((lhs - rhs).norm() / (xn * beta_norms[k]));
            }
            let iv = (0..n)
                .map(|i| {
                    (0..r)
                        .fold(c64::new(0.0, 0.0), |acc, k| acc + g[k] * alpha[(i, k)])
                        .norm_sqr()
                })
                .sum::<f64>();
            let tf = op.apply(&f);
            let image: Vec<c64> = tf.iter().zip(&f).map(|(a, b)| a - b * z).collect();
            let res = image
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
                / xn;
            Point {
                ii,
                iii,
                iv,
                res,
                image,
            }
        })
        .collect();

    let residual_ii = points.iter().map(|p| p.ii).fold(0.0, f64::max);
    let residual_iii = points.iter().map(|p| p.iii).fold(0.0, f64::max);
    let series_iv_max = points.iter().map(|p| p.iv).fold(0.0, f64::max);
    let residual_iv = if series_iv_max <= cfg.series_cap {
        0.0
    } else {
        series_iv_max / cfg.series_cap
    };
    let resolvent_residual = points.iter().map(|p| p.res).fold(0.0, f64::max);
    let z_independence = match points.first() {
        Some(p0) => points
            .iter()
            .map(|p| {
                p.image
                    .iter()
                    .zip(&p0.image)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
                    / xn
            })
            .fold(0.0, f64::max),
        None => 0.0,
    };
    let score = [
        residual_i,
        residual_ii,
        residual_iii,
        residual_iv,
        resolvent_residual,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(Certificate {
        xi: samples.xi,
        side: samples.side,
        grid_len: samples.grid.len(),
        residual_i,
        residual_ii,
        residual_iii,
        residual_iv,
        series_iv_max,
        resolvent_residual,
        z_independence,
        tolerance: cfg.tolerance,
        score,
        passes: score <= cfg.tolerance,
    })
}

/// Certificate for `x`, with the `g_k` built from `x` itself.
pub fn certify(
    op: &PerturbedOperator,
    x: &[c64],
    xi: f64,
    side: Side,
    grid: &GridSpec,
    icfg: &IdempotentConfig,
    ccfg: &CertConfig,
) -> Result<Certificate> {
    let pts = build_grid(xi, side, grid)?;
    let samples = certificate_g_functions(op, x, xi, side, &pts, icfg)?;
    check_membership(op, x, &samples, ccfg)
}

/// Pass/fail threshold placed between observed scores.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Calibration {
    pub max_pass: f64,
    pub min_fail: f64,
    /// Geometric mean of `max_pass` and `min_fail`.
    pub threshold: f64,
    pub separated: bool,
}

pub fn calibrate(pass_scores: &[f64], fail_scores: &[f64]) -> Calibration {
    let max_pass = pass_scores
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let min_fail = fail_scores.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = if min_fail.is_finite() {
        (max_pass * min_fail).sqrt()
    } else {
        max_pass * 10.0
    };
    Calibration {
        max_pass,
        min_fail,
        threshold,
        separated: max_pass < min_fail,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoPointReport {
    pub x1: f64,
    pub x2: f64,
    pub weighted_x1: (f64, f64),
    pub weighted_x2: (f64, f64),
    /// `rank J_{x2}^+(T)`
    pub rank_plus: usize,
    /// `rank J_{x1}^-(T*)`
    pub rank_adjoint: usize,
    /// `‖J_{x1}^-(T*)ᴴ J_{x2}^+(T)‖`: ranges orthogonal when the sets are disjoint.
    pub annihilation: f64,
    /// `‖J_{x2}^+ + J_{x2}^- − I‖`
    pub partition: f64,
    pub non_dense: bool,
    pub adjoint_nonzero: bool,
    pub passed: bool,
}

/// Local summability at two abscissae, then the non-density proxy for
/// `ran J_{x2}^+` via the adjoint idempotent at `x1`.
pub fn local_two_point_test(
    op: &PerturbedOperator,
    x1: f64,
    x2: f64,
    cfg: &IdempotentConfig,
) -> Result<TwoPointReport> {
    let (a, b) = op.spectrum.admissible_range();
    if !(a < x1 && x1 < x2 && x2 < b) {
        return Err(Error::InvalidParameter(format!(
            "need {a} < x1 < x2 < {b}, got x1 = {x1}, x2 = {x2}"
        )));
    }
    let g1 = delta_structural(op, x1, &cfg.delta);
    let g2 = delta_structural(op, x2, &cfg.delta);
    for g in [&g1, &g2] {
        if !g.accepted {
            return Err(Error::LocalConditionFailed {
                xi: g.xi,
                reasons: g.reasons.clone(),
            });
        }
    }
    let jp = half_plane_idempotent(op, x2, Side::Plus, cfg)?;
    let jm = half_plane_idempotent(op, x2, Side::Minus, cfg)?;
    let adj = op.adjoint();
    let ja = half_plane_idempotent(&adj, x1, Side::Minus, cfg)?;
    let rank_plus = linalg::numerical_rank(jp.j.as_ref(), 1e-8)?;
    let rank_adjoint = linalg::numerical_rank(ja.j.as_ref(), 1e-8)?;
    let annihilation = linalg::norm2(
        linalg::mul(linalg::adjoint(ja.j.as_ref()).as_ref(), jp.j.as_ref()).as_ref(),
    )?;
    let sum = linalg::add(jp.j.as_ref(), jm.j.as_ref());
    let partition =
        linalg::norm2(linalg::sub(sum.as_ref(), linalg::identity(op.n()).as_ref()).as_ref())?;
    let non_dense = rank_plus < op.n();
    let adjoint_nonzero = rank_adjoint > 0;
    Ok(TwoPointReport {
        x1,
        x2,
        weighted_x1: (g1.weighted_alpha, g1.weighted_beta),
        weighted_x2: (g2.weighted_alpha, g2.weighted_beta),
        rank_plus,
        rank_adjoint,
        annihilation,
        partition,
        non_dense,
        adjoint_nonzero,
        passed: non_dense && adjoint_nonzero && annihilation <= 1e-8,
    })
}
