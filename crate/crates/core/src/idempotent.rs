//! Decomposability checks and the half-disc idempotents
//!
//! `J_ξ^± = Σ_{n ∈ N_F} e_n ⊗ e_n + (1/2πi) ∮_{γ_ξ^±} B(ξ′) dξ′`,
//!
//! which on a finite truncation is the Riesz projector of `T` onto the
//! eigenvalues inside `F_ξ^±`. The diagonal part is taken exactly from the
//! index set; only the low-rank correction `B` is integrated.

use std::f64::consts::PI;
use std::time::Instant;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{
    build_contour, contour_weight_constant, integrate, ContourConfig, Measure, QuadConfig,
    QuadratureRule,
};
use crate::linalg::{self, CMat};
use crate::model::{index_set, weighted_tail, PerturbedOperator, Region, Side, TailStatus};
use crate::oracle::{self, probe_vectors};
use crate::resolvent::{resolvent_parts, ResolventParts, CORE_CONDITION_CAP};
use crate::{c64, Error, Result};

/// Floors and caps for membership in the decomposability set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaConfig {
    /// Required `min_n |Re λ_n − ξ|`.
    pub margin_floor: f64,
    /// Required `min |Re μ − ξ|` over eigenvalues `μ` of `T` (and `T*`).
    pub eig_floor: f64,
    /// Cap on each weighted sum.
    pub cap: f64,
}

impl Default for DeltaConfig {
    fn default() -> Self {
        Self {
            margin_floor: 1e-6,
            eig_floor: 1e-6,
            cap: 1e6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaReport {
    pub xi: f64,
    pub in_range: bool,
    pub margin: f64,
    pub margin_index: Option<usize>,
    /// `Σ_{n,k} |α_n^{(k)}|² / |Re λ_n − ξ|` over the truncation.
    pub weighted_alpha: f64,
    pub weighted_beta: f64,
    pub tail_alpha: TailStatus,
    pub tail_beta: TailStatus,
    /// `min |Re μ − ξ|` over the dense spectrum, when computed.
    pub eig_clearance: Option<f64>,
    pub accepted: bool,
    pub reasons: Vec<String>,
}

fn weighted_sum(m: &CMat, lambdas: &[c64], xi: f64) -> f64 {
    let mut s = 0.0;
    for n in 0..m.nrows() {
        let w = (0..m.ncols()).map(|k| m[(n, k)].norm_sqr()).sum::<f64>();
        if w > 0.0 {
            s += w / (lambdas[n].re - xi).abs();
        }
    }
    s
}

fn delta_report(
    op: &PerturbedOperator,
    xi: f64,
    eig_re: Option<&[f64]>,
    cfg: &DeltaConfig,
) -> DeltaReport {
    let (lo, hi) = op.spectrum.admissible_range();
    let in_range = xi > lo && xi < hi;
    let (margin, margin_index) = op.spectrum.shadow_margin(xi);
    let weighted_alpha = weighted_sum(op.alpha(), op.lambdas(), xi);
    let weighted_beta = weighted_sum(op.beta(), op.lambdas(), xi);
    let tail_alpha = weighted_tail(&op.coeffs, xi, false);
    let tail_beta = weighted_tail(&op.coeffs, xi, true);
    let eig_clearance = eig_re.map(|re| {
        re.iter()
            .map(|r| (r - xi).abs())
            .fold(f64::INFINITY, f64::min)
    });
    let mut reasons = Vec::new();
    if !in_range {
        reasons.push(format!("xi outside ({lo}, {hi})"));
    }
    if margin < cfg.margin_floor {
        reasons.push(format!(
            "margin {margin:.3e} below floor {:.1e}",
            cfg.margin_floor
        ));
    }
    if let Some(e) = eig_clearance {
        if e < cfg.eig_floor {
            reasons.push(format!(
                "eigenvalue clearance {e:.3e} below floor {:.1e}",
                cfg.eig_floor
            ));
        }
    }
    for (name, partial, tail) in [
        ("alpha", weighted_alpha, tail_alpha),
        ("beta", weighted_beta, tail_beta),
    ] {
        match tail {
            TailStatus::Divergent => reasons.push(format!("{name}: weighted tail diverges")),
            t => {
                let total = partial + t.value().unwrap_or(0.0);
                if !(total <= cfg.cap) {
                    reasons.push(format!(
                        "{name}: weighted sum {total:.3e} exceeds cap {:.1e}",
                        cfg.cap
                    ));
                }
            }
        }
    }
    DeltaReport {
        xi,
        in_range,
        margin,
        margin_index,
        weighted_alpha,
        weighted_beta,
        tail_alpha,
        tail_beta,
        eig_clearance,
        accepted: reasons.is_empty(),
        reasons,
    }
}

fn eig_real_parts(op: &PerturbedOperator) -> Result<Vec<f64>> {
    if op.n() == 0 {
        return Ok(Vec::new());
    }
    let t = op.dense();
    let ev = t
        .eigenvalues()
        .map_err(|e| Error::Linalg(format!("eigensolver failed: {e:?}")))?;
    Ok(ev.iter().map(|v| v.re).collect())
}

/// Full membership report including the dense eigenvalue clearance.
pub fn delta_membership(op: &PerturbedOperator, xi: f64, cfg: &DeltaConfig) -> Result<DeltaReport> {
    let re = eig_real_parts(op)?;
    Ok(delta_report(op, xi, Some(&re), cfg))
}

/// Margin and weighted sums only; no dense eigensolve.
pub fn delta_structural(op: &PerturbedOperator, xi: f64, cfg: &DeltaConfig) -> DeltaReport {
    delta_report(op, xi, None, cfg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaScan {
    pub reports: Vec<DeltaReport>,
    pub accepted: Vec<f64>,
    pub fraction: f64,
}

/// Membership over a grid, sharing one eigensolve.
pub fn sample_delta(op: &PerturbedOperator, grid: &[f64], cfg: &DeltaConfig) -> Result<DeltaScan> {
    let re = eig_real_parts(op)?;
    let reports: Vec<DeltaReport> = grid
        .par_iter()
        .map(|&xi| delta_report(op, xi, Some(&re), cfg))
        .collect();
    let accepted: Vec<f64> = reports
        .iter()
        .filter(|r| r.accepted)
        .map(|r| r.xi)
        .collect();
    let fraction = if grid.is_empty() {
        0.0
    } else {
        accepted.len() as f64 / grid.len() as f64
    };
    Ok(DeltaScan {
        reports,
        accepted,
        fraction,
    })
}

/// Uniform grid of `count` interior points of `(lo, hi)`.
pub fn interior_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / count as f64)
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdempotentConfig {
    pub quad: QuadConfig,
    pub contour: ContourConfig,
    pub delta: DeltaConfig,
    pub core_cap: f64,
    /// Compute the contour constant and the norm bound `1 + √M̂`.
    pub constants: bool,
    /// Compute `‖J² − J‖` and `‖JT − TJ‖` (dense `O(N³)` work).
    pub dense_checks: bool,
    /// Largest size for which norms use an SVD; Frobenius above it.
    pub svd_cap: usize,
}

impl Default for IdempotentConfig {
    fn default() -> Self {
        Self {
            quad: QuadConfig::default(),
            contour: ContourConfig::default(),
            delta: DeltaConfig::default(),
            core_cap: CORE_CONDITION_CAP,
            constants: true,
            dense_checks: true,
            svd_cap: 512,
        }
    }
}

impl IdempotentConfig {
    /// Settings for large `N`: no dense diagnostics, no constants.
    pub fn lean() -> Self {
        Self {
            constants: false,
            dense_checks: false,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `‖J² − J‖`
    pub idempotency: Option<f64>,
    /// `‖JT − TJ‖`
    pub commutation: Option<f64>,
    pub norm_j: Option<f64>,
    pub norm_t: Option<f64>,
    /// `sup_γ ‖A(z)‖²` over quadrature nodes.
    pub c_xi: f64,
    /// Empirical contour constant over the diagonal entries.
    pub c_hat: Option<f64>,
    pub m_hat: Option<f64>,
    /// `1 + √M̂`
    pub norm_bound: Option<f64>,
    pub norm_bound_holds: Option<bool>,
    pub quad_error: f64,
    pub nodes: usize,
    pub max_core_condition: f64,
    /// `|N_F|`
    pub diagonal_rank: usize,
    pub wall_time_s: f64,
    /// Filled by [`verify_pair`] consumers.
    pub partition: Option<f64>,
    pub product: Option<f64>,
    /// Filled by oracle comparisons.
    pub oracle_gap: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SpectralIdempotent {
    pub xi: f64,
    pub side: Side,
    pub j: CMat,
    pub delta: DeltaReport,
    pub diagnostics: Diagnostics,
    pub rule: QuadratureRule,
}

/// `J = P_D + (1/2πi) Σ_i w_i B(z_i)` as one GEMM `G·H` with
/// `G[n, (i,k)] = (w_i/2πi)(λ_n − z_i)^{-1}(U A_i)[n, k]` and
/// `H[(i,k), j] = conj(β_j^{(k)})(λ_j − z_i)^{-1}`.
pub fn assemble_from_rule(
    op: &PerturbedOperator,
    rule: &QuadratureRule,
    parts: &[ResolventParts],
    diag_idx: &[usize],
) -> CMat {
    let (n, r) = (op.n(), op.r());
    let m = rule.len();
    let tpi = c64::new(0.0, 2.0 * PI).inv();
    let ua: Vec<CMat> = parts
        .par_iter()
        .map(|p| linalg::mul(op.alpha().as_ref(), p.a.as_ref()))
        .collect();
    let g = Mat::from_fn(n, m * r, |row, col| {
        let (i, k) = (col / r, col % r);
        rule.weights[i] * tpi * parts[i].diag_inverse[row] * ua[i][(row, k)]
    });
    let h = Mat::from_fn(m * r, n, |row, j| {
        let (i, k) = (row / r, row % r);
        op.beta()[(j, k)].conj() * parts[i].diag_inverse[j]
    });
    let mut j = linalg::mul(g.as_ref(), h.as_ref());
    for &i in diag_idx {
        j[(i, i)] += c64::new(1.0, 0.0);
    }
    j
}

/// Builds `J_ξ^side` with its diagnostics.
pub fn half_plane_idempotent(
    op: &PerturbedOperator,
    xi: f64,
    side: Side,
    cfg: &IdempotentConfig,
) -> Result<SpectralIdempotent> {
    let start = Instant::now();
    let delta = delta_structural(op, xi, &cfg.delta);
    if !delta.accepted {
        return Err(Error::NotInDecomposabilitySet {
            xi,
            reasons: delta.reasons.clone(),
        });
    }
    let contour = build_contour(&op.spectrum, xi, side, &cfg.contour)?;
    let n = op.n();
    let probes = probe_vectors(n);
    let integral = integrate(&contour, &cfg.quad, Measure::Complex, |z| {
        let p = resolvent_parts(op, z, cfg.core_cap)?;
        let mut v = p.b_apply(op, &probes[0]);
        v.extend(p.b_apply(op, &probes[1]));
        Ok(v)
    })?;
    let rule = integral.rule;
    let parts: Vec<ResolventParts> = rule
        .nodes
        .par_iter()
        .map(|&z| resolvent_parts(op, z, cfg.core_cap))
        .collect::<Result<_>>()?;
    let diag_idx = index_set(&op.spectrum, &Region::HalfDisc { xi, side });
    let j = assemble_from_rule(op, &rule, &parts, &diag_idx);

    let mut d = Diagnostics {
        c_xi: parts
            .iter()
            .map(|p| p.norm_a * p.norm_a)
            .fold(0.0, f64::max),
        quad_error: integral.error,
        nodes: rule.len(),
        max_core_condition: parts.iter().map(|p| p.condition).fold(1.0, f64::max),
        diagonal_rank: diag_idx.len(),
        ..Diagnostics::default()
    };
    if cfg.dense_checks {
        let t = op.dense();
        let j2 = linalg::mul(j.as_ref(), j.as_ref());
        d.idempotency = Some(linalg::norm2_capped(
            linalg::sub(j2.as_ref(), j.as_ref()).as_ref(),
            cfg.svd_cap,
        ));
        let jt = linalg::mul(j.as_ref(), t.as_ref());
        let tj = linalg::mul(t.as_ref(), j.as_ref());
        d.commutation = Some(linalg::norm2_capped(
            linalg::sub(jt.as_ref(), tj.as_ref()).as_ref(),
            cfg.svd_cap,
        ));
        d.norm_t = Some(linalg::norm2_capped(t.as_ref(), cfg.svd_cap));
    }
    if cfg.dense_checks || cfg.constants {
        d.norm_j = Some(linalg::norm2_capped(j.as_ref(), cfg.svd_cap));
    }
    if cfg.constants {
        let c_hat = contour_weight_constant(&contour, op.lambdas(), &cfg.quad)?
            .value
            .max(0.0);
        let m_hat = c_hat * c_hat * d.c_xi * delta.weighted_alpha * delta.weighted_beta;
        let bound = 1.0 + m_hat.sqrt();
        d.c_hat = Some(c_hat);
        d.m_hat = Some(m_hat);
        d.norm_bound = Some(bound);
        d.norm_bound_holds = d.norm_j.map(|nj| nj <= bound * (1.0 + 1e-12));
    }
    d.wall_time_s = start.elapsed().as_secs_f64();
    Ok(SpectralIdempotent {
        xi,
        side,
        j,
        delta,
        diagnostics: d,
        rule,
    })
}

/// `‖J² − J‖ ≤ tol (1 + ‖J‖²)` check with the computed residual.
pub fn idempotency_ok(j: &CMat, tol: f64) -> Result<(bool, f64)> {
    let nj = linalg::norm2(j.as_ref())?;
    let r = linalg::norm2(
        linalg::sub(linalg::mul(j.as_ref(), j.as_ref()).as_ref(), j.as_ref()).as_ref(),
    )?;
    Ok((r <= tol * (1.0 + nj * nj), r))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairVerification {
    pub xi: f64,
    /// `‖J⁺ + J⁻ − I‖`
    pub partition: f64,
    /// `‖J⁺J⁻‖`
    pub product_pm: f64,
    /// `‖J⁻J⁺‖`
    pub product_mp: f64,
    pub idempotency_max: f64,
    pub rank_plus: usize,
    pub rank_minus: usize,
    pub nontrivial_plus: bool,
    pub nontrivial_minus: bool,
}

/// Residuals of the partition and orthogonality relations of a `(J⁺, J⁻)` pair.
pub fn verify_pair(
    plus: &SpectralIdempotent,
    minus: &SpectralIdempotent,
) -> Result<PairVerification> {
    if plus.xi != minus.xi {
        return Err(Error::MismatchedPair(format!(
            "xi {} vs {}",
            plus.xi, minus.xi
        )));
    }
    if plus.side != Side::Plus || minus.side != Side::Minus {
        return Err(Error::MismatchedPair(format!(
            "sides {} and {}",
            plus.side, minus.side
        )));
    }
    let (jp, jm) = (&plus.j, &minus.j);
    let n = jp.nrows();
    let sum = linalg::add(jp.as_ref(), jm.as_ref());
    let partition =
        linalg::norm2(linalg::sub(sum.as_ref(), linalg::identity(n).as_ref()).as_ref())?;
    let product_pm = linalg::norm2(linalg::mul(jp.as_ref(), jm.as_ref()).as_ref())?;
    let product_mp = linalg::norm2(linalg::mul(jm.as_ref(), jp.as_ref()).as_ref())?;
    let (_, ip) = idempotency_ok(jp, 1.0)?;
    let (_, im) = idempotency_ok(jm, 1.0)?;
    let rank_plus = linalg::numerical_rank(jp.as_ref(), 1e-8)?;
    let rank_minus = linalg::numerical_rank(jm.as_ref(), 1e-8)?;
    Ok(PairVerification {
        xi: plus.xi,
        partition,
        product_pm,
        product_mp,
        idempotency_max: ip.max(im),
        rank_plus,
        rank_minus,
        nontrivial_plus: rank_plus > 0 && rank_plus < n,
        nontrivial_minus: rank_minus > 0 && rank_minus < n,
    })
}

/// `max_E ‖JE − EJ‖ / (max(‖J‖, 1)‖E‖)` over a commutant basis; a nonzero
/// idempotent has `‖J‖ ≥ 1`, so the floor only matters for `J = 0`.
pub fn commutant_residual(j: &CMat, basis: &[CMat]) -> Result<f64> {
    let nj = linalg::norm2(j.as_ref())?.max(1.0);
    let mut worst = 0.0f64;
    for e in basis {
        let ne = linalg::norm2(e.as_ref())?.max(f64::MIN_POSITIVE);
        let c = linalg::sub(
            linalg::mul(j.as_ref(), e.as_ref()).as_ref(),
            linalg::mul(e.as_ref(), j.as_ref()).as_ref(),
        );
        worst = worst.max(linalg::norm2(c.as_ref())? / (nj * ne));
    }
    Ok(worst)
}

/// `‖J − P‖₂` against the eigenprojector oracle for `F_ξ^side`.
pub fn oracle_gap(id: &SpectralIdempotent, sys: &oracle::EigenSystem) -> Result<f64> {
    let p = oracle::riesz_oracle(
        sys,
        &Region::HalfDisc {
            xi: id.xi,
            side: id.side,
        },
        1e-8,
    )?;
    linalg::norm2(linalg::sub(id.j.as_ref(), p.as_ref()).as_ref())
}

#[derive(Clone, Debug)]
pub struct RectangleIdempotent {
    pub j: CMat,
    /// `J_{x1}^+`, `J_{x2}^-` of `T`, then `J_{y1}^+`, `J_{y2}^-` of `−iT`.
    pub factors: Vec<SpectralIdempotent>,
    /// Largest `‖F_a F_b − F_b F_a‖` over factor pairs.
    pub commute_residual: f64,
    pub idempotency: f64,
    pub commutation: f64,
}

/// `J_rect = J_{x1}^+ J_{x2}^- J̃_{y1}^+ J̃_{y2}^-`, the tilde factors built
/// from `−iT` (real part of `−iμ` is `Im μ`), so the product projects onto
/// the eigenvalues in `[x1, x2] × [y1, y2]` inside the unit disc.
pub fn rectangle_idempotent(
    op: &PerturbedOperator,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
    cfg: &IdempotentConfig,
) -> Result<RectangleIdempotent> {
    if !(x1 < x2 && y1 < y2) {
        return Err(Error::InvalidParameter(format!(
            "need x1 < x2 and y1 < y2, got [{x1}, {x2}] × [{y1}, {y2}]"
        )));
    }
    let rot = op.rotated();
    let factors = vec![
        half_plane_idempotent(op, x1, Side::Plus, cfg)?,
        half_plane_idempotent(op, x2, Side::Minus, cfg)?,
        half_plane_idempotent(&rot, y1, Side::Plus, cfg)?,
        half_plane_idempotent(&rot, y2, Side::Minus, cfg)?,
    ];
    for f in &factors {
        let (ok, r) = idempotency_ok(&f.j, 1e-8)?;
        if !ok {
            return Err(Error::Verification {
                name: format!("factor idempotency at {} {}", f.xi, f.side),
                value: r,
                tolerance: 1e-8,
            });
        }
    }
    let mut commute_residual = 0.0f64;
    for a in 0..4 {
        for b in (a + 1)..4 {
            let (fa, fb) = (&factors[a].j, &factors[b].j);
            let c = linalg::sub(
                linalg::mul(fa.as_ref(), fb.as_ref()).as_ref(),
                linalg::mul(fb.as_ref(), fa.as_ref()).as_ref(),
            );
            commute_residual = commute_residual.max(linalg::norm2(c.as_ref())?);
        }
    }
    if commute_residual > 1e-8 {
        return Err(Error::Verification {
            name: "factor commutation".into(),
            value: commute_residual,
            tolerance: 1e-8,
        });
    }
    let mut j = factors[0].j.clone();
    for f in &factors[1..] {
        j = linalg::mul(j.as_ref(), f.j.as_ref());
    }
    let (_, idempotency) = idempotency_ok(&j, 1.0)?;
    let t = op.dense();
    let commutation = linalg::norm2(
        linalg::sub(
            linalg::mul(j.as_ref(), t.as_ref()).as_ref(),
            linalg::mul(t.as_ref(), j.as_ref()).as_ref(),
        )
        .as_ref(),
    )?;
    Ok(RectangleIdempotent {
        j,
        factors,
        commute_residual,
        idempotency,
        commutation,
    })
}
