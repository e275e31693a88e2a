//! Gauss–Legendre rules and deterministic adaptive bisection on contour panels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HalfPlaneContour, Panel};
use crate::{c64, Error, Result};

/// Nodes and weights of the `m`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Newton iteration on `P_m` from the Chebyshev-like initial guess; nodes are
/// returned in increasing order.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "rule order must be positive");
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { z } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = mf * (z * pm - pm1) / (z * z - 1.0);
            let dz = pm / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if m == 1 {
            z = 0.0;
            dp = 1.0;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

/// How the panel derivative enters the weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// `dz`
    Complex,
    /// `|dz|`
    ArcLength,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Gauss–Legendre order per interval.
    pub order: usize,
    /// Relative tolerance of the paired-refinement test.
    pub tol: f64,
    pub max_depth: usize,
    /// Pieces each panel starts with.
    pub initial_pieces: usize,
    /// Cap on the number of intervals; rounding noise above the tolerance
    /// otherwise doubles the work at every level.
    #[serde(default = "default_max_intervals")]
    pub max_intervals: usize,
}

fn default_max_intervals() -> usize {
    1 << 14
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            order: 16,
            tol: 1e-11,
            max_depth: 40,
            initial_pieces: 2,
            max_intervals: default_max_intervals(),
        }
    }
}

/// Nodes and weights that produced an integral, in summation order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<c64>,
    pub weights: Vec<c64>,
    pub panel: Vec<usize>,
    pub t: Vec<f64>,
    pub order: usize,
    pub depth: usize,
    pub tolerance: f64,
    pub error_estimate: f64,
    pub measure: Measure,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to a scalar integrand in node order.
    pub fn apply(&self, f: impl Fn(c64) -> c64) -> c64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(c64::new(0.0, 0.0), |acc, (z, w)| acc + f(*z) * w)
    }

    /// CSV dump: panel id, t, node re/im, weight re/im.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "panel,t,node_re,node_im,weight_re,weight_im")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.panel[i],
                self.t[i],
                self.nodes[i].re,
                self.nodes[i].im,
                self.weights[i].re,
                self.weights[i].im
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Integral {
    pub value: Vec<c64>,
    pub error: f64,
    pub rule: QuadratureRule,
}

struct Piece {
    nodes: Vec<c64>,
    weights: Vec<c64>,
    t: Vec<f64>,
    value: Vec<c64>,
}

fn gl_piece<F>(
    panel: &Panel,
    t0: f64,
    t1: f64,
    x: &[f64],
    w: &[f64],
    measure: Measure,
    f: &F,
) -> Result<Piece>
where
    F: Fn(c64) -> Result<Vec<c64>>,
{
    let half = 0.5 * (t1 - t0);
    let mid = 0.5 * (t1 + t0);
    let mut value: Vec<c64> = Vec::new();
    let mut nodes = Vec::with_capacity(x.len());
    let mut weights = Vec::with_capacity(x.len());
    let mut ts = Vec::with_capacity(x.len());
    for (xi, wi) in x.iter().zip(w) {
        let t = mid + half * xi;
        let z = panel.point(t);
        let dz = panel.deriv(t);
        let weight = match measure {
            Measure::Complex => dz * (half * wi),
            Measure::ArcLength => c64::new(dz.norm() * half * wi, 0.0),
        };
        let fz = f(z)?;
        if fz.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("integrand"));
        }
        if value.is_empty() {
            value = vec![c64::new(0.0, 0.0); fz.len()];
        }
        if fz.len() != value.len() {
            return Err(Error::DimensionMismatch {
                what: "integrand length",
                expected: value.len(),
                found: fz.len(),
            });
        }
        for (acc, v) in value.iter_mut().zip(&fz) {
            *acc += v * weight;
        }
        nodes.push(z);
        weights.push(weight);
        ts.push(t);
    }
    Ok(Piece {
        nodes,
        weights,
        t: ts,
        value,
    })
}

fn sup_diff(a: &[c64], b: &[c64], c: &[c64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((x, y), z)| (x - (y + z)).norm())
        .fold(0.0, f64::max)
}

struct Pending {
    panel: usize,
    t0: f64,
    t1: f64,
    depth: usize,
    whole: Vec<c64>,
}

struct Accepted {
    panel: usize,
    t0: f64,
    left: Piece,
    right: Piece,
    diff: f64,
}

/// Adaptive composite Gauss–Legendre on the panels of `contour`.
///
/// Each interval is compared with the sum over its two halves; the interval
/// is accepted when the difference (sup norm over the vector integrand) is at
/// most `tol · max(1, |I|) · (share of total length)`. Intervals of one level
/// are evaluated in parallel, and the accepted pieces are summed sequentially
/// in `(panel, t)` order, so the result does not depend on thread scheduling.
pub fn integrate<F>(
    contour: &HalfPlaneContour,
    cfg: &QuadConfig,
    measure: Measure,
    f: F,
) -> Result<Integral>
where
    F: Fn(c64) -> Result<Vec<c64>> + Sync,
{
    if cfg.order == 0 || cfg.initial_pieces == 0 || !(cfg.tol > 0.0) {
        return Err(Error::InvalidParameter(
            "quadrature order, pieces and tolerance must be positive".into(),
        ));
    }
    let (x, w) = gauss_legendre(cfg.order);
    let panels = &contour.panels;
    let lengths: Vec<f64> = panels.iter().map(|p| p.length()).collect();
    let total: f64 = lengths.iter().sum();

    let mut init = Vec::new();
    for (pi, _) in panels.iter().enumerate() {
        let m = cfg.initial_pieces;
        for j in 0..m {
            init.push((pi, j as f64 / m as f64, (j + 1) as f64 / m as f64));
        }
    }
    let wholes: Vec<Piece> = init
        .par_iter()
        .map(|&(pi, t0, t1)| gl_piece(&panels[pi], t0, t1, &x, &w, measure, &f))
        .collect::<Result<_>>()?;
    let dim = wholes.first().map(|p| p.value.len()).unwrap_or(0);
    let mut coarse = vec![c64::new(0.0, 0.0); dim];
    for p in &wholes {
        for (a, v) in coarse.iter_mut().zip(&p.value) {
            *a += v;
        }
    }
    let scale = coarse.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let tol_abs = cfg.tol * scale;

    let mut level: Vec<Pending> = init
        .iter()
        .zip(wholes)
        .map(|(&(panel, t0, t1), p)| Pending {
            panel,
            t0,
            t1,
            depth: 0,
            whole: p.value,
        })
        .collect();
    let mut accepted: Vec<Accepted> = Vec::new();
    let mut converged = true;
    let mut depth_reached = 0;

    while !level.is_empty() {
        let results: Vec<(Piece, Piece)> = level
            .par_iter()
            .map(|p| {
                let mid = 0.5 * (p.t0 + p.t1);
                let panel = &panels[p.panel];
                Ok((
                    gl_piece(panel, p.t0, mid, &x, &w, measure, &f)?,
                    gl_piece(panel, mid, p.t1, &x, &w, measure, &f)?,
                ))
            })
            .collect::<Result<_>>()?;
        let mut next = Vec::new();
        for (p, (left, right)) in level.into_iter().zip(results) {
            depth_reached = depth_reached.max(p.depth);
            let diff = sup_diff(&p.whole, &left.value, &right.value);
            let share = (p.t1 - p.t0) * lengths[p.panel] / total;
            let exhausted = accepted.len() + next.len() + 2 > cfg.max_intervals;
            if diff <= tol_abs * share || p.depth >= cfg.max_depth || exhausted {
                if diff > tol_abs * share {
                    converged = false;
                }
                accepted.push(Accepted {
                    panel: p.panel,
                    t0: p.t0,
                    left,
                    right,
                    diff,
                });
            } else {
                let mid = 0.5 * (p.t0 + p.t1);
                next.push(Pending {
                    panel: p.panel,
                    t0: p.t0,
                    t1: mid,
                    depth: p.depth + 1,
                    whole: left.value,
                });
                next.push(Pending {
                    panel: p.panel,
                    t0: mid,
                    t1: p.t1,
                    depth: p.depth + 1,
                    whole: right.value,
                });
            }
        }
        level = next;
    }

    accepted.sort_by(|a, b| a.panel.cmp(&b.panel).then(a.t0.total_cmp(&b.t0)));
    let mut value = vec![c64::new(0.0, 0.0); dim];
    let mut error = 0.0;
    let mut rule = QuadratureRule {
        nodes: Vec::new(),
        weights: Vec::new(),
        panel: Vec::new(),
        t: Vec::new(),
        order: cfg.order,
        depth: depth_reached,
        tolerance: cfg.tol,
        error_estimate: 0.0,
        measure,
    };
    for a in &accepted {
        for piece in [&a.left, &a.right] {
            for (v, p) in value.iter_mut().zip(&piece.value) {
                *v += p;
            }
            rule.nodes.extend_from_slice(&piece.nodes);
            rule.weights.extend_from_slice(&piece.weights);
            rule.t.extend_from_slice(&piece.t);
            rule.panel
                .extend(std::iter::repeat_n(a.panel, piece.nodes.len()));
        }
        error += a.diff;
    }
    rule.error_estimate = error;
    if !converged {
        return Err(Error::QuadratureNonConvergence {
            estimate: Box::new(value),
            residual: error,
        });
    }
    Ok(Integral { value, error, rule })
}

/// Non-adaptive composite rule: every panel cut into `pieces` equal parameter
/// intervals. Used for refinement-rate studies.
pub fn integrate_uniform<F>(
    contour: &HalfPlaneContour,
    order: usize,
    pieces: usize,
    measure: Measure,
    f: F,
) -> Result<Vec<c64>>
where
    F: Fn(c64) -> Result<Vec<c64>>,
{
    let (x, w) = gauss_legendre(order);
    let mut value: Vec<c64> = Vec::new();
    for panel in &contour.panels {
        for j in 0..pieces {
            let p = gl_piece(
                panel,
                j as f64 / pieces as f64,
                (j + 1) as f64 / pieces as f64,
                &x,
                &w,
                measure,
                &f,
            )?;
            if value.is_empty() {
                value = p.value;
            } else {
                for (a, v) in value.iter_mut().zip(&p.value) {
                    *a += v;
                }
            }
        }
    }
    Ok(value)
}
