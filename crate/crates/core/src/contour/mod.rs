//! The curves `γ_ξ^±`, the branch square root and diagonal half powers.
//!
//! `γ_ξ^+` bounds `F_ξ^+ = {|z| ≤ 1, Re z ≥ ξ}`: the unit-circle arc from
//! `ξ − ih` to `ξ + ih` (`h = √(1 − ξ²)`) followed by the vertical segment
//! back down. `γ_ξ^-` runs the complementary arc and climbs the segment.
//! Both are positively oriented.

pub mod quadrature;

pub use quadrature::{
    gauss_legendre, integrate, integrate_uniform, Integral, Measure, QuadConfig, QuadratureRule,
};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::model::{segment_distance, Side, SpectrumSpec};
use crate::{c64, Error, Result};

/// Minimum distance between any evaluation point and any `λ_n`.
pub const COLLISION_FLOOR: f64 = 1e-13;

/// Square root with `arg z ∈ [−π, π)`, so the result has `arg ∈ [−π/2, π/2)`.
///
/// On the negative real axis this picks `−i√|z|`, unlike the usual
/// principal root which returns `+i√|z|`.
pub fn principal_sqrt(z: c64) -> Result<c64> {
    if z == c64::new(0.0, 0.0) {
        return Err(Error::InvalidParameter(
            "square root of zero is excluded".into(),
        ));
    }
    let s = z.sqrt();
    if s.re < 0.0 || (s.re == 0.0 && s.im > 0.0) {
        Ok(-s)
    } else {
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exponent {
    /// `+1/2`
    Half,
    /// `−1/2`
    NegHalf,
    /// `−1`
    NegOne,
}

/// `(λ_n − z)^p` for every `n`, using [`principal_sqrt`] for half powers.
pub fn diag_power(lambdas: &[c64], z: c64, exponent: Exponent) -> Result<Vec<c64>> {
    lambdas
        .iter()
        .enumerate()
        .map(|(index, l)| {
            let d = l - z;
            let distance = d.norm();
            if distance < COLLISION_FLOOR {
                return Err(Error::Collision { z, index, distance });
            }
            Ok(match exponent {
                Exponent::Half => principal_sqrt(d)?,
                Exponent::NegHalf => principal_sqrt(d)?.inv(),
                Exponent::NegOne => d.inv(),
            })
        })
        .collect()
}

/// A smooth piece of a contour, parameterized on `t ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Panel {
    Segment {
        a: c64,
        b: c64,
    },
    /// Unit-circle arc, counterclockwise from `theta0` to `theta1`.
    Arc {
        theta0: f64,
        theta1: f64,
    },
    /// Several panels glued and parameterized by arclength as one piece. Only
    /// used to demonstrate what is lost without corner splitting.
    Joined {
        pieces: Vec<Panel>,
        cumulative: Vec<f64>,
    },
}

impl Panel {
    pub fn point(&self, t: f64) -> c64 {
        match self {
            Panel::Segment { a, b } => a + (b - a) * t,
            Panel::Arc { theta0, theta1 } => c64::from_polar(1.0, theta0 + t * (theta1 - theta0)),
            Panel::Joined { .. } => {
                let (p, s) = self.locate(t);
                p.point(s)
            }
        }
    }

    /// `dz/dt`
    pub fn deriv(&self, t: f64) -> c64 {
        match self {
            Panel::Segment { a, b } => b - a,
            Panel::Arc { theta0, theta1 } => {
                c64::new(0.0, theta1 - theta0)
                    * c64::from_polar(1.0, theta0 + t * (theta1 - theta0))
            }
            Panel::Joined { cumulative, .. } => {
                let total = *cumulative.last().unwrap();
                let (p, s) = self.locate(t);
                p.deriv(s) * (total / p.length())
            }
        }
    }

    pub fn length(&self) -> f64 {
        match self {
            Panel::Segment { a, b } => (b - a).norm(),
            Panel::Arc { theta0, theta1 } => (theta1 - theta0).abs(),
            Panel::Joined { cumulative, .. } => *cumulative.last().unwrap(),
        }
    }

    pub fn distance_to(&self, z: c64) -> f64 {
        match self {
            Panel::Segment { a, b } => segment_distance(*a, *b, z),
            Panel::Arc { theta0, theta1 } => {
                let (lo, hi) = if theta0 <= theta1 {
                    (*theta0, *theta1)
                } else {
                    (*theta1, *theta0)
                };
                let mut ang = z.arg();
                while ang < lo {
                    ang += 2.0 * PI;
                }
                if z.norm() > 0.0 && ang <= hi {
                    (z.norm() - 1.0).abs()
                } else {
                    (z - c64::from_polar(1.0, lo))
                        .norm()
                        .min((z - c64::from_polar(1.0, hi)).norm())
                }
            }
            Panel::Joined { pieces, .. } => pieces
                .iter()
                .map(|p| p.distance_to(z))
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn locate(&self, t: f64) -> (&Panel, f64) {
        let Panel::Joined { pieces, cumulative } = self else {
            unreachable!()
        };
        let total = *cumulative.last().unwrap();
        let s = t * total;
        let mut start = 0.0;
        for (p, &end) in pieces.iter().zip(cumulative) {
            if s <= end || std::ptr::eq(p, pieces.last().unwrap()) {
                return (p, ((s - start) / (end - start)).clamp(0.0, 1.0));
            }
            start = end;
        }
        unreachable!()
    }
}

/// Settings for [`build_contour`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContourConfig {
    /// Required `min_n |Re λ_n − ξ|`.
    pub margin_floor: f64,
    pub split_corners: bool,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            margin_floor: 1e-6,
            split_corners: true,
        }
    }
}

/// The closed curve `γ_ξ^±` as a chain of panels.
#[derive(Clone, Debug)]
pub struct HalfPlaneContour {
    pub xi: f64,
    pub side: Side,
    pub panels: Vec<Panel>,
    /// `ξ − ih` and `ξ + ih`.
    pub corners: [c64; 2],
    /// `min_n dist(λ_n, γ)` when built against a spectrum.
    pub clearance: Option<f64>,
    /// `min_n |Re λ_n − ξ|` when built against a spectrum.
    pub margin: Option<f64>,
}

impl HalfPlaneContour {
    /// Geometry only, no spectrum checks.
    pub fn new(xi: f64, side: Side, split_corners: bool) -> Result<Self> {
        if !(xi > -1.0 && xi < 1.0) {
            return Err(Error::OutsideAdmissibleRange {
                xi,
                lo: -1.0,
                hi: 1.0,
            });
        }
        let h = (1.0 - xi * xi).sqrt();
        let tc = xi.acos();
        let bottom = c64::new(xi, -h);
        let top = c64::new(xi, h);
        let (arc, seg) = match side {
            Side::Plus => (
                Panel::Arc {
                    theta0: -tc,
                    theta1: tc,
                },
                Panel::Segment { a: top, b: bottom },
            ),
            Side::Minus => (
                Panel::Arc {
                    theta0: tc,
                    theta1: 2.0 * PI - tc,
                },
                Panel::Segment { a: bottom, b: top },
            ),
        };
        let panels = if split_corners {
            vec![arc, seg]
        } else {
            // start the single panel mid-arc so neither corner sits on a panel end
            let (a1, a2) = match arc {
                Panel::Arc { theta0, theta1 } => {
                    let m = 0.5 * (theta0 + theta1);
                    (
                        Panel::Arc { theta0: m, theta1 },
                        Panel::Arc { theta0, theta1: m },
                    )
                }
                _ => unreachable!(),
            };
            let l1 = a1.length();
            let l2 = l1 + seg.length();
            let l3 = l2 + a2.length();
            vec![Panel::Joined {
                pieces: vec![a1, seg, a2],
                cumulative: vec![l1, l2, l3],
            }]
        };
        Ok(Self {
            xi,
            side,
            panels,
            corners: [bottom, top],
            clearance: None,
            margin: None,
        })
    }

    pub fn length(&self) -> f64 {
        self.panels.iter().map(|p| p.length()).sum()
    }

    pub fn distance_to(&self, z: c64) -> f64 {
        self.panels
            .iter()
            .map(|p| p.distance_to(z))
            .fold(f64::INFINITY, f64::min)
    }

    /// Strict interior test by geometry (`F_ξ^±` minus its boundary).
    pub fn encloses(&self, z: c64) -> bool {
        let inside_half = match self.side {
            Side::Plus => z.re > self.xi,
            Side::Minus => z.re < self.xi,
        };
        inside_half && z.norm() < 1.0
    }
}

/// Builds `γ_ξ^side` for a spectrum, refusing abscissae on a real shadow.
pub fn build_contour(
    spectrum: &SpectrumSpec,
    xi: f64,
    side: Side,
    cfg: &ContourConfig,
) -> Result<HalfPlaneContour> {
    let (lo, hi) = spectrum.admissible_range();
    if !(xi > lo && xi < hi) {
        return Err(Error::OutsideAdmissibleRange { xi, lo, hi });
    }
    let (margin, idx) = spectrum.shadow_margin(xi);
    if let Some(index) = idx {
        if margin < cfg.margin_floor {
            return Err(Error::OnSpectrumShadow {
                xi,
                index,
                distance: margin,
            });
        }
    }
    let mut c = HalfPlaneContour::new(xi, side, cfg.split_corners)?;
    c.margin = Some(margin);
    c.clearance = Some(
        spectrum
            .lambdas
            .iter()
            .map(|l| c.distance_to(*l))
            .fold(f64::INFINITY, f64::min),
    );
    Ok(c)
}

/// Index of `μ` with respect to the contour, by quadrature of
/// `(1/2πi)∮ dξ/(ξ − μ)` rounded to the nearest integer.
pub fn winding_inside(contour: &HalfPlaneContour, mu: c64, floor: f64) -> Result<bool> {
    let distance = contour.distance_to(mu);
    if distance < floor {
        return Err(Error::TooCloseToContour { z: mu, distance });
    }
    let cfg = QuadConfig {
        tol: 1e-8,
        ..QuadConfig::default()
    };
    let r = integrate(contour, &cfg, Measure::Complex, |z| {
        Ok(vec![(z - mu).inv()])
    })?;
    let w = r.value[0] / c64::new(0.0, 2.0 * PI);
    Ok(w.re.round() == 1.0)
}

/// Empirical version of the contour constant: `sup_λ |Re λ − ξ| · ∮ |dξ′|/|λ − ξ′|²`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightConstant {
    pub value: f64,
    pub argmax: usize,
    pub per_point: Vec<f64>,
}

pub fn contour_weight_constant(
    contour: &HalfPlaneContour,
    grid: &[c64],
    cfg: &QuadConfig,
) -> Result<WeightConstant> {
    if grid.is_empty() {
        return Ok(WeightConstant {
            value: 0.0,
            argmax: 0,
            per_point: Vec::new(),
        });
    }
    for &l in grid {
        let distance = contour.distance_to(l);
        if distance < COLLISION_FLOOR {
            return Err(Error::TooCloseToContour { z: l, distance });
        }
    }
    let r = integrate(contour, cfg, Measure::ArcLength, |z| {
        Ok(grid
            .iter()
            .map(|l| c64::new((l - z).norm_sqr().recip(), 0.0))
            .collect())
    })?;
    let per_point: Vec<f64> = grid
        .iter()
        .zip(&r.value)
        .map(|(l, v)| (l.re - contour.xi).abs() * v.re)
        .collect();
    let (argmax, value) = per_point.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |b, (i, &v)| if v > b.1 { (i, v) } else { b },
    );
    Ok(WeightConstant {
        value,
        argmax,
        per_point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn branch_examples() {
        assert!((principal_sqrt(c(4.0, 0.0)).unwrap() - c(2.0, 0.0)).norm() < 1e-15);
        assert_eq!(principal_sqrt(c(-1.0, 0.0)).unwrap(), c(0.0, -1.0));
        assert_eq!(principal_sqrt(c(-1.0, -0.0)).unwrap(), c(0.0, -1.0));
        let r = principal_sqrt(c(0.0, 1.0)).unwrap();
        assert!((r - c(0.5f64.sqrt(), 0.5f64.sqrt())).norm() < 1e-15);
        assert!(principal_sqrt(c(0.0, 0.0)).is_err());
    }

    #[test]
    fn diag_power_examples() {
        let one = diag_power(&[c(0.0, 0.0)], c(-1.0, 0.0), Exponent::Half).unwrap();
        assert_eq!(one[0], c(1.0, 0.0));
        let i = diag_power(&[c(0.0, 0.0)], c(1.0, 0.0), Exponent::NegHalf).unwrap();
        assert!((i[0] - c(0.0, 1.0)).norm() < 1e-15);
        assert!(matches!(
            diag_power(&[c(0.3, 0.0)], c(0.3, 0.0), Exponent::NegOne),
            Err(Error::Collision { index: 0, .. })
        ));
    }

    #[test]
    fn geometry_of_zero_abscissa() {
        let p = HalfPlaneContour::new(0.0, Side::Plus, true).unwrap();
        assert!((p.length() - (2.0 + PI)).abs() < 1e-14);
        assert!((p.corners[0] - c(0.0, -1.0)).norm() < 1e-15);
        assert!((p.corners[1] - c(0.0, 1.0)).norm() < 1e-15);
        let m = HalfPlaneContour::new(0.0, Side::Minus, true).unwrap();
        // shared segment, arcs cover the circle
        assert!((p.panels[0].length() + m.panels[0].length() - 2.0 * PI).abs() < 1e-14);
        assert_eq!(p.panels[1].length(), m.panels[1].length());
        let q = HalfPlaneContour::new(0.3, Side::Plus, true).unwrap();
        assert!((q.corners[1] - c(0.3, 0.91f64.sqrt())).norm() < 1e-15);
        assert!((q.corners[1].im - 0.95394).abs() < 1e-5);
    }

    #[test]
    fn panels_chain_and_close() {
        for side in [Side::Plus, Side::Minus] {
            let g = HalfPlaneContour::new(-0.4, side, true).unwrap();
            let n = g.panels.len();
            for i in 0..n {
                let end = g.panels[i].point(1.0);
                let start = g.panels[(i + 1) % n].point(0.0);
                assert!((end - start).norm() < 1e-15);
            }
            let j = HalfPlaneContour::new(-0.4, side, false).unwrap();
            assert!((j.panels[0].point(0.0) - j.panels[0].point(1.0)).norm() < 1e-15);
            assert!((j.length() - g.length()).abs() < 1e-14);
        }
    }

    #[test]
    fn shadow_is_rejected() {
        let s = SpectrumSpec::sampled(vec![c(0.2, 0.5)]).unwrap();
        let e = build_contour(&s, 0.2 + 1e-9, Side::Plus, &ContourConfig::default());
        assert!(matches!(e, Err(Error::OnSpectrumShadow { index: 0, .. })));
        assert!(matches!(
            build_contour(&s, 1.0, Side::Plus, &ContourConfig::default()),
            Err(Error::OutsideAdmissibleRange { .. })
        ));
        let ok = build_contour(&s, 0.0, Side::Plus, &ContourConfig::default()).unwrap();
        assert!((ok.margin.unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn cauchy_formula_inside_and_outside() {
        let g = HalfPlaneContour::new(0.0, Side::Plus, true).unwrap();
        let cfg = QuadConfig::default();
        let tpi = c(0.0, 2.0 * PI);
        let inside = integrate(&g, &cfg, Measure::Complex, |z| {
            Ok(vec![(z - 0.5).inv() / tpi])
        })
        .unwrap();
        assert!((inside.value[0] - c(1.0, 0.0)).norm() < 1e-10);
        let outside = integrate(&g, &cfg, Measure::Complex, |z| {
            Ok(vec![(z + 0.5).inv() / tpi])
        })
        .unwrap();
        assert!(outside.value[0].norm() < 1e-10);
    }

    #[test]
    fn winding_examples() {
        let p = HalfPlaneContour::new(0.0, Side::Plus, true).unwrap();
        assert!(winding_inside(&p, c(0.5, 0.0), 1e-8).unwrap());
        assert!(!winding_inside(&p, c(-0.5, 0.0), 1e-8).unwrap());
        let m = HalfPlaneContour::new(0.3, Side::Minus, true).unwrap();
        assert!(!winding_inside(&m, c(0.5, 0.0), 1e-8).unwrap());
        assert!(winding_inside(&m, c(-0.5, 0.2), 1e-8).unwrap());
        assert!(winding_inside(&p, c(0.0, 0.0), 1e-8).is_err());
    }

    #[test]
    fn weight_constant_far_point() {
        let g = HalfPlaneContour::new(0.0, Side::Plus, true).unwrap();
        let w = contour_weight_constant(&g, &[c(10.0, 0.0)], &QuadConfig::default()).unwrap();
        // |λ − ξ′| ≥ 9 on the curve
        assert!(w.value <= 10.0 * g.length() / 81.0);
    }

    #[test]
    fn distances() {
        let g = HalfPlaneContour::new(0.0, Side::Plus, true).unwrap();
        assert!((g.distance_to(c(0.5, 0.0)) - 0.5).abs() < 1e-15);
        assert!((g.distance_to(c(-2.0, 0.0)) - 2.0).abs() < 1e-15);
        assert!((g.distance_to(c(2.0, 0.0)) - 1.0).abs() < 1e-15);
    }
}
