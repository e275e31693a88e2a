//! Seeded test-instance generators.
//!
//! Random instances keep a simple, well-separated spectrum so the dense
//! oracle's eigenprojectors are well conditioned. The closed-form families
//! attach their tail laws so gates can certify the infinite family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::CMat;
use crate::model::{
    build_operator, CoefficientFamily, Decay, FamilyTail, PerturbedOperator, SpectrumSpec,
    TailRealParts,
};
use crate::oracle::dense_eig;
use crate::{c64, Error, Result};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard complex normal with `E|z|² = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> c64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<c64> {
    let v: Vec<c64> = (0..n).map(|_| complex_normal(rng)).collect();
    let s = crate::linalg::vec_norm(&v);
    v.into_iter().map(|x| x / s).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomSpec {
    pub n: usize,
    pub r: usize,
    /// Eigenvalues of the diagonal lie in this disc.
    pub radius: f64,
    pub min_gap: f64,
    /// Column norms of `α`, `β` are about this size.
    pub coeff_scale: f64,
    /// Abscissa kept clear of spectrum.
    pub xi: f64,
    /// Half-width of the strip around `xi` kept free of `Re λ_n`.
    pub strip: f64,
    /// Bounds on the spectrum of the perturbed operator.
    pub eig_radius: f64,
    pub eig_clearance: f64,
    pub max_tries: usize,
}

impl RandomSpec {
    pub fn new(n: usize, r: usize) -> Self {
        Self {
            n,
            r,
            radius: 0.9,
            min_gap: 1e-4,
            coeff_scale: 0.3,
            xi: 0.0,
            strip: 0.1,
            eig_radius: 0.95,
            eig_clearance: 0.05,
            max_tries: 200,
        }
    }
}

fn sample_lambdas<R: Rng + ?Sized>(rng: &mut R, spec: &RandomSpec) -> Vec<c64> {
    let mut out: Vec<c64> = Vec::with_capacity(spec.n);
    while out.len() < spec.n {
        let z = c64::from_polar(
            spec.radius * rng.random::<f64>().sqrt(),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        if (z.re - spec.xi).abs() < spec.strip || out.iter().any(|w| (w - z).norm() < spec.min_gap)
        {
            continue;
        }
        out.push(z);
    }
    out
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize, r: usize, scale: f64) -> CMat {
    let s = scale / (n.max(1) as f64).sqrt();
    CMat::from_fn(n, r, |_, _| complex_normal(rng) * s)
}

/// Random instance whose perturbed spectrum stays inside the requested disc,
/// clear of `Re z = xi`, and simple. Retries from the same stream.
pub fn random_instance(spec: &RandomSpec, seed: u64) -> Result<PerturbedOperator> {
    let mut rng = rng(seed);
    for _ in 0..spec.max_tries {
        let lambdas = sample_lambdas(&mut rng, spec);
        let alpha = gaussian_matrix(&mut rng, spec.n, spec.r, spec.coeff_scale);
        let beta = gaussian_matrix(&mut rng, spec.n, spec.r, spec.coeff_scale);
        let op = build_operator(
            SpectrumSpec::sampled(lambdas)?,
            CoefficientFamily::new(alpha, beta, None)?,
        )?;
        let sys = dense_eig(&op.dense())?;
        let ok = sys.min_gap >= spec.min_gap
            && sys.values.iter().all(|m| {
                m.norm() <= spec.eig_radius && (m.re - spec.xi).abs() >= spec.eig_clearance
            });
        if ok {
            return Ok(op);
        }
    }
    Err(Error::InvalidParameter(format!(
        "no admissible instance after {} tries (n = {}, r = {})",
        spec.max_tries, spec.n, spec.r
    )))
}

/// `λ_n = (−1)^n/2 + 0.4i/n`: accumulates at `±1/2`, so `(a, b) = (−1/2, 1/2)`.
pub fn alternating_spectrum(n: usize) -> Result<SpectrumSpec> {
    let lambdas = (1..=n)
        .map(|k| c64::new(if k % 2 == 0 { 0.5 } else { -0.5 }, 0.4 / k as f64))
        .collect();
    SpectrumSpec::with_accumulation(lambdas, -0.5, 0.5)
}

fn law_matrix(n: usize, r: usize, law: Decay, phase: f64) -> CMat {
    CMat::from_fn(n, r, |i, k| {
        c64::from_polar(law.at(i + 1) / (k + 1) as f64, phase * (i + k) as f64)
    })
}

fn law_family(n: usize, r: usize, law: Decay, exact: bool) -> Result<PerturbedOperator> {
    if r == 0 {
        return Err(Error::InvalidParameter(
            "closed-form families need r ≥ 1".into(),
        ));
    }
    let tail = FamilyTail {
        alpha: law,
        beta: law,
        exact,
        tail_re: Some(TailRealParts {
            points: vec![-0.5, 0.5],
            radius: 0.0,
        }),
    };
    let coeffs = CoefficientFamily::new(
        law_matrix(n, r, law, 0.7),
        law_matrix(n, r, law, -0.3),
        Some(tail),
    )?;
    build_operator(alternating_spectrum(n)?, coeffs)
}

/// `|α_n^{(k)}| = |β_n^{(k)}| = 2^{−n}/(k+1)`; exact only for the first column,
/// so the law is an upper bound.
pub fn geometric_family(n: usize, r: usize) -> Result<PerturbedOperator> {
    law_family(
        n,
        r,
        Decay::Geometric {
            scale: 1.0,
            ratio: 0.5,
        },
        r == 1,
    )
}

/// `|α_n^{(k)}| = |β_n^{(k)}| = n^{−p}/(k+1)`.
pub fn power_family(n: usize, r: usize, p: f64) -> Result<PerturbedOperator> {
    law_family(
        n,
        r,
        Decay::Power {
            scale: 1.0,
            exponent: p,
        },
        r == 1,
    )
}

/// Real parts spread over `(−1/2, 1/2)` by the golden-ratio sequence, with
/// `α_n = β_n = n^{−1}`; the weighted sums are finite for almost every `ξ`.
pub fn log_condition_family(n: usize, r: usize) -> Result<PerturbedOperator> {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let lambdas: Vec<c64> = (1..=n)
        .map(|k| {
            let x = (k as f64 * phi).fract() - 0.5;
            c64::new(0.9 * x, 0.3 * ((k as f64 * phi * phi).fract() - 0.5))
        })
        .collect();
    let law = Decay::Power {
        scale: 1.0,
        exponent: 1.0,
    };
    let tail = FamilyTail {
        alpha: law,
        beta: law,
        exact: r == 1,
        tail_re: None,
    };
    let coeffs = CoefficientFamily::new(
        law_matrix(n, r, law, 0.7),
        law_matrix(n, r, law, -0.3),
        Some(tail),
    )?;
    build_operator(
        SpectrumSpec::with_accumulation(lambdas, -0.45, 0.45)?,
        coeffs,
    )
}

/// Real parts clustering at `xi0` as `xi0 ± 2^{−n}` with coefficients `n^{−1}`:
/// the weighted sums blow up as `ξ → xi0`.
pub fn cluster_family(n: usize, xi0: f64) -> Result<PerturbedOperator> {
    let lambdas: Vec<c64> = (1..=n)
        .map(|k| {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            c64::new(xi0 + s * 0.5f64.powi(k as i32).max(1e-12), 0.3 / k as f64)
        })
        .collect();
    let col = CMat::from_fn(n, 1, |i, _| c64::new(1.0 / (i + 1) as f64, 0.0));
    let coeffs = CoefficientFamily::new(col.clone(), col, None)?;
    build_operator(SpectrumSpec::sampled(lambdas)?, coeffs)
}

/// Rank-one operator with an eigenvalue placed exactly at `mu`: given `α`,
/// choose `β = −α / conj(S)` with `S = Σ |α_n|²/(λ_n − μ)`, so that
/// `1 + Σ α_n conj(β_n)/(λ_n − μ) = 0`.
pub fn spike_instance(lambdas: Vec<c64>, alpha: Vec<c64>, mu: c64) -> Result<PerturbedOperator> {
    if lambdas.len() != alpha.len() {
        return Err(Error::DimensionMismatch {
            what: "spike alpha",
            expected: lambdas.len(),
            found: alpha.len(),
        });
    }
    let s: c64 = lambdas
        .iter()
        .zip(&alpha)
        .map(|(l, a)| a.norm_sqr() / (l - mu))
        .sum();
    if s.norm() == 0.0 || !s.norm().is_finite() {
        return Err(Error::InvalidParameter(format!(
            "secular sum degenerate at {mu}"
        )));
    }
    let n = lambdas.len();
    let a = CMat::from_fn(n, 1, |i, _| alpha[i]);
    let b = CMat::from_fn(n, 1, |i, _| -alpha[i] / s.conj());
    build_operator(
        SpectrumSpec::sampled(lambdas)?,
        CoefficientFamily::new(a, b, None)?,
    )
}

/// One eigenvalue per grid abscissa except the two kept free, with small
/// geometric coefficients. The margin vanishes at every other grid point,
/// so only `grid[i1]` and `grid[i2]` can pass a local gate.
pub fn two_gap_instance(
    grid: &[f64],
    i1: usize,
    i2: usize,
    r: usize,
    seed: u64,
) -> Result<PerturbedOperator> {
    if i1 >= grid.len() || i2 >= grid.len() || i1 == i2 || r == 0 {
        return Err(Error::InvalidParameter(
            "two-gap instance needs two distinct grid indices and r ≥ 1".into(),
        ));
    }
    let mut rng = rng(seed);
    let lambdas: Vec<c64> = grid
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != i1 && *i != i2)
        .map(|(i, &x)| {
            c64::new(
                x,
                0.6 * (1.0 - x * x).max(0.0).sqrt() * (((i * 7) % 11) as f64 / 10.0 - 0.5),
            )
        })
        .collect();
    let n = lambdas.len();
    let m = |rng: &mut ChaCha8Rng| {
        CMat::from_fn(n, r, |i, _| {
            complex_normal(rng) * 0.05 * 0.8f64.powi(i as i32)
        })
    };
    let alpha = m(&mut rng);
    let beta = m(&mut rng);
    build_operator(
        SpectrumSpec::sampled(lambdas)?,
        CoefficientFamily::new(alpha, beta, None)?,
    )
}
