//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p specidem --test acceptance`.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use specidem::c64;
use specidem::contour::{
    contour_weight_constant, integrate, integrate_uniform, HalfPlaneContour, Measure, QuadConfig,
};
use specidem::generate::{self, random_instance, RandomSpec};
use specidem::idempotent::{
    commutant_residual, half_plane_idempotent, idempotency_ok, interior_grid, oracle_gap,
    rectangle_idempotent, sample_delta, verify_pair, DeltaConfig, IdempotentConfig,
    SpectralIdempotent,
};
use specidem::linalg;
use specidem::localspec::{
    build_grid, calibrate, certificate_g_functions, check_membership, CertConfig, GridSpec,
};
use specidem::model::{summability_gate, PerturbedOperator, Side, TailStatus, Verdict};
use specidem::oracle::{
    commutant_basis, dense_contour_projector_with_rule, dense_eig, EigenSystem,
};
use specidem::resolvent::{
    assemble_core, circle_identity_residual, cofactor_identity_residual, symmetrized_operator,
    woodbury_residual,
};

struct Case {
    op: PerturbedOperator,
    xi: f64,
    sys: EigenSystem,
    plus: SpectralIdempotent,
    minus: SpectralIdempotent,
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const DIMS: [usize; 4] = [8, 16, 32, 64];
const RANKS: [usize; 3] = [1, 2, 4];
const XIS: [f64; 3] = [-0.3, 0.0, 0.3];

fn spec_for(n: usize, r: usize, xi: f64) -> RandomSpec {
    RandomSpec {
        xi,
        ..RandomSpec::new(n, r)
    }
}

fn criterion_1(cases: &mut Vec<Case>) -> Outcome {
    let start = Instant::now();
    let cfg = IdempotentConfig {
        dense_checks: false,
        constants: false,
        ..IdempotentConfig::default()
    };
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (ni, &n) in DIMS.iter().enumerate() {
        for (ri, &r) in RANKS.iter().enumerate() {
            for rep in 0..9u64 {
                let seed = 1000 * ni as u64 + 100 * ri as u64 + rep;
                let xi = XIS[rep as usize % 3];
                let run = || -> specidem::Result<Case> {
                    let op = random_instance(&spec_for(n, r, xi), seed)?;
                    let sys = dense_eig(&op.dense())?;
                    let plus = half_plane_idempotent(&op, xi, Side::Plus, &cfg)?;
                    let minus = half_plane_idempotent(&op, xi, Side::Minus, &cfg)?;
                    Ok(Case {
                        op,
                        xi,
                        sys,
                        plus,
                        minus,
                    })
                };
                match run() {
                    Ok(mut c) => {
                        for id in [&mut c.plus, &mut c.minus] {
                            let g = oracle_gap(id, &c.sys).unwrap_or(f64::INFINITY);
                            id.diagnostics.oracle_gap = Some(g);
                            worst = worst.max(g);
                            if !(g <= 1e-6) {
                                failures.push(format!(
                                    "N={n} R={r} seed={seed} {}: gap {g:.2e}",
                                    id.side
                                ));
                            }
                        }
                        cases.push(c);
                    }
                    Err(e) => failures.push(format!("N={n} R={r} seed={seed}: {e}")),
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && cases.len() >= 100 && secs <= 120.0;
    let mut detail = format!(
        "{} instances, max ‖J − P‖₂ = {worst:.2e} (≤ 1e-6), {secs:.1} s (≤ 120 s)",
        cases.len()
    );
    if let Some(f) = failures.first() {
        detail += &format!("; {} failures, first: {f}", failures.len());
    }
    outcome(pass, detail)
}

fn criterion_2(cases: &[Case]) -> Outcome {
    let (mut idem, mut part, mut prod, mut comm, mut cbasis) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut bad = Vec::new();
    for c in cases {
        let t = c.op.dense();
        let nt = linalg::norm2(t.as_ref()).unwrap();
        let basis = commutant_basis(&t, &c.sys).unwrap();
        let v = verify_pair(&c.plus, &c.minus).unwrap();
        part = part.max(v.partition);
        prod = prod.max(v.product_pm.max(v.product_mp));
        for id in [&c.plus, &c.minus] {
            let nj = linalg::norm2(id.j.as_ref()).unwrap();
            let (_, r) = idempotency_ok(&id.j, 1.0).unwrap();
            let rel = r / (1.0 + nj * nj);
            idem = idem.max(rel);
            let jt = linalg::mul(id.j.as_ref(), t.as_ref());
            let tj = linalg::mul(t.as_ref(), id.j.as_ref());
            let cm = linalg::norm2(linalg::sub(jt.as_ref(), tj.as_ref()).as_ref()).unwrap()
                / (nt * nj.max(1.0));
            comm = comm.max(cm);
            let cb = commutant_residual(&id.j, &basis).unwrap();
            cbasis = cbasis.max(cb);
            if rel > 1e-8 || cm > 1e-8 || cb > 1e-7 {
                bad.push(format!("N={} R={} {}", c.op.n(), c.op.r(), id.side));
            }
        }
        if v.partition > 1e-8 || v.product_pm > 1e-8 || v.product_mp > 1e-8 {
            bad.push(format!("N={} R={} pair", c.op.n(), c.op.r()));
        }
    }
    let pass = bad.is_empty() && !cases.is_empty();
    outcome(
        pass,
        format!(
            "{} instances: idempotency {idem:.1e}, partition {part:.1e}, products {prod:.1e}, commutation {comm:.1e}, commutant basis {cbasis:.1e}{}",
            cases.len(),
            if bad.is_empty() { String::new() } else { format!("; offenders: {}", bad.join(", ")) }
        ),
    )
}

fn criterion_3(cases: &[Case]) -> Outcome {
    let (mut circ, mut wood) = (0.0f64, 0.0f64);
    let mut count = 0;
    for c in cases.iter().step_by(4) {
        for k in 0..64 {
            let z = c64::from_polar(1.0, 2.0 * PI * k as f64 / 64.0);
            circ = circ.max(circle_identity_residual(&c.op, z).unwrap_or(f64::INFINITY));
            wood = wood.max(woodbury_residual(&c.op, z).unwrap_or(f64::INFINITY));
        }
        count += 1;
    }
    outcome(circ <= 1e-9 && wood <= 1e-11, format!("{count} instances × 64 samples: ‖(T−z)R(z) − I‖ {circ:.1e} (≤ 1e-9), Woodbury {wood:.1e} (≤ 1e-11)"))
}

fn criterion_4() -> Outcome {
    let mut rng = generate::rng(4);
    let ops: Vec<PerturbedOperator> = (0..12)
        .map(|i| random_instance(&spec_for(DIMS[i % 4], RANKS[i % 3], 0.0), 40 + i as u64).unwrap())
        .collect();
    let (mut worst, mut used, mut skipped) = (0.0f64, 0usize, 0usize);
    while used < 1000 {
        let op = &ops[(used + skipped) % ops.len()];
        let z = c64::from_polar(
            1.2 * rng.random::<f64>().sqrt(),
            rng.random_range(0.0..2.0 * PI),
        );
        if op.lambdas().iter().any(|l| (l - z).norm() < 1e-3) {
            skipped += 1;
            continue;
        }
        match assemble_core(op, z) {
            Ok(core) if core.condition <= 1e8 => {}
            _ => {
                skipped += 1;
                continue;
            }
        }
        let x: Vec<c64> = (0..op.r())
            .map(|_| generate::complex_normal(&mut rng))
            .collect();
        worst = worst.max(cofactor_identity_residual(op, z, &x).unwrap_or(f64::INFINITY));
        used += 1;
    }
    outcome(
        worst <= 1e-10,
        format!("{used} pairs ({skipped} skipped), max residual {worst:.1e} (≤ 1e-10)"),
    )
}

fn ladder(contour: &HalfPlaneContour, mu: c64) -> (Vec<f64>, bool) {
    let exact = c64::new(0.0, 2.0 * PI) * mu.exp();
    let mut errs = Vec::new();
    let mut rate_ok = true;
    for lev in 0..12 {
        let v = integrate_uniform(contour, 4, 1 << lev, Measure::Complex, |z| {
            Ok(vec![z.exp() / (z - mu)])
        })
        .unwrap();
        let e = (v[0] - exact).norm();
        if let Some(&prev) = errs.last() {
            if prev > 1e-12 && prev / e < 4.0 {
                rate_ok = false;
            }
            if prev <= 1e-12 {
                break;
            }
        }
        errs.push(e);
    }
    (errs, rate_ok)
}

fn criterion_5() -> Outcome {
    let mut cauchy = 0.0f64;
    for (xi, side) in [(0.0, Side::Plus), (0.3, Side::Minus), (-0.6, Side::Plus)] {
        let g = HalfPlaneContour::new(xi, side, true).unwrap();
        for mu in [
            c64::new(xi + 0.2 * side_sign(side), 0.1),
            c64::new(xi - 0.3 * side_sign(side), -0.2),
            c64::new(0.0, 1.5),
        ] {
            let r = integrate(&g, &QuadConfig::default(), Measure::Complex, |z| {
                Ok(vec![z.exp() / (z - mu)])
            })
            .unwrap();
            let want = if g.encloses(mu) {
                mu.exp()
            } else {
                c64::new(0.0, 0.0)
            };
            cauchy = cauchy.max((r.value[0] / c64::new(0.0, 2.0 * PI) - want).norm());
        }
    }
    let mu = c64::new(0.45, 0.3);
    let (split_errs, split_rate) =
        ladder(&HalfPlaneContour::new(0.0, Side::Plus, true).unwrap(), mu);
    let (joined_errs, joined_rate) =
        ladder(&HalfPlaneContour::new(0.0, Side::Plus, false).unwrap(), mu);
    let reached = split_errs.last().copied().unwrap_or(1.0) <= 1e-12 || split_rate;
    outcome(
        cauchy <= 1e-10 && split_rate && reached && !joined_rate,
        format!(
            "Cauchy max error {cauchy:.1e} (≤ 1e-10); split ladder {} steps, rate ≥ 4: {split_rate}; unsplit rate ≥ 4: {joined_rate} (final error {:.1e})",
            split_errs.len(),
            joined_errs.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

fn side_sign(side: Side) -> f64 {
    if side == Side::Plus {
        1.0
    } else {
        -1.0
    }
}

fn criterion_6() -> Outcome {
    let g = HalfPlaneContour::new(0.0, Side::Plus, true).unwrap();
    let coarse = QuadConfig {
        tol: 1e-7,
        ..QuadConfig::default()
    };
    let fine = QuadConfig {
        tol: 1e-10,
        order: 24,
        ..QuadConfig::default()
    };
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    let mut finite = true;
    for d in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3] {
        let pts = [c64::new(d, 0.3)];
        let (a, b) = match (
            contour_weight_constant(&g, &pts, &coarse),
            contour_weight_constant(&g, &pts, &fine),
        ) {
            (Ok(a), Ok(b)) => (a.value, b.value),
            (Err(e), _) | (_, Err(e)) => return outcome(false, format!("distance {d:.0e}: {e}")),
        };
        finite &= a.is_finite() && b.is_finite();
        worst = worst.max((a - b).abs() / b.abs());
        values.push(b);
    }
    outcome(
        finite && worst < 5e-4,
        format!(
            "Ĉ down to |Re λ − ξ| = 1e-3: {:?}, refinement change {worst:.1e} (< 5e-4)",
            values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = IdempotentConfig {
        dense_checks: false,
        constants: false,
        ..IdempotentConfig::default()
    };
    let ccfg = CertConfig::default();
    let grid = build_grid(0.0, Side::Plus, &GridSpec::default()).unwrap();
    let mut rng = generate::rng(7);
    let (mut pass_scores, mut fail_scores) = (Vec::new(), Vec::new());
    let mut res_worst = 0.0f64;
    for seed in 0..5u64 {
        let op = random_instance(&spec_for(16, 2, 0.0), 700 + seed).unwrap();
        let jp = half_plane_idempotent(&op, 0.0, Side::Plus, &cfg).unwrap();
        for _ in 0..4 {
            let y = generate::random_unit_vector(&mut rng, op.n());
            let x = linalg::matvec(jp.j.as_ref(), &y);
            let s = certificate_g_functions(&op, &x, 0.0, Side::Plus, &grid, &cfg).unwrap();
            let c = check_membership(&op, &x, &s, &ccfg).unwrap();
            pass_scores.push(c.score);
            if c.passes {
                res_worst = res_worst.max(c.resolvent_residual);
            }
        }
        for _ in 0..20 {
            let x = generate::random_unit_vector(&mut rng, op.n());
            let s = certificate_g_functions(&op, &x, 0.0, Side::Plus, &grid, &cfg).unwrap();
            fail_scores.push(check_membership(&op, &x, &s, &ccfg).unwrap().score);
        }
    }
    let cal = calibrate(&pass_scores, &fail_scores);
    let all_pass = pass_scores.iter().all(|s| *s <= 1e-6);
    let failed = fail_scores.iter().filter(|s| **s > cal.threshold).count();
    outcome(
        all_pass && failed == fail_scores.len() && res_worst <= 1e-8,
        format!(
            "range vectors: max score {:.1e} (≤ 1e-6); random vectors failing at threshold {:.1e}: {failed}/{}; local-resolvent residual {res_worst:.1e} (≤ 1e-8)",
            cal.max_pass,
            cal.threshold,
            fail_scores.len()
        ),
    )
}

fn criterion_8(cases: &[Case]) -> Outcome {
    let (mut ident, mut eig) = (0.0f64, 0.0f64);
    for c in cases {
        let xi = c64::new(c.xi, 0.0);
        let s = symmetrized_operator(&c.op, xi).unwrap();
        ident = ident.max(s.residual_scaling).max(s.residual_intertwining);
        let mut shifted = s.t_tilde.clone();
        for i in 0..c.op.n() {
            shifted[(i, i)] += xi;
        }
        let ev = shifted.eigenvalues().unwrap();
        for mu in &c.sys.values {
            let d = ev
                .iter()
                .map(|v| (v - mu).norm())
                .fold(f64::INFINITY, f64::min);
            eig = eig.max(d);
        }
    }
    outcome(ident <= 1e-12 && eig <= 1e-8, format!("{} instances: intertwining {ident:.1e} (≤ 1e-12), eigenvalue mismatch {eig:.1e} (≤ 1e-8)", cases.len()))
}

/// Midpoint of the widest gap between consecutive sorted values in `(lo, hi)`.
fn widest_cut(values: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let mut v: Vec<f64> = values
        .iter()
        .copied()
        .filter(|x| *x > lo && *x < hi)
        .collect();
    v.sort_by(f64::total_cmp);
    v.windows(2)
        .max_by(|a, b| (a[1] - a[0]).total_cmp(&(b[1] - b[0])))
        .map(|w| 0.5 * (w[0] + w[1]))
}

fn criterion_9() -> Outcome {
    let cfg = IdempotentConfig {
        dense_checks: false,
        constants: false,
        ..IdempotentConfig::default()
    };
    let (mut gap, mut commute) = (0.0f64, 0.0f64);
    let mut sizes = Vec::new();
    let mut errors = Vec::new();
    for seed in 0..10u64 {
        let op = random_instance(&spec_for(16, 2, 0.0), 900 + seed).unwrap();
        let sys = dense_eig(&op.dense()).unwrap();
        let re: Vec<f64> = op
            .lambdas()
            .iter()
            .chain(&sys.values)
            .map(|z| z.re)
            .collect();
        let im: Vec<f64> = op
            .lambdas()
            .iter()
            .chain(&sys.values)
            .map(|z| z.im)
            .collect();
        let (Some(x1), Some(x2), Some(y1), Some(y2)) = (
            widest_cut(&re, -0.9, -0.05),
            widest_cut(&re, 0.05, 0.9),
            widest_cut(&im, -0.9, 0.0),
            widest_cut(&im, 0.0, 0.9),
        ) else {
            errors.push(format!("seed {seed}: no cut"));
            continue;
        };
        let inside: Vec<usize> = (0..sys.len())
            .filter(|&i| {
                let m = sys.values[i];
                m.re >= x1 && m.re <= x2 && m.im >= y1 && m.im <= y2
            })
            .collect();
        match rectangle_idempotent(&op, x1, x2, y1, y2, &cfg) {
            Ok(rect) => {
                let p = sys.projector_onto(&inside);
                gap = gap
                    .max(linalg::norm2(linalg::sub(rect.j.as_ref(), p.as_ref()).as_ref()).unwrap());
                commute = commute.max(rect.commute_residual);
                sizes.push(inside.len());
            }
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
    }
    outcome(
        errors.is_empty() && gap <= 1e-6 && commute <= 1e-8,
        format!(
            "{} rectangles (eigenvalues inside: {sizes:?}): ‖J_rect − ΣP‖ {gap:.1e} (≤ 1e-6), factor commutation {commute:.1e} (≤ 1e-8){}",
            sizes.len(),
            errors.first().map(|e| format!("; error: {e}")).unwrap_or_default()
        ),
    )
}

fn criterion_10() -> Outcome {
    let geo = generate::geometric_family(64, 2).unwrap();
    let g = summability_gate(&geo.coeffs, 1e6, true).unwrap();
    let geo_ok = g.verdict == Verdict::Accept
        && matches!(g.tail_log_alpha, TailStatus::Certified(_))
        && matches!(g.tail_log_beta, TailStatus::Certified(_));
    let pow = generate::power_family(64, 1, 0.5).unwrap();
    let p = summability_gate(&pow.coeffs, 1e6, true).unwrap();
    let pow_ok = p.verdict == Verdict::Reject;
    let fam = generate::log_condition_family(256, 1).unwrap();
    let (a, b) = fam.spectrum.admissible_range();
    let scan = sample_delta(&fam, &interior_grid(a, b, 400), &DeltaConfig::default()).unwrap();
    outcome(
        geo_ok && pow_ok && scan.fraction >= 0.95,
        format!(
            "geometric: {:?} with tail {:?}; 1/√n: {:?}; log-condition scan acceptance {:.3} (≥ 0.95)",
            g.verdict, g.tail_log_alpha, p.verdict, scan.fraction
        ),
    )
}

fn criterion_11() -> Outcome {
    let n = 2048;
    let op = random_instance(
        &RandomSpec {
            max_tries: 20,
            ..spec_for(n, 2, 0.0)
        },
        11,
    );
    let op = match op {
        Ok(op) => op,
        Err(e) => return outcome(false, format!("instance generation failed: {e}")),
    };
    let cfg = IdempotentConfig::lean();
    let t0 = Instant::now();
    let id = match half_plane_idempotent(&op, 0.0, Side::Plus, &cfg) {
        Ok(id) => id,
        Err(e) => return outcome(false, format!("structured route failed: {e}")),
    };
    let structured = t0.elapsed().as_secs_f64();
    let t = op.dense();
    let k = 4.min(id.rule.len());
    let t1 = Instant::now();
    let _ = dense_contour_projector_with_rule(&t, &id.rule, Some(k));
    let per_node = t1.elapsed().as_secs_f64() / k as f64;
    let dense = per_node * id.rule.len() as f64;
    let ratio = dense / structured;
    outcome(
        ratio >= 10.0,
        format!(
            "N={n}, R=2, {} nodes: structured {structured:.2} s, dense contour {dense:.1} s (extrapolated from {k} nodes), ratio {ratio:.1} (≥ 10)",
            id.rule.len()
        ),
    )
}

fn report(i: usize, name: &str, o: Outcome, failed: &mut usize) {
    println!(
        "[{}] criterion {i} ({name}): {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    *failed += usize::from(!o.pass);
}

fn main() {
    // SPECIDEM_CRITERIA=6,7 runs a subset.
    let only: Option<Vec<usize>> = std::env::var("SPECIDEM_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wants = |i: usize| only.as_ref().is_none_or(|o| o.contains(&i));
    let mut failed = 0;
    let mut ran = 0;
    let mut cases = Vec::new();
    let c1 = if [1, 2, 3, 8].into_iter().any(&wants) {
        Some(criterion_1(&mut cases))
    } else {
        None
    };
    let mut run = |i: usize, name: &str, f: &dyn Fn() -> Outcome| {
        if wants(i) {
            ran += 1;
            report(i, name, f(), &mut failed);
        }
    };
    if let Some(o) = c1.filter(|_| wants(1)) {
        run(1, "oracle equivalence", &|| Outcome {
            pass: o.pass,
            detail: o.detail.clone(),
        });
    }
    run(2, "identity suite", &|| criterion_2(&cases));
    run(3, "circle resolvent identity", &|| criterion_3(&cases));
    run(4, "cofactor identity", &criterion_4);
    run(5, "quadrature", &criterion_5);
    run(6, "contour constant", &criterion_6);
    run(7, "certificates", &criterion_7);
    run(8, "intertwining", &|| criterion_8(&cases));
    run(9, "rectangle composites", &criterion_9);
    run(10, "gates", &criterion_10);
    run(11, "performance", &criterion_11);
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
