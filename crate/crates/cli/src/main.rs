//! `specidem`: batch driver for gates, decomposability scans, idempotent
//! construction, verification, certificates and benchmarks.
//!
//! Exit codes: 0 accept, 2 reject, 1 error.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;
use specidem::generate::{self, random_instance, RandomSpec};
use specidem::idempotent::{
    half_plane_idempotent, oracle_gap, sample_delta, verify_pair, IdempotentConfig,
    SpectralIdempotent,
};
use specidem::io::{self, ResultBundle};
use specidem::linalg::{self, CMat};
use specidem::localspec::{certify, CertConfig, GridSpec};
use specidem::model::{summability_gate, PerturbedOperator, Region, Side, TailStatus, Verdict};
use specidem::oracle::{dense_contour_projector_with_rule, dense_eig, riesz_oracle};
use specidem::{c64, Error};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "specidem",
    version,
    about = "Spectral idempotents of diagonal-plus-low-rank operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Gauss–Legendre order per interval.
    #[arg(long, global = true)]
    order: Option<usize>,
    #[arg(long, global = true)]
    max_depth: Option<usize>,
    /// Summability gate threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    delta_cap: Option<f64>,
    #[arg(long, global = true)]
    cert_tol: Option<f64>,
    /// Output directory; without it the main artifact goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Summability gate on the coefficient family.
    Gate,
    /// Decomposability membership over a grid of abscissae (CSV).
    ScanDelta,
    /// Build `J_ξ^±` and write result bundles.
    Project,
    /// Recheck result bundles against their instances.
    Verify,
    /// Spectral-subspace membership certificate.
    Certify,
    /// Structured vs dense timings (CSV).
    Bench,
    /// Write the configured instance as JSON.
    Generate,
}

#[derive(Debug, PartialEq, Eq)]
enum Status {
    Accept,
    Reject,
}

/// Where artifacts go: a directory, or stdout when none is configured.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn new(dir: Option<PathBuf>) -> anyhow::Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Self { dir })
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    fn emit(&self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        match self.path(name) {
            Some(p) => {
                std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
            }
            None => {
                use std::io::Write;
                std::io::stdout().write_all(bytes)?;
                Ok(())
            }
        }
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.emit(name, s.as_bytes())
    }

    fn csv<T: Serialize>(&self, name: &str, header: &[&str], rows: &[T]) -> anyhow::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        self.emit(name, &w.into_inner()?)
    }
}

fn is_rejection(e: &Error) -> bool {
    matches!(
        e,
        Error::NotInDecomposabilitySet { .. }
            | Error::OnSpectrumShadow { .. }
            | Error::OutsideAdmissibleRange { .. }
    )
}

fn cmd_gate(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<Status> {
    let op = cfg.operator()?;
    let report = summability_gate(&op.coeffs, cfg.threshold.unwrap_or(1e6), true)?;
    sink.json("gate.json", &report)?;
    eprintln!("gate: {:?}", report.verdict);
    Ok(if report.verdict == Verdict::Accept {
        Status::Accept
    } else {
        Status::Reject
    })
}

fn tail_cell(t: TailStatus) -> String {
    match t {
        TailStatus::Certified(v) => v.to_string(),
        TailStatus::Divergent => "divergent".into(),
        TailStatus::Uncertified => "uncertified".into(),
    }
}

#[derive(Serialize)]
struct DeltaRow {
    xi: f64,
    margin: f64,
    weighted_alpha: f64,
    weighted_beta: f64,
    tail_alpha: String,
    tail_beta: String,
    eig_clearance: Option<f64>,
    verdict: &'static str,
}

fn cmd_scan_delta(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<Status> {
    let op = cfg.operator()?;
    let grid = cfg.abscissae(&op);
    let scan = sample_delta(&op, &grid, &cfg.idempotent().delta)?;
    let rows: Vec<DeltaRow> = scan
        .reports
        .iter()
        .map(|r| DeltaRow {
            xi: r.xi,
            margin: r.margin,
            weighted_alpha: r.weighted_alpha,
            weighted_beta: r.weighted_beta,
            tail_alpha: tail_cell(r.tail_alpha),
            tail_beta: tail_cell(r.tail_beta),
            eig_clearance: r.eig_clearance,
            verdict: if r.accepted { "accept" } else { "reject" },
        })
        .collect();
    let header = [
        "xi",
        "margin",
        "weighted_alpha",
        "weighted_beta",
        "tail_alpha",
        "tail_beta",
        "eig_clearance",
        "verdict",
    ];
    sink.csv("scan_delta.csv", &header, &rows)?;
    eprintln!(
        "scan-delta: {} of {} abscissae accepted",
        scan.accepted.len(),
        grid.len()
    );
    Ok(Status::Accept)
}

fn oracle_enabled(cfg: &ExperimentConfig, n: usize) -> bool {
    cfg.oracle.unwrap_or(n <= 512)
}

fn cmd_project(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<Status> {
    let op = cfg.operator()?;
    if cfg.xi.is_empty() {
        bail!("project needs at least one abscissa in `xi`");
    }
    let icfg = cfg.idempotent();
    let sys = if oracle_enabled(cfg, op.n()) {
        Some(dense_eig(&op.dense())?)
    } else {
        None
    };
    let mut status = Status::Accept;
    let mut bundles = Vec::new();
    if let Some(p) = sink.path("instance.json") {
        io::write_instance(&p, &op)?;
    }
    for (i, &xi) in cfg.xi.iter().enumerate() {
        let mut built: Vec<SpectralIdempotent> = Vec::new();
        for side in cfg.side.sides() {
            match half_plane_idempotent(&op, xi, side, &icfg) {
                Ok(id) => built.push(id),
                Err(e) if is_rejection(&e) => {
                    eprintln!("reject: xi = {xi} ({side}): {e}");
                    status = Status::Reject;
                }
                Err(e) => return Err(e.into()),
            }
        }
        if let [p, m] = &mut built[..] {
            let v = verify_pair(p, m)?;
            let product = v.product_pm.max(v.product_mp);
            if v.partition > 1e-8 || product > 1e-8 {
                // spectrum outside the unit disc is seen by neither side
                eprintln!(
                    "reject: xi = {xi}: pair check failed (partition {:e}, product {product:e})",
                    v.partition
                );
                status = Status::Reject;
            }
            for id in [&mut *p, &mut *m] {
                id.diagnostics.partition = Some(v.partition);
                id.diagnostics.product = Some(product);
            }
        }
        for id in &mut built {
            if let Some(sys) = &sys {
                id.diagnostics.oracle_gap = Some(oracle_gap(id, sys)?);
            }
            let j_name = format!("J_{i}_{}.bin", id.side);
            let j_file = match sink.path(&j_name) {
                Some(p) => {
                    io::write_matrix_bin(&p, &id.j)?;
                    let mut rule = Vec::new();
                    id.rule.write_csv(&mut rule)?;
                    sink.emit(&format!("contour_{i}_{}.csv", id.side), &rule)?;
                    Some(j_name)
                }
                None => None,
            };
            let bundle = ResultBundle::new(&op, id, j_file);
            if sink.dir.is_some() {
                sink.json(&format!("bundle_{i}_{}.json", id.side), &bundle)?;
            }
            bundles.push(bundle);
        }
    }
    if sink.dir.is_none() {
        sink.json("", &bundles)?;
    }
    Ok(status)
}

#[derive(Serialize)]
struct CheckRow {
    bundle: String,
    check: String,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn norm2(m: &CMat) -> anyhow::Result<f64> {
    Ok(linalg::norm2(m.as_ref())?)
}

/// Checks of one bundle; hash or shape mismatches are errors, not failures.
fn check_bundle(
    op: &PerturbedOperator,
    t: &CMat,
    sys: Option<&specidem::oracle::EigenSystem>,
    path: &Path,
    rows: &mut Vec<CheckRow>,
) -> anyhow::Result<(ResultBundle, CMat)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading bundle {}", path.display()))?;
    let bundle: ResultBundle = serde_json::from_str(&text)
        .with_context(|| format!("parsing bundle {}", path.display()))?;
    let hash = io::instance_hash(op);
    if bundle.instance_hash != hash {
        bail!(
            "instance hash mismatch for {}: bundle has {}, instance is {}",
            path.display(),
            bundle.instance_hash,
            hash
        );
    }
    if bundle.n != op.n() {
        bail!(
            "bundle {} has N = {}, instance has {}",
            path.display(),
            bundle.n,
            op.n()
        );
    }
    let Some(j_name) = &bundle.j_file else {
        bail!("bundle {} has no J file", path.display())
    };
    let j_path = path.parent().unwrap_or(Path::new("")).join(j_name);
    let j = io::read_matrix_bin(&j_path, op.n(), op.n())
        .with_context(|| format!("reading {}", j_path.display()))?;
    let name = path.display().to_string();
    let nj = norm2(&j)?;
    let nt = norm2(t)?;
    let mut push = |check: &str, value: f64, tolerance: f64| {
        rows.push(CheckRow {
            bundle: name.clone(),
            check: check.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        })
    };
    let jj = linalg::mul(j.as_ref(), j.as_ref());
    push(
        "idempotency",
        norm2(&linalg::sub(jj.as_ref(), j.as_ref()))? / (1.0 + nj * nj),
        1e-8,
    );
    let c = linalg::sub(
        linalg::mul(j.as_ref(), t.as_ref()).as_ref(),
        linalg::mul(t.as_ref(), j.as_ref()).as_ref(),
    );
    push("commutation", norm2(&c)? / (nt * nj.max(1.0)), 1e-8);
    if let Some(sys) = sys {
        let p = riesz_oracle(
            sys,
            &Region::HalfDisc {
                xi: bundle.xi,
                side: bundle.side,
            },
            1e-8,
        )?;
        push(
            "oracle_gap",
            norm2(&linalg::sub(j.as_ref(), p.as_ref()))?,
            1e-6,
        );
    }
    Ok((bundle, j))
}

fn verify_entry(
    cfg: &ExperimentConfig,
    op: &PerturbedOperator,
    bundles: &[PathBuf],
    rows: &mut Vec<CheckRow>,
) -> anyhow::Result<()> {
    let t = op.dense();
    let sys = if oracle_enabled(cfg, op.n()) {
        Some(dense_eig(&t)?)
    } else {
        None
    };
    let mut by_xi: BTreeMap<(u64, String), [Option<CMat>; 2]> = BTreeMap::new();
    for path in bundles {
        let (b, j) = check_bundle(op, &t, sys.as_ref(), path, rows)?;
        let dir = path
            .parent()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        by_xi.entry((b.xi.to_bits(), dir)).or_default()[(b.side == Side::Minus) as usize] = Some(j);
    }
    for ((xi, dir), js) in by_xi {
        if let [Some(p), Some(m)] = &js {
            let n = op.n();
            let name = format!("{dir} (xi = {})", f64::from_bits(xi));
            let sum = linalg::add(p.as_ref(), m.as_ref());
            let partition = norm2(&linalg::sub(sum.as_ref(), linalg::identity(n).as_ref()))?;
            let product = norm2(&linalg::mul(p.as_ref(), m.as_ref()))?
                .max(norm2(&linalg::mul(m.as_ref(), p.as_ref()))?);
            for (check, value) in [("partition", partition), ("product", product)] {
                rows.push(CheckRow {
                    bundle: name.clone(),
                    check: check.into(),
                    value,
                    tolerance: 1e-8,
                    pass: value <= 1e-8,
                });
            }
        }
    }
    Ok(())
}

fn bundle_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("bundle") && n.ends_with(".json"))
        })
        .collect();
    out.sort();
    Ok(out)
}

fn cmd_verify(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<Status> {
    let mut rows = Vec::new();
    match (&cfg.corpus, &cfg.bundle) {
        (Some(corpus), None) => {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(corpus)
                .with_context(|| format!("listing corpus {}", corpus.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join("instance.json").is_file())
                .collect();
            entries.sort();
            if entries.is_empty() {
                bail!("corpus {} has no entries", corpus.display());
            }
            for e in entries {
                let op = io::read_instance(&e.join("instance.json"))
                    .with_context(|| format!("loading {}", e.display()))?;
                verify_entry(cfg, &op, &bundle_files(&e)?, &mut rows)?;
            }
        }
        (None, Some(bundle)) => verify_entry(
            cfg,
            &cfg.operator()?,
            std::slice::from_ref(bundle),
            &mut rows,
        )?,
        _ => bail!("verify needs exactly one of `corpus` or `bundle`"),
    }
    sink.csv(
        "verify.csv",
        &["bundle", "check", "value", "tolerance", "pass"],
        &rows,
    )?;
    let failed: Vec<&CheckRow> = rows.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!(
            "FAIL {}: {} = {:e} exceeds {:e}",
            r.bundle, r.check, r.value, r.tolerance
        );
    }
    eprintln!("verify: {} checks, {} failed", rows.len(), failed.len());
    Ok(if failed.is_empty() {
        Status::Accept
    } else {
        Status::Reject
    })
}

fn cmd_certify(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<Status> {
    let op = cfg.operator()?;
    let Some(&xi) = cfg.xi.first() else {
        bail!("certify needs an abscissa in `xi`")
    };
    let side = cfg.side.sides()[0];
    let icfg = cfg.idempotent();
    let x: Vec<c64> = match &cfg.vector {
        Some(v) => {
            if v.len() != op.n() {
                bail!(
                    "vector has {} entries, instance has N = {}",
                    v.len(),
                    op.n()
                );
            }
            v.iter().map(|p| c64::new(p[0], p[1])).collect()
        }
        None => {
            let j = match half_plane_idempotent(&op, xi, side, &icfg) {
                Ok(id) => id.j,
                Err(e) if is_rejection(&e) => {
                    eprintln!("reject: {e}");
                    return Ok(Status::Reject);
                }
                Err(e) => return Err(e.into()),
            };
            let y = generate::random_unit_vector(&mut generate::rng(cfg.seed), op.n());
            linalg::matvec(j.as_ref(), &y)
        }
    };
    let ccfg = CertConfig {
        tolerance: cfg.cert_tol.unwrap_or(CertConfig::default().tolerance),
        ..CertConfig::default()
    };
    let cert = match certify(&op, &x, xi, side, &GridSpec::default(), &icfg, &ccfg) {
        Ok(c) => c,
        Err(e) if is_rejection(&e) => {
            eprintln!("reject: {e}");
            return Ok(Status::Reject);
        }
        Err(e) => return Err(e.into()),
    };
    sink.json("certificate.json", &cert)?;
    eprintln!(
        "certify: score {:e}, {}",
        cert.score,
        if cert.passes { "passes" } else { "fails" }
    );
    Ok(if cert.passes {
        Status::Accept
    } else {
        Status::Reject
    })
}

#[derive(Serialize)]
struct BenchRow {
    n: usize,
    r: usize,
    nodes: usize,
    structured_s: f64,
    dense_s: f64,
    dense_timed_nodes: usize,
    ratio: f64,
}

fn cmd_bench(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<Status> {
    let b = &cfg.bench;
    let mut rows = Vec::new();
    for &n in &b.sizes {
        let op = random_instance(
            &RandomSpec {
                max_tries: 20,
                ..RandomSpec::new(n, b.rank)
            },
            cfg.seed,
        )?;
        let icfg = IdempotentConfig {
            quad: cfg.idempotent().quad,
            ..IdempotentConfig::lean()
        };
        let t0 = Instant::now();
        let id = half_plane_idempotent(&op, 0.0, Side::Plus, &icfg)?;
        let structured_s = t0.elapsed().as_secs_f64();
        let t = op.dense();
        let nodes = id.rule.len();
        let timed = if n <= b.full_dense_max {
            nodes
        } else {
            b.dense_nodes.clamp(1, nodes)
        };
        let t1 = Instant::now();
        let _ = dense_contour_projector_with_rule(&t, &id.rule, Some(timed));
        let dense_s = t1.elapsed().as_secs_f64() * nodes as f64 / timed as f64;
        let row = BenchRow {
            n,
            r: b.rank,
            nodes,
            structured_s,
            dense_s,
            dense_timed_nodes: timed,
            ratio: dense_s / structured_s,
        };
        eprintln!(
            "bench: N = {n}: structured {structured_s:.3} s, dense {dense_s:.3} s, ratio {:.1}",
            row.ratio
        );
        rows.push(row);
    }
    let header = [
        "n",
        "r",
        "nodes",
        "structured_s",
        "dense_s",
        "dense_timed_nodes",
        "ratio",
    ];
    sink.csv("bench.csv", &header, &rows)?;
    Ok(Status::Accept)
}

fn cmd_generate(cfg: &ExperimentConfig, sink: &Sink) -> anyhow::Result<Status> {
    let op = cfg.operator()?;
    match sink.path("instance.json") {
        Some(p) => io::write_instance(&p, &op)?,
        None => sink.json("", &io::InstanceFile::from_operator(&op))?,
    }
    Ok(Status::Accept)
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    // flags win over config keys
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.tol = cli.tol.or(cfg.tol);
    cfg.order = cli.order.or(cfg.order);
    cfg.max_depth = cli.max_depth.or(cfg.max_depth);
    cfg.threshold = cli.threshold.or(cfg.threshold);
    cfg.delta_cap = cli.delta_cap.or(cfg.delta_cap);
    cfg.cert_tol = cli.cert_tol.or(cfg.cert_tol);
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    let sink = Sink::new(cfg.out.clone())?;
    match cli.command {
        Command::Gate => cmd_gate(&cfg, &sink),
        Command::ScanDelta => cmd_scan_delta(&cfg, &sink),
        Command::Project => cmd_project(&cfg, &sink),
        Command::Verify => cmd_verify(&cfg, &sink),
        Command::Certify => cmd_certify(&cfg, &sink),
        Command::Bench => cmd_bench(&cfg, &sink),
        Command::Generate => cmd_generate(&cfg, &sink),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Accept) => ExitCode::SUCCESS,
        Ok(Status::Reject) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
