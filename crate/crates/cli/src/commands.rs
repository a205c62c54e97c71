use std::fs::File;
use std::io::{self, BufWriter, Write};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use qnlchain::analysis::{
    bound_constants, finish_sweep, ghost_bound, sweep_point, sweep_rate, Approximation, LoadProfile, SweepRecord,
    SweepSpec,
};
use qnlchain::chain::{ChainGeometry, ChainKind};
use qnlchain::checks::{self, CriterionOutcome, EXACT_TOL, RATE_SECOND_ORDER, RATE_THREE_HALVES};
use qnlchain::models::{ghost_force, ModelKind, ModelSpec};
use qnlchain::numerics::fit_rate;
use qnlchain::potential::PairPotential;
use qnlchain::stability::{
    circular_equilibrium, critical_strain, stability_analytic, stability_report, Branch, Hypotheses,
    StabilityReport,
};

use crate::config::{parse_counts, parse_reals, RunConfig};
use crate::{Status, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Choice {
    A,
    Cb,
    Qnl,
}

impl Choice {
    fn parse(s: &str) -> Result<Self, Usage> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "atomistic" => Ok(Choice::A),
            "cb" => Ok(Choice::Cb),
            "qnl" => Ok(Choice::Qnl),
            other => Err(Usage(format!("unknown model '{other}' (a | cb | qnl)"))),
        }
    }

    fn at(&self, n: usize, k: Option<usize>) -> ModelKind {
        match self {
            Choice::A => ModelKind::Atomistic,
            Choice::Cb => ModelKind::CauchyBorn,
            Choice::Qnl => ModelKind::Qnl { k: k.unwrap_or(n / 2) },
        }
    }
}

fn potential(cfg: &RunConfig) -> Result<PairPotential, Usage> {
    cfg.potential.as_deref().unwrap_or("lj").parse().map_err(|e: qnlchain::Error| Usage(e.to_string()))
}

fn kind(cfg: &RunConfig) -> Result<ChainKind, Usage> {
    cfg.kind.as_deref().unwrap_or("linear").parse().map_err(|e: qnlchain::Error| Usage(e.to_string()))
}

fn models(cfg: &RunConfig, default: &str) -> Result<Vec<Choice>, Usage> {
    cfg.model.as_deref().unwrap_or(default).split(',').map(Choice::parse).collect()
}

/// Sorted and de-duplicated, so output rows come out ordered by (N, F).
fn counts(cfg: &RunConfig, default: &str) -> Result<Vec<usize>, Usage> {
    let mut v = parse_counts(cfg.n.as_deref().unwrap_or(default))?;
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

fn strains(cfg: &RunConfig, default: &str) -> Result<Vec<f64>, Usage> {
    let v = parse_reals(cfg.f.as_deref().unwrap_or(default))?;
    if v.iter().any(|f| *f <= 0.0) {
        return Err(Usage("F must be positive".into()));
    }
    let mut v = v;
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

fn alphas(cfg: &RunConfig) -> Result<Vec<f64>, Usage> {
    let v = parse_reals(cfg.alpha.as_deref().unwrap_or("0"))?;
    if v.iter().any(|a| *a < 0.0) {
        return Err(Usage("alpha must be non-negative".into()));
    }
    Ok(v)
}

fn single<T: Copy>(v: &[T], what: &str) -> Result<T, Usage> {
    match v {
        [x] => Ok(*x),
        _ => Err(Usage(format!("this command takes a single {what}"))),
    }
}

fn sink(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.output {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn csv_out(cfg: &RunConfig) -> Result<csv::Writer<Box<dyn Write>>> {
    Ok(csv::Writer::from_writer(sink(cfg)?))
}

/// Shortest round-trip form, with an exponent for very small or large values.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), num)
}

fn write_report<T: Serialize>(cfg: &RunConfig, value: &T) -> Result<()> {
    if let Some(p) = &cfg.report {
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn stability(cfg: &RunConfig) -> Result<Status> {
    let pot = potential(cfg)?;
    let kind = kind(cfg)?;
    if cfg.constrained && kind != ChainKind::Linear {
        return Err(Usage("--constrained needs --kind linear".into()).into());
    }
    let ms = models(cfg, "a")?;
    let ns = counts(cfg, "64")?;
    let fs = strains(cfg, "0.8:1.2:0.005")?;
    let als = alphas(cfg)?;
    let mut jobs = Vec::new();
    for &n in &ns {
        for &f in &fs {
            for &m in &ms {
                for &a in &als {
                    jobs.push((n, f, m, a));
                }
            }
        }
    }
    let reports: Vec<StabilityReport> = jobs
        .par_iter()
        .map(|&(n, f, m, a)| {
            let spec = ModelSpec::new(m.at(n, cfg.k), pot.clone()).with_alpha(a);
            let g = ChainGeometry::new(kind, n, f)?;
            Ok(stability_report(&spec, &g, cfg.constrained)?)
        })
        .collect::<Result<_>>()?;
    let mut w = csv_out(cfg)?;
    w.write_record([
        "model", "kind", "N", "F", "constrained", "alpha", "numeric_inf", "analytic_value", "branch", "gap", "flags",
    ])?;
    let mut failed = false;
    for r in &reports {
        if r.equality_holds(EXACT_TOL) == Some(false) {
            failed = true;
        }
        w.write_record([
            r.model.clone(),
            r.kind.to_string(),
            r.n.to_string(),
            num(r.f),
            r.constrained.to_string(),
            num(r.alpha),
            num(r.numeric_inf),
            num(r.analytic.value),
            r.analytic.branch.to_string(),
            num(r.gap),
            r.analytic.flags.join(";"),
        ])?;
    }
    w.flush()?;
    write_report(cfg, &reports)?;
    Ok(if failed { Status::CheckFailed } else { Status::Ok })
}

pub fn critical(cfg: &RunConfig) -> Result<Status> {
    let pot = potential(cfg)?;
    let kind = kind(cfg)?;
    let ms = models(cfg, "a,cb,qnl")?;
    let n = single(&counts(cfg, "64")?, "N")?;
    let als = alphas(cfg)?;
    let mut w = csv_out(cfg)?;
    w.write_record(["model", "branch", "kind", "N", "alpha", "F_star", "note"])?;
    for &m in &ms {
        for branch in [Branch::Buckling, Branch::Tension] {
            for &a in &als {
                let mk = m.at(n, cfg.k);
                let (value, note) = match critical_strain(&pot, mk, branch, a, kind, n) {
                    Ok(f) => (num(f), String::new()),
                    Err(qnlchain::Error::NoSignChange { .. }) => (String::new(), "no threshold in range".to_string()),
                    Err(e) => return Err(e.into()),
                };
                w.write_record([mk.label(), &branch.to_string(), &kind.to_string(), &n.to_string(), &num(a), &value, &note])?;
            }
        }
    }
    w.flush()?;
    Ok(Status::Ok)
}

pub fn equilibrium(cfg: &RunConfig) -> Result<Status> {
    let pot = potential(cfg)?;
    let ns = counts(cfg, "64,128,256,512")?;
    let mut rows = Vec::new();
    for &n in &ns {
        for m in [ModelKind::Atomistic, ModelKind::CauchyBorn] {
            rows.push((n, m, circular_equilibrium(&pot, m, n)?));
        }
    }
    let mut w = csv_out(cfg)?;
    w.write_record(["model", "N", "F", "R", "residual"])?;
    for (n, m, e) in rows {
        w.write_record([m.label().to_string(), n.to_string(), num(e.f), num(e.radius), num(e.residual)])?;
    }
    w.flush()?;
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Serialize)]
struct GhostRow {
    model: String,
    kind: ChainKind,
    n: usize,
    f: f64,
    eps: f64,
    ghost_norm: f64,
    bound: Option<f64>,
}

fn ghost_rows(pot: &PairPotential, choice: Choice, kind: ChainKind, ns: &[usize], fs: &[f64], k: Option<usize>, alpha: f64) -> Result<Vec<GhostRow>> {
    if choice == Choice::A {
        return Err(Usage("ghost forces are measured for cb or qnl against the atomistic model".into()).into());
    }
    let jobs: Vec<(usize, f64)> = ns.iter().flat_map(|&n| fs.iter().map(move |&f| (n, f))).collect();
    jobs.par_iter()
        .map(|&(n, f)| {
            let mk = choice.at(n, k);
            let spec = ModelSpec::new(mk, pot.clone()).with_alpha(alpha);
            let g = ChainGeometry::new(kind, n, f)?;
            let (_, norm) = ghost_force(&spec, &g)?;
            let c = bound_constants(pot, f, n)?;
            Ok(GhostRow { model: spec.name(), kind, n, f, eps: g.eps, ghost_norm: norm, bound: ghost_bound(mk, kind, &c) })
        })
        .collect()
}

fn write_ghost(cfg: &RunConfig, rows: &[GhostRow]) -> Result<()> {
    let mut w = csv_out(cfg)?;
    w.write_record(["model", "kind", "N", "F", "eps", "ghost_norm", "bound"])?;
    for r in rows {
        w.write_record([r.model.clone(), r.kind.to_string(), r.n.to_string(), num(r.f), num(r.eps), num(r.ghost_norm), opt(r.bound)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn ghost(cfg: &RunConfig) -> Result<Status> {
    let pot = potential(cfg)?;
    let choice = single(&models(cfg, "cb")?, "model")?;
    let rows = ghost_rows(&pot, choice, kind(cfg)?, &counts(cfg, "32,64,128,256,512")?, &strains(cfg, "1.0")?, cfg.k, single(&alphas(cfg)?, "alpha")?)?;
    write_ghost(cfg, &rows)?;
    write_report(cfg, &rows)?;
    let ok = rows.iter().all(|r| r.bound.map_or(true, |b| r.ghost_norm <= b.max(1e-12)));
    Ok(if ok { Status::Ok } else { Status::CheckFailed })
}

#[derive(Debug, Serialize)]
struct CheckLine {
    value: Option<f64>,
    threshold: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct SweepReport<'a> {
    spec: &'a SweepSpec,
    rate: CheckLine,
    bounds_hold: bool,
    records: &'a [SweepRecord],
}

pub fn sweep(cfg: &RunConfig) -> Result<Status> {
    let pot = potential(cfg)?;
    let kind = kind(cfg)?;
    let choice = single(&models(cfg, "cb")?, "model")?;
    let ns = counts(cfg, "32,64,128,256,512")?;
    let f = single(&strains(cfg, "1.0")?, "F")?;
    let alpha = single(&alphas(cfg)?, "alpha")?;
    if cfg.ghost_only {
        let mut rows = ghost_rows(&pot, choice, kind, &ns, &[f], cfg.k, alpha)?;
        rows.sort_by_key(|r| r.n);
        write_ghost(cfg, &rows)?;
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.ghost_norm)).collect();
        let rate = fit_rate(&pairs).ok();
        write_report(cfg, &serde_json::json!({ "rate": rate, "rows": rows }))?;
        return Ok(Status::Ok);
    }
    let approx = match choice {
        Choice::Cb => Approximation::Cb,
        Choice::Qnl => Approximation::Qnl,
        Choice::A => return Err(Usage("sweeps compare cb or qnl against the atomistic model".into()).into()),
    };
    if cfg.k.is_some() {
        return Err(Usage("sweeps place the QNL interface at K = N/2; drop --K".into()).into());
    }
    let mut spec = SweepSpec::new(approx, pot, kind, f, ns);
    spec.alpha = alpha;
    spec.constrained = cfg.constrained;
    spec.allow_indefinite = cfg.allow_indefinite;
    spec.gamma_numeric = cfg.gamma_numeric;
    if let Some(l) = &cfg.load {
        spec.load = l.parse::<LoadProfile>().map_err(|e| Usage(e.to_string()))?;
    }
    let records = finish_sweep(spec.ns.par_iter().map(|&n| sweep_point(&spec, n)).collect::<qnlchain::Result<_>>()?);
    let mut w = csv_out(cfg)?;
    w.write_record([
        "model", "kind", "N", "eps", "K", "alpha", "error", "tau_norm", "bound", "rate_so_far", "unorm1", "unorm2", "unorm3", "flags",
    ])?;
    for r in &records {
        w.write_record([
            r.model.clone(),
            r.kind.to_string(),
            r.n.to_string(),
            num(r.eps),
            r.k.map_or(String::new(), |k| k.to_string()),
            num(r.alpha),
            num(r.error),
            num(r.tau_norm),
            opt(r.bound),
            opt(r.rate_so_far),
            num(r.norms.d1),
            num(r.norms.d2),
            num(r.norms.d3),
            r.flags.join(";"),
        ])?;
    }
    w.flush()?;
    let threshold = match approx {
        Approximation::Cb => RATE_SECOND_ORDER,
        Approximation::Qnl => RATE_THREE_HALVES,
    };
    let rate = if records.len() >= 3 { sweep_rate(&records) } else { None };
    let rate_ok = rate.map_or(true, |r| r >= threshold);
    let bounds_hold = records.iter().all(|r| r.within_bound() != Some(false));
    let report = SweepReport {
        spec: &spec,
        rate: CheckLine { value: rate, threshold, passed: rate_ok },
        bounds_hold,
        records: &records,
    };
    write_report(cfg, &report)?;
    Ok(if rate_ok && bounds_hold { Status::Ok } else { Status::CheckFailed })
}

pub fn summary(cfg: &RunConfig) -> Result<Status> {
    let pot = potential(cfg)?;
    let f = single(&strains(cfg, "1.0")?, "F")?;
    let alpha = single(&alphas(cfg)?, "alpha")?;
    let n = single(&counts(cfg, "64")?, "N")?;
    let hyp = Hypotheses::at(&pot, f);
    let mut out = sink(cfg)?;
    writeln!(out, "potential {pot}, F = {f}, alpha = {alpha}, N = {n}")?;
    writeln!(out, "phi'(2F) >= 0: {}   phi''(2F) <= 0: {}", hyp.d1_nonneg, hyp.d2_nonpos)?;
    writeln!(out)?;
    writeln!(out, "{:<6} {:<20} {:<52} {:>14} {:>10}  {}", "model", "geometry", "stability condition", "value", "error", "flags")?;
    for (choice, error) in [(Choice::A, "-"), (Choice::Cb, "O(eps^2)"), (Choice::Qnl, "O(eps^3/2)")] {
        for (geo, kind, constrained) in [
            ("1-D constrained", ChainKind::Linear, true),
            ("1-D in the plane", ChainKind::Linear, false),
            ("circle", ChainKind::Circular, false),
        ] {
            let mk = choice.at(n, cfg.k);
            let spec = ModelSpec::new(mk, pot.clone()).with_alpha(if constrained { 0.0 } else { alpha });
            let a = stability_analytic(&spec, kind, n, f, constrained)?;
            let bend = if alpha > 0.0 && !constrained {
                if kind == ChainKind::Circular { " + 2a cos(b)/F^2" } else { " + 2a/F^2" }
            } else {
                ""
            };
            let cond = if constrained {
                "phi''(F)+4phi''(2F) > 0".to_string()
            } else if choice == Choice::Cb {
                format!("min{{gamma1, (phi'(F)+2phi'(2F))/F{bend}}} > 0")
            } else {
                format!("min{{gamma1, phi'(F)/F{bend}}} > 0")
            };
            let mut flags = a.flags.clone();
            if a.value <= 0.0 {
                flags.push("unstable".into());
            }
            writeln!(out, "{:<6} {:<20} {:<52} {:>14.6} {:>10}  {}", mk.label(), geo, cond, a.value, error, flags.join(";"))?;
        }
    }
    out.flush()?;
    Ok(Status::Ok)
}

pub fn selfcheck(cfg: &RunConfig) -> Result<Status> {
    type Check = fn() -> qnlchain::Result<CriterionOutcome>;
    let all: [(u32, Check); 10] = [
        (1, checks::criterion_1),
        (2, checks::criterion_2),
        (3, checks::criterion_3),
        (4, checks::criterion_4),
        (5, checks::criterion_5),
        (6, checks::criterion_6),
        (7, checks::criterion_7),
        (8, checks::criterion_8),
        (9, checks::criterion_9),
        (10, checks::criterion_10),
    ];
    let outcomes: Vec<CriterionOutcome> =
        all.par_iter().map(|(id, c)| checks::outcome_or_error(*id, c())).collect();
    let mut out = sink(cfg)?;
    for o in &outcomes {
        writeln!(out, "{}", o.line())?;
        for d in &o.details {
            writeln!(out, "    {d}")?;
        }
    }
    out.flush()?;
    write_report(cfg, &outcomes)?;
    Ok(if outcomes.iter().all(|o| o.passed) { Status::Ok } else { Status::CheckFailed })
}
