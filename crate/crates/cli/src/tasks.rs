//! One runner per task. Each writes its result files into the output
//! directory and returns a verdict with a short summary.

use crate::config::{ResolventMethod, RunConfig, Task};
use crate::config::{build_model, rhs_field, rhs_on, BuiltModel};
use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use varhjb::doubling::{default_alphas, doubling_certificate, DoublingProblem, SolutionContext};
use varhjb::domain::Domain;
use varhjb::grid::{GridFunction, ScalarField};
use varhjb::hamiltonian::{eval_hamiltonian, HamiltonianModel, HamiltonianOptions};
use varhjb::io::{write_grid_function, write_rows, write_trajectory, write_witnesses, GridMeta};
use varhjb::lattice::Lattice;
use varhjb::legendre::legendre_lagrangian;
use varhjb::penalization::{Penalization, SquaredDistance};
use varhjb::report::Status;
use varhjb::resolvent::{resolvent_grid, resolvent_trajectory, GridOptions, TrajectoryOptions};
use varhjb::vecops::dot;
use varhjb::verify::{default_probe_inputs, doubling_options_for, pseudo_coercivity_counterexample, sample_state, verify_model, VerifyOptions};

pub struct TaskOutput {
    pub verdict: Status,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub seed: u64,
    /// Directory of the config file; relative input paths resolve against it.
    pub base: &'a Path,
    pub out: &'a Path,
}

impl Context<'_> {
    fn hamiltonian_options(&self) -> HamiltonianOptions {
        HamiltonianOptions {
            seed: self.seed,
            ..Default::default()
        }
    }

    fn model(&self) -> Result<BuiltModel> {
        match &self.config.model {
            Some(m) => build_model(m, self.seed, self.base),
            None => bail!("task {} needs a model", self.config.task.name()),
        }
    }
}

pub fn run_task(ctx: &Context<'_>) -> Result<TaskOutput> {
    match ctx.config.task {
        Task::EvalHam => eval_ham(ctx),
        Task::Lagrangian => lagrangian(ctx),
        Task::Resolvent => resolvent(ctx),
        Task::Verify => verify(ctx),
        Task::Doubling => doubling(ctx),
        Task::Counterexample => counterexample(ctx),
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn headers(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|k| format!("{prefix}{k}")).collect()
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn uniform_box(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-r..=r)).collect()
}

fn eval_ham(ctx: &Context<'_>) -> Result<TaskOutput> {
    let BuiltModel { model, eigen } = ctx.model()?;
    let cfg = &ctx.config.eval;
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let opts = ctx.hamiltonian_options();
    let mut header = headers("x", d);
    header.extend(headers("p", d));
    header.extend(["value_variational", "value_eigen", "abs_diff", "gap_bound"].map(String::from));
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.probes {
        let x = sample_state(&model, &mut rng);
        let p = uniform_box(&mut rng, d, cfg.p_max);
        let h = eval_hamiltonian(&model, &x, &p, &opts)?;
        let mut row: Vec<String> = x.iter().chain(&p).copied().map(num).collect();
        row.push(num(h.value));
        match &eigen {
            Some(e) => {
                let ev = e.value(&x, &p)?;
                let diff = (h.value - ev).abs();
                worst = worst.max(diff);
                row.extend([num(ev), num(diff)]);
            }
            None => row.extend([String::new(), String::new()]),
        }
        row.push(num(h.gap_bound));
        rows.push(row);
    }
    let path = ctx.out.join("hamiltonian.csv");
    write_table(&path, &header, &rows)?;
    let (verdict, summary) = match eigen {
        Some(_) => (
            Status::from_bool(worst <= cfg.tol),
            format!("{} probes, max |variational - eigenvalue| = {worst:.3e} (tol {:.1e})", cfg.probes, cfg.tol),
        ),
        None => (Status::Pass, format!("{} probes evaluated; no eigenvalue oracle for {}", cfg.probes, model.name)),
    };
    Ok(TaskOutput {
        verdict,
        summary,
        files: vec![path],
    })
}

/// Random momenta used to test the Fenchel-Young inequality.
const FENCHEL_PROBES: usize = 8;

fn lagrangian(ctx: &Context<'_>) -> Result<TaskOutput> {
    let model = ctx.model()?.model;
    let cfg = &ctx.config.lagrangian;
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let opts = ctx.hamiltonian_options();
    let mut header = headers("x", d);
    header.extend(headers("v", d));
    header.push("value".into());
    header.extend(headers("p", d));
    header.push("fenchel_violation".into());
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut infinite = 0;
    for _ in 0..cfg.probes {
        let x = sample_state(&model, &mut rng);
        let v = uniform_box(&mut rng, d, cfg.v_max);
        let l = legendre_lagrangian(&model, &x, &v, cfg.p_radius, cfg.tol, &opts)?;
        // L(x, v) >= <p, v> - H(x, p) for every p in the ball.
        let mut violation: f64 = 0.0;
        if l.is_finite() {
            for _ in 0..FENCHEL_PROBES {
                let p = uniform_box(&mut rng, d, cfg.p_radius.min(3.0));
                let h = eval_hamiltonian(&model, &x, &p, &opts)?.value;
                violation = violation.max(dot(&p, &v) - h - l.value);
            }
            worst = worst.max(violation / (1.0 + l.value.abs()));
        } else {
            infinite += 1;
        }
        let mut row: Vec<String> = x.iter().chain(&v).copied().map(num).collect();
        row.push(num(l.value));
        row.extend(l.momentum.iter().copied().map(num));
        row.push(num(violation.max(0.0)));
        rows.push(row);
    }
    let path = ctx.out.join("lagrangian.csv");
    write_table(&path, &header, &rows)?;
    Ok(TaskOutput {
        verdict: Status::from_bool(worst <= 1e-8),
        summary: format!(
            "{} probes ({infinite} infinite), worst relative Fenchel-Young violation {:.3e}",
            cfg.probes,
            worst.max(0.0)
        ),
        files: vec![path],
    })
}

fn lattice_for(model: &HamiltonianModel, nodes: &[usize]) -> Result<Lattice> {
    let d = model.dim();
    let counts = match nodes.len() {
        1 => vec![nodes[0]; d],
        n if n == d => nodes.to_vec(),
        n => bail!("{n} node counts given for a {d}-dimensional model"),
    };
    let (lo, hi) = &model.verification_box;
    Ok(Lattice::uniform(lo, hi, &counts)?)
}

/// Starts evenly spaced in one dimension, seeded samples otherwise.
fn probe_states(model: &HamiltonianModel, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = &model.verification_box;
    if model.dim() == 1 {
        (0..n).map(|k| vec![lo[0] + (hi[0] - lo[0]) * (k as f64 + 0.5) / n as f64]).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sample_state(model, &mut rng)).collect()
    }
}

fn resolvent(ctx: &Context<'_>) -> Result<TaskOutput> {
    let model = ctx.model()?.model;
    let cfg = &ctx.config.resolvent;
    let mut files = Vec::new();
    let mut parts = Vec::new();
    let mut verdict = Status::Pass;
    let grid = if cfg.method != ResolventMethod::Trajectory {
        let lattice = lattice_for(&model, &cfg.nodes)?;
        let h = rhs_on(&cfg.rhs, &lattice, ctx.base)?;
        let opts = GridOptions {
            tol: cfg.tol,
            max_sweeps: cfg.max_sweeps,
            hamiltonian: ctx.hamiltonian_options(),
            ..Default::default()
        };
        let sol = resolvent_grid(&model, &h, cfg.lambda, &opts)?;
        let path = ctx.out.join("resolvent_grid.csv");
        let meta = GridMeta {
            model: model.name.clone(),
            lambda: Some(cfg.lambda),
            tolerances: [("residual".to_string(), cfg.tol)].into_iter().collect(),
            axes: Vec::new(),
        };
        write_grid_function(&path, &sol.f, &meta)?;
        files.push(path.clone());
        files.push(varhjb::io::meta_path(&path));
        let converged = sol.residual <= cfg.tol;
        verdict = verdict.and(Status::from_bool(converged));
        parts.push(format!(
            "grid: {} nodes, {} sweeps, residual {:.2e}",
            sol.f.lattice.len(),
            sol.sweeps,
            sol.residual
        ));
        Some(sol.f)
    } else {
        None
    };
    if cfg.method != ResolventMethod::Grid {
        // The smooth field, not its lattice samples: kinks in the
        // interpolant stall the path optimizer.
        let h = rhs_field(&cfg.rhs, model.dim(), ctx.base)?;
        let opts = TrajectoryOptions {
            intervals: cfg.intervals,
            tail_tol: cfg.tail_tol,
            hamiltonian: ctx.hamiltonian_options(),
            ..Default::default()
        };
        let d = model.dim();
        let mut header = headers("x", d);
        header.extend(["trajectory", "grid", "relative_gap", "tail_bound", "lower_bound_only"].map(String::from));
        let mut rows = Vec::new();
        let mut worst: f64 = 0.0;
        for (k, x) in probe_states(&model, cfg.probes, ctx.seed).iter().enumerate() {
            let r = resolvent_trajectory(&model, h.as_ref(), cfg.lambda, x, &opts)?;
            let path = ctx.out.join(format!("trajectory_{k:03}.csv"));
            write_trajectory(&path, &r.trajectory)?;
            files.push(path);
            let mut row: Vec<String> = x.iter().copied().map(num).collect();
            row.push(num(r.value));
            match &grid {
                Some(g) => {
                    let gv = g.value(x);
                    let gap = (r.value - gv).abs() / gv.abs().max(1.0);
                    worst = worst.max(gap);
                    row.extend([num(gv), num(gap)]);
                }
                None => row.extend([String::new(), String::new()]),
            }
            row.extend([num(r.tail_bound), r.lower_bound_only.to_string()]);
            rows.push(row);
        }
        let path = ctx.out.join("resolvent_probes.csv");
        write_table(&path, &header, &rows)?;
        files.push(path);
        parts.push(format!("trajectory: {} starts", cfg.probes));
        if grid.is_some() {
            verdict = verdict.and(Status::from_bool(worst <= cfg.agreement_tol));
            parts.push(format!("max relative gap {worst:.2e} (tol {:.1e})", cfg.agreement_tol));
        }
    }
    Ok(TaskOutput {
        verdict,
        summary: parts.join("; "),
        files,
    })
}

fn verify(ctx: &Context<'_>) -> Result<TaskOutput> {
    let model = ctx.model()?.model;
    let cfg = &ctx.config.verify;
    let opts = VerifyOptions {
        seed: ctx.seed,
        states: cfg.states,
        lambda_triples: cfg.lambda_triples,
        hamiltonian_triples: cfg.hamiltonian_triples,
        per_face: cfg.per_face,
        doubling: doubling_options_for(&model, ctx.seed),
        hamiltonian: ctx.hamiltonian_options(),
        ..Default::default()
    };
    let inputs = default_probe_inputs(&model)?;
    let report = verify_model(&model, &inputs, &opts);
    let json = ctx.out.join("report.json");
    std::fs::write(&json, serde_json::to_string_pretty(&report)? + "\n")?;
    let text = ctx.out.join("report.txt");
    let table = report.render();
    std::fs::write(&text, &table)?;
    Ok(TaskOutput {
        verdict: report.overall(),
        summary: table.trim_end().to_string(),
        files: vec![json, text],
    })
}

fn doubling(ctx: &Context<'_>) -> Result<TaskOutput> {
    let model = ctx.model()?.model;
    let cfg = &ctx.config.doubling;
    let dopts = doubling_options_for(&model, ctx.seed);
    let simplex = matches!(model.domain, Domain::SimplexOrthant { .. });
    // Grid resolvents are out of reach on the simplex-orthant models, which
    // fall back to the smooth proxies of the verifier.
    let (u, v, h, penalties, default_alpha): (Arc<dyn ScalarField>, Arc<dyn ScalarField>, Option<(GridFunction, GridFunction)>, Vec<Arc<dyn Penalization>>, Vec<Vec<f64>>) = if simplex {
        let p = default_probe_inputs(&model)?;
        (p.u, p.v, None, p.penalties, p.alphas)
    } else {
        let lattice = lattice_for(&model, &cfg.nodes)?;
        let h1 = rhs_on(&cfg.rhs1, &lattice, ctx.base)?;
        let h2 = rhs_on(&cfg.rhs2, &lattice, ctx.base)?;
        let gopts = GridOptions {
            hamiltonian: ctx.hamiltonian_options(),
            ..Default::default()
        };
        let u = resolvent_grid(&model, &h1, cfg.lambda, &gopts)?.f;
        let v = resolvent_grid(&model, &h2, cfg.lambda, &gopts)?.f;
        (
            Arc::new(u),
            Arc::new(v),
            Some((h1, h2)),
            vec![Arc::new(SquaredDistance) as Arc<dyn Penalization>],
            default_alphas().into_iter().map(|a| vec![a]).collect(),
        )
    };
    let alphas = cfg.alphas.clone().unwrap_or(default_alpha);
    if alphas.iter().any(|a| a.len() != penalties.len()) {
        bail!("each doubling.alphas entry needs {} weights for {}", penalties.len(), model.name);
    }
    let problem = DoublingProblem {
        model: &model,
        u: u.as_ref(),
        v: v.as_ref(),
        penalties,
    };
    let context = h.as_ref().map(|(h1, h2)| SolutionContext {
        lambda: cfg.lambda,
        h1,
        h2,
    });
    let cert = doubling_certificate(&problem, &cfg.epsilons, &alphas, context.as_ref(), &dopts)?;
    let wpath = ctx.out.join("witnesses.csv");
    write_witnesses(&wpath, &cert.witnesses)?;
    let cpath = ctx.out.join("certificate.json");
    std::fs::write(&cpath, serde_json::to_string_pretty(&cert)? + "\n")?;
    Ok(TaskOutput {
        verdict: cert.verdict,
        summary: format!(
            "{} witnesses, tail difference {:.3e}, final penalty {:.3e}, bounds hold: {}",
            cert.witnesses.len(),
            cert.tail_difference,
            cert.final_penalty,
            cert.bounds_hold
        ),
        files: vec![wpath, cpath],
    })
}

fn counterexample(ctx: &Context<'_>) -> Result<TaskOutput> {
    let cfg = &ctx.config.counterexample;
    let rows = pseudo_coercivity_counterexample(cfg.alpha_max)?;
    let path = ctx.out.join("counterexample.csv");
    write_rows(&path, &rows)?;
    let last = rows.last().expect("at least one row");
    let gap = (last.difference + 1.0).abs();
    let identity = rows.iter().map(|r| r.identity_residual).fold(0.0, f64::max);
    Ok(TaskOutput {
        verdict: Status::from_bool(gap <= cfg.tol && identity <= 1e-12),
        summary: format!(
            "{} rows up to alpha {:e}: |difference + 1| = {gap:.3e} (tol {:.1e}), identity residual {identity:.1e}",
            rows.len(),
            cfg.alpha_max,
            cfg.tol
        ),
        files: vec![path],
    })
}
