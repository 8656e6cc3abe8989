//! One runner per subcommand. Runners compute, then hand every table and report to the
//! run's single writer.

use dclab::fields::io::{load_field, StoredField};
use dclab::fields::norms::{norm, FieldRef, NormSpec};
use dclab::fields::{div, Grid, ScalarField, StaggeredField};
use dclab::geometry::{ap_refinement, PowerWeight};
use dclab::inequalities::{check, refinement_study, InequalityReport};
use dclab::operators::{bogovskii_batch, divergence_residual, zero_mean_sample};
use dclab::solver::{
    continuation, solve, weak_form_check, EnergyLedger, Forcing, ForcingSpec, ModelParams, SolveSummary,
    SolverConfig, WeakFormCheck,
};
use dclab::truncation::{ensemble_report, null_sequence};
use serde::Serialize;

use crate::config::{
    BogovskiiConfig, ExperimentConfig, InequalityConfig, MuckenhouptConfig, Payload, SolveConfig, SweepConfig,
    TruncateConfig,
};
use crate::error::CliError;
use crate::output::{Cell, Outputs};
use crate::row;

fn lib(context: &'static str) -> impl Fn(dclab::Error) -> CliError {
    move |e| CliError::from_lib(context, e)
}

/// Serde name of a unit variant, e.g. `grad_curl_weighted`.
fn tag<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

pub fn execute(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<(), CliError> {
    let seed = cfg.seed.unwrap_or(0);
    match &cfg.payload {
        Payload::Solve(c) => run_solve(c, seed, out),
        Payload::Sweep(c) => run_sweep(c, seed, out),
        Payload::Inequality(c) => run_inequality(c, out),
        Payload::Muckenhoupt(c) => run_muckenhoupt(c, out),
        Payload::Bogovskii(c) => run_bogovskii(cfg, c, seed, out),
        Payload::Truncate(c) => run_truncate(c, out),
    }
}

const LEDGER_HEADER: [&str; 13] = [
    "eps",
    "case",
    "regularization",
    "weighted_vorticity",
    "stress_work",
    "viscous",
    "convective_work",
    "forcing_work",
    "lhs",
    "rhs",
    "constant",
    "energy_equality",
    "regularization_share",
];

fn ledger_row(eps: f64, l: &EnergyLedger) -> Vec<Cell> {
    row![
        eps,
        tag(&l.case),
        l.regularization,
        l.weighted_vorticity,
        l.stress_work,
        l.viscous,
        l.convective_work,
        l.forcing_work,
        l.lhs,
        l.rhs,
        l.constant,
        l.energy_equality,
        l.regularization_share,
    ]
}

fn weak_form_table(out: &mut Outputs, weak: &WeakFormCheck) -> Result<(), CliError> {
    out.csv("weak_form.csv", &["test", "relative"], weak.relative.iter().enumerate().map(|(i, r)| row![i, *r]))
}

#[derive(Serialize)]
struct VelocityStats {
    l2: f64,
    max_abs: f64,
    divergence_max: f64,
}

fn velocity_stats(grid: &Grid, v: &StaggeredField) -> Result<VelocityStats, CliError> {
    Ok(VelocityStats {
        l2: v.norm_l2(grid),
        max_abs: v.max_abs(),
        divergence_max: div(grid, v).map_err(lib("divergence"))?.max_abs(),
    })
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    summary: &'a SolveSummary,
    weak_form: &'a WeakFormCheck,
    velocity: VelocityStats,
    pressure_max_abs: f64,
}

#[derive(Serialize)]
struct ContinuationOutput<'a> {
    params: ModelParams,
    report: &'a dclab::solver::ContinuationReport,
    weak_form: Option<&'a WeakFormCheck>,
    velocity: Option<VelocityStats>,
}

fn increment(list: &[(f64, f64)], n: f64) -> Option<f64> {
    list.iter().find(|(m, _)| *m == n).map(|(_, v)| *v)
}

fn run_solve(c: &SolveConfig, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let grid = c.grid.build()?;
    let forcing = Forcing::resolve(&c.forcing, &grid).map_err(lib("forcing"))?;
    let model = c.model();
    let Some(schedule) = &c.eps_schedule else {
        let rep = solve(&model, &forcing, &grid, &c.solver()).map_err(lib("solve"))?;
        let s = &rep.summary;
        out.csv(
            "residuals.csv",
            &["iteration", "residual", "damping", "inner_iterations"],
            s.residual_history
                .iter()
                .enumerate()
                .map(|(i, r)| row![i, *r, s.damping.get(i).copied(), s.inner_iterations.get(i).map_or(Cell::Empty, |&n| n.into())]),
        )?;
        out.csv("ledger.csv", &LEDGER_HEADER, [ledger_row(model.eps, &s.ledger)])?;
        let weak = weak_form_check(&model, &forcing, &grid, &rep.velocity, c.weak_tests, seed).map_err(lib("weak form"))?;
        weak_form_table(out, &weak)?;
        out.json(
            "report.json",
            &SolveOutput {
                summary: s,
                weak_form: &weak,
                velocity: velocity_stats(&grid, &rep.velocity)?,
                pressure_max_abs: rep.pressure.max_abs(),
            },
        )?;
        if c.output.fields {
            out.field("velocity.dclab", &grid, FieldRef::Vector(&rep.velocity))?;
            out.field("pressure.dclab", &grid, FieldRef::Scalar(&rep.pressure))?;
        }
        if !rep.velocity.is_finite() {
            return Err(CliError::Numerical("solve produced non-finite velocities".into()));
        }
        if !s.converged {
            let last = s.residual_history.last().copied().unwrap_or(f64::NAN);
            return Err(CliError::Numerical(format!(
                "solve did not converge in {} iterations (relative residual {last:.3e})",
                s.iterations
            )));
        }
        return Ok(());
    };

    let rep = continuation(&model, &forcing, &grid, schedule, &c.solver()).map_err(lib("continuation"))?;
    out.csv(
        "continuation.csv",
        &[
            "stage",
            "eps",
            "converged",
            "iterations",
            "final_residual",
            "regularization_share",
            "constant",
            "energy_equality",
            "increment_K4",
            "increment_K8",
        ],
        rep.stages.iter().enumerate().map(|(k, st)| {
            row![
                k,
                st.eps,
                st.converged,
                st.iterations,
                st.final_residual,
                st.ledger.regularization_share,
                st.ledger.constant,
                st.ledger.energy_equality,
                increment(&st.vorticity_increments, 4.0),
                increment(&st.vorticity_increments, 8.0),
            ]
        }),
    )?;
    out.csv(
        "continuation_residuals.csv",
        &["stage", "eps", "iteration", "residual"],
        rep.stages
            .iter()
            .enumerate()
            .flat_map(|(k, st)| st.residual_history.iter().enumerate().map(move |(i, r)| row![k, st.eps, i, *r])),
    )?;
    out.csv("ledger.csv", &LEDGER_HEADER, rep.stages.iter().map(|st| ledger_row(st.eps, &st.ledger)))?;
    let last = rep.velocities.last().zip(rep.stages.last());
    let weak = match last {
        Some((v, st)) => Some(
            weak_form_check(&model.with_eps(st.eps), &forcing, &grid, v, c.weak_tests, seed).map_err(lib("weak form"))?,
        ),
        None => None,
    };
    if let Some(w) = &weak {
        weak_form_table(out, w)?;
    }
    let velocity = match last {
        Some((v, _)) => Some(velocity_stats(&grid, v)?),
        None => None,
    };
    out.json("report.json", &ContinuationOutput { params: model, report: &rep, weak_form: weak.as_ref(), velocity })?;
    if let (true, Some((v, _))) = (c.output.fields, last) {
        out.field("velocity.dclab", &grid, FieldRef::Vector(v))?;
    }
    if !rep.complete {
        let at = rep.stages.iter().find(|s| !s.converged).map_or(f64::NAN, |s| s.eps);
        return Err(CliError::Numerical(format!("continuation stopped: stage eps = {at:e} did not converge")));
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepPoint {
    parameter: &'static str,
    value: f64,
    forcing: ForcingSpec,
    summary: SolveSummary,
    weak_form: WeakFormCheck,
    velocity: VelocityStats,
}

fn sweep_point(
    grid: &Grid,
    parameter: &'static str,
    (value, model, spec): &(f64, ModelParams, ForcingSpec),
    solver: &SolverConfig,
    tests: usize,
    seed: u64,
) -> Result<SweepPoint, CliError> {
    let forcing = Forcing::resolve(spec, grid).map_err(lib("forcing"))?;
    let rep = solve(model, &forcing, grid, solver).map_err(lib("solve"))?;
    let weak = weak_form_check(model, &forcing, grid, &rep.velocity, tests, seed).map_err(lib("weak form"))?;
    Ok(SweepPoint {
        parameter,
        value: *value,
        forcing: spec.clone(),
        velocity: velocity_stats(grid, &rep.velocity)?,
        summary: rep.summary,
        weak_form: weak,
    })
}

fn run_sweep(c: &SweepConfig, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let grid = c.grid.build()?;
    let points = c.points();
    let solver = c.solver();
    let name = c.parameter.name();
    // Points are independent: solve them concurrently, then write in order.
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(points.len()).max(1);
    let mut results: Vec<Option<Result<SweepPoint, CliError>>> = (0..points.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (grid, points, solver) = (&grid, &points, &solver);
                scope.spawn(move || {
                    (w..points.len())
                        .step_by(workers)
                        .map(|i| (i, sweep_point(grid, name, &points[i], solver, c.weak_tests, seed)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r.expect("every point is assigned to a worker") {
            Ok(p) => {
                let s = &p.summary;
                if !s.converged {
                    failures.push(format!("{name} = {} did not converge", p.value));
                }
                rows.push(row![
                    i,
                    p.value,
                    s.converged,
                    s.iterations,
                    s.residual_history.last().copied(),
                    s.ledger.constant,
                    s.ledger.energy_equality,
                    s.ledger.regularization_share,
                    p.weak_form.max_relative,
                    p.velocity.l2,
                ]);
                out.json(&format!("point_{i:03}.json"), &p)?;
            }
            Err(e @ CliError::Io(_)) => return Err(e),
            Err(e) => {
                failures.push(format!("{name} = {}: {e}", points[i].0));
                rows.push(row![i, points[i].0, false, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty]);
            }
        }
    }
    out.csv(
        "sweep.csv",
        &[
            "point",
            "value",
            "converged",
            "iterations",
            "final_residual",
            "constant",
            "energy_equality",
            "regularization_share",
            "weak_form_max",
            "velocity_l2",
        ],
        rows,
    )?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(failures.join("; ")))
    }
}

#[derive(Serialize)]
struct InequalityEntry {
    case: dclab::inequalities::InequalityCase,
    report: InequalityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    refined: Option<InequalityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    growth: Option<f64>,
}

fn sample_table(out: &mut Outputs, name: &str, rep: &InequalityReport) -> Result<(), CliError> {
    out.csv(name, &["seed", "lhs", "rhs", "ratio"], rep.rows.iter().map(|r| row![r.seed, r.lhs, r.rhs, r.ratio]))
}

fn run_inequality(c: &InequalityConfig, out: &mut Outputs) -> Result<(), CliError> {
    let grid = c.grid.build()?;
    let mut entries = Vec::new();
    for (i, case) in c.cases.iter().enumerate() {
        let stem = format!("samples_{i:02}_{}", tag(&case.name));
        let entry = if c.refine {
            let study = refinement_study(case, &grid).map_err(lib("inequality"))?;
            sample_table(out, &format!("{stem}.csv"), &study.coarse)?;
            sample_table(out, &format!("{stem}_fine.csv"), &study.fine)?;
            InequalityEntry {
                case: case.clone(),
                report: study.coarse,
                refined: Some(study.fine),
                drift: Some(study.drift),
                growth: Some(study.growth),
            }
        } else {
            let report = check(case, &grid).map_err(lib("inequality"))?;
            sample_table(out, &format!("{stem}.csv"), &report)?;
            InequalityEntry { case: case.clone(), report, refined: None, drift: None, growth: None }
        };
        entries.push(entry);
    }
    out.csv(
        "summary.csv",
        &["case", "name", "cells", "max_ratio", "verdict", "samples_used", "skipped", "violations", "fine_max_ratio", "drift"],
        entries.iter().enumerate().map(|(i, e)| {
            let r = &e.report;
            row![
                i,
                tag(&e.case.name),
                r.cells[0] * r.cells[1] * r.cells[2],
                r.max_ratio,
                tag(&r.verdict),
                r.samples_used,
                r.skipped,
                r.violations,
                e.refined.as_ref().map(|f| f.max_ratio),
                e.drift,
            ]
        }),
    )?;
    out.json("inequality.json", &entries)?;
    Ok(())
}

#[derive(Serialize)]
struct ApCurve {
    alpha: f64,
    levels: Vec<usize>,
    constants: Vec<f64>,
    /// Last constant over the first.
    growth: f64,
}

fn run_muckenhoupt(c: &MuckenhouptConfig, out: &mut Outputs) -> Result<(), CliError> {
    let mut curves = Vec::new();
    for &alpha in &c.alphas {
        let w = PowerWeight::new(alpha, c.domain.clone());
        let constants = ap_refinement(&w, c.p, &c.levels, c.quadrature_order).map_err(lib("A_p constant"))?;
        if constants.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Numerical(format!("non-finite A_p constant at alpha = {alpha}")));
        }
        let growth = constants[constants.len() - 1] / constants[0];
        curves.push(ApCurve { alpha, levels: c.levels.clone(), constants, growth });
    }
    out.csv(
        "ap.csv",
        &["alpha", "level", "constant"],
        curves.iter().flat_map(|k| k.levels.iter().zip(&k.constants).map(|(&l, &v)| row![k.alpha, l, v])),
    )?;
    #[derive(Serialize)]
    struct Report<'a> {
        domain: &'a dclab::geometry::DomainSpec,
        p: f64,
        quadrature_order: usize,
        curves: &'a [ApCurve],
    }
    out.json(
        "muckenhoupt.json",
        &Report { domain: &c.domain, p: c.p, quadrature_order: c.quadrature_order, curves: &curves },
    )
}

fn run_bogovskii(cfg: &ExperimentConfig, c: &BogovskiiConfig, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let grid = c.grid.build()?;
    let kernel = cfg.kernel()?;
    let (data, seeds): (Vec<ScalarField>, Vec<Option<u64>>) = match &c.input {
        Some(path) => {
            let (g, stored) = load_field(path).map_err(|e| CliError::Config(format!("input {}: {e}", path.display())))?;
            if g.cells != grid.cells || g.domain != grid.domain {
                return Err(CliError::Config(format!(
                    "input {}: stored grid {:?} on {:?} does not match the configured grid",
                    path.display(),
                    g.cells,
                    g.domain.kind
                )));
            }
            let StoredField::Scalar(f) = stored else {
                return Err(CliError::Config(format!("input {}: expected a scalar field", path.display())));
            };
            (vec![f], vec![None])
        }
        None => {
            let seeds: Vec<u64> = (0..c.samples as u64).map(|i| seed.wrapping_add(i)).collect();
            let fs = seeds.iter().map(|&s| zero_mean_sample(&kernel, &grid, s)).collect::<dclab::Result<Vec<_>>>();
            (fs.map_err(lib("sample"))?, seeds.into_iter().map(Some).collect())
        }
    };
    let us = bogovskii_batch(&kernel, &grid, &data).map_err(lib("bogovskii"))?;
    let mut rows = Vec::new();
    let mut residual_max = 0.0f64;
    let mut ratio_max = vec![0.0f64; c.exponents.len()];
    for (i, (u, f)) in us.iter().zip(&data).enumerate() {
        if !u.is_finite() {
            return Err(CliError::Numerical(format!("sample {i}: non-finite solution")));
        }
        let residual = divergence_residual(&grid, u, f).map_err(lib("residual"))?;
        residual_max = residual_max.max(residual);
        let mut r = row![i, seeds[i].map_or(Cell::Empty, Cell::from), residual];
        for (k, &p) in c.exponents.iter().enumerate() {
            let full = norm(&grid, FieldRef::Vector(u), &NormSpec { sobolev_order: 1, ..NormSpec::lp(p) }).map_err(lib("norm"))?;
            let plain = norm(&grid, FieldRef::Vector(u), &NormSpec::lp(p)).map_err(lib("norm"))?;
            let gradient = (full.powf(p) - plain.powf(p)).max(0.0).powf(1.0 / p);
            let data_norm = norm(&grid, FieldRef::Scalar(f), &NormSpec::lp(p)).map_err(lib("norm"))?;
            let ratio = if data_norm > 0.0 { gradient / data_norm } else { 0.0 };
            ratio_max[k] = ratio_max[k].max(ratio);
            r.push(ratio.into());
        }
        rows.push(r);
    }
    let ratio_names: Vec<String> = c.exponents.iter().map(|p| format!("ratio_p{p}")).collect();
    let mut header = vec!["sample", "seed", "residual"];
    header.extend(ratio_names.iter().map(String::as_str));
    out.csv("bogovskii.csv", &header, rows)?;
    if let (Some(u), Some(f)) = (us.first(), data.first()) {
        out.field("u.dclab", &grid, FieldRef::Vector(u))?;
        if c.output.fields && c.input.is_none() {
            out.field("f.dclab", &grid, FieldRef::Scalar(f))?;
        }
    }
    #[derive(Serialize)]
    struct Report<'a> {
        kernel: dclab::operators::BogovskiiKernel,
        cells: [usize; 3],
        samples: usize,
        /// Largest `|div u - f|_2 / |f|_2`.
        divergence_residual_max: f64,
        /// `(p, max |grad u|_p / |f|_p)`.
        gradient_ratio_max: Vec<(f64, f64)>,
        input: Option<&'a std::path::Path>,
    }
    out.json(
        "bogovskii.json",
        &Report {
            kernel,
            cells: grid.cells,
            samples: data.len(),
            divergence_residual_max: residual_max,
            gradient_ratio_max: c.exponents.iter().copied().zip(ratio_max).collect(),
            input: c.input.as_deref(),
        },
    )
}

fn run_truncate(c: &TruncateConfig, out: &mut Outputs) -> Result<(), CliError> {
    let grid = c.grid.build()?;
    let sequence = null_sequence(&grid, &c.ball, &c.sequence).map_err(lib("null sequence"))?;
    let rep = ensemble_report(&grid, &sequence, &c.ball, c.j0, c.j_max, c.s).map_err(lib("truncation"))?;
    out.csv(
        "bounds.csv",
        &[
            "member",
            "level",
            "threshold",
            "bad_cells",
            "gradient_sup",
            "ratio",
            "sup_norm",
            "divergence_max",
            "outside_change",
            "pairing_max",
        ],
        rep.bounds.iter().map(|b| {
            row![
                b.member,
                b.level,
                b.threshold,
                b.bad_cells,
                b.gradient_sup,
                b.ratio,
                b.sup_norm,
                b.divergence_max,
                b.outside_change,
                b.pairing_max
            ]
        }),
    )?;
    let d = &rep.decay;
    out.csv(
        "decay.csv",
        &["member", "level", "threshold", "bad_measure", "value"],
        d.rows.iter().map(|r| row![r.member, r.level, r.threshold, r.bad_measure, r.value]),
    )?;
    out.csv(
        "envelope.csv",
        &["level", "envelope", "bound"],
        d.envelope.iter().map(|&(j, e)| row![j, e, d.bound_constant * 2f64.powf(-(j as f64) / c.s)]),
    )?;
    #[derive(Serialize)]
    struct Summary<'a> {
        members: usize,
        j0: u32,
        j_max: u32,
        s: f64,
        levels: &'a [dclab::truncation::TruncationLevels],
        fitted_exponent: Option<f64>,
        expected_exponent: f64,
        bound_constant: f64,
        fitted_constant: f64,
        divergence_max: f64,
        reconstruction_error: f64,
    }
    out.json(
        "summary.json",
        &Summary {
            members: sequence.len(),
            j0: c.j0,
            j_max: c.j_max,
            s: c.s,
            levels: &rep.levels,
            fitted_exponent: d.fitted_exponent,
            expected_exponent: -1.0 / c.s,
            bound_constant: d.bound_constant,
            fitted_constant: rep.fitted_constant,
            divergence_max: rep.divergence_max,
            reconstruction_error: rep.reconstruction_error,
        },
    )
}
