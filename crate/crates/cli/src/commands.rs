use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use retention::analysis::{correlation_study, evaluate, robustness_ensemble, seed_dependence_study};
use retention::dynamics::{comparison_csv, count_local_maxima, survival_ode, two_mode_analysis};
use retention::farfield::{gamma_pattern_check, integrated_pattern, summary_csv, SphereQuadrature};
use retention::geometry::{min_pair_distance, AtomArray};
use retention::hamiltonian::build_hamiltonian;
use retention::optimizer::{multi_start, optimize, OptimizationProblem, OptimizationResult};
use retention::spectral::{decompose, localized_state, mode_weights, modes_csv, residuals, verify_with_adjoint};
use retention::surrogate::surrogate_for_array;

use crate::config::{RunConfig, StudyKind};
use crate::manifest::OutputFile;
use crate::{CliError, Command};

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn text(name: &str, body: String) -> OutputFile {
    (name.to_string(), body.into_bytes())
}

pub fn execute(command: Command, cfg: &RunConfig, array: &AtomArray, seed: u64) -> Result<Vec<OutputFile>, CliError> {
    match command {
        Command::Spectrum => spectrum(array),
        Command::Dynamics => dynamics(cfg, array),
        Command::Optimize => run_optimize(cfg, array, seed),
        Command::Farfield => farfield(cfg, array),
        Command::Study => study(cfg, array, seed),
    }
}

fn spectrum(array: &AtomArray) -> Result<Vec<OutputFile>, CliError> {
    let h = build_hamiltonian(array)?;
    let s = decompose(&h)?;
    let w = mode_weights(&s, &localized_state(array.len(), array.storage_index()))?;
    let res = residuals(&h, &s);
    let mut res_csv = String::from("mode,right,left\n");
    for (l, r) in res.iter().enumerate() {
        let _ = writeln!(res_csv, "{l},{},{}", r.right, r.left);
    }
    let adjoint = verify_with_adjoint(&h.h, &s)?;
    let summary = json!({
        "n_atoms": array.len(),
        "left_method": s.left_method,
        "max_residual": res.iter().map(|r| r.right.max(r.left)).fold(0.0, f64::max),
        "weight_sum_error": (w.sum() - 1.0).norm(),
        "completeness_error": s.completeness_error(),
        "biorthogonality_error": s.biorthogonality_error(),
        "adjoint_check": adjoint,
        "dominant_mode": w.dominant(),
    });
    Ok(vec![
        text("modes.csv", modes_csv(&s, &w)),
        text("residuals.csv", res_csv),
        ("spectrum.json".into(), to_json(&summary)?),
        ("structure.json".into(), to_json(array)?),
    ])
}

fn dynamics(cfg: &RunConfig, array: &AtomArray) -> Result<Vec<OutputFile>, CliError> {
    let grid = cfg.time.grid()?;
    let ev = evaluate(array, &grid)?;
    let mut files = Vec::new();
    let mut ode_diff = None;
    if cfg.dynamics.ode {
        let h = build_hamiltonian(array)?;
        let ode = survival_ode(&h, &ev.weights.initial_state, &grid, cfg.dynamics.stepping)?;
        ode_diff = Some(ev.trace.max_abs_difference(&ode));
        files.push(text("survival.csv", comparison_csv(&ev.trace, &ode)));
    } else {
        files.push(text("survival.csv", ev.trace.to_csv()));
    }
    let two_mode = two_mode_analysis(&ev.spectral, &ev.weights).ok();
    let summary = json!({
        "t_star": ev.trace.t_star,
        "p_e": ev.trace.final_value(),
        "p_bar": ev.trace.p_bar,
        "ode_max_abs_difference": ode_diff,
        "local_maxima": count_local_maxima(&ev.trace.p_e),
        "two_mode": two_mode,
        "two_mode_cycles": two_mode.map(|m| m.cycles(ev.trace.t_star)),
        "surrogate": surrogate_for_array(array, cfg.surrogate)?,
    });
    files.push(("summary.json".into(), to_json(&summary)?));
    Ok(files)
}

/// Run index, run seed and outcome.
type RunEntry = (usize, u64, retention::Result<OptimizationResult>);

fn run_optimize(cfg: &RunConfig, array: &AtomArray, seed: u64) -> Result<Vec<OutputFile>, CliError> {
    let opt = &cfg.optimize;
    let problem = OptimizationProblem::new(array.clone(), opt.r_min, cfg.surrogate)?.with_settings(opt.settings);
    let grid = cfg.time.grid()?;
    // one run starts from the seed itself, several from perturbed copies
    let (records, best): (Vec<RunEntry>, usize) = if opt.n_runs <= 1 {
        (vec![(0, seed, optimize(&problem))], 0)
    } else {
        let ms = multi_start(&problem, opt.n_runs, opt.sigma, seed)?;
        let best = ms.best;
        (ms.runs.into_iter().map(|r| (r.run, r.seed, r.outcome)).collect(), best)
    };
    let best_result = match &records[best].2 {
        Ok(r) => r.clone(),
        Err(e) => return Err(e.clone().into()),
    };

    let mut runs_csv = String::from("run,seed,status,F_initial,F_final,p_e,converged,termination,iterations,min_distance\n");
    let mut results = Vec::new();
    for (run, run_seed, outcome) in &records {
        match outcome {
            Ok(o) => {
                let p_e = evaluate(&o.final_array, &grid)?.trace.final_value();
                let _ = writeln!(
                    runs_csv,
                    "{run},{run_seed},ok,{},{},{p_e},{},{:?},{},{}",
                    o.f_initial, o.f_final, o.converged, o.termination, o.iterations, o.min_distance
                );
                results.push(json!({"run": run, "seed": run_seed, "p_e": p_e, "result": o}));
            }
            Err(e) => {
                let _ = writeln!(runs_csv, "{run},{run_seed},failed,,,,,\"{e}\",,");
            }
        }
    }
    let mut trace = String::from("iteration,F\n");
    for (i, f) in best_result.cost_trace.iter().enumerate() {
        let _ = writeln!(trace, "{i},{f}");
    }
    Ok(vec![
        text("runs.csv", runs_csv),
        ("best_structure.json".into(), to_json(&best_result.final_array)?),
        text("best_trace.csv", trace),
        ("structures.json".into(), to_json(&results)?),
    ])
}

fn farfield(cfg: &RunConfig, array: &AtomArray) -> Result<Vec<OutputFile>, CliError> {
    let h = build_hamiltonian(array)?;
    let s = decompose(&h)?;
    let quad = SphereQuadrature::new(cfg.farfield.order)?;
    let rows = gamma_pattern_check(array, &s, &quad)?;
    let mut files = vec![text("radiation_summary.csv", summary_csv(&rows))];

    let modes = if cfg.farfield.pattern_modes.is_empty() {
        let w = mode_weights(&s, &localized_state(array.len(), array.storage_index()))?;
        vec![w.dominant()]
    } else {
        cfg.farfield.pattern_modes.clone()
    };
    for &l in &modes {
        if l >= s.len() {
            return Err(CliError::Config(format!("pattern mode {l} out of range (0..{})", s.len())));
        }
        let mut c = s.right_vec(l);
        c.unscale_mut(c.norm());
        let pattern = integrated_pattern(array, &c, &quad)?;
        files.push(text(&format!("pattern_mode_{l}.csv"), pattern.to_csv()));
    }

    if cfg.farfield.refinement {
        let fine = gamma_pattern_check(array, &s, &SphereQuadrature::new(2 * cfg.farfield.order)?)?;
        let mut out = String::from("mode,gamma_rel,p_bar,p_bar_refined,relative_change\n");
        for (a, b) in rows.iter().zip(&fine) {
            let change = (a.p_bar - b.p_bar).abs() / b.p_bar.abs().max(f64::MIN_POSITIVE);
            let _ = writeln!(out, "{},{},{},{},{}", a.mode, a.gamma_rel, a.p_bar, b.p_bar, change);
        }
        files.push(text("refinement.csv", out));
    }
    Ok(files)
}

fn study(cfg: &RunConfig, array: &AtomArray, seed: u64) -> Result<Vec<OutputFile>, CliError> {
    let grid = cfg.time.grid()?;
    let st = &cfg.study;
    match st.kind {
        StudyKind::Robustness => {
            let ens = robustness_ensemble(array, &st.perturbation, st.n_trials, &grid, seed)?;
            let base = evaluate(array, &grid)?.trace;
            let mut csv = String::from("t,p_unperturbed,p10,p50,p90\n");
            for i in 0..ens.times.len() {
                let _ = writeln!(csv, "{},{},{},{},{}", ens.times[i], base.p_e[i], ens.p10[i], ens.median[i], ens.p90[i]);
            }
            let meta = json!({
                "n_trials": ens.n_trials,
                "n_failed": ens.n_failed,
                "perturbation": ens.perturbation,
                "ordered": ens.ordered(),
            });
            Ok(vec![text("ensemble.csv", csv), ("ensemble.json".into(), to_json(&meta)?)])
        }
        StudyKind::Correlation => {
            let rep = correlation_study(array, &st.perturbation, st.n_trials, &grid, cfg.surrogate, seed)?;
            Ok(vec![
                text("correlation.csv", rep.to_csv()),
                text("correlation_pairs.csv", rep.pairs_csv()),
            ])
        }
        StudyKind::SeedDependence => {
            let opt = &cfg.optimize;
            let problem =
                OptimizationProblem::new(array.clone(), opt.r_min, cfg.surrogate)?.with_settings(opt.settings);
            let (rep, _) = seed_dependence_study(&problem, opt.n_runs, opt.sigma, seed, &grid)?;
            let meta = json!({
                "clusters": rep.clusters,
                "modal_cluster": rep.modal_cluster,
                "representative_run": rep.representative_run,
                "n_failed": rep.n_failed,
                "cluster_threshold": rep.cluster_threshold,
                "representative_min_distance": min_pair_distance(&rep.representative)?,
            });
            Ok(vec![
                text("seed_dependence.csv", rep.to_csv()),
                ("seed_dependence.json".into(), to_json(&meta)?),
                ("representative.json".into(), to_json(&rep.representative)?),
            ])
        }
    }
}
