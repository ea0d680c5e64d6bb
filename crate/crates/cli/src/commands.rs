use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use refphase::models::SHIPPED_MODEL;
use refphase::oracle::{exact_diagonalize, gap_table};
use refphase::protocol::{prepare_ghz_pipeline, sweep, RamseyPlan, TauGrid};
use refphase::spectral::{analyze, compare_runtimes, scan_subspaces, SectorOutcome, MIN_SAMPLES};
use refphase::symmetry::{decompose, reference_at, select_reference};
use refphase::{parse_model_file, AnalysisOptions, DftOptions, GhzLayout, GhzPlan, Model, PeakOptions, Plan, PropagationSettings, SectorRun, Shots};

use crate::args::{AnalysisArgs, Cli, Command, CompareArgs, GhzArgs, OracleArgs, PlanArgs, ReplayArgs, ScanArgs, SweepArgs};
use crate::io::{write_compare, write_gaps, write_json, write_levels, write_ramsey, write_spectrum};
use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub q: f64,
    pub level: usize,
    pub energy_problem: f64,
    pub energy_driver: f64,
    pub warning: Option<String>,
}

/// Everything needed to repeat a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub config: Command,
    pub model_label: String,
    pub model_text: String,
    pub reference: Option<ReferenceMeta>,
    pub ground_sector: Option<f64>,
    pub seed: Option<u64>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorSummary {
    pub q: f64,
    pub dim: usize,
    pub method: String,
    pub ground_energy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalMinimum {
    pub q: f64,
    pub energy: f64,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            pool.install(|| dispatch(&cli.command))
        }
        None => dispatch(&cli.command),
    }
}

pub fn dispatch(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::Replay(args) => replay(args),
        _ => {
            let io = cmd.io().expect("non-replay commands carry io args");
            let text = model_text(io.model.as_deref())?;
            execute(cmd, &text, &io.out)
        }
    }
}

fn model_text(path: Option<&Path>) -> CliResult<String> {
    match path {
        None => Ok(SHIPPED_MODEL.to_string()),
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read model file {}: {e}", p.display()))),
    }
}

fn replay(args: &ReplayArgs) -> CliResult<()> {
    let meta: RunMeta = crate::io::read_json(&args.meta)?;
    let mut cmd = meta.config;
    if let Some(io) = cmd.io_mut() {
        io.out = args.out.clone();
    }
    execute(&cmd, &meta.model_text, &args.out)
}

fn execute(cmd: &Command, text: &str, out: &Path) -> CliResult<()> {
    let model = parse_model_file::<f64>(text)?;
    fs::create_dir_all(out)?;
    let mut meta = RunMeta {
        tool: "refphase".into(),
        version: refphase::VERSION.into(),
        config: cmd.clone(),
        model_label: model.label.clone(),
        model_text: text.to_string(),
        reference: None,
        ground_sector: None,
        seed: None,
        notes: Vec::new(),
    };
    // Outputs must not depend on where the run was launched from.
    if let Some(io) = meta.config.io_mut() {
        io.out = PathBuf::from(".");
    }
    match cmd {
        Command::Sweep(a) => cmd_sweep(a, &model, out, &mut meta)?,
        Command::Compare(a) => cmd_compare(a, &model, out, &mut meta)?,
        Command::Scan(a) => cmd_scan(a, &model, out, &mut meta)?,
        Command::Oracle(a) => cmd_oracle(a, &model, out, &mut meta)?,
        Command::PrepGhz(a) => cmd_prep_ghz(a, &model, out, &mut meta)?,
        Command::Replay(_) => return Err(CliError::Config("replay cannot be nested".into())),
    }
    write_json(&out.join("run_meta.json"), &meta)
}

pub fn build_plan(model: &Model, args: &PlanArgs) -> CliResult<Plan> {
    let grid = TauGrid::new(args.tau_min, args.tau_max, args.len)?;
    let mut plan = RamseyPlan::new(model, args.asp_time, grid)?;
    if let Some(q) = args.sector {
        plan = plan.with_sector(q)?;
    }
    if let (Some(q), Some(level)) = (args.ref_sector, args.ref_level) {
        plan.reference = reference_at(&plan.decomposition, &plan.h_d, &plan.h_p, q, level)?;
        plan.reference_warning = None;
    }
    plan.shots = args.shots.map(|count| Shots { count, seed: args.seed });
    plan.relative_phase = args.phase;
    plan.settings = PropagationSettings {
        steps_per_unit_time: args.steps_per_unit,
        method: args.method.into(),
        ..PropagationSettings::default()
    };
    plan.settings.validate()?;
    Ok(plan)
}

pub fn analysis_options(args: &AnalysisArgs) -> AnalysisOptions {
    AnalysisOptions {
        dft: DftOptions {
            mean_subtract: !args.no_mean_subtract,
            window: args.window.into(),
        },
        peaks: PeakOptions {
            threshold_fraction: args.threshold,
            refinement: args.refine.into(),
            ..PeakOptions::default()
        },
        omega_max: args.omega_max,
        oversample: args.oversample,
    }
}

fn record_plan(meta: &mut RunMeta, plan: &Plan, args: &PlanArgs) {
    meta.reference = Some(ReferenceMeta {
        q: plan.reference.q,
        level: plan.reference.level,
        energy_problem: plan.reference.energy_problem,
        energy_driver: plan.reference.energy_driver,
        warning: plan.reference_warning.clone(),
    });
    meta.ground_sector = Some(plan.ground_sector_q());
    meta.seed = args.shots.map(|_| args.seed);
}

fn write_run(dir: &Path, run: &SectorRun) -> CliResult<()> {
    write_spectrum(&dir.join("spectrum.csv"), &run.spectrum)?;
    write_json(&dir.join("peaks.json"), &run.peaks)?;
    write_json(&dir.join("energies.json"), &run.report)
}

fn check_len(args: &PlanArgs) -> CliResult<()> {
    if args.len < MIN_SAMPLES {
        return Err(CliError::Config(format!(
            "insufficient samples: L = {} but the spectrum needs at least {MIN_SAMPLES}",
            args.len
        )));
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, model: &Model, out: &Path, meta: &mut RunMeta) -> CliResult<()> {
    check_len(&a.plan)?;
    let plan = build_plan(model, &a.plan)?;
    record_plan(meta, &plan, &a.plan);
    let series = sweep(&plan)?;
    write_ramsey(&out.join("ramsey.csv"), &series)?;
    let run = analyze(&plan, series, &analysis_options(&a.analysis))?;
    write_run(out, &run)?;
    if let Some(g) = run.report.ground_energy() {
        println!("ground estimate {g:.10} (reference {:.10}, {} peaks)", plan.reference.energy_problem, run.peaks.len());
    }
    Ok(())
}

fn cmd_compare(a: &CompareArgs, model: &Model, out: &Path, meta: &mut RunMeta) -> CliResult<()> {
    check_len(&a.plan)?;
    if a.runtimes.is_empty() {
        return Err(CliError::Config("runtime list is empty".into()));
    }
    let plan = build_plan(model, &a.plan)?;
    record_plan(meta, &plan, &a.plan);
    meta.notes.push(format!(
        "proposed: fixed T = {}, tau in [0, R - 2T] with L = {} points; conventional: one linear ramp of duration R",
        a.plan.asp_time, a.plan.len
    ));
    let rows = compare_runtimes(model, &plan, &a.runtimes, &analysis_options(&a.analysis))?;
    write_compare(&out.join("compare.csv"), &rows)?;
    for r in &rows {
        println!(
            "R = {:>8.3}  proposed {:+.3e}  conventional {:+.3e}",
            r.total_runtime,
            r.proposed_estimate - r.exact,
            r.conventional_estimate - r.exact
        );
    }
    Ok(())
}

pub fn sector_dir_name(q: f64) -> String {
    format!("sector_{q}")
}

fn cmd_scan(a: &ScanArgs, model: &Model, out: &Path, meta: &mut RunMeta) -> CliResult<()> {
    check_len(&a.plan)?;
    let plan = build_plan(model, &a.plan)?;
    record_plan(meta, &plan, &a.plan);
    let report = scan_subspaces(&plan, &a.sectors, &analysis_options(&a.analysis))?;
    let mut summary = Vec::with_capacity(report.sectors.len());
    for s in &report.sectors {
        let (method, error) = match &s.outcome {
            SectorOutcome::Spectral(run) => {
                let dir = out.join(sector_dir_name(s.q));
                fs::create_dir_all(&dir)?;
                write_run(&dir, run)?;
                ("spectral", None)
            }
            SectorOutcome::Classical { .. } => ("classical", None),
            SectorOutcome::Failed { error } => ("failed", Some(error.to_string())),
        };
        summary.push(SectorSummary {
            q: s.q,
            dim: s.dim,
            method: method.into(),
            ground_energy: s.ground_energy(),
            error,
        });
    }
    write_json(&out.join("scan.json"), &summary)?;
    let (energy, q) = report
        .global_minimum
        .ok_or_else(|| CliError::Physics("no sector produced a ground estimate".into()))?;
    write_json(&out.join("global_minimum.json"), &GlobalMinimum { q, energy })?;
    println!("global minimum {energy:.10} in sector {q}");
    Ok(())
}

fn cmd_oracle(_a: &OracleArgs, model: &Model, out: &Path, meta: &mut RunMeta) -> CliResult<()> {
    let h_p = model.effective_problem()?;
    let spec = exact_diagonalize(&h_p)?;
    let dec = decompose(&model.conserved, model.n_qubits)?;
    let sel = select_reference(&dec, &model.driver, &h_p, model.n_qubits)?;
    meta.reference = Some(ReferenceMeta {
        q: sel.reference.q,
        level: sel.reference.level,
        energy_problem: sel.reference.energy_problem,
        energy_driver: sel.reference.energy_driver,
        warning: sel.warning,
    });
    write_levels(&out.join("spectrum_exact.csv"), &spec.energies)?;
    write_gaps(&out.join("gaps.csv"), &gap_table(&spec, sel.reference.energy_problem))?;
    println!("{} levels, ground {:.10}", spec.energies.len(), spec.energies[0]);
    Ok(())
}

fn cmd_prep_ghz(a: &GhzArgs, model: &Model, out: &Path, meta: &mut RunMeta) -> CliResult<()> {
    let durations: [f64; 3] = a
        .durations
        .as_slice()
        .try_into()
        .map_err(|_| CliError::Config(format!("--durations needs 3 values, got {}", a.durations.len())))?;
    let mut plan = GhzPlan::new(GhzLayout::parse(&a.pattern)?);
    plan.b1 = a.b1;
    plan.b2 = a.b2;
    plan.b3 = a.b3;
    plan.durations = durations;
    plan.max_leakage = a.max_leakage;
    plan.settings.steps_per_unit_time = a.steps_per_unit;
    plan.settings.validate()?;
    let (_, diag) = prepare_ghz_pipeline(model, &plan)?;
    meta.notes.push(format!("layout {}", diag.layout));
    write_json(&out.join("prep_diag.json"), &diag)?;
    println!(
        "ground branch {:.6}, reference branch {:.6}, leakage {:.3e}",
        diag.ground_population, diag.reference_population, diag.leakage
    );
    Ok(())
}
