//! The subcommands, writing human-readable output to a caller-supplied sink.

use std::io::Write;
use std::path::{Path, PathBuf};

use stiffexp::integrators::integrate;
use stiffexp::ionic::VOLTAGE;
use stiffexp::postprocess::extract_biomarkers;
use stiffexp::SchemeSpec;
use thiserror::Error;

use crate::cache::{CacheError, CacheStatus, ReferenceCache, ReferenceKey};
use crate::config::{ConfigError, RunConfig};
use crate::csvio::{self, CsvError};
use crate::expectations::{ExpectationError, Expectations};
use crate::study::{self, Cell, ConvergenceReport, Reference, Row, StudyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_NO_BIOMARKERS: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Error targets at which `cost` reports interpolated CPU time.
pub const DEFAULT_COST_TARGETS: [f64; 1] = [1e-3];

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Expectation(#[from] ExpectationError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Expectation(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

fn out_path(cfg: &RunConfig, default: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// `report.csv` -> `report_<suffix>.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn curve_name(spec: &SchemeSpec, what: &str) -> String {
    format!("{}{}_{what}.csv", spec.family().label(), spec.order())
}

/// One integration: trajectory file, biomarkers and timing.
pub fn cmd_run(cfg: &RunConfig, log: &mut dyn Write) -> Result<i32, CommandError> {
    cfg.validate()?;
    let spec = cfg.resolve_scheme()?;
    let m = cfg.resolve_steps()?;
    let model = cfg.model();
    let run = integrate(&model, &spec, m).map_err(StudyError::from)?;
    let h = run.mesh.step_size();
    writeln!(log, "scheme {spec}, h = {h}, m = {m}")?;
    writeln!(log, "wall-clock {:.6} s", run.status.elapsed.as_secs_f64())?;
    if run.status.newton.solves > 0 {
        writeln!(log, "newton: {} solves, {} iterations", run.status.newton.solves, run.status.newton.iterations)?;
    }
    if let Some(d) = &run.status.divergence {
        writeln!(log, "diverged at node {} (t = {}): {}", d.index, run.mesh.node(d.index), d.cause)?;
        return Ok(EXIT_DIVERGED);
    }
    let traj = run.into_trajectory().expect("stable run");
    let path = out_path(cfg, "trajectory.csv");
    csvio::save_trajectory(&path, &traj)?;
    writeln!(log, "trajectory written to {}", path.display())?;
    match extract_biomarkers(&traj, VOLTAGE) {
        Ok(bm) => {
            writeln!(log, "V_r = {:.6} mV, V_p = {:.6} mV, V_th = {:.6} mV", bm.v_r, bm.v_p, bm.v_th)?;
            writeln!(log, "t_a = {:.9} ms, t_r = {:.9} ms, APD = {:.9} ms", bm.t_a, bm.t_r, bm.apd)?;
            Ok(EXIT_OK)
        }
        Err(e) => {
            writeln!(log, "biomarkers undefined: {e}")?;
            Ok(EXIT_NO_BIOMARKERS)
        }
    }
}

/// Base step count and cache key of the reference for a list of steps.
/// The base mesh is the coarsest one; every step must divide it evenly
/// after refinement.
pub fn reference_key(cfg: &RunConfig, steps: &[f64]) -> Result<(ReferenceKey, Vec<(f64, usize)>), ConfigError> {
    let h_max = steps.iter().copied().fold(f64::NAN, f64::max);
    let m0 = cfg.steps_for(h_max)?;
    let key = ReferenceKey {
        model: cfg.model.name().into(),
        params: cfg.params,
        stimulus: cfg.stimulus,
        horizon: cfg.horizon,
        m: m0,
        r: cfg.refinement,
    };
    let fine = key.fine_steps();
    let mut out = Vec::with_capacity(steps.len());
    for &h in steps {
        let m = cfg.steps_for(h)?;
        if !fine.is_multiple_of(m) {
            return Err(ConfigError::Invalid(format!("reference with {fine} steps does not refine h = {h}")));
        }
        out.push((h, m));
    }
    Ok((key, out))
}

/// Loads or computes the reference for `steps`.
pub fn load_reference(cfg: &RunConfig, steps: &[f64]) -> Result<(Reference, Vec<(f64, usize)>, CacheStatus), CommandError> {
    let (key, meshes) = reference_key(cfg, steps)?;
    let cache = ReferenceCache::new(&cfg.cache_dir);
    let (traj, status) = cache.get_or_compute(&key, &cfg.model())?;
    Ok((Reference::voltage(traj), meshes, status))
}

/// Generates (or reuses) the cached reference for `h`/`m`, or for the
/// coarsest step of the study list when neither is set.
pub fn cmd_reference(cfg: &RunConfig, log: &mut dyn Write) -> Result<i32, CommandError> {
    cfg.validate()?;
    let base_h = match (cfg.m, cfg.h) {
        (None, None) => cfg.steps.iter().copied().fold(f64::NAN, f64::max),
        _ => cfg.horizon / cfg.resolve_steps()? as f64,
    };
    let (key, _) = reference_key(cfg, &[base_h])?;
    let cache = ReferenceCache::new(&cfg.cache_dir);
    let (traj, status) = cache.get_or_compute(&key, &cfg.model())?;
    let fine = key.fine_mesh();
    writeln!(log, "reference RK_4, {} steps, h_ref = {:e} ({status:?})", fine.steps(), fine.step_size())?;
    writeln!(log, "cache file {}", cache.path(&key).display())?;
    if let Some(out) = &cfg.out {
        csvio::save_trajectory(out, &traj)?;
        writeln!(log, "trajectory written to {}", out.display())?;
    }
    match Reference::voltage(traj).biomarkers {
        Some(bm) => {
            writeln!(log, "t_a = {:.9} ms, t_r = {:.9} ms, APD = {:.9} ms", bm.t_a, bm.t_r, bm.apd)?;
            Ok(EXIT_OK)
        }
        None => {
            writeln!(log, "biomarkers undefined")?;
            Ok(EXIT_NO_BIOMARKERS)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "--".into())
}

fn print_rows(log: &mut dyn Write, rows: &[Row]) -> std::io::Result<()> {
    writeln!(log, "{:7} {:>9} {:>10} {:>10} {:>10} {:>10} {:>10}", "scheme", "h", "e_inf", "e_ta", "e_tr", "e_apd", "cpu_s")?;
    for r in rows {
        writeln!(
            log,
            "{:7} {:>9} {:>10} {:>10} {:>10} {:>10} {:>10}",
            r.scheme.to_string(),
            r.h,
            fmt_opt(r.e_inf),
            fmt_opt(r.e_ta),
            fmt_opt(r.e_tr),
            fmt_opt(r.e_apd),
            r.cpu_s.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into()),
        )?;
    }
    Ok(())
}

fn print_checks(log: &mut dyn Write, exp: &Expectations, report: &ConvergenceReport, pattern_only: bool) -> std::io::Result<()> {
    let checks = if pattern_only { exp.pattern_checks(report) } else { exp.check_report(report) };
    for c in &checks {
        writeln!(log, "{}", c.line())?;
    }
    let failed = checks.iter().filter(|c| c.binding && !c.pass).count();
    writeln!(log, "expectations: {} checks, {failed} failed", checks.len())
}

fn study_cells(cfg: &RunConfig) -> Result<(Reference, Vec<Cell>), CommandError> {
    let schemes = cfg.study_schemes()?;
    let (reference, meshes, _) = load_reference(cfg, &cfg.steps)?;
    Ok((reference, study::grid(&schemes, &meshes)))
}

fn write_curves(dir: &Path, report: &ConvergenceReport) -> Result<(), CsvError> {
    for fit in &report.slopes {
        let rows: Vec<&Row> = report.rows_of(&fit.scheme).filter(|r| r.stable).collect();
        for (what, get) in [("e_inf", (|r: &Row| r.e_inf) as fn(&Row) -> Option<f64>), ("e_ta", |r| r.e_ta), ("e_tr", |r| r.e_tr)] {
            let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| get(r).map(|e| (r.h, e))).collect();
            csvio::save_curve(&dir.join(curve_name(&fit.scheme, what)), ["h", what], &pts)?;
        }
    }
    Ok(())
}

/// Accuracy (and optionally timing) over the scheme × step grid.
pub fn cmd_converge(cfg: &RunConfig, log: &mut dyn Write) -> Result<(i32, ConvergenceReport), CommandError> {
    cfg.validate()?;
    let expectations = cfg.expectations.as_deref().map(Expectations::load).transpose()?;
    let (reference, cells) = study_cells(cfg)?;
    let model = cfg.model();
    let report = study::run_study(&model, &cells, &reference, cfg.repeats)?;
    let path = out_path(cfg, "convergence.csv");
    csvio::save_report(&path, &report)?;
    csvio::save_slopes(&sibling(&path, "slopes"), &report.slopes)?;
    if let Some(dir) = &cfg.plot_dir {
        write_curves(dir, &report)?;
    }
    print_rows(log, &report.rows)?;
    for s in &report.slopes {
        let slope = s.e_inf.map(|v| format!("{v:.3}")).unwrap_or_else(|| csvio::UNDEFINED.into());
        writeln!(log, "slope {}: {slope} ({} stable rows)", s.scheme, s.stable_rows)?;
    }
    writeln!(log, "report written to {}", path.display())?;
    if let Some(exp) = &expectations {
        print_checks(log, exp, &report, false)?;
    }
    Ok((EXIT_OK, report))
}

/// CPU time against accuracy; curves cleaned to be monotone.
pub fn cmd_cost(cfg: &RunConfig, targets: &[f64], log: &mut dyn Write) -> Result<(i32, ConvergenceReport), CommandError> {
    cfg.validate()?;
    if cfg.repeats < 3 {
        return Err(ConfigError::Invalid(format!("cost needs at least 3 timing repeats, got {}", cfg.repeats)).into());
    }
    let (reference, cells) = study_cells(cfg)?;
    let model = cfg.model();
    let report = study::run_study(&model, &cells, &reference, cfg.repeats)?;
    let path = out_path(cfg, "cost.csv");
    csvio::save_report(&path, &report)?;
    let dir = cfg.plot_dir.clone().unwrap_or_else(|| sibling(&path, "curves").with_extension(""));
    for fit in &report.slopes {
        let curve = study::monotone_clean(&study::cost_points(report.rows_of(&fit.scheme)));
        csvio::save_curve(&dir.join(curve_name(&fit.scheme, "cost")), ["e_inf", "cpu_s"], &curve)?;
        let at: Vec<String> = targets
            .iter()
            .map(|&t| match study::cost_at_error(&curve, t) {
                Some(c) => format!("cpu({t:e}) = {c:.4} s"),
                None => format!("cpu({t:e}) out of range"),
            })
            .collect();
        writeln!(log, "{:7} {}", fit.scheme.to_string(), at.join(", "))?;
    }
    writeln!(log, "report written to {}, curves in {}", path.display(), dir.display())?;
    Ok((EXIT_OK, report))
}

/// Stable/diverged matrix with steps as rows and schemes as columns.
pub fn cmd_stability(cfg: &RunConfig, log: &mut dyn Write) -> Result<(i32, Vec<study::StabilityCell>), CommandError> {
    cfg.validate()?;
    let expectations = cfg.expectations.as_deref().map(Expectations::load).transpose()?;
    let schemes = cfg.study_schemes()?;
    let meshes = cfg.steps.iter().map(|&h| Ok((h, cfg.steps_for(h)?))).collect::<Result<Vec<_>, ConfigError>>()?;
    let cells = study::stability_sweep(&cfg.model(), &study::grid(&schemes, &meshes))?;
    let mut header = vec!["h".to_string()];
    header.extend(schemes.iter().map(|s| s.to_string()));
    let table: Vec<Vec<String>> = meshes
        .iter()
        .map(|&(h, _)| {
            let mut row = vec![h.to_string()];
            for s in &schemes {
                let cell = cells.iter().find(|c| study::same_scheme(&c.scheme, s) && study::same_step(c.h, h));
                row.push(if cell.is_some_and(|c| c.stable) { "ok".into() } else { "--".into() });
            }
            row
        })
        .collect();
    let path = out_path(cfg, "stability.csv");
    csvio::save_table(&path, &header, &table)?;
    writeln!(log, "{}", header.join("\t"))?;
    for row in &table {
        writeln!(log, "{}", row.join("\t"))?;
    }
    writeln!(log, "matrix written to {}", path.display())?;
    if let Some(exp) = &expectations {
        let rows = cells
            .iter()
            .map(|c| Row {
                scheme: c.scheme,
                h: c.h,
                m: 0,
                e_inf: None,
                e_ta: None,
                e_tr: None,
                e_apd: None,
                cpu_s: None,
                stable: c.stable,
                newton_iters: 0,
                diverged_at: c.diverged_at,
            })
            .collect();
        print_checks(log, exp, &ConvergenceReport { rows, slopes: vec![] }, true)?;
    }
    Ok((EXIT_OK, cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/report.csv"), "slopes"), PathBuf::from("out/report_slopes.csv"));
        assert_eq!(sibling(Path::new("x"), "curves").with_extension(""), PathBuf::from("x_curves"));
    }

    #[test]
    fn reference_key_checks_refinement() {
        let cfg = RunConfig { refinement: 2, ..Default::default() };
        let (key, meshes) = reference_key(&cfg, &[0.2, 0.1, 0.05]).unwrap();
        assert_eq!(key.m, 1980);
        assert_eq!(key.fine_steps(), 7920);
        assert_eq!(meshes, vec![(0.2, 1980), (0.1, 3960), (0.05, 7920)]);
        assert!(reference_key(&cfg, &[0.2, 0.025]).is_err());
        // 396/0.3 = 1320 steps does not divide 1980·4
        assert!(reference_key(&cfg, &[0.2, 0.3]).is_err());
    }
}
