//! Scenario runners: each turns a validated [`Plan`] into output files and a
//! JSON summary for the manifest. Nothing here touches the filesystem.

use rayon::prelude::*;
use serde_json::{json, Value};
use w2pt::analysis::{
    empirical_stability_boundary, norm_growth, run_triple, spatial_convergence_curves, temporal_convergence_order,
    RefinementTriple,
};
use w2pt::lattice::{amplification_factors, cfl_max_timestep, stability_scan};
use w2pt::observables::{leakage_onset, purity_stats, quality_factor, LEAKAGE_FRACTION};
use w2pt::snapshot::write_record;
use w2pt::Result;

use crate::config::{validate_sweep, ConfigError, Plan, Scenario, Sweep, SweepKind, SweepParam};
use crate::output::{num, CsvTable, OutputFile};
use crate::pipeline::{dips_dominate, energy_drift, extremum_spacings, purity_point, quality_point, trace, Trace, TraceOptions};

/// Extrema of `ν(t)` must stand out by this fraction of its post-ramp range.
pub const PEAK_PROMINENCE: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Outputs {
    pub files: Vec<OutputFile>,
    pub summary: Value,
}

/// Any failure of a scenario: a config problem only detectable once the plan
/// is expanded, or an error from the solver.
#[derive(Debug)]
pub enum ScenarioError {
    Config(ConfigError),
    Solver(w2pt::Error),
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioError::Config(e) => e.fmt(f),
            ScenarioError::Solver(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for ScenarioError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ScenarioError::Config(e) => Some(e),
            ScenarioError::Solver(e) => Some(e),
        }
    }
}

impl From<ConfigError> for ScenarioError {
    fn from(e: ConfigError) -> Self {
        ScenarioError::Config(e)
    }
}

impl From<w2pt::Error> for ScenarioError {
    fn from(e: w2pt::Error) -> Self {
        ScenarioError::Solver(e)
    }
}

pub fn execute(plan: &Plan) -> std::result::Result<Outputs, ScenarioError> {
    if let Some(sweep) = &plan.sweep {
        return Ok(run_sweep(sweep)?);
    }
    Ok(match plan.scenario {
        Scenario::StaticCavityWavepacket => static_cavity(plan)?,
        Scenario::DynamicCavityVacuum => dynamic_cavity(plan)?,
        Scenario::PuritySweep => run_sweep(&default_sweep(plan, SweepKind::Purity)?)?,
        Scenario::QualitySweep => run_sweep(&default_sweep(plan, SweepKind::Quality)?)?,
        Scenario::Convergence => convergence(plan)?,
        Scenario::StabilityScan => stability(plan)?,
    })
}

/// A sweep scenario run without a `[sweep]` section is a one-point sweep at
/// the configured value.
fn default_sweep(plan: &Plan, kind: SweepKind) -> std::result::Result<Sweep, ConfigError> {
    let c = &plan.config;
    let (param, value) = match kind {
        SweepKind::Purity => (SweepParam::RampTime, c.potential.ramp_time),
        SweepKind::Quality => (SweepParam::Sharpness, c.potential.sharpness),
    };
    validate_sweep(c, kind, param, &[value])
}

fn density_every(plan: &Plan) -> usize {
    let k = (plan.config.output.density_interval / plan.setup.dt()).round() as usize;
    k.max(1)
}

fn energy_files(trace: &Trace) -> Vec<OutputFile> {
    let mut by_region = CsvTable::new("energy_by_region.csv", &["t", "interior", "exterior", "total"]);
    for e in &trace.energy {
        by_region.row([num(e.t), num(e.interior), num(e.exterior), num(e.total)]);
    }
    let mut density = CsvTable::new("energy_density.csv", &["t", "x", "t00"]);
    for (t, profile) in &trace.density {
        for (x, v) in trace.xs.iter().zip(profile) {
            density.row([num(*t), num(*x), num(*v)]);
        }
    }
    vec![by_region.finish(), density.finish()]
}

fn nu_file(name: &str, trace: &Trace) -> OutputFile {
    let mut table = CsvTable::new(name, &["t", "nu", "mode"]);
    let steps = trace.nu.first().map_or(0, |(_, s)| s.len());
    for k in 0..steps {
        for (mode, series) in &trace.nu {
            table.row([num(series[k].0), num(series[k].1), mode.to_string()]);
        }
    }
    table.finish()
}

fn snapshot_file(trace: &Trace) -> Result<Option<OutputFile>> {
    trace
        .final_record
        .as_ref()
        .map(|r| {
            let mut bytes = Vec::new();
            write_record(&mut bytes, r)?;
            Ok(OutputFile { name: "final_record.w2pt".into(), bytes })
        })
        .transpose()
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        Value::Null
    } else {
        json!(if x > 0.0 { "inf" } else { "-inf" })
    }
}

fn static_cavity(plan: &Plan) -> Result<Outputs> {
    let opts = TraceOptions {
        energy: true,
        density_every: Some(density_every(plan)),
        modes: Vec::new(),
        keep_final: plan.config.output.snapshot,
    };
    let tr = trace(&plan.setup, &plan.region, &opts)?;
    let packet = plan.setup.wavepacket()?.expect("static scenario carries a wavepacket");
    let basis = plan.setup.basis()?;
    let first = tr.energy[0];
    let q = quality_factor(&tr.energy, &plan.region).ok();
    let summary = json!({
        "initial_energy": { "interior": first.interior, "exterior": first.exterior, "total": first.total },
        "mode_sum_energy": packet.energy(&basis),
        "smeared_mode_sum_energy": packet.smeared_energy(&basis, &plan.setup.smearing_params()?),
        "quality_factor": q.map(finite),
        "leakage_onset": leakage_onset(&tr.energy, LEAKAGE_FRACTION),
        "leakage_fraction": LEAKAGE_FRACTION,
        "light_crossing_time": plan.region.length(),
    });
    let mut files = energy_files(&tr);
    files.extend(snapshot_file(&tr)?);
    Ok(Outputs { files, summary })
}

fn dynamic_cavity(plan: &Plan) -> Result<Outputs> {
    let opts = TraceOptions {
        energy: true,
        density_every: Some(density_every(plan)),
        modes: plan.modes.clone(),
        keep_final: plan.config.output.snapshot,
    };
    let tr = trace(&plan.setup, &plan.region, &opts)?;
    let settle = plan.setup.potential.settle_time();
    let l = plan.region.length();
    let end = tr.energy.last().map_or(0.0, |e| e.t);
    let drift = energy_drift(&tr.energy, settle, (settle + plan.window).min(end));
    let modes: Vec<Value> = tr
        .nu
        .iter()
        .map(|(n, series)| {
            let stats = purity_stats(series, settle, plan.window).ok();
            let peaks = extremum_spacings(series, settle, PEAK_PROMINENCE, false);
            let dips = extremum_spacings(series, settle, PEAK_PROMINENCE, true);
            json!({
                "mode": n,
                "mean_nu": stats.map(|s| s.mean_nu),
                "std_nu": stats.map(|s| s.std_nu),
                "p0": stats.map(|s| s.p0),
                "peak_spacings": peaks,
                "dip_spacings": dips,
                "dips_dominate": dips_dominate(series, settle),
            })
        })
        .collect();
    let summary = json!({
        "settle_time": settle,
        "light_crossing_time": l,
        "window": plan.window,
        "drift": drift.map(|d| json!({ "from": d.from, "to": d.to, "total": d.total, "interior": d.interior })),
        "min_nu": finite(tr.min_nu),
        "modes": modes,
    });
    let mut files = energy_files(&tr);
    files.push(nu_file("nu_series.csv", &tr));
    files.extend(snapshot_file(&tr)?);
    Ok(Outputs { files, summary })
}

/// Abscissa scaled by the tracked mode's frequency `nπ/l`.
fn scaled(param: SweepParam, value: f64, plan: &Plan) -> f64 {
    let omega = |n: usize| n as f64 * std::f64::consts::PI / plan.region.length();
    match param {
        SweepParam::ModeNumber => omega(value as usize),
        _ => value * omega(plan.modes[0]),
    }
}

fn point_dir(param: SweepParam, value: f64) -> String {
    format!("{}-{value}", param.name())
}

fn run_sweep(sweep: &Sweep) -> Result<Outputs> {
    let param = sweep.param;
    match sweep.kind {
        SweepKind::Purity => {
            let rows = sweep
                .points
                .par_iter()
                .map(|(v, p)| purity_point(&p.setup, &p.region, p.modes[0], p.window).map(|(s, t)| (*v, p, s, t)))
                .collect::<Result<Vec<_>>>()?;
            let (a, b) = if param == SweepParam::RampTime {
                ("T".to_owned(), "T_scaled".to_owned())
            } else {
                (param.name().to_owned(), format!("{}_scaled", param.name()))
            };
            let mut table = CsvTable::new("purity_sweep.csv", &[&a, &b, "mean_nu", "std_nu", "p0"]);
            let mut files = Vec::new();
            let mut points = Vec::new();
            for (v, p, s, t) in &rows {
                table.row([num(*v), num(scaled(param, *v, p)), num(s.mean_nu), num(s.std_nu), num(s.p0)]);
                files.push(nu_file(&format!("{}/nu_series.csv", point_dir(param, *v)), t));
                points.push(json!({ "value": v, "mode": p.modes[0], "mean_nu": s.mean_nu, "std_nu": s.std_nu,
                                    "p0": s.p0, "min_nu": finite(t.min_nu) }));
            }
            files.insert(0, table.finish());
            Ok(Outputs { files, summary: json!({ "param": param.name(), "points": points }) })
        }
        SweepKind::Quality => {
            let rows = sweep
                .points
                .par_iter()
                .map(|(v, p)| quality_point(&p.setup, &p.region).map(|(q, t)| (*v, q, t)))
                .collect::<Result<Vec<_>>>()?;
            let mut table = CsvTable::new("quality_sweep.csv", &[param.name(), "Q"]);
            let mut files = Vec::new();
            let mut points = Vec::new();
            for (v, q, t) in &rows {
                table.row([num(*v), num(*q)]);
                let mut by_region = energy_files(t).swap_remove(0);
                by_region.name = format!("{}/energy_by_region.csv", point_dir(param, *v));
                files.push(by_region);
                points.push(json!({ "value": v, "Q": finite(*q) }));
            }
            files.insert(0, table.finish());
            Ok(Outputs { files, summary: json!({ "param": param.name(), "points": points }) })
        }
    }
}

fn convergence(plan: &Plan) -> Result<Outputs> {
    let c = &plan.config.convergence;
    let triple = RefinementTriple::new(plan.setup.clone(), 2.0)?;
    let sols = run_triple(&triple, c.x_prime, c.t_prime)?;
    let order = temporal_convergence_order(&sols, 2)?;
    let mut temporal = CsvTable::new("temporal_convergence.csv", &["t", "p"]);
    for (t, p) in &order {
        temporal.row([num(*t), num(*p)]);
    }
    let mut files = vec![temporal.finish()];
    let mut curves = Vec::new();
    let dt = plan.setup.dt();
    for &requested in &c.curve_times {
        let t = (requested / dt).round() * dt;
        let cv = spatial_convergence_curves(&sols, 2, t, c.order)?;
        let mut table = CsvTable::new(
            format!("spatial_convergence_t{t:.4}.csv"),
            &["x", "diff_cm_re", "diff_mf_scaled_re", "diff_cm_im", "diff_mf_scaled_im"],
        );
        for ((x, a), b) in cv.abscissa.iter().zip(&cv.diff_cm).zip(&cv.diff_mf_scaled) {
            table.row([num(*x), num(a.re), num(b.re), num(a.im), num(b.im)]);
        }
        files.push(table.finish());
        curves.push(json!({ "t": t, "mismatch_re": cv.mismatch(false), "mismatch_im": cv.mismatch(true) }));
    }
    let (lo, hi) = order.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.1), b.max(s.1)));
    let summary = json!({
        "coarse_points": plan.setup.grid()?.n_points(),
        "coarse_dt": plan.setup.dt(),
        "p_min": lo,
        "p_max": hi,
        "curves": curves,
    });
    Ok(Outputs { files, summary })
}

fn stability(plan: &Plan) -> Result<Outputs> {
    let st = &plan.config.stability;
    let grid = plan.setup.grid()?;
    let dx = grid.spacing();
    let v = st.v_tilde.unwrap_or_else(|| plan.setup.potential.max_value());
    let dt_max = cfl_max_timestep(dx, v)?;
    let dt = plan.setup.dt();
    let time = w2pt::lattice::TimeGrid::new(&grid, dt, dt)?;
    let report = stability_scan(&grid, &time, v, st.n_theta)?;
    let mut scan = CsvTable::new("stability_scan.csv", &["theta", "abs_lambda_plus", "abs_lambda_minus"]);
    for &theta in &report.theta_samples {
        let (lp, lm) = amplification_factors(theta, dt, dx, v)?;
        scan.row([num(theta), num(lp.norm()), num(lm.norm())]);
    }
    let probes = st
        .ratios
        .iter()
        .map(|&r| norm_growth(&grid, v, r * dt_max, st.steps).map(|g| (r, g)))
        .collect::<Result<Vec<_>>>()?;
    let mut probe = CsvTable::new("stability_probe.csv", &["ratio", "dt", "growth"]);
    for (r, g) in &probes {
        probe.row([num(*r), num(r * dt_max), num(*g)]);
    }
    let (lo, hi) = st.ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    let boundary = if st.bisect && st.ratios.len() >= 2 {
        empirical_stability_boundary(&grid, v, st.steps, st.growth_threshold, lo * dt_max, hi * dt_max, 1e-3).ok()
    } else {
        None
    };
    let summary = json!({
        "v_tilde": v,
        "dx": dx,
        "dt": dt,
        "dt_max": dt_max,
        "stable": report.stable,
        "max_amplification": report.max_amplification,
        "steps": st.steps,
        "growth_threshold": st.growth_threshold,
        "probes": probes.iter().map(|(r, g)| json!({ "ratio": r, "growth": finite(*g) })).collect::<Vec<_>>(),
        "empirical_boundary": boundary,
        "empirical_boundary_ratio": boundary.map(|b| b / dt_max),
    });
    Ok(Outputs { files: vec![scan.finish(), probe.finish()], summary })
}
