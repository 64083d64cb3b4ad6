//! Scenario bodies. Each returns a report whose criteria carry the
//! acceptance ids they check.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{RawConfig, ScenarioConfig};
use super::report::{Criterion, NamedFit, RunReport, Series};
use super::{run_scenario, Context, RunError};
use crate::analytic::AnalyticField;
use crate::diagnostics::{
    fit_velocity, fit_velocity_by, free_spreading_width, measure, spreading_ratio, ObservableRecord,
};
use crate::error::LabError;
use crate::evolution::{
    analytic_initial_state, evolve, perturb, plan_steps, static_initial_state, EvolutionConfig, Mode,
    ObserverConfig, StabilityGuard, Stepper, Trajectory,
};
use crate::model::{
    make_grid, validate_params, Family, FieldState, Grid, PhysicalParams, Severity, SolitonSpec, TransverseMode,
    Variant13,
};
use crate::residual::{choose_step, choquard_residual, full_family_audit, AuditCase, AuditEntry, AuditSettings};
use crate::spectral::yukawa_invert;
use crate::yukawa_direct::yukawa_convolve_direct;

const RESIDUAL_TOL: f64 = 1e-6;
const CONVERGENCE_GAIN: f64 = 16.0;

fn params(cfg: &ScenarioConfig) -> PhysicalParams {
    PhysicalParams::new(cfg.params.electron_mass, cfg.params.higgs_mass, cfg.params.vev)
}

fn evolution_config(cfg: &ScenarioConfig) -> EvolutionConfig {
    EvolutionConfig {
        mode: cfg.run.mode,
        source_coupling: cfg.run.coupling,
        convention: cfg.run.convention,
        guard: StabilityGuard { cfl: cfg.run.cfl, higgs: cfg.run.higgs_guard, dispersive: cfg.run.dispersive_guard },
        blowup_factor: cfg.run.blowup_factor,
    }
}

fn build_spec(cfg: &ScenarioConfig, p: &PhysicalParams) -> Result<SolitonSpec, RunError> {
    let s = &cfg.soliton;
    Ok(match s.family {
        Family::ThreeDA if s.alpha > 0.0 => SolitonSpec::three_d_a_with_alpha(p, s.alpha, s.gamma, s.epsilon),
        Family::ThreeDA => SolitonSpec::three_d_a(p, s.omega, s.gamma, s.epsilon).context("ThreeD_A dispersion relation")?,
        Family::ThreeDB => SolitonSpec::three_d_b(s.mu, s.gamma, s.epsilon),
        Family::OneDA => SolitonSpec::one_d_a(s.variant_13),
        Family::OneDB => SolitonSpec::one_d_b(p),
    })
}

/// Required constraints abort the run; advisory ones become findings.
fn require_valid(p: &PhysicalParams, spec: &SolitonSpec, report: &mut RunReport) -> Result<(), RunError> {
    let v = validate_params(p, spec);
    let mut required = Vec::new();
    for c in v.failures() {
        match c.severity {
            Severity::Required => required.push(format!("{} (margin {:.6e}): {}", c.name, c.margin, c.detail)),
            Severity::Advisory => report.findings.push(format!("advisory {}: {}", c.name, c.detail)),
        }
    }
    if required.is_empty() {
        Ok(())
    } else {
        Err(RunError::Lab { context: "parameter validation".into(), source: LabError::InvalidSpec(required.join("; ")) })
    }
}

fn family_grid(cfg: &ScenarioConfig, field: &AnalyticField) -> Result<Arc<Grid>, RunError> {
    let length = if cfg.grid.length > 0.0 { cfg.grid.length } else { cfg.grid.widths * field.width() };
    let transverse = (cfg.grid.dim == 1 && field.spec.family.is_three_d() && field.spec.transverse_k2() > 0.0)
        .then_some(TransverseMode { gamma: field.spec.gamma, epsilon: field.spec.epsilon });
    let grid = make_grid(cfg.grid.dim, cfg.grid.n, length, transverse).context("grid")?;
    field.check_domain(&grid).context("grid")?;
    Ok(Arc::new(grid))
}

fn max_abs_diff_c(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Evolve an analytic family from `t = 0` under the configured mode.
fn run_family(
    cfg: &ScenarioConfig,
    field: &AnalyticField,
    grid: Arc<Grid>,
    duration: f64,
    stride: usize,
    report: &mut RunReport,
    name: &str,
) -> Result<Trajectory, RunError> {
    let econf = evolution_config(cfg);
    let mut stepper = Stepper::new(grid.clone(), field.params, econf).context(name)?;
    let dt_max = if cfg.run.dt > 0.0 { cfg.run.dt } else { stepper.dt_limit() };
    let (_, dt) = plan_steps(duration, dt_max).context(name)?;
    let initial = match econf.mode {
        Mode::Coupled => analytic_initial_state(field, grid.clone(), dt).context(name)?,
        Mode::Choquard => {
            let psi = field.sample(&grid, 0.0).psi;
            static_initial_state(psi, field.params, grid.clone(), econf.convention).context(name)?
        }
    };
    let observer = ObserverConfig { stride, snapshot_stride: cfg.run.snapshot_every };
    let traj = evolve(&initial, duration, dt, &mut stepper, &observer).context(name)?;
    record_trajectory(report, name, &initial, &traj);
    Ok(traj)
}

fn record_trajectory(report: &mut RunReport, name: &str, initial: &FieldState, traj: &Trajectory) {
    report.steps += traj.steps;
    report.series.push(Series { name: name.into(), records: traj.observables.clone() });
    report.snapshots.push((format!("{name}_initial"), initial.clone()));
    for (k, s) in traj.snapshots.iter().enumerate().skip(1) {
        report.snapshots.push((format!("{name}_snap{k:04}"), s.clone()));
    }
    report.snapshots.push((format!("{name}_final"), traj.final_state.clone()));
    report.metric(&format!("{name}.dt"), traj.dt);
    report.metric(&format!("{name}.steps"), traj.steps as f64);
}

fn residual_detail(e: &AuditEntry) -> String {
    format!(
        "psi eq rel {:.2e}/{:.2e}, phi eq rel {:.2e}/{:.2e} (n/2n), gain psi {:.1}x phi {:.1}x",
        e.coarse.eq4.rel, e.fine.eq4.rel, e.coarse.eq5.rel, e.fine.eq5.rel, e.eq4_ratio, e.eq5_ratio
    )
}

fn exact_family_ok(e: &AuditEntry) -> bool {
    e.passes(RESIDUAL_TOL) && e.eq4_ratio >= CONVERGENCE_GAIN && e.eq5_ratio >= CONVERGENCE_GAIN
}

/// Valid random `(M, m, v)` with a real solitonic velocity.
fn random_params(rng: &mut ChaCha8Rng) -> PhysicalParams {
    loop {
        let p = PhysicalParams::new(rng.gen_range(0.5..2.0), rng.gen_range(0.2..1.0), rng.gen_range(0.3..1.5));
        if 1.5 * p.higgs_mass.powi(3) * p.vev.powi(2) < 0.95 * p.electron_mass.powi(3) {
            return p;
        }
    }
}

fn lattice_norm(spec: &SolitonSpec, p: &PhysicalParams, n: usize, widths: f64) -> Result<f64, RunError> {
    let field = AnalyticField::new(*spec, *p, 0.0).context("normalization")?;
    let grid = make_grid(1, n, widths * field.width(), None).context("normalization")?;
    let s = field.sample(&grid, 0.0);
    Ok(s.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.spacing)
}

pub fn verify_residuals(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let p = params(cfg);
    let mut report = RunReport::new(cfg.scenario.name(), cfg.to_text());
    let big_m = p.electron_mass;
    let three_d_a = SolitonSpec::three_d_a(&p, cfg.soliton.omega, 0.0, 0.0).context("ThreeD_A dispersion relation")?;
    let three_d_b = SolitonSpec::three_d_b(0.5 * big_m, 0.0, 0.0);
    let one_d_b = SolitonSpec::one_d_b(&p);
    let mut specs = vec![
        three_d_a,
        three_d_b,
        SolitonSpec::one_d_a(Variant13::AsPrintedSech),
        SolitonSpec::one_d_a(Variant13::CorrectedSechSquared),
    ];
    let one_d_b_ok = one_d_b.v_s.is_finite();
    if one_d_b_ok {
        specs.push(one_d_b);
    } else {
        report.findings.push("OneD_B skipped: solitonic velocity is imaginary at these parameters".into());
    }
    let mu_off = 0.8 * big_m;
    if (mu_off - p.higgs_mass).abs() > 1e-3 {
        specs.push(SolitonSpec::three_d_b(mu_off, 0.0, 0.0));
    }
    let cases: Vec<AuditCase> = specs.iter().map(|s| AuditCase { spec: *s, params: p }).collect();
    let settings = AuditSettings { n: cfg.audit.n, widths: cfg.audit.widths, t: 0.0 };
    let entries = full_family_audit(&cases, &settings).context("residual audit")?;
    for e in &entries {
        report.residuals.push(e.coarse.clone());
        report.residuals.push(e.fine.clone());
    }
    let find = |spec: &SolitonSpec| entries.iter().find(|e| e.coarse.label == crate::residual::audit_label(spec));

    let e1 = find(&three_d_a).expect("ThreeD_A audited");
    report.criteria.push(Criterion::new(
        1,
        "ThreeD_A residual audit",
        exact_family_ok(e1),
        format!("alpha = {}, {}", three_d_a.alpha, residual_detail(e1)),
    ));

    // sampled frames translate at mu/M exactly; the coupled run must hold it to 1%
    let e2 = find(&three_d_b).expect("ThreeD_B audited");
    let expected_v = three_d_b.mu / big_m;
    let field_b = AnalyticField::new(three_d_b, p, 0.0).context("ThreeD_B")?;
    let grid_b = Arc::new(make_grid(1, cfg.audit.n, cfg.audit.widths * field_b.width(), None).context("ThreeD_B")?);
    let mut frames: Vec<ObservableRecord> = Vec::new();
    for j in 0..11 {
        let s = field_b.sample(&grid_b, j as f64);
        let st = FieldState::new(s.t, s.psi, s.phi.clone(), s.phi, p, grid_b.clone()).context("ThreeD_B")?;
        let rec = measure(&st, frames.last());
        frames.push(rec);
    }
    let sampled = fit_velocity_by(&frames, grid_b.spacing, |r| r.centroid).context("ThreeD_B sampled fit")?;
    let sampled_ok = (sampled.velocity - expected_v).abs() <= 1e-6 * expected_v;
    report.velocity_fits.push(NamedFit { name: "ThreeD_B sampled".into(), fit: sampled, expected: expected_v });
    let mut evolved_detail = "evolution skipped".to_string();
    let mut evolved_ok = !cfg.audit.evolve_three_d_b;
    if cfg.audit.evolve_three_d_b {
        let traj = run_family(cfg, &field_b, grid_b.clone(), cfg.audit.evolve_t, cfg.run.stride, &mut report, "three_d_b")?;
        let fit = fit_velocity(&traj.observables, grid_b.spacing).context("ThreeD_B evolved fit")?;
        evolved_ok = !fit.degenerate && (fit.velocity / expected_v - 1.0).abs() < 0.01;
        evolved_detail = format!("evolved speed {:.6} ({:+.2e} rel)", fit.velocity, fit.velocity / expected_v - 1.0);
        report.velocity_fits.push(NamedFit { name: "ThreeD_B evolved".into(), fit, expected: expected_v });
    }
    report.criteria.push(Criterion::new(
        2,
        "ThreeD_B residual audit and speed mu/M",
        exact_family_ok(e2) && sampled_ok && evolved_ok,
        format!(
            "mu = {}, {}; sampled speed {:.10} vs {} ({:+.1e} rel); {}",
            three_d_b.mu,
            residual_detail(e2),
            sampled.velocity,
            expected_v,
            sampled.velocity / expected_v - 1.0,
            evolved_detail
        ),
    ));
    if let Some(off) = entries.iter().find(|e| e.coarse.label.contains(&format!("mu={mu_off}"))) {
        report.findings.push(format!(
            "ThreeD_B with mu = {mu_off} != m = {}: psi eq rel {:.3e}, phi eq rel {:.3e}; the closed form solves the equations only at mu = m",
            p.higgs_mass, off.coarse.eq4.rel, off.coarse.eq5.rel
        ));
    }

    let printed = find(&specs[2]).expect("OneD_A printed audited");
    let corrected = find(&specs[3]).expect("OneD_A corrected audited");
    let printed_fails = printed.coarse.eq5.rel > 0.1
        && printed.fine.eq5.rel > 0.1
        && (printed.fine.eq5.rel / printed.coarse.eq5.rel - 1.0).abs() < 0.01;
    let b_ok = one_d_b_ok && find(&one_d_b).is_some_and(|e| e.passes(RESIDUAL_TOL));
    let b_detail = find(&one_d_b).map_or("not run".to_string(), residual_detail);
    report.criteria.push(Criterion::new(
        3,
        "OneD_B passes; OneD_A sech fails the phi equation, sech^2 passes",
        b_ok && printed_fails && corrected.passes(RESIDUAL_TOL),
        format!(
            "OneD_B {b_detail}; OneD_A as-printed phi eq rel {:.4}/{:.4} (n/2n); sech^2 variant psi eq {:.2e} phi eq {:.2e}",
            printed.coarse.eq5.rel, printed.fine.eq5.rel, corrected.coarse.eq4.rel, corrected.coarse.eq5.rel
        ),
    ));
    report.findings.push(format!(
        "OneD_A contrast: as-printed sech phi gives a phi-equation relative residual {:.4} at n = {} and {:.4} at 2n (resolution-independent); \
         the sech^2 phi gives {:.2e}. psi-equation residual with the as-printed phi: {:.4}; with sech^2: {:.2e}",
        printed.coarse.eq5.rel,
        settings.n,
        printed.fine.eq5.rel,
        corrected.coarse.eq5.rel,
        printed.coarse.eq4.rel,
        corrected.coarse.eq4.rel
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    let mut triples = Vec::new();
    for _ in 0..3 {
        let q = random_params(&mut rng);
        for spec in [SolitonSpec::one_d_a(Variant13::AsPrintedSech), SolitonSpec::one_d_b(&q)] {
            worst = worst.max((lattice_norm(&spec, &q, 4096, 40.0)? - 1.0).abs());
        }
        triples.push(format!("({:.3}, {:.3}, {:.3})", q.electron_mass, q.higgs_mass, q.vev));
    }
    let alpha_n = big_m.powi(3) / p.mv().powi(2);
    let norm_at = |a: f64| lattice_norm(&SolitonSpec::three_d_a_with_alpha(&p, a, 0.0, 0.0), &p, 4096, 40.0);
    let at_norm = (norm_at(alpha_n)? - 1.0).abs();
    let mut off_norm_ok = true;
    for f in [0.8, 1.25] {
        let a = f * alpha_n;
        let nrm = norm_at(a)?;
        off_norm_ok &= (nrm - 1.0).abs() > 1e-3 && (nrm - p.mv().powi(2) * a / big_m.powi(3)).abs() < 1e-8;
    }
    report.metric("normalization.worst_1d", worst);
    report.metric("normalization.three_d_a_at_alpha_n", at_norm);
    report.criteria.push(Criterion::new(
        4,
        "normalization",
        worst < 1e-8 && at_norm < 1e-8 && off_norm_ok,
        format!(
            "max |norm - 1| over OneD_A/OneD_B at {} = {worst:.2e}; ThreeD_A at alpha = M^3/(mv)^2: {at_norm:.2e}, off that alpha the norm is m^2 v^2 alpha / M^3 != 1: {off_norm_ok}",
            triples.join(", ")
        ),
    ));
    report.audit = entries;
    Ok(report)
}

pub fn soliton_propagation(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let p = params(cfg);
    let mut report = RunReport::new(cfg.scenario.name(), cfg.to_text());
    let spec = build_spec(cfg, &p)?;
    require_valid(&p, &spec, &mut report)?;
    let field = AnalyticField::new(spec, p, cfg.soliton.x0).context("soliton")?;
    let grid = family_grid(cfg, &field)?;
    let traj = run_family(cfg, &field, grid.clone(), cfg.run.t_final, cfg.run.stride, &mut report, "soliton")?;
    let first = traj.observables[0];
    let last = *traj.observables.last().unwrap();
    let drift = (last.norm - first.norm).abs();
    let width_change = (last.width / first.width - 1.0).abs();
    let expected = spec.velocity(&p);
    let fit = fit_velocity(&traj.observables, grid.spacing).context("velocity fit")?;
    let v_ok = if expected.abs() > 0.0 { (fit.velocity / expected - 1.0).abs() < 0.01 } else { fit.velocity.abs() < 0.01 };
    report.velocity_fits.push(NamedFit { name: "soliton".into(), fit, expected });
    report.metric("norm_drift", drift);
    report.metric("width_change", width_change);
    report.criteria.push(Criterion::new(
        5,
        "soliton propagation",
        drift < 1e-8 && width_change < 0.01 && v_ok && !fit.degenerate,
        format!(
            "{} n = {} T = {}: norm drift {drift:.2e}, width change {:.2e}, velocity {:.6} vs {expected:.6} ({:+.2e} rel), displacement {:.3}",
            spec.family,
            grid.n,
            cfg.run.t_final,
            width_change,
            fit.velocity,
            if expected != 0.0 { fit.velocity / expected - 1.0 } else { fit.velocity },
            last.centroid - first.centroid
        ),
    ));
    if cfg.checks.scheme {
        scheme_checks(cfg, &p, &spec, &mut report)?;
    }
    Ok(report)
}

/// Norm conservation on random data, time reversal and dt convergence.
fn scheme_checks(cfg: &ScenarioConfig, p: &PhysicalParams, spec: &SolitonSpec, report: &mut RunReport) -> Result<(), RunError> {
    let n = cfg.checks.scheme_n;
    let base = evolution_config(cfg);
    let coupled = EvolutionConfig { mode: Mode::Coupled, ..base };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let noise_grid = Arc::new(make_grid(1, n, 20.0, None).context("scheme checks")?);
    let psi: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    let phi: Vec<f64> = (0..n).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 0.1 * z }).collect();
    let noisy = FieldState::new(0.0, psi, phi.clone(), phi, *p, noise_grid.clone()).context("scheme checks")?;
    let mut worst_rate: f64 = 0.0;
    for mode in [Mode::Coupled, Mode::Choquard] {
        let mut st = Stepper::new(noise_grid.clone(), *p, EvolutionConfig { mode, ..base }).context("norm check")?;
        let dt = st.dt_limit();
        let traj = evolve(&noisy, 1.0, dt, &mut st, &ObserverConfig { stride: usize::MAX, snapshot_stride: 0 })
            .context("norm check")?;
        worst_rate = worst_rate.max((traj.final_state.norm() - noisy.norm()).abs() / noisy.norm());
    }

    let field = AnalyticField::new(*spec, *p, 0.0).context("scheme checks")?;
    let grid = Arc::new(make_grid(1, n, cfg.grid.widths * field.width(), None).context("scheme checks")?);
    let mut st = Stepper::new(grid.clone(), *p, coupled).context("reversal")?;
    let (_, dt) = plan_steps(cfg.checks.reverse_t, st.dt_limit()).context("reversal")?;
    let s0 = analytic_initial_state(&field, grid.clone(), dt).context("reversal")?;
    let quiet = ObserverConfig { stride: usize::MAX, snapshot_stride: 0 };
    let fwd = evolve(&s0, cfg.checks.reverse_t, dt, &mut st, &quiet).context("reversal")?;
    let mut end = fwd.final_state.clone();
    st.prepare_reversal(&mut end, fwd.dt);
    let back = evolve(&end, cfg.checks.reverse_t, -fwd.dt, &mut st, &quiet).context("reversal")?;
    let reversal = max_abs_diff_c(&back.final_state.psi, &s0.psi);

    let horizon = 1.0;
    let dt0 = Stepper::new(grid.clone(), *p, coupled).context("convergence")?.dt_limit();
    let run = |dt_max: f64| -> Result<FieldState, RunError> {
        let mut st = Stepper::new(grid.clone(), *p, coupled).context("convergence")?;
        let (_, dt) = plan_steps(horizon, dt_max).context("convergence")?;
        let s0 = analytic_initial_state(&field, grid.clone(), dt).context("convergence")?;
        Ok(evolve(&s0, horizon, dt, &mut st, &quiet).context("convergence")?.final_state)
    };
    let reference = run(dt0 / 64.0)?;
    let e1 = max_abs_diff_c(&run(dt0)?.psi, &reference.psi);
    let e2 = max_abs_diff_c(&run(dt0 / 2.0)?.psi, &reference.psi);
    let ratio = e1 / e2;
    report.metric("scheme.norm_drift_per_time", worst_rate);
    report.metric("scheme.reversal_max_abs", reversal);
    report.metric("scheme.dt_error_ratio", ratio);
    report.criteria.push(Criterion::new(
        9,
        "scheme properties",
        worst_rate < 1e-10 && reversal < 1e-6 && (ratio - 4.0).abs() <= 0.5,
        format!(
            "norm drift {worst_rate:.2e} per unit time on random data (both modes); reversal over T = {} returns psi to {reversal:.2e}; dt-halving error ratio {ratio:.3} ({e1:.2e} -> {e2:.2e})",
            cfg.checks.reverse_t
        ),
    ));
    Ok(())
}

pub fn free_spreading(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let p = params(cfg);
    let mut report = RunReport::new(cfg.scenario.name(), cfg.to_text());
    let spec = build_spec(cfg, &p)?;
    require_valid(&p, &spec, &mut report)?;
    let field = AnalyticField::new(spec, p, cfg.soliton.x0).context("soliton")?;
    let grid = family_grid(cfg, &field)?;
    let t_final = cfg.run.t_final;
    let sol = run_family(cfg, &field, grid, t_final, cfg.run.stride, &mut report, "soliton")?;

    let sigma0 = if cfg.free.sigma0 > 0.0 { cfg.free.sigma0 } else { sol.observables[0].width };
    let big_m = p.electron_mass;
    let fgrid = Arc::new(make_grid(1, cfg.free.n, cfg.free.length, None).context("free grid")?);
    let norm = (2.0 * PI * sigma0 * sigma0).powf(-0.25);
    let psi: Vec<Complex64> = fgrid
        .coords()
        .iter()
        .map(|x| Complex64::new(norm * (-x * x / (4.0 * sigma0 * sigma0)).exp(), 0.0))
        .collect();
    let zeros = vec![0.0; fgrid.points()];
    let initial = FieldState::new(0.0, psi, zeros.clone(), zeros, p, fgrid.clone()).context("free packet")?;
    let econf = EvolutionConfig { mode: Mode::Coupled, source_coupling: false, ..evolution_config(cfg) };
    let mut stepper = Stepper::new(fgrid.clone(), p, econf).context("free packet")?;
    let (_, dt) = plan_steps(t_final, stepper.dt_limit()).context("free packet")?;
    let t_double = 2.0 * big_m * sigma0 * sigma0 * 3f64.sqrt();
    let stride = ((t_double / 20.0 / dt).floor() as usize).max(1);
    let free = evolve(&initial, t_final, dt, &mut stepper, &ObserverConfig { stride, snapshot_stride: cfg.run.snapshot_every })
        .context("free packet")?;
    record_trajectory(&mut report, "free", &initial, &free);

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for r in free.observables.iter().filter(|r| r.t <= t_double) {
        let law = free_spreading_width(sigma0, big_m, r.t).context("free law")?;
        worst = worst.max((r.width / law - 1.0).abs());
        checked += 1;
    }
    let ratio = spreading_ratio(&sol.observables, &free.observables, t_final).context("spreading ratio")?;
    let free_factor = free.observables.last().unwrap().width / sigma0;
    report.metric("free.law_worst_rel", worst);
    report.metric("free.sigma0", sigma0);
    report.metric("spreading_ratio", ratio);
    report.criteria.push(Criterion::new(
        6,
        "localization contrast",
        checked >= 5 && worst < 0.005 && ratio < 0.5,
        format!(
            "free Gaussian sigma0 = {sigma0:.6} follows sigma(t) to {worst:.2e} over {checked} records up to doubling (t = {t_double:.4}); \
             free width factor at T = {t_final}: {free_factor:.3}; spreading ratio {ratio:.4}"
        ),
    ));
    Ok(report)
}

pub fn choquard_stationary(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let p = params(cfg);
    let mut report = RunReport::new(cfg.scenario.name(), cfg.to_text());
    let spec = build_spec(cfg, &p)?;
    require_valid(&p, &spec, &mut report)?;
    let velocity = spec.velocity(&p);
    if velocity != 0.0 {
        report.findings.push(format!("{} moves at {velocity}; a stationary Choquard state needs velocity 0", spec.family));
    }
    let field = AnalyticField::new(spec, p, 0.0).context("soliton")?;
    let grid = family_grid(cfg, &field)?;
    let h = choose_step(&field, 0.0).context("Choquard residual")?;
    let (_, audit) = choquard_residual(&field, &p, &grid, 0.0, h).context("Choquard residual")?;

    let ccfg = ScenarioConfig { run: super::config::RunSection { mode: Mode::Choquard, ..cfg.run.clone() }, ..cfg.clone() };
    let traj = run_family(&ccfg, &field, grid, cfg.run.t_final, cfg.run.stride, &mut report, "choquard")?;
    let first = &traj.observables[0];
    let last = traj.observables.last().unwrap();
    let width_rel = (last.width / first.width - 1.0).abs();
    let initial = &report.snapshots.iter().find(|(n, _)| n == "choquard_initial").expect("initial snapshot").1;
    let modulus = |s: &FieldState| s.psi.iter().map(|z| z.norm()).collect::<Vec<_>>();
    let profile = max_abs_diff(&modulus(&traj.final_state), &modulus(initial));
    let ratio = audit.phi_min_ratio;
    report.metric("width_rel_change", width_rel);
    report.metric("profile_max_abs", profile);
    report.metric("phi_min_ratio", ratio);
    report.metric("slaved_vs_sampled_phi", audit.slaved_vs_sampled_phi);
    report.findings.push(format!(
        "coefficient audit: slaved-field depth under 2M/v^2 is {ratio:.6} x the printed-coefficient depth; the printed coefficient leaves a residual equal to {:.4} of its own potential term",
        audit.printed_residual_over_potential
    ));
    report.criteria.push(Criterion::new(
        8,
        "Choquard stationarity",
        width_rel < 1e-4 && profile < 1e-4 && (ratio - 2.0).abs() < 1e-6,
        format!(
            "T = {}: width change {width_rel:.2e}, |psi| profile change {profile:.2e}; convention ratio {ratio:.6}; static phi vs sampled {:.2e}, dynamical residual {:.2e}",
            cfg.run.t_final, audit.slaved_vs_sampled_phi, audit.dynamical.rel
        ),
    ));
    report.choquard = Some(audit);
    Ok(report)
}

fn smooth_source(grid: &Grid, kmax: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let x = grid.coords();
    let base = 2.0 * PI / grid.length;
    let modes: Vec<Vec<(f64, f64)>> = (0..grid.dim)
        .map(|_| (1..=kmax).map(|k| (rng.gen_range(0.1..0.3) / k as f64, rng.gen_range(0.0..2.0 * PI))).collect())
        .collect();
    (0..grid.points())
        .map(|idx| {
            let ix = grid.unflatten(idx);
            let mut s = 1.0;
            for (a, axis) in modes.iter().enumerate() {
                for (k, (amp, phase)) in axis.iter().enumerate() {
                    s += amp * ((k + 1) as f64 * base * x[ix[a]] + phase).cos();
                }
            }
            s
        })
        .collect()
}

pub fn yukawa_oracle(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let p = params(cfg);
    let mut report = RunReport::new(cfg.scenario.name(), cfg.to_text());
    let m = p.higgs_mass;
    let length = if cfg.oracle.length > 0.0 { cfg.oracle.length } else { 40.0 / m };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut details = Vec::new();
    let mut ok = true;
    for (dim, n) in [(1, cfg.oracle.n1), (3, cfg.oracle.n3)] {
        let grid = make_grid(dim, n, length, None).context("oracle grid")?;
        let source = smooth_source(&grid, cfg.oracle.kmax, &mut rng);
        let spectral = yukawa_invert(&source, m, &grid).context("spectral inverse")?;
        let direct = yukawa_convolve_direct(&source, m, &grid).context("direct convolution")?;
        let rel = max_abs_diff(&spectral, &direct) / max_abs(&direct);
        let s0 = 2.5;
        let flat = yukawa_invert(&vec![s0; grid.points()], m, &grid).context("constant source")?;
        let exact = -s0 / (m * m);
        let const_rel = flat.iter().map(|f| (f / exact - 1.0).abs()).fold(0.0, f64::max);
        ok &= rel < 1e-6 && const_rel < 1e-12;
        report.metric(&format!("oracle.{dim}d.rel_max_abs"), rel);
        report.metric(&format!("oracle.{dim}d.constant_rel"), const_rel);
        details.push(format!("{dim}D n = {n}: spectral vs direct {rel:.2e}, constant source {const_rel:.1e}"));
    }
    report.criteria.push(Criterion::new(7, "Yukawa oracle", ok, format!("L = {length}; {}", details.join("; "))));
    Ok(report)
}

/// Share of the norm within `radius` of `centre` along x.
fn core_fraction(state: &FieldState, centre: f64, radius: f64) -> f64 {
    let grid = &state.grid;
    let x = grid.coords();
    let (mut inside, mut total) = (0.0, 0.0);
    for (idx, z) in state.psi.iter().enumerate() {
        let w = z.norm_sqr();
        total += w;
        if grid.min_image(x[grid.unflatten(idx)[0]] - centre).abs() < radius {
            inside += w;
        }
    }
    inside / total
}

pub fn perturbation_stability(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let p = params(cfg);
    let mut report = RunReport::new(cfg.scenario.name(), cfg.to_text());
    let spec = build_spec(cfg, &p)?;
    require_valid(&p, &spec, &mut report)?;
    let field = AnalyticField::new(spec, p, cfg.soliton.x0).context("soliton")?;
    let grid = family_grid(cfg, &field)?;
    let econf = evolution_config(cfg);
    let attempt = || -> Result<(FieldState, Trajectory), RunError> {
        let mut stepper = Stepper::new(grid.clone(), p, econf).context("perturbation run")?;
        let dt_max = if cfg.run.dt > 0.0 { cfg.run.dt } else { stepper.dt_limit() };
        let (_, dt) = plan_steps(cfg.run.t_final, dt_max).context("perturbation run")?;
        let clean = analytic_initial_state(&field, grid.clone(), dt).context("perturbation run")?;
        let kicked =
            perturb(&clean, cfg.perturbation.kind, cfg.perturbation.strength, cfg.seed).context("perturbation")?;
        let observer = ObserverConfig { stride: cfg.run.stride, snapshot_stride: cfg.run.snapshot_every };
        let traj = evolve(&kicked, cfg.run.t_final, dt, &mut stepper, &observer).context("perturbation run")?;
        Ok((kicked, traj))
    };
    let (kicked, first) = attempt()?;
    let (_, second) = attempt()?;
    let deterministic = first.observables == second.observables && first.final_state.psi == second.final_state.psi;
    record_trajectory(&mut report, "perturbed", &kicked, &first);
    let o = &first.observables;
    let (w0, w1) = (o[0].width, o.last().unwrap().width);
    let (wmin, wmax) = o.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.width), hi.max(r.width)));
    let peak_ratio = o.last().unwrap().peak_abs / o[0].peak_abs;
    let last = o.last().unwrap();
    let core = core_fraction(&first.final_state, last.peak_pos, 5.0 * w0);
    let survived = core > 0.9 && peak_ratio > 0.8;
    let classification = if survived { "survived" } else { "dispersed" };
    report.metric("width_final_over_initial", w1 / w0);
    report.metric("peak_final_over_initial", peak_ratio);
    report.metric("core_fraction", core);
    report.metric("norm_drift", (o.last().unwrap().norm - o[0].norm).abs());
    report.findings.push(format!(
        "{} strength {} seed {}: {classification} (width {w0:.5} -> {w1:.5}, range [{wmin:.5}, {wmax:.5}], peak ratio {peak_ratio:.4}, \
         norm within 5 initial widths of the peak {core:.4})",
        cfg.perturbation.kind.name(),
        cfg.perturbation.strength,
        cfg.seed
    ));
    report.criteria.push(Criterion::new(
        10,
        "perturbation harness",
        deterministic,
        format!("{classification}; repeated run with seed {} identical: {deterministic}", cfg.seed),
    ));
    Ok(report)
}

pub fn param_sweep(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let mut report = RunReport::new(cfg.scenario.name(), cfg.to_text());
    let configs: Vec<ScenarioConfig> = cfg
        .sweep
        .values
        .iter()
        .map(|value| {
            let mut raw = RawConfig::parse(&cfg.to_text())?;
            raw.set("scenario", cfg.sweep.scenario.name());
            raw.set(&cfg.sweep.key, value);
            ScenarioConfig::from_raw(raw)
        })
        .collect::<Result<_, _>>()?;
    let results: Vec<Result<RunReport, RunError>> = configs.par_iter().map(run_scenario).collect();
    for ((value, child_cfg), result) in cfg.sweep.values.iter().zip(&configs).zip(results) {
        let mut child = match result {
            Ok(r) => r,
            Err(e) if e.exit_code() == super::EXIT_CONFIG => {
                let mut r = RunReport::new(cfg.sweep.scenario.name(), child_cfg.to_text());
                r.status = "FAILED".into();
                r.error = Some(e.to_string());
                r
            }
            Err(e) => return Err(e),
        };
        report.steps += child.steps;
        report.findings.push(format!("{} = {value}: {}", cfg.sweep.key, child.status));
        child.scenario = format!("{} [{} = {value}]", child.scenario, cfg.sweep.key);
        report.children.push(child);
    }
    Ok(report)
}
