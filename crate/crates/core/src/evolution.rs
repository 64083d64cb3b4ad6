//! Time integration of the coupled matter/scalar system and of its
//! Choquard reduction.
//!
//! The matter field advances by a symmetric split step: half a potential
//! phase, an exact kinetic step in the spectrum, half a potential phase with
//! the updated scalar field. In coupled mode the scalar field advances by
//! explicit leapfrog, which needs `phi_prev` one step back; in Choquard mode
//! it is recomputed from `|psi|^2` whenever it is used.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticField;
use crate::diagnostics::{measure, ObservableRecord};
use crate::error::{LabError, Result};
use crate::model::{FieldState, Grid, PhysicalParams};
use crate::residual::{slaved_phi, CoefficientConvention};
use crate::spectral::{Transform, YukawaSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    #[serde(rename = "coupled")]
    Coupled,
    #[serde(rename = "choquard")]
    Choquard,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Coupled => "coupled",
            Mode::Choquard => "choquard",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "coupled" => Some(Mode::Coupled),
            "choquard" => Some(Mode::Choquard),
            _ => None,
        }
    }
}

/// `|dt| <= min(cfl * h, higgs / m, dispersive * M * h^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityGuard {
    pub cfl: f64,
    pub higgs: f64,
    pub dispersive: f64,
}

impl Default for StabilityGuard {
    fn default() -> Self {
        Self { cfl: 0.5, higgs: 0.5, dispersive: 1.0 }
    }
}

impl StabilityGuard {
    pub fn limit(&self, grid: &Grid, params: &PhysicalParams) -> f64 {
        let h = grid.spacing;
        (self.cfl * h).min(self.higgs / params.higgs_mass).min(self.dispersive * params.electron_mass * h * h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub mode: Mode,
    /// Switches the `|psi|^2` source off (the `v -> infinity` limit).
    pub source_coupling: bool,
    /// Slaving prefactor in Choquard mode.
    pub convention: CoefficientConvention,
    pub guard: StabilityGuard,
    /// Abort once `max |psi|` exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Coupled,
            source_coupling: true,
            convention: CoefficientConvention::Dynamical,
            guard: StabilityGuard::default(),
            blowup_factor: 1e3,
        }
    }
}

impl EvolutionConfig {
    pub fn choquard(convention: CoefficientConvention) -> Self {
        Self { mode: Mode::Choquard, convention, ..Self::default() }
    }

    pub fn free() -> Self {
        Self { source_coupling: false, ..Self::default() }
    }

    fn source_factor(&self, params: &PhysicalParams) -> f64 {
        match (self.source_coupling, self.mode) {
            (false, _) => 0.0,
            (true, Mode::Coupled) => params.source_coupling(),
            (true, Mode::Choquard) => self.convention.source_factor(params),
        }
    }
}

/// Reusable integrator for one grid, parameter set and configuration.
pub struct Stepper {
    grid: Arc<Grid>,
    params: PhysicalParams,
    config: EvolutionConfig,
    transform: Transform,
    /// Lattice `|k|^2`; the kinetic factor adds the transverse `gamma^2 + epsilon^2`.
    k2: Vec<f64>,
    kinetic: Vec<Complex64>,
    kinetic_dt: f64,
    yukawa: YukawaSolver,
    buffer: Vec<Complex64>,
    source: Vec<f64>,
    reference_peak: f64,
}

impl Stepper {
    pub fn new(grid: Arc<Grid>, params: PhysicalParams, config: EvolutionConfig) -> Result<Self> {
        let k2 = grid.k_squared();
        Ok(Self {
            transform: Transform::new(&grid),
            yukawa: YukawaSolver::new(&grid, params.higgs_mass)?,
            buffer: vec![Complex64::default(); grid.points()],
            source: vec![0.0; grid.points()],
            k2,
            kinetic: Vec::new(),
            kinetic_dt: f64::NAN,
            grid,
            params,
            config,
            reference_peak: f64::NAN,
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    pub fn dt_limit(&self) -> f64 {
        self.config.guard.limit(&self.grid, &self.params)
    }

    pub fn check_dt(&self, dt: f64) -> Result<()> {
        let limit = self.dt_limit();
        if !(dt.abs() <= limit) || dt == 0.0 {
            return Err(LabError::StabilityGuard { dt, limit });
        }
        Ok(())
    }

    /// Peak against which blow-up is judged; taken from the first stepped state otherwise.
    pub fn set_reference_peak(&mut self, peak: f64) {
        self.reference_peak = peak;
    }

    fn kinetic_factors(&mut self, dt: f64) {
        if self.kinetic_dt != dt {
            let c = dt / (2.0 * self.params.electron_mass);
            let kt = self.grid.transverse_k2();
            self.kinetic = self.k2.iter().map(|k2| Complex64::from_polar(1.0, -(k2 + kt) * c)).collect();
            self.kinetic_dt = dt;
        }
    }

    fn kinetic_step(&mut self, psi: &mut [Complex64], dt: f64) {
        self.kinetic_factors(dt);
        self.transform.forward(psi);
        for (z, f) in psi.iter_mut().zip(&self.kinetic) {
            *z *= f;
        }
        self.transform.inverse(psi);
    }

    fn potential_step(&self, psi: &mut [Complex64], phi: &[f64], dt: f64) {
        let c = -self.params.electron_mass * dt;
        for (z, f) in psi.iter_mut().zip(phi) {
            *z *= Complex64::from_polar(1.0, c * f);
        }
    }

    fn fill_source(&mut self, psi: &[Complex64]) {
        let c = self.config.source_factor(&self.params);
        for (s, z) in self.source.iter_mut().zip(psi) {
            *s = c * z.norm_sqr();
        }
    }

    /// Scalar field slaved to `psi` under the configured convention.
    pub fn slaved(&mut self, psi: &[Complex64]) -> Result<Vec<f64>> {
        self.fill_source(psi);
        let mut out = vec![0.0; psi.len()];
        self.yukawa.solve_into(&self.source, &mut out)?;
        Ok(out)
    }

    /// Leapfrog update `2 phi - phi_prev + dt^2 (Lap phi - m^2 phi - source)`.
    fn leapfrog(&mut self, phi: &[f64], phi_prev: &[f64], psi: &[Complex64], dt: f64) -> Vec<f64> {
        self.fill_source(psi);
        for (b, &f) in self.buffer.iter_mut().zip(phi) {
            *b = Complex64::new(f, 0.0);
        }
        self.transform.forward(&mut self.buffer);
        for (b, k2) in self.buffer.iter_mut().zip(&self.k2) {
            *b *= -k2;
        }
        self.transform.inverse(&mut self.buffer);
        let m2 = self.params.higgs_mass * self.params.higgs_mass;
        (0..phi.len())
            .map(|j| 2.0 * phi[j] - phi_prev[j] + dt * dt * (self.buffer[j].re - m2 * phi[j] - self.source[j]))
            .collect()
    }

    fn check_health(&mut self, state: &FieldState) -> Result<()> {
        let peak = state.max_abs_psi();
        if !peak.is_finite() || state.phi.iter().any(|f| !f.is_finite()) {
            return Err(LabError::BlowUp { t: state.t, reason: "non-finite field values".into() });
        }
        if !self.reference_peak.is_finite() || self.reference_peak <= 0.0 {
            return Ok(());
        }
        if peak > self.config.blowup_factor * self.reference_peak {
            return Err(LabError::BlowUp {
                t: state.t,
                reason: format!("max |psi| = {peak:.3e} exceeds {} x initial {:.3e}", self.config.blowup_factor, self.reference_peak),
            });
        }
        Ok(())
    }

    /// Advance by one step of signed size `dt`.
    pub fn step(&mut self, state: &mut FieldState, dt: f64) -> Result<()> {
        self.check_dt(dt)?;
        state.grid.check_len(state.psi.len())?;
        if !self.reference_peak.is_finite() {
            self.reference_peak = state.max_abs_psi();
        }
        match self.config.mode {
            Mode::Coupled => {
                let next = self.leapfrog(&state.phi, &state.phi_prev, &state.psi, dt);
                let mut psi = std::mem::take(&mut state.psi);
                self.potential_step(&mut psi, &state.phi, 0.5 * dt);
                self.kinetic_step(&mut psi, dt);
                self.potential_step(&mut psi, &next, 0.5 * dt);
                state.psi = psi;
                state.phi_prev = std::mem::replace(&mut state.phi, next);
            }
            Mode::Choquard => {
                let mut psi = std::mem::take(&mut state.psi);
                let before = self.slaved(&psi)?;
                self.potential_step(&mut psi, &before, 0.5 * dt);
                self.kinetic_step(&mut psi, dt);
                let after = self.slaved(&psi)?;
                self.potential_step(&mut psi, &after, 0.5 * dt);
                state.psi = psi;
                state.phi = after;
                state.phi_prev = before;
            }
        }
        state.t += dt;
        self.check_health(state)
    }

    /// Replace `phi_prev` by the leapfrog value one step ahead so that stepping
    /// with `-dt` retraces the run.
    pub fn prepare_reversal(&mut self, state: &mut FieldState, dt: f64) {
        if self.config.mode == Mode::Coupled {
            state.phi_prev = self.leapfrog(&state.phi, &state.phi_prev, &state.psi, dt);
        }
    }
}

/// One coupled step on a copy of `state`.
pub fn step_coupled(state: &FieldState, dt: f64, config: &EvolutionConfig) -> Result<FieldState> {
    let mut stepper = Stepper::new(state.grid.clone(), state.params, EvolutionConfig { mode: Mode::Coupled, ..*config })?;
    let mut out = state.clone();
    stepper.step(&mut out, dt)?;
    Ok(out)
}

/// One Choquard step on a copy of `state`.
pub fn step_choquard(state: &FieldState, dt: f64, config: &EvolutionConfig) -> Result<FieldState> {
    let mut stepper = Stepper::new(state.grid.clone(), state.params, EvolutionConfig { mode: Mode::Choquard, ..*config })?;
    let mut out = state.clone();
    stepper.step(&mut out, dt)?;
    Ok(out)
}

/// Analytic family sampled at `t = 0`, with `phi_prev` sampled at `-dt`.
pub fn analytic_initial_state(field: &AnalyticField, grid: Arc<Grid>, dt: f64) -> Result<FieldState> {
    field.check_domain(&grid)?;
    let now = field.sample(&grid, 0.0);
    let before = field.sample(&grid, -dt);
    FieldState::new(0.0, now.psi, now.phi, before.phi, field.params, grid)
}

/// `psi` with the scalar field slaved to it and `phi_prev = phi`, i.e. a
/// Taylor start with vanishing `phi_t` and (for the static field) `phi_tt`.
pub fn static_initial_state(
    psi: Vec<Complex64>,
    params: PhysicalParams,
    grid: Arc<Grid>,
    convention: CoefficientConvention,
) -> Result<FieldState> {
    let phi = slaved_phi(&psi, &params, &grid, convention)?;
    FieldState::new(0.0, psi, phi.clone(), phi, params, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverConfig {
    /// Record observables every `stride` steps (and always at the last step).
    pub stride: usize,
    /// Keep a full snapshot every `snapshot_stride` records; 0 keeps none.
    pub snapshot_stride: usize,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self { stride: 1, snapshot_stride: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<FieldState>,
    pub observables: Vec<ObservableRecord>,
    pub steps: usize,
    pub dt: f64,
    pub final_state: FieldState,
}

/// Number of steps and the step actually used to cover `duration` with `|dt|` at most `dt_max`.
pub fn plan_steps(duration: f64, dt_max: f64) -> Result<(usize, f64)> {
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(LabError::RunControl(format!("duration must be >= 0, got {duration}")));
    }
    if !(dt_max.abs() > 0.0) || !dt_max.is_finite() {
        return Err(LabError::RunControl(format!("time step must be non-zero, got {dt_max}")));
    }
    if duration == 0.0 {
        return Ok((0, dt_max));
    }
    let n = (duration / dt_max.abs() - 1e-9).ceil().max(1.0) as usize;
    Ok((n, dt_max.signum() * duration / n as f64))
}

/// Step `initial` over `duration` (sign of `dt` sets the direction).
///
/// `dt` is shrunk to the [`plan_steps`] value so whole steps cover `duration`;
/// a coupled-mode `phi_prev` should be built with that step.
pub fn evolve(
    initial: &FieldState,
    duration: f64,
    dt: f64,
    stepper: &mut Stepper,
    observer: &ObserverConfig,
) -> Result<Trajectory> {
    if observer.stride == 0 {
        return Err(LabError::RunControl("observer stride must be >= 1".into()));
    }
    let (steps, dt) = plan_steps(duration, dt)?;
    let mut state = initial.clone();
    if steps > 0 {
        stepper.check_dt(dt)?;
    }
    let first = measure(&state, None);
    let mut traj = Trajectory {
        times: vec![state.t],
        snapshots: if observer.snapshot_stride > 0 { vec![state.clone()] } else { Vec::new() },
        observables: vec![first],
        steps,
        dt,
        final_state: state.clone(),
    };
    for j in 1..=steps {
        stepper.step(&mut state, dt)?;
        if j % observer.stride == 0 || j == steps {
            let rec = measure(&state, traj.observables.last());
            traj.times.push(state.t);
            traj.observables.push(rec);
            if observer.snapshot_stride > 0 && (traj.times.len() - 1) % observer.snapshot_stride == 0 {
                traj.snapshots.push(state.clone());
            }
        }
    }
    traj.final_state = state;
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbationKind {
    #[serde(rename = "amplitude_noise")]
    AmplitudeNoise,
    #[serde(rename = "phase_noise")]
    PhaseNoise,
    #[serde(rename = "width_rescale")]
    WidthRescale,
}

impl PerturbationKind {
    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::AmplitudeNoise => "amplitude_noise",
            PerturbationKind::PhaseNoise => "phase_noise",
            PerturbationKind::WidthRescale => "width_rescale",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "amplitude_noise" => Some(PerturbationKind::AmplitudeNoise),
            "phase_noise" => Some(PerturbationKind::PhaseNoise),
            "width_rescale" => Some(PerturbationKind::WidthRescale),
            _ => None,
        }
    }
}

/// Trigonometric interpolant of one periodic line at arbitrary coordinates.
fn fourier_resample(line: &[f64], grid: &Grid, at: &[f64]) -> Vec<f64> {
    let n = line.len();
    let mut spec: Vec<Complex64> = line.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut tf = Transform::new(&Grid { dim: 1, ..grid.clone() });
    tf.forward(&mut spec);
    let x0 = -0.5 * grid.length;
    at.iter()
        .map(|&x| {
            let mut acc = spec[0].re;
            for j in 1..n / 2 {
                acc += 2.0 * (spec[j] * Complex64::from_polar(1.0, grid.wavenumbers[j] * (x - x0))).re;
            }
            // split Nyquist term, real on the lattice
            acc += (spec[n / 2] * (grid.nyquist() * (x - x0)).cos()).re;
            acc / n as f64
        })
        .collect()
}

/// Perturbed copy of `state`, rescaled to the original norm.
///
/// * `amplitude_noise`: `psi *= 1 + strength * xi` with `xi` standard normal per point.
/// * `phase_noise`: `psi *= exp(i strength xi)`.
/// * `width_rescale`: the modulus is stretched along x about the centroid by
///   `1 + strength`; the phase is kept pointwise.
pub fn perturb(state: &FieldState, kind: PerturbationKind, strength: f64, seed: u64) -> Result<FieldState> {
    if !(strength >= 0.0) || !strength.is_finite() {
        return Err(LabError::RunControl(format!("perturbation strength must be >= 0, got {strength}")));
    }
    let mut out = state.clone();
    if strength == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        PerturbationKind::AmplitudeNoise => {
            for z in out.psi.iter_mut() {
                let xi: f64 = StandardNormal.sample(&mut rng);
                *z *= 1.0 + strength * xi;
            }
        }
        PerturbationKind::PhaseNoise => {
            for z in out.psi.iter_mut() {
                let xi: f64 = StandardNormal.sample(&mut rng);
                *z *= Complex64::from_polar(1.0, strength * xi);
            }
        }
        PerturbationKind::WidthRescale => {
            let g = &state.grid;
            let centre = measure(state, None).centroid;
            let s = 1.0 + strength;
            let at: Vec<f64> = g.coords().iter().map(|&x| centre + g.min_image(x - centre) / s).collect();
            let stride = g.points() / g.n;
            for off in 0..stride {
                let modulus: Vec<f64> = (0..g.n).map(|i| state.psi[i * stride + off].norm()).collect();
                let stretched = fourier_resample(&modulus, g, &at);
                for (i, r) in stretched.into_iter().enumerate() {
                    let z = &mut out.psi[i * stride + off];
                    *z = Complex64::from_polar(r, z.arg());
                }
            }
        }
    }
    let target = state.norm();
    let now = out.norm();
    if now > 0.0 {
        let c = (target / now).sqrt();
        out.psi.iter_mut().for_each(|z| *z *= c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_grid, SolitonSpec};
    use std::f64::consts::PI;

    fn gaussian_state(n: usize, length: f64, sigma: f64, p: PhysicalParams) -> FieldState {
        let g = Arc::new(make_grid(1, n, length, None).unwrap());
        let psi: Vec<Complex64> = g
            .coords()
            .iter()
            .map(|x| Complex64::new((-x * x / (4.0 * sigma * sigma)).exp(), 0.0) / (2.0 * PI * sigma * sigma).powf(0.25))
            .collect();
        FieldState::new(0.0, psi, vec![0.0; n], vec![0.0; n], p, g).unwrap()
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn guard_rejects_large_steps() {
        let p = PhysicalParams::default();
        let s = gaussian_state(256, 20.0, 1.0, p);
        let lim = EvolutionConfig::default().guard.limit(&s.grid, &p);
        assert!((lim - (20.0f64 / 256.0).powi(2)).abs() < 1e-15);
        let err = step_coupled(&s, 2.0 * lim, &EvolutionConfig::default()).unwrap_err();
        assert!(matches!(err, LabError::StabilityGuard { .. }) && err.is_numerical_abort());
    }

    #[test]
    fn free_gaussian_spreads_by_the_law() {
        let p = PhysicalParams::default();
        let sigma0 = 0.5;
        let s = gaussian_state(2048, 100.0, sigma0, p);
        let mut st = Stepper::new(s.grid.clone(), p, EvolutionConfig::free()).unwrap();
        let dt = st.dt_limit();
        let t_double = 2.0 * sigma0 * sigma0 * 3f64.sqrt();
        let traj = evolve(&s, t_double, dt, &mut st, &ObserverConfig { stride: 10, snapshot_stride: 0 }).unwrap();
        for r in &traj.observables {
            let law = crate::diagnostics::free_spreading_width(sigma0, 1.0, r.t).unwrap();
            assert!((r.width / law - 1.0).abs() < 1e-6, "t={} {} {}", r.t, r.width, law);
        }
        assert!(traj.final_state.phi.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn free_klein_gordon_mode() {
        let p = PhysicalParams::default();
        let g = Arc::new(make_grid(1, 64, 20.0, None).unwrap());
        let k = 2.0 * PI * 2.0 / g.length;
        let w = (k * k + p.higgs_mass * p.higgs_mass).sqrt();
        let x = g.coords();
        let dt = 1e-3;
        // leapfrog is exact for cos(wd t) with 2 (1 - cos(wd dt)) = (w dt)^2
        let wd = (1.0 - 0.5 * (w * dt).powi(2)).acos() / dt;
        assert!((wd / w - 1.0).abs() < 1e-6);
        let phi: Vec<f64> = x.iter().map(|x| (k * x).cos()).collect();
        let prev: Vec<f64> = x.iter().map(|x| (k * x).cos() * (wd * dt).cos()).collect();
        let s = FieldState::new(0.0, vec![Complex64::default(); 64], phi, prev, p, g).unwrap();
        let mut st = Stepper::new(s.grid.clone(), p, EvolutionConfig::default()).unwrap();
        let steps = (10.0 * 2.0 * PI / w / dt).ceil();
        let traj = evolve(&s, steps * dt, dt, &mut st, &ObserverConfig { stride: 100, snapshot_stride: 0 }).unwrap();
        let t = traj.final_state.t;
        let err = traj
            .final_state
            .phi
            .iter()
            .zip(&x)
            .map(|(f, x)| (f - (k * x).cos() * (wd * t).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
        assert!(traj.final_state.max_abs_psi() == 0.0);
    }

    #[test]
    fn zero_duration_and_stride() {
        let p = PhysicalParams::default();
        let s = gaussian_state(128, 20.0, 1.0, p);
        let mut st = Stepper::new(s.grid.clone(), p, EvolutionConfig::default()).unwrap();
        let traj = evolve(&s, 0.0, 1e-3, &mut st, &ObserverConfig { stride: 1, snapshot_stride: 1 }).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.snapshots[0].psi, s.psi);
        let dt = 0.01;
        let a = evolve(&s, 40.0 * dt, dt, &mut st, &ObserverConfig { stride: 2, snapshot_stride: 0 }).unwrap();
        let b = evolve(&s, 40.0 * dt, dt, &mut st, &ObserverConfig { stride: 4, snapshot_stride: 0 }).unwrap();
        assert_eq!((a.times.len() - 1, b.times.len() - 1), (20, 10));
        assert!(a.times.windows(2).all(|w| w[1] > w[0]));
        assert!(evolve(&s, 1.0, dt, &mut st, &ObserverConfig { stride: 0, snapshot_stride: 0 }).is_err());
    }

    #[test]
    fn coupled_run_reverses() {
        let p = PhysicalParams::default();
        let field = AnalyticField::new(SolitonSpec::one_d_b(&p), p, 0.0).unwrap();
        let g = Arc::new(make_grid(1, 512, 40.0, None).unwrap());
        let mut st = Stepper::new(g.clone(), p, EvolutionConfig::default()).unwrap();
        let dt = 0.5 * st.dt_limit();
        let s0 = analytic_initial_state(&field, g, dt).unwrap();
        let fwd = evolve(&s0, 2.0, dt, &mut st, &ObserverConfig { stride: 1000, snapshot_stride: 0 }).unwrap();
        let mut end = fwd.final_state.clone();
        st.prepare_reversal(&mut end, fwd.dt);
        let back = evolve(&end, 2.0, -fwd.dt, &mut st, &ObserverConfig { stride: 1000, snapshot_stride: 0 }).unwrap();
        assert!(max_diff(&back.final_state.psi, &s0.psi) < 1e-9);
        assert!(back.final_state.t.abs() < 1e-9);
    }

    #[test]
    fn choquard_norm_and_convention() {
        let p = PhysicalParams::new(1.0, 1.0, (2.0f64 / 3.0).sqrt());
        let field = AnalyticField::new(SolitonSpec::one_d_b(&p), p, 0.0).unwrap();
        let g = Arc::new(make_grid(1, 512, 80.0, None).unwrap());
        let psi = field.sample(&g, 0.0).psi;
        let mut dyn_st = Stepper::new(g.clone(), p, EvolutionConfig::choquard(CoefficientConvention::Dynamical)).unwrap();
        let mut pr_st = Stepper::new(g.clone(), p, EvolutionConfig::choquard(CoefficientConvention::Printed)).unwrap();
        let s = static_initial_state(psi.clone(), p, g, CoefficientConvention::Dynamical).unwrap();
        let a = dyn_st.slaved(&psi).unwrap();
        let b = pr_st.slaved(&psi).unwrap();
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min(&a) / min(&b) - 2.0).abs() < 1e-12);
        let dt = dyn_st.dt_limit();
        let traj = evolve(&s, 5.0, dt, &mut dyn_st, &ObserverConfig { stride: 100, snapshot_stride: 0 }).unwrap();
        let drift = (traj.final_state.norm() - s.norm()).abs();
        assert!(drift < 1e-10 * 5.0, "{drift}");
    }

    #[test]
    fn blow_up_detected() {
        let p = PhysicalParams::default();
        let mut s = gaussian_state(64, 20.0, 1.0, p);
        let mut st = Stepper::new(s.grid.clone(), p, EvolutionConfig::free()).unwrap();
        st.set_reference_peak(1e-6);
        assert!(matches!(st.step(&mut s, 1e-3), Err(LabError::BlowUp { .. })));
        let mut st = Stepper::new(s.grid.clone(), p, EvolutionConfig::free()).unwrap();
        s.psi[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(st.step(&mut s, 1e-3), Err(LabError::BlowUp { .. })));
    }

    #[test]
    fn perturbations() {
        let p = PhysicalParams::default();
        let field = AnalyticField::new(SolitonSpec::one_d_b(&p), p, 0.0).unwrap();
        let g = Arc::new(make_grid(1, 1024, 60.0, None).unwrap());
        let s = analytic_initial_state(&field, g, 1e-3).unwrap();
        for kind in [PerturbationKind::AmplitudeNoise, PerturbationKind::PhaseNoise, PerturbationKind::WidthRescale] {
            assert_eq!(perturb(&s, kind, 0.0, 7).unwrap().psi, s.psi);
            let a = perturb(&s, kind, 0.01, 7).unwrap();
            let b = perturb(&s, kind, 0.01, 7).unwrap();
            assert_eq!(a.psi, b.psi);
            assert!((a.norm() - s.norm()).abs() < 1e-12);
            assert!(max_diff(&a.psi, &s.psi) > 0.0);
        }
        assert_ne!(
            perturb(&s, PerturbationKind::AmplitudeNoise, 0.01, 1).unwrap().psi,
            perturb(&s, PerturbationKind::AmplitudeNoise, 0.01, 2).unwrap().psi
        );
        let w0 = measure(&s, None).width;
        let wide = perturb(&s, PerturbationKind::WidthRescale, 0.1, 0).unwrap();
        assert!((measure(&wide, None).width / w0 - 1.1).abs() < 1e-6);
        assert!(perturb(&s, PerturbationKind::PhaseNoise, -1.0, 0).is_err());
    }
}
