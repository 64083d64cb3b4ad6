//! Observables of lattice fields and trajectories.
//!
//! On 3D lattices the moments are taken along x, the direction of motion,
//! using the density marginalised over y and z.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{FieldState, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub t: f64,
    pub norm: f64,
    /// First moment of `|psi|^2`, unwrapped across the periodic boundary.
    pub centroid: f64,
    /// Square root of the second central moment.
    pub width: f64,
    /// Sub-grid location of `max |psi|`, unwrapped like the centroid.
    pub peak_pos: f64,
    pub peak_abs: f64,
    pub phi_min: f64,
    /// `max |phi| < M`.
    pub valid: bool,
}

/// Density along x (marginal over the other axes), weighted by the cell volume.
fn x_density(state: &FieldState) -> Vec<f64> {
    let g = &state.grid;
    let per_line = g.points() / g.n;
    let dv = g.cell_volume();
    state.psi.chunks_exact(per_line).map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>() * dv).collect()
}

/// Shift `x` by a multiple of `length` to land nearest `reference`.
pub fn unwrap_near(x: f64, reference: f64, length: f64) -> f64 {
    x - length * ((x - reference) / length).round()
}

fn moments(rho: &[f64], grid: &Grid) -> (f64, f64) {
    let x = grid.coords();
    let total: f64 = rho.iter().sum();
    if !(total > 0.0) {
        return (0.0, 0.0);
    }
    // circular mean as the reference, then linear moments about it
    let k = 2.0 * std::f64::consts::PI / grid.length;
    let (s, c) = rho.iter().zip(&x).fold((0.0, 0.0), |(s, c), (r, xi)| (s + r * (k * xi).sin(), c + r * (k * xi).cos()));
    let reference = s.atan2(c) / k;
    let shift: f64 = rho.iter().zip(&x).map(|(r, xi)| r * grid.min_image(xi - reference)).sum::<f64>() / total;
    let centre = reference + shift;
    let var: f64 = rho.iter().zip(&x).map(|(r, xi)| r * grid.min_image(xi - centre).powi(2)).sum::<f64>() / total;
    (grid.min_image(centre), var.sqrt())
}

/// Parabolic refinement of the `|psi|` maximum along x.
fn peak(state: &FieldState) -> (f64, f64) {
    let g = &state.grid;
    let (imax, amax) = state
        .psi
        .iter()
        .enumerate()
        .map(|(j, z)| (j, z.norm()))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let stride = g.points() / g.n;
    let ix = g.unflatten(imax)[0];
    let at = |i: usize| state.psi[i * stride + imax % stride].norm();
    let (fm, f0, fp) = (at((ix + g.n - 1) % g.n), amax, at((ix + 1) % g.n));
    let denom = fm - 2.0 * f0 + fp;
    let delta = if denom < 0.0 { (0.5 * (fm - fp) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let x = -0.5 * g.length + (ix as f64 + delta) * g.spacing;
    (g.min_image(x), amax)
}

/// Observables of one state. `previous` supplies the unwrapping reference.
pub fn measure(state: &FieldState, previous: Option<&ObservableRecord>) -> ObservableRecord {
    let g = &state.grid;
    let rho = x_density(state);
    let (mut centroid, width) = moments(&rho, g);
    let (mut peak_pos, peak_abs) = peak(state);
    if let Some(p) = previous {
        centroid = unwrap_near(centroid, p.centroid, g.length);
        peak_pos = unwrap_near(peak_pos, p.peak_pos, g.length);
    }
    let phi_min = state.phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let phi_max_abs = state.phi.iter().map(|f| f.abs()).fold(0.0, f64::max);
    ObservableRecord {
        t: state.t,
        norm: state.norm(),
        centroid,
        width,
        peak_pos,
        peak_abs,
        phi_min,
        valid: phi_max_abs < state.params.electron_mass,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityFit {
    pub velocity: f64,
    pub stderr: f64,
    pub displacement: f64,
    /// Displacement below three grid spacings: the slope is noise-dominated.
    pub degenerate: bool,
}

pub const MIN_FIT_RECORDS: usize = 5;

/// Least-squares slope of the unwrapped peak position against time.
pub fn fit_velocity(records: &[ObservableRecord], spacing: f64) -> Result<VelocityFit> {
    fit_velocity_by(records, spacing, |r| r.peak_pos)
}

/// Least-squares slope of any position observable against time.
pub fn fit_velocity_by(
    records: &[ObservableRecord],
    spacing: f64,
    position: impl Fn(&ObservableRecord) -> f64,
) -> Result<VelocityFit> {
    if records.len() < MIN_FIT_RECORDS {
        return Err(LabError::DegenerateFit(format!(
            "{} records, at least {MIN_FIT_RECORDS} needed",
            records.len()
        )));
    }
    let n = records.len() as f64;
    let tm = records.iter().map(|r| r.t).sum::<f64>() / n;
    let xm = records.iter().map(&position).sum::<f64>() / n;
    let stt: f64 = records.iter().map(|r| (r.t - tm).powi(2)).sum();
    if !(stt > 0.0) {
        return Err(LabError::DegenerateFit("all records share one time".into()));
    }
    let velocity = records.iter().map(|r| (r.t - tm) * (position(r) - xm)).sum::<f64>() / stt;
    let sse: f64 = records.iter().map(|r| (position(r) - xm - velocity * (r.t - tm)).powi(2)).sum();
    let stderr = (sse / (n - 2.0) / stt).sqrt();
    let (lo, hi) = records
        .iter()
        .map(&position)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let displacement = hi - lo;
    Ok(VelocityFit { velocity, stderr, displacement, degenerate: displacement < 3.0 * spacing })
}

/// Width of a free Gaussian whose density has standard deviation `sigma0` at `t = 0`.
pub fn free_spreading_width(sigma0: f64, big_m: f64, t: f64) -> Result<f64> {
    if !(sigma0 > 0.0) {
        return Err(LabError::InvalidSpec(format!("sigma0 must be positive, got {sigma0}")));
    }
    Ok(sigma0 * (1.0 + (t / (2.0 * big_m * sigma0 * sigma0)).powi(2)).sqrt())
}

/// Width at time `t`, linearly interpolated between records.
pub fn width_at(records: &[ObservableRecord], t: f64) -> Result<f64> {
    let first = records.first().ok_or_else(|| LabError::SpanMismatch("empty trajectory".into()))?;
    let last = records.last().unwrap();
    let tol = 1e-9 * t.abs().max(1.0);
    if t < first.t - tol || t > last.t + tol {
        return Err(LabError::SpanMismatch(format!("t = {t} outside [{}, {}]", first.t, last.t)));
    }
    let j = records.partition_point(|r| r.t < t);
    if j == 0 {
        return Ok(first.width);
    }
    if j == records.len() {
        return Ok(last.width);
    }
    let (a, b) = (&records[j - 1], &records[j]);
    let w = (t - a.t) / (b.t - a.t);
    Ok(a.width + w * (b.width - a.width))
}

/// `(w_sol(T)/w_sol(0)) / (w_free(T)/w_free(0))`; well below 1 means the
/// soliton holds its shape while the free packet spreads.
pub fn spreading_ratio(soliton: &[ObservableRecord], free: &[ObservableRecord], t: f64) -> Result<f64> {
    for (name, traj) in [("soliton", soliton), ("free", free)] {
        match traj.first() {
            Some(r) if r.t.abs() <= 1e-12 => {}
            _ => return Err(LabError::SpanMismatch(format!("{name} trajectory does not start at t = 0"))),
        }
    }
    let s = width_at(soliton, t)? / soliton[0].width;
    let f = width_at(free, t)? / free[0].width;
    Ok(s / f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{sample_solution, AnalyticField};
    use crate::model::{make_grid, PhysicalParams, SolitonSpec};
    use num_complex::Complex64;
    use std::sync::Arc;

    fn state_from(spec: SolitonSpec, p: PhysicalParams, grid: Grid, x0: f64) -> FieldState {
        let s = AnalyticField::new(spec, p, x0).unwrap().sample(&grid, 0.0);
        FieldState::new(0.0, s.psi, s.phi.clone(), s.phi, p, Arc::new(grid)).unwrap()
    }

    fn record(t: f64, x: f64) -> ObservableRecord {
        ObservableRecord { t, norm: 1.0, centroid: x, width: 1.0, peak_pos: x, peak_abs: 1.0, phi_min: 0.0, valid: true }
    }

    // (pi^2 - 6)/12, variance of a sech^4 density with unit argument
    const SECH4_VARIANCE_K1: f64 = 0.322_467_033_424_113;

    #[test]
    fn one_d_b_norm_and_width() {
        let p = PhysicalParams::default();
        let g = make_grid(1, 4096, 80.0, None).unwrap();
        let r = measure(&state_from(SolitonSpec::one_d_b(&p), p, g, 0.0), None);
        let k = 4.0 / 3.0;
        assert!((r.norm - 1.0).abs() < 1e-8);
        assert!((r.width - (SECH4_VARIANCE_K1).sqrt() / k).abs() < 1e-6, "{}", r.width);
        assert!(r.centroid.abs() < 1e-10 && r.peak_pos.abs() < 1e-10);
        assert!((r.phi_min + 16.0 / 3.0).abs() < 1e-9);
        assert!(!r.valid);
    }

    #[test]
    fn sech_envelope_width() {
        let p = PhysicalParams::default();
        let s = SolitonSpec::three_d_a_with_alpha(&p, 2.0, 0.0, 0.0);
        let g = make_grid(1, 4096, 40.0, None).unwrap();
        let r = measure(&state_from(s, p, g, 0.0), None);
        let expect = std::f64::consts::PI / (12f64.sqrt() * 2.0);
        assert!((r.width - expect).abs() < 1e-6, "{} {}", r.width, expect);
    }

    #[test]
    fn uniform_density_width() {
        let g = Arc::new(make_grid(1, 256, 10.0, None).unwrap());
        let psi = vec![Complex64::new(0.1, 0.0); 256];
        let s = FieldState::new(0.0, psi, vec![0.0; 256], vec![0.0; 256], PhysicalParams::default(), g).unwrap();
        let r = measure(&s, None);
        assert!((r.width - 10.0 / 12f64.sqrt()).abs() < 0.02, "{}", r.width);
    }

    #[test]
    fn translation_covariance_across_the_edge() {
        let p = PhysicalParams::default();
        let g = make_grid(1, 2048, 60.0, None).unwrap();
        let base = measure(&state_from(SolitonSpec::one_d_b(&p), p, g.clone(), 0.0), None);
        for j in [113, 1000, -589] {
            let shift = j as f64 * g.spacing;
            let r = measure(&state_from(SolitonSpec::one_d_b(&p), p, g.clone(), shift), Some(&record(0.0, shift)));
            assert!((r.centroid - shift).abs() < 1e-10, "{} {}", r.centroid, shift);
            assert!((r.peak_pos - shift).abs() < 1e-10, "{}", r.peak_pos);
            assert!((r.width - base.width).abs() < 1e-10);
            assert!((r.norm - base.norm).abs() < 1e-10);
            assert!((r.phi_min - base.phi_min).abs() < 1e-10);
        }
    }

    #[test]
    fn three_d_uses_x_marginal() {
        let p = PhysicalParams::default();
        let g = make_grid(3, 32, 40.0, None).unwrap();
        let spec = SolitonSpec::three_d_a_with_alpha(&p, 1.0, 0.0, 0.0);
        let s = sample_solution(&spec, &p, &g, 0.0, 0.0).unwrap();
        let st = FieldState::new(0.0, s.psi, s.phi.clone(), s.phi, p, Arc::new(g)).unwrap();
        let r = measure(&st, None);
        assert!(r.centroid.abs() < 1e-12 && r.peak_pos.abs() < 1e-12);
        assert!(r.width > 0.0);
    }

    #[test]
    fn exact_linear_fit() {
        let recs: Vec<_> = (0..11).map(|j| record(j as f64, 0.25 * j as f64 - 1.0)).collect();
        let f = fit_velocity(&recs, 0.01).unwrap();
        assert!((f.velocity - 0.25).abs() < 1e-12 && f.stderr < 1e-12 && !f.degenerate);
    }

    #[test]
    fn stationary_fit_flagged() {
        let recs: Vec<_> = (0..11).map(|j| record(j as f64, 1e-4 * (j % 2) as f64)).collect();
        let f = fit_velocity(&recs, 0.05).unwrap();
        assert!(f.degenerate);
        assert!(f.velocity.abs() < 1e-4);
        assert!(matches!(fit_velocity(&recs[..4], 0.05), Err(LabError::DegenerateFit(_))));
    }

    #[test]
    fn spreading_law() {
        assert_eq!(free_spreading_width(1.3, 1.0, 0.0).unwrap(), 1.3);
        let s0: f64 = 0.7;
        let w = free_spreading_width(s0, 2.0, 2.0 * 2.0 * s0 * s0).unwrap();
        assert!((w - s0 * 2f64.sqrt()).abs() < 1e-15);
        assert!((free_spreading_width(1.0, 1.0, 4.0).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert!(free_spreading_width(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn spreading_ratio_cases() {
        let a: Vec<_> = (0..5).map(|j| ObservableRecord { width: 1.0 + j as f64, ..record(j as f64, 0.0) }).collect();
        assert_eq!(spreading_ratio(&a, &a, 4.0).unwrap(), 1.0);
        assert_eq!(spreading_ratio(&a, &a, 0.0).unwrap(), 1.0);
        assert!((width_at(&a, 2.5).unwrap() - 3.5).abs() < 1e-15);
        assert!(matches!(spreading_ratio(&a, &a[..3], 4.0), Err(LabError::SpanMismatch(_))));
        assert!(matches!(spreading_ratio(&a[1..], &a, 4.0), Err(LabError::SpanMismatch(_))));
    }
}
