//! Closed-form soliton families of the electron-Higgs system.
//!
//! Each family is sampled exactly as printed: amplitude, sech power, phase
//! and transverse plane-wave factor. Widths quoted here are the inverse of
//! the coefficient inside the sech argument.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{Family, Grid, PhysicalParams, SolitonSpec, SATURATION_TOL};

/// Number of widths a domain must span before a sample is accepted.
pub const MIN_WIDTHS: f64 = 30.0;

pub fn sech(x: f64) -> f64 {
    // 1/cosh overflows to 0 gracefully for large |x|
    1.0 / x.cosh()
}

/// Positive root of `alpha^2 = 2 M omega + M^2 + gamma^2 + epsilon^2`.
pub fn dispersion_alpha_3da(big_m: f64, omega: f64, gamma: f64, epsilon: f64) -> Result<f64> {
    let radicand = 2.0 * big_m * omega + big_m * big_m + gamma * gamma + epsilon * epsilon;
    if radicand > 0.0 {
        Ok(radicand.sqrt())
    } else {
        Err(LabError::Radicand(radicand))
    }
}

/// `V_s = sqrt(1 - (9/4)(m^3 v^2 / M^3)^2)`; rejects an imaginary result.
pub fn soliton_velocity_1db(big_m: f64, m: f64, v: f64) -> Result<f64> {
    let ratio = m.powi(3) * v * v / big_m.powi(3);
    let v2 = 1.0 - 2.25 * ratio * ratio;
    if v2 >= 0.0 {
        Ok(v2.sqrt())
    } else if v2.abs() <= SATURATION_TOL {
        Ok(0.0)
    } else {
        Err(LabError::ImaginaryVelocity(v2))
    }
}

/// Phase velocity of a 1D family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseVelocity {
    pub value: f64,
    /// `Some(V_s >= V_p)` for `OneD_B`, `None` otherwise.
    pub envelope_not_slower: Option<bool>,
}

pub fn phase_velocity(spec: &SolitonSpec, p: &PhysicalParams) -> Result<PhaseVelocity> {
    let mv4 = p.mv().powi(4);
    let big_m4 = p.electron_mass.powi(4);
    match spec.family {
        Family::OneDA => Ok(PhaseVelocity { value: (-big_m4 + mv4) / (2.0 * mv4), envelope_not_slower: None }),
        Family::OneDB => {
            let v_s = spec.v_s;
            if !(v_s > 0.0) {
                return Err(LabError::PhaseVelocityUndefined("V_s = 0 makes the phase velocity singular"));
            }
            let value = -(2.0 / 9.0) * big_m4 / mv4 / v_s + 0.5 * v_s;
            Ok(PhaseVelocity { value, envelope_not_slower: Some(v_s >= value) })
        }
        _ => Err(LabError::InvalidSpec("phase velocity is defined for the 1D families only".into())),
    }
}

/// Coefficient `k` inside `sech(k (x - V t))`.
pub fn sech_coefficient(spec: &SolitonSpec, p: &PhysicalParams) -> Result<f64> {
    let (big_m, m) = (p.electron_mass, p.higgs_mass);
    let mv2 = p.mv() * p.mv();
    let k = match spec.family {
        Family::ThreeDA => spec.alpha,
        Family::ThreeDB => {
            let q2 = 1.0 - (spec.mu / big_m).powi(2);
            if q2 <= 0.0 {
                return Err(LabError::InvalidSpec(format!("ThreeD_B needs mu < M, got mu = {}", spec.mu)));
            }
            m / (2.0 * q2.sqrt())
        }
        Family::OneDA => big_m.powi(3) / mv2,
        Family::OneDB => big_m.powi(3) / (3.0 * mv2),
    };
    if k > 0.0 && k.is_finite() {
        Ok(k)
    } else {
        Err(LabError::InvalidSpec(format!("{} has non-positive inverse width {k}", spec.family)))
    }
}

/// Localization length, the inverse sech-argument coefficient.
///
/// `ThreeD_B` at `mu = M` is the degenerate zero-length limit and returns 0.
pub fn localization_length(spec: &SolitonSpec, p: &PhysicalParams) -> Result<f64> {
    if spec.family == Family::ThreeDB {
        let q2 = 1.0 - (spec.mu / p.electron_mass).powi(2);
        if q2 == 0.0 {
            return Ok(0.0);
        }
        if q2 < 0.0 {
            return Err(LabError::InvalidSpec(format!("mu = {} exceeds M", spec.mu)));
        }
        return Ok(2.0 * q2.sqrt() / p.higgs_mass);
    }
    if spec.family == Family::OneDB && !spec.v_s.is_finite() {
        return Err(LabError::InvalidSpec("OneD_B with imaginary V_s".into()));
    }
    sech_coefficient(spec, p).map(|k| 1.0 / k)
}

/// Envelope amplitude `|psi|_max`.
pub fn psi_amplitude(spec: &SolitonSpec, p: &PhysicalParams) -> f64 {
    let (big_m, m, v) = (p.electron_mass, p.higgs_mass, p.vev);
    match spec.family {
        Family::ThreeDA => m * v * spec.alpha / (2f64.sqrt() * big_m.powf(1.5)),
        Family::ThreeDB => {
            let q = (1.0 - (spec.mu / big_m).powi(2)).sqrt();
            3.0 * m * m * v / (4.0 * big_m.powf(1.5) * q)
        }
        Family::OneDA => big_m.powf(1.5) / (2f64.sqrt() * m * v),
        Family::OneDB => big_m.powf(1.5) / (2.0 * m * v),
    }
}

/// Signed peak value of the scalar field.
pub fn phi_amplitude(spec: &SolitonSpec, p: &PhysicalParams) -> f64 {
    let (big_m, m) = (p.electron_mass, p.higgs_mass);
    match spec.family {
        Family::ThreeDA => -(spec.alpha / big_m).powi(2),
        Family::ThreeDB => -0.75 * m * m / (big_m * big_m - m * m),
        Family::OneDA => -(big_m / p.mv()).powi(4),
        Family::OneDB => -(big_m / p.mv()).powi(4) / 3.0,
    }
}

/// Temporal frequency `Omega` and longitudinal momentum `p` of the carrier
/// `exp(i (Omega t + p x))`.
pub fn carrier(spec: &SolitonSpec, p: &PhysicalParams) -> (f64, f64) {
    let big_m = p.electron_mass;
    let mv4 = p.mv().powi(4);
    match spec.family {
        Family::ThreeDA => (spec.omega, big_m),
        Family::ThreeDB => {
            let q2 = 1.0 - (spec.mu / big_m).powi(2);
            let freq = 2.0 / big_m * (p.higgs_mass.powi(2) / (4.0 * q2) - spec.alpha * spec.alpha / 4.0);
            (freq, spec.mu)
        }
        Family::OneDA => (big_m * (big_m.powi(4) - mv4) / (2.0 * mv4), big_m),
        Family::OneDB => (2.0 * big_m.powi(5) / (9.0 * mv4) - 0.5 * big_m * spec.v_s * spec.v_s, big_m * spec.v_s),
    }
}

fn envelope_power(spec: &SolitonSpec) -> i32 {
    match spec.family {
        Family::ThreeDA | Family::OneDA => 1,
        _ => 2,
    }
}

fn phi_power(spec: &SolitonSpec) -> i32 {
    match spec.family {
        Family::OneDA => spec.variant_13.sech_power(),
        _ => 2,
    }
}

/// Fields of one family on a grid at a given time.
#[derive(Debug, Clone)]
pub struct SolutionSample {
    pub psi: Vec<Complex64>,
    pub phi: Vec<f64>,
    pub spec: SolitonSpec,
    pub t: f64,
}

/// Exact `x`-integral of `|psi|^2` (needs `gamma = epsilon = 0` for the 3D families).
pub fn closed_form_norm(spec: &SolitonSpec, p: &PhysicalParams) -> Result<f64> {
    if spec.family.is_three_d() && spec.transverse_k2() != 0.0 {
        return Err(LabError::NotNormalizable("transverse plane wave has no finite x-norm"));
    }
    let k = sech_coefficient(spec, p)?;
    let a2 = psi_amplitude(spec, p).powi(2);
    // int sech^2(k u) du = 2/k, int sech^4(k u) du = 4/(3k)
    Ok(match envelope_power(spec) {
        1 => a2 * 2.0 / k,
        _ => a2 * 4.0 / (3.0 * k),
    })
}

/// Family sampler with a fixed centre offset; shared by the residual
/// verifier and the evolution initialiser.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticField {
    pub spec: SolitonSpec,
    pub params: PhysicalParams,
    pub x0: f64,
    k: f64,
    velocity: f64,
    psi_amp: f64,
    phi_amp: f64,
    freq: f64,
    momentum: f64,
}

impl AnalyticField {
    pub fn new(spec: SolitonSpec, params: PhysicalParams, x0: f64) -> Result<Self> {
        if spec.family == Family::OneDB && !spec.v_s.is_finite() {
            return Err(LabError::InvalidSpec("OneD_B with imaginary V_s".into()));
        }
        let k = sech_coefficient(&spec, &params)?;
        let (freq, momentum) = carrier(&spec, &params);
        Ok(Self {
            spec,
            params,
            x0,
            k,
            velocity: spec.velocity(&params),
            psi_amp: psi_amplitude(&spec, &params),
            phi_amp: phi_amplitude(&spec, &params),
            freq,
            momentum,
        })
    }

    pub fn width(&self) -> f64 {
        1.0 / self.k
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    /// Rough upper bound on the temporal frequency content at a fixed point.
    pub fn temporal_scale(&self) -> f64 {
        self.freq.abs() + self.velocity.abs() * 2.0 * self.k
    }

    pub fn check_domain(&self, grid: &Grid) -> Result<()> {
        let required = MIN_WIDTHS * self.width();
        if grid.length < required {
            return Err(LabError::DomainTooShort { length: grid.length, required });
        }
        Ok(())
    }

    /// Envelopes are summed over the neighbouring periodic images so the
    /// sampled profile is smooth across the box edge.
    pub fn sample(&self, grid: &Grid, t: f64) -> SolutionSample {
        let x = grid.coords();
        let centre = self.x0 + self.velocity * t;
        let env_pow = envelope_power(&self.spec);
        let phi_pow = phi_power(&self.spec);
        let line: Vec<(Complex64, f64)> = x
            .iter()
            .map(|&xj| {
                let d = grid.min_image(xj - centre);
                let (mut env, mut prof) = (0.0, 0.0);
                for image in [-grid.length, 0.0, grid.length] {
                    let s = sech(self.k * (d + image));
                    env += s.powi(env_pow);
                    prof += s.powi(phi_pow);
                }
                let psi = Complex64::from_polar(self.psi_amp * env, self.freq * t + self.momentum * (xj - self.x0));
                (psi, self.phi_amp * prof)
            })
            .collect();
        let (psi, phi) = if grid.dim == 1 {
            line.into_iter().unzip()
        } else {
            (0..grid.points())
                .map(|idx| {
                    let [a, b, c] = grid.unflatten(idx);
                    let (psi, phi) = line[a];
                    let transverse = Complex64::from_polar(1.0, self.spec.gamma * x[b] + self.spec.epsilon * x[c]);
                    (psi * transverse, phi)
                })
                .unzip()
        };
        SolutionSample { psi, phi, spec: self.spec, t }
    }
}

/// Evaluate a family on a grid. On 1D grids the transverse factor of the 3D
/// families is carried analytically (equal to 1 on the `y = z = 0` line).
pub fn sample_solution(
    spec: &SolitonSpec,
    params: &PhysicalParams,
    grid: &Grid,
    t: f64,
    x0: f64,
) -> Result<SolutionSample> {
    let field = AnalyticField::new(*spec, *params, x0)?;
    field.check_domain(grid)?;
    Ok(field.sample(grid, t))
}

/// Velocity of surfaces of constant phase read off the carrier, for cross-checks.
pub fn carrier_phase_velocity(spec: &SolitonSpec, p: &PhysicalParams) -> f64 {
    let (freq, momentum) = carrier(spec, p);
    -freq / momentum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_grid, Variant13};
    use proptest::prelude::*;

    fn defaults() -> PhysicalParams {
        PhysicalParams::new(1.0, 0.5, 1.0)
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(dispersion_alpha_3da(1.0, 0.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(dispersion_alpha_3da(1.0, 1.5, 0.0, 0.0).unwrap(), 2.0);
        assert!(matches!(dispersion_alpha_3da(1.0, -0.6, 0.0, 0.0), Err(LabError::Radicand(r)) if (r + 0.2).abs() < 1e-15));
    }

    #[test]
    fn velocity_examples() {
        assert_eq!(soliton_velocity_1db(1.0, 1.0, (2.0f64 / 3.0).sqrt()).unwrap(), 0.0);
        let v = soliton_velocity_1db(1.0, 0.5, 1.0).unwrap();
        assert!((v - (1.0 - 2.25 * 0.125f64.powi(2)).sqrt()).abs() < 1e-15);
        assert!((v - 0.982_264_602_843_857).abs() < 1e-12);
        assert!(soliton_velocity_1db(1.0, 1e-4, 1.0).unwrap() > 1.0 - 1e-12);
        assert!(matches!(soliton_velocity_1db(1.0, 1.0, 1.0), Err(LabError::ImaginaryVelocity(_))));
    }

    #[test]
    fn phase_velocity_examples() {
        let p = PhysicalParams::new(1.0, 1.0, 1.0);
        let pv = phase_velocity(&SolitonSpec::one_d_a(Variant13::default()), &p).unwrap();
        assert_eq!(pv.value, 0.0);
        let p = defaults();
        let pv = phase_velocity(&SolitonSpec::one_d_b(&p), &p).unwrap();
        assert!((pv.value + 3.128_621_016_840_273_5).abs() < 1e-12);
        assert_eq!(pv.envelope_not_slower, Some(true));
        // carrier read-off agrees with the closed form
        assert!((carrier_phase_velocity(&SolitonSpec::one_d_b(&p), &p) - pv.value).abs() < 1e-12);
        let p0 = PhysicalParams::new(1.0, 1.0, (2.0f64 / 3.0).sqrt());
        assert!(phase_velocity(&SolitonSpec::one_d_b(&p0), &p0).is_err());
    }

    #[test]
    fn localization_examples() {
        let p = defaults();
        assert_eq!(localization_length(&SolitonSpec::three_d_b(1.0, 0.0, 0.0), &p).unwrap(), 0.0);
        assert!((localization_length(&SolitonSpec::one_d_b(&p), &p).unwrap() - 0.75).abs() < 1e-15);
        let s = SolitonSpec::three_d_a_with_alpha(&p, 2.0, 0.0, 0.0);
        assert_eq!(localization_length(&s, &p).unwrap(), 0.5);
    }

    #[test]
    fn sample_peaks() {
        let p = defaults();
        let s = SolitonSpec::one_d_b(&p);
        let g = make_grid(1, 2048, 60.0, None).unwrap();
        let smp = sample_solution(&s, &p, &g, 0.0, 0.0).unwrap();
        let peak = smp.psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-14);
        let phi_min = smp.phi.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((phi_min + 16.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn short_domain_rejected() {
        let p = defaults();
        let g = make_grid(1, 256, 10.0, None).unwrap();
        let err = sample_solution(&SolitonSpec::one_d_b(&p), &p, &g, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, LabError::DomainTooShort { .. }));
    }

    #[test]
    fn three_d_a_translates_at_unit_speed() {
        let p = defaults();
        let s = SolitonSpec::three_d_a(&p, 0.0, 0.0, 0.0).unwrap();
        let g = make_grid(1, 1024, 64.0, None).unwrap();
        let a = sample_solution(&s, &p, &g, 0.0, 0.0).unwrap();
        let b = sample_solution(&s, &p, &g, 1.0, 0.0).unwrap();
        let shift = (1.0 / g.spacing).round() as usize;
        assert_eq!(shift, 16);
        for j in 0..g.n {
            let moved = b.psi[(j + shift) % g.n].norm();
            assert!((moved - a.psi[j].norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_norms() {
        let p = PhysicalParams::new(1.3, 0.4, 1.1);
        assert!((closed_form_norm(&SolitonSpec::one_d_a(Variant13::default()), &p).unwrap() - 1.0).abs() < 1e-14);
        assert!((closed_form_norm(&SolitonSpec::one_d_b(&p), &p).unwrap() - 1.0).abs() < 1e-14);
        let alpha = 1.3f64.powi(3) / p.mv().powi(2);
        let s = SolitonSpec::three_d_a_with_alpha(&p, alpha, 0.0, 0.0);
        assert!((closed_form_norm(&s, &p).unwrap() - 1.0).abs() < 1e-14);
        let s = SolitonSpec::three_d_a_with_alpha(&p, 0.5 * alpha, 0.0, 0.0);
        assert!((closed_form_norm(&s, &p).unwrap() - 0.5).abs() < 1e-14);
        let s = SolitonSpec::three_d_a_with_alpha(&p, alpha, 0.3, 0.0);
        assert!(matches!(closed_form_norm(&s, &p), Err(LabError::NotNormalizable(_))));
    }

    #[test]
    fn three_d_lattice_carries_plane_wave() {
        let p = defaults();
        let g = make_grid(3, 16, 40.0, None).unwrap();
        let gamma = 2.0 * std::f64::consts::PI / g.length;
        let s = SolitonSpec::three_d_b(0.5, gamma, 0.0);
        let field = AnalyticField::new(s, p, 0.0).unwrap();
        let smp = field.sample(&g, 0.0);
        let x = g.coords();
        let line = field.sample(&make_grid(1, 16, 40.0, None).unwrap(), 0.0);
        for idx in 0..g.points() {
            let [a, b, _] = g.unflatten(idx);
            let expect = line.psi[a] * Complex64::from_polar(1.0, gamma * x[b]);
            assert!((smp.psi[idx] - expect).norm() < 1e-14);
        }
    }

    /// Composite Simpson quadrature of `x^2 sech^4(k x)` over a wide interval.
    fn sech2_second_moment(k: f64) -> f64 {
        let half = 40.0 / k;
        let n = 200_000;
        let h = 2.0 * half / n as f64;
        let f = |x: f64| x * x * sech(k * x).powi(4);
        let g = |x: f64| sech(k * x).powi(4);
        let simpson = |fun: &dyn Fn(f64) -> f64| {
            let mut s = fun(-half) + fun(half);
            for i in 1..n {
                let x = -half + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * fun(x);
            }
            s * h / 3.0
        };
        simpson(&f) / simpson(&g)
    }

    // Frozen from the Simpson oracle above (and scipy quad): the variance of a
    // sech^4 density is (pi^2 - 6)/(12 k^2); pi^2/(12 k^2) belongs to sech^2.
    const SECH4_VARIANCE_K1: f64 = 0.322_467_033_424_113;

    #[test]
    fn sech_squared_envelope_moment() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert!(((pi2 - 6.0) / 12.0 - SECH4_VARIANCE_K1).abs() < 1e-14);
        for k in [0.5, 4.0 / 3.0, 3.0] {
            let oracle = sech2_second_moment(k);
            assert!((oracle * k * k / SECH4_VARIANCE_K1 - 1.0).abs() < 1e-8);
        }
    }

    fn valid_params() -> impl Strategy<Value = PhysicalParams> {
        (0.5f64..2.0, 0.2f64..1.0, 0.3f64..1.5)
            .prop_filter("V_s real", |(big_m, m, v)| 1.5 * m.powi(3) * v * v <= big_m.powi(3))
            .prop_map(|(a, b, c)| PhysicalParams::new(a, b, c))
    }

    proptest! {
        #[test]
        fn envelope_never_slower_than_phase(p in valid_params()) {
            let s = SolitonSpec::one_d_b(&p);
            prop_assume!(s.v_s > 1e-6);
            let pv = phase_velocity(&s, &p).unwrap();
            prop_assert!(pv.value <= s.v_s);
            prop_assert_eq!(pv.envelope_not_slower, Some(true));
        }

        #[test]
        fn valid_one_d_b_velocity_in_range(p in valid_params()) {
            let s = SolitonSpec::one_d_b(&p);
            prop_assert!(crate::model::validate_params(&p, &s).passed());
            prop_assert!(s.v_s >= 0.0 && s.v_s < 1.0);
        }

        #[test]
        fn short_localization_when_mv_small(p in valid_params()) {
            prop_assume!((p.mv() / p.electron_mass).powi(2) <= 1.0 / 3.0);
            let l = localization_length(&SolitonSpec::one_d_b(&p), &p).unwrap();
            prop_assert!(l <= 1.0 / p.electron_mass + 1e-12);
        }

        #[test]
        fn dispersion_closure(big_m in 0.3f64..3.0, omega in -0.1f64..2.0, gamma in -1.0f64..1.0, eps in -1.0f64..1.0, mu in 0.0f64..0.99) {
            let p = PhysicalParams::new(big_m, 0.5, 1.0);
            let s = SolitonSpec::three_d_a(&p, omega, gamma, eps).unwrap();
            let omega_back = (s.alpha * s.alpha - big_m * big_m - gamma * gamma - eps * eps) / (2.0 * big_m);
            prop_assert!((omega_back - omega).abs() <= 1e-12 * omega.abs().max(big_m));
            let b = SolitonSpec::three_d_b(mu * big_m, gamma, eps);
            let mu_back = (b.alpha * b.alpha - gamma * gamma - eps * eps).max(0.0).sqrt();
            prop_assert!((mu_back - mu * big_m).abs() <= 1e-12 * big_m.max(1.0) * 10.0);
        }

        #[test]
        fn lattice_norm_matches_closed_form(p in valid_params(), family in 0usize..3) {
            let spec = match family {
                0 => SolitonSpec::one_d_a(Variant13::CorrectedSechSquared),
                1 => SolitonSpec::one_d_b(&p),
                _ => SolitonSpec::three_d_a_with_alpha(&p, 1.7, 0.0, 0.0),
            };
            let field = AnalyticField::new(spec, p, 0.0).unwrap();
            let length = 60.0 * field.width();
            let n = 4096;
            let g = make_grid(1, n, length, None).unwrap();
            let smp = field.sample(&g, 0.0);
            let lattice: f64 = smp.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.spacing;
            let exact = closed_form_norm(&spec, &p).unwrap();
            prop_assert!((lattice / exact - 1.0).abs() < 1e-8);
        }
    }
}
