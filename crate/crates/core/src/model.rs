//! Physical parameters, soliton-family identifiers, lattice geometry and
//! field containers shared by the rest of the crate.
//!
//! Everything is in natural units with `hbar = c = 1`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::error::{LabError, Result};

/// Relative slack used when a bound is saturated exactly (e.g. `V_s = 0`).
pub(crate) const SATURATION_TOL: f64 = 1e-12;

/// Model constants of the non-relativistic electron-Higgs system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Electron mass `M`.
    pub electron_mass: f64,
    /// Higgs mass `m`.
    pub higgs_mass: f64,
    /// Vacuum expectation value `v` (dimensionless in the 1D model).
    pub vev: f64,
}

impl PhysicalParams {
    pub fn new(electron_mass: f64, higgs_mass: f64, vev: f64) -> Self {
        Self { electron_mass, higgs_mass, vev }
    }

    /// Strength `2M/v^2` of the `|psi|^2` source in the Klein-Gordon equation.
    pub fn source_coupling(&self) -> f64 {
        2.0 * self.electron_mass / (self.vev * self.vev)
    }

    /// The product `m v` that appears throughout the 1D families.
    pub fn mv(&self) -> f64 {
        self.higgs_mass * self.vev
    }
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::new(1.0, 0.5, 1.0)
    }
}

/// The four closed-form soliton families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "ThreeD_A")]
    ThreeDA,
    #[serde(rename = "ThreeD_B")]
    ThreeDB,
    #[serde(rename = "OneD_A")]
    OneDA,
    #[serde(rename = "OneD_B")]
    OneDB,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::ThreeDA, Family::ThreeDB, Family::OneDA, Family::OneDB];

    pub fn name(self) -> &'static str {
        match self {
            Family::ThreeDA => "ThreeD_A",
            Family::ThreeDB => "ThreeD_B",
            Family::OneDA => "OneD_A",
            Family::OneDB => "OneD_B",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(s))
    }

    pub fn is_three_d(self) -> bool {
        matches!(self, Family::ThreeDA | Family::ThreeDB)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Profile of the scalar field for family `OneD_A`.
///
/// The printed field uses a first power of sech; the squared variant is the
/// one compatible with a unit-speed `sech` matter field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Variant13 {
    #[default]
    #[serde(rename = "as_printed_sech")]
    AsPrintedSech,
    #[serde(rename = "corrected_sech_squared")]
    CorrectedSechSquared,
}

impl Variant13 {
    pub fn name(self) -> &'static str {
        match self {
            Variant13::AsPrintedSech => "as_printed_sech",
            Variant13::CorrectedSechSquared => "corrected_sech_squared",
        }
    }

    pub fn parse(s: &str) -> Option<Variant13> {
        [Variant13::AsPrintedSech, Variant13::CorrectedSechSquared]
            .into_iter()
            .find(|v| v.name() == s)
    }

    pub fn sech_power(self) -> i32 {
        match self {
            Variant13::AsPrintedSech => 1,
            Variant13::CorrectedSechSquared => 2,
        }
    }
}

/// One analytic family together with its free parameters.
///
/// Fields that a family does not use are zero. `v_s` is derived for `OneD_B`
/// and is `NaN` when the velocity would be imaginary; `validate_params`
/// reports that case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonSpec {
    pub family: Family,
    pub alpha: f64,
    pub omega: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub v_s: f64,
    pub variant_13: Variant13,
}

impl SolitonSpec {
    fn blank(family: Family) -> Self {
        Self {
            family,
            alpha: 0.0,
            omega: 0.0,
            gamma: 0.0,
            epsilon: 0.0,
            mu: 0.0,
            v_s: 0.0,
            variant_13: Variant13::default(),
        }
    }

    /// `ThreeD_A` parameterised by its frequency; `alpha` follows from the
    /// dispersion relation.
    pub fn three_d_a(p: &PhysicalParams, omega: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        let alpha = analytic::dispersion_alpha_3da(p.electron_mass, omega, gamma, epsilon)?;
        Ok(Self { alpha, omega, gamma, epsilon, ..Self::blank(Family::ThreeDA) })
    }

    /// `ThreeD_A` parameterised by its inverse width; `omega` follows from the
    /// dispersion relation.
    pub fn three_d_a_with_alpha(p: &PhysicalParams, alpha: f64, gamma: f64, epsilon: f64) -> Self {
        let big_m = p.electron_mass;
        let omega = (alpha * alpha - big_m * big_m - gamma * gamma - epsilon * epsilon) / (2.0 * big_m);
        Self { alpha, omega, gamma, epsilon, ..Self::blank(Family::ThreeDA) }
    }

    /// `ThreeD_B`; `alpha` is the modulus of `(mu, gamma, epsilon)`.
    pub fn three_d_b(mu: f64, gamma: f64, epsilon: f64) -> Self {
        let alpha = (mu * mu + gamma * gamma + epsilon * epsilon).sqrt();
        Self { alpha, mu, gamma, epsilon, ..Self::blank(Family::ThreeDB) }
    }

    pub fn one_d_a(variant: Variant13) -> Self {
        Self { variant_13: variant, ..Self::blank(Family::OneDA) }
    }

    pub fn one_d_b(p: &PhysicalParams) -> Self {
        let v_s = analytic::soliton_velocity_1db(p.electron_mass, p.higgs_mass, p.vev).unwrap_or(f64::NAN);
        Self { v_s, ..Self::blank(Family::OneDB) }
    }

    /// Default member of a family for the given parameters.
    pub fn default_for(family: Family, p: &PhysicalParams) -> Self {
        match family {
            Family::ThreeDA => Self::three_d_a_with_alpha(p, p.electron_mass, 0.0, 0.0),
            Family::ThreeDB => Self::three_d_b(0.5 * p.electron_mass, 0.0, 0.0),
            Family::OneDA => Self::one_d_a(Variant13::default()),
            Family::OneDB => Self::one_d_b(p),
        }
    }

    /// Envelope velocity along x.
    pub fn velocity(&self, p: &PhysicalParams) -> f64 {
        match self.family {
            Family::ThreeDA | Family::OneDA => 1.0,
            Family::ThreeDB => self.mu / p.electron_mass,
            Family::OneDB => self.v_s,
        }
    }

    /// Squared transverse wavenumber `gamma^2 + epsilon^2`.
    pub fn transverse_k2(&self) -> f64 {
        self.gamma * self.gamma + self.epsilon * self.epsilon
    }
}

/// Severity of a failed constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    /// The family is not defined (or not a solution) when this fails.
    Required,
    /// Physical-interpretation warning only.
    Advisory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub passed: bool,
    /// Signed slack: non-negative when satisfied, the violating amount otherwise.
    pub margin: f64,
    pub severity: Severity,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ValidationReport {
    fn push(&mut self, name: &str, margin: f64, severity: Severity, detail: String) {
        self.checks.push(ConstraintCheck {
            name: name.to_string(),
            passed: margin >= 0.0,
            margin,
            severity,
            detail,
        });
    }

    /// True when every required constraint holds.
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.severity == Severity::Required).all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Check positivity, family constraints, dispersion consistency and the
/// non-relativistic advisories. Never fails; callers decide what to do.
pub fn validate_params(p: &PhysicalParams, s: &SolitonSpec) -> ValidationReport {
    let mut r = ValidationReport::default();
    let (big_m, m, v) = (p.electron_mass, p.higgs_mass, p.vev);
    r.push("electron_mass_positive", big_m, Severity::Required, format!("M = {big_m}"));
    r.push("higgs_mass_positive", m, Severity::Required, format!("m = {m}"));
    r.push("vev_positive", v, Severity::Required, format!("v = {v}"));
    let positive = big_m > 0.0 && m > 0.0 && v > 0.0;

    match s.family {
        Family::ThreeDA => {
            let rhs = 2.0 * big_m * s.omega + big_m * big_m + s.transverse_k2();
            let mismatch = (s.alpha * s.alpha - rhs).abs();
            let scale = rhs.abs().max(s.alpha * s.alpha).max(1.0);
            r.push(
                "dispersion_relation",
                SATURATION_TOL * 1e2 * scale - mismatch,
                Severity::Required,
                format!("alpha^2 = {}, 2 M omega + M^2 + gamma^2 + epsilon^2 = {rhs}", s.alpha * s.alpha),
            );
            r.push("alpha_positive", s.alpha, Severity::Required, format!("alpha = {}", s.alpha));
        }
        Family::ThreeDB => {
            let rhs = s.mu * s.mu + s.transverse_k2();
            let mismatch = (s.alpha * s.alpha - rhs).abs();
            r.push(
                "dispersion_relation",
                SATURATION_TOL * 1e2 * rhs.max(1.0) - mismatch,
                Severity::Required,
                format!("alpha^2 = {}, mu^2 + gamma^2 + epsilon^2 = {rhs}", s.alpha * s.alpha),
            );
            r.push("mu_le_M", big_m - s.mu, Severity::Required, format!("mu = {}, M = {big_m}", s.mu));
            r.push(
                "higgs_lighter_than_electron",
                big_m - m,
                Severity::Advisory,
                "scalar amplitude 3m^2/(4(M^2 - m^2)) is singular or positive otherwise".into(),
            );
        }
        Family::OneDA => {}
        Family::OneDB => {
            let lhs = 1.5 * m.powi(3) * v * v;
            let cube = big_m.powi(3);
            // saturation (V_s = 0) must count as a pass despite rounding
            let margin = cube - lhs;
            let margin = if margin < 0.0 && margin.abs() <= SATURATION_TOL * cube { 0.0 } else { margin };
            r.push(
                "velocity_real",
                margin,
                Severity::Required,
                format!("(3/2) m^3 v^2 = {lhs} vs M^3 = {cube}"),
            );
            if margin >= 0.0 && positive {
                let expected = analytic::soliton_velocity_1db(big_m, m, v).unwrap_or(f64::NAN);
                let mismatch = (expected - s.v_s).abs();
                r.push(
                    "stored_velocity_consistent",
                    1e-12 - mismatch,
                    Severity::Required,
                    format!("stored V_s = {}, formula V_s = {expected}", s.v_s),
                );
            }
        }
    }

    if positive {
        let velocity = s.velocity(p);
        if velocity.is_finite() {
            r.push(
                "subluminal_envelope",
                1.0 - velocity - f64::EPSILON,
                Severity::Advisory,
                format!("envelope velocity {velocity}; unit speed leaves the non-relativistic regime"),
            );
        }
        let amp = analytic::phi_amplitude(s, p);
        if amp.is_finite() {
            r.push(
                "phi_below_M",
                big_m - amp.abs(),
                Severity::Advisory,
                format!("max |phi| = {} vs M = {big_m}", amp.abs()),
            );
        }
    }
    r
}

/// Transverse plane-wave numbers for quasi-1D runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransverseMode {
    pub gamma: f64,
    pub epsilon: f64,
}

impl TransverseMode {
    pub fn k2(&self) -> f64 {
        self.gamma * self.gamma + self.epsilon * self.epsilon
    }
}

/// Uniform periodic lattice, centred on the origin.
///
/// Flattened fields use row-major order with axis 0 (x) slowest:
/// `index = (ix * n + iy) * n + iz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub spacing: f64,
    /// Per-axis wavenumbers in FFT order: `0, 1, .., n/2 - 1, -n/2, .., -1` times `2 pi / L`.
    pub wavenumbers: Vec<f64>,
    pub transverse_mode: Option<TransverseMode>,
}

/// Build a grid. `n` must be a power of two no smaller than 16.
pub fn make_grid(dim: usize, n: usize, length: f64, transverse_mode: Option<TransverseMode>) -> Result<Grid> {
    if dim != 1 && dim != 3 {
        return Err(LabError::GridDimension(dim));
    }
    if n < 16 || !n.is_power_of_two() {
        return Err(LabError::GridSize(n));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(LabError::GridLength(length));
    }
    let dk = 2.0 * PI / length;
    let half = n as i64 / 2;
    let wavenumbers = (0..n as i64)
        .map(|j| if j < half { j as f64 * dk } else { (j - n as i64) as f64 * dk })
        .collect();
    Ok(Grid { dim, n, length, spacing: length / n as f64, wavenumbers, transverse_mode })
}

impl Grid {
    pub fn points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Per-axis coordinates `-L/2 + j h`.
    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|j| -0.5 * self.length + j as f64 * self.spacing).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn transverse_k2(&self) -> f64 {
        self.transverse_mode.map_or(0.0, |t| t.k2())
    }

    /// Nyquist wavenumber `pi / h`.
    pub fn nyquist(&self) -> f64 {
        PI / self.spacing
    }

    /// Lattice index along each axis of a flat index.
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        match self.dim {
            1 => [idx, 0, 0],
            _ => {
                let n = self.n;
                [idx / (n * n), (idx / n) % n, idx % n]
            }
        }
    }

    /// `|k|^2` summed over lattice axes, one entry per point.
    pub fn k_squared(&self) -> Vec<f64> {
        let k = &self.wavenumbers;
        (0..self.points())
            .map(|idx| {
                let ix = self.unflatten(idx);
                (0..self.dim).map(|a| k[ix[a]] * k[ix[a]]).sum()
            })
            .collect()
    }

    /// Wrap a displacement into `[-L/2, L/2)`.
    pub fn min_image(&self, dx: f64) -> f64 {
        dx - self.length * (dx / self.length + 0.5).floor()
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len == self.points() {
            Ok(())
        } else {
            Err(LabError::ShapeMismatch { expected: self.points(), got: len })
        }
    }
}

/// Matter field, scalar field, and the scalar field one step back.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub t: f64,
    pub psi: Vec<Complex64>,
    pub phi: Vec<f64>,
    pub phi_prev: Vec<f64>,
    pub params: PhysicalParams,
    pub grid: Arc<Grid>,
}

impl FieldState {
    pub fn new(
        t: f64,
        psi: Vec<Complex64>,
        phi: Vec<f64>,
        phi_prev: Vec<f64>,
        params: PhysicalParams,
        grid: Arc<Grid>,
    ) -> Result<Self> {
        grid.check_len(psi.len())?;
        grid.check_len(phi.len())?;
        grid.check_len(phi_prev.len())?;
        Ok(Self { t, psi, phi, phi_prev, params, grid })
    }

    /// Lattice quadrature of `|psi|^2`.
    pub fn norm(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs_psi(&self) -> f64 {
        self.psi.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}
