//! Scenario configuration: a flat `key = value` format with `[section]`
//! headers. Every key has a default except `scenario`; unknown and repeated
//! keys are errors that carry line numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::evolution::{Mode, PerturbationKind};
use crate::model::{Family, Variant13};
use crate::residual::CoefficientConvention;

/// Line 0 marks a command-line override.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line(pub usize);

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            write!(f, "override")
        } else {
            write!(f, "line {}", self.0)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{line}: {msg}")]
    Syntax { line: Line, msg: String },
    #[error("{line}: unknown key `{key}`")]
    UnknownKey { line: Line, key: String },
    #[error("duplicate key `{key}` at {first} and {second}")]
    Duplicate { key: String, first: Line, second: Line },
    #[error("{line}: `{key}` expects {expected}, got `{found}`")]
    TypeMismatch { line: Line, key: String, expected: &'static str, found: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("unknown scenario `{name}`; valid scenarios: {}", Scenario::ALL.map(|s| s.name()).join(", "))]
    UnknownScenario { name: String },
    #[error("`{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("cannot read config: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    VerifyResiduals,
    SolitonPropagation,
    FreeSpreading,
    ChoquardStationary,
    YukawaOracle,
    PerturbationStability,
    ParamSweep,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::VerifyResiduals,
        Scenario::SolitonPropagation,
        Scenario::FreeSpreading,
        Scenario::ChoquardStationary,
        Scenario::YukawaOracle,
        Scenario::PerturbationStability,
        Scenario::ParamSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::VerifyResiduals => "verify-residuals",
            Scenario::SolitonPropagation => "soliton-propagation",
            Scenario::FreeSpreading => "free-spreading",
            Scenario::ChoquardStationary => "choquard-stationary",
            Scenario::YukawaOracle => "yukawa-oracle",
            Scenario::PerturbationStability => "perturbation-stability",
            Scenario::ParamSweep => "param-sweep",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| ConfigError::UnknownScenario { name: s.to_string() })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsSection {
    pub electron_mass: f64,
    pub higgs_mass: f64,
    pub vev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolitonSection {
    pub family: Family,
    /// 0 derives alpha from `omega` through the dispersion relation.
    pub alpha: f64,
    pub omega: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub variant_13: Variant13,
    pub x0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
    /// 0 sizes the box as `widths` family widths.
    pub length: f64,
    pub widths: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub t_final: f64,
    /// 0 uses the stability limit.
    pub dt: f64,
    pub stride: usize,
    pub mode: Mode,
    pub coupling: bool,
    pub convention: CoefficientConvention,
    pub cfl: f64,
    pub higgs_guard: f64,
    pub dispersive_guard: f64,
    pub blowup_factor: f64,
    /// Keep a snapshot every this many records; 0 keeps the first and last only.
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeSection {
    /// 0 matches the soliton's initial width.
    pub sigma0: f64,
    pub n: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSection {
    pub kind: PerturbationKind,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditSection {
    pub n: usize,
    pub widths: f64,
    /// Evolve quasi-1D ThreeD_B and fit its speed.
    pub evolve_three_d_b: bool,
    pub evolve_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSection {
    pub n1: usize,
    pub n3: usize,
    /// 0 uses `40 / m`.
    pub length: f64,
    pub kmax: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChecksSection {
    /// Norm, reversal and dt-convergence checks alongside soliton propagation.
    pub scheme: bool,
    pub scheme_n: usize,
    pub reverse_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub scenario: Scenario,
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: String,
    pub params: ParamsSection,
    pub soliton: SolitonSection,
    pub grid: GridSection,
    pub run: RunSection,
    pub free: FreeSection,
    pub perturbation: PerturbationSection,
    pub audit: AuditSection,
    pub oracle: OracleSection,
    pub checks: ChecksSection,
    pub sweep: SweepSection,
}

/// Raw `key -> (value, line)` table, keys qualified by their section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Line)>,
}

fn strip_comment(s: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in s.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '#' if !in_quote => return &s[..i],
            _ => {}
        }
    }
    s
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v)
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (idx, full) in text.lines().enumerate() {
            let line = Line(idx + 1);
            let s = strip_comment(full).trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line, msg: format!("unterminated section header `{s}`") })?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(ConfigError::Syntax { line, msg: format!("bad section name `{name}`") });
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, msg: format!("expected `key = value`, got `{s}`") })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax { line, msg: "empty key".into() });
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            let value = unquote(v.trim()).to_string();
            if let Some((_, first)) = raw.entries.get(&key) {
                return Err(ConfigError::Duplicate { key, first: *first, second: line });
            }
            raw.entries.insert(key, (value, line));
        }
        Ok(raw)
    }

    /// Apply `section.key=value`, replacing any value from the file.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: Line(0), msg: format!("expected key=value, got `{spec}`") })?;
        self.entries.insert(k.trim().to_string(), (unquote(v.trim()).to_string(), Line(0)));
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (value.to_string(), Line(0)));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T, expected: &'static str) -> Result<T, ConfigError> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some((v, line)) => v.parse().map_err(|_| ConfigError::TypeMismatch {
                line,
                key: key.to_string(),
                expected,
                found: v,
            }),
        }
    }

    fn take_with<T>(
        &mut self,
        key: &str,
        default: T,
        expected: &'static str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<T, ConfigError> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some((v, line)) => {
                parse(&v).ok_or(ConfigError::TypeMismatch { line, key: key.to_string(), expected, found: v })
            }
        }
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.take(key, default, "a number")
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.take(key, default, "a non-negative integer")
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        self.take(key, default, "true or false")
    }
}

impl ScenarioConfig {
    /// Build the typed config; every key left over is unknown.
    pub fn from_raw(mut raw: RawConfig) -> Result<Self, ConfigError> {
        let scenario = match raw.entries.remove("scenario") {
            None => return Err(ConfigError::Missing("scenario".into())),
            Some((v, _)) => Scenario::parse(&v)?,
        };
        let r = &mut raw;
        let cfg = ScenarioConfig {
            scenario,
            seed: r.take("seed", 0u64, "a non-negative integer")?,
            output_dir: r.take("output_dir", "out".to_string(), "a path")?,
            params: ParamsSection {
                electron_mass: r.f64("params.M", 1.0)?,
                higgs_mass: r.f64("params.m", 0.5)?,
                vev: r.f64("params.v", 1.0)?,
            },
            soliton: SolitonSection {
                family: r.take_with("soliton.family", Family::OneDB, "a family name", Family::parse)?,
                alpha: r.f64("soliton.alpha", 0.0)?,
                omega: r.f64("soliton.omega", 0.0)?,
                gamma: r.f64("soliton.gamma", 0.0)?,
                epsilon: r.f64("soliton.epsilon", 0.0)?,
                mu: r.f64("soliton.mu", 0.5)?,
                variant_13: r.take_with(
                    "soliton.variant_13",
                    Variant13::AsPrintedSech,
                    "as_printed_sech or corrected_sech_squared",
                    Variant13::parse,
                )?,
                x0: r.f64("soliton.x0", 0.0)?,
            },
            grid: GridSection {
                dim: r.usize("grid.dim", 1)?,
                n: r.usize("grid.n", 2048)?,
                length: r.f64("grid.length", 0.0)?,
                widths: r.f64("grid.widths", 40.0)?,
            },
            run: RunSection {
                t_final: r.f64("run.T", 20.0)?,
                dt: r.f64("run.dt", 0.0)?,
                stride: r.usize("run.stride", 100)?,
                mode: r.take_with("run.mode", Mode::Coupled, "coupled or choquard", Mode::parse)?,
                coupling: r.bool("run.coupling", true)?,
                convention: r.take_with(
                    "run.convention",
                    CoefficientConvention::Dynamical,
                    "dynamical or printed",
                    CoefficientConvention::parse,
                )?,
                cfl: r.f64("run.cfl", 0.5)?,
                higgs_guard: r.f64("run.higgs_guard", 0.5)?,
                dispersive_guard: r.f64("run.dispersive_guard", 1.0)?,
                blowup_factor: r.f64("run.blowup_factor", 1e3)?,
                snapshot_every: r.usize("run.snapshot_every", 0)?,
            },
            free: FreeSection {
                sigma0: r.f64("free.sigma0", 0.0)?,
                n: r.usize("free.n", 8192)?,
                length: r.f64("free.length", 400.0)?,
            },
            perturbation: PerturbationSection {
                kind: r.take_with(
                    "perturbation.kind",
                    PerturbationKind::AmplitudeNoise,
                    "amplitude_noise, phase_noise or width_rescale",
                    PerturbationKind::parse,
                )?,
                strength: r.f64("perturbation.strength", 0.01)?,
            },
            audit: AuditSection {
                n: r.usize("audit.n", 2048)?,
                widths: r.f64("audit.widths", 40.0)?,
                evolve_three_d_b: r.bool("audit.evolve_three_d_b", true)?,
                evolve_t: r.f64("audit.evolve_T", 20.0)?,
            },
            oracle: OracleSection {
                n1: r.usize("oracle.n1", 128)?,
                n3: r.usize("oracle.n3", 32)?,
                length: r.f64("oracle.length", 0.0)?,
                kmax: r.usize("oracle.kmax", 2)?,
            },
            checks: ChecksSection {
                scheme: r.bool("checks.scheme", true)?,
                scheme_n: r.usize("checks.scheme_n", 256)?,
                reverse_t: r.f64("checks.reverse_T", 10.0)?,
            },
            sweep: SweepSection {
                scenario: r.take_with("sweep.scenario", Scenario::VerifyResiduals, "a scenario name", |s| {
                    Scenario::parse(s).ok()
                })?,
                key: r.take("sweep.key", "params.m".to_string(), "a key")?,
                values: r.take_with("sweep.values", Vec::new(), "a comma-separated list", |s| {
                    let s = s.trim().trim_start_matches('[').trim_end_matches(']');
                    Some(s.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect())
                })?,
            },
        };
        if let Some((key, (_, line))) = raw.entries.iter().min_by_key(|(_, (_, l))| l.0) {
            return Err(ConfigError::UnknownKey { line: *line, key: key.clone() });
        }
        cfg.check()?;
        Ok(cfg)
    }

    /// Ranges that are configuration errors rather than physics failures.
    fn check(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| Err(ConfigError::Invalid { key: key.into(), msg: msg.into() });
        if self.grid.dim != 1 && self.grid.dim != 3 {
            return bad("grid.dim", "must be 1 or 3");
        }
        if self.run.stride == 0 {
            return bad("run.stride", "must be >= 1");
        }
        if !(self.run.t_final >= 0.0) {
            return bad("run.T", "must be >= 0");
        }
        if !(self.run.dt >= 0.0) {
            return bad("run.dt", "must be >= 0 (0 selects the stability limit)");
        }
        if !(self.perturbation.strength >= 0.0) {
            return bad("perturbation.strength", "must be >= 0");
        }
        if self.scenario == Scenario::ParamSweep {
            if self.sweep.scenario == Scenario::ParamSweep {
                return bad("sweep.scenario", "cannot nest param-sweep");
            }
            if self.sweep.values.is_empty() {
                return bad("sweep.values", "needs at least one value");
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::parse(text)?;
        for o in overrides {
            raw.apply_override(o)?;
        }
        Self::from_raw(raw)
    }

    /// Canonical text with every key, defaults included.
    pub fn to_text(&self) -> String {
        let s = &self.soliton;
        let g = &self.grid;
        let r = &self.run;
        let sections: Vec<(&str, Vec<(&str, String)>)> = vec![
            (
                "",
                vec![
                    ("scenario", self.scenario.name().into()),
                    ("seed", self.seed.to_string()),
                    ("output_dir", format!("\"{}\"", self.output_dir)),
                ],
            ),
            (
                "params",
                vec![
                    ("M", self.params.electron_mass.to_string()),
                    ("m", self.params.higgs_mass.to_string()),
                    ("v", self.params.vev.to_string()),
                ],
            ),
            (
                "soliton",
                vec![
                    ("family", s.family.name().into()),
                    ("alpha", s.alpha.to_string()),
                    ("omega", s.omega.to_string()),
                    ("gamma", s.gamma.to_string()),
                    ("epsilon", s.epsilon.to_string()),
                    ("mu", s.mu.to_string()),
                    ("variant_13", s.variant_13.name().into()),
                    ("x0", s.x0.to_string()),
                ],
            ),
            (
                "grid",
                vec![
                    ("dim", g.dim.to_string()),
                    ("n", g.n.to_string()),
                    ("length", g.length.to_string()),
                    ("widths", g.widths.to_string()),
                ],
            ),
            (
                "run",
                vec![
                    ("T", r.t_final.to_string()),
                    ("dt", r.dt.to_string()),
                    ("stride", r.stride.to_string()),
                    ("mode", r.mode.name().into()),
                    ("coupling", r.coupling.to_string()),
                    ("convention", r.convention.name().into()),
                    ("cfl", r.cfl.to_string()),
                    ("higgs_guard", r.higgs_guard.to_string()),
                    ("dispersive_guard", r.dispersive_guard.to_string()),
                    ("blowup_factor", r.blowup_factor.to_string()),
                    ("snapshot_every", r.snapshot_every.to_string()),
                ],
            ),
            (
                "free",
                vec![
                    ("sigma0", self.free.sigma0.to_string()),
                    ("n", self.free.n.to_string()),
                    ("length", self.free.length.to_string()),
                ],
            ),
            (
                "perturbation",
                vec![
                    ("kind", self.perturbation.kind.name().into()),
                    ("strength", self.perturbation.strength.to_string()),
                ],
            ),
            (
                "audit",
                vec![
                    ("n", self.audit.n.to_string()),
                    ("widths", self.audit.widths.to_string()),
                    ("evolve_three_d_b", self.audit.evolve_three_d_b.to_string()),
                    ("evolve_T", self.audit.evolve_t.to_string()),
                ],
            ),
            (
                "oracle",
                vec![
                    ("n1", self.oracle.n1.to_string()),
                    ("n3", self.oracle.n3.to_string()),
                    ("length", self.oracle.length.to_string()),
                    ("kmax", self.oracle.kmax.to_string()),
                ],
            ),
            (
                "checks",
                vec![
                    ("scheme", self.checks.scheme.to_string()),
                    ("scheme_n", self.checks.scheme_n.to_string()),
                    ("reverse_T", self.checks.reverse_t.to_string()),
                ],
            ),
            (
                "sweep",
                vec![
                    ("scenario", self.sweep.scenario.name().into()),
                    ("key", self.sweep.key.clone()),
                    ("values", format!("\"{}\"", self.sweep.values.join(", "))),
                ],
            ),
        ];
        let mut out = String::new();
        for (name, keys) in sections {
            if !name.is_empty() {
                out.push_str(&format!("\n[{name}]\n"));
            }
            for (k, v) in keys {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}
