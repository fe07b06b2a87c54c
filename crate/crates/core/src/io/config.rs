//! Run configuration: a sectioned `key = value` file (TOML syntax) with
//! every default filled in on parse and unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::approx::SolveOptions;
use crate::continuation::{LadderSpec, VacuumThresholds, DEFAULT_LADDER};
use crate::elliptic::LameParams;
use crate::error::{Result, SolverError};
use crate::geometry::{DomainSpec, Grid, VectorField};
use crate::pressure::{CutoffSpec, PressureLaw};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory; the command line takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub domain: DomainConfig,
    pub law: LawConfig,
    #[serde(default)]
    pub cutoff: CutoffConfig,
    pub flow: FlowConfig,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

fn default_seed() -> u64 {
    7
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Rectangle {
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        height: f64,
        resolution: [usize; 2],
    },
    Annulus {
        r_in: f64,
        r_out: f64,
        resolution: [usize; 2],
    },
}

impl DomainConfig {
    pub fn spec(&self) -> DomainSpec {
        match *self {
            Self::Rectangle {
                width,
                height,
                resolution,
            } => DomainSpec::rectangle(width, height, resolution[0], resolution[1]),
            Self::Annulus { r_in, r_out, resolution } => DomainSpec::annulus(r_in, r_out, resolution[0], resolution[1]),
        }
    }

    /// Same shape at a coarser resolution, keeping the aspect of the node counts.
    pub fn coarse_spec(&self, n: usize) -> DomainSpec {
        match *self {
            Self::Rectangle { width, height, .. } => DomainSpec::rectangle(width, height, n, n),
            Self::Annulus { r_in, r_out, .. } => DomainSpec::annulus(r_in, r_out, n, 4 * n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Singular {
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "two")]
        gamma: f64,
        #[serde(default = "one")]
        beta: f64,
        #[serde(default = "quarter")]
        rho0: f64,
    },
    Power {
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "two")]
        gamma: f64,
        #[serde(default = "quarter")]
        rho0: f64,
    },
}

impl LawConfig {
    pub fn law(&self) -> PressureLaw {
        match *self {
            Self::Singular { a, gamma, beta, rho0 } => PressureLaw::singular(a, gamma, beta, rho0),
            Self::Power { a, gamma, rho0 } => PressureLaw::power(a, gamma, rho0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CutoffConfig {
    /// `m₂ = π⁻¹(factor·‖G‖∞)` from a coarse solve, `n₂` from the balance
    /// of the two pressure tails.
    Auto {
        #[serde(default = "presolve_default")]
        presolve_resolution: usize,
        #[serde(default = "four")]
        factor: f64,
    },
    /// `n₂` absent means balanced against `m₂`.
    Manual {
        m2: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n2: Option<f64>,
    },
}

impl Default for CutoffConfig {
    fn default() -> Self {
        Self::Auto {
            presolve_resolution: presolve_default(),
            factor: 4.0,
        }
    }
}

fn presolve_default() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub h: f64,
    #[serde(default = "eps_default")]
    pub eps: f64,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "half")]
    pub nu: f64,
    #[serde(default = "one")]
    pub friction: f64,
    /// Body acceleration multiplying the density.
    #[serde(default)]
    pub fr: ForceConfig,
    /// Force independent of the density.
    #[serde(default)]
    pub force: ForceConfig,
}

fn eps_default() -> f64 {
    0.1
}

impl FlowConfig {
    pub fn lame(&self) -> LameParams {
        LameParams {
            mu: self.mu,
            nu: self.nu,
            friction: self.friction,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForceConfig {
    #[default]
    Zero,
    Constant {
        value: [f64; 2],
    },
    /// `(0, −g)`
    Gravity {
        g: f64,
    },
    /// Text file with rows `x y f1 f2`; each node takes the nearest sample.
    File {
        path: PathBuf,
    },
}

impl ForceConfig {
    pub fn evaluate(&self, grid: &Grid, base: &Path) -> Result<VectorField> {
        let n = grid.len();
        match self {
            Self::Zero => Ok(VectorField::zeros(n)),
            Self::Constant { value } => Ok(VectorField::constant(n, *value)),
            Self::Gravity { g } => Ok(VectorField::constant(n, [0.0, -g])),
            Self::File { path } => {
                let path = if path.is_absolute() { path.clone() } else { base.join(path) };
                let samples = read_samples(&path)?;
                Ok(VectorField::from_fn(n, |k| {
                    let [x, y] = grid.point(k);
                    let best = samples
                        .iter()
                        .min_by(|a, b| {
                            let da = (a[0] - x).powi(2) + (a[1] - y).powi(2);
                            let db = (b[0] - x).powi(2) + (b[1] - y).powi(2);
                            da.total_cmp(&db)
                        })
                        .expect("nonempty samples");
                    [best[2], best[3]]
                }))
            }
        }
    }

    fn validate(&self, key: &str) -> Result<()> {
        let finite = match self {
            Self::Zero | Self::File { .. } => true,
            Self::Constant { value } => value.iter().all(|v| v.is_finite()),
            Self::Gravity { g } => g.is_finite(),
        };
        if finite {
            Ok(())
        } else {
            Err(SolverError::config(format!("flow.{key}: force values must be finite")))
        }
    }
}

fn read_samples(path: &Path) -> Result<Vec<[f64; 4]>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SolverError::config(format!("{}:{}: {e}", path.display(), no + 1)))?;
        if vals.len() != 4 {
            return Err(SolverError::config(format!(
                "{}:{}: expected 4 columns (x y f1 f2), got {}",
                path.display(),
                no + 1,
                vals.len()
            )));
        }
        out.push([vals[0], vals[1], vals[2], vals[3]]);
    }
    if out.is_empty() {
        return Err(SolverError::config(format!("{}: no force samples", path.display())));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    #[serde(default = "ladder_default")]
    pub eps: Vec<f64>,
    #[serde(default = "thresholds_default")]
    pub thresholds: VacuumThresholds,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<RungOverride>,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            eps: ladder_default(),
            thresholds: thresholds_default(),
            overrides: Vec::new(),
        }
    }
}

fn ladder_default() -> Vec<f64> {
    DEFAULT_LADDER.to_vec()
}

fn thresholds_default() -> VacuumThresholds {
    VacuumThresholds::FromG
}

/// Solver settings replaced on one rung (0-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RungOverride {
    pub rung: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homotopy_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relax: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "bank_default")]
    pub bank_size: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { bank_size: bank_default() }
    }
}

fn bank_default() -> usize {
    32
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn four() -> f64 {
    4.0
}

fn half() -> f64 {
    0.5
}

fn quarter() -> f64 {
    0.25
}

impl RunConfig {
    /// Checks every block invariant that does not need a solve.
    pub fn validate(&self) -> Result<()> {
        self.domain.spec().validate()?;
        let law = self.law.law();
        law.validate()?;
        let f = &self.flow;
        if !(f.h > 0.0 && f.h.is_finite()) {
            return Err(SolverError::config(format!("flow.h > 0 required, got {}", f.h)));
        }
        law.validate_mean(f.h)?;
        if !(f.eps > 0.0 && f.eps.is_finite()) {
            return Err(SolverError::config(format!("flow.eps > 0 required, got {}", f.eps)));
        }
        f.lame().validate()?;
        f.fr.validate("fr")?;
        f.force.validate("force")?;
        self.solver.validate()?;
        self.ladder_spec().validate()?;
        for o in &self.ladder.overrides {
            if o.rung >= self.ladder.eps.len() {
                return Err(SolverError::config(format!(
                    "ladder override for rung {} but the ladder has {} rungs",
                    o.rung,
                    self.ladder.eps.len()
                )));
            }
        }
        if self.diagnostics.bank_size < 10 {
            return Err(SolverError::config("diagnostics.bank_size >= 10 required"));
        }
        match self.cutoff {
            CutoffConfig::Auto {
                presolve_resolution,
                factor,
            } => {
                self.domain.coarse_spec(presolve_resolution).validate()?;
                if !(factor >= 1.0 && factor.is_finite()) {
                    return Err(SolverError::config("cutoff.factor >= 1 required"));
                }
            }
            CutoffConfig::Manual { .. } => {
                self.manual_cutoff()?;
            }
        }
        Ok(())
    }

    /// The cutoff when it is given explicitly.
    pub fn manual_cutoff(&self) -> Result<Option<CutoffSpec>> {
        let law = self.law.law();
        let h = self.flow.h;
        match self.cutoff {
            CutoffConfig::Auto { .. } => Ok(None),
            CutoffConfig::Manual { m2, n2: Some(n2) } => {
                let c = CutoffSpec::from_outer(n2, m2, h);
                c.validate(&law)?;
                Ok(Some(c))
            }
            CutoffConfig::Manual { m2, n2: None } => {
                if !(m2 - h > h) {
                    return Err(SolverError::config(format!(
                        "cutoff constraint h < m1 violated (m1 = m2 - h = {}, h = {h})",
                        m2 - h
                    )));
                }
                Ok(Some(CutoffSpec::balanced(&law, m2, h)?))
            }
        }
    }

    pub fn ladder_spec(&self) -> LadderSpec {
        let mut overrides = vec![None; self.ladder.eps.len()];
        for o in &self.ladder.overrides {
            if let Some(slot) = overrides.get_mut(o.rung) {
                let mut s = self.solver.clone();
                if let Some(v) = o.homotopy_steps {
                    s.homotopy_steps = v;
                }
                if let Some(v) = o.relax {
                    s.relax = v;
                }
                if let Some(v) = o.tol {
                    s.tol = v;
                }
                if let Some(v) = o.max_iterations {
                    s.max_iterations = v;
                }
                *slot = Some(s);
            }
        }
        LadderSpec {
            eps: self.ladder.eps.clone(),
            overrides,
            base: self.solver.clone(),
            thresholds: self.ladder.thresholds,
        }
    }

    /// Fully resolved configuration as text; parsing it gives back `self`.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| SolverError::config(e.to_string().trim_end().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[domain]
shape = "rectangle"
resolution = [16, 16]

[law]
kind = "singular"

[flow]
h = 1.0
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.law.law(), PressureLaw::default());
        assert_eq!(c.flow.eps, 0.1);
        assert_eq!(c.ladder.eps, DEFAULT_LADDER.to_vec());
        assert_eq!(c.solver, SolveOptions::default());
        assert!(matches!(c.cutoff, CutoffConfig::Auto { .. }));
        assert_eq!(c.flow.fr, ForceConfig::Zero);
    }

    #[test]
    fn echo_round_trips() {
        let text = format!(
            "{MINIMAL}\n[flow.fr]\npreset = \"gravity\"\ng = 20.0\n[cutoff]\nmode = \"manual\"\nm2 = 3.0\n[[ladder.overrides]]\nrung = 1\nmax_iterations = 3\n"
        )
        .replace("[flow]\nh = 1.0\n", "");
        let text = format!("{text}\n[flow]\nh = 1.0\n");
        let a = parse_config_str(&text).unwrap();
        let b = parse_config_str(&a.echo()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.echo(), b.echo());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("h = 1.0", "h = 1.0\nviscosity = 2.0");
        let e = parse_config_str(&bad).unwrap_err();
        assert!(matches!(e, SolverError::Config(_)));
        assert!(e.to_string().contains("viscosity"), "{e}");
        let bad = format!("{MINIMAL}\n[extra]\nx = 1\n");
        assert!(parse_config_str(&bad).is_err());
    }

    #[test]
    fn type_mismatch_is_a_config_error() {
        let bad = MINIMAL.replace("h = 1.0", "h = \"one\"");
        assert!(matches!(parse_config_str(&bad), Err(SolverError::Config(_))));
    }

    #[test]
    fn small_m1_names_the_constraint() {
        let bad = format!("{MINIMAL}\n[cutoff]\nmode = \"manual\"\nm2 = 1.5\nn2 = 8.0\n");
        let e = parse_config_str(&bad).unwrap_err();
        assert!(e.to_string().contains("h < m1"), "{e}");
    }

    #[test]
    fn nonpositive_eps_is_rejected() {
        let bad = MINIMAL.replace("h = 1.0", "h = 1.0\neps = 0.0");
        assert!(matches!(parse_config_str(&bad), Err(SolverError::Config(_))));
    }
}
