//! Experiment configuration (TOML, unknown keys rejected).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use ymr_core::gauge::GaugeOptions;
use ymr_core::grid::Bounds;
use ymr_core::replace::{ReplaceOptions, SweepOptions};
use ymr_core::solver::SolveOptions;
use ymr_core::{BallRegion, GroupKind, LatticeComplex, Topology};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: GroupKind,
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub region: Option<RegionConfig>,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub gauge: GaugeOptions,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub replace: ReplaceConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub gaugefix: GaugefixConfig,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub dims: [usize; 4],
    #[serde(default = "one")]
    pub spacing: f64,
    #[serde(default = "periodic")]
    pub topology: String,
}

fn one() -> f64 {
    1.0
}

fn periodic() -> String {
    "periodic".into()
}

/// Half-open vertex intervals `[lo, lo + len)` per axis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lo: [usize; 4],
    pub len: [usize; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Flat,
    RandomSmall,
    Dilated,
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    /// Algebra coordinates are drawn uniformly from `[-scale, scale]`.
    pub scale: f64,
    pub seed: u64,
    /// Dilation factor for `dilated`.
    pub lambda: f64,
    /// Input for `file`.
    pub path: Option<PathBuf>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            kind: GeneratorKind::RandomSmall,
            scale: 0.1,
            seed: 0,
            lambda: 0.5,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplaceConfig {
    pub epsilon: f64,
    pub interpolation_steps: usize,
    pub regauge: bool,
}

impl Default for ReplaceConfig {
    fn default() -> Self {
        let d = ReplaceOptions::default();
        ReplaceConfig {
            epsilon: d.epsilon,
            interpolation_steps: d.interpolation_steps,
            regauge: d.regauge,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub max_cycles: usize,
    pub tol: f64,
    /// Explicit ball origins; the default covering schedule when absent.
    pub balls: Option<Vec<[usize; 4]>>,
    /// Ball extent for explicit origins.
    pub ball_len: Option<[usize; 4]>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let d = SweepOptions::default();
        SweepConfig {
            max_cycles: d.max_cycles,
            tol: d.tol,
            balls: None,
            ball_len: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugefixVariant {
    Neumann,
    IdentityBoundary,
    DirichletCoulomb,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaugefixConfig {
    pub variant: GaugefixVariant,
}

impl Default for GaugefixConfig {
    fn default() -> Self {
        GaugefixConfig {
            variant: GaugefixVariant::DirichletCoulomb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Constant,
    GaugeOrbit,
    Interpolated,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    pub members: usize,
    /// Scale of the random gauge transformations of a gauge orbit.
    pub gauge_scale: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            kind: FamilyKind::GaugeOrbit,
            members: 8,
            gauge_scale: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// Independent instances, member `i` seeded with `member_seed(seed, i)`.
    pub members: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { members: 1 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Field to check; generated from `[generator]` when absent.
    pub input: Option<PathBuf>,
    /// Optional second field for the pair checks.
    pub other: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Used when `--out` is not given.
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("ymr-out") }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        let complex = self.complex()?;
        if let Some(r) = &self.region {
            if let Err(e) = BallRegion::from_bounds(&complex, Bounds { lo: r.lo, len: r.len }) {
                return bad("region", e.to_string());
            }
        }
        if let Err(e) = self.solver.validate() {
            return bad("solver", e.to_string());
        }
        if !(self.gauge.tol > 0.0) || self.gauge.max_iter == 0 || !(self.gauge.omega > 0.0 && self.gauge.omega < 2.0) {
            return bad("gauge", "tol must be positive, max_iter ≥ 1 and omega in (0, 2)".into());
        }
        if !(self.replace.epsilon > 0.0) {
            return bad("replace.epsilon", "must be positive".into());
        }
        if !(self.generator.scale >= 0.0) {
            return bad("generator.scale", "must be non-negative".into());
        }
        if self.generator.kind == GeneratorKind::Dilated {
            if !(0.0..=1.0).contains(&self.generator.lambda) {
                return bad("generator.lambda", "must lie in [0, 1]".into());
            }
            if self.region.is_none() {
                return bad("generator", "`dilated` needs a [region]".into());
            }
        }
        if self.generator.kind == GeneratorKind::File {
            match &self.generator.path {
                None => return bad("generator.path", "required for kind = \"file\"".into()),
                Some(p) => {
                    if let Ok(h) = ymr_core::io::read_header(p) {
                        if h.group != self.group {
                            return bad(
                                "generator.path",
                                format!("file holds a {} field but group = \"{}\"", h.group, self.group),
                            );
                        }
                    }
                }
            }
        }
        if self.ensemble.members == 0 {
            return bad("ensemble.members", "must be at least 1".into());
        }
        if self.family.members == 0 {
            return bad("family.members", "must be at least 1".into());
        }
        if self.sweep.max_cycles == 0 {
            return bad("sweep.max_cycles", "must be at least 1".into());
        }
        if self.sweep.balls.is_some() != self.sweep.ball_len.is_some() {
            return bad("sweep", "`balls` and `ball_len` go together".into());
        }
        if let Some(s) = self.schedule_override(&complex)? {
            if s.is_empty() {
                return bad("sweep.balls", "empty schedule".into());
            }
        }
        Ok(())
    }

    pub fn complex(&self) -> Result<Arc<LatticeComplex>, CliError> {
        let topology: Topology = self
            .lattice
            .topology
            .parse()
            .map_err(|e: ymr_core::Error| CliError::Config(format!("lattice.topology: {e}")))?;
        if topology == Topology::Surface {
            return Err(CliError::Config("lattice.topology: must be periodic or box".into()));
        }
        LatticeComplex::new(self.lattice.dims, self.lattice.spacing, topology)
            .map_err(|e| CliError::Config(format!("lattice: {e}")))
    }

    pub fn region(&self, complex: &Arc<LatticeComplex>) -> Result<Option<BallRegion>, CliError> {
        self.region
            .map(|r| BallRegion::from_bounds(complex, Bounds { lo: r.lo, len: r.len }))
            .transpose()
            .map_err(|e| CliError::Config(format!("region: {e}")))
    }

    pub fn require_region(&self, complex: &Arc<LatticeComplex>) -> Result<BallRegion, CliError> {
        self.region(complex)?
            .ok_or_else(|| CliError::Config("region: this subcommand needs a [region] section".into()))
    }

    fn schedule_override(&self, complex: &Arc<LatticeComplex>) -> Result<Option<Vec<BallRegion>>, CliError> {
        let (Some(balls), Some(len)) = (&self.sweep.balls, self.sweep.ball_len) else {
            return Ok(None);
        };
        balls
            .iter()
            .enumerate()
            .map(|(i, lo)| {
                BallRegion::from_bounds(complex, Bounds { lo: *lo, len })
                    .map_err(|e| CliError::Config(format!("sweep.balls[{i}]: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn schedule(&self, complex: &Arc<LatticeComplex>) -> Result<Vec<BallRegion>, CliError> {
        match self.schedule_override(complex)? {
            Some(s) => Ok(s),
            None => ymr_core::replace::default_schedule(complex)
                .map_err(|e| CliError::Config(format!("sweep: no default schedule for this lattice ({e})"))),
        }
    }

    pub fn replace_options(&self) -> ReplaceOptions {
        ReplaceOptions {
            epsilon: self.replace.epsilon,
            interpolation_steps: self.replace.interpolation_steps,
            regauge: self.replace.regauge,
            gauge: self.gauge,
            solver: self.solver,
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            replace: self.replace_options(),
            max_cycles: self.sweep.max_cycles,
            tol: self.sweep.tol,
        }
    }

    /// SHA-256 of the effective configuration (after `--seed`) as JSON.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
group = "su2"
[lattice]
dims = [6, 6, 6, 6]
[region]
lo = [1, 1, 1, 1]
len = [4, 4, 4, 4]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.group, GroupKind::Su2);
        assert_eq!(c.replace.epsilon, 0.5);
        assert_eq!(c.generator.kind, GeneratorKind::RandomSmall);
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = format!("{MINIMAL}\n[solver]\nmethod = \"newton\"\ntolerance = 1e-9\n");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("tolerance"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn region_must_fit() {
        let text = MINIMAL.replace("len = [4, 4, 4, 4]", "len = [4, 4, 4, 6]");
        let err = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(err.starts_with("region:"), "{err}");
    }

    #[test]
    fn hash_tracks_the_seed() {
        let mut a = ExperimentConfig::parse(MINIMAL).unwrap();
        let h = a.hash();
        a.generator.seed = 9;
        assert_ne!(h, a.hash());
    }
}
