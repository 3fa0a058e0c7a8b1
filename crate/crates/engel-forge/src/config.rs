//! Run configuration for the command-line front end.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cr::{AcsSpec, Model};
use crate::curve::{self, PeriodicCurve};
use crate::engel::SecondBracket;
use crate::error::{ForgeError, Result};
use crate::family::{BaseChart, SampleGrid};
use crate::prolong::WIGGLE_BUDGET;
use crate::report::Pole;
use crate::surgery::graft::GraftableArc;
use crate::surgery::seed::SeedShape;

/// Smallest accepted grid resolution.
pub const MIN_RESOLUTION: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Verb {
    Convexity,
    Surround,
    Graft,
    Rebalance,
    Integrate,
    ProlongCheck,
    CrCheck,
    ZoomSweep,
    Pipeline,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Convexity => "convexity",
            Verb::Surround => "surround",
            Verb::Graft => "graft",
            Verb::Rebalance => "rebalance",
            Verb::Integrate => "integrate",
            Verb::ProlongCheck => "prolong-check",
            Verb::CrCheck => "cr-check",
            Verb::ZoomSweep => "zoom-sweep",
            Verb::Pipeline => "pipeline",
        }
    }
}

/// Where the input curve comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSource {
    /// Latitude circle at height `c`.
    Latitude { c: f64 },
    GreatCircle,
    /// The shipped graftable seed.
    Seed,
    /// A closed space curve with convex tangent indicatrix.
    Rosette,
    /// Curve JSON (`modes`, `a`, `b`), relative to the config file.
    File { path: PathBuf },
    Inline { curve: PeriodicCurve },
}

/// Whether the curve is a direction curve on the sphere or a space curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Direction,
    Space,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveInput {
    pub source: CurveSource,
    /// Defaults to `space` for the rosette and `direction` otherwise.
    #[serde(default)]
    pub role: Option<Role>,
    /// Factor applied to space curves (keeps fibers inside the tube).
    #[serde(default = "one")]
    pub scale: f64,
}

impl Default for CurveInput {
    fn default() -> CurveInput {
        CurveInput {
            source: CurveSource::Seed,
            role: None,
            scale: 1.0,
        }
    }
}

impl CurveInput {
    pub fn role(&self) -> Role {
        self.role.unwrap_or(match self.source {
            CurveSource::Rosette => Role::Space,
            _ => Role::Direction,
        })
    }

    /// Load the raw curve; relative file paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<PeriodicCurve> {
        Ok(match &self.source {
            CurveSource::Latitude { c } => PeriodicCurve::latitude(*c),
            CurveSource::GreatCircle => PeriodicCurve::great_circle(),
            CurveSource::Seed => SeedShape::standard().curve()?,
            CurveSource::Rosette => PeriodicCurve::twisted_rosette(),
            CurveSource::File { path } => {
                let p = base.join(path);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| ForgeError::Invalid(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| ForgeError::Invalid(format!("bad curve file {}: {e}", path.display())))?
            }
            CurveSource::Inline { curve } => curve.clone(),
        })
    }

    /// The direction curve: the input itself or the tangent indicatrix.
    pub fn direction(&self, base: &Path) -> Result<PeriodicCurve> {
        let c = self.load(base)?;
        match self.role() {
            Role::Direction => Ok(c),
            Role::Space => Ok(curve::indicatrix(&c, curve::DEFAULT_SAMPLES)?.curve),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_base")]
    pub base: [usize; 3],
    #[serde(default = "default_fiber")]
    pub fiber: usize,
    /// Base chart for prolongation checks; the zoom grid is always `[-1, 1]³`.
    #[serde(default = "default_chart")]
    pub chart: BaseChart,
}

impl Default for GridConfig {
    fn default() -> GridConfig {
        GridConfig {
            base: default_base(),
            fiber: default_fiber(),
            chart: default_chart(),
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> SampleGrid {
        SampleGrid::new(self.chart, self.base, self.fiber)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Target for `|∫γ|` after rebalancing.
    #[serde(default = "default_integral")]
    pub integral: f64,
    /// Minimum strand separation of integrated curves.
    #[serde(default = "default_embed")]
    pub embed: f64,
    /// Overlap agreement when patching charts.
    #[serde(default = "default_patch")]
    pub patch: f64,
    /// Largest accepted angle between tangency and prolongation.
    #[serde(default = "default_angle")]
    pub angle: f64,
}

impl Default for Tolerances {
    fn default() -> Tolerances {
        Tolerances {
            integral: default_integral(),
            embed: default_embed(),
            patch: default_patch(),
            angle: default_angle(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraftConfig {
    #[serde(default = "one_usize")]
    pub n: usize,
    #[serde(default = "one")]
    pub s: f64,
    /// Homotopy samples checked for convexity.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Wiggle multiplicity budget, reported alongside the check.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "GraftableArc::standard")]
    pub arc: GraftableArc,
}

impl Default for GraftConfig {
    fn default() -> GraftConfig {
        GraftConfig {
            n: 1,
            s: 1.0,
            steps: default_steps(),
            budget: default_budget(),
            arc: GraftableArc::standard(),
        }
    }
}

/// How fibers vary over the base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Frozen,
    Rotation { amplitude: f64 },
}

impl Default for FamilyConfig {
    fn default() -> FamilyConfig {
        FamilyConfig::Frozen
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prolongation {
    /// Directions are the unit tangents of the space fibers.
    #[default]
    Derived,
    /// Directions are the input curve itself.
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrConfig {
    #[serde(default = "default_model")]
    pub model: Model,
    #[serde(default = "default_acs")]
    pub acs: AcsSpec,
    /// Fiber dilation for `cr-check`.
    #[serde(default = "one")]
    pub lambda: f64,
    /// Dilations for `zoom-sweep`, strictly decreasing.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_center")]
    pub center: [f64; 3],
    #[serde(default = "default_bisection")]
    pub bisection_width: f64,
}

impl Default for CrConfig {
    fn default() -> CrConfig {
        CrConfig {
            model: default_model(),
            acs: default_acs(),
            lambda: 1.0,
            lambdas: default_lambdas(),
            center: default_center(),
            bisection_width: default_bisection(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Overlap width in grid steps on each side.
    #[serde(default = "default_overlap")]
    pub overlap: usize,
}

impl Default for PatchConfig {
    fn default() -> PatchConfig {
        PatchConfig {
            delta: default_delta(),
            overlap: default_overlap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    #[serde(default = "yes")]
    pub svg: bool,
    #[serde(default)]
    pub pole: Pole,
}

impl Default for PlotConfig {
    fn default() -> PlotConfig {
        PlotConfig {
            svg: true,
            pole: Pole::South,
        }
    }
}

/// Everything a run needs. Only `command` is required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Verb,
    #[serde(default)]
    pub curve: CurveInput,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub graft: GraftConfig,
    /// Pipeline only: skip grafting and feed the curve straight in.
    #[serde(default = "yes")]
    pub pipeline_graft: bool,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub prolongation: Prolongation,
    #[serde(default)]
    pub second_bracket: SecondBracket,
    #[serde(default)]
    pub cr: CrConfig,
    #[serde(default)]
    pub patch: PatchConfig,
    #[serde(default)]
    pub plot: PlotConfig,
    /// Output directory; the command line wins.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_base() -> [usize; 3] {
    [8, 8, 8]
}
fn default_fiber() -> usize {
    32
}
fn default_chart() -> BaseChart {
    BaseChart::Box {
        lo: [-1.0; 3],
        hi: [1.0; 3],
    }
}
fn default_samples() -> usize {
    curve::DEFAULT_SAMPLES
}
fn default_directions() -> usize {
    curve::DEFAULT_DIRECTIONS
}
fn default_integral() -> f64 {
    1e-10
}
fn default_embed() -> f64 {
    1e-3
}
fn default_patch() -> f64 {
    1e-8
}
fn default_angle() -> f64 {
    1e-8
}
fn default_steps() -> usize {
    64
}
fn default_budget() -> usize {
    WIGGLE_BUDGET
}
fn default_model() -> Model {
    Model::Flat
}
fn default_acs() -> AcsSpec {
    AcsSpec::Standard
}
fn default_lambdas() -> Vec<f64> {
    vec![1.0, 0.5, 0.2, 0.1, 0.05, 0.01]
}
fn default_center() -> [f64; 3] {
    [0.3, 0.2, 0.1]
}
fn default_bisection() -> f64 {
    1e-2
}
fn default_delta() -> f64 {
    0.25
}
fn default_overlap() -> usize {
    2
}

/// A configuration problem: reported as a usage error, nothing is written.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct SchemaError(pub String);

impl RunConfig {
    pub fn parse(text: &str) -> std::result::Result<RunConfig, SchemaError> {
        if text.trim().is_empty() {
            return Err(SchemaError("configuration is empty".into()));
        }
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| SchemaError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), SchemaError> {
        let bad = |m: String| Err(SchemaError(m));
        if self.samples < MIN_RESOLUTION || self.directions < MIN_RESOLUTION {
            return bad(format!("samples and directions must be at least {MIN_RESOLUTION}"));
        }
        if self.grid.base.iter().any(|n| *n < MIN_RESOLUTION) || self.grid.fiber < MIN_RESOLUTION {
            return bad(format!("grid resolutions must be at least {MIN_RESOLUTION}"));
        }
        let t = &self.tolerances;
        if [t.integral, t.embed, t.patch, t.angle].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("tolerances must be positive".into());
        }
        if !(self.curve.scale > 0.0 && self.curve.scale.is_finite()) {
            return bad("curve scale must be positive".into());
        }
        if self.graft.n == 0 || self.graft.steps == 0 || !(0.0..=1.0).contains(&self.graft.s) {
            return bad("graft needs n >= 1, steps >= 1 and s in [0, 1]".into());
        }
        let l = &self.cr.lambdas;
        if l.is_empty() || l.iter().any(|v| !(*v > 0.0)) || l.windows(2).any(|w| w[1] >= w[0]) {
            return bad("lambdas must be positive and strictly decreasing".into());
        }
        if !(self.cr.lambda > 0.0) || !(self.cr.bisection_width > 0.0) {
            return bad("lambda and bisection width must be positive".into());
        }
        if let FamilyConfig::Rotation { amplitude } = self.family {
            if !(amplitude >= 0.0 && amplitude.is_finite()) {
                return bad("rotation amplitude must be non-negative".into());
            }
        }
        if !(0.0..1.0).contains(&self.patch.delta) || self.patch.overlap == 0 {
            return bad("patch delta must lie in [0, 1) and overlap be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration as run (output directory excluded).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_commandless_configs_are_rejected() {
        assert!(RunConfig::parse("").is_err());
        assert!(RunConfig::parse("{}").is_err());
        assert!(RunConfig::parse(r#"{"command": "convexity", "bogus": 1}"#).is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(r#"{"command": "zoom-sweep"}"#).unwrap();
        assert_eq!(c.grid.base, [8, 8, 8]);
        assert_eq!(c.cr.lambdas.len(), 6);
        assert_eq!(c.graft.budget, 9);
        assert_eq!(c.curve.role(), Role::Direction);
    }

    #[test]
    fn coarse_grids_and_bad_tolerances_fail() {
        assert!(RunConfig::parse(r#"{"command": "cr-check", "grid": {"base": [4, 8, 8]}}"#).is_err());
        assert!(RunConfig::parse(r#"{"command": "rebalance", "tolerances": {"integral": 0}}"#).is_err());
        assert!(RunConfig::parse(r#"{"command": "zoom-sweep", "cr": {"lambdas": [0.1, 1.0]}}"#).is_err());
    }

    #[test]
    fn hash_tracks_content_but_not_output() {
        let a = RunConfig::parse(r#"{"command": "convexity", "out": "x"}"#).unwrap();
        let b = RunConfig::parse(r#"{"command": "convexity", "out": "y"}"#).unwrap();
        let c = RunConfig::parse(r#"{"command": "convexity", "seed": 3}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
