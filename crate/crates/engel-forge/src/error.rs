use thiserror::Error;

/// Every failure mode the toolkit reports.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForgeError {
    #[error("curve is not spherical: max ||γ|-1| = {deviation:.3e} exceeds {tolerance:.1e}")]
    NotSpherical { deviation: f64, tolerance: f64 },
    #[error("curve is not immersed: min |γ'| = {min_speed:.3e}")]
    NotImmersed { min_speed: f64 },
    #[error("least-squares fit is ill conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("arc is not graftable: {0}")]
    NotGraftable(String),
    #[error("convexity lost: margin {margin:.3e}")]
    ConvexityLost { margin: f64 },
    #[error("curve does not strictly surround the origin (margin {margin:.3e})")]
    NotSurrounding { margin: f64 },
    #[error("tilt problem is degenerate: least Hessian eigenvalue {min_eig:.3e}")]
    Degenerate { min_eig: f64 },
    #[error("refit residual {residual:.3e} exceeds {tolerance:.1e}")]
    RefitResidual { residual: f64, tolerance: f64 },
    #[error("node {node}: {source}")]
    AtNode {
        node: usize,
        #[source]
        source: Box<ForgeError>,
    },
    #[error("curve integral {norm:.3e} is not zero")]
    NotZeroIntegral { norm: f64 },
    #[error("could not separate strands after {attempts} perturbations (best distance {best:.3e})")]
    PerturbationFailed { attempts: usize, best: f64 },
    #[error("overlap mismatch at node {node}: {detail}")]
    OverlapMismatch { node: usize, detail: String },
    #[error("degenerate frame at sample {sample}: m2 = {m2:.3e}")]
    DegenerateFrame { sample: usize, m2: f64 },
    #[error("tangent map has rank < 4 (σ_min/σ_max = {ratio:.3e})")]
    RankDeficient { ratio: f64 },
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("tangency plane too far from reference at sample {sample}: angle {angle:.3e}")]
    AlignmentFailure { sample: usize, angle: f64 },
    #[error("point leaves the tube: y = {y:?}")]
    OutOfTube { y: [f64; 3] },
    #[error("conjugating matrix nearly singular: det = {det:.3e}")]
    NearSingularA { det: f64 },
    #[error("not co-real at sample {sample}: tangency dimension {dim}")]
    NotCoReal { sample: usize, dim: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl ForgeError {
    pub fn at_node(self, node: usize) -> ForgeError {
        ForgeError::AtNode {
            node,
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            ForgeError::NotSpherical { .. } => "NotSpherical",
            ForgeError::NotImmersed { .. } => "NotImmersed",
            ForgeError::IllConditioned { .. } => "IllConditioned",
            ForgeError::NotGraftable(_) => "NotGraftable",
            ForgeError::ConvexityLost { .. } => "ConvexityLost",
            ForgeError::NotSurrounding { .. } => "NotSurrounding",
            ForgeError::Degenerate { .. } => "Degenerate",
            ForgeError::RefitResidual { .. } => "RefitResidual",
            ForgeError::AtNode { source, .. } => source.kind(),
            ForgeError::NotZeroIntegral { .. } => "NotZeroIntegral",
            ForgeError::PerturbationFailed { .. } => "PerturbationFailed",
            ForgeError::OverlapMismatch { .. } => "OverlapMismatch",
            ForgeError::DegenerateFrame { .. } => "DegenerateFrame",
            ForgeError::RankDeficient { .. } => "RankDeficient",
            ForgeError::ModelMismatch(_) => "ModelMismatch",
            ForgeError::AlignmentFailure { .. } => "AlignmentFailure",
            ForgeError::OutOfTube { .. } => "OutOfTube",
            ForgeError::NearSingularA { .. } => "NearSingularA",
            ForgeError::NotCoReal { .. } => "NotCoReal",
            ForgeError::Invalid(_) => "Invalid",
        }
    }
}

pub type Result<T> = std::result::Result<T, ForgeError>;
