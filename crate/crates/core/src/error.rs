use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite value")]
    NonFinite,
    #[error("rotation is not a proper orthonormal matrix (orthonormality error {orthonormality_error:e}, determinant error {determinant_error:e})")]
    InvalidRotation { orthonormality_error: f64, determinant_error: f64 },
    #[error("eye and target coincide or view direction is parallel to up")]
    DegenerateLookAt,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("image buffer has {actual} samples, expected {expected}")]
    ImageSize { expected: usize, actual: usize },
    #[error("vertex {0} of the triangle does not project into the image")]
    DegenerateProjection(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("cannot merge two empty statistics")]
    EmptyMerge,
    #[error("degenerate statistics: n = {n}, second eigenvalue = {lambda2:e}")]
    DegenerateStatistics { n: u64, lambda2: f64 },
    #[error("invalid truncation config: {0}")]
    InvalidConfig(String),
    #[error("block allocation limit of {0} blocks exceeded")]
    AllocationLimit(usize),
    #[error("non-finite input point")]
    NonFinitePoint,
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic or header: {0}")]
    BadHeader(String),
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("volume has no observed surface")]
    EmptyVolume,
    #[error("face {face} references vertex {vertex} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, vertex: usize, count: usize },
    #[error("mesh has no faces")]
    EmptyMesh,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MrfError {
    #[error("node {0} has no candidate labels")]
    NoCandidates(usize),
    #[error("node {node}: {msg}")]
    InvalidNode { node: usize, msg: String },
    #[error("edge {edge} references node {node} out of range")]
    InvalidEdge { edge: usize, node: usize },
    #[error("invalid Potts weight {0}")]
    InvalidWeight(f64),
    #[error("exhaustive mode supports at most {max} nodes, problem has {nodes}")]
    TooLargeForExhaustive { nodes: usize, max: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextureError {
    #[error("invalid vignetting model: gain not positive at r = {0}")]
    InvalidVignetting(f64),
    #[error("expected a {expected}-channel image, got {actual}")]
    Channels { expected: usize, actual: usize },
    #[error("seam system is singular: {0}")]
    SingularSystem(String),
    #[error("atlas overflow: charts need more than {pages} page(s) of {size}x{size} texels")]
    AtlasOverflow { pages: usize, size: usize },
    #[error("frame {0} referenced by the assignment is missing")]
    MissingFrame(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticError {
    #[error("pixel class id {id} is outside the palette of {classes} classes")]
    UnknownClass { id: u32, classes: usize },
    #[error("invalid palette: {0}")]
    InvalidPalette(String),
    #[error("expected a single-channel label image, got {0} channels")]
    NotALabelImage(usize),
    #[error(transparent)]
    Mrf(#[from] MrfError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid beam pattern: {0}")]
    InvalidPattern(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
