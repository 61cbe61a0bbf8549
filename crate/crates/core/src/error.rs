use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by geometry resolution, basis construction and solves.
///
/// Geometry errors carry the offending element id where one is known so that
/// a failing scenario run can point at the exact cell.
#[derive(Debug, Error)]
pub enum Error {
    #[error("segment crossed by the interface {count} times{}; assumption (H1) fails", fmt_element(.element))]
    TooManyCrossings { count: usize, element: Option<usize> },

    #[error("element {element}: interface enters and leaves through the same edge; assumption (H2) fails")]
    SameEdgeCut { element: usize },

    #[error("element {element}: expected 2 boundary cut points, found {count}")]
    BadCutCount { element: usize, count: usize },

    #[error("degenerate cut{}: no interface crossing found", fmt_element(.element))]
    DegenerateCut { element: Option<usize> },

    #[error("curved cell map not invertible{} (Jacobian changes sign); interface under-resolved", fmt_element(.element))]
    NonInvertibleMap { element: Option<usize> },

    #[error("unsupported polynomial degree {0}: only 2 and 3 are implemented")]
    UnsupportedDegree(usize),

    #[error("element {element}: least-squares system nearly singular (min-eig margin {margin:.3e})")]
    SingularBasis { element: usize, margin: f64 },

    #[error("matrix is not positive definite: {detail}")]
    NotSpd { detail: String },

    #[error("{what} did not converge after {iterations} iterations (last value {last:.6e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        last: f64,
    },

    #[error("solve residual {residual:.3e} exceeds {tolerance:.3e} relative to the right-hand side")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("grids are not nested: reference N = {fine} is not a multiple of N = {coarse}")]
    NonNestedGrids { coarse: usize, fine: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_element(element: &Option<usize>) -> String {
    match element {
        Some(id) => format!(" in element {id}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach an element id to a geometry error that was raised without one.
    pub fn with_element(self, id: usize) -> Self {
        match self {
            Error::TooManyCrossings { count, element: None } => Error::TooManyCrossings {
                count,
                element: Some(id),
            },
            Error::DegenerateCut { element: None } => Error::DegenerateCut { element: Some(id) },
            Error::NonInvertibleMap { element: None } => Error::NonInvertibleMap { element: Some(id) },
            other => other,
        }
    }
}
