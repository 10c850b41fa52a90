use crate::Vec3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported kinetic model: {0}")]
    UnsupportedModel(String),

    #[error("point ({:.6}, {:.6}, {:.6}) is not inside the domain", .0.x, .0.y, .0.z)]
    OutsideDomain(Vec3),

    #[error("kernel evaluated at coincident velocities")]
    CoincidentVelocities,

    #[error("mesh under-resolved: required spacing {required:.3e}, actual {actual:.3e}")]
    UnderResolved { required: f64, actual: f64 },

    #[error("geodesic length {len:.4e} exceeds admissible radius {max:.4e}")]
    GeodesicRange { len: f64, max: f64 },

    #[error("velocity is outgoing at the boundary (zeta . n = {0:.3e} >= 0)")]
    OutgoingVelocity(f64),

    #[error("fixed-point iteration did not converge in {iters} iterations (last update {last:.3e})")]
    Diverged {
        iters: usize,
        last: f64,
        residuals: Vec<f64>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
