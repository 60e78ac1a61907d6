//! Fractional Brownian motion, Sobolev-type path functionals, their
//! Malliavin derivative norms and small-ball probabilities.

pub mod acceptance;
pub mod error;
pub mod fbm;
pub mod io;
pub mod linalg;
pub mod malliavin;
pub mod paley_wiener;
pub mod rng;
pub mod small_deviation;
pub mod sobolev;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use fbm::{FbmPath, Grid, HurstParam, PathEnsemble, SamplerTag};
