//! Elliptic-curve group arithmetic, hashing and canonical encodings.

mod curve;
mod field;
mod hash;
mod mont;

pub use curve::{Curve, CurveParams, Point, Scalar};
pub use hash::{h2, h2_parts, pad32, widen32, Digest32, TAG_H1, TAG_H2, TAG_KDF, TAG_MASK};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("malformed point encoding: {0}")]
    MalformedPoint(&'static str),
    #[error("scalar not below the group order")]
    ScalarOutOfRange,
    #[error("invalid curve parameters: {0}")]
    InvalidCurve(String),
    #[error("unknown curve `{0}`")]
    UnknownCurve(String),
}
