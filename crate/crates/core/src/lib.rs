//! Streaming outlier classification and attribute-combination explanation.

pub mod classify;
pub mod dictionary;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod explain;
pub mod ingest;
pub mod operator;
pub mod point;
pub mod query;
pub mod sketches;
pub mod streamexplain;

pub use dictionary::AttributeDictionary;
pub use error::{Error, Result};
pub use point::{AttrId, Class, Label, LabeledPoint, Point, NULL_ATTR};
pub use query::QuerySpec;
