//! Discrete differential forms on cubical complexes.

pub mod complex;
pub mod dec;
pub mod index;
pub mod metric;
pub mod sampled;

pub use complex::{BoundaryFace, Cell, CellClass, CubicalComplex};
pub use dec::{mass_matrix, Cochain, Dec};
pub use metric::MetricField;
pub use sampled::{BoundarySample, SampledForm};
