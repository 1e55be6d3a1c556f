//! Vital registry and constraint-set compilation.

pub mod registry;
pub mod set;

pub use registry::{standard_registry, RegistryError, VitalRegistry, VitalSpec};
pub use set::{
    build_normal, build_physical, var_index, BigMRow, BuildError, ConstraintSet, IndicatorGroup, LogicRow, RateRow,
    Relation, RelationRow, Rule,
};
