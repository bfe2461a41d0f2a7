//! Declarative service modeling and a reactive convergence engine over a
//! simulated multi-region provider, with a federated control plane and
//! hierarchical quotas.
//!
//! The common entry points are re-exported at the crate root.

pub mod bundle;
pub mod charm;
pub mod digest;
pub mod engine;
pub mod federation;
pub mod ids;
pub mod plan;
pub mod provider;
pub mod quota;

pub use bundle::{parse_bundle, render_bundle, Bundle, BundleError, Constraints, EndpointRef, Placement};
pub use charm::{parse_charm, CharmError, CharmRef, CharmSpec, CharmStore, EventKind, UnitStatus};
pub use engine::{Convergence, EngineError, Event, Model, StatusDocument, StepReport, DEFAULT_BUDGET};
pub use federation::{Federation, FederationError, RegionStatus};
pub use ids::{MachineId, RelationId, UnitId};
pub use plan::{compile_plan, execute_plan, export_dot, ImperativePlan, PlanError, PlanStep};
pub use provider::{Inventory, ProviderError, Scope};
pub use quota::{ProjectTree, QuotaError, QuotaSet};
