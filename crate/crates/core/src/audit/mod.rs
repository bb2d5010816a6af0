//! Numerical certification of the assumptions and oracle inequalities.

mod aggregation;
mod certificate;
mod growth;
mod simulate;

pub use aggregation::{check_agg_assumption, AggReport, AggViolation};
pub use certificate::{
    verify_main_theorem, verify_single_level, BoundCertificate, BoundComponents, MainTheoremCertificates,
    NUMERIC_TOL,
};
pub use growth::{grid_growth_audit, growth_audit_from, sandwich_violations, GrowthAudit, LevelRecord};
pub use simulate::{simulate_generalization, SimulationReport, TaskGenerator};
