//! Deterministic placement: delta rewriting, propagation, free allocation,
//! verification and a brute-force oracle.

mod oracle;
mod propagate;
mod refine;
mod solve;
mod verify;

pub use oracle::{brute_force_feasible, ORACLE_MAX_CANDIDATES, ORACLE_MAX_FREE};
pub use propagate::{propagate_coordinates, Derivation, Discrepancy, Propagation, Propagator};
pub use refine::{answer_positions, assign_with_refinement, assignment_request, scene_from_records, Refinement};
pub use solve::{allocate_free, assign_directions, solve, SolveOptions, Solution};
pub use verify::{
    check_relation, verify, Endpoint, VerificationReport, Violation, ViolationKind,
    ANGLE_TOLERANCE_DEG, BETWEEN_TOLERANCE_MM, OFFSET_TOLERANCE_MM,
};

use crate::error::EngineError;
use crate::scene::{normalize_direction, Coordinate, Direction};

/// Heading from `from` towards `to`, counter-clockwise from `+x`.
pub fn compute_orientation(from: Coordinate, to: Coordinate) -> Result<Direction, EngineError> {
    if from == to {
        return Err(EngineError::DegenerateOrientation);
    }
    let dy = (to.y - from.y) as f64;
    let dx = (to.x - from.x) as f64;
    let mut deg = dy.atan2(dx).to_degrees();
    let r = deg.round();
    if (deg - r).abs() < 1e-9 {
        deg = r;
    }
    normalize_direction(deg).map_err(|_| EngineError::DegenerateOrientation)
}
