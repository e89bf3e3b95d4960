//! Hellinger-Kantorovich distances, entropy-transport plans, dual
//! certificates, geodesics and barycenters for discrete measures.

pub mod barycenter;
pub mod duality;
pub mod error;
pub mod geodesic;
pub mod io;
pub mod let_solver;
pub mod measure;
mod optim;
pub mod space;

pub use barycenter::{
    barycenter_fixed_point, cone_point_barycenter, extract_barycenter, multimarginal_cost, solve_multimarginal,
    transport_map, transport_map_reconstruct, xi_field, ConeBarycenterResult, FixedPointOptions, FixedPointResult,
    GridDensity, MultimarginalOptions, MultimarginalSolution, PointSearch, TupleAtom,
};
pub use duality::{
    barycenter_objective, c_transform, c_transform_table, candidate_grid, check_fi, dual_objective, potentials_from_plan,
    s_lambda_transform, s_transform, s_transform_table, weak_duality_certificate, DualityGap, FiCheck, GridOptions,
    PotentialFunction,
};
pub use error::{HkError, NonConvergence, Result};
pub use geodesic::{
    hellinger_curve, transport_curve, transport_fraction, verify_geodesic, DiracGeodesic, GeodesicKind, GeodesicReport,
};
pub use io::{
    measure_to_json, parse_measure, parse_potential, potential_to_json, read_measure, read_potential, write_measure, Json,
};
pub use let_solver::{
    certify, hk2, hk_dirac_formula, hk_solve, let_entropy, let_objective, let_oracle, CostMatrix, Method,
    OptimalityCertificate, OracleOptions, SolveReport, SolverOptions, TransportPlan,
};
pub use measure::{lift_to_cone, Atom, ConeAtom, ConeMeasure, DiscreteMeasure};
pub use space::{
    cone_distance, ell_cost, truncated_distance, ClosedBall, ConePoint, FiniteMetric, GroundSpace, Point,
};
