//! Matrix elements of the Evans-Hudson flow between exponential vectors.

mod eta;
mod pair;
mod system;
mod testfn;

pub use eta::{
    covariance_check, eta_ergodicity_scan, eta_product_factorized, eta_product_flow, eta_site_flow, vacuum_inner,
    CovarianceReport, ErgodicityScan, SiteFactor, FIT_FLOOR,
};
pub use pair::{
    contraction_check, covering, homomorphism_defect, pair_element, ContractionReport, FamilyMember,
    HomomorphismReport, PairTrajectory, MAX_FAMILY, MAX_PAIR_BASIS,
};
pub use system::{
    c_f, flow_element, hp_divergence_witness, picard_error_bound, ElementSpec, FlowGeneratorSystem, FlowMethod,
    MatrixElementTrajectory, MAX_FLOW_BASIS,
};
pub use testfn::{exp_inner, parse_test_function, write_test_function, Mode, StepFunction, TestFunction};
