//! Heavy-traffic laboratory for many-server queues with customer
//! abandonment.

pub mod inputs;
pub mod limit;
pub mod maps;
pub mod path;
pub mod renewal;
pub mod scaling;
pub mod sim;
pub mod validation;

pub use inputs::{
    ArrivalSpec, Distribution, InputError, PatienceLaw, PatienceSpec, Purpose, RandomStream,
    ScalarFn, StreamSet,
};
pub use limit::{
    covariance_matrix, covariance_s, solve_limit_case_i, solve_limit_case_ii, CaseTwoMethod,
    GaussianSampler, Grid, LimitCase, LimitError, LimitSolution, NoiseSample,
};
pub use maps::{
    solve_phi_m, solve_phi_mg, solve_phi_mg_forward, solve_phi_n_g, solve_skorokhod_g, Drift,
    DriftSign, InitialGuess, MapError, MappingSolution, PicardOptions,
};
pub use path::CadlagPath;
pub use renewal::{EquilibriumDistribution, RenewalError, RenewalTable};
pub use scaling::{ScaleError, ScaledBundle};
pub use sim::{
    offered_waits, simulate, simulate_config, virtual_wait, virtual_waits, SimError, SimRecord,
    SystemConfig, Wait, XiSpec,
};
pub use validation::{
    compare_abandonment, convergence_sweep, coupling_gap, ks_one_sample, ks_two_sample,
    little_gap, neg_part_sup, ConvergenceReport, GapStatistic, SweepSpec, ValidationError,
};
