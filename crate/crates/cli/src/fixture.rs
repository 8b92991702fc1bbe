//! Synthetic CSV fixture mirroring the simulation generator.
//!
//! The files under `fixtures/synthetic` are produced by [`write_fixture`] and
//! are what `minbo estimate` is checked against.

use std::fmt::Write as _;
use std::path::Path;

use minbo::model::SecondaryDataset;
use minbo::numerics::RngStream;
use minbo::simulation::{
    gen_scenario, scheme_requests, EstimatorId, Missingness, Scenario, SimulationConfig,
    DEFAULT_ETA,
};

use crate::error::CliError;

pub const FIXTURE_N: usize = 400;
pub const FIXTURE_RHO: f64 = 0.4;
pub const FIXTURE_SEED: u64 = 7_031_995;
/// Schemes listed in the fixture's config, in order.
pub const FIXTURE_ESTIMATORS: [EstimatorId; 4] = [
    EstimatorId::Single100,
    EstimatorId::Ave111,
    EstimatorId::Agg111,
    EstimatorId::Omn111,
];

pub fn fixture_config() -> SimulationConfig {
    let mut cfg = SimulationConfig::new(FIXTURE_N, FIXTURE_RHO, 1, FIXTURE_SEED);
    cfg.missingness = Missingness::Mcar { eta: DEFAULT_ETA };
    cfg.estimators = FIXTURE_ESTIMATORS.to_vec();
    cfg
}

pub fn fixture_scenario() -> Result<Scenario, CliError> {
    Ok(gen_scenario(&fixture_config(), &mut RngStream::new(FIXTURE_SEED, 0))?)
}

pub fn subject_id(i: usize) -> String {
    format!("S{:04}", i + 1)
}

const CONFIG: &str = r#"# Synthetic three-source analysis: two longitudinal studies and one
# cross-sectional study, 400 subjects with MCAR secondary observation.

[main]
file = "main.csv"
outcome = "y"
covariates = ["x1", "x2", "x3"]

[[secondary]]
file = "visits1.csv"
kind = "longitudinal"
time = "time"
outcome = "y"
covariates = ["x1", "x2", "x3"]
variance_mode = "preliminary_residual"

[[secondary]]
file = "visits2.csv"
kind = "longitudinal"
time = "time"
outcome = "y"
covariates = ["x1", "x2", "x3"]
variance_mode = "preliminary_residual"

[[secondary]]
file = "cross.csv"
kind = "cross_sectional"
outcome = "y"
covariates = ["x1"]
redundant = ["z1", "z2"]
link = "logit"

[[scheme]]
label = "single100"
kind = "custom"
omega = ["1, 0, 0"]

[[scheme]]
label = "ave111"
kind = "averaging"
weight_mode = "iib"

[[scheme]]
label = "agg111"
kind = "aggregating"

[[scheme]]
label = "omn111"
kind = "custom"
omega = ["0.5, 0, 0.5", "0, 1, 0"]
weight_mode = "iib"

[output]
format = "json"
"#;

/// Writes the CSV files and `analysis.cfg` into `dir`.
pub fn write_fixture(dir: &Path) -> Result<(), CliError> {
    let sc = fixture_scenario()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let n = sc.main.n();

    let mut main = String::from("id,y,x1,x2,x3\n");
    for i in 0..n {
        let x = sc.main.x().row(i);
        writeln!(main, "{},{},{},{},{}", subject_id(i), sc.main.y()[i], x[1], x[2], x[3]).unwrap();
    }
    put(dir, "main.csv", &main)?;

    for (k, name) in ["visits1.csv", "visits2.csv"].into_iter().enumerate() {
        let SecondaryDataset::Longitudinal(d) = &sc.secondaries[k] else {
            unreachable!("datasets 1 and 2 are longitudinal");
        };
        let mut s = String::from("id,time,y,x1,x2,x3\n");
        for i in (0..n).filter(|&i| d_observed(&sc.secondaries[k], i)) {
            for v in 0..d.m() {
                let x = d.x(i).row(v);
                writeln!(s, "{},{},{},{},{},{}", subject_id(i), v + 1, d.y(i)[v], x[1], x[2], x[3])
                    .unwrap();
            }
        }
        put(dir, name, &s)?;
    }

    let SecondaryDataset::CrossSectional(d) = &sc.secondaries[2] else {
        unreachable!("dataset 3 is cross-sectional");
    };
    let mut s = String::from("id,y,x1,z1,z2\n");
    for i in (0..n).filter(|&i| d_observed(&sc.secondaries[2], i)) {
        let (x, z) = (d.x().row(i), d.z().row(i));
        writeln!(s, "{},{},{},{},{}", subject_id(i), d.y()[i], x[1], z[0], z[1]).unwrap();
    }
    put(dir, "cross.csv", &s)?;
    put(dir, "analysis.cfg", CONFIG)
}

fn d_observed(d: &SecondaryDataset, i: usize) -> bool {
    d.observed()[i]
}

fn put(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

/// The fixture's schemes as the simulation module builds them.
pub fn fixture_requests() -> Vec<minbo::analysis::SchemeRequest> {
    scheme_requests(&FIXTURE_ESTIMATORS)
}
