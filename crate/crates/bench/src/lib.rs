//! Shared fixtures for the criterion benches.

use gwcrp::{generate_dataset, FitSettings, LatticePattern, PreparedData, SimulationDesign, SurvivalRecord};

/// Design-I lattice data with per-region fits already done.
pub struct Fixture {
    pub design: SimulationDesign,
    pub records: Vec<SurvivalRecord>,
    pub prepared: PreparedData,
    pub settings: FitSettings,
}

pub fn lattice_fixture(seed: u64) -> Fixture {
    let design = SimulationDesign::lattice(LatticePattern::I);
    let records = generate_dataset(&design, seed).expect("simulate");
    let settings = FitSettings::default();
    let prepared = PreparedData::new(
        &design.graph,
        &records,
        design.covariate_dim(),
        design.partition.clone(),
        &settings,
    )
    .expect("per-region fits");
    Fixture {
        design,
        records,
        prepared,
        settings,
    }
}
