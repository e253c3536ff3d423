//! Shared fixtures for unit and integration tests.
#![doc(hidden)]

use crate::catalog::{Architecture, GrowthRegime, GrowthShape, HardwareSku, InterconnectClass, ModelSpec, SkuKind};
use crate::lifecycle::{sinusoidal_diurnal_shape, DemandTrajectory, MixShare, Scenario};
use crate::perf::{PerfCalibration, SloSpec, WorkloadShape};
use crate::search::ScenarioTemplate;
use crate::tco::{AmortizationSchedule, CoolingKind, InfrastructureDesign, NetworkTier, PowerTopology, PriceBook};
use crate::time::Month;

pub fn test_sku(id: &str, release: Month, flops: f64, cost: f64) -> HardwareSku {
    HardwareSku {
        id: id.into(),
        kind: SkuKind::GpuServer,
        release_month: release,
        availability_delay_months: 0,
        peak_flops: flops,
        mem_bandwidth: flops / 20.0,
        mem_capacity: 640e9,
        tdp_server_watts: 6500.0,
        accelerators_per_server: 8,
        server_cost_usd: cost,
        interconnect_class: InterconnectClass::Nvlink,
    }
}

pub fn test_model(id: &str, release: Month, params: f64) -> ModelSpec {
    ModelSpec {
        id: id.into(),
        release_month: release,
        total_params: params,
        active_params: params,
        architecture: Architecture::DenseTransformer,
        layers: 32,
        hidden_dim: 4096,
        bytes_per_param: 2.0,
        kv_bytes_per_token: 65536.0,
    }
}

/// A compact 4-year scenario with two hardware generations and two models.
pub fn small_scenario() -> Scenario {
    let horizon = 48;
    Scenario {
        start_month: Month::new(2020, 1),
        horizon_months: horizon,
        demand: DemandTrajectory {
            base_rps: 1000.0,
            annual_growth: 0.15,
            diurnal_shape: sinusoidal_diurnal_shape(),
            horizon_months: horizon,
            model_mix: vec![
                MixShare { releases_back: 0, share: 0.7 },
                MixShare { releases_back: 1, share: 0.3 },
            ],
        },
        workload: WorkloadShape { seq_len_prompt: 1024, seq_len_decode: 256, batch_size: 64 },
        slo: SloSpec::default(),
        models: vec![
            test_model("m0", Month::new(2019, 6), 2e9),
            test_model("m1", Month::new(2021, 6), 6e9),
        ],
        hardware: vec![
            test_sku("g0", Month::new(2019, 1), 8e14, 100_000.0),
            test_sku("g1", Month::new(2021, 1), 1.6e15, 140_000.0),
        ],
        design: InfrastructureDesign::preset(
            PowerTopology::PerPdu,
            CoolingKind::Air,
            NetworkTier::Ethernet,
            1e9,
        ),
        prices: PriceBook::default(),
        schedule: AmortizationSchedule::default(),
        perf: PerfCalibration::default(),
    }
}

pub fn small_template() -> ScenarioTemplate {
    let mut scenario = small_scenario();
    let model_seeds = scenario.models.clone();
    let hardware_seeds = scenario.hardware.clone();
    let model_regime = GrowthRegime { shape: GrowthShape::MediumLinear, rate: 1.0 };
    let hardware_regime = GrowthRegime { shape: GrowthShape::MediumLinear, rate: 1.0 };
    let cost_regime = GrowthRegime { shape: GrowthShape::SlowSublinear, rate: 0.05 };
    let horizon_end = scenario.start_month.plus_months(scenario.horizon_months as i32 - 1);
    scenario.models =
        crate::catalog::project_model_roadmap(&model_seeds, horizon_end, &model_regime).unwrap();
    scenario.hardware = crate::catalog::project_hardware_roadmap(
        &hardware_seeds,
        horizon_end,
        &hardware_regime,
        Some(&cost_regime),
    )
    .unwrap();
    ScenarioTemplate {
        scenario,
        model_seeds,
        hardware_seeds,
        model_regime,
        hardware_regime,
        hardware_cost_regime: Some(cost_regime),
    }
}

/// Workspace-level data directory with the shipped catalogs and scenarios.
pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// The 70B dense reference model used for latency anchoring and comparisons.
pub fn llama3_70b_class() -> ModelSpec {
    ModelSpec {
        id: "llama3-70b-class".into(),
        release_month: Month::new(2024, 4),
        total_params: 70e9,
        active_params: 70e9,
        architecture: Architecture::DenseTransformer,
        layers: 80,
        hidden_dim: 8192,
        bytes_per_param: 2.0,
        kv_bytes_per_token: 327_680.0,
    }
}
