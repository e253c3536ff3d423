//! Scenario configuration ingestion and persistence.
//!
//! Scenario files are TOML with an explicit `schema_version`. Unknown fields
//! are rejected rather than ignored, so a typo in a price field fails loudly
//! instead of silently corrupting results. Catalog seeds live either inline
//! or in referenced catalog files (one record per SKU or model). Loading
//! resolves roadmaps by projecting seeds to the horizon; serializing a loaded
//! scenario produces a self-contained file that loads back identically.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{
    project_hardware_roadmap, project_model_roadmap, GrowthRegime, GrowthShape, HardwareSku,
    ModelSpec,
};
use crate::lifecycle::{sinusoidal_diurnal_shape, DemandTrajectory, MixShare, Scenario};
use crate::perf::{PerfCalibration, SloSpec, WorkloadShape};
use crate::search::{ScenarioDistribution, ScenarioTemplate, Triangular};
use crate::tco::{
    AmortizationSchedule, CoolingDesign, CoolingKind, InfrastructureDesign, NetworkDesign,
    NetworkTier, PowerDesign, PowerTopology, PriceBook,
};
use crate::time::Month;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum ScenarioIoError {
    Io(std::io::Error),
    /// Parse failures carry the file and the parser's line/field diagnostics.
    Parse { path: PathBuf, message: String },
    SchemaVersion { path: PathBuf, found: u32, expected: u32 },
    Validation { field: String, message: String },
}

impl fmt::Display for ScenarioIoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioIoError::Io(e) => write!(f, "io error: {e}"),
            ScenarioIoError::Parse { path, message } => {
                write!(f, "failed to parse {}: {message}", path.display())
            }
            ScenarioIoError::SchemaVersion { path, found, expected } => write!(
                f,
                "{}: schema_version {found} unsupported (expected {expected})",
                path.display()
            ),
            ScenarioIoError::Validation { field, message } => {
                write!(f, "invalid scenario: {field}: {message}")
            }
        }
    }
}

impl std::error::Error for ScenarioIoError {}

impl From<std::io::Error> for ScenarioIoError {
    fn from(e: std::io::Error) -> Self {
        ScenarioIoError::Io(e)
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioIoError {
    ScenarioIoError::Validation { field: field.to_string(), message: message.into() }
}

/// Either a named diurnal profile or 24 explicit hourly fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiurnalShapeConfig {
    Named(String),
    Explicit(Vec<f64>),
}

impl Default for DiurnalShapeConfig {
    fn default() -> Self {
        DiurnalShapeConfig::Named("sinusoidal".into())
    }
}

impl DiurnalShapeConfig {
    fn resolve(&self) -> Result<Vec<f64>, ScenarioIoError> {
        match self {
            DiurnalShapeConfig::Named(name) if name == "sinusoidal" => {
                Ok(sinusoidal_diurnal_shape())
            }
            DiurnalShapeConfig::Named(name) if name == "flat" => Ok(vec![1.0; 24]),
            DiurnalShapeConfig::Named(name) => Err(invalid(
                "demand.diurnal_shape",
                format!("unknown shape {name:?}; use \"sinusoidal\", \"flat\", or 24 fractions"),
            )),
            DiurnalShapeConfig::Explicit(values) => {
                if values.len() != 24 {
                    return Err(invalid(
                        "demand.diurnal_shape",
                        format!("needs 24 hourly fractions, got {}", values.len()),
                    ));
                }
                let mean = values.iter().sum::<f64>() / 24.0;
                if (mean - 1.0).abs() > 1e-9 {
                    return Err(invalid(
                        "demand.diurnal_shape",
                        format!("fractions must average 1, got {mean:.6}"),
                    ));
                }
                Ok(values.clone())
            }
        }
    }
}

fn default_growth() -> f64 {
    0.15
}

fn default_mix() -> Vec<MixShare> {
    vec![MixShare { releases_back: 0, share: 0.6 }, MixShare { releases_back: 1, share: 0.4 }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    pub base_rps: f64,
    #[serde(default = "default_growth")]
    pub annual_growth: f64,
    #[serde(default)]
    pub diurnal_shape: DiurnalShapeConfig,
    #[serde(default = "default_mix")]
    pub model_mix: Vec<MixShare>,
}

/// Roadmap seeds (inline or from a catalog file) plus growth regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRoadmapConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<ModelSpec>>,
    pub regime: GrowthRegime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareRoadmapConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<HardwareSku>>,
    pub regime: GrowthRegime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_regime: Option<GrowthRegime>,
}

/// Build choices plus optional numeric overrides of the preset values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub power_topology: PowerTopology,
    pub cooling: CoolingKind,
    pub network: NetworkTier,
    pub facility_capacity_watts: f64,
    #[serde(default)]
    pub initial_build_watts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_budget_watts: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_capex_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pue: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cooling_capex_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal_cap_watts_per_server: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_capex_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_opex_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_efficiency_class: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_it_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_idle_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal_derate_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sqft_per_server: Option<f64>,
}

impl DesignConfig {
    pub fn resolve(&self) -> InfrastructureDesign {
        let mut design = InfrastructureDesign {
            power: PowerDesign::preset(self.power_topology),
            cooling: CoolingDesign::preset(self.cooling),
            network: NetworkDesign::preset(self.network),
            facility_capacity_watts: self.facility_capacity_watts,
            initial_build_watts: self.initial_build_watts,
            ..InfrastructureDesign::preset(
                self.power_topology,
                self.cooling,
                self.network,
                self.facility_capacity_watts,
            )
        };
        if let Some(v) = self.domain_budget_watts {
            design.power.domain_budget_watts = v;
        }
        if let Some(v) = self.power_capex_multiplier {
            design.power.capex_multiplier = v;
        }
        if let Some(v) = self.pue {
            design.cooling.pue = v;
        }
        if let Some(v) = self.cooling_capex_multiplier {
            design.cooling.capex_multiplier = v;
        }
        if let Some(v) = self.thermal_cap_watts_per_server {
            design.cooling.thermal_cap_watts_per_server = v;
        }
        if let Some(v) = self.network_capex_multiplier {
            design.network.capex_multiplier = v;
        }
        if let Some(v) = self.network_opex_multiplier {
            design.network.opex_multiplier = v;
        }
        if let Some(v) = self.network_efficiency_class {
            design.network.efficiency_class = v;
        }
        if let Some(v) = self.aux_it_fraction {
            design.aux_it_fraction = v;
        }
        if let Some(v) = self.server_idle_fraction {
            design.server_idle_fraction = v;
        }
        if let Some(v) = self.thermal_derate_exponent {
            design.thermal_derate_exponent = v;
        }
        if let Some(v) = self.sqft_per_server {
            design.sqft_per_server = v;
        }
        design
    }

    pub fn from_design(design: &InfrastructureDesign) -> DesignConfig {
        DesignConfig {
            power_topology: design.power.topology,
            cooling: design.cooling.kind,
            network: design.network.tier,
            facility_capacity_watts: design.facility_capacity_watts,
            initial_build_watts: design.initial_build_watts,
            domain_budget_watts: Some(design.power.domain_budget_watts),
            power_capex_multiplier: Some(design.power.capex_multiplier),
            pue: Some(design.cooling.pue),
            cooling_capex_multiplier: Some(design.cooling.capex_multiplier),
            thermal_cap_watts_per_server: Some(design.cooling.thermal_cap_watts_per_server),
            network_capex_multiplier: Some(design.network.capex_multiplier),
            network_opex_multiplier: Some(design.network.opex_multiplier),
            network_efficiency_class: Some(design.network.efficiency_class),
            aux_it_fraction: Some(design.aux_it_fraction),
            server_idle_fraction: Some(design.server_idle_fraction),
            thermal_derate_exponent: Some(design.thermal_derate_exponent),
            sqft_per_server: Some(design.sqft_per_server),
        }
    }
}

/// Uncertainty distributions for Monte Carlo sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub growth_min: f64,
    pub growth_max: f64,
    pub delay_months_min: u32,
    pub delay_months_max: u32,
    pub tariff_min: f64,
    pub tariff_max: f64,
    pub price_jitter_fraction: f64,
    /// Weights over (slow, medium, fast) model-growth regimes; the file's own
    /// regime is used when the weight vector is a point mass on "file".
    pub model_regime_weights: RegimeWeights,
    pub hardware_regime_weights: RegimeWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeWeights {
    pub file: f64,
    pub slow: f64,
    pub medium: f64,
    pub fast: f64,
}

impl Default for RegimeWeights {
    fn default() -> Self {
        RegimeWeights { file: 1.0, slow: 0.0, medium: 0.0, fast: 0.0 }
    }
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig {
            growth_min: 0.10,
            growth_max: 0.25,
            delay_months_min: 6,
            delay_months_max: 12,
            tariff_min: 20.0,
            tariff_max: 40.0,
            price_jitter_fraction: 0.10,
            model_regime_weights: RegimeWeights::default(),
            hardware_regime_weights: RegimeWeights::default(),
        }
    }
}

impl RegimeWeights {
    fn resolve(
        &self,
        file_regime: GrowthRegime,
        canonical: impl Fn(GrowthShape) -> GrowthRegime,
    ) -> Vec<(GrowthRegime, f64)> {
        let mut weights = Vec::new();
        if self.file > 0.0 {
            weights.push((file_regime, self.file));
        }
        if self.slow > 0.0 {
            weights.push((canonical(GrowthShape::SlowSublinear), self.slow));
        }
        if self.medium > 0.0 {
            weights.push((canonical(GrowthShape::MediumLinear), self.medium));
        }
        if self.fast > 0.0 {
            weights.push((canonical(GrowthShape::FastExponential), self.fast));
        }
        weights
    }
}

/// The on-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub start_month: Month,
    pub horizon_months: u32,
    pub demand: DemandConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload: Option<WorkloadShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slo: Option<SloSpec>,
    pub models: ModelRoadmapConfig,
    pub hardware: HardwareRoadmapConfig,
    pub design: DesignConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prices: Option<PriceBook>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<AmortizationSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perf: Option<PerfCalibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkuCatalogFile {
    schema_version: u32,
    #[serde(rename = "sku")]
    skus: Vec<HardwareSku>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelCatalogFile {
    schema_version: u32,
    #[serde(rename = "model")]
    models: Vec<ModelSpec>,
}

/// A fully resolved scenario plus everything needed to re-sample it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub template: ScenarioTemplate,
    pub distribution: ScenarioDistribution,
    /// Sections that fell back to defaults, recorded for run metadata.
    pub defaults_applied: Vec<String>,
}

fn parse_toml<T: serde::de::DeserializeOwned>(
    path: &Path,
    text: &str,
) -> Result<T, ScenarioIoError> {
    toml::from_str(text)
        .map_err(|e| ScenarioIoError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

fn load_sku_catalog(path: &Path) -> Result<Vec<HardwareSku>, ScenarioIoError> {
    let text = std::fs::read_to_string(path)?;
    let file: SkuCatalogFile = parse_toml(path, &text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioIoError::SchemaVersion {
            path: path.to_path_buf(),
            found: file.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(file.skus)
}

fn load_model_catalog(path: &Path) -> Result<Vec<ModelSpec>, ScenarioIoError> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelCatalogFile = parse_toml(path, &text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioIoError::SchemaVersion {
            path: path.to_path_buf(),
            found: file.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(file.models)
}

/// Loads, resolves, and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario, ScenarioIoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile = parse_toml(path, &text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioIoError::SchemaVersion {
            path: path.to_path_buf(),
            found: file.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    resolve_scenario_file(&file, path.parent().unwrap_or(Path::new(".")))
}

/// Resolves a parsed scenario document against `base_dir` for catalog files.
pub fn resolve_scenario_file(
    file: &ScenarioFile,
    base_dir: &Path,
) -> Result<LoadedScenario, ScenarioIoError> {
    let mut defaults_applied = Vec::new();

    let model_seeds = match (&file.models.seeds, &file.models.seeds_file) {
        (Some(seeds), None) => seeds.clone(),
        (None, Some(rel)) => load_model_catalog(&base_dir.join(rel))?,
        (Some(_), Some(_)) => {
            return Err(invalid("models", "give either seeds or seeds_file, not both"))
        }
        (None, None) => return Err(invalid("models", "needs seeds or seeds_file")),
    };
    let hardware_seeds = match (&file.hardware.seeds, &file.hardware.seeds_file) {
        (Some(seeds), None) => seeds.clone(),
        (None, Some(rel)) => load_sku_catalog(&base_dir.join(rel))?,
        (Some(_), Some(_)) => {
            return Err(invalid("hardware", "give either seeds or seeds_file, not both"))
        }
        (None, None) => return Err(invalid("hardware", "needs seeds or seeds_file")),
    };

    let horizon_end = file.start_month.plus_months(file.horizon_months as i32 - 1);
    let models = project_model_roadmap(&model_seeds, horizon_end, &file.models.regime)
        .map_err(|e| invalid("models", e.to_string()))?;
    let hardware = project_hardware_roadmap(
        &hardware_seeds,
        horizon_end,
        &file.hardware.regime,
        file.hardware.cost_regime.as_ref(),
    )
    .map_err(|e| invalid("hardware", e.to_string()))?;

    let workload = file.workload.unwrap_or_else(|| {
        defaults_applied.push("workload".into());
        WorkloadShape { seq_len_prompt: 1024, seq_len_decode: 256, batch_size: 512 }
    });
    let slo = file.slo.unwrap_or_else(|| {
        defaults_applied.push("slo".into());
        SloSpec::default()
    });
    let prices = file.prices.clone().unwrap_or_else(|| {
        defaults_applied.push("prices".into());
        PriceBook::default()
    });
    let schedule = file.schedule.unwrap_or_else(|| {
        defaults_applied.push("schedule".into());
        AmortizationSchedule::default()
    });
    let perf = file.perf.unwrap_or_else(|| {
        defaults_applied.push("perf".into());
        PerfCalibration::default()
    });

    let scenario = Scenario {
        start_month: file.start_month,
        horizon_months: file.horizon_months,
        demand: DemandTrajectory {
            base_rps: file.demand.base_rps,
            annual_growth: file.demand.annual_growth,
            diurnal_shape: file.demand.diurnal_shape.resolve()?,
            horizon_months: file.horizon_months,
            model_mix: file.demand.model_mix.clone(),
        },
        workload,
        slo,
        models,
        hardware,
        design: file.design.resolve(),
        prices,
        schedule,
        perf,
    };
    scenario
        .validate()
        .map_err(|e| invalid("scenario", e.to_string()))?;

    let template = ScenarioTemplate {
        scenario: scenario.clone(),
        model_seeds,
        hardware_seeds,
        model_regime: file.models.regime,
        hardware_regime: file.hardware.regime,
        hardware_cost_regime: file.hardware.cost_regime,
    };

    let unc = file.uncertainty.clone().unwrap_or_else(|| {
        defaults_applied.push("uncertainty".into());
        UncertaintyConfig::default()
    });
    let distribution = ScenarioDistribution {
        demand_growth: Triangular {
            min: unc.growth_min.min(file.demand.annual_growth),
            mode: file.demand.annual_growth,
            max: unc.growth_max.max(file.demand.annual_growth),
        },
        model_regimes: unc
            .model_regime_weights
            .resolve(file.models.regime, crate::search::canonical_model_regime),
        hardware_regimes: unc
            .hardware_regime_weights
            .resolve(file.hardware.regime, crate::search::canonical_hardware_regime),
        availability_delay_months: (unc.delay_months_min, unc.delay_months_max),
        energy_tariff: (unc.tariff_min, unc.tariff_max),
        price_jitter_fraction: unc.price_jitter_fraction,
        template: template.clone(),
    };
    distribution.validate().map_err(|e| invalid("uncertainty", e.to_string()))?;

    Ok(LoadedScenario { scenario, template, distribution, defaults_applied })
}

/// Serializes a loaded scenario as a self-contained document (seeds inline)
/// that loads back to an identical scenario.
pub fn scenario_to_toml(loaded: &LoadedScenario) -> Result<String, ScenarioIoError> {
    let template = &loaded.template;
    let scenario = &loaded.scenario;
    let dist = &loaded.distribution;
    let file = ScenarioFile {
        schema_version: SCHEMA_VERSION,
        start_month: scenario.start_month,
        horizon_months: scenario.horizon_months,
        demand: DemandConfig {
            base_rps: scenario.demand.base_rps,
            annual_growth: scenario.demand.annual_growth,
            diurnal_shape: DiurnalShapeConfig::Explicit(scenario.demand.diurnal_shape.clone()),
            model_mix: scenario.demand.model_mix.clone(),
        },
        workload: Some(scenario.workload),
        slo: Some(scenario.slo),
        models: ModelRoadmapConfig {
            seeds_file: None,
            seeds: Some(template.model_seeds.clone()),
            regime: template.model_regime,
        },
        hardware: HardwareRoadmapConfig {
            seeds_file: None,
            seeds: Some(template.hardware_seeds.clone()),
            regime: template.hardware_regime,
            cost_regime: template.hardware_cost_regime,
        },
        design: DesignConfig::from_design(&scenario.design),
        prices: Some(scenario.prices.clone()),
        schedule: Some(scenario.schedule),
        perf: Some(scenario.perf),
        uncertainty: Some(UncertaintyConfig {
            growth_min: dist.demand_growth.min,
            growth_max: dist.demand_growth.max,
            delay_months_min: dist.availability_delay_months.0,
            delay_months_max: dist.availability_delay_months.1,
            tariff_min: dist.energy_tariff.0,
            tariff_max: dist.energy_tariff.1,
            price_jitter_fraction: dist.price_jitter_fraction,
            model_regime_weights: RegimeWeights::default(),
            hardware_regime_weights: RegimeWeights::default(),
        }),
    };
    toml::to_string_pretty(&file).map_err(|e| ScenarioIoError::Parse {
        path: PathBuf::from("<serialize>"),
        message: e.to_string(),
    })
}

/// Parses a scenario from TOML text (used by the round-trip path and tests).
pub fn load_scenario_str(
    text: &str,
    base_dir: &Path,
) -> Result<LoadedScenario, ScenarioIoError> {
    let file: ScenarioFile = parse_toml(Path::new("<inline>"), text)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ScenarioIoError::SchemaVersion {
            path: PathBuf::from("<inline>"),
            found: file.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    resolve_scenario_file(&file, base_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{test_model, test_sku};

    fn inline_scenario_toml() -> String {
        let skus = vec![
            test_sku("g0", Month::new(2019, 1), 8e14, 100_000.0),
            test_sku("g1", Month::new(2021, 1), 1.6e15, 140_000.0),
        ];
        let models = vec![
            test_model("m0", Month::new(2019, 6), 2e9),
            test_model("m1", Month::new(2021, 6), 6e9),
        ];
        let sku_toml: String = skus
            .iter()
            .map(|s| format!("[[hardware.seeds]]\n{}", toml::to_string(s).unwrap()))
            .collect();
        let model_toml: String = models
            .iter()
            .map(|m| format!("[[models.seeds]]\n{}", toml::to_string(m).unwrap()))
            .collect();
        format!(
            r#"
schema_version = 1
start_month = "2020-01"
horizon_months = 48

[demand]
base_rps = 1000.0
annual_growth = 0.15

[design]
power_topology = "per-pdu"
cooling = "air"
network = "ethernet"
facility_capacity_watts = 1e9

[models.regime]
shape = "medium-linear"
rate = 1.0

[hardware.regime]
shape = "medium-linear"
rate = 1.0

{model_toml}
{sku_toml}
"#
        )
    }

    #[test]
    fn loads_inline_scenario_with_defaults_recorded() {
        let loaded = load_scenario_str(&inline_scenario_toml(), Path::new(".")).unwrap();
        assert_eq!(loaded.scenario.demand.base_rps, 1000.0);
        assert_eq!(loaded.scenario.demand.annual_growth, 0.15);
        assert_eq!(loaded.scenario.slo.ttft_ms_max, 400.0);
        assert_eq!(loaded.scenario.slo.tbt_ms_max, 100.0);
        assert!(loaded.defaults_applied.contains(&"slo".to_string()));
        assert!(loaded.defaults_applied.contains(&"prices".to_string()));
        assert!(loaded.scenario.models.len() >= 2);
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = inline_scenario_toml().replace(
            "base_rps = 1000.0",
            "base_rps = 1000.0\nbase_rsp_typo = 5.0",
        );
        let err = load_scenario_str(&text, Path::new(".")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("base_rsp_typo") || msg.contains("unknown field"), "{msg}");
    }

    #[test]
    fn rejects_bad_shape_mean() {
        let text = inline_scenario_toml().replace(
            "annual_growth = 0.15",
            "annual_growth = 0.15\ndiurnal_shape = [1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2, 1.2]",
        );
        let err = load_scenario_str(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("average 1"), "{err}");
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let text = inline_scenario_toml().replace("schema_version = 1", "schema_version = 99");
        let err = load_scenario_str(&text, Path::new(".")).unwrap_err();
        assert!(matches!(err, ScenarioIoError::SchemaVersion { found: 99, .. }));
    }

    #[test]
    fn round_trip_is_identity() {
        let loaded = load_scenario_str(&inline_scenario_toml(), Path::new(".")).unwrap();
        let serialized = scenario_to_toml(&loaded).unwrap();
        let reloaded = load_scenario_str(&serialized, Path::new(".")).unwrap();
        assert_eq!(loaded.scenario, reloaded.scenario);
        assert_eq!(loaded.template, reloaded.template);
        let again = scenario_to_toml(&reloaded).unwrap();
        assert_eq!(serialized, again);
    }
}
