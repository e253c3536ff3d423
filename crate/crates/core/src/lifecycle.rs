//! Discrete-time (monthly) fleet simulator.
//!
//! Each step retires cohorts past their policy lifetime, activates newly
//! available hardware and newly released models, splits demand across the
//! served model set, assigns it to cohorts under the SLO, and purchases the
//! best available SKU on shortfall, respecting the facility's power domains.
//! Annual TCO is evaluated on December states with year-averaged utilization.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::catalog::{HardwareSku, ModelSpec};
use crate::money::Usd;
use crate::perf::{
    model_requirements, PerfCalibration, PerfEnv, PerfModel, RequirementModifier,
    RequirementProfile, SloSpec, WorkloadShape,
};
use crate::tco::{
    annual_tco, AmortizationSchedule, CohortSnapshot, FleetSnapshot, InfrastructureDesign,
    PriceBook, TcoBreakdown, TcoError,
};
use crate::time::Month;

/// Demand model: compound annual growth over a diurnal shape, split across
/// the most recent model releases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandTrajectory {
    pub base_rps: f64,
    pub annual_growth: f64,
    /// 24 hourly fractions with mean 1.
    pub diurnal_shape: Vec<f64>,
    pub horizon_months: u32,
    /// Portions of traffic aimed `releases_back` releases behind the newest
    /// model; shares must sum to 1.
    pub model_mix: Vec<MixShare>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixShare {
    pub releases_back: u32,
    pub share: f64,
}

/// Hourly shape `1 + sin(2*pi*(h-8)/24)/3`: mean exactly 1, peak 4/3 at hour 14.
pub fn sinusoidal_diurnal_shape() -> Vec<f64> {
    (0..24)
        .map(|h| 1.0 + (2.0 * std::f64::consts::PI * (h as f64 - 8.0) / 24.0).sin() / 3.0)
        .collect()
}

impl DemandTrajectory {
    pub fn validate(&self) -> Result<(), LifecycleError> {
        if !(self.base_rps > 0.0) {
            return Err(LifecycleError::Invalid("base_rps must be positive".into()));
        }
        if self.annual_growth <= -1.0 {
            return Err(LifecycleError::Invalid("annual_growth must exceed -1".into()));
        }
        if self.diurnal_shape.len() != 24 {
            return Err(LifecycleError::Invalid("diurnal_shape must have 24 entries".into()));
        }
        let mean = self.diurnal_shape.iter().sum::<f64>() / 24.0;
        if (mean - 1.0).abs() > 1e-9 {
            return Err(LifecycleError::Invalid(format!(
                "diurnal_shape mean must be 1, got {mean:.6}"
            )));
        }
        if self.diurnal_shape.iter().any(|&v| v < 0.0) {
            return Err(LifecycleError::Invalid("diurnal_shape fractions must be >= 0".into()));
        }
        let mix_sum: f64 = self.model_mix.iter().map(|m| m.share).sum();
        if self.model_mix.is_empty() || (mix_sum - 1.0).abs() > 1e-9 {
            return Err(LifecycleError::Invalid("model_mix shares must sum to 1".into()));
        }
        if self.model_mix.iter().any(|m| m.share < 0.0) {
            return Err(LifecycleError::Invalid("model_mix shares must be >= 0".into()));
        }
        Ok(())
    }

    /// Mean request rate at a month index (0 = simulation start).
    pub fn mean_rps_at(&self, month_index: u32) -> Result<f64, LifecycleError> {
        if month_index >= self.horizon_months {
            return Err(LifecycleError::MonthOutOfRange {
                month_index,
                horizon: self.horizon_months,
            });
        }
        Ok(self.base_rps * (1.0 + self.annual_growth).powf(f64::from(month_index) / 12.0))
    }

    pub fn peak_factor(&self) -> f64 {
        self.diurnal_shape.iter().copied().fold(0.0, f64::max)
    }

    /// Peak-of-day request rate, used for provisioning.
    pub fn peak_rps_at(&self, month_index: u32) -> Result<f64, LifecycleError> {
        Ok(self.mean_rps_at(month_index)? * self.peak_factor())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PurchaseMode {
    /// Traditional: buy the newest generation on the market.
    OnAvailability,
    /// Buy whichever available generation serves the shortfall cheapest.
    OnDemand,
}

/// Per-generation service lifetimes; 0 months means the generation is skipped
/// (never purchased).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshPolicy {
    pub lifetime_months_by_generation: BTreeMap<String, u32>,
    pub default_lifetime_months: u32,
    pub purchase_mode: PurchaseMode,
}

impl Default for RefreshPolicy {
    fn default() -> Self {
        RefreshPolicy {
            lifetime_months_by_generation: BTreeMap::new(),
            default_lifetime_months: 60,
            purchase_mode: PurchaseMode::OnAvailability,
        }
    }
}

impl RefreshPolicy {
    pub fn validate(&self) -> Result<(), LifecycleError> {
        let ok = |v: u32| v == 0 || (12..=120).contains(&v);
        if !ok(self.default_lifetime_months) || self.default_lifetime_months == 0 {
            return Err(LifecycleError::Invalid(format!(
                "default_lifetime_months {} outside 12..=120",
                self.default_lifetime_months
            )));
        }
        for (id, &v) in &self.lifetime_months_by_generation {
            if !ok(v) {
                return Err(LifecycleError::Invalid(format!(
                    "lifetime for {id} must be 0 (skip) or within 12..=120, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn lifetime_months(&self, sku_id: &str) -> u32 {
        *self
            .lifetime_months_by_generation
            .get(sku_id)
            .unwrap_or(&self.default_lifetime_months)
    }

    pub fn is_skipped(&self, sku_id: &str) -> bool {
        self.lifetime_months(sku_id) == 0
    }

    pub fn with_generation(&self, sku_id: &str, lifetime_months: u32) -> RefreshPolicy {
        let mut policy = self.clone();
        policy.lifetime_months_by_generation.insert(sku_id.to_string(), lifetime_months);
        policy
    }
}

/// Operation-stage software optimizations, all off in the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperationPolicy {
    pub migration_smoothing: bool,
    pub migration_window_months: u32,
    pub quantization: bool,
    pub quant_compute_factor: f64,
    pub quant_memory_factor: f64,
    pub kv_cache_mgmt: bool,
    pub kv_byte_factor: f64,
    pub disaggregation: bool,
    /// Phase-specialization gain of disaggregated serving pools.
    pub disagg_efficiency_bonus: f64,
    pub alt_architectures: bool,
    pub alt_arch_compute_factor: f64,
    pub alt_arch_kv_factor: f64,
    pub model_routing: bool,
    pub small_model_fraction: f64,
    pub hetero_scheduling: bool,
    pub infra_scheduling: bool,
    pub headroom_factor: f64,
}

impl Default for OperationPolicy {
    fn default() -> Self {
        OperationPolicy {
            migration_smoothing: false,
            migration_window_months: 7,
            quantization: false,
            quant_compute_factor: 0.7,
            quant_memory_factor: 0.65,
            kv_cache_mgmt: false,
            kv_byte_factor: 0.35,
            disaggregation: false,
            disagg_efficiency_bonus: 1.3,
            alt_architectures: false,
            alt_arch_compute_factor: 0.55,
            alt_arch_kv_factor: 0.5,
            model_routing: false,
            small_model_fraction: 0.3,
            hetero_scheduling: false,
            infra_scheduling: false,
            headroom_factor: 1.15,
        }
    }
}

pub const OPERATION_FLAG_NAMES: [&str; 8] = [
    "migration_smoothing",
    "quantization",
    "kv_cache_mgmt",
    "disaggregation",
    "alt_architectures",
    "model_routing",
    "hetero_scheduling",
    "infra_scheduling",
];

impl OperationPolicy {
    pub fn all_enabled() -> OperationPolicy {
        let mut p = OperationPolicy::default();
        for flag in OPERATION_FLAG_NAMES {
            p.set_flag(flag, true);
        }
        p
    }

    pub fn set_flag(&mut self, name: &str, value: bool) {
        match name {
            "migration_smoothing" => self.migration_smoothing = value,
            "quantization" => self.quantization = value,
            "kv_cache_mgmt" => self.kv_cache_mgmt = value,
            "disaggregation" => self.disaggregation = value,
            "alt_architectures" => self.alt_architectures = value,
            "model_routing" => self.model_routing = value,
            "hetero_scheduling" => self.hetero_scheduling = value,
            "infra_scheduling" => self.infra_scheduling = value,
            other => panic!("unknown operation flag {other}"),
        }
    }

    pub fn flag(&self, name: &str) -> bool {
        match name {
            "migration_smoothing" => self.migration_smoothing,
            "quantization" => self.quantization,
            "kv_cache_mgmt" => self.kv_cache_mgmt,
            "disaggregation" => self.disaggregation,
            "alt_architectures" => self.alt_architectures,
            "model_routing" => self.model_routing,
            "hetero_scheduling" => self.hetero_scheduling,
            "infra_scheduling" => self.infra_scheduling,
            other => panic!("unknown operation flag {other}"),
        }
    }

    pub fn enabled_flags(&self) -> Vec<&'static str> {
        OPERATION_FLAG_NAMES.into_iter().filter(|f| self.flag(f)).collect()
    }

    pub fn validate(&self) -> Result<(), LifecycleError> {
        let in_unit = |name: &str, v: f64| -> Result<(), LifecycleError> {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(LifecycleError::Invalid(format!("{name} must be in (0, 1], got {v}")))
            }
        };
        in_unit("quant_compute_factor", self.quant_compute_factor)?;
        in_unit("quant_memory_factor", self.quant_memory_factor)?;
        in_unit("kv_byte_factor", self.kv_byte_factor)?;
        in_unit("alt_arch_compute_factor", self.alt_arch_compute_factor)?;
        in_unit("alt_arch_kv_factor", self.alt_arch_kv_factor)?;
        if !(0.0..=1.0).contains(&self.small_model_fraction) {
            return Err(LifecycleError::Invalid("small_model_fraction must be in [0, 1]".into()));
        }
        if self.headroom_factor < 1.0 {
            return Err(LifecycleError::Invalid("headroom_factor must be >= 1".into()));
        }
        if self.disagg_efficiency_bonus < 1.0 {
            return Err(LifecycleError::Invalid("disagg_efficiency_bonus must be >= 1".into()));
        }
        Ok(())
    }

    /// Multiplicative requirement factors from the enabled optimizations.
    pub fn requirement_modifier(&self) -> RequirementModifier {
        let mut m = RequirementModifier::IDENTITY;
        if self.quantization {
            m = m.compose(&RequirementModifier {
                flops_factor: self.quant_compute_factor,
                weight_bytes_factor: self.quant_memory_factor,
                kv_bytes_factor: self.quant_memory_factor,
            });
        }
        if self.kv_cache_mgmt {
            m = m.compose(&RequirementModifier {
                flops_factor: 1.0,
                weight_bytes_factor: 1.0,
                kv_bytes_factor: self.kv_byte_factor,
            });
        }
        if self.alt_architectures {
            m = m.compose(&RequirementModifier {
                flops_factor: self.alt_arch_compute_factor,
                weight_bytes_factor: 1.0,
                kv_bytes_factor: self.alt_arch_kv_factor,
            });
        }
        m
    }

    /// Share of a release's traffic already migrated to it, `months` after
    /// release. Without smoothing the cutover is immediate.
    pub fn migration_share(&self, months_since_release: u32) -> f64 {
        if !self.migration_smoothing || self.migration_window_months == 0 {
            return 1.0;
        }
        (f64::from(months_since_release) / f64::from(self.migration_window_months)).min(1.0)
    }
}

/// The complete, resolved simulation input.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub start_month: Month,
    pub horizon_months: u32,
    pub demand: DemandTrajectory,
    pub workload: WorkloadShape,
    pub slo: SloSpec,
    /// Chronological model roadmap (seeds plus projected releases).
    pub models: Vec<ModelSpec>,
    /// Chronological hardware roadmap.
    pub hardware: Vec<HardwareSku>,
    pub design: InfrastructureDesign,
    pub prices: PriceBook,
    pub schedule: AmortizationSchedule,
    pub perf: PerfCalibration,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), LifecycleError> {
        if self.horizon_months < 12 {
            return Err(LifecycleError::Invalid("horizon_months must be >= 12".into()));
        }
        if self.demand.horizon_months != self.horizon_months {
            return Err(LifecycleError::Invalid(
                "demand.horizon_months must match scenario horizon".into(),
            ));
        }
        self.demand.validate()?;
        self.workload.validate().map_err(|e| LifecycleError::Invalid(e.to_string()))?;
        self.slo.validate().map_err(|e| LifecycleError::Invalid(e.to_string()))?;
        if self.models.is_empty() || self.hardware.is_empty() {
            return Err(LifecycleError::Invalid("models and hardware must be non-empty".into()));
        }
        for m in &self.models {
            m.validate().map_err(|e| LifecycleError::Invalid(e.to_string()))?;
        }
        for s in &self.hardware {
            s.validate().map_err(|e| LifecycleError::Invalid(e.to_string()))?;
        }
        if self.models.first().unwrap().release_month > self.start_month {
            return Err(LifecycleError::Invalid(
                "first model must be released by the start month".into(),
            ));
        }
        if self.hardware.iter().all(|s| s.available_month() > self.start_month) {
            return Err(LifecycleError::Invalid(
                "no hardware is available at the start month".into(),
            ));
        }
        self.design.validate().map_err(|e| LifecycleError::Invalid(e.to_string()))?;
        self.prices.validate().map_err(|e| LifecycleError::Invalid(e.to_string()))?;
        self.schedule.validate().map_err(|e| LifecycleError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Roofline model configured for this scenario's design.
    pub fn perf_model(&self) -> PerfModel {
        PerfModel::new(
            self.perf,
            PerfEnv {
                network_efficiency: self.design.network.efficiency_class,
                thermal_cap_watts: Some(self.design.cooling.thermal_cap_watts_per_server),
                thermal_derate_exponent: self.design.thermal_derate_exponent,
            },
        )
    }

    /// Index of the newest model released by `month`.
    pub fn current_model_index(&self, month: Month) -> Option<usize> {
        self.models.iter().rposition(|m| m.release_month <= month)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Combined,
    Prefill,
    Decode,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Combined => "combined",
            Phase::Prefill => "prefill",
            Phase::Decode => "decode",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub model_id: String,
    pub cohort_index: usize,
    pub phase: Phase,
    /// Provision-level (diurnal peak over headroom) request rate.
    pub rps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cohort {
    pub sku_index: usize,
    pub sku_id: String,
    pub purchase_month: Month,
    pub server_count: u64,
}

/// Dated fleet snapshot: cohorts, model assignments, per-cohort utilization,
/// and the facility watts built out so far.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FleetState {
    pub month: Month,
    pub cohorts: Vec<Cohort>,
    pub assignments: Vec<Assignment>,
    /// Provision-level utilization per cohort (peak-of-day basis).
    pub utilization: Vec<f64>,
    /// Mean-of-day utilization per cohort (energy basis).
    pub mean_utilization: Vec<f64>,
    pub provisioned_watts: f64,
}

impl FleetState {
    pub fn total_servers(&self) -> u64 {
        self.cohorts.iter().map(|c| c.server_count).sum()
    }

    pub fn servers_by_sku(&self) -> BTreeMap<String, u64> {
        let mut map = BTreeMap::new();
        for c in &self.cohorts {
            *map.entry(c.sku_id.clone()).or_insert(0) += c.server_count;
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Purchase,
    Decommission,
    ModelRelease,
    SkuAvailable,
    CapacityExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub month: Month,
    pub kind: EventKind,
    pub subject: String,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimOutcome {
    Completed,
    CapacityExhausted { month: Month },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub fleet_timeline: Vec<FleetState>,
    pub annual_tco: Vec<(i32, TcoBreakdown)>,
    pub lifetime_tco: Usd,
    pub events: Vec<Event>,
    pub outcome: SimOutcome,
}

impl SimulationResult {
    pub fn final_state(&self) -> Option<&FleetState> {
        self.fleet_timeline.last()
    }

    pub fn peak_servers(&self) -> u64 {
        self.fleet_timeline.iter().map(FleetState::total_servers).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LifecycleError {
    Invalid(String),
    MonthOutOfRange { month_index: u32, horizon: u32 },
    UnknownSku { sku_id: String },
    Tco(TcoError),
}

impl std::fmt::Display for LifecycleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LifecycleError::Invalid(msg) => write!(f, "invalid scenario or policy: {msg}"),
            LifecycleError::MonthOutOfRange { month_index, horizon } => {
                write!(f, "month index {month_index} outside horizon of {horizon}")
            }
            LifecycleError::UnknownSku { sku_id } => write!(f, "unknown sku id {sku_id}"),
            LifecycleError::Tco(e) => write!(f, "cost engine: {e}"),
        }
    }
}

impl std::error::Error for LifecycleError {}

impl From<TcoError> for LifecycleError {
    fn from(e: TcoError) -> Self {
        LifecycleError::Tco(e)
    }
}

/// Demand offered to one model for one month, at provisioning level.
#[derive(Debug, Clone, Copy)]
struct ModelDemand {
    model_index: usize,
    provision_rps: f64,
}

/// Splits a month's demand across the served model set.
///
/// The scenario mix aims entries at releases counted back from the newest
/// model; migration smoothing shifts a ramp-in fraction of each entry one
/// release back, and routing diverts `small_model_fraction` likewise.
fn split_demand(
    scenario: &Scenario,
    op: &OperationPolicy,
    month: Month,
    provision_rps: f64,
) -> Vec<ModelDemand> {
    let current = scenario
        .current_model_index(month)
        .expect("validated: a model exists at simulation start");
    let months_since = month.months_since(scenario.models[current].release_month).max(0) as u32;

    let mut weights: BTreeMap<usize, f64> = BTreeMap::new();
    for entry in &scenario.demand.model_mix {
        let idx = current.saturating_sub(entry.releases_back as usize);
        *weights.entry(idx).or_insert(0.0) += entry.share;
    }
    let ramp = op.migration_share(months_since);
    if ramp < 1.0 {
        let mut shifted: BTreeMap<usize, f64> = BTreeMap::new();
        for (&idx, &w) in &weights {
            *shifted.entry(idx).or_insert(0.0) += w * ramp;
            *shifted.entry(idx.saturating_sub(1)).or_insert(0.0) += w * (1.0 - ramp);
        }
        weights = shifted;
    }
    if op.model_routing && op.small_model_fraction > 0.0 {
        let mut routed: BTreeMap<usize, f64> = BTreeMap::new();
        for (&idx, &w) in &weights {
            *routed.entry(idx).or_insert(0.0) += w * (1.0 - op.small_model_fraction);
            *routed.entry(idx.saturating_sub(1)).or_insert(0.0) += w * op.small_model_fraction;
        }
        weights = routed;
    }
    weights
        .into_iter()
        .filter(|&(_, w)| w > 0.0)
        .map(|(model_index, w)| ModelDemand { model_index, provision_rps: provision_rps * w })
        .collect()
}

/// Per-cohort serving rates for one model, all goodputs per server.
#[derive(Debug, Clone, Copy, Default)]
struct ServingRates {
    combined_rps: f64,
    prefill_rps: f64,
    decode_rps: f64,
}

/// Simulation engine with memoized goodput lookups.
pub struct Simulation<'a> {
    pub scenario: &'a Scenario,
    pub refresh: RefreshPolicy,
    pub op: OperationPolicy,
    perf: PerfModel,
    modifier: RequirementModifier,
    profiles: Vec<RequirementProfile>,
    /// Release month of each model's home generation: the newest hardware on
    /// the market when the model shipped. Without heterogeneity-aware
    /// scheduling a model only runs on its home generation or newer.
    home_generation: Vec<Month>,
    rates_cache: HashMap<(usize, usize), ServingRates>,
}

struct LiveCohort {
    sku_index: usize,
    purchase_month: Month,
    server_count: u64,
    util_months_sum: f64,
    util_months: u32,
}

impl<'a> Simulation<'a> {
    pub fn new(
        scenario: &'a Scenario,
        refresh: RefreshPolicy,
        op: OperationPolicy,
    ) -> Result<Self, LifecycleError> {
        scenario.validate()?;
        refresh.validate()?;
        op.validate()?;
        let modifier = op.requirement_modifier();
        let profiles = scenario
            .models
            .iter()
            .map(|m| {
                model_requirements(m, &scenario.workload)
                    .map(|req| req.scaled(&modifier))
                    .map_err(|e| LifecycleError::Invalid(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let perf = scenario.perf_model();
        // A model's home generation is the newest hardware on the market at
        // its release that the design deploys, the policy buys, and that can
        // actually serve it within the SLO at zero load.
        let earliest = scenario.hardware.iter().map(|s| s.release_month).min().unwrap();
        let home_generation: Vec<Month> = scenario
            .models
            .iter()
            .zip(&profiles)
            .map(|(m, req)| {
                scenario
                    .hardware
                    .iter()
                    .filter(|s| {
                        s.available_month() <= m.release_month
                            && scenario.design.deployable(s.tdp_server_watts)
                            && !refresh.is_skipped(&s.id)
                            && perf
                                .select_tensor_parallel(req, s)
                                .and_then(|tp| perf.roofline_latency(req, s, tp, 0.0).ok())
                                .is_some_and(|lat| scenario.slo.admits(&lat))
                    })
                    .map(|s| s.release_month)
                    .max()
                    .unwrap_or(earliest)
            })
            .collect();
        Ok(Simulation {
            scenario,
            refresh,
            op,
            perf,
            modifier,
            profiles,
            home_generation,
            rates_cache: HashMap::new(),
        })
    }

    pub fn requirement_modifier(&self) -> RequirementModifier {
        self.modifier
    }

    fn rates(&mut self, model_index: usize, sku_index: usize) -> ServingRates {
        if let Some(&r) = self.rates_cache.get(&(model_index, sku_index)) {
            return r;
        }
        let req = &self.profiles[model_index];
        let sku = &self.scenario.hardware[sku_index];
        let slo = &self.scenario.slo;
        let combined = self
            .perf
            .goodput_detail(req, sku, slo)
            .map(|d| d.goodput_rps())
            .unwrap_or(0.0);
        // Disaggregated phase pools run specialized batching schedules.
        let bonus = if self.op.disaggregation { self.op.disagg_efficiency_bonus } else { 1.0 };
        let prefill = self.perf.goodput_prefill_only(req, sku, slo).unwrap_or(0.0) * bonus;
        let decode = self.perf.goodput_decode_only(req, sku, slo).unwrap_or(0.0) * bonus;
        let r = ServingRates { combined_rps: combined, prefill_rps: prefill, decode_rps: decode };
        self.rates_cache.insert((model_index, sku_index), r);
        r
    }

    /// Whether a model's stream may run on a SKU's cohorts. Traditional
    /// operations pin a model to its home generation or newer; heterogeneity-
    /// aware scheduling lifts the pin, and disaggregation lifts it for the
    /// decode phase.
    fn eligible(&self, model_index: usize, sku_index: usize, phase: Phase) -> bool {
        if self.op.hetero_scheduling {
            return true;
        }
        if phase == Phase::Decode && self.op.disaggregation {
            return true;
        }
        self.scenario.hardware[sku_index].release_month >= self.home_generation[model_index]
    }

    fn provisioned_watts_for(&self, cohorts: &[LiveCohort]) -> f64 {
        let mut per_sku: BTreeMap<usize, u64> = BTreeMap::new();
        for c in cohorts {
            *per_sku.entry(c.sku_index).or_insert(0) += c.server_count;
        }
        per_sku
            .iter()
            .map(|(&sku_index, &count)| {
                self.scenario
                    .design
                    .power
                    .provisioned_watts_for(count, self.scenario.hardware[sku_index].tdp_server_watts)
            })
            .sum()
    }

    /// Greedy assignment of one month's demand; returns per-cohort peak-basis
    /// utilization, the assignment list, and any unplaced demand per
    /// (model, phase). With disaggregation on, the frontier model's stream is
    /// split so its decode can ride older generations; trailing streams stay
    /// whole (splitting them on one pool only forfeits overlap).
    fn assign(
        &mut self,
        demands: &[ModelDemand],
        cohorts: &[LiveCohort],
        frontier_model: usize,
    ) -> (Vec<f64>, Vec<Assignment>, Vec<(usize, Phase, f64)>) {
        let mut utilization = vec![0.0f64; cohorts.len()];
        let mut assignments = Vec::new();
        let mut shortfalls = Vec::new();

        // Serve the heaviest models first: they have the fewest placement options.
        let mut order: Vec<usize> = (0..demands.len()).collect();
        order.sort_by(|&a, &b| {
            let wa = self.profiles[demands[a].model_index].weight_footprint;
            let wb = self.profiles[demands[b].model_index].weight_footprint;
            wb.partial_cmp(&wa).unwrap().then(demands[a].model_index.cmp(&demands[b].model_index))
        });

        for &di in &order {
            let demand = demands[di];
            let model_id = self.scenario.models[demand.model_index].id.clone();
            if self.op.disaggregation && demand.model_index == frontier_model {
                for (phase, pick_old_first) in [(Phase::Decode, true), (Phase::Prefill, false)] {
                    let unplaced = self.assign_stream(
                        demand,
                        phase,
                        pick_old_first,
                        cohorts,
                        &mut utilization,
                        &mut assignments,
                        &model_id,
                    );
                    if unplaced > 1e-9 {
                        shortfalls.push((demand.model_index, phase, unplaced));
                    }
                }
            } else {
                let unplaced = self.assign_stream(
                    demand,
                    Phase::Combined,
                    false,
                    cohorts,
                    &mut utilization,
                    &mut assignments,
                    &model_id,
                );
                if unplaced > 1e-9 {
                    shortfalls.push((demand.model_index, Phase::Combined, unplaced));
                }
            }
        }
        (utilization, assignments, shortfalls)
    }

    #[allow(clippy::too_many_arguments)]
    fn assign_stream(
        &mut self,
        demand: ModelDemand,
        phase: Phase,
        old_first: bool,
        cohorts: &[LiveCohort],
        utilization: &mut [f64],
        assignments: &mut Vec<Assignment>,
        model_id: &str,
    ) -> f64 {
        let mut remaining = demand.provision_rps;
        if remaining <= 0.0 {
            return 0.0;
        }
        let goodput_of = |rates: ServingRates| match phase {
            Phase::Combined => rates.combined_rps,
            Phase::Prefill => rates.prefill_rps,
            Phase::Decode => rates.decode_rps,
        };

        let mut order: Vec<usize> = (0..cohorts.len()).collect();
        if self.op.hetero_scheduling {
            // Best goodput per dollar first.
            let mut keyed: Vec<(usize, f64)> = order
                .iter()
                .map(|&ci| {
                    let rates = self.rates(demand.model_index, cohorts[ci].sku_index);
                    let sku = &self.scenario.hardware[cohorts[ci].sku_index];
                    (ci, goodput_of(rates) / sku.server_cost_usd)
                })
                .collect();
            keyed.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            order = keyed.into_iter().map(|(ci, _)| ci).collect();
        } else {
            // Newest generation first (or oldest first for disaggregated decode).
            order.sort_by(|&a, &b| {
                let ra = self.scenario.hardware[cohorts[a].sku_index].release_month;
                let rb = self.scenario.hardware[cohorts[b].sku_index].release_month;
                if old_first {
                    ra.cmp(&rb).then(a.cmp(&b))
                } else {
                    rb.cmp(&ra).then(a.cmp(&b))
                }
            });
        }

        for ci in order {
            if remaining <= 1e-9 {
                break;
            }
            if !self.eligible(demand.model_index, cohorts[ci].sku_index, phase) {
                continue;
            }
            let headroom = 1.0 - utilization[ci];
            if headroom <= 1e-12 {
                continue;
            }
            let rates = self.rates(demand.model_index, cohorts[ci].sku_index);
            let goodput = goodput_of(rates);
            if !(goodput > 0.0) {
                continue;
            }
            if goodput.is_infinite() {
                // Zero-decode workloads place decode streams for free.
                assignments.push(Assignment {
                    model_id: model_id.to_string(),
                    cohort_index: ci,
                    phase,
                    rps: remaining,
                });
                remaining = 0.0;
                break;
            }
            let capacity_rps = cohorts[ci].server_count as f64 * goodput;
            let take = remaining.min(headroom * capacity_rps);
            if take <= 0.0 {
                continue;
            }
            utilization[ci] += take / capacity_rps;
            assignments.push(Assignment {
                model_id: model_id.to_string(),
                cohort_index: ci,
                phase,
                rps: take,
            });
            remaining -= take;
        }
        remaining.max(0.0)
    }

    /// Picks the SKU to buy against a shortfall on `model_index`, returning
    /// `(sku_index, combined goodput)`. Candidates must be on the market, not
    /// skip-listed, and hostable within one of the design's power domains.
    fn pick_purchase_sku(&mut self, model_index: usize, month: Month) -> Option<(usize, f64)> {
        let candidates: Vec<usize> = (0..self.scenario.hardware.len())
            .filter(|&si| {
                let sku = &self.scenario.hardware[si];
                sku.available_month() <= month
                    && !self.refresh.is_skipped(&sku.id)
                    && self.eligible(model_index, si, Phase::Combined)
                    && self.scenario.design.deployable(sku.tdp_server_watts)
                    && self
                        .scenario
                        .design
                        .power
                        .servers_per_domain(
                            self.scenario.design.facility_capacity_watts,
                            sku.tdp_server_watts,
                        )
                        >= 1
            })
            .collect();
        let servable: Vec<(usize, f64)> = candidates
            .into_iter()
            .filter_map(|si| {
                let rates = self.rates(model_index, si);
                let g = if self.op.disaggregation {
                    if rates.prefill_rps > 0.0 && rates.decode_rps > 0.0 {
                        rates.combined_rps
                    } else {
                        0.0
                    }
                } else {
                    rates.combined_rps
                };
                (g > 0.0).then_some((si, g))
            })
            .collect();
        if servable.is_empty() {
            return None;
        }
        match self.refresh.purchase_mode {
            PurchaseMode::OnAvailability => servable.into_iter().max_by(|a, b| {
                let ra = self.scenario.hardware[a.0].release_month;
                let rb = self.scenario.hardware[b.0].release_month;
                ra.cmp(&rb).then(a.0.cmp(&b.0))
            }),
            PurchaseMode::OnDemand => servable.into_iter().max_by(|a, b| {
                let ka = a.1 / self.scenario.hardware[a.0].server_cost_usd;
                let kb = b.1 / self.scenario.hardware[b.0].server_cost_usd;
                ka.partial_cmp(&kb).unwrap().then(a.0.cmp(&b.0))
            }),
        }
    }

    /// Runs the full horizon.
    pub fn run(mut self) -> Result<SimulationResult, LifecycleError> {
        let scenario = self.scenario;
        let mut cohorts: Vec<LiveCohort> = Vec::new();
        // Cohorts decommissioned since the last annual evaluation: they still
        // carry their live months of cost for that year.
        let mut retired_roster: Vec<LiveCohort> = Vec::new();
        let mut provisioned_hw = scenario.design.initial_build_watts;
        let mut timeline: Vec<FleetState> = Vec::new();
        let mut events: Vec<Event> = Vec::new();
        let mut annual: Vec<(i32, TcoBreakdown)> = Vec::new();
        let mut outcome = SimOutcome::Completed;
        let peak_factor = scenario.demand.peak_factor();
        let headroom =
            if self.op.infra_scheduling { self.op.headroom_factor } else { 1.0 };

        'months: for mi in 0..scenario.horizon_months {
            let month = scenario.start_month.plus_months(mi as i32);

            // 1. Retire cohorts past their policy lifetime.
            let mut retained = Vec::new();
            for cohort in cohorts.drain(..) {
                let age = month.months_since(cohort.purchase_month);
                let lifetime = self
                    .refresh
                    .lifetime_months(&scenario.hardware[cohort.sku_index].id);
                if age >= lifetime as i32 {
                    events.push(Event {
                        month,
                        kind: EventKind::Decommission,
                        subject: scenario.hardware[cohort.sku_index].id.clone(),
                        count: cohort.server_count,
                    });
                    if cohort.util_months > 0 {
                        retired_roster.push(cohort);
                    }
                } else {
                    retained.push(cohort);
                }
            }
            cohorts = retained;

            // 2. Activation events.
            for sku in &scenario.hardware {
                if sku.available_month() == month {
                    events.push(Event {
                        month,
                        kind: EventKind::SkuAvailable,
                        subject: sku.id.clone(),
                        count: 0,
                    });
                }
            }
            for model in &scenario.models {
                if model.release_month == month {
                    events.push(Event {
                        month,
                        kind: EventKind::ModelRelease,
                        subject: model.id.clone(),
                        count: 0,
                    });
                }
            }

            // 3. Demand at the diurnal peak, shaved by scheduling headroom.
            let provision_rps = scenario.demand.peak_rps_at(mi)? / headroom;
            let demands = split_demand(scenario, &self.op, month, provision_rps);

            // 4-5. Assign; on shortfall, purchase and re-assign. One cohort per
            // SKU per round, sized across every shorted stream so that a heavy
            // model absorbing the new capacity cannot starve the others.
            let frontier = scenario
                .current_model_index(month)
                .expect("validated: a model exists at simulation start");
            let (mut utilization, mut assignments, mut shortfalls) =
                self.assign(&demands, &cohorts, frontier);
            let mut rounds = 0;
            while !shortfalls.is_empty() {
                rounds += 1;
                if rounds > 16 {
                    events.push(Event {
                        month,
                        kind: EventKind::CapacityExhausted,
                        subject: scenario.models[shortfalls[0].0].id.clone(),
                        count: 0,
                    });
                    outcome = SimOutcome::CapacityExhausted { month };
                    break 'months;
                }
                // Buy for the largest model first.
                shortfalls.sort_by(|a, b| {
                    let wa = self.profiles[a.0].weight_footprint;
                    let wb = self.profiles[b.0].weight_footprint;
                    wb.partial_cmp(&wa).unwrap().then(a.0.cmp(&b.0))
                });
                let mut order_by_sku: BTreeMap<usize, u64> = BTreeMap::new();
                for (model_index, phase, rps) in shortfalls.clone() {
                    let Some((sku_index, _)) = self.pick_purchase_sku(model_index, month) else {
                        events.push(Event {
                            month,
                            kind: EventKind::CapacityExhausted,
                            subject: scenario.models[model_index].id.clone(),
                            count: 0,
                        });
                        outcome = SimOutcome::CapacityExhausted { month };
                        break 'months;
                    };
                    let rates = self.rates(model_index, sku_index);
                    let goodput = match phase {
                        Phase::Combined => rates.combined_rps,
                        Phase::Prefill => rates.prefill_rps,
                        Phase::Decode => rates.decode_rps,
                    };
                    if !(goodput > 0.0) || goodput.is_infinite() {
                        continue;
                    }
                    *order_by_sku.entry(sku_index).or_insert(0) += (rps / goodput).ceil() as u64;
                }
                for (sku_index, needed) in order_by_sku {
                    // Respect the facility power envelope.
                    let sku = &scenario.hardware[sku_index];
                    let current_watts = self.provisioned_watts_for(&cohorts);
                    let budget_left =
                        (scenario.design.facility_capacity_watts - current_watts).max(0.0);
                    let per_domain = scenario.design.power.servers_per_domain(
                        scenario.design.facility_capacity_watts,
                        sku.tdp_server_watts,
                    );
                    let addable = match scenario.design.power.topology {
                        crate::tco::PowerTopology::PerDc => {
                            (budget_left / sku.tdp_server_watts).floor() as u64
                        }
                        _ => {
                            let domains = (budget_left
                                / scenario.design.power.domain_budget_watts)
                                .floor() as u64;
                            domains * per_domain
                        }
                    };
                    let count = needed.min(addable);
                    if count == 0 {
                        events.push(Event {
                            month,
                            kind: EventKind::CapacityExhausted,
                            subject: sku.id.clone(),
                            count: 0,
                        });
                        outcome = SimOutcome::CapacityExhausted { month };
                        break 'months;
                    }
                    cohorts.push(LiveCohort {
                        sku_index,
                        purchase_month: month,
                        server_count: count,
                        util_months_sum: 0.0,
                        util_months: 0,
                    });
                    events.push(Event {
                        month,
                        kind: EventKind::Purchase,
                        subject: sku.id.clone(),
                        count,
                    });
                }
                let (u, a, s) = self.assign(&demands, &cohorts, frontier);
                utilization = u;
                assignments = a;
                shortfalls = s;
            }

            // 6. Record.
            provisioned_hw = provisioned_hw.max(self.provisioned_watts_for(&cohorts));
            let mean_ratio = headroom / peak_factor;
            let mean_utilization: Vec<f64> =
                utilization.iter().map(|u| (u * mean_ratio).min(1.0)).collect();
            for (cohort, &mu) in cohorts.iter_mut().zip(&mean_utilization) {
                cohort.util_months_sum += mu;
                cohort.util_months += 1;
            }
            timeline.push(FleetState {
                month,
                cohorts: cohorts
                    .iter()
                    .map(|c| Cohort {
                        sku_index: c.sku_index,
                        sku_id: scenario.hardware[c.sku_index].id.clone(),
                        purchase_month: c.purchase_month,
                        server_count: c.server_count,
                    })
                    .collect(),
                assignments: assignments.clone(),
                utilization: utilization.clone(),
                mean_utilization,
                provisioned_watts: provisioned_hw,
            });

            // 7. Annual TCO on December states (and the final month).
            let is_last = mi + 1 == scenario.horizon_months;
            if month.is_december() || is_last {
                let already_counted =
                    annual.last().is_some_and(|(year, _)| *year == month.year());
                if !already_counted {
                    let to_snapshot = |c: &LiveCohort, retired: bool| {
                        let sku = &scenario.hardware[c.sku_index];
                        CohortSnapshot {
                            sku_id: sku.id.clone(),
                            server_count: c.server_count,
                            purchase_month: c.purchase_month,
                            tdp_server_watts: sku.tdp_server_watts,
                            server_cost_usd: sku.server_cost_usd,
                            utilization: if c.util_months == 0 {
                                0.0
                            } else {
                                c.util_months_sum / f64::from(c.util_months)
                            },
                            months_in_service_in_year: c.util_months.max(1),
                            retired_during_year: retired,
                        }
                    };
                    let snapshot = FleetSnapshot {
                        month,
                        cohorts: cohorts
                            .iter()
                            .map(|c| to_snapshot(c, false))
                            .chain(retired_roster.iter().map(|c| to_snapshot(c, true)))
                            .collect(),
                        provisioned_watts: provisioned_hw,
                    };
                    let breakdown = annual_tco(
                        &snapshot,
                        &scenario.design,
                        &scenario.prices,
                        &scenario.schedule,
                    )?;
                    annual.push((month.year(), breakdown));
                }
                retired_roster.clear();
                for cohort in &mut cohorts {
                    cohort.util_months_sum = 0.0;
                    cohort.util_months = 0;
                }
            }
        }

        let lifetime_tco: Usd = annual.iter().map(|(_, b)| b.total).sum();
        Ok(SimulationResult {
            fleet_timeline: timeline,
            annual_tco: annual,
            lifetime_tco,
            events,
            outcome,
        })
    }
}

/// Convenience wrapper: builds the engine and runs the scenario's horizon.
pub fn simulate(
    scenario: &Scenario,
    refresh: &RefreshPolicy,
    op: &OperationPolicy,
) -> Result<SimulationResult, LifecycleError> {
    Simulation::new(scenario, refresh.clone(), op.clone())?.run()
}
