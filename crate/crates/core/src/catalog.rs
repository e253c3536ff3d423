//! Hardware SKUs and model releases, plus roadmap projection under growth regimes.
//!
//! Seed catalogs are data files; projection appends synthetic future generations
//! at the seeds' mean release cadence, extrapolating each numeric field under the
//! regime shape. Projection is deterministic and truncation-idempotent: projecting
//! to a far horizon and discarding the tail equals projecting to the near horizon.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::money::Usd;
use crate::time::Month;

/// Availability delay assigned to synthetic future GPUs, in months.
pub const DEFAULT_SYNTHETIC_DELAY_MONTHS: u32 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkuKind {
    GpuServer,
    CpuServer,
}

impl fmt::Display for SkuKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkuKind::GpuServer => write!(f, "gpu-server"),
            SkuKind::CpuServer => write!(f, "cpu-server"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterconnectClass {
    Ethernet,
    Infiniband,
    Nvlink,
}

/// One accelerator/server generation. All figures are whole-server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSku {
    pub id: String,
    pub kind: SkuKind,
    pub release_month: Month,
    pub availability_delay_months: u32,
    /// Peak FLOP/s at the SKU's declared reference precision.
    pub peak_flops: f64,
    /// Aggregate memory bandwidth, bytes/s.
    pub mem_bandwidth: f64,
    /// Aggregate accelerator memory, bytes.
    pub mem_capacity: f64,
    pub tdp_server_watts: f64,
    pub accelerators_per_server: u32,
    pub server_cost_usd: f64,
    pub interconnect_class: InterconnectClass,
}

impl HardwareSku {
    /// First month the SKU can actually be purchased.
    pub fn available_month(&self) -> Month {
        self.release_month.plus_months(self.availability_delay_months as i32)
    }

    pub fn server_cost(&self) -> Usd {
        Usd::from_dollars(self.server_cost_usd)
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let positive = [
            ("peak_flops", self.peak_flops),
            ("mem_bandwidth", self.mem_bandwidth),
            ("mem_capacity", self.mem_capacity),
            ("tdp_server_watts", self.tdp_server_watts),
            ("server_cost_usd", self.server_cost_usd),
        ];
        for (field, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(CatalogError::InvalidField {
                    id: self.id.clone(),
                    field,
                    value,
                });
            }
        }
        if self.accelerators_per_server == 0 {
            return Err(CatalogError::InvalidField {
                id: self.id.clone(),
                field: "accelerators_per_server",
                value: 0.0,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    DenseTransformer,
    Moe,
    Ssm,
}

/// One LLM release; the source of FLOP/byte requirements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub release_month: Month,
    pub total_params: f64,
    /// Parameters active per token; equals `total_params` for dense models.
    pub active_params: f64,
    pub architecture: Architecture,
    pub layers: u32,
    pub hidden_dim: u32,
    /// Bytes per parameter at serving precision.
    pub bytes_per_param: f64,
    /// KV-cache bytes appended per token; 0 only for ssm (fixed-state) models.
    pub kv_bytes_per_token: f64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), CatalogError> {
        if !(self.total_params > 0.0) || !(self.active_params > 0.0) {
            return Err(CatalogError::InvalidField {
                id: self.id.clone(),
                field: "total_params/active_params",
                value: self.total_params.min(self.active_params),
            });
        }
        if self.active_params > self.total_params {
            return Err(CatalogError::ActiveExceedsTotal { id: self.id.clone() });
        }
        if self.architecture == Architecture::DenseTransformer
            && (self.active_params - self.total_params).abs() > 1e-6 * self.total_params
        {
            return Err(CatalogError::DenseMustBeFullyActive { id: self.id.clone() });
        }
        if self.kv_bytes_per_token <= 0.0 && self.architecture != Architecture::Ssm {
            return Err(CatalogError::InvalidField {
                id: self.id.clone(),
                field: "kv_bytes_per_token",
                value: self.kv_bytes_per_token,
            });
        }
        if !(self.bytes_per_param > 0.0) || self.layers == 0 || self.hidden_dim == 0 {
            return Err(CatalogError::InvalidField {
                id: self.id.clone(),
                field: "bytes_per_param/layers/hidden_dim",
                value: self.bytes_per_param,
            });
        }
        Ok(())
    }

    pub fn active_fraction(&self) -> f64 {
        self.active_params / self.total_params
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthShape {
    SlowSublinear,
    MediumLinear,
    FastExponential,
}

/// Projection regime: the shape picks the extrapolation function, the rate its
/// steepness.
///
/// - `slow-sublinear`: `v(t) = v_last * sqrt(1 + rate * t)`
/// - `medium-linear`: `v(t) = v_last + rate * slope * t`, slope least-squares
///   fitted per field over the seeds
/// - `fast-exponential`: `v(t) = v_last * rate^t` (rate is the per-year ratio)
///
/// with `t` in years past the last seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthRegime {
    pub shape: GrowthShape,
    pub rate: f64,
}

impl GrowthRegime {
    pub fn validate(&self) -> Result<(), CatalogError> {
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(CatalogError::InvalidRegimeRate(self.rate));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CatalogError {
    EmptySeeds,
    SeedsNotChronological { id: String },
    HorizonBeforeLastSeed { last: Month, horizon: Month },
    InvalidRegimeRate(f64),
    NonPositiveExtrapolation { field: &'static str, month: Month },
    InvalidField { id: String, field: &'static str, value: f64 },
    ActiveExceedsTotal { id: String },
    DenseMustBeFullyActive { id: String },
}

impl fmt::Display for CatalogError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatalogError::EmptySeeds => write!(f, "seed list is empty"),
            CatalogError::SeedsNotChronological { id } => {
                write!(f, "seed {id} is out of chronological order")
            }
            CatalogError::HorizonBeforeLastSeed { last, horizon } => {
                write!(f, "horizon {horizon} precedes last seed release {last}")
            }
            CatalogError::InvalidRegimeRate(rate) => {
                write!(f, "growth regime rate must be positive, got {rate}")
            }
            CatalogError::NonPositiveExtrapolation { field, month } => {
                write!(f, "extrapolated {field} is non-positive at {month}; check regime/rate")
            }
            CatalogError::InvalidField { id, field, value } => {
                write!(f, "{id}: field {field} has invalid value {value}")
            }
            CatalogError::ActiveExceedsTotal { id } => {
                write!(f, "{id}: active_params exceeds total_params")
            }
            CatalogError::DenseMustBeFullyActive { id } => {
                write!(f, "{id}: dense-transformer requires active_params == total_params")
            }
        }
    }
}

impl std::error::Error for CatalogError {}

/// Mean inter-release gap of the seeds, rounded to whole months (at least 1).
fn release_cadence_months(releases: &[Month]) -> i32 {
    if releases.len() < 2 {
        return 12;
    }
    let total = releases.last().unwrap().months_since(releases[0]);
    let gaps = (releases.len() - 1) as f64;
    ((f64::from(total) / gaps).round() as i32).max(1)
}

/// Least-squares slope of `values` against years since the first release.
fn fitted_slope_per_year(releases: &[Month], values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let origin = releases[0];
    let xs: Vec<f64> = releases.iter().map(|m| m.years_since(origin)).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = values.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(values) {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Extrapolates one field `years` past its last seed value.
fn extrapolate(regime: &GrowthRegime, last_value: f64, slope: f64, years: f64) -> f64 {
    match regime.shape {
        GrowthShape::SlowSublinear => last_value * (1.0 + regime.rate * years).sqrt(),
        GrowthShape::MediumLinear => last_value + regime.rate * slope * years,
        GrowthShape::FastExponential => last_value * regime.rate.powf(years),
    }
}

fn check_chronological<T>(items: &[T], release: impl Fn(&T) -> Month, id: impl Fn(&T) -> &str) -> Result<(), CatalogError> {
    for pair in items.windows(2) {
        if release(&pair[1]) < release(&pair[0]) {
            return Err(CatalogError::SeedsNotChronological { id: id(&pair[1]).to_string() });
        }
    }
    Ok(())
}

/// Extends a hardware catalog with synthetic generations through `horizon_month`.
///
/// Performance fields follow `regime`; server cost follows `cost_regime` when
/// given (the paper leaves cost growth open, so it is a separate knob), else
/// `regime`. Seeds are returned unchanged at the front of the result.
pub fn project_hardware_roadmap(
    seed_skus: &[HardwareSku],
    horizon_month: Month,
    regime: &GrowthRegime,
    cost_regime: Option<&GrowthRegime>,
) -> Result<Vec<HardwareSku>, CatalogError> {
    if seed_skus.is_empty() {
        return Err(CatalogError::EmptySeeds);
    }
    regime.validate()?;
    if let Some(cr) = cost_regime {
        cr.validate()?;
    }
    for sku in seed_skus {
        sku.validate()?;
    }
    check_chronological(seed_skus, |s| s.release_month, |s| &s.id)?;

    let last = seed_skus.last().unwrap();
    if horizon_month < last.release_month {
        return Err(CatalogError::HorizonBeforeLastSeed {
            last: last.release_month,
            horizon: horizon_month,
        });
    }

    let releases: Vec<Month> = seed_skus.iter().map(|s| s.release_month).collect();
    let cadence = release_cadence_months(&releases);
    let field = |get: fn(&HardwareSku) -> f64| -> (f64, f64) {
        let values: Vec<f64> = seed_skus.iter().map(get).collect();
        (*values.last().unwrap(), fitted_slope_per_year(&releases, &values))
    };
    let (last_flops, slope_flops) = field(|s| s.peak_flops);
    let (last_bw, slope_bw) = field(|s| s.mem_bandwidth);
    let (last_mem, slope_mem) = field(|s| s.mem_capacity);
    let (last_tdp, slope_tdp) = field(|s| s.tdp_server_watts);
    let (last_cost, slope_cost) = field(|s| s.server_cost_usd);
    let cost_regime = cost_regime.unwrap_or(regime);

    let mut out = seed_skus.to_vec();
    let mut k = 1;
    loop {
        let release = last.release_month.plus_months(k * cadence);
        if release > horizon_month {
            break;
        }
        let years = release.years_since(last.release_month);
        let fields = [
            ("peak_flops", extrapolate(regime, last_flops, slope_flops, years)),
            ("mem_bandwidth", extrapolate(regime, last_bw, slope_bw, years)),
            ("mem_capacity", extrapolate(regime, last_mem, slope_mem, years)),
            ("tdp_server_watts", extrapolate(regime, last_tdp, slope_tdp, years)),
            ("server_cost_usd", extrapolate(cost_regime, last_cost, slope_cost, years)),
        ];
        for (name, value) in &fields {
            if !(*value > 0.0) || !value.is_finite() {
                return Err(CatalogError::NonPositiveExtrapolation { field: name, month: release });
            }
        }
        out.push(HardwareSku {
            id: format!("{}-synth-{k}", last.kind),
            kind: last.kind,
            release_month: release,
            availability_delay_months: DEFAULT_SYNTHETIC_DELAY_MONTHS,
            peak_flops: fields[0].1,
            mem_bandwidth: fields[1].1,
            mem_capacity: fields[2].1,
            tdp_server_watts: fields[3].1,
            accelerators_per_server: last.accelerators_per_server,
            server_cost_usd: fields[4].1,
            interconnect_class: last.interconnect_class,
        });
        k += 1;
    }
    Ok(out)
}

/// Extends a model catalog with synthetic releases through `horizon_month`.
///
/// `total_params` follows the regime; architecture, precision, sparsity ratio,
/// and KV sizing are inherited from the latest seed.
pub fn project_model_roadmap(
    seed_models: &[ModelSpec],
    horizon_month: Month,
    regime: &GrowthRegime,
) -> Result<Vec<ModelSpec>, CatalogError> {
    if seed_models.is_empty() {
        return Err(CatalogError::EmptySeeds);
    }
    regime.validate()?;
    for model in seed_models {
        model.validate()?;
    }
    check_chronological(seed_models, |m| m.release_month, |m| &m.id)?;

    let last = seed_models.last().unwrap();
    if horizon_month < last.release_month {
        return Err(CatalogError::HorizonBeforeLastSeed {
            last: last.release_month,
            horizon: horizon_month,
        });
    }

    let releases: Vec<Month> = seed_models.iter().map(|m| m.release_month).collect();
    let cadence = release_cadence_months(&releases);
    let totals: Vec<f64> = seed_models.iter().map(|m| m.total_params).collect();
    let slope = fitted_slope_per_year(&releases, &totals);
    let active_fraction = last.active_fraction();

    let mut out = seed_models.to_vec();
    let mut k = 1;
    loop {
        let release = last.release_month.plus_months(k * cadence);
        if release > horizon_month {
            break;
        }
        let years = release.years_since(last.release_month);
        let total = extrapolate(regime, last.total_params, slope, years);
        if !(total > 0.0) || !total.is_finite() {
            return Err(CatalogError::NonPositiveExtrapolation { field: "total_params", month: release });
        }
        out.push(ModelSpec {
            id: format!("model-synth-{k}"),
            release_month: release,
            total_params: total,
            active_params: total * active_fraction,
            architecture: last.architecture,
            layers: last.layers,
            hidden_dim: last.hidden_dim,
            bytes_per_param: last.bytes_per_param,
            kv_bytes_per_token: last.kv_bytes_per_token,
        });
        k += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sku(id: &str, release: Month, flops: f64) -> HardwareSku {
        HardwareSku {
            id: id.into(),
            kind: SkuKind::GpuServer,
            release_month: release,
            availability_delay_months: 6,
            peak_flops: flops,
            mem_bandwidth: flops / 100.0,
            mem_capacity: 1e11,
            tdp_server_watts: 5000.0,
            accelerators_per_server: 8,
            server_cost_usd: 100_000.0,
            interconnect_class: InterconnectClass::Nvlink,
        }
    }

    fn model(id: &str, release: Month, total: f64) -> ModelSpec {
        ModelSpec {
            id: id.into(),
            release_month: release,
            total_params: total,
            active_params: total,
            architecture: Architecture::DenseTransformer,
            layers: 32,
            hidden_dim: 4096,
            bytes_per_param: 2.0,
            kv_bytes_per_token: 1e5,
        }
    }

    #[test]
    fn linear_two_point_extrapolation() {
        // Two seeds with flops 100 and 200 two years apart; linear fit slope is
        // 50/yr, so the next synthetic generation (two years later) lands at 300.
        let seeds = vec![
            sku("g0", Month::new(2020, 1), 100.0),
            sku("g1", Month::new(2022, 1), 200.0),
        ];
        let regime = GrowthRegime { shape: GrowthShape::MediumLinear, rate: 1.0 };
        let out =
            project_hardware_roadmap(&seeds, Month::new(2024, 1), &regime, None).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].release_month, Month::new(2024, 1));
        assert!((out[2].peak_flops - 300.0).abs() < 1e-9);
    }

    #[test]
    fn zero_extension_returns_seeds() {
        let seeds = vec![
            sku("g0", Month::new(2020, 1), 100.0),
            sku("g1", Month::new(2022, 1), 200.0),
        ];
        let regime = GrowthRegime { shape: GrowthShape::MediumLinear, rate: 1.0 };
        let out = project_hardware_roadmap(&seeds, Month::new(2022, 1), &regime, None).unwrap();
        assert_eq!(out, seeds);
    }

    #[test]
    fn geometric_model_extrapolation() {
        // 100B (2022) -> 200B (2024): per-year ratio sqrt(2); two more years -> 400B.
        let seeds = vec![
            model("m0", Month::new(2022, 1), 100e9),
            model("m1", Month::new(2024, 1), 200e9),
        ];
        let regime =
            GrowthRegime { shape: GrowthShape::FastExponential, rate: 2.0_f64.sqrt() };
        let out = project_model_roadmap(&seeds, Month::new(2026, 1), &regime).unwrap();
        assert_eq!(out.len(), 3);
        assert!((out[2].total_params - 400e9).abs() / 400e9 < 1e-12);
    }

    #[test]
    fn model_horizon_equal_to_last_release_is_identity() {
        let seeds = vec![
            model("m0", Month::new(2022, 1), 100e9),
            model("m1", Month::new(2024, 1), 200e9),
        ];
        let regime = GrowthRegime { shape: GrowthShape::MediumLinear, rate: 1.0 };
        let out = project_model_roadmap(&seeds, Month::new(2024, 1), &regime).unwrap();
        assert_eq!(out, seeds);
    }

    #[test]
    fn errors() {
        let regime = GrowthRegime { shape: GrowthShape::MediumLinear, rate: 1.0 };
        assert!(matches!(
            project_hardware_roadmap(&[], Month::new(2024, 1), &regime, None),
            Err(CatalogError::EmptySeeds)
        ));
        let seeds = vec![sku("g0", Month::new(2020, 1), 100.0)];
        assert!(matches!(
            project_hardware_roadmap(&seeds, Month::new(2019, 1), &regime, None),
            Err(CatalogError::HorizonBeforeLastSeed { .. })
        ));
        let bad = GrowthRegime { shape: GrowthShape::MediumLinear, rate: 0.0 };
        assert!(matches!(
            project_hardware_roadmap(&seeds, Month::new(2024, 1), &bad, None),
            Err(CatalogError::InvalidRegimeRate(_))
        ));
    }

    #[test]
    fn declining_seeds_error_on_nonpositive_extrapolation() {
        let seeds = vec![
            sku("g0", Month::new(2020, 1), 200.0),
            sku("g1", Month::new(2022, 1), 100.0),
        ];
        let regime = GrowthRegime { shape: GrowthShape::MediumLinear, rate: 1.0 };
        let err = project_hardware_roadmap(&seeds, Month::new(2030, 1), &regime, None);
        assert!(matches!(err, Err(CatalogError::NonPositiveExtrapolation { .. })));
    }

    #[test]
    fn truncation_idempotence() {
        let seeds = vec![
            sku("g0", Month::new(2018, 1), 100.0),
            sku("g1", Month::new(2019, 7), 160.0),
            sku("g2", Month::new(2021, 1), 250.0),
        ];
        for shape in [GrowthShape::SlowSublinear, GrowthShape::MediumLinear, GrowthShape::FastExponential] {
            let regime = GrowthRegime { shape, rate: 1.1 };
            let far = project_hardware_roadmap(&seeds, Month::new(2030, 1), &regime, None).unwrap();
            let near = project_hardware_roadmap(&seeds, Month::new(2025, 1), &regime, None).unwrap();
            let truncated: Vec<_> =
                far.into_iter().filter(|s| s.release_month <= Month::new(2025, 1)).collect();
            assert_eq!(truncated, near);
        }
    }

    #[test]
    fn synthetic_monotonicity_under_positive_rate() {
        let seeds = vec![
            model("m0", Month::new(2020, 1), 50e9),
            model("m1", Month::new(2021, 1), 80e9),
            model("m2", Month::new(2022, 1), 120e9),
        ];
        for shape in [GrowthShape::SlowSublinear, GrowthShape::MediumLinear, GrowthShape::FastExponential] {
            let regime = GrowthRegime { shape, rate: 1.2 };
            let out = project_model_roadmap(&seeds, Month::new(2030, 1), &regime).unwrap();
            assert!(out.len() > seeds.len());
            for pair in out[seeds.len() - 1..].windows(2) {
                assert!(pair[1].total_params >= pair[0].total_params);
                pair[1].validate().unwrap();
            }
        }
    }

    #[test]
    fn validation_rules() {
        let mut m = model("m", Month::new(2020, 1), 10e9);
        m.active_params = 20e9;
        assert!(matches!(m.validate(), Err(CatalogError::ActiveExceedsTotal { .. })));

        let mut m = model("m", Month::new(2020, 1), 10e9);
        m.architecture = Architecture::Moe;
        m.active_params = 2e9;
        assert!(m.validate().is_ok());

        let mut m = model("m", Month::new(2020, 1), 10e9);
        m.kv_bytes_per_token = 0.0;
        assert!(m.validate().is_err());
        m.architecture = Architecture::Ssm;
        assert!(m.validate().is_ok());
    }
}
