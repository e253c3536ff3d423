//! Cost engine: amortized CapEx, utilization-driven OpEx, and the build-stage
//! design effects (power-domain stranding, cooling PUE and thermal envelope,
//! network tier multipliers).
//!
//! All dollar outputs are integer cents, and every breakdown's total is the
//! exact sum of its components. Amortization charges are allocated by
//! cumulative differencing so that straight-line charges over a lifetime sum
//! to the purchase cost to the cent.

use serde::{Deserialize, Serialize};

use crate::money::Usd;
use crate::time::Month;

pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Unit prices; defaults follow the published component table for a DGX-class
/// datacenter. Server cost itself comes from the hardware catalog and is only
/// scaled by `server_cost_multiplier` here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceBook {
    pub server_cost_multiplier: f64,
    pub network_capex_per_server: f64,
    pub building_capex_per_sqft: f64,
    pub power_capex_per_watt: f64,
    pub cooling_capex_per_watt: f64,
    pub network_opex_per_server_yr: f64,
    pub energy_tariff_per_mwh: f64,
    pub peak_demand_charge_per_kw_month: f64,
    pub maintenance_per_server_yr: f64,
    pub software_per_server_yr: f64,
}

impl Default for PriceBook {
    fn default() -> Self {
        PriceBook {
            server_cost_multiplier: 1.0,
            network_capex_per_server: 2000.0,
            building_capex_per_sqft: 0.5,
            power_capex_per_watt: 7.0,
            cooling_capex_per_watt: 2.5,
            network_opex_per_server_yr: 600.0,
            energy_tariff_per_mwh: 40.0,
            peak_demand_charge_per_kw_month: 8.0,
            maintenance_per_server_yr: 5000.0,
            software_per_server_yr: 200.0,
        }
    }
}

impl PriceBook {
    pub fn validate(&self) -> Result<(), TcoError> {
        let fields = [
            ("server_cost_multiplier", self.server_cost_multiplier),
            ("network_capex_per_server", self.network_capex_per_server),
            ("building_capex_per_sqft", self.building_capex_per_sqft),
            ("power_capex_per_watt", self.power_capex_per_watt),
            ("cooling_capex_per_watt", self.cooling_capex_per_watt),
            ("network_opex_per_server_yr", self.network_opex_per_server_yr),
            ("energy_tariff_per_mwh", self.energy_tariff_per_mwh),
            ("peak_demand_charge_per_kw_month", self.peak_demand_charge_per_kw_month),
            ("maintenance_per_server_yr", self.maintenance_per_server_yr),
            ("software_per_server_yr", self.software_per_server_yr),
        ];
        for (name, value) in fields {
            if value < 0.0 || !value.is_finite() {
                return Err(TcoError::NegativePrice { field: name, value });
            }
        }
        Ok(())
    }

    /// Uniformly scales every entry; used for price-uncertainty jitter.
    pub fn scaled(&self, factor: f64) -> PriceBook {
        PriceBook {
            server_cost_multiplier: self.server_cost_multiplier * factor,
            network_capex_per_server: self.network_capex_per_server * factor,
            building_capex_per_sqft: self.building_capex_per_sqft * factor,
            power_capex_per_watt: self.power_capex_per_watt * factor,
            cooling_capex_per_watt: self.cooling_capex_per_watt * factor,
            network_opex_per_server_yr: self.network_opex_per_server_yr * factor,
            energy_tariff_per_mwh: self.energy_tariff_per_mwh * factor,
            peak_demand_charge_per_kw_month: self.peak_demand_charge_per_kw_month * factor,
            maintenance_per_server_yr: self.maintenance_per_server_yr * factor,
            software_per_server_yr: self.software_per_server_yr * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepreciationMethod {
    StraightLine,
    DecliningBalance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmortizationSchedule {
    pub facility_years: u32,
    pub network_years: u32,
    pub it_years: u32,
    pub method: DepreciationMethod,
}

impl Default for AmortizationSchedule {
    fn default() -> Self {
        AmortizationSchedule {
            facility_years: 30,
            network_years: 8,
            it_years: 5,
            method: DepreciationMethod::StraightLine,
        }
    }
}

impl AmortizationSchedule {
    pub fn validate(&self) -> Result<(), TcoError> {
        let ranges = [
            ("facility_years", self.facility_years, 15, 30),
            ("network_years", self.network_years, 7, 10),
            ("it_years", self.it_years, 3, 5),
        ];
        for (field, value, lo, hi) in ranges {
            if value < lo || value > hi {
                return Err(TcoError::ScheduleOutOfRange { field, value, lo, hi });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerTopology {
    PerPdu,
    PerUdomain,
    PerDc,
}

impl PowerTopology {
    pub const ALL: [PowerTopology; 3] =
        [PowerTopology::PerPdu, PowerTopology::PerUdomain, PowerTopology::PerDc];

    pub fn label(&self) -> &'static str {
        match self {
            PowerTopology::PerPdu => "per-pdu",
            PowerTopology::PerUdomain => "per-udomain",
            PowerTopology::PerDc => "per-dc",
        }
    }
}

/// Power delivery design: sharing-domain granularity and per-watt cost premium.
/// Flatter domains strand less power but cost more per watt; many small
/// domains carry a maintenance premium (more distribution gear to service).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerDesign {
    pub topology: PowerTopology,
    /// Budget of one sharing domain; ignored for per-dc (one facility domain).
    pub domain_budget_watts: f64,
    pub capex_multiplier: f64,
    pub maintenance_multiplier: f64,
}

impl PowerDesign {
    pub fn preset(topology: PowerTopology) -> PowerDesign {
        match topology {
            PowerTopology::PerPdu => PowerDesign {
                topology,
                domain_budget_watts: 20_000.0,
                capex_multiplier: 1.0,
                maintenance_multiplier: 1.12,
            },
            PowerTopology::PerUdomain => PowerDesign {
                topology,
                domain_budget_watts: 600_000.0,
                capex_multiplier: 1.07,
                maintenance_multiplier: 1.04,
            },
            PowerTopology::PerDc => PowerDesign {
                topology,
                domain_budget_watts: f64::INFINITY,
                capex_multiplier: 1.15,
                maintenance_multiplier: 1.0,
            },
        }
    }

    /// Servers one sharing domain can host.
    pub fn servers_per_domain(&self, facility_capacity_watts: f64, server_tdp_watts: f64) -> u64 {
        let budget = match self.topology {
            PowerTopology::PerDc => facility_capacity_watts,
            _ => self.domain_budget_watts,
        };
        stranded_power(budget, server_tdp_watts).0
    }

    /// Watts that must be provisioned (whole domains) to host one cohort.
    pub fn provisioned_watts_for(&self, server_count: u64, server_tdp_watts: f64) -> f64 {
        if server_count == 0 {
            return 0.0;
        }
        match self.topology {
            PowerTopology::PerDc => server_count as f64 * server_tdp_watts,
            _ => {
                let per_domain = stranded_power(self.domain_budget_watts, server_tdp_watts).0;
                if per_domain == 0 {
                    // A single server outgrows the domain: it cannot be hosted.
                    f64::INFINITY
                } else {
                    (server_count as f64 / per_domain as f64).ceil() * self.domain_budget_watts
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoolingKind {
    Air,
    Hybrid,
    Liquid,
}

impl CoolingKind {
    pub const ALL: [CoolingKind; 3] = [CoolingKind::Air, CoolingKind::Hybrid, CoolingKind::Liquid];

    pub fn label(&self) -> &'static str {
        match self {
            CoolingKind::Air => "air",
            CoolingKind::Hybrid => "hybrid",
            CoolingKind::Liquid => "liquid",
        }
    }
}

/// Cooling design: PUE, capex premium over the per-watt base, and the
/// per-server thermal envelope beyond which performance derates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingDesign {
    pub kind: CoolingKind,
    pub pue: f64,
    pub capex_multiplier: f64,
    pub thermal_cap_watts_per_server: f64,
    pub maintenance_multiplier: f64,
}

impl CoolingDesign {
    pub fn preset(kind: CoolingKind) -> CoolingDesign {
        match kind {
            CoolingKind::Air => CoolingDesign {
                kind,
                pue: 1.30,
                capex_multiplier: 1.0,
                thermal_cap_watts_per_server: 10_000.0,
                maintenance_multiplier: 1.0,
            },
            CoolingKind::Hybrid => CoolingDesign {
                kind,
                pue: 1.15,
                capex_multiplier: 1.25,
                thermal_cap_watts_per_server: 17_000.0,
                maintenance_multiplier: 1.05,
            },
            CoolingKind::Liquid => CoolingDesign {
                kind,
                pue: 1.08,
                capex_multiplier: 1.8,
                thermal_cap_watts_per_server: 40_000.0,
                maintenance_multiplier: 1.4,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkTier {
    Ethernet,
    Infiniband,
    Nvlink,
    Hierarchical,
}

impl NetworkTier {
    pub const ALL: [NetworkTier; 4] = [
        NetworkTier::Ethernet,
        NetworkTier::Infiniband,
        NetworkTier::Nvlink,
        NetworkTier::Hierarchical,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            NetworkTier::Ethernet => "ethernet",
            NetworkTier::Infiniband => "infiniband",
            NetworkTier::Nvlink => "nvlink",
            NetworkTier::Hierarchical => "hierarchical",
        }
    }
}

/// Network design: per-server cost multipliers and the efficiency class seen
/// by the roofline model (slow fabrics stall collectives and waste
/// accelerator time; a hierarchical fabric matches the traffic pattern).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkDesign {
    pub tier: NetworkTier,
    pub capex_multiplier: f64,
    pub opex_multiplier: f64,
    pub efficiency_class: f64,
}

impl NetworkDesign {
    pub fn preset(tier: NetworkTier) -> NetworkDesign {
        match tier {
            NetworkTier::Ethernet => NetworkDesign {
                tier,
                capex_multiplier: 1.0,
                opex_multiplier: 1.0,
                efficiency_class: 0.82,
            },
            NetworkTier::Infiniband => NetworkDesign {
                tier,
                capex_multiplier: 1.75,
                opex_multiplier: 1.4,
                efficiency_class: 0.94,
            },
            NetworkTier::Nvlink => NetworkDesign {
                tier,
                capex_multiplier: 3.0,
                opex_multiplier: 1.8,
                efficiency_class: 0.96,
            },
            NetworkTier::Hierarchical => NetworkDesign {
                tier,
                capex_multiplier: 1.9,
                opex_multiplier: 1.3,
                efficiency_class: 1.0,
            },
        }
    }
}

/// The build-stage choice bundle, resolved to numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfrastructureDesign {
    pub power: PowerDesign,
    pub cooling: CoolingDesign,
    pub network: NetworkDesign,
    pub facility_capacity_watts: f64,
    /// Facility watts built (and paid for) on day one, before any fleet.
    pub initial_build_watts: f64,
    /// Non-accelerator IT load carried by the facility, as a fraction of
    /// provisioned watts.
    pub aux_it_fraction: f64,
    /// Fraction of TDP a server draws when idle.
    pub server_idle_fraction: f64,
    pub thermal_derate_exponent: f64,
    /// SKUs whose thermal derate would fall below this are not deployed.
    pub min_deploy_thermal_factor: f64,
    pub sqft_per_server: f64,
}

impl InfrastructureDesign {
    pub fn preset(
        power: PowerTopology,
        cooling: CoolingKind,
        network: NetworkTier,
        facility_capacity_watts: f64,
    ) -> InfrastructureDesign {
        InfrastructureDesign {
            power: PowerDesign::preset(power),
            cooling: CoolingDesign::preset(cooling),
            network: NetworkDesign::preset(network),
            facility_capacity_watts,
            initial_build_watts: 0.0,
            aux_it_fraction: 0.20,
            server_idle_fraction: 0.5,
            thermal_derate_exponent: 1.5,
            min_deploy_thermal_factor: 0.7,
            sqft_per_server: 8.0,
        }
    }

    /// Thermal derate factor for a server of the given TDP under this cooling.
    pub fn thermal_factor(&self, tdp_watts: f64) -> f64 {
        if tdp_watts > self.cooling.thermal_cap_watts_per_server {
            (self.cooling.thermal_cap_watts_per_server / tdp_watts)
                .powf(self.thermal_derate_exponent)
        } else {
            1.0
        }
    }

    /// Whether operations would deploy this server class at all.
    pub fn deployable(&self, tdp_watts: f64) -> bool {
        self.thermal_factor(tdp_watts) >= self.min_deploy_thermal_factor
    }

    /// Traditional baseline build: hierarchical power, air cooling, Ethernet.
    pub fn traditional(facility_capacity_watts: f64) -> InfrastructureDesign {
        InfrastructureDesign::preset(
            PowerTopology::PerPdu,
            CoolingKind::Air,
            NetworkTier::Ethernet,
            facility_capacity_watts,
        )
    }

    pub fn validate(&self) -> Result<(), TcoError> {
        if self.cooling.pue < 1.0 {
            return Err(TcoError::InvalidDesign("pue must be >= 1.0"));
        }
        if !(self.power.domain_budget_watts > 0.0) {
            return Err(TcoError::InvalidDesign("domain_budget_watts must be positive"));
        }
        if !(self.facility_capacity_watts > 0.0) {
            return Err(TcoError::InvalidDesign("facility_capacity_watts must be positive"));
        }
        if !(0.0..1.0).contains(&self.aux_it_fraction) {
            return Err(TcoError::InvalidDesign("aux_it_fraction must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.server_idle_fraction) {
            return Err(TcoError::InvalidDesign("server_idle_fraction must be in [0, 1]"));
        }
        Ok(())
    }

    /// Power a server draws at a given utilization, within the thermal cap.
    pub fn server_draw_watts(&self, tdp_watts: f64, utilization: f64) -> f64 {
        let ceiling = tdp_watts.min(self.cooling.thermal_cap_watts_per_server);
        ceiling * (self.server_idle_fraction + (1.0 - self.server_idle_fraction) * utilization)
    }

    pub fn label(&self) -> String {
        format!(
            "{}+{}+{}",
            self.power.topology.label(),
            self.cooling.kind.label(),
            self.network.tier.label()
        )
    }
}

/// Annualized cost breakdown; `total` is the exact sum of the components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcoBreakdown {
    pub capex_it: Usd,
    pub capex_network: Usd,
    pub capex_building: Usd,
    pub capex_power: Usd,
    pub capex_cooling: Usd,
    pub opex_energy: Usd,
    pub opex_peak_power: Usd,
    pub opex_maintenance: Usd,
    pub opex_network: Usd,
    pub opex_software: Usd,
    pub total: Usd,
}

impl TcoBreakdown {
    pub const COMPONENT_NAMES: [&'static str; 10] = [
        "capex_it",
        "capex_network",
        "capex_building",
        "capex_power",
        "capex_cooling",
        "opex_energy",
        "opex_peak_power",
        "opex_maintenance",
        "opex_network",
        "opex_software",
    ];

    pub fn from_components(components: [Usd; 10]) -> TcoBreakdown {
        let total = components.iter().copied().sum();
        TcoBreakdown {
            capex_it: components[0],
            capex_network: components[1],
            capex_building: components[2],
            capex_power: components[3],
            capex_cooling: components[4],
            opex_energy: components[5],
            opex_peak_power: components[6],
            opex_maintenance: components[7],
            opex_network: components[8],
            opex_software: components[9],
            total,
        }
    }

    pub fn components(&self) -> [Usd; 10] {
        [
            self.capex_it,
            self.capex_network,
            self.capex_building,
            self.capex_power,
            self.capex_cooling,
            self.opex_energy,
            self.opex_peak_power,
            self.opex_maintenance,
            self.opex_network,
            self.opex_software,
        ]
    }

    pub fn zero() -> TcoBreakdown {
        TcoBreakdown::from_components([Usd::ZERO; 10])
    }
}

/// One cohort as the cost engine sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSnapshot {
    pub sku_id: String,
    pub server_count: u64,
    pub purchase_month: Month,
    pub tdp_server_watts: f64,
    pub server_cost_usd: f64,
    /// Utilization averaged over the cohort's live months in the year.
    pub utilization: f64,
    /// Months the cohort existed within the TCO year (prorates its costs).
    pub months_in_service_in_year: u32,
    /// True when the cohort was decommissioned during the year: it still
    /// carries its live months of cost, but is absent from the year-end fleet.
    pub retired_during_year: bool,
}

/// Fleet view used for an annual TCO evaluation, normally a December state
/// with year-averaged utilizations.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetSnapshot {
    pub month: Month,
    pub cohorts: Vec<CohortSnapshot>,
    /// High-water mark of facility watts built out (whole power domains).
    pub provisioned_watts: f64,
}

impl FleetSnapshot {
    /// Servers standing at the snapshot month (retired cohorts excluded).
    pub fn total_servers(&self) -> u64 {
        self.cohorts.iter().filter(|c| !c.retired_during_year).map(|c| c.server_count).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TcoError {
    NegativePrice { field: &'static str, value: f64 },
    ScheduleOutOfRange { field: &'static str, value: u32, lo: u32, hi: u32 },
    InvalidDesign(&'static str),
    UnpricedSku { sku_id: String },
    InvalidUtilization { sku_id: String, utilization: f64 },
}

impl std::fmt::Display for TcoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TcoError::NegativePrice { field, value } => {
                write!(f, "price-book field {field} must be non-negative, got {value}")
            }
            TcoError::ScheduleOutOfRange { field, value, lo, hi } => {
                write!(f, "{field} = {value} outside allowed range {lo}..={hi}")
            }
            TcoError::InvalidDesign(msg) => write!(f, "invalid infrastructure design: {msg}"),
            TcoError::UnpricedSku { sku_id } => write!(f, "sku {sku_id} has no valid price"),
            TcoError::InvalidUtilization { sku_id, utilization } => {
                write!(f, "cohort {sku_id} utilization {utilization} outside [0, 1]")
            }
        }
    }
}

impl std::error::Error for TcoError {}

/// Annual depreciation charge for an asset in its `years_in_service`-th year.
///
/// Charges are cumulative differences of rounded totals, so straight-line
/// charges over the lifetime sum to exactly `cost`, and declining-balance
/// (double-declining rate) never exceeds it.
pub fn amortize(
    cost: Usd,
    lifetime_years: u32,
    years_in_service: f64,
    method: DepreciationMethod,
) -> Usd {
    assert!(lifetime_years > 0, "lifetime must be positive");
    assert!(years_in_service >= 0.0, "service time must be non-negative");
    let year = years_in_service.floor();
    if year >= f64::from(lifetime_years) {
        return Usd::ZERO;
    }
    let cents = cost.cents() as f64;
    let cumulative = |y: f64| -> i64 {
        match method {
            DepreciationMethod::StraightLine => {
                (cents * y / f64::from(lifetime_years)).round() as i64
            }
            DepreciationMethod::DecliningBalance => {
                let rate = (2.0 / f64::from(lifetime_years)).min(1.0);
                (cents * (1.0 - (1.0 - rate).powf(y))).round() as i64
            }
        }
    };
    Usd::from_cents(cumulative(year + 1.0) - cumulative(year))
}

/// Depreciation charge for the live months `[age_start, age_start + months)`
/// of an asset's life, allocated monthly with the same cumulative-rounding
/// scheme as [`amortize`] so full-life charges still sum exactly to cost.
pub fn amortize_months(
    cost: Usd,
    lifetime_years: u32,
    age_start_months: i32,
    months: u32,
    method: DepreciationMethod,
) -> Usd {
    assert!(lifetime_years > 0, "lifetime must be positive");
    let life_months = i64::from(lifetime_years) * 12;
    let cents = cost.cents() as f64;
    let cumulative = |m: i64| -> i64 {
        let m = m.clamp(0, life_months);
        match method {
            DepreciationMethod::StraightLine => {
                (cents * m as f64 / life_months as f64).round() as i64
            }
            DepreciationMethod::DecliningBalance => {
                let rate = (2.0 / f64::from(lifetime_years)).min(1.0);
                (cents * (1.0 - (1.0 - rate).powf(m as f64 / 12.0))).round() as i64
            }
        }
    };
    let start = i64::from(age_start_months).max(0);
    let end = start + i64::from(months);
    Usd::from_cents(cumulative(end) - cumulative(start))
}

/// Whole servers a power domain hosts, and the leftover (stranded) watts.
pub fn stranded_power(domain_budget_watts: f64, server_tdp_watts: f64) -> (u64, f64) {
    assert!(domain_budget_watts > 0.0 && server_tdp_watts > 0.0);
    if domain_budget_watts.is_infinite() {
        return (u64::MAX, 0.0);
    }
    let servers = (domain_budget_watts / server_tdp_watts).floor() as u64;
    let stranded = domain_budget_watts - server_tdp_watts * servers as f64;
    (servers, stranded)
}

/// Total servers deployable across all of the design's sharing domains.
pub fn fleet_capacity(design: &InfrastructureDesign, server_tdp_watts: f64) -> u64 {
    match design.power.topology {
        PowerTopology::PerDc => {
            stranded_power(design.facility_capacity_watts, server_tdp_watts).0
        }
        _ => {
            let domains =
                (design.facility_capacity_watts / design.power.domain_budget_watts).floor() as u64;
            domains * stranded_power(design.power.domain_budget_watts, server_tdp_watts).0
        }
    }
}

/// Energy and peak-demand charges for a year.
///
/// Energy is IT consumption scaled by PUE at the tariff; the demand charge
/// bills the peak facility draw monthly.
pub fn energy_opex(
    it_energy_mwh: f64,
    pue: f64,
    tariff_per_mwh: f64,
    peak_kw: f64,
    demand_charge_per_kw_month: f64,
) -> (Usd, Usd) {
    assert!(it_energy_mwh >= 0.0 && pue >= 1.0 && tariff_per_mwh >= 0.0);
    assert!(peak_kw >= 0.0 && demand_charge_per_kw_month >= 0.0);
    let energy = Usd::from_dollars(it_energy_mwh * pue * tariff_per_mwh);
    let peak = Usd::from_dollars(peak_kw * pue * demand_charge_per_kw_month * 12.0);
    (energy, peak)
}

/// Annualized TCO of a fleet under a design, price book, and schedule.
///
/// CapEx terms amortize per cohort age (IT, network) or over provisioned
/// facility watts (power, cooling) and floor area (building); OpEx terms scale
/// with live servers and actual utilization. Cohorts older than the schedule
/// contribute zero CapEx.
pub fn annual_tco(
    fleet: &FleetSnapshot,
    design: &InfrastructureDesign,
    prices: &PriceBook,
    schedule: &AmortizationSchedule,
) -> Result<TcoBreakdown, TcoError> {
    prices.validate()?;
    schedule.validate()?;
    design.validate()?;

    let mut capex_it = Usd::ZERO;
    let mut capex_network = Usd::ZERO;
    let mut it_watts = 0.0;
    let mut peak_it_watts = 0.0;
    let mut maintenance = 0.0;
    let mut network_opex = 0.0;
    let mut software = 0.0;
    let live_servers = fleet.total_servers();
    let year_start = Month::new(fleet.month.year(), 1);

    for cohort in &fleet.cohorts {
        if !(cohort.server_cost_usd > 0.0) || !cohort.server_cost_usd.is_finite() {
            return Err(TcoError::UnpricedSku { sku_id: cohort.sku_id.clone() });
        }
        if !(0.0..=1.0).contains(&cohort.utilization) {
            return Err(TcoError::InvalidUtilization {
                sku_id: cohort.sku_id.clone(),
                utilization: cohort.utilization,
            });
        }
        let months = cohort.months_in_service_in_year.clamp(1, 12);
        let frac = f64::from(months) / 12.0;
        // Retired cohorts lived the leading months of the year; standing ones
        // the trailing months up to the snapshot.
        let first_live = if cohort.retired_during_year {
            year_start
        } else {
            fleet.month.plus_months(1 - months as i32)
        };
        let age_start = first_live.months_since(cohort.purchase_month);
        let count = cohort.server_count as f64;

        let it_cost = Usd::from_dollars(
            cohort.server_cost_usd * prices.server_cost_multiplier * count,
        );
        capex_it +=
            amortize_months(it_cost, schedule.it_years, age_start, months, schedule.method);
        let net_cost = Usd::from_dollars(
            prices.network_capex_per_server * design.network.capex_multiplier * count,
        );
        capex_network +=
            amortize_months(net_cost, schedule.network_years, age_start, months, schedule.method);

        it_watts +=
            count * design.server_draw_watts(cohort.tdp_server_watts, cohort.utilization) * frac;
        peak_it_watts += count * design.server_draw_watts(cohort.tdp_server_watts, 1.0);
        maintenance += prices.maintenance_per_server_yr
            * design.power.maintenance_multiplier
            * design.cooling.maintenance_multiplier
            * count
            * frac;
        network_opex +=
            prices.network_opex_per_server_yr * design.network.opex_multiplier * count * frac;
        software += prices.software_per_server_yr * count * frac;
    }

    let provisioned = fleet.provisioned_watts.max(design.initial_build_watts);
    let aux_watts = design.aux_it_fraction * provisioned;
    it_watts += aux_watts;
    peak_it_watts += aux_watts;

    // Facility-scale CapEx is charged flat over its life: the facility is a
    // single asset whose build-out age we do not track per watt.
    let facility_amort = |cost: Usd| -> Usd {
        amortize(cost, schedule.facility_years, 0.0, DepreciationMethod::StraightLine)
    };
    let capex_power = facility_amort(Usd::from_dollars(
        prices.power_capex_per_watt * design.power.capex_multiplier * provisioned,
    ));
    let capex_cooling = facility_amort(Usd::from_dollars(
        prices.cooling_capex_per_watt * design.cooling.capex_multiplier * provisioned,
    ));
    let capex_building = facility_amort(Usd::from_dollars(
        prices.building_capex_per_sqft * design.sqft_per_server * live_servers as f64,
    ));

    let it_energy_mwh = it_watts * HOURS_PER_YEAR / 1e6;
    let (opex_energy, opex_peak_power) = energy_opex(
        it_energy_mwh,
        design.cooling.pue,
        prices.energy_tariff_per_mwh,
        peak_it_watts / 1e3,
        prices.peak_demand_charge_per_kw_month,
    );

    let opex_maintenance = Usd::from_dollars(maintenance);
    let opex_network = Usd::from_dollars(network_opex);
    let opex_software = Usd::from_dollars(software);

    Ok(TcoBreakdown::from_components([
        capex_it,
        capex_network,
        capex_building,
        capex_power,
        capex_cooling,
        opex_energy,
        opex_peak_power,
        opex_maintenance,
        opex_network,
        opex_software,
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snapshot(servers: u64, utilization: f64) -> FleetSnapshot {
        FleetSnapshot {
            month: Month::new(2025, 12),
            cohorts: vec![CohortSnapshot {
                sku_id: "h100".into(),
                server_count: servers,
                purchase_month: Month::new(2024, 12),
                tdp_server_watts: 10_200.0,
                server_cost_usd: 375_000.0,
                utilization,
                months_in_service_in_year: 12,
                retired_during_year: false,
            }],
            provisioned_watts: 10e6,
        }
    }

    #[test]
    fn straight_line_amortization() {
        let cost = Usd::from_dollars(375_000.0);
        let charge = amortize(cost, 5, 2.0, DepreciationMethod::StraightLine);
        assert_eq!(charge, Usd::from_dollars(75_000.0));
        assert_eq!(amortize(cost, 5, 5.0, DepreciationMethod::StraightLine), Usd::ZERO);
        assert_eq!(amortize(cost, 5, 7.5, DepreciationMethod::StraightLine), Usd::ZERO);
    }

    #[test]
    fn power_capex_hand_arithmetic() {
        // $7.0/W * 10 MW over 15 years ~ $4,666,667/yr.
        let cost = Usd::from_dollars(7.0 * 10e6);
        let charge = amortize(cost, 15, 0.0, DepreciationMethod::StraightLine);
        assert!((charge.as_dollars() - 4_666_667.0).abs() < 1.0);
    }

    #[test]
    fn straight_line_conserves_exactly() {
        let cost = Usd::from_cents(1_000_003); // deliberately not divisible
        let total: Usd = (0..7)
            .map(|y| amortize(cost, 7, y as f64, DepreciationMethod::StraightLine))
            .sum();
        assert_eq!(total, cost);
    }

    #[test]
    fn declining_balance_never_exceeds_cost() {
        let cost = Usd::from_dollars(375_000.0);
        let total: Usd = (0..5)
            .map(|y| amortize(cost, 5, y as f64, DepreciationMethod::DecliningBalance))
            .sum();
        assert!(total <= cost);
        assert!(total.cents() > 0);
        let first = amortize(cost, 5, 0.0, DepreciationMethod::DecliningBalance);
        assert_eq!(first, Usd::from_dollars(150_000.0)); // 40% of cost
    }

    #[test]
    fn stranded_power_formula() {
        assert_eq!(stranded_power(100_000.0, 10_200.0), (9, 8200.0));
        assert_eq!(stranded_power(102_000.0, 10_200.0), (10, 0.0));
        assert_eq!(stranded_power(5_000.0, 10_200.0), (0, 5000.0));
    }

    #[test]
    fn capacity_per_dc_single_domain() {
        let design = InfrastructureDesign::preset(
            PowerTopology::PerDc,
            CoolingKind::Hybrid,
            NetworkTier::Hierarchical,
            10e6,
        );
        assert_eq!(fleet_capacity(&design, 10_200.0), 980);
    }

    #[test]
    fn capacity_per_pdu_many_domains() {
        let mut design = InfrastructureDesign::preset(
            PowerTopology::PerPdu,
            CoolingKind::Hybrid,
            NetworkTier::Hierarchical,
            10e6,
        );
        design.power.domain_budget_watts = 100_000.0;
        assert_eq!(fleet_capacity(&design, 10_200.0), 900); // 100 domains x 9
    }

    #[test]
    fn topology_capacity_ordering() {
        // Nested domains: facility = k * udomain, udomain = m * pdu budget.
        let facility = 12e6;
        let mut pdu = InfrastructureDesign::preset(
            PowerTopology::PerPdu,
            CoolingKind::Air,
            NetworkTier::Ethernet,
            facility,
        );
        pdu.power.domain_budget_watts = 20_000.0;
        let mut udomain = pdu.clone();
        udomain.power.topology = PowerTopology::PerUdomain;
        udomain.power.domain_budget_watts = 600_000.0;
        let mut dc = pdu.clone();
        dc.power.topology = PowerTopology::PerDc;
        for tdp in [3_500.0, 6_500.0, 10_200.0, 14_300.0] {
            let c_pdu = fleet_capacity(&pdu, tdp);
            let c_ud = fleet_capacity(&udomain, tdp);
            let c_dc = fleet_capacity(&dc, tdp);
            assert!(c_dc >= c_ud, "tdp {tdp}: {c_dc} < {c_ud}");
            assert!(c_ud >= c_pdu, "tdp {tdp}: {c_ud} < {c_pdu}");
        }
    }

    #[test]
    fn energy_hand_arithmetic() {
        // One 10.2 kW server, full year, PUE 1.15, $30/MWh.
        let mwh = 10.2e3 * HOURS_PER_YEAR / 1e6;
        assert!((mwh - 89.352).abs() < 1e-9);
        let (energy, peak) = energy_opex(mwh, 1.15, 30.0, 0.0, 0.0);
        assert_eq!(energy, Usd::from_dollars(3_082.64));
        assert_eq!(peak, Usd::ZERO);
    }

    #[test]
    fn energy_zero_tariff() {
        let (energy, peak) = energy_opex(100.0, 1.0, 0.0, 50.0, 0.0);
        assert_eq!(energy, Usd::ZERO);
        assert_eq!(peak, Usd::ZERO);
    }

    #[test]
    fn breakdown_additivity_and_empty_fleet() {
        let design = InfrastructureDesign::traditional(10e6);
        let prices = PriceBook::default();
        let schedule = AmortizationSchedule::default();
        let fleet = snapshot(500, 0.75);
        let tco = annual_tco(&fleet, &design, &prices, &schedule).unwrap();
        let sum: Usd = tco.components().iter().copied().sum();
        assert_eq!(sum, tco.total);

        let empty = FleetSnapshot {
            month: Month::new(2025, 12),
            cohorts: vec![],
            provisioned_watts: 10e6,
        };
        let tco = annual_tco(&empty, &design, &prices, &schedule).unwrap();
        assert_eq!(tco.capex_it, Usd::ZERO);
        assert_eq!(tco.opex_maintenance, Usd::ZERO);
        assert!(tco.capex_power.cents() > 0); // facility still amortizes
    }

    #[test]
    fn doubling_prices_doubles_total() {
        let design = InfrastructureDesign::traditional(10e6);
        let schedule = AmortizationSchedule::default();
        let fleet = snapshot(500, 0.75);
        let prices = PriceBook::default();
        let base = annual_tco(&fleet, &design, &prices, &schedule).unwrap();
        let doubled = annual_tco(&fleet, &design, &prices.scaled(2.0), &schedule).unwrap();
        let diff = (doubled.total.cents() - 2 * base.total.cents()).abs();
        assert!(diff <= 10, "rounding drift {diff} cents"); // cent rounding only
    }

    #[test]
    fn tco_monotone_in_servers_and_utilization() {
        let design = InfrastructureDesign::traditional(10e6);
        let prices = PriceBook::default();
        let schedule = AmortizationSchedule::default();
        let base = annual_tco(&snapshot(500, 0.75), &design, &prices, &schedule).unwrap();
        let more = annual_tco(&snapshot(600, 0.75), &design, &prices, &schedule).unwrap();
        let hotter = annual_tco(&snapshot(500, 0.9), &design, &prices, &schedule).unwrap();
        assert!(more.total > base.total);
        assert!(hotter.total > base.total);
    }

    #[test]
    fn unpriced_sku_is_an_error() {
        let design = InfrastructureDesign::traditional(10e6);
        let prices = PriceBook::default();
        let schedule = AmortizationSchedule::default();
        let mut fleet = snapshot(10, 0.5);
        fleet.cohorts[0].server_cost_usd = 0.0;
        assert!(matches!(
            annual_tco(&fleet, &design, &prices, &schedule),
            Err(TcoError::UnpricedSku { .. })
        ));
    }

    #[test]
    fn cohort_past_schedule_contributes_no_capex() {
        let design = InfrastructureDesign::traditional(10e6);
        let prices = PriceBook::default();
        let schedule = AmortizationSchedule::default();
        let mut fleet = snapshot(100, 0.5);
        fleet.cohorts[0].purchase_month = Month::new(2015, 1); // 10 years old
        let tco = annual_tco(&fleet, &design, &prices, &schedule).unwrap();
        assert_eq!(tco.capex_it, Usd::ZERO);
        assert!(tco.opex_maintenance.cents() > 0);
    }

    #[test]
    fn schedule_ranges_validated() {
        let mut s = AmortizationSchedule::default();
        s.it_years = 6;
        assert!(matches!(s.validate(), Err(TcoError::ScheduleOutOfRange { .. })));
        s.it_years = 3;
        assert!(s.validate().is_ok());
    }
}
