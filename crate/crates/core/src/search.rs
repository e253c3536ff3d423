//! Monte Carlo evaluation over scenario uncertainty and exhaustive policy
//! search across build, refresh, and operation spaces.
//!
//! Trial seeds derive from a master seed through a counter-based split, so
//! trial `i` sees the same sampled scenario regardless of trial count or
//! execution order, and every candidate policy is evaluated under common
//! random numbers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{
    project_hardware_roadmap, project_model_roadmap, GrowthRegime, GrowthShape, HardwareSku,
    ModelSpec,
};
use crate::lifecycle::{
    simulate, LifecycleError, OperationPolicy, RefreshPolicy, Scenario, SimOutcome,
    OPERATION_FLAG_NAMES,
};
use crate::money::Usd;
use crate::tco::{CoolingDesign, CoolingKind, InfrastructureDesign, NetworkDesign, NetworkTier, PowerDesign, PowerTopology};

/// Canonical growth regimes for the slow/medium/fast axes.
pub fn canonical_model_regime(shape: GrowthShape) -> GrowthRegime {
    match shape {
        GrowthShape::SlowSublinear => GrowthRegime { shape, rate: 1.0 },
        GrowthShape::MediumLinear => GrowthRegime { shape, rate: 1.0 },
        GrowthShape::FastExponential => GrowthRegime { shape, rate: 1.4 },
    }
}

pub fn canonical_hardware_regime(shape: GrowthShape) -> GrowthRegime {
    match shape {
        GrowthShape::SlowSublinear => GrowthRegime { shape, rate: 0.6 },
        GrowthShape::MediumLinear => GrowthRegime { shape, rate: 1.0 },
        GrowthShape::FastExponential => GrowthRegime { shape, rate: 1.3 },
    }
}

/// Roadmap seeds and baseline regimes needed to re-project a scenario under a
/// sampled growth regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTemplate {
    pub scenario: Scenario,
    pub model_seeds: Vec<ModelSpec>,
    pub hardware_seeds: Vec<HardwareSku>,
    pub model_regime: GrowthRegime,
    pub hardware_regime: GrowthRegime,
    pub hardware_cost_regime: Option<GrowthRegime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Triangular {
    pub min: f64,
    pub mode: f64,
    pub max: f64,
}

impl Triangular {
    pub fn point(v: f64) -> Triangular {
        Triangular { min: v, mode: v, max: v }
    }

    pub fn mean(&self) -> f64 {
        (self.min + self.mode + self.max) / 3.0
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max <= self.min {
            return self.mode;
        }
        let u: f64 = rng.gen();
        let cut = (self.mode - self.min) / (self.max - self.min);
        if u < cut {
            self.min + (u * (self.max - self.min) * (self.mode - self.min)).sqrt()
        } else {
            self.max - ((1.0 - u) * (self.max - self.min) * (self.max - self.mode)).sqrt()
        }
    }
}

fn sample_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn sample_weighted<'a, T>(rng: &mut impl Rng, options: &'a [(T, f64)]) -> &'a T {
    let total: f64 = options.iter().map(|(_, w)| w).sum();
    let mut draw: f64 = rng.gen::<f64>() * total;
    for (value, weight) in options {
        draw -= weight;
        if draw <= 0.0 {
            return value;
        }
    }
    &options.last().expect("non-empty options").0
}

/// Independent uncertainty distributions around a baseline scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDistribution {
    pub template: ScenarioTemplate,
    pub demand_growth: Triangular,
    pub model_regimes: Vec<(GrowthRegime, f64)>,
    pub hardware_regimes: Vec<(GrowthRegime, f64)>,
    /// Availability delay for synthetic hardware, months (uniform).
    pub availability_delay_months: (u32, u32),
    /// Energy tariff $/MWh (uniform).
    pub energy_tariff: (f64, f64),
    /// Symmetric multiplicative jitter applied to the whole price book.
    pub price_jitter_fraction: f64,
}

impl ScenarioDistribution {
    /// Spread distributions around the template's own values.
    pub fn around(template: ScenarioTemplate) -> ScenarioDistribution {
        let growth = template.scenario.demand.annual_growth;
        ScenarioDistribution {
            demand_growth: Triangular { min: growth - 0.05, mode: growth, max: growth + 0.10 },
            model_regimes: vec![(template.model_regime, 1.0)],
            hardware_regimes: vec![(template.hardware_regime, 1.0)],
            availability_delay_months: (6, 12),
            energy_tariff: (20.0, 40.0),
            price_jitter_fraction: 0.10,
            template,
        }
    }

    /// Every distribution collapsed onto the template's modes.
    pub fn degenerate(template: ScenarioTemplate) -> ScenarioDistribution {
        let growth = template.scenario.demand.annual_growth;
        let tariff = template.scenario.prices.energy_tariff_per_mwh;
        ScenarioDistribution {
            demand_growth: Triangular::point(growth),
            model_regimes: vec![(template.model_regime, 1.0)],
            hardware_regimes: vec![(template.hardware_regime, 1.0)],
            availability_delay_months: (
                crate::catalog::DEFAULT_SYNTHETIC_DELAY_MONTHS,
                crate::catalog::DEFAULT_SYNTHETIC_DELAY_MONTHS,
            ),
            energy_tariff: (tariff, tariff),
            price_jitter_fraction: 0.0,
            template,
        }
    }

    pub fn with_regime_cell(
        &self,
        model_regime: GrowthRegime,
        hardware_regime: GrowthRegime,
    ) -> ScenarioDistribution {
        ScenarioDistribution {
            model_regimes: vec![(model_regime, 1.0)],
            hardware_regimes: vec![(hardware_regime, 1.0)],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.demand_growth.min <= -1.0 {
            return Err(SearchError::Invalid("demand growth support must exceed -1".into()));
        }
        if !(self.energy_tariff.0 > 0.0) {
            return Err(SearchError::Invalid("energy tariff support must be positive".into()));
        }
        for (regimes, name) in
            [(&self.model_regimes, "model_regimes"), (&self.hardware_regimes, "hardware_regimes")]
        {
            if regimes.is_empty() {
                return Err(SearchError::Invalid(format!("{name} must be non-empty")));
            }
            let total: f64 = regimes.iter().map(|(_, w)| w).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(SearchError::Invalid(format!("{name} weights must sum to 1")));
            }
        }
        if !(0.0..1.0).contains(&self.price_jitter_fraction) {
            return Err(SearchError::Invalid("price_jitter_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One counter-split seed per trial, independent of the trial count.
pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    splitmix64(master_seed.wrapping_add(trial_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Draws one concrete scenario; a deterministic function of `(dist, seed)`.
pub fn sample_scenario(
    dist: &ScenarioDistribution,
    seed: u64,
) -> Result<Scenario, SearchError> {
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fixed draw order keeps the stream stable across code paths.
    let growth = dist.demand_growth.sample(&mut rng);
    let model_regime = *sample_weighted(&mut rng, &dist.model_regimes);
    let hardware_regime = *sample_weighted(&mut rng, &dist.hardware_regimes);
    let (dlo, dhi) = dist.availability_delay_months;
    let delay = if dhi <= dlo { dlo } else { rng.gen_range(dlo..=dhi) };
    let tariff = sample_uniform(&mut rng, dist.energy_tariff.0, dist.energy_tariff.1);
    let jitter = if dist.price_jitter_fraction == 0.0 {
        1.0
    } else {
        sample_uniform(
            &mut rng,
            1.0 - dist.price_jitter_fraction,
            1.0 + dist.price_jitter_fraction,
        )
    };

    let template = &dist.template;
    let mut scenario = template.scenario.clone();
    scenario.demand.annual_growth = growth;

    let horizon_end =
        scenario.start_month.plus_months(scenario.horizon_months as i32 - 1);
    scenario.models = project_model_roadmap(&template.model_seeds, horizon_end, &model_regime)?;
    let mut hardware = project_hardware_roadmap(
        &template.hardware_seeds,
        horizon_end,
        &hardware_regime,
        template.hardware_cost_regime.as_ref(),
    )?;
    for sku in hardware.iter_mut().skip(template.hardware_seeds.len()) {
        sku.availability_delay_months = delay;
    }
    scenario.hardware = hardware;

    scenario.prices = scenario.prices.scaled(jitter);
    scenario.prices.energy_tariff_per_mwh = tariff;
    Ok(scenario)
}

/// A complete cross-stage policy choice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyBundle {
    pub design: InfrastructureDesign,
    pub refresh: RefreshPolicy,
    pub op: OperationPolicy,
}

impl PolicyBundle {
    pub fn label(&self) -> String {
        let ops = self.op.enabled_flags();
        let ops = if ops.is_empty() { "none".to_string() } else { ops.join("+") };
        format!(
            "{}|life{}|{}",
            self.design.label(),
            self.refresh.default_lifetime_months,
            ops
        )
    }

    /// Tie-break key: simpler design, then longer lifetimes, then fewer
    /// enabled optimizations.
    fn tie_break_key(&self) -> (u32, i64, usize) {
        let design_complexity = match self.design.power.topology {
            PowerTopology::PerPdu => 0,
            PowerTopology::PerUdomain => 1,
            PowerTopology::PerDc => 2,
        } + match self.design.cooling.kind {
            CoolingKind::Air => 0,
            CoolingKind::Hybrid => 1,
            CoolingKind::Liquid => 2,
        } + match self.design.network.tier {
            NetworkTier::Ethernet => 0,
            NetworkTier::Infiniband => 1,
            NetworkTier::Hierarchical => 2,
            NetworkTier::Nvlink => 3,
        };
        let lifetime_sum: i64 = self.refresh.default_lifetime_months as i64
            + self.refresh.lifetime_months_by_generation.values().map(|&v| v as i64).sum::<i64>();
        (design_complexity, -lifetime_sum, self.op.enabled_flags().len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub lifetime_tco: Usd,
    pub exhausted: bool,
}

/// Lifetime-TCO distribution over Monte Carlo trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TcoDistribution {
    pub trials: u32,
    pub exhausted_trials: u32,
    pub mean: Usd,
    pub std_dev: Usd,
    pub p5: Usd,
    pub p25: Usd,
    pub p50: Usd,
    pub p75: Usd,
    pub p95: Usd,
    pub per_trial: Vec<TrialOutcome>,
}

impl TcoDistribution {
    fn from_trials(outcomes: Vec<TrialOutcome>) -> TcoDistribution {
        let mut completed: Vec<f64> = outcomes
            .iter()
            .filter(|o| !o.exhausted)
            .map(|o| o.lifetime_tco.cents() as f64)
            .collect();
        completed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let exhausted = outcomes.iter().filter(|o| o.exhausted).count() as u32;
        let n = completed.len() as f64;
        let (mean, std_dev) = if completed.is_empty() {
            (0.0, 0.0)
        } else {
            let mean = completed.iter().sum::<f64>() / n;
            let var = completed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let pct = |p: f64| -> Usd {
            if completed.is_empty() {
                return Usd::ZERO;
            }
            let pos = p / 100.0 * (n - 1.0);
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - pos.floor();
            Usd::from_cents((completed[lo] * (1.0 - frac) + completed[hi] * frac).round() as i64)
        };
        TcoDistribution {
            trials: outcomes.len() as u32,
            exhausted_trials: exhausted,
            mean: Usd::from_cents(mean.round() as i64),
            std_dev: Usd::from_cents(std_dev.round() as i64),
            p5: pct(5.0),
            p25: pct(25.0),
            p50: pct(50.0),
            p75: pct(75.0),
            p95: pct(95.0),
            per_trial: outcomes,
        }
    }

    pub fn objective(&self, objective: Objective) -> f64 {
        if self.exhausted_trials > 0 || self.trials == self.exhausted_trials {
            return f64::INFINITY;
        }
        match objective {
            Objective::Mean => self.mean.cents() as f64,
            Objective::P95 => self.p95.cents() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Mean,
    P95,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchError {
    Invalid(String),
    EmptySpace,
    BaselineNotInSpace,
    FactorialTooLarge { size: u128, cap: u128 },
    Catalog(crate::catalog::CatalogError),
    Lifecycle(LifecycleError),
}

impl std::fmt::Display for SearchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SearchError::Invalid(msg) => write!(f, "invalid distribution: {msg}"),
            SearchError::EmptySpace => write!(f, "policy space is empty"),
            SearchError::BaselineNotInSpace => {
                write!(f, "baseline bundle is not a member of the search space")
            }
            SearchError::FactorialTooLarge { size, cap } => {
                write!(f, "full-factorial space of {size} policies exceeds cap {cap}")
            }
            SearchError::Catalog(e) => write!(f, "roadmap projection: {e}"),
            SearchError::Lifecycle(e) => write!(f, "simulation: {e}"),
        }
    }
}

impl std::error::Error for SearchError {}

impl From<crate::catalog::CatalogError> for SearchError {
    fn from(e: crate::catalog::CatalogError) -> Self {
        SearchError::Catalog(e)
    }
}

impl From<LifecycleError> for SearchError {
    fn from(e: LifecycleError) -> Self {
        SearchError::Lifecycle(e)
    }
}

/// Runs `trials` independently seeded simulations of one policy bundle.
///
/// The result is independent of execution order; capacity-exhausted trials
/// are counted, never silently dropped.
pub fn monte_carlo(
    dist: &ScenarioDistribution,
    bundle: &PolicyBundle,
    trials: u32,
    master_seed: u64,
) -> Result<TcoDistribution, SearchError> {
    if trials < 1 {
        return Err(SearchError::Invalid("trials must be >= 1".into()));
    }
    dist.validate()?;
    let outcomes: Result<Vec<TrialOutcome>, SearchError> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut scenario = sample_scenario(dist, trial_seed(master_seed, i))?;
            scenario.design = bundle.design.clone();
            let result = simulate(&scenario, &bundle.refresh, &bundle.op)?;
            Ok(TrialOutcome {
                lifetime_tco: result.lifetime_tco,
                exhausted: !matches!(result.outcome, SimOutcome::Completed),
            })
        })
        .collect();
    Ok(TcoDistribution::from_trials(outcomes?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumerationMode {
    OneAtATime,
    FullFactorial { cap: u128 },
}

pub const DEFAULT_FACTORIAL_CAP: u128 = 1_000_000;

/// Refresh-policy enumeration per generation and lifetime grid.
///
/// One-at-a-time yields `generations x lifetimes` policies, each differing
/// from the baseline in exactly one generation; full-factorial is gated by a
/// size cap.
pub fn enumerate_refresh_policies(
    generations: &[String],
    lifetimes: &[u32],
    baseline: &RefreshPolicy,
    mode: EnumerationMode,
) -> Result<Vec<RefreshPolicy>, SearchError> {
    if generations.is_empty() || lifetimes.is_empty() {
        return Err(SearchError::EmptySpace);
    }
    match mode {
        EnumerationMode::OneAtATime => {
            let mut policies = Vec::with_capacity(generations.len() * lifetimes.len());
            for generation in generations {
                for &lifetime in lifetimes {
                    policies.push(baseline.with_generation(generation, lifetime));
                }
            }
            Ok(policies)
        }
        EnumerationMode::FullFactorial { cap } => {
            let size = (lifetimes.len() as u128)
                .checked_pow(generations.len() as u32)
                .unwrap_or(u128::MAX);
            if size > cap {
                return Err(SearchError::FactorialTooLarge { size, cap });
            }
            let mut policies = Vec::with_capacity(size as usize);
            let mut indices = vec![0usize; generations.len()];
            loop {
                let mut policy = baseline.clone();
                for (gi, &li) in indices.iter().enumerate() {
                    policy = policy.with_generation(&generations[gi], lifetimes[li]);
                }
                policies.push(policy);
                let mut pos = 0;
                loop {
                    if pos == generations.len() {
                        return Ok(policies);
                    }
                    indices[pos] += 1;
                    if indices[pos] < lifetimes.len() {
                        break;
                    }
                    indices[pos] = 0;
                    pos += 1;
                }
            }
        }
    }
}

/// The search space for [`optimize`]: the cross product of designs, refresh
/// policies, and operation policies. `greedy_operations` prunes the 2^8
/// operation subsets to a greedy improvement chain before the exact pass.
#[derive(Debug, Clone)]
pub struct PolicySpace {
    pub designs: Vec<InfrastructureDesign>,
    pub refreshes: Vec<RefreshPolicy>,
    pub ops: Vec<OperationPolicy>,
    pub greedy_operations: bool,
}

impl PolicySpace {
    /// Single-point space around a baseline bundle.
    pub fn baseline_only(bundle: &PolicyBundle) -> PolicySpace {
        PolicySpace {
            designs: vec![bundle.design.clone()],
            refreshes: vec![bundle.refresh.clone()],
            ops: vec![bundle.op.clone()],
            greedy_operations: false,
        }
    }

    /// All 3 x 3 x 4 build designs derived from a reference design's facility
    /// parameters.
    pub fn all_designs(reference: &InfrastructureDesign) -> Vec<InfrastructureDesign> {
        let mut designs = Vec::new();
        for power in PowerTopology::ALL {
            for cooling in CoolingKind::ALL {
                for network in NetworkTier::ALL {
                    designs.push(design_with(reference, power, cooling, network));
                }
            }
        }
        designs
    }
}

/// A preset-variant of `reference` with the given build choices, keeping the
/// facility-level parameters.
pub fn design_with(
    reference: &InfrastructureDesign,
    power: PowerTopology,
    cooling: CoolingKind,
    network: NetworkTier,
) -> InfrastructureDesign {
    InfrastructureDesign {
        power: PowerDesign::preset(power),
        cooling: CoolingDesign::preset(cooling),
        network: NetworkDesign::preset(network),
        ..reference.clone()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateResult {
    pub label: String,
    pub bundle: PolicyBundle,
    pub distribution: TcoDistribution,
    pub objective_value: f64,
    pub ratio_to_baseline: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeResult {
    pub best: PolicyBundle,
    pub best_distribution: TcoDistribution,
    pub baseline_distribution: TcoDistribution,
    pub baseline_ratio: f64,
    pub evaluations: Vec<CandidateResult>,
}

/// Exhaustive policy search with common random numbers; returns the argmin
/// of the objective plus every candidate's distribution.
pub fn optimize(
    dist: &ScenarioDistribution,
    space: &PolicySpace,
    baseline: &PolicyBundle,
    objective: Objective,
    trials_per_candidate: u32,
    master_seed: u64,
) -> Result<OptimizeResult, SearchError> {
    if space.designs.is_empty() || space.refreshes.is_empty() {
        return Err(SearchError::EmptySpace);
    }
    let baseline_in_space = space.designs.contains(&baseline.design)
        && space.refreshes.contains(&baseline.refresh)
        && (space.ops.contains(&baseline.op) || space.greedy_operations);
    if !baseline_in_space {
        return Err(SearchError::BaselineNotInSpace);
    }

    let baseline_dist = monte_carlo(dist, baseline, trials_per_candidate, master_seed)?;
    let baseline_obj = baseline_dist.objective(objective);

    // Greedy forward pass over operation flags (under the baseline design and
    // refresh) collects an improvement chain that prunes the 2^8 subsets.
    let mut op_candidates: Vec<OperationPolicy> = space.ops.clone();
    if space.greedy_operations {
        let mut current = baseline.op.clone();
        let mut current_obj = baseline_obj;
        if !op_candidates.contains(&current) {
            op_candidates.push(current.clone());
        }
        loop {
            let remaining: Vec<&str> = OPERATION_FLAG_NAMES
                .into_iter()
                .filter(|f| !current.flag(f))
                .collect();
            if remaining.is_empty() {
                break;
            }
            let evals: Vec<(usize, f64, OperationPolicy)> = remaining
                .par_iter()
                .enumerate()
                .map(|(i, flag)| {
                    let mut candidate = current.clone();
                    candidate.set_flag(flag, true);
                    let bundle = PolicyBundle {
                        design: baseline.design.clone(),
                        refresh: baseline.refresh.clone(),
                        op: candidate.clone(),
                    };
                    let obj = monte_carlo(dist, &bundle, trials_per_candidate, master_seed)
                        .map(|d| d.objective(objective))
                        .unwrap_or(f64::INFINITY);
                    (i, obj, candidate)
                })
                .collect();
            let best = evals
                .into_iter()
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            match best {
                Some((_, obj, candidate)) if obj < current_obj => {
                    current = candidate;
                    current_obj = obj;
                    op_candidates.push(current.clone());
                }
                _ => break,
            }
        }
    }
    if op_candidates.is_empty() {
        return Err(SearchError::EmptySpace);
    }

    // Exact pass over the pruned cross product.
    let mut candidates: Vec<PolicyBundle> = Vec::new();
    for design in &space.designs {
        for refresh in &space.refreshes {
            for op in &op_candidates {
                candidates.push(PolicyBundle {
                    design: design.clone(),
                    refresh: refresh.clone(),
                    op: op.clone(),
                });
            }
        }
    }

    let evaluations: Result<Vec<CandidateResult>, SearchError> = candidates
        .par_iter()
        .map(|bundle| {
            let distribution = monte_carlo(dist, bundle, trials_per_candidate, master_seed)?;
            let objective_value = distribution.objective(objective);
            Ok(CandidateResult {
                label: bundle.label(),
                bundle: bundle.clone(),
                distribution,
                objective_value,
                ratio_to_baseline: objective_value / baseline_obj,
            })
        })
        .collect();
    let evaluations = evaluations?;

    let best = evaluations
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.objective_value
                .partial_cmp(&b.objective_value)
                .unwrap()
                .then_with(|| a.bundle.tie_break_key().cmp(&b.bundle.tie_break_key()))
                .then(ia.cmp(ib))
        })
        .map(|(_, c)| c)
        .ok_or(SearchError::EmptySpace)?;

    Ok(OptimizeResult {
        best: best.bundle.clone(),
        best_distribution: best.distribution.clone(),
        baseline_distribution: baseline_dist,
        baseline_ratio: best.objective_value / baseline_obj,
        evaluations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeCell {
    pub model_growth: GrowthShape,
    pub hardware_growth: GrowthShape,
    pub best: PolicyBundle,
    pub baseline_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeMatrix {
    pub cells: Vec<RegimeCell>,
}

/// Optimal cross-stage strategy per (model growth x hardware growth) cell.
pub fn regime_matrix(
    dist: &ScenarioDistribution,
    space: &PolicySpace,
    baseline: &PolicyBundle,
    objective: Objective,
    trials_per_candidate: u32,
    master_seed: u64,
) -> Result<RegimeMatrix, SearchError> {
    let shapes =
        [GrowthShape::SlowSublinear, GrowthShape::MediumLinear, GrowthShape::FastExponential];
    let mut cells = Vec::with_capacity(9);
    for model_shape in shapes {
        for hardware_shape in shapes {
            let cell_dist = dist.with_regime_cell(
                canonical_model_regime(model_shape),
                canonical_hardware_regime(hardware_shape),
            );
            let result = optimize(
                &cell_dist,
                space,
                baseline,
                objective,
                trials_per_candidate,
                master_seed,
            )?;
            cells.push(RegimeCell {
                model_growth: model_shape,
                hardware_growth: hardware_shape,
                best: result.best,
                baseline_ratio: result.baseline_ratio,
            });
        }
    }
    Ok(RegimeMatrix { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{small_scenario, small_template};

    fn baseline_bundle() -> PolicyBundle {
        let scenario = small_scenario();
        PolicyBundle {
            design: scenario.design.clone(),
            refresh: RefreshPolicy::default(),
            op: OperationPolicy::default(),
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let dist = ScenarioDistribution::around(small_template());
        let a = sample_scenario(&dist, 7).unwrap();
        let b = sample_scenario(&dist, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_scenario(&dist, 8).unwrap();
        assert_ne!(a.demand.annual_growth, c.demand.annual_growth);
    }

    #[test]
    fn zero_width_distributions_return_modes() {
        let template = small_template();
        let dist = ScenarioDistribution::degenerate(template.clone());
        let sampled = sample_scenario(&dist, 1234).unwrap();
        assert_eq!(sampled, template.scenario);
    }

    #[test]
    fn sampled_growth_mean_matches_distribution() {
        let dist = ScenarioDistribution::around(small_template());
        let n = 10_000u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for seed in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(99, seed));
            let g = dist.demand_growth.sample(&mut rng);
            sum += g;
            sum_sq += g * g;
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        let se = std / (n as f64).sqrt();
        let expected = dist.demand_growth.mean();
        assert!(
            (mean - expected).abs() < 3.0 * se + 1e-12,
            "mean {mean} vs expected {expected} (se {se})"
        );
    }

    #[test]
    fn single_trial_collapses_distribution() {
        let dist = ScenarioDistribution::degenerate(small_template());
        let result = monte_carlo(&dist, &baseline_bundle(), 1, 42).unwrap();
        assert_eq!(result.trials, 1);
        assert_eq!(result.mean, result.p50);
        assert_eq!(result.p5, result.p95);
        assert_eq!(result.std_dev, Usd::ZERO);
    }

    #[test]
    fn doubling_trials_preserves_prefix() {
        let dist = ScenarioDistribution::around(small_template());
        let bundle = baseline_bundle();
        let short = monte_carlo(&dist, &bundle, 8, 42).unwrap();
        let long = monte_carlo(&dist, &bundle, 16, 42).unwrap();
        assert_eq!(short.per_trial[..], long.per_trial[..8]);
    }

    #[test]
    fn common_random_numbers_across_candidates() {
        let dist = ScenarioDistribution::around(small_template());
        for trial in 0..4 {
            let seed = trial_seed(7, trial);
            let a = sample_scenario(&dist, seed).unwrap();
            let b = sample_scenario(&dist, seed).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn standard_error_shrinks_with_sqrt_trials() {
        // Batch 10,000 per-trial draws into 100 groups of 100: the std of the
        // batch means must be close to std/10.
        let dist = ScenarioDistribution::around(small_template());
        let draws: Vec<f64> = (0..10_000u64)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(5, i));
                dist.demand_growth.sample(&mut rng)
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let std =
            (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        let batch_means: Vec<f64> =
            draws.chunks(100).map(|c| c.iter().sum::<f64>() / 100.0).collect();
        let bm_mean = batch_means.iter().sum::<f64>() / batch_means.len() as f64;
        let bm_std = (batch_means.iter().map(|v| (v - bm_mean).powi(2)).sum::<f64>()
            / batch_means.len() as f64)
            .sqrt();
        let expected = std / 10.0;
        assert!(
            (bm_std - expected).abs() / expected < 0.35,
            "batch-mean std {bm_std} vs {expected}"
        );
    }

    #[test]
    fn one_at_a_time_counts() {
        let generations: Vec<String> = (0..10).map(|i| format!("g{i}")).collect();
        let lifetimes: Vec<u32> = (0..=10).map(|i| i * 12).collect();
        let baseline = RefreshPolicy::default();
        let policies = enumerate_refresh_policies(
            &generations,
            &lifetimes,
            &baseline,
            EnumerationMode::OneAtATime,
        )
        .unwrap();
        assert_eq!(policies.len(), 110);
        for policy in &policies {
            let diffs = policy
                .lifetime_months_by_generation
                .iter()
                .filter(|(_, &v)| v != baseline.default_lifetime_months)
                .count();
            assert!(diffs <= 1);
            // Skip set matches the lifetime-0 entries.
            for (id, &v) in &policy.lifetime_months_by_generation {
                assert_eq!(policy.is_skipped(id), v == 0);
            }
        }
    }

    #[test]
    fn degenerate_lifetimes_reproduce_baseline() {
        let generations = vec!["a".to_string(), "b".to_string()];
        let baseline = RefreshPolicy::default();
        let policies = enumerate_refresh_policies(
            &generations,
            &[60],
            &baseline,
            EnumerationMode::OneAtATime,
        )
        .unwrap();
        for policy in policies {
            for generation in &generations {
                assert_eq!(policy.lifetime_months(generation), 60);
            }
        }
    }

    #[test]
    fn factorial_cap_refused() {
        let generations: Vec<String> = (0..12).map(|i| format!("g{i}")).collect();
        let lifetimes: Vec<u32> = (0..=10).map(|i| i * 12).collect();
        let err = enumerate_refresh_policies(
            &generations,
            &lifetimes,
            &RefreshPolicy::default(),
            EnumerationMode::FullFactorial { cap: DEFAULT_FACTORIAL_CAP },
        );
        assert!(matches!(err, Err(SearchError::FactorialTooLarge { .. })));

        let small = enumerate_refresh_policies(
            &generations[..2],
            &[0, 60],
            &RefreshPolicy::default(),
            EnumerationMode::FullFactorial { cap: DEFAULT_FACTORIAL_CAP },
        )
        .unwrap();
        assert_eq!(small.len(), 4);
    }

    #[test]
    fn baseline_only_space_returns_ratio_one() {
        let dist = ScenarioDistribution::degenerate(small_template());
        let baseline = baseline_bundle();
        let space = PolicySpace::baseline_only(&baseline);
        let result = optimize(&dist, &space, &baseline, Objective::Mean, 2, 11).unwrap();
        assert_eq!(result.best, baseline);
        assert!((result.baseline_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_must_be_in_space() {
        let dist = ScenarioDistribution::degenerate(small_template());
        let baseline = baseline_bundle();
        let mut space = PolicySpace::baseline_only(&baseline);
        space.refreshes = vec![RefreshPolicy {
            default_lifetime_months: 48,
            ..RefreshPolicy::default()
        }];
        assert!(matches!(
            optimize(&dist, &space, &baseline, Objective::Mean, 2, 11),
            Err(SearchError::BaselineNotInSpace)
        ));
    }

    #[test]
    fn superset_argmin_never_worse() {
        let dist = ScenarioDistribution::degenerate(small_template());
        let baseline = baseline_bundle();
        let narrow = PolicySpace {
            designs: vec![baseline.design.clone()],
            refreshes: vec![
                baseline.refresh.clone(),
                RefreshPolicy { default_lifetime_months: 96, ..RefreshPolicy::default() },
            ],
            ops: vec![baseline.op.clone()],
            greedy_operations: false,
        };
        let wide = PolicySpace {
            designs: vec![
                baseline.design.clone(),
                design_with(
                    &baseline.design,
                    PowerTopology::PerDc,
                    CoolingKind::Hybrid,
                    NetworkTier::Hierarchical,
                ),
            ],
            refreshes: narrow.refreshes.clone(),
            ops: vec![baseline.op.clone(), OperationPolicy::all_enabled()],
            greedy_operations: false,
        };
        let a = optimize(&dist, &narrow, &baseline, Objective::Mean, 2, 3).unwrap();
        let b = optimize(&dist, &wide, &baseline, Objective::Mean, 2, 3).unwrap();
        assert!(b.baseline_ratio <= a.baseline_ratio + 1e-12);
        assert!(a.baseline_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn matrix_cells_deterministic() {
        let dist = ScenarioDistribution::degenerate(small_template());
        let baseline = baseline_bundle();
        let space = PolicySpace {
            designs: vec![baseline.design.clone()],
            refreshes: vec![baseline.refresh.clone()],
            ops: vec![baseline.op.clone()],
            greedy_operations: false,
        };
        let a = regime_matrix(&dist, &space, &baseline, Objective::Mean, 1, 5).unwrap();
        let b = regime_matrix(&dist, &space, &baseline, Objective::Mean, 1, 5).unwrap();
        assert_eq!(a.cells.len(), 9);
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.best, y.best);
            assert_eq!(x.baseline_ratio, y.baseline_ratio);
        }
    }

    #[test]
    fn percentiles_are_monotone() {
        let dist = ScenarioDistribution::around(small_template());
        let result = monte_carlo(&dist, &baseline_bundle(), 16, 21).unwrap();
        assert!(result.p5 <= result.p25);
        assert!(result.p25 <= result.p50);
        assert!(result.p50 <= result.p75);
        assert!(result.p75 <= result.p95);
        assert!(result.mean.cents() > 0);
    }
}
