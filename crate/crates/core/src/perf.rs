//! Roofline performance model for LLM inference.
//!
//! Compute/byte requirements are derived analytically from the model
//! architecture; latency is the max of the compute-bound and bandwidth-bound
//! times, inflated by a queueing term `1/(1 - load/ceiling)` that is 1 at zero
//! load and diverges at the serving ceiling. Goodput is the largest request
//! rate meeting both SLO bounds, found by binary search on a 0.1-RPS grid.
//!
//! A server runs `accelerators / tensor_parallel` independent replicas; load is
//! expressed per server and spread evenly across replicas.

use serde::{Deserialize, Serialize};

use crate::catalog::{Architecture, HardwareSku, ModelSpec, SkuKind};

/// Tensor-parallel degrees considered when placing a model on a SKU.
pub const TP_CHOICES: [u32; 4] = [1, 2, 4, 8];

/// Goodput search resolution: one grid step = 0.1 requests/s.
pub const DECI_RPS: f64 = 0.1;

/// Fixed-state width used for ssm models: state bytes per layer equal
/// `hidden_dim * SSM_STATE_WIDTH * bytes_per_param`.
pub const SSM_STATE_WIDTH: f64 = 32.0;

/// Server-cost amortization horizon used for the per-dollar efficiency metric.
pub const EFFICIENCY_AMORT_YEARS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadShape {
    pub seq_len_prompt: u32,
    pub seq_len_decode: u32,
    pub batch_size: u32,
}

impl WorkloadShape {
    pub fn validate(&self) -> Result<(), PerfError> {
        if self.seq_len_prompt < 1 || self.batch_size < 1 {
            return Err(PerfError::InvalidShape(*self));
        }
        Ok(())
    }

    /// Full context length a decode step attends over.
    pub fn context_len(&self) -> f64 {
        f64::from(self.seq_len_prompt + self.seq_len_decode)
    }
}

/// Per-step compute and byte requirements of one (model, workload) pair.
///
/// `prefill_flops` and the decode terms are whole-batch quantities; time to
/// first token for a single request uses the per-request share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequirementProfile {
    /// FLOPs for one prefill step over the whole batch.
    pub prefill_flops: f64,
    /// FLOPs for one decode step over the whole batch.
    pub decode_flops_per_token: f64,
    /// Weight bytes read per step (total parameters for moe: at serving batch
    /// sizes every expert is touched each step).
    pub weight_read_bytes_per_step: f64,
    /// KV-cache (or ssm state) bytes read per decode step over the whole batch.
    pub kv_read_bytes_per_step: f64,
    /// Resident weight bytes.
    pub weight_footprint: f64,
    /// KV bytes per in-flight request (fixed state size for ssm).
    pub kv_footprint_per_request: f64,
    pub shape: WorkloadShape,
}

impl RequirementProfile {
    /// Bytes moved per decode step: weight read plus KV traffic.
    pub fn decode_bytes_per_token(&self) -> f64 {
        self.weight_read_bytes_per_step + self.kv_read_bytes_per_step
    }

    /// Bytes moved per prefill step: one full weight read per batch.
    pub fn prefill_bytes(&self) -> f64 {
        self.weight_footprint
    }

    /// Applies multiplicative operation-policy factors.
    pub fn scaled(&self, m: &RequirementModifier) -> RequirementProfile {
        RequirementProfile {
            prefill_flops: self.prefill_flops * m.flops_factor,
            decode_flops_per_token: self.decode_flops_per_token * m.flops_factor,
            weight_read_bytes_per_step: self.weight_read_bytes_per_step * m.weight_bytes_factor,
            kv_read_bytes_per_step: self.kv_read_bytes_per_step * m.kv_bytes_factor,
            weight_footprint: self.weight_footprint * m.weight_bytes_factor,
            kv_footprint_per_request: self.kv_footprint_per_request * m.kv_bytes_factor,
            shape: self.shape,
        }
    }
}

/// Multiplicative requirement factors; identity when every factor is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequirementModifier {
    pub flops_factor: f64,
    pub weight_bytes_factor: f64,
    pub kv_bytes_factor: f64,
}

impl RequirementModifier {
    pub const IDENTITY: RequirementModifier =
        RequirementModifier { flops_factor: 1.0, weight_bytes_factor: 1.0, kv_bytes_factor: 1.0 };

    pub fn compose(&self, other: &RequirementModifier) -> RequirementModifier {
        RequirementModifier {
            flops_factor: self.flops_factor * other.flops_factor,
            weight_bytes_factor: self.weight_bytes_factor * other.weight_bytes_factor,
            kv_bytes_factor: self.kv_bytes_factor * other.kv_bytes_factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    pub ttft_ms: f64,
    pub tbt_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SloSpec {
    pub ttft_ms_max: f64,
    pub tbt_ms_max: f64,
}

impl Default for SloSpec {
    fn default() -> Self {
        SloSpec { ttft_ms_max: 400.0, tbt_ms_max: 100.0 }
    }
}

impl SloSpec {
    pub fn validate(&self) -> Result<(), PerfError> {
        if !(self.ttft_ms_max > 0.0) || !(self.tbt_ms_max > 0.0) {
            return Err(PerfError::InvalidSlo);
        }
        Ok(())
    }

    pub fn admits(&self, lat: &LatencyEstimate) -> bool {
        lat.ttft_ms <= self.ttft_ms_max && lat.tbt_ms <= self.tbt_ms_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyMetrics {
    pub goodput_rps: f64,
    pub goodput_per_watt: f64,
    pub goodput_per_watt_per_dollar: f64,
    /// Tensor parallelism the metrics were computed at.
    pub tensor_parallel: u32,
}

/// Fraction-of-peak factors and placement constants, jointly calibrated
/// against the published H200 latency anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerfCalibration {
    pub gpu_compute_efficiency: f64,
    pub gpu_bandwidth_efficiency: f64,
    pub cpu_compute_efficiency: f64,
    pub cpu_bandwidth_efficiency: f64,
    /// Tensor-parallel scaling penalty coefficient `c` in `1 - c*log2(tp)`.
    pub tp_penalty_per_doubling: f64,
    /// Fraction of accelerator memory usable for weights + KV.
    pub mem_util_fraction: f64,
}

impl Default for PerfCalibration {
    fn default() -> Self {
        PerfCalibration {
            gpu_compute_efficiency: 0.906,
            gpu_bandwidth_efficiency: 0.638,
            cpu_compute_efficiency: 0.35,
            cpu_bandwidth_efficiency: 0.35,
            tp_penalty_per_doubling: 0.05,
            mem_util_fraction: 0.85,
        }
    }
}

/// Infrastructure-dependent performance context: the network tier's efficiency
/// class and the cooling design's thermal envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfEnv {
    pub network_efficiency: f64,
    /// Per-server watts the cooling design removes at full performance; servers
    /// above it derate superlinearly.
    pub thermal_cap_watts: Option<f64>,
    pub thermal_derate_exponent: f64,
}

impl Default for PerfEnv {
    fn default() -> Self {
        PerfEnv { network_efficiency: 1.0, thermal_cap_watts: None, thermal_derate_exponent: 1.5 }
    }
}

impl PerfEnv {
    pub fn thermal_factor(&self, tdp_watts: f64) -> f64 {
        match self.thermal_cap_watts {
            Some(cap) if tdp_watts > cap => (cap / tdp_watts).powf(self.thermal_derate_exponent),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerfError {
    InvalidShape(WorkloadShape),
    InvalidSlo,
    /// Weights plus batch KV exceed the usable aggregate memory at this TP.
    ModelDoesNotFit { needed_bytes: f64, usable_bytes: f64 },
    /// Offered load is at or beyond the serving ceiling: SLO-infeasible.
    Saturated { ceiling_rps: f64 },
    /// No tensor-parallel degree fits the model on this SKU.
    ModelUnservable { model: String, sku: String },
    /// Positive demand cannot be served because goodput under the SLO is zero.
    InfeasibleDemand { demand_rps: f64 },
}

impl std::fmt::Display for PerfError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PerfError::InvalidShape(s) => write!(
                f,
                "invalid workload shape (prompt {}, decode {}, batch {})",
                s.seq_len_prompt, s.seq_len_decode, s.batch_size
            ),
            PerfError::InvalidSlo => write!(f, "SLO bounds must be positive"),
            PerfError::ModelDoesNotFit { needed_bytes, usable_bytes } => write!(
                f,
                "model does not fit: needs {needed_bytes:.3e} bytes, usable {usable_bytes:.3e}"
            ),
            PerfError::Saturated { ceiling_rps } => {
                write!(f, "load at or beyond serving ceiling of {ceiling_rps:.1} rps")
            }
            PerfError::ModelUnservable { model, sku } => {
                write!(f, "model {model} unservable on sku {sku} at any tensor parallelism")
            }
            PerfError::InfeasibleDemand { demand_rps } => {
                write!(f, "demand of {demand_rps:.1} rps infeasible: goodput under SLO is zero")
            }
        }
    }
}

impl std::error::Error for PerfError {}

/// Derives per-step FLOP and byte requirements from the model architecture.
///
/// Prefill FLOPs follow the `2 * active_params * tokens` rule per token of
/// prompt across the batch. MoE models compute with active parameters but hold
/// (and, at serving batch sizes, read) all parameters. For ssm models the KV
/// terms are replaced by a fixed-size recurrent state.
pub fn model_requirements(
    model: &ModelSpec,
    shape: &WorkloadShape,
) -> Result<RequirementProfile, PerfError> {
    shape.validate()?;
    let batch = f64::from(shape.batch_size);
    let prompt = f64::from(shape.seq_len_prompt);
    let weight_footprint = model.total_params * model.bytes_per_param;
    let weight_read = match model.architecture {
        // All experts are touched every step once the batch exceeds the expert
        // count, so reads cover total parameters.
        Architecture::Moe => model.total_params * model.bytes_per_param,
        _ => model.active_params * model.bytes_per_param,
    };
    let kv_per_request = match model.architecture {
        Architecture::Ssm => {
            f64::from(model.layers) * f64::from(model.hidden_dim) * SSM_STATE_WIDTH * model.bytes_per_param
        }
        _ => model.kv_bytes_per_token * shape.context_len(),
    };
    Ok(RequirementProfile {
        prefill_flops: 2.0 * model.active_params * prompt * batch,
        decode_flops_per_token: 2.0 * model.active_params * batch,
        weight_read_bytes_per_step: weight_read,
        kv_read_bytes_per_step: kv_per_request * batch,
        weight_footprint,
        kv_footprint_per_request: kv_per_request,
        shape: *shape,
    })
}

/// Effective per-replica throughput rates for one SKU at one TP degree.
#[derive(Debug, Clone, Copy)]
pub struct ReplicaRates {
    pub flops_per_s: f64,
    pub bytes_per_s: f64,
    pub replicas: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct GoodputDetail {
    /// Per-server goodput on the 0.1-RPS grid.
    pub goodput_deci_rps: u64,
    pub tensor_parallel: u32,
    pub replicas: u32,
}

impl GoodputDetail {
    pub fn goodput_rps(&self) -> f64 {
        self.goodput_deci_rps as f64 * DECI_RPS
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PerfModel {
    pub calib: PerfCalibration,
    pub env: PerfEnv,
}

impl PerfModel {
    pub fn new(calib: PerfCalibration, env: PerfEnv) -> Self {
        PerfModel { calib, env }
    }

    fn efficiencies(&self, kind: SkuKind) -> (f64, f64) {
        match kind {
            SkuKind::GpuServer => {
                (self.calib.gpu_compute_efficiency, self.calib.gpu_bandwidth_efficiency)
            }
            SkuKind::CpuServer => {
                (self.calib.cpu_compute_efficiency, self.calib.cpu_bandwidth_efficiency)
            }
        }
    }

    fn tp_penalty(&self, tp: u32) -> f64 {
        (1.0 - self.calib.tp_penalty_per_doubling * f64::from(tp).log2()).max(0.05)
    }

    /// Effective FLOP/s and bytes/s of one TP-`tp` replica on `sku`.
    pub fn replica_rates(&self, sku: &HardwareSku, tp: u32) -> ReplicaRates {
        let (eff_c, eff_b) = self.efficiencies(sku.kind);
        let accels = f64::from(sku.accelerators_per_server);
        let share = f64::from(tp) / accels;
        let penalty = self.tp_penalty(tp);
        let common = self.env.network_efficiency * self.env.thermal_factor(sku.tdp_server_watts);
        ReplicaRates {
            flops_per_s: sku.peak_flops * share * eff_c * penalty * common,
            bytes_per_s: sku.mem_bandwidth * share * eff_b * penalty * common,
            replicas: (sku.accelerators_per_server / tp).max(1),
        }
    }

    fn usable_bytes(&self, sku: &HardwareSku, tp: u32) -> f64 {
        sku.mem_capacity * f64::from(tp) / f64::from(sku.accelerators_per_server)
            * self.calib.mem_util_fraction
    }

    fn resident_bytes(req: &RequirementProfile) -> f64 {
        req.weight_footprint + req.kv_footprint_per_request * f64::from(req.shape.batch_size)
    }

    /// Smallest TP degree whose usable memory holds weights plus batch KV.
    pub fn select_tensor_parallel(
        &self,
        req: &RequirementProfile,
        sku: &HardwareSku,
    ) -> Option<u32> {
        TP_CHOICES
            .into_iter()
            .filter(|&tp| tp <= sku.accelerators_per_server)
            .find(|&tp| Self::resident_bytes(req) <= self.usable_bytes(sku, tp))
    }

    fn check_fit(&self, req: &RequirementProfile, sku: &HardwareSku, tp: u32) -> Result<(), PerfError> {
        let needed = Self::resident_bytes(req);
        let usable = self.usable_bytes(sku, tp);
        if needed > usable {
            return Err(PerfError::ModelDoesNotFit { needed_bytes: needed, usable_bytes: usable });
        }
        Ok(())
    }

    /// Per-server serving ceiling in requests/s: the work-conservation bound
    /// over both resources, with the batch amortizing weight reads.
    pub fn serving_ceiling_rps(&self, req: &RequirementProfile, sku: &HardwareSku, tp: u32) -> f64 {
        let rates = self.replica_rates(sku, tp);
        let batch = f64::from(req.shape.batch_size);
        let decode_len = f64::from(req.shape.seq_len_decode);
        let flops_per_batch = req.prefill_flops + decode_len * req.decode_flops_per_token;
        let bytes_per_batch = req.prefill_bytes() + decode_len * req.decode_bytes_per_token();
        let per_replica = (rates.flops_per_s * batch / flops_per_batch)
            .min(rates.bytes_per_s * batch / bytes_per_batch);
        per_replica * f64::from(rates.replicas)
    }

    /// Roofline latencies at a given server-level load.
    ///
    /// TTFT covers one request's prompt; TBT is the decode step time. Both are
    /// inflated by `1/(1 - load/ceiling)`; at or past the ceiling the request
    /// load is SLO-infeasible and a [`PerfError::Saturated`] marker is returned.
    pub fn roofline_latency(
        &self,
        req: &RequirementProfile,
        sku: &HardwareSku,
        tensor_parallel: u32,
        load_rps: f64,
    ) -> Result<LatencyEstimate, PerfError> {
        assert!(load_rps >= 0.0, "load must be non-negative");
        self.check_fit(req, sku, tensor_parallel)?;
        let rates = self.replica_rates(sku, tensor_parallel);
        let batch = f64::from(req.shape.batch_size);

        let ttft_s = (req.prefill_flops / batch / rates.flops_per_s)
            .max(req.prefill_bytes() / batch / rates.bytes_per_s);
        let tbt_s = (req.decode_flops_per_token / rates.flops_per_s)
            .max(req.decode_bytes_per_token() / rates.bytes_per_s);

        let inflation = if load_rps == 0.0 {
            1.0
        } else {
            let ceiling = self.serving_ceiling_rps(req, sku, tensor_parallel);
            if load_rps >= ceiling {
                return Err(PerfError::Saturated { ceiling_rps: ceiling });
            }
            1.0 / (1.0 - load_rps / ceiling)
        };
        Ok(LatencyEstimate { ttft_ms: ttft_s * 1e3 * inflation, tbt_ms: tbt_s * 1e3 * inflation })
    }

    fn grid_feasible(
        &self,
        req: &RequirementProfile,
        sku: &HardwareSku,
        tp: u32,
        slo: &SloSpec,
        deci_rps: u64,
    ) -> bool {
        match self.roofline_latency(req, sku, tp, deci_rps as f64 * DECI_RPS) {
            Ok(lat) => slo.admits(&lat),
            Err(_) => false,
        }
    }

    /// Largest SLO-feasible per-server load on the 0.1-RPS grid, with the
    /// smallest fitting TP. Equals an exhaustive linear scan by monotonicity
    /// of latency in load.
    pub fn goodput_detail(
        &self,
        req: &RequirementProfile,
        sku: &HardwareSku,
        slo: &SloSpec,
    ) -> Result<GoodputDetail, PerfError> {
        slo.validate()?;
        let tp = self.select_tensor_parallel(req, sku).ok_or_else(|| {
            PerfError::ModelUnservable { model: String::new(), sku: sku.id.clone() }
        })?;
        let replicas = sku.accelerators_per_server / tp;
        if !self.grid_feasible(req, sku, tp, slo, 0) {
            return Ok(GoodputDetail { goodput_deci_rps: 0, tensor_parallel: tp, replicas });
        }
        // Exponential bracket then bisection over the feasibility boundary.
        let mut lo = 0u64;
        let mut hi = 1u64;
        while self.grid_feasible(req, sku, tp, slo, hi) {
            lo = hi;
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.grid_feasible(req, sku, tp, slo, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(GoodputDetail { goodput_deci_rps: lo, tensor_parallel: tp, replicas })
    }

    /// Maximum request rate meeting both SLO bounds, with efficiency ratios
    /// against TDP and amortized server cost.
    pub fn max_goodput(
        &self,
        model: &ModelSpec,
        shape: &WorkloadShape,
        sku: &HardwareSku,
        slo: &SloSpec,
    ) -> Result<EfficiencyMetrics, PerfError> {
        let req = model_requirements(model, shape)?;
        let detail = self.goodput_detail(&req, sku, slo).map_err(|e| match e {
            PerfError::ModelUnservable { sku, .. } => {
                PerfError::ModelUnservable { model: model.id.clone(), sku }
            }
            other => other,
        })?;
        Ok(self.efficiency_metrics(&detail, sku))
    }

    pub fn efficiency_metrics(&self, detail: &GoodputDetail, sku: &HardwareSku) -> EfficiencyMetrics {
        let goodput = detail.goodput_rps();
        let per_watt = goodput / sku.tdp_server_watts;
        let amortized_cost = sku.server_cost_usd / EFFICIENCY_AMORT_YEARS;
        EfficiencyMetrics {
            goodput_rps: goodput,
            goodput_per_watt: per_watt,
            goodput_per_watt_per_dollar: per_watt / amortized_cost,
            tensor_parallel: detail.tensor_parallel,
        }
    }

    /// Prefill-only goodput (disaggregated serving): the TTFT bound alone.
    pub fn goodput_prefill_only(
        &self,
        req: &RequirementProfile,
        sku: &HardwareSku,
        slo: &SloSpec,
    ) -> Result<f64, PerfError> {
        let tp = match self.select_tensor_parallel(req, sku) {
            Some(tp) => tp,
            None => return Ok(0.0),
        };
        let rates = self.replica_rates(sku, tp);
        let batch = f64::from(req.shape.batch_size);
        let ttft_s = (req.prefill_flops / batch / rates.flops_per_s)
            .max(req.prefill_bytes() / batch / rates.bytes_per_s);
        let slack = 1.0 - ttft_s * 1e3 / slo.ttft_ms_max;
        if slack <= 0.0 {
            return Ok(0.0);
        }
        let ceiling = (rates.flops_per_s * batch / req.prefill_flops)
            .min(rates.bytes_per_s * batch / req.prefill_bytes())
            * f64::from(rates.replicas);
        Ok(ceiling * slack)
    }

    /// Decode-only goodput (disaggregated serving): the TBT bound alone.
    pub fn goodput_decode_only(
        &self,
        req: &RequirementProfile,
        sku: &HardwareSku,
        slo: &SloSpec,
    ) -> Result<f64, PerfError> {
        let tp = match self.select_tensor_parallel(req, sku) {
            Some(tp) => tp,
            None => return Ok(0.0),
        };
        let decode_len = f64::from(req.shape.seq_len_decode);
        if decode_len == 0.0 {
            return Ok(f64::INFINITY);
        }
        let rates = self.replica_rates(sku, tp);
        let batch = f64::from(req.shape.batch_size);
        let tbt_s = (req.decode_flops_per_token / rates.flops_per_s)
            .max(req.decode_bytes_per_token() / rates.bytes_per_s);
        let slack = 1.0 - tbt_s * 1e3 / slo.tbt_ms_max;
        if slack <= 0.0 {
            return Ok(0.0);
        }
        let ceiling = (rates.flops_per_s * batch / (decode_len * req.decode_flops_per_token))
            .min(rates.bytes_per_s * batch / (decode_len * req.decode_bytes_per_token()))
            * f64::from(rates.replicas);
        Ok(ceiling * slack)
    }

    /// Minimal servers covering `demand_rps`, and the resulting utilization.
    pub fn provision(
        &self,
        demand_rps: f64,
        model: &ModelSpec,
        shape: &WorkloadShape,
        sku: &HardwareSku,
        slo: &SloSpec,
    ) -> Result<(u64, f64), PerfError> {
        assert!(demand_rps >= 0.0);
        let metrics = self.max_goodput(model, shape, sku, slo)?;
        if demand_rps == 0.0 {
            return Ok((0, 0.0));
        }
        if metrics.goodput_rps == 0.0 {
            return Err(PerfError::InfeasibleDemand { demand_rps });
        }
        let servers = (demand_rps / metrics.goodput_rps).ceil() as u64;
        let utilization = demand_rps / (servers as f64 * metrics.goodput_rps);
        Ok((servers, utilization))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{InterconnectClass, ModelSpec, SkuKind};
    use crate::time::Month;

    fn dense_model(id: &str, params: f64) -> ModelSpec {
        ModelSpec {
            id: id.into(),
            release_month: Month::new(2024, 4),
            total_params: params,
            active_params: params,
            architecture: Architecture::DenseTransformer,
            layers: 80,
            hidden_dim: 8192,
            bytes_per_param: 2.0,
            kv_bytes_per_token: 327_680.0,
        }
    }

    fn h200() -> HardwareSku {
        HardwareSku {
            id: "h200".into(),
            kind: SkuKind::GpuServer,
            release_month: Month::new(2023, 11),
            availability_delay_months: 9,
            peak_flops: 7.916e15,
            mem_bandwidth: 38.4e12,
            mem_capacity: 1128e9,
            tdp_server_watts: 10_200.0,
            accelerators_per_server: 8,
            server_cost_usd: 375_000.0,
            interconnect_class: InterconnectClass::Nvlink,
        }
    }

    fn shape_2k() -> WorkloadShape {
        WorkloadShape { seq_len_prompt: 2048, seq_len_decode: 512, batch_size: 8 }
    }

    #[test]
    fn prefill_flops_match_counting_rule() {
        // 2 * 70e9 * 2048 * 8 = 2.29e15 for a 70B dense model.
        let req = model_requirements(&dense_model("llama70b", 70e9), &shape_2k()).unwrap();
        let expected = 2.0 * 70e9 * 2048.0 * 8.0;
        assert!((req.prefill_flops - expected).abs() / expected < 1e-12);
        assert!((req.prefill_flops - 2.29e15).abs() / 2.29e15 < 0.01);
        assert_eq!(req.weight_footprint, 140e9);
    }

    #[test]
    fn batch_zero_rejected_and_decode_zero_allowed() {
        let model = dense_model("m", 70e9);
        let bad = WorkloadShape { seq_len_prompt: 2048, seq_len_decode: 256, batch_size: 0 };
        assert!(matches!(model_requirements(&model, &bad), Err(PerfError::InvalidShape(_))));

        let shape = WorkloadShape { seq_len_prompt: 2048, seq_len_decode: 0, batch_size: 1 };
        let req = model_requirements(&model, &shape).unwrap();
        assert_eq!(req.decode_flops_per_token, 2.0 * 70e9);
    }

    #[test]
    fn degenerate_moe_equals_dense() {
        let dense = dense_model("d", 70e9);
        let mut moe = dense.clone();
        moe.architecture = Architecture::Moe;
        let shape = shape_2k();
        let a = model_requirements(&dense, &shape).unwrap();
        let b = model_requirements(&moe, &shape).unwrap();
        assert_eq!(a.prefill_flops, b.prefill_flops);
        assert_eq!(a.decode_bytes_per_token(), b.decode_bytes_per_token());
        assert_eq!(a.weight_footprint, b.weight_footprint);
    }

    #[test]
    fn ssm_state_replaces_kv() {
        let mut m = dense_model("ssm", 3e9);
        m.architecture = Architecture::Ssm;
        m.kv_bytes_per_token = 0.0;
        m.layers = 64;
        m.hidden_dim = 2560;
        let req = model_requirements(&m, &shape_2k()).unwrap();
        let state = 64.0 * 2560.0 * SSM_STATE_WIDTH * 2.0;
        assert_eq!(req.kv_footprint_per_request, state);
        assert_eq!(req.kv_read_bytes_per_step, state * 8.0);
    }

    #[test]
    fn max_rule_direct_evaluation() {
        // prefill compute time 0.3 s, bytes 0.1 s at unit efficiency -> 300 ms.
        let sku = HardwareSku { peak_flops: 1e12, mem_bandwidth: 1e12, ..h200() };
        let req = RequirementProfile {
            prefill_flops: 0.3e12,
            decode_flops_per_token: 1e9,
            weight_read_bytes_per_step: 0.1e12,
            kv_read_bytes_per_step: 0.0,
            weight_footprint: 0.1e12,
            kv_footprint_per_request: 0.0,
            shape: WorkloadShape { seq_len_prompt: 1, seq_len_decode: 0, batch_size: 1 },
        };
        let ideal = PerfModel::new(
            PerfCalibration {
                gpu_compute_efficiency: 1.0,
                gpu_bandwidth_efficiency: 1.0,
                tp_penalty_per_doubling: 0.0,
                ..PerfCalibration::default()
            },
            PerfEnv::default(),
        );
        // tp = accelerators so the replica sees the whole server.
        let lat = ideal.roofline_latency(&req, &sku, 8, 0.0).unwrap();
        assert!((lat.ttft_ms - 300.0).abs() < 1e-9);
    }

    #[test]
    fn doubling_rates_halves_latency_at_zero_load() {
        let model = dense_model("m", 70e9);
        let perf = PerfModel::default();
        let shape = shape_2k();
        let req = model_requirements(&model, &shape).unwrap();
        let sku = h200();
        let tp = perf.select_tensor_parallel(&req, &sku).unwrap();
        let base = perf.roofline_latency(&req, &sku, tp, 0.0).unwrap();
        let double =
            HardwareSku { peak_flops: sku.peak_flops * 2.0, mem_bandwidth: sku.mem_bandwidth * 2.0, ..sku };
        let fast = perf.roofline_latency(&req, &double, tp, 0.0).unwrap();
        assert!((fast.ttft_ms - base.ttft_ms / 2.0).abs() / base.ttft_ms < 1e-9);
        assert!((fast.tbt_ms - base.tbt_ms / 2.0).abs() / base.tbt_ms < 1e-9);
    }

    #[test]
    fn load_at_ceiling_is_saturated_marker() {
        let model = dense_model("m", 70e9);
        let perf = PerfModel::default();
        let req = model_requirements(&model, &shape_2k()).unwrap();
        let sku = h200();
        let tp = perf.select_tensor_parallel(&req, &sku).unwrap();
        let ceiling = perf.serving_ceiling_rps(&req, &sku, tp);
        assert!(matches!(
            perf.roofline_latency(&req, &sku, tp, ceiling * 1.01),
            Err(PerfError::Saturated { .. })
        ));
        assert!(perf.roofline_latency(&req, &sku, tp, ceiling * 0.5).is_ok());
    }

    #[test]
    fn model_too_large_is_catchable() {
        let model = dense_model("huge", 5e12); // 10 TB of weights
        let perf = PerfModel::default();
        let req = model_requirements(&model, &shape_2k()).unwrap();
        let sku = h200();
        assert!(perf.select_tensor_parallel(&req, &sku).is_none());
        assert!(matches!(
            perf.roofline_latency(&req, &sku, 8, 0.0),
            Err(PerfError::ModelDoesNotFit { .. })
        ));
        assert!(matches!(
            perf.max_goodput(&model, &shape_2k(), &sku, &SloSpec::default()),
            Err(PerfError::ModelUnservable { .. })
        ));
    }

    #[test]
    fn slo_at_zero_load_latency_gives_zero_goodput() {
        let model = dense_model("m", 70e9);
        let perf = PerfModel::default();
        let req = model_requirements(&model, &shape_2k()).unwrap();
        let sku = h200();
        let tp = perf.select_tensor_parallel(&req, &sku).unwrap();
        let lat0 = perf.roofline_latency(&req, &sku, tp, 0.0).unwrap();
        let slo = SloSpec { ttft_ms_max: lat0.ttft_ms, tbt_ms_max: lat0.tbt_ms };
        let detail = perf.goodput_detail(&req, &sku, &slo).unwrap();
        assert_eq!(detail.goodput_deci_rps, 0);
    }

    #[test]
    fn binary_search_matches_linear_scan() {
        let perf = PerfModel::default();
        let slo = SloSpec::default();
        let sku = h200();
        for params in [1e9, 8e9, 70e9] {
            let model = dense_model("m", params);
            let req = model_requirements(&model, &shape_2k()).unwrap();
            let detail = perf.goodput_detail(&req, &sku, &slo).unwrap();
            // Independent linear scan over the same grid.
            let tp = perf.select_tensor_parallel(&req, &sku).unwrap();
            let mut scan = 0u64;
            loop {
                let next = scan + 1;
                let ok = match perf.roofline_latency(&req, &sku, tp, next as f64 * DECI_RPS) {
                    Ok(lat) => slo.admits(&lat),
                    Err(_) => false,
                };
                if ok {
                    scan = next;
                } else {
                    break;
                }
            }
            assert_eq!(detail.goodput_deci_rps, scan, "params {params}");
        }
    }

    #[test]
    fn provision_arithmetic() {
        let perf = PerfModel::default();
        let slo = SloSpec::default();
        let model = dense_model("m", 70e9);
        let sku = h200();
        let metrics = perf.max_goodput(&model, &shape_2k(), &sku, &slo).unwrap();
        let g = metrics.goodput_rps;
        assert!(g > 0.0);

        let (servers, util) =
            perf.provision(g * 1000.0 - 1e-6, &model, &shape_2k(), &sku, &slo).unwrap();
        assert_eq!(servers, 1000);
        assert!((util - 1.0).abs() < 1e-9);

        let (servers, util) = perf.provision(g * 1.01, &model, &shape_2k(), &sku, &slo).unwrap();
        assert_eq!(servers, 2);
        assert!((util - 1.01 / 2.0).abs() < 1e-9);

        let (servers, util) = perf.provision(0.0, &model, &shape_2k(), &sku, &slo).unwrap();
        assert_eq!(servers, 0);
        assert_eq!(util, 0.0);
    }

    #[test]
    fn goodput_dominance() {
        let perf = PerfModel::default();
        let slo = SloSpec::default();
        let model = dense_model("m", 8e9);
        let weak = h200();
        let strong = HardwareSku {
            peak_flops: weak.peak_flops * 1.5,
            mem_bandwidth: weak.mem_bandwidth * 1.3,
            ..weak.clone()
        };
        let g_weak = perf.max_goodput(&model, &shape_2k(), &weak, &slo).unwrap().goodput_rps;
        let g_strong = perf.max_goodput(&model, &shape_2k(), &strong, &slo).unwrap().goodput_rps;
        assert!(g_strong >= g_weak);
    }

    #[test]
    fn latency_monotone_in_load_and_model_size() {
        let perf = PerfModel::default();
        let sku = h200();
        let req = model_requirements(&dense_model("m", 70e9), &shape_2k()).unwrap();
        let tp = perf.select_tensor_parallel(&req, &sku).unwrap();
        let ceiling = perf.serving_ceiling_rps(&req, &sku, tp);
        let mut prev = 0.0;
        for frac in [0.0, 0.2, 0.4, 0.6, 0.8] {
            let lat = perf.roofline_latency(&req, &sku, tp, ceiling * frac).unwrap();
            assert!(lat.ttft_ms >= prev);
            prev = lat.ttft_ms;
        }
        let small = model_requirements(&dense_model("s", 8e9), &shape_2k()).unwrap();
        let lat_small = perf.roofline_latency(&small, &sku, tp, 0.0).unwrap();
        let lat_large = perf.roofline_latency(&req, &sku, tp, 0.0).unwrap();
        assert!(lat_large.ttft_ms >= lat_small.ttft_ms);
        assert!(lat_large.tbt_ms >= lat_small.tbt_ms);
    }

    #[test]
    fn roofline_lower_bound_at_zero_load() {
        let perf = PerfModel::default();
        let sku = h200();
        let req = model_requirements(&dense_model("m", 70e9), &shape_2k()).unwrap();
        let tp = perf.select_tensor_parallel(&req, &sku).unwrap();
        let rates = perf.replica_rates(&sku, tp);
        let lat = perf.roofline_latency(&req, &sku, tp, 0.0).unwrap();
        let batch = f64::from(req.shape.batch_size);
        let compute_bound = req.prefill_flops / batch / rates.flops_per_s * 1e3;
        let bytes_bound = req.prefill_bytes() / batch / rates.bytes_per_s * 1e3;
        assert!(lat.ttft_ms >= compute_bound - 1e-12);
        assert!(lat.ttft_ms >= bytes_bound - 1e-12);
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use crate::catalog::{Architecture, InterconnectClass, ModelSpec, SkuKind};
    use crate::time::Month;
    use proptest::prelude::*;

    fn arb_sku(flops: f64, bw: f64) -> HardwareSku {
        HardwareSku {
            id: "p".into(),
            kind: SkuKind::GpuServer,
            release_month: Month::new(2024, 1),
            availability_delay_months: 0,
            peak_flops: flops,
            mem_bandwidth: bw,
            mem_capacity: 1.2e12,
            tdp_server_watts: 10_200.0,
            accelerators_per_server: 8,
            server_cost_usd: 300_000.0,
            interconnect_class: InterconnectClass::Nvlink,
        }
    }

    fn arb_model(params: f64) -> ModelSpec {
        ModelSpec {
            id: "m".into(),
            release_month: Month::new(2024, 1),
            total_params: params,
            active_params: params,
            architecture: Architecture::DenseTransformer,
            layers: 32,
            hidden_dim: 4096,
            bytes_per_param: 2.0,
            kv_bytes_per_token: 1.3e5,
        }
    }

    proptest! {
        #[test]
        fn latency_non_increasing_in_rates(
            flops in 1e15f64..2e16,
            bw in 1e13f64..1e14,
            boost in 1.01f64..4.0,
            params in 1e9f64..7e10,
        ) {
            let perf = PerfModel::default();
            let shape = WorkloadShape { seq_len_prompt: 1024, seq_len_decode: 256, batch_size: 64 };
            let req = model_requirements(&arb_model(params), &shape).unwrap();
            let slow = arb_sku(flops, bw);
            let fast = arb_sku(flops * boost, bw * boost);
            if let Some(tp) = perf.select_tensor_parallel(&req, &slow) {
                let a = perf.roofline_latency(&req, &slow, tp, 0.0).unwrap();
                let b = perf.roofline_latency(&req, &fast, tp, 0.0).unwrap();
                prop_assert!(b.ttft_ms <= a.ttft_ms * (1.0 + 1e-12));
                prop_assert!(b.tbt_ms <= a.tbt_ms * (1.0 + 1e-12));
            }
        }

        #[test]
        fn goodput_dominance_property(
            flops in 1e15f64..1e16,
            bw in 1e13f64..5e13,
            fb in 1.0f64..2.0,
            bb in 1.0f64..2.0,
            params in 1e9f64..3e10,
        ) {
            let perf = PerfModel::default();
            let shape = WorkloadShape { seq_len_prompt: 1024, seq_len_decode: 256, batch_size: 64 };
            let model = arb_model(params);
            let weak = arb_sku(flops, bw);
            let strong = arb_sku(flops * fb, bw * bb);
            let slo = SloSpec::default();
            let g_weak = perf.max_goodput(&model, &shape, &weak, &slo).unwrap().goodput_rps;
            let g_strong = perf.max_goodput(&model, &shape, &strong, &slo).unwrap().goodput_rps;
            prop_assert!(g_strong >= g_weak);
        }

        #[test]
        fn provisioned_capacity_covers_demand(
            demand in 0.1f64..1e5,
            params in 1e9f64..3e10,
        ) {
            let perf = PerfModel::default();
            let shape = WorkloadShape { seq_len_prompt: 1024, seq_len_decode: 256, batch_size: 64 };
            let model = arb_model(params);
            let sku = arb_sku(7.9e15, 3.8e13);
            let slo = SloSpec::default();
            let g = perf.max_goodput(&model, &shape, &sku, &slo).unwrap().goodput_rps;
            let (servers, util) = perf.provision(demand, &model, &shape, &sku, &slo).unwrap();
            prop_assert!(servers as f64 * g >= demand * (1.0 - 1e-12));
            prop_assert!(util > 0.0 && util <= 1.0 + 1e-12);
        }
    }
}
