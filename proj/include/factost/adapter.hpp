#pragma once

#include <cstdint>
#include <vector>

#include "factost/backbone.hpp"
#include "factost/config.hpp"
#include "factost/data.hpp"
#include "factost/params.hpp"
#include "factost/tape.hpp"

namespace factost::adapter {

// Component switches for the ablation axes (and the adapter-off equivalence
// check, which disables prompts and bypasses the gate).
struct AblationSwitches {
    bool use_stmf = true;
    bool use_stf = true;
    bool use_prompts = true;
    bool gate_bypass = false;  // force the affinity gate to 1
};

// One multi-node training/inference slice: context [N x L], target [N x H]
// (target may be empty), shared timestamps.
struct PanelWindow {
    Mat context;
    Mat target;
    std::vector<int64_t> context_timestamps;
    std::vector<int64_t> target_timestamps;
};

void add_adapter_params(ParameterStore& store, const AdapterConfig& acfg, int d_model, Rng& rng);

// Per-(node, patch) metadata rows, flattened node-major: row = node * P + patch.
struct PatchMeta {
    int n_nodes = 0;
    int n_patches = 0;
    std::vector<int> node_idx;                // N*P
    std::vector<std::vector<int>> cycle_idx;  // per declared cycle, N*P
};

PatchMeta build_patch_meta(const std::vector<int64_t>& patch_timestamps, int n_nodes,
                           const AdapterConfig& acfg);

// ---- graph-level pieces (rows flattened node-major) ----

ag::Var stmf_graph(ag::Tape& t, const PatchMeta& meta, ParameterStore& params,
                   const AdapterConfig& acfg);
ag::Var spatial_affinity_graph(ag::Tape& t, ag::Var ident, const PatchMeta& meta,
                               ParameterStore& params);
ag::Var temporal_affinity_graph(ag::Tape& t, ag::Var ident, const PatchMeta& meta,
                                ParameterStore& params, const AdapterConfig& acfg);
ag::Var lagged_affinity_graph(ag::Tape& t, ag::Var ident, const PatchMeta& meta,
                              ParameterStore& params, const AdapterConfig& acfg);
ag::Var stf_gate_graph(ag::Tape& t, ag::Var ident, ag::Var s_s, ag::Var s_t, ag::Var s_d,
                       ParameterStore& params);
ag::Var compose_prompts_graph(ag::Tape& t, ParameterStore& params);

// ---- concrete wrappers (the operation contracts) ----

// Identifier tensor I_st, flattened to [N*P x d_model].
Mat stmf_identifiers(const std::vector<int>& node_ids,
                     const std::vector<int64_t>& patch_timestamps, ParameterStore& params,
                     const AdapterConfig& acfg);
Mat spatial_affinity(const Mat& ident, const PatchMeta& meta, ParameterStore& params);
Mat temporal_affinity(const Mat& ident, const PatchMeta& meta, ParameterStore& params,
                      const AdapterConfig& acfg);
Mat lagged_affinity(const Mat& ident, const PatchMeta& meta, ParameterStore& params,
                    const AdapterConfig& acfg);
Mat stf_gate(const Mat& ident, const Mat& s_s, const Mat& s_t, const Mat& s_d,
             ParameterStore& params);
Mat compose_prompts(ParameterStore& params);

// ---- assembled pipeline ----

struct StaOptions {
    AblationSwitches ablations;
    LossKind loss_kind = LossKind::kL1Median;
    bool train_mode = false;
    Rng* rng = nullptr;
};

struct StaGraph {
    std::vector<ag::Var> pred_norm;  // per node, H x |Q| normalized scale
    std::vector<backbone::NormStats> stats;
    int fut_count = 0;
    ag::Var loss;
    bool has_loss = false;
};

StaGraph build_sta_graph(ag::Tape& t, const PanelWindow& panel, ParameterStore& params,
                         const BackboneConfig& bcfg, const AdapterConfig& acfg,
                         const StaOptions& opt);

struct StaResult {
    std::vector<backbone::QuantileForecast> per_node;
    double loss = 0.0;
    size_t peak_alloc_bytes = 0;
    size_t total_alloc_bytes = 0;
};

StaResult sta_forward(const PanelWindow& panel, ParameterStore& params,
                      const BackboneConfig& bcfg, const AdapterConfig& acfg,
                      const StaOptions& opt = {});

}  // namespace factost::adapter
