#pragma once

#include <functional>
#include <string>
#include <vector>

#include "factost/adapter.hpp"
#include "factost/backbone.hpp"
#include "factost/config.hpp"
#include "factost/data.hpp"
#include "factost/params.hpp"

namespace factost::trainer {

// Warmup-Stable-Decay: linear ramp to peak, constant plateau, cosine decay to
// 0.1 * peak over the final decay fraction.
double wsd_lr(int step, const TrainConfig& cfg);

// ---- continual memory replay ----

struct CmrPartition {
    int memory_count = 0;   // K_m
    int current_begin = 0;  // current stream = [current_begin, n_total)
};

CmrPartition cmr_partition(int n_total, double s);

// Reservoir-sampled replay memory over sample ids.
class ReplayBuffer {
public:
    explicit ReplayBuffer(int capacity) : capacity_(capacity) {}

    void seed_from(const std::vector<int64_t>& items);
    void update(int64_t item, Rng& rng);

    const std::vector<int64_t>& items() const { return items_; }
    int capacity() const { return capacity_; }
    int64_t seen() const { return seen_; }
    bool empty() const { return items_.empty(); }

private:
    int capacity_;
    int64_t seen_ = 0;
    std::vector<int64_t> items_;
};

// Replaces floor(r_mix * |batch|) uniformly chosen batch positions with
// uniformly drawn distinct buffer items; batch size is preserved.
std::vector<int64_t> mix_batch(const std::vector<int64_t>& current, const ReplayBuffer& buffer,
                               double r_mix, Rng& rng);

// ---- optimizer ----

class AdamOptimizer {
public:
    AdamOptimizer(ParameterStore& params, const TrainConfig& cfg);

    // Applies one update from the accumulated gradients in the store. When
    // trainable_prefixes is non-empty only entries under one of the listed
    // name prefixes are updated (used for backbone freezing).
    void step(ParameterStore& params, double lr,
              const std::vector<std::string>& trainable_prefixes = {});

private:
    double beta1_, beta2_, eps_, clip_;
    int t_ = 0;
    std::vector<Mat> m_, v_;
};

// ---- loss/metric traces (JSON lines) ----

class TraceWriter {
public:
    TraceWriter() = default;
    explicit TraceWriter(const std::string& path);
    void write(int step, double lr, double loss, const std::string& split,
               const std::vector<std::pair<std::string, double>>& metrics = {});
    bool enabled() const { return !path_.empty(); }

private:
    std::string path_;
};

// ---- stage I: universal temporal pretraining ----

struct TrainResult {
    std::vector<double> loss_trace;
    std::vector<double> lr_trace;
};

TrainResult train_utp(const data::STDataset& ds, ParameterStore& params,
                      const BackboneConfig& bcfg, const TrainConfig& tcfg,
                      const std::string& trace_path = "");

// ---- stage II: spatio-temporal adaptation ----

struct StaTrainOptions {
    double few_shot_frac = 1.0;
    int ctx_len = 0;   // required
    int horizon = 0;   // required
    int stride = 1;
    double train_ratio = 0.6, val_ratio = 0.2, test_ratio = 0.2;
    adapter::AblationSwitches ablations;
    bool backbone_loaded = false;  // set true after a checkpoint transfer
    bool from_scratch = false;     // explicit opt-in for random-init adaptation
    int eval_every = 0;            // 0: validate only at the end
    std::string trace_path;
};

struct StaTrainResult {
    std::vector<double> loss_trace;
    std::vector<double> val_mae_trace;
    double final_val_mae = 0.0;
    int trained_windows = 0;
};

StaTrainResult train_sta(const data::STDataset& ds, ParameterStore& params,
                         const BackboneConfig& bcfg, const AdapterConfig& acfg,
                         const TrainConfig& tcfg, const StaTrainOptions& opt);

// ---- gradient audit harness ----

struct GradAuditItem {
    std::string name;
    int index = 0;
    double analytic = 0.0;
    double fd = 0.0;
    double rel_err = 0.0;
};

struct GradAuditReport {
    std::vector<GradAuditItem> violations;
    double max_rel_err = 0.0;
    std::string worst_param;
    size_t n_checked = 0;
    bool pass = true;
};

// fn(params, with_grad): returns the loss; when with_grad it must also leave
// fresh gradients in the store. Relative error uses a small-magnitude floor.
using LossFn = std::function<double(ParameterStore&, bool)>;

GradAuditReport grad_audit(const LossFn& fn, ParameterStore& params, double fd_step,
                           double tolerance);

}  // namespace factost::trainer
