#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace factost {

// Flat UTF-8 key-value document with dotted section keys, e.g.
// "backbone.d_model=256". Used for CLI config files and the config block
// embedded in checkpoints.
class KvDoc {
public:
    static KvDoc parse(const std::string& text);
    static KvDoc load_file(const std::string& path);
    std::string serialize() const;

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    void set_int(const std::string& key, long long v);
    void set_real(const std::string& key, double v);

    std::string get_string(const std::string& key, const std::string& def) const;
    long long get_int(const std::string& key, long long def) const;
    double get_real(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::vector<double> get_real_list(const std::string& key, std::vector<double> def) const;

    // Overlays other on top of *this (other wins).
    void merge_from(const KvDoc& other);
    const std::map<std::string, std::string>& items() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

// Architecture hyperparameters of the temporal backbone.
struct BackboneConfig {
    int d_model = 256;
    int d_ff = 1024;
    int n_layers = 3;
    int n_heads = 4;
    int patch_len = 16;
    int max_ctx_patches = 32;  // L_max / patch_len
    int max_fut_patches = 4;   // H_max / patch_len
    int min_ctx_patches = 4;   // L_min / patch_len
    std::vector<double> quantiles = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    double rope_fraction = 0.75;
    double rope_base = 10000.0;
    double dropout = 0.1;
    double eps = 1e-5;

    int d_head() const { return d_model / n_heads; }
    int rope_dims() const;  // rotated dims per head, rounded to even
    int n_tokens() const { return max_ctx_patches + 1 + max_fut_patches; }
    int register_index() const { return max_ctx_patches; }
    int max_horizon() const { return max_fut_patches * patch_len; }
    int max_context() const { return max_ctx_patches * patch_len; }
    int median_index() const;  // index of quantile 0.5

    void validate() const;  // throws ConfigError naming the violated field
    void to_kv(KvDoc& doc) const;
    static BackboneConfig from_kv(const KvDoc& doc);
};

struct CalendarCycle {
    std::string name;
    int cardinality = 0;
};

// Spatio-temporal adapter hyperparameters.
struct AdapterConfig {
    int n_nodes = 0;
    int id_dim = 32;
    std::vector<CalendarCycle> calendar_cycles = {{"time_of_day", 24}, {"day_of_week", 7}};
    int n_prompts = 3;
    int prompt_rank = 8;
    int n_prototypes = 16;
    int max_lag = 3;
    bool backbone_frozen = false;

    void validate(int d_model) const;
    void to_kv(KvDoc& doc) const;
    static AdapterConfig from_kv(const KvDoc& doc);
};

enum class LossKind { kPinball, kL1Median };

// Optimization settings shared by both training stages.
struct TrainConfig {
    double peak_lr = 5e-4;
    int batch_size = 32;
    int total_steps = 1000;
    double warmup_frac = 0.1;
    double decay_frac = 0.2;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;
    uint64_t seed = 1;
    LossKind loss_kind = LossKind::kPinball;
    int n_workers = 1;
    bool mask_sampling = true;  // random sequence masking during pretraining
    // Continual memory replay (adaptation stage).
    bool use_cmr = true;
    double cmr_memory_frac = 0.2;  // s, buffer size as fraction of the stream
    double cmr_mix_ratio = 0.3;    // r_mix, replaced fraction of each batch

    void validate() const;
    void to_kv(KvDoc& doc, const std::string& prefix) const;
    static TrainConfig from_kv(const KvDoc& doc, const std::string& prefix);
};

}  // namespace factost
