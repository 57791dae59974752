#include "factost/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "factost/errors.hpp"

namespace factost {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

KvDoc KvDoc::parse(const std::string& text) {
    KvDoc doc;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + t +
                              "'");
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        doc.kv_[key] = trim(t.substr(eq + 1));
    }
    return doc;
}

KvDoc KvDoc::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KvDoc::serialize() const {
    std::string out;
    for (const auto& [k, v] : kv_) {
        out += k;
        out += "=";
        out += v;
        out += "\n";
    }
    return out;
}

void KvDoc::set_int(const std::string& key, long long v) { kv_[key] = std::to_string(v); }

void KvDoc::set_real(const std::string& key, double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    kv_[key] = os.str();
}

std::string KvDoc::get_string(const std::string& key, const std::string& def) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
}

long long KvDoc::get_int(const std::string& key, long long def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        size_t pos = 0;
        const long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected integer, got '" + it->second + "'");
    }
}

double KvDoc::get_real(const std::string& key, double def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected real, got '" + it->second + "'");
    }
}

bool KvDoc::get_bool(const std::string& key, bool def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected bool, got '" + v + "'");
}

std::vector<double> KvDoc::get_real_list(const std::string& key, std::vector<double> def) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    std::vector<double> out;
    std::string item;
    std::istringstream ss(it->second);
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) continue;
        try {
            out.push_back(std::stod(t));
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected comma-separated reals");
        }
    }
    return out;
}

void KvDoc::merge_from(const KvDoc& other) {
    for (const auto& [k, v] : other.kv_) kv_[k] = v;
}

int BackboneConfig::rope_dims() const {
    int r = static_cast<int>(std::lround(rope_fraction * d_head()));
    if (r % 2 != 0) r -= 1;
    return r;
}

int BackboneConfig::median_index() const {
    for (size_t i = 0; i < quantiles.size(); ++i) {
        if (std::fabs(quantiles[i] - 0.5) < 1e-12) return static_cast<int>(i);
    }
    throw ConfigError("backbone.quantiles: must contain 0.5");
}

void BackboneConfig::validate() const {
    auto req = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    req(d_model > 0, "backbone.d_model: must be positive");
    req(d_ff > 0, "backbone.d_ff: must be positive");
    req(n_layers >= 0, "backbone.n_layers: must be nonnegative");
    req(n_heads > 0, "backbone.n_heads: must be positive");
    req(d_model % n_heads == 0, "backbone.d_model: must be divisible by n_heads");
    req(patch_len > 0, "backbone.patch_len: must be positive");
    req(max_ctx_patches > 0, "backbone.max_ctx_patches: must be positive");
    req(max_fut_patches > 0, "backbone.max_fut_patches: must be positive");
    req(min_ctx_patches >= 1, "backbone.min_ctx_patches: must be >= 1");
    req(min_ctx_patches <= max_ctx_patches,
        "backbone.min_ctx_patches: must be <= max_ctx_patches");
    req(rope_fraction > 0.0 && rope_fraction <= 1.0, "backbone.rope_fraction: must be in (0,1]");
    const int r = static_cast<int>(std::lround(rope_fraction * d_head()));
    req(r % 2 == 0 && r >= 2,
        "backbone.rope_fraction: round(rope_fraction*d_head) must be even and >= 2");
    req(rope_base > 0.0, "backbone.rope_base: must be positive");
    req(dropout >= 0.0 && dropout < 1.0, "backbone.dropout: must be in [0,1)");
    req(eps > 0.0, "backbone.eps: must be positive");
    req(!quantiles.empty(), "backbone.quantiles: must be non-empty");
    bool has_median = false;
    for (size_t i = 0; i < quantiles.size(); ++i) {
        req(quantiles[i] > 0.0 && quantiles[i] < 1.0, "backbone.quantiles: levels must be in (0,1)");
        if (i > 0) req(quantiles[i] > quantiles[i - 1], "backbone.quantiles: must be strictly increasing");
        if (std::fabs(quantiles[i] - 0.5) < 1e-12) has_median = true;
    }
    req(has_median, "backbone.quantiles: must contain 0.5");
}

void BackboneConfig::to_kv(KvDoc& doc) const {
    doc.set_int("backbone.d_model", d_model);
    doc.set_int("backbone.d_ff", d_ff);
    doc.set_int("backbone.n_layers", n_layers);
    doc.set_int("backbone.n_heads", n_heads);
    doc.set_int("backbone.patch_len", patch_len);
    doc.set_int("backbone.max_ctx_patches", max_ctx_patches);
    doc.set_int("backbone.max_fut_patches", max_fut_patches);
    doc.set_int("backbone.min_ctx_patches", min_ctx_patches);
    std::string qs;
    for (size_t i = 0; i < quantiles.size(); ++i) {
        if (i) qs += ",";
        std::ostringstream os;
        os.precision(17);
        os << quantiles[i];
        qs += os.str();
    }
    doc.set("backbone.quantiles", qs);
    doc.set_real("backbone.rope_fraction", rope_fraction);
    doc.set_real("backbone.rope_base", rope_base);
    doc.set_real("backbone.dropout", dropout);
    doc.set_real("backbone.eps", eps);
}

BackboneConfig BackboneConfig::from_kv(const KvDoc& doc) {
    BackboneConfig c;
    c.d_model = static_cast<int>(doc.get_int("backbone.d_model", c.d_model));
    c.d_ff = static_cast<int>(doc.get_int("backbone.d_ff", c.d_ff));
    c.n_layers = static_cast<int>(doc.get_int("backbone.n_layers", c.n_layers));
    c.n_heads = static_cast<int>(doc.get_int("backbone.n_heads", c.n_heads));
    c.patch_len = static_cast<int>(doc.get_int("backbone.patch_len", c.patch_len));
    c.max_ctx_patches = static_cast<int>(doc.get_int("backbone.max_ctx_patches", c.max_ctx_patches));
    c.max_fut_patches = static_cast<int>(doc.get_int("backbone.max_fut_patches", c.max_fut_patches));
    c.min_ctx_patches = static_cast<int>(doc.get_int("backbone.min_ctx_patches", c.min_ctx_patches));
    c.quantiles = doc.get_real_list("backbone.quantiles", c.quantiles);
    c.rope_fraction = doc.get_real("backbone.rope_fraction", c.rope_fraction);
    c.rope_base = doc.get_real("backbone.rope_base", c.rope_base);
    c.dropout = doc.get_real("backbone.dropout", c.dropout);
    c.eps = doc.get_real("backbone.eps", c.eps);
    return c;
}

void AdapterConfig::validate(int d_model) const {
    auto req = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    req(n_nodes > 0, "adapter.n_nodes: must be positive");
    req(id_dim > 0, "adapter.id_dim: must be positive");
    req(n_prompts > 0, "adapter.n_prompts: must be positive");
    req(prompt_rank > 0, "adapter.prompt_rank: must be positive");
    req(prompt_rank <= std::min(n_prompts, d_model),
        "adapter.prompt_rank: must be <= min(n_prompts, d_model)");
    req(n_prototypes >= 1, "adapter.n_prototypes: must be >= 1");
    req(max_lag >= 1, "adapter.max_lag: must be >= 1");
    for (const CalendarCycle& c : calendar_cycles)
        req(c.cardinality >= 2, "adapter.calendar_cycles: cardinality of '" + c.name + "' must be >= 2");
}

void AdapterConfig::to_kv(KvDoc& doc) const {
    doc.set_int("adapter.n_nodes", n_nodes);
    doc.set_int("adapter.id_dim", id_dim);
    doc.set_int("adapter.n_prompts", n_prompts);
    doc.set_int("adapter.prompt_rank", prompt_rank);
    doc.set_int("adapter.n_prototypes", n_prototypes);
    doc.set_int("adapter.max_lag", max_lag);
    doc.set("adapter.backbone_frozen", backbone_frozen ? "true" : "false");
    std::string cs;
    for (size_t i = 0; i < calendar_cycles.size(); ++i) {
        if (i) cs += ",";
        cs += calendar_cycles[i].name + ":" + std::to_string(calendar_cycles[i].cardinality);
    }
    doc.set("adapter.calendar_cycles", cs);
}

AdapterConfig AdapterConfig::from_kv(const KvDoc& doc) {
    AdapterConfig c;
    c.n_nodes = static_cast<int>(doc.get_int("adapter.n_nodes", c.n_nodes));
    c.id_dim = static_cast<int>(doc.get_int("adapter.id_dim", c.id_dim));
    c.n_prompts = static_cast<int>(doc.get_int("adapter.n_prompts", c.n_prompts));
    c.prompt_rank = static_cast<int>(doc.get_int("adapter.prompt_rank", c.prompt_rank));
    c.n_prototypes = static_cast<int>(doc.get_int("adapter.n_prototypes", c.n_prototypes));
    c.max_lag = static_cast<int>(doc.get_int("adapter.max_lag", c.max_lag));
    c.backbone_frozen = doc.get_bool("adapter.backbone_frozen", c.backbone_frozen);
    const std::string cs = doc.get_string("adapter.calendar_cycles", "");
    if (!cs.empty()) {
        c.calendar_cycles.clear();
        std::istringstream ss(cs);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const size_t colon = item.find(':');
            if (colon == std::string::npos)
                throw ConfigError("adapter.calendar_cycles: expected name:cardinality entries");
            CalendarCycle cyc;
            cyc.name = trim(item.substr(0, colon));
            cyc.cardinality = std::stoi(item.substr(colon + 1));
            c.calendar_cycles.push_back(cyc);
        }
    }
    return c;
}

void TrainConfig::validate() const {
    auto req = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    req(peak_lr > 0.0, "train.peak_lr: must be positive");
    req(batch_size > 0, "train.batch_size: must be positive");
    req(total_steps >= 0, "train.total_steps: must be nonnegative");
    req(warmup_frac >= 0.0 && warmup_frac < 1.0, "train.warmup_frac: must be in [0,1)");
    req(decay_frac >= 0.0 && decay_frac < 1.0, "train.decay_frac: must be in [0,1)");
    req(warmup_frac + decay_frac < 1.0, "train.warmup_frac+decay_frac: must be < 1");
    req(n_workers >= 1, "train.n_workers: must be >= 1");
    req(cmr_memory_frac >= 0.0 && cmr_memory_frac < 1.0, "train.cmr_memory_frac: must be in [0,1)");
    req(cmr_mix_ratio >= 0.0 && cmr_mix_ratio < 1.0, "train.cmr_mix_ratio: must be in [0,1)");
}

void TrainConfig::to_kv(KvDoc& doc, const std::string& prefix) const {
    doc.set_real(prefix + ".peak_lr", peak_lr);
    doc.set_int(prefix + ".batch_size", batch_size);
    doc.set_int(prefix + ".total_steps", total_steps);
    doc.set_real(prefix + ".warmup_frac", warmup_frac);
    doc.set_real(prefix + ".decay_frac", decay_frac);
    doc.set_real(prefix + ".adam_beta1", adam_beta1);
    doc.set_real(prefix + ".adam_beta2", adam_beta2);
    doc.set_real(prefix + ".adam_eps", adam_eps);
    doc.set_real(prefix + ".grad_clip", grad_clip);
    doc.set_int(prefix + ".seed", static_cast<long long>(seed));
    doc.set(prefix + ".loss", loss_kind == LossKind::kPinball ? "pinball" : "l1_median");
    doc.set_int(prefix + ".n_workers", n_workers);
    doc.set(prefix + ".mask_sampling", mask_sampling ? "true" : "false");
    doc.set(prefix + ".use_cmr", use_cmr ? "true" : "false");
    doc.set_real(prefix + ".cmr_memory_frac", cmr_memory_frac);
    doc.set_real(prefix + ".cmr_mix_ratio", cmr_mix_ratio);
}

TrainConfig TrainConfig::from_kv(const KvDoc& doc, const std::string& prefix) {
    TrainConfig c;
    c.peak_lr = doc.get_real(prefix + ".peak_lr", c.peak_lr);
    c.batch_size = static_cast<int>(doc.get_int(prefix + ".batch_size", c.batch_size));
    c.total_steps = static_cast<int>(doc.get_int(prefix + ".total_steps", c.total_steps));
    c.warmup_frac = doc.get_real(prefix + ".warmup_frac", c.warmup_frac);
    c.decay_frac = doc.get_real(prefix + ".decay_frac", c.decay_frac);
    c.adam_beta1 = doc.get_real(prefix + ".adam_beta1", c.adam_beta1);
    c.adam_beta2 = doc.get_real(prefix + ".adam_beta2", c.adam_beta2);
    c.adam_eps = doc.get_real(prefix + ".adam_eps", c.adam_eps);
    c.grad_clip = doc.get_real(prefix + ".grad_clip", c.grad_clip);
    c.seed = static_cast<uint64_t>(doc.get_int(prefix + ".seed", static_cast<long long>(c.seed)));
    const std::string loss = doc.get_string(prefix + ".loss", "");
    if (!loss.empty()) {
        if (loss == "pinball")
            c.loss_kind = LossKind::kPinball;
        else if (loss == "l1_median")
            c.loss_kind = LossKind::kL1Median;
        else
            throw ConfigError(prefix + ".loss: expected pinball or l1_median");
    }
    c.n_workers = static_cast<int>(doc.get_int(prefix + ".n_workers", c.n_workers));
    c.mask_sampling = doc.get_bool(prefix + ".mask_sampling", c.mask_sampling);
    c.use_cmr = doc.get_bool(prefix + ".use_cmr", c.use_cmr);
    c.cmr_memory_frac = doc.get_real(prefix + ".cmr_memory_frac", c.cmr_memory_frac);
    c.cmr_mix_ratio = doc.get_real(prefix + ".cmr_mix_ratio", c.cmr_mix_ratio);
    return c;
}

}  // namespace factost
