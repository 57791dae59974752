#include "factost/adapter.hpp"

#include <cmath>
#include <string>

#include "factost/errors.hpp"

namespace factost::adapter {

namespace {

ag::Var pvar(ag::Tape& t, ParameterStore& params, const std::string& name) {
    return t.param(params.value(name), params.slot(name));
}

}  // namespace

void add_adapter_params(ParameterStore& store, const AdapterConfig& acfg, int d_model, Rng& rng) {
    acfg.validate(d_model);
    const double std0 = 0.02;
    store.add("adapter/stmf/E_n", trunc_normal_mat(acfg.n_nodes, acfg.id_dim, std0, rng));
    for (const CalendarCycle& c : acfg.calendar_cycles)
        store.add("adapter/stmf/E_c/" + c.name,
                  trunc_normal_mat(c.cardinality, acfg.id_dim, std0, rng));
    const int concat_dim = (1 + static_cast<int>(acfg.calendar_cycles.size())) * acfg.id_dim;
    store.add("adapter/stmf/W_meta", trunc_normal_mat(concat_dim, d_model, std0, rng));
    store.add("adapter/affinity/P_s", trunc_normal_mat(acfg.id_dim, d_model, std0, rng));
    store.add("adapter/affinity/P_t", trunc_normal_mat(acfg.id_dim, d_model, std0, rng));
    store.add("adapter/stf/w", Mat(1, 3));
    store.add("adapter/stf/gamma", Mat(acfg.n_nodes, acfg.max_lag, 0.1));
    store.add("adapter/stf/prototypes", trunc_normal_mat(acfg.n_prototypes, d_model, std0, rng));
    store.add("adapter/dspa/U", trunc_normal_mat(acfg.n_prompts, acfg.prompt_rank, std0, rng));
    store.add("adapter/dspa/V", trunc_normal_mat(d_model, acfg.prompt_rank, std0, rng));
}

PatchMeta build_patch_meta(const std::vector<int64_t>& patch_timestamps, int n_nodes,
                           const AdapterConfig& acfg) {
    PatchMeta meta;
    meta.n_nodes = n_nodes;
    meta.n_patches = static_cast<int>(patch_timestamps.size());
    const int rows = n_nodes * meta.n_patches;
    meta.node_idx.resize(rows);
    meta.cycle_idx.assign(acfg.calendar_cycles.size(), std::vector<int>(rows));
    std::vector<data::CalendarIndex> per_patch(meta.n_patches);
    for (int p = 0; p < meta.n_patches; ++p)
        per_patch[p] = data::calendar_features(patch_timestamps[p], acfg.calendar_cycles);
    for (int i = 0; i < n_nodes; ++i) {
        for (int p = 0; p < meta.n_patches; ++p) {
            const int r = i * meta.n_patches + p;
            meta.node_idx[r] = i;
            for (size_t c = 0; c < acfg.calendar_cycles.size(); ++c)
                meta.cycle_idx[c][r] = per_patch[p].idx[c];
        }
    }
    return meta;
}

ag::Var stmf_graph(ag::Tape& t, const PatchMeta& meta, ParameterStore& params,
                   const AdapterConfig& acfg) {
    std::vector<ag::Var> parts;
    parts.push_back(t.gather_rows(pvar(t, params, "adapter/stmf/E_n"), meta.node_idx));
    for (size_t c = 0; c < acfg.calendar_cycles.size(); ++c)
        parts.push_back(t.gather_rows(
            pvar(t, params, "adapter/stmf/E_c/" + acfg.calendar_cycles[c].name),
            meta.cycle_idx[c]));
    ag::Var cat = parts.size() == 1 ? parts[0] : t.concat_cols(parts);
    return t.matmul(cat, pvar(t, params, "adapter/stmf/W_meta"));
}

ag::Var spatial_affinity_graph(ag::Tape& t, ag::Var ident, const PatchMeta& meta,
                               ParameterStore& params) {
    ag::Var projected = t.matmul(pvar(t, params, "adapter/stmf/E_n"),
                                 pvar(t, params, "adapter/affinity/P_s"));
    ag::Var per_row = t.gather_rows(projected, meta.node_idx);
    return t.row_sum(t.mul(ident, per_row));
}

ag::Var temporal_affinity_graph(ag::Tape& t, ag::Var ident, const PatchMeta& meta,
                                ParameterStore& params, const AdapterConfig& acfg) {
    const int n_cycles = static_cast<int>(acfg.calendar_cycles.size());
    ag::Var sum{};
    for (int c = 0; c < n_cycles; ++c) {
        ag::Var emb = t.gather_rows(
            pvar(t, params, "adapter/stmf/E_c/" + acfg.calendar_cycles[c].name),
            meta.cycle_idx[c]);
        sum = c == 0 ? emb : t.add(sum, emb);
    }
    ag::Var mean = t.scale(sum, 1.0 / n_cycles);
    ag::Var projected = t.matmul(mean, pvar(t, params, "adapter/affinity/P_t"));
    return t.row_sum(t.mul(ident, projected));
}

ag::Var lagged_affinity_graph(ag::Tape& t, ag::Var ident, const PatchMeta& meta,
                              ParameterStore& params, const AdapterConfig& acfg) {
    if (acfg.max_lag >= meta.n_patches)
        throw ConfigError("lagged affinity: max_lag " + std::to_string(acfg.max_lag) +
                          " must be smaller than the patch count " +
                          std::to_string(meta.n_patches));
    const int d_model = ident.cols;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d_model));
    ag::Var protos = pvar(t, params, "adapter/stf/prototypes");
    ag::Var gamma = pvar(t, params, "adapter/stf/gamma");
    ag::Var total{};
    for (int lag = 1; lag <= acfg.max_lag; ++lag) {
        // staggered view: patch p looks at p - lag, edge-padded at the start
        std::vector<int> shifted(meta.node_idx.size());
        for (int i = 0; i < meta.n_nodes; ++i)
            for (int p = 0; p < meta.n_patches; ++p)
                shifted[i * meta.n_patches + p] = i * meta.n_patches + std::max(0, p - lag);
        ag::Var hist = t.gather_rows(ident, shifted);
        // cross-attention pooling onto the latent prototypes
        ag::Var attn = t.row_softmax(t.scale(t.matmul_nt(hist, protos), inv_sqrt_d));
        ag::Var agg = t.matmul(attn, protos);
        ag::Var dot = t.row_sum(t.mul(ident, agg));
        ag::Var gamma_rows = t.gather_rows(t.slice_cols(gamma, lag - 1, 1), meta.node_idx);
        ag::Var term = t.mul(dot, gamma_rows);
        total = lag == 1 ? term : t.add(total, term);
    }
    return total;
}

ag::Var stf_gate_graph(ag::Tape& t, ag::Var ident, ag::Var s_s, ag::Var s_t, ag::Var s_d,
                       ParameterStore& params) {
    ag::Var alpha = t.row_softmax(pvar(t, params, "adapter/stf/w"));
    ag::Var affinities = t.concat_cols({s_s, s_t, s_d});
    ag::Var combined = t.matmul(affinities, t.reshape(alpha, 3, 1));
    ag::Var gate = t.sigmoid(combined);
    return t.col_mul(ident, gate);
}

ag::Var compose_prompts_graph(ag::Tape& t, ParameterStore& params) {
    return t.matmul_nt(pvar(t, params, "adapter/dspa/U"), pvar(t, params, "adapter/dspa/V"));
}

Mat stmf_identifiers(const std::vector<int>& node_ids,
                     const std::vector<int64_t>& patch_timestamps, ParameterStore& params,
                     const AdapterConfig& acfg) {
    for (int id : node_ids) {
        if (id < 0 || id >= acfg.n_nodes)
            throw DataError("stmf_identifiers: node id " + std::to_string(id) + " out of range");
    }
    PatchMeta meta = build_patch_meta(patch_timestamps, static_cast<int>(node_ids.size()), acfg);
    // remap the node axis to the requested ids
    for (size_t i = 0; i < node_ids.size(); ++i)
        for (int p = 0; p < meta.n_patches; ++p)
            meta.node_idx[i * meta.n_patches + p] = node_ids[i];
    ag::Tape t(false);
    return t.value(stmf_graph(t, meta, params, acfg));
}

Mat spatial_affinity(const Mat& ident, const PatchMeta& meta, ParameterStore& params) {
    ag::Tape t(false);
    return t.value(spatial_affinity_graph(t, t.input(ident), meta, params));
}

Mat temporal_affinity(const Mat& ident, const PatchMeta& meta, ParameterStore& params,
                      const AdapterConfig& acfg) {
    ag::Tape t(false);
    return t.value(temporal_affinity_graph(t, t.input(ident), meta, params, acfg));
}

Mat lagged_affinity(const Mat& ident, const PatchMeta& meta, ParameterStore& params,
                    const AdapterConfig& acfg) {
    ag::Tape t(false);
    return t.value(lagged_affinity_graph(t, t.input(ident), meta, params, acfg));
}

Mat stf_gate(const Mat& ident, const Mat& s_s, const Mat& s_t, const Mat& s_d,
             ParameterStore& params) {
    ag::Tape t(false);
    return t.value(
        stf_gate_graph(t, t.input(ident), t.input(s_s), t.input(s_t), t.input(s_d), params));
}

Mat compose_prompts(ParameterStore& params) {
    ag::Tape t(false);
    return t.value(compose_prompts_graph(t, params));
}

StaGraph build_sta_graph(ag::Tape& t, const PanelWindow& panel, ParameterStore& params,
                         const BackboneConfig& bcfg, const AdapterConfig& acfg,
                         const StaOptions& opt) {
    const int n_nodes = panel.context.rows;
    if (n_nodes != acfg.n_nodes)
        throw DataError("sta_forward: panel has " + std::to_string(n_nodes) +
                        " nodes but the adapter is configured for " +
                        std::to_string(acfg.n_nodes));
    const int ctx_len = panel.context.cols;
    if (ctx_len % bcfg.patch_len != 0)
        throw DataError("sta_forward: context length must be a multiple of patch_len");
    const int n_patches = ctx_len / bcfg.patch_len;
    if (n_patches < bcfg.min_ctx_patches || n_patches > bcfg.max_ctx_patches)
        throw DataError("sta_forward: context patch count out of [min_ctx, max_ctx]");
    if (static_cast<int>(panel.context_timestamps.size()) != ctx_len)
        throw DataError("sta_forward: context timestamps must match context length");
    const int base_mask = bcfg.max_ctx_patches - n_patches;

    const bool has_target = panel.target.size() > 0;
    int fut_count = bcfg.max_fut_patches;
    if (has_target) {
        if (panel.target.rows != n_nodes) throw DataError("sta_forward: target node mismatch");
        fut_count = (panel.target.cols + bcfg.patch_len - 1) / bcfg.patch_len;
        if (fut_count > bcfg.max_fut_patches)
            throw DataError("sta_forward: target horizon exceeds max_fut_patches");
    }

    // identifiers and gating, shared across nodes (rows node-major)
    ag::Var fused_ident{};
    bool have_ident = false;
    if (opt.ablations.use_stmf) {
        std::vector<int64_t> patch_ts(n_patches);
        for (int p = 0; p < n_patches; ++p)
            patch_ts[p] = panel.context_timestamps[static_cast<size_t>(p) * bcfg.patch_len];
        PatchMeta meta = build_patch_meta(patch_ts, n_nodes, acfg);
        ag::Var ident = stmf_graph(t, meta, params, acfg);
        if (opt.ablations.gate_bypass || !opt.ablations.use_stf) {
            fused_ident = ident;
        } else {
            ag::Var s_s = spatial_affinity_graph(t, ident, meta, params);
            ag::Var s_t = temporal_affinity_graph(t, ident, meta, params, acfg);
            ag::Var s_d = lagged_affinity_graph(t, ident, meta, params, acfg);
            fused_ident = stf_gate_graph(t, ident, s_s, s_t, s_d, params);
        }
        have_ident = true;
    }

    ag::Var prompts{};
    const bool use_prompts = opt.ablations.use_prompts;
    if (use_prompts) prompts = compose_prompts_graph(t, params);
    const int n_prompts = use_prompts ? acfg.n_prompts : 0;

    StaGraph g;
    g.fut_count = fut_count;
    std::vector<ag::Var> node_losses;
    for (int i = 0; i < n_nodes; ++i) {
        std::vector<double> ctx_vec(panel.context.row_ptr(i), panel.context.row_ptr(i) + ctx_len);
        auto [normed, stats] = backbone::instance_normalize(ctx_vec, bcfg.eps);
        g.stats.push_back(stats);
        Mat full(bcfg.max_ctx_patches, bcfg.patch_len);
        std::copy(normed.begin(), normed.end(), full.row_ptr(base_mask));
        backbone::TokenGraph tok = backbone::build_token_graph(t, full, base_mask, params, bcfg);

        ag::Var fused_tokens = tok.tokens;
        if (have_ident) {
            ag::Var node_ident = t.slice_rows(fused_ident, i * n_patches, n_patches);
            ag::Var pre = base_mask > 0 ? t.slice_rows(tok.tokens, 0, base_mask) : ag::Var{};
            ag::Var ctx_part = t.slice_rows(tok.tokens, base_mask, n_patches);
            ag::Var rest = t.slice_rows(tok.tokens, bcfg.max_ctx_patches,
                                        1 + bcfg.max_fut_patches);
            ag::Var fused_ctx = t.add(ctx_part, node_ident);
            fused_tokens = base_mask > 0 ? t.concat_rows({pre, fused_ctx, rest})
                                         : t.concat_rows({fused_ctx, rest});
        }

        std::vector<int> positions;
        positions.reserve(n_prompts + bcfg.n_tokens());
        for (int p = 0; p < n_prompts; ++p) positions.push_back(-1);  // un-rotated prefix
        for (int p = 0; p < bcfg.n_tokens(); ++p) positions.push_back(p);
        ag::Var seq = use_prompts ? t.concat_rows({prompts, fused_tokens}) : fused_tokens;

        ag::Var encoded = backbone::encoder_graph(t, seq, positions, params, bcfg,
                                                  opt.train_mode, opt.rng);
        const int first_future = n_prompts + bcfg.register_index() + 1;
        ag::Var pred =
            backbone::quantile_head_from(t, encoded, first_future, fut_count, params, bcfg);
        g.pred_norm.push_back(pred);

        if (has_target) {
            const double s = stats.sigma + bcfg.eps;
            Mat target_norm(panel.target.cols, 1);
            for (int k = 0; k < panel.target.cols; ++k)
                target_norm.v[k] = (panel.target.at(i, k) - stats.mu) / s;
            ag::Var pred_for_loss = pred;
            if (target_norm.rows < t.value(pred).rows)
                pred_for_loss = t.slice_rows(pred, 0, target_norm.rows);
            if (opt.loss_kind == LossKind::kPinball) {
                node_losses.push_back(t.pinball_loss(pred_for_loss, target_norm, bcfg.quantiles));
            } else {
                ag::Var med = t.slice_cols(pred_for_loss, bcfg.median_index(), 1);
                node_losses.push_back(t.l1_loss(med, target_norm));
            }
        }
    }
    if (has_target) {
        g.loss = node_losses.size() == 1 ? node_losses[0]
                                         : t.mean_all(t.concat_rows(node_losses));
        g.has_loss = true;
    }
    return g;
}

StaResult sta_forward(const PanelWindow& panel, ParameterStore& params,
                      const BackboneConfig& bcfg, const AdapterConfig& acfg,
                      const StaOptions& opt) {
    ag::Tape t(false);
    StaGraph g = build_sta_graph(t, panel, params, bcfg, acfg, opt);
    StaResult r;
    const int want_rows =
        panel.target.size() > 0 ? panel.target.cols : g.fut_count * bcfg.patch_len;
    for (size_t i = 0; i < g.pred_norm.size(); ++i) {
        Mat pred = t.value(g.pred_norm[i]);
        pred.rows = std::min(pred.rows, want_rows);
        pred.v.resize(static_cast<size_t>(pred.rows) * pred.cols);
        backbone::QuantileForecast f;
        f.values = backbone::denormalize(pred, g.stats[i], bcfg.eps);
        f.quantiles = bcfg.quantiles;
        r.per_node.push_back(std::move(f));
    }
    r.loss = g.has_loss ? t.value(g.loss).v[0] : 0.0;
    r.peak_alloc_bytes = t.peak_node_bytes();
    r.total_alloc_bytes = t.total_node_bytes();
    return r;
}

}  // namespace factost::adapter
