#include "factost/backbone.hpp"

#include <cmath>
#include <string>

#include "factost/errors.hpp"

namespace factost::backbone {

namespace {

ag::Var pvar(ag::Tape& t, ParameterStore& params, const std::string& name) {
    return t.param(params.value(name), params.slot(name));
}

std::string layer_key(int layer, const std::string& tail) {
    return "layers/" + std::to_string(layer) + "/" + tail;
}

ag::RopeSpec rope_spec(const BackboneConfig& cfg) {
    return ag::RopeSpec{cfg.n_heads, cfg.d_head(), cfg.rope_dims(), cfg.rope_base};
}

// One pre-norm block: gated attention + residual, then GELU FFN + residual.
ag::Var encoder_layer(ag::Tape& t, ag::Var x, const std::vector<int>& positions,
                      ParameterStore& params, int layer, const BackboneConfig& cfg,
                      bool train_mode, Rng* rng, AttentionDebug* debug) {
    const int dh = cfg.d_head();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    ag::Var xn = t.layer_norm(x, pvar(t, params, layer_key(layer, "att/ln_g")),
                              pvar(t, params, layer_key(layer, "att/ln_b")), cfg.eps);
    ag::Var q = t.add_rowvec(t.matmul(xn, pvar(t, params, layer_key(layer, "att/Wq"))),
                             pvar(t, params, layer_key(layer, "att/bq")));
    ag::Var k = t.add_rowvec(t.matmul(xn, pvar(t, params, layer_key(layer, "att/Wk"))),
                             pvar(t, params, layer_key(layer, "att/bk")));
    ag::Var v = t.add_rowvec(t.matmul(xn, pvar(t, params, layer_key(layer, "att/Wv"))),
                             pvar(t, params, layer_key(layer, "att/bv")));
    ag::Var gate_pre = t.add_rowvec(t.matmul(xn, pvar(t, params, layer_key(layer, "att/Wg"))),
                                    pvar(t, params, layer_key(layer, "att/bg")));

    const ag::RopeSpec spec = rope_spec(cfg);
    ag::Var qr = t.rope(q, positions, spec);
    ag::Var kr = t.rope(k, positions, spec);

    std::vector<ag::Var> head_outs;
    head_outs.reserve(cfg.n_heads);
    for (int h = 0; h < cfg.n_heads; ++h) {
        ag::Var qh = t.slice_cols(qr, h * dh, dh);
        ag::Var kh = t.slice_cols(kr, h * dh, dh);
        ag::Var vh = t.slice_cols(v, h * dh, dh);
        ag::Var scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt_dh);
        if (!all_finite(t.value(scores)))
            throw NumericError("NaN in attention scores at layer " + std::to_string(layer) +
                               " head " + std::to_string(h));
        ag::Var attn = t.row_softmax(scores);
        if (debug) debug->head_attn.push_back(t.value(attn));
        head_outs.push_back(t.matmul(attn, vh));
    }
    ag::Var merged = cfg.n_heads == 1 ? head_outs[0] : t.concat_cols(head_outs);
    ag::Var gate = t.sigmoid(gate_pre);
    if (debug) debug->gate = t.value(gate);
    ag::Var gated = t.mul(merged, gate);
    ag::Var att_out = t.add_rowvec(t.matmul(gated, pvar(t, params, layer_key(layer, "att/Wo"))),
                                   pvar(t, params, layer_key(layer, "att/bo")));
    if (train_mode && cfg.dropout > 0.0 && rng) att_out = t.dropout(att_out, cfg.dropout, *rng);
    x = t.add(x, att_out);

    ag::Var yn = t.layer_norm(x, pvar(t, params, layer_key(layer, "ffn/ln_g")),
                              pvar(t, params, layer_key(layer, "ffn/ln_b")), cfg.eps);
    ag::Var h1 = t.gelu(t.add_rowvec(t.matmul(yn, pvar(t, params, layer_key(layer, "ffn/W1"))),
                                     pvar(t, params, layer_key(layer, "ffn/b1"))));
    ag::Var ffn_out = t.add_rowvec(t.matmul(h1, pvar(t, params, layer_key(layer, "ffn/W2"))),
                                   pvar(t, params, layer_key(layer, "ffn/b2")));
    if (train_mode && cfg.dropout > 0.0 && rng) ffn_out = t.dropout(ffn_out, cfg.dropout, *rng);
    return t.add(x, ffn_out);
}

}  // namespace

std::pair<std::vector<double>, NormStats> instance_normalize(const std::vector<double>& context,
                                                             double eps) {
    if (context.empty()) throw DataError("instance_normalize: empty context");
    double mu = 0.0;
    for (double x : context) {
        if (!std::isfinite(x)) throw DataError("instance_normalize: non-finite input value");
        mu += x;
    }
    mu /= static_cast<double>(context.size());
    double var = 0.0;
    for (double x : context) var += (x - mu) * (x - mu);
    var /= static_cast<double>(context.size());
    NormStats stats{mu, std::sqrt(var)};
    if (stats.sigma + eps <= 0.0)
        throw DataError("instance_normalize: sigma + eps must be positive");
    std::vector<double> normed(context.size());
    for (size_t i = 0; i < context.size(); ++i) normed[i] = (context[i] - mu) / (stats.sigma + eps);
    return {std::move(normed), stats};
}

Mat denormalize(const Mat& normed, const NormStats& stats, double eps) {
    Mat out = normed;
    const double s = stats.sigma + eps;
    for (double& x : out.v) x = x * s + stats.mu;
    return out;
}

std::vector<double> denormalize(const std::vector<double>& normed, const NormStats& stats,
                                double eps) {
    std::vector<double> out(normed.size());
    const double s = stats.sigma + eps;
    for (size_t i = 0; i < normed.size(); ++i) out[i] = normed[i] * s + stats.mu;
    return out;
}

Mat patchify(const std::vector<double>& normed, int patch_len) {
    if (patch_len <= 0) throw ConfigError("patchify: patch_len must be positive");
    if (normed.size() % static_cast<size_t>(patch_len) != 0)
        throw DataError("patchify: length " + std::to_string(normed.size()) +
                        " is not a multiple of patch_len " + std::to_string(patch_len));
    const int n = static_cast<int>(normed.size()) / patch_len;
    Mat out(n, patch_len);
    std::copy(normed.begin(), normed.end(), out.v.begin());
    return out;
}

int sample_mask_length(Rng& rng, int min_ctx, int max_ctx) {
    if (min_ctx > max_ctx) throw ConfigError("sample_mask_length: min_ctx > max_ctx");
    return static_cast<int>(rng.uniform_int(0, max_ctx - min_ctx));
}

std::vector<double> p_rope(const std::vector<double>& vec, int position,
                           const BackboneConfig& cfg) {
    const int dh = cfg.d_head();
    if (static_cast<int>(vec.size()) != dh) throw ConfigError("p_rope: expected a d_head vector");
    const int r_dim = cfg.rope_dims();
    std::vector<double> out = vec;
    for (int i = 0; i < r_dim / 2; ++i) {
        const double theta = std::pow(cfg.rope_base, -2.0 * i / static_cast<double>(dh));
        const double ang = position * theta;
        const double c = std::cos(ang), s = std::sin(ang);
        const double a = vec[2 * i], b = vec[2 * i + 1];
        out[2 * i] = a * c - b * s;
        out[2 * i + 1] = a * s + b * c;
    }
    return out;
}

double pinball_loss(const Mat& pred, const std::vector<double>& target,
                    const std::vector<double>& quantiles) {
    if (pred.rows != static_cast<int>(target.size()) ||
        pred.cols != static_cast<int>(quantiles.size()))
        throw DataError("pinball_loss: shape mismatch");
    double loss = 0.0;
    for (int h = 0; h < pred.rows; ++h) {
        const double y = target[h];
        for (int qi = 0; qi < pred.cols; ++qi) {
            const double e = y - pred.at(h, qi);
            const double q = quantiles[qi];
            loss += std::max((q - 1.0) * e, q * e);
        }
    }
    return loss / static_cast<double>(pred.size());
}

ParameterStore init_backbone_params(const BackboneConfig& cfg, uint64_t seed) {
    cfg.validate();
    ParameterStore store(seed);
    Rng rng(seed);
    add_backbone_params(store, cfg, rng);
    return store;
}

void add_backbone_params(ParameterStore& store, const BackboneConfig& cfg, Rng& rng) {
    const int d = cfg.d_model;
    const double std0 = 0.02;
    store.add("proj/W", trunc_normal_mat(cfg.patch_len, d, std0, rng));
    store.add("proj/b", Mat(1, d));
    store.add("embed/e_reg", trunc_normal_mat(1, d, std0, rng));
    store.add("embed/z_fut", trunc_normal_mat(1, d, std0, rng));
    for (int l = 0; l < cfg.n_layers; ++l) {
        store.add(layer_key(l, "att/ln_g"), Mat(1, d, 1.0));
        store.add(layer_key(l, "att/ln_b"), Mat(1, d));
        store.add(layer_key(l, "att/Wq"), trunc_normal_mat(d, d, std0, rng));
        store.add(layer_key(l, "att/bq"), Mat(1, d));
        store.add(layer_key(l, "att/Wk"), trunc_normal_mat(d, d, std0, rng));
        store.add(layer_key(l, "att/bk"), Mat(1, d));
        store.add(layer_key(l, "att/Wv"), trunc_normal_mat(d, d, std0, rng));
        store.add(layer_key(l, "att/bv"), Mat(1, d));
        store.add(layer_key(l, "att/Wg"), trunc_normal_mat(d, d, std0, rng));
        store.add(layer_key(l, "att/bg"), Mat(1, d, 2.0));  // gates start near-open
        store.add(layer_key(l, "att/Wo"), trunc_normal_mat(d, d, std0, rng));
        store.add(layer_key(l, "att/bo"), Mat(1, d));
        store.add(layer_key(l, "ffn/ln_g"), Mat(1, d, 1.0));
        store.add(layer_key(l, "ffn/ln_b"), Mat(1, d));
        store.add(layer_key(l, "ffn/W1"), trunc_normal_mat(d, cfg.d_ff, std0, rng));
        store.add(layer_key(l, "ffn/b1"), Mat(1, cfg.d_ff));
        store.add(layer_key(l, "ffn/W2"), trunc_normal_mat(cfg.d_ff, d, std0, rng));
        store.add(layer_key(l, "ffn/b2"), Mat(1, d));
    }
    const int out_cols = cfg.patch_len * static_cast<int>(cfg.quantiles.size());
    store.add("head/W", trunc_normal_mat(d, out_cols, std0, rng));
    store.add("head/b", Mat(1, out_cols));
}

TokenGraph build_token_graph(ag::Tape& t, const Mat& ctx_patches, int l_mask,
                             ParameterStore& params, const BackboneConfig& cfg) {
    if (ctx_patches.rows != cfg.max_ctx_patches || ctx_patches.cols != cfg.patch_len)
        throw DataError("build_token_sequence: context patches must be max_ctx_patches x patch_len");
    if (l_mask < 0 || l_mask > cfg.max_ctx_patches - cfg.min_ctx_patches)
        throw DataError("build_token_sequence: mask length " + std::to_string(l_mask) +
                        " out of range [0, " +
                        std::to_string(cfg.max_ctx_patches - cfg.min_ctx_patches) + "]");

    Mat masked = ctx_patches;
    for (int r = 0; r < l_mask; ++r)
        std::fill(masked.row_ptr(r), masked.row_ptr(r) + masked.cols, 0.0);

    ag::Var ctx_tokens = t.add_rowvec(t.matmul(t.input(std::move(masked)), pvar(t, params, "proj/W")),
                                      pvar(t, params, "proj/b"));
    ag::Var reg = pvar(t, params, "embed/e_reg");
    ag::Var fut = t.gather_rows(pvar(t, params, "embed/z_fut"),
                                std::vector<int>(cfg.max_fut_patches, 0));
    TokenGraph g;
    g.tokens = t.concat_rows({ctx_tokens, reg, fut});
    g.positions.resize(cfg.n_tokens());
    for (int i = 0; i < cfg.n_tokens(); ++i) g.positions[i] = i;
    g.valid_from = l_mask;
    return g;
}

TokenSequence build_token_sequence(const Mat& ctx_patches, int l_mask, ParameterStore& params,
                                   const BackboneConfig& cfg) {
    ag::Tape t(false);
    TokenGraph g = build_token_graph(t, ctx_patches, l_mask, params, cfg);
    TokenSequence seq;
    seq.tokens = t.value(g.tokens);
    seq.positions = g.positions;
    seq.valid_from = g.valid_from;
    return seq;
}

ag::Var encoder_graph(ag::Tape& t, ag::Var tokens, const std::vector<int>& positions,
                      ParameterStore& params, const BackboneConfig& cfg, bool train_mode,
                      Rng* dropout_rng, std::vector<AttentionDebug>* debug) {
    ag::Var x = tokens;
    for (int l = 0; l < cfg.n_layers; ++l) {
        AttentionDebug* dbg = nullptr;
        if (debug) {
            debug->emplace_back();
            dbg = &debug->back();
        }
        x = encoder_layer(t, x, positions, params, l, cfg, train_mode, dropout_rng, dbg);
    }
    return x;
}

Mat gated_attention(const TokenSequence& seq, ParameterStore& params, int layer,
                    const BackboneConfig& cfg, AttentionDebug* debug) {
    ag::Tape t(false);
    ag::Var x = t.input(seq.tokens);
    // attention sub-block only: pre-norm, attention, residual is excluded here;
    // callers get the raw gated-attention output of Eq. (attention * gate).
    const int dh = cfg.d_head();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    ag::Var q = t.add_rowvec(t.matmul(x, pvar(t, params, layer_key(layer, "att/Wq"))),
                             pvar(t, params, layer_key(layer, "att/bq")));
    ag::Var k = t.add_rowvec(t.matmul(x, pvar(t, params, layer_key(layer, "att/Wk"))),
                             pvar(t, params, layer_key(layer, "att/bk")));
    ag::Var v = t.add_rowvec(t.matmul(x, pvar(t, params, layer_key(layer, "att/Wv"))),
                             pvar(t, params, layer_key(layer, "att/bv")));
    ag::Var gate_pre = t.add_rowvec(t.matmul(x, pvar(t, params, layer_key(layer, "att/Wg"))),
                                    pvar(t, params, layer_key(layer, "att/bg")));
    const ag::RopeSpec spec = rope_spec(cfg);
    ag::Var qr = t.rope(q, seq.positions, spec);
    ag::Var kr = t.rope(k, seq.positions, spec);
    std::vector<ag::Var> head_outs;
    for (int h = 0; h < cfg.n_heads; ++h) {
        ag::Var qh = t.slice_cols(qr, h * dh, dh);
        ag::Var kh = t.slice_cols(kr, h * dh, dh);
        ag::Var vh = t.slice_cols(v, h * dh, dh);
        ag::Var scores = t.scale(t.matmul_nt(qh, kh), inv_sqrt_dh);
        if (!all_finite(t.value(scores)))
            throw NumericError("NaN in attention scores at layer " + std::to_string(layer) +
                               " head " + std::to_string(h));
        ag::Var attn = t.row_softmax(scores);
        if (debug) debug->head_attn.push_back(t.value(attn));
        head_outs.push_back(t.matmul(attn, vh));
    }
    ag::Var merged = cfg.n_heads == 1 ? head_outs[0] : t.concat_cols(head_outs);
    ag::Var gate = t.sigmoid(gate_pre);
    if (debug) debug->gate = t.value(gate);
    ag::Var gated = t.mul(merged, gate);
    ag::Var out = t.add_rowvec(t.matmul(gated, pvar(t, params, layer_key(layer, "att/Wo"))),
                               pvar(t, params, layer_key(layer, "att/bo")));
    return t.value(out);
}

Mat encoder_forward(const TokenSequence& seq, ParameterStore& params, const BackboneConfig& cfg,
                    bool train_mode, Rng* dropout_rng) {
    ag::Tape t(false);
    ag::Var x = t.input(seq.tokens);
    ag::Var out = encoder_graph(t, x, seq.positions, params, cfg, train_mode, dropout_rng);
    return t.value(out);
}

ag::Var quantile_head_from(ag::Tape& t, ag::Var encoded, int first_future_row, int fut_count,
                           ParameterStore& params, const BackboneConfig& cfg) {
    if (fut_count < 1 || fut_count > cfg.max_fut_patches)
        throw DataError("quantile_head: horizon of " + std::to_string(fut_count) +
                        " future patches exceeds max_fut_patches=" +
                        std::to_string(cfg.max_fut_patches) + "; use rolling_forecast");
    const int n_q = static_cast<int>(cfg.quantiles.size());
    ag::Var fut = t.slice_rows(encoded, first_future_row, fut_count);
    ag::Var flat = t.add_rowvec(t.matmul(fut, pvar(t, params, "head/W")),
                                pvar(t, params, "head/b"));
    // head columns are laid out patch-major: col = step_in_patch * n_q + q
    return t.reshape(flat, fut_count * cfg.patch_len, n_q);
}

ag::Var quantile_head_graph(ag::Tape& t, ag::Var encoded, int fut_count, ParameterStore& params,
                            const BackboneConfig& cfg) {
    return quantile_head_from(t, encoded, cfg.register_index() + 1, fut_count, params, cfg);
}

Mat quantile_head(const Mat& encoded, int fut_count, ParameterStore& params,
                  const BackboneConfig& cfg) {
    ag::Tape t(false);
    ag::Var enc = t.input(encoded);
    return t.value(quantile_head_graph(t, enc, fut_count, params, cfg));
}

UtpGraph build_utp_graph(ag::Tape& t, const SeriesWindow& window, ParameterStore& params,
                         const BackboneConfig& cfg, bool train_mode, Rng* rng,
                         LossKind loss_kind, int l_mask_override, int fut_count_override) {
    if (window.context.empty()) throw DataError("utp_forward: empty context");
    if (static_cast<int>(window.context.size()) > cfg.max_context())
        throw DataError("utp_forward: context longer than max capacity " +
                        std::to_string(cfg.max_context()));

    auto [normed, stats] = instance_normalize(window.context, cfg.eps);
    Mat ctx = patchify(normed, cfg.patch_len);
    const int ctx_patches = ctx.rows;
    const int base_mask = cfg.max_ctx_patches - ctx_patches;
    if (ctx_patches < cfg.min_ctx_patches)
        throw DataError("utp_forward: context shorter than min capacity " +
                        std::to_string(cfg.min_ctx_patches * cfg.patch_len));

    int l_mask;
    if (l_mask_override >= 0) {
        if (l_mask_override < base_mask)
            throw DataError("utp_forward: mask override smaller than unused prefix");
        l_mask = l_mask_override;
    } else if (train_mode && rng) {
        // dynamically sampled mask; never below the unused prefix
        l_mask = base_mask + sample_mask_length(*rng, cfg.min_ctx_patches,
                                                cfg.max_ctx_patches - base_mask);
    } else {
        l_mask = base_mask;
    }

    // right-align the context in the fixed-capacity slots
    Mat full(cfg.max_ctx_patches, cfg.patch_len);
    std::copy(ctx.v.begin(), ctx.v.end(), full.row_ptr(base_mask));

    UtpGraph g;
    g.stats = stats;
    g.l_mask = l_mask;
    g.tokens = build_token_graph(t, full, l_mask, params, cfg);
    g.encoded = encoder_graph(t, g.tokens.tokens, g.tokens.positions, params, cfg, train_mode, rng);

    int fut_count = fut_count_override;
    if (fut_count < 0) {
        const int target_len = static_cast<int>(window.target.size());
        fut_count = target_len > 0 ? (target_len + cfg.patch_len - 1) / cfg.patch_len
                                   : cfg.max_fut_patches;
    }
    g.fut_count = fut_count;
    g.pred_norm = quantile_head_graph(t, g.encoded, fut_count, params, cfg);

    if (!window.target.empty()) {
        if (static_cast<int>(window.target.size()) > fut_count * cfg.patch_len)
            throw DataError("utp_forward: target longer than requested horizon");
        const double s = stats.sigma + cfg.eps;
        Mat target_norm(static_cast<int>(window.target.size()), 1);
        for (size_t i = 0; i < window.target.size(); ++i)
            target_norm.v[i] = (window.target[i] - stats.mu) / s;
        ag::Var pred_for_loss = g.pred_norm;
        if (target_norm.rows < t.value(g.pred_norm).rows)
            pred_for_loss = t.slice_rows(g.pred_norm, 0, target_norm.rows);
        if (loss_kind == LossKind::kPinball) {
            g.loss = t.pinball_loss(pred_for_loss, target_norm, cfg.quantiles);
        } else {
            ag::Var med = t.slice_cols(pred_for_loss, cfg.median_index(), 1);
            g.loss = t.l1_loss(med, target_norm);
        }
        g.has_loss = true;
    }
    return g;
}

UtpResult utp_forward(const SeriesWindow& window, ParameterStore& params,
                      const BackboneConfig& cfg, Rng* rng, bool train_mode, LossKind loss_kind) {
    ag::Tape t(false);
    UtpGraph g = build_utp_graph(t, window, params, cfg, train_mode, rng, loss_kind);
    UtpResult r;
    r.stats = g.stats;
    const int want_rows = window.target.empty() ? g.fut_count * cfg.patch_len
                                                : static_cast<int>(window.target.size());
    Mat pred = t.value(g.pred_norm);
    pred.rows = std::min(pred.rows, want_rows);
    pred.v.resize(static_cast<size_t>(pred.rows) * pred.cols);
    r.forecast.values = denormalize(pred, g.stats, cfg.eps);
    r.forecast.quantiles = cfg.quantiles;
    r.loss = g.has_loss ? t.value(g.loss).v[0] : 0.0;
    return r;
}

QuantileForecast rolling_forecast(const SeriesWindow& window, ParameterStore& params,
                                  const BackboneConfig& cfg, int total_horizon) {
    if (total_horizon <= 0) throw DataError("rolling_forecast: total_horizon must be positive");
    const int n_q = static_cast<int>(cfg.quantiles.size());
    const int med = cfg.median_index();
    QuantileForecast out;
    out.quantiles = cfg.quantiles;
    out.values = Mat(total_horizon, n_q);

    std::vector<double> ctx = window.context;
    int done = 0;
    while (done < total_horizon) {
        const int remaining = total_horizon - done;
        const int chunk_patches =
            std::min(cfg.max_fut_patches, (remaining + cfg.patch_len - 1) / cfg.patch_len);
        const int chunk = chunk_patches * cfg.patch_len;

        SeriesWindow w;
        w.context = ctx;
        ag::Tape t(false);
        UtpGraph g = build_utp_graph(t, w, params, cfg, /*train_mode=*/false, nullptr,
                                     LossKind::kPinball, -1, chunk_patches);
        Mat pred = denormalize(t.value(g.pred_norm), g.stats, cfg.eps);

        const int take = std::min(chunk, remaining);
        for (int i = 0; i < take; ++i)
            for (int qi = 0; qi < n_q; ++qi) out.values.at(done + i, qi) = pred.at(i, qi);
        done += take;

        // feed the median path back as context, trimming to capacity
        for (int i = 0; i < chunk; ++i) ctx.push_back(pred.at(i, med));
        if (static_cast<int>(ctx.size()) > cfg.max_context())
            ctx.erase(ctx.begin(), ctx.end() - cfg.max_context());
    }
    return out;
}

}  // namespace factost::backbone
