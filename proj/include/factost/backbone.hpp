#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "factost/config.hpp"
#include "factost/params.hpp"
#include "factost/tape.hpp"

namespace factost::backbone {

// Context-only normalization statistics (Eq. of instance normalization).
struct NormStats {
    double mu = 0.0;
    double sigma = 0.0;
};

// One univariate (context, target) pair. Lengths are multiples of patch_len;
// timestamps are epoch seconds with constant stride.
struct SeriesWindow {
    std::vector<double> context;
    std::vector<double> target;
    std::vector<int64_t> context_timestamps;
    std::vector<int64_t> target_timestamps;
};

// Fixed-capacity token layout: masked context patches | register | future
// placeholders. valid_from is the first unmasked context slot.
struct TokenSequence {
    Mat tokens;                  // n_tokens x d_model
    std::vector<int> positions;  // absolute patch positions for p-RoPE
    int valid_from = 0;
};

struct QuantileForecast {
    Mat values;  // H x |quantiles|, original (denormalized) scale
    std::vector<double> quantiles;
};

// ---- elementary operations ----

std::pair<std::vector<double>, NormStats> instance_normalize(const std::vector<double>& context,
                                                             double eps);
Mat denormalize(const Mat& normed, const NormStats& stats, double eps);
std::vector<double> denormalize(const std::vector<double>& normed, const NormStats& stats,
                                double eps);

Mat patchify(const std::vector<double>& normed, int patch_len);

int sample_mask_length(Rng& rng, int min_ctx, int max_ctx);

// Plain (rotation-only) p-RoPE on one head vector; used directly by tests
// and indirectly (via Tape::rope) by the encoder.
std::vector<double> p_rope(const std::vector<double>& vec, int position,
                           const BackboneConfig& cfg);

double pinball_loss(const Mat& pred, const std::vector<double>& target,
                    const std::vector<double>& quantiles);

// ---- parameter construction ----

ParameterStore init_backbone_params(const BackboneConfig& cfg, uint64_t seed);
// Adds backbone entries to an existing store (used when composing with the adapter).
void add_backbone_params(ParameterStore& store, const BackboneConfig& cfg, Rng& rng);

// ---- graph-level pieces (shared by inference and training) ----

struct TokenGraph {
    ag::Var tokens;
    std::vector<int> positions;
    int valid_from = 0;
};

// ctx_patches must have exactly max_ctx_patches rows; the first l_mask rows
// are zeroed before projection.
TokenGraph build_token_graph(ag::Tape& t, const Mat& ctx_patches, int l_mask,
                             ParameterStore& params, const BackboneConfig& cfg);

// Convenience wrapper producing a concrete TokenSequence.
TokenSequence build_token_sequence(const Mat& ctx_patches, int l_mask, ParameterStore& params,
                                   const BackboneConfig& cfg);

// Optional capture of per-layer attention internals for tests/diagnostics.
struct AttentionDebug {
    std::vector<Mat> head_attn;  // one n_tokens x n_tokens matrix per head
    Mat gate;                    // sigmoid(G), n_tokens x d_model
};

ag::Var encoder_graph(ag::Tape& t, ag::Var tokens, const std::vector<int>& positions,
                      ParameterStore& params, const BackboneConfig& cfg, bool train_mode,
                      Rng* dropout_rng, std::vector<AttentionDebug>* debug = nullptr);

// Single gated-attention block applied to a built token sequence (one layer's
// parameters), exposed for direct testing of the attention contract.
Mat gated_attention(const TokenSequence& seq, ParameterStore& params, int layer,
                    const BackboneConfig& cfg, AttentionDebug* debug = nullptr);

Mat encoder_forward(const TokenSequence& seq, ParameterStore& params, const BackboneConfig& cfg,
                    bool train_mode, Rng* dropout_rng = nullptr);

// Reads the first fut_count future-slot representations and maps each through
// the shared affine head; output is fut_count*patch_len x |quantiles|,
// normalized scale.
ag::Var quantile_head_graph(ag::Tape& t, ag::Var encoded, int fut_count, ParameterStore& params,
                            const BackboneConfig& cfg);
// Variant for token layouts with a prefix (e.g. prompt tokens): future slots
// start at first_future_row instead of register_index()+1.
ag::Var quantile_head_from(ag::Tape& t, ag::Var encoded, int first_future_row, int fut_count,
                           ParameterStore& params, const BackboneConfig& cfg);
Mat quantile_head(const Mat& encoded, int fut_count, ParameterStore& params,
                  const BackboneConfig& cfg);

// ---- assembled pipeline ----

struct UtpGraph {
    TokenGraph tokens;
    ag::Var encoded;
    ag::Var pred_norm;  // fut_count*patch_len x |Q|
    NormStats stats;
    int fut_count = 0;
    int l_mask = 0;
    ag::Var loss;  // valid only when has_loss
    bool has_loss = false;
};

// l_mask_override: -1 derives the mask (sampled in train mode, deterministic
// unused-prefix mask at inference).
UtpGraph build_utp_graph(ag::Tape& t, const SeriesWindow& window, ParameterStore& params,
                         const BackboneConfig& cfg, bool train_mode, Rng* rng,
                         LossKind loss_kind = LossKind::kPinball, int l_mask_override = -1,
                         int fut_count_override = -1);

struct UtpResult {
    QuantileForecast forecast;
    double loss = 0.0;
    NormStats stats;
};

UtpResult utp_forward(const SeriesWindow& window, ParameterStore& params,
                      const BackboneConfig& cfg, Rng* rng, bool train_mode,
                      LossKind loss_kind = LossKind::kPinball);

QuantileForecast rolling_forecast(const SeriesWindow& window, ParameterStore& params,
                                  const BackboneConfig& cfg, int total_horizon);

}  // namespace factost::backbone
