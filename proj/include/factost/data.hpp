#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "factost/backbone.hpp"
#include "factost/config.hpp"
#include "factost/mat.hpp"
#include "factost/rng.hpp"

namespace factost::data {

// N-node, T-step panel with calendar metadata. Values are NaN-free after
// ingestion; timestamps are strictly increasing with constant stride.
struct STDataset {
    Mat values;  // N x T
    std::vector<int64_t> timestamps;
    std::vector<std::string> node_ids;
    int64_t freq_seconds = 0;

    int n_nodes() const { return values.rows; }
    int n_steps() const { return values.cols; }
};

// ---- synthetic generation (kernel-composition style) ----

enum class SynthPrimitive { kSinusoid, kTrend, kSmoothNoise, kWhiteNoise };

struct SynthOptions {
    std::vector<SynthPrimitive> pool = {SynthPrimitive::kSinusoid, SynthPrimitive::kTrend,
                                        SynthPrimitive::kSmoothNoise, SynthPrimitive::kWhiteNoise};
    double min_period = 8.0;
    double max_period = 256.0;
    double amp_min = 0.5;
    double amp_max = 2.0;
    int max_components = 3;
};

std::vector<double> kernel_synth(Rng& rng, int length, const SynthOptions& opt = {});

// Panel of independent synthetic series (one per node).
STDataset make_synth_panel(uint64_t seed, int n_series, int length, int64_t freq_seconds,
                           const SynthOptions& opt = {});

// N nodes sharing a daily period with node-specific amplitude/phase/offset
// keyed to the node id, plus observation noise. freq_seconds must divide a
// day. weekend_boost > 0 additionally scales each node's amplitude on
// Saturdays/Sundays by a node-keyed factor, coupling the signal to the
// day-of-week calendar cycle.
STDataset make_daily_panel_fixture(uint64_t seed, int n_nodes, int n_steps, int64_t freq_seconds,
                                   double noise_std, double weekend_boost = 0.0);

// ---- CSV ingestion ----

// Header row: timestamp,<node>,...; rows time-ordered with constant stride.
STDataset load_csv(const std::string& path, bool forward_fill = false);
void save_csv(const STDataset& ds, const std::string& path);

// ---- calendar features ----

struct CalendarIndex {
    std::vector<int> idx;  // parallel to the declared cycles
};

int calendar_index(int64_t epoch_seconds, const std::string& cycle_name);
CalendarIndex calendar_features(int64_t epoch_seconds, const std::vector<CalendarCycle>& cycles);

// ---- windows and splits ----

struct WindowRef {
    int node = 0;
    int start = 0;  // context covers [start, start+L), target [start+L, start+L+H)
};

// Every valid window per node at the given stride within [t_begin, t_end).
std::vector<WindowRef> window_iter(const STDataset& ds, int ctx_len, int horizon, int stride,
                                   int t_begin = 0, int t_end = -1);

backbone::SeriesWindow make_window(const STDataset& ds, const WindowRef& ref, int ctx_len,
                                   int horizon);

struct SplitRanges {
    int train_end = 0;  // train = [0, train_end)
    int val_end = 0;    // val = [train_end, val_end), test = [val_end, T)
};

SplitRanges split(const STDataset& ds, double train_ratio, double val_ratio, double test_ratio);

}  // namespace factost::data
