#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "factost/adapter.hpp"
#include "factost/backbone.hpp"
#include "factost/data.hpp"

namespace factost::eval {

double mae(const Mat& pred, const Mat& truth);
double rmse(const Mat& pred, const Mat& truth);
double mae(const std::vector<double>& pred, const std::vector<double>& truth);

// Fraction of truth points inside [q_lo, q_hi]; the levels must be configured.
double interval_coverage(const backbone::QuantileForecast& qf, const std::vector<double>& truth,
                         double lo_q, double hi_q);

// Fraction of horizon points where any adjacent quantile pair is inverted.
double crossing_rate(const backbone::QuantileForecast& qf);

// Repeats the last context value across the horizon.
std::vector<double> persistence_baseline(const backbone::SeriesWindow& window, int horizon);

// Mean of training values sharing the same calendar cell; unseen cells fall
// back to the global training mean.
class HistoricalAverageBaseline {
public:
    HistoricalAverageBaseline(const data::STDataset& ds, const std::vector<CalendarCycle>& cycles,
                              int train_begin, int train_end);
    double predict(int64_t timestamp) const;
    std::vector<double> predict_series(const std::vector<int64_t>& timestamps) const;

private:
    std::vector<CalendarCycle> cycles_;
    std::map<std::vector<int>, std::pair<double, int64_t>> cells_;
    double global_mean_ = 0.0;
};

// ---- empirical linear-scaling probe ----

struct ScalingRow {
    int n_nodes = 0;
    double median_ms = 0.0;
    size_t peak_alloc_bytes = 0;
};

struct ScalingReport {
    std::vector<ScalingRow> rows;
    double loglog_slope = 0.0;  // time vs. N
};

// Times sta_forward over synthetic panels of increasing node count with the
// backbone held fixed. Single-threaded by contract; repeats are medians after
// warmup.
ScalingReport scaling_probe(const BackboneConfig& bcfg, const AdapterConfig& acfg_template,
                            const std::vector<int>& n_list, int ctx_len, int horizon,
                            int repeats = 5, int warmups = 2, uint64_t seed = 7);

// ---- window-set evaluation helpers ----

struct ForecastMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double pinball = 0.0;
    double coverage_lo_hi = 0.0;  // (0.1, 0.9) by default
    double crossing = 0.0;
    int64_t n_points = 0;
};

ForecastMetrics evaluate_windows(const std::vector<backbone::SeriesWindow>& windows,
                                 ParameterStore& params, const BackboneConfig& cfg,
                                 double lo_q = 0.1, double hi_q = 0.9);

double persistence_mae(const std::vector<backbone::SeriesWindow>& windows);

}  // namespace factost::eval
