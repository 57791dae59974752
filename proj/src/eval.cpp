#include "factost/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "factost/errors.hpp"

namespace factost::eval {

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* what) {
    if (!a.same_shape(b)) throw DataError(std::string(what) + ": shape mismatch");
}

int quantile_index(const std::vector<double>& levels, double q) {
    for (size_t i = 0; i < levels.size(); ++i) {
        if (std::fabs(levels[i] - q) < 1e-9) return static_cast<int>(i);
    }
    throw DataError("quantile level " + std::to_string(q) + " is not configured");
}

}  // namespace

double mae(const Mat& pred, const Mat& truth) {
    require_same_shape(pred, truth, "mae");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred.v[i] - truth.v[i]);
    return s / static_cast<double>(pred.size());
}

double rmse(const Mat& pred, const Mat& truth) {
    require_same_shape(pred, truth, "rmse");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double e = pred.v[i] - truth.v[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size()) throw DataError("mae: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

double interval_coverage(const backbone::QuantileForecast& qf, const std::vector<double>& truth,
                         double lo_q, double hi_q) {
    if (lo_q >= hi_q) throw DataError("interval_coverage: lo_q must be < hi_q");
    const int lo = quantile_index(qf.quantiles, lo_q);
    const int hi = quantile_index(qf.quantiles, hi_q);
    if (static_cast<int>(truth.size()) != qf.values.rows)
        throw DataError("interval_coverage: truth length mismatch");
    int64_t inside = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        const int r = static_cast<int>(i);
        if (truth[i] >= qf.values.at(r, lo) && truth[i] <= qf.values.at(r, hi)) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(truth.size());
}

double crossing_rate(const backbone::QuantileForecast& qf) {
    if (qf.values.cols < 2) throw DataError("crossing_rate: need at least 2 quantile levels");
    int64_t crossed = 0;
    for (int r = 0; r < qf.values.rows; ++r) {
        for (int c = 0; c + 1 < qf.values.cols; ++c) {
            if (qf.values.at(r, c) > qf.values.at(r, c + 1)) {
                ++crossed;
                break;
            }
        }
    }
    return qf.values.rows == 0 ? 0.0
                               : static_cast<double>(crossed) / static_cast<double>(qf.values.rows);
}

std::vector<double> persistence_baseline(const backbone::SeriesWindow& window, int horizon) {
    if (window.context.empty()) throw DataError("persistence_baseline: empty context");
    return std::vector<double>(static_cast<size_t>(horizon), window.context.back());
}

HistoricalAverageBaseline::HistoricalAverageBaseline(const data::STDataset& ds,
                                                     const std::vector<CalendarCycle>& cycles,
                                                     int train_begin, int train_end)
    : cycles_(cycles) {
    double total = 0.0;
    int64_t count = 0;
    for (int t = train_begin; t < train_end; ++t) {
        const data::CalendarIndex ci = data::calendar_features(ds.timestamps[t], cycles_);
        auto& cell = cells_[ci.idx];
        for (int i = 0; i < ds.n_nodes(); ++i) {
            cell.first += ds.values.at(i, t);
            cell.second += 1;
            total += ds.values.at(i, t);
            ++count;
        }
    }
    global_mean_ = count > 0 ? total / static_cast<double>(count) : 0.0;
    for (auto& [key, cell] : cells_) cell.first /= static_cast<double>(cell.second);
}

double HistoricalAverageBaseline::predict(int64_t timestamp) const {
    const data::CalendarIndex ci = data::calendar_features(timestamp, cycles_);
    auto it = cells_.find(ci.idx);
    return it == cells_.end() ? global_mean_ : it->second.first;
}

std::vector<double> HistoricalAverageBaseline::predict_series(
    const std::vector<int64_t>& timestamps) const {
    std::vector<double> out;
    out.reserve(timestamps.size());
    for (int64_t t : timestamps) out.push_back(predict(t));
    return out;
}

ScalingReport scaling_probe(const BackboneConfig& bcfg, const AdapterConfig& acfg_template,
                            const std::vector<int>& n_list, int ctx_len, int horizon,
                            int repeats, int warmups, uint64_t seed) {
    if (n_list.size() < 3) throw ConfigError("scaling_probe: need at least 3 node counts");
    for (size_t i = 1; i < n_list.size(); ++i) {
        if (n_list[i] <= n_list[i - 1])
            throw ConfigError("scaling_probe: node counts must be increasing");
    }
    ScalingReport report;
    for (int n : n_list) {
        AdapterConfig acfg = acfg_template;
        acfg.n_nodes = n;
        Rng rng(seed);
        ParameterStore params(seed);
        backbone::add_backbone_params(params, bcfg, rng);
        adapter::add_adapter_params(params, acfg, bcfg.d_model, rng);

        adapter::PanelWindow pw;
        pw.context = Mat(n, ctx_len);
        Rng data_rng(seed + static_cast<uint64_t>(n));
        for (double& x : pw.context.v) x = data_rng.normal();
        pw.context_timestamps.resize(ctx_len);
        for (int k = 0; k < ctx_len; ++k)
            pw.context_timestamps[k] = static_cast<int64_t>(k) * 3600;
        (void)horizon;  // forecasts run at the full head horizon

        adapter::StaOptions opt;  // inference, everything enabled
        size_t peak = 0;
        std::vector<double> times;
        for (int r = 0; r < warmups + repeats; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            adapter::StaResult res = adapter::sta_forward(pw, params, bcfg, acfg, opt);
            const auto t1 = std::chrono::steady_clock::now();
            peak = res.peak_alloc_bytes;
            if (r >= warmups)
                times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(times.begin(), times.end());
        ScalingRow row;
        row.n_nodes = n;
        row.median_ms = times[times.size() / 2];
        row.peak_alloc_bytes = peak;
        report.rows.push_back(row);
    }
    // least-squares slope in log-log space
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(report.rows.size());
    for (const ScalingRow& r : report.rows) {
        const double x = std::log(static_cast<double>(r.n_nodes));
        const double y = std::log(r.median_ms);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    report.loglog_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return report;
}

ForecastMetrics evaluate_windows(const std::vector<backbone::SeriesWindow>& windows,
                                 ParameterStore& params, const BackboneConfig& cfg,
                                 double lo_q, double hi_q) {
    ForecastMetrics out;
    const int med = cfg.median_index();
    double abs_sum = 0.0, sq_sum = 0.0, pin_sum = 0.0, cov_sum = 0.0, cross_sum = 0.0;
    int64_t n_windows = 0;
    for (const backbone::SeriesWindow& w : windows) {
        backbone::UtpResult r = backbone::utp_forward(w, params, cfg, nullptr, false);
        const int h = static_cast<int>(w.target.size());
        for (int k = 0; k < h; ++k) {
            const double e = r.forecast.values.at(k, med) - w.target[k];
            abs_sum += std::fabs(e);
            sq_sum += e * e;
            ++out.n_points;
        }
        pin_sum += backbone::pinball_loss(r.forecast.values, w.target, cfg.quantiles);
        cov_sum += interval_coverage(r.forecast, w.target, lo_q, hi_q);
        cross_sum += crossing_rate(r.forecast);
        ++n_windows;
    }
    if (out.n_points > 0) {
        out.mae = abs_sum / static_cast<double>(out.n_points);
        out.rmse = std::sqrt(sq_sum / static_cast<double>(out.n_points));
    }
    if (n_windows > 0) {
        out.pinball = pin_sum / static_cast<double>(n_windows);
        out.coverage_lo_hi = cov_sum / static_cast<double>(n_windows);
        out.crossing = cross_sum / static_cast<double>(n_windows);
    }
    return out;
}

double persistence_mae(const std::vector<backbone::SeriesWindow>& windows) {
    double abs_sum = 0.0;
    int64_t n = 0;
    for (const backbone::SeriesWindow& w : windows) {
        const std::vector<double> pred =
            persistence_baseline(w, static_cast<int>(w.target.size()));
        for (size_t k = 0; k < w.target.size(); ++k) {
            abs_sum += std::fabs(pred[k] - w.target[k]);
            ++n;
        }
    }
    return n > 0 ? abs_sum / static_cast<double>(n) : 0.0;
}

}  // namespace factost::eval
