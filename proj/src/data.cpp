#include "factost/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "factost/errors.hpp"

namespace factost::data {

namespace {

std::vector<double> sinusoid(Rng& rng, int length, const SynthOptions& opt) {
    const double period =
        opt.min_period * std::pow(opt.max_period / opt.min_period, rng.uniform());
    const double amp = rng.uniform(opt.amp_min, opt.amp_max);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    std::vector<double> out(length);
    for (int i = 0; i < length; ++i) out[i] = amp * std::sin(2.0 * M_PI * i / period + phase);
    return out;
}

std::vector<double> linear_trend(Rng& rng, int length, const SynthOptions& opt) {
    const double total = rng.uniform(-opt.amp_max, opt.amp_max);  // rise over the whole window
    const double slope = total / std::max(1, length - 1);
    const double offset = rng.uniform(-opt.amp_max, opt.amp_max);
    std::vector<double> out(length);
    for (int i = 0; i < length; ++i) out[i] = offset + slope * i;
    return out;
}

std::vector<double> smooth_noise(Rng& rng, int length, const SynthOptions& opt) {
    // AR(1) with strong correlation, scaled to the amplitude range
    const double rho = rng.uniform(0.9, 0.99);
    const double amp = rng.uniform(opt.amp_min, opt.amp_max);
    std::vector<double> out(length);
    double x = 0.0;
    const double innov = std::sqrt(1.0 - rho * rho);
    for (int i = 0; i < length; ++i) {
        x = rho * x + innov * rng.normal();
        out[i] = amp * x;
    }
    return out;
}

std::vector<double> white_noise(Rng& rng, int length, const SynthOptions& opt) {
    const double amp = rng.uniform(0.1, 0.5 * opt.amp_max);
    std::vector<double> out(length);
    for (int i = 0; i < length; ++i) out[i] = amp * rng.normal();
    return out;
}

std::vector<double> draw_primitive(Rng& rng, int length, const SynthOptions& opt) {
    const SynthPrimitive p = opt.pool[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(opt.pool.size()) - 1))];
    switch (p) {
        case SynthPrimitive::kSinusoid: return sinusoid(rng, length, opt);
        case SynthPrimitive::kTrend: return linear_trend(rng, length, opt);
        case SynthPrimitive::kSmoothNoise: return smooth_noise(rng, length, opt);
        case SynthPrimitive::kWhiteNoise: return white_noise(rng, length, opt);
    }
    throw DataError("kernel_synth: unknown primitive");
}

// Howard Hinnant's civil-from-days.
void civil_from_days(int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const int64_t doe = z - era * 146097;
    const int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t yy = yoe + era * 400;
    const int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const int64_t mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    y = static_cast<int>(yy + (m <= 2));
}

int64_t floor_div(int64_t a, int64_t b) {
    int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// splits on commas, preserving empty fields (including a trailing one)
std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    size_t begin = 0;
    while (true) {
        const size_t comma = line.find(',', begin);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(begin));
            break;
        }
        cells.push_back(line.substr(begin, comma - begin));
        begin = comma + 1;
    }
    return cells;
}

}  // namespace

std::vector<double> kernel_synth(Rng& rng, int length, const SynthOptions& opt) {
    if (length < 16) throw DataError("kernel_synth: length must be >= 16");
    if (opt.pool.empty()) throw DataError("kernel_synth: empty primitive pool");
    const int n_components =
        static_cast<int>(rng.uniform_int(1, std::max(1, opt.max_components)));
    std::vector<double> out = draw_primitive(rng, length, opt);
    for (int c = 1; c < n_components; ++c) {
        const std::vector<double> comp = draw_primitive(rng, length, opt);
        const bool multiply = rng.uniform() < 0.5;
        for (int i = 0; i < length; ++i) {
            if (multiply)
                out[i] *= 1.0 + 0.5 * comp[i];  // bounded modulation keeps products tame
            else
                out[i] += comp[i];
        }
    }
    for (double x : out) {
        if (!std::isfinite(x)) throw NumericError("kernel_synth produced a non-finite value");
    }
    return out;
}

STDataset make_synth_panel(uint64_t seed, int n_series, int length, int64_t freq_seconds,
                           const SynthOptions& opt) {
    STDataset ds;
    ds.freq_seconds = freq_seconds;
    ds.values = Mat(n_series, length);
    ds.timestamps.resize(length);
    for (int t = 0; t < length; ++t) ds.timestamps[t] = static_cast<int64_t>(t) * freq_seconds;
    ds.node_ids.resize(n_series);
    for (int i = 0; i < n_series; ++i) {
        ds.node_ids[i] = "s" + std::to_string(i);
        Rng rng(seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(i) + 1);
        const std::vector<double> series = kernel_synth(rng, length, opt);
        std::copy(series.begin(), series.end(), ds.values.row_ptr(i));
    }
    return ds;
}

STDataset make_daily_panel_fixture(uint64_t seed, int n_nodes, int n_steps, int64_t freq_seconds,
                                   double noise_std, double weekend_boost) {
    if (86400 % freq_seconds != 0)
        throw DataError("daily fixture: freq_seconds must divide 86400");
    STDataset ds;
    ds.freq_seconds = freq_seconds;
    ds.values = Mat(n_nodes, n_steps);
    ds.timestamps.resize(n_steps);
    for (int t = 0; t < n_steps; ++t) ds.timestamps[t] = static_cast<int64_t>(t) * freq_seconds;
    ds.node_ids.resize(n_nodes);
    Rng rng(seed);
    const double steps_per_day = 86400.0 / static_cast<double>(freq_seconds);
    for (int i = 0; i < n_nodes; ++i) {
        ds.node_ids[i] = "n" + std::to_string(i);
        // amplitude, phase, offset and weekend factor keyed to the node id
        const double amp = 1.0 + 0.6 * std::sin(0.7 + 2.39996 * i);
        const double phase = 2.0 * M_PI * i / n_nodes;
        const double offset = 2.0 * std::cos(1.3 + 1.17 * i);
        const double wk = weekend_boost * (0.75 + 0.5 * std::sin(2.1 + 1.93 * i));
        for (int t = 0; t < n_steps; ++t) {
            const double day_pos = 2.0 * M_PI * t / steps_per_day;
            double a = amp;
            if (wk != 0.0) {
                const int dow = calendar_index(ds.timestamps[t], "day_of_week");
                if (dow >= 5) a *= 1.0 + wk;
            }
            ds.values.at(i, t) =
                offset + a * std::sin(day_pos + phase) + noise_std * rng.normal();
        }
    }
    return ds;
}

STDataset load_csv(const std::string& path, bool forward_fill) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open csv: " + path);
    std::string line;
    // '#' lines carry the echoed run configuration and are skipped
    do {
        if (!std::getline(in, line)) throw DataError("empty csv: " + path);
        if (!line.empty() && line.back() == '\r') line.pop_back();
    } while (!line.empty() && line[0] == '#');

    STDataset ds;
    {
        std::istringstream header(line);
        std::string cell;
        bool first = true;
        while (std::getline(header, cell, ',')) {
            if (first) {
                if (cell != "timestamp")
                    throw DataError("csv header must start with 'timestamp', got '" + cell + "'");
                first = false;
            } else {
                ds.node_ids.push_back(cell);
            }
        }
        if (ds.node_ids.empty()) throw DataError("csv has no node columns: " + path);
    }
    const int n = static_cast<int>(ds.node_ids.size());

    std::vector<int64_t> ts;
    std::vector<std::vector<double>> cols(n);
    std::vector<double> last_seen(n, std::nan(""));
    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const std::vector<std::string> cells = split_cells(line);
        int64_t t;
        try {
            size_t pos = 0;
            t = std::stoll(cells[0], &pos);
            if (pos != cells[0].size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw DataError("row " + std::to_string(row_no) + ": unparsable timestamp '" +
                            cells[0] + "'");
        }
        ts.push_back(t);
        int got = 0;
        for (size_t ci = 1; ci < cells.size(); ++ci) {
            const std::string& cell = cells[ci];
            if (got >= n)
                throw DataError("row " + std::to_string(row_no) + ": too many columns");
            double v;
            bool missing = cell.empty();
            if (!missing) {
                try {
                    size_t pos = 0;
                    v = std::stod(cell, &pos);
                    if (pos != cell.size()) throw std::invalid_argument("");
                } catch (const std::exception&) {
                    throw DataError("row " + std::to_string(row_no) + ": unparsable number '" +
                                    cell + "'");
                }
                if (std::isnan(v)) missing = true;
            }
            if (missing) {
                if (!forward_fill || std::isnan(last_seen[got]))
                    throw DataError("row " + std::to_string(row_no) + ": missing value in column " +
                                    ds.node_ids[got]);
                v = last_seen[got];
            }
            last_seen[got] = v;
            cols[got].push_back(v);
            ++got;
        }
        if (got != n)
            throw DataError("row " + std::to_string(row_no) + ": expected " + std::to_string(n) +
                            " values, got " + std::to_string(got));
    }
    if (ts.size() < 2) throw DataError("csv must contain at least 2 data rows: " + path);

    const int64_t stride = ts[1] - ts[0];
    if (stride <= 0) throw DataError("row 3: timestamps must be strictly increasing");
    for (size_t i = 1; i < ts.size(); ++i) {
        if (ts[i] - ts[i - 1] != stride)
            throw DataError("row " + std::to_string(i + 2) + ": timestamp stride violation (" +
                            std::to_string(ts[i] - ts[i - 1]) + " != " + std::to_string(stride) +
                            ")");
    }
    ds.freq_seconds = stride;
    ds.timestamps = std::move(ts);
    const int T = static_cast<int>(ds.timestamps.size());
    ds.values = Mat(n, T);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < T; ++t) ds.values.at(i, t) = cols[i][t];
    return ds;
}

void save_csv(const STDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + path);
    out << "timestamp";
    for (const std::string& id : ds.node_ids) out << "," << id;
    out << "\n";
    out.precision(17);
    for (int t = 0; t < ds.n_steps(); ++t) {
        out << ds.timestamps[t];
        for (int i = 0; i < ds.n_nodes(); ++i) out << "," << ds.values.at(i, t);
        out << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

int calendar_index(int64_t epoch_seconds, const std::string& cycle_name) {
    const int64_t days = floor_div(epoch_seconds, 86400);
    const int64_t sod = epoch_seconds - days * 86400;
    if (cycle_name == "minute_of_hour") return static_cast<int>((sod / 60) % 60);
    if (cycle_name == "time_of_day") return static_cast<int>(sod / 3600);
    if (cycle_name == "day_of_week") {
        // epoch day 0 is a Thursday; Monday = 0
        return static_cast<int>(((days % 7) + 7 + 3) % 7);
    }
    int y, m, d;
    civil_from_days(days, y, m, d);
    if (cycle_name == "week_of_month") return std::min(3, (d - 1) / 7);
    if (cycle_name == "month_of_year") return m - 1;
    throw ConfigError("unknown calendar cycle: " + cycle_name);
}

CalendarIndex calendar_features(int64_t epoch_seconds, const std::vector<CalendarCycle>& cycles) {
    CalendarIndex out;
    out.idx.reserve(cycles.size());
    for (const CalendarCycle& c : cycles) {
        const int idx = calendar_index(epoch_seconds, c.name);
        if (idx < 0 || idx >= c.cardinality)
            throw DataError("calendar index out of range for cycle " + c.name);
        out.idx.push_back(idx);
    }
    return out;
}

std::vector<WindowRef> window_iter(const STDataset& ds, int ctx_len, int horizon, int stride,
                                   int t_begin, int t_end) {
    if (t_end < 0) t_end = ds.n_steps();
    if (stride <= 0) throw ConfigError("window_iter: stride must be positive");
    const int span = t_end - t_begin;
    if (ctx_len + horizon > span)
        throw DataError("window_iter: L+H = " + std::to_string(ctx_len + horizon) +
                        " exceeds available range of " + std::to_string(span) + " steps");
    std::vector<WindowRef> out;
    for (int i = 0; i < ds.n_nodes(); ++i) {
        for (int s = t_begin; s + ctx_len + horizon <= t_end; s += stride)
            out.push_back(WindowRef{i, s});
    }
    return out;
}

backbone::SeriesWindow make_window(const STDataset& ds, const WindowRef& ref, int ctx_len,
                                   int horizon) {
    backbone::SeriesWindow w;
    w.context.resize(ctx_len);
    w.target.resize(horizon);
    w.context_timestamps.resize(ctx_len);
    w.target_timestamps.resize(horizon);
    for (int i = 0; i < ctx_len; ++i) {
        w.context[i] = ds.values.at(ref.node, ref.start + i);
        w.context_timestamps[i] = ds.timestamps[ref.start + i];
    }
    for (int i = 0; i < horizon; ++i) {
        w.target[i] = ds.values.at(ref.node, ref.start + ctx_len + i);
        w.target_timestamps[i] = ds.timestamps[ref.start + ctx_len + i];
    }
    return w;
}

SplitRanges split(const STDataset& ds, double train_ratio, double val_ratio, double test_ratio) {
    if (train_ratio <= 0.0 || val_ratio <= 0.0 || test_ratio <= 0.0)
        throw ConfigError("split: all ratios must be positive");
    if (std::fabs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
        throw ConfigError("split: ratios must sum to 1");
    const int T = ds.n_steps();
    SplitRanges r;
    r.train_end = static_cast<int>(std::floor(T * train_ratio));
    r.val_end = static_cast<int>(std::floor(T * (train_ratio + val_ratio)));
    if (r.train_end <= 0 || r.val_end <= r.train_end || r.val_end >= T)
        throw ConfigError("split: a split range is empty for T=" + std::to_string(T));
    return r;
}

}  // namespace factost::data
