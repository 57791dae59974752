#include "factost/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "factost/errors.hpp"

namespace factost::trainer {

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
    uint64_t x = a * 0x9e3779b97f4a7c15ull + b * 0xbf58476d1ce4e5b9ull + c + 1;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// Runs fn(item) over [0, n) on n_workers contiguous chunks; gradients are
// merged in worker order so results are independent of scheduling.
struct BatchRun {
    double loss_sum = 0.0;
    int nan_item = -1;
    std::vector<Mat> grads;
};

BatchRun run_batch(int n, int n_workers,
                   const std::function<double(int, std::vector<Mat>&)>& fn) {
    BatchRun out;
    if (n_workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) {
            const double loss = fn(i, out.grads);
            if (!std::isfinite(loss) && out.nan_item < 0) out.nan_item = i;
            out.loss_sum += loss;
        }
        return out;
    }
    const int workers = std::min(n_workers, n);
    std::vector<BatchRun> partial(workers);
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            const int lo = static_cast<int>(static_cast<int64_t>(n) * w / workers);
            const int hi = static_cast<int>(static_cast<int64_t>(n) * (w + 1) / workers);
            try {
                for (int i = lo; i < hi; ++i) {
                    const double loss = fn(i, partial[w].grads);
                    if (!std::isfinite(loss) && partial[w].nan_item < 0)
                        partial[w].nan_item = i;
                    partial[w].loss_sum += loss;
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (std::thread& th : threads) th.join();
    for (int w = 0; w < workers; ++w) {
        if (errors[w]) std::rethrow_exception(errors[w]);
    }
    for (int w = 0; w < workers; ++w) {
        out.loss_sum += partial[w].loss_sum;
        if (partial[w].nan_item >= 0 && out.nan_item < 0) out.nan_item = partial[w].nan_item;
        if (out.grads.size() < partial[w].grads.size()) out.grads.resize(partial[w].grads.size());
        for (size_t s = 0; s < partial[w].grads.size(); ++s) {
            if (partial[w].grads[s].size() == 0) continue;
            if (out.grads[s].size() == 0) {
                out.grads[s] = std::move(partial[w].grads[s]);
            } else {
                for (size_t k = 0; k < out.grads[s].size(); ++k)
                    out.grads[s].v[k] += partial[w].grads[s].v[k];
            }
        }
    }
    return out;
}

}  // namespace

double wsd_lr(int step, const TrainConfig& cfg) {
    if (cfg.total_steps <= 0) return cfg.peak_lr;
    const double total = static_cast<double>(cfg.total_steps);
    const double warmup_end = cfg.warmup_frac * total;
    if (warmup_end > 0.0 && step < warmup_end)
        return cfg.peak_lr * static_cast<double>(step) / warmup_end;
    const double decay_start = total * (1.0 - cfg.decay_frac);
    if (cfg.decay_frac <= 0.0 || static_cast<double>(step) <= decay_start) return cfg.peak_lr;
    const double u = (static_cast<double>(step) - decay_start) / (total - decay_start);
    return cfg.peak_lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(M_PI * u)));
}

CmrPartition cmr_partition(int n_total, double s) {
    if (s < 0.0 || s >= 1.0) throw ConfigError("cmr_partition: s must be in [0,1)");
    CmrPartition p;
    p.memory_count = static_cast<int>(std::floor(s * n_total));
    p.current_begin = p.memory_count;
    return p;
}

void ReplayBuffer::seed_from(const std::vector<int64_t>& items) {
    items_.clear();
    for (int64_t it : items) {
        if (static_cast<int>(items_.size()) >= capacity_) break;
        items_.push_back(it);
    }
    seen_ = static_cast<int64_t>(items_.size());
}

void ReplayBuffer::update(int64_t item, Rng& rng) {
    if (capacity_ <= 0) return;
    ++seen_;
    if (static_cast<int>(items_.size()) < capacity_) {
        items_.push_back(item);
        return;
    }
    // replace a uniform slot with probability capacity/seen
    const int64_t j = rng.uniform_int(0, seen_ - 1);
    if (j < capacity_) items_[static_cast<size_t>(j)] = item;
}

std::vector<int64_t> mix_batch(const std::vector<int64_t>& current, const ReplayBuffer& buffer,
                               double r_mix, Rng& rng) {
    if (r_mix < 0.0 || r_mix >= 1.0) throw ConfigError("mix_batch: r_mix must be in [0,1)");
    std::vector<int64_t> batch = current;
    int k = static_cast<int>(std::floor(r_mix * static_cast<double>(batch.size())));
    k = std::min<int>(k, static_cast<int>(buffer.items().size()));
    if (k <= 0) return batch;

    // k distinct batch positions (partial Fisher-Yates)
    std::vector<int> positions(batch.size());
    for (size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
    for (int i = 0; i < k; ++i) {
        const int j = static_cast<int>(
            rng.uniform_int(i, static_cast<int64_t>(positions.size()) - 1));
        std::swap(positions[i], positions[j]);
    }
    // k distinct buffer items
    std::vector<int> pick(buffer.items().size());
    for (size_t i = 0; i < pick.size(); ++i) pick[i] = static_cast<int>(i);
    for (int i = 0; i < k; ++i) {
        const int j =
            static_cast<int>(rng.uniform_int(i, static_cast<int64_t>(pick.size()) - 1));
        std::swap(pick[i], pick[j]);
    }
    for (int i = 0; i < k; ++i) batch[positions[i]] = buffer.items()[pick[i]];
    return batch;
}

AdamOptimizer::AdamOptimizer(ParameterStore& params, const TrainConfig& cfg)
    : beta1_(cfg.adam_beta1), beta2_(cfg.adam_beta2), eps_(cfg.adam_eps), clip_(cfg.grad_clip) {
    m_.reserve(params.count());
    v_.reserve(params.count());
    for (const auto& e : params.entries()) {
        m_.emplace_back(e.value.rows, e.value.cols);
        v_.emplace_back(e.value.rows, e.value.cols);
    }
}

void AdamOptimizer::step(ParameterStore& params, double lr,
                         const std::vector<std::string>& trainable_prefixes) {
    ++t_;
    // empty -> everything trainable; otherwise only entries under one of the
    // listed prefixes are updated.
    auto trainable = [&](const std::string& name) {
        if (trainable_prefixes.empty()) return true;
        for (const std::string& p : trainable_prefixes) {
            if (name.rfind(p, 0) == 0) return true;
        }
        return false;
    };

    if (clip_ > 0.0) {
        double sq = 0.0;
        for (int s = 0; s < params.count(); ++s) {
            if (!trainable(params.entries()[s].name)) continue;
            for (double gx : params.grad(s).v) sq += gx * gx;
        }
        const double norm = std::sqrt(sq);
        if (norm > clip_) {
            const double scale = clip_ / norm;
            for (int s = 0; s < params.count(); ++s)
                for (double& gx : params.grad(s).v) gx *= scale;
        }
    }

    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (int s = 0; s < params.count(); ++s) {
        if (!trainable(params.entries()[s].name)) continue;
        Mat& x = params.value(s);
        const Mat& gm = params.grad(s);
        Mat& m = m_[s];
        Mat& v = v_[s];
        for (size_t i = 0; i < x.size(); ++i) {
            m.v[i] = beta1_ * m.v[i] + (1.0 - beta1_) * gm.v[i];
            v.v[i] = beta2_ * v.v[i] + (1.0 - beta2_) * gm.v[i] * gm.v[i];
            const double mhat = m.v[i] / bc1;
            const double vhat = v.v[i] / bc2;
            x.v[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

TraceWriter::TraceWriter(const std::string& path) : path_(path) {
    if (!path_.empty()) {
        std::ofstream out(path_, std::ios::trunc);
        if (!out) throw DataError("cannot open trace file: " + path_);
    }
}

void TraceWriter::write(int step, double lr, double loss, const std::string& split,
                        const std::vector<std::pair<std::string, double>>& metrics) {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    out.precision(12);
    out << "{\"step\":" << step << ",\"lr\":" << lr << ",\"loss\":" << loss << ",\"split\":\""
        << split << "\"";
    for (const auto& [k, v] : metrics) out << ",\"" << k << "\":" << v;
    out << "}\n";
}

TrainResult train_utp(const data::STDataset& ds, ParameterStore& params,
                      const BackboneConfig& bcfg, const TrainConfig& tcfg,
                      const std::string& trace_path) {
    bcfg.validate();
    tcfg.validate();
    const int T = ds.n_steps();
    const int horizon = bcfg.max_horizon();
    const int usable_patches =
        std::min(bcfg.max_ctx_patches, (T - horizon) / bcfg.patch_len);
    if (usable_patches < bcfg.min_ctx_patches)
        throw DataError("train_utp: series too short for min context plus horizon");
    const int base_mask = bcfg.max_ctx_patches - usable_patches;

    Rng rng(tcfg.seed);
    AdamOptimizer opt(params, tcfg);
    TraceWriter trace(trace_path);
    TrainResult result;
    result.loss_trace.reserve(tcfg.total_steps);
    result.lr_trace.reserve(tcfg.total_steps);

    struct Spec {
        int node;
        int start;
        int ctx_len;
        int l_mask;
        uint64_t fwd_seed;
    };

    for (int step = 0; step < tcfg.total_steps; ++step) {
        const double lr = wsd_lr(step, tcfg);
        std::vector<Spec> specs(tcfg.batch_size);
        for (int b = 0; b < tcfg.batch_size; ++b) {
            Spec s;
            s.node = static_cast<int>(rng.uniform_int(0, ds.n_nodes() - 1));
            int l_mask = base_mask;
            if (tcfg.mask_sampling)
                l_mask += backbone::sample_mask_length(rng, bcfg.min_ctx_patches, usable_patches);
            s.l_mask = l_mask;
            s.ctx_len = (bcfg.max_ctx_patches - l_mask) * bcfg.patch_len;
            s.start = static_cast<int>(rng.uniform_int(0, T - s.ctx_len - horizon));
            s.fwd_seed = mix_seed(tcfg.seed, static_cast<uint64_t>(step),
                                  static_cast<uint64_t>(b));
            specs[b] = s;
        }

        auto item_fn = [&](int b, std::vector<Mat>& grads) -> double {
            const Spec& s = specs[b];
            backbone::SeriesWindow w =
                data::make_window(ds, data::WindowRef{s.node, s.start}, s.ctx_len, horizon);
            Rng fwd_rng(s.fwd_seed);
            ag::Tape t(true);
            backbone::UtpGraph g = backbone::build_utp_graph(
                t, w, params, bcfg, /*train_mode=*/true, &fwd_rng, tcfg.loss_kind,
                bcfg.max_ctx_patches - s.ctx_len / bcfg.patch_len);
            const double loss = t.value(g.loss).v[0];
            if (!std::isfinite(loss)) return loss;
            t.backward(g.loss);
            t.accumulate_param_grads(grads);
            return loss;
        };

        BatchRun run = run_batch(tcfg.batch_size, tcfg.n_workers, item_fn);
        if (run.nan_item >= 0)
            throw NumericError("train_utp: NaN loss at step " + std::to_string(step) +
                               " batch item " + std::to_string(run.nan_item));
        params.zero_grads();
        params.accumulate(run.grads, 1.0 / tcfg.batch_size);
        opt.step(params, lr);
        if (!params.values_finite())
            throw NumericError("train_utp: non-finite parameter after step " +
                               std::to_string(step));
        const double mean_loss = run.loss_sum / tcfg.batch_size;
        result.loss_trace.push_back(mean_loss);
        result.lr_trace.push_back(lr);
        if (trace.enabled() && (step % 10 == 0 || step + 1 == tcfg.total_steps))
            trace.write(step, lr, mean_loss, "train");
    }
    return result;
}

namespace {

double panel_val_mae(const data::STDataset& ds, ParameterStore& params,
                     const BackboneConfig& bcfg, const AdapterConfig& acfg,
                     const adapter::AblationSwitches& ablations, int ctx_len, int horizon,
                     int t_begin, int t_end, int stride) {
    double abs_sum = 0.0;
    int64_t n = 0;
    const int med = bcfg.median_index();
    for (int s = t_begin; s + ctx_len + horizon <= t_end; s += stride) {
        adapter::PanelWindow pw;
        pw.context = Mat(ds.n_nodes(), ctx_len);
        pw.target = Mat(ds.n_nodes(), horizon);
        for (int i = 0; i < ds.n_nodes(); ++i) {
            for (int k = 0; k < ctx_len; ++k) pw.context.at(i, k) = ds.values.at(i, s + k);
            for (int k = 0; k < horizon; ++k)
                pw.target.at(i, k) = ds.values.at(i, s + ctx_len + k);
        }
        pw.context_timestamps.assign(ds.timestamps.begin() + s,
                                     ds.timestamps.begin() + s + ctx_len);
        pw.target_timestamps.assign(ds.timestamps.begin() + s + ctx_len,
                                    ds.timestamps.begin() + s + ctx_len + horizon);
        adapter::StaOptions opt;
        opt.ablations = ablations;
        adapter::StaResult r = adapter::sta_forward(pw, params, bcfg, acfg, opt);
        for (int i = 0; i < ds.n_nodes(); ++i) {
            for (int k = 0; k < horizon; ++k) {
                abs_sum += std::fabs(r.per_node[i].values.at(k, med) - pw.target.at(i, k));
                ++n;
            }
        }
    }
    return n > 0 ? abs_sum / static_cast<double>(n) : 0.0;
}

}  // namespace

StaTrainResult train_sta(const data::STDataset& ds, ParameterStore& params,
                         const BackboneConfig& bcfg, const AdapterConfig& acfg,
                         const TrainConfig& tcfg, const StaTrainOptions& opt) {
    bcfg.validate();
    acfg.validate(bcfg.d_model);
    tcfg.validate();
    if (!opt.backbone_loaded && !opt.from_scratch)
        throw ConfigError(
            "train_sta: no pretrained backbone checkpoint was transferred; pass the scratch "
            "flag to adapt from random initialization");
    if (opt.ctx_len <= 0 || opt.horizon <= 0)
        throw ConfigError("train_sta: ctx_len and horizon must be positive");
    if (ds.n_nodes() != acfg.n_nodes)
        throw DataError("train_sta: dataset node count does not match adapter config");

    const data::SplitRanges ranges =
        data::split(ds, opt.train_ratio, opt.val_ratio, opt.test_ratio);
    if (ranges.train_end + opt.ctx_len + opt.horizon > ranges.val_end)
        throw DataError("train_sta: validation split has no room for a ctx+horizon window");

    // chronological panel window starts inside the training split
    std::vector<int> starts;
    for (int s = 0; s + opt.ctx_len + opt.horizon <= ranges.train_end; s += opt.stride)
        starts.push_back(s);
    if (starts.empty()) throw DataError("train_sta: no training windows fit the split");

    // trailing few-shot fraction
    if (opt.few_shot_frac <= 0.0 || opt.few_shot_frac > 1.0)
        throw ConfigError("train_sta: few_shot_frac must be in (0,1]");
    const int keep = std::max(
        1, static_cast<int>(std::floor(opt.few_shot_frac * static_cast<double>(starts.size()))));
    std::vector<int> few(starts.end() - keep, starts.end());

    // continual memory replay partition over the few-shot stream
    const CmrPartition part = cmr_partition(static_cast<int>(few.size()),
                                            tcfg.use_cmr ? tcfg.cmr_memory_frac : 0.0);
    ReplayBuffer buffer(part.memory_count);
    {
        std::vector<int64_t> seed_items(few.begin(), few.begin() + part.memory_count);
        buffer.seed_from(seed_items);
    }
    std::vector<int64_t> stream(few.begin() + part.current_begin, few.end());
    if (stream.empty()) stream.assign(few.begin(), few.end());

    Rng rng(tcfg.seed);
    AdamOptimizer adam(params, tcfg);
    TraceWriter trace(opt.trace_path);
    StaTrainResult result;
    result.trained_windows = static_cast<int>(few.size());

    std::vector<std::string> trainable_prefixes;
    if (acfg.backbone_frozen) trainable_prefixes = {"adapter/"};

    auto build_panel = [&](int s) {
        adapter::PanelWindow pw;
        pw.context = Mat(ds.n_nodes(), opt.ctx_len);
        pw.target = Mat(ds.n_nodes(), opt.horizon);
        for (int i = 0; i < ds.n_nodes(); ++i) {
            for (int k = 0; k < opt.ctx_len; ++k) pw.context.at(i, k) = ds.values.at(i, s + k);
            for (int k = 0; k < opt.horizon; ++k)
                pw.target.at(i, k) = ds.values.at(i, s + opt.ctx_len + k);
        }
        pw.context_timestamps.assign(ds.timestamps.begin() + s,
                                     ds.timestamps.begin() + s + opt.ctx_len);
        pw.target_timestamps.assign(ds.timestamps.begin() + s + opt.ctx_len,
                                    ds.timestamps.begin() + s + opt.ctx_len + opt.horizon);
        return pw;
    };

    size_t cursor = 0;  // chronological streaming over the current stream
    for (int step = 0; step < tcfg.total_steps; ++step) {
        const double lr = wsd_lr(step, tcfg);
        std::vector<int64_t> current(tcfg.batch_size);
        for (int b = 0; b < tcfg.batch_size; ++b) {
            current[b] = stream[cursor];
            cursor = (cursor + 1) % stream.size();
        }
        std::vector<int64_t> batch =
            tcfg.use_cmr ? mix_batch(current, buffer, tcfg.cmr_mix_ratio, rng) : current;
        std::vector<uint64_t> fwd_seeds(batch.size());
        for (size_t b = 0; b < batch.size(); ++b)
            fwd_seeds[b] = mix_seed(tcfg.seed, static_cast<uint64_t>(step), b);

        auto item_fn = [&](int b, std::vector<Mat>& grads) -> double {
            adapter::PanelWindow pw = build_panel(static_cast<int>(batch[b]));
            Rng fwd_rng(fwd_seeds[b]);
            adapter::StaOptions so;
            so.ablations = opt.ablations;
            so.loss_kind = tcfg.loss_kind;
            so.train_mode = true;
            so.rng = &fwd_rng;
            ag::Tape t(true);
            adapter::StaGraph g = adapter::build_sta_graph(t, pw, params, bcfg, acfg, so);
            const double loss = t.value(g.loss).v[0];
            if (!std::isfinite(loss)) return loss;
            t.backward(g.loss);
            t.accumulate_param_grads(grads);
            return loss;
        };

        BatchRun run = run_batch(static_cast<int>(batch.size()), tcfg.n_workers, item_fn);
        if (run.nan_item >= 0)
            throw NumericError("train_sta: NaN loss at step " + std::to_string(step) +
                               " batch item " + std::to_string(run.nan_item));
        params.zero_grads();
        params.accumulate(run.grads, 1.0 / static_cast<double>(batch.size()));
        adam.step(params, lr, trainable_prefixes);
        if (!params.values_finite())
            throw NumericError("train_sta: non-finite parameter after step " +
                               std::to_string(step));
        const double mean_loss = run.loss_sum / static_cast<double>(batch.size());
        result.loss_trace.push_back(mean_loss);

        if (tcfg.use_cmr) {
            for (int64_t item : current) buffer.update(item, rng);
        }

        const bool eval_now =
            (opt.eval_every > 0 && (step + 1) % opt.eval_every == 0) ||
            step + 1 == tcfg.total_steps;
        if (eval_now) {
            const double mae =
                panel_val_mae(ds, params, bcfg, acfg, opt.ablations, opt.ctx_len, opt.horizon,
                              ranges.train_end, ranges.val_end, opt.stride);
            result.val_mae_trace.push_back(mae);
            result.final_val_mae = mae;
            if (trace.enabled()) trace.write(step, lr, mean_loss, "val", {{"mae", mae}});
        } else if (trace.enabled() && step % 10 == 0) {
            trace.write(step, lr, mean_loss, "train");
        }
    }
    return result;
}

GradAuditReport grad_audit(const LossFn& fn, ParameterStore& params, double fd_step,
                           double tolerance) {
    GradAuditReport report;
    if (params.count() == 0) return report;

    params.zero_grads();
    fn(params, true);
    std::vector<Mat> analytic;
    analytic.reserve(params.count());
    for (const auto& e : params.entries()) analytic.push_back(e.grad);

    for (int s = 0; s < params.count(); ++s) {
        Mat& x = params.value(s);
        const std::string& name = params.entries()[s].name;
        for (size_t i = 0; i < x.size(); ++i) {
            const double saved = x.v[i];
            x.v[i] = saved + fd_step;
            const double up = fn(params, false);
            x.v[i] = saved - fd_step;
            const double dn = fn(params, false);
            x.v[i] = saved;
            const double fd = (up - dn) / (2.0 * fd_step);
            const double a = analytic[s].v[i];
            // relative error with a small-magnitude floor
            const double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-3});
            ++report.n_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = name;
            }
            if (rel >= tolerance) {
                report.pass = false;
                report.violations.push_back(
                    GradAuditItem{name, static_cast<int>(i), a, fd, rel});
            }
        }
    }
    return report;
}

}  // namespace factost::trainer
