// Acceptance suite: runs every criterion end to end and prints one line per
// criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "factost/adapter.hpp"
#include "factost/backbone.hpp"
#include "factost/checkpoint.hpp"
#include "factost/data.hpp"
#include "factost/errors.hpp"
#include "factost/eval.hpp"
#include "factost/trainer.hpp"

using namespace factost;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, x);
    return buf;
}

const std::string kWorkDir = "/tmp/factost_acceptance";

// ---------- shared desk-scale artifacts (criteria 5-7, 9) ----------

BackboneConfig desk_backbone_cfg() {
    BackboneConfig cfg;
    cfg.d_model = 64;
    cfg.d_ff = 256;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.patch_len = 16;
    cfg.max_ctx_patches = 32;  // context capacity 512
    cfg.max_fut_patches = 4;   // horizon capacity 64
    cfg.min_ctx_patches = 4;
    cfg.dropout = 0.05;
    return cfg;
}

TrainConfig desk_train_cfg(bool mask_sampling) {
    TrainConfig tcfg;
    tcfg.peak_lr = 5e-4;
    tcfg.batch_size = 24;
    tcfg.total_steps = 4000;
    tcfg.seed = 17;
    tcfg.n_workers = 2;
    tcfg.mask_sampling = mask_sampling;
    return tcfg;
}

// Held-out windows anchored at forecast origin 512 with the given context.
std::vector<backbone::SeriesWindow> held_out_windows(const data::STDataset& ds, int ctx) {
    std::vector<backbone::SeriesWindow> out;
    for (int i = 0; i < ds.n_nodes(); ++i) {
        backbone::SeriesWindow w;
        w.context.assign(ds.values.row_ptr(i) + (512 - ctx), ds.values.row_ptr(i) + 512);
        w.target.assign(ds.values.row_ptr(i) + 512, ds.values.row_ptr(i) + 576);
        out.push_back(std::move(w));
    }
    return out;
}

struct DeskModels {
    ParameterStore masked{0};
    ParameterStore unmasked{0};
    bool trained = false;
    double masked_minutes = 0.0;
};

DeskModels& desk_models() {
    static DeskModels m;
    return m;
}

void ensure_desk_models() {
    DeskModels& m = desk_models();
    if (m.trained) return;
    const BackboneConfig bcfg = desk_backbone_cfg();
    const data::STDataset corpus = data::make_synth_panel(41, 2000, 512, 3600);

    const std::string masked_path = kWorkDir + "/desk_backbone.fsv2";
    const std::string unmasked_path = kWorkDir + "/desk_backbone_nomask.fsv2";
    // models are saved and reloaded so every later criterion sees exactly the
    // checkpointed (float32) weights
    auto train_one = [&](bool mask, const std::string& path, double* minutes) {
        ParameterStore params = backbone::init_backbone_params(bcfg, 17);
        const auto t0 = std::chrono::steady_clock::now();
        trainer::train_utp(corpus, params, bcfg, desk_train_cfg(mask));
        if (minutes) *minutes = elapsed_s(t0) / 60.0;
        KvDoc doc;
        bcfg.to_kv(doc);
        save_checkpoint(path, params, doc);
        const CheckpointContents back = load_checkpoint(path);
        ParameterStore reloaded(0);
        for (const auto& e : back.params.entries()) reloaded.add(e.name, e.value);
        return reloaded;
    };
    m.masked = train_one(true, masked_path, &m.masked_minutes);
    m.unmasked = train_one(false, unmasked_path, nullptr);
    m.trained = true;
}

// ---------- criterion 1 ----------

Outcome criterion1() {
    BackboneConfig bcfg;
    bcfg.d_model = 8;
    bcfg.d_ff = 16;
    bcfg.n_layers = 1;
    bcfg.n_heads = 1;
    bcfg.patch_len = 4;
    bcfg.max_ctx_patches = 4;
    bcfg.max_fut_patches = 2;
    bcfg.min_ctx_patches = 2;
    bcfg.quantiles = {0.1, 0.5, 0.9};
    bcfg.rope_fraction = 0.8;  // d_head=8 -> 6 rotated dims
    bcfg.dropout = 0.0;

    AdapterConfig acfg;
    acfg.n_nodes = 3;
    acfg.id_dim = 4;
    acfg.n_prompts = 2;
    acfg.prompt_rank = 2;
    acfg.n_prototypes = 2;
    acfg.max_lag = 2;
    acfg.calendar_cycles = {{"time_of_day", 24}, {"day_of_week", 7}};

    const double fd_step = 1e-4, tol = 1e-3;
    double worst = 0.0;
    size_t checked = 0;
    int instances = 0;
    std::string worst_param;

    for (int inst = 0; inst < 20; ++inst) {
        const uint64_t seed = 1000 + 17 * inst;
        // backbone pipeline: pinball of the full utp forward
        {
            ParameterStore params = backbone::init_backbone_params(bcfg, seed);
            Rng data_rng(seed + 7);
            backbone::SeriesWindow w;
            w.context.resize(3 * bcfg.patch_len);
            for (double& x : w.context) x = data_rng.normal();
            w.target.resize(bcfg.max_horizon());
            for (double& x : w.target) x = data_rng.normal();
            auto fn = [&](ParameterStore& p, bool with_grad) {
                ag::Tape t(with_grad);
                backbone::UtpGraph g = backbone::build_utp_graph(t, w, p, bcfg, false, nullptr);
                if (with_grad) {
                    t.backward(g.loss);
                    p.zero_grads();
                    std::vector<Mat> grads;
                    t.accumulate_param_grads(grads);
                    p.accumulate(grads);
                }
                return t.value(g.loss).v[0];
            };
            const trainer::GradAuditReport rep = trainer::grad_audit(fn, params, fd_step, tol);
            checked += rep.n_checked;
            if (rep.max_rel_err > worst) {
                worst = rep.max_rel_err;
                worst_param = rep.worst_param;
            }
            if (!rep.pass) return {false, "backbone audit violation at instance " +
                                              std::to_string(inst) + " (" + rep.worst_param +
                                              ", rel err " + fmt(rep.max_rel_err, 6) + ")"};
        }
        // adapted pipeline: L1-median of the full sta forward
        {
            ParameterStore params(seed);
            Rng rng(seed);
            backbone::add_backbone_params(params, bcfg, rng);
            adapter::add_adapter_params(params, acfg, bcfg.d_model, rng);
            Rng data_rng(seed + 13);
            adapter::PanelWindow pw;
            pw.context = Mat(acfg.n_nodes, 3 * bcfg.patch_len);
            for (double& x : pw.context.v) x = data_rng.normal();
            pw.target = Mat(acfg.n_nodes, bcfg.patch_len);
            for (double& x : pw.target.v) x = data_rng.normal();
            pw.context_timestamps.resize(3 * bcfg.patch_len);
            for (size_t k = 0; k < pw.context_timestamps.size(); ++k)
                pw.context_timestamps[k] = 3600LL * static_cast<int64_t>(k);
            auto fn = [&](ParameterStore& p, bool with_grad) {
                ag::Tape t(with_grad);
                adapter::StaOptions so;
                so.loss_kind = LossKind::kL1Median;
                adapter::StaGraph g = adapter::build_sta_graph(t, pw, p, bcfg, acfg, so);
                if (with_grad) {
                    t.backward(g.loss);
                    p.zero_grads();
                    std::vector<Mat> grads;
                    t.accumulate_param_grads(grads);
                    p.accumulate(grads);
                }
                return t.value(g.loss).v[0];
            };
            const trainer::GradAuditReport rep = trainer::grad_audit(fn, params, fd_step, tol);
            checked += rep.n_checked;
            if (rep.max_rel_err > worst) {
                worst = rep.max_rel_err;
                worst_param = rep.worst_param;
            }
            if (!rep.pass) return {false, "adapter audit violation at instance " +
                                              std::to_string(inst) + " (" + rep.worst_param +
                                              ", rel err " + fmt(rep.max_rel_err, 6) + ")"};
        }
        ++instances;
    }
    return {true, std::to_string(instances) + " instances, " + std::to_string(checked) +
                      " parameter gradients, max rel err " + fmt(worst, 7) + " (" + worst_param +
                      ")"};
}

// ---------- criterion 2 ----------

Outcome criterion2() {
    Rng rng(2025);
    for (int inst = 0; inst < 1000; ++inst) {
        const int h = static_cast<int>(rng.uniform_int(1, 12));
        const int nq = static_cast<int>(rng.uniform_int(2, 7));
        std::vector<double> qs(nq);
        double q0 = rng.uniform(0.01, 0.2);
        for (int i = 0; i < nq; ++i) {
            qs[i] = q0;
            q0 += rng.uniform(0.01, 0.7 / nq);
        }
        Mat pred(h, nq);
        for (double& x : pred.v) x = rng.normal(0.0, 3.0);
        std::vector<double> truth(h);
        for (double& x : truth) x = rng.normal(0.0, 3.0);

        // pinball: brute-force two-branch evaluation
        {
            double want = 0.0;
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < nq; ++c) {
                    const double e = truth[r] - pred.at(r, c);
                    const double b1 = (qs[c] - 1.0) * e, b2 = qs[c] * e;
                    want += b1 > b2 ? b1 : b2;
                }
            want /= static_cast<double>(h * nq);
            if (backbone::pinball_loss(pred, truth, qs) != want)
                return {false, "pinball mismatch at instance " + std::to_string(inst)};
        }
        // mae / rmse: loop references
        {
            Mat t2(h, nq);
            for (double& x : t2.v) x = rng.normal(0.0, 3.0);
            double abs_sum = 0.0, sq = 0.0;
            for (size_t i = 0; i < pred.size(); ++i) {
                abs_sum += std::fabs(pred.v[i] - t2.v[i]);
                sq += (pred.v[i] - t2.v[i]) * (pred.v[i] - t2.v[i]);
            }
            if (eval::mae(pred, t2) != abs_sum / static_cast<double>(pred.size()))
                return {false, "mae mismatch at instance " + std::to_string(inst)};
            if (eval::rmse(pred, t2) != std::sqrt(sq / static_cast<double>(pred.size())))
                return {false, "rmse mismatch at instance " + std::to_string(inst)};
        }
        // crossing rate: loop reference
        {
            backbone::QuantileForecast qf;
            qf.quantiles = qs;
            qf.values = pred;
            int64_t crossed = 0;
            for (int r = 0; r < h; ++r) {
                bool any = false;
                for (int c = 0; c + 1 < nq; ++c) any |= pred.at(r, c) > pred.at(r, c + 1);
                crossed += any ? 1 : 0;
            }
            if (eval::crossing_rate(qf) != static_cast<double>(crossed) / h)
                return {false, "crossing mismatch at instance " + std::to_string(inst)};
        }
    }
    return {true, "pinball, MAE, RMSE, crossing exact on 1000 random instances"};
}

// ---------- criterion 3 ----------

Outcome criterion3() {
    BackboneConfig cfg;
    cfg.d_model = 32;
    cfg.n_heads = 2;  // d_head = 16, r_dim = 12
    cfg.rope_fraction = 0.75;
    Rng rng(3);
    double worst_shift = 0.0;
    for (int inst = 0; inst < 1000; ++inst) {
        std::vector<double> q(cfg.d_head()), k(cfg.d_head());
        for (double& x : q) x = rng.normal();
        for (double& x : k) x = rng.normal();
        const int m = static_cast<int>(rng.uniform_int(0, 256));
        const int n = static_cast<int>(rng.uniform_int(0, 256));
        const int s = static_cast<int>(rng.uniform_int(0, 128));

        const std::vector<double> q0 = backbone::p_rope(q, 0, cfg);
        for (int i = 0; i < cfg.d_head(); ++i) {
            if (q0[i] != q[i]) return {false, "position-0 identity violated"};
        }
        const std::vector<double> qm = backbone::p_rope(q, m, cfg);
        for (int i = cfg.rope_dims(); i < cfg.d_head(); ++i) {
            if (qm[i] != q[i]) return {false, "low-frequency tail modified"};
        }
        auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
            double acc = 0.0;
            for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
            return acc;
        };
        const double d1 = dot(qm, backbone::p_rope(k, n, cfg));
        const double d2 =
            dot(backbone::p_rope(q, m + s, cfg), backbone::p_rope(k, n + s, cfg));
        worst_shift = std::max(worst_shift, std::fabs(d1 - d2));
        if (std::fabs(d1 - d2) > 1e-6)
            return {false, "shift invariance violated: " + fmt(std::fabs(d1 - d2), 9)};
    }
    return {true, "1000 tuples; worst shift-invariance gap " + fmt(worst_shift, 9)};
}

// ---------- criterion 4 ----------

Outcome criterion4() {
    BackboneConfig cfg;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.patch_len = 8;
    cfg.max_ctx_patches = 6;
    cfg.max_fut_patches = 2;
    cfg.min_ctx_patches = 2;
    cfg.quantiles = {0.1, 0.5, 0.9};
    cfg.dropout = 0.0;

    // gate saturation
    double worst_gate = 0.0;
    {
        ParameterStore params = backbone::init_backbone_params(cfg, 4004);
        Rng rng(44);
        Mat ctx(cfg.max_ctx_patches, cfg.patch_len);
        for (double& x : ctx.v) x = rng.normal();
        const backbone::TokenSequence seq =
            backbone::build_token_sequence(ctx, 0, params, cfg);
        params.value("layers/0/att/Wg").fill(0.0);
        params.value("layers/0/att/bg").fill(20.0);
        const Mat gated = backbone::gated_attention(seq, params, 0, cfg);
        ParameterStore open_params = backbone::init_backbone_params(cfg, 4004);
        open_params.value("layers/0/att/Wg").fill(0.0);
        open_params.value("layers/0/att/bg").fill(1e9);  // gate == 1 numerically
        const Mat ungated = backbone::gated_attention(seq, open_params, 0, cfg);
        for (size_t i = 0; i < gated.size(); ++i)
            worst_gate = std::max(worst_gate, std::fabs(gated.v[i] - ungated.v[i]));
        if (worst_gate > 1e-6) return {false, "gate bypass gap " + fmt(worst_gate, 9)};
    }

    // adapter-off equivalence
    AdapterConfig acfg;
    acfg.n_nodes = 4;
    acfg.id_dim = 4;
    acfg.n_prompts = 2;
    acfg.prompt_rank = 2;
    acfg.n_prototypes = 2;
    acfg.max_lag = 2;
    acfg.calendar_cycles = {{"time_of_day", 24}};
    ParameterStore params(4040);
    Rng rng(4040);
    backbone::add_backbone_params(params, cfg, rng);
    adapter::add_adapter_params(params, acfg, cfg.d_model, rng);
    params.value("adapter/stmf/E_n").fill(0.0);
    params.value("adapter/stmf/E_c/time_of_day").fill(0.0);

    adapter::PanelWindow pw;
    const int ctx_len = 4 * cfg.patch_len;
    pw.context = Mat(acfg.n_nodes, ctx_len);
    Rng drng(4);
    for (double& x : pw.context.v) x = drng.normal();
    pw.context_timestamps.resize(ctx_len);
    for (int k = 0; k < ctx_len; ++k) pw.context_timestamps[k] = 3600LL * k;

    adapter::StaOptions opt;
    opt.ablations.gate_bypass = true;
    opt.ablations.use_prompts = false;
    const adapter::StaResult r = adapter::sta_forward(pw, params, cfg, acfg, opt);
    double worst_off = 0.0;
    for (int i = 0; i < acfg.n_nodes; ++i) {
        backbone::SeriesWindow w;
        w.context.assign(pw.context.row_ptr(i), pw.context.row_ptr(i) + ctx_len);
        const backbone::UtpResult solo = backbone::utp_forward(w, params, cfg, nullptr, false);
        for (size_t k = 0; k < solo.forecast.values.size(); ++k)
            worst_off = std::max(
                worst_off, std::fabs(r.per_node[i].values.v[k] - solo.forecast.values.v[k]));
    }
    if (worst_off > 1e-6) return {false, "adapter-off gap " + fmt(worst_off, 9)};
    return {true, "gate-bypass gap " + fmt(worst_gate, 9) + ", adapter-off gap " +
                      fmt(worst_off, 9)};
}

// ---------- criterion 5 ----------

Outcome criterion5() {
    ensure_desk_models();
    const BackboneConfig bcfg = desk_backbone_cfg();
    const data::STDataset held = data::make_synth_panel(999, 300, 576, 3600);
    // longest in-distribution context drawn from length-512 training series
    const int ctx = 448;
    const std::vector<backbone::SeriesWindow> windows = held_out_windows(held, ctx);
    const eval::ForecastMetrics m =
        eval::evaluate_windows(windows, desk_models().masked, bcfg);
    const double pers = eval::persistence_mae(windows);
    const double ratio = m.mae / pers;
    const bool beats = ratio <= 0.80;
    const bool covered = m.coverage_lo_hi >= 0.70 && m.coverage_lo_hi <= 0.90;
    const bool in_time = desk_models().masked_minutes < 30.0;
    const std::string detail = "MAE " + fmt(m.mae) + " vs persistence " + fmt(pers) +
                               " (ratio " + fmt(ratio, 3) + ", need <=0.80); coverage " +
                               fmt(m.coverage_lo_hi, 3) + " in [0.70,0.90]; trained in " +
                               fmt(desk_models().masked_minutes, 1) + " min";
    return {beats && covered && in_time, detail};
}

// ---------- criterion 6 ----------

Outcome criterion6() {
    ensure_desk_models();
    const BackboneConfig bcfg = desk_backbone_cfg();
    const data::STDataset held = data::make_synth_panel(999, 300, 576, 3600);
    std::string detail;
    bool pass = true;
    double masked_mae[3], control_mae[3];
    const int lengths[3] = {128, 256, 512};
    for (int li = 0; li < 3; ++li) {
        const std::vector<backbone::SeriesWindow> windows = held_out_windows(held, lengths[li]);
        masked_mae[li] =
            eval::evaluate_windows(windows, desk_models().masked, bcfg).mae;
        control_mae[li] =
            eval::evaluate_windows(windows, desk_models().unmasked, bcfg).mae;
        const double pers = eval::persistence_mae(windows);
        pass = pass && masked_mae[li] < pers;
        detail += "L=" + std::to_string(lengths[li]) + ": masked " + fmt(masked_mae[li], 3) +
                  " ctrl " + fmt(control_mae[li], 3) + " pers " + fmt(pers, 3) + "; ";
    }
    // the unmasked control degrades at the unseen short lengths
    const bool control_worse = control_mae[0] > masked_mae[0] && control_mae[1] > masked_mae[1];
    pass = pass && control_worse;
    detail += control_worse ? "control degrades at unseen lengths"
                            : "control did NOT degrade at unseen lengths";
    return {pass, detail};
}

// ---------- criterion 7 ----------

struct StaEvalSetup {
    data::STDataset fixture;
    data::SplitRanges ranges;
    AdapterConfig acfg;
    int ctx = 64, horizon = 32, stride = 2;
};

// Overwrites [lo, hi) with the weekend amplitude rule inverted (weekday boost
// instead), leaving the rest of the panel untouched. The segment teaches the
// calendar banks wrong associations; replay of clean windows protects them.
void invert_weekend_segment(data::STDataset& ds, int n_nodes, int lo, int hi, double boost,
                            uint64_t noise_seed) {
    Rng drng(noise_seed);
    for (int i = 0; i < n_nodes; ++i) {
        const double amp = 1.0 + 0.6 * std::sin(0.7 + 2.39996 * i);
        const double phase = 2.0 * M_PI * i / n_nodes;
        const double offset = 2.0 * std::cos(1.3 + 1.17 * i);
        const double wk = boost * (0.75 + 0.5 * std::sin(2.1 + 1.93 * i));
        for (int t = lo; t < hi && t < ds.n_steps(); ++t) {
            const int dow = data::calendar_index(ds.timestamps[t], "day_of_week");
            double a = amp;
            if (dow < 5) a *= 1.0 + wk;
            ds.values.at(i, t) =
                offset + a * std::sin(2.0 * M_PI * t / 24.0 + phase) + 0.25 * drng.normal();
        }
    }
}

StaEvalSetup make_sta_setup() {
    StaEvalSetup s;
    s.fixture = data::make_daily_panel_fixture(77, 20, 24 * 120, 3600, 0.25, 1.0);
    // transient mislabeled-calendar segment over the tail of the training split
    invert_weekend_segment(s.fixture, 20, 1600, 1728, 1.0, 881);
    s.ranges = data::split(s.fixture, 0.6, 0.2, 0.2);
    s.acfg.n_nodes = 20;
    s.acfg.id_dim = 32;
    s.acfg.n_prompts = 3;
    s.acfg.prompt_rank = 3;
    s.acfg.n_prototypes = 16;
    s.acfg.max_lag = 3;
    s.acfg.calendar_cycles = {{"time_of_day", 24}, {"day_of_week", 7}};
    s.acfg.backbone_frozen = true;
    return s;
}

double sta_panel_mae(const data::STDataset& ds, ParameterStore& params,
                     const BackboneConfig& bcfg, const AdapterConfig& acfg,
                     const adapter::AblationSwitches& ab, int ctx, int horizon, int t0, int t1,
                     int stride) {
    const int med = bcfg.median_index();
    double s = 0.0;
    int64_t n = 0;
    for (int at = t0; at + ctx + horizon <= t1; at += stride) {
        adapter::PanelWindow pw;
        pw.context = Mat(ds.n_nodes(), ctx);
        pw.target = Mat(ds.n_nodes(), horizon);
        for (int i = 0; i < ds.n_nodes(); ++i) {
            for (int k = 0; k < ctx; ++k) pw.context.at(i, k) = ds.values.at(i, at + k);
            for (int k = 0; k < horizon; ++k) pw.target.at(i, k) = ds.values.at(i, at + ctx + k);
        }
        pw.context_timestamps.assign(ds.timestamps.begin() + at,
                                     ds.timestamps.begin() + at + ctx);
        adapter::StaOptions so;
        so.ablations = ab;
        const adapter::StaResult r = adapter::sta_forward(pw, params, bcfg, acfg, so);
        for (int i = 0; i < ds.n_nodes(); ++i)
            for (int k = 0; k < horizon; ++k) {
                s += std::fabs(r.per_node[i].values.at(k, med) - pw.target.at(i, k));
                ++n;
            }
    }
    return s / static_cast<double>(n);
}

double backbone_panel_mae(const data::STDataset& ds, ParameterStore& params,
                          const BackboneConfig& bcfg, int ctx, int horizon, int t0, int t1,
                          int stride) {
    const int med = bcfg.median_index();
    double s = 0.0;
    int64_t n = 0;
    for (int at = t0; at + ctx + horizon <= t1; at += stride) {
        for (int i = 0; i < ds.n_nodes(); ++i) {
            backbone::SeriesWindow w;
            w.context.assign(ds.values.row_ptr(i) + at, ds.values.row_ptr(i) + at + ctx);
            w.target.assign(ds.values.row_ptr(i) + at + ctx,
                            ds.values.row_ptr(i) + at + ctx + horizon);
            const backbone::UtpResult r = backbone::utp_forward(w, params, bcfg, nullptr, false);
            for (int k = 0; k < horizon; ++k) {
                s += std::fabs(r.forecast.values.at(k, med) - w.target[k]);
                ++n;
            }
        }
    }
    return s / static_cast<double>(n);
}

double run_sta_training(const StaEvalSetup& s, const BackboneConfig& bcfg,
                        const adapter::AblationSwitches& ab, bool use_cmr,
                        double* test_mae_out) {
    ParameterStore params(0);
    for (const auto& e : desk_models().masked.entries()) params.add(e.name, e.value);
    Rng rng(501);
    adapter::add_adapter_params(params, s.acfg, bcfg.d_model, rng);
    TrainConfig tcfg;
    tcfg.peak_lr = 2e-3;
    tcfg.batch_size = 4;
    tcfg.total_steps = 500;
    tcfg.seed = 31;
    tcfg.loss_kind = LossKind::kL1Median;
    tcfg.n_workers = 2;
    tcfg.use_cmr = use_cmr;
    trainer::StaTrainOptions opt;
    opt.few_shot_frac = 0.1;
    opt.ctx_len = s.ctx;
    opt.horizon = s.horizon;
    opt.stride = s.stride;
    opt.ablations = ab;
    opt.backbone_loaded = true;
    const trainer::StaTrainResult r =
        trainer::train_sta(s.fixture, params, bcfg, s.acfg, tcfg, opt);
    *test_mae_out = sta_panel_mae(s.fixture, params, bcfg, s.acfg, ab, s.ctx, s.horizon,
                                  s.ranges.val_end, s.fixture.n_steps(), s.stride);
    return r.final_val_mae;
}

Outcome criterion7() {
    ensure_desk_models();
    const BackboneConfig bcfg = desk_backbone_cfg();
    const StaEvalSetup s = make_sta_setup();
    const auto t0 = std::chrono::steady_clock::now();

    const double zero_shot =
        backbone_panel_mae(s.fixture, desk_models().masked, bcfg, s.ctx, s.horizon,
                           s.ranges.val_end, s.fixture.n_steps(), s.stride);

    adapter::AblationSwitches full;
    double adapted = 0.0, no_stmf = 0.0, no_cmr = 0.0;
    run_sta_training(s, bcfg, full, true, &adapted);
    adapter::AblationSwitches ab_stmf;
    ab_stmf.use_stmf = false;
    run_sta_training(s, bcfg, ab_stmf, true, &no_stmf);
    run_sta_training(s, bcfg, full, false, &no_cmr);

    const double improvement = (zero_shot - adapted) / zero_shot;
    const bool improves = improvement >= 0.05;
    const bool ablations_worse = no_stmf > adapted && no_cmr > adapted;
    const double minutes = elapsed_s(t0) / 60.0;
    const std::string detail =
        "zero-shot " + fmt(zero_shot) + ", adapted " + fmt(adapted) + " (" +
        fmt(100.0 * improvement, 1) + "% better, need >=5%); no-STMF " + fmt(no_stmf) +
        ", no-CMR " + fmt(no_cmr) + "; " + fmt(minutes, 1) + " min";
    return {improves && ablations_worse && minutes < 20.0, detail};
}

// ---------- criterion 8 ----------

Outcome criterion8() {
    BackboneConfig bcfg;
    bcfg.d_model = 32;
    bcfg.d_ff = 64;
    bcfg.n_layers = 1;
    bcfg.n_heads = 2;
    bcfg.patch_len = 16;
    bcfg.max_ctx_patches = 12;
    bcfg.max_fut_patches = 1;
    bcfg.min_ctx_patches = 2;
    bcfg.quantiles = {0.1, 0.5, 0.9};
    bcfg.dropout = 0.0;
    AdapterConfig acfg;
    acfg.id_dim = 8;
    acfg.n_prompts = 3;
    acfg.prompt_rank = 3;
    acfg.n_prototypes = 4;
    acfg.max_lag = 3;
    acfg.calendar_cycles = {{"time_of_day", 24}, {"day_of_week", 7}};

    const eval::ScalingReport rep = eval::scaling_probe(
        bcfg, acfg, {100, 200, 400, 800}, bcfg.max_ctx_patches * bcfg.patch_len,
        bcfg.patch_len, 5, 2, 7);
    bool alloc_ok = true;
    std::string detail = "slope " + fmt(rep.loglog_slope, 3) + " (need [0.8,1.3]); alloc";
    for (size_t i = 0; i < rep.rows.size(); ++i) {
        detail += " " + std::to_string(rep.rows[i].peak_alloc_bytes);
        if (i > 0) alloc_ok &= rep.rows[i].peak_alloc_bytes ==
                               2 * rep.rows[i - 1].peak_alloc_bytes;
    }
    const bool slope_ok = rep.loglog_slope >= 0.8 && rep.loglog_slope <= 1.3;
    detail += alloc_ok ? " (exact doubling)" : " (doubling violated)";
    return {slope_ok && alloc_ok, detail};
}

// ---------- criterion 9 ----------

Outcome criterion9() {
    // mix_batch composition counts
    Rng rng(9);
    for (const int bs : {10, 16, 33}) {
        std::vector<int64_t> current(bs);
        for (int i = 0; i < bs; ++i) current[i] = 1000 + i;
        trainer::ReplayBuffer buf(64);
        std::vector<int64_t> seed_items;
        for (int64_t i = 0; i < 64; ++i) seed_items.push_back(i);
        buf.seed_from(seed_items);
        const std::vector<int64_t> mixed = trainer::mix_batch(current, buf, 0.3, rng);
        int mem = 0;
        for (int64_t id : mixed)
            if (id < 1000) ++mem;
        if (mem != static_cast<int>(std::floor(0.3 * bs)))
            return {false, "mix_batch composition wrong for batch " + std::to_string(bs)};
        if (mixed.size() != current.size()) return {false, "mix_batch changed batch size"};
    }

    // reservoir retention uniformity: aggregate by stream decile over trials
    {
        const int capacity = 100, n_stream = 2000, trials = 200;
        std::vector<int64_t> decile(10, 0);
        for (int trial = 0; trial < trials; ++trial) {
            Rng trng(5000 + trial);
            trainer::ReplayBuffer buf(capacity);
            for (int64_t i = 0; i < n_stream; ++i) buf.update(i, trng);
            for (int64_t id : buf.items()) decile[id * 10 / n_stream]++;
        }
        const double expected = static_cast<double>(capacity) * trials / 10.0;
        for (int d = 0; d < 10; ++d) {
            const double ratio = static_cast<double>(decile[d]) / expected;
            if (ratio < 0.8 || ratio > 1.2)
                return {false, "reservoir decile " + std::to_string(d) + " retention off by " +
                                   fmt(100.0 * (ratio - 1.0), 1) + "%"};
        }
    }

    // two-phase distribution-shift fixture: the back 70% of the training split
    // carries the inverted calendar rule; replay of the phase-1 prefix keeps
    // phase-1 loss lower
    ensure_desk_models();
    const BackboneConfig bcfg = desk_backbone_cfg();
    const int N = 5, T = 24 * 100, ctx = 64, horizon = 32;
    const int train_end = static_cast<int>(std::floor(T * 0.6));
    auto two_phase_panel = [&](uint64_t seed, int steps, int inv_lo, int inv_hi) {
        data::STDataset ds = data::make_daily_panel_fixture(seed, N, steps, 3600, 0.25, 1.5);
        invert_weekend_segment(ds, N, inv_lo, inv_hi, 1.5, seed + 7);
        return ds;
    };
    const data::STDataset shifted =
        two_phase_panel(91, T, static_cast<int>(train_end * 0.3), train_end);
    const data::STDataset phase1_val = two_phase_panel(92, 24 * 20, 0, 0);

    AdapterConfig acfg;
    acfg.n_nodes = N;
    acfg.id_dim = 32;
    acfg.n_prompts = 3;
    acfg.prompt_rank = 3;
    acfg.n_prototypes = 16;
    acfg.max_lag = 3;
    acfg.calendar_cycles = {{"time_of_day", 24}, {"day_of_week", 7}};
    acfg.backbone_frozen = true;

    auto adapt_on = [&](bool use_cmr) {
        ParameterStore params(0);
        for (const auto& e : desk_models().masked.entries()) params.add(e.name, e.value);
        Rng arng(71);
        adapter::add_adapter_params(params, acfg, bcfg.d_model, arng);
        TrainConfig tcfg;
        tcfg.peak_lr = 2e-3;
        tcfg.batch_size = 4;
        tcfg.total_steps = 300;
        tcfg.seed = 13;
        tcfg.loss_kind = LossKind::kL1Median;
        tcfg.n_workers = 2;
        tcfg.use_cmr = use_cmr;
        trainer::StaTrainOptions opt;
        opt.few_shot_frac = 1.0;  // stream over the whole (two-phase) training split
        opt.ctx_len = ctx;
        opt.horizon = horizon;
        opt.stride = 4;
        opt.backbone_loaded = true;
        trainer::train_sta(shifted, params, bcfg, acfg, tcfg, opt);
        adapter::AblationSwitches ab;
        return sta_panel_mae(phase1_val, params, bcfg, acfg, ab, ctx, horizon, 0,
                             phase1_val.n_steps(), 16);
    };
    const double with_cmr = adapt_on(true);
    const double without_cmr = adapt_on(false);
    const bool forgetting_guard = with_cmr <= without_cmr;
    return {forgetting_guard,
            "mix counts exact; reservoir uniform +-20%; phase-1 MAE with CMR " + fmt(with_cmr) +
                " <= without " + fmt(without_cmr)};
}

// ---------- criterion 10 ----------

Outcome criterion10() {
    BackboneConfig bcfg;
    bcfg.d_model = 16;
    bcfg.d_ff = 32;
    bcfg.n_layers = 1;
    bcfg.n_heads = 2;
    bcfg.patch_len = 8;
    bcfg.max_ctx_patches = 8;
    bcfg.max_fut_patches = 2;
    bcfg.min_ctx_patches = 2;
    bcfg.quantiles = {0.1, 0.5, 0.9};
    bcfg.dropout = 0.1;

    const data::STDataset corpus = data::make_synth_panel(5, 24, 200, 3600);
    TrainConfig tcfg;
    tcfg.total_steps = 40;
    tcfg.batch_size = 8;
    tcfg.peak_lr = 3e-3;
    tcfg.seed = 23;
    tcfg.n_workers = 1;  // determinism is guaranteed in single-worker mode

    auto run_once = [&](const std::string& path) {
        ParameterStore params = backbone::init_backbone_params(bcfg, 23);
        trainer::train_utp(corpus, params, bcfg, tcfg);
        KvDoc doc;
        bcfg.to_kv(doc);
        save_checkpoint(path, params, doc);
        const CheckpointContents back = load_checkpoint(path);
        ParameterStore reloaded(0);
        for (const auto& e : back.params.entries()) reloaded.add(e.name, e.value);
        const data::STDataset held = data::make_synth_panel(6, 30, 128, 3600);
        std::vector<backbone::SeriesWindow> windows;
        for (int i = 0; i < held.n_nodes(); ++i) {
            backbone::SeriesWindow w;
            w.context.assign(held.values.row_ptr(i), held.values.row_ptr(i) + 64);
            w.target.assign(held.values.row_ptr(i) + 64, held.values.row_ptr(i) + 80);
            windows.push_back(std::move(w));
        }
        return eval::evaluate_windows(windows, reloaded, bcfg);
    };

    const std::string p1 = kWorkDir + "/det_a.fsv2", p2 = kWorkDir + "/det_b.fsv2";
    const eval::ForecastMetrics m1 = run_once(p1);
    const eval::ForecastMetrics m2 = run_once(p2);

    auto file_bytes = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const std::string b1 = file_bytes(p1), b2 = file_bytes(p2);
    const bool ckpt_identical = !b1.empty() && b1 == b2;
    const bool metrics_bitwise = m1.mae == m2.mae && m1.rmse == m2.rmse &&
                                 m1.pinball == m2.pinball &&
                                 m1.coverage_lo_hi == m2.coverage_lo_hi;

    // single-byte corruption must be rejected by the CRC
    bool corruption_detected = true;
    {
        std::string bad = b1;
        const size_t at = bad.size() / 2;
        bad[at] = static_cast<char>(bad[at] ^ 0x01);
        const std::string bad_path = kWorkDir + "/det_corrupt.fsv2";
        std::ofstream out(bad_path, std::ios::binary | std::ios::trunc);
        out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
        out.close();
        try {
            load_checkpoint(bad_path);
            corruption_detected = false;
        } catch (const CheckpointError&) {
        }
    }
    std::string detail = std::string("checkpoints ") +
                         (ckpt_identical ? "byte-identical" : "DIFFER") + "; metrics " +
                         (metrics_bitwise ? "bitwise-equal" : "DIFFER") + "; corruption " +
                         (corruption_detected ? "detected" : "MISSED");
    return {ckpt_identical && metrics_bitwise && corruption_detected, detail};
}

}  // namespace

int main() {
    std::filesystem::create_directories(kWorkDir);
    struct Entry {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Entry> criteria = {
        {1, "gradient audit (backbone + adapter, FD 1e-4, tol 1e-3)", criterion1},
        {2, "loss/metric oracles exact on 1000 instances", criterion2},
        {3, "p-RoPE identity, tail invariance, shift invariance", criterion3},
        {4, "gate-bypass and adapter-off equivalences", criterion4},
        {5, "desk-scale pretraining beats persistence with calibrated intervals", criterion5},
        {6, "variable-length generalization vs unmasked control", criterion6},
        {7, "few-shot adaptation with STMF/CMR ablation directions", criterion7},
        {8, "linear scaling in node count", criterion8},
        {9, "CMR mechanics and forgetting guard", criterion9},
        {10, "seeded determinism, checkpoint persistence, CRC", criterion10},
    };
    int failures = 0;
    for (const Entry& e : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = e.fn();
        } catch (const std::exception& ex) {
            out = {false, std::string("exception: ") + ex.what()};
        }
        if (!out.pass) ++failures;
        std::printf("CRITERION %2d [%s] %s — %s (%.1fs)\n", e.id, out.pass ? "PASS" : "FAIL",
                    e.name, out.detail.c_str(), elapsed_s(t0));
        std::fflush(stdout);
    }
    if (failures == 0)
        std::printf("ACCEPTANCE: all %zu criteria passed\n", criteria.size());
    else
        std::printf("ACCEPTANCE: %d criteria FAILED\n", failures);
    return failures == 0 ? 0 : 1;
}
