// Command-line driver for the factorized forecasting pipeline: synthetic data
// generation, temporal pretraining, spatio-temporal adaptation, forecasting,
// evaluation, gradient auditing and the linear-scaling benchmark.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "factost/adapter.hpp"
#include "factost/backbone.hpp"
#include "factost/checkpoint.hpp"
#include "factost/config.hpp"
#include "factost/data.hpp"
#include "factost/errors.hpp"
#include "factost/eval.hpp"
#include "factost/trainer.hpp"

using nlohmann::json;
using namespace factost;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitCheckpoint = 5;

struct CommonArgs {
    std::string config_path;
    std::optional<long long> seed_flag;
};

// precedence: CLI flag > config file > FACTOST_SEED env > built-in default
KvDoc effective_config(const CommonArgs& common,
                       const std::vector<std::pair<std::string, std::string>>& flag_overrides) {
    KvDoc doc;
    if (const char* env = std::getenv("FACTOST_SEED")) doc.set("run.seed", env);
    if (!common.config_path.empty()) doc.merge_from(KvDoc::load_file(common.config_path));
    if (common.seed_flag) doc.set_int("run.seed", *common.seed_flag);
    for (const auto& [k, v] : flag_overrides) doc.set(k, v);
    return doc;
}

uint64_t run_seed(const KvDoc& doc) {
    return static_cast<uint64_t>(doc.get_int("run.seed", 1));
}

void echo_config_comments(std::ofstream& out, const KvDoc& doc) {
    for (const auto& [k, v] : doc.items()) out << "# " << k << "=" << v << "\n";
}

void write_metric_artifacts(const std::string& out_path, const std::string& dataset_tag,
                            int horizon, const std::vector<std::pair<std::string, double>>& rows,
                            const KvDoc& doc) {
    // JSON-lines report
    std::ofstream jout(out_path, std::ios::trunc);
    if (!jout) throw DataError("cannot open for write: " + out_path);
    json cfg = json::object();
    for (const auto& [k, v] : doc.items()) cfg[k] = v;
    jout << json{{"config", cfg}}.dump() << "\n";
    for (const auto& [name, value] : rows) {
        jout << json{{"metric", name}, {"dataset", dataset_tag}, {"horizon", horizon},
                     {"value", value}}
                    .dump()
             << "\n";
    }
    // plot-ready CSV alongside
    const std::string csv_path = out_path + ".csv";
    std::ofstream cout_(csv_path, std::ios::trunc);
    echo_config_comments(cout_, doc);
    cout_ << "metric,dataset,horizon,value\n";
    cout_.precision(12);
    for (const auto& [name, value] : rows)
        cout_ << name << "," << dataset_tag << "," << horizon << "," << value << "\n";
}

AdapterConfig adapter_config_for(const KvDoc& doc, int n_nodes) {
    AdapterConfig acfg = AdapterConfig::from_kv(doc);
    acfg.n_nodes = n_nodes;
    return acfg;
}

int cmd_synth_data(const CommonArgs& common,
                   const std::vector<std::pair<std::string, std::string>>& overrides,
                   const std::string& out_path) {
    const KvDoc doc = effective_config(common, overrides);
    const int n_series = static_cast<int>(doc.get_int("data.n_series", 100));
    const int length = static_cast<int>(doc.get_int("data.length", 512));
    const int64_t freq = doc.get_int("data.freq_seconds", 3600);
    const uint64_t seed = run_seed(doc);
    if (n_series < 0 || length < 16) throw ConfigError("data.n_series/data.length out of range");

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + out_path);
    echo_config_comments(out, doc);
    out.close();

    if (n_series == 0) {
        std::ofstream app(out_path, std::ios::app);
        app << "timestamp\n";
        std::cout << "synth-data: wrote empty corpus (header only) to " << out_path << "\n";
        return 0;
    }
    const data::STDataset ds = data::make_synth_panel(seed, n_series, length, freq);
    {
        // append below the echoed config block
        std::ostringstream tmp;
        std::ofstream app(out_path, std::ios::app);
        app << "timestamp";
        for (const auto& id : ds.node_ids) app << "," << id;
        app << "\n";
        app.precision(17);
        for (int t = 0; t < ds.n_steps(); ++t) {
            app << ds.timestamps[t];
            for (int i = 0; i < ds.n_nodes(); ++i) app << "," << ds.values.at(i, t);
            app << "\n";
        }
    }
    std::cout << "synth-data: wrote " << n_series << " series of length " << length << " to "
              << out_path << "\n";
    return 0;
}

int cmd_pretrain(const CommonArgs& common,
                 const std::vector<std::pair<std::string, std::string>>& overrides,
                 const std::string& data_path, const std::string& out_path) {
    KvDoc doc = effective_config(common, overrides);
    const BackboneConfig bcfg = BackboneConfig::from_kv(doc);
    bcfg.validate();
    TrainConfig tcfg = TrainConfig::from_kv(doc, "pretrain");
    tcfg.seed = run_seed(doc);
    tcfg.validate();

    const data::STDataset ds = data::load_csv(data_path);
    std::cout << "pretrain: " << ds.n_nodes() << " series x " << ds.n_steps() << " steps, "
              << tcfg.total_steps << " steps, batch " << tcfg.batch_size << "\n";

    ParameterStore params = backbone::init_backbone_params(bcfg, tcfg.seed);
    const trainer::TrainResult res =
        trainer::train_utp(ds, params, bcfg, tcfg, out_path + ".trace.jsonl");

    KvDoc ckpt_doc = doc;
    bcfg.to_kv(ckpt_doc);
    save_checkpoint(out_path, params, ckpt_doc);
    std::cout << "pretrain: final loss "
              << (res.loss_trace.empty() ? 0.0 : res.loss_trace.back()) << ", checkpoint "
              << out_path << "\n";
    return 0;
}

int cmd_adapt(const CommonArgs& common,
              const std::vector<std::pair<std::string, std::string>>& overrides,
              const std::string& data_path, const std::string& backbone_ckpt,
              const std::string& out_path, double few_shot, bool from_scratch,
              const adapter::AblationSwitches& ablations, bool no_cmr) {
    KvDoc doc = effective_config(common, overrides);
    const data::STDataset ds = data::load_csv(data_path);

    ParameterStore params(0);
    BackboneConfig bcfg;
    bool backbone_loaded = false;
    if (!backbone_ckpt.empty()) {
        const CheckpointContents ckpt = load_checkpoint(backbone_ckpt);
        if (!ckpt.has_backbone)
            throw CheckpointError("checkpoint has no backbone entries: " + backbone_ckpt);
        bcfg = BackboneConfig::from_kv(ckpt.config);
        for (const auto& e : ckpt.params.entries()) params.add(e.name, e.value);
        backbone_loaded = true;
        std::cout << "adapt: transferred " << params.count() << " backbone tensors from "
                  << backbone_ckpt << "\n";
    } else {
        bcfg = BackboneConfig::from_kv(doc);
        bcfg.validate();
        if (!from_scratch)
            throw ConfigError(
                "adapt: no backbone checkpoint given; pass --from-scratch to opt into "
                "random-init adaptation");
        Rng rng(run_seed(doc));
        backbone::add_backbone_params(params, bcfg, rng);
    }
    bcfg.validate();

    AdapterConfig acfg = adapter_config_for(doc, ds.n_nodes());
    acfg.validate(bcfg.d_model);
    {
        Rng rng(run_seed(doc) + 1);
        adapter::add_adapter_params(params, acfg, bcfg.d_model, rng);
    }

    TrainConfig tcfg = TrainConfig::from_kv(doc, "adapt");
    tcfg.seed = run_seed(doc);
    if (!doc.has("adapt.loss")) tcfg.loss_kind = LossKind::kL1Median;
    if (!doc.has("adapt.peak_lr")) tcfg.peak_lr = 1e-3;
    if (no_cmr) tcfg.use_cmr = false;
    tcfg.validate();

    trainer::StaTrainOptions opt;
    opt.few_shot_frac = few_shot;
    opt.ctx_len = static_cast<int>(doc.get_int("adapt.ctx_len", bcfg.max_context()));
    opt.horizon = static_cast<int>(doc.get_int("adapt.horizon", bcfg.max_horizon()));
    opt.stride = static_cast<int>(doc.get_int("adapt.stride", bcfg.patch_len));
    opt.train_ratio = doc.get_real("split.train", 0.6);
    opt.val_ratio = doc.get_real("split.val", 0.2);
    opt.test_ratio = doc.get_real("split.test", 0.2);
    opt.ablations = ablations;
    opt.backbone_loaded = backbone_loaded;
    opt.from_scratch = from_scratch;
    opt.trace_path = out_path + ".trace.jsonl";

    const trainer::StaTrainResult res = trainer::train_sta(ds, params, bcfg, acfg, tcfg, opt);
    std::cout << "adapt: few-shot fraction " << few_shot << " selected the trailing "
              << res.trained_windows << " training windows\n";
    std::cout << "adapt: final validation MAE " << res.final_val_mae << "\n";

    KvDoc ckpt_doc = doc;
    bcfg.to_kv(ckpt_doc);
    acfg.to_kv(ckpt_doc);
    save_checkpoint(out_path, params, ckpt_doc);
    std::cout << "adapt: checkpoint " << out_path << "\n";
    return 0;
}

int cmd_forecast(const CommonArgs& common,
                 const std::vector<std::pair<std::string, std::string>>& overrides,
                 const std::string& ckpt_path, const std::string& input_path, int horizon,
                 const std::string& out_path) {
    const KvDoc doc = effective_config(common, overrides);
    if (horizon <= 0) throw ConfigError("forecast: horizon must be positive");
    const CheckpointContents ckpt = load_checkpoint(ckpt_path);
    if (!ckpt.has_backbone) throw CheckpointError("checkpoint has no backbone: " + ckpt_path);
    const BackboneConfig bcfg = BackboneConfig::from_kv(ckpt.config);
    ParameterStore params(0);
    for (const auto& e : ckpt.params.entries()) params.add(e.name, e.value);

    const data::STDataset ds = data::load_csv(input_path);
    if (horizon <= bcfg.max_horizon())
        std::cout << "forecast: horizon " << horizon << " <= " << bcfg.max_horizon()
                  << ", single-pass path\n";
    else
        std::cout << "forecast: horizon " << horizon << " > " << bcfg.max_horizon()
                  << ", rolling path\n";

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + out_path);
    echo_config_comments(out, doc);
    out << "timestamp,node,quantile,value\n";
    out.precision(12);

    for (int i = 0; i < ds.n_nodes(); ++i) {
        int usable = std::min(ds.n_steps(), bcfg.max_context());
        usable -= usable % bcfg.patch_len;
        if (usable < bcfg.min_ctx_patches * bcfg.patch_len)
            throw DataError("forecast: input shorter than the minimum context");
        if (usable < ds.n_steps() && i == 0)
            std::cout << "forecast: using the last " << usable << " steps as context\n";
        backbone::SeriesWindow w;
        w.context.assign(ds.values.row_ptr(i) + (ds.n_steps() - usable),
                         ds.values.row_ptr(i) + ds.n_steps());
        const backbone::QuantileForecast f =
            backbone::rolling_forecast(w, params, bcfg, horizon);
        for (int h = 0; h < horizon; ++h) {
            const int64_t ts = ds.timestamps.back() + ds.freq_seconds * (h + 1);
            for (size_t q = 0; q < f.quantiles.size(); ++q)
                out << ts << "," << ds.node_ids[i] << "," << f.quantiles[q] << ","
                    << f.values.at(h, static_cast<int>(q)) << "\n";
        }
    }
    std::cout << "forecast: wrote " << out_path << "\n";
    return 0;
}

int cmd_evaluate(const CommonArgs& common,
                 const std::vector<std::pair<std::string, std::string>>& overrides,
                 const std::string& ckpt_path, const std::string& data_path,
                 const std::string& split_name, const std::string& out_path) {
    const KvDoc doc = effective_config(common, overrides);
    const CheckpointContents ckpt = load_checkpoint(ckpt_path);
    if (!ckpt.has_backbone) throw CheckpointError("checkpoint has no backbone: " + ckpt_path);
    const BackboneConfig bcfg = BackboneConfig::from_kv(ckpt.config);
    ParameterStore params(0);
    for (const auto& e : ckpt.params.entries()) params.add(e.name, e.value);

    const data::STDataset ds = data::load_csv(data_path);
    const data::SplitRanges ranges = data::split(ds, doc.get_real("split.train", 0.6),
                                                 doc.get_real("split.val", 0.2),
                                                 doc.get_real("split.test", 0.2));
    int t0 = 0, t1 = ds.n_steps();
    if (split_name == "train") {
        t1 = ranges.train_end;
    } else if (split_name == "val") {
        t0 = ranges.train_end;
        t1 = ranges.val_end;
    } else if (split_name == "test") {
        t0 = ranges.val_end;
    } else if (split_name != "all") {
        throw ConfigError("evaluate: unknown split '" + split_name + "'");
    }

    const int ctx_len = static_cast<int>(doc.get_int("eval.ctx_len", bcfg.max_context()));
    const int horizon = static_cast<int>(doc.get_int("eval.horizon", bcfg.max_horizon()));
    const int stride = static_cast<int>(doc.get_int("eval.stride", horizon));

    std::vector<backbone::SeriesWindow> windows;
    for (const data::WindowRef& r : data::window_iter(ds, ctx_len, horizon, stride, t0, t1))
        windows.push_back(data::make_window(ds, r, ctx_len, horizon));
    if (windows.empty()) throw DataError("evaluate: no windows fit the requested split");

    const eval::ForecastMetrics m = eval::evaluate_windows(windows, params, bcfg);
    const double persistence = eval::persistence_mae(windows);
    std::vector<std::pair<std::string, double>> rows = {
        {"mae", m.mae},
        {"rmse", m.rmse},
        {"pinball", m.pinball},
        {"coverage_0.1_0.9", m.coverage_lo_hi},
        {"crossing_rate", m.crossing},
        {"persistence_mae", persistence},
    };
    write_metric_artifacts(out_path, data_path + ":" + split_name, horizon, rows, doc);
    for (const auto& [k, v] : rows) std::cout << "evaluate: " << k << " = " << v << "\n";
    std::cout << "evaluate: report " << out_path << " (+.csv)\n";
    return 0;
}

// Tiny-configuration audit: analytic gradients of the full pinball pipeline
// and of the adapted L1 pipeline against central finite differences.
int cmd_grad_audit(const CommonArgs& common,
                   const std::vector<std::pair<std::string, std::string>>& overrides,
                   const std::string& out_path) {
    const KvDoc doc = effective_config(common, overrides);
    const uint64_t seed = run_seed(doc);
    const double tol = doc.get_real("audit.tolerance", 1e-3);
    const double step = doc.get_real("audit.fd_step", 1e-4);
    const int instances = static_cast<int>(doc.get_int("audit.instances", 5));

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
    bcfg.rope_fraction = 0.8;  // d_head=8 -> r_dim=6
    bcfg.dropout = 0.0;

    AdapterConfig acfg;
    acfg.n_nodes = 3;
    acfg.id_dim = 4;
    acfg.n_prompts = 2;
    acfg.prompt_rank = 2;
    acfg.n_prototypes = 2;
    acfg.max_lag = 2;
    acfg.calendar_cycles = {{"time_of_day", 24}, {"day_of_week", 7}};

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + out_path);
    double worst = 0.0;
    bool all_pass = true;
    for (int inst = 0; inst < instances; ++inst) {
        const uint64_t iseed = seed + 100 * inst;
        // backbone-only pinball audit
        {
            ParameterStore params = backbone::init_backbone_params(bcfg, iseed);
            Rng data_rng(iseed + 7);
            backbone::SeriesWindow w;
            w.context.resize(3 * bcfg.patch_len);
            for (double& x : w.context) x = data_rng.normal();
            w.target.resize(bcfg.max_horizon());
            for (double& x : w.target) x = data_rng.normal();
            auto fn = [&](ParameterStore& p, bool with_grad) {
                ag::Tape t(with_grad);
                backbone::UtpGraph g =
                    backbone::build_utp_graph(t, w, p, bcfg, false, nullptr);
                if (with_grad) {
                    t.backward(g.loss);
                    p.zero_grads();
                    std::vector<Mat> grads;
                    t.accumulate_param_grads(grads);
                    p.accumulate(grads);
                }
                return t.value(g.loss).v[0];
            };
            const trainer::GradAuditReport rep = trainer::grad_audit(fn, params, step, tol);
            worst = std::max(worst, rep.max_rel_err);
            all_pass = all_pass && rep.pass;
            out << json{{"instance", inst},
                        {"model", "backbone"},
                        {"checked", rep.n_checked},
                        {"max_rel_err", rep.max_rel_err},
                        {"worst_param", rep.worst_param},
                        {"pass", rep.pass}}
                       .dump()
                << "\n";
        }
        // adapted pipeline audit
        {
            ParameterStore params(iseed);
            Rng rng(iseed);
            backbone::add_backbone_params(params, bcfg, rng);
            adapter::add_adapter_params(params, acfg, bcfg.d_model, rng);
            Rng data_rng(iseed + 13);
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
            const trainer::GradAuditReport rep = trainer::grad_audit(fn, params, step, tol);
            worst = std::max(worst, rep.max_rel_err);
            all_pass = all_pass && rep.pass;
            out << json{{"instance", inst},
                        {"model", "adapted"},
                        {"checked", rep.n_checked},
                        {"max_rel_err", rep.max_rel_err},
                        {"worst_param", rep.worst_param},
                        {"pass", rep.pass}}
                       .dump()
                << "\n";
        }
    }
    std::cout << "grad-audit: " << instances << " instances, max relative error " << worst
              << (all_pass ? " (all within tolerance)" : " (violations found)") << "\n";
    std::cout << "grad-audit: report " << out_path << "\n";
    return 0;
}

int cmd_scale_bench(const CommonArgs& common,
                    const std::vector<std::pair<std::string, std::string>>& overrides,
                    const std::string& out_path, const std::string& n_list_str) {
    const KvDoc doc = effective_config(common, overrides);
    std::vector<int> n_list;
    {
        std::istringstream ss(n_list_str);
        std::string item;
        while (std::getline(ss, item, ',')) n_list.push_back(std::stoi(item));
    }
    BackboneConfig bcfg;
    bcfg.d_model = static_cast<int>(doc.get_int("bench.d_model", 32));
    bcfg.d_ff = static_cast<int>(doc.get_int("bench.d_ff", 64));
    bcfg.n_layers = static_cast<int>(doc.get_int("bench.n_layers", 1));
    bcfg.n_heads = 2;
    bcfg.patch_len = 16;
    bcfg.max_ctx_patches = static_cast<int>(doc.get_int("bench.ctx_patches", 12));
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
        bcfg, acfg, n_list, bcfg.max_ctx_patches * bcfg.patch_len, bcfg.patch_len,
        static_cast<int>(doc.get_int("bench.repeats", 5)),
        static_cast<int>(doc.get_int("bench.warmups", 2)), run_seed(doc));

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + out_path);
    echo_config_comments(out, doc);
    out << "n_nodes,median_ms,peak_alloc_bytes\n";
    out.precision(12);
    for (const eval::ScalingRow& r : rep.rows) {
        out << r.n_nodes << "," << r.median_ms << "," << r.peak_alloc_bytes << "\n";
        std::cout << "scale-bench: N=" << r.n_nodes << " median " << r.median_ms << " ms, peak "
                  << r.peak_alloc_bytes << " B\n";
    }
    std::cout << "scale-bench: log-log slope " << rep.loglog_slope << ", table " << out_path
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FactoST-style factorized spatio-temporal forecasting toolkit"};
    app.require_subcommand(1);

    CommonArgs common;
    long long seed_flag = -1;
    app.add_option("--config", common.config_path, "flat key=value configuration file")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", seed_flag, "global seed (overrides config and FACTOST_SEED)");

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic CSV corpus");
    std::string synth_out = "corpus.csv";
    long long synth_n = -1, synth_len = -1;
    synth->add_option("--out", synth_out, "output CSV path")->required();
    synth->add_option("--n-series", synth_n, "number of series");
    synth->add_option("--length", synth_len, "series length");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "stage-I universal temporal pretraining");
    std::string pre_data, pre_out = "backbone.fsv2";
    long long pre_steps = -1;
    pre->add_option("--data", pre_data, "training corpus CSV")->required()
        ->check(CLI::ExistingFile);
    pre->add_option("--out", pre_out, "checkpoint path")->required();
    pre->add_option("--steps", pre_steps, "override pretrain.total_steps");

    // adapt
    auto* ad = app.add_subcommand("adapt", "stage-II spatio-temporal adaptation");
    std::string ad_data, ad_backbone, ad_out = "adapted.fsv2";
    double ad_few_shot = 1.0;
    bool ad_scratch = false, ad_no_stmf = false, ad_no_stf = false, ad_no_prompts = false,
         ad_no_cmr = false;
    long long ad_steps = -1;
    ad->add_option("--data", ad_data, "target panel CSV")->required()->check(CLI::ExistingFile);
    ad->add_option("--backbone", ad_backbone, "pretrained backbone checkpoint");
    ad->add_option("--out", ad_out, "adapted checkpoint path")->required();
    ad->add_option("--few-shot", ad_few_shot, "trailing fraction of training windows");
    ad->add_option("--steps", ad_steps, "override adapt.total_steps");
    ad->add_flag("--from-scratch", ad_scratch, "allow adaptation from random initialization");
    ad->add_flag("--no-stmf", ad_no_stmf, "ablation: disable metadata fusion");
    ad->add_flag("--no-stf", ad_no_stf, "ablation: disable affinity filtering");
    ad->add_flag("--no-prompts", ad_no_prompts, "ablation: disable prompt alignment");
    ad->add_flag("--no-cmr", ad_no_cmr, "ablation: disable continual memory replay");

    // forecast
    auto* fc = app.add_subcommand("forecast", "forecast ahead from the end of a CSV panel");
    std::string fc_ckpt, fc_input, fc_out = "forecast.csv";
    int fc_horizon = 0;
    fc->add_option("--ckpt", fc_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    fc->add_option("--input", fc_input, "input CSV panel")->required()->check(CLI::ExistingFile);
    fc->add_option("--horizon", fc_horizon, "steps to forecast")->required();
    fc->add_option("--out", fc_out, "forecast CSV path")->required();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "metric report over a chronological split");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_out = "metrics.jsonl";
    ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", ev_data, "dataset CSV")->required()->check(CLI::ExistingFile);
    ev->add_option("--split", ev_split, "train|val|test|all");
    ev->add_option("--out", ev_out, "JSONL report path");

    // grad-audit
    auto* ga = app.add_subcommand("grad-audit", "finite-difference gradient audit");
    std::string ga_out = "grad_audit.jsonl";
    ga->add_option("--out", ga_out, "JSONL report path");

    // scale-bench
    auto* sb = app.add_subcommand("scale-bench", "empirical linear-scaling probe");
    std::string sb_out = "scaling.csv", sb_nlist = "100,200,400,800";
    sb->add_option("--out", sb_out, "CSV table path");
    sb->add_option("--n-list", sb_nlist, "comma-separated node counts");

    CLI11_PARSE(app, argc, argv);
    if (seed_flag >= 0) common.seed_flag = seed_flag;

    try {
        if (*synth) {
            std::vector<std::pair<std::string, std::string>> ov;
            if (synth_n >= 0) ov.emplace_back("data.n_series", std::to_string(synth_n));
            if (synth_len >= 0) ov.emplace_back("data.length", std::to_string(synth_len));
            return cmd_synth_data(common, ov, synth_out);
        }
        if (*pre) {
            std::vector<std::pair<std::string, std::string>> ov;
            if (pre_steps >= 0) ov.emplace_back("pretrain.total_steps", std::to_string(pre_steps));
            return cmd_pretrain(common, ov, pre_data, pre_out);
        }
        if (*ad) {
            std::vector<std::pair<std::string, std::string>> ov;
            if (ad_steps >= 0) ov.emplace_back("adapt.total_steps", std::to_string(ad_steps));
            adapter::AblationSwitches ab;
            ab.use_stmf = !ad_no_stmf;
            ab.use_stf = !ad_no_stf;
            ab.use_prompts = !ad_no_prompts;
            return cmd_adapt(common, ov, ad_data, ad_backbone, ad_out, ad_few_shot, ad_scratch,
                             ab, ad_no_cmr);
        }
        if (*fc) return cmd_forecast(common, {}, fc_ckpt, fc_input, fc_horizon, fc_out);
        if (*ev) return cmd_evaluate(common, {}, ev_ckpt, ev_data, ev_split, ev_out);
        if (*ga) return cmd_grad_audit(common, {}, ga_out);
        if (*sb) return cmd_scale_bench(common, {}, sb_out, sb_nlist);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << e.what() << "\n";
        return kExitNumeric;
    } catch (const CheckpointError& e) {
        std::cerr << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
