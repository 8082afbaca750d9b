#include "met2net/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "met2net/checkpoint.hpp"
#include "met2net/data.hpp"
#include "met2net/metrics.hpp"
#include "met2net/model.hpp"
#include "met2net/optimizer.hpp"
#include "met2net/runconfig.hpp"
#include "met2net/train.hpp"

namespace met2net::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::trunc);
    if (!os) throw DataError("cli: cannot write " + p.string());
    os << text;
    if (!os) throw DataError("cli: write failed for " + p.string());
}

/// Every command's output directory gets the merged configuration and the
/// on-disk format versions, making runs self-describing.
void describe_run_dir(const fs::path& dir, const RunConfig& cfg) {
    fs::create_directories(dir);
    write_text(dir / "config.json", cfg.echo.dump(2) + "\n");
    const json versions{{"app", "met2net 1.0.0"},
                        {"formats",
                         {{"dataset", "met2net.dataset.v1"},
                          {"checkpoint", "met2net.checkpoint.v1"},
                          {"prediction", "met2net.prediction.v1"}}}};
    write_text(dir / "versions.json", versions.dump(2) + "\n");
}

data::Dataset open_dataset(const RunConfig& cfg) {
    return data::load_dataset((fs::path(cfg.data_dir) / "manifest.json").string());
}

int variable_index(const data::DatasetManifest& m, const std::string& name,
                   const std::string& what) {
    for (std::size_t i = 0; i < m.var_names.size(); ++i)
        if (m.var_names[i] == name) return static_cast<int>(i);
    std::string known;
    for (const auto& n : m.var_names) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError(what + ": unknown variable name '" + name + "' (dataset has: " + known +
                      ")");
}

Tensor gather_rows(const Tensor& t, std::int64_t start, std::int64_t count) {
    Shape sh = t.shape();
    const std::int64_t row = t.numel() / sh[0];
    sh[0] = count;
    Tensor out(sh, t.dtype());
    dispatch(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = t.data<T>();
        auto dst = out.data<T>();
        std::copy_n(src.data() + start * row, count * row, dst.data());
    });
    return out;
}

/// Batched forward_inference over a whole split; returns f32 predictions in
/// the standardized units of the inputs.
Tensor predict_split(Met2Net& model, const Tensor& x, const ModelConfig& mc, int batch_size) {
    const std::int64_t S = x.dim(0);
    Shape out_shape{S, mc.t_out, mc.n_vars, mc.channels(), mc.height, mc.width};
    Tensor pred(out_shape, Dtype::F32);
    auto dst = pred.data<float>();
    const std::int64_t row = pred.numel() / S;
    for (std::int64_t start = 0; start < S; start += batch_size) {
        const std::int64_t k = std::min<std::int64_t>(batch_size, S - start);
        Tensor xb = gather_rows(x, start, k);
        if (xb.dtype() != mc.dtype) xb = xb.astype(mc.dtype);
        Tensor yb = model.forward_inference(xb).astype(Dtype::F32);
        auto src = yb.data<float>();
        std::copy_n(src.data(), src.size(), dst.data() + start * row);
    }
    return pred;
}

void write_pgm(const fs::path& p, const Tensor& frame_abs_err, double range) {
    const std::int64_t H = frame_abs_err.dim(0), W = frame_abs_err.dim(1);
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cli: cannot write " + p.string());
    os << "P5\n" << W << " " << H << "\n255\n";
    std::vector<unsigned char> bytes(static_cast<std::size_t>(H * W));
    for (std::int64_t i = 0; i < H * W; ++i) {
        const double v = std::clamp(frame_abs_err.at(i) / range, 0.0, 1.0);
        bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("cli: write failed for " + p.string());
}

struct LoadedModel {
    ModelConfig mc;
    std::unique_ptr<Met2Net> model;
    std::unique_ptr<Adam> opt;
    CheckpointMeta meta;
};

LoadedModel open_checkpoint(const RunConfig& cfg, const data::DatasetManifest& m,
                            const std::string& ckpt_dir) {
    LoadedModel lm;
    lm.mc = cfg.model_for(m);
    lm.model = std::make_unique<Met2Net>(lm.mc, cfg.train.seed);
    lm.opt = std::make_unique<Adam>(cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.eps);
    lm.meta = load_checkpoint(ckpt_dir, *lm.model, *lm.opt);
    return lm;
}

/// Opens a checkpoint using the architecture it carries (rather than the run
/// config), so checkpoints of differently-ablated models can be compared.
LoadedModel open_checkpoint_self(const RunConfig& cfg, const std::string& ckpt_dir) {
    std::ifstream in(fs::path(ckpt_dir) / "manifest.json");
    if (!in) throw DataError("cka: cannot open checkpoint manifest in " + ckpt_dir);
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("cka: corrupt checkpoint manifest in " + ckpt_dir + ": " + e.what());
    }
    if (!manifest.contains("model"))
        throw DataError("cka: checkpoint manifest in " + ckpt_dir + " lacks a model block");
    LoadedModel lm;
    lm.mc = model_config_from_json(manifest.at("model"));
    lm.mc.inference_use_shadow = cfg.inference_use_shadow;
    lm.model = std::make_unique<Met2Net>(lm.mc, cfg.train.seed);
    lm.opt = std::make_unique<Adam>(cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.eps);
    lm.meta = load_checkpoint(ckpt_dir, *lm.model, *lm.opt);
    return lm;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_gen(const RunConfig& cfg, const std::string& out_flag) {
    const std::string out = out_flag.empty() ? cfg.data_dir : out_flag;
    const auto summary = data::generate_mvm(cfg.data, out);
    describe_run_dir(out, cfg);
    std::cout << "generated " << summary.n_train << " train + " << summary.n_test
              << " test samples (" << summary.bytes_written << " bytes, seed " << cfg.data.seed
              << ") into " << out << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& out_flag, bool resume) {
    const std::string run_dir = out_flag.empty() ? "run" : out_flag;
    const auto ds = open_dataset(cfg);
    const ModelConfig mc = cfg.model_for(ds.manifest);
    Met2Net model(mc, cfg.train.seed);
    describe_run_dir(run_dir, cfg);
    FitData fd{ds.train_x, ds.train_y, ds.test_x, ds.test_y};
    const auto history = fit(model, fd, cfg.train, run_dir, cfg.echo, resume);
    if (!history.empty()) {
        const auto& last = history.back();
        std::cout << "trained " << last.epoch + 1 << " epochs / " << history.size()
                  << " steps (mode " << (cfg.train.its_enabled ? "two-stage" : "end-to-end")
                  << "); final total loss " << fmt_double(last.total);
        if (last.val_mse) std::cout << ", validation mse " << fmt_double(*last.val_mse);
        std::cout << "\n";
    }
    std::cout << "run directory: " << run_dir << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt, const std::string& out_flag) {
    const std::string out = out_flag.empty() ? "eval" : out_flag;
    const auto ds = open_dataset(cfg);
    auto lm = open_checkpoint(cfg, ds.manifest, ckpt);
    const bool train_split = cfg.eval.split == "train";
    const Tensor& X = train_split ? ds.train_x : ds.test_x;
    const Tensor& Y = train_split ? ds.train_y : ds.test_y;

    const Tensor pred = predict_split(*lm.model, X, lm.mc, cfg.eval.batch_size);
    const Tensor pred_d = ds.denormalize(pred);
    const Tensor targ_d = ds.denormalize(Y);
    const Tensor clim = ds.climatology();
    const auto rows = metrics::evaluate_forecast(pred_d, targ_d, clim, cfg.eval.data_range);

    describe_run_dir(out, cfg);
    std::string csv = "variable,leadtime,metric,value\n";
    for (const auto& r : rows)
        csv += ds.manifest.var_names[static_cast<std::size_t>(r.variable)] + "," +
               std::to_string(r.leadtime) + "," + r.metric + "," + fmt_double(r.value) + "\n";
    write_text(fs::path(out) / "metrics.csv", csv);

    // Absolute-error maps |Y' - Y| for the leading samples, one grayscale
    // image per (sample, variable, leadtime), scaled by the dynamic range.
    const std::int64_t S = pred_d.dim(0);
    const std::int64_t n_maps = std::min<std::int64_t>(cfg.eval.heatmap_samples, S);
    const std::int64_t inner = static_cast<std::int64_t>(lm.mc.height) * lm.mc.width;
    for (std::int64_t s = 0; s < n_maps; ++s)
        for (int v = 0; v < lm.mc.n_vars; ++v)
            for (int t = 0; t < lm.mc.t_out; ++t) {
                Tensor err({lm.mc.height, lm.mc.width}, Dtype::F64);
                const std::int64_t base =
                    (((s * lm.mc.t_out + t) * lm.mc.n_vars + v) * lm.mc.channels()) * inner;
                for (std::int64_t i = 0; i < inner; ++i)
                    err.set(i, std::abs(pred_d.at(base + i) - targ_d.at(base + i)));
                char name[96];
                std::snprintf(name, sizeof(name), "err_s%03lld_%s_t%02d.pgm",
                              static_cast<long long>(s),
                              ds.manifest.var_names[static_cast<std::size_t>(v)].c_str(), t);
                write_pgm(fs::path(out) / name, err, cfg.eval.data_range);
            }

    double pooled = 0.0;
    std::int64_t n_mse = 0;
    for (const auto& r : rows)
        if (r.metric == "mse") {
            pooled += r.value;
            ++n_mse;
        }
    std::cout << "evaluated " << S << " " << cfg.eval.split << " samples; mean mse "
              << fmt_double(pooled / static_cast<double>(n_mse)) << "; wrote " << rows.size()
              << " metric rows and " << n_maps * lm.mc.n_vars * lm.mc.t_out << " error maps to "
              << out << "\n";
    return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& ckpt, const std::string& out_flag) {
    const std::string out = out_flag.empty() ? "predict" : out_flag;
    const auto ds = open_dataset(cfg);
    auto lm = open_checkpoint(cfg, ds.manifest, ckpt);
    const bool train_split = cfg.eval.split == "train";
    const Tensor& X = train_split ? ds.train_x : ds.test_x;
    const Tensor pred_d = ds.denormalize(predict_split(*lm.model, X, lm.mc, cfg.eval.batch_size));

    describe_run_dir(out, cfg);
    const fs::path blob = fs::path(out) / "pred.bin";
    {
        std::ofstream os(blob, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cli: cannot write " + blob.string());
        auto d = pred_d.data<float>();
        os.write(reinterpret_cast<const char*>(d.data()),
                 static_cast<std::streamsize>(d.size() * sizeof(float)));
        if (!os) throw DataError("cli: write failed for " + blob.string());
    }
    json meta{{"format", "met2net.prediction.v1"},
              {"split", cfg.eval.split},
              {"dtype", "f32"},
              {"units", "physical"},
              {"shape", pred_d.shape()}};
    write_text(fs::path(out) / "pred.json", meta.dump(2) + "\n");
    std::cout << "wrote predictions " << shape_str(pred_d.shape()) << " to " << blob.string()
              << "\n";
    return 0;
}

/// Accumulates, per probe point, a [S, features] f64 matrix of one
/// variable's activations over the leading `take` samples of the split.
struct ProbeMatrices {
    std::vector<std::string> layers;
    std::vector<Tensor> rows;  // one [S, feat] matrix per layer
};

ProbeMatrices collect_probes(Met2Net& model, const Tensor& x, const ModelConfig& mc, int var,
                             std::int64_t take, int batch_size) {
    ProbeMatrices pm;
    std::int64_t filled = 0;
    for (std::int64_t start = 0; start < take; start += batch_size) {
        const std::int64_t k = std::min<std::int64_t>(batch_size, take - start);
        Tensor xb = gather_rows(x, start, k);
        if (xb.dtype() != mc.dtype) xb = xb.astype(mc.dtype);
        ProbeSink sink;
        model.forward_inference(xb, sink);
        if (pm.layers.empty()) {
            for (const auto& [name, t] : sink.items) {
                pm.layers.push_back(name);
                const std::int64_t feat = t.numel() / (t.dim(0) * t.dim(1));
                pm.rows.emplace_back(Shape{take, feat}, Dtype::F64);
            }
        }
        for (std::size_t li = 0; li < sink.items.size(); ++li) {
            const Tensor& t = sink.items[li].second;  // [B, N, c, h, w]
            const std::int64_t feat = t.numel() / (t.dim(0) * t.dim(1));
            auto dst = pm.rows[li].data<double>();
            for (std::int64_t b = 0; b < k; ++b) {
                const std::int64_t base = (b * t.dim(1) + var) * feat;
                for (std::int64_t f = 0; f < feat; ++f)
                    dst[(filled + b) * pm.rows[li].dim(1) + f] = t.at(base + f);
            }
        }
        filled += k;
    }
    return pm;
}

int cmd_cka(const RunConfig& cfg, const std::string& ckpt_a, const std::string& ckpt_b,
            const std::string& out_flag) {
    const std::string out = out_flag.empty() ? "cka" : out_flag;
    const auto ds = open_dataset(cfg);
    const bool train_split = cfg.eval.split == "train";
    const Tensor& X = train_split ? ds.train_x : ds.test_x;
    const std::int64_t take = std::min<std::int64_t>(cfg.eval.cka_samples, X.dim(0));
    if (take < 2) throw DataError("cka: split has fewer than 2 samples");

    const int va_idx = variable_index(ds.manifest, cfg.eval.cka_var_a, "cka");
    const int vb_idx = variable_index(ds.manifest, cfg.eval.cka_var_b, "cka");

    auto la = open_checkpoint_self(cfg, ckpt_a);
    ProbeMatrices A = collect_probes(*la.model, X, la.mc, va_idx, take, cfg.eval.batch_size);
    ProbeMatrices B;
    std::string mode;
    if (!ckpt_b.empty() && ckpt_b != ckpt_a) {
        auto lb = open_checkpoint_self(cfg, ckpt_b);
        B = collect_probes(*lb.model, X, lb.mc, va_idx, take, cfg.eval.batch_size);
        mode = "model '" + ckpt_a + "' vs model '" + ckpt_b + "' at variable " +
               cfg.eval.cka_var_a;
    } else {
        B = collect_probes(*la.model, X, la.mc, vb_idx, take, cfg.eval.batch_size);
        mode = "variable " + cfg.eval.cka_var_a + " vs " + cfg.eval.cka_var_b;
    }

    if (A.layers != B.layers) {
        std::string got_a, got_b;
        for (const auto& l : A.layers) got_a += (got_a.empty() ? "" : " ") + l;
        for (const auto& l : B.layers) got_b += (got_b.empty() ? "" : " ") + l;
        throw ConfigError("cka: probe points differ between the two models: [" + got_a +
                          "] vs [" + got_b + "]");
    }

    describe_run_dir(out, cfg);
    std::string csv = "layer_index,layer,cka\n";
    for (std::size_t li = 0; li < A.layers.size(); ++li) {
        const double v = metrics::linear_cka(A.rows[li], B.rows[li]);
        csv += std::to_string(li) + "," + A.layers[li] + "," + fmt_double(v) + "\n";
    }
    write_text(fs::path(out) / "cka.csv", csv);
    std::cout << "similarity over " << take << " samples (" << mode << "); "
              << A.layers.size() << " layers written to " << out << "/cka.csv\n";
    return 0;
}

int cmd_analyze(const RunConfig& cfg, const std::string& variable, const std::string& out_flag) {
    const std::string out = out_flag.empty() ? "analysis" : out_flag;
    const auto ds = open_dataset(cfg);
    const int var = variable_index(ds.manifest, variable, "analyze");
    const bool train_split = cfg.eval.split == "train";
    const Tensor frames = ds.denormalize(train_split ? ds.train_x : ds.test_x);
    const auto rep = data::analyze_distribution(frames, var, cfg.eval.n_bins);

    describe_run_dir(out, cfg);
    std::string values = "bin_lo,bin_hi,spatial_fraction,point_fraction\n";
    for (int b = 0; b < rep.n_bins; ++b)
        values += fmt_double(rep.value_edges[static_cast<std::size_t>(b)]) + "," +
                  fmt_double(rep.value_edges[static_cast<std::size_t>(b) + 1]) + "," +
                  fmt_double(rep.spatial_value_hist[static_cast<std::size_t>(b)]) + "," +
                  fmt_double(rep.point_value_hist[static_cast<std::size_t>(b)]) + "\n";
    write_text(fs::path(out) / ("values_" + variable + ".csv"), values);

    std::string hist = "kind,bin_lo,bin_hi,count\n";
    auto hist_rows = [&](const char* kind, const data::DistributionReport::DiffStats& st) {
        for (int b = 0; b < rep.n_bins; ++b)
            hist += std::string(kind) + "," + fmt_double(-3.0 + 6.0 * b / rep.n_bins) + "," +
                    fmt_double(-3.0 + 6.0 * (b + 1) / rep.n_bins) + "," +
                    std::to_string(st.hist[static_cast<std::size_t>(b)]) + "\n";
    };
    hist_rows("temporal", rep.temporal);
    hist_rows("spatial", rep.spatial);
    write_text(fs::path(out) / ("diff_hist_" + variable + ".csv"), hist);

    std::string stats = "kind,mean,std,total,kept\n";
    stats += "temporal," + fmt_double(rep.temporal.mean) + "," + fmt_double(rep.temporal.stddev) +
             "," + std::to_string(rep.temporal.total) + "," + std::to_string(rep.temporal.kept) +
             "\n";
    stats += "spatial," + fmt_double(rep.spatial.mean) + "," + fmt_double(rep.spatial.stddev) +
             "," + std::to_string(rep.spatial.total) + "," + std::to_string(rep.spatial.kept) +
             "\n";
    write_text(fs::path(out) / ("diff_stats_" + variable + ".csv"), stats);

    std::cout << "analyzed variable " << variable << " over " << frames.dim(0) << " "
              << cfg.eval.split << " samples; retained " << rep.temporal.kept << "/"
              << rep.temporal.total << " temporal and " << rep.spatial.kept << "/"
              << rep.spatial.total << " spatial differences; reports in " << out << "\n";
    return 0;
}

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"met2net: multivariate spatiotemporal forecasting toolbox"};
    app.require_subcommand(1);

    std::string config_path, out, ckpt, ckpt_b, variable = "ch1";
    std::vector<std::string> sets;
    bool resume = false;
    std::int64_t seed_flag = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON configuration file");
        sub->add_option("--set", sets, "dotted config override, e.g. train.lr=0.01");
        sub->add_option("--seed", seed_flag, "override both train.seed and data.seed");
        sub->add_option("--out", out, "output directory");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a moving-sprites dataset");
    add_common(gen);
    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_common(train_cmd);
    train_cmd->add_flag("--resume", resume, "continue from the run directory's latest checkpoint");
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
    CLI::App* predict_cmd = app.add_subcommand("predict", "write raw prediction blobs");
    add_common(predict_cmd);
    predict_cmd->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
    CLI::App* cka_cmd = app.add_subcommand("cka", "layerwise representation similarity");
    add_common(cka_cmd);
    cka_cmd->add_option("--checkpoint", ckpt, "checkpoint directory")->required();
    cka_cmd->add_option("--checkpoint-b", ckpt_b, "second checkpoint (model-vs-model mode)");
    CLI::App* analyze_cmd = app.add_subcommand("analyze", "dataset distribution analysis");
    add_common(analyze_cmd);
    analyze_cmd->add_option("--variable", variable, "variable name to analyze");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    RunConfig cfg = load_run_config(config_path, sets);
    if (seed_flag >= 0) {
        cfg.train.seed = static_cast<std::uint64_t>(seed_flag);
        cfg.data.seed = static_cast<std::uint64_t>(seed_flag);
        cfg.echo["train"]["seed"] = cfg.train.seed;
        cfg.echo["data"]["seed"] = cfg.data.seed;
    }

    if (gen->parsed()) return cmd_gen(cfg, out);
    if (train_cmd->parsed()) return cmd_train(cfg, out, resume);
    if (eval_cmd->parsed()) return cmd_eval(cfg, ckpt, out);
    if (predict_cmd->parsed()) return cmd_predict(cfg, ckpt, out);
    if (cka_cmd->parsed()) return cmd_cka(cfg, ckpt, ckpt_b, out);
    if (analyze_cmd->parsed()) return cmd_analyze(cfg, variable, out);
    return 2;
}

}  // namespace

int run(int argc, const char* const* argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace met2net::cli
