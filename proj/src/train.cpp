#include "met2net/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "met2net/checkpoint.hpp"
#include "met2net/metrics.hpp"

namespace met2net {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("train: alpha must lie in [0,1], got " + std::to_string(alpha));
    }
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("train: betas must lie in [0,1)");
    }
    if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (!(w_rec >= 0.0) || !(w_pre >= 0.0)) {
        throw ConfigError("train: loss weights must be non-negative");
    }
    if (val_interval < 1) throw ConfigError("train: val_interval must be >= 1");
}

void momentum_update(const ParameterCollection& shadow, const ParameterCollection& primary,
                     double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("momentum_update: alpha must lie in [0,1], got " +
                          std::to_string(alpha));
    }
    if (shadow.size() != primary.size()) {
        throw ConfigError("momentum_update: collection sizes differ (" +
                          std::to_string(shadow.size()) + " shadows, " +
                          std::to_string(primary.size()) + " primaries)");
    }
    if (alpha == 1.0) return;  // exact fixed point
    for (std::size_t i = 0; i < shadow.size(); ++i) {
        Parameter* s = shadow[i];
        Parameter* p = primary[i];
        if (s->path != "m." + p->path) {
            throw ConfigError("momentum_update: '" + s->path + "' is not the shadow of '" +
                              p->path + "'");
        }
        if (s->value.shape() != p->value.shape() || s->value.dtype() != p->value.dtype()) {
            throw ShapeError("momentum_update: shape mismatch on '" + p->path + "'");
        }
        if (alpha == 0.0) {
            s->value.copy_from(p->value);  // exact full copy
            continue;
        }
        dispatch(s->value.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto sv = s->value.data<T>();
            auto pv = p->value.data<T>();
            // Per-element arithmetic in double so rounding enters only once
            // per step; at f32 this keeps the k-step geometric recurrence
            // within 1e-6 of its closed form for k <= 1000.
            for (std::int64_t j = 0; j < s->value.numel(); ++j) {
                sv[j] = static_cast<T>(alpha * static_cast<double>(sv[j]) +
                                       (1.0 - alpha) * static_cast<double>(pv[j]));
            }
        });
    }
}

namespace {

double now_ms() {
    using namespace std::chrono;
    return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw NumericError(std::string("train_step: non-finite ") + what + " (" +
                           std::to_string(v) + ")");
    }
}

Tensor weighted_total(const Tensor& loss_rec, const Tensor& loss_pre, const TrainConfig& cfg) {
    if (cfg.w_rec == 1.0 && cfg.w_pre == 1.0) return ops::add(loss_rec, loss_pre);
    return ops::add(ops::scale(loss_rec, cfg.w_rec), ops::scale(loss_pre, cfg.w_pre));
}

/// Copy the rows `order[start .. start+count)` of a [S,...] tensor.
Tensor gather_rows(const Tensor& src, const std::vector<std::int64_t>& order, std::int64_t start,
                   std::int64_t count) {
    Shape shape = src.shape();
    shape[0] = count;
    Tensor out(shape, src.dtype());
    const std::int64_t row = src.numel() / src.dim(0);
    dispatch(src.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto sp = src.data<T>();
        auto op = out.data<T>();
        for (std::int64_t i = 0; i < count; ++i) {
            std::memcpy(op.data() + i * row, sp.data() + order[start + i] * row,
                        sizeof(T) * row);
        }
    });
    return out;
}

}  // namespace

StepReport train_step(Met2Net& model, Adam& opt, const Tensor& x, const Tensor& y,
                      const TrainConfig& cfg) {
    const double t0 = now_ms();
    if (x.dim(0) != y.dim(0)) {
        throw ShapeError("train_step: batch sizes differ: " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
    }

    // Stage 1: reconstruct the target through the frozen shadow translator;
    // only the gradient-updated codecs sit on the tape.
    Tensor zx = model.encode_all(x, false);
    Tensor zy1 = model.translate(zx, true);
    Tensor yp = model.decode_all(zy1, false);
    Tensor loss_rec = ops::mse(yp, y);
    check_finite(loss_rec.item(), "stage-1 reconstruction loss");

    // Momentum update of the shadow codecs (deliberately before backward).
    momentum_update(model.encdec_shadow_params(), model.encdec_params(), cfg.alpha);

    // Stage 2: predict shadow-encoder latents with the gradient-updated
    // translator; inputs and targets are tape-free by construction.
    Tensor zxm, zym;
    {
        autodiff::NoGradGuard ng;
        zxm = model.encode_all(x, true);
        zym = model.encode_all(y, true);
    }
    Tensor zhat = model.translate(zxm, false);
    Tensor loss_pre = ops::mse(zhat, zym);
    check_finite(loss_pre.item(), "stage-2 prediction loss");

    // Shadow-decoded forecast, for logging only.
    double monitor;
    {
        autodiff::NoGradGuard ng;
        monitor = ops::mse(model.decode_all(zhat.detached(), true), y).item();
    }

    // Momentum update of the shadow translator.
    momentum_update(model.translator_shadow_params(), model.translator_params(), cfg.alpha);

    // One combined backward, one optimizer step over all primaries.
    Tensor total = weighted_total(loss_rec, loss_pre, cfg);
    autodiff::backward(total);
    opt.step(model.primary_params());

    StepReport r;
    r.loss_rec = loss_rec.item();
    r.loss_pre = loss_pre.item();
    r.total = total.item();
    r.monitor_mse = monitor;
    r.step = opt.step_count();
    r.wall_ms = now_ms() - t0;
    return r;
}

StepReport train_step_e2e(Met2Net& model, Adam& opt, const Tensor& x, const Tensor& y,
                          const TrainConfig& cfg) {
    const double t0 = now_ms();
    if (x.dim(0) != y.dim(0)) {
        throw ShapeError("train_step_e2e: batch sizes differ: " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
    }
    Tensor yp = model.decode_all(model.translate(model.encode_all(x, false), false), false);
    Tensor loss = ops::mse(yp, y);
    if (!std::isfinite(loss.item())) {
        throw NumericError("train_step_e2e: non-finite loss (" + std::to_string(loss.item()) +
                           ")");
    }
    autodiff::backward(loss);
    opt.step(model.primary_params());

    StepReport r;
    r.loss_rec = loss.item();
    r.loss_pre = 0.0;
    r.total = loss.item();
    r.step = opt.step_count();
    r.wall_ms = now_ms() - t0;
    return r;
}

double validation_mse(Met2Net& model, const Tensor& x, const Tensor& y, int batch_size) {
    if (!x.defined() || !y.defined() || x.dim(0) == 0) {
        throw DataError("validation_mse: empty validation split");
    }
    if (x.dim(0) != y.dim(0)) {
        throw ShapeError("validation_mse: sample counts differ: " + shape_str(x.shape()) +
                         " vs " + shape_str(y.shape()));
    }
    const std::int64_t S = x.dim(0);
    std::vector<std::int64_t> order(S);
    std::iota(order.begin(), order.end(), 0);
    double se = 0.0;
    std::int64_t n = 0;
    for (std::int64_t start = 0; start < S; start += batch_size) {
        const std::int64_t count = std::min<std::int64_t>(batch_size, S - start);
        Tensor pred = model.forward_inference(gather_rows(x, order, start, count));
        Tensor truth = gather_rows(y, order, start, count);
        se += metrics::pixel_metrics(pred, truth).mse * static_cast<double>(pred.numel());
        n += pred.numel();
    }
    return se / static_cast<double>(n);
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void append_history(const fs::path& file, const std::vector<HistoryRow>& rows, bool fresh) {
    std::ofstream out(file, fresh ? std::ios::trunc : std::ios::app);
    if (!out) throw DataError("fit: cannot write '" + file.string() + "'");
    if (fresh) out << "epoch,step,loss_rec,loss_pre,total,val_mse\n";
    for (const auto& r : rows) {
        out << r.epoch << ',' << r.step << ',' << fmt_double(r.loss_rec) << ','
            << fmt_double(r.loss_pre) << ',' << fmt_double(r.total) << ','
            << (r.val_mse ? fmt_double(*r.val_mse) : "") << '\n';
    }
    out.flush();
    if (!out) throw DataError("fit: short write to '" + file.string() + "'");
}

/// Drop rows of epochs >= `from_epoch` (an interrupted epoch's partial rows).
void truncate_history(const fs::path& file, int from_epoch) {
    std::ifstream in(file);
    if (!in) throw DataError("fit: resume found no '" + file.string() + "'");
    std::vector<std::string> keep;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            keep.push_back(line);
            header = false;
            continue;
        }
        if (line.empty()) continue;
        const int epoch = std::atoi(line.c_str());
        if (epoch < from_epoch) keep.push_back(line);
    }
    in.close();
    std::ofstream out(file, std::ios::trunc);
    for (const auto& l : keep) out << l << '\n';
}

}  // namespace

std::vector<HistoryRow> fit(Met2Net& model, const FitData& data, const TrainConfig& cfg,
                            const std::string& run_dir, const nlohmann::json& config_echo,
                            bool resume) {
    cfg.validate();
    if (!data.train_x.defined() || !data.train_y.defined() || data.train_x.dim(0) == 0) {
        throw DataError("fit: empty training split");
    }
    if (data.train_x.dim(0) != data.train_y.dim(0)) {
        throw ShapeError("fit: training input/target sample counts differ");
    }
    const bool has_val = data.val_x.defined() && data.val_y.defined();
    const bool artifacts = !run_dir.empty();
    const fs::path root(run_dir);
    const fs::path history_file = root / "history.csv";
    const fs::path ckpt_latest = root / "checkpoints" / "latest";
    const fs::path ckpt_best = root / "checkpoints" / "best";

    Adam opt(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    std::mt19937_64 shuffle_rng(cfg.seed);
    int start_epoch = 0;
    std::int64_t gstep = 0;
    double best = std::numeric_limits<double>::infinity();

    if (resume && artifacts && fs::exists(ckpt_latest / "manifest.json")) {
        CheckpointMeta meta = load_checkpoint(ckpt_latest.string(), model, opt);
        if (!config_echo.empty() && !meta.config.empty() && meta.config != config_echo) {
            throw ConfigError("fit: resume config does not match the checkpointed run");
        }
        start_epoch = meta.epoch;
        gstep = meta.step;
        best = meta.best_val_mse;
        std::istringstream st(meta.rng_state);
        st >> shuffle_rng;
        if (!st) throw DataError("fit: corrupt RNG state in checkpoint");
        truncate_history(history_file, start_epoch);
    } else if (artifacts) {
        fs::create_directories(root);
        append_history(history_file, {}, /*fresh=*/true);
    }

    const std::int64_t S = data.train_x.dim(0);
    std::vector<std::int64_t> order(S);
    std::vector<HistoryRow> produced;

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        std::vector<HistoryRow> rows;
        for (std::int64_t start = 0; start < S; start += cfg.batch_size) {
            const std::int64_t count = std::min<std::int64_t>(cfg.batch_size, S - start);
            Tensor bx = gather_rows(data.train_x, order, start, count);
            Tensor by = gather_rows(data.train_y, order, start, count);
            StepReport r = cfg.its_enabled ? train_step(model, opt, bx, by, cfg)
                                           : train_step_e2e(model, opt, bx, by, cfg);
            ++gstep;
            rows.push_back({epoch, gstep, r.loss_rec, r.loss_pre, r.total, std::nullopt});
        }

        const bool do_val =
            has_val && ((epoch + 1) % cfg.val_interval == 0 || epoch == cfg.epochs - 1);
        if (do_val) {
            const double v = validation_mse(model, data.val_x, data.val_y, cfg.batch_size);
            rows.back().val_mse = v;
            if (artifacts && v < best) {
                best = v;
                CheckpointMeta meta;
                meta.config = config_echo;
                meta.step = gstep;
                meta.epoch = epoch + 1;
                meta.best_val_mse = best;
                std::ostringstream st;
                st << shuffle_rng;
                meta.rng_state = st.str();
                save_checkpoint(ckpt_best.string(), model, opt, meta);
            } else if (!artifacts && v < best) {
                best = v;
            }
        }

        if (artifacts) {
            append_history(history_file, rows, /*fresh=*/false);
            CheckpointMeta meta;
            meta.config = config_echo;
            meta.step = gstep;
            meta.epoch = epoch + 1;
            meta.best_val_mse = best;
            std::ostringstream st;
            st << shuffle_rng;
            meta.rng_state = st.str();
            save_checkpoint(ckpt_latest.string(), model, opt, meta);
        }
        produced.insert(produced.end(), rows.begin(), rows.end());
    }
    return produced;
}

}  // namespace met2net
