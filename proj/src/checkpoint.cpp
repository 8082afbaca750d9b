#include "met2net/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

namespace met2net {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_blob(const fs::path& file, const Tensor& t) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot open '" + file.string() + "' for writing");
    const char* bytes = t.dtype() == Dtype::F32
                            ? reinterpret_cast<const char*>(t.data<float>().data())
                            : reinterpret_cast<const char*>(t.data<double>().data());
    out.write(bytes, static_cast<std::streamsize>(t.numel() * dtype_size(t.dtype())));
    if (!out) throw DataError("checkpoint: short write to '" + file.string() + "'");
}

void read_blob(const fs::path& file, Tensor& t, const std::string& path) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("checkpoint: missing blob for parameter '" + path + "'");
    const std::uintmax_t expect = static_cast<std::uintmax_t>(t.numel()) * dtype_size(t.dtype());
    std::error_code ec;
    const std::uintmax_t actual = fs::file_size(file, ec);
    if (ec || actual != expect) {
        throw DataError("checkpoint: blob for parameter '" + path + "' holds " +
                        std::to_string(ec ? 0 : actual) + " bytes, expected " +
                        std::to_string(expect));
    }
    char* bytes = t.dtype() == Dtype::F32 ? reinterpret_cast<char*>(t.data<float>().data())
                                          : reinterpret_cast<char*>(t.data<double>().data());
    in.read(bytes, static_cast<std::streamsize>(expect));
    if (in.gcount() != static_cast<std::streamsize>(expect)) {
        throw DataError("checkpoint: short read on blob for parameter '" + path + "'");
    }
}

json shape_json(const Shape& s) {
    json a = json::array();
    for (auto d : s) a.push_back(d);
    return a;
}

}  // namespace

json model_config_json(const ModelConfig& cfg) {
    return json{{"n_vars", cfg.n_vars},
                {"channels_per_var", cfg.channels_per_var},
                {"t_in", cfg.t_in},
                {"t_out", cfg.t_out},
                {"height", cfg.height},
                {"width", cfg.width},
                {"latent_dim", cfg.latent_dim},
                {"down_factor", cfg.down_factor},
                {"enc_depth", cfg.enc_depth},
                {"translator_depth", cfg.translator_depth},
                {"heads", cfg.heads},
                {"med", cfg.med},
                {"va", cfg.va},
                {"dtype", dtype_name(cfg.dtype)}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    try {
        cfg.n_vars = j.at("n_vars").get<int>();
        cfg.channels_per_var = j.at("channels_per_var").get<std::vector<int>>();
        cfg.t_in = j.at("t_in").get<int>();
        cfg.t_out = j.at("t_out").get<int>();
        cfg.height = j.at("height").get<int>();
        cfg.width = j.at("width").get<int>();
        cfg.latent_dim = j.at("latent_dim").get<int>();
        cfg.down_factor = j.at("down_factor").get<int>();
        cfg.enc_depth = j.at("enc_depth").get<int>();
        cfg.translator_depth = j.at("translator_depth").get<int>();
        cfg.heads = j.at("heads").get<int>();
        cfg.med = j.at("med").get<bool>();
        cfg.va = j.at("va").get<bool>();
        const std::string dt = j.at("dtype").get<std::string>();
        if (dt != "f32" && dt != "f64")
            throw DataError("checkpoint: unknown dtype '" + dt + "' in model block");
        cfg.dtype = dt == "f64" ? Dtype::F64 : Dtype::F32;
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: bad model block: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void save_checkpoint(const std::string& dir, Met2Net& model, const Adam& opt,
                     const CheckpointMeta& meta) {
    const fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root / "params", ec);
    if (ec) throw DataError("checkpoint: cannot create '" + (root / "params").string() + "'");

    json params = json::array();
    for (auto* p : model.all_params()) {
        write_blob(root / "params" / (p->path + ".bin"), p->value);
        params.push_back({{"path", p->path}, {"shape", shape_json(p->value.shape())}});
    }
    json moments = json::array();
    for (const auto& [path, mom] : opt.state()) {
        write_blob(root / "params" / ("opt.m." + path + ".bin"), mom.m);
        write_blob(root / "params" / ("opt.v." + path + ".bin"), mom.v);
        moments.push_back(path);
    }

    json manifest{{"format", "met2net.checkpoint.v1"},
                  {"model", model_config_json(model.config())},
                  {"config", meta.config},
                  {"step", meta.step},
                  {"epoch", meta.epoch},
                  {"rng", meta.rng_state},
                  {"best_val_mse", std::isfinite(meta.best_val_mse)
                                       ? json(meta.best_val_mse)
                                       : json(nullptr)},
                  {"params", params},
                  {"optimizer", json{{"type", "adam"},
                                     {"lr", opt.lr()},
                                     {"beta1", opt.beta1()},
                                     {"beta2", opt.beta2()},
                                     {"eps", opt.eps()},
                                     {"steps", opt.step_count()},
                                     {"moments", moments}}}};
    std::ofstream out(root / "manifest.json", std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot write '" + (root / "manifest.json").string() + "'");
    out << manifest.dump(2) << "\n";
    if (!out) throw DataError("checkpoint: short write to manifest");
}

CheckpointMeta load_checkpoint(const std::string& dir, Met2Net& model, Adam& opt) {
    const fs::path root(dir);
    json manifest;
    {
        std::ifstream in(root / "manifest.json");
        if (!in) throw DataError("checkpoint: missing manifest at '" + dir + "'");
        try {
            in >> manifest;
        } catch (const json::exception& e) {
            throw DataError(std::string("checkpoint: corrupt manifest: ") + e.what());
        }
    }
    try {
        if (manifest.at("format").get<std::string>() != "met2net.checkpoint.v1") {
            throw DataError("checkpoint: unrecognized format tag");
        }
        const json want = model_config_json(model.config());
        const json& have = manifest.at("model");
        for (auto& [key, val] : want.items()) {
            if (!have.contains(key) || have.at(key) != val) {
                throw ConfigError("checkpoint: config mismatch on '" + key + "': checkpoint has " +
                                  (have.contains(key) ? have.at(key).dump() : "nothing") +
                                  ", model expects " + val.dump());
            }
        }

        // The stored path set must cover the model's exactly once.
        std::set<std::string> stored;
        for (const auto& entry : manifest.at("params")) {
            if (!stored.insert(entry.at("path").get<std::string>()).second) {
                throw DataError("checkpoint: duplicate parameter path '" +
                                entry.at("path").get<std::string>() + "' in manifest");
            }
        }
        if (stored.size() != model.all_params().size()) {
            throw DataError("checkpoint: manifest lists " + std::to_string(stored.size()) +
                            " parameters, model has " +
                            std::to_string(model.all_params().size()));
        }
        for (auto* p : model.all_params()) {
            if (!stored.count(p->path)) {
                throw DataError("checkpoint: manifest lacks parameter '" + p->path + "'");
            }
        }

        for (auto* p : model.all_params()) {
            read_blob(root / "params" / (p->path + ".bin"), p->value, p->path);
        }

        const json& o = manifest.at("optimizer");
        opt.set_lr(o.at("lr").get<double>());
        opt.set_step_count(o.at("steps").get<std::int64_t>());
        opt.state().clear();
        for (const auto& path : o.at("moments")) {
            const std::string key = path.get<std::string>();
            Parameter* p = model.all_params().find(key);
            if (!p) throw DataError("checkpoint: optimizer moment for unknown parameter '" + key + "'");
            Adam::Moments mom{Tensor::zeros(p->value.shape(), p->value.dtype()),
                              Tensor::zeros(p->value.shape(), p->value.dtype())};
            read_blob(root / "params" / ("opt.m." + key + ".bin"), mom.m, "opt.m." + key);
            read_blob(root / "params" / ("opt.v." + key + ".bin"), mom.v, "opt.v." + key);
            opt.state().emplace(key, std::move(mom));
        }

        CheckpointMeta meta;
        meta.config = manifest.at("config");
        meta.step = manifest.at("step").get<std::int64_t>();
        meta.epoch = manifest.at("epoch").get<int>();
        meta.rng_state = manifest.at("rng").get<std::string>();
        if (!manifest.at("best_val_mse").is_null()) {
            meta.best_val_mse = manifest.at("best_val_mse").get<double>();
        }
        return meta;
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: corrupt manifest: ") + e.what());
    }
}

}  // namespace met2net
