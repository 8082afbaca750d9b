#include "met2net/runconfig.hpp"

#include <fstream>

namespace met2net {

using json = nlohmann::json;

namespace {

/// Overlays `patch` onto `base`, requiring every patched key to already
/// exist in `base` with a compatible JSON type.
void merge_strict(json& base, const json& patch, const std::string& prefix) {
    for (const auto& [key, value] : patch.items()) {
        const std::string dotted = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw ConfigError("config: unknown key " + dotted);
        json& slot = base[key];
        if (slot.is_object() != value.is_object())
            throw ConfigError("config: key " + dotted + " has the wrong structure");
        if (slot.is_object()) {
            merge_strict(slot, value, dotted);
            continue;
        }
        const bool both_numeric = slot.is_number() && value.is_number();
        if (!both_numeric && slot.type() != value.type())
            throw ConfigError("config: bad type for " + dotted);
        slot = value;
    }
}

void apply_override(json& base, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("config: override must look like section.key=value, got '" + spec + "'");
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
        if (value.is_object() || value.is_array())
            throw ConfigError("config: override " + path + " must be a scalar");
    } catch (const json::exception&) {
        value = raw;  // unquoted strings are taken literally
    }

    json* slot = &base;
    std::size_t begin = 0;
    std::string walked;
    while (true) {
        const auto dot = path.find('.', begin);
        const std::string part = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
        walked = walked.empty() ? part : walked + "." + part;
        if (!slot->is_object() || !slot->contains(part))
            throw ConfigError("config: unknown key " + walked);
        slot = &(*slot)[part];
        if (dot == std::string::npos) break;
        begin = dot + 1;
    }
    if (slot->is_object()) throw ConfigError("config: " + path + " is a section, not a value");
    const bool both_numeric = slot->is_number() && value.is_number();
    if (!both_numeric && slot->type() != value.type())
        throw ConfigError("config: bad type for " + path);
    *slot = value;
}

template <class T>
T get_as(const json& j, const char* section, const char* key) {
    try {
        return j.at(section).at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value for ") + section + "." + key + ": " +
                          e.what());
    }
}

}  // namespace

void EvalConfig::validate() const {
    if (split != "train" && split != "test")
        throw ConfigError("config: eval.split must be 'train' or 'test'");
    if (batch_size < 1) throw ConfigError("config: eval.batch_size must be >= 1");
    if (n_bins < 1) throw ConfigError("config: eval.n_bins must be >= 1");
    if (cka_samples < 2 || cka_samples > 512)
        throw ConfigError("config: eval.cka_samples must be in [2,512]");
    if (!(data_range > 0.0)) throw ConfigError("config: eval.data_range must be > 0");
    if (heatmap_samples < 0) throw ConfigError("config: eval.heatmap_samples must be >= 0");
}

ModelConfig RunConfig::model_for(const data::DatasetManifest& m) const {
    ModelConfig mc;
    mc.n_vars = m.n_vars;
    mc.channels_per_var.assign(static_cast<std::size_t>(m.n_vars), m.channels);
    mc.t_in = m.t_in;
    mc.t_out = m.t_out;
    mc.height = m.height;
    mc.width = m.width;
    mc.latent_dim = latent_dim;
    mc.down_factor = down_factor;
    mc.enc_depth = enc_depth;
    mc.translator_depth = translator_depth;
    mc.heads = heads;
    mc.med = ablation.med;
    mc.va = ablation.va;
    mc.inference_use_shadow = inference_use_shadow;
    mc.dtype = dtype == "f64" ? Dtype::F64 : Dtype::F32;
    mc.validate();
    return mc;
}

json default_run_config_json() {
    const RunConfig d;
    return json{
        {"model",
         {{"latent_dim", d.latent_dim},
          {"down_factor", d.down_factor},
          {"enc_depth", d.enc_depth},
          {"translator_depth", d.translator_depth},
          {"heads", d.heads},
          {"inference_use_shadow", d.inference_use_shadow},
          {"dtype", d.dtype}}},
        {"train",
         {{"alpha", d.train.alpha},
          {"lr", d.train.lr},
          {"beta1", d.train.beta1},
          {"beta2", d.train.beta2},
          {"eps", d.train.eps},
          {"batch_size", d.train.batch_size},
          {"epochs", d.train.epochs},
          {"seed", d.train.seed},
          {"w_rec", d.train.w_rec},
          {"w_pre", d.train.w_pre},
          {"val_interval", d.train.val_interval}}},
        {"data",
         {{"dir", d.data_dir},
          {"height", d.data.height},
          {"width", d.data.width},
          {"n_sprites", d.data.n_sprites},
          {"t_in", d.data.t_in},
          {"t_out", d.data.t_out},
          {"n_train", d.data.n_train},
          {"n_test", d.data.n_test},
          {"sprite_source", d.data.sprite_source},
          {"min_speed", d.data.min_speed},
          {"max_speed", d.data.max_speed},
          {"seed", d.data.seed}}},
        {"eval",
         {{"split", d.eval.split},
          {"batch_size", d.eval.batch_size},
          {"n_bins", d.eval.n_bins},
          {"cka_samples", d.eval.cka_samples},
          {"cka_var_a", d.eval.cka_var_a},
          {"cka_var_b", d.eval.cka_var_b},
          {"data_range", d.eval.data_range},
          {"heatmap_samples", d.eval.heatmap_samples}}},
        {"ablation",
         {{"med", d.ablation.med}, {"va", d.ablation.va}, {"its", d.ablation.its}}}};
}

RunConfig parse_run_config(const json& merged) {
    RunConfig c;
    c.latent_dim = get_as<int>(merged, "model", "latent_dim");
    c.down_factor = get_as<int>(merged, "model", "down_factor");
    c.enc_depth = get_as<int>(merged, "model", "enc_depth");
    c.translator_depth = get_as<int>(merged, "model", "translator_depth");
    c.heads = get_as<int>(merged, "model", "heads");
    c.inference_use_shadow = get_as<bool>(merged, "model", "inference_use_shadow");
    c.dtype = get_as<std::string>(merged, "model", "dtype");
    if (c.dtype != "f32" && c.dtype != "f64")
        throw ConfigError("config: model.dtype must be 'f32' or 'f64'");

    c.train.alpha = get_as<double>(merged, "train", "alpha");
    c.train.lr = get_as<double>(merged, "train", "lr");
    c.train.beta1 = get_as<double>(merged, "train", "beta1");
    c.train.beta2 = get_as<double>(merged, "train", "beta2");
    c.train.eps = get_as<double>(merged, "train", "eps");
    c.train.batch_size = get_as<int>(merged, "train", "batch_size");
    c.train.epochs = get_as<int>(merged, "train", "epochs");
    c.train.seed = get_as<std::uint64_t>(merged, "train", "seed");
    c.train.w_rec = get_as<double>(merged, "train", "w_rec");
    c.train.w_pre = get_as<double>(merged, "train", "w_pre");
    c.train.val_interval = get_as<int>(merged, "train", "val_interval");

    c.data_dir = get_as<std::string>(merged, "data", "dir");
    c.data.height = get_as<int>(merged, "data", "height");
    c.data.width = get_as<int>(merged, "data", "width");
    c.data.n_sprites = get_as<int>(merged, "data", "n_sprites");
    c.data.t_in = get_as<int>(merged, "data", "t_in");
    c.data.t_out = get_as<int>(merged, "data", "t_out");
    c.data.n_train = get_as<std::int64_t>(merged, "data", "n_train");
    c.data.n_test = get_as<std::int64_t>(merged, "data", "n_test");
    c.data.sprite_source = get_as<std::string>(merged, "data", "sprite_source");
    c.data.min_speed = get_as<double>(merged, "data", "min_speed");
    c.data.max_speed = get_as<double>(merged, "data", "max_speed");
    c.data.seed = get_as<std::uint64_t>(merged, "data", "seed");

    c.eval.split = get_as<std::string>(merged, "eval", "split");
    c.eval.batch_size = get_as<int>(merged, "eval", "batch_size");
    c.eval.n_bins = get_as<int>(merged, "eval", "n_bins");
    c.eval.cka_samples = get_as<int>(merged, "eval", "cka_samples");
    c.eval.cka_var_a = get_as<std::string>(merged, "eval", "cka_var_a");
    c.eval.cka_var_b = get_as<std::string>(merged, "eval", "cka_var_b");
    c.eval.data_range = get_as<double>(merged, "eval", "data_range");
    c.eval.heatmap_samples = get_as<int>(merged, "eval", "heatmap_samples");
    c.eval.validate();

    c.ablation.med = get_as<bool>(merged, "ablation", "med");
    c.ablation.va = get_as<bool>(merged, "ablation", "va");
    c.ablation.its = get_as<bool>(merged, "ablation", "its");
    c.train.its_enabled = c.ablation.its;
    c.train.validate();

    c.echo = merged;
    return c;
}

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
    json merged = default_run_config_json();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw DataError("config: cannot open " + config_path);
        json file;
        try {
            file = json::parse(in);
        } catch (const json::exception& e) {
            throw DataError("config: cannot parse " + config_path + ": " + e.what());
        }
        if (!file.is_object()) throw ConfigError("config: top level must be an object");
        merge_strict(merged, file, "");
    }
    for (const auto& spec : overrides) apply_override(merged, spec);
    return parse_run_config(merged);
}

}  // namespace met2net
