#include "met2net/model.hpp"

#include <cmath>
#include <numeric>

namespace met2net {

void ModelConfig::validate() const {
    if (n_vars < 1) throw ConfigError("model: n_vars must be >= 1");
    if (t_in < 1 || t_out < 1) throw ConfigError("model: t_in and t_out must be >= 1");
    if (static_cast<int>(channels_per_var.size()) != n_vars) {
        throw ConfigError("model: channels_per_var has " +
                          std::to_string(channels_per_var.size()) + " entries for n_vars=" +
                          std::to_string(n_vars));
    }
    for (int c : channels_per_var) {
        if (c < 1) throw ConfigError("model: channel counts must be >= 1");
        if (c != channels_per_var.front()) {
            throw ConfigError("model: per-variable channel counts must currently be uniform");
        }
    }
    if (height < 1 || width < 1) throw ConfigError("model: height/width must be >= 1");
    if (down_factor < 0) throw ConfigError("model: down_factor must be >= 0");
    const int div = 1 << down_factor;
    if (height % div != 0 || width % div != 0) {
        throw ConfigError("model: height/width (" + std::to_string(height) + "x" +
                          std::to_string(width) + ") not divisible by 2^down_factor=" +
                          std::to_string(div));
    }
    if (enc_depth < 1 || enc_depth < down_factor) {
        throw ConfigError("model: enc_depth must be >= max(1, down_factor)");
    }
    if (latent_dim < 1) throw ConfigError("model: latent_dim must be >= 1");
    if (translator_depth < 0) throw ConfigError("model: translator_depth must be >= 0");
    if (heads < 1) throw ConfigError("model: heads must be >= 1");
    if (va) {
        const std::int64_t d =
            static_cast<std::int64_t>(latent_dim) * latent_h() * latent_w();
        if (d % heads != 0) {
            throw ConfigError("model: attention feature length " + std::to_string(d) +
                              " not divisible by heads=" + std::to_string(heads));
        }
    }
}

namespace nn {

namespace {

void init_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, dist(rng));
}

int norm_groups(std::int64_t c) { return static_cast<int>(std::gcd<std::int64_t>(8, c)); }

}  // namespace

Conv2d::Conv2d(std::int64_t cin, std::int64_t cout, int k, int stride, int padding, int dilation,
               int groups, const std::string& path, Dtype dt, std::mt19937_64& rng,
               bool trainable, bool zero_init)
    : stride(stride), padding(padding), dilation(dilation), groups(groups) {
    Tensor wt({cout, cin / groups, k, k}, dt);
    Tensor bt({cout}, dt);
    if (!zero_init) {
        const double bound = 1.0 / std::sqrt(static_cast<double>((cin / groups) * k * k));
        init_uniform(wt, bound, rng);
        init_uniform(bt, bound, rng);
    }
    w = Parameter(std::move(wt), path + ".w", trainable);
    b = Parameter(std::move(bt), path + ".b", trainable);
}

GroupNorm::GroupNorm(std::int64_t c, const std::string& path, Dtype dt, bool trainable)
    : groups(norm_groups(c)) {
    gamma = Parameter(Tensor::full({c}, 1.0, dt), path + ".g", trainable);
    beta = Parameter(Tensor::zeros({c}, dt), path + ".b", trainable);
}

}  // namespace nn

// ---- Encoder --------------------------------------------------------------

Encoder::Encoder(const ModelConfig& cfg, int var_channels, const std::string& prefix,
                 std::mt19937_64& rng, bool trainable) {
    const int d = cfg.latent_dim;
    convs_.reserve(cfg.enc_depth);
    norms_.reserve(cfg.enc_depth);
    for (int i = 0; i < cfg.enc_depth; ++i) {
        const int cin = i == 0 ? var_channels : d;
        const int stride = i < cfg.down_factor ? 2 : 1;
        const std::string stage = prefix + ".s" + std::to_string(i);
        convs_.emplace_back(cin, d, 3, stride, 1, 1, 1, stage + ".conv", cfg.dtype, rng,
                            trainable);
        norms_.emplace_back(d, stage + ".norm", cfg.dtype, trainable);
    }
}

Tensor Encoder::forward(const Tensor& x) {
    Tensor t = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        t = ops::silu(norms_[i].forward(convs_[i].forward(t)));
    }
    return t;
}

void Encoder::collect(ParameterCollection& pc) {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].collect(pc);
        norms_[i].collect(pc);
    }
}

// ---- Decoder --------------------------------------------------------------

Decoder::Decoder(const ModelConfig& cfg, int var_channels, const std::string& prefix,
                 std::mt19937_64& rng, bool trainable) {
    const int d = cfg.latent_dim;
    convs_.reserve(cfg.enc_depth);
    norms_.reserve(cfg.enc_depth);
    for (int i = 0; i < cfg.enc_depth; ++i) {
        const std::string stage = prefix + ".s" + std::to_string(i);
        convs_.emplace_back(d, d, 3, 1, 1, 1, 1, stage + ".conv", cfg.dtype, rng, trainable);
        norms_.emplace_back(d, stage + ".norm", cfg.dtype, trainable);
    }
    out_ = nn::Conv2d(d, var_channels, 3, 1, 1, 1, 1, prefix + ".out", cfg.dtype, rng,
                      trainable);
    up_stages_ = cfg.down_factor;
}

Tensor Decoder::forward(const Tensor& x) {
    Tensor t = x;
    const std::size_t plain = convs_.size() - static_cast<std::size_t>(up_stages_);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        if (i >= plain) t = ops::upsample_nearest(t, 2);
        t = ops::silu(norms_[i].forward(convs_[i].forward(t)));
    }
    return out_.forward(t);
}

void Decoder::collect(ParameterCollection& pc) {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        convs_[i].collect(pc);
        norms_[i].collect(pc);
    }
    out_.collect(pc);
}

// ---- VariableAttention ----------------------------------------------------

VariableAttention::VariableAttention(const ModelConfig& cfg, const std::string& prefix,
                                     std::mt19937_64& rng, bool trainable)
    : heads_(cfg.heads) {
    const std::int64_t td = static_cast<std::int64_t>(cfg.t_in) * cfg.latent_dim;
    q_ = nn::Conv2d(td, cfg.latent_dim, 1, 1, 0, 1, 1, prefix + ".q", cfg.dtype, rng, trainable);
    k_ = nn::Conv2d(td, cfg.latent_dim, 1, 1, 0, 1, 1, prefix + ".k", cfg.dtype, rng, trainable);
    v_ = nn::Conv2d(td, td, 1, 1, 0, 1, 1, prefix + ".v", cfg.dtype, rng, trainable);
}

std::pair<Tensor, Tensor> VariableAttention::fold_qkv(const Tensor& z) {
    const std::int64_t B = z.dim(0), N = z.dim(1), TD = z.dim(2), h = z.dim(3), w = z.dim(4);
    Tensor f = ops::reshape(z, {B * N, TD, h, w});
    Tensor q = q_.forward(f);  // [B*N, D, h, w]
    Tensor k = k_.forward(f);
    Tensor v = v_.forward(f);  // [B*N, TD, h, w]
    const std::int64_t d = q.dim(1) * h * w, dv = TD * h * w;
    const std::int64_t nh = heads_, dh = d / nh, dvh = dv / nh;

    auto to_heads = [&](const Tensor& t, std::int64_t chunk) {
        Tensor s = ops::reshape(t, {B, N, nh, chunk});
        s = ops::permute(s, {0, 2, 1, 3});
        return ops::reshape(s, {B * nh, N, chunk});
    };
    Tensor qs = to_heads(q, dh);
    Tensor ks = to_heads(k, dh);
    Tensor vs = to_heads(v, dvh);

    Tensor scores = ops::bmm(qs, ops::permute(ks, {0, 2, 1}));  // [B*nh, N, N]
    Tensor a = ops::softmax(ops::scale(scores, 1.0 / std::sqrt(static_cast<double>(dh))), 2);
    return {a, vs};
}

Tensor VariableAttention::forward(const Tensor& z) {
    const std::int64_t B = z.dim(0), N = z.dim(1), TD = z.dim(2), h = z.dim(3), w = z.dim(4);
    auto [a, vs] = fold_qkv(z);
    Tensor out = ops::bmm(a, vs);  // [B*nh, N, dv/nh]
    out = ops::reshape(out, {B, heads_, N, out.dim(2)});
    out = ops::permute(out, {0, 2, 1, 3});
    return ops::reshape(out, {B, N, TD, h, w});
}

Tensor VariableAttention::attention_matrix(const Tensor& z) { return fold_qkv(z).first; }

void VariableAttention::collect(ParameterCollection& pc) {
    q_.collect(pc);
    k_.collect(pc);
    v_.collect(pc);
}

// ---- STBlock --------------------------------------------------------------

STBlock::STBlock(std::int64_t channels, const std::string& prefix, Dtype dt,
                 std::mt19937_64& rng, bool trainable)
    : n1_(channels, prefix + ".n1", dt, trainable), n2_(channels, prefix + ".n2", dt, trainable) {
    const std::int64_t c = channels;
    const std::int64_t bneck = std::max<std::int64_t>(1, c / 4);
    dw_ = nn::Conv2d(c, c, 5, 1, 2, 1, static_cast<int>(c), prefix + ".dw", dt, rng, trainable);
    dd_ = nn::Conv2d(c, c, 7, 1, 9, 3, static_cast<int>(c), prefix + ".dd", dt, rng, trainable);
    pw_ = nn::Conv2d(c, c, 1, 1, 0, 1, 1, prefix + ".pw", dt, rng, trainable, /*zero_init=*/true);
    gate1_ = nn::Conv2d(c, bneck, 1, 1, 0, 1, 1, prefix + ".gate1", dt, rng, trainable);
    gate2_ = nn::Conv2d(bneck, c, 1, 1, 0, 1, 1, prefix + ".gate2", dt, rng, trainable);
    ffn1_ = nn::Conv2d(c, 2 * c, 1, 1, 0, 1, 1, prefix + ".ffn1", dt, rng, trainable);
    ffn2_ = nn::Conv2d(2 * c, c, 1, 1, 0, 1, 1, prefix + ".ffn2", dt, rng, trainable,
                       /*zero_init=*/true);
}

Tensor STBlock::forward(const Tensor& x) {
    Tensor zn = n1_.forward(x);
    Tensor a = pw_.forward(dd_.forward(dw_.forward(zn)));
    Tensor gate = ops::sigmoid(gate2_.forward(ops::silu(gate1_.forward(ops::global_avg_pool(zn)))));
    Tensor u = ops::add(x, ops::mul(a, gate));
    Tensor f = ffn2_.forward(ops::silu(ffn1_.forward(n2_.forward(u))));
    return ops::add(u, f);
}

void STBlock::collect(ParameterCollection& pc) {
    n1_.collect(pc);
    dw_.collect(pc);
    dd_.collect(pc);
    pw_.collect(pc);
    gate1_.collect(pc);
    gate2_.collect(pc);
    n2_.collect(pc);
    ffn1_.collect(pc);
    ffn2_.collect(pc);
}

// ---- Translator -----------------------------------------------------------

Translator::Translator(const ModelConfig& cfg, const std::string& prefix, std::mt19937_64& rng,
                       bool trainable)
    : n_vars_(cfg.n_vars), t_in_(cfg.t_in), t_out_(cfg.t_out), latent_dim_(cfg.latent_dim) {
    if (cfg.va) va_.emplace(cfg, prefix + ".va", rng, trainable);
    const std::int64_t w_in = static_cast<std::int64_t>(t_in_) * latent_dim_;
    const std::int64_t w_out = static_cast<std::int64_t>(t_out_) * latent_dim_;
    if (t_in_ != t_out_) {
        proj_.emplace(w_in, w_out, 1, 1, 0, 1, 1, prefix + ".proj", cfg.dtype, rng, trainable);
    }
    blocks_.reserve(cfg.translator_depth);
    for (int i = 0; i < cfg.translator_depth; ++i) {
        blocks_.emplace_back(w_out, prefix + ".b" + std::to_string(i), cfg.dtype, rng, trainable);
    }
}

Tensor Translator::forward(const Tensor& z, ProbeSink* probes) {
    const std::int64_t B = z.dim(0), N = z.dim(1), h = z.dim(3), w = z.dim(4);
    Tensor t = z;
    if (va_) {
        t = va_->forward(t);
        if (probes) probes->put("post_va", t);
    }
    t = ops::reshape(t, {B * N, t.dim(2), h, w});
    if (proj_) t = proj_->forward(t);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        t = blocks_[i].forward(t);
        if (probes) {
            probes->put("block_" + std::to_string(i), ops::reshape(t.detached(),
                        {B, N, t.dim(1), h, w}));
        }
    }
    return ops::reshape(t, {B, N, t.dim(1), h, w});
}

void Translator::collect(ParameterCollection& pc) {
    if (va_) va_->collect(pc);
    if (proj_) proj_->collect(pc);
    for (auto& blk : blocks_) blk.collect(pc);
}

// ---- Met2Net --------------------------------------------------------------

Met2Net::Met2Net(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const int n_mod = cfg_.med ? cfg_.n_vars : 1;

    encoders_.reserve(n_mod);
    decoders_.reserve(n_mod);
    encoders_m_.reserve(n_mod);
    decoders_m_.reserve(n_mod);
    for (int i = 0; i < n_mod; ++i) {
        encoders_.emplace_back(cfg_, cfg_.channels_per_var[i], "enc." + std::to_string(i), rng,
                               true);
    }
    for (int i = 0; i < n_mod; ++i) {
        decoders_.emplace_back(cfg_, cfg_.channels_per_var[i], "dec." + std::to_string(i), rng,
                               true);
    }
    translator_.emplace(cfg_, "tr", rng, true);
    for (int i = 0; i < n_mod; ++i) {
        encoders_m_.emplace_back(cfg_, cfg_.channels_per_var[i], "m.enc." + std::to_string(i),
                                 rng, false);
    }
    for (int i = 0; i < n_mod; ++i) {
        decoders_m_.emplace_back(cfg_, cfg_.channels_per_var[i], "m.dec." + std::to_string(i),
                                 rng, false);
    }
    translator_m_.emplace(cfg_, "m.tr", rng, false);

    for (auto& e : encoders_) e.collect(encdec_);
    for (auto& d : decoders_) d.collect(encdec_);
    translator_->collect(tr_);
    for (auto& e : encoders_m_) e.collect(encdec_m_);
    for (auto& d : decoders_m_) d.collect(encdec_m_);
    translator_m_->collect(tr_m_);

    primary_.extend(encdec_);
    primary_.extend(tr_);
    all_.extend(primary_);
    all_.extend(encdec_m_);
    all_.extend(tr_m_);

    // Shadows start as exact copies of their primaries.
    auto sync = [](const ParameterCollection& from, const ParameterCollection& to) {
        if (from.size() != to.size()) throw ConfigError("model: shadow collection size mismatch");
        for (std::size_t i = 0; i < from.size(); ++i) {
            if (to[i]->path != "m." + from[i]->path) {
                throw ConfigError("model: shadow path mismatch: " + to[i]->path + " vs " +
                                  from[i]->path);
            }
            to[i]->value.copy_from(from[i]->value);
        }
    };
    sync(encdec_, encdec_m_);
    sync(tr_, tr_m_);
}

Encoder& Met2Net::encoder(int var, bool shadow) {
    auto& mods = shadow ? encoders_m_ : encoders_;
    return mods[cfg_.med ? var : 0];
}

Decoder& Met2Net::decoder(int var, bool shadow) {
    auto& mods = shadow ? decoders_m_ : decoders_;
    return mods[cfg_.med ? var : 0];
}

Tensor Met2Net::encode_all(const Tensor& x, bool use_shadow, ProbeSink* probes) {
    if (x.ndim() != 6 || x.dim(2) != cfg_.n_vars || x.dim(3) != cfg_.channels() ||
        x.dim(4) != cfg_.height || x.dim(5) != cfg_.width) {
        throw ShapeError("encode_all: input " + shape_str(x.shape()) +
                         " does not match the configured [B,T,N,C,H,W]");
    }
    const std::int64_t B = x.dim(0), T = x.dim(1), C = cfg_.channels();
    std::vector<Tensor> tokens;
    tokens.reserve(cfg_.n_vars);
    for (int n = 0; n < cfg_.n_vars; ++n) {
        Tensor xn = ops::reshape(ops::slice(x, 2, n, 1), {B * T, C, cfg_.height, cfg_.width});
        Tensor z = encoder(n, use_shadow).forward(xn);  // [B*T, D, h, w]
        tokens.push_back(
            ops::reshape(z, {B, T * cfg_.latent_dim, cfg_.latent_h(), cfg_.latent_w()}));
    }
    Tensor z = ops::stack(tokens, 1);  // [B, N, T*D, h, w]
    if (probes) probes->put("enc_out", z);
    return z;
}

Tensor Met2Net::translate(const Tensor& z, bool use_shadow, ProbeSink* probes) {
    const std::int64_t td = static_cast<std::int64_t>(cfg_.t_in) * cfg_.latent_dim;
    if (z.ndim() != 5 || z.dim(1) != cfg_.n_vars || z.dim(2) != td ||
        z.dim(3) != cfg_.latent_h() || z.dim(4) != cfg_.latent_w()) {
        throw ShapeError("translate: latent " + shape_str(z.shape()) +
                         " does not match the configured [B,N,T*D,h,w]");
    }
    return (use_shadow ? *translator_m_ : *translator_).forward(z, probes);
}

Tensor Met2Net::decode_all(const Tensor& z, bool use_shadow) {
    const std::int64_t td = static_cast<std::int64_t>(cfg_.t_out) * cfg_.latent_dim;
    if (z.ndim() != 5 || z.dim(1) != cfg_.n_vars || z.dim(2) != td ||
        z.dim(3) != cfg_.latent_h() || z.dim(4) != cfg_.latent_w()) {
        throw ShapeError("decode_all: latent " + shape_str(z.shape()) +
                         " does not match the configured [B,N,T'*D,h,w]");
    }
    const std::int64_t B = z.dim(0), Tp = cfg_.t_out, C = cfg_.channels();
    std::vector<Tensor> frames;
    frames.reserve(cfg_.n_vars);
    for (int n = 0; n < cfg_.n_vars; ++n) {
        Tensor zn = ops::reshape(ops::slice(z, 1, n, 1),
                                 {B * Tp, cfg_.latent_dim, cfg_.latent_h(), cfg_.latent_w()});
        Tensor y = decoder(n, use_shadow).forward(zn);  // [B*T', C, H, W]
        frames.push_back(ops::reshape(y, {B, Tp, 1, C, cfg_.height, cfg_.width}));
    }
    return ops::concat(frames, 2);  // [B, T', N, C, H, W]
}

Tensor Met2Net::forward_inference(const Tensor& x) {
    autodiff::NoGradGuard ng;
    const bool sh = cfg_.inference_use_shadow;
    return decode_all(translate(encode_all(x, sh), sh), sh);
}

Tensor Met2Net::forward_inference(const Tensor& x, ProbeSink& probes) {
    autodiff::NoGradGuard ng;
    const bool sh = cfg_.inference_use_shadow;
    Tensor zp = translate(encode_all(x, sh, &probes), sh, &probes);
    probes.put("dec_in", zp);
    return decode_all(zp, sh);
}

std::int64_t Met2Net::inference_param_count() const {
    return primary_.total_elements();
}

}  // namespace met2net
