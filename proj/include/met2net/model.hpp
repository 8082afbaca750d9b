#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "met2net/ops.hpp"
#include "met2net/param.hpp"
#include "met2net/tensor.hpp"

namespace met2net {

/// Architecture hyperparameters. Data tensors are [B, T, N, C, H, W]; latent
/// tokens are [B, N, T*D, h, w] with h = H / 2^s, w = W / 2^s.
struct ModelConfig {
    int n_vars = 1;                          // N
    std::vector<int> channels_per_var = {1};  // C per variable (currently uniform)
    int t_in = 10;                           // T
    int t_out = 10;                          // T'
    int height = 64;                         // H
    int width = 64;                          // W
    int latent_dim = 8;                      // D: channels per frame embedding
    int down_factor = 2;                     // s: spatial compression 2^s
    int enc_depth = 2;                       // conv stages per encoder (>= s)
    int translator_depth = 2;                // spatiotemporal blocks
    int heads = 1;                           // attention heads over the variable axis
    bool med = true;                         // per-variable encoder/decoder pairs
    bool va = true;                          // variable attention in the translator
    bool inference_use_shadow = false;       // serve predictions from shadow modules
    Dtype dtype = Dtype::F32;

    int channels() const { return channels_per_var.empty() ? 0 : channels_per_var.front(); }
    int latent_h() const { return height >> down_factor; }
    int latent_w() const { return width >> down_factor; }
    void validate() const;
};

namespace nn {

struct Conv2d {
    Parameter w, b;
    int stride = 1, padding = 0, dilation = 1, groups = 1;

    Conv2d() = default;
    Conv2d(std::int64_t cin, std::int64_t cout, int k, int stride, int padding, int dilation,
           int groups, const std::string& path, Dtype dt, std::mt19937_64& rng, bool trainable,
           bool zero_init = false);

    Tensor forward(const Tensor& x) {
        return ops::conv2d(x, w.use(), b.use(), stride, padding, dilation, groups);
    }
    void collect(ParameterCollection& pc) {
        pc.add(&w);
        pc.add(&b);
    }
};

struct GroupNorm {
    Parameter gamma, beta;
    int groups = 1;

    GroupNorm() = default;
    GroupNorm(std::int64_t c, const std::string& path, Dtype dt, bool trainable);

    Tensor forward(const Tensor& x) {
        return ops::group_norm(x, groups, gamma.use(), beta.use());
    }
    void collect(ParameterCollection& pc) {
        pc.add(&gamma);
        pc.add(&beta);
    }
};

}  // namespace nn

/// Optional capture of intermediate representations (used for CKA analysis).
struct ProbeSink {
    std::vector<std::pair<std::string, Tensor>> items;
    void put(const std::string& name, const Tensor& t) { items.emplace_back(name, t.detached()); }
};

/// Per-variable spatial encoder: enc_depth conv stages (3x3, group norm,
/// silu); the first `down_factor` stages use stride 2. Operates frame-wise on
/// [M, C, H, W] and yields [M, D, h, w].
class Encoder {
public:
    Encoder(const ModelConfig& cfg, int var_channels, const std::string& prefix,
            std::mt19937_64& rng, bool trainable);
    Tensor forward(const Tensor& x);
    void collect(ParameterCollection& pc);

private:
    std::vector<nn::Conv2d> convs_;
    std::vector<nn::GroupNorm> norms_;
};

/// Mirror of the encoder: stride-1 stages, then `down_factor` nearest-upsample
/// + conv stages, then a linear 3x3 projection to the variable's channels.
class Decoder {
public:
    Decoder(const ModelConfig& cfg, int var_channels, const std::string& prefix,
            std::mt19937_64& rng, bool trainable);
    Tensor forward(const Tensor& x);
    void collect(ParameterCollection& pc);

private:
    std::vector<nn::Conv2d> convs_;
    std::vector<nn::GroupNorm> norms_;
    nn::Conv2d out_;
    int up_stages_ = 0;
};

/// Softmax attention over the variable axis. Q and K project each variable
/// token to D channels with 1x1 convs; V is a 1x1 token-to-token projection.
/// Per sample, A[i,j] = softmax_j <flat(Q_i), flat(K_j)> / sqrt(d_head) and
/// the output is A·V along the variable axis (shape preserved).
class VariableAttention {
public:
    VariableAttention(const ModelConfig& cfg, const std::string& prefix, std::mt19937_64& rng,
                      bool trainable);
    Tensor forward(const Tensor& z);
    /// The mixing matrix alone: [B*heads, N, N], rows softmax-normalized.
    Tensor attention_matrix(const Tensor& z);
    void collect(ParameterCollection& pc);

private:
    std::pair<Tensor, Tensor> fold_qkv(const Tensor& z);  // (A, V-folded)
    int heads_;
    nn::Conv2d q_, k_, v_;
};

/// Residual spatiotemporal block: depthwise 5x5, dilated depthwise 7x7
/// (dilation 3), pointwise projection gated by channel attention; then a
/// pointwise feed-forward. Both branch-final projections are zero-initialized
/// so the block starts as the identity.
class STBlock {
public:
    STBlock(std::int64_t channels, const std::string& prefix, Dtype dt, std::mt19937_64& rng,
            bool trainable);
    Tensor forward(const Tensor& x);
    void collect(ParameterCollection& pc);

private:
    nn::GroupNorm n1_, n2_;
    nn::Conv2d dw_, dd_, pw_;
    nn::Conv2d gate1_, gate2_;
    nn::Conv2d ffn1_, ffn2_;
};

/// Latent-space translator: variable attention (optional), a pointwise
/// horizon projection T*D -> T'*D when the horizons differ, then
/// translator_depth spatiotemporal blocks with the variable axis folded into
/// the batch.
class Translator {
public:
    Translator(const ModelConfig& cfg, const std::string& prefix, std::mt19937_64& rng,
               bool trainable);
    Tensor forward(const Tensor& z, ProbeSink* probes = nullptr);
    VariableAttention* attention() { return va_ ? &*va_ : nullptr; }
    void collect(ParameterCollection& pc);

private:
    int n_vars_, t_in_, t_out_, latent_dim_;
    std::optional<VariableAttention> va_;
    std::optional<nn::Conv2d> proj_;
    std::vector<STBlock> blocks_;
};

/// The full model: N encoder/decoder pairs (or one shared pair), a translator,
/// and an exact momentum ("shadow") twin of each module. Shadow parameters are
/// never trainable and start equal to their primaries.
class Met2Net {
public:
    Met2Net(const ModelConfig& cfg, std::uint64_t seed);
    Met2Net(const Met2Net&) = delete;
    Met2Net& operator=(const Met2Net&) = delete;

    const ModelConfig& config() const { return cfg_; }

    /// [B,T,N,C,H,W] -> [B,N,T*D,h,w]
    Tensor encode_all(const Tensor& x, bool use_shadow, ProbeSink* probes = nullptr);
    /// [B,N,T*D,h,w] -> [B,N,T'*D,h,w]
    Tensor translate(const Tensor& z, bool use_shadow, ProbeSink* probes = nullptr);
    /// [B,N,T'*D,h,w] -> [B,T',N,C,H,W]
    Tensor decode_all(const Tensor& z, bool use_shadow);
    /// Deployment path: tape-free composition through one module set
    /// (gradient-updated by default, shadows only if configured).
    Tensor forward_inference(const Tensor& x);
    /// forward_inference that also captures CKA probe activations.
    Tensor forward_inference(const Tensor& x, ProbeSink& probes);

    std::int64_t inference_param_count() const;

    ParameterCollection& all_params() { return all_; }
    ParameterCollection& primary_params() { return primary_; }
    ParameterCollection& encdec_params() { return encdec_; }
    ParameterCollection& encdec_shadow_params() { return encdec_m_; }
    ParameterCollection& translator_params() { return tr_; }
    ParameterCollection& translator_shadow_params() { return tr_m_; }

private:
    Encoder& encoder(int var, bool shadow);
    Decoder& decoder(int var, bool shadow);

    ModelConfig cfg_;
    std::vector<Encoder> encoders_, encoders_m_;
    std::vector<Decoder> decoders_, decoders_m_;
    std::optional<Translator> translator_, translator_m_;
    ParameterCollection all_, primary_, encdec_, encdec_m_, tr_, tr_m_;
};

}  // namespace met2net
