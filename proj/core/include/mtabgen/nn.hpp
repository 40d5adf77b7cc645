#pragma once

#include <functional>
#include <span>

#include "mtabgen/graph.hpp"
#include "mtabgen/rng.hpp"

namespace mtabgen {

// Initializers. Linear weights are uniform in +-sqrt(6/(fan_in+fan_out)),
// embedding tables normal with std 0.02, biases zero.
Tensor init_linear_weight(size_t fan_in, size_t fan_out, Rng& rng);
Tensor init_embedding(size_t classes, size_t dim, Rng& rng);

struct LinearLayer {
    Parameter weight;
    Parameter bias;

    LinearLayer(const std::string& name, size_t n_in, size_t n_out, Rng& rng)
        : weight(name + ".w", init_linear_weight(n_in, n_out, rng)),
          bias(name + ".b", Tensor::zeros({n_out})) {}

    Var operator()(Graph& g, Var x) {
        return g.linear(x, g.param(weight), g.param(bias));
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
};

struct LayerNormLayer {
    Parameter gain;
    Parameter shift;

    LayerNormLayer(const std::string& name, size_t dim)
        : gain(name + ".g", Tensor::full({dim}, 1.0)), shift(name + ".s", Tensor::zeros({dim})) {}

    Var operator()(Graph& g, Var x) {
        return g.layer_norm(x, g.param(gain), g.param(shift));
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&gain);
        out.push_back(&shift);
    }
};

struct AttentionParams {
    LinearLayer query, key, value, output;
    size_t heads;

    AttentionParams(const std::string& name, size_t dim, size_t heads_, Rng& rng)
        : query(name + ".q", dim, dim, rng),
          key(name + ".k", dim, dim, rng),
          value(name + ".v", dim, dim, rng),
          output(name + ".o", dim, dim, rng),
          heads(heads_) {
        if (heads == 0 || dim % heads != 0) {
            throw ConfigError("attention: dim " + std::to_string(dim) +
                              " not divisible by heads " + std::to_string(heads));
        }
    }

    void collect(std::vector<Parameter*>& out) {
        query.collect(out);
        key.collect(out);
        value.collect(out);
        output.collect(out);
    }
};

// Scaled dot-product attention with `heads` heads, scale 1/sqrt(d/heads).
// Self-attention is the q_in == kv_in case. `key_mask` (optional) marks
// padded key slots invalid per batch row.
Var multi_head_attention(Graph& g, Var q_in, Var kv_in, AttentionParams& params,
                         const KeyMask* key_mask = nullptr);

// Sinusoidal timestep features: first half sin(t*w_i), second half cos(t*w_i)
// with w_i = 10000^(-2i/dim). dim must be even.
Tensor sinusoidal_timestep(int64_t t, size_t dim);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected adaptive-moment update over all parameters; increments each
// step counter and zeroes gradients afterwards.
void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg);

// Compares reverse-mode gradients against central finite differences on up to
// `coords_per_param` sampled coordinates per parameter. `eval(true)` must
// zero grads, run forward+backward and return the loss; `eval(false)` must
// return the loss only. Returns max |g_ad - g_fd| / max(1,|g_ad|,|g_fd|).
double grad_check(const std::function<double(bool)>& eval, std::span<Parameter* const> params,
                  double h = 1e-4, size_t coords_per_param = 24, uint64_t seed = 1234);

}  // namespace mtabgen
