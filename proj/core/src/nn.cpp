#include "mtabgen/nn.hpp"

#include <cmath>

namespace mtabgen {

Tensor init_linear_weight(size_t fan_in, size_t fan_out, Rng& rng) {
    Tensor w({fan_in, fan_out});
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (size_t i = 0; i < w.size(); ++i) w[i] = (2.0 * rng.uniform() - 1.0) * bound;
    return w;
}

Tensor init_embedding(size_t classes, size_t dim, Rng& rng) {
    Tensor w({classes, dim});
    for (size_t i = 0; i < w.size(); ++i) w[i] = 0.02 * rng.normal();
    return w;
}

Var multi_head_attention(Graph& g, Var q_in, Var kv_in, AttentionParams& p,
                         const KeyMask* key_mask) {
    const size_t dim = g.value(q_in).extent(2);
    const size_t head_dim = dim / p.heads;
    Var q = g.split_heads(p.query(g, q_in), p.heads);
    Var k = g.split_heads(p.key(g, kv_in), p.heads);
    Var v = g.split_heads(p.value(g, kv_in), p.heads);
    Var scores = g.scale(g.bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(double(head_dim)));
    if (key_mask != nullptr) {
        scores = g.mask_scores(scores, *key_mask, p.heads);
    }
    Var weights = g.softmax_rows(scores);
    Var mixed = g.merge_heads(g.bmm(weights, v), p.heads);
    return p.output(g, mixed);
}

Tensor sinusoidal_timestep(int64_t t, size_t dim) {
    if (dim == 0 || dim % 2 != 0) {
        throw ConfigError("sinusoidal_timestep: dim must be positive and even, got " +
                          std::to_string(dim));
    }
    const size_t half = dim / 2;
    Tensor out({dim});
    for (size_t i = 0; i < half; ++i) {
        const double omega = std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                                   static_cast<double>(dim));
        out[i] = std::sin(static_cast<double>(t) * omega);
        out[half + i] = std::cos(static_cast<double>(t) * omega);
    }
    return out;
}

void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg) {
    for (Parameter* p : params) {
        if (!p->grad.all_finite()) {
            throw NumericError("adam_step: non-finite gradient in parameter '" + p->name + "'");
        }
        p->step += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
        double* w = p->value.data();
        double* gr = p->grad.data();
        double* m = p->moment1.data();
        double* v = p->moment2.data();
        for (size_t i = 0; i < p->value.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gr[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gr[i] * gr[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
        p->zero_grad();
    }
}

double grad_check(const std::function<double(bool)>& eval, std::span<Parameter* const> params,
                  double h, size_t coords_per_param, uint64_t seed) {
    for (Parameter* p : params) p->zero_grad();
    eval(true);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) {
        analytic.emplace_back(p->grad.data(), p->grad.data() + p->grad.size());
    }

    Rng rng(seed);
    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        const size_t n = p->value.size();
        std::vector<size_t> coords;
        if (n <= coords_per_param) {
            for (size_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (size_t i = 0; i < coords_per_param; ++i) {
                coords.push_back(static_cast<size_t>(rng.uniform_int(n)));
            }
        }
        for (size_t c : coords) {
            const double saved = p->value[c];
            p->value[c] = saved + h;
            const double lp = eval(false);
            p->value[c] = saved - h;
            const double lm = eval(false);
            p->value[c] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double ad = analytic[pi][c];
            const double err = std::fabs(ad - fd) / std::max({1.0, std::fabs(ad), std::fabs(fd)});
            worst = std::max(worst, err);
        }
    }
    for (Parameter* p : params) p->zero_grad();
    return worst;
}

}  // namespace mtabgen
