#include "mtabgen/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace mtabgen {

namespace {
constexpr double kProbFloor = 1e-12;
}

void CategoricalDist::normalize() {
    double total = 0.0;
    for (double p : probs) {
        require(p >= 0.0, "CategoricalDist: negative probability");
        total += p;
    }
    if (total <= 0.0) throw NumericError("CategoricalDist: all-zero mass");
    for (double& p : probs) p /= total;
}

bool CategoricalDist::is_normalized(double tol) const {
    double total = 0.0;
    for (double p : probs) total += p;
    return std::fabs(total - 1.0) <= tol;
}

GaussianForward gaussian_forward_sample(double x0, size_t t, const NoiseSchedule& sched,
                                        double eps) {
    require(t >= 1 && t <= sched.timesteps, "gaussian_forward_sample: t out of range");
    const double abar = sched.alpha_bar(t);
    return GaussianForward{std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps, eps};
}

double gaussian_reverse_step(double x_t, double eps_hat, size_t t, const NoiseSchedule& sched,
                             double z) {
    require(t >= 1 && t <= sched.timesteps, "gaussian_reverse_step: t out of range");
    const double beta = sched.beta(t);
    const double alpha = sched.alpha(t);
    const double abar = sched.alpha_bar(t);
    const double mean = (x_t - beta / std::sqrt(1.0 - abar) * eps_hat) / std::sqrt(alpha);
    if (t == 1) return mean;
    return mean + sched.sigma(t) * z;
}

int multinomial_forward_sample(int x0_class, size_t classes, size_t t,
                               const NoiseSchedule& sched, Rng& rng) {
    require(t >= 1 && t <= sched.timesteps, "multinomial_forward_sample: t out of range");
    require(x0_class >= 0 && static_cast<size_t>(x0_class) < classes,
            "multinomial_forward_sample: class out of range");
    const double abar = sched.alpha_bar(t);
    // Cat(abar one_hot(x0) + (1-abar)/Cl): keep x0 with mass abar, otherwise
    // resample uniformly (which can land on x0 again).
    if (rng.uniform() < abar) return x0_class;
    return static_cast<int>(rng.uniform_int(classes));
}

CategoricalDist multinomial_posterior(int xt_class, const CategoricalDist& x0, size_t t,
                                      const NoiseSchedule& sched) {
    require(t >= 1 && t <= sched.timesteps, "multinomial_posterior: t out of range");
    const size_t cl = x0.classes();
    require(cl >= 2, "multinomial_posterior: need >= 2 classes");
    require(xt_class >= 0 && static_cast<size_t>(xt_class) < cl,
            "multinomial_posterior: x_t class out of range");
    const double alpha = sched.alpha(t);
    const double abar_prev = sched.alpha_bar(t - 1);
    const double u_t = (1.0 - alpha) / static_cast<double>(cl);
    const double u_prev = (1.0 - abar_prev) / static_cast<double>(cl);
    CategoricalDist post;
    post.probs.resize(cl);
    for (size_t k = 0; k < cl; ++k) {
        const double left = (static_cast<int>(k) == xt_class ? alpha : 0.0) + u_t;
        const double right = abar_prev * x0.probs[k] + u_prev;
        post.probs[k] = left * right;
    }
    post.normalize();
    return post;
}

int multinomial_reverse_step(int xt_class, const CategoricalDist& x0_probs, size_t t,
                             const NoiseSchedule& sched, Rng& rng) {
    CategoricalDist post = multinomial_posterior(xt_class, x0_probs, t, sched);
    if (t == 1) {
        return static_cast<int>(std::max_element(post.probs.begin(), post.probs.end()) -
                                post.probs.begin());
    }
    return static_cast<int>(rng.categorical(post.probs));
}

double categorical_kl(const CategoricalDist& q, const CategoricalDist& p) {
    require(q.classes() == p.classes(), "categorical_kl: size mismatch");
    double kl = 0.0;
    for (size_t k = 0; k < q.classes(); ++k) {
        if (q.probs[k] <= 0.0) continue;
        kl += q.probs[k] * std::log(q.probs[k] / std::max(p.probs[k], kProbFloor));
    }
    return kl;
}

double loss_simple(const Tensor& eps, const Tensor& eps_hat, const Tensor& weight) {
    require(eps.same_shape(eps_hat) && eps.same_shape(weight), "loss_simple: shape mismatch");
    double total = 0.0;
    double count = 0.0;
    for (size_t i = 0; i < eps.size(); ++i) {
        if (weight[i] == 0.0) continue;
        const double d = eps[i] - eps_hat[i];
        total += d * d;
        count += 1.0;
    }
    return count > 0.0 ? total / count : 0.0;
}

double loss_multinomial(int x0_class, const CategoricalDist& x0_probs, int xt_class, size_t t,
                        const NoiseSchedule& sched) {
    require(t >= 1 && t <= sched.timesteps, "loss_multinomial: t out of range");
    const size_t cl = x0_probs.classes();
    require(x0_class >= 0 && static_cast<size_t>(x0_class) < cl,
            "loss_multinomial: class out of range");
    if (t == 1) {
        return -std::log(std::max(x0_probs.probs[static_cast<size_t>(x0_class)], kProbFloor));
    }
    CategoricalDist true_x0;
    true_x0.probs.assign(cl, 0.0);
    true_x0.probs[static_cast<size_t>(x0_class)] = 1.0;
    const CategoricalDist q = multinomial_posterior(xt_class, true_x0, t, sched);
    const CategoricalDist p = multinomial_posterior(xt_class, x0_probs, t, sched);
    return categorical_kl(q, p);
}

double loss_total(double l_simple, const std::vector<double>& cat_losses, size_t k_num,
                  size_t k_cat, const std::vector<size_t>& class_counts) {
    require(cat_losses.size() == k_cat && class_counts.size() == k_cat,
            "loss_total: categorical loss/class-count arity mismatch");
    double total = 0.0;
    if (k_num > 0) total += l_simple / static_cast<double>(k_num);
    if (k_cat > 0) {
        double acc = 0.0;
        for (size_t i = 0; i < k_cat; ++i) {
            require(class_counts[i] >= 2, "loss_total: class count must be >= 2");
            acc += cat_losses[i] / static_cast<double>(class_counts[i]);
        }
        total += acc / static_cast<double>(k_cat);
    }
    return total;
}

Var graph_masked_mse(Graph& g, Var pred, Tensor target, Tensor weight) {
    const Tensor& pv = g.value(pred);
    require(pv.same_shape(target) && pv.same_shape(weight), "graph_masked_mse: shape mismatch");
    double total = 0.0;
    double count = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) {
        if (weight[i] == 0.0) continue;
        const double d = pv[i] - target[i];
        total += d * d;
        count += 1.0;
    }
    const double value = count > 0.0 ? total / count : 0.0;
    return g.custom(
        "masked_mse", {pred}, Tensor::scalar(value),
        [target = std::move(target), weight = std::move(weight), count](
            const Tensor& out_grad, const std::vector<const Tensor*>& vals,
            const std::vector<Tensor*>& grads) {
            if (grads[0] == nullptr || count == 0.0) return;
            const Tensor& pv = *vals[0];
            Tensor& dp = *grads[0];
            const double s = out_grad[0] * 2.0 / count;
            for (size_t i = 0; i < pv.size(); ++i) {
                if (weight[i] == 0.0) continue;
                dp[i] += s * (pv[i] - target[i]);
            }
        });
}

Var graph_multinomial_loss(Graph& g, Var probs, std::vector<int> xt_codes,
                           std::vector<int> x0_codes, std::vector<int> timesteps,
                           const NoiseSchedule& sched, std::vector<uint8_t> include) {
    const Tensor& pv = g.value(probs);
    require(pv.rank() == 2, "graph_multinomial_loss: want [b,Cl] probabilities");
    const size_t b = pv.extent(0);
    const size_t cl = pv.extent(1);
    require(xt_codes.size() == b && x0_codes.size() == b && timesteps.size() == b &&
                include.size() == b,
            "graph_multinomial_loss: per-row input arity mismatch");

    double total = 0.0;
    double count = 0.0;
    for (size_t r = 0; r < b; ++r) {
        if (!include[r]) continue;
        CategoricalDist x0_hat;
        x0_hat.probs.assign(pv.data() + r * cl, pv.data() + (r + 1) * cl);
        total += loss_multinomial(x0_codes[r], x0_hat, xt_codes[r],
                                  static_cast<size_t>(timesteps[r]), sched);
        count += 1.0;
    }
    const double value = count > 0.0 ? total / count : 0.0;

    // Snapshot the schedule constants needed by the backward pass.
    std::vector<double> alpha_t(b), abar_prev(b);
    for (size_t r = 0; r < b; ++r) {
        if (!include[r]) continue;
        const auto t = static_cast<size_t>(timesteps[r]);
        alpha_t[r] = sched.alpha(t);
        abar_prev[r] = sched.alpha_bar(t - 1);
    }

    return g.custom(
        "multinomial_loss", {probs}, Tensor::scalar(value),
        [xt_codes = std::move(xt_codes), x0_codes = std::move(x0_codes),
         timesteps = std::move(timesteps), include = std::move(include),
         alpha_t = std::move(alpha_t), abar_prev = std::move(abar_prev), b, cl, count](
            const Tensor& out_grad, const std::vector<const Tensor*>& vals,
            const std::vector<Tensor*>& grads) {
            if (grads[0] == nullptr || count == 0.0) return;
            const Tensor& pv = *vals[0];
            Tensor& dp = *grads[0];
            const double scale = out_grad[0] / count;
            for (size_t r = 0; r < b; ++r) {
                if (!include[r]) continue;
                const double* s = pv.data() + r * cl;
                double* ds = dp.data() + r * cl;
                if (timesteps[r] == 1) {
                    const auto c = static_cast<size_t>(x0_codes[r]);
                    if (s[c] > kProbFloor) ds[c] -= scale / s[c];
                    continue;
                }
                // p_k = a_k (c1 s_k + c2) / S with a_k the x_t mixing bracket
                const double c1 = abar_prev[r];
                const double c2 = (1.0 - abar_prev[r]) / static_cast<double>(cl);
                const double u_t = (1.0 - alpha_t[r]) / static_cast<double>(cl);
                double big_s = 0.0;
                for (size_t k = 0; k < cl; ++k) {
                    const double a_k =
                        (static_cast<int>(k) == xt_codes[r] ? alpha_t[r] : 0.0) + u_t;
                    big_s += a_k * (c1 * s[k] + c2);
                }
                // q is the posterior under the true one-hot x0
                CategoricalDist true_x0;
                true_x0.probs.assign(cl, 0.0);
                true_x0.probs[static_cast<size_t>(x0_codes[r])] = 1.0;
                std::vector<double> q(cl);
                {
                    double qs = 0.0;
                    for (size_t k = 0; k < cl; ++k) {
                        const double a_k =
                            (static_cast<int>(k) == xt_codes[r] ? alpha_t[r] : 0.0) + u_t;
                        q[k] = a_k * (c1 * true_x0.probs[k] + c2);
                        qs += q[k];
                    }
                    for (double& v : q) v /= qs;
                }
                for (size_t k = 0; k < cl; ++k) {
                    const double a_k =
                        (static_cast<int>(k) == xt_codes[r] ? alpha_t[r] : 0.0) + u_t;
                    const double d =
                        -q[k] * c1 / (c1 * s[k] + c2) + a_k * c1 / big_s;
                    ds[k] += scale * d;
                }
            }
        });
}

}  // namespace mtabgen
