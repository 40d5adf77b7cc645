#pragma once

#include <vector>

#include "mtabgen/graph.hpp"
#include "mtabgen/rng.hpp"
#include "mtabgen/schedule.hpp"

namespace mtabgen {

// Probability vector over Cl classes.
struct CategoricalDist {
    std::vector<double> probs;

    size_t classes() const { return probs.size(); }
    void normalize();
    bool is_normalized(double tol = 1e-9) const;
};

struct GaussianForward {
    double x_t;
    double eps;  // the training target
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
GaussianForward gaussian_forward_sample(double x0, size_t t, const NoiseSchedule& sched,
                                        double eps);

// x_{t-1} = (x_t - beta_t/sqrt(1-abar_t) eps_hat)/sqrt(alpha_t) + sigma_t z,
// with z forced to zero at t = 1.
double gaussian_reverse_step(double x_t, double eps_hat, size_t t, const NoiseSchedule& sched,
                             double z);

// Sample from Cat(abar_t one_hot(x0) + (1 - abar_t)/Cl).
int multinomial_forward_sample(int x0_class, size_t classes, size_t t,
                               const NoiseSchedule& sched, Rng& rng);

// pi = [alpha_t x_t + (1-alpha_t)/Cl] .* [abar_{t-1} x0 + (1-abar_{t-1})/Cl],
// normalized. abar_0 = 1, so at t = 1 the posterior collapses onto x0.
CategoricalDist multinomial_posterior(int xt_class, const CategoricalDist& x0, size_t t,
                                      const NoiseSchedule& sched);

// Sample from the posterior with x0 replaced by predicted probabilities; at
// t = 1 returns the argmax of the posterior (deterministic final decode).
int multinomial_reverse_step(int xt_class, const CategoricalDist& x0_probs, size_t t,
                             const NoiseSchedule& sched, Rng& rng);

// Sum q_k ln(q_k/p_k) with 0 ln 0 = 0 and p floored at 1e-12.
double categorical_kl(const CategoricalDist& q, const CategoricalDist& p);

// Mean of (eps - eps_hat)^2 over entries with weight 1; zero when no entry
// is weighted.
double loss_simple(const Tensor& eps, const Tensor& eps_hat, const Tensor& weight);

// KL(q(x_{t-1}|x_t,x0) || q(x_{t-1}|x_t,x0_hat)) for t > 1, and the negative
// log-likelihood -ln x0_hat[class(x0)] at t = 1.
double loss_multinomial(int x0_class, const CategoricalDist& x0_probs, int xt_class, size_t t,
                        const NoiseSchedule& sched);

// L_simple/K_num + (sum_i L_i/Cl_i)/K_cat; a side with zero feature count
// contributes nothing.
double loss_total(double l_simple, const std::vector<double>& cat_losses, size_t k_num,
                  size_t k_cat, const std::vector<size_t>& class_counts);

// --- graph-side losses (training path) ---

// Scalar node: sum of w*(pred-target)^2 / sum(w); 0 when sum(w) = 0.
Var graph_masked_mse(Graph& g, Var pred, Tensor target, Tensor weight);

// Scalar node: mean multinomial VLB term over included rows given softmaxed
// class probabilities for one categorical feature. Matches loss_multinomial
// row-wise.
Var graph_multinomial_loss(Graph& g, Var probs, std::vector<int> xt_codes,
                           std::vector<int> x0_codes, std::vector<int> timesteps,
                           const NoiseSchedule& sched, std::vector<uint8_t> include);

}  // namespace mtabgen
