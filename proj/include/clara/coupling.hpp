#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace clara::oracle {

// One retrieval-generation coupling instance: scores over D candidates,
// per-candidate conditionals p(y|x,d), candidate embeddings z_d and, for the
// shared-representation case, the generator gradient g at the mixture point.
struct CouplingInputs {
    std::vector<double> scores;                    // s, length D
    std::vector<double> conditionals;              // p(y|x,d), length D, each in [0,1]
    double temperature = 1.0;                      // tau > 0
    std::vector<std::vector<double>> embeddings;   // z_d, D rows of width d
    std::vector<double> generator_gradient;        // g, width d (empty means zero)

    std::size_t pool_size() const { return scores.size(); }
    void validate() const;
};

// Differentiable map r -> log-likelihood plus its gradient, used to source g
// for the shared case. The quadratic -|r - y|^2 used in tests fits here.
struct Generator {
    std::function<double(const std::vector<double>&)> log_prob;
    std::function<std::vector<double>(const std::vector<double>&)> grad;
};

// p_d = softmax(s / tau); p_y = sum_d p_d * p(y|x,d).
struct Marginal {
    std::vector<double> p_d;
    double p_y = 0.0;
};
Marginal marginal_likelihood(const CouplingInputs& in);

// d(-log p_y)/ds_d = -(1 / (tau * p_y)) * p_d * (p(y|x,d) - p_y).
// Components sum to zero by softmax shift invariance.
std::vector<double> nonshared_gradient(const CouplingInputs& in);

// dr/ds_d = (1/tau) * pi_d * (z_d - r) with r = sum_j pi_j z_j.
// Returned row-major, D rows of width d.
std::vector<std::vector<double>> mixture_jacobian(const CouplingInputs& in);

// Full shared-representation gradient: the probability path plus the
// representation path -(1/tau) * pi_d * g.(z_d - r).
std::vector<double> shared_gradient(const CouplingInputs& in);
std::vector<double> shared_gradient(const CouplingInputs& in, const Generator& generator);

// The scalar losses the gradients above differentiate; finite differences of
// these adjudicate every formula.
double loss_nonshared(const CouplingInputs& in, const std::vector<double>& scores);
double loss_shared(const CouplingInputs& in, const Generator& generator,
                   const std::vector<double>& scores);
std::vector<double> mixture_point(const CouplingInputs& in, const std::vector<double>& scores);

// One row of the oracle-vs-autodiff-vs-finite-difference comparison table.
struct CheckRow {
    std::string name;
    double max_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

// Runs the full comparison suite over seeded random instances (pool size up
// to 8, embedding width up to 6) and reports the worst error per check.
std::vector<CheckRow> run_grad_check_suite(int instances, std::uint64_t seed);

}  // namespace clara::oracle
