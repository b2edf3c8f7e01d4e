#include "clara/coupling.hpp"

#include <algorithm>
#include <cmath>

#include "clara/error.hpp"
#include "clara/ops.hpp"
#include "clara/rng.hpp"

namespace clara::oracle {

namespace {

std::vector<double> tempered_softmax(const std::vector<double>& s, double tau) {
    std::vector<double> p(s.size());
    double hi = s[0];
    for (double v : s) hi = std::max(hi, v);
    double z = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        p[i] = std::exp((s[i] - hi) / tau);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

}  // namespace

void CouplingInputs::validate() const {
    const std::size_t d_pool = scores.size();
    if (d_pool == 0) throw ShapeError("coupling: empty score vector");
    if (conditionals.size() != d_pool) {
        throw ShapeError("coupling: " + std::to_string(conditionals.size()) +
                         " conditionals for " + std::to_string(d_pool) + " scores");
    }
    if (temperature <= 0.0) throw NumericError("coupling: temperature must be positive");
    for (double c : conditionals) {
        if (!(c >= 0.0 && c <= 1.0)) throw NumericError("coupling: conditional outside [0,1]");
    }
    if (!embeddings.empty()) {
        if (embeddings.size() != d_pool) {
            throw ShapeError("coupling: " + std::to_string(embeddings.size()) +
                             " embeddings for " + std::to_string(d_pool) + " scores");
        }
        for (const auto& z : embeddings) {
            if (z.size() != embeddings[0].size()) {
                throw ShapeError("coupling: ragged embedding widths");
            }
        }
    }
}

Marginal marginal_likelihood(const CouplingInputs& in) {
    in.validate();
    Marginal out;
    out.p_d = tempered_softmax(in.scores, in.temperature);
    for (std::size_t i = 0; i < out.p_d.size(); ++i) out.p_y += out.p_d[i] * in.conditionals[i];
    return out;
}

std::vector<double> nonshared_gradient(const CouplingInputs& in) {
    const Marginal m = marginal_likelihood(in);
    if (m.p_y <= 0.0) throw NumericError("nonshared_gradient: degenerate likelihood p(y|x)=0");
    std::vector<double> g(in.pool_size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = -(1.0 / (in.temperature * m.p_y)) * m.p_d[i] * (in.conditionals[i] - m.p_y);
    }
    return g;
}

std::vector<double> mixture_point(const CouplingInputs& in, const std::vector<double>& scores) {
    const auto pi = tempered_softmax(scores, in.temperature);
    const std::size_t width = in.embeddings.empty() ? 0 : in.embeddings[0].size();
    std::vector<double> r(width, 0.0);
    for (std::size_t i = 0; i < pi.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) r[j] += pi[i] * in.embeddings[i][j];
    }
    return r;
}

std::vector<std::vector<double>> mixture_jacobian(const CouplingInputs& in) {
    in.validate();
    if (in.embeddings.empty()) throw ShapeError("mixture_jacobian: embeddings required");
    const auto pi = tempered_softmax(in.scores, in.temperature);
    const auto r = mixture_point(in, in.scores);
    const std::size_t width = r.size();
    std::vector<std::vector<double>> rows(in.pool_size(), std::vector<double>(width));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            rows[i][j] = pi[i] * (in.embeddings[i][j] - r[j]) / in.temperature;
        }
    }
    return rows;
}

std::vector<double> shared_gradient(const CouplingInputs& in) {
    auto grad = nonshared_gradient(in);
    if (in.generator_gradient.empty()) return grad;
    if (in.embeddings.empty()) throw ShapeError("shared_gradient: embeddings required");
    if (in.generator_gradient.size() != in.embeddings[0].size()) {
        throw ShapeError("shared_gradient: generator gradient width " +
                         std::to_string(in.generator_gradient.size()) +
                         " does not match embedding width " +
                         std::to_string(in.embeddings[0].size()));
    }
    const auto pi = tempered_softmax(in.scores, in.temperature);
    const auto r = mixture_point(in, in.scores);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        double proj = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            proj += in.generator_gradient[j] * (in.embeddings[i][j] - r[j]);
        }
        grad[i] -= pi[i] * proj / in.temperature;
    }
    return grad;
}

std::vector<double> shared_gradient(const CouplingInputs& in, const Generator& generator) {
    CouplingInputs with_g = in;
    with_g.generator_gradient = generator.grad(mixture_point(in, in.scores));
    return shared_gradient(with_g);
}

double loss_nonshared(const CouplingInputs& in, const std::vector<double>& scores) {
    const auto p = tempered_softmax(scores, in.temperature);
    double p_y = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) p_y += p[i] * in.conditionals[i];
    if (p_y <= 0.0) throw NumericError("loss_nonshared: degenerate likelihood");
    return -std::log(p_y);
}

double loss_shared(const CouplingInputs& in, const Generator& generator,
                   const std::vector<double>& scores) {
    return loss_nonshared(in, scores) - generator.log_prob(mixture_point(in, scores));
}

namespace {

std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double up = f(x);
        x[i] = x0 - h;
        const double dn = f(x);
        x[i] = x0;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

void fold(CheckRow& row, double analytic, double other) {
    const double scale = std::max(1.0, std::abs(analytic));
    row.max_err = std::max(row.max_err, std::abs(analytic - other) / scale);
}

// Autodiff replica of the shared-conditioning loss, built from tape ops.
ad::Tensor ad_shared_loss(ad::Tape& tape, const CouplingInputs& in, const ad::Tensor& s,
                          const std::vector<double>& target) {
    const int d_pool = static_cast<int>(in.pool_size());
    const int width = static_cast<int>(in.embeddings[0].size());
    ad::Tensor p = ad::softmax(s, in.temperature);
    ad::Tensor c = ad::Tensor::constant({d_pool, 1}, in.conditionals);
    ad::Tensor p_y = ad::matmul(ad::reshape(p, {1, d_pool}), c);
    ad::Tensor loss = ad::scale(ad::log(ad::reshape(p_y, {1})), -1.0);

    std::vector<double> zflat;
    for (const auto& z : in.embeddings) zflat.insert(zflat.end(), z.begin(), z.end());
    ad::Tensor z = ad::Tensor::constant({d_pool, width}, std::move(zflat));
    ad::Tensor r = ad::reshape(ad::matmul(ad::reshape(p, {1, d_pool}), z), {width});
    ad::Tensor y = ad::Tensor::constant({width}, target);
    (void)tape;
    return ad::add(loss, ad::mse(r, y));  // -log p_y - (-(|r-y|^2))
}

}  // namespace

std::vector<CheckRow> run_grad_check_suite(int instances, std::uint64_t seed) {
    Rng rng(seed);
    const double fd_step = 1e-5;
    const double tol = 1e-6;

    std::vector<CheckRow> rows = {
        {"nonshared vs finite differences", 0.0, tol, false},
        {"nonshared vs autodiff", 0.0, tol, false},
        {"nonshared components sum to zero", 0.0, 1e-12, false},
        {"mixture jacobian vs finite differences", 0.0, tol, false},
        {"mixture jacobian weighted identity", 0.0, 1e-12, false},
        {"shared vs finite differences", 0.0, tol, false},
        {"shared vs autodiff", 0.0, tol, false},
        {"shared with g=0 equals nonshared", 0.0, 1e-12, false},
    };

    for (int it = 0; it < instances; ++it) {
        const int d_pool = 2 + static_cast<int>(rng.uniform_int(7));   // 2..8
        const int width = 1 + static_cast<int>(rng.uniform_int(6));    // 1..6
        CouplingInputs in;
        in.temperature = 0.5 + rng.uniform() * 1.5;
        for (int i = 0; i < d_pool; ++i) {
            in.scores.push_back(rng.normal());
            in.conditionals.push_back(0.05 + 0.9 * rng.uniform());
            in.embeddings.push_back(rng.normal_vec(static_cast<std::size_t>(width), 1.0));
        }
        std::vector<double> target = rng.normal_vec(static_cast<std::size_t>(width), 1.0);
        Generator quad{
            [target](const std::vector<double>& r) {
                double acc = 0.0;
                for (std::size_t j = 0; j < r.size(); ++j) {
                    const double d = r[j] - target[j];
                    acc += d * d;
                }
                return -acc;
            },
            [target](const std::vector<double>& r) {
                std::vector<double> g(r.size());
                for (std::size_t j = 0; j < r.size(); ++j) g[j] = -2.0 * (r[j] - target[j]);
                return g;
            }};

        // Probability path only.
        const auto grad_ns = nonshared_gradient(in);
        const auto fd_ns = central_diff([&](const std::vector<double>& s) {
            return loss_nonshared(in, s);
        }, in.scores, fd_step);
        double sum_ns = 0.0;
        for (std::size_t i = 0; i < grad_ns.size(); ++i) {
            fold(rows[0], grad_ns[i], fd_ns[i]);
            sum_ns += grad_ns[i];
        }
        rows[2].max_err = std::max(rows[2].max_err, std::abs(sum_ns));

        {
            ad::Tape tape;
            ad::Tensor s = tape.leaf({d_pool}, in.scores);
            ad::Tensor p = ad::softmax(s, in.temperature);
            ad::Tensor c = ad::Tensor::constant({d_pool, 1}, in.conditionals);
            ad::Tensor p_y = ad::reshape(ad::matmul(ad::reshape(p, {1, d_pool}), c), {1});
            tape.backward(ad::scale(ad::log(p_y), -1.0));
            const auto g = s.grad();
            for (std::size_t i = 0; i < grad_ns.size(); ++i) fold(rows[1], grad_ns[i], g[i]);
        }

        // Mixture r(s) rows.
        const auto jac = mixture_jacobian(in);
        for (int j = 0; j < width; ++j) {
            const auto fd_col = central_diff([&](const std::vector<double>& s) {
                return mixture_point(in, s)[static_cast<std::size_t>(j)];
            }, in.scores, fd_step);
            for (int i = 0; i < d_pool; ++i) {
                fold(rows[3], jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                     fd_col[static_cast<std::size_t>(i)]);
            }
        }
        {
            // sum_d pi_d * tau * J_d == sum_d pi_d^2 (z_d - r), evaluated directly.
            const auto pi = tempered_softmax(in.scores, in.temperature);
            const auto r = mixture_point(in, in.scores);
            for (int j = 0; j < width; ++j) {
                double lhs = 0.0, rhs = 0.0;
                for (int i = 0; i < d_pool; ++i) {
                    const auto iu = static_cast<std::size_t>(i);
                    const auto ju = static_cast<std::size_t>(j);
                    lhs += pi[iu] * in.temperature * jac[iu][ju];
                    rhs += pi[iu] * pi[iu] * (in.embeddings[iu][ju] - r[ju]);
                }
                rows[4].max_err = std::max(rows[4].max_err, std::abs(lhs - rhs));
            }
        }

        // Shared: probability path + representation path.
        const auto grad_sh = shared_gradient(in, quad);
        const auto fd_sh = central_diff([&](const std::vector<double>& s) {
            return loss_shared(in, quad, s);
        }, in.scores, fd_step);
        for (std::size_t i = 0; i < grad_sh.size(); ++i) fold(rows[5], grad_sh[i], fd_sh[i]);

        {
            ad::Tape tape;
            ad::Tensor s = tape.leaf({d_pool}, in.scores);
            tape.backward(ad_shared_loss(tape, in, s, target));
            const auto g = s.grad();
            for (std::size_t i = 0; i < grad_sh.size(); ++i) fold(rows[6], grad_sh[i], g[i]);
        }

        CouplingInputs zero_g = in;
        zero_g.generator_gradient.assign(static_cast<std::size_t>(width), 0.0);
        const auto grad_zero = shared_gradient(zero_g);
        for (std::size_t i = 0; i < grad_ns.size(); ++i) {
            rows[7].max_err = std::max(rows[7].max_err, std::abs(grad_zero[i] - grad_ns[i]));
        }
    }

    for (auto& row : rows) row.pass = row.max_err <= row.tol;
    return rows;
}

}  // namespace clara::oracle
