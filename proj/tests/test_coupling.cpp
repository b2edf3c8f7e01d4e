#include <cmath>

#include "clara/coupling.hpp"
#include "clara/error.hpp"
#include "clara/rng.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace clara;
using testutil::central_diff;
using testutil::close_rel;

namespace {

oracle::Generator quadratic_generator(std::vector<double> target) {
    oracle::Generator g;
    g.log_prob = [target](const std::vector<double>& r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) acc += (r[j] - target[j]) * (r[j] - target[j]);
        return -acc;
    };
    g.grad = [target](const std::vector<double>& r) {
        std::vector<double> out(r.size());
        for (std::size_t j = 0; j < r.size(); ++j) out[j] = -2.0 * (r[j] - target[j]);
        return out;
    };
    return g;
}

}  // namespace

TEST_CASE("marginal likelihood under uniform and constant mixtures") {
    oracle::CouplingInputs in;
    in.scores = {0, 0, 0};
    in.conditionals = {1, 0, 0};
    auto m = oracle::marginal_likelihood(in);
    CHECK(m.p_y == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    in.scores = {2.0, -1.0, 0.5};
    in.conditionals = {0.37, 0.37, 0.37};
    CHECK(oracle::marginal_likelihood(in).p_y == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("marginal likelihood agrees with explicit summation") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        oracle::CouplingInputs in;
        in.temperature = 0.5 + rng.uniform() * 2.0;
        const int d = 2 + static_cast<int>(rng.uniform_int(7));
        for (int i = 0; i < d; ++i) {
            in.scores.push_back(rng.normal());
            in.conditionals.push_back(rng.uniform());
        }
        auto m = oracle::marginal_likelihood(in);

        // brute-force summation with independent softmax arithmetic
        double z = 0.0;
        std::vector<double> e(in.scores.size());
        for (std::size_t i = 0; i < e.size(); ++i) {
            e[i] = std::exp(in.scores[i] / in.temperature);
            z += e[i];
        }
        double py = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) py += (e[i] / z) * in.conditionals[i];
        CHECK(m.p_y == doctest::Approx(py).epsilon(1e-10));
        double lo = *std::min_element(in.conditionals.begin(), in.conditionals.end());
        double hi = *std::max_element(in.conditionals.begin(), in.conditionals.end());
        CHECK(m.p_y >= lo - 1e-15);
        CHECK(m.p_y <= hi + 1e-15);
    }
}

TEST_CASE("nonshared gradient vanishes with no preference signal") {
    oracle::CouplingInputs in;
    in.scores = {1.2, -0.3, 0.8};
    in.conditionals = {0.4, 0.4, 0.4};
    for (double g : oracle::nonshared_gradient(in)) CHECK(std::abs(g) < 1e-15);
}

TEST_CASE("nonshared gradient signs push the helpful document up") {
    oracle::CouplingInputs in;
    in.scores = {0.0, 0.0};
    in.conditionals = {1.0, 0.0};
    auto g = oracle::nonshared_gradient(in);
    CHECK(g[0] < 0.0);  // loss decreases as s1 grows
    CHECK(g[1] > 0.0);
}

TEST_CASE("nonshared gradient matches finite differences and sums to zero") {
    Rng rng(43);
    for (int trial = 0; trial < 30; ++trial) {
        oracle::CouplingInputs in;
        in.temperature = 0.5 + rng.uniform() * 1.5;
        const int d = 2 + static_cast<int>(rng.uniform_int(7));
        for (int i = 0; i < d; ++i) {
            in.scores.push_back(rng.normal());
            in.conditionals.push_back(0.05 + 0.9 * rng.uniform());
        }
        const auto g = oracle::nonshared_gradient(in);
        const auto fd = central_diff(
            [&](const std::vector<double>& s) { return oracle::loss_nonshared(in, s); }, in.scores,
            1e-5);
        double sum = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(close_rel(g[i], fd[i], 1e-6));
            sum += g[i];
        }
        CHECK(std::abs(sum) < 1e-12);
    }
}

TEST_CASE("degenerate likelihood raises") {
    oracle::CouplingInputs in;
    in.scores = {0.0, 1.0};
    in.conditionals = {0.0, 0.0};
    CHECK_THROWS_AS(oracle::nonshared_gradient(in), NumericError);
}

TEST_CASE("mixture jacobian degenerate and symmetric cases") {
    oracle::CouplingInputs in;
    in.scores = {0.7};
    in.conditionals = {0.5};
    in.embeddings = {{1.0, -2.0}};
    auto j1 = oracle::mixture_jacobian(in);
    CHECK(j1.size() == 1);
    for (double v : j1[0]) CHECK(std::abs(v) < 1e-15);

    oracle::CouplingInputs sym;
    sym.scores = {0.3, 0.3};
    sym.conditionals = {0.5, 0.5};
    sym.temperature = 0.8;
    sym.embeddings = {{2.0, -1.0}, {-2.0, 1.0}};
    auto j2 = oracle::mixture_jacobian(sym);
    for (int c = 0; c < 2; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        CHECK(j2[0][cu] ==
              doctest::Approx(sym.embeddings[0][cu] / (2.0 * sym.temperature)).epsilon(1e-12));
        CHECK(j2[1][cu] ==
              doctest::Approx(-sym.embeddings[0][cu] / (2.0 * sym.temperature)).epsilon(1e-12));
    }
}

TEST_CASE("mixture jacobian matches finite differences of r") {
    Rng rng(44);
    for (int trial = 0; trial < 20; ++trial) {
        oracle::CouplingInputs in;
        in.temperature = 0.5 + rng.uniform();
        const int d = 2 + static_cast<int>(rng.uniform_int(6));
        const int width = 1 + static_cast<int>(rng.uniform_int(5));
        for (int i = 0; i < d; ++i) {
            in.scores.push_back(rng.normal());
            in.conditionals.push_back(rng.uniform());
            in.embeddings.push_back(rng.normal_vec(static_cast<std::size_t>(width), 1.0));
        }
        const auto jac = oracle::mixture_jacobian(in);
        for (int c = 0; c < width; ++c) {
            const auto fd = central_diff(
                [&](const std::vector<double>& s) {
                    return oracle::mixture_point(in, s)[static_cast<std::size_t>(c)];
                },
                in.scores, 1e-5);
            for (int i = 0; i < d; ++i) {
                CHECK(close_rel(jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)],
                                fd[static_cast<std::size_t>(i)], 1e-6));
            }
        }
    }
}

TEST_CASE("shared gradient reduces to nonshared when g is zero") {
    Rng rng(45);
    oracle::CouplingInputs in;
    in.temperature = 1.3;
    for (int i = 0; i < 5; ++i) {
        in.scores.push_back(rng.normal());
        in.conditionals.push_back(0.1 + 0.8 * rng.uniform());
        in.embeddings.push_back(rng.normal_vec(3, 1.0));
    }
    in.generator_gradient = {0.0, 0.0, 0.0};
    const auto ns = oracle::nonshared_gradient(in);
    const auto sh = oracle::shared_gradient(in);
    for (std::size_t i = 0; i < ns.size(); ++i) CHECK(std::abs(ns[i] - sh[i]) < 1e-12);
}

TEST_CASE("representation term vanishes when all embeddings coincide") {
    oracle::CouplingInputs in;
    in.scores = {0.1, -0.5, 0.9};
    in.conditionals = {0.2, 0.6, 0.4};
    in.embeddings = {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
    in.generator_gradient = {3.0, -4.0};
    const auto ns = oracle::nonshared_gradient(in);
    const auto sh = oracle::shared_gradient(in);
    for (std::size_t i = 0; i < ns.size(); ++i) CHECK(std::abs(ns[i] - sh[i]) < 1e-14);
}

TEST_CASE("shared gradient matches finite differences of the full loss") {
    Rng rng(46);
    for (int trial = 0; trial < 20; ++trial) {
        oracle::CouplingInputs in;
        in.temperature = 0.6 + rng.uniform();
        const int d = 2 + static_cast<int>(rng.uniform_int(7));
        const int width = 1 + static_cast<int>(rng.uniform_int(6));
        for (int i = 0; i < d; ++i) {
            in.scores.push_back(rng.normal());
            in.conditionals.push_back(0.05 + 0.9 * rng.uniform());
            in.embeddings.push_back(rng.normal_vec(static_cast<std::size_t>(width), 1.0));
        }
        auto gen = quadratic_generator(rng.normal_vec(static_cast<std::size_t>(width), 1.0));
        const auto g = oracle::shared_gradient(in, gen);
        const auto fd = central_diff(
            [&](const std::vector<double>& s) { return oracle::loss_shared(in, gen, s); },
            in.scores, 1e-5);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(close_rel(g[i], fd[i], 1e-6));
    }
}

TEST_CASE("grad check suite passes every row") {
    const auto rows = oracle::run_grad_check_suite(100, 12345);
    REQUIRE(!rows.empty());
    for (const auto& row : rows) {
        INFO(row.name, " max_err=", row.max_err, " tol=", row.tol);
        CHECK(row.pass);
    }
}

TEST_CASE("coupling input validation") {
    oracle::CouplingInputs in;
    in.scores = {1.0, 2.0};
    in.conditionals = {0.5};
    CHECK_THROWS_AS(in.validate(), ShapeError);
    in.conditionals = {0.5, 1.5};
    CHECK_THROWS_AS(in.validate(), NumericError);
    in.conditionals = {0.5, 0.5};
    in.temperature = 0.0;
    CHECK_THROWS_AS(in.validate(), NumericError);
}
