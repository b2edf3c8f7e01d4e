#include <algorithm>
#include <cmath>
#include <limits>

#include "clara/rng.hpp"
#include "clara/st_topk.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace clara;
using testutil::central_diff;
using testutil::close_rel;

namespace {

ad::Tensor contract(const ad::Tensor& t, const std::vector<double>& w) {
    const std::int64_t n = t.size();
    return ad::reshape(ad::matmul(ad::Tensor::constant({1, n}, w), ad::reshape(t, {n, 1})), {1});
}

// All ordered pairs, best (sum under descending-lexicographic tie rules) first.
std::vector<int> brute_force_top2(const std::vector<double>& s) {
    std::vector<int> best;
    for (int i = 0; i < static_cast<int>(s.size()); ++i) {
        for (int j = 0; j < static_cast<int>(s.size()); ++j) {
            if (i == j) continue;
            std::vector<int> cand{i, j};
            if (best.empty()) {
                best = cand;
                continue;
            }
            auto key = [&](const std::vector<int>& v) {
                return std::make_tuple(s[static_cast<std::size_t>(v[0])],
                                       s[static_cast<std::size_t>(v[1])], -v[0], -v[1]);
            };
            if (key(cand) > key(best)) best = cand;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("st_topk selects [0,2] from [3,1,2] with the expected soft row") {
    auto scores = ad::Tensor::constant({3}, {3, 1, 2});
    auto sel = topk::st_topk(scores, 2, 1.0, 1e-10);

    CHECK(sel.indices == std::vector<std::vector<int>>{{0, 2}});
    CHECK(sel.indices[0] == brute_force_top2({3, 1, 2}));

    // hard rows e0, e2
    CHECK(sel.hard.value() == std::vector<double>{1, 0, 0, 0, 0, 1});

    // first soft row is the plain softmax of the scores (mask still open)
    const double z = std::exp(3.0) + std::exp(1.0) + std::exp(2.0);
    CHECK(sel.soft.at(0) == doctest::Approx(std::exp(3.0) / z).epsilon(1e-9));
    CHECK(sel.soft.at(1) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-9));
    CHECK(sel.soft.at(2) == doctest::Approx(std::exp(2.0) / z).epsilon(1e-9));
    CHECK(sel.soft.at(0) == doctest::Approx(0.6652).epsilon(1e-4));
}

TEST_CASE("st_topk breaks score ties toward the lowest index") {
    auto sel = topk::st_topk(ad::Tensor::constant({3}, {5, 5, 1}), 1, 1.0, 1e-10);
    CHECK(sel.indices[0][0] == 0);
}

TEST_CASE("st_topk validates inputs") {
    auto s = ad::Tensor::constant({3}, {1, 2, 3});
    CHECK_THROWS_AS(topk::st_topk(s, 4, 1.0, 1e-10), CapacityError);
    CHECK_THROWS_AS(topk::st_topk(s, 0, 1.0, 1e-10), CapacityError);
    CHECK_THROWS_AS(
        topk::st_topk(ad::Tensor::constant({2}, {1.0, std::numeric_limits<double>::infinity()}), 1,
                      1.0, 1e-10),
        NumericError);
}

TEST_CASE("combined forward equals hard bit-exactly") {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 2 + static_cast<int>(rng.uniform_int(31));
        const int k = 1 + static_cast<int>(rng.uniform_int(std::min(d, 8)));
        ad::Tape tape;
        auto s = tape.leaf({d}, rng.normal_vec(static_cast<std::size_t>(d), 1.0));
        auto sel = topk::st_topk(s, k, 0.5 + rng.uniform(), 1e-10);
        REQUIRE(sel.combined.value().size() == sel.hard.value().size());
        for (std::size_t i = 0; i < sel.hard.value().size(); ++i) {
            CHECK(sel.combined.at(i) == sel.hard.at(i));  // bit-exact
        }
    }
}

TEST_CASE("st_topk indices match the exact oracle on 1000 random vectors") {
    Rng rng(202);
    for (int trial = 0; trial < 1000; ++trial) {
        const int d = 2 + static_cast<int>(rng.uniform_int(31));
        const int k = 1 + static_cast<int>(rng.uniform_int(std::min(d, 8)));
        std::vector<double> s(static_cast<std::size_t>(d));
        for (auto& v : s) v = rng.normal();
        if (trial % 5 == 0) {
            // inject ties
            for (std::size_t i = 1; i < s.size(); i += 3) s[i] = s[i - 1];
        }
        auto sel = topk::st_topk(ad::Tensor::constant({d}, s), k, 1.0, 1e-10);
        CHECK(sel.indices[0] == topk::exact_topk_oracle(s, k));
    }
}

TEST_CASE("exact oracle basics") {
    CHECK(topk::exact_topk_oracle({3, 1, 2}, 2) == std::vector<int>{0, 2});
    CHECK(topk::exact_topk_oracle({1, 1, 1}, 3) == std::vector<int>{0, 1, 2});
    CHECK(topk::exact_topk_oracle({3, 1, 2}, 2) == brute_force_top2({3, 1, 2}));
}

TEST_CASE("straight-through gradient equals the soft gradient entrywise") {
    Rng rng(303);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 3 + static_cast<int>(rng.uniform_int(6));
        const int k = 1 + static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(d)));
        ad::Tape tape;
        auto s = tape.leaf({d}, rng.normal_vec(static_cast<std::size_t>(d), 1.0));
        auto sel = topk::st_topk(s, k, 0.7, 1e-10);
        for (int out = 0; out < k * d; ++out) {
            std::vector<double> pick(static_cast<std::size_t>(k * d), 0.0);
            pick[static_cast<std::size_t>(out)] = 1.0;
            tape.backward(contract(sel.combined, pick));
            const auto g_combined = s.grad();
            tape.backward(contract(sel.soft, pick));
            const auto g_soft = s.grad();
            for (int i = 0; i < d; ++i) {
                CHECK(std::abs(g_combined[static_cast<std::size_t>(i)] -
                               g_soft[static_cast<std::size_t>(i)]) <= 1e-12);
            }
        }
    }
}

TEST_CASE("soft rows leak at most epsilon-induced mass onto taken indices") {
    Rng rng(404);
    for (double tau : {0.1, 0.5, 1.0}) {
        for (int trial = 0; trial < 50; ++trial) {
            const int d = 4 + static_cast<int>(rng.uniform_int(12));
            const int k = 2 + static_cast<int>(rng.uniform_int(std::min(d - 1, 5)));
            auto sel = topk::st_topk(
                ad::Tensor::constant({d}, rng.normal_vec(static_cast<std::size_t>(d), 1.0)), k, tau,
                1e-10);
            for (int j = 1; j < k; ++j) {
                for (int jj = 0; jj < j; ++jj) {
                    const int taken_idx = sel.indices[0][static_cast<std::size_t>(jj)];
                    CHECK(sel.soft.at(static_cast<std::size_t>(j * d + taken_idx)) < 1e-6);
                }
            }
        }
    }
}

TEST_CASE("first soft row converges to the hard row as tau goes to zero") {
    Rng rng(505);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 3 + static_cast<int>(rng.uniform_int(6));
        std::vector<double> s(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) s[static_cast<std::size_t>(i)] = 1.5 * i;  // gaps >= 1
        rng.shuffle(s);
        auto sel = topk::st_topk(ad::Tensor::constant({d}, s), 1, 1e-3, 1e-10);
        for (int i = 0; i < d; ++i) {
            CHECK(std::abs(sel.soft.at(static_cast<std::size_t>(i)) -
                           sel.hard.at(static_cast<std::size_t>(i))) < 1e-6);
        }
    }
}

TEST_CASE("aggregate copies the selected embedding rows exactly") {
    Rng rng(606);
    const int d_pool = 5, width = 4, k = 2;
    const auto emb = rng.normal_vec(static_cast<std::size_t>(d_pool * width), 1.0);
    auto m = ad::Tensor::constant({1, d_pool, width}, emb);
    auto sel = topk::st_topk(ad::Tensor::constant({d_pool}, {0.1, 2.0, -1.0, 3.0, 0.5}), k, 1.0,
                             1e-10);
    CHECK(sel.indices[0] == std::vector<int>{3, 1});
    auto agg = topk::aggregate(sel, m);
    REQUIRE(agg.shape() == std::vector<std::int64_t>{1, k, width});
    for (int j = 0; j < k; ++j) {
        const int src = sel.indices[0][static_cast<std::size_t>(j)];
        for (int c = 0; c < width; ++c) {
            CHECK(agg.at(static_cast<std::size_t>(j * width + c)) ==
                  emb[static_cast<std::size_t>(src * width + c)]);
        }
    }
}

TEST_CASE("aggregate with k=D is a permutation in descending score order") {
    Rng rng(707);
    const int d_pool = 6, width = 3;
    const auto emb = rng.normal_vec(static_cast<std::size_t>(d_pool * width), 1.0);
    std::vector<double> s(static_cast<std::size_t>(d_pool));
    for (auto& v : s) v = rng.normal();
    auto sel = topk::st_topk(ad::Tensor::constant({d_pool}, s), d_pool, 1.0, 1e-10);
    auto agg = topk::aggregate(sel, ad::Tensor::constant({1, d_pool, width}, emb));
    auto order = topk::exact_topk_oracle(s, d_pool);
    CHECK(sel.indices[0] == order);
    for (int j = 0; j < d_pool; ++j) {
        for (int c = 0; c < width; ++c) {
            CHECK(agg.at(static_cast<std::size_t>(j * width + c)) ==
                  emb[static_cast<std::size_t>(order[static_cast<std::size_t>(j)] * width + c)]);
        }
    }
}

TEST_CASE("score gradient through aggregate matches finite differences of the soft path") {
    Rng rng(808);
    const int d_pool = 6, width = 3, k = 3;
    const auto emb = rng.normal_vec(static_cast<std::size_t>(d_pool * width), 1.0);
    const auto w = rng.normal_vec(static_cast<std::size_t>(k * width), 1.0);
    const auto s0 = rng.normal_vec(static_cast<std::size_t>(d_pool), 1.0);

    topk::SelectionReplay replay;
    ad::Tape tape;
    auto s = tape.leaf({d_pool}, s0);
    auto sel = topk::st_topk(s, k, 0.9, 1e-10, nullptr, &replay);
    auto loss = contract(topk::aggregate(sel, ad::Tensor::constant({1, d_pool, width}, emb)), w);
    tape.backward(loss);
    const auto analytic = s.grad();

    // Replay freezes the hard selection and the stop-gradient captures, which
    // is the function the straight-through backward differentiates.
    const auto fd = central_diff(
        [&](const std::vector<double>& sv) {
            ad::Tape t2;
            auto ss = t2.leaf({d_pool}, sv);
            auto sel2 = topk::st_topk(ss, k, 0.9, 1e-10, &replay, nullptr);
            return contract(topk::aggregate(sel2, ad::Tensor::constant({1, d_pool, width}, emb)), w)
                .item();
        },
        s0);
    CHECK(testutil::all_close_rel(analytic, fd, 1e-5));
}

TEST_CASE("aggregate rejects mismatched pools") {
    auto sel = topk::st_topk(ad::Tensor::constant({3}, {1, 2, 3}), 2, 1.0, 1e-10);
    CHECK_THROWS_AS(topk::aggregate(sel, ad::Tensor::constant({1, 4, 2}, std::vector<double>(8, 0.0))),
                    ShapeError);
}

TEST_CASE("batched scores select per row") {
    auto scores = ad::Tensor::constant({2, 3}, {3, 1, 2, 0, 5, 1});
    auto sel = topk::st_topk(scores, 2, 1.0, 1e-10);
    CHECK(sel.indices == std::vector<std::vector<int>>{{0, 2}, {1, 2}});
    CHECK(sel.combined.shape() == std::vector<std::int64_t>{2, 2, 3});
}
