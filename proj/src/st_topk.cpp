#include "clara/st_topk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clara/error.hpp"

namespace clara::topk {

namespace {

int masked_argmax(const std::vector<double>& s, const std::vector<char>& taken) {
    int best = -1;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (taken[i]) continue;
        if (best < 0 || s[i] > s[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

}  // namespace

SelectionTensor st_topk(const ad::Tensor& scores, int k, double temperature, double epsilon,
                        const SelectionReplay* replay, SelectionReplay* capture) {
    ad::Tensor s2 = scores.rank() == 1 ? ad::reshape(scores, {1, scores.dim(0)}) : scores;
    if (s2.rank() != 2) {
        throw ShapeError("st_topk: scores must be {D} or {B,D}, got " + ad::shape_str(scores.shape()));
    }
    const int batch = static_cast<int>(s2.dim(0));
    const int d = static_cast<int>(s2.dim(1));
    if (k <= 0 || k > d) {
        throw CapacityError("st_topk: k=" + std::to_string(k) + " outside candidate pool of size " +
                            std::to_string(d));
    }
    for (double v : s2.value()) {
        if (!std::isfinite(v)) throw NumericError("st_topk: non-finite score");
    }

    if (capture) {
        capture->indices.assign(static_cast<std::size_t>(batch), {});
        capture->soft_base.assign(static_cast<std::size_t>(batch), {});
    }

    SelectionTensor out;
    out.indices.resize(static_cast<std::size_t>(batch));
    std::vector<double> hard_data(static_cast<std::size_t>(batch * k * d), 0.0);
    std::vector<ad::Tensor> soft_batches, combined_batches;

    for (int b = 0; b < batch; ++b) {
        ad::Tensor row = ad::reshape(ad::slice0(s2, b, 1), {d});
        const double* rv = &row.value()[0];

        std::vector<char> taken(static_cast<std::size_t>(d), 0);
        std::vector<ad::Tensor> soft_rows, combined_rows;
        for (int j = 0; j < k; ++j) {
            int pick;
            if (replay) {
                pick = replay->indices[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)];
            } else {
                pick = masked_argmax(std::vector<double>(rv, rv + d), taken);
            }
            out.indices[static_cast<std::size_t>(b)].push_back(pick);
            hard_data[static_cast<std::size_t>((b * k + j) * d + pick)] = 1.0;

            std::vector<double> log_mask(static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i) {
                log_mask[static_cast<std::size_t>(i)] =
                    std::log((taken[static_cast<std::size_t>(i)] ? 0.0 : 1.0) + epsilon);
            }
            ad::Tensor logits = ad::add(row, ad::Tensor::constant({d}, std::move(log_mask)));
            ad::Tensor soft = ad::softmax(logits, temperature);

            ad::Tensor base = replay
                ? ad::Tensor::constant({d}, replay->soft_base[static_cast<std::size_t>(b)]
                                                             [static_cast<std::size_t>(j)])
                : ad::stop_gradient(soft);
            std::vector<double> hard_row(static_cast<std::size_t>(d), 0.0);
            hard_row[static_cast<std::size_t>(pick)] = 1.0;
            ad::Tensor combined =
                ad::add(ad::Tensor::constant({d}, std::move(hard_row)), ad::sub(soft, base));

            if (capture) {
                capture->indices[static_cast<std::size_t>(b)].push_back(pick);
                capture->soft_base[static_cast<std::size_t>(b)].push_back(soft.value());
            }

            soft_rows.push_back(ad::reshape(soft, {1, d}));
            combined_rows.push_back(ad::reshape(combined, {1, d}));
            taken[static_cast<std::size_t>(pick)] = 1;
        }
        soft_batches.push_back(ad::reshape(ad::concat0(soft_rows), {1, k, d}));
        combined_batches.push_back(ad::reshape(ad::concat0(combined_rows), {1, k, d}));
    }

    out.hard = ad::Tensor::constant({batch, k, d}, std::move(hard_data));
    out.soft = ad::concat0(soft_batches);
    out.combined = ad::concat0(combined_batches);
    return out;
}

ad::Tensor aggregate(const SelectionTensor& selection, const ad::Tensor& embeddings) {
    if (embeddings.rank() != 3) {
        throw ShapeError("aggregate: embeddings must be {B,D,d}, got " +
                         ad::shape_str(embeddings.shape()));
    }
    const auto& zs = selection.combined.shape();
    if (zs[0] != embeddings.dim(0) || zs[2] != embeddings.dim(1)) {
        throw ShapeError("aggregate: selection " + ad::shape_str(zs) +
                         " incompatible with embeddings " + ad::shape_str(embeddings.shape()));
    }
    const int batch = static_cast<int>(zs[0]);
    const int k = static_cast<int>(zs[1]);
    const int d_pool = static_cast<int>(zs[2]);
    const int width = static_cast<int>(embeddings.dim(2));

    std::vector<ad::Tensor> rows;
    rows.reserve(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
        ad::Tensor zb = ad::reshape(ad::slice0(selection.combined, b, 1), {k, d_pool});
        ad::Tensor mb = ad::reshape(ad::slice0(embeddings, b, 1), {d_pool, width});
        rows.push_back(ad::reshape(ad::matmul(zb, mb), {1, k, width}));
    }
    return ad::concat0(rows);
}

std::vector<int> exact_topk_oracle(const std::vector<double>& scores, int k) {
    if (k < 0 || static_cast<std::size_t>(k) > scores.size()) {
        throw CapacityError("exact_topk_oracle: k=" + std::to_string(k) + " for " +
                            std::to_string(scores.size()) + " scores");
    }
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace clara::topk
