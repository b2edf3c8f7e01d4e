#pragma once

#include <vector>

#include "clara/ops.hpp"
#include "clara/tensor.hpp"

namespace clara::topk {

// Constants captured from one st_topk call so the same selection can be
// replayed under perturbed scores: the hard choices and the stop-gradient
// captures stay fixed, which is exactly the function the straight-through
// backward pass differentiates. Used by finite-difference checks.
struct SelectionReplay {
    std::vector<std::vector<int>> indices;                     // [B][k]
    std::vector<std::vector<std::vector<double>>> soft_base;   // [B][k][D]
};

// B x k x D selection. hard is detached one-hot rows; soft carries the
// masked softmax rows; combined has hard forward values and soft gradients.
struct SelectionTensor {
    ad::Tensor hard;
    ad::Tensor soft;
    ad::Tensor combined;
    std::vector<std::vector<int>> indices;  // [B][k], selection order
};

// Iterative differentiable top-k with a straight-through estimator.
// scores is {D} or {B, D}. Each round picks the hard argmax among
// not-yet-taken candidates (ties to the lowest index), forms the soft row
// softmax((s + log(mask + epsilon)) / tau), and combines
// hard + (soft - SG(soft)). No gradient flows through the mask.
SelectionTensor st_topk(const ad::Tensor& scores, int k, double temperature, double epsilon,
                        const SelectionReplay* replay = nullptr,
                        SelectionReplay* capture = nullptr);

// M^(k) = Z * M over the batch; embeddings is {B, D, d}.
ad::Tensor aggregate(const SelectionTensor& selection, const ad::Tensor& embeddings);

// Indices of the k largest scores, descending, ties to the lowest index.
std::vector<int> exact_topk_oracle(const std::vector<double>& scores, int k);

}  // namespace clara::topk
