#pragma once

#include <vector>

#include "clara/tensor.hpp"

namespace clara::ad {

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);

// Rank-2 linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Row-wise softmax over the last dimension at temperature max(tau, 1e-6).
Tensor softmax(const Tensor& a, double tau);

// Mean over rows of -log softmax(logits)[t, target_t].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Squared L2 norm of (a - b).
Tensor mse(const Tensor& a, const Tensor& b);

// q.z / (|q||z|), with the closed-form Jacobians on the backward path.
Tensor cosine(const Tensor& q, const Tensor& z);

// Identity forward, no gradient flow; the result is detached from any tape.
Tensor stop_gradient(const Tensor& x);

// Row-wise RMS normalization with a learned per-column gain.
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-5);

// Row gather from an embedding table; backward scatter-adds.
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

// Concatenate along axis 0; trailing dimensions must agree.
Tensor concat0(const std::vector<Tensor>& parts);

// Contiguous slice [start, start+count) along axis 0.
Tensor slice0(const Tensor& x, std::int64_t start, std::int64_t count);

Tensor reshape(const Tensor& x, std::vector<std::int64_t> new_shape);

// Mean over axis 0; a rank-1 input reduces to a scalar.
Tensor mean0(const Tensor& x);

}  // namespace clara::ad
