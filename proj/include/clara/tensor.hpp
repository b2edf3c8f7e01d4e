#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "clara/error.hpp"

namespace clara::ad {

class Tape;

namespace detail {

struct TensorImpl {
    std::vector<std::int64_t> shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty means "all zero / never touched"
    Tape* tape = nullptr;      // null for detached constants

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Dense n-dimensional f64 array, optionally attached to a tape. Copies are
// shallow handles; tensors detached from any tape are immutable values.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(std::vector<std::int64_t> shape, std::vector<double> data);
    static Tensor scalar(double v) { return constant({1}, {v}); }
    static Tensor zeros(std::vector<std::int64_t> shape);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::int64_t>& shape() const { return impl_->shape; }
    std::int64_t size() const { return static_cast<std::int64_t>(impl_->value.size()); }
    std::int64_t dim(std::size_t i) const { return impl_->shape[i]; }
    std::size_t rank() const { return impl_->shape.size(); }

    const std::vector<double>& value() const { return impl_->value; }
    double at(std::size_t i) const { return impl_->value[i]; }

    // Scalar payload; requires size()==1.
    double item() const;

    // Accumulated gradient after Tape::backward. Zero-filled if untouched.
    std::vector<double> grad() const;

    bool on_tape() const { return impl_ && impl_->tape != nullptr; }
    Tape* tape() const { return impl_ ? impl_->tape : nullptr; }

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
    static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl);

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Append-only record of one forward pass. Backward replays the recorded
// closures in reverse, visiting each node exactly once; gradients of reused
// tensors accumulate with +=.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Tracked leaf whose gradient is readable after backward.
    Tensor leaf(std::vector<std::int64_t> shape, std::vector<double> data);

    Tensor make(std::vector<std::int64_t> shape, std::vector<double> data);
    void record(std::function<void()> backward_step) { nodes_.push_back(std::move(backward_step)); }

    // Seeds d(root)/d(root)=1 and propagates to every tensor on this tape.
    // root must be scalar. Gradients are reset first, so repeated calls
    // (e.g. one per Jacobian row) are independent.
    void backward(const Tensor& root);

    void clear_grads();
    std::size_t node_count() const { return nodes_.size(); }

private:
    std::vector<std::function<void()>> nodes_;
    std::vector<std::shared_ptr<detail::TensorImpl>> tensors_;
};

std::string shape_str(const std::vector<std::int64_t>& s);
std::int64_t shape_numel(const std::vector<std::int64_t>& s);

}  // namespace clara::ad
