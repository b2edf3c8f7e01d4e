#include "clara/tensor.hpp"

#include <numeric>
#include <sstream>

namespace clara::ad {

std::string shape_str(const std::vector<std::int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

Tensor Tensor::constant(std::vector<std::int64_t> shape, std::vector<double> data) {
    for (auto d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->value = std::move(data);
    return wrap(std::move(impl));
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
    const auto n = shape_numel(shape);
    return constant(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() requires a scalar, got " + shape_str(shape()));
    return impl_->value[0];
}

std::vector<double> Tensor::grad() const {
    if (!impl_->grad.empty()) return impl_->grad;
    return std::vector<double>(impl_->value.size(), 0.0);
}

Tensor Tape::leaf(std::vector<std::int64_t> shape, std::vector<double> data) {
    return make(std::move(shape), std::move(data));
}

Tensor Tape::make(std::vector<std::int64_t> shape, std::vector<double> data) {
    Tensor t = Tensor::constant(std::move(shape), std::move(data));
    t.impl()->tape = this;
    tensors_.push_back(t.impl());
    return t;
}

void Tape::backward(const Tensor& root) {
    if (root.size() != 1) throw ShapeError("backward root must be scalar");
    if (root.tape() != this) throw std::logic_error("backward root does not live on this tape");
    clear_grads();
    root.impl()->ensure_grad();
    root.impl()->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::clear_grads() {
    for (auto& t : tensors_) t->grad.clear();
}

}  // namespace clara::ad
