#include "clara/ops.hpp"

#include <algorithm>
#include <cmath>

namespace clara::ad {

namespace {

using detail::TensorImpl;
using Impl = std::shared_ptr<TensorImpl>;

Tape* common_tape(const Tensor& a, const Tensor& b) {
    Tape* ta = a.tape();
    Tape* tb = b.tape();
    if (ta && tb && ta != tb) throw std::logic_error("operands live on different tapes");
    return ta ? ta : tb;
}

Tensor make_out(Tape* tape, std::vector<std::int64_t> shape, std::vector<double> data) {
    if (tape) return tape->make(std::move(shape), std::move(data));
    return Tensor::constant(std::move(shape), std::move(data));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

bool wants_grad(const Impl& t) { return t->tape != nullptr; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tape* tape = common_tape(a, b);
    std::vector<double> v(a.value());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.at(i);
    Tensor out = make_out(tape, a.shape(), std::move(v));
    if (tape) {
        Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record([ai, bi, oi] {
            if (oi->grad.empty()) return;
            if (wants_grad(ai)) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
            }
            if (wants_grad(bi)) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] += oi->grad[i];
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tape* tape = common_tape(a, b);
    std::vector<double> v(a.value());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= b.at(i);
    Tensor out = make_out(tape, a.shape(), std::move(v));
    if (tape) {
        Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record([ai, bi, oi] {
            if (oi->grad.empty()) return;
            if (wants_grad(ai)) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
            }
            if (wants_grad(bi)) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] -= oi->grad[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tape* tape = common_tape(a, b);
    std::vector<double> v(a.value());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b.at(i);
    Tensor out = make_out(tape, a.shape(), std::move(v));
    if (tape) {
        Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record([ai, bi, oi] {
            if (oi->grad.empty()) return;
            if (wants_grad(ai)) {
                ai->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i)
                    ai->grad[i] += oi->grad[i] * bi->value[i];
            }
            if (wants_grad(bi)) {
                bi->ensure_grad();
                for (std::size_t i = 0; i < oi->grad.size(); ++i)
                    bi->grad[i] += oi->grad[i] * ai->value[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tape* tape = a.tape();
    std::vector<double> v(a.value());
    for (auto& x : v) x *= c;
    Tensor out = make_out(tape, a.shape(), std::move(v));
    if (tape) {
        Impl ai = a.impl(), oi = out.impl();
        tape->record([ai, oi, c] {
            if (oi->grad.empty()) return;
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += c * oi->grad[i];
        });
    }
    return out;
}

Tensor tanh(const Tensor& a) {
    Tape* tape = a.tape();
    std::vector<double> v(a.value());
    for (auto& x : v) x = std::tanh(x);
    Tensor out = make_out(tape, a.shape(), std::move(v));
    if (tape) {
        Impl ai = a.impl(), oi = out.impl();
        tape->record([ai, oi] {
            if (oi->grad.empty()) return;
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                const double y = oi->value[i];
                ai->grad[i] += oi->grad[i] * (1.0 - y * y);
            }
        });
    }
    return out;
}

Tensor log(const Tensor& a) {
    Tape* tape = a.tape();
    std::vector<double> v(a.value());
    for (auto& x : v) {
        if (x <= 0.0) throw NumericError("log: non-positive input");
        x = std::log(x);
    }
    Tensor out = make_out(tape, a.shape(), std::move(v));
    if (tape) {
        Impl ai = a.impl(), oi = out.impl();
        tape->record([ai, oi] {
            if (oi->grad.empty()) return;
            ai->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i)
                ai->grad[i] += oi->grad[i] / ai->value[i];
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul requires rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::size_t m = static_cast<std::size_t>(a.dim(0));
    const std::size_t n = static_cast<std::size_t>(a.dim(1));
    const std::size_t p = static_cast<std::size_t>(b.dim(1));
    Tape* tape = common_tape(a, b);

    std::vector<double> v(m * p, 0.0);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = av[i * n + k];
            if (aik == 0.0) continue;
            const double* brow = &bv[k * p];
            double* orow = &v[i * p];
            for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
    Tensor out = make_out(tape, {a.dim(0), b.dim(1)}, std::move(v));
    if (tape) {
        Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record([ai, bi, oi, m, n, p] {
            if (oi->grad.empty()) return;
            const auto& g = oi->grad;
            if (wants_grad(ai)) {
                ai->ensure_grad();
                // dA[i,k] += sum_j G[i,j] B[k,j]
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t k = 0; k < n; ++k) {
                        double acc = 0.0;
                        const double* grow = &g[i * p];
                        const double* brow = &bi->value[k * p];
                        for (std::size_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
                        ai->grad[i * n + k] += acc;
                    }
                }
            }
            if (wants_grad(bi)) {
                bi->ensure_grad();
                // dB[k,j] += sum_i A[i,k] G[i,j]
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = &g[i * p];
                    for (std::size_t k = 0; k < n; ++k) {
                        const double aik = ai->value[i * n + k];
                        if (aik == 0.0) continue;
                        double* brow = &bi->grad[k * p];
                        for (std::size_t j = 0; j < p; ++j) brow[j] += aik * grow[j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose requires rank-2, got " + shape_str(a.shape()));
    const std::size_t m = static_cast<std::size_t>(a.dim(0));
    const std::size_t n = static_cast<std::size_t>(a.dim(1));
    Tape* tape = a.tape();
    std::vector<double> v(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j * m + i] = a.at(i * n + j);
    Tensor out = make_out(tape, {a.dim(1), a.dim(0)}, std::move(v));
    if (tape) {
        Impl ai = a.impl(), oi = out.impl();
        tape->record([ai, oi, m, n] {
            if (oi->grad.empty()) return;
            ai->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ai->grad[i * n + j] += oi->grad[j * m + i];
        });
    }
    return out;
}

Tensor softmax(const Tensor& a, double tau) {
    const double t = std::max(tau, 1e-6);
    for (double x : a.value()) {
        if (!std::isfinite(x)) throw NumericError("softmax: non-finite input");
    }
    const std::size_t d = static_cast<std::size_t>(a.shape().back());
    const std::size_t rows = a.value().size() / d;
    Tape* tape = a.tape();
    std::vector<double> v(a.value().size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = &a.value()[r * d];
        double* y = &v[r * d];
        double hi = x[0];
        for (std::size_t j = 1; j < d; ++j) hi = std::max(hi, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            y[j] = std::exp((x[j] - hi) / t);
            z += y[j];
        }
        for (std::size_t j = 0; j < d; ++j) y[j] /= z;
    }
    Tensor out = make_out(tape, a.shape(), std::move(v));
    if (tape) {
        Impl ai = a.impl(), oi = out.impl();
        tape->record([ai, oi, rows, d, t] {
            if (oi->grad.empty()) return;
            ai->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = &oi->value[r * d];
                const double* g = &oi->grad[r * d];
                double gy = 0.0;
                for (std::size_t j = 0; j < d; ++j) gy += g[j] * y[j];
                for (std::size_t j = 0; j < d; ++j)
                    ai->grad[r * d + j] += y[j] * (g[j] - gy) / t;
            }
        });
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.rank() != 2) {
        throw ShapeError("cross_entropy expects [T x V] logits, got " + shape_str(logits.shape()));
    }
    const std::size_t rows = static_cast<std::size_t>(logits.dim(0));
    const std::size_t v_dim = static_cast<std::size_t>(logits.dim(1));
    if (targets.size() != rows) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(rows) + " rows");
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= v_dim) {
            throw IndexError("cross_entropy: target id " + std::to_string(t) +
                             " outside vocabulary of size " + std::to_string(v_dim));
        }
    }
    Tape* tape = logits.tape();
    std::vector<double> probs(logits.value().size());
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = &logits.value()[r * v_dim];
        double* p = &probs[r * v_dim];
        double hi = x[0];
        for (std::size_t j = 1; j < v_dim; ++j) hi = std::max(hi, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < v_dim; ++j) {
            p[j] = std::exp(x[j] - hi);
            z += p[j];
        }
        for (std::size_t j = 0; j < v_dim; ++j) p[j] /= z;
        loss -= std::log(p[static_cast<std::size_t>(targets[r])]);
    }
    loss /= static_cast<double>(rows);
    Tensor out = make_out(tape, {1}, {loss});
    if (tape) {
        Impl li = logits.impl(), oi = out.impl();
        auto tgt = targets;
        auto pr = std::make_shared<std::vector<double>>(std::move(probs));
        tape->record([li, oi, tgt, pr, rows, v_dim] {
            if (oi->grad.empty()) return;
            li->ensure_grad();
            const double g0 = oi->grad[0] / static_cast<double>(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* p = &(*pr)[r * v_dim];
                double* gl = &li->grad[r * v_dim];
                for (std::size_t j = 0; j < v_dim; ++j) gl[j] += g0 * p[j];
                gl[static_cast<std::size_t>(tgt[r])] -= g0;
            }
        });
    }
    return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    Tape* tape = common_tape(a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) {
        const double d = a.at(i) - b.at(i);
        acc += d * d;
    }
    Tensor out = make_out(tape, {1}, {acc});
    if (tape) {
        Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record([ai, bi, oi] {
            if (oi->grad.empty()) return;
            const double g0 = oi->grad[0];
            if (wants_grad(ai)) ai->ensure_grad();
            if (wants_grad(bi)) bi->ensure_grad();
            for (std::size_t i = 0; i < ai->value.size(); ++i) {
                const double d = 2.0 * (ai->value[i] - bi->value[i]) * g0;
                if (wants_grad(ai)) ai->grad[i] += d;
                if (wants_grad(bi)) bi->grad[i] -= d;
            }
        });
    }
    return out;
}

Tensor cosine(const Tensor& q, const Tensor& z) {
    require_same_shape(q, z, "cosine");
    Tape* tape = common_tape(q, z);
    double qq = 0.0, zz = 0.0, qz = 0.0;
    for (std::size_t i = 0; i < q.value().size(); ++i) {
        qq += q.at(i) * q.at(i);
        zz += z.at(i) * z.at(i);
        qz += q.at(i) * z.at(i);
    }
    const double nq = std::sqrt(qq), nz = std::sqrt(zz);
    if (nq <= 1e-12 || nz <= 1e-12) {
        throw NumericError("cosine: degenerate input with near-zero norm");
    }
    const double c = qz / (nq * nz);
    Tensor out = make_out(tape, {1}, {c});
    if (tape) {
        Impl qi = q.impl(), zi = z.impl(), oi = out.impl();
        tape->record([qi, zi, oi, nq, nz, c] {
            if (oi->grad.empty()) return;
            const double g0 = oi->grad[0];
            if (wants_grad(qi)) {
                qi->ensure_grad();
                for (std::size_t i = 0; i < qi->value.size(); ++i)
                    qi->grad[i] += g0 * (zi->value[i] / (nq * nz) - c * qi->value[i] / (nq * nq));
            }
            if (wants_grad(zi)) {
                zi->ensure_grad();
                for (std::size_t i = 0; i < zi->value.size(); ++i)
                    zi->grad[i] += g0 * (qi->value[i] / (nq * nz) - c * zi->value[i] / (nz * nz));
            }
        });
    }
    return out;
}

Tensor stop_gradient(const Tensor& x) {
    if (!x.on_tape()) return x;
    return Tensor::constant(x.shape(), x.value());
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
    if (x.rank() != 2) throw ShapeError("rms_norm expects rank-2 input, got " + shape_str(x.shape()));
    if (gain.rank() != 1 || gain.dim(0) != x.dim(1)) {
        throw ShapeError("rms_norm gain " + shape_str(gain.shape()) + " does not match columns of " +
                         shape_str(x.shape()));
    }
    const std::size_t rows = static_cast<std::size_t>(x.dim(0));
    const std::size_t h = static_cast<std::size_t>(x.dim(1));
    Tape* tape = common_tape(x, gain);
    std::vector<double> v(x.value().size());
    std::vector<double> rms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = &x.value()[r * h];
        double ss = 0.0;
        for (std::size_t i = 0; i < h; ++i) ss += xr[i] * xr[i];
        rms[r] = std::sqrt(ss / static_cast<double>(h) + eps);
        for (std::size_t i = 0; i < h; ++i) v[r * h + i] = gain.at(i) * xr[i] / rms[r];
    }
    Tensor out = make_out(tape, x.shape(), std::move(v));
    if (tape) {
        Impl xi = x.impl(), gi = gain.impl(), oi = out.impl();
        auto rm = std::make_shared<std::vector<double>>(std::move(rms));
        tape->record([xi, gi, oi, rm, rows, h] {
            if (oi->grad.empty()) return;
            if (wants_grad(gi)) gi->ensure_grad();
            if (wants_grad(xi)) xi->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* xr = &xi->value[r * h];
                const double* g = &oi->grad[r * h];
                const double rr = (*rm)[r];
                if (wants_grad(gi)) {
                    for (std::size_t i = 0; i < h; ++i) gi->grad[i] += g[i] * xr[i] / rr;
                }
                if (wants_grad(xi)) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < h; ++i) dot += g[i] * gi->value[i] * xr[i];
                    const double k = dot / (static_cast<double>(h) * rr * rr * rr);
                    for (std::size_t j = 0; j < h; ++j)
                        xi->grad[r * h + j] += g[j] * gi->value[j] / rr - k * xr[j];
                }
            }
        });
    }
    return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) {
        throw ShapeError("embedding table must be rank-2, got " + shape_str(table.shape()));
    }
    const std::size_t v_dim = static_cast<std::size_t>(table.dim(0));
    const std::size_t h = static_cast<std::size_t>(table.dim(1));
    if (ids.empty()) throw ShapeError("embedding: empty id sequence");
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v_dim) {
            throw IndexError("embedding: token id " + std::to_string(id) +
                             " outside table of size " + std::to_string(v_dim));
        }
    }
    Tape* tape = table.tape();
    std::vector<double> v(ids.size() * h);
    for (std::size_t t = 0; t < ids.size(); ++t) {
        const double* row = &table.value()[static_cast<std::size_t>(ids[t]) * h];
        std::copy(row, row + h, &v[t * h]);
    }
    Tensor out = make_out(tape, {static_cast<std::int64_t>(ids.size()), table.dim(1)}, std::move(v));
    if (tape) {
        Impl ti = table.impl(), oi = out.impl();
        auto id_copy = ids;
        tape->record([ti, oi, id_copy, h] {
            if (oi->grad.empty()) return;
            ti->ensure_grad();
            for (std::size_t t = 0; t < id_copy.size(); ++t) {
                double* dst = &ti->grad[static_cast<std::size_t>(id_copy[t]) * h];
                const double* src = &oi->grad[t * h];
                for (std::size_t i = 0; i < h; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

Tensor concat0(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat0: no parts");
    auto base = parts[0].shape();
    Tape* tape = nullptr;
    std::int64_t total = 0;
    for (const auto& p : parts) {
        auto s = p.shape();
        if (s.size() != base.size() ||
            !std::equal(s.begin() + 1, s.end(), base.begin() + 1)) {
            throw ShapeError("concat0: incompatible part shapes " + shape_str(base) + " vs " +
                             shape_str(s));
        }
        total += s[0];
        if (p.tape()) {
            if (tape && tape != p.tape()) throw std::logic_error("concat0: mixed tapes");
            tape = p.tape();
        }
    }
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(total) * (parts[0].size() / base[0]));
    for (const auto& p : parts) v.insert(v.end(), p.value().begin(), p.value().end());
    auto shape = base;
    shape[0] = total;
    Tensor out = make_out(tape, std::move(shape), std::move(v));
    if (tape) {
        std::vector<Impl> impls;
        impls.reserve(parts.size());
        for (const auto& p : parts) impls.push_back(p.impl());
        Impl oi = out.impl();
        tape->record([impls, oi] {
            if (oi->grad.empty()) return;
            std::size_t off = 0;
            for (const auto& pi : impls) {
                const std::size_t n = pi->value.size();
                if (wants_grad(pi)) {
                    pi->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) pi->grad[i] += oi->grad[off + i];
                }
                off += n;
            }
        });
    }
    return out;
}

Tensor slice0(const Tensor& x, std::int64_t start, std::int64_t count) {
    if (x.rank() < 1) throw ShapeError("slice0 needs rank >= 1");
    if (start < 0 || count <= 0 || start + count > x.dim(0)) {
        throw ShapeError("slice0: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside axis of size " +
                         std::to_string(x.dim(0)));
    }
    const std::size_t stride = x.value().size() / static_cast<std::size_t>(x.dim(0));
    Tape* tape = x.tape();
    const std::size_t off = static_cast<std::size_t>(start) * stride;
    const std::size_t n = static_cast<std::size_t>(count) * stride;
    std::vector<double> v(x.value().begin() + static_cast<std::ptrdiff_t>(off),
                          x.value().begin() + static_cast<std::ptrdiff_t>(off + n));
    auto shape = x.shape();
    shape[0] = count;
    Tensor out = make_out(tape, std::move(shape), std::move(v));
    if (tape) {
        Impl xi = x.impl(), oi = out.impl();
        tape->record([xi, oi, off, n] {
            if (oi->grad.empty()) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) xi->grad[off + i] += oi->grad[i];
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, std::vector<std::int64_t> new_shape) {
    if (shape_numel(new_shape) != x.size()) {
        throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(new_shape) +
                         " changes element count");
    }
    Tape* tape = x.tape();
    Tensor out = make_out(tape, std::move(new_shape), x.value());
    if (tape) {
        Impl xi = x.impl(), oi = out.impl();
        tape->record([xi, oi] {
            if (oi->grad.empty()) return;
            xi->ensure_grad();
            for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
        });
    }
    return out;
}

Tensor mean0(const Tensor& x) {
    const std::size_t m = static_cast<std::size_t>(x.dim(0));
    const std::size_t rest = x.value().size() / m;
    Tape* tape = x.tape();
    std::vector<double> v(rest, 0.0);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t i = 0; i < rest; ++i) v[i] += x.at(r * rest + i);
    for (auto& y : v) y /= static_cast<double>(m);
    std::vector<std::int64_t> shape(x.shape().begin() + 1, x.shape().end());
    if (shape.empty()) shape = {1};
    Tensor out = make_out(tape, std::move(shape), std::move(v));
    if (tape) {
        Impl xi = x.impl(), oi = out.impl();
        tape->record([xi, oi, m, rest] {
            if (oi->grad.empty()) return;
            xi->ensure_grad();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t i = 0; i < rest; ++i)
                    xi->grad[r * rest + i] += oi->grad[i] / static_cast<double>(m);
        });
    }
    return out;
}

}  // namespace clara::ad
