#include "clara/transformer.hpp"

#include <cmath>

#include "clara/error.hpp"

namespace clara::model {

void ModelConfig::validate() const {
    if (vocab_size <= 0) throw UsageError("model config: vocab_size must be positive");
    if (hidden <= 0 || ffn <= 0 || blocks <= 0 || max_pos <= 0 || n_mem <= 0 || heads <= 0) {
        throw UsageError("model config: dimensions must be positive");
    }
    if (hidden % heads != 0) {
        throw UsageError("model config: hidden=" + std::to_string(hidden) +
                         " not divisible by heads=" + std::to_string(heads));
    }
}

void ParamGroup::add(std::string name, std::vector<std::int64_t> shape, std::vector<double> data) {
    if (index_.count(name)) throw UsageError("duplicate parameter name: " + name);
    if (ad::shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw ShapeError("parameter " + name + ": data does not match shape");
    }
    index_.emplace(name, params_.size());
    params_.push_back(NamedParam{std::move(name), std::move(shape), std::move(data)});
}

const NamedParam& ParamGroup::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("no parameter named " + name);
    return params_[it->second];
}

NamedParam& ParamGroup::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("no parameter named " + name);
    return params_[it->second];
}

ParamGroup ParamGroup::init_transformer(const ModelConfig& cfg, Rng& rng, double init_std) {
    cfg.validate();
    ParamGroup g;
    auto randn = [&](std::int64_t n) { return rng.normal_vec(static_cast<std::size_t>(n), init_std); };
    const std::int64_t v = cfg.vocab_size, h = cfg.hidden, f = cfg.ffn;

    g.add("tok_emb", {v, h}, randn(v * h));
    g.add("pos_emb", {cfg.max_pos, h}, randn(cfg.max_pos * h));
    g.add("mem_emb", {cfg.n_mem, h}, randn(cfg.n_mem * h));
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        g.add(p + "norm1_gain", {h}, std::vector<double>(static_cast<std::size_t>(h), 1.0));
        g.add(p + "wq", {h, h}, randn(h * h));
        g.add(p + "wk", {h, h}, randn(h * h));
        g.add(p + "wv", {h, h}, randn(h * h));
        g.add(p + "wo", {h, h}, randn(h * h));
        g.add(p + "norm2_gain", {h}, std::vector<double>(static_cast<std::size_t>(h), 1.0));
        g.add(p + "ffn_w1", {h, f}, randn(h * f));
        g.add(p + "ffn_w2", {f, h}, randn(f * h));
    }
    g.add("final_gain", {h}, std::vector<double>(static_cast<std::size_t>(h), 1.0));
    g.add("out_head", {h, v}, randn(h * v));
    return g;
}

BoundGroup bind(ad::Tape* tape, const ParamGroup& group, const ModelConfig& cfg) {
    BoundGroup out;
    std::unordered_map<std::string, ad::Tensor> by_name;
    out.leaves.reserve(group.size());
    for (const auto& p : group.params()) {
        ad::Tensor t = tape ? tape->leaf(p.shape, p.data) : ad::Tensor::constant(p.shape, p.data);
        out.leaves.push_back(t);
        by_name.emplace(p.name, t);
    }
    out.w.tok_emb = by_name.at("tok_emb");
    out.w.pos_emb = by_name.at("pos_emb");
    out.w.mem_emb = by_name.at("mem_emb");
    out.w.final_gain = by_name.at("final_gain");
    out.w.out_head = by_name.at("out_head");
    out.w.blocks.resize(static_cast<std::size_t>(cfg.blocks));
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        auto& blk = out.w.blocks[static_cast<std::size_t>(b)];
        blk.norm1_gain = by_name.at(p + "norm1_gain");
        blk.wq = by_name.at(p + "wq");
        blk.wk = by_name.at(p + "wk");
        blk.wv = by_name.at(p + "wv");
        blk.wo = by_name.at(p + "wo");
        blk.norm2_gain = by_name.at(p + "norm2_gain");
        blk.ffn_w1 = by_name.at(p + "ffn_w1");
        blk.ffn_w2 = by_name.at(p + "ffn_w2");
    }
    return out;
}

void apply_sgd(ParamGroup& group, const BoundGroup& bound, double lr) {
    if (bound.leaves.size() != group.size()) {
        throw ShapeError("apply_sgd: bound leaves do not match parameter group");
    }
    for (std::size_t i = 0; i < group.size(); ++i) {
        auto& data = group.params()[i].data;
        const auto g = bound.leaves[i].grad();
        for (std::size_t j = 0; j < data.size(); ++j) data[j] -= lr * g[j];
    }
}

namespace {

ad::Tensor slice_cols(const ad::Tensor& x, std::int64_t start, std::int64_t count) {
    return ad::transpose(ad::slice0(ad::transpose(x), start, count));
}

}  // namespace

ad::Tensor run_stack(const TransformerWeights& w, const ModelConfig& cfg, const ad::Tensor& x,
                     bool causal) {
    const std::int64_t t_len = x.dim(0);
    ad::Tensor h = x;
    ad::Tensor mask;
    if (causal && t_len > 1) {
        std::vector<double> m(static_cast<std::size_t>(t_len * t_len), 0.0);
        for (std::int64_t i = 0; i < t_len; ++i) {
            for (std::int64_t j = i + 1; j < t_len; ++j) {
                m[static_cast<std::size_t>(i * t_len + j)] = -1e9;
            }
        }
        mask = ad::Tensor::constant({t_len, t_len}, std::move(m));
    }
    const std::int64_t head_dim = cfg.hidden / cfg.heads;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (const auto& blk : w.blocks) {
        ad::Tensor xn = ad::rms_norm(h, blk.norm1_gain);
        ad::Tensor q = ad::matmul(xn, blk.wq);
        ad::Tensor k = ad::matmul(xn, blk.wk);
        ad::Tensor v = ad::matmul(xn, blk.wv);
        std::vector<ad::Tensor> head_ctx;
        head_ctx.reserve(static_cast<std::size_t>(cfg.heads));
        for (int head = 0; head < cfg.heads; ++head) {
            const std::int64_t off = head * head_dim;
            ad::Tensor qh = slice_cols(q, off, head_dim);
            ad::Tensor kh = slice_cols(k, off, head_dim);
            ad::Tensor vh = slice_cols(v, off, head_dim);
            ad::Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_hd);
            if (mask.defined()) scores = ad::add(scores, mask);
            head_ctx.push_back(ad::transpose(ad::matmul(ad::softmax(scores, 1.0), vh)));
        }
        ad::Tensor ctx = ad::transpose(ad::concat0(head_ctx));  // heads side by side
        h = ad::add(h, ad::matmul(ctx, blk.wo));
        ad::Tensor fn = ad::rms_norm(h, blk.norm2_gain);
        ad::Tensor f = ad::matmul(ad::tanh(ad::matmul(fn, blk.ffn_w1)), blk.ffn_w2);
        h = ad::add(h, f);
    }
    return ad::rms_norm(h, w.final_gain);
}

ad::Tensor rows_with_positions(const TransformerWeights& w, const std::vector<ad::Tensor>& parts) {
    ad::Tensor rows = parts.size() == 1 ? parts[0] : ad::concat0(parts);
    const std::int64_t t_len = rows.dim(0);
    if (t_len > w.pos_emb.dim(0)) {
        throw ShapeError("sequence of " + std::to_string(t_len) +
                         " rows exceeds position table of " + std::to_string(w.pos_emb.dim(0)));
    }
    return ad::add(rows, ad::slice0(w.pos_emb, 0, t_len));
}

}  // namespace clara::model
