#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "clara/ops.hpp"
#include "clara/rng.hpp"
#include "clara/tensor.hpp"

namespace clara::model {

struct ModelConfig {
    int vocab_size = 0;
    int hidden = 32;
    int heads = 4;
    int ffn = 64;
    int blocks = 2;
    int max_pos = 384;
    int n_mem = 4;        // memory tokens per sequence (l)
    int max_doc = 256;    // document token budget

    void validate() const;
};

struct NamedParam {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<double> data;
};

// Flat named parameter list for one module (compressor, generator or query
// reasoner). Storage is plain f64; tapes bind it per forward pass.
class ParamGroup {
public:
    void add(std::string name, std::vector<std::int64_t> shape, std::vector<double> data);
    const NamedParam& at(const std::string& name) const;
    NamedParam& at(const std::string& name);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const std::vector<NamedParam>& params() const { return params_; }
    std::vector<NamedParam>& params() { return params_; }
    std::size_t size() const { return params_.size(); }

    static ParamGroup init_transformer(const ModelConfig& cfg, Rng& rng, double init_std = 0.08);

private:
    std::vector<NamedParam> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct BlockWeights {
    ad::Tensor norm1_gain, wq, wk, wv, wo;
    ad::Tensor norm2_gain, ffn_w1, ffn_w2;
};

struct TransformerWeights {
    ad::Tensor tok_emb;     // {V, h}
    ad::Tensor pos_emb;     // {P, h}
    ad::Tensor mem_emb;     // {l, h}
    ad::Tensor final_gain;  // {h}
    ad::Tensor out_head;    // {h, V}
    std::vector<BlockWeights> blocks;
};

// Bound group: the structured weights plus the flat leaves in group order,
// so SGD can map accumulated gradients back onto storage.
struct BoundGroup {
    TransformerWeights w;
    std::vector<ad::Tensor> leaves;
};

// tape == nullptr binds frozen constants (no gradients, nothing recorded).
BoundGroup bind(ad::Tape* tape, const ParamGroup& group, const ModelConfig& cfg);

// p -= lr * grad for every leaf bound from this group.
void apply_sgd(ParamGroup& group, const BoundGroup& bound, double lr);

// Pre-norm attention + feed-forward stack over input rows {T, h}.
ad::Tensor run_stack(const TransformerWeights& w, const ModelConfig& cfg, const ad::Tensor& x,
                     bool causal);

// Token embeddings plus positions for ids, optionally followed or preceded
// by raw continuous rows. Position ids run over the whole sequence.
ad::Tensor rows_with_positions(const TransformerWeights& w, const std::vector<ad::Tensor>& parts);

}  // namespace clara::model
