#pragma once

#include <string>
#include <vector>

#include "clara/transformer.hpp"
#include "clara/vocab.hpp"

namespace clara::model {

// A document's compressed representation: the final-layer hidden states of
// the l memory tokens, viewable as one flattened vector of width l*h.
struct MemoryEmbedding {
    std::string doc_id;
    ad::Tensor vectors;  // {l, h}

    ad::Tensor flat() const { return ad::reshape(vectors, {vectors.size()}); }
    std::int64_t l() const { return vectors.dim(0); }
    std::int64_t h() const { return vectors.dim(1); }
};

struct CompressResult {
    MemoryEmbedding memory;
    ad::Tensor doc_hidden;  // {m, h}, document positions of the same pass
};

// Bidirectional encoder pass over [t1..tm, m1..ml]; returns the memory-token
// hidden states together with the document-token hidden states.
CompressResult compress_full(const TransformerWeights& w, const ModelConfig& cfg,
                             const std::vector<int>& doc_tokens, const std::string& doc_id = "");

MemoryEmbedding compress(const TransformerWeights& w, const ModelConfig& cfg,
                         const std::vector<int>& doc_tokens, const std::string& doc_id = "");

// Teacher-forced mean NLL of target conditioned on memory rows and the
// instruction/query tokens. memory_first selects the row layout:
// [I; M; <sep>; target] for compressor pretraining, [M; Q; <sep>; target]
// for joint training.
ad::Tensor decode_loss(const TransformerWeights& gen, const ModelConfig& cfg,
                       const std::vector<ad::Tensor>& memory_rows,
                       const std::vector<int>& instruction, const std::vector<int>& target,
                       bool memory_first = false);

// Greedy decoding under the same layout; stops at <sep> or max_len.
std::vector<int> greedy_decode(const TransformerWeights& gen, const ModelConfig& cfg,
                               const std::vector<ad::Tensor>& memory_rows,
                               const std::vector<int>& instruction, int max_len,
                               bool memory_first = false);

// |mean(doc rows) - mean(memory rows)|^2 over hidden states of one pass.
ad::Tensor alignment_loss(const ad::Tensor& doc_hidden, const ad::Tensor& memory_hidden);

// ce + lambda * mse.
ad::Tensor total_pretrain_loss(const ad::Tensor& ce, const ad::Tensor& mse, double lambda);

// Project each memory vector through the output head and return the top_n
// token ids by logit, descending, ties to the lower id.
std::vector<std::vector<int>> logit_lens(const MemoryEmbedding& memory, const ad::Tensor& out_head,
                                         int top_n);

}  // namespace clara::model
