#include "clara/compressor.hpp"

#include <algorithm>
#include <numeric>

#include "clara/error.hpp"

namespace clara::model {

CompressResult compress_full(const TransformerWeights& w, const ModelConfig& cfg,
                             const std::vector<int>& doc_tokens, const std::string& doc_id) {
    if (doc_tokens.empty()) throw ShapeError("compress: empty document");
    if (static_cast<int>(doc_tokens.size()) > cfg.max_doc) {
        throw ShapeError("compress: document of " + std::to_string(doc_tokens.size()) +
                         " tokens exceeds the " + std::to_string(cfg.max_doc) + " token budget");
    }
    const std::int64_t m = static_cast<std::int64_t>(doc_tokens.size());
    ad::Tensor x = rows_with_positions(w, {ad::embedding(w.tok_emb, doc_tokens), w.mem_emb});
    ad::Tensor hidden = run_stack(w, cfg, x, /*causal=*/false);
    CompressResult out;
    out.memory.doc_id = doc_id;
    out.memory.vectors = ad::slice0(hidden, m, cfg.n_mem);
    out.doc_hidden = ad::slice0(hidden, 0, m);
    return out;
}

MemoryEmbedding compress(const TransformerWeights& w, const ModelConfig& cfg,
                         const std::vector<int>& doc_tokens, const std::string& doc_id) {
    return compress_full(w, cfg, doc_tokens, doc_id).memory;
}

namespace {

// Rows for [I; M; <sep>; decoded...] or [M; I; <sep>; decoded...].
std::vector<ad::Tensor> prefix_parts(const TransformerWeights& gen,
                                     const std::vector<ad::Tensor>& memory_rows,
                                     const std::vector<int>& instruction, bool memory_first) {
    if (instruction.empty()) throw ShapeError("decode: empty instruction");
    std::vector<ad::Tensor> parts;
    ad::Tensor instr = ad::embedding(gen.tok_emb, instruction);
    if (memory_first) {
        parts.insert(parts.end(), memory_rows.begin(), memory_rows.end());
        parts.push_back(instr);
    } else {
        parts.push_back(instr);
        parts.insert(parts.end(), memory_rows.begin(), memory_rows.end());
    }
    parts.push_back(ad::embedding(gen.tok_emb, {Vocabulary::kSep}));
    return parts;
}

}  // namespace

ad::Tensor decode_loss(const TransformerWeights& gen, const ModelConfig& cfg,
                       const std::vector<ad::Tensor>& memory_rows,
                       const std::vector<int>& instruction, const std::vector<int>& target,
                       bool memory_first) {
    if (target.empty()) throw ShapeError("decode_loss: empty target");
    auto parts = prefix_parts(gen, memory_rows, instruction, memory_first);
    std::int64_t prefix_len = 0;
    for (const auto& p : parts) prefix_len += p.dim(0);
    // teacher forcing: all but the last target token join the input
    if (target.size() > 1) {
        parts.push_back(ad::embedding(
            gen.tok_emb, std::vector<int>(target.begin(), target.end() - 1)));
    }
    ad::Tensor hidden = run_stack(gen, cfg, rows_with_positions(gen, parts), /*causal=*/true);
    ad::Tensor pred_rows = ad::slice0(hidden, prefix_len - 1, static_cast<std::int64_t>(target.size()));
    return ad::cross_entropy(ad::matmul(pred_rows, gen.out_head), target);
}

std::vector<int> greedy_decode(const TransformerWeights& gen, const ModelConfig& cfg,
                               const std::vector<ad::Tensor>& memory_rows,
                               const std::vector<int>& instruction, int max_len,
                               bool memory_first) {
    std::vector<int> out;
    for (int step = 0; step < max_len; ++step) {
        auto parts = prefix_parts(gen, memory_rows, instruction, memory_first);
        std::int64_t prefix_len = 0;
        for (const auto& p : parts) prefix_len += p.dim(0);
        if (!out.empty()) parts.push_back(ad::embedding(gen.tok_emb, out));
        ad::Tensor hidden = run_stack(gen, cfg, rows_with_positions(gen, parts), /*causal=*/true);
        ad::Tensor last = ad::slice0(hidden, prefix_len - 1 + static_cast<std::int64_t>(out.size()), 1);
        ad::Tensor logits = ad::matmul(last, gen.out_head);
        int best = 0;
        for (int v = 1; v < cfg.vocab_size; ++v) {
            if (logits.at(static_cast<std::size_t>(v)) > logits.at(static_cast<std::size_t>(best))) {
                best = v;
            }
        }
        if (best == Vocabulary::kSep) break;
        out.push_back(best);
    }
    return out;
}

ad::Tensor alignment_loss(const ad::Tensor& doc_hidden, const ad::Tensor& memory_hidden) {
    return ad::mse(ad::mean0(doc_hidden), ad::mean0(memory_hidden));
}

ad::Tensor total_pretrain_loss(const ad::Tensor& ce, const ad::Tensor& mse, double lambda) {
    if (lambda < 0.0) throw UsageError("total_pretrain_loss: lambda must be nonnegative");
    return ad::add(ce, ad::scale(mse, lambda));
}

std::vector<std::vector<int>> logit_lens(const MemoryEmbedding& memory, const ad::Tensor& out_head,
                                         int top_n) {
    const int v_dim = static_cast<int>(out_head.dim(1));
    if (top_n < 1 || top_n > v_dim) {
        throw CapacityError("logit_lens: top_n=" + std::to_string(top_n) +
                            " outside vocabulary of size " + std::to_string(v_dim));
    }
    ad::Tensor logits = ad::matmul(ad::stop_gradient(memory.vectors), ad::stop_gradient(out_head));
    std::vector<std::vector<int>> out;
    for (std::int64_t r = 0; r < memory.l(); ++r) {
        std::vector<int> ids(static_cast<std::size_t>(v_dim));
        std::iota(ids.begin(), ids.end(), 0);
        const double* row = &logits.value()[static_cast<std::size_t>(r * v_dim)];
        std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
            return row[static_cast<std::size_t>(a)] > row[static_cast<std::size_t>(b)];
        });
        ids.resize(static_cast<std::size_t>(top_n));
        out.push_back(std::move(ids));
    }
    return out;
}

}  // namespace clara::model
