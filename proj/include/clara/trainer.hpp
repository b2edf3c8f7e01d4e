#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "clara/compressor.hpp"
#include "clara/config.hpp"
#include "clara/st_topk.hpp"

namespace clara::train {

// Frozen store of flattened document representations, all sharing l and h.
class CompressedIndex {
public:
    int l = 0;
    int h = 0;

    void add(const std::string& doc_id, std::vector<double> flat);
    const std::vector<double>& at(const std::string& doc_id) const;
    bool has(const std::string& doc_id) const { return by_id_.count(doc_id) > 0; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<std::vector<double>>& vectors() const { return vecs_; }

    // FNV-1a over the payload bytes; the frozen-index contract is checked
    // by comparing fingerprints across training.
    std::uint64_t fingerprint() const;

private:
    std::vector<std::string> ids_;
    std::vector<std::vector<double>> vecs_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

struct TrainingExample {
    std::vector<int> query;
    std::vector<std::string> candidates;  // doc ids, |candidates| = D
    std::vector<std::string> gold;
    std::vector<int> answer;
};

// Query encoding shares the compressor mechanics under the query reasoner
// parameters; the output lives in the same l x h space as index entries.
model::MemoryEmbedding encode_query(const model::TransformerWeights& qr_w,
                                    const model::ModelConfig& cfg, const std::vector<int>& query);

// Cosine over flattened vectors, one score per candidate: {1, D}.
ad::Tensor score_candidates(const ad::Tensor& q_flat, const CompressedIndex& index,
                            const std::vector<std::string>& candidates);

// Candidates by descending score, ties by ascending doc id.
std::vector<std::string> rank_documents(const std::vector<double>& q_flat,
                                        const CompressedIndex& index,
                                        const std::vector<std::string>& candidates);

struct JointForward {
    ad::Tensor loss;
    std::vector<std::string> selected;  // top-k doc ids in selection order
    std::vector<double> scores;         // candidate-order cosine values
};

// Full differentiable pipeline for one example: encode, score, select via
// st_topk, aggregate, generator NLL over the answer. The replay/capture
// arguments freeze or record the selection for finite-difference checks.
JointForward joint_forward(const model::TransformerWeights& qr_w,
                           const model::TransformerWeights& gen_w, const model::ModelConfig& cfg,
                           const RunConfig& rc, const CompressedIndex& index,
                           const TrainingExample& ex,
                           const topk::SelectionReplay* replay = nullptr,
                           topk::SelectionReplay* capture = nullptr);

struct StepStats {
    double loss = 0.0;
    double recall_at_k = 0.0;  // gold inside the selected top-k
    double recall1 = 0.0, recall3 = 0.0, recall5 = 0.0;
};

// Owns the query reasoner and generator; the index stays frozen outside.
class JointTrainer {
public:
    JointTrainer(model::ModelConfig cfg, RunConfig rc, model::ParamGroup qr, model::ParamGroup gen,
                 const CompressedIndex* index);

    StepStats step(const std::vector<TrainingExample>& batch, bool update_qr = true,
                   bool update_gen = true);

    // Ranking metrics over a task set without touching parameters.
    StepStats evaluate_ranking(const std::vector<TrainingExample>& tasks) const;

    const model::ParamGroup& qr() const { return qr_; }
    const model::ParamGroup& gen() const { return gen_; }
    model::ParamGroup& qr() { return qr_; }
    model::ParamGroup& gen() { return gen_; }
    const model::ModelConfig& cfg() const { return cfg_; }

private:
    model::ModelConfig cfg_;
    RunConfig rc_;
    model::ParamGroup qr_;
    model::ParamGroup gen_;
    const CompressedIndex* index_;
};

struct ContrastivePair {
    std::vector<int> query;
    std::string positive;
    std::vector<std::string> negatives;
};

// One InfoNCE step over cosine scores; updates the query reasoner only.
double contrastive_step(model::ParamGroup& qr, const model::ModelConfig& cfg, const RunConfig& rc,
                        const CompressedIndex& index, const std::vector<ContrastivePair>& batch);

// One decode task over one or more compressed documents. Multi-document
// examples carry the answer-bearing document at gold_slot among distractor
// memories and use the joint-stage row layout (memory first).
struct PretrainExample {
    std::vector<std::vector<int>> docs;
    int gold_slot = 0;
    bool memory_first = false;
    std::vector<int> instruction;
    std::vector<int> target;

    static PretrainExample single(std::vector<int> doc, std::vector<int> instruction,
                                  std::vector<int> target) {
        PretrainExample ex;
        ex.docs = {std::move(doc)};
        ex.instruction = std::move(instruction);
        ex.target = std::move(target);
        return ex;
    }
};

struct PretrainStats {
    double total = 0.0;
    double ce = 0.0;
    double align = 0.0;
};

// One compressor-pretraining step: CE + lambda * alignment, updating the
// compressor and generator together.
PretrainStats pretrain_step(model::ParamGroup& compressor, model::ParamGroup& generator,
                            const model::ModelConfig& cfg, const RunConfig& rc,
                            const std::vector<PretrainExample>& batch);

}  // namespace clara::train
