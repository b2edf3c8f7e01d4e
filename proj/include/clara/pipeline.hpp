#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "clara/datagen.hpp"
#include "clara/metrics.hpp"
#include "clara/trainer.hpp"
#include "clara/vocab.hpp"

namespace clara::pipe {

struct TokenQa {
    std::vector<int> question;
    std::vector<int> answer;
    int hops = 1;
};

struct TokenDoc {
    std::string id;
    std::vector<int> surface;
    std::vector<TokenQa> simple_qas;
    std::vector<TokenQa> complex_qas;
    std::vector<int> paraphrase;
};

// Corpus mapped onto a closed vocabulary; only coverage-passing documents
// are admitted.
struct TokenCorpus {
    model::Vocabulary vocab;
    std::vector<TokenDoc> docs;
    int rephrase_id = 0;

    static TokenCorpus build(const std::vector<datagen::SyntheticDocument>& corpus);
    const TokenDoc& doc(const std::string& id) const;

private:
    std::unordered_map<std::string, std::size_t> by_id_;
};

// One pretraining example per QA pair and per paraphrase across the corpus.
std::vector<train::PretrainExample> pretrain_examples(const TokenCorpus& corpus);

struct PretrainRun {
    model::ParamGroup compressor;
    model::ParamGroup generator;
    std::vector<train::PretrainStats> curve;
};

PretrainRun run_pretrain(const TokenCorpus& corpus, const RunConfig& rc);

// Mean |mean(doc hidden) - mean(memory hidden)|^2 across the corpus.
double mean_alignment_distance(const model::ParamGroup& compressor, const model::ModelConfig& cfg,
                               const TokenCorpus& corpus);

train::CompressedIndex build_index(const model::ParamGroup& compressor,
                                   const model::ModelConfig& cfg, const TokenCorpus& corpus);

std::vector<train::TrainingExample> tokenize_tasks(const TokenCorpus& corpus,
                                                   const std::vector<datagen::TaskSpec>& tasks);

// Deterministic split into train/held-out parts.
std::pair<std::vector<train::TrainingExample>, std::vector<train::TrainingExample>> split_tasks(
    const std::vector<train::TrainingExample>& tasks, double eval_fraction, std::uint64_t seed);

struct JointRun {
    model::ParamGroup qr;
    model::ParamGroup gen;
    std::vector<train::StepStats> curve;
};

JointRun run_joint(const train::CompressedIndex& index,
                   const std::vector<train::TrainingExample>& tasks, model::ParamGroup qr_init,
                   model::ParamGroup gen_init, const model::ModelConfig& cfg, const RunConfig& rc,
                   bool freeze_qr = false);

// Supervised contrastive baseline over (gold, distractor) pools.
model::ParamGroup run_contrastive(const train::CompressedIndex& index,
                                  const std::vector<train::TrainingExample>& tasks,
                                  model::ParamGroup qr_init, const model::ModelConfig& cfg,
                                  const RunConfig& rc);

// Ranking plus generation metrics over tasks: rank with the query reasoner,
// condition the generator on the top-k memories, decode greedily.
metrics::EvalReport evaluate(const model::ParamGroup& qr, const model::ParamGroup& gen,
                             const train::CompressedIndex& index,
                             const std::vector<train::TrainingExample>& tasks,
                             const TokenCorpus& corpus, const model::ModelConfig& cfg,
                             const RunConfig& rc);

// Answer accuracy with the generator conditioned on the gold document's
// memory alone, the compressor-pretraining layout.
double compression_qa_accuracy(const model::ParamGroup& gen, const train::CompressedIndex& index,
                               const std::vector<train::TrainingExample>& tasks,
                               const TokenCorpus& corpus, const model::ModelConfig& cfg);

std::string curve_csv(const std::vector<train::StepStats>& curve);

}  // namespace clara::pipe
