#pragma once

#include <cstdint>
#include <string>

#include "clara/datagen.hpp"
#include "clara/error.hpp"
#include "clara/transformer.hpp"
#include "json.hpp"

namespace clara {

// Every knob of a run. Defaults follow the reference protocol: candidate
// pools of 20, k = 5, l = 256 / rho memory tokens, lambda = 0.1, and a
// pretraining learning rate 10x the joint one.
struct RunConfig {
    int rho = 64;  // compression ratio; l = 256 / rho
    int k = 5;
    double tau = 1.0;
    double epsilon = 1e-10;
    double lambda = 0.1;
    double pretrain_lr = 0.5;
    double joint_lr = 0.05;
    int batch_size = 16;
    int pretrain_steps = 400;
    int joint_steps = 500;
    int contrastive_steps = 120;
    int pool_size = 20;  // D
    std::uint64_t seed = 1;
    std::string mode = "oracle";  // or "normal"
    double gold_exclude_fraction = 0.0;
    // fraction of QA pretraining examples rendered with k-slot noisy contexts
    double noisy_context_fraction = 0.5;

    // toy model dimensions
    int hidden = 32;
    int heads = 4;
    int ffn = 64;
    int blocks = 2;
    int max_pos = 384;

    // corpus synthesis
    int n_docs = 100;
    int facts_per_doc = 3;
    double three_hop_fraction = 0.25;

    int l() const { return 256 / rho; }

    void validate() const {
        if (rho <= 0 || 256 % rho != 0) {
            throw UsageError("config: rho must divide 256, got " + std::to_string(rho));
        }
        if (k < 1 || k > pool_size) {
            throw UsageError("config: k=" + std::to_string(k) + " must lie in [1, pool D=" +
                             std::to_string(pool_size) + "]");
        }
        if (tau <= 0.0) throw UsageError("config: tau must be positive");
        if (epsilon <= 0.0) throw UsageError("config: epsilon must be positive");
        if (lambda < 0.0) throw UsageError("config: lambda must be nonnegative");
        if (batch_size < 1) throw UsageError("config: batch_size must be positive");
        if (mode != "oracle" && mode != "normal") {
            throw UsageError("config: mode must be 'oracle' or 'normal', got " + mode);
        }
        if (gold_exclude_fraction < 0.0 || gold_exclude_fraction > 1.0) {
            throw UsageError("config: gold_exclude_fraction must lie in [0,1]");
        }
    }

    model::ModelConfig model_config(int vocab_size) const {
        model::ModelConfig cfg;
        cfg.vocab_size = vocab_size;
        cfg.hidden = hidden;
        cfg.heads = heads;
        cfg.ffn = ffn;
        cfg.blocks = blocks;
        cfg.max_pos = max_pos;
        cfg.n_mem = l();
        return cfg;
    }

    datagen::CorpusSpec corpus_spec() const {
        datagen::CorpusSpec spec;
        spec.n_docs = n_docs;
        spec.facts_per_doc = facts_per_doc;
        spec.three_hop_fraction = three_hop_fraction;
        spec.seed = seed;
        return spec;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"rho", rho},
                              {"k", k},
                              {"tau", tau},
                              {"epsilon", epsilon},
                              {"lambda", lambda},
                              {"pretrain_lr", pretrain_lr},
                              {"joint_lr", joint_lr},
                              {"batch_size", batch_size},
                              {"pretrain_steps", pretrain_steps},
                              {"joint_steps", joint_steps},
                              {"contrastive_steps", contrastive_steps},
                              {"pool_size", pool_size},
                              {"seed", seed},
                              {"mode", mode},
                              {"gold_exclude_fraction", gold_exclude_fraction},
                              {"noisy_context_fraction", noisy_context_fraction},
                              {"hidden", hidden},
                              {"heads", heads},
                              {"ffn", ffn},
                              {"blocks", blocks},
                              {"max_pos", max_pos},
                              {"n_docs", n_docs},
                              {"facts_per_doc", facts_per_doc},
                              {"three_hop_fraction", three_hop_fraction}};
    }

    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig c;
        c.rho = j.value("rho", c.rho);
        c.k = j.value("k", c.k);
        c.tau = j.value("tau", c.tau);
        c.epsilon = j.value("epsilon", c.epsilon);
        c.lambda = j.value("lambda", c.lambda);
        c.pretrain_lr = j.value("pretrain_lr", c.pretrain_lr);
        c.joint_lr = j.value("joint_lr", c.joint_lr);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.pretrain_steps = j.value("pretrain_steps", c.pretrain_steps);
        c.joint_steps = j.value("joint_steps", c.joint_steps);
        c.contrastive_steps = j.value("contrastive_steps", c.contrastive_steps);
        c.pool_size = j.value("pool_size", c.pool_size);
        c.seed = j.value("seed", c.seed);
        c.mode = j.value("mode", c.mode);
        c.gold_exclude_fraction = j.value("gold_exclude_fraction", c.gold_exclude_fraction);
        c.noisy_context_fraction = j.value("noisy_context_fraction", c.noisy_context_fraction);
        c.hidden = j.value("hidden", c.hidden);
        c.heads = j.value("heads", c.heads);
        c.ffn = j.value("ffn", c.ffn);
        c.blocks = j.value("blocks", c.blocks);
        c.max_pos = j.value("max_pos", c.max_pos);
        c.n_docs = j.value("n_docs", c.n_docs);
        c.facts_per_doc = j.value("facts_per_doc", c.facts_per_doc);
        c.three_hop_fraction = j.value("three_hop_fraction", c.three_hop_fraction);
        return c;
    }
};

}  // namespace clara
