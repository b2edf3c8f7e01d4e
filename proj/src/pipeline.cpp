#include "clara/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace clara::pipe {

TokenCorpus TokenCorpus::build(const std::vector<datagen::SyntheticDocument>& corpus) {
    TokenCorpus out;
    out.rephrase_id = out.vocab.add("rephrase");
    for (const auto& doc : corpus) {
        if (!doc.coverage_ok) continue;
        TokenDoc td;
        td.id = doc.doc_id;
        for (const auto& t : doc.surface) td.surface.push_back(out.vocab.add(t));
        for (const auto& t : doc.paraphrase) td.paraphrase.push_back(out.vocab.add(t));
        auto add_qas = [&](const std::vector<datagen::QaPair>& qas, std::vector<TokenQa>& dst) {
            for (const auto& qa : qas) {
                TokenQa tq;
                tq.hops = qa.hops;
                for (const auto& t : qa.question) tq.question.push_back(out.vocab.add(t));
                for (const auto& t : qa.answer) tq.answer.push_back(out.vocab.add(t));
                dst.push_back(std::move(tq));
            }
        };
        add_qas(doc.simple_qas, td.simple_qas);
        add_qas(doc.complex_qas, td.complex_qas);
        out.by_id_.emplace(td.id, out.docs.size());
        out.docs.push_back(std::move(td));
    }
    if (out.docs.empty()) throw UsageError("token corpus: no coverage-passing documents");
    return out;
}

const TokenDoc& TokenCorpus::doc(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw IndexError("token corpus: unknown doc " + id);
    return docs[it->second];
}

namespace {

// Answers are decoded until <sep>, so targets carry it as the end marker.
std::vector<int> with_eos(std::vector<int> answer) {
    answer.push_back(model::Vocabulary::kSep);
    return answer;
}

}  // namespace

std::vector<train::PretrainExample> pretrain_examples(const TokenCorpus& corpus) {
    std::vector<train::PretrainExample> out;
    for (const auto& doc : corpus.docs) {
        for (const auto& qa : doc.simple_qas) {
            out.push_back(train::PretrainExample::single(doc.surface, qa.question,
                                                         with_eos(qa.answer)));
        }
        for (const auto& qa : doc.complex_qas) {
            out.push_back(train::PretrainExample::single(doc.surface, qa.question,
                                                         with_eos(qa.answer)));
        }
        out.push_back(train::PretrainExample::single(doc.surface, {corpus.rephrase_id},
                                                     with_eos(doc.paraphrase)));
    }
    return out;
}

PretrainRun run_pretrain(const TokenCorpus& corpus, const RunConfig& rc) {
    rc.validate();
    const model::ModelConfig cfg = rc.model_config(corpus.vocab.size());
    Rng init_rng(rc.seed);
    PretrainRun run{model::ParamGroup::init_transformer(cfg, init_rng),
                    model::ParamGroup::init_transformer(cfg, init_rng),
                    {}};

    const auto examples = pretrain_examples(corpus);
    const int slots = std::min<int>(rc.k, static_cast<int>(corpus.docs.size()));
    Rng sampler(rc.seed ^ 0x5eedull);
    for (int step = 0; step < rc.pretrain_steps; ++step) {
        std::vector<train::PretrainExample> batch;
        for (int b = 0; b < rc.batch_size; ++b) {
            train::PretrainExample ex = examples[static_cast<std::size_t>(
                sampler.uniform_int(static_cast<std::int64_t>(examples.size())))];
            const bool is_qa = ex.instruction != std::vector<int>{corpus.rephrase_id};
            if (is_qa && slots > 1 && sampler.uniform() < rc.noisy_context_fraction) {
                // k-slot rendering: gold among distractor memories, the
                // row layout the joint stage will use
                std::vector<int> gold_doc = ex.docs[0];
                ex.docs.clear();
                std::unordered_map<std::size_t, bool> used;
                while (static_cast<int>(ex.docs.size()) < slots - 1) {
                    const auto pick = static_cast<std::size_t>(
                        sampler.uniform_int(static_cast<std::int64_t>(corpus.docs.size())));
                    if (used.count(pick) || corpus.docs[pick].surface == gold_doc) continue;
                    used[pick] = true;
                    ex.docs.push_back(corpus.docs[pick].surface);
                }
                ex.gold_slot = static_cast<int>(sampler.uniform_int(slots));
                ex.docs.insert(ex.docs.begin() + ex.gold_slot, std::move(gold_doc));
                ex.memory_first = true;
            }
            batch.push_back(std::move(ex));
        }
        run.curve.push_back(train::pretrain_step(run.compressor, run.generator, cfg, rc, batch));
    }
    return run;
}

double mean_alignment_distance(const model::ParamGroup& compressor, const model::ModelConfig& cfg,
                               const TokenCorpus& corpus) {
    model::BoundGroup comp = model::bind(nullptr, compressor, cfg);
    double acc = 0.0;
    for (const auto& doc : corpus.docs) {
        model::CompressResult cr = model::compress_full(comp.w, cfg, doc.surface, doc.id);
        acc += model::alignment_loss(cr.doc_hidden, cr.memory.vectors).item();
    }
    return acc / static_cast<double>(corpus.docs.size());
}

train::CompressedIndex build_index(const model::ParamGroup& compressor,
                                   const model::ModelConfig& cfg, const TokenCorpus& corpus) {
    model::BoundGroup comp = model::bind(nullptr, compressor, cfg);
    train::CompressedIndex index;
    index.l = cfg.n_mem;
    index.h = cfg.hidden;
    for (const auto& doc : corpus.docs) {
        model::MemoryEmbedding m = model::compress(comp.w, cfg, doc.surface, doc.id);
        index.add(doc.id, m.flat().value());
    }
    return index;
}

std::vector<train::TrainingExample> tokenize_tasks(const TokenCorpus& corpus,
                                                   const std::vector<datagen::TaskSpec>& tasks) {
    std::vector<train::TrainingExample> out;
    out.reserve(tasks.size());
    for (const auto& t : tasks) {
        train::TrainingExample ex;
        ex.query = corpus.vocab.encode(t.query);
        ex.answer = with_eos(corpus.vocab.encode(t.answer));
        ex.gold = {t.gold};
        ex.candidates = t.candidates;
        out.push_back(std::move(ex));
    }
    return out;
}

std::pair<std::vector<train::TrainingExample>, std::vector<train::TrainingExample>> split_tasks(
    const std::vector<train::TrainingExample>& tasks, double eval_fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(tasks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed ^ 0x517ull);
    rng.shuffle(order);
    const std::size_t n_eval = static_cast<std::size_t>(eval_fraction * static_cast<double>(tasks.size()));
    std::pair<std::vector<train::TrainingExample>, std::vector<train::TrainingExample>> out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_eval ? out.second : out.first).push_back(tasks[order[i]]);
    }
    return out;
}

JointRun run_joint(const train::CompressedIndex& index,
                   const std::vector<train::TrainingExample>& tasks, model::ParamGroup qr_init,
                   model::ParamGroup gen_init, const model::ModelConfig& cfg, const RunConfig& rc,
                   bool freeze_qr) {
    rc.validate();
    if (tasks.empty()) throw UsageError("run_joint: no tasks");
    train::JointTrainer trainer(cfg, rc, std::move(qr_init), std::move(gen_init), &index);
    Rng sampler(rc.seed ^ 0x901e7ull);
    JointRun run;
    for (int step = 0; step < rc.joint_steps; ++step) {
        std::vector<train::TrainingExample> batch;
        for (int b = 0; b < rc.batch_size; ++b) {
            batch.push_back(tasks[static_cast<std::size_t>(
                sampler.uniform_int(static_cast<std::int64_t>(tasks.size())))]);
        }
        run.curve.push_back(trainer.step(batch, /*update_qr=*/!freeze_qr, /*update_gen=*/true));
    }
    run.qr = trainer.qr();
    run.gen = trainer.gen();
    return run;
}

model::ParamGroup run_contrastive(const train::CompressedIndex& index,
                                  const std::vector<train::TrainingExample>& tasks,
                                  model::ParamGroup qr_init, const model::ModelConfig& cfg,
                                  const RunConfig& rc) {
    rc.validate();
    if (tasks.empty()) throw UsageError("run_contrastive: no tasks");
    Rng sampler(rc.seed ^ 0xc0117ull);
    for (int step = 0; step < rc.contrastive_steps; ++step) {
        std::vector<train::ContrastivePair> batch;
        for (int b = 0; b < rc.batch_size; ++b) {
            const auto& ex = tasks[static_cast<std::size_t>(
                sampler.uniform_int(static_cast<std::int64_t>(tasks.size())))];
            if (ex.gold.empty()) continue;
            train::ContrastivePair pair;
            pair.query = ex.query;
            pair.positive = ex.gold[0];
            for (const auto& c : ex.candidates) {
                if (c != pair.positive) pair.negatives.push_back(c);
            }
            if (pair.negatives.empty() || !index.has(pair.positive)) continue;
            batch.push_back(std::move(pair));
        }
        if (batch.empty()) continue;
        train::contrastive_step(qr_init, cfg, rc, index, batch);
    }
    return qr_init;
}

metrics::EvalReport evaluate(const model::ParamGroup& qr, const model::ParamGroup& gen,
                             const train::CompressedIndex& index,
                             const std::vector<train::TrainingExample>& tasks,
                             const TokenCorpus& corpus, const model::ModelConfig& cfg,
                             const RunConfig& rc) {
    if (tasks.empty()) throw UsageError("evaluate: no tasks");
    model::BoundGroup qr_b = model::bind(nullptr, qr, cfg);
    model::BoundGroup gen_b = model::bind(nullptr, gen, cfg);

    metrics::EvalReport report;
    report.recall_at = {{1, 0.0}, {3, 0.0}, {5, 0.0}};
    int ranked_n = 0;
    for (const auto& ex : tasks) {
        model::MemoryEmbedding q = train::encode_query(qr_b.w, cfg, ex.query);
        auto ranked = train::rank_documents(q.flat().value(), index, ex.candidates);

        const bool gold_in_pool =
            !ex.gold.empty() &&
            std::find(ex.candidates.begin(), ex.candidates.end(), ex.gold[0]) != ex.candidates.end();
        if (gold_in_pool) {
            for (int k : {1, 3, 5}) {
                report.recall_at[k] += metrics::recall_at_k(ranked, ex.gold, k);
            }
            ++ranked_n;
        }

        std::vector<ad::Tensor> memory_rows;
        const int used = std::min<int>(rc.k, static_cast<int>(ranked.size()));
        for (int j = 0; j < used; ++j) {
            const auto& vec = index.at(ranked[static_cast<std::size_t>(j)]);
            memory_rows.push_back(
                ad::Tensor::constant({index.l, index.h}, vec));
        }
        auto pred = model::greedy_decode(gen_b.w, cfg, memory_rows, ex.query,
                                         static_cast<int>(ex.answer.size()) + 2,
                                         /*memory_first=*/true);
        auto pred_toks = corpus.vocab.decode(pred);
        auto gold_toks = corpus.vocab.decode(ex.answer);
        report.em += metrics::exact_match(pred_toks, gold_toks);
        report.f1 += metrics::f1_overlap(pred_toks, gold_toks);
        report.acc_cover += metrics::cover_em(pred_toks, gold_toks);
    }
    const double inv = 1.0 / static_cast<double>(tasks.size());
    report.n = static_cast<int>(tasks.size());
    report.em *= inv;
    report.f1 *= inv;
    report.acc_cover *= inv;
    if (ranked_n > 0) {
        for (auto& [k, v] : report.recall_at) v /= static_cast<double>(ranked_n);
    }
    return report;
}

double compression_qa_accuracy(const model::ParamGroup& gen, const train::CompressedIndex& index,
                               const std::vector<train::TrainingExample>& tasks,
                               const TokenCorpus& corpus, const model::ModelConfig& cfg) {
    if (tasks.empty()) throw UsageError("compression_qa_accuracy: no tasks");
    model::BoundGroup gen_b = model::bind(nullptr, gen, cfg);
    double acc = 0.0;
    for (const auto& ex : tasks) {
        const auto& vec = index.at(ex.gold.at(0));
        std::vector<ad::Tensor> memory_rows{ad::Tensor::constant({index.l, index.h}, vec)};
        auto pred = model::greedy_decode(gen_b.w, cfg, memory_rows, ex.query,
                                         static_cast<int>(ex.answer.size()) + 2,
                                         /*memory_first=*/false);
        acc += metrics::cover_em(corpus.vocab.decode(pred), corpus.vocab.decode(ex.answer));
    }
    return acc / static_cast<double>(tasks.size());
}

std::string curve_csv(const std::vector<train::StepStats>& curve) {
    std::ostringstream os;
    os << "step,loss,recall@1,recall@3,recall@5\n";
    char buf[160];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", i, curve[i].loss,
                      curve[i].recall1, curve[i].recall3, curve[i].recall5);
        os << buf;
    }
    return os.str();
}

}  // namespace clara::pipe
