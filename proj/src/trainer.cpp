#include "clara/trainer.hpp"

#include <algorithm>
#include <unordered_set>

#include "clara/metrics.hpp"

namespace clara::train {

void CompressedIndex::add(const std::string& doc_id, std::vector<double> flat) {
    if (by_id_.count(doc_id)) throw UsageError("index: duplicate doc id " + doc_id);
    if (l > 0 && h > 0 && flat.size() != static_cast<std::size_t>(l) * static_cast<std::size_t>(h)) {
        throw ShapeError("index: vector for " + doc_id + " has " + std::to_string(flat.size()) +
                         " values, expected l*h = " + std::to_string(l * h));
    }
    by_id_.emplace(doc_id, ids_.size());
    ids_.push_back(doc_id);
    vecs_.push_back(std::move(flat));
}

const std::vector<double>& CompressedIndex::at(const std::string& doc_id) const {
    auto it = by_id_.find(doc_id);
    if (it == by_id_.end()) throw IndexError("index: unknown doc id " + doc_id);
    return vecs_[it->second];
}

std::uint64_t CompressedIndex::fingerprint() const {
    std::uint64_t hash = 1469598103934665603ull;
    auto mix = [&](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            hash ^= bytes[i];
            hash *= 1099511628211ull;
        }
    };
    mix(&l, sizeof l);
    mix(&h, sizeof h);
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        mix(ids_[i].data(), ids_[i].size());
        mix(vecs_[i].data(), vecs_[i].size() * sizeof(double));
    }
    return hash;
}

model::MemoryEmbedding encode_query(const model::TransformerWeights& qr_w,
                                    const model::ModelConfig& cfg, const std::vector<int>& query) {
    if (query.empty()) throw ShapeError("encode_query: empty query");
    return model::compress(qr_w, cfg, query, "query");
}

ad::Tensor score_candidates(const ad::Tensor& q_flat, const CompressedIndex& index,
                            const std::vector<std::string>& candidates) {
    if (candidates.empty()) throw ShapeError("score_candidates: empty candidate list");
    std::vector<ad::Tensor> scores;
    scores.reserve(candidates.size());
    for (const auto& id : candidates) {
        const auto& vec = index.at(id);
        scores.push_back(ad::cosine(
            q_flat, ad::Tensor::constant({static_cast<std::int64_t>(vec.size())}, vec)));
    }
    return ad::reshape(ad::concat0(scores), {1, static_cast<std::int64_t>(candidates.size())});
}

std::vector<std::string> rank_documents(const std::vector<double>& q_flat,
                                        const CompressedIndex& index,
                                        const std::vector<std::string>& candidates) {
    ad::Tensor q = ad::Tensor::constant({static_cast<std::int64_t>(q_flat.size())}, q_flat);
    std::vector<std::pair<double, std::string>> scored;
    scored.reserve(candidates.size());
    for (const auto& id : candidates) {
        const auto& vec = index.at(id);
        const double s =
            ad::cosine(q, ad::Tensor::constant({static_cast<std::int64_t>(vec.size())}, vec)).item();
        scored.emplace_back(s, id);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    out.reserve(scored.size());
    for (const auto& [s, id] : scored) out.push_back(id);
    return out;
}

JointForward joint_forward(const model::TransformerWeights& qr_w,
                           const model::TransformerWeights& gen_w, const model::ModelConfig& cfg,
                           const RunConfig& rc, const CompressedIndex& index,
                           const TrainingExample& ex, const topk::SelectionReplay* replay,
                           topk::SelectionReplay* capture) {
    const int d_pool = static_cast<int>(ex.candidates.size());
    if (rc.k > d_pool) {
        throw CapacityError("joint_forward: k=" + std::to_string(rc.k) + " exceeds pool of " +
                            std::to_string(d_pool));
    }

    model::MemoryEmbedding q = encode_query(qr_w, cfg, ex.query);
    ad::Tensor scores = score_candidates(q.flat(), index, ex.candidates);

    topk::SelectionTensor sel = topk::st_topk(scores, rc.k, rc.tau, rc.epsilon, replay, capture);

    const int width = index.l * index.h;
    std::vector<double> pool;
    pool.reserve(static_cast<std::size_t>(d_pool * width));
    for (const auto& id : ex.candidates) {
        const auto& vec = index.at(id);
        pool.insert(pool.end(), vec.begin(), vec.end());
    }
    ad::Tensor embeddings = ad::Tensor::constant({1, d_pool, width}, std::move(pool));
    ad::Tensor agg = topk::aggregate(sel, embeddings);  // {1, k, l*h}
    ad::Tensor memory_rows = ad::reshape(agg, {static_cast<std::int64_t>(rc.k) * index.l, index.h});

    JointForward out;
    out.loss = model::decode_loss(gen_w, cfg, {memory_rows}, ex.query, ex.answer,
                                  /*memory_first=*/true);
    for (int j : sel.indices[0]) out.selected.push_back(ex.candidates[static_cast<std::size_t>(j)]);
    out.scores = std::vector<double>(scores.value());
    return out;
}

namespace {

StepStats ranking_stats(const std::vector<std::string>& ranked,
                        const std::vector<std::string>& selected,
                        const std::vector<std::string>& gold, int k) {
    StepStats s;
    if (gold.empty()) return s;
    std::unordered_set<std::string> gold_set(gold.begin(), gold.end());
    std::size_t hit = 0;
    for (int j = 0; j < k && j < static_cast<int>(selected.size()); ++j) {
        if (gold_set.count(selected[static_cast<std::size_t>(j)])) ++hit;
    }
    s.recall_at_k = static_cast<double>(hit) / static_cast<double>(gold_set.size());
    s.recall1 = metrics::recall_at_k(ranked, gold, 1);
    s.recall3 = metrics::recall_at_k(ranked, gold, 3);
    s.recall5 = metrics::recall_at_k(ranked, gold, 5);
    return s;
}

}  // namespace

JointTrainer::JointTrainer(model::ModelConfig cfg, RunConfig rc, model::ParamGroup qr,
                           model::ParamGroup gen, const CompressedIndex* index)
    : cfg_(cfg), rc_(rc), qr_(std::move(qr)), gen_(std::move(gen)), index_(index) {
    rc_.validate();
    if (!index_ || index_->size() == 0) throw UsageError("joint trainer: empty index");
}

StepStats JointTrainer::step(const std::vector<TrainingExample>& batch, bool update_qr,
                             bool update_gen) {
    if (batch.empty()) throw UsageError("joint step: empty batch");
    ad::Tape tape;
    model::BoundGroup qr_b = model::bind(&tape, qr_, cfg_);
    model::BoundGroup gen_b = model::bind(&tape, gen_, cfg_);

    StepStats agg;
    ad::Tensor total;
    for (const auto& ex : batch) {
        JointForward fwd = joint_forward(qr_b.w, gen_b.w, cfg_, rc_, *index_, ex);
        total = total.defined() ? ad::add(total, fwd.loss) : fwd.loss;

        std::vector<std::pair<double, std::string>> scored;
        for (std::size_t i = 0; i < ex.candidates.size(); ++i) {
            scored.emplace_back(fwd.scores[i], ex.candidates[i]);
        }
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::vector<std::string> ranked;
        for (const auto& [s, id] : scored) ranked.push_back(id);
        StepStats one = ranking_stats(ranked, fwd.selected, ex.gold, rc_.k);
        agg.recall_at_k += one.recall_at_k;
        agg.recall1 += one.recall1;
        agg.recall3 += one.recall3;
        agg.recall5 += one.recall5;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    ad::Tensor loss = ad::scale(total, inv);
    tape.backward(loss);
    if (update_qr) model::apply_sgd(qr_, qr_b, rc_.joint_lr);
    if (update_gen) model::apply_sgd(gen_, gen_b, rc_.joint_lr);

    agg.loss = loss.item();
    agg.recall_at_k *= inv;
    agg.recall1 *= inv;
    agg.recall3 *= inv;
    agg.recall5 *= inv;
    return agg;
}

StepStats JointTrainer::evaluate_ranking(const std::vector<TrainingExample>& tasks) const {
    if (tasks.empty()) throw UsageError("evaluate_ranking: no tasks");
    model::BoundGroup qr_b = model::bind(nullptr, qr_, cfg_);
    StepStats agg;
    for (const auto& ex : tasks) {
        model::MemoryEmbedding q = encode_query(qr_b.w, cfg_, ex.query);
        auto ranked = rank_documents(q.flat().value(), *index_, ex.candidates);
        std::vector<std::string> topk_ids(ranked.begin(),
                                          ranked.begin() + std::min<std::size_t>(ranked.size(),
                                                                                 static_cast<std::size_t>(rc_.k)));
        StepStats one = ranking_stats(ranked, topk_ids, ex.gold, rc_.k);
        agg.recall_at_k += one.recall_at_k;
        agg.recall1 += one.recall1;
        agg.recall3 += one.recall3;
        agg.recall5 += one.recall5;
    }
    const double inv = 1.0 / static_cast<double>(tasks.size());
    agg.recall_at_k *= inv;
    agg.recall1 *= inv;
    agg.recall3 *= inv;
    agg.recall5 *= inv;
    return agg;
}

double contrastive_step(model::ParamGroup& qr, const model::ModelConfig& cfg, const RunConfig& rc,
                        const CompressedIndex& index, const std::vector<ContrastivePair>& batch) {
    if (batch.empty()) throw UsageError("contrastive step: empty batch");
    for (const auto& pair : batch) {
        if (pair.negatives.empty()) throw ShapeError("contrastive: empty negative set");
        for (const auto& n : pair.negatives) {
            if (n == pair.positive) {
                throw UsageError("contrastive: positive " + pair.positive +
                                 " repeated among negatives");
            }
        }
    }
    ad::Tape tape;
    model::BoundGroup qr_b = model::bind(&tape, qr, cfg);
    ad::Tensor total;
    for (const auto& pair : batch) {
        model::MemoryEmbedding q = encode_query(qr_b.w, cfg, pair.query);
        std::vector<std::string> pool;
        pool.push_back(pair.positive);
        pool.insert(pool.end(), pair.negatives.begin(), pair.negatives.end());
        ad::Tensor scores = score_candidates(q.flat(), index, pool);
        ad::Tensor loss = ad::cross_entropy(ad::scale(scores, 1.0 / rc.tau), {0});
        total = total.defined() ? ad::add(total, loss) : loss;
    }
    ad::Tensor loss = ad::scale(total, 1.0 / static_cast<double>(batch.size()));
    tape.backward(loss);
    model::apply_sgd(qr, qr_b, rc.joint_lr);
    return loss.item();
}

PretrainStats pretrain_step(model::ParamGroup& compressor, model::ParamGroup& generator,
                            const model::ModelConfig& cfg, const RunConfig& rc,
                            const std::vector<PretrainExample>& batch) {
    if (batch.empty()) throw UsageError("pretrain step: empty batch");
    ad::Tape tape;
    model::BoundGroup comp_b = model::bind(&tape, compressor, cfg);
    model::BoundGroup gen_b = model::bind(&tape, generator, cfg);

    ad::Tensor ce_total, align_total;
    for (const auto& ex : batch) {
        if (ex.docs.empty()) throw ShapeError("pretrain: example without documents");
        std::vector<ad::Tensor> memory_rows;
        ad::Tensor align_sum;
        for (const auto& doc : ex.docs) {
            model::CompressResult cr = model::compress_full(comp_b.w, cfg, doc);
            memory_rows.push_back(cr.memory.vectors);
            ad::Tensor a = model::alignment_loss(cr.doc_hidden, cr.memory.vectors);
            align_sum = align_sum.defined() ? ad::add(align_sum, a) : a;
        }
        ad::Tensor ce = model::decode_loss(gen_b.w, cfg, memory_rows, ex.instruction, ex.target,
                                           ex.memory_first);
        ad::Tensor align = ad::scale(align_sum, 1.0 / static_cast<double>(ex.docs.size()));
        ce_total = ce_total.defined() ? ad::add(ce_total, ce) : ce;
        align_total = align_total.defined() ? ad::add(align_total, align) : align;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    ad::Tensor ce_mean = ad::scale(ce_total, inv);
    ad::Tensor align_mean = ad::scale(align_total, inv);
    ad::Tensor total = model::total_pretrain_loss(ce_mean, align_mean, rc.lambda);
    tape.backward(total);
    model::apply_sgd(compressor, comp_b, rc.pretrain_lr);
    model::apply_sgd(generator, gen_b, rc.pretrain_lr);

    PretrainStats out;
    out.total = total.item();
    out.ce = ce_mean.item();
    out.align = align_mean.item();
    return out;
}

}  // namespace clara::train
