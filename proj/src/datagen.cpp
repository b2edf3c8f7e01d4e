#include "clara/datagen.hpp"

#include <algorithm>
#include <cstdio>
#include <tuple>
#include <unordered_set>

#include "clara/error.hpp"
#include "clara/rng.hpp"

namespace clara::datagen {

namespace {

struct RelationInfo {
    const char* name;
    const char* verb;
    const char* synonym;  // fixed bijection per relation
    const char* qword;
};

// Closed template tables. Verbs and synonyms are distinct across rows so
// fact extraction is unambiguous.
const std::vector<RelationInfo>& relations() {
    static const std::vector<RelationInfo> table = {
        {"lives_in", "lives_in", "resides_in", "where_lives"},
        {"works_as", "works_as", "serves_as", "which_work"},
        {"owns", "owns", "keeps", "which_pet"},
        {"famous_for", "famous_for", "known_for", "which_fame"},
        {"leads", "leads", "heads", "which_group"},
        {"studies", "studies", "explores", "which_field"},
    };
    return table;
}

const std::vector<std::string>& person_stems() {
    static const std::vector<std::string> v = {"aldo", "brina", "cael", "dova", "elio",
                                               "fifer", "galen", "hollis", "imra", "jorun"};
    return v;
}

const std::vector<std::string>& object_stems() {
    static const std::vector<std::string> v = {"acre", "boltfield", "cragmoor", "dunewick",
                                               "eyotport", "fennhall", "glenfort", "holtmere",
                                               "islebay", "jarnwick", "knapford", "lochside"};
    return v;
}

const RelationInfo* relation_by_name(const std::string& name) {
    for (const auto& r : relations()) {
        if (name == r.name) return &r;
    }
    return nullptr;
}

const RelationInfo* relation_by_verb(const std::string& verb) {
    for (const auto& r : relations()) {
        if (verb == r.verb || verb == r.synonym) return &r;
    }
    return nullptr;
}

const RelationInfo* relation_by_qword(const std::string& qword) {
    for (const auto& r : relations()) {
        if (qword == r.qword) return &r;
    }
    return nullptr;
}

void append_sentence(std::vector<std::string>& out, const Fact& f, bool synonym) {
    const RelationInfo* rel = relation_by_name(f.relation);
    out.push_back(f.subject);
    out.push_back(rel ? (synonym ? rel->synonym : rel->verb) : f.relation);
    out.push_back(f.object);
    out.push_back(".");
}

// Questions refer to entities through an "about_" alias so no query token
// ever appears in a document surface; retrieval has no lexical shortcut.
std::string query_alias(const std::string& entity) { return "about_" + entity; }

std::string strip_alias(const std::string& anchor) {
    const std::string prefix = "about_";
    if (anchor.rfind(prefix, 0) == 0) return anchor.substr(prefix.size());
    return anchor;
}

QaPair simple_qa_for(const Fact& f) {
    const RelationInfo* rel = relation_by_name(f.relation);
    if (!rel) throw UsageError("no question template for relation " + f.relation);
    QaPair qa;
    qa.question = {rel->qword, query_alias(f.subject)};
    qa.answer = {f.object};
    qa.hops = 1;
    return qa;
}

}  // namespace

void CorpusSpec::validate() const {
    if (n_docs <= 0) throw UsageError("corpus spec: n_docs must be positive");
    const int min_facts = three_hop_fraction > 0.0 ? 3 : 2;
    if (facts_per_doc < min_facts) {
        throw UsageError("corpus spec: facts_per_doc must be at least " + std::to_string(min_facts));
    }
    if (facts_per_doc > static_cast<int>(relations().size())) {
        throw UsageError("corpus spec: template exhaustion, at most " +
                         std::to_string(relations().size()) + " facts per document");
    }
    if (three_hop_fraction < 0.0 || three_hop_fraction > 1.0) {
        throw UsageError("corpus spec: three_hop_fraction must lie in [0,1]");
    }
}

SyntheticDocument generate_document(const CorpusSpec& spec, int doc_index) {
    spec.validate();
    Rng rng = Rng(spec.seed).fork(static_cast<std::uint64_t>(doc_index));

    SyntheticDocument doc;
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "doc_%04d", doc_index);
    doc.doc_id = id_buf;

    const auto& stems = person_stems();
    const std::string person =
        stems[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(stems.size())))] +
        std::to_string(doc_index);

    const int hops = rng.uniform() < spec.three_hop_fraction ? 3 : 2;

    std::vector<int> rel_order(relations().size());
    for (std::size_t i = 0; i < rel_order.size(); ++i) rel_order[i] = static_cast<int>(i);
    rng.shuffle(rel_order);

    auto object_symbol = [&](int slot) {
        const auto& os = object_stems();
        const auto stem =
            os[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(os.size())))];
        return stem + std::to_string(doc_index) + static_cast<char>('a' + slot);
    };

    // Chain facts first: person -> o1 -> o2 (-> o3), then standalone facts
    // about the same person.
    std::string cur = person;
    for (int i = 0; i < spec.facts_per_doc; ++i) {
        Fact f;
        f.relation = relations()[static_cast<std::size_t>(rel_order[static_cast<std::size_t>(i)])].name;
        f.object = object_symbol(i);
        if (i < hops) {
            f.subject = cur;
            cur = f.object;
        } else {
            f.subject = person;
        }
        doc.facts.push_back(std::move(f));
    }

    // Surface realization in a seeded order; paraphrase reverses it and
    // swaps every verb for its synonym.
    std::vector<int> sentence_order(doc.facts.size());
    for (std::size_t i = 0; i < sentence_order.size(); ++i) sentence_order[i] = static_cast<int>(i);
    rng.shuffle(sentence_order);
    for (int i : sentence_order) {
        append_sentence(doc.surface, doc.facts[static_cast<std::size_t>(i)], false);
    }
    for (auto it = sentence_order.rbegin(); it != sentence_order.rend(); ++it) {
        append_sentence(doc.paraphrase, doc.facts[static_cast<std::size_t>(*it)], true);
    }

    for (const auto& f : doc.facts) doc.simple_qas.push_back(simple_qa_for(f));

    QaPair chain;
    chain.hops = hops;
    for (int i = hops - 1; i >= 0; --i) {
        chain.question.push_back(
            relation_by_name(doc.facts[static_cast<std::size_t>(i)].relation)->qword);
    }
    chain.question.push_back(query_alias(person));
    chain.answer = {doc.facts[static_cast<std::size_t>(hops - 1)].object};
    doc.complex_qas.push_back(std::move(chain));

    doc.coverage_ok = verify_coverage(doc).first;
    doc.regen_rounds = 0;
    return doc;
}

std::pair<bool, std::vector<Fact>> verify_coverage(const SyntheticDocument& doc) {
    std::unordered_set<std::string> answered;
    for (const auto& qa : doc.simple_qas) {
        for (const auto& a : qa.answer) answered.insert(a);
    }
    for (const auto& qa : doc.complex_qas) {
        for (const auto& a : qa.answer) answered.insert(a);
    }
    std::vector<Fact> missing;
    for (const auto& f : doc.facts) {
        if (!answered.count(f.object)) missing.push_back(f);
    }
    return {missing.empty(), missing};
}

SyntheticDocument regenerate(SyntheticDocument doc, int max_rounds) {
    if (max_rounds < 1) throw UsageError("regenerate: max_rounds must be at least 1");
    auto [ok, missing] = verify_coverage(doc);
    if (ok) {
        doc.coverage_ok = true;
        doc.regen_rounds = 0;
        return doc;
    }
    for (int round = 0; round < max_rounds && !ok; ++round) {
        doc.regen_rounds = round + 1;
        for (const auto& f : missing) {
            if (relation_by_name(f.relation) == nullptr) continue;  // no template available
            doc.simple_qas.push_back(simple_qa_for(f));
        }
        std::tie(ok, missing) = verify_coverage(doc);
    }
    doc.coverage_ok = ok;
    return doc;
}

std::vector<SyntheticDocument> generate_corpus(const CorpusSpec& spec) {
    spec.validate();
    std::vector<SyntheticDocument> corpus;
    corpus.reserve(static_cast<std::size_t>(spec.n_docs));
    for (int i = 0; i < spec.n_docs; ++i) {
        corpus.push_back(regenerate(generate_document(spec, i)));
    }
    return corpus;
}

std::optional<std::string> resolve_question(const std::vector<std::string>& question,
                                            const std::vector<Fact>& facts) {
    if (question.size() < 2) return std::nullopt;
    std::string cur = strip_alias(question.back());
    // Question words run outermost-first; apply them nearest-to-subject first.
    for (auto it = question.rbegin() + 1; it != question.rend(); ++it) {
        const RelationInfo* rel = relation_by_qword(*it);
        if (!rel) return std::nullopt;
        bool found = false;
        for (const auto& f : facts) {
            if (f.subject == cur && f.relation == rel->name) {
                cur = f.object;
                found = true;
                break;
            }
        }
        if (!found) return std::nullopt;
    }
    return cur;
}

std::vector<Fact> extract_facts(const std::vector<std::string>& tokens) {
    std::vector<Fact> out;
    std::vector<std::string> sentence;
    for (const auto& tok : tokens) {
        if (tok != ".") {
            sentence.push_back(tok);
            continue;
        }
        if (sentence.size() != 3) {
            throw DataError("extract_facts: malformed sentence of " +
                            std::to_string(sentence.size()) + " tokens");
        }
        const RelationInfo* rel = relation_by_verb(sentence[1]);
        if (!rel) throw DataError("extract_facts: unknown verb " + sentence[1]);
        out.push_back(Fact{sentence[0], rel->name, sentence[2]});
        sentence.clear();
    }
    if (!sentence.empty()) throw DataError("extract_facts: trailing tokens without sentence end");
    return out;
}

std::vector<TaskSpec> build_tasks(const std::vector<SyntheticDocument>& corpus, TaskMode mode,
                                  int pool_size, std::uint64_t seed,
                                  double gold_exclude_fraction) {
    if (corpus.empty()) throw UsageError("build_tasks: empty corpus");
    if (pool_size < 1) throw UsageError("build_tasks: pool size must be positive");

    std::vector<const SyntheticDocument*> included;
    for (const auto& d : corpus) {
        if (d.coverage_ok) included.push_back(&d);
    }
    if (static_cast<int>(included.size()) < pool_size) {
        throw UsageError("build_tasks: " + std::to_string(included.size()) +
                         " included documents cannot fill pools of size " +
                         std::to_string(pool_size));
    }

    Rng base(seed);
    std::vector<TaskSpec> tasks;
    std::uint64_t task_index = 0;
    for (const auto* doc : included) {
        std::vector<const QaPair*> qas;
        for (const auto& qa : doc->simple_qas) qas.push_back(&qa);
        for (const auto& qa : doc->complex_qas) qas.push_back(&qa);
        for (const auto* qa : qas) {
            Rng rng = base.fork(task_index++);
            TaskSpec task;
            task.query = qa->question;
            task.answer = qa->answer;
            task.gold = doc->doc_id;

            std::vector<std::string> others;
            for (const auto* other : included) {
                if (other != doc) others.push_back(other->doc_id);
            }
            rng.shuffle(others);
            const bool drop_gold = mode == TaskMode::kNormal &&
                                   rng.uniform() < gold_exclude_fraction &&
                                   static_cast<int>(others.size()) >= pool_size;
            const int n_distractors = drop_gold ? pool_size : pool_size - 1;
            task.candidates.assign(others.begin(), others.begin() + n_distractors);
            if (!drop_gold) task.candidates.push_back(doc->doc_id);
            rng.shuffle(task.candidates);
            tasks.push_back(std::move(task));
        }
    }
    return tasks;
}

}  // namespace clara::datagen
