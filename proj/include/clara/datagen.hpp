#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace clara::datagen {

// Atomic (subject, relation, object) statement drawn from closed symbol tables.
struct Fact {
    std::string subject;
    std::string relation;
    std::string object;

    bool operator==(const Fact& other) const {
        return subject == other.subject && relation == other.relation && object == other.object;
    }
};

struct QaPair {
    std::vector<std::string> question;
    std::vector<std::string> answer;
    int hops = 1;
};

struct SyntheticDocument {
    std::string doc_id;
    std::vector<Fact> facts;
    std::vector<std::string> surface;     // token sequence realizing every fact
    std::vector<QaPair> simple_qas;       // one fact each
    std::vector<QaPair> complex_qas;      // >= 2 chained facts
    std::vector<std::string> paraphrase;  // same facts, different surface
    bool coverage_ok = false;
    int regen_rounds = 0;
};

struct CorpusSpec {
    int n_docs = 100;
    int facts_per_doc = 3;
    double three_hop_fraction = 0.25;  // remainder of complex chains are 2-hop
    std::uint64_t seed = 1;

    void validate() const;
};

// Deterministic generation: the pair (spec, doc_index) fixes every byte.
SyntheticDocument generate_document(const CorpusSpec& spec, int doc_index);

// ok iff every fact's object appears in at least one QA answer.
std::pair<bool, std::vector<Fact>> verify_coverage(const SyntheticDocument& doc);

// Adds QAs for uncovered facts round by round; a document still failing
// after max_rounds is marked excluded (coverage_ok = false).
SyntheticDocument regenerate(SyntheticDocument doc, int max_rounds = 10);

// generate + verify + regenerate for the whole corpus; excluded documents
// keep coverage_ok == false and are skipped by build_tasks.
std::vector<SyntheticDocument> generate_corpus(const CorpusSpec& spec);

// Resolve a question against a fact set by walking its relation chain.
// Returns nothing when any hop is missing, e.g. for single-fact subsets of a
// multi-hop question.
std::optional<std::string> resolve_question(const std::vector<std::string>& question,
                                            const std::vector<Fact>& facts);

// Parse "subject verb object ." sentences back into facts; synonym verbs map
// onto the same relation, so the paraphrase round-trips exactly.
std::vector<Fact> extract_facts(const std::vector<std::string>& tokens);

enum class TaskMode { kNormal, kOracle };

// One retrieval-generation training task at the symbol level.
struct TaskSpec {
    std::vector<std::string> query;
    std::vector<std::string> answer;
    std::string gold;
    std::vector<std::string> candidates;  // pool of doc ids, |candidates| = D
};

// Builds a task per QA pair with seeded distractor pools of size pool_size.
// Oracle mode always injects the gold document; normal mode drops it on a
// seeded gold_exclude_fraction of tasks.
std::vector<TaskSpec> build_tasks(const std::vector<SyntheticDocument>& corpus, TaskMode mode,
                                  int pool_size, std::uint64_t seed,
                                  double gold_exclude_fraction = 0.0);

}  // namespace clara::datagen
