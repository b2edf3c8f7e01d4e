#pragma once

#include <map>
#include <string>
#include <vector>

namespace clara::metrics {

// Lowercase and strip reserved tokens; the closed vocabulary needs nothing else.
std::vector<std::string> normalize(const std::vector<std::string>& tokens);

// |gold in top-k| / |gold|. Throws on an empty gold set.
double recall_at_k(const std::vector<std::string>& ranked, const std::vector<std::string>& gold,
                   int k);

// 1 iff the normalized sequences are identical.
int exact_match(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

// Token-level harmonic precision/recall with multiset counting.
double f1_overlap(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

// 1 iff gold appears as a contiguous subsequence of pred (normalized).
int cover_em(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

struct EvalReport {
    std::map<int, double> recall_at;  // k in {1, 3, 5}
    double em = 0.0;
    double f1 = 0.0;
    double acc_cover = 0.0;
    int n = 0;

    std::string to_csv() const;
    std::string to_table() const;
};

}  // namespace clara::metrics
