#include "clara/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "clara/error.hpp"

namespace clara::metrics {

namespace {

bool is_reserved(const std::string& tok) {
    return tok == "<pad>" || tok == "<mem>" || tok == "<sep>";
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::vector<std::string> normalize(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        if (is_reserved(t)) continue;
        std::string low = t;
        std::transform(low.begin(), low.end(), low.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out.push_back(std::move(low));
    }
    return out;
}

double recall_at_k(const std::vector<std::string>& ranked, const std::vector<std::string>& gold,
                   int k) {
    if (k < 1) throw UsageError("recall_at_k: k must be at least 1");
    std::unordered_set<std::string> gold_set(gold.begin(), gold.end());
    if (gold_set.empty()) throw UsageError("recall_at_k: empty gold set leaves recall undefined");
    const std::size_t cut = std::min(ranked.size(), static_cast<std::size_t>(k));
    std::size_t hit = 0;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < cut; ++i) {
        if (gold_set.count(ranked[i]) && seen.insert(ranked[i]).second) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(gold_set.size());
}

int exact_match(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    return normalize(pred) == normalize(gold) ? 1 : 0;
}

double f1_overlap(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    const auto p = normalize(pred);
    const auto g = normalize(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::unordered_map<std::string, int> counts;
    for (const auto& t : g) ++counts[t];
    int common = 0;
    for (const auto& t : p) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(p.size());
    const double recall = static_cast<double>(common) / static_cast<double>(g.size());
    return 2.0 * precision * recall / (precision + recall);
}

int cover_em(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    const auto p = normalize(pred);
    const auto g = normalize(gold);
    if (g.empty()) return 1;
    if (p.size() < g.size()) return 0;
    for (std::size_t start = 0; start + g.size() <= p.size(); ++start) {
        if (std::equal(g.begin(), g.end(), p.begin() + static_cast<std::ptrdiff_t>(start))) {
            return 1;
        }
    }
    return 0;
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "n,recall@1,recall@3,recall@5,em,f1,acc_cover\n";
    auto r = [&](int k) { return recall_at.count(k) ? recall_at.at(k) : 0.0; };
    os << n << "," << fmt(r(1)) << "," << fmt(r(3)) << "," << fmt(r(5)) << "," << fmt(em) << ","
       << fmt(f1) << "," << fmt(acc_cover) << "\n";
    return os.str();
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    auto r = [&](int k) { return recall_at.count(k) ? recall_at.at(k) : 0.0; };
    os << "metric        value\n";
    os << "examples      " << n << "\n";
    os << "recall@1      " << fmt(r(1)) << "\n";
    os << "recall@3      " << fmt(r(3)) << "\n";
    os << "recall@5      " << fmt(r(5)) << "\n";
    os << "em            " << fmt(em) << "\n";
    os << "f1            " << fmt(f1) << "\n";
    os << "acc_cover     " << fmt(acc_cover) << "\n";
    return os.str();
}

}  // namespace clara::metrics
