#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "clara/error.hpp"

namespace clara::model {

// Closed symbol table over whitespace-free tokens. Ids are dense and the
// first three are reserved: padding, the memory-token placeholder, and the
// instruction separator (also used as the end-of-answer marker).
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kMem = 1;
    static constexpr int kSep = 2;

    Vocabulary() {
        add("<pad>");
        add("<mem>");
        add("<sep>");
    }

    int add(const std::string& tok) {
        auto it = by_token_.find(tok);
        if (it != by_token_.end()) return it->second;
        const int id = static_cast<int>(tokens_.size());
        tokens_.push_back(tok);
        by_token_.emplace(tok, id);
        return id;
    }

    bool contains(const std::string& tok) const { return by_token_.count(tok) > 0; }

    int id(const std::string& tok) const {
        auto it = by_token_.find(tok);
        if (it == by_token_.end()) throw IndexError("unknown token: " + tok);
        return it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
            throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
        }
        return tokens_[static_cast<std::size_t>(id)];
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    bool reserved(int id) const { return id >= 0 && id < 3; }

    std::vector<int> encode(const std::vector<std::string>& toks) const {
        std::vector<int> ids;
        ids.reserve(toks.size());
        for (const auto& t : toks) ids.push_back(id(t));
        return ids;
    }

    std::vector<std::string> decode(const std::vector<int>& ids) const {
        std::vector<std::string> toks;
        toks.reserve(ids.size());
        for (int i : ids) toks.push_back(token(i));
        return toks;
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> by_token_;
};

}  // namespace clara::model
