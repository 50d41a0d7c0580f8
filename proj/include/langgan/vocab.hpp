// Tokenization, vocabulary construction, and padded token sequences.
//
// Reserved ids are fixed so checkpoints stay stable: pad=0, eos=1, unk=2.
// The pad id doubles as the start-of-sequence input at timestep 0.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "langgan/common.hpp"

namespace langgan {

constexpr int32_t kPadId = 0;
constexpr int32_t kEosId = 1;
constexpr int32_t kUnkId = 2;
constexpr size_t kReservedTokens = 3;
constexpr const char* kPadToken = "<pad>";
constexpr const char* kEosToken = "<eos>";
constexpr const char* kUnkToken = "<unk>";

// Rejects malformed UTF-8; returns the byte offset of the first bad byte, or
// npos when the text is valid.
inline size_t invalid_utf8_at(const std::string& s) {
    size_t i = 0;
    while (i < s.size()) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        size_t extra;
        if (c < 0x80) {
            extra = 0;
        } else if ((c >> 5) == 0x6) {
            extra = 1;
        } else if ((c >> 4) == 0xe) {
            extra = 2;
        } else if ((c >> 3) == 0x1e) {
            extra = 3;
        } else {
            return i;
        }
        for (size_t k = 1; k <= extra; ++k) {
            if (i + k >= s.size()) return i;
            if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return i;
        }
        i += extra + 1;
    }
    return std::string::npos;
}

// Whitespace-split word tokenizer (corpora arrive pre-tokenized).
inline std::vector<std::string> tokenize(const std::string& line, bool lowercase = false) {
    size_t bad = invalid_utf8_at(line);
    if (bad != std::string::npos)
        throw IngestionError("invalid UTF-8 at byte " + std::to_string(bad));
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '\v' || ch == '\f') {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(lowercase && ch >= 'A' && ch <= 'Z' ? static_cast<char>(ch + 32) : ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct Vocabulary {
    std::unordered_map<std::string, int32_t> token_to_id;
    std::vector<std::string> id_to_token;
    std::vector<int64_t> frequencies;  // 0 for reserved ids
    int32_t pad_id = kPadId;
    int32_t eos_id = kEosId;
    int32_t unk_id = kUnkId;

    size_t size() const { return id_to_token.size(); }

    int32_t encode(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? unk_id : it->second;
    }

    const std::string& decode(int32_t id) const {
        if (id < 0 || static_cast<size_t>(id) >= id_to_token.size())
            throw ArgumentError("vocabulary: id out of range: " + std::to_string(id));
        return id_to_token[static_cast<size_t>(id)];
    }

    bool contains(const std::string& token) const { return token_to_id.count(token) > 0; }
};

// Keeps the most frequent tokens up to max_size (reserved slots included in
// the budget); ties break by first occurrence in the corpus.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus,
                              size_t max_size, size_t min_freq = 1) {
    if (corpus.empty()) throw IngestionError("build_vocab: empty corpus");
    if (max_size < kReservedTokens + 1)
        throw ArgumentError("build_vocab: max_size leaves no room beyond reserved ids");

    std::unordered_map<std::string, std::pair<int64_t, size_t>> stats;  // count, first index
    size_t running = 0;
    for (const auto& sent : corpus)
        for (const auto& tok : sent) {
            auto [it, inserted] = stats.try_emplace(tok, 0, running);
            it->second.first += 1;
            ++running;
        }

    std::vector<const std::pair<const std::string, std::pair<int64_t, size_t>>*> order;
    order.reserve(stats.size());
    for (const auto& kv : stats)
        if (kv.second.first >= static_cast<int64_t>(min_freq)) order.push_back(&kv);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
        if (a->second.first != b->second.first) return a->second.first > b->second.first;
        return a->second.second < b->second.second;
    });

    Vocabulary v;
    v.id_to_token = {kPadToken, kEosToken, kUnkToken};
    v.frequencies = {0, 0, 0};
    v.token_to_id = {{kPadToken, kPadId}, {kEosToken, kEosId}, {kUnkToken, kUnkId}};
    size_t budget = max_size - kReservedTokens;
    for (const auto* kv : order) {
        if (v.id_to_token.size() - kReservedTokens >= budget) break;
        v.token_to_id.emplace(kv->first, static_cast<int32_t>(v.id_to_token.size()));
        v.id_to_token.push_back(kv->first);
        v.frequencies.push_back(kv->second.first);
    }
    return v;
}

// One padded sentence: tokens, then eos, then pad out to max_len. A sentence
// that fills max_len without room for eos is stored truncated with
// length == max_len and no eos.
struct TokenSequence {
    std::vector<int32_t> ids;
    size_t length = 0;  // position of eos (exclusive); == ids.size() when truncated

    size_t max_len() const { return ids.size(); }
    bool truncated() const { return length == ids.size(); }
    // steps that carry probability/reward mass: tokens plus the eos step
    size_t scored_steps() const { return truncated() ? length : length + 1; }
};

inline TokenSequence encode_sequence(const std::vector<std::string>& tokens,
                                     const Vocabulary& vocab, size_t max_len) {
    if (max_len == 0) throw ArgumentError("encode_sequence: max_len must be >= 1");
    TokenSequence seq;
    seq.ids.assign(max_len, vocab.pad_id);
    size_t n = std::min(tokens.size(), max_len);
    for (size_t i = 0; i < n; ++i) seq.ids[i] = vocab.encode(tokens[i]);
    seq.length = n;
    if (n < max_len) seq.ids[n] = vocab.eos_id;
    return seq;
}

inline std::vector<std::string> decode_sequence(const TokenSequence& seq,
                                                const Vocabulary& vocab) {
    std::vector<std::string> out;
    out.reserve(seq.length);
    for (size_t i = 0; i < seq.length; ++i) out.push_back(vocab.decode(seq.ids[i]));
    return out;
}

// Padding grammar validator used across the test suites.
inline bool valid_token_sequence(const TokenSequence& seq, int32_t pad_id = kPadId,
                                 int32_t eos_id = kEosId) {
    if (seq.length > seq.ids.size()) return false;
    for (size_t i = 0; i < seq.length; ++i)
        if (seq.ids[i] == pad_id) return false;
    if (seq.length < seq.ids.size()) {
        if (seq.ids[seq.length] != eos_id) return false;
        for (size_t i = seq.length + 1; i < seq.ids.size(); ++i)
            if (seq.ids[i] != pad_id) return false;
    }
    return true;
}

}  // namespace langgan
