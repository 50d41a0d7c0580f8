// Corpus files (one sentence per line), length filtering, and the
// epoch-shuffled batch iterator.
#pragma once

#include <fstream>
#include <limits>

#include "langgan/tensor.hpp"
#include "langgan/vocab.hpp"

namespace langgan {

using Corpus = std::vector<std::vector<std::string>>;

inline Corpus load_corpus(const std::string& path, bool lowercase = false) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    Corpus corpus;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        try {
            auto tokens = tokenize(line, lowercase);
            if (!tokens.empty()) corpus.push_back(std::move(tokens));
        } catch (const IngestionError& e) {
            throw IngestionError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return corpus;
}

inline Corpus filter_by_length(const Corpus& corpus, size_t min_tokens,
                               size_t max_tokens = std::numeric_limits<size_t>::max()) {
    if (min_tokens < 1) throw ArgumentError("filter_by_length: min_tokens must be >= 1");
    Corpus out;
    out.reserve(corpus.size());
    for (const auto& sent : corpus)
        if (sent.size() >= min_tokens && sent.size() <= max_tokens) out.push_back(sent);
    return out;
}

inline std::vector<TokenSequence> encode_corpus(const Corpus& corpus, const Vocabulary& vocab,
                                                size_t max_len) {
    std::vector<TokenSequence> out;
    out.reserve(corpus.size());
    for (const auto& sent : corpus) out.push_back(encode_sequence(sent, vocab, max_len));
    return out;
}

// A batch of sequences laid out as an id matrix for the recurrent models.
struct TokenBatch {
    IntMat tokens;               // n × max_len
    std::vector<size_t> lengths; // per row, eos position (exclusive)

    size_t n() const { return tokens.rows; }
    size_t max_len() const { return tokens.cols; }
    bool masked(size_t row, size_t t) const {
        // tokens plus the eos step carry mass; pad steps do not
        size_t len = lengths[row];
        size_t scored = len < tokens.cols ? len + 1 : len;
        return t < scored;
    }
    size_t scored_steps(size_t row) const {
        size_t len = lengths[row];
        return len < tokens.cols ? len + 1 : len;
    }
};

inline TokenBatch make_batch(std::span<const TokenSequence* const> seqs) {
    if (seqs.empty()) throw ArgumentError("make_batch: empty batch");
    size_t max_len = seqs[0]->max_len();
    TokenBatch batch;
    batch.tokens = IntMat(seqs.size(), max_len, kPadId);
    batch.lengths.resize(seqs.size());
    for (size_t i = 0; i < seqs.size(); ++i) {
        detail::require(seqs[i]->max_len() == max_len, "make_batch: mixed max_len");
        std::copy(seqs[i]->ids.begin(), seqs[i]->ids.end(), batch.tokens.row(i));
        batch.lengths[i] = seqs[i]->length;
    }
    return batch;
}

// Shuffles once per epoch with a per-epoch seeded stream and drops the final
// partial batch, so every epoch yields floor(n / batch_size) batches.
class BatchIterator {
  public:
    BatchIterator(const std::vector<TokenSequence>& data, size_t batch_size, uint64_t seed)
        : data_(&data), batch_size_(batch_size), seed_(seed) {
        if (batch_size == 0) throw ArgumentError("BatchIterator: batch_size must be >= 1");
        if (data.empty()) throw ArgumentError("BatchIterator: empty dataset");
        order_.resize(data.size());
        reshuffle();
    }

    size_t batches_per_epoch() const { return data_->size() / batch_size_; }

    TokenBatch next() {
        if (pos_ + batch_size_ > batches_per_epoch() * batch_size_) {
            ++epoch_;
            reshuffle();
        }
        std::vector<const TokenSequence*> rows;
        rows.reserve(batch_size_);
        for (size_t i = 0; i < batch_size_; ++i) rows.push_back(&(*data_)[order_[pos_ + i]]);
        pos_ += batch_size_;
        return make_batch(rows);
    }

    size_t epoch() const { return epoch_; }

  private:
    void reshuffle() {
        for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        Rng rng = Rng::stream(seed_, "batch-shuffle", epoch_);
        rng.shuffle(order_);
        pos_ = 0;
    }

    const std::vector<TokenSequence>* data_;
    size_t batch_size_;
    uint64_t seed_;
    std::vector<size_t> order_;
    size_t pos_ = 0;
    size_t epoch_ = 0;
};

}  // namespace langgan
