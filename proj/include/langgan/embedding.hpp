// Embedding tables: a frozen pretrained part loaded from a vectors file,
// concatenated with a trainable part. The pretrained matrix is shared between
// models and never receives gradients.
#pragma once

#include <fstream>
#include <memory>
#include <unordered_set>

#include "langgan/param.hpp"
#include "langgan/vocab.hpp"

namespace langgan {

struct EmbeddingTable {
    std::shared_ptr<const Tensor2> pretrained;  // V × Ep, frozen
    ParamBlock learned;                         // V × M

    size_t vocab_size() const { return learned.value.rows; }
    size_t pretrained_dim() const { return pretrained ? pretrained->cols : 0; }
    size_t learned_dim() const { return learned.value.cols; }
    size_t total_dim() const { return pretrained_dim() + learned_dim(); }
};

inline EmbeddingTable make_embedding_table(const std::string& name,
                                           std::shared_ptr<const Tensor2> pretrained,
                                           size_t vocab_size, size_t learned_dim,
                                           uint64_t seed) {
    if (pretrained && pretrained->rows != vocab_size)
        throw DimensionError("embedding table: pretrained row count != vocab size");
    EmbeddingTable t;
    t.pretrained = pretrained ? std::move(pretrained)
                              : std::make_shared<const Tensor2>(vocab_size, 0);
    t.learned = ParamBlock(name + "/learned_embedding", vocab_size, learned_dim);
    Rng rng = Rng::stream(seed, "learned-embedding-init");
    for (auto& v : t.learned.value.data) v = rng.normal(0.0, 0.1);
    return t;
}

struct EmbeddingLoadResult {
    Tensor2 table;    // V × dim
    double coverage;  // fraction of vocabulary ids found in the file
};

// File format: one token per line followed by `dim` whitespace-separated
// decimals. Vocabulary tokens found in the file get the file's values
// bit-exactly; everything else (reserved ids included) is drawn from a
// seeded N(0, 0.1).
inline EmbeddingLoadResult load_embedding_file(const std::string& path, const Vocabulary& vocab,
                                               size_t dim, uint64_t seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding file: " + path);

    Tensor2 table(vocab.size(), dim);
    std::unordered_set<int32_t> covered;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> parts = tokenize(line, false);
        if (parts.empty()) continue;
        if (parts.size() != dim + 1)
            throw IngestionError(path + ":" + std::to_string(line_no) + ": expected token + " +
                                 std::to_string(dim) + " values, got " +
                                 std::to_string(parts.size() - 1));
        if (!vocab.contains(parts[0])) continue;
        int32_t id = vocab.encode(parts[0]);
        for (size_t j = 0; j < dim; ++j) {
            const std::string& tok = parts[j + 1];
            char* end = nullptr;
            double v = std::strtod(tok.c_str(), &end);
            if (end != tok.c_str() + tok.size() || !std::isfinite(v))
                throw IngestionError(path + ":" + std::to_string(line_no) +
                                     ": malformed value '" + tok + "'");
            table(static_cast<size_t>(id), j) = v;
        }
        covered.insert(id);
    }

    Rng rng = Rng::stream(seed, "pretrained-embedding-init");
    for (size_t id = 0; id < vocab.size(); ++id) {
        if (covered.count(static_cast<int32_t>(id))) continue;
        for (size_t j = 0; j < dim; ++j) table(id, j) = rng.normal(0.0, 0.1);
    }
    return {std::move(table), static_cast<double>(covered.size()) /
                                  static_cast<double>(vocab.size())};
}

// Lookup of [pretrained | learned] rows for a batch of ids.
inline Tensor2 embedding_forward(const EmbeddingTable& table, std::span<const int32_t> ids) {
    const size_t ep = table.pretrained_dim();
    const size_t m = table.learned_dim();
    Tensor2 out(ids.size(), ep + m);
    for (size_t r = 0; r < ids.size(); ++r) {
        int32_t id = ids[r];
        if (id < 0 || static_cast<size_t>(id) >= table.vocab_size())
            throw ArgumentError("embedding_forward: id out of range: " + std::to_string(id));
        double* o = out.row(r);
        if (ep) {
            const double* p = table.pretrained->row(static_cast<size_t>(id));
            std::copy(p, p + ep, o);
        }
        if (m) {
            const double* l = table.learned.value.row(static_cast<size_t>(id));
            std::copy(l, l + m, o + ep);
        }
    }
    return out;
}

// Gradients land on the learned columns only; the pretrained part is frozen.
inline void embedding_backward(const Tensor2& d_out, std::span<const int32_t> ids,
                               EmbeddingTable& table) {
    const size_t ep = table.pretrained_dim();
    const size_t m = table.learned_dim();
    detail::require(d_out.rows == ids.size() && d_out.cols == ep + m,
                    "embedding_backward: shape mismatch");
    for (size_t r = 0; r < ids.size(); ++r) {
        const double* dr = d_out.row(r) + ep;
        double* g = table.learned.grad.row(static_cast<size_t>(ids[r]));
        for (size_t j = 0; j < m; ++j) g[j] += dr[j];
    }
}

}  // namespace langgan
