// Autoregressive LSTM generator.
//
// Architecture: embedding lookup -> linear projection to the LSTM feature
// size -> stacked LSTM layers with skip connections (each layer past the
// first consumes [projected input ; previous layer's hidden]) -> linear
// projection of the concatenated hidden states back to the embedding
// dimension -> logits through the tied embedding matrix plus a learned
// per-token bias.
//
// The sampler never emits the pad id: pad is the padding/start symbol, not a
// word. Log-probabilities, however, are always taken from the full
// (unmasked) softmax, so re-scoring sampled tokens with log_prob reproduces
// the recorded values exactly.
#pragma once

#include "langgan/corpus.hpp"
#include "langgan/embedding.hpp"
#include "langgan/gradcheck.hpp"
#include "langgan/layers.hpp"

namespace langgan {

struct GeneratorConfig {
    size_t layers = 2;
    size_t hidden = 32;
};

struct GeneratorParams {
    EmbeddingTable embedding;
    ParamBlock input_w, input_b;    // total_dim × H, 1 × H
    std::vector<LstmParams> lstm;   // layer 0: H inputs; layers 1..: 2H inputs
    ParamBlock output_w, output_b;  // (layers·H) × total_dim, 1 × total_dim
    ParamBlock logit_bias;          // 1 × V

    size_t vocab_size() const { return embedding.vocab_size(); }
    size_t hidden() const { return lstm.front().hidden(); }
    size_t layers() const { return lstm.size(); }
    size_t total_dim() const { return embedding.total_dim(); }

    void collect(ParamSet& ps) {
        ps.add(embedding.learned);
        ps.add(input_w);
        ps.add(input_b);
        for (auto& l : lstm) l.collect(ps);
        ps.add(output_w);
        ps.add(output_b);
        ps.add(logit_bias);
    }
};

inline GeneratorParams init_generator(EmbeddingTable embedding, const GeneratorConfig& cfg,
                                      uint64_t seed, const std::string& prefix = "gen") {
    if (cfg.layers == 0 || cfg.hidden == 0)
        throw ArgumentError("init_generator: layers and hidden must be positive");
    GeneratorParams p;
    p.embedding = std::move(embedding);
    const size_t E = p.embedding.total_dim();
    const size_t H = cfg.hidden;
    const size_t V = p.embedding.vocab_size();
    Rng rng = Rng::stream(seed, "generator-init");
    auto init = [&rng](ParamBlock& blk, size_t fan_in) {
        double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& v : blk.value.data) v = rng.normal(0.0, scale);
    };
    p.input_w = ParamBlock(prefix + "/input_w", E, H);
    init(p.input_w, E);
    p.input_b = ParamBlock(prefix + "/input_b", 1, H);
    for (size_t l = 0; l < cfg.layers; ++l) {
        size_t in_dim = l == 0 ? H : 2 * H;
        LstmParams lp = make_lstm_params(prefix + "/lstm" + std::to_string(l), in_dim, H, false);
        init(lp.wx, in_dim);
        init(lp.wh, H);
        for (size_t j = 0; j < H; ++j) lp.b.value.data[H + j] = 1.0;  // forget gate bias
        p.lstm.push_back(std::move(lp));
    }
    p.output_w = ParamBlock(prefix + "/output_w", cfg.layers * H, E);
    init(p.output_w, cfg.layers * H);
    p.output_b = ParamBlock(prefix + "/output_b", 1, E);
    p.logit_bias = ParamBlock(prefix + "/logit_bias", 1, V);
    return p;
}

struct GeneratorState {
    std::vector<Tensor2> h, c;  // per layer, n × H
};

inline GeneratorState init_state(const GeneratorParams& p, size_t n) {
    GeneratorState s;
    for (size_t l = 0; l < p.layers(); ++l) {
        s.h.emplace_back(n, p.hidden());
        s.c.emplace_back(n, p.hidden());
    }
    return s;
}

// Tied-embedding logits: logits = o · [pretrained | learned]ᵀ + bias.
inline Tensor2 embedding_logits(const EmbeddingTable& table, const Tensor2& o,
                                const ParamBlock& bias) {
    const size_t ep = table.pretrained_dim();
    const size_t m = table.learned_dim();
    detail::require(o.cols == ep + m, "embedding_logits: projection dim mismatch");
    const size_t V = table.vocab_size();
    Tensor2 logits(o.rows, V);
    for (size_t r = 0; r < o.rows; ++r) {
        const double* orow = o.row(r);
        double* lrow = logits.row(r);
        for (size_t v = 0; v < V; ++v) {
            double s = bias.value.data[v];
            if (ep) {
                const double* pi = table.pretrained->row(v);
                for (size_t k = 0; k < ep; ++k) s += orow[k] * pi[k];
            }
            if (m) {
                const double* li = table.learned.value.row(v);
                for (size_t k = 0; k < m; ++k) s += orow[ep + k] * li[k];
            }
            lrow[v] = s;
        }
    }
    return logits;
}

// Backward of the tied product: fills d_o and accumulates into the learned
// embedding and bias grads. The pretrained block is frozen by construction.
inline void embedding_logits_backward(const Tensor2& dlogits, const Tensor2& o,
                                      EmbeddingTable& table, ParamBlock& bias, Tensor2& d_o) {
    const size_t ep = table.pretrained_dim();
    const size_t m = table.learned_dim();
    const size_t V = table.vocab_size();
    d_o = Tensor2(o.rows, o.cols);
    for (size_t r = 0; r < o.rows; ++r) {
        const double* dl = dlogits.row(r);
        const double* orow = o.row(r);
        double* dor = d_o.row(r);
        for (size_t v = 0; v < V; ++v) {
            double d = dl[v];
            if (d == 0.0) continue;
            bias.grad.data[v] += d;
            if (ep) {
                const double* pi = table.pretrained->row(v);
                for (size_t k = 0; k < ep; ++k) dor[k] += d * pi[k];
            }
            if (m) {
                const double* li = table.learned.value.row(v);
                double* lg = table.learned.grad.row(v);
                for (size_t k = 0; k < m; ++k) {
                    dor[ep + k] += d * li[k];
                    lg[k] += d * orow[ep + k];
                }
            }
        }
    }
}

struct GenStepCache {
    std::vector<int32_t> ids;
    Tensor2 dropout_mask;
    AffineCache in_cache;              // x = post-dropout embeddings
    std::vector<LstmCache> lstm;
    AffineCache out_cache;             // x = concatenated hidden states
    Tensor2 o;                         // projection fed to the tied logits
};

// One generation step for a batch of previous tokens. Advances the state and
// returns the logits over the vocabulary.
inline Tensor2 gen_step_batch(const GeneratorParams& p, std::span<const int32_t> prev,
                              GeneratorState& state, GenStepCache* cache = nullptr,
                              double dropout_rate = 0.0, Rng* dropout_rng = nullptr,
                              bool training = false) {
    for (int32_t id : prev)
        if (id < 0 || static_cast<size_t>(id) >= p.vocab_size())
            throw ArgumentError("gen_step: token id out of range");
    Tensor2 e = embedding_forward(p.embedding, prev);
    if (training && dropout_rate > 0.0) {
        if (!dropout_rng) throw ArgumentError("gen_step: dropout requires an rng");
        Tensor2 mask;
        e = dropout(e, dropout_rate, *dropout_rng, true, cache ? &mask : nullptr);
        if (cache) cache->dropout_mask = std::move(mask);
    }
    // const_cast-free: caches copy their inputs
    Tensor2 u = affine_forward(e, p.input_w, p.input_b, cache ? &cache->in_cache : nullptr);

    Tensor2 concat_h;
    if (cache) cache->lstm.resize(p.layers());
    for (size_t l = 0; l < p.layers(); ++l) {
        Tensor2 x = l == 0 ? u : hconcat(u, state.h[l - 1]);
        Tensor2 h_out, c_out;
        lstm_forward(x, state.h[l], state.c[l], p.lstm[l], h_out, c_out,
                     cache ? &cache->lstm[l] : nullptr);
        state.h[l] = std::move(h_out);
        state.c[l] = std::move(c_out);
        concat_h = l == 0 ? state.h[l] : hconcat(concat_h, state.h[l]);
    }
    Tensor2 o = affine_forward(concat_h, p.output_w, p.output_b,
                               cache ? &cache->out_cache : nullptr);
    Tensor2 logits = embedding_logits(p.embedding, o, p.logit_bias);
    if (cache) {
        cache->ids.assign(prev.begin(), prev.end());
        cache->o = std::move(o);
    }
    return logits;
}

// Single-sequence step: returns the length-V logit vector and the new state.
inline std::pair<std::vector<double>, GeneratorState> gen_step(const GeneratorParams& p,
                                                               int32_t prev_token,
                                                               const GeneratorState& state) {
    GeneratorState s = state;
    if (s.h.empty()) s = init_state(p, 1);
    std::array<int32_t, 1> prev = {prev_token};
    Tensor2 logits = gen_step_batch(p, prev, s);
    return {std::move(logits.data), std::move(s)};
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct SamplerConfig {
    double temperature = 1.0;
    size_t max_len = 32;
    uint64_t seed = 0;
};

// One sampled batch with everything the REINFORCE update needs. rewards and
// returns stay zero until the trainer fills them.
struct Trajectory {
    IntMat tokens;        // n × max_len
    Tensor2 log_probs;    // n × max_len, model log p at temperature 1
    Tensor2 rewards;      // n × max_len
    Tensor2 returns;      // n × max_len
    std::vector<uint8_t> mask;  // n × max_len, true on token steps incl. eos
    std::vector<size_t> lengths;
    double temperature = 1.0;

    size_t n() const { return tokens.rows; }
    size_t max_len() const { return tokens.cols; }
    bool masked(size_t r, size_t t) const { return mask[r * tokens.cols + t] != 0; }

    TokenBatch batch() const {
        TokenBatch b;
        b.tokens = tokens;
        b.lengths = lengths;
        return b;
    }
};

inline Trajectory sample_batch(const GeneratorParams& p, const SamplerConfig& cfg, size_t n) {
    if (n < 1) throw ArgumentError("sample_batch: n must be >= 1");
    if (!(cfg.temperature > 0.0)) throw ArgumentError("sample_batch: temperature must be > 0");
    if (cfg.max_len < 1) throw ArgumentError("sample_batch: max_len must be >= 1");

    const size_t T = cfg.max_len;
    const size_t V = p.vocab_size();
    Trajectory traj;
    traj.tokens = IntMat(n, T, kPadId);
    traj.log_probs = Tensor2(n, T);
    traj.rewards = Tensor2(n, T);
    traj.returns = Tensor2(n, T);
    traj.mask.assign(n * T, 0);
    traj.lengths.assign(n, T);
    traj.temperature = cfg.temperature;

    Rng rng = Rng::stream(cfg.seed, "sample");
    GeneratorState state = init_state(p, n);
    std::vector<int32_t> prev(n, kPadId);
    std::vector<uint8_t> done(n, 0);

    for (size_t t = 0; t < T; ++t) {
        Tensor2 logits = gen_step_batch(p, prev, state);
        for (size_t r = 0; r < n; ++r) {
            if (done[r]) {
                prev[r] = kPadId;
                continue;
            }
            // sampling distribution: softmax at cfg.temperature, pad masked out
            std::vector<double> w(V);
            const double* lrow = logits.row(r);
            double mx = -1e300;
            for (size_t v = 0; v < V; ++v)
                if (v != static_cast<size_t>(kPadId)) mx = std::max(mx, lrow[v] / cfg.temperature);
            for (size_t v = 0; v < V; ++v)
                w[v] = v == static_cast<size_t>(kPadId)
                           ? 0.0
                           : std::exp(lrow[v] / cfg.temperature - mx);
            int32_t tok = static_cast<int32_t>(rng.categorical(w));

            // recorded log-prob: full softmax at temperature 1
            std::vector<double> lsm = log_softmax(logits.row_span(r));
            traj.tokens(r, t) = tok;
            traj.log_probs(r, t) = lsm[static_cast<size_t>(tok)];
            traj.mask[r * T + t] = 1;
            if (tok == kEosId) {
                done[r] = 1;
                traj.lengths[r] = t;  // words before eos
            }
            prev[r] = tok;
        }
        bool all_done = true;
        for (size_t r = 0; r < n; ++r)
            if (!done[r]) all_done = false;
        if (all_done) break;
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Teacher-forced scoring
// ---------------------------------------------------------------------------

// Per-step log-probabilities of a batch under the model. The input at step t
// is the previous token (pad at step 0); only masked steps are meaningful.
inline Tensor2 teacher_logprobs(const GeneratorParams& p, const TokenBatch& batch,
                                std::vector<GenStepCache>* caches = nullptr,
                                double dropout_rate = 0.0, Rng* dropout_rng = nullptr,
                                bool training = false) {
    const size_t n = batch.n();
    const size_t T = batch.max_len();
    Tensor2 out(n, T);
    GeneratorState state = init_state(p, n);
    std::vector<int32_t> prev(n, kPadId);
    if (caches) caches->resize(T);
    for (size_t t = 0; t < T; ++t) {
        for (size_t r = 0; r < n; ++r) prev[r] = t == 0 ? kPadId : batch.tokens(r, t - 1);
        Tensor2 logits = gen_step_batch(p, prev, state, caches ? &(*caches)[t] : nullptr,
                                        dropout_rate, dropout_rng, training);
        for (size_t r = 0; r < n; ++r) {
            if (!batch.masked(r, t)) continue;
            std::vector<double> lsm = log_softmax(logits.row_span(r));
            out(r, t) = lsm[static_cast<size_t>(batch.tokens(r, t))];
        }
    }
    return out;
}

// Spec op: per-step log p for one sequence, up to and including eos.
inline std::vector<double> log_prob(const TokenSequence& seq, const GeneratorParams& p) {
    TokenBatch batch;
    batch.tokens = IntMat(1, seq.max_len());
    std::copy(seq.ids.begin(), seq.ids.end(), batch.tokens.row(0));
    batch.lengths = {seq.length};
    Tensor2 lp = teacher_logprobs(p, batch);
    std::vector<double> out(seq.scored_steps());
    for (size_t t = 0; t < out.size(); ++t) out[t] = lp(0, t);
    return out;
}

// exp(mean per-token NLL) over all scored (non-pad) steps, eos included.
inline double perplexity(std::span<const TokenSequence> dataset, const GeneratorParams& p,
                         size_t eval_batch = 64) {
    if (dataset.empty()) throw ArgumentError("perplexity: empty dataset");
    double nll = 0.0;
    size_t steps = 0;
    for (size_t start = 0; start < dataset.size(); start += eval_batch) {
        size_t stop = std::min(dataset.size(), start + eval_batch);
        std::vector<const TokenSequence*> rows;
        for (size_t i = start; i < stop; ++i) rows.push_back(&dataset[i]);
        TokenBatch batch = make_batch(rows);
        Tensor2 lp = teacher_logprobs(p, batch);
        for (size_t r = 0; r < batch.n(); ++r)
            for (size_t t = 0; t < batch.max_len(); ++t)
                if (batch.masked(r, t)) {
                    nll -= lp(r, t);
                    ++steps;
                }
    }
    if (steps == 0) throw ArgumentError("perplexity: dataset has no scored steps");
    return std::exp(nll / static_cast<double>(steps));
}

// ---------------------------------------------------------------------------
// Weighted teacher-forced gradient: the shared backward for MLE (uniform
// weights) and REINFORCE (per-step return-minus-baseline weights).
// Returns sum over steps of weight * (-log p(token)) and accumulates grads.
// ---------------------------------------------------------------------------

inline double generator_weighted_grad(GeneratorParams& p, const TokenBatch& batch,
                                      const Tensor2& step_weights, double dropout_rate = 0.0,
                                      Rng* dropout_rng = nullptr) {
    const size_t n = batch.n();
    const size_t T = batch.max_len();
    detail::require(step_weights.rows == n && step_weights.cols == T,
                    "generator_weighted_grad: weight shape mismatch");
    std::vector<GenStepCache> caches;
    bool training = dropout_rate > 0.0;
    teacher_logprobs(p, batch, &caches, dropout_rate, dropout_rng, training);

    const size_t H = p.hidden();
    const size_t L = p.layers();
    double loss = 0.0;

    // future-state gradients flowing right-to-left
    std::vector<Tensor2> dh(L, Tensor2(n, H)), dc(L, Tensor2(n, H));

    for (size_t t = T; t-- > 0;) {
        GenStepCache& cache = caches[t];
        // rebuild logits from the cached projection
        Tensor2 logits = embedding_logits(p.embedding, cache.o, p.logit_bias);
        Tensor2 dlogits(n, p.vocab_size());
        std::vector<int32_t> targets(n);
        std::vector<double> weights(n, 0.0);
        for (size_t r = 0; r < n; ++r) {
            targets[r] = batch.tokens(r, t);
            if (batch.masked(r, t)) weights[r] = step_weights(r, t);
        }
        loss += weighted_softmax_xent(logits, targets, weights, &dlogits);

        Tensor2 d_o;
        embedding_logits_backward(dlogits, cache.o, p.embedding, p.logit_bias, d_o);
        Tensor2 d_concat = affine_backward(d_o, cache.out_cache, p.output_w, p.output_b);

        // split d_concat across layers and add the recurrent gradients
        Tensor2 du(n, H);
        for (size_t l = L; l-- > 0;) {
            Tensor2 dh_l = dh[l];
            for (size_t r = 0; r < n; ++r)
                for (size_t j = 0; j < H; ++j) dh_l(r, j) += d_concat(r, l * H + j);
            Tensor2 dx, dh_prev, dc_prev;
            lstm_backward(dh_l, dc[l], cache.lstm[l], p.lstm[l], dx, dh_prev, dc_prev);
            dh[l] = std::move(dh_prev);
            dc[l] = std::move(dc_prev);
            if (l == 0) {
                for (size_t r = 0; r < n; ++r)
                    for (size_t j = 0; j < H; ++j) du(r, j) += dx(r, j);
            } else {
                // dx = [du_part ; dh for layer l-1]
                for (size_t r = 0; r < n; ++r)
                    for (size_t j = 0; j < H; ++j) {
                        du(r, j) += dx(r, j);
                        dh[l - 1](r, j) += dx(r, H + j);
                    }
            }
        }
        Tensor2 d_e = affine_backward(du, cache.in_cache, p.input_w, p.input_b);
        if (cache.dropout_mask.size()) {
            for (size_t k = 0; k < d_e.size(); ++k) d_e.data[k] *= cache.dropout_mask.data[k];
        }
        embedding_backward(d_e, cache.ids, p.embedding);
    }
    return loss;
}

}  // namespace langgan
