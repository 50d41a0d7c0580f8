// Forward passes with caches and hand-derived backward passes for the layers
// both models are built from: affine, layer norm, LSTM cell, dropout, and the
// softmax / sigmoid losses.
#pragma once

#include <optional>

#include "langgan/param.hpp"

namespace langgan {

constexpr double kLayerNormEps = 1e-6;

// ---------------------------------------------------------------------------
// Affine: y = x · w + b
// ---------------------------------------------------------------------------

struct AffineCache {
    Tensor2 x;
};

inline Tensor2 affine_forward(const Tensor2& x, const ParamBlock& w, const ParamBlock& b,
                              AffineCache* cache = nullptr) {
    Tensor2 y = matmul(x, w.value);
    add_row_vector(y, b.value);
    if (cache) cache->x = x;
    return y;
}

// Accumulates into w.grad / b.grad, returns dx.
inline Tensor2 affine_backward(const Tensor2& dy, const AffineCache& cache, ParamBlock& w,
                               ParamBlock& b) {
    matmul_tn_acc(cache.x, dy, w.grad);
    add_col_sums(dy, b.grad);
    return matmul_nt(dy, w.value);
}

// ---------------------------------------------------------------------------
// Layer normalization over each row, then elementwise affine.
// ---------------------------------------------------------------------------

struct LayerNormCache {
    Tensor2 xhat;
    std::vector<double> rstd;
};

inline Tensor2 layer_norm_rows(const Tensor2& x, const ParamBlock& gain, const ParamBlock& bias,
                               LayerNormCache* cache = nullptr, double eps = kLayerNormEps) {
    detail::require(gain.value.rows == 1 && gain.value.cols == x.cols, "layer_norm: gain shape");
    detail::require(bias.value.rows == 1 && bias.value.cols == x.cols, "layer_norm: bias shape");
    Tensor2 out(x.rows, x.cols);
    Tensor2 xhat(x.rows, x.cols);
    std::vector<double> rstd(x.rows);
    const size_t d = x.cols;
    for (size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double mean = 0.0;
        for (size_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (size_t j = 0; j < d; ++j) {
            double c = xi[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        double r = 1.0 / std::sqrt(var + eps);
        rstd[i] = r;
        double* hi = xhat.row(i);
        double* oi = out.row(i);
        for (size_t j = 0; j < d; ++j) {
            hi[j] = (xi[j] - mean) * r;
            oi[j] = hi[j] * gain.value.data[j] + bias.value.data[j];
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->rstd = std::move(rstd);
    }
    return out;
}

inline Tensor2 layer_norm_rows_backward(const Tensor2& dy, const LayerNormCache& cache,
                                        ParamBlock& gain, ParamBlock& bias) {
    const Tensor2& xhat = cache.xhat;
    Tensor2 dx(dy.rows, dy.cols);
    const size_t d = dy.cols;
    for (size_t i = 0; i < dy.rows; ++i) {
        const double* dyi = dy.row(i);
        const double* hi = xhat.row(i);
        for (size_t j = 0; j < d; ++j) {
            gain.grad.data[j] += dyi[j] * hi[j];
            bias.grad.data[j] += dyi[j];
        }
        // dxhat = dy * gain; dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
        double m1 = 0.0, m2 = 0.0;
        for (size_t j = 0; j < d; ++j) {
            double dh = dyi[j] * gain.value.data[j];
            m1 += dh;
            m2 += dh * hi[j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        double* dxi = dx.row(i);
        for (size_t j = 0; j < d; ++j) {
            double dh = dyi[j] * gain.value.data[j];
            dxi[j] = cache.rstd[i] * (dh - m1 - hi[j] * m2);
        }
    }
    return dx;
}

// Vector form used by the tests and single-sequence paths.
inline std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                                      std::span<const double> bias, double eps = kLayerNormEps) {
    if (gain.size() != x.size() || bias.size() != x.size())
        throw DimensionError("layer_norm: gain/bias length mismatch");
    Tensor2 xm(1, x.size());
    std::copy(x.begin(), x.end(), xm.data.begin());
    ParamBlock g("g", 1, x.size()), b("b", 1, x.size());
    std::copy(gain.begin(), gain.end(), g.value.data.begin());
    std::copy(bias.begin(), bias.end(), b.value.data.begin());
    Tensor2 y = layer_norm_rows(xm, g, b, nullptr, eps);
    return y.data;
}

// ---------------------------------------------------------------------------
// LSTM cell. Pre-activations a = x·wx + h·wh + b are split into gates
// [i f g o]; when ln_gain/ln_bias are present the full pre-activation row is
// layer-normalized first.
// ---------------------------------------------------------------------------

struct LstmParams {
    ParamBlock wx;  // in × 4H
    ParamBlock wh;  // H × 4H
    ParamBlock b;   // 1 × 4H
    std::optional<ParamBlock> ln_gain;  // 1 × 4H
    std::optional<ParamBlock> ln_bias;  // 1 × 4H

    size_t hidden() const { return wh.value.rows; }
    size_t input_dim() const { return wx.value.rows; }
    bool layer_normed() const { return ln_gain.has_value(); }

    void collect(ParamSet& ps) {
        ps.add(wx);
        ps.add(wh);
        ps.add(b);
        if (ln_gain) ps.add(*ln_gain);
        if (ln_bias) ps.add(*ln_bias);
    }
};

inline LstmParams make_lstm_params(const std::string& prefix, size_t input_dim, size_t hidden,
                                   bool layer_norm) {
    LstmParams p;
    p.wx = ParamBlock(prefix + "/wx", input_dim, 4 * hidden);
    p.wh = ParamBlock(prefix + "/wh", hidden, 4 * hidden);
    p.b = ParamBlock(prefix + "/b", 1, 4 * hidden);
    if (layer_norm) {
        p.ln_gain = ParamBlock(prefix + "/ln_gain", 1, 4 * hidden);
        p.ln_gain->value.fill(1.0);
        p.ln_bias = ParamBlock(prefix + "/ln_bias", 1, 4 * hidden);
    }
    return p;
}

struct LstmCache {
    Tensor2 x, h_prev, c_prev;
    Tensor2 i, f, g, o;       // post-nonlinearity gates, N×H each
    Tensor2 c_new, tanh_c;    // N×H
    std::optional<LayerNormCache> ln;
};

inline void lstm_forward(const Tensor2& x, const Tensor2& h, const Tensor2& c,
                         const LstmParams& p, Tensor2& h_out, Tensor2& c_out,
                         LstmCache* cache = nullptr) {
    const size_t H = p.hidden();
    detail::require(x.cols == p.input_dim(), "lstm_forward: input dim mismatch");
    detail::require(h.cols == H && c.cols == H && h.rows == x.rows && c.rows == x.rows,
                    "lstm_forward: state shape mismatch");
    Tensor2 a = matmul(x, p.wx.value);
    Tensor2 ah = matmul(h, p.wh.value);
    add_inplace(a, ah);
    add_row_vector(a, p.b.value);

    LayerNormCache ln_cache;
    if (p.layer_normed()) {
        a = layer_norm_rows(a, *p.ln_gain, *p.ln_bias, cache ? &ln_cache : nullptr);
    }

    const size_t n = x.rows;
    Tensor2 gi(n, H), gf(n, H), gg(n, H), go(n, H), cn(n, H), th(n, H);
    h_out = Tensor2(n, H);
    c_out = Tensor2(n, H);
    for (size_t r = 0; r < n; ++r) {
        const double* ar = a.row(r);
        const double* cr = c.row(r);
        for (size_t j = 0; j < H; ++j) {
            double iv = sigmoid(ar[j]);
            double fv = sigmoid(ar[H + j]);
            double gv = std::tanh(ar[2 * H + j]);
            double ov = sigmoid(ar[3 * H + j]);
            double cv = fv * cr[j] + iv * gv;
            double tv = std::tanh(cv);
            gi(r, j) = iv;
            gf(r, j) = fv;
            gg(r, j) = gv;
            go(r, j) = ov;
            cn(r, j) = cv;
            th(r, j) = tv;
            h_out(r, j) = ov * tv;
            c_out(r, j) = cv;
        }
    }
    if (cache) {
        cache->x = x;
        cache->h_prev = h;
        cache->c_prev = c;
        cache->i = std::move(gi);
        cache->f = std::move(gf);
        cache->g = std::move(gg);
        cache->o = std::move(go);
        cache->c_new = std::move(cn);
        cache->tanh_c = std::move(th);
        if (p.layer_normed()) cache->ln = std::move(ln_cache);
    }
}

// dh/dc are gradients w.r.t. this step's outputs; dx/dh_prev/dc_prev receive
// the inputs' gradients and parameter grads accumulate in p.
inline void lstm_backward(const Tensor2& dh, const Tensor2& dc, const LstmCache& cache,
                          LstmParams& p, Tensor2& dx, Tensor2& dh_prev, Tensor2& dc_prev) {
    const size_t H = p.hidden();
    const size_t n = dh.rows;
    Tensor2 da(n, 4 * H);
    dc_prev = Tensor2(n, H);
    for (size_t r = 0; r < n; ++r) {
        double* dar = da.row(r);
        for (size_t j = 0; j < H; ++j) {
            double iv = cache.i(r, j), fv = cache.f(r, j), gv = cache.g(r, j), ov = cache.o(r, j);
            double tv = cache.tanh_c(r, j);
            double dhv = dh(r, j);
            double dcv = dc(r, j) + dhv * ov * (1.0 - tv * tv);
            double dov = dhv * tv;
            double div = dcv * gv;
            double dfv = dcv * cache.c_prev(r, j);
            double dgv = dcv * iv;
            dc_prev(r, j) = dcv * fv;
            dar[j] = div * iv * (1.0 - iv);
            dar[H + j] = dfv * fv * (1.0 - fv);
            dar[2 * H + j] = dgv * (1.0 - gv * gv);
            dar[3 * H + j] = dov * ov * (1.0 - ov);
        }
    }
    if (p.layer_normed()) {
        da = layer_norm_rows_backward(da, *cache.ln, *p.ln_gain, *p.ln_bias);
    }
    matmul_tn_acc(cache.x, da, p.wx.grad);
    matmul_tn_acc(cache.h_prev, da, p.wh.grad);
    add_col_sums(da, p.b.grad);
    dx = matmul_nt(da, p.wx.value);
    dh_prev = matmul_nt(da, p.wh.value);
}

// ---------------------------------------------------------------------------
// Inverted dropout. mask_out, when given, holds the survivor scale factors so
// the backward pass is dX = dY ⊙ mask.
// ---------------------------------------------------------------------------

inline Tensor2 dropout(const Tensor2& x, double rate, Rng& rng, bool training,
                       Tensor2* mask_out = nullptr) {
    if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout: rate must be in [0, 1)");
    if (!training || rate == 0.0) {
        if (mask_out) {
            *mask_out = Tensor2(x.rows, x.cols, 1.0);
        }
        return x;
    }
    double scale = 1.0 / (1.0 - rate);
    Tensor2 out(x.rows, x.cols);
    Tensor2 mask(x.rows, x.cols);
    for (size_t k = 0; k < x.size(); ++k) {
        double m = rng.uniform() < rate ? 0.0 : scale;
        mask.data[k] = m;
        out.data[k] = x.data[k] * m;
    }
    if (mask_out) *mask_out = std::move(mask);
    return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Sum over rows of weight_r * (-log softmax(logits_r)[target_r]).
// When dlogits is given it accumulates weight_r * (softmax - onehot).
inline double weighted_softmax_xent(const Tensor2& logits, std::span<const int32_t> targets,
                                    std::span<const double> weights, Tensor2* dlogits = nullptr) {
    detail::require(targets.size() == logits.rows && weights.size() == logits.rows,
                    "weighted_softmax_xent: row count mismatch");
    double loss = 0.0;
    for (size_t r = 0; r < logits.rows; ++r) {
        double w = weights[r];
        std::vector<double> lsm = log_softmax(logits.row_span(r));
        int32_t y = targets[r];
        detail::require(y >= 0 && static_cast<size_t>(y) < logits.cols,
                        "weighted_softmax_xent: target out of range");
        loss += w * (-lsm[static_cast<size_t>(y)]);
        if (dlogits) {
            double* dr = dlogits->row(r);
            for (size_t j = 0; j < logits.cols; ++j) dr[j] += w * std::exp(lsm[j]);
            dr[static_cast<size_t>(y)] -= w;
        }
    }
    return loss;
}

}  // namespace langgan
