// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbs/common.hpp"
#include "bbs/rng.hpp"

namespace bbs::denoiser {

using nlohmann::json;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Named handle onto one trainable block and its gradient accumulator.
/// Registry order is fixed by construction so optimizer state and
/// checkpoints line up across runs.
template <typename S>
struct ParamView {
    std::string name;
    Mat<S>* value;
    Mat<S>* grad;
};

namespace detail {

template <typename S>
S gelu_scalar(S x) {
    return S(0.5) * x * (S(1) + S(std::erf(static_cast<double>(x) * 0.7071067811865475)));
}

template <typename S>
S gelu_grad_scalar(S x) {
    const double xd = static_cast<double>(x);
    const double cdf = 0.5 * (1.0 + std::erf(xd * 0.7071067811865475));
    const double pdf = std::exp(-0.5 * xd * xd) * 0.3989422804014327;
    return static_cast<S>(cdf + xd * pdf);
}

template <typename S>
void fan_in_init(Mat<S>& w, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            w(i, j) = static_cast<S>((2.0 * rng.uniform() - 1.0) * bound);
        }
    }
}

}  // namespace detail

/// Elementwise exact-erf GELU.
template <typename S>
class Gelu {
  public:
    Mat<S> forward(const Mat<S>& x, bool cache) {
        if (cache) x_ = x;
        return x.unaryExpr([](S v) { return detail::gelu_scalar(v); });
    }
    Mat<S> backward(const Mat<S>& dy) const {
        return dy.cwiseProduct(x_.unaryExpr([](S v) { return detail::gelu_grad_scalar(v); }));
    }

  private:
    Mat<S> x_;
};

/// Affine layer, y = W x + b, x laid out one column per item.
template <typename S>
class Dense {
  public:
    Dense() = default;
    Dense(int in, int out, Rng& rng) : w_(out, in), b_(out, 1) {
        detail::fan_in_init(w_, in, rng);
        detail::fan_in_init(b_, in, rng);
        dw_ = Mat<S>::Zero(out, in);
        db_ = Mat<S>::Zero(out, 1);
    }

    Mat<S> forward(const Mat<S>& x, bool cache) {
        if (x.rows() != w_.cols()) {
            throw DimensionError("dense: input rows " + std::to_string(x.rows()) + " != " + std::to_string(w_.cols()));
        }
        if (cache) x_ = x;
        return (w_ * x).colwise() + b_.col(0);
    }

    Mat<S> backward(const Mat<S>& dy) {
        dw_ += dy * x_.transpose();
        db_.col(0) += dy.rowwise().sum();
        return w_.transpose() * dy;
    }

    void collect(const std::string& prefix, std::vector<ParamView<S>>& out) {
        out.push_back({prefix + ".w", &w_, &dw_});
        out.push_back({prefix + ".b", &b_, &db_});
    }

    int in_features() const { return static_cast<int>(w_.cols()); }
    int out_features() const { return static_cast<int>(w_.rows()); }

  private:
    Mat<S> w_, b_, dw_, db_, x_;
};

/// 1D convolution over per-sample column blocks of length len; kernel 1 or 3,
/// padding keeps the length. Kernel-3 path goes through an im2col buffer so
/// the contraction is a single GEMM.
template <typename S>
class Conv1d {
  public:
    Conv1d() = default;
    Conv1d(int in_ch, int out_ch, int kernel, Rng& rng) : in_ch_(in_ch), kernel_(kernel), w_(out_ch, in_ch * kernel), b_(out_ch, 1) {
        require(kernel == 1 || kernel == 3, "conv1d: kernel must be 1 or 3");
        detail::fan_in_init(w_, in_ch * kernel, rng);
        detail::fan_in_init(b_, in_ch * kernel, rng);
        dw_ = Mat<S>::Zero(w_.rows(), w_.cols());
        db_ = Mat<S>::Zero(b_.rows(), 1);
    }

    void zero_weights() {
        w_.setZero();
        b_.setZero();
    }

    Mat<S> forward(const Mat<S>& x, int len, bool cache) {
        if (x.rows() != in_ch_) {
            throw DimensionError("conv1d: input channels " + std::to_string(x.rows()) + " != " + std::to_string(in_ch_));
        }
        len_ = len;
        if (kernel_ == 1) {
            if (cache) col_ = x;
            return (w_ * x).colwise() + b_.col(0);
        }
        Mat<S> col = im2col(x, len);
        Mat<S> y = (w_ * col).colwise() + b_.col(0);
        if (cache) col_ = std::move(col);
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) {
        dw_ += dy * col_.transpose();
        db_.col(0) += dy.rowwise().sum();
        Mat<S> dcol = w_.transpose() * dy;
        if (kernel_ == 1) return dcol;
        return col2im(dcol, len_);
    }

    void collect(const std::string& prefix, std::vector<ParamView<S>>& out) {
        out.push_back({prefix + ".w", &w_, &dw_});
        out.push_back({prefix + ".b", &b_, &db_});
    }

    int out_channels() const { return static_cast<int>(w_.rows()); }

  private:
    Mat<S> im2col(const Mat<S>& x, int len) const {
        const int c = in_ch_;
        const Eigen::Index cols = x.cols();
        const Eigen::Index batch = cols / len;
        Mat<S> col = Mat<S>::Zero(3 * c, cols);
        col.middleRows(c, c) = x;
        for (Eigen::Index s = 0; s < batch; ++s) {
            const Eigen::Index o = s * len;
            col.block(0, o + 1, c, len - 1) = x.block(0, o, c, len - 1);
            col.block(2 * c, o, c, len - 1) = x.block(0, o + 1, c, len - 1);
        }
        return col;
    }

    Mat<S> col2im(const Mat<S>& dcol, int len) const {
        const int c = in_ch_;
        const Eigen::Index cols = dcol.cols();
        const Eigen::Index batch = cols / len;
        Mat<S> dx = dcol.middleRows(c, c);
        for (Eigen::Index s = 0; s < batch; ++s) {
            const Eigen::Index o = s * len;
            dx.block(0, o, c, len - 1) += dcol.block(0, o + 1, c, len - 1);
            dx.block(0, o + 1, c, len - 1) += dcol.block(2 * c, o, c, len - 1);
        }
        return dx;
    }

    int in_ch_ = 0;
    int kernel_ = 3;
    Mat<S> w_, b_, dw_, db_, col_;
    int len_ = 0;
};

/// Max pool, kernel 2 stride 2, halving each sample block.
template <typename S>
class MaxPool1d {
  public:
    Mat<S> forward(const Mat<S>& x, int len, bool cache) {
        require(len % 2 == 0, "maxpool: odd length");
        const Eigen::Index rows = x.rows();
        const Eigen::Index batch = x.cols() / len;
        const int half = len / 2;
        Mat<S> y(rows, batch * half);
        Eigen::Matrix<int8_t, Eigen::Dynamic, Eigen::Dynamic> pick(rows, batch * half);
        for (Eigen::Index s = 0; s < batch; ++s) {
            for (int i = 0; i < half; ++i) {
                const Eigen::Index a = s * len + 2 * i;
                const Eigen::Index o = s * half + i;
                for (Eigen::Index r = 0; r < rows; ++r) {
                    const S l = x(r, a), rr = x(r, a + 1);
                    const bool right = rr > l;
                    y(r, o) = right ? rr : l;
                    pick(r, o) = right ? 1 : 0;
                }
            }
        }
        if (cache) {
            pick_ = std::move(pick);
            len_ = len;
            in_cols_ = x.cols();
        }
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) const {
        const Eigen::Index rows = dy.rows();
        const int half = len_ / 2;
        const Eigen::Index batch = dy.cols() / half;
        Mat<S> dx = Mat<S>::Zero(rows, in_cols_);
        for (Eigen::Index s = 0; s < batch; ++s) {
            for (int i = 0; i < half; ++i) {
                const Eigen::Index a = s * len_ + 2 * i;
                const Eigen::Index o = s * half + i;
                for (Eigen::Index r = 0; r < rows; ++r) {
                    dx(r, a + pick_(r, o)) = dy(r, o);
                }
            }
        }
        return dx;
    }

  private:
    Eigen::Matrix<int8_t, Eigen::Dynamic, Eigen::Dynamic> pick_;
    int len_ = 0;
    Eigen::Index in_cols_ = 0;
};

/// Doubling linear-interpolation upsampler (half-sample aligned): even output
/// taps mix 1/4 of the left neighbor, odd taps 1/4 of the right, edges clamp.
/// A fixed linear map, so backward is its transpose.
template <typename S>
class Upsample1d {
  public:
    Mat<S> forward(const Mat<S>& x, int len, bool cache) {
        const Eigen::Index rows = x.rows();
        const Eigen::Index batch = x.cols() / len;
        Mat<S> y(rows, batch * len * 2);
        const S a = S(0.75), b = S(0.25);
        for (Eigen::Index s = 0; s < batch; ++s) {
            const Eigen::Index in = s * len, out = s * len * 2;
            for (int i = 0; i < len; ++i) {
                y.col(out + 2 * i) = (i == 0) ? x.col(in).eval() : (a * x.col(in + i) + b * x.col(in + i - 1)).eval();
                y.col(out + 2 * i + 1) = (i == len - 1) ? x.col(in + i).eval() : (a * x.col(in + i) + b * x.col(in + i + 1)).eval();
            }
        }
        if (cache) len_ = len;
        return y;
    }

    Mat<S> backward(const Mat<S>& dy) const {
        const Eigen::Index rows = dy.rows();
        const int len = len_;
        const Eigen::Index batch = dy.cols() / (2 * len);
        Mat<S> dx = Mat<S>::Zero(rows, batch * len);
        const S a = S(0.75), b = S(0.25);
        for (Eigen::Index s = 0; s < batch; ++s) {
            const Eigen::Index in = s * len, out = s * len * 2;
            for (int i = 0; i < len; ++i) {
                if (i == 0) {
                    dx.col(in) += dy.col(out);
                } else {
                    dx.col(in + i) += a * dy.col(out + 2 * i);
                    dx.col(in + i - 1) += b * dy.col(out + 2 * i);
                }
                if (i == len - 1) {
                    dx.col(in + i) += dy.col(out + 2 * i + 1);
                } else {
                    dx.col(in + i) += a * dy.col(out + 2 * i + 1);
                    dx.col(in + i + 1) += b * dy.col(out + 2 * i + 1);
                }
            }
        }
        return dx;
    }

  private:
    int len_ = 0;
};

/// Multi-head self-attention over the positions of each sample block, with a
/// residual connection around the attended value. Queries, keys and values
/// come from per-channel affine maps; softmax runs over key positions.
template <typename S>
class SelfAttention {
  public:
    SelfAttention() = default;
    SelfAttention(int channels, int heads, Rng& rng)
        : channels_(channels), heads_(heads), wq_(channels, channels, rng), wk_(channels, channels, rng), wv_(channels, channels, rng), wo_(channels, channels, rng) {
        require(channels % heads == 0, "attention: channels not divisible by heads");
    }

    Mat<S> forward(const Mat<S>& x, int len, bool cache) {
        const Eigen::Index batch = x.cols() / len;
        const int dh = channels_ / heads_;
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
        Mat<S> q = wq_.forward(x, cache);
        Mat<S> k = wk_.forward(x, cache);
        Mat<S> v = wv_.forward(x, cache);
        Mat<S> attended(channels_, x.cols());
        if (cache) {
            weights_.assign(static_cast<size_t>(batch * heads_), Mat<S>());
            len_ = len;
        }
        for (Eigen::Index s = 0; s < batch; ++s) {
            const Eigen::Index o = s * len;
            for (int h = 0; h < heads_; ++h) {
                const int r = h * dh;
                auto qh = q.block(r, o, dh, len);
                auto kh = k.block(r, o, dh, len);
                auto vh = v.block(r, o, dh, len);
                Mat<S> scores = (qh.transpose() * kh) * scale;
                softmax_rows(scores);
                attended.block(r, o, dh, len) = vh * scores.transpose();
                if (cache) weights_[static_cast<size_t>(s * heads_ + h)] = std::move(scores);
            }
        }
        if (cache) {
            q_ = std::move(q);
            k_ = std::move(k);
            v_ = std::move(v);
        }
        return x + wo_.forward(attended, cache);
    }

    Mat<S> backward(const Mat<S>& dy) {
        const int len = len_;
        const Eigen::Index batch = dy.cols() / len;
        const int dh = channels_ / heads_;
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
        Mat<S> dattended = wo_.backward(dy);
        Mat<S> dq = Mat<S>::Zero(channels_, dy.cols());
        Mat<S> dk = Mat<S>::Zero(channels_, dy.cols());
        Mat<S> dv = Mat<S>::Zero(channels_, dy.cols());
        for (Eigen::Index s = 0; s < batch; ++s) {
            const Eigen::Index o = s * len;
            for (int h = 0; h < heads_; ++h) {
                const int r = h * dh;
                const Mat<S>& a = weights_[static_cast<size_t>(s * heads_ + h)];
                auto dah = dattended.block(r, o, dh, len);
                auto qh = q_.block(r, o, dh, len);
                auto kh = k_.block(r, o, dh, len);
                auto vh = v_.block(r, o, dh, len);
                dv.block(r, o, dh, len) = dah * a;
                Mat<S> da = dah.transpose() * vh;
                Mat<S> ds(len, len);
                for (int i = 0; i < len; ++i) {
                    const S dot = da.row(i).dot(a.row(i));
                    ds.row(i) = a.row(i).cwiseProduct((da.row(i).array() - dot).matrix());
                }
                ds *= scale;
                dq.block(r, o, dh, len) = kh * ds.transpose();
                dk.block(r, o, dh, len) = qh * ds;
            }
        }
        return dy + wq_.backward(dq) + wk_.backward(dk) + wv_.backward(dv);
    }

    void collect(const std::string& prefix, std::vector<ParamView<S>>& out) {
        wq_.collect(prefix + ".q", out);
        wk_.collect(prefix + ".k", out);
        wv_.collect(prefix + ".v", out);
        wo_.collect(prefix + ".o", out);
    }

  private:
    static void softmax_rows(Mat<S>& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const S mx = m.row(i).maxCoeff();
            m.row(i) = (m.row(i).array() - mx).exp();
            m.row(i) /= m.row(i).sum();
        }
    }

    int channels_ = 0, heads_ = 0;
    Dense<S> wq_, wk_, wv_, wo_;
    Mat<S> q_, k_, v_;
    std::vector<Mat<S>> weights_;
    int len_ = 0;
};

/// Network hyperparameters. level_channels lists the encoder widths per
/// resolution level, coarsest last (that entry is the bridge width).
struct DenoiserConfig {
    int in_channels = 2;
    std::vector<int> level_channels = {32, 64, 128};
    int attention_heads = 4;
    int embed_dim = 256;
    int prompt_len = 8;
    int seq_len = 32;
    int attention_levels = 2;  // coarsest levels carrying attention, -1 = all

    int num_levels() const { return static_cast<int>(level_channels.size()); }

    bool level_has_attention(int level) const {
        if (attention_levels < 0) return true;
        return level >= num_levels() - attention_levels;
    }

    void validate() const {
        require(in_channels >= 1, "denoiser config: in_channels < 1");
        require(num_levels() >= 2, "denoiser config: need at least 2 levels");
        for (int c : level_channels) require(c >= 1, "denoiser config: non-positive channel count");
        require(embed_dim >= 2 && embed_dim % 2 == 0, "denoiser config: embed_dim must be even");
        require(prompt_len >= 1, "denoiser config: prompt_len < 1");
        require(attention_heads >= 1, "denoiser config: attention_heads < 1");
        const int factor = 1 << (num_levels() - 1);
        if (seq_len % factor != 0) {
            throw ConfigError("denoiser config: seq_len " + std::to_string(seq_len) + " not divisible by " + std::to_string(factor));
        }
        for (int l = 0; l < num_levels(); ++l) {
            if (level_has_attention(l) && level_channels[static_cast<size_t>(l)] % attention_heads != 0) {
                throw ConfigError("denoiser config: level " + std::to_string(l) + " channels not divisible by heads");
            }
        }
    }

    json to_json() const {
        return json{{"in_channels", in_channels}, {"level_channels", level_channels}, {"attention_heads", attention_heads},
                    {"embed_dim", embed_dim},     {"prompt_len", prompt_len},         {"seq_len", seq_len},
                    {"attention_levels", attention_levels}};
    }

    static DenoiserConfig from_json(const json& j) {
        DenoiserConfig c;
        c.in_channels = j.at("in_channels").get<int>();
        c.level_channels = j.at("level_channels").get<std::vector<int>>();
        c.attention_heads = j.at("attention_heads").get<int>();
        c.embed_dim = j.at("embed_dim").get<int>();
        c.prompt_len = j.at("prompt_len").get<int>();
        c.seq_len = j.at("seq_len").get<int>();
        c.attention_levels = j.at("attention_levels").get<int>();
        c.validate();
        return c;
    }
};

/// Sinusoidal step encoding: v[2i] = sin(t / 10000^(2i/D)), v[2i+1] = cos of
/// the same argument.
template <typename S>
Vec<S> time_embedding(int t, int embed_dim) {
    require(t >= 0, "time_embedding: negative t");
    require(embed_dim >= 2 && embed_dim % 2 == 0, "time_embedding: embed_dim must be even");
    Vec<S> v(embed_dim);
    for (int i = 0; i < embed_dim / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / embed_dim);
        v[2 * i] = static_cast<S>(std::sin(t * freq));
        v[2 * i + 1] = static_cast<S>(std::cos(t * freq));
    }
    return v;
}

/// One resolution stage: pre-activation double conv with a residual bypass,
/// a per-sample embedding bias broadcast along the length axis, and optional
/// self-attention.
template <typename S>
class ConvBlock {
  public:
    ConvBlock() = default;
    ConvBlock(int in_ch, int out_ch, int embed_dim, bool attention, int heads, Rng& rng)
        : conv1_(in_ch, out_ch, 3, rng), conv2_(out_ch, out_ch, 3, rng), emb_proj_(embed_dim, out_ch, rng) {
        if (in_ch != out_ch) res_proj_.emplace(in_ch, out_ch, 1, rng);
        if (attention) attn_.emplace(out_ch, heads, rng);
    }

    Mat<S> forward(const Mat<S>& x, const Mat<S>& emb, int len, bool cache) {
        if (cache) len_ = len;
        Mat<S> y = conv2_.forward(act2_.forward(conv1_.forward(act1_.forward(x, cache), len, cache), cache), len, cache);
        y += res_proj_ ? res_proj_->forward(x, len, cache) : x;
        Mat<S> bias = emb_proj_.forward(emb, cache);
        const Eigen::Index batch = emb.cols();
        for (Eigen::Index s = 0; s < batch; ++s) {
            y.middleCols(s * len, len).colwise() += bias.col(s);
        }
        if (attn_) y = attn_->forward(y, len, cache);
        return y;
    }

    /// Returns the input gradient; the embedding gradient accumulates into demb.
    Mat<S> backward(const Mat<S>& dy_in, Mat<S>& demb) {
        Mat<S> dy = attn_ ? attn_->backward(dy_in) : dy_in;
        const Eigen::Index batch = demb.cols();
        Mat<S> dbias(dy.rows(), batch);
        for (Eigen::Index s = 0; s < batch; ++s) {
            dbias.col(s) = dy.middleCols(s * len_, len_).rowwise().sum();
        }
        demb += emb_proj_.backward(dbias);
        Mat<S> dx = act1_.backward(conv1_.backward(act2_.backward(conv2_.backward(dy))));
        dx += res_proj_ ? res_proj_->backward(dy) : dy;
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamView<S>>& out) {
        conv1_.collect(prefix + ".conv1", out);
        conv2_.collect(prefix + ".conv2", out);
        if (res_proj_) res_proj_->collect(prefix + ".res", out);
        emb_proj_.collect(prefix + ".emb", out);
        if (attn_) attn_->collect(prefix + ".attn", out);
    }

  private:
    Conv1d<S> conv1_, conv2_;
    std::optional<Conv1d<S>> res_proj_;
    Dense<S> emb_proj_;
    std::optional<SelfAttention<S>> attn_;
    Gelu<S> act1_, act2_;
    int len_ = 0;
};

/// Conditional noise predictor: a 1D U-Net over 2-channel sequences. The
/// encoder halves the length per level via max pooling; the decoder doubles it
/// via linear interpolation and concatenates the matching encoder output.
/// Each stage receives the fused (time + prompt) embedding. The output conv
/// starts at zero so the untrained net predicts zero noise.
template <typename S>
class UNet1d {
  public:
    explicit UNet1d(DenoiserConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
        cfg_.validate();
        const int k = cfg_.num_levels();
        const auto& ch = cfg_.level_channels;
        cond_fc1_ = Dense<S>(cfg_.prompt_len, cfg_.embed_dim, rng);
        cond_fc2_ = Dense<S>(cfg_.embed_dim, cfg_.embed_dim, rng);
        enc_.reserve(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) {
            const int in_ch = (i == 0) ? cfg_.in_channels : ch[static_cast<size_t>(i - 1)];
            enc_.emplace_back(in_ch, ch[static_cast<size_t>(i)], cfg_.embed_dim, cfg_.level_has_attention(i), cfg_.attention_heads, rng);
        }
        pools_.resize(static_cast<size_t>(k - 1));
        ups_.resize(static_cast<size_t>(k - 1));
        dec_.reserve(static_cast<size_t>(k - 1));
        for (int j = k - 2; j >= 0; --j) {
            const int in_ch = ch[static_cast<size_t>(j + 1)] + ch[static_cast<size_t>(j)];
            dec_.emplace_back(in_ch, ch[static_cast<size_t>(j)], cfg_.embed_dim, cfg_.level_has_attention(j), cfg_.attention_heads, rng);
        }
        out_conv_ = Conv1d<S>(ch.front(), cfg_.in_channels, 1, rng);
        out_conv_.zero_weights();
        build_registry();
    }

    // the registry points into member storage
    UNet1d(const UNet1d&) = delete;
    UNet1d& operator=(const UNet1d&) = delete;

    const DenoiserConfig& config() const { return cfg_; }

    /// x: in_channels x (batch * seq_len); t: one step per sample; prompts:
    /// prompt_len x batch. Returns the predicted noise, same shape as x.
    Mat<S> forward(const Mat<S>& x, const std::vector<int>& t, const Mat<S>& prompts, bool cache = false) {
        const int n = cfg_.seq_len;
        if (x.rows() != cfg_.in_channels || x.cols() % n != 0) {
            throw DimensionError("denoiser forward: input shape mismatch");
        }
        const Eigen::Index batch = x.cols() / n;
        if (static_cast<Eigen::Index>(t.size()) != batch) {
            throw DimensionError("denoiser forward: t count != batch");
        }
        if (prompts.rows() != cfg_.prompt_len || prompts.cols() != batch) {
            throw DimensionError("denoiser forward: prompt shape mismatch (expected " + std::to_string(cfg_.prompt_len) + " x " +
                                 std::to_string(batch) + ", got " + std::to_string(prompts.rows()) + " x " + std::to_string(prompts.cols()) + ")");
        }
        Mat<S> temb(cfg_.embed_dim, batch);
        for (Eigen::Index s = 0; s < batch; ++s) {
            temb.col(s) = time_embedding<S>(t[static_cast<size_t>(s)], cfg_.embed_dim);
        }
        Mat<S> emb = temb + cond_fc2_.forward(cond_act_.forward(cond_fc1_.forward(prompts, cache), cache), cache);
        if (cache) batch_ = batch;

        const int k = cfg_.num_levels();
        std::vector<Mat<S>> skips;
        skips.reserve(static_cast<size_t>(k - 1));
        int len = n;
        Mat<S> h = enc_[0].forward(x, emb, len, cache);
        for (int i = 1; i < k; ++i) {
            skips.push_back(h);
            h = pools_[static_cast<size_t>(i - 1)].forward(h, len, cache);
            len /= 2;
            h = enc_[static_cast<size_t>(i)].forward(h, emb, len, cache);
        }
        for (int j = k - 2; j >= 0; --j) {
            auto& up = ups_[static_cast<size_t>(j)];
            h = up.forward(h, len, cache);
            len *= 2;
            const Mat<S>& skip = skips[static_cast<size_t>(j)];
            Mat<S> hc(h.rows() + skip.rows(), h.cols());
            hc.topRows(h.rows()) = h;
            hc.bottomRows(skip.rows()) = skip;
            h = dec_[static_cast<size_t>(k - 2 - j)].forward(hc, emb, len, cache);
        }
        return out_conv_.forward(h, len, cache);
    }

    /// Backward for the last cached forward; dout matches the forward output.
    /// Accumulates into parameter gradients and returns the input gradient.
    Mat<S> backward(const Mat<S>& dout) {
        const int k = cfg_.num_levels();
        Mat<S> demb = Mat<S>::Zero(cfg_.embed_dim, batch_);
        Mat<S> dh = out_conv_.backward(dout);
        std::vector<Mat<S>> dskips(static_cast<size_t>(k - 1));
        for (int j = 0; j <= k - 2; ++j) {
            Mat<S> dhc = dec_[static_cast<size_t>(k - 2 - j)].backward(dh, demb);
            const int up_ch = cfg_.level_channels[static_cast<size_t>(j + 1)];
            const int skip_ch = cfg_.level_channels[static_cast<size_t>(j)];
            dskips[static_cast<size_t>(j)] = dhc.bottomRows(skip_ch);
            dh = ups_[static_cast<size_t>(j)].backward(dhc.topRows(up_ch));
        }
        for (int i = k - 1; i >= 1; --i) {
            dh = enc_[static_cast<size_t>(i)].backward(dh, demb);
            dh = pools_[static_cast<size_t>(i - 1)].backward(dh);
            dh += dskips[static_cast<size_t>(i - 1)];
        }
        Mat<S> dx = enc_[0].backward(dh, demb);
        cond_fc1_.backward(cond_act_.backward(cond_fc2_.backward(demb)));
        return dx;
    }

    /// Embedding of one normalized prompt through the condition MLP.
    Vec<S> condition_embedding(const Vec<S>& c) {
        if (c.size() != cfg_.prompt_len) {
            throw DimensionError("condition_embedding: prompt length " + std::to_string(c.size()) + " != " + std::to_string(cfg_.prompt_len));
        }
        Mat<S> col = c;
        return cond_fc2_.forward(cond_act_.forward(cond_fc1_.forward(col, false), false), false).col(0);
    }

    std::vector<ParamView<S>>& params() { return registry_; }

    void zero_grad() {
        for (auto& p : registry_) p.grad->setZero();
    }

    int64_t num_params() const {
        int64_t n = 0;
        for (const auto& p : registry_) n += p.value->size();
        return n;
    }

    double grad_norm() const {
        double sq = 0.0;
        for (const auto& p : registry_) sq += static_cast<double>(p.grad->template cast<double>().squaredNorm());
        return std::sqrt(sq);
    }

    /// Copies parameter values from another instance with the same config.
    template <typename S2>
    void copy_params_from(UNet1d<S2>& other) {
        auto& theirs = other.params();
        require(theirs.size() == registry_.size(), "copy_params_from: registry size mismatch");
        for (size_t i = 0; i < registry_.size(); ++i) {
            require(theirs[i].name == registry_[i].name, "copy_params_from: registry name mismatch");
            *registry_[i].value = theirs[i].value->template cast<S>();
        }
    }

  private:
    void build_registry() {
        cond_fc1_.collect("cond.fc1", registry_);
        cond_fc2_.collect("cond.fc2", registry_);
        for (size_t i = 0; i < enc_.size(); ++i) {
            enc_[i].collect("enc" + std::to_string(i), registry_);
        }
        const int k = cfg_.num_levels();
        for (size_t d = 0; d < dec_.size(); ++d) {
            dec_[d].collect("dec" + std::to_string(k - 2 - static_cast<int>(d)), registry_);
        }
        out_conv_.collect("out", registry_);
    }

    DenoiserConfig cfg_;
    Dense<S> cond_fc1_, cond_fc2_;
    Gelu<S> cond_act_;
    std::vector<ConvBlock<S>> enc_;
    std::vector<ConvBlock<S>> dec_;  // index d handles level k-2-d
    std::vector<MaxPool1d<S>> pools_;
    std::vector<Upsample1d<S>> ups_;
    Conv1d<S> out_conv_;
    std::vector<ParamView<S>> registry_;
    Eigen::Index batch_ = 0;
};

}  // namespace bbs::denoiser
