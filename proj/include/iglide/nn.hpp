#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "iglide/data.hpp"
#include "iglide/errors.hpp"
#include "iglide/rng.hpp"

namespace iglide {

enum class Activation { relu, identity };

/// Forward-pass mode. Dropout masks are drawn in `train` and `mc_dropout`
/// and disabled in `eval`; the two active modes differ only in what the
/// caller does with the results.
enum class Mode { train, eval, mc_dropout };

inline bool dropout_active(Mode m) { return m != Mode::eval; }

struct DenseLayer {
    Mat W;  // out x in
    Vec b;  // out
    Activation act = Activation::relu;
    double dropout_p = 0.0;

    int in_dim() const { return static_cast<int>(W.cols()); }
    int out_dim() const { return static_cast<int>(W.rows()); }
};

/// He-uniform initialization, U[-sqrt(6/fan_in), +sqrt(6/fan_in)], zero bias.
/// Weights are drawn row-major so layouts are reproducible for a given stream.
inline DenseLayer make_layer(int in, int out, Activation act, double dropout_p,
                             RngStream& rng) {
    if (in < 1 || out < 1) throw ShapeError("make_layer: dims must be positive");
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
        throw ConfigError("dropout probability must lie in [0, 1)");
    }
    DenseLayer l;
    l.W.resize(out, in);
    l.b = Vec::Zero(out);
    l.act = act;
    l.dropout_p = dropout_p;
    const double limit = std::sqrt(6.0 / in);
    for (int i = 0; i < out; ++i) {
        for (int j = 0; j < in; ++j) l.W(i, j) = rng.uniform_in(-limit, limit);
    }
    return l;
}

struct DenseNet {
    std::vector<DenseLayer> layers;

    int in_dim() const { return layers.front().in_dim(); }
    int out_dim() const { return layers.back().out_dim(); }

    bool has_dropout() const {
        for (const auto& l : layers) {
            if (l.dropout_p > 0.0) return true;
        }
        return false;
    }
};

struct LayerTrace {
    Mat a;     // post-activation, batch x out
    Mat mask;  // inverted-dropout scale factors; empty when inactive
};

struct ForwardTrace {
    Mat input;
    std::vector<LayerTrace> layers;

    const Mat& output() const { return layers.back().a; }
};

/// Batched forward pass. Per layer: linear, then inverted dropout, then
/// activation — masks zero a unit and rescale survivors by 1/(1-p), so eval
/// needs no compensation. `rng` is required whenever a mask would be drawn.
inline ForwardTrace forward(const DenseNet& net, const Mat& x, Mode mode,
                            RngStream* rng = nullptr) {
    if (net.layers.empty()) throw UsageError("forward on empty net");
    if (x.cols() != net.in_dim()) {
        throw ShapeError("forward: input width " + std::to_string(x.cols()) +
                         " != net input " + std::to_string(net.in_dim()));
    }
    ForwardTrace tr;
    tr.input = x;
    tr.layers.resize(net.layers.size());
    const Mat* cur = &tr.input;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& l = net.layers[li];
        auto& lt = tr.layers[li];
        Mat z = (*cur) * l.W.transpose();
        z.rowwise() += l.b.transpose();
        if (l.dropout_p > 0.0 && dropout_active(mode)) {
            if (!rng) throw UsageError("forward: dropout active but no rng supplied");
            const double keep_scale = 1.0 / (1.0 - l.dropout_p);
            lt.mask.resize(z.rows(), z.cols());
            for (Eigen::Index r = 0; r < z.rows(); ++r) {
                for (Eigen::Index c = 0; c < z.cols(); ++c) {
                    lt.mask(r, c) = (rng->uniform() < l.dropout_p) ? 0.0 : keep_scale;
                }
            }
            z.array() *= lt.mask.array();
        }
        if (l.act == Activation::relu) {
            lt.a = z.cwiseMax(0.0);
        } else {
            lt.a = std::move(z);
        }
        cur = &lt.a;
    }
    return tr;
}

struct LayerGrads {
    Mat dW;
    Vec db;
};

struct NetGrads {
    std::vector<LayerGrads> layers;
    Mat dx;  // gradient w.r.t. the net input, batch x in
};

/// Backprop through a recorded forward pass. `dout` is dL/d(output), same
/// shape as the output; the trace must come from the same net and carries
/// the dropout masks so the backward pass matches the stochastic forward.
inline NetGrads backward(const DenseNet& net, const ForwardTrace& tr, const Mat& dout) {
    if (tr.layers.size() != net.layers.size()) {
        throw UsageError("backward: trace does not match net");
    }
    NetGrads g;
    g.layers.resize(net.layers.size());
    Mat da = dout;
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const auto& l = net.layers[static_cast<std::size_t>(li)];
        const auto& lt = tr.layers[static_cast<std::size_t>(li)];
        Mat dz;
        if (l.act == Activation::relu) {
            dz = (lt.a.array() > 0.0).select(da, Mat::Zero(da.rows(), da.cols()));
        } else {
            dz = std::move(da);
        }
        if (lt.mask.size() > 0) dz.array() *= lt.mask.array();
        const Mat& in = (li == 0) ? tr.input : tr.layers[static_cast<std::size_t>(li - 1)].a;
        auto& lg = g.layers[static_cast<std::size_t>(li)];
        lg.dW = dz.transpose() * in;
        lg.db = dz.colwise().sum().transpose();
        da = dz * l.W;
    }
    g.dx = std::move(da);
    return g;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean squared error over every element of the batch.
inline double mse(const Mat& pred, const Mat& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw ShapeError("mse: shape mismatch");
    }
    return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

inline Mat mse_grad(const Mat& pred, const Mat& target) {
    return 2.0 / static_cast<double>(pred.size()) * (pred - target);
}

/// KL(q(z|x) || N(0, I)) for a diagonal Gaussian posterior, averaged over the
/// batch: mean of 0.5 * sum(exp(lv) + mu^2 - 1 - lv) per row.
inline double kl_divergence(const Mat& mu, const Mat& logvar) {
    if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
        throw ShapeError("kl_divergence: shape mismatch");
    }
    const double total =
        0.5 * (logvar.array().exp() + mu.array().square() - 1.0 - logvar.array()).sum();
    return total / static_cast<double>(mu.rows());
}

struct KlGrads {
    Mat dmu;
    Mat dlogvar;
};

inline KlGrads kl_backward(const Mat& mu, const Mat& logvar) {
    const double inv_b = 1.0 / static_cast<double>(mu.rows());
    KlGrads g;
    g.dmu = mu * inv_b;
    g.dlogvar = 0.5 * inv_b * (logvar.array().exp() - 1.0);
    return g;
}

/// z = mu + exp(logvar/2) * eps with eps ~ N(0, I). The drawn eps is written
/// to `eps_out` when given so gradients can be pushed back through the draw:
/// dz/dmu = 1, dz/dlogvar = (z - mu) / 2.
inline Mat reparameterize(const Mat& mu, const Mat& logvar, RngStream& rng,
                          Mat* eps_out = nullptr) {
    if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
        throw ShapeError("reparameterize: shape mismatch");
    }
    Mat eps(mu.rows(), mu.cols());
    for (Eigen::Index r = 0; r < eps.rows(); ++r) {
        for (Eigen::Index c = 0; c < eps.cols(); ++c) eps(r, c) = rng.normal();
    }
    Mat z = mu.array() + (logvar.array() / 2.0).exp() * eps.array();
    if (eps_out) *eps_out = eps;
    return z;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamParamState {
    Mat mW, vW;
    Vec mb, vb;
};

struct AdamState {
    std::vector<AdamParamState> layers;
    long t = 0;

    static AdamState for_net(const DenseNet& net) {
        AdamState st;
        st.layers.reserve(net.layers.size());
        for (const auto& l : net.layers) {
            AdamParamState p;
            p.mW = Mat::Zero(l.W.rows(), l.W.cols());
            p.vW = Mat::Zero(l.W.rows(), l.W.cols());
            p.mb = Vec::Zero(l.b.size());
            p.vb = Vec::Zero(l.b.size());
            st.layers.push_back(std::move(p));
        }
        return st;
    }
};

/// One Adam update with explicit bias correction:
///   m_t = b1 m + (1-b1) g,  v_t = b2 v + (1-b2) g^2
///   w  -= lr * (m_t / (1-b1^t)) / (sqrt(v_t / (1-b2^t)) + eps)
inline void adam_step(DenseNet& net, const std::vector<LayerGrads>& grads,
                      AdamState& st, const AdamConfig& cfg) {
    if (grads.size() != net.layers.size() || st.layers.size() != net.layers.size()) {
        throw UsageError("adam_step: state/grads do not match net");
    }
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        auto& l = net.layers[i];
        auto& p = st.layers[i];
        const auto& g = grads[i];
        p.mW = cfg.beta1 * p.mW + (1.0 - cfg.beta1) * g.dW;
        p.vW = cfg.beta2 * p.vW.array().matrix() +
               (1.0 - cfg.beta2) * g.dW.array().square().matrix();
        p.mb = cfg.beta1 * p.mb + (1.0 - cfg.beta1) * g.db;
        p.vb = cfg.beta2 * p.vb.array().matrix() +
               (1.0 - cfg.beta2) * g.db.array().square().matrix();
        l.W.array() -= cfg.lr * (p.mW.array() / bc1) / ((p.vW.array() / bc2).sqrt() + cfg.eps);
        l.b.array() -= cfg.lr * (p.mb.array() / bc1) / ((p.vb.array() / bc2).sqrt() + cfg.eps);
    }
}

}  // namespace iglide
