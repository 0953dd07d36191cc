#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "iglide/data.hpp"
#include "iglide/nn.hpp"
#include "iglide/rng.hpp"

namespace iglide {

enum class Variant { ae, vae };

inline std::string to_string(Variant v) { return v == Variant::ae ? "ae" : "vae"; }

inline Variant variant_from_string(const std::string& s) {
    if (s == "ae") return Variant::ae;
    if (s == "vae") return Variant::vae;
    throw ConfigError("unknown variant: " + s);
}

struct ModelConfig {
    int latent_dim = 2;
    double dropout = 0.2;
    double beta = 1.0;  // KL weight (VAE objective)
    int batch_size = 128;
    int epochs = 200;
    int window_size = 1;
    double test_size = 0.3;  // validation fraction, monitoring only
    std::uint64_t seed = 0;
    AdamConfig adam{};

    void validate() const {
        if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
        if (beta < 0.0) throw ConfigError("beta must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (window_size != 1) {
            throw ConfigError("window_size " + std::to_string(window_size) +
                              " unsupported: only single-timestep inputs are implemented");
        }
        if (test_size < 0.0 || test_size >= 1.0) throw ConfigError("test_size must lie in [0, 1)");
    }
};

/// Multi-head autoencoder: one encoder/decoder per sensor group, fused
/// through a shared latent space. A single group over all channels gives
/// the monolithic shape. Every decoder receives the full fused latent.
struct AutoencoderModel {
    Variant variant = Variant::ae;
    GroupSpec spec;
    int input_dim = 0;
    int latent_dim = 0;
    std::vector<DenseNet> encoders;  // per group: dim_g -> 10 -> 20 -> 10, ReLU
    DenseNet fusion;                 // AE: 10*|G| -> latent, linear
    DenseNet mu_head;                // VAE heads, same shape as fusion
    DenseNet logvar_head;
    std::vector<DenseNet> decoders;  // latent -> 10 -> 20 -> 10 -> dim_g

    int n_groups() const { return spec.n_groups(); }
    int fused_width() const { return 10 * spec.n_groups(); }
};

/// Construct the model with seeded He-uniform weights. Draw order is fixed
/// (encoders in group order, fusion/heads, decoders in group order) so a
/// seed pins every parameter.
inline AutoencoderModel build_model(const GroupSpec& spec, int n_channels,
                                    const ModelConfig& cfg, Variant variant) {
    cfg.validate();
    spec.validate(n_channels);
    if (spec.total_width() != n_channels) {
        throw SpecError("groups cover " + std::to_string(spec.total_width()) + " of " +
                        std::to_string(n_channels) + " channels; the model needs full coverage");
    }
    RngStream rng(derive_seed(cfg.seed, 0x6d6f64656cULL));  // independent init stream

    AutoencoderModel m;
    m.variant = variant;
    m.spec = spec;
    m.input_dim = n_channels;
    m.latent_dim = cfg.latent_dim;

    for (int g = 0; g < spec.n_groups(); ++g) {
        const int w = spec.width(g);
        DenseNet enc;
        enc.layers.push_back(make_layer(w, 10, Activation::relu, 0.0, rng));
        enc.layers.push_back(make_layer(10, 20, Activation::relu, 0.0, rng));
        enc.layers.push_back(make_layer(20, 10, Activation::relu, 0.0, rng));
        m.encoders.push_back(std::move(enc));
    }
    const int fw = m.fused_width();
    if (variant == Variant::ae) {
        m.fusion.layers.push_back(make_layer(fw, cfg.latent_dim, Activation::identity, 0.0, rng));
    } else {
        m.mu_head.layers.push_back(make_layer(fw, cfg.latent_dim, Activation::identity, 0.0, rng));
        m.logvar_head.layers.push_back(make_layer(fw, cfg.latent_dim, Activation::identity, 0.0, rng));
    }
    for (int g = 0; g < spec.n_groups(); ++g) {
        const int w = spec.width(g);
        DenseNet dec;
        dec.layers.push_back(make_layer(cfg.latent_dim, 10, Activation::relu, cfg.dropout, rng));
        dec.layers.push_back(make_layer(10, 20, Activation::relu, cfg.dropout, rng));
        dec.layers.push_back(make_layer(20, 10, Activation::relu, cfg.dropout, rng));
        dec.layers.push_back(make_layer(10, w, Activation::identity, 0.0, rng));
        m.decoders.push_back(std::move(dec));
    }
    return m;
}

struct ModelForward {
    std::vector<ForwardTrace> enc;  // per group
    ForwardTrace latent_trace;      // fusion (AE) or mu head (VAE)
    ForwardTrace logvar_trace;      // VAE only
    Mat mu, logvar;                 // VAE only, batch x latent
    Mat z;                          // fused latent actually fed to decoders
    std::vector<ForwardTrace> dec;  // per group
    Mat xhat;                       // batch x input_dim, original channel layout
};

/// Full forward pass. The reconstruction keeps the input's channel layout:
/// each decoder writes its group's channel positions, so x - xhat is
/// meaningful columnwise. In eval mode the VAE substitutes z = mu.
inline ModelForward model_forward(const AutoencoderModel& m, const Mat& x, Mode mode,
                                  RngStream* rng = nullptr) {
    if (x.cols() != m.input_dim) {
        throw ShapeError("model_forward: input width " + std::to_string(x.cols()) +
                         " != model input " + std::to_string(m.input_dim));
    }
    const Eigen::Index B = x.rows();
    ModelForward f;
    f.enc.reserve(static_cast<std::size_t>(m.n_groups()));
    Mat H(B, m.fused_width());
    for (int g = 0; g < m.n_groups(); ++g) {
        const auto& chans = m.spec.channels(g);
        Mat part(B, static_cast<Eigen::Index>(chans.size()));
        for (std::size_t j = 0; j < chans.size(); ++j) {
            part.col(static_cast<Eigen::Index>(j)) = x.col(chans[j]);
        }
        f.enc.push_back(forward(m.encoders[static_cast<std::size_t>(g)], part, mode, rng));
        H.middleCols(10 * g, 10) = f.enc.back().output();
    }
    if (m.variant == Variant::ae) {
        f.latent_trace = forward(m.fusion, H, mode, rng);
        f.z = f.latent_trace.output();
    } else {
        f.latent_trace = forward(m.mu_head, H, mode, rng);
        f.logvar_trace = forward(m.logvar_head, H, mode, rng);
        f.mu = f.latent_trace.output();
        f.logvar = f.logvar_trace.output();
        if (mode == Mode::eval) {
            f.z = f.mu;
        } else {
            if (!rng) throw UsageError("model_forward: VAE sampling needs an rng");
            f.z = reparameterize(f.mu, f.logvar, *rng);
        }
    }
    f.xhat.resize(B, m.input_dim);
    f.dec.reserve(static_cast<std::size_t>(m.n_groups()));
    for (int g = 0; g < m.n_groups(); ++g) {
        f.dec.push_back(forward(m.decoders[static_cast<std::size_t>(g)], f.z, mode, rng));
        const auto& chans = m.spec.channels(g);
        const Mat& out = f.dec.back().output();
        for (std::size_t j = 0; j < chans.size(); ++j) {
            f.xhat.col(chans[j]) = out.col(static_cast<Eigen::Index>(j));
        }
    }
    return f;
}

struct EncodeResult {
    std::vector<ForwardTrace> enc;
    Mat z;       // eval-mode latent (VAE: mu)
    Mat logvar;  // VAE only
};

/// Encoder half only, eval mode (no dropout, z = mu). Used when re-encoding
/// a reconstruction for pathway metrics.
inline EncodeResult encode_eval(const AutoencoderModel& m, const Mat& x) {
    if (x.cols() != m.input_dim) {
        throw ShapeError("encode_eval: input width mismatch");
    }
    const Eigen::Index B = x.rows();
    EncodeResult r;
    Mat H(B, m.fused_width());
    for (int g = 0; g < m.n_groups(); ++g) {
        const auto& chans = m.spec.channels(g);
        Mat part(B, static_cast<Eigen::Index>(chans.size()));
        for (std::size_t j = 0; j < chans.size(); ++j) {
            part.col(static_cast<Eigen::Index>(j)) = x.col(chans[j]);
        }
        r.enc.push_back(forward(m.encoders[static_cast<std::size_t>(g)], part, Mode::eval));
        H.middleCols(10 * g, 10) = r.enc.back().output();
    }
    if (m.variant == Variant::ae) {
        r.z = forward(m.fusion, H, Mode::eval).output();
    } else {
        r.z = forward(m.mu_head, H, Mode::eval).output();
        r.logvar = forward(m.logvar_head, H, Mode::eval).output();
    }
    return r;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochStats {
    double train_loss = 0.0;  // full objective on training batches
    double val_loss = 0.0;    // same objective on the held-out split, eval mode
    double kl = 0.0;          // training KL term (0 for AE)
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

namespace detail {

struct ModelOptimizer {
    std::vector<AdamState> enc, dec;
    AdamState fusion, mu, lv;

    static ModelOptimizer for_model(const AutoencoderModel& m) {
        ModelOptimizer o;
        for (const auto& e : m.encoders) o.enc.push_back(AdamState::for_net(e));
        for (const auto& d : m.decoders) o.dec.push_back(AdamState::for_net(d));
        if (m.variant == Variant::ae) {
            o.fusion = AdamState::for_net(m.fusion);
        } else {
            o.mu = AdamState::for_net(m.mu_head);
            o.lv = AdamState::for_net(m.logvar_head);
        }
        return o;
    }
};

struct ModelGrads {
    std::vector<std::vector<LayerGrads>> enc, dec;  // per group, per layer
    std::vector<LayerGrads> fusion, mu, lv;         // empty when the net is unused
    double loss = 0.0;
    double kl = 0.0;
};

/// Gradients of the training objective (MSE, plus beta-weighted KL for the
/// VAE) for one batch in train mode. Pure: the model is not modified.
inline ModelGrads compute_grads(const AutoencoderModel& m, const Mat& xb, double beta,
                                RngStream& rng) {
    ModelForward f = model_forward(m, xb, Mode::train, &rng);
    ModelGrads out;
    const double rec = mse(f.xhat, xb);
    if (m.variant == Variant::vae) out.kl = kl_divergence(f.mu, f.logvar);
    out.loss = rec + beta * out.kl;

    Mat dxhat = mse_grad(f.xhat, xb);
    Mat dz = Mat::Zero(xb.rows(), m.latent_dim);
    out.dec.resize(static_cast<std::size_t>(m.n_groups()));
    out.enc.resize(static_cast<std::size_t>(m.n_groups()));
    for (int g = 0; g < m.n_groups(); ++g) {
        const auto& chans = m.spec.channels(g);
        Mat dout(xb.rows(), static_cast<Eigen::Index>(chans.size()));
        for (std::size_t j = 0; j < chans.size(); ++j) {
            dout.col(static_cast<Eigen::Index>(j)) = dxhat.col(chans[j]);
        }
        NetGrads gd = backward(m.decoders[static_cast<std::size_t>(g)],
                               f.dec[static_cast<std::size_t>(g)], dout);
        dz += gd.dx;
        out.dec[static_cast<std::size_t>(g)] = std::move(gd.layers);
    }

    Mat dH;
    if (m.variant == Variant::ae) {
        NetGrads gf = backward(m.fusion, f.latent_trace, dz);
        dH = std::move(gf.dx);
        out.fusion = std::move(gf.layers);
    } else {
        KlGrads kg = kl_backward(f.mu, f.logvar);
        // z = mu + exp(lv/2)*eps  =>  dz/dmu = 1, dz/dlv = (z - mu)/2
        Mat dmu = dz + beta * kg.dmu;
        Mat dlv = (dz.array() * (f.z - f.mu).array() / 2.0).matrix() + beta * kg.dlogvar;
        NetGrads gmu = backward(m.mu_head, f.latent_trace, dmu);
        NetGrads glv = backward(m.logvar_head, f.logvar_trace, dlv);
        dH = gmu.dx + glv.dx;
        out.mu = std::move(gmu.layers);
        out.lv = std::move(glv.layers);
    }

    for (int g = 0; g < m.n_groups(); ++g) {
        NetGrads ge = backward(m.encoders[static_cast<std::size_t>(g)],
                               f.enc[static_cast<std::size_t>(g)], dH.middleCols(10 * g, 10));
        out.enc[static_cast<std::size_t>(g)] = std::move(ge.layers);
    }
    return out;
}

/// One gradient step on a batch. Returns (objective, kl term).
inline std::pair<double, double> train_step(AutoencoderModel& m, const Mat& xb,
                                            const ModelConfig& cfg, ModelOptimizer& opt,
                                            RngStream& rng) {
    ModelGrads g = compute_grads(m, xb, cfg.beta, rng);
    for (int gi = 0; gi < m.n_groups(); ++gi) {
        const auto u = static_cast<std::size_t>(gi);
        adam_step(m.decoders[u], g.dec[u], opt.dec[u], cfg.adam);
        adam_step(m.encoders[u], g.enc[u], opt.enc[u], cfg.adam);
    }
    if (m.variant == Variant::ae) {
        adam_step(m.fusion, g.fusion, opt.fusion, cfg.adam);
    } else {
        adam_step(m.mu_head, g.mu, opt.mu, cfg.adam);
        adam_step(m.logvar_head, g.lv, opt.lv, cfg.adam);
    }
    return {g.loss, g.kl};
}

inline double eval_objective(const AutoencoderModel& m, const Mat& x, double beta) {
    ModelForward f = model_forward(m, x, Mode::eval);
    double loss = mse(f.xhat, x);
    if (m.variant == Variant::vae) loss += beta * kl_divergence(f.mu, f.logvar);
    return loss;
}

}  // namespace detail

/// Train on normalized healthy samples. A seeded shuffle carves a held-out
/// validation fraction (monitoring only — no early stopping); each epoch
/// re-shuffles the training rows, final short batches are kept. Non-finite
/// loss aborts with the epoch named.
inline TrainHistory train_model(AutoencoderModel& m, const Mat& healthy,
                                const ModelConfig& cfg, RngStream& rng) {
    cfg.validate();
    const Eigen::Index n = healthy.rows();
    if (n < 1) throw FitError("train_model: empty training set");
    if (healthy.cols() != m.input_dim) throw ShapeError("train_model: width mismatch");

    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng.shuffle(idx);
    Eigen::Index n_val = 0;
    if (cfg.test_size > 0.0 && n >= 2) {
        n_val = std::max<Eigen::Index>(
            1, static_cast<Eigen::Index>(std::floor(cfg.test_size * static_cast<double>(n))));
    }
    const Eigen::Index n_train = n - n_val;
    if (n_train < 1) throw FitError("train_model: validation split leaves no training rows");

    std::vector<Eigen::Index> train_idx(idx.begin(), idx.begin() + n_train);
    Mat val(n_val, m.input_dim);
    for (Eigen::Index i = 0; i < n_val; ++i) {
        val.row(i) = healthy.row(idx[static_cast<std::size_t>(n_train + i)]);
    }

    auto opt = detail::ModelOptimizer::for_model(m);
    TrainHistory hist;
    hist.epochs.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(train_idx);
        double loss_sum = 0.0, kl_sum = 0.0;
        for (Eigen::Index start = 0; start < n_train; start += cfg.batch_size) {
            const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n_train - start);
            Mat xb(bs, m.input_dim);
            for (Eigen::Index i = 0; i < bs; ++i) {
                xb.row(i) = healthy.row(train_idx[static_cast<std::size_t>(start + i)]);
            }
            auto [loss, kl] = detail::train_step(m, xb, cfg, opt, rng);
            if (!std::isfinite(loss)) {
                throw FitError("training diverged at epoch " + std::to_string(epoch + 1) +
                               " (loss not finite)");
            }
            loss_sum += loss * static_cast<double>(bs);
            kl_sum += kl * static_cast<double>(bs);
        }
        EpochStats st;
        st.train_loss = loss_sum / static_cast<double>(n_train);
        st.kl = kl_sum / static_cast<double>(n_train);
        st.val_loss = (n_val > 0) ? detail::eval_objective(m, val, cfg.beta) : st.train_loss;
        hist.epochs.push_back(st);
    }
    return hist;
}

}  // namespace iglide
