#pragma once

#include <string>
#include <vector>

#include "iglide/model.hpp"

namespace iglide {

struct UqConfig {
    int n_samples = 50;

    void validate() const {
        if (n_samples < 2) throw ConfigError("uq n_samples must be >= 2");
    }
};

/// Per-group scalar reconstruction error for a batch: ||x_g - xhat_g||_2.
inline Vec recon_error(const Mat& x, const Mat& xhat, const std::vector<int>& channels) {
    if (x.rows() != xhat.rows()) throw ShapeError("recon_error: row mismatch");
    Mat d(x.rows(), static_cast<Eigen::Index>(channels.size()));
    for (std::size_t j = 0; j < channels.size(); ++j) {
        d.col(static_cast<Eigen::Index>(j)) = x.col(channels[j]) - xhat.col(channels[j]);
    }
    return d.rowwise().norm();
}

/// First two moments of the reconstruction error over MC draws, per sample
/// row and group. `var` uses the n-1 divisor.
struct McMoments {
    Mat mean;  // batch x groups
    Mat var;
};

namespace detail {

/// Streaming mean/variance accumulation in draw order, so results do not
/// depend on how draws might be scheduled.
struct Welford {
    Mat mean, m2;
    long n = 0;

    Welford(Eigen::Index rows, Eigen::Index cols)
        : mean(Mat::Zero(rows, cols)), m2(Mat::Zero(rows, cols)) {}

    void add(const Mat& val) {
        n += 1;
        Mat delta = val - mean;
        mean += delta / static_cast<double>(n);
        m2.array() += delta.array() * (val - mean).array();
    }

    McMoments finish() const {
        McMoments out;
        out.mean = mean;
        out.var = m2 / static_cast<double>(n - 1);
        return out;
    }
};

}  // namespace detail

/// Epistemic uncertainty: hold the latent fixed (AE: its deterministic code;
/// VAE: z = mu) and vary only the decoder dropout masks across n draws.
/// Each draw gets its own derived stream, indexed by draw number.
inline McMoments epistemic(const AutoencoderModel& m, const Mat& x, const UqConfig& cfg,
                           RngStream& rng) {
    cfg.validate();
    EncodeResult enc = encode_eval(m, x);
    const int G = m.n_groups();
    detail::Welford acc(x.rows(), G);
    const std::uint64_t base = rng.next_u64();
    Mat err(x.rows(), G);
    for (int i = 0; i < cfg.n_samples; ++i) {
        RngStream draw(derive_seed(base, static_cast<std::uint64_t>(i)));
        for (int g = 0; g < G; ++g) {
            ForwardTrace tr =
                forward(m.decoders[static_cast<std::size_t>(g)], enc.z, Mode::mc_dropout, &draw);
            const Mat& out = tr.output();
            const auto& chans = m.spec.channels(g);
            Mat d(x.rows(), static_cast<Eigen::Index>(chans.size()));
            for (std::size_t j = 0; j < chans.size(); ++j) {
                d.col(static_cast<Eigen::Index>(j)) =
                    x.col(chans[j]) - out.col(static_cast<Eigen::Index>(j));
            }
            err.col(g) = d.rowwise().norm();
        }
        acc.add(err);
    }
    return acc.finish();
}

/// Aleatoric uncertainty: hold the decoder fixed (dropout disabled) and vary
/// only the latent draw z ~ N(mu, diag(exp(logvar))). Only the VAE exposes a
/// latent distribution, so the AE variant is rejected.
inline McMoments aleatoric(const AutoencoderModel& m, const Mat& x, const UqConfig& cfg,
                           RngStream& rng) {
    cfg.validate();
    if (m.variant != Variant::vae) {
        throw UnsupportedVariantError(
            "aleatoric uncertainty cannot be isolated for the ae variant");
    }
    EncodeResult enc = encode_eval(m, x);
    const int G = m.n_groups();
    detail::Welford acc(x.rows(), G);
    const std::uint64_t base = rng.next_u64();
    Mat err(x.rows(), G);
    for (int i = 0; i < cfg.n_samples; ++i) {
        RngStream draw(derive_seed(base, static_cast<std::uint64_t>(i)));
        Mat z = reparameterize(enc.z, enc.logvar, draw);
        for (int g = 0; g < G; ++g) {
            ForwardTrace tr = forward(m.decoders[static_cast<std::size_t>(g)], z, Mode::eval);
            const Mat& out = tr.output();
            const auto& chans = m.spec.channels(g);
            Mat d(x.rows(), static_cast<Eigen::Index>(chans.size()));
            for (std::size_t j = 0; j < chans.size(); ++j) {
                d.col(static_cast<Eigen::Index>(j)) =
                    x.col(chans[j]) - out.col(static_cast<Eigen::Index>(j));
            }
            err.col(g) = d.rowwise().norm();
        }
        acc.add(err);
    }
    return acc.finish();
}

}  // namespace iglide
