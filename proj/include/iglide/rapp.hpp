#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "iglide/model.hpp"

namespace iglide {

/// Hidden-activation pathways for a batch: each group's encoder activations
/// for the input and for the reconstruction re-fed through the same encoder,
/// plus the latent pair. Row i everywhere refers to input row i.
struct PathwayTrace {
    std::vector<Mat> hx;     // per group, batch x (n1+...+nL)
    std::vector<Mat> hxhat;  // same shape
    Mat zx, zxhat;           // batch x latent
    Mat xhat;                // batch x input_dim, for reuse by error metrics
};

namespace detail {

inline Mat concat_activations(const std::vector<ForwardTrace>& traces, int g) {
    const auto& layers = traces[static_cast<std::size_t>(g)].layers;
    Eigen::Index total = 0;
    for (const auto& lt : layers) total += lt.a.cols();
    Mat h(layers.front().a.rows(), total);
    Eigen::Index at = 0;
    for (const auto& lt : layers) {
        h.middleCols(at, lt.a.cols()) = lt.a;
        at += lt.a.cols();
    }
    return h;
}

}  // namespace detail

/// Run the model in eval mode, compute the reconstruction once, then
/// re-encode it. Activations are taken post-activation at every encoder
/// layer; the raw input is not part of the pathway.
inline PathwayTrace record_pathway(const AutoencoderModel& m, const Mat& x) {
    ModelForward f = model_forward(m, x, Mode::eval);
    EncodeResult re = encode_eval(m, f.xhat);
    PathwayTrace t;
    t.xhat = std::move(f.xhat);
    t.zx = std::move(f.z);
    t.zxhat = std::move(re.z);
    t.hx.reserve(static_cast<std::size_t>(m.n_groups()));
    t.hxhat.reserve(static_cast<std::size_t>(m.n_groups()));
    for (int g = 0; g < m.n_groups(); ++g) {
        t.hx.push_back(detail::concat_activations(f.enc, g));
        t.hxhat.push_back(detail::concat_activations(re.enc, g));
    }
    return t;
}

/// Per-sample SAP for one group: Euclidean norm of the pathway difference.
inline Vec sap(const PathwayTrace& t, int g) {
    return (t.hx[static_cast<std::size_t>(g)] - t.hxhat[static_cast<std::size_t>(g)])
        .rowwise()
        .norm();
}

inline Vec sap_latent(const PathwayTrace& t) { return (t.zx - t.zxhat).rowwise().norm(); }

// ---------------------------------------------------------------------------
// NAP
// ---------------------------------------------------------------------------

/// Whitening statistics of pathway differences on healthy data. The centered
/// difference matrix is scaled by 1/sqrt(m-1) before the SVD, so scoring with
/// Sigma^-1 reproduces the Mahalanobis distance of the sample covariance on
/// the retained rank-k subspace.
struct NapModel {
    Vec mu;     // column mean of the raw difference rows
    Mat V;      // d x k right singular vectors
    Vec sigma;  // k singular values, descending, all > 0
    int k = 0;

    bool degenerate() const { return k == 0; }
};

inline NapModel fit_nap_rows(const Mat& D) {
    const Eigen::Index m = D.rows();
    if (m < 2) throw FitError("NAP fit needs at least 2 samples, got " + std::to_string(m));
    NapModel nm;
    nm.mu = D.colwise().mean().transpose();
    Mat centered = (D.rowwise() - nm.mu.transpose()) / std::sqrt(static_cast<double>(m - 1));
    Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& sv = svd.singularValues();
    const double tol = (sv.size() > 0) ? 1e-10 * sv(0) : 0.0;
    int k = 0;
    while (k < sv.size() && sv(k) > tol && sv(k) > 0.0) ++k;
    nm.k = k;
    if (k == 0) {
        std::cerr << "warning: degenerate NAP fit (rank 0); scores will be 0\n";
        nm.V.resize(D.cols(), 0);
        nm.sigma.resize(0);
        return nm;
    }
    nm.V = svd.matrixV().leftCols(k);
    nm.sigma = sv.head(k);
    return nm;
}

/// NAP for a batch of difference rows: ||Sigma^-1 V^T (d - mu)||_2 per row.
/// Components orthogonal to the retained subspace are discarded by the
/// projection; a degenerate fit scores 0.
inline Vec nap_score_rows(const NapModel& nm, const Mat& D) {
    if (D.cols() != nm.mu.size()) throw ShapeError("nap_score_rows: dimension mismatch");
    if (nm.k == 0) return Vec::Zero(D.rows());
    Mat proj = (D.rowwise() - nm.mu.transpose()) * nm.V;  // batch x k
    proj.array().rowwise() /= nm.sigma.transpose().array();
    return proj.rowwise().norm();
}

/// Per-group and latent-space NAP statistics for one trained model.
struct RappModel {
    std::vector<NapModel> per_group;
    NapModel latent;
};

/// Fit all NAP statistics on (normalized) healthy samples.
inline RappModel fit_nap(const AutoencoderModel& m, const Mat& healthy) {
    PathwayTrace t = record_pathway(m, healthy);
    RappModel rm;
    rm.per_group.reserve(static_cast<std::size_t>(m.n_groups()));
    for (int g = 0; g < m.n_groups(); ++g) {
        rm.per_group.push_back(
            fit_nap_rows(t.hx[static_cast<std::size_t>(g)] - t.hxhat[static_cast<std::size_t>(g)]));
    }
    rm.latent = fit_nap_rows(t.zx - t.zxhat);
    return rm;
}

inline Vec nap(const NapModel& nm, const PathwayTrace& t, int g) {
    return nap_score_rows(nm, t.hx[static_cast<std::size_t>(g)] - t.hxhat[static_cast<std::size_t>(g)]);
}

inline Vec nap_latent(const NapModel& nm, const PathwayTrace& t) {
    return nap_score_rows(nm, t.zx - t.zxhat);
}

/// (sap_ls, nap_ls) per sample; both derive from the fused latent, i.e. from
/// all channels jointly rather than any single group.
inline std::pair<Vec, Vec> latent_metrics(const PathwayTrace& t, const NapModel& latent_nap) {
    return {sap_latent(t), nap_latent(latent_nap, t)};
}

// ---------------------------------------------------------------------------
// HI assembly
// ---------------------------------------------------------------------------

enum class HiSetKind { groups, mono, gonzalez };

inline std::string to_string(HiSetKind k) {
    switch (k) {
        case HiSetKind::groups: return "groups";
        case HiSetKind::mono: return "mono";
        case HiSetKind::gonzalez: return "gonzalez";
    }
    return "?";
}

inline HiSetKind hi_set_kind_from_string(const std::string& s) {
    if (s == "groups") return HiSetKind::groups;
    if (s == "mono") return HiSetKind::mono;
    if (s == "gonzalez") return HiSetKind::gonzalez;
    throw ConfigError("unknown HI set kind: " + s);
}

/// Fixed feature order: per-group SAP, per-group NAP, latent SAP, latent NAP,
/// per-group sigma_e, then per-group sigma_a for VAE models. The gonzalez set
/// is the latent pair only; mono is the same layout over a single group.
inline std::vector<std::string> hi_feature_names(HiSetKind kind, Variant variant,
                                                 const std::vector<std::string>& group_names) {
    std::vector<std::string> names;
    if (kind == HiSetKind::gonzalez) {
        names = {"sap_ls", "nap_ls"};
        return names;
    }
    if (kind == HiSetKind::mono && group_names.size() != 1) {
        throw AssemblyError("mono HI set requires a single-group model, got " +
                            std::to_string(group_names.size()) + " groups");
    }
    for (const auto& g : group_names) names.push_back("sap_" + g);
    for (const auto& g : group_names) names.push_back("nap_" + g);
    names.push_back("sap_ls");
    names.push_back("nap_ls");
    for (const auto& g : group_names) names.push_back("sigma_e_" + g);
    if (variant == Variant::vae) {
        for (const auto& g : group_names) names.push_back("sigma_a_" + g);
    }
    return names;
}

struct HiVector {
    HiSetKind kind = HiSetKind::groups;
    std::vector<std::string> names;
    Vec values;
};

/// Assemble one timestep's HI vector, checking every entry is finite.
/// `sigma_a` must be empty for AE models and per-group for VAE.
inline HiVector assemble_hi(HiSetKind kind, Variant variant,
                            const std::vector<std::string>& group_names, const Vec& sap_g,
                            const Vec& nap_g, double sap_ls, double nap_ls, const Vec& sigma_e,
                            const Vec& sigma_a) {
    const auto G = static_cast<Eigen::Index>(group_names.size());
    if (kind != HiSetKind::gonzalez) {
        if (sap_g.size() != G || nap_g.size() != G || sigma_e.size() != G) {
            throw AssemblyError("per-group HI inputs do not match group count");
        }
        if (variant == Variant::vae ? sigma_a.size() != G : sigma_a.size() != 0) {
            throw AssemblyError("sigma_a must be per-group for VAE and absent for AE");
        }
    }
    HiVector hi;
    hi.kind = kind;
    hi.names = hi_feature_names(kind, variant, group_names);
    hi.values.resize(static_cast<Eigen::Index>(hi.names.size()));
    Eigen::Index at = 0;
    auto put = [&](double v) {
        if (!std::isfinite(v)) {
            throw AssemblyError("non-finite HI feature '" + hi.names[static_cast<std::size_t>(at)] + "'");
        }
        hi.values(at++) = v;
    };
    if (kind == HiSetKind::gonzalez) {
        put(sap_ls);
        put(nap_ls);
        return hi;
    }
    for (Eigen::Index g = 0; g < G; ++g) put(sap_g(g));
    for (Eigen::Index g = 0; g < G; ++g) put(nap_g(g));
    put(sap_ls);
    put(nap_ls);
    for (Eigen::Index g = 0; g < G; ++g) put(sigma_e(g));
    if (variant == Variant::vae) {
        for (Eigen::Index g = 0; g < G; ++g) put(sigma_a(g));
    }
    return hi;
}

}  // namespace iglide
