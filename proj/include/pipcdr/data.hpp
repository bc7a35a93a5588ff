#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "pipcdr/matrix.hpp"
#include "pipcdr/metrics.hpp"
#include "pipcdr/rng.hpp"

namespace pipcdr {

struct Dataset {
    std::string name;
    Matrix features;
    std::optional<Partition> labels;
};

struct AugmentSpec {
    double noise_std = 0.0;
    double mask_prob = 0.0;
    double scale_jitter = 0.0;
};

// Gaussian blobs around well-separated means, pushed through a fixed random
// two-layer tanh map so the raw coordinates are a warped view of the latent
// mixture. Draw order is pinned: means, map parameters, then points.
inline Dataset gen_gaussian_mixture(std::size_t K, const std::vector<std::size_t>& per_cluster,
                                    std::size_t ambient_dim, double separation, double noise,
                                    std::uint64_t seed) {
    if (K == 0) throw ConfigInvalid("K must be >= 1");
    if (per_cluster.size() != K) throw LengthMismatch("per_cluster must list K counts");
    for (auto c : per_cluster)
        if (c == 0) throw ConfigInvalid("per_cluster counts must be >= 1");
    if (ambient_dim == 0) throw ConfigInvalid("ambient_dim must be >= 1");
    if (separation < 0.0 || noise < 0.0) throw ConfigInvalid("separation and noise must be >= 0");

    Rng rng(seed);
    const std::size_t D = ambient_dim;

    Matrix means(K, D);
    bool ok = false;
    for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
        for (auto& v : means.data) v = separation * rng.normal();
        ok = true;
        for (std::size_t i = 0; i < K && ok; ++i)
            for (std::size_t j = i + 1; j < K && ok; ++j) {
                double d2 = 0.0;
                for (std::size_t c = 0; c < D; ++c) {
                    const double d = means.at(i, c) - means.at(j, c);
                    d2 += d * d;
                }
                if (d2 < separation * separation) ok = false;
            }
    }
    if (!ok)
        throw InfeasibleSeparation("could not place " + std::to_string(K) +
                                   " means with pairwise distance >= " +
                                   std::to_string(separation) + " in 10000 attempts");

    const double wscale = 1.0 / std::sqrt(static_cast<double>(D));
    Matrix W1(D, D), W2(D, D);
    std::vector<double> b1(D), b2(D);
    for (auto& v : W1.data) v = wscale * rng.normal();
    for (auto& v : b1) v = 0.1 * rng.normal();
    for (auto& v : W2.data) v = wscale * rng.normal();
    for (auto& v : b2) v = 0.1 * rng.normal();

    std::size_t N = 0;
    for (auto c : per_cluster) N += c;
    Dataset out;
    out.features = Matrix(N, D);
    Partition part;
    part.K = K;
    part.labels.reserve(N);
    std::vector<double> x(D), h(D);
    std::size_t row = 0;
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t n = 0; n < per_cluster[k]; ++n) {
            for (std::size_t c = 0; c < D; ++c) x[c] = means.at(k, c) + noise * rng.normal();
            for (std::size_t o = 0; o < D; ++o) {
                double s = b1[o];
                for (std::size_t c = 0; c < D; ++c) s += W1.at(o, c) * x[c];
                h[o] = std::tanh(0.1 * s);
            }
            for (std::size_t o = 0; o < D; ++o) {
                double s = b2[o];
                for (std::size_t c = 0; c < D; ++c) s += W2.at(o, c) * h[c];
                out.features.at(row, o) = s;
            }
            part.labels.push_back(static_cast<int>(k));
            ++row;
        }
    }
    out.labels = std::move(part);
    return out;
}

// Keeps class c at round(count_c * imbalance^(c / (K-1))) instances (at least
// one), dropping a random subset; original row order is preserved.
inline Dataset long_tail_subsample(const Dataset& data, double imbalance, const Rng& rng) {
    if (!data.labels) throw LabelsMissing("long_tail_subsample needs a labeled dataset");
    if (!(imbalance > 0.0 && imbalance <= 1.0)) throw ConfigInvalid("imbalance must be in (0, 1]");
    const Partition& part = *data.labels;
    const std::size_t K = part.K;

    std::vector<std::vector<std::size_t>> by_class(K);
    for (std::size_t i = 0; i < part.labels.size(); ++i)
        by_class[static_cast<std::size_t>(part.labels[i])].push_back(i);

    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < K; ++c) {
        auto& idx = by_class[c];
        const double frac =
            K == 1 ? 1.0 : std::pow(imbalance, static_cast<double>(c) / static_cast<double>(K - 1));
        const std::size_t want = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(frac * static_cast<double>(idx.size()))));
        Rng r = rng.fork(c);
        for (std::size_t i = idx.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(r.uniform_int(i));
            std::swap(idx[i - 1], idx[j]);
        }
        keep.insert(keep.end(), idx.begin(), idx.begin() + std::min(want, idx.size()));
    }
    std::sort(keep.begin(), keep.end());

    Dataset out;
    out.name = data.name;
    out.features = Matrix(keep.size(), data.features.cols);
    Partition part_out;
    part_out.K = K;
    part_out.labels.reserve(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        std::copy(data.features.row(keep[i]), data.features.row(keep[i]) + data.features.cols,
                  out.features.row(i));
        part_out.labels.push_back(part.labels[keep[i]]);
    }
    out.labels = std::move(part_out);
    return out;
}

// x' = (1 + jitter) * x + noise, then coordinates zeroed with mask_prob.
// Draw order: jitter, per-coordinate noise, per-coordinate mask.
inline std::vector<double> augment(const std::vector<double>& x, const AugmentSpec& spec, Rng& rng) {
    std::vector<double> out(x.size());
    const double jitter = spec.scale_jitter > 0.0
                              ? rng.uniform(-spec.scale_jitter, spec.scale_jitter)
                              : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (1.0 + jitter) * x[i];
    if (spec.noise_std > 0.0)
        for (auto& v : out) v += spec.noise_std * rng.normal();
    if (spec.mask_prob > 0.0)
        for (auto& v : out)
            if (rng.uniform() < spec.mask_prob) v = 0.0;
    return out;
}

inline void augment_row(const double* x, std::size_t d, const AugmentSpec& spec, Rng& rng,
                        double* out) {
    const std::vector<double> in(x, x + d);
    const std::vector<double> res = augment(in, spec, rng);
    std::copy(res.begin(), res.end(), out);
}

// features.csv + optional labels.csv in one directory.
inline Dataset load_dataset(const std::string& features_path,
                            const std::optional<std::string>& labels_path,
                            const std::string& name = "") {
    Dataset out;
    out.name = name;
    out.features = load_csv_matrix(features_path);
    if (out.features.rows == 0) throw ParseError("dataset is empty: " + features_path);
    if (labels_path) {
        const std::vector<int> raw = load_labels_csv(*labels_path);
        if (raw.size() != out.features.rows)
            throw LengthMismatch("features have " + std::to_string(out.features.rows) +
                                 " rows but labels have " + std::to_string(raw.size()));
        out.labels = canonicalize(raw);
    }
    return out;
}

} // namespace pipcdr
