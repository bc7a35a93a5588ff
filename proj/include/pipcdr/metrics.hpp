#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pipcdr/geometry.hpp"
#include "pipcdr/hungarian.hpp"
#include "pipcdr/matrix.hpp"

namespace pipcdr {

struct Partition {
    std::vector<int> labels; // dense, 0..K-1
    std::size_t K = 0;
};

// Arbitrary integer labels -> dense 0..K-1, ordered by sorted original value.
inline Partition canonicalize(const std::vector<int>& raw) {
    Partition p;
    std::map<int, int> remap;
    for (int v : raw) remap.emplace(v, 0);
    int next = 0;
    for (auto& kv : remap) kv.second = next++;
    p.labels.reserve(raw.size());
    for (int v : raw) p.labels.push_back(remap[v]);
    p.K = static_cast<std::size_t>(next);
    return p;
}

namespace detail {

struct Contingency {
    std::vector<std::vector<long>> table; // Ka x Kb
    std::vector<long> a, b;               // marginals
    long N = 0;
};

inline Contingency contingency(const std::vector<int>& la, const std::vector<int>& lb) {
    if (la.size() != lb.size()) throw LengthMismatch("label vectors differ in length");
    if (la.empty()) throw BatchTooSmall("metrics need at least one instance");
    const Partition pa = canonicalize(la), pb = canonicalize(lb);
    Contingency c;
    c.N = static_cast<long>(la.size());
    c.table.assign(pa.K, std::vector<long>(pb.K, 0));
    c.a.assign(pa.K, 0);
    c.b.assign(pb.K, 0);
    for (std::size_t i = 0; i < la.size(); ++i) {
        c.table[pa.labels[i]][pb.labels[i]]++;
        c.a[pa.labels[i]]++;
        c.b[pb.labels[i]]++;
    }
    return c;
}

inline double entropy(const std::vector<long>& counts, long N) {
    double h = 0.0;
    for (long c : counts)
        if (c > 0) h -= (static_cast<double>(c) / N) * std::log(static_cast<double>(c) / N);
    return h;
}

inline double mutual_information(const Contingency& c) {
    double mi = 0.0;
    for (std::size_t i = 0; i < c.table.size(); ++i)
        for (std::size_t j = 0; j < c.table[i].size(); ++j) {
            const long nij = c.table[i][j];
            if (nij == 0) continue;
            const double pij = static_cast<double>(nij) / c.N;
            mi += pij * std::log(static_cast<double>(nij) * c.N /
                                 (static_cast<double>(c.a[i]) * static_cast<double>(c.b[j])));
        }
    return std::max(0.0, mi);
}

// Expected mutual information under the hypergeometric model of random
// labelings with fixed marginals; log-gamma keeps the factorials finite.
inline double expected_mutual_information(const Contingency& c) {
    const double N = static_cast<double>(c.N);
    double emi = 0.0;
    for (long ai : c.a) {
        for (long bj : c.b) {
            const long lo = std::max<long>(1, ai + bj - c.N);
            const long hi = std::min(ai, bj);
            for (long nij = lo; nij <= hi; ++nij) {
                const double term =
                    (nij / N) * std::log((N * nij) / (static_cast<double>(ai) * bj));
                const double logp = std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) +
                                    std::lgamma(N - ai + 1.0) + std::lgamma(N - bj + 1.0) -
                                    std::lgamma(N + 1.0) - std::lgamma(nij + 1.0) -
                                    std::lgamma(ai - nij + 1.0) - std::lgamma(bj - nij + 1.0) -
                                    std::lgamma(N - ai - bj + nij + 1.0);
                emi += term * std::exp(logp);
            }
        }
    }
    return emi;
}

inline double comb2(long n) { return 0.5 * static_cast<double>(n) * (n - 1); }

} // namespace detail

// Normalized mutual information with the arithmetic-mean normalizer.
// Both partitions trivial -> 1; exactly one trivial -> 0.
inline double nmi(const std::vector<int>& truth, const std::vector<int>& pred) {
    const auto c = detail::contingency(truth, pred);
    const double ha = detail::entropy(c.a, c.N);
    const double hb = detail::entropy(c.b, c.N);
    if (ha == 0.0 && hb == 0.0) return 1.0;
    if (ha == 0.0 || hb == 0.0) return 0.0;
    return detail::mutual_information(c) / (0.5 * (ha + hb));
}

// Adjusted mutual information: chance-corrected by the expected MI.
inline double ami(const std::vector<int>& truth, const std::vector<int>& pred) {
    const auto c = detail::contingency(truth, pred);
    if (c.a.size() == 1 && c.b.size() == 1) return 1.0;
    const double ha = detail::entropy(c.a, c.N);
    const double hb = detail::entropy(c.b, c.N);
    const double mi = detail::mutual_information(c);
    const double emi = detail::expected_mutual_information(c);
    double denom = 0.5 * (ha + hb) - emi;
    const double eps = std::numeric_limits<double>::epsilon();
    denom = denom < 0.0 ? std::min(denom, -eps) : std::max(denom, eps);
    return (mi - emi) / denom;
}

// Adjusted Rand index by pair counting.
inline double ari(const std::vector<int>& truth, const std::vector<int>& pred) {
    const auto c = detail::contingency(truth, pred);
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& row : c.table)
        for (long nij : row) sum_ij += detail::comb2(nij);
    for (long a : c.a) sum_a += detail::comb2(a);
    for (long b : c.b) sum_b += detail::comb2(b);
    const double total = detail::comb2(c.N);
    const double expected = sum_a * sum_b / std::max(total, 1.0);
    const double max_index = 0.5 * (sum_a + sum_b);
    const double denom = max_index - expected;
    if (std::abs(denom) < 1e-15) return 1.0;
    return (sum_ij - expected) / denom;
}

// Fraction of instances explained by the best one-to-one cluster-to-class
// matching; rectangular contingency tables are padded with zeros.
inline double clustering_accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
    const auto c = detail::contingency(truth, pred);
    const std::size_t n = std::max(c.a.size(), c.b.size());
    Matrix cost(n, n, 0.0);
    for (std::size_t i = 0; i < c.table.size(); ++i)
        for (std::size_t j = 0; j < c.table[i].size(); ++j)
            cost.at(i, j) = -static_cast<double>(c.table[i][j]);
    const auto match = hungarian_min_cost(cost);
    double matched = 0.0;
    for (std::size_t i = 0; i < c.table.size(); ++i) {
        const std::size_t j = match[i];
        if (j < c.table[i].size()) matched += static_cast<double>(c.table[i][j]);
    }
    return matched / static_cast<double>(c.N);
}

// min cluster size / max cluster size over K_expected clusters; clusters
// that received nothing count as empty, so any absent cluster gives 0.
inline double imbalance_ratio(const std::vector<int>& labels, std::size_t k_expected) {
    if (labels.empty()) throw BatchTooSmall("imbalance_ratio needs at least one instance");
    if (k_expected == 0) throw ConfigInvalid("k_expected must be >= 1");
    std::vector<long> counts(k_expected, 0);
    for (int v : labels) {
        if (v < 0 || static_cast<std::size_t>(v) >= k_expected)
            throw LengthMismatch("label " + std::to_string(v) + " outside [0, K)");
        counts[static_cast<std::size_t>(v)]++;
    }
    const long mn = *std::min_element(counts.begin(), counts.end());
    const long mx = *std::max_element(counts.begin(), counts.end());
    return static_cast<double>(mn) / static_cast<double>(mx);
}

// Mean per-dimension population std of the l2-normalized rows. Uniform
// distribution on the (d-1)-sphere gives 1/sqrt(d); collapse gives 0.
inline double std_uniformity(const Matrix& feats) {
    if (feats.rows == 0) throw BatchTooSmall("std_uniformity needs at least one row");
    const Matrix z = l2_normalize_rows(feats);
    const double N = static_cast<double>(z.rows);
    double acc = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < z.rows; ++i) mean += z.at(i, j);
        mean /= N;
        double var = 0.0;
        for (std::size_t i = 0; i < z.rows; ++i) {
            const double d = z.at(i, j) - mean;
            var += d * d;
        }
        acc += std::sqrt(var / N);
    }
    return acc / static_cast<double>(z.cols);
}

namespace detail {

// cosine k-NN majority vote; similarity ties prefer the smaller reference
// index, vote ties prefer the smaller label.
inline int knn_label(const double* q, const Matrix& ref, const std::vector<int>& ref_labels,
                     std::size_t k) {
    const std::size_t R = ref.rows;
    std::vector<std::size_t> idx(R);
    for (std::size_t i = 0; i < R; ++i) idx[i] = i;
    std::vector<double> sims(R);
    for (std::size_t i = 0; i < R; ++i) sims[i] = cosine_sim(q, ref.row(i), ref.cols);
    const std::size_t kk = std::min(k, R);
    std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(), [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return a < b;
    });
    std::map<int, std::size_t> votes;
    for (std::size_t i = 0; i < kk; ++i) votes[ref_labels[idx[i]]]++;
    int best_label = votes.begin()->first;
    std::size_t best_count = 0;
    for (const auto& kv : votes)
        if (kv.second > best_count) { // map order makes ties pick the smaller label
            best_count = kv.second;
            best_label = kv.first;
        }
    return best_label;
}

} // namespace detail

// Fraction of rows whose k-NN class under the reference embedding stays the
// same after mixing. Inputs are normalized internally.
inline double preservation_rate(const Matrix& inputs, const Matrix& mixed, const Matrix& reference,
                                const std::vector<int>& ref_labels, std::size_t k = 5) {
    if (reference.rows == 0) throw EmptyReference("reference set is empty");
    if (ref_labels.size() != reference.rows) throw LengthMismatch("reference labels length mismatch");
    if (!inputs.same_shape(mixed)) throw DimMismatch("inputs and mixed shapes differ");
    if (inputs.cols != reference.cols) throw DimMismatch("reference dim mismatch");
    if (inputs.rows == 0) throw BatchTooSmall("preservation_rate needs at least one row");
    if (k == 0) throw ConfigInvalid("k must be >= 1");
    const Matrix zi = l2_normalize_rows(inputs);
    const Matrix zm = l2_normalize_rows(mixed);
    const Matrix zr = l2_normalize_rows(reference);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < zi.rows; ++i) {
        const int a = detail::knn_label(zi.row(i), zr, ref_labels, k);
        const int b = detail::knn_label(zm.row(i), zr, ref_labels, k);
        if (a == b) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(zi.rows);
}

// One training-epoch snapshot; the CSV layout is frozen.
struct MetricsReport {
    long epoch = 0;
    double nmi = 0, ami = 0, ari = 0, acc = 0;
    double imbalance_ratio = 0, std_uniformity = 0;
    double loss_pip = 0, loss_cdr = 0;

    static std::string csv_header() {
        return "epoch,nmi,ami,ari,acc,imbalance_ratio,std_uniformity,loss_pip,loss_cdr";
    }
    std::string csv_row() const {
        std::string s = std::to_string(epoch);
        for (double v : {nmi, ami, ari, acc, imbalance_ratio, std_uniformity, loss_pip, loss_cdr}) {
            s += ',';
            s += format_double(v);
        }
        return s;
    }
};

} // namespace pipcdr
