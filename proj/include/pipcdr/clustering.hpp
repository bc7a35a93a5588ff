#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "pipcdr/geometry.hpp"
#include "pipcdr/matrix.hpp"
#include "pipcdr/rng.hpp"

namespace pipcdr {

struct PseudoLabeling {
    Matrix centroids;        // K x d, unit rows
    std::vector<int> assign; // cluster index per input row
    std::size_t K = 0;
    double inertia = 0.0;    // sum of (1 - cos) to the assigned centroid
};

struct KMeansOptions {
    std::size_t max_iter = 100;
    double tol = 1e-6; // relative inertia improvement
    std::size_t n_init = 5;
};

inline std::vector<int> assign_batch(const PseudoLabeling& pseudo, const Matrix& feats) {
    if (feats.cols != pseudo.centroids.cols) throw DimMismatch("assign_batch: dim mismatch");
    std::vector<int> out(feats.rows);
    for (std::size_t i = 0; i < feats.rows; ++i) {
        double best = -2.0;
        int best_k = 0;
        for (std::size_t k = 0; k < pseudo.K; ++k) {
            const double s = cosine_sim(feats.row(i), pseudo.centroids.row(k), feats.cols);
            if (s > best) {
                best = s;
                best_k = static_cast<int>(k);
            }
        }
        out[i] = best_k;
    }
    return out;
}

namespace detail {

// k-means++ adapted to cosine distance: seeds weighted by distance to the
// closest centroid already chosen.
inline Matrix kmeanspp_init(const Matrix& x, std::size_t K, Rng& rng) {
    const std::size_t N = x.rows, d = x.cols;
    Matrix c(K, d);
    std::size_t first = static_cast<std::size_t>(rng.uniform_int(N));
    for (std::size_t j = 0; j < d; ++j) c.at(0, j) = x.at(first, j);
    std::vector<double> dist(N);
    for (std::size_t k = 1; k < K; ++k) {
        double total = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double best = -2.0;
            for (std::size_t kk = 0; kk < k; ++kk)
                best = std::max(best, cosine_sim(x.row(i), c.row(kk), d));
            dist[i] = std::max(0.0, 1.0 - best);
            total += dist[i];
        }
        std::size_t pick;
        if (total <= 0.0) {
            pick = static_cast<std::size_t>(rng.uniform_int(N));
        } else {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            pick = N - 1;
            for (std::size_t i = 0; i < N; ++i) {
                acc += dist[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        }
        for (std::size_t j = 0; j < d; ++j) c.at(k, j) = x.at(pick, j);
    }
    return c;
}

inline PseudoLabeling kmeans_single(const Matrix& x, std::size_t K, Rng rng,
                                    const KMeansOptions& opt, std::vector<double>* trace) {
    const std::size_t N = x.rows, d = x.cols;
    PseudoLabeling out;
    out.K = K;
    out.centroids = kmeanspp_init(x, K, rng);
    out.assign.assign(N, -1);
    double prev_inertia = std::numeric_limits<double>::infinity();
    std::vector<int> prev_assign;
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        double inertia = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double best = -2.0;
            int bk = 0;
            for (std::size_t k = 0; k < K; ++k) {
                const double s = cosine_sim(x.row(i), out.centroids.row(k), d);
                if (s > best) {
                    best = s;
                    bk = static_cast<int>(k);
                }
            }
            out.assign[i] = bk;
            inertia += 1.0 - best;
        }
        if (trace) trace->push_back(inertia);
        out.inertia = inertia;
        const bool same = out.assign == prev_assign;
        const bool converged =
            prev_inertia - inertia <= opt.tol * std::max(prev_inertia, 1e-30) && it > 0;
        if (same || converged) break;
        prev_assign = out.assign;
        prev_inertia = inertia;

        // means; an empty cluster steals the worst-fit point from a cluster
        // that can spare one
        std::vector<std::size_t> counts(K, 0);
        for (int a : out.assign) counts[static_cast<std::size_t>(a)]++;
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] > 0) continue;
            double worst = -1.0;
            std::size_t worst_i = 0;
            for (std::size_t i = 0; i < N; ++i) {
                const std::size_t ci = static_cast<std::size_t>(out.assign[i]);
                if (counts[ci] < 2) continue;
                const double dd = 1.0 - cosine_sim(x.row(i), out.centroids.row(ci), d);
                if (dd > worst) {
                    worst = dd;
                    worst_i = i;
                }
            }
            counts[static_cast<std::size_t>(out.assign[worst_i])]--;
            out.assign[worst_i] = static_cast<int>(k);
            counts[k] = 1;
        }
        Matrix sums(K, d);
        for (std::size_t i = 0; i < N; ++i) {
            const std::size_t k = static_cast<std::size_t>(out.assign[i]);
            for (std::size_t j = 0; j < d; ++j) sums.at(k, j) += x.at(i, j);
        }
        for (std::size_t k = 0; k < K; ++k) {
            const double n = row_norm(sums.row(k), d);
            if (n > 1e-12) {
                for (std::size_t j = 0; j < d; ++j) out.centroids.at(k, j) = sums.at(k, j) / n;
            } else {
                // members cancel exactly; fall back to the first member
                for (std::size_t i = 0; i < N; ++i)
                    if (out.assign[i] == static_cast<int>(k)) {
                        for (std::size_t j = 0; j < d; ++j) out.centroids.at(k, j) = x.at(i, j);
                        break;
                    }
            }
        }
    }
    return out;
}

} // namespace detail

// Lloyd iterations on the unit sphere, n_init seeded restarts, lowest final
// inertia wins (earlier restart on exact ties). Optional per-restart inertia
// traces, recorded after every assignment phase.
inline PseudoLabeling spherical_kmeans(const Matrix& x_raw, std::size_t K, const Rng& rng,
                                       const KMeansOptions& opt = {},
                                       std::vector<std::vector<double>>* traces = nullptr) {
    if (K == 0) throw ConfigInvalid("K must be >= 1");
    if (x_raw.rows < K) throw TooFewPoints("need at least K points, got " + std::to_string(x_raw.rows));
    if (opt.n_init == 0) throw ConfigInvalid("n_init must be >= 1");
    const Matrix x = l2_normalize_rows(x_raw);
    PseudoLabeling best;
    bool have = false;
    for (std::size_t r = 0; r < opt.n_init; ++r) {
        std::vector<double> trace;
        PseudoLabeling cur =
            detail::kmeans_single(x, K, rng.fork(r), opt, traces ? &trace : nullptr);
        if (traces) traces->push_back(std::move(trace));
        if (!have || cur.inertia < best.inertia) {
            best = std::move(cur);
            have = true;
        }
    }
    return best;
}

// FIFO buffer of feature rows with per-row ages (the push counter at entry).
class MemoryQueue {
public:
    explicit MemoryQueue(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return rows_.size(); }
    std::size_t dim() const { return dim_; }

    void push(const Matrix& batch) {
        if (capacity_ == 0 || batch.rows == 0) return;
        if (dim_ == 0) dim_ = batch.cols;
        if (batch.cols != dim_) throw DimMismatch("queue push: feature width changed");
        for (std::size_t i = 0; i < batch.rows; ++i) {
            rows_.emplace_back(batch.row(i), batch.row(i) + dim_);
            ages_.push_back(counter_++);
            if (rows_.size() > capacity_) {
                rows_.pop_front();
                ages_.pop_front();
            }
        }
    }

    Matrix as_matrix() const {
        Matrix out(rows_.size(), dim_);
        for (std::size_t i = 0; i < rows_.size(); ++i)
            std::copy(rows_[i].begin(), rows_[i].end(), out.row(i));
        return out;
    }

    std::vector<long> ages() const { return {ages_.begin(), ages_.end()}; }

private:
    std::size_t capacity_;
    std::size_t dim_ = 0;
    long counter_ = 0;
    std::deque<std::vector<double>> rows_;
    std::deque<long> ages_;
};

// Batch rows first, then queue contents oldest to newest.
inline Matrix cluster_pool(const Matrix& batch, const MemoryQueue& queue) {
    if (queue.size() == 0) return batch;
    return vconcat(batch, queue.as_matrix());
}

} // namespace pipcdr
