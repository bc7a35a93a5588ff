#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "pipcdr/geometry.hpp"
#include "pipcdr/matrix.hpp"
#include "pipcdr/mlp.hpp"

namespace pipcdr {

// za is the differentiable (online) embedding batch; zb_target and za_target
// are read-only target-network embeddings of the two augmented views.
struct ViewPair {
    Matrix za;
    Matrix zb_target;
    std::optional<Matrix> za_target;
};

struct LossOut {
    double value = 0.0;
    Matrix grad_za;                        // d value / d za (same shape as za)
    std::optional<Matrix> grad_aux;        // d value / d raw predictor output
    std::optional<GradientTape> pred_tape; // predictor parameter gradients
    double alignment = 0.0;                // exposed by the decoupled variants
    double uniformity = 0.0;
    std::vector<double> per_instance;
    std::vector<std::size_t> nn;
};

namespace detail {

inline void check_tau(double tau) {
    if (!(tau > 0.0)) throw ConfigInvalid("tau must be > 0");
}

inline void check_rows_unit(const Matrix& m, const char* what) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double n = row_norm(m.row(i), m.cols);
        if (std::abs(n - 1.0) > 1e-3)
            throw ZeroRow(std::string(what) + ": row " + std::to_string(i) +
                          " is not unit-norm (|z| = " + std::to_string(n) + ")");
    }
}

inline void check_pair(const ViewPair& p, bool need_za_target) {
    if (p.za.rows < 2) throw BatchTooSmall("need at least 2 instances");
    if (!p.za.same_shape(p.zb_target)) throw DimMismatch("za and zb_target shapes differ");
    if (need_za_target) {
        if (!p.za_target.has_value()) throw DimMismatch("this loss needs za_target in the pair");
        if (!p.za.same_shape(*p.za_target)) throw DimMismatch("za and za_target shapes differ");
    }
    check_rows_unit(p.za, "za");
    check_rows_unit(p.zb_target, "zb_target");
    if (need_za_target) check_rows_unit(*p.za_target, "za_target");
}

// gram[i][j] = row_i(a) . row_j(b) / tau
inline Matrix gram_over_tau(const Matrix& a, const Matrix& b, double tau) {
    Matrix g(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j) g.at(i, j) = dot(a.row(i), b.row(j), a.cols) / tau;
    return g;
}

} // namespace detail

// Contrastive loss over 2N embeddings: the positive is the other view of the
// same instance, negatives are both views of every other instance.
inline LossOut info_nce(const ViewPair& pair, double tau) {
    detail::check_tau(tau);
    detail::check_pair(pair, false);
    const Matrix& za = pair.za;
    const Matrix& zb = pair.zb_target;
    const std::size_t N = za.rows, d = za.cols;
    const Matrix Ga = detail::gram_over_tau(za, za, tau);
    const Matrix Gb = detail::gram_over_tau(za, zb, tau);

    LossOut out;
    out.grad_za = Matrix(N, d);
    out.per_instance.resize(N);
    const double inv_Ntau = 1.0 / (static_cast<double>(N) * tau);
    for (std::size_t i = 0; i < N; ++i) {
        const double pos = Gb.at(i, i);
        double m = pos;
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            m = std::max({m, Ga.at(i, j), Gb.at(i, j)});
        }
        double s = std::exp(pos - m);
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            s += std::exp(Ga.at(i, j) - m) + std::exp(Gb.at(i, j) - m);
        }
        out.per_instance[i] = -pos + m + std::log(s);

        const double w_pos = std::exp(pos - m) / s;
        for (std::size_t k = 0; k < d; ++k)
            out.grad_za.at(i, k) += inv_Ntau * (w_pos - 1.0) * zb.at(i, k);
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            const double wa = std::exp(Ga.at(i, j) - m) / s;
            const double wb = std::exp(Gb.at(i, j) - m) / s;
            for (std::size_t k = 0; k < d; ++k) {
                out.grad_za.at(i, k) += inv_Ntau * (wa * za.at(j, k) + wb * zb.at(j, k));
                out.grad_za.at(j, k) += inv_Ntau * wa * za.at(i, k);
            }
        }
    }
    for (double v : out.per_instance) out.value += v;
    out.value /= static_cast<double>(N);
    return out;
}

// Same objective split into an alignment term and a uniformity term; the
// uniformity log-sum excludes the instance's own views entirely.
inline LossOut decoupled_info_nce(const ViewPair& pair, double tau) {
    detail::check_tau(tau);
    detail::check_pair(pair, false);
    const Matrix& za = pair.za;
    const Matrix& zb = pair.zb_target;
    const std::size_t N = za.rows, d = za.cols;
    const Matrix Ga = detail::gram_over_tau(za, za, tau);
    const Matrix Gb = detail::gram_over_tau(za, zb, tau);

    LossOut out;
    out.grad_za = Matrix(N, d);
    out.per_instance.resize(N);
    const double inv_Ntau = 1.0 / (static_cast<double>(N) * tau);
    for (std::size_t i = 0; i < N; ++i) {
        const double align = -Gb.at(i, i);
        double m = -1e300;
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            m = std::max({m, Ga.at(i, j), Gb.at(i, j)});
        }
        double s = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            s += std::exp(Ga.at(i, j) - m) + std::exp(Gb.at(i, j) - m);
        }
        const double unif = m + std::log(s);
        out.alignment += align;
        out.uniformity += unif;
        out.per_instance[i] = align + unif;

        for (std::size_t k = 0; k < d; ++k) out.grad_za.at(i, k) -= inv_Ntau * zb.at(i, k);
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            const double wa = std::exp(Ga.at(i, j) - m) / s;
            const double wb = std::exp(Gb.at(i, j) - m) / s;
            for (std::size_t k = 0; k < d; ++k) {
                out.grad_za.at(i, k) += inv_Ntau * (wa * za.at(j, k) + wb * zb.at(j, k));
                out.grad_za.at(j, k) += inv_Ntau * wa * za.at(i, k);
            }
        }
    }
    out.alignment /= static_cast<double>(N);
    out.uniformity /= static_cast<double>(N);
    out.value = out.alignment + out.uniformity;
    return out;
}

// Mean squared distance between two unit-row batches; 2 - 2cos per row.
inline LossOut alignment_byol(const Matrix& pred_out, const Matrix& zb_target) {
    if (!pred_out.same_shape(zb_target)) throw DimMismatch("alignment: shapes differ");
    if (pred_out.rows == 0) throw BatchTooSmall("alignment: empty batch");
    const std::size_t N = pred_out.rows, d = pred_out.cols;
    LossOut out;
    out.grad_za = Matrix(N, d);
    out.per_instance.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = pred_out.at(i, k) - zb_target.at(i, k);
            s += diff * diff;
            out.grad_za.at(i, k) = 2.0 * diff / static_cast<double>(N);
        }
        out.per_instance[i] = s;
        out.value += s;
    }
    out.value /= static_cast<double>(N);
    return out;
}

// Most-similar other row under cosine; ties resolve to the smallest index.
inline std::vector<std::size_t> nearest_neighbor_index(const Matrix& za) {
    if (za.rows < 2) throw BatchTooSmall("nearest neighbor needs >= 2 rows");
    std::vector<std::size_t> nn(za.rows);
    for (std::size_t i = 0; i < za.rows; ++i) {
        double best = -2.0;
        std::size_t best_j = i == 0 ? 1 : 0;
        for (std::size_t j = 0; j < za.rows; ++j) {
            if (j == i) continue;
            const double s = cosine_sim(za.row(i), za.row(j), za.cols);
            if (s > best) {
                best = s;
                best_j = j;
            }
        }
        nn[i] = best_j;
    }
    return nn;
}

// v_i = (1 - sigma) za_i + sigma za_{nn_i}; intentionally not renormalized.
inline Matrix pip_mix(const Matrix& za, const std::vector<std::size_t>& nn, double sigma) {
    if (nn.size() != za.rows) throw LengthMismatch("pip_mix: nn index count != rows");
    Matrix v(za.rows, za.cols);
    for (std::size_t i = 0; i < za.rows; ++i)
        for (std::size_t k = 0; k < za.cols; ++k)
            v.at(i, k) = (1.0 - sigma) * za.at(i, k) + sigma * za.at(nn[i], k);
    return v;
}

inline Matrix pip_mix(const Matrix& za, double sigma) {
    return pip_mix(za, nearest_neighbor_index(za), sigma);
}

// v_i = za_i + sigma * eps, eps ~ N(0, I); draws row-major.
inline Matrix psa_mix(const Matrix& za, double sigma, Rng& rng) {
    Matrix v = za;
    for (auto& x : v.data) x += sigma * rng.normal();
    return v;
}

// Positive-proximity loss: normalize za, nudge each row toward its nearest
// neighbor, push the mix through the predictor, and match the target view.
// The neighbor choice is treated as a constant during backprop.
inline LossOut pip_loss(const Mlp* predictor, const Matrix& za_raw, const Matrix& zb_target,
                        double sigma) {
    if (!za_raw.same_shape(zb_target)) throw DimMismatch("pip_loss: shapes differ");
    if (za_raw.rows < 2) throw BatchTooSmall("pip_loss needs >= 2 instances");
    const std::size_t N = za_raw.rows;

    const Matrix zu = l2_normalize_rows(za_raw);
    const std::vector<std::size_t> nn = nearest_neighbor_index(zu);
    const Matrix v = pip_mix(zu, nn, sigma);

    ForwardCache cache;
    Matrix p = predictor ? predictor->forward(v, cache) : v;
    const Matrix pu = l2_normalize_rows(p);

    LossOut out;
    out.nn = nn;
    out.per_instance.resize(N);
    Matrix dpu(N, pu.cols);
    for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < pu.cols; ++k) {
            const double diff = pu.at(i, k) - zb_target.at(i, k);
            s += diff * diff;
            dpu.at(i, k) = 2.0 * diff / static_cast<double>(N);
        }
        out.per_instance[i] = s;
        out.value += s;
    }
    out.value /= static_cast<double>(N);

    Matrix dp = l2_normalize_rows_backward(p, dpu);
    out.grad_aux = dp;
    Matrix dv;
    if (predictor) {
        GradientTape tape;
        dv = predictor->backward(cache, dp, tape);
        out.pred_tape = std::move(tape);
    } else {
        dv = dp;
    }
    Matrix dzu(N, za_raw.cols);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < za_raw.cols; ++k) {
            dzu.at(i, k) += (1.0 - sigma) * dv.at(i, k);
            dzu.at(nn[i], k) += sigma * dv.at(i, k);
        }
    out.grad_za = l2_normalize_rows_backward(za_raw, dzu);
    return out;
}

// Label-aware contrastive loss: every same-label embedding (both views) joins
// the positive set; the denominator is the plain contrastive one.
inline LossOut supervised_contrastive(const ViewPair& pair, const std::vector<int>& labels,
                                      double tau) {
    detail::check_tau(tau);
    detail::check_pair(pair, false);
    const Matrix& za = pair.za;
    const Matrix& zb = pair.zb_target;
    const std::size_t N = za.rows, d = za.cols;
    if (labels.size() != N) throw LengthMismatch("labels length != batch size");
    bool multi = false;
    for (std::size_t i = 1; i < N; ++i)
        if (labels[i] != labels[0]) multi = true;
    if (!multi) throw SingleCluster("all instances share one label");

    const Matrix Ga = detail::gram_over_tau(za, za, tau);
    const Matrix Gb = detail::gram_over_tau(za, zb, tau);
    LossOut out;
    out.grad_za = Matrix(N, d);
    out.per_instance.resize(N);
    const double inv_N = 1.0 / static_cast<double>(N);
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<std::size_t> peers; // same label, excluding i
        for (std::size_t k = 0; k < N; ++k)
            if (k != i && labels[k] == labels[i]) peers.push_back(k);
        const double P = static_cast<double>(peers.size()) + 1.0;
        const double denom_count = 2.0 * P - 1.0;

        double num = Gb.at(i, i);
        for (auto k : peers) num += Ga.at(i, k) + Gb.at(i, k);
        num /= denom_count;

        double m = Gb.at(i, i);
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            m = std::max({m, Ga.at(i, j), Gb.at(i, j)});
        }
        double s = std::exp(Gb.at(i, i) - m);
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            s += std::exp(Ga.at(i, j) - m) + std::exp(Gb.at(i, j) - m);
        }
        out.per_instance[i] = -num + m + std::log(s);

        const double cnum = inv_N / (denom_count * tau);
        for (std::size_t k = 0; k < d; ++k) out.grad_za.at(i, k) -= cnum * zb.at(i, k);
        for (auto pk : peers) {
            for (std::size_t k = 0; k < d; ++k) {
                out.grad_za.at(i, k) -= cnum * (za.at(pk, k) + zb.at(pk, k));
                out.grad_za.at(pk, k) -= cnum * za.at(i, k);
            }
        }
        const double inv_Ntau = inv_N / tau;
        const double w_pos = std::exp(Gb.at(i, i) - m) / s;
        for (std::size_t k = 0; k < d; ++k) out.grad_za.at(i, k) += inv_Ntau * w_pos * zb.at(i, k);
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            const double wa = std::exp(Ga.at(i, j) - m) / s;
            const double wb = std::exp(Gb.at(i, j) - m) / s;
            for (std::size_t k = 0; k < d; ++k) {
                out.grad_za.at(i, k) += inv_Ntau * (wa * za.at(j, k) + wb * zb.at(j, k));
                out.grad_za.at(j, k) += inv_Ntau * wa * za.at(i, k);
            }
        }
    }
    for (double v : out.per_instance) out.value += v;
    out.value *= inv_N;
    return out;
}

// Dispersion surrogate: pseudo-label peers are pulled together through the
// frozen target features, everything outside the pseudo-cluster is pushed
// away. Gradients flow only through the anchor rows. A pseudo-cluster that
// swallows the whole batch keeps its alignment term and drops uniformity.
inline LossOut cdr_surrogate(const ViewPair& pair, const std::vector<int>& labels, double tau) {
    detail::check_tau(tau);
    detail::check_pair(pair, true);
    const Matrix& za = pair.za;
    const Matrix& zb = pair.zb_target;
    const Matrix& ta = *pair.za_target;
    const std::size_t N = za.rows, d = za.cols;
    if (labels.size() != N) throw LengthMismatch("labels length != batch size");

    const Matrix Gta = detail::gram_over_tau(za, ta, tau);
    const Matrix Gtb = detail::gram_over_tau(za, zb, tau);
    LossOut out;
    out.grad_za = Matrix(N, d);
    out.per_instance.resize(N);
    const double inv_N = 1.0 / static_cast<double>(N);
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<std::size_t> peers, others;
        for (std::size_t k = 0; k < N; ++k) {
            if (k == i) continue;
            (labels[k] == labels[i] ? peers : others).push_back(k);
        }
        const double denom_count = 2.0 * (static_cast<double>(peers.size()) + 1.0) - 1.0;

        double align_num = Gtb.at(i, i);
        for (auto k : peers) align_num += Gta.at(i, k) + Gtb.at(i, k);
        const double align = -align_num / denom_count;

        const double calign = inv_N / (denom_count * tau);
        for (std::size_t k = 0; k < d; ++k) out.grad_za.at(i, k) -= calign * zb.at(i, k);
        for (auto pk : peers)
            for (std::size_t k = 0; k < d; ++k)
                out.grad_za.at(i, k) -= calign * (ta.at(pk, k) + zb.at(pk, k));

        double unif = 0.0;
        if (!others.empty()) {
            double m = -1e300;
            for (auto j : others) m = std::max({m, Gta.at(i, j), Gtb.at(i, j)});
            double s = 0.0;
            for (auto j : others) s += std::exp(Gta.at(i, j) - m) + std::exp(Gtb.at(i, j) - m);
            unif = m + std::log(s);
            const double inv_Ntau = inv_N / tau;
            for (auto j : others) {
                const double wa = std::exp(Gta.at(i, j) - m) / s;
                const double wb = std::exp(Gtb.at(i, j) - m) / s;
                for (std::size_t k = 0; k < d; ++k)
                    out.grad_za.at(i, k) += inv_Ntau * (wa * ta.at(j, k) + wb * zb.at(j, k));
            }
        }
        out.alignment += align;
        out.uniformity += unif;
        out.per_instance[i] = align + unif;
    }
    out.alignment *= inv_N;
    out.uniformity *= inv_N;
    out.value = out.alignment + out.uniformity;
    return out;
}

// Weighted blend of two loss outputs over the same differentiable argument.
inline LossOut combined_loss(const LossOut& a, const LossOut& b, double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigInvalid("loss weight must be in [0, 1]");
    if (!a.grad_za.same_shape(b.grad_za)) throw DimMismatch("combined_loss: gradient shapes differ");
    LossOut out;
    out.value = w * a.value + (1.0 - w) * b.value;
    out.grad_za = Matrix(a.grad_za.rows, a.grad_za.cols);
    for (std::size_t k = 0; k < out.grad_za.data.size(); ++k)
        out.grad_za.data[k] = w * a.grad_za.data[k] + (1.0 - w) * b.grad_za.data[k];
    if (a.pred_tape) {
        GradientTape t = *a.pred_tape;
        t.scale(w);
        if (b.pred_tape) {
            GradientTape t2 = *b.pred_tape;
            t2.scale(1.0 - w);
            t.add(t2);
        }
        out.pred_tape = std::move(t);
    } else if (b.pred_tape) {
        GradientTape t = *b.pred_tape;
        t.scale(1.0 - w);
        out.pred_tape = std::move(t);
    }
    return out;
}

} // namespace pipcdr
