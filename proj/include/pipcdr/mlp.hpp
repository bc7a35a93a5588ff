#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pipcdr/errors.hpp"
#include "pipcdr/matrix.hpp"
#include "pipcdr/rng.hpp"

namespace pipcdr {

// widths = [input, hidden..., output]. Hidden layers are linear -> optional
// batch standardize -> relu; the output layer is plain linear.
struct MlpSpec {
    std::vector<std::size_t> widths;
    bool batch_standardize = false;

    std::size_t layer_count() const { return widths.empty() ? 0 : widths.size() - 1; }
    bool valid() const {
        if (widths.size() < 2) return false;
        for (auto w : widths)
            if (w == 0) return false;
        return true;
    }
    bool operator==(const MlpSpec& o) const {
        return widths == o.widths && batch_standardize == o.batch_standardize;
    }
};

// Per-layer gradients, same shapes as the parameters they refer to.
struct GradientTape {
    std::vector<Matrix> dW;
    std::vector<std::vector<double>> db;
    std::vector<std::vector<double>> dgamma;
    std::vector<std::vector<double>> dbeta;

    void add(const GradientTape& o) {
        for (std::size_t l = 0; l < dW.size(); ++l) {
            for (std::size_t k = 0; k < dW[l].data.size(); ++k) dW[l].data[k] += o.dW[l].data[k];
            for (std::size_t k = 0; k < db[l].size(); ++k) db[l][k] += o.db[l][k];
            for (std::size_t k = 0; k < dgamma[l].size(); ++k) dgamma[l][k] += o.dgamma[l][k];
            for (std::size_t k = 0; k < dbeta[l].size(); ++k) dbeta[l][k] += o.dbeta[l][k];
        }
    }
    void scale(double s) {
        for (auto& m : dW)
            for (auto& v : m.data) v *= s;
        for (auto& vec : db)
            for (auto& v : vec) v *= s;
        for (auto& vec : dgamma)
            for (auto& v : vec) v *= s;
        for (auto& vec : dbeta)
            for (auto& v : vec) v *= s;
    }
};

struct ForwardCache {
    bool valid = false;
    std::vector<Matrix> inputs;  // per layer: activation fed into the layer
    std::vector<Matrix> pre;     // per layer: linear output before norm/relu
    std::vector<Matrix> xhat;    // batch-standardized values (hidden + bn only)
    std::vector<std::vector<double>> istd; // 1/sqrt(var + eps) per feature
    Matrix output;
};

class Mlp {
public:
    MlpSpec spec;
    std::vector<Matrix> W;                  // W[l]: widths[l+1] x widths[l]
    std::vector<std::vector<double>> b;
    std::vector<std::vector<double>> gamma; // hidden layers with batch_standardize
    std::vector<std::vector<double>> beta;

    static constexpr double kBnEps = 1e-5;

    Mlp() = default;

    Mlp(const MlpSpec& s, Rng& rng) : spec(s) {
        if (!s.valid()) throw ConfigInvalid("mlp spec needs >= 2 nonzero widths");
        const std::size_t L = s.layer_count();
        W.resize(L);
        b.resize(L);
        gamma.resize(L);
        beta.resize(L);
        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t fan_in = s.widths[l];
            const std::size_t fan_out = s.widths[l + 1];
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            W[l] = Matrix(fan_out, fan_in);
            for (auto& v : W[l].data) v = rng.uniform(-bound, bound);
            b[l].resize(fan_out);
            for (auto& v : b[l]) v = rng.uniform(-bound, bound);
            if (has_bn(l)) {
                gamma[l].assign(fan_out, 1.0);
                beta[l].assign(fan_out, 0.0);
            }
        }
    }

    std::size_t layer_count() const { return W.size(); }
    std::size_t in_dim() const { return spec.widths.front(); }
    std::size_t out_dim() const { return spec.widths.back(); }
    bool is_hidden(std::size_t l) const { return l + 1 < layer_count(); }
    bool has_bn(std::size_t l) const { return spec.batch_standardize && is_hidden(l); }

    Matrix forward(const Matrix& x) const {
        ForwardCache cache;
        return forward(x, cache);
    }

    Matrix forward(const Matrix& x, ForwardCache& cache) const {
        if (x.cols != in_dim()) throw DimMismatch("mlp forward: input width mismatch");
        const std::size_t L = layer_count();
        cache = ForwardCache{};
        cache.inputs.resize(L);
        cache.pre.resize(L);
        cache.xhat.resize(L);
        cache.istd.resize(L);
        Matrix cur = x;
        for (std::size_t l = 0; l < L; ++l) {
            cache.inputs[l] = cur;
            Matrix z(cur.rows, W[l].rows);
            for (std::size_t i = 0; i < cur.rows; ++i)
                for (std::size_t o = 0; o < W[l].rows; ++o) {
                    double s = b[l][o];
                    const double* wr = W[l].row(o);
                    const double* xr = cur.row(i);
                    for (std::size_t k = 0; k < W[l].cols; ++k) s += wr[k] * xr[k];
                    z.at(i, o) = s;
                }
            cache.pre[l] = z;
            if (has_bn(l)) {
                const std::size_t N = z.rows, F = z.cols;
                Matrix xh(N, F);
                cache.istd[l].resize(F);
                for (std::size_t j = 0; j < F; ++j) {
                    double mean = 0.0;
                    for (std::size_t i = 0; i < N; ++i) mean += z.at(i, j);
                    mean /= static_cast<double>(N);
                    double var = 0.0;
                    for (std::size_t i = 0; i < N; ++i) {
                        const double d = z.at(i, j) - mean;
                        var += d * d;
                    }
                    var /= static_cast<double>(N);
                    const double istd = 1.0 / std::sqrt(var + kBnEps);
                    cache.istd[l][j] = istd;
                    for (std::size_t i = 0; i < N; ++i) xh.at(i, j) = (z.at(i, j) - mean) * istd;
                }
                cache.xhat[l] = xh;
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t j = 0; j < F; ++j)
                        z.at(i, j) = gamma[l][j] * xh.at(i, j) + beta[l][j];
            }
            if (is_hidden(l))
                for (auto& v : z.data) v = v > 0.0 ? v : 0.0;
            cur = std::move(z);
        }
        cache.output = cur;
        cache.valid = true;
        return cur;
    }

    // Returns gradient w.r.t. the network input; parameter gradients go on the tape.
    Matrix backward(const ForwardCache& cache, const Matrix& upstream, GradientTape& tape) const {
        if (!cache.valid) throw NoForwardState("backward called without a cached forward pass");
        if (!upstream.same_shape(cache.output)) throw DimMismatch("backward: upstream shape mismatch");
        const std::size_t L = layer_count();
        tape = zero_tape();
        Matrix grad = upstream;
        for (std::size_t li = L; li-- > 0;) {
            if (is_hidden(li)) {
                // relu mask on the post-norm pre-activation
                const Matrix& pre = cache.pre[li];
                if (has_bn(li)) {
                    for (std::size_t i = 0; i < grad.rows; ++i)
                        for (std::size_t j = 0; j < grad.cols; ++j) {
                            const double act = gamma[li][j] * cache.xhat[li].at(i, j) + beta[li][j];
                            if (act <= 0.0) grad.at(i, j) = 0.0;
                        }
                } else {
                    for (std::size_t k = 0; k < grad.data.size(); ++k)
                        if (pre.data[k] <= 0.0) grad.data[k] = 0.0;
                }
            }
            if (has_bn(li)) {
                const Matrix& xh = cache.xhat[li];
                const std::size_t N = grad.rows, F = grad.cols;
                Matrix dz(N, F);
                for (std::size_t j = 0; j < F; ++j) {
                    double sum_dy = 0.0, sum_dyx = 0.0;
                    for (std::size_t i = 0; i < N; ++i) {
                        sum_dy += grad.at(i, j);
                        sum_dyx += grad.at(i, j) * xh.at(i, j);
                    }
                    tape.dbeta[li][j] += sum_dy;
                    tape.dgamma[li][j] += sum_dyx;
                    const double g = gamma[li][j];
                    const double istd = cache.istd[li][j];
                    for (std::size_t i = 0; i < N; ++i) {
                        const double dxhat = grad.at(i, j) * g;
                        dz.at(i, j) = istd / static_cast<double>(N) *
                                      (static_cast<double>(N) * dxhat - g * sum_dy * 1.0 -
                                       xh.at(i, j) * g * sum_dyx);
                    }
                }
                grad = std::move(dz);
            }
            // linear backward
            const Matrix& x = cache.inputs[li];
            for (std::size_t o = 0; o < W[li].rows; ++o) {
                double dbo = 0.0;
                for (std::size_t i = 0; i < grad.rows; ++i) dbo += grad.at(i, o);
                tape.db[li][o] += dbo;
            }
            for (std::size_t o = 0; o < W[li].rows; ++o)
                for (std::size_t k = 0; k < W[li].cols; ++k) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < grad.rows; ++i) s += grad.at(i, o) * x.at(i, k);
                    tape.dW[li].at(o, k) += s;
                }
            Matrix dx(grad.rows, W[li].cols);
            for (std::size_t i = 0; i < grad.rows; ++i)
                for (std::size_t k = 0; k < W[li].cols; ++k) {
                    double s = 0.0;
                    for (std::size_t o = 0; o < W[li].rows; ++o) s += grad.at(i, o) * W[li].at(o, k);
                    dx.at(i, k) = s;
                }
            grad = std::move(dx);
        }
        return grad;
    }

    GradientTape zero_tape() const {
        GradientTape t;
        const std::size_t L = layer_count();
        t.dW.resize(L);
        t.db.resize(L);
        t.dgamma.resize(L);
        t.dbeta.resize(L);
        for (std::size_t l = 0; l < L; ++l) {
            t.dW[l] = Matrix(W[l].rows, W[l].cols);
            t.db[l].assign(b[l].size(), 0.0);
            t.dgamma[l].assign(gamma[l].size(), 0.0);
            t.dbeta[l].assign(beta[l].size(), 0.0);
        }
        return t;
    }

    // Flat views over every scalar parameter, pinned order: per layer W, b, gamma, beta.
    std::vector<double*> param_view() {
        std::vector<double*> out;
        for (std::size_t l = 0; l < layer_count(); ++l) {
            for (auto& v : W[l].data) out.push_back(&v);
            for (auto& v : b[l]) out.push_back(&v);
            for (auto& v : gamma[l]) out.push_back(&v);
            for (auto& v : beta[l]) out.push_back(&v);
        }
        return out;
    }
    std::vector<const double*> param_view() const {
        std::vector<const double*> out;
        for (std::size_t l = 0; l < layer_count(); ++l) {
            for (const auto& v : W[l].data) out.push_back(&v);
            for (const auto& v : b[l]) out.push_back(&v);
            for (const auto& v : gamma[l]) out.push_back(&v);
            for (const auto& v : beta[l]) out.push_back(&v);
        }
        return out;
    }
};

inline std::vector<double> tape_flat(const GradientTape& t) {
    std::vector<double> out;
    for (std::size_t l = 0; l < t.dW.size(); ++l) {
        out.insert(out.end(), t.dW[l].data.begin(), t.dW[l].data.end());
        out.insert(out.end(), t.db[l].begin(), t.db[l].end());
        out.insert(out.end(), t.dgamma[l].begin(), t.dgamma[l].end());
        out.insert(out.end(), t.dbeta[l].begin(), t.dbeta[l].end());
    }
    return out;
}

inline void sgd_step(Mlp& net, const GradientTape& tape, double lr) {
    auto params = net.param_view();
    const auto grads = tape_flat(tape);
    if (params.size() != grads.size()) throw DimMismatch("sgd_step: tape does not match network");
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= lr * grads[i];
}

// theta_target <- m * theta_target + (1 - m) * theta_online
inline void ema_update(Mlp& target, const Mlp& online, double m) {
    if (!(target.spec == online.spec)) throw DimMismatch("ema_update: specs differ");
    auto t = target.param_view();
    auto o = online.param_view();
    for (std::size_t i = 0; i < t.size(); ++i) *t[i] = m * *t[i] + (1.0 - m) * *o[i];
}

} // namespace pipcdr
