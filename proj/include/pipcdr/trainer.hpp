#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "pipcdr/clustering.hpp"
#include "pipcdr/data.hpp"
#include "pipcdr/losses.hpp"
#include "pipcdr/metrics.hpp"
#include "pipcdr/network_stack.hpp"

namespace pipcdr {

enum class FeatureSource { encoder, projector };

inline FeatureSource parse_feature_source(const std::string& s) {
    if (s == "encoder") return FeatureSource::encoder;
    if (s == "projector") return FeatureSource::projector;
    throw ConfigInvalid("feature_source must be 'encoder' or 'projector', got '" + s + "'");
}

struct TrainConfig {
    std::size_t K = 8;
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    std::size_t warmup_epochs = 10;   // epochs before pseudo-labels and the surrogate kick in
    std::size_t kmeans_every = 1;     // refresh period r
    std::size_t queue_capacity = 0;
    std::size_t kmeans_n_init = 5;
    std::size_t kmeans_max_iter = 100;
    double kmeans_tol = 1e-6;

    double tau = 0.1;
    double sigma = 0.001;
    double w = 0.91;
    double momentum = 0.996;

    double lr_base = 0.05; // peak lr = lr_base * batch_size / 256
    std::size_t lr_warmup_epochs = 10;
    double predictor_lr_mult = 10.0;

    std::vector<std::size_t> encoder_hidden = {64, 32};
    std::size_t proj_dim = 16;
    std::size_t predictor_hidden = 32;
    bool batch_standardize = false;
    bool predictor_enabled = true;
    FeatureSource feature_source = FeatureSource::projector;

    double aug_noise_std = 0.1;
    double aug_mask_prob = 0.0;
    double aug_scale_jitter = 0.1;

    std::uint64_t seed = 1;

    void validate() const {
        if (K < 2) throw ConfigInvalid("K must be >= 2");
        if (batch_size < 2) throw ConfigInvalid("batch_size must be >= 2");
        if (kmeans_every == 0) throw ConfigInvalid("kmeans_every must be >= 1");
        if (kmeans_n_init == 0) throw ConfigInvalid("kmeans_n_init must be >= 1");
        if (kmeans_max_iter == 0) throw ConfigInvalid("kmeans_max_iter must be >= 1");
        if (!(tau > 0.0)) throw ConfigInvalid("tau must be > 0");
        if (!(sigma >= 0.0 && sigma <= 1.0)) throw ConfigInvalid("sigma must be in [0, 1]");
        if (!(w >= 0.0 && w <= 1.0)) throw ConfigInvalid("w must be in [0, 1]");
        if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigInvalid("momentum must be in [0, 1]");
        if (!(lr_base > 0.0)) throw ConfigInvalid("lr_base must be > 0");
        if (!(predictor_lr_mult > 0.0)) throw ConfigInvalid("predictor_lr_mult must be > 0");
        if (proj_dim < 2) throw ConfigInvalid("proj_dim must be >= 2");
        if (predictor_hidden == 0) throw ConfigInvalid("predictor_hidden must be >= 1");
        for (auto h : encoder_hidden)
            if (h == 0) throw ConfigInvalid("encoder_hidden widths must be >= 1");
        if (!(aug_noise_std >= 0.0)) throw ConfigInvalid("aug_noise_std must be >= 0");
        if (!(aug_mask_prob >= 0.0 && aug_mask_prob <= 1.0))
            throw ConfigInvalid("aug_mask_prob must be in [0, 1]");
        if (!(aug_scale_jitter >= 0.0)) throw ConfigInvalid("aug_scale_jitter must be >= 0");
    }

    MlpSpec encoder_spec(std::size_t input_dim) const {
        MlpSpec s;
        s.widths.push_back(input_dim);
        for (auto h : encoder_hidden) s.widths.push_back(h);
        s.widths.push_back(proj_dim);
        s.batch_standardize = batch_standardize;
        return s;
    }
    MlpSpec predictor_spec() const {
        return MlpSpec{{proj_dim, predictor_hidden, proj_dim}, batch_standardize};
    }
};

// Linear warmup to the scaled peak, then cosine decay to zero.
inline double lr_schedule(const TrainConfig& cfg, std::size_t epoch) {
    const double peak = cfg.lr_base * static_cast<double>(cfg.batch_size) / 256.0;
    if (cfg.lr_warmup_epochs > 0 && epoch < cfg.lr_warmup_epochs)
        return peak * static_cast<double>(epoch + 1) / static_cast<double>(cfg.lr_warmup_epochs);
    const std::size_t start = cfg.lr_warmup_epochs;
    const std::size_t span = cfg.epochs > start ? cfg.epochs - start : 1;
    const double t = static_cast<double>(epoch - start) / static_cast<double>(span);
    return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(1.0, t)));
}

// Evaluation features from the target network: the projector output, or the
// activations feeding the final linear layer. Normalized rows either way.
inline Matrix extract_features(const Mlp& net, const Matrix& x, FeatureSource source) {
    if (source == FeatureSource::projector) return l2_normalize_rows(net.forward(x));
    ForwardCache cache;
    net.forward(x, cache);
    return l2_normalize_rows(cache.inputs.back());
}

// RNG stream layout: 1 and 2 initialize the networks (inside NetworkStack),
// then per epoch e: 10+4e shuffle, 11+4e augmentation, 12+4e k-means,
// 13+4e evaluation-only k-means.
struct TrainState {
    TrainConfig cfg;
    NetworkStack stack;
    MemoryQueue queue{0};
    std::optional<PseudoLabeling> pseudo;
    Rng master{0};
    std::size_t kmeans_runs = 0;
};

inline TrainState init_train_state(std::size_t input_dim, const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.master = Rng(cfg.seed);
    st.stack = NetworkStack(cfg.encoder_spec(input_dim), cfg.predictor_spec(), cfg.momentum,
                            st.master);
    st.stack.predictor_enabled = cfg.predictor_enabled;
    st.queue = MemoryQueue(cfg.queue_capacity);
    return st;
}

// Cluster the full dataset's target features (pooled with the queue) and
// store centroids plus per-row pseudo-labels.
inline void first_m_step(TrainState& st, const Matrix& features, std::size_t epoch) {
    const Matrix feats = extract_features(st.stack.target, features, st.cfg.feature_source);
    const Matrix pooled = cluster_pool(feats, st.queue);
    KMeansOptions opt{st.cfg.kmeans_max_iter, st.cfg.kmeans_tol, st.cfg.kmeans_n_init};
    PseudoLabeling pl = spherical_kmeans(pooled, st.cfg.K, st.master.fork(12 + 4 * epoch), opt);
    pl.assign.resize(features.rows); // dataset rows come first in the pool
    st.pseudo = std::move(pl);
    st.kmeans_runs++;
}

struct StepLoss {
    double total = 0.0;
    double pip = 0.0;
    double cdr = 0.0;
    GradientTape online_tape;
    GradientTape pred_tape;
    bool has_pred = false;
};

namespace detail {

struct DirectionOut {
    double pip = 0.0;
    double cdr = 0.0;
    GradientTape online_tape;
    GradientTape pred_tape;
    bool has_pred = false;
};

inline DirectionOut direction_loss(const NetworkStack& stack, const Matrix& x_anchor,
                                   const Matrix& x_other, const std::vector<int>* labels,
                                   const TrainConfig& cfg, double w_pip, double w_cdr) {
    DirectionOut out;
    ForwardCache cache;
    const Matrix ha = stack.online.forward(x_anchor, cache);
    const Matrix tb = l2_normalize_rows(stack.target.forward(x_other));

    LossOut pip = pip_loss(stack.predictor_or_null(), ha, tb, cfg.sigma);
    out.pip = pip.value;
    Matrix gha(ha.rows, ha.cols);
    for (std::size_t k = 0; k < gha.data.size(); ++k) gha.data[k] = w_pip * pip.grad_za.data[k];

    if (labels && w_cdr > 0.0) {
        const Matrix ta = l2_normalize_rows(stack.target.forward(x_anchor));
        ViewPair vp{l2_normalize_rows(ha), tb, ta};
        LossOut cdr = cdr_surrogate(vp, *labels, cfg.tau);
        out.cdr = cdr.value;
        const Matrix gcdr = l2_normalize_rows_backward(ha, cdr.grad_za);
        for (std::size_t k = 0; k < gha.data.size(); ++k) gha.data[k] += w_cdr * gcdr.data[k];
    }
    // symmetrized mean over the two directions
    for (auto& v : gha.data) v *= 0.5;
    stack.online.backward(cache, gha, out.online_tape);
    if (pip.pred_tape) {
        out.pred_tape = std::move(*pip.pred_tape);
        out.pred_tape.scale(0.5 * w_pip);
        out.has_pred = true;
    }
    return out;
}

} // namespace detail

// Symmetrized step loss and parameter gradients for one augmented batch.
// labels == nullptr (or a pip weight of 1) runs the warmup objective.
inline StepLoss compute_step_loss(const NetworkStack& stack, const Matrix& xa, const Matrix& xb,
                                  const std::vector<int>* labels, const TrainConfig& cfg) {
    const bool use_cdr = labels != nullptr;
    const double w_pip = use_cdr ? cfg.w : 1.0;
    const double w_cdr = use_cdr ? 1.0 - cfg.w : 0.0;
    detail::DirectionOut ab = detail::direction_loss(stack, xa, xb, labels, cfg, w_pip, w_cdr);
    detail::DirectionOut ba = detail::direction_loss(stack, xb, xa, labels, cfg, w_pip, w_cdr);
    StepLoss out;
    out.pip = 0.5 * (ab.pip + ba.pip);
    out.cdr = 0.5 * (ab.cdr + ba.cdr);
    out.total = w_pip * out.pip + w_cdr * out.cdr;
    out.online_tape = std::move(ab.online_tape);
    out.online_tape.add(ba.online_tape);
    out.has_pred = ab.has_pred;
    if (ab.has_pred) {
        out.pred_tape = std::move(ab.pred_tape);
        out.pred_tape.add(ba.pred_tape);
    }
    return out;
}

// One optimization step: push queue features, descend online + predictor,
// then move the target by EMA. Exactly one EMA update per step.
inline StepLoss second_m_step(TrainState& st, const Matrix& xa, const Matrix& xb,
                              const std::vector<int>* labels, double lr) {
    if (xa.rows < 2) throw BatchTooSmall("second_m_step needs >= 2 instances");
    if (st.cfg.queue_capacity > 0)
        st.queue.push(extract_features(st.stack.target, xb, st.cfg.feature_source));
    StepLoss sl = compute_step_loss(st.stack, xa, xb, labels, st.cfg);
    sgd_step(st.stack.online, sl.online_tape, lr);
    if (sl.has_pred && st.stack.predictor_enabled)
        sgd_step(st.stack.predictor, sl.pred_tape, lr * st.cfg.predictor_lr_mult);
    ema_update(st.stack);
    st.stack.step++;
    return sl;
}

struct TrainResult {
    std::vector<MetricsReport> history;
    std::vector<int> final_assign;
    std::optional<PseudoLabeling> pseudo;
    TrainState state;
};

using EpochCallback = std::function<void(const TrainState&, const MetricsReport&)>;

inline TrainResult train(const Dataset& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = nullptr) {
    cfg.validate();
    const std::size_t N = data.features.rows;
    if (N < 2) throw DegenerateBatch("dataset needs at least 2 instances");
    if (N < cfg.K) throw TooFewPoints("dataset smaller than K");

    TrainState st = init_train_state(data.features.cols, cfg);
    const AugmentSpec aug{cfg.aug_noise_std, cfg.aug_mask_prob, cfg.aug_scale_jitter};

    TrainResult result;
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), 0);

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const double lr = lr_schedule(cfg, e);
        if (e >= cfg.warmup_epochs && (e - cfg.warmup_epochs) % cfg.kmeans_every == 0)
            first_m_step(st, data.features, e);

        Rng shuffle_rng = st.master.fork(10 + 4 * e);
        for (std::size_t i = N; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform_int(i));
            std::swap(idx[i - 1], idx[j]);
        }
        Rng aug_rng = st.master.fork(11 + 4 * e);

        double pip_sum = 0.0, cdr_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < N; start += cfg.batch_size) {
            const std::size_t m = std::min(cfg.batch_size, N - start);
            if (m < 2) break; // drop a trailing singleton batch
            Matrix xa(m, data.features.cols), xb(m, data.features.cols);
            std::vector<int> labels(m);
            for (std::size_t r = 0; r < m; ++r) {
                const std::size_t src = idx[start + r];
                augment_row(data.features.row(src), data.features.cols, aug, aug_rng, xa.row(r));
                augment_row(data.features.row(src), data.features.cols, aug, aug_rng, xb.row(r));
                if (st.pseudo) labels[r] = st.pseudo->assign[src];
            }
            const StepLoss sl = second_m_step(st, xa, xb, st.pseudo ? &labels : nullptr, lr);
            pip_sum += sl.pip;
            cdr_sum += sl.cdr;
            ++steps;
        }

        const Matrix feats = extract_features(st.stack.target, data.features, cfg.feature_source);
        std::vector<int> pred;
        if (st.pseudo) {
            pred = assign_batch(*st.pseudo, feats);
        } else {
            KMeansOptions opt{cfg.kmeans_max_iter, cfg.kmeans_tol, cfg.kmeans_n_init};
            pred = spherical_kmeans(feats, cfg.K, st.master.fork(13 + 4 * e), opt).assign;
        }
        MetricsReport rep;
        rep.epoch = static_cast<long>(e);
        if (data.labels) {
            rep.nmi = nmi(data.labels->labels, pred);
            rep.ami = ami(data.labels->labels, pred);
            rep.ari = ari(data.labels->labels, pred);
            rep.acc = clustering_accuracy(data.labels->labels, pred);
        }
        rep.imbalance_ratio = imbalance_ratio(pred, cfg.K);
        rep.std_uniformity = std_uniformity(feats);
        rep.loss_pip = steps ? pip_sum / static_cast<double>(steps) : 0.0;
        rep.loss_cdr = steps ? cdr_sum / static_cast<double>(steps) : 0.0;
        result.history.push_back(rep);
        if (on_epoch) on_epoch(st, rep);
    }

    const Matrix feats = extract_features(st.stack.target, data.features, cfg.feature_source);
    if (st.pseudo) {
        result.final_assign = assign_batch(*st.pseudo, feats);
    } else {
        KMeansOptions opt{cfg.kmeans_max_iter, cfg.kmeans_tol, cfg.kmeans_n_init};
        result.final_assign =
            spherical_kmeans(feats, cfg.K, st.master.fork(13 + 4 * cfg.epochs), opt).assign;
    }
    result.pseudo = st.pseudo;
    result.state = std::move(st);
    return result;
}

} // namespace pipcdr
