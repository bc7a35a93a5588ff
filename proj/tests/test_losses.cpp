#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pipcdr/losses.hpp"

using namespace pipcdr;

namespace {

ViewPair random_pair(std::size_t n, std::size_t d, Rng& rng, bool with_target = false) {
    ViewPair p;
    p.za = oracle::random_unit_batch(n, d, rng);
    p.zb_target = oracle::random_unit_batch(n, d, rng);
    if (with_target) p.za_target = oracle::random_unit_batch(n, d, rng);
    return p;
}

Matrix repeat_row(const std::vector<double>& row, std::size_t n) {
    Matrix m(n, row.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < row.size(); ++k) m.at(i, k) = row[k];
    return m;
}

} // namespace

TEST_CASE("contrastive loss on a fully collapsed batch is log(2N-1)") {
    for (std::size_t n : {2u, 3u, 5u, 8u}) {
        Matrix z = repeat_row({0.6, 0.8}, n);
        ViewPair p{z, z, std::nullopt};
        LossOut out = info_nce(p, 0.1);
        CHECK(std::abs(out.value - std::log(2.0 * n - 1.0)) < 1e-12);
        for (double v : out.per_instance)
            CHECK(std::abs(v - std::log(2.0 * n - 1.0)) < 1e-12);
    }
}

TEST_CASE("contrastive loss matches the naive oracle") {
    Rng rng(101);
    for (double tau : {0.1, 0.5, 1.0}) {
        ViewPair p = random_pair(6, 5, rng);
        LossOut out = info_nce(p, tau);
        CHECK(std::abs(out.value - oracle::contrastive(p.za, p.zb_target, tau)) < 1e-10);
        double mean = 0.0;
        for (double v : out.per_instance) mean += v;
        CHECK(std::abs(mean / 6.0 - out.value) < 1e-12);
    }
}

TEST_CASE("contrastive gradient matches finite differences") {
    Rng rng(102);
    for (std::uint64_t s = 0; s < 3; ++s) {
        ViewPair p = random_pair(5, 4, rng);
        LossOut out = info_nce(p, 0.2);
        auto f = [&](const Matrix& za) { return oracle::contrastive(za, p.zb_target, 0.2); };
        CHECK(oracle::rel_err(out.grad_za, oracle::fd_grad(f, p.za)) < 1e-6);
    }
}

TEST_CASE("decoupled variant: collapsed two-instance batch at tau=1") {
    Matrix z = repeat_row({1.0, 0.0, 0.0}, 2);
    ViewPair p{z, z, std::nullopt};
    LossOut out = decoupled_info_nce(p, 1.0);
    CHECK(std::abs(out.alignment - (-1.0)) < 1e-12);
    CHECK(std::abs(out.uniformity - (1.0 + std::log(2.0))) < 1e-12);
    CHECK(std::abs(out.value - (out.alignment + out.uniformity)) < 1e-15);
}

TEST_CASE("decoupled variant matches the oracle, terms included") {
    Rng rng(103);
    for (double tau : {0.1, 0.7}) {
        ViewPair p = random_pair(7, 4, rng);
        double oa = 0.0, ou = 0.0;
        const double want = oracle::decoupled(p.za, p.zb_target, tau, &oa, &ou);
        LossOut out = decoupled_info_nce(p, tau);
        CHECK(std::abs(out.value - want) < 1e-10);
        CHECK(std::abs(out.alignment - oa) < 1e-10);
        CHECK(std::abs(out.uniformity - ou) < 1e-10);

        auto f = [&](const Matrix& za) { return oracle::decoupled(za, p.zb_target, tau); };
        CHECK(oracle::rel_err(out.grad_za, oracle::fd_grad(f, p.za)) < 1e-6);
    }
}

TEST_CASE("mean squared alignment: 0 when equal, 4 when antipodal, 2-2cos in general") {
    Matrix a{{1.0, 0.0}, {0.0, 1.0}};
    CHECK(alignment_byol(a, a).value == 0.0);

    Matrix neg = a;
    for (auto& v : neg.data) v = -v;
    LossOut anti = alignment_byol(a, neg);
    CHECK(std::abs(anti.value - 4.0) < 1e-15);
    CHECK(std::abs(anti.per_instance[0] - 4.0) < 1e-15);

    Rng rng(104);
    Matrix u = oracle::random_unit_batch(6, 5, rng);
    Matrix v = oracle::random_unit_batch(6, 5, rng);
    LossOut out = alignment_byol(u, v);
    double want = 0.0;
    for (std::size_t i = 0; i < u.rows; ++i)
        want += 2.0 - 2.0 * cosine_sim(u.row(i), v.row(i), u.cols);
    want /= static_cast<double>(u.rows);
    CHECK(std::abs(out.value - want) < 1e-12);

    auto f = [&](const Matrix& p) { return alignment_byol(p, v).value; };
    CHECK(oracle::rel_err(out.grad_za, oracle::fd_grad(f, u)) < 1e-6);
}

TEST_CASE("nearest neighbor picks the highest cosine, ties to the smallest index") {
    const double c = std::cos(0.2), s = std::sin(0.2);
    Matrix z{{1.0, 0.0}, {c, s}, {0.0, 1.0}};
    auto nn = nearest_neighbor_index(z);
    CHECK(nn[0] == 1);
    CHECK(nn[1] == 0); // cos(0.2) to row 0 beats cos(~1.37) to row 2
    CHECK(nn[2] == 1);

    Matrix tie{{1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}};
    auto tn = nearest_neighbor_index(tie);
    CHECK(tn[0] == 1); // rows 1 and 2 tie at cosine 0
    CHECK(tn[1] == 2);
    CHECK(tn[2] == 1);

    CHECK_THROWS_AS(nearest_neighbor_index(Matrix{{1.0, 0.0}}), BatchTooSmall);
}

TEST_CASE("proximity mix interpolates toward the neighbor") {
    Matrix z{{1.0, 0.0}, {0.0, 1.0}, {0.8, 0.6}};
    const std::vector<std::size_t> nn{2, 2, 0};
    Matrix m0 = pip_mix(z, nn, 0.0);
    for (std::size_t k = 0; k < z.data.size(); ++k) CHECK(m0.data[k] == z.data[k]);

    Matrix m1 = pip_mix(z, nn, 1.0);
    for (std::size_t i = 0; i < z.rows; ++i)
        for (std::size_t k = 0; k < z.cols; ++k) CHECK(m1.at(i, k) == z.at(nn[i], k));

    Matrix mh = pip_mix(z, nn, 0.5);
    for (std::size_t i = 0; i < z.rows; ++i)
        for (std::size_t k = 0; k < z.cols; ++k)
            CHECK(std::abs(mh.at(i, k) - 0.5 * (z.at(i, k) + z.at(nn[i], k))) < 1e-15);

    CHECK_THROWS_AS(pip_mix(z, std::vector<std::size_t>{0, 1}, 0.5), LengthMismatch);
}

TEST_CASE("random perturbation: zero sigma is identity, draws are deterministic and centered") {
    Rng rng(105);
    Matrix z = oracle::random_unit_batch(4, 3, rng);
    Rng r0(7);
    Matrix v0 = psa_mix(z, 0.0, r0);
    for (std::size_t k = 0; k < z.data.size(); ++k) CHECK(v0.data[k] == z.data[k]);

    Rng ra(7), rb(7);
    Matrix va = psa_mix(z, 0.3, ra);
    Matrix vb = psa_mix(z, 0.3, rb);
    for (std::size_t k = 0; k < va.data.size(); ++k) CHECK(va.data[k] == vb.data[k]);

    // Monte Carlo: displacement mean ~0, per-coordinate variance ~sigma^2
    Rng rmc(9);
    const double sigma = 0.5;
    double sum = 0.0, sq = 0.0;
    const int reps = 20000;
    for (int r = 0; r < reps; ++r) {
        Matrix v = psa_mix(z, sigma, rmc);
        for (std::size_t k = 0; k < z.data.size(); ++k) {
            const double dlt = v.data[k] - z.data[k];
            sum += dlt;
            sq += dlt * dlt;
        }
    }
    const double n = static_cast<double>(reps) * static_cast<double>(z.data.size());
    CHECK(std::abs(sum / n) < 4.0 * sigma / std::sqrt(n));
    CHECK(std::abs(sq / n - sigma * sigma) < 0.01);
}

TEST_CASE("proximity loss with identity predictor and zero sigma reduces to alignment") {
    Rng rng(106);
    Matrix za = oracle::random_unit_batch(5, 4, rng);
    Matrix zb = oracle::random_unit_batch(5, 4, rng);
    LossOut pip = pip_loss(nullptr, za, zb, 0.0);
    LossOut ref = alignment_byol(za, zb);
    CHECK(std::abs(pip.value - ref.value) < 1e-12);
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(std::abs(pip.per_instance[i] - ref.per_instance[i]) < 1e-12);
}

TEST_CASE("proximity loss gradients match finite differences, predictor included") {
    Rng rng(107);
    Rng netr(108);
    Mlp predictor(MlpSpec{{4, 6, 4}, false}, netr);
    for (double sigma : {0.0, 0.001, 0.3}) {
        Matrix za(5, 4);
        for (auto& v : za.data) v = rng.normal(); // raw, intentionally not unit
        Matrix zb = oracle::random_unit_batch(5, 4, rng);
        LossOut out = pip_loss(&predictor, za, zb, sigma);
        REQUIRE(out.pred_tape.has_value());

        auto fz = [&](const Matrix& z) { return pip_loss(&predictor, z, zb, sigma).value; };
        CHECK(oracle::rel_err(out.grad_za, oracle::fd_grad(fz, za)) < 1e-5);

        auto fparams = [&]() { return pip_loss(&predictor, za, zb, sigma).value; };
        const auto fd = oracle::fd_grad_params(fparams, predictor.param_view());
        CHECK(oracle::rel_err(tape_flat(*out.pred_tape), fd) < 1e-5);
    }
}

TEST_CASE("proximity loss aux gradient is the raw-output gradient") {
    Rng rng(109);
    Matrix za = oracle::random_unit_batch(4, 3, rng);
    Matrix zb = oracle::random_unit_batch(4, 3, rng);
    LossOut out = pip_loss(nullptr, za, zb, 0.4);
    REQUIRE(out.grad_aux.has_value());
    // without a predictor the raw output is the mixed vector itself
    const Matrix v = pip_mix(l2_normalize_rows(za), 0.4);
    auto f = [&](const Matrix& vv) {
        const Matrix pu = l2_normalize_rows(vv);
        double s = 0.0;
        for (std::size_t k = 0; k < pu.data.size(); ++k) {
            const double diff = pu.data[k] - zb.data[k];
            s += diff * diff;
        }
        return s / static_cast<double>(pu.rows);
    };
    CHECK(oracle::rel_err(*out.grad_aux, oracle::fd_grad(f, v)) < 1e-5);
}

TEST_CASE("label-aware contrastive with all-distinct labels equals the plain one") {
    Rng rng(110);
    ViewPair p = random_pair(6, 4, rng);
    const std::vector<int> labels{0, 1, 2, 3, 4, 5};
    LossOut sup = supervised_contrastive(p, labels, 0.2);
    LossOut plain = info_nce(p, 0.2);
    CHECK(std::abs(sup.value - plain.value) < 1e-12);
    CHECK(oracle::rel_err(sup.grad_za, plain.grad_za) < 1e-12);
}

TEST_CASE("label-aware contrastive matches the oracle and finite differences") {
    Rng rng(111);
    ViewPair p = random_pair(7, 5, rng);
    const std::vector<int> labels{0, 1, 0, 2, 1, 0, 2};
    for (double tau : {0.1, 0.5}) {
        LossOut out = supervised_contrastive(p, labels, tau);
        CHECK(std::abs(out.value - oracle::label_contrastive(p.za, p.zb_target, labels, tau)) <
              1e-10);
        auto f = [&](const Matrix& za) {
            return oracle::label_contrastive(za, p.zb_target, labels, tau);
        };
        CHECK(oracle::rel_err(out.grad_za, oracle::fd_grad(f, p.za)) < 1e-6);
    }
}

TEST_CASE("label-aware contrastive rejects degenerate label sets") {
    Rng rng(112);
    ViewPair p = random_pair(4, 3, rng);
    CHECK_THROWS_AS(supervised_contrastive(p, {1, 1, 1, 1}, 0.1), SingleCluster);
    CHECK_THROWS_AS(supervised_contrastive(p, {0, 1, 0}, 0.1), LengthMismatch);
}

TEST_CASE("dispersion surrogate with singleton labels equals the decoupled loss") {
    // with za_target == za every cross term the surrogate reads from the target
    // coincides with what the decoupled loss reads from the online side
    Rng rng(113);
    ViewPair p = random_pair(6, 4, rng);
    p.za_target = p.za;
    const std::vector<int> labels{0, 1, 2, 3, 4, 5};
    LossOut cdr = cdr_surrogate(p, labels, 0.2);
    LossOut dec = decoupled_info_nce(p, 0.2);
    CHECK(std::abs(cdr.value - dec.value) < 1e-10);
    CHECK(std::abs(cdr.alignment - dec.alignment) < 1e-10);
    CHECK(std::abs(cdr.uniformity - dec.uniformity) < 1e-10);
}

TEST_CASE("dispersion surrogate matches the oracle and finite differences") {
    Rng rng(114);
    ViewPair p = random_pair(7, 5, rng, true);
    const std::vector<int> labels{0, 1, 0, 2, 1, 0, 2};
    for (double tau : {0.1, 0.6}) {
        LossOut out = cdr_surrogate(p, labels, tau);
        CHECK(std::abs(out.value -
                       oracle::dispersion_surrogate(p.za, p.zb_target, *p.za_target, labels, tau)) <
              1e-10);
        auto f = [&](const Matrix& za) {
            return oracle::dispersion_surrogate(za, p.zb_target, *p.za_target, labels, tau);
        };
        CHECK(oracle::rel_err(out.grad_za, oracle::fd_grad(f, p.za)) < 1e-6);
    }
}

TEST_CASE("dispersion surrogate stays finite when one cluster swallows the batch") {
    Rng rng(115);
    ViewPair p = random_pair(5, 4, rng, true);
    const std::vector<int> labels{3, 3, 3, 3, 3};
    LossOut out = cdr_surrogate(p, labels, 0.1);
    CHECK(std::isfinite(out.value));
    CHECK(out.uniformity == 0.0);
    CHECK(std::abs(out.value - out.alignment) < 1e-15);
    auto f = [&](const Matrix& za) {
        return oracle::dispersion_surrogate(za, p.zb_target, *p.za_target, labels, 0.1);
    };
    CHECK(oracle::rel_err(out.grad_za, oracle::fd_grad(f, p.za)) < 1e-6);
}

TEST_CASE("dispersion surrogate requires the target view of the anchor") {
    Rng rng(116);
    ViewPair p = random_pair(4, 3, rng, false);
    CHECK_THROWS_AS(cdr_surrogate(p, {0, 1, 0, 1}, 0.1), DimMismatch);
}

TEST_CASE("weighted blend of losses") {
    Rng rng(117);
    Matrix za(5, 4);
    for (auto& v : za.data) v = rng.normal();
    Matrix zb = oracle::random_unit_batch(5, 4, rng);
    Rng netr(118);
    Mlp predictor(MlpSpec{{4, 5, 4}, false}, netr);
    LossOut a = pip_loss(&predictor, za, zb, 0.1);

    ViewPair p;
    p.za = l2_normalize_rows(za);
    p.zb_target = zb;
    p.za_target = oracle::random_unit_batch(5, 4, rng);
    LossOut b = cdr_surrogate(p, {0, 1, 0, 1, 0}, 0.2);
    // map the surrogate gradient back through the normalization so both live
    // in raw-za coordinates
    b.grad_za = l2_normalize_rows_backward(za, b.grad_za);

    for (double w : {0.0, 0.5, 1.0}) {
        LossOut c = combined_loss(a, b, w);
        CHECK(std::abs(c.value - (w * a.value + (1.0 - w) * b.value)) < 1e-15);
        for (std::size_t k = 0; k < c.grad_za.data.size(); ++k)
            CHECK(std::abs(c.grad_za.data[k] -
                           (w * a.grad_za.data[k] + (1.0 - w) * b.grad_za.data[k])) < 1e-15);
        REQUIRE(c.pred_tape.has_value());
        auto got = tape_flat(*c.pred_tape);
        auto at = tape_flat(*a.pred_tape);
        for (std::size_t k = 0; k < got.size(); ++k)
            CHECK(std::abs(got[k] - w * at[k]) < 1e-15);
    }
    CHECK_THROWS_AS(combined_loss(a, b, 1.5), ConfigInvalid);
    CHECK_THROWS_AS(combined_loss(a, b, -0.1), ConfigInvalid);
}

TEST_CASE("losses are equivariant under batch permutation") {
    Rng rng(119);
    ViewPair p = random_pair(6, 4, rng, true);
    const std::vector<int> labels{0, 1, 0, 2, 1, 0};
    const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};

    ViewPair q;
    q.za = Matrix(6, 4);
    q.zb_target = Matrix(6, 4);
    q.za_target = Matrix(6, 4);
    std::vector<int> plabels(6);
    for (std::size_t i = 0; i < 6; ++i) {
        plabels[i] = labels[perm[i]];
        for (std::size_t k = 0; k < 4; ++k) {
            q.za.at(i, k) = p.za.at(perm[i], k);
            q.zb_target.at(i, k) = p.zb_target.at(perm[i], k);
            q.za_target->at(i, k) = p.za_target->at(perm[i], k);
        }
    }

    LossOut o1 = info_nce(p, 0.2);
    LossOut o2 = info_nce(q, 0.2);
    CHECK(std::abs(o1.value - o2.value) < 1e-12);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(std::abs(o2.per_instance[i] - o1.per_instance[perm[i]]) < 1e-12);

    LossOut c1 = cdr_surrogate(p, labels, 0.2);
    LossOut c2 = cdr_surrogate(q, plabels, 0.2);
    CHECK(std::abs(c1.value - c2.value) < 1e-12);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(std::abs(c2.per_instance[i] - c1.per_instance[perm[i]]) < 1e-12);
}

TEST_CASE("loss evaluation leaves the target views untouched") {
    Rng rng(120);
    ViewPair p = random_pair(5, 4, rng, true);
    const Matrix zb_copy = p.zb_target;
    const Matrix ta_copy = *p.za_target;
    (void)info_nce(p, 0.1);
    (void)decoupled_info_nce(p, 0.1);
    (void)supervised_contrastive(p, {0, 1, 0, 1, 1}, 0.1);
    (void)cdr_surrogate(p, {0, 1, 0, 1, 1}, 0.1);
    for (std::size_t k = 0; k < zb_copy.data.size(); ++k) {
        REQUIRE(p.zb_target.data[k] == zb_copy.data[k]);
        REQUIRE(p.za_target->data[k] == ta_copy.data[k]);
    }
}

TEST_CASE("temperature must be positive and rows near unit") {
    Rng rng(121);
    ViewPair p = random_pair(3, 3, rng);
    CHECK_THROWS_AS(info_nce(p, 0.0), ConfigInvalid);
    CHECK_THROWS_AS(info_nce(p, -0.5), ConfigInvalid);
    ViewPair bad = p;
    for (auto& v : bad.za.data) v *= 3.0;
    CHECK_THROWS_AS(info_nce(bad, 0.1), ZeroRow);
}
