#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pipcdr/clustering.hpp"
#include "pipcdr/metrics.hpp"

using namespace pipcdr;

namespace {

double inertia_of(const Matrix& x_unit, const Matrix& centroid_row) {
    double s = 0.0;
    for (std::size_t i = 0; i < x_unit.rows; ++i)
        s += 1.0 - cosine_sim(x_unit.row(i), centroid_row.row(0), x_unit.cols);
    return s;
}

} // namespace

TEST_CASE("single cluster centroid is the normalized mean direction") {
    Rng rng(201);
    Matrix x = oracle::random_unit_batch(40, 5, rng);
    PseudoLabeling p = spherical_kmeans(x, 1, Rng(202));
    REQUIRE(p.centroids.rows == 1);

    Matrix mean(1, 5);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t k = 0; k < 5; ++k) mean.at(0, k) += x.at(i, k);
    mean = l2_normalize_rows(mean);
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(p.centroids.at(0, k) - mean.at(0, k)) < 1e-9);

    // no random unit direction does better
    const double got = inertia_of(x, p.centroids);
    CHECK(std::abs(got - p.inertia) < 1e-9);
    Rng cand_rng(203);
    for (int c = 0; c < 1000; ++c) {
        Matrix cand = oracle::random_unit_batch(1, 5, cand_rng);
        CHECK(inertia_of(x, cand) >= got - 1e-9);
    }
}

TEST_CASE("as many clusters as points gives zero inertia and a bijection") {
    Rng rng(204);
    Matrix x = oracle::random_unit_batch(6, 4, rng);
    PseudoLabeling p = spherical_kmeans(x, 6, Rng(205));
    CHECK(p.inertia < 1e-9);
    std::vector<int> seen(6, 0);
    for (int a : p.assign) seen[static_cast<std::size_t>(a)]++;
    for (int s : seen) CHECK(s == 1);
}

TEST_CASE("three orthogonal bundles recover the planted partition") {
    // tight cones around e1, e2, e3; the partition must come back exactly
    int exact = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(300 + seed);
        const std::size_t per = 12;
        Matrix x(3 * per, 3);
        std::vector<int> truth(3 * per);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < per; ++i) {
                const std::size_t r = c * per + i;
                truth[r] = static_cast<int>(c);
                for (std::size_t k = 0; k < 3; ++k)
                    x.at(r, k) = (k == c ? 1.0 : 0.0) + 0.05 * rng.normal();
            }
        PseudoLabeling p = spherical_kmeans(x, 3, rng.fork(77));
        if (ari(truth, p.assign) == 1.0) ++exact;
    }
    CHECK(exact >= 95);
}

TEST_CASE("batch assignment matches a brute-force scan") {
    Rng rng(206);
    PseudoLabeling p;
    p.K = 4;
    p.centroids = oracle::random_unit_batch(4, 5, rng);
    Matrix feats = oracle::random_unit_batch(30, 5, rng);
    std::vector<int> got = assign_batch(p, feats);
    for (std::size_t i = 0; i < feats.rows; ++i) {
        double best = -2.0;
        int bk = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            const double s = cosine_sim(feats.row(i), p.centroids.row(k), 5);
            if (s > best) {
                best = s;
                bk = static_cast<int>(k);
            }
        }
        CHECK(got[i] == bk);
    }

    // centroids assign to themselves; ties resolve to the smaller index
    std::vector<int> self = assign_batch(p, p.centroids);
    for (std::size_t k = 0; k < 4; ++k) CHECK(self[k] == static_cast<int>(k));
    PseudoLabeling dup;
    dup.K = 3;
    dup.centroids = Matrix{{1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}};
    std::vector<int> t = assign_batch(dup, Matrix{{0.0, 1.0}});
    CHECK(t[0] == 1);
}

TEST_CASE("inertia traces never increase") {
    Rng data_rng(207);
    std::size_t checked = 0;
    for (std::uint64_t inst = 0; inst < 100; ++inst) {
        Matrix x = oracle::random_unit_batch(24, 4, data_rng);
        std::vector<std::vector<double>> traces;
        KMeansOptions opt;
        opt.n_init = 3;
        (void)spherical_kmeans(x, 4, Rng(400 + inst), opt, &traces);
        REQUIRE(traces.size() == 3);
        for (const auto& tr : traces) {
            REQUIRE(!tr.empty());
            for (std::size_t t = 1; t < tr.size(); ++t) {
                CHECK(tr[t] <= tr[t - 1] + 1e-9);
                ++checked;
            }
        }
    }
    CHECK(checked > 100); // the sweep actually iterated
}

TEST_CASE("restarts are deterministic and keep the best run") {
    Rng rng(208);
    Matrix x = oracle::random_unit_batch(40, 6, rng);
    PseudoLabeling a = spherical_kmeans(x, 5, Rng(209));
    PseudoLabeling b = spherical_kmeans(x, 5, Rng(209));
    CHECK(a.assign == b.assign);
    CHECK(a.inertia == b.inertia);
    for (std::size_t k = 0; k < a.centroids.data.size(); ++k)
        REQUIRE(a.centroids.data[k] == b.centroids.data[k]);

    // the multi-restart winner is at least as good as each single restart
    KMeansOptions one;
    one.n_init = 1;
    PseudoLabeling multi = spherical_kmeans(x, 5, Rng(209));
    for (std::size_t r = 0; r < 5; ++r) {
        std::vector<std::vector<double>> tr;
        KMeansOptions opt = one;
        PseudoLabeling single =
            detail::kmeans_single(l2_normalize_rows(x), 5, Rng(209).fork(r), opt, nullptr);
        CHECK(multi.inertia <= single.inertia + 1e-12);
    }
}

TEST_CASE("duplicated points do not break the solver") {
    Matrix x(9, 3);
    for (std::size_t i = 0; i < 9; ++i) {
        x.at(i, 0) = 1.0; // all nine points identical
    }
    PseudoLabeling p = spherical_kmeans(x, 3, Rng(210));
    CHECK(p.centroids.rows == 3);
    CHECK(p.assign.size() == 9);
    CHECK(std::isfinite(p.inertia));
    for (int a : p.assign) {
        CHECK(a >= 0);
        CHECK(a < 3);
    }
}

TEST_CASE("too few points or bad options are rejected") {
    Rng rng(211);
    Matrix x = oracle::random_unit_batch(3, 4, rng);
    CHECK_THROWS_AS(spherical_kmeans(x, 4, Rng(212)), TooFewPoints);
    CHECK_THROWS_AS(spherical_kmeans(x, 0, Rng(212)), ConfigInvalid);
    KMeansOptions opt;
    opt.n_init = 0;
    CHECK_THROWS_AS(spherical_kmeans(x, 2, Rng(212), opt), ConfigInvalid);
}

TEST_CASE("memory queue is FIFO with stable ages") {
    MemoryQueue q(4);
    CHECK(q.size() == 0);
    Matrix b1{{1.0, 0.0}, {2.0, 0.0}};
    Matrix b2{{3.0, 0.0}, {4.0, 0.0}};
    Matrix b3{{5.0, 0.0}};
    q.push(b1);
    q.push(b2);
    CHECK(q.size() == 4);
    q.push(b3); // evicts the oldest row (1, 0)
    CHECK(q.size() == 4);
    Matrix m = q.as_matrix();
    CHECK(m.at(0, 0) == 2.0);
    CHECK(m.at(1, 0) == 3.0);
    CHECK(m.at(2, 0) == 4.0);
    CHECK(m.at(3, 0) == 5.0);
    const auto ages = q.ages();
    REQUIRE(ages.size() == 4);
    for (std::size_t i = 1; i < ages.size(); ++i) CHECK(ages[i] == ages[i - 1] + 1);

    CHECK_THROWS_AS(q.push(Matrix{{1.0, 2.0, 3.0}}), DimMismatch);
}

TEST_CASE("zero-capacity queue swallows pushes") {
    MemoryQueue q(0);
    q.push(Matrix{{1.0, 2.0}});
    CHECK(q.size() == 0);
    Matrix batch{{9.0, 9.0}};
    Matrix pooled = cluster_pool(batch, q);
    CHECK(pooled.rows == 1);
    CHECK(pooled.at(0, 0) == 9.0);
}

TEST_CASE("pooling puts batch rows before queue rows") {
    MemoryQueue q(3);
    q.push(Matrix{{10.0, 0.0}, {11.0, 0.0}});
    Matrix batch{{1.0, 0.0}, {2.0, 0.0}};
    Matrix pooled = cluster_pool(batch, q);
    REQUIRE(pooled.rows == 4);
    CHECK(pooled.at(0, 0) == 1.0);
    CHECK(pooled.at(1, 0) == 2.0);
    CHECK(pooled.at(2, 0) == 10.0);
    CHECK(pooled.at(3, 0) == 11.0);
}

TEST_CASE("planted well-separated mixture on the sphere is recovered") {
    // five random centers at pairwise angle > 60 degrees, tight clusters
    Rng rng(213);
    Matrix centers(0, 8);
    while (centers.rows < 5) {
        Matrix cand = oracle::random_unit_batch(1, 8, rng);
        bool ok = true;
        for (std::size_t i = 0; i < centers.rows; ++i)
            if (cosine_sim(centers.row(i), cand.row(0), 8) > 0.5) ok = false;
        if (ok) centers = centers.rows == 0 ? cand : vconcat(centers, cand);
    }
    const std::size_t per = 20;
    Matrix x(5 * per, 8);
    std::vector<int> truth(5 * per);
    for (std::size_t c = 0; c < 5; ++c)
        for (std::size_t i = 0; i < per; ++i) {
            const std::size_t r = c * per + i;
            truth[r] = static_cast<int>(c);
            for (std::size_t k = 0; k < 8; ++k) x.at(r, k) = centers.at(c, k) + 0.05 * rng.normal();
        }
    PseudoLabeling p = spherical_kmeans(x, 5, Rng(214));
    CHECK(ari(truth, p.assign) > 0.95);
}
