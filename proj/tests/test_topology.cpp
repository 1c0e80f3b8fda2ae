#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gqa/topology.hpp"

using namespace gqa;

namespace {

Tensor random_matrix(int r, int c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(static_cast<size_t>(r) * c);
    for (double& x : v) x = dist(rng);
    return Tensor({r, c}, std::move(v));
}

// Jacobi eigenvalue sweep for small symmetric matrices; good enough to bound
// the smallest eigenvalue in tests.
double min_eigenvalue(const Tensor& m) {
    int n = m.shape[0];
    std::vector<double> a(*m.data);
    auto at = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::fabs(at(p, q)) < 1e-18) continue;
                double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    double mn = at(0, 0);
    for (int i = 1; i < n; ++i) mn = std::min(mn, at(i, i));
    return mn;
}

}  // namespace

TEST_CASE("cosine similarity of identical vectors is 1 off-diagonal, 0 on it") {
    Tensor v({2, 3}, {1, 2, 3, 1, 2, 3});
    Tensor s = cosine_similarity_matrix(v);
    CHECK(s(0, 1) == doctest::Approx(1.0));
    CHECK(s(1, 0) == doctest::Approx(1.0));
    CHECK(s(0, 0) == 0.0);
    CHECK(s(1, 1) == 0.0);
}

TEST_CASE("cosine similarity of orthogonal vectors is zero") {
    Tensor v({2, 2}, {1, 0, 0, 1});
    Tensor s = cosine_similarity_matrix(v);
    CHECK(s(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("cosine of (1,0) and (1,1) is 1/sqrt(2)") {
    Tensor v({2, 2}, {1, 0, 1, 1});
    Tensor s = cosine_similarity_matrix(v);
    CHECK(s(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("zero-norm rows get zero similarities, not NaN") {
    Tensor v({2, 2}, {0, 0, 1, 1});
    Tensor s = cosine_similarity_matrix(v);
    CHECK(s(0, 1) == 0.0);
    CHECK(s(1, 0) == 0.0);
}

TEST_CASE("single sentence yields empty B and L") {
    DocLayout layout{{1}, 1};
    auto [b, l] = build_base_links(layout);
    CHECK(b(0, 0) == 0.0);
    CHECK(l(0, 0) == 0.0);
}

TEST_CASE("B holds the within-document superdiagonal") {
    DocLayout layout{{3}, 3};
    auto [b, l] = build_base_links(layout);
    int nonzero = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (b(i, j) != 0.0) ++nonzero;
    CHECK(nonzero == 2);
    CHECK(b(0, 1) == 1.0);
    CHECK(b(1, 2) == 1.0);
    for (int i = 0; i < 9; ++i) CHECK((*l.data)[i] == 0.0);
}

TEST_CASE("L links last sentences to first sentences of other documents") {
    DocLayout layout{{2, 2}, 4};
    auto [b, l] = build_base_links(layout);
    int nonzero = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (l(i, j) != 0.0) ++nonzero;
    CHECK(nonzero == 2);
    CHECK(l(1, 2) == 1.0);  // last of doc 0 -> first of doc 1
    CHECK(l(3, 0) == 1.0);  // last of doc 1 -> first of doc 0
    CHECK(b(0, 1) == 1.0);  // superdiagonal stays within documents
    CHECK(b(2, 3) == 1.0);
    CHECK(b(1, 2) == 0.0);
}

TEST_CASE("empty document is rejected") {
    Example ex;
    ex.documents.push_back({"empty", {}});
    CHECK_THROWS_AS(DocLayout::from_example(ex), ContractError);
}

TEST_CASE("one-sentence corpus gives M = 0") {
    DocLayout layout{{1}, 1};
    auto [b, l] = build_base_links(layout);
    Tensor s = Tensor::zeros({1, 1});
    TopologyMatrix topo = build_adjacency(b, s, l, 0.5);
    CHECK(topo.M(0, 0) == 0.0);
}

TEST_CASE("adjacency matches a hand/brute-force evaluation of X^T X / 2") {
    // 2 documents x 2 sentences, hand-chosen unit sentence vectors
    DocLayout layout{{2, 2}, 4};
    auto [b, l] = build_base_links(layout);
    Tensor vecs({4, 2}, {1, 0, 0, 1, 1, 0, std::sqrt(0.5), std::sqrt(0.5)});
    Tensor s = cosine_similarity_matrix(vecs);
    double lambda = 0.5;
    TopologyMatrix topo = build_adjacency(b, s, l, lambda);

    // independent dense oracle
    int n = 4;
    std::vector<double> x(16);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            x[i * n + j] = b(i, j) + lambda * s(i, j) + l(i, j);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double want = 0.0;
            for (int k = 0; k < n; ++k) want += 0.5 * x[k * n + i] * x[k * n + j];
            CHECK(std::fabs(topo.M(i, j) - want) < 1e-12);
        }
    }
}

TEST_CASE("M is symmetric and positive semidefinite over random layouts") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        int n_docs = 1 + static_cast<int>(rng() % 4);
        DocLayout layout;
        for (int d = 0; d < n_docs; ++d) {
            int c = 1 + static_cast<int>(rng() % 3);
            layout.sentence_counts.push_back(c);
            layout.n_sent += c;
        }
        if (layout.n_sent > 12) continue;
        auto [b, l] = build_base_links(layout);
        Tensor vecs = random_matrix(layout.n_sent, 4, rng);
        Tensor s = cosine_similarity_matrix(vecs);
        std::uniform_real_distribution<double> ld(0.0, 1.0);
        TopologyMatrix topo = build_adjacency(b, s, l, ld(rng));

        for (int i = 0; i < layout.n_sent; ++i)
            for (int j = 0; j < layout.n_sent; ++j)
                CHECK(std::fabs(topo.M(i, j) - topo.M(j, i)) < 1e-12);
        CHECK(min_eigenvalue(topo.M) >= -1e-10);
        for (int i = 0; i < layout.n_sent; ++i) CHECK(topo.S(i, i) == 0.0);
    }
}

TEST_CASE("with B = L = 0 the matrix scales exactly as lambda squared") {
    std::mt19937_64 rng(19);
    int n = 5;
    Tensor zero = Tensor::zeros({n, n});
    Tensor s = cosine_similarity_matrix(random_matrix(n, 3, rng));
    TopologyMatrix unit = build_adjacency(zero, s, zero, 1.0);
    for (double lambda : {0.05, 0.5, 2.0}) {
        TopologyMatrix scaled = build_adjacency(zero, s, zero, lambda);
        for (int i = 0; i < n * n; ++i) {
            CHECK(std::fabs((*scaled.M.data)[i] - lambda * lambda * (*unit.M.data)[i]) < 1e-12);
        }
    }
}

TEST_CASE("document permutation permutes M symmetrically") {
    std::mt19937_64 rng(23);
    // layout {2,1} vs swapped {1,2} with consistently permuted vectors
    DocLayout a{{2, 1}, 3};
    DocLayout b{{1, 2}, 3};
    Tensor va = random_matrix(3, 4, rng);
    // permutation: doc order swap maps global indices (0,1,2) -> (1,2,0)
    std::vector<int> perm = {1, 2, 0};  // new position of old row i
    std::vector<double> vb_data(12);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) vb_data[perm[i] * 4 + j] = va(i, j);
    Tensor vb({3, 4}, std::move(vb_data));

    auto [ba, la] = build_base_links(a);
    auto [bb, lb] = build_base_links(b);
    TopologyMatrix ma = build_adjacency(ba, cosine_similarity_matrix(va), la, 0.5);
    TopologyMatrix mb = build_adjacency(bb, cosine_similarity_matrix(vb), lb, 0.5);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(ma.M(i, j) == doctest::Approx(mb.M(perm[i], perm[j])).epsilon(1e-12));
}

TEST_CASE("topology JSON dump carries all components") {
    auto examples = generate_synthetic(1, 24, 5);
    Vocabulary vocab = random_embeddings(corpus_tokens(examples), 8, 5);
    TopologyMatrix topo = build_topology(examples[0], vocab, 0.5);
    std::string dump = topology_to_json(topo);
    for (const char* key : {"\"M\"", "\"B\"", "\"S\"", "\"L\"", "\"lambda\""}) {
        CHECK(dump.find(key) != std::string::npos);
    }
}
