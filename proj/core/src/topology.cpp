#include "gqa/topology.hpp"

#include <cmath>
#include <iostream>

#include <json.hpp>

namespace gqa {

DocLayout DocLayout::from_example(const Example& ex) {
    DocLayout layout;
    for (const Document& doc : ex.documents) {
        if (doc.sentences.empty()) {
            throw ContractError("layout: document \"" + doc.title + "\" has no sentences");
        }
        layout.sentence_counts.push_back(static_cast<int>(doc.sentences.size()));
        layout.n_sent += static_cast<int>(doc.sentences.size());
    }
    if (layout.sentence_counts.empty()) throw ContractError("layout: no documents");
    return layout;
}

int DocLayout::global_index(int doc, int sent) const {
    int base = 0;
    for (int d = 0; d < doc; ++d) base += sentence_counts[d];
    return base + sent;
}

std::pair<int, int> DocLayout::doc_sent(int global) const {
    int d = 0;
    while (global >= sentence_counts[d]) {
        global -= sentence_counts[d];
        ++d;
    }
    return {d, global};
}

Tensor cosine_similarity_matrix(const Tensor& sentence_vectors) {
    int n = sentence_vectors.shape[0];
    int d = sentence_vectors.shape[1];
    std::vector<double> norms(static_cast<size_t>(n));
    bool warned = false;
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += sentence_vectors(i, j) * sentence_vectors(i, j);
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0 && !warned) {
            std::cerr << "warning: zero-norm sentence vector, similarities set to 0\n";
            warned = true;
        }
    }
    std::vector<double> s(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (norms[i] == 0.0 || norms[j] == 0.0) continue;
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += sentence_vectors(i, k) * sentence_vectors(j, k);
            double c = dot / (norms[i] * norms[j]);
            s[static_cast<size_t>(i) * n + j] = c;
            s[static_cast<size_t>(j) * n + i] = c;
        }
    }
    return Tensor({n, n}, std::move(s));
}

std::pair<Tensor, Tensor> build_base_links(const DocLayout& layout) {
    int n = layout.n_sent;
    std::vector<double> b(static_cast<size_t>(n) * n, 0.0);
    std::vector<double> l(static_cast<size_t>(n) * n, 0.0);

    int base = 0;
    std::vector<int> first, last;
    for (int count : layout.sentence_counts) {
        first.push_back(base);
        last.push_back(base + count - 1);
        for (int s = 0; s + 1 < count; ++s) {
            b[static_cast<size_t>(base + s) * n + (base + s + 1)] = 1.0;
        }
        base += count;
    }
    for (size_t p = 0; p < first.size(); ++p) {
        for (size_t q = 0; q < first.size(); ++q) {
            if (p == q) continue;
            l[static_cast<size_t>(last[p]) * n + first[q]] = 1.0;
        }
    }
    return {Tensor({n, n}, std::move(b)), Tensor({n, n}, std::move(l))};
}

TopologyMatrix build_adjacency(const Tensor& B, const Tensor& S_zeroed, const Tensor& L,
                               double lambda) {
    if (!same_shape(B, S_zeroed) || !same_shape(B, L) || B.ndim() != 2 ||
        B.shape[0] != B.shape[1]) {
        throw DimensionError("build_adjacency: components must share square shape, got " +
                             B.shape_str() + ", " + S_zeroed.shape_str() + ", " + L.shape_str());
    }
    if (lambda < 0.0) throw ContractError("build_adjacency: lambda must be >= 0");

    int n = B.shape[0];
    std::vector<double> x(static_cast<size_t>(n) * n);
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = (*B.data)[i] + lambda * (*S_zeroed.data)[i] + (*L.data)[i];
    }
    // M = 1/2 X^T X
    std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            double xki = x[static_cast<size_t>(k) * n + i];
            if (xki == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                m[static_cast<size_t>(i) * n + j] += 0.5 * xki * x[static_cast<size_t>(k) * n + j];
            }
        }
    }
    TopologyMatrix topo;
    topo.M = Tensor({n, n}, std::move(m));
    topo.B = B;
    topo.S = S_zeroed;
    topo.L = L;
    topo.lambda = lambda;
    return topo;
}

Tensor sentence_mean_vectors(const Example& ex, const Vocabulary& vocab) {
    DocLayout layout = DocLayout::from_example(ex);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(layout.n_sent) * vocab.dim);
    for (const Document& doc : ex.documents) {
        for (const auto& sent : doc.sentences) {
            std::vector<double> mean(static_cast<size_t>(vocab.dim), 0.0);
            for (const auto& tok : sent) {
                Tensor e = vocab.embed(tok);
                for (int j = 0; j < vocab.dim; ++j) mean[j] += e(j);
            }
            if (!sent.empty())
                for (double& v : mean) v /= static_cast<double>(sent.size());
            out.insert(out.end(), mean.begin(), mean.end());
        }
    }
    return Tensor({layout.n_sent, vocab.dim}, std::move(out));
}

TopologyMatrix build_topology(const Example& ex, const Vocabulary& vocab, double lambda) {
    DocLayout layout = DocLayout::from_example(ex);
    auto [B, L] = build_base_links(layout);
    Tensor S = cosine_similarity_matrix(sentence_mean_vectors(ex, vocab));
    return build_adjacency(B, S, L, lambda);
}

std::string topology_to_json(const TopologyMatrix& topo) {
    auto matrix = [](const Tensor& t) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (int i = 0; i < t.shape[0]; ++i) {
            nlohmann::ordered_json row = nlohmann::ordered_json::array();
            for (int j = 0; j < t.shape[1]; ++j) row.push_back(t(i, j));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    nlohmann::ordered_json doc;
    doc["lambda"] = topo.lambda;
    doc["M"] = matrix(topo.M);
    doc["B"] = matrix(topo.B);
    doc["S"] = matrix(topo.S);
    doc["L"] = matrix(topo.L);
    return doc.dump(1);
}

}  // namespace gqa
