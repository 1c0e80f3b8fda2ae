#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gqa/data.hpp"
#include "gqa/tensor.hpp"

namespace gqa {

// Document-major, order-preserving flat indexing of a document set's
// sentences.
struct DocLayout {
    std::vector<int> sentence_counts;
    int n_sent = 0;

    static DocLayout from_example(const Example& ex);

    int global_index(int doc, int sent) const;
    std::pair<int, int> doc_sent(int global) const;
    int n_docs() const { return static_cast<int>(sentence_counts.size()); }
};

// The adjacency M = 1/2 X^T X with X = B + lambda*S + L, where S carries a
// zeroed diagonal. Symmetric and positive semidefinite by construction.
struct TopologyMatrix {
    Tensor M;
    Tensor B, S, L;
    double lambda = 0.0;
};

// S[i][j] = cos(v_i, v_j) for i != j, zero diagonal. Zero-norm rows get zero
// similarities instead of NaN.
Tensor cosine_similarity_matrix(const Tensor& sentence_vectors);

// B: within-document next-sentence links (superdiagonal restricted to each
// document). L: last sentence of every document -> first sentence of every
// other document.
std::pair<Tensor, Tensor> build_base_links(const DocLayout& layout);

TopologyMatrix build_adjacency(const Tensor& B, const Tensor& S_zeroed, const Tensor& L,
                               double lambda);

// Mean of the pretrained embeddings of each sentence's tokens, (n_sent, dim).
// Computed at preprocessing time; independent of any learned parameter.
Tensor sentence_mean_vectors(const Example& ex, const Vocabulary& vocab);

// Convenience: full preprocessing pipeline for one example.
TopologyMatrix build_topology(const Example& ex, const Vocabulary& vocab, double lambda);

// Debug export of M and its components as a JSON document.
std::string topology_to_json(const TopologyMatrix& topo);

}  // namespace gqa
