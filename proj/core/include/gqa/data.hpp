#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gqa/tensor.hpp"

namespace gqa {

enum class AnswerType { Span, Yes, No };

std::string answer_type_name(AnswerType t);

struct Document {
    std::string title;
    std::vector<std::vector<std::string>> sentences;  // token lists

    bool operator==(const Document&) const = default;
};

// One QA instance. Supporting facts are (document index, sentence index).
struct Example {
    std::string id;
    std::vector<std::string> question;
    std::vector<Document> documents;
    std::string gold_answer;
    AnswerType gold_type = AnswerType::Span;
    std::set<std::pair<int, int>> gold_supporting;

    bool operator==(const Example&) const = default;
};

// Token table plus pretrained embedding rows. Padding row is all zeros; the
// unknown row is the mean of the loaded rows.
struct Vocabulary {
    std::unordered_map<std::string, int> index;
    Tensor embeddings;  // (|V|, dim)
    int unk_index = 0;
    int pad_index = 0;
    int dim = 0;

    int lookup(const std::string& token) const;
    Tensor embed(const std::string& token) const;  // 1-D row
};

// Lowercase, split on whitespace, detach leading/trailing punctuation.
std::vector<std::string> tokenize(const std::string& text);

// Answer normalization shared by the metrics and gold-span location:
// lowercase, strip punctuation, drop the articles a/an/the, collapse
// whitespace; returned as the remaining tokens.
std::vector<std::string> normalize_answer_tokens(const std::string& text);

std::vector<Example> load_hotpot_json(const std::string& path);
void save_hotpot_json(const std::vector<Example>& examples, const std::string& path);

Vocabulary load_pretrained_embeddings(const std::string& path, int dim);

// Seeded random embedding table covering the given tokens; stands in for a
// pretrained file on synthetic corpora.
Vocabulary random_embeddings(const std::vector<std::string>& tokens, int dim, uint64_t seed);

// Collects the distinct tokens of a corpus in first-appearance order.
std::vector<std::string> corpus_tokens(const std::vector<Example>& examples);

// Deterministic multi-hop corpus: per example, two bridge documents (entity
// e1 -> e2 -> answer) and two distractors; every third example is yes/no.
std::vector<Example> generate_synthetic(int n_examples, int vocab_size, uint64_t seed);

struct SplitRatios {
    double train, dev, test;
};

struct SplitResult {
    std::vector<Example> train, dev, test;
};

SplitResult split(const std::vector<Example>& examples, SplitRatios ratios, uint64_t seed);

}  // namespace gqa
