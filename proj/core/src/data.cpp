#include "gqa/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace gqa {

namespace {

using nlohmann::ordered_json;

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

}  // namespace

std::string answer_type_name(AnswerType t) {
    switch (t) {
        case AnswerType::Span: return "span";
        case AnswerType::Yes: return "yes";
        case AnswerType::No: return "no";
    }
    return "span";
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string chunk;
    while (in >> chunk) {
        std::transform(chunk.begin(), chunk.end(), chunk.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        size_t lo = 0, hi = chunk.size();
        // peel leading/trailing punctuation into their own tokens; interior
        // punctuation (don't, u.s.) stays attached
        std::vector<std::string> leading, trailing;
        while (lo < hi && is_punct(chunk[lo])) leading.push_back(std::string(1, chunk[lo++]));
        while (hi > lo && is_punct(chunk[hi - 1])) trailing.push_back(std::string(1, chunk[--hi]));
        for (auto& t : leading) out.push_back(std::move(t));
        if (hi > lo) out.push_back(chunk.substr(lo, hi - lo));
        for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) out.push_back(std::move(*it));
    }
    return out;
}

std::vector<std::string> normalize_answer_tokens(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (char c : text) {
        if (is_punct(c)) continue;
        cleaned += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    std::vector<std::string> out;
    std::istringstream in(cleaned);
    std::string tok;
    while (in >> tok) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        out.push_back(tok);
    }
    return out;
}

int Vocabulary::lookup(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? unk_index : it->second;
}

Tensor Vocabulary::embed(const std::string& token) const {
    int row = lookup(token);
    std::vector<double> v(embeddings.data->begin() + static_cast<size_t>(row) * dim,
                          embeddings.data->begin() + static_cast<size_t>(row + 1) * dim);
    return Tensor({dim}, std::move(v));
}

std::vector<Example> load_hotpot_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    ordered_json root;
    try {
        root = ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("malformed JSON in " + path + " at byte " + std::to_string(e.byte) + ": " +
                         e.what());
    }
    if (!root.is_array()) throw ParseError(path + ": expected a top-level JSON array");

    std::vector<Example> out;
    out.reserve(root.size());
    for (const auto& rec : root) {
        Example ex;
        ex.id = rec.at("_id").get<std::string>();
        ex.question = tokenize(rec.at("question").get<std::string>());
        ex.gold_answer = rec.at("answer").get<std::string>();
        std::string ans_lower = ex.gold_answer;
        std::transform(ans_lower.begin(), ans_lower.end(), ans_lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        ex.gold_type = ans_lower == "yes"  ? AnswerType::Yes
                       : ans_lower == "no" ? AnswerType::No
                                           : AnswerType::Span;

        std::unordered_map<std::string, int> title_to_doc;
        for (const auto& ctx : rec.at("context")) {
            Document doc;
            doc.title = ctx.at(0).get<std::string>();
            for (const auto& sent : ctx.at(1)) {
                doc.sentences.push_back(tokenize(sent.get<std::string>()));
            }
            title_to_doc.emplace(doc.title, static_cast<int>(ex.documents.size()));
            ex.documents.push_back(std::move(doc));
        }
        for (const auto& sf : rec.at("supporting_facts")) {
            std::string title = sf.at(0).get<std::string>();
            int sent = sf.at(1).get<int>();
            auto it = title_to_doc.find(title);
            if (it == title_to_doc.end()) {
                throw ParseError("record " + ex.id + ": supporting-fact title \"" + title +
                                 "\" not found among context documents");
            }
            if (sent < 0 || sent >= static_cast<int>(ex.documents[it->second].sentences.size())) {
                throw ParseError("record " + ex.id + ": supporting-fact sentence index " +
                                 std::to_string(sent) + " out of range for \"" + title + "\"");
            }
            ex.gold_supporting.insert({it->second, sent});
        }
        out.push_back(std::move(ex));
    }
    return out;
}

void save_hotpot_json(const std::vector<Example>& examples, const std::string& path) {
    ordered_json root = ordered_json::array();
    for (const Example& ex : examples) {
        ordered_json rec;
        rec["_id"] = ex.id;
        rec["question"] = join(ex.question);
        rec["answer"] = ex.gold_answer;
        rec["type"] = answer_type_name(ex.gold_type);
        ordered_json sfs = ordered_json::array();
        for (const auto& [doc, sent] : ex.gold_supporting) {
            sfs.push_back({ex.documents[doc].title, sent});
        }
        rec["supporting_facts"] = std::move(sfs);
        ordered_json ctx = ordered_json::array();
        for (const Document& doc : ex.documents) {
            ordered_json sents = ordered_json::array();
            for (const auto& s : doc.sentences) sents.push_back(join(s));
            ctx.push_back({doc.title, std::move(sents)});
        }
        rec["context"] = std::move(ctx);
        root.push_back(std::move(rec));
    }
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out << root.dump(1) << "\n";
}

namespace {

Vocabulary finalize_vocab(std::vector<std::string> tokens, std::vector<double> rows, int dim) {
    int n = static_cast<int>(tokens.size());
    // unknown row = mean of loaded rows, padding row = zeros
    std::vector<double> unk(static_cast<size_t>(dim), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) unk[j] += rows[static_cast<size_t>(i) * dim + j];
    if (n > 0)
        for (double& x : unk) x /= n;
    rows.insert(rows.end(), unk.begin(), unk.end());
    rows.insert(rows.end(), static_cast<size_t>(dim), 0.0);

    Vocabulary vocab;
    vocab.dim = dim;
    for (int i = 0; i < n; ++i) vocab.index.emplace(tokens[i], i);
    vocab.unk_index = n;
    vocab.pad_index = n + 1;
    vocab.embeddings = Tensor({n + 2, dim}, std::move(rows));
    return vocab;
}

}  // namespace

Vocabulary load_pretrained_embeddings(const std::string& path, int dim) {
    if (dim <= 0) throw ContractError("load_pretrained_embeddings: dim must be positive");
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);

    std::vector<std::string> tokens;
    std::vector<double> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        std::vector<double> vals;
        double x;
        while (ls >> x) vals.push_back(x);
        if (static_cast<int>(vals.size()) != dim) {
            throw ParseError(path + ": line " + std::to_string(lineno) + " has " +
                             std::to_string(vals.size()) + " floats, expected " +
                             std::to_string(dim));
        }
        tokens.push_back(tok);
        rows.insert(rows.end(), vals.begin(), vals.end());
    }
    return finalize_vocab(std::move(tokens), std::move(rows), dim);
}

Vocabulary random_embeddings(const std::vector<std::string>& tokens, int dim, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    std::vector<double> rows(tokens.size() * static_cast<size_t>(dim));
    for (double& x : rows) x = dist(rng);
    return finalize_vocab(tokens, std::move(rows), dim);
}

std::vector<std::string> corpus_tokens(const std::vector<Example>& examples) {
    std::vector<std::string> out;
    std::unordered_map<std::string, bool> seen;
    auto visit = [&](const std::string& t) {
        if (!seen[t]) {
            seen[t] = true;
            out.push_back(t);
        }
    };
    for (const Example& ex : examples) {
        for (const auto& t : ex.question) visit(t);
        for (const Document& doc : ex.documents)
            for (const auto& sent : doc.sentences)
                for (const auto& t : sent) visit(t);
    }
    return out;
}

std::vector<Example> generate_synthetic(int n_examples, int vocab_size, uint64_t seed) {
    if (vocab_size < 20) throw ContractError("generate_synthetic: vocab_size must be >= 20");
    if (n_examples < 1) throw ContractError("generate_synthetic: n_examples must be >= 1");

    std::vector<std::string> pool(static_cast<size_t>(vocab_size));
    for (int i = 0; i < vocab_size; ++i) pool[i] = "w" + std::to_string(i);
    int n_entity = vocab_size / 2;

    std::vector<Example> out;
    out.reserve(static_cast<size_t>(n_examples));
    for (int i = 0; i < n_examples; ++i) {
        std::mt19937_64 rng(seed * 1000003ULL + static_cast<uint64_t>(i));
        auto pick_entity = [&](std::vector<int> avoid) {
            std::uniform_int_distribution<int> d(0, n_entity - 1);
            int k = d(rng);
            while (std::find(avoid.begin(), avoid.end(), k) != avoid.end()) k = d(rng);
            return k;
        };
        auto filler_sentence = [&](int len) {
            std::uniform_int_distribution<int> d(n_entity, vocab_size - 1);
            std::vector<std::string> s;
            for (int k = 0; k < len; ++k) s.push_back(pool[d(rng)]);
            return s;
        };

        int e1 = pick_entity({});
        int e2 = pick_entity({e1});
        int ans = pick_entity({e1, e2});

        Example ex;
        ex.id = "syn-" + std::to_string(seed) + "-" + std::to_string(i);

        Document doc_a{"alpha-" + std::to_string(i),
                       {{pool[e1], "relates", "to", pool[e2]}, filler_sentence(4)}};
        Document doc_b{"beta-" + std::to_string(i),
                       {{pool[e2], "yields", pool[ans]}, filler_sentence(4)}};
        // distractors reuse the bridge shapes with unrelated entities; the
        // answer token never appears outside doc_b's first sentence
        int d1 = pick_entity({e1, e2, ans});
        int d2 = pick_entity({e1, e2, ans, d1});
        int d3 = pick_entity({e1, e2, ans, d1, d2});
        Document doc_c{"gamma-" + std::to_string(i),
                       {{pool[d1], "relates", "to", pool[d2]}, filler_sentence(3)}};
        Document doc_d{"delta-" + std::to_string(i),
                       {{pool[d2], "yields", pool[d3]}, filler_sentence(3)}};

        bool yesno = (i % 3 == 2);
        if (yesno) {
            bool yes = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
            ex.question = {"is", pool[e1], "related", yes ? "affirm" : "negate", "?"};
            ex.gold_answer = yes ? "yes" : "no";
            ex.gold_type = yes ? AnswerType::Yes : AnswerType::No;
        } else {
            ex.question = {"what", "does", pool[e1], "lead", "to", "?"};
            ex.gold_answer = pool[ans];
            ex.gold_type = AnswerType::Span;
        }

        std::vector<Document> docs = {doc_a, doc_b, doc_c, doc_d};
        std::vector<int> order = {0, 1, 2, 3};
        std::shuffle(order.begin(), order.end(), rng);
        int pos_a = 0, pos_b = 0;
        for (int p = 0; p < 4; ++p) {
            if (order[p] == 0) pos_a = p;
            if (order[p] == 1) pos_b = p;
            ex.documents.push_back(docs[order[p]]);
        }
        ex.gold_supporting = {{pos_a, 0}, {pos_b, 0}};
        out.push_back(std::move(ex));
    }
    return out;
}

SplitResult split(const std::vector<Example>& examples, SplitRatios ratios, uint64_t seed) {
    if (examples.empty()) throw ContractError("split: empty input");
    if (ratios.train <= 0.0 || ratios.dev <= 0.0 || ratios.test <= 0.0) {
        throw ContractError("split: all ratios must be positive");
    }
    if (std::fabs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
        throw ContractError("split: ratios must sum to 1");
    }

    std::vector<int> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    size_t n = examples.size();
    size_t n_dev = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios.dev));
    size_t n_test = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios.test));
    size_t n_train = n - n_dev - n_test;  // remainder goes to train

    SplitResult result;
    for (size_t i = 0; i < n; ++i) {
        const Example& ex = examples[order[i]];
        if (i < n_train)
            result.train.push_back(ex);
        else if (i < n_train + n_dev)
            result.dev.push_back(ex);
        else
            result.test.push_back(ex);
    }
    return result;
}

}  // namespace gqa
