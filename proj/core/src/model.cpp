#include "gqa/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace gqa {

namespace {

Tensor uniform_init(std::vector<int> shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

int char_index(char c) {
    unsigned char u = static_cast<unsigned char>(c);
    if (u >= 32 && u < 127) return u - 32;
    return kCharInventory - 1;  // out-of-alphabet bucket
}

Tensor row_matrix(const Tensor& v) { return ops::reshape(v, {1, v.size()}); }

}  // namespace

LinearParams LinearParams::init(int d_in, int d_out, std::mt19937_64& rng) {
    LinearParams p;
    p.W = uniform_init({d_in, d_out}, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
    p.b = Tensor::zeros({d_out});
    return p;
}

void LinearParams::visit(const std::string& prefix,
                         const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(prefix + ".W", W);
    fn(prefix + ".b", b);
}

Tensor LinearParams::apply(const Tensor& x) const { return ops::add(ops::matmul(x, W), b); }

InitStateParams InitStateParams::init(int d_in, int d_h, std::mt19937_64& rng) {
    InitStateParams p;
    p.fwd_h = LinearParams::init(d_in, d_h, rng);
    p.fwd_c = LinearParams::init(d_in, d_h, rng);
    p.bwd_h = LinearParams::init(d_in, d_h, rng);
    p.bwd_c = LinearParams::init(d_in, d_h, rng);
    return p;
}

void InitStateParams::visit(const std::string& prefix,
                            const std::function<void(const std::string&, Tensor&)>& fn) {
    fwd_h.visit(prefix + ".fwd_h", fn);
    fwd_c.visit(prefix + ".fwd_c", fn);
    bwd_h.visit(prefix + ".bwd_h", fn);
    bwd_c.visit(prefix + ".bwd_c", fn);
}

BiAttentionParams BiAttentionParams::init(int d, std::mt19937_64& rng) {
    BiAttentionParams p;
    double bound = 1.0 / std::sqrt(static_cast<double>(d));
    p.w_ctx = uniform_init({d}, bound, rng);
    p.w_query = uniform_init({d}, bound, rng);
    p.w_prod = uniform_init({d}, bound, rng);
    return p;
}

void BiAttentionParams::visit(const std::string& prefix,
                              const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(prefix + ".w_ctx", w_ctx);
    fn(prefix + ".w_query", w_query);
    fn(prefix + ".w_prod", w_prod);
}

void EncoderParams::visit(const std::string& prefix,
                          const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(prefix + ".char_embeddings", char_embeddings);
    char_cnn.visit(prefix + ".char_cnn", fn);
    word_lstm.visit(prefix + ".word_lstm", fn);
    question_lstm.visit(prefix + ".question_lstm", fn);
    bi_attention.visit(prefix + ".bi_attention", fn);
    attn_proj.visit(prefix + ".attn_proj", fn);
    self_attention.visit(prefix + ".self_attention", fn);
    sent_lstm.visit(prefix + ".sent_lstm", fn);
    graph.visit(prefix + ".graph", fn);
    graph_init.visit(prefix + ".graph_init", fn);
    graph_lstm.visit(prefix + ".graph_lstm", fn);
}

void SpanHeadParams::visit(const std::string& prefix,
                           const std::function<void(const std::string&, Tensor&)>& fn) {
    init_state.visit(prefix + ".init_state", fn);
    lstm.visit(prefix + ".lstm", fn);
    out.visit(prefix + ".out", fn);
}

void DecoderParams::visit(const std::string& prefix,
                          const std::function<void(const std::string&, Tensor&)>& fn) {
    sp_hidden.visit(prefix + ".sp_hidden", fn);
    sp_out.visit(prefix + ".sp_out", fn);
    start.visit(prefix + ".start", fn);
    end.visit(prefix + ".end", fn);
    type_graph.visit(prefix + ".type_graph", fn);
    type_out.visit(prefix + ".type_out", fn);
}

Model::Model(ModelDims dims, double lambda_train, double lambda_test, uint64_t seed)
    : dims_(dims), lambda_train_(lambda_train), lambda_test_(lambda_test), seed_(seed) {
    if (lambda_train < 0.0 || lambda_test < 0.0) {
        throw ContractError("model: lambda values must be >= 0");
    }
    if (dims.ggnn_hidden < 2 * dims.sent_hidden) {
        throw ContractError("model: ggnn_hidden must be >= 2*sent_hidden");
    }
    std::mt19937_64 rng(seed);

    int d_wi = dims.emb_dim + dims.char_cnn_dim;
    int d0 = 2 * dims.enc_hidden;
    encoder.char_embeddings =
        uniform_init({kCharInventory, dims.char_emb_dim},
                     1.0 / std::sqrt(static_cast<double>(dims.char_emb_dim)), rng);
    encoder.char_cnn = LinearParams::init(kCharWindow * dims.char_emb_dim, dims.char_cnn_dim, rng);
    encoder.word_lstm = BiLSTMParams::init(d_wi, dims.enc_hidden, rng);
    encoder.question_lstm = BiLSTMParams::init(d_wi, dims.enc_hidden, rng);
    encoder.bi_attention = BiAttentionParams::init(d0, rng);
    encoder.attn_proj = LinearParams::init(4 * d0, dims.attn_dim, rng);
    encoder.self_attention = BiAttentionParams::init(dims.attn_dim, rng);
    encoder.sent_lstm = BiLSTMParams::init(dims.attn_dim, dims.sent_hidden, rng);
    encoder.graph = GGNNParams::init(2 * dims.sent_hidden, dims.ggnn_hidden, 1, dims.ggnn_steps,
                                     rng());
    encoder.graph.identity_candidate = dims.identity_candidate;
    encoder.graph_init = InitStateParams::init(dims.ggnn_hidden, dims.word_hidden, rng);
    encoder.graph_lstm = BiLSTMParams::init(2 * dims.sent_hidden, dims.word_hidden, rng);

    int d_w = 2 * dims.word_hidden;
    int d_s = 2 * dims.word_hidden;
    decoder.sp_hidden = LinearParams::init(d_s, d_s, rng);
    decoder.sp_out = LinearParams::init(d_s, 1, rng);

    int d_s2 = 2 * d_s;
    int d_w2 = d_w + d_s;
    decoder.start.init_state = InitStateParams::init(d_s2, dims.span_hidden, rng);
    decoder.start.lstm = BiLSTMParams::init(d_w2, dims.span_hidden, rng);
    decoder.start.out = LinearParams::init(2 * dims.span_hidden, 1, rng);

    int d_s3 = d_s2 + 2 * dims.span_hidden;
    int d_w3 = d_w2 + 2 * dims.span_hidden;
    decoder.end.init_state = InitStateParams::init(d_s3, dims.span_hidden, rng);
    decoder.end.lstm = BiLSTMParams::init(d_w3, dims.span_hidden, rng);
    decoder.end.out = LinearParams::init(2 * dims.span_hidden, 1, rng);

    int d_s4 = d_s3 + 2 * dims.span_hidden;
    int type_hidden = std::max(dims.ggnn_hidden, d_s4);
    decoder.type_graph =
        GGNNParams::init(d_s4, type_hidden, dims.type_pool_dim, dims.ggnn_steps, rng());
    decoder.type_graph.identity_candidate = dims.identity_candidate;
    decoder.type_graph.readout = dims.readout;
    decoder.type_out = LinearParams::init(dims.type_pool_dim, 3, rng);
}

double Model::lambda_for(Mode mode) const {
    return mode == Mode::Train ? lambda_train_ : lambda_test_;
}

void Model::visit_params(const std::function<void(const std::string&, Tensor&)>& fn) {
    encoder.visit("encoder", fn);
    decoder.visit("decoder", fn);
}

namespace {

// Trilinear similarity S_ij = <w_ctx, c_i> + <w_query, q_j> + <w_prod, c_i . q_j>.
Tensor trilinear(const Tensor& C, const Tensor& Q, const BiAttentionParams& p) {
    int n = C.shape[0], tq = Q.shape[0];
    Tensor cw = ops::matmul(C, ops::reshape(p.w_ctx, {p.w_ctx.size(), 1}));       // (n,1)
    Tensor qw = ops::matmul(Q, ops::reshape(p.w_query, {p.w_query.size(), 1}));   // (tq,1)
    Tensor a = ops::matmul(cw, Tensor::full({1, tq}, 1.0));
    Tensor b = ops::matmul(Tensor::full({n, 1}, 1.0), ops::transpose(qw));
    Tensor prod = ops::matmul(ops::mul(C, ops::broadcast(p.w_prod, n)), ops::transpose(Q));
    return ops::add(ops::add(a, b), prod);
}

// Bidirectional-attention-flow enrichment: [c, c2q, c.c2q, c.q2c].
Tensor bi_attention_flow(const Tensor& C, const Tensor& Q, const BiAttentionParams& p) {
    int n = C.shape[0];
    Tensor S = trilinear(C, Q, p);
    Tensor A = ops::softmax(S);
    Tensor c2q = ops::matmul(A, Q);
    Tensor beta = ops::softmax(ops::max_axis(S, 1));  // (n)
    Tensor q2c = ops::matmul(ops::reshape(beta, {1, n}), C);
    Tensor q2cb = ops::broadcast(ops::reshape(q2c, {C.shape[1]}), n);
    return ops::concat({C, c2q, ops::mul(C, c2q), ops::mul(C, q2cb)}, 1);
}

Tensor self_attention_flow(const Tensor& X, const BiAttentionParams& p) {
    int n = X.shape[0];
    Tensor S = trilinear(X, X, p);
    // mask the diagonal so a word never attends to itself
    std::vector<double> mask(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) mask[static_cast<size_t>(i) * n + i] = -1e9;
    Tensor A = ops::softmax(ops::add(S, Tensor({n, n}, std::move(mask))));
    return ops::matmul(A, X);
}

LSTMState make_state(const LinearParams& h, const LinearParams& c, const Tensor& v) {
    return LSTMState{h.apply(v), c.apply(v)};
}

}  // namespace

ContextState Model::encode(const Example& ex, const Vocabulary& vocab, Mode mode) const {
    ContextState ctx;
    ctx.layout = DocLayout::from_example(ex);
    if (ex.question.empty()) throw ContractError("encode: empty question");
    for (const Document& doc : ex.documents) {
        for (const auto& sent : doc.sentences) {
            if (sent.empty()) throw ContractError("encode: empty sentence in \"" + doc.title + "\"");
        }
    }

    auto char_cnn = [&](const std::string& token) {
        int len = std::max(static_cast<int>(token.size()), kCharWindow);
        // one-hot rows keep the lookup differentiable w.r.t. the char table
        std::vector<double> onehot(static_cast<size_t>(len) * kCharInventory, 0.0);
        for (size_t i = 0; i < token.size(); ++i) {
            onehot[i * kCharInventory + char_index(token[i])] = 1.0;
        }
        Tensor E = ops::matmul(Tensor({len, kCharInventory}, std::move(onehot)),
                               encoder.char_embeddings);
        int n_windows = len - kCharWindow + 1;
        std::vector<Tensor> shifted;
        for (int k = 0; k < kCharWindow; ++k) shifted.push_back(ops::slice(E, 0, k, n_windows));
        Tensor windows = ops::concat(shifted, 1);  // (n_windows, 5*char_emb)
        Tensor conv = ops::tanh(encoder.char_cnn.apply(windows));
        return ops::max_axis(conv, 0);  // (char_cnn_dim)
    };

    auto word_inputs = [&](const std::vector<std::string>& tokens) {
        int t = static_cast<int>(tokens.size());
        std::vector<double> glove(static_cast<size_t>(t) * vocab.dim);
        std::vector<Tensor> char_rows;
        for (int i = 0; i < t; ++i) {
            Tensor e = vocab.embed(tokens[i]);
            std::copy(e.data->begin(), e.data->end(), glove.begin() + static_cast<size_t>(i) * vocab.dim);
            char_rows.push_back(row_matrix(char_cnn(tokens[i])));
        }
        Tensor char_m = char_rows.size() == 1 ? char_rows[0] : ops::concat(char_rows, 0);
        return ops::concat({Tensor({t, vocab.dim}, std::move(glove)), char_m}, 1);
    };

    // (1) disjoint per-sentence word encoding
    std::vector<Tensor> sent_words;
    for (const Document& doc : ex.documents) {
        for (const auto& sent : doc.sentences) {
            BiLSTMOut out = bilstm_run(encoder.word_lstm, word_inputs(sent));
            sent_words.push_back(out.outputs);
            for (const auto& tok : sent) ctx.words.push_back(tok);
        }
    }
    int n_sent = ctx.layout.n_sent;
    ctx.sent_offset.resize(n_sent);
    ctx.sent_length.resize(n_sent);
    {
        int off = 0, s = 0;
        for (const Document& doc : ex.documents) {
            for (const auto& sent : doc.sentences) {
                ctx.sent_offset[s] = off;
                ctx.sent_length[s] = static_cast<int>(sent.size());
                for (size_t k = 0; k < sent.size(); ++k) ctx.word_sent.push_back(s);
                off += static_cast<int>(sent.size());
                ++s;
            }
        }
    }
    Tensor C = sent_words.size() == 1 ? sent_words[0] : ops::concat(sent_words, 0);

    // (2) question representation
    Tensor Q = bilstm_run(encoder.question_lstm, word_inputs(ex.question)).outputs;

    // (3) bi-attention conditioned on the question, (4) global self-attention
    // summed onto the projected enrichment
    Tensor G = bi_attention_flow(C, Q, encoder.bi_attention);
    Tensor proj = ops::tanh(encoder.attn_proj.apply(G));
    Tensor summed = ops::add(proj, self_attention_flow(proj, encoder.self_attention));

    // (5) per-sentence BiLSTM over the summed states; final state becomes the
    // sentence embedding
    std::vector<Tensor> word_states(static_cast<size_t>(n_sent));
    std::vector<Tensor> sent_rows(static_cast<size_t>(n_sent));
    for (int s = 0; s < n_sent; ++s) {
        Tensor xs = ops::slice(summed, 0, ctx.sent_offset[s], ctx.sent_length[s]);
        BiLSTMOut out = bilstm_run(encoder.sent_lstm, xs);
        word_states[s] = out.outputs;
        sent_rows[s] = row_matrix(out.final);
    }
    Tensor sent_embs = sent_rows.size() == 1 ? sent_rows[0] : ops::concat(sent_rows, 0);

    // (6) topology + graph enrichment
    ctx.topology = build_topology(ex, vocab, lambda_for(mode));
    Tensor H = ggnn_propagate(sent_embs, ctx.topology, encoder.graph);

    // (7) graph-initialized word BiLSTM
    std::vector<Tensor> h_word_parts(static_cast<size_t>(n_sent));
    std::vector<Tensor> h_sent_parts(static_cast<size_t>(n_sent));
    for (int s = 0; s < n_sent; ++s) {
        Tensor g = ops::slice(H, 0, s, 1);
        BiLSTMOut out = bilstm_run(encoder.graph_lstm, word_states[s],
                                   make_state(encoder.graph_init.fwd_h, encoder.graph_init.fwd_c, g),
                                   make_state(encoder.graph_init.bwd_h, encoder.graph_init.bwd_c, g));
        h_word_parts[s] = out.outputs;
        h_sent_parts[s] = row_matrix(out.final);
    }
    ctx.h_word = h_word_parts.size() == 1 ? h_word_parts[0] : ops::concat(h_word_parts, 0);
    ctx.h_sent = h_sent_parts.size() == 1 ? h_sent_parts[0] : ops::concat(h_sent_parts, 0);
    return ctx;
}

Tensor Model::decode_supporting(ContextState& ctx) const {
    int n_sent = ctx.h_sent.shape[0];
    int n_words = ctx.h_word.shape[0];
    Tensor hidden = ops::tanh(decoder.sp_hidden.apply(ctx.h_sent));
    Tensor logits = ops::reshape(decoder.sp_out.apply(hidden), {n_sent});

    // broadcast each sentence's hidden state to its words
    std::vector<double> gather(static_cast<size_t>(n_words) * n_sent, 0.0);
    for (int w = 0; w < n_words; ++w) {
        gather[static_cast<size_t>(w) * n_sent + ctx.word_sent[w]] = 1.0;
    }
    Tensor word_hidden = ops::matmul(Tensor({n_words, n_sent}, std::move(gather)), hidden);

    ctx.h_sent = ops::concat({ctx.h_sent, hidden}, 1);
    ctx.h_word = ops::concat({ctx.h_word, word_hidden}, 1);
    return logits;
}

namespace {

Tensor run_span_head(const Model& model, ContextState& ctx, const SpanHeadParams& head) {
    int n_sent = ctx.h_sent.shape[0];
    int n_words = ctx.h_word.shape[0];
    std::vector<Tensor> outs(static_cast<size_t>(n_sent));
    std::vector<Tensor> finals(static_cast<size_t>(n_sent));
    for (int s = 0; s < n_sent; ++s) {
        Tensor xs = ops::slice(ctx.h_word, 0, ctx.sent_offset[s], ctx.sent_length[s]);
        Tensor hs = ops::slice(ctx.h_sent, 0, s, 1);
        BiLSTMOut out = bilstm_run(head.lstm, xs,
                                   make_state(head.init_state.fwd_h, head.init_state.fwd_c, hs),
                                   make_state(head.init_state.bwd_h, head.init_state.bwd_c, hs));
        outs[s] = out.outputs;
        finals[s] = row_matrix(out.final);
    }
    Tensor O = outs.size() == 1 ? outs[0] : ops::concat(outs, 0);
    Tensor F = finals.size() == 1 ? finals[0] : ops::concat(finals, 0);
    Tensor logits = ops::reshape(head.out.apply(O), {n_words});
    ctx.h_word = ops::concat({ctx.h_word, O}, 1);
    ctx.h_sent = ops::concat({ctx.h_sent, F}, 1);
    (void)model;
    return logits;
}

}  // namespace

std::pair<Tensor, Tensor> Model::decode_span(ContextState& ctx) const {
    Tensor start = run_span_head(*this, ctx, decoder.start);
    Tensor end = run_span_head(*this, ctx, decoder.end);
    return {start, end};
}

Tensor Model::decode_type(const ContextState& ctx) const {
    Tensor H = ggnn_propagate(ctx.h_sent, ctx.topology, decoder.type_graph);
    Tensor pooled = attention_pool(H, ctx.h_sent, decoder.type_graph);
    return ops::reshape(decoder.type_out.apply(row_matrix(pooled)), {3});
}

Prediction Model::forward(const Example& ex, const Vocabulary& vocab, Mode mode,
                          double sp_threshold) const {
    ContextState ctx = encode(ex, vocab, mode);
    Prediction pred;
    pred.sp_logits = decode_supporting(ctx);
    std::tie(pred.start_logits, pred.end_logits) = decode_span(ctx);
    pred.type_logits = decode_type(ctx);

    // decode: best valid span (start <= end, single sentence)
    int n_words = static_cast<int>(ctx.words.size());
    int best_i = 0, best_j = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_words; ++i) {
        for (int j = i; j < n_words && ctx.word_sent[j] == ctx.word_sent[i]; ++j) {
            double score = pred.start_logits(i) + pred.end_logits(j);
            if (score > best) {
                best = score;
                best_i = i;
                best_j = j;
            }
        }
    }
    int type_arg = 0;
    for (int k = 1; k < 3; ++k)
        if (pred.type_logits(k) > pred.type_logits(type_arg)) type_arg = k;
    pred.type = type_arg == 0 ? AnswerType::Span : (type_arg == 1 ? AnswerType::Yes : AnswerType::No);
    if (pred.type == AnswerType::Yes) {
        pred.answer = "yes";
    } else if (pred.type == AnswerType::No) {
        pred.answer = "no";
    } else {
        std::string span;
        for (int k = best_i; k <= best_j; ++k) {
            if (k > best_i) span += ' ';
            span += ctx.words[k];
        }
        pred.answer = span;
    }
    for (int s = 0; s < ctx.layout.n_sent; ++s) {
        double p = 1.0 / (1.0 + std::exp(-pred.sp_logits(s)));
        if (p >= sp_threshold) pred.supporting.insert(ctx.layout.doc_sent(s));
    }
    return pred;
}

Tensor Model::loss(const Prediction& pred, const Example& gold, const GoldSpan& span,
                   const LossWeights& weights) const {
    int n_sent = pred.sp_logits.size();
    DocLayout layout = DocLayout::from_example(gold);

    // supporting-fact binary cross-entropy, mean over sentences;
    // bce(x, y) = softplus(x) - x*y
    std::vector<double> sp_gold(static_cast<size_t>(n_sent), 0.0);
    for (auto [d, s] : gold.gold_supporting) {
        sp_gold[static_cast<size_t>(layout.global_index(d, s))] = 1.0;
    }
    Tensor sp_term = ops::mean(ops::sub(ops::softplus(pred.sp_logits),
                                        ops::mul(pred.sp_logits, Tensor({n_sent}, std::move(sp_gold)))));

    int type_gold = gold.gold_type == AnswerType::Span ? 0 : (gold.gold_type == AnswerType::Yes ? 1 : 2);
    Tensor type_term = ops::sub(ops::logsumexp(pred.type_logits),
                                ops::slice(pred.type_logits, 0, type_gold, 1));

    Tensor total = ops::add(ops::scale(sp_term, weights.sp), ops::scale(type_term, weights.type));
    if (gold.gold_type == AnswerType::Span) {
        if (!span.has_span) throw ContractError("loss: span-type gold without a located span");
        Tensor ce_start = ops::sub(ops::logsumexp(pred.start_logits),
                                   ops::slice(pred.start_logits, 0, span.start, 1));
        Tensor ce_end = ops::sub(ops::logsumexp(pred.end_logits),
                                 ops::slice(pred.end_logits, 0, span.end, 1));
        total = ops::add(total, ops::add(ce_start, ce_end));
    }
    return ops::reshape(total, {1});
}

long long Model::count_params(std::map<std::string, long long>* breakdown) {
    long long total = 0;
    visit_params([&](const std::string& name, Tensor& t) {
        total += t.size();
        if (breakdown) {
            // group by the second path component (encoder.word_lstm, ...)
            size_t first = name.find('.');
            size_t second = name.find('.', first + 1);
            (*breakdown)[name.substr(0, second)] += t.size();
        }
    });
    return total;
}

GoldSpan locate_gold_span(const Example& ex) {
    GoldSpan result;
    if (ex.gold_type != AnswerType::Span) return result;
    std::vector<std::string> want = normalize_answer_tokens(ex.gold_answer);
    if (want.empty()) return result;

    DocLayout layout = DocLayout::from_example(ex);
    auto try_sentence = [&](int d, int s) {
        const auto& sent = ex.documents[d].sentences[s];
        int base = layout.global_index(d, s);
        int offset = 0;
        for (int g = 0; g < base; ++g) {
            auto [dd, ss] = layout.doc_sent(g);
            offset += static_cast<int>(ex.documents[dd].sentences[ss].size());
        }
        int t = static_cast<int>(sent.size());
        for (int i = 0; i < t; ++i) {
            for (int j = i; j < t; ++j) {
                std::string window;
                for (int k = i; k <= j; ++k) window += sent[k] + " ";
                if (normalize_answer_tokens(window) == want) {
                    result.has_span = true;
                    result.start = offset + i;
                    result.end = offset + j;
                    return true;
                }
            }
        }
        return false;
    };

    // prefer a match inside the gold supporting sentences
    for (auto [d, s] : ex.gold_supporting) {
        if (try_sentence(d, s)) return result;
    }
    for (int d = 0; d < static_cast<int>(ex.documents.size()); ++d) {
        for (int s = 0; s < static_cast<int>(ex.documents[d].sentences.size()); ++s) {
            if (ex.gold_supporting.count({d, s})) continue;
            if (try_sentence(d, s)) return result;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'G', 'Q', 'A', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ParseError("checkpoint: unexpected end of file");
    return v;
}

}  // namespace

void save_checkpoint(Model& model, const std::string& path) {
    nlohmann::ordered_json header;
    const ModelDims& d = model.dims();
    header["emb_dim"] = d.emb_dim;
    header["char_emb_dim"] = d.char_emb_dim;
    header["char_cnn_dim"] = d.char_cnn_dim;
    header["enc_hidden"] = d.enc_hidden;
    header["attn_dim"] = d.attn_dim;
    header["sent_hidden"] = d.sent_hidden;
    header["ggnn_hidden"] = d.ggnn_hidden;
    header["word_hidden"] = d.word_hidden;
    header["span_hidden"] = d.span_hidden;
    header["type_pool_dim"] = d.type_pool_dim;
    header["ggnn_steps"] = d.ggnn_steps;
    header["identity_candidate"] = d.identity_candidate;
    header["readout"] = d.readout == Readout::WeightedAverage ? "weighted_average" : "gated_sum";
    header["lambda_train"] = model.lambda_for(Mode::Train);
    header["lambda_test"] = model.lambda_for(Mode::Eval);
    header["seed"] = model.seed();
    std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    write_pod(out, static_cast<uint64_t>(header_str.size()));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

    model.visit_params([&](const std::string& name, Tensor& t) {
        write_pod(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<uint32_t>(t.shape.size()));
        for (int dim : t.shape) write_pod(out, static_cast<uint32_t>(dim));
        out.write(reinterpret_cast<const char*>(t.data->data()),
                  static_cast<std::streamsize>(t.data->size() * sizeof(double)));
    });
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError(path + ": not a checkpoint file");
    }
    uint32_t version = read_pod<uint32_t>(in);
    if (version != kVersion) {
        throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    uint64_t header_len = read_pod<uint64_t>(in);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw ParseError("checkpoint: truncated header");
    nlohmann::json header = nlohmann::json::parse(header_str);

    ModelDims dims;
    dims.emb_dim = header.at("emb_dim");
    dims.char_emb_dim = header.at("char_emb_dim");
    dims.char_cnn_dim = header.at("char_cnn_dim");
    dims.enc_hidden = header.at("enc_hidden");
    dims.attn_dim = header.at("attn_dim");
    dims.sent_hidden = header.at("sent_hidden");
    dims.ggnn_hidden = header.at("ggnn_hidden");
    dims.word_hidden = header.at("word_hidden");
    dims.span_hidden = header.at("span_hidden");
    dims.type_pool_dim = header.at("type_pool_dim");
    dims.ggnn_steps = header.at("ggnn_steps");
    dims.identity_candidate = header.at("identity_candidate");
    dims.readout = header.at("readout") == "gated_sum" ? Readout::GatedSum
                                                       : Readout::WeightedAverage;

    Model model(dims, header.at("lambda_train"), header.at("lambda_test"), header.at("seed"));
    model.visit_params([&](const std::string& name, Tensor& t) {
        uint32_t name_len = read_pod<uint32_t>(in);
        std::string got(name_len, '\0');
        in.read(got.data(), name_len);
        if (got != name) {
            throw ParseError("checkpoint: expected parameter \"" + name + "\", found \"" + got +
                             "\"");
        }
        uint32_t ndim = read_pod<uint32_t>(in);
        std::vector<int> shape(ndim);
        for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(read_pod<uint32_t>(in));
        if (shape != t.shape) {
            throw ParseError("checkpoint: dimension mismatch for \"" + name + "\"");
        }
        std::vector<double> values(t.data->size());
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (!in) throw ParseError("checkpoint: truncated parameter block \"" + name + "\"");
        t = Tensor(t.shape, std::move(values));
    });
    return model;
}

}  // namespace gqa
