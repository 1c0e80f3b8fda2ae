#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gqa/data.hpp"
#include "gqa/ggnn.hpp"
#include "gqa/lstm.hpp"
#include "gqa/tensor.hpp"
#include "gqa/topology.hpp"

namespace gqa {

enum class Mode { Train, Eval };

struct ModelDims {
    int emb_dim = 100;       // pretrained word embeddings (frozen)
    int char_emb_dim = 8;    // learned character embeddings
    int char_cnn_dim = 16;   // width-5 filter outputs
    int enc_hidden = 32;     // first/question BiLSTM
    int attn_dim = 64;       // post-attention projection width
    int sent_hidden = 32;    // sentence-embedding BiLSTM
    int ggnn_hidden = 64;    // encoder GGNN, must be >= 2*sent_hidden
    int word_hidden = 32;    // graph-initialized word BiLSTM
    int span_hidden = 32;    // decoder span BiLSTMs
    int type_pool_dim = 32;  // type-head pooled vector
    int ggnn_steps = 3;
    bool identity_candidate = false;
    Readout readout = Readout::WeightedAverage;
};

// Character inventory: printable ASCII plus one out-of-alphabet bucket.
inline constexpr int kCharInventory = 96;
inline constexpr int kCharWindow = 5;

struct LinearParams {
    Tensor W, b;
    static LinearParams init(int d_in, int d_out, std::mt19937_64& rng);
    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn);
    Tensor apply(const Tensor& x) const;  // x W + b
};

// Maps a sentence-level vector to the four initial states of a BiLSTM.
struct InitStateParams {
    LinearParams fwd_h, fwd_c, bwd_h, bwd_c;
    static InitStateParams init(int d_in, int d_h, std::mt19937_64& rng);
    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn);
};

struct BiAttentionParams {
    Tensor w_ctx, w_query, w_prod;  // trilinear similarity, each (d)
    static BiAttentionParams init(int d, std::mt19937_64& rng);
    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn);
};

struct EncoderParams {
    Tensor char_embeddings;        // (kCharInventory, char_emb_dim)
    LinearParams char_cnn;         // (kCharWindow*char_emb_dim, char_cnn_dim)
    BiLSTMParams word_lstm;        // per-sentence, over [glove ++ charcnn]
    BiLSTMParams question_lstm;
    BiAttentionParams bi_attention;
    LinearParams attn_proj;        // (8*enc_hidden, attn_dim)
    BiAttentionParams self_attention;
    BiLSTMParams sent_lstm;        // BiLSTM3
    GGNNParams graph;              // encoder GGNN
    InitStateParams graph_init;    // GGNN output -> BiLSTM4 states
    BiLSTMParams graph_lstm;       // BiLSTM4

    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn);
};

struct SpanHeadParams {
    InitStateParams init_state;
    BiLSTMParams lstm;
    LinearParams out;  // (2*span_hidden, 1)

    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn);
};

struct DecoderParams {
    LinearParams sp_hidden;  // (d_s, d_s), tanh
    LinearParams sp_out;     // (d_s, 1)
    SpanHeadParams start;
    SpanHeadParams end;
    GGNNParams type_graph;
    LinearParams type_out;  // (type_pool_dim, 3)

    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn);
};

// Word- and sentence-level contextual states plus the layout bookkeeping the
// decoder cascade needs.
struct ContextState {
    Tensor h_word;  // (n_words, d_w)
    Tensor h_sent;  // (n_sent, d_s)
    DocLayout layout;
    TopologyMatrix topology;
    std::vector<int> word_sent;     // global word index -> global sentence index
    std::vector<int> sent_offset;   // global sentence index -> first word index
    std::vector<int> sent_length;   // in words
    std::vector<std::string> words; // flattened original tokens
};

struct Prediction {
    Tensor sp_logits;     // (n_sent)
    Tensor start_logits;  // (n_words)
    Tensor end_logits;    // (n_words)
    Tensor type_logits;   // (3) over {span, yes, no}
    std::string answer;
    AnswerType type = AnswerType::Span;
    std::set<std::pair<int, int>> supporting;  // (doc, sentence)
};

struct LossWeights {
    double sp = 1.0;
    double type = 1.0;
};

// Gold span located in an example's flat word indexing; absent for yes/no.
struct GoldSpan {
    bool has_span = false;
    int start = 0;
    int end = 0;
};

class Model {
  public:
    Model(ModelDims dims, double lambda_train, double lambda_test, uint64_t seed);

    const ModelDims& dims() const { return dims_; }
    double lambda_for(Mode mode) const;
    uint64_t seed() const { return seed_; }

    void visit_params(const std::function<void(const std::string&, Tensor&)>& fn);

    ContextState encode(const Example& ex, const Vocabulary& vocab, Mode mode) const;

    // Decoder cascade; each stage appends columns to h_word/h_sent.
    Tensor decode_supporting(ContextState& ctx) const;
    std::pair<Tensor, Tensor> decode_span(ContextState& ctx) const;
    Tensor decode_type(const ContextState& ctx) const;

    Prediction forward(const Example& ex, const Vocabulary& vocab, Mode mode,
                       double sp_threshold = 0.5) const;

    Tensor loss(const Prediction& pred, const Example& gold, const GoldSpan& span,
                const LossWeights& weights) const;

    // Exact trainable-scalar count with a per-component breakdown.
    long long count_params(std::map<std::string, long long>* breakdown = nullptr);

    EncoderParams encoder;
    DecoderParams decoder;

  private:
    ModelDims dims_;
    double lambda_train_, lambda_test_;
    uint64_t seed_;
};

// Finds the gold answer as a token subsequence of a sentence, comparing under
// the answer-normalization rules. First match wins.
GoldSpan locate_gold_span(const Example& ex);

// Versioned binary checkpoint: header with dimensions, lambda pair, step
// count, and seed, then named parameter blocks of raw 64-bit floats in
// declaration order.
void save_checkpoint(Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace gqa
