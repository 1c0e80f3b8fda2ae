#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "gqa/model.hpp"

using namespace gqa;

namespace {

Example make_example() {
    Example ex;
    ex.id = "ex0";
    ex.question = {"what", "does", "a1", "lead", "to", "?"};
    Document d0;
    d0.title = "alpha";
    d0.sentences = {{"a1", "relates", "to", "b2"}, {"filler", "words", "here"}};
    Document d1;
    d1.title = "beta";
    d1.sentences = {{"b2", "yields", "gold", "coin"}};
    Document d2;
    d2.title = "noise";
    d2.sentences = {{"unrelated", "text", "entirely"}};
    ex.documents = {d0, d1, d2};
    ex.gold_answer = "gold coin";
    ex.gold_type = AnswerType::Span;
    ex.gold_supporting = {{0, 0}, {1, 0}};
    return ex;
}

ModelDims tiny_dims() {
    ModelDims d;
    d.emb_dim = 6;
    d.char_emb_dim = 3;
    d.char_cnn_dim = 4;
    d.enc_hidden = 3;
    d.attn_dim = 6;
    d.sent_hidden = 3;
    d.ggnn_hidden = 6;
    d.word_hidden = 3;
    d.span_hidden = 3;
    d.type_pool_dim = 4;
    d.ggnn_steps = 2;
    return d;
}

Vocabulary make_vocab(const Example& ex, int dim) {
    std::vector<Example> all{ex};
    return random_embeddings(corpus_tokens(all), dim, 7);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && *a.data == *b.data;
}

}  // namespace

TEST_CASE("encoder output shapes") {
    Example ex = make_example();
    ModelDims dims = tiny_dims();
    Vocabulary vocab = make_vocab(ex, dims.emb_dim);
    Model model(dims, 0.5, 0.05, 11);

    ContextState ctx = model.encode(ex, vocab, Mode::Eval);
    int n_words = 4 + 3 + 4 + 3;
    int n_sent = 4;
    CHECK(ctx.h_word.shape == std::vector<int>{n_words, 2 * dims.word_hidden});
    CHECK(ctx.h_sent.shape == std::vector<int>{n_sent, 2 * dims.word_hidden});
    CHECK(ctx.words.size() == static_cast<size_t>(n_words));
    CHECK(ctx.word_sent.size() == static_cast<size_t>(n_words));
    CHECK(ctx.sent_offset == std::vector<int>{0, 4, 7, 11});
    CHECK(ctx.sent_length == std::vector<int>{4, 3, 4, 3});
    CHECK(ctx.topology.M.shape == std::vector<int>{n_sent, n_sent});
}

TEST_CASE("decoder cascade widens states and keeps prefix columns intact") {
    Example ex = make_example();
    ModelDims dims = tiny_dims();
    Vocabulary vocab = make_vocab(ex, dims.emb_dim);
    Model model(dims, 0.5, 0.05, 11);

    ContextState ctx = model.encode(ex, vocab, Mode::Eval);
    int d_s = 2 * dims.word_hidden;
    int d_w = 2 * dims.word_hidden;
    Tensor sent0 = ctx.h_sent;
    Tensor word0 = ctx.h_word;

    Tensor sp = model.decode_supporting(ctx);
    CHECK(sp.shape == std::vector<int>{4});
    CHECK(ctx.h_sent.shape == std::vector<int>{4, 2 * d_s});
    CHECK(ctx.h_word.shape == std::vector<int>{14, d_w + d_s});
    CHECK(bitwise_equal(apply_primitive(Prim::Slice, {ctx.h_sent}, {.axis = 1, .start = 0, .len = d_s}),
                        sent0));
    CHECK(bitwise_equal(apply_primitive(Prim::Slice, {ctx.h_word}, {.axis = 1, .start = 0, .len = d_w}),
                        word0));

    Tensor sent1 = ctx.h_sent;
    auto [start, end] = model.decode_span(ctx);
    CHECK(start.shape == std::vector<int>{14});
    CHECK(end.shape == std::vector<int>{14});
    CHECK(ctx.h_sent.shape == std::vector<int>{4, 2 * d_s + 4 * dims.span_hidden});
    CHECK(ctx.h_word.shape == std::vector<int>{14, d_w + d_s + 4 * dims.span_hidden});
    CHECK(bitwise_equal(
        apply_primitive(Prim::Slice, {ctx.h_sent}, {.axis = 1, .start = 0, .len = 2 * d_s}), sent1));

    Tensor type = model.decode_type(ctx);
    CHECK(type.shape == std::vector<int>{3});
}

TEST_CASE("identical seeds give identical parameters and predictions") {
    Example ex = make_example();
    ModelDims dims = tiny_dims();
    Vocabulary vocab = make_vocab(ex, dims.emb_dim);
    Model a(dims, 0.5, 0.05, 21);
    Model b(dims, 0.5, 0.05, 21);
    Model c(dims, 0.5, 0.05, 22);

    std::vector<Tensor> pa, pb, pc;
    a.visit_params([&](const std::string&, Tensor& t) { pa.push_back(t); });
    b.visit_params([&](const std::string&, Tensor& t) { pb.push_back(t); });
    c.visit_params([&](const std::string&, Tensor& t) { pc.push_back(t); });
    REQUIRE(pa.size() == pb.size());
    bool all_equal = true, any_diff = false;
    for (size_t i = 0; i < pa.size(); ++i) {
        all_equal = all_equal && bitwise_equal(pa[i], pb[i]);
        any_diff = any_diff || !bitwise_equal(pa[i], pc[i]);
    }
    CHECK(all_equal);
    CHECK(any_diff);

    Prediction p1 = a.forward(ex, vocab, Mode::Eval);
    Prediction p2 = a.forward(ex, vocab, Mode::Eval);
    CHECK(bitwise_equal(p1.sp_logits, p2.sp_logits));
    CHECK(bitwise_equal(p1.start_logits, p2.start_logits));
    CHECK(bitwise_equal(p1.end_logits, p2.end_logits));
    CHECK(bitwise_equal(p1.type_logits, p2.type_logits));
    CHECK(p1.answer == p2.answer);
}

TEST_CASE("train and eval modes use their own mixing weight") {
    Example ex = make_example();
    ModelDims dims = tiny_dims();
    Vocabulary vocab = make_vocab(ex, dims.emb_dim);
    Model model(dims, 0.5, 0.05, 3);

    ContextState tr = model.encode(ex, vocab, Mode::Train);
    ContextState ev = model.encode(ex, vocab, Mode::Eval);
    CHECK(tr.topology.lambda == doctest::Approx(0.5));
    CHECK(ev.topology.lambda == doctest::Approx(0.05));
    CHECK(!bitwise_equal(tr.topology.M, ev.topology.M));
}

TEST_CASE("forward produces a well-formed prediction") {
    Example ex = make_example();
    ModelDims dims = tiny_dims();
    Vocabulary vocab = make_vocab(ex, dims.emb_dim);
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        Model model(dims, 0.5, 0.05, seed);
        Prediction pred = model.forward(ex, vocab, Mode::Eval);
        CHECK(pred.type_logits.size() == 3);
        if (pred.type == AnswerType::Yes) CHECK(pred.answer == "yes");
        if (pred.type == AnswerType::No) CHECK(pred.answer == "no");
        if (pred.type == AnswerType::Span) {
            // the decoded span lies inside one sentence, so the answer token
            // count never exceeds the longest sentence
            CHECK(!pred.answer.empty());
            int tokens = 1;
            for (char c : pred.answer) tokens += c == ' ';
            CHECK(tokens <= 4);
        }
        for (auto [d, s] : pred.supporting) {
            REQUIRE(d >= 0);
            REQUIRE(d < 3);
            REQUIRE(s >= 0);
            REQUIRE(s < static_cast<int>(ex.documents[d].sentences.size()));
        }
    }
}

TEST_CASE("loss matches hand arithmetic at zero logits") {
    Example ex = make_example();
    ModelDims dims = tiny_dims();
    Model model(dims, 0.5, 0.05, 5);

    Prediction pred;
    pred.sp_logits = Tensor::zeros({4});
    pred.start_logits = Tensor::zeros({14});
    pred.end_logits = Tensor::zeros({14});
    pred.type_logits = Tensor::zeros({3});

    GoldSpan span = locate_gold_span(ex);
    REQUIRE(span.has_span);
    double expected = std::log(2.0) + std::log(3.0) + 2.0 * std::log(14.0);
    CHECK(model.loss(pred, ex, span, {}).item() == doctest::Approx(expected).epsilon(1e-12));

    Example yn = ex;
    yn.gold_type = AnswerType::Yes;
    yn.gold_answer = "yes";
    double expected_yn = std::log(2.0) + std::log(3.0);
    CHECK(model.loss(pred, yn, GoldSpan{}, {}).item() ==
          doctest::Approx(expected_yn).epsilon(1e-12));

    // loss weights scale their terms
    LossWeights w{2.0, 3.0};
    CHECK(model.loss(pred, yn, GoldSpan{}, w).item() ==
          doctest::Approx(2.0 * std::log(2.0) + 3.0 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("gold span location uses normalization and prefers supporting sentences") {
    Example ex = make_example();
    GoldSpan span = locate_gold_span(ex);
    REQUIRE(span.has_span);
    CHECK(span.start == 9);
    CHECK(span.end == 10);

    Example cased = ex;
    cased.gold_answer = "the Gold Coin.";
    GoldSpan span2 = locate_gold_span(cased);
    REQUIRE(span2.has_span);
    CHECK(span2.start == 9);
    CHECK(span2.end == 10);

    // a copy of the answer in an earlier non-supporting sentence is skipped
    Example decoy = ex;
    decoy.documents[0].sentences[1] = {"gold", "coin", "here"};
    GoldSpan span3 = locate_gold_span(decoy);
    REQUIRE(span3.has_span);
    CHECK(span3.start == 9);
    CHECK(span3.end == 10);

    Example missing = ex;
    missing.gold_answer = "absent phrase";
    CHECK(!locate_gold_span(missing).has_span);

    Example yn = ex;
    yn.gold_type = AnswerType::No;
    CHECK(!locate_gold_span(yn).has_span);
}

TEST_CASE("parameter count breakdown is exact") {
    ModelDims dims = tiny_dims();
    Model model(dims, 0.5, 0.05, 9);
    std::map<std::string, long long> breakdown;
    long long total = model.count_params(&breakdown);

    long long sum = 0;
    for (const auto& [name, n] : breakdown) sum += n;
    CHECK(sum == total);

    int d_s = 2 * dims.word_hidden;
    CHECK(breakdown.at("decoder.sp_hidden") == d_s * d_s + d_s);
    CHECK(breakdown.at("decoder.sp_out") == d_s + 1);
    // one LSTM direction: Wx + Wh + b; a BiLSTM doubles it
    int d_wi = dims.emb_dim + dims.char_cnn_dim;
    long long one_dir = d_wi * 4 * dims.enc_hidden + dims.enc_hidden * 4 * dims.enc_hidden +
                        4 * dims.enc_hidden;
    CHECK(breakdown.at("encoder.word_lstm") == 2 * one_dir);
    CHECK(breakdown.at("encoder.char_embeddings") == 96 * dims.char_emb_dim);
}

TEST_CASE("checkpoint round-trip is bit exact") {
    Example ex = make_example();
    ModelDims dims = tiny_dims();
    Vocabulary vocab = make_vocab(ex, dims.emb_dim);
    Model model(dims, 0.5, 0.05, 33);

    std::filesystem::path path = std::filesystem::temp_directory_path() / "gqa_ckpt_test.bin";
    save_checkpoint(model, path.string());
    Model loaded = load_checkpoint(path.string());

    CHECK(loaded.dims().ggnn_steps == dims.ggnn_steps);
    CHECK(loaded.lambda_for(Mode::Train) == doctest::Approx(0.5));
    CHECK(loaded.lambda_for(Mode::Eval) == doctest::Approx(0.05));

    std::vector<Tensor> pa, pb;
    model.visit_params([&](const std::string&, Tensor& t) { pa.push_back(t); });
    loaded.visit_params([&](const std::string&, Tensor& t) { pb.push_back(t); });
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(bitwise_equal(pa[i], pb[i]));

    Prediction p1 = model.forward(ex, vocab, Mode::Eval);
    Prediction p2 = loaded.forward(ex, vocab, Mode::Eval);
    CHECK(bitwise_equal(p1.start_logits, p2.start_logits));

    // truncated files are rejected
    std::filesystem::resize_file(path, 32);
    CHECK_THROWS_AS(load_checkpoint(path.string()), ParseError);
    std::filesystem::remove(path);
}

TEST_CASE("tape gradients of the full loss agree with finite differences") {
    Example ex = make_example();
    ModelDims dims = tiny_dims();
    Vocabulary vocab = make_vocab(ex, dims.emb_dim);
    Model model(dims, 0.5, 0.05, 17);
    GoldSpan span = locate_gold_span(ex);
    REQUIRE(span.has_span);

    std::vector<Tensor> probes = {model.decoder.start.out.W, model.encoder.bi_attention.w_prod,
                                  model.decoder.sp_out.W, model.decoder.type_out.b};
    auto loss_fn = [&](const std::vector<Tensor>& params) {
        Model m = model;
        m.decoder.start.out.W = params[0];
        m.encoder.bi_attention.w_prod = params[1];
        m.decoder.sp_out.W = params[2];
        m.decoder.type_out.b = params[3];
        Prediction pred = m.forward(ex, vocab, Mode::Train);
        return m.loss(pred, ex, span, {});
    };
    // a large step keeps the tiny-gradient coordinates out of cancellation
    // noise; the fourth-order stencil keeps truncation negligible
    CHECK(grad_check(loss_fn, probes, 5e-3) < 1e-4);
}
