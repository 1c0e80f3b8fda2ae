#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gqa/ggnn.hpp"
#include "gqa/harness.hpp"
#include "gqa/model.hpp"

namespace {

using namespace gqa;

Tensor random_matrix(int r, int c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(static_cast<size_t>(r) * c);
    for (double& x : v) x = dist(rng);
    return Tensor({r, c}, std::move(v));
}

void BM_matmul(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(1);
    Tensor a = random_matrix(n, n, rng);
    Tensor b = random_matrix(n, n, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ops::matmul(a, b));
    }
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_ggnn_propagate(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(2);
    GGNNParams p = GGNNParams::init(16, 32, 8, 3, 7);
    Tensor x = random_matrix(n, 16, rng);
    Tensor m = random_matrix(n, n, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ggnn_propagate(x, m, p));
    }
}
BENCHMARK(BM_ggnn_propagate)->Arg(8)->Arg(32)->Arg(64);

void BM_forward(benchmark::State& state) {
    std::vector<Example> data = generate_synthetic(1, 40, 9);
    ModelDims dims;
    dims.emb_dim = 16;
    dims.char_emb_dim = 4;
    dims.char_cnn_dim = 6;
    dims.enc_hidden = 8;
    dims.attn_dim = 16;
    dims.sent_hidden = 8;
    dims.ggnn_hidden = 16;
    dims.word_hidden = 8;
    dims.span_hidden = 8;
    dims.type_pool_dim = 8;
    dims.ggnn_steps = 2;
    Vocabulary vocab = random_embeddings(corpus_tokens(data), dims.emb_dim, 9);
    Model model(dims, 0.5, 0.05, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.forward(data[0], vocab, Mode::Eval));
    }
}
BENCHMARK(BM_forward);

void BM_forward_backward(benchmark::State& state) {
    std::vector<Example> data = generate_synthetic(1, 40, 9);
    ModelDims dims;
    dims.emb_dim = 16;
    dims.char_emb_dim = 4;
    dims.char_cnn_dim = 6;
    dims.enc_hidden = 8;
    dims.attn_dim = 16;
    dims.sent_hidden = 8;
    dims.ggnn_hidden = 16;
    dims.word_hidden = 8;
    dims.span_hidden = 8;
    dims.type_pool_dim = 8;
    dims.ggnn_steps = 2;
    Vocabulary vocab = random_embeddings(corpus_tokens(data), dims.emb_dim, 9);
    Model model(dims, 0.5, 0.05, 3);
    GoldSpan span = locate_gold_span(data[0]);
    std::vector<Tensor*> params;
    model.visit_params([&](const std::string&, Tensor& t) { params.push_back(&t); });
    for (auto _ : state) {
        Tape tape;
        Tape::Scope scope(tape);
        for (Tensor* p : params) tape.watch(*p);
        Prediction pred = model.forward(data[0], vocab, Mode::Train);
        Tensor loss = model.loss(pred, data[0], span, {});
        benchmark::DoNotOptimize(backward(tape, loss));
    }
}
BENCHMARK(BM_forward_backward);

}  // namespace

BENCHMARK_MAIN();
