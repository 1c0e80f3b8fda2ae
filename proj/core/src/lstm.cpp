#include "gqa/lstm.hpp"

#include <cmath>

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

// One direction over the step order given by `index(t)`.
std::pair<std::vector<Tensor>, Tensor> run_direction(const LSTMParams& p, const Tensor& X,
                                                     const LSTMState& init, bool reverse) {
    int T = X.shape[0];
    int H = p.d_h;
    Tensor h = init.h.defined() ? init.h : Tensor::zeros({1, H});
    Tensor c = init.c.defined() ? init.c : Tensor::zeros({1, H});

    std::vector<Tensor> outputs(static_cast<size_t>(T));
    for (int step = 0; step < T; ++step) {
        int t = reverse ? T - 1 - step : step;
        Tensor x = ops::slice(X, 0, t, 1);  // (1, d_in)
        Tensor gates =
            ops::add(ops::add(ops::matmul(x, p.Wx), ops::matmul(h, p.Wh)), p.b);
        Tensor i = ops::sigmoid(ops::slice(gates, 1, 0, H));
        Tensor f = ops::sigmoid(ops::slice(gates, 1, H, H));
        Tensor g = ops::tanh(ops::slice(gates, 1, 2 * H, H));
        Tensor o = ops::sigmoid(ops::slice(gates, 1, 3 * H, H));
        c = ops::add(ops::mul(f, c), ops::mul(i, g));
        h = ops::mul(o, ops::tanh(c));
        outputs[t] = h;
    }
    return {std::move(outputs), h};
}

}  // namespace

LSTMParams LSTMParams::init(int d_in, int d_h, std::mt19937_64& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(d_h));
    LSTMParams p;
    p.d_in = d_in;
    p.d_h = d_h;
    p.Wx = uniform_init({d_in, 4 * d_h}, bound, rng);
    p.Wh = uniform_init({d_h, 4 * d_h}, bound, rng);
    p.b = Tensor::zeros({4 * d_h});
    return p;
}

void LSTMParams::visit(const std::string& prefix,
                       const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(prefix + ".Wx", Wx);
    fn(prefix + ".Wh", Wh);
    fn(prefix + ".b", b);
}

BiLSTMParams BiLSTMParams::init(int d_in, int d_h, std::mt19937_64& rng) {
    BiLSTMParams p;
    p.fwd = LSTMParams::init(d_in, d_h, rng);
    p.bwd = LSTMParams::init(d_in, d_h, rng);
    return p;
}

void BiLSTMParams::visit(const std::string& prefix,
                         const std::function<void(const std::string&, Tensor&)>& fn) {
    fwd.visit(prefix + ".fwd", fn);
    bwd.visit(prefix + ".bwd", fn);
}

BiLSTMOut bilstm_run(const BiLSTMParams& params, const Tensor& X) {
    return bilstm_run(params, X, LSTMState{}, LSTMState{});
}

BiLSTMOut bilstm_run(const BiLSTMParams& params, const Tensor& X, const LSTMState& fwd0,
                     const LSTMState& bwd0) {
    if (X.ndim() != 2 || X.shape[1] != params.fwd.d_in) {
        throw DimensionError("bilstm: input " + X.shape_str() + " does not match d_in " +
                             std::to_string(params.fwd.d_in));
    }
    if (X.shape[0] == 0) throw ContractError("bilstm: empty sequence");

    auto [fwd_out, fwd_last] = run_direction(params.fwd, X, fwd0, false);
    auto [bwd_out, bwd_last] = run_direction(params.bwd, X, bwd0, true);

    int T = X.shape[0];
    std::vector<Tensor> rows(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) rows[t] = ops::concat({fwd_out[t], bwd_out[t]}, 1);

    BiLSTMOut out;
    out.outputs = rows.size() == 1 ? rows[0] : ops::concat(rows, 0);
    out.final = ops::reshape(ops::concat({fwd_last, bwd_last}, 1), {2 * params.d_h()});
    return out;
}

}  // namespace gqa
