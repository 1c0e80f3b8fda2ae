#include "gqa/ggnn.hpp"

#include <cmath>
#include <random>

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

}  // namespace

GGNNParams GGNNParams::init(int d_in, int d_h, int d_out, int n_steps, uint64_t seed) {
    if (d_h < d_in) throw ContractError("ggnn: d_h must be >= d_in");
    if (n_steps < 0) throw ContractError("ggnn: n_steps must be >= 0");
    std::mt19937_64 rng(seed);
    double bound = 1.0 / std::sqrt(static_cast<double>(d_h));

    GGNNParams p;
    p.d_in = d_in;
    p.d_h = d_h;
    p.d_out = d_out;
    p.n_steps = n_steps;
    p.W = uniform_init({d_h, d_h}, bound, rng);
    p.U = uniform_init({d_h, d_h}, bound, rng);
    p.Wz = uniform_init({d_h, d_h}, bound, rng);
    p.Uz = uniform_init({d_h, d_h}, bound, rng);
    p.Wr = uniform_init({d_h, d_h}, bound, rng);
    p.Ur = uniform_init({d_h, d_h}, bound, rng);
    p.b = Tensor::zeros({d_h});
    double pbound = 1.0 / std::sqrt(static_cast<double>(d_h + d_in));
    p.pool_i_w = uniform_init({d_h + d_in, 1}, pbound, rng);
    p.pool_i_b = Tensor::zeros({1});
    p.pool_j_w = uniform_init({d_h + d_in, d_out}, pbound, rng);
    p.pool_j_b = Tensor::zeros({d_out});
    return p;
}

void GGNNParams::visit(const std::string& prefix,
                       const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(prefix + ".W", W);
    fn(prefix + ".U", U);
    fn(prefix + ".Wz", Wz);
    fn(prefix + ".Uz", Uz);
    fn(prefix + ".Wr", Wr);
    fn(prefix + ".Ur", Ur);
    fn(prefix + ".b", b);
    fn(prefix + ".pool_i_w", pool_i_w);
    fn(prefix + ".pool_i_b", pool_i_b);
    fn(prefix + ".pool_j_w", pool_j_w);
    fn(prefix + ".pool_j_b", pool_j_b);
}

Tensor ggnn_propagate(const Tensor& X, const Tensor& M, const GGNNParams& params) {
    int n = X.shape[0];
    if (X.ndim() != 2 || X.shape[1] != params.d_in) {
        throw DimensionError("propagate: inputs " + X.shape_str() + " do not match d_in " +
                             std::to_string(params.d_in));
    }
    if (M.ndim() != 2 || M.shape[0] != n || M.shape[1] != n) {
        throw DimensionError("propagate: adjacency " + M.shape_str() + " does not match " +
                             std::to_string(n) + " nodes");
    }

    // h^(1) = [x^T, 0]^T
    Tensor H = params.d_h > params.d_in
                   ? ops::concat({X, Tensor::zeros({n, params.d_h - params.d_in})}, 1)
                   : X;

    for (int t = 0; t < params.n_steps; ++t) {
        Tensor a = ops::add(ops::matmul(M, H), params.b);
        Tensor z = ops::sigmoid(ops::add(ops::matmul(a, params.Wz), ops::matmul(H, params.Uz)));
        Tensor r = ops::sigmoid(ops::add(ops::matmul(a, params.Wr), ops::matmul(H, params.Ur)));
        Tensor cand = ops::add(ops::matmul(a, params.W), ops::matmul(ops::mul(r, H), params.U));
        Tensor h_tilde = params.identity_candidate ? cand : ops::tanh(cand);
        // h^(t) = (1-z) . h^(t-1) + z . h_tilde
        H = ops::add(ops::sub(H, ops::mul(z, H)), ops::mul(z, h_tilde));
    }
    return H;
}

Tensor ggnn_propagate(const Tensor& X, const TopologyMatrix& topo, const GGNNParams& params) {
    return ggnn_propagate(X, topo.M, params);
}

Tensor attention_pool(const Tensor& H, const Tensor& X, const GGNNParams& params) {
    if (H.shape[0] == 0) throw ContractError("attention_pool: no nodes");
    if (H.shape[0] != X.shape[0]) {
        throw DimensionError("attention_pool: row mismatch " + H.shape_str() + " vs " +
                             X.shape_str());
    }
    Tensor u = ops::concat({H, X}, 1);
    Tensor gate = ops::sigmoid(ops::add(ops::matmul(u, params.pool_i_w), params.pool_i_b));
    Tensor content = ops::tanh(ops::add(ops::matmul(u, params.pool_j_w), params.pool_j_b));
    Tensor weighted = ops::matmul(ops::transpose(gate), content);  // (1, d_out)
    Tensor pooled = ops::reshape(weighted, {params.d_out});
    if (params.readout == Readout::GatedSum) return pooled;
    return ops::div(pooled, ops::sum(gate));
}

}  // namespace gqa
