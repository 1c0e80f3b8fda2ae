#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "gqa/tensor.hpp"
#include "gqa/topology.hpp"

namespace gqa {

enum class Readout { WeightedAverage, GatedSum };

// Propagation weights plus the two pooling networks. Matrices act on row
// vectors from the right: z = sigma(a Wz + h Uz) etc.
struct GGNNParams {
    int d_in = 0;
    int d_h = 0;
    int d_out = 0;
    int n_steps = 3;
    bool identity_candidate = false;  // replaces tanh in the candidate state
    Readout readout = Readout::WeightedAverage;

    Tensor W, U;    // candidate
    Tensor Wz, Uz;  // update gate
    Tensor Wr, Ur;  // reset gate
    Tensor b;       // aggregation bias
    Tensor pool_i_w, pool_i_b;  // (d_h + d_in, 1), (1)   scalar gate
    Tensor pool_j_w, pool_j_b;  // (d_h + d_in, d_out), (d_out)

    static GGNNParams init(int d_in, int d_h, int d_out, int n_steps, uint64_t seed);

    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn);
};

// Gated propagation over the topology matrix. Hidden states start as the
// inputs zero-padded to d_h; T = 0 returns that initialization.
Tensor ggnn_propagate(const Tensor& X, const TopologyMatrix& topo, const GGNNParams& params);
Tensor ggnn_propagate(const Tensor& X, const Tensor& M, const GGNNParams& params);

// Soft-attention readout: per node, scalar gate sigma(i(h ++ x)) over content
// tanh(j(h ++ x)); gated contributions averaged (or summed, per readout mode).
Tensor attention_pool(const Tensor& H, const Tensor& X, const GGNNParams& params);

}  // namespace gqa
