#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include "gqa/tensor.hpp"

namespace gqa {

// One direction of an LSTM. Gates act on row vectors: g = x Wx + h Wh + b,
// sliced in (input, forget, candidate, output) order.
struct LSTMParams {
    int d_in = 0;
    int d_h = 0;
    Tensor Wx;  // (d_in, 4*d_h)
    Tensor Wh;  // (d_h, 4*d_h)
    Tensor b;   // (4*d_h)

    static LSTMParams init(int d_in, int d_h, std::mt19937_64& rng);
    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn);
};

struct BiLSTMParams {
    LSTMParams fwd, bwd;

    static BiLSTMParams init(int d_in, int d_h, std::mt19937_64& rng);
    void visit(const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn);
    int d_h() const { return fwd.d_h; }
};

struct BiLSTMOut {
    Tensor outputs;  // (T, 2*d_h) per-step states, forward ++ backward
    Tensor final;    // (2*d_h) last forward state ++ last backward state
};

struct LSTMState {
    Tensor h;  // (1, d_h)
    Tensor c;  // (1, d_h)
};

// Runs both directions over X (T, d_in). Initial states default to zero;
// pass per-direction states to seed the recurrence.
BiLSTMOut bilstm_run(const BiLSTMParams& params, const Tensor& X);
BiLSTMOut bilstm_run(const BiLSTMParams& params, const Tensor& X, const LSTMState& fwd0,
                     const LSTMState& bwd0);

}  // namespace gqa
