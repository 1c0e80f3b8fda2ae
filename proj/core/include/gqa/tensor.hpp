#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "gqa/error.hpp"

namespace gqa {

// Dense row-major tensor of doubles. Immutable after creation; copies share
// storage. `node` is the handle into the active Tape when the value was
// produced under one, -1 otherwise.
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<const std::vector<double>> data;
    int node = -1;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<double> values);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v);
    static Tensor row(std::vector<double> values);  // 1-D

    bool defined() const { return static_cast<bool>(data); }
    int size() const;
    int ndim() const { return static_cast<int>(shape.size()); }
    int rows() const;
    int cols() const;
    bool is_scalar() const { return size() == 1; }

    double operator()(int i) const { return (*data)[static_cast<size_t>(i)]; }
    double operator()(int i, int j) const { return (*data)[static_cast<size_t>(i) * cols() + j]; }
    double item() const;

    std::string shape_str() const;
};

bool same_shape(const Tensor& a, const Tensor& b);

// Primitive kinds for the generic dispatcher. Named wrappers in ops:: are what
// model code calls; the enum exists for uniform testing of the primitive set.
enum class Prim {
    Matmul,
    Add,
    Sub,
    ElementwiseMul,
    Concat,
    Slice,
    Sigmoid,
    Tanh,
    Softmax,
    Sum,
    Mean,
    Transpose,
    Broadcast,
};

struct PrimAttrs {
    int axis = 0;
    int start = 0;
    int len = 0;
    int rows = 0;  // Broadcast target row count
};

Tensor apply_primitive(Prim kind, const std::vector<Tensor>& inputs, const PrimAttrs& attrs = {});

// Reverse-mode tape. Nodes are recorded in topological order; each keeps the
// values needed to replay its forward computation and to run its backward.
// One tape per logical thread; activate with Tape::Scope.
class Tape {
  public:
    struct Node {
        std::string op;
        std::vector<int> inputs;                                 // node ids, -1 = untracked
        std::vector<Tensor> input_vals;
        Tensor output;
        std::function<std::vector<Tensor>(const Tensor&)> backward;
        std::function<Tensor()> recompute;
        bool leaf = false;
    };

    // Registers t as a parameter leaf and stamps its node handle.
    int watch(Tensor& t);
    int record(Node n);

    const std::vector<Node>& nodes() const { return nodes_; }
    size_t num_nodes() const { return nodes_.size(); }

    // Recomputes every non-leaf node from its saved inputs and bit-compares
    // against the stored output.
    bool replay_check() const;

    static Tape* active();

    class Scope {
      public:
        explicit Scope(Tape& t);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

      private:
        Tape* prev_;
    };

  private:
    std::vector<Node> nodes_;
};

// node id of a leaf -> gradient of root w.r.t. that leaf. Leaves not reachable
// from root get zero gradients.
using GradMap = std::unordered_map<int, Tensor>;

GradMap backward(const Tape& tape, const Tensor& root);

// Central-finite-difference check of the tape gradients of loss_fn at params.
// Returns the worst relative error, denominator max(|analytic|,|numeric|,1e-8).
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& loss_fn,
                  const std::vector<Tensor>& params, double step);

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& t, int axis, int start, int len);
Tensor sigmoid(const Tensor& t);
Tensor tanh(const Tensor& t);
Tensor softmax(const Tensor& t);  // along the last axis
Tensor softplus(const Tensor& t);
Tensor logsumexp(const Tensor& t);  // 1-D -> scalar
Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
Tensor transpose(const Tensor& t);
Tensor broadcast(const Tensor& t, int rows);  // (n,) -> (rows, n)
Tensor max_axis(const Tensor& t, int axis);   // 2-D max reduction
Tensor scale(const Tensor& t, double c);
Tensor reshape(const Tensor& t, std::vector<int> shape);

}  // namespace ops

}  // namespace gqa
