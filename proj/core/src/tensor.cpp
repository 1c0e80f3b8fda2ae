#include "gqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace gqa {

namespace {

thread_local Tape* g_active_tape = nullptr;

size_t shape_product(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string("non-finite value produced by ") + op);
        }
    }
}

std::string shape_to_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

[[noreturn]] void dim_error(const char* op, const Tensor& a, const Tensor& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
}

[[noreturn]] void dim_error1(const char* op, const Tensor& a, const char* what) {
    throw DimensionError(std::string(op) + ": " + what + ", got shape " + a.shape_str());
}

// Wraps a raw forward result: finiteness check, tape recording.
Tensor finish(const char* op, std::vector<Tensor> inputs, Tensor out,
              std::function<std::vector<Tensor>(const Tensor&)> bw, std::function<Tensor()> fw) {
    check_finite(*out.data, op);
    Tape* tape = Tape::active();
    if (tape) {
        Tape::Node node;
        node.op = op;
        node.inputs.reserve(inputs.size());
        for (const Tensor& t : inputs) node.inputs.push_back(t.node);
        node.input_vals = std::move(inputs);
        node.backward = std::move(bw);
        node.recompute = std::move(fw);
        node.output = out;
        out.node = tape->record(std::move(node));
    }
    return out;
}

// Elementwise broadcast kinds: b may match a, be a row vector against a's
// trailing dimension, or be a scalar.
enum class Bx { Same, Row, Scalar };

Bx bx_kind(const char* op, const Tensor& a, const Tensor& b) {
    if (same_shape(a, b)) return Bx::Same;
    if (b.is_scalar() && b.ndim() <= 1) return Bx::Scalar;
    if (a.ndim() == 2 && b.ndim() == 1 && b.shape[0] == a.shape[1]) return Bx::Row;
    dim_error(op, a, b);
}

double bx_read(const Tensor& b, Bx kind, size_t flat, int ncols) {
    switch (kind) {
        case Bx::Same: return (*b.data)[flat];
        case Bx::Row: return (*b.data)[flat % static_cast<size_t>(ncols)];
        case Bx::Scalar: return (*b.data)[0];
    }
    return 0.0;
}

// Reduces a gradient of a's shape down to b's shape for the broadcast kind.
Tensor bx_reduce(const std::vector<double>& g, const Tensor& a, const Tensor& b, Bx kind) {
    if (kind == Bx::Same) return Tensor(a.shape, std::vector<double>(g));
    if (kind == Bx::Scalar) {
        double s = std::accumulate(g.begin(), g.end(), 0.0);
        return Tensor(b.shape, {s});
    }
    int n = b.shape[0];
    std::vector<double> out(static_cast<size_t>(n), 0.0);
    for (size_t i = 0; i < g.size(); ++i) out[i % static_cast<size_t>(n)] += g[i];
    return Tensor(b.shape, std::move(out));
}

Tensor raw_elementwise(const char* op, const Tensor& a, const Tensor& b,
                       double (*f)(double, double)) {
    Bx kind = bx_kind(op, a, b);
    int ncols = a.ndim() == 2 ? a.shape[1] : (a.ndim() == 1 ? a.shape[0] : 1);
    std::vector<double> out(a.data->size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = f((*a.data)[i], bx_read(b, kind, i, ncols));
    }
    return Tensor(a.shape, std::move(out));
}

Tensor raw_map(const Tensor& t, double (*f)(double)) {
    std::vector<double> out(t.data->size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = f((*t.data)[i]);
    return Tensor(t.shape, std::move(out));
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

Tensor raw_matmul(const Tensor& a, const Tensor& b) {
    int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    const double* pa = a.data->data();
    const double* pb = b.data->data();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            double av = pa[static_cast<size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = pb + static_cast<size_t>(p) * n;
            double* orow = out.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return Tensor({m, n}, std::move(out));
}

Tensor raw_transpose(const Tensor& t) {
    int m = t.shape[0], n = t.shape[1];
    std::vector<double> out(t.data->size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = (*t.data)[static_cast<size_t>(i) * n + j];
    return Tensor({n, m}, std::move(out));
}

Tensor raw_softmax(const Tensor& t) {
    int ncols = t.ndim() == 2 ? t.shape[1] : t.shape[0];
    int nrows = t.ndim() == 2 ? t.shape[0] : 1;
    std::vector<double> out(t.data->size());
    for (int r = 0; r < nrows; ++r) {
        const double* in = t.data->data() + static_cast<size_t>(r) * ncols;
        double* o = out.data() + static_cast<size_t>(r) * ncols;
        double mx = *std::max_element(in, in + ncols);
        double z = 0.0;
        for (int j = 0; j < ncols; ++j) {
            o[j] = std::exp(in[j] - mx);
            z += o[j];
        }
        for (int j = 0; j < ncols; ++j) o[j] /= z;
    }
    return Tensor(t.shape, std::move(out));
}

Tensor raw_concat(const std::vector<Tensor>& parts, int axis) {
    if (axis == 0 || parts[0].ndim() == 1) {
        std::vector<double> out;
        int total = 0;
        for (const Tensor& p : parts) total += p.shape[0];
        out.reserve(shape_product(parts[0].shape) / parts[0].shape[0] * total);
        for (const Tensor& p : parts) out.insert(out.end(), p.data->begin(), p.data->end());
        std::vector<int> shape = parts[0].shape;
        shape[0] = total;
        return Tensor(std::move(shape), std::move(out));
    }
    // axis 1, 2-D
    int m = parts[0].shape[0];
    int total = 0;
    for (const Tensor& p : parts) total += p.shape[1];
    std::vector<double> out(static_cast<size_t>(m) * total);
    int off = 0;
    for (const Tensor& p : parts) {
        int n = p.shape[1];
        for (int i = 0; i < m; ++i)
            std::copy_n(p.data->data() + static_cast<size_t>(i) * n, n,
                        out.data() + static_cast<size_t>(i) * total + off);
        off += n;
    }
    return Tensor({m, total}, std::move(out));
}

Tensor raw_slice(const Tensor& t, int axis, int start, int len) {
    if (t.ndim() == 1 || axis == 0) {
        int cols = t.ndim() == 2 ? t.shape[1] : 1;
        std::vector<double> out(t.data->begin() + static_cast<size_t>(start) * cols,
                                t.data->begin() + static_cast<size_t>(start + len) * cols);
        std::vector<int> shape = t.shape;
        shape[0] = len;
        return Tensor(std::move(shape), std::move(out));
    }
    int m = t.shape[0], n = t.shape[1];
    std::vector<double> out(static_cast<size_t>(m) * len);
    for (int i = 0; i < m; ++i)
        std::copy_n(t.data->data() + static_cast<size_t>(i) * n + start, len,
                    out.data() + static_cast<size_t>(i) * len);
    return Tensor({m, len}, std::move(out));
}

Tensor raw_broadcast(const Tensor& t, int rows) {
    int n = t.shape[0];
    std::vector<double> out(static_cast<size_t>(rows) * n);
    for (int i = 0; i < rows; ++i) std::copy_n(t.data->data(), n, out.data() + static_cast<size_t>(i) * n);
    return Tensor({rows, n}, std::move(out));
}

Tensor raw_max_axis(const Tensor& t, int axis) {
    int m = t.shape[0], n = t.shape[1];
    if (axis == 1) {
        std::vector<double> out(static_cast<size_t>(m));
        for (int i = 0; i < m; ++i) {
            const double* row = t.data->data() + static_cast<size_t>(i) * n;
            out[i] = *std::max_element(row, row + n);
        }
        return Tensor({m}, std::move(out));
    }
    std::vector<double> out(static_cast<size_t>(n), -std::numeric_limits<double>::infinity());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[j] = std::max(out[j], t(i, j));
    return Tensor({n}, std::move(out));
}

Tensor raw_logsumexp(const Tensor& t) {
    double mx = *std::max_element(t.data->begin(), t.data->end());
    double z = 0.0;
    for (double x : *t.data) z += std::exp(x - mx);
    return Tensor::scalar(mx + std::log(z));
}

}  // namespace

Tensor::Tensor(std::vector<int> shape_, std::vector<double> values)
    : shape(std::move(shape_)), data(std::make_shared<std::vector<double>>(std::move(values))) {
    if (shape_product(shape) != data->size()) {
        throw DimensionError("tensor: shape " + shape_to_str(shape) + " does not match " +
                             std::to_string(data->size()) + " values");
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::row(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values));
}

int Tensor::size() const { return static_cast<int>(data ? data->size() : 0); }

int Tensor::rows() const { return shape.empty() ? 0 : shape[0]; }

int Tensor::cols() const {
    if (ndim() != 2) throw DimensionError("cols() on non-2-D tensor " + shape_str());
    return shape[1];
}

double Tensor::item() const {
    if (!is_scalar()) throw ContractError("item() on non-scalar tensor " + shape_str());
    return (*data)[0];
}

std::string Tensor::shape_str() const { return shape_to_str(shape); }

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

// ---------------------------------------------------------------------------
// Tape

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }

Tape::Scope::~Scope() { g_active_tape = prev_; }

int Tape::watch(Tensor& t) {
    if (!t.defined()) throw ContractError("watch: undefined tensor");
    Node node;
    node.op = "leaf";
    node.leaf = true;
    node.output = t;
    t.node = record(std::move(node));
    return t.node;
}

int Tape::record(Node n) {
    for (int in : n.inputs) {
        if (in >= static_cast<int>(nodes_.size())) {
            throw ContractError("tape: input node recorded after its consumer");
        }
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

bool Tape::replay_check() const {
    for (const Node& n : nodes_) {
        if (n.leaf || !n.recompute) continue;
        Tensor again = n.recompute();
        if (!same_shape(again, n.output) || *again.data != *n.output.data) return false;
    }
    return true;
}

GradMap backward(const Tape& tape, const Tensor& root) {
    if (!root.is_scalar()) {
        throw ContractError("backward: root must be scalar, got " + root.shape_str());
    }
    if (root.node < 0 || root.node >= static_cast<int>(tape.num_nodes())) {
        throw ContractError("backward: root is not on the tape");
    }
    const auto& nodes = tape.nodes();
    std::vector<Tensor> grads(nodes.size());
    grads[root.node] = Tensor(root.shape, {1.0});

    for (int i = root.node; i >= 0; --i) {
        if (!grads[i].defined() || nodes[i].leaf) continue;
        const Tape::Node& n = nodes[i];
        std::vector<Tensor> gin = n.backward(grads[i]);
        for (size_t j = 0; j < n.inputs.size(); ++j) {
            int id = n.inputs[j];
            if (id < 0 || !gin[j].defined()) continue;
            if (!grads[id].defined()) {
                grads[id] = gin[j];
            } else {
                std::vector<double> acc(*grads[id].data);
                for (size_t k = 0; k < acc.size(); ++k) acc[k] += (*gin[j].data)[k];
                grads[id] = Tensor(grads[id].shape, std::move(acc));
            }
        }
        grads[i] = Tensor();  // free intermediate
    }

    GradMap out;
    for (size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i].leaf) continue;
        out[static_cast<int>(i)] =
            grads[i].defined() ? grads[i] : Tensor::zeros(nodes[i].output.shape);
    }
    return out;
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& loss_fn,
                  const std::vector<Tensor>& params, double step) {
    if (step <= 0.0) throw ContractError("grad_check: step must be positive");

    double f0 = loss_fn(params).item();
    double f0b = loss_fn(params).item();
    if (f0 != f0b) throw ContractError("grad_check: loss_fn is not deterministic");

    Tape tape;
    std::vector<Tensor> watched = params;
    {
        Tape::Scope scope(tape);
        for (Tensor& p : watched) tape.watch(p);
        Tensor loss = loss_fn(watched);
        if (!loss.is_scalar()) throw ContractError("grad_check: loss is not scalar");
        GradMap grads = backward(tape, loss);

        double worst = 0.0;
        for (size_t pi = 0; pi < params.size(); ++pi) {
            const Tensor& analytic = grads.at(watched[pi].node);
            for (int k = 0; k < params[pi].size(); ++k) {
                auto eval_at = [&](double delta) {
                    std::vector<Tensor> ps = params;
                    std::vector<double> d(*params[pi].data);
                    d[k] += delta;
                    ps[pi] = Tensor(params[pi].shape, std::move(d));
                    // numeric evaluations must not record onto the tape
                    g_active_tape = nullptr;
                    double f = loss_fn(ps).item();
                    g_active_tape = &tape;
                    return f;
                };
                // fourth-order central stencil: the O(step^4) truncation lets
                // the step stay large enough to dominate cancellation noise;
                // the symmetric grouping keeps unaffected coordinates at an
                // exact zero
                double d1 = eval_at(step) - eval_at(-step);
                double d2 = eval_at(2.0 * step) - eval_at(-2.0 * step);
                double numeric = (8.0 * d1 - d2) / (12.0 * step);
                double ana = (*analytic.data)[k];
                double denom = std::max({std::fabs(ana), std::fabs(numeric), 1e-8});
                worst = std::max(worst, std::fabs(ana - numeric) / denom);
            }
        }
        return worst;
    }
}

// ---------------------------------------------------------------------------
// Primitives

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape[1] != b.shape[0]) dim_error("matmul", a, b);
    return finish(
        "matmul", {a, b}, raw_matmul(a, b),
        [a, b](const Tensor& g) -> std::vector<Tensor> {
            return {raw_matmul(g, raw_transpose(b)), raw_matmul(raw_transpose(a), g)};
        },
        [a, b] { return raw_matmul(a, b); });
}

Tensor add(const Tensor& a, const Tensor& b) {
    Bx kind = bx_kind("add", a, b);
    Tensor out = raw_elementwise("add", a, b, [](double x, double y) { return x + y; });
    return finish(
        "add", {a, b}, std::move(out),
        [a, b, kind](const Tensor& g) -> std::vector<Tensor> {
            return {Tensor(a.shape, *g.data), bx_reduce(*g.data, a, b, kind)};
        },
        [a, b] { return raw_elementwise("add", a, b, [](double x, double y) { return x + y; }); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Bx kind = bx_kind("sub", a, b);
    Tensor out = raw_elementwise("sub", a, b, [](double x, double y) { return x - y; });
    return finish(
        "sub", {a, b}, std::move(out),
        [a, b, kind](const Tensor& g) -> std::vector<Tensor> {
            std::vector<double> neg(*g.data);
            for (double& x : neg) x = -x;
            return {Tensor(a.shape, *g.data), bx_reduce(neg, a, b, kind)};
        },
        [a, b] { return raw_elementwise("sub", a, b, [](double x, double y) { return x - y; }); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Bx kind = bx_kind("elementwise_mul", a, b);
    Tensor out = raw_elementwise("elementwise_mul", a, b, [](double x, double y) { return x * y; });
    return finish(
        "elementwise_mul", {a, b}, std::move(out),
        [a, b, kind](const Tensor& g) -> std::vector<Tensor> {
            int ncols = a.ndim() == 2 ? a.shape[1] : (a.ndim() == 1 ? a.shape[0] : 1);
            std::vector<double> ga(g.data->size()), gb(g.data->size());
            for (size_t i = 0; i < ga.size(); ++i) {
                ga[i] = (*g.data)[i] * bx_read(b, kind, i, ncols);
                gb[i] = (*g.data)[i] * (*a.data)[i];
            }
            return {Tensor(a.shape, std::move(ga)), bx_reduce(gb, a, b, kind)};
        },
        [a, b] {
            return raw_elementwise("elementwise_mul", a, b,
                                   [](double x, double y) { return x * y; });
        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    Bx kind = bx_kind("div", a, b);
    Tensor out = raw_elementwise("div", a, b, [](double x, double y) { return x / y; });
    return finish(
        "div", {a, b}, std::move(out),
        [a, b, kind](const Tensor& g) -> std::vector<Tensor> {
            int ncols = a.ndim() == 2 ? a.shape[1] : (a.ndim() == 1 ? a.shape[0] : 1);
            std::vector<double> ga(g.data->size()), gb(g.data->size());
            for (size_t i = 0; i < ga.size(); ++i) {
                double bv = bx_read(b, kind, i, ncols);
                ga[i] = (*g.data)[i] / bv;
                gb[i] = -(*g.data)[i] * (*a.data)[i] / (bv * bv);
            }
            return {Tensor(a.shape, std::move(ga)), bx_reduce(gb, a, b, kind)};
        },
        [a, b] { return raw_elementwise("div", a, b, [](double x, double y) { return x / y; }); });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    for (const Tensor& p : parts) {
        if (p.ndim() != parts[0].ndim()) dim_error("concat", parts[0], p);
        if (axis == 1 && p.ndim() == 2 && p.shape[0] != parts[0].shape[0])
            dim_error("concat", parts[0], p);
        if (axis == 0 && p.ndim() == 2 && p.shape[1] != parts[0].shape[1])
            dim_error("concat", parts[0], p);
    }
    Tensor out = raw_concat(parts, axis);
    return finish(
        "concat", parts, std::move(out),
        [parts, axis](const Tensor& g) -> std::vector<Tensor> {
            std::vector<Tensor> gs;
            int off = 0;
            for (const Tensor& p : parts) {
                int len = (axis == 1 && p.ndim() == 2) ? p.shape[1] : p.shape[0];
                gs.push_back(raw_slice(g, (p.ndim() == 2) ? axis : 0, off, len));
                off += len;
            }
            return gs;
        },
        [parts, axis] { return raw_concat(parts, axis); });
}

Tensor slice(const Tensor& t, int axis, int start, int len) {
    int extent = (t.ndim() == 2 && axis == 1) ? t.shape[1] : t.shape[0];
    if (start < 0 || len < 0 || start + len > extent) {
        dim_error1("slice", t, "slice range out of bounds");
    }
    Tensor out = raw_slice(t, axis, start, len);
    return finish(
        "slice", {t}, std::move(out),
        [t, axis, start, len](const Tensor& g) -> std::vector<Tensor> {
            std::vector<double> full(t.data->size(), 0.0);
            if (t.ndim() == 1 || axis == 0) {
                int cols = t.ndim() == 2 ? t.shape[1] : 1;
                std::copy(g.data->begin(), g.data->end(),
                          full.begin() + static_cast<size_t>(start) * cols);
            } else {
                int n = t.shape[1];
                for (int i = 0; i < t.shape[0]; ++i)
                    std::copy_n(g.data->data() + static_cast<size_t>(i) * len, len,
                                full.data() + static_cast<size_t>(i) * n + start);
            }
            return {Tensor(t.shape, std::move(full))};
        },
        [t, axis, start, len] { return raw_slice(t, axis, start, len); });
}

Tensor sigmoid(const Tensor& t) {
    Tensor out = raw_map(t, sigmoid_scalar);
    return finish(
        "sigmoid", {t}, out,
        [out](const Tensor& g) -> std::vector<Tensor> {
            std::vector<double> gi(g.data->size());
            for (size_t i = 0; i < gi.size(); ++i) {
                double y = (*out.data)[i];
                gi[i] = (*g.data)[i] * y * (1.0 - y);
            }
            return {Tensor(out.shape, std::move(gi))};
        },
        [t] { return raw_map(t, sigmoid_scalar); });
}

Tensor tanh(const Tensor& t) {
    Tensor out = raw_map(t, [](double x) { return std::tanh(x); });
    return finish(
        "tanh", {t}, out,
        [out](const Tensor& g) -> std::vector<Tensor> {
            std::vector<double> gi(g.data->size());
            for (size_t i = 0; i < gi.size(); ++i) {
                double y = (*out.data)[i];
                gi[i] = (*g.data)[i] * (1.0 - y * y);
            }
            return {Tensor(out.shape, std::move(gi))};
        },
        [t] { return raw_map(t, [](double x) { return std::tanh(x); }); });
}

Tensor softmax(const Tensor& t) {
    if (t.ndim() < 1 || t.ndim() > 2) dim_error1("softmax", t, "expected 1-D or 2-D");
    Tensor out = raw_softmax(t);
    return finish(
        "softmax", {t}, out,
        [out](const Tensor& g) -> std::vector<Tensor> {
            int ncols = out.ndim() == 2 ? out.shape[1] : out.shape[0];
            int nrows = out.ndim() == 2 ? out.shape[0] : 1;
            std::vector<double> gi(g.data->size());
            for (int r = 0; r < nrows; ++r) {
                const double* y = out.data->data() + static_cast<size_t>(r) * ncols;
                const double* go = g.data->data() + static_cast<size_t>(r) * ncols;
                double dot = 0.0;
                for (int j = 0; j < ncols; ++j) dot += go[j] * y[j];
                for (int j = 0; j < ncols; ++j)
                    gi[static_cast<size_t>(r) * ncols + j] = y[j] * (go[j] - dot);
            }
            return {Tensor(out.shape, std::move(gi))};
        },
        [t] { return raw_softmax(t); });
}

Tensor softplus(const Tensor& t) {
    Tensor out = raw_map(t, softplus_scalar);
    return finish(
        "softplus", {t}, std::move(out),
        [t](const Tensor& g) -> std::vector<Tensor> {
            std::vector<double> gi(g.data->size());
            for (size_t i = 0; i < gi.size(); ++i)
                gi[i] = (*g.data)[i] * sigmoid_scalar((*t.data)[i]);
            return {Tensor(t.shape, std::move(gi))};
        },
        [t] { return raw_map(t, softplus_scalar); });
}

Tensor logsumexp(const Tensor& t) {
    if (t.ndim() != 1) dim_error1("logsumexp", t, "expected 1-D");
    Tensor out = raw_logsumexp(t);
    return finish(
        "logsumexp", {t}, out,
        [t, out](const Tensor& g) -> std::vector<Tensor> {
            double lse = (*out.data)[0];
            double go = (*g.data)[0];
            std::vector<double> gi(t.data->size());
            for (size_t i = 0; i < gi.size(); ++i) gi[i] = go * std::exp((*t.data)[i] - lse);
            return {Tensor(t.shape, std::move(gi))};
        },
        [t] { return raw_logsumexp(t); });
}

Tensor sum(const Tensor& t) {
    double s = std::accumulate(t.data->begin(), t.data->end(), 0.0);
    return finish(
        "sum", {t}, Tensor::scalar(s),
        [t](const Tensor& g) -> std::vector<Tensor> {
            return {Tensor(t.shape, std::vector<double>(t.data->size(), (*g.data)[0]))};
        },
        [t] {
            return Tensor::scalar(std::accumulate(t.data->begin(), t.data->end(), 0.0));
        });
}

Tensor mean(const Tensor& t) {
    double n = static_cast<double>(t.data->size());
    double s = std::accumulate(t.data->begin(), t.data->end(), 0.0) / n;
    return finish(
        "mean", {t}, Tensor::scalar(s),
        [t, n](const Tensor& g) -> std::vector<Tensor> {
            return {Tensor(t.shape, std::vector<double>(t.data->size(), (*g.data)[0] / n))};
        },
        [t, n] {
            return Tensor::scalar(std::accumulate(t.data->begin(), t.data->end(), 0.0) / n);
        });
}

Tensor transpose(const Tensor& t) {
    if (t.ndim() != 2) dim_error1("transpose", t, "expected 2-D");
    return finish(
        "transpose", {t}, raw_transpose(t),
        [](const Tensor& g) -> std::vector<Tensor> { return {raw_transpose(g)}; },
        [t] { return raw_transpose(t); });
}

Tensor broadcast(const Tensor& t, int rows) {
    if (t.ndim() != 1) dim_error1("broadcast", t, "expected 1-D");
    if (rows < 1) throw ContractError("broadcast: rows must be positive");
    return finish(
        "broadcast", {t}, raw_broadcast(t, rows),
        [t, rows](const Tensor& g) -> std::vector<Tensor> {
            int n = t.shape[0];
            std::vector<double> gi(static_cast<size_t>(n), 0.0);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < n; ++j) gi[j] += (*g.data)[static_cast<size_t>(i) * n + j];
            return {Tensor(t.shape, std::move(gi))};
        },
        [t, rows] { return raw_broadcast(t, rows); });
}

Tensor max_axis(const Tensor& t, int axis) {
    if (t.ndim() != 2) dim_error1("max_axis", t, "expected 2-D");
    Tensor out = raw_max_axis(t, axis);
    return finish(
        "max_axis", {t}, out,
        [t, axis](const Tensor& g) -> std::vector<Tensor> {
            int m = t.shape[0], n = t.shape[1];
            std::vector<double> gi(t.data->size(), 0.0);
            if (axis == 1) {
                for (int i = 0; i < m; ++i) {
                    const double* row = t.data->data() + static_cast<size_t>(i) * n;
                    int arg = static_cast<int>(std::max_element(row, row + n) - row);
                    gi[static_cast<size_t>(i) * n + arg] = (*g.data)[i];
                }
            } else {
                for (int j = 0; j < n; ++j) {
                    int arg = 0;
                    for (int i = 1; i < m; ++i)
                        if (t(i, j) > t(arg, j)) arg = i;
                    gi[static_cast<size_t>(arg) * n + j] = (*g.data)[j];
                }
            }
            return {Tensor(t.shape, std::move(gi))};
        },
        [t, axis] { return raw_max_axis(t, axis); });
}

Tensor scale(const Tensor& t, double c) {
    std::vector<double> out(t.data->size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = (*t.data)[i] * c;
    return finish(
        "scale", {t}, Tensor(t.shape, std::move(out)),
        [t, c](const Tensor& g) -> std::vector<Tensor> {
            std::vector<double> gi(g.data->size());
            for (size_t i = 0; i < gi.size(); ++i) gi[i] = (*g.data)[i] * c;
            return {Tensor(t.shape, std::move(gi))};
        },
        [t, c] {
            std::vector<double> v(t.data->size());
            for (size_t i = 0; i < v.size(); ++i) v[i] = (*t.data)[i] * c;
            return Tensor(t.shape, std::move(v));
        });
}

Tensor reshape(const Tensor& t, std::vector<int> shape) {
    if (shape_product(shape) != t.data->size()) {
        dim_error1("reshape", t, "element count mismatch");
    }
    Tensor out(shape, std::vector<double>(*t.data));
    return finish(
        "reshape", {t}, std::move(out),
        [t](const Tensor& g) -> std::vector<Tensor> {
            return {Tensor(t.shape, std::vector<double>(*g.data))};
        },
        [t, shape] { return Tensor(shape, std::vector<double>(*t.data)); });
}

}  // namespace ops

Tensor apply_primitive(Prim kind, const std::vector<Tensor>& inputs, const PrimAttrs& attrs) {
    auto need = [&](size_t n, const char* op) {
        if (inputs.size() != n) throw ContractError(std::string(op) + ": wrong input count");
    };
    switch (kind) {
        case Prim::Matmul: need(2, "matmul"); return ops::matmul(inputs[0], inputs[1]);
        case Prim::Add: need(2, "add"); return ops::add(inputs[0], inputs[1]);
        case Prim::Sub: need(2, "sub"); return ops::sub(inputs[0], inputs[1]);
        case Prim::ElementwiseMul:
            need(2, "elementwise_mul");
            return ops::mul(inputs[0], inputs[1]);
        case Prim::Concat: return ops::concat(inputs, attrs.axis);
        case Prim::Slice:
            need(1, "slice");
            return ops::slice(inputs[0], attrs.axis, attrs.start, attrs.len);
        case Prim::Sigmoid: need(1, "sigmoid"); return ops::sigmoid(inputs[0]);
        case Prim::Tanh: need(1, "tanh"); return ops::tanh(inputs[0]);
        case Prim::Softmax: need(1, "softmax"); return ops::softmax(inputs[0]);
        case Prim::Sum: need(1, "sum"); return ops::sum(inputs[0]);
        case Prim::Mean: need(1, "mean"); return ops::mean(inputs[0]);
        case Prim::Transpose: need(1, "transpose"); return ops::transpose(inputs[0]);
        case Prim::Broadcast: need(1, "broadcast"); return ops::broadcast(inputs[0], attrs.rows);
    }
    throw ContractError("apply_primitive: unknown kind");
}

}  // namespace gqa
