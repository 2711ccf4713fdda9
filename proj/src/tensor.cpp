#include "air/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace air {

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
    for (int e : shape)
        if (e <= 0) throw DimensionError("tensor extent must be positive, got shape " + shape_str(shape));
    values.assign(static_cast<size_t>(shape_numel(shape)), fill);
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    for (int e : shape)
        if (e <= 0) throw DimensionError("tensor extent must be positive, got shape " + shape_str(shape));
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

void Tensor::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(values.size(), 0.0); }

bool Tensor::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Tensor xavier_uniform(const Shape& shape, int fan_in, int fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t(shape);
    for (double& v : t.values) v = rng.uniform(-a, a);
    t.requires_grad = true;
    return t;
}

Tensor normal_init(const Shape& shape, double mean, double stddev, Rng& rng) {
    Tensor t(shape);
    for (double& v : t.values) v = rng.normal(mean, stddev);
    t.requires_grad = true;
    return t;
}

// ---------------------------------------------------------------------------
// Graph

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Graph::Node& Graph::node(Ref r) { return nodes_[static_cast<size_t>(r.id)]; }
const Graph::Node& Graph::cnode(Ref r) const { return nodes_[static_cast<size_t>(r.id)]; }

void Graph::check(Ref r) const {
    if (!r.valid() || r.id >= static_cast<int>(nodes_.size()))
        throw ContractError("invalid graph node reference");
}

Graph::Ref Graph::input(const Tensor& t) { return input(t.shape, t.values); }

Graph::Ref Graph::input(Shape shape, std::vector<double> v) {
    if (static_cast<std::int64_t>(v.size()) != shape_numel(shape))
        throw DimensionError("input value count does not match shape " + shape_str(shape));
    Node n;
    n.op = Op::Leaf;
    n.shape = std::move(shape);
    n.values = std::move(v);
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::constant(double v) { return input({1}, {v}); }

Graph::Ref Graph::param(Tensor& p) {
    auto it = bound_ids_.find(&p);
    if (it != bound_ids_.end()) return Ref{it->second};
    Node n;
    n.op = Op::Leaf;
    n.shape = p.shape;
    n.values = p.values;
    n.bound = &p;
    n.needs_grad = p.requires_grad;
    int id = push(std::move(n));
    bound_ids_.emplace(&p, id);
    return Ref{id};
}

namespace {
void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
        throw DimensionError(std::string(op) + ": shapes differ, " + shape_str(a) + " vs " + shape_str(b));
}
}  // namespace

Graph::Ref Graph::add(Ref a, Ref b) {
    check(a); check(b);
    const Node& na = cnode(a);
    const Node& nb = cnode(b);
    require_same_shape(na.shape, nb.shape, "add");
    Node n;
    n.op = Op::Add;
    n.shape = na.shape;
    n.inputs = {a.id, b.id};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.values.resize(na.values.size());
    for (size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] + nb.values[i];
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::sub(Ref a, Ref b) {
    check(a); check(b);
    const Node& na = cnode(a);
    const Node& nb = cnode(b);
    require_same_shape(na.shape, nb.shape, "sub");
    Node n;
    n.op = Op::Sub;
    n.shape = na.shape;
    n.inputs = {a.id, b.id};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.values.resize(na.values.size());
    for (size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] - nb.values[i];
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::mul(Ref a, Ref b) {
    check(a); check(b);
    const Node& na = cnode(a);
    const Node& nb = cnode(b);
    require_same_shape(na.shape, nb.shape, "mul");
    Node n;
    n.op = Op::Mul;
    n.shape = na.shape;
    n.inputs = {a.id, b.id};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.values.resize(na.values.size());
    for (size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] * nb.values[i];
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::scale(Ref a, double c) {
    check(a);
    const Node& na = cnode(a);
    Node n;
    n.op = Op::Scale;
    n.shape = na.shape;
    n.inputs = {a.id};
    n.needs_grad = na.needs_grad;
    n.darg = c;
    n.values.resize(na.values.size());
    for (size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] * c;
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::relu(Ref a) {
    check(a);
    const Node& na = cnode(a);
    Node n;
    n.op = Op::Relu;
    n.shape = na.shape;
    n.inputs = {a.id};
    n.needs_grad = na.needs_grad;
    n.values.resize(na.values.size());
    for (size_t i = 0; i < n.values.size(); ++i) n.values[i] = na.values[i] > 0.0 ? na.values[i] : 0.0;
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::matmul(Ref a, Ref b) {
    check(a); check(b);
    const Node& na = cnode(a);
    const Node& nb = cnode(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
        throw DimensionError("matmul: incompatible shapes " + shape_str(na.shape) + " and " + shape_str(nb.shape));
    const int m = na.shape[0], k = na.shape[1], p = nb.shape[1];
    Node n;
    n.op = Op::MatMul;
    n.shape = {m, p};
    n.inputs = {a.id, b.id};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.values.assign(static_cast<size_t>(m) * p, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < k; ++j) {
            const double av = na.values[static_cast<size_t>(i) * k + j];
            if (av == 0.0) continue;
            const double* brow = &nb.values[static_cast<size_t>(j) * p];
            double* orow = &n.values[static_cast<size_t>(i) * p];
            for (int c = 0; c < p; ++c) orow[c] += av * brow[c];
        }
    }
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::matvec(Ref a, Ref x) {
    check(a); check(x);
    const Node& na = cnode(a);
    const Node& nx = cnode(x);
    if (na.shape.size() != 2 || nx.shape.size() != 1 || na.shape[1] != nx.shape[0])
        throw DimensionError("matvec: incompatible shapes " + shape_str(na.shape) + " and " + shape_str(nx.shape));
    const int m = na.shape[0], k = na.shape[1];
    Node n;
    n.op = Op::MatVec;
    n.shape = {m};
    n.inputs = {a.id, x.id};
    n.needs_grad = na.needs_grad || nx.needs_grad;
    n.values.assign(static_cast<size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = &na.values[static_cast<size_t>(i) * k];
        double acc = 0.0;
        for (int j = 0; j < k; ++j) acc += arow[j] * nx.values[static_cast<size_t>(j)];
        n.values[static_cast<size_t>(i)] = acc;
    }
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::transpose(Ref a) {
    check(a);
    const Node& na = cnode(a);
    if (na.shape.size() != 2)
        throw DimensionError("transpose: expected 2-D tensor, got " + shape_str(na.shape));
    const int r = na.shape[0], c = na.shape[1];
    Node n;
    n.op = Op::Transpose;
    n.shape = {c, r};
    n.inputs = {a.id};
    n.needs_grad = na.needs_grad;
    n.values.resize(na.values.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            n.values[static_cast<size_t>(j) * r + i] = na.values[static_cast<size_t>(i) * c + j];
    return Ref{push(std::move(n))};
}

namespace {
void require_2d_and_vec(const Shape& m, const Shape& v, int want, const char* op) {
    if (m.size() != 2 || v.size() != 1 || v[0] != want)
        throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(m) + " and " + shape_str(v));
}
}  // namespace

Graph::Ref Graph::add_rowwise(Ref m, Ref v) {
    check(m); check(v);
    const Node& nm = cnode(m);
    const Node& nv = cnode(v);
    require_2d_and_vec(nm.shape, nv.shape, nm.shape.size() == 2 ? nm.shape[1] : -1, "add_rowwise");
    const int r = nm.shape[0], c = nm.shape[1];
    Node n;
    n.op = Op::AddRowwise;
    n.shape = nm.shape;
    n.inputs = {m.id, v.id};
    n.needs_grad = nm.needs_grad || nv.needs_grad;
    n.values.resize(nm.values.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            n.values[static_cast<size_t>(i) * c + j] = nm.values[static_cast<size_t>(i) * c + j] + nv.values[static_cast<size_t>(j)];
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::mul_rowwise(Ref m, Ref v) {
    check(m); check(v);
    const Node& nm = cnode(m);
    const Node& nv = cnode(v);
    require_2d_and_vec(nm.shape, nv.shape, nm.shape.size() == 2 ? nm.shape[1] : -1, "mul_rowwise");
    const int r = nm.shape[0], c = nm.shape[1];
    Node n;
    n.op = Op::MulRowwise;
    n.shape = nm.shape;
    n.inputs = {m.id, v.id};
    n.needs_grad = nm.needs_grad || nv.needs_grad;
    n.values.resize(nm.values.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            n.values[static_cast<size_t>(i) * c + j] = nm.values[static_cast<size_t>(i) * c + j] * nv.values[static_cast<size_t>(j)];
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::add_colwise(Ref m, Ref v) {
    check(m); check(v);
    const Node& nm = cnode(m);
    const Node& nv = cnode(v);
    require_2d_and_vec(nm.shape, nv.shape, nm.shape.size() == 2 ? nm.shape[0] : -1, "add_colwise");
    const int r = nm.shape[0], c = nm.shape[1];
    Node n;
    n.op = Op::AddColwise;
    n.shape = nm.shape;
    n.inputs = {m.id, v.id};
    n.needs_grad = nm.needs_grad || nv.needs_grad;
    n.values.resize(nm.values.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            n.values[static_cast<size_t>(i) * c + j] = nm.values[static_cast<size_t>(i) * c + j] + nv.values[static_cast<size_t>(i)];
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::mul_colwise(Ref m, Ref v) {
    check(m); check(v);
    const Node& nm = cnode(m);
    const Node& nv = cnode(v);
    require_2d_and_vec(nm.shape, nv.shape, nm.shape.size() == 2 ? nm.shape[0] : -1, "mul_colwise");
    const int r = nm.shape[0], c = nm.shape[1];
    Node n;
    n.op = Op::MulColwise;
    n.shape = nm.shape;
    n.inputs = {m.id, v.id};
    n.needs_grad = nm.needs_grad || nv.needs_grad;
    n.values.resize(nm.values.size());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            n.values[static_cast<size_t>(i) * c + j] = nm.values[static_cast<size_t>(i) * c + j] * nv.values[static_cast<size_t>(i)];
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::select_row(Ref m, int row) {
    check(m);
    const Node& nm = cnode(m);
    if (nm.shape.size() != 2)
        throw DimensionError("select_row: expected 2-D tensor, got " + shape_str(nm.shape));
    if (row < 0 || row >= nm.shape[0])
        throw DimensionError("select_row: row " + std::to_string(row) + " out of range for " + shape_str(nm.shape));
    const int c = nm.shape[1];
    Node n;
    n.op = Op::SelectRow;
    n.shape = {c};
    n.inputs = {m.id};
    n.needs_grad = nm.needs_grad;
    n.iarg = row;
    n.values.assign(nm.values.begin() + static_cast<std::ptrdiff_t>(row) * c,
                    nm.values.begin() + static_cast<std::ptrdiff_t>(row + 1) * c);
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::select_col(Ref m, int col) {
    check(m);
    const Node& nm = cnode(m);
    if (nm.shape.size() != 2)
        throw DimensionError("select_col: expected 2-D tensor, got " + shape_str(nm.shape));
    if (col < 0 || col >= nm.shape[1])
        throw DimensionError("select_col: col " + std::to_string(col) + " out of range for " + shape_str(nm.shape));
    const int r = nm.shape[0], c = nm.shape[1];
    Node n;
    n.op = Op::SelectCol;
    n.shape = {r};
    n.inputs = {m.id};
    n.needs_grad = nm.needs_grad;
    n.iarg = col;
    n.values.resize(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) n.values[static_cast<size_t>(i)] = nm.values[static_cast<size_t>(i) * c + col];
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::concat_last_axis(const std::vector<Ref>& parts) {
    if (parts.empty()) throw ContractError("concat_last_axis: no inputs");
    for (Ref p : parts) check(p);
    const Shape& s0 = cnode(parts[0]).shape;
    if (s0.size() != 1 && s0.size() != 2)
        throw DimensionError("concat_last_axis: expected 1-D or 2-D tensors, got " + shape_str(s0));
    int last_total = 0;
    for (Ref p : parts) {
        const Shape& s = cnode(p).shape;
        if (s.size() != s0.size() || (s.size() == 2 && s[0] != s0[0]))
            throw DimensionError("concat_last_axis: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
        last_total += s.back();
    }
    Node n;
    n.op = Op::ConcatLast;
    n.shape = s0;
    n.shape.back() = last_total;
    for (Ref p : parts) {
        n.inputs.push_back(p.id);
        n.needs_grad = n.needs_grad || cnode(p).needs_grad;
    }
    const int rows = s0.size() == 2 ? s0[0] : 1;
    n.values.resize(static_cast<size_t>(rows) * last_total);
    for (int i = 0; i < rows; ++i) {
        int off = 0;
        for (Ref p : parts) {
            const Node& np = cnode(p);
            const int w = np.shape.back();
            for (int j = 0; j < w; ++j)
                n.values[static_cast<size_t>(i) * last_total + off + j] = np.values[static_cast<size_t>(i) * w + j];
            off += w;
        }
    }
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::reshape(Ref a, Shape s) {
    check(a);
    const Node& na = cnode(a);
    if (shape_numel(s) != shape_numel(na.shape))
        throw DimensionError("reshape: element count mismatch, " + shape_str(na.shape) + " to " + shape_str(s));
    Node n;
    n.op = Op::Reshape;
    n.shape = std::move(s);
    n.inputs = {a.id};
    n.needs_grad = na.needs_grad;
    n.values = na.values;
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::softmax_last_axis(Ref a) {
    check(a);
    const Node& na = cnode(a);
    if (na.shape.empty() || na.shape.back() < 1)
        throw DimensionError("softmax_last_axis: last extent must be >= 1, got " + shape_str(na.shape));
    const int w = na.shape.back();
    const std::int64_t slices = shape_numel(na.shape) / w;
    Node n;
    n.op = Op::SoftmaxLast;
    n.shape = na.shape;
    n.inputs = {a.id};
    n.needs_grad = na.needs_grad;
    n.values.resize(na.values.size());
    for (std::int64_t s = 0; s < slices; ++s) {
        const double* in = &na.values[static_cast<size_t>(s) * w];
        double* out = &n.values[static_cast<size_t>(s) * w];
        double mx = in[0];
        for (int j = 1; j < w; ++j) mx = std::max(mx, in[j]);
        double tot = 0.0;
        for (int j = 0; j < w; ++j) {
            out[j] = std::exp(in[j] - mx);
            tot += out[j];
        }
        for (int j = 0; j < w; ++j) out[j] /= tot;
    }
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::conv1d_causal(Ref x, Ref kernels, int dilation) {
    check(x); check(kernels);
    if (dilation < 1) throw ConfigError("conv1d_causal: dilation must be >= 1, got " + std::to_string(dilation));
    const Node& nx = cnode(x);
    const Node& nk = cnode(kernels);
    if (nx.shape.size() != 2 || nk.shape.size() != 3 || nk.shape[1] != nx.shape[0])
        throw DimensionError("conv1d_causal: incompatible shapes x=" + shape_str(nx.shape) +
                             " kernels=" + shape_str(nk.shape));
    const int cin = nx.shape[0], t_len = nx.shape[1];
    const int cout = nk.shape[0], k = nk.shape[2];
    Node n;
    n.op = Op::Conv1dCausal;
    n.shape = {cout, t_len};
    n.inputs = {x.id, kernels.id};
    n.needs_grad = nx.needs_grad || nk.needs_grad;
    n.iarg = dilation;
    n.values.assign(static_cast<size_t>(cout) * t_len, 0.0);
    // out[co,t] = sum_{ci,j} k[co,ci,j] * x[ci, t-(K-1-j)*d], zero outside range
    for (int co = 0; co < cout; ++co) {
        double* orow = &n.values[static_cast<size_t>(co) * t_len];
        for (int ci = 0; ci < cin; ++ci) {
            const double* xrow = &nx.values[static_cast<size_t>(ci) * t_len];
            const double* krow = &nk.values[(static_cast<size_t>(co) * cin + ci) * k];
            for (int j = 0; j < k; ++j) {
                const double kv = krow[j];
                if (kv == 0.0) continue;
                const int shift = (k - 1 - j) * dilation;
                for (int t = shift; t < t_len; ++t) orow[t] += kv * xrow[t - shift];
            }
        }
    }
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::sum(Ref a) {
    check(a);
    const Node& na = cnode(a);
    Node n;
    n.op = Op::Sum;
    n.shape = {1};
    n.inputs = {a.id};
    n.needs_grad = na.needs_grad;
    double acc = 0.0;
    for (double v : na.values) acc += v;
    n.values = {acc};
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::mean(Ref a) {
    check(a);
    const Node& na = cnode(a);
    Node n;
    n.op = Op::Mean;
    n.shape = {1};
    n.inputs = {a.id};
    n.needs_grad = na.needs_grad;
    double acc = 0.0;
    for (double v : na.values) acc += v;
    n.values = {acc / static_cast<double>(na.values.size())};
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::mse(Ref pred, Ref target) {
    Ref d = sub(pred, target);
    return mean(mul(d, d));
}

Graph::Ref Graph::detach(Ref a) {
    check(a);
    const Node& na = cnode(a);
    Node n;
    n.op = Op::Detach;
    n.shape = na.shape;
    n.inputs = {a.id};
    n.needs_grad = false;
    n.values = na.values;
    return Ref{push(std::move(n))};
}

Graph::Ref Graph::straight_through(Ref z, Ref q) {
    check(z); check(q);
    const Node& nz = cnode(z);
    const Node& nq = cnode(q);
    require_same_shape(nz.shape, nq.shape, "straight_through");
    Node n;
    n.op = Op::StraightThrough;
    n.shape = nz.shape;
    n.inputs = {z.id, q.id};
    n.needs_grad = nz.needs_grad;
    n.values = nq.values;
    return Ref{push(std::move(n))};
}

const Shape& Graph::shape(Ref r) const { check(r); return cnode(r).shape; }
const std::vector<double>& Graph::val(Ref r) const { check(r); return cnode(r).values; }
const std::vector<double>& Graph::grad(Ref r) const { check(r); return cnode(r).grad; }

double Graph::scalar(Ref r) const {
    check(r);
    const Node& n = cnode(r);
    if (n.values.size() != 1)
        throw ContractError("scalar: node has " + std::to_string(n.values.size()) + " elements");
    return n.values[0];
}

Tensor Graph::tensor(Ref r) const {
    check(r);
    const Node& n = cnode(r);
    return Tensor(n.shape, n.values);
}

void Graph::backward(Ref loss) {
    check(loss);
    Node& ln = node(loss);
    if (ln.values.size() != 1)
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(ln.shape));
    for (auto& n : nodes_)
        if (n.needs_grad) n.grad.assign(n.values.size(), 0.0);
    if (!ln.needs_grad) return;  // nothing trainable reaches the loss
    ln.grad.assign(1, 1.0);
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.needs_grad || n.grad.empty()) continue;
        backward_node(id);
        if (n.op == Op::Leaf && n.bound && n.bound->requires_grad) {
            n.bound->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) n.bound->grad[i] += n.grad[i];
        }
    }
}

void Graph::backward_node(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    auto g = [&](int input_idx) -> std::vector<double>* {
        Node& in = nodes_[static_cast<size_t>(n.inputs[static_cast<size_t>(input_idx)])];
        if (!in.needs_grad) return nullptr;
        if (in.grad.empty()) in.grad.assign(in.values.size(), 0.0);
        return &in.grad;
    };
    auto in_node = [&](int input_idx) -> Node& {
        return nodes_[static_cast<size_t>(n.inputs[static_cast<size_t>(input_idx)])];
    };

    switch (n.op) {
        case Op::Leaf:
        case Op::Detach:
            break;
        case Op::Add: {
            for (int s = 0; s < 2; ++s)
                if (auto* gi = g(s))
                    for (size_t i = 0; i < n.grad.size(); ++i) (*gi)[i] += n.grad[i];
            break;
        }
        case Op::Sub: {
            if (auto* ga = g(0))
                for (size_t i = 0; i < n.grad.size(); ++i) (*ga)[i] += n.grad[i];
            if (auto* gb = g(1))
                for (size_t i = 0; i < n.grad.size(); ++i) (*gb)[i] -= n.grad[i];
            break;
        }
        case Op::Mul: {
            const Node& a = in_node(0);
            const Node& b = in_node(1);
            if (auto* ga = g(0))
                for (size_t i = 0; i < n.grad.size(); ++i) (*ga)[i] += n.grad[i] * b.values[i];
            if (auto* gb = g(1))
                for (size_t i = 0; i < n.grad.size(); ++i) (*gb)[i] += n.grad[i] * a.values[i];
            break;
        }
        case Op::Scale: {
            if (auto* ga = g(0))
                for (size_t i = 0; i < n.grad.size(); ++i) (*ga)[i] += n.grad[i] * n.darg;
            break;
        }
        case Op::Relu: {
            const Node& a = in_node(0);
            if (auto* ga = g(0))
                for (size_t i = 0; i < n.grad.size(); ++i)
                    if (a.values[i] > 0.0) (*ga)[i] += n.grad[i];
            break;
        }
        case Op::MatMul: {
            const Node& a = in_node(0);
            const Node& b = in_node(1);
            const int m = a.shape[0], k = a.shape[1], p = b.shape[1];
            if (auto* ga = g(0)) {  // dA = dY * B^T
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < k; ++j) {
                        double acc = 0.0;
                        const double* gy = &n.grad[static_cast<size_t>(i) * p];
                        const double* brow = &b.values[static_cast<size_t>(j) * p];
                        for (int c = 0; c < p; ++c) acc += gy[c] * brow[c];
                        (*ga)[static_cast<size_t>(i) * k + j] += acc;
                    }
            }
            if (auto* gb = g(1)) {  // dB = A^T * dY
                for (int i = 0; i < m; ++i) {
                    const double* arow = &a.values[static_cast<size_t>(i) * k];
                    const double* gy = &n.grad[static_cast<size_t>(i) * p];
                    for (int j = 0; j < k; ++j) {
                        const double av = arow[j];
                        if (av == 0.0) continue;
                        double* gbrow = &(*gb)[static_cast<size_t>(j) * p];
                        for (int c = 0; c < p; ++c) gbrow[c] += av * gy[c];
                    }
                }
            }
            break;
        }
        case Op::MatVec: {
            const Node& a = in_node(0);
            const Node& x = in_node(1);
            const int m = a.shape[0], k = a.shape[1];
            if (auto* ga = g(0)) {
                for (int i = 0; i < m; ++i) {
                    const double gy = n.grad[static_cast<size_t>(i)];
                    if (gy == 0.0) continue;
                    double* garow = &(*ga)[static_cast<size_t>(i) * k];
                    for (int j = 0; j < k; ++j) garow[j] += gy * x.values[static_cast<size_t>(j)];
                }
            }
            if (auto* gx = g(1)) {
                for (int i = 0; i < m; ++i) {
                    const double gy = n.grad[static_cast<size_t>(i)];
                    if (gy == 0.0) continue;
                    const double* arow = &a.values[static_cast<size_t>(i) * k];
                    for (int j = 0; j < k; ++j) (*gx)[static_cast<size_t>(j)] += gy * arow[j];
                }
            }
            break;
        }
        case Op::Transpose: {
            const Node& a = in_node(0);
            const int r = a.shape[0], c = a.shape[1];
            if (auto* ga = g(0))
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j)
                        (*ga)[static_cast<size_t>(i) * c + j] += n.grad[static_cast<size_t>(j) * r + i];
            break;
        }
        case Op::AddRowwise: {
            const Node& m_in = in_node(0);
            const int r = m_in.shape[0], c = m_in.shape[1];
            if (auto* gm = g(0))
                for (size_t i = 0; i < n.grad.size(); ++i) (*gm)[i] += n.grad[i];
            if (auto* gv = g(1))
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j) (*gv)[static_cast<size_t>(j)] += n.grad[static_cast<size_t>(i) * c + j];
            break;
        }
        case Op::MulRowwise: {
            const Node& m_in = in_node(0);
            const Node& v_in = in_node(1);
            const int r = m_in.shape[0], c = m_in.shape[1];
            if (auto* gm = g(0))
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j)
                        (*gm)[static_cast<size_t>(i) * c + j] += n.grad[static_cast<size_t>(i) * c + j] * v_in.values[static_cast<size_t>(j)];
            if (auto* gv = g(1))
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j)
                        (*gv)[static_cast<size_t>(j)] += n.grad[static_cast<size_t>(i) * c + j] * m_in.values[static_cast<size_t>(i) * c + j];
            break;
        }
        case Op::AddColwise: {
            const Node& m_in = in_node(0);
            const int r = m_in.shape[0], c = m_in.shape[1];
            if (auto* gm = g(0))
                for (size_t i = 0; i < n.grad.size(); ++i) (*gm)[i] += n.grad[i];
            if (auto* gv = g(1))
                for (int i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < c; ++j) acc += n.grad[static_cast<size_t>(i) * c + j];
                    (*gv)[static_cast<size_t>(i)] += acc;
                }
            break;
        }
        case Op::MulColwise: {
            const Node& m_in = in_node(0);
            const Node& v_in = in_node(1);
            const int r = m_in.shape[0], c = m_in.shape[1];
            if (auto* gm = g(0))
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j)
                        (*gm)[static_cast<size_t>(i) * c + j] += n.grad[static_cast<size_t>(i) * c + j] * v_in.values[static_cast<size_t>(i)];
            if (auto* gv = g(1))
                for (int i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < c; ++j)
                        acc += n.grad[static_cast<size_t>(i) * c + j] * m_in.values[static_cast<size_t>(i) * c + j];
                    (*gv)[static_cast<size_t>(i)] += acc;
                }
            break;
        }
        case Op::SelectRow: {
            const Node& m_in = in_node(0);
            const int c = m_in.shape[1];
            if (auto* gm = g(0))
                for (int j = 0; j < c; ++j)
                    (*gm)[static_cast<size_t>(n.iarg) * c + j] += n.grad[static_cast<size_t>(j)];
            break;
        }
        case Op::SelectCol: {
            const Node& m_in = in_node(0);
            const int r = m_in.shape[0], c = m_in.shape[1];
            if (auto* gm = g(0))
                for (int i = 0; i < r; ++i)
                    (*gm)[static_cast<size_t>(i) * c + n.iarg] += n.grad[static_cast<size_t>(i)];
            break;
        }
        case Op::ConcatLast: {
            const int rows = n.shape.size() == 2 ? n.shape[0] : 1;
            const int total = n.shape.back();
            int off = 0;
            for (size_t s = 0; s < n.inputs.size(); ++s) {
                Node& in = nodes_[static_cast<size_t>(n.inputs[s])];
                const int w = in.shape.back();
                if (in.needs_grad) {
                    if (in.grad.empty()) in.grad.assign(in.values.size(), 0.0);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < w; ++j)
                            in.grad[static_cast<size_t>(i) * w + j] += n.grad[static_cast<size_t>(i) * total + off + j];
                }
                off += w;
            }
            break;
        }
        case Op::Reshape: {
            if (auto* ga = g(0))
                for (size_t i = 0; i < n.grad.size(); ++i) (*ga)[i] += n.grad[i];
            break;
        }
        case Op::SoftmaxLast: {
            // dx = (dy - sum(dy*y)) * y per slice
            const int w = n.shape.back();
            const std::int64_t slices = shape_numel(n.shape) / w;
            if (auto* ga = g(0))
                for (std::int64_t s = 0; s < slices; ++s) {
                    const double* y = &n.values[static_cast<size_t>(s) * w];
                    const double* dy = &n.grad[static_cast<size_t>(s) * w];
                    double dot = 0.0;
                    for (int j = 0; j < w; ++j) dot += dy[j] * y[j];
                    for (int j = 0; j < w; ++j) (*ga)[static_cast<size_t>(s) * w + j] += (dy[j] - dot) * y[j];
                }
            break;
        }
        case Op::Conv1dCausal: {
            const Node& x = in_node(0);
            const Node& k_in = in_node(1);
            const int cin = x.shape[0], t_len = x.shape[1];
            const int cout = k_in.shape[0], k = k_in.shape[2];
            const int d = n.iarg;
            if (auto* gx = g(0)) {
                for (int co = 0; co < cout; ++co) {
                    const double* gy = &n.grad[static_cast<size_t>(co) * t_len];
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* krow = &k_in.values[(static_cast<size_t>(co) * cin + ci) * k];
                        double* gxrow = &(*gx)[static_cast<size_t>(ci) * t_len];
                        for (int j = 0; j < k; ++j) {
                            const double kv = krow[j];
                            if (kv == 0.0) continue;
                            const int shift = (k - 1 - j) * d;
                            for (int t = shift; t < t_len; ++t) gxrow[t - shift] += kv * gy[t];
                        }
                    }
                }
            }
            if (auto* gk = g(1)) {
                for (int co = 0; co < cout; ++co) {
                    const double* gy = &n.grad[static_cast<size_t>(co) * t_len];
                    for (int ci = 0; ci < cin; ++ci) {
                        const double* xrow = &x.values[static_cast<size_t>(ci) * t_len];
                        double* gkrow = &(*gk)[(static_cast<size_t>(co) * cin + ci) * k];
                        for (int j = 0; j < k; ++j) {
                            const int shift = (k - 1 - j) * d;
                            double acc = 0.0;
                            for (int t = shift; t < t_len; ++t) acc += gy[t] * xrow[t - shift];
                            gkrow[j] += acc;
                        }
                    }
                }
            }
            break;
        }
        case Op::Sum: {
            if (auto* ga = g(0))
                for (size_t i = 0; i < ga->size(); ++i) (*ga)[i] += n.grad[0];
            break;
        }
        case Op::Mean: {
            if (auto* ga = g(0)) {
                const double inv = 1.0 / static_cast<double>(ga->size());
                for (size_t i = 0; i < ga->size(); ++i) (*ga)[i] += n.grad[0] * inv;
            }
            break;
        }
        case Op::StraightThrough: {
            if (auto* gz = g(0))
                for (size_t i = 0; i < n.grad.size(); ++i) (*gz)[i] += n.grad[i];
            break;
        }
    }
}

}  // namespace air
