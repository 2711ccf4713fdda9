#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "air/errors.hpp"

namespace air {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense 64-bit float array with an optional gradient buffer. Used both for
// trainable parameters (requires_grad) and for plain numeric payloads.
struct Tensor {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> v);
    static Tensor scalar(double v);

    std::int64_t numel() const { return shape_numel(shape); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(int i) { return values[static_cast<size_t>(i)]; }
    double at(int i) const { return values[static_cast<size_t>(i)]; }
    double& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

    void ensure_grad();  // allocate zeros if absent
    void zero_grad();
    bool all_finite() const;
};

// Seeded RNG wrapper so every stochastic choice in the project is
// reproducible from an explicit 64-bit seed.
struct Rng {
    std::mt19937_64 eng;
    explicit Rng(std::uint64_t seed) : eng(seed) {}
    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(eng);
    }
    double normal(double mean, double stddev) {
        std::normal_distribution<double> d(mean, stddev);
        return d(eng);
    }
    std::uint64_t next() { return eng(); }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        std::uniform_int_distribution<int> d(lo, hi);
        return d(eng);
    }
};

Tensor xavier_uniform(const Shape& shape, int fan_in, int fan_out, Rng& rng);
Tensor normal_init(const Shape& shape, double mean, double stddev, Rng& rng);

// Reverse-mode computation record. Operations execute eagerly and append a
// node; backward() walks the record once in reverse. Nodes created from a
// bound parameter accumulate into that parameter's grad buffer.
class Graph {
public:
    struct Ref {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    // Leaves
    Ref input(const Tensor& t);                       // constant, no grad
    Ref input(Shape shape, std::vector<double> v);    // constant, no grad
    Ref constant(double v);                           // scalar constant
    Ref param(Tensor& p);                             // bound leaf; dedup per graph

    // Elementwise (shapes must match exactly; no broadcasting)
    Ref add(Ref a, Ref b);
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);
    Ref scale(Ref a, double c);
    Ref relu(Ref a);

    // Linear algebra on 1-D/2-D tensors
    Ref matmul(Ref a, Ref b);     // [m,k]x[k,n] -> [m,n]
    Ref matvec(Ref a, Ref x);     // [m,k]x[k]   -> [m]
    Ref transpose(Ref a);         // [m,n] -> [n,m]

    // Row/column broadcasts over a 2-D tensor [R,C]
    Ref add_rowwise(Ref m, Ref v);  // v:[C], added to every row
    Ref mul_rowwise(Ref m, Ref v);  // v:[C], scales every row elementwise
    Ref add_colwise(Ref m, Ref v);  // v:[R], v[i] added across row i
    Ref mul_colwise(Ref m, Ref v);  // v:[R], row i scaled by v[i]

    Ref select_row(Ref m, int row);  // [R,C] -> [C]
    Ref select_col(Ref m, int col);  // [R,C] -> [R]
    Ref concat_last_axis(const std::vector<Ref>& parts);
    Ref reshape(Ref a, Shape s);

    Ref softmax_last_axis(Ref a);

    // Causal dilated 1-D convolution. x:[C_in,T], kernels:[C_out,C_in,K].
    // Left-padded with (K-1)*dilation zeros so the output keeps length T and
    // out[.,t] depends only on x[.,t'] with t' <= t.
    Ref conv1d_causal(Ref x, Ref kernels, int dilation);

    Ref sum(Ref a);   // -> scalar [1]
    Ref mean(Ref a);  // -> scalar [1]
    Ref mse(Ref pred, Ref target);  // mean squared difference -> scalar [1]

    Ref detach(Ref a);                    // forward copy, no gradient
    Ref straight_through(Ref z, Ref q);   // forward = q values, d/dz = upstream

    // Runs the reverse sweep from a scalar loss. Every bound parameter
    // reachable from the loss receives accumulated gradients.
    void backward(Ref loss);

    const Shape& shape(Ref r) const;
    const std::vector<double>& val(Ref r) const;
    const std::vector<double>& grad(Ref r) const;  // valid after backward()
    double scalar(Ref r) const;
    Tensor tensor(Ref r) const;
    size_t size() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        Leaf, Add, Sub, Mul, Scale, Relu,
        MatMul, MatVec, Transpose,
        AddRowwise, MulRowwise, AddColwise, MulColwise,
        SelectRow, SelectCol, ConcatLast, Reshape,
        SoftmaxLast, Conv1dCausal,
        Sum, Mean, Detach, StraightThrough,
    };

    struct Node {
        Op op = Op::Leaf;
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        std::vector<int> inputs;
        Tensor* bound = nullptr;
        bool needs_grad = false;
        int iarg = 0;      // dilation / row / col index
        double darg = 0.0; // scale factor
    };

    int push(Node n);
    Node& node(Ref r);
    const Node& cnode(Ref r) const;
    void check(Ref r) const;
    void backward_node(int id);

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, int> bound_ids_;
};

}  // namespace air
