#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pave {

class TensorNode;
using Var = std::shared_ptr<TensorNode>;

// Dense row-major f64 tensor. Nodes form a DAG through `parents`; reverse-mode
// gradients are pulled through `backprop` closures in reverse topological order.
class TensorNode : public std::enable_shared_from_this<TensorNode> {
public:
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized like data while a backward pass is live
    bool requires_grad = false;
    std::string name;

    std::vector<Var> parents;
    std::function<void()> backprop;

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
    std::int64_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

std::string shape_str(const std::vector<std::int64_t>& s);

// Leaf constructors.
Var make_var(std::vector<std::int64_t> shape, std::vector<double> data, bool requires_grad = false);
Var zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
Var full(std::vector<std::int64_t> shape, double value, bool requires_grad = false);
Var scalar(double value);
Var clone_leaf(const Var& v);  // detached copy, same data / requires_grad

// Elementwise (same shape unless noted).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);
Var abs_(const Var& a);
Var powc(const Var& a, double p);  // elementwise a^p, a > 0 or integer-safe p

// Linear algebra (2-D).
Var matmul(const Var& a, const Var& b);     // [m,k]x[k,n]
Var matmul_nt(const Var& a, const Var& b);  // a * b^T, [m,k]x[n,k] -> [m,n]
Var add_bias(const Var& x, const Var& b);   // x: [m,n], b: [n]

// Shape ops.
Var reshape(const Var& a, std::vector<std::int64_t> new_shape);
Var slice_rows(const Var& a, std::int64_t start, std::int64_t count);
Var slice_cols(const Var& a, std::int64_t start, std::int64_t count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(const Var& a, const std::vector<std::int64_t>& indices);
Var repeat_rows(const Var& a, std::int64_t times);  // tile whole matrix [m,n]->[m*times,n]

// Reductions / normalizations.
Var sum(const Var& a);   // -> [1]
Var mean(const Var& a);  // -> [1]
Var softmax(const Var& a, std::size_t axis);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// Reverse-mode pass. `loss` must be scalar (numel == 1). Returns the tape in
// topological order; gradients of all reachable nodes are left in `grad`.
struct Tape {
    std::vector<TensorNode*> order;
};
Tape backward(const Var& loss);

// Max relative error between analytic d(fn)/dx and central finite differences.
double finite_difference_check(const std::function<Var(const Var&)>& fn, const Var& x, double eps = 1e-5);

// Deterministic RNG (splitmix64 core) so seeded artifacts reproduce across
// platforms independent of libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next_u64();
    double uniform();                      // [0,1)
    double uniform(double lo, double hi);  // [lo,hi)
    double normal();                       // standard normal (Box-Muller)
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace pave
