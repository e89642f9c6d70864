#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "uqst/ndarray.hpp"

namespace uqst::ad {

class Tape;

// Handle to a node on a Tape.
struct Value {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const NDArray& data() const;
    NDArray& grad() const;
    const std::vector<std::size_t>& shape() const { return data().shape(); }
};

// Append-only record of operations; creation order is topological order.
class Tape {
public:
    Value leaf(NDArray data);
    Value make_node(NDArray data, std::function<void(Tape&)> back);

    NDArray& data(std::size_t id) { return nodes_[id].data; }
    const NDArray& data(std::size_t id) const { return nodes_[id].data; }
    NDArray& grad(std::size_t id) { return nodes_[id].grad; }

    // Reverse pass from a scalar loss. Visits nodes in reverse creation
    // order exactly once. A second call without reset_grads() throws.
    void backward(const Value& loss);
    void reset_grads();

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        NDArray data;
        NDArray grad;
        std::function<void(Tape&)> back;
    };
    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);  // elementwise
Value scale(Value a, double c);
Value add_scalar(Value a, double c);
Value matmul(Value a, Value b);
Value relu(Value a);
Value abs_val(Value a);
Value log_val(Value a);
Value sigmoid(Value a);
Value softplus(Value a);
Value clamp_min(Value a, double floor);
Value sum_all(Value a);
Value mean_all(Value a);
Value sum_axis(Value a, std::size_t axis);
Value concat(const std::vector<Value>& parts, std::size_t axis);
Value slice(Value a, std::size_t axis, std::size_t start, std::size_t len);
Value reshape(Value a, std::vector<std::size_t> shape);
Value transpose(Value a);
// out(:,j) = a(:,j) * s[j]
Value scale_columns(Value a, Value s);
Value make_diag(Value v);
// Broadcast-add b over the last axis of x (bias add).
Value add_last_axis(Value x, Value b);
// Broadcast-add b over the channel axis of a (B, C, L) tensor.
Value add_channel_bias(Value x, Value b);

// Symmetric matrix from the M(M+1)/2 upper-triangle half-vector (row-major).
Value sym_from_upper(Value z, std::size_t m);

// Eigendecomposition of a symmetric matrix: (eigenvalues ascending,
// orthonormal eigenvector columns). Backward regularizes the
// pairwise-difference denominators with eps_eig.
std::pair<Value, Value> eig_sym(Value s, double eps_eig = 1e-8);

// Causal dilated 1-D convolution.
//   x: (B, C_in, L), w: (C_out, C_in/groups, K) -> (B, C_out, L)
// Left zero padding of (K-1)*d keeps the length; output channel group g
// reads only input channel group g when groups > 1.
Value dilated_causal_conv(Value x, Value w, std::size_t dilation, std::size_t groups = 1);

// Effective filter w = g * v/||v|| per output channel (v: (C_out,...), g: (C_out)).
Value weight_norm(Value v, Value g);

// Per-row layer normalization with learned gain/shift: x (R,C), gamma/beta (C).
Value layer_norm_rows(Value x, Value gamma, Value beta, double eps = 1e-5);

// 0.5*log|Sigma| + 0.5*(x-mu)' Sigma^{-1} (x-mu), via Cholesky of Sigma.
Value gaussian_nll(const NDArray& x, Value mu, Value sigma);

// Count-model terms of the negative-binomial loss:
//   sum_i [ -log(Gamma(x_i+r_i)/(x_i! Gamma(r_i))) + (r_i/p_i) log(1 + (p_i/r_i) x_i) ]
Value negbinom_count_terms(const NDArray& x, Value r, Value p);

struct GradCheckIssue {
    std::size_t input = 0, coord = 0;
    double analytic = 0, numeric = 0, rel_err = 0;
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::vector<GradCheckIssue> worst;  // coordinates with NaN or the max error
    bool nan_seen = false;
};

using ScalarFn = std::function<Value(Tape&, std::vector<Value>&)>;

// Central-difference check of the analytic gradient of a scalar function.
// Error per coordinate: |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check(const ScalarFn& f, const std::vector<NDArray>& inputs,
                           double h = 1e-5);

}  // namespace uqst::ad
