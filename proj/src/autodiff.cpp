#include "uqst/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "uqst/linalg.hpp"

namespace uqst::ad {

const NDArray& Value::data() const { return tape->data(id); }
NDArray& Value::grad() const { return tape->grad(id); }

Value Tape::leaf(NDArray data) { return make_node(std::move(data), nullptr); }

Value Tape::make_node(NDArray data, std::function<void(Tape&)> back) {
    Node n;
    n.grad = NDArray::zeros(data.shape());
    n.data = std::move(data);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Value{this, nodes_.size() - 1};
}

void Tape::backward(const Value& loss) {
    if (backward_done_)
        throw std::logic_error("Tape::backward: second backward pass without reset_grads");
    if (loss.tape != this) throw std::logic_error("Tape::backward: value from another tape");
    if (loss.data().size() != 1)
        throw std::invalid_argument("Tape::backward: loss must be scalar, got " +
                                    loss.data().shape_str());
    backward_done_ = true;
    nodes_[loss.id].grad[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back(*this);
    }
}

void Tape::reset_grads() {
    for (auto& n : nodes_) n.grad.fill(0.0);
    backward_done_ = false;
}

namespace {

void require_same_tape(Value a, Value b, const char* op) {
    if (a.tape != b.tape)
        throw std::logic_error(std::string(op) + ": operands on different tapes");
}

void require_same_shape(Value a, Value b, const char* op) {
    require_same_tape(a, b, op);
    if (!a.data().same_shape(b.data()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.data().shape_str() + " vs " + b.data().shape_str());
}

// Elementwise unary op with gradient out_grad * dfun(x).
template <typename F, typename DF>
Value unary(Value a, F fun, DF dfun) {
    NDArray out(a.shape());
    const NDArray& x = a.data();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fun(x[i]);
    std::size_t ai = a.id;
    std::size_t oi = a.tape->size();
    return a.tape->make_node(std::move(out), [ai, oi, dfun](Tape& t) {
        const NDArray& g = t.grad(oi);
        const NDArray& x = t.data(ai);
        NDArray& ga = t.grad(ai);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * dfun(x[i]);
    });
}

}  // namespace

Value add(Value a, Value b) {
    require_same_shape(a, b, "add");
    NDArray out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    std::size_t ai = a.id, bi = b.id, oi = a.tape->size();
    return a.tape->make_node(std::move(out), [ai, bi, oi](Tape& t) {
        const NDArray& g = t.grad(oi);
        NDArray& ga = t.grad(ai);
        NDArray& gb = t.grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

Value sub(Value a, Value b) {
    require_same_shape(a, b, "sub");
    NDArray out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    std::size_t ai = a.id, bi = b.id, oi = a.tape->size();
    return a.tape->make_node(std::move(out), [ai, bi, oi](Tape& t) {
        const NDArray& g = t.grad(oi);
        NDArray& ga = t.grad(ai);
        NDArray& gb = t.grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

Value mul(Value a, Value b) {
    require_same_shape(a, b, "mul_elementwise");
    NDArray out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    std::size_t ai = a.id, bi = b.id, oi = a.tape->size();
    return a.tape->make_node(std::move(out), [ai, bi, oi](Tape& t) {
        const NDArray& g = t.grad(oi);
        const NDArray& xa = t.data(ai);
        const NDArray& xb = t.data(bi);
        NDArray& ga = t.grad(ai);
        NDArray& gb = t.grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * xb[i];
            gb[i] += g[i] * xa[i];
        }
    });
}

Value scale(Value a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Value add_scalar(Value a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Value matmul(Value a, Value b) {
    require_same_tape(a, b, "matmul");
    if (a.data().rank() != 2 || b.data().rank() != 2 || a.data().dim(1) != b.data().dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + a.data().shape_str() +
                                    " and " + b.data().shape_str());
    NDArray out = linalg::matmul(a.data(), b.data());
    std::size_t ai = a.id, bi = b.id, oi = a.tape->size();
    return a.tape->make_node(std::move(out), [ai, bi, oi](Tape& t) {
        const NDArray& g = t.grad(oi);
        const NDArray& xa = t.data(ai);
        const NDArray& xb = t.data(bi);
        NDArray& ga = t.grad(ai);
        NDArray& gb = t.grad(bi);
        const std::size_t n = xa.dim(0), k = xa.dim(1), p = xb.dim(1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                double gij = g.at2(i, j);
                if (gij == 0.0) continue;
                for (std::size_t kk = 0; kk < k; ++kk) {
                    ga.at2(i, kk) += gij * xb.at2(kk, j);
                    gb.at2(kk, j) += gij * xa.at2(i, kk);
                }
            }
    });
}

Value relu(Value a) {
    return unary(a, [](double x) { return x > 0 ? x : 0.0; },
                 [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Value abs_val(Value a) {
    return unary(a, [](double x) { return std::abs(x); },
                 [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Value log_val(Value a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Value sigmoid(Value a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double x) {
                     double s = 1.0 / (1.0 + std::exp(-x));
                     return s * (1.0 - s);
                 });
}

Value softplus(Value a) {
    return unary(a,
                 [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); },
                 [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Value clamp_min(Value a, double floor) {
    if (floor <= 0) throw std::invalid_argument("clamp_min: floor must be positive");
    // Subgradient 0 at exact equality.
    return unary(a, [floor](double x) { return x > floor ? x : floor; },
                 [floor](double x) { return x > floor ? 1.0 : 0.0; });
}

Value sum_all(Value a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) s += a.data()[i];
    std::size_t ai = a.id, oi = a.tape->size();
    return a.tape->make_node(NDArray::scalar(s), [ai, oi](Tape& t) {
        double g = t.grad(oi)[0];
        NDArray& ga = t.grad(ai);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

Value mean_all(Value a) { return scale(sum_all(a), 1.0 / double(a.data().size())); }

Value sum_axis(Value a, std::size_t axis) {
    const auto& sh = a.shape();
    if (axis >= sh.size()) throw std::invalid_argument("sum_axis: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    std::size_t nax = sh[axis];
    std::vector<std::size_t> osh;
    for (std::size_t i = 0; i < sh.size(); ++i)
        if (i != axis) osh.push_back(sh[i]);
    if (osh.empty()) osh.push_back(1);
    NDArray out(osh);
    const NDArray& x = a.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < nax; ++k)
            for (std::size_t i = 0; i < inner; ++i)
                out[o * inner + i] += x[(o * nax + k) * inner + i];
    std::size_t ai = a.id, oi = a.tape->size();
    return a.tape->make_node(std::move(out), [ai, oi, outer, inner, nax](Tape& t) {
        const NDArray& g = t.grad(oi);
        NDArray& ga = t.grad(ai);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t k = 0; k < nax; ++k)
                for (std::size_t i = 0; i < inner; ++i)
                    ga[(o * nax + k) * inner + i] += g[o * inner + i];
    });
}

Value concat(const std::vector<Value>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no operands");
    Tape* tape = parts[0].tape;
    const auto& sh0 = parts[0].shape();
    if (axis >= sh0.size()) throw std::invalid_argument("concat: axis out of range");
    std::size_t total_ax = 0;
    for (const auto& p : parts) {
        require_same_tape(parts[0], p, "concat");
        const auto& sh = p.shape();
        if (sh.size() != sh0.size())
            throw std::invalid_argument("concat: rank mismatch " + p.data().shape_str() +
                                        " vs " + parts[0].data().shape_str());
        for (std::size_t i = 0; i < sh.size(); ++i)
            if (i != axis && sh[i] != sh0[i])
                throw std::invalid_argument("concat: shape mismatch " + p.data().shape_str() +
                                            " vs " + parts[0].data().shape_str());
        total_ax += sh[axis];
    }
    std::vector<std::size_t> osh = sh0;
    osh[axis] = total_ax;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= osh[i];
    for (std::size_t i = axis + 1; i < osh.size(); ++i) inner *= osh[i];
    NDArray out(osh);
    std::size_t off = 0;
    std::vector<std::size_t> ids, widths;
    for (const auto& p : parts) {
        std::size_t w = p.shape()[axis];
        const NDArray& x = p.data();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t k = 0; k < w; ++k)
                for (std::size_t i = 0; i < inner; ++i)
                    out[(o * total_ax + off + k) * inner + i] = x[(o * w + k) * inner + i];
        ids.push_back(p.id);
        widths.push_back(w);
        off += w;
    }
    std::size_t oi = tape->size();
    return tape->make_node(std::move(out),
                           [ids, widths, oi, outer, inner, total_ax](Tape& t) {
        const NDArray& g = t.grad(oi);
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < ids.size(); ++pi) {
            NDArray& ga = t.grad(ids[pi]);
            std::size_t w = widths[pi];
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t k = 0; k < w; ++k)
                    for (std::size_t i = 0; i < inner; ++i)
                        ga[(o * w + k) * inner + i] += g[(o * total_ax + off + k) * inner + i];
            off += w;
        }
    });
}

Value slice(Value a, std::size_t axis, std::size_t start, std::size_t len) {
    const auto& sh = a.shape();
    if (axis >= sh.size() || start + len > sh[axis])
        throw std::invalid_argument("slice: range out of bounds for " + a.data().shape_str());
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= sh[i];
    for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    std::size_t nax = sh[axis];
    std::vector<std::size_t> osh = sh;
    osh[axis] = len;
    NDArray out(osh);
    const NDArray& x = a.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < len; ++k)
            for (std::size_t i = 0; i < inner; ++i)
                out[(o * len + k) * inner + i] = x[(o * nax + start + k) * inner + i];
    std::size_t ai = a.id, oi = a.tape->size();
    return a.tape->make_node(std::move(out), [ai, oi, outer, inner, nax, start, len](Tape& t) {
        const NDArray& g = t.grad(oi);
        NDArray& ga = t.grad(ai);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t k = 0; k < len; ++k)
                for (std::size_t i = 0; i < inner; ++i)
                    ga[(o * nax + start + k) * inner + i] += g[(o * len + k) * inner + i];
    });
}

Value reshape(Value a, std::vector<std::size_t> shape) {
    NDArray out = a.data().reshaped(shape);
    std::size_t ai = a.id, oi = a.tape->size();
    return a.tape->make_node(std::move(out), [ai, oi](Tape& t) {
        const NDArray& g = t.grad(oi);
        NDArray& ga = t.grad(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Value transpose(Value a) {
    if (a.data().rank() != 2) throw std::invalid_argument("transpose: expected rank-2 array");
    NDArray out = linalg::transpose(a.data());
    std::size_t ai = a.id, oi = a.tape->size();
    std::size_t r = a.data().dim(0), c = a.data().dim(1);
    return a.tape->make_node(std::move(out), [ai, oi, r, c](Tape& t) {
        const NDArray& g = t.grad(oi);
        NDArray& ga = t.grad(ai);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga.at2(i, j) += g.at2(j, i);
    });
}

Value scale_columns(Value a, Value s) {
    require_same_tape(a, s, "scale_columns");
    if (a.data().rank() != 2 || s.data().rank() != 1 || s.data().dim(0) != a.data().dim(1))
        throw std::invalid_argument("scale_columns: shapes " + a.data().shape_str() + " and " +
                                    s.data().shape_str());
    std::size_t r = a.data().dim(0), c = a.data().dim(1);
    NDArray out({r, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at2(i, j) = a.data().at2(i, j) * s.data()[j];
    std::size_t ai = a.id, si = s.id, oi = a.tape->size();
    return a.tape->make_node(std::move(out), [ai, si, oi, r, c](Tape& t) {
        const NDArray& g = t.grad(oi);
        const NDArray& xa = t.data(ai);
        const NDArray& xs = t.data(si);
        NDArray& ga = t.grad(ai);
        NDArray& gs = t.grad(si);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                ga.at2(i, j) += g.at2(i, j) * xs[j];
                gs[j] += g.at2(i, j) * xa.at2(i, j);
            }
    });
}

Value make_diag(Value v) {
    if (v.data().rank() != 1) throw std::invalid_argument("make_diag: expected vector");
    std::size_t m = v.data().dim(0);
    NDArray out({m, m});
    for (std::size_t i = 0; i < m; ++i) out.at2(i, i) = v.data()[i];
    std::size_t vi = v.id, oi = v.tape->size();
    return v.tape->make_node(std::move(out), [vi, oi, m](Tape& t) {
        const NDArray& g = t.grad(oi);
        NDArray& gv = t.grad(vi);
        for (std::size_t i = 0; i < m; ++i) gv[i] += g.at2(i, i);
    });
}

Value add_last_axis(Value x, Value b) {
    require_same_tape(x, b, "add_last_axis");
    const auto& sh = x.shape();
    std::size_t c = sh.back();
    if (b.data().rank() != 1 || b.data().dim(0) != c)
        throw std::invalid_argument("add_last_axis: bias " + b.data().shape_str() +
                                    " does not match last axis of " + x.data().shape_str());
    NDArray out(sh);
    std::size_t rows = x.data().size() / c;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.data()[i * c + j] + b.data()[j];
    std::size_t xi = x.id, bi = b.id, oi = x.tape->size();
    return x.tape->make_node(std::move(out), [xi, bi, oi, rows, c](Tape& t) {
        const NDArray& g = t.grad(oi);
        NDArray& gx = t.grad(xi);
        NDArray& gb = t.grad(bi);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                gx[i * c + j] += g[i * c + j];
                gb[j] += g[i * c + j];
            }
    });
}

Value add_channel_bias(Value x, Value b) {
    require_same_tape(x, b, "add_channel_bias");
    const NDArray& xd = x.data();
    if (xd.rank() != 3 || b.data().rank() != 1 || b.data().dim(0) != xd.dim(1))
        throw std::invalid_argument("add_channel_bias: shapes " + xd.shape_str() + " and " +
                                    b.data().shape_str());
    const std::size_t bb = xd.dim(0), c = xd.dim(1), l = xd.dim(2);
    NDArray out(xd.shape());
    for (std::size_t i = 0; i < bb; ++i)
        for (std::size_t j = 0; j < c; ++j)
            for (std::size_t k = 0; k < l; ++k)
                out.at3(i, j, k) = xd.at3(i, j, k) + b.data()[j];
    std::size_t xi = x.id, bi = b.id, oi = x.tape->size();
    return x.tape->make_node(std::move(out), [xi, bi, oi, bb, c, l](Tape& t) {
        const NDArray& g = t.grad(oi);
        NDArray& gx = t.grad(xi);
        NDArray& gb = t.grad(bi);
        for (std::size_t i = 0; i < bb; ++i)
            for (std::size_t j = 0; j < c; ++j)
                for (std::size_t k = 0; k < l; ++k) {
                    gx.at3(i, j, k) += g.at3(i, j, k);
                    gb[j] += g.at3(i, j, k);
                }
    });
}

Value sym_from_upper(Value z, std::size_t m) {
    std::size_t expect = m * (m + 1) / 2;
    if (z.data().rank() != 1 || z.data().dim(0) != expect)
        throw std::invalid_argument("sym_from_upper: need length " + std::to_string(expect) +
                                    " for M=" + std::to_string(m) + ", got " +
                                    z.data().shape_str());
    NDArray out({m, m});
    std::size_t idx = 0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j) {
            out.at2(i, j) = z.data()[idx];
            out.at2(j, i) = z.data()[idx];
            ++idx;
        }
    std::size_t zi = z.id, oi = z.tape->size();
    return z.tape->make_node(std::move(out), [zi, oi, m](Tape& t) {
        const NDArray& g = t.grad(oi);
        NDArray& gz = t.grad(zi);
        std::size_t idx = 0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i; j < m; ++j) {
                gz[idx] += (i == j) ? g.at2(i, i) : g.at2(i, j) + g.at2(j, i);
                ++idx;
            }
    });
}

std::pair<Value, Value> eig_sym(Value s, double eps_eig) {
    linalg::EigResult eig = linalg::eig_sym(s.data());
    std::size_t m = s.data().dim(0);
    Tape* t = s.tape;
    std::size_t si = s.id;
    Value vals = t->make_node(NDArray::vector(eig.values), nullptr);
    std::size_t vals_id = vals.id;
    std::size_t vecs_id = t->size();
    // The joint adjoint runs on the eigenvector node: in reverse order it is
    // reached after every consumer of either output.
    NDArray vecs = eig.vectors;
    std::vector<double> lam = eig.values;
    Value vecs_v = t->make_node(std::move(vecs),
                                [si, vals_id, vecs_id, m, lam, eps_eig](Tape& t) {
        const NDArray& v = t.data(vecs_id);
        const NDArray& gl = t.grad(vals_id);
        const NDArray& gv = t.grad(vecs_id);
        // M = diag(gl) + F o (V' gV), F_ij = (l_j - l_i)/((l_j - l_i)^2 + eps^2)
        NDArray vt_gv = linalg::matmul(linalg::transpose(v), gv);
        NDArray mid({m, m});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (i == j) {
                    mid.at2(i, i) = gl[i];
                } else {
                    double d = lam[j] - lam[i];
                    mid.at2(i, j) = vt_gv.at2(i, j) * d / (d * d + eps_eig * eps_eig);
                }
            }
        }
        NDArray gs = linalg::matmul(linalg::matmul(v, mid), linalg::transpose(v));
        NDArray& acc = t.grad(si);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                acc.at2(i, j) += 0.5 * (gs.at2(i, j) + gs.at2(j, i));
    });
    return {vals, vecs_v};
}

Value dilated_causal_conv(Value x, Value w, std::size_t dilation, std::size_t groups) {
    require_same_tape(x, w, "dilated_causal_conv");
    const NDArray& xd = x.data();
    const NDArray& wd = w.data();
    if (xd.rank() != 3 || wd.rank() != 3)
        throw std::invalid_argument("dilated_causal_conv: need (B,C_in,L) and (C_out,C_in/g,K), got " +
                                    xd.shape_str() + " and " + wd.shape_str());
    const std::size_t b = xd.dim(0), cin = xd.dim(1), len = xd.dim(2);
    const std::size_t cout = wd.dim(0), cing = wd.dim(1), k = wd.dim(2);
    if (groups == 0 || cin % groups != 0 || cout % groups != 0 || cing != cin / groups)
        throw std::invalid_argument("dilated_causal_conv: group mismatch for " + xd.shape_str() +
                                    " / " + wd.shape_str());
    const std::size_t d = dilation;
    NDArray out({b, cout, len});
    const std::size_t cout_per_g = cout / groups;
    for (std::size_t bb = 0; bb < b; ++bb)
        for (std::size_t co = 0; co < cout; ++co) {
            std::size_t g = co / cout_per_g;
            for (std::size_t s = 0; s < len; ++s) {
                double acc = 0.0;
                for (std::size_t cl = 0; cl < cing; ++cl) {
                    std::size_t ci = g * cing + cl;
                    for (std::size_t i = 0; i < k; ++i) {
                        std::size_t lag = d * i;
                        if (lag > s) break;
                        acc += wd.at3(co, cl, i) * xd.at3(bb, ci, s - lag);
                    }
                }
                out.at3(bb, co, s) = acc;
            }
        }
    std::size_t xi = x.id, wi = w.id, oi = x.tape->size();
    return x.tape->make_node(std::move(out),
                             [xi, wi, oi, b, cin, len, cout, cing, k, d, cout_per_g](Tape& t) {
        const NDArray& g = t.grad(oi);
        const NDArray& xd = t.data(xi);
        const NDArray& wd = t.data(wi);
        NDArray& gx = t.grad(xi);
        NDArray& gw = t.grad(wi);
        for (std::size_t bb = 0; bb < b; ++bb)
            for (std::size_t co = 0; co < cout; ++co) {
                std::size_t grp = co / cout_per_g;
                for (std::size_t s = 0; s < len; ++s) {
                    double go = g.at3(bb, co, s);
                    if (go == 0.0) continue;
                    for (std::size_t cl = 0; cl < cing; ++cl) {
                        std::size_t ci = grp * cing + cl;
                        for (std::size_t i = 0; i < k; ++i) {
                            std::size_t lag = d * i;
                            if (lag > s) break;
                            gx.at3(bb, ci, s - lag) += go * wd.at3(co, cl, i);
                            gw.at3(co, cl, i) += go * xd.at3(bb, ci, s - lag);
                        }
                    }
                }
            }
    });
}

Value weight_norm(Value v, Value g) {
    require_same_tape(v, g, "weight_norm");
    const NDArray& vd = v.data();
    const NDArray& gd = g.data();
    std::size_t cout = vd.dim(0);
    if (gd.rank() != 1 || gd.dim(0) != cout)
        throw std::invalid_argument("weight_norm: scale " + gd.shape_str() +
                                    " does not match filters " + vd.shape_str());
    std::size_t per = vd.size() / cout;
    NDArray out(vd.shape());
    std::vector<double> norms(cout);
    for (std::size_t c = 0; c < cout; ++c) {
        double nn = 0.0;
        for (std::size_t i = 0; i < per; ++i) nn += vd[c * per + i] * vd[c * per + i];
        norms[c] = std::sqrt(nn);
        if (norms[c] == 0.0) throw std::runtime_error("weight_norm: zero filter norm");
        for (std::size_t i = 0; i < per; ++i) out[c * per + i] = gd[c] * vd[c * per + i] / norms[c];
    }
    std::size_t vi = v.id, gi = g.id, oi = v.tape->size();
    return v.tape->make_node(std::move(out), [vi, gi, oi, cout, per](Tape& t) {
        const NDArray& go = t.grad(oi);
        const NDArray& vd = t.data(vi);
        const NDArray& gd = t.data(gi);
        NDArray& gv = t.grad(vi);
        NDArray& gg = t.grad(gi);
        for (std::size_t c = 0; c < cout; ++c) {
            double nn = 0.0;
            for (std::size_t i = 0; i < per; ++i) nn += vd[c * per + i] * vd[c * per + i];
            double norm = std::sqrt(nn);
            double dot_gv = 0.0, dot_gvhat = 0.0;
            for (std::size_t i = 0; i < per; ++i) {
                dot_gv += go[c * per + i] * vd[c * per + i];
                dot_gvhat += go[c * per + i] * vd[c * per + i] / norm;
            }
            gg[c] += dot_gv / norm;
            for (std::size_t i = 0; i < per; ++i) {
                double vhat = vd[c * per + i] / norm;
                gv[c * per + i] += gd[c] / norm * (go[c * per + i] - dot_gvhat * vhat);
            }
        }
    });
}

Value layer_norm_rows(Value x, Value gamma, Value beta, double eps) {
    require_same_tape(x, gamma, "layer_norm_rows");
    require_same_tape(x, beta, "layer_norm_rows");
    const NDArray& xd = x.data();
    if (xd.rank() != 2) throw std::invalid_argument("layer_norm_rows: expected rank-2 input");
    std::size_t r = xd.dim(0), c = xd.dim(1);
    if (gamma.data().dim(0) != c || beta.data().dim(0) != c)
        throw std::invalid_argument("layer_norm_rows: gain/shift size mismatch");
    NDArray out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += xd.at2(i, j);
        mean /= double(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double dx = xd.at2(i, j) - mean;
            var += dx * dx;
        }
        var /= double(c);
        double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j)
            out.at2(i, j) = (xd.at2(i, j) - mean) * inv * gamma.data()[j] + beta.data()[j];
    }
    std::size_t xi = x.id, gi = gamma.id, bi = beta.id, oi = x.tape->size();
    return x.tape->make_node(std::move(out), [xi, gi, bi, oi, r, c, eps](Tape& t) {
        const NDArray& g = t.grad(oi);
        const NDArray& xd = t.data(xi);
        const NDArray& gam = t.data(gi);
        NDArray& gx = t.grad(xi);
        NDArray& gg = t.grad(gi);
        NDArray& gb = t.grad(bi);
        for (std::size_t i = 0; i < r; ++i) {
            double mean = 0.0;
            for (std::size_t j = 0; j < c; ++j) mean += xd.at2(i, j);
            mean /= double(c);
            double var = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                double dx = xd.at2(i, j) - mean;
                var += dx * dx;
            }
            var /= double(c);
            double inv = 1.0 / std::sqrt(var + eps);
            double m1 = 0.0, m2 = 0.0;
            std::vector<double> xhat(c), dxhat(c);
            for (std::size_t j = 0; j < c; ++j) {
                xhat[j] = (xd.at2(i, j) - mean) * inv;
                dxhat[j] = g.at2(i, j) * gam[j];
                gg[j] += g.at2(i, j) * xhat[j];
                gb[j] += g.at2(i, j);
                m1 += dxhat[j];
                m2 += dxhat[j] * xhat[j];
            }
            m1 /= double(c);
            m2 /= double(c);
            for (std::size_t j = 0; j < c; ++j)
                gx.at2(i, j) += inv * (dxhat[j] - m1 - xhat[j] * m2);
        }
    });
}

Value gaussian_nll(const NDArray& x, Value mu, Value sigma) {
    require_same_tape(mu, sigma, "gaussian_nll");
    const std::size_t m = mu.data().dim(0);
    if (x.size() != m || sigma.data().rank() != 2 || sigma.data().dim(0) != m ||
        sigma.data().dim(1) != m)
        throw std::invalid_argument("gaussian_nll: shapes x" + x.shape_str() + " mu" +
                                    mu.data().shape_str() + " sigma" +
                                    sigma.data().shape_str());
    NDArray l = linalg::cholesky(sigma.data());
    std::vector<double> resid(m);
    for (std::size_t i = 0; i < m; ++i) resid[i] = x[i] - mu.data()[i];
    std::vector<double> si_r = linalg::cholesky_solve(l, resid);
    double quad = 0.0;
    for (std::size_t i = 0; i < m; ++i) quad += resid[i] * si_r[i];
    double loss = 0.5 * linalg::log_det_from_cholesky(l) + 0.5 * quad;
    if (!std::isfinite(loss)) throw std::runtime_error("gaussian_nll: non-finite loss");

    std::size_t mi = mu.id, si = sigma.id, oi = mu.tape->size();
    return mu.tape->make_node(NDArray::scalar(loss), [mi, si, oi, m, l, si_r](Tape& t) {
        double g = t.grad(oi)[0];
        NDArray& gmu = t.grad(mi);
        NDArray& gsg = t.grad(si);
        // Sigma^{-1} from the stored factor.
        NDArray sinv({m, m});
        for (std::size_t j = 0; j < m; ++j) {
            std::vector<double> e(m, 0.0);
            e[j] = 1.0;
            auto col = linalg::cholesky_solve(l, e);
            for (std::size_t i = 0; i < m; ++i) sinv.at2(i, j) = col[i];
        }
        for (std::size_t i = 0; i < m; ++i) gmu[i] += g * (-si_r[i]);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                gsg.at2(i, j) += g * 0.5 * (sinv.at2(i, j) - si_r[i] * si_r[j]);
    });
}

Value negbinom_count_terms(const NDArray& x, Value r, Value p) {
    require_same_tape(r, p, "negbinom_count_terms");
    const std::size_t m = r.data().dim(0);
    if (x.size() != m || p.data().dim(0) != m)
        throw std::invalid_argument("negbinom_count_terms: shape mismatch");
    for (std::size_t i = 0; i < m; ++i) {
        if (x[i] < 0) throw std::invalid_argument("negbinom_count_terms: negative count");
        if (r.data()[i] <= 0) throw std::invalid_argument("negbinom_count_terms: r must be > 0");
        if (p.data()[i] <= 0 || p.data()[i] >= 1)
            throw std::invalid_argument("negbinom_count_terms: p must be in (0,1)");
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double xv = x[i], rv = r.data()[i], pv = p.data()[i];
        loss += -(std::lgamma(xv + rv) - std::lgamma(xv + 1.0) - std::lgamma(rv));
        loss += (rv / pv) * std::log1p(pv * xv / rv);
    }
    std::vector<double> xs(x.vec());
    std::size_t ri = r.id, pi = p.id, oi = r.tape->size();
    return r.tape->make_node(NDArray::scalar(loss), [ri, pi, oi, m, xs](Tape& t) {
        double g = t.grad(oi)[0];
        const NDArray& rd = t.data(ri);
        const NDArray& pd = t.data(pi);
        NDArray& gr = t.grad(ri);
        NDArray& gp = t.grad(pi);
        for (std::size_t i = 0; i < m; ++i) {
            double xv = xs[i], rv = rd[i], pv = pd[i];
            double u = pv * xv / rv;
            double dr = -(linalg::digamma(xv + rv) - linalg::digamma(rv)) +
                        (1.0 / pv) * std::log1p(u) - (u / pv) / (1.0 + u);
            double dp = -(rv / (pv * pv)) * std::log1p(u) + (xv / pv) / (1.0 + u);
            gr[i] += g * dr;
            gp[i] += g * dp;
        }
    });
}

GradCheckResult grad_check(const ScalarFn& f, const std::vector<NDArray>& inputs, double h) {
    GradCheckResult res;

    Tape tape;
    std::vector<Value> vals;
    vals.reserve(inputs.size());
    for (const auto& in : inputs) vals.push_back(tape.leaf(in));
    Value loss = f(tape, vals);
    tape.backward(loss);
    std::vector<NDArray> analytic;
    for (const auto& v : vals) analytic.push_back(v.grad());

    auto eval = [&](const std::vector<NDArray>& pts) {
        Tape t2;
        std::vector<Value> v2;
        for (const auto& in : pts) v2.push_back(t2.leaf(in));
        return f(t2, v2).data()[0];
    };

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t c = 0; c < inputs[k].size(); ++c) {
            std::vector<NDArray> plus = inputs, minus = inputs;
            plus[k][c] += h;
            minus[k][c] -= h;
            double numeric = (eval(plus) - eval(minus)) / (2.0 * h);
            double a = analytic[k][c];
            double err;
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                err = std::numeric_limits<double>::infinity();
                res.nan_seen = true;
                res.worst.push_back({k, c, a, numeric, err});
            } else {
                err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            }
            if (err > res.max_rel_err) {
                res.max_rel_err = err;
                if (res.worst.empty() || std::isfinite(err))
                    res.worst = {{k, c, a, numeric, err}};
            }
        }
    }
    return res;
}

}  // namespace uqst::ad
