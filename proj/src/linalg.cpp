#include "uqst/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace uqst::linalg {

bool is_symmetric(const NDArray& s, double tol) {
    if (s.rank() != 2 || s.dim(0) != s.dim(1)) return false;
    std::size_t m = s.dim(0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            if (std::abs(s.at2(i, j) - s.at2(j, i)) > tol) return false;
    return true;
}

EigResult eig_sym(const NDArray& s) {
    if (s.rank() != 2 || s.dim(0) != s.dim(1))
        throw std::invalid_argument("eig_sym: expected square matrix, got " + s.shape_str());
    const std::size_t m = s.dim(0);
    if (m > 16) throw std::invalid_argument("eig_sym: dimension > 16 unsupported");
    if (!is_symmetric(s, 1e-10))
        throw std::invalid_argument("eig_sym: matrix not symmetric within 1e-10");

    NDArray a = s;
    NDArray v = NDArray::identity(m);

    const int max_sweeps = 100;
    const double tol = 1e-12;
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j) off += a.at2(i, j) * a.at2(i, j);
        if (std::sqrt(2.0 * off) <= tol) break;

        for (std::size_t p = 0; p + 1 < m; ++p) {
            for (std::size_t q = p + 1; q < m; ++q) {
                double apq = a.at2(p, q);
                if (apq == 0.0) continue;
                double app = a.at2(p, p), aqq = a.at2(q, q);
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double sn = t * c;
                for (std::size_t k = 0; k < m; ++k) {
                    double akp = a.at2(k, p), akq = a.at2(k, q);
                    a.at2(k, p) = c * akp - sn * akq;
                    a.at2(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < m; ++k) {
                    double apk = a.at2(p, k), aqk = a.at2(q, k);
                    a.at2(p, k) = c * apk - sn * aqk;
                    a.at2(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < m; ++k) {
                    double vkp = v.at2(k, p), vkq = v.at2(k, q);
                    v.at2(k, p) = c * vkp - sn * vkq;
                    v.at2(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }
    if (sweep == max_sweeps) {
        double off = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j) off += a.at2(i, j) * a.at2(i, j);
        if (std::sqrt(2.0 * off) > 1e-9)
            throw std::runtime_error("eig_sym: Jacobi iteration failed to converge on " +
                                     s.shape_str() + " matrix");
    }

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return a.at2(i, i) < a.at2(j, j); });

    EigResult out;
    out.values.resize(m);
    out.vectors = NDArray({m, m});
    for (std::size_t col = 0; col < m; ++col) {
        std::size_t src = order[col];
        out.values[col] = a.at2(src, src);
        std::size_t imax = 0;
        double amax = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            double x = std::abs(v.at2(k, src));
            if (x > amax) { amax = x; imax = k; }
        }
        double sign = v.at2(imax, src) < 0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < m; ++k) out.vectors.at2(k, col) = sign * v.at2(k, src);
    }
    return out;
}

NDArray cholesky(const NDArray& s) {
    const std::size_t m = s.dim(0);
    NDArray l({m, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = s.at2(i, j);
            for (std::size_t k = 0; k < j; ++k) sum -= l.at2(i, k) * l.at2(j, k);
            if (i == j) {
                if (sum <= 0.0)
                    throw std::runtime_error("cholesky: matrix not positive definite");
                l.at2(i, i) = std::sqrt(sum);
            } else {
                l.at2(i, j) = sum / l.at2(j, j);
            }
        }
    }
    return l;
}

std::vector<double> cholesky_solve(const NDArray& l, const std::vector<double>& b) {
    const std::size_t m = l.dim(0);
    std::vector<double> y(m), x(m);
    for (std::size_t i = 0; i < m; ++i) {
        double sum = b[i];
        for (std::size_t k = 0; k < i; ++k) sum -= l.at2(i, k) * y[k];
        y[i] = sum / l.at2(i, i);
    }
    for (std::size_t ii = m; ii-- > 0;) {
        double sum = y[ii];
        for (std::size_t k = ii + 1; k < m; ++k) sum -= l.at2(k, ii) * x[k];
        x[ii] = sum / l.at2(ii, ii);
    }
    return x;
}

double log_det_from_cholesky(const NDArray& l) {
    double s = 0.0;
    for (std::size_t i = 0; i < l.dim(0); ++i) s += std::log(l.at2(i, i));
    return 2.0 * s;
}

NDArray matmul(const NDArray& a, const NDArray& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " and " +
                                    b.shape_str());
    const std::size_t n = a.dim(0), k = a.dim(1), p = b.dim(1);
    NDArray c({n, p});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            double aik = a.at2(i, kk);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < p; ++j) c.at2(i, j) += aik * b.at2(kk, j);
        }
    return c;
}

NDArray transpose(const NDArray& a) {
    NDArray t({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) t.at2(j, i) = a.at2(i, j);
    return t;
}

double digamma(double x) {
    // Recurrence up to x >= 6, then asymptotic series.
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x, inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
    return result;
}

}  // namespace uqst::linalg
