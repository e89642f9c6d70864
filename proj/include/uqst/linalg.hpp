#pragma once

#include <vector>

#include "uqst/ndarray.hpp"

namespace uqst::linalg {

struct EigResult {
    std::vector<double> values;  // ascending
    NDArray vectors;             // orthonormal columns, vectors(:,i) pairs with values[i]
};

// Symmetric eigendecomposition by cyclic Jacobi rotations.
// Eigenvalues sorted ascending; eigenvector signs fixed so the
// largest-magnitude component of each column is positive.
EigResult eig_sym(const NDArray& s);

// Lower-triangular Cholesky factor of a PD matrix. Throws if a pivot
// is non-positive.
NDArray cholesky(const NDArray& s);

// Solve L*Lt*x = b given the Cholesky factor L.
std::vector<double> cholesky_solve(const NDArray& l, const std::vector<double>& b);

double log_det_from_cholesky(const NDArray& l);

// C = A * B for 2-D arrays.
NDArray matmul(const NDArray& a, const NDArray& b);
NDArray transpose(const NDArray& a);

double digamma(double x);

bool is_symmetric(const NDArray& s, double tol);

}  // namespace uqst::linalg
