#pragma once

#include <array>
#include <string>
#include <vector>

#include "uqst/ndarray.hpp"

namespace uqst::graph {

// Region graph with Gaussian-threshold-kernel adjacency:
//   A_ij = exp(-d_ij^2 / sigma2) when i != j and the value >= r, else 0.
struct RegionGraph {
    std::size_t n_regions = 0;
    NDArray distances;  // (N,N), km, symmetric, zero diagonal
    NDArray adjacency;  // (N,N), symmetric, zero diagonal
    double sigma2 = 1.0;
    double r = 0.1;

    std::size_t edge_count() const;  // undirected, nonzero pairs i<j
    double density() const;
};

struct DiffusionOps {
    NDArray forward;   // row-normalized A
    NDArray backward;  // row-normalized A^T
};

struct ChebBasis {
    std::size_t order = 0;
    std::vector<NDArray> t;  // t[k] = T_k, k = 0..order (T_0 = I)
};

struct StationaryResult {
    NDArray p;
    double truncation_mass = 0.0;
};

RegionGraph build_adjacency(const NDArray& distances, double sigma2, double r);
NDArray distances_from_centroids(const std::vector<std::array<double, 2>>& centroids);

DiffusionOps diffusion_operators(const RegionGraph& g);

// Truncated restart random walk: P = sum_{k=0}^{K} alpha (1-alpha)^k W^k.
StationaryResult stationary_distribution(const NDArray& transition, double alpha,
                                         std::size_t k_max);

// T_0 = I, T_1 = W, T_k = 2 W T_{k-1} - T_{k-2}.
ChebBasis chebyshev_basis(const NDArray& transition, std::size_t order);

// Graph input file: {"centroids": [[x,y],...]} or {"distances": [...row-major...]},
// plus "sigma2" and "r".
RegionGraph load_graph_json(const std::string& path);
void save_graph_json(const RegionGraph& g, const std::string& path);

}  // namespace uqst::graph
