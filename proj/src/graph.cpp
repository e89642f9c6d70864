#include "uqst/graph.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "uqst/linalg.hpp"

namespace uqst::graph {

std::size_t RegionGraph::edge_count() const {
    std::size_t e = 0;
    for (std::size_t i = 0; i < n_regions; ++i)
        for (std::size_t j = i + 1; j < n_regions; ++j)
            if (adjacency.at2(i, j) != 0.0) ++e;
    return e;
}

double RegionGraph::density() const {
    if (n_regions < 2) return 0.0;
    return double(edge_count()) / (0.5 * double(n_regions) * double(n_regions - 1));
}

RegionGraph build_adjacency(const NDArray& distances, double sigma2, double r) {
    if (sigma2 <= 0) throw std::invalid_argument("build_adjacency: sigma2 must be > 0");
    if (r <= 0 || r > 1) throw std::invalid_argument("build_adjacency: r must be in (0,1]");
    if (distances.rank() != 2 || distances.dim(0) != distances.dim(1))
        throw std::invalid_argument("build_adjacency: distances must be square, got " +
                                    distances.shape_str());
    const std::size_t n = distances.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
        if (distances.at2(i, i) != 0.0)
            throw std::invalid_argument("build_adjacency: nonzero diagonal distance");
        for (std::size_t j = 0; j < n; ++j) {
            if (distances.at2(i, j) < 0)
                throw std::invalid_argument("build_adjacency: negative distance");
            if (std::abs(distances.at2(i, j) - distances.at2(j, i)) > 1e-12)
                throw std::invalid_argument("build_adjacency: asymmetric distances");
        }
    }
    RegionGraph g;
    g.n_regions = n;
    g.distances = distances;
    g.sigma2 = sigma2;
    g.r = r;
    g.adjacency = NDArray({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double d = distances.at2(i, j);
            double w = std::exp(-d * d / sigma2);
            g.adjacency.at2(i, j) = (w >= r) ? w : 0.0;
        }
    return g;
}

NDArray distances_from_centroids(const std::vector<std::array<double, 2>>& centroids) {
    const std::size_t n = centroids.size();
    NDArray d({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double dx = centroids[i][0] - centroids[j][0];
            double dy = centroids[i][1] - centroids[j][1];
            d.at2(i, j) = std::sqrt(dx * dx + dy * dy);
        }
    return d;
}

namespace {

NDArray row_normalize(const NDArray& a) {
    const std::size_t n = a.dim(0);
    NDArray w({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += a.at2(i, j);
        if (s == 0.0) {
            // Isolated node: self-loop keeps the row stochastic.
            w.at2(i, i) = 1.0;
        } else {
            for (std::size_t j = 0; j < n; ++j) w.at2(i, j) = a.at2(i, j) / s;
        }
    }
    return w;
}

}  // namespace

DiffusionOps diffusion_operators(const RegionGraph& g) {
    DiffusionOps ops;
    ops.forward = row_normalize(g.adjacency);
    ops.backward = row_normalize(linalg::transpose(g.adjacency));
    return ops;
}

StationaryResult stationary_distribution(const NDArray& transition, double alpha,
                                         std::size_t k_max) {
    if (alpha < 0 || alpha > 1)
        throw std::invalid_argument("stationary_distribution: alpha must be in [0,1]");
    const std::size_t n = transition.dim(0);
    StationaryResult res;
    res.p = NDArray({n, n});
    NDArray wk = NDArray::identity(n);
    double coeff = alpha;
    double mass = 0.0;
    for (std::size_t k = 0; k <= k_max; ++k) {
        if (k > 0) {
            wk = linalg::matmul(wk, transition);
            coeff = alpha * std::pow(1.0 - alpha, double(k));
        }
        for (std::size_t i = 0; i < n * n; ++i) res.p[i] += coeff * wk[i];
        mass += coeff;
    }
    res.truncation_mass = mass;
    return res;
}

ChebBasis chebyshev_basis(const NDArray& transition, std::size_t order) {
    if (order < 1) throw std::invalid_argument("chebyshev_basis: order must be >= 1");
    const std::size_t n = transition.dim(0);
    ChebBasis basis;
    basis.order = order;
    basis.t.push_back(NDArray::identity(n));
    basis.t.push_back(transition);
    for (std::size_t k = 2; k <= order; ++k) {
        NDArray tk = linalg::matmul(transition, basis.t[k - 1]);
        for (std::size_t i = 0; i < n * n; ++i) tk[i] = 2.0 * tk[i] - basis.t[k - 2][i];
        basis.t.push_back(std::move(tk));
    }
    return basis;
}

RegionGraph load_graph_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open graph file: " + path);
    nlohmann::json j;
    f >> j;
    double sigma2 = j.at("sigma2").get<double>();
    double r = j.at("r").get<double>();
    NDArray distances;
    if (j.contains("distances")) {
        auto flat = j.at("distances").get<std::vector<double>>();
        std::size_t n = std::size_t(std::llround(std::sqrt(double(flat.size()))));
        if (n * n != flat.size())
            throw std::runtime_error("graph file: distances length is not a perfect square");
        distances = NDArray({n, n}, std::move(flat));
    } else if (j.contains("centroids")) {
        std::vector<std::array<double, 2>> cs;
        for (const auto& c : j.at("centroids"))
            cs.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
        distances = distances_from_centroids(cs);
    } else {
        throw std::runtime_error("graph file: need \"distances\" or \"centroids\"");
    }
    return build_adjacency(distances, sigma2, r);
}

void save_graph_json(const RegionGraph& g, const std::string& path) {
    nlohmann::json j;
    j["sigma2"] = g.sigma2;
    j["r"] = g.r;
    j["distances"] = g.distances.vec();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write graph file: " + path);
    f << j.dump(2) << "\n";
}

}  // namespace uqst::graph
