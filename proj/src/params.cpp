#include "uqst/params.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace uqst::model {

NDArray& ParamStore::add(const std::string& name, std::vector<std::size_t> shape, Init init) {
    if (index_.count(name)) throw std::logic_error("ParamStore: duplicate parameter " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, NDArray(std::move(shape)), init});
    return entries_.back().value;
}

void ParamStore::initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& e : entries_) {
        switch (e.init) {
            case Init::Zero:
                e.value.fill(0.0);
                break;
            case Init::One:
                e.value.fill(1.0);
                break;
            case Init::Glorot: {
                const auto& sh = e.value.shape();
                double fan_in, fan_out;
                if (sh.size() == 2) {
                    fan_in = double(sh[0]);
                    fan_out = double(sh[1]);
                } else if (sh.size() == 3) {
                    fan_in = double(sh[1] * sh[2]);
                    fan_out = double(sh[0] * sh[2]);
                } else {
                    fan_in = fan_out = double(e.value.size());
                }
                double bound = std::sqrt(6.0 / (fan_in + fan_out));
                std::uniform_real_distribution<double> u(-bound, bound);
                for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] = u(rng);
                break;
            }
        }
    }
}

NDArray& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("ParamStore: unknown parameter " + name);
    return entries_[it->second].value;
}

const NDArray& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("ParamStore: unknown parameter " + name);
    return entries_[it->second].value;
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

ad::Value ParamLeaves::at(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::logic_error("ParamLeaves: unknown parameter " + name);
    return values[it->second];
}

ParamLeaves make_leaves(ad::Tape& tape, const ParamStore& store) {
    ParamLeaves leaves;
    leaves.values.reserve(store.entries().size());
    for (const auto& e : store.entries()) {
        leaves.by_name[e.name] = leaves.values.size();
        leaves.values.push_back(tape.leaf(e.value));
    }
    return leaves;
}

void accumulate_grads(const ParamLeaves& leaves, std::vector<double>& flat) {
    std::size_t off = 0;
    for (const auto& v : leaves.values) {
        const NDArray& g = v.grad();
        for (std::size_t i = 0; i < g.size(); ++i) flat[off + i] += g[i];
        off += g.size();
    }
}

}  // namespace uqst::model
