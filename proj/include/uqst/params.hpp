#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "uqst/autodiff.hpp"
#include "uqst/ndarray.hpp"

namespace uqst::model {

enum class Init { Glorot, Zero, One };

// Ordered named parameter arrays; registration order is the canonical
// order for initialization, gradient reduction, and checkpointing.
class ParamStore {
public:
    struct Entry {
        std::string name;
        NDArray value;
        Init init;
    };

    NDArray& add(const std::string& name, std::vector<std::size_t> shape, Init init);
    void initialize(std::uint64_t seed);

    bool has(const std::string& name) const { return index_.count(name) > 0; }
    NDArray& at(const std::string& name);
    const NDArray& at(const std::string& name) const;

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t total_size() const;

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

// Leaves for every parameter on a tape, in registration order.
struct ParamLeaves {
    std::vector<ad::Value> values;
    std::unordered_map<std::string, std::size_t> by_name;

    ad::Value at(const std::string& name) const;
};

ParamLeaves make_leaves(ad::Tape& tape, const ParamStore& store);

// Accumulate leaf gradients into a flat buffer laid out in registration order.
void accumulate_grads(const ParamLeaves& leaves, std::vector<double>& flat);

}  // namespace uqst::model
