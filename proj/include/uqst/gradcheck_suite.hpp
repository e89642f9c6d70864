#pragma once

#include <string>
#include <vector>

namespace uqst::gradcheck {

struct CheckRow {
    std::string op;
    double max_rel_err = 0;
    bool pass = false;
};

// Seeded central-difference checks of every differentiable op and the
// full loss chains; 10 random instances per row, tolerance 1e-4.
std::vector<CheckRow> run_suite(double tol = 1e-4, std::size_t instances = 10);

}  // namespace uqst::gradcheck
