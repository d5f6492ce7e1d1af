#pragma once

#include <cstdint>
#include <string>

namespace bxi {

// The unit of Monte Carlo output: one estimated quantity at one (r, lambda).
struct EstimateRecord {
    std::string quantity;
    double r = 0.0;
    double lambda = 0.0;
    double value = 0.0;
    double stderr_ = 0.0;
    std::uint64_t n = 0;
    std::uint64_t seed = 0;
};

} // namespace bxi
