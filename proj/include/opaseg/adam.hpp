#pragma once

#include <cstdint>
#include <vector>

namespace opaseg {

// First/second moment estimates for one parameter vector.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Standard bias-corrected update. Throws NumericalError on any non-finite
// gradient entry; parameters are untouched in that case.
void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

} // namespace opaseg
