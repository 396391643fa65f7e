#include "opaseg/adam.hpp"

#include <cmath>
#include <string>

#include "opaseg/errors.hpp"

namespace opaseg {

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr, double beta1, double beta2, double epsilon) {
    const std::size_t n = params.size();
    if (grad.size() != n || state.m.size() != n || state.v.size() != n)
        throw ValidationError("adam_step: parameter, gradient and state sizes differ");
    if (!(lr > 0.0) || !(epsilon > 0.0) || beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 ||
        beta2 >= 1.0)
        throw ValidationError("adam_step: hyperparameters out of range");

    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(grad[i]))
            throw NumericalError("non-finite gradient at parameter index " + std::to_string(i));

    state.t += 1;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
    }
}

} // namespace opaseg
