#pragma once

#include <functional>
#include <utility>

namespace ura::optimize {

// Golden-section minimum of a unimodal f on [lo, hi].
// Returns {argmin, f(argmin)}.
std::pair<double, double> golden_min(const std::function<double(double)>& f,
                                     double lo, double hi, int iters = 60);

// Minimum of f on [0, inf): grows the bracket geometrically from hi0 until
// the minimum is interior (or growth_cap is hit), then golden-sections.
std::pair<double, double> golden_min_ray(
    const std::function<double(double)>& f, double hi0 = 1.0,
    int iters = 60, int growth_cap = 200);

}  // namespace ura::optimize
