#include "ura/optimize.hpp"

#include <cmath>

namespace ura::optimize {

std::pair<double, double> golden_min(const std::function<double(double)>& f,
                                     double lo, double hi, int iters) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int i = 0; i < iters; ++i) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    }
  }
  const double xm = 0.5 * (a + b);
  const double fm = f(xm);
  double best_x = xm, best_f = fm;
  if (f1 < best_f) best_x = x1, best_f = f1;
  if (f2 < best_f) best_x = x2, best_f = f2;
  // the endpoints of the original interval stay candidates
  const double fl = f(lo);
  if (fl < best_f) best_x = lo, best_f = fl;
  return {best_x, best_f};
}

std::pair<double, double> golden_min_ray(
    const std::function<double(double)>& f, double hi0, int iters,
    int growth_cap) {
  double hi = hi0;
  double f_hi = f(hi);
  double f_half = f(0.5 * hi);
  for (int i = 0; i < growth_cap && f_hi <= f_half; ++i) {
    hi *= 2.0;
    f_half = f_hi;
    f_hi = f(hi);
    if (!std::isfinite(hi)) break;
  }
  return golden_min(f, 0.0, hi, iters);
}

}  // namespace ura::optimize
