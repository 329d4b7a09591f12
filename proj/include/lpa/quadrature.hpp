#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <stdexcept>
#include <vector>

namespace lpa {

namespace detail {

// Gauss-Kronrod 7-15 nodes and weights on [-1, 1] (QUADPACK constants).
inline constexpr double kGk15Nodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.000000000000000};
inline constexpr double kGk15Weights[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline constexpr double kGauss7Weights[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <typename F>
Segment gk15(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double kronrod = 0.0;
  double gauss = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double dx = h * kGk15Nodes[i];
    const double fl = f(c - dx);
    const double fr = (i == 7) ? 0.0 : f(c + dx);
    const double fsum = (i == 7) ? fl : fl + fr;
    kronrod += kGk15Weights[i] * fsum;
    if (i % 2 == 1) gauss += kGauss7Weights[i / 2] * fsum;
  }
  kronrod *= h;
  gauss *= h;
  return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

// Adaptive Gauss-Kronrod integration of f over [a, b].
// Throws if the error estimate cannot be brought below the tolerance.
template <typename F>
double integrate(F&& f, double a, double b, double abs_tol = 1e-10,
                 std::size_t max_segments = 4000) {
  if (!(b > a)) return 0.0;
  std::priority_queue<detail::Segment> queue;
  queue.push(detail::gk15(f, a, b));
  double total = queue.top().value;
  double err = queue.top().error;
  std::size_t segments = 1;
  while (err > abs_tol && err > 1e-14 * std::abs(total)) {
    if (segments >= max_segments) throw std::runtime_error("integrate: did not converge");
    const detail::Segment worst = queue.top();
    queue.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    const detail::Segment left = detail::gk15(f, worst.a, mid);
    const detail::Segment right = detail::gk15(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    err += left.error + right.error - worst.error;
    queue.push(left);
    queue.push(right);
    ++segments;
  }
  if (!std::isfinite(total)) throw std::runtime_error("integrate: non-finite result");
  return total;
}

}  // namespace lpa
