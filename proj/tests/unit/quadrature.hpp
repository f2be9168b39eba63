#pragma once

#include <cmath>

// Composite Simpson rule; test-only oracle independent of the closed forms.
template <typename F>
double simpson(F&& f, double a, double b, int intervals = 20000) {
  if (intervals % 2) ++intervals;
  const double h = (b - a) / intervals;
  double acc = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return acc * h / 3.0;
}
