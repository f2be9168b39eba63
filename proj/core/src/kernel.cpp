#include "qfmqtt/kernel.hpp"

#include <cmath>

namespace qfmqtt {

namespace {

// k(z) * 8192 = sum c_j z^(2j), j = 0..5
constexpr double kDensity[6] = {24255.0, -363825.0, 1600830.0, -2972970.0, 2477475.0, -765765.0};
// int_0^z k(s) ds * 8192 = sum a_j z^(2j+1)
constexpr double kAntiderivative[6] = {24255.0, -121275.0, 320166.0, -424710.0, 275275.0, -69615.0};
constexpr double kScale = 1.0 / 8192.0;

}  // namespace

double check_loss(double u, Quantile tau) noexcept {
  return u * (tau.value() - (u <= 0.0 ? 1.0 : 0.0));
}

double score_psi(double u, Quantile tau) noexcept {
  return tau.value() - (u < 0.0 ? 1.0 : 0.0);
}

double kernel_k(double z) noexcept {
  if (!(std::abs(z) < 1.0)) return 0.0;
  const double z2 = z * z;
  double acc = kDensity[5];
  for (int j = 4; j >= 0; --j) acc = acc * z2 + kDensity[j];
  return acc * kScale;
}

double kernel_k_prime(double z) noexcept {
  if (!(std::abs(z) < 1.0)) return 0.0;
  const double z2 = z * z;
  double acc = 10.0 * kDensity[5];
  for (int j = 4; j >= 1; --j) acc = acc * z2 + 2.0 * j * kDensity[j];
  return acc * z * kScale;
}

double kernel_K(double z) noexcept {
  if (z <= -1.0) return 1.0;
  if (z >= 1.0) return 0.0;
  const double z2 = z * z;
  double acc = kAntiderivative[5];
  for (int j = 4; j >= 0; --j) acc = acc * z2 + kAntiderivative[j];
  return 0.5 - acc * z * kScale;
}

SmoothedLoss smoothed_loss(double u, double tau, double bandwidth) noexcept {
  const double z = u / bandwidth;
  if (z >= 1.0) return {tau * u, tau, 0.0};
  if (z <= -1.0) return {(tau - 1.0) * u, tau - 1.0, 0.0};
  const double k = kernel_k(z);
  // d/du [(tau - K(z)) u] = tau - K(z) + z k(z);  second = (2 k(z) + z k'(z)) / h
  return {(tau - kernel_K(z)) * u, tau - kernel_K(z) + z * k,
          (2.0 * k + z * kernel_k_prime(z)) / bandwidth};
}

}  // namespace qfmqtt
