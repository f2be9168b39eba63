#pragma once

#include "qfmqtt/quantile.hpp"

namespace qfmqtt {

/// Check function rho_tau(u) = u * (tau - 1{u <= 0}).
double check_loss(double u, Quantile tau) noexcept;

/// Score psi_tau(u) = tau - 1{u < 0}; note psi_tau(0) = tau.
double score_psi(double u, Quantile tau) noexcept;

/// Order-8 polynomial kernel supported on [-1, 1]:
/// k(z) = 1{|z| < 1} (3465/8192)(7 - 105 z^2 + 462 z^4 - 858 z^6 + 715 z^8 - 221 z^10).
double kernel_k(double z) noexcept;

/// First derivative of kernel_k (zero outside (-1, 1)).
double kernel_k_prime(double z) noexcept;

/// K(z) = 1 - int_{-1}^{z} k(s) ds, evaluated with the closed-form
/// degree-11 antiderivative. K = 1 for z <= -1 and K = 0 for z >= 1.
double kernel_K(double z) noexcept;

/// Smoothed check loss [tau - K(u/h)] u and its first two derivatives in u.
struct SmoothedLoss {
  double value;
  double first;
  double second;
};

SmoothedLoss smoothed_loss(double u, double tau, double bandwidth) noexcept;

}  // namespace qfmqtt
