#pragma once

#include <compare>

#include "qfmqtt/errors.hpp"

namespace qfmqtt {

/// Quantile level in the open interval (0, 1).
class Quantile {
public:
  explicit Quantile(double tau) : tau_(tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
      throw InputError("quantile level must lie in (0, 1)");
    }
  }

  double value() const noexcept { return tau_; }
  operator double() const noexcept { return tau_; }

  friend auto operator<=>(const Quantile&, const Quantile&) = default;

private:
  double tau_;
};

}  // namespace qfmqtt
