#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dmech/errors.hpp"

namespace dmech {

/// Quadrature rule on the reference interval [0, 1]; weights sum to 1.
struct Quadrature {
  std::string name;
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Built-in rules: "midpoint", "trapezoid", "gauss2".
inline Quadrature quadrature_rule(const std::string& name) {
  if (name == "midpoint") return {name, {0.5}, {1.0}};
  if (name == "trapezoid") return {name, {0.0, 1.0}, {0.5, 0.5}};
  if (name == "gauss2") {
    const double d = std::sqrt(3.0) / 6.0;
    return {name, {0.5 - d, 0.5 + d}, {0.5, 0.5}};
  }
  throw ConfigError("unknown quadrature rule \"" + name +
                    "\" (expected midpoint, trapezoid or gauss2)");
}

}  // namespace dmech
