#pragma once

#include <cmath>
#include <string>

#include "vfl/core.hpp"

namespace vfl {

// A point of the flat torus [-pi, pi)^2.
using TorusPoint = Vec2;

// Reduces one coordinate into [-pi, pi).
inline double wrap_coordinate(double x) {
  double y = x - two_pi * std::floor((x + pi) / two_pi);
  // floor() can land exactly on the upper edge after rounding
  if (y >= pi) y -= two_pi;
  if (y < -pi) y += two_pi;
  return y;
}

inline TorusPoint wrap(Vec2 p) {
  if (!std::isfinite(p.x1) || !std::isfinite(p.x2)) {
    throw InvalidInput("wrap: non-finite coordinate");
  }
  return {wrap_coordinate(p.x1), wrap_coordinate(p.x2)};
}

// Minimal-image displacement d with a = b + d (mod 2pi), each component in [-pi, pi).
inline Vec2 torus_displacement(TorusPoint a, TorusPoint b) {
  return {wrap_coordinate(a.x1 - b.x1), wrap_coordinate(a.x2 - b.x2)};
}

inline double torus_distance(TorusPoint a, TorusPoint b) {
  return norm(torus_displacement(a, b));
}

}  // namespace vfl
