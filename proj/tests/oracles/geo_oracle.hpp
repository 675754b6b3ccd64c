#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace oracle {

// Spherical law of cosines on unit vectors, radius 6371.0088 km. Independent
// of the haversine form used by the library.
inline double great_circle_km(double lat1, double lon1, double lat2, double lon2) {
  const double d = std::numbers::pi / 180.0;
  const double x1 = std::cos(lat1 * d) * std::cos(lon1 * d), y1 = std::cos(lat1 * d) * std::sin(lon1 * d),
               z1 = std::sin(lat1 * d);
  const double x2 = std::cos(lat2 * d) * std::cos(lon2 * d), y2 = std::cos(lat2 * d) * std::sin(lon2 * d),
               z2 = std::sin(lat2 * d);
  const double dot = std::clamp(x1 * x2 + y1 * y2 + z1 * z2, -1.0, 1.0);
  return 6371.0088 * std::acos(dot);
}

}  // namespace oracle
