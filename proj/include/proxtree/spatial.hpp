#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "proxtree/table.hpp"

namespace proxtree {

// Mean Earth radius (IUGG), km.
inline constexpr double kEarthRadiusKm = 6371.0088;

// A location on the sphere in degrees. Construct through normalized() to
// enforce lat in [-90, 90] and lon in (-180, 180].
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  // Wraps longitude into (-180, 180]; rejects non-finite values and
  // latitudes outside [-90, 90] with InputError.
  static GeoPoint normalized(double lat, double lon);

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

// Great-circle distance in km (haversine formula, R = kEarthRadiusKm).
double haversine_km(const GeoPoint& a, const GeoPoint& b);

struct Event {
  std::int64_t id = 0;
  GeoPoint location;
  double time = 0.0;          // years before the reference date
  double size = 0.0;          // magnitude in domain units
  std::vector<double> flags;  // aligned with EventCatalog::flag_names
};

struct EventCatalog {
  std::vector<std::string> flag_names;
  std::vector<Event> events;

  // Unique ids, time >= 0, size >= 0, flag vectors of the right width.
  void validate() const;
};

struct Observation {
  std::string id;
  GeoPoint location;
};

enum class DistanceScale { km, thousand_km };

DistanceScale parse_distance_scale(const std::string& text);
std::string to_string(DistanceScale scale);

// Proximity feature set for every observation relative to the catalog. Column
// names, with j = 1..k:
//   dist_near{j}, time_near{j}, size_near{j}, {flag}_near{j}
//   dist_recent{j}, dist_largest{j}
//   dist_near_avg{j}, dist_recent_avg{j}   for j = 2..k
// Orderings break ties by ascending event id, so the output does not depend
// on catalog row order.
FeatureTable featurize(std::span<const Observation> observations, const EventCatalog& catalog,
                       int k, DistanceScale scale);

}  // namespace proxtree
