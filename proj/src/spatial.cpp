#include "proxtree/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_set>

#include "proxtree/errors.hpp"
#include "proxtree/parallel.hpp"

namespace proxtree {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

GeoPoint GeoPoint::normalized(double lat, double lon) {
  if (!std::isfinite(lat) || !std::isfinite(lon))
    throw InputError("non-finite coordinate");
  if (lat < -90.0 || lat > 90.0)
    throw InputError("latitude " + std::to_string(lat) + " outside [-90, 90]");
  double wrapped = std::fmod(lon, 360.0);
  if (wrapped <= -180.0) wrapped += 360.0;
  if (wrapped > 180.0) wrapped -= 360.0;
  return GeoPoint{lat, wrapped};
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  if (!std::isfinite(a.lat) || !std::isfinite(a.lon) || !std::isfinite(b.lat) ||
      !std::isfinite(b.lon))
    throw InputError("non-finite coordinate");
  const double phi1 = a.lat * kDegToRad;
  const double phi2 = b.lat * kDegToRad;
  const double s_lat = std::sin((phi2 - phi1) / 2.0);
  const double s_lon = std::sin((b.lon - a.lon) * kDegToRad / 2.0);
  double h = s_lat * s_lat + std::cos(phi1) * std::cos(phi2) * s_lon * s_lon;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

void EventCatalog::validate() const {
  std::unordered_set<std::int64_t> ids;
  for (const auto& e : events) {
    if (!ids.insert(e.id).second) throw InputError("duplicate event id " + std::to_string(e.id));
    if (!(e.time >= 0.0)) throw InputError("event " + std::to_string(e.id) + ": time must be >= 0");
    if (!(e.size >= 0.0)) throw InputError("event " + std::to_string(e.id) + ": size must be >= 0");
    if (e.flags.size() != flag_names.size())
      throw InputError("event " + std::to_string(e.id) + ": flag count mismatch");
  }
}

DistanceScale parse_distance_scale(const std::string& text) {
  if (text == "km") return DistanceScale::km;
  if (text == "thousand-km") return DistanceScale::thousand_km;
  throw ConfigError("unknown distance scale '" + text + "' (expected km or thousand-km)");
}

std::string to_string(DistanceScale scale) {
  return scale == DistanceScale::km ? "km" : "thousand-km";
}

FeatureTable featurize(std::span<const Observation> observations, const EventCatalog& catalog,
                       int k, DistanceScale scale) {
  if (k < 1) throw ConfigError("k must be a positive integer");
  catalog.validate();
  const auto ku = static_cast<std::size_t>(k);
  if (catalog.events.size() < ku)
    throw ConfigError("event catalog has " + std::to_string(catalog.events.size()) +
                      " events, fewer than k = " + std::to_string(k));

  const auto& events = catalog.events;
  const std::size_t n_events = events.size();
  const double factor = scale == DistanceScale::km ? 1.0 : 1.0 / 1000.0;

  // Recency and size orderings do not depend on the observation.
  std::vector<std::size_t> by_recency(n_events), by_size(n_events);
  std::iota(by_recency.begin(), by_recency.end(), std::size_t{0});
  std::iota(by_size.begin(), by_size.end(), std::size_t{0});
  std::sort(by_recency.begin(), by_recency.end(), [&](std::size_t a, std::size_t b) {
    if (events[a].time != events[b].time) return events[a].time < events[b].time;
    return events[a].id < events[b].id;
  });
  std::sort(by_size.begin(), by_size.end(), [&](std::size_t a, std::size_t b) {
    if (events[a].size != events[b].size) return events[a].size > events[b].size;
    return events[a].id < events[b].id;
  });

  const std::size_t n = observations.size();
  const std::size_t n_flags = catalog.flag_names.size();
  // Per observation: k nearest (dist, time, size, flags), k recent, k largest.
  const std::size_t near_width = 3 + n_flags;
  std::vector<std::vector<double>> near(n), recent(n), largest(n);

  parallel_for(n, [&](std::size_t i) {
    const GeoPoint& here = observations[i].location;
    std::vector<double> dist(n_events);
    for (std::size_t e = 0; e < n_events; ++e) dist[e] = haversine_km(here, events[e].location) * factor;

    std::vector<std::size_t> order(n_events);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(ku), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (dist[a] != dist[b]) return dist[a] < dist[b];
                        return events[a].id < events[b].id;
                      });
    auto& nr = near[i];
    nr.reserve(ku * near_width);
    for (std::size_t j = 0; j < ku; ++j) {
      const Event& ev = events[order[j]];
      nr.push_back(dist[order[j]]);
      nr.push_back(ev.time);
      nr.push_back(ev.size);
      for (double f : ev.flags) nr.push_back(f);
    }
    for (std::size_t j = 0; j < ku; ++j) recent[i].push_back(dist[by_recency[j]]);
    for (std::size_t j = 0; j < ku; ++j) largest[i].push_back(dist[by_size[j]]);
  });

  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& obs : observations) ids.push_back(obs.id);
  FeatureTable table(std::move(ids));

  auto gather = [&](const std::vector<std::vector<double>>& src, std::size_t offset) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = src[i][offset];
    return col;
  };

  for (std::size_t j = 0; j < ku; ++j) {
    const std::string s = std::to_string(j + 1);
    const std::size_t base = j * near_width;
    table.add_column("dist_near" + s, gather(near, base));
    table.add_column("time_near" + s, gather(near, base + 1));
    table.add_column("size_near" + s, gather(near, base + 2));
    for (std::size_t f = 0; f < n_flags; ++f)
      table.add_column(catalog.flag_names[f] + "_near" + s, gather(near, base + 3 + f));
  }
  for (std::size_t j = 0; j < ku; ++j) table.add_column("dist_recent" + std::to_string(j + 1), gather(recent, j));
  for (std::size_t j = 0; j < ku; ++j) table.add_column("dist_largest" + std::to_string(j + 1), gather(largest, j));

  // Running means of the first j nearest / most recent distances.
  auto running_mean = [&](const std::vector<std::vector<double>>& src, std::size_t stride,
                          std::size_t count) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t t = 0; t < count; ++t) sum += src[i][t * stride];
      col[i] = sum / static_cast<double>(count);
    }
    return col;
  };
  for (std::size_t j = 2; j <= ku; ++j)
    table.add_column("dist_near_avg" + std::to_string(j), running_mean(near, near_width, j));
  for (std::size_t j = 2; j <= ku; ++j)
    table.add_column("dist_recent_avg" + std::to_string(j), running_mean(recent, 1, j));
  return table;
}

}  // namespace proxtree
