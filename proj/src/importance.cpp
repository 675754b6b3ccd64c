#include "proxtree/importance.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "proxtree/csv.hpp"
#include "proxtree/errors.hpp"
#include "proxtree/parallel.hpp"
#include "proxtree/random.hpp"
#include "proxtree/stats.hpp"

namespace proxtree {

double mse(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size())
    throw InputError("mse: length mismatch (" + std::to_string(y.size()) + " vs " + std::to_string(yhat.size()) + ")");
  if (y.empty()) throw InputError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double importance_percent(double mse_perm, double mse_base) { return (mse_perm / mse_base - 1.0) * 100.0; }

std::vector<FeatureGroup> default_groups(std::span<const std::string> features, bool per_indicator) {
  std::vector<FeatureGroup> groups;
  for (const auto& f : features) {
    const auto eq = f.find('=');
    if (per_indicator || eq == std::string::npos) {
      groups.push_back({f, {f}});
      continue;
    }
    const std::string prefix = f.substr(0, eq);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const FeatureGroup& g) {
      return g.name == prefix && g.columns.front().find('=') != std::string::npos;
    });
    if (it == groups.end())
      groups.push_back({prefix, {f}});
    else
      it->columns.push_back(f);
  }
  return groups;
}

const ImportanceEntry& ImportanceReport::entry(const std::string& feature) const {
  for (const auto& e : entries)
    if (e.feature == feature) return e;
  throw InputError("no importance entry for '" + feature + "'");
}

std::vector<std::size_t> ImportanceReport::ranking() const {
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return entries[a].importance_pct > entries[b].importance_pct; });
  return order;
}

ImportanceReport permutation_importance(const FittedModel& model, const FeatureTable& test,
                                        const ImportanceOptions& options) {
  if (options.permutations < 1) throw ConfigError("the number of permutations must be at least 1");
  if (!test.has_outcome()) throw InputError("test table has no outcome column");
  const std::size_t n = test.rows();
  if (n == 0) throw InputError("test table is empty");
  const auto& features = model.features();
  const auto groups = options.groups.empty() ? default_groups(features, options.per_indicator) : options.groups;

  // Model feature indices and test columns per group.
  std::vector<std::vector<std::size_t>> feat_idx(groups.size());
  std::vector<std::vector<std::span<const double>>> cols(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].columns.empty()) throw ConfigError("feature group '" + groups[g].name + "' is empty");
    for (const auto& c : groups[g].columns) {
      const auto it = std::find(features.begin(), features.end(), c);
      if (it == features.end()) throw InputError("model has no feature '" + c + "'");
      feat_idx[g].push_back(static_cast<std::size_t>(it - features.begin()));
      cols[g].push_back(test.column(test.column_index(c)));
    }
  }

  const auto y = test.outcome();
  const auto base = model.predict(test);
  std::vector<double> se0(n);
  for (std::size_t i = 0; i < n; ++i) se0[i] = (y[i] - base[i]) * (y[i] - base[i]);
  const double mse0 = mse(y, base);
  if (!(mse0 > 0.0)) throw NumericalError("baseline test MSE is zero; importance ratios are undefined");

  const std::size_t K = options.permutations, G = groups.size();
  std::vector<double> mse_k(G * K);
  std::vector<std::vector<double>> local_k(options.local ? G * K : 0);
  parallel_for(G * K, [&](std::size_t job) {
    const std::size_t g = job / K, k = job % K;
    Rng rng = make_rng(options.seed, {g, k});
    const auto perm = random_permutation(n, rng);
    bool identity = true;
    for (std::size_t i = 0; i < n && identity; ++i) identity = perm[i] == i;
    std::vector<double> se(n);
    if (identity) {
      se = se0;
    } else {
      std::vector<std::vector<double>> repl(cols[g].size(), std::vector<double>(n));
      for (std::size_t c = 0; c < cols[g].size(); ++c)
        for (std::size_t i = 0; i < n; ++i) repl[c][i] = cols[g][c][perm[i]];
      const auto pred = model.predict_replaced(test, feat_idx[g], repl, base);
      for (std::size_t i = 0; i < n; ++i) se[i] = (y[i] - pred[i]) * (y[i] - pred[i]);
    }
    mse_k[job] = std::accumulate(se.begin(), se.end(), 0.0) / static_cast<double>(n);
    if (options.local) {
      for (std::size_t i = 0; i < n; ++i) se[i] -= se0[i];
      local_k[job] = std::move(se);
    }
  });

  ImportanceReport r;
  r.mse_base = mse0;
  r.permutations = K;
  r.seed = options.seed;
  for (std::size_t g = 0; g < G; ++g) {
    // Averaged as increments so replicates equal to the base give it back exactly.
    double inc = 0.0;
    for (std::size_t k = 0; k < K; ++k) inc += mse_k[g * K + k] - mse0;
    const double m = mse0 + inc / static_cast<double>(K);
    r.entries.push_back({groups[g].name, importance_percent(m, mse0), m});
  }
  if (options.local) {
    r.row_ids = test.ids();
    r.local.assign(n * G, 0.0);
    for (std::size_t g = 0; g < G; ++g)
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += local_k[g * K + k][i];
        r.local[i * G + g] = s / static_cast<double>(K);
      }
  }
  return r;
}

void write_importance_csv(std::ostream& out, const ImportanceReport& report) {
  write_csv_record(out, {"feature", "importance_pct", "mse_perm", "mse_base", "k"});
  for (std::size_t idx : report.ranking()) {
    const auto& e = report.entries[idx];
    write_csv_record(out, {e.feature, format_double(e.importance_pct), format_double(e.mse_perm),
                           format_double(report.mse_base), std::to_string(report.permutations)});
  }
}

void write_local_csv(std::ostream& out, const ImportanceReport& report) {
  if (report.local.empty()) throw ConfigError("report has no local importance matrix");
  std::vector<std::string> header{"id"};
  for (const auto& e : report.entries) header.push_back(e.feature);
  write_csv_record(out, header);
  const std::size_t G = report.entries.size();
  for (std::size_t i = 0; i < report.row_ids.size(); ++i) {
    std::vector<std::string> row{report.row_ids[i]};
    for (std::size_t g = 0; g < G; ++g) row.push_back(format_double(report.local[i * G + g]));
    write_csv_record(out, row);
  }
}

LocalMatrix read_local_csv(const std::filesystem::path& path) {
  const CsvData csv = read_csv(path);
  if (csv.header.empty() || csv.header.front() != "id")
    throw InputError(path.string() + ": local importance file must start with an 'id' column");
  LocalMatrix m;
  m.features.assign(csv.header.begin() + 1, csv.header.end());
  for (std::size_t r = 0; r < csv.records.size(); ++r) {
    const auto& row = csv.records[r];
    m.row_ids.push_back(row.front());
    for (std::size_t c = 1; c < row.size(); ++c) {
      const auto v = parse_number(row[c]);
      if (!v)
        throw InputError(path.string() + ":" + std::to_string(csv.line[r]) + ": non-numeric value '" + row[c] + "'");
      m.values.push_back(*v);
    }
  }
  return m;
}

}  // namespace proxtree
