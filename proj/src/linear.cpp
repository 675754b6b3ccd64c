#include "proxtree/linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "proxtree/errors.hpp"
#include "proxtree/log.hpp"
#include "proxtree/parallel.hpp"
#include "proxtree/random.hpp"

namespace proxtree {

using nlohmann::json;

namespace {

void require_finite(const FeatureTable& t) {
  if (!t.has_outcome()) throw InputError("training table has no outcome column");
  for (std::size_t j = 0; j < t.cols(); ++j)
    for (double v : t.column(j))
      if (!std::isfinite(v)) throw InputError("column '" + t.name(j) + "' has a non-finite value");
  for (double v : t.outcome())
    if (!std::isfinite(v)) throw InputError("outcome has a non-finite value");
}

double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

// Standardized Gram matrix and correlations of one table.
struct Standardized {
  std::size_t n = 0, p = 0;
  std::vector<double> means, sds;
  double y_mean = 0.0;
  Eigen::MatrixXd gram;  // Xs'Xs / n
  Eigen::VectorXd xy;    // Xs'(y - ybar) / n
};

Standardized standardize(const FeatureTable& t) {
  Standardized s;
  s.n = t.rows();
  s.p = t.cols();
  const double n = static_cast<double>(s.n);
  const auto y = t.outcome();
  s.y_mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  Eigen::MatrixXd xs(s.n, s.p);
  s.means.resize(s.p);
  s.sds.resize(s.p);
  for (std::size_t j = 0; j < s.p; ++j) {
    const auto c = t.column(j);
    const double m = std::accumulate(c.begin(), c.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : c) ss += (v - m) * (v - m);
    double sd = std::sqrt(ss / n);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(m)))) sd = 0.0;
    s.means[j] = m;
    s.sds[j] = sd;
    for (std::size_t i = 0; i < s.n; ++i) xs(i, j) = sd > 0.0 ? (c[i] - m) / sd : 0.0;
  }
  Eigen::VectorXd yc(s.n);
  for (std::size_t i = 0; i < s.n; ++i) yc(i) = y[i] - s.y_mean;
  s.gram = (xs.transpose() * xs) / n;
  s.xy = (xs.transpose() * yc) / n;
  return s;
}

// Coordinate descent from `b` (warm start) at one lambda. Maintains the
// gradient g = xy - G b.
void descend(const Standardized& s, double lambda, std::vector<double>& b, const LassoControls& c) {
  Eigen::VectorXd g = s.xy;
  for (std::size_t j = 0; j < s.p; ++j)
    if (b[j] != 0.0) g -= s.gram.col(static_cast<Eigen::Index>(j)) * b[j];
  for (std::size_t sweep = 0; sweep < c.max_sweeps; ++sweep) {
    double largest = 0.0;
    for (std::size_t j = 0; j < s.p; ++j) {
      if (s.sds[j] == 0.0) continue;
      const auto jj = static_cast<Eigen::Index>(j);
      const double gjj = s.gram(jj, jj);
      const double nb = soft_threshold(g(jj) + gjj * b[j], lambda) / gjj;
      const double delta = nb - b[j];
      if (delta == 0.0) continue;
      g -= s.gram.col(jj) * delta;
      b[j] = nb;
      largest = std::max(largest, std::abs(delta));
    }
    if (largest <= c.tolerance) return;
  }
  warn("coordinate descent reached " + std::to_string(c.max_sweeps) + " sweeps at lambda " +
       std::to_string(lambda) + " without converging");
}

std::vector<double> default_lambdas(double lambda_max, const LassoControls& c) {
  if (c.path_length == 0) throw ConfigError("lasso path length must be positive");
  if (!(c.min_ratio > 0.0 && c.min_ratio < 1.0)) throw ConfigError("lasso min_ratio must lie in (0, 1)");
  std::vector<double> out(c.path_length);
  if (lambda_max <= 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  const double step = c.path_length > 1 ? std::log(c.min_ratio) / static_cast<double>(c.path_length - 1) : 0.0;
  for (std::size_t k = 0; k < c.path_length; ++k) out[k] = lambda_max * std::exp(step * static_cast<double>(k));
  return out;
}

LassoPath solve_path(const FeatureTable& t, const std::vector<double>& lambdas, const LassoControls& c) {
  const Standardized s = standardize(t);
  LassoPath path;
  path.features = t.names();
  path.means = s.means;
  path.sds = s.sds;
  path.y_mean = s.y_mean;
  path.lambdas = lambdas;
  std::vector<double> b(s.p, 0.0);
  for (double lambda : lambdas) {
    descend(s, lambda, b, c);
    path.coefficients.push_back(b);
  }
  return path;
}

std::vector<double> checked_lambdas(std::vector<double> lambdas) {
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lasso penalties must be finite and nonnegative");
  std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
  return lambdas;
}

}  // namespace

double LinearModel::coefficient(const std::string& name) const {
  for (std::size_t j = 0; j < features.size(); ++j)
    if (features[j] == name) return coefficients[j];
  throw InputError("model has no coefficient '" + name + "'");
}

std::vector<double> LinearModel::predict(const FeatureTable& table) const {
  std::vector<double> out(table.rows(), intercept);
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (coefficients[j] == 0.0) continue;
    const auto c = table.column(table.column_index(features[j]));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += coefficients[j] * c[i];
  }
  return out;
}

json LinearModel::to_json() const {
  json j;
  j["method"] = method;
  j["features"] = features;
  j["intercept"] = intercept;
  j["coefficients"] = json::object();
  for (std::size_t k = 0; k < features.size(); ++k) j["coefficients"][features[k]] = coefficients[k];
  if (method == "ols") {
    j["intercept_se"] = intercept_se;
    j["std_errors"] = json::object();
    for (std::size_t k = 0; k < features.size(); ++k) j["std_errors"][features[k]] = std_errors[k];
    j["r_squared"] = r_squared;
    j["adj_r_squared"] = adj_r_squared;
    j["residual_sd"] = residual_sd;
    j["rows"] = rows;
  } else {
    j["lambda"] = lambda;
    j["means"] = means;
    j["sds"] = sds;
  }
  return j;
}

LinearModel LinearModel::from_json(const json& j) {
  LinearModel m;
  try {
    m.method = j.at("method").get<std::string>();
    if (m.method != "ols" && m.method != "lasso") throw InputError("unknown linear model method '" + m.method + "'");
    m.features = j.at("features").get<std::vector<std::string>>();
    m.intercept = j.at("intercept").get<double>();
    for (const auto& f : m.features) m.coefficients.push_back(j.at("coefficients").at(f).get<double>());
    if (m.method == "ols") {
      m.intercept_se = j.at("intercept_se").get<double>();
      for (const auto& f : m.features) m.std_errors.push_back(j.at("std_errors").at(f).get<double>());
      m.r_squared = j.at("r_squared").get<double>();
      m.adj_r_squared = j.at("adj_r_squared").get<double>();
      m.residual_sd = j.at("residual_sd").get<double>();
      m.rows = j.at("rows").get<std::size_t>();
    } else {
      m.lambda = j.at("lambda").get<double>();
      m.means = j.at("means").get<std::vector<double>>();
      m.sds = j.at("sds").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed linear model: ") + e.what());
  }
  return m;
}

LinearModel fit_ols(const FeatureTable& train) {
  require_finite(train);
  const std::size_t n = train.rows(), p = train.cols(), k = p + 1;
  if (n <= k)
    throw InputError("least squares needs more rows than coefficients (" + std::to_string(n) + " rows, " +
                     std::to_string(k) + " coefficients)");
  Eigen::MatrixXd x(n, k);
  x.col(0).setOnes();
  for (std::size_t j = 0; j < p; ++j)
    x.col(static_cast<Eigen::Index>(j + 1)) = Eigen::Map<const Eigen::VectorXd>(train.column(j).data(), n);
  const auto yspan = train.outcome();
  const Eigen::Map<const Eigen::VectorXd> y(yspan.data(), n);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  const auto rank = static_cast<std::size_t>(qr.rank());
  auto column_name = [&](Eigen::Index c) { return c == 0 ? std::string("(intercept)") : train.name(c - 1); };
  if (rank < k) {
    // First dependent column expressed through the leading independent ones.
    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
    const auto rk = static_cast<Eigen::Index>(rank);
    const Eigen::VectorXd z =
        r.topLeftCorner(rk, rk).triangularView<Eigen::Upper>().solve(r.block(0, rk, rk, 1));
    const auto& perm = qr.colsPermutation().indices();
    std::vector<Eigen::Index> involved{perm(rk)};
    for (Eigen::Index i = 0; i < rk; ++i)
      if (std::abs(z(i)) > 1e-8) involved.push_back(perm(i));
    std::sort(involved.begin(), involved.end());
    std::string names;
    for (auto c : involved) names += (names.empty() ? "" : ", ") + column_name(c);
    throw InputError("design matrix is rank deficient: columns {" + names + "} are linearly dependent");
  }
  const Eigen::VectorXd beta = qr.solve(Eigen::VectorXd(y));
  const Eigen::VectorXd resid = y - x * beta;
  const double rss = resid.squaredNorm();
  const double ybar = y.mean();
  const double tss = (y.array() - ybar).square().sum();
  const double df = static_cast<double>(n - k);
  const double s2 = rss / df;

  // (X'X)^-1 = P R^-1 R^-T P'.
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
  const Eigen::MatrixXd cov_perm = rinv * rinv.transpose();
  const auto& perm = qr.colsPermutation().indices();
  std::vector<double> var(k);
  for (std::size_t i = 0; i < k; ++i) var[static_cast<std::size_t>(perm(static_cast<Eigen::Index>(i)))] = cov_perm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));

  LinearModel m;
  m.method = "ols";
  m.features = train.names();
  m.intercept = beta(0);
  m.intercept_se = std::sqrt(s2 * var[0]);
  for (std::size_t j = 0; j < p; ++j) {
    m.coefficients.push_back(beta(static_cast<Eigen::Index>(j + 1)));
    m.std_errors.push_back(std::sqrt(s2 * var[j + 1]));
  }
  m.rows = n;
  m.r_squared = tss > 0.0 ? 1.0 - rss / tss : 1.0;
  m.adj_r_squared = 1.0 - (1.0 - m.r_squared) * static_cast<double>(n - 1) / df;
  m.residual_sd = std::sqrt(s2);
  return m;
}

LinearModel LassoPath::model(std::size_t k) const {
  LinearModel m;
  m.method = "lasso";
  m.features = features;
  m.means = means;
  m.sds = sds;
  m.lambda = lambdas.at(k);
  m.intercept = y_mean;
  m.coefficients.assign(features.size(), 0.0);
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (sds[j] == 0.0 || coefficients[k][j] == 0.0) continue;
    m.coefficients[j] = coefficients[k][j] / sds[j];
    m.intercept -= m.coefficients[j] * means[j];
  }
  return m;
}

double lasso_lambda_max(const FeatureTable& train) {
  require_finite(train);
  if (train.rows() == 0) throw InputError("training table is empty");
  const Standardized s = standardize(train);
  return s.p == 0 ? 0.0 : s.xy.cwiseAbs().maxCoeff();
}

LassoPath lasso_path(const FeatureTable& train, const LassoControls& controls) {
  const double lmax = lasso_lambda_max(train);
  const auto lambdas =
      controls.lambdas.empty() ? default_lambdas(lmax, controls) : checked_lambdas(controls.lambdas);
  return solve_path(train, lambdas, controls);
}

LinearModel fit_lasso(const FeatureTable& train, std::uint64_t seed, const LassoControls& controls,
                      LassoCvTrace* trace) {
  const std::size_t n = train.rows();
  const std::size_t folds = controls.folds;
  if (folds < 2) throw ConfigError("lasso cross-validation needs at least 2 folds");
  if (n < folds)
    throw ConfigError("lasso cross-validation needs at least as many rows as folds (" + std::to_string(n) +
                      " < " + std::to_string(folds) + ")");
  const LassoPath full = lasso_path(train, controls);
  const std::size_t L = full.lambdas.size();

  Rng rng = make_rng(seed, {0x1a55});
  const auto perm = random_permutation(n, rng);
  std::vector<std::size_t> fold_of(n);
  for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = i % folds;

  std::vector<std::vector<double>> sse(folds, std::vector<double>(L, 0.0));
  parallel_for(folds, [&](std::size_t f) {
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? out : in).push_back(i);
    const FeatureTable tr = train.select_rows(in);
    const FeatureTable te = train.select_rows(out);
    const LassoPath path = solve_path(tr, full.lambdas, controls);
    const auto y = te.outcome();
    for (std::size_t k = 0; k < L; ++k) {
      const auto pred = path.model(k).predict(te);
      double s = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
      sse[f][k] = s;
    }
  });

  std::vector<double> cv(L, 0.0);
  for (std::size_t k = 0; k < L; ++k) {
    for (std::size_t f = 0; f < folds; ++f) cv[k] += sse[f][k];
    cv[k] /= static_cast<double>(n);
  }
  // Strict improvement required, so ties keep the larger penalty.
  std::size_t best = 0;
  for (std::size_t k = 1; k < L; ++k)
    if (cv[k] < cv[best]) best = k;
  if (trace) {
    trace->lambdas = full.lambdas;
    trace->cv_mse = cv;
    trace->chosen = best;
  }
  return full.model(best);
}

ThresholdDummies threshold_dummies(const FeatureTable& table, const std::string& distance_column, double cutoff,
                                   const std::string& size_column, double size_cutoff) {
  if (!std::isfinite(cutoff) || !std::isfinite(size_cutoff))
    throw ConfigError("threshold cutoffs must be finite");
  const auto d = table.column(table.column_index(distance_column));
  const auto s = table.column(table.column_index(size_column));
  ThresholdDummies out;
  out.near_small.resize(table.rows());
  out.near_large.resize(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const bool near = d[i] < cutoff;
    out.near_small[i] = near && s[i] <= size_cutoff ? 1.0 : 0.0;
    out.near_large[i] = near && s[i] > size_cutoff ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace proxtree
