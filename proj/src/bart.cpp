#include "proxtree/bart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "proxtree/errors.hpp"
#include "proxtree/parallel.hpp"
#include "proxtree/stats.hpp"

namespace proxtree {

using nlohmann::json;

void BartControls::validate() const {
  if (trees < 1) throw ConfigError("BART needs at least one tree");
  if (iterations <= burn_in) throw ConfigError("iterations must exceed burn-in");
  if (thin < 1) throw ConfigError("thin must be at least 1");
  if (retained() < 1) throw ConfigError("no draws would be retained (iterations - burn_in < thin)");
  if (chains < 1) throw ConfigError("chains must be at least 1");
  if (max_cuts < 1) throw ConfigError("max_cuts must be at least 1");
  if (!(hyper.alpha > 0.0 && hyper.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(hyper.beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(hyper.k > 0.0)) throw ConfigError("k must be > 0");
  if (!(hyper.nu > 0.0)) throw ConfigError("nu must be > 0");
  if (!(hyper.q > 0.0 && hyper.q < 1.0)) throw ConfigError("q must lie in (0, 1)");
  double total = 0.0;
  for (double m : moves) {
    if (!(m >= 0.0)) throw ConfigError("move probabilities must be >= 0");
    total += m;
  }
  if (!(total > 0.0) || moves[0] <= 0.0 || moves[1] <= 0.0)
    throw ConfigError("grow and prune probabilities must be positive");
}

std::vector<double> make_cutpoints(std::span<const double> values, std::size_t max_cuts) {
  std::vector<double> u(values.begin(), values.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  std::vector<double> cuts;
  if (u.size() < 2) return cuts;
  if (u.size() - 1 <= max_cuts) {
    for (std::size_t k = 0; k + 1 < u.size(); ++k) {
      double mid = u[k] + (u[k + 1] - u[k]) / 2.0;
      if (mid <= u[k]) mid = u[k + 1];
      cuts.push_back(mid);
    }
    return cuts;
  }
  const double lo = u.front(), hi = u.back();
  for (std::size_t k = 0; k < max_cuts; ++k)
    cuts.push_back(lo + static_cast<double>(k + 1) * (hi - lo) / static_cast<double>(max_cuts + 1));
  return cuts;
}

// ---------------------------------------------------------------------------
// BartModel

void BartModel::append_tree(std::span<const CompactNode> nodes) {
  if (tree_start_.empty()) tree_start_.push_back(0);
  nodes_.insert(nodes_.end(), nodes.begin(), nodes.end());
  tree_start_.push_back(static_cast<std::uint32_t>(nodes_.size()));
}

void BartModel::build_usage() {
  usage_words_ = (features_.size() + 63) / 64;
  const std::size_t total = tree_start_.empty() ? 0 : tree_start_.size() - 1;
  usage_.assign(total * usage_words_, 0);
  for (std::size_t t = 0; t < total; ++t)
    for (std::uint32_t k = tree_start_[t]; k < tree_start_[t + 1]; ++k)
      if (nodes_[k].var >= 0) {
        const auto v = static_cast<std::size_t>(nodes_[k].var);
        usage_[t * usage_words_ + v / 64] |= std::uint64_t{1} << (v % 64);
      }
}

std::span<const CompactNode> BartModel::tree_nodes(std::size_t d, std::size_t t) const {
  const std::size_t id = d * trees_ + t;
  return {nodes_.data() + tree_start_[id], nodes_.data() + tree_start_[id + 1]};
}

bool BartModel::tree_uses(std::size_t d, std::size_t t, std::size_t feature) const {
  return (usage_[(d * trees_ + t) * usage_words_ + feature / 64] >> (feature % 64)) & 1u;
}

namespace {

inline double eval_compact(const CompactNode* nodes, std::span<const double* const> cols, std::size_t row) {
  std::size_t k = 0;
  while (nodes[k].var >= 0) {
    const CompactNode& nd = nodes[k];
    k = cols[static_cast<std::size_t>(nd.var)][row] < nd.value ? k + 1 : static_cast<std::size_t>(nd.right);
  }
  return nodes[k].value;
}

}  // namespace

double BartModel::tree_output(std::size_t d, std::size_t t, std::span<const double* const> cols,
                              std::size_t row) const {
  return eval_compact(nodes_.data() + tree_start_[d * trees_ + t], cols, row);
}

double BartModel::draw_sum(std::size_t d, std::span<const double* const> cols, std::size_t row) const {
  double s = 0.0;
  for (std::size_t t = 0; t < trees_; ++t) s += tree_output(d, t, cols, row);
  return s;
}

std::vector<const double*> BartModel::bind(const FeatureTable& table) const {
  std::vector<bool> used(features_.size(), false);
  for (const auto& nd : nodes_)
    if (nd.var >= 0) used[static_cast<std::size_t>(nd.var)] = true;
  std::vector<const double*> cols(features_.size(), nullptr);
  for (std::size_t j = 0; j < features_.size(); ++j)
    if (used[j]) cols[j] = table.column(table.column_index(features_[j])).data();
  return cols;
}

std::vector<double> BartModel::predict_draws(const FeatureTable& table) const {
  const auto cols = bind(table);
  const std::size_t q = table.rows();
  std::vector<double> out(draw_count_ * q);
  parallel_for(draw_count_, [&](std::size_t d) {
    for (std::size_t i = 0; i < q; ++i) out[d * q + i] = to_outcome(draw_sum(d, cols, i));
  });
  return out;
}

std::vector<double> BartModel::predict_mean(const FeatureTable& table) const {
  const auto draws = predict_draws(table);
  const std::size_t q = table.rows();
  std::vector<double> out(q, 0.0);
  for (std::size_t d = 0; d < draw_count_; ++d)
    for (std::size_t i = 0; i < q; ++i) out[i] += draws[d * q + i];
  for (auto& v : out) v /= static_cast<double>(draw_count_);
  return out;
}

std::vector<double> BartModel::predict_mean_replaced(const FeatureTable& table, std::span<const std::size_t> features,
                                                     std::span<const std::vector<double>> replacement,
                                                     std::span<const double> base_mean) const {
  const std::size_t q = table.rows();
  if (features.size() != replacement.size()) throw ConfigError("replacement column count mismatch");
  if (base_mean.size() != q) throw ConfigError("base prediction length mismatch");
  const auto cols = bind(table);
  auto cols_new = cols;
  std::vector<std::uint64_t> mask(usage_words_, 0);
  for (std::size_t k = 0; k < features.size(); ++k) {
    if (replacement[k].size() != q) throw InputError("replacement column length mismatch");
    cols_new[features[k]] = replacement[k].data();
    mask[features[k] / 64] |= std::uint64_t{1} << (features[k] % 64);
  }
  std::vector<double> per_draw(draw_count_ * q, 0.0);
  parallel_for(draw_count_, [&](std::size_t d) {
    double* delta = per_draw.data() + d * q;
    for (std::size_t t = 0; t < trees_; ++t) {
      const std::uint64_t* use = usage_.data() + (d * trees_ + t) * usage_words_;
      bool hit = false;
      for (std::size_t w = 0; w < usage_words_; ++w) hit |= (use[w] & mask[w]) != 0;
      if (!hit) continue;
      const CompactNode* nodes = nodes_.data() + tree_start_[d * trees_ + t];
      for (std::size_t i = 0; i < q; ++i) delta[i] += eval_compact(nodes, cols_new, i) - eval_compact(nodes, cols, i);
    }
  });
  std::vector<double> out(q, 0.0);
  for (std::size_t d = 0; d < draw_count_; ++d)
    for (std::size_t i = 0; i < q; ++i) out[i] += per_draw[d * q + i];
  for (std::size_t i = 0; i < q; ++i) out[i] = base_mean[i] + scale_ * out[i] / static_cast<double>(draw_count_);
  return out;
}

json BartModel::to_json() const {
  std::vector<std::int32_t> vars, rights;
  std::vector<double> values;
  vars.reserve(nodes_.size());
  rights.reserve(nodes_.size());
  values.reserve(nodes_.size());
  for (const auto& nd : nodes_) {
    vars.push_back(nd.var);
    rights.push_back(nd.right);
    values.push_back(nd.value);
  }
  json moves;
  const char* names[] = {"grow", "prune", "change", "swap"};
  for (std::size_t k = 0; k < 4; ++k)
    moves[names[k]] = {{"proposed", moves_.proposed[k]}, {"accepted", moves_.accepted[k]}};
  return json{{"features", features_},
              {"cutpoints", cuts_},
              {"center", center_},
              {"scale", scale_},
              {"trees", trees_},
              {"draws", draw_count_},
              {"sigma", sigma_},
              {"moves", moves},
              {"tree_start", tree_start_},
              {"node_var", vars},
              {"node_right", rights},
              {"node_value", values}};
}

BartModel BartModel::from_json(const json& j) {
  BartModel m;
  try {
    m.features_ = j.at("features").get<std::vector<std::string>>();
    m.cuts_ = j.at("cutpoints").get<std::vector<std::vector<double>>>();
    m.center_ = j.at("center").get<double>();
    m.scale_ = j.at("scale").get<double>();
    m.trees_ = j.at("trees").get<std::size_t>();
    m.draw_count_ = j.at("draws").get<std::size_t>();
    m.sigma_ = j.at("sigma").get<std::vector<double>>();
    m.tree_start_ = j.at("tree_start").get<std::vector<std::uint32_t>>();
    const auto vars = j.at("node_var").get<std::vector<std::int32_t>>();
    const auto rights = j.at("node_right").get<std::vector<std::int32_t>>();
    const auto values = j.at("node_value").get<std::vector<double>>();
    if (vars.size() != rights.size() || vars.size() != values.size()) throw InputError("node array lengths differ");
    m.nodes_.resize(vars.size());
    for (std::size_t k = 0; k < vars.size(); ++k) m.nodes_[k] = {vars[k], rights[k], values[k]};
    if (j.contains("moves")) {
      const char* names[] = {"grow", "prune", "change", "swap"};
      for (std::size_t k = 0; k < 4; ++k) {
        m.moves_.proposed[k] = j["moves"][names[k]].value("proposed", std::uint64_t{0});
        m.moves_.accepted[k] = j["moves"][names[k]].value("accepted", std::uint64_t{0});
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed BART JSON: ") + e.what());
  }
  if (m.tree_start_.size() != m.draw_count_ * m.trees_ + 1 || m.tree_start_.back() != m.nodes_.size())
    throw InputError("malformed BART JSON: tree offsets");
  for (const auto& nd : m.nodes_)
    if (nd.var >= static_cast<std::int32_t>(m.features_.size())) throw InputError("malformed BART JSON: node var");
  m.build_usage();
  return m;
}

DrawSummary summarize_draws(std::span<const double> draws, std::size_t draw_count, double level) {
  if (draw_count == 0 || draws.size() % draw_count != 0) throw ConfigError("draw matrix shape mismatch");
  const std::size_t q = draws.size() / draw_count;
  DrawSummary s;
  s.mean.assign(q, 0.0);
  s.lower.resize(q);
  s.upper.resize(q);
  std::vector<double> col(draw_count);
  for (std::size_t i = 0; i < q; ++i) {
    double sum = 0.0;
    for (std::size_t d = 0; d < draw_count; ++d) {
      col[d] = draws[d * q + i];
      sum += col[d];
    }
    s.mean[i] = sum / static_cast<double>(draw_count);
    std::sort(col.begin(), col.end());
    s.lower[i] = quantile_sorted(col, level / 2.0);
    s.upper[i] = quantile_sorted(col, 1.0 - level / 2.0);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Sampler

namespace {

struct Node {
  std::int32_t var = -1;
  std::int32_t cut = -1;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t parent = -1;
  std::int32_t depth = 0;
  double mu = 0.0;
  bool live = false;

  bool leaf() const { return var < 0; }
};

struct Tree {
  std::vector<Node> nodes;
  std::vector<std::int32_t> free;

  std::int32_t alloc() {
    std::int32_t id;
    if (!free.empty()) {
      id = free.back();
      free.pop_back();
    } else {
      id = static_cast<std::int32_t>(nodes.size());
      nodes.emplace_back();
    }
    nodes[static_cast<std::size_t>(id)] = Node{};
    nodes[static_cast<std::size_t>(id)].live = true;
    return id;
  }
  void release(std::int32_t id) {
    nodes[static_cast<std::size_t>(id)].live = false;
    free.push_back(id);
  }
  Node& at(std::int32_t id) { return nodes[static_cast<std::size_t>(id)]; }
  const Node& at(std::int32_t id) const { return nodes[static_cast<std::size_t>(id)]; }
};

// Available cut index range [lo, hi] per column in a node's region.
struct Region {
  std::vector<std::int32_t> lo, hi;
};

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

struct BartSampler::State {
  BartControls ctl;
  Rng rng;
  std::size_t n = 0, p = 0;
  std::vector<std::vector<double>> x;
  std::vector<std::vector<std::uint16_t>> pos;  // x < cut[c] <=> pos <= c
  std::vector<std::int32_t> ncut;
  std::vector<double> y;      // scaled outcome
  std::vector<double> resid;  // y - fit (or the partial residual during a tree update)
  std::vector<Tree> trees;
  std::vector<std::vector<std::int32_t>> leaf_of;
  std::vector<std::uint64_t> version;  // bumped when a tree's structure changes
  double sigma2 = 1.0, tau2 = 1.0, lambda = 1.0, sigest = 1.0;
  double move_total = 1.0;
  std::size_t iter = 0;
  MoveCounts counts;
  BartModel templ;

  // Scratch.
  std::vector<std::size_t> cnt, new_cnt, lane_cnt;
  std::vector<double> sum, new_sum, lane_sum;
  std::vector<std::size_t> affected;
  std::vector<std::int32_t> new_leaf;
  std::vector<char> mark;

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

  Region root_region() const {
    Region r;
    r.lo.assign(p, 0);
    r.hi.resize(p);
    for (std::size_t v = 0; v < p; ++v) r.hi[v] = ncut[v] - 1;
    return r;
  }

  Region region_of(const Tree& t, std::int32_t id) const {
    std::vector<std::int32_t> path;
    for (std::int32_t k = id; t.at(k).parent >= 0; k = t.at(k).parent) path.push_back(k);
    Region r = root_region();
    std::int32_t cur = 0;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      const Node& nd = t.at(cur);
      const auto v = static_cast<std::size_t>(nd.var);
      if (*it == nd.left) {
        r.hi[v] = std::min(r.hi[v], nd.cut - 1);
      } else {
        r.lo[v] = std::max(r.lo[v], nd.cut + 1);
      }
      cur = *it;
    }
    return r;
  }

  std::vector<std::size_t> available_vars(const Region& r) const {
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < p; ++v)
      if (r.lo[v] <= r.hi[v]) out.push_back(v);
    return out;
  }

  double split_prob(std::int32_t depth) const {
    return ctl.hyper.alpha * std::pow(1.0 + static_cast<double>(depth), -ctl.hyper.beta);
  }

  double log_prior(const Tree& t, std::int32_t id, const Region& r) const {
    const Node& nd = t.at(id);
    const auto vars = available_vars(r);
    const double ps = vars.empty() ? 0.0 : split_prob(nd.depth);
    if (nd.leaf()) return std::log1p(-ps);
    const auto v = static_cast<std::size_t>(nd.var);
    if (vars.empty() || nd.cut < r.lo[v] || nd.cut > r.hi[v]) return kNegInf;
    double lp = std::log(ps) - std::log(static_cast<double>(vars.size())) -
                std::log(static_cast<double>(r.hi[v] - r.lo[v] + 1));
    Region left = r, right = r;
    left.hi[v] = nd.cut - 1;
    right.lo[v] = nd.cut + 1;
    lp += log_prior(t, nd.left, left);
    if (lp == kNegInf) return lp;
    return lp + log_prior(t, nd.right, right);
  }

  double leaf_ll(std::size_t count, double s) const {
    if (ctl.sample_prior_only) return 0.0;
    const double nt = static_cast<double>(count) * tau2;
    return 0.5 * std::log(sigma2 / (sigma2 + nt)) + tau2 * s * s / (2.0 * sigma2 * (sigma2 + nt));
  }

  void collect_leaves(const Tree& t, std::int32_t id, std::vector<std::int32_t>& out) const {
    const Node& nd = t.at(id);
    if (nd.leaf()) {
      out.push_back(id);
      return;
    }
    collect_leaves(t, nd.left, out);
    collect_leaves(t, nd.right, out);
  }

  std::int32_t route(const Tree& t, std::int32_t id, std::size_t row) const {
    while (!t.at(id).leaf()) {
      const Node& nd = t.at(id);
      id = pos[static_cast<std::size_t>(nd.var)][row] <= static_cast<std::uint16_t>(nd.cut) ? nd.left : nd.right;
    }
    return id;
  }

  std::vector<std::int32_t> leaves(const Tree& t) const {
    std::vector<std::int32_t> out;
    collect_leaves(t, 0, out);
    return out;
  }

  // Internal nodes whose children are both leaves.
  std::vector<std::int32_t> nog(const Tree& t) const {
    std::vector<std::int32_t> out;
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      const Node& nd = t.nodes[k];
      if (nd.live && !nd.leaf() && t.at(nd.left).leaf() && t.at(nd.right).leaf())
        out.push_back(static_cast<std::int32_t>(k));
    }
    return out;
  }

  std::vector<std::int32_t> good_leaves(const Tree& t) const {
    std::vector<std::int32_t> out;
    for (auto id : leaves(t))
      if (!available_vars(region_of(t, id)).empty()) out.push_back(id);
    return out;
  }

  double pi_grow(const Tree& t) const { return t.at(0).leaf() ? 1.0 : ctl.moves[0] / move_total; }
  double pi_prune(const Tree& t) const { return t.at(0).leaf() ? 0.0 : ctl.moves[1] / move_total; }

  struct Proposal {
    bool valid = false;
    BartMove move = BartMove::grow;
    Tree tree;
    std::int32_t at = 0;        // root of the changed subtree
    double log_q_ratio = 0.0;   // log q(T* -> T) - log q(T -> T*)
  };

  Proposal propose(const Tree& t) {
    Proposal pr;
    BartMove move = BartMove::grow;
    if (!t.at(0).leaf()) {
      double u = uniform() * move_total;
      std::size_t k = 0;
      while (k < 3 && u >= ctl.moves[k]) u -= ctl.moves[k++];
      move = static_cast<BartMove>(k);
    }
    pr.move = move;
    switch (move) {
      case BartMove::grow: {
        const auto good = good_leaves(t);
        if (good.empty()) return pr;
        const std::int32_t id = good[uniform_index(good.size(), rng)];
        const Region r = region_of(t, id);
        const auto vars = available_vars(r);
        const std::size_t v = vars[uniform_index(vars.size(), rng)];
        const auto span = static_cast<std::size_t>(r.hi[v] - r.lo[v] + 1);
        const auto c = r.lo[v] + static_cast<std::int32_t>(uniform_index(span, rng));
        pr.tree = t;
        Tree& s = pr.tree;
        const std::int32_t l = s.alloc();
        const std::int32_t rr = s.alloc();
        for (auto child : {l, rr}) {
          s.at(child).parent = id;
          s.at(child).depth = s.at(id).depth + 1;
        }
        s.at(id).var = static_cast<std::int32_t>(v);
        s.at(id).cut = c;
        s.at(id).left = l;
        s.at(id).right = rr;
        pr.at = id;
        const double fwd = std::log(pi_grow(t)) - std::log(static_cast<double>(good.size())) -
                           std::log(static_cast<double>(vars.size())) - std::log(static_cast<double>(span));
        const double rev = std::log(pi_prune(s)) - std::log(static_cast<double>(nog(s).size()));
        pr.log_q_ratio = rev - fwd;
        pr.valid = true;
        return pr;
      }
      case BartMove::prune: {
        const auto cand = nog(t);
        const std::int32_t id = cand[uniform_index(cand.size(), rng)];
        pr.tree = t;
        Tree& s = pr.tree;
        const Node old = s.at(id);
        s.release(old.left);
        s.release(old.right);
        s.at(id).var = -1;
        s.at(id).cut = -1;
        s.at(id).left = s.at(id).right = -1;
        pr.at = id;
        const Region r = region_of(t, id);
        const auto vars = available_vars(r);
        const auto v = static_cast<std::size_t>(old.var);
        const double fwd = std::log(pi_prune(t)) - std::log(static_cast<double>(cand.size()));
        const double rev = std::log(pi_grow(s)) - std::log(static_cast<double>(good_leaves(s).size())) -
                           std::log(static_cast<double>(vars.size())) -
                           std::log(static_cast<double>(r.hi[v] - r.lo[v] + 1));
        pr.log_q_ratio = rev - fwd;
        pr.valid = true;
        return pr;
      }
      case BartMove::change: {
        const auto cand = nog(t);
        const std::int32_t id = cand[uniform_index(cand.size(), rng)];
        const Region r = region_of(t, id);
        const auto vars = available_vars(r);
        const std::size_t v = vars[uniform_index(vars.size(), rng)];
        const auto span = static_cast<std::size_t>(r.hi[v] - r.lo[v] + 1);
        const auto c = r.lo[v] + static_cast<std::int32_t>(uniform_index(span, rng));
        const auto v_old = static_cast<std::size_t>(t.at(id).var);
        pr.tree = t;
        pr.tree.at(id).var = static_cast<std::int32_t>(v);
        pr.tree.at(id).cut = c;
        pr.at = id;
        pr.log_q_ratio = std::log(static_cast<double>(span)) -
                         std::log(static_cast<double>(r.hi[v_old] - r.lo[v_old] + 1));
        pr.valid = true;
        return pr;
      }
      case BartMove::swap: {
        std::vector<std::int32_t> parents;
        for (std::size_t k = 0; k < t.nodes.size(); ++k) {
          const Node& nd = t.nodes[k];
          if (nd.live && !nd.leaf() && (!t.at(nd.left).leaf() || !t.at(nd.right).leaf()))
            parents.push_back(static_cast<std::int32_t>(k));
        }
        if (parents.empty()) return pr;
        const std::int32_t id = parents[uniform_index(parents.size(), rng)];
        const Node& P = t.at(id);
        std::vector<std::int32_t> kids;
        if (!t.at(P.left).leaf()) kids.push_back(P.left);
        if (!t.at(P.right).leaf()) kids.push_back(P.right);
        const std::int32_t child = kids[uniform_index(kids.size(), rng)];
        auto same_rule = [](const Node& a, const Node& b) { return a.var == b.var && a.cut == b.cut; };
        const bool twins = kids.size() == 2 && same_rule(t.at(P.left), t.at(P.right));
        pr.tree = t;
        Tree& s = pr.tree;
        auto swap_rule = [](Node& a, Node& b) {
          std::swap(a.var, b.var);
          std::swap(a.cut, b.cut);
        };
        if (twins) {
          const Node kid = s.at(P.left);
          s.at(P.right).var = s.at(P.left).var = s.at(id).var;
          s.at(P.right).cut = s.at(P.left).cut = s.at(id).cut;
          s.at(id).var = kid.var;
          s.at(id).cut = kid.cut;
        } else {
          swap_rule(s.at(id), s.at(child));
          // The reverse move would treat equal children as twins and swap
          // both; such a proposal has no reverse, so it is rejected.
          const Node& a = s.at(s.at(id).left);
          const Node& b = s.at(s.at(id).right);
          if (!a.leaf() && !b.leaf() && same_rule(a, b)) return pr;
        }
        pr.at = id;
        pr.log_q_ratio = 0.0;
        pr.valid = true;
        return pr;
      }
    }
    return pr;
  }

  // Rows still carry the output of the previously updated tree `prev` in
  // resid; it is removed in the same pass that adds back tree j.
  void update_tree(std::size_t j, std::ptrdiff_t prev) {
    Tree& t = trees[j];
    auto& lo = leaf_of[j];

    Proposal pr = propose(t);
    const auto mi = static_cast<std::size_t>(pr.move);
    ++counts.proposed[mi];
    std::vector<std::int32_t> old_leaves, new_leaves;
    if (pr.valid) {
      collect_leaves(t, pr.at, old_leaves);
      collect_leaves(pr.tree, pr.at, new_leaves);
    }
    mark.assign(t.nodes.size(), 0);
    for (auto id : old_leaves) mark[static_cast<std::size_t>(id)] = 1;
    new_cnt.assign(pr.valid ? pr.tree.nodes.size() : 0, 0);
    new_sum.assign(new_cnt.size(), 0.0);
    affected.clear();
    // Leaf totals accumulate in four interleaved lanes to shorten the
    // dependency chain through sum[id].
    lane_cnt.assign(4 * t.nodes.size(), 0);
    lane_sum.assign(4 * t.nodes.size(), 0.0);

    const Tree* pt = prev >= 0 ? &trees[static_cast<std::size_t>(prev)] : nullptr;
    const std::int32_t* plo = prev >= 0 ? leaf_of[static_cast<std::size_t>(prev)].data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      if (pt) resid[i] -= pt->nodes[static_cast<std::size_t>(plo[i])].mu;
      const auto id = static_cast<std::size_t>(lo[i]);
      resid[i] += t.nodes[id].mu;
      ++lane_cnt[4 * id + (i & 3)];
      lane_sum[4 * id + (i & 3)] += resid[i];
      if (mark[id]) {
        const std::int32_t leaf = route(pr.tree, pr.at, i);
        affected.push_back(i);
        new_leaf[i] = leaf;
        ++new_cnt[static_cast<std::size_t>(leaf)];
        new_sum[static_cast<std::size_t>(leaf)] += resid[i];
      }
    }

    cnt.resize(t.nodes.size());
    sum.resize(t.nodes.size());
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      const std::size_t* c = &lane_cnt[4 * k];
      const double* v = &lane_sum[4 * k];
      cnt[k] = c[0] + c[1] + c[2] + c[3];
      sum[k] = (v[0] + v[1]) + (v[2] + v[3]);
    }

    if (pr.valid) {
      const Tree& s = pr.tree;
      bool ok = true;
      if (!ctl.sample_prior_only)
        for (auto id : new_leaves)
          if (new_cnt[static_cast<std::size_t>(id)] < ctl.min_leaf) ok = false;
      if (ok) {
        const Region r = region_of(t, pr.at);
        const double lp_new = log_prior(s, pr.at, r);
        if (lp_new != kNegInf) {
          const double lp_old = log_prior(t, pr.at, r);
          double ll = 0.0;
          for (auto id : new_leaves) ll += leaf_ll(new_cnt[static_cast<std::size_t>(id)], new_sum[static_cast<std::size_t>(id)]);
          for (auto id : old_leaves) ll -= leaf_ll(cnt[static_cast<std::size_t>(id)], sum[static_cast<std::size_t>(id)]);
          const double log_ratio = lp_new - lp_old + ll + pr.log_q_ratio;
          if (std::log(uniform()) < log_ratio) {
            ++counts.accepted[mi];
            ++version[j];
            t = std::move(pr.tree);
            cnt.resize(t.nodes.size(), 0);
            sum.resize(t.nodes.size(), 0.0);
            for (auto id : new_leaves) {
              cnt[static_cast<std::size_t>(id)] = new_cnt[static_cast<std::size_t>(id)];
              sum[static_cast<std::size_t>(id)] = new_sum[static_cast<std::size_t>(id)];
            }
            for (std::size_t i : affected) lo[i] = new_leaf[i];
          }
        }
      }
    }

    std::normal_distribution<double> std_normal(0.0, 1.0);
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      Node& nd = t.nodes[k];
      if (!nd.live || !nd.leaf()) continue;
      if (ctl.sample_prior_only) {
        nd.mu = std::sqrt(tau2) * std_normal(rng);
        continue;
      }
      const double prec = static_cast<double>(cnt[k]) / sigma2 + 1.0 / tau2;
      nd.mu = (sum[k] / sigma2) / prec + std_normal(rng) / std::sqrt(prec);
    }
  }

  // Removes the last updated tree's output from resid.
  void settle(std::size_t j) {
    const Tree& t = trees[j];
    const auto& lo = leaf_of[j];
    for (std::size_t i = 0; i < n; ++i) resid[i] -= t.nodes[static_cast<std::size_t>(lo[i])].mu;
  }

  void sweep() {
    for (std::size_t j = 0; j < trees.size(); ++j) update_tree(j, static_cast<std::ptrdiff_t>(j) - 1);
    settle(trees.size() - 1);
    if (!ctl.sample_prior_only) {
      double ssr = 0.0;
      for (double r : resid) ssr += r * r;
      std::chi_squared_distribution<double> chi(ctl.hyper.nu + static_cast<double>(n));
      sigma2 = (ctl.hyper.nu * lambda + ssr) / chi(rng);
    }
    ++iter;
  }

  void append_compact(const Tree& t, std::int32_t id, std::vector<CompactNode>& out) const {
    const Node& nd = t.at(id);
    const std::size_t me = out.size();
    out.push_back({});
    if (nd.leaf()) {
      out[me] = {-1, 0, nd.mu};
      return;
    }
    append_compact(t, nd.left, out);
    const auto right = static_cast<std::int32_t>(out.size());
    append_compact(t, nd.right, out);
    out[me] = {nd.var, right, templ.cuts_[static_cast<std::size_t>(nd.var)][static_cast<std::size_t>(nd.cut)]};
  }
};

BartSampler::BartSampler(const FeatureTable& train, const BartControls& controls, std::uint64_t seed)
    : s_(std::make_unique<State>()) {
  controls.validate();
  if (!train.has_outcome()) throw InputError("training table has no outcome column");
  State& s = *s_;
  s.ctl = controls;
  s.rng = Rng(seed);
  s.n = train.rows();
  s.p = train.cols();
  if (s.n < 10) throw ConfigError("BART needs at least 10 training rows, got " + std::to_string(s.n));
  if (s.p == 0) throw ConfigError("BART needs at least one feature column");
  const auto y = train.outcome();
  for (double v : y)
    if (!std::isfinite(v)) throw InputError("non-finite outcome value");
  for (std::size_t j = 0; j < s.p; ++j)
    for (double v : train.column(j))
      if (!std::isfinite(v)) throw InputError("non-finite value in column '" + train.name(j) + "'");
  s.move_total = controls.moves[0] + controls.moves[1] + controls.moves[2] + controls.moves[3];

  // Outcome scaled to [-0.5, 0.5] around the midrange.
  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  s.templ.center_ = (*mn + *mx) / 2.0;
  s.templ.scale_ = *mx > *mn ? *mx - *mn : 1.0;
  s.y.resize(s.n);
  for (std::size_t i = 0; i < s.n; ++i) s.y[i] = (y[i] - s.templ.center_) / s.templ.scale_;

  s.templ.features_ = train.names();
  s.templ.trees_ = controls.trees;
  s.x.resize(s.p);
  s.pos.resize(s.p);
  s.ncut.resize(s.p);
  for (std::size_t v = 0; v < s.p; ++v) {
    const auto col = train.column(v);
    s.x[v].assign(col.begin(), col.end());
    s.templ.cuts_.push_back(make_cutpoints(col, controls.max_cuts));
    const auto& cuts = s.templ.cuts_.back();
    s.ncut[v] = static_cast<std::int32_t>(cuts.size());
    s.pos[v].resize(s.n);
    for (std::size_t i = 0; i < s.n; ++i)
      s.pos[v][i] = static_cast<std::uint16_t>(std::upper_bound(cuts.begin(), cuts.end(), col[i]) - cuts.begin());
  }

  // Residual scale estimate from a least-squares fit, else the outcome SD.
  double est = 0.0;
  if (s.n > s.p + 1) {
    Eigen::MatrixXd X(s.n, s.p + 1);
    Eigen::VectorXd yy(s.n);
    for (std::size_t i = 0; i < s.n; ++i) {
      X(static_cast<Eigen::Index>(i), 0) = 1.0;
      for (std::size_t v = 0; v < s.p; ++v) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v + 1)) = s.x[v][i];
      yy(static_cast<Eigen::Index>(i)) = s.y[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    const Eigen::VectorXd beta = qr.solve(yy);
    const double ssr = (yy - X * beta).squaredNorm();
    est = std::sqrt(ssr / static_cast<double>(s.n - static_cast<std::size_t>(qr.rank())));
  } else {
    est = std::sqrt(variance(s.y));
  }
  s.sigest = std::max(est, 1e-6);
  const auto& h = controls.hyper;
  const double qchi = boost::math::quantile(boost::math::chi_squared(h.nu), 1.0 - h.q);
  s.lambda = s.sigest * s.sigest * qchi / h.nu;
  s.sigma2 = s.sigest * s.sigest;
  s.tau2 = std::pow(0.5 / (h.k * std::sqrt(static_cast<double>(controls.trees))), 2.0);

  const double ybar = mean(s.y);
  s.trees.resize(controls.trees);
  for (auto& t : s.trees) {
    t.alloc();
    t.nodes[0].mu = ybar / static_cast<double>(controls.trees);
  }
  s.leaf_of.assign(controls.trees, std::vector<std::int32_t>(s.n, 0));
  s.version.assign(controls.trees, 0);
  s.resid.resize(s.n);
  for (std::size_t i = 0; i < s.n; ++i) s.resid[i] = s.y[i] - ybar;
  s.new_leaf.resize(s.n);
}

BartSampler::~BartSampler() = default;
BartSampler::BartSampler(BartSampler&&) noexcept = default;
BartSampler& BartSampler::operator=(BartSampler&&) noexcept = default;

void BartSampler::step() { s_->sweep(); }
std::size_t BartSampler::iteration() const { return s_->iter; }
double BartSampler::sigma() const { return std::sqrt(s_->sigma2); }
double BartSampler::tau() const { return std::sqrt(s_->tau2); }
double BartSampler::lambda() const { return s_->lambda; }
double BartSampler::sigma_estimate() const { return s_->sigest; }
std::size_t BartSampler::tree_count() const { return s_->trees.size(); }
const MoveCounts& BartSampler::move_counts() const { return s_->counts; }
const BartModel& BartSampler::model_template() const { return s_->templ; }

std::vector<double> BartSampler::fitted() const {
  std::vector<double> f(s_->n);
  for (std::size_t i = 0; i < s_->n; ++i) f[i] = s_->y[i] - s_->resid[i];
  return f;
}

std::vector<double> BartSampler::tree_fit(std::size_t t) const {
  const State& s = *s_;
  const Tree& tree = s.trees.at(t);
  std::vector<double> out(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    std::int32_t id = 0;
    while (!tree.at(id).leaf()) {
      const Node& nd = tree.at(id);
      const auto v = static_cast<std::size_t>(nd.var);
      id = s.x[v][i] < s.templ.cuts_[v][static_cast<std::size_t>(nd.cut)] ? nd.left : nd.right;
    }
    out[i] = tree.at(id).mu;
  }
  return out;
}

std::vector<std::pair<std::size_t, bool>> BartSampler::node_depths(std::size_t t) const {
  std::vector<std::pair<std::size_t, bool>> out;
  for (const auto& nd : s_->trees.at(t).nodes)
    if (nd.live) out.push_back({static_cast<std::size_t>(nd.depth), !nd.leaf()});
  return out;
}

std::size_t BartSampler::tree_depth(std::size_t t) const {
  std::size_t d = 0;
  for (const auto& [depth, internal] : node_depths(t)) d = std::max(d, depth);
  return d;
}

std::vector<CompactNode> BartSampler::compact_tree(std::size_t t) const {
  std::vector<CompactNode> out;
  s_->append_compact(s_->trees.at(t), 0, out);
  return out;
}

BartModel BartSampler::snapshot() const {
  BartModel m = s_->templ;
  m.draw_count_ = 1;
  for (std::size_t t = 0; t < s_->trees.size(); ++t) m.append_tree(compact_tree(t));
  m.sigma_.push_back(sigma() * m.scale_);
  m.moves_ = s_->counts;
  m.build_usage();
  return m;
}

struct BartFitter {
  static void run_chain(BartSampler& sampler, const FeatureTable* query, BartModel& out,
                        std::vector<double>& query_draws) {
    const BartControls& ctl = sampler.s_->ctl;
    out = sampler.s_->templ;
    std::vector<const double*> qcols;
    if (query) {
      qcols.resize(out.features_.size());
      for (std::size_t j = 0; j < out.features_.size(); ++j)
        qcols[j] = query->column(query->column_index(out.features_[j])).data();
    }
    std::vector<CompactNode> buf;
    std::vector<double> row_sum;
    const std::size_t trees = sampler.s_->trees.size();
    std::vector<std::vector<std::int32_t>> qleaf(trees, std::vector<std::int32_t>(query ? query->rows() : 0, 0));
    // Every tree starts as a root leaf, so leaf 0 is right for version 0.
    std::vector<std::uint64_t> qversion(trees, 0);
    for (std::size_t it = 0; it < ctl.iterations; ++it) {
      sampler.step();
      if (it < ctl.burn_in || (it - ctl.burn_in + 1) % ctl.thin != 0) continue;
      for (std::size_t t = 0; t < sampler.s_->trees.size(); ++t) {
        buf.clear();
        sampler.s_->append_compact(sampler.s_->trees[t], 0, buf);
        out.append_tree(buf);
      }
      out.sigma_.push_back(sampler.sigma() * out.scale_);
      ++out.draw_count_;
      if (query) {
        // Query rows keep their leaf per tree; routes are recomputed only for
        // trees whose structure changed since the last retained draw.
        const auto& st = *sampler.s_;
        const std::size_t q = query->rows();
        for (std::size_t t = 0; t < st.trees.size(); ++t) {
          if (qversion[t] == st.version[t]) continue;
          qversion[t] = st.version[t];
          const Tree& tree = st.trees[t];
          for (std::size_t i = 0; i < q; ++i) {
            std::int32_t id = 0;
            while (!tree.at(id).leaf()) {
              const Node& nd = tree.at(id);
              const auto v = static_cast<std::size_t>(nd.var);
              id = qcols[v][i] < out.cuts_[v][static_cast<std::size_t>(nd.cut)] ? nd.left : nd.right;
            }
            qleaf[t][i] = id;
          }
        }
        row_sum.assign(q, 0.0);
        for (std::size_t t = 0; t < st.trees.size(); ++t) {
          const Tree& tree = st.trees[t];
          const std::int32_t* ql = qleaf[t].data();
          for (std::size_t i = 0; i < q; ++i) row_sum[i] += tree.at(ql[i]).mu;
        }
        for (std::size_t i = 0; i < q; ++i) query_draws.push_back(out.to_outcome(row_sum[i]));
      }
    }
    out.moves_ = sampler.s_->counts;
  }

  static BartModel merge(const std::vector<BartModel>& parts) {
    BartModel m = parts[0];
    for (std::size_t c = 1; c < parts.size(); ++c) {
      const BartModel& part = parts[c];
      const auto offset = static_cast<std::uint32_t>(m.nodes_.size());
      m.nodes_.insert(m.nodes_.end(), part.nodes_.begin(), part.nodes_.end());
      for (std::size_t k = 1; k < part.tree_start_.size(); ++k) m.tree_start_.push_back(part.tree_start_[k] + offset);
      m.sigma_.insert(m.sigma_.end(), part.sigma_.begin(), part.sigma_.end());
      m.draw_count_ += part.draw_count_;
      for (std::size_t k = 0; k < 4; ++k) {
        m.moves_.proposed[k] += part.moves_.proposed[k];
        m.moves_.accepted[k] += part.moves_.accepted[k];
      }
    }
    m.build_usage();
    return m;
  }
};

BartResult fit_bart(const FeatureTable& train, const BartControls& controls, std::uint64_t seed,
                    const FeatureTable* query) {
  controls.validate();
  std::vector<BartModel> parts(controls.chains);
  std::vector<std::vector<double>> qdraws(controls.chains);
  parallel_for(controls.chains, [&](std::size_t c) {
    BartSampler sampler(train, controls, derive_seed(seed, {c}));
    BartFitter::run_chain(sampler, query, parts[c], qdraws[c]);
  });

  BartResult r;
  r.model = BartFitter::merge(parts);
  if (query) {
    r.query_rows = query->rows();
    for (auto& qd : qdraws) r.query_draws.insert(r.query_draws.end(), qd.begin(), qd.end());
  }
  return r;
}

}  // namespace proxtree
