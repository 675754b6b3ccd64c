#include "proxtree/cart.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "proxtree/errors.hpp"
#include "proxtree/parallel.hpp"

namespace proxtree {

using nlohmann::json;

namespace {

// Relative margin (of the node SSE) a candidate must beat the incumbent by.
// Keeps selection stable against rounding in the SSE arithmetic.
constexpr double kGainTol = 1e-10;

}  // namespace

void TreeControls::validate() const {
  if (min_leaf < 1) throw ConfigError("min_leaf must be at least 1");
  if (min_split < 2) throw ConfigError("min_split must be at least 2");
  if (!(cp >= 0.0) || !std::isfinite(cp)) throw ConfigError("cp must be a finite value >= 0");
}

RegressionTree::RegressionTree(std::vector<std::string> features, std::vector<TreeNode> nodes)
    : features_(std::move(features)), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw InputError("tree has no nodes");
  for (const auto& nd : nodes_) {
    if (nd.is_leaf()) continue;
    if (static_cast<std::size_t>(nd.feature) >= features_.size() || nd.left <= 0 || nd.right <= 0 ||
        static_cast<std::size_t>(nd.left) >= nodes_.size() || static_cast<std::size_t>(nd.right) >= nodes_.size())
      throw InputError("malformed tree node");
  }
  // Canonical preorder numbering, so equal trees compare equal whatever
  // order they were built in.
  std::vector<TreeNode> ordered;
  ordered.reserve(nodes_.size());
  std::vector<std::pair<std::size_t, std::int32_t*>> stack{{0, nullptr}};
  while (!stack.empty()) {
    auto [src, slot] = stack.back();
    stack.pop_back();
    if (ordered.size() >= nodes_.size()) throw InputError("malformed tree: node reached twice");
    if (slot) *slot = static_cast<std::int32_t>(ordered.size());
    ordered.push_back(nodes_[src]);
    const TreeNode& nd = nodes_[src];
    if (nd.is_leaf()) continue;
    // Pointers into `ordered` stay valid because of the reserve above.
    TreeNode& placed = ordered.back();
    stack.push_back({static_cast<std::size_t>(nd.right), &placed.right});
    stack.push_back({static_cast<std::size_t>(nd.left), &placed.left});
  }
  nodes_ = std::move(ordered);
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t best = 0;
  // Children always follow their parent in the node vector.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes_[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

double RegressionTree::training_sse() const {
  double s = 0.0;
  for (const auto& nd : nodes_)
    if (nd.is_leaf()) s += nd.sse;
  return s;
}

std::vector<std::size_t> RegressionTree::used_features() const {
  std::vector<std::size_t> out;
  for (const auto& nd : nodes_)
    if (!nd.is_leaf()) out.push_back(static_cast<std::size_t>(nd.feature));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t RegressionTree::leaf_for(std::span<const double* const> cols, std::size_t row) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& nd = nodes_[i];
    i = static_cast<std::size_t>(cols[static_cast<std::size_t>(nd.feature)][row] < nd.threshold ? nd.left
                                                                                               : nd.right);
  }
  return i;
}

std::vector<const double*> RegressionTree::bind(const FeatureTable& table) const {
  std::vector<const double*> cols(features_.size(), nullptr);
  for (std::size_t j : used_features()) cols[j] = table.column(table.column_index(features_[j])).data();
  return cols;
}

std::vector<double> RegressionTree::predict(const FeatureTable& table) const {
  const auto cols = bind(table);
  std::vector<double> out(table.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = predict_one(cols, i);
  return out;
}

namespace {

json node_to_json(const RegressionTree& t, std::size_t i) {
  const TreeNode& nd = t.nodes()[i];
  json j;
  if (!nd.is_leaf()) {
    j["column"] = t.features()[static_cast<std::size_t>(nd.feature)];
    j["threshold"] = nd.threshold;
  }
  j["mean"] = nd.mean;
  j["n"] = nd.n;
  j["sse"] = nd.sse;
  if (!nd.is_leaf()) {
    j["left"] = node_to_json(t, static_cast<std::size_t>(nd.left));
    j["right"] = node_to_json(t, static_cast<std::size_t>(nd.right));
  }
  return j;
}

std::int32_t node_from_json(const json& j, const std::vector<std::string>& features,
                            std::vector<TreeNode>& nodes) {
  const auto id = static_cast<std::int32_t>(nodes.size());
  nodes.emplace_back();
  TreeNode nd;
  nd.mean = j.at("mean").get<double>();
  nd.n = j.at("n").get<std::size_t>();
  nd.sse = j.value("sse", 0.0);
  if (j.contains("column")) {
    const auto name = j.at("column").get<std::string>();
    auto it = std::find(features.begin(), features.end(), name);
    if (it == features.end()) throw InputError("tree splits on unknown column '" + name + "'");
    nd.feature = static_cast<std::int32_t>(it - features.begin());
    nd.threshold = j.at("threshold").get<double>();
    nd.left = node_from_json(j.at("left"), features, nodes);
    nd.right = node_from_json(j.at("right"), features, nodes);
  }
  nodes[static_cast<std::size_t>(id)] = nd;
  return id;
}

}  // namespace

json RegressionTree::to_json() const {
  return json{{"features", features_}, {"cp", cp}, {"alpha", alpha}, {"root", node_to_json(*this, 0)}};
}

RegressionTree RegressionTree::from_json(const json& j) {
  try {
    auto features = j.at("features").get<std::vector<std::string>>();
    std::vector<TreeNode> nodes;
    node_from_json(j.at("root"), features, nodes);
    RegressionTree t(std::move(features), std::move(nodes));
    t.cp = j.value("cp", 0.0);
    t.alpha = j.value("alpha", 0.0);
    return t;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed tree JSON: ") + e.what());
  }
}

bool operator==(const RegressionTree& a, const RegressionTree& b) {
  if (a.features_ != b.features_ || a.nodes_.size() != b.nodes_.size()) return false;
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    const auto& x = a.nodes_[i];
    const auto& y = b.nodes_[i];
    if (x.feature != y.feature || x.left != y.left || x.right != y.right || x.n != y.n ||
        x.mean != y.mean || x.sse != y.sse || (!x.is_leaf() && x.threshold != y.threshold))
      return false;
  }
  return a.cp == b.cp && a.alpha == b.alpha;
}

namespace {

struct Candidate {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t n_left = 0;
};

// Rows of the sample are addressed by position 0..m-1. Each node owns the
// range [begin, end) of every per-column sorted position list (and of the
// original-order list), so splitting is a stable partition of those ranges.
class Builder {
 public:
  Builder(std::span<const double* const> cols, std::span<const double> y,
          std::span<const std::size_t> sample, const GrowOptions& opt)
      : opt_(opt), p_(cols.size()), m_(sample.size()) {
    x_.resize(p_);
    for (std::size_t j = 0; j < p_; ++j) {
      x_[j].resize(m_);
      for (std::size_t k = 0; k < m_; ++k) x_[j][k] = cols[j][sample[k]];
    }
    y_.resize(m_);
    for (std::size_t k = 0; k < m_; ++k) y_[k] = y[sample[k]];
    order_.resize(m_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    sorted_.resize(p_);
    for (std::size_t j = 0; j < p_; ++j) {
      sorted_[j] = order_;
      const auto& xj = x_[j];
      std::stable_sort(sorted_[j].begin(), sorted_[j].end(),
                       [&](std::size_t a, std::size_t b) { return xj[a] < xj[b]; });
    }
    go_left_.assign(m_, 0);
    scratch_.resize(m_);
    cand_.resize(p_);
    std::iota(cand_.begin(), cand_.end(), std::size_t{0});
  }

  std::vector<TreeNode> run() {
    struct Pending {
      double gain;
      std::size_t node;
    };
    auto worse = [](const Pending& a, const Pending& b) {
      if (a.gain != b.gain) return a.gain < b.gain;
      return a.node > b.node;
    };
    std::priority_queue<Pending, std::vector<Pending>, decltype(worse)> frontier(worse);

    nodes_.push_back(make_node(0, m_));
    ranges_.push_back({0, m_});
    root_sse_ = nodes_[0].sse;
    best_.push_back(evaluate(0));
    if (best_[0].found) frontier.push({best_[0].gain, 0});

    std::size_t splits = 0;
    const auto limit = opt_.controls.max_splits.value_or(std::numeric_limits<std::size_t>::max());
    while (!frontier.empty() && splits < limit) {
      const std::size_t id = frontier.top().node;
      frontier.pop();
      split(id);
      ++splits;
      for (auto child : {nodes_[id].left, nodes_[id].right}) {
        const auto c = static_cast<std::size_t>(child);
        if (best_[c].found) frontier.push({best_[c].gain, c});
      }
    }
    return std::move(nodes_);
  }

 private:
  TreeNode make_node(std::size_t begin, std::size_t end) const {
    TreeNode nd;
    nd.n = end - begin;
    double s = 0.0;
    for (std::size_t k = begin; k < end; ++k) s += y_[order_[k]];
    nd.mean = s / static_cast<double>(nd.n);
    double sse = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const double d = y_[order_[k]] - nd.mean;
      sse += d * d;
    }
    nd.sse = sse;
    return nd;
  }

  Candidate evaluate(std::size_t id) {
    const TreeNode& nd = nodes_[id];
    const auto [begin, end] = ranges_[id];
    const std::size_t n = end - begin;
    const auto& ctl = opt_.controls;
    Candidate best;
    if (n < ctl.min_split || n < 2 * ctl.min_leaf || nd.sse <= 0.0) return best;

    if (opt_.mtry > 0 && opt_.mtry < p_) {
      // Partial Fisher-Yates for mtry distinct columns, scanned in column order.
      std::iota(cand_.begin(), cand_.end(), std::size_t{0});
      for (std::size_t t = 0; t < opt_.mtry; ++t) std::swap(cand_[t], cand_[t + uniform_index(p_ - t, *opt_.rng)]);
      std::sort(cand_.begin(), cand_.begin() + static_cast<std::ptrdiff_t>(opt_.mtry));
    }
    const std::size_t n_cand = (opt_.mtry > 0 && opt_.mtry < p_) ? opt_.mtry : p_;

    const double mean = nd.mean;
    double total = 0.0;
    for (std::size_t k = begin; k < end; ++k) total += y_[order_[k]] - mean;
    const double nd_n = static_cast<double>(n);
    const double base = total * total / nd_n;
    const double margin = kGainTol * nd.sse;
    double best_gain = margin;

    for (std::size_t c = 0; c < n_cand; ++c) {
      const std::size_t j = cand_[c];
      const auto& xj = x_[j];
      const auto& sj = sorted_[j];
      if (xj[sj[begin]] == xj[sj[end - 1]]) continue;
      double left_sum = 0.0;
      for (std::size_t k = begin; k + 1 < end; ++k) {
        left_sum += y_[sj[k]] - mean;
        const std::size_t nl = k - begin + 1;
        const std::size_t nr = n - nl;
        if (nl < ctl.min_leaf) continue;
        if (nr < ctl.min_leaf) break;
        const double a = xj[sj[k]];
        const double b = xj[sj[k + 1]];
        if (!(a < b)) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - base;
        if (gain > best_gain + (best.found ? margin : 0.0)) {
          best.found = true;
          best_gain = gain;
          best.gain = gain;
          best.feature = j;
          double mid = a + (b - a) / 2.0;
          if (mid <= a) mid = b;
          best.threshold = mid;
          best.n_left = nl;
        }
      }
    }
    if (best.found && best.gain < ctl.cp * root_sse_) best.found = false;
    return best;
  }

  void split(std::size_t id) {
    const Candidate c = best_[id];
    const auto [begin, end] = ranges_[id];
    const auto& xf = x_[c.feature];
    for (std::size_t k = begin; k < end; ++k) go_left_[order_[k]] = xf[order_[k]] < c.threshold;

    auto partition = [&](std::vector<std::size_t>& list) {
      std::size_t l = begin, r = 0;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t pos = list[k];
        if (go_left_[pos]) {
          list[l++] = pos;
        } else {
          scratch_[r++] = pos;
        }
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r),
                list.begin() + static_cast<std::ptrdiff_t>(l));
    };
    partition(order_);
    for (auto& s : sorted_) partition(s);

    const std::size_t mid = begin + c.n_left;
    const auto left = nodes_.size();
    nodes_.push_back(make_node(begin, mid));
    ranges_.push_back({begin, mid});
    nodes_.push_back(make_node(mid, end));
    ranges_.push_back({mid, end});
    nodes_[id].feature = static_cast<std::int32_t>(c.feature);
    nodes_[id].threshold = c.threshold;
    nodes_[id].left = static_cast<std::int32_t>(left);
    nodes_[id].right = static_cast<std::int32_t>(left + 1);
    best_.push_back(evaluate(left));
    best_.push_back(evaluate(left + 1));
  }

  const GrowOptions& opt_;
  std::size_t p_, m_;
  std::vector<std::vector<double>> x_;
  std::vector<double> y_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<std::size_t>> sorted_;
  std::vector<unsigned char> go_left_;
  std::vector<std::size_t> scratch_;
  std::vector<std::size_t> cand_;
  std::vector<TreeNode> nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
  std::vector<Candidate> best_;
  double root_sse_ = 0.0;
};

}  // namespace

RegressionTree grow_rows(std::span<const double* const> cols, std::vector<std::string> names,
                         std::span<const double> y, std::span<const std::size_t> sample,
                         const GrowOptions& options) {
  options.controls.validate();
  if (sample.empty()) throw InputError("cannot grow a tree on zero rows");
  if (options.mtry > 0 && options.mtry < cols.size() && options.rng == nullptr)
    throw ConfigError("column subsampling needs a random stream");
  for (std::size_t k : sample)
    if (!std::isfinite(y[k])) throw InputError("non-finite outcome value");
  Builder b(cols, y, sample, options);
  RegressionTree t(std::move(names), b.run());
  t.cp = options.controls.cp;
  return t;
}

RegressionTree grow(const FeatureTable& train, const TreeControls& controls) {
  if (!train.has_outcome()) throw InputError("training table has no outcome column");
  if (train.rows() == 0) throw InputError("training table is empty");
  std::vector<const double*> cols(train.cols());
  for (std::size_t j = 0; j < train.cols(); ++j) cols[j] = train.column(j).data();
  std::vector<std::size_t> rows(train.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  GrowOptions opt;
  opt.controls = controls;
  return grow_rows(cols, train.names(), train.outcome(), rows, opt);
}

namespace {

// Copies the part of `nodes` reachable from the root without descending
// into collapsed nodes; collapsed nodes become leaves.
RegressionTree extract(const RegressionTree& tree, const std::vector<char>& collapsed, double alpha) {
  const auto& src = tree.nodes();
  std::vector<TreeNode> out;
  std::vector<std::pair<std::size_t, std::size_t>> stack;  // (source node, destination slot)
  out.push_back(src[0]);
  stack.push_back({0, 0});
  while (!stack.empty()) {
    auto [s, d] = stack.back();
    stack.pop_back();
    if (src[s].is_leaf() || collapsed[s]) {
      out[d].feature = -1;
      out[d].threshold = 0.0;
      out[d].left = out[d].right = -1;
      continue;
    }
    const auto l = out.size();
    out.push_back(src[static_cast<std::size_t>(src[s].left)]);
    out.push_back(src[static_cast<std::size_t>(src[s].right)]);
    out[d].left = static_cast<std::int32_t>(l);
    out[d].right = static_cast<std::int32_t>(l + 1);
    stack.push_back({static_cast<std::size_t>(src[s].right), l + 1});
    stack.push_back({static_cast<std::size_t>(src[s].left), l});
  }
  RegressionTree t(tree.features(), std::move(out));
  t.cp = tree.cp;
  t.alpha = alpha;
  return t;
}

}  // namespace

std::vector<PruneStep> prune_path(const RegressionTree& tree) {
  const auto& nodes = tree.nodes();
  const std::size_t count = nodes.size();
  std::vector<char> collapsed(count, 0);
  std::vector<double> sub_sse(count);
  std::vector<std::size_t> leaves(count);
  std::vector<double> g(count);

  // Children follow parents, so a reverse sweep is a post-order pass.
  auto refresh = [&] {
    for (std::size_t i = count; i-- > 0;) {
      const auto& nd = nodes[i];
      if (nd.is_leaf() || collapsed[i]) {
        sub_sse[i] = nd.sse;
        leaves[i] = 1;
        g[i] = std::numeric_limits<double>::infinity();
        continue;
      }
      const auto l = static_cast<std::size_t>(nd.left), r = static_cast<std::size_t>(nd.right);
      sub_sse[i] = sub_sse[l] + sub_sse[r];
      leaves[i] = leaves[l] + leaves[r];
      g[i] = (nd.sse - sub_sse[i]) / static_cast<double>(leaves[i] - 1);
    }
  };
  // Collapse every active internal node with g <= cut. Collapsing a node
  // hides its descendants, which is harmless to mark as well.
  auto collapse_upto = [&](double cut) {
    bool any = false;
    for (std::size_t i = 0; i < count; ++i)
      if (!nodes[i].is_leaf() && !collapsed[i] && g[i] <= cut) {
        collapsed[i] = 1;
        any = true;
      }
    return any;
  };
  auto root_active = [&] { return !nodes[0].is_leaf() && !collapsed[0]; };

  refresh();
  while (collapse_upto(0.0)) refresh();
  std::vector<PruneStep> path;
  path.push_back({0.0, extract(tree, collapsed, 0.0)});

  double alpha = 0.0;
  while (root_active()) {
    double next = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < count; ++i)
      if (!nodes[i].is_leaf() && !collapsed[i]) next = std::min(next, g[i]);
    next = std::max(next, alpha);
    // Ancestors may fall to the same level after a collapse; absorb them.
    while (collapse_upto(next + 1e-12 * next)) refresh();
    if (next > alpha) {
      alpha = next;
      path.push_back({alpha, extract(tree, collapsed, alpha)});
    } else {
      path.back().tree = extract(tree, collapsed, alpha);
    }
  }
  return path;
}

RegressionTree fit_cv(const FeatureTable& train, std::size_t folds, std::uint64_t seed,
                      const TreeControls& controls, CvTrace* trace) {
  if (!train.has_outcome()) throw InputError("training table has no outcome column");
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  const std::size_t n = train.rows();
  if (n < folds)
    throw ConfigError("cannot run " + std::to_string(folds) + "-fold cross-validation on " + std::to_string(n) +
                      " rows");
  TreeControls grow_ctl = controls;
  grow_ctl.cp = 0.0;
  grow_ctl.max_splits.reset();
  grow_ctl.validate();

  const RegressionTree full = grow(train, grow_ctl);
  const auto path = prune_path(full);

  std::vector<double> candidates(path.size());
  for (std::size_t k = 0; k < path.size(); ++k)
    candidates[k] = k + 1 < path.size() ? std::sqrt(path[k].alpha * path[k + 1].alpha) : path[k].alpha;

  Rng rng = make_rng(seed, {0xc5});
  const auto perm = random_permutation(n, rng);
  std::vector<std::size_t> fold_of(n);
  for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = i % folds;

  std::vector<const double*> cols(train.cols());
  for (std::size_t j = 0; j < train.cols(); ++j) cols[j] = train.column(j).data();
  const auto y = train.outcome();

  // fold_sse[f][k]: held-out squared error of fold f at candidate k.
  std::vector<std::vector<double>> fold_sse(folds, std::vector<double>(candidates.size(), 0.0));
  parallel_for(folds, [&](std::size_t f) {
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? out : in).push_back(i);
    GrowOptions opt;
    opt.controls = grow_ctl;
    const auto fold_path = prune_path(grow_rows(cols, train.names(), y, in, opt));
    std::size_t s = 0;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      while (s + 1 < fold_path.size() && fold_path[s + 1].alpha <= candidates[k]) ++s;
      double sse = 0.0;
      for (std::size_t i : out) {
        const double d = y[i] - fold_path[s].tree.predict_one(cols, i);
        sse += d * d;
      }
      fold_sse[f][k] = sse;
    }
  });

  std::vector<double> cv(candidates.size(), 0.0);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    for (std::size_t f = 0; f < folds; ++f) cv[k] += fold_sse[f][k];
    cv[k] /= static_cast<double>(n);
  }
  std::size_t chosen = 0;
  for (std::size_t k = 1; k < cv.size(); ++k)
    if (cv[k] <= cv[chosen]) chosen = k;

  if (trace) *trace = {candidates, cv, chosen};
  RegressionTree out = path[chosen].tree;
  out.cp = full.root().sse > 0.0 ? path[chosen].alpha / full.root().sse : 0.0;
  return out;
}

}  // namespace proxtree
