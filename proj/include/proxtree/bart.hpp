#pragma once

#include <array>
#include <memory>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxtree/random.hpp"
#include "proxtree/table.hpp"

namespace proxtree {

struct BartHyper {
  double alpha = 0.95;  // P(split at depth d) = alpha (1 + d)^-beta
  double beta = 2.0;
  double k = 2.0;       // leaf prior sd = 0.5 / (k sqrt(m)) on the scaled outcome
  double nu = 3.0;      // sigma^2 ~ nu lambda / chi^2_nu
  double q = 0.90;      // prior P(sigma < sigma estimate)
};

struct BartControls {
  std::size_t trees = 200;
  std::size_t iterations = 2000;  // including burn-in
  std::size_t burn_in = 1000;
  std::size_t thin = 1;
  std::size_t chains = 1;
  std::size_t min_leaf = 5;    // proposals leaving fewer rows in a leaf are rejected
  std::size_t max_cuts = 100;  // cutpoints per column
  BartHyper hyper;
  // Move probabilities: grow, prune, change, swap.
  std::array<double, 4> moves{0.25, 0.25, 0.40, 0.10};
  // Diagnostic: ignore the data (constant likelihood, no row-count
  // constraint), so trees are drawn from their prior.
  bool sample_prior_only = false;

  std::size_t retained() const { return (iterations - burn_in) / thin; }
  void validate() const;
};

// Preorder tree node. Internal: rows with x[var] < value go to the next
// node, the others to `right`. Leaf (var < 0): value is the leaf output on
// the scaled outcome.
struct CompactNode {
  std::int32_t var = -1;
  std::int32_t right = 0;
  double value = 0.0;
};

enum class BartMove : std::size_t { grow = 0, prune = 1, change = 2, swap = 3 };

struct MoveCounts {
  std::array<std::uint64_t, 4> proposed{};
  std::array<std::uint64_t, 4> accepted{};
};

// Posterior sample of sum-of-trees fits. Predictions are returned in outcome
// units; draw matrices are draw-major (row d holds draw d for every query
// row).
class BartModel {
 public:
  BartModel() = default;

  const std::vector<std::string>& features() const noexcept { return features_; }
  std::size_t draws() const noexcept { return draw_count_; }
  std::size_t trees_per_draw() const noexcept { return trees_; }
  const std::vector<double>& sigma_draws() const noexcept { return sigma_; }
  const std::vector<std::vector<double>>& cutpoints() const noexcept { return cuts_; }
  const MoveCounts& move_counts() const noexcept { return moves_; }
  double scale() const noexcept { return scale_; }
  double center() const noexcept { return center_; }

  // D x q predictions.
  std::vector<double> predict_draws(const FeatureTable& table) const;
  // Posterior mean per row (average over draws of the sum of trees).
  std::vector<double> predict_mean(const FeatureTable& table) const;

  // Posterior-mean predictions after replacing the columns `features` (indices
  // into features()) by `replacement` (same order). Only trees that split on
  // one of those columns are re-evaluated; `base_mean` must be
  // predict_mean(table).
  std::vector<double> predict_mean_replaced(const FeatureTable& table, std::span<const std::size_t> features,
                                            std::span<const std::vector<double>> replacement,
                                            std::span<const double> base_mean) const;

  // Column pointers for features(); unused columns may be absent.
  std::vector<const double*> bind(const FeatureTable& table) const;
  // Scaled-unit sum of trees for draw d at `row`.
  double draw_sum(std::size_t d, std::span<const double* const> cols, std::size_t row) const;
  // Output of tree t of draw d (scaled units).
  double tree_output(std::size_t d, std::size_t t, std::span<const double* const> cols, std::size_t row) const;
  bool tree_uses(std::size_t d, std::size_t t, std::size_t feature) const;
  std::span<const CompactNode> tree_nodes(std::size_t d, std::size_t t) const;

  double to_outcome(double scaled) const { return scaled * scale_ + center_; }

  nlohmann::json to_json() const;
  static BartModel from_json(const nlohmann::json& j);

  friend class BartSampler;
  friend struct BartFitter;

 private:
  std::vector<std::string> features_;
  std::vector<std::vector<double>> cuts_;
  double center_ = 0.0;
  double scale_ = 1.0;
  std::size_t trees_ = 0;
  std::size_t draw_count_ = 0;
  std::vector<CompactNode> nodes_;
  std::vector<std::uint32_t> tree_start_;  // draws*trees + 1 offsets into nodes_
  std::vector<std::uint64_t> usage_;       // per (draw, tree): bitset over features
  std::size_t usage_words_ = 0;
  std::vector<double> sigma_;              // outcome units, one per draw
  MoveCounts moves_;

  void append_tree(std::span<const CompactNode> nodes);
  void build_usage();
};

// Cutpoints per column: midpoints between consecutive distinct values when
// there are at most max_cuts of them, else max_cuts evenly spaced interior
// points between min and max.
std::vector<double> make_cutpoints(std::span<const double> values, std::size_t max_cuts);

// One MCMC chain. Exposed so tests can step it and inspect its state.
class BartSampler {
 public:
  BartSampler(const FeatureTable& train, const BartControls& controls, std::uint64_t seed);
  ~BartSampler();
  BartSampler(BartSampler&&) noexcept;
  BartSampler& operator=(BartSampler&&) noexcept;

  // One sweep: every tree gets one MH move plus fresh leaf values, then sigma.
  void step();
  std::size_t iteration() const;

  // Current state, scaled outcome units.
  double sigma() const;
  double tau() const;
  double lambda() const;
  double sigma_estimate() const;
  std::size_t tree_count() const;
  // Sum-of-trees fit maintained by the sampler for every training row.
  std::vector<double> fitted() const;
  // Fit of tree t recomputed from its structure and the raw training values.
  std::vector<double> tree_fit(std::size_t t) const;
  std::size_t tree_depth(std::size_t t) const;
  // Depth of every node of tree t paired with whether it is internal.
  std::vector<std::pair<std::size_t, bool>> node_depths(std::size_t t) const;
  std::vector<CompactNode> compact_tree(std::size_t t) const;
  const MoveCounts& move_counts() const;

  // Snapshot as a one-draw model (for inspection).
  BartModel snapshot() const;

  const BartModel& model_template() const;  // features, cuts, scaling

 private:
  struct State;
  std::unique_ptr<State> s_;
  friend struct BartFitter;
};

struct BartResult {
  BartModel model;
  // Draws for the optional query table given to fit_bart (D x q).
  std::vector<double> query_draws;
  std::size_t query_rows = 0;
};

// Runs controls.chains chains (seeds derived from `seed` by chain index) and
// concatenates their retained draws. When `query` is given its draws are
// recorded during sampling.
BartResult fit_bart(const FeatureTable& train, const BartControls& controls, std::uint64_t seed,
                    const FeatureTable* query = nullptr);

struct DrawSummary {
  std::vector<double> mean, lower, upper;
};

// Pointwise mean and [level/2, 1 - level/2] quantiles (linear interpolation)
// over the draw axis of a D x q draw-major matrix.
DrawSummary summarize_draws(std::span<const double> draws, std::size_t draw_count, double level = 0.05);

}  // namespace proxtree
