#pragma once

// Decision-tree physical-activity classifier: Gini induction, prediction,
// stratified k-fold cross-validation and confusion matrices.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eetrack/activity.hpp"
#include "eetrack/detail/csv.hpp"
#include "eetrack/detail/hash.hpp"
#include "eetrack/detail/random.hpp"
#include "eetrack/error.hpp"
#include "eetrack/signal.hpp"

namespace eetrack::classifier {

using ClassDistribution = std::array<double, kNumPhysicalActivities>;

struct TreeParams {
  int max_depth = 12;
  std::size_t min_samples_leaf = 5;
  std::string criterion = "gini";

  void validate() const {
    if (max_depth < 0) throw InvalidParameter("max_depth must be >= 0");
    if (min_samples_leaf < 1) throw InvalidParameter("min_samples_leaf must be >= 1");
    if (criterion != "gini") throw InvalidParameter("unsupported impurity criterion '" + criterion + "'");
  }
};

inline void to_json(nlohmann::json& j, const TreeParams& p) {
  j = {{"max_depth", p.max_depth}, {"min_samples_leaf", p.min_samples_leaf}, {"criterion", p.criterion}};
}

inline void from_json(const nlohmann::json& j, TreeParams& p) {
  p.max_depth = j.value("max_depth", p.max_depth);
  p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
  p.criterion = j.value("criterion", p.criterion);
}

/// Internal nodes have `feature >= 0` and two children; leaves carry the
/// class distribution of the training rows that reached them.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  ClassDistribution distribution{};
  std::size_t samples = 0;

  bool is_leaf() const noexcept { return feature < 0; }
};

struct TreeModel {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<std::string> schema;
  TreeParams params;

  std::uint64_t schema_hash() const {
    std::uint64_t h = detail::fnv1a64("");
    for (const auto& n : schema) h = detail::fnv1a64(n + "\n", h);
    return h;
  }

  int depth() const {
    if (nodes.empty()) return 0;
    int best = 0;
    std::vector<std::pair<int, int>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [id, d] = stack.back();
      stack.pop_back();
      const auto& n = nodes[static_cast<std::size_t>(id)];
      if (n.is_leaf()) {
        best = std::max(best, d);
      } else {
        stack.emplace_back(n.left, d + 1);
        stack.emplace_back(n.right, d + 1);
      }
    }
    return best;
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }
};

inline double gini(const std::array<std::size_t, kNumPhysicalActivities>& counts, std::size_t n) {
  if (n == 0) return 0.0;
  double s = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    s += p * p;
  }
  return 1.0 - s;
}

namespace tree_detail {

using Counts = std::array<std::size_t, kNumPhysicalActivities>;

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;
};

class Builder {
 public:
  Builder(const signal::FeatureMatrix& data, const TreeParams& params) : data_(data), params_(params) {}

  TreeModel build() {
    TreeModel model;
    model.params = params_;
    for (const auto& d : data_.schema) model.schema.push_back(d.name());
    std::vector<std::size_t> idx(data_.num_rows());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    nodes_.clear();
    grow(idx, 0);
    model.nodes = std::move(nodes_);
    return model;
  }

 private:
  Counts count(const std::vector<std::size_t>& idx) const {
    Counts c{};
    for (auto i : idx) ++c[index_of(data_.labels[i])];
    return c;
  }

  int grow(const std::vector<std::size_t>& idx, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const Counts counts = count(idx);
    {
      auto& node = nodes_.back();
      node.samples = idx.size();
      for (std::size_t k = 0; k < kNumPhysicalActivities; ++k) {
        node.distribution[k] = static_cast<double>(counts[k]) / static_cast<double>(idx.size());
      }
    }
    const bool pure = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1;
    if (pure || depth >= params_.max_depth || idx.size() < 2 * params_.min_samples_leaf) return id;

    const auto split = best_split(idx, counts);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) {
      (data_.rows[i][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(i);
    }
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  // Scans features in ascending index and thresholds in ascending value; a
  // candidate replaces the incumbent only when strictly better, so ties go
  // to the lowest feature index, then the lowest threshold.
  Split best_split(const std::vector<std::size_t>& idx, const Counts& total) const {
    Split best;
    double best_imp = std::numeric_limits<double>::infinity();
    const std::size_t n = idx.size();
    const std::size_t min_leaf = params_.min_samples_leaf;
    std::vector<std::size_t> order(idx);
    for (std::size_t f = 0; f < data_.num_features(); ++f) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return data_.rows[a][f] < data_.rows[b][f]; });
      Counts left{};
      for (std::size_t i = 0; i + 1 < n; ++i) {
        ++left[index_of(data_.labels[order[i]])];
        const double lo = data_.rows[order[i]][f];
        const double hi = data_.rows[order[i + 1]][f];
        if (!(lo < hi)) continue;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        Counts right{};
        for (std::size_t k = 0; k < kNumPhysicalActivities; ++k) right[k] = total[k] - left[k];
        const double imp = (static_cast<double>(nl) * gini(left, nl) + static_cast<double>(nr) * gini(right, nr)) /
                           static_cast<double>(n);
        if (imp < best_imp - 1e-12) {
          best_imp = imp;
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid < hi)) mid = lo;
          best = {static_cast<int>(f), mid, imp};
        }
      }
      order = idx;
    }
    return best;
  }

  const signal::FeatureMatrix& data_;
  TreeParams params_;
  std::vector<TreeNode> nodes_;
};

}  // namespace tree_detail

/// Greedy top-down induction minimising weighted Gini impurity. Candidate
/// thresholds are midpoints between consecutive distinct values; rows with
/// value <= threshold go left. Splits with zero impurity decrease are
/// allowed (needed for XOR-like structure). Stops at max_depth, when a node
/// is pure, or when no split leaves min_samples_leaf rows on both sides.
inline TreeModel train_tree(const signal::FeatureMatrix& data, const TreeParams& params = {}) {
  params.validate();
  data.validate();
  if (data.num_rows() == 0) throw InvalidParameter("cannot train a tree on an empty feature matrix");
  if (data.labels.size() != data.num_rows()) throw SchemaError("training rows must all be labeled");
  for (const auto& row : data.rows) {
    for (double v : row) {
      if (!std::isfinite(v)) throw InvalidParameter("training features must be finite");
    }
  }
  return tree_detail::Builder(data, params).build();
}

struct Prediction {
  PhysicalActivity label = PhysicalActivity::lie;
  ClassDistribution distribution{};
  int leaf = -1;
};

/// Argmax of a class distribution; ties go to the lowest label index.
inline PhysicalActivity argmax_label(const ClassDistribution& d) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < d.size(); ++k) {
    if (d[k] > d[best]) best = k;
  }
  return activity_from_index(best);
}

inline Prediction predict(const TreeModel& model, std::span<const double> x) {
  if (model.nodes.empty()) throw InvalidParameter("empty tree model");
  if (x.size() != model.schema.size()) {
    throw SchemaError("feature vector has " + std::to_string(x.size()) + " values, model expects " +
                      std::to_string(model.schema.size()));
  }
  int id = 0;
  while (!model.nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const auto& n = model.nodes[static_cast<std::size_t>(id)];
    id = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  const auto& leaf = model.nodes[static_cast<std::size_t>(id)];
  return {argmax_label(leaf.distribution), leaf.distribution, id};
}

inline Prediction predict(const TreeModel& model, const signal::FeatureVector& x) { return predict(model, x.values); }

inline double training_accuracy(const TreeModel& model, const signal::FeatureMatrix& data) {
  if (data.num_rows() == 0) return 0.0;
  std::size_t ok = 0;
  for (std::size_t r = 0; r < data.num_rows(); ++r) ok += predict(model, data.rows[r]).label == data.labels[r];
  return static_cast<double>(ok) / static_cast<double>(data.num_rows());
}

// ---------------------------------------------------------------------------
// Confusion matrix and cross-validation
// ---------------------------------------------------------------------------

/// Rows are expected activities, columns predicted, in label-encoding order.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumPhysicalActivities>, kNumPhysicalActivities> counts{};

  void add(PhysicalActivity expected, PhysicalActivity predicted) { ++counts[index_of(expected)][index_of(predicted)]; }

  std::size_t support(std::size_t row) const {
    return std::accumulate(counts[row].begin(), counts[row].end(), std::size_t{0});
  }

  std::size_t total() const {
    std::size_t t = 0;
    for (std::size_t r = 0; r < kNumPhysicalActivities; ++r) t += support(r);
    return t;
  }

  /// Row-normalised rate; 0 for rows without support.
  double rate(std::size_t row, std::size_t col) const {
    const auto s = support(row);
    return s ? static_cast<double>(counts[row][col]) / static_cast<double>(s) : 0.0;
  }

  double accuracy() const {
    const auto t = total();
    if (!t) return 0.0;
    std::size_t ok = 0;
    for (std::size_t k = 0; k < kNumPhysicalActivities; ++k) ok += counts[k][k];
    return static_cast<double>(ok) / static_cast<double>(t);
  }
};

inline std::string confusion_csv_string(const ConfusionMatrix& cm) {
  std::string out = "expected\\predicted";
  for (auto name : kPhysicalActivityNames) out += "," + std::string(name);
  out += ",support\n";
  for (std::size_t r = 0; r < kNumPhysicalActivities; ++r) {
    out += std::string(kPhysicalActivityNames[r]);
    for (std::size_t c = 0; c < kNumPhysicalActivities; ++c) out += "," + detail::format_double(cm.rate(r, c));
    out += "," + std::to_string(cm.support(r)) + "\n";
  }
  return out;
}

/// Fixed-width rendering of the rate matrix with two decimals.
inline std::string confusion_table(const ConfusionMatrix& cm) {
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  std::string out = pad("", 11);
  for (auto name : kPhysicalActivityNames) out += pad(std::string(name), 11);
  out += '\n';
  for (std::size_t r = 0; r < kNumPhysicalActivities; ++r) {
    out += pad(std::string(kPhysicalActivityNames[r]), 11);
    for (std::size_t c = 0; c < kNumPhysicalActivities; ++c) out += pad(detail::format_fixed(cm.rate(r, c), 2), 11);
    out += '\n';
  }
  return out;
}

struct CrossValidationResult {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  std::vector<std::size_t> fold_of_row;
  bool stratified = true;
  std::vector<std::string> warnings;
};

/// Assigns each row to one of k folds. Stratified: rows of each class are
/// shuffled and dealt round-robin, the dealing position carrying over from
/// one class to the next so fold sizes stay balanced. Falls back to a plain
/// shuffled deal when some present class has fewer than k rows.
inline std::vector<std::size_t> assign_folds(const std::vector<PhysicalActivity>& labels, std::size_t k, std::uint64_t seed,
                                             bool* stratified = nullptr, std::vector<std::string>* warnings = nullptr) {
  std::mt19937_64 rng(seed);
  std::array<std::vector<std::size_t>, kNumPhysicalActivities> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[index_of(labels[i])].push_back(i);
  bool strat = true;
  for (std::size_t c = 0; c < kNumPhysicalActivities; ++c) {
    if (!by_class[c].empty() && by_class[c].size() < k) {
      strat = false;
      if (warnings) {
        warnings->push_back("class '" + std::string(kPhysicalActivityNames[c]) + "' has " +
                            std::to_string(by_class[c].size()) + " rows (< k=" + std::to_string(k) +
                            "); using a non-stratified split");
      }
    }
  }
  if (stratified) *stratified = strat;
  std::vector<std::size_t> fold(labels.size(), 0);
  std::size_t deal = 0;
  if (strat) {
    for (auto& rows : by_class) {
      detail::shuffle(rows, rng);
      for (auto r : rows) fold[r] = deal++ % k;
    }
  } else {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    detail::shuffle(all, rng);
    for (auto r : all) fold[r] = deal++ % k;
  }
  return fold;
}

inline constexpr std::uint64_t kDefaultCvSeed = 20160701;

/// k-fold cross-validation with out-of-fold predictions pooled into one
/// confusion matrix. Accuracy is window-level.
inline CrossValidationResult cross_validate(const signal::FeatureMatrix& data, std::size_t k, const TreeParams& params = {},
                                            std::uint64_t seed = kDefaultCvSeed) {
  if (k < 2) throw InvalidParameter("k must be >= 2");
  data.validate();
  if (data.labels.size() != data.num_rows() || data.num_rows() == 0) {
    throw InvalidParameter("cross-validation needs a non-empty labeled matrix");
  }
  if (data.num_rows() < k) throw InvalidParameter("fewer rows than folds");
  CrossValidationResult res;
  res.fold_of_row = assign_folds(data.labels, k, seed, &res.stratified, &res.warnings);
  for (std::size_t f = 0; f < k; ++f) {
    signal::FeatureMatrix train;
    train.schema = data.schema;
    std::vector<std::size_t> test;
    for (std::size_t r = 0; r < data.num_rows(); ++r) {
      if (res.fold_of_row[r] == f) {
        test.push_back(r);
      } else {
        train.rows.push_back(data.rows[r]);
        train.labels.push_back(data.labels[r]);
      }
    }
    if (test.empty() || train.rows.empty()) continue;
    const auto model = train_tree(train, params);
    for (auto r : test) res.confusion.add(data.labels[r], predict(model, data.rows[r]).label);
  }
  res.accuracy = res.confusion.accuracy();
  return res;
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

inline constexpr int kTreeFormatVersion = 1;

inline nlohmann::json tree_to_json(const TreeModel& m) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : m.nodes) {
    if (n.is_leaf()) {
      nodes.push_back({{"leaf", n.distribution}, {"samples", n.samples}});
    } else {
      nodes.push_back(
          {{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}, {"samples", n.samples}});
    }
  }
  return {{"format", "eetrack.tree"},
          {"version", kTreeFormatVersion},
          {"labels", kPhysicalActivityNames},
          {"schema", m.schema},
          {"schema_hash", detail::hex64(m.schema_hash())},
          {"hyperparams", m.params},
          {"nodes", nodes}};
}

inline TreeModel tree_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "eetrack.tree") throw SchemaError("not a tree model file");
  if (j.value("version", 0) != kTreeFormatVersion) throw SchemaError("unsupported tree model version");
  TreeModel m;
  m.schema = j.at("schema").get<std::vector<std::string>>();
  m.params = j.at("hyperparams").get<TreeParams>();
  if (j.contains("schema_hash") && j["schema_hash"].get<std::string>() != detail::hex64(m.schema_hash())) {
    throw SchemaError("tree model schema hash mismatch");
  }
  for (const auto& jn : j.at("nodes")) {
    TreeNode n;
    n.samples = jn.value("samples", std::size_t{0});
    if (jn.contains("leaf")) {
      n.distribution = jn["leaf"].get<ClassDistribution>();
    } else {
      n.feature = jn.at("feature").get<int>();
      n.threshold = jn.at("threshold").get<double>();
      n.left = jn.at("left").get<int>();
      n.right = jn.at("right").get<int>();
    }
    m.nodes.push_back(n);
  }
  const int count = static_cast<int>(m.nodes.size());
  for (const auto& n : m.nodes) {
    if (n.is_leaf()) continue;
    if (n.left <= 0 || n.left >= count || n.right <= 0 || n.right >= count) throw SchemaError("tree child index out of range");
    if (n.feature >= static_cast<int>(m.schema.size())) throw SchemaError("tree split feature out of range");
  }
  return m;
}

}  // namespace eetrack::classifier
