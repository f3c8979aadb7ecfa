#include "delta_audit/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "delta_audit/error.hpp"
#include "delta_audit/rng.hpp"
#include "delta_audit/text.hpp"

namespace delta_audit {

std::string to_string(Family f) {
  switch (f) {
    case Family::logreg: return "logreg";
    case Family::knn: return "knn";
    case Family::forest: return "forest";
    case Family::gbstumps: return "gbstumps";
  }
  return "unknown";
}

Family parse_family(const std::string& s) {
  if (s == "logreg") return Family::logreg;
  if (s == "knn") return Family::knn;
  if (s == "forest") return Family::forest;
  if (s == "gbstumps") return Family::gbstumps;
  throw ConfigError("unknown learner family '" + s + "'");
}

namespace {

std::string to_string(KnnWeighting w) { return w == KnnWeighting::uniform ? "uniform" : "distance"; }
std::string to_string(ScanOrder o) { return o == ScanOrder::forward ? "forward" : "reverse"; }
std::string to_string(FeatureRule r) {
  switch (r) {
    case FeatureRule::sqrt: return "sqrt";
    case FeatureRule::log2: return "log2";
    case FeatureRule::all: return "all";
  }
  return "sqrt";
}

}  // namespace

LearnerSpec LearnerSpec::logreg(double l2_strength, int max_iterations) {
  LearnerSpec s;
  s.family = Family::logreg;
  s.l2_strength = l2_strength;
  s.max_iterations = max_iterations;
  return s;
}

LearnerSpec LearnerSpec::knn(int k, KnnWeighting w, ScanOrder order) {
  LearnerSpec s;
  s.family = Family::knn;
  s.k = k;
  s.weighting = w;
  s.scan_order = order;
  return s;
}

LearnerSpec LearnerSpec::forest(int n_trees, std::optional<int> max_depth, FeatureRule rule,
                                std::uint64_t seed) {
  LearnerSpec s;
  s.family = Family::forest;
  s.n_trees = n_trees;
  s.max_depth = max_depth;
  s.feature_rule = rule;
  s.seed = seed;
  return s;
}

LearnerSpec LearnerSpec::gbstumps(int n_rounds, double learning_rate, int max_depth) {
  LearnerSpec s;
  s.family = Family::gbstumps;
  s.n_rounds = n_rounds;
  s.learning_rate = learning_rate;
  s.max_depth = max_depth;
  return s;
}

void LearnerSpec::validate(std::size_t train_size) const {
  switch (family) {
    case Family::logreg:
      if (!(l2_strength > 0.0)) throw ConfigError("logreg: l2_strength must be > 0");
      if (max_iterations < 1) throw ConfigError("logreg: max_iterations must be >= 1");
      break;
    case Family::knn:
      if (k < 1) throw ConfigError("knn: k must be >= 1");
      if (train_size > 0 && static_cast<std::size_t>(k) > train_size) {
        throw ConfigError("knn: k=" + std::to_string(k) + " exceeds training size " +
                          std::to_string(train_size));
      }
      break;
    case Family::forest:
      if (n_trees < 1) throw ConfigError("forest: n_trees must be >= 1");
      if (max_depth && *max_depth < 0) throw ConfigError("forest: max_depth must be >= 0");
      break;
    case Family::gbstumps:
      if (n_rounds < 0) throw ConfigError("gbstumps: n_rounds must be >= 0");
      if (!(learning_rate > 0.0)) throw ConfigError("gbstumps: learning_rate must be > 0");
      if (!max_depth || *max_depth < 1 || *max_depth > 2) {
        throw ConfigError("gbstumps: max_depth must be 1 or 2");
      }
      break;
  }
}

std::map<std::string, std::string> LearnerSpec::to_params() const {
  std::map<std::string, std::string> p;
  p["family"] = delta_audit::to_string(family);
  switch (family) {
    case Family::logreg:
      p["l2_strength"] = format_double(l2_strength);
      p["max_iterations"] = std::to_string(max_iterations);
      break;
    case Family::knn:
      p["k"] = std::to_string(k);
      p["weighting"] = to_string(weighting);
      p["scan_order"] = to_string(scan_order);
      break;
    case Family::forest:
      p["n_trees"] = std::to_string(n_trees);
      p["max_depth"] = max_depth ? std::to_string(*max_depth) : "none";
      p["feature_rule"] = to_string(feature_rule);
      p["seed"] = std::to_string(seed);
      break;
    case Family::gbstumps:
      p["n_rounds"] = std::to_string(n_rounds);
      p["learning_rate"] = format_double(learning_rate);
      p["max_depth"] = max_depth ? std::to_string(*max_depth) : "none";
      break;
  }
  return p;
}

LearnerSpec LearnerSpec::from_params(const std::map<std::string, std::string>& params) {
  auto it = params.find("family");
  if (it == params.end()) throw ConfigError("learner: missing 'family'");
  LearnerSpec s;
  s.family = parse_family(it->second);
  for (const auto& [key, value] : params) {
    if (key == "family") continue;
    const std::string what = "learner." + key;
    bool known = true;
    switch (s.family) {
      case Family::logreg:
        if (key == "l2_strength") s.l2_strength = parse_double(value, what);
        else if (key == "max_iterations") s.max_iterations = static_cast<int>(parse_int(value, what));
        else known = false;
        break;
      case Family::knn:
        if (key == "k") {
          s.k = static_cast<int>(parse_int(value, what));
        } else if (key == "weighting") {
          if (value == "uniform") s.weighting = KnnWeighting::uniform;
          else if (value == "distance") s.weighting = KnnWeighting::distance;
          else throw ConfigError(what + ": expected uniform|distance");
        } else if (key == "scan_order") {
          if (value == "forward") s.scan_order = ScanOrder::forward;
          else if (value == "reverse") s.scan_order = ScanOrder::reverse;
          else throw ConfigError(what + ": expected forward|reverse");
        } else {
          known = false;
        }
        break;
      case Family::forest:
      case Family::gbstumps:
        if (key == "max_depth") {
          if (value == "none") s.max_depth.reset();
          else s.max_depth = static_cast<int>(parse_int(value, what));
        } else if (s.family == Family::forest && key == "n_trees") {
          s.n_trees = static_cast<int>(parse_int(value, what));
        } else if (s.family == Family::forest && key == "feature_rule") {
          if (value == "sqrt") s.feature_rule = FeatureRule::sqrt;
          else if (value == "log2") s.feature_rule = FeatureRule::log2;
          else if (value == "all") s.feature_rule = FeatureRule::all;
          else throw ConfigError(what + ": expected sqrt|log2|all");
        } else if (s.family == Family::forest && key == "seed") {
          s.seed = static_cast<std::uint64_t>(parse_int(value, what));
        } else if (s.family == Family::gbstumps && key == "n_rounds") {
          s.n_rounds = static_cast<int>(parse_int(value, what));
        } else if (s.family == Family::gbstumps && key == "learning_rate") {
          s.learning_rate = parse_double(value, what);
        } else {
          known = false;
        }
        break;
    }
    if (!known) {
      throw ConfigError("learner: unknown key '" + key + "' for family " +
                        delta_audit::to_string(s.family));
    }
  }
  if (s.family == Family::gbstumps && !params.contains("max_depth")) s.max_depth = 1;
  s.validate();
  return s;
}

std::string LearnerSpec::describe() const {
  std::ostringstream os;
  os << delta_audit::to_string(family) << '(';
  bool first = true;
  for (const auto& [k, v] : to_params()) {
    if (k == "family") continue;
    if (!first) os << ", ";
    os << k << '=' << v;
    first = false;
  }
  os << ')';
  return os.str();
}

std::size_t candidate_feature_count(FeatureRule rule, std::size_t d) {
  if (d == 0) return 0;
  std::size_t m = d;
  switch (rule) {
    case FeatureRule::sqrt: m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d)))); break;
    case FeatureRule::log2: m = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(d)))); break;
    case FeatureRule::all: m = d; break;
  }
  return std::clamp<std::size_t>(m, 1, d);
}

const TreeNode& Tree::leaf_for(std::span<const double> x) const {
  std::size_t at = 0;
  while (nodes[at].feature >= 0) {
    const auto& node = nodes[at];
    at = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                      ? node.left
                                      : node.right);
  }
  return nodes[at];
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

void softmax_inplace(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : z) v /= total;
}

Matrix logits(const LogRegState& s, const Matrix& X) {
  const std::size_t C = s.weights.rows();
  Matrix out(X.rows(), C);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto x = X.row(i);
    for (std::size_t c = 0; c < C; ++c) {
      auto w = s.weights.row(c);
      double z = s.bias[c];
      for (std::size_t j = 0; j < x.size(); ++j) z += w[j] * x[j];
      out(i, c) = z;
    }
  }
  return out;
}

// Mean cross-entropy plus (l2 / 2n) * ||W||^2; bias is not penalized.
double logreg_objective(const LogRegState& s, const Matrix& X, const std::vector<int>& y,
                        double l2, Matrix* grad_w, std::vector<double>* grad_b) {
  const std::size_t n = X.rows();
  const std::size_t C = s.weights.rows();
  const std::size_t d = s.weights.cols();
  const auto inv_n = 1.0 / static_cast<double>(n);
  Matrix z = logits(s, X);
  double loss = 0.0;
  if (grad_w) {
    *grad_w = Matrix(C, d);
    grad_b->assign(C, 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto zi = z.row(i);
    const double mx = *std::max_element(zi.begin(), zi.end());
    double lse = 0.0;
    for (double v : zi) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    const auto yi = static_cast<std::size_t>(y[i]);
    loss += lse - zi[yi];
    if (grad_w) {
      auto x = X.row(i);
      for (std::size_t c = 0; c < C; ++c) {
        const double r = (std::exp(zi[c] - lse) - (c == yi ? 1.0 : 0.0)) * inv_n;
        (*grad_b)[c] += r;
        auto g = grad_w->row(c);
        for (std::size_t j = 0; j < d; ++j) g[j] += r * x[j];
      }
    }
  }
  loss *= inv_n;
  double wsq = 0.0;
  for (double w : s.weights.data()) wsq += w * w;
  loss += 0.5 * l2 * inv_n * wsq;
  if (grad_w) {
    auto g = grad_w->data();
    auto w = s.weights.data();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += l2 * inv_n * w[k];
  }
  return loss;
}

LogRegState fit_logreg(const LearnerSpec& spec, const Matrix& X, const std::vector<int>& y,
                       int classes, std::vector<std::string>& warnings) {
  constexpr double kGradTol = 1e-6;
  const auto C = static_cast<std::size_t>(classes);
  LogRegState s;
  s.weights = Matrix(C, X.cols());
  s.bias.assign(C, 0.0);

  Matrix gw;
  std::vector<double> gb;
  double loss = logreg_objective(s, X, y, spec.l2_strength, &gw, &gb);
  double step = 1.0;
  int it = 0;
  double gnorm = 0.0;
  for (; it < spec.max_iterations; ++it) {
    double gsq = 0.0;
    for (double g : gw.data()) gsq += g * g;
    for (double g : gb) gsq += g * g;
    gnorm = std::sqrt(gsq);
    if (gnorm < kGradTol) break;

    // Armijo backtracking from a step that grows after each success.
    LogRegState trial = s;
    double trial_loss = 0.0;
    while (true) {
      auto tw = trial.weights.data();
      auto w = s.weights.data();
      auto g = gw.data();
      for (std::size_t k = 0; k < tw.size(); ++k) tw[k] = w[k] - step * g[k];
      for (std::size_t c = 0; c < C; ++c) trial.bias[c] = s.bias[c] - step * gb[c];
      trial_loss = logreg_objective(trial, X, y, spec.l2_strength, nullptr, nullptr);
      if (trial_loss <= loss - 0.5 * step * gsq || step < 1e-12) break;
      step *= 0.5;
    }
    s = std::move(trial);
    loss = logreg_objective(s, X, y, spec.l2_strength, &gw, &gb);
    step *= 2.0;
  }
  s.iterations = it;
  s.gradient_norm = gnorm;
  if (gnorm >= kGradTol) {
    warnings.push_back("logreg: gradient norm " + format_double(gnorm) + " after " +
                       std::to_string(it) + " iterations (tolerance 1e-6 not reached)");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Trees

double gini(std::span<const double> counts, double total) {
  if (total <= 0.0) return 0.0;
  double g = 1.0;
  for (double c : counts) {
    const double p = c / total;
    g -= p * p;
  }
  return g;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class ForestTreeBuilder {
 public:
  ForestTreeBuilder(const Matrix& X, const std::vector<int>& y, std::size_t classes,
                    std::optional<int> max_depth, std::size_t candidates, Rng rng)
      : X_(X), y_(y), classes_(classes), max_depth_(max_depth), candidates_(candidates),
        rng_(std::move(rng)) {}

  Tree build(std::vector<std::size_t> rows) {
    Tree tree;
    grow(tree, std::move(rows), 0);
    return tree;
  }

 private:
  int grow(Tree& tree, std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    std::vector<double> counts(classes_, 0.0);
    for (auto r : rows) counts[static_cast<std::size_t>(y_[r])] += 1.0;
    const auto total = static_cast<double>(rows.size());
    std::vector<double> dist(classes_);
    for (std::size_t c = 0; c < classes_; ++c) dist[c] = counts[c] / total;
    tree.nodes[static_cast<std::size_t>(id)].value = dist;

    const double parent = gini(counts, total);
    const bool depth_left = !max_depth_ || depth < *max_depth_;
    if (!depth_left || rows.size() < 2 || parent <= 0.0) return id;

    // Sample candidate features without replacement.
    std::vector<std::size_t> features(X_.cols());
    std::iota(features.begin(), features.end(), std::size_t{0});
    for (std::size_t i = 0; i < candidates_; ++i) {
      std::swap(features[i], features[i + rng_.index(features.size() - i)]);
    }
    features.resize(candidates_);
    std::sort(features.begin(), features.end());
    tree.nodes[static_cast<std::size_t>(id)].candidate_count = features.size();

    SplitChoice best;
    std::vector<std::pair<double, int>> column(rows.size());
    for (auto f : features) {
      for (std::size_t k = 0; k < rows.size(); ++k) column[k] = {X_(rows[k], f), y_[rows[k]]};
      std::sort(column.begin(), column.end());
      std::vector<double> left(classes_, 0.0);
      std::vector<double> right = counts;
      for (std::size_t k = 0; k + 1 < column.size(); ++k) {
        const auto c = static_cast<std::size_t>(column[k].second);
        left[c] += 1.0;
        right[c] -= 1.0;
        if (column[k].first == column[k + 1].first) continue;
        const auto nl = static_cast<double>(k + 1);
        const double nr = total - nl;
        const double gain = parent - (nl * gini(left, nl) + nr * gini(right, nr)) / total;
        // Strict improvement keeps the lowest feature index on ties.
        if (gain > best.gain + 1e-15) {
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (column[k].first + column[k + 1].first);
          best.gain = gain;
        }
      }
    }
    if (best.feature < 0) return id;

    std::vector<std::size_t> lrows, rrows;
    for (auto r : rows) {
      (X_(r, static_cast<std::size_t>(best.feature)) <= best.threshold ? lrows : rrows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(tree, std::move(lrows), depth + 1);
    const int r = grow(tree, std::move(rrows), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  const Matrix& X_;
  const std::vector<int>& y_;
  std::size_t classes_;
  std::optional<int> max_depth_;
  std::size_t candidates_;
  Rng rng_;
};

ForestState fit_forest(const LearnerSpec& spec, const Matrix& X, const std::vector<int>& y,
                       int classes) {
  ForestState state;
  const std::size_t n = X.rows();
  const std::size_t m = candidate_feature_count(spec.feature_rule, X.cols());
  state.trees.reserve(static_cast<std::size_t>(spec.n_trees));
  for (int t = 0; t < spec.n_trees; ++t) {
    Rng rng = Rng::stream(spec.seed, static_cast<std::uint64_t>(t));
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = rng.index(n);
    std::sort(rows.begin(), rows.end());
    ForestTreeBuilder builder(X, y, static_cast<std::size_t>(classes), spec.max_depth, m,
                              std::move(rng));
    state.trees.push_back(builder.build(std::move(rows)));
  }
  return state;
}

// Least-squares regression tree on residuals with Newton leaf values
// sum(r) / sum(p(1-p)).
class RegressionTreeBuilder {
 public:
  RegressionTreeBuilder(const Matrix& X, std::span<const double> residual,
                        std::span<const double> hessian, int max_depth)
      : X_(X), r_(residual), h_(hessian), max_depth_(max_depth) {}

  Tree build(std::vector<std::size_t> rows) {
    Tree tree;
    grow(tree, std::move(rows), 0);
    return tree;
  }

 private:
  int grow(Tree& tree, std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sum_r = 0.0, sum_h = 0.0;
    for (auto i : rows) {
      sum_r += r_[i];
      sum_h += h_[i];
    }
    tree.nodes[static_cast<std::size_t>(id)].value = {sum_r / std::max(sum_h, 1e-12)};
    tree.nodes[static_cast<std::size_t>(id)].candidate_count = X_.cols();
    if (depth >= max_depth_ || rows.size() < 2) return id;

    const auto total = static_cast<double>(rows.size());
    const double parent_score = sum_r * sum_r / total;
    SplitChoice best;
    std::vector<std::pair<double, double>> column(rows.size());
    for (std::size_t f = 0; f < X_.cols(); ++f) {
      for (std::size_t k = 0; k < rows.size(); ++k) column[k] = {X_(rows[k], f), r_[rows[k]]};
      std::sort(column.begin(), column.end());
      double left = 0.0;
      for (std::size_t k = 0; k + 1 < column.size(); ++k) {
        left += column[k].second;
        if (column[k].first == column[k + 1].first) continue;
        const auto nl = static_cast<double>(k + 1);
        const double nr = total - nl;
        const double right = sum_r - left;
        const double gain = left * left / nl + right * right / nr - parent_score;
        if (gain > best.gain + 1e-15) {
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (column[k].first + column[k + 1].first);
          best.gain = gain;
        }
      }
    }
    if (best.feature < 0) return id;

    std::vector<std::size_t> lrows, rrows;
    for (auto i : rows) {
      (X_(i, static_cast<std::size_t>(best.feature)) <= best.threshold ? lrows : rrows).push_back(i);
    }
    const int l = grow(tree, std::move(lrows), depth + 1);
    const int r = grow(tree, std::move(rrows), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  const Matrix& X_;
  std::span<const double> r_;
  std::span<const double> h_;
  int max_depth_;
};

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

GbState fit_gbstumps(const LearnerSpec& spec, const Matrix& X, const std::vector<int>& y,
                     int classes) {
  const std::size_t n = X.rows();
  const auto C = static_cast<std::size_t>(classes);
  GbState state;
  state.init.resize(C);
  std::vector<std::vector<double>> F(C, std::vector<double>(n));
  for (std::size_t c = 0; c < C; ++c) {
    const auto count = static_cast<double>(std::count(y.begin(), y.end(), static_cast<int>(c)));
    const double prior = count / static_cast<double>(n);
    state.init[c] = std::log(prior / (1.0 - prior));
    std::fill(F[c].begin(), F[c].end(), state.init[c]);
  }
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> residual(n), hessian(n);
  for (int round = 0; round < spec.n_rounds; ++round) {
    std::vector<Tree> per_class;
    per_class.reserve(C);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = sigmoid(F[c][i]);
        residual[i] = (y[i] == static_cast<int>(c) ? 1.0 : 0.0) - p;
        hessian[i] = p * (1.0 - p);
      }
      RegressionTreeBuilder builder(X, residual, hessian, *spec.max_depth);
      Tree tree = builder.build(all);
      for (std::size_t i = 0; i < n; ++i) {
        F[c][i] += spec.learning_rate * tree.leaf_for(X.row(i)).value[0];
      }
      per_class.push_back(std::move(tree));
    }
    state.rounds.push_back(std::move(per_class));
  }
  return state;
}

// ---------------------------------------------------------------------------
// kNN

struct Neighbour {
  double dist2;
  std::size_t index;
  bool operator<(const Neighbour& o) const {
    return dist2 != o.dist2 ? dist2 < o.dist2 : index < o.index;
  }
};

// Exact search keeping the k smallest (distance, index) pairs. The ordering is
// total, so the selected set is the same for any visiting order.
std::vector<Neighbour> nearest(const KnnState& s, std::span<const double> x, std::size_t k,
                               ScanOrder order) {
  std::vector<Neighbour> best;
  best.reserve(k + 1);
  const std::size_t n = s.X.rows();
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t i = order == ScanOrder::forward ? step : n - 1 - step;
    auto t = s.X.row(i);
    double d2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = x[j] - t[j];
      d2 += diff * diff;
    }
    Neighbour cand{d2, i};
    if (best.size() == k && !(cand < best.back())) continue;
    best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
    if (best.size() > k) best.pop_back();
  }
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainedModel

TrainedModel::TrainedModel(LearnerSpec spec, int classes, std::size_t features,
                           std::variant<LogRegState, KnnState, ForestState, GbState> state,
                           std::vector<std::string> warnings)
    : spec_(std::move(spec)), classes_(classes), features_(features), state_(std::move(state)),
      warnings_(std::move(warnings)) {}

TrainedModel TrainedModel::linear(const Matrix& weights, std::vector<double> bias) {
  if (weights.rows() != bias.size()) throw MismatchError("linear model: bias length mismatch");
  LogRegState s;
  s.weights = weights;
  s.bias = std::move(bias);
  return TrainedModel(LearnerSpec::logreg(1.0), static_cast<int>(weights.rows()), weights.cols(),
                      std::move(s));
}

bool TrainedModel::has_margin() const {
  return spec_.family == Family::logreg || spec_.family == Family::gbstumps;
}

void TrainedModel::check_width(const Matrix& X) const {
  if (X.cols() != features_) {
    throw MismatchError("model expects " + std::to_string(features_) + " features, got " +
                        std::to_string(X.cols()));
  }
}

Matrix TrainedModel::decision_scores(const Matrix& X) const {
  check_width(X);
  const auto C = static_cast<std::size_t>(classes_);
  if (const auto* lr = std::get_if<LogRegState>(&state_)) return logits(*lr, X);
  if (const auto* gb = std::get_if<GbState>(&state_)) {
    Matrix out(X.rows(), C);
    for (std::size_t i = 0; i < X.rows(); ++i) {
      auto x = X.row(i);
      for (std::size_t c = 0; c < C; ++c) {
        double f = gb->init[c];
        for (const auto& round : gb->rounds) {
          f += spec_.learning_rate * round[c].leaf_for(x).value[0];
        }
        out(i, c) = f;
      }
    }
    return out;
  }
  return probabilities(X);
}

Matrix TrainedModel::probabilities(const Matrix& X) const {
  check_width(X);
  const auto C = static_cast<std::size_t>(classes_);
  if (std::holds_alternative<LogRegState>(state_)) {
    Matrix z = decision_scores(X);
    for (std::size_t i = 0; i < z.rows(); ++i) softmax_inplace(z.row(i));
    return z;
  }
  if (std::holds_alternative<GbState>(state_)) {
    Matrix z = decision_scores(X);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto row = z.row(i);
      double total = 0.0;
      for (auto& v : row) {
        v = sigmoid(v);
        total += v;
      }
      for (auto& v : row) v /= total;
    }
    return z;
  }
  Matrix out(X.rows(), C);
  if (const auto* forest = std::get_if<ForestState>(&state_)) {
    const auto trees = static_cast<double>(forest->trees.size());
    for (std::size_t i = 0; i < X.rows(); ++i) {
      auto x = X.row(i);
      auto row = out.row(i);
      for (const auto& tree : forest->trees) {
        const auto& leaf = tree.leaf_for(x);
        for (std::size_t c = 0; c < C; ++c) row[c] += leaf.value[c];
      }
      for (auto& v : row) v /= trees;
    }
    return out;
  }
  const auto& knn = std::get<KnnState>(state_);
  const auto k = static_cast<std::size_t>(spec_.k);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto nb = nearest(knn, X.row(i), k, spec_.scan_order);
    auto row = out.row(i);
    if (spec_.weighting == KnnWeighting::uniform) {
      for (const auto& e : nb) row[static_cast<std::size_t>(knn.y[e.index])] += 1.0;
    } else if (nb.front().dist2 == 0.0) {
      // Coincident training points take all the weight.
      for (const auto& e : nb) {
        if (e.dist2 == 0.0) row[static_cast<std::size_t>(knn.y[e.index])] += 1.0;
      }
    } else {
      for (const auto& e : nb) {
        row[static_cast<std::size_t>(knn.y[e.index])] += 1.0 / std::sqrt(e.dist2);
      }
    }
    double total = 0.0;
    for (double v : row) total += v;
    for (auto& v : row) v /= total;
  }
  return out;
}

std::vector<int> TrainedModel::predict(const Matrix& X) const {
  const Matrix s = decision_scores(X);
  std::vector<int> out(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) out[i] = static_cast<int>(argmax(s.row(i)));
  return out;
}

TrainedModel fit(const LearnerSpec& spec, const Matrix& X_train, const std::vector<int>& y_train,
                 int class_count) {
  spec.validate(X_train.rows());
  if (X_train.rows() != y_train.size()) throw MismatchError("fit: X/y length mismatch");
  if (class_count < 2) throw ConfigError("fit: need at least 2 classes");
  std::vector<int> seen(static_cast<std::size_t>(class_count), 0);
  for (int label : y_train) {
    if (label < 0 || label >= class_count) throw DataError("fit: label out of range");
    seen[static_cast<std::size_t>(label)] = 1;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw DataError("fit: every class needs at least one training sample");
  }

  std::vector<std::string> warnings;
  switch (spec.family) {
    case Family::logreg: {
      auto state = fit_logreg(spec, X_train, y_train, class_count, warnings);
      return TrainedModel(spec, class_count, X_train.cols(), std::move(state), std::move(warnings));
    }
    case Family::knn:
      return TrainedModel(spec, class_count, X_train.cols(), KnnState{X_train, y_train});
    case Family::forest:
      return TrainedModel(spec, class_count, X_train.cols(),
                          fit_forest(spec, X_train, y_train, class_count));
    case Family::gbstumps:
      return TrainedModel(spec, class_count, X_train.cols(),
                          fit_gbstumps(spec, X_train, y_train, class_count));
  }
  throw ConfigError("fit: unknown family");
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw MismatchError("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace delta_audit
