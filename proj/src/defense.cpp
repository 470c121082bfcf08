#include "venomracg/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "venomracg/errors.hpp"
#include "venomracg/poisonkb.hpp"

namespace venomracg::defense {

std::string_view to_string(Method method) {
  switch (method) {
  case Method::activation_clustering: return "activation_clustering";
  case Method::spectral_signature: return "spectral_signature";
  case Method::ngram: return "ngram";
  }
  return "unknown";
}

std::size_t DetectionReport::false_positives() const {
  std::size_t fp = 0;
  for (const auto& id : flagged_ids) {
    fp += ground_truth_poison_ids.count(id) == 0 ? 1 : 0;
  }
  return fp;
}

nlohmann::ordered_json DetectionReport::to_json() const {
  nlohmann::ordered_json out;
  out["method"] = to_string(method);
  out["recall"] = recall;
  out["flagged_ids"] = flagged_ids;
  out["ground_truth_poison_ids"] = ground_truth_poison_ids;
  out["false_positives"] = false_positives();
  if (method == Method::ngram) {
    out["flagged_tokens"] = flagged_tokens;
  }
  out["params"] = params;
  return out;
}

double detector_recall(const std::set<std::string>& flagged, const std::set<std::string>& truth) {
  if (truth.empty()) {
    return 1.0;
  }
  std::size_t hit = 0;
  for (const auto& id : truth) {
    hit += flagged.count(id);
  }
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// activation clustering

std::vector<std::size_t> activation_clustering(const MatrixXd& embeddings, std::uint64_t seed) {
  if (embeddings.rows() < 2) {
    throw DegenerateInput("activation clustering needs at least two samples");
  }
  const auto clusters = poisonkb::kmeans(embeddings, 2, seed);
  std::size_t size0 = 0;
  for (const auto a : clusters.assignments) {
    size0 += a == 0 ? 1 : 0;
  }
  const std::size_t size1 = clusters.assignments.size() - size0;
  if (size0 == size1) {
    return {};
  }
  const std::size_t smaller = size0 < size1 ? 0 : 1;
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < clusters.assignments.size(); ++i) {
    if (clusters.assignments[i] == smaller) {
      flagged.push_back(i);
    }
  }
  return flagged;
}

// ---------------------------------------------------------------------------
// spectral signature

VectorXd top_right_singular_vector(const MatrixXd& matrix, std::uint64_t seed,
                                   std::size_t* iterations) {
  const MatrixXd gram = matrix.transpose() * matrix;
  const Eigen::Index d = gram.rows();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    v(i) = normal(rng);
  }
  v.normalize();
  if (gram.squaredNorm() == 0.0) {
    if (iterations != nullptr) {
      *iterations = 0;
    }
    return v;
  }
  for (std::size_t it = 1; it <= kPowerMaxIterations; ++it) {
    VectorXd next = gram * v;
    const double norm = next.norm();
    if (norm == 0.0) {
      // v is orthogonal to the row space; restart from a basis direction.
      v = VectorXd::Unit(d, static_cast<Eigen::Index>(it % static_cast<std::size_t>(d)));
      continue;
    }
    next /= norm;
    if (next.dot(v) < 0.0) {
      next = -next;
    }
    const double change = (next - v).norm();
    v = std::move(next);
    if (change < kPowerTolerance) {
      if (iterations != nullptr) {
        *iterations = it;
      }
      // Fix the sign so the largest-magnitude component is positive.
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      return v(arg) < 0.0 ? VectorXd(-v) : v;
    }
  }
  throw PowerIterationDiverged("no convergence within " + std::to_string(kPowerMaxIterations) +
                               " iterations");
}

SpectralResult spectral_signature(const MatrixXd& embeddings, std::size_t flag_count,
                                  std::uint64_t seed) {
  const auto m = static_cast<std::size_t>(embeddings.rows());
  if (m < 2) {
    throw DegenerateInput("spectral signature needs at least two samples");
  }
  if (flag_count >= m) {
    throw DegenerateInput("flag count must be smaller than the sample count");
  }
  const RowVectorXd mean = embeddings.colwise().mean();
  const MatrixXd centred = embeddings.rowwise() - mean;
  SpectralResult out;
  out.top_direction = top_right_singular_vector(centred, seed, &out.iterations);
  out.scores = (centred * out.top_direction).array().square().matrix();
  if (centred.squaredNorm() == 0.0) {
    out.scores.setZero();
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.scores(static_cast<Eigen::Index>(a)) > out.scores(static_cast<Eigen::Index>(b));
  });
  out.flagged.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(flag_count));
  return out;
}

// ---------------------------------------------------------------------------
// n-gram screen

NGramModel::NGramModel(std::size_t order) : order_(order) {
  if (order_ == 0) {
    throw ConfigError("n-gram order must be at least 1");
  }
}

std::string NGramModel::key(const std::vector<std::string>& context, std::size_t width) const {
  std::string k = std::to_string(width);
  k.push_back('\x1f');
  const std::size_t skip = context.size() > width ? context.size() - width : 0;
  for (std::size_t pad = context.size(); pad < width; ++pad) {
    k.append(kPad);
    k.push_back('\x1f');
  }
  for (std::size_t i = skip; i < context.size(); ++i) {
    k.append(vocab_.count(context[i]) != 0 || context[i] == kPad ? context[i] : kUnknown);
    k.push_back('\x1f');
  }
  return k;
}

void NGramModel::fit(const corpus::Corpus& reference) {
  vocab_.clear();
  counts_.clear();
  context_totals_.clear();
  for (const auto& s : reference.snippets) {
    for (const auto& t : s.tokens) {
      vocab_.insert(t.text);
    }
  }
  for (const auto& s : reference.snippets) {
    std::vector<std::string> context;
    for (const auto& t : s.tokens) {
      for (std::size_t width = 0; width < order_; ++width) {
        const std::string k = key(context, width);
        ++counts_[k][t.text];
        ++context_totals_[k];
      }
      context.push_back(t.text);
    }
  }
}

double NGramModel::probability(const std::vector<std::string>& context,
                               const std::string& token) const {
  const std::string& w = vocab_.count(token) != 0 ? token : std::string(kUnknown);
  std::size_t c = 0;
  std::size_t total = 0;
  // Longest context seen in the reference; the empty context always is
  // unless the reference holds no tokens.
  for (std::size_t width = order_; width-- > 0;) {
    const std::string k = key(context, width);
    if (const auto it = counts_.find(k); it != counts_.end()) {
      if (const auto jt = it->second.find(w); jt != it->second.end()) {
        c = jt->second;
      }
      total = context_totals_.at(k);
      break;
    }
  }
  return (static_cast<double>(c) + 1.0) /
         (static_cast<double>(total) + static_cast<double>(vocabulary_size()));
}

std::vector<double> NGramModel::surprisals(const std::vector<std::string>& tokens) const {
  std::vector<double> out;
  out.reserve(tokens.size());
  std::vector<std::string> context;
  for (const auto& t : tokens) {
    out.push_back(-std::log(probability(context, t)));
    context.push_back(t);
  }
  return out;
}

std::vector<std::string> NGramModel::vocabulary() const {
  std::vector<std::string> v(vocab_.begin(), vocab_.end());
  v.emplace_back(kUnknown);
  return v;
}

NGramScreenResult ngram_screen(const corpus::Corpus& kb, const corpus::Corpus& reference,
                               const std::set<std::string>& truth, std::size_t order,
                               double z_threshold) {
  if (reference.snippets.empty()) {
    throw DegenerateInput("n-gram screen needs a non-empty reference corpus");
  }
  NGramModel model(order);
  model.fit(reference);

  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& s : kb.snippets) {
    std::vector<std::string> texts;
    texts.reserve(s.tokens.size());
    for (const auto& t : s.tokens) {
      texts.push_back(t.text);
    }
    const auto sur = model.surprisals(texts);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto& [sum, n] = sums[texts[i]];
      sum += sur[i];
      ++n;
    }
  }

  NGramScreenResult out;
  double mean = 0.0;
  for (const auto& [token, acc] : sums) {
    const double m = acc.first / static_cast<double>(acc.second);
    out.type_mean_surprisal[token] = m;
    mean += m;
  }
  const auto types = static_cast<double>(sums.size());
  if (!sums.empty()) {
    mean /= types;
  }
  double var = 0.0;
  for (const auto& [token, m] : out.type_mean_surprisal) {
    var += (m - mean) * (m - mean);
  }
  const double sd = sums.empty() ? 0.0 : std::sqrt(var / types);
  for (const auto& [token, m] : out.type_mean_surprisal) {
    const double z = sd > 0.0 ? (m - mean) / sd : 0.0;
    out.type_z_scores[token] = z;
    if (z > z_threshold) {
      out.report.flagged_tokens.insert(token);
    }
  }

  for (const auto& s : kb.snippets) {
    for (const auto& t : s.tokens) {
      if (out.report.flagged_tokens.count(t.text) != 0) {
        out.report.flagged_ids.insert(s.id);
        break;
      }
    }
  }
  out.report.method = Method::ngram;
  out.report.ground_truth_poison_ids = truth;
  out.report.recall = detector_recall(out.report.flagged_ids, truth);
  out.report.params["order"] = order;
  out.report.params["z_threshold"] = z_threshold;
  out.report.params["smoothing"] = "add-one";
  return out;
}

} // namespace venomracg::defense
