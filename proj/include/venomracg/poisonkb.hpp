#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "venomracg/corpus.hpp"
#include "venomracg/errors.hpp"
#include "venomracg/retriever.hpp"
#include "venomracg/types.hpp"

namespace venomracg::poisonkb {

// ---------------------------------------------------------------------------
// k-means

template <typename Scalar>
struct ClusterModel {
  MatrixX<Scalar> centroids;             // n x d
  std::vector<std::size_t> assignments;  // point -> centroid
  Scalar inertia = Scalar(0);            // sum of squared distances under assignments
  std::vector<Scalar> inertia_trace;     // one entry per assignment pass
  std::uint64_t seed = 0;
};

namespace detail {

// Index of the nearest centroid (ties to the lower index) and its squared distance.
template <typename Point, typename Scalar>
std::pair<std::size_t, Scalar> nearest(const Point& p, const MatrixX<Scalar>& centroids) {
  std::size_t best = 0;
  Scalar best_d = std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const Scalar d = (centroids.row(c) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(c);
    }
  }
  return {best, best_d};
}

template <typename Derived, typename Scalar>
Scalar assign(const Eigen::MatrixBase<Derived>& points, const MatrixX<Scalar>& centroids,
              std::vector<std::size_t>& assignments, std::vector<Scalar>& dist2) {
  Scalar inertia(0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto [c, d] = nearest(points.row(i), centroids);
    assignments[static_cast<std::size_t>(i)] = c;
    dist2[static_cast<std::size_t>(i)] = d;
    inertia += d;
  }
  return inertia;
}

} // namespace detail

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments no
/// longer change or after max_iters updates. A cluster left empty by an
/// update is re-seeded at the point farthest from its centroid.
template <typename Derived>
ClusterModel<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& points,
                                              std::size_t n, std::uint64_t seed,
                                              std::size_t max_iters = 100) {
  using Scalar = typename Derived::Scalar;
  const auto m = static_cast<std::size_t>(points.rows());
  if (n == 0) {
    throw DegenerateInput("cluster count must be at least 1");
  }
  if (m < n) {
    throw DegenerateInput("cannot form " + std::to_string(n) + " clusters from " +
                          std::to_string(m) + " points");
  }
  const Eigen::Index d = points.cols();
  std::mt19937_64 rng(seed);

  ClusterModel<Scalar> model;
  model.seed = seed;
  model.centroids.resize(static_cast<Eigen::Index>(n), d);

  // k-means++ seeding.
  std::vector<Scalar> dist2(m, std::numeric_limits<Scalar>::infinity());
  std::vector<char> chosen(m, 0);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pick = first;
    if (c > 0) {
      Scalar total(0);
      for (std::size_t i = 0; i < m; ++i) {
        total += dist2[i];
      }
      if (total > Scalar(0)) {
        std::uniform_real_distribution<double> u(0.0, static_cast<double>(total));
        double r = u(rng);
        pick = m;
        for (std::size_t i = 0; i < m; ++i) {
          r -= static_cast<double>(dist2[i]);
          if (r < 0.0 && dist2[i] > Scalar(0)) {
            pick = i;
            break;
          }
        }
        if (pick == m) { // rounding left r >= 0: take the last positive weight
          for (std::size_t i = m; i-- > 0;) {
            if (dist2[i] > Scalar(0)) {
              pick = i;
              break;
            }
          }
        }
      } else {
        // Every point coincides with a centroid already; take the next unused one.
        pick = static_cast<std::size_t>(
            std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
      }
    }
    chosen[pick] = 1;
    model.centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < m; ++i) {
      const Scalar dd =
          (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(pick)))
              .squaredNorm();
      dist2[i] = std::min(dist2[i], dd);
    }
  }

  model.assignments.assign(m, 0);
  model.inertia = detail::assign(points, model.centroids, model.assignments, dist2);
  model.inertia_trace.push_back(model.inertia);

  std::vector<std::size_t> next(m, 0);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    MatrixX<Scalar> sums = MatrixX<Scalar>::Zero(static_cast<Eigen::Index>(n), d);
    std::vector<std::size_t> sizes(n, 0);
    for (std::size_t i = 0; i < m; ++i) {
      sums.row(static_cast<Eigen::Index>(model.assignments[i])) +=
          points.row(static_cast<Eigen::Index>(i));
      ++sizes[model.assignments[i]];
    }
    std::vector<char> reseeded(m, 0);
    for (std::size_t c = 0; c < n; ++c) {
      const auto row = static_cast<Eigen::Index>(c);
      if (sizes[c] > 0) {
        model.centroids.row(row) = sums.row(row) / static_cast<Scalar>(sizes[c]);
        continue;
      }
      std::size_t far = 0;
      Scalar far_d(-1);
      for (std::size_t i = 0; i < m; ++i) {
        if (!reseeded[i] && dist2[i] > far_d) {
          far_d = dist2[i];
          far = i;
        }
      }
      reseeded[far] = 1;
      model.centroids.row(row) = points.row(static_cast<Eigen::Index>(far));
    }
    model.inertia = detail::assign(points, model.centroids, next, dist2);
    model.inertia_trace.push_back(model.inertia);
    if (next == model.assignments) {
      break;
    }
    model.assignments.swap(next);
  }
  return model;
}

// ---------------------------------------------------------------------------
// candidate selection

/// For each centroid, the index of the Euclidean-nearest pool row. Pairs are
/// taken closest-first, so a row nearest to several centroids goes to the
/// closest one and the others fall back to their next-nearest row. Distance
/// ties break on pool id, then centroid index.
std::vector<std::size_t> select_candidates(const MatrixXd& pool_embeddings,
                                           const std::vector<std::string>& pool_ids,
                                           const MatrixXd& centroids);

/// Unit-normalised code embeddings, one row per snippet.
MatrixXd embedding_matrix(const retriever::BiEncoderModel& model, const corpus::Corpus& corpus);

// ---------------------------------------------------------------------------
// role weights

struct RoleWeight {
  corpus::Role role = corpus::Role::other;
  std::size_t d_t = 0; // samples containing the role
  std::size_t c_t = 0; // total occurrences of the role
  double idf = 0.0;
  double fp = 0.0;
  double w_t = 0.0;
};

struct TypeWeightTable {
  std::array<RoleWeight, corpus::kRoleCount> roles{};
  double delta = 2.0;
  std::size_t N = 0;

  const RoleWeight& operator[](corpus::Role role) const {
    return roles[static_cast<std::size_t>(role)];
  }
};

inline constexpr double kDefaultDelta = 2.0;
inline constexpr double kDefaultTheta = 0.5;

TypeWeightTable type_weight_table(const corpus::Corpus& reference, double delta = kDefaultDelta);

// ---------------------------------------------------------------------------
// injection

/// 1 / (1 + exp(theta f_v w_t)) * cos(e_orig, e_mod).
double site_score(double theta, std::size_t f_v, double w_t, double cosine_similarity);

struct SiteChoice {
  corpus::CodeSnippet snippet;
  std::string variable;
  double site_score = 0.0;
};

SiteChoice syntax_semantic_inject(const corpus::CodeSnippet& snippet, const std::string& trigger,
                                  const retriever::BiEncoderModel& model,
                                  const TypeWeightTable& weights, double theta = kDefaultTheta);

// ---------------------------------------------------------------------------
// poison set

enum class Selection { cluster, shortest, random };

struct PoisonEntry {
  std::string vuln_id;
  std::size_t cluster = 0;
  corpus::CodeSnippet injected;
  std::string variable;
  double site_score = 0.0;
};

struct PoisonSet {
  std::vector<PoisonEntry> selected;
  std::size_t budget = 0;
  std::string trigger;
  std::vector<std::string> dropped; // candidates without a variable to replace

  std::vector<std::string> ids() const;
};

struct PoisonOptions {
  std::size_t budget = 10;
  Selection selection = Selection::cluster;
  std::uint64_t seed = 0;
  double theta = kDefaultTheta;
  std::size_t max_iters = 100;
};

/// Candidate pool indices for the given strategy, one per cluster/slot.
std::vector<std::size_t> choose_candidates(const corpus::Corpus& clustering_source,
                                           const corpus::Corpus& vuln_pool,
                                           const retriever::BiEncoderModel& model,
                                           const PoisonOptions& options);

PoisonSet build_poison_set(const corpus::Corpus& clustering_source, const corpus::Corpus& vuln_pool,
                           const retriever::BiEncoderModel& model, const TypeWeightTable& weights,
                           const std::string& trigger, const PoisonOptions& options);

/// K' = K followed by the poisons in selection order.
corpus::Corpus assemble_poisoned_kb(const corpus::Corpus& kb, const PoisonSet& poison);

enum class KbMode { white_box, black_box };

/// The corpus the attacker clusters: the KB itself, or the public proxy.
const corpus::Corpus& clustering_source(KbMode mode, const corpus::Corpus& kb,
                                        const corpus::Corpus* proxy);

/// [{vuln_id, cluster, variable, site_score, trigger}]
std::string poison_manifest_json(const PoisonSet& poison);

} // namespace venomracg::poisonkb
