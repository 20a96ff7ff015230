#include "coride/ranking.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace coride {

Eigen::VectorXd featurize(const Order& order, const SimState& state, const Eigen::MatrixXd& embeddings,
                          const FeatureConfig& config) {
  const int grids = state.grid_count();
  if (embeddings.rows() != grids) throw std::invalid_argument("embedding table must have one row per grid");
  if (order.origin < 0 || order.origin >= grids || order.destination < 0 || order.destination >= grids) {
    throw std::invalid_argument("featurize: unknown grid");
  }
  const int d = static_cast<int>(embeddings.cols());
  const FeatureLayout layout{d};
  Eigen::VectorXd e(layout.size());
  e.segment(layout.origin(), d) = embeddings.row(order.origin).transpose();
  e.segment(layout.destination(), d) = embeddings.row(order.destination).transpose();
  e[layout.price()] = order.price / config.reference_price;
  e[layout.duration()] = static_cast<double>(order.duration) / config.max_duration;
  e[layout.kind()] = order.is_fake() ? 1.0 : 0.0;
  const int dest_idle = state.idle[order.destination];
  const int dest_orders = static_cast<int>(state.pending[order.destination].size());
  e[layout.dest_entropy()] = entropy(dest_idle, dest_orders);
  e[layout.dest_gap()] = (dest_orders - dest_idle) / config.count_scale;
  return e;
}

Eigen::MatrixXd featurize_all(std::span<const Order> items, const SimState& state, const Eigen::MatrixXd& embeddings,
                              const FeatureConfig& config) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(items.size()), feature_length(static_cast<int>(embeddings.cols())));
  for (std::size_t i = 0; i < items.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = featurize(items[i], state, embeddings, config).transpose();
  }
  return rows;
}

Eigen::VectorXd score(const Eigen::VectorXd& weights, const Eigen::MatrixXd& items) {
  if (items.rows() > 0 && items.cols() != weights.size()) {
    throw std::invalid_argument("score: weight/feature dimension mismatch");
  }
  return items * weights;
}

Eigen::VectorXd boltzmann_probabilities(std::span<const double> scores, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  Eigen::VectorXd p(static_cast<Eigen::Index>(scores.size()));
  if (scores.empty()) return p;
  const double top = *std::max_element(scores.begin(), scores.end());
  for (std::size_t i = 0; i < scores.size(); ++i) p[i] = std::exp((scores[i] - top) / temperature);
  return p / p.sum();
}

std::vector<int> selected_k(std::span<const double> scores, int k, double temperature, Rng& rng) {
  if (k < 0 || k > static_cast<int>(scores.size())) throw std::invalid_argument("selected_k: k exceeds item count");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  std::vector<int> remaining(scores.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<int> chosen;
  chosen.reserve(k);
  std::vector<double> weights(scores.size());
  for (int draw = 0; draw < k; ++draw) {
    double top = -std::numeric_limits<double>::infinity();
    for (int i : remaining) top = std::max(top, scores[i]);
    double total = 0.0;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      weights[j] = std::exp((scores[remaining[j]] - top) / temperature);
      total += weights[j];
    }
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    std::size_t pick = remaining.size() - 1;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      acc += weights[j];
      if (u < acc) {
        pick = j;
        break;
      }
    }
    chosen.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return chosen;
}

std::vector<int> top_k(std::span<const double> scores, int k) {
  if (k < 0 || k > static_cast<int>(scores.size())) throw std::invalid_argument("top_k: k exceeds item count");
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  idx.resize(k);
  return idx;
}

double anneal_temperature(long step, const TemperatureSchedule& schedule) {
  if (step <= 0) return schedule.start;
  if (schedule.horizon <= 0 || step >= schedule.horizon) return schedule.floor;
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.horizon);
  return schedule.start * std::pow(schedule.floor / schedule.start, frac);
}

}  // namespace coride
