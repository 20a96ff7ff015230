#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "coride/market.hpp"
#include "coride/rng.hpp"

namespace coride {

/// Normalizers for the ranking feature layout
/// [origin embedding, destination embedding, price, duration, kind, dest entropy, dest gap].
struct FeatureConfig {
  double reference_price = 10.0;
  int max_duration = 8;
  double count_scale = 10.0;
};

inline constexpr int kScalarFeatures = 5;

inline int feature_length(int embed_dim) { return 2 * embed_dim + kScalarFeatures; }

/// Slot offsets within a ranking feature for embedding dimension d.
struct FeatureLayout {
  int embed_dim;
  int origin() const { return 0; }
  int destination() const { return embed_dim; }
  int price() const { return 2 * embed_dim; }
  int duration() const { return 2 * embed_dim + 1; }
  int kind() const { return 2 * embed_dim + 2; }
  int dest_entropy() const { return 2 * embed_dim + 3; }
  int dest_gap() const { return 2 * embed_dim + 4; }
  int size() const { return feature_length(embed_dim); }
};

/// Ranking feature for one candidate item. `embeddings` holds one row per grid.
Eigen::VectorXd featurize(const Order& order, const SimState& state, const Eigen::MatrixXd& embeddings,
                          const FeatureConfig& config);

/// Stacks features of several items as rows.
Eigen::MatrixXd featurize_all(std::span<const Order> items, const SimState& state, const Eigen::MatrixXd& embeddings,
                              const FeatureConfig& config);

/// score_i = weights . items.row(i)
Eigen::VectorXd score(const Eigen::VectorXd& weights, const Eigen::MatrixXd& items);

/// Boltzmann selection probabilities softmax(scores / temperature).
Eigen::VectorXd boltzmann_probabilities(std::span<const double> scores, double temperature);

/// Draws k distinct indices, each from the softmax over the items still
/// available. Throws std::invalid_argument when k > scores.size() or the
/// temperature is not positive.
std::vector<int> selected_k(std::span<const double> scores, int k, double temperature, Rng& rng);

/// Deterministic top-k, lowest index first on ties.
std::vector<int> top_k(std::span<const double> scores, int k);

struct TemperatureSchedule {
  double start = 1.0;
  double floor = 0.01;
  long horizon = 2880;
};

/// Exponential decay from start to floor over `horizon` steps, then flat.
double anneal_temperature(long step, const TemperatureSchedule& schedule);

}  // namespace coride
