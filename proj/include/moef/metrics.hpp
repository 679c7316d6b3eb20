#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "moef/types.hpp"

namespace moef {

enum class MovementLabel { Fall, Neutral, Rise };

inline const std::vector<MovementLabel>& movement_labels() {
  static const std::vector<MovementLabel> all{MovementLabel::Fall, MovementLabel::Neutral, MovementLabel::Rise};
  return all;
}

inline std::string to_string(MovementLabel m) {
  switch (m) {
    case MovementLabel::Fall: return "Fall";
    case MovementLabel::Neutral: return "Neutral";
    case MovementLabel::Rise: return "Rise";
  }
  return "?";
}

// Thresholds at +-0.5 percent, both boundaries counted as Neutral.
inline MovementLabel label_from_pct(double pct) {
  if (pct < -0.5) return MovementLabel::Fall;
  if (pct > 0.5) return MovementLabel::Rise;
  return MovementLabel::Neutral;
}

inline double pct_change(double close_t, double close_prev) {
  if (close_prev == 0.0) throw DomainError("pct_change: previous close is zero");
  return (close_t - close_prev) / close_prev * 100.0;
}

struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::int64_t>> counts;  // rows = truth, cols = predicted

  std::int64_t total() const {
    std::int64_t s = 0;
    for (const auto& r : counts)
      for (auto c : r) s += c;
    return s;
  }
};

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct ClassificationReport {
  double f1 = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::vector<ClassMetrics> per_class;
  ConfusionMatrix confusion;
};

// Per-class precision / recall / F1 (0 when a denominator vanishes) averaged
// with the true-class supports as weights.
template <typename Label, typename NameFn>
ClassificationReport weighted_classification_report(const std::vector<Label>& truth, const std::vector<Label>& pred,
                                                    const std::vector<Label>& classes, NameFn name_of) {
  if (truth.size() != pred.size()) throw SequenceError("weighted_classification_report: length mismatch");
  if (truth.empty()) throw DomainError("weighted_classification_report: empty input");
  const std::size_t K = classes.size();
  auto index_of = [&](const Label& l) {
    const auto it = std::find(classes.begin(), classes.end(), l);
    if (it == classes.end()) throw DomainError("weighted_classification_report: label outside class set");
    return static_cast<std::size_t>(it - classes.begin());
  };

  ClassificationReport rep;
  rep.confusion.counts.assign(K, std::vector<std::int64_t>(K, 0));
  for (const auto& c : classes) rep.confusion.class_names.push_back(name_of(c));
  for (std::size_t i = 0; i < truth.size(); ++i) rep.confusion.counts[index_of(truth[i])][index_of(pred[i])] += 1;

  const auto& cm = rep.confusion.counts;
  std::int64_t diag = 0;
  double total_support = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    std::int64_t row = 0, col = 0;
    for (std::size_t j = 0; j < K; ++j) {
      row += cm[k][j];
      col += cm[j][k];
    }
    const auto tp = static_cast<double>(cm[k][k]);
    ClassMetrics m;
    m.name = rep.confusion.class_names[k];
    m.support = row;
    m.precision = col > 0 ? tp / static_cast<double>(col) : 0.0;
    m.recall = row > 0 ? tp / static_cast<double>(row) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    diag += cm[k][k];
    total_support += static_cast<double>(row);
    rep.precision += static_cast<double>(row) * m.precision;
    rep.recall += static_cast<double>(row) * m.recall;
    rep.f1 += static_cast<double>(row) * m.f1;
    rep.per_class.push_back(std::move(m));
  }
  rep.precision /= total_support;
  rep.recall /= total_support;
  rep.f1 /= total_support;
  rep.accuracy = static_cast<double>(diag) / static_cast<double>(truth.size());
  return rep;
}

inline ClassificationReport weighted_classification_report(const std::vector<MovementLabel>& truth,
                                                           const std::vector<MovementLabel>& pred) {
  return weighted_classification_report(truth, pred, movement_labels(),
                                        [](MovementLabel m) { return to_string(m); });
}

// (1/C) sum_c ||truth_c - pred_c||^2 over an H x C table (rows = horizon steps).
inline double horizon_mse(const std::vector<std::vector<double>>& truth, const std::vector<std::vector<double>>& pred) {
  if (truth.size() != pred.size()) throw SequenceError("horizon_mse: shape mismatch");
  if (truth.empty()) return 0.0;
  const std::size_t C = truth.front().size();
  if (C == 0) throw SequenceError("horizon_mse: no channels");
  double s = 0.0;
  for (std::size_t h = 0; h < truth.size(); ++h) {
    if (truth[h].size() != C || pred[h].size() != C) throw SequenceError("horizon_mse: shape mismatch");
    for (std::size_t c = 0; c < C; ++c) s += (truth[h][c] - pred[h][c]) * (truth[h][c] - pred[h][c]);
  }
  return s / static_cast<double>(C);
}

inline double round4(double x) { return std::round(x * 1e4) / 1e4; }

}  // namespace moef
