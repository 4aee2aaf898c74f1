#include "eegnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "eegnn/errors.hpp"

namespace eegnn {

std::string_view to_string(MetricKind k) {
  switch (k) {
    case MetricKind::accuracy: return "accuracy";
    case MetricKind::auroc: return "auroc";
    case MetricKind::ap: return "ap";
    case MetricKind::macro_f1: return "macro_f1";
    case MetricKind::mae: return "mae";
  }
  return "?";
}

MetricKind parse_metric_kind(std::string_view s) {
  for (auto k : {MetricKind::accuracy, MetricKind::auroc, MetricKind::ap, MetricKind::macro_f1,
                 MetricKind::mae})
    if (to_string(k) == s) return k;
  throw InputError("unknown metric '" + std::string(s) +
                       "' (expected accuracy, auroc, ap, macro_f1, mae)",
                   "metric");
}

bool higher_is_better(MetricKind k) { return k != MetricKind::mae; }

namespace {

void require_same_length(const char* op, std::size_t a, std::size_t b) {
  if (a != b)
    throw ShapeError(std::string(op) + ": lengths " + std::to_string(a) + " and " + std::to_string(b));
  if (a == 0) throw InputError(std::string(op) + " of an empty set", "metric");
}

std::size_t count_positives(std::span<const int> labels) {
  std::size_t p = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw InputError("binary labels must be 0 or 1", "labels");
    p += static_cast<std::size_t>(y);
  }
  return p;
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return order;
}

}  // namespace

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  require_same_length("accuracy", pred.size(), truth.size());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  require_same_length("auroc", scores.size(), labels.size());
  const std::size_t n = scores.size();
  const std::size_t pos = count_positives(labels);
  if (pos == 0 || pos == n) throw InputError("auroc needs both classes in the labels", "labels");
  const auto order = order_by_score(scores, false);
  // twice the rank sum of positives keeps tied half-ranks integral
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double twice_mean_rank = static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) twice_rank_sum += twice_mean_rank;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double q = static_cast<double>(n - pos);
  const double twice_u = twice_rank_sum - p * (p + 1.0);
  return twice_u / (2.0 * p * q);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  require_same_length("average_precision", scores.size(), labels.size());
  const std::size_t n = scores.size();
  const std::size_t pos = count_positives(labels);
  if (pos == 0) throw InputError("average precision needs at least one positive", "labels");
  const auto order = order_by_score(scores, true);
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) (labels[order[k]] == 1 ? tp : fp) += 1;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return ap;
}

double macro_f1(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                std::size_t classes) {
  require_same_length("macro_f1", pred.size(), truth.size());
  if (classes == 0) throw InputError("needs at least one class", "classes");
  std::vector<std::size_t> tp(classes), fp(classes), fn(classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= classes || truth[i] >= classes)
      throw InputError("class index outside [0, " + std::to_string(classes) + ")", "labels");
    if (pred[i] == truth[i]) {
      ++tp[pred[i]];
    } else {
      ++fp[pred[i]];
      ++fn[truth[i]];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) total += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return total / static_cast<double>(classes);
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  require_same_length("mae", pred.size(), truth.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

}  // namespace eegnn
