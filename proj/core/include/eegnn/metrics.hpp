#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace eegnn {

enum class MetricKind { accuracy, auroc, ap, macro_f1, mae };

std::string_view to_string(MetricKind k);
MetricKind parse_metric_kind(std::string_view s);
/// False only for mae.
bool higher_is_better(MetricKind k);

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth);

/// Area under the ROC curve from ranks, tied scores sharing their mean rank.
/// Throws InputError when labels contain a single class.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Sum over distinct score thresholds (descending) of
/// (recall_k - recall_{k-1}) * precision_k. Throws InputError with no positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// Unweighted mean of per-class F1 over classes 0..classes-1; a class with no
/// true and no predicted members scores 0.
double macro_f1(std::span<const std::size_t> pred, std::span<const std::size_t> truth,
                std::size_t classes);

double mae(std::span<const double> pred, std::span<const double> truth);

}  // namespace eegnn
