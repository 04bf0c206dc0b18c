#pragma once

// Analytic gradients against central finite differences, per parameter group.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "spanprobe/probe.hpp"

namespace spanprobe {

struct GradCheckOptions {
  double step = 1e-4;
  // Denominator floor of the relative error, so near-zero gradients are
  // compared absolutely instead of amplifying finite-difference noise.
  double denominator_floor = 1e-6;
  std::size_t max_coords_per_group = 0;  // 0 checks every coordinate
  std::uint64_t seed = 0;                // picks coordinates when limited
  // Harness self-test: scale the analytic gradient of one group.
  std::optional<ParamGroup> perturb_group;
  double perturb_factor = 1.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::map<ParamGroup, double> group_max_rel_error;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // coordinates whose +-step crosses a ReLU kink
};

namespace detail {

inline std::vector<char> relu_pattern(const ProbeParams<double>& params, const RecordView& batch) {
  std::vector<char> pattern;
  pattern.reserve(batch.size() * params.shape.hidden);
  ForwardCache<double> c(params.shape);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_into(params, batch.dims, batch[i], c);
    for (double a : c.a) pattern.push_back(a > 0.0);
  }
  return pattern;
}

}  // namespace detail

/// Maximum relative error between the analytic gradient of the mean batch
/// loss and central differences, over all groups. Evaluated in double.
inline GradCheckReport check_gradients(const ProbeParams<double>& params, const RecordView& batch,
                                       const GradCheckOptions& opt = {}) {
  if (batch.empty()) throw ConfigError("gradient check needs a nonempty batch");
  std::vector<double> analytic;
  batch_loss_and_gradient(params, batch, analytic);
  if (opt.perturb_group) {
    auto [b, e] = group_range(params.shape, *opt.perturb_group);
    for (std::size_t i = b; i < e; ++i) analytic[i] *= opt.perturb_factor;
  }

  const auto base_pattern = detail::relu_pattern(params, batch);
  GradCheckReport report;
  ProbeParams<double> probe = params;
  Rng rng(opt.seed);

  for (ParamGroup g : kAllParamGroups) {
    auto [b, e] = group_range(params.shape, g);
    std::vector<std::size_t> coords(e - b);
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = b + i;
    if (opt.max_coords_per_group && coords.size() > opt.max_coords_per_group) {
      rng.shuffle(std::span(coords));
      coords.resize(opt.max_coords_per_group);
    }
    double group_max = 0.0;
    for (std::size_t idx : coords) {
      const double original = probe.data[idx];
      probe.data[idx] = original + opt.step;
      const double up = batch_loss(probe, batch);
      const bool kink_up = detail::relu_pattern(probe, batch) != base_pattern;
      probe.data[idx] = original - opt.step;
      const double down = batch_loss(probe, batch);
      const bool kink_down = detail::relu_pattern(probe, batch) != base_pattern;
      probe.data[idx] = original;
      if (kink_up || kink_down) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (up - down) / (2.0 * opt.step);
      const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), opt.denominator_floor});
      group_max = std::max(group_max, std::abs(analytic[idx] - numeric) / denom);
      ++report.checked;
    }
    report.group_max_rel_error[g] = group_max;
    report.max_rel_error = std::max(report.max_rel_error, group_max);
  }
  return report;
}

}  // namespace spanprobe
