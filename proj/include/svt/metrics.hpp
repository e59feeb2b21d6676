#pragma once

// Learning-curve smoothing and the transfer metrics: jumpstart, final
// improvement and the steps-to-threshold ratio.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "svt/dqn.hpp"

namespace svt::metrics {

struct SmoothedCurve {
  std::vector<long> steps;
  std::vector<double> values;
};

struct MetricOptions {
  int smoothing_width = 20;
  int near_optimal_window = 100;
  bool population_std = true;
};

/// Centered window of `width` points: width / 2 before, the rest after,
/// clipped to the points that exist. Throws InvalidConfig on an empty input
/// or width < 1.
std::vector<double> moving_average(const std::vector<double>& values, int width = 20);
SmoothedCurve smooth(const dqn::LearningCurve& curve, int width = 20);

struct NearOptimal {
  double value = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t argmax = 0;
  std::size_t window_begin = 0;
  std::size_t window_end = 0;  // exclusive
};

/// mu - sigma over a window around the earliest maximum, never above that
/// maximum.
NearOptimal near_optimal_detail(const std::vector<double>& smoothed, int window = 100,
                                bool population_std = true);
double near_optimal(const std::vector<double>& smoothed, int window = 100);

/// (y - y_ref) / |y_ref| on the first smoothed values; nullopt when y_ref = 0.
std::optional<double> jumpstart(const SmoothedCurve& transfer, const SmoothedCurve& reference);

std::optional<double> final_improvement(const SmoothedCurve& transfer,
                                        const SmoothedCurve& reference,
                                        const MetricOptions& options = {});

/// First step at which values reach threshold, if any.
std::optional<long> first_crossing(const SmoothedCurve& curve, double threshold);

/// t / t_ref for the threshold near_optimal(reference); nullopt when the
/// transfer curve never gets there.
std::optional<double> steps_to_threshold(const SmoothedCurve& transfer,
                                         const SmoothedCurve& reference,
                                         const MetricOptions& options = {});

struct TransferReport {
  int task = 0;
  std::string architecture;
  std::optional<double> jumpstart;
  double jumpstart_raw = 0.0;
  std::optional<double> final_improvement;
  double final_improvement_raw = 0.0;
  std::optional<double> step_ratio;
  double first_value = 0.0;
  double first_value_ref = 0.0;
  double near_optimal = 0.0;
  double near_optimal_ref = 0.0;
  double threshold = 0.0;
  std::optional<long> threshold_step;
  long threshold_step_ref = 0;
};

TransferReport compute_report(int task, const std::string& architecture,
                              const dqn::LearningCurve& transfer,
                              const dqn::LearningCurve& reference,
                              const MetricOptions& options = {});

nlohmann::json to_json(const TransferReport& r);
TransferReport report_from_json(const nlohmann::json& j);

/// task,architecture,jumpstart,final_improvement,step_ratio with empty
/// cells for undefined values.
void write_summary_csv(std::ostream& out, const std::vector<TransferReport>& reports);
std::vector<TransferReport> read_summary_csv(std::istream& in);

/// %.17g, or an empty string for nullopt.
std::string format_value(std::optional<double> v);

}  // namespace svt::metrics
