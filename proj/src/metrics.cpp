#include "svt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "svt/errors.hpp"

namespace svt::metrics {

std::vector<double> moving_average(const std::vector<double>& values, int width) {
  if (values.empty()) throw InvalidConfig("moving average of an empty curve");
  if (width < 1) throw InvalidConfig("moving average width must be >= 1");
  const long n = static_cast<long>(values.size());
  const long left = width / 2;
  const long right = width - 1 - left;
  std::vector<double> out(values.size());
  for (long i = 0; i < n; ++i) {
    const long lo = std::max(0L, i - left);
    const long hi = std::min(n - 1, i + right);
    double sum = 0.0;
    for (long k = lo; k <= hi; ++k) sum += values[k];
    out[i] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

SmoothedCurve smooth(const dqn::LearningCurve& curve, int width) {
  return {curve.steps(), moving_average(curve.means(), width)};
}

NearOptimal near_optimal_detail(const std::vector<double>& smoothed, int window,
                                bool population_std) {
  if (smoothed.empty()) throw InvalidConfig("near-optimal value of an empty curve");
  if (window < 1) throw InvalidConfig("near-optimal window must be >= 1");
  NearOptimal r;
  r.argmax = static_cast<std::size_t>(std::max_element(smoothed.begin(), smoothed.end()) -
                                      smoothed.begin());
  const long n = static_cast<long>(smoothed.size());
  const long m = static_cast<long>(r.argmax);
  const long left = window / 2;
  const long right = window - 1 - left;
  r.window_begin = static_cast<std::size_t>(std::max(0L, m - left));
  r.window_end = static_cast<std::size_t>(std::min(n - 1, m + right) + 1);
  const double count = static_cast<double>(r.window_end - r.window_begin);
  double sum = 0.0;
  for (std::size_t k = r.window_begin; k < r.window_end; ++k) sum += smoothed[k];
  r.mean = sum / count;
  double ss = 0.0;
  for (std::size_t k = r.window_begin; k < r.window_end; ++k) {
    ss += (smoothed[k] - r.mean) * (smoothed[k] - r.mean);
  }
  const double denom = population_std || count < 2 ? count : count - 1;
  r.std = std::sqrt(ss / denom);
  r.value = std::min(r.mean - r.std, smoothed[r.argmax]);
  return r;
}

double near_optimal(const std::vector<double>& smoothed, int window) {
  return near_optimal_detail(smoothed, window).value;
}

namespace {

std::optional<double> relative(double y, double y_ref) {
  if (y_ref == 0.0) return std::nullopt;
  return (y - y_ref) / std::abs(y_ref);
}

void require_nonempty(const SmoothedCurve& c) {
  if (c.values.empty() || c.values.size() != c.steps.size()) {
    throw InvalidConfig("metric needs a nonempty curve with one step per value");
  }
}

}  // namespace

std::optional<double> jumpstart(const SmoothedCurve& transfer, const SmoothedCurve& reference) {
  require_nonempty(transfer);
  require_nonempty(reference);
  return relative(transfer.values.front(), reference.values.front());
}

std::optional<double> final_improvement(const SmoothedCurve& transfer,
                                        const SmoothedCurve& reference,
                                        const MetricOptions& options) {
  require_nonempty(transfer);
  require_nonempty(reference);
  const int w = options.near_optimal_window;
  return relative(near_optimal_detail(transfer.values, w, options.population_std).value,
                  near_optimal_detail(reference.values, w, options.population_std).value);
}

std::optional<long> first_crossing(const SmoothedCurve& curve, double threshold) {
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    if (curve.values[i] >= threshold) return curve.steps[i];
  }
  return std::nullopt;
}

std::optional<double> steps_to_threshold(const SmoothedCurve& transfer,
                                         const SmoothedCurve& reference,
                                         const MetricOptions& options) {
  require_nonempty(transfer);
  require_nonempty(reference);
  const double threshold =
      near_optimal_detail(reference.values, options.near_optimal_window, options.population_std)
          .value;
  const auto t_ref = first_crossing(reference, threshold);
  if (!t_ref) throw Error("reference curve never reaches its own near-optimal value");
  const auto t = first_crossing(transfer, threshold);
  if (!t) return std::nullopt;
  if (*t_ref == 0) {
    if (*t == 0) return 1.0;
    return std::nullopt;
  }
  return static_cast<double>(*t) / static_cast<double>(*t_ref);
}

TransferReport compute_report(int task, const std::string& architecture,
                              const dqn::LearningCurve& transfer,
                              const dqn::LearningCurve& reference, const MetricOptions& options) {
  const SmoothedCurve st = smooth(transfer, options.smoothing_width);
  const SmoothedCurve sr = smooth(reference, options.smoothing_width);
  TransferReport r;
  r.task = task;
  r.architecture = architecture;
  r.first_value = st.values.front();
  r.first_value_ref = sr.values.front();
  r.jumpstart = jumpstart(st, sr);
  r.jumpstart_raw = r.first_value - r.first_value_ref;
  r.near_optimal =
      near_optimal_detail(st.values, options.near_optimal_window, options.population_std).value;
  r.near_optimal_ref =
      near_optimal_detail(sr.values, options.near_optimal_window, options.population_std).value;
  r.final_improvement = final_improvement(st, sr, options);
  r.final_improvement_raw = r.near_optimal - r.near_optimal_ref;
  r.threshold = r.near_optimal_ref;
  r.threshold_step = first_crossing(st, r.threshold);
  r.threshold_step_ref = first_crossing(sr, r.threshold).value_or(0);
  r.step_ratio = steps_to_threshold(st, sr, options);
  return r;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

nlohmann::json to_json(const TransferReport& r) {
  return {{"task", r.task},
          {"architecture", r.architecture},
          {"jumpstart", opt(r.jumpstart)},
          {"jumpstart_raw", r.jumpstart_raw},
          {"final_improvement", opt(r.final_improvement)},
          {"final_improvement_raw", r.final_improvement_raw},
          {"step_ratio", opt(r.step_ratio)},
          {"first_value", r.first_value},
          {"first_value_ref", r.first_value_ref},
          {"near_optimal", r.near_optimal},
          {"near_optimal_ref", r.near_optimal_ref},
          {"threshold", r.threshold},
          {"threshold_step", r.threshold_step ? nlohmann::json(*r.threshold_step) : nullptr},
          {"threshold_step_ref", r.threshold_step_ref}};
}

TransferReport report_from_json(const nlohmann::json& j) {
  TransferReport r;
  r.task = j.at("task").get<int>();
  r.architecture = j.at("architecture").get<std::string>();
  r.jumpstart = opt_from(j.at("jumpstart"));
  r.jumpstart_raw = j.at("jumpstart_raw").get<double>();
  r.final_improvement = opt_from(j.at("final_improvement"));
  r.final_improvement_raw = j.at("final_improvement_raw").get<double>();
  r.step_ratio = opt_from(j.at("step_ratio"));
  r.first_value = j.at("first_value").get<double>();
  r.first_value_ref = j.at("first_value_ref").get<double>();
  r.near_optimal = j.at("near_optimal").get<double>();
  r.near_optimal_ref = j.at("near_optimal_ref").get<double>();
  r.threshold = j.at("threshold").get<double>();
  if (!j.at("threshold_step").is_null()) r.threshold_step = j.at("threshold_step").get<long>();
  r.threshold_step_ref = j.at("threshold_step_ref").get<long>();
  return r;
}

std::string format_value(std::optional<double> v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

void write_summary_csv(std::ostream& out, const std::vector<TransferReport>& reports) {
  out << "task,architecture,jumpstart,final_improvement,step_ratio\n";
  for (const auto& r : reports) {
    out << r.task << ',' << r.architecture << ',' << format_value(r.jumpstart) << ','
        << format_value(r.final_improvement) << ',' << format_value(r.step_ratio) << '\n';
  }
}

std::vector<TransferReport> read_summary_csv(std::istream& in) {
  std::vector<TransferReport> out;
  std::string line;
  bool header = true;
  auto cell = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    while (f.size() < 5) f.emplace_back();
    if (f.size() != 5) throw IoError("malformed summary row: " + line);
    TransferReport r;
    r.task = std::stoi(f[0]);
    r.architecture = f[1];
    r.jumpstart = cell(f[2]);
    r.final_improvement = cell(f[3]);
    r.step_ratio = cell(f[4]);
    out.push_back(r);
  }
  return out;
}

}  // namespace svt::metrics
