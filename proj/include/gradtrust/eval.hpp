#pragma once
// Misprediction-detection evaluation over trust scores.
//
// For percentile level p = 1..bins the samples whose score reaches the p-th
// nearest-rank percentile are retained, and accuracy (or F1) of the retained
// subset is recorded. A good trust score concentrates correct predictions at
// high percentiles, so its curve rises and its area (100 x mean of the
// curve, AUAC / AUFC) grows.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "gradtrust/score_table.hpp"

namespace gradtrust {

inline constexpr std::size_t kDefaultBins = 100;

enum class CurveKind { Accuracy, F1 };
std::string_view to_string(CurveKind kind) noexcept;

// Where degenerate GradTrust samples rank relative to every real score.
enum class DegeneratePolicy { Bottom, Top };

enum class F1Average {
  Macro,  // mean over classes with support in the retained subset
  Micro,  // pooled counts; equals accuracy for single-label data
};

enum class Retention {
  TiesIncluded,  // every sample scoring >= the threshold
  ExactCount,    // exactly the top M - t + 1 ranks, ties broken by row order
};

struct EvalOptions {
  std::size_t bins = kDefaultBins;
  DegeneratePolicy degenerate = DegeneratePolicy::Bottom;
  F1Average f1 = F1Average::Macro;
  Retention retention = Retention::TiesIncluded;
};

struct CurvePoint {
  std::size_t percentile;
  double value;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct EvalCurve {
  MetricId metric;
  CurveKind kind;
  std::vector<CurvePoint> points;
  double area;

  friend bool operator==(const EvalCurve&, const EvalCurve&) = default;
};

// Ascending-sorted value at 1-based rank ceil(p * M / bins). Throws
// InvalidArgument for p outside 1..bins or empty scores.
double percentile_threshold(std::span<const double> scores, std::size_t p,
                            std::size_t bins = kDefaultBins);

// Raw curve values for one score column.
std::vector<double> curve_values(std::span<const TrustScore> scores,
                                 std::span<const std::int64_t> labels,
                                 std::span<const std::int64_t> predictions, CurveKind kind,
                                 const EvalOptions& options = {});

EvalCurve accuracy_curve(const ScoreTable& table, MetricId metric, const EvalOptions& options = {});
EvalCurve f1_curve(const ScoreTable& table, MetricId metric, const EvalOptions& options = {});

// 100 x arithmetic mean of the curve values.
double area(const EvalCurve& curve);
double area(std::span<const double> values);

struct MetricSummary {
  MetricId metric;
  double auac;
  double aufc;
  double overall_accuracy;
  std::size_t m;
};

struct EvalReport {
  std::vector<EvalCurve> curves;  // accuracy then F1, per metric in request order
  std::vector<MetricSummary> summary;
};

// Throws InvalidArgument naming the first requested metric missing from the table.
EvalReport evaluate(const ScoreTable& table, std::span<const MetricId> metrics,
                    const EvalOptions& options = {});

void write_curves_csv(const EvalReport& report, std::ostream& out);
void write_summary_csv(const EvalReport& report, std::ostream& out);
void write_curve_svg(const EvalReport& report, MetricId metric, std::ostream& out);

// Writes curves.csv and summary.csv into out_dir (created if needed), plus
// <metric>.svg per metric when svg is set. Returns the paths written.
std::vector<std::filesystem::path> emit_curves(const EvalReport& report,
                                               const std::filesystem::path& out_dir,
                                               bool svg = false);

}  // namespace gradtrust
