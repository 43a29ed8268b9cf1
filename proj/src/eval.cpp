#include "gradtrust/eval.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

#include "gradtrust/error.hpp"
#include "text_format.hpp"

namespace gradtrust {
namespace {

// Degenerate samples sit in their own tier below or above every real score,
// including +inf.
struct RankKey {
  int tier;
  double value;

  friend auto operator<=>(const RankKey&, const RankKey&) = default;
};

RankKey rank_key(const TrustScore& s, DegeneratePolicy policy) {
  if (s.degenerate) return {policy == DegeneratePolicy::Bottom ? -1 : 1, 0.0};
  return {0, s.value};
}

// 1-based nearest rank ceil(p * m / bins), at least 1.
std::size_t nearest_rank(std::size_t p, std::size_t m, std::size_t bins) {
  return std::max<std::size_t>(1, (p * m + bins - 1) / bins);
}

void check_bins(std::size_t bins) {
  if (bins == 0) throw Error(ErrorCode::InvalidArgument, "bins must be positive");
}

// Macro or micro F1 of the rows at `positions` (indices into labels/predictions).
double f1_of(std::span<const std::size_t> positions, std::span<const std::int64_t> labels,
             std::span<const std::int64_t> predictions, F1Average average) {
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
  };
  std::map<std::int64_t, Counts> per_class;
  for (auto i : positions) {
    const auto y = labels[i];
    const auto yhat = predictions[i];
    ++per_class[y].support;
    if (y == yhat) {
      ++per_class[y].tp;
    } else {
      ++per_class[y].fn;
      ++per_class[yhat].fp;
    }
  }
  if (average == F1Average::Micro) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& [c, k] : per_class) {
      tp += k.tp;
      fp += k.fp;
      fn += k.fn;
    }
    const auto denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  double sum = 0.0;
  std::size_t classes = 0;
  for (const auto& [c, k] : per_class) {
    if (k.support == 0) continue;
    sum += 2.0 * static_cast<double>(k.tp) / static_cast<double>(2 * k.tp + k.fp + k.fn);
    ++classes;
  }
  return classes == 0 ? 0.0 : sum / static_cast<double>(classes);
}

EvalCurve make_curve(const ScoreTable& table, MetricId metric, CurveKind kind,
                     const EvalOptions& options) {
  const auto scores = table.scores(metric);
  std::vector<std::int64_t> labels, predictions;
  labels.reserve(table.rows.size());
  predictions.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    labels.push_back(r.label);
    predictions.push_back(r.prediction);
  }
  const auto values = curve_values(scores, labels, predictions, kind, options);
  EvalCurve curve{metric, kind, {}, area(values)};
  curve.points.reserve(values.size());
  for (std::size_t p = 0; p < values.size(); ++p) curve.points.push_back({p + 1, values[p]});
  return curve;
}

}  // namespace

std::string_view to_string(CurveKind kind) noexcept {
  return kind == CurveKind::Accuracy ? "accuracy" : "f1";
}

double percentile_threshold(std::span<const double> scores, std::size_t p, std::size_t bins) {
  check_bins(bins);
  if (scores.empty()) throw Error(ErrorCode::InvalidArgument, "percentile of an empty score set");
  if (p < 1 || p > bins) {
    throw Error(ErrorCode::InvalidArgument,
                "percentile " + std::to_string(p) + " outside 1.." + std::to_string(bins));
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted[nearest_rank(p, sorted.size(), bins) - 1];
}

std::vector<double> curve_values(std::span<const TrustScore> scores,
                                 std::span<const std::int64_t> labels,
                                 std::span<const std::int64_t> predictions, CurveKind kind,
                                 const EvalOptions& options) {
  check_bins(options.bins);
  const std::size_t m = scores.size();
  if (m == 0) throw Error(ErrorCode::InvalidArgument, "cannot evaluate an empty score table");
  if (labels.size() != m || predictions.size() != m) {
    throw Error(ErrorCode::ShapeMismatch, "scores, labels and predictions differ in length");
  }

  std::vector<RankKey> keys(m);
  for (std::size_t i = 0; i < m; ++i) keys[i] = rank_key(scores[i], options.degenerate);

  // Ascending by key, then by row index.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

  // correct_suffix[s] = correct rows among order[s..m)
  std::vector<std::size_t> correct_suffix(m + 1, 0);
  for (std::size_t s = m; s-- > 0;) {
    correct_suffix[s] = correct_suffix[s + 1] + (labels[order[s]] == predictions[order[s]] ? 1 : 0);
  }

  std::vector<double> values(options.bins);
  for (std::size_t p = 1; p <= options.bins; ++p) {
    const std::size_t rank = nearest_rank(p, m, options.bins);
    std::size_t start = rank - 1;
    if (options.retention == Retention::TiesIncluded) {
      const RankKey threshold = keys[order[rank - 1]];
      start = static_cast<std::size_t>(
          std::lower_bound(order.begin(), order.end(), threshold,
                           [&](std::size_t row, const RankKey& t) { return keys[row] < t; }) -
          order.begin());
    }
    const std::size_t retained = m - start;
    if (kind == CurveKind::Accuracy) {
      values[p - 1] = static_cast<double>(correct_suffix[start]) / static_cast<double>(retained);
    } else {
      values[p - 1] = f1_of(std::span(order).subspan(start), labels, predictions, options.f1);
    }
  }
  return values;
}

EvalCurve accuracy_curve(const ScoreTable& table, MetricId metric, const EvalOptions& options) {
  return make_curve(table, metric, CurveKind::Accuracy, options);
}

EvalCurve f1_curve(const ScoreTable& table, MetricId metric, const EvalOptions& options) {
  return make_curve(table, metric, CurveKind::F1, options);
}

double area(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return 100.0 * s / static_cast<double>(values.size());
}

double area(const EvalCurve& curve) {
  std::vector<double> values;
  values.reserve(curve.points.size());
  for (const auto& p : curve.points) values.push_back(p.value);
  return area(values);
}

EvalReport evaluate(const ScoreTable& table, std::span<const MetricId> metrics,
                    const EvalOptions& options) {
  for (auto id : metrics) {
    if (!table.column(id)) {
      throw Error(ErrorCode::InvalidArgument,
                  "score table has no column '" + std::string(to_string(id)) + "'");
    }
  }
  EvalReport report;
  const double m = static_cast<double>(table.rows.size());
  const double overall = static_cast<double>(table.correct_count()) / m;
  for (auto id : metrics) {
    auto acc = accuracy_curve(table, id, options);
    auto f1 = f1_curve(table, id, options);
    report.summary.push_back({id, acc.area, f1.area, overall, table.rows.size()});
    report.curves.push_back(std::move(acc));
    report.curves.push_back(std::move(f1));
  }
  return report;
}

void write_curves_csv(const EvalReport& report, std::ostream& out) {
  out << "metric,kind,percentile,value\n";
  for (const auto& c : report.curves) {
    for (const auto& p : c.points) {
      out << to_string(c.metric) << ',' << to_string(c.kind) << ',' << p.percentile << ','
          << text::shortest(p.value) << '\n';
    }
  }
}

void write_summary_csv(const EvalReport& report, std::ostream& out) {
  out << "metric,auac,aufc,overall_accuracy,m\n";
  for (const auto& s : report.summary) {
    out << to_string(s.metric) << ',' << text::fixed(s.auac, 2) << ',' << text::fixed(s.aufc, 2)
        << ',' << text::shortest(s.overall_accuracy) << ',' << s.m << '\n';
  }
}

void write_curve_svg(const EvalReport& report, MetricId metric, std::ostream& out) {
  constexpr double kWidth = 640, kHeight = 400, kPad = 40;
  const double plot_w = kWidth - 2 * kPad, plot_h = kHeight - 2 * kPad;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  out << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << plot_w << "\" height=\""
      << plot_h << "\" fill=\"none\" stroke=\"#888\"/>\n";
  out << "<text x=\"" << kPad << "\" y=\"" << kPad - 12 << "\" font-family=\"sans-serif\" "
      << "font-size=\"14\">" << to_string(metric) << "</text>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">percentile</text>\n";

  for (const auto& c : report.curves) {
    if (c.metric != metric || c.points.empty()) continue;
    const double x_max = static_cast<double>(c.points.back().percentile);
    const char* colour = c.kind == CurveKind::Accuracy ? "#1f77b4" : "#d62728";
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      const double x = kPad + plot_w * static_cast<double>(c.points[i].percentile) / x_max;
      const double y = kPad + plot_h * (1.0 - c.points[i].value);
      if (i) out << ' ';
      out << text::fixed(x, 2) << ',' << text::fixed(y, 2);
    }
    out << "\"/>\n";
    out << "<text x=\"" << kWidth - kPad << "\" y=\""
        << (c.kind == CurveKind::Accuracy ? kPad - 12 : kPad - 26)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\" fill=\"" << colour
        << "\">" << to_string(c.kind) << ' ' << text::fixed(c.area, 2) << "</text>\n";
  }
  out << "</svg>\n";
}

std::vector<std::filesystem::path> emit_curves(const EvalReport& report,
                                               const std::filesystem::path& out_dir, bool svg) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::filesystem::path& path, auto&& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    body(out);
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write to " + path.string() + " failed");
    written.push_back(path);
  };
  emit(out_dir / "curves.csv", [&](std::ostream& o) { write_curves_csv(report, o); });
  emit(out_dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(report, o); });
  if (svg) {
    for (const auto& s : report.summary) {
      emit(out_dir / (std::string(to_string(s.metric)) + ".svg"),
           [&](std::ostream& o) { write_curve_svg(report, s.metric, o); });
    }
  }
  return written;
}

}  // namespace gradtrust
