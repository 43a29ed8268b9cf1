#include "gradtrust/score_table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <string>

#include "gradtrust/error.hpp"
#include "text_format.hpp"

namespace gradtrust {
namespace {

constexpr std::array<std::string_view, 4> kFixedColumns = {"sample_id", "label", "prediction",
                                                           "correct"};

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw Error(ErrorCode::Parse, "scores CSV line " + std::to_string(line_no) + ": " + what);
}

std::int64_t parse_int(std::string_view field, std::size_t line_no, std::string_view column) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    parse_fail(line_no, "column '" + std::string(column) + "' is not an integer: '" +
                            std::string(field) + "'");
  }
  return v;
}

TrustScore parse_score(std::string_view field, std::size_t line_no, std::string_view column) {
  if (field == kDegenerateToken) return {0.0, true};
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || std::isnan(v)) {
    parse_fail(line_no, "column '" + std::string(column) + "' is not a score: '" +
                            std::string(field) + "'");
  }
  return {v, false};
}

}  // namespace

std::optional<std::size_t> ScoreTable::column(MetricId id) const {
  const auto it = std::find(metrics.begin(), metrics.end(), id);
  if (it == metrics.end()) return std::nullopt;
  return static_cast<std::size_t>(it - metrics.begin());
}

std::vector<TrustScore> ScoreTable::scores(MetricId id) const {
  const auto col = column(id);
  if (!col) {
    throw Error(ErrorCode::InvalidArgument,
                "score table has no column '" + std::string(to_string(id)) + "'");
  }
  std::vector<TrustScore> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.scores[*col]);
  return out;
}

std::size_t ScoreTable::correct_count() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const ScoreRow& r) { return r.correct; }));
}

ScoreTable score_bundle(const LastLayerBundle& bundle, std::span<const MetricId> metrics,
                        const ScoringOptions& options) {
  const LastLayerBundle full = ensure_logits(bundle);
  ScoreTable table;
  table.metrics.assign(metrics.begin(), metrics.end());

  std::vector<TrustScore> gradtrust;
  if (std::find(metrics.begin(), metrics.end(), MetricId::GradTrust) != metrics.end()) {
    gradtrust = batch_gradtrust(full, options.trust);
  }

  table.rows.reserve(full.samples());
  for (std::size_t s = 0; s < full.samples(); ++s) {
    const Vector logits = full.logits->row_vector(s);
    const Vector features = full.features.row_vector(s);
    ScoreRow row;
    row.sample_id = static_cast<std::int64_t>(s);
    row.label = full.labels[s];
    row.prediction = static_cast<std::int64_t>(predict(logits));
    row.correct = row.label == row.prediction;
    for (auto id : metrics) {
      switch (id) {
        case MetricId::Softmax: row.scores.push_back({softmax_confidence(logits)}); break;
        case MetricId::Entropy: row.scores.push_back({entropy_trust(logits)}); break;
        case MetricId::Nll: row.scores.push_back({nll_trust(logits)}); break;
        case MetricId::Margin: row.scores.push_back({margin_trust(logits, options.margin)}); break;
        case MetricId::GradNorm: row.scores.push_back({gradnorm_trust(features, logits)}); break;
        case MetricId::GradTrust: row.scores.push_back(gradtrust[s]); break;
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void check_score_table(const ScoreTable& table) {
  std::set<std::int64_t> ids;
  for (const auto& r : table.rows) {
    if (!ids.insert(r.sample_id).second) {
      throw Error(ErrorCode::Validation, "duplicate sample_id " + std::to_string(r.sample_id));
    }
    if (r.correct != (r.label == r.prediction)) {
      throw Error(ErrorCode::Validation,
                  "sample " + std::to_string(r.sample_id) + ": correct flag disagrees with label/prediction");
    }
    if (r.scores.size() != table.metrics.size()) {
      throw Error(ErrorCode::Validation,
                  "sample " + std::to_string(r.sample_id) + ": score count != metric count");
    }
    for (const auto& s : r.scores) {
      if (!s.degenerate && std::isnan(s.value)) {
        throw Error(ErrorCode::Validation, "sample " + std::to_string(r.sample_id) + ": NaN score");
      }
    }
  }
}

void write_scores_csv(const ScoreTable& table, std::ostream& out) {
  std::string line;
  for (auto c : kFixedColumns) {
    if (!line.empty()) line += ',';
    line += c;
  }
  for (auto id : table.metrics) {
    line += ',';
    line += to_string(id);
  }
  out << line << '\n';
  for (const auto& r : table.rows) {
    line = std::to_string(r.sample_id) + ',' + std::to_string(r.label) + ',' +
           std::to_string(r.prediction) + ',' + (r.correct ? "1" : "0");
    for (const auto& s : r.scores) {
      line += ',';
      line += s.degenerate ? std::string(kDegenerateToken) : text::shortest(s.value);
    }
    out << line << '\n';
  }
}

ScoreTable read_scores_csv(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;
  if (!std::getline(in, raw)) parse_fail(1, "missing header row");
  ++line_no;
  if (!raw.empty() && raw.back() == '\r') raw.pop_back();
  const auto header = split_commas(raw);
  if (header.size() < kFixedColumns.size()) parse_fail(line_no, "header has too few columns");
  for (std::size_t i = 0; i < kFixedColumns.size(); ++i) {
    if (header[i] != kFixedColumns[i]) {
      parse_fail(line_no, "expected column '" + std::string(kFixedColumns[i]) + "', found '" +
                              std::string(header[i]) + "'");
    }
  }
  ScoreTable table;
  for (std::size_t i = kFixedColumns.size(); i < header.size(); ++i) {
    const auto id = parse_metric(header[i]);
    if (!id) parse_fail(line_no, "unknown metric column '" + std::string(header[i]) + "'");
    if (table.column(*id)) parse_fail(line_no, "duplicate metric column '" + std::string(header[i]) + "'");
    table.metrics.push_back(*id);
  }

  std::set<std::int64_t> ids;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty()) continue;
    const auto fields = split_commas(raw);
    if (fields.size() != header.size()) {
      parse_fail(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                              std::to_string(fields.size()));
    }
    ScoreRow row;
    row.sample_id = parse_int(fields[0], line_no, header[0]);
    row.label = parse_int(fields[1], line_no, header[1]);
    row.prediction = parse_int(fields[2], line_no, header[2]);
    const auto correct = parse_int(fields[3], line_no, header[3]);
    if (correct != 0 && correct != 1) parse_fail(line_no, "column 'correct' must be 0 or 1");
    row.correct = correct == 1;
    if (row.correct != (row.label == row.prediction)) {
      parse_fail(line_no, "column 'correct' disagrees with label/prediction");
    }
    if (!ids.insert(row.sample_id).second) {
      parse_fail(line_no, "duplicate sample_id " + std::to_string(row.sample_id));
    }
    for (std::size_t i = kFixedColumns.size(); i < fields.size(); ++i) {
      row.scores.push_back(parse_score(fields[i], line_no, header[i]));
    }
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) parse_fail(line_no, "no data rows");
  return table;
}

}  // namespace gradtrust
