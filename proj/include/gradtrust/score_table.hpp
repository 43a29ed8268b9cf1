#pragma once
// Per-sample trust scores for a set of metrics, and their CSV form:
//   sample_id,label,prediction,correct,<metric>...
// Scores are written in shortest round-trip form; +inf as "inf"; degenerate
// GradTrust samples as the token "degenerate".

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "gradtrust/baselines.hpp"
#include "gradtrust/bundle.hpp"
#include "gradtrust/trust.hpp"

namespace gradtrust {

inline constexpr std::string_view kDegenerateToken = "degenerate";

struct ScoreRow {
  std::int64_t sample_id = 0;
  std::int64_t label = 0;
  std::int64_t prediction = 0;
  bool correct = false;
  std::vector<TrustScore> scores;  // aligned with ScoreTable::metrics

  friend bool operator==(const ScoreRow&, const ScoreRow&) = default;
};

struct ScoreTable {
  std::vector<MetricId> metrics;
  std::vector<ScoreRow> rows;

  // Column index of a metric; nullopt when absent.
  std::optional<std::size_t> column(MetricId id) const;
  std::vector<TrustScore> scores(MetricId id) const;
  std::size_t correct_count() const;

  friend bool operator==(const ScoreTable&, const ScoreTable&) = default;
};

struct ScoringOptions {
  TrustOptions trust;
  MarginMode margin = MarginMode::Probability;
};

// Scores every sample of a bundle. Sample ids are 0..M-1 in bundle order.
ScoreTable score_bundle(const LastLayerBundle& bundle, std::span<const MetricId> metrics,
                        const ScoringOptions& options = {});

// Throws Error(Validation) on duplicate ids or correct != (label == prediction).
void check_score_table(const ScoreTable& table);

void write_scores_csv(const ScoreTable& table, std::ostream& out);
// Throws Error(Parse) naming the offending line.
ScoreTable read_scores_csv(std::istream& in);

}  // namespace gradtrust
