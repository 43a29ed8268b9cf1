// gradtrust: score last-layer bundles, evaluate trust scores, build
// synthetic bundles and check the counterfactual gradient.
//
// Exit codes: 0 ok, 2 input error, 3 configuration error, 4 training
// divergence, 5 gradient check failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradtrust/baselines.hpp"
#include "gradtrust/bundle.hpp"
#include "gradtrust/error.hpp"
#include "gradtrust/eval.hpp"
#include "gradtrust/kernels.hpp"
#include "gradtrust/score_table.hpp"
#include "gradtrust/synth.hpp"
#include "gradtrust/trust.hpp"

namespace {

using namespace gradtrust;

enum Exit : int {
  kOk = 0,
  kInputError = 2,
  kConfigError = 3,
  kDiverged = 4,
  kGradcheckFailed = 5,
};

// Thrown for bad flag values; mapped to exit 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Enum>
Enum pick(const std::string& flag, const std::string& value,
          const std::map<std::string, Enum>& choices) {
  if (auto it = choices.find(value); it != choices.end()) return it->second;
  std::string allowed;
  for (const auto& [name, _] : choices) allowed += (allowed.empty() ? "" : "|") + name;
  throw ConfigError("--" + flag + " must be one of " + allowed + ", got '" + value + "'");
}

std::vector<MetricId> parse_metric_list(const std::string& list) {
  std::vector<MetricId> out;
  std::stringstream in(list);
  std::string name;
  while (std::getline(in, name, ',')) {
    if (name.empty()) continue;
    const auto id = parse_metric(name);
    if (!id) throw ConfigError("unknown metric '" + name + "'");
    if (std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
  }
  if (out.empty()) throw ConfigError("--metrics selects no metric");
  return out;
}

struct TrustFlags {
  std::size_t k = kDefaultCounterfactuals;
  std::string variance_mode = "squared";
  std::string denominator_mode = "counterfactuals";
  std::string margin_mode = "probability";

  void add(CLI::App& app) {
    app.add_option("--k", k, "counterfactual classes, 1 <= k <= N-1")->capture_default_str();
    app.add_option("--variance-mode", variance_mode, "squared|raw gradient entries")
        ->capture_default_str();
    app.add_option("--denominator-mode", denominator_mode,
                   "counterfactuals|remaining classes averaged in the denominator")
        ->capture_default_str();
    app.add_option("--margin-mode", margin_mode, "probability|logit margin")->capture_default_str();
  }

  ScoringOptions resolve() const {
    ScoringOptions o;
    o.trust.k = k;
    o.trust.variance = pick<VarianceMode>(
        "variance-mode", variance_mode,
        {{"squared", VarianceMode::SquaredEntries}, {"raw", VarianceMode::RawEntries}});
    o.trust.denominator = pick<DenominatorMode>(
        "denominator-mode", denominator_mode,
        {{"counterfactuals", DenominatorMode::Counterfactuals},
         {"remaining", DenominatorMode::AllRemaining}});
    o.margin = pick<MarginMode>("margin-mode", margin_mode,
                                {{"probability", MarginMode::Probability}, {"logit", MarginMode::Logit}});
    return o;
  }
};

struct EvalFlags {
  std::size_t bins = kDefaultBins;
  std::string degenerate_policy = "bottom";
  std::string f1_average = "macro";
  std::string retention = "ties";
  bool svg = false;

  void add(CLI::App& app) {
    app.add_option("--bins", bins, "percentile bins")->capture_default_str();
    app.add_option("--degenerate-policy", degenerate_policy,
                   "bottom|top: rank of degenerate gradtrust samples")
        ->capture_default_str();
    app.add_option("--f1-average", f1_average, "macro|micro")->capture_default_str();
    app.add_option("--retention", retention, "ties|exact: samples kept at each percentile")
        ->capture_default_str();
    app.add_flag("--svg", svg, "also write <metric>.svg line charts");
  }

  EvalOptions resolve() const {
    if (bins < 1) throw ConfigError("--bins must be >= 1");
    EvalOptions o;
    o.bins = bins;
    o.degenerate = pick<DegeneratePolicy>(
        "degenerate-policy", degenerate_policy,
        {{"bottom", DegeneratePolicy::Bottom}, {"top", DegeneratePolicy::Top}});
    o.f1 = pick<F1Average>("f1-average", f1_average,
                           {{"macro", F1Average::Macro}, {"micro", F1Average::Micro}});
    o.retention = pick<Retention>("retention", retention,
                                  {{"ties", Retention::TiesIncluded}, {"exact", Retention::ExactCount}});
    return o;
  }
};

LastLayerBundle load_bundle(const std::string& path) {
  LastLayerBundle bundle = read_bundle(path);
  if (auto gap = logit_consistency(bundle); gap && *gap > kLogitConsistencyTolerance) {
    std::cerr << "warning: stored logits differ from recomputed logits by up to " << *gap << '\n';
  }
  return bundle;
}

ScoreTable score(const std::string& input, const std::vector<MetricId>& metrics,
                 const ScoringOptions& options) {
  LastLayerBundle bundle = load_bundle(input);
  const bool wants_gradtrust =
      std::find(metrics.begin(), metrics.end(), MetricId::GradTrust) != metrics.end();
  if (wants_gradtrust && (options.trust.k < 1 || options.trust.k + 1 > bundle.classes())) {
    throw Error(ErrorCode::InvalidK, "k = " + std::to_string(options.trust.k) +
                                         " violates 1 <= k <= N-1 (N = " +
                                         std::to_string(bundle.classes()) + ")");
  }
  ScoreTable table = score_bundle(bundle, metrics, options);
  if (const auto col = table.column(MetricId::GradTrust)) {
    for (const auto& row : table.rows) {
      if (row.scores[*col].degenerate) {
        std::cerr << "warning: sample " << row.sample_id
                  << ": degenerate gradtrust score (every gradient variance is zero)\n";
      }
    }
  }
  return table;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  out << body;
  if (!out.flush()) throw Error(ErrorCode::Io, "write to " + path + " failed");
}

void print_summary(const EvalReport& report) {
  std::printf("%-10s %8s %8s %10s %8s\n", "metric", "auac", "aufc", "accuracy", "m");
  for (const auto& s : report.summary) {
    std::printf("%-10s %8.2f %8.2f %10.4f %8zu\n", std::string(to_string(s.metric)).c_str(),
                s.auac, s.aufc, s.overall_accuracy, s.m);
  }
}

int map_error(const Error& e) {
  std::cerr << "error: " << e.what() << '\n';
  switch (e.code()) {
    case ErrorCode::InvalidK:
    case ErrorCode::InvalidArgument:
      return kConfigError;
    case ErrorCode::TrainingDiverged:
      return kDiverged;
    default:
      return kInputError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prediction trust from counterfactual last-layer gradients"};
  app.require_subcommand(1);
  std::string kernels_flag;
  app.add_option("--kernels", kernels_flag, "force kernel variant: scalar|avx2|neon");

  // score
  auto* score_cmd = app.add_subcommand("score", "score every sample of a GTPK bundle");
  std::string score_input, score_out = "scores.csv", metrics_flag;
  TrustFlags trust_flags;
  score_cmd->add_option("--input", score_input, "GTPK bundle")->required();
  score_cmd->add_option("--out", score_out, "scores CSV")->capture_default_str();
  score_cmd->add_option("--metrics", metrics_flag, "comma-separated metrics (default: all)");
  trust_flags.add(*score_cmd);
  std::string score_policy = "bottom";
  score_cmd->add_option("--degenerate-policy", score_policy,
                        "bottom|top (recorded for eval; scores keep the 'degenerate' token)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "accuracy/F1 percentile curves and their areas");
  std::string eval_input, eval_out = ".", eval_metrics;
  EvalFlags eval_flags;
  eval_cmd->add_option("--input", eval_input, "scores CSV")->required();
  eval_cmd->add_option("--out-dir", eval_out, "output directory")->capture_default_str();
  eval_cmd->add_option("--metrics", eval_metrics, "comma-separated metrics (default: every column)");
  eval_flags.add(*eval_cmd);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "train a small network on seeded blobs and export it");
  synth::BlobSpec spec;
  synth::TrainHyper hyper;
  std::string synth_out = "bundle.gtpk";
  bool synth_f64 = false;
  synth_cmd->add_option("--classes", spec.n_classes)->capture_default_str();
  synth_cmd->add_option("--dim", spec.dim)->capture_default_str();
  synth_cmd->add_option("--samples-per-class", spec.samples_per_class)->capture_default_str();
  synth_cmd->add_option("--separation", spec.class_separation)->capture_default_str();
  synth_cmd->add_option("--sigma", spec.noise_sigma)->capture_default_str();
  synth_cmd->add_option("--seed", spec.seed)->capture_default_str();
  synth_cmd->add_option("--hidden", hyper.hidden)->capture_default_str();
  synth_cmd->add_option("--lr", hyper.lr)->capture_default_str();
  synth_cmd->add_option("--epochs", hyper.epochs)->capture_default_str();
  synth_cmd->add_option("--train-seed", hyper.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth_out)->capture_default_str();
  synth_cmd->add_flag("--f64", synth_f64, "store tensors as f64 instead of f32");

  // gradcheck
  auto* check_cmd = app.add_subcommand("gradcheck", "analytic vs finite-difference gradient check");
  synth::GradcheckOptions check;
  check_cmd->add_option("--instances", check.instances)->capture_default_str();
  check_cmd->add_option("--seed", check.seed)->capture_default_str();
  check_cmd->add_option("--step", check.h, "finite-difference step h")->capture_default_str();
  check_cmd->add_option("--tol", check.tolerance)->capture_default_str();
  check_cmd->add_flag("--inject-bug", check.inject_bug, "corrupt the analytic gradient (self-test)");

  // report
  auto* report_cmd = app.add_subcommand("report", "score and evaluate a bundle in one step");
  std::string report_input, report_out = ".", report_metrics;
  TrustFlags report_trust;
  EvalFlags report_eval;
  report_cmd->add_option("--input", report_input, "GTPK bundle")->required();
  report_cmd->add_option("--out-dir", report_out, "output directory")->capture_default_str();
  report_cmd->add_option("--metrics", report_metrics, "comma-separated metrics (default: all)");
  report_trust.add(*report_cmd);
  report_eval.add(*report_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (!kernels_flag.empty()) {
      kernels::set_active(pick<kernels::Isa>(
          "kernels", kernels_flag,
          {{"scalar", kernels::Isa::Scalar}, {"avx2", kernels::Isa::Avx2}, {"neon", kernels::Isa::Neon}}));
    }

    if (*score_cmd) {
      const auto options = trust_flags.resolve();
      pick<DegeneratePolicy>("degenerate-policy", score_policy,
                             {{"bottom", DegeneratePolicy::Bottom}, {"top", DegeneratePolicy::Top}});
      const auto metrics = metrics_flag.empty()
                               ? std::vector<MetricId>(kAllMetrics.begin(), kAllMetrics.end())
                               : parse_metric_list(metrics_flag);
      const ScoreTable table = score(score_input, metrics, options);
      std::ostringstream csv;
      write_scores_csv(table, csv);
      write_text(score_out, csv.str());
      return kOk;
    }

    if (*eval_cmd) {
      const auto options = eval_flags.resolve();
      std::ifstream in(eval_input, std::ios::binary);
      if (!in) throw Error(ErrorCode::Io, "cannot open " + eval_input);
      const ScoreTable table = read_scores_csv(in);
      std::vector<MetricId> metrics =
          eval_metrics.empty() ? table.metrics : parse_metric_list(eval_metrics);
      for (auto id : metrics) {
        if (!table.column(id)) {
          std::cerr << "error: " << eval_input << " has no column '" << to_string(id) << "'\n";
          return kInputError;
        }
      }
      const EvalReport report = evaluate(table, metrics, options);
      emit_curves(report, eval_out, eval_flags.svg);
      print_summary(report);
      return kOk;
    }

    if (*synth_cmd) {
      synth::BlobData data = synth::gen_blobs(spec);
      const synth::TrainResult trained = synth::train_mlp(data.train, hyper, spec.n_classes);
      const double eval_acc = synth::accuracy(trained.model, data.eval);
      LastLayerBundle bundle = synth::export_bundle(trained.model, data.eval);
      bundle.storage = synth_f64 ? FloatStorage::F64 : FloatStorage::F32;
      bundle.meta["blob_seed"] = std::to_string(spec.seed);
      bundle.meta["train_seed"] = std::to_string(hyper.seed);
      write_bundle(bundle, synth_out);
      std::printf("bundle=%s m=%zu d=%zu n=%zu train_acc=%.4f eval_acc=%.4f\n", synth_out.c_str(),
                  bundle.samples(), bundle.feature_dim(), bundle.classes(), trained.train_accuracy,
                  eval_acc);
      return kOk;
    }

    if (*check_cmd) {
      if (check.instances < 1) throw ConfigError("--instances must be >= 1");
      if (!(check.h > 0.0)) throw ConfigError("--step must be > 0");
      const auto r = synth::run_gradcheck(check);
      std::printf("instances=%zu h=%g max_rel_err=%.3e tol=%g worst_seed=%llu worst_i=%zu worst_j=%zu %s\n",
                  r.instances, check.h, r.max_rel_err, check.tolerance,
                  static_cast<unsigned long long>(r.worst_seed), r.worst_i, r.worst_j,
                  r.passed ? "PASS" : "FAIL");
      return r.passed ? kOk : kGradcheckFailed;
    }

    if (*report_cmd) {
      const auto scoring = report_trust.resolve();
      const auto options = report_eval.resolve();
      const auto metrics = report_metrics.empty()
                               ? std::vector<MetricId>(kAllMetrics.begin(), kAllMetrics.end())
                               : parse_metric_list(report_metrics);
      const ScoreTable table = score(report_input, metrics, scoring);
      std::filesystem::create_directories(report_out);
      std::ostringstream csv;
      write_scores_csv(table, csv);
      write_text((std::filesystem::path(report_out) / "scores.csv").string(), csv.str());
      const EvalReport report = evaluate(table, metrics, options);
      emit_curves(report, report_out, report_eval.svg);
      print_summary(report);
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const Error& e) {
    return map_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kOk;
}
