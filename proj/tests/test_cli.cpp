#include <doctest.h>

#include <sstream>

#include "gradtrust/bundle.hpp"
#include "gradtrust/score_table.hpp"
#include "test_support.hpp"

using namespace gradtrust;

namespace {

const std::string kCli = GRADTRUST_CLI_PATH;

testing::CommandResult cli(const std::string& args, const testing::TempDir& dir) {
  return testing::run_command("'" + kCli + "' " + args, dir.path());
}

// One sample whose logits are [3, 1, 2, 0.5] with features [1, 2].
LastLayerBundle worked_bundle() {
  return {Matrix{{1, 2}}, Matrix{{1, 1, 0, 0.5}, {1, 0, 1, 0}}, Vector::zeros(4), {0}, std::nullopt, {}};
}

ScoreTable read_table(const std::filesystem::path& p) {
  std::istringstream in(testing::slurp(p));
  return read_scores_csv(in);
}

}  // namespace

TEST_CASE("usage errors exit 3") {
  testing::TempDir dir("cli");
  CHECK(cli("", dir).exit_code == 3);
  CHECK(cli("frobnicate", dir).exit_code == 3);
  CHECK(cli("score", dir).exit_code == 3);
  CHECK(cli("--help", dir).exit_code == 0);
}

TEST_CASE("score the worked bundle") {
  testing::TempDir dir("cli");
  write_bundle(worked_bundle(), dir / "w.gtpk");
  const auto r = cli("score --input " + (dir / "w.gtpk").string() + " --k 2 --out " +
                         (dir / "s.csv").string(),
                     dir);
  REQUIRE(r.exit_code == 0);
  const auto table = read_table(dir / "s.csv");
  REQUIRE(table.rows.size() == 1);
  CHECK(table.metrics.size() == 6);
  const auto col = table.column(MetricId::GradTrust);
  REQUIRE(col.has_value());
  CHECK(table.rows[0].scores[*col].value == 162.0);
  CHECK(table.rows[0].prediction == 0);
  CHECK(table.rows[0].correct);
}

TEST_CASE("score rejects bad k and bad input") {
  testing::TempDir dir("cli");
  write_bundle(worked_bundle(), dir / "w.gtpk");
  const std::string in = " --input " + (dir / "w.gtpk").string() + " --out " + (dir / "s.csv").string();
  CHECK(cli("score --k 0" + in, dir).exit_code == 3);
  CHECK(cli("score --k 4" + in, dir).exit_code == 3);
  CHECK(cli("score --variance-mode cubed" + in, dir).exit_code == 3);
  CHECK(cli("score --metrics softmax,bogus" + in, dir).exit_code == 3);
  // k only matters for gradtrust.
  CHECK(cli("score --k 7 --metrics softmax" + in, dir).exit_code == 0);

  testing::spit(dir / "junk.gtpk", "not a bundle at all");
  CHECK(cli("score --input " + (dir / "junk.gtpk").string(), dir).exit_code == 2);
  CHECK(cli("score --input " + (dir / "missing.gtpk").string(), dir).exit_code == 2);
}

TEST_CASE("degenerate samples warn on stderr and are written as a token") {
  testing::TempDir dir("cli");
  auto b = worked_bundle();
  b.features = Matrix{{1, 2}, {3, 3}};
  b.labels = {0, 0};
  write_bundle(b, dir / "d.gtpk");
  const auto r = cli("score --k 2 --input " + (dir / "d.gtpk").string() + " --out " +
                         (dir / "s.csv").string(),
                     dir);
  REQUIRE(r.exit_code == 0);
  CHECK(r.err.find("sample 1") != std::string::npos);
  CHECK(testing::slurp(dir / "s.csv").find("degenerate") != std::string::npos);
}

TEST_CASE("eval of hand-built score files") {
  testing::TempDir dir("cli");
  testing::spit(dir / "s.csv",
                "sample_id,label,prediction,correct,gradtrust\n"
                "0,0,0,1,1\n"
                "1,0,1,0,0\n");
  const auto r = cli("eval --input " + (dir / "s.csv").string() + " --out-dir " +
                         (dir / "out").string(),
                     dir);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("75.00") != std::string::npos);
  const std::string summary = testing::slurp(dir / "out" / "summary.csv");
  CHECK(summary.find("gradtrust,75.00,") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "out" / "curves.csv"));

  const auto missing = cli("eval --metrics softmax --input " + (dir / "s.csv").string() +
                               " --out-dir " + (dir / "out").string(),
                           dir);
  CHECK(missing.exit_code == 2);
  CHECK(missing.err.find("softmax") != std::string::npos);

  testing::spit(dir / "bad.csv", "sample_id,label,prediction,correct,gradtrust\n0,0,0,1,oops\n");
  CHECK(cli("eval --input " + (dir / "bad.csv").string() + " --out-dir " + (dir / "o2").string(), dir)
            .exit_code == 2);
  CHECK(cli("eval --bins 0 --input " + (dir / "s.csv").string(), dir).exit_code == 3);
}

TEST_CASE("synth is deterministic and produces a valid bundle") {
  testing::TempDir dir("cli");
  const std::string args =
      "synth --classes 3 --dim 4 --samples-per-class 40 --separation 4 --sigma 0.5 --hidden 8 "
      "--epochs 50 --seed 5 --train-seed 6 --out ";
  const auto a = cli(args + (dir / "a.gtpk").string(), dir);
  REQUIRE(a.exit_code == 0);
  CHECK(a.out.find("m=24 d=8 n=3") != std::string::npos);
  REQUIRE(cli(args + (dir / "b.gtpk").string(), dir).exit_code == 0);
  CHECK(testing::slurp(dir / "a.gtpk") == testing::slurp(dir / "b.gtpk"));

  const auto bundle = read_bundle(dir / "a.gtpk");
  CHECK(validate_bundle(bundle).empty());
  CHECK(bundle.meta.at("source") == "synth-lab");

  CHECK(cli("synth --lr 1e6 --classes 3 --dim 4 --samples-per-class 40 --hidden 8 --out " +
                (dir / "c.gtpk").string(),
            dir)
            .exit_code == 4);
}

TEST_CASE("report scores and evaluates in one step") {
  testing::TempDir dir("cli");
  REQUIRE(cli("synth --classes 4 --dim 6 --samples-per-class 50 --hidden 8 --epochs 30 --out " +
                  (dir / "r.gtpk").string(),
              dir)
              .exit_code == 0);
  const auto r = cli("report --k 2 --svg --input " + (dir / "r.gtpk").string() + " --out-dir " +
                         (dir / "rep").string(),
                     dir);
  REQUIRE(r.exit_code == 0);
  for (const char* f : {"scores.csv", "curves.csv", "summary.csv", "gradtrust.svg"}) {
    CHECK(std::filesystem::exists(dir / "rep" / f));
  }
}

TEST_CASE("gradcheck") {
  testing::TempDir dir("cli");
  const auto ok = cli("gradcheck --instances 100 --seed 3", dir);
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("PASS") != std::string::npos);
  CHECK(cli("gradcheck --instances 100 --seed 3", dir).out == ok.out);

  const auto bad = cli("gradcheck --instances 10 --inject-bug", dir);
  CHECK(bad.exit_code == 5);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("kernel selection flag") {
  testing::TempDir dir("cli");
  CHECK(cli("--kernels scalar gradcheck --instances 5", dir).exit_code == 0);
  CHECK(cli("--kernels sse9 gradcheck --instances 5", dir).exit_code == 3);
}
