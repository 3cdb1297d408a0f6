#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "relulab/cli.hpp"
#include "relulab/convexnn.hpp"
#include "relulab/data.hpp"
#include "relulab/model.hpp"
#include "relulab/numerics.hpp"
#include "relulab/sweep.hpp"

using namespace relulab;

namespace {

namespace fs = std::filesystem;

fs::path tmp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "relulab-cli";
  fs::create_directories(dir);
  return dir / name;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// Redirects std::cout and std::cerr for the lifetime of one dispatch call.
// printf-based output bypasses this; tests of printf paths assert exit codes
// only.
struct Capture {
  std::ostringstream out, err;
  std::streambuf* old_out;
  std::streambuf* old_err;
  Capture()
      : old_out(std::cout.rdbuf(out.rdbuf())),
        old_err(std::cerr.rdbuf(err.rdbuf())) {}
  ~Capture() {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
  }
};

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

RunResult run(const std::vector<std::string>& args) {
  RunResult r;
  Capture cap;
  r.code = dispatch(args);
  r.out = cap.out.str();
  r.err = cap.err.str();
  return r;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

const std::vector<std::string> kTinyTrainFlags = {
    "--dataset",        "planted", "--planted-dim",    "5",
    "--planted-hidden", "3",       "--planted-classes", "3",
    "--planted-margin", "0.2",     "--n-train",        "60",
    "--n-validation",   "30",      "--n-test",         "30",
    "--dataset-seed",   "3"};

std::vector<std::string> tiny_train(std::initializer_list<std::string> extra) {
  std::vector<std::string> args = {"train"};
  args.insert(args.end(), kTinyTrainFlags.begin(), kTinyTrainFlags.end());
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

std::string tiny_sweep_json(const std::string& opt_overrides = "",
                            const std::string& extra = "") {
  std::string opt = R"("step": 0.1, "momentum": 0.5, "batch_size": 20)";
  if (!opt_overrides.empty()) opt = opt_overrides;
  return std::string(R"({
  "h_grid": [1, 4],
  "variants": ["original"],
  "seeds": [1, 2],
  "opt": {)") + opt + R"(},
  "stop": {"max_epochs": 15, "target_loss": 0.05},
  "init_sigma": 0.1,
  "workers": 1,
  "dataset": {
    "kind": "planted", "n_train": 60, "n_validation": 30, "n_test": 30,
    "seed": 3, "planted_dim": 5, "planted_hidden": 3,
    "planted_classes": 3, "planted_margin": 0.2
  })" + extra + "\n}\n";
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"explode"}).code == 2);
  CHECK(run({"gradcheck", "--frobnicate"}).code == 2);
  CHECK(run({"train"}).code == 2);  // --hidden is required
  CHECK(run({"sweep", "--out", "x.csv"}).code == 2);
  CHECK(run({"train", "--hidden", "4", "--reg", "ridge"}).code == 2);
}

TEST_CASE("help requests exit with 0 and document the flags") {
  const RunResult top = run({"--help"});
  CHECK(top.code == 0);
  CHECK(contains(top.out, "train"));
  CHECK(contains(top.out, "halfspace"));

  const RunResult sub = run({"train", "--help"});
  CHECK(sub.code == 0);
  CHECK(contains(sub.out, "--hidden"));
  CHECK(contains(sub.out, "--seed"));
}

TEST_CASE("gradcheck exit code reflects the error threshold") {
  CHECK(run({"gradcheck", "--seed", "3"}).code == 0);
  // A coarse difference step inflates the truncation error past 1e-6.
  CHECK(run({"gradcheck", "--seed", "3", "--pairs", "5", "--step", "0.5"})
            .code == 1);
}

TEST_CASE("halfspace verifies inline and file normals") {
  const RunResult ok = run({"halfspace", "--normals", "+1+1,+1-1"});
  CHECK(ok.code == 0);
  CHECK(contains(ok.out, "status=ok"));
  CHECK(contains(ok.out, "dim=2"));

  const auto file = tmp_path("normals.txt");
  write_text(file, "# two halfspaces\n+1 +1 -1\n-1 +1 +1\n");
  const RunResult from_file =
      run({"halfspace", "--normals-file", file.string(), "--workers", "2"});
  CHECK(from_file.code == 0);
  CHECK(contains(from_file.out, "status=ok"));
  CHECK(contains(from_file.out, "dim=3"));
}

TEST_CASE("halfspace requires exactly one normals source") {
  CHECK(run({"halfspace"}).code == 2);
  const auto file = tmp_path("normals_both.txt");
  write_text(file, "+1 +1\n");
  CHECK(run({"halfspace", "--normals", "+1+1", "--normals-file",
             file.string()})
            .code == 2);
}

TEST_CASE("halfspace domain errors exit with 1") {
  std::string wide = "+1";
  for (int i = 0; i < 22; ++i) wide += " +1";
  const auto file = tmp_path("normals_wide.txt");
  write_text(file, wide + "\n");
  const RunResult r = run({"halfspace", "--normals-file", file.string()});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "error:"));

  CHECK(run({"halfspace", "--normals-file", "/nonexistent/n.txt"}).code == 1);
}

TEST_CASE("train reports errors and writes reloadable checkpoints") {
  const auto ck = tmp_path("train_final.json");
  const auto ckb = tmp_path("train_best.json");
  const RunResult r = run(tiny_train({"--hidden", "4", "--seed", "1",
                                      "--epochs", "10", "--batch-size", "20",
                                      "--out", ck.string(), "--out-best",
                                      ckb.string()}));
  CHECK(r.code == 0);
  CHECK(contains(r.out, "epochs="));
  CHECK(contains(r.out, "train_error="));
  CHECK(contains(r.out, "earlystop epoch="));
  CHECK(contains(r.out, "test_error="));

  const NetParams final_net = load_checkpoint(ck);
  CHECK(final_net.hidden == 4);
  CHECK(final_net.d == 5);
  CHECK(final_net.k == 3);
  const NetParams best_net = load_checkpoint(ckb);
  CHECK(best_net.hidden == 4);
}

TEST_CASE("identical train invocations give identical bytes and text") {
  const auto ck1 = tmp_path("repeat1.json");
  const auto ck2 = tmp_path("repeat2.json");
  const RunResult r1 = run(tiny_train({"--hidden", "4", "--seed", "9",
                                       "--epochs", "8", "--batch-size", "20",
                                       "--out", ck1.string()}));
  const RunResult r2 = run(tiny_train({"--hidden", "4", "--seed", "9",
                                       "--epochs", "8", "--batch-size", "20",
                                       "--out", ck2.string()}));
  CHECK(r1.code == 0);
  CHECK(r2.code == 0);
  CHECK(r1.out == r2.out);
  CHECK(read_bytes(ck1) == read_bytes(ck2));

  const RunResult other = run(tiny_train({"--hidden", "4", "--seed", "10",
                                          "--epochs", "8", "--batch-size",
                                          "20"}));
  CHECK(other.out != r1.out);
}

TEST_CASE("train surfaces divergence as a domain error") {
  const RunResult r =
      run(tiny_train({"--hidden", "4", "--seed", "1", "--epochs", "5",
                      "--batch-size", "20", "--step", "1e300",
                      "--init-sigma", "2.0"}));
  CHECK(r.code == 1);
  CHECK(contains(r.err, "error:"));
}

TEST_CASE("noise rewrites the requested fraction of labels") {
  const auto in_labels = tmp_path("labels_in.idx");
  const auto out1 = tmp_path("labels_out1.idx");
  const auto out2 = tmp_path("labels_out2.idx");
  std::vector<std::uint8_t> raw(100, 3);
  write_idx_labels(in_labels.string(), raw);

  const RunResult r = run({"noise", "--in-labels", in_labels.string(),
                           "--out-labels", out1.string(), "--fraction", "0.2",
                           "--classes", "10", "--seed", "5"});
  CHECK(r.code == 0);
  CHECK(contains(r.out, "labels=100 changed=20"));

  const std::vector<std::uint8_t> noisy = load_idx_labels(out1.string());
  REQUIRE(noisy.size() == 100);
  Index changed = 0;
  for (Index i = 0; i < 100; ++i) {
    CHECK(noisy[i] <= 9);
    if (noisy[i] != raw[i]) ++changed;
  }
  CHECK(changed == 20);

  const RunResult again = run({"noise", "--in-labels", in_labels.string(),
                               "--out-labels", out2.string(), "--fraction",
                               "0.2", "--classes", "10", "--seed", "5"});
  CHECK(again.code == 0);
  CHECK(read_bytes(out1) == read_bytes(out2));

  CHECK(run({"noise", "--in-labels", "/nonexistent/l.idx", "--out-labels",
             out1.string()})
            .code == 1);
}

TEST_CASE("convexnn solves a JSON instance with explicit units") {
  const auto inst = tmp_path("instance.json");
  write_text(inst, R"({
    "x": [[1, 0], [0, 1], [1, 1]],
    "y": [1, 2, 3],
    "lambda": 0.05,
    "tol": 1e-8,
    "units": [[1, 0], [0, 1]]
  })");
  const auto out1 = tmp_path("solution1.json");
  const auto out2 = tmp_path("solution2.json");
  const RunResult r = run({"convexnn", "--instance", inst.string(), "--out",
                           out1.string()});
  CHECK(r.code == 0);

  UnitLibrary lib;
  lib.d = 2;
  lib.units = Matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  Matrix x(3, 2, {1.0, 0.0, 0.0, 1.0, 1.0, 1.0});
  const std::vector<double> y = {1.0, 2.0, 3.0};
  const ConvexNNSolution want = solve_l1(lib, x, y, 0.05, 1e-8);

  const nlohmann::json got = nlohmann::json::parse(read_bytes(out1));
  CHECK(got.at("objective").get<double>() == want.objective);
  CHECK(got.at("kkt_residual").get<double>() == want.kkt_residual);
  CHECK(got.at("converged").get<bool>() == want.converged);
  CHECK(got.at("v").get<std::vector<double>>() == want.v);

  const RunResult again = run({"convexnn", "--instance", inst.string(),
                               "--out", out2.string()});
  CHECK(again.code == 0);
  CHECK(read_bytes(out1) == read_bytes(out2));

  // Without --out the solution goes to stdout.
  const RunResult stdout_run = run({"convexnn", "--instance", inst.string()});
  CHECK(stdout_run.code == 0);
  CHECK(contains(stdout_run.out, "\"objective\""));
}

TEST_CASE("convexnn samples a library when units are not given") {
  const auto inst = tmp_path("instance_lib.json");
  write_text(inst, R"({
    "x": [[0.5, -1.0], [1.5, 0.25], [-0.75, 1.0], [0.1, 0.9]],
    "y": [0.2, -0.4, 1.1, 0.7],
    "lambda": 0.1,
    "library": {"scheme": "gaussian_normalized", "m": 6, "seed": 2}
  })");
  const RunResult r = run({"convexnn", "--instance", inst.string()});
  CHECK(r.code == 0);

  Rng rng(mix_seed(2, 0x6c6962));
  const UnitLibrary lib =
      sample_library(2, 6, LibraryScheme::gaussian_normalized, rng);
  Matrix x(4, 2, {0.5, -1.0, 1.5, 0.25, -0.75, 1.0, 0.1, 0.9});
  const std::vector<double> y = {0.2, -0.4, 1.1, 0.7};
  const ConvexNNSolution want = solve_l1(lib, x, y, 0.1, 1e-8);
  const nlohmann::json got = nlohmann::json::parse(r.out);
  CHECK(got.at("objective").get<double>() == want.objective);

  CHECK(run({"convexnn", "--instance", "/nonexistent/i.json"}).code == 1);
}

TEST_CASE("balance subcommand equalizes per-unit norms") {
  Rng rng(21);
  NetParams p = init_net(3, 5, 1, 0.8, rng);
  for (double& e : p.u.data()) e *= 3.0;
  for (double& e : p.v.data()) e /= 3.0;
  const auto in = tmp_path("net_in.json");
  const auto out = tmp_path("net_out.json");
  save_checkpoint(p, in);

  const RunResult r =
      run({"balance", "--in", in.string(), "--out", out.string()});
  CHECK(r.code == 0);
  CHECK(contains(r.out, "before:"));
  CHECK(contains(r.out, "after:"));

  const NetParams q = load_checkpoint(out);
  const std::vector<double> probe = {0.3, -1.2, 0.5};
  CHECK(forward(q, probe)[0] ==
        doctest::Approx(forward(p, probe)[0]).epsilon(1e-12));
  for (Index h = 0; h < q.hidden; ++h) {
    CHECK(norm2(q.u.row(h)) ==
          doctest::Approx(std::abs(q.v(h, 0))).epsilon(1e-12));
  }

  const auto out_norm = tmp_path("net_norm.json");
  const RunResult rn = run({"balance", "--in", in.string(), "--out",
                            out_norm.string(), "--normalize"});
  CHECK(rn.code == 0);
  const NetParams qn = load_checkpoint(out_norm);
  for (Index h = 0; h < qn.hidden; ++h) {
    CHECK(norm2(qn.u.row(h)) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(forward(qn, probe)[0] ==
        doctest::Approx(forward(p, probe)[0]).epsilon(1e-12));
}

TEST_CASE("balance rejects multi-output checkpoints") {
  Rng rng(22);
  NetParams p = init_net(3, 4, 2, 0.5, rng);
  const auto in = tmp_path("net_multi.json");
  save_checkpoint(p, in);
  const RunResult r = run({"balance", "--in", in.string()});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "single-output"));
}

TEST_CASE("sweep produces deterministic schema-versioned CSV") {
  const auto cfg = tmp_path("sweep.json");
  write_text(cfg, tiny_sweep_json());
  const auto csv1 = tmp_path("sweep1.csv");
  const auto csv2 = tmp_path("sweep2.csv");
  const auto agg = tmp_path("sweep_agg.csv");

  const RunResult r1 = run({"sweep", "--config", cfg.string(), "--seed", "0",
                            "--out", csv1.string(), "--aggregate-out",
                            agg.string()});
  CHECK(r1.code == 0);
  CHECK(contains(r1.out, "cells=4"));
  CHECK(contains(r1.out, "diverged=0"));

  const std::string bytes1 = read_bytes(csv1);
  CHECK(contains(bytes1, "# relulab-sweep-csv v1"));
  const std::vector<SweepRecord> records = parse_csv(csv1.string());
  CHECK(records.size() == 4);

  const std::string agg_bytes = read_bytes(agg);
  CHECK(contains(agg_bytes, "variant"));

  const RunResult r2 = run({"sweep", "--config", cfg.string(), "--seed", "0",
                            "--out", csv2.string()});
  CHECK(r2.code == 0);
  CHECK(bytes1 == read_bytes(csv2));

  // A different --seed rewires every cell.
  const auto csv3 = tmp_path("sweep3.csv");
  const RunResult r3 = run({"sweep", "--config", cfg.string(), "--seed", "7",
                            "--out", csv3.string()});
  CHECK(r3.code == 0);
  CHECK(bytes1 != read_bytes(csv3));
}

TEST_CASE("sweep reports divergent cells with exit 1") {
  const auto cfg = tmp_path("sweep_div.json");
  write_text(cfg, tiny_sweep_json(
                      R"("step": 1e9, "momentum": 0.5, "batch_size": 20)"));
  const auto csv = tmp_path("sweep_div.csv");
  const RunResult r = run({"sweep", "--config", cfg.string(), "--seed", "0",
                           "--out", csv.string()});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "diverged:"));
}

TEST_CASE("sweep rejects malformed configs as domain errors") {
  const auto cfg = tmp_path("sweep_bad.json");
  write_text(cfg, R"({"h_grid": [4, 2]})");
  const auto csv = tmp_path("sweep_bad.csv");
  const RunResult r = run({"sweep", "--config", cfg.string(), "--out",
                           csv.string()});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "strictly increasing"));
}

TEST_CASE("dataset directory resolution prefers flag over environment") {
  unsetenv("RELULAB_DATA_DIR");
  const RunResult plain =
      run({"train", "--dataset", "mnist", "--hidden", "2"});
  CHECK(plain.code == 1);
  CHECK(contains(plain.err, "./data"));
  CHECK(contains(plain.err, "hint:"));
  CHECK(contains(plain.err, "fetch_mnist"));

  setenv("RELULAB_DATA_DIR", "/relulab-envdir", 1);
  const RunResult via_env =
      run({"train", "--dataset", "mnist", "--hidden", "2"});
  CHECK(via_env.code == 1);
  CHECK(contains(via_env.err, "/relulab-envdir"));

  const RunResult via_flag = run({"train", "--dataset", "mnist", "--hidden",
                                  "2", "--data-dir", "/relulab-flagdir"});
  CHECK(via_flag.code == 1);
  CHECK(contains(via_flag.err, "/relulab-flagdir"));
  CHECK_FALSE(contains(via_flag.err, "/relulab-envdir"));
  unsetenv("RELULAB_DATA_DIR");
}

TEST_CASE("censor relabels planted data and saves the teacher") {
  const auto labels = tmp_path("censor_labels.idx");
  const auto teacher = tmp_path("censor_teacher.json");
  std::vector<std::string> args = {
      "censor",        "--dataset",       "planted",
      "--planted-dim", "5",               "--planted-hidden",
      "3",             "--planted-classes", "3",
      "--planted-margin", "0.2",          "--n-train",
      "60",            "--n-validation",  "30",
      "--n-test",      "30",              "--dataset-seed",
      "3",             "--teacher-hidden", "3",
      "--seed",        "2",               "--epochs",
      "20",            "--batch-size",    "20",
      "--out-labels",  labels.string(),   "--out-teacher",
      teacher.string()};
  const RunResult r = run(args);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "examples=120"));
  CHECK(contains(r.out, "changed="));

  const std::vector<std::uint8_t> relabeled = load_idx_labels(labels.string());
  CHECK(relabeled.size() == 120);
  const NetParams t = load_checkpoint(teacher);
  CHECK(t.hidden == 3);
  CHECK(t.d == 5);

  // The written labels are the teacher's own predictions.
  for (std::uint8_t b : relabeled) CHECK(b < 3);
}
