#include "relulab/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "relulab/convexnn.hpp"
#include "relulab/data.hpp"
#include "relulab/hardness.hpp"
#include "relulab/model.hpp"
#include "relulab/sweep.hpp"

namespace relulab {

namespace {

using nlohmann::json;

std::string resolve_data_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("RELULAB_DATA_DIR")) {
    if (*env != '\0') return env;
  }
  return "./data";
}

std::string fmt6(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

// Shared dataset flags for subcommands that train on a dataset.
struct DatasetFlags {
  std::string kind = "planted";
  std::string dir;
  DatasetSpec spec;

  void attach(CLI::App* sub) {
    sub->add_option("--dataset", kind,
                    "Data source: planted, mnist or cifar10")
        ->check(CLI::IsMember({"planted", "mnist", "cifar10"}))
        ->capture_default_str();
    sub->add_option("--data-dir", dir,
                    "Dataset directory (falls back to RELULAB_DATA_DIR, "
                    "then ./data)");
    sub->add_option("--n-train", spec.n_train, "Training examples")
        ->capture_default_str();
    sub->add_option("--n-validation", spec.n_validation,
                    "Validation examples")
        ->capture_default_str();
    sub->add_option("--n-test", spec.n_test,
                    "Test examples (0 = the full held-out file)")
        ->capture_default_str();
    sub->add_option("--dataset-seed", spec.seed,
                    "Seed for generation/splitting")
        ->capture_default_str();
    sub->add_option("--planted-dim", spec.planted_dim,
                    "Input dimension (planted data)")
        ->capture_default_str();
    sub->add_option("--planted-hidden", spec.planted_hidden,
                    "Teacher hidden units (planted data)")
        ->capture_default_str();
    sub->add_option("--planted-classes", spec.planted_classes,
                    "Class count (planted data)")
        ->capture_default_str();
    sub->add_option("--planted-margin", spec.planted_margin,
                    "Teacher score margin filter (planted data)")
        ->capture_default_str();
  }

  DatasetSpec resolve() const {
    DatasetSpec out = spec;
    out.kind = parse_source_kind(kind);
    out.dir = resolve_data_dir(dir);
    return out;
  }
};

int run_train(const DatasetFlags& dflags, Index hidden, std::uint64_t seed,
              const SgdConfig& opt, const StoppingRule& stop,
              double init_sigma, const std::string& reg_name, double lambda,
              const std::string& out_path, const std::string& out_best_path) {
  SweepConfig probe;
  probe.dataset = dflags.resolve();
  probe.h_grid = {hidden};
  probe.seeds = {seed};
  SweepData data = build_sweep_data(probe);

  RegConfig reg;
  reg.lambda = lambda;
  if (reg_name == "none") {
    reg.kind = RegKind::none;
  } else if (reg_name == "l2_weight_decay") {
    reg.kind = RegKind::l2_weight_decay;
  } else if (reg_name == "l1_top") {
    reg.kind = RegKind::l1_top;
  } else {
    reg.kind = RegKind::group_lasso_top;
  }

  SgdConfig opt_used = opt;
  if (opt_used.batch_size > data.train.size()) {
    opt_used.batch_size = data.train.size();
  }
  Rng init_rng(mix_seed(seed, 0x696e6974));
  Rng train_rng(mix_seed(seed, 0x747261696e));
  NetParams start = init_net(data.train.dim(), hidden,
                             data.train.num_classes, init_sigma, init_rng);
  TrainResult tr =
      train(start, data.train, &data.validation, opt_used, reg, stop,
            train_rng);

  const EpochStats& last = tr.history.back();
  const EpochStats& best = tr.history[tr.best_epoch - 1];
  std::cout << "epochs=" << tr.history.size()
            << " train_loss=" << fmt6(last.mean_loss)
            << " train_error=" << fmt6(last.train_error)
            << " validation_error=" << fmt6(last.validation_error)
            << " test_error=" << fmt6(evaluate(tr.params, data.test).error)
            << "\n";
  std::cout << "earlystop epoch=" << tr.best_epoch
            << " validation_error=" << fmt6(best.validation_error)
            << " test_error="
            << fmt6(evaluate(tr.best_params, data.test).error) << "\n";
  if (!out_path.empty()) save_checkpoint(tr.params, out_path);
  if (!out_best_path.empty()) save_checkpoint(tr.best_params, out_best_path);
  return 0;
}

int run_sweep_cmd(const std::string& config_path, std::uint64_t seed,
                  const std::string& out_path, const std::string& agg_path,
                  Index workers_override, const std::string& data_dir_flag) {
  SweepConfig cfg = load_sweep_config(config_path);
  cfg.dataset.seed = mix_seed(cfg.dataset.seed, seed);
  for (auto& s : cfg.seeds) s = mix_seed(s, seed);
  if (workers_override > 0) cfg.workers = workers_override;
  if (cfg.dataset.kind != SourceKind::planted && cfg.dataset.dir.empty()) {
    cfg.dataset.dir = resolve_data_dir(data_dir_flag);
  }

  SweepResult res = run_sweep(cfg);
  emit_csv(res.records, out_path);
  if (!agg_path.empty()) emit_aggregate_csv(aggregate(res.records), agg_path);
  std::cout << "cells=" << res.records.size()
            << " diverged=" << res.diverged.size() << " -> " << out_path
            << "\n";
  for (const auto& d : res.diverged) {
    std::cerr << "diverged: " << d << "\n";
  }
  return res.diverged.empty() ? 0 : 1;
}

int run_censor(const DatasetFlags& dflags, Index teacher_hidden,
               std::uint64_t seed, bool no_downsample, const SgdConfig& opt,
               const StoppingRule& stop, double init_sigma,
               const std::string& out_labels, const std::string& out_teacher) {
  const DatasetSpec spec = dflags.resolve();
  LabeledDataset all;
  if (spec.kind == SourceKind::planted) {
    Rng gen(mix_seed(spec.seed, 0x706c616e));
    const Index total = spec.n_train + spec.n_validation + spec.n_test;
    all = planted_synthetic(spec.planted_dim, spec.planted_hidden,
                            spec.planted_classes, total, spec.planted_margin,
                            gen)
              .data;
  } else {
    LabeledDataset pool = spec.kind == SourceKind::mnist
                              ? load_mnist(spec.dir)
                              : load_cifar10(spec.dir);
    LabeledDataset held = spec.kind == SourceKind::mnist
                              ? load_mnist_test(spec.dir)
                              : load_cifar10_test(spec.dir);
    std::vector<const LabeledDataset*> parts = {&pool, &held};
    all = concat(parts);
    if (!no_downsample) all = downsample_100(all);
  }

  TeacherConfig tc;
  tc.opt = opt;
  tc.stop = stop;
  tc.init_sigma = init_sigma;
  tc.seed = seed;
  if (tc.opt.batch_size > all.size()) tc.opt.batch_size = all.size();
  CensorResult cr = censor(all, teacher_hidden, tc);

  std::cout << "examples=" << cr.data.size() << " changed=" << cr.changed
            << " teacher_error_on_originals="
            << fmt6(static_cast<double>(cr.changed) /
                    static_cast<double>(cr.data.size()))
            << "\n";
  if (!out_labels.empty()) {
    std::vector<std::uint8_t> bytes(cr.data.size());
    for (Index i = 0; i < cr.data.size(); ++i) {
      bytes[i] = static_cast<std::uint8_t>(cr.data.labels[i]);
    }
    write_idx_labels(out_labels, bytes);
  }
  if (!out_teacher.empty()) save_checkpoint(cr.teacher, out_teacher);
  return 0;
}

int run_noise(const std::string& in_labels, const std::string& out_labels,
              double fraction, Index classes, std::uint64_t seed) {
  const std::vector<std::uint8_t> raw = load_idx_labels(in_labels);
  LabeledDataset ds;
  ds.name = "labels";
  ds.num_classes = classes;
  ds.x = Matrix(raw.size(), 1);
  ds.labels.assign(raw.begin(), raw.end());
  Rng rng(mix_seed(seed, 0x6e6f6973));
  LabeledDataset noisy = add_label_noise(ds, fraction, rng);
  std::vector<std::uint8_t> bytes(noisy.size());
  Index changed = 0;
  for (Index i = 0; i < noisy.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(noisy.labels[i]);
    if (noisy.labels[i] != ds.labels[i]) ++changed;
  }
  write_idx_labels(out_labels, bytes);
  std::cout << "labels=" << noisy.size() << " changed=" << changed << "\n";
  return 0;
}

int run_convexnn(const std::string& instance_path,
                 const std::string& out_path) {
  std::ifstream in(instance_path);
  if (!in) throw std::runtime_error("cannot open " + instance_path);
  json j;
  in >> j;

  const auto xj = j.at("x");
  if (xj.empty()) throw std::invalid_argument("convexnn: empty x");
  const Index n = xj.size();
  const Index d = xj.at(0).size();
  Matrix x(n, d);
  for (Index t = 0; t < n; ++t) {
    const auto& row = xj.at(t);
    if (row.size() != d) {
      throw std::invalid_argument("convexnn: ragged x rows");
    }
    for (Index c = 0; c < d; ++c) x(t, c) = row.at(c);
  }
  const std::vector<double> y = j.at("y").get<std::vector<double>>();
  const double lambda = j.at("lambda");
  const double tol = j.value("tol", 1e-8);
  const Index max_iter = j.value("max_iter", Index{100000});

  UnitLibrary lib;
  if (j.contains("units")) {
    const auto uj = j.at("units");
    lib.d = d;
    lib.units = Matrix(uj.size(), d);
    for (Index i = 0; i < uj.size(); ++i) {
      for (Index c = 0; c < d; ++c) lib.units(i, c) = uj.at(i).at(c);
    }
  } else {
    const auto& lj = j.at("library");
    const LibraryScheme scheme =
        parse_library_scheme(lj.at("scheme").get<std::string>());
    const Index m = lj.at("m");
    Rng rng(mix_seed(lj.value("seed", std::uint64_t{1}), 0x6c6962));
    lib = sample_library(d, m, scheme, rng);
  }

  const ConvexNNSolution sol = solve_l1(lib, x, y, lambda, tol, max_iter);
  json out;
  out["v"] = sol.v;
  out["objective"] = sol.objective;
  out["kkt_residual"] = sol.kkt_residual;
  out["iterations"] = sol.iterations;
  out["converged"] = sol.converged;
  if (!sol.converged) {
    std::cerr << "warning: tolerance not reached after " << sol.iterations
              << " iterations (kkt_residual=" << fmt6(sol.kkt_residual)
              << ")\n";
  }
  if (out_path.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream os(out_path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + out_path);
    os << out.dump(2) << "\n";
  }
  return 0;
}

int run_halfspace(const std::string& inline_normals,
                  const std::string& normals_file, Index workers) {
  HalfspaceSet hs;
  if (!inline_normals.empty()) {
    hs = parse_normals_inline(inline_normals);
  } else {
    hs = load_normals_file(normals_file);
  }
  const HardnessReport report = verify_exhaustive(hs, workers);
  std::cout << report_to_string(report) << "\n";
  return report.ok ? 0 : 1;
}

int run_balance(const std::string& in_path, const std::string& out_path,
                bool also_normalize) {
  NetParams p = load_checkpoint(in_path);
  if (p.k != 1) {
    throw std::invalid_argument("balance: single-output checkpoints only");
  }
  auto product_sum = [](const NetParams& net) {
    double acc = 0.0;
    for (Index h = 0; h < net.hidden; ++h) {
      acc += norm2(net.u.row(h)) * std::abs(net.v(h, 0));
    }
    return acc;
  };
  RegConfig l2{1.0, RegKind::l2_weight_decay};
  RegConfig l1{1.0, RegKind::l1_top};
  std::cout << "before: half_sq_sum=" << fmt6(penalty(p, l2))
            << " product_sum=" << fmt6(product_sum(p))
            << " abs_top_sum=" << fmt6(penalty(p, l1)) << "\n";
  NetParams q = balance(p);
  if (also_normalize) q = normalize_to_unit(q);
  std::cout << "after:  half_sq_sum=" << fmt6(penalty(q, l2))
            << " product_sum=" << fmt6(product_sum(q))
            << " abs_top_sum=" << fmt6(penalty(q, l1)) << "\n";
  if (!out_path.empty()) save_checkpoint(q, out_path);
  return 0;
}

int run_gradcheck(std::uint64_t seed, Index pairs, double step) {
  const double err = gradcheck_max_rel_error(seed, pairs, step);
  std::printf("max relative gradient error = %.3e (pairs=%zu, step=%g)\n",
              err, static_cast<std::size_t>(pairs), step);
  return err < 1e-6 ? 0 : 1;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Two-layer rectified-linear network lab: training, size "
               "sweeps, dataset relabeling, dictionary solvers and "
               "halfspace compilation"};
  app.require_subcommand(1);
  int rc = 0;

  // train
  auto* train_cmd = app.add_subcommand(
      "train", "Train one network and report final/early-stopping errors");
  DatasetFlags train_data;
  train_data.attach(train_cmd);
  Index hidden = 8;
  std::uint64_t seed = 1;
  SgdConfig opt;
  StoppingRule stop;
  double init_sigma = 0.1;
  std::string reg_name = "none";
  double lambda = 0.0;
  std::string out_path, out_best_path;
  train_cmd->add_option("--hidden", hidden, "Hidden units")->required();
  train_cmd->add_option("--seed", seed, "Run seed")->capture_default_str();
  train_cmd->add_option("--step", opt.step, "Initial step size")
      ->capture_default_str();
  train_cmd->add_option("--momentum", opt.momentum, "Initial momentum")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", opt.batch_size, "Mini-batch size")
      ->capture_default_str();
  train_cmd->add_option("--epochs", stop.max_epochs, "Epoch budget")
      ->capture_default_str();
  train_cmd
      ->add_option("--target-loss", stop.target_loss,
                   "Stop when train error is 0 and mean loss is below this")
      ->capture_default_str();
  train_cmd->add_option("--init-sigma", init_sigma, "Init scale")
      ->capture_default_str();
  train_cmd
      ->add_option("--reg", reg_name, "Penalty kind")
      ->check(CLI::IsMember(
          {"none", "l2_weight_decay", "l1_top", "group_lasso_top"}))
      ->capture_default_str();
  train_cmd->add_option("--lambda", lambda, "Penalty weight")
      ->capture_default_str();
  train_cmd->add_option("--out", out_path, "Checkpoint for the final net");
  train_cmd->add_option("--out-best", out_best_path,
                        "Checkpoint for the best-validation net");
  train_cmd->callback([&]() {
    rc = run_train(train_data, hidden, seed, opt, stop, init_sigma, reg_name,
                   lambda, out_path, out_best_path);
  });

  // sweep
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "Train a grid of sizes/variants/seeds and emit CSV");
  std::string sweep_config, sweep_out, sweep_agg, sweep_dir;
  std::uint64_t sweep_seed = 0;
  Index sweep_workers = 0;
  sweep_cmd->add_option("--config", sweep_config, "Sweep config (JSON)")
      ->required();
  sweep_cmd
      ->add_option("--seed", sweep_seed,
                   "Mixed into the dataset seed and every repetition seed")
      ->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "Records CSV path")->required();
  sweep_cmd->add_option("--aggregate-out", sweep_agg,
                        "Aggregated per-(variant,H) CSV path");
  sweep_cmd->add_option("--workers", sweep_workers,
                        "Worker threads (0 = config value)");
  sweep_cmd->add_option("--data-dir", sweep_dir,
                        "Dataset directory when the config omits one");
  sweep_cmd->callback([&]() {
    rc = run_sweep_cmd(sweep_config, sweep_seed, sweep_out, sweep_agg,
                       sweep_workers, sweep_dir);
  });

  // censor
  auto* censor_cmd = app.add_subcommand(
      "censor",
      "Relabel a dataset with a small trained network's predictions");
  DatasetFlags censor_data;
  censor_data.attach(censor_cmd);
  Index teacher_hidden = 4;
  std::uint64_t censor_seed = 1;
  bool no_downsample = false;
  SgdConfig censor_opt;
  StoppingRule censor_stop;
  double censor_sigma = 0.1;
  std::string censor_labels, censor_teacher;
  censor_cmd
      ->add_option("--teacher-hidden", teacher_hidden, "Teacher hidden units")
      ->capture_default_str();
  censor_cmd->add_option("--seed", censor_seed, "Teacher seed")
      ->capture_default_str();
  censor_cmd->add_flag("--no-downsample", no_downsample,
                       "Keep the native image resolution");
  censor_cmd->add_option("--epochs", censor_stop.max_epochs, "Epoch budget")
      ->capture_default_str();
  censor_cmd->add_option("--batch-size", censor_opt.batch_size,
                         "Mini-batch size")
      ->capture_default_str();
  censor_cmd->add_option("--init-sigma", censor_sigma, "Init scale")
      ->capture_default_str();
  censor_cmd->add_option("--out-labels", censor_labels,
                         "Write the new labels (IDX, pool order then "
                         "held-out order)");
  censor_cmd->add_option("--out-teacher", censor_teacher,
                         "Write the teacher checkpoint (JSON)");
  censor_cmd->callback([&]() {
    rc = run_censor(censor_data, teacher_hidden, censor_seed, no_downsample,
                    censor_opt, censor_stop, censor_sigma, censor_labels,
                    censor_teacher);
  });

  // noise
  auto* noise_cmd = app.add_subcommand(
      "noise", "Flip a fraction of IDX labels to random different classes");
  std::string noise_in, noise_out;
  double noise_fraction = 0.05;
  Index noise_classes = 10;
  std::uint64_t noise_seed = 1;
  noise_cmd->add_option("--in-labels", noise_in, "IDX labels input")
      ->required();
  noise_cmd->add_option("--out-labels", noise_out, "IDX labels output")
      ->required();
  noise_cmd->add_option("--fraction", noise_fraction,
                        "Fraction of labels to change")
      ->capture_default_str();
  noise_cmd->add_option("--classes", noise_classes, "Class count")
      ->capture_default_str();
  noise_cmd->add_option("--seed", noise_seed, "Selection seed")
      ->capture_default_str();
  noise_cmd->callback([&]() {
    rc = run_noise(noise_in, noise_out, noise_fraction, noise_classes,
                   noise_seed);
  });

  // convexnn
  auto* convex_cmd = app.add_subcommand(
      "convexnn",
      "Solve an l1-regularized dictionary fit (JSON in, JSON out)");
  std::string convex_in, convex_out;
  convex_cmd->add_option("--instance", convex_in, "Instance JSON")->required();
  convex_cmd->add_option("--out", convex_out,
                         "Solution JSON path (default: stdout)");
  convex_cmd->callback([&]() { rc = run_convexnn(convex_in, convex_out); });

  // halfspace
  auto* half_cmd = app.add_subcommand(
      "halfspace",
      "Compile +-1 halfspaces to a network and verify exhaustively");
  std::string half_inline, half_file;
  Index half_workers = 1;
  half_cmd->add_option("--normals", half_inline,
                       "Inline normals, e.g. \"+1+1,+1-1\"");
  half_cmd->add_option("--normals-file", half_file,
                       "File with one +-1 normal per line");
  half_cmd->add_option("--workers", half_workers, "Enumeration threads")
      ->capture_default_str();
  half_cmd->callback([&]() {
    if (half_inline.empty() == half_file.empty()) {
      throw CLI::ValidationError(
          "halfspace", "give exactly one of --normals / --normals-file");
    }
    rc = run_halfspace(half_inline, half_file, half_workers);
  });

  // balance
  auto* balance_cmd = app.add_subcommand(
      "balance",
      "Rebalance a single-output checkpoint so ||u_h|| = |v_h| per unit");
  std::string balance_in, balance_out;
  bool balance_norm = false;
  balance_cmd->add_option("--in", balance_in, "Checkpoint to read")
      ->required();
  balance_cmd->add_option("--out", balance_out, "Checkpoint to write");
  balance_cmd->add_flag("--normalize", balance_norm,
                        "Also rescale every u_h to unit norm");
  balance_cmd->callback(
      [&]() { rc = run_balance(balance_in, balance_out, balance_norm); });

  // gradcheck
  auto* grad_cmd = app.add_subcommand(
      "gradcheck",
      "Compare analytic gradients with finite differences; exit 0 iff the "
      "max relative error is below 1e-6");
  std::uint64_t grad_seed = 1;
  Index grad_pairs = 50;
  double grad_step = 1e-6;
  grad_cmd->add_option("--seed", grad_seed, "Sampling seed")
      ->capture_default_str();
  grad_cmd->add_option("--pairs", grad_pairs, "Random (net, input) draws")
      ->capture_default_str();
  grad_cmd->add_option("--step", grad_step, "Finite-difference step")
      ->capture_default_str();
  grad_cmd->callback(
      [&]() { rc = run_gradcheck(grad_seed, grad_pairs, grad_step); });

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("relulab");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    const std::string what = e.what();
    if (what.find("cannot open") != std::string::npos) {
      std::cerr << "hint: fetch datasets with tools/fetch_mnist.sh or "
                   "tools/fetch_cifar10.sh, or point --data-dir or "
                   "RELULAB_DATA_DIR at the files\n";
    }
    return 1;
  }
  return rc;
}

}  // namespace relulab
