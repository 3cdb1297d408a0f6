#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relulab/data.hpp"
#include "relulab/dataset.hpp"
#include "relulab/optim.hpp"

namespace relulab {

/// Dataset treatments swept over. original trains on the data as loaded;
/// weight_decay adds an L2 penalty with the strength chosen on validation;
/// censored replaces all labels with a small trained network's predictions;
/// censored_noisy additionally flips a fraction of train/validation labels
/// (the test split stays censored-clean).
enum class Variant { original, weight_decay, censored, censored_noisy };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

enum class SourceKind { planted, mnist, cifar10 };

std::string source_kind_name(SourceKind k);
SourceKind parse_source_kind(const std::string& name);

/// Where the sweep's data comes from. File-backed kinds are downsampled to
/// d = 100 and use the official held-out files as the test split (subset of
/// size n_test when n_test > 0); planted data is generated with the given
/// teacher shape and split n_train / n_validation / n_test.
struct DatasetSpec {
  SourceKind kind = SourceKind::planted;
  std::string dir;  // file-backed kinds
  Index n_train = 500;
  Index n_validation = 200;
  Index n_test = 2000;
  std::uint64_t seed = 1;
  Index planted_dim = 20;
  Index planted_hidden = 4;
  Index planted_classes = 5;
  double planted_margin = 0.1;
  Index censor_hidden = 4;
  double noise_fraction = 0.05;
};

struct SweepConfig {
  std::vector<Index> h_grid = {1, 2, 4, 8, 16, 32, 64, 128,
                               256, 512, 1024, 2048, 4096};
  std::vector<Variant> variants = {Variant::original};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  SgdConfig opt;
  StoppingRule stop;
  double init_sigma = 0.1;
  std::vector<double> lambda_grid = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  Index workers = 0;  // 0 = hardware concurrency
  DatasetSpec dataset;
};

/// Throws std::invalid_argument when a field violates its contract
/// (empty/unsorted h_grid, empty seeds or variants, no validation split).
void validate_sweep_config(const SweepConfig& cfg);

SweepConfig sweep_config_from_json_text(const std::string& text);
SweepConfig load_sweep_config(const std::string& path);

/// One trained cell. lambda is 0 except for weight_decay, where it is the
/// value selected by validation error (ties toward the smaller lambda).
struct SweepRecord {
  Variant variant = Variant::original;
  std::uint64_t seed = 0;
  Index h = 0;
  double lambda = 0.0;
  Index epochs_run = 0;
  double train_error_final = 0.0;
  double train_error_earlystop = 0.0;
  double validation_error_best = 0.0;
  double test_error_final = 0.0;
  double test_error_earlystop = 0.0;
};

/// Splits ready for training, including the mutilated label variants that
/// the requested sweep needs.
struct SweepData {
  LabeledDataset train, validation, test;
  LabeledDataset censored_train, censored_validation, censored_test;
  LabeledDataset noisy_train, noisy_validation;
  bool has_censored = false;
  bool has_noisy = false;
  NetParams censor_teacher;  // diagnostics
  Index censor_changed = 0;  // labels the teacher rewrote
};

/// Loads/generates and mutilates the data for cfg. Deterministic in
/// (cfg.dataset, cfg.opt, cfg.stop, cfg.init_sigma).
SweepData build_sweep_data(const SweepConfig& cfg);

struct SweepResult {
  std::vector<SweepRecord> records;  // sorted by (variant, h, seed)
  std::vector<std::string> diverged;  // one entry per diverged training run
};

/// Trains every (variant, h, seed) cell. Cells are independent and seeded
/// from (dataset seed, variant, h, seed), so results do not depend on the
/// worker count. Diverged runs are reported in `diverged`, not thrown; a
/// cell with no surviving run yields no record.
SweepResult run_sweep(const SweepConfig& cfg);

struct ErrorStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

struct AggregateRow {
  Variant variant = Variant::original;
  Index h = 0;
  Index count = 0;
  ErrorStats train_final, train_earlystop, validation_best, test_final,
      test_earlystop;
};

/// Per-(variant, h) means and population standard deviations over seeds,
/// ordered by (variant, h).
std::vector<AggregateRow> aggregate(const std::vector<SweepRecord>& records);

/// CSV with a versioned comment line, a header row, and one row per record
/// in SweepRecord field order. Floats carry 6 significant digits.
void emit_csv(const std::vector<SweepRecord>& records, const std::string& path);
std::string records_to_csv(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> parse_csv_text(const std::string& text);
std::vector<SweepRecord> parse_csv(const std::string& path);

void emit_aggregate_csv(const std::vector<AggregateRow>& rows,
                        const std::string& path);

}  // namespace relulab
