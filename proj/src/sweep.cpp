#include "relulab/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace relulab {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::original: return "original";
    case Variant::weight_decay: return "weight_decay";
    case Variant::censored: return "censored";
    case Variant::censored_noisy: return "censored_noisy";
  }
  throw std::logic_error("variant_name: unknown variant");
}

Variant parse_variant(const std::string& name) {
  if (name == "original") return Variant::original;
  if (name == "weight_decay") return Variant::weight_decay;
  if (name == "censored") return Variant::censored;
  if (name == "censored_noisy") return Variant::censored_noisy;
  throw std::invalid_argument("unknown variant: " + name);
}

std::string source_kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::planted: return "planted";
    case SourceKind::mnist: return "mnist";
    case SourceKind::cifar10: return "cifar10";
  }
  throw std::logic_error("source_kind_name: unknown kind");
}

SourceKind parse_source_kind(const std::string& name) {
  if (name == "planted") return SourceKind::planted;
  if (name == "mnist") return SourceKind::mnist;
  if (name == "cifar10") return SourceKind::cifar10;
  throw std::invalid_argument("unknown dataset kind: " + name);
}

void validate_sweep_config(const SweepConfig& cfg) {
  if (cfg.h_grid.empty()) {
    throw std::invalid_argument("sweep config: h_grid is empty");
  }
  for (Index i = 1; i < cfg.h_grid.size(); ++i) {
    if (cfg.h_grid[i] <= cfg.h_grid[i - 1]) {
      throw std::invalid_argument(
          "sweep config: h_grid must be strictly increasing");
    }
  }
  if (cfg.h_grid.front() == 0) {
    throw std::invalid_argument("sweep config: h_grid entries must be >= 1");
  }
  if (cfg.variants.empty()) {
    throw std::invalid_argument("sweep config: variants is empty");
  }
  if (cfg.seeds.empty()) {
    throw std::invalid_argument("sweep config: seeds is empty");
  }
  if (cfg.dataset.n_train == 0) {
    throw std::invalid_argument("sweep config: n_train must be >= 1");
  }
  if (cfg.dataset.n_validation == 0) {
    throw std::invalid_argument(
        "sweep config: early stopping needs a validation split");
  }
  const bool wants_wd = std::find(cfg.variants.begin(), cfg.variants.end(),
                                  Variant::weight_decay) !=
                        cfg.variants.end();
  if (wants_wd && cfg.lambda_grid.empty()) {
    throw std::invalid_argument(
        "sweep config: weight_decay variant needs a lambda_grid");
  }
  for (double l : cfg.lambda_grid) {
    if (!(l >= 0.0)) {
      throw std::invalid_argument("sweep config: lambda values must be >= 0");
    }
  }
  if (cfg.dataset.noise_fraction < 0.0 || cfg.dataset.noise_fraction > 1.0) {
    throw std::invalid_argument(
        "sweep config: noise_fraction must lie in [0,1]");
  }
}

namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end()) {
      throw std::invalid_argument("sweep config: unknown key \"" + key +
                                  "\" in " + where);
    }
  }
}

DatasetSpec dataset_spec_from_json(const json& j) {
  check_keys(j,
             {"kind", "dir", "n_train", "n_validation", "n_test", "seed",
              "planted_dim", "planted_hidden", "planted_classes",
              "planted_margin", "censor_hidden", "noise_fraction"},
             "dataset");
  DatasetSpec ds;
  if (j.contains("kind")) ds.kind = parse_source_kind(j.at("kind"));
  if (j.contains("dir")) ds.dir = j.at("dir");
  if (j.contains("n_train")) ds.n_train = j.at("n_train");
  if (j.contains("n_validation")) ds.n_validation = j.at("n_validation");
  if (j.contains("n_test")) ds.n_test = j.at("n_test");
  if (j.contains("seed")) ds.seed = j.at("seed");
  if (j.contains("planted_dim")) ds.planted_dim = j.at("planted_dim");
  if (j.contains("planted_hidden")) ds.planted_hidden = j.at("planted_hidden");
  if (j.contains("planted_classes")) {
    ds.planted_classes = j.at("planted_classes");
  }
  if (j.contains("planted_margin")) ds.planted_margin = j.at("planted_margin");
  if (j.contains("censor_hidden")) ds.censor_hidden = j.at("censor_hidden");
  if (j.contains("noise_fraction")) ds.noise_fraction = j.at("noise_fraction");
  return ds;
}

}  // namespace

SweepConfig sweep_config_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  check_keys(j,
             {"h_grid", "variants", "seeds", "opt", "stop", "init_sigma",
              "lambda_grid", "workers", "dataset"},
             "top level");
  SweepConfig cfg;
  if (j.contains("h_grid")) cfg.h_grid = j.at("h_grid").get<std::vector<Index>>();
  if (j.contains("variants")) {
    cfg.variants.clear();
    for (const auto& name : j.at("variants")) {
      cfg.variants.push_back(parse_variant(name));
    }
  }
  if (j.contains("seeds")) {
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  }
  if (j.contains("opt")) {
    const json& o = j.at("opt");
    check_keys(o, {"step", "momentum", "batch_size"}, "opt");
    if (o.contains("step")) cfg.opt.step = o.at("step");
    if (o.contains("momentum")) cfg.opt.momentum = o.at("momentum");
    if (o.contains("batch_size")) cfg.opt.batch_size = o.at("batch_size");
  }
  if (j.contains("stop")) {
    const json& s = j.at("stop");
    check_keys(s, {"max_epochs", "target_loss"}, "stop");
    if (s.contains("max_epochs")) cfg.stop.max_epochs = s.at("max_epochs");
    if (s.contains("target_loss")) cfg.stop.target_loss = s.at("target_loss");
  }
  if (j.contains("init_sigma")) cfg.init_sigma = j.at("init_sigma");
  if (j.contains("lambda_grid")) {
    cfg.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
  }
  if (j.contains("workers")) cfg.workers = j.at("workers");
  if (j.contains("dataset")) {
    cfg.dataset = dataset_spec_from_json(j.at("dataset"));
  }
  validate_sweep_config(cfg);
  return cfg;
}

SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return sweep_config_from_json_text(buf.str());
}

namespace {

bool wants_variant(const SweepConfig& cfg, Variant v) {
  return std::find(cfg.variants.begin(), cfg.variants.end(), v) !=
         cfg.variants.end();
}

void tag_split(LabeledDataset& ds, SplitTag tag) { ds.split_tag = tag; }

}  // namespace

SweepData build_sweep_data(const SweepConfig& cfg) {
  validate_sweep_config(cfg);
  const DatasetSpec& spec = cfg.dataset;
  SweepData out;

  if (spec.kind == SourceKind::planted) {
    Rng gen(mix_seed(spec.seed, 0x706c616e));
    const Index total = spec.n_train + spec.n_validation + spec.n_test;
    PlantedData planted =
        planted_synthetic(spec.planted_dim, spec.planted_hidden,
                          spec.planted_classes, total, spec.planted_margin,
                          gen);
    out.train = slice(planted.data, 0, spec.n_train);
    out.validation = slice(planted.data, spec.n_train, spec.n_validation);
    out.test =
        slice(planted.data, spec.n_train + spec.n_validation, spec.n_test);
  } else {
    LabeledDataset pool = spec.kind == SourceKind::mnist
                              ? load_mnist(spec.dir)
                              : load_cifar10(spec.dir);
    LabeledDataset held = spec.kind == SourceKind::mnist
                              ? load_mnist_test(spec.dir)
                              : load_cifar10_test(spec.dir);
    pool = downsample_100(pool);
    held = downsample_100(held);
    SplitSpec ss;
    ss.n_train = spec.n_train;
    ss.n_validation = spec.n_validation;
    ss.n_test = 0;
    ss.seed = mix_seed(spec.seed, 0x73706c69);
    auto [tr, va, rest] = split(pool, ss);
    out.train = std::move(tr);
    out.validation = std::move(va);
    if (spec.n_test > 0 && spec.n_test < held.size()) {
      SplitSpec ts;
      ts.n_train = spec.n_test;
      ts.seed = mix_seed(spec.seed, 0x74657374);
      auto [sub, unused_a, unused_b] = split(held, ts);
      out.test = std::move(sub);
    } else {
      out.test = std::move(held);
    }
  }
  tag_split(out.train, SplitTag::train);
  tag_split(out.validation, SplitTag::validation);
  tag_split(out.test, SplitTag::test);

  const bool need_censored = wants_variant(cfg, Variant::censored) ||
                             wants_variant(cfg, Variant::censored_noisy);
  if (need_censored) {
    std::vector<const LabeledDataset*> parts = {&out.train, &out.validation,
                                                &out.test};
    LabeledDataset all = concat(parts);
    TeacherConfig tc;
    tc.opt = cfg.opt;
    tc.stop = cfg.stop;
    tc.init_sigma = cfg.init_sigma;
    tc.seed = mix_seed(spec.seed, 0x63656e);
    if (tc.opt.batch_size > all.size()) tc.opt.batch_size = all.size();
    CensorResult cr = censor(all, spec.censor_hidden, tc);
    out.censor_teacher = cr.teacher;
    out.censor_changed = cr.changed;
    out.censored_train = slice(cr.data, 0, out.train.size());
    out.censored_validation =
        slice(cr.data, out.train.size(), out.validation.size());
    out.censored_test = slice(
        cr.data, out.train.size() + out.validation.size(), out.test.size());
    tag_split(out.censored_train, SplitTag::train);
    tag_split(out.censored_validation, SplitTag::validation);
    tag_split(out.censored_test, SplitTag::test);
    out.has_censored = true;
  }
  if (wants_variant(cfg, Variant::censored_noisy)) {
    Rng noise_rng(mix_seed(spec.seed, 0x6e6f69));
    out.noisy_train =
        add_label_noise(out.censored_train, spec.noise_fraction, noise_rng);
    out.noisy_validation = add_label_noise(out.censored_validation,
                                           spec.noise_fraction, noise_rng);
    out.has_noisy = true;
  }
  return out;
}

namespace {

struct CellJob {
  Variant variant;
  Index h = 0;
  std::uint64_t seed = 0;
};

struct CellOutcome {
  std::optional<SweepRecord> record;
  std::vector<std::string> diverged;
};

std::string cell_label(const CellJob& job, double lambda) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), " h=%zu seed=%llu lambda=%.6g",
                static_cast<std::size_t>(job.h),
                static_cast<unsigned long long>(job.seed), lambda);
  return variant_name(job.variant) + buf;
}

// One (variant, h, seed) cell: trains once per lambda candidate and keeps
// the run whose best validation error is lowest (earlier = smaller lambda
// wins ties).
CellOutcome run_cell(const SweepConfig& cfg, const SweepData& data,
                     const CellJob& job) {
  const LabeledDataset* train_ds = &data.train;
  const LabeledDataset* val_ds = &data.validation;
  const LabeledDataset* test_ds = &data.test;
  std::vector<double> lambdas = {0.0};
  RegKind reg_kind = RegKind::none;
  switch (job.variant) {
    case Variant::original:
      break;
    case Variant::weight_decay:
      lambdas = cfg.lambda_grid;
      reg_kind = RegKind::l2_weight_decay;
      break;
    case Variant::censored:
      train_ds = &data.censored_train;
      val_ds = &data.censored_validation;
      test_ds = &data.censored_test;
      break;
    case Variant::censored_noisy:
      train_ds = &data.noisy_train;
      val_ds = &data.noisy_validation;
      test_ds = &data.censored_test;
      break;
  }

  const std::uint64_t cell_seed = mix_seed(
      mix_seed(mix_seed(cfg.dataset.seed, job.seed),
               static_cast<std::uint64_t>(job.variant)),
      job.h);

  CellOutcome out;
  double best_val = std::numeric_limits<double>::infinity();
  SgdConfig opt = cfg.opt;
  if (opt.batch_size > train_ds->size()) opt.batch_size = train_ds->size();

  for (Index li = 0; li < lambdas.size(); ++li) {
    RegConfig reg;
    reg.lambda = lambdas[li];
    reg.kind = lambdas[li] == 0.0 ? RegKind::none : reg_kind;
    Rng init_rng(mix_seed(cell_seed, 2 * li));
    Rng train_rng(mix_seed(cell_seed, 2 * li + 1));
    NetParams start = init_net(train_ds->dim(), job.h, train_ds->num_classes,
                               cfg.init_sigma, init_rng);
    TrainResult tr;
    try {
      tr = train(start, *train_ds, val_ds, opt, reg, cfg.stop, train_rng);
    } catch (const TrainingDiverged& e) {
      out.diverged.push_back(cell_label(job, lambdas[li]) + ": " + e.what());
      continue;
    }
    const EpochStats& best = tr.history[tr.best_epoch - 1];
    if (best.validation_error < best_val) {
      best_val = best.validation_error;
      SweepRecord rec;
      rec.variant = job.variant;
      rec.seed = job.seed;
      rec.h = job.h;
      rec.lambda = lambdas[li];
      rec.epochs_run = tr.history.size();
      rec.train_error_final = tr.history.back().train_error;
      rec.train_error_earlystop = best.train_error;
      rec.validation_error_best = best.validation_error;
      rec.test_error_final = evaluate(tr.params, *test_ds).error;
      rec.test_error_earlystop = evaluate(tr.best_params, *test_ds).error;
      out.record = rec;
    }
  }
  return out;
}

}  // namespace

SweepResult run_sweep(const SweepConfig& cfg) {
  validate_sweep_config(cfg);
  const SweepData data = build_sweep_data(cfg);

  std::vector<CellJob> jobs;
  for (Variant v : cfg.variants) {
    for (Index h : cfg.h_grid) {
      for (std::uint64_t s : cfg.seeds) {
        jobs.push_back({v, h, s});
      }
    }
  }

  std::vector<CellOutcome> outcomes(jobs.size());
  Index workers = cfg.workers;
  if (workers == 0) {
    workers = std::max(1u, std::thread::hardware_concurrency());
  }
  workers = std::min<Index>(workers, jobs.size());

  if (workers <= 1) {
    for (Index i = 0; i < jobs.size(); ++i) {
      outcomes[i] = run_cell(cfg, data, jobs[i]);
    }
  } else {
    std::atomic<Index> next{0};
    auto worker = [&]() {
      for (;;) {
        const Index i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        outcomes[i] = run_cell(cfg, data, jobs[i]);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (Index w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepResult result;
  for (auto& oc : outcomes) {
    if (oc.record.has_value()) result.records.push_back(*oc.record);
    for (auto& d : oc.diverged) result.diverged.push_back(std::move(d));
  }
  std::sort(result.records.begin(), result.records.end(),
            [](const SweepRecord& a, const SweepRecord& b) {
              if (a.variant != b.variant) {
                return static_cast<int>(a.variant) < static_cast<int>(b.variant);
              }
              if (a.h != b.h) return a.h < b.h;
              return a.seed < b.seed;
            });
  std::sort(result.diverged.begin(), result.diverged.end());
  return result;
}

std::vector<AggregateRow> aggregate(const std::vector<SweepRecord>& records) {
  if (records.empty()) {
    throw std::invalid_argument("aggregate: no records");
  }
  struct Key {
    Variant variant;
    Index h;
    bool operator<(const Key& o) const {
      if (variant != o.variant) {
        return static_cast<int>(variant) < static_cast<int>(o.variant);
      }
      return h < o.h;
    }
  };
  std::vector<std::pair<Key, std::vector<const SweepRecord*>>> groups;
  for (const auto& r : records) {
    const Key key{r.variant, r.h};
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return !(g.first < key) &&
                                                        !(key < g.first); });
    if (it == groups.end()) {
      groups.push_back({key, {&r}});
    } else {
      it->second.push_back(&r);
    }
  }
  std::sort(groups.begin(), groups.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  auto stats_of = [](const std::vector<const SweepRecord*>& grp,
                     double SweepRecord::*field) {
    ErrorStats st;
    const double n = static_cast<double>(grp.size());
    for (const auto* r : grp) st.mean += r->*field;
    st.mean /= n;
    double acc = 0.0;
    for (const auto* r : grp) {
      const double d = r->*field - st.mean;
      acc += d * d;
    }
    st.std = std::sqrt(acc / n);
    return st;
  };

  std::vector<AggregateRow> rows;
  rows.reserve(groups.size());
  for (const auto& [key, grp] : groups) {
    AggregateRow row;
    row.variant = key.variant;
    row.h = key.h;
    row.count = grp.size();
    row.train_final = stats_of(grp, &SweepRecord::train_error_final);
    row.train_earlystop = stats_of(grp, &SweepRecord::train_error_earlystop);
    row.validation_best = stats_of(grp, &SweepRecord::validation_error_best);
    row.test_final = stats_of(grp, &SweepRecord::test_error_final);
    row.test_earlystop = stats_of(grp, &SweepRecord::test_error_earlystop);
    rows.push_back(row);
  }
  return rows;
}

namespace {

constexpr const char* kCsvVersion = "# relulab-sweep-csv v1";
constexpr const char* kCsvHeader =
    "variant,seed,H,lambda,epochs_run,train_error_final,"
    "train_error_earlystop,validation_error_best,test_error_final,"
    "test_error_earlystop";
constexpr const char* kAggVersion = "# relulab-sweep-agg-csv v1";

std::string fmt6(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

}  // namespace

std::string records_to_csv(const std::vector<SweepRecord>& records) {
  std::string out;
  out += kCsvVersion;
  out += '\n';
  out += kCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    out += variant_name(r.variant);
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += std::to_string(r.h);
    out += ',';
    out += fmt6(r.lambda);
    out += ',';
    out += std::to_string(r.epochs_run);
    out += ',';
    out += fmt6(r.train_error_final);
    out += ',';
    out += fmt6(r.train_error_earlystop);
    out += ',';
    out += fmt6(r.validation_error_best);
    out += ',';
    out += fmt6(r.test_error_final);
    out += ',';
    out += fmt6(r.test_error_earlystop);
    out += '\n';
  }
  return out;
}

void emit_csv(const std::vector<SweepRecord>& records,
              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << records_to_csv(records);
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<SweepRecord> parse_csv_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<SweepRecord> records;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kCsvHeader) {
        throw std::runtime_error("sweep csv: unexpected header: " + line);
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 10) {
      throw std::runtime_error("sweep csv: expected 10 fields, got " +
                               std::to_string(fields.size()));
    }
    SweepRecord r;
    r.variant = parse_variant(fields[0]);
    r.seed = std::stoull(fields[1]);
    r.h = std::stoull(fields[2]);
    r.lambda = std::stod(fields[3]);
    r.epochs_run = std::stoull(fields[4]);
    r.train_error_final = std::stod(fields[5]);
    r.train_error_earlystop = std::stod(fields[6]);
    r.validation_error_best = std::stod(fields[7]);
    r.test_error_final = std::stod(fields[8]);
    r.test_error_earlystop = std::stod(fields[9]);
    records.push_back(r);
  }
  if (!header_seen) throw std::runtime_error("sweep csv: missing header");
  return records;
}

std::vector<SweepRecord> parse_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv_text(buf.str());
}

void emit_aggregate_csv(const std::vector<AggregateRow>& rows,
                        const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << kAggVersion << '\n'
      << "variant,H,count,train_error_final_mean,train_error_final_std,"
         "train_error_earlystop_mean,train_error_earlystop_std,"
         "validation_error_best_mean,validation_error_best_std,"
         "test_error_final_mean,test_error_final_std,"
         "test_error_earlystop_mean,test_error_earlystop_std\n";
  for (const auto& row : rows) {
    out << variant_name(row.variant) << ',' << row.h << ',' << row.count;
    for (const ErrorStats* st :
         {&row.train_final, &row.train_earlystop, &row.validation_best,
          &row.test_final, &row.test_earlystop}) {
      out << ',' << fmt6(st->mean) << ',' << fmt6(st->std);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace relulab
