#include "relulab/hardness.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace relulab {

void validate_halfspaces(const HalfspaceSet& hs) {
  if (hs.dim == 0 || hs.count() == 0) {
    throw std::invalid_argument("halfspaces: need dim >= 1 and k >= 1");
  }
  if (hs.normals.cols() != hs.dim) {
    throw std::invalid_argument("halfspaces: normal length != dim");
  }
  for (double w : hs.normals.data()) {
    if (w != 1.0 && w != -1.0) {
      throw std::invalid_argument("halfspaces: entries must be exactly +-1");
    }
  }
}

HalfspaceSet parse_normals_inline(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::string row_text;
  std::istringstream in(text);
  while (std::getline(in, row_text, ',')) {
    std::vector<double> row;
    Index i = 0;
    while (i < row_text.size()) {
      if (row_text[i] == ' ') {
        ++i;
        continue;
      }
      if (i + 1 < row_text.size() && row_text[i + 1] == '1' &&
          (row_text[i] == '+' || row_text[i] == '-')) {
        row.push_back(row_text[i] == '+' ? 1.0 : -1.0);
        i += 2;
      } else {
        throw std::invalid_argument(
            "parse_normals_inline: expected +1/-1 tokens, got \"" + row_text +
            "\"");
      }
    }
    if (row.empty()) {
      throw std::invalid_argument("parse_normals_inline: empty normal");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw std::invalid_argument("parse_normals_inline: no normals");
  }
  const Index dim = rows.front().size();
  HalfspaceSet hs;
  hs.dim = dim;
  hs.normals = Matrix(rows.size(), dim);
  for (Index r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != dim) {
      throw std::invalid_argument(
          "parse_normals_inline: normals of mixed lengths");
    }
    std::copy(rows[r].begin(), rows[r].end(), hs.normals.row(r).begin());
  }
  validate_halfspaces(hs);
  return hs;
}

HalfspaceSet load_normals_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      if (tok == "+1" || tok == "1") {
        row.push_back(1.0);
      } else if (tok == "-1") {
        row.push_back(-1.0);
      } else {
        throw std::runtime_error(path + ": expected +1/-1, got \"" + tok +
                                 "\"");
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no normals");
  const Index dim = rows.front().size();
  HalfspaceSet hs;
  hs.dim = dim;
  hs.normals = Matrix(rows.size(), dim);
  for (Index r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != dim) {
      throw std::runtime_error(path + ": normals of mixed lengths");
    }
    std::copy(rows[r].begin(), rows[r].end(), hs.normals.row(r).begin());
  }
  validate_halfspaces(hs);
  return hs;
}

NetParams compile_halfspaces(const HalfspaceSet& hs) {
  validate_halfspaces(hs);
  const Index k = hs.count();
  NetParams p;
  p.d = hs.dim + 1;  // trailing constant coordinate
  p.hidden = 2 * k;
  p.k = 1;
  p.u = Matrix(p.hidden, p.d);
  p.v = Matrix(p.hidden, 1);
  for (Index i = 0; i < k; ++i) {
    const auto w = hs.normals.row(i);
    auto up = p.u.row(2 * i);
    auto um = p.u.row(2 * i + 1);
    std::copy(w.begin(), w.end(), up.begin());
    std::copy(w.begin(), w.end(), um.begin());
    up[hs.dim] = 0.0;
    um[hs.dim] = -1.0;
    p.v(2 * i, 0) = 1.0;
    p.v(2 * i + 1, 0) = -1.0;
  }
  return p;
}

std::vector<double> augment_point(const std::vector<double>& x) {
  std::vector<double> out(x.size() + 1);
  std::copy(x.begin(), x.end(), out.begin());
  out.back() = 1.0;
  return out;
}

namespace {

std::string format_point(const std::vector<double>& x) {
  std::string s = "(";
  for (Index j = 0; j < x.size(); ++j) {
    if (j > 0) s += ",";
    s += x[j] > 0 ? "+1" : "-1";
  }
  s += ")";
  return s;
}

struct ShardResult {
  std::uint64_t first_bad = ~0ull;  // mask of the first violation
  std::string detail;
  std::uint64_t members = 0;
};

ShardResult check_range(const HalfspaceSet& hs, const NetParams& net,
                        std::uint64_t begin, std::uint64_t end) {
  const Index dim = hs.dim;
  const Index k = hs.count();
  ShardResult res;
  std::vector<double> x(dim + 1, 0.0);
  x[dim] = 1.0;
  std::vector<double> pre(net.hidden);

  std::vector<long long> s(k);

  for (std::uint64_t mask = begin; mask < end; ++mask) {
    for (Index j = 0; j < dim; ++j) {
      x[j] = (mask >> j) & 1 ? 1.0 : -1.0;
    }
    // Integer reference values, straight from the definition.
    Index satisfied = 0;
    for (Index i = 0; i < k; ++i) {
      s[i] = 0;
      const auto w = hs.normals.row(i);
      for (Index j = 0; j < dim; ++j) {
        s[i] += (w[j] > 0) == (x[j] > 0) ? 1 : -1;
      }
      if (s[i] > 0) ++satisfied;
    }

    for (Index h = 0; h < net.hidden; ++h) pre[h] = dot(net.u.row(h), x);
    double f = 0.0;
    bool bad = false;
    std::string why;
    for (Index i = 0; i < k; ++i) {
      const double term = std::max(pre[2 * i], 0.0) -
                          std::max(pre[2 * i + 1], 0.0);
      f += term;
      const double expect = s[i] > 0 ? 1.0 : 0.0;
      if (term != expect) {
        bad = true;
        why = "term " + std::to_string(i) + " = " + std::to_string(term) +
              ", expected " + std::to_string(expect);
        break;
      }
    }
    if (!bad) {
      const double net_out = forward(net, x)[0];
      if (net_out != f) {
        bad = true;
        why = "network output " + std::to_string(net_out) +
              " != term sum " + std::to_string(f);
      } else if (f != static_cast<double>(satisfied)) {
        bad = true;
        why = "f = " + std::to_string(f) + ", satisfied count = " +
              std::to_string(satisfied);
      } else if (satisfied == k && f != static_cast<double>(k)) {
        bad = true;
        why = "member with f != k";
      } else if (satisfied < k &&
                 !(f <= static_cast<double>(k) - 1.0)) {
        bad = true;
        why = "non-member with f > k-1";
      }
    }
    if (bad) {
      if (mask < res.first_bad) {
        res.first_bad = mask;
        std::vector<double> raw(x.begin(), x.begin() + dim);
        res.detail = "x = " + format_point(raw) + ": " + why;
      }
      continue;
    }
    if (satisfied == k) ++res.members;
  }
  return res;
}

}  // namespace

HardnessReport verify_exhaustive(const HalfspaceSet& hs, Index workers) {
  validate_halfspaces(hs);
  if (hs.dim > 22) {
    throw std::invalid_argument(
        "verify_exhaustive: dim > 22 exceeds the enumeration budget");
  }
  const NetParams net = compile_halfspaces(hs);
  const std::uint64_t total = 1ull << hs.dim;

  if (workers == 0) workers = 1;
  workers = std::min<Index>(workers, 64);

  std::vector<ShardResult> shards(workers);
  if (workers == 1) {
    shards[0] = check_range(hs, net, 0, total);
  } else {
    std::vector<std::thread> pool;
    const std::uint64_t chunk = (total + workers - 1) / workers;
    for (Index w = 0; w < workers; ++w) {
      const std::uint64_t begin = w * chunk;
      const std::uint64_t end = std::min(total, begin + chunk);
      pool.emplace_back([&, w, begin, end]() {
        shards[w] = check_range(hs, net, begin, end);
      });
    }
    for (auto& t : pool) t.join();
  }

  HardnessReport report;
  report.dim = hs.dim;
  report.halfspaces = hs.count();
  report.points_checked = total;
  report.ok = true;
  std::uint64_t first_bad = ~0ull;
  for (const auto& sh : shards) {
    report.members += sh.members;
    if (sh.first_bad < first_bad) {
      first_bad = sh.first_bad;
      report.counterexample = sh.detail;
      report.ok = false;
    }
  }
  return report;
}

std::string report_to_string(const HardnessReport& report) {
  std::string s;
  s += "dim=" + std::to_string(report.dim);
  s += " halfspaces=" + std::to_string(report.halfspaces);
  s += " points=" + std::to_string(report.points_checked);
  s += " members=" + std::to_string(report.members);
  if (report.ok) {
    s += " status=ok";
  } else {
    s += " status=violation " + report.counterexample;
  }
  return s;
}

}  // namespace relulab
