#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relulab/model.hpp"
#include "relulab/numerics.hpp"

namespace relulab {

/// k halfspaces over the signed hypercube, every normal entry exactly +1 or
/// -1. A point x in {+1,-1}^dim belongs to the intersection when
/// <w_i, x> > 0 for every row i.
struct HalfspaceSet {
  Index dim = 0;
  Matrix normals;  // k x dim, entries +-1
  Index count() const { return normals.rows(); }
};

/// Throws std::invalid_argument unless every entry is exactly +-1.
void validate_halfspaces(const HalfspaceSet& hs);

/// "+1+1,+1-1" -> two normals (+1,+1) and (+1,-1). Rows are separated by
/// commas, entries are consecutive +1/-1 tokens.
HalfspaceSet parse_normals_inline(const std::string& text);

/// One normal per line, entries are whitespace-separated +1/-1 (a bare 1 is
/// accepted for +1). Blank lines and lines starting with # are skipped.
HalfspaceSet load_normals_file(const std::string& path);

/// Builds the 2k-unit single-output network computing
///   f(x) = sum_i ( [<w_i,x>]_+ - [<w_i,x> - 1]_+ ).
/// The -1 shift needs an affine term, so the network takes inputs augmented
/// with a constant coordinate fixed to 1 (dimension dim+1): unit 2i has
/// weights (w_i, 0) and top weight +1, unit 2i+1 has (w_i, -1) and -1.
/// On hypercube points every pre-activation is an integer, each bracketed
/// term is exactly 0 or 1, and f counts the satisfied halfspaces.
NetParams compile_halfspaces(const HalfspaceSet& hs);

/// x in {+1,-1}^dim extended with the constant coordinate.
std::vector<double> augment_point(const std::vector<double>& x);

struct HardnessReport {
  Index dim = 0;
  Index halfspaces = 0;
  std::uint64_t points_checked = 0;
  std::uint64_t members = 0;  // points inside the intersection
  bool ok = false;
  std::string counterexample;  // empty when ok
};

/// Checks every x in {+1,-1}^dim (dim <= 22): each unit pair contributes
/// exactly the 0/1 indicator of its halfspace, the network output equals
/// the count of satisfied halfspaces, and membership is separated with a
/// unit margin (f = k inside, f <= k-1 outside). All comparisons are exact;
/// the arithmetic stays on small integers. Work is sharded over `workers`
/// threads; a failure reports the lexicographically first bad point.
HardnessReport verify_exhaustive(const HalfspaceSet& hs, Index workers = 1);

std::string report_to_string(const HardnessReport& report);

}  // namespace relulab
