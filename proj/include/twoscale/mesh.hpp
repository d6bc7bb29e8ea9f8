#pragma once

// Dyadic quadtree partitions of the macroscopic domain Omega = [0,1]^2 and
// the fixed uniform mesh of the cell Y = [0,1]^2. Partitions are immutable
// values: refine() returns a new partition and never mutates its input.

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "twoscale/common.hpp"

namespace twoscale {

inline constexpr int kDefaultMaxDepth = 20;

// Axis-aligned square [ix*2^-m,(ix+1)*2^-m] x [iy*2^-m,(iy+1)*2^-m].
struct DyadicSquare {
  int level = 0;
  int ix = 0;
  int iy = 0;

  double side() const { return std::ldexp(1.0, -level); }
  double diameter() const { return side() * std::sqrt(2.0); }
  double x0() const { return ix * side(); }
  double y0() const { return iy * side(); }

  auto operator<=>(const DyadicSquare&) const = default;
};

// The four children obtained by bisecting each side. Refuses to descend
// below max_depth: squares that small are numerically meaningless at
// domain scale one.
std::array<DyadicSquare, 4> children(const DyadicSquare& q, int max_depth = kDefaultMaxDepth);

struct RefineRecord {
  std::vector<DyadicSquare> marked_splits;
  std::vector<DyadicSquare> closure_splits;
};

class MacroPartition {
 public:
  MacroPartition() = default;
  MacroPartition(std::vector<DyadicSquare> squares, int generation, int max_depth = kDefaultMaxDepth);

  static MacroPartition unit_square(int max_depth = kDefaultMaxDepth);
  static MacroPartition uniform(int level, int max_depth = kDefaultMaxDepth);

  const std::vector<DyadicSquare>& squares() const { return squares_; }
  int generation() const { return generation_; }
  int max_depth() const { return max_depth_; }
  int size() const { return static_cast<int>(squares_.size()); }

  bool contains(const DyadicSquare& q) const;
  int min_level() const;
  int max_level() const;

  // Interiors pairwise disjoint and areas summing to |Omega| = 1, checked
  // with exact integer bookkeeping.
  bool is_valid() const;

  // Every edge-adjacent pair differs by at most one level.
  bool is_one_irregular() const;

  std::string dump() const;  // "dyadic-partition v1 count=N" then "m ix iy" lines

 private:
  std::vector<DyadicSquare> squares_;  // sorted
  int generation_ = 0;
  int max_depth_ = kDefaultMaxDepth;
};

// Splits the marked squares and then keeps splitting until the partition is
// 1-irregular again. Closure splits are recorded separately from the marked
// ones. Throws ValidationError if marked is empty or not a subset.
MacroPartition refine(const MacroPartition& p, const std::vector<DyadicSquare>& marked,
                      RefineRecord* record = nullptr);

// All squares of p sharing an edge segment of positive length with q.
std::vector<DyadicSquare> neighbors(const MacroPartition& p, const DyadicSquare& q);

enum class Side : int { bottom = 0, right = 1, top = 2, left = 3 };

const char* side_name(Side s);

// Uniform n x n grid on Y with the active exchange boundary Gamma^R given
// as a nonempty list of sides (surface measure > 0 by construction).
struct MicroMesh {
  int n = 1;
  std::vector<Side> gamma_r = {Side::top};

  MicroMesh() = default;
  MicroMesh(int n_, std::vector<Side> gamma);

  double h() const { return std::sqrt(2.0) / n; }
  std::string dump() const;  // "micromesh v1 n=N gammaR=..."
};

struct MeshSize {
  double h_omega = 0.0;
  double h_y = 0.0;
};

MeshSize mesh_size(const MacroPartition& p, const MicroMesh& y);

}  // namespace twoscale
