#include "twoscale/mesh.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace twoscale {

namespace {

std::uint64_t square_key(const DyadicSquare& q) {
  return (static_cast<std::uint64_t>(q.level) << 48) ^
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(q.ix)) << 24) ^
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(q.iy));
}

struct SquareHash {
  std::size_t operator()(const DyadicSquare& q) const {
    std::uint64_t k = square_key(q);
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdull;
    k ^= k >> 33;
    return static_cast<std::size_t>(k);
  }
};

using SquareSet = std::unordered_set<DyadicSquare, SquareHash>;

DyadicSquare parent(const DyadicSquare& q) { return {q.level - 1, q.ix >> 1, q.iy >> 1}; }

// Existing squares sharing a positive-length edge segment with q across the
// given side. Walks up to coarser ancestors and down to finer descendants,
// so it works on transiently unbalanced sets during closure.
void side_neighbors(const SquareSet& set, int max_level, const DyadicSquare& q, Side side,
                    std::vector<DyadicSquare>* out) {
  const int n = 1 << q.level;
  DyadicSquare adj = q;
  switch (side) {
    case Side::bottom: adj.iy -= 1; break;
    case Side::right: adj.ix += 1; break;
    case Side::top: adj.iy += 1; break;
    case Side::left: adj.ix -= 1; break;
  }
  if (adj.ix < 0 || adj.iy < 0 || adj.ix >= n || adj.iy >= n) return;

  // same level or coarser
  DyadicSquare c = adj;
  while (true) {
    if (set.count(c)) {
      out->push_back(c);
      return;
    }
    if (c.level == 0) break;
    c = parent(c);
  }

  // finer: descend along the touching side
  std::vector<DyadicSquare> stack = {adj};
  while (!stack.empty()) {
    DyadicSquare cur = stack.back();
    stack.pop_back();
    if (cur.level >= max_level) continue;
    // the two children of cur touching q
    std::array<DyadicSquare, 2> touch;
    const int l = cur.level + 1;
    switch (side) {
      case Side::bottom:  // neighbor below q: its top children touch
        touch = {DyadicSquare{l, 2 * cur.ix, 2 * cur.iy + 1}, DyadicSquare{l, 2 * cur.ix + 1, 2 * cur.iy + 1}};
        break;
      case Side::top:
        touch = {DyadicSquare{l, 2 * cur.ix, 2 * cur.iy}, DyadicSquare{l, 2 * cur.ix + 1, 2 * cur.iy}};
        break;
      case Side::right:  // neighbor right of q: its left children touch
        touch = {DyadicSquare{l, 2 * cur.ix, 2 * cur.iy}, DyadicSquare{l, 2 * cur.ix, 2 * cur.iy + 1}};
        break;
      case Side::left:
        touch = {DyadicSquare{l, 2 * cur.ix + 1, 2 * cur.iy}, DyadicSquare{l, 2 * cur.ix + 1, 2 * cur.iy + 1}};
        break;
    }
    for (const DyadicSquare& t : touch) {
      if (set.count(t)) {
        out->push_back(t);
      } else {
        stack.push_back(t);
      }
    }
  }
}

void all_neighbors(const SquareSet& set, int max_level, const DyadicSquare& q,
                   std::vector<DyadicSquare>* out) {
  for (int s = 0; s < 4; ++s) side_neighbors(set, max_level, q, static_cast<Side>(s), out);
}

}  // namespace

std::array<DyadicSquare, 4> children(const DyadicSquare& q, int max_depth) {
  if (q.level + 1 > max_depth) {
    throw ValidationError("children: refinement beyond maximum depth " + std::to_string(max_depth) +
                          " at level " + std::to_string(q.level));
  }
  const int l = q.level + 1;
  return {DyadicSquare{l, 2 * q.ix, 2 * q.iy}, DyadicSquare{l, 2 * q.ix + 1, 2 * q.iy},
          DyadicSquare{l, 2 * q.ix, 2 * q.iy + 1}, DyadicSquare{l, 2 * q.ix + 1, 2 * q.iy + 1}};
}

MacroPartition::MacroPartition(std::vector<DyadicSquare> squares, int generation, int max_depth)
    : squares_(std::move(squares)), generation_(generation), max_depth_(max_depth) {
  std::sort(squares_.begin(), squares_.end());
}

MacroPartition MacroPartition::unit_square(int max_depth) {
  return MacroPartition({DyadicSquare{0, 0, 0}}, 0, max_depth);
}

MacroPartition MacroPartition::uniform(int level, int max_depth) {
  std::vector<DyadicSquare> sq;
  const int n = 1 << level;
  sq.reserve(static_cast<std::size_t>(n) * n);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) sq.push_back({level, ix, iy});
  return MacroPartition(std::move(sq), 0, max_depth);
}

bool MacroPartition::contains(const DyadicSquare& q) const {
  return std::binary_search(squares_.begin(), squares_.end(), q);
}

int MacroPartition::min_level() const {
  int m = max_depth_;
  for (const auto& q : squares_) m = std::min(m, q.level);
  return m;
}

int MacroPartition::max_level() const {
  int m = 0;
  for (const auto& q : squares_) m = std::max(m, q.level);
  return m;
}

bool MacroPartition::is_valid() const {
  if (squares_.empty()) return false;
  const int lmax = max_level();
  // exact area bookkeeping: each level-m square covers 4^(lmax-m) cells of
  // the level-lmax grid
  std::uint64_t total = 0;
  for (const auto& q : squares_) {
    if (q.level < 0 || q.ix < 0 || q.iy < 0 || q.ix >= (1 << q.level) || q.iy >= (1 << q.level))
      return false;
    total += std::uint64_t(1) << (2 * (lmax - q.level));
  }
  if (total != (std::uint64_t(1) << (2 * lmax))) return false;
  // pairwise disjoint interiors (integer interval test)
  for (std::size_t i = 0; i < squares_.size(); ++i) {
    const auto& a = squares_[i];
    const std::int64_t ax0 = std::int64_t(a.ix) << (lmax - a.level);
    const std::int64_t ax1 = std::int64_t(a.ix + 1) << (lmax - a.level);
    const std::int64_t ay0 = std::int64_t(a.iy) << (lmax - a.level);
    const std::int64_t ay1 = std::int64_t(a.iy + 1) << (lmax - a.level);
    for (std::size_t j = i + 1; j < squares_.size(); ++j) {
      const auto& b = squares_[j];
      const std::int64_t bx0 = std::int64_t(b.ix) << (lmax - b.level);
      const std::int64_t bx1 = std::int64_t(b.ix + 1) << (lmax - b.level);
      const std::int64_t by0 = std::int64_t(b.iy) << (lmax - b.level);
      const std::int64_t by1 = std::int64_t(b.iy + 1) << (lmax - b.level);
      if (ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1) return false;
    }
  }
  return true;
}

bool MacroPartition::is_one_irregular() const {
  SquareSet set(squares_.begin(), squares_.end());
  const int lmax = max_level();
  std::vector<DyadicSquare> nbs;
  for (const auto& q : squares_) {
    nbs.clear();
    all_neighbors(set, lmax, q, &nbs);
    for (const auto& nb : nbs)
      if (std::abs(nb.level - q.level) > 1) return false;
  }
  return true;
}

std::string MacroPartition::dump() const {
  std::ostringstream os;
  os << "dyadic-partition v1 count=" << squares_.size() << "\n";
  for (const auto& q : squares_) os << q.level << " " << q.ix << " " << q.iy << "\n";
  return os.str();
}

MacroPartition refine(const MacroPartition& p, const std::vector<DyadicSquare>& marked,
                      RefineRecord* record) {
  if (marked.empty()) throw ValidationError("refine: marked set is empty");
  for (const auto& q : marked) {
    if (!p.contains(q))
      throw ValidationError("refine: marked square (level " + std::to_string(q.level) + ", " +
                            std::to_string(q.ix) + ", " + std::to_string(q.iy) +
                            ") is not in the partition");
  }

  SquareSet set(p.squares().begin(), p.squares().end());
  int max_level = p.max_level();
  RefineRecord local;
  RefineRecord* rec = record ? record : &local;
  rec->marked_splits.clear();
  rec->closure_splits.clear();

  auto split = [&](const DyadicSquare& q) {
    set.erase(q);
    for (const auto& c : children(q, p.max_depth())) set.insert(c);
    max_level = std::max(max_level, q.level + 1);
  };

  // deduplicate marked squares (set semantics)
  std::vector<DyadicSquare> uniq = marked;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  for (const auto& q : uniq) {
    split(q);
    rec->marked_splits.push_back(q);
  }

  // closure: restore 1-irregularity by splitting the coarser square of any
  // edge-adjacent pair with level gap >= 2
  bool changed = true;
  std::vector<DyadicSquare> nbs;
  while (changed) {
    changed = false;
    std::vector<DyadicSquare> snapshot(set.begin(), set.end());
    std::sort(snapshot.begin(), snapshot.end());
    for (const auto& q : snapshot) {
      if (!set.count(q)) continue;
      nbs.clear();
      all_neighbors(set, max_level, q, &nbs);
      for (const auto& nb : nbs) {
        if (nb.level <= q.level - 2) {
          split(nb);
          rec->closure_splits.push_back(nb);
          changed = true;
        }
      }
    }
  }

  std::vector<DyadicSquare> out(set.begin(), set.end());
  return MacroPartition(std::move(out), p.generation() + 1, p.max_depth());
}

std::vector<DyadicSquare> neighbors(const MacroPartition& p, const DyadicSquare& q) {
  if (!p.contains(q))
    throw ValidationError("neighbors: query square (level " + std::to_string(q.level) + ", " +
                          std::to_string(q.ix) + ", " + std::to_string(q.iy) +
                          ") is not in the partition");
  SquareSet set(p.squares().begin(), p.squares().end());
  std::vector<DyadicSquare> out;
  all_neighbors(set, p.max_level(), q, &out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const char* side_name(Side s) {
  switch (s) {
    case Side::bottom: return "bottom";
    case Side::right: return "right";
    case Side::top: return "top";
    case Side::left: return "left";
  }
  return "?";
}

MicroMesh::MicroMesh(int n_, std::vector<Side> gamma) : n(n_), gamma_r(std::move(gamma)) {
  if (n < 1) throw ValidationError("micro mesh: n must be at least 1");
  std::sort(gamma_r.begin(), gamma_r.end());
  gamma_r.erase(std::unique(gamma_r.begin(), gamma_r.end()), gamma_r.end());
  if (gamma_r.empty())
    throw ValidationError("micro mesh: Gamma^R must be a nonempty union of boundary edges (A2)");
}

std::string MicroMesh::dump() const {
  std::ostringstream os;
  os << "micromesh v1 n=" << n << " gammaR=";
  for (std::size_t i = 0; i < gamma_r.size(); ++i) {
    if (i) os << ",";
    os << side_name(gamma_r[i]);
  }
  os << "\n";
  return os.str();
}

MeshSize mesh_size(const MacroPartition& p, const MicroMesh& y) {
  MeshSize ms;
  for (const auto& q : p.squares()) ms.h_omega = std::max(ms.h_omega, q.diameter());
  ms.h_y = y.h();
  return ms;
}

}  // namespace twoscale
