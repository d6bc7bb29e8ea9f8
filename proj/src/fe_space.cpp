#include "twoscale/fe_space.hpp"

#include <algorithm>
#include <cmath>

#include "twoscale/quadrature.hpp"

namespace twoscale {

namespace {

std::uint64_t point_key(std::int64_t x, std::int64_t y) {
  return (static_cast<std::uint64_t>(x) << 32) | static_cast<std::uint64_t>(y);
}

std::uint64_t cell_key(int level, int ix, int iy) {
  return (static_cast<std::uint64_t>(level) << 48) | (static_cast<std::uint64_t>(ix) << 24) |
         static_cast<std::uint64_t>(iy);
}

}  // namespace

FeSpaceMacro::FeSpaceMacro(MacroPartition partition) : partition_(std::move(partition)) {
  resolution_ = partition_.max_level();
  scale_ = std::ldexp(1.0, -resolution_);
  const std::int64_t extent = std::int64_t(1) << resolution_;

  // collect corner nodes
  std::unordered_map<std::uint64_t, int> node_index;
  auto add_node = [&](std::int64_t x, std::int64_t y) -> int {
    auto [it, inserted] = node_index.try_emplace(point_key(x, y), static_cast<int>(nodes_x_.size()));
    if (inserted) {
      nodes_x_.push_back(x);
      nodes_y_.push_back(y);
    }
    return it->second;
  };

  const auto& squares = partition_.squares();
  elements_.reserve(squares.size());
  for (std::size_t e = 0; e < squares.size(); ++e) {
    const DyadicSquare& q = squares[e];
    const std::int64_t len = std::int64_t(1) << (resolution_ - q.level);
    const std::int64_t x0 = q.ix * len, y0 = q.iy * len;
    Element el;
    el.square = q;
    el.h = q.side();
    el.x0 = q.x0();
    el.y0 = q.y0();
    el.nodes = {add_node(x0, y0), add_node(x0 + len, y0), add_node(x0, y0 + len),
                add_node(x0 + len, y0 + len)};
    elements_.push_back(el);
    level_cell_to_element_[cell_key(q.level, q.ix, q.iy)] = static_cast<int>(e);
  }

  // hanging nodes: nodes strictly inside an element edge. With a 1-irregular
  // partition the only candidate is the edge midpoint; anything else means
  // the partition is not 1-irregular.
  const int n_nodes = node_count();
  std::vector<std::array<int, 2>> parents(n_nodes, {-1, -1});
  std::vector<std::uint8_t> hanging(n_nodes, 0);
  for (const Element& el : elements_) {
    const DyadicSquare& q = el.square;
    const std::int64_t len = std::int64_t(1) << (resolution_ - q.level);
    if (len == 1) continue;  // finest-resolution squares have no interior edge nodes
    const std::int64_t x0 = nodes_x_[el.nodes[0]], y0 = nodes_y_[el.nodes[0]];
    struct EdgeDef {
      std::int64_t ax, ay, bx, by;
      int na, nb;
    };
    const std::array<EdgeDef, 4> edges = {{
        {x0, y0, x0 + len, y0, el.nodes[0], el.nodes[1]},
        {x0, y0 + len, x0 + len, y0 + len, el.nodes[2], el.nodes[3]},
        {x0, y0, x0, y0 + len, el.nodes[0], el.nodes[2]},
        {x0 + len, y0, x0 + len, y0 + len, el.nodes[1], el.nodes[3]},
    }};
    for (const EdgeDef& ed : edges) {
      int found = 0;
      int mid_node = -1;
      const std::int64_t dx = (ed.bx - ed.ax) == 0 ? 0 : 1;
      const std::int64_t dy = (ed.by - ed.ay) == 0 ? 0 : 1;
      for (std::int64_t k = 1; k < len; ++k) {
        auto it = node_index.find(point_key(ed.ax + dx * k, ed.ay + dy * k));
        if (it != node_index.end()) {
          ++found;
          if (2 * k == len) mid_node = it->second;
        }
      }
      if (found == 0) continue;
      if (found > 1 || mid_node < 0)
        throw ValidationError(
            "macro space: partition is not 1-irregular (multiple nodes on one element edge)");
      hanging[mid_node] = 1;
      parents[mid_node] = {ed.na, ed.nb};
    }
  }

  // free dof numbering, sorted by (y,x) to keep factor-matrix profiles narrow
  std::vector<int> free_nodes;
  free_nodes.reserve(n_nodes);
  for (int i = 0; i < n_nodes; ++i)
    if (!hanging[i]) free_nodes.push_back(i);
  std::sort(free_nodes.begin(), free_nodes.end(), [&](int a, int b) {
    return nodes_y_[a] != nodes_y_[b] ? nodes_y_[a] < nodes_y_[b] : nodes_x_[a] < nodes_x_[b];
  });
  node_dof_.assign(n_nodes, -1);
  n_dofs_ = static_cast<int>(free_nodes.size());
  dof_node_x_.resize(n_dofs_);
  dof_node_y_.resize(n_dofs_);
  dirichlet_.assign(n_dofs_, 0);
  for (int d = 0; d < n_dofs_; ++d) {
    const int node = free_nodes[d];
    node_dof_[node] = d;
    dof_node_x_[d] = nodes_x_[node];
    dof_node_y_[d] = nodes_y_[node];
    if (nodes_x_[node] == 0 || nodes_x_[node] == extent || nodes_y_[node] == 0 ||
        nodes_y_[node] == extent) {
      dirichlet_[d] = 1;
      dirichlet_list_.push_back(d);
    }
  }

  // transitively expand hanging nodes into free dofs; parents of a hanging
  // node live on a strictly coarser edge, so the recursion terminates
  expansion_.assign(n_nodes, {});
  std::function<const std::vector<std::pair<int, double>>&(int)> expand =
      [&](int node) -> const std::vector<std::pair<int, double>>& {
    if (!expansion_[node].empty()) return expansion_[node];
    if (!hanging[node]) {
      expansion_[node] = {{node_dof_[node], 1.0}};
      return expansion_[node];
    }
    std::unordered_map<int, double> acc;
    for (int p : {parents[node][0], parents[node][1]})
      for (const auto& [dof, w] : expand(p)) acc[dof] += 0.5 * w;
    std::vector<std::pair<int, double>> row(acc.begin(), acc.end());
    std::sort(row.begin(), row.end());
    expansion_[node] = std::move(row);
    return expansion_[node];
  };
  for (int i = 0; i < n_nodes; ++i) expand(i);
}

int FeSpaceMacro::locate(double x, double y) const {
  x = std::min(std::max(x, 0.0), 1.0);
  y = std::min(std::max(y, 0.0), 1.0);
  for (int level = 0; level <= resolution_; ++level) {
    const double s = std::ldexp(1.0, level);
    int ix = std::min(static_cast<int>(x * s), (1 << level) - 1);
    int iy = std::min(static_cast<int>(y * s), (1 << level) - 1);
    auto it = level_cell_to_element_.find(cell_key(level, ix, iy));
    if (it != level_cell_to_element_.end()) return it->second;
  }
  throw Error("macro space: point location failed");
}

std::array<double, 4> FeSpaceMacro::corner_values(int element,
                                                  std::span<const double> coeffs) const {
  const Element& el = elements_[element];
  std::array<double, 4> vals{};
  for (int c = 0; c < 4; ++c) {
    double v = 0.0;
    for (const auto& [dof, w] : expansion_[el.nodes[c]]) v += w * coeffs[dof];
    vals[c] = v;
  }
  return vals;
}

void FeSpaceMacro::eval_local(int element, std::span<const double> coeffs, double xi, double eta,
                              double* value, std::array<double, 2>* grad) const {
  const Element& el = elements_[element];
  const std::array<double, 4> v = corner_values(element, coeffs);
  if (value) {
    const auto n = bilinear_values(xi, eta);
    *value = v[0] * n[0] + v[1] * n[1] + v[2] * n[2] + v[3] * n[3];
  }
  if (grad) {
    const auto g = bilinear_gradients(xi, eta);
    (*grad) = {0.0, 0.0};
    for (int c = 0; c < 4; ++c) {
      (*grad)[0] += v[c] * g[c][0] / el.h;
      (*grad)[1] += v[c] * g[c][1] / el.h;
    }
  }
}

double FeSpaceMacro::value(std::span<const double> coeffs, double x, double y) const {
  const int e = locate(x, y);
  const Element& el = elements_[e];
  double out = 0.0;
  eval_local(e, coeffs, (x - el.x0) / el.h, (y - el.y0) / el.h, &out, nullptr);
  return out;
}

std::array<double, 2> FeSpaceMacro::gradient(std::span<const double> coeffs, double x,
                                             double y) const {
  const int e = locate(x, y);
  const Element& el = elements_[e];
  std::array<double, 2> g{};
  eval_local(e, coeffs, (x - el.x0) / el.h, (y - el.y0) / el.h, nullptr, &g);
  return g;
}

std::vector<double> FeSpaceMacro::interpolate(
    const std::function<double(double, double)>& f) const {
  std::vector<double> coeffs(n_dofs_);
  for (int d = 0; d < n_dofs_; ++d) coeffs[d] = f(dof_x(d), dof_y(d));
  return coeffs;
}

FeSpaceMicro::FeSpaceMicro(MicroMesh mesh) : mesh_(std::move(mesh)) {
  const int n = mesh_.n;
  h_node_ = 1.0 / n;
  auto node = [n](int ix, int iy) { return iy * (n + 1) + ix; };
  elements_.reserve(static_cast<std::size_t>(n) * n);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      Element el;
      el.nodes = {node(ix, iy), node(ix + 1, iy), node(ix, iy + 1), node(ix + 1, iy + 1)};
      el.y0 = ix * h_node_;
      el.y1 = iy * h_node_;
      elements_.push_back(el);
    }
  for (int i = 0; i < n; ++i) {
    boundary_edges_.push_back({node(i, 0), node(i + 1, 0), Side::bottom});
    boundary_edges_.push_back({node(n, i), node(n, i + 1), Side::right});
    boundary_edges_.push_back({node(i, n), node(i + 1, n), Side::top});
    boundary_edges_.push_back({node(0, i), node(0, i + 1), Side::left});
  }
}

std::vector<FeSpaceMicro::BoundaryEdge> FeSpaceMicro::gamma_r_edges() const {
  std::vector<BoundaryEdge> out;
  for (const BoundaryEdge& e : boundary_edges_)
    if (std::find(mesh_.gamma_r.begin(), mesh_.gamma_r.end(), e.side) != mesh_.gamma_r.end())
      out.push_back(e);
  return out;
}

double FeSpaceMicro::value(std::span<const double> coeffs, double y1, double y2) const {
  const int n = mesh_.n;
  const int ix = std::min(static_cast<int>(y1 * n), n - 1);
  const int iy = std::min(static_cast<int>(y2 * n), n - 1);
  const Element& el = elements_[iy * n + ix];
  const double xi = (y1 - el.y0) / h_node_;
  const double eta = (y2 - el.y1) / h_node_;
  const auto b = bilinear_values(xi, eta);
  double v = 0.0;
  for (int c = 0; c < 4; ++c) v += coeffs[el.nodes[c]] * b[c];
  return v;
}

std::array<double, 2> FeSpaceMicro::gradient(std::span<const double> coeffs, double y1,
                                             double y2) const {
  const int n = mesh_.n;
  const int ix = std::min(static_cast<int>(y1 * n), n - 1);
  const int iy = std::min(static_cast<int>(y2 * n), n - 1);
  const Element& el = elements_[iy * n + ix];
  const double xi = (y1 - el.y0) / h_node_;
  const double eta = (y2 - el.y1) / h_node_;
  const auto g = bilinear_gradients(xi, eta);
  std::array<double, 2> out{};
  for (int c = 0; c < 4; ++c) {
    out[0] += coeffs[el.nodes[c]] * g[c][0] / h_node_;
    out[1] += coeffs[el.nodes[c]] * g[c][1] / h_node_;
  }
  return out;
}

std::vector<double> FeSpaceMicro::interpolate(
    const std::function<double(double, double)>& f) const {
  std::vector<double> coeffs(dof_count());
  for (int d = 0; d < dof_count(); ++d) coeffs[d] = f(dof_y1(d), dof_y2(d));
  return coeffs;
}

SparseMatrix prolongation(const FeSpaceMacro& coarse, const FeSpaceMacro& fine) {
  std::vector<Triplet> trip;
  std::vector<double> unit(coarse.dof_count(), 0.0);
  // P(f,k) = value of the k-th coarse global basis function at the f-th
  // fine node; evaluated column-wise through the coarse constraint rows
  for (int f = 0; f < fine.dof_count(); ++f) {
    const double x = fine.dof_x(f);
    const double y = fine.dof_y(f);
    const int e = coarse.locate(x, y);
    const auto& el = coarse.elements()[e];
    const auto b = bilinear_values((x - el.x0) / el.h, (y - el.y0) / el.h);
    std::unordered_map<int, double> row;
    for (int c = 0; c < 4; ++c)
      for (const auto& [dof, w] : coarse.node_expansion(el.nodes[c])) {
        const double v = w * b[c];
        if (v != 0.0) row[dof] += v;
      }
    for (const auto& [dof, v] : row)
      if (std::abs(v) > 1e-15) trip.push_back({f, dof, v});
  }
  return SparseMatrix::from_triplets(fine.dof_count(), coarse.dof_count(), std::move(trip));
}

}  // namespace twoscale
