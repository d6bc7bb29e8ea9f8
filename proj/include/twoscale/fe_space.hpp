#pragma once

// Conforming bilinear (per-direction degree 1) finite element spaces on
// macro partitions and on the micro mesh. Hanging nodes created by the
// 1-irregular quadtree are constrained to the mean of their edge parents,
// which is the unique choice keeping bilinear traces continuous; the free
// degrees of freedom are the unconstrained nodes.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "twoscale/linalg.hpp"
#include "twoscale/mesh.hpp"

namespace twoscale {

class FeSpaceMacro {
 public:
  explicit FeSpaceMacro(MacroPartition partition);

  const MacroPartition& partition() const { return partition_; }

  int dof_count() const { return n_dofs_; }
  int node_count() const { return static_cast<int>(nodes_x_.size()); }
  int hanging_count() const { return node_count() - n_dofs_; }

  // Free-dof coordinates.
  double dof_x(int dof) const { return scale_ * dof_node_x_[dof]; }
  double dof_y(int dof) const { return scale_ * dof_node_y_[dof]; }
  bool is_dirichlet(int dof) const { return dirichlet_[dof] != 0; }
  const std::vector<int>& dirichlet_dofs() const { return dirichlet_list_; }

  struct Element {
    DyadicSquare square;
    std::array<int, 4> nodes;  // corner order (0,0),(1,0),(0,1),(1,1)
    double h = 0.0;
    double x0 = 0.0;
    double y0 = 0.0;
  };
  const std::vector<Element>& elements() const { return elements_; }

  // Expansion of a node value into free dofs (one entry for a free node,
  // the transitively expanded parent average for a hanging node).
  const std::vector<std::pair<int, double>>& node_expansion(int node) const {
    return expansion_[node];
  }

  int locate(double x, double y) const;  // element index containing (x,y)

  double value(std::span<const double> coeffs, double x, double y) const;
  std::array<double, 2> gradient(std::span<const double> coeffs, double x, double y) const;
  // value and gradient inside a known element at local coordinates
  void eval_local(int element, std::span<const double> coeffs, double xi, double eta, double* value,
                  std::array<double, 2>* grad) const;

  // Nodal interpolant; exact for per-direction-linear polynomials.
  std::vector<double> interpolate(const std::function<double(double, double)>& f) const;

  // Gathers the four corner node values implied by a free-dof vector.
  std::array<double, 4> corner_values(int element, std::span<const double> coeffs) const;

 private:
  MacroPartition partition_;
  int resolution_ = 0;  // node coordinates are integers at scale 2^-resolution_
  double scale_ = 1.0;
  std::vector<std::int64_t> nodes_x_, nodes_y_;  // per node
  std::vector<int> node_dof_;                    // -1 for hanging nodes
  std::vector<std::vector<std::pair<int, double>>> expansion_;
  std::vector<std::int64_t> dof_node_x_, dof_node_y_;
  std::vector<std::uint8_t> dirichlet_;
  std::vector<int> dirichlet_list_;
  std::vector<Element> elements_;
  std::unordered_map<std::uint64_t, int> level_cell_to_element_;  // (level,ix,iy) -> element
  int n_dofs_ = 0;
};

class FeSpaceMicro {
 public:
  explicit FeSpaceMicro(MicroMesh mesh);

  const MicroMesh& mesh() const { return mesh_; }
  int dof_count() const { return (mesh_.n + 1) * (mesh_.n + 1); }

  double dof_y1(int dof) const { return (dof % (mesh_.n + 1)) * h_node_; }
  double dof_y2(int dof) const { return (dof / (mesh_.n + 1)) * h_node_; }

  struct Element {
    std::array<int, 4> nodes;
    double y0 = 0.0;
    double y1 = 0.0;  // lower-left corner (y0,y1), side h
  };
  const std::vector<Element>& elements() const { return elements_; }
  double element_side() const { return h_node_; }

  struct BoundaryEdge {
    int node_a = 0;
    int node_b = 0;
    Side side = Side::bottom;
  };
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }
  std::vector<BoundaryEdge> gamma_r_edges() const;

  double value(std::span<const double> coeffs, double y1, double y2) const;
  std::array<double, 2> gradient(std::span<const double> coeffs, double y1, double y2) const;

  std::vector<double> interpolate(const std::function<double(double, double)>& f) const;

 private:
  MicroMesh mesh_;
  double h_node_ = 1.0;
  std::vector<Element> elements_;
  std::vector<BoundaryEdge> boundary_edges_;
};

// Embedding of the coarse space into a space on a refinement of its
// partition (rows: fine dofs, columns: coarse dofs). Exact because nested
// spaces reproduce coarse basis functions.
SparseMatrix prolongation(const FeSpaceMacro& coarse, const FeSpaceMacro& fine);

}  // namespace twoscale
