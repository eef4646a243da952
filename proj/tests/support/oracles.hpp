#pragma once

// Reference implementations used only by tests. They share no code with the
// library beyond plain data types.

#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "topointerp/assignment.hpp"
#include "topointerp/field.hpp"
#include "topointerp/network.hpp"
#include "topointerp/persistence.hpp"
#include "topointerp/tensor_ops.hpp"

namespace oracle {

using topointerp::GridShape;
using topointerp::PersistenceDiagram;
using topointerp::ScalarField;
using topointerp::VertexId;

/// Undirected edges of the Freudenthal triangulation, enumerated from its
/// triangles (2D) or tetrahedra (3D): each cell is split along its main
/// diagonal into 2 or 6 simplices.
std::set<std::pair<VertexId, VertexId>> freudenthal_edges(const GridShape& shape);

/// Elder-rule pairs from an explicit edge list and a naive O(n^2) component
/// relabelling. Output sorted in library diagram order.
PersistenceDiagram reference_diagram(const ScalarField& field);

/// Minimum of sum c[i][p(i)] over all permutations.
double brute_force_assignment(const topointerp::CostMatrix& cost);

/// Lexicographically smallest optimal permutation by full enumeration.
std::vector<std::size_t> brute_force_permutation(const topointerp::CostMatrix& cost, double tol = 1e-12);

/// W_q between two diagrams by enumerating every partial matching within
/// each class, with infinite bars cropped to [0, 1].
double brute_force_wasserstein(const PersistenceDiagram& a, const PersistenceDiagram& b, double q = 2.0);

/// Direct 3^dims zero-padded cross-correlation.
topointerp::nn::Volume naive_conv(const topointerp::nn::Volume& in, const std::vector<double>& weight,
                                  const std::vector<double>& bias, int out_channels, int dims);

/// Bilinear/trilinear x2 upsampling evaluated pointwise from the
/// align_corners = false formula.
topointerp::nn::Volume naive_upsample(const topointerp::nn::Volume& in, int dims);

ScalarField random_field(const GridShape& shape, std::mt19937_64& rng);

/// Random diagram with up to `per_class` points in each finite class and at
/// most one infinite point per infinite class, values in [0, 1].
PersistenceDiagram random_diagram(std::mt19937_64& rng, int per_class);

}  // namespace oracle
