#pragma once

#include <vector>

#include "qdlab/rational.hpp"

namespace qdlab {

using MatZ = std::vector<std::vector<BigInt>>;

// Basis vectors are rows throughout.

// Exact Lovasz-reduction (default delta 3/4) in rational arithmetic.
void lll_reduce(MatQ& basis, const Rat& delta = Rat(3, 4));

// A nonzero vector of minimal Euclidean length in the lattice spanned by the
// rows (exact: Lagrange reduction in rank 2, bounded enumeration above).
// Rank must be at most 8; rows must be linearly independent.
VecQ shortest_vector(const MatQ& basis);

// Squared Euclidean length, exact.
Rat length_sq(const VecQ& v);

// Gram determinant of the rows = squared covolume of the spanned lattice.
Rat gram_det(const MatQ& rows);

// Rank over Q by fraction-free elimination.
int rational_rank(MatQ m);

// Column-style Hermite form of an integer matrix (operations on rows here, as
// basis vectors are rows): canonical upper-staircase generator matrix of the
// row lattice. Zero rows are dropped.
MatZ hnf_rows(MatZ m);

// Integer kernel: basis of {z in Z^n : M z = 0}, canonicalized by hnf_rows.
MatZ integer_kernel(const MatZ& m);

// Primitive integer basis of {c in Q^n : rows . c = 0}, one row per kernel
// dimension (denominators cleared, content divided out).
MatZ rational_kernel_primitive(const MatQ& rows);

// Basis of Z^n intersected with the rational span of the given rows
// (the saturation). Canonical, so equal subspaces give equal bases.
MatZ saturate_span(const MatQ& span_rows);

} // namespace qdlab
