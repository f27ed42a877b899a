#pragma once

#include <map>
#include <optional>
#include <vector>

#include "qdlab/flow.hpp"
#include "qdlab/lattice.hpp"
#include "qdlab/rational.hpp"

namespace qdlab {

// Exterior-algebra vector with exact rational coordinates: keys are strictly
// increasing 1-based index sets of size `degree`, zero coordinates omitted.
struct WedgeVector {
    int ambient = 0;
    int degree = 0;
    std::map<std::vector<int>, Rat> coords;

    Rat coord(const std::vector<int>& key) const {
        auto it = coords.find(key);
        return it == coords.end() ? Rat(0) : it->second;
    }
    bool is_zero() const { return coords.empty(); }
    bool operator==(const WedgeVector& o) const {
        return ambient == o.ambient && degree == o.degree && coords == o.coords;
    }
};

// Wedge product of the given vectors (each of length `ambient`), expanded
// exactly. Zero vectors count: no vectors at all give the scalar 1.
WedgeVector wedge(int ambient, const std::vector<VecQ>& vectors);

// Sum of squared coordinates. By Cauchy-Binet this equals the Gram determinant
// of any spanning set wedging to the vector, i.e. the squared covolume.
Rat wedge_norm_sq(const WedgeVector& w);

// Exact squared covolume of the lattice spanned by the rows; 0 exactly when
// the rows are dependent (that zero is the degeneracy signal).
Rat covolume_sq(const std::vector<VecQ>& rows);

// Shifted embedding of an M x N matrix into the degree-N exterior power of
// R^{M+N}: the wedge of the sheared second-block basis vectors, minus the
// basepoint e_{M+1..M+N}. The basepoint coordinate of the result is exactly
// zero for every A, and the map is linear in A when M = 1 or N = 1.
WedgeVector plucker_embed(const MatQ& a);

// Primitive sublattice of Z^d, stored as the canonical staircase basis of the
// saturated span: equal subspaces have equal representations.
struct RationalSubspace {
    int ambient = 0;
    MatZ basis;  // rows, canonical, full row rank

    static RationalSubspace from_span(int ambient, const MatQ& span_rows);
    static RationalSubspace from_integer_span(int ambient, const MatZ& span_rows);

    int dim() const { return static_cast<int>(basis.size()); }
    WedgeVector top_wedge() const;  // wedge of the basis rows

    bool operator==(const RationalSubspace& o) const {
        return ambient == o.ambient && basis == o.basis;
    }
    bool operator<(const RationalSubspace& o) const {
        if (dim() != o.dim()) return dim() < o.dim();
        return basis < o.basis;
    }
};

// Squared covolume of the image of Z^{M+N} ∩ V under the sheared-and-scaled
// map A, t — the quantity whose logarithm the subspace exponents consume.
Rat transported_covolume_sq(const MatQ& a, const RationalFlowPoint& t,
                            const RationalSubspace& v);

// The same quantity organized as a map of the embedding coordinates: an
// affine-plus-sparse-linear expression whose value at the embedded matrix
// reproduces the transported top wedge exactly. Inputs have degree N, outputs
// degree dim V; the input coordinate at the basepoint set is folded into the
// constant term (it vanishes on every embedded point).
struct WedgeAffineMap {
    int m = 0, n = 0;
    int deg_out = 0;
    std::map<std::vector<int>, Rat> constant;
    std::map<std::pair<std::vector<int>, std::vector<int>>, Rat> linear;  // (out, in)

    WedgeVector apply(const WedgeVector& sigma) const;
};

WedgeAffineMap build_transport_map(int m, int n, const RationalFlowPoint& t,
                                   const RationalSubspace& v);

// Exact identity check for one instance: squared norm of the map applied to
// the embedded matrix vs the directly transported covolume.
bool verify_transport_identity(const MatQ& a, const RationalFlowPoint& t,
                               const RationalSubspace& v);

// All distinct primitive sublattices of Z^d of dimension 1..d-1 spanned by
// subsets of the integer vectors with entries in [-height, height]. Deduped
// and canonically ordered (by dimension, then basis). The subset count is
// checked against the budget before any work happens.
std::vector<RationalSubspace> enumerate_primitive_subspaces(int d, int height,
                                                            long budget = 200000);

// Affine subspace of the embedding coordinate space (the hyperplane where the
// basepoint coordinate vanishes). Carries the minimal-norm base point and an
// exact direction span, plus a float orthonormal frame for numeric callers.
struct WedgeAffineSubspace {
    int m = 0, n = 0;
    std::vector<std::vector<int>> keys;  // degree-N sets except the basepoint, lex order
    VecQ base;                           // flat coordinates of the minimal-norm point
    MatQ directions;                     // exact reduced spanning rows (may be empty)
    MatD frame;                          // float orthonormal rows spanning the same space

    static WedgeAffineSubspace full(int m, int n);
    static WedgeAffineSubspace from_points(int m, int n, const std::vector<WedgeVector>& pts);

    int dim() const { return static_cast<int>(directions.size()); }
    bool contains(const WedgeVector& sigma) const;  // exact membership
    WedgeVector base_point() const;
    std::optional<VecQ> flatten(const WedgeVector& sigma) const;  // none if outside the hyperplane
};

// Squared size of the map restricted to the subspace: the larger of
// ||map(base)||^2 (Euclidean) and the squared restricted linear norm, the
// latter computed exactly as the max over output coordinates of the squared
// length of the row functional projected onto the direction span (outputs
// measured in sup norm — the mix keeps every quantity rational).
Rat restricted_norm_sq(const WedgeAffineMap& map, const WedgeAffineSubspace& sub);

// Finite-chain exponent of an affine family: at each chain point the best
// subspace from the height-bounded pool, value = max over the final third.
struct AffineExponentEstimate {
    double value = 0;
    bool divergent = false;
    double growth_rate = 0;
    int pool_size = 0;
    std::vector<double> per_point;  // sup over the pool of -log(norm)/(s * dim V)
};

AffineExponentEstimate omega_affine_family(const WedgeAffineSubspace& sub,
                                           const FlowChain& chain, int height);

// Easy direction of the point-vs-family comparison: a matrix embedded in the
// family should have an orbit exponent at least the family's, up to the
// finite-height tolerance. Membership is decided exactly.
struct RestrictedNormCheck {
    bool member = false;
    double omega_point = 0;
    double omega_family = 0;
    bool holds = false;
};

RestrictedNormCheck check_restricted_norm_bound(const MatQ& a, const WedgeAffineSubspace& sub,
                                                const FlowChain& chain, int height,
                                                double tol);

}  // namespace qdlab
