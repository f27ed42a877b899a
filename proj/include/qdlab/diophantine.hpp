#pragma once

#include <optional>
#include <vector>

#include "qdlab/geometry.hpp"
#include "qdlab/rational.hpp"

namespace qdlab {

// One witness of a good rational approximation. For vector targets q has one
// entry and error is the sup-norm of x - p/q; for matrix targets q is the
// integer input vector, p the nearest integer image, and error the sup-norm
// (or, in multiplicative mode, the product) of the residual entries. height is
// the quantity whose log sits in the denominator of the exponent.
struct ApproxRecord {
    std::vector<BigInt> q, p;
    Rat error;
    BigInt height;
    double exponent = 0;  // -log error / log height; 0 when height <= 1
};

// Finite-height exponent estimate: the reported value is the maximum exponent
// over the final third of the improvement records (no extrapolation), and is a
// lower bound for the limsup in the sense that enumeration deeper can only
// raise it. A target that is hit exactly (rational within range) is reported
// as infinite with the witness, not as a large float.
struct ExponentEstimate {
    double value = 0;
    bool infinite = false;
    BigInt height_reached;
    std::vector<ApproxRecord> records;
    bool lower_bound_flag = true;
    std::optional<std::pair<std::vector<BigInt>, std::vector<BigInt>>> exact_witness;  // (q, p)
};

enum class VectorMethod { cf, brute, lattice };

// Simple exponent of a point x in R^d: quality of approximation by p/q with a
// single denominator, error in sup norm.
// cf: d = 1 only, records are the continued-fraction convergents.
// brute: exhaustive q <= q_max, d <= 3 and q_max <= 1e5.
// lattice: best candidates from reduced approximation lattices at scales 2^k.
ExponentEstimate omega_vector(const VecQ& x, const BigInt& q_max, VectorMethod method);

// Multiplicative exponent of a point: product of coordinate errors against log q.
ExponentEstimate omega_mult_vector(const VecQ& x, const BigInt& q_max);

// Exponent of an M x N matrix: ||Aq - p|| against ||q||, q in Z^N scanned by
// sup norm up to q_max, p the nearest integer vector.
ExponentEstimate omega_matrix(const MatQ& a, const BigInt& q_max);

// Multiplicative matrix exponent: prod |(Aq-p)_i| against prod (|q_j| v 1).
ExponentEstimate omega_mult_matrix(const MatQ& a, const BigInt& q_max);

// Exhaustive scan of the low-denominator rationals in a ball, with an exact
// affine-rank decision on their hull. The denominator cutoff comes from the
// volume argument: with the default constant the points always fit in an
// affine hyperplane, so status violation means the configured constant is bad,
// not that mathematics failed.
enum class HullStatus { empty, single_point, hull, violation };

struct SimplexHullResult {
    BigInt q_bound;
    std::vector<VecQ> points;               // the rationals found, as exact vectors
    HullStatus status = HullStatus::empty;
    std::optional<HyperplaneQ> hull;        // set when status == hull
    std::vector<VecQ> violating_points;     // d+1 affinely independent points when violated
};

// Default cutoff constant: (2^d (d+1)!)^(-1/(d+1)) / 2, strictly below the
// sharp threshold 2^(-d/(d+1)) of the volume bound.
SimplexHullResult simplex_hyperplane(const VecQ& y, const Rat& rho,
                                     std::optional<Rat> eps_override = std::nullopt);

// Largest q with q^(d+1) <= eps_power * rho^(-d), where eps_power = eps^(d+1)
// (exact integer answer; used by simplex_hyperplane, exposed for tests).
BigInt simplex_q_bound(int d, const Rat& rho, const std::optional<Rat>& eps_override);

} // namespace qdlab
