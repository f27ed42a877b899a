#pragma once

#include <vector>

#include "qdlab/diophantine.hpp"
#include "qdlab/lattice.hpp"
#include "qdlab/rational.hpp"

namespace qdlab {

// One point of the diagonal flow, kept exact: multipliers r_i = e^{t_i} with
// prod r_i = 1, so the flow matrix has determinant exactly 1 and shortest-
// vector arithmetic below stays rational.
struct RationalFlowPoint {
    VecQ r;

    int dim() const { return static_cast<int>(r.size()); }

    // max_i |log r_i|, and its exact rational carrier max_i max(r_i, 1/r_i).
    double sup_log() const;
    Rat sup_ratio() const;
};

// A discretized path to infinity inside the expanding cone (first block of
// multipliers >= 1, second block <= 1), with the normalization s(t) stored per
// point. Chains are what the orbit-growth estimators consume.
struct FlowChain {
    int m = 0, n = 0;
    std::vector<RationalFlowPoint> points;
    std::vector<double> s;
};

// The balanced ray: step k has multipliers (2^{kN},...,2^{kN}, 2^{-kM},...,
// 2^{-kM}) and s = k*M*N*log 2 (the ray parameter, not the sup norm).
FlowChain s0_ray_chain(int m, int n, int steps);

// A single integer direction (first m entries >= 0, last n entries <= 0,
// entries summing to zero) scanned at magnitudes 1..steps; multipliers
// 2^{k*dir_i}, s = sup norm of t.
FlowChain cone_ray_chain(int m, int n, const std::vector<int>& direction, int steps);

// Deterministic net of primitive integer directions in the cone, smallest
// total size first; may return fewer than requested when the cone has few
// primitive directions (m = n = 1 has exactly one).
std::vector<std::vector<int>> cone_direction_net(int m, int n, int count);

// Least-squares slope of y against x with fit quality, shared by the
// divergence detectors. Fewer than three points, or flat y, reports zeros.
struct TrendFit {
    double slope = 0;
    double r2 = 0;
};

TrendFit fit_trend(const std::vector<double>& x, const std::vector<double>& y);
bool trend_divergent(const TrendFit& f);

// Block-unipotent matrix [[I_M, A], [0, I_N]] for an M x N matrix A.
MatQ unipotent(const MatQ& a);

// diag(r); throws unless the multipliers are positive with product exactly 1.
MatQ flow_matrix(const RationalFlowPoint& t);

// Rows generating the lattice g_t u_A Z^{M+N} (row j = image of the j-th
// standard generator), exact.
MatQ flow_lattice_rows(const MatQ& a, const RationalFlowPoint& t);

// -log(shortest Euclidean length) of the lattice spanned by the rows.
double lattice_delta(const MatQ& basis_rows);

struct TrajectoryPoint {
    int step = 0;
    double s = 0;
    double delta = 0;
    double value = 0;  // delta / s
    VecQ shortest;
    Rat length_sq;
};

// Finite-chain estimate of the orbit-growth exponent: max of delta/s over the
// final third of the chain, with the full trajectory kept. Unbounded orbits
// (rational targets) are flagged by a least-squares trend test on delta
// against s over the final half of the chain — strong linear growth, not a
// magic threshold on the last value.
struct DynamicalEstimate {
    double value = 0;
    bool divergent = false;
    double growth_rate = 0;  // fitted slope of delta vs s on the final half
    int skipped = 0;         // chain points dropped on enumeration failure
    std::vector<TrajectoryPoint> trajectory;
};

DynamicalEstimate omega_dynamical(const MatQ& a, const FlowChain& chain);

// The correspondence transfer function (N/M)(1 + Mc)/(1 - Nc); pole at c = 1/N.
double xi(double c, int m, int n);

// Both sides of the transference identity at finite height: the direct matrix
// exponent at q_max, the orbit exponent along the chain, and the discrepancy
// |direct - xi(dynamical)|. Rational targets make both sides degenerate
// (exact hit / divergent orbit), reported as a consistent pair instead of a
// meaningless difference.
struct CorrespondenceReport {
    ExponentEstimate direct;
    DynamicalEstimate dynamical;
    double xi_of_dynamical = 0;
    double discrepancy = 0;
    bool both_divergent = false;
};

CorrespondenceReport correspondence_check(const MatQ& a, const BigInt& q_max,
                                          const FlowChain& chain);

// Cone-wide exponent estimate: sup of delta/s over a direction net at each
// magnitude, max over the final third of magnitudes. A positive value that
// persists is consistent with a positive multiplicative exponent; the
// divergence flag fires when some single direction shows linear delta growth.
struct ConeScore {
    double value = 0;
    bool divergent = false;
    std::vector<double> per_magnitude;
    int directions_used = 0;
};

ConeScore vwma_score(const MatQ& a, int steps, int directions = 0);

// Exact membership in the shrinking target: does some nonzero vector of
// g_t u_A Z^{M+N} have length <= e^{-gamma ||t||} * kappa? Closed inequality,
// decided in exact arithmetic (||t|| is the sup norm, whose exponential is the
// rational sup_ratio of the flow point).
bool in_W_kappa_t(const MatQ& a, const Rat& kappa, const RationalFlowPoint& t,
                  const Rat& gamma);

}  // namespace qdlab
