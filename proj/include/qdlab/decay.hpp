#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "qdlab/diophantine.hpp"
#include "qdlab/geometry.hpp"
#include "qdlab/measures.hpp"
#include "qdlab/posreal.hpp"
#include "qdlab/rng.hpp"

namespace qdlab {

// ----------------------------------------------------------- local dimension
//
// Least-squares slope of log ball-mass against log radius over a geometric
// scale grid.  Mass brackets are propagated into a slope interval by pushing
// each scale's mass to whichever bracket end drives the slope up (or down);
// scales whose bracket touches zero carry no information and are dropped.

struct ScalingFit {
    double slope = 0;
    double slope_lo = 0, slope_hi = 0;    // bracket-propagated extremes
    double r_squared = 0;                  // on bracket midpoints
    int dropped = 0;                       // scales with a zero lower mass bound
    std::vector<std::pair<double, double>> points;  // (log rho, log mid-mass) kept
};

ScalingFit local_dimension(const Measure& mu, const VecQ& x, const std::vector<Rat>& rho_grid,
                           const Rat& tol = Rat(1, 1000000));

// ----------------------------------------------------------- doubling ratios
//
// Worst observed mass(B(x, K rho)) / mass(B(x, rho)) over sampled centers and
// scales, divided conservatively (outer upper bound over inner lower bound).

struct DoublingEstimate {
    Rat worst_ratio{0};
    int evaluated = 0;
    int skipped = 0;       // probes whose inner mass bracket touched zero
    bool flagged = false;  // some mass bracket was flagged by the oracle
};

DoublingEstimate federer_ratio(const Measure& mu, const Rat& K, int samples,
                               const std::vector<Rat>& rho_grid = {},
                               uint64_t seed = 20260822, const Rat& tol = Rat(1, 10000000));

// Scaled variant: ratio mass(B(x, rho^(1-delta))) * rho^eps / mass(B(x, rho)).
// `holds` means the per-decade sup shows no growth across the two smallest
// decades of rho that received probes; c2_hat is the overall sup.

struct ScaledDoublingReport {
    bool holds = false;
    double c2_hat = 0;
    double delta = 0;                 // the exponent actually used
    std::vector<double> decade_sup;   // sup ratio per decade, largest rho first
    int evaluated = 0;
    int skipped = 0;
};

ScaledDoublingReport quasi_federer_check(const Measure& mu, double eps,
                                         std::optional<double> delta, int probes,
                                         const std::vector<Rat>& rho_grid = {},
                                         uint64_t seed = 20260822, const Rat& tol = Rat(1, 10000000));

// ------------------------------------------------------ adversarial plane fit
//
// Searches for the hyperplane whose thickening of half-width beta * radius
// captures the most mass inside the ball, relative to the ball's mass.  The
// search combines the smallest-variance principal direction of support
// samples in the ball, a net of candidate normals through the densest sample,
// and coordinate-perturbation hill climbing.  The result is a lower-bound
// witness for the worst plane, never a certified supremum.

struct PlaneSearchOptions {
    int samples = 256;        // support draws aimed at the ball
    int net_per_dim = 64;     // candidate normals = net_per_dim * dim
    int refine_steps = 20;
    Rat search_tol{1, 50};    // mass tolerance while ranking candidates
    Rat final_tol{1, 2000};   // tolerance for the winner's reported ratio
    uint64_t seed = 20260822;
};

struct PlaneSearchResult {
    HyperplaneQ plane{{Rat(1)}, Rat(0)};
    Rat thickness{0};              // slab half-width used = beta * ball radius
    Rat ratio_lo{0}, ratio_hi{0};  // conservative bracket of the captured fraction
    bool degenerate = false;       // fewer than dim+1 support samples hit the ball
    int samples_in_ball = 0;
};

PlaneSearchResult worst_hyperplane(const Measure& mu, const BallQ& ball, const Rat& beta,
                                   const PlaneSearchOptions& opt = {});

// ------------------------------------------------------------ decay profiles
//
// Empirical slab-decay exponent.  For each probe (center x, scale rho,
// relative width beta) the slab around the adversarial plane has half-width
//   beta * rho                          (absolute, quasi)
//   beta * sup distance on support in B (decaying, weak_quasi)
// and the recorded ratio is mass(slab within ball, filtered) / mass(ball).
// The two quasi modes only ever emit beta <= rho^gamma.  The fit regresses
// log ratio on log beta over the smallest half of the pooled beta values; the
// outcome is a consistency estimate, not a certificate.

enum class DecayMode { absolute, quasi, decaying, weak_quasi };

using PointFilter = std::function<bool(const VecD&)>;

struct ProbeRecord {
    VecD x;
    Rat rho{1};
    Rat beta{0};
    HyperplaneQ plane{{Rat(1)}, Rat(0)};
    Rat gamma{0};
    DecayMode mode = DecayMode::absolute;
    Rat thickness{0};
    Rat ratio_lo{0}, ratio_hi{0};  // bracket of slab mass over ball mass
    double ratio = 0;              // conservative upper value, clamped to [0,1]
    bool skipped = false;          // zero ball mass bound or no support distance
};

struct DecayFit {
    double alpha_hat = 0;
    double c1_hat = 0;
    double r_squared = 0;
    std::vector<std::pair<double, double>> fit_points;  // (beta, ratio) regressed
    std::vector<ProbeRecord> probes;
    int skipped = 0;
    int zero_ratios = 0;  // ratio-zero probes excluded from the log regression
};

struct ProbePlan {
    int points = 12;                    // base centers drawn from the oracle
    std::vector<Rat> rho_grid;          // default 1/4 .. 1/64, factor 1/2
    std::vector<Rat> beta_multipliers;  // beta = m * rho^gamma (quasi modes) or m; default 1/2 .. 1/256
    uint64_t seed = 20260822;
    Rat tol{1, 100000};
    PlaneSearchOptions plane_search;          // one search per (x, rho), shared over beta
    std::optional<HyperplaneQ> fixed_plane;   // bypass the search entirely
};

DecayFit decay_profile(const Measure& mu, DecayMode mode, const Rat& gamma,
                       const PointFilter& filter, const ProbePlan& plan);

// Regression core behind decay_profile, exposed so synthetic (beta, ratio)
// sets can be fitted directly: keeps the smallest half of the beta values,
// drops exact zeros (counted), fits log ratio = log C1 + alpha log beta.
DecayFit fit_decay(const std::vector<std::pair<double, double>>& beta_ratio);

// ------------------------------------------------------------ sublevel cover
//
// Covers the relative sublevel set { x in [-1,1]^d : |f(x)| <= beta * ||f|| }
// of a polynomial by plane thickenings clipped to balls, one collection per
// derivative level: level one carries Taylor zero-set planes at a separated
// net, deeper levels recurse on the steepest partial derivative with the
// appropriately shrunken width.  Membership in an element means
// |normal . x - level| <= margin together with sup-distance to the center at
// most radius.  Margins come from the measured Taylor error on the grid, so
// coverage is checked honestly afterwards: every grid point of the sublevel
// set must land in some element, and misses are reported together with the
// measured smoothness ratio of the top derivative (large values explain
// failures).

struct CoverElement {
    VecQ normal;
    Rat level;   // plane { x : normal . x = level }
    Rat margin;  // functional half-width: |normal . x - level| <= margin
    VecQ center;
    Rat radius;  // sup-norm ball of responsibility
};

struct SublevelCover {
    std::vector<std::vector<CoverElement>> collections;
    double f_norm = 0;             // grid sup of |f|
    double hypothesis_ratio = 0;   // measured Holder norm of the top derivative / f_norm
    bool verified = false;
    std::vector<VecD> uncovered;   // sublevel grid points missed by every element
    long sublevel_grid_points = 0;
    bool exact_single_slab = false;  // affine input: one element, equal to the set
};

SublevelCover cover_sublevel(const Poly& f, int ell, double eps, const Rat& beta,
                             int grid_per_dim = 0 /* 0: choose by dimension */);

// --------------------------------------------------- simplex covering series
//
// One term of the covering-sum experiment at level n: scale
// rho_n = H^(-(d+1)n) / 2, a rho_n-separated net of support samples, and for
// each net point the hyperplane through the bounded-height rationals near it;
// the reported sum aggregates the mass of the plane's thickening of width
// rho_n^(1+gamma) inside each net ball.  Net points whose neighborhood holds
// no rational of admissible height contribute zero and are counted.

struct SimplexCoverTerm {
    VecQ y;
    std::optional<HyperplaneQ> plane;
    MassBracket slab{0, 0, true, false};  // thickened-plane mass within the ball
    MassBracket ball{0, 0, true, false};  // ball mass, for containment checks
    bool undefined = false;               // no admissible rational nearby
};

struct SimplexCoverResult {
    int n = 1;
    Rat rho_n{1};
    BigInt q_bound{0};
    Rat sum_lo{0}, sum_hi{0};            // aggregated slab masses
    Rat ball_sum_lo{0}, ball_sum_hi{0};  // aggregated ball masses
    std::vector<SimplexCoverTerm> terms;
    int undefined_terms = 0;
    int hull_violations = 0;
    int net_size = 0;
};

SimplexCoverResult simplex_cover_sum(const Measure& mu, const Rat& gamma, int H, int n,
                                     const PointFilter& filter = {},
                                     int support_samples = 0 /* 0: scale with 1/rho_n */,
                                     uint64_t seed = 20260822, const Rat& tol = Rat(1, 100000));

// ------------------------------------------------------ decay-failure search
//
// Replays the density-bump construction: against the spiked measure on [0,1],
// scan bump indices n for a bump center inside B(x, rho/2), take the inner
// ball matching the bump width, and compare the captured mass fraction with
// C * beta^alpha -- all in exact arithmetic (the power via the positive-real
// track).  The first strict violation is the witness; if none appears within
// the truncation, the best score found is reported so the caller can raise
// n_max.

struct ViolationWitness {
    int n = 0;
    Rat rho{1};
    VecQ y;            // bump center
    Rat beta{0};       // inner radius over rho
    Rat mass_ratio{0}; // mu(B(y, beta rho) cap B(x, rho)) / mu(B(x, rho))
    PosReal score{};   // mass_ratio * beta^(-alpha), compared exactly against C
    bool qualifies = false;
};

struct ViolationSearchResult {
    bool found = false;
    std::optional<ViolationWitness> witness;  // first qualifying index
    std::vector<ViolationWitness> scanned;    // every candidate, in scan order
};

ViolationSearchResult counterexample_search(const CounterexampleSpec& spec, const Rat& C,
                                            const Rat& alpha, const Rat& rho0,
                                            const VecQ& x = VecQ{Rat(1, 2)});

} // namespace qdlab
