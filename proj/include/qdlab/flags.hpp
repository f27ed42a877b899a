#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "qdlab/flow.hpp"
#include "qdlab/measures.hpp"
#include "qdlab/posreal.hpp"
#include "qdlab/wedge.hpp"

namespace qdlab {

// Exact containment of saturated integer sublattices: every basis row of the
// smaller lies in the rational span of the larger.
bool subspace_contains(const RationalSubspace& big, const RationalSubspace& small);

RationalSubspace zero_subspace(int ambient);
RationalSubspace full_subspace(int ambient);

// Ascending chain of primitive sublattices from {0} to the full space, with
// strict inclusions verified exactly.
struct Flag {
    std::vector<RationalSubspace> chain;

    static Flag trivial(int ambient);  // {0} then the full space
    static Flag from_chain(std::vector<RationalSubspace> chain);

    int ambient() const { return chain.empty() ? 0 : chain.front().ambient; }
    int length() const { return static_cast<int>(chain.size()) - 1; }
    bool maximal() const { return length() == ambient(); }
    bool contains(const RationalSubspace& v) const;
    std::vector<int> dims() const;
    void validate() const;  // throws invalid_argument on a broken chain
};

// Would inserting v between its dimension neighbors keep the chain a flag?
bool is_addable(const Flag& flag, const RationalSubspace& v);

// Height profile on {0..d} over the exact positive-real track, shaped around
// a flag. Concavity is a property checked on demand, not a constructor
// invariant: the vertex-extraction path never needs it.
struct EtaProfile {
    std::vector<PosReal> values;  // size ambient+1
    Flag flag;

    const PosReal& at(int j) const;
    // Off the flag dimensions, eta(j)^2 >= 64 * eta(j-1) * eta(j+1), exactly.
    bool concave() const;
};

// c[i] = 4^{i(d-i)} and lambda[i] = 2 * 8^i for d = m + n, as exact integers.
struct FlagConstants {
    std::vector<BigInt> c;
    std::vector<BigInt> lambda;
};

FlagConstants constants_C_lambda(int m, int n);

// Ball in matrix space under the max-entry metric, together with exact sample
// lists for each dilate the flag algorithms query. Sample lists are nested
// along dilates, so sampled sups are monotone in the dilate by construction.
struct SupportBallSample {
    int m = 0, n = 0;
    MatQ center;
    Rat radius;
    std::vector<std::pair<Rat, std::vector<MatQ>>> dilates;  // ascending by dilate

    bool has_dilate(const Rat& lambda) const;
    const std::vector<MatQ>& samples_at(const Rat& lambda) const;  // throws if absent
    void validate() const;  // every sample inside its stated dilate
};

// The corners and center of each dilate box, accumulated so larger dilates
// contain the smaller dilates' samples. For a sup of any functional that is
// entrywise affine (every 1-row or 1-column instance), corners make the
// sampled sup equal to the true sup over the closed box.
SupportBallSample corner_ball_sample(const MatQ& center, const Rat& radius,
                                     const std::vector<Rat>& lambdas);

// Transported covolume at a single matrix, exact.
PosReal f_t_point(const MatQ& a, const RationalFlowPoint& t, const RationalSubspace& v);

// Sampled sup of the transported covolume over one dilate of the ball: a
// certified lower bound for the true sup, exact at the samples.
PosReal f_t_set(const SupportBallSample& s, const RationalSubspace& v,
                const RationalFlowPoint& t, const Rat& lambda);

// Partition of the pool by the exact comparison f_t_set(...) <= eta(dim):
// indices into the pool, low side then high side.
struct VertexClassification {
    std::vector<std::size_t> approximable;
    std::vector<std::size_t> blocked;
};

VertexClassification classify_vertices(const EtaProfile& eta, const SupportBallSample& s,
                                       const Rat& lambda, const RationalFlowPoint& t,
                                       const std::vector<RationalSubspace>& pool);

// One vertex condition inside a permissibility certificate. The comparison is
// decided exactly; the log margin is a float rendering for reports.
struct VertexMargin {
    RationalSubspace vertex;
    double log_margin = 0;  // positive iff the condition holds with room
    bool satisfied = false;
};

// A ball is permissible for (flag, eta, lambda) when every flag member stays
// below twice its eta level over the doubled ball, while every addable pool
// vertex rises above its eta level over the lambda-dilate.
struct PermissibleCertificate {
    Flag flag;
    Rat lambda;
    int pool_height = 0;
    std::vector<VertexMargin> flag_margins;     // f_t_set(2B, V) <= 2 eta(dim V)
    std::vector<VertexMargin> addable_margins;  // f_t_set(lambda B, V) > eta(dim V)
    bool valid = false;
};

PermissibleCertificate check_permissible(const Flag& flag, const EtaProfile& eta,
                                         const Rat& lambda, const SupportBallSample& ball,
                                         const RationalFlowPoint& t,
                                         const std::vector<RationalSubspace>& pool,
                                         int pool_height);

struct BaseCaseResult {
    Flag flag;
    EtaProfile eta;
    PermissibleCertificate certificate;  // at lambda = 2
    bool precondition_ok = false;  // pool sup >= kappa^dim for every pool vertex
    bool permissible_ok = false;
    bool blocked_ok = false;       // flag members rise above eta over 2B
    bool bound_ok = false;         // eta(j) <= C_j / 2 for all j
    bool ratio_ok = false;         // eta(j+1)/eta(j) >= ratio_constant * kappa
    bool concavity_ok = false;     // reported, not required: see EtaProfile::concave
    Rat ratio_constant;            // 4^{-2(d-1)}, the explicit a-priori constant
    double min_ratio_log = 0;      // measured min_j log(eta(j+1)/eta(j))
    std::vector<std::pair<int, double>> pool_plot;  // (dim V, log f) per pool vertex
    std::vector<double> eta_log;                    // log eta(j), j = 0..d
    std::vector<std::string> failures;

    bool ok() const {
        return precondition_ok && permissible_ok && blocked_ok && bound_ok && ratio_ok;
    }
};

// Greedy chain construction over the pool (by the normalized log-height
// g(V) = log(f(V)/C_dim)/dim), followed by the piecewise-geometric extension
// of eta between flag dimensions. All four output properties are asserted
// exactly; failures are reported, not absorbed — they indicate either a pool
// truncated too aggressively or a precondition violation.
BaseCaseResult base_case(const SupportBallSample& b0, const RationalFlowPoint& t,
                         const std::vector<RationalSubspace>& pool, int pool_height,
                         const Rat& kappa);

struct InductiveStepResult {
    RationalSubspace vertex;  // the addable vertex realizing the max radius
    Rat rho;                  // dyadic
    PermissibleCertificate certificate;  // extended flag at 8*lambda on the new ball
    std::vector<std::pair<RationalSubspace, Rat>> radii;  // per-addable threshold radii
    bool vertex_blocked_ok = false;  // winner rises above eta over the 8-lambda dilate
    bool containment_ok = false;     // doubled new ball inside the doubled old one
    bool radius_floor_ok = false;    // 8 lambda rho >= 2^{-d} e^{-2 sup|log r_i|}
    std::vector<std::string> failures;

    bool ok() const { return vertex_blocked_ok && containment_ok && radius_floor_ok; }
};

// For a non-maximal flag and a permissible ball, center a new ball at the
// given point: its radius is the largest per-vertex threshold radius at which
// some addable vertex first rises above its eta level. The three output
// guarantees are asserted exactly against the stated constants.
InductiveStepResult inductive_step(const SupportBallSample& b, const Flag& flag,
                                   const EtaProfile& eta, const Rat& lambda, const MatQ& a,
                                   const RationalFlowPoint& t,
                                   const std::vector<RationalSubspace>& pool,
                                   int pool_height);

struct SmallVertexResult {
    RationalSubspace vertex;  // chain member one past the last one missing v
    int chain_index = 0;
    VecQ lattice_vector;  // integer coordinates of the short vector
    bool inequality_ok = false;   // covolume at A <= e^{-gamma||t||} kappa eta(dim - 1)
    bool chain_bound_ok = false;  // covolume at A <= ||transported v|| * previous covolume
    double log_margin = 0;
    std::vector<std::string> failures;

    bool ok() const { return inequality_ok && chain_bound_ok && failures.empty(); }
};

// For a maximal flag sitting below eta on the sample set and a matrix inside
// the shrinking target: take the shortest transported lattice vector, find the
// last chain member it misses, and return the next one. The output vertex's
// covolume at the matrix is certified small, exactly.
SmallVertexResult extract_small_vertex(const Flag& flag, const EtaProfile& eta,
                                       const SupportBallSample& s, const Rat& s_lambda,
                                       const MatQ& a, const RationalFlowPoint& t,
                                       const Rat& gamma, const Rat& kappa);

using KappaRule = std::function<Rat(const RationalFlowPoint&)>;

// kappa_t = e^{-tau * sup|log r_i|}, rationalized and clamped into (0, 1].
KappaRule default_kappa_schedule(double tau);

struct DecayExperimentPoint {
    double s = 0;  // chain parameter
    Rat kappa;
    int hits = 0;
    int samples = 0;
    double fraction = 0;
};

struct DecayExperiment {
    std::vector<DecayExperimentPoint> points;
    double eps_hat = 0;             // fitted decay rate of log fraction against s
    double eps_lo = 0, eps_hi = 0;  // 2-sigma band on the rate
    double r_squared = 0;
    bool decays = false;            // rate significantly positive
    bool below_resolution = false;  // zero hits at every chain point
    bool precondition_ok = false;   // kappa rule vs the pool-sup assumption, per point
    int children = 0;               // single-level covering demonstration
    bool children_disjoint = false;
    bool children_cover = false;
    std::string children_note;
};

// Monte Carlo fraction of measure samples inside the shrinking target, per
// chain point, with an exponential fit. Also demonstrates one level of the
// ball-refinement covering (children counts, exact quarter-ball disjointness)
// when the base flag leaves room for it.
DecayExperiment measure_decay_experiment(const Measure& mu, const MatQ& center,
                                         const Rat& radius, const Rat& gamma,
                                         const FlowChain& ray, const KappaRule& kappa_rule,
                                         int n_samples, int pool_height = 2,
                                         std::uint64_t seed = 20260822);

}  // namespace qdlab
