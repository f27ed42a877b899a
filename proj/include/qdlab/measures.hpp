#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qdlab/geometry.hpp"
#include "qdlab/rng.hpp"

namespace qdlab {

// Mass queries return an interval, never a bare point estimate; callers must
// propagate the width. exact means lo == hi; flagged means a refinement or
// sample budget was exhausted and the interval is wider than the tolerance asked for.
struct MassBracket {
    Rat lo, hi;
    bool exact = false;
    bool flagged = false;

    Rat width() const { return hi - lo; }
    Rat mid() const { return (lo + hi) / 2; }
    double mid_d() const { return to_double(mid()); }
};

// One similarity map x |-> ratio * O * x + translation. The orthogonal part O
// is restricted to signed permutation matrices (entries in {-1,0,1}) so that
// images of boxes stay boxes and cylinder geometry stays exact; empty = identity.
struct IFSMapSpec {
    Rat ratio;
    VecQ translation;
    std::vector<std::vector<int>> orth;
};

struct IFSSpec {
    std::vector<IFSMapSpec> maps;
    std::vector<Rat> weights;
    // Optional exact hull box of the attractor (lo/hi per coordinate). When
    // given it is verified invariant at construction and cylinder masses at
    // cylinder boundaries come out exact; when empty a certified padded box is
    // computed automatically (correct, but boundary cylinders stay bracketed).
    VecQ hull_lo, hull_hi;
};

// Sparse multivariate polynomial with rational coefficients:
// sum of coeff * prod_i x_i^{exps[i]}.
struct Poly {
    int arity = 1;
    std::vector<std::pair<Rat, std::vector<int>>> terms;

    Rat eval(const VecQ& x) const;
    double eval(const VecD& x) const;
};

struct MeasureSpec;

struct LebesgueSpec { int d = 1; };
struct ProductSpec { std::shared_ptr<MeasureSpec> a, b; };
struct PushforwardSpec {
    std::shared_ptr<MeasureSpec> base;
    std::vector<Poly> components;
};
struct CounterexampleSpec {
    int n_max = 1;
    // bump n: center q_n (Farey order), half-width 1/b_n, height a_n*b_n,
    // with a_n = 2^-n and b_n = 2^(2^n); density is 1 + sum of bumps on [0,1]
};
struct PointMassSpec {
    VecQ point;
    Rat weight = 1;  // weight != 1 makes a deliberately non-probability control
};

struct MeasureSpec {
    std::variant<LebesgueSpec, IFSSpec, ProductSpec, PushforwardSpec,
                 CounterexampleSpec, PointMassSpec> v;
};

class Measure {
public:
    virtual ~Measure() = default;

    virtual int dim() const = 0;
    virtual bool exact() const = 0;  // true when sup-ball masses come back exact
    virtual std::string support_descriptor() const = 0;
    virtual const MeasureSpec& spec() const = 0;

    virtual VecD sample(Rng& rng) const = 0;
    // Exact-track sample; default rationalizes the float sample bit-for-bit.
    virtual VecQ sample_exact(Rng& rng) const { return rat_vec_from_double(sample(rng)); }

    virtual MassBracket ball_mass(const BallQ& ball, const Rat& tol) const = 0;
    virtual MassBracket total_mass() const = 0;
    bool is_probability() const;

    // Mass of the thickened hyperplane {x : euclidean dist(x, plane) <= thickness}
    // intersected with the ball. Default is Monte Carlo; exact overrides exist
    // where the geometry allows it (intervals on R, box clipping in the plane,
    // cylinder recursion for self-similar oracles, point masses). Membership
    // comparisons stay exact even when the slab boundary is irrational: only
    // squared distances are compared.
    virtual MassBracket slab_mass(const HyperplaneQ& plane, const Rat& thickness,
                                  const BallQ& ball, const Rat& tol) const;

    // Monte Carlo bracket (3 binomial sigma), deterministically seeded from the
    // ball parameters so oracles stay pure.
    MassBracket mass_mc(const BallQ& ball, const Rat& tol) const;
};

using MeasurePtr = std::shared_ptr<const Measure>;

MeasurePtr make_measure(const MeasureSpec& spec);

// Convenience constructors.
MeasurePtr lebesgue_cube(int d);
MeasurePtr self_similar_oracle(const IFSSpec& spec);
MeasurePtr product_oracle(const MeasurePtr& a, const MeasurePtr& b);
MeasurePtr pushforward_oracle(const MeasurePtr& base, const std::vector<Poly>& components);
MeasurePtr counterexample_oracle(const CounterexampleSpec& spec);
MeasurePtr point_mass_oracle(const VecQ& point, const Rat& weight = Rat(1));

// Middle-thirds Cantor IFS on [0,1].
IFSSpec cantor_ifs();

// Standard moment-curve map x -> (x, x^2, ..., x^degree).
std::vector<Poly> moment_curve(int degree);

// n-th rational in [0,1] in mediant (Stern-Brocot level) order, 1-based:
// 0/1, 1/1, 1/2, 1/3, 2/3, 1/4, 2/5, 3/5, 3/4, ...
Rat farey_point(int n);

// Details of the density bumps of the counterexample oracle.
struct SpikeInfo { Rat center, half_width, height; };
std::vector<SpikeInfo> counterexample_spikes(int n_max);

// Extra info for IFS oracles.
struct BoxQ { VecQ lo, hi; };
bool ifs_strong_separation(const IFSSpec& spec);
BoxQ ifs_invariant_box(const IFSSpec& spec);

// Largest distance from the plane seen among n support samples falling in the
// ball (rejection sampling from the oracle's sampler). Returns nothing if the
// rejection budget is spent before any sample lands in the ball. The accepted
// subsequence is a function of the seed alone, so the estimate is monotone
// nondecreasing in n for a fixed seed.
std::optional<double> sup_dist_on_support(const Measure& mu, const HyperplaneD& plane,
                                          const BallD& ball, int n, Rng& rng,
                                          int rejection_budget = 0 /*0: 1000*n*/);

// JSON round-trip for oracle specs (rationals encoded as exact "p/q" strings).
std::string measure_spec_to_json(const MeasureSpec& spec);
MeasureSpec measure_spec_from_json(const std::string& text);

} // namespace qdlab
