#include "qdlab/geometry.hpp"

namespace qdlab {

// Exhaustive checkers for the net and covering invariants; used by tests and
// by the experiment drivers as online sanity gates.

bool net_is_separated(const NetD& net, Norm norm) {
    for (size_t i = 0; i < net.points.size(); ++i)
        for (size_t j = i + 1; j < net.points.size(); ++j)
            if (dist(net.points[i], net.points[j], norm) < net.separation) return false;
    return true;
}

bool net_covers(const NetD& net, const std::vector<VecD>& candidates, Norm norm) {
    for (const auto& c : candidates) {
        bool hit = false;
        for (const auto& p : net.points)
            if (dist(c, p, norm) <= net.separation) { hit = true; break; }
        if (!hit) return false;
    }
    return true;
}

bool quarter_shrinks_disjoint(const std::vector<BallD>& balls) {
    for (size_t i = 0; i < balls.size(); ++i)
        for (size_t j = i + 1; j < balls.size(); ++j) {
            double d = dist(balls[i].center, balls[j].center, balls[i].norm);
            if (d <= balls[i].radius / 4 + balls[j].radius / 4) return false;
        }
    return true;
}

bool centers_covered(const std::vector<BallD>& all, const std::vector<BallD>& picked) {
    for (const auto& b : all) {
        bool hit = false;
        for (const auto& s : picked)
            if (ball_contains(s, b.center)) { hit = true; break; }
        if (!hit) return false;
    }
    return true;
}

} // namespace qdlab
