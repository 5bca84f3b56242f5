#pragma once
// Level-2 theta coordinates: affine/projective points with 2^g coordinates
// indexed by (Z/2Z)^g, the Heisenberg action, and the Riemann-relation chain
// arithmetic (chainadd / chainmultadd / chainmult) plus normal addition.
//
// The level is fixed at n = 2 throughout. At level 2 the negation of an
// affine theta point permutes coordinates by index negation, which is the
// identity permutation, so -x̃ has the same coordinate array as x̃.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "cyciso/ff.hpp"

namespace cyciso {

/// Bit vector in {0,1}^g as an element of (Z/2Z)^g; addition is xor.
using ThetaIndex = uint32_t;

/// Character value chi(i) = (-1)^<i,chi> as a sign bit (0 -> +1, 1 -> -1).
inline int theta_pairing(ThetaIndex i, ThetaIndex chi) {
    return __builtin_popcount(i & chi) & 1;
}

class DegenerateError : public std::runtime_error {
public:
    explicit DegenerateError(const std::string& w) : std::runtime_error(w) {}
};

struct AffThetaPoint {
    AffThetaPoint() = default;
    AffThetaPoint(unsigned g, std::vector<FieldElem> coords);

    unsigned g = 0;
    std::vector<FieldElem> c;  // size 2^g, indexed by ThetaIndex

    const FieldRef& ctx() const { return c.at(0).ctx(); }
    size_t size() const { return c.size(); }
    bool all_zero() const;
    bool operator==(const AffThetaPoint& o) const { return g == o.g && c == o.c; }
    bool operator!=(const AffThetaPoint& o) const { return !(*this == o); }

    AffThetaPoint scaled(const FieldElem& s) const;
    std::string to_string() const;
};

/// Equality up to one global nonzero scalar.
bool proj_equal(const AffThetaPoint& a, const AffThetaPoint& b);

struct ProjThetaPoint {
    AffThetaPoint rep;
    bool operator==(const ProjThetaPoint& o) const { return proj_equal(rep, o.rep); }
};

struct HeisenbergElem {
    FieldElem alpha;   // nonzero central scalar
    ThetaIndex x = 0;  // translation part (K1)
    ThetaIndex y = 0;  // character part (K2)
};

/// (a1,x1,y1)(a2,x2,y2) = (a1*a2*y2(x1), x1+x2, y1+y2)
HeisenbergElem heisenberg_mul(const HeisenbergElem& h1, const HeisenbergElem& h2);
HeisenbergElem heisenberg_inv(const HeisenbergElem& h);
AffThetaPoint heisenberg_act(const HeisenbergElem& h, const AffThetaPoint& P);

class ThetaNull {
public:
    ThetaNull(unsigned g, AffThetaPoint zero_point);

    unsigned g() const { return g_; }
    const AffThetaPoint& point() const { return zero_; }
    const FieldRef& ctx() const { return zero_.ctx(); }

    /// Squared dual U^2_{chi,i}(0̃) = sum_s chi(s) θ_{i+s}(0̃) θ_s(0̃).
    /// Identically zero when chi(i) = -1 (odd pair).
    const FieldElem& dual_sq(ThetaIndex chi, ThetaIndex i) const;

private:
    unsigned g_;
    AffThetaPoint zero_;
    std::vector<FieldElem> dual_sq_;  // [chi << g | i]
};

/// Affine lift of x+y from affine lifts of x, y and of the difference x-y,
/// via the level-2 Riemann relations. Throws DegenerateError when a needed
/// dual denominator vanishes or the difference has no usable coordinate.
AffThetaPoint chainadd(const AffThetaPoint& x, const AffThetaPoint& y,
                       const AffThetaPoint& diff, const ThetaNull& null);

/// Affine lift of m*x + y, where `sum` lifts x+y. Montgomery-style ladder,
/// O(log m) chainadds. m must be >= 0 (at level 2 negation is the identity
/// on coordinates, so callers reduce negative multipliers beforehand).
AffThetaPoint chainmultadd(uint64_t m, const AffThetaPoint& sum,
                           const AffThetaPoint& x, const AffThetaPoint& y,
                           const ThetaNull& null);

/// Affine lift of m*x = chainmultadd(m, x, x, 0̃).
AffThetaPoint chainmult(uint64_t m, const AffThetaPoint& x, const ThetaNull& null);

/// Compatible (normal) addition: from affine lifts of x and t, recover the
/// unordered pair {x+t, x-t} projectively. At level 2 the two elements are
/// genuinely indistinguishable from the inputs (the coordinates of x̃ and t̃
/// only see ±x and ±t), so both candidates are returned; callers holding
/// extra information (e.g. Mumford forms) pick the right one. The order of
/// the returned pair is deterministic.
std::pair<ProjThetaPoint, ProjThetaPoint> normal_add_pair(
    const AffThetaPoint& x, const AffThetaPoint& t, const ThetaNull& null,
    std::mt19937_64& rng);

/// First element of normal_add_pair (deterministic representative).
ProjThetaPoint normal_add(const AffThetaPoint& x, const AffThetaPoint& t,
                          const ThetaNull& null, std::mt19937_64& rng);

}  // namespace cyciso
