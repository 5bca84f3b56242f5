#include "cyciso/lifts.hpp"

#include <numeric>
#include <stdexcept>

namespace cyciso {

namespace {

// Extended gcd on signed 128-bit to get e*N + f*l = 1.
void ext_gcd(int64_t a, int64_t b, int64_t& g, int64_t& x, int64_t& y) {
    if (b == 0) {
        g = a;
        x = 1;
        y = 0;
        return;
    }
    int64_t g1, x1, y1;
    ext_gcd(b, a % b, g1, x1, y1);
    g = g1;
    x = y1;
    y = x1 - (a / b) * y1;
}

// The scalar c with A = c * B coordinatewise, for proportional nonzero A, B.
FieldElem proportionality(const AffThetaPoint& A, const AffThetaPoint& B,
                          const char* what) {
    if (!proj_equal(A, B))
        throw std::invalid_argument(std::string(what) +
                                    ": points are not projectively equal");
    for (size_t i = 0; i < B.size(); ++i)
        if (!B.c[i].is_zero()) return A.c[i] / B.c[i];
    throw std::invalid_argument(std::string(what) + ": zero point");
}

}  // namespace

CrtScalar crt_scalar(uint64_t a, uint64_t u, uint64_t N, uint64_t l) {
    if (N == 0 || l == 0 || std::gcd(N, l) != 1)
        throw std::invalid_argument("crt_scalar: moduli must be coprime and nonzero");
    a %= N;
    u %= l;
    int64_t g, e, f;
    ext_gcd(int64_t(N), int64_t(l), g, e, f);  // e*N + f*l = 1
    const __int128 M = __int128(N) * l;
    __int128 c = (__int128(u) * e % M) * N + (__int128(a) * f % M) * l;
    c %= M;
    if (c < 0) c += M;
    CrtScalar out{a, u, N, l, uint64_t(c)};
    return out;
}

bool is_excellent(const AffThetaPoint& t, const ThetaNull& null, uint64_t l) {
    const uint64_t m = (l - 1) / 2;
    return chainmult(m + 1, t, null) == chainmult(m, t, null);
}

AffThetaPoint make_excellent(const AffThetaPoint& t_any, const ThetaNull& null,
                             uint64_t l, std::mt19937_64& rng) {
    if (l < 3 || l % 2 == 0)
        throw std::invalid_argument("make_excellent: l must be an odd prime");
    const uint64_t m = (l - 1) / 2;
    AffThetaPoint A = chainmult(m + 1, t_any, null);
    AffThetaPoint B = chainmult(m, t_any, null);
    // Scaling t by lambda scales A by lambda^{(m+1)^2} and B by lambda^{m^2};
    // coordinatewise equality (negation is the identity at level 2) needs
    // lambda^{2m+1} = lambda^l = B_i/A_i.
    FieldElem c = proportionality(B, A, "make_excellent: t not of order l");
    FieldElem lam = nth_root(c, l, rng);
    return t_any.scaled(lam);
}

bool is_suitable(const AffThetaPoint& xt, const AffThetaPoint& t,
                 const AffThetaPoint& x, const ThetaNull& null, uint64_t l) {
    return chainmultadd(l, xt, t, x, null) == x;
}

AffThetaPoint make_suitable(const AffThetaPoint& xt_any, const AffThetaPoint& t,
                            const AffThetaPoint& x, const ThetaNull& null,
                            uint64_t l, std::mt19937_64& rng) {
    if (l < 3 || l % 2 == 0)
        throw std::invalid_argument("make_suitable: l must be an odd prime");
    AffThetaPoint Z = chainmultadd(l, xt_any, t, x, null);
    // chainmultadd(l, ., t, x) is homogeneous of degree l in the sum lift, so
    // scaling xt_any by lambda scales Z by lambda^l; we need lambda^l Z = x.
    FieldElem c = proportionality(x, Z, "make_suitable: inconsistent lifts");
    FieldElem lam = nth_root(c, l, rng);
    return xt_any.scaled(lam);
}

AffThetaPoint normalize_order(const AffThetaPoint& x_any, uint64_t N,
                              const ThetaNull& null, std::mt19937_64& rng) {
    if (N == 0) throw std::invalid_argument("normalize_order: N must be positive");
    if (N == 1) return null.point();
    AffThetaPoint Z = chainmult(N, x_any, null);
    FieldElem c =
        proportionality(Z, null.point(), "normalize_order: x not of order N");
    // Scaling x by lambda scales Z by lambda^{N^2}: solve lambda^{N^2} = 1/c
    // as two nested N-th roots (N^2 may overflow a machine word).
    try {
        FieldElem y = nth_root(c.ctx()->inv(c), N, rng);
        FieldElem lam = nth_root(y, N, rng);
        return x_any.scaled(lam);
    } catch (const FieldCapabilityError& e) {
        throw FieldCapabilityError(
            std::string("order normalization impossible in this field; "
                        "extend the field (") +
            e.what() + ")");
    }
}

}  // namespace cyciso
