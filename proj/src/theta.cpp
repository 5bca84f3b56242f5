#include "cyciso/theta.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

namespace cyciso {

namespace {

// Montgomery batch inversion; inputs must be nonzero.
std::vector<FieldElem> invert_batch(const FieldRef& f,
                                    const std::vector<FieldElem>& v) {
    if (v.empty()) return {};
    std::vector<FieldElem> prefix(v.size());
    FieldElem acc = f->one();
    for (size_t i = 0; i < v.size(); ++i) {
        prefix[i] = acc;
        acc = acc * v[i];
    }
    FieldElem inv = f->inv(acc);
    std::vector<FieldElem> out(v.size(), f->zero());
    for (size_t i = v.size(); i-- > 0;) {
        out[i] = inv * prefix[i];
        inv = inv * v[i];
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Points

AffThetaPoint::AffThetaPoint(unsigned g_, std::vector<FieldElem> coords)
    : g(g_), c(std::move(coords)) {
    if (c.size() != (size_t{1} << g))
        throw std::invalid_argument("AffThetaPoint: need 2^g coordinates");
    for (auto& v : c)
        if (v.ctx().get() != c[0].ctx().get())
            throw std::invalid_argument("AffThetaPoint: mixed field contexts");
}

bool AffThetaPoint::all_zero() const {
    return std::all_of(c.begin(), c.end(),
                       [](const FieldElem& v) { return v.is_zero(); });
}

AffThetaPoint AffThetaPoint::scaled(const FieldElem& s) const {
    AffThetaPoint out = *this;
    for (auto& v : out.c) v = v * s;
    return out;
}

std::string AffThetaPoint::to_string() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < c.size(); ++i) os << (i ? ", " : "") << c[i].to_string();
    os << ")";
    return os.str();
}

bool proj_equal(const AffThetaPoint& a, const AffThetaPoint& b) {
    if (a.g != b.g) return false;
    // a = lambda * b for some nonzero lambda: cross products must agree.
    size_t pivot = a.c.size();
    for (size_t i = 0; i < a.c.size(); ++i) {
        if (!a.c[i].is_zero() || !b.c[i].is_zero()) {
            if (a.c[i].is_zero() != b.c[i].is_zero()) return false;
            if (pivot == a.c.size()) pivot = i;
        }
    }
    if (pivot == a.c.size()) return true;  // both zero vectors
    for (size_t i = 0; i < a.c.size(); ++i)
        if (a.c[pivot] * b.c[i] != a.c[i] * b.c[pivot]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Heisenberg

HeisenbergElem heisenberg_mul(const HeisenbergElem& h1, const HeisenbergElem& h2) {
    // y2(x1) = (-1)^<x1, y2>
    FieldElem a = h1.alpha * h2.alpha;
    if (theta_pairing(h1.x, h2.y)) a = -a;
    return {a, static_cast<ThetaIndex>(h1.x ^ h2.x),
            static_cast<ThetaIndex>(h1.y ^ h2.y)};
}

HeisenbergElem heisenberg_inv(const HeisenbergElem& h) {
    FieldElem a = h.alpha.ctx()->inv(h.alpha);
    if (theta_pairing(h.x, h.y)) a = -a;
    return {a, h.x, h.y};  // -x = x, -y = y at level 2
}

AffThetaPoint heisenberg_act(const HeisenbergElem& h, const AffThetaPoint& P) {
    AffThetaPoint out = P;
    for (ThetaIndex i = 0; i < P.size(); ++i) {
        // Coordinate at i+x becomes alpha * y(-i-x) * (coordinate at i);
        // at level 2, y(-i-x) = (-1)^<y, i+x>.
        ThetaIndex j = i ^ h.x;
        FieldElem v = h.alpha * P.c[i];
        if (theta_pairing(j, h.y)) v = -v;
        out.c[j] = v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// ThetaNull

ThetaNull::ThetaNull(unsigned g, AffThetaPoint zero_point)
    : g_(g), zero_(std::move(zero_point)) {
    if (zero_.g != g)
        throw std::invalid_argument("ThetaNull: genus mismatch");
    if (zero_.all_zero())
        throw std::invalid_argument("ThetaNull: zero null point");
    const size_t n = size_t{1} << g_;
    const FieldRef& f = zero_.ctx();
    dual_sq_.assign(n * n, f->zero());
    for (ThetaIndex chi = 0; chi < n; ++chi)
        for (ThetaIndex i = 0; i < n; ++i) {
            FieldElem acc = f->zero();
            for (ThetaIndex s = 0; s < n; ++s) {
                FieldElem t = zero_.c[i ^ s] * zero_.c[s];
                if (theta_pairing(s, chi)) t = -t;
                acc += t;
            }
            dual_sq_[(size_t{chi} << g_) | i] = acc;
        }
    // The chi-transforms of the squared null coordinates drive every
    // same-index recovery; if one vanishes the null is unusable.
    for (ThetaIndex chi = 0; chi < n; ++chi)
        if (dual_sq_[size_t{chi} << g_].is_zero())
            throw DegenerateError("ThetaNull: vanishing dual null square");
}

const FieldElem& ThetaNull::dual_sq(ThetaIndex chi, ThetaIndex i) const {
    return dual_sq_.at((size_t{chi} << g_) | i);
}

// ---------------------------------------------------------------------------
// Riemann-relation chain arithmetic
//
// For affine lifts of x, y with difference d = x-y, the level-2 Riemann
// relations say, per character chi and index offset i with chi(i) = +1:
//
//   sum_s chi(s) θ_{i+s}(x+y) θ_s(x-y)
//     = [sum_s chi(s) θ_{i+s}(x) θ_s(x)] [sum_s chi(s) θ_{i+s}(y) θ_s(y)]
//       / U²_{chi,i}(0̃).
//
// Inverting the character sums over the subgroup {chi : chi(i) = +1} yields
// the symmetrized products θ_o(x+y) θ_s(x-y) + θ_s(x+y) θ_o(x-y), and for
// i = 0 the plain products θ_o(x+y) θ_o(x-y). Dividing by the known
// coordinates of x-y recovers the affine lift of x+y.

namespace {

struct ChainCtx {
    const FieldRef& f;
    unsigned g;
    size_t n;
    std::vector<FieldElem> kappa;       // [chi<<g | i], even pairs only
    std::vector<uint8_t> kappa_ok;      // denominator was nonzero
};

std::vector<FieldElem> char_sums(const AffThetaPoint& P) {
    const size_t n = P.size();
    const FieldRef& f = P.ctx();
    std::vector<FieldElem> N(n * n, f->zero());
    for (ThetaIndex chi = 0; chi < n; ++chi)
        for (ThetaIndex i = 0; i < n; ++i) {
            if (theta_pairing(i, chi)) continue;  // odd pair: identically 0
            FieldElem acc = f->zero();
            for (ThetaIndex s = 0; s < n; ++s) {
                FieldElem t = P.c[i ^ s] * P.c[s];
                if (theta_pairing(s, chi)) t = -t;
                acc += t;
            }
            N[(size_t{chi} << P.g) | i] = acc;
        }
    return N;
}

ChainCtx make_chain_ctx(const AffThetaPoint& x, const AffThetaPoint& y,
                        const ThetaNull& null) {
    if (x.g != null.g() || y.g != null.g())
        throw std::invalid_argument("chain arithmetic: genus mismatch");
    if (x.ctx().get() != null.ctx().get() || y.ctx().get() != null.ctx().get())
        throw std::invalid_argument("chain arithmetic: field context mismatch");
    const FieldRef& f = null.ctx();
    const unsigned g = null.g();
    const size_t n = size_t{1} << g;
    ChainCtx cc{f, g, n, {}, {}};
    cc.kappa.assign(n * n, f->zero());
    cc.kappa_ok.assign(n * n, 0);
    auto NX = char_sums(x);
    auto NY = char_sums(y);
    for (ThetaIndex chi = 0; chi < n; ++chi)
        for (ThetaIndex i = 0; i < n; ++i) {
            if (theta_pairing(i, chi)) continue;
            const size_t idx = (size_t{chi} << g) | i;
            const FieldElem& D = null.dual_sq(chi, i);
            if (D.is_zero()) continue;
            cc.kappa[idx] = NX[idx] * NY[idx] * f->inv(D);
            cc.kappa_ok[idx] = 1;
        }
    return cc;
}

// theta_o(x+y) * theta_o(x-y) for every o (i = 0 inversion).
std::vector<FieldElem> same_index_products(const ChainCtx& cc) {
    std::vector<FieldElem> P(cc.n, cc.f->zero());
    FieldElem inv2g = cc.f->inv(cc.f->from_int(int64_t(cc.n)));
    for (ThetaIndex o = 0; o < cc.n; ++o) {
        FieldElem acc = cc.f->zero();
        for (ThetaIndex chi = 0; chi < cc.n; ++chi) {
            if (!cc.kappa_ok[size_t{chi} << cc.g])
                throw DegenerateError("chain arithmetic: vanishing dual null square");
            FieldElem t = cc.kappa[size_t{chi} << cc.g];
            if (theta_pairing(o, chi)) t = -t;
            acc += t;
        }
        P[o] = acc * inv2g;
    }
    return P;
}

// theta_o(x+y) theta_s(x-y) + theta_s(x+y) theta_o(x-y), o != s.
FieldElem cross_product_sym(const ChainCtx& cc, ThetaIndex o, ThetaIndex s) {
    const ThetaIndex i = o ^ s;
    FieldElem acc = cc.f->zero();
    for (ThetaIndex chi = 0; chi < cc.n; ++chi) {
        if (theta_pairing(i, chi)) continue;  // restrict to chi(i) = +1
        const size_t idx = (size_t{chi} << cc.g) | i;
        if (!cc.kappa_ok[idx])
            throw DegenerateError("chain arithmetic: degenerate addition");
        FieldElem t = cc.kappa[idx];
        if (theta_pairing(s, chi)) t = -t;
        acc += t;
    }
    // The restricted character sum counts 2^{g-1} instead of 2^g.
    return acc * cc.f->inv(cc.f->from_int(int64_t(cc.n / 2)));
}

}  // namespace

AffThetaPoint chainadd(const AffThetaPoint& x, const AffThetaPoint& y,
                       const AffThetaPoint& diff, const ThetaNull& null) {
    ChainCtx cc = make_chain_ctx(x, y, null);
    if (diff.g != null.g() || diff.ctx().get() != null.ctx().get())
        throw std::invalid_argument("chainadd: difference mismatch");
    auto P = same_index_products(cc);

    AffThetaPoint out = diff;  // shape/ctx template
    std::vector<size_t> known;
    std::vector<FieldElem> denoms;
    for (ThetaIndex o = 0; o < cc.n; ++o)
        if (!diff.c[o].is_zero()) {
            known.push_back(o);
            denoms.push_back(diff.c[o]);
        }
    if (known.empty())
        throw DegenerateError("chainadd: difference point has no nonzero coordinate");
    auto dinv = invert_batch(cc.f, denoms);
    std::vector<uint8_t> have(cc.n, 0);
    for (size_t k = 0; k < known.size(); ++k) {
        out.c[known[k]] = P[known[k]] * dinv[k];
        have[known[k]] = 1;
    }
    const ThetaIndex s = static_cast<ThetaIndex>(known.front());
    for (ThetaIndex o = 0; o < cc.n; ++o) {
        if (have[o]) continue;
        // diff coordinate at o vanishes: use the symmetrized cross product
        // against the pivot s; the term θ_s(x+y) θ_o(x-y) drops out.
        out.c[o] = cross_product_sym(cc, o, s) * dinv[0];
    }
    return out;
}

AffThetaPoint chainmultadd(uint64_t m, const AffThetaPoint& sum,
                           const AffThetaPoint& x, const AffThetaPoint& y,
                           const ThetaNull& null) {
    if (m == 0) return y;
    if (m == 1) return sum;
    const AffThetaPoint& zero = null.point();
    // Ladder state for k = multiplier prefix:
    //   kx, (k+1)x, kx+y, (k+1)x+y
    AffThetaPoint kx = x;
    AffThetaPoint k1x = chainadd(x, x, zero, null);
    AffThetaPoint kxy = sum;
    AffThetaPoint k1xy = chainadd(sum, x, y, null);
    int bits = 63;
    while (!((m >> bits) & 1)) --bits;
    for (int b = bits - 1; b >= 0; --b) {
        AffThetaPoint ox = chainadd(k1x, kx, x, null);          // (2k+1)x
        AffThetaPoint oxy = chainadd(k1xy, kx, sum, null);      // (2k+1)x+y
        if ((m >> b) & 1) {
            kx = std::move(ox);
            kxy = std::move(oxy);
            k1xy = chainadd(k1xy, k1x, y, null);                // (2k+2)x+y
            k1x = chainadd(k1x, k1x, zero, null);               // (2k+2)x
        } else {
            kxy = chainadd(kxy, kx, y, null);                   // (2k)x+y
            kx = chainadd(kx, kx, zero, null);                  // (2k)x
            k1x = std::move(ox);
            k1xy = std::move(oxy);
        }
    }
    return kxy;
}

AffThetaPoint chainmult(uint64_t m, const AffThetaPoint& x, const ThetaNull& null) {
    return chainmultadd(m, x, x, null.point(), null);
}

// ---------------------------------------------------------------------------
// Normal addition

std::pair<ProjThetaPoint, ProjThetaPoint> normal_add_pair(
    const AffThetaPoint& x, const AffThetaPoint& t, const ThetaNull& null,
    std::mt19937_64& rng) {
    ChainCtx cc = make_chain_ctx(x, t, null);
    // With A = θ(x+t), B = θ(x-t): P[o] = A_o B_o and S(o,s) = A_oB_s + A_sB_o
    // are computable; the vectors A, B are then recovered up to scale and up
    // to the symmetric swap A <-> B, which is the inherent ± ambiguity.
    auto P = same_index_products(cc);
    size_t piv = P.size();
    for (size_t o = 0; o < P.size(); ++o)
        if (!P[o].is_zero()) { piv = o; break; }
    if (piv == P.size())
        throw DegenerateError("normal addition degenerate");
    const ThetaIndex pv = static_cast<ThetaIndex>(piv);

    std::vector<FieldElem> X(cc.n, cc.f->zero()), Y(cc.n, cc.f->zero());
    X[pv] = P[pv];  // A_pv * B_pv, common normalization
    Y[pv] = P[pv];
    FieldElem half = cc.f->inv(cc.f->from_int(2));
    std::vector<FieldElem> S(cc.n, cc.f->zero());
    struct Cand { ThetaIndex o; FieldElem r1, r2; };
    std::vector<Cand> cands;
    for (ThetaIndex o = 0; o < cc.n; ++o) {
        if (o == pv) continue;
        S[o] = cross_product_sym(cc, o, pv);
        // z^2 - S z + P_o P_pv has roots {A_o B_pv, A_pv B_o}; the
        // discriminant (A_oB_pv - A_pvB_o)^2 is a square by construction.
        FieldElem disc = S[o] * S[o] - cc.f->from_int(4) * P[o] * P[pv];
        FieldElem rt = nth_root(disc, 2, rng);
        cands.push_back({o, (S[o] + rt) * half, (S[o] - rt) * half});
    }
    // Assign candidate roots consistently: across indices o, o' we must have
    // X_o Y_{o'} + X_{o'} Y_o = S(o,o') * P_pv.
    std::vector<ThetaIndex> fixed;
    for (auto& cd : cands) {
        bool ok1 = true, ok2 = true;
        for (ThetaIndex o2 : fixed) {
            FieldElem rhs = cross_product_sym(cc, cd.o, o2) * P[pv];
            if (cd.r1 * Y[o2] + X[o2] * cd.r2 != rhs) ok1 = false;
            if (cd.r2 * Y[o2] + X[o2] * cd.r1 != rhs) ok2 = false;
        }
        if (!ok1 && !ok2)
            throw DegenerateError("normal addition: inconsistent recovery");
        if (ok1) {
            X[cd.o] = cd.r1;
            Y[cd.o] = cd.r2;
        } else {
            X[cd.o] = cd.r2;
            Y[cd.o] = cd.r1;
        }
        if (cd.r1 != cd.r2) fixed.push_back(cd.o);
    }
    ProjThetaPoint a{AffThetaPoint(x.g, std::move(X))};
    ProjThetaPoint b{AffThetaPoint(x.g, std::move(Y))};
    return {std::move(a), std::move(b)};
}

ProjThetaPoint normal_add(const AffThetaPoint& x, const AffThetaPoint& t,
                          const ThetaNull& null, std::mt19937_64& rng) {
    return normal_add_pair(x, t, null, rng).first;
}

}  // namespace cyciso
