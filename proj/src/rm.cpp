#include "cyciso/rm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

namespace cyciso {

namespace {

uint64_t umod(const mpz_class& x, uint64_t m) {
    mpz_class r = x % mpz_class(m);
    if (r < 0) r += mpz_class(m);
    return r.get_ui();
}

uint64_t inv_mod(uint64_t a, uint64_t m) {
    int64_t t = 0, nt = 1, r = int64_t(m), nr = int64_t(a % m);
    while (nr != 0) {
        int64_t qu = r / nr;
        std::swap(t -= qu * nt, nt);
        std::swap(r -= qu * nr, nr);
    }
    if (r != 1) throw std::invalid_argument("inv_mod: not invertible");
    return uint64_t(t < 0 ? t + int64_t(m) : t);
}

bool perfect_square(const mpz_class& n, mpz_class& root) {
    if (n < 0) return false;
    root = sqrt(n);
    return root * root == n;
}

// Bounded irreducibility check for the Weil quartic over Q: no integer root
// dividing q^2 and no factorization into integer monic quadratics.
bool quartic_irreducible(const mpz_class& c1, const mpz_class& c2, uint64_t q) {
    mpz_class q2 = mpz_class(q) * q;
    // Linear factors: roots divide q^2.
    for (mpz_class r = 1; r * r <= q2; ++r) {
        if (q2 % r != 0) continue;
        for (const mpz_class& cand0 : {mpz_class(r), mpz_class(q2 / r)})
            for (int sgn : {1, -1}) {
                mpz_class z = sgn * cand0;
                // chi(z) = z^4 - c1 z^3 + c2 z^2 - q c1 z + q^2
                mpz_class val = z * z * z * z - c1 * z * z * z + c2 * z * z -
                                mpz_class(q) * c1 * z + q2;
                if (val == 0) return false;
            }
    }
    // (z^2 - a z + b)(z^2 - e z + f): b f = q^2, a + e = c1,
    // b + f + a e = c2, a f + e b = q c1.
    for (mpz_class b = 1; b * b <= q2; ++b) {
        if (q2 % b != 0) continue;
        for (int sgn : {1, -1}) {
            mpz_class bb = sgn * b, ff = sgn * (q2 / b);
            // a e = c2 - bb - ff, a + e = c1: roots of w^2 - c1 w + (..)
            mpz_class P = c2 - bb - ff;
            mpz_class disc = c1 * c1 - 4 * P, rt;
            if (!perfect_square(disc, rt)) continue;
            for (int s2 : {1, -1}) {
                mpz_class num = c1 + s2 * rt;
                if (num % 2 != 0) continue;
                mpz_class a = num / 2, e = c1 - a;
                if (a * ff + e * bb == mpz_class(q) * c1) return false;
            }
        }
    }
    return true;
}

}  // namespace

RMData real_order_from_charpoly(const std::vector<mpz_class>& cp, uint64_t q) {
    RMData rm;
    rm.q = q;
    if (cp.size() == 3) {
        rm.g = 1;
        if (cp[2] != 1 || cp[0] != mpz_class(q))
            throw std::invalid_argument(
                "charpoly: expected monic z^2 - c1 z + q");
        rm.c1 = -cp[1];
        if (rm.c1 * rm.c1 > 4 * mpz_class(q))
            throw std::invalid_argument("charpoly: violates the Weil bound");
        return rm;
    }
    if (cp.size() != 5)
        throw std::invalid_argument("charpoly: expected degree 2 or 4");
    rm.g = 2;
    mpz_class q2 = mpz_class(q) * q;
    if (cp[4] != 1 || cp[0] != q2)
        throw std::invalid_argument("charpoly: not monic with constant q^2");
    rm.c1 = -cp[3];
    rm.c2 = cp[2];
    if (cp[1] != -mpz_class(q) * rm.c1)
        throw std::invalid_argument(
            "charpoly: z-coefficient must be -q * (z^3 coefficient)");
    rm.T = rm.c1;
    rm.Nm = rm.c2 - 2 * mpz_class(q);
    // Weil bounds: omega = pi + pi^dagger real with |omega| <= 2 sqrt(q).
    mpz_class A = 2 * mpz_class(q) + rm.c2, B = 2 * rm.c1;
    if (A < 0 || A * A < B * B * mpz_class(q) ||
        rm.c1 * rm.c1 > 16 * mpz_class(q))
        throw std::invalid_argument("charpoly: violates the Weil bound");
    if (rm.T * rm.T - 4 * rm.Nm <= 0)
        throw std::invalid_argument(
            "charpoly: pi + pi^dagger generates no real quadratic field");
    return rm;
}

bool charpoly_irreducible(const RMData& rm) {
    if (rm.g == 1) {
        mpz_class disc = rm.c1 * rm.c1 - 4 * mpz_class(rm.q), rt;
        return !perfect_square(disc, rt);
    }
    return quartic_irreducible(rm.c1, rm.c2, rm.q);
}

mpq_class k0_norm(const RMData& rm, const K0Elem& e) {
    if (rm.g == 1) return e.u;
    return e.u * e.u + e.u * e.v * mpq_class(rm.T) +
           e.v * e.v * mpq_class(rm.Nm);
}

bool is_totally_positive(const RMData& rm, const K0Elem& e) {
    if (rm.g == 1) return e.u > 0;
    // u + v*(T ± sqrt(D))/2 > 0 for D = T^2 - 4 Nm > 0:
    // S := 2u + vT must satisfy S > 0 and S^2 > v^2 D.
    mpq_class S = 2 * e.u + e.v * mpq_class(rm.T);
    mpq_class D = mpq_class(rm.T * rm.T - 4 * rm.Nm);
    return S > 0 && S * S > e.v * e.v * D;
}

K0Elem k0_mul(const RMData& rm, const K0Elem& a, const K0Elem& b) {
    if (rm.g == 1) return {a.u * b.u, 0};
    // (a.u + a.v w)(b.u + b.v w), w^2 = T w - Nm
    mpq_class vv = a.v * b.v;
    return {a.u * b.u - vv * mpq_class(rm.Nm),
            a.u * b.v + a.v * b.u + vv * mpq_class(rm.T)};
}

uint64_t k0_action_scalar(const RMData& rm, const K0Elem& e, uint64_t s,
                          uint64_t m) {
    // omega acts by s + q * s^{-1} mod m.
    uint64_t sig = 0;
    if (rm.g == 2)
        sig = (s % m + (rm.q % m) * uint64_t(inv_mod(s % m, m)) % m) % m;
    mpq_class val = e.u + e.v * mpq_class(sig);
    mpz_class num = val.get_num(), den = val.get_den();
    uint64_t dn = umod(den, m);
    return umod(num, m) * inv_mod(dn, m) % m;
}

TotallyPositiveBeta find_beta(const RMData& rm, uint64_t l, uint64_t s,
                              unsigned skip, int64_t v_bound) {
    if (rm.g == 1) {
        // beta = l itself: totally positive, norm l, kills the order-l group.
        return {K0Elem{mpq_class(int64_t(l)), 0}, l};
    }
    uint64_t sig = (s % l + (rm.q % l) * inv_mod(s % l, l) % l) % l;
    for (int64_t av = 0; av <= v_bound; ++av)
        for (int sgn : {1, -1}) {
            if (av == 0 && sgn < 0) continue;
            mpz_class v(sgn * av);
            // u^2 + (vT) u + (v^2 Nm - l) = 0
            mpz_class disc = v * v * (rm.T * rm.T - 4 * rm.Nm) + 4 * int64_t(l);
            mpz_class rt;
            if (!perfect_square(disc, rt)) continue;
            for (int s2 : {-1, 1}) {
                mpz_class num = -v * rm.T + s2 * rt;
                if (num % 2 != 0) continue;
                mpz_class u = num / 2;
                K0Elem cand{mpq_class(u), mpq_class(v)};
                if (!is_totally_positive(rm, cand)) continue;
                if ((umod(u, l) + umod(v, l) * sig) % l != 0) continue;
                if (skip-- == 0) return {cand, l};
            }
        }
    throw std::runtime_error(
        "not beta-cyclic-polarizable at this l within the search bound");
}

namespace {

struct DecompSearch {
    const RMData& rm;
    uint64_t l;
    const mpz_class& N;
    unsigned skip;
    unsigned seen = 0;
    BetaDecomposition result;
    bool done = false;

    bool offer(unsigned r, std::vector<int64_t> xs, std::vector<int64_t> ys,
               int64_t d) {
        if (done) return true;
        if (seen++ < skip) return false;
        result.r = r;
        result.x.assign(xs.begin(), xs.end());
        result.y.assign(ys.begin(), ys.end());
        result.d = d;
        done = true;
        return true;
    }
};

bool two_square(int64_t n, int64_t& a, int64_t& b) {
    if (n < 0) return false;
    for (a = 0; a * a * 2 <= n; ++a) {
        int64_t rem = n - a * a;
        b = int64_t(std::sqrt(double(rem)));
        while (b * b > rem) --b;
        while ((b + 1) * (b + 1) <= rem) ++b;
        if (b * b == rem) return true;
    }
    return false;
}

}  // namespace

BetaDecomposition decompose_beta(const TotallyPositiveBeta& beta,
                                 const RMData& rm, uint64_t l,
                                 const mpz_class& N, unsigned skip) {
    if (beta.beta.u.get_den() != 1 || beta.beta.v.get_den() != 1)
        throw std::invalid_argument("decompose_beta: beta must be integral");
    DecompSearch ds{rm, l, N, skip};

    if (rm.g == 1) {
        int64_t L = beta.beta.u.get_num().get_si();
        // r = 2 first, then Lagrange r = 4; deterministic order.
        for (int64_t a = 0; a * a * 2 <= L && !ds.done; ++a) {
            int64_t b2 = L - a * a, b = int64_t(std::sqrt(double(b2)));
            while (b * b > b2) --b;
            while ((b + 1) * (b + 1) <= b2) ++b;
            if (b * b == b2 && a <= b) ds.offer(2, {b, a}, {0, 0}, 1);
        }
        for (int64_t a = 0; a * a <= L && !ds.done; ++a)
            for (int64_t b = a; a * a + b * b <= L && !ds.done; ++b)
                for (int64_t c = b; a * a + b * b + c * c <= L && !ds.done; ++c) {
                    int64_t d2 = L - a * a - b * b - c * c;
                    int64_t d = int64_t(std::sqrt(double(d2)));
                    while (d * d > d2) --d;
                    while ((d + 1) * (d + 1) <= d2) ++d;
                    if (d * d == d2 && c <= d)
                        ds.offer(4, {d, c, b, a}, {0, 0, 0, 0}, 1);
                }
        if (!ds.done)
            throw std::runtime_error("decompose_beta: search exhausted");
        return ds.result;
    }

    const int64_t u = beta.beta.u.get_num().get_si();
    const int64_t v = beta.beta.v.get_num().get_si();
    const int64_t T = rm.T.get_si(), Nm = rm.Nm.get_si();
    const int64_t By = 12;
    auto try_d = [&](int64_t d, unsigned r) {
        // sum x_i^2 = d^2 u + Nm * Y2;  sum x_i y_i = (d^2 v - T Y2)/2.
        auto finish_pair = [&](int64_t Sx2, int64_t L, int64_t y1, int64_t y2,
                               unsigned rr, int64_t dd) {
            // Solve x1^2 + x2^2 = Sx2, x1 y1 + x2 y2 = L (plus, for r=4, a
            // two-square remainder with y3 = y4 = 0 and L fully consumed).
            int64_t X = int64_t(std::sqrt(double(std::max<int64_t>(Sx2, 0))));
            for (int64_t x1 = -X; x1 <= X && !ds.done; ++x1) {
                int64_t x2;
                if (y2 != 0) {
                    int64_t num = L - x1 * y1;
                    if (num % y2 != 0) continue;
                    x2 = num / y2;
                } else if (y1 != 0) {
                    if ((L % y1) != 0 || x1 != L / y1) continue;
                    // x2 free: scan below via rr dispatch
                    x2 = INT64_MIN;
                } else {
                    if (L != 0) return;
                    x2 = INT64_MIN;
                }
                auto close = [&](int64_t xx2) {
                    int64_t rem = Sx2 - x1 * x1 - xx2 * xx2;
                    if (rem < 0) return;
                    if (rr == 2) {
                        if (rem == 0)
                            ds.offer(2, {x1, xx2}, {y1, y2}, dd);
                        return;
                    }
                    int64_t a3, a4;
                    if (two_square(rem, a3, a4))
                        ds.offer(4, {x1, xx2, a3, a4}, {y1, y2, 0, 0}, dd);
                };
                if (x2 != INT64_MIN) {
                    close(x2);
                } else {
                    for (int64_t w = -X; w <= X && !ds.done; ++w) close(w);
                }
            }
        };
        for (int64_t y1 = -By; y1 <= By && !ds.done; ++y1)
            for (int64_t y2 = -By; y2 <= By && !ds.done; ++y2) {
                int64_t Y2 = y1 * y1 + y2 * y2;
                int64_t Sx2 = d * d * u + Nm * Y2;
                if (Sx2 < 0) continue;
                int64_t Lnum = d * d * v - T * Y2;
                if (Lnum % 2 != 0) continue;
                finish_pair(Sx2, Lnum / 2, y1, y2, r, d);
            }
    };
    for (unsigned r : {2u, 4u})
        for (int64_t d = 1; d <= 15 && !ds.done; d += 2) {
            if (std::gcd<int64_t>(d, int64_t(2 * l)) != 1) continue;
            if (gcd(mpz_class(d), N) != 1) continue;
            try_d(d, r);
        }
    if (!ds.done)
        throw std::runtime_error(
            "decompose_beta: search exhausted within bounds (|y| <= 12, d <= 15)");
    // Symbolic verification: sum alpha_i^2 == beta exactly.
    mpq_class dd(ds.result.d);
    K0Elem acc{0, 0};
    for (unsigned i = 0; i < ds.result.r; ++i) {
        K0Elem al{mpq_class(ds.result.x[i]) / dd, mpq_class(ds.result.y[i]) / dd};
        K0Elem sq = k0_mul(rm, al, al);
        acc.u += sq.u;
        acc.v += sq.v;
    }
    if (acc.u != beta.beta.u || acc.v != beta.beta.v)
        throw std::logic_error("decompose_beta: verification failed");
    return ds.result;
}

ActionScalars action_scalars(const BetaDecomposition& dec, const RMData& rm,
                             uint64_t s, uint64_t l, uint64_t s_x, uint64_t N) {
    ActionScalars out;
    out.r = dec.r;
    out.l = l;
    out.N = N;
    auto scalars_mod = [&](uint64_t ss, uint64_t m) {
        std::vector<uint64_t> a;
        uint64_t dinv = inv_mod(umod(dec.d, m), m);
        uint64_t sig = 0;
        if (rm.g == 2)
            sig = (ss % m + (rm.q % m) * inv_mod(ss % m, m) % m) % m;
        for (unsigned i = 0; i < dec.r; ++i) {
            uint64_t val =
                (umod(dec.x[i], m) + umod(dec.y[i], m) * sig) % m;
            a.push_back(val * dinv % m);
        }
        return a;
    };
    out.a_mod_l = scalars_mod(s, l);
    out.a_mod_N = scalars_mod(s_x, N);
    uint64_t acc = 0;
    for (uint64_t a : out.a_mod_l) acc = (acc + a * a) % l;
    if (acc != 0)
        throw std::logic_error(
            "action_scalars: sum of squares of t-side scalars not 0 mod l");
    return out;
}

std::vector<std::vector<uint64_t>> kernel_coset_enum(
    const std::vector<uint64_t>& a, uint64_t l) {
    std::vector<std::vector<uint64_t>> out;
    if (a.size() == 2) {
        for (uint64_t uu = 0; uu < l; ++uu)
            out.push_back({a[0] * uu % l, a[1] * uu % l});
        return out;
    }
    if (a.size() != 4)
        throw std::invalid_argument("kernel_coset_enum: r must be 2 or 4");
    auto sub = [&](uint64_t p, uint64_t q) { return (p + l * l - q) % l; };
    for (uint64_t uu = 0; uu < l; ++uu)
        for (uint64_t vv = 0; vv < l; ++vv)
            out.push_back({sub(a[0] * uu % l, a[1] * vv % l),
                           (a[1] * uu + a[0] * vv) % l,
                           sub(a[2] * uu % l, a[3] * vv % l),
                           (a[3] * uu + a[2] * vv) % l});
    return out;
}

}  // namespace cyciso
