#include "cyciso/genus2.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>

#include "cyciso/poly.hpp"

namespace cyciso {

FieldElem lift_into(const FieldRef& dst, const FieldElem& a) {
    if (a.ctx().get() == dst.get()) return a;
    std::vector<FieldRef> chain;
    FieldRef cur = dst;
    while (cur && cur.get() != a.ctx().get()) {
        chain.push_back(cur);
        cur = cur->base();
    }
    if (!cur) throw std::invalid_argument("lift_into: not a tower extension of the element's field");
    FieldElem r = a;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) r = (*it)->from_base(r);
    return r;
}

namespace {

/// Inverse of lift_into when the value happens to lie in the subfield.
FieldElem to_subfield(const FieldRef& sub, const FieldElem& a) {
    if (a.ctx().get() == sub.get()) return a;
    if (!a.ctx()->has_subfield(sub))
        throw std::invalid_argument("to_subfield: not a subfield");
    const auto& c = a.coeffs();
    for (size_t i = sub->degree(); i < c.size(); ++i)
        if (c[i] != 0) throw std::invalid_argument("to_subfield: value not in subfield");
    return FieldElem(sub, std::vector<uint64_t>(c.begin(), c.begin() + sub->degree()));
}

Poly lift_poly(const FieldRef& dst, const Poly& a) {
    std::vector<FieldElem> c;
    c.reserve(a.coeffs().size());
    for (const auto& x : a.coeffs()) c.push_back(lift_into(dst, x));
    return Poly(dst, std::move(c));
}

Poly as_poly(const FieldRef& F, const std::vector<FieldElem>& c) {
    return Poly(F, c);
}

/// Legendre symbol of a: 1, -1, or 0.
int quad_char(const FieldRef& f, const FieldElem& a) {
    if (a.is_zero()) return 0;
    mpz_class e = f->mult_order() / 2;
    return f->pow(a, e).is_one() ? 1 : -1;
}

/// All elements of a (small) field, odometer order.
std::vector<FieldElem> all_elements(const FieldRef& f) {
    size_t d = f->degree();
    uint64_t p = f->p();
    mpz_class total = f->order();
    if (total > 2000000) throw std::invalid_argument("field too large to enumerate");
    std::vector<FieldElem> out;
    out.reserve(total.get_ui());
    std::vector<uint64_t> c(d, 0);
    while (true) {
        out.push_back(f->elem(c));
        size_t i = 0;
        while (i < d && ++c[i] == p) c[i++] = 0;
        if (i == d) break;
    }
    return out;
}

/// g = gcd(a, b) monic with g = x*a + y*b.
struct XGcd {
    Poly g, x, y;
};
XGcd poly_xgcd(const FieldRef& F, Poly a, Poly b) {
    Poly r0 = a, r1 = b;
    Poly s0 = Poly::constant(F->one()), s1(F);
    Poly t0(F), t1 = Poly::constant(F->one());
    while (!r1.is_zero()) {
        Poly q(F), r2(F);
        Poly::divrem(r0, r1, q, r2);
        Poly s2 = s0 - q * s1, t2 = t0 - q * t1;
        r0 = std::move(r1); r1 = std::move(r2);
        s0 = std::move(s1); s1 = std::move(s2);
        t0 = std::move(t1); t1 = std::move(t2);
    }
    if (r0.is_zero()) return {r0, s0, t0};
    FieldElem inv = F->inv(r0.lead());
    return {r0.scaled(inv), s0.scaled(inv), t0.scaled(inv)};
}

Poly poly_div(const Poly& a, const Poly& b) {
    Poly q(a.ctx()), r(a.ctx());
    Poly::divrem(a, b, q, r);
    return q;
}

}  // namespace

// ---------------------------------------------------------------- curves

HyperellipticCurve::HyperellipticCurve(unsigned genus_, std::vector<FieldElem> coeffs)
    : genus(genus_), f(std::move(coeffs)) {
    if (f.empty() || f[0].ctx().get() == nullptr)
        throw std::invalid_argument("curve: empty coefficient list");
    const FieldRef& F = f[0].ctx();
    while (f.size() > 1 && f.back().is_zero()) f.pop_back();
    size_t d = f.size() - 1;
    if (genus == 0 || (d != 2 * genus + 1u && d != 2 * genus + 2u))
        throw std::invalid_argument("curve: degree inconsistent with genus");
    Poly fp(F, f);
    if (Poly::gcd(fp, fp.derivative()).degree() > 0)
        throw std::invalid_argument("curve: singular model (f not squarefree)");
}

FieldElem HyperellipticCurve::eval(const FieldElem& x) const {
    return as_poly(ctx(), f).eval(x);
}

// ---------------------------------------------------------------- Cantor

MumfordDivisor divisor_zero(const HyperellipticCurve& C) {
    return {{C.ctx()->one()}, {}};
}

bool divisor_valid(const HyperellipticCurve& C, const MumfordDivisor& D) {
    const FieldRef& F = C.ctx();
    if (D.u.empty() || !D.u.back().is_one()) return false;
    if (D.weight() > C.genus) return false;
    Poly u = as_poly(F, D.u), v = as_poly(F, D.v);
    if (v.degree() >= u.degree() && !(D.is_zero() && v.is_zero())) return false;
    return (v * v - as_poly(F, C.f)).rem(u).is_zero();
}

MumfordDivisor cantor_neg(const HyperellipticCurve& C, const MumfordDivisor& a) {
    (void)C;
    MumfordDivisor r = a;
    for (auto& c : r.v) c = -c;
    return r;
}

MumfordDivisor cantor_add(const HyperellipticCurve& C, const MumfordDivisor& a,
                          const MumfordDivisor& b) {
    const FieldRef& F = C.ctx();
    Poly u1 = as_poly(F, a.u), v1 = as_poly(F, a.v);
    Poly u2 = as_poly(F, b.u), v2 = as_poly(F, b.v);
    Poly fp = as_poly(F, C.f);
    // composition
    XGcd e = poly_xgcd(F, u1, u2);
    XGcd c = poly_xgcd(F, e.g, v1 + v2);
    Poly s1 = c.x * e.x, s2 = c.x * e.y;
    Poly u = poly_div(u1 * u2, c.g * c.g);
    Poly num = s1 * u1 * v2 + s2 * u2 * v1 + c.y * (v1 * v2 + fp);
    Poly v = poly_div(num, c.g).rem(u);
    // reduction
    while (u.degree() > int(C.genus)) {
        u = poly_div(fp - v * v, u);
        v = (-v).rem(u);
    }
    u = u.monic();
    std::vector<FieldElem> uc = u.coeffs();
    if (uc.empty()) uc = {F->one()};
    return {uc, v.coeffs()};
}

MumfordDivisor cantor_mul(const HyperellipticCurve& C, const mpz_class& m,
                          const MumfordDivisor& a) {
    mpz_class e = m;
    MumfordDivisor base = a;
    if (e < 0) {
        e = -e;
        base = cantor_neg(C, base);
    }
    MumfordDivisor r = divisor_zero(C);
    for (size_t bit = e == 0 ? 0 : mpz_sizeinbase(e.get_mpz_t(), 2); bit-- > 0;) {
        r = cantor_add(C, r, r);
        if (mpz_tstbit(e.get_mpz_t(), bit)) r = cantor_add(C, r, base);
    }
    return r;
}

MumfordDivisor divisor_frobenius(const HyperellipticCurve& C,
                                 const MumfordDivisor& a, unsigned k) {
    const FieldRef& F = C.ctx();
    MumfordDivisor r = a;
    for (auto& c : r.u) c = F->frobenius(c, k);
    for (auto& c : r.v) c = F->frobenius(c, k);
    return r;
}

MumfordDivisor random_divisor(const HyperellipticCurve& C, std::mt19937_64& rng) {
    const FieldRef& F = C.ctx();
    auto rand_point = [&]() -> MumfordDivisor {
        for (int tries = 0; tries < 4096; ++tries) {
            FieldElem x = F->random(rng);
            FieldElem fx = C.eval(x);
            if (quad_char(F, fx) < 0) continue;
            FieldElem y = fx.is_zero() ? F->zero() : nth_root(fx, 2, rng);
            if ((rng() & 1) != 0) y = -y;
            std::vector<FieldElem> v;
            if (!y.is_zero()) v.push_back(y);
            return {{-x, F->one()}, v};
        }
        throw std::runtime_error("random_divisor: no point found");
    };
    MumfordDivisor d = rand_point();
    for (unsigned i = 1; i < C.genus; ++i) d = cantor_add(C, d, rand_point());
    return d;
}

// ---------------------------------------------------------------- roots

std::vector<FieldElem> poly_roots(const std::vector<FieldElem>& poly,
                                  std::mt19937_64& rng) {
    if (poly.empty()) throw std::invalid_argument("poly_roots: zero polynomial");
    return as_poly(poly[0].ctx(), poly).roots(rng);
}

size_t splitting_degree(const std::vector<FieldElem>& poly) {
    if (poly.empty()) throw std::invalid_argument("splitting_degree: zero polynomial");
    const FieldRef& F = poly[0].ctx();
    Poly f = as_poly(F, poly);
    Poly sf = poly_div(f, Poly::gcd(f, f.derivative()));
    Poly x = Poly::x(F);
    Poly w = x;
    size_t l = 1;
    for (size_t i = 1; sf.degree() > 0; ++i) {
        if (i > poly.size()) throw std::runtime_error("splitting_degree: scan failed");
        w = Poly::powmod(w, F->order(), sf);
        Poly g = Poly::gcd(w - x, sf);
        if (g.degree() > 0) {
            l = std::lcm(l, i);
            sf = poly_div(sf, g);
            w = w.rem(sf);
        }
    }
    return l;
}

// ---------------------------------------------------------------- counting

std::vector<mpz_class> frobenius_charpoly(const HyperellipticCurve& C) {
    const FieldRef& F = C.ctx();
    std::mt19937_64 rng(0x636f756e74ULL);
    auto count = [&](const FieldRef& K, const Poly& f) -> mpz_class {
        mpz_class n = 0;
        for (const auto& x : all_elements(K)) n += 1 + quad_char(K, f.eval(x));
        if (f.degree() % 2 == 1)  // odd model: one point at infinity
            n += 1;
        else
            n += 1 + quad_char(K, f.lead());
        return n;
    };
    mpz_class q = F->order();
    mpz_class n1 = count(F, as_poly(F, C.f));
    FieldRef K2 = FieldCtx::extend(F, 2, rng);
    mpz_class n2 = count(K2, lift_poly(K2, as_poly(F, C.f)));
    mpz_class s1 = q + 1 - n1;
    if (C.genus == 1) return {q, -s1, 1};
    mpz_class s2 = (s1 * s1 - (q * q + 1 - n2)) / 2;
    return {q * q, -q * s1, s2, -s1, 1};
}

// ---------------------------------------------------------------- invariants

namespace {
/// Taylor shift f(x + c).
Poly poly_shift(const FieldRef& F, const Poly& f, const FieldElem& c) {
    Poly r(F);
    Poly xc(F, {c, F->one()});
    for (int i = f.degree(); i >= 0; --i) r = r * xc + Poly::constant(f.coeff(i));
    return r;
}

void matchings(std::vector<int> rest, std::vector<std::pair<int, int>>& cur,
               std::vector<std::vector<std::pair<int, int>>>& out) {
    if (rest.empty()) {
        out.push_back(cur);
        return;
    }
    int a = rest[0];
    for (size_t j = 1; j < rest.size(); ++j) {
        std::vector<int> next;
        for (size_t k = 1; k < rest.size(); ++k)
            if (k != j) next.push_back(rest[k]);
        cur.push_back({a, rest[j]});
        matchings(next, cur, out);
        cur.pop_back();
    }
}
}  // namespace

std::array<FieldElem, 4> igusa_clebsch(const HyperellipticCurve& C,
                                       std::mt19937_64& rng) {
    if (C.genus != 2) throw std::invalid_argument("igusa_clebsch: genus 2 only");
    const FieldRef& F = C.ctx();
    Poly w = as_poly(F, C.f);
    if (w.degree() == 5) {  // shift so f(0) != 0, then send x -> 1/x
        FieldElem c = F->zero();
        for (int64_t k = 0; w.eval(c).is_zero(); ++k) c = F->from_int(k + 1);
        Poly s = poly_shift(F, w, c);
        std::vector<FieldElem> rev(7, F->zero());
        for (int i = 0; i <= s.degree(); ++i) rev[6 - i] = s.coeff(i);
        w = Poly(F, rev);  // x^6 f(1/x + c): infinity becomes the root 0
    }
    size_t d = splitting_degree(w.coeffs());
    FieldRef E = d > 1 ? FieldCtx::extend(F, d, rng) : F;
    Poly we = lift_poly(E, w);
    std::vector<FieldElem> r = we.roots(rng);
    if (r.size() != 6) throw std::runtime_error("igusa_clebsch: expected six branch points");
    FieldElem a0 = we.lead();
    auto D2 = [&](int i, int j) {
        FieldElem d_ = r[i] - r[j];
        return d_ * d_;
    };
    // I2: sum over the 15 splittings into three pairs
    std::vector<std::vector<std::pair<int, int>>> pm;
    {
        std::vector<std::pair<int, int>> cur;
        matchings({0, 1, 2, 3, 4, 5}, cur, pm);
    }
    FieldElem I2 = E->zero();
    for (const auto& m : pm) {
        FieldElem t = E->one();
        for (auto [i, j] : m) t *= D2(i, j);
        I2 += t;
    }
    I2 *= a0 * a0;
    // I4: 10 splittings into two triples; I6: those with a matching across
    FieldElem I4 = E->zero(), I6 = E->zero();
    for (int b = 1; b < 5; ++b)
        for (int c = b + 1; c < 6; ++c) {
            std::array<int, 3> T{0, b, c};
            std::vector<int> Tc;
            for (int k = 1; k < 6; ++k)
                if (k != b && k != c) Tc.push_back(k);
            FieldElem tri = D2(T[0], T[1]) * D2(T[1], T[2]) * D2(T[0], T[2]) *
                            D2(Tc[0], Tc[1]) * D2(Tc[1], Tc[2]) * D2(Tc[0], Tc[2]);
            I4 += tri;
            std::array<int, 3> perm{0, 1, 2};
            do {
                FieldElem cross = E->one();
                for (int k = 0; k < 3; ++k) cross *= D2(T[k], Tc[perm[k]]);
                I6 += tri * cross;
            } while (std::next_permutation(perm.begin(), perm.end()));
        }
    FieldElem a4 = a0 * a0 * a0 * a0;
    I4 *= a4;
    I6 *= a4 * a0 * a0;
    FieldElem I10 = E->one();
    for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j) I10 *= D2(i, j);
    I10 *= a4 * a4 * a0 * a0;
    return {to_subfield(F, I2), to_subfield(F, I4), to_subfield(F, I6), to_subfield(F, I10)};
}

namespace {
bool weighted_equal(const std::array<FieldElem, 4>& A, const std::array<FieldElem, 4>& B) {
    static const int wt[4] = {1, 2, 3, 5};
    const FieldRef& F = A[0].ctx();
    for (int i = 0; i < 4; ++i)
        if (A[i].is_zero() != B[i].is_zero()) return false;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            if (A[i].is_zero() || A[j].is_zero()) continue;
            FieldElem lhs = F->pow(A[i], int64_t(wt[j])) * F->pow(B[j], int64_t(wt[i]));
            FieldElem rhs = F->pow(B[i], int64_t(wt[j])) * F->pow(A[j], int64_t(wt[i]));
            if (lhs != rhs) return false;
        }
    return true;
}
}  // namespace

bool same_iso_class(const HyperellipticCurve& a, const HyperellipticCurve& b,
                    std::mt19937_64& rng) {
    auto ia = igusa_clebsch(a, rng);
    auto ib = igusa_clebsch(b, rng);
    if (a.ctx().get() == b.ctx().get()) return weighted_equal(ia, ib);
    if (a.ctx()->p() != b.ctx()->p()) return false;
    size_t L = std::lcm(a.ctx()->degree(), b.ctx()->degree());
    FieldRef common = build_tower(a.ctx()->p(), {L}, rng);
    Embedding ea(a.ctx(), common, rng), eb(b.ctx(), common, rng);
    std::array<FieldElem, 4> xa{ea.apply(ia[0]), ea.apply(ia[1]), ea.apply(ia[2]), ea.apply(ia[3])};
    std::array<FieldElem, 4> xb{eb.apply(ib[0]), eb.apply(ib[1]), eb.apply(ib[2]), eb.apply(ib[3])};
    return weighted_equal(xa, xb);
}

// ---------------------------------------------------------------- linear algebra

namespace {

using Mat = std::vector<std::vector<FieldElem>>;  // rows of equations

/// Kernel basis of the homogeneous system (rows are equations).
std::vector<std::vector<FieldElem>> gauss_kernel(const FieldRef& F, Mat rows,
                                                 size_t cols) {
    std::vector<int> pivot_of_col(cols, -1);
    size_t rank = 0;
    for (size_t c = 0; c < cols && rank < rows.size(); ++c) {
        size_t pr = rank;
        while (pr < rows.size() && rows[pr][c].is_zero()) ++pr;
        if (pr == rows.size()) continue;
        std::swap(rows[rank], rows[pr]);
        FieldElem inv = F->inv(rows[rank][c]);
        for (size_t j = c; j < cols; ++j) rows[rank][j] *= inv;
        for (size_t r = 0; r < rows.size(); ++r) {
            if (r == rank || rows[r][c].is_zero()) continue;
            FieldElem m = rows[r][c];
            for (size_t j = c; j < cols; ++j) rows[r][j] -= m * rows[rank][j];
        }
        pivot_of_col[c] = int(rank);
        ++rank;
    }
    std::vector<std::vector<FieldElem>> basis;
    for (size_t c = 0; c < cols; ++c) {
        if (pivot_of_col[c] >= 0) continue;
        std::vector<FieldElem> v(cols, F->zero());
        v[c] = F->one();
        for (size_t cc = 0; cc < cols; ++cc)
            if (pivot_of_col[cc] >= 0) v[cc] = -rows[pivot_of_col[cc]][c];
        basis.push_back(std::move(v));
    }
    return basis;
}

/// Inverse of a row-major n x n matrix, or nullopt when singular.
std::optional<std::vector<FieldElem>> mat_inverse(const FieldRef& F, size_t n,
                                                  const std::vector<FieldElem>& m) {
    Mat a(n, std::vector<FieldElem>(2 * n, F->zero()));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) a[i][j] = m[i * n + j];
        a[i][n + i] = F->one();
    }
    for (size_t c = 0; c < n; ++c) {
        size_t pr = c;
        while (pr < n && a[pr][c].is_zero()) ++pr;
        if (pr == n) return std::nullopt;
        std::swap(a[c], a[pr]);
        FieldElem inv = F->inv(a[c][c]);
        for (size_t j = 0; j < 2 * n; ++j) a[c][j] *= inv;
        for (size_t r = 0; r < n; ++r) {
            if (r == c || a[r][c].is_zero()) continue;
            FieldElem t = a[r][c];
            for (size_t j = 0; j < 2 * n; ++j) a[r][j] -= t * a[c][j];
        }
    }
    std::vector<FieldElem> out(n * n, F->zero());
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) out[i * n + j] = a[i][n + j];
    return out;
}

std::vector<FieldElem> mat_apply(const FieldRef& F, size_t n,
                                 const std::vector<FieldElem>& m,
                                 const std::vector<FieldElem>& v) {
    std::vector<FieldElem> out(n, F->zero());
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) out[i] += m[i * n + j] * v[j];
    return out;
}

// ------------------------------------------------------------ branch labels

/// Label (b, chi) of the 2-torsion class attached to branch point i
/// (0-based, last slot = infinity): translation by it acts on theta
/// coordinates by theta_k -> (-1)^<chi,k> theta_{k+b}.
struct NodeLabel {
    ThetaIndex b = 0, chi = 0;
};
NodeLabel branch_label(unsigned g, size_t i) {
    if (g == 2) {
        static const ThetaIndex B[6] = {0, 1, 1, 3, 3, 0};
        static const ThetaIndex X[6] = {1, 1, 2, 2, 0, 0};
        return {B[i], X[i]};
    }
    static const ThetaIndex B1[4] = {0, 1, 1, 0};
    static const ThetaIndex X1[4] = {1, 1, 0, 0};
    return {B1[i], X1[i]};
}
NodeLabel label_xor(NodeLabel a, NodeLabel b) {
    return {ThetaIndex(a.b ^ b.b), ThetaIndex(a.chi ^ b.chi)};
}

AffThetaPoint translate_node(const ThetaNull& null, NodeLabel l) {
    const AffThetaPoint& z = null.point();
    std::vector<FieldElem> c;
    c.reserve(z.size());
    for (ThetaIndex k = 0; k < z.size(); ++k) {
        FieldElem v = z.c[k ^ l.b];
        if (theta_pairing(k, l.chi)) v = -v;
        c.push_back(v);
    }
    return AffThetaPoint(null.g(), std::move(c));
}

// ------------------------------------------------------- Kummer coordinates

/// Cassels-Flynn Kummer coordinates (xi1 : xi2 : xi3 : xi4) of a reduced
/// divisor on an odd-model genus-2 curve y^2 = f(x) (coefficients over the
/// divisor's field). Genus 1 uses the Kummer line (1 : x).
std::vector<FieldElem> kummer_coords(const Poly& f, const MumfordDivisor& D) {
    const FieldRef& F = f.ctx();
    FieldElem zero = F->zero(), one = F->one();
    if (f.degree() == 3) {  // genus 1
        if (D.is_zero()) return {zero, one};
        return {one, -D.u[0]};
    }
    FieldElem f0 = f.coeff(0), f1 = f.coeff(1), f2 = f.coeff(2), f3 = f.coeff(3),
              f4 = f.coeff(4), f5 = f.coeff(5);
    if (D.is_zero()) return {zero, zero, zero, one};
    if (D.weight() == 1) {
        FieldElem x = -D.u[0];
        return {zero, one, x, f5 * x * x};
    }
    FieldElem s = -D.u[1], p = D.u[0];
    FieldElem two = F->from_int(2);
    FieldElem F0 = two * f0 + f1 * s + two * f2 * p + f3 * s * p +
                   two * f4 * p * p + f5 * s * p * p;
    FieldElem dd = s * s - F->from_int(4) * p;
    if (!dd.is_zero()) {
        FieldElem v0 = D.v.size() > 0 ? D.v[0] : zero;
        FieldElem v1 = D.v.size() > 1 ? D.v[1] : zero;
        FieldElem yy = v0 * v0 + v0 * v1 * s + v1 * v1 * p;  // y1*y2
        return {one, s, p, (F0 - two * yy) / dd};
    }
    // repeated support point (x, y) with y != 0
    FieldElem x = s / two;
    FieldElem fx = f.eval(x);
    Poly fp = f.derivative();
    FieldElem fpx = fp.eval(x), fppx = fp.derivative().eval(x);
    FieldElem A2 = f3 * x + two * f4 * x * x + f5 * x * x * x;
    FieldElem A3 = f5 * x * x;
    FieldElem b0 = A2 + F->from_int(3) * x * A3 -
                   (two * fx * fppx - fpx * fpx) / (F->from_int(4) * fx);
    return {one, s, p, b0};
}

/// Linear map theta ~ C * xi fitted on labeled nodes; requires the solution
/// space to be exactly one-dimensional and C invertible.
std::optional<std::pair<std::vector<FieldElem>, std::vector<FieldElem>>> fit_cmat(
    const FieldRef& F, size_t dim,
    const std::vector<std::pair<std::vector<FieldElem>, AffThetaPoint>>& nodes) {
    Mat rows;
    for (const auto& [xi, N] : nodes)
        for (size_t k = 0; k < dim; ++k)
            for (size_t l = k + 1; l < dim; ++l) {
                std::vector<FieldElem> row(dim * dim, F->zero());
                for (size_t m = 0; m < dim; ++m) {
                    row[k * dim + m] += xi[m] * N.c[l];
                    row[l * dim + m] -= xi[m] * N.c[k];
                }
                rows.push_back(std::move(row));
            }
    auto ker = gauss_kernel(F, std::move(rows), dim * dim);
    if (ker.size() != 1) return std::nullopt;
    auto inv = mat_inverse(F, dim, ker[0]);
    if (!inv) return std::nullopt;
    return std::make_pair(ker[0], *inv);
}

// -------------------------------------------------------- Rosenhain recovery

using ProjPair = std::pair<FieldElem, FieldElem>;
FieldElem bracket(const ProjPair& u, const ProjPair& v) {
    return u.first * v.second - v.first * u.second;
}

void check_jacobian_null(const ThetaNull& null) {
    for (ThetaIndex chi = 0; chi < (1u << null.g()); ++chi)
        for (ThetaIndex i = 0; i < (1u << null.g()); ++i)
            if (!theta_pairing(i, chi) && null.dual_sq(chi, i).is_zero())
                throw DecomposableError("theta null has a vanishing even theta constant");
}

/// Rosenhain invariants (lambda, mu, nu) of the curve under a genus-2
/// Jacobian null, from the six branch nodes on the Kummer surface: they are
/// coplanar and lie on a conic in that plane; projecting the conic from the
/// node of the zero class gives the branch points of a Moebius-normalized
/// model (first three branch points at 0, 1, infinity).
std::array<FieldElem, 3> rosenhain_from_null(const ThetaNull& null) {
    const FieldRef& F = null.ctx();
    check_jacobian_null(null);
    std::array<AffThetaPoint, 6> N;
    for (size_t i = 0; i < 6; ++i) N[i] = translate_node(null, branch_label(2, i));
    // coordinates in the plane of the nodes, basis (N6, N1, N2)
    auto plane_coords = [&](const AffThetaPoint& P) -> std::array<FieldElem, 3> {
        Mat rows(4, std::vector<FieldElem>(4, F->zero()));
        for (size_t r = 0; r < 4; ++r) {
            rows[r][0] = N[5].c[r];
            rows[r][1] = N[0].c[r];
            rows[r][2] = N[1].c[r];
            rows[r][3] = P.c[r];
        }
        auto ker = gauss_kernel(F, std::move(rows), 4);
        if (ker.size() != 1 || ker[0][3].is_zero())
            throw DegenerateError("node configuration is not in general position");
        FieldElem t = -F->inv(ker[0][3]);
        return {ker[0][0] * t, ker[0][1] * t, ker[0][2] * t};
    };
    std::array<std::array<FieldElem, 3>, 3> pc;  // N3, N4, N5
    for (size_t i = 0; i < 3; ++i) pc[i] = plane_coords(N[2 + i]);
    // conic through all six nodes; the basis nodes N6=(1,0,0), N1=(0,1,0),
    // N2=(0,0,1) kill the square terms, leaving q3*xy + q4*xw + q5*yw;
    // fit on N3, N4 and check N5
    Mat crows;
    for (size_t i = 0; i < 2; ++i)
        crows.push_back({pc[i][0] * pc[i][1], pc[i][0] * pc[i][2], pc[i][1] * pc[i][2]});
    auto cker = gauss_kernel(F, std::move(crows), 3);
    if (cker.size() != 1) throw DegenerateError("node conic is not unique");
    const auto& q = cker[0];  // (q3, q4, q5)
    if (!(q[0] * pc[2][0] * pc[2][1] + q[1] * pc[2][0] * pc[2][2] +
          q[2] * pc[2][1] * pc[2][2]).is_zero())
        throw DegenerateError("sixth node is off the node conic");
    // projection from N6 is t = (y : w); the tangent direction at N6 is t6
    ProjPair t1{F->one(), F->zero()}, t2{F->zero(), F->one()};
    ProjPair t6{-q[1], q[0]};
    auto moebius = [&](const ProjPair& t) -> FieldElem {
        FieldElem den = bracket(t, t6) * bracket(t2, t1);
        if (den.is_zero()) throw DegenerateError("branch point collision at infinity");
        return bracket(t, t1) * bracket(t2, t6) / den;
    };
    std::array<FieldElem, 3> lam;
    for (size_t i = 0; i < 3; ++i) lam[i] = moebius({pc[i][1], pc[i][2]});
    for (size_t i = 0; i < 3; ++i) {
        if (lam[i].is_zero() || lam[i].is_one())
            throw DegenerateError("degenerate Rosenhain invariant");
        for (size_t j = i + 1; j < 3; ++j)
            if (lam[i] == lam[j]) throw DegenerateError("colliding Rosenhain invariants");
    }
    return lam;
}

}  // namespace

HyperellipticCurve theta_to_curve(const ThetaNull& nullB) {
    if (nullB.g() != 2) throw std::invalid_argument("theta_to_curve: genus 2 only");
    const FieldRef& F = nullB.ctx();
    auto lam = rosenhain_from_null(nullB);
    Poly f = Poly::x(F);
    for (const FieldElem& r : {F->one(), lam[0], lam[1], lam[2]})
        f = f * Poly(F, {-r, F->one()});
    return HyperellipticCurve(2, f.coeffs());
}

// ---------------------------------------------------------------- Thomae

namespace {

/// Squared even theta constant ratios U(chi,i)^2 / U(0,0)^2 of a Rosenhain
/// Jacobian, as monomials in the pairwise differences of (0, 1, lam, mu, nu):
/// exponents over (l, m, n, l-1, m-1, n-1, l-m, l-n, m-n).
struct ThomaeEntry {
    ThetaIndex chi, i;
    int8_t e[9];
};
const ThomaeEntry kThomae2[9] = {
    {0, 1, {-1, 1, -1, 1, -1, 1, 0, 0, 0}},
    {0, 2, {-1, 1, 0, 1, -1, 0, 0, -1, 1}},
    {0, 3, {0, 0, -1, 0, 0, 1, 0, -1, 1}},
    {1, 0, {-1, 1, -1, 0, 0, 0, 0, 0, 0}},
    {1, 2, {0, 0, -1, 1, -1, 0, 0, -1, 1}},
    {2, 0, {0, 1, -1, 0, -1, 1, 1, -1, 0}},
    {2, 1, {-1, 0, 0, 1, 0, 0, 1, -1, 0}},
    {3, 0, {-1, 0, 0, 0, -1, 1, 1, -1, 0}},
    {3, 3, {-1, 0, -1, 0, -1, 0, 1, 0, 1}},
};

/// The 2^{2g} two-torsion classes with their Kummer coordinates (from the
/// branch point divisors) and theta nodes (from the translates of the null).
std::vector<std::pair<std::vector<FieldElem>, AffThetaPoint>> node_table(
    const HyperellipticCurve& C, const FieldRef& E,
    const std::vector<FieldElem>& roots, const ThetaNull& null) {
    Poly fe = lift_poly(E, as_poly(C.ctx(), C.f));
    std::vector<std::pair<std::vector<FieldElem>, AffThetaPoint>> nodes;
    MumfordDivisor zero{{E->one()}, {}};
    if (C.genus == 1) {
        for (size_t i = 0; i < 3; ++i)
            nodes.push_back({kummer_coords(fe, {{-roots[i], E->one()}, {E->zero()}}),
                             translate_node(null, branch_label(1, i))});
        nodes.push_back({kummer_coords(fe, zero), translate_node(null, branch_label(1, 3))});
        return nodes;
    }
    for (size_t i = 0; i < 6; ++i)
        for (size_t j = i + 1; j < 6; ++j) {
            NodeLabel l = label_xor(branch_label(2, i), branch_label(2, j));
            MumfordDivisor D;
            if (j == 5) {
                D = {{-roots[i], E->one()}, {E->zero()}};
            } else {
                Poly u = Poly(E, {-roots[i], E->one()}) * Poly(E, {-roots[j], E->one()});
                D = {u.coeffs(), {E->zero()}};
            }
            nodes.push_back({kummer_coords(fe, D), translate_node(null, l)});
        }
    nodes.push_back({kummer_coords(fe, zero), translate_node(null, {0, 0})});
    return nodes;
}

ThetaCurveData thomae_null_g2(const HyperellipticCurve& C, std::mt19937_64& rng) {
    const FieldRef& F = C.ctx();
    size_t d = splitting_degree(C.f);
    FieldRef E1 = d > 1 ? FieldCtx::extend(F, d, rng) : F;
    std::vector<FieldElem> roots = lift_poly(E1, as_poly(F, C.f)).roots(rng);
    if (roots.size() != 5) throw std::runtime_error("thomae_null: expected five finite roots");
    // Rosenhain normalization: a1 -> 0, a2 -> 1, infinity fixed
    FieldElem den = E1->inv(roots[1] - roots[0]);
    FieldElem l = (roots[2] - roots[0]) * den;
    FieldElem m = (roots[3] - roots[0]) * den;
    FieldElem n = (roots[4] - roots[0]) * den;
    FieldElem one = E1->one();
    std::array<FieldElem, 9> diff{l, m, n, l - one, m - one, n - one,
                                  l - m, l - n, m - n};
    std::array<FieldElem, 9> ratio;
    bool all_square = true;
    for (size_t k = 0; k < 9; ++k) {
        FieldElem r = E1->one();
        for (size_t a = 0; a < 9; ++a) {
            for (int e = 0; e < kThomae2[k].e[a]; ++e) r *= diff[a];
            for (int e = 0; e > kThomae2[k].e[a]; --e) r = r / diff[a];
        }
        ratio[k] = r;
        all_square = all_square && has_nth_root(r, 2);
    }
    FieldRef E = all_square ? E1 : FieldCtx::extend(E1, 2, rng);
    std::array<FieldElem, 9> u;
    for (size_t k = 0; k < 9; ++k) u[k] = nth_root(lift_into(E, ratio[k]), 2, rng);
    std::array<FieldElem, 3> ros{lift_into(E, l), lift_into(E, m), lift_into(E, n)};
    std::vector<FieldElem> roots_e;
    for (const auto& r : roots) roots_e.push_back(lift_into(E, r));

    for (uint32_t mask = 0; mask < 512; ++mask) {
        std::array<FieldElem, 16> U;
        U.fill(E->zero());
        U[0] = E->one();
        for (size_t k = 0; k < 9; ++k) {
            FieldElem v = u[k];
            if (mask >> k & 1) v = -v;
            U[(kThomae2[k].chi << 2) | kThomae2[k].i] = v;
        }
        // invert the character sums: prod(a, b) recovers theta_a * theta_b
        auto prod = [&](ThetaIndex a, ThetaIndex b) {
            FieldElem s = E->zero();
            for (ThetaIndex chi = 0; chi < 4; ++chi) {
                FieldElem t = U[(chi << 2) | (a ^ b)];
                if (theta_pairing(b, chi)) t = -t;
                s += t;
            }
            return s / E->from_int(4);
        };
        FieldElem p00 = prod(0, 0);
        if (p00.is_zero()) continue;
        bool ok = true;
        for (ThetaIndex a = 0; a < 4 && ok; ++a)
            for (ThetaIndex b = 0; b < 4 && ok; ++b)
                ok = prod(a, b) * p00 == prod(0, a) * prod(0, b);
        if (!ok) continue;
        std::optional<ThetaNull> null;
        try {
            null.emplace(2, AffThetaPoint(2, {p00, prod(0, 1), prod(0, 2), prod(0, 3)}));
            auto got = rosenhain_from_null(*null);
            if (!(got[0] == ros[0] && got[1] == ros[1] && got[2] == ros[2])) continue;
        } catch (const DecomposableError&) {
            continue;
        } catch (const DegenerateError&) {
            continue;
        }
        auto fit = fit_cmat(E, 4, node_table(C, E, roots_e, *null));
        if (!fit) continue;
        return {C, E, std::move(null), roots_e, fit->first, fit->second};
    }
    throw std::runtime_error("thomae_null: no consistent sign system");
}

ThetaCurveData thomae_null_g1(const HyperellipticCurve& C, std::mt19937_64& rng) {
    const FieldRef& F = C.ctx();
    size_t d = splitting_degree(C.f);
    FieldRef E1 = d > 1 ? FieldCtx::extend(F, d, rng) : F;
    std::vector<FieldElem> roots = lift_poly(E1, as_poly(F, C.f)).roots(rng);
    if (roots.size() != 3) throw std::runtime_error("thomae_null: expected three finite roots");
    FieldElem l = (roots[2] - roots[0]) / (roots[1] - roots[0]);
    // U(1,0)^2 = 1/lam, U(0,1)^2 = (lam-1)/lam
    FieldElem r10 = E1->inv(l), r01 = (l - E1->one()) / l;
    bool all_square = has_nth_root(r10, 2) && has_nth_root(r01, 2);
    FieldRef E = all_square ? E1 : FieldCtx::extend(E1, 2, rng);
    FieldElem u10 = nth_root(lift_into(E, r10), 2, rng);
    FieldElem u01 = nth_root(lift_into(E, r01), 2, rng);
    FieldElem le = lift_into(E, l);
    std::vector<FieldElem> roots_e;
    for (const auto& r : roots) roots_e.push_back(lift_into(E, r));

    for (uint32_t mask = 0; mask < 4; ++mask) {
        FieldElem U10 = (mask & 1) ? -u10 : u10;
        FieldElem U01 = (mask & 2) ? -u01 : u01;
        FieldElem n0 = E->one() + U10;  // ~ theta_0^2
        if (n0.is_zero() || U01.is_zero()) continue;
        std::optional<ThetaNull> null;
        try {
            null.emplace(1, AffThetaPoint(1, {n0, U01}));
        } catch (const DegenerateError&) {
            continue;
        }
        // forward check: the cross-ratio of the four nodes on the Kummer
        // line must reproduce lambda
        std::array<AffThetaPoint, 4> V;
        for (size_t i = 0; i < 4; ++i) V[i] = translate_node(*null, branch_label(1, i));
        auto pp = [&](const AffThetaPoint& P) { return ProjPair{P.c[0], P.c[1]}; };
        FieldElem dencr = bracket(pp(V[2]), pp(V[3])) * bracket(pp(V[1]), pp(V[0]));
        if (dencr.is_zero()) continue;
        FieldElem got = bracket(pp(V[2]), pp(V[0])) * bracket(pp(V[1]), pp(V[3])) / dencr;
        if (got != le) continue;
        auto fit = fit_cmat(E, 2, node_table(C, E, roots_e, *null));
        if (!fit) continue;
        return {C, E, std::move(null), roots_e, fit->first, fit->second};
    }
    throw std::runtime_error("thomae_null: no consistent sign system");
}

}  // namespace

ThetaCurveData thomae_null(const HyperellipticCurve& C, std::mt19937_64& rng) {
    if (!C.odd_model()) throw std::invalid_argument("thomae_null: odd degree model required");
    if (C.genus == 2) return thomae_null_g2(C, rng);
    if (C.genus == 1) return thomae_null_g1(C, rng);
    throw std::invalid_argument("thomae_null: genus 1 or 2 only");
}

// ---------------------------------------------------------------- bridges

ProjThetaPoint mumford_to_theta(const ThetaCurveData& tc, const MumfordDivisor& D) {
    const FieldRef& E = tc.ext;
    MumfordDivisor De;
    for (const auto& c : D.u) De.u.push_back(lift_into(E, c));
    for (const auto& c : D.v) De.v.push_back(lift_into(E, c));
    Poly fe = lift_poly(E, as_poly(tc.curve.ctx(), tc.curve.f));
    std::vector<FieldElem> xi = kummer_coords(fe, De);
    return {AffThetaPoint(tc.curve.genus, mat_apply(E, tc.dim(), tc.cmat, xi))};
}

MumfordDivisor theta_to_mumford(const ThetaCurveData& tc, const AffThetaPoint& P) {
    const FieldRef& E = tc.ext;
    std::mt19937_64 rng(0x7265636f76ULL);
    std::vector<FieldElem> pc;
    for (const auto& v : P.c) pc.push_back(lift_into(E, v));
    std::vector<FieldElem> xi = mat_apply(E, tc.dim(), tc.cmat_inv, pc);
    Poly fe = lift_poly(E, as_poly(tc.curve.ctx(), tc.curve.f));
    HyperellipticCurve Ce(tc.curve.genus, fe.coeffs());
    auto sqrt_or_throw = [&](const FieldElem& a) {
        if (!has_nth_root(a, 2))
            throw DegenerateError("theta_to_mumford: divisor is not rational over the null field");
        return a.is_zero() ? E->zero() : nth_root(a, 2, rng);
    };
    auto finish = [&](MumfordDivisor D) {
        if (!divisor_valid(Ce, D))
            throw DegenerateError("theta_to_mumford: recovered data is not a divisor");
        return D;
    };
    if (tc.curve.genus == 1) {
        if (xi[0].is_zero()) return divisor_zero(Ce);
        FieldElem x = xi[1] / xi[0];
        return finish({{-x, E->one()}, {sqrt_or_throw(Ce.eval(x))}});
    }
    if (xi[0].is_zero()) {
        if (xi[1].is_zero()) {
            if (!xi[2].is_zero() || xi[3].is_zero())
                throw DegenerateError("theta_to_mumford: point not on the embedded Kummer");
            return divisor_zero(Ce);
        }
        FieldElem x = xi[2] / xi[1];
        return finish({{-x, E->one()}, {sqrt_or_throw(Ce.eval(x))}});
    }
    FieldElem s = xi[1] / xi[0], p = xi[2] / xi[0], b0 = xi[3] / xi[0];
    FieldElem two = E->from_int(2), four = E->from_int(4);
    FieldElem f0 = fe.coeff(0), f1 = fe.coeff(1), f2 = fe.coeff(2), f3 = fe.coeff(3),
              f4 = fe.coeff(4), f5 = fe.coeff(5);
    FieldElem F0 = two * f0 + f1 * s + two * f2 * p + f3 * s * p +
                   two * f4 * p * p + f5 * s * p * p;
    FieldElem dd = s * s - four * p;
    Poly u(E, {p, -s, E->one()});
    if (dd.is_zero()) {
        // doubled support point
        FieldElem x = s / two;
        FieldElem y = sqrt_or_throw(Ce.eval(x));
        if (y.is_zero()) throw DegenerateError("theta_to_mumford: non-reduced divisor");
        FieldElem v1 = fe.derivative().eval(x) / (two * y);
        return finish({u.coeffs(), {y - x * v1, v1}});
    }
    FieldElem yy = (F0 - b0 * dd) / two;  // y1 * y2
    Poly r = fe.rem(u);
    FieldElem r0 = r.coeff(0), r1 = r.coeff(1);
    FieldElem v1sq = (two * (yy - r0) - s * r1) / (four * p - s * s);
    FieldElem v1 = sqrt_or_throw(v1sq);
    if (!v1.is_zero()) return finish({u.coeffs(), {(r1 - s * v1 * v1) / (two * v1), v1}});
    return finish({u.coeffs(), {sqrt_or_throw(r0)}});
}

// ---------------------------------------------------------------- genus 1

FieldElem j_invariant(const HyperellipticCurve& E) {
    if (E.genus != 1 || !E.odd_model())
        throw std::invalid_argument("j_invariant: odd-model genus-1 curve required");
    const FieldRef& F = E.ctx();
    if (F->p() == 3) throw std::invalid_argument("j_invariant: characteristic 3 unsupported");
    // monic normalization x -> x / f3 twists y, which j ignores
    FieldElem f3 = E.f[3];
    FieldElem a = E.f[2], b = E.f[1] * f3, c = E.f[0] * f3 * f3;
    FieldElem three = F->from_int(3);
    FieldElem A = b - a * a / three;
    FieldElem B = c - a * b / three + F->from_int(2) * a * a * a / F->from_int(27);
    FieldElem A3 = F->from_int(4) * A * A * A;
    return F->from_int(1728) * A3 / (A3 + F->from_int(27) * B * B);
}

namespace {
FieldElem div_x(const MumfordDivisor& D) { return -D.u[0]; }
FieldElem div_y(const FieldRef& F, const MumfordDivisor& D) {
    return D.v.empty() ? F->zero() : D.v[0];
}
}  // namespace

VeluIsogeny velu_isogeny(const HyperellipticCurve& E, const MumfordDivisor& P,
                         uint64_t ell) {
    const FieldRef& F = E.ctx();
    if (E.genus != 1 || !E.odd_model() || !E.f.back().is_one())
        throw std::invalid_argument("velu_isogeny: monic odd-model genus-1 curve required");
    if (P.is_zero() || !divisor_valid(E, P))
        throw std::invalid_argument("velu_isogeny: bad kernel generator");
    VeluIsogeny iso{E, {}};
    MumfordDivisor Q = P;
    for (uint64_t k = 1; k < ell; ++k) {
        if (Q.is_zero())
            throw std::invalid_argument("velu_isogeny: generator order is not " +
                                        std::to_string(ell));
        iso.kernel.push_back(Q);
        Q = cantor_add(E, Q, P);
    }
    if (!Q.is_zero())
        throw std::invalid_argument("velu_isogeny: generator order is not " +
                                    std::to_string(ell));
    // evaluate on sample points and fit the monic image cubic through them
    std::mt19937_64 srng(0x76656c75ULL);
    std::vector<std::pair<FieldElem, FieldElem>> pts;
    for (const auto& x : all_elements(F)) {
        if (pts.size() >= 6) break;
        FieldElem fx = E.eval(x);
        if (quad_char(F, fx) <= 0) continue;
        FieldElem y = nth_root(fx, 2, srng);
        MumfordDivisor Pt{{-x, F->one()}, {y}};
        bool in_kernel = false;
        for (const auto& K : iso.kernel) in_kernel = in_kernel || K.u == Pt.u;
        if (in_kernel) continue;
        FieldElem X = x, Y = y;
        for (const auto& K : iso.kernel) {
            MumfordDivisor S = cantor_add(E, Pt, K);
            X += div_x(S) - div_x(K);
            Y += div_y(F, S) - div_y(F, K);
        }
        bool dup = false;
        for (const auto& [px, py] : pts) dup = dup || px == X;
        if (!dup) pts.push_back({X, Y});
    }
    if (pts.size() < 4) throw std::runtime_error("velu_isogeny: field too small to fit image");
    Mat rows;
    for (const auto& [X, Y] : pts)
        rows.push_back({F->one(), X, X * X, Y * Y - X * X * X});
    auto ker = gauss_kernel(F, std::move(rows), 4);
    if (ker.size() != 1 || ker[0][3].is_zero())
        throw std::runtime_error("velu_isogeny: image points are not on a cubic");
    FieldElem t = -F->inv(ker[0][3]);
    iso.image = HyperellipticCurve(
        1, {ker[0][0] * t, ker[0][1] * t, ker[0][2] * t, F->one()});
    return iso;
}

// ------------------------------------------------ curve data from a null

ThetaCurveData curve_data_from_null(unsigned g, const AffThetaPoint& null_point) {
    if (g != 1 && g != 2) throw std::invalid_argument("curve_data_from_null: genus 1 or 2 only");
    const FieldRef& E = null_point.ctx();
    ThetaNull null(g, null_point);
    std::vector<FieldElem> roots;
    Poly f = Poly::x(E);
    if (g == 2) {
        auto lam = rosenhain_from_null(null);
        roots = {E->zero(), E->one(), lam[0], lam[1], lam[2]};
        for (size_t i = 1; i < 5; ++i) f = f * Poly(E, {-roots[i], E->one()});
    } else {
        check_jacobian_null(null);
        // cross-ratio of the four branch nodes on the Kummer line, in the
        // slot order 0, 1, lambda, infinity
        std::array<AffThetaPoint, 4> V;
        for (size_t i = 0; i < 4; ++i) V[i] = translate_node(null, branch_label(1, i));
        auto pp = [&](const AffThetaPoint& P) { return ProjPair{P.c[0], P.c[1]}; };
        FieldElem den = bracket(pp(V[2]), pp(V[3])) * bracket(pp(V[1]), pp(V[0]));
        if (den.is_zero()) throw DegenerateError("curve_data_from_null: branch collision");
        FieldElem l = bracket(pp(V[2]), pp(V[0])) * bracket(pp(V[1]), pp(V[3])) / den;
        if (l.is_zero() || l.is_one())
            throw DegenerateError("curve_data_from_null: degenerate cross-ratio");
        roots = {E->zero(), E->one(), l};
        f = f * Poly(E, {-E->one(), E->one()}) * Poly(E, {-l, E->one()});
    }
    HyperellipticCurve C(g, f.coeffs());
    auto fit = fit_cmat(E, size_t{1} << g, node_table(C, E, roots, null));
    if (!fit) throw DegenerateError("curve_data_from_null: Kummer identification failed");
    return {std::move(C), E, std::move(null), std::move(roots), fit->first, fit->second};
}

ThetaCurveData extend_curve_data(const ThetaCurveData& tc, const FieldRef& finer) {
    auto lift_vec = [&](const std::vector<FieldElem>& v) {
        std::vector<FieldElem> out;
        out.reserve(v.size());
        for (const auto& x : v) out.push_back(lift_into(finer, x));
        return out;
    };
    ThetaCurveData out{tc.curve, finer, std::nullopt, lift_vec(tc.roots),
                       lift_vec(tc.cmat), lift_vec(tc.cmat_inv)};
    out.null.emplace(tc.curve.genus,
                     AffThetaPoint(tc.curve.genus, lift_vec(tc.null->point().c)));
    return out;
}

// ------------------------------------------------------------ Galois descent

namespace {

/// 2x2 matrix over E as a flat array (a b; c d) acting on column vectors.
using Mobius = std::array<FieldElem, 4>;

std::array<FieldElem, 2> mob_apply(const Mobius& m, const std::array<FieldElem, 2>& p) {
    return {m[0] * p[0] + m[1] * p[1], m[2] * p[0] + m[3] * p[1]};
}

Mobius mob_mul(const FieldRef& E, const Mobius& a, const Mobius& b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

bool proj_pt_equal(const std::array<FieldElem, 2>& a, const std::array<FieldElem, 2>& b) {
    return (a[0] * b[1] - a[1] * b[0]).is_zero() &&
           !(a[0].is_zero() && a[1].is_zero()) && !(b[0].is_zero() && b[1].is_zero());
}

/// The matrix sending p1, p2, p3 to (1:0), (0:1), (1:1) respectively.
std::optional<Mobius> mob_to_standard(const FieldRef& E,
                                      const std::array<std::array<FieldElem, 2>, 3>& p) {
    // rows of the inverse construction: m = diag-scaled bracket matrix
    auto br = [&](size_t i, size_t j) {
        return p[i][0] * p[j][1] - p[j][0] * p[i][1];
    };
    FieldElem b23 = br(1, 2), b13 = br(0, 2), b12 = br(0, 1);
    if (b23.is_zero() || b13.is_zero() || b12.is_zero()) return std::nullopt;
    // x -> (b13 * |x p2| : b23 * |x p1|) sends p1 -> (1:0), p2 -> (0:1), p3 -> (1:1)
    return Mobius{b13 * p[1][1], -b13 * p[1][0], b23 * p[0][1], -b23 * p[0][0]};
}

}  // namespace

std::optional<HyperellipticCurve> descend_to_prime_field(const HyperellipticCurve& C,
                                                         std::mt19937_64& rng) {
    const FieldRef& E = C.ctx();
    FieldRef base = E;
    while (base->base()) base = base->base();
    size_t m = E->degree();
    if (m == 1) return C;
    // branch points in P^1(E)
    std::vector<FieldElem> roots = lift_poly(E, as_poly(E, C.f)).roots(rng);
    if (roots.size() != C.degree()) return std::nullopt;
    std::vector<std::array<FieldElem, 2>> W;
    for (const auto& r : roots) W.push_back({r, E->one()});
    if (C.odd_model()) W.push_back({E->one(), E->zero()});
    auto sigma_pt = [&](const std::array<FieldElem, 2>& p) {
        return std::array<FieldElem, 2>{E->frobenius(p[0]), E->frobenius(p[1])};
    };
    auto sigma_mat = [&](const Mobius& mu) {
        return Mobius{E->frobenius(mu[0]), E->frobenius(mu[1]), E->frobenius(mu[2]),
                      E->frobenius(mu[3])};
    };
    std::vector<std::array<FieldElem, 2>> sW;
    for (const auto& p : W) sW.push_back(sigma_pt(p));
    auto in_set = [&](const std::array<FieldElem, 2>& p,
                      const std::vector<std::array<FieldElem, 2>>& S) {
        for (const auto& q : S)
            if (proj_pt_equal(p, q)) return true;
        return false;
    };
    auto from_std = mob_to_standard(E, {sW[0], sW[1], sW[2]});
    if (!from_std) return std::nullopt;
    size_t n = W.size();
    // search a cocycle mu with mu(sigma(W)) = W
    for (size_t a = 0; a < n; ++a)
        for (size_t b = 0; b < n; ++b)
            for (size_t c = 0; c < n; ++c) {
                if (a == b || a == c || b == c) continue;
                auto to_std = mob_to_standard(E, {W[a], W[b], W[c]});
                if (!to_std) continue;
                // mu = to_std^{-1} * from_std sends sW[0..2] to W[a], W[b], W[c]
                Mobius inv{(*to_std)[3], -(*to_std)[1], -(*to_std)[2], (*to_std)[0]};
                Mobius mu = mob_mul(E, inv, *from_std);
                bool ok = true;
                for (const auto& p : sW) ok = ok && in_set(mob_apply(mu, p), W);
                if (!ok) continue;
                // cocycle condition: mu * sigma(mu) * ... over the full tower
                // degree must be a scalar matrix
                Mobius nu = mu, smu = mu;
                for (size_t k = 1; k < m; ++k) {
                    smu = sigma_mat(smu);
                    nu = mob_mul(E, nu, smu);
                }
                if (!nu[1].is_zero() || !nu[2].is_zero() || nu[0] != nu[3] ||
                    nu[0].is_zero())
                    continue;
                // rescale mu by delta with Norm(delta) = nu[0] so the
                // twisted operator rho -> mu^{-1} sigma(rho) has fixed points
                FieldElem target = to_subfield(base, nu[0]);
                FieldElem delta = E->zero();
                bool found_delta = false;
                for (int tries = 0; tries < 4000 && !found_delta; ++tries) {
                    FieldElem d = E->random(rng);
                    if (d.is_zero()) continue;
                    FieldElem nrm = d, pw = d;
                    for (size_t k = 1; k < m; ++k) {
                        pw = E->frobenius(pw);
                        nrm *= pw;
                    }
                    if (nrm == lift_into(E, target)) {
                        delta = d;
                        found_delta = true;
                    }
                }
                if (!found_delta) continue;
                Mobius mun{mu[0] / delta, mu[1] / delta, mu[2] / delta, mu[3] / delta};
                // solve rho = mun * rho^sigma as a linear system over the
                // prime field: unknowns are the 4m base coefficients of rho
                FieldElem det = mun[0] * mun[3] - mun[1] * mun[2];
                if (det.is_zero()) continue;
                size_t dim = 4 * m;
                uint64_t p = E->p();
                // columns: operator L(rho) = mun^{-1} * rho^sigma minus identity
                std::vector<std::vector<uint64_t>> cols(dim);
                auto pack = [&](const Mobius& r) {
                    std::vector<uint64_t> v;
                    v.reserve(dim);
                    for (size_t e = 0; e < 4; ++e)
                        for (size_t k = 0; k < m; ++k) v.push_back(r[e].coeffs()[k]);
                    return v;
                };
                for (size_t j = 0; j < dim; ++j) {
                    std::vector<uint64_t> unit(m, 0);
                    unit[j % m] = 1;
                    Mobius rho{E->zero(), E->zero(), E->zero(), E->zero()};
                    rho[j / m] = E->elem(unit);
                    Mobius img = mob_mul(E, mun,
                                         {E->frobenius(rho[0]), E->frobenius(rho[1]),
                                          E->frobenius(rho[2]), E->frobenius(rho[3])});
                    cols[j] = pack(img);
                    cols[j][j] = (cols[j][j] + p - 1) % p;
                }
                // kernel of (L - I) over F_p by Gaussian elimination
                std::vector<std::vector<uint64_t>> rowsm(dim, std::vector<uint64_t>(dim));
                for (size_t i = 0; i < dim; ++i)
                    for (size_t j = 0; j < dim; ++j) rowsm[i][j] = cols[j][i];
                std::vector<size_t> pivot_col;
                size_t rank = 0;
                std::vector<int> is_pivot(dim, 0);
                for (size_t col = 0; col < dim && rank < dim; ++col) {
                    size_t sel = rank;
                    while (sel < dim && rowsm[sel][col] == 0) ++sel;
                    if (sel == dim) continue;
                    std::swap(rowsm[sel], rowsm[rank]);
                    uint64_t inv_val = 1, bmod = rowsm[rank][col], e = p - 2;
                    while (e) {
                        if (e & 1) inv_val = inv_val * bmod % p;
                        bmod = bmod * bmod % p;
                        e >>= 1;
                    }
                    for (size_t j = 0; j < dim; ++j)
                        rowsm[rank][j] = rowsm[rank][j] * inv_val % p;
                    for (size_t i = 0; i < dim; ++i) {
                        if (i == rank || rowsm[i][col] == 0) continue;
                        uint64_t f = rowsm[i][col];
                        for (size_t j = 0; j < dim; ++j)
                            rowsm[i][j] = (rowsm[i][j] + (p - f) * rowsm[rank][j]) % p;
                    }
                    pivot_col.push_back(col);
                    is_pivot[col] = 1;
                    ++rank;
                }
                std::vector<Mobius> basis;
                for (size_t col = 0; col < dim; ++col) {
                    if (is_pivot[col]) continue;
                    std::vector<uint64_t> v(dim, 0);
                    v[col] = 1;
                    for (size_t r = 0; r < rank; ++r)
                        v[pivot_col[r]] = (p - rowsm[r][col] % p) % p;
                    Mobius rho;
                    for (size_t e = 0; e < 4; ++e)
                        rho[e] = E->elem(std::vector<uint64_t>(v.begin() + e * m,
                                                               v.begin() + (e + 1) * m));
                    basis.push_back(rho);
                }
                if (basis.empty()) continue;
                // pick an invertible element of the fixed space
                for (int tries = 0; tries < 200; ++tries) {
                    Mobius rho{E->zero(), E->zero(), E->zero(), E->zero()};
                    for (const auto& bvec : basis) {
                        uint64_t cmul = rng() % p;
                        for (size_t e = 0; e < 4; ++e)
                            rho[e] += bvec[e] * E->from_int(static_cast<int64_t>(cmul));
                    }
                    FieldElem rdet = rho[0] * rho[3] - rho[1] * rho[2];
                    if (rdet.is_zero()) continue;
                    Mobius rinv{rho[3] / rdet, -rho[1] / rdet, -rho[2] / rdet,
                                rho[0] / rdet};
                    // descended branch set rho^{-1}(W)
                    std::vector<std::array<FieldElem, 2>> Wd;
                    for (const auto& pt : W) Wd.push_back(mob_apply(rinv, pt));
                    // prefer an odd model: if no branch point sits at infinity
                    // but a rational one exists, move it there by x -> 1/(x-r)
                    bool has_inf = false;
                    for (const auto& q : Wd) has_inf = has_inf || q[1].is_zero();
                    if (!has_inf) {
                        for (const auto& q : Wd) {
                            try {
                                FieldElem r = lift_into(E, to_subfield(base, q[0] / q[1]));
                                for (auto& w : Wd) w = {w[1], w[0] - r * w[1]};
                                break;
                            } catch (const std::invalid_argument&) {
                            }
                        }
                    }
                    Poly fd = Poly::constant(E->one());
                    size_t n_inf = 0;
                    for (const auto& q : Wd) {
                        if (q[1].is_zero())
                            ++n_inf;
                        else
                            fd = fd * Poly(E, {-q[0], q[1]});
                    }
                    if (n_inf > 1) break;  // branch collision at infinity
                    Poly fm = fd.monic();
                    std::vector<FieldElem> cf;
                    bool rational = true;
                    for (const auto& cc : fm.coeffs()) {
                        try {
                            cf.push_back(to_subfield(base, cc));
                        } catch (const std::invalid_argument&) {
                            rational = false;
                            break;
                        }
                    }
                    if (!rational) continue;
                    try {
                        return HyperellipticCurve(C.genus, cf);
                    } catch (const std::invalid_argument&) {
                        continue;
                    }
                }
            }
    return std::nullopt;
}

MumfordDivisor velu_map(const VeluIsogeny& iso, const HyperellipticCurve& E,
                        const MumfordDivisor& Q) {
    const FieldRef& F = E.ctx();
    if (Q.is_zero()) return divisor_zero(iso.image);
    for (const auto& K : iso.kernel)
        if (K == Q) return divisor_zero(iso.image);
    FieldElem X = div_x(Q), Y = div_y(F, Q);
    for (const auto& K : iso.kernel) {
        MumfordDivisor S = cantor_add(E, Q, K);
        if (S.is_zero()) return divisor_zero(iso.image);
        X += div_x(S) - div_x(K);
        Y += div_y(F, S) - div_y(F, K);
    }
    MumfordDivisor img{{-X, F->one()}, {Y}};
    if (!divisor_valid(iso.image, img))
        throw std::runtime_error("velu_map: image point off the image curve");
    return img;
}

}  // namespace cyciso