#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "cyciso/genus2.hpp"
#include "cyciso/poly.hpp"

using namespace cyciso;

namespace {

HyperellipticCurve curve(const FieldRef& F, unsigned g, std::vector<int64_t> c) {
    std::vector<FieldElem> v;
    for (int64_t x : c) v.push_back(F->from_int(x));
    return HyperellipticCurve(g, v);
}

/// y^2 = x^5 + x^4 + 3x^3 + 22x^2 + 19x over F_23.
HyperellipticCurve sample_quintic(const FieldRef& F) {
    return curve(F, 2, {0, 19, 22, 3, 1, 1});
}

std::vector<mpz_class> zpoly(std::vector<int64_t> c) {
    return std::vector<mpz_class>(c.begin(), c.end());
}

/// Random squarefree odd-model curve of the given genus.
HyperellipticCurve random_curve(const FieldRef& F, unsigned g, std::mt19937_64& rng) {
    for (;;) {
        std::vector<FieldElem> c;
        for (unsigned i = 0; i < 2 * g + 1; ++i) c.push_back(F->random(rng));
        c.push_back(F->one());
        try {
            return HyperellipticCurve(g, c);
        } catch (const std::invalid_argument&) {
        }
    }
}

}  // namespace

TEST_CASE("curve construction validates the model") {
    auto F = FieldCtx::prime(23);
    CHECK_NOTHROW(sample_quintic(F));
    // x^2*(x^3+1) has a double root
    CHECK_THROWS_AS(curve(F, 2, {0, 0, 1, 0, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(curve(F, 2, {1, 1, 1, 1}), std::invalid_argument);  // wrong degree
    CHECK(sample_quintic(F).odd_model());
    CHECK_FALSE(curve(F, 2, {0, 20, 0, 8, 18, 18, 5}).odd_model());
}

TEST_CASE("Jacobian group law on Mumford divisors") {
    std::mt19937_64 rng(77);
    auto F = FieldCtx::prime(23);
    for (const auto& C : {sample_quintic(F), random_curve(F, 2, rng),
                          random_curve(F, 1, rng)}) {
        MumfordDivisor z = divisor_zero(C);
        CHECK(divisor_valid(C, z));
        for (int it = 0; it < 20; ++it) {
            MumfordDivisor a = random_divisor(C, rng);
            MumfordDivisor b = random_divisor(C, rng);
            MumfordDivisor c = random_divisor(C, rng);
            CHECK(divisor_valid(C, a));
            CHECK(cantor_add(C, a, z) == a);
            CHECK(cantor_add(C, a, b) == cantor_add(C, b, a));
            CHECK(cantor_add(C, cantor_add(C, a, b), c) ==
                  cantor_add(C, a, cantor_add(C, b, c)));
            CHECK(cantor_add(C, a, cantor_neg(C, a)).is_zero());
            CHECK(cantor_mul(C, 5, a) ==
                  cantor_add(C, cantor_mul(C, 2, a), cantor_mul(C, 3, a)));
            CHECK(cantor_mul(C, -3, a) == cantor_neg(C, cantor_mul(C, 3, a)));
        }
    }
}

TEST_CASE("Frobenius acts as an endomorphism and satisfies its charpoly") {
    std::mt19937_64 rng(5);
    auto F0 = FieldCtx::prime(23);
    auto F = FieldCtx::extend(F0, 2, rng);
    auto C = curve(F, 2, {0, 19, 22, 3, 1, 1});
    auto chi = frobenius_charpoly(curve(F0, 2, {0, 19, 22, 3, 1, 1}));
    for (int it = 0; it < 6; ++it) {
        MumfordDivisor a = random_divisor(C, rng);
        MumfordDivisor b = random_divisor(C, rng);
        CHECK(divisor_frobenius(C, cantor_add(C, a, b)) ==
              cantor_add(C, divisor_frobenius(C, a), divisor_frobenius(C, b)));
        // sum chi_i * pi^i(a) = 0
        MumfordDivisor acc = divisor_zero(C);
        MumfordDivisor pw = a;
        for (size_t i = 0; i < chi.size(); ++i) {
            acc = cantor_add(C, acc, cantor_mul(C, chi[i], pw));
            pw = divisor_frobenius(C, pw);
        }
        CHECK(acc.is_zero());
    }
}

TEST_CASE("point counts match independent enumeration") {
    auto F = FieldCtx::prime(23);
    // both sides of the worked example have chi(z) = z^4 + 14 z^2 + 529
    CHECK(frobenius_charpoly(sample_quintic(F)) == zpoly({529, 0, 14, 0, 1}));
    CHECK(frobenius_charpoly(curve(F, 2, {0, 20, 0, 8, 18, 18, 5})) ==
          zpoly({529, 0, 14, 0, 1}));
    // y^2 = x^3 + 2x + 3 over F_101 has 96 points
    auto F1 = FieldCtx::prime(101);
    CHECK(frobenius_charpoly(curve(F1, 1, {3, 2, 0, 1})) == zpoly({101, -6, 1}));
}

TEST_CASE("group order annihilates the Jacobian") {
    std::mt19937_64 rng(11);
    auto F = FieldCtx::prime(23);
    auto C = sample_quintic(F);
    auto chi = frobenius_charpoly(C);
    mpz_class order = 0;  // chi(1) = #J(F_q)
    for (size_t i = 0; i < chi.size(); ++i) order += chi[i];
    for (int it = 0; it < 10; ++it)
        CHECK(cantor_mul(C, order, random_divisor(C, rng)).is_zero());
    // the worked example has a rational 17-torsion point
    CHECK(order % 17 == 0);
}

TEST_CASE("roots and splitting degrees") {
    std::mt19937_64 rng(3);
    auto F = FieldCtx::prime(23);
    // (x-2)(x-7)(x^2+1), with x^2+1 irreducible mod 23
    Poly f = Poly(F, {F->from_int(-2), F->one()}) *
             Poly(F, {F->from_int(-7), F->one()}) *
             Poly(F, {F->one(), F->zero(), F->one()});
    auto r = poly_roots(f.coeffs(), rng);
    REQUIRE(r.size() == 2);
    CHECK(((r[0] == F->from_int(2) && r[1] == F->from_int(7)) ||
           (r[0] == F->from_int(7) && r[1] == F->from_int(2))));
    CHECK(splitting_degree(f.coeffs()) == 2);
    CHECK(splitting_degree(Poly(F, {F->from_int(-2), F->one()}).coeffs()) == 1);
}

TEST_CASE("isomorphism invariants separate and identify curves") {
    std::mt19937_64 rng(9);
    auto F = FieldCtx::prime(23);
    auto C = sample_quintic(F);
    auto H2 = curve(F, 2, {0, 20, 0, 8, 18, 18, 5});
    CHECK(same_iso_class(C, C, rng));
    // isogenous but not isomorphic
    CHECK_FALSE(same_iso_class(C, H2, rng));

    // invariance under x -> x + c, quadratic twist, and x -> 1/x
    Poly f(F, C.f);
    Poly shifted(F);
    {
        Poly xc(F, {F->from_int(4), F->one()});
        for (int i = f.degree(); i >= 0; --i)
            shifted = shifted * xc + Poly::constant(f.coeff(i));
    }
    CHECK(same_iso_class(C, HyperellipticCurve(2, shifted.coeffs()), rng));
    CHECK(same_iso_class(C, HyperellipticCurve(2, shifted.scaled(F->from_int(5)).coeffs()),
                         rng));
    std::vector<FieldElem> rev(7, F->zero());
    for (int i = 0; i <= shifted.degree(); ++i) rev[6 - i] = shifted.coeff(i);
    CHECK(same_iso_class(C, HyperellipticCurve(2, rev), rng));

    // cross-field comparison against the base-changed curve
    auto F4 = FieldCtx::extend(FieldCtx::extend(F, 2, rng), 2, rng);
    auto C4 = curve(F4, 2, {0, 19, 22, 3, 1, 1});
    CHECK(same_iso_class(C, C4, rng));
    CHECK_FALSE(same_iso_class(H2, C4, rng));

    // random Moebius substitution x -> (ax+b)/(cx+d) on a sextic model
    for (int it = 0; it < 5; ++it) {
        FieldElem a = F->random(rng), b = F->random(rng);
        FieldElem c = F->random(rng), dd = F->random(rng);
        if ((a * dd - b * c).is_zero()) continue;
        Poly num(F, {b, a}), den(F, {dd, c});
        Poly g(F), npow = Poly::constant(F->one());
        std::vector<Poly> dpow{Poly::constant(F->one())};
        for (int i = 0; i < 6; ++i) dpow.push_back(dpow.back() * den);
        Poly acc(F);
        for (int i = 0; i <= 6; ++i) {
            Poly t = Poly::constant(i <= shifted.degree() ? shifted.coeff(i) : F->zero());
            acc = acc + t * npow * dpow[6 - i];
            npow = npow * num;
        }
        if (acc.degree() < 5) continue;
        try {
            CHECK(same_iso_class(C, HyperellipticCurve(2, acc.coeffs()), rng));
        } catch (const std::invalid_argument&) {
            // substitution collapsed two branch points; skip
        }
    }
}

TEST_CASE("theta null round trip preserves the isomorphism class") {
    std::mt19937_64 rng(21);
    for (uint64_t p : {11, 23, 31}) {
        auto F = FieldCtx::prime(p);
        for (int it = 0; it < 3; ++it) {
            auto C = random_curve(F, 2, rng);
            ThetaCurveData tc = thomae_null(C, rng);
            REQUIRE(tc.null.has_value());
            HyperellipticCurve R = theta_to_curve(*tc.null);
            CHECK(same_iso_class(C, R, rng));
        }
    }
}

TEST_CASE("divisor arithmetic commutes with the theta embedding") {
    std::mt19937_64 rng(1234);
    auto F = FieldCtx::prime(23);
    auto C0 = sample_quintic(F);
    ThetaCurveData tc = thomae_null(C0, rng);
    // work on the curve over the null field
    std::vector<FieldElem> fe;
    for (const auto& c : C0.f) fe.push_back(tc.ext->from_base(c));
    // tc.ext may be a taller tower; rebuild through the curve's own lift
    auto Ce = [&] {
        auto P = mumford_to_theta(tc, divisor_zero(C0));  // force field checks
        (void)P;
        std::vector<FieldElem> cf;
        for (const auto& c : C0.f) {
            FieldElem x = c;
            FieldRef cur = tc.ext;
            std::vector<FieldRef> chain;
            while (cur.get() != F.get()) {
                chain.push_back(cur);
                cur = cur->base();
            }
            for (auto it = chain.rbegin(); it != chain.rend(); ++it)
                x = (*it)->from_base(x);
            cf.push_back(x);
        }
        return HyperellipticCurve(2, cf);
    }();
    const ThetaNull& null = *tc.null;
    for (int it = 0; it < 8; ++it) {
        MumfordDivisor D = random_divisor(Ce, rng);
        AffThetaPoint tD = mumford_to_theta(tc, D).rep;
        // scalar multiples through the Riemann relations
        for (uint64_t mlt : {2, 3, 5}) {
            AffThetaPoint lhs;
            try {
                lhs = chainmult(mlt, tD, null);
            } catch (const DegenerateError&) {
                continue;
            }
            CHECK(proj_equal(lhs, mumford_to_theta(tc, cantor_mul(Ce, mlt, D)).rep));
        }
        // normal addition recovers {D+E, D-E}
        MumfordDivisor Dn = random_divisor(Ce, rng);
        AffThetaPoint tE = mumford_to_theta(tc, Dn).rep;
        auto [s1, s2] = normal_add_pair(tD, tE, null, rng);
        AffThetaPoint plus = mumford_to_theta(tc, cantor_add(Ce, D, Dn)).rep;
        AffThetaPoint minus =
            mumford_to_theta(tc, cantor_add(Ce, D, cantor_neg(Ce, Dn))).rep;
        bool match = (proj_equal(s1.rep, plus) && proj_equal(s2.rep, minus)) ||
                     (proj_equal(s1.rep, minus) && proj_equal(s2.rep, plus));
        CHECK(match);
    }
}

TEST_CASE("theta points can be pulled back to divisors") {
    std::mt19937_64 rng(42);
    auto F = FieldCtx::prime(23);
    auto C0 = sample_quintic(F);
    ThetaCurveData tc = thomae_null(C0, rng);
    std::vector<FieldElem> cf;
    for (const auto& c : C0.f) {
        FieldElem x = c;
        std::vector<FieldRef> chain;
        for (FieldRef cur = tc.ext; cur.get() != F.get(); cur = cur->base())
            chain.push_back(cur);
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) x = (*it)->from_base(x);
        cf.push_back(x);
    }
    HyperellipticCurve Ce(2, cf);
    int recovered = 0;
    for (int it = 0; it < 12; ++it) {
        MumfordDivisor D = random_divisor(Ce, rng);
        AffThetaPoint tD = mumford_to_theta(tc, D).rep;
        try {
            MumfordDivisor back = theta_to_mumford(tc, tD);
            CHECK((back == D || back == cantor_neg(Ce, D)));
            ++recovered;
        } catch (const DegenerateError&) {
        }
    }
    CHECK(recovered >= 10);
    // the null itself is the zero divisor
    CHECK(theta_to_mumford(tc, tc.null->point()).is_zero());
}

TEST_CASE("product nulls are rejected") {
    std::mt19937_64 rng(8);
    auto F = FieldCtx::prime(23);
    // null of E1 x E2 built from two genus-1 nulls: theta_(i1 i2) = a_i1 * b_i2
    auto E1 = thomae_null(random_curve(F, 1, rng), rng);
    auto E2 = thomae_null(random_curve(F, 1, rng), rng);
    const auto& a = E1.null->point();
    const auto& b = E2.null->point();
    // put both in one field if possible; with equal construction the fields
    // are independent, so just use matching base values when available
    if (a.ctx().get() == b.ctx().get()) {
        AffThetaPoint prod(2, {a.c[0] * b.c[0], a.c[1] * b.c[0],
                               a.c[0] * b.c[1], a.c[1] * b.c[1]});
        ThetaNull null(2, prod);
        CHECK_THROWS_AS(theta_to_curve(null), DecomposableError);
    }
}

TEST_CASE("genus-1 theta layer and j-invariants") {
    std::mt19937_64 rng(64);
    auto F = FieldCtx::prime(101);
    auto E = curve(F, 1, {3, 2, 0, 1});
    ThetaCurveData tc = thomae_null(E, rng);
    std::vector<FieldElem> cf;
    for (const auto& c : E.f) {
        FieldElem x = c;
        std::vector<FieldRef> chain;
        for (FieldRef cur = tc.ext; cur.get() != F.get(); cur = cur->base())
            chain.push_back(cur);
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) x = (*it)->from_base(x);
        cf.push_back(x);
    }
    HyperellipticCurve Ee(1, cf);
    for (int it = 0; it < 10; ++it) {
        MumfordDivisor D = random_divisor(Ee, rng);
        AffThetaPoint tD = mumford_to_theta(tc, D).rep;
        for (uint64_t mlt : {2, 3}) {
            AffThetaPoint lhs;
            try {
                lhs = chainmult(mlt, tD, *tc.null);
            } catch (const DegenerateError&) {
                continue;
            }
            CHECK(proj_equal(lhs, mumford_to_theta(tc, cantor_mul(Ee, mlt, D)).rep));
        }
        MumfordDivisor back = theta_to_mumford(tc, tD);
        CHECK((back == D || back == cantor_neg(Ee, D)));
    }
    // j is a Moebius/twist invariant
    CHECK(j_invariant(E) == j_invariant(curve(F, 1, {3 * 125, 2 * 25, 0, 1})));
}

TEST_CASE("direct-summation isogenies behave like isogenies") {
    std::mt19937_64 rng(31337);
    int done = 0;
    for (uint64_t p : {101, 103, 107}) {
        auto F = FieldCtx::prime(p);
        for (int it = 0; it < 12 && done < 6; ++it) {
            auto E = random_curve(F, 1, rng);
            auto chi = frobenius_charpoly(E);
            mpz_class N = chi[0] + chi[1] + chi[2];
            uint64_t ell = 0;
            for (uint64_t l : {3, 5, 7})
                if (N % l == 0) ell = l;
            if (!ell) continue;
            MumfordDivisor P = divisor_zero(E);
            for (int t = 0; t < 60 && P.is_zero(); ++t)
                P = cantor_mul(E, N / ell, random_divisor(E, rng));
            if (P.is_zero()) continue;
            VeluIsogeny iso = velu_isogeny(E, P, ell);
            ++done;
            // kernel dies, the map is additive, and counts are preserved
            CHECK(velu_map(iso, E, P).is_zero());
            CHECK(frobenius_charpoly(iso.image) == chi);
            for (int k = 0; k < 4; ++k) {
                MumfordDivisor A = random_divisor(E, rng);
                MumfordDivisor B = random_divisor(E, rng);
                CHECK(velu_map(iso, E, cantor_add(E, A, B)) ==
                      cantor_add(iso.image, velu_map(iso, E, A),
                                 velu_map(iso, E, B)));
            }
        }
    }
    CHECK(done >= 4);
}

TEST_CASE("curve data can be rebuilt from the null alone and extended") {
    std::mt19937_64 rng(777);
    auto F = FieldCtx::prime(131);
    for (unsigned g : {1u, 2u}) {
        std::optional<ThetaCurveData> tc0;
        for (int t = 0; t < 30 && !tc0; ++t) {
            try {
                tc0.emplace(thomae_null(random_curve(F, g, rng), rng));
            } catch (const std::exception&) {
            }
        }
        REQUIRE(tc0.has_value());
        ThetaCurveData& tc = *tc0;
        ThetaCurveData back = curve_data_from_null(g, tc.null->point());
        // same Jacobian: null agrees projectively, curve in the same class
        CHECK(proj_equal(back.null->point(), tc.null->point()));
        if (g == 2) CHECK(same_iso_class(back.curve, tc.curve, rng));
        // the fitted Kummer identification maps divisors consistently
        for (int it = 0; it < 5; ++it) {
            MumfordDivisor D = random_divisor(back.curve, rng);
            AffThetaPoint P = mumford_to_theta(back, D).rep;
            MumfordDivisor Db = theta_to_mumford(back, P);
            CHECK((Db == D || Db == cantor_neg(back.curve, D)));
        }
        // extension of scalars commutes with the bridge
        FieldRef finer = FieldCtx::extend(tc.ext, 2, rng);
        ThetaCurveData big = extend_curve_data(tc, finer);
        for (int it = 0; it < 5; ++it) {
            MumfordDivisor D = random_divisor(tc.curve, rng);
            AffThetaPoint small = mumford_to_theta(tc, D).rep;
            AffThetaPoint lifted(g, [&] {
                std::vector<FieldElem> v;
                for (const auto& c : small.c) v.push_back(lift_into(finer, c));
                return v;
            }());
            CHECK(proj_equal(mumford_to_theta(big, D).rep, lifted));
        }
    }
}

TEST_CASE("Galois descent recovers a prime-field model up to twist") {
    std::mt19937_64 rng(4242);
    auto F = FieldCtx::prime(67);
    for (unsigned g : {1u, 2u}) {
        int done = 0;
        for (int it = 0; it < 40 && done < 3; ++it) {
            auto C0 = random_curve(F, g, rng);
            // split the branch points over an extension and scramble the
            // model by a Moebius substitution defined only there
            FieldRef E = FieldCtx::extend(F, 4, rng);
            std::vector<FieldElem> cf;
            for (const auto& c : C0.f) cf.push_back(lift_into(E, c));
            Poly f(E, cf);
            auto rts = f.roots(rng);
            if (rts.size() != C0.degree()) continue;
            FieldElem a = E->random(rng), b = E->random(rng);
            if (a.is_zero()) continue;
            Poly fs = Poly::constant(E->one());
            for (const auto& r : rts)
                fs = fs * Poly(E, {-(a * r + b), E->one()});
            // x -> ax + b moved the roots; the scrambled curve is built
            // directly from the moved branch set
            HyperellipticCurve scrambled(g, fs.monic().coeffs());
            auto desc = descend_to_prime_field(scrambled, rng);
            REQUIRE(desc.has_value());
            if (g == 1)
                CHECK(j_invariant(*desc) == j_invariant(C0));
            else
                CHECK(same_iso_class(*desc, C0, rng));
            ++done;
        }
        CHECK(done >= 2);
    }
}
