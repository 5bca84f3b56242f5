#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "cyciso/rm.hpp"

using namespace cyciso;

namespace {
std::vector<mpz_class> quartic(int64_t c1, int64_t c2, uint64_t q) {
    // z^4 - c1 z^3 + c2 z^2 - q c1 z + q^2, ascending
    return {mpz_class(q) * q, -mpz_class(int64_t(q)) * c1, mpz_class(c2),
            mpz_class(-c1), 1};
}
}  // namespace

TEST_CASE("real order from the Frobenius polynomial") {
    // z^4 + 14 z^2 + 529, q = 23: omega^2 = 32, K0 = Q(sqrt(2)).
    RMData rm = real_order_from_charpoly(quartic(0, 14, 23), 23);
    CHECK(rm.g == 2);
    CHECK(rm.T == 0);
    CHECK(rm.Nm == -32);  // z^2 - 32
    CHECK(charpoly_irreducible(rm));

    // Genus-1 collapse: z^2 - t z + q.
    RMData e = real_order_from_charpoly({mpz_class(11), mpz_class(-4), 1}, 11);
    CHECK(e.g == 1);
    CHECK(e.c1 == 4);

    // Rejections: wrong functional equation and Weil violations.
    CHECK_THROWS_AS(real_order_from_charpoly(
                        {mpz_class(529), mpz_class(1), mpz_class(14),
                         mpz_class(0), mpz_class(1)},
                        23),
                    std::invalid_argument);
    CHECK_THROWS_AS(real_order_from_charpoly(quartic(0, 2000, 23), 23),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        real_order_from_charpoly({mpz_class(11), mpz_class(-100), 1}, 11),
        std::invalid_argument);
    // Reducible Weil quartic: (z^2 - z + 5)(z^2 + z + 5), q = 5:
    // z^4 + 9 z^2 + 25 with c1 = 0.
    RMData red = real_order_from_charpoly(quartic(0, 9, 5), 5);
    CHECK_FALSE(charpoly_irreducible(red));
}

TEST_CASE("find_beta: totally positive norm-l generator killing the kernel") {
    RMData rm = real_order_from_charpoly(quartic(0, 14, 23), 23);
    TotallyPositiveBeta b = find_beta(rm, 17, 6);
    CHECK(k0_norm(rm, b.beta) == 17);
    CHECK(is_totally_positive(rm, b.beta));
    // pi acts on t by 6, so omega acts by 6 + 23*6^{-1} = 7 mod 17 and beta
    // must act by 0.
    CHECK(k0_action_scalar(rm, b.beta, 6, 17) == 0);

    // The paper's choice beta = 215 - 38*omega passes the same checks.
    K0Elem paper{mpq_class(215), mpq_class(-38)};
    CHECK(k0_norm(rm, paper) == 17);
    CHECK(is_totally_positive(rm, paper));
    CHECK(k0_action_scalar(rm, paper, 6, 17) == 0);
    // 215^2 - 2*152^2 = 17 as written in Q(sqrt 2) coordinates.
    CHECK(mpz_class(215) * 215 - 2 * mpz_class(152) * 152 == 17);

    // Sign sanity for the positivity test.
    CHECK_FALSE(is_totally_positive(rm, K0Elem{mpq_class(-7), mpq_class(1)}));
    CHECK_FALSE(is_totally_positive(rm, K0Elem{mpq_class(0), mpq_class(0)}));

    // Genus 1: beta = l.
    RMData e = real_order_from_charpoly({mpz_class(11), mpz_class(-4), 1}, 11);
    TotallyPositiveBeta b1 = find_beta(e, 5, 1);
    CHECK(b1.beta.u == 5);
    CHECK(b1.beta.v == 0);
}

TEST_CASE("decompose_beta: exact sums of squares") {
    RMData rm = real_order_from_charpoly(quartic(0, 14, 23), 23);
    mpz_class N("76553");  // stand-in point order coprime to search denominators
    // The first candidate beta = 7 - omega hits the parity obstruction
    // (v odd with even trace), so the candidate walk matters here.
    TotallyPositiveBeta b;
    BetaDecomposition dec;
    unsigned skip = 0;
    for (;; ++skip) {
        REQUIRE(skip < 8);
        b = find_beta(rm, 17, 6, skip);
        try {
            dec = decompose_beta(b, rm, 17, N);
            break;
        } catch (const std::runtime_error&) {
        }
    }
    CHECK(skip > 0);  // the obstruction was actually exercised
    CHECK((dec.r == 2 || dec.r == 4));
    CHECK(gcd(dec.d, mpz_class(2 * 17)) == 1);
    CHECK(gcd(dec.d, N) == 1);
    // Verify sum alpha_i^2 = beta with independent exact arithmetic.
    mpq_class su = 0, sv = 0;
    for (unsigned i = 0; i < dec.r; ++i) {
        mpq_class xi(dec.x[i]), yi(dec.y[i]), dd(dec.d);
        xi /= dd;
        yi /= dd;
        // (xi + yi w)^2 = xi^2 - 32 yi^2 ... with w^2 = 32: u-part
        su += xi * xi + yi * yi * 32;
        sv += 2 * xi * yi;
    }
    CHECK(su == b.beta.u);
    CHECK(sv == b.beta.v);

    // skip produces a different decomposition that still verifies.
    BetaDecomposition dec2 = decompose_beta(b, rm, 17, N, 1);
    bool same = dec2.r == dec.r && dec2.d == dec.d && dec2.x == dec.x &&
                dec2.y == dec.y;
    CHECK_FALSE(same);

    // Genus 1: 17 = 4^2 + 1^2.
    RMData e = real_order_from_charpoly({mpz_class(13), mpz_class(-6), 1}, 13);
    TotallyPositiveBeta b17 = find_beta(e, 17, 1);
    BetaDecomposition d17 = decompose_beta(b17, e, 17, mpz_class(101));
    CHECK(d17.r == 2);
    CHECK(d17.x[0] * d17.x[0] + d17.x[1] * d17.x[1] == 17);
    // 7 needs four squares: 7 = 2^2 + 1 + 1 + 1.
    TotallyPositiveBeta b7 = find_beta(e, 7, 1);
    BetaDecomposition d7 = decompose_beta(b7, e, 7, mpz_class(101));
    CHECK(d7.r == 4);
    mpz_class s7 = 0;
    for (auto& xi : d7.x) s7 += xi * xi;
    CHECK(s7 == 7);
}

TEST_CASE("action scalars") {
    RMData rm = real_order_from_charpoly(quartic(0, 14, 23), 23);
    TotallyPositiveBeta b;
    BetaDecomposition dec;
    for (unsigned skip = 0;; ++skip) {
        REQUIRE(skip < 8);
        b = find_beta(rm, 17, 6, skip);
        try {
            dec = decompose_beta(b, rm, 17, mpz_class(76553));
            break;
        } catch (const std::runtime_error&) {
        }
    }
    ActionScalars ac = action_scalars(dec, rm, 6, 17, 3, 76553);
    CHECK(ac.a_mod_l.size() == dec.r);
    uint64_t acc = 0;
    for (uint64_t a : ac.a_mod_l) acc = (acc + a * a) % 17;
    CHECK(acc == 0);
    // Independent recomputation of one scalar: omega acts by 7 mod 17.
    // a_i = (x_i + 7 y_i)/d mod 17.
    uint64_t d17 = mpz_class((dec.d % 17) + 17).get_ui() % 17;
    uint64_t dinv = 1;
    while (dinv * d17 % 17 != 1) ++dinv;
    for (unsigned i = 0; i < dec.r; ++i) {
        mpz_class v = dec.x[i] + 7 * dec.y[i];
        uint64_t vm = mpz_class((v % 17 + 17) % 17).get_ui();
        CHECK(ac.a_mod_l[i] == vm * dinv % 17);
    }
    // Integer alpha acts by itself mod anything.
    RMData e = real_order_from_charpoly({mpz_class(13), mpz_class(-6), 1}, 13);
    // (1^2 + 0^2 = 1): not 0 mod l, so construct l = 1-free check via g=1
    // scalars directly: 1 mod anything is 1 -- use action on the N side.
    ActionScalars one = action_scalars(
        [&] {
            BetaDecomposition dd;
            dd.r = 2;
            dd.x = {mpz_class(5), mpz_class(0)};
            dd.y = {0, 0};
            dd.d = 1;
            return dd;
        }(),
        e, 1, 5, 1, 101);
    CHECK(one.a_mod_N[0] == 5);
    CHECK(one.a_mod_N[1] == 0);
}

TEST_CASE("kernel coset enumeration") {
    // r = 4 at l = 5 with scalars satisfying sum a^2 = 0 mod 5:
    // (1, 2, 0, 0): 1 + 4 = 5.
    std::vector<uint64_t> a{1, 1, 2, 3};  // 1+1+4+9 = 15 = 0 mod 5, full rank
    auto cosets = kernel_coset_enum(a, 5);
    CHECK(cosets.size() == 25);
    CHECK(cosets[0] == std::vector<uint64_t>{0, 0, 0, 0});
    std::set<std::vector<uint64_t>> uniq(cosets.begin(), cosets.end());
    CHECK(uniq.size() == 25);
    // Subgroup: closed under addition mod 5.
    for (size_t i = 0; i < cosets.size(); i += 7)
        for (size_t j = 0; j < cosets.size(); j += 5) {
            std::vector<uint64_t> sum(4);
            for (int k = 0; k < 4; ++k)
                sum[k] = (cosets[i][k] + cosets[j][k]) % 5;
            CHECK(uniq.count(sum) == 1);
        }
    // Each tuple is killed by F^t in the scalar model (F^t F = beta acts by
    // 0 on G), so the tuples really enumerate the kernel cosets.
    for (auto& tpl : cosets) {
        uint64_t r1 = (a[0] * tpl[0] + a[1] * tpl[1] + a[2] * tpl[2] +
                       a[3] * tpl[3]) %
                      5;
        uint64_t r2 = (5 * 25 - a[1] * tpl[0] + a[0] * tpl[1] + 5 * 25 -
                       a[3] * tpl[2] + a[2] * tpl[3]) %
                      5;
        CHECK(r1 == 0);
        CHECK(r2 == 0);
    }
    // r = 2 at l = 7: 7 distinct tuples.
    auto c2 = kernel_coset_enum({3, 5}, 7);
    CHECK(c2.size() == 7);
    CHECK(std::set<std::vector<uint64_t>>(c2.begin(), c2.end()).size() == 7);
}
