#pragma once
// Real-multiplication bookkeeping: the real quadratic order attached to the
// Frobenius polynomial, totally positive elements beta of norm l, their
// sum-of-squares decompositions, the induced action scalars on the kernel
// generator and the evaluated point, and kernel coset enumeration.

#include <cstdint>
#include <gmpxx.h>
#include <stdexcept>
#include <vector>

namespace cyciso {

/// The real subfield K0 = Q(omega), omega = pi + pi^dagger, presented by
/// omega^2 = T*omega - Nm. For g = 1 the field is Q and omega = c1 (the
/// Frobenius trace); T/Nm are unused.
struct RMData {
    unsigned g = 2;     // 1 or 2
    uint64_t q = 0;
    mpz_class c1, c2;   // chi_pi(z) = z^4 - c1 z^3 + c2 z^2 - q c1 z + q^2
                        // (g=1: z^2 - c1 z + q)
    mpz_class T, Nm;    // min poly of omega: z^2 - T z + Nm  (g=2 only)
};

/// Element u + v*omega of K0 with exact rational coordinates.
struct K0Elem {
    mpq_class u, v;
};

struct TotallyPositiveBeta {
    K0Elem beta;
    uint64_t norm = 0;  // = l
};

/// alpha_i = (x_i + y_i*omega)/d with a common denominator d.
struct BetaDecomposition {
    unsigned r = 4;  // 2 or 4
    std::vector<mpz_class> x, y;  // size r
    mpz_class d = 1;
};

struct ActionScalars {
    unsigned r = 4;
    uint64_t l = 0;
    uint64_t N = 0;
    std::vector<uint64_t> a_mod_l;  // alpha_s on <t>
    std::vector<uint64_t> a_mod_N;  // alpha_s on <x>
};

/// Validate a Weil polynomial (quartic for g=2, quadratic for g=1, monic,
/// ascending coefficients) and extract the real order data.
RMData real_order_from_charpoly(const std::vector<mpz_class>& charpoly,
                                uint64_t q);

/// Bounded-search irreducibility test of chi_pi over Q.
bool charpoly_irreducible(const RMData& rm);

mpq_class k0_norm(const RMData& rm, const K0Elem& e);
bool is_totally_positive(const RMData& rm, const K0Elem& e);

/// Multiplication in K0 (used by tests and the decomposition checker).
K0Elem k0_mul(const RMData& rm, const K0Elem& a, const K0Elem& b);

/// Scalar by which u + v*omega acts on a cyclic group where pi acts by s:
/// u + v*(s + q*s^{-1}) mod m. s must be invertible mod m.
uint64_t k0_action_scalar(const RMData& rm, const K0Elem& e, uint64_t s,
                          uint64_t m);

/// Search for a totally positive beta = u + v*omega of norm l with
/// u + v*(s + q/s) = 0 (mod l), so that <t> with pi(t) = [s]t lies in
/// ker(beta). Bounded enumeration; throws std::runtime_error with a
/// "not beta-cyclic-polarizable" verdict when the search bound is exhausted.
/// `skip` selects the skip-th candidate (deterministic order): not every
/// valid beta admits a sum-of-squares decomposition with an odd denominator
/// (a parity obstruction can rule one out), so callers walk the candidates.
TotallyPositiveBeta find_beta(const RMData& rm, uint64_t l, uint64_t s,
                              unsigned skip = 0, int64_t v_bound = 4096);

/// Exact sum-of-squares decomposition beta = sum alpha_i^2 over K0 with a
/// common denominator coprime to 2*l*N. Prefers r = 2, falls back to r = 4;
/// `skip` asks for the skip-th decomposition found (deterministic order), so
/// callers can retry when a downstream degeneracy rules one out.
BetaDecomposition decompose_beta(const TotallyPositiveBeta& beta,
                                 const RMData& rm, uint64_t l,
                                 const mpz_class& N, unsigned skip = 0);

/// Residues of the alpha_i on <t> (pi acts by s mod l) and on <x> (pi acts
/// by s_x mod N). Enforces sum a_i^2 = 0 mod l.
ActionScalars action_scalars(const BetaDecomposition& dec, const RMData& rm,
                             uint64_t s, uint64_t l, uint64_t s_x, uint64_t N);

/// The kernel cosets ker(F) ∩ G^r as scalar tuples mod l:
/// r=4: (a1 u - a2 v, a2 u + a1 v, a3 u - a4 v, a4 u + a3 v) for u,v in [0,l);
/// r=2: (a1 u, a2 u) for u in [0,l). Deterministic order (u outer, v inner).
std::vector<std::vector<uint64_t>> kernel_coset_enum(
    const std::vector<uint64_t>& a_mod_l, uint64_t l);

}  // namespace cyciso
