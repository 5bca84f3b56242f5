#pragma once
// Orchestration of the cyclic-kernel isogeny between principally polarized
// abelian surfaces (or elliptic curves) with real multiplication: given a
// Galois-stable cyclic kernel of odd prime order l generated by t, compute
// the level-2 theta null point of the quotient B, reconstruct the target
// curve, and push evaluation points through the isogeny.
//
// Pipeline (both for the null point and for point images):
//   1. theta data of the source Jacobian (Thomae) over a working field E
//      containing the kernel field, mu_l, and - for genus 2 - the full
//      4-torsion;
//   2. a totally positive beta of norm l in the real order, written as a sum
//      of r squares (r = 2 or 4), acting on <t> by scalars a_s;
//   3. excellent/suitable affine lifts of t and x+t, tables of chainmult
//      multiples, and the kernel-coset double sums giving an affine lift of
//      the theta null (resp. (f(x),0,...,0)) of B^r for the induced theta
//      structure;
//   4. a metaplectic change of theta structure, searched among symplectic
//      candidates built from the matrix of F beta^{-1} on the 4-torsion and
//      certified by product-unfolding consistency;
//   5. unfolding to the 2^g coordinates of B, curve reconstruction, and
//      Galois descent of the target model to the prime field.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cyciso/ff.hpp"
#include "cyciso/genus2.hpp"
#include "cyciso/rm.hpp"
#include "cyciso/symplectic.hpp"
#include "cyciso/theta.hpp"

namespace cyciso {

/// No totally positive beta of norm l compatible with the kernel admits a
/// usable decomposition: the quotient is not reachable as a beta-cyclic
/// isogeny within the search bounds.
class NotPolarizableError : public std::runtime_error {
public:
    explicit NotPolarizableError(const std::string& w) : std::runtime_error(w) {}
};

struct IsogenyConfig {
    unsigned r_preference = 0;   // 0 = automatic (prefer 2), else force 2 or 4
    uint64_t seed = 1;
    int64_t force_root = -1;     // >= 0: scale the excellent/suitable lifts by
                                 // the (force_root mod l)-th l-th root of unity
    unsigned beta_bound = 48;    // beta candidates to walk before giving up
    unsigned dec_bound = 12;     // decompositions to try per beta
    unsigned threads = 1;
};

struct EvalPoint {
    MumfordDivisor x;   // over the curve's base field
    uint64_t order = 0; // 0 = compute from the Jacobian group order
};

struct IsogenyJob {
    HyperellipticCurve curve;        // over the prime field
    MumfordDivisor t;                // kernel generator, over its own field
    uint64_t ell = 0;                // odd prime (1 allowed: trivial quotient)
    uint64_t frob_eigenvalue = 0;    // s with pi(t) = [s] t
    std::vector<EvalPoint> points;
    IsogenyConfig config;
};

struct PointImage {
    MumfordDivisor x;
    uint64_t order = 0;
    std::vector<FieldElem> sums;     // exact affine double sums on B^r
    ProjThetaPoint theta;            // image on B (2^g coordinates)
    std::optional<MumfordDivisor> mumford;  // on the target model over E
};

struct IsogenyResult {
    RMData rm;
    TotallyPositiveBeta beta;
    BetaDecomposition dec;
    std::vector<uint64_t> a_mod_l;   // action of alpha_s on <t>
    ThetaCurveData source;           // source theta data over the working field
    AffThetaPoint t_excellent;
    std::vector<FieldElem> null_sums;   // exact affine sums, size 2^{g r}
    SymplecticMap S;
    ProjThetaPoint target_null;         // null point of B
    std::optional<ThetaCurveData> target;        // target curve data over E
    std::optional<HyperellipticCurve> target_model;  // descended, up to twist
    std::vector<PointImage> images;
    std::string transcript;
    MumfordDivisor t_embedded;  // kernel generator over the working field
};

/// Run the null-point pipeline (no evaluation points). Throws
/// NotPolarizableError, DegenerateError, FieldCapabilityError, or
/// std::invalid_argument on bad input.
IsogenyResult target_null(const IsogenyJob& job);

/// Evaluate the isogeny on one point, reusing the null-pipeline result.
PointImage eval_point(const IsogenyJob& job, const EvalPoint& pt,
                      const IsogenyResult& res);

/// target_null followed by eval_point on every job point.
IsogenyResult run_job(const IsogenyJob& job);

struct VerificationReport {
    bool target_nonsingular = false;
    bool charpoly_checked = false;   // a prime-field model was available
    bool charpoly_match = false;     // equal to the source charpoly (after
                                     // resolving the quadratic twist)
    bool source_target_isomorphic = false;
    std::vector<bool> image_order_ok;
    std::string notes;
};

/// Consistency report: target nonsingularity, Frobenius charpoly equality
/// with the source (resolving the twist ambiguity of the descended model;
/// the matching twist replaces target_model in `res`), isomorphy of source
/// and target, and order checks on the evaluated images.
VerificationReport verify_result(const IsogenyJob& job, IsogenyResult& res);

// ---- exported building blocks (used by the pipelines and the tests) ----

/// The per-index kernel-coset sums: for every index k of (Z/2)^{g r},
/// sum over the coset tuples (c_1..c_r) of prod_s tables[s][c_s].c[k_s],
/// where k_s takes bits [s*g, (s+1)*g) of k (factor-major layout).
std::vector<FieldElem> fold_sums(
    const std::vector<std::vector<AffThetaPoint>>& tables,
    const std::vector<std::vector<uint64_t>>& cosets, size_t g,
    unsigned threads = 1);

/// Weil pairing e_n(P, Q) on the Jacobian through theta chain arithmetic:
/// the scaling-invariant combination of the four ladder factors
/// chainmultadd(n, P+Q, Q, P) = lambda_PQ * P,  chainmult(n, P) = lambda_P * 0,
/// and symmetrically, e = (lambda_PQ * lambda_P) / (lambda_QP * lambda_Q).
/// P, Q must be n-torsion divisors over tc.ext. The value is a root of unity
/// of order dividing n, canonical up to a fixed power independent of P, Q
/// (bilinearity, alternation and non-degeneracy hold exactly).
FieldElem torsion_pairing(const ThetaCurveData& tc, const MumfordDivisor& P,
                          const MumfordDivisor& Q, uint64_t n,
                          std::mt19937_64& rng);

/// #J(F_{q^k}) = det(C^k - I) for the companion matrix C of the charpoly
/// (ascending coefficients, monic of degree 2g).
mpz_class jacobian_order(const std::vector<mpz_class>& charpoly, unsigned k);

/// Exact order of a divisor given a multiple `bound` of it (e.g. the group
/// order); trial-factors the bound.
mpz_class divisor_order(const HyperellipticCurve& C, const MumfordDivisor& D,
                        const mpz_class& bound);

}  // namespace cyciso
