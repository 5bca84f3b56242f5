#pragma once
// Curve layer for genus 1 and 2: hyperelliptic curves y^2 = f(x) with an odd
// degree model for divisor arithmetic, Cantor's algorithm on Mumford
// representatives, naive point counting, Igusa-Clebsch invariants, and the
// bridge between Mumford coordinates and level-2 theta coordinates.
//
// The theta conventions are rigid and shared with the theta module:
//   - level-2 coordinates are indexed by ThetaIndex bits, one bit per
//     abelian-variety coordinate;
//   - translation by the 2-torsion point with half-characteristic
//     (eta' | eta'') acts on coordinates by theta_k -> (-1)^<2 eta', k>
//     theta_{k + 2 eta''};
//   - branch points are matched to half-characteristics through a fixed
//     table (see eta_char in the implementation), with the point at
//     infinity always in the last slot.
//
// thomae_null builds the theta null of the Jacobian from the Weierstrass
// roots: Rosenhain invariants by Moebius normalization, squared even theta
// constants as square roots of explicit products of root differences (sign
// system resolved by search and validated against the curve), and the null
// by inverting the character sums. mumford_to_theta rides on a linear
// identification of the Cassels-Flynn Kummer coordinates with the theta
// model, fitted on the 16 two-torsion nodes and therefore convention-proof.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <gmpxx.h>

#include "cyciso/ff.hpp"
#include "cyciso/theta.hpp"

namespace cyciso {

struct HyperellipticCurve {
    HyperellipticCurve(unsigned genus, std::vector<FieldElem> coeffs);

    unsigned genus = 0;
    std::vector<FieldElem> f;  // ascending coefficients of f(x)

    const FieldRef& ctx() const { return f.at(0).ctx(); }
    size_t degree() const { return f.size() - 1; }
    bool odd_model() const { return degree() % 2 == 1; }
    FieldElem eval(const FieldElem& x) const;
};

/// Reduced Mumford divisor (u, v): u monic of degree <= genus (ascending
/// coefficients including the leading 1), deg v < deg u, u | v^2 - f.
/// The zero divisor is u = [1], v = [].
struct MumfordDivisor {
    std::vector<FieldElem> u;
    std::vector<FieldElem> v;

    size_t weight() const { return u.size() - 1; }
    bool is_zero() const { return weight() == 0; }
    bool operator==(const MumfordDivisor& o) const { return u == o.u && v == o.v; }
    bool operator!=(const MumfordDivisor& o) const { return !(*this == o); }
};

MumfordDivisor divisor_zero(const HyperellipticCurve& C);
bool divisor_valid(const HyperellipticCurve& C, const MumfordDivisor& D);
MumfordDivisor cantor_add(const HyperellipticCurve& C, const MumfordDivisor& a,
                          const MumfordDivisor& b);
MumfordDivisor cantor_neg(const HyperellipticCurve& C, const MumfordDivisor& a);
MumfordDivisor cantor_mul(const HyperellipticCurve& C, const mpz_class& m,
                          const MumfordDivisor& a);
/// Coordinate-wise x -> x^{p^k}.
MumfordDivisor divisor_frobenius(const HyperellipticCurve& C,
                                 const MumfordDivisor& a, unsigned k = 1);
/// Random point of the Jacobian, uniform enough for tests.
MumfordDivisor random_divisor(const HyperellipticCurve& C, std::mt19937_64& rng);

// ---- polynomial root utilities (ascending coefficient vectors) ----

/// All roots lying in the coefficient field, each listed once.
std::vector<FieldElem> poly_roots(const std::vector<FieldElem>& poly,
                                  std::mt19937_64& rng);
/// Smallest m such that the squarefree polynomial splits over an extension
/// of relative degree m.
size_t splitting_degree(const std::vector<FieldElem>& poly);

// ---- counting and invariants ----

/// Characteristic polynomial of Frobenius from naive point counts over F_q
/// and F_{q^2}; ascending coefficients of a degree-2g monic polynomial.
std::vector<mpz_class> frobenius_charpoly(const HyperellipticCurve& C);

/// Igusa-Clebsch invariants (I2, I4, I6, I10) of a genus-2 curve, values in
/// the curve's base field.
std::array<FieldElem, 4> igusa_clebsch(const HyperellipticCurve& C,
                                       std::mt19937_64& rng);

/// Geometric isomorphism test: equal Igusa-Clebsch tuples up to the
/// weighted scaling (I2, I4, I6, I10) -> (t I2, t^2 I4, t^3 I6, t^5 I10).
/// Curves may live in different extensions of the same prime field.
bool same_iso_class(const HyperellipticCurve& a, const HyperellipticCurve& b,
                    std::mt19937_64& rng);

// ---- theta bridge ----

/// Thrown by theta_to_curve when the null belongs to a product of elliptic
/// curves (a vanishing even theta constant) rather than a Jacobian.
class DecomposableError : public std::runtime_error {
public:
    explicit DecomposableError(const std::string& w) : std::runtime_error(w) {}
};

/// Theta data attached to a curve: the null of its Jacobian over an
/// extension of the curve field, the ordered branch x-coordinates there,
/// and the linear identification C of Cassels-Flynn Kummer coordinates
/// with the theta model (theta ~ C * xi).
struct ThetaCurveData {
    HyperellipticCurve curve;          // over the original field
    FieldRef ext;                      // field of the null (tower over curve field)
    std::optional<ThetaNull> null;     // level-2 theta null of the Jacobian
    std::vector<FieldElem> roots;      // branch x-coords over ext, infinity last (odd model)
    std::vector<FieldElem> cmat;       // (2^g)x(2^g), row-major
    std::vector<FieldElem> cmat_inv;

    size_t dim() const { return size_t{1} << curve.genus; }
};

/// Theta null of the Jacobian with a fixed symmetric convention. Requires
/// an odd-degree model. The null lives over an extension of relative degree
/// at most 2d over the splitting field F_{q^d} of f.
ThetaCurveData thomae_null(const HyperellipticCurve& C, std::mt19937_64& rng);

/// Level-2 theta coordinates of a reduced divisor (defined up to D ~ -D,
/// as is everything at level 2). The divisor may live over `tc.ext` or any
/// subfield of it reachable by inclusion.
ProjThetaPoint mumford_to_theta(const ThetaCurveData& tc, const MumfordDivisor& D);

/// Inverse bridge: one of the two divisors +-D above a theta point with
/// nonvanishing leading Kummer coordinate; deterministic representative.
/// Throws DegenerateError for points over the theta divisor at infinity.
MumfordDivisor theta_to_mumford(const ThetaCurveData& tc, const AffThetaPoint& P);

/// Rosenhain model y^2 = x(x-1)(x-lam)(x-mu)(x-nu) of the curve under a
/// genus-2 Jacobian null, over the null's field. Throws DecomposableError
/// when the null is a product null.
HyperellipticCurve theta_to_curve(const ThetaNull& nullB);

/// Full curve data reconstructed from a Jacobian theta null alone (genus 1
/// or 2): the Rosenhain model over the null's field, the branch coordinates
/// in the slot order the null induces, and the Kummer identification fitted
/// against the null's two-torsion translates. Throws DegenerateError when
/// the null is not consistent with a curve under the fixed conventions,
/// DecomposableError for product nulls.
ThetaCurveData curve_data_from_null(unsigned g, const AffThetaPoint& null_point);

/// The same curve data with the null, branch coordinates and Kummer
/// identification lifted into a finer tower extension of tc.ext.
ThetaCurveData extend_curve_data(const ThetaCurveData& tc, const FieldRef& finer);

/// Inclusion of a tower element into a finer level of the same tower.
FieldElem lift_into(const FieldRef& dst, const FieldElem& a);

/// Galois descent of a curve whose branch points are rational over a tower
/// extension: a model over the prime field with the same geometric
/// isomorphism class (determined up to quadratic twist; one representative
/// is returned). Returns nullopt when f does not split over the curve
/// field or no descent datum is found.
std::optional<HyperellipticCurve> descend_to_prime_field(
    const HyperellipticCurve& C, std::mt19937_64& rng);

// ---- genus-1 oracle substrate ----

/// j-invariant of y^2 = cubic.
FieldElem j_invariant(const HyperellipticCurve& E);

/// Separable isogeny with cyclic kernel of odd prime order computed by
/// direct summation over the kernel (textbook approach, used as an
/// independent oracle): returns the image curve and evaluates points.
struct VeluIsogeny {
    HyperellipticCurve image;
    std::vector<MumfordDivisor> kernel;  // all nonzero kernel points
};
VeluIsogeny velu_isogeny(const HyperellipticCurve& E, const MumfordDivisor& P,
                         uint64_t ell);
MumfordDivisor velu_map(const VeluIsogeny& iso, const HyperellipticCurve& E,
                        const MumfordDivisor& Q);

}  // namespace cyciso
