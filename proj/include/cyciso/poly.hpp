#pragma once
// Dense univariate polynomials over a FieldCtx. Used for modulus validation,
// root finding (embeddings, Weierstrass points), kernel data and Mumford
// arithmetic. Degrees are small throughout, so schoolbook everywhere.

#include <vector>

#include "cyciso/ff.hpp"

namespace cyciso {

class Poly {
public:
    Poly() = default;
    explicit Poly(FieldRef ctx) : ctx_(std::move(ctx)) {}
    Poly(FieldRef ctx, std::vector<FieldElem> coeffs);

    static Poly x(const FieldRef& ctx);
    static Poly constant(const FieldElem& c);
    static Poly random_monic(const FieldRef& ctx, size_t deg, std::mt19937_64& rng);

    const FieldRef& ctx() const { return ctx_; }
    int degree() const { return static_cast<int>(c_.size()) - 1; }
    bool is_zero() const { return c_.empty(); }
    /// Coefficient of x^i (zero if i exceeds the degree).
    FieldElem coeff(size_t i) const;
    const std::vector<FieldElem>& coeffs() const { return c_; }
    const FieldElem& lead() const;

    Poly operator+(const Poly& o) const;
    Poly operator-(const Poly& o) const;
    Poly operator*(const Poly& o) const;
    Poly operator-() const;
    bool operator==(const Poly& o) const;
    bool operator!=(const Poly& o) const { return !(*this == o); }

    Poly scaled(const FieldElem& s) const;
    Poly monic() const;
    Poly shifted(size_t k) const;  // multiply by x^k
    /// Quotient and remainder; the divisor's leading coefficient must be
    /// invertible (always true over a field unless divisor is zero).
    static void divrem(const Poly& a, const Poly& b, Poly& q, Poly& r);
    Poly rem(const Poly& mod) const;
    static Poly gcd(Poly a, Poly b);  // monic gcd
    static Poly powmod(const Poly& base, const mpz_class& e, const Poly& mod);

    FieldElem eval(const FieldElem& at) const;
    Poly derivative() const;
    bool is_irreducible() const;
    /// Distinct roots in the coefficient field, lexicographically sorted.
    std::vector<FieldElem> roots(std::mt19937_64& rng) const;

    std::string to_string() const;

private:
    void normalize();
    FieldRef ctx_;
    std::vector<FieldElem> c_;  // ascending degree, normalized (no top zeros)
};

}  // namespace cyciso
