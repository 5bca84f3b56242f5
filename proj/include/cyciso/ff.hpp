#pragma once
// Finite field arithmetic: prime fields F_p and towers of extensions
// F_p = L_0 ⊂ L_1 ⊂ ... ⊂ L_k, each step given by a monic irreducible
// modulus over the previous level. Elements are flat coefficient vectors
// over F_p of length equal to the total extension degree; a level-k element
// is read as step_degree(k) consecutive blocks of level-(k-1) elements.
//
// Contexts are immutable and shared via shared_ptr. All randomized
// procedures (irreducible search, root finding) take an explicit RNG so
// runs are reproducible from a seed; where a canonical choice is needed
// (n-th roots, embeddings) the lexicographically least candidate is taken.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <gmpxx.h>

namespace cyciso {

class FieldCtx;
using FieldRef = std::shared_ptr<const FieldCtx>;

/// Raised when a requested root/embedding does not exist in the field and
/// a larger extension would be required.
class FieldCapabilityError : public std::runtime_error {
public:
    explicit FieldCapabilityError(const std::string& what)
        : std::runtime_error(what) {}
};

class FieldElem {
public:
    FieldElem() = default;
    FieldElem(FieldRef ctx, std::vector<uint64_t> coeffs);

    const FieldRef& ctx() const { return ctx_; }
    const std::vector<uint64_t>& coeffs() const { return c_; }
    bool valid() const { return ctx_ != nullptr; }
    bool is_zero() const;
    bool is_one() const;

    bool operator==(const FieldElem& o) const;
    bool operator!=(const FieldElem& o) const { return !(*this == o); }

    /// Strict lexicographic order on coefficient vectors (low coeff first).
    static bool lex_less(const FieldElem& a, const FieldElem& b);

    FieldElem operator+(const FieldElem& o) const;
    FieldElem operator-(const FieldElem& o) const;
    FieldElem operator-() const;
    FieldElem operator*(const FieldElem& o) const;
    FieldElem operator/(const FieldElem& o) const;
    FieldElem& operator+=(const FieldElem& o) { return *this = *this + o; }
    FieldElem& operator-=(const FieldElem& o) { return *this = *this - o; }
    FieldElem& operator*=(const FieldElem& o) { return *this = *this * o; }

    std::string to_string() const;

private:
    FieldRef ctx_;
    std::vector<uint64_t> c_;
    friend class FieldCtx;
};

class FieldCtx : public std::enable_shared_from_this<FieldCtx> {
public:
    /// F_p for odd prime p (primality is checked; p must stay small enough
    /// that schoolbook accumulation cannot overflow: p < 2^20).
    static FieldRef prime(uint64_t p);

    /// Extension of `base` by a monic irreducible `modulus` (coefficients
    /// over `base`, ascending degree, leading coefficient 1). The modulus is
    /// validated; user-supplied moduli are accepted as-is so externally
    /// specified coordinates keep their meaning.
    static FieldRef extend(FieldRef base, const std::vector<FieldElem>& modulus);

    /// Extension of `base` of the given degree by a randomly found monic
    /// irreducible.
    static FieldRef extend(FieldRef base, size_t degree, std::mt19937_64& rng);

    bool is_prime_field() const { return base_ == nullptr; }
    uint64_t p() const { return p_; }
    size_t degree() const { return degree_; }          // total over F_p
    size_t step_degree() const { return step_degree_; } // top step over base
    const FieldRef& base() const { return base_; }
    const mpz_class& order() const { return q_; }       // p^degree
    const mpz_class& mult_order() const { return qm1_; }
    /// Modulus of the top extension step (ascending, over base()).
    const std::vector<FieldElem>& modulus() const { return modulus_elems_; }

    FieldElem zero() const;
    FieldElem one() const;
    FieldElem from_int(int64_t v) const;
    FieldElem from_mpz(const mpz_class& v) const;
    /// Image of the generator (the class of x) of the top extension step.
    FieldElem gen() const;
    FieldElem elem(std::vector<uint64_t> coeffs) const;
    /// Inclusion of a base-level element.
    FieldElem from_base(const FieldElem& b) const;
    FieldElem random(std::mt19937_64& rng) const;

    FieldElem add(const FieldElem& a, const FieldElem& b) const;
    FieldElem sub(const FieldElem& a, const FieldElem& b) const;
    FieldElem neg(const FieldElem& a) const;
    FieldElem mul(const FieldElem& a, const FieldElem& b) const;
    FieldElem inv(const FieldElem& a) const;
    FieldElem pow(const FieldElem& a, const mpz_class& e) const;
    FieldElem pow(const FieldElem& a, int64_t e) const;
    /// x -> x^{p^k}
    FieldElem frobenius(const FieldElem& a, unsigned k = 1) const;

    /// True if `sub` appears as a lower level of this tower (same object).
    bool has_subfield(const FieldRef& sub) const;

private:
    FieldCtx() = default;
    void mul_flat(const uint64_t* a, const uint64_t* b, uint64_t* out) const;
    void check(const FieldElem& a) const;

    FieldRef base_;              // nullptr for prime field
    uint64_t p_ = 0;
    size_t degree_ = 1;          // total degree over F_p
    size_t step_degree_ = 1;     // top step degree over base
    std::vector<FieldElem> modulus_elems_;      // over base, size step_degree_+1
    std::vector<std::vector<uint64_t>> mod_;    // non-leading coeffs, flat over base
    mpz_class q_, qm1_;
};

/// Maps a (sub)field context into a larger one. Found by locating a root of
/// each tower-step modulus of the source inside the destination; the
/// lexicographically least root is taken at every step, so embeddings are
/// deterministic.
class Embedding {
public:
    Embedding() = default;
    Embedding(FieldRef src, FieldRef dst, std::mt19937_64& rng);

    const FieldRef& src() const { return src_; }
    const FieldRef& dst() const { return dst_; }
    FieldElem apply(const FieldElem& a) const;

private:
    FieldElem apply_level(const FieldCtx* level, const uint64_t* flat) const;
    FieldRef src_, dst_;
    std::vector<FieldElem> gen_images_; // per tower step of src, bottom..top
};

/// Tower F_p ⊂ F_{p^{d1}} ⊂ ... for the given step degrees; degree-1 steps
/// are no-ops. Step polynomials are found by seeded random search.
FieldRef build_tower(uint64_t p, const std::vector<size_t>& degrees,
                     std::mt19937_64& rng);

/// One n-th root of c, deterministic: the lexicographically least element x
/// with x^n = c. Throws FieldCapabilityError (with the minimal extension
/// degree that would work, inside the message) if none exists in c's field.
FieldElem nth_root(const FieldElem& c, uint64_t n, std::mt19937_64& rng);

/// Whether c has an n-th root in its own field.
bool has_nth_root(const FieldElem& c, uint64_t n);

/// All e-th roots of unity, lexicographically sorted. Requires e | q-1.
std::vector<FieldElem> roots_of_unity(const FieldRef& f, uint64_t e,
                                      std::mt19937_64& rng);

}  // namespace cyciso
