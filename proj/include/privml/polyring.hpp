#pragma once

// Negacyclic polynomial arithmetic in Z_q[x]/(x^n + 1) with residue number
// system (RNS) coefficient representation.
//
// Each word-sized prime modulus owns its NTT tables (forward/inverse twiddles
// in Shoup form) and performs the transforms with Harvey-style lazy butterfly
// reductions. The schoolbook O(n^2) multiply is kept alongside the NTT path
// as a selectable method so higher layers can cross-check against it at any
// time. RnsBase bundles a list of moduli with Garner mixed-radix tables for
// exact reconstruction and exact centered base extension without
// multiprecision arithmetic in the inner loops.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "privml/common.hpp"

namespace privml {

using BigInt = boost::multiprecision::cpp_int;

// --- scalar helpers --------------------------------------------------------

// Deterministic Miller-Rabin, valid for the full 64-bit range.
bool is_prime_u64(std::uint64_t x);

inline std::uint64_t mulmod_u64(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<u128>(a) * b % m);
}

std::uint64_t powmod_u64(std::uint64_t base, std::uint64_t exp, std::uint64_t m);

std::size_t bit_reverse(std::size_t x, unsigned bits);

// Largest `count` primes below 2^bit_size that are congruent to 1 mod 2n,
// skipping any value in `exclude`. Throws if the range is exhausted.
std::vector<std::uint64_t> find_ntt_primes(unsigned bit_size, std::size_t count, std::size_t n,
                                           std::vector<std::uint64_t> exclude = {});

// --- Modulus ---------------------------------------------------------------

class Modulus {
 public:
  // Shared factory with a process-wide cache keyed on (value, n); NTT tables
  // are built once per distinct modulus.
  static std::shared_ptr<const Modulus> get(std::uint64_t value, std::size_t n);

  std::uint64_t value() const { return q_; }
  std::size_t n() const { return n_; }
  unsigned log2_n() const { return logn_; }
  std::uint64_t psi() const { return psi_; }  // primitive 2n-th root of unity

  std::uint64_t add(std::uint64_t a, std::uint64_t b) const {
    const std::uint64_t s = a + b;
    return s >= q_ ? s - q_ : s;
  }
  std::uint64_t sub(std::uint64_t a, std::uint64_t b) const {
    return a >= b ? a - b : a + q_ - b;
  }
  std::uint64_t neg(std::uint64_t a) const { return a == 0 ? 0 : q_ - a; }
  std::uint64_t mul(std::uint64_t a, std::uint64_t b) const { return mulmod_u64(a, b, q_); }
  std::uint64_t pow(std::uint64_t base, std::uint64_t exp) const {
    return powmod_u64(base, exp, q_);
  }
  std::uint64_t inv(std::uint64_t a) const;
  std::uint64_t reduce_i64(std::int64_t v) const {
    const std::int64_t r = v % static_cast<std::int64_t>(q_);
    return static_cast<std::uint64_t>(r < 0 ? r + static_cast<std::int64_t>(q_) : r);
  }

  // Shoup precomputation: floor(w * 2^64 / q), for w < q.
  std::uint64_t shoup(std::uint64_t w) const {
    return static_cast<std::uint64_t>((static_cast<u128>(w) << 64) / q_);
  }
  // x * w mod q given the Shoup constant; result fully reduced.
  std::uint64_t mul_shoup(std::uint64_t x, std::uint64_t w, std::uint64_t w_shoup) const {
    std::uint64_t r = mul_shoup_lazy(x, w, w_shoup);
    return r >= q_ ? r - q_ : r;
  }
  // Lazy variant: result in [0, 2q).
  std::uint64_t mul_shoup_lazy(std::uint64_t x, std::uint64_t w, std::uint64_t w_shoup) const {
    const std::uint64_t hi = static_cast<std::uint64_t>((static_cast<u128>(x) * w_shoup) >> 64);
    return x * w - hi * q_;
  }

  // In-place negacyclic NTT over an n-length coefficient row. Forward maps
  // coefficients to evaluations at the odd powers of psi; inverse undoes it
  // exactly (fixed point: inverse(forward(a)) == a).
  void ntt_forward(std::uint64_t* a) const;
  void ntt_inverse(std::uint64_t* a) const;

 private:
  Modulus(std::uint64_t q, std::size_t n);

  std::uint64_t q_ = 0;
  std::uint64_t two_q_ = 0;
  std::size_t n_ = 0;
  unsigned logn_ = 0;
  std::uint64_t psi_ = 0;
  std::uint64_t n_inv_ = 0;
  std::uint64_t n_inv_shoup_ = 0;
  // Twiddles in bit-reversed order: psi_rev_[m + i] = psi^bitrev(i, log2 m + 1)
  // per stage block; ipsi_rev_ holds the elementwise inverses.
  std::vector<std::uint64_t> psi_rev_, psi_rev_shoup_;
  std::vector<std::uint64_t> ipsi_rev_, ipsi_rev_shoup_;
};

// --- RnsBase ---------------------------------------------------------------

class RnsBase {
 public:
  RnsBase() = default;
  explicit RnsBase(std::vector<std::shared_ptr<const Modulus>> mods);
  static RnsBase create(const std::vector<std::uint64_t>& primes, std::size_t n);

  std::size_t size() const { return mods_.size(); }
  std::size_t n() const { return mods_.empty() ? 0 : mods_[0]->n(); }
  const Modulus& mod(std::size_t i) const { return *mods_[i]; }
  const std::shared_ptr<const Modulus>& mod_ptr(std::size_t i) const { return mods_[i]; }

  const BigInt& product() const;       // Q = prod m_i
  const BigInt& half_product() const;  // floor(Q / 2)
  bool same_moduli(const RnsBase& other) const;
  // Concatenated base (this ++ other); moduli must be pairwise distinct.
  RnsBase concat(const RnsBase& other) const;

  // Garner mixed-radix digits of the value with residues residues[i*stride],
  // written to digits[0..size). Word arithmetic only.
  void to_digits(const std::uint64_t* residues, std::size_t stride, std::uint64_t* digits) const;
  // True iff the value with the given mixed-radix digits exceeds floor(Q/2),
  // i.e. represents a negative number under the centered convention.
  bool digits_exceed_half(const std::uint64_t* digits) const;
  BigInt digits_to_bigint(const std::uint64_t* digits) const;

  // Exact CRT reconstruction to [0, Q) or the centered range (-Q/2, Q/2].
  BigInt reconstruct(const std::uint64_t* residues, std::size_t stride = 1) const;
  BigInt reconstruct_centered(const std::uint64_t* residues, std::size_t stride = 1) const;
  // Residues of v (any sign) in this base.
  std::vector<std::uint64_t> decompose(const BigInt& v) const;

 private:
  struct Tables;
  std::vector<std::shared_ptr<const Modulus>> mods_;
  std::shared_ptr<const Tables> tables_;
};

// Exact centered base extension src -> dst: for each coefficient, the centered
// integer represented in src is re-reduced modulo every dst prime. Built once
// and reused; inner loop is word arithmetic (Garner digits + Horner).
class BaseExtension {
 public:
  BaseExtension(RnsBase src, RnsBase dst);
  const RnsBase& src() const { return src_; }
  const RnsBase& dst() const { return dst_; }
  // residues: src.size() rows of length n (stride n); out: dst.size() rows.
  void apply(const std::uint64_t* residues, std::size_t n, std::uint64_t* out) const;

 private:
  RnsBase src_, dst_;
  // Per dst prime: src moduli reduced mod p (with Shoup constants) for the
  // Horner pass, plus Q mod p for the centering correction.
  std::vector<std::vector<std::uint64_t>> m_mod_p_, m_mod_p_shoup_;
  std::vector<std::uint64_t> q_mod_p_;
};

// --- RnsPoly ---------------------------------------------------------------

enum class PolyDomain : std::uint8_t { coeff = 0, eval = 1 };

class RnsPoly {
 public:
  RnsPoly() = default;
  explicit RnsPoly(RnsBase base, PolyDomain domain = PolyDomain::coeff);
  static RnsPoly random_uniform(const RnsBase& base, SeededRng& rng,
                                PolyDomain domain = PolyDomain::coeff);

  const RnsBase& base() const { return base_; }
  PolyDomain domain() const { return domain_; }
  void set_domain(PolyDomain d) { domain_ = d; }
  std::size_t n() const { return n_; }
  std::size_t k() const { return base_.size(); }
  bool empty() const { return data_.empty(); }

  std::uint64_t* row(std::size_t mod_idx) { return data_.data() + mod_idx * n_; }
  const std::uint64_t* row(std::size_t mod_idx) const { return data_.data() + mod_idx * n_; }
  std::uint64_t& at(std::size_t mod_idx, std::size_t coeff) { return data_[mod_idx * n_ + coeff]; }
  std::uint64_t at(std::size_t mod_idx, std::size_t coeff) const {
    return data_[mod_idx * n_ + coeff];
  }
  const std::vector<std::uint64_t>& data() const { return data_; }

  void to_eval();   // forward NTT on every row (no-op guard: must be coeff)
  void to_coeff();  // inverse NTT on every row (must be eval)

  bool is_zero() const;

  void save(std::ostream& os) const;
  static RnsPoly load(std::istream& is);

 private:
  RnsBase base_;
  PolyDomain domain_ = PolyDomain::coeff;
  std::size_t n_ = 0;
  std::vector<std::uint64_t> data_;
};

// Elementwise ops; operands must share base and domain.
RnsPoly add(const RnsPoly& a, const RnsPoly& b);
RnsPoly sub(const RnsPoly& a, const RnsPoly& b);
RnsPoly negate(const RnsPoly& a);
void add_inplace(RnsPoly& a, const RnsPoly& b);
void sub_inplace(RnsPoly& a, const RnsPoly& b);
void negate_inplace(RnsPoly& a);

// Pointwise product; both operands in eval domain.
RnsPoly dyadic(const RnsPoly& a, const RnsPoly& b);
void dyadic_accum(RnsPoly& acc, const RnsPoly& a, const RnsPoly& b);

enum class MulMethod { ntt, naive };

// Full negacyclic product, coefficient domain in and out. `naive` runs the
// O(n^2) schoolbook reference on every modulus.
RnsPoly multiply(const RnsPoly& a, const RnsPoly& b, MulMethod method = MulMethod::ntt);

// a *= (-1)^negate * 2^two_power * x^x_power, coefficient domain. The x-shift
// is the negacyclic rotation; the power of two is applied as a doubling chain.
void mul_monomial_inplace(RnsPoly& a, std::size_t x_power, std::size_t two_power, bool negate);

// a *= c for a small scalar constant (reduced per modulus).
void mul_scalar_inplace(RnsPoly& a, std::uint64_t c);

}  // namespace privml
