#pragma once

// Leveled FV (BFV) scheme over RNS polynomial rings, instantiated twice with
// distinct plaintext moduli so higher layers can CRT-combine decoded values.
//
// Ciphertext-ciphertext multiplication lifts operands to an extended base
// q u B sized so the degree-2 product never wraps, then rescales by t/q.
// Two interchangeable arithmetic modes implement that rescaling step and the
// lift. The fast mode works entirely in word arithmetic (Garner digits,
// Horner over the extension primes, one fixed-width 512-bit division per
// coefficient); the reference mode reconstructs every coefficient to a full
// multiprecision integer and applies the textbook formula. Both must agree
// bit-exactly, and tests hold them to that.
//
// Relinearization uses base-2^16 digit decomposition of the degree-2
// component against the evaluation key.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "privml/common.hpp"
#include "privml/polyring.hpp"

namespace privml {

struct ParamsConfig {
  std::size_t n = 8192;
  unsigned q_prime_bits = 62;
  std::size_t q_prime_count = 4;
  unsigned t_bits = 49;          // per-instance plaintext modulus size
  std::size_t instances = 2;
  double sigma = 3.2;            // discrete Gaussian std-dev for fresh noise
  unsigned beta_log2 = 16;       // relinearization decomposition base
};

struct InstanceCtx;  // fast-path precomputations, private to fvrns.cpp

// One FV instantiation: plaintext modulus t over the shared ciphertext base.
struct SchemeInstance {
  std::uint64_t t = 0;
  RnsBase q_base;      // ciphertext modulus q = prod of word primes
  RnsBase ext_base;    // extension primes B for multiplication
  RnsBase full_base;   // q u B
  BigInt q, q_half;
  BigInt delta;        // floor(q / t)
  std::size_t ell = 0; // floor(log_beta q); digits 0..ell
  std::shared_ptr<const InstanceCtx> ctx;
};

class EncryptionParams {
 public:
  EncryptionParams() = default;
  static EncryptionParams create(const ParamsConfig& config = {});

  std::size_t n() const { return n_; }
  double sigma() const { return sigma_; }
  std::int64_t noise_bound() const { return noise_bound_; }
  std::uint64_t beta() const { return beta_; }
  std::size_t instance_count() const { return instances_.size(); }
  const SchemeInstance& instance(std::size_t i) const { return instances_[i]; }
  // Product t1 * t2 * ... : the effective plaintext capacity modulus.
  const BigInt& t_product() const { return t_product_; }

  std::uint64_t digest() const { return digest_; }
  void save(std::ostream& os) const;
  static EncryptionParams load(std::istream& is);

 private:
  std::size_t n_ = 0;
  double sigma_ = 0.0;
  std::int64_t noise_bound_ = 0;  // tail cut at 6 sigma
  std::uint64_t beta_ = 0;
  unsigned beta_log2_ = 0;
  std::vector<SchemeInstance> instances_;
  BigInt t_product_;
  std::uint64_t digest_ = 0;

  void finalize();  // builds instances' derived fields + digest
  void save_body(std::ostream& os) const;
};

// --- message and ciphertext containers -------------------------------------

// A plaintext polynomial per scheme instance: the same encoded integer
// polynomial reduced mod each t. Coefficients are kept in [0, t).
struct Plaintext {
  std::vector<std::vector<std::uint64_t>> coeffs;  // [instance][n]
  std::int32_t scale_bits = 0;
};

struct OpCounters {
  std::uint64_t ct_mul = 0;
  std::uint64_t plain_mul = 0;
  std::uint64_t add = 0;
};
inline OpCounters sum(const OpCounters& a, const OpCounters& b) {
  return {a.ct_mul + b.ct_mul, a.plain_mul + b.plain_mul, a.add + b.add};
}

struct Ciphertext {
  std::vector<RnsPoly> c0, c1;  // [instance], coefficient domain, base q
  std::int32_t scale_bits = 0;
  OpCounters ops;
  std::uint64_t params_digest = 0;

  void save(std::ostream& os) const;
  static Ciphertext load(std::istream& is, const EncryptionParams* expect = nullptr);
};

// Degree-2 ciphertext produced by multiplication before relinearization.
struct CiphertextProd {
  std::vector<RnsPoly> c0, c1, c2;
  std::int32_t scale_bits = 0;
  OpCounters ops;
  std::uint64_t params_digest = 0;
};

struct SecretKey {
  std::vector<RnsPoly> s_coeff, s_eval;  // [instance]
  std::uint64_t params_digest = 0;
  void save(std::ostream& os) const;
  static SecretKey load(std::istream& is, const EncryptionParams* expect = nullptr);
};

struct PublicKey {
  std::vector<RnsPoly> p0_eval, p1_eval;  // [instance], eval domain
  std::uint64_t params_digest = 0;
  void save(std::ostream& os) const;
  static PublicKey load(std::istream& is, const EncryptionParams* expect = nullptr);
};

struct RelinKey {
  // [instance][digit i]: g_i = -(a_i s + e_i) + beta^i s^2, stored in eval domain.
  std::vector<std::vector<RnsPoly>> a_eval, g_eval;
  std::uint64_t params_digest = 0;
  void save(std::ostream& os) const;
  static RelinKey load(std::istream& is, const EncryptionParams* expect = nullptr);
};

struct KeySet {
  SecretKey sk;
  PublicKey pk;
  RelinKey rk;
};

// Test hooks: force the noise terms and/or the encryption ephemeral u to
// zero so exactness properties can be asserted without noise.
struct EncHooks {
  bool zero_noise = false;
  bool zero_u = false;
};

// --- scheme operations ------------------------------------------------------

KeySet keygen(const EncryptionParams& params, std::uint64_t seed, const EncHooks& hooks = {});

Ciphertext encrypt(const Plaintext& m, const PublicKey& pk, const EncryptionParams& params,
                   SeededRng& rng, const EncHooks& hooks = {});
// Noiseless (Delta*m, 0) ciphertext; useful in tests and as add_plain's basis.
Ciphertext encrypt_trivial(const Plaintext& m, const EncryptionParams& params);

Plaintext decrypt(const Ciphertext& ct, const SecretKey& sk, const EncryptionParams& params);
// Decrypts a degree-2 ciphertext directly against (1, s, s^2).
Plaintext decrypt_prod(const CiphertextProd& ct, const SecretKey& sk,
                       const EncryptionParams& params);

Ciphertext add_ct(const Ciphertext& a, const Ciphertext& b);
Ciphertext add_plain(const Ciphertext& a, const Plaintext& m, const EncryptionParams& params);

enum class PlainMulPath { generic, shift };

// Plaintext multiplication. The shift path requires the plaintext to be a
// signed power-of-two monomial (+/- 2^i x^j) and applies it as a negacyclic
// rotation plus doubling chain; the generic path NTT-multiplies. Both paths
// count one plain_mul.
Ciphertext mul_plain(const Ciphertext& a, const Plaintext& m, const EncryptionParams& params,
                     PlainMulPath path = PlainMulPath::generic);

enum class RnsArithMode { fast, reference };

CiphertextProd mul_ct_no_relin(const Ciphertext& a, const Ciphertext& b,
                               const EncryptionParams& params,
                               RnsArithMode mode = RnsArithMode::fast);
Ciphertext relinearize(const CiphertextProd& prod, const RelinKey& rk,
                       const EncryptionParams& params);
Ciphertext mul_ct(const Ciphertext& a, const Ciphertext& b, const RelinKey& rk,
                  const EncryptionParams& params, RnsArithMode mode = RnsArithMode::fast);

// Remaining decision margin in bits, minimized over instances: how much the
// invariant noise can still grow before t*(c0 + c1 s)/q rounds incorrectly.
// Diagnostic only.
double noise_budget_bits(const Ciphertext& ct, const SecretKey& sk,
                         const EncryptionParams& params);

}  // namespace privml
