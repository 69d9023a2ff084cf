#include "privml/fvrns.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace privml {

using boost::multiprecision::uint512_t;

namespace {

// Largest `count` distinct primes below 2^bits (no NTT congruence needed for
// plaintext moduli; they are never transformed).
std::vector<std::uint64_t> find_plain_primes(unsigned bits, std::size_t count) {
  std::vector<std::uint64_t> out;
  std::uint64_t cand = (1ULL << bits) - 1;
  if ((cand & 1) == 0) --cand;
  while (out.size() < count) {
    if (cand < 3) throw std::runtime_error("find_plain_primes: range exhausted");
    if (is_prime_u64(cand)) out.push_back(cand);
    cand -= 2;
  }
  return out;
}

// Floor division for signed multiprecision (cpp_int's operator/ truncates).
BigInt floor_div(const BigInt& a, const BigInt& b) {
  BigInt q = a / b;
  if (a < 0 && q * b != a) --q;
  return q;
}

double log2_big(const BigInt& v) {
  if (v <= 0) return -std::numeric_limits<double>::infinity();
  const unsigned bits = boost::multiprecision::msb(v);
  if (bits <= 52) return std::log2(static_cast<double>(v));
  const double top = static_cast<double>(BigInt(v >> (bits - 52)));
  return static_cast<double>(bits - 52) + std::log2(top);
}

}  // namespace

// --- fast-path precomputations ----------------------------------------------

struct InstanceCtx {
  BaseExtension lift;  // q -> ext, exact centered
  std::vector<std::uint64_t> q_values;
  std::uint64_t t = 0;
  uint512_t q512, q_half512;
  // Per q prime j: t mod q_j, t*E mod q_j (E = prod of extension primes), and
  // the extension primes mod q_j for the Horner pass over high digits.
  std::vector<std::uint64_t> t_mod, t_shoup, te_mod;
  std::vector<std::vector<std::uint64_t>> ext_m_mod, ext_m_shoup;
  std::vector<std::uint64_t> delta_mod, delta_shoup;

  InstanceCtx(const SchemeInstance& inst)
      : lift(inst.q_base, inst.ext_base), t(inst.t) {
    const std::size_t kq = inst.q_base.size();
    const std::size_t ke = inst.ext_base.size();
    q_values.resize(kq);
    for (std::size_t i = 0; i < kq; ++i) q_values[i] = inst.q_base.mod(i).value();
    q512 = uint512_t(inst.q.str());
    q_half512 = uint512_t(inst.q_half.str());
    t_mod.resize(kq);
    t_shoup.resize(kq);
    te_mod.resize(kq);
    ext_m_mod.resize(kq);
    ext_m_shoup.resize(kq);
    delta_mod.resize(kq);
    delta_shoup.resize(kq);
    const BigInt te = BigInt(t) * inst.ext_base.product();
    for (std::size_t j = 0; j < kq; ++j) {
      const Modulus& qm = inst.q_base.mod(j);
      t_mod[j] = t % qm.value();
      t_shoup[j] = qm.shoup(t_mod[j]);
      te_mod[j] = static_cast<std::uint64_t>(te % qm.value());
      ext_m_mod[j].resize(ke);
      ext_m_shoup[j].resize(ke);
      for (std::size_t i = 0; i < ke; ++i) {
        ext_m_mod[j][i] = inst.ext_base.mod(i).value() % qm.value();
        ext_m_shoup[j][i] = qm.shoup(ext_m_mod[j][i]);
      }
      delta_mod[j] = static_cast<std::uint64_t>(inst.delta % qm.value());
      delta_shoup[j] = qm.shoup(delta_mod[j]);
    }
  }
};

// --- params -----------------------------------------------------------------

void EncryptionParams::finalize() {
  t_product_ = 1;
  for (auto& inst : instances_) {
    inst.q = inst.q_base.product();
    inst.q_half = inst.q >> 1;
    inst.delta = inst.q / inst.t;
    inst.ell = boost::multiprecision::msb(inst.q) / beta_log2_;
    inst.ctx = std::make_shared<const InstanceCtx>(inst);
    t_product_ *= inst.t;
  }
  std::ostringstream os;
  save_body(os);
  digest_ = fnv1a(os.str());
}

EncryptionParams EncryptionParams::create(const ParamsConfig& config) {
  if (config.instances < 1) throw std::invalid_argument("params: need at least one instance");
  if (config.q_prime_bits > 62) throw std::invalid_argument("params: q primes must fit lazy NTT bound");
  EncryptionParams p;
  p.n_ = config.n;
  p.sigma_ = config.sigma;
  p.noise_bound_ = static_cast<std::int64_t>(std::ceil(6.0 * config.sigma));
  p.beta_log2_ = config.beta_log2;
  p.beta_ = 1ULL << config.beta_log2;

  const auto q_primes = find_ntt_primes(config.q_prime_bits, config.q_prime_count, config.n);
  RnsBase q_base = RnsBase::create(q_primes, config.n);
  // The degree-2 product of centered operands is bounded by n * (q/2)^2 * 2;
  // the extended base must represent it without wrap-around.
  const unsigned q_bits = boost::multiprecision::msb(q_base.product()) + 1;
  const unsigned need_bits = static_cast<unsigned>(std::log2(static_cast<double>(config.n))) + 2 * q_bits + 2;
  std::size_t ext_count = (need_bits - q_bits + config.q_prime_bits - 2) / (config.q_prime_bits - 1);
  auto ext_primes = find_ntt_primes(config.q_prime_bits, ext_count, config.n, q_primes);
  {
    std::vector<std::uint64_t> exclude = q_primes;
    RnsBase full = q_base.concat(RnsBase::create(ext_primes, config.n));
    while (boost::multiprecision::msb(full.product()) + 1 < need_bits) {
      exclude.insert(exclude.end(), ext_primes.begin(), ext_primes.end());
      auto extra = find_ntt_primes(config.q_prime_bits, ext_primes.size() + 1, config.n, q_primes);
      ext_primes = extra;
      full = q_base.concat(RnsBase::create(ext_primes, config.n));
    }
  }
  RnsBase ext_base = RnsBase::create(ext_primes, config.n);
  RnsBase full_base = q_base.concat(ext_base);

  if (boost::multiprecision::msb(q_base.product()) + config.t_bits + 3 >= 512)
    throw std::invalid_argument("params: q too large for the fixed-width scaling path");

  const auto t_primes = find_plain_primes(config.t_bits, config.instances);
  for (std::size_t i = 0; i < config.instances; ++i) {
    SchemeInstance inst;
    inst.t = t_primes[i];
    inst.q_base = q_base;
    inst.ext_base = ext_base;
    inst.full_base = full_base;
    p.instances_.push_back(std::move(inst));
  }
  p.finalize();
  return p;
}

void EncryptionParams::save_body(std::ostream& os) const {
  write_u64(os, n_);
  write_f64(os, sigma_);
  write_u64(os, beta_log2_);
  write_u64(os, instances_.size());
  for (const auto& inst : instances_) {
    write_u64(os, inst.t);
    write_u64(os, inst.q_base.size());
    for (std::size_t i = 0; i < inst.q_base.size(); ++i) write_u64(os, inst.q_base.mod(i).value());
    write_u64(os, inst.ext_base.size());
    for (std::size_t i = 0; i < inst.ext_base.size(); ++i) write_u64(os, inst.ext_base.mod(i).value());
  }
}

void EncryptionParams::save(std::ostream& os) const {
  os.write("PMPR", 4);
  save_body(os);
}

EncryptionParams EncryptionParams::load(std::istream& is) {
  expect_magic(is, "PMPR");
  EncryptionParams p;
  p.n_ = read_u64(is);
  p.sigma_ = read_f64(is);
  p.noise_bound_ = static_cast<std::int64_t>(std::ceil(6.0 * p.sigma_));
  p.beta_log2_ = static_cast<unsigned>(read_u64(is));
  p.beta_ = 1ULL << p.beta_log2_;
  const std::uint64_t ninst = read_u64(is);
  for (std::uint64_t i = 0; i < ninst; ++i) {
    SchemeInstance inst;
    inst.t = read_u64(is);
    std::vector<std::uint64_t> qv(read_u64(is));
    for (auto& v : qv) v = read_u64(is);
    std::vector<std::uint64_t> ev(read_u64(is));
    for (auto& v : ev) v = read_u64(is);
    inst.q_base = RnsBase::create(qv, p.n_);
    inst.ext_base = RnsBase::create(ev, p.n_);
    inst.full_base = inst.q_base.concat(inst.ext_base);
    p.instances_.push_back(std::move(inst));
  }
  p.finalize();
  return p;
}

// --- small internal helpers -------------------------------------------------

namespace {

void check_digest(std::uint64_t got, const EncryptionParams& params, const char* what) {
  if (got != params.digest())
    throw std::invalid_argument(std::string(what) + ": parameter digest mismatch");
}

void check_plaintext(const Plaintext& m, const EncryptionParams& params) {
  if (m.coeffs.size() != params.instance_count())
    throw std::invalid_argument("plaintext: instance count mismatch");
  for (std::size_t i = 0; i < m.coeffs.size(); ++i) {
    if (m.coeffs[i].size() != params.n())
      throw std::invalid_argument("plaintext: wrong length");
    for (auto v : m.coeffs[i])
      if (v >= params.instance(i).t) throw std::invalid_argument("plaintext: coefficient out of range");
  }
}

// Small signed polynomial (ternary secret / noise) lifted into the base.
RnsPoly lift_small(const RnsBase& base, const std::vector<std::int64_t>& v) {
  RnsPoly p(base);
  for (std::size_t i = 0; i < base.size(); ++i) {
    const Modulus& m = base.mod(i);
    std::uint64_t* r = p.row(i);
    for (std::size_t c = 0; c < v.size(); ++c) r[c] = m.reduce_i64(v[c]);
  }
  return p;
}

std::vector<std::int64_t> sample_ternary(std::size_t n, SeededRng& rng) {
  std::vector<std::int64_t> v(n);
  for (auto& x : v) x = rng.ternary();
  return v;
}

std::vector<std::int64_t> sample_noise(std::size_t n, const EncryptionParams& params,
                                       SeededRng& rng, bool zero) {
  std::vector<std::int64_t> v(n, 0);
  if (!zero)
    for (auto& x : v) x = rng.discrete_gaussian(params.sigma(), params.noise_bound());
  return v;
}

// Delta * m as a base-q polynomial (m given as coefficients in [0, t)).
RnsPoly delta_times(const SchemeInstance& inst, const std::vector<std::uint64_t>& m) {
  const InstanceCtx& cx = *inst.ctx;
  RnsPoly p(inst.q_base);
  for (std::size_t j = 0; j < inst.q_base.size(); ++j) {
    const Modulus& qm = inst.q_base.mod(j);
    std::uint64_t* r = p.row(j);
    for (std::size_t c = 0; c < m.size(); ++c)
      r[c] = qm.mul_shoup(m[c] % qm.value(), cx.delta_mod[j], cx.delta_shoup[j]);
  }
  return p;
}

// Centered lift of a plaintext polynomial into base q: coefficients above t/2
// become negative representatives.
RnsPoly lift_plain_centered(const SchemeInstance& inst, const std::vector<std::uint64_t>& m) {
  const std::uint64_t t = inst.t;
  const std::uint64_t t_half = t >> 1;
  RnsPoly p(inst.q_base);
  for (std::size_t j = 0; j < inst.q_base.size(); ++j) {
    const Modulus& qm = inst.q_base.mod(j);
    std::uint64_t* r = p.row(j);
    for (std::size_t c = 0; c < m.size(); ++c) {
      const std::uint64_t v = m[c];
      r[c] = v <= t_half ? v : qm.sub(0, t - v);
    }
  }
  return p;
}

// Lift a base-q polynomial to q u B; both modes produce identical residues.
RnsPoly lift_to_full(const SchemeInstance& inst, const RnsPoly& p, RnsArithMode mode) {
  const std::size_t n = p.n();
  const std::size_t kq = inst.q_base.size();
  RnsPoly out(inst.full_base);
  for (std::size_t i = 0; i < kq; ++i)
    std::copy(p.row(i), p.row(i) + n, out.row(i));
  if (mode == RnsArithMode::fast) {
    inst.ctx->lift.apply(p.row(0), n, out.row(kq));
  } else {
    for (std::size_t c = 0; c < n; ++c) {
      const BigInt v = inst.q_base.reconstruct_centered(p.row(0) + c, n);
      for (std::size_t j = 0; j < inst.ext_base.size(); ++j) {
        const std::uint64_t pj = inst.ext_base.mod(j).value();
        BigInt r = v % pj;
        if (r < 0) r += pj;
        out.at(kq + j, c) = static_cast<std::uint64_t>(r);
      }
    }
  }
  return out;
}

// round(t * V / q) on base q, coefficient by coefficient, where V is the
// centered value represented by d_full over q u B. Fast mode: Garner digits,
// one 512-bit division per coefficient, word arithmetic elsewhere.
void scale_round_fast(const SchemeInstance& inst, const RnsPoly& d_full, RnsPoly& out) {
  const InstanceCtx& cx = *inst.ctx;
  const std::size_t kq = inst.q_base.size();
  const std::size_t ke = inst.ext_base.size();
  const std::size_t n = d_full.n();
  std::uint64_t digits[64];
  const std::uint64_t* base_ptr = d_full.data().data();
  for (std::size_t c = 0; c < n; ++c) {
    inst.full_base.to_digits(base_ptr + c, n, digits);
    const bool negative = inst.full_base.digits_exceed_half(digits);
    // V = R + q * A with R = low mixed-radix part in [0, q).
    uint512_t r = digits[kq - 1];
    for (std::size_t i = kq - 1; i-- > 0;) {
      r *= cx.q_values[i];
      r += digits[i];
    }
    const uint512_t num = r * cx.t + cx.q_half512;
    const auto z0 = static_cast<std::uint64_t>(num / cx.q512);  // <= t
    for (std::size_t j = 0; j < kq; ++j) {
      const Modulus& qm = inst.q_base.mod(j);
      // A mod q_j by Horner over the extension digits.
      std::uint64_t a = digits[kq + ke - 1] % qm.value();
      for (std::size_t i = ke - 1; i-- > 0;) {
        a = qm.mul_shoup(a, cx.ext_m_mod[j][i], cx.ext_m_shoup[j][i]);
        a = qm.add(a, digits[kq + i] % qm.value());
      }
      // round(t V_c / q) = t*A + z0 - [V negative] * t*E  (mod q_j).
      std::uint64_t z = qm.add(qm.mul_shoup(a, cx.t_mod[j], cx.t_shoup[j]), z0 % qm.value());
      if (negative) z = qm.sub(z, cx.te_mod[j]);
      out.at(j, c) = z;
    }
  }
}

// Reference mode: full multiprecision reconstruction and textbook rescale.
void scale_round_reference(const SchemeInstance& inst, const RnsPoly& d_full, RnsPoly& out) {
  const std::size_t n = d_full.n();
  const BigInt t(inst.t);
  for (std::size_t c = 0; c < n; ++c) {
    const BigInt v = inst.full_base.reconstruct_centered(d_full.data().data() + c, n);
    const BigInt z = floor_div(t * v + inst.q_half, inst.q);
    const auto res = inst.q_base.decompose(z);
    for (std::size_t j = 0; j < inst.q_base.size(); ++j) out.at(j, c) = res[j];
  }
}

// c0 + c1 s (+ c2 s^2) in the coefficient domain for one instance.
RnsPoly raw_decrypt_poly(const RnsPoly& c0, const RnsPoly& c1, const RnsPoly* c2,
                         const RnsPoly& s_eval) {
  RnsPoly w = c0;
  RnsPoly t1 = c1;
  t1.to_eval();
  if (c2 == nullptr) {
    RnsPoly prod = dyadic(t1, s_eval);
    prod.to_coeff();
    add_inplace(w, prod);
    return w;
  }
  RnsPoly s2 = dyadic(s_eval, s_eval);
  RnsPoly t2 = *c2;
  t2.to_eval();
  RnsPoly acc = dyadic(t1, s_eval);
  dyadic_accum(acc, t2, s2);
  acc.to_coeff();
  add_inplace(w, acc);
  return w;
}

// Decode w = Delta*m + noise to coefficients mod t via the single-division
// trick: m_c = floor((t*R + floor(q/2)) / q) mod t with R the [0, q) value.
std::vector<std::uint64_t> round_to_plain(const SchemeInstance& inst, const RnsPoly& w) {
  const InstanceCtx& cx = *inst.ctx;
  const std::size_t kq = inst.q_base.size();
  const std::size_t n = w.n();
  std::vector<std::uint64_t> out(n);
  std::uint64_t digits[64];
  const std::uint64_t* base_ptr = w.data().data();
  for (std::size_t c = 0; c < n; ++c) {
    inst.q_base.to_digits(base_ptr + c, n, digits);
    uint512_t r = digits[kq - 1];
    for (std::size_t i = kq - 1; i-- > 0;) {
      r *= cx.q_values[i];
      r += digits[i];
    }
    const uint512_t num = r * cx.t + cx.q_half512;
    // The centered correction is a multiple of t, so it vanishes mod t.
    out[c] = static_cast<std::uint64_t>(num / cx.q512) % cx.t;
  }
  return out;
}

OpCounters merged_history(const Ciphertext& a, const Ciphertext& b) {
  // A ciphertext multiplied or added with itself carries its history once.
  return (&a == &b) ? a.ops : sum(a.ops, b.ops);
}

}  // namespace

// --- keygen -----------------------------------------------------------------

KeySet keygen(const EncryptionParams& params, std::uint64_t seed, const EncHooks& hooks) {
  SeededRng rng(derive_seed(seed, "fv-keygen"));
  KeySet keys;
  keys.sk.params_digest = params.digest();
  keys.pk.params_digest = params.digest();
  keys.rk.params_digest = params.digest();
  const std::size_t n = params.n();
  for (std::size_t i = 0; i < params.instance_count(); ++i) {
    const SchemeInstance& inst = params.instance(i);
    RnsPoly s = lift_small(inst.q_base, sample_ternary(n, rng));
    RnsPoly s_eval = s;
    s_eval.to_eval();

    RnsPoly p0 = RnsPoly::random_uniform(inst.q_base, rng);
    RnsPoly p0_eval = p0;
    p0_eval.to_eval();
    RnsPoly ek = lift_small(inst.q_base, sample_noise(n, params, rng, hooks.zero_noise));
    ek.to_eval();
    // p1 = -(s p0 + e'), so p1 + s p0 is small.
    RnsPoly p1_eval = dyadic(s_eval, p0_eval);
    add_inplace(p1_eval, ek);
    negate_inplace(p1_eval);

    keys.sk.s_coeff.push_back(s);
    keys.sk.s_eval.push_back(s_eval);
    keys.pk.p0_eval.push_back(std::move(p0_eval));
    keys.pk.p1_eval.push_back(std::move(p1_eval));

    // Evaluation key: for each base-beta digit, g_i = -(a_i s + e_i) + beta^i s^2.
    RnsPoly s2_eval = dyadic(s_eval, s_eval);
    std::vector<RnsPoly> a_vec, g_vec;
    BigInt beta_pow = 1;
    for (std::size_t d = 0; d <= inst.ell; ++d) {
      RnsPoly a = RnsPoly::random_uniform(inst.q_base, rng);
      a.to_eval();
      RnsPoly e = lift_small(inst.q_base, sample_noise(n, params, rng, hooks.zero_noise));
      e.to_eval();
      RnsPoly g = dyadic(a, s_eval);
      add_inplace(g, e);
      negate_inplace(g);
      RnsPoly term = s2_eval;
      const auto bp = inst.q_base.decompose(beta_pow);
      for (std::size_t j = 0; j < inst.q_base.size(); ++j) {
        const Modulus& qm = inst.q_base.mod(j);
        const std::uint64_t c = bp[j];
        const std::uint64_t cs = qm.shoup(c);
        std::uint64_t* rr = term.row(j);
        for (std::size_t cc = 0; cc < n; ++cc) rr[cc] = qm.mul_shoup(rr[cc], c, cs);
      }
      add_inplace(g, term);
      a_vec.push_back(std::move(a));
      g_vec.push_back(std::move(g));
      beta_pow *= params.beta();
    }
    keys.rk.a_eval.push_back(std::move(a_vec));
    keys.rk.g_eval.push_back(std::move(g_vec));
  }
  return keys;
}

// --- encrypt / decrypt ------------------------------------------------------

Ciphertext encrypt(const Plaintext& m, const PublicKey& pk, const EncryptionParams& params,
                   SeededRng& rng, const EncHooks& hooks) {
  check_digest(pk.params_digest, params, "encrypt");
  check_plaintext(m, params);
  Ciphertext ct;
  ct.params_digest = params.digest();
  ct.scale_bits = m.scale_bits;
  const std::size_t n = params.n();
  for (std::size_t i = 0; i < params.instance_count(); ++i) {
    const SchemeInstance& inst = params.instance(i);
    std::vector<std::int64_t> u(n, 0);
    if (!hooks.zero_u) u = sample_ternary(n, rng);
    RnsPoly u_eval = lift_small(inst.q_base, u);
    u_eval.to_eval();
    RnsPoly e1 = lift_small(inst.q_base, sample_noise(n, params, rng, hooks.zero_noise));
    RnsPoly e2 = lift_small(inst.q_base, sample_noise(n, params, rng, hooks.zero_noise));

    RnsPoly c0 = dyadic(pk.p1_eval[i], u_eval);
    c0.to_coeff();
    add_inplace(c0, e1);
    add_inplace(c0, delta_times(inst, m.coeffs[i]));

    RnsPoly c1 = dyadic(pk.p0_eval[i], u_eval);
    c1.to_coeff();
    add_inplace(c1, e2);

    ct.c0.push_back(std::move(c0));
    ct.c1.push_back(std::move(c1));
  }
  return ct;
}

Ciphertext encrypt_trivial(const Plaintext& m, const EncryptionParams& params) {
  check_plaintext(m, params);
  Ciphertext ct;
  ct.params_digest = params.digest();
  ct.scale_bits = m.scale_bits;
  for (std::size_t i = 0; i < params.instance_count(); ++i) {
    const SchemeInstance& inst = params.instance(i);
    ct.c0.push_back(delta_times(inst, m.coeffs[i]));
    ct.c1.emplace_back(inst.q_base);
  }
  return ct;
}

Plaintext decrypt(const Ciphertext& ct, const SecretKey& sk, const EncryptionParams& params) {
  check_digest(ct.params_digest, params, "decrypt");
  Plaintext out;
  out.scale_bits = ct.scale_bits;
  for (std::size_t i = 0; i < params.instance_count(); ++i) {
    const RnsPoly w = raw_decrypt_poly(ct.c0[i], ct.c1[i], nullptr, sk.s_eval[i]);
    out.coeffs.push_back(round_to_plain(params.instance(i), w));
  }
  return out;
}

Plaintext decrypt_prod(const CiphertextProd& ct, const SecretKey& sk,
                       const EncryptionParams& params) {
  check_digest(ct.params_digest, params, "decrypt_prod");
  Plaintext out;
  out.scale_bits = ct.scale_bits;
  for (std::size_t i = 0; i < params.instance_count(); ++i) {
    const RnsPoly w = raw_decrypt_poly(ct.c0[i], ct.c1[i], &ct.c2[i], sk.s_eval[i]);
    out.coeffs.push_back(round_to_plain(params.instance(i), w));
  }
  return out;
}

// --- homomorphic ops --------------------------------------------------------

Ciphertext add_ct(const Ciphertext& a, const Ciphertext& b) {
  if (a.params_digest != b.params_digest)
    throw std::invalid_argument("add_ct: parameter digest mismatch");
  if (a.scale_bits != b.scale_bits)
    throw std::invalid_argument("add_ct: operands carry different scales");
  Ciphertext out = a;
  for (std::size_t i = 0; i < a.c0.size(); ++i) {
    add_inplace(out.c0[i], b.c0[i]);
    add_inplace(out.c1[i], b.c1[i]);
  }
  out.ops = merged_history(a, b);
  out.ops.add += 1;
  return out;
}

Ciphertext add_plain(const Ciphertext& a, const Plaintext& m, const EncryptionParams& params) {
  check_digest(a.params_digest, params, "add_plain");
  check_plaintext(m, params);
  if (a.scale_bits != m.scale_bits)
    throw std::invalid_argument("add_plain: operands carry different scales");
  Ciphertext out = a;
  for (std::size_t i = 0; i < params.instance_count(); ++i)
    add_inplace(out.c0[i], delta_times(params.instance(i), m.coeffs[i]));
  out.ops.add += 1;
  return out;
}

namespace {

struct MonomialForm {
  std::size_t x_power = 0;
  std::size_t two_power = 0;
  bool negate = false;
};

// The shift path accepts exactly +/- 2^i x^j; recognize it or fail loudly.
MonomialForm parse_monomial(const Plaintext& m, const EncryptionParams& params) {
  MonomialForm form;
  bool found = false;
  const auto& c0 = m.coeffs[0];
  for (std::size_t c = 0; c < c0.size(); ++c) {
    if (c0[c] == 0) continue;
    if (found) throw std::invalid_argument("shift path: plaintext has more than one term");
    found = true;
    form.x_power = c;
  }
  if (!found) throw std::invalid_argument("shift path: zero plaintext is not a monomial");
  for (std::size_t i = 0; i < m.coeffs.size(); ++i) {
    const std::uint64_t t = params.instance(i).t;
    const std::uint64_t v = m.coeffs[i][form.x_power];
    std::uint64_t mag;
    bool neg;
    if (v != 0 && (v & (v - 1)) == 0) {
      mag = v;
      neg = false;
    } else if ((t - v) != 0 && ((t - v) & (t - v - 1)) == 0) {
      mag = t - v;
      neg = true;
    } else {
      throw std::invalid_argument("shift path: coefficient is not a signed power of two");
    }
    for (std::size_t c = 0; c < m.coeffs[i].size(); ++c)
      if (c != form.x_power && m.coeffs[i][c] != 0)
        throw std::invalid_argument("shift path: plaintext has more than one term");
    const auto e = static_cast<std::size_t>(boost::multiprecision::msb(BigInt(mag)));
    if (i == 0) {
      form.two_power = e;
      form.negate = neg;
    } else if (form.two_power != e || form.negate != neg) {
      throw std::invalid_argument("shift path: instances disagree on the monomial");
    }
  }
  return form;
}

}  // namespace

Ciphertext mul_plain(const Ciphertext& a, const Plaintext& m, const EncryptionParams& params,
                     PlainMulPath path) {
  check_digest(a.params_digest, params, "mul_plain");
  check_plaintext(m, params);
  Ciphertext out = a;
  out.scale_bits = a.scale_bits + m.scale_bits;
  out.ops.plain_mul += 1;
  if (path == PlainMulPath::shift) {
    const MonomialForm form = parse_monomial(m, params);
    for (std::size_t i = 0; i < params.instance_count(); ++i) {
      mul_monomial_inplace(out.c0[i], form.x_power, form.two_power, form.negate);
      mul_monomial_inplace(out.c1[i], form.x_power, form.two_power, form.negate);
    }
    return out;
  }
  for (std::size_t i = 0; i < params.instance_count(); ++i) {
    RnsPoly mp = lift_plain_centered(params.instance(i), m.coeffs[i]);
    mp.to_eval();
    for (RnsPoly* comp : {&out.c0[i], &out.c1[i]}) {
      comp->to_eval();
      RnsPoly r = dyadic(*comp, mp);
      r.to_coeff();
      *comp = std::move(r);
    }
  }
  return out;
}

CiphertextProd mul_ct_no_relin(const Ciphertext& a, const Ciphertext& b,
                               const EncryptionParams& params, RnsArithMode mode) {
  check_digest(a.params_digest, params, "mul_ct");
  if (a.params_digest != b.params_digest)
    throw std::invalid_argument("mul_ct: parameter digest mismatch");
  CiphertextProd prod;
  prod.params_digest = params.digest();
  prod.scale_bits = a.scale_bits + b.scale_bits;
  prod.ops = merged_history(a, b);
  prod.ops.ct_mul += 1;
  for (std::size_t i = 0; i < params.instance_count(); ++i) {
    const SchemeInstance& inst = params.instance(i);
    RnsPoly a0 = lift_to_full(inst, a.c0[i], mode);
    RnsPoly a1 = lift_to_full(inst, a.c1[i], mode);
    RnsPoly b0 = lift_to_full(inst, b.c0[i], mode);
    RnsPoly b1 = lift_to_full(inst, b.c1[i], mode);
    a0.to_eval();
    a1.to_eval();
    b0.to_eval();
    b1.to_eval();
    RnsPoly d0 = dyadic(a0, b0);
    RnsPoly d1 = dyadic(a0, b1);
    dyadic_accum(d1, a1, b0);
    RnsPoly d2 = dyadic(a1, b1);
    d0.to_coeff();
    d1.to_coeff();
    d2.to_coeff();
    RnsPoly o0(inst.q_base), o1(inst.q_base), o2(inst.q_base);
    if (mode == RnsArithMode::fast) {
      scale_round_fast(inst, d0, o0);
      scale_round_fast(inst, d1, o1);
      scale_round_fast(inst, d2, o2);
    } else {
      scale_round_reference(inst, d0, o0);
      scale_round_reference(inst, d1, o1);
      scale_round_reference(inst, d2, o2);
    }
    prod.c0.push_back(std::move(o0));
    prod.c1.push_back(std::move(o1));
    prod.c2.push_back(std::move(o2));
  }
  return prod;
}

Ciphertext relinearize(const CiphertextProd& prod, const RelinKey& rk,
                       const EncryptionParams& params) {
  check_digest(prod.params_digest, params, "relinearize");
  check_digest(rk.params_digest, params, "relinearize");
  Ciphertext out;
  out.params_digest = prod.params_digest;
  out.scale_bits = prod.scale_bits;
  out.ops = prod.ops;
  const std::size_t n = params.n();
  const unsigned beta_bits = static_cast<unsigned>(boost::multiprecision::msb(BigInt(params.beta())));
  const std::uint64_t beta_mask = params.beta() - 1;
  for (std::size_t i = 0; i < params.instance_count(); ++i) {
    const SchemeInstance& inst = params.instance(i);
    const InstanceCtx& cx = *inst.ctx;
    const std::size_t kq = inst.q_base.size();
    const std::size_t ndigits = inst.ell + 1;

    // Base-beta digits of the [0, q) value of each c2 coefficient.
    std::vector<RnsPoly> dp(ndigits, RnsPoly(inst.q_base));
    std::uint64_t garner[64];
    const std::uint64_t* base_ptr = prod.c2[i].data().data();
    for (std::size_t c = 0; c < n; ++c) {
      inst.q_base.to_digits(base_ptr + c, n, garner);
      uint512_t w = garner[kq - 1];
      for (std::size_t j = kq - 1; j-- > 0;) {
        w *= cx.q_values[j];
        w += garner[j];
      }
      for (std::size_t d = 0; d < ndigits; ++d) {
        const auto digit = static_cast<std::uint64_t>(w & beta_mask);
        w >>= beta_bits;
        for (std::size_t j = 0; j < kq; ++j) dp[d].at(j, c) = digit;
      }
    }

    RnsPoly acc0(inst.q_base, PolyDomain::eval);
    RnsPoly acc1(inst.q_base, PolyDomain::eval);
    for (std::size_t d = 0; d < ndigits; ++d) {
      dp[d].to_eval();
      dyadic_accum(acc0, rk.g_eval[i][d], dp[d]);
      dyadic_accum(acc1, rk.a_eval[i][d], dp[d]);
    }
    acc0.to_coeff();
    acc1.to_coeff();
    RnsPoly r0 = prod.c0[i];
    RnsPoly r1 = prod.c1[i];
    add_inplace(r0, acc0);
    add_inplace(r1, acc1);
    out.c0.push_back(std::move(r0));
    out.c1.push_back(std::move(r1));
  }
  return out;
}

Ciphertext mul_ct(const Ciphertext& a, const Ciphertext& b, const RelinKey& rk,
                  const EncryptionParams& params, RnsArithMode mode) {
  return relinearize(mul_ct_no_relin(a, b, params, mode), rk, params);
}

double noise_budget_bits(const Ciphertext& ct, const SecretKey& sk,
                         const EncryptionParams& params) {
  check_digest(ct.params_digest, params, "noise_budget");
  double budget = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < params.instance_count(); ++i) {
    const SchemeInstance& inst = params.instance(i);
    const RnsPoly w = raw_decrypt_poly(ct.c0[i], ct.c1[i], nullptr, sk.s_eval[i]);
    const BigInt t(inst.t);
    BigInt max_rho = 0;
    for (std::size_t c = 0; c < params.n(); ++c) {
      const BigInt v = inst.q_base.reconstruct_centered(w.data().data() + c, params.n());
      const BigInt m = floor_div(t * v + inst.q_half, inst.q);
      BigInt rho = t * v - inst.q * m;  // |rho| <= q/2 at the decision boundary
      if (rho < 0) rho = -rho;
      if (rho > max_rho) max_rho = rho;
    }
    const double b = max_rho == 0 ? log2_big(inst.q) - 1.0
                                  : log2_big(inst.q) - 1.0 - log2_big(max_rho);
    budget = std::min(budget, b);
  }
  return std::max(budget, 0.0);
}

// --- serialization ----------------------------------------------------------

namespace {

void save_poly_vec(std::ostream& os, const std::vector<RnsPoly>& v) {
  write_u64(os, v.size());
  for (const auto& p : v) p.save(os);
}

std::vector<RnsPoly> load_poly_vec(std::istream& is) {
  std::vector<RnsPoly> v(read_u64(is));
  for (auto& p : v) p = RnsPoly::load(is);
  return v;
}

void check_expected(std::uint64_t digest, const EncryptionParams* expect, const char* what) {
  if (expect != nullptr && digest != expect->digest())
    throw std::runtime_error(std::string(what) + ": file was created under different parameters");
}

}  // namespace

void Ciphertext::save(std::ostream& os) const {
  os.write("PMCT", 4);
  write_u64(os, params_digest);
  write_i64(os, scale_bits);
  write_u64(os, ops.ct_mul);
  write_u64(os, ops.plain_mul);
  write_u64(os, ops.add);
  save_poly_vec(os, c0);
  save_poly_vec(os, c1);
}

Ciphertext Ciphertext::load(std::istream& is, const EncryptionParams* expect) {
  expect_magic(is, "PMCT");
  Ciphertext ct;
  ct.params_digest = read_u64(is);
  check_expected(ct.params_digest, expect, "ciphertext");
  ct.scale_bits = static_cast<std::int32_t>(read_i64(is));
  ct.ops.ct_mul = read_u64(is);
  ct.ops.plain_mul = read_u64(is);
  ct.ops.add = read_u64(is);
  ct.c0 = load_poly_vec(is);
  ct.c1 = load_poly_vec(is);
  return ct;
}

void SecretKey::save(std::ostream& os) const {
  os.write("PMSK", 4);
  write_u64(os, params_digest);
  save_poly_vec(os, s_coeff);
}

SecretKey SecretKey::load(std::istream& is, const EncryptionParams* expect) {
  expect_magic(is, "PMSK");
  SecretKey sk;
  sk.params_digest = read_u64(is);
  check_expected(sk.params_digest, expect, "secret key");
  sk.s_coeff = load_poly_vec(is);
  for (const auto& s : sk.s_coeff) {
    RnsPoly e = s;
    e.to_eval();
    sk.s_eval.push_back(std::move(e));
  }
  return sk;
}

void PublicKey::save(std::ostream& os) const {
  os.write("PMPK", 4);
  write_u64(os, params_digest);
  save_poly_vec(os, p0_eval);
  save_poly_vec(os, p1_eval);
}

PublicKey PublicKey::load(std::istream& is, const EncryptionParams* expect) {
  expect_magic(is, "PMPK");
  PublicKey pk;
  pk.params_digest = read_u64(is);
  check_expected(pk.params_digest, expect, "public key");
  pk.p0_eval = load_poly_vec(is);
  pk.p1_eval = load_poly_vec(is);
  return pk;
}

void RelinKey::save(std::ostream& os) const {
  os.write("PMRK", 4);
  write_u64(os, params_digest);
  write_u64(os, a_eval.size());
  for (std::size_t i = 0; i < a_eval.size(); ++i) {
    save_poly_vec(os, a_eval[i]);
    save_poly_vec(os, g_eval[i]);
  }
}

RelinKey RelinKey::load(std::istream& is, const EncryptionParams* expect) {
  expect_magic(is, "PMRK");
  RelinKey rk;
  rk.params_digest = read_u64(is);
  check_expected(rk.params_digest, expect, "relinearization key");
  const std::uint64_t ninst = read_u64(is);
  for (std::uint64_t i = 0; i < ninst; ++i) {
    rk.a_eval.push_back(load_poly_vec(is));
    rk.g_eval.push_back(load_poly_vec(is));
  }
  return rk;
}

}  // namespace privml
