#include "privml/polyring.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <ostream>
#include <istream>
#include <stdexcept>

namespace privml {

// --- scalar helpers --------------------------------------------------------

std::uint64_t powmod_u64(std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
  std::uint64_t result = 1 % m;
  base %= m;
  while (exp) {
    if (exp & 1) result = mulmod_u64(result, base, m);
    base = mulmod_u64(base, base, m);
    exp >>= 1;
  }
  return result;
}

bool is_prime_u64(std::uint64_t x) {
  if (x < 2) return false;
  for (std::uint64_t p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (x == p) return true;
    if (x % p == 0) return false;
  }
  std::uint64_t d = x - 1;
  unsigned r = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++r;
  }
  // This base set is a proven deterministic witness set for all 64-bit inputs.
  for (std::uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    std::uint64_t y = powmod_u64(a, d, x);
    if (y == 1 || y == x - 1) continue;
    bool composite = true;
    for (unsigned i = 1; i < r; ++i) {
      y = mulmod_u64(y, y, x);
      if (y == x - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

std::size_t bit_reverse(std::size_t x, unsigned bits) {
  std::size_t r = 0;
  for (unsigned i = 0; i < bits; ++i) {
    r = (r << 1) | (x & 1);
    x >>= 1;
  }
  return r;
}

std::vector<std::uint64_t> find_ntt_primes(unsigned bit_size, std::size_t count, std::size_t n,
                                           std::vector<std::uint64_t> exclude) {
  if (bit_size < 3 || bit_size > 62) throw std::invalid_argument("find_ntt_primes: bit_size out of range");
  const std::uint64_t step = 2 * static_cast<std::uint64_t>(n);
  const std::uint64_t hi = (1ULL << bit_size) - 1;
  // Largest candidate of the form k*2n + 1 below 2^bit_size.
  std::uint64_t cand = hi - ((hi - 1) % step);
  std::vector<std::uint64_t> out;
  while (out.size() < count) {
    if (cand <= (1ULL << (bit_size - 1))) throw std::runtime_error("find_ntt_primes: range exhausted");
    if (is_prime_u64(cand) && std::find(exclude.begin(), exclude.end(), cand) == exclude.end())
      out.push_back(cand);
    cand -= step;
  }
  return out;
}

// --- Modulus ---------------------------------------------------------------

namespace {

unsigned log2_exact(std::size_t n) {
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("ring degree must be a power of two");
  unsigned l = 0;
  while ((std::size_t{1} << l) < n) ++l;
  return l;
}

// Deterministic search for a primitive 2n-th root of unity mod q.
std::uint64_t find_psi(std::uint64_t q, std::size_t n) {
  const std::uint64_t order = 2 * static_cast<std::uint64_t>(n);
  if ((q - 1) % order != 0) throw std::invalid_argument("modulus not congruent to 1 mod 2n");
  const std::uint64_t cofactor = (q - 1) / order;
  SeededRng rng(q ^ 0x9e3779b97f4a7c15ULL);
  for (int attempt = 0; attempt < 4096; ++attempt) {
    const std::uint64_t g = 2 + rng.uniform_below(q - 3);
    const std::uint64_t psi = powmod_u64(g, cofactor, q);
    // psi has order dividing 2n; it is primitive iff psi^n == -1.
    if (powmod_u64(psi, n, q) == q - 1) return psi;
  }
  throw std::runtime_error("find_psi: no primitive root found");
}

}  // namespace

Modulus::Modulus(std::uint64_t q, std::size_t n) : q_(q), two_q_(2 * q), n_(n) {
  if (q >= (1ULL << 62)) throw std::invalid_argument("modulus must be below 2^62 for lazy reduction");
  if (!is_prime_u64(q)) throw std::invalid_argument("modulus must be prime");
  logn_ = log2_exact(n);
  psi_ = find_psi(q, n);
  n_inv_ = inv(static_cast<std::uint64_t>(n % q));
  n_inv_shoup_ = shoup(n_inv_);

  psi_rev_.resize(n);
  psi_rev_shoup_.resize(n);
  ipsi_rev_.resize(n);
  ipsi_rev_shoup_.resize(n);
  std::uint64_t power = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = bit_reverse(i, logn_);
    psi_rev_[r] = power;
    power = mul(power, psi_);
  }
  for (std::size_t i = 0; i < n; ++i) {
    psi_rev_shoup_[i] = shoup(psi_rev_[i]);
    ipsi_rev_[i] = inv(psi_rev_[i]);
    ipsi_rev_shoup_[i] = shoup(ipsi_rev_[i]);
  }
}

std::uint64_t Modulus::inv(std::uint64_t a) const {
  if (a == 0) throw std::invalid_argument("inverse of zero");
  return pow(a, q_ - 2);
}

std::shared_ptr<const Modulus> Modulus::get(std::uint64_t value, std::size_t n) {
  static std::mutex mu;
  static std::map<std::pair<std::uint64_t, std::size_t>, std::shared_ptr<const Modulus>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(value, n);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto mod = std::shared_ptr<const Modulus>(new Modulus(value, n));
  cache.emplace(key, mod);
  return mod;
}

void Modulus::ntt_forward(std::uint64_t* a) const {
  // Cooley-Tukey stages with the psi twist folded into the twiddles; values
  // stay below 4q between stages (Harvey lazy reduction).
  std::size_t t = n_;
  for (std::size_t m = 1; m < n_; m <<= 1) {
    t >>= 1;
    for (std::size_t i = 0; i < m; ++i) {
      const std::uint64_t w = psi_rev_[m + i];
      const std::uint64_t ws = psi_rev_shoup_[m + i];
      std::uint64_t* x = a + 2 * i * t;
      std::uint64_t* y = x + t;
      for (std::size_t j = 0; j < t; ++j) {
        std::uint64_t u = x[j];
        if (u >= two_q_) u -= two_q_;
        const std::uint64_t v = mul_shoup_lazy(y[j], w, ws);
        x[j] = u + v;
        y[j] = u + two_q_ - v;
      }
    }
  }
  for (std::size_t j = 0; j < n_; ++j) {
    std::uint64_t v = a[j];
    if (v >= two_q_) v -= two_q_;
    if (v >= q_) v -= q_;
    a[j] = v;
  }
}

void Modulus::ntt_inverse(std::uint64_t* a) const {
  // Exact stage-by-stage inverse of ntt_forward (stages in reverse order,
  // Gentleman-Sande butterflies with the inverse twiddles); the accumulated
  // factor n is removed at the end.
  std::size_t t = 1;
  for (std::size_t m = n_ >> 1; m >= 1; m >>= 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const std::uint64_t w = ipsi_rev_[m + i];
      const std::uint64_t ws = ipsi_rev_shoup_[m + i];
      std::uint64_t* x = a + 2 * i * t;
      std::uint64_t* y = x + t;
      for (std::size_t j = 0; j < t; ++j) {
        const std::uint64_t u = x[j];
        const std::uint64_t v = y[j];
        std::uint64_t s = u + v;
        if (s >= two_q_) s -= two_q_;
        x[j] = s;
        y[j] = mul_shoup_lazy(u + two_q_ - v, w, ws);
      }
    }
    t <<= 1;
  }
  for (std::size_t j = 0; j < n_; ++j) {
    std::uint64_t v = mul_shoup_lazy(a[j], n_inv_, n_inv_shoup_);
    if (v >= q_) v -= q_;
    a[j] = v;
  }
}

// --- RnsBase ---------------------------------------------------------------

struct RnsBase::Tables {
  BigInt product;
  BigInt half;  // floor(product / 2)
  // Garner: inv[j][i] = (m_i)^{-1} mod m_j for i < j, with Shoup constants.
  std::vector<std::vector<std::uint64_t>> inv, inv_shoup;
  std::vector<std::uint64_t> half_digits;  // mixed-radix digits of floor(Q/2)
};

RnsBase::RnsBase(std::vector<std::shared_ptr<const Modulus>> mods) : mods_(std::move(mods)) {
  if (mods_.empty()) throw std::invalid_argument("RnsBase: empty modulus list");
  const std::size_t nn = mods_[0]->n();
  for (std::size_t i = 0; i < mods_.size(); ++i) {
    if (mods_[i]->n() != nn) throw std::invalid_argument("RnsBase: mixed ring degrees");
    for (std::size_t j = i + 1; j < mods_.size(); ++j)
      if (mods_[i]->value() == mods_[j]->value())
        throw std::invalid_argument("RnsBase: duplicate modulus");
  }
  auto tables = std::make_shared<Tables>();
  tables->product = 1;
  for (const auto& m : mods_) tables->product *= m->value();
  tables->half = tables->product >> 1;
  const std::size_t k = mods_.size();
  tables->inv.resize(k);
  tables->inv_shoup.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    tables->inv[j].resize(j);
    tables->inv_shoup[j].resize(j);
    for (std::size_t i = 0; i < j; ++i) {
      const Modulus& mj = *mods_[j];
      const std::uint64_t inv = mj.inv(mods_[i]->value() % mj.value());
      tables->inv[j][i] = inv;
      tables->inv_shoup[j][i] = mj.shoup(inv);
    }
  }
  tables_ = tables;
  // to_digits needs the inverse tables above, so fill half_digits last.
  std::vector<std::uint64_t> half_res(k);
  for (std::size_t i = 0; i < k; ++i)
    half_res[i] = static_cast<std::uint64_t>(tables->half % mods_[i]->value());
  std::vector<std::uint64_t> hd(k);
  to_digits(half_res.data(), 1, hd.data());
  tables->half_digits = std::move(hd);
}

RnsBase RnsBase::create(const std::vector<std::uint64_t>& primes, std::size_t n) {
  std::vector<std::shared_ptr<const Modulus>> mods;
  mods.reserve(primes.size());
  for (std::uint64_t p : primes) mods.push_back(Modulus::get(p, n));
  return RnsBase(std::move(mods));
}

const BigInt& RnsBase::product() const { return tables_->product; }
const BigInt& RnsBase::half_product() const { return tables_->half; }

bool RnsBase::same_moduli(const RnsBase& other) const {
  if (mods_.size() != other.mods_.size()) return false;
  for (std::size_t i = 0; i < mods_.size(); ++i)
    if (mods_[i]->value() != other.mods_[i]->value() || mods_[i]->n() != other.mods_[i]->n())
      return false;
  return true;
}

RnsBase RnsBase::concat(const RnsBase& other) const {
  std::vector<std::shared_ptr<const Modulus>> mods = mods_;
  mods.insert(mods.end(), other.mods_.begin(), other.mods_.end());
  return RnsBase(std::move(mods));
}

void RnsBase::to_digits(const std::uint64_t* residues, std::size_t stride,
                        std::uint64_t* digits) const {
  const std::size_t k = mods_.size();
  for (std::size_t j = 0; j < k; ++j) {
    const Modulus& mj = *mods_[j];
    std::uint64_t x = residues[j * stride];
    for (std::size_t i = 0; i < j; ++i) {
      const std::uint64_t di = digits[i] % mj.value();
      x = mj.mul_shoup(mj.sub(x, di), tables_->inv[j][i], tables_->inv_shoup[j][i]);
    }
    digits[j] = x;
  }
}

bool RnsBase::digits_exceed_half(const std::uint64_t* digits) const {
  const auto& hd = tables_->half_digits;
  for (std::size_t i = mods_.size(); i-- > 0;) {
    if (digits[i] > hd[i]) return true;
    if (digits[i] < hd[i]) return false;
  }
  return false;  // equal to floor(Q/2): still the positive representative
}

BigInt RnsBase::digits_to_bigint(const std::uint64_t* digits) const {
  BigInt v = 0;
  for (std::size_t i = mods_.size(); i-- > 0;) {
    v *= mods_[i]->value();
    v += digits[i];
  }
  return v;
}

BigInt RnsBase::reconstruct(const std::uint64_t* residues, std::size_t stride) const {
  std::vector<std::uint64_t> digits(mods_.size());
  to_digits(residues, stride, digits.data());
  return digits_to_bigint(digits.data());
}

BigInt RnsBase::reconstruct_centered(const std::uint64_t* residues, std::size_t stride) const {
  std::vector<std::uint64_t> digits(mods_.size());
  to_digits(residues, stride, digits.data());
  BigInt v = digits_to_bigint(digits.data());
  if (v > tables_->half) v -= tables_->product;
  return v;
}

std::vector<std::uint64_t> RnsBase::decompose(const BigInt& v) const {
  BigInt r = v % tables_->product;
  if (r < 0) r += tables_->product;
  std::vector<std::uint64_t> out(mods_.size());
  for (std::size_t i = 0; i < mods_.size(); ++i)
    out[i] = static_cast<std::uint64_t>(r % mods_[i]->value());
  return out;
}

// --- BaseExtension ---------------------------------------------------------

BaseExtension::BaseExtension(RnsBase src, RnsBase dst) : src_(std::move(src)), dst_(std::move(dst)) {
  const std::size_t ks = src_.size();
  const std::size_t kd = dst_.size();
  m_mod_p_.resize(kd);
  m_mod_p_shoup_.resize(kd);
  q_mod_p_.resize(kd);
  for (std::size_t j = 0; j < kd; ++j) {
    const Modulus& p = dst_.mod(j);
    m_mod_p_[j].resize(ks);
    m_mod_p_shoup_[j].resize(ks);
    for (std::size_t i = 0; i < ks; ++i) {
      const std::uint64_t mi = src_.mod(i).value() % p.value();
      m_mod_p_[j][i] = mi;
      m_mod_p_shoup_[j][i] = p.shoup(mi);
    }
    q_mod_p_[j] = static_cast<std::uint64_t>(src_.product() % p.value());
  }
}

void BaseExtension::apply(const std::uint64_t* residues, std::size_t n, std::uint64_t* out) const {
  const std::size_t ks = src_.size();
  const std::size_t kd = dst_.size();
  std::uint64_t digits[64];
  if (ks > 64) throw std::invalid_argument("BaseExtension: source base too large");
  for (std::size_t c = 0; c < n; ++c) {
    src_.to_digits(residues + c, n, digits);
    const bool negative = src_.digits_exceed_half(digits);
    for (std::size_t j = 0; j < kd; ++j) {
      const Modulus& p = dst_.mod(j);
      // Horner over the mixed radix: v = d_0 + m_0 (d_1 + m_1 (...)).
      std::uint64_t acc = digits[ks - 1] % p.value();
      for (std::size_t i = ks - 1; i-- > 0;) {
        acc = p.mul_shoup(acc, m_mod_p_[j][i], m_mod_p_shoup_[j][i]);
        acc = p.add(acc, digits[i] % p.value());
      }
      if (negative) acc = p.sub(acc, q_mod_p_[j]);
      out[j * n + c] = acc;
    }
  }
}

// --- RnsPoly ---------------------------------------------------------------

RnsPoly::RnsPoly(RnsBase base, PolyDomain domain)
    : base_(std::move(base)), domain_(domain), n_(base_.n()), data_(base_.size() * base_.n(), 0) {}

RnsPoly RnsPoly::random_uniform(const RnsBase& base, SeededRng& rng, PolyDomain domain) {
  RnsPoly p(base, domain);
  for (std::size_t i = 0; i < p.k(); ++i) {
    const std::uint64_t q = base.mod(i).value();
    std::uint64_t* r = p.row(i);
    for (std::size_t c = 0; c < p.n(); ++c) r[c] = rng.uniform_below(q);
  }
  return p;
}

void RnsPoly::to_eval() {
  if (domain_ != PolyDomain::coeff) throw std::logic_error("to_eval: poly not in coeff domain");
  for (std::size_t i = 0; i < k(); ++i) base_.mod(i).ntt_forward(row(i));
  domain_ = PolyDomain::eval;
}

void RnsPoly::to_coeff() {
  if (domain_ != PolyDomain::eval) throw std::logic_error("to_coeff: poly not in eval domain");
  for (std::size_t i = 0; i < k(); ++i) base_.mod(i).ntt_inverse(row(i));
  domain_ = PolyDomain::coeff;
}

bool RnsPoly::is_zero() const {
  return std::all_of(data_.begin(), data_.end(), [](std::uint64_t v) { return v == 0; });
}

void RnsPoly::save(std::ostream& os) const {
  os.write("PMR1", 4);
  write_u64(os, n_);
  write_u64(os, k());
  os.put(static_cast<char>(domain_));
  for (std::size_t i = 0; i < k(); ++i) write_u64(os, base_.mod(i).value());
  for (std::uint64_t v : data_) write_u64(os, v);
}

RnsPoly RnsPoly::load(std::istream& is) {
  expect_magic(is, "PMR1");
  const std::uint64_t n = read_u64(is);
  const std::uint64_t k = read_u64(is);
  const int dom = is.get();
  if (dom != 0 && dom != 1) throw std::runtime_error("RnsPoly: bad domain flag");
  std::vector<std::uint64_t> primes(k);
  for (auto& p : primes) p = read_u64(is);
  RnsPoly out(RnsBase::create(primes, n), static_cast<PolyDomain>(dom));
  for (std::size_t i = 0; i < k * n; ++i) {
    const std::uint64_t v = read_u64(is);
    if (v >= out.base().mod(i / n).value()) throw std::runtime_error("RnsPoly: residue out of range");
    out.data_[i] = v;
  }
  return out;
}

// --- elementwise ops -------------------------------------------------------

namespace {

void check_compatible(const RnsPoly& a, const RnsPoly& b) {
  if (!a.base().same_moduli(b.base())) throw std::invalid_argument("poly op: base mismatch");
  if (a.domain() != b.domain()) throw std::invalid_argument("poly op: domain mismatch");
}

}  // namespace

void add_inplace(RnsPoly& a, const RnsPoly& b) {
  check_compatible(a, b);
  for (std::size_t i = 0; i < a.k(); ++i) {
    const Modulus& m = a.base().mod(i);
    std::uint64_t* ra = a.row(i);
    const std::uint64_t* rb = b.row(i);
    for (std::size_t c = 0; c < a.n(); ++c) ra[c] = m.add(ra[c], rb[c]);
  }
}

void sub_inplace(RnsPoly& a, const RnsPoly& b) {
  check_compatible(a, b);
  for (std::size_t i = 0; i < a.k(); ++i) {
    const Modulus& m = a.base().mod(i);
    std::uint64_t* ra = a.row(i);
    const std::uint64_t* rb = b.row(i);
    for (std::size_t c = 0; c < a.n(); ++c) ra[c] = m.sub(ra[c], rb[c]);
  }
}

void negate_inplace(RnsPoly& a) {
  for (std::size_t i = 0; i < a.k(); ++i) {
    const Modulus& m = a.base().mod(i);
    std::uint64_t* ra = a.row(i);
    for (std::size_t c = 0; c < a.n(); ++c) ra[c] = m.neg(ra[c]);
  }
}

RnsPoly add(const RnsPoly& a, const RnsPoly& b) {
  RnsPoly out = a;
  add_inplace(out, b);
  return out;
}

RnsPoly sub(const RnsPoly& a, const RnsPoly& b) {
  RnsPoly out = a;
  sub_inplace(out, b);
  return out;
}

RnsPoly negate(const RnsPoly& a) {
  RnsPoly out = a;
  negate_inplace(out);
  return out;
}

void dyadic_accum(RnsPoly& acc, const RnsPoly& a, const RnsPoly& b) {
  check_compatible(a, b);
  if (a.domain() != PolyDomain::eval) throw std::invalid_argument("dyadic: operands must be in eval domain");
  for (std::size_t i = 0; i < a.k(); ++i) {
    const Modulus& m = acc.base().mod(i);
    std::uint64_t* r = acc.row(i);
    const std::uint64_t* ra = a.row(i);
    const std::uint64_t* rb = b.row(i);
    for (std::size_t c = 0; c < a.n(); ++c) r[c] = m.add(r[c], m.mul(ra[c], rb[c]));
  }
}

RnsPoly dyadic(const RnsPoly& a, const RnsPoly& b) {
  check_compatible(a, b);
  if (a.domain() != PolyDomain::eval) throw std::invalid_argument("dyadic: operands must be in eval domain");
  RnsPoly out(a.base(), PolyDomain::eval);
  for (std::size_t i = 0; i < a.k(); ++i) {
    const Modulus& m = a.base().mod(i);
    std::uint64_t* r = out.row(i);
    const std::uint64_t* ra = a.row(i);
    const std::uint64_t* rb = b.row(i);
    for (std::size_t c = 0; c < a.n(); ++c) r[c] = m.mul(ra[c], rb[c]);
  }
  return out;
}

namespace {

RnsPoly multiply_naive(const RnsPoly& a, const RnsPoly& b) {
  const std::size_t n = a.n();
  RnsPoly out(a.base(), PolyDomain::coeff);
  for (std::size_t i = 0; i < a.k(); ++i) {
    const Modulus& m = a.base().mod(i);
    const std::uint64_t* ra = a.row(i);
    const std::uint64_t* rb = b.row(i);
    std::uint64_t* r = out.row(i);
    for (std::size_t s = 0; s < n; ++s) {
      const std::uint64_t av = ra[s];
      if (av == 0) continue;
      for (std::size_t u = 0; u < n; ++u) {
        const std::uint64_t prod = m.mul(av, rb[u]);
        const std::size_t idx = s + u;
        if (idx < n)
          r[idx] = m.add(r[idx], prod);
        else
          r[idx - n] = m.sub(r[idx - n], prod);  // x^n = -1
      }
    }
  }
  return out;
}

}  // namespace

RnsPoly multiply(const RnsPoly& a, const RnsPoly& b, MulMethod method) {
  check_compatible(a, b);
  if (a.domain() != PolyDomain::coeff)
    throw std::invalid_argument("multiply: operands must be in coeff domain");
  if (method == MulMethod::naive) return multiply_naive(a, b);
  RnsPoly ea = a;
  RnsPoly eb = b;
  ea.to_eval();
  eb.to_eval();
  RnsPoly out = dyadic(ea, eb);
  out.to_coeff();
  return out;
}

void mul_monomial_inplace(RnsPoly& a, std::size_t x_power, std::size_t two_power, bool negate) {
  if (a.domain() != PolyDomain::coeff)
    throw std::invalid_argument("mul_monomial: poly must be in coeff domain");
  const std::size_t n = a.n();
  const std::size_t jp = x_power % (2 * n);  // x^(2n) = 1
  const std::size_t rot = jp % n;
  const bool block_flip = jp >= n;  // x^n = -1
  std::vector<std::uint64_t> tmp(n);
  for (std::size_t i = 0; i < a.k(); ++i) {
    const Modulus& m = a.base().mod(i);
    std::uint64_t* r = a.row(i);
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t dst = c + rot;
      const bool wrap = dst >= n;
      const std::size_t d = wrap ? dst - n : dst;
      bool flip = wrap ^ block_flip ^ negate;
      tmp[d] = flip ? m.neg(r[c]) : r[c];
    }
    std::copy(tmp.begin(), tmp.end(), r);
    // Doubling chain for the power of two.
    for (std::size_t e = 0; e < two_power; ++e)
      for (std::size_t c = 0; c < n; ++c) r[c] = m.add(r[c], r[c]);
  }
}

void mul_scalar_inplace(RnsPoly& a, std::uint64_t c) {
  for (std::size_t i = 0; i < a.k(); ++i) {
    const Modulus& m = a.base().mod(i);
    const std::uint64_t cv = c % m.value();
    const std::uint64_t cs = m.shoup(cv);
    std::uint64_t* r = a.row(i);
    for (std::size_t j = 0; j < a.n(); ++j) r[j] = m.mul_shoup(r[j], cv, cs);
  }
}

}  // namespace privml
