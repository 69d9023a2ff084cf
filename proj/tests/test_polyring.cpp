#include <doctest.h>

#include <sstream>

#include "privml/polyring.hpp"

using namespace privml;

namespace reference {

// Textbook CRT via explicit basis: v = sum_i r_i * (Q/m_i) * [(Q/m_i)^{-1}]_{m_i} mod Q.
// Independent of the Garner mixed-radix path under test.
BigInt crt(const std::vector<std::uint64_t>& residues, const std::vector<std::uint64_t>& moduli) {
  BigInt big_q = 1;
  for (auto m : moduli) big_q *= m;
  BigInt acc = 0;
  for (std::size_t i = 0; i < moduli.size(); ++i) {
    const BigInt qi = big_q / moduli[i];
    const auto qi_mod = static_cast<std::uint64_t>(qi % moduli[i]);
    const std::uint64_t inv = powmod_u64(qi_mod, moduli[i] - 2, moduli[i]);
    acc += BigInt(residues[i]) * qi * inv;
  }
  return acc % big_q;
}

}  // namespace reference

TEST_SUITE("polyring") {

TEST_CASE("prime search yields NTT-friendly primes") {
  const std::size_t n = 1024;
  auto primes = find_ntt_primes(62, 4, n);
  REQUIRE(primes.size() == 4);
  for (std::size_t i = 0; i < primes.size(); ++i) {
    CHECK(is_prime_u64(primes[i]));
    CHECK(primes[i] % (2 * n) == 1);
    CHECK(primes[i] > (1ULL << 61));
    CHECK(primes[i] < (1ULL << 62));
    if (i > 0) CHECK(primes[i] < primes[i - 1]);
  }
  // exclusion list is honored
  auto more = find_ntt_primes(62, 2, n, {primes[0]});
  CHECK(more[0] == primes[1]);
}

TEST_CASE("miller-rabin agrees with trial division below 100000") {
  auto slow_prime = [](std::uint64_t x) {
    if (x < 2) return false;
    for (std::uint64_t d = 2; d * d <= x; ++d)
      if (x % d == 0) return false;
    return true;
  };
  for (std::uint64_t x = 0; x < 100000; ++x) CHECK(is_prime_u64(x) == slow_prime(x));
}

TEST_CASE("ntt on toy ring n=8 q=17") {
  auto m = Modulus::get(17, 8);
  CHECK(powmod_u64(m->psi(), 8, 17) == 16);  // psi^n == -1

  SUBCASE("zero maps to zeros") {
    std::uint64_t a[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    m->ntt_forward(a);
    for (auto v : a) CHECK(v == 0);
  }
  SUBCASE("constant 1 maps to all-ones evaluations") {
    std::uint64_t a[8] = {1, 0, 0, 0, 0, 0, 0, 0};
    m->ntt_forward(a);
    for (auto v : a) CHECK(v == 1);
  }
  SUBCASE("forward then inverse is the identity") {
    SeededRng rng(7);
    std::uint64_t a[8], b[8];
    for (int i = 0; i < 8; ++i) a[i] = b[i] = rng.uniform_below(17);
    m->ntt_forward(a);
    m->ntt_inverse(a);
    for (int i = 0; i < 8; ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("ntt transform is linear") {
  const std::size_t n = 64;
  auto primes = find_ntt_primes(40, 2, n);
  RnsBase base = RnsBase::create(primes, n);
  SeededRng rng(11);
  RnsPoly a = RnsPoly::random_uniform(base, rng);
  RnsPoly b = RnsPoly::random_uniform(base, rng);
  RnsPoly s = add(a, b);
  a.to_eval();
  b.to_eval();
  s.to_eval();
  RnsPoly s2 = add(a, b);
  CHECK(s.data() == s2.data());
}

TEST_CASE("x^(n-1) times x wraps negacyclically to -1") {
  const std::size_t n = 8;
  RnsBase base = RnsBase::create({17}, n);
  RnsPoly a(base), b(base);
  a.at(0, n - 1) = 1;  // x^(n-1)
  b.at(0, 1) = 1;      // x
  for (auto method : {MulMethod::ntt, MulMethod::naive}) {
    RnsPoly c = multiply(a, b, method);
    CHECK(c.at(0, 0) == 16);  // -1 mod 17
    for (std::size_t i = 1; i < n; ++i) CHECK(c.at(0, i) == 0);
  }
}

TEST_CASE("ntt multiply matches schoolbook on random inputs") {
  SeededRng rng(2024);
  for (std::size_t n : {std::size_t{16}, std::size_t{256}}) {
    auto primes = find_ntt_primes(62, 2, n);
    RnsBase base = RnsBase::create(primes, n);
    for (int trial = 0; trial < 8; ++trial) {
      RnsPoly a = RnsPoly::random_uniform(base, rng);
      RnsPoly b = RnsPoly::random_uniform(base, rng);
      RnsPoly fast = multiply(a, b, MulMethod::ntt);
      RnsPoly slow = multiply(a, b, MulMethod::naive);
      REQUIRE(fast.data() == slow.data());
    }
  }
}

TEST_CASE("garner reconstruction matches explicit CRT") {
  const std::size_t n = 16;
  auto primes = find_ntt_primes(62, 4, n);
  RnsBase base = RnsBase::create(primes, n);
  SeededRng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint64_t> residues(4);
    for (std::size_t i = 0; i < 4; ++i) residues[i] = rng.uniform_below(primes[i]);
    CHECK(base.reconstruct(residues.data()) == reference::crt(residues, primes));
  }
}

TEST_CASE("centered reconstruction and decompose round-trip") {
  const std::size_t n = 16;
  auto primes = find_ntt_primes(50, 3, n);
  RnsBase base = RnsBase::create(primes, n);
  SeededRng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    // random signed value well inside (-Q/2, Q/2]
    BigInt v = BigInt(rng.next_u64()) * rng.next_u64();
    if (trial % 2) v = -v;
    auto res = base.decompose(v);
    CHECK(base.reconstruct_centered(res.data()) == v);
  }
  // boundary: -1 decomposes to all (m_i - 1)
  auto res = base.decompose(BigInt(-1));
  for (std::size_t i = 0; i < 3; ++i) CHECK(res[i] == primes[i] - 1);
  CHECK(base.reconstruct_centered(res.data()) == -1);
}

TEST_CASE("base extension reproduces centered value mod new primes") {
  const std::size_t n = 8;
  auto src_primes = find_ntt_primes(62, 4, n);
  auto dst_primes = find_ntt_primes(62, 3, n, src_primes);
  RnsBase src = RnsBase::create(src_primes, n);
  RnsBase dst = RnsBase::create(dst_primes, n);
  BaseExtension ext(src, dst);
  SeededRng rng(31337);
  RnsPoly a = RnsPoly::random_uniform(src, rng);
  RnsPoly out(dst);
  ext.apply(a.row(0), n, out.row(0));
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<std::uint64_t> col(4);
    for (std::size_t i = 0; i < 4; ++i) col[i] = a.at(i, c);
    const BigInt v = src.reconstruct_centered(col.data());
    for (std::size_t j = 0; j < 3; ++j) {
      BigInt expect = v % dst_primes[j];
      if (expect < 0) expect += dst_primes[j];
      CHECK(BigInt(out.at(j, c)) == expect);
    }
  }
}

TEST_CASE("monomial multiply agrees with generic multiply") {
  const std::size_t n = 32;
  auto primes = find_ntt_primes(55, 2, n);
  RnsBase base = RnsBase::create(primes, n);
  SeededRng rng(77);
  RnsPoly a = RnsPoly::random_uniform(base, rng);
  for (std::size_t xp : {std::size_t{0}, std::size_t{1}, std::size_t{5}, std::size_t{31}, std::size_t{40}}) {
    for (std::size_t tp : {std::size_t{0}, std::size_t{3}, std::size_t{20}}) {
      for (bool neg : {false, true}) {
        RnsPoly mono(base);
        const std::size_t rot = xp % n;
        const bool flip = ((xp / n) % 2 == 1) != neg;
        std::uint64_t scale = 1ULL << tp;
        for (std::size_t i = 0; i < base.size(); ++i) {
          const Modulus& m = base.mod(i);
          mono.at(i, rot) = flip ? m.neg(scale % m.value()) : scale % m.value();
        }
        RnsPoly expect = multiply(a, mono, MulMethod::naive);
        RnsPoly got = a;
        mul_monomial_inplace(got, xp, tp, neg);
        CHECK(got.data() == expect.data());
      }
    }
  }
}

TEST_CASE("serialization round-trips bit-identically") {
  const std::size_t n = 64;
  auto primes = find_ntt_primes(45, 3, n);
  RnsBase base = RnsBase::create(primes, n);
  SeededRng rng(123);
  RnsPoly a = RnsPoly::random_uniform(base, rng, PolyDomain::eval);
  std::ostringstream os1;
  a.save(os1);
  std::istringstream is(os1.str());
  RnsPoly b = RnsPoly::load(is);
  CHECK(b.domain() == PolyDomain::eval);
  CHECK(b.base().same_moduli(base));
  CHECK(b.data() == a.data());
  std::ostringstream os2;
  b.save(os2);
  CHECK(os1.str() == os2.str());
}

TEST_CASE("domain misuse is rejected") {
  RnsBase base = RnsBase::create(find_ntt_primes(30, 1, 16), 16);
  RnsPoly a(base), b(base);
  a.to_eval();
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(multiply(a, a), std::invalid_argument);
  CHECK_THROWS_AS(a.to_eval(), std::logic_error);
}

}  // TEST_SUITE
