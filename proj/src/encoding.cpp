#include "privml/encoding.hpp"

#include <cmath>

namespace privml {

std::vector<std::uint64_t> encode_int_poly(const BigInt& z, std::uint64_t t, std::size_t n) {
  std::vector<std::uint64_t> coeffs(n, 0);
  if (z == 0) return coeffs;
  const bool negative = z < 0;
  BigInt mag = negative ? -z : z;
  const std::size_t bits = boost::multiprecision::msb(mag) + 1;
  if (bits > n)
    throw EncodingError("encode_int: value needs " + std::to_string(bits) +
                        " base-2 digits but the ring degree is " + std::to_string(n));
  for (std::size_t i = 0; i < bits; ++i)
    if (boost::multiprecision::bit_test(mag, static_cast<unsigned>(i)))
      coeffs[i] = negative ? t - 1 : 1;
  return coeffs;
}

BigInt decode_int_poly(const std::vector<std::uint64_t>& coeffs, std::uint64_t t) {
  const std::uint64_t half = t >> 1;
  BigInt acc = 0;
  for (std::size_t i = coeffs.size(); i-- > 0;) {
    const std::uint64_t v = coeffs[i];
    if (v >= t) throw EncodingError("decode_int: coefficient out of range for modulus");
    acc <<= 1;
    if (v <= half)
      acc += v;
    else
      acc -= t - v;
  }
  return acc;
}

Plaintext encode_int(const BigInt& z, const EncryptionParams& params, std::int32_t scale_bits) {
  Plaintext m;
  m.scale_bits = scale_bits;
  m.coeffs.reserve(params.instance_count());
  for (std::size_t i = 0; i < params.instance_count(); ++i)
    m.coeffs.push_back(encode_int_poly(z, params.instance(i).t, params.n()));
  return m;
}

BigInt crt_combine_centered(const std::vector<std::uint64_t>& residues,
                            const std::vector<std::uint64_t>& moduli) {
  if (residues.size() != moduli.size() || moduli.empty())
    throw EncodingError("crt_combine: residue/modulus count mismatch");
  for (std::size_t i = 0; i < moduli.size(); ++i)
    if (residues[i] >= moduli[i])
      throw EncodingError("crt_combine: residue exceeds its modulus");
  // Garner-style incremental combination.
  BigInt value = residues[0];
  BigInt prefix = moduli[0];
  for (std::size_t i = 1; i < moduli.size(); ++i) {
    const std::uint64_t ti = moduli[i];
    const auto pref_mod = static_cast<std::uint64_t>(prefix % ti);
    const std::uint64_t inv = powmod_u64(pref_mod, ti - 2, ti);  // moduli are prime
    const auto val_mod = static_cast<std::uint64_t>(value % ti);
    const std::uint64_t diff = (residues[i] + ti - val_mod) % ti;
    value += prefix * mulmod_u64(diff, inv, ti);
    prefix *= ti;
  }
  if (value > (prefix >> 1)) value -= prefix;
  return value;
}

BigInt decode_int(const Plaintext& m, const EncryptionParams& params) {
  const std::size_t ninst = params.instance_count();
  if (m.coeffs.size() != ninst) throw EncodingError("decode_int: instance count mismatch");
  std::vector<std::uint64_t> moduli(ninst);
  for (std::size_t i = 0; i < ninst; ++i) {
    moduli[i] = params.instance(i).t;
    if (m.coeffs[i].size() != params.n()) throw EncodingError("decode_int: wrong length");
  }
  BigInt acc = 0;
  std::vector<std::uint64_t> residues(ninst);
  for (std::size_t c = params.n(); c-- > 0;) {
    for (std::size_t i = 0; i < ninst; ++i) residues[i] = m.coeffs[i][c];
    acc <<= 1;
    acc += crt_combine_centered(residues, moduli);
  }
  return acc;
}

Plaintext encode_fixed(double value, std::int32_t scale_bits, const EncryptionParams& params) {
  if (!std::isfinite(value)) throw EncodingError("encode_fixed: non-finite value");
  const double scaled = value * std::ldexp(1.0, scale_bits);
  if (std::abs(scaled) > 9.0e18) throw EncodingError("encode_fixed: scaled value out of range");
  return encode_int(BigInt(std::llround(scaled)), params, scale_bits);
}

double decode_fixed_at(const Plaintext& m, std::int32_t scale_bits,
                       const EncryptionParams& params) {
  const BigInt z = decode_int(m, params);
  return std::ldexp(static_cast<double>(z), -scale_bits);
}

double decode_fixed(const Plaintext& m, const EncryptionParams& params) {
  return decode_fixed_at(m, m.scale_bits, params);
}

// --- capacity analysis ------------------------------------------------------

IntPolyBound IntPolyBound::of_encoded(std::size_t bit_length) {
  IntPolyBound b;
  b.coeff = bit_length == 0 ? 0 : 1;
  b.degree = bit_length == 0 ? 0 : bit_length - 1;
  return b;
}

IntPolyBound IntPolyBound::operator+(const IntPolyBound& o) const {
  IntPolyBound b;
  b.coeff = coeff + o.coeff;
  b.degree = std::max(degree, o.degree);
  return b;
}

IntPolyBound IntPolyBound::operator*(const IntPolyBound& o) const {
  IntPolyBound b;
  // Convolution coefficient k sums at most min(deg_a, deg_b) + 1 products.
  b.coeff = coeff * o.coeff * (std::min(degree, o.degree) + 1);
  b.degree = degree + o.degree;
  return b;
}

IntPolyBound IntPolyBound::shifted(std::size_t k) const {
  IntPolyBound b = *this;
  b.degree += k;
  return b;
}

CapacityReport check_capacity(std::vector<StageBound> stages, const BigInt& t_product,
                              std::size_t n) {
  CapacityReport rep;
  rep.coeff_limit = t_product >> 1;
  rep.degree_limit = n - 1;
  rep.stages = std::move(stages);
  for (const auto& st : rep.stages) {
    if (st.bound.coeff > rep.coeff_limit || st.bound.degree > rep.degree_limit) {
      rep.ok = false;
      rep.failed_stage = st.name;
      break;
    }
  }
  return rep;
}

}  // namespace privml
