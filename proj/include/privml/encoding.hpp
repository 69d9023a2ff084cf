#pragma once

// Base-2 integer encoding into plaintext polynomials and the matching
// decoders. An integer's binary digits become 0/1 coefficients (t-1 for
// negative values); decoding lifts coefficients to the centered range and
// evaluates at x = 2. With two scheme instances the per-coefficient residues
// are CRT-combined mod t1*t2 first, which is what gives the pipeline its
// headroom: homomorphic circuits only need the *coefficients* (not the final
// value) to stay inside the combined modulus.
//
// Fixed-point values ride on the same encoder via an explicit scale: r is
// stored as round(r * 2^s) with s recorded in the plaintext and maintained
// by the scheme ops (adds require equal scales, multiplies add them).
//
// IntPolyBound implements the static worst-case coefficient/degree growth
// analysis used to validate a circuit against the plaintext capacity before
// running it.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "privml/fvrns.hpp"

namespace privml {

struct EncodingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- single-polynomial forms ------------------------------------------------

// Binary expansion of z into coefficients over Z_t; negative values flip each
// digit to t-1. Throws EncodingError if |z| needs more than n digits.
std::vector<std::uint64_t> encode_int_poly(const BigInt& z, std::uint64_t t, std::size_t n);

// Centered lift + evaluation at x = 2 (exact, multiprecision).
BigInt decode_int_poly(const std::vector<std::uint64_t>& coeffs, std::uint64_t t);

// --- plaintext-level forms --------------------------------------------------

Plaintext encode_int(const BigInt& z, const EncryptionParams& params,
                     std::int32_t scale_bits = 0);

// Coefficient-wise CRT across instances, centered mod t1*t2*..., then
// evaluation at x = 2. Exact for any circuit that passed the capacity check.
BigInt decode_int(const Plaintext& m, const EncryptionParams& params);

Plaintext encode_fixed(double value, std::int32_t scale_bits, const EncryptionParams& params);

// decode_int divided by 2^scale; the scale is taken from the plaintext (as
// accumulated by the homomorphic ops) or overridden explicitly.
double decode_fixed(const Plaintext& m, const EncryptionParams& params);
double decode_fixed_at(const Plaintext& m, std::int32_t scale_bits,
                       const EncryptionParams& params);

// Value-level CRT of a residue vector to the centered representative; used by
// the decoders and directly testable against toy cases.
BigInt crt_combine_centered(const std::vector<std::uint64_t>& residues,
                            const std::vector<std::uint64_t>& moduli);

// --- static capacity analysis ----------------------------------------------

// Worst-case envelope of an integer polynomial flowing through the encrypted
// circuit: max absolute coefficient and max degree. Products use the exact
// convolution term count; no wrap-around is modeled because the degree limit
// forbids it.
struct IntPolyBound {
  BigInt coeff = 0;
  std::size_t degree = 0;

  // Envelope of a freshly encoded integer of the given bit length.
  static IntPolyBound of_encoded(std::size_t bit_length);
  IntPolyBound operator+(const IntPolyBound& o) const;
  IntPolyBound operator*(const IntPolyBound& o) const;
  IntPolyBound shifted(std::size_t k) const;  // times x^k
};

struct StageBound {
  std::string name;
  IntPolyBound bound;
};

struct CapacityReport {
  bool ok = true;
  std::string failed_stage;
  std::vector<StageBound> stages;
  BigInt coeff_limit;            // floor(t_product / 2)
  std::size_t degree_limit = 0;  // n - 1
};

// Validates every stage's envelope against the plaintext capacity: centered
// coefficients must fit in (-t_product/2, t_product/2] and degrees must stay
// below n. Reports the first violating stage.
CapacityReport check_capacity(std::vector<StageBound> stages, const BigInt& t_product,
                              std::size_t n);

}  // namespace privml
