//! Residue prime systems for order finding with small-modulus arithmetic.
//!
//! Instead of exponentiating modulo one large composite, the computation is
//! carried out independently modulo many small primes `p_i` and recombined by
//! the Chinese remainder theorem. Because each modulus is small, every
//! modular multiplication can be replaced by an addition of discrete
//! logarithms: with `g_i` a generator of the multiplicative group of `p_i`
//! and `D_{i,k}` the logarithm of the `2^k`-th power residue of the base,
//! the exponentiation collapses to `g^e ≡ g_i^{Σ_k D_{i,k} e_k} (mod p_i)`.
//!
//! This module owns the classical side of that construction: prime
//! selection against a redundancy threshold, generator search, the
//! logarithm tables and CRT reconstruction.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Modular exponentiation on `u64` operands with a `u64` modulus.
pub fn modpow_u64(mut base: u64, mut exp: u64, modulus: u64) -> u64 {
    if modulus == 1 {
        return 0;
    }
    let mut acc: u64 = 1;
    base %= modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = ((acc as u128 * base as u128) % modulus as u128) as u64;
        }
        base = ((base as u128 * base as u128) % modulus as u128) as u64;
        exp >>= 1;
    }
    acc
}

/// Deterministic primality check by trial division; the prime widths used
/// here (a few tens of bits) keep this well inside interactive budgets.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    if n % 3 == 0 {
        return n == 3;
    }
    let mut d = 5u64;
    while d.checked_mul(d).map_or(false, |sq| sq <= n) {
        if n % d == 0 || n % (d + 2) == 0 {
            return false;
        }
        d += 6;
    }
    true
}

/// Distinct prime factors of `n` by trial division.
fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d.checked_mul(d).map_or(false, |sq| sq <= n) {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Smallest generator of the multiplicative group modulo the prime `p`.
///
/// Candidates are scanned in increasing order and accepted when their
/// multiplicative order is exactly `p - 1` (checked through the prime
/// factorisation of the group order). For `p = 2` the group is trivial and
/// the generator is `1`.
pub fn find_generator(p: u64) -> Result<u64> {
    if !is_prime_u64(p) {
        return Err(Error::NotPrime(p));
    }
    let order = p - 1;
    let factors = prime_factors(order);
    'cand: for g in 1..p {
        for &q in &factors {
            if modpow_u64(g, order / q, p) == 1 {
                continue 'cand;
            }
        }
        return Ok(g);
    }
    // Unreachable for prime p; kept as a defensive signal of an internal bug.
    Err(Error::NotPrime(p))
}

/// A residue prime system: the primes, their generators, CRT recombination
/// data and the discrete-logarithm substitution tables for a fixed base.
///
/// Serialized field names are part of the on-disk contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimeSystem {
    /// Composite whose multiplicative order structure is being probed.
    #[serde(with = "biguint_dec")]
    pub modulus_n: BigUint,
    /// Base of the exponentiation; coprime to `modulus_n`.
    pub base: u64,
    /// Selected primes, ascending, all of the requested bit width.
    pub primes: Vec<u64>,
    /// Smallest generator of each prime's multiplicative group.
    pub generators: Vec<u64>,
    /// CRT cofactors `P_i = L / p_i`.
    #[serde(with = "biguint_dec_vec")]
    pub crt_p: Vec<BigUint>,
    /// CRT inverses `r_i = P_i^{-1} mod p_i`.
    pub crt_r: Vec<u64>,
    /// `dlog_tables[i][k] = D_{i,k}` with `g_i^{D_{i,k}} ≡ g^{2^k} (mod p_i)`.
    pub dlog_tables: Vec<Vec<u64>>,
    /// Product of the selected primes.
    #[serde(with = "biguint_dec")]
    pub redundant_l: BigUint,
}

#[allow(non_snake_case)]
impl PrimeSystem {
    /// Builds a prime system for `modulus_n` from the smallest primes of
    /// exactly `prime_bits` bits, accumulating until the product reaches
    /// `modulus_n^redundancy_exponent`.
    ///
    /// The base is chosen as the smallest integer `≥ 2` coprime to the
    /// modulus and the logarithm tables cover `2 * bits(modulus_n)`
    /// exponent positions, the conventional exponent register length for
    /// order finding.
    pub fn build(modulus_n: &BigUint, prime_bits: u32, redundancy_exponent: u32) -> Result<Self> {
        let mut base = 2u64;
        while (modulus_n % BigUint::from(base)).is_zero() {
            base += 1;
        }
        let exponent_bits = 2 * modulus_n.bits() as u32;
        Self::build_with_base(modulus_n, base, prime_bits, redundancy_exponent, exponent_bits)
    }

    /// Fully parameterised constructor: explicit base and explicit number of
    /// tabulated exponent positions.
    ///
    /// Primes that divide the base are skipped: their power residues vanish
    /// and no logarithm exists for them.
    pub fn build_with_base(
        modulus_n: &BigUint,
        base: u64,
        prime_bits: u32,
        redundancy_exponent: u32,
        exponent_bits: u32,
    ) -> Result<Self> {
        assert!(prime_bits >= 2, "prime width must be at least 2 bits");
        let threshold = modulus_n.pow(redundancy_exponent);
        let lo = 1u64 << (prime_bits - 1);
        let hi = 1u64 << prime_bits;

        let mut primes = Vec::new();
        let mut product = BigUint::one();
        let mut available = 0usize;
        let mut p = lo;
        while product < threshold {
            if p >= hi {
                return Err(Error::NotEnoughPrimes { bits: prime_bits, available });
            }
            if is_prime_u64(p) {
                available += 1;
                if base % p != 0 {
                    primes.push(p);
                    product *= BigUint::from(p);
                }
            }
            p += 1;
        }

        let mut generators = Vec::with_capacity(primes.len());
        let mut crt_p = Vec::with_capacity(primes.len());
        let mut crt_r = Vec::with_capacity(primes.len());
        let mut dlog_tables = Vec::with_capacity(primes.len());
        for &p in &primes {
            let g_p = find_generator(p)?;
            generators.push(g_p);
            let cofactor = &product / BigUint::from(p);
            let cof_mod = biguint_mod_u64(&cofactor, p);
            crt_r.push(mod_inverse(cof_mod, p));
            crt_p.push(cofactor);
            dlog_tables.push(dlog_table_for(p, g_p, base, exponent_bits)?);
        }

        Ok(PrimeSystem {
            modulus_n: modulus_n.clone(),
            base,
            primes,
            generators,
            crt_p,
            crt_r,
            dlog_tables,
            redundant_l: product,
        })
    }

    /// Number of primes in the system.
    pub fn len(&self) -> usize {
        self.primes.len()
    }

    /// True when the system holds no primes (never produced by `build`).
    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    /// Reconstructs the unique value below `redundant_l` with the given
    /// residues, via `Σ a_i · P_i · r_i (mod L)`.
    pub fn crt_reconstruct(&self, residues: &[u64]) -> Result<BigUint> {
        if residues.len() != self.primes.len() {
            return Err(Error::ResidueCount { expected: self.primes.len(), got: residues.len() });
        }
        let mut acc = BigUint::zero();
        for (i, &a) in residues.iter().enumerate() {
            let term = &self.crt_p[i] * BigUint::from(a) * BigUint::from(self.crt_r[i]);
            acc += term;
        }
        Ok(acc % &self.redundant_l)
    }

    /// Discrete-logarithm table for prime index `i` against an arbitrary
    /// base: `table[k]` satisfies `g_i^{table[k]} ≡ base^{2^k} (mod p_i)`.
    pub fn dlog_table(&self, i: usize, base: u64, exponent_bits: u32) -> Result<Vec<u64>> {
        dlog_table_for(self.primes[i], self.generators[i], base, exponent_bits)
    }

    /// Short logarithm `S_i = Σ_k D_{i,k} e_k mod (p_i - 1)` for an
    /// exponent `e`, using the stored tables.
    pub fn short_logarithm(&self, i: usize, e: u64) -> u64 {
        let order = self.primes[i] - 1;
        let mut acc: u64 = 0;
        for (k, &d) in self.dlog_tables[i].iter().enumerate() {
            if (e >> k) & 1 == 1 {
                acc = ((acc as u128 + d as u128) % order as u128) as u64;
            }
        }
        acc
    }
}

/// Builds the logarithm table for one prime with a single sweep over the
/// cyclic group: all targets `base^{2^k} mod p` are collected first, then one
/// walk of the powers of the generator resolves every logarithm.
fn dlog_table_for(p: u64, generator: u64, base: u64, exponent_bits: u32) -> Result<Vec<u64>> {
    if base % p == 0 {
        return Err(Error::ZeroResidue { base, prime: p });
    }
    let mut targets = Vec::with_capacity(exponent_bits as usize);
    let mut cur = base % p;
    for _ in 0..exponent_bits {
        targets.push(cur);
        cur = ((cur as u128 * cur as u128) % p as u128) as u64;
    }

    let mut table = vec![u64::MAX; exponent_bits as usize];
    let mut remaining = exponent_bits as usize;
    let mut val = 1u64;
    let order = p - 1;
    for exp in 0..order.max(1) {
        for (k, &t) in targets.iter().enumerate() {
            if table[k] == u64::MAX && t == val {
                table[k] = exp;
                remaining -= 1;
            }
        }
        if remaining == 0 {
            break;
        }
        val = ((val as u128 * generator as u128) % p as u128) as u64;
    }
    if remaining > 0 {
        let k = table.iter().position(|&d| d == u64::MAX).unwrap();
        return Err(Error::NoDiscreteLog { value: targets[k], generator, prime: p });
    }
    Ok(table)
}

fn biguint_mod_u64(n: &BigUint, m: u64) -> u64 {
    let r = n % BigUint::from(m);
    r.to_u64_digits().first().copied().unwrap_or(0)
}

/// Modular inverse by the extended Euclidean algorithm; `a` must be coprime
/// to the prime modulus.
fn mod_inverse(a: u64, modulus: u64) -> u64 {
    let (mut old_r, mut r) = (a as i128, modulus as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    debug_assert_eq!(old_r, 1, "inverse requested for non-coprime operand");
    old_s.rem_euclid(modulus as i128) as u64
}

mod biguint_dec {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let raw = String::deserialize(d)?;
        BigUint::from_str(&raw).map_err(serde::de::Error::custom)
    }
}

mod biguint_dec_vec {
    use num_bigint::BigUint;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for item in v {
            seq.serialize_element(&item.to_string())?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter().map(|t| BigUint::from_str(t).map_err(serde::de::Error::custom)).collect()
    }
}
