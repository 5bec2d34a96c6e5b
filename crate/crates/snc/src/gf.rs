//! Exact arithmetic in GF(2^q) for q in {1, 2, 3, 4, 8}.
//!
//! Elements live in the low `q` bits of a `u8`. Addition is XOR in every
//! binary extension field; multiplication is carry-less polynomial product
//! reduced by the field's irreducible polynomial. A [`FieldSpec`] builds its
//! log/antilog and full multiplication tables once at construction, so the
//! per-symbol cost during elimination is a table lookup.
//!
//! `FieldSpec` is immutable after construction and safe to share across
//! threads; all operations are pure.

use crate::error::{Error, Result};

/// Reduction polynomials, as bitmasks including the degree-q term.
/// q=2: x^2+x+1, q=3: x^3+x+1, q=4: x^4+x+1, q=8: x^8+x^4+x^3+x^2+1.
const REDUCTION_POLYS: [(u8, u16); 5] = [
    (1, 0b10),
    (2, 0b111),
    (3, 0b1011),
    (4, 0b1_0011),
    (8, 0b1_0001_1101),
];

/// Symbol sizes the crate supports.
pub const SUPPORTED_Q: [u8; 5] = [1, 2, 3, 4, 8];

/// A Galois field GF(2^q) with precomputed arithmetic tables.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    q: u8,
    order: u16,
    reduction_poly: u16,
    log: Vec<u8>,
    exp: Vec<u8>,
    mul_table: Vec<u8>,
}

/// Carry-less multiply of two field elements, reduced bit by bit.
fn poly_mul_mod(a: u16, b: u16, poly: u16, q: u8) -> u8 {
    let mut a = u32::from(a);
    let b = u32::from(b);
    let poly = u32::from(poly);
    let mut acc = 0u32;
    for i in 0..q {
        if (b >> i) & 1 == 1 {
            acc ^= a;
        }
        a <<= 1;
        if (a >> q) & 1 == 1 {
            a ^= poly;
        }
    }
    acc as u8
}

impl FieldSpec {
    /// Builds the field for a supported symbol size.
    pub fn new(q: u8) -> Result<Self> {
        let &(_, reduction_poly) = REDUCTION_POLYS
            .iter()
            .find(|&&(qq, _)| qq == q)
            .ok_or_else(|| {
                Error::InvalidParameter(format!("q={q} not supported (expected one of 1,2,3,4,8)"))
            })?;
        let order = 1u16 << q;
        let group = usize::from(order) - 1;

        // Find a generator of the multiplicative group by walking powers.
        let mut generator = 0u8;
        for g in 1..order {
            let mut x = 1u8;
            let mut seen = 0usize;
            loop {
                x = poly_mul_mod(u16::from(x), g, reduction_poly, q);
                seen += 1;
                if x == 1 {
                    break;
                }
            }
            if seen == group {
                generator = g as u8;
                break;
            }
        }
        debug_assert!(
            generator != 0,
            "irreducible polynomial has a primitive root"
        );

        let mut log = vec![0u8; usize::from(order)];
        let mut exp = vec![0u8; 2 * group];
        let mut x = 1u8;
        for i in 0..group {
            exp[i] = x;
            exp[i + group] = x;
            log[usize::from(x)] = i as u8;
            x = poly_mul_mod(u16::from(x), u16::from(generator), reduction_poly, q);
        }

        let mut mul_table = vec![0u8; usize::from(order) * usize::from(order)];
        for a in 0..order {
            for b in 0..order {
                mul_table[usize::from(a) * usize::from(order) + usize::from(b)] =
                    poly_mul_mod(a, b, reduction_poly, q);
            }
        }

        Ok(FieldSpec {
            q,
            order,
            reduction_poly,
            log,
            exp,
            mul_table,
        })
    }

    /// Bits per symbol.
    #[inline]
    pub fn q(&self) -> u8 {
        self.q
    }

    /// Number of field elements, 2^q.
    #[inline]
    pub fn order(&self) -> u16 {
        self.order
    }

    /// The irreducible reduction polynomial as a bitmask.
    #[inline]
    pub fn reduction_poly(&self) -> u16 {
        self.reduction_poly
    }

    #[inline]
    fn check(&self, value: u8) -> Result<()> {
        if u16::from(value) < self.order {
            Ok(())
        } else {
            Err(Error::ElementOutOfRange { value, q: self.q })
        }
    }

    /// Field addition (XOR). Self-inverse in characteristic 2.
    pub fn add(&self, a: u8, b: u8) -> Result<u8> {
        self.check(a)?;
        self.check(b)?;
        Ok(a ^ b)
    }

    /// Field multiplication.
    pub fn mul(&self, a: u8, b: u8) -> Result<u8> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul_raw(a, b))
    }

    /// Multiplicative inverse of a non-zero element.
    pub fn inv(&self, a: u8) -> Result<u8> {
        self.check(a)?;
        if a == 0 {
            return Err(Error::ZeroInverse);
        }
        Ok(self.inv_raw(a))
    }

    /// Unchecked multiply; callers guarantee both operands are in range.
    #[inline]
    pub(crate) fn mul_raw(&self, a: u8, b: u8) -> u8 {
        self.mul_table[usize::from(a) * usize::from(self.order) + usize::from(b)]
    }

    /// Unchecked inverse of a non-zero element.
    #[inline]
    pub(crate) fn inv_raw(&self, a: u8) -> u8 {
        debug_assert!(a != 0);
        let group = usize::from(self.order) - 1;
        self.exp[group - usize::from(self.log[usize::from(a)])]
    }

    /// Row of the multiplication table for a fixed scalar, indexed by the
    /// other operand. The workhorse of row-scaling loops.
    #[inline]
    pub(crate) fn scalar_row(&self, s: u8) -> &[u8] {
        let n = usize::from(self.order);
        &self.mul_table[usize::from(s) * n..(usize::from(s) + 1) * n]
    }
}
