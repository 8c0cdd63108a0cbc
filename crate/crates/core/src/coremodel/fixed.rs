use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// Number of fractional bits. Changing this rebuilds the whole emulator in a
/// different Q format.
pub const FRAC_BITS: u32 = 16;
const SCALE: f64 = (1u64 << FRAC_BITS) as f64;

/// Signed Q16.16 fixed-point number. All arithmetic saturates.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed32(i32);

impl Fixed32 {
    pub const ZERO: Fixed32 = Fixed32(0);
    pub const ONE: Fixed32 = Fixed32(1 << FRAC_BITS);
    pub const MAX: Fixed32 = Fixed32(i32::MAX);
    pub const MIN: Fixed32 = Fixed32(i32::MIN);
    /// Smallest positive value.
    pub const EPSILON: Fixed32 = Fixed32(1);

    pub const fn from_raw(raw: i32) -> Self {
        Fixed32(raw)
    }

    pub const fn raw(self) -> i32 {
        self.0
    }

    /// Bit pattern as carried in a packet's Value field.
    pub const fn to_bits(self) -> u32 {
        self.0 as u32
    }

    pub const fn from_bits(bits: u32) -> Self {
        Fixed32(bits as i32)
    }

    /// Quantizes by truncation toward negative infinity; NaN maps to zero.
    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() {
            return Fixed32::ZERO;
        }
        Fixed32(saturate((v * SCALE).floor()))
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / SCALE
    }

    pub fn saturating_add(self, rhs: Self) -> Self {
        Fixed32(self.0.saturating_add(rhs.0))
    }

    pub fn saturating_sub(self, rhs: Self) -> Self {
        Fixed32(self.0.saturating_sub(rhs.0))
    }

    /// Product widened to 64 bits and rounded to nearest.
    pub fn saturating_mul(self, rhs: Self) -> Self {
        Fixed32::from_wide(i64::from(self.0) * i64::from(rhs.0))
    }

    /// Quotient through a 64-bit intermediate. Division by zero saturates
    /// toward the sign of the dividend.
    pub fn saturating_div(self, rhs: Self) -> Self {
        if rhs.0 == 0 {
            return match self.0.signum() {
                1 => Fixed32::MAX,
                -1 => Fixed32::MIN,
                _ => Fixed32::ZERO,
            };
        }
        let q = (i64::from(self.0) << FRAC_BITS) / i64::from(rhs.0);
        Fixed32(q.clamp(i64::from(i32::MIN), i64::from(i32::MAX)) as i32)
    }

    /// Rounds a Q32.32 accumulator back to Q16.16.
    pub fn from_wide(acc: i64) -> Self {
        let rounded = acc.saturating_add(1 << (FRAC_BITS - 1)) >> FRAC_BITS;
        Fixed32(rounded.clamp(i64::from(i32::MIN), i64::from(i32::MAX)) as i32)
    }

    /// Raw Q32.32 product, for accumulating dot products before rounding.
    pub fn wide_mul(self, rhs: Self) -> i64 {
        i64::from(self.0) * i64::from(rhs.0)
    }
}

fn saturate(v: f64) -> i32 {
    if v >= f64::from(i32::MAX) {
        i32::MAX
    } else if v <= f64::from(i32::MIN) {
        i32::MIN
    } else {
        v as i32
    }
}

/// Dot product with a single rounding at the end.
pub fn dot(a: impl IntoIterator<Item = Fixed32>, b: impl IntoIterator<Item = Fixed32>) -> Fixed32 {
    let acc = a
        .into_iter()
        .zip(b)
        .fold(0i64, |acc, (x, y)| acc.saturating_add(x.wide_mul(y)));
    Fixed32::from_wide(acc)
}

impl Add for Fixed32 {
    type Output = Fixed32;
    fn add(self, rhs: Self) -> Self {
        self.saturating_add(rhs)
    }
}

impl Sub for Fixed32 {
    type Output = Fixed32;
    fn sub(self, rhs: Self) -> Self {
        self.saturating_sub(rhs)
    }
}

impl Mul for Fixed32 {
    type Output = Fixed32;
    fn mul(self, rhs: Self) -> Self {
        self.saturating_mul(rhs)
    }
}

impl Neg for Fixed32 {
    type Output = Fixed32;
    fn neg(self) -> Self {
        Fixed32(self.0.saturating_neg())
    }
}

impl fmt::Debug for Fixed32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fixed32({} = {:#010x})", self.to_f64(), self.to_bits())
    }
}

impl fmt::Display for Fixed32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}
