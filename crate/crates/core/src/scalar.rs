//! Scalar abstraction for the step-function arithmetic.
//!
//! Step functions are evaluated over any commutative algebra implementing
//! [`Scalar`]. Two instantiations ship with the crate: the real floats
//! (`f32`, `f64`) and [`Dual2`], the algebra of 2x2 upper-triangular
//! Jordan-type matrices `val*E + der*J`, where `J*J = 0`. Evaluating a
//! function on `Dual2 { val: a, der: 1 }` yields `(f(a), f'(a))`.

use std::fmt::{self, Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, One, ToPrimitive, Zero};
use thiserror::Error;

/// Real field underlying a [`Scalar`].
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static + Scalar<Real = Self>
{
    /// Lossy conversion from `f64`, used for literal constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Element of a commutative algebra over the reals.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Zero
    + One
    + Send
    + Sync
    + 'static
{
    type Real: Real;

    fn from_real(r: Self::Real) -> Self;

    /// Real part (the value component).
    fn re(self) -> Self::Real;

    /// Algebra norm used in truncation bounds.
    fn norm(self) -> Self::Real;

    /// Componentwise absolute value. `|x y|` is dominated by `majorant(x) * majorant(y)`
    /// componentwise, so bounds evaluated on majorants stay valid and `norm` is monotone in them.
    fn majorant(self) -> Self;

    fn scale(self, r: Self::Real) -> Self;

    fn exp(self) -> Self;

    fn sinh(self) -> Self;

    fn cosh(self) -> Self;

    fn is_finite(self) -> bool;

    /// The part of `self` that is not a real number: `self - re(self)`.
    fn infinitesimal(self) -> Self {
        self - Self::from_real(self.re())
    }
}

macro_rules! real_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            type Real = $t;

            #[inline]
            fn from_real(r: $t) -> Self {
                r
            }
            #[inline]
            fn re(self) -> $t {
                self
            }
            #[inline]
            fn norm(self) -> $t {
                self.abs()
            }
            #[inline]
            fn majorant(self) -> Self {
                self.abs()
            }
            #[inline]
            fn scale(self, r: $t) -> Self {
                self * r
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn sinh(self) -> Self {
                <$t>::sinh(self)
            }
            #[inline]
            fn cosh(self) -> Self {
                <$t>::cosh(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            #[inline]
            fn infinitesimal(self) -> Self {
                0.0
            }
        }
    };
}

real_scalar!(f32);
real_scalar!(f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ScalarError {
    #[error("exponential overflow")]
    Overflow,
    #[error("division by a dual number with zero value part")]
    ZeroDivisor,
}

/// First-order dual number: `val + der*J` with `J^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Dual2<T> {
    pub val: T,
    pub der: T,
}

impl<T: Real> Dual2<T> {
    #[inline]
    pub fn new(val: T, der: T) -> Self {
        Dual2 { val, der }
    }

    /// Embeds a constant (zero derivative part).
    #[inline]
    pub fn constant(val: T) -> Self {
        Dual2 { val, der: T::zero() }
    }

    /// Seeds an independent variable (unit derivative part).
    #[inline]
    pub fn variable(val: T) -> Self {
        Dual2 { val, der: T::one() }
    }

    /// The equivalent 2x2 upper-triangular matrix `[[val, der], [0, val]]`.
    pub fn to_matrix(self) -> [[T; 2]; 2] {
        [[self.val, self.der], [T::zero(), self.val]]
    }

    pub fn checked_exp(self) -> Result<Self, ScalarError> {
        let r = Scalar::exp(self);
        if Float::is_finite(r.val) && Float::is_finite(r.der) {
            Ok(r)
        } else {
            Err(ScalarError::Overflow)
        }
    }

    pub fn checked_div(self, rhs: Self) -> Result<Self, ScalarError> {
        if rhs.val == T::zero() {
            Err(ScalarError::ZeroDivisor)
        } else {
            Ok(self / rhs)
        }
    }

    pub fn recip(self) -> Self {
        let inv = T::one() / self.val;
        Dual2 {
            val: inv,
            der: -self.der * inv * inv,
        }
    }
}

impl<T: Real> Add for Dual2<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Dual2 {
            val: self.val + rhs.val,
            der: self.der + rhs.der,
        }
    }
}

impl<T: Real> Sub for Dual2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Dual2 {
            val: self.val - rhs.val,
            der: self.der - rhs.der,
        }
    }
}

impl<T: Real> Mul for Dual2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Dual2 {
            val: self.val * rhs.val,
            der: self.val * rhs.der + self.der * rhs.val,
        }
    }
}

impl<T: Real> Div for Dual2<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let val = self.val / rhs.val;
        Dual2 {
            val,
            der: (self.der * rhs.val - self.val * rhs.der) / (rhs.val * rhs.val),
        }
    }
}

impl<T: Real> Neg for Dual2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual2 {
            val: -self.val,
            der: -self.der,
        }
    }
}

impl<T: Real> AddAssign for Dual2<T> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real> SubAssign for Dual2<T> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Real> MulAssign for Dual2<T> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<T: Real> Sum for Dual2<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl<T: Real> Zero for Dual2<T> {
    fn zero() -> Self {
        Dual2::constant(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.val.is_zero() && self.der.is_zero()
    }
}

impl<T: Real> One for Dual2<T> {
    fn one() -> Self {
        Dual2::constant(T::one())
    }
}

impl<T: Real> Display for Dual2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} + {}J)", self.val, self.der)
    }
}

impl<T: Real> Scalar for Dual2<T> {
    type Real = T;

    #[inline]
    fn from_real(r: T) -> Self {
        Dual2::constant(r)
    }

    #[inline]
    fn re(self) -> T {
        self.val
    }

    /// `|val| + |der|`, the l1 norm. Unlike the max norm it is
    /// submultiplicative on this algebra, so Banach-algebra bounds hold.
    #[inline]
    fn norm(self) -> T {
        self.val.abs() + self.der.abs()
    }

    #[inline]
    fn majorant(self) -> Self {
        Dual2 {
            val: self.val.abs(),
            der: self.der.abs(),
        }
    }

    #[inline]
    fn scale(self, r: T) -> Self {
        Dual2 {
            val: self.val * r,
            der: self.der * r,
        }
    }

    #[inline]
    fn exp(self) -> Self {
        let e = Float::exp(self.val);
        Dual2 {
            val: e,
            der: self.der * e,
        }
    }

    #[inline]
    fn sinh(self) -> Self {
        Dual2 {
            val: Float::sinh(self.val),
            der: self.der * Float::cosh(self.val),
        }
    }

    #[inline]
    fn cosh(self) -> Self {
        Dual2 {
            val: Float::cosh(self.val),
            der: self.der * Float::sinh(self.val),
        }
    }

    #[inline]
    fn is_finite(self) -> bool {
        Float::is_finite(self.val) && Float::is_finite(self.der)
    }
}
