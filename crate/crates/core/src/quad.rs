//! Gauss-Legendre quadrature: fixed composite rules and an adaptive driver.

use std::collections::BinaryHeap;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use thiserror::Error;

/// Nodes of the rule used by [`adaptive`].
pub const ADAPTIVE_NODES: usize = 10;
/// Nodes per interval of the composite rule used for error-bound integrals.
pub const COMPOSITE_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand is not finite near x = {at}")]
    NonFinite { at: f64 },
    #[error("adaptive quadrature did not converge on [{a}, {b}]")]
    NoConvergence { a: f64, b: f64 },
}

fn rule(nodes: usize) -> &'static GaussLegendre {
    static TEN: OnceLock<GaussLegendre> = OnceLock::new();
    static THIRTY_TWO: OnceLock<GaussLegendre> = OnceLock::new();
    let make = || GaussLegendre::new(NonZeroUsize::new(nodes).expect("nonzero"));
    match nodes {
        ADAPTIVE_NODES => TEN.get_or_init(make),
        COMPOSITE_NODES => THIRTY_TWO.get_or_init(make),
        _ => panic!("unsupported rule size {nodes}"),
    }
}

/// One application of the `nodes`-point rule on `[a, b]`.
pub fn gauss<F: FnMut(f64) -> f64>(nodes: usize, a: f64, b: f64, f: F) -> f64 {
    rule(nodes).integrate(a, b, f)
}

/// `nodes`-point rule on each of `pieces` equal subintervals of `[a, b]`.
pub fn composite<F: FnMut(f64) -> f64>(nodes: usize, a: f64, b: f64, pieces: usize, mut f: F) -> f64 {
    let pieces = pieces.max(1);
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let lo = a + w * i as f64;
            let hi = if i + 1 == pieces { b } else { lo + w };
            gauss(nodes, lo, hi, &mut f)
        })
        .sum()
}

/// Integral of `f` over `[a, b]` to within `max(abs_tol, rel_tol |I|)`.
///
/// Globally adaptive: the subinterval with the largest error estimate is
/// bisected until the summed estimates meet the tolerance.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let whole = gauss(ADAPTIVE_NODES, a, b, &mut f);
    let first = Piece::split(&mut f, a, b, whole)?;
    let mut heap = BinaryHeap::from([first]);
    for _ in 0..MAX_PIECES {
        let total: f64 = heap.iter().map(|p| p.val).sum();
        let err: f64 = heap.iter().map(|p| p.err).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            heap.push(Piece { err: 0.0, ..worst });
            continue;
        }
        heap.push(Piece::split(&mut f, worst.a, m, worst.left)?);
        heap.push(Piece::split(&mut f, m, worst.b, worst.right)?);
    }
    Err(QuadError::NoConvergence { a, b })
}

/// Maximum number of bisections performed by [`adaptive`].
pub const MAX_PIECES: usize = 20_000;

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    left: f64,
    right: f64,
    val: f64,
    err: f64,
}

impl Piece {
    fn split<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, whole: f64) -> Result<Piece, QuadError> {
        let m = 0.5 * (a + b);
        let left = gauss(ADAPTIVE_NODES, a, m, &mut *f);
        let right = gauss(ADAPTIVE_NODES, m, b, &mut *f);
        let val = left + right;
        if !(val.is_finite() && whole.is_finite()) {
            return Err(QuadError::NonFinite { at: m });
        }
        Ok(Piece {
            a,
            b,
            left,
            right,
            val,
            err: (val - whole).abs(),
        })
    }
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// [`adaptive`] over consecutive pieces `[p_0, p_1], [p_1, p_2], ...`.
pub fn adaptive_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    let mut total = 0.0;
    for w in points.windows(2) {
        total += adaptive(&mut f, w[0], w[1], abs_tol, rel_tol)?;
    }
    Ok(total)
}
