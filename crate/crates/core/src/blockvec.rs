//! Block-structured vectors and the mixed ℓ₂,q norm family.
//!
//! A [`BlockVec`] is a flat, contiguous `Vec<f64>` paired with a shared
//! [`BlockLayout`] describing how it splits into per-robot (or per-edge)
//! sub-vectors. Blocks are borrowed slices into the flat storage.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default tolerance for the block-sparsity count (`q = 0`).
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

/// Immutable description of block sizes. Cheap to clone.
#[derive(Clone, PartialEq, Eq)]
pub struct BlockLayout {
    inner: Arc<LayoutInner>,
}

#[derive(PartialEq, Eq)]
struct LayoutInner {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl BlockLayout {
    pub fn new(block_dims: Vec<usize>) -> Result<Self> {
        if let Some(pos) = block_dims.iter().position(|&d| d == 0) {
            return Err(Error::invalid(
                "block_dims",
                format!("block {pos} has dimension 0"),
            ));
        }
        let mut offsets = Vec::with_capacity(block_dims.len() + 1);
        let mut acc = 0;
        for &d in &block_dims {
            offsets.push(acc);
            acc += d;
        }
        offsets.push(acc);
        Ok(Self {
            inner: Arc::new(LayoutInner {
                dims: block_dims,
                offsets,
                total: acc,
            }),
        })
    }

    /// `count` blocks of identical dimension `dim`.
    pub fn uniform(count: usize, dim: usize) -> Result<Self> {
        Self::new(vec![dim; count])
    }

    pub fn num_blocks(&self) -> usize {
        self.inner.dims.len()
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.inner.dims
    }

    pub fn block_dim(&self, i: usize) -> usize {
        self.inner.dims[i]
    }

    pub fn total_dim(&self) -> usize {
        self.inner.total
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.inner.offsets[i]..self.inner.offsets[i + 1]
    }
}

impl fmt::Debug for BlockLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockLayout")
            .field("block_dims", &self.inner.dims)
            .finish()
    }
}

/// Selector for the ℓ₂,q family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockNorm {
    /// Count of blocks whose ℓ₂ norm exceeds the zero tolerance.
    Zero,
    /// `(Σ‖v[i]‖₂^q)^(1/q)` for `0 < q < ∞`.
    Q(f64),
    /// Largest block ℓ₂ norm.
    Inf,
}

impl BlockNorm {
    /// Maps a raw exponent onto the selector: `0`, positive finite, or `+∞`.
    pub fn from_exponent(q: f64) -> Result<Self> {
        if q.is_nan() || q < 0.0 {
            return Err(Error::invalid("q", format!("norm exponent must be >= 0, got {q}")));
        }
        Ok(if q == 0.0 {
            BlockNorm::Zero
        } else if q.is_infinite() {
            BlockNorm::Inf
        } else {
            BlockNorm::Q(q)
        })
    }
}

#[derive(Clone, PartialEq)]
pub struct BlockVec {
    layout: BlockLayout,
    data: Vec<f64>,
}

impl BlockVec {
    pub fn zeros(layout: BlockLayout) -> Self {
        let data = vec![0.0; layout.total_dim()];
        Self { layout, data }
    }

    pub fn from_flat(layout: BlockLayout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total_dim() {
            return Err(Error::Shape(format!(
                "flat data has length {}, layout expects {}",
                data.len(),
                layout.total_dim()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("data", format!("entry {pos} is not finite")));
        }
        Ok(Self { layout, data })
    }

    /// Builds a vector from explicit blocks; the layout follows the block lengths.
    pub fn from_blocks<B: AsRef<[f64]>>(blocks: &[B]) -> Result<Self> {
        let dims = blocks.iter().map(|b| b.as_ref().len()).collect();
        let layout = BlockLayout::new(dims)?;
        let data = blocks
            .iter()
            .flat_map(|b| b.as_ref().iter().copied())
            .collect();
        Self::from_flat(layout, data)
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn num_blocks(&self) -> usize {
        self.layout.num_blocks()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[self.layout.range(i)]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.layout.range(i);
        &mut self.data[r]
    }

    pub fn set_block(&mut self, i: usize, values: &[f64]) -> Result<()> {
        let dst = self.block_mut(i);
        if dst.len() != values.len() {
            return Err(Error::Shape(format!(
                "block {i} has dimension {}, got {} values",
                dst.len(),
                values.len()
            )));
        }
        dst.copy_from_slice(values);
        Ok(())
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.num_blocks()).map(move |i| self.block(i))
    }

    pub fn block_norm(&self, i: usize) -> f64 {
        l2(self.block(i))
    }

    /// ℓ₂ norm of every block, in block order.
    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks().map(l2).collect()
    }

    /// ℓ₂ norm of the whole stacked vector.
    pub fn norm2(&self) -> f64 {
        l2(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// ℓ₂,q norm with the default zero tolerance for `q = 0`.
    pub fn norm_2q(&self, q: f64) -> Result<f64> {
        Ok(self.norm(BlockNorm::from_exponent(q)?, DEFAULT_ZERO_TOL))
    }

    pub fn norm(&self, which: BlockNorm, zero_tol: f64) -> f64 {
        let norms = self.blocks().map(l2);
        match which {
            BlockNorm::Zero => norms.filter(|&n| n > zero_tol).count() as f64,
            BlockNorm::Inf => norms.fold(0.0, f64::max),
            BlockNorm::Q(q) if q == 1.0 => norms.sum(),
            BlockNorm::Q(q) if q == 2.0 => self.norm2(),
            BlockNorm::Q(q) => {
                // Scale by the largest block to keep large q from overflowing.
                let norms: Vec<f64> = norms.collect();
                let max = norms.iter().copied().fold(0.0, f64::max);
                if max == 0.0 {
                    return 0.0;
                }
                let s: f64 = norms.iter().map(|n| (n / max).powf(q)).sum();
                max * s.powf(1.0 / q)
            }
        }
    }

    /// ℓ₂,₁ norm (sum of block norms).
    pub fn l21(&self) -> f64 {
        self.norm(BlockNorm::Q(1.0), DEFAULT_ZERO_TOL)
    }

    /// Number of blocks with ℓ₂ norm above `zero_tol`.
    pub fn block_support(&self, zero_tol: f64) -> Vec<usize> {
        self.blocks()
            .enumerate()
            .filter(|(_, b)| l2(b) > zero_tol)
            .map(|(i, _)| i)
            .collect()
    }

    fn check_layout(&self, other: &BlockVec) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Shape(format!(
                "layout mismatch: {:?} vs {:?}",
                self.layout.block_dims(),
                other.layout.block_dims()
            )));
        }
        Ok(())
    }

    /// `self += alpha * x`.
    pub fn axpy_in_place(&mut self, alpha: f64, x: &BlockVec) -> Result<()> {
        self.check_layout(x)?;
        for (y, x) in self.data.iter_mut().zip(&x.data) {
            *y += alpha * x;
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> BlockVec {
        BlockVec {
            layout: self.layout.clone(),
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn sub(&self, other: &BlockVec) -> Result<BlockVec> {
        block_axpy(-1.0, other, self)
    }

    pub fn add(&self, other: &BlockVec) -> Result<BlockVec> {
        block_axpy(1.0, other, self)
    }
}

/// Returns `alpha * x + y`.
pub fn block_axpy(alpha: f64, x: &BlockVec, y: &BlockVec) -> Result<BlockVec> {
    let mut out = y.clone();
    out.axpy_in_place(alpha, x)?;
    Ok(out)
}

impl fmt::Debug for BlockVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.blocks()).finish()
    }
}

/// Euclidean norm of a slice.
#[inline]
pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> BlockVec {
        BlockVec::from_blocks(&[vec![3.0, 4.0], vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn norm_examples() {
        let v = sample();
        assert_eq!(v.norm_2q(1.0).unwrap(), 6.0);
        assert_eq!(v.norm_2q(0.0).unwrap(), 2.0);
        assert_eq!(v.norm_2q(f64::INFINITY).unwrap(), 5.0);
        assert!((v.norm_2q(2.0).unwrap() - 26f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn negative_exponent_rejected() {
        assert!(matches!(
            sample().norm_2q(-1.0),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(sample().norm_2q(f64::NAN).is_err());
    }

    #[test]
    fn zero_count_uses_tolerance() {
        let v = BlockVec::from_blocks(&[vec![1e-14, 0.0], vec![1e-3, 0.0]]).unwrap();
        assert_eq!(v.norm_2q(0.0).unwrap(), 1.0);
        assert_eq!(v.norm(BlockNorm::Zero, 0.0), 2.0);
    }

    #[test]
    fn axpy_examples() {
        let x = BlockVec::from_blocks(&[vec![1.0], vec![2.0]]).unwrap();
        let y = BlockVec::from_blocks(&[vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(block_axpy(1.0, &x, &y).unwrap(), x);
        assert_eq!(block_axpy(0.0, &x, &y).unwrap(), y);
        let z = block_axpy(-1.0, &x, &x).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn axpy_layout_mismatch() {
        let x = BlockVec::from_blocks(&[vec![1.0, 2.0]]).unwrap();
        let y = BlockVec::from_blocks(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(block_axpy(1.0, &x, &y), Err(Error::Shape(_))));
    }

    #[test]
    fn layout_rejects_empty_block() {
        assert!(BlockLayout::new(vec![2, 0, 1]).is_err());
        let l = BlockLayout::new(vec![2, 3, 1]).unwrap();
        assert_eq!(l.total_dim(), 6);
        assert_eq!(l.range(1), 2..5);
    }

    #[test]
    fn non_finite_rejected() {
        let l = BlockLayout::uniform(1, 2).unwrap();
        assert!(BlockVec::from_flat(l, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn large_q_does_not_overflow() {
        let v = BlockVec::from_blocks(&[vec![100.0], vec![100.0]]).unwrap();
        let n = v.norm_2q(200.0).unwrap();
        assert!((n / 100.0 - 2f64.powf(1.0 / 200.0)).abs() < 1e-12);
    }

    fn arb_blocks() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..6).prop_flat_map(|dim| {
            prop::collection::vec(prop::collection::vec(-100.0f64..100.0, dim), 1..12)
        })
    }

    proptest! {
        #[test]
        fn ordering_and_count(blocks in arb_blocks()) {
            let v = BlockVec::from_blocks(&blocks).unwrap();
            let inf = v.norm_2q(f64::INFINITY).unwrap();
            let two = v.norm_2q(2.0).unwrap();
            let one = v.norm_2q(1.0).unwrap();
            prop_assert!(inf <= two * (1.0 + 1e-12));
            prop_assert!(two <= one * (1.0 + 1e-12));
            prop_assert!(v.norm_2q(0.0).unwrap() <= v.num_blocks() as f64);
        }

        #[test]
        fn homogeneity(blocks in arb_blocks(), alpha in -10.0f64..10.0, q in 0.5f64..4.0) {
            let v = BlockVec::from_blocks(&blocks).unwrap();
            let s = v.scaled(alpha);
            let lhs = s.norm_2q(q).unwrap();
            let rhs = alpha.abs() * v.norm_2q(q).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs));
            if alpha.abs() > 1e-3 {
                prop_assert_eq!(s.norm_2q(0.0).unwrap(), v.norm_2q(0.0).unwrap());
            }
        }
    }
}
