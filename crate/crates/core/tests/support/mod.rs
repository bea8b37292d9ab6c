//! Shared helpers for the integration suites.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repgeo::stack::Representation;
use repgeo::{Result, Tensor};

/// Wraps a representation with a seeded signed permutation of its response —
/// an exactly orthogonal linear map. Geodesics and deviation profiles are
/// supposed to be invariant under such maps, which this wrapper lets tests
/// assert without trusting any matrix algebra: permuting and sign-flipping
/// are exact in floating point.
pub struct OrthoWrap<R: Representation> {
    base: R,
    perm: Vec<usize>,
    signs: Vec<f64>,
}

impl<R: Representation> OrthoWrap<R> {
    /// `response_len` must match the base representation's response length
    /// for the inputs the wrapper will see.
    pub fn seeded(base: R, response_len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..response_len).collect();
        perm.shuffle(&mut rng);
        let signs = (0..response_len)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        Self { base, perm, signs }
    }
}

impl<R: Representation> Representation for OrthoWrap<R> {
    type Eval = (R::Eval, Tensor);

    fn forward(&self, x: &Tensor) -> Result<Self::Eval> {
        let eval = self.base.forward(x)?;
        let r = self.base.response(&eval);
        assert_eq!(r.len(), self.perm.len(), "wrapper sized for this response");
        let data: Vec<f64> = (0..r.len())
            .map(|i| self.signs[i] * r.data()[self.perm[i]])
            .collect();
        let mapped = Tensor::new(r.shape().to_vec(), data)?;
        Ok((eval, mapped))
    }

    fn response<'a>(&self, eval: &'a Self::Eval) -> &'a Tensor {
        &eval.1
    }

    fn pullback(&self, eval: &Self::Eval, cot: &Tensor) -> Result<Tensor> {
        let mut back = vec![0.0; cot.len()];
        for i in 0..cot.len() {
            back[self.perm[i]] += self.signs[i] * cot.data()[i];
        }
        self.base
            .pullback(&eval.0, &Tensor::new(cot.shape().to_vec(), back)?)
    }
}
