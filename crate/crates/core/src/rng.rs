//! Per-path random streams.
//!
//! Every path draws from its own ChaCha12 keystream. The key is built from
//! `(master_seed, substream)` and the ChaCha stream id is the path index, so
//! a path's numbers depend only on those three values and never on the
//! order or thread in which paths run.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::quat::Quaternion;

/// Name recorded in reports so runs are self-describing.
pub const GENERATOR_NAME: &str = "chacha12";

pub type PathRng = ChaCha12Rng;

/// A family of independent per-path streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    master_seed: u64,
    substream: u64,
}

/// Fixed substream labels used by the simulators.
pub mod substreams {
    pub const TIMECHANGE: u64 = 1;
    pub const DIRECT: u64 = 2;
    pub const GIRSANOV: u64 = 3;
    pub const RADIAL: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey {
            master_seed,
            substream: 0,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Derived family; distinct labels give unrelated keys.
    pub fn substream(self, label: u64) -> Self {
        StreamKey {
            master_seed: self.master_seed,
            substream: splitmix64(self.substream ^ splitmix64(label.wrapping_add(1))),
        }
    }

    pub fn path_rng(&self, path_index: u64) -> PathRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.substream.to_le_bytes());
        key[16..24].copy_from_slice(b"quatwind");
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(path_index);
        rng
    }
}

/// Source of standard Gaussian draws for the simulators.
///
/// Abstracted so that tests can transform the driving noise (for example
/// rotate every 4-vector by a fixed unit quaternion).
pub trait GaussianSource {
    fn normal(&mut self) -> f64;

    /// Four independent standard normals packed as a quaternion.
    fn quaternion(&mut self) -> Quaternion {
        let t = self.normal();
        let x = self.normal();
        let y = self.normal();
        let z = self.normal();
        Quaternion::new(t, x, y, z)
    }
}

impl GaussianSource for PathRng {
    fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

/// Wraps a source and multiplies every quaternion draw on the left by `u`.
pub struct LeftRotated<S> {
    pub inner: S,
    pub u: Quaternion,
}

impl<S: GaussianSource> GaussianSource for LeftRotated<S> {
    fn normal(&mut self) -> f64 {
        self.inner.normal()
    }

    fn quaternion(&mut self) -> Quaternion {
        self.u * self.inner.quaternion()
    }
}

/// Runs `f` once per path, in parallel, and returns the results in path order.
///
/// Path `i` always receives `key.path_rng(i)`, so the output does not depend
/// on the size of the thread pool.
pub fn map_paths<T, F>(key: StreamKey, n_paths: usize, f: F) -> crate::Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut PathRng) -> crate::Result<T> + Sync,
{
    use rayon::prelude::*;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.path_rng(i);
            f(i, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let k = StreamKey::new(42);
        let a: Vec<u64> = (0..4).map(|_| k.path_rng(7).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(k.path_rng(7).next_u64(), k.path_rng(8).next_u64());
        assert_ne!(
            k.substream(1).path_rng(0).next_u64(),
            k.substream(2).path_rng(0).next_u64()
        );
        assert_ne!(
            StreamKey::new(1).path_rng(0).next_u64(),
            StreamKey::new(2).path_rng(0).next_u64()
        );
    }

    #[test]
    fn normals_have_unit_variance() {
        let mut rng = StreamKey::new(3).path_rng(0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
    }
}
