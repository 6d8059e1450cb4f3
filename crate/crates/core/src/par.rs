//! Order-preserving data-parallel helpers. With the `parallel` feature the work
//! runs on the rayon pool; without it everything is sequential. Results are
//! identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

macro_rules! if_parallel {
    ($par:expr, $seq:expr) => {{
        #[cfg(feature = "parallel")]
        {
            $par
        }
        #[cfg(not(feature = "parallel"))]
        {
            $seq
        }
    }};
}

/// Maps `f` over `items`, keeping input order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if_parallel!(
        items.par_iter().map(f).collect(),
        items.iter().map(f).collect()
    )
}

/// Maps `f` over `0..n`, keeping index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if_parallel!(
        (0..n).into_par_iter().map(f).collect(),
        (0..n).map(f).collect()
    )
}

/// Execution strategy chosen at run time, used by the benches to compare both paths
/// inside one binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Seq,
    Par,
}

impl Exec {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Exec::Seq => items.iter().map(f).collect(),
            Exec::Par => map(items, f),
        }
    }

    /// Sums per-chunk partial vectors in chunk order, so the floating-point result
    /// does not depend on scheduling.
    pub fn chunked_sum<T, F>(self, items: &[T], chunk: usize, len: usize, f: F) -> Vec<f64>
    where
        T: Sync,
        F: Fn(&[T], &mut [f64]) + Sync + Send,
    {
        let chunks: Vec<&[T]> = items.chunks(chunk.max(1)).collect();
        let partials = self.map(&chunks, |c| {
            let mut acc = vec![0.0; len];
            f(c, &mut acc);
            acc
        });
        partials
            .into_iter()
            .fold(vec![0.0; len], |mut total, part| {
                total.iter_mut().zip(part).for_each(|(t, p)| *t += p);
                total
            })
    }
}

#[allow(clippy::derivable_impls)]
impl Default for Exec {
    fn default() -> Self {
        if_parallel!(Exec::Par, Exec::Seq)
    }
}
