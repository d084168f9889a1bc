//! Execution policy for the data-parallel inner loops.
//!
//! Every hot loop in the crate is an indexed map over independent items, such
//! as antenna rows of the switch update or sweep points of an experiment.
//! [`Execution`] picks how such a map is driven.
//! Results are always returned in index order, so both policies produce
//! bit-identical output.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Runs on the current rayon pool. Without the `parallel` feature this is
    /// the same as [`Execution::Sequential`].
    #[default]
    Parallel,
}

impl Execution {
    /// True when maps actually fan out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Fallible indexed map; the first error in index order is returned.
    pub fn try_map<T, E, F>(self, len: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(len, f).into_iter().collect()
    }
}
