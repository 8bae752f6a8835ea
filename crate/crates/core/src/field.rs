use serde::Serialize;

use crate::scalar::Scalar;

/// A scalar field on the time × state grid, indexed `(k, i)` with
/// `k ∈ 0..=N` and `i ∈ 0..M`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct ValueField<T> {
    n_times: usize,
    n_states: usize,
    data: Vec<T>,
}

impl<T: Scalar> ValueField<T> {
    pub fn filled(n_times: usize, n_states: usize, value: T) -> Self {
        Self { n_times, n_states, data: vec![value; n_times * n_states] }
    }

    pub fn zeros(n_times: usize, n_states: usize) -> Self {
        Self::filled(n_times, n_states, T::zero())
    }

    pub fn from_fn(n_times: usize, n_states: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n_times * n_states);
        for k in 0..n_times {
            for i in 0..n_states {
                data.push(f(k, i));
            }
        }
        Self { n_times, n_states, data }
    }

    /// Number of time rows (`N + 1`).
    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize) -> T {
        self.data[k * self.n_states + i]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, v: T) {
        self.data[k * self.n_states + i] = v;
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.data[k * self.n_states..(k + 1) * self.n_states]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.data[k * self.n_states..(k + 1) * self.n_states]
    }

    pub fn set_row(&mut self, k: usize, values: &[T]) {
        self.row_mut(k).copy_from_slice(values);
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_times == other.n_times && self.n_states == other.n_states
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { n_times: self.n_times, n_states: self.n_states, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Largest entrywise `|a − b|`, optionally restricted to rows `..rows`
    /// and states in `states`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn max_abs_diff_window(&self, other: &Self, rows: std::ops::Range<usize>, states: std::ops::Range<usize>) -> T {
        let mut worst = T::zero();
        for k in rows {
            for i in states.clone() {
                worst = worst.max((self.get(k, i) - other.get(k, i)).abs());
            }
        }
        worst
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
