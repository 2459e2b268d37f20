//! Scalar-multiply instrumentation.
//!
//! Every primitive in [`crate::tensor`] reports the number of scalar
//! multiplications it performs to a thread-local counter. The counter is
//! exact (no sampling) so complexity claims can be checked with integer
//! arithmetic.

use std::cell::Cell;

thread_local! {
    static MULTIPLIES: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub(crate) fn add(n: usize) {
    MULTIPLIES.with(|c| c.set(c.get() + n as u64));
}

/// Reset this thread's counter to zero.
pub fn reset() {
    MULTIPLIES.with(|c| c.set(0));
}

/// Multiplies recorded on this thread since the last [`reset`].
pub fn get() -> u64 {
    MULTIPLIES.with(|c| c.get())
}

/// Run `f` and return its result with the number of multiplies it performed.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = get();
    let out = f();
    (out, get() - before)
}
