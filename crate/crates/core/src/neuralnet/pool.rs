//! Per-thread recycling of large f64 buffers.
//!
//! Training reallocates megabyte-scale activation caches, gradient
//! workspaces, and dropout masks every batch; allocations that size bypass
//! the malloc fast path and cost mmap plus page faults on first touch.
//! Buffers taken here come back zeroed, so callers never see stale data.

use std::cell::RefCell;

thread_local! {
    static BUF_POOL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

const POOL_LIMIT: usize = 32;

pub(crate) fn take_buf(len: usize) -> Vec<f64> {
    let mut buf = take_buf_raw(len);
    buf.fill(0.0);
    buf
}

/// Pooled buffer with arbitrary contents. Only for callers that overwrite
/// every element before reading any.
pub(crate) fn take_buf_raw(len: usize) -> Vec<f64> {
    let mut buf = BUF_POOL
        .with(|p| {
            let mut pool = p.borrow_mut();
            let mut best: Option<usize> = None;
            for (i, v) in pool.iter().enumerate() {
                if v.capacity() >= len
                    && best.map_or(true, |b| v.capacity() < pool[b].capacity())
                {
                    best = Some(i);
                }
            }
            best.map(|i| pool.swap_remove(i))
        })
        .unwrap_or_default();
    // fresh capacity is zero pages from the OS; recycled capacity carries
    // stale values, which is the contract here
    buf.resize(len.max(buf.len()), 0.0);
    buf.truncate(len);
    buf
}

pub(crate) fn give_buf(buf: Vec<f64>) {
    if buf.capacity() == 0 {
        return;
    }
    BUF_POOL.with(|p| {
        let mut pool = p.borrow_mut();
        if pool.len() < POOL_LIMIT {
            pool.push(buf);
        }
    });
}
