use std::collections::VecDeque;

/// Bank of shift registers with per-lane depth. An element entering lane `k`
/// at cycle `t` leaves at cycle `t + depth(k)`; depth 0 is a wire.
#[derive(Debug, Clone)]
pub struct SkewBuffer<T> {
    lanes: Vec<VecDeque<Option<T>>>,
}

impl<T: Copy> SkewBuffer<T> {
    pub fn new(depths: impl IntoIterator<Item = usize>) -> Self {
        let lanes = depths
            .into_iter()
            .map(|d| {
                let mut q = VecDeque::with_capacity(d + 1);
                q.extend(std::iter::repeat_n(None, d));
                q
            })
            .collect();
        Self { lanes }
    }

    /// Triangular bank of `lanes` shift registers where register `k` has depth `k`.
    pub fn triangular(lanes: usize) -> Self {
        Self::new(0..lanes)
    }

    pub fn width(&self) -> usize {
        self.lanes.len()
    }

    pub fn depth(&self, lane: usize) -> usize {
        self.lanes[lane].len()
    }

    /// Clock once: push `input[k]` into lane `k` and write what falls out to `out[k]`.
    pub fn shift(&mut self, input: &[Option<T>], out: &mut [Option<T>]) {
        debug_assert_eq!(input.len(), self.lanes.len());
        for ((lane, &x), o) in self.lanes.iter_mut().zip(input).zip(out.iter_mut()) {
            lane.push_back(x);
            *o = lane.pop_front().flatten();
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.iter().all(|l| l.iter().all(Option::is_none))
    }
}
