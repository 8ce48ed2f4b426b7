pub struct Box { ptr: *mut u8 }

impl Box {
    /// SAFETY: Align(raw, T), Allocated(raw, T, 1, alloc), InBound(raw, T, 1), Owning(raw)
    pub unsafe fn from_raw_in<A: Allocator>(raw: *mut T, alloc: A) -> Box {
        Box { ptr: raw }
    }
}
