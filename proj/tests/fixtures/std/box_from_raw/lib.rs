pub struct Box { ptr: *mut u8 }

impl Box {
    /// SAFETY: Align(raw, T), Allocated(raw, T, 1, Global), InBound(raw, T, 1), Owning(raw)
    pub unsafe fn from_raw(raw: *mut T) -> Box {
        unsafe { Box::from_raw_in(raw, Global) }
    }

    /// SAFETY: Align(raw, T), Allocated(raw, T, 1, alloc), InBound(raw, T, 1), Owning(raw), Alias(raw, 0), Allocator(raw, alloc)
    pub unsafe fn from_raw_in<A: Allocator>(raw: *mut T, alloc: A) -> Box {
        Box { ptr: raw }
    }
}
