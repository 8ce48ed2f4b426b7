pub struct Arc { ptr: *const u8 }

impl Arc {
    /// SAFETY: Align(ptr, T), Allocated(ptr, T, 1, Global), InBound(ptr, T, 1), Owning(ptr), Alias(ptr, 0), Allocator(ptr, Global), ValidNum(add(strong, 1), (0, isize::MAX]), Typed(ptr, T)
    pub unsafe fn from_raw(ptr: *const T) -> Arc {
        Arc { ptr: ptr }
    }

    /// SAFETY: Typed(ptr, T), Alive(ptr, l), Allocated(ptr, T, 1, Global), InBound(ptr, T, 1), Owning(ptr), Alias(ptr, 0)
    pub unsafe fn increment_strong_count(ptr: *const T) {
        unsafe { Arc::from_raw(ptr) };
    }
}
