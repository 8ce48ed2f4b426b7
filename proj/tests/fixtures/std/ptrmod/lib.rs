mod ptr {
    /// SAFETY: !Null(src), Size(T, any), Allocated(src, T, 1, any), InBound(src, T, 1), Init(src, T, 1)
    pub unsafe fn read_unaligned<T>(src: *const T) -> T {
        unsafe { intrinsics::read_via_copy(src) }
    }

    /// SAFETY: !Null(dst), Size(T, any), Allocated(dst, T, 1, any), InBound(dst, T, 1)
    pub unsafe fn write_unaligned<T>(dst: *mut T, src: T) {
        unsafe { intrinsics::write_via_move(dst, src) };
    }
}
