pub struct CString { ptr: *mut u8 }

impl CString {
    /// SAFETY: ValidCStr(ptr, any), Align(ptr, u8), InBound(ptr, u8, any)
    pub unsafe fn from_raw(ptr: *mut c_char) -> CString {
        CString { ptr: ptr }
    }
}
