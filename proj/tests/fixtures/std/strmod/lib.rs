mod str {
    /// SAFETY: Owning(v)
    pub unsafe fn from_boxed_utf8_unchecked(v: Box) -> Box {
        v
    }

    pub unsafe fn from_utf8_unchecked_mut(v: &mut [u8]) -> &mut str {
        v
    }
}
