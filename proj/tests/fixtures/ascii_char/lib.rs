pub enum AsciiChar { Null, Digit0, Digit1, Digit2 }

impl AsciiChar {
    /// SAFETY: ValidNum(d, [0, 127])
    pub unsafe fn digit_unchecked(d: u8) -> AsciiChar {
        AsciiChar::Digit0
    }
}
