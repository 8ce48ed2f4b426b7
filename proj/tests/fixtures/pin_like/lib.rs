pub struct PinLike { pub pointer: Ptr }

impl PinLike {
    /// SAFETY: Pinned(pointer), Trait(Ptr, Unpin)@option
    pub unsafe fn new_unchecked(pointer: Ptr) -> PinLike {
        PinLike { pointer: pointer }
    }
}
