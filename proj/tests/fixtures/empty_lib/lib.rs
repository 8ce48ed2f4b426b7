// Intentionally safe: nothing to audit.
pub fn noop() {}
