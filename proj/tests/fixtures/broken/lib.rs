fn ok() {}
mystery item here
