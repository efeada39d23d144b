"""Low-bandwidth clinical session backend: the EFS/1 wire format, a durable
append-only store, token auth, and the HTTP service tying them together."""
