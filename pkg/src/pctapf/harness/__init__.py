"""Instance generation, serialization, validation, brute-force checking and benchmarking."""
