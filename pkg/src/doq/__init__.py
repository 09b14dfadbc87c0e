"""Decision-oriented quantization."""
