"""Data pipeline: raw fixes to samples, social tensors, synthetic traffic, datasets."""
