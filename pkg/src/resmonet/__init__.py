"""Compact facial-emotion-recognition engine and its companion tooling.

Subpackages/modules:
  tensor    -- dense float32 arrays and per-layer forward/backward math
  graph     -- declarative layer graphs, the ResMoNet builder, weight files
  analyzer  -- static parameter / multiply-add accounting and reports
  vision    -- PPM codec, face crop, bilinear resize, 12-way augmentation
  trainer   -- SGD training loop, evaluation, history export
  synthetic -- procedural 7-class stand-in dataset
  profiler  -- latency (RTE) and peak-memory (MMU) measurement
  session   -- compact UTF-8 wire format, durable store, HTTP service
  experts   -- SUS scoring and experience-weighted aggregation
  cli       -- command-line entry point
"""

__version__ = "0.1.0"
