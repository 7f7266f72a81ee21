"""HTTP service exposing runs, sweeps and policy export."""
