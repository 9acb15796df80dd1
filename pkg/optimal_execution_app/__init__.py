"""Optimal execution under stochastic price impact and resilience: simulation, LQ solver and experiment harness."""
