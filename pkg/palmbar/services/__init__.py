"""Simulation and estimation services."""
