"""Loosely coupled Robin-Robin solver for fluid/poroelastic-structure
interaction: Stokes-Biot on fixed domains and Navier-Stokes-Biot on
moving ALE domains, with a manufactured-solution verification harness."""

__version__ = "0.1.0"
