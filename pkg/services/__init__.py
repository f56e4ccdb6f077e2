"""Services: profiling, planning, simulation and checks."""
