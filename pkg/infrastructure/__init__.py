"""Infrastructure: simulated hardware and profile caches."""
