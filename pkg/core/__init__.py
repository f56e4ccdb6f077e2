"""Core: configuration, domain models, interfaces and errors."""
